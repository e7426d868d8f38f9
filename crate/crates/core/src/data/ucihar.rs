use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

pub const UCIHAR_FEATURES: usize = 561;
const UCIHAR_CLASSES: usize = 6;

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::Path(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("{}:{}: `{tok}` is not a number", path.display(), line_no + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != UCIHAR_FEATURES {
            return Err(Error::Format(format!(
                "{}:{}: {} columns, expected {UCIHAR_FEATURES}",
                path.display(),
                line_no + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(line_no, l)| {
            let tok = l.trim();
            let v: usize = tok
                .parse()
                .map_err(|_| Error::Parse(format!("{}:{}: `{tok}` is not an integer", path.display(), line_no + 1)))?;
            if !(1..=UCIHAR_CLASSES).contains(&v) {
                return Err(Error::Format(format!(
                    "{}:{}: label {v} outside 1-{UCIHAR_CLASSES}",
                    path.display(),
                    line_no + 1
                )));
            }
            Ok(v - 1)
        })
        .collect()
}

fn split(features: &Path, labels: &Path) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let x = parse_features(features)?;
    let y = parse_labels(labels)?;
    if x.len() != y.len() {
        return Err(Error::Consistency(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset(features.display().to_string()));
    }
    Ok((x, y))
}

/// Loads the published train/test split and standardizes every feature with
/// training-set mean and (population) standard deviation. Constant features are
/// only centred.
pub fn load_ucihar(root: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let (xtr, ytr) = split(&root.join("train/X_train.txt"), &root.join("train/y_train.txt"))?;
    let (xte, yte) = split(&root.join("test/X_test.txt"), &root.join("test/y_test.txt"))?;

    let n = xtr.len() as f64;
    let mut mean = vec![0.0; UCIHAR_FEATURES];
    for row in &xtr {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; UCIHAR_FEATURES];
    for row in &xtr {
        for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    let standardize = |rows: Vec<Vec<f64>>| -> Vec<f64> {
        rows.into_iter()
            .flat_map(|row| {
                row.into_iter()
                    .zip(&mean)
                    .zip(&std)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let train = LabeledDataset::new(standardize(xtr), ytr, UCIHAR_CLASSES, vec![UCIHAR_FEATURES])?;
    let test = LabeledDataset::new(standardize(xte), yte, UCIHAR_CLASSES, vec![UCIHAR_FEATURES])?;
    Ok((train, test))
}
