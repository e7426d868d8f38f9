mod common;

use common::{conv_net, dense_net, gradient_error, pool_net};
use fedskip::nn::{build_model, loss_and_grad, Arch, Batch};

const TOL: f64 = 1e-4;

#[test]
fn dense_matches_finite_differences() {
    let (layers, shape) = dense_net();
    for seed in 0..5 {
        let (n, err) = gradient_error(&layers, &shape, 4, seed);
        assert!(n <= 1000);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn conv_matches_finite_differences() {
    let (layers, shape) = conv_net();
    for seed in 0..5 {
        let (n, err) = gradient_error(&layers, &shape, 3, seed);
        assert!(n <= 1000);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn maxpool_composition_matches_finite_differences() {
    let (layers, shape) = pool_net();
    for seed in 0..5 {
        let (n, err) = gradient_error(&layers, &shape, 3, seed);
        assert!(n <= 1000);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn gradient_layout_matches_params() {
    let params = build_model(Arch::MnistCnn, 3);
    let inputs = vec![0.5; 2 * 28 * 28];
    let labels = [3, 7];
    let batch = Batch::new(&inputs, &labels, &[1, 28, 28]).unwrap();
    let (l, grad) = loss_and_grad(&params, &batch).unwrap();
    assert!(l >= 0.0);
    assert_eq!(grad.layout(), params.layout());
}
