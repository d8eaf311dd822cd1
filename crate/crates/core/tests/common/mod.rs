#![allow(dead_code)]

use liftsense::sensing::SensingOperator;
use liftsense::{DenseTensor, Problem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Operator with `m` symmetric Gaussian matrices and a Gaussian ground truth.
pub fn random_problem<R: Rng>(n: usize, m: usize, rng: &mut R) -> Problem {
    let matrices = (0..m)
        .map(|_| {
            let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
            (&a + a.transpose()) * 0.5
        })
        .collect();
    let op = SensingOperator::new(matrices, Vec::new()).unwrap();
    Problem::new(op, DVector::from_vec(gaussian_vec(n, rng))).unwrap()
}

pub fn random_tensor<R: Rng>(l: usize, n: usize, scale: f64, rng: &mut R) -> DenseTensor {
    DenseTensor::gaussian(l, n, scale, rng).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Central differences of `f` at `x`, step scaled to each coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * (1.0 + x[i].abs());
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
