//! Scalar activations and the plain (non-differentiated) penalties used by
//! the objectives and the stopping criterion.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::COSINE_EPS;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Negative ReLU: passes negative values, clamps the rest to zero.
pub fn nrelu(x: f64) -> f64 {
    if x < 0.0 {
        x
    } else {
        0.0
    }
}

/// `Σ_n v_n · Z[n, :, :]` for `v: [N]` and `Z: [N, P, Q]`.
pub fn broadcast_mul(v: &[f64], z: &Tensor) -> Result<Tensor> {
    let shape = z.shape();
    if shape.len() != 3 || shape[0] != v.len() {
        return Err(Error::shape("broadcast_mul", &[v.len(), 0, 0], shape));
    }
    let slice = shape[1] * shape[2];
    let mut out = vec![0.0; slice];
    for (n, coeff) in v.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(&z.data()[n * slice..(n + 1) * slice]) {
            *o += coeff * x;
        }
    }
    Tensor::new([shape[1], shape[2]], out)
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("mse", &[a.len()], &[b.len()]));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(ss / a.len() as f64)
}

pub fn l2_norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|x| x * x).sum())
}

pub fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| libm::fabs(*x)).sum()
}

/// Cosine similarity of two flattened tensors. Returns 0 if either norm is
/// below `1e-12`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine_sim", &[a.len()], &[b.len()]));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na < COSINE_EPS || nb < COSINE_EPS {
        return Ok(0.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Sum of all pairwise (p < q) cosine similarities in a list of matrices.
pub fn pairwise_cosine_sum(mats: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for p in 0..mats.len() {
        for q in p + 1..mats.len() {
            total += cosine_sim(&mats[p], &mats[q])?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn relu_examples() {
        assert_eq!(relu(2.5), 2.5);
        assert_eq!(relu(-3.0), 0.0);
        assert_eq!(relu(0.0), 0.0);
    }

    #[test]
    fn nrelu_examples() {
        assert_eq!(nrelu(-3.0), -3.0);
        assert_eq!(nrelu(2.5), 0.0);
        // The two activations mirror each other under input and output negation.
        let (a, b) = (1.7, 0.3);
        assert_eq!(relu(a) + b, 2.0);
        assert_eq!(-nrelu(-a) + b, 2.0);
    }

    #[test]
    fn broadcast_mul_selector_and_identity_sum() {
        let z = Tensor::new([2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(broadcast_mul(&[1.0, 0.0], &z).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        let eye = Tensor::new([2, 2, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(broadcast_mul(&[1.0, 1.0], &eye).unwrap().data(), &[2.0, 0.0, 0.0, 2.0]);
        assert!(broadcast_mul(&[1.0], &z).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[2.0, 0.0]).unwrap(), 2.0);
        assert!(mse(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mse_matches_two_pass_oracle() {
        let mut rng = Rng::new(11);
        let a: Vec<f64> = (0..37).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let b: Vec<f64> = (0..37).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let mut diffs = Vec::new();
        for i in 0..a.len() {
            diffs.push(a[i] - b[i]);
        }
        let mut acc = 0.0;
        for d in &diffs {
            acc += d * d;
        }
        let oracle = acc / diffs.len() as f64;
        assert!((mse(&a, &b).unwrap() - oracle).abs() <= 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let a = [1.0, 2.0, -1.0];
        assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((cosine_sim(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(l1_norm(&[1.0, -2.0, 3.0]), 6.0);
        let mut rng = Rng::new(3);
        let v: Vec<f64> = (0..20).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let mut oracle = 0.0;
        for x in &v {
            oracle += if *x < 0.0 { -*x } else { *x };
        }
        assert_eq!(l1_norm(&v), oracle);
    }

    proptest! {
        #[test]
        fn relu_nrelu_mirror(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            prop_assert_eq!(relu(a) + b, -nrelu(-a) + b);
        }

        #[test]
        fn broadcast_mul_matches_loop(n in 1usize..=5, p in 1usize..=5, q in 1usize..=5, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let v: Vec<f64> = (0..n).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let z = Tensor::from_fn([n, p, q], |_| rng.uniform_range(-2.0, 2.0));
            let got = broadcast_mul(&v, &z).unwrap();
            for i in 0..p {
                for j in 0..q {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += v[k] * z.at3(k, i, j);
                    }
                    prop_assert!((got.at2(i, j) - s).abs() <= 1e-12);
                }
            }
        }
    }
}
