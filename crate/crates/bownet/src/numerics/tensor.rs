//! Row-major f32 tensors of rank 1..=4.

use crate::error::{Error, Result};

use super::dot_f64;

/// Dense row-major array of up to four dimensions, innermost dimension last.
///
/// The data length always equals the product of the extents, and every public
/// operation keeps the values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f32) -> Tensor {
        assert!(
            !shape.is_empty() && shape.len() <= 4,
            "tensor rank must be 1..=4, got {}",
            shape.len()
        );
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::Shape(format!(
                "tensor rank must be 1..=4, got {}",
                shape.len()
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.check_finite("from_vec")?;
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{what}: element {pos} of shape {:?} is {}",
                self.shape, self.data[pos]
            )));
        }
        Ok(())
    }
}

/// `c[i][j] = sum_t a[i][t] * b[t][j]`, accumulated in f64.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Shape(format!(
            "matmul needs rank-2 operands, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner extents disagree: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Tensor::zeros(&[m, n]);
    // b is walked column-wise per output element; fine at the sizes this
    // public entry point sees (hot paths use the specialized kernels in
    // encoder::layers instead).
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let mut acc = 0.0f64;
            for (t, &av) in arow.iter().enumerate() {
                acc += f64::from(av) * f64::from(b.data[t * n + j]);
            }
            out.data[i * n + j] = acc as f32;
        }
    }
    Ok(out)
}

/// Numerically stable softmax of a logit vector.
///
/// Total on finite input: outputs are positive and sum to 1.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// In-place softmax with max subtraction, computed in f64.
pub fn softmax_in_place(row: &mut [f32]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0f64;
    let mut exps = vec![0.0f64; row.len()];
    for (e, &v) in exps.iter_mut().zip(row.iter()) {
        *e = f64::from(v - max).exp();
        sum += *e;
    }
    for (v, e) in row.iter_mut().zip(exps) {
        *v = (e / sum) as f32;
    }
}

#[allow(dead_code)]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    dot_f64(a, b) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn matmul_identity() {
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap(), b);
    }

    #[test]
    fn matmul_zero() {
        let z = Tensor::zeros(&[3, 2]);
        let b = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 0.5, 4.0]).unwrap();
        let c = matmul(&z, &b).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_forced_case() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![5.0, 6.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn matmul_identity_associativity() {
        let mut rng = Rng::new(7);
        let a = Tensor::from_vec(&[4, 4], (0..16).map(|_| rng.normal_f32()).collect()).unwrap();
        let b = Tensor::from_vec(&[4, 5], (0..20).map(|_| rng.normal_f32()).collect()).unwrap();
        let mut eye = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            eye.data_mut()[i * 4 + i] = 1.0;
        }
        let lhs = matmul(&matmul(&a, &eye).unwrap(), &b).unwrap();
        let rhs = matmul(&a, &b).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[0.3; 5]);
        for v in p {
            assert!((v - 0.2).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let v = [0.1f32, -2.0, 3.5, 0.0];
        let a = softmax(&v);
        let shifted: Vec<f32> = v.iter().map(|x| x + 12.5).collect();
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_known_values() {
        // softmax([0, ln 3]) = [1/4, 3/4]; oracle evaluated in f64.
        let p = softmax(&[0.0, (3.0f32).ln()]);
        assert!((p[0] - 0.25).abs() < 1e-6);
        assert!((p[1] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn softmax_is_probability_vector_on_random_input() {
        let mut rng = Rng::new(42);
        for _ in 0..10_000 {
            let k = 1 + rng.below(8);
            let v: Vec<f32> = (0..k).map(|_| rng.range_f32(-30.0, 30.0)).collect();
            let p = softmax(&v);
            let sum: f64 = p.iter().map(|&x| f64::from(x)).sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(Tensor::from_vec(&[2], vec![1.0, f32::NAN]).is_err());
    }

    #[test]
    fn from_vec_rejects_bad_shape() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0]).is_err());
    }
}
