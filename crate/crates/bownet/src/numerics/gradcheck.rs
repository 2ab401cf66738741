//! Finite-difference validation of hand-derived gradients.

use crate::error::{Error, Result};

use super::Tensor;

/// Compare an analytic gradient against central differences of `f` and
/// return the worst relative error over all coordinates.
///
/// For each coordinate the numeric gradient is
/// `(f(p + eps*e_i) - f(p - eps*e_i)) / (p_plus - p_minus)` where the
/// denominator uses the *realized* f32 step, and the error is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(params: &Tensor, analytic: &Tensor, eps: f32, mut f: F) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if params.shape() != analytic.shape() {
        return Err(Error::Shape(format!(
            "grad_check: params {:?} vs analytic {:?}",
            params.shape(),
            analytic.shape()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("grad_check: eps must be > 0, got {eps}")));
    }

    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for i in 0..params.len() {
        let p0 = params.data()[i];
        let p_plus = p0 + eps;
        let p_minus = p0 - eps;

        probe.data_mut()[i] = p_plus;
        let f_plus = checked(&mut f, &probe)?;
        probe.data_mut()[i] = p_minus;
        let f_minus = checked(&mut f, &probe)?;
        probe.data_mut()[i] = p0;

        let step = f64::from(p_plus) - f64::from(p_minus);
        let numeric = (f_plus - f_minus) / step;
        let a = f64::from(analytic.data()[i]);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

fn checked<F>(f: &mut F, p: &Tensor) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let v = f(p)?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("grad_check: f evaluated to {v}")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn sum_of_squares() {
        let mut rng = Rng::new(1);
        let p = Tensor::from_vec(&[6], (0..6).map(|_| rng.normal_f32()).collect()).unwrap();
        let analytic =
            Tensor::from_vec(&[6], p.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let err = grad_check(&p, &analytic, 1e-3, |t| {
            Ok(t.data().iter().map(|&v| f64::from(v) * f64::from(v)).sum())
        })
        .unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn constant_function_zero_gradient() {
        let p = Tensor::zeros(&[4]);
        let analytic = Tensor::zeros(&[4]);
        let err = grad_check(&p, &analytic, 1e-3, |_| Ok(3.5)).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let p = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let wrong = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap();
        let err = grad_check(&p, &wrong, 1e-3, |t| {
            Ok(t.data().iter().map(|&v| f64::from(v) * f64::from(v)).sum())
        })
        .unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let p = Tensor::zeros(&[1]);
        let a = Tensor::zeros(&[1]);
        let res = grad_check(&p, &a, 1e-3, |_| Ok(f64::NAN));
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }
}
