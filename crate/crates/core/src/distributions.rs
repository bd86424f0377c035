//! Log-density kernels and analytic gradients.
//!
//! Parameters are standard deviations / scales, never variances.

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatrsNormal, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// log(2π) / 2
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams<T> {
    pub mean: T,
    pub sd: T,
}

/// Normal with centre `location` and scale `sd`, truncated to `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfNormalParams<T> {
    pub location: T,
    pub sd: T,
}

/// Two-piece skewed Student-t in Hansen's parameterisation.
///
/// `location` is the mode and the point splitting the two halves; the left
/// half has scale `scale·(1−λ)` and the right half `scale·(1+λ)`, so
/// `P(X > location) = (1+λ)/2`. The t kernel is scaled by `dof`, which keeps
/// every constant finite at `dof = 2` where the variance does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HansenSkewTParams<T> {
    pub location: T,
    pub scale: T,
    pub skewness: T,
    pub dof: T,
}

impl<T: Scalar> HansenSkewTParams<T> {
    pub fn new(location: T, scale: T, skewness: T, dof: T) -> Result<Self> {
        let p = HansenSkewTParams {
            location,
            scale,
            skewness,
            dof,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > T::zero()) {
            return Err(Error::domain(format!("scale must be positive, got {:?}", self.scale)));
        }
        if !(self.skewness.abs() < T::one()) {
            return Err(Error::domain(format!(
                "skewness must lie in (-1, 1), got {:?}",
                self.skewness
            )));
        }
        if !(self.dof > T::zero()) {
            return Err(Error::domain(format!("dof must be positive, got {:?}", self.dof)));
        }
        Ok(())
    }
}

fn check_sd<T: Scalar>(sd: T) -> Result<()> {
    if sd > T::zero() {
        Ok(())
    } else {
        Err(Error::domain(format!("standard deviation must be positive, got {sd:?}")))
    }
}

pub fn normal_logpdf<T: Scalar>(x: T, p: NormalParams<T>) -> Result<T> {
    check_sd(p.sd)?;
    let z = (x - p.mean) / p.sd;
    Ok(-T::lit(HALF_LN_2PI) - p.sd.ln() - T::lit(0.5) * z * z)
}

/// Value and gradient with respect to `(x, mean, sd)`.
pub fn normal_logpdf_grad<T: Scalar>(x: T, p: NormalParams<T>) -> Result<(T, [T; 3])> {
    check_sd(p.sd)?;
    let (v, dx, dm, ds) = normal_kernel(x, p.mean, p.sd);
    Ok((v, [dx, dm, ds]))
}

/// Unchecked normal log-density with its partials; `sd` must be positive.
#[inline]
pub(crate) fn normal_kernel<T: Scalar>(x: T, mean: T, sd: T) -> (T, T, T, T) {
    let z = (x - mean) / sd;
    let v = -T::lit(HALF_LN_2PI) - sd.ln() - T::lit(0.5) * z * z;
    let dx = -z / sd;
    (v, dx, -dx, (z * z - T::one()) / sd)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    StatrsNormal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(p)
}

/// Normal with centre/scale truncated to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lower: f64, upper: f64) -> Result<Self> {
        check_sd(sd)?;
        if !(lower < upper) {
            return Err(Error::domain(format!("empty truncation [{lower}, {upper}]")));
        }
        Ok(TruncatedNormal {
            mean,
            sd,
            lower,
            upper,
        })
    }

    /// log of the probability mass the untruncated normal puts on the support.
    pub fn log_mass(&self) -> f64 {
        let hi = std_normal_cdf((self.upper - self.mean) / self.sd);
        let lo = std_normal_cdf((self.lower - self.mean) / self.sd);
        if lo > 0.5 {
            // upper-tail form keeps precision when the support is far right
            let shi = std_normal_cdf(-(self.upper - self.mean) / self.sd);
            let slo = std_normal_cdf(-(self.lower - self.mean) / self.sd);
            (slo - shi).ln()
        } else {
            (hi - lo).ln()
        }
    }

    /// Value and derivative in `x`; `-∞` and zero outside the support.
    pub fn logpdf_grad<T: Scalar>(&self, x: T) -> (T, T) {
        let xf = x.to_f64_lossy();
        if !(xf >= self.lower && xf <= self.upper) {
            return (T::neg_infinity(), T::zero());
        }
        let (v, dx, _, _) = normal_kernel(x, T::lit(self.mean), T::lit(self.sd));
        (v - T::lit(self.log_mass()), dx)
    }
}

pub fn halfnormal_logpdf<T: Scalar>(x: T, p: HalfNormalParams<T>) -> Result<T> {
    Ok(halfnormal_logpdf_grad(x, p)?.0)
}

/// Value and derivative in `x`; `-∞` below zero.
pub fn halfnormal_logpdf_grad<T: Scalar>(x: T, p: HalfNormalParams<T>) -> Result<(T, T)> {
    check_sd(p.sd)?;
    let tn = TruncatedNormal::new(
        p.location.to_f64_lossy(),
        p.sd.to_f64_lossy(),
        0.0,
        f64::INFINITY,
    )?;
    Ok(tn.logpdf_grad(x))
}

/// log normaliser of the standard Student-t: lnΓ((ν+1)/2) − lnΓ(ν/2) − ½ln(νπ).
fn student_t_log_norm(dof: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * std::f64::consts::PI).ln()
}

/// Symmetric location–scale Student-t log-density.
pub fn student_t_logpdf<T: Scalar>(x: T, location: T, scale: T, dof: T) -> Result<T> {
    check_sd(scale)?;
    let z = (x - location) / scale;
    let c = T::lit(student_t_log_norm(dof.to_f64_lossy()));
    Ok(c - scale.ln() - T::lit(0.5) * (dof + T::one()) * (z * z / dof).ln_1p())
}

pub fn hansen_skewt_logpdf<T: Scalar>(x: T, p: HansenSkewTParams<T>) -> Result<T> {
    Ok(hansen_skewt_logpdf_grad(x, p)?.0)
}

/// Value and gradient with respect to `(x, location, scale, skewness)`.
pub fn hansen_skewt_logpdf_grad<T: Scalar>(
    x: T,
    p: HansenSkewTParams<T>,
) -> Result<(T, [T; 4])> {
    p.validate()?;
    let c = T::lit(student_t_log_norm(p.dof.to_f64_lossy()));
    Ok(skewt_kernel(x, p.location, p.scale, p.skewness, p.dof, c))
}

/// Unchecked skewed-t kernel; `log_norm` is the Student-t normaliser for `dof`.
#[inline]
pub(crate) fn skewt_kernel<T: Scalar>(
    x: T,
    location: T,
    scale: T,
    skew: T,
    dof: T,
    log_norm: T,
) -> (T, [T; 4]) {
    let z = (x - location) / scale;
    let (s, ds_dskew) = if z < T::zero() {
        (T::one() - skew, -T::one())
    } else {
        (T::one() + skew, T::one())
    };
    let u = z / s;
    let q = T::one() + u * u / dof;
    let half_dof1 = T::lit(0.5) * (dof + T::one());
    let v = log_norm - scale.ln() - half_dof1 * q.ln();
    // d v / d u
    let dv_du = -(dof + T::one()) * u / (dof * q);
    let dv_dz = dv_du / s;
    let dx = dv_dz / scale;
    let dloc = -dx;
    let dscale = -T::one() / scale - dv_dz * z / scale;
    let dskew = dv_du * (-u / s) * ds_dskew;
    (v, [dx, dloc, dscale, dskew])
}

/// Precomputed log normaliser for repeated skewed-t evaluation at one `dof`.
pub(crate) fn skewt_log_norm(dof: f64) -> f64 {
    student_t_log_norm(dof)
}

pub fn hansen_skewt_cdf(x: f64, p: HansenSkewTParams<f64>) -> Result<f64> {
    p.validate()?;
    let t = StudentsT::new(0.0, 1.0, p.dof).map_err(|e| Error::domain(e.to_string()))?;
    let z = (x - p.location) / p.scale;
    let l = p.skewness;
    Ok(if z < 0.0 {
        (1.0 - l) * t.cdf(z / (1.0 - l))
    } else {
        0.5 * (1.0 - l) + (1.0 + l) * (t.cdf(z / (1.0 + l)) - 0.5)
    })
}

pub fn hansen_skewt_sample<R: Rng + ?Sized>(p: HansenSkewTParams<f64>, rng: &mut R) -> Result<f64> {
    p.validate()?;
    let t = StudentT::new(p.dof).map_err(|e| Error::domain(e.to_string()))?;
    Ok(skewt_draw(p, &t, rng))
}

/// One draw, given a prebuilt Student-t sampler for `p.dof`.
pub(crate) fn skewt_draw<R: Rng + ?Sized>(
    p: HansenSkewTParams<f64>,
    t: &StudentT<f64>,
    rng: &mut R,
) -> f64 {
    let left = rng.random::<f64>() < 0.5 * (1.0 - p.skewness);
    let mag = t.sample(rng).abs();
    if left {
        p.location - p.scale * (1.0 - p.skewness) * mag
    } else {
        p.location + p.scale * (1.0 + p.skewness) * mag
    }
}

#[cfg(test)]
#[path = "../tests/common/quadrature.rs"]
mod quadrature;
