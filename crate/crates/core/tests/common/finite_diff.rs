//! Central finite differences of the log posterior at random points.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stintlab::hmc::LogDensity;
use stintlab::model::{log_posterior_grad, Params, Path, PosteriorTarget};
use stintlab::{ModelKind, PriorSpec, RaceSeries};

use super::races::{race, COMPOUNDS};

pub const H: f64 = 1e-5;
pub const KINDS: [ModelKind; 4] = [ModelKind::Base, ModelKind::Compound, ModelKind::TimeVarying, ModelKind::SkewT];

pub fn random_series(rng: &mut ChaCha8Rng) -> RaceSeries {
    let n_stints = rng.random_range(1..=3);
    let stints: Vec<_> = (0..n_stints)
        .map(|_| (rng.random_range(2..=8), COMPOUNDS[rng.random_range(0..3)]))
        .collect();
    let n: usize = stints.iter().map(|s| s.0).sum();
    let times: Vec<f64> = (0..n).map(|t| 70.0 + 0.05 * t as f64 + rng.random_range(-0.5..0.5)).collect();
    race(&stints, &times, (n + 2 * n_stints + 3) as u32)
}

/// max_i |g_i − fd_i| / max_i |fd_i|
pub fn relative_error(g: &[f64], fd: &[f64]) -> f64 {
    let num = g.iter().zip(fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let den = fd.iter().map(|b| b.abs()).fold(0.0, f64::max);
    num / den
}

pub fn central_differences(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + H;
            let up = f(&y);
            y[i] = x[i] - H;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Richardson extrapolation of central differences at `H` and `H/2`, for
/// coordinates with a large lever on the likelihood (γ multiplies ~100 kg
/// of fuel), where plain differences carry O(H²) truncation error.
pub fn richardson_differences(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut diff = |i: usize, h: f64| {
        y[i] = x[i] + h;
        let up = f(&y);
        y[i] = x[i] - h;
        let down = f(&y);
        y[i] = x[i];
        (up - down) / (2.0 * h)
    };
    (0..x.len())
        .map(|i| {
            let coarse = diff(i, H);
            let fine = diff(i, H / 2.0);
            (4.0 * fine - coarse) / 3.0
        })
        .collect()
}

pub fn random_params(kind: ModelKind, rng: &mut ChaCha8Rng) -> Params<f64> {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let (g, se, sh) = (u(0.005, 0.06), u(0.1, 0.8), u(0.05, 0.4));
    match kind {
        ModelKind::Base => Params::base(g, se, sh, u(0.01, 0.15), u(68.0, 71.0)),
        ModelKind::SkewT => Params::skewt(g, se, sh, u(0.01, 0.15), u(68.0, 71.0), u(-0.9, 0.9)),
        ModelKind::Compound => Params::compound(
            g,
            se,
            sh,
            [u(0.01, 0.15), u(0.01, 0.15), u(0.01, 0.15)],
            [u(68.0, 71.0), u(68.0, 71.0), u(68.0, 71.0)],
        ),
        ModelKind::TimeVarying => Params::time_varying(
            g,
            se,
            sh,
            [u(0.001, 0.03), u(0.001, 0.03), u(0.001, 0.03)],
            [u(68.0, 71.0), u(68.0, 71.0), u(68.0, 71.0)],
            u(-0.1, 0.1),
        ),
    }
}

/// Worst relative error of the sampler's unconstrained gradient over
/// `points` jittered initial points.
pub fn unconstrained_worst(kind: ModelKind, points: usize, rng: &mut ChaCha8Rng) -> f64 {
    let jitter = Normal::new(0.0, 0.3).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let series = random_series(rng);
        let target = PosteriorTarget::new(kind, &series, &PriorSpec::default()).unwrap();
        let mut x = target.initial_point(rng);
        x.iter_mut().for_each(|v| *v += jitter.sample(rng));
        let mut g = vec![0.0; target.dim()];
        let lp = target.logp_grad(&x, &mut g);
        assert!(lp.is_finite());
        let mut scratch = vec![0.0; target.dim()];
        let fd = central_differences(|y| target.logp_grad(y, &mut scratch), &x);
        worst = worst.max(relative_error(&g, &fd));
    }
    worst
}

/// Worst relative error of the gradient in (statics, α) coordinates,
/// against Richardson-extrapolated differences.
pub fn constrained_worst(kind: ModelKind, points: usize, rng: &mut ChaCha8Rng) -> f64 {
    let priors = PriorSpec::default();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let series = random_series(rng);
        let params = random_params(kind, rng);
        let alpha: Vec<f64> = series.times().iter().map(|y| y - 2.0 + rng.random_range(-0.3..0.3)).collect();
        let k = params.to_flat().len();
        let mut x = params.to_flat();
        x.extend(&alpha);
        let eval = |x: &[f64]| {
            let p = Params::from_flat(kind, &x[..k]).unwrap();
            let path = Path { alpha: x[k..].to_vec(), nu: None };
            log_posterior_grad(&p, &path, &series, &priors).unwrap()
        };
        let (lp, gp, ga) = eval(&x);
        assert!(lp.is_finite());
        let mut g = gp.to_flat();
        g.extend(ga);
        let fd = richardson_differences(|y| eval(y).0, &x);
        worst = worst.max(relative_error(&g, &fd));
    }
    worst
}
