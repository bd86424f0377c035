//! Rank-normalised split R-hat and bulk/tail effective sample size.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::draws::{quantile_sorted, PosteriorDraws};
use crate::distributions::std_normal_quantile;
use crate::error::{Error, Result};

pub const MIN_CHAINS: usize = 2;
pub const MIN_DRAWS: usize = 100;
/// Divergence share above which a fit is flagged.
pub const DIVERGENCE_FLAG: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q50: f64,
    pub q97_5: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub quantities: Vec<QuantityDiagnostics>,
    pub divergences: usize,
    pub total_draws: usize,
    /// Set when more than 10% of transitions diverged.
    pub divergence_flag: bool,
}

impl Diagnostics {
    /// Largest R-hat, ignoring constant quantities.
    pub fn max_rhat(&self) -> f64 {
        self.quantities
            .iter()
            .map(|q| q.rhat)
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::max)
    }

    pub fn min_ess_bulk(&self) -> f64 {
        self.quantities
            .iter()
            .map(|q| q.ess_bulk)
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::min)
    }

    pub fn divergence_rate(&self) -> f64 {
        self.divergences as f64 / self.total_draws.max(1) as f64
    }

    pub fn get(&self, name: &str) -> Option<&QuantityDiagnostics> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Fit(e.to_string());
        w.write_record(["name", "mean", "sd", "q2.5", "q50", "q97.5", "rhat", "ess_bulk", "ess_tail"])
            .map_err(err)?;
        for q in &self.quantities {
            w.write_record([
                q.name.clone(),
                format!("{:.6}", q.mean),
                format!("{:.6}", q.sd),
                format!("{:.6}", q.q2_5),
                format!("{:.6}", q.q50),
                format!("{:.6}", q.q97_5),
                format!("{:.4}", q.rhat),
                format!("{:.1}", q.ess_bulk),
                format!("{:.1}", q.ess_tail),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Fit(e.to_string()))
    }
}

fn check_shape(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < MIN_CHAINS {
        return Err(Error::domain(format!(
            "diagnostics need at least {MIN_CHAINS} chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::domain("chains have unequal lengths"));
    }
    if n < MIN_DRAWS {
        return Err(Error::domain(format!(
            "diagnostics need at least {MIN_DRAWS} draws per chain, got {n}"
        )));
    }
    Ok(n)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / chains.len() as f64;
    let b = n * var(&means);
    if w == 0.0 {
        return if b == 0.0 { f64::NAN } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Normal scores of pooled fractional ranks (ties averaged).
fn z_scale(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = all.len();
    let mut idx: Vec<usize> = (0..s).collect();
    idx.sort_by(|&a, &b| all[a].total_cmp(&all[b]));
    let mut rank = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && all[idx[j + 1]] == all[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            rank[idx[k]] = r;
        }
        i = j + 1;
    }
    let z: Vec<f64> = rank
        .iter()
        .map(|r| std_normal_quantile((r - 0.375) / (s as f64 + 0.25)))
        .collect();
    z.chunks(chains[0].len()).map(<[f64]>::to_vec).collect()
}

/// Classic split R-hat without rank normalisation.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    Ok(rhat_basic(&split(chains)))
}

/// Maximum of bulk and folded-tail rank-normalised split R-hat.
pub fn rank_normalized_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let sp = split(chains);
    let bulk = rhat_basic(&z_scale(&sp));
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let med = quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = sp
        .iter()
        .map(|c| c.iter().map(|x| (x - med).abs()).collect())
        .collect();
    let tail = rhat_basic(&z_scale(&folded));
    Ok(match (bulk.is_nan(), tail.is_nan()) {
        (true, true) => f64::NAN,
        (true, false) => tail,
        (false, true) => bulk,
        _ => bulk.max(tail),
    })
}

/// Biased autocovariance of one chain via zero-padded FFT.
fn autocov(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

/// Multi-chain ESS with Geyer's initial positive and monotone sequence.
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let mut planner = FftPlanner::new();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocov(c, &mut planner)).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let mean_var = acov.iter().map(|a| a[0]).sum::<f64>() / m as f64 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let mean_acov = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
    let rho_at = |t: usize| 1.0 - (mean_var - mean_acov(t)) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && (even + odd) > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1] {
            rho[t] = (rho[t - 2] + rho[t - 1]) / 2.0;
            rho[t + 1] = rho[t];
        }
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t]).max(1.0 / total.log10());
    total / tau
}

/// ESS of the raw (split) chains.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    Ok(ess_raw(&split(chains)))
}

pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    Ok(ess_raw(&z_scale(&split(chains))))
}

/// Minimum ESS of the 5% and 95% quantile indicators.
pub fn ess_tail(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let sp = split(chains);
    let at = |p: f64| {
        let q = quantile_sorted(&pooled, p);
        let ind: Vec<Vec<f64>> = sp
            .iter()
            .map(|c| c.iter().map(|x| f64::from(u8::from(*x <= q))).collect())
            .collect();
        ess_raw(&ind)
    };
    let (lo, hi) = (at(0.05), at(0.95));
    Ok(if lo.is_nan() { hi } else { lo.min(hi) })
}

/// Summaries for named quantities given per-chain draws.
pub fn diagnose_chains(
    quantities: &[(String, Vec<Vec<f64>>)],
    divergences: usize,
) -> Result<Diagnostics> {
    let mut out = Vec::with_capacity(quantities.len());
    let mut total = 0;
    for (name, chains) in quantities {
        let n = check_shape(chains)?;
        total = n * chains.len();
        // sorted first so the summaries do not depend on chain order
        let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        pooled.sort_by(f64::total_cmp);
        let m = mean(&pooled);
        let sd = var(&pooled).sqrt();
        out.push(QuantityDiagnostics {
            name: name.clone(),
            mean: m,
            sd,
            q2_5: quantile_sorted(&pooled, 0.025),
            q50: quantile_sorted(&pooled, 0.5),
            q97_5: quantile_sorted(&pooled, 0.975),
            // rank normalization saturates for far-apart chains; the classic
            // split value does not
            rhat: rank_normalized_rhat(chains)?.max(split_rhat(chains)?),
            ess_bulk: ess_bulk(chains)?,
            ess_tail: ess_tail(chains)?,
        });
    }
    Ok(Diagnostics {
        quantities: out,
        divergences,
        total_draws: total,
        divergence_flag: divergences as f64 > DIVERGENCE_FLAG * total as f64,
    })
}

/// R-hat, ESS and summaries for every static and latent coordinate.
pub fn diagnose(draws: &PosteriorDraws) -> Result<Diagnostics> {
    let quantities: Vec<(String, Vec<Vec<f64>>)> = draws
        .names()
        .iter()
        .enumerate()
        .map(|(q, name)| (name.clone(), draws.by_chain(q)))
        .collect();
    let mut d = diagnose_chains(&quantities, draws.divergences())?;
    d.total_draws = draws.total_draws();
    d.divergence_flag = d.divergences as f64 > DIVERGENCE_FLAG * d.total_draws as f64;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn iid_chains_have_rhat_near_one() {
        let c = iid(4, 5000, 1);
        let r = rank_normalized_rhat(&c).unwrap();
        assert!((0.999..1.01).contains(&r), "{r}");
        let r = split_rhat(&c).unwrap();
        assert!((0.999..1.01).contains(&r), "{r}");
    }

    #[test]
    fn shifted_chain_is_detected() {
        let mut c = iid(4, 1000, 2);
        c[3].iter_mut().for_each(|x| *x += 10.0);
        assert!(rank_normalized_rhat(&c).unwrap() > 1.3);
        assert!(split_rhat(&c).unwrap() > 2.0);
        let d = diagnose_chains(&[("x".into(), c)], 0).unwrap();
        assert!(d.max_rhat() > 2.0);
    }

    #[test]
    fn iid_ess_is_draw_count() {
        let c = iid(4, 2500, 3);
        for e in [ess(&c).unwrap(), ess_bulk(&c).unwrap()] {
            assert!((e / 10_000.0 - 1.0).abs() < 0.1, "{e}");
        }
        let t = ess_tail(&c).unwrap();
        assert!((t / 10_000.0 - 1.0).abs() < 0.15, "{t}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with φ: ESS/N → (1 − φ)/(1 + φ)
        let phi = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..20_000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = phi * x + e;
                        x
                    })
                    .collect()
            })
            .collect();
        let e = ess(&c).unwrap() / 80_000.0;
        let expect = (1.0 - phi) / (1.0 + phi);
        assert!((e / expect - 1.0).abs() < 0.1, "{e} vs {expect}");
    }

    #[test]
    fn too_few_draws_or_chains() {
        assert!(split_rhat(&iid(1, 500, 0)).is_err());
        assert!(ess_bulk(&iid(4, 99, 0)).is_err());
    }

    #[test]
    fn chain_order_does_not_matter() {
        let c = iid(4, 400, 5);
        let mut rev = c.clone();
        rev.reverse();
        let q = |c: &Vec<Vec<f64>>| diagnose_chains(&[("x".into(), c.clone())], 3).unwrap();
        assert_eq!(q(&c), q(&rev));
    }

    #[test]
    fn constant_quantity_is_nan_not_error() {
        let c = vec![vec![1.0; 200]; 4];
        assert!(rank_normalized_rhat(&c).unwrap().is_nan());
    }
}
