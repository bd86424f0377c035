use std::io::Write;

use serde::{Deserialize, Serialize};

use super::diagnostics::{diagnose, Diagnostics};
use super::nuts::IterStats;
use super::{Adaptation, LogDensity, WarmStart};
use crate::data::RaceSeries;
use crate::error::{Error, Result};
use crate::model::{ModelKind, Params, Path, PosteriorTarget};

/// Raw output of one chain on the unconstrained scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDraws {
    pub dim: usize,
    /// Row-major `sampling_iters × dim`.
    pub positions: Vec<f64>,
    pub stats: Vec<IterStats>,
    pub adaptation: Adaptation,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn position(&self, iter: usize) -> &[f64] {
        &self.positions[iter * self.dim..(iter + 1) * self.dim]
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().filter(|s| s.divergent).count()
    }
}

/// Posterior sample of one model fit, with constrained-scale columns.
///
/// Quantities are the static parameters, then `alpha[t]` for every lap
/// position, then `nu_t[t]` for the time-varying model.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    target: PosteriorTarget,
    series: RaceSeries,
    chains: Vec<ChainDraws>,
    names: Vec<String>,
    /// `columns[q][chain * n + iter]`.
    columns: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    pub fn new(target: PosteriorTarget, series: RaceSeries, chains: Vec<ChainDraws>) -> Self {
        let kind = target.kind();
        let t = series.len();
        let mut names = Params::<f64>::names(kind);
        names.extend((1..=t).map(|i| format!("alpha[{i}]")));
        if kind == ModelKind::TimeVarying {
            names.extend((1..=t).map(|i| format!("nu_t[{i}]")));
        }
        let total: usize = chains.iter().map(ChainDraws::len).sum();
        let mut columns = vec![Vec::with_capacity(total); names.len()];
        for chain in &chains {
            for i in 0..chain.len() {
                let (params, path) = target.constrain(chain.position(i));
                let values = params
                    .to_flat()
                    .into_iter()
                    .chain(path.alpha)
                    .chain(path.nu.unwrap_or_default());
                for (col, v) in columns.iter_mut().zip(values) {
                    col.push(v);
                }
            }
        }
        PosteriorDraws {
            target,
            series,
            chains,
            names,
            columns,
        }
    }

    /// A single-chain sample holding the given constrained values, for
    /// simulation studies and offline checks.
    pub fn from_points(
        target: PosteriorTarget,
        series: RaceSeries,
        points: &[(Params<f64>, Path<f64>)],
    ) -> Result<Self> {
        let dim = target.dim();
        let mut positions = Vec::with_capacity(points.len() * dim);
        for (params, path) in points {
            positions.extend(target.unconstrain(params, path)?);
        }
        let stats = vec![
            IterStats {
                accept_stat: 1.0,
                tree_depth: 0,
                n_leapfrog: 0,
                divergent: false,
                energy: 0.0,
                step_size: 0.0,
            };
            points.len()
        ];
        let chain = ChainDraws {
            dim,
            positions,
            stats,
            adaptation: Adaptation {
                step_size: 1.0,
                inv_metric: vec![1.0; dim],
            },
        };
        Ok(Self::new(target, series, vec![chain]))
    }

    pub fn kind(&self) -> ModelKind {
        self.target.kind()
    }

    pub fn series(&self) -> &RaceSeries {
        &self.series
    }

    pub fn chains(&self) -> &[ChainDraws] {
        &self.chains
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Draws per chain (chains always have equal length).
    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, ChainDraws::len)
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_draws()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_static(&self) -> usize {
        self.target.n_static()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|q| self.columns[q].as_slice())
    }

    pub fn column_at(&self, q: usize) -> &[f64] {
        &self.columns[q]
    }

    /// One quantity split by chain.
    pub fn by_chain(&self, q: usize) -> Vec<Vec<f64>> {
        let n = self.n_draws();
        self.columns[q].chunks(n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Constrained statics and path of draw `i` in pooled (chain-major) order.
    pub fn draw(&self, i: usize) -> (Params<f64>, Path<f64>) {
        let n = self.n_draws();
        self.target.constrain(self.chains[i / n].position(i % n))
    }

    pub fn params(&self, i: usize) -> Params<f64> {
        let k = self.n_static();
        let flat: Vec<f64> = self.columns[..k].iter().map(|c| c[i]).collect();
        Params::from_flat(self.kind(), &flat).expect("static layout")
    }

    /// Latent pace at the last lap of the training series, per draw.
    pub fn last_alpha(&self, i: usize) -> f64 {
        self.columns[self.n_static() + self.series.len() - 1][i]
    }

    /// Degradation rate carried into the lap after the series, per draw.
    pub fn last_rate(&self, i: usize) -> f64 {
        let p = self.params(i);
        let t = self.series.len();
        let c = self.series.compounds()[t - 1];
        match self.kind() {
            ModelKind::TimeVarying => self.columns[self.n_static() + 2 * t - 1][i],
            _ => p.initial_rate(c),
        }
    }

    pub fn divergences(&self) -> usize {
        self.chains.iter().map(ChainDraws::divergences).sum()
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.column(name)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
    }

    /// Empirical quantile (type 7) of a quantity.
    pub fn quantile(&self, name: &str, p: f64) -> Option<f64> {
        let mut v = self.column(name)?.to_vec();
        v.sort_by(f64::total_cmp);
        Some(quantile_sorted(&v, p))
    }

    pub fn diagnostics(&self) -> Result<Diagnostics> {
        diagnose(self)
    }

    /// Mean adapted step size and inverse metric over chains, plus every
    /// chain's final position, for warm-starting a refit.
    pub fn warm_start(&self) -> WarmStart {
        let m = self.n_chains() as f64;
        let dim = self.chains.first().map_or(0, |c| c.dim);
        let mut inv_metric = vec![0.0; dim];
        let mut log_step = 0.0;
        for c in &self.chains {
            log_step += c.adaptation.step_size.ln() / m;
            for (a, b) in inv_metric.iter_mut().zip(&c.adaptation.inv_metric) {
                *a += b / m;
            }
        }
        let positions = self
            .chains
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| c.position(c.len() - 1).to_vec())
            .collect();
        WarmStart {
            adaptation: Some(Adaptation {
                step_size: log_step.exp(),
                inv_metric,
            }),
            positions: Some(positions),
        }
    }

    /// Columnar CSV: one row per draw with chain, iteration, divergence flag
    /// and every constrained quantity.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iter".into(), "divergent".into()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        let n = self.n_draws();
        for (c, chain) in self.chains.iter().enumerate() {
            for i in 0..chain.len() {
                let mut row = vec![
                    (c + 1).to_string(),
                    (i + 1).to_string(),
                    u8::from(chain.stats[i].divergent).to_string(),
                ];
                row.extend(self.columns.iter().map(|col| format!("{}", col[c * n + i])));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Fit(e.to_string()))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Fit(format!("writing draws: {e}"))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
