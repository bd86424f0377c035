use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adapt::{DualAveraging, Welford, WindowSchedule};
use super::draws::ChainDraws;
use super::{Adaptation, LogDensity, SamplerConfig};
use crate::error::{Error, Result};

/// Energy error beyond which a trajectory is declared divergent.
const MAX_DELTA_H: f64 = 1000.0;
const INIT_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
    pub step_size: f64,
}

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    g: Vec<f64>,
    logp: f64,
}

/// One Markov chain: current position plus adaptation state.
pub struct Chain {
    q: Vec<f64>,
    g: Vec<f64>,
    logp: f64,
    step: f64,
    inv_metric: Vec<f64>,
    max_depth: usize,
}

struct Trajectory {
    h0: f64,
    step: f64,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

impl Chain {
    /// Finds a starting point with finite density and gradient, retrying
    /// with fresh jitter up to 100 times.
    pub fn initialize<D: LogDensity + ?Sized>(
        target: &D,
        rng: &mut ChaCha8Rng,
        init: &(dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync),
        start: Option<Vec<f64>>,
    ) -> Result<Self> {
        let dim = target.dim();
        let mut g = vec![0.0; dim];
        // a start from a shorter series gets zero innovations for the new laps
        let mut candidates = start.into_iter().map(|mut s| {
            s.resize(dim, 0.0);
            s
        });
        for _ in 0..=INIT_RETRIES {
            let q = candidates.next().unwrap_or_else(|| init(rng));
            let logp = target.logp_grad(&q, &mut g);
            if logp.is_finite() && g.iter().all(|v| v.is_finite()) {
                return Ok(Chain {
                    q,
                    g,
                    logp,
                    step: 1.0,
                    inv_metric: vec![1.0; dim],
                    max_depth: 10,
                });
            }
        }
        Err(Error::Init(format!(
            "no finite log density / gradient after {INIT_RETRIES} jittered attempts"
        )))
    }

    pub fn position(&self) -> &[f64] {
        &self.q
    }

    pub fn adaptation(&self) -> Adaptation {
        Adaptation {
            step_size: self.step,
            inv_metric: self.inv_metric.clone(),
        }
    }

    /// Installs a previous adaptation; the metric is padded with its last
    /// entry (or truncated) to the target dimension.
    pub fn set_adaptation(&mut self, a: Adaptation) {
        let dim = self.q.len();
        let mut m = a.inv_metric;
        let fill = m.last().copied().unwrap_or(1.0);
        m.resize(dim, fill);
        if a.step_size.is_finite() && a.step_size > 0.0 {
            self.step = a.step_size;
        }
        if m.iter().all(|v| v.is_finite() && *v > 0.0) {
            self.inv_metric = m;
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn leapfrog<D: LogDensity + ?Sized>(&self, target: &D, z: &mut Point, eps: f64) {
        let half = 0.5 * eps;
        for i in 0..z.q.len() {
            z.p[i] += half * z.g[i];
        }
        for i in 0..z.q.len() {
            z.q[i] += eps * self.inv_metric[i] * z.p[i];
        }
        z.logp = target.logp_grad(&z.q, &mut z.g);
        if !z.logp.is_finite() || z.g.iter().any(|v| !v.is_finite()) {
            z.logp = f64::NEG_INFINITY;
            return;
        }
        for i in 0..z.q.len() {
            z.p[i] += half * z.g[i];
        }
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn sample_momentum(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.inv_metric
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                z / m.sqrt()
            })
            .collect()
    }

    /// Step-size heuristic: double or halve until the one-step acceptance
    /// crosses 0.8.
    pub(crate) fn init_step_size<D: LogDensity + ?Sized>(&mut self, target: &D, rng: &mut ChaCha8Rng) {
        let start = Point {
            q: self.q.clone(),
            p: self.sample_momentum(rng),
            g: self.g.clone(),
            logp: self.logp,
        };
        let h0 = self.hamiltonian(&start);
        let delta = |chain: &Chain| {
            let mut z = start.clone();
            chain.leapfrog(target, &mut z, chain.step);
            h0 - chain.hamiltonian(&z)
        };
        let d0 = delta(self);
        let direction = if d0 > 0.8f64.ln() { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let d = delta(self);
            if (direction == 1.0 && !(d > 0.8f64.ln())) || (direction == -1.0 && d > 0.8f64.ln()) {
                break;
            }
            self.step = if direction == 1.0 { 2.0 * self.step } else { 0.5 * self.step };
            if self.step > 1e7 || self.step < 1e-10 {
                break;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<D: LogDensity + ?Sized>(
        &self,
        target: &D,
        rng: &mut ChaCha8Rng,
        traj: &mut Trajectory,
        depth: usize,
        sign: f64,
        z: &mut Point,
        propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(target, z, sign * traj.step);
            traj.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - traj.h0 > MAX_DELTA_H {
                traj.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, traj.h0 - h);
            traj.sum_metro += if traj.h0 - h > 0.0 { 1.0 } else { (traj.h0 - h).exp() };
            *propose = z.clone();
            *p_sharp_beg = self.p_sharp(&z.p);
            *p_sharp_end = p_sharp_beg.clone();
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            *p_beg = z.p.clone();
            *p_end = z.p.clone();
            return !traj.divergent;
        }

        let dim = z.q.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        if !self.build_tree(
            target,
            rng,
            traj,
            depth - 1,
            sign,
            z,
            propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            &mut lsw_init,
        ) {
            return false;
        }

        let mut propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        if !self.build_tree(
            target,
            rng,
            traj,
            depth - 1,
            sign,
            z,
            &mut propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            &mut lsw_final,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            *propose = propose_final;
        }

        let rho_subtree: Vec<f64> = rho_init.iter().zip(&rho_final).map(|(a, b)| a + b).collect();
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let ext: Vec<f64> = rho_init.iter().zip(&p_final_beg).map(|(a, b)| a + b).collect();
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &ext);
        let ext: Vec<f64> = rho_final.iter().zip(&p_init_end).map(|(a, b)| a + b).collect();
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &ext);
        persist
    }

    /// One NUTS transition.
    pub fn transition<D: LogDensity + ?Sized>(&mut self, target: &D, rng: &mut ChaCha8Rng) -> IterStats {
        let p0 = self.sample_momentum(rng);
        let z0 = Point {
            q: self.q.clone(),
            p: p0.clone(),
            g: self.g.clone(),
            logp: self.logp,
        };
        let mut traj = Trajectory {
            h0: self.hamiltonian(&z0),
            step: self.step,
            n_leapfrog: 0,
            sum_metro: 0.0,
            divergent: false,
        };
        let dim = p0.len();
        let ps0 = self.p_sharp(&p0);

        let mut z_fwd = z0.clone();
        let mut z_bck = z0.clone();
        let mut sample = z0.clone();
        let mut propose = z0.clone();

        let mut p_fwd_fwd = p0.clone();
        let mut ps_fwd_fwd = ps0.clone();
        let mut p_fwd_bck = p0.clone();
        let mut ps_fwd_bck = ps0.clone();
        let mut p_bck_fwd = p0.clone();
        let mut ps_bck_fwd = ps0.clone();
        let mut p_bck_bck = p0.clone();
        let mut ps_bck_bck = ps0;

        let mut rho = p0;
        let mut log_sum_weight = 0.0;
        let mut depth = 0;

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                ps_bck_fwd.clone_from(&ps_fwd_bck);
                self.build_tree(
                    target,
                    rng,
                    &mut traj,
                    depth,
                    1.0,
                    &mut z_fwd,
                    &mut propose,
                    &mut ps_fwd_bck,
                    &mut ps_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    &mut lsw_subtree,
                )
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                ps_fwd_bck.clone_from(&ps_bck_fwd);
                self.build_tree(
                    target,
                    rng,
                    &mut traj,
                    depth,
                    -1.0,
                    &mut z_bck,
                    &mut propose,
                    &mut ps_bck_fwd,
                    &mut ps_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    &mut lsw_subtree,
                )
            };
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight
                || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp()
            {
                sample = propose.clone();
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            for i in 0..dim {
                rho[i] = rho_bck[i] + rho_fwd[i];
            }
            let mut persist = criterion(&ps_bck_bck, &ps_fwd_fwd, &rho);
            let ext: Vec<f64> = rho_bck.iter().zip(&p_fwd_bck).map(|(a, b)| a + b).collect();
            persist &= criterion(&ps_bck_bck, &ps_fwd_bck, &ext);
            let ext: Vec<f64> = rho_fwd.iter().zip(&p_bck_fwd).map(|(a, b)| a + b).collect();
            persist &= criterion(&ps_bck_fwd, &ps_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }

        let energy = self.hamiltonian(&sample);
        self.q = sample.q;
        self.g = sample.g;
        self.logp = sample.logp;
        IterStats {
            accept_stat: if traj.n_leapfrog > 0 {
                traj.sum_metro / traj.n_leapfrog as f64
            } else {
                0.0
            },
            tree_depth: depth,
            n_leapfrog: traj.n_leapfrog,
            divergent: traj.divergent,
            energy,
            step_size: self.step,
        }
    }

    /// Warmup with step size and metric adaptation, then sampling.
    pub fn run<D: LogDensity + ?Sized>(
        mut self,
        target: &D,
        rng: &mut ChaCha8Rng,
        cfg: &SamplerConfig,
    ) -> ChainDraws {
        self.max_depth = cfg.max_tree_depth;
        let dim = self.q.len();
        let schedule = WindowSchedule::new(cfg.warmup_iters);
        let window_ends = schedule.window_ends();

        if cfg.warmup_iters > 0 {
            self.init_step_size(target, rng);
        }
        let mut da = DualAveraging::new(cfg.target_accept, self.step);
        let mut welford = Welford::new(dim);
        for i in 0..cfg.warmup_iters {
            let stats = self.transition(target, rng);
            self.step = da.update(stats.accept_stat);
            if schedule.in_slow_window(i) {
                welford.add(&self.q);
            }
            if window_ends.contains(&i) {
                if welford.count() > 2 {
                    self.inv_metric = welford.variance();
                }
                welford = Welford::new(dim);
                self.init_step_size(target, rng);
                da.restart(self.step);
            }
        }
        if cfg.warmup_iters > 0 {
            self.step = da.final_step();
        }

        let mut positions = Vec::with_capacity(cfg.sampling_iters * dim);
        let mut stats = Vec::with_capacity(cfg.sampling_iters);
        for _ in 0..cfg.sampling_iters {
            let s = self.transition(target, rng);
            positions.extend_from_slice(&self.q);
            stats.push(s);
        }
        ChainDraws {
            dim,
            positions,
            stats,
            adaptation: self.adaptation(),
        }
    }
}
