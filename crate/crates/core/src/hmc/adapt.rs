/// Nesterov dual averaging of log step size towards a target acceptance.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(target: f64, step_size: f64) -> Self {
        DualAveraging {
            target,
            mu: (10.0 * step_size).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    pub fn restart(&mut self, step_size: f64) {
        *self = DualAveraging::new(self.target, step_size);
    }

    /// Feeds one acceptance statistic, returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = if accept_stat.is_finite() { accept_stat.min(1.0) } else { 0.0 };
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// The averaged step size to use after warmup.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Warmup phases: a fast initial buffer, doubling slow windows in which the
/// diagonal metric is estimated, and a fast terminal buffer.
#[derive(Debug, Clone, Copy)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    base_window: usize,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let (mut init, mut term, base) = (75, 50, 25);
        if warmup < 20 {
            return WindowSchedule {
                warmup,
                init_buffer: warmup,
                term_buffer: 0,
                base_window: 0,
            };
        }
        let mut base_window = base;
        if init + term + base > warmup {
            init = (0.15 * warmup as f64) as usize;
            term = (0.1 * warmup as f64) as usize;
            base_window = warmup - init - term;
        }
        WindowSchedule {
            warmup,
            init_buffer: init,
            term_buffer: term,
            base_window,
        }
    }

    /// Metric adaptation is active.
    pub fn adapts_metric(&self) -> bool {
        self.base_window > 0
    }

    /// True when iteration `i` (0-based) is inside a slow window.
    pub fn in_slow_window(&self, i: usize) -> bool {
        self.adapts_metric() && i >= self.init_buffer && i < self.warmup - self.term_buffer
    }

    /// Iterations (0-based) after which a slow window closes.
    pub fn window_ends(&self) -> Vec<usize> {
        let mut ends = Vec::new();
        if !self.adapts_metric() {
            return ends;
        }
        let slow_end = self.warmup - self.term_buffer;
        let mut start = self.init_buffer;
        let mut size = self.base_window;
        while start < slow_end {
            let mut end = start + size;
            // a short remainder is folded into the current window
            if end + 2 * size > slow_end {
                end = slow_end;
            }
            ends.push(end - 1);
            start = end;
            size *= 2;
        }
        ends
    }
}

/// Running mean / variance (Welford).
#[derive(Debug, Clone)]
pub(crate) struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Welford {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    /// Regularised variance, shrunk towards 1e-3.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|m| {
                let v = m / (n - 1.0);
                (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_covers_slow_phase() {
        let s = WindowSchedule::new(2000);
        let ends = s.window_ends();
        assert_eq!(ends.first(), Some(&99));
        assert_eq!(*ends.last().unwrap(), 2000 - 50 - 1);
        // the final window is the largest and spans most of the second half
        let last_start = ends[ends.len() - 2] + 1;
        assert!(last_start <= 1000);

        let small = WindowSchedule::new(100);
        assert_eq!(small.window_ends(), vec![89]);
        assert!(!WindowSchedule::new(10).adapts_metric());
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.update(0.2);
        }
        assert!(eps < 1.0);
        let mut da = DualAveraging::new(0.8, 1.0);
        for _ in 0..50 {
            eps = da.update(1.0);
        }
        assert!(eps > 1.0);
        assert!(da.final_step() > 1.0);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [[1.0, 2.0], [2.0, 0.0], [4.0, 1.0], [7.0, 3.0]];
        let mut w = Welford::new(2);
        for x in &xs {
            w.add(x);
        }
        let m: f64 = xs.iter().map(|x| x[0]).sum::<f64>() / 4.0;
        let v: f64 = xs.iter().map(|x| (x[0] - m).powi(2)).sum::<f64>() / 3.0;
        let expect = (4.0 / 9.0) * v + 1e-3 * (5.0 / 9.0);
        assert!((w.variance()[0] - expect).abs() < 1e-12);
        assert_eq!(w.count(), 4);
    }
}
