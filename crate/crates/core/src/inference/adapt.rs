//! Warmup adaptation: dual-averaging step-size search, running variance for
//! the diagonal mass matrix, and the phased warmup schedule (initial fast
//! phase, doubling slow windows, terminal fast phase).

/// Nesterov dual averaging on the log step size.
#[derive(Debug, Clone)]
pub struct DualAverage {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    m: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    target: f64,
}

impl DualAverage {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        DualAverage {
            mu: (10.0 * initial_step).ln(),
            log_eps: initial_step.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            m: 0.0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            target: target_accept,
        }
    }

    /// Feed one acceptance statistic and advance the iterate.
    pub fn update(&mut self, accept_prob: f64) {
        let accept = accept_prob.clamp(0.0, 1.0);
        self.m += 1.0;
        let frac = 1.0 / (self.m + self.t0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept);
        self.log_eps = self.mu - self.m.sqrt() / self.gamma * self.h_bar;
        let eta = self.m.powf(-self.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    /// Noisy current iterate (used while warming up).
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged estimate (used after warmup).
    pub fn adapted(&self) -> f64 {
        if self.m == 0.0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }

    /// Re-center the search around a fresh step size and forget history.
    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.log_eps = step.ln();
        self.log_eps_bar = 0.0;
        self.h_bar = 0.0;
        self.m = 0.0;
    }
}

/// Streaming mean/variance over parameter vectors.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        RunningVariance { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Sample variance shrunk toward a small constant, stabilizing the mass
    /// matrix when the window is short: (n/(n+5)) var + (5/(n+5)) 1e-3.
    pub fn regularized_variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![1.0; self.mean.len()];
        }
        let n = self.n as f64;
        let shrink = n / (n + 5.0);
        self.m2
            .iter()
            .map(|&m2| {
                let var = m2 / (n - 1.0);
                (shrink * var + (1.0 - shrink) * 1e-3).max(1e-10)
            })
            .collect()
    }
}

/// Iteration boundaries of the warmup phases.
#[derive(Debug, Clone)]
pub struct WarmupSchedule {
    /// First iteration of the slow (mass-estimation) phase.
    pub slow_start: usize,
    /// One past the last slow iteration.
    pub slow_end: usize,
    /// Completed-iteration counts at which a mass window closes.
    pub window_ends: Vec<usize>,
}

impl WarmupSchedule {
    pub fn new(n_warmup: usize) -> Self {
        if n_warmup < 20 {
            // Too short for mass estimation; step size only.
            return WarmupSchedule { slow_start: 0, slow_end: 0, window_ends: Vec::new() };
        }
        let (init, term, base) = if n_warmup >= 150 {
            (75, 50, 25)
        } else {
            let init = ((0.15 * n_warmup as f64).round() as usize).max(1);
            let term = ((0.10 * n_warmup as f64).round() as usize).max(1);
            let base = n_warmup.saturating_sub(init + term).max(1);
            (init, term, base)
        };
        let slow_end = n_warmup - term;
        let mut window_ends = Vec::new();
        let mut pos = init;
        let mut size = base;
        while pos < slow_end {
            let mut end = pos + size;
            // Absorb the remainder when the next doubling would not fit.
            if end > slow_end || slow_end - end < size * 2 {
                end = slow_end;
            }
            window_ends.push(end);
            pos = end;
            size *= 2;
        }
        WarmupSchedule { slow_start: init, slow_end, window_ends }
    }

    /// Whether iteration `iter` (0-based) contributes to mass estimation.
    pub fn in_slow_phase(&self, iter: usize) -> bool {
        iter >= self.slow_start && iter < self.slow_end
    }

    /// Whether a mass window closes once `completed` iterations are done.
    pub fn closes_window(&self, completed: usize) -> bool {
        self.window_ends.contains(&completed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_averaging_finds_the_target_acceptance_step() {
        // Synthetic monotone response: accept(eps) = exp(-eps). The step with
        // accept = 0.8 is -ln(0.8) = 0.22314.
        let mut da = DualAverage::new(1.0, 0.8);
        for _ in 0..600 {
            let accept = (-da.current()).exp();
            da.update(accept);
        }
        let eps = da.adapted();
        assert!(
            (eps - 0.22314355131420976).abs() < 0.02,
            "adapted step {eps}"
        );
    }

    #[test]
    fn restart_recenters_and_clears_history() {
        let mut da = DualAverage::new(1.0, 0.8);
        for _ in 0..50 {
            da.update(0.1);
        }
        da.restart(0.3);
        assert!((da.current() - 0.3).abs() < 1e-12);
        assert!((da.adapted() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn running_variance_matches_direct_computation() {
        let samples = [
            [1.0, -2.0],
            [0.5, 0.0],
            [2.0, 1.0],
            [-1.0, 3.0],
            [0.0, -1.0],
            [1.5, 2.0],
            [0.7, 0.3],
            [-0.3, 1.2],
            [2.2, -0.8],
            [0.1, 0.9],
        ];
        let mut rv = RunningVariance::new(2);
        for s in &samples {
            rv.push(s);
        }
        for d in 0..2 {
            let mean: f64 = samples.iter().map(|s| s[d]).sum::<f64>() / 10.0;
            let var: f64 =
                samples.iter().map(|s| (s[d] - mean).powi(2)).sum::<f64>() / 9.0;
            let expected = (10.0 / 15.0) * var + (5.0 / 15.0) * 1e-3;
            let got = rv.regularized_variance()[d];
            assert!((got - expected).abs() < 1e-12, "dim {d}: {got} vs {expected}");
        }
    }

    #[test]
    fn short_windows_fall_back_to_unit_mass() {
        let mut rv = RunningVariance::new(3);
        rv.push(&[1.0, 2.0, 3.0]);
        assert_eq!(rv.regularized_variance(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn schedule_matches_reference_layout_for_long_warmup() {
        let s = WarmupSchedule::new(1000);
        assert_eq!(s.slow_start, 75);
        assert_eq!(s.slow_end, 950);
        assert_eq!(s.window_ends, vec![100, 150, 250, 450, 950]);

        let s = WarmupSchedule::new(500);
        assert_eq!(s.window_ends, vec![100, 150, 250, 450]);
    }

    #[test]
    fn schedule_scales_down_for_short_warmup() {
        let s = WarmupSchedule::new(100);
        assert_eq!(s.slow_start, 15);
        assert_eq!(s.slow_end, 90);
        assert_eq!(s.window_ends, vec![90]);

        let s = WarmupSchedule::new(10);
        assert!(s.window_ends.is_empty());
    }
}
