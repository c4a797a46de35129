//! No-U-Turn sampler with multinomial trajectory sampling, diagonal mass
//! matrix, dual-averaging step-size adaptation, and phased warmup.
//!
//! Trajectories grow by doubling. Each doubling is checked for divergence and
//! for the generalized U-turn condition; merges additionally cross-check the
//! condition across the junction of the merged subtrees, guarding against
//! U-turns hidden between coarse endpoints.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::adapt::{DualAverage, RunningVariance, WarmupSchedule};
use super::posterior::LogDensityGrad;
use crate::{Error, Result};

/// Sampler configuration.
#[derive(Debug, Clone)]
pub struct NutsSettings {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub max_tree_depth: usize,
    pub target_accept: f64,
    pub divergence_threshold: f64,
    /// Standard deviation of per-chain jitter applied to the shared
    /// initialization point (unconstrained scale).
    pub init_jitter_sd: f64,
    /// Fixed initial step size; `None` searches for a reasonable one.
    pub init_step_size: Option<f64>,
    /// Estimate a diagonal mass matrix during warmup.
    pub adapt_mass: bool,
}

impl Default for NutsSettings {
    fn default() -> Self {
        NutsSettings {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            seed: 0,
            max_tree_depth: 10,
            target_accept: 0.8,
            divergence_threshold: 1000.0,
            init_jitter_sd: 0.0,
            init_step_size: None,
            adapt_mass: true,
        }
    }
}

/// Raw sampler output on the unconstrained scale.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub dim: usize,
    pub n_chains: usize,
    pub n_samples: usize,
    /// Per chain: `n_samples` x `dim`.
    pub draws: Vec<Array2<f64>>,
    pub logp: Vec<Vec<f64>>,
    pub divergent: Vec<Vec<bool>>,
    pub tree_depth: Vec<Vec<usize>>,
    /// Adapted step size per chain.
    pub step_size: Vec<f64>,
    /// Adapted inverse mass diagonal per chain.
    pub inv_mass: Vec<Vec<f64>>,
}

impl SampleOutput {
    pub fn total_divergences(&self) -> usize {
        self.divergent.iter().map(|c| c.iter().filter(|&&d| d).count()).sum()
    }
}

/// Draw posterior samples with one NUTS chain per entry of `0..n_chains`,
/// all starting from `init` (plus optional per-chain jitter).
pub fn nuts_sample<T: LogDensityGrad>(
    target: &T,
    init: &[f64],
    settings: &NutsSettings,
) -> Result<SampleOutput> {
    if init.len() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "init has {} coordinates, target has {}",
            init.len(),
            target.dim()
        )));
    }
    if settings.n_chains == 0 {
        return Err(Error::Sampler("need at least one chain".into()));
    }
    let chains: Vec<Result<ChainOutput>> = (0..settings.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, init, settings, c as u64))
        .collect();
    let mut out = SampleOutput {
        dim: target.dim(),
        n_chains: settings.n_chains,
        n_samples: settings.n_samples,
        draws: Vec::new(),
        logp: Vec::new(),
        divergent: Vec::new(),
        tree_depth: Vec::new(),
        step_size: Vec::new(),
        inv_mass: Vec::new(),
    };
    for chain in chains {
        let chain = chain?;
        out.draws.push(chain.draws);
        out.logp.push(chain.logp);
        out.divergent.push(chain.divergent);
        out.tree_depth.push(chain.tree_depth);
        out.step_size.push(chain.step_size);
        out.inv_mass.push(chain.inv_mass);
    }
    Ok(out)
}

struct ChainOutput {
    draws: Array2<f64>,
    logp: Vec<f64>,
    divergent: Vec<bool>,
    tree_depth: Vec<usize>,
    step_size: f64,
    inv_mass: Vec<f64>,
}

/// Position with cached gradient and log density.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

/// Full phase-space point at a trajectory end.
#[derive(Clone)]
struct Phase {
    point: Point,
    p: Vec<f64>,
}

/// Statistics shared by valid and aborted subtree builds.
#[derive(Clone, Copy, Default)]
struct BuildStats {
    sum_accept: f64,
    n_leaves: usize,
}

struct Subtree {
    /// Outermost phase point, to continue integration in this direction.
    tip: Phase,
    /// Momentum / velocity at the end adjacent to the pre-existing tree.
    begin_p: Vec<f64>,
    begin_v: Vec<f64>,
    /// Momentum / velocity at the far end.
    end_p: Vec<f64>,
    end_v: Vec<f64>,
    /// Sum of momenta over the subtree's leaves.
    rho: Vec<f64>,
    proposal: Point,
    log_sum_weight: f64,
    stats: BuildStats,
}

enum Build {
    Valid(Subtree),
    Aborted { divergent: bool, stats: BuildStats },
}

pub(crate) struct TransitionInfo {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn velocity(p: &[f64], inv_mass: &[f64]) -> Vec<f64> {
    p.iter().zip(inv_mass).map(|(&pi, &mi)| pi * mi).collect()
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(&pi, &mi)| mi * pi * pi).sum::<f64>()
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// No turn across a segment with boundary velocities `v_a`, `v_b` and summed
/// momentum `rho`.
fn no_uturn(rho: &[f64], v_a: &[f64], v_b: &[f64]) -> bool {
    dot(rho, v_a) > 0.0 && dot(rho, v_b) > 0.0
}

/// One leapfrog step of signed size `eps` from `from`; `None` when the new
/// point has invalid density.
fn leapfrog<T: LogDensityGrad>(
    target: &T,
    from: &Phase,
    eps: f64,
    inv_mass: &[f64],
) -> Option<Phase> {
    let dim = from.point.x.len();
    let mut p_half = vec![0.0; dim];
    for i in 0..dim {
        p_half[i] = from.p[i] + 0.5 * eps * from.point.grad[i];
    }
    let mut x = vec![0.0; dim];
    for i in 0..dim {
        x[i] = from.point.x[i] + eps * inv_mass[i] * p_half[i];
    }
    let mut grad = vec![0.0; dim];
    let logp = target.logp_grad(&x, &mut grad)?;
    let mut p = p_half;
    for i in 0..dim {
        p[i] += 0.5 * eps * grad[i];
    }
    Some(Phase { point: Point { x, grad, logp }, p })
}

struct TreeContext<'a, T: LogDensityGrad> {
    target: &'a T,
    eps: f64,
    inv_mass: &'a [f64],
    h0: f64,
    divergence_threshold: f64,
}

impl<T: LogDensityGrad> TreeContext<'_, T> {
    fn leaf(&self, from: &Phase, dir: f64) -> Build {
        let step = dir * self.eps;
        let Some(phase) = leapfrog(self.target, from, step, self.inv_mass) else {
            return Build::Aborted {
                divergent: true,
                stats: BuildStats { sum_accept: 0.0, n_leaves: 1 },
            };
        };
        let h = phase.point.logp - kinetic(&phase.p, self.inv_mass);
        let w = h - self.h0;
        let accept = if w.is_finite() { w.exp().min(1.0) } else { 0.0 };
        let stats = BuildStats { sum_accept: accept, n_leaves: 1 };
        if !(w > -self.divergence_threshold) {
            return Build::Aborted { divergent: true, stats };
        }
        let v = velocity(&phase.p, self.inv_mass);
        Build::Valid(Subtree {
            begin_p: phase.p.clone(),
            begin_v: v.clone(),
            end_p: phase.p.clone(),
            end_v: v,
            rho: phase.p.clone(),
            proposal: phase.point.clone(),
            log_sum_weight: w,
            stats,
            tip: phase,
        })
    }

    fn build(&self, depth: usize, from: &Phase, dir: f64, rng: &mut ChaCha8Rng) -> Build {
        if depth == 0 {
            return self.leaf(from, dir);
        }
        let first = match self.build(depth - 1, from, dir, rng) {
            Build::Valid(t) => t,
            aborted => return aborted,
        };
        let second = match self.build(depth - 1, &first.tip, dir, rng) {
            Build::Valid(t) => t,
            Build::Aborted { divergent, stats } => {
                return Build::Aborted {
                    divergent,
                    stats: BuildStats {
                        sum_accept: first.stats.sum_accept + stats.sum_accept,
                        n_leaves: first.stats.n_leaves + stats.n_leaves,
                    },
                }
            }
        };
        let stats = BuildStats {
            sum_accept: first.stats.sum_accept + second.stats.sum_accept,
            n_leaves: first.stats.n_leaves + second.stats.n_leaves,
        };
        let log_sum_weight = log_sum_exp2(first.log_sum_weight, second.log_sum_weight);
        // Multinomial choice between the two halves (unbiased within a
        // subtree).
        let u: f64 = rng.random();
        let proposal = if u.ln() < second.log_sum_weight - log_sum_weight {
            second.proposal.clone()
        } else {
            first.proposal.clone()
        };
        let rho: Vec<f64> =
            first.rho.iter().zip(&second.rho).map(|(a, b)| a + b).collect();
        // U-turn checks: whole subtree plus both junction-extended segments.
        let rho_first_ext: Vec<f64> =
            first.rho.iter().zip(&second.begin_p).map(|(a, b)| a + b).collect();
        let rho_second_ext: Vec<f64> =
            second.rho.iter().zip(&first.end_p).map(|(a, b)| a + b).collect();
        let ok = no_uturn(&rho, &first.begin_v, &second.end_v)
            && no_uturn(&rho_first_ext, &first.begin_v, &second.begin_v)
            && no_uturn(&rho_second_ext, &first.end_v, &second.end_v);
        if !ok {
            return Build::Aborted { divergent: false, stats };
        }
        Build::Valid(Subtree {
            tip: second.tip,
            begin_p: first.begin_p,
            begin_v: first.begin_v,
            end_p: second.end_p,
            end_v: second.end_v,
            rho,
            proposal,
            log_sum_weight,
            stats,
        })
    }
}

/// One NUTS update of `current`, in place.
fn transition<T: LogDensityGrad>(
    target: &T,
    current: &mut Point,
    eps: f64,
    inv_mass: &[f64],
    max_depth: usize,
    divergence_threshold: f64,
    rng: &mut ChaCha8Rng,
) -> TransitionInfo {
    let p0: Vec<f64> = inv_mass
        .iter()
        .map(|&mi| {
            let z: f64 = StandardNormal.sample(rng);
            z / mi.sqrt()
        })
        .collect();
    let h0 = current.logp - kinetic(&p0, inv_mass);
    let ctx = TreeContext { target, eps, inv_mass, h0, divergence_threshold };

    let v0 = velocity(&p0, inv_mass);
    let start = Phase { point: current.clone(), p: p0.clone() };
    let mut left = start.clone();
    let mut right = start;
    let mut left_v = v0.clone();
    let mut right_v = v0;
    let mut rho = p0;
    let mut selected = current.clone();
    let mut log_sum_weight = 0.0;
    let mut sum_accept = 0.0;
    let mut n_leaves = 0usize;
    let mut divergent = false;
    let mut depth = 0usize;

    while depth < max_depth {
        let forward = rng.random::<bool>();
        let dir = if forward { 1.0 } else { -1.0 };
        let from = if forward { &right } else { &left };
        let built = ctx.build(depth, from, dir, rng);
        match built {
            Build::Aborted { divergent: d, stats } => {
                sum_accept += stats.sum_accept;
                n_leaves += stats.n_leaves;
                divergent = d;
                break;
            }
            Build::Valid(subtree) => {
                sum_accept += subtree.stats.sum_accept;
                n_leaves += subtree.stats.n_leaves;
                // Biased progressive selection favoring the fresh subtree.
                let u: f64 = rng.random();
                if u.ln() < subtree.log_sum_weight - log_sum_weight {
                    selected = subtree.proposal.clone();
                }
                log_sum_weight = log_sum_exp2(log_sum_weight, subtree.log_sum_weight);

                let new_rho: Vec<f64> =
                    rho.iter().zip(&subtree.rho).map(|(a, b)| a + b).collect();
                let (far_v, junc_p, junc_v) = if forward {
                    (&left_v, &right.p, &right_v)
                } else {
                    (&right_v, &left.p, &left_v)
                };
                let rho_tree_ext: Vec<f64> =
                    rho.iter().zip(&subtree.begin_p).map(|(a, b)| a + b).collect();
                let rho_sub_ext: Vec<f64> =
                    subtree.rho.iter().zip(junc_p).map(|(a, b)| a + b).collect();
                let ok = no_uturn(&new_rho, far_v, &subtree.end_v)
                    && no_uturn(&rho_tree_ext, far_v, &subtree.begin_v)
                    && no_uturn(&rho_sub_ext, junc_v, &subtree.end_v);
                rho = new_rho;
                let tip_v = velocity(&subtree.tip.p, ctx.inv_mass);
                if forward {
                    right = subtree.tip;
                    right_v = tip_v;
                } else {
                    left = subtree.tip;
                    left_v = tip_v;
                }
                depth += 1;
                if !ok {
                    break;
                }
            }
        }
    }

    *current = selected;
    TransitionInfo {
        accept_stat: if n_leaves > 0 { sum_accept / n_leaves as f64 } else { 0.0 },
        divergent,
        depth,
    }
}

/// Step-size heuristic: starting from 1, double or halve until the one-step
/// acceptance probability crosses one half.
fn find_reasonable_step<T: LogDensityGrad>(
    target: &T,
    point: &Point,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let p: Vec<f64> = inv_mass
        .iter()
        .map(|&mi| {
            let z: f64 = StandardNormal.sample(rng);
            z / mi.sqrt()
        })
        .collect();
    let h0 = point.logp - kinetic(&p, inv_mass);
    let phase = Phase { point: point.clone(), p };
    let mut eps = 1.0;
    let log_half = 0.5_f64.ln();
    let log_ratio = |eps: f64| -> f64 {
        match leapfrog(target, &phase, eps, inv_mass) {
            Some(next) => {
                let h = next.point.logp - kinetic(&next.p, inv_mass);
                let r = h - h0;
                if r.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    r
                }
            }
            None => f64::NEG_INFINITY,
        }
    };
    let mut ratio = log_ratio(eps);
    // If even the first try explodes, shrink until the step is computable.
    let mut guard = 0;
    while ratio == f64::NEG_INFINITY && guard < 60 {
        eps *= 0.5;
        ratio = log_ratio(eps);
        guard += 1;
    }
    if ratio == f64::NEG_INFINITY {
        return Err(Error::Sampler(
            "could not find a computable step size at the initial point".into(),
        ));
    }
    let go_bigger = ratio > log_half;
    for _ in 0..100 {
        let crossed = if go_bigger { ratio <= log_half } else { ratio > log_half };
        if crossed {
            break;
        }
        eps *= if go_bigger { 2.0 } else { 0.5 };
        if !(1e-10..=1e7).contains(&eps) {
            return Err(Error::Sampler(format!(
                "step-size search left the plausible range at {eps:e}"
            )));
        }
        ratio = log_ratio(eps);
    }
    Ok(eps)
}

fn run_chain<T: LogDensityGrad>(
    target: &T,
    init: &[f64],
    settings: &NutsSettings,
    chain_index: u64,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(chain_index));
    let mut x = init.to_vec();
    if settings.init_jitter_sd > 0.0 {
        for xi in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *xi += settings.init_jitter_sd * z;
        }
    }
    let mut grad = vec![0.0; dim];
    let logp = target.logp_grad(&x, &mut grad).ok_or_else(|| {
        Error::Sampler(format!(
            "chain {chain_index}: initial point has invalid log density"
        ))
    })?;
    let mut current = Point { x, grad, logp };
    let mut inv_mass = vec![1.0; dim];
    let mut eps = match settings.init_step_size {
        Some(e) => e,
        None => find_reasonable_step(target, &current, &inv_mass, &mut rng)?,
    };
    let mut da = DualAverage::new(eps, settings.target_accept);
    let schedule = WarmupSchedule::new(settings.n_warmup);
    let mut welford = RunningVariance::new(dim);

    for w in 0..settings.n_warmup {
        let info = transition(
            target,
            &mut current,
            eps,
            &inv_mass,
            settings.max_tree_depth,
            settings.divergence_threshold,
            &mut rng,
        );
        da.update(info.accept_stat);
        eps = da.current();
        if settings.adapt_mass && schedule.in_slow_phase(w) {
            welford.push(&current.x);
            if schedule.closes_window(w + 1) {
                inv_mass = welford.regularized_variance();
                welford.reset();
                eps = find_reasonable_step(target, &current, &inv_mass, &mut rng)?;
                da.restart(eps);
            }
        }
    }
    if settings.n_warmup > 0 {
        eps = da.adapted();
    }

    let mut draws = Array2::zeros((settings.n_samples, dim));
    let mut logps = Vec::with_capacity(settings.n_samples);
    let mut divergent = Vec::with_capacity(settings.n_samples);
    let mut tree_depth = Vec::with_capacity(settings.n_samples);
    for s in 0..settings.n_samples {
        let info = transition(
            target,
            &mut current,
            eps,
            &inv_mass,
            settings.max_tree_depth,
            settings.divergence_threshold,
            &mut rng,
        );
        draws.row_mut(s).iter_mut().zip(&current.x).for_each(|(d, &v)| *d = v);
        logps.push(current.logp);
        divergent.push(info.divergent);
        tree_depth.push(info.depth);
    }
    Ok(ChainOutput {
        draws,
        logp: logps,
        divergent,
        tree_depth,
        step_size: eps,
        inv_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent Gaussian with per-coordinate variances.
    struct DiagGaussian {
        vars: Vec<f64>,
    }

    impl LogDensityGrad for DiagGaussian {
        fn dim(&self) -> usize {
            self.vars.len()
        }
        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
            let mut lp = 0.0;
            for i in 0..x.len() {
                lp -= 0.5 * x[i] * x[i] / self.vars[i];
                grad[i] = -x[i] / self.vars[i];
            }
            Some(lp)
        }
    }

    /// Bivariate Gaussian with correlation `r`, unit variances.
    struct Corr2 {
        r: f64,
    }

    impl LogDensityGrad for Corr2 {
        fn dim(&self) -> usize {
            2
        }
        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
            let d = 1.0 - self.r * self.r;
            let lp = -0.5 * (x[0] * x[0] - 2.0 * self.r * x[0] * x[1] + x[1] * x[1]) / d;
            grad[0] = -(x[0] - self.r * x[1]) / d;
            grad[1] = -(x[1] - self.r * x[0]) / d;
            Some(lp)
        }
    }

    /// Gaussian restricted to a box; outside is invalid.
    struct Clipped;

    impl LogDensityGrad for Clipped {
        fn dim(&self) -> usize {
            1
        }
        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
            if x[0].abs() > 4.0 {
                return None;
            }
            grad[0] = -x[0];
            Some(-0.5 * x[0] * x[0])
        }
    }

    #[test]
    fn leapfrog_is_time_reversible() {
        let target = DiagGaussian { vars: vec![1.0, 2.0, 0.5] };
        let mut grad = vec![0.0; 3];
        let x = vec![0.3, -0.7, 1.1];
        let logp = target.logp_grad(&x, &mut grad).unwrap();
        let inv_mass = vec![1.0, 0.7, 1.3];
        let start = Phase { point: Point { x, grad, logp }, p: vec![0.5, -0.2, 0.9] };
        let eps = 0.1;
        let mut fwd = start.clone();
        for _ in 0..25 {
            fwd = leapfrog(&target, &fwd, eps, &inv_mass).unwrap();
        }
        // Negate momentum, integrate the same number of steps, negate again.
        fwd.p.iter_mut().for_each(|p| *p = -*p);
        let mut back = fwd;
        for _ in 0..25 {
            back = leapfrog(&target, &back, eps, &inv_mass).unwrap();
        }
        for i in 0..3 {
            assert!(
                (back.point.x[i] - start.point.x[i]).abs() < 1e-8,
                "x[{i}] drifted: {} vs {}",
                back.point.x[i],
                start.point.x[i]
            );
            assert!((-back.p[i] - start.p[i]).abs() < 1e-8, "p[{i}] drifted");
        }
    }

    #[test]
    fn energy_error_shrinks_quadratically_with_step() {
        let target = DiagGaussian { vars: vec![1.0; 4] };
        let inv_mass = vec![1.0; 4];
        let mut grad = vec![0.0; 4];
        let x = vec![0.9, -0.4, 0.2, 1.4];
        let logp = target.logp_grad(&x, &mut grad).unwrap();
        let p = vec![0.6, 0.8, -1.1, 0.3];
        let h0 = logp - kinetic(&p, &inv_mass);
        let start = Phase { point: Point { x, grad, logp }, p };

        let energy_err = |eps: f64| -> f64 {
            // Integrate to the same total time T = 1.6 with step eps.
            let steps = (1.6 / eps).round() as usize;
            let mut z = start.clone();
            for _ in 0..steps {
                z = leapfrog(&target, &z, eps, &inv_mass).unwrap();
            }
            let h = z.point.logp - kinetic(&z.p, &inv_mass);
            (h - h0).abs()
        };
        let coarse = energy_err(0.2);
        let fine = energy_err(0.1);
        let finer = energy_err(0.05);
        assert!(coarse / fine >= 3.5, "halving 0.2->0.1: {coarse} vs {fine}");
        assert!(fine / finer >= 3.5, "halving 0.1->0.05: {fine} vs {finer}");
    }

    #[test]
    fn find_reasonable_step_is_positive_and_moderate() {
        let target = DiagGaussian { vars: vec![1.0; 10] };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut grad = vec![0.0; 10];
        let x = vec![0.1; 10];
        let logp = target.logp_grad(&x, &mut grad).unwrap();
        let point = Point { x, grad, logp };
        let eps = find_reasonable_step(&target, &point, &vec![1.0; 10], &mut rng).unwrap();
        assert!(eps > 0.01 && eps < 10.0, "eps {eps}");
    }

    #[test]
    fn same_seed_reproduces_draws_bit_for_bit() {
        let target = Corr2 { r: 0.3 };
        let settings = NutsSettings {
            n_chains: 2,
            n_warmup: 100,
            n_samples: 50,
            seed: 42,
            ..NutsSettings::default()
        };
        let a = nuts_sample(&target, &[0.0, 0.0], &settings).unwrap();
        let b = nuts_sample(&target, &[0.0, 0.0], &settings).unwrap();
        for c in 0..2 {
            assert_eq!(a.draws[c], b.draws[c]);
            assert_eq!(a.step_size[c], b.step_size[c]);
        }
        // Different seeds decorrelate.
        let settings_b = NutsSettings { seed: 43, ..settings };
        let c = nuts_sample(&target, &[0.0, 0.0], &settings_b).unwrap();
        assert_ne!(a.draws[0], c.draws[0]);
    }

    #[test]
    fn recovers_mean_and_correlation_of_correlated_gaussian() {
        let target = Corr2 { r: 0.9 };
        let settings = NutsSettings {
            n_chains: 2,
            n_warmup: 500,
            n_samples: 1500,
            seed: 7,
            ..NutsSettings::default()
        };
        let out = nuts_sample(&target, &[0.5, -0.5], &settings).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for c in 0..out.n_chains {
            for s in 0..out.n_samples {
                xs.push(out.draws[c][(s, 0)]);
                ys.push(out.draws[c][(s, 1)]);
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
        let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
        let cxy = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / n;
        let corr = cxy / (vx * vy).sqrt();
        assert!(mx.abs() < 0.12, "mean x {mx}");
        assert!(my.abs() < 0.12, "mean y {my}");
        assert!((corr - 0.9).abs() < 0.05, "correlation {corr}");
        assert_eq!(out.total_divergences(), 0);
    }

    #[test]
    fn mass_adaptation_tracks_scale_spread() {
        let vars = vec![0.01, 0.1, 1.0, 10.0, 100.0];
        let target = DiagGaussian { vars: vars.clone() };
        let settings = NutsSettings {
            n_chains: 1,
            n_warmup: 600,
            n_samples: 200,
            seed: 11,
            ..NutsSettings::default()
        };
        let out = nuts_sample(&target, &[0.0; 5], &settings).unwrap();
        for (i, (&est, &truth)) in out.inv_mass[0].iter().zip(&vars).enumerate() {
            let ratio = est / truth;
            assert!(
                (1.0 / 3.0..3.0).contains(&ratio),
                "inv mass {i}: estimated {est}, true {truth}"
            );
        }
    }

    #[test]
    fn invalid_regions_mark_divergences_but_keep_sampling() {
        let target = Clipped;
        let settings = NutsSettings {
            n_chains: 1,
            n_warmup: 200,
            n_samples: 500,
            seed: 19,
            init_step_size: Some(1.5),
            ..NutsSettings::default()
        };
        let out = nuts_sample(&target, &[0.0], &settings).unwrap();
        // All kept draws stay inside the valid box.
        for s in 0..out.n_samples {
            assert!(out.draws[0][(s, 0)].abs() <= 4.0);
        }
    }

    #[test]
    fn bad_initial_point_is_an_error() {
        let target = Clipped;
        let settings = NutsSettings { n_chains: 1, ..NutsSettings::default() };
        let err = nuts_sample(&target, &[100.0], &settings).unwrap_err();
        assert!(err.to_string().contains("invalid initial log density")
            || err.to_string().contains("invalid log density"));
    }
}
