//! ADAM local search, seeded trials and success-rate experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{LiftedObjective, Problem};
use crate::tensor::{best_rank1_projection, dot, rank1_power, DenseTensor, ProjectionConfig};

/// Distance threshold `‖w - z^{⊗l}‖_F` for a successful trial.
pub const SUCCESS_RADIUS: f64 = 0.05;
pub const DEFAULT_INIT_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Record every k-th iterate; 0 keeps only the terminal point.
    pub record_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            max_iters: 10_000,
            grad_tol: 1e-8,
            record_every: 1,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.eps_hat >= 0.0) || !(self.grad_tol >= 0.0) {
            return bad("eps_hat and grad_tol must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamStep {
    pub iter: usize,
    pub loss: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamRun {
    pub point: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    /// Number of gradient evaluations.
    pub iters: usize,
    pub converged: bool,
    pub trajectory: Vec<AdamStep>,
}

/// Bias-corrected ADAM on `grad_fn: x -> (loss, ∇loss)`.
///
/// Iteration `t` evaluates the loss at the current point, records it, and
/// stops before stepping if the gradient norm is at most `grad_tol`. The
/// terminal point is always the last recorded step.
pub fn run_adam<F>(mut grad_fn: F, x0: &[f64], cfg: &AdamConfig) -> Result<AdamRun>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "initial point must be finite".into(),
        ));
    }
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut trajectory = Vec::new();
    let mut b1t = 1.0;
    let mut b2t = 1.0;

    for t in 1..=cfg.max_iters {
        let (loss, g) = grad_fn(&x)?;
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iter: t });
        }
        let grad_norm = dot(&g, &g).sqrt();
        let converged = grad_norm <= cfg.grad_tol;
        let last = converged || t == cfg.max_iters;
        if last || (cfg.record_every > 0 && (t - 1) % cfg.record_every == 0) {
            trajectory.push(AdamStep {
                iter: t,
                loss,
                point: x.clone(),
            });
        }
        if last {
            return Ok(AdamRun {
                point: x,
                loss,
                grad_norm,
                iters: t,
                converged,
                trajectory,
            });
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for i in 0..dim {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            x[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_hat);
        }
    }
    unreachable!("max_iters >= 1 returns inside the loop")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub adam: AdamConfig,
    /// Standard deviation of the i.i.d. Gaussian initialization.
    pub init_sigma: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            init_sigma: DEFAULT_INIT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStep {
    pub iter: usize,
    pub loss: f64,
    pub iterate: DenseTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub l: usize,
    pub steps: Vec<TrialStep>,
    pub terminal: DenseTensor,
    pub terminal_loss: f64,
    /// Distance from the terminal point to the nearest accepted target.
    pub distance: f64,
    pub success: bool,
    pub iters_used: usize,
    /// Set when the run hit a non-finite loss; such trials are failures.
    pub diverged: bool,
}

/// Distance to `z^{⊗l}`, or to either of `±z^{⊗l}` when `l` is odd.
pub fn success_distance(p: &Problem, w: &DenseTensor) -> Result<f64> {
    let l = w.order();
    let target = rank1_power(p.z().as_slice(), l)?;
    let plus = w.sub(&target)?.frobenius_norm();
    if l % 2 == 1 {
        let minus = w.add_scaled(1.0, &target)?.frobenius_norm();
        Ok(plus.min(minus))
    } else {
        Ok(plus)
    }
}

/// One ADAM run on `h^l` from `N(0, init_sigma²)` entries drawn with
/// `ChaCha8Rng::seed_from_u64(seed)`.
pub fn run_trial(p: &Problem, l: usize, seed: u64, cfg: &TrialConfig) -> Result<TrialRecord> {
    if !(cfg.init_sigma > 0.0) {
        return Err(Error::InvalidArgument("init_sigma must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0 = DenseTensor::gaussian(l, p.n(), cfg.init_sigma, &mut rng)?;
    let objective = LiftedObjective::new(p, l)?;
    match run_adam(|x| objective.value_grad(x), w0.data(), &cfg.adam) {
        Ok(run) => {
            let steps = run
                .trajectory
                .into_iter()
                .map(|s| {
                    Ok(TrialStep {
                        iter: s.iter,
                        loss: s.loss,
                        iterate: DenseTensor::new(l, p.n(), s.point)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let terminal = DenseTensor::new(l, p.n(), run.point)?;
            let distance = success_distance(p, &terminal)?;
            Ok(TrialRecord {
                seed,
                l,
                steps,
                terminal,
                terminal_loss: run.loss,
                distance,
                success: distance <= SUCCESS_RADIUS,
                iters_used: run.iters,
                diverged: false,
            })
        }
        Err(Error::NonFinite { iter }) => Ok(TrialRecord {
            seed,
            l,
            steps: Vec::new(),
            terminal: w0,
            terminal_loss: f64::NAN,
            distance: f64::INFINITY,
            success: false,
            iters_used: iter,
            diverged: true,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub l: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Sorted by seed.
    pub records: Vec<TrialRecord>,
}

/// Runs trials with seeds `base_seed .. base_seed + n_trials`, possibly in
/// parallel; the output does not depend on scheduling.
pub fn success_rate(
    p: &Problem,
    l: usize,
    n_trials: usize,
    base_seed: u64,
    cfg: &TrialConfig,
) -> Result<SuccessRate> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let mut records = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(p, l, base_seed.wrapping_add(i), cfg))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.seed);
    let successes = records.iter().filter(|r| r.success).count();
    Ok(SuccessRate {
        l,
        trials: n_trials,
        successes,
        rate: successes as f64 / n_trials as f64,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedStep {
    pub iter: usize,
    pub loss: f64,
    pub point: Vec<f64>,
    /// `‖w - point^{⊗l}‖_F`; zero for order-1 iterates.
    pub residual: f64,
    pub converged: bool,
}

/// Maps each recorded iterate to a vector in `R^n`: order-1 iterates are
/// returned as is, higher orders through their best rank-1 projection.
/// Consecutive points are sign-aligned when the sign is free (even `l`).
pub fn project_trajectory(rec: &TrialRecord, cfg: &ProjectionConfig) -> Result<Vec<ProjectedStep>> {
    if rec.steps.is_empty() {
        return Err(Error::InvalidArgument("trial has no recorded steps".into()));
    }
    let mut out: Vec<ProjectedStep> = Vec::with_capacity(rec.steps.len());
    for step in &rec.steps {
        let w = &step.iterate;
        let (mut point, residual, converged) = if w.order() == 1 {
            (w.data().to_vec(), 0.0, true)
        } else if w.is_zero() {
            (vec![0.0; w.dim()], 0.0, true)
        } else {
            let proj = best_rank1_projection(w, cfg)?;
            (
                proj.vector.iter().copied().collect(),
                proj.residual,
                proj.converged,
            )
        };
        if w.order() % 2 == 0 {
            if let Some(prev) = out.last() {
                let same: f64 = point
                    .iter()
                    .zip(&prev.point)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                let flipped: f64 = point
                    .iter()
                    .zip(&prev.point)
                    .map(|(a, b)| (a + b).powi(2))
                    .sum();
                if flipped < same {
                    point.iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
        out.push(ProjectedStep {
            iter: step.iter,
            loss: step.loss,
            point,
            residual,
            converged,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        let cfg = AdamConfig {
            max_iters: 2000,
            grad_tol: 0.0,
            record_every: 0,
            ..AdamConfig::default()
        };
        let run = run_adam(
            |x| Ok((dot(x, x), x.iter().map(|v| 2.0 * v).collect())),
            &[1.0, 1.0],
            &cfg,
        )
        .unwrap();
        assert!(
            dot(&run.point, &run.point).sqrt() <= 1e-4,
            "{:?}",
            run.point
        );
        assert_eq!(run.trajectory.len(), 1);
    }

    #[test]
    fn adam_stops_immediately_on_zero_gradient() {
        let run = run_adam(
            |_| Ok((1.0, vec![0.0, 0.0])),
            &[0.3, -0.2],
            &AdamConfig::default(),
        )
        .unwrap();
        assert_eq!(run.point, vec![0.3, -0.2]);
        assert_eq!(run.iters, 1);
        assert!(run.converged);
    }

    #[test]
    fn adam_flags_non_finite_loss() {
        let err = run_adam(
            |_| Ok((f64::NAN, vec![1.0])),
            &[0.0],
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { iter: 1 }));
    }

    #[test]
    fn adam_records_every_kth_step_plus_terminal() {
        let cfg = AdamConfig {
            max_iters: 10,
            grad_tol: 0.0,
            record_every: 4,
            ..AdamConfig::default()
        };
        let run = run_adam(
            |x| Ok((dot(x, x), x.iter().map(|v| 2.0 * v).collect())),
            &[1.0],
            &cfg,
        )
        .unwrap();
        let iters: Vec<usize> = run.trajectory.iter().map(|s| s.iter).collect();
        assert_eq!(iters, vec![1, 5, 9, 10]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            AdamConfig {
                lr: 0.0,
                ..AdamConfig::default()
            },
            AdamConfig {
                beta1: 1.0,
                ..AdamConfig::default()
            },
            AdamConfig {
                max_iters: 0,
                ..AdamConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn unlifted_adam_from_near_spurious_point_stays_spurious() {
        let p = Problem::benchmark(3, 0.3).unwrap();
        let cfg = AdamConfig {
            record_every: 0,
            ..AdamConfig::default()
        };
        let x0 = [0.9, 0.01, -0.9];
        let objective = LiftedObjective::new(&p, 1).unwrap();
        let run = run_adam(|x| objective.value_grad(x), &x0, &cfg).unwrap();
        assert!(run.loss > 0.1, "loss {}", run.loss);
        assert!(run.point[0] > 0.8 && run.point[2] < -0.8);
    }

    #[test]
    fn trials_are_deterministic() {
        let p = Problem::benchmark(3, 0.3).unwrap();
        let cfg = TrialConfig {
            adam: AdamConfig {
                max_iters: 300,
                record_every: 50,
                ..AdamConfig::default()
            },
            ..TrialConfig::default()
        };
        let a = run_trial(&p, 2, 9, &cfg).unwrap();
        let b = run_trial(&p, 2, 9, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(run_trial(
            &p,
            2,
            9,
            &TrialConfig {
                init_sigma: 0.0,
                ..cfg
            }
        )
        .is_err());
    }

    #[test]
    fn success_accepts_both_signs_for_odd_orders_only() {
        let p = Problem::benchmark(3, 0.3).unwrap();
        let z: Vec<f64> = p.z().iter().copied().collect();
        let mz: Vec<f64> = z.iter().map(|v| -v).collect();
        assert_eq!(
            success_distance(&p, &rank1_power(&mz, 3).unwrap()).unwrap(),
            0.0
        );
        let neg_even = rank1_power(&z, 2).unwrap().scaled(-1.0);
        assert!(success_distance(&p, &neg_even).unwrap() > 1.0);
    }

    #[test]
    fn projection_of_order_one_trajectory_is_identity() {
        let p = Problem::benchmark(3, 0.3).unwrap();
        let cfg = TrialConfig {
            adam: AdamConfig {
                max_iters: 50,
                record_every: 10,
                ..AdamConfig::default()
            },
            ..TrialConfig::default()
        };
        let rec = run_trial(&p, 1, 3, &cfg).unwrap();
        let proj = project_trajectory(&rec, &ProjectionConfig::default()).unwrap();
        for (s, q) in rec.steps.iter().zip(&proj) {
            assert_eq!(s.iterate.data(), q.point.as_slice());
        }
    }
}
