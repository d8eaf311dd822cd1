//! Critical points of `h` and `h^l`: gradient norms, smallest Hessian
//! eigenpairs, classification, escape directions and multi-start search.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::objective::{
    h_grad, h_hess, h_value, hl_grad, hl_hess_dense, hl_hvp, hl_hvp_operator, Problem,
};
use crate::optimize::{run_adam, AdamConfig};
use crate::tensor::{canonical_sign, dot, rank1_power, DenseTensor};

/// Largest Hessian dimension handled by the dense eigensolver.
pub const DENSE_EIG_LIMIT: usize = 512;
pub const SOP_MERGE_RADIUS: f64 = 1e-4;
const PINV_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    /// Unit eigenvector.
    pub vector: Vec<f64>,
    /// `‖Hv - λv‖`.
    pub residual: f64,
    /// Operator-norm estimate used to scale the residual test.
    pub norm_estimate: f64,
}

/// A symmetric operator, either as an explicit matrix or as a product
/// closure of known dimension.
pub enum SymmetricInput<'a> {
    Dense(&'a DMatrix<f64>),
    Operator {
        dim: usize,
        apply: &'a dyn Fn(&[f64]) -> Vec<f64>,
    },
}

/// Smallest eigenvalue and a unit eigenvector.
///
/// Dense input goes through a full symmetric eigendecomposition. Operators
/// use restarted Lanczos with full reorthogonalization and fail with
/// [`Error::NotConverged`] when `‖Hv - λv‖ > tol·‖H‖` after the budget.
pub fn min_eigenpair(input: SymmetricInput<'_>, tol: f64) -> Result<EigenPair> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eigen tolerance must be positive, got {tol}"
        )));
    }
    match input {
        SymmetricInput::Dense(h) => dense_min_eigenpair(h),
        SymmetricInput::Operator { dim, apply } => {
            lanczos_min_eigenpair(dim, apply, tol, LanczosBudget::default())
        }
    }
}

fn dense_min_eigenpair(h: &DMatrix<f64>) -> Result<EigenPair> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "expected a nonempty square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    // symmetrize away round-off from HVP assembly
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (k, &value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let mut vector: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    canonical_sign(&mut vector);
    let v = DVector::from_column_slice(&vector);
    let residual = (h * &v - &v * value).norm();
    let norm_estimate = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(EigenPair {
        value,
        vector,
        residual,
        norm_estimate,
    })
}

#[derive(Debug, Clone, Copy)]
struct LanczosBudget {
    krylov: usize,
    restarts: usize,
    seed: u64,
}

impl Default for LanczosBudget {
    fn default() -> Self {
        Self {
            krylov: 60,
            restarts: 300,
            seed: 0x1a2c05,
        }
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes keep the basis orthogonal to working precision
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn lanczos_min_eigenpair(
    dim: usize,
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    budget: LanczosBudget,
) -> Result<EigenPair> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "operator dimension must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut random_unit = |basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..10 {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            orthogonalize(&mut v, basis);
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                return Some(v);
            }
        }
        None
    };
    let k = budget.krylov.min(dim);
    let mut start = random_unit(&[]).expect("random vector in dimension >= 1");
    let mut norm_estimate = 0.0f64;
    let mut best_residual = f64::INFINITY;

    for _ in 0..budget.restarts {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut alpha = Vec::with_capacity(k);
        let mut beta: Vec<f64> = Vec::with_capacity(k);
        basis.push(start.clone());
        loop {
            let j = basis.len() - 1;
            let mut w = apply(&basis[j]);
            ensure_len("operator output", dim, w.len())?;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            orthogonalize(&mut w, &basis);
            if basis.len() == k {
                break;
            }
            let b = dot(&w, &w).sqrt();
            let scale = alpha.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
            if b > 1e-12 * scale {
                w.iter_mut().for_each(|x| *x /= b);
                beta.push(b);
                basis.push(w);
            } else {
                // invariant subspace: continue with a fresh direction
                match random_unit(&basis) {
                    Some(v) => {
                        beta.push(0.0);
                        basis.push(v);
                    }
                    None => break,
                }
            }
        }
        let size = basis.len();
        let mut t = DMatrix::zeros(size, size);
        for i in 0..size {
            t[(i, i)] = alpha[i];
            if i + 1 < size {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (idx, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        norm_estimate = eig
            .eigenvalues
            .iter()
            .fold(norm_estimate, |a, b| a.max(b.abs()));
        let s = eig.eigenvectors.column(idx);
        let mut ritz = vec![0.0; dim];
        for (coef, q) in s.iter().zip(&basis) {
            ritz.iter_mut().zip(q).for_each(|(x, y)| *x += coef * y);
        }
        let norm = dot(&ritz, &ritz).sqrt();
        ritz.iter_mut().for_each(|x| *x /= norm);
        let hv = apply(&ritz);
        let residual = hv
            .iter()
            .zip(&ritz)
            .map(|(a, b)| (a - theta * b).powi(2))
            .sum::<f64>()
            .sqrt();
        best_residual = best_residual.min(residual);
        if residual <= tol * norm_estimate.max(f64::MIN_POSITIVE) || size == dim {
            canonical_sign(&mut ritz);
            return Ok(EigenPair {
                value: theta,
                vector: ritz,
                residual,
                norm_estimate,
            });
        }
        start = ritz;
    }
    Err(Error::NotConverged {
        solver: "lanczos",
        iterations: budget.restarts,
        residual: best_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    NotCritical,
    /// First-order point with a direction of negative curvature.
    FopOnly,
    Sop,
}

/// Overrides for the classification tolerances; `None` picks the defaults
/// `1e-7·(1+‖b‖)` and `1e-6·(1+‖H‖_F)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub grad: Option<f64>,
    pub eig: Option<f64>,
}

pub fn default_tol_grad(p: &Problem) -> f64 {
    1e-7 * (1.0 + p.b().norm())
}

pub fn default_tol_eig(hess_fro: f64) -> f64 {
    1e-6 * (1.0 + hess_fro)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub grad_norm: f64,
    pub min_eig: f64,
    pub min_eigvec: Vec<f64>,
    pub classification: Classification,
    pub tol_grad: f64,
    pub tol_eig: f64,
}

impl LandscapeReport {
    pub fn from_parts(grad_norm: f64, pair: EigenPair, tol_grad: f64, tol_eig: f64) -> Self {
        let classification = if grad_norm > tol_grad {
            Classification::NotCritical
        } else if pair.value >= -tol_eig {
            Classification::Sop
        } else {
            Classification::FopOnly
        };
        Self {
            grad_norm,
            min_eig: pair.value,
            min_eigvec: pair.vector,
            classification,
            tol_grad,
            tol_eig,
        }
    }
}

/// Hutchinson estimate of `‖H‖_F` from Rademacher probes.
fn frobenius_estimate(dim: usize, apply: &dyn Fn(&[f64]) -> Vec<f64>) -> f64 {
    const PROBES: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(0xf20b);
    let mut acc = 0.0;
    for _ in 0..PROBES {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                if rand::Rng::random::<bool>(&mut rng) {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let hv = apply(&v);
        acc += dot(&hv, &hv);
    }
    (acc / PROBES as f64).sqrt()
}

/// Classifies `w` as a critical point of `h^l`.
///
/// Uses the dense Hessian when `n^l ≤ 512`, Lanczos on Hessian-vector
/// products otherwise (where `‖H‖_F` in the default eigen tolerance is a
/// Hutchinson estimate).
pub fn classify(
    p: &Problem,
    l: usize,
    w: &DenseTensor,
    tol: Tolerances,
) -> Result<LandscapeReport> {
    let grad_norm = hl_grad(p, l, w)?.frobenius_norm();
    let tol_grad = tol.grad.unwrap_or_else(|| default_tol_grad(p));
    let dim = w.len();
    if dim <= DENSE_EIG_LIMIT {
        let h = hl_hess_dense(p, l, w, DENSE_EIG_LIMIT)?;
        let tol_eig = tol.eig.unwrap_or_else(|| default_tol_eig(h.norm()));
        let pair = min_eigenpair(SymmetricInput::Dense(&h), 1e-10)?;
        Ok(LandscapeReport::from_parts(
            grad_norm, pair, tol_grad, tol_eig,
        ))
    } else {
        let hvp = hl_hvp_operator(p, l, w)?;
        let tol_eig = tol
            .eig
            .unwrap_or_else(|| default_tol_eig(frobenius_estimate(dim, &hvp)));
        let pair = min_eigenpair(SymmetricInput::Operator { dim, apply: &hvp }, 1e-8)?;
        Ok(LandscapeReport::from_parts(
            grad_norm, pair, tol_grad, tol_eig,
        ))
    }
}

/// Classifies an unlifted point using the closed-form Hessian of `h`.
pub fn classify_unlifted(p: &Problem, x: &[f64], tol: Tolerances) -> Result<LandscapeReport> {
    let grad_norm = h_grad(p, x)?.norm();
    let h = h_hess(p, x)?;
    let tol_grad = tol.grad.unwrap_or_else(|| default_tol_grad(p));
    let tol_eig = tol.eig.unwrap_or_else(|| default_tol_eig(h.norm()));
    let pair = dense_min_eigenpair(&h)?;
    Ok(LandscapeReport::from_parts(
        grad_norm, pair, tol_grad, tol_eig,
    ))
}

/// Lifted directional curvature `⟨∇²h^l(x̂^{⊗l})[u^{⊗l}], u^{⊗l}⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderCurvature {
    pub l: usize,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeDirection {
    /// Unit eigenvector of `∇f(x̂x̂ᵀ)` for its smallest eigenvalue.
    pub u: Vec<f64>,
    pub grad_f_min_eig: f64,
    /// `|⟨u, x̂⟩|`.
    pub overlap: f64,
    /// One entry per requested order that fits the compute cap.
    pub curvature: Vec<OrderCurvature>,
}

/// Lifted rank-1 escape direction `u^{⊗l}` at an unlifted first-order point.
///
/// Orders whose lifted products exceed the compute cap are skipped.
pub fn escape_direction(
    p: &Problem,
    xhat: &[f64],
    orders: &[usize],
    tol_grad: Option<f64>,
) -> Result<EscapeDirection> {
    let grad_norm = h_grad(p, xhat)?.norm();
    let tol = tol_grad.unwrap_or_else(|| default_tol_grad(p));
    if grad_norm > tol {
        return Err(Error::NotCritical { grad_norm, tol });
    }
    let gf = p.grad_f(xhat)?;
    let pair = dense_min_eigenpair(&gf)?;
    let overlap = dot(&pair.vector, xhat).abs();
    let mut curvature = Vec::with_capacity(orders.len());
    for &l in orders {
        let w = rank1_power(xhat, l)?;
        let d = rank1_power(&pair.vector, l)?;
        match hl_hvp(p, l, &w, &d) {
            Ok(hd) => curvature.push(OrderCurvature {
                l,
                curvature: hd.inner(&d)?,
            }),
            Err(Error::CapExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(EscapeDirection {
        u: pair.vector,
        grad_f_min_eig: pair.value,
        overlap,
        curvature,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Sign-canonical point.
    pub point: Vec<f64>,
    pub h_value: f64,
    pub report: LandscapeReport,
}

impl CriticalPoint {
    /// Whether `x x^T` reproduces `M*` to relative accuracy `1e-6`.
    pub fn is_global(&self, p: &Problem) -> bool {
        let x = DVector::from_column_slice(&self.point);
        let mstar = p.mstar();
        (&x * x.transpose() - &mstar).norm() <= 1e-6 * mstar.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SopSearch {
    /// Distinct second-order points, sorted by `h`.
    pub sops: Vec<CriticalPoint>,
    /// Distinct strict saddles reached by the search, sorted by `h`.
    pub saddles: Vec<CriticalPoint>,
    /// Starts that did not reach a first-order point.
    pub dropped: usize,
}

/// Damped pseudo-inverse Newton iterations driving `‖∇h‖` to zero.
fn newton_polish(p: &Problem, x0: &[f64]) -> Result<Vec<f64>> {
    let target = 1e-14 * (1.0 + p.b().norm());
    let mut x = DVector::from_column_slice(x0);
    let mut g = h_grad(p, x.as_slice())?;
    for _ in 0..100 {
        if g.norm() <= target {
            break;
        }
        let eig = SymmetricEigen::new(h_hess(p, x.as_slice())?);
        let coeffs = eig.eigenvectors.transpose() * &g;
        let scaled = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, &lam)| {
                if lam.abs() > PINV_CLAMP {
                    c / lam
                } else {
                    0.0
                }
            }),
        );
        let step = &eig.eigenvectors * scaled;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &x - &step * t;
            let gc = h_grad(p, cand.as_slice())?;
            if gc.norm() < g.norm() {
                x = cand;
                g = gc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(x.iter().copied().collect())
}

fn dedup(mut points: Vec<CriticalPoint>) -> Vec<CriticalPoint> {
    points.sort_by(|a, b| {
        a.h_value.total_cmp(&b.h_value).then_with(|| {
            a.point
                .iter()
                .zip(&b.point)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut kept: Vec<CriticalPoint> = Vec::new();
    for c in points {
        let duplicate = kept.iter().any(|k| {
            k.point
                .iter()
                .zip(&c.point)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                <= SOP_MERGE_RADIUS
        });
        if !duplicate {
            kept.push(c);
        }
    }
    kept
}

/// Multi-start search for second-order points of the unlifted objective.
///
/// Start `i` draws `x0 ~ N(0, I)` from `ChaCha8Rng::seed_from_u64(seed + i)`,
/// runs ADAM on `h`, then Newton polish. Points are merged up to sign within
/// [`SOP_MERGE_RADIUS`].
pub fn find_sops(
    p: &Problem,
    n_starts: usize,
    cfg: &AdamConfig,
    seed: u64,
    tol: Tolerances,
) -> Result<SopSearch> {
    if n_starts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    let cfg = AdamConfig {
        record_every: 0,
        ..*cfg
    };
    cfg.validate()?;
    let n = p.n();
    let outcomes = (0..n_starts as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<CriticalPoint>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let x0: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let grad_fn = |x: &[f64]| Ok((h_value(p, x)?, h_grad(p, x)?.as_slice().to_vec()));
            let run = match run_adam(grad_fn, &x0, &cfg) {
                Ok(run) => run,
                Err(Error::NonFinite { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut x = newton_polish(p, &run.point)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Ok(None);
            }
            canonical_sign(&mut x);
            let report = classify_unlifted(p, &x, tol)?;
            if report.classification == Classification::NotCritical {
                return Ok(None);
            }
            Ok(Some(CriticalPoint {
                h_value: h_value(p, &x)?,
                point: x,
                report,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    let (sops, saddles): (Vec<_>, Vec<_>) = outcomes
        .into_iter()
        .flatten()
        .partition(|c| c.report.classification == Classification::Sop);
    Ok(SopSearch {
        sops: dedup(sops),
        saddles: dedup(saddles),
        dropped,
    })
}
