//! Closed-form bounds for second-order points of the unlifted problem and the
//! lift order that turns a spurious one into a saddle.
//!
//! Every check takes smoothness and convexity constants `(L, α)` from the
//! caller. The defaults are the global extreme eigenvalues of the sensing
//! Gram form, which bound the restricted constants from outside
//! (`L ≥ L_s`, `α ≤ α_s`). Each check below notes why it stays sound under
//! that substitution.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{
    classify_unlifted, escape_direction, Classification, OrderCurvature, Tolerances,
};
use crate::objective::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    #[serde(rename = "L")]
    pub l_smooth: f64,
    pub alpha: f64,
}

impl Constants {
    /// Global surrogates from the operator spectrum.
    pub fn surrogate(p: &Problem) -> Self {
        let c = p.op().spectrum_constants();
        Self {
            l_smooth: c.l_global,
            alpha: c.alpha_global,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.l_smooth >= self.alpha) || !self.l_smooth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need 0 < alpha <= L < inf, got alpha = {}, L = {}",
                self.alpha, self.l_smooth
            )));
        }
        Ok(())
    }
}

/// Squared distance `‖M* - x̂x̂ᵀ‖²_F` and `‖x̂‖²`.
fn geometry(p: &Problem, xhat: &[f64]) -> Result<(f64, f64)> {
    let x = DVector::from_column_slice(xhat);
    crate::error::ensure_len("point", p.n(), x.len())?;
    let dist_sq = (p.mstar() - &x * x.transpose()).norm_squared();
    Ok((dist_sq, x.norm_squared()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftOrder {
    pub beta: f64,
    /// `2β`, the normalization used inside the escape argument.
    pub gamma: f64,
    /// `None` stands for `+∞` (when `β ≥ 1`).
    pub l_threshold: Option<f64>,
    /// Smallest odd integer strictly above the threshold.
    pub min_odd_l: Option<usize>,
}

/// `l_threshold = 1 / (1 - log₂(2β))` for `β < 1`, else `+∞`.
pub fn lift_order_from_beta(beta: f64) -> LiftOrder {
    let l_threshold = if beta < 1.0 {
        if beta <= 0.0 {
            Some(0.0)
        } else {
            Some(1.0 / (1.0 - (2.0 * beta).log2()))
        }
    } else {
        None
    };
    let min_odd_l = l_threshold.map(|t| {
        let mut l = t.floor() as usize + 1;
        if l.is_multiple_of(2) {
            l += 1;
        }
        l
    });
    LiftOrder {
        beta,
        gamma: 2.0 * beta,
        l_threshold,
        min_odd_l,
    }
}

/// `β = L·tr(M*)·‖x̂‖² / (α·‖M* - x̂x̂ᵀ‖²_F)` and the lift order it implies.
///
/// Larger `L/α` only increases `β`, so surrogate constants give a
/// conservative (larger) order.
pub fn beta_and_l_threshold(p: &Problem, xhat: &[f64], c: Constants) -> Result<LiftOrder> {
    c.validate()?;
    let (dist_sq, xnorm_sq) = geometry(p, xhat)?;
    if dist_sq == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let trace = p.z().norm_squared();
    Ok(lift_order_from_beta(
        c.l_smooth * trace * xnorm_sq / (c.alpha * dist_sq),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `‖M* - x̂x̂ᵀ‖²_F ≥ (L/α)·‖x̂‖²·tr(M*)`.
///
/// With surrogates the right side can only grow, so `holds = true` remains
/// valid for the restricted constants.
pub fn check_distance_condition(
    p: &Problem,
    xhat: &[f64],
    c: Constants,
) -> Result<DistanceCondition> {
    c.validate()?;
    let (lhs, xnorm_sq) = geometry(p, xhat)?;
    let rhs = c.l_smooth / c.alpha * xnorm_sq * p.z().norm_squared();
    Ok(DistanceCondition {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBounds {
    /// `4Lα/(L+α)²·‖z‖²`; only second-order points within this distance of
    /// `M*` can be global, and it shrinks as `L/α` grows.
    pub local_region_radius: f64,
    /// `2√2·α^{5/2} / ((L+α)²·√L)`.
    pub corollary_rhs: f64,
}

pub fn region_bounds(p: &Problem, c: Constants) -> Result<RegionBounds> {
    c.validate()?;
    let (l, a) = (c.l_smooth, c.alpha);
    let s = (l + a) * (l + a);
    Ok(RegionBounds {
        local_region_radius: 4.0 * l * a / s * p.z().norm_squared(),
        corollary_rhs: 2.0 * std::f64::consts::SQRT_2 * a.powf(2.5) / (s * l.sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaBounds {
    /// `-λ_min(∇f(x̂x̂ᵀ))`.
    #[serde(rename = "G")]
    pub g: f64,
    /// `L·‖x̂‖²`; an upper bound for `G` since `L ≥ L_s`.
    #[serde(rename = "G_upper")]
    pub g_upper: f64,
    /// `α·dist² / (2·tr(M*))`; a lower bound for `G` since `α ≤ α_s`.
    #[serde(rename = "G_lower")]
    pub g_lower: f64,
    pub xhat_norm_sq: f64,
    /// `√(2L/α)·‖M*‖_F`; grows with `L/α`, so the bound only loosens.
    pub xhat_norm_bound: f64,
    pub upper_holds: bool,
    pub lower_holds: bool,
    pub norm_holds: bool,
    pub all_hold: bool,
}

/// Evaluates the three bounds at a second-order point `x̂`.
pub fn lemma_bounds(
    p: &Problem,
    xhat: &[f64],
    c: Constants,
    tol: Tolerances,
) -> Result<LemmaBounds> {
    c.validate()?;
    let report = classify_unlifted(p, xhat, tol)?;
    match report.classification {
        Classification::Sop => {}
        Classification::NotCritical => {
            return Err(Error::NotCritical {
                grad_norm: report.grad_norm,
                tol: report.tol_grad,
            })
        }
        Classification::FopOnly => {
            return Err(Error::NotSecondOrder {
                min_eig: report.min_eig,
            })
        }
    }
    let (dist_sq, xnorm_sq) = geometry(p, xhat)?;
    let gf = p.grad_f(xhat)?;
    let min_eig = gf
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let g = (-min_eig).max(0.0);
    let g_upper = c.l_smooth * xnorm_sq;
    let g_lower = c.alpha * dist_sq / (2.0 * p.z().norm_squared());
    let xhat_norm_bound = (2.0 * c.l_smooth / c.alpha).sqrt() * p.mstar().norm();
    // G is measured on a polished point; allow round-off at the boundary
    let slack = 1e-9 * (1.0 + g_upper);
    let upper_holds = g <= g_upper + slack;
    let lower_holds = g >= g_lower - slack;
    let norm_holds = xnorm_sq < xhat_norm_bound;
    Ok(LemmaBounds {
        g,
        g_upper,
        g_lower,
        xhat_norm_sq: xnorm_sq,
        xhat_norm_bound,
        upper_holds,
        lower_holds,
        norm_holds,
        all_hold: upper_holds && lower_holds && norm_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub point: Vec<f64>,
    #[serde(rename = "L")]
    pub l_smooth: f64,
    pub alpha: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub dist_sq: f64,
    pub xhat_norm_sq: f64,
    pub trace_mstar: f64,
    pub beta: f64,
    pub gamma: f64,
    pub l_threshold: Option<f64>,
    pub min_odd_l: Option<usize>,
    pub distance_condition_holds: bool,
    pub distance_lhs: f64,
    pub distance_rhs: f64,
    pub local_region_radius: f64,
    /// `‖x̂x̂ᵀ - M*‖_F > local_region_radius`.
    pub violates_local_region: bool,
    pub corollary_bound_rhs: f64,
    pub lemma: LemmaBounds,
    /// Curvature along `u^{⊗l}` for each evaluated order.
    pub escape_curvature: Vec<OrderCurvature>,
}

/// Every quantity above for one spurious second-order point, plus the
/// escape-direction curvature for the given orders.
pub fn bound_report(
    p: &Problem,
    xhat: &[f64],
    c: Constants,
    orders: &[usize],
    tol: Tolerances,
) -> Result<BoundReport> {
    let lift = beta_and_l_threshold(p, xhat, c)?;
    let dist = check_distance_condition(p, xhat, c)?;
    let region = region_bounds(p, c)?;
    let lemma = lemma_bounds(p, xhat, c, tol)?;
    let escape = escape_direction(p, xhat, orders, tol.grad)?;
    Ok(BoundReport {
        point: xhat.to_vec(),
        l_smooth: c.l_smooth,
        alpha: c.alpha,
        g: lemma.g,
        dist_sq: dist.lhs,
        xhat_norm_sq: lemma.xhat_norm_sq,
        trace_mstar: p.z().norm_squared(),
        beta: lift.beta,
        gamma: lift.gamma,
        l_threshold: lift.l_threshold,
        min_odd_l: lift.min_odd_l,
        distance_condition_holds: dist.holds,
        distance_lhs: dist.lhs,
        distance_rhs: dist.rhs,
        local_region_radius: region.local_region_radius,
        violates_local_region: dist.lhs.sqrt() > region.local_region_radius,
        corollary_bound_rhs: region.corollary_rhs,
        lemma,
        escape_curvature: escape.curvature,
    })
}
