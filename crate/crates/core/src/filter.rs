//! Robust barrier-function filter for a scalar input.
//!
//! With `c = ∇ψᵀb` the robust barrier condition reads
//! `xi1 |u| + xi2 u <= xi3`. When the learned gain dominates its error bound
//! (`xi1 < |xi2|`) the absolute value collapses into one linear constraint and
//! the minimally deviating input has a closed form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{DynamicsModel, ErrorBound, Posterior};

/// `|∇ψᵀb|` below this counts as zero.
pub const GRAD_B_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FilterError {
    #[error("barrier constraint not certifiably feasible: feasibility ratio {ratio:.6} <= 1")]
    Infeasible { ratio: f64 },
    #[error("grad(psi)'b vanishes but xi3 = {xi3:.6e} < 0")]
    DegenerateGradient { xi3: f64 },
    #[error("c1 = {c1} must be below |c2| = {c2_abs}")]
    AbsPrecondition { c1: f64, c2_abs: f64 },
    #[error("tightened constraint and input box are jointly infeasible (u = {u:.3}, bound {u_bar})")]
    BoxInfeasible { u: f64, u_bar: f64 },
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Barrier `psi`, optional analytic gradient, class-K `alpha` and the known
/// linear part `(A, b)` of the dynamics.
#[derive(Clone)]
pub struct CbfSpec {
    pub psi: StateFn,
    pub grad_psi: Option<GradFn>,
    pub alpha: ScalarFn,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl std::fmt::Debug for CbfSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CbfSpec").field("a", &self.a).field("b", &self.b).finish_non_exhaustive()
    }
}

impl CbfSpec {
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.psi)(x)
    }

    /// Analytic gradient when supplied, otherwise central differences with step 1e-6.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.grad_psi {
            return g(x);
        }
        finite_difference_gradient(&*self.psi, x, 1e-6)
    }

    pub fn alpha(&self, psi: f64) -> f64 {
        (self.alpha)(psi)
    }

    /// `∇ψᵀb`.
    pub fn grad_dot_b(&self, grad: &[f64]) -> f64 {
        grad.iter().zip(self.b.iter()).map(|(g, b)| g * b).sum()
    }

    /// `∇ψᵀ A x`.
    pub fn grad_dot_ax(&self, grad: &[f64], x: &[f64]) -> f64 {
        let ax = &self.a * DVector::from_column_slice(x);
        grad.iter().zip(ax.iter()).map(|(g, v)| g * v).sum()
    }
}

pub fn finite_difference_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            p[j] = x[j] + h;
            let up = f(&p);
            p[j] = x[j] - h;
            let dn = f(&p);
            p[j] = x[j];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// sign with `sign(0) = 0`.
pub fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiTerms {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub xi_s: f64,
    pub grad_dot_b: f64,
}

impl XiTerms {
    pub fn new(xi1: f64, xi2: f64, xi3: f64, grad_dot_b: f64) -> Self {
        Self { xi1, xi2, xi3, xi_s: sign0(xi2 * xi3) * xi1 + xi2, grad_dot_b }
    }

    /// Same terms with `xi3` lowered by `margin`.
    pub fn tightened(&self, margin: f64) -> Self {
        Self::new(self.xi1, self.xi2, self.xi3 - margin, self.grad_dot_b)
    }

    /// `xi1 |u| + xi2 u - xi3`; nonpositive means satisfied.
    pub fn residual(&self, u: f64) -> f64 {
        self.xi1 * u.abs() + self.xi2 * u - self.xi3
    }
}

/// Assemble `xi1..xi3` at `x` from the model posterior.
pub fn xi_terms(cbf: &CbfSpec, model: &dyn DynamicsModel, bound: &ErrorBound, x: &[f64]) -> XiTerms {
    xi_from_posterior(cbf, &model.posterior(x), bound, x)
}

pub(crate) fn xi_from_posterior(cbf: &CbfSpec, post: &Posterior, bound: &ErrorBound, x: &[f64]) -> XiTerms {
    let grad = cbf.gradient(x);
    let c = cbf.grad_dot_b(&grad);
    if c.abs() <= GRAD_B_EPS {
        let xi3 = cbf.alpha(cbf.value(x)) + cbf.grad_dot_ax(&grad, x);
        return XiTerms::new(0.0, 0.0, xi3, c);
    }
    let xi1 = c.abs() * bound.margin_g(post.std_g);
    let xi2 = -c * post.mean_g;
    let xi3 = cbf.alpha(cbf.value(x)) + cbf.grad_dot_ax(&grad, x) + c * post.mean_f
        - c.abs() * bound.margin_f(post.std_f);
    XiTerms::new(xi1, xi2, xi3, c)
}

/// `mu_g / (sqrt(beta_g) max(sigma_g, floor))`; infinite for an exact model.
pub fn feasibility_ratio(model: &dyn DynamicsModel, bound: &ErrorBound, x: &[f64]) -> f64 {
    let p = model.posterior(x);
    ratio_from_posterior(p.mean_g, p.std_g, bound)
}

pub(crate) fn ratio_from_posterior(mean_g: f64, std_g: f64, bound: &ErrorBound) -> f64 {
    let m = bound.margin_g(std_g);
    if m == 0.0 {
        return if mean_g > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    mean_g / m
}

/// Coefficient `k` with `{u : c1|u| + c2 u <= c3} = {u : k u <= c3}`, valid
/// for `0 <= c1 < |c2|`.
pub fn resolve_abs_constraint(c1: f64, c2: f64, c3: f64) -> Result<f64, FilterError> {
    if !(c1 >= 0.0 && c1 < c2.abs()) {
        return Err(FilterError::AbsPrecondition { c1, c2_abs: c2.abs() });
    }
    Ok(sign0(c2 * c3) * c1 + c2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Nominal,
    ClampPositiveSign,
    ClampNegativeSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub u: f64,
    pub branch: Branch,
    pub xi: XiTerms,
    pub gamma_ratio: f64,
}

/// Closed-form argmin of `|u - u_nom|` over `xi1|u| + xi2 u <= xi3` when `xi1 < |xi2|`
/// (or the gradient term vanishes).
pub fn closed_form(xi: &XiTerms, u_nom: f64) -> (f64, Branch) {
    if xi.xi_s * u_nom <= xi.xi3 {
        (u_nom, Branch::Nominal)
    } else if xi.xi2 * xi.xi3 > 0.0 {
        (xi.xi3 / (xi.xi2 + xi.xi1), Branch::ClampPositiveSign)
    } else {
        (xi.xi3 / (xi.xi2 - xi.xi1), Branch::ClampNegativeSign)
    }
}

/// Minimally invasive safe input. Errors when the learned gain does not
/// dominate its error bound, i.e. the closed form is not certified.
pub fn safety_filter(
    cbf: &CbfSpec,
    model: &dyn DynamicsModel,
    bound: &ErrorBound,
    x: &[f64],
    u_nom: f64,
) -> Result<FilterDecision, FilterError> {
    let post = model.posterior(x);
    let xi = xi_from_posterior(cbf, &post, bound, x);
    let ratio = ratio_from_posterior(post.mean_g, post.std_g, bound);
    decide(xi, ratio, u_nom)
}

pub(crate) fn decide(xi: XiTerms, ratio: f64, u_nom: f64) -> Result<FilterDecision, FilterError> {
    if xi.grad_dot_b.abs() <= GRAD_B_EPS {
        if xi.xi3 < 0.0 {
            return Err(FilterError::DegenerateGradient { xi3: xi.xi3 });
        }
        return Ok(FilterDecision { u: u_nom, branch: Branch::Nominal, xi, gamma_ratio: ratio });
    }
    if !(ratio > 1.0) {
        return Err(FilterError::Infeasible { ratio });
    }
    let (u, branch) = closed_form(&xi, u_nom);
    Ok(FilterDecision { u, branch, xi, gamma_ratio: ratio })
}

/// Feasible interval of `xi1|u| + xi2 u <= xi3` (a convex set since `xi1 >= 0`).
/// `None` when empty.
pub fn feasible_interval(xi: &XiTerms) -> Option<(f64, f64)> {
    let inf = f64::INFINITY;
    let (x1, x2, x3) = (xi.xi1, xi.xi2, xi.xi3);
    // u >= 0 half: (x1 + x2) u <= x3
    let a = x1 + x2;
    let pos = if a > 0.0 {
        (x3 >= 0.0).then(|| (0.0, x3 / a))
    } else if a == 0.0 {
        (x3 >= 0.0).then_some((0.0, inf))
    } else {
        Some(((x3 / a).max(0.0), inf))
    };
    // u <= 0 half: (x2 - x1) u <= x3
    let b = x2 - x1;
    let neg = if b < 0.0 {
        (x3 >= 0.0).then(|| (x3 / b, 0.0))
    } else if b == 0.0 {
        (x3 >= 0.0).then_some((-inf, 0.0))
    } else {
        Some((-inf, (x3 / b).min(0.0)))
    };
    match (pos, neg) {
        (Some(p), Some(n)) => Some((n.0.min(p.0), p.1.max(n.1))),
        (Some(p), None) => Some(p),
        (None, Some(n)) => Some(n),
        (None, None) => None,
    }
}

/// Projection of `u_nom` onto the exact feasible set, without the dominance
/// condition. Used by the periodic-update baseline, which keeps running while
/// the constraint is merely not certified and stops only once it is empty.
pub fn exact_projection(xi: &XiTerms, u_nom: f64) -> Option<f64> {
    feasible_interval(xi).map(|(lo, hi)| u_nom.clamp(lo, hi))
}
