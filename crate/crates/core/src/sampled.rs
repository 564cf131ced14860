//! Sampled-data realization: zero-order-hold tightening, Lipschitz bounds of
//! the constraint terms, and admissibility of sampling time and input bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{closed_form, ratio_from_posterior, xi_from_posterior, Branch, CbfSpec, FilterDecision, FilterError, GRAD_B_EPS};
use crate::gp::{DynamicsModel, ErrorBound};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampledError {
    #[error("no grid point lies in the safe set")]
    EmptySafeSet,
    #[error("no admissible sampling time: both candidates are nonpositive ({first:.3e}, {second:.3e})")]
    NoAdmissibleSamplingTime { first: f64, second: f64 },
    #[error("robustness margin must be positive, got {0}")]
    NonPositiveMargin(f64),
}

/// Regular grid over an axis-aligned box, `points` nodes per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: usize,
}

impl BoxGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: usize) -> Self {
        assert!(points >= 2, "grid needs at least two points per axis");
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper, points }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, j: usize) -> f64 {
        (self.upper[j] - self.lower[j]) / (self.points - 1) as f64
    }

    fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for slot in idx.iter_mut().rev() {
            *slot = i % self.points;
            i /= self.points;
        }
        idx
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(j, &k)| self.lower[j] + k as f64 * self.spacing(j))
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Flat index of the neighbour one step up along axis `j`, if any.
    fn up(&self, i: usize, j: usize) -> Option<usize> {
        let idx = self.multi_index(i);
        if idx[j] + 1 >= self.points {
            return None;
        }
        let stride = self.points.pow((self.dim() - 1 - j) as u32);
        Some(i + stride)
    }

    /// Upper estimate of the largest gradient norm of a field sampled on the
    /// grid: per-axis maximal slopes combined in quadrature.
    pub fn lipschitz(&self, values: &[f64]) -> f64 {
        self.lipschitz_masked(values, None)
    }

    /// As [`lipschitz`](Self::lipschitz), only over pairs where both nodes are in `mask`.
    pub fn lipschitz_masked(&self, values: &[f64], mask: Option<&[bool]>) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.dim() {
            let h = self.spacing(j);
            let mut m: f64 = 0.0;
            for i in 0..self.len() {
                if let Some(k) = self.up(i, j) {
                    if mask.is_some_and(|ms| !(ms[i] && ms[k])) {
                        continue;
                    }
                    m = m.max((values[k] - values[i]).abs() / h);
                }
            }
            sum += m * m;
        }
        sum.sqrt()
    }
}

/// Bounds on the barrier, the posterior and the true dynamics over the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c_psi: f64,
    pub l_psi: f64,
    pub c_sigma_g: f64,
    pub c_mu_g: f64,
    pub c_mu_f: f64,
    pub c_sigma_f: f64,
    pub l_mu_f: f64,
    pub l_sigma_f: f64,
    pub l_mu_g: f64,
    pub l_sigma_g: f64,
    pub l_alpha: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub x_bar: f64,
    pub f_bar: f64,
    pub f_lower: f64,
    pub g_bar: f64,
    /// Bound on `|A x + b f(x)|`, the input-free part of the state velocity.
    pub drift_bound: f64,
}

/// Prior knowledge about the true dynamics needed for the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsBounds {
    pub f_lower: f64,
    pub f_bar: f64,
    pub g_bar: f64,
    pub drift_bound: f64,
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

/// Numerical bound constants: posterior magnitudes and slopes sampled on the
/// grid and inflated by `inflation`; std bounds are capped at the prior std.
pub fn estimate_bound_constants(
    cbf: &CbfSpec,
    model: &dyn DynamicsModel,
    bound: &ErrorBound,
    grid: &BoxGrid,
    prior_std: (f64, f64),
    dynamics: &DynamicsBounds,
    inflation: f64,
) -> BoundConstants {
    let (s_f, s_g) = prior_std;
    let n = grid.len();
    let (mut mf, mut mg, mut sf, mut sg) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut alpha_psi = vec![0.0; n];
    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut safe = vec![false; n];
    let mut x_bar: f64 = 0.0;
    for (i, x) in grid.points().enumerate() {
        let p = model.posterior(&x);
        mf[i] = p.mean_f;
        mg[i] = p.mean_g;
        sf[i] = p.std_f.max(bound.sigma_floor_f);
        sg[i] = p.std_g.max(bound.sigma_floor_g);
        let psi = cbf.value(&x);
        alpha_psi[i] = cbf.alpha(psi);
        grads.push(cbf.gradient(&x));
        safe[i] = psi >= 0.0;
        if safe[i] {
            x_bar = x_bar.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    let max_abs = |v: &[f64]| v.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let c_psi = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let mut l_psi: f64 = 0.0;
    for j in 0..grid.dim() {
        let comp: Vec<f64> = grads.iter().map(|g| g[j]).collect();
        l_psi = l_psi.hypot(grid.lipschitz(&comp));
    }
    BoundConstants {
        c_psi,
        l_psi: inflation * l_psi,
        c_sigma_g: (inflation * max_abs(&sg)).min(s_g.max(bound.sigma_floor_g)),
        c_mu_g: inflation * max_abs(&mg),
        c_mu_f: dynamics.f_bar + bound.beta_f.sqrt() * s_f,
        c_sigma_f: (inflation * max_abs(&sf)).min(s_f.max(bound.sigma_floor_f)),
        l_mu_f: inflation * grid.lipschitz(&mf),
        l_sigma_f: inflation * grid.lipschitz(&sf),
        l_mu_g: inflation * grid.lipschitz(&mg),
        l_sigma_g: inflation * grid.lipschitz(&sg),
        l_alpha: inflation * grid.lipschitz(&alpha_psi),
        norm_a: spectral_norm(&cbf.a),
        norm_b: cbf.b.norm(),
        x_bar,
        f_bar: dynamics.f_bar,
        f_lower: dynamics.f_lower,
        g_bar: dynamics.g_bar,
        drift_bound: dynamics.drift_bound,
    }
}

/// Lipschitz constants of `xi1`, `xi2`, `xi3`.
pub fn lipschitz_xi_bounds(c: &BoundConstants, beta_f: f64, beta_g: f64) -> [f64; 3] {
    let l1 = c.norm_b * beta_g.sqrt() * (c.c_psi * c.l_sigma_g + c.c_sigma_g * c.l_psi);
    let l2 = c.norm_b * (c.c_psi * c.l_mu_g + c.l_psi * c.c_mu_g);
    let l3 = c.l_alpha
        + c.c_psi * (c.norm_a + c.norm_b * c.l_mu_f + c.norm_b * beta_f.sqrt() * c.l_sigma_f)
        + c.l_psi * (c.norm_a * c.x_bar + c.norm_b * c.c_mu_f + c.norm_b * beta_f.sqrt() * c.c_sigma_f);
    [l1, l2, l3]
}

/// `((L1 + L2) u_bar + L3)(f_bar + g_bar u_bar)`.
pub fn robustness_margin(l_xi: [f64; 3], u_bar: f64, f_bar: f64, g_bar: f64) -> f64 {
    ((l_xi[0] + l_xi[1]) * u_bar + l_xi[2]) * (f_bar + g_bar * u_bar)
}

/// Largest `xi3` over grid nodes inside the safe set.
pub fn max_xi3_over_safe_set(
    cbf: &CbfSpec,
    model: &dyn DynamicsModel,
    bound: &ErrorBound,
    grid: &BoxGrid,
) -> Result<f64, SampledError> {
    let mut best: Option<f64> = None;
    for x in grid.points() {
        if cbf.value(&x) < 0.0 {
            continue;
        }
        let xi3 = xi_from_posterior(cbf, &model.posterior(&x), bound, &x).xi3;
        best = Some(best.map_or(xi3, |b: f64| b.max(xi3)));
    }
    best.ok_or(SampledError::EmptySafeSet)
}

/// `max(phi_tilde / phi, (zeta1 eps sqrt(beta_g) floor_g u_bar - max_xi3) / phi)`.
pub fn admissible_sampling_time(
    phi: f64,
    phi_tilde: f64,
    zeta1: f64,
    epsilon: f64,
    beta_g: f64,
    sigma_floor_g: f64,
    u_bar: f64,
    max_xi3: f64,
) -> Result<f64, SampledError> {
    if !(phi > 0.0) {
        return Err(SampledError::NonPositiveMargin(phi));
    }
    let first = phi_tilde / phi;
    let second = (zeta1 * epsilon * beta_g.sqrt() * sigma_floor_g * u_bar - max_xi3) / phi;
    if first <= 0.0 && second <= 0.0 {
        return Err(SampledError::NoAdmissibleSamplingTime { first, second });
    }
    Ok(first.max(second))
}

/// Quotient `max_xi3 / (zeta1 eps sqrt(beta_g) floor_g)`.
pub fn input_bound_quotient(max_xi3: f64, zeta1: f64, epsilon: f64, beta_g: f64, sigma_floor_g: f64) -> f64 {
    max_xi3 / (zeta1 * epsilon * beta_g.sqrt() * sigma_floor_g)
}

/// Smallest admissible input bound: the quotient above, raised to `u_gp`.
pub fn min_input_bound(max_xi3: f64, zeta1: f64, epsilon: f64, beta_g: f64, sigma_floor_g: f64, u_gp: f64) -> f64 {
    input_bound_quotient(max_xi3, zeta1, epsilon, beta_g, sigma_floor_g).max(u_gp)
}

/// Configuration of one sampled-data loop. `phi` and `l_xi` are refreshed as
/// the model grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledConfig {
    pub period: f64,
    pub u_bar: f64,
    pub phi: f64,
    pub phi_tilde: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub l_xi: [f64; 3],
    pub max_xi3_over_safe_set: f64,
}

impl SampledConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        period: f64,
        u_bar: f64,
        phi_tilde: f64,
        zeta1: f64,
        consts: &BoundConstants,
        bound: &ErrorBound,
        s_f: f64,
        max_xi3: f64,
    ) -> Self {
        let l_xi = lipschitz_xi_bounds(consts, bound.beta_f, bound.beta_g);
        Self {
            period,
            u_bar,
            phi: robustness_margin(l_xi, u_bar, consts.drift_bound, consts.g_bar),
            phi_tilde,
            zeta1,
            zeta2: zeta1 * (consts.f_bar + 2.0 * bound.beta_f.sqrt() * s_f) + phi_tilde,
            l_xi,
            max_xi3_over_safe_set: max_xi3,
        }
    }

    pub fn tightening(&self) -> f64 {
        self.phi * self.period
    }
}

/// Pass/fail of each admissibility inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub t_max: Option<f64>,
    pub sampling_time_ok: bool,
    pub input_quotient: f64,
    pub u_min: f64,
    pub input_bound_ok: bool,
    pub excitation_fits_box: bool,
    /// Grid nodes where `|grad(psi)'b| <= zeta1`.
    pub small_gradient_nodes: usize,
    /// `alpha(psi) + grad(psi)' A x >= zeta2` on all those nodes.
    pub small_gradient_condition_ok: bool,
}

impl Admissibility {
    pub fn all_ok(&self) -> bool {
        self.sampling_time_ok && self.input_bound_ok && self.excitation_fits_box && self.small_gradient_condition_ok
    }
}

pub fn check_admissibility(
    cfg: &SampledConfig,
    cbf: &CbfSpec,
    grid: &BoxGrid,
    epsilon: f64,
    beta_g: f64,
    sigma_floor_g: f64,
    u_gp: f64,
) -> Admissibility {
    let t_max = admissible_sampling_time(
        cfg.phi,
        cfg.phi_tilde,
        cfg.zeta1,
        epsilon,
        beta_g,
        sigma_floor_g,
        cfg.u_bar,
        cfg.max_xi3_over_safe_set,
    )
    .ok();
    let quotient = input_bound_quotient(cfg.max_xi3_over_safe_set, cfg.zeta1, epsilon, beta_g, sigma_floor_g);
    let mut nodes = 0;
    let mut cond = true;
    for x in grid.points() {
        let g = cbf.gradient(&x);
        if cbf.grad_dot_b(&g).abs() <= cfg.zeta1 {
            nodes += 1;
            if cbf.alpha(cbf.value(&x)) + cbf.grad_dot_ax(&g, &x) < cfg.zeta2 {
                cond = false;
            }
        }
    }
    Admissibility {
        t_max,
        sampling_time_ok: t_max.is_some_and(|t| cfg.period <= t),
        input_quotient: quotient,
        u_min: quotient.max(u_gp),
        input_bound_ok: cfg.u_bar > quotient,
        excitation_fits_box: u_gp <= cfg.u_bar,
        small_gradient_nodes: nodes,
        small_gradient_condition_ok: cond,
    }
}

/// Closest input to `u_nom` satisfying the tightened constraint and `|u| <= u_bar`.
pub fn sampled_safety_filter(
    cbf: &CbfSpec,
    model: &dyn DynamicsModel,
    bound: &ErrorBound,
    cfg: &SampledConfig,
    x_k: &[f64],
    u_nom: f64,
) -> Result<FilterDecision, FilterError> {
    let post = model.posterior(x_k);
    let ratio = ratio_from_posterior(post.mean_g, post.std_g, bound);
    let xi = xi_from_posterior(cbf, &post, bound, x_k).tightened(cfg.tightening());
    box_decide(xi, ratio, u_nom, cfg.u_bar)
}

pub(crate) fn box_decide(xi: crate::filter::XiTerms, ratio: f64, u_nom: f64, u_bar: f64) -> Result<FilterDecision, FilterError> {
    if xi.grad_dot_b.abs() <= GRAD_B_EPS {
        if xi.xi3 < 0.0 {
            return Err(FilterError::DegenerateGradient { xi3: xi.xi3 });
        }
        return Ok(FilterDecision { u: u_nom.clamp(-u_bar, u_bar), branch: Branch::Nominal, xi, gamma_ratio: ratio });
    }
    if !(ratio > 1.0) {
        return Err(FilterError::Infeasible { ratio });
    }
    let (u, branch) = closed_form(&xi, u_nom);
    let u = u.clamp(-u_bar, u_bar);
    if xi.residual(u) > 1e-9 * (1.0 + xi.xi3.abs()) {
        return Err(FilterError::BoxInfeasible { u, u_bar });
    }
    Ok(FilterDecision { u, branch, xi, gamma_ratio: ratio })
}

/// Sampled trigger: `ratio <= 1 + eps + gamma`.
pub fn sampled_trigger(ratio: f64, epsilon: f64, gamma: f64) -> bool {
    ratio <= 1.0 + epsilon + gamma
}

/// Drift bound `max |A x + b f(x)|` over grid nodes.
pub fn drift_bound_on_grid(a: &DMatrix<f64>, b: &DVector<f64>, f: &dyn Fn(&[f64]) -> f64, grid: &BoxGrid) -> f64 {
    grid.points()
        .map(|x| {
            let v = a * DVector::from_column_slice(&x) + b * f(&x);
            v.norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::XiTerms;
    use proptest::prelude::*;

    fn consts() -> BoundConstants {
        BoundConstants {
            c_psi: 2.0,
            l_psi: 0.5,
            c_sigma_g: 1e-4,
            c_mu_g: 7e-4,
            c_mu_f: 2.0,
            c_sigma_f: 0.05,
            l_mu_f: 0.1,
            l_sigma_f: 0.02,
            l_mu_g: 1e-4,
            l_sigma_g: 5e-5,
            l_alpha: 130.0,
            norm_a: 1.0,
            norm_b: 1.0,
            x_bar: 100.0,
            f_bar: 0.4,
            f_lower: -0.4,
            g_bar: 3e-3,
            drift_bound: 12.0,
        }
    }

    #[test]
    fn lipschitz_formulas() {
        let c = consts();
        let [l1, l2, l3] = lipschitz_xi_bounds(&c, 300.0, 200.0);
        let s = 200f64.sqrt();
        assert!((l1 - s * (2.0 * 5e-5 + 1e-4 * 0.5)).abs() < 1e-12);
        assert!((l2 - (2.0 * 1e-4 + 0.5 * 7e-4)).abs() < 1e-12);
        let sf = 300f64.sqrt();
        let want3 = 130.0 + 2.0 * (1.0 + 0.1 + sf * 0.02) + 0.5 * (100.0 + 2.0 + sf * 0.05);
        assert!((l3 - want3).abs() < 1e-9);

        let zero = BoundConstants {
            c_sigma_g: 0.0, c_mu_g: 0.0, c_mu_f: 0.0, c_sigma_f: 0.0,
            l_mu_f: 0.0, l_sigma_f: 0.0, l_mu_g: 0.0, l_sigma_g: 0.0, ..c
        };
        let [a, b, d] = lipschitz_xi_bounds(&zero, 300.0, 200.0);
        assert_eq!((a, b), (0.0, 0.0));
        assert!((d - (130.0 + 2.0 + 0.5 * 100.0)).abs() < 1e-12);

        let double_b = BoundConstants { norm_b: 2.0, ..c };
        let [d1, d2, _] = lipschitz_xi_bounds(&double_b, 300.0, 200.0);
        assert!((d1 - 2.0 * l1).abs() < 1e-12 && (d2 - 2.0 * l2).abs() < 1e-12);
    }

    #[test]
    fn margin_cases() {
        assert_eq!(robustness_margin([1.0, 2.0, 3.0], 0.0, 5.0, 0.1), 15.0);
        let a = robustness_margin([1.0, 2.0, 0.0], 10.0, 5.0, 0.1);
        let b = robustness_margin([2.0, 4.0, 0.0], 10.0, 5.0, 0.1);
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn sampling_time_cases() {
        // u_bar exactly at the quotient: second candidate vanishes
        let q = input_bound_quotient(50.0, 1.0, 0.2, 100.0, 1e-3);
        let t = admissible_sampling_time(10.0, 0.5, 1.0, 0.2, 100.0, 1e-3, q, 50.0).unwrap();
        assert!((t - 0.05).abs() < 1e-12);
        let t2 = admissible_sampling_time(10.0, 1.0, 1.0, 0.2, 100.0, 1e-3, q, 50.0).unwrap();
        assert!((t2 - 0.1).abs() < 1e-12);
        assert!(admissible_sampling_time(10.0, -1.0, 1.0, 0.2, 100.0, 1e-3, 0.0, 50.0).is_err());
        assert!(admissible_sampling_time(0.0, 1.0, 1.0, 0.2, 100.0, 1e-3, 0.0, 50.0).is_err());
    }

    #[test]
    fn input_bound_cases() {
        assert_eq!(min_input_bound(10.0, 1.0, 0.5, 4.0, 1.0, 0.0), 10.0);
        let a = input_bound_quotient(10.0, 1.0, 0.2, 4.0, 1.0);
        let b = input_bound_quotient(10.0, 1.0, 0.4, 4.0, 1.0);
        assert!((a - 2.0 * b).abs() < 1e-12);
        assert_eq!(min_input_bound(10.0, 1.0, 0.5, 4.0, 1.0, 50.0), 50.0);
    }

    #[test]
    fn box_filter_cases() {
        // tightened xi3 >= 0: zero always feasible
        let xi = XiTerms::new(0.5, 2.0, 3.0, -1.0);
        let d = box_decide(xi, 3.0, 100.0, 10.0).unwrap();
        assert!((d.u - 1.2).abs() < 1e-12);
        // nominal outside the box
        let d = box_decide(xi, 3.0, -100.0, 10.0).unwrap();
        assert_eq!(d.u, -10.0);
        // needs more than the box allows
        let xi = XiTerms::new(0.5, 2.0, -30.0, -1.0);
        assert!(matches!(box_decide(xi, 3.0, 0.0, 10.0), Err(FilterError::BoxInfeasible { .. })));
    }

    #[test]
    fn trigger_boundary() {
        assert!(sampled_trigger(1.7, 0.2, 0.5));
        assert!(!sampled_trigger(1.700001, 0.2, 0.5));
    }

    #[test]
    fn grid_geometry() {
        let g = BoxGrid::new(vec![0.0, 10.0], vec![1.0, 20.0], 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(0), vec![0.0, 10.0]);
        assert_eq!(g.point(8), vec![1.0, 20.0]);
        assert_eq!(g.point(1), vec![0.0, 15.0]);
        // linear field 3 x + 4 y: gradient norm 5
        let vals: Vec<f64> = g.points().map(|p| 3.0 * p[0] + 4.0 * p[1]).collect();
        assert!((g.lipschitz(&vals) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_shift() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0]);
        assert!((spectral_norm(&a) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn box_filter_is_grid_argmin(x1 in 0.0f64..1.0, d in 0.05f64..3.0, neg in any::<bool>(),
                                     x3 in -4.0f64..6.0, u_nom in -30.0f64..30.0, u_bar in 5.0f64..20.0) {
            let x2 = if neg { -(x1 + d) } else { x1 + d };
            let xi = XiTerms::new(x1, x2, x3, -1.0);
            let n = 40_000;
            let mut best: Option<f64> = None;
            for i in 0..=n {
                let u = -u_bar + 2.0 * u_bar * i as f64 / n as f64;
                if xi.residual(u) <= 1e-9 && best.is_none_or(|b| (u - u_nom).abs() < (b - u_nom).abs()) {
                    best = Some(u);
                }
            }
            match box_decide(xi, 2.0, u_nom, u_bar) {
                Ok(dec) => {
                    let b = best.expect("grid finds a feasible point when the filter does");
                    prop_assert!(dec.u.abs() <= u_bar);
                    prop_assert!(xi.residual(dec.u) <= 1e-9 * (1.0 + x3.abs()));
                    prop_assert!((dec.u - u_nom).abs() <= (b - u_nom).abs() + 2.0 * u_bar / n as f64);
                }
                Err(_) => prop_assert!(best.is_none()),
            }
        }

        #[test]
        fn margin_grows_with_input_bound(u in 0.0f64..1e4, du in 1.0f64..1e4) {
            let l = [1e-3, 2e-4, 100.0];
            prop_assert!(robustness_margin(l, u + du, 0.4, 3e-3) > robustness_margin(l, u, 0.4, 3e-3));
        }
    }
}
