//! Event trigger, excitation filter and inter-event diagnostics.

use serde::{Deserialize, Serialize};

use crate::filter::{sign0, FilterDecision};

/// Largest admissible gain-std floor: `g_lower / ((1 + eps + gamma) sqrt(beta_g))`.
pub fn sigma_floor_condition(epsilon: f64, gamma: f64, g_lower: f64, beta_g: f64) -> f64 {
    g_lower / ((1.0 + epsilon + gamma) * beta_g.sqrt())
}

/// Input magnitude that makes one new sample restore the feasibility ratio
/// to at least `1 + eps + gamma` at the sampled state.
///
/// A single observation with input `u` at `x` leaves
/// `σ_g²(x) <= s_g² S / (S + u² s_g²)` with `S = s_f² + σ_on²`; requiring
/// `β_g σ_g² <= g_lower² / c²` gives `u² >= S (c² β_g s_g² - g_lower²) / (g_lower² s_g²)`.
/// Returns `(0, true)` when the prior alone is already accurate enough.
pub fn excitation_threshold(
    epsilon: f64,
    gamma: f64,
    beta_g: f64,
    s_g: f64,
    s_f: f64,
    sigma_on: f64,
    g_lower: f64,
) -> (f64, bool) {
    let c = 1.0 + epsilon + gamma;
    let radicand = c * c * beta_g * s_g * s_g - g_lower * g_lower;
    if radicand <= 0.0 {
        return (0.0, true);
    }
    let s = s_f * s_f + sigma_on * sigma_on;
    ((s * radicand / (g_lower * g_lower * s_g * s_g)).sqrt(), false)
}

/// Variant of [`excitation_threshold`] without the `1/s_g²` factor.
/// Only reported by `bounds` for comparison; it does not restore the ratio.
pub fn excitation_threshold_printed(
    epsilon: f64,
    gamma: f64,
    beta_g: f64,
    s_g: f64,
    s_f: f64,
    sigma_on: f64,
    g_lower: f64,
) -> f64 {
    let c = 1.0 + epsilon + gamma;
    let radicand = c * c * beta_g * s_g * s_g - g_lower * g_lower;
    if radicand <= 0.0 {
        return 0.0;
    }
    (radicand * (s_f * s_f + sigma_on * sigma_on) / (g_lower * g_lower)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub g_lower: f64,
    pub u_gp: f64,
    pub sigma_floor_g: f64,
    /// Prior already certifies feasibility; no excitation is enforced.
    pub zero_excitation: bool,
}

impl TriggerConfig {
    /// Floor and excitation threshold from the design parameters.
    pub fn derive(epsilon: f64, gamma: f64, g_lower: f64, beta_g: f64, s_g: f64, s_f: f64, sigma_on: f64) -> Self {
        let (u_gp, zero_excitation) = excitation_threshold(epsilon, gamma, beta_g, s_g, s_f, sigma_on, g_lower);
        Self {
            epsilon,
            gamma,
            g_lower,
            u_gp,
            sigma_floor_g: sigma_floor_condition(epsilon, gamma, g_lower, beta_g),
            zero_excitation,
        }
    }

    pub fn floor_condition_holds(&self, beta_g: f64) -> bool {
        beta_g.sqrt() * self.sigma_floor_g <= self.g_lower / (1.0 + self.epsilon + self.gamma) * (1.0 + 1e-12)
    }

    pub fn post_update_target(&self) -> f64 {
        1.0 + self.epsilon + self.gamma
    }
}

/// Lift `|pi| < u_gp` to `u_gp` in the direction that keeps the resolved
/// constraint `xi_s u <= xi3` satisfied. With `xi_s = 0` this returns 0.
pub fn excitation_filter(decision: &FilterDecision, u_gp: f64) -> f64 {
    if decision.u.abs() >= u_gp {
        decision.u
    } else {
        -sign0(decision.xi.xi_s) * u_gp
    }
}

/// Continuous trigger: `ratio <= 1 + eps`.
pub fn should_trigger(ratio: f64, epsilon: f64) -> bool {
    ratio <= 1.0 + epsilon
}

/// Guaranteed spacing of triggers for a ratio with Lipschitz constant `l_gamma`.
pub fn min_inter_event_time(gamma: f64, l_gamma: f64) -> f64 {
    gamma / l_gamma
}

/// Largest finite-difference slope of a sampled ratio signal. Steps where
/// `skip[i]` is set (a model update happened between `i` and `i + 1`) are
/// ignored since the ratio jumps there by design.
pub fn estimate_ratio_lipschitz(times: &[f64], ratios: &[f64], skip: &[bool]) -> f64 {
    let mut l: f64 = 0.0;
    for i in 0..times.len().saturating_sub(1) {
        if skip.get(i).copied().unwrap_or(false) || skip.get(i + 1).copied().unwrap_or(false) {
            continue;
        }
        let (a, b) = (ratios[i], ratios[i + 1]);
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        let dt = times[i + 1] - times[i];
        if dt > 0.0 {
            l = l.max((b - a).abs() / dt);
        }
    }
    l
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub trigger_times: Vec<f64>,
    pub pre_ratios: Vec<f64>,
    pub post_ratios: Vec<f64>,
    pub applied_inputs: Vec<f64>,
    /// Filtered input before excitation, kept to check the safe-direction property.
    pub filtered_inputs: Vec<f64>,
    /// `xi_s` at the event.
    pub xi_s: Vec<f64>,
    /// Event with `xi_s = 0`, where no excitation direction exists.
    pub degenerate: Vec<bool>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.trigger_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trigger_times.is_empty()
    }

    pub fn record(&mut self, t: f64, pre: f64, post: f64, applied: f64, filtered: f64, xi_s: f64) {
        self.trigger_times.push(t);
        self.pre_ratios.push(pre);
        self.post_ratios.push(post);
        self.applied_inputs.push(applied);
        self.filtered_inputs.push(filtered);
        self.xi_s.push(xi_s);
        self.degenerate.push(xi_s == 0.0);
    }

    pub fn inter_event_times(&self) -> Vec<f64> {
        self.trigger_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn min_inter_event(&self) -> Option<f64> {
        self.inter_event_times().into_iter().reduce(f64::min)
    }

    pub fn mean_inter_event(&self) -> Option<f64> {
        let d = self.inter_event_times();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    }

    /// Count of events strictly before `t`.
    pub fn count_before(&self, t: f64) -> usize {
        self.trigger_times.iter().filter(|&&s| s < t).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "pre_ratio", "post_ratio", "u_applied"])?;
        for i in 0..self.len() {
            wr.write_record(&[
                self.trigger_times[i].to_string(),
                self.pre_ratios[i].to_string(),
                self.post_ratios[i].to_string(),
                self.applied_inputs[i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
