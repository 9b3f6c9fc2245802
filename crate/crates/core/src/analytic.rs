//! Closed-form targets: singlet and nonideal probabilities, correlation
//! functions, Bell/CHSH evaluators and the (η, v) feasibility frontiers.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PatternKind;

/// Absolute tolerance applied at feasibility and violation frontiers.
pub const FRONTIER_TOL: f64 = 1e-12;

/// Highest efficiency usable at full visibility by the sinusoidal model, 4/(2+π) ≈ 0.7780.
///
/// One passage of the original write-up quotes 78.80% for this bound; 77.80% is the
/// value of the closed form.
pub const SIN_FULL_VISIBILITY_EFFICIENCY: f64 = 4.0 / (2.0 + PI);

/// Highest visibility of the sinusoidal model at perfect efficiency, 2/π.
pub const SIN_FULL_EFFICIENCY_VISIBILITY: f64 = 2.0 / PI;

/// Efficiency above which the singlet state violates the generalized Bell inequality, 8/9.
pub const BELL_CRITICAL_EFFICIENCY: f64 = 8.0 / 9.0;

/// Efficiency above which the singlet state violates CHSH, 2(√2 − 1).
pub const CHSH_CRITICAL_EFFICIENCY: f64 = 2.0 * (SQRT_2 - 1.0);

/// Quantum CHSH value at the standard angles, 2√2.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;

/// The four probabilities (++, +−, −+, −−).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbQuad {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl ProbQuad {
    pub fn sum(&self) -> f64 {
        self.p_pp + self.p_pm + self.p_mp + self.p_mm
    }

    /// Correlation `P++ − P+− − P−+ + P−−`, unnormalized.
    pub fn signed_sum(&self) -> f64 {
        self.p_pp - self.p_pm - self.p_mp + self.p_mm
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }
}

/// Detector orientations for the CHSH inequality: A and B on side one, C and D on side two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub phi_a: f64,
    pub phi_b: f64,
    pub phi_c: f64,
    pub phi_d: f64,
}

impl ChshAngles {
    /// The setting that maximizes the singlet violation: 0, π/2, π/4, 3π/4.
    pub const STANDARD: ChshAngles = ChshAngles {
        phi_a: 0.0,
        phi_b: FRAC_PI_2,
        phi_c: FRAC_PI_4,
        phi_d: 3.0 * FRAC_PI_4,
    };

    /// The four (side one, side two) settings in the order AC, AD, BC, BD.
    pub fn settings(&self) -> [(f64, f64); 4] {
        [
            (self.phi_a, self.phi_c),
            (self.phi_a, self.phi_d),
            (self.phi_b, self.phi_c),
            (self.phi_b, self.phi_d),
        ]
    }
}

impl Default for ChshAngles {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Where an (η, v) point sits relative to the model frontiers and CHSH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub sin_feasible: bool,
    pub line_feasible: bool,
    pub chsh_violated: bool,
    /// Neither modeled by the sinusoidal pattern nor excluded by CHSH.
    pub gap: bool,
}

/// Maps any real θ onto [0, π] using evenness and 2π-periodicity.
pub fn reduce_separation(theta: f64) -> f64 {
    ((theta + PI).rem_euclid(TAU) - PI).abs()
}

pub fn qm_probs(theta: f64) -> ProbQuad {
    let cos = theta.cos();
    ProbQuad {
        p_pp: (1.0 - cos) / 4.0,
        p_pm: (1.0 + cos) / 4.0,
        p_mp: (1.0 + cos) / 4.0,
        p_mm: (1.0 - cos) / 4.0,
    }
}

/// Shape of the correlation: cos θ for the sinusoidal kinds, `line_g` for the staircase.
fn correlation_shape(theta: f64, kind: PatternKind) -> f64 {
    match kind {
        PatternKind::SymmetrizedStaircase => line_g(theta),
        _ => reduce_separation(theta).cos(),
    }
}

/// Coincidence probabilities with efficiency η and visibility v.
pub fn nonideal_probs(theta: f64, eta: f64, v: f64, kind: PatternKind) -> ProbQuad {
    let shape = v * correlation_shape(theta, kind);
    let scale = eta * eta / 4.0;
    ProbQuad {
        p_pp: scale * (1.0 - shape),
        p_pm: scale * (1.0 + shape),
        p_mp: scale * (1.0 + shape),
        p_mm: scale * (1.0 - shape),
    }
}

/// Single-detector probability of either result, η/2.
pub fn marginal_prob(eta: f64) -> f64 {
    eta / 2.0
}

/// Conditional correlation with singles removed: −v·cos θ or −v·g(θ).
pub fn correlation(theta: f64, v: f64, kind: PatternKind) -> f64 {
    -v * correlation_shape(theta, kind)
}

/// Piecewise-linear chord of cos θ through (0, 1), (π/4, 1/√2), (3π/4, −1/√2), (π, −1).
pub fn line_g(theta: f64) -> f64 {
    let t = reduce_separation(theta);
    if t <= FRAC_PI_4 {
        1.0 - (1.0 - FRAC_1_SQRT_2) * t / FRAC_PI_4
    } else if t <= 3.0 * FRAC_PI_4 {
        FRAC_1_SQRT_2 - SQRT_2 * (t - FRAC_PI_4) / FRAC_PI_2
    } else {
        -FRAC_1_SQRT_2 - (1.0 - FRAC_1_SQRT_2) * (t - 3.0 * FRAC_PI_4) / FRAC_PI_4
    }
}

/// CHSH statistic `|E(AC′) − E(AD′)| + |E(BC′) + E(BD′)|` of the model correlation.
pub fn chsh_value(v: f64, kind: PatternKind, angles: &ChshAngles) -> f64 {
    let e = |side_one: f64, side_two: f64| correlation(side_two - side_one, v, kind);
    let [ac, ad, bc, bd] = angles.settings().map(|(x, y)| e(x, y));
    (ac - ad).abs() + (bc + bd).abs()
}

fn require_positive_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")))
    }
}

/// Right-hand side of CHSH with inefficient detectors, 4/η − 2.
pub fn chsh_bound(eta: f64) -> Result<f64> {
    require_positive_eta(eta)?;
    Ok(4.0 / eta - 2.0)
}

/// Slack of the generalized Bell inequality `|E(AB′) − E(AC′)| ≤ 4/η − 3 + E(BC′)`
/// under the sinusoidal correlation. Negative slack means violation.
pub fn bell_generalized_slack(
    eta: f64,
    v: f64,
    theta_ab: f64,
    theta_ac: f64,
    theta_bc: f64,
) -> Result<f64> {
    require_positive_eta(eta)?;
    let e = |theta| correlation(theta, v, PatternKind::SymmetrizedSinusoidal);
    Ok((4.0 / eta - 3.0 + e(theta_bc)) - (e(theta_ab) - e(theta_ac)).abs())
}

/// Largest visibility the pattern can model at efficiency η: `min(1, (4/η − 2)/K)`
/// with K = π for the sinusoidal kinds and K = 2√2 for the staircase.
pub fn max_visibility(eta: f64, kind: PatternKind) -> Result<f64> {
    require_positive_eta(eta)?;
    let k = if kind.is_staircase() { TSIRELSON } else { PI };
    Ok(((4.0 / eta - 2.0) / k).min(1.0))
}

/// Whether `solve_params` accepts (η, v) for `kind`. Closed at the frontier,
/// except that (1, 1) is always excluded and the unsymmetrized kind needs v = 1.
pub fn is_feasible(eta: f64, v: f64, kind: PatternKind) -> Result<bool> {
    if !(0.0..=1.0).contains(&eta) || !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!(
            "eta and v must lie in [0, 1], got eta={eta}, v={v}"
        )));
    }
    if kind == PatternKind::UnsymmetrizedSinusoidal && v != 1.0 {
        return Ok(false);
    }
    if eta == 1.0 && v == 1.0 {
        return Ok(false);
    }
    if eta == 0.0 {
        return Ok(true);
    }
    Ok(v <= max_visibility(eta, kind)? + FRONTIER_TOL)
}

pub fn classify_region(eta: f64, v: f64) -> Result<RegionVerdict> {
    require_positive_eta(eta)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("v must lie in [0, 1], got {v}")));
    }
    let sin_feasible = is_feasible(eta, v, PatternKind::SymmetrizedSinusoidal)?;
    let line_feasible = is_feasible(eta, v, PatternKind::SymmetrizedStaircase)?;
    // Same tolerance as the staircase frontier, so a violation never coexists
    // with staircase feasibility.
    let chsh_violated = v - chsh_bound(eta)? / TSIRELSON > FRONTIER_TOL;
    Ok(RegionVerdict {
        sin_feasible,
        line_feasible,
        chsh_violated,
        gap: !sin_feasible && !chsh_violated,
    })
}
