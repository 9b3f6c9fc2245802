//! The hidden-variable space and the detector patterns.
//!
//! Each emitted pair carries one hidden variable λ = (φ, r), drawn uniformly
//! from the rectangle [0, 2π) × [0, 1). A detector at angle α reads the pattern
//! at the shifted angle φ′ = (φ − α) mod 2π and the unchanged r, and returns
//! `+1`, `−1` or no detection.
//!
//! Symmetrized patterns split the r-axis at 1/2. Detector one reads the
//! sinusoidal (or staircase) pattern on r ∈ [0, 1/2) and a flat band of height
//! `b` on r ∈ [1/2, 1); detector two has the halves swapped and every sign
//! flipped. Inside the pattern half the region `r < w(φ′)` gives the "correct"
//! result, and the sliver `w(φ′) ≤ r < b·c + (1 − c)·w(φ′)` carries the
//! visibility-lowering errors whose sign is π-periodic in φ′.
//!
//! All regions are half-open in r, so a zero-height region never detects.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::error::{Error, Result};

/// Height ratio of the outer and inner staircase steps.
pub const STAIRCASE_STEP_RATIO: f64 = SQRT_2 - 1.0;

/// Absolute tolerance used by every consistency check on solved parameters.
pub const PARAM_TOL: f64 = 1e-12;

/// Reduces an angle into [0, 2π) using a non-negative modulus.
pub fn reduce_angle(angle: f64) -> f64 {
    let reduced = angle.rem_euclid(TAU);
    // rem_euclid may round up to exactly 2π for tiny negative inputs.
    if reduced >= TAU {
        0.0
    } else {
        reduced
    }
}

/// The per-pair hidden variable λ = (φ, r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenVariable {
    phi: f64,
    r: f64,
}

impl HiddenVariable {
    /// Builds a hidden variable; `phi` is reduced into [0, 2π), `r` must lie in [0, 1).
    pub fn new(phi: f64, r: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::Domain(format!("phi must be finite, got {phi}")));
        }
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Domain(format!("r must lie in [0, 1), got {r}")));
        }
        Ok(Self {
            phi: reduce_angle(phi),
            r,
        })
    }

    /// Maps two unit draws in [0, 1) onto the rectangle, φ first.
    pub(crate) fn from_unit_draws(u_phi: f64, u_r: f64) -> Self {
        Self {
            phi: reduce_angle(TAU * u_phi),
            r: u_r,
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternKind {
    /// Sinusoidal pattern at detector one, flat band at detector two.
    /// Unequal marginal efficiencies; full visibility only.
    UnsymmetrizedSinusoidal,
    SymmetrizedSinusoidal,
    /// Straight-line correlation model with a two-level staircase pattern.
    SymmetrizedStaircase,
}

impl PatternKind {
    pub const ALL: [PatternKind; 3] = [
        PatternKind::UnsymmetrizedSinusoidal,
        PatternKind::SymmetrizedSinusoidal,
        PatternKind::SymmetrizedStaircase,
    ];

    pub fn is_symmetrized(self) -> bool {
        !matches!(self, PatternKind::UnsymmetrizedSinusoidal)
    }

    pub fn is_staircase(self) -> bool {
        matches!(self, PatternKind::SymmetrizedStaircase)
    }

    /// Short command-line name: `unsym`, `sin` or `line`.
    pub fn short_name(self) -> &'static str {
        match self {
            PatternKind::UnsymmetrizedSinusoidal => "unsym",
            PatternKind::SymmetrizedSinusoidal => "sin",
            PatternKind::SymmetrizedStaircase => "line",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin" => Ok(PatternKind::SymmetrizedSinusoidal),
            "line" => Ok(PatternKind::SymmetrizedStaircase),
            "unsym" => Ok(PatternKind::UnsymmetrizedSinusoidal),
            other => Err(Error::Domain(format!(
                "unknown model '{other}' (expected sin, line or unsym)"
            ))),
        }
    }
}

/// A concrete detector-pattern model. Only obtainable through [`solve_params`],
/// so every value satisfies the pattern constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    eta: f64,
    v: f64,
    a: f64,
    b: f64,
    c: f64,
    kind: PatternKind,
}

impl ModelParams {
    pub fn new(eta: f64, v: f64, kind: PatternKind) -> Result<Self> {
        solve_params(eta, v, kind)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Pattern amplitude.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Band height.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Error fraction.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
    NoDetection,
}

impl Outcome {
    /// `+1` / `−1` for detections, `None` otherwise.
    pub fn numeric_value(self) -> Option<i8> {
        match self {
            Outcome::Plus => Some(1),
            Outcome::Minus => Some(-1),
            Outcome::NoDetection => None,
        }
    }

    pub fn is_detected(self) -> bool {
        self != Outcome::NoDetection
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
            Outcome::NoDetection => Outcome::NoDetection,
        }
    }

    fn from_sign(plus: bool) -> Self {
        if plus {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorSide {
    One,
    Two,
}

/// Maps a target efficiency and visibility onto pattern parameters (a, b, c).
///
/// `b = η − η²/2` and `c = η(1 − v)/(2 − η(1 + v))` for every kind; the
/// amplitude is `a = πvη²/4` for the sinusoidal kinds and `a = vη²/√2` for the
/// staircase. The unsymmetrized kind only exists at `v = 1` and shares the
/// symmetrized amplitude, so its coincidence rate is half the symmetrized one.
pub fn solve_params(eta: f64, v: f64, kind: PatternKind) -> Result<ModelParams> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("eta must lie in [0, 1], got {eta}")));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("v must lie in [0, 1], got {v}")));
    }
    if eta == 1.0 && v == 1.0 {
        return Err(Error::DegeneratePoint);
    }
    if !analytic::is_feasible(eta, v, kind)? {
        return Err(Error::InfeasibleParameters { eta, v, kind });
    }

    let b = eta - eta * eta / 2.0;
    let a = match kind {
        PatternKind::SymmetrizedStaircase => v * eta * eta * FRAC_1_SQRT_2,
        _ => PI * v * eta * eta / 4.0,
    };
    let c = if kind.is_symmetrized() {
        eta * (1.0 - v) / (2.0 - eta * (1.0 + v))
    } else {
        0.0
    };

    // At the exact frontier a and b agree only up to rounding.
    debug_assert!(a <= b + PARAM_TOL, "feasible point with a={a} > b={b}");
    let a = a.min(b);
    debug_assert!((0.0..=1.0 + PARAM_TOL).contains(&c));
    let c = c.clamp(0.0, 1.0);

    Ok(ModelParams {
        eta,
        v,
        a,
        b,
        c,
        kind,
    })
}

/// Staircase step height (in units of the amplitude) at a reduced angle.
fn staircase_step(phi: f64) -> f64 {
    let m = if phi >= PI { phi - PI } else { phi };
    if m > FRAC_PI_4 && m < 3.0 * FRAC_PI_4 {
        1.0
    } else {
        STAIRCASE_STEP_RATIO
    }
}

/// Height of the correct-result region at shifted angle `phi` ∈ [0, 2π).
pub fn boundary(kind: PatternKind, a: f64, phi: f64) -> f64 {
    let phi = reduce_angle(phi);
    match kind {
        PatternKind::SymmetrizedStaircase => a * staircase_step(phi),
        _ => a * phi.sin().abs(),
    }
}

/// Pattern half: correct region, then error band, then no detection.
fn read_pattern(params: &ModelParams, phi: f64, r: f64) -> Outcome {
    let w = boundary(params.kind, params.a, phi);
    if r < w {
        return Outcome::from_sign(phi < PI);
    }
    let with_errors = params.b * params.c + (1.0 - params.c) * w;
    if r < with_errors {
        let m = if phi >= PI { phi - PI } else { phi };
        return Outcome::from_sign(m > 0.0 && m <= FRAC_PI_2);
    }
    Outcome::NoDetection
}

/// Band half: detection below `b`, sign from the half-circle.
fn read_band(params: &ModelParams, phi: f64, r: f64) -> Outcome {
    if r < params.b {
        Outcome::from_sign(phi < PI)
    } else {
        Outcome::NoDetection
    }
}

/// The measurement result at one detector.
///
/// Depends only on `λ`, the detector's own angle and the side, never on the
/// other detector's setting.
pub fn measure(
    lambda: HiddenVariable,
    detector_angle: f64,
    side: DetectorSide,
    params: &ModelParams,
) -> Outcome {
    let phi = reduce_angle(lambda.phi - detector_angle);
    let r = lambda.r;

    if !params.kind.is_symmetrized() {
        return match side {
            DetectorSide::One => {
                if r < boundary(params.kind, params.a, phi) {
                    Outcome::from_sign(phi < PI)
                } else {
                    Outcome::NoDetection
                }
            }
            DetectorSide::Two => read_band(params, phi, r).flipped(),
        };
    }

    let lower_half = r < 0.5;
    let local_r = if lower_half { r } else { r - 0.5 };
    match side {
        DetectorSide::One if lower_half => read_pattern(params, phi, local_r),
        DetectorSide::One => read_band(params, phi, local_r),
        DetectorSide::Two if lower_half => read_band(params, phi, local_r).flipped(),
        DetectorSide::Two => read_pattern(params, phi, local_r).flipped(),
    }
}

/// Marginal efficiencies (η at detector one, η at detector two) of the
/// unsymmetrized pattern with amplitude `a` and band height `b`.
pub fn unsymmetrized_marginals(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
        return Err(Error::Domain(format!(
            "a and b must lie in [0, 1], got a={a}, b={b}"
        )));
    }
    if a > b {
        return Err(Error::InfeasibleParameters {
            eta: 2.0 * a / PI,
            v: 1.0,
            kind: PatternKind::UnsymmetrizedSinusoidal,
        });
    }
    Ok((2.0 * a / PI, b))
}
