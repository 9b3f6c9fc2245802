//! One executable gate over every exact and statistical property of the model.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, ChshAngles, TSIRELSON};
use crate::error::{Error, Result};
use crate::experiments::{chsh_experiment_with, region_scan};
use crate::model::{self, solve_params, ModelParams, PatternKind};
use crate::montecarlo::{
    self, binomial_std_error, correlation_std_error, derive_seed, Measure, RunConfig, Tally,
    GATE_SIGMAS,
};
use crate::quadrature::{integrate_regions, QuadratureOptions};

pub const MIN_PAIRS_BUDGET: u64 = 100_000;

const SIN: PatternKind = PatternKind::SymmetrizedSinusoidal;
const LINE: PatternKind = PatternKind::SymmetrizedStaircase;
const KINDS: [PatternKind; 2] = [SIN, LINE];
const SUITE_THETAS: [f64; 6] = [0.0, FRAC_PI_4, PI / 3.0, FRAC_PI_2, 3.0 * FRAC_PI_4, PI];
const SUITE_POINTS: [(f64, f64); 3] = [(0.7, 1.0), (0.7, 0.8), (1.0, 0.6)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub deviation: f64,
    pub threshold: f64,
    pub status: CheckStatus,
}

impl Check {
    fn new(name: impl Into<String>, deviation: f64, threshold: f64) -> Self {
        let status = if deviation <= threshold {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Check {
            name: name.into(),
            deviation,
            threshold,
            status,
        }
    }

    fn skipped(name: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            deviation: 0.0,
            threshold: 0.0,
            status: CheckStatus::Skipped,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        write!(
            f,
            "{tag} {:<44} deviation={:.3e} threshold={:.3e}",
            self.name, self.deviation, self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pairs_budget: u64,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// z-score of `observed` against `expected` with standard error `sigma`.
/// A zero-width gate demands exact agreement.
fn z_score(observed: f64, expected: f64, sigma: f64) -> f64 {
    let dev = (observed - expected).abs();
    if sigma > 0.0 {
        dev / sigma
    } else if dev <= 1e-15 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn verify_suite(pairs_budget: u64, seed: u64) -> Result<VerifyReport> {
    verify_suite_with(pairs_budget, seed, &model::measure)
}

/// Runs the suite against an arbitrary detector response.
pub fn verify_suite_with<M: Measure + ?Sized>(
    pairs_budget: u64,
    seed: u64,
    measure: &M,
) -> Result<VerifyReport> {
    if pairs_budget < MIN_PAIRS_BUDGET {
        return Err(Error::InvalidConfig(format!(
            "pairs budget must be at least {MIN_PAIRS_BUDGET}, got {pairs_budget}"
        )));
    }
    let mut checks = Vec::new();
    analytic_checks(&mut checks)?;
    quadrature_checks(&mut checks, measure);
    Suite {
        n: pairs_budget,
        seed,
        measure,
        next_stream: 0,
    }
    .run(&mut checks)?;
    Ok(VerifyReport {
        pairs_budget,
        seed,
        checks,
    })
}

fn analytic_checks(checks: &mut Vec<Check>) -> Result<()> {
    let thetas: Vec<f64> = (0..=64).map(|i| -PI + 3.0 * PI * i as f64 / 64.0).collect();
    let (mut norm, mut sym, mut ident) = (0.0f64, 0.0f64, 0.0f64);
    for &theta in &thetas {
        norm = norm.max((analytic::qm_probs(theta).sum() - 1.0).abs());
        for kind in KINDS {
            for (eta, v) in [(0.3, 0.2), (0.7, 1.0), (1.0, 0.6), (0.85, 0.9)] {
                let p = analytic::nonideal_probs(theta, eta, v, kind);
                norm = norm.max((p.sum() - eta * eta).abs());
                sym = sym.max((p.p_pp - p.p_mm).abs() + (p.p_pm - p.p_mp).abs());
                let corr = p.signed_sum() / (eta * eta);
                ident = ident.max((corr - analytic::correlation(theta, v, kind)).abs());
            }
        }
    }
    checks.push(Check::new("analytic/normalization", norm, 1e-15));
    checks.push(Check::new("analytic/symmetry", sym, 0.0));
    checks.push(Check::new("analytic/correlation-identity", ident, 1e-12));

    let knots = [0.0, FRAC_PI_4, 3.0 * FRAC_PI_4, PI]
        .iter()
        .map(|&t| (analytic::line_g(t) - t.cos()).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new("analytic/line-g-knots", knots, 1e-15));
    let gap = (0..=20_000)
        .map(|i| {
            let t = PI * i as f64 / 20_000.0;
            (analytic::line_g(t) - t.cos()).abs()
        })
        .fold(0.0, f64::max);
    checks.push(Check::new("analytic/line-g-chord-gap", gap, 0.076));
    let outer = (1.0 - analytic::line_g(FRAC_PI_4)) / FRAC_PI_4;
    let inner = (analytic::line_g(FRAC_PI_4) - analytic::line_g(3.0 * FRAC_PI_4)) / FRAC_PI_2;
    checks.push(Check::new(
        "analytic/line-g-slope-ratio",
        (outer / inner - (SQRT_2 - 1.0)).abs(),
        1e-12,
    ));

    let constants = [
        (analytic::max_visibility(1.0, SIN)?, 2.0 / PI),
        (analytic::max_visibility(1.0, LINE)?, FRAC_1_SQRT_2),
        (analytic::SIN_FULL_VISIBILITY_EFFICIENCY, 4.0 / (2.0 + PI)),
        (
            analytic::max_visibility(analytic::SIN_FULL_VISIBILITY_EFFICIENCY, SIN)?,
            1.0,
        ),
        (analytic::BELL_CRITICAL_EFFICIENCY, 8.0 / 9.0),
        (
            analytic::chsh_bound(analytic::CHSH_CRITICAL_EFFICIENCY)?,
            TSIRELSON,
        ),
    ]
    .iter()
    .map(|(got, want)| (got - want).abs())
    .fold(0.0, f64::max);
    checks.push(Check::new("analytic/frontier-constants", constants, 1e-12));

    let mut frontier = 0.0f64;
    for i in 1..=100 {
        let eta = analytic::CHSH_CRITICAL_EFFICIENCY
            + (1.0 - analytic::CHSH_CRITICAL_EFFICIENCY) * i as f64 / 100.0;
        let eta = eta.min(1.0);
        let dev = analytic::max_visibility(eta, LINE)? - analytic::chsh_bound(eta)? / TSIRELSON;
        frontier = frontier.max(dev.abs());
    }
    checks.push(Check::new(
        "analytic/staircase-equals-chsh-frontier",
        frontier,
        1e-12,
    ));

    let mut excess = 0.0f64;
    for row in region_scan(51, 51)? {
        for kind in KINDS {
            if analytic::is_feasible(row.eta, row.v, kind)? {
                let s = analytic::chsh_value(row.v, kind, &ChshAngles::STANDARD);
                excess = excess.max(s - analytic::chsh_bound(row.eta)?);
            }
        }
    }
    checks.push(Check::new("analytic/model-respects-chsh", excess, 1e-12));

    let slack = analytic::bell_generalized_slack(
        analytic::BELL_CRITICAL_EFFICIENCY,
        1.0,
        PI / 3.0,
        2.0 * PI / 3.0,
        PI / 3.0,
    )?;
    checks.push(Check::new(
        "analytic/bell-threshold-slack",
        slack.abs(),
        1e-12,
    ));

    let mut disagreements = 0u32;
    for row in region_scan(51, 51)? {
        for (kind, feasible) in [
            (SIN, row.verdict.sin_feasible),
            (LINE, row.verdict.line_feasible),
        ] {
            if solve_params(row.eta, row.v, kind).is_ok() != feasible {
                disagreements += 1;
            }
        }
    }
    checks.push(Check::new(
        "analytic/solver-matches-classifier",
        disagreements as f64,
        0.0,
    ));
    Ok(())
}

fn quadrature_checks<M: Measure + ?Sized>(checks: &mut Vec<Check>, measure: &M) {
    let options = QuadratureOptions {
        r_cells: 2048,
        subdivisions: 2,
        order: 10,
    };
    for kind in KINDS {
        let params = solve_params(0.7, 0.8, kind).expect("suite point is feasible");
        let (mut marginal, mut coincidence) = (0.0f64, 0.0f64);
        for theta in SUITE_THETAS {
            let masses = integrate_regions(&params, 0.3, 0.3 + theta, measure, options);
            marginal = marginal
                .max((masses.detection_1() - 0.7).abs())
                .max((masses.detection_2() - 0.7).abs());
            let oracle = analytic::nonideal_probs(theta, 0.7, 0.8, kind);
            for (got, want) in masses.quad().as_array().iter().zip(oracle.as_array()) {
                coincidence = coincidence.max((got - want).abs());
            }
        }
        checks.push(Check::new(
            format!("quadrature/{kind}/marginals"),
            marginal,
            1e-9,
        ));
        checks.push(Check::new(
            format!("quadrature/{kind}/coincidences"),
            coincidence,
            1e-9,
        ));
    }
}

struct Suite<'a, M: Measure + ?Sized> {
    n: u64,
    seed: u64,
    measure: &'a M,
    next_stream: u64,
}

impl<M: Measure + ?Sized> Suite<'_, M> {
    fn config(&mut self, params: ModelParams, angle_1: f64, angle_2: f64, n: u64) -> RunConfig {
        let seed = derive_seed(self.seed, self.next_stream);
        self.next_stream += 1;
        RunConfig::new(params, angle_1, angle_2, n, seed)
    }

    fn tally(&mut self, params: ModelParams, angle_1: f64, angle_2: f64) -> Result<Tally> {
        let config = self.config(params, angle_1, angle_2, self.n);
        montecarlo::run_with(&config, self.measure)
    }

    fn run(mut self, checks: &mut Vec<Check>) -> Result<()> {
        let mut not_conserved = 0u32;

        for kind in KINDS {
            for (eta, v) in SUITE_POINTS {
                let params = solve_params(eta, v, kind)?;
                let mut worst = 0.0f64;
                for theta in SUITE_THETAS {
                    let t = self.tally(params, 0.0, theta)?;
                    not_conserved += u32::from(!t.is_conserved());
                    let n = t.n_total;
                    let oracle = analytic::nonideal_probs(theta, eta, v, kind);
                    let counts = [t.n_pp, t.n_pm, t.n_mp, t.n_mm];
                    for (count, p) in counts.iter().zip(oracle.as_array()) {
                        let observed = *count as f64 / n as f64;
                        worst = worst.max(z_score(observed, p, binomial_std_error(p, n)));
                    }
                    let single = eta * (1.0 - eta);
                    for count in [t.n_single_1, t.n_single_2] {
                        let observed = count as f64 / n as f64;
                        worst = worst.max(z_score(observed, single, binomial_std_error(single, n)));
                    }
                }
                checks.push(Check::new(
                    format!("mc/{kind}/eta={eta},v={v}/oracle-equivalence-z"),
                    worst,
                    GATE_SIGMAS,
                ));
            }
        }

        for kind in KINDS {
            let params = solve_params(0.7, 1.0, kind)?;
            let t = self.tally(params, 1.1, 1.1)?;
            not_conserved += u32::from(!t.is_conserved());
            checks.push(Check::new(
                format!("mc/{kind}/anticorrelation-same-sign-count"),
                (t.n_pp + t.n_mm) as f64,
                0.0,
            ));
        }

        for kind in KINDS {
            let params = solve_params(0.7, 0.8, kind)?;
            let mut worst = 0.0f64;
            for angle in [0.0, PI / 5.0, FRAC_PI_2, 4.0 * PI / 3.0] {
                let t = self.tally(params, angle, angle + 0.7)?;
                let n = t.n_total;
                let sigma = binomial_std_error(0.7, n);
                let c = t.coincidences();
                for detected in [c + t.n_single_1, c + t.n_single_2] {
                    worst = worst.max(z_score(detected as f64 / n as f64, 0.7, sigma));
                }
            }
            checks.push(Check::new(
                format!("mc/{kind}/efficiency-isotropy-z"),
                worst,
                GATE_SIGMAS,
            ));

            let t = self.tally(params, 0.4, 0.4)?;
            let e = montecarlo::estimate(&t)?;
            let sigma = correlation_std_error(-0.8, t.coincidences());
            checks.push(Check::new(
                format!("mc/{kind}/visibility-recovery-z"),
                z_score(-e.corr_hat, 0.8, sigma),
                GATE_SIGMAS,
            ));

            let report = montecarlo::independence_check(&t, &params);
            checks.push(Check::new(
                format!("mc/{kind}/independence"),
                report.deviation,
                report.threshold,
            ));
        }

        // Wrap-around: θ = 5π/3 behaves like θ = π/3.
        let params = solve_params(0.7, 0.8, SIN)?;
        let wrapped = analytic::nonideal_probs(5.0 * PI / 3.0, 0.7, 0.8, SIN);
        let reduced = analytic::nonideal_probs(PI / 3.0, 0.7, 0.8, SIN);
        let exact = wrapped
            .as_array()
            .iter()
            .zip(reduced.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new("analytic/wrap-around", exact, 1e-15));
        let t = self.tally(params, 0.0, 5.0 * PI / 3.0)?;
        let n = t.n_total;
        let worst = [t.n_pp, t.n_pm, t.n_mp, t.n_mm]
            .iter()
            .zip(reduced.as_array())
            .map(|(count, p)| z_score(*count as f64 / n as f64, p, binomial_std_error(p, n)))
            .fold(0.0, f64::max);
        checks.push(Check::new("mc/wrap-around-z", worst, GATE_SIGMAS));

        // Determinism across worker counts.
        let config = RunConfig {
            chunk_size: 4_096,
            ..self.config(params, 0.0, 1.0, (self.n / 10).max(10_000))
        };
        let on_pool = |threads: usize| -> Result<Tally> {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .install(|| montecarlo::run_with(&config, self.measure))
        };
        let single = on_pool(1)?;
        let several = on_pool(3)?;
        let repeat = montecarlo::run_with(&config, self.measure)?;
        checks.push(Check::new(
            "mc/determinism-across-workers",
            f64::from(u8::from(single != several) + u8::from(single != repeat)),
            0.0,
        ));

        // CHSH at a point on the staircase frontier.
        let eta = 0.9;
        let v = analytic::max_visibility(eta, LINE)?;
        let params = solve_params(eta, v, LINE)?;
        let seed = derive_seed(self.seed, self.next_stream);
        self.next_stream += 1;
        let report =
            chsh_experiment_with(&params, &ChshAngles::STANDARD, self.n, seed, self.measure)?;
        checks.push(Check::new(
            "chsh/line-frontier-s-vs-bound-z",
            z_score(report.s_mc, report.bound, report.s_std_error),
            GATE_SIGMAS,
        ));
        checks.push(Check::new(
            "chsh/line-frontier-oracle-equals-bound",
            (report.s_oracle - report.bound).abs(),
            1e-12,
        ));

        // Zero efficiency: nothing to correlate, but counts must still add up.
        let params = solve_params(0.0, 1.0, SIN)?;
        let t = self.tally(params, 0.0, 1.0)?;
        not_conserved += u32::from(!t.is_conserved());
        checks.push(Check::new(
            "edge/eta=0/no-detections",
            (t.n_total - t.n_none) as f64,
            0.0,
        ));
        if t.coincidences() == 0 {
            checks.push(Check::skipped("edge/eta=0/correlation"));
        }

        checks.push(Check::new(
            "mc/tally-conservation",
            not_conserved as f64,
            0.0,
        ));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{boundary, measure, DetectorSide, HiddenVariable, Outcome};

    #[test]
    fn rejects_small_budget() {
        assert!(verify_suite(10, 1).is_err());
    }

    #[test]
    fn correct_model_passes_minimum_budget() {
        let report = verify_suite(MIN_PAIRS_BUDGET, 42).unwrap();
        for check in report.failures() {
            eprintln!("{check}");
        }
        assert!(report.passed());
        assert_eq!(
            report.get("edge/eta=0/correlation").unwrap().status,
            CheckStatus::Skipped
        );
        assert_eq!(
            report.get("edge/eta=0/no-detections").unwrap().status,
            CheckStatus::Pass
        );
    }

    /// Error band signed by the half-circle instead of the π-periodic rule.
    fn broken_error_sign(
        lambda: HiddenVariable,
        angle: f64,
        side: DetectorSide,
        params: &ModelParams,
    ) -> Outcome {
        let outcome = measure(lambda, angle, side, params);
        let phi = model::reduce_angle(lambda.phi() - angle);
        let in_pattern_half = (lambda.r() < 0.5) == (side == DetectorSide::One);
        let r = if lambda.r() < 0.5 {
            lambda.r()
        } else {
            lambda.r() - 0.5
        };
        let w = boundary(params.kind(), params.a(), phi);
        let ceiling = params.b() * params.c() + (1.0 - params.c()) * w;
        if in_pattern_half && r >= w && r < ceiling {
            let plus = phi < PI;
            let plus = if side == DetectorSide::Two {
                !plus
            } else {
                plus
            };
            return if plus { Outcome::Plus } else { Outcome::Minus };
        }
        outcome
    }

    #[test]
    fn broken_error_band_sign_is_caught() {
        let report = verify_suite_with(MIN_PAIRS_BUDGET, 42, &broken_error_sign).unwrap();
        assert!(!report.passed());
        let oracle_check = report
            .get("mc/sin/eta=0.7,v=0.8/oracle-equivalence-z")
            .unwrap();
        assert_eq!(oracle_check.status, CheckStatus::Fail);
        assert_eq!(
            report.get("quadrature/sin/coincidences").unwrap().status,
            CheckStatus::Fail
        );
        // Full-visibility configurations have no error band and stay green.
        assert_eq!(
            report
                .get("mc/sin/eta=0.7,v=1/oracle-equivalence-z")
                .unwrap()
                .status,
            CheckStatus::Pass
        );
    }
}
