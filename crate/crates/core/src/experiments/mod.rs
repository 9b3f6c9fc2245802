//! Orchestrated reproductions: θ-sweeps against the closed forms, four-setting
//! CHSH runs against the efficiency-dependent bound, and (η, v) region scans.

mod verify;

pub use verify::{verify_suite, verify_suite_with, Check, CheckStatus, VerifyReport};

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, ChshAngles, RegionVerdict};
use crate::error::{Error, Result};
use crate::model::{self, ModelParams};
use crate::montecarlo::{
    self, binomial_std_error, correlation_std_error, derive_seed, Measure, RunConfig, Tally,
    GATE_SIGMAS,
};

/// One θ of a sweep. Field names double as the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub p_pp_mc: f64,
    pub p_pm_mc: f64,
    pub p_mp_mc: f64,
    pub p_mm_mc: f64,
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
    /// Undefined when the row recorded no coincidences.
    pub corr_mc: Option<f64>,
    pub corr: f64,
    pub n_pairs: u64,
    /// Seed of this row's own substream.
    pub seed: u64,
    #[serde(skip)]
    pub coincidences: u64,
}

impl SweepRow {
    fn from_tally(theta: f64, params: &ModelParams, tally: &Tally, seed: u64) -> Self {
        let n = tally.n_total as f64;
        let oracle = analytic::nonideal_probs(theta, params.eta(), params.v(), params.kind());
        let coincidences = tally.coincidences();
        let corr_mc = montecarlo::estimate(tally).ok().map(|e| e.corr_hat);
        SweepRow {
            theta,
            p_pp_mc: tally.n_pp as f64 / n,
            p_pm_mc: tally.n_pm as f64 / n,
            p_mp_mc: tally.n_mp as f64 / n,
            p_mm_mc: tally.n_mm as f64 / n,
            p_pp: oracle.p_pp,
            p_pm: oracle.p_pm,
            p_mp: oracle.p_mp,
            p_mm: oracle.p_mm,
            corr_mc,
            corr: analytic::correlation(theta, params.v(), params.kind()),
            n_pairs: tally.n_total,
            seed,
            coincidences,
        }
    }

    pub fn mc_probs(&self) -> [f64; 4] {
        [self.p_pp_mc, self.p_pm_mc, self.p_mp_mc, self.p_mm_mc]
    }

    pub fn oracle_probs(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }

    /// Standard error of `corr_mc` under the oracle correlation.
    pub fn corr_std_error(&self) -> f64 {
        correlation_std_error(self.corr, self.coincidences)
    }
}

/// Sweeps θ uniformly over [0, π] (inclusive); row `i` runs on seed `derive_seed(seed, i)`.
pub fn theta_sweep(
    params: &ModelParams,
    n_steps: usize,
    pairs_per_step: u64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if n_steps < 2 {
        return Err(Error::InvalidConfig(
            "a sweep needs at least 2 steps".into(),
        ));
    }
    if pairs_per_step == 0 {
        return Err(Error::InvalidConfig(
            "pairs per step must be at least 1".into(),
        ));
    }
    (0..n_steps)
        .into_par_iter()
        .map(|i| {
            let theta = PI * i as f64 / (n_steps - 1) as f64;
            let row_seed = derive_seed(seed, i as u64);
            let tally = montecarlo::run(&RunConfig::new(
                *params,
                0.0,
                theta,
                pairs_per_step,
                row_seed,
            ))?;
            Ok(SweepRow::from_tally(theta, params, &tally, row_seed))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub max_abs_corr_dev: f64,
    /// Largest deviation of any MC column from its oracle, in standard errors.
    pub max_z: f64,
    pub pass: bool,
}

/// Five-sigma gate over every probability column and the correlation of each row.
pub fn sweep_summary(rows: &[SweepRow]) -> SweepSummary {
    let mut max_abs_corr_dev: f64 = 0.0;
    let mut max_z: f64 = 0.0;
    let mut pass = true;
    let mut gate = |dev: f64, sigma: f64| {
        let z = if sigma > 0.0 {
            dev / sigma
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
        if z > GATE_SIGMAS {
            pass = false;
        }
    };
    for row in rows {
        for (mc, oracle) in row.mc_probs().iter().zip(row.oracle_probs()) {
            gate((mc - oracle).abs(), binomial_std_error(oracle, row.n_pairs));
        }
        if let Some(corr_mc) = row.corr_mc {
            let dev = (corr_mc - row.corr).abs();
            max_abs_corr_dev = max_abs_corr_dev.max(dev);
            gate(dev, row.corr_std_error());
        }
    }
    SweepSummary {
        max_abs_corr_dev,
        max_z,
        pass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub angle_1: f64,
    pub angle_2: f64,
    pub corr_mc: f64,
    pub std_error: f64,
    pub corr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub angles: ChshAngles,
    /// Settings AC, AD, BC, BD.
    pub correlations: [CorrelationEstimate; 4],
    pub s_mc: f64,
    pub s_std_error: f64,
    pub s_oracle: f64,
    pub bound: f64,
    /// `s_mc > bound`, with no allowance for sampling noise.
    pub violated_mc: bool,
    /// `s_mc` exceeds the bound by more than five standard errors.
    pub significant_violation: bool,
}

/// Runs the four CHSH settings, each on its own derived seed.
pub fn chsh_experiment(
    params: &ModelParams,
    angles: &ChshAngles,
    pairs_per_setting: u64,
    seed: u64,
) -> Result<ChshReport> {
    chsh_experiment_with(params, angles, pairs_per_setting, seed, &model::measure)
}

pub fn chsh_experiment_with<M: Measure + ?Sized>(
    params: &ModelParams,
    angles: &ChshAngles,
    pairs_per_setting: u64,
    seed: u64,
    measure: &M,
) -> Result<ChshReport> {
    let bound = analytic::chsh_bound(params.eta())?;
    let settings = angles.settings();
    let estimates = settings
        .par_iter()
        .enumerate()
        .map(|(i, &(angle_1, angle_2))| {
            let config = RunConfig::new(
                *params,
                angle_1,
                angle_2,
                pairs_per_setting,
                derive_seed(seed, i as u64),
            );
            let est = montecarlo::estimate(&montecarlo::run_with(&config, measure)?)?;
            Ok(CorrelationEstimate {
                angle_1,
                angle_2,
                corr_mc: est.corr_hat,
                std_error: est.std_errors.corr,
                corr: analytic::correlation(angle_2 - angle_1, params.v(), params.kind()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let correlations: [CorrelationEstimate; 4] =
        estimates.try_into().expect("exactly four CHSH settings");
    let [ac, ad, bc, bd] = correlations.map(|e| e.corr_mc);
    let s_mc = (ac - ad).abs() + (bc + bd).abs();
    let s_std_error = correlations
        .iter()
        .map(|e| e.std_error * e.std_error)
        .sum::<f64>()
        .sqrt();
    Ok(ChshReport {
        angles: *angles,
        correlations,
        s_mc,
        s_std_error,
        s_oracle: analytic::chsh_value(params.v(), params.kind(), angles),
        bound,
        violated_mc: s_mc > bound,
        significant_violation: s_mc - bound > GATE_SIGMAS * s_std_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub eta: f64,
    pub v: f64,
    #[serde(flatten)]
    pub verdict: RegionVerdict,
}

/// Classifies a uniform grid: η = i/(eta_steps − 1) for i ≥ 1 (the η = 0 column is
/// dropped), v = j/(v_steps − 1). Rows are η-major, ascending.
pub fn region_scan(eta_steps: usize, v_steps: usize) -> Result<Vec<RegionRow>> {
    if eta_steps < 2 || v_steps < 2 {
        return Err(Error::InvalidConfig(
            "region scan needs at least 2 steps per axis".into(),
        ));
    }
    let mut rows = Vec::with_capacity((eta_steps - 1) * v_steps);
    for i in 1..eta_steps {
        let eta = i as f64 / (eta_steps - 1) as f64;
        for j in 0..v_steps {
            let v = j as f64 / (v_steps - 1) as f64;
            rows.push(RegionRow {
                eta,
                v,
                verdict: analytic::classify_region(eta, v)?,
            });
        }
    }
    Ok(rows)
}
