//! Seeded, chunk-parallel event-by-event simulation.
//!
//! Work is split into fixed-size chunks and chunk `k` draws from ChaCha8
//! stream `k` of the run seed, so a tally depends only on the [`RunConfig`]
//! and never on how rayon schedules the chunks.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

use crate::analytic::ProbQuad;
use crate::error::{Error, Result};
use crate::model::{self, DetectorSide, HiddenVariable, ModelParams, Outcome};

pub const DEFAULT_CHUNK_SIZE: u64 = 65_536;

/// Width of every statistical gate, in standard errors.
pub const GATE_SIGMAS: f64 = 5.0;

/// A source of uniform draws on [0, 1).
pub trait UnitSource {
    fn next_unit(&mut self) -> f64;
}

impl<R: RngCore + ?Sized> UnitSource for R {
    fn next_unit(&mut self) -> f64 {
        rand::Rng::random::<f64>(self)
    }
}

/// Draws λ uniformly from the rectangle, consuming exactly two draws (φ, then r).
pub fn sample_lambda<S: UnitSource + ?Sized>(source: &mut S) -> HiddenVariable {
    let u_phi = source.next_unit();
    let u_r = source.next_unit();
    HiddenVariable::from_unit_draws(u_phi, u_r)
}

/// Substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent seed for item `index` of a larger experiment (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    /// Orientation of detector one.
    pub angle_1: f64,
    /// Orientation of detector two.
    pub angle_2: f64,
    pub n_pairs: u64,
    pub seed: u64,
    pub chunk_size: u64,
}

impl RunConfig {
    pub fn new(params: ModelParams, angle_1: f64, angle_2: f64, n_pairs: u64, seed: u64) -> Self {
        Self {
            params,
            angle_1,
            angle_2,
            n_pairs,
            seed,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::InvalidConfig("n_pairs must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidConfig("chunk_size must be at least 1".into()));
        }
        if !self.angle_1.is_finite() || !self.angle_2.is_finite() {
            return Err(Error::InvalidConfig(
                "detector angles must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome counts of a run. Coincidence cells count pairs where both detectors
/// fired; singles count pairs where exactly that side fired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tally {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    pub n_single_1: u64,
    pub n_single_2: u64,
    pub n_none: u64,
    pub n_total: u64,
}

impl Tally {
    pub fn record(&mut self, first: Outcome, second: Outcome) {
        use Outcome::*;
        match (first, second) {
            (Plus, Plus) => self.n_pp += 1,
            (Plus, Minus) => self.n_pm += 1,
            (Minus, Plus) => self.n_mp += 1,
            (Minus, Minus) => self.n_mm += 1,
            (NoDetection, NoDetection) => self.n_none += 1,
            (_, NoDetection) => self.n_single_1 += 1,
            (NoDetection, _) => self.n_single_2 += 1,
        }
        self.n_total += 1;
    }

    pub fn coincidences(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    /// Every pair lands in exactly one cell.
    pub fn is_conserved(&self) -> bool {
        self.coincidences() + self.n_single_1 + self.n_single_2 + self.n_none == self.n_total
    }

    pub fn merge(self, other: Tally) -> Tally {
        self + other
    }
}

impl Add for Tally {
    type Output = Tally;

    fn add(mut self, rhs: Tally) -> Tally {
        self += rhs;
        self
    }
}

impl AddAssign for Tally {
    fn add_assign(&mut self, rhs: Tally) {
        self.n_pp += rhs.n_pp;
        self.n_pm += rhs.n_pm;
        self.n_mp += rhs.n_mp;
        self.n_mm += rhs.n_mm;
        self.n_single_1 += rhs.n_single_1;
        self.n_single_2 += rhs.n_single_2;
        self.n_none += rhs.n_none;
        self.n_total += rhs.n_total;
    }
}

impl std::iter::Sum for Tally {
    fn sum<I: Iterator<Item = Tally>>(iter: I) -> Tally {
        iter.fold(Tally::default(), Add::add)
    }
}

/// Signature of a single-detector response, so alternative patterns can be
/// pushed through the same engine.
pub trait Measure: Fn(HiddenVariable, f64, DetectorSide, &ModelParams) -> Outcome + Sync {}

impl<F> Measure for F where F: Fn(HiddenVariable, f64, DetectorSide, &ModelParams) -> Outcome + Sync {}

pub fn run(config: &RunConfig) -> Result<Tally> {
    run_with(config, &model::measure)
}

/// Runs the simulation with a caller-supplied detector response.
pub fn run_with<M: Measure + ?Sized>(config: &RunConfig, measure: &M) -> Result<Tally> {
    config.validate()?;
    let chunks = config.n_pairs.div_ceil(config.chunk_size);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let start = k * config.chunk_size;
            let len = config.chunk_size.min(config.n_pairs - start);
            run_chunk(config, measure, k, len)
        })
        .reduce(Tally::default, Add::add);
    Ok(tally)
}

fn run_chunk<M: Measure + ?Sized>(config: &RunConfig, measure: &M, chunk: u64, len: u64) -> Tally {
    let mut rng = substream(config.seed, chunk);
    let mut tally = Tally::default();
    for _ in 0..len {
        let lambda = sample_lambda(&mut rng);
        let first = measure(lambda, config.angle_1, DetectorSide::One, &config.params);
        let second = measure(lambda, config.angle_2, DetectorSide::Two, &config.params);
        tally.record(first, second);
    }
    tally
}

/// Binomial standard error of a proportion `p` estimated from `n` trials.
pub fn binomial_std_error(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// Standard error of a mean of ±1 outcomes with expectation `corr` over `n` coincidences.
pub fn correlation_std_error(corr: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    ((1.0 - corr * corr) / n as f64).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub prob_quad: [f64; 4],
    pub corr: f64,
    pub eta_1: f64,
    pub eta_2: f64,
    pub coincidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    /// Cell counts over all emitted pairs.
    pub prob_quad_hat: ProbQuad,
    /// Correlation over coincidences only.
    pub corr_hat: f64,
    pub eta_1_hat: f64,
    pub eta_2_hat: f64,
    pub coincidence_hat: f64,
    pub std_errors: StdErrors,
}

pub fn estimate(tally: &Tally) -> Result<Estimates> {
    let coincidences = tally.coincidences();
    if coincidences == 0 || tally.n_total == 0 {
        return Err(Error::EmptyTally);
    }
    let n = tally.n_total;
    let frac = |count: u64| count as f64 / n as f64;
    let prob_quad_hat = ProbQuad {
        p_pp: frac(tally.n_pp),
        p_pm: frac(tally.n_pm),
        p_mp: frac(tally.n_mp),
        p_mm: frac(tally.n_mm),
    };
    let signed = tally.n_pp as f64 - tally.n_pm as f64 - tally.n_mp as f64 + tally.n_mm as f64;
    let corr_hat = signed / coincidences as f64;
    let eta_1_hat = frac(coincidences + tally.n_single_1);
    let eta_2_hat = frac(coincidences + tally.n_single_2);
    let coincidence_hat = frac(coincidences);

    Ok(Estimates {
        prob_quad_hat,
        corr_hat,
        eta_1_hat,
        eta_2_hat,
        coincidence_hat,
        std_errors: StdErrors {
            prob_quad: prob_quad_hat.as_array().map(|p| binomial_std_error(p, n)),
            corr: correlation_std_error(corr_hat, coincidences),
            eta_1: binomial_std_error(eta_1_hat, n),
            eta_2: binomial_std_error(eta_2_hat, n),
            coincidence: binomial_std_error(coincidence_hat, n),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    /// |coincidence rate − η²|.
    pub deviation: f64,
    /// Five binomial standard errors around η².
    pub threshold: f64,
    pub pass: bool,
}

/// Checks that both particles are detected with probability η².
pub fn independence_check(tally: &Tally, params: &ModelParams) -> IndependenceReport {
    let expected = params.eta() * params.eta();
    let observed = if tally.n_total == 0 {
        0.0
    } else {
        tally.coincidences() as f64 / tally.n_total as f64
    };
    let deviation = (observed - expected).abs();
    let threshold = GATE_SIGMAS * binomial_std_error(expected, tally.n_total);
    IndependenceReport {
        deviation,
        threshold,
        // Absorb the rounding of η² itself when the gate collapses to zero.
        pass: deviation <= threshold + 1e-15,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::nonideal_probs;
    use crate::model::{solve_params, PatternKind};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    struct Constant(f64);

    impl UnitSource for Constant {
        fn next_unit(&mut self) -> f64 {
            self.0
        }
    }

    struct Counting(u32);

    impl UnitSource for Counting {
        fn next_unit(&mut self) -> f64 {
            self.0 += 1;
            0.25
        }
    }

    fn sin(eta: f64, v: f64) -> ModelParams {
        solve_params(eta, v, PatternKind::SymmetrizedSinusoidal).unwrap()
    }

    #[test]
    fn sample_lambda_scales_unit_draws() {
        let l = sample_lambda(&mut Constant(0.0));
        assert_eq!((l.phi(), l.r()), (0.0, 0.0));
        let l = sample_lambda(&mut Constant(0.5));
        assert_eq!((l.phi(), l.r()), (PI, 0.5));
        let mut counter = Counting(0);
        sample_lambda(&mut counter);
        assert_eq!(counter.0, 2);
    }

    #[test]
    fn sample_lambda_golden_value() {
        let mut rng = substream(42, 0);
        let l = sample_lambda(&mut rng);
        let again = sample_lambda(&mut substream(42, 0));
        assert_eq!(l, again);
        assert_eq!(l.phi().to_bits(), GOLDEN_PHI_BITS, "phi = {}", l.phi());
        assert_eq!(l.r().to_bits(), GOLDEN_R_BITS, "r = {}", l.r());
    }

    // First draw of stream 0 under seed 42, frozen at first implementation.
    const GOLDEN_PHI_BITS: u64 = 4_616_509_914_213_968_204;
    const GOLDEN_R_BITS: u64 = 4_606_734_539_489_062_706;

    #[test]
    fn zero_efficiency_detects_nothing() {
        let cfg = RunConfig::new(sin(0.0, 1.0), 0.0, 1.0, 10_000, 7);
        let t = run(&cfg).unwrap();
        assert_eq!(t.n_none, t.n_total);
        assert_eq!(t.n_total, 10_000);
        assert_eq!(estimate(&t), Err(Error::EmptyTally));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = RunConfig::new(sin(0.5, 1.0), 0.0, 0.0, 0, 1);
        assert!(matches!(run(&cfg), Err(Error::InvalidConfig(_))));
        cfg.n_pairs = 10;
        cfg.chunk_size = 0;
        assert!(matches!(run(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn equal_angles_never_agree_at_full_visibility() {
        let cfg = RunConfig::new(sin(0.7, 1.0), 0.4, 0.4, 1_000_000, 11);
        let t = run(&cfg).unwrap();
        assert_eq!(t.n_pp, 0);
        assert_eq!(t.n_mm, 0);
        assert!(t.coincidences() > 0);
    }

    #[test]
    fn worker_count_does_not_change_tally() {
        let cfg = RunConfig {
            chunk_size: 1_000,
            ..RunConfig::new(sin(0.7, 0.8), 0.0, 1.0, 50_500, 3)
        };
        let on = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run(&cfg).unwrap())
        };
        let single = on(1);
        assert_eq!(single, on(4));
        assert_eq!(single, on(3));
        // Sequential reference, chunk by chunk.
        let sequential: Tally = (0..51u64)
            .map(|k| run_chunk(&cfg, &model::measure, k, if k == 50 { 500 } else { 1_000 }))
            .sum();
        assert_eq!(single, sequential);
    }

    #[test]
    fn estimate_examples() {
        let t = Tally {
            n_pm: 50,
            n_mp: 50,
            n_total: 100,
            ..Tally::default()
        };
        assert_eq!(estimate(&t).unwrap().corr_hat, -1.0);
        let t = Tally {
            n_pp: 10,
            n_pm: 10,
            n_mp: 10,
            n_mm: 10,
            n_single_1: 5,
            n_single_2: 3,
            n_none: 2,
            n_total: 50,
        };
        let e = estimate(&t).unwrap();
        assert_eq!(e.corr_hat, 0.0);
        assert_eq!(e.eta_1_hat, 45.0 / 50.0);
        assert_eq!(e.eta_2_hat, 43.0 / 50.0);
        assert_eq!(e.coincidence_hat, 0.8);
    }

    #[test]
    fn independence_examples() {
        let p = sin(0.7, 1.0);
        let exact = Tally {
            n_pp: 10,
            n_pm: 15,
            n_mp: 15,
            n_mm: 9,
            n_single_1: 21,
            n_single_2: 21,
            n_none: 9,
            n_total: 100,
        };
        let r = independence_check(&exact, &p);
        assert!(r.deviation < 1e-15 && r.pass);

        let n = 10_000_000u64;
        let coincidences = (0.49 * 1.1 * n as f64).round() as u64;
        let corrupted = Tally {
            n_pm: coincidences,
            n_none: n - coincidences,
            n_total: n,
            ..Tally::default()
        };
        let r = independence_check(&corrupted, &p);
        assert!(!r.pass);
        assert!((r.threshold - 7.9e-4).abs() < 1e-5);
    }

    #[test]
    fn coincidence_rate_matches_oracle() {
        let p = sin(0.7, 1.0);
        let n = 2_000_000;
        let t = run(&RunConfig::new(p, 0.0, PI / 3.0, n, 42)).unwrap();
        let oracle = nonideal_probs(PI / 3.0, 0.7, 1.0, PatternKind::SymmetrizedSinusoidal);
        let p_pp = t.n_pp as f64 / n as f64;
        assert!((p_pp - oracle.p_pp).abs() <= GATE_SIGMAS * binomial_std_error(oracle.p_pp, n));
        assert!(independence_check(&t, &p).pass);
    }

    fn tally_strategy() -> impl Strategy<Value = Tally> {
        prop::array::uniform7(0u64..1_000_000).prop_map(|c| Tally {
            n_pp: c[0],
            n_pm: c[1],
            n_mp: c[2],
            n_mm: c[3],
            n_single_1: c[4],
            n_single_2: c[5],
            n_none: c[6],
            n_total: c.iter().sum(),
        })
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(a in tally_strategy(), b in tally_strategy(), c in tally_strategy()) {
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert!((a + b + c).is_conserved());
        }

        #[test]
        fn runs_conserve_pairs(n in 1u64..5_000, chunk in 1u64..700, seed in any::<u64>(), theta in 0.0f64..7.0) {
            let cfg = RunConfig { chunk_size: chunk, ..RunConfig::new(sin(0.6, 0.7), 0.0, theta, n, seed) };
            let t = run(&cfg).unwrap();
            prop_assert!(t.is_conserved());
            prop_assert_eq!(t.n_total, n);
            prop_assert_eq!(t, run(&cfg).unwrap());
        }

        #[test]
        fn estimates_stay_in_range(t in tally_strategy()) {
            if let Ok(e) = estimate(&t) {
                prop_assert!((-1.0..=1.0).contains(&e.corr_hat));
                for p in e.prob_quad_hat.as_array() {
                    prop_assert!((0.0..=1.0).contains(&p));
                }
                prop_assert!((0.0..=1.0).contains(&e.eta_1_hat));
                prop_assert!((0.0..=1.0).contains(&e.coincidence_hat));
            }
        }
    }
}
