//! Deterministic integration of the detector-pattern regions.
//!
//! The pair-outcome map `λ ↦ (o₁, o₂)` is integrated over the λ rectangle
//! without sampling noise. For a fixed φ the outcome is piecewise constant in
//! r, so each column is scanned on a uniform r-grid and every change of outcome
//! is located by bisection, which makes the column lengths exact to rounding.
//! Along φ the column lengths are smooth between the angles where any pattern
//! can change (multiples of π/4 relative to either detector), so composite
//! Gauss–Legendre on those pieces converges spectrally.
//!
//! The detector response is taken as a black box, which keeps this an oracle
//! that is independent of the closed forms in [`crate::analytic`].

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::analytic::ProbQuad;
use crate::model::{reduce_angle, DetectorSide, HiddenVariable, ModelParams, Outcome};
use crate::montecarlo::Measure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureOptions {
    /// Uniform r-cells per column before bisection.
    pub r_cells: usize,
    /// Subdivisions of every smooth φ-piece.
    pub subdivisions: usize,
    /// Gauss–Legendre nodes per subdivision.
    pub order: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            r_cells: 4096,
            subdivisions: 4,
            order: 12,
        }
    }
}

/// Probability mass of every joint outcome class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionMasses {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
    pub single_1: f64,
    pub single_2: f64,
    pub none: f64,
}

impl RegionMasses {
    pub fn quad(&self) -> ProbQuad {
        ProbQuad {
            p_pp: self.p_pp,
            p_pm: self.p_pm,
            p_mp: self.p_mp,
            p_mm: self.p_mm,
        }
    }

    pub fn coincidence(&self) -> f64 {
        self.p_pp + self.p_pm + self.p_mp + self.p_mm
    }

    pub fn detection_1(&self) -> f64 {
        self.coincidence() + self.single_1
    }

    pub fn detection_2(&self) -> f64 {
        self.coincidence() + self.single_2
    }

    pub fn total(&self) -> f64 {
        self.coincidence() + self.single_1 + self.single_2 + self.none
    }

    fn add_scaled(&mut self, other: &RegionMasses, weight: f64) {
        self.p_pp += weight * other.p_pp;
        self.p_pm += weight * other.p_pm;
        self.p_mp += weight * other.p_mp;
        self.p_mm += weight * other.p_mm;
        self.single_1 += weight * other.single_1;
        self.single_2 += weight * other.single_2;
        self.none += weight * other.none;
    }

    fn add_outcome(&mut self, pair: (Outcome, Outcome), length: f64) {
        use Outcome::*;
        let cell = match pair {
            (Plus, Plus) => &mut self.p_pp,
            (Plus, Minus) => &mut self.p_pm,
            (Minus, Plus) => &mut self.p_mp,
            (Minus, Minus) => &mut self.p_mm,
            (NoDetection, NoDetection) => &mut self.none,
            (_, NoDetection) => &mut self.single_1,
            (NoDetection, _) => &mut self.single_2,
        };
        *cell += length;
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut derivative = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 1 { x } else { p1 };
            let p_prev = if order == 1 { 1.0 } else { p0 };
            derivative = n * (x * p - p_prev) / (x * x - 1.0);
            let step = p / derivative;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Angles in [0, 2π] between which every pattern is smooth in φ.
fn smooth_pieces(angles: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = angles
        .iter()
        .flat_map(|&alpha| (0..8).map(move |k| reduce_angle(alpha + k as f64 * FRAC_PI_4)))
        .collect();
    cuts.push(0.0);
    cuts.push(TAU);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    cuts
}

struct Column<'a, M: Measure + ?Sized> {
    params: &'a ModelParams,
    angle_1: f64,
    angle_2: f64,
    measure: &'a M,
}

impl<M: Measure + ?Sized> Column<'_, M> {
    fn outcome(&self, phi: f64, r: f64) -> (Outcome, Outcome) {
        let lambda = HiddenVariable::new(phi, r).expect("column point inside the rectangle");
        (
            (self.measure)(lambda, self.angle_1, DetectorSide::One, self.params),
            (self.measure)(lambda, self.angle_2, DetectorSide::Two, self.params),
        )
    }

    /// Lengths in r of every joint outcome at fixed φ.
    fn integrate(&self, phi: f64, cells: usize) -> RegionMasses {
        let top = 1.0 - f64::EPSILON / 2.0;
        let edge = |k: usize| {
            if k == cells {
                top
            } else {
                k as f64 / cells as f64
            }
        };
        let mut masses = RegionMasses::default();
        let mut previous = self.outcome(phi, 0.0);
        for k in 0..cells {
            let (lo, hi) = (edge(k), edge(k + 1));
            let end = self.outcome(phi, hi);
            let mut start = lo;
            let mut current = previous;
            while current != end {
                // Locate the first change of outcome in (start, hi].
                let (mut a, mut b) = (start, hi);
                while b - a > 1e-16 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if self.outcome(phi, mid) == current {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                masses.add_outcome(current, b - start);
                start = b;
                current = self.outcome(phi, b);
            }
            masses.add_outcome(current, hi - start);
            previous = end;
        }
        masses
    }
}

/// Integrates all joint outcome regions for detectors at `angle_1` and `angle_2`.
pub fn integrate_regions<M: Measure + ?Sized>(
    params: &ModelParams,
    angle_1: f64,
    angle_2: f64,
    measure: &M,
    options: QuadratureOptions,
) -> RegionMasses {
    let column = Column {
        params,
        angle_1,
        angle_2,
        measure,
    };
    let (nodes, weights) = gauss_legendre(options.order);
    let cuts = smooth_pieces(&[angle_1, angle_2]);
    let mut total = RegionMasses::default();
    for piece in cuts.windows(2) {
        let width = (piece[1] - piece[0]) / options.subdivisions as f64;
        for s in 0..options.subdivisions {
            let left = piece[0] + s as f64 * width;
            for (x, w) in nodes.iter().zip(&weights) {
                let phi = left + 0.5 * width * (x + 1.0);
                let col = column.integrate(phi, options.r_cells);
                total.add_scaled(&col, 0.5 * width * w / TAU);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::nonideal_probs;
    use crate::model::{measure, solve_params, PatternKind};

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(12);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // ∫ x^22 over [−1, 1] = 2/23, exact for 12 nodes.
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((integral - 2.0 / 23.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
    }

    #[test]
    fn smooth_cosine_integral() {
        // Sanity check of the φ rule on a smooth integrand: ∫ sin² over [0, 2π] = π.
        let (nodes, weights) = gauss_legendre(12);
        let cuts = smooth_pieces(&[0.3]);
        let mut sum = 0.0;
        for piece in cuts.windows(2) {
            let h = piece[1] - piece[0];
            for (x, w) in nodes.iter().zip(&weights) {
                let phi = piece[0] + 0.5 * h * (x + 1.0);
                sum += 0.5 * h * w * phi.sin().powi(2);
            }
        }
        assert!((sum - PI).abs() < 1e-12);
    }

    #[test]
    fn regions_match_closed_forms() {
        let options = QuadratureOptions {
            r_cells: 1024,
            subdivisions: 2,
            order: 10,
        };
        for kind in [
            PatternKind::SymmetrizedSinusoidal,
            PatternKind::SymmetrizedStaircase,
        ] {
            let p = solve_params(0.7, 0.8, kind).unwrap();
            for theta in [0.0, 0.9, PI / 3.0, 2.5, PI] {
                let m = integrate_regions(&p, 0.2, 0.2 + theta, &measure, options);
                let oracle = nonideal_probs(theta, 0.7, 0.8, kind);
                for (got, want) in m.quad().as_array().iter().zip(oracle.as_array()) {
                    assert!(
                        (got - want).abs() < 1e-9,
                        "{kind} θ={theta}: {got} vs {want}"
                    );
                }
                assert!((m.detection_1() - 0.7).abs() < 1e-9);
                assert!((m.detection_2() - 0.7).abs() < 1e-9);
                assert!((m.total() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unsymmetrized_marginals_from_regions() {
        let p = solve_params(0.6, 1.0, PatternKind::UnsymmetrizedSinusoidal).unwrap();
        let m = integrate_regions(&p, 0.0, 1.0, &measure, QuadratureOptions::default());
        let (eta_1, eta_2) = crate::model::unsymmetrized_marginals(p.a(), p.b()).unwrap();
        assert!((m.detection_1() - eta_1).abs() < 1e-9);
        assert!((m.detection_2() - eta_2).abs() < 1e-9);
        // Half of the symmetrized coincidence probability.
        let want = 0.5 * nonideal_probs(1.0, 0.6, 1.0, PatternKind::SymmetrizedSinusoidal).p_pp;
        assert!((m.p_pp - want).abs() < 1e-9);
    }
}
