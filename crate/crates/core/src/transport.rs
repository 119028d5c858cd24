//! Excitation transport between the left and right halves of the chain.
//!
//! T_p = (P_left - P_right) / sum_mu P_mu with P_mu = |A_mu(inf)|^2. For odd
//! N the central atom is left out of both halves but still counts in the
//! denominator.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{steady_state, two_atom_terms, ValidityReport};
use crate::error::{Error, Result};
use crate::model::{
    build_geometry, build_interaction_matrix, default_xi_axis, ChiralCoupling, DriveParams,
    FluctuationSpec,
};
use crate::rng::derive_seed;

/// Default number of disorder samples per grid point.
pub const DEFAULT_SAMPLES: usize = 200;

/// Left-right population imbalance of a chain.
pub fn transport_metric(populations: &[f64]) -> Result<f64> {
    let n = populations.len();
    if n < 2 {
        return Err(Error::UndefinedMetric(format!(
            "needs at least two atoms, got {n}"
        )));
    }
    let total: f64 = populations.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::UndefinedMetric(format!(
            "total population must be positive and finite, got {total}"
        )));
    }
    let half = n / 2;
    let left: f64 = populations[..half].iter().sum();
    // For odd N, skip the central atom at index half.
    let right: f64 = populations[n - half..].iter().sum();
    Ok(((left - right) / total).clamp(-1.0, 1.0))
}

/// Two-atom transport in closed form (gamma = 1):
///
/// ```text
/// T_p = (|i d2 - 1/2 + gL e^{-i xi}|^2 - |i d1 - 1/2 + (1 - gL) e^{-i xi}|^2)
///     / (|i d2 - 1/2 + gL e^{-i xi}|^2 + |i d1 - 1/2 + (1 - gL) e^{-i xi}|^2)
/// ```
pub fn two_atom_transport(delta1: f64, delta2: f64, gamma_l: f64, xi: f64) -> Result<f64> {
    let (num1, num2, den) = two_atom_terms(delta1, delta2, gamma_l, xi);
    let scale = (delta1.abs() + 0.5) * (delta2.abs() + 0.5) + 0.25;
    if !(den.norm() > 1e-12 * scale) {
        return Err(Error::NoSteadyState {
            smallest_singular_value: den.norm(),
            threshold: 1e-12 * scale,
        });
    }
    let (p1, p2) = (num1.norm_sqr(), num2.norm_sqr());
    if !(p1 + p2 > 0.0) {
        return Err(Error::UndefinedMetric("both numerators vanish".into()));
    }
    Ok((p1 - p2) / (p1 + p2))
}

/// One point of a (N, D, delta, xi) parameter grid with uniform detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub n_atoms: usize,
    pub xi: f64,
    pub delta: f64,
    pub directionality: f64,
}

impl GridPoint {
    pub fn new(n_atoms: usize, xi: f64, delta: f64, directionality: f64) -> Self {
        Self {
            n_atoms,
            xi,
            delta,
            directionality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportResult {
    pub point: GridPoint,
    pub tp: f64,
    pub populations: Vec<f64>,
    pub validity: ValidityReport,
    pub smallest_singular_value: f64,
    pub relaxation_rate: f64,
    pub flags: Vec<&'static str>,
}

impl TransportResult {
    pub fn total_population(&self) -> f64 {
        self.validity.total_population
    }
}

/// Steady-state transport at a single point, optionally on a disordered chain.
pub fn evaluate_point(
    point: &GridPoint,
    rabi: f64,
    fluct: Option<&FluctuationSpec>,
) -> Result<TransportResult> {
    let geom = build_geometry(point.n_atoms, point.xi, fluct)?;
    let coupling = ChiralCoupling::from_directionality(point.directionality)?;
    let drive = DriveParams::uniform(rabi, point.delta, point.n_atoms);
    let v = build_interaction_matrix(&geom, &drive, &coupling)?;
    let sol = steady_state(&v, rabi)?;
    let populations = sol.populations();
    let tp = transport_metric(&populations)?;
    Ok(TransportResult {
        point: *point,
        tp,
        validity: sol.validity(),
        smallest_singular_value: sol.smallest_singular_value,
        relaxation_rate: sol.relaxation_rate,
        flags: sol.flags(),
        populations,
    })
}

/// Cartesian parameter grid. Iteration order is N, then D, then delta, with
/// xi varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub xi: Vec<f64>,
    pub delta: Vec<f64>,
    pub directionality: Vec<f64>,
    pub n_atoms: Vec<usize>,
}

impl SweepGrid {
    pub fn new(
        xi: Vec<f64>,
        delta: Vec<f64>,
        directionality: Vec<f64>,
        n_atoms: Vec<usize>,
    ) -> Result<Self> {
        let grid = Self {
            xi,
            delta,
            directionality,
            n_atoms,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 401-point xi axis over [0, 2 pi] at fixed N, delta and D.
    pub fn xi_scan(n_atoms: usize, delta: f64, directionality: f64) -> Self {
        Self {
            xi: default_xi_axis(),
            delta: vec![delta],
            directionality: vec![directionality],
            n_atoms: vec![n_atoms],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("xi", self.xi.is_empty()),
            ("delta", self.delta.is_empty()),
            ("directionality", self.directionality.is_empty()),
            ("n_atoms", self.n_atoms.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidParameter(format!(
                    "grid axis {name} is empty"
                )));
            }
        }
        if let Some(d) = self
            .directionality
            .iter()
            .find(|d| !(-1.0..=1.0).contains(*d))
        {
            return Err(Error::InvalidParameter(format!(
                "directionality {d} outside [-1, 1]"
            )));
        }
        if self.n_atoms.contains(&0) {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if let Some(x) = self.xi.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "xi {x} must be finite and >= 0"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.xi.len() * self.delta.len() * self.directionality.len() * self.n_atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &n in &self.n_atoms {
            for &d in &self.directionality {
                for &delta in &self.delta {
                    for &xi in &self.xi {
                        out.push(GridPoint::new(n, xi, delta, d));
                    }
                }
            }
        }
        out
    }
}

/// A sweep row: the grid point and either its transport or why it failed.
#[derive(Debug)]
pub struct SweepRow {
    pub point: GridPoint,
    pub outcome: Result<TransportResult>,
}

/// Evaluate every grid point in parallel. Per-point failures are kept in
/// their row; rows come back in grid order.
pub fn sweep(grid: &SweepGrid, rabi: f64) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    Ok(grid
        .points()
        .into_par_iter()
        .map(|point| SweepRow {
            outcome: evaluate_point(&point, rabi, None),
            point,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub point: GridPoint,
    pub fraction: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 normalization).
    pub std: f64,
    /// Samples that produced a defined T_p.
    pub samples: usize,
    /// Samples excluded because T_p was undefined.
    pub undefined: usize,
    pub base_seed: u64,
}

/// Mean and spread of T_p over `n_samples` disordered chains.
///
/// Sample `i` draws its geometry from seed `base_seed ^ splitmix64(i)`;
/// moments are accumulated in index order, so the result does not depend on
/// how samples are scheduled across threads.
pub fn fluctuation_ensemble(
    point: &GridPoint,
    fluct: &FluctuationSpec,
    n_samples: usize,
    rabi: f64,
) -> Result<EnsembleStats> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "ensemble needs at least 2 samples, got {n_samples}"
        )));
    }
    let tps: Vec<Option<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let spec = FluctuationSpec {
                fraction: fluct.fraction,
                seed: derive_seed(fluct.seed, i),
            };
            evaluate_point(point, rabi, Some(&spec)).ok().map(|r| r.tp)
        })
        .collect();

    // Welford keeps identical samples at exactly zero spread.
    let (mut count, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for tp in tps.iter().flatten() {
        count += 1;
        let delta = tp - mean;
        mean += delta / count as f64;
        m2 += delta * (tp - mean);
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(format!(
            "all {n_samples} disorder samples were undefined"
        )));
    }
    let std = if count > 1 {
        (m2 / (count - 1) as f64).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(EnsembleStats {
        point: *point,
        fraction: fluct.fraction,
        mean,
        std,
        samples: count,
        undefined: n_samples - count,
        base_seed: fluct.seed,
    })
}

/// xi of the smallest T_p in a scan, ignoring undefined points.
pub fn argmin_xi(rows: &[SweepRow]) -> Option<(f64, f64)> {
    rows.iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|t| (r.point.xi, t.tp)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Full width of the dip around the minimum of a scan, measured where T_p
/// rises back to half the minimum value (linear interpolation between grid
/// points). Returns `None` when the minimum is not negative or a side never
/// recrosses half the minimum.
pub fn half_minimum_width(xs: &[f64], tps: &[f64]) -> Option<f64> {
    let (imin, &tmin) = tps.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    if tmin >= 0.0 {
        return None;
    }
    let half = 0.5 * tmin;
    let cross = |i: usize, j: usize| -> f64 {
        let (x0, x1, y0, y1) = (xs[i], xs[j], tps[i], tps[j]);
        x0 + (half - y0) * (x1 - x0) / (y1 - y0)
    };
    let right = (imin..xs.len() - 1)
        .find(|&i| tps[i + 1] > half)
        .map(|i| cross(i, i + 1))?;
    let left = (1..=imin)
        .rev()
        .find(|&i| tps[i - 1] > half)
        .map(|i| cross(i, i - 1))?;
    Some(right - left)
}

/// Reflect xi into the mirror point 2 pi - xi.
pub fn mirror_xi(xi: f64) -> f64 {
    2.0 * PI - xi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as Complex;
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        assert_eq!(transport_metric(&[1.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            transport_metric(&[0.2, 0.3, 0.2, 0.3]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            transport_metric(&[0.4, 0.2, 0.4]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn odd_chain_center_only_in_denominator() {
        // (1 - 0) / (1 + 2 + 0)
        assert_abs_diff_eq!(
            transport_metric(&[1.0, 2.0, 0.0]).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        // N = 5: left {0, 1}, right {3, 4}
        let tp = transport_metric(&[0.1, 0.2, 5.0, 0.3, 0.0]).unwrap();
        assert_abs_diff_eq!(tp, (0.3 - 0.3) / 5.6, epsilon = 1e-15);
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(
            transport_metric(&[1.0]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            transport_metric(&[0.0, 0.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn resonant_left_atom_pins_transport() {
        let tp = two_atom_transport(0.0, 0.5, 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(tp, 1.0, epsilon = 1e-15);
        let tp = two_atom_transport(0.0, -0.5, 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(tp, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn equal_detunings_reciprocal_pair_is_balanced() {
        for &xi in &[0.3, 1.7, 2.5, 4.4] {
            for &delta in &[-1.0, 0.4, 2.0] {
                assert_abs_diff_eq!(
                    two_atom_transport(delta, delta, 0.5, xi).unwrap(),
                    0.0,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn closed_form_matches_pipeline_for_cascaded_red_detuned_pair() {
        let xi = PI / 2.0;
        let closed = two_atom_transport(-1.0, 0.0, 0.0, xi).unwrap();
        let geom = build_geometry(2, xi, None).unwrap();
        let v = build_interaction_matrix(
            &geom,
            &DriveParams::new(0.01, vec![-1.0, 0.0]),
            &ChiralCoupling::from_directionality(1.0).unwrap(),
        )
        .unwrap();
        let s = steady_state(&v, 0.01).unwrap();
        let pipeline = transport_metric(&s.populations()).unwrap();
        assert_abs_diff_eq!(closed, pipeline, epsilon = 1e-13);
        // numerators -1/2 and -i - 1/2 + e^{-i pi/2}
        let p1 = (Complex::new(-0.5, 0.0)).norm_sqr();
        let p2 = (Complex::new(-0.5, -1.0) + Complex::new(0.0, -1.0)).norm_sqr();
        assert_abs_diff_eq!(closed, (p1 - p2) / (p1 + p2), epsilon = 1e-15);
    }

    #[test]
    fn sweep_rows_keep_order_and_failures() {
        let grid = SweepGrid::new(vec![0.5, PI, 2.0], vec![0.0], vec![0.0], vec![2]).unwrap();
        let rows = sweep(&grid, 0.01).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].point.xi, PI);
        assert!(matches!(rows[1].outcome, Err(Error::NoSteadyState { .. })));
        assert!(rows[0].outcome.is_ok() && rows[2].outcome.is_ok());
    }

    #[test]
    fn two_atom_sweep_rows_match_closed_form() {
        let grid = SweepGrid::new(
            crate::model::linspace(0.05, 6.2, 40),
            vec![-1.0, 0.5],
            vec![-0.3, 1.0],
            vec![2],
        )
        .unwrap();
        for row in sweep(&grid, 0.01).unwrap() {
            let p = row.point;
            let closed =
                two_atom_transport(p.delta, p.delta, 0.5 * (1.0 - p.directionality), p.xi).unwrap();
            let tp = row.outcome.unwrap().tp;
            assert!((tp - closed).abs() <= 1e-10 * closed.abs().max(1e-3));
        }
    }

    #[test]
    fn grid_validation() {
        assert!(SweepGrid::new(vec![], vec![0.0], vec![0.0], vec![2]).is_err());
        assert!(SweepGrid::new(vec![1.0], vec![0.0], vec![1.5], vec![2]).is_err());
        assert!(SweepGrid::new(vec![1.0], vec![0.0], vec![0.0], vec![0]).is_err());
        let g = SweepGrid::new(vec![1.0, 2.0], vec![0.0, 1.0], vec![0.0], vec![2, 3]).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], GridPoint::new(2, 1.0, 0.0, 0.0));
        assert_eq!(pts[1], GridPoint::new(2, 2.0, 0.0, 0.0));
        assert_eq!(pts[2], GridPoint::new(2, 1.0, 1.0, 0.0));
        assert_eq!(pts[4].n_atoms, 3);
    }

    #[test]
    fn zero_fraction_ensemble_is_exact() {
        let point = GridPoint::new(10, 1.3, 0.0, 1.0);
        let clean = evaluate_point(&point, 0.01, None).unwrap().tp;
        let stats =
            fluctuation_ensemble(&point, &FluctuationSpec::new(0.0, 5).unwrap(), 50, 0.01).unwrap();
        assert_eq!(stats.std, 0.0);
        assert_eq!(stats.mean, clean);
        assert_eq!(stats.samples, 50);
        assert_eq!(stats.undefined, 0);
    }

    #[test]
    fn ensemble_rejects_tiny_sample_count() {
        let point = GridPoint::new(4, 1.0, 0.0, 1.0);
        let spec = FluctuationSpec::new(0.01, 1).unwrap();
        assert!(fluctuation_ensemble(&point, &spec, 1, 0.01).is_err());
    }

    #[test]
    fn all_undefined_ensemble_errors() {
        // N = 1 has no transport metric, so every sample is undefined.
        let point = GridPoint::new(1, 1.0, 0.0, 1.0);
        let spec = FluctuationSpec::new(0.01, 1).unwrap();
        assert!(matches!(
            fluctuation_ensemble(&point, &spec, 4, 0.01),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ensemble_is_seeded() {
        let point = GridPoint::new(6, 2.0, 0.5, 0.5);
        let spec = FluctuationSpec::new(0.02, 9).unwrap();
        let a = fluctuation_ensemble(&point, &spec, 30, 0.01).unwrap();
        let b = fluctuation_ensemble(&point, &spec, 30, 0.01).unwrap();
        assert_eq!(a, b);
        assert!(a.std > 0.0);
    }

    #[test]
    fn half_width_of_triangle() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let tps: Vec<f64> = xs
            .iter()
            .map(|x| -1.0 + (x - 5.0f64).abs() * 0.25)
            .collect();
        // T = -0.5 at |x - 5| = 2
        assert_abs_diff_eq!(half_minimum_width(&xs, &tps).unwrap(), 4.0, epsilon = 1e-12);
        assert!(half_minimum_width(&xs, &[0.1; 11]).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metric_bounded(pops in proptest::collection::vec(0.0..1.0f64, 2..12)) {
            prop_assume!(pops.iter().sum::<f64>() > 0.0);
            let tp = transport_metric(&pops).unwrap();
            prop_assert!((-1.0..=1.0).contains(&tp));
        }

        #[test]
        fn rabi_invariance(
            n in 2usize..9,
            xi in 0.1..6.1f64,
            delta in 0.2..2.0f64,
            d in -1.0..1.0f64,
        ) {
            let p = GridPoint::new(n, xi, delta, d);
            let a = evaluate_point(&p, 0.01, None).unwrap().tp;
            let b = evaluate_point(&p, 0.1, None).unwrap().tp;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn reciprocal_uniform_chain_is_palindromic(
            n in 2usize..=8,
            xi in 0.1..6.1f64,
            delta in -2.0..2.0f64,
        ) {
            prop_assume!(delta.abs() > 0.05);
            let r = evaluate_point(&GridPoint::new(n, xi, delta, 0.0), 0.01, None).unwrap();
            let pops = &r.populations;
            for mu in 0..n {
                let scale = pops[mu].max(pops[n - 1 - mu]);
                prop_assert!((pops[mu] - pops[n - 1 - mu]).abs() <= 1e-9 * scale);
            }
            prop_assert!(r.tp.abs() < 1e-9);
        }

        #[test]
        fn periodic_in_xi(
            n in 2usize..10,
            xi in 0.1..6.1f64,
            delta in -2.0..2.0f64,
            d in -1.0..1.0f64,
        ) {
            prop_assume!(delta.abs() > 0.05);
            let a = evaluate_point(&GridPoint::new(n, xi, delta, d), 0.01, None).unwrap().tp;
            let b = evaluate_point(&GridPoint::new(n, xi + 2.0 * PI, delta, d), 0.01, None).unwrap().tp;
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
