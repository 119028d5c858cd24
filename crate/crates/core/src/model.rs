//! Physical parameters of the chiral-coupled chain and the interaction matrix.
//!
//! Units: the total guided decay rate is fixed to one (gamma_L + gamma_R = 1),
//! so rates and detunings are in units of gamma and times in units of 1/gamma.
//! Positions are phase coordinates k x_mu in radians.
//!
//! The single-excitation amplitudes obey dA/dt = i Omega 1 + V A with
//!
//! ```text
//! V[mu][mu] = i delta_mu - (gamma_L + gamma_R) / 2
//! V[mu][nu] = -gamma_L exp(-i k |x_mu - x_nu|)   (mu < nu)
//! V[mu][nu] = -gamma_R exp(-i k |x_mu - x_nu|)   (mu > nu)
//! ```

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

const COLLISION_RETRIES: usize = 64;

/// Tolerance on gamma_L + gamma_R = 1.
const RATE_SUM_TOL: f64 = 1e-12;

/// Ordered atom positions along the waveguide, in phase units.
///
/// Positions are non-decreasing. Coincident atoms are allowed so that the
/// nominal chain at xi = 0 (equivalent to xi = 2 pi) can be represented;
/// disordered samples are always strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGeometry {
    positions: Vec<f64>,
}

impl ChainGeometry {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter(
                "chain needs at least one atom".into(),
            ));
        }
        if let Some(p) = positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite position {p}")));
        }
        if positions.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "positions must be ordered x_1 <= x_2 <= ... <= x_N".into(),
            ));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// |k x_mu - k x_nu| for zero-based atom indices.
    pub fn separation(&self, mu: usize, nu: usize) -> f64 {
        (self.positions[mu] - self.positions[nu]).abs()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.positions.windows(2).all(|w| w[0] < w[1])
    }

    /// Same chain rigidly shifted by `offset`.
    pub fn translated(&self, offset: f64) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + offset).collect(),
        }
    }
}

/// Left/right guided decay rates in units of the total rate gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiralCoupling {
    gamma_l: f64,
    gamma_r: f64,
}

impl ChiralCoupling {
    pub fn new(gamma_l: f64, gamma_r: f64) -> Result<Self> {
        if !(gamma_l >= 0.0 && gamma_r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "decay rates must be non-negative (gamma_L = {gamma_l}, gamma_R = {gamma_r})"
            )));
        }
        if (gamma_l + gamma_r - 1.0).abs() > RATE_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "gamma_L + gamma_R must equal 1, got {}",
                gamma_l + gamma_r
            )));
        }
        Ok(Self { gamma_l, gamma_r })
    }

    /// gamma_L = (1 - D) / 2, gamma_R = (1 + D) / 2.
    pub fn from_directionality(d: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "directionality must lie in [-1, 1], got {d}"
            )));
        }
        Ok(Self {
            gamma_l: 0.5 * (1.0 - d),
            gamma_r: 0.5 * (1.0 + d),
        })
    }

    pub fn from_gamma_l(gamma_l: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma_l) {
            return Err(Error::InvalidParameter(format!(
                "gamma_L must lie in [0, 1], got {gamma_l}"
            )));
        }
        Ok(Self {
            gamma_l,
            gamma_r: 1.0 - gamma_l,
        })
    }

    /// Reciprocal coupling, gamma_L = gamma_R = 1/2.
    pub fn reciprocal() -> Self {
        Self {
            gamma_l: 0.5,
            gamma_r: 0.5,
        }
    }

    pub fn gamma_l(&self) -> f64 {
        self.gamma_l
    }

    pub fn gamma_r(&self) -> f64 {
        self.gamma_r
    }

    pub fn total(&self) -> f64 {
        self.gamma_l + self.gamma_r
    }

    /// D = (gamma_R - gamma_L) / gamma.
    pub fn directionality(&self) -> f64 {
        (self.gamma_r - self.gamma_l) / self.total()
    }
}

/// Uniform Rabi frequency and per-atom detunings, both in units of gamma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub rabi: f64,
    pub detunings: Vec<f64>,
}

impl DriveParams {
    pub fn new(rabi: f64, detunings: Vec<f64>) -> Self {
        Self { rabi, detunings }
    }

    pub fn uniform(rabi: f64, detuning: f64, n_atoms: usize) -> Self {
        Self {
            rabi,
            detunings: vec![detuning; n_atoms],
        }
    }
}

/// Static Gaussian position disorder: each atom is displaced by
/// N(0, (fraction * xi)^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSpec {
    pub fraction: f64,
    pub seed: u64,
}

impl FluctuationSpec {
    pub fn new(fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction >= 0.0 && fraction.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "fluctuation fraction must be finite and >= 0, got {fraction}"
            )));
        }
        Ok(Self { fraction, seed })
    }
}

/// Equidistant chain kx_mu = (mu - 1) xi, optionally with static disorder.
///
/// Disordered positions are re-sorted so the ordering convention holds. If
/// two atoms land on the same coordinate the later one is redrawn.
pub fn build_geometry(
    n_atoms: usize,
    xi: f64,
    fluct: Option<&FluctuationSpec>,
) -> Result<ChainGeometry> {
    if n_atoms == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spacing xi must be finite and >= 0 (use 2 pi - xi for negative spacings), got {xi}"
        )));
    }
    let nominal: Vec<f64> = (0..n_atoms).map(|mu| mu as f64 * xi).collect();

    let spec = match fluct {
        Some(spec) if spec.fraction > 0.0 && xi > 0.0 => spec,
        _ => return ChainGeometry::new(nominal),
    };
    if !spec.fraction.is_finite() || spec.fraction < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "fluctuation fraction must be finite and >= 0, got {}",
            spec.fraction
        )));
    }

    let normal = Normal::new(0.0, spec.fraction * xi)
        .map_err(|e| Error::InvalidParameter(format!("bad disorder width: {e}")))?;
    let mut rng = seeded_rng(spec.seed);
    let mut positions: Vec<f64> = nominal
        .iter()
        .map(|x0| x0 + normal.sample(&mut rng))
        .collect();

    for atom in 0..n_atoms {
        let mut retries = 0;
        while positions[..atom].contains(&positions[atom]) {
            if retries == COLLISION_RETRIES {
                return Err(Error::GeometryCollision { atom, retries });
            }
            positions[atom] = nominal[atom] + normal.sample(&mut rng);
            retries += 1;
        }
    }
    positions.sort_by(f64::total_cmp);
    ChainGeometry::new(positions)
}

/// exp(-i phase), with the phase reduced modulo 2 pi first.
fn propagation_phase(separation: f64) -> Complex64 {
    let reduced = separation.rem_euclid(TAU);
    Complex64::from_polar(1.0, -reduced)
}

/// Guided-mode couplings for a pair separated by phase `separation`:
/// `(-gamma_L e^{-i kx}, -gamma_R e^{-i kx})`, i.e. the upper and lower
/// triangle entries of V.
pub fn chiral_kernel_1d(
    separation: f64,
    coupling: &ChiralCoupling,
) -> Result<(Complex64, Complex64)> {
    if !(separation >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "separation must be |x_mu - x_nu| >= 0, got {separation}"
        )));
    }
    let phase = propagation_phase(separation);
    Ok((-coupling.gamma_l() * phase, -coupling.gamma_r() * phase))
}

/// The N x N chiral interaction matrix, in units of gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    entries: DMatrix<Complex64>,
}

impl InteractionMatrix {
    pub fn from_entries(entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "interaction matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Frobenius norm of the commutator V V^dagger - V^dagger V.
    pub fn normality_defect(&self) -> f64 {
        let v = &self.entries;
        let vh = v.adjoint();
        (v * &vh - &vh * v).norm()
    }
}

pub fn build_interaction_matrix(
    geom: &ChainGeometry,
    drive: &DriveParams,
    coupling: &ChiralCoupling,
) -> Result<InteractionMatrix> {
    let n = geom.len();
    if drive.detunings.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: drive.detunings.len(),
        });
    }
    let decay = -0.5 * coupling.total();
    let mut v = DMatrix::<Complex64>::zeros(n, n);
    for mu in 0..n {
        v[(mu, mu)] = Complex64::new(decay, drive.detunings[mu]);
        for nu in (mu + 1)..n {
            let (upper, lower) = chiral_kernel_1d(geom.separation(mu, nu), coupling)?;
            v[(mu, nu)] = upper;
            v[(nu, mu)] = lower;
        }
    }
    InteractionMatrix::from_entries(v)
}

/// Free-space dipole-dipole coupling J between two identical dipoles, in
/// units of the single-atom decay constant.
///
/// `xi` is k|r_mu - r_nu| and `mu_align` is the cosine of the angle between
/// the dipole orientation and the separation axis. `2 Re J` is the
/// collective decay rate and `Im J` the collective shift:
///
/// ```text
/// Re(2J) = 3/2 { (1 - c^2) sin xi / xi + (1 - 3c^2)(cos xi / xi^2 - sin xi / xi^3) }
/// Im(J)  = 3/4 { -(1 - c^2) cos xi / xi + (1 - 3c^2)(sin xi / xi^2 + cos xi / xi^3) }
/// ```
pub fn rddi_3d(xi: f64, mu_align: f64) -> Result<Complex64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "3D kernel needs a finite separation > 0, got {xi}"
        )));
    }
    if !(-1.0..=1.0).contains(&mu_align) {
        return Err(Error::InvalidParameter(format!(
            "alignment cosine must lie in [-1, 1], got {mu_align}"
        )));
    }
    let c2 = mu_align * mu_align;
    let transverse = 1.0 - c2;
    let longitudinal = 1.0 - 3.0 * c2;
    let (s, c) = xi.sin_cos();
    let (xi2, xi3) = (xi * xi, xi * xi * xi);

    let twice_re = 1.5 * (transverse * s / xi + longitudinal * (c / xi2 - s / xi3));
    let im = 0.75 * (-transverse * c / xi + longitudinal * (s / xi2 + c / xi3));
    Ok(Complex64::new(0.5 * twice_re, im))
}

/// Reciprocal one-dimensional reservoir kernel
/// J = (Gamma_1D / 2) [cos(kx) + i sin(k|x|)].
pub fn rddi_1d(separation: f64, gamma_1d: f64) -> Complex64 {
    let (s, c) = separation.abs().sin_cos();
    0.5 * gamma_1d * Complex64::new(c, s)
}

/// Evenly spaced points including both endpoints.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        stop
                    } else {
                        start + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// Default xi axis, 401 points over [0, 2 pi].
pub fn default_xi_axis() -> Vec<f64> {
    linspace(0.0, 2.0 * PI, 401)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn equidistant_positions() {
        let g = build_geometry(3, PI, None).unwrap();
        assert_eq!(g.positions(), &[0.0, PI, 2.0 * PI]);
        let g = build_geometry(2, PI / 2.0, None).unwrap();
        assert_eq!(g.separation(0, 1), PI / 2.0);
    }

    #[test]
    fn geometry_rejects_bad_input() {
        assert!(build_geometry(0, 1.0, None).is_err());
        assert!(build_geometry(3, -1.0, None).is_err());
        assert!(build_geometry(3, f64::NAN, None).is_err());
        assert!(ChainGeometry::new(vec![0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn zero_spacing_keeps_coincident_atoms() {
        let g = build_geometry(2, 0.0, None).unwrap();
        assert_eq!(g.positions(), &[0.0, 0.0]);
        assert!(!g.is_strictly_increasing());
    }

    #[test]
    fn zero_fraction_is_the_nominal_chain() {
        let spec = FluctuationSpec::new(0.0, 42).unwrap();
        assert_eq!(
            build_geometry(10, PI, Some(&spec)).unwrap(),
            build_geometry(10, PI, None).unwrap()
        );
    }

    #[test]
    fn disordered_chain_is_ordered_and_seeded() {
        let spec = FluctuationSpec::new(0.01, 42).unwrap();
        let a = build_geometry(10, PI, Some(&spec)).unwrap();
        let b = build_geometry(10, PI, Some(&spec)).unwrap();
        assert_eq!(a, b);
        assert!(a.is_strictly_increasing());
        let other = FluctuationSpec::new(0.01, 43).unwrap();
        assert_ne!(a, build_geometry(10, PI, Some(&other)).unwrap());
    }

    #[test]
    fn heavy_disorder_still_sorted() {
        for seed in 0..200 {
            let spec = FluctuationSpec::new(2.0, seed).unwrap();
            let g = build_geometry(12, 0.3, Some(&spec)).unwrap();
            assert!(g.is_strictly_increasing());
        }
    }

    #[test]
    fn displacement_width_matches_fraction_of_xi() {
        // Pooled displacement std over 10^4 seeds against f * xi.
        let (n, xi, f) = (10, PI, 0.01);
        let nominal = build_geometry(n, xi, None).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for seed in 0..10_000u64 {
            let spec = FluctuationSpec::new(f, crate::rng::derive_seed(42, seed)).unwrap();
            let g = build_geometry(n, xi, Some(&spec)).unwrap();
            for (x, x0) in g.positions().iter().zip(nominal.positions()) {
                let d = x - x0;
                sum += d;
                sum_sq += d * d;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let std = (sum_sq / count - mean * mean).sqrt();
        let target = f * xi;
        // 10^5 draws: relative std error of the std is ~0.22%.
        assert!((std / target - 1.0).abs() < 0.01, "std {std} vs {target}");
        assert!(mean.abs() < 4.0 * target / count.sqrt());
    }

    #[test]
    fn kernel_values() {
        let recip = ChiralCoupling::reciprocal();
        let (l, r) = chiral_kernel_1d(0.0, &recip).unwrap();
        assert!((l - c(-0.5, 0.0)).norm() <= 1e-15);
        assert!((r - c(-0.5, 0.0)).norm() <= 1e-15);

        let cascaded = ChiralCoupling::new(0.0, 1.0).unwrap();
        let (l, r) = chiral_kernel_1d(PI / 2.0, &cascaded).unwrap();
        assert!((l - c(0.0, 0.0)).norm() <= 1e-15);
        assert!((r - c(0.0, 1.0)).norm() <= 1e-15);

        let chiral = ChiralCoupling::new(0.25, 0.75).unwrap();
        let (l, r) = chiral_kernel_1d(PI, &chiral).unwrap();
        assert!((l - c(0.25, 0.0)).norm() <= 1e-15);
        assert!((r - c(0.75, 0.0)).norm() <= 1e-15);

        assert!(chiral_kernel_1d(-0.1, &chiral).is_err());
    }

    #[test]
    fn reciprocal_kernel_shift_and_decay_parts() {
        // -gamma cos(kx) is the shift part, gamma sin(kx) the decay part.
        let recip = ChiralCoupling::reciprocal();
        for &kx in &[0.3, 1.1, 2.9, 4.0] {
            let (l, _) = chiral_kernel_1d(kx, &recip).unwrap();
            assert_abs_diff_eq!(l.re, -0.5 * f64::cos(kx), epsilon = 1e-14);
            assert_abs_diff_eq!(l.im, 0.5 * f64::sin(kx), epsilon = 1e-14);
            // -conj of the 1D reservoir kernel with Gamma_1D = 1
            assert!((l - -rddi_1d(kx, 1.0).conj()).norm() <= 1e-14);
        }
    }

    #[test]
    fn coupling_constructors() {
        let c1 = ChiralCoupling::from_directionality(1.0).unwrap();
        assert_eq!((c1.gamma_l(), c1.gamma_r()), (0.0, 1.0));
        let c0 = ChiralCoupling::from_directionality(0.0).unwrap();
        assert_eq!((c0.gamma_l(), c0.gamma_r()), (0.5, 0.5));
        let cq = ChiralCoupling::from_gamma_l(0.25).unwrap();
        assert_abs_diff_eq!(cq.directionality(), 0.5, epsilon = 1e-15);
        assert!(ChiralCoupling::from_directionality(1.5).is_err());
        assert!(ChiralCoupling::new(0.3, 0.3).is_err());
        assert!(ChiralCoupling::new(-0.1, 1.1).is_err());
    }

    #[test]
    fn two_atom_matrix() {
        let g = build_geometry(2, PI / 2.0, None).unwrap();
        let v = build_interaction_matrix(
            &g,
            &DriveParams::uniform(0.01, 0.0, 2),
            &ChiralCoupling::new(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let e = v.entries();
        assert!((e[(0, 0)] - c(-0.5, 0.0)).norm() <= 1e-15);
        assert!((e[(0, 1)] - c(0.0, 0.0)).norm() <= 1e-15);
        assert!((e[(1, 0)] - c(0.0, 1.0)).norm() <= 1e-15);
        assert!((e[(1, 1)] - c(-0.5, 0.0)).norm() <= 1e-15);
        assert!(v.normality_defect() > 0.1);
    }

    #[test]
    fn diagonal_carries_detunings() {
        let g = build_geometry(3, PI, None).unwrap();
        let v = build_interaction_matrix(
            &g,
            &DriveParams::new(0.01, vec![1.0, 2.0, 3.0]),
            &ChiralCoupling::reciprocal(),
        )
        .unwrap();
        for mu in 0..3 {
            assert_eq!(v.entries()[(mu, mu)], c(-0.5, (mu + 1) as f64));
        }
    }

    #[test]
    fn detuning_length_checked() {
        let g = build_geometry(3, PI, None).unwrap();
        let err = build_interaction_matrix(
            &g,
            &DriveParams::new(0.01, vec![0.0; 2]),
            &ChiralCoupling::reciprocal(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::LengthMismatch {
                expected: 3,
                got: 2
            }
        ));
    }

    /// Independent route for the 3D kernel: J = (3/4) e^{i xi} [ -i (1 - c^2) / xi
    /// + (1 - 3 c^2)(1/xi^2 + i/xi^3) ], assembled in complex arithmetic.
    fn rddi_3d_complex_form(xi: f64, c: f64) -> Complex64 {
        let i = Complex64::i();
        let bracket = -i * (1.0 - c * c) / xi
            + (1.0 - 3.0 * c * c) * (Complex64::from(1.0 / (xi * xi)) + i / (xi * xi * xi));
        0.75 * Complex64::from_polar(1.0, xi) * bracket
    }

    #[test]
    fn rddi_3d_reference_values() {
        let j = rddi_3d(PI, 0.0).unwrap();
        assert_abs_diff_eq!(2.0 * j.re, -1.5 / (PI * PI), epsilon = 1e-15);

        let j = rddi_3d(2.0 * PI, 1.0).unwrap();
        assert_abs_diff_eq!(2.0 * j.re, -3.0 / (4.0 * PI * PI), epsilon = 1e-15);

        for &(xi, cth) in &[
            (0.4, 0.2),
            (1.0, 0.0),
            (2.0 * PI, 1.0),
            (7.3, -0.6),
            (50.0, 0.9),
        ] {
            let a = rddi_3d(xi, cth).unwrap();
            let b = rddi_3d_complex_form(xi, cth);
            assert!((a - b).norm() <= 1e-13);
        }
        assert!(rddi_3d(0.0, 0.5).is_err());
    }

    #[test]
    fn rddi_3d_far_field_envelope() {
        let xi = 1e3;
        for k in 0..=20 {
            let cth = -1.0 + 0.1 * k as f64;
            let j = rddi_3d(xi, cth).unwrap();
            let bound = 0.75 / xi * (1.0 + 3.0 / xi + 3.0 / (xi * xi));
            assert!(j.im.abs() <= bound);
            assert!(2.0 * j.re.abs() <= 2.0 * bound);
        }
        // 1/xi dominance for a transverse dipole: xi |J| tends to 3/4.
        let far = rddi_3d(1e6, 0.0).unwrap();
        assert_abs_diff_eq!(far.norm() * 1e6, 0.75, epsilon = 1e-5);
    }

    #[test]
    fn linspace_endpoints() {
        let xs = linspace(0.0, 2.0 * PI, 401);
        assert_eq!(xs.len(), 401);
        assert_eq!(xs[0], 0.0);
        assert_eq!(xs[400], 2.0 * PI);
        assert_abs_diff_eq!(xs[200], PI, epsilon = 1e-15);
    }

    fn matrix_for(xi: f64, gamma_l: f64, deltas: &[f64]) -> DMatrix<Complex64> {
        let g = build_geometry(deltas.len(), xi, None).unwrap();
        build_interaction_matrix(
            &g,
            &DriveParams::new(0.01, deltas.to_vec()),
            &ChiralCoupling::from_gamma_l(gamma_l).unwrap(),
        )
        .unwrap()
        .into_entries()
    }

    proptest! {
        #[test]
        fn symmetric_iff_reciprocal(
            gamma_l in 0.0..1.0f64,
            xi in 0.05..6.2f64,
            deltas in proptest::collection::vec(-3.0..3.0f64, 2..7),
        ) {
            let v = matrix_for(xi, gamma_l, &deltas);
            let asym = (&v - v.transpose()).norm();
            let gap = (1.0 - 2.0 * gamma_l).abs();
            if gap > 1e-6 {
                prop_assert!(asym > 1e-8);
            }
            let v_rec = matrix_for(xi, 0.5, &deltas);
            prop_assert!((&v_rec - v_rec.transpose()).norm() < 1e-14);
        }

        #[test]
        fn translation_and_period_invariance(
            gamma_l in 0.0..1.0f64,
            xi in 0.0..6.2f64,
            shift in -50.0..50.0f64,
            n in 1usize..8,
        ) {
            let coupling = ChiralCoupling::from_gamma_l(gamma_l).unwrap();
            let drive = DriveParams::uniform(0.01, 0.3, n);
            let g = build_geometry(n, xi, None).unwrap();
            let base = build_interaction_matrix(&g, &drive, &coupling).unwrap();
            let moved = build_interaction_matrix(&g.translated(shift), &drive, &coupling).unwrap();
            prop_assert!((base.entries() - moved.entries()).norm() < 1e-11);

            let g2 = build_geometry(n, xi + 2.0 * PI, None).unwrap();
            let periodic = build_interaction_matrix(&g2, &drive, &coupling).unwrap();
            prop_assert!((base.entries() - periodic.entries()).norm() < 1e-11);
        }

        #[test]
        fn reciprocal_off_diagonals(xi in 0.0..6.2f64, n in 2usize..7) {
            let v = matrix_for(xi, 0.5, &vec![0.0; n]);
            for mu in 0..n {
                for nu in 0..n {
                    if mu == nu { continue; }
                    let kx = (mu as f64 - nu as f64).abs() * xi;
                    let want = -0.5 * Complex64::new(kx.cos(), -kx.sin());
                    prop_assert!((v[(mu, nu)] - want).norm() < 1e-12);
                }
            }
        }
    }
}
