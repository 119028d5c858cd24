//! Full chiral master equation for small chains.
//!
//! Each atom is a two-level system; basis state `i` has atom `mu` excited iff
//! bit `mu` of `i` is set. The generator is
//!
//! ```text
//! d rho/dt = -i [H_S + H_L + H_R, rho] + L_L[rho] + L_R[rho]
//! H_S = Omega sum_mu (s_mu + s_mu^dag) - sum_mu delta_mu s_mu^dag s_mu
//! H_L = -(i gL/2) sum_{mu<nu} (e^{-i k|x_mu - x_nu|} s_mu^dag s_nu - h.c.)
//! H_R = -(i gR/2) sum_{mu>nu} (e^{-i k|x_mu - x_nu|} s_mu^dag s_nu - h.c.)
//! L_L[rho] = -(gL/2) sum_{mu,nu} e^{+ik(x_mu - x_nu)} (s_mu^dag s_nu rho + rho s_mu^dag s_nu - 2 s_nu rho s_mu^dag)
//! L_R[rho] = -(gR/2) sum_{mu,nu} e^{-ik(x_mu - x_nu)} (s_mu^dag s_nu rho + rho s_mu^dag s_nu - 2 s_nu rho s_mu^dag)
//! ```
//!
//! The propagation phases are chosen so that the single-excitation block of
//! the generator is exactly the interaction matrix V used by the amplitude
//! model. Each dissipator is a single collective jump: L_L = sum_nu
//! e^{-ik x_nu} s_nu and L_R = sum_nu e^{+ik x_nu} s_nu.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::steady_state;
use crate::error::{Error, Result};
use crate::model::{build_interaction_matrix, ChainGeometry, ChiralCoupling, DriveParams};
use crate::ode::{DormandPrince, Tolerances};
use crate::transport::transport_metric;

pub const MAX_ATOMS: usize = 8;

/// Largest chain solved through the vectorized generator; longer chains are
/// relaxed by time integration.
pub const NULL_SPACE_MAX_ATOMS: usize = 5;

/// Allowed drift of trace and Hermiticity per unit of gamma t.
pub const DRIFT_PER_TIME: f64 = 1e-9;

/// Most negative eigenvalue tolerated in a density matrix.
pub const POSITIVITY_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn bit(mu: usize) -> usize {
    1 << mu
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_atoms: usize,
    rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn from_matrix(n_atoms: usize, rho: DMatrix<Complex64>) -> Result<Self> {
        let dim = 1usize << n_atoms;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: rho.nrows(),
            });
        }
        Ok(Self { n_atoms, rho })
    }

    /// All atoms in the ground state.
    pub fn ground(n_atoms: usize) -> Self {
        let dim = 1usize << n_atoms;
        let mut rho = DMatrix::zeros(dim, dim);
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        Self { n_atoms, rho }
    }

    pub fn maximally_mixed(n_atoms: usize) -> Self {
        let dim = 1usize << n_atoms;
        let rho = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Self { n_atoms, rho }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// ||rho - rho^dagger||_F
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Excited-state populations <s_mu^dag s_mu>.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.n_atoms)
            .map(|mu| {
                (0..self.rho.nrows())
                    .filter(|i| i & bit(mu) != 0)
                    .map(|i| self.rho[(i, i)].re)
                    .sum()
            })
            .collect()
    }
}

/// The assembled master-equation generator.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    n_atoms: usize,
    dim: usize,
    rabi: f64,
    /// Diagonal of -sum_mu delta_mu n_mu in the product basis.
    detuning_energy: Vec<f64>,
    /// Coefficient h[mu][nu] of s_mu^dag s_nu in H_L + H_R.
    hopping: DMatrix<Complex64>,
    /// (rate, per-atom coefficients) of each collective jump operator.
    jumps: Vec<(f64, Vec<Complex64>)>,
}

pub fn build_liouvillian(
    geom: &ChainGeometry,
    drive: &DriveParams,
    coupling: &ChiralCoupling,
) -> Result<Liouvillian> {
    let n = geom.len();
    if n > MAX_ATOMS {
        return Err(Error::TooManyAtoms { n, max: MAX_ATOMS });
    }
    if drive.detunings.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: drive.detunings.len(),
        });
    }
    let dim = 1usize << n;
    let detuning_energy = (0..dim)
        .map(|i| {
            -(0..n)
                .filter(|&mu| i & bit(mu) != 0)
                .map(|mu| drive.detunings[mu])
                .sum::<f64>()
        })
        .collect();

    let (gl, gr) = (coupling.gamma_l(), coupling.gamma_r());
    let half_i = Complex64::new(0.0, 0.5);
    let mut hopping = DMatrix::zeros(n, n);
    for mu in 0..n {
        for nu in (mu + 1)..n {
            let phase = Complex64::from_polar(1.0, -geom.separation(mu, nu));
            // H_L: mu < nu term and its conjugate
            hopping[(mu, nu)] += -half_i * gl * phase;
            hopping[(nu, mu)] += half_i * gl * phase.conj();
            // H_R: (nu > mu) term and its conjugate
            hopping[(nu, mu)] += -half_i * gr * phase;
            hopping[(mu, nu)] += half_i * gr * phase.conj();
        }
    }

    let x = geom.positions();
    let left: Vec<Complex64> = x.iter().map(|&p| Complex64::from_polar(1.0, -p)).collect();
    let right: Vec<Complex64> = x.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();

    Ok(Liouvillian {
        n_atoms: n,
        dim,
        rabi: drive.rabi,
        detuning_energy,
        hopping,
        jumps: vec![(gl, left), (gr, right)],
    })
}

impl Liouvillian {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Hilbert-space dimension 2^N.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// sum_nu c_nu s_nu X
    fn lower_left(&self, c: &[Complex64], x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (nu, &cn) in c.iter().enumerate() {
            let b = bit(nu);
            for j in 0..self.dim {
                for i in (0..self.dim).filter(|i| i & b == 0) {
                    out[(i, j)] += cn * x[(i | b, j)];
                }
            }
        }
        out
    }

    /// sum_nu conj(c_nu) s_nu^dag X
    fn raise_left(&self, c: &[Complex64], x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (nu, &cn) in c.iter().enumerate() {
            let b = bit(nu);
            let cc = cn.conj();
            for j in 0..self.dim {
                for i in (0..self.dim).filter(|i| i & b != 0) {
                    out[(i, j)] += cc * x[(i ^ b, j)];
                }
            }
        }
        out
    }

    /// H_eff X with H_eff = H - (i/2) sum_k gamma_k L_k^dag L_k.
    fn h_eff_left(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.n_atoms;
        let dim = self.dim;
        let mut out = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..dim {
                out[(i, j)] = self.detuning_energy[i] * x[(i, j)];
            }
        }
        if self.rabi != 0.0 {
            for mu in 0..n {
                let b = bit(mu);
                for j in 0..dim {
                    for i in 0..dim {
                        out[(i, j)] += self.rabi * x[(i ^ b, j)];
                    }
                }
            }
        }
        for mu in 0..n {
            for nu in 0..n {
                let h = self.hopping[(mu, nu)];
                if mu == nu || h == ZERO {
                    continue;
                }
                let (bm, bn) = (bit(mu), bit(nu));
                for i in (0..dim).filter(|i| i & bm != 0 && (i ^ bm) & bn == 0) {
                    let src = (i ^ bm) | bn;
                    for j in 0..dim {
                        out[(i, j)] += h * x[(src, j)];
                    }
                }
            }
        }
        for (rate, c) in &self.jumps {
            if *rate == 0.0 {
                continue;
            }
            let ll = self.raise_left(c, &self.lower_left(c, x));
            out -= ll * Complex64::new(0.0, 0.5 * rate);
        }
        out
    }

    /// Matrix-free action of the generator on rho.
    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let i = Complex64::i();
        let rho_dag = rho.adjoint();
        let h_rho = self.h_eff_left(rho);
        // rho H_eff^dag = (H_eff rho^dag)^dag
        let rho_h = self.h_eff_left(&rho_dag).adjoint();
        let mut out = (h_rho - rho_h) * (-i);
        for (rate, c) in &self.jumps {
            if *rate == 0.0 {
                continue;
            }
            // L rho L^dag = L (L rho^dag)^dag
            let l_rho_dag = self.lower_left(c, &rho_dag);
            out += self.lower_left(c, &l_rho_dag.adjoint()) * Complex64::new(*rate, 0.0);
        }
        out
    }

    fn sigma_minus(&self, mu: usize) -> DMatrix<Complex64> {
        let b = bit(mu);
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for i in (0..self.dim).filter(|i| i & b != 0) {
            s[(i ^ b, i)] = Complex64::new(1.0, 0.0);
        }
        s
    }

    /// Dense system Hamiltonian H_S + H_L + H_R.
    pub fn hamiltonian(&self) -> DMatrix<Complex64> {
        let n = self.n_atoms;
        let sm: Vec<DMatrix<Complex64>> = (0..n).map(|mu| self.sigma_minus(mu)).collect();
        let mut h = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim,
            self.detuning_energy.iter().map(|&e| Complex64::new(e, 0.0)),
        ));
        for s in &sm {
            h += (s + s.adjoint()) * Complex64::new(self.rabi, 0.0);
        }
        for mu in 0..n {
            for nu in 0..n {
                if mu != nu {
                    h += sm[mu].adjoint() * &sm[nu] * self.hopping[(mu, nu)];
                }
            }
        }
        h
    }

    /// Dense collective jump operators with their rates.
    pub fn jump_operators(&self) -> Vec<(f64, DMatrix<Complex64>)> {
        self.jumps
            .iter()
            .map(|(rate, c)| {
                let mut l = DMatrix::zeros(self.dim, self.dim);
                for (mu, &cm) in c.iter().enumerate() {
                    l += self.sigma_minus(mu) * cm;
                }
                (*rate, l)
            })
            .collect()
    }

    /// Column-stacked superoperator: vec(L[rho]) = S vec(rho).
    pub fn superoperator(&self) -> DMatrix<Complex64> {
        let i = Complex64::i();
        let id = DMatrix::<Complex64>::identity(self.dim, self.dim);
        let mut h_eff = self.hamiltonian();
        let jumps = self.jump_operators();
        for (rate, l) in &jumps {
            h_eff -= l.adjoint() * l * Complex64::new(0.0, 0.5 * rate);
        }
        // vec(A X B) = (B^T kron A) vec(X)
        let mut s = id.kronecker(&h_eff) * (-i) + h_eff.conjugate().kronecker(&id) * i;
        for (rate, l) in &jumps {
            if *rate != 0.0 {
                s += l.conjugate().kronecker(l) * Complex64::new(*rate, 0.0);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyStateMethod {
    /// Null-space solve for N <= 5, time integration above.
    Auto,
    NullSpace,
    TimeIntegration,
}

/// Steady state of the master equation.
pub fn steady_state_dm(liouvillian: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_dm_with(liouvillian, SteadyStateMethod::Auto)
}

pub fn steady_state_dm_with(
    liouvillian: &Liouvillian,
    method: SteadyStateMethod,
) -> Result<DensityMatrix> {
    let method = match method {
        SteadyStateMethod::Auto if liouvillian.n_atoms <= NULL_SPACE_MAX_ATOMS => {
            SteadyStateMethod::NullSpace
        }
        SteadyStateMethod::Auto => SteadyStateMethod::TimeIntegration,
        m => m,
    };
    let rho = match method {
        SteadyStateMethod::NullSpace => null_space_steady_state(liouvillian)?,
        _ => relaxed_steady_state(liouvillian)?,
    };
    check_physical(&rho, 1.0)?;
    Ok(rho)
}

fn check_physical(rho: &DensityMatrix, elapsed: f64) -> Result<()> {
    let allowed = DRIFT_PER_TIME * elapsed.max(1.0);
    let trace_err = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
    let herm = rho.hermiticity_defect();
    let min_eig = rho.min_eigenvalue();
    if trace_err > allowed || herm > allowed || min_eig < -POSITIVITY_TOL {
        return Err(Error::IntegrationFailure {
            time: elapsed,
            reason: format!(
                "unphysical density matrix (trace error {trace_err:.2e}, \
                 hermiticity defect {herm:.2e}, min eigenvalue {min_eig:.2e})"
            ),
        });
    }
    Ok(())
}

fn null_space_steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let d = l.dim;
    let mut m = l.superoperator();
    // Trace preservation makes the rho_00 row redundant; replace it with the
    // normalization tr(rho) = 1.
    for k in 0..d * d {
        m[(0, k)] = ZERO;
    }
    for i in 0..d {
        m[(0, i + i * d)] = Complex64::new(1.0, 0.0);
    }
    let norm = m.norm();

    let lu = m.clone().lu();
    let lu_adj = m.adjoint().lu();
    let smallest = smallest_singular_value(&lu, &lu_adj, d * d);
    if !(smallest > 1e-10 * norm) {
        return Err(Error::NoUniqueSteadyState(format!(
            "generator null space is degenerate (bordered smallest singular value \
             {smallest:.2e}, norm {norm:.2e})"
        )));
    }
    let mut rhs = DVector::zeros(d * d);
    rhs[0] = Complex64::new(1.0, 0.0);
    let v = lu
        .solve(&rhs)
        .ok_or_else(|| Error::NoUniqueSteadyState("bordered generator is singular".into()))?;
    let rho = DMatrix::from_iterator(d, d, v.iter().copied());
    let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    DensityMatrix::from_matrix(l.n_atoms, rho)
}

/// Inverse iteration on (M^dag M)^{-1} for the smallest singular value.
fn smallest_singular_value(
    lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_adj: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
) -> f64 {
    let mut x = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 0.1, 0.0));
    x /= Complex64::new(x.norm(), 0.0);
    let mut estimate = f64::INFINITY;
    for _ in 0..30 {
        let Some(y) = lu_adj.solve(&x) else {
            return 0.0;
        };
        let Some(z) = lu.solve(&y) else { return 0.0 };
        let growth = z.norm();
        if !growth.is_finite() || growth == 0.0 {
            return 0.0;
        }
        let next = 1.0 / growth.sqrt();
        x = z / Complex64::new(growth, 0.0);
        if (next - estimate).abs() <= 1e-6 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

fn flatten(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    m.iter().copied().collect()
}

/// Integrate rho forward and report the state at `n_steps + 1` evenly spaced
/// times. Trace, Hermiticity and positivity are checked at every output.
pub fn evolve_dm(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_final: f64,
    n_steps: usize,
) -> Result<Vec<(f64, DensityMatrix)>> {
    if !(t_final > 0.0) || n_steps == 0 {
        return Err(Error::InvalidParameter(
            "need t_final > 0 and at least one step".into(),
        ));
    }
    let d = l.dim;
    let rhs = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let rho = DMatrix::from_column_slice(d, d, y);
        dy.copy_from_slice(l.apply(&rho).as_slice());
    };
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-15,
        ..Tolerances::default()
    };
    let mut stepper = DormandPrince::new(rhs, 0.0, flatten(rho0.matrix()), tol);
    let mut out = vec![(0.0, rho0.clone())];
    for step in 1..=n_steps {
        let t = t_final * step as f64 / n_steps as f64;
        stepper.advance_to(t)?;
        let rho = DensityMatrix::from_matrix(
            l.n_atoms,
            DMatrix::from_column_slice(d, d, stepper.state()),
        )?;
        check_physical(&rho, t)?;
        out.push((t, rho));
    }
    Ok(out)
}

/// Relax from two different initial states; distinct limits mean the steady
/// state is not unique.
fn relaxed_steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let a = relax(l, &DensityMatrix::ground(l.n_atoms))?;
    let b = relax(l, &DensityMatrix::maximally_mixed(l.n_atoms))?;
    let gap = (a.matrix() - b.matrix()).norm();
    if gap > 1e-8 {
        return Err(Error::NoUniqueSteadyState(format!(
            "relaxation from different initial states ends {gap:.2e} apart"
        )));
    }
    Ok(a)
}

const RELAX_CHUNK: f64 = 2.0;
const RELAX_T_MAX: f64 = 1e4;
const RELAX_TOL: f64 = 1e-12;

fn relax(l: &Liouvillian, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    let d = l.dim;
    let rhs = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let rho = DMatrix::from_column_slice(d, d, y);
        dy.copy_from_slice(l.apply(&rho).as_slice());
    };
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-15,
        ..Tolerances::default()
    };
    let mut stepper = DormandPrince::new(rhs, 0.0, flatten(rho0.matrix()), tol);
    let mut t = 0.0;
    loop {
        let rho = DMatrix::from_column_slice(d, d, stepper.state());
        if l.apply(&rho).norm() < RELAX_TOL {
            let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
            return DensityMatrix::from_matrix(l.n_atoms, rho);
        }
        if t >= RELAX_T_MAX {
            return Err(Error::NoUniqueSteadyState(format!(
                "no stationary state reached by t = {RELAX_T_MAX}"
            )));
        }
        t += RELAX_CHUNK;
        stepper.advance_to(t)?;
        check_physical(
            &DensityMatrix::from_matrix(
                l.n_atoms,
                DMatrix::from_column_slice(d, d, stepper.state()),
            )?,
            t,
        )?;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub rabi: f64,
    /// max_mu |<s_mu^dag s_mu> - |A_mu|^2| / |A_mu|^2
    pub max_rel_discrepancy: f64,
    pub tp_amplitude: Option<f64>,
    pub tp_lindblad: Option<f64>,
    pub populations_amplitude: Vec<f64>,
    pub populations_lindblad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Least-squares slope of log(discrepancy) against log(Omega).
    pub exponent: f64,
}

/// Compare master-equation and amplitude-model steady states over a list of
/// drive strengths. The relative discrepancy is expected to scale as Omega^2.
pub fn compare_with_amplitude_model(
    geom: &ChainGeometry,
    detunings: &[f64],
    coupling: &ChiralCoupling,
    rabis: &[f64],
) -> Result<ComparisonReport> {
    if rabis.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two drive strengths to fit a scaling".into(),
        ));
    }
    let (lo, hi) = rabis.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
        (lo.min(r.abs()), hi.max(r.abs()))
    });
    if !(lo > 0.0) || hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(
            "drive strengths must be non-zero and span at least one decade".into(),
        ));
    }

    let mut rows = Vec::with_capacity(rabis.len());
    for &rabi in rabis {
        let drive = DriveParams::new(rabi, detunings.to_vec());
        let v = build_interaction_matrix(geom, &drive, coupling)?;
        let amp = steady_state(&v, rabi)?.populations();
        let rho = steady_state_dm(&build_liouvillian(geom, &drive, coupling)?)?;
        let me = rho.populations();
        let max_rel_discrepancy = amp
            .iter()
            .zip(&me)
            .map(|(a, m)| (m - a).abs() / a)
            .fold(0.0f64, f64::max);
        rows.push(ComparisonRow {
            rabi,
            max_rel_discrepancy,
            tp_amplitude: transport_metric(&amp).ok(),
            tp_lindblad: transport_metric(&me).ok(),
            populations_amplitude: amp,
            populations_lindblad: me,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.rabi.abs().ln(), r.max_rel_discrepancy.ln()))
        .collect();
    Ok(ComparisonReport {
        exponent: fit_slope(&pts),
        rows,
    })
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
