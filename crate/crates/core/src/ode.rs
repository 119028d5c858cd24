//! Adaptive Dormand-Prince 5(4) integrator for complex linear-ish systems.
//!
//! The state is a flat slice of `Complex64`. Output is produced at
//! caller-chosen times; the stepper shortens steps to land on them exactly.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            max_steps: 5_000_000,
        }
    }
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order minus 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand-Prince integrator with FSAL reuse and an elementary step controller.
pub struct DormandPrince<F>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    rhs: F,
    tol: Tolerances,
    t: f64,
    y: Vec<Complex64>,
    h: f64,
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    fsal_valid: bool,
    steps: usize,
}

impl<F> DormandPrince<F>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    pub fn new(rhs: F, t0: f64, y0: Vec<Complex64>, tol: Tolerances) -> Self {
        let n = y0.len();
        let zeros = || vec![Complex64::new(0.0, 0.0); n];
        Self {
            rhs,
            tol,
            t: t0,
            y: y0,
            h: 0.0,
            k: [
                zeros(),
                zeros(),
                zeros(),
                zeros(),
                zeros(),
                zeros(),
                zeros(),
            ],
            tmp: zeros(),
            fsal_valid: false,
            steps: 0,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[Complex64] {
        &self.y
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    fn error_norm(&self, y_new: &[Complex64], err: &[Complex64]) -> f64 {
        let n = self.y.len().max(1) as f64;
        let sum: f64 = self
            .y
            .iter()
            .zip(y_new)
            .zip(err)
            .map(|((y0, y1), e)| {
                let scale = self.tol.atol + self.tol.rtol * y0.norm().max(y1.norm());
                (e.norm() / scale).powi(2)
            })
            .sum();
        (sum / n).sqrt()
    }

    fn initial_step(&mut self, span: f64) -> f64 {
        (self.rhs)(self.t, &self.y, &mut self.k[0]);
        self.fsal_valid = true;
        let d0 = self.y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let d1 = self.k[0].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let h = if d0 < 1e-10 || d1 < 1e-10 {
            1e-3
        } else {
            0.01 * d0 / d1
        };
        h.min(span).max(1e-12 * span.max(1.0))
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::IntegrationFailure {
            time: self.t,
            reason: reason.into(),
        }
    }

    /// Advance exactly to `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        if t_end <= self.t {
            return Ok(());
        }
        if self.h == 0.0 {
            self.h = self.initial_step(t_end - self.t);
        }
        let n = self.y.len();
        let mut y_new = vec![Complex64::new(0.0, 0.0); n];
        let mut err = vec![Complex64::new(0.0, 0.0); n];

        while self.t < t_end {
            if self.steps >= self.tol.max_steps {
                return Err(self.fail(format!("exceeded {} steps", self.tol.max_steps)));
            }
            let remaining = t_end - self.t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h < 1e-14 * self.t.abs().max(1.0) && !last {
                return Err(self.fail(format!("step size underflow (h = {h:e})")));
            }

            if !self.fsal_valid {
                (self.rhs)(self.t, &self.y, &mut self.k[0]);
                self.fsal_valid = true;
            }
            self.stages(h, &mut y_new);
            for (i, e) in err.iter_mut().enumerate() {
                *e = h
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
            }
            let norm = self.error_norm(&y_new, &err);
            if !norm.is_finite() || y_new.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(self.fail("non-finite state"));
            }

            if norm <= 1.0 {
                self.t = if last { t_end } else { self.t + h };
                std::mem::swap(&mut self.y, &mut y_new);
                // FSAL: last stage evaluated at the accepted point.
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                self.steps += 1;
                let factor = if norm == 0.0 {
                    5.0
                } else {
                    (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    self.h = h * factor;
                } else {
                    self.h = self.h.max(h * factor);
                }
            } else {
                let factor = (0.9 * norm.powf(-0.2)).clamp(0.1, 1.0);
                self.h = h * factor;
            }
        }
        Ok(())
    }

    fn stages(&mut self, h: f64, y_new: &mut [Complex64]) {
        let n = self.y.len();
        let t = self.t;
        let y = &self.y;
        let tmp = &mut self.tmp;
        let k = &mut self.k;

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k[0][i];
        }
        (self.rhs)(t + C2 * h, tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        (self.rhs)(t + C3 * h, tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        (self.rhs)(t + C4 * h, tmp, &mut k[3]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        (self.rhs)(t + C5 * h, tmp, &mut k[4]);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k[0][i]
                    + A62 * k[1][i]
                    + A63 * k[2][i]
                    + A64 * k[3][i]
                    + A65 * k[4][i]);
        }
        (self.rhs)(t + h, tmp, &mut k[5]);
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k[0][i]
                    + A73 * k[2][i]
                    + A74 * k[3][i]
                    + A75 * k[4][i]
                    + A76 * k[5][i]);
        }
        // Stage 7 doubles as stage 1 of the next step (FSAL).
        (self.rhs)(t + h, y_new, &mut k[6]);
    }
}
