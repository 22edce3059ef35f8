//! Explicit Dormand-Prince 5(4) integrator with embedded error control,
//! fourth-order dense output, and a record/replay mode.
//!
//! Outputs are produced on a caller-supplied time grid via the dense
//! interpolant, so the accepted step sequence is independent of the grid.
//! The replay mode re-integrates a perturbed right-hand side on a
//! previously recorded step sequence with error control switched off;
//! differencing two replayed solutions then cancels the shared
//! discretization error, which keeps finite-difference quotients smooth
//! down to step sizes far below the integration tolerance.

#[derive(Debug, thiserror::Error)]
pub enum IntegrateError {
    #[error("output grid must be finite and strictly increasing")]
    BadGrid,
    #[error("tolerances must be positive and finite (rel_tol={rel_tol}, abs_tol={abs_tol})")]
    BadTolerance { rel_tol: f64, abs_tol: f64 },
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("right-hand side produced a non-finite value at t = {t}")]
    NonFiniteRhs { t: f64 },
}

/// Work counters for one integration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
}

/// Solution sampled on the requested output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

// Butcher tableau of the Dormand-Prince 5(4) pair (FSAL form).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const A7: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the 5th- and 4th-order solutions.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

struct Stepper<F> {
    rhs: F,
    dim: usize,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    stats: StepStats,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Stepper<F> {
    fn new(rhs: F, dim: usize) -> Self {
        Stepper {
            rhs,
            dim,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            y_stage: vec![0.0; dim],
            stats: StepStats::default(),
        }
    }

    fn eval(&mut self, t: f64, y: &[f64], out: usize) -> Result<(), IntegrateError> {
        (self.rhs)(t, y, &mut self.k[out]);
        self.stats.rhs_evaluations += 1;
        if self.k[out].iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFiniteRhs { t });
        }
        Ok(())
    }

    /// One step of size h from (t, y); k[0] must hold f(t, y). Fills
    /// k[1..7] and writes the 5th-order result into y_new. FSAL: k[6] is
    /// f(t + h, y_new).
    fn stages(&mut self, t: f64, y: &[f64], h: f64, y_new: &mut [f64]) -> Result<(), IntegrateError> {
        let rows: [&[f64]; 6] = [&A2, &A3, &A4, &A5, &A6, &A7];
        for (s, row) in rows.iter().enumerate() {
            for i in 0..self.dim {
                let mut acc = 0.0;
                for (j, &a) in row.iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                self.y_stage[i] = y[i] + h * acc;
            }
            if s == 5 {
                y_new.copy_from_slice(&self.y_stage);
            }
            let y_arg = std::mem::take(&mut self.y_stage);
            let r = self.eval(t + C[s + 1] * h, &y_arg, s + 1);
            self.y_stage = y_arg;
            r?;
        }
        Ok(())
    }

    /// Scaled RMS norm of the embedded error estimate.
    fn error_norm(&self, y: &[f64], y_new: &[f64], h: f64, rel_tol: f64, abs_tol: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * self.k[j][i];
            }
            let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
            let r = h * e / scale;
            acc += r * r;
        }
        (acc / self.dim as f64).sqrt()
    }

    /// Dense-output coefficients for the step just taken (y -> y_new over h).
    fn dense_coefficients(&self, y: &[f64], y_new: &[f64], h: f64) -> DenseStep {
        let dim = self.dim;
        let mut rcont = vec![[0.0; 5]; dim];
        for (i, rc) in rcont.iter_mut().enumerate() {
            let ydiff = y_new[i] - y[i];
            let bspl = h * self.k[0][i] - ydiff;
            rc[0] = y[i];
            rc[1] = ydiff;
            rc[2] = bspl;
            rc[3] = ydiff - h * self.k[6][i] - bspl;
            rc[4] = h * (D1 * self.k[0][i]
                + D3 * self.k[2][i]
                + D4 * self.k[3][i]
                + D5 * self.k[4][i]
                + D6 * self.k[5][i]
                + D7 * self.k[6][i]);
        }
        DenseStep { rcont }
    }
}

struct DenseStep {
    rcont: Vec<[f64; 5]>,
}

impl DenseStep {
    /// Interpolated state at fraction theta in [0, 1] of the step.
    /// theta = 0 reproduces the step's start state and theta = 1 its end
    /// state exactly.
    fn eval(&self, theta: f64, out: &mut [f64]) {
        let th1 = 1.0 - theta;
        for (o, rc) in out.iter_mut().zip(&self.rcont) {
            *o = rc[0] + theta * (rc[1] + th1 * (rc[2] + theta * (rc[3] + th1 * rc[4])));
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<(), IntegrateError> {
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
        return Err(IntegrateError::BadGrid);
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(IntegrateError::BadGrid);
    }
    Ok(())
}

/// Initial step size heuristic (order 5).
fn initial_step<F: FnMut(f64, &[f64], &mut [f64])>(
    stepper: &mut Stepper<F>,
    t0: f64,
    y0: &[f64],
    span: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, IntegrateError> {
    let dim = stepper.dim;
    let sc = |y: &[f64], i: usize| abs_tol + rel_tol * y[i].abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..dim {
        let s = sc(y0, i);
        d0 += (y0[i] / s).powi(2);
        d1 += (stepper.k[0][i] / s).powi(2);
    }
    d0 = (d0 / dim as f64).sqrt();
    d1 = (d1 / dim as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    let y1: Vec<f64> = (0..dim).map(|i| y0[i] + h0 * stepper.k[0][i]).collect();
    stepper.eval(t0 + h0, &y1, 1)?;
    let mut d2 = 0.0;
    for i in 0..dim {
        d2 += ((stepper.k[1][i] - stepper.k[0][i]) / sc(y0, i)).powi(2);
    }
    d2 = (d2 / dim as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Integrates dy/dt = rhs(t, y) from grid[0] to the last grid point,
/// sampling the solution at every grid time. Fully deterministic: equal
/// inputs produce bit-identical output.
pub fn integrate<F: FnMut(f64, &[f64], &mut [f64])>(
    rhs: F,
    y0: &[f64],
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Trajectory, IntegrateError> {
    integrate_adaptive(rhs, y0, grid, rel_tol, abs_tol, None)
}

/// Like [`integrate`], but also returns the accepted step endpoints
/// (starting at grid[0]) for later replay with [`integrate_on_mesh`].
pub fn integrate_recording<F: FnMut(f64, &[f64], &mut [f64])>(
    rhs: F,
    y0: &[f64],
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<(Trajectory, Vec<f64>), IntegrateError> {
    let mut mesh = Vec::new();
    let traj = integrate_adaptive(rhs, y0, grid, rel_tol, abs_tol, Some(&mut mesh))?;
    Ok((traj, mesh))
}

fn integrate_adaptive<F: FnMut(f64, &[f64], &mut [f64])>(
    rhs: F,
    y0: &[f64],
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    mut mesh: Option<&mut Vec<f64>>,
) -> Result<Trajectory, IntegrateError> {
    check_grid(grid)?;
    if !(rel_tol > 0.0 && rel_tol.is_finite() && abs_tol > 0.0 && abs_tol.is_finite()) {
        return Err(IntegrateError::BadTolerance { rel_tol, abs_tol });
    }
    let t0 = grid[0];
    let t_end = grid[grid.len() - 1];
    let dim = y0.len();
    let mut stepper = Stepper::new(rhs, dim);
    let mut states = Vec::with_capacity(grid.len());
    states.push(y0.to_vec());
    if let Some(m) = mesh.as_deref_mut() {
        m.push(t0);
    }
    if grid.len() == 1 {
        return Ok(Trajectory {
            times: grid.to_vec(),
            states,
            stats: stepper.stats,
        });
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    stepper.eval(t0, &y, 0)?;
    let mut h = initial_step(&mut stepper, t0, y0, t_end - t0, rel_tol, abs_tol)?;
    let mut next_out = 1;
    let mut fac_max = FAC_MAX;

    while t < t_end {
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(IntegrateError::StepSizeUnderflow { t });
        }
        let last = h >= t_end - t;
        let t_new = if last { t_end } else { t + h };
        // Step with the difference the mesh will imply, not the proposed h:
        // a replay computes its step as t_new - t, and the two can differ in
        // the last ulp. Using the same value keeps replays bitwise identical.
        h = t_new - t;
        stepper.stages(t, &y, h, &mut y_new)?;
        let err = stepper.error_norm(&y, &y_new, h, rel_tol, abs_tol);
        if err.is_finite() && err <= 1.0 {
            stepper.stats.steps_accepted += 1;
            if let Some(m) = mesh.as_deref_mut() {
                m.push(t_new);
            }
            if next_out < grid.len() && grid[next_out] <= t_new {
                let dense = stepper.dense_coefficients(&y, &y_new, h);
                let mut out = vec![0.0; dim];
                while next_out < grid.len() && grid[next_out] <= t_new {
                    dense.eval((grid[next_out] - t) / h, &mut out);
                    states.push(out.clone());
                    next_out += 1;
                }
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            let (k0, k6) = {
                let (a, b) = stepper.k.split_at_mut(6);
                (&mut a[0], &b[0])
            };
            k0.copy_from_slice(k6);
            let fac = if err > 0.0 {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, fac_max)
            } else {
                fac_max
            };
            h *= fac;
            fac_max = FAC_MAX;
        } else {
            stepper.stats.steps_rejected += 1;
            let fac = if err.is_finite() && err > 0.0 {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h *= fac;
            fac_max = 1.0;
        }
    }
    debug_assert_eq!(next_out, grid.len());
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        stats: stepper.stats,
    })
}

/// Re-integrates on a fixed, previously recorded step sequence with error
/// control disabled. `mesh` must start at grid[0], end at the last grid
/// point, and be strictly increasing; this holds for any mesh produced by
/// [`integrate_recording`] on the same grid.
pub fn integrate_on_mesh<F: FnMut(f64, &[f64], &mut [f64])>(
    rhs: F,
    y0: &[f64],
    grid: &[f64],
    mesh: &[f64],
) -> Result<Trajectory, IntegrateError> {
    check_grid(grid)?;
    check_grid(mesh)?;
    if mesh[0] != grid[0] || mesh[mesh.len() - 1] != grid[grid.len() - 1] {
        return Err(IntegrateError::BadGrid);
    }
    let dim = y0.len();
    let mut stepper = Stepper::new(rhs, dim);
    let mut states = Vec::with_capacity(grid.len());
    states.push(y0.to_vec());
    if grid.len() == 1 {
        return Ok(Trajectory {
            times: grid.to_vec(),
            states,
            stats: stepper.stats,
        });
    }

    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    stepper.eval(mesh[0], &y, 0)?;
    let mut next_out = 1;
    for w in mesh.windows(2) {
        let (t, t_new) = (w[0], w[1]);
        let h = t_new - t;
        stepper.stages(t, &y, h, &mut y_new)?;
        stepper.stats.steps_accepted += 1;
        if next_out < grid.len() && grid[next_out] <= t_new {
            let dense = stepper.dense_coefficients(&y, &y_new, h);
            let mut out = vec![0.0; dim];
            while next_out < grid.len() && grid[next_out] <= t_new {
                dense.eval((grid[next_out] - t) / h, &mut out);
                states.push(out.clone());
                next_out += 1;
            }
        }
        std::mem::swap(&mut y, &mut y_new);
        let (k0, k6) = {
            let (a, b) = stepper.k.split_at_mut(6);
            (&mut a[0], &b[0])
        };
        k0.copy_from_slice(k6);
    }
    debug_assert_eq!(next_out, grid.len());
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        stats: stepper.stats,
    })
}

/// `n` uniformly spaced points spanning [t0, t1], endpoints exact.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "a grid needs at least two points");
    let mut g: Vec<f64> = (0..n)
        .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
        .collect();
    g[n - 1] = t1;
    g
}
