//! Local sensitivity of moment trajectories to rate parameters:
//! one-at-a-time perturbation sweeps and forward-difference sensitivity
//! functions with parameter/output normalization.
//!
//! Differences amplify integration error by the reciprocal of the step,
//! so the quotient is formed between solutions integrated on the *same*
//! accepted step sequence: the nominal run records its mesh at a tight
//! tolerance and every perturbed run replays it. The discretization error
//! is then a smooth function of the parameters and cancels in the
//! difference, leaving the quotient accurate even for steps near 1e-8.

use crate::integrate::{self, IntegrateError};
use crate::model::{ModelError, ParameterPoint, ReactionNetwork};
use crate::moments::{build_moment_system, simulate, MomentTrajectory, SimulateError};

/// Integration tolerances used for sensitivity runs: an order tighter
/// than the simulation defaults.
pub const FD_REL_TOL: f64 = 1e-10;
pub const FD_ABS_TOL: f64 = 1e-12;

/// Absolute step used when a nominal parameter is exactly zero and a
/// relative step would vanish.
pub const FD_ABS_STEP: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum LocalError {
    #[error("perturbation factor must be greater than -1, got {0}")]
    BadFactor(f64),
    #[error("finite-difference step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("normalization scales must be positive and finite")]
    BadScale,
    #[error("scale vector has {got} entries, expected {expected}")]
    ScaleLength { got: usize, expected: usize },
    #[error("integration failed while perturbing parameter '{param}': {source}")]
    PerturbedRun {
        param: String,
        #[source]
        source: IntegrateError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

impl From<SimulateError> for LocalError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Model(m) => LocalError::Model(m),
            SimulateError::Integrate(i) => LocalError::Integrate(i),
        }
    }
}

/// One-at-a-time sweep: the nominal trajectory plus one trajectory per
/// parameter with that parameter scaled by `1 + factor`.
#[derive(Debug, Clone)]
pub struct PerturbationSweep {
    pub factor: f64,
    pub params: Vec<String>,
    pub nominal: MomentTrajectory,
    /// `perturbed[i]` has parameter i scaled, all others nominal.
    pub perturbed: Vec<MomentTrajectory>,
}

/// Runs the sweep at the given integration tolerances.
pub fn perturbation_sweep(
    network: &ReactionNetwork,
    point: &ParameterPoint,
    factor: f64,
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    diagonal_covariance: bool,
) -> Result<PerturbationSweep, LocalError> {
    if !(factor > -1.0) || !factor.is_finite() {
        return Err(LocalError::BadFactor(factor));
    }
    network.check_point(point)?;
    let nominal = simulate(network, point, grid, rel_tol, abs_tol, diagonal_covariance)?;
    let mut perturbed = Vec::with_capacity(network.num_parameters());
    for (i, p) in network.parameters().iter().enumerate() {
        let shifted = point.scaled_entry(i, factor)?;
        let traj = simulate(network, &shifted, grid, rel_tol, abs_tol, diagonal_covariance)
            .map_err(|e| match e {
                SimulateError::Integrate(source) => LocalError::PerturbedRun {
                    param: p.name.clone(),
                    source,
                },
                SimulateError::Model(m) => LocalError::Model(m),
            })?;
        perturbed.push(traj);
    }
    Ok(PerturbationSweep {
        factor,
        params: network.parameters().iter().map(|p| p.name.clone()).collect(),
        nominal,
        perturbed,
    })
}

/// Raw forward-difference sensitivities of every packed moment output.
#[derive(Debug, Clone)]
pub struct RawSensitivities {
    pub times: Vec<f64>,
    pub params: Vec<String>,
    pub outputs: Vec<String>,
    /// `values[param][output][time]`, in output units per parameter unit.
    pub values: Vec<Vec<Vec<f64>>>,
    pub nominal: MomentTrajectory,
}

/// Forward differences `S_i(t) = [y(theta + h_i e_i, t) - y(theta, t)] / h_i`
/// with `h_i = h_rel * theta_i` (absolute fallback [`FD_ABS_STEP`] for a
/// zero parameter). All runs share the nominal run's accepted mesh.
pub fn fd_sensitivity(
    network: &ReactionNetwork,
    point: &ParameterPoint,
    h_rel: f64,
    grid: &[f64],
    diagonal_covariance: bool,
) -> Result<RawSensitivities, LocalError> {
    if !(h_rel > 0.0) || !h_rel.is_finite() {
        return Err(LocalError::BadStep(h_rel));
    }
    network.check_point(point)?;
    let system = build_moment_system(network, diagonal_covariance);
    let y0 = system.initial_packed();
    let theta = point.values();
    let (nominal_raw, mesh) = integrate::integrate_recording(
        |_t, y, dy| system.rhs(theta, y, dy),
        &y0,
        grid,
        FD_REL_TOL,
        FD_ABS_TOL,
    )?;

    let n_out = system.dim();
    let n_time = grid.len();
    let mut values = Vec::with_capacity(theta.len());
    for (i, p) in network.parameters().iter().enumerate() {
        let step = if theta[i] != 0.0 {
            h_rel * theta[i]
        } else {
            FD_ABS_STEP
        };
        let mut shifted = theta.to_vec();
        shifted[i] = theta[i] + step;
        // the realized step after rounding is what actually separates the
        // two runs; dividing by it removes one rounding error source
        let h = shifted[i] - theta[i];
        let perturbed = integrate::integrate_on_mesh(
            |_t, y, dy| system.rhs(&shifted, y, dy),
            &y0,
            grid,
            &mesh,
        )
        .map_err(|source| LocalError::PerturbedRun {
            param: p.name.clone(),
            source,
        })?;
        let mut per_output = vec![vec![0.0; n_time]; n_out];
        for (ti, (yp, yn)) in perturbed.states.iter().zip(&nominal_raw.states).enumerate() {
            for o in 0..n_out {
                per_output[o][ti] = (yp[o] - yn[o]) / h;
            }
        }
        values.push(per_output);
    }

    let nominal = crate::moments::trajectory_from_packed(&system, nominal_raw);
    Ok(RawSensitivities {
        times: grid.to_vec(),
        params: network.parameters().iter().map(|p| p.name.clone()).collect(),
        outputs: system.output_labels(),
        values,
        nominal,
    })
}

/// Rescales raw coefficients into dimensionless ones:
/// `normalized[i][o][t] = raw[i][o][t] * omega_theta[i] / omega_y[o]`.
pub fn normalize(
    raw: &RawSensitivities,
    omega_theta: &[f64],
    omega_y: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>, LocalError> {
    if omega_theta.len() != raw.params.len() {
        return Err(LocalError::ScaleLength {
            got: omega_theta.len(),
            expected: raw.params.len(),
        });
    }
    if omega_y.len() != raw.outputs.len() {
        return Err(LocalError::ScaleLength {
            got: omega_y.len(),
            expected: raw.outputs.len(),
        });
    }
    if omega_theta
        .iter()
        .chain(omega_y)
        .any(|w| !(*w > 0.0) || !w.is_finite())
    {
        return Err(LocalError::BadScale);
    }
    Ok(raw
        .values
        .iter()
        .enumerate()
        .map(|(i, per_output)| {
            per_output
                .iter()
                .enumerate()
                .map(|(o, series)| {
                    series
                        .iter()
                        .map(|v| v * omega_theta[i] / omega_y[o])
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Raw and normalized sensitivities plus the scalings that produced them.
#[derive(Debug, Clone)]
pub struct LocalSensitivityReport {
    pub times: Vec<f64>,
    pub params: Vec<String>,
    pub outputs: Vec<String>,
    /// `raw[param][output][time]`
    pub raw: Vec<Vec<Vec<f64>>>,
    /// `normalized[param][output][time]`
    pub normalized: Vec<Vec<Vec<f64>>>,
    pub omega_theta: Vec<f64>,
    pub omega_y: Vec<f64>,
    pub nominal: MomentTrajectory,
}

/// Forward-difference sensitivities normalized with the default scalings:
/// parameters by their nominal values, outputs unscaled.
pub fn local_sensitivity(
    network: &ReactionNetwork,
    point: &ParameterPoint,
    h_rel: f64,
    grid: &[f64],
    diagonal_covariance: bool,
    omega_theta: Option<&[f64]>,
    omega_y: Option<&[f64]>,
) -> Result<LocalSensitivityReport, LocalError> {
    let raw = fd_sensitivity(network, point, h_rel, grid, diagonal_covariance)?;
    let w_theta: Vec<f64> = match omega_theta {
        Some(w) => w.to_vec(),
        None => point.values().to_vec(),
    };
    let w_y: Vec<f64> = match omega_y {
        Some(w) => w.to_vec(),
        None => vec![1.0; raw.outputs.len()],
    };
    let normalized = normalize(&raw, &w_theta, &w_y)?;
    Ok(LocalSensitivityReport {
        times: raw.times.clone(),
        params: raw.params.clone(),
        outputs: raw.outputs.clone(),
        raw: raw.values,
        normalized,
        omega_theta: w_theta,
        omega_y: w_y,
        nominal: raw.nominal,
    })
}
