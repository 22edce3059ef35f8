//! Mean and covariance ODEs for a reaction network, closed at second
//! order by dropping third central moments.
//!
//! With propensities that are at most quadratic in the species counts,
//! the expected propensity under the closure is
//!
//! `phi_k = alpha_k(mu) + 1/2 sum_{l,m} H_k[l,m] sigma[l,m]`
//!
//! (H_k the constant propensity Hessian), and the closed system is
//!
//! `d mu_i /dt   = sum_k nu_ki phi_k`
//! `d sigma_ij/dt = sum_k nu_ki (grad alpha_k(mu) . sigma_j) +
//!                  nu_kj (grad alpha_k(mu) . sigma_i) + nu_ki nu_kj phi_k`
//!
//! For networks whose propensities are all affine the closure is exact:
//! no third-moment term is dropped because the Hessians vanish.
//!
//! The state is packed as `[mu (n), sigma upper triangle (n(n+1)/2)]` for
//! the ODE integrator.

use crate::integrate::{self, IntegrateError, StepStats};
use crate::model::{propensity_polynomials, ModelError, ParameterPoint, PropensityPolynomial, ReactionNetwork};
use crate::sym::{self, SymMatrix};

#[derive(Debug, thiserror::Error)]
pub enum SimulateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Mean vector and covariance matrix at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mu: Vec<f64>,
    pub sigma: SymMatrix,
}

/// The packed moment ODE system for one network.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    species_names: Vec<String>,
    polys: Vec<PropensityPolynomial>,
    /// Net stoichiometry per reaction, as reals.
    stoich: Vec<Vec<f64>>,
    initial: Vec<f64>,
    num_params: usize,
    diagonal_covariance: bool,
}

/// Builds the closed moment system. With `diagonal_covariance` set, all
/// cross-covariances are pinned to zero in both the state and the
/// right-hand side (the packed dimension is unchanged).
pub fn build_moment_system(network: &ReactionNetwork, diagonal_covariance: bool) -> MomentSystem {
    let n = network.num_species();
    let mut initial = vec![0.0; n + n * (n + 1) / 2];
    for (i, s) in network.species().iter().enumerate() {
        initial[i] = s.initial_count as f64;
    }
    MomentSystem {
        species_names: network.species().iter().map(|s| s.name.clone()).collect(),
        polys: propensity_polynomials(network),
        stoich: network
            .reactions()
            .iter()
            .map(|r| r.stoichiometry.iter().map(|&v| v as f64).collect())
            .collect(),
        initial,
        num_params: network.num_parameters(),
        diagonal_covariance,
    }
}

impl MomentSystem {
    pub fn num_species(&self) -> usize {
        self.species_names.len()
    }

    /// Packed state dimension `n + n(n+1)/2`.
    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn diagonal_covariance(&self) -> bool {
        self.diagonal_covariance
    }

    /// Packed initial condition: means at the initial counts, covariance
    /// zero (a deterministic initial state).
    pub fn initial_packed(&self) -> Vec<f64> {
        self.initial.clone()
    }

    /// Index of mean component `i` in the packed state / output vector.
    pub fn mean_index(&self, i: usize) -> usize {
        debug_assert!(i < self.num_species());
        i
    }

    /// Index of covariance component `(i, j)` in the packed state.
    pub fn cov_index(&self, i: usize, j: usize) -> usize {
        let n = self.num_species();
        n + sym::packed_idx(n, i, j)
    }

    /// One label per packed component: `mu_<s>` for means followed by
    /// `sigma_<si>_<sj>` for the covariance upper triangle, row-major.
    pub fn output_labels(&self) -> Vec<String> {
        let n = self.num_species();
        let mut labels: Vec<String> = self
            .species_names
            .iter()
            .map(|s| format!("mu_{s}"))
            .collect();
        for i in 0..n {
            for j in i..n {
                labels.push(format!("sigma_{}_{}", self.species_names[i], self.species_names[j]));
            }
        }
        labels
    }

    pub fn unpack(&self, y: &[f64]) -> MomentState {
        let n = self.num_species();
        MomentState {
            mu: y[..n].to_vec(),
            sigma: SymMatrix::from_packed(n, y[n..].to_vec()),
        }
    }

    pub fn pack(&self, state: &MomentState) -> Vec<f64> {
        let mut y = state.mu.clone();
        y.extend_from_slice(state.sigma.packed());
        y
    }

    /// Time-independent right-hand side of the packed system at parameter
    /// values `theta`.
    pub fn rhs(&self, theta: &[f64], y: &[f64], dydt: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.num_params);
        debug_assert_eq!(y.len(), self.dim());
        debug_assert_eq!(dydt.len(), self.dim());
        let n = self.num_species();
        let mu = &y[..n];
        let sig_in = &y[n..];
        let masked;
        let sig: &[f64] = if self.diagonal_covariance {
            masked = mask_off_diagonal(n, sig_in);
            &masked
        } else {
            sig_in
        };

        dydt.fill(0.0);
        let (dmu, dsig) = dydt.split_at_mut(n);
        let mut grad = vec![0.0; n];
        let mut w = vec![0.0; n];
        for (poly, nu) in self.polys.iter().zip(&self.stoich) {
            let c = theta[poly.param];
            let phi = poly.eval(mu, c) + 0.5 * c * poly.hessian.contract_packed(sig);
            // grad_l = c (linear_l + sum_m H_lm mu_m)
            poly.hessian.mul_vec(mu, &mut grad);
            for (g, l) in grad.iter_mut().zip(&poly.linear) {
                *g = c * (*g + l);
            }
            // w_j = sum_l grad_l sigma_jl
            sym::packed_mul_vec(n, sig, &grad, &mut w);
            let mut idx = 0;
            for i in 0..n {
                dmu[i] += nu[i] * phi;
                for j in i..n {
                    dsig[idx] += nu[i] * w[j] + nu[j] * w[i] + nu[i] * nu[j] * phi;
                    idx += 1;
                }
            }
        }
        if self.diagonal_covariance {
            let mut idx = 0;
            for i in 0..n {
                for j in i..n {
                    if i != j {
                        dsig[idx] = 0.0;
                    }
                    idx += 1;
                }
            }
        }
    }
}

fn mask_off_diagonal(n: usize, packed: &[f64]) -> Vec<f64> {
    let mut out = packed.to_vec();
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            if i != j {
                out[idx] = 0.0;
            }
            idx += 1;
        }
    }
    out
}

/// Moment trajectory on an output grid. `negative_variance` flags any
/// diagonal covariance entry that went below zero anywhere on the grid;
/// values are reported as computed, never clamped.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
    pub stats: StepStats,
    pub negative_variance: bool,
}

impl MomentTrajectory {
    /// One packed component (`mean_index` / `cov_index` addressing) over
    /// all grid times.
    pub fn component(&self, system: &MomentSystem, index: usize) -> Vec<f64> {
        let n = system.num_species();
        self.states
            .iter()
            .map(|s| {
                if index < n {
                    s.mu[index]
                } else {
                    s.sigma.packed()[index - n]
                }
            })
            .collect()
    }
}

pub(crate) fn trajectory_from_packed(
    system: &MomentSystem,
    raw: integrate::Trajectory,
) -> MomentTrajectory {
    let n = system.num_species();
    let mut negative_variance = false;
    let states: Vec<MomentState> = raw
        .states
        .iter()
        .map(|y| {
            let st = system.unpack(y);
            for i in 0..n {
                if st.sigma.get(i, i) < 0.0 {
                    negative_variance = true;
                }
            }
            st
        })
        .collect();
    MomentTrajectory {
        times: raw.times,
        states,
        stats: raw.stats,
        negative_variance,
    }
}

/// Integrates the closed moment system for `network` at `point` over the
/// output grid.
pub fn simulate(
    network: &ReactionNetwork,
    point: &ParameterPoint,
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    diagonal_covariance: bool,
) -> Result<MomentTrajectory, SimulateError> {
    network.check_point(point)?;
    let system = build_moment_system(network, diagonal_covariance);
    let raw = integrate::integrate(
        |_t, y, dy| system.rhs(point.values(), y, dy),
        &system.initial_packed(),
        grid,
        rel_tol,
        abs_tol,
    )?;
    Ok(trajectory_from_packed(&system, raw))
}

/// [`simulate`] for a prebuilt system (used when many parameter points
/// share one network).
pub fn simulate_system(
    system: &MomentSystem,
    theta: &[f64],
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<MomentTrajectory, IntegrateError> {
    let raw = integrate::integrate(
        |_t, y, dy| system.rhs(theta, y, dy),
        &system.initial_packed(),
        grid,
        rel_tol,
        abs_tol,
    )?;
    Ok(trajectory_from_packed(system, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::uniform_grid;
    use crate::model::parse_model;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const BIRTHDEATH: &str = include_str!("../../../models/birthdeath.model");
    const DIMERIZATION: &str = include_str!("../../../models/dimerization.model");

    /// Mean and variance of the autocatalytic birth / linear death model:
    /// both moment equations are closed exactly, with solution
    /// mu(t) = x0 e^{Dt}, sigma(t) = x0 (c1+c2)/D (e^{2Dt} - e^{Dt}),
    /// D = c1 - c2.
    fn birthdeath_closed_form(x0: f64, c1: f64, c2: f64, t: f64) -> (f64, f64) {
        let d = c1 - c2;
        let mu = x0 * (d * t).exp();
        let sigma = x0 * (c1 + c2) / d * ((2.0 * d * t).exp() - (d * t).exp());
        (mu, sigma)
    }

    #[test]
    fn birthdeath_rhs_matches_hand_values() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let sys = build_moment_system(&net, false);
        assert_eq!(sys.dim(), 2);
        let mut dy = vec![0.0; 2];
        sys.rhs(net.nominal_point().values(), &[50.0, 0.0], &mut dy);
        // d mu = (c1 - c2) mu = -45; d sigma = 2(c1-c2) sigma + (c1+c2) mu = 55
        assert_relative_eq!(dy[0], -45.0, max_relative = 1e-12);
        assert_relative_eq!(dy[1], 55.0, max_relative = 1e-12);
        let mut dy2 = vec![0.0; 2];
        sys.rhs(net.nominal_point().values(), &[50.0, 20.0], &mut dy2);
        assert_relative_eq!(dy2[1], 2.0 * (-0.9) * 20.0 + 55.0, max_relative = 1e-12);
    }

    #[test]
    fn birthdeath_matches_closed_form() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let grid = uniform_grid(0.0, 10.0, 101);
        let traj = simulate(&net, &net.nominal_point(), &grid, 1e-8, 1e-10, false).unwrap();
        assert!(!traj.negative_variance);
        for (t, st) in traj.times.iter().zip(&traj.states) {
            let (mu, sigma) = birthdeath_closed_form(50.0, 0.10, 1.0, *t);
            assert_relative_eq!(st.mu[0], mu, max_relative = 1e-6, epsilon = 1e-12);
            assert_relative_eq!(st.sigma.get(0, 0), sigma, max_relative = 1e-6, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimerization_rhs_at_deterministic_start() {
        let net = parse_model(DIMERIZATION).unwrap();
        let sys = build_moment_system(&net, false);
        assert_eq!(sys.dim(), 5);
        let mut dy = vec![0.0; 5];
        sys.rhs(net.nominal_point().values(), &[301.0, 0.0, 0.0, 0.0, 0.0], &mut dy);
        // alpha1 = 1.66e-3 * 301*300/2 = 74.949 fires alone at the start
        assert_relative_eq!(dy[0], -2.0 * 74.949, max_relative = 1e-12);
        assert_relative_eq!(dy[1], 74.949, max_relative = 1e-12);
        assert_relative_eq!(dy[2], 4.0 * 74.949, max_relative = 1e-12); // sigma_xx
        assert_relative_eq!(dy[3], -2.0 * 74.949, max_relative = 1e-12); // sigma_xy
        assert_relative_eq!(dy[4], 74.949, max_relative = 1e-12); // sigma_yy
    }

    #[test]
    fn dimerization_conserves_total_monomer_mass() {
        // X + 2Y is untouched by both reactions, so mu_X + 2 mu_Y and the
        // variance of X + 2Y (zero initially) are exact invariants.
        let net = parse_model(DIMERIZATION).unwrap();
        let grid = uniform_grid(0.0, 10.0, 51);
        let traj = simulate(&net, &net.nominal_point(), &grid, 1e-10, 1e-12, false).unwrap();
        for st in &traj.states {
            assert_relative_eq!(st.mu[0] + 2.0 * st.mu[1], 301.0, max_relative = 1e-9);
            let var_combo =
                st.sigma.get(0, 0) + 4.0 * st.sigma.get(0, 1) + 4.0 * st.sigma.get(1, 1);
            assert!(var_combo.abs() < 1e-6, "conserved combination drifted: {var_combo}");
        }
    }

    #[test]
    fn dimerization_approaches_deterministic_fixed_point() {
        // Positive root of c1 x^2 + (c2 - c1) x - c2 x0 = 0 is the mean-field
        // stationary monomer count; the closed system settles nearby.
        let net = parse_model(DIMERIZATION).unwrap();
        let grid = uniform_grid(0.0, 10.0, 101);
        let traj = simulate(&net, &net.nominal_point(), &grid, 1e-8, 1e-10, false).unwrap();
        let (c1, c2, x0): (f64, f64, f64) = (1.66e-3, 0.2, 301.0);
        let root = (-(c2 - c1) + ((c2 - c1).powi(2) + 4.0 * c1 * c2 * x0).sqrt()) / (2.0 * c1);
        let end = traj.states.last().unwrap().mu[0];
        assert!((end - root).abs() < 10.0, "mu_X(10) = {end}, fixed point = {root}");
    }

    #[test]
    fn diagonal_covariance_pins_cross_terms() {
        let net = parse_model(DIMERIZATION).unwrap();
        let grid = uniform_grid(0.0, 10.0, 21);
        let full = simulate(&net, &net.nominal_point(), &grid, 1e-8, 1e-10, false).unwrap();
        let diag = simulate(&net, &net.nominal_point(), &grid, 1e-8, 1e-10, true).unwrap();
        for st in &diag.states {
            assert_eq!(st.sigma.get(0, 1), 0.0);
        }
        // dropping the cross term changes the variance dynamics
        let d_full = full.states.last().unwrap().sigma.get(0, 0);
        let d_diag = diag.states.last().unwrap().sigma.get(0, 0);
        assert!((d_full - d_diag).abs() > 1e-3, "expected distinct variances, got {d_full} vs {d_diag}");
    }

    #[test]
    fn packing_round_trips() {
        let net = parse_model(DIMERIZATION).unwrap();
        let sys = build_moment_system(&net, false);
        let y: Vec<f64> = vec![3.0, 1.0, 2.5, -0.5, 0.25];
        let state = sys.unpack(&y);
        assert_eq!(state.mu, vec![3.0, 1.0]);
        assert_eq!(state.sigma.get(0, 1), -0.5);
        assert_eq!(sys.pack(&state), y);
        assert_eq!(
            sys.output_labels(),
            vec!["mu_X", "mu_Y", "sigma_X_X", "sigma_X_Y", "sigma_Y_Y"]
        );
        assert_eq!(sys.mean_index(1), 1);
        assert_eq!(sys.cov_index(0, 1), 3);
        assert_eq!(sys.cov_index(1, 1), 4);
    }

    proptest! {
        /// Every term of the right-hand side is linear in the rate
        /// constants, so scaling all of theta scales the whole field.
        #[test]
        fn rhs_scales_linearly_in_parameters(
            lambda in 1e-3..1e3f64,
            mu_x in 0.0..500.0f64,
            mu_y in 0.0..200.0f64,
            sxx in 0.0..100.0f64,
            sxy in -50.0..50.0f64,
            syy in 0.0..100.0f64,
        ) {
            let net = parse_model(DIMERIZATION).unwrap();
            let sys = build_moment_system(&net, false);
            let theta = [1.66e-3, 0.2];
            let scaled = [theta[0] * lambda, theta[1] * lambda];
            let y = [mu_x, mu_y, sxx, sxy, syy];
            let mut d1 = vec![0.0; 5];
            let mut d2 = vec![0.0; 5];
            sys.rhs(&theta, &y, &mut d1);
            sys.rhs(&scaled, &y, &mut d2);
            for (a, b) in d1.iter().zip(&d2) {
                prop_assert!((a * lambda - b).abs() <= 1e-9 * (b.abs() + 1e-12));
            }
        }

        /// At zero covariance the closed mean drift reduces to the exact
        /// reaction flux at the integer state, and the covariance source
        /// is the flux-weighted outer product of the stoichiometries.
        #[test]
        fn rhs_at_zero_covariance_matches_counting_propensities(x in 0i64..400, y in 0i64..200) {
            let net = parse_model(DIMERIZATION).unwrap();
            let sys = build_moment_system(&net, false);
            let point = net.nominal_point();
            let rates = crate::model::propensity_eval(&net, &[x, y], &point).unwrap();
            let packed = [x as f64, y as f64, 0.0, 0.0, 0.0];
            let mut dy = vec![0.0; 5];
            sys.rhs(point.values(), &packed, &mut dy);
            let stoich: Vec<&[i64]> = net.reactions().iter().map(|r| r.stoichiometry.as_slice()).collect();
            for i in 0..2 {
                let expect: f64 = rates.iter().zip(&stoich).map(|(a, nu)| a * nu[i] as f64).sum();
                prop_assert!((dy[i] - expect).abs() <= 1e-9 * (expect.abs() + 1.0));
            }
            let expect_sxx: f64 = rates.iter().zip(&stoich).map(|(a, nu)| a * (nu[0] * nu[0]) as f64).sum();
            prop_assert!((dy[2] - expect_sxx).abs() <= 1e-9 * (expect_sxx.abs() + 1.0));
        }
    }
}
