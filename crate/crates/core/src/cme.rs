//! Ground-truth probability dynamics on a truncated state space.
//!
//! The network's continuous-time Markov chain is restricted to a box of
//! states reachable from the initial condition. Its generator A has
//! columns indexed by source state: `a_ij = alpha_k(x_j)` when
//! `x_i = x_j + nu_k`, and `a_jj = -sum_k alpha_k(x_j)` over all
//! reactions, including those whose target falls outside the box.
//! Transitions leaving the box therefore drain probability mass
//! (column sums equal minus the truncation outflow), which is how the
//! approximation error of the truncation is tracked.
//!
//! `p(t) = exp(tA) p0` is evaluated by uniformization: with
//! `L >= max_j |a_jj|` the matrix `P = I + A/L` is substochastic with
//! non-negative entries, and `exp(tA) p = sum_m w_m P^m p` with Poisson
//! weights `w_m = e^{-Lt}(Lt)^m/m!`. Weights are generated outward from
//! the mode by recurrence and renormalized, which keeps the computation
//! stable for large `Lt` and bounds the series truncation error well
//! below 1e-12.

use std::collections::HashMap;

use crate::model::{propensity_eval, ModelError, ParameterPoint, ReactionNetwork};
use crate::moments::MomentState;
use crate::sym::SymMatrix;

/// Hard cap on enumerated states to keep memory bounded.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Relative weight below which the Poisson series is cut. The discarded
/// tail mass stays orders of magnitude under the 1e-12 budget.
const POISSON_CUTOFF: f64 = 1e-18;

#[derive(Debug, thiserror::Error)]
pub enum CmeError {
    #[error("truncation bound {bound} for species '{species}' is below its initial count {initial}")]
    BoundBelowInitial {
        species: String,
        bound: u64,
        initial: u64,
    },
    #[error("state space exceeds the cap of {cap} states; raise the cap or lower the bound")]
    TooManyStates { cap: usize },
    #[error("evolution time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("distribution length {got} does not match state space size {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Reachable states inside a per-species box, in lexicographic order.
#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
    initial: usize,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    pub fn index_of(&self, state: &[i64]) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Ordinal of the network's initial state.
    pub fn initial_index(&self) -> usize {
        self.initial
    }

    /// Point mass on the initial state.
    pub fn initial_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.states.len()];
        p[self.initial] = 1.0;
        p
    }
}

/// Enumerates all states reachable from the initial counts by firing
/// reactions in any order, staying within `0 <= x_i <= bound[i]`, with
/// the default state cap.
pub fn enumerate_states(network: &ReactionNetwork, bound: &[u64]) -> Result<StateSpace, CmeError> {
    enumerate_states_capped(network, bound, DEFAULT_STATE_CAP)
}

/// [`enumerate_states`] with an explicit cap on the number of states.
pub fn enumerate_states_capped(
    network: &ReactionNetwork,
    bound: &[u64],
    cap: usize,
) -> Result<StateSpace, CmeError> {
    assert_eq!(bound.len(), network.num_species(), "one bound per species");
    let init: Vec<i64> = network
        .species()
        .iter()
        .map(|s| s.initial_count as i64)
        .collect();
    for (s, (&b, &x0)) in network
        .species()
        .iter()
        .zip(bound.iter().zip(network.initial_counts().iter()))
    {
        if b < x0 {
            return Err(CmeError::BoundBelowInitial {
                species: s.name.clone(),
                bound: b,
                initial: x0,
            });
        }
    }

    let mut seen: HashMap<Vec<i64>, ()> = HashMap::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(init.clone(), ());
    queue.push_back(init.clone());
    while let Some(x) = queue.pop_front() {
        for r in network.reactions() {
            let mut next = x.clone();
            let mut ok = true;
            for (v, (&nu, &b)) in next.iter_mut().zip(r.stoichiometry.iter().zip(bound.iter())) {
                *v += nu;
                if *v < 0 || *v > b as i64 {
                    ok = false;
                    break;
                }
            }
            // firing requires the reactants to be present in the source state
            if ok && r.reactants.iter().all(|&(s, a)| x[s] >= a as i64) && !seen.contains_key(&next)
            {
                if seen.len() >= cap {
                    return Err(CmeError::TooManyStates { cap });
                }
                seen.insert(next.clone(), ());
                queue.push_back(next);
            }
        }
    }

    let mut states: Vec<Vec<i64>> = seen.into_keys().collect();
    states.sort_unstable();
    let index: HashMap<Vec<i64>, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let initial = index[&init];
    Ok(StateSpace {
        states,
        index,
        initial,
    })
}

/// Sparse transition rate matrix in column-major form, plus truncation
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct Generator {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    rates: Vec<f64>,
    diag: Vec<f64>,
    /// Per-column rate of transitions whose target lies outside the box.
    truncation_outflow: Vec<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `L = max_j |a_jj|`, the uniformization rate.
    pub fn uniformization_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn truncation_outflow(&self) -> &[f64] {
        &self.truncation_outflow
    }

    /// Column sum `sum_i a_ij`; equals minus the truncation outflow of
    /// column j, and zero where no transition leaves the box.
    pub fn column_sum(&self, j: usize) -> f64 {
        let mut s = self.diag[j];
        for k in self.col_ptr[j]..self.col_ptr[j + 1] {
            s += self.rates[k];
        }
        s
    }

    /// `out = A v` (column-oriented scatter).
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        out.fill(0.0);
        for j in 0..self.n {
            let vj = v[j];
            out[j] += self.diag[j] * vj;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.row_idx[k]] += self.rates[k] * vj;
            }
        }
    }
}

/// Assembles the truncated generator for the network at a parameter
/// point.
pub fn build_generator(
    space: &StateSpace,
    network: &ReactionNetwork,
    point: &ParameterPoint,
) -> Result<Generator, CmeError> {
    let n = space.len();
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::new();
    let mut rates = Vec::new();
    let mut diag = vec![0.0; n];
    let mut truncation_outflow = vec![0.0; n];
    col_ptr.push(0);
    for (j, x) in space.states().iter().enumerate() {
        let alphas = propensity_eval(network, x, point)?;
        for (r, &alpha) in network.reactions().iter().zip(&alphas) {
            if alpha == 0.0 {
                continue;
            }
            diag[j] -= alpha;
            let target: Vec<i64> = x
                .iter()
                .zip(&r.stoichiometry)
                .map(|(&v, &nu)| v + nu)
                .collect();
            match space.index_of(&target) {
                Some(i) => {
                    row_idx.push(i);
                    rates.push(alpha);
                }
                None => truncation_outflow[j] += alpha,
            }
        }
        col_ptr.push(row_idx.len());
    }
    Ok(Generator {
        n,
        col_ptr,
        row_idx,
        rates,
        diag,
        truncation_outflow,
    })
}

/// Distribution after evolving for `t` seconds, with the probability mass
/// lost to truncation (`1 - sum p`).
#[derive(Debug, Clone)]
pub struct Evolved {
    pub p: Vec<f64>,
    pub residual_mass: f64,
}

/// Poisson(lt) weights from the mode outward, normalized to sum to one.
/// Returns (first retained m, weights).
fn poisson_weights(lt: f64) -> (usize, Vec<f64>) {
    debug_assert!(lt > 0.0);
    let mode = lt.floor() as usize;
    // unnormalized weights relative to the mode; recurrence w_{m+1}/w_m = lt/(m+1)
    let mut below = Vec::new(); // m = mode-1, mode-2, ...
    let mut w = 1.0;
    let mut m = mode;
    while m > 0 {
        w *= m as f64 / lt;
        if w < POISSON_CUTOFF {
            break;
        }
        below.push(w);
        m -= 1;
    }
    let start = mode - below.len();
    let mut weights: Vec<f64> = below.into_iter().rev().collect();
    weights.push(1.0);
    let mut wa = 1.0;
    let mut ma = mode;
    loop {
        wa *= lt / (ma + 1) as f64;
        if wa < POISSON_CUTOFF {
            break;
        }
        weights.push(wa);
        ma += 1;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (start, weights)
}

/// `p(t) = exp(tA) p0` by uniformization. Preserves non-negativity and
/// never increases total mass.
pub fn evolve(p0: &[f64], gen: &Generator, t: f64) -> Result<Evolved, CmeError> {
    if t < 0.0 || !t.is_finite() {
        return Err(CmeError::NegativeTime(t));
    }
    if p0.len() != gen.dim() {
        return Err(CmeError::LengthMismatch {
            got: p0.len(),
            expected: gen.dim(),
        });
    }
    let rate = gen.uniformization_rate();
    let lt = rate * t;
    if lt == 0.0 {
        let sum: f64 = p0.iter().sum();
        return Ok(Evolved {
            p: p0.to_vec(),
            residual_mass: 1.0 - sum,
        });
    }

    // P = I + A/L with entrywise non-negative storage, so repeated
    // application cannot produce negative probabilities.
    let n = gen.dim();
    let pdiag: Vec<f64> = gen.diag.iter().map(|d| (1.0 + d / rate).max(0.0)).collect();
    let scaled: Vec<f64> = gen.rates.iter().map(|a| a / rate).collect();
    let apply_p = |v: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        for j in 0..n {
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            out[j] += pdiag[j] * vj;
            for k in gen.col_ptr[j]..gen.col_ptr[j + 1] {
                out[gen.row_idx[k]] += scaled[k] * vj;
            }
        }
    };

    let (start, weights) = poisson_weights(lt);
    let mut v = p0.to_vec();
    let mut next = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for _ in 0..start {
        apply_p(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    for w in weights {
        for (a, &vi) in acc.iter_mut().zip(&v) {
            *a += w * vi;
        }
        apply_p(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    let sum: f64 = acc.iter().sum();
    Ok(Evolved {
        p: acc,
        residual_mass: 1.0 - sum,
    })
}

/// Mean vector and covariance matrix of a distribution over the space.
/// Logs a warning when the total mass deviates from one by more than
/// 1e-6 (moments are then biased by the missing mass).
pub fn moments_from_distribution(p: &[f64], space: &StateSpace) -> MomentState {
    assert_eq!(p.len(), space.len(), "one probability per state");
    let dim = space.states().first().map_or(0, Vec::len);
    let mass: f64 = p.iter().sum();
    if (mass - 1.0).abs() > 1e-6 {
        log::warn!(
            "distribution mass {mass} deviates from 1 by {:.3e}; moments are biased",
            (mass - 1.0).abs()
        );
    }
    let mut mu = vec![0.0; dim];
    for (x, &pj) in space.states().iter().zip(p) {
        for (m, &xi) in mu.iter_mut().zip(x) {
            *m += xi as f64 * pj;
        }
    }
    let mut sigma = SymMatrix::zeros(dim);
    for (x, &pj) in space.states().iter().zip(p) {
        for i in 0..dim {
            let di = x[i] as f64 - mu[i];
            for j in i..dim {
                let dj = x[j] as f64 - mu[j];
                sigma.add(i, j, di * dj * pj);
            }
        }
    }
    MomentState { mu, sigma }
}

/// Exact (truncated-CME) moment trajectory on an output grid.
#[derive(Debug, Clone)]
pub struct OracleMoments {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
    /// Probability mass lost to truncation by the final grid time.
    pub residual_mass: f64,
    /// Number of enumerated states.
    pub num_states: usize,
}

/// Evolves the truncated master equation from a point mass at the
/// initial counts (placed at `grid[0]`) and extracts moments at every
/// grid time.
pub fn oracle_moments(
    network: &ReactionNetwork,
    point: &ParameterPoint,
    grid: &[f64],
    bound: &[u64],
) -> Result<OracleMoments, CmeError> {
    assert!(!grid.is_empty(), "output grid must not be empty");
    let space = enumerate_states(network, bound)?;
    let gen = build_generator(&space, network, point)?;
    let mut p = space.initial_distribution();
    let mut states = Vec::with_capacity(grid.len());
    states.push(moments_from_distribution(&p, &space));
    let mut residual = 0.0;
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        if dt < 0.0 {
            return Err(CmeError::NegativeTime(dt));
        }
        let evolved = evolve(&p, &gen, dt)?;
        p = evolved.p;
        residual = evolved.residual_mass;
        states.push(moments_from_distribution(&p, &space));
    }
    Ok(OracleMoments {
        times: grid.to_vec(),
        states,
        residual_mass: residual,
        num_states: space.len(),
    })
}

/// Default per-species truncation bound: eight times the total initial
/// molecule count (at least 8 for empty initial conditions). Generous for
/// contracting systems while keeping benchmark spaces small.
pub fn default_bound(network: &ReactionNetwork) -> Vec<u64> {
    let total: u64 = network.initial_counts().iter().sum();
    vec![(8 * total).max(8); network.num_species()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use approx::assert_relative_eq;

    const BIRTHDEATH: &str = include_str!("../../../models/birthdeath.model");
    const DIMERIZATION: &str = include_str!("../../../models/dimerization.model");

    fn pure_death(x0: u64) -> ReactionNetwork {
        parse_model(&format!(
            "species X init={x0}\nparam c = 1.0\nreaction d: X -> 0 @ c\n"
        ))
        .unwrap()
    }

    #[test]
    fn birthdeath_space_is_the_full_interval() {
        let net = parse_model(BIRTHDEATH).unwrap();
        assert_eq!(default_bound(&net), vec![400]);
        let space = enumerate_states(&net, &[400]).unwrap();
        assert_eq!(space.len(), 401);
        for (i, s) in space.states().iter().enumerate() {
            assert_eq!(s, &vec![i as i64]);
        }
        assert_eq!(space.initial_index(), 50);
    }

    #[test]
    fn dimerization_space_has_parity_structure() {
        // every firing changes X by 2, so only odd monomer counts occur;
        // conservation X + 2Y = 301 fixes Y given X
        let net = parse_model(DIMERIZATION).unwrap();
        let space = enumerate_states(&net, &default_bound(&net)).unwrap();
        assert_eq!(space.len(), 151);
        assert_eq!(space.states()[0], vec![1, 150]);
        assert_eq!(space.states()[150], vec![301, 0]);
        for s in space.states() {
            assert_eq!(s[0] % 2, 1);
            assert_eq!(s[0] + 2 * s[1], 301);
        }
    }

    #[test]
    fn bound_below_initial_is_rejected() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let err = enumerate_states(&net, &[49]).unwrap_err();
        assert!(matches!(err, CmeError::BoundBelowInitial { bound: 49, initial: 50, .. }));
    }

    #[test]
    fn state_cap_is_enforced() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let err = enumerate_states_capped(&net, &[400], 100).unwrap_err();
        assert!(matches!(err, CmeError::TooManyStates { cap: 100 }));
    }

    #[test]
    fn generator_columns_balance() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let space = enumerate_states(&net, &[400]).unwrap();
        let gen = build_generator(&space, &net, &net.nominal_point()).unwrap();
        // state 0 is absorbing for this model: nothing fires at zero copies
        assert_eq!(gen.diagonal()[0], 0.0);
        for j in 0..space.len() {
            let x = space.states()[j][0] as f64;
            assert_relative_eq!(gen.diagonal()[j], -(0.10 + 1.0) * x, max_relative = 1e-12);
            if j < space.len() - 1 {
                // interior column: probability is conserved
                assert!(gen.column_sum(j).abs() < 1e-12 * (1.0 + x));
                assert_eq!(gen.truncation_outflow()[j], 0.0);
            } else {
                // birth out of the top state leaves the box
                assert_relative_eq!(gen.column_sum(j), -0.10 * 400.0, max_relative = 1e-12);
                assert_relative_eq!(gen.truncation_outflow()[j], 0.10 * 400.0, max_relative = 1e-12);
            }
        }
        assert_relative_eq!(gen.uniformization_rate(), 1.1 * 400.0, max_relative = 1e-12);
    }

    #[test]
    fn evolve_at_zero_time_is_identity() {
        let net = pure_death(3);
        let space = enumerate_states(&net, &[3]).unwrap();
        let gen = build_generator(&space, &net, &net.nominal_point()).unwrap();
        let p0 = space.initial_distribution();
        let out = evolve(&p0, &gen, 0.0).unwrap();
        assert_eq!(out.p, p0);
        assert_eq!(out.residual_mass, 0.0);
        assert!(matches!(evolve(&p0, &gen, -1.0), Err(CmeError::NegativeTime(_))));
    }

    #[test]
    fn single_molecule_decay_matches_closed_form() {
        let net = pure_death(1);
        let space = enumerate_states(&net, &[1]).unwrap();
        let gen = build_generator(&space, &net, &net.nominal_point()).unwrap();
        let out = evolve(&space.initial_distribution(), &gen, 1.0).unwrap();
        // states sorted: [0], [1]
        assert_relative_eq!(out.p[0], 1.0 - (-1.0f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(out.p[1], (-1.0f64).exp(), epsilon = 1e-13);
        assert!(out.residual_mass.abs() < 1e-12);
    }

    #[test]
    fn death_process_stays_binomial() {
        // every molecule survives to time t independently with
        // probability e^{-t}, so the count is Binomial(x0, e^{-t})
        let x0 = 50usize;
        let net = pure_death(x0 as u64);
        let space = enumerate_states(&net, &[x0 as u64]).unwrap();
        let gen = build_generator(&space, &net, &net.nominal_point()).unwrap();
        let t = 0.7f64;
        let out = evolve(&space.initial_distribution(), &gen, t).unwrap();
        let p_surv = (-t).exp();
        let mut choose = 1.0f64;
        for k in 0..=x0 {
            if k > 0 {
                choose = choose * (x0 - k + 1) as f64 / k as f64;
            }
            let pmf = choose * p_surv.powi(k as i32) * (1.0 - p_surv).powi((x0 - k) as i32);
            assert_relative_eq!(out.p[k], pmf, epsilon = 1e-10);
        }
        let m = moments_from_distribution(&out.p, &space);
        assert_relative_eq!(m.mu[0], x0 as f64 * p_surv, max_relative = 1e-10);
        assert_relative_eq!(
            m.sigma.get(0, 0),
            x0 as f64 * p_surv * (1.0 - p_surv),
            max_relative = 1e-9
        );
    }

    #[test]
    fn evolve_satisfies_semigroup_property() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let space = enumerate_states(&net, &[400]).unwrap();
        let gen = build_generator(&space, &net, &net.nominal_point()).unwrap();
        let p0 = space.initial_distribution();
        let one_shot = evolve(&p0, &gen, 5.0).unwrap();
        let first = evolve(&p0, &gen, 2.0).unwrap();
        let two_step = evolve(&first.p, &gen, 3.0).unwrap();
        for (a, b) in one_shot.p.iter().zip(&two_step.p) {
            assert!((a - b).abs() < 1e-9, "semigroup violation: {a} vs {b}");
        }
    }

    #[test]
    fn mass_is_conserved_without_truncation_outflow() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let space = enumerate_states(&net, &[400]).unwrap();
        let gen = build_generator(&space, &net, &net.nominal_point()).unwrap();
        let out = evolve(&space.initial_distribution(), &gen, 10.0).unwrap();
        assert!(out.p.iter().all(|&v| v >= 0.0));
        // decaying population: reaching the bound from 50 is essentially
        // impossible, so mass loss is far below the 1e-10 budget
        assert!(out.residual_mass.abs() < 1e-10, "residual {}", out.residual_mass);
    }

    #[test]
    fn truncation_loss_is_reported_for_growing_populations() {
        let net = parse_model(
            "species X init=5\nparam b = 1.0\nparam d = 0.1\nreaction r1: X -> 2 X @ b\nreaction r2: X -> 0 @ d\n",
        )
        .unwrap();
        let space = enumerate_states(&net, &[10]).unwrap();
        let gen = build_generator(&space, &net, &net.nominal_point()).unwrap();
        let out = evolve(&space.initial_distribution(), &gen, 2.0).unwrap();
        assert!(out.residual_mass > 0.05, "expected visible mass loss, got {}", out.residual_mass);
        assert!(out.p.iter().all(|&v| v >= 0.0));
        let sum: f64 = out.p.iter().sum();
        assert_relative_eq!(sum, 1.0 - out.residual_mass, epsilon = 1e-12);
    }

    #[test]
    fn handcrafted_moments_match_definitions() {
        let net = pure_death(1);
        let space = enumerate_states(&net, &[1]).unwrap();
        // point mass
        let m = moments_from_distribution(&[0.0, 1.0], &space);
        assert_eq!(m.mu[0], 1.0);
        assert_eq!(m.sigma.get(0, 0), 0.0);
        // fair coin over {0, 1}
        let m = moments_from_distribution(&[0.5, 0.5], &space);
        assert_relative_eq!(m.mu[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.sigma.get(0, 0), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn oracle_matches_birthdeath_closed_form() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let grid = [0.0, 1.0, 10.0];
        let oracle = oracle_moments(&net, &net.nominal_point(), &grid, &[400]).unwrap();
        assert_eq!(oracle.num_states, 401);
        assert!(oracle.residual_mass.abs() < 1e-10);
        for (t, st) in oracle.times.iter().zip(&oracle.states) {
            let d = 0.10 - 1.0;
            let mu = 50.0 * (d * t).exp();
            let sigma = 50.0 * 1.1 / d * ((2.0 * d * t).exp() - (d * t).exp());
            assert_relative_eq!(st.mu[0], mu, max_relative = 1e-8, epsilon = 1e-9);
            assert_relative_eq!(st.sigma.get(0, 0), sigma, max_relative = 1e-8, epsilon = 1e-9);
        }
    }
}
