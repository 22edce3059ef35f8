//! Variance-based global sensitivity over a box of parameter values:
//! pick-and-freeze sampling and two Monte Carlo estimators of first-order
//! and total Sobol' indices, resolved per output and per time point.
//!
//! Estimator definitions, with `rho` the empirical Pearson correlation
//! and `V` the population variance of the pooled A and B outputs:
//!
//! * martinez:  `S_i  = rho(y_B, y_AB(i))`,
//!              `S_Ti = 1 - rho(y_A, y_AB(i))`
//! * jansen:    `S_Ti = sum (y_A - y_AB(i))^2 / (2 n V)`,
//!              `S_i  = 1 - sum (y_B - y_AB(i))^2 / (2 n V)`
//!
//! Indices are undefined where the output variance vanishes (notably at
//! t = 0, where every trajectory starts from the same deterministic
//! state); such entries are reported as missing, never as zero.
//!
//! Every sampled row is derived from (seed, row index) alone, and the
//! estimation pass is a sequential reduction, so reports are bit-identical
//! no matter how many worker threads evaluate the design.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::model::{ParameterPoint, ReactionNetwork};
use crate::moments::build_moment_system;

/// Fraction of failed design rows above which evaluation aborts.
const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum SobolError {
    #[error("parameter '{0}' has no bounds; add 'bounds=<lo>,<hi>' to its model declaration")]
    MissingBounds(String),
    #[error("parameter box is degenerate: bound {index} has lower {lower} >= upper {upper}")]
    DegenerateBox {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("pick-and-freeze designs need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error(
        "{failed} of {total} design evaluations failed (limit 1%); first failure on row {first_row}: {first_error}"
    )]
    TooManyFailures {
        failed: usize,
        total: usize,
        first_row: usize,
        first_error: String,
    },
}

/// Axis-aligned box of parameter values with independent uniform
/// marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(names: Vec<String>, bounds: Vec<(f64, f64)>) -> Result<Self, SobolError> {
        assert_eq!(names.len(), bounds.len());
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(SobolError::DegenerateBox {
                    index: i,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(ParameterBox {
            names,
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
        })
    }

    /// Box spanned by the `bounds=` declarations of every parameter.
    pub fn from_network(network: &ReactionNetwork) -> Result<Self, SobolError> {
        let mut names = Vec::new();
        let mut bounds = Vec::new();
        for p in network.parameters() {
            let b = p
                .bounds
                .ok_or_else(|| SobolError::MissingBounds(p.name.clone()))?;
            names.push(p.name.clone());
            bounds.push(b);
        }
        ParameterBox::new(names, bounds)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Paired sample matrices for Sobol' index estimation. The hybrid
/// matrices AB(i) (A with column i replaced from B) are materialized on
/// demand by [`ab_row`](Self::ab_row).
#[derive(Debug, Clone)]
pub struct PickFreezeDesign {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// `a[row]` and `b[row]` are points in the box, length k.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

impl PickFreezeDesign {
    /// Row `r` of AB(i): row r of A with coordinate i taken from B.
    pub fn ab_row(&self, i: usize, r: usize) -> Vec<f64> {
        let mut row = self.a[r].clone();
        row[i] = self.b[r][i];
        row
    }
}

/// Fills A and B with uniform draws from the box. Each row's coordinates
/// come from a generator stream selected by the row index, so any row can
/// be regenerated independently and the design does not depend on
/// evaluation order.
pub fn sample_design(
    pbox: &ParameterBox,
    n: usize,
    seed: u64,
) -> Result<PickFreezeDesign, SobolError> {
    if n < 2 {
        return Err(SobolError::TooFewSamples(n));
    }
    let k = pbox.dim();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for row in 0..n {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        let mut draw = |_: usize| -> Vec<f64> {
            (0..k)
                .map(|j| pbox.lower[j] + (pbox.upper[j] - pbox.lower[j]) * rng.random::<f64>())
                .collect()
        };
        a.push(draw(0));
        b.push(draw(1));
    }
    Ok(PickFreezeDesign {
        n,
        k,
        seed,
        a,
        b,
        names: pbox.names.clone(),
    })
}

/// Model outputs for every design row: `rows[r]` is the flattened
/// `[time][output]` vector, or missing where the evaluation failed.
#[derive(Debug, Clone)]
pub struct DesignEvaluation {
    pub times: Vec<f64>,
    pub outputs: Vec<String>,
    pub params: Vec<String>,
    pub n: usize,
    pub seed: u64,
    pub a_rows: Vec<Option<Vec<f64>>>,
    pub b_rows: Vec<Option<Vec<f64>>>,
    /// `ab_rows[i][r]` for hybrid matrix AB(i).
    pub ab_rows: Vec<Vec<Option<Vec<f64>>>>,
    pub failed_rows: usize,
}

impl DesignEvaluation {
    fn value(row: &Option<Vec<f64>>, ti: usize, o: usize, n_out: usize) -> Option<f64> {
        row.as_ref().map(|v| v[ti * n_out + o])
    }
}

/// Evaluates an arbitrary vector-valued function on every design row.
/// `f` receives a parameter point and returns the flattened
/// `[time][output]` vector, or an error message marking the row failed.
/// Rows are evaluated in parallel; results are ordered by row index.
pub fn evaluate_design_with<F>(
    design: &PickFreezeDesign,
    times: Vec<f64>,
    outputs: Vec<String>,
    f: F,
) -> Result<DesignEvaluation, SobolError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, String> + Sync,
{
    let expected = times.len() * outputs.len();
    let eval_rows = |points: Vec<Vec<f64>>| -> Vec<Result<Vec<f64>, String>> {
        points
            .par_iter()
            .map(|p| {
                let out = f(p);
                if let Ok(v) = &out {
                    debug_assert_eq!(v.len(), expected);
                }
                out
            })
            .collect()
    };
    let a_full = eval_rows(design.a.clone());
    let b_full = eval_rows(design.b.clone());
    let ab_full: Vec<Vec<Result<Vec<f64>, String>>> = (0..design.k)
        .map(|i| eval_rows((0..design.n).map(|r| design.ab_row(i, r)).collect()))
        .collect();

    let mut failed = 0;
    let mut first: Option<(usize, String)> = None;
    let mut strip = |rows: Vec<Result<Vec<f64>, String>>| -> Vec<Option<Vec<f64>>> {
        rows.into_iter()
            .enumerate()
            .map(|(r, row)| match row {
                Ok(v) => Some(v),
                Err(msg) => {
                    failed += 1;
                    if first.is_none() {
                        first = Some((r, msg));
                    }
                    None
                }
            })
            .collect()
    };
    let a_rows = strip(a_full);
    let b_rows = strip(b_full);
    let ab_rows: Vec<Vec<Option<Vec<f64>>>> = ab_full.into_iter().map(&mut strip).collect();
    let total = design.n * (design.k + 2);
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        let (first_row, first_error) = first.unwrap_or((0, "unknown".to_string()));
        return Err(SobolError::TooManyFailures {
            failed,
            total,
            first_row,
            first_error,
        });
    }
    Ok(DesignEvaluation {
        times,
        outputs,
        params: design.names.clone(),
        n: design.n,
        seed: design.seed,
        a_rows,
        b_rows,
        ab_rows,
        failed_rows: failed,
    })
}

/// Options for moment-model design evaluation.
#[derive(Debug, Clone)]
pub struct EvalOptions<'a> {
    pub grid: &'a [f64],
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub diagonal_covariance: bool,
    /// Packed output components to retain (see
    /// [`MomentSystem::mean_index`] / [`MomentSystem::cov_index`]);
    /// `None` keeps all of them.
    pub selection: Option<&'a [usize]>,
}

/// Integrates the closed moment system for every design row and collects
/// the selected output components at every grid time.
pub fn evaluate_design(
    design: &PickFreezeDesign,
    network: &ReactionNetwork,
    opts: &EvalOptions,
) -> Result<DesignEvaluation, SobolError> {
    let system = build_moment_system(network, opts.diagonal_covariance);
    let labels = system.output_labels();
    let selection: Vec<usize> = match opts.selection {
        Some(sel) => sel.to_vec(),
        None => (0..system.dim()).collect(),
    };
    let outputs: Vec<String> = selection.iter().map(|&i| labels[i].clone()).collect();
    let y0 = system.initial_packed();
    let grid = opts.grid;
    let f = |theta: &[f64]| -> Result<Vec<f64>, String> {
        ParameterPoint::new(theta.to_vec()).map_err(|e| e.to_string())?;
        let raw = crate::integrate::integrate(
            |_t, y, dy| system.rhs(theta, y, dy),
            &y0,
            grid,
            opts.rel_tol,
            opts.abs_tol,
        )
        .map_err(|e| e.to_string())?;
        let mut flat = Vec::with_capacity(grid.len() * selection.len());
        for state in &raw.states {
            for &o in &selection {
                flat.push(state[o]);
            }
        }
        Ok(flat)
    };
    evaluate_design_with(design, grid.to_vec(), outputs, f)
}

/// Time-resolved first-order and total Sobol' indices. Missing entries
/// mark times where the estimator is undefined (zero output variance or
/// fewer than two valid sample pairs).
#[derive(Debug, Clone)]
pub struct SobolReport {
    pub times: Vec<f64>,
    pub outputs: Vec<String>,
    pub params: Vec<String>,
    pub estimator: &'static str,
    pub n: usize,
    pub seed: u64,
    pub failed_rows: usize,
    /// `first[output][param][time]`
    pub first: Vec<Vec<Vec<Option<f64>>>>,
    /// `total[output][param][time]`
    pub total: Vec<Vec<Vec<Option<f64>>>>,
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let m = pairs.len();
    if m < 2 {
        return None;
    }
    let mf = m as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / mf;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / mf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for &(x, y) in pairs {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let sd_x = (sxx / mf).sqrt();
    let sd_y = (syy / mf).sqrt();
    if degenerate_spread(sd_x, mean_x) || degenerate_spread(sd_y, mean_y) {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Constant data does not produce an exactly zero sum of squares: rounding
/// in the mean leaves a spread of a few ulps, and a naive `== 0.0` test
/// would then report a perfect correlation. Anything this far below the
/// data magnitude is indistinguishable from rounding noise.
fn degenerate_spread(sd: f64, mean: f64) -> bool {
    sd <= 1e-12 * mean.abs() + f64::MIN_POSITIVE
}

fn index_grid<T, F>(eval: &DesignEvaluation, per_cell: F) -> Vec<Vec<Vec<T>>>
where
    F: Fn(usize, usize, usize) -> T,
{
    let n_out = eval.outputs.len();
    let k = eval.params.len();
    (0..n_out)
        .map(|o| {
            (0..k)
                .map(|i| (0..eval.times.len()).map(|ti| per_cell(o, i, ti)).collect())
                .collect()
        })
        .collect()
}

/// Correlation-based estimator.
pub fn martinez_indices(eval: &DesignEvaluation) -> SobolReport {
    let n_out = eval.outputs.len();
    let collect_pairs = |xs: &[Option<Vec<f64>>], ys: &[Option<Vec<f64>>], ti: usize, o: usize| {
        xs.iter()
            .zip(ys)
            .filter_map(|(x, y)| {
                Some((
                    DesignEvaluation::value(x, ti, o, n_out)?,
                    DesignEvaluation::value(y, ti, o, n_out)?,
                ))
            })
            .collect::<Vec<_>>()
    };
    let first = index_grid(eval, |o, i, ti| {
        pearson(&collect_pairs(&eval.b_rows, &eval.ab_rows[i], ti, o))
    });
    let total = index_grid(eval, |o, i, ti| {
        pearson(&collect_pairs(&eval.a_rows, &eval.ab_rows[i], ti, o)).map(|rho| 1.0 - rho)
    });
    SobolReport {
        times: eval.times.clone(),
        outputs: eval.outputs.clone(),
        params: eval.params.clone(),
        estimator: "martinez",
        n: eval.n,
        seed: eval.seed,
        failed_rows: eval.failed_rows,
        first,
        total,
    }
}

/// Squared-difference estimator normalized by the pooled variance of the
/// A and B outputs.
pub fn jansen_indices(eval: &DesignEvaluation) -> SobolReport {
    let n_out = eval.outputs.len();
    // population variance of all available A and B outputs at (ti, o)
    let pooled_variance = |ti: usize, o: usize| -> Option<f64> {
        let vals: Vec<f64> = eval
            .a_rows
            .iter()
            .chain(&eval.b_rows)
            .filter_map(|r| DesignEvaluation::value(r, ti, o, n_out))
            .collect();
        if vals.len() < 2 {
            return None;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        if degenerate_spread(var.sqrt(), mean) {
            None
        } else {
            Some(var)
        }
    };
    let half_mean_square =
        |xs: &[Option<Vec<f64>>], ys: &[Option<Vec<f64>>], ti: usize, o: usize| -> Option<f64> {
            let diffs: Vec<f64> = xs
                .iter()
                .zip(ys)
                .filter_map(|(x, y)| {
                    Some(
                        DesignEvaluation::value(x, ti, o, n_out)?
                            - DesignEvaluation::value(y, ti, o, n_out)?,
                    )
                })
                .collect();
            if diffs.is_empty() {
                return None;
            }
            Some(diffs.iter().map(|d| d * d).sum::<f64>() / (2.0 * diffs.len() as f64))
        };
    let first = index_grid(eval, |o, i, ti| {
        let v = pooled_variance(ti, o)?;
        Some(1.0 - half_mean_square(&eval.b_rows, &eval.ab_rows[i], ti, o)? / v)
    });
    let total = index_grid(eval, |o, i, ti| {
        let v = pooled_variance(ti, o)?;
        Some(half_mean_square(&eval.a_rows, &eval.ab_rows[i], ti, o)? / v)
    });
    SobolReport {
        times: eval.times.clone(),
        outputs: eval.outputs.clone(),
        params: eval.params.clone(),
        estimator: "jansen",
        n: eval.n,
        seed: eval.seed,
        failed_rows: eval.failed_rows,
        first,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    const BIRTHDEATH: &str = include_str!("../../../models/birthdeath.model");

    fn unit_box(k: usize) -> ParameterBox {
        ParameterBox::new(
            (0..k).map(|i| format!("x{i}")).collect(),
            vec![(0.0, 1.0); k],
        )
        .unwrap()
    }

    fn scalar_eval(
        design: &PickFreezeDesign,
        f: impl Fn(&[f64]) -> f64 + Sync,
    ) -> DesignEvaluation {
        evaluate_design_with(design, vec![0.0], vec!["f".to_string()], |p| {
            Ok(vec![f(p)])
        })
        .unwrap()
    }

    #[test]
    fn box_construction_validates() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let b = ParameterBox::from_network(&net).unwrap();
        assert_eq!(b.dim(), 2);
        assert!(b.contains(&[0.05, 2.0]));
        assert!(!b.contains(&[0.04, 2.0]));
        let no_bounds = parse_model("species X init=1\nparam c = 0.5\nreaction r: X -> 0 @ c\n").unwrap();
        assert!(matches!(
            ParameterBox::from_network(&no_bounds),
            Err(SobolError::MissingBounds(name)) if name == "c"
        ));
        assert!(matches!(
            ParameterBox::new(vec!["a".into()], vec![(1.0, 1.0)]),
            Err(SobolError::DegenerateBox { .. })
        ));
    }

    #[test]
    fn design_entries_stay_in_box_and_are_deterministic() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let pbox = ParameterBox::from_network(&net).unwrap();
        let d1 = sample_design(&pbox, 4, 42).unwrap();
        let d2 = sample_design(&pbox, 4, 42).unwrap();
        assert_eq!(d1.a, d2.a);
        assert_eq!(d1.b, d2.b);
        for r in 0..4 {
            assert!(pbox.contains(&d1.a[r]));
            assert!(pbox.contains(&d1.b[r]));
            // hybrid row substitutes exactly one coordinate, bitwise
            let h = d1.ab_row(0, r);
            assert_eq!(h[0].to_bits(), d1.b[r][0].to_bits());
            assert_eq!(h[1].to_bits(), d1.a[r][1].to_bits());
        }
        let d3 = sample_design(&pbox, 4, 43).unwrap();
        assert_ne!(d1.a, d3.a);
        assert!(matches!(sample_design(&pbox, 1, 42), Err(SobolError::TooFewSamples(1))));
    }

    #[test]
    fn design_rows_do_not_depend_on_n() {
        // row r is a pure function of (seed, r): growing the design keeps
        // earlier rows unchanged
        let pbox = unit_box(3);
        let small = sample_design(&pbox, 10, 7).unwrap();
        let large = sample_design(&pbox, 50, 7).unwrap();
        assert_eq!(small.a, large.a[..10].to_vec());
        assert_eq!(small.b, large.b[..10].to_vec());
    }

    #[test]
    fn single_variable_function_gives_exact_corner_indices() {
        let pbox = unit_box(2);
        let design = sample_design(&pbox, 2000, 3).unwrap();
        let eval = scalar_eval(&design, |p| 2.0 * p[0] + 1.0);
        for report in [martinez_indices(&eval), jansen_indices(&eval)] {
            let s = &report.first;
            let st = &report.total;
            assert!((s[0][0][0].unwrap() - 1.0).abs() < 1e-12, "{report:?}");
            assert!(st[0][1][0].unwrap().abs() < 1e-12);
            assert!(s[0][1][0].unwrap().abs() < 0.05);
            assert!((st[0][0][0].unwrap() - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn additive_function_recovers_analytic_variance_shares() {
        // f = X1 + X2 with X1 ~ U(0,1), X2 ~ U(0,3): shares 0.1 and 0.9
        let pbox = ParameterBox::new(
            vec!["x1".into(), "x2".into()],
            vec![(0.0, 1.0), (0.0, 3.0)],
        )
        .unwrap();
        let design = sample_design(&pbox, 8000, 11).unwrap();
        let eval = scalar_eval(&design, |p| p[0] + p[1]);
        for report in [martinez_indices(&eval), jansen_indices(&eval)] {
            assert!((report.first[0][0][0].unwrap() - 0.1).abs() < 0.04, "{}", report.estimator);
            assert!((report.first[0][1][0].unwrap() - 0.9).abs() < 0.04, "{}", report.estimator);
            assert!((report.total[0][0][0].unwrap() - 0.1).abs() < 0.04, "{}", report.estimator);
            assert!((report.total[0][1][0].unwrap() - 0.9).abs() < 0.04, "{}", report.estimator);
        }
    }

    #[test]
    fn zero_variance_is_flagged_missing() {
        let pbox = unit_box(2);
        let design = sample_design(&pbox, 50, 1).unwrap();
        let eval = scalar_eval(&design, |_| 4.2);
        for report in [martinez_indices(&eval), jansen_indices(&eval)] {
            for i in 0..2 {
                assert_eq!(report.first[0][i][0], None);
                assert_eq!(report.total[0][i][0], None);
            }
        }
    }

    #[test]
    fn failed_rows_are_excluded_but_tolerated_below_threshold() {
        let pbox = unit_box(2);
        let design = sample_design(&pbox, 400, 5).unwrap();
        // fail exactly one A row out of 1600 evaluations (0.0625%)
        let poison = design.a[7].clone();
        let eval = evaluate_design_with(&design, vec![0.0], vec!["f".into()], |p| {
            if p == poison.as_slice() {
                Err("deliberate failure".to_string())
            } else {
                Ok(vec![p[0] + p[1]])
            }
        })
        .unwrap();
        assert_eq!(eval.failed_rows, 1);
        let report = martinez_indices(&eval);
        assert!(report.first[0][0][0].is_some());
        assert_eq!(report.failed_rows, 1);
    }

    #[test]
    fn excess_failures_abort() {
        let pbox = unit_box(2);
        let design = sample_design(&pbox, 100, 5).unwrap();
        let err = evaluate_design_with(&design, vec![0.0], vec!["f".into()], |p| {
            if p[0] < 0.2 {
                Err("low first coordinate".to_string())
            } else {
                Ok(vec![p[0]])
            }
        })
        .unwrap_err();
        match err {
            SobolError::TooManyFailures { first_error, .. } => {
                assert_eq!(first_error, "low first coordinate")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn model_evaluation_matches_direct_simulation() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let pbox = ParameterBox::from_network(&net).unwrap();
        let design = sample_design(&pbox, 3, 9).unwrap();
        let grid = [0.0, 1.0, 10.0];
        let eval = evaluate_design(
            &design,
            &net,
            &EvalOptions {
                grid: &grid,
                rel_tol: 1e-8,
                abs_tol: 1e-10,
                diagonal_covariance: false,
                selection: Some(&[0]),
            },
        )
        .unwrap();
        assert_eq!(eval.outputs, vec!["mu_X"]);
        for r in 0..3 {
            let point = ParameterPoint::new(design.a[r].clone()).unwrap();
            let traj = crate::moments::simulate(&net, &point, &grid, 1e-8, 1e-10, false).unwrap();
            let row = eval.a_rows[r].as_ref().unwrap();
            for (ti, st) in traj.states.iter().enumerate() {
                assert_eq!(row[ti], st.mu[0]);
            }
        }
    }

    #[test]
    fn reports_are_identical_across_thread_counts() {
        let net = parse_model(BIRTHDEATH).unwrap();
        let pbox = ParameterBox::from_network(&net).unwrap();
        let design = sample_design(&pbox, 64, 21).unwrap();
        let grid = [0.0, 5.0, 10.0];
        let opts = EvalOptions {
            grid: &grid,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            diagonal_covariance: false,
            selection: Some(&[0, 1]),
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| evaluate_design(&design, &net, &opts).unwrap())
        };
        let serial = run(1);
        let parallel = run(4);
        assert_eq!(serial.a_rows, parallel.a_rows);
        assert_eq!(serial.b_rows, parallel.b_rows);
        assert_eq!(serial.ab_rows, parallel.ab_rows);
        let r1 = martinez_indices(&serial);
        let r2 = martinez_indices(&parallel);
        assert_eq!(r1.first, r2.first);
        assert_eq!(r1.total, r2.total);
    }
}
