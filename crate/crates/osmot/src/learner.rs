//! Ranking SVM over pairwise preference constraints.
//!
//! The optimization problem is
//!
//! ```text
//!     min   1/2 w.w + C sum_k xi_k
//!     s.t.  w . delta_k >= 1 - xi_k     for every preference k
//!           xi_k >= 0
//!           w_i >= 0.01                 for the 28 rank dimensions
//! ```
//!
//! where `delta_k` is the feature difference between the preferred and the
//! skipped document. The solver is dual coordinate descent: each margin
//! constraint gets a multiplier `alpha_k` in `[0, C]`, each lower bound a
//! multiplier `mu_i >= 0`, and `w = sum_k alpha_k delta_k + mu`. One-variable
//! subproblems have closed-form clipped solutions, so each update maximizes
//! the dual exactly; the dual objective never decreases. Iteration stops when
//! the largest projected-gradient violation falls below the tolerance.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::corpus::{DocId, WordId};
use crate::feedback::PreferenceSet;
use crate::retrieval::{Index, Model, NUM_RANK_FEATURES, RANK_THRESHOLDS};
use crate::seed::stream_rng;

/// Default lower bound on rank-feature weights.
pub const RANK_LOWER_BOUND: f64 = 0.01;

/// Fixed shuffle stream for the constraint order; training is deterministic
/// given the problem.
const SHUFFLE_SEED: u64 = 0x5eed_0517;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("solver did not converge: max KKT violation {violation:.3e} after {passes} passes")]
    NonConvergence {
        violation: f64,
        passes: usize,
        solution: Box<Solution>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Sparse vector with entries sorted by dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new(mut entries: Vec<(u32, f64)>) -> SparseVector {
        entries.sort_unstable_by_key(|&(d, _)| d);
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(d, v)| v * dense[d as usize])
            .sum()
    }

    pub fn add_scaled_into(&self, scale: f64, dense: &mut [f64]) {
        for &(d, v) in &self.entries {
            dense[d as usize] += scale * v;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }
}

/// The assembled quadratic program: difference vectors, the penalty C and the
/// lower-bounded prefix of dimensions.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub constraints: Vec<SparseVector>,
    pub dims: usize,
    /// Dimensions `0..bounded_dims` carry the lower bound.
    pub bounded_dims: usize,
    pub lower_bound: f64,
    pub c: f64,
    /// Term dimension `bounded_dims + i` corresponds to `term_dims[i]`.
    pub term_dims: Vec<(WordId, DocId)>,
    /// Preferences whose difference vector was identically zero.
    pub dropped: usize,
}

impl TrainingProblem {
    /// A bare problem for solver tests; no term bookkeeping.
    pub fn from_raw(
        constraints: Vec<SparseVector>,
        dims: usize,
        bounded_dims: usize,
        lower_bound: f64,
        c: f64,
    ) -> TrainingProblem {
        TrainingProblem {
            constraints,
            dims,
            bounded_dims,
            lower_bound,
            c,
            term_dims: Vec::new(),
            dropped: 0,
        }
    }
}

/// Caches base-ranking positions (top of the base order) per query, keyed by
/// the query's term set. Reused across training iterations.
#[derive(Default)]
pub struct BaseRankCache {
    map: HashMap<Vec<WordId>, HashMap<DocId, u32>>,
}

impl BaseRankCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// 1-based base positions of the top documents for this query.
    fn positions<'a>(
        &'a mut self,
        index: &Index,
        query: &crate::retrieval::Query,
    ) -> &'a HashMap<DocId, u32> {
        self.map.entry(query.terms().to_vec()).or_insert_with(|| {
            let top = RANK_THRESHOLDS[NUM_RANK_FEATURES - 1] as usize;
            index
                .rank_base(query, top)
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| (e.doc, i as u32 + 1))
                .collect()
        })
    }
}

/// Builds the difference-vector problem from mined preferences. Rank
/// dimensions are the fixed threshold grid; term dimensions are allocated on
/// first appearance.
pub fn build_training_problem(
    prefs: &PreferenceSet,
    index: &Index,
    c: f64,
    cache: &mut BaseRankCache,
) -> Result<TrainingProblem, LearnerError> {
    if !(c > 0.0) {
        return Err(LearnerError::InvalidParameter(format!(
            "C must be positive, got {c}"
        )));
    }
    let mut term_dim: HashMap<(WordId, DocId), u32> = HashMap::new();
    let mut term_dims: Vec<(WordId, DocId)> = Vec::new();
    let mut constraints = Vec::with_capacity(prefs.len());
    let mut dropped = 0usize;

    for pref in prefs.iter() {
        let positions = cache.positions(index, &pref.query);
        let rank_winner = positions.get(&pref.winner).copied();
        let rank_loser = positions.get(&pref.loser).copied();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for (i, &thr) in RANK_THRESHOLDS.iter().enumerate() {
            let a = rank_winner.is_some_and(|r| r <= thr);
            let b = rank_loser.is_some_and(|r| r <= thr);
            if a != b {
                entries.push((i as u32, if a { 1.0 } else { -1.0 }));
            }
        }
        for &t in pref.query.terms() {
            for (doc, value) in [(pref.winner, 1.0), (pref.loser, -1.0)] {
                let next = NUM_RANK_FEATURES as u32 + term_dim.len() as u32;
                let dim = *term_dim.entry((t, doc)).or_insert_with(|| {
                    term_dims.push((t, doc));
                    next
                });
                entries.push((dim, value));
            }
        }
        if entries.is_empty() {
            dropped += 1;
            continue;
        }
        constraints.push(SparseVector::new(entries));
    }

    Ok(TrainingProblem {
        constraints,
        dims: NUM_RANK_FEATURES + term_dims.len(),
        bounded_dims: NUM_RANK_FEATURES,
        lower_bound: RANK_LOWER_BOUND,
        c,
        term_dims,
        dropped,
    })
}

/// Raw solver output over a bare weight vector.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub max_kkt_violation: f64,
    pub passes: usize,
    pub converged: bool,
}

/// The trained model plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub model: Model,
    pub objective: f64,
    pub max_kkt_violation: f64,
    pub iterations_used: usize,
}

fn dual_objective(problem: &TrainingProblem, alpha: &[f64], mu: &[f64], w: &[f64]) -> f64 {
    let sum_alpha: f64 = alpha.iter().sum();
    let sum_mu: f64 = mu.iter().sum();
    let norm_sq: f64 = w.iter().map(|v| v * v).sum();
    sum_alpha + problem.lower_bound * sum_mu - 0.5 * norm_sq
}

/// Primal objective with implied slacks `xi = max(0, 1 - w.delta)`.
pub fn primal_objective(problem: &TrainingProblem, weights: &[f64]) -> f64 {
    let norm_sq: f64 = weights.iter().map(|v| v * v).sum();
    let hinge: f64 = problem
        .constraints
        .iter()
        .map(|d| (1.0 - d.dot(weights)).max(0.0))
        .sum();
    0.5 * norm_sq + problem.c * hinge
}

/// Dual coordinate descent with bound multipliers.
pub fn solve(problem: &TrainingProblem, tolerance: f64, max_passes: usize) -> RawSolution {
    assert!(tolerance > 0.0, "tolerance must be positive");
    let n = problem.constraints.len();
    let c = problem.c;
    let mut alpha = vec![0.0f64; n];
    let mut mu = vec![0.0f64; problem.bounded_dims];
    let mut w = vec![0.0f64; problem.dims];
    let sq_norms: Vec<f64> = problem.constraints.iter().map(|d| d.squared_norm()).collect();

    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut rng = stream_rng(SHUFFLE_SEED, 0);
    let mut passes = 0usize;
    let mut converged = false;
    let mut prev_dual = f64::NEG_INFINITY;

    while passes < max_passes {
        passes += 1;
        order.shuffle(&mut rng);
        let mut violation = 0.0f64;

        for &k in &order {
            let k = k as usize;
            let delta = &problem.constraints[k];
            let g = 1.0 - delta.dot(&w);
            let pg = if alpha[k] <= 0.0 {
                g.max(0.0)
            } else if alpha[k] >= c {
                (-g).max(0.0)
            } else {
                g.abs()
            };
            violation = violation.max(pg);
            if pg > 0.0 {
                let next = (alpha[k] + g / sq_norms[k]).clamp(0.0, c);
                let step = next - alpha[k];
                if step != 0.0 {
                    delta.add_scaled_into(step, &mut w);
                    alpha[k] = next;
                }
            }
        }

        for i in 0..problem.bounded_dims {
            let g = problem.lower_bound - w[i];
            let pg = if mu[i] <= 0.0 { g.max(0.0) } else { g.abs() };
            violation = violation.max(pg);
            let next = (mu[i] + g).max(0.0);
            let step = next - mu[i];
            if step != 0.0 {
                w[i] += step;
                mu[i] = next;
            }
        }

        let dual = dual_objective(problem, &alpha, &mu, &w);
        debug_assert!(
            dual >= prev_dual - 1e-8 * (1.0 + prev_dual.abs()),
            "dual objective decreased: {prev_dual} -> {dual}"
        );
        prev_dual = dual;

        if violation <= tolerance {
            converged = true;
            break;
        }
    }

    // Final stationary measure over the finished iterate.
    let mut final_violation = 0.0f64;
    for (k, delta) in problem.constraints.iter().enumerate() {
        let g = 1.0 - delta.dot(&w);
        let pg = if alpha[k] <= 0.0 {
            g.max(0.0)
        } else if alpha[k] >= c {
            (-g).max(0.0)
        } else {
            g.abs()
        };
        final_violation = final_violation.max(pg);
    }
    for i in 0..problem.bounded_dims {
        let g = problem.lower_bound - w[i];
        let pg = if mu[i] <= 0.0 { g.max(0.0) } else { g.abs() };
        final_violation = final_violation.max(pg);
    }

    let objective = primal_objective(problem, &w);
    RawSolution {
        weights: w,
        objective,
        max_kkt_violation: final_violation,
        passes,
        converged: converged || final_violation <= tolerance,
    }
}

fn model_from_weights(problem: &TrainingProblem, weights: &[f64]) -> Model {
    let mut rank_weights = [0.0f64; NUM_RANK_FEATURES];
    rank_weights.copy_from_slice(&weights[..NUM_RANK_FEATURES]);
    let terms: Vec<((WordId, DocId), f64)> = problem
        .term_dims
        .iter()
        .enumerate()
        .filter_map(|(i, &pair)| {
            let v = weights[NUM_RANK_FEATURES + i];
            (v != 0.0).then_some((pair, v))
        })
        .collect();
    Model::new(rank_weights, terms)
}

/// Trains the ranking model. Returns a non-convergence error (still carrying
/// the partial solution) when the pass budget is exhausted while the KKT
/// violation is more than ten times the tolerance.
pub fn train(
    problem: &TrainingProblem,
    tolerance: f64,
    max_passes: usize,
) -> Result<Solution, LearnerError> {
    assert_eq!(
        problem.bounded_dims, NUM_RANK_FEATURES,
        "model training expects the rank-feature dimension layout"
    );
    let raw = solve(problem, tolerance, max_passes);
    let solution = Solution {
        model: model_from_weights(problem, &raw.weights),
        objective: raw.objective,
        max_kkt_violation: raw.max_kkt_violation,
        iterations_used: raw.passes,
    };
    if !raw.converged && raw.max_kkt_violation > 10.0 * tolerance {
        return Err(LearnerError::NonConvergence {
            violation: raw.max_kkt_violation,
            passes: raw.passes,
            solution: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Margins treated as exactly at the hinge edge for the stationarity check.
const EDGE_EPS: f64 = 1e-9;
/// Bound considered active when within this distance of the weight.
const ACTIVE_EPS: f64 = 1e-9;

/// Recomputes the primal objective and the worst violated optimality or
/// bound condition for an arbitrary weight vector.
///
/// Stationarity uses the subgradient interval of the hinge sum: constraints
/// at the hinge edge may contribute any fraction of their gradient, so each
/// component is checked against the interval it can reach. The measure is
/// zero at any true optimum and positive feasibility violations are always
/// reported exactly.
pub fn objective_and_kkt_raw(problem: &TrainingProblem, weights: &[f64]) -> (f64, f64) {
    let objective = primal_objective(problem, weights);

    let mut lo: Vec<f64> = weights.to_vec();
    let mut hi: Vec<f64> = weights.to_vec();
    for delta in &problem.constraints {
        let margin = 1.0 - delta.dot(weights);
        if margin > EDGE_EPS {
            // Violated: full gradient contribution -C * delta.
            for &(d, v) in delta.entries() {
                lo[d as usize] -= problem.c * v;
                hi[d as usize] -= problem.c * v;
            }
        } else if margin >= -EDGE_EPS {
            // At the edge: contribution -s*C*delta with s in [0,1].
            for &(d, v) in delta.entries() {
                let contrib = -problem.c * v;
                lo[d as usize] += contrib.min(0.0);
                hi[d as usize] += contrib.max(0.0);
            }
        }
    }

    let mut violation = 0.0f64;
    for i in 0..problem.dims {
        if i < problem.bounded_dims {
            violation = violation.max(problem.lower_bound - weights[i]);
            if weights[i] <= problem.lower_bound + ACTIVE_EPS {
                // Active bound: some non-negative gradient must be reachable.
                violation = violation.max(-hi[i]);
                continue;
            }
        }
        // Free dimension: zero must lie inside the reachable interval.
        let dist = if lo[i] > 0.0 {
            lo[i]
        } else if hi[i] < 0.0 {
            -hi[i]
        } else {
            0.0
        };
        violation = violation.max(dist);
    }
    (objective, violation.max(0.0))
}

/// `objective_and_kkt_raw` for a trained model checked against the problem
/// that produced it. Model term weights unknown to the problem count toward
/// the norm and the violation.
pub fn objective_and_kkt(problem: &TrainingProblem, model: &Model) -> (f64, f64) {
    let mut weights = vec![0.0f64; problem.dims];
    weights[..NUM_RANK_FEATURES].copy_from_slice(model.rank_weights());
    let dim_of: HashMap<(WordId, DocId), usize> = problem
        .term_dims
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, NUM_RANK_FEATURES + i))
        .collect();
    let mut extra_norm_sq = 0.0;
    let mut extra_violation = 0.0f64;
    for &(pair, v) in model.term_entries() {
        match dim_of.get(&pair) {
            Some(&d) => weights[d] = v,
            None => {
                extra_norm_sq += v * v;
                extra_violation = extra_violation.max(v.abs());
            }
        }
    }
    let (objective, violation) = objective_and_kkt_raw(problem, &weights);
    (
        objective + 0.5 * extra_norm_sq,
        violation.max(extra_violation),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: u32) -> SparseVector {
        SparseVector::new(vec![(dim, 1.0)])
    }

    #[test]
    fn zero_constraints_return_bound_vector() {
        let problem = TrainingProblem::from_raw(vec![], NUM_RANK_FEATURES, NUM_RANK_FEATURES, 0.01, 0.1);
        let raw = solve(&problem, 1e-8, 50);
        assert!(raw.converged);
        for i in 0..NUM_RANK_FEATURES {
            assert_eq!(raw.weights[i], 0.01);
        }
        let expected = 0.5 * 28.0 * 0.01 * 0.01;
        assert!((raw.objective - expected).abs() < 1e-15);
    }

    #[test]
    fn single_unbounded_constraint_closed_form() {
        // min 1/2 w^2 + 0.1 * max(0, 1 - w): optimum at w = C = 0.1.
        let problem = TrainingProblem::from_raw(vec![unit(0)], 1, 0, 0.01, 0.1);
        let raw = solve(&problem, 1e-8, 100);
        assert!(raw.converged);
        assert!((raw.weights[0] - 0.1).abs() < 1e-9);
        assert!((raw.objective - 0.095).abs() < 1e-12);
    }

    #[test]
    fn strong_constraint_reaches_margin() {
        // With a large C the margin is met exactly: w = 1.
        let problem = TrainingProblem::from_raw(vec![unit(0)], 1, 0, 0.01, 10.0);
        let raw = solve(&problem, 1e-10, 500);
        assert!(raw.converged);
        assert!((raw.weights[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bound_constrained_dimension_stays_feasible() {
        // A constraint pushing a bounded dimension negative: the bound wins.
        let problem = TrainingProblem::from_raw(
            vec![SparseVector::new(vec![(0, -1.0), (1, 1.0)])],
            2,
            1,
            0.01,
            0.5,
        );
        let raw = solve(&problem, 1e-9, 500);
        assert!(raw.converged);
        assert!(raw.weights[0] >= 0.01 - 1e-9);
    }

    #[test]
    fn duplicated_constraints_equal_doubled_c() {
        let deltas = vec![
            SparseVector::new(vec![(0, 1.0), (2, -1.0)]),
            SparseVector::new(vec![(1, 1.0), (2, 1.0)]),
            SparseVector::new(vec![(0, -1.0), (1, 1.0)]),
        ];
        let mut doubled = deltas.clone();
        doubled.extend(deltas.clone());
        let p_dup = TrainingProblem::from_raw(doubled, 3, 1, 0.01, 0.25);
        let p_2c = TrainingProblem::from_raw(deltas, 3, 1, 0.01, 0.5);
        let a = solve(&p_dup, 1e-9, 2000);
        let b = solve(&p_2c, 1e-9, 2000);
        assert!(a.converged && b.converged);
        // Duplicating every constraint doubles the hinge sum, so both
        // problems minimize the same function up to the C bookkeeping.
        let obj_dup_in_2c = primal_objective(&p_2c, &a.weights);
        assert!((obj_dup_in_2c - b.objective).abs() < 1e-6);
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-5, "weights diverged: {x} vs {y}");
        }
    }

    #[test]
    fn kkt_reports_bound_breach_for_zero_model() {
        let problem = TrainingProblem::from_raw(vec![], NUM_RANK_FEATURES, NUM_RANK_FEATURES, 0.01, 0.1);
        let (obj, viol) = objective_and_kkt_raw(&problem, &vec![0.0; NUM_RANK_FEATURES]);
        assert_eq!(obj, 0.0);
        assert!((viol - 0.01).abs() < 1e-15);
    }

    #[test]
    fn kkt_small_at_solver_optimum() {
        let deltas = vec![
            SparseVector::new(vec![(0, 1.0), (3, -1.0)]),
            SparseVector::new(vec![(1, 1.0), (2, 1.0), (4, -1.0)]),
            SparseVector::new(vec![(2, -1.0), (4, 1.0)]),
        ];
        let problem = TrainingProblem::from_raw(deltas, 5, 2, 0.01, 0.3);
        let raw = solve(&problem, 1e-9, 5000);
        assert!(raw.converged);
        let (obj, viol) = objective_and_kkt_raw(&problem, &raw.weights);
        assert!((obj - raw.objective).abs() < 1e-12);
        assert!(viol < 1e-6, "violation {viol}");
    }

    #[test]
    fn perturbations_never_beat_the_optimum() {
        let deltas = vec![
            SparseVector::new(vec![(0, 1.0), (1, -1.0)]),
            SparseVector::new(vec![(1, 1.0), (2, -1.0)]),
        ];
        let problem = TrainingProblem::from_raw(deltas, 3, 1, 0.01, 0.4);
        let raw = solve(&problem, 1e-10, 5000);
        assert!(raw.converged);
        for dim in 0..3 {
            for step in [-0.05, -0.001, 0.001, 0.05] {
                let mut w = raw.weights.clone();
                w[dim] += step;
                if dim < problem.bounded_dims && w[dim] < problem.lower_bound {
                    continue;
                }
                assert!(
                    primal_objective(&problem, &w) >= raw.objective - 1e-9,
                    "perturbation on dim {dim} by {step} lowered the objective"
                );
            }
        }
    }
}
