//! The closed learning loop and parameter sweeps.
//!
//! One *cell* of an experiment fixes a parameter combination; each cell runs
//! `replicates` times with derived seeds. Within a (cell, replicate) job the
//! loop alternates: evaluate the current ranker, simulate a user population
//! under it, mine preferences, fold them into the training pool, train the
//! next model. Row `k` of the results therefore describes ranker `k`: its
//! evaluation metric plus the logs and preferences collected under it.

use rayon::prelude::*;

use crate::corpus::{generate_corpus, Corpus, CorpusParams};
use crate::feedback::{extract_all, preference_error_rate, PreferenceSet};
use crate::learner::{build_training_problem, train, BaseRankCache, LearnerError};
use crate::retrieval::{BaseRanker, Index, Model, ModelRanker, Ranker};
use crate::seed::{derive_seed, tag};
use crate::usersim::simulate_population;

use super::config::ExperimentConfig;
use super::metrics::{click_rank_histogram, evaluate_ranker, MetricsRow, HISTOGRAM_RANKS};
use super::HarnessError;

/// Mutable state of one learning loop.
pub struct LoopState<'a> {
    pub cfg: &'a ExperimentConfig,
    pub corpus: &'a Corpus,
    pub index: &'a Index,
    pub cache: BaseRankCache,
    pub accumulated: PreferenceSet,
    /// `None` means the base ranker is current.
    pub model: Option<Model>,
    pub iteration: usize,
    replicate: u64,
    eval_seed: u64,
}

impl<'a> LoopState<'a> {
    pub fn new(
        cfg: &'a ExperimentConfig,
        corpus: &'a Corpus,
        index: &'a Index,
        replicate: u64,
    ) -> LoopState<'a> {
        LoopState {
            cfg,
            corpus,
            index,
            cache: BaseRankCache::new(),
            accumulated: PreferenceSet::default(),
            model: None,
            iteration: 0,
            replicate,
            eval_seed: derive_seed(cfg.seed, &[tag::EVALUATE, replicate]),
        }
    }

    fn current_ranker<'b>(&'b self) -> Box<dyn Ranker + 'b> {
        match &self.model {
            None => Box::new(BaseRanker { index: self.index }),
            Some(model) => Box::new(ModelRanker {
                index: self.index,
                model,
            }),
        }
    }

    /// Runs one loop step and advances the state. The returned row reports
    /// the *current* ranker (evaluation, fresh preference error, click and
    /// look histograms); training for the next iteration happens inside,
    /// except after the final data collection. A non-converged solve is
    /// recorded on the row and the loop continues with the partial model.
    pub fn run_iteration(&mut self) -> Result<MetricsRow, HarnessError> {
        let ranker = self.current_ranker();
        let metric = evaluate_ranker(
            ranker.as_ref(),
            self.corpus,
            self.cfg.user.query_len,
            self.cfg.run.eval_questions,
            self.eval_seed,
        );
        let sim_seed = derive_seed(
            self.cfg.seed,
            &[tag::SIMULATE, self.replicate, self.iteration as u64],
        );
        let logs = simulate_population(
            self.cfg.run.users_per_iteration,
            ranker.as_ref(),
            self.corpus,
            &self.cfg.user,
            sim_seed,
        );
        drop(ranker);
        let fresh = extract_all(&logs);
        let error_rate = preference_error_rate(&fresh, self.corpus).ok();
        let (look_histogram, click_histogram) = click_rank_histogram(&logs);

        if self.cfg.run.cumulative_training {
            self.accumulated.extend(&fresh);
        } else {
            self.accumulated = fresh;
        }

        let is_last = self.iteration == self.cfg.run.iterations;
        let (constraint_count, solver_converged) = if is_last {
            (self.accumulated.len(), None)
        } else {
            let problem = build_training_problem(
                &self.accumulated,
                self.index,
                self.cfg.train.c,
                &mut self.cache,
            )?;
            let count = problem.constraints.len();
            match train(&problem, self.cfg.train.tolerance, self.cfg.train.max_passes) {
                Ok(solution) => {
                    self.model = Some(solution.model);
                    (count, Some(true))
                }
                Err(LearnerError::NonConvergence { solution, .. }) => {
                    self.model = Some(solution.model);
                    (count, Some(false))
                }
                Err(e) => return Err(HarnessError::Learner(e.to_string())),
            }
        };

        let row = MetricsRow {
            iteration: self.iteration,
            mean_top5_max_relevance: metric,
            preference_error_rate: error_rate,
            constraint_count,
            look_histogram,
            click_histogram,
            solver_converged,
        };
        self.iteration += 1;
        Ok(row)
    }
}

/// One parameter combination of a sweep.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

/// A named grid of cells.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub name: String,
    pub cells: Vec<CellSpec>,
}

fn cell(label: &str, overrides: &[(&str, &str)]) -> CellSpec {
    CellSpec {
        label: label.to_string(),
        overrides: overrides
            .iter()
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    }
}

/// The built-in sweeps. `baseline` is a single default cell; the others vary
/// perception noise, word ambiguity, rank trust and reformulation
/// probability.
pub fn sweep_by_name(name: &str) -> Option<Sweep> {
    let cells = match name {
        "baseline" => vec![cell("default", &[])],
        "noise" => vec![
            cell("alpha=4", &[("user.noise_alpha", "4")]),
            cell("alpha=2", &[("user.noise_alpha", "2")]),
            cell("alpha=1.4", &[("user.noise_alpha", "1.4")]),
            cell("alpha=1", &[("user.noise_alpha", "1")]),
        ],
        // Ambiguity constrains topic size: num_topics * words_per_topic must
        // equal ambiguity * num_words (and fit inside the lexicon for a = 1).
        "ambiguity" => vec![
            cell(
                "ambiguity=1",
                &[("corpus.ambiguity", "1"), ("corpus.words_per_topic", "10")],
            ),
            cell(
                "ambiguity=2",
                &[("corpus.ambiguity", "2"), ("corpus.words_per_topic", "20")],
            ),
            cell(
                "ambiguity=3",
                &[("corpus.ambiguity", "3"), ("corpus.words_per_topic", "30")],
            ),
        ],
        "trust" => vec![
            cell("trust=0", &[("user.trust_coeff", "0")]),
            cell("trust=0.2", &[("user.trust_coeff", "0.2")]),
            cell("trust=0.5", &[("user.trust_coeff", "0.5")]),
        ],
        "reformulation" => vec![
            cell("reformulation=0.25", &[("user.reformulation_prob", "0.25")]),
            cell("reformulation=0.5", &[("user.reformulation_prob", "0.5")]),
            cell("reformulation=0.75", &[("user.reformulation_prob", "0.75")]),
        ],
        _ => return None,
    };
    Some(Sweep {
        name: name.to_string(),
        cells,
    })
}

/// Rows of one (cell, replicate) job, or the failure that stopped it.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: String,
    pub replicate: usize,
    pub rows: Vec<MetricsRow>,
    pub error: Option<String>,
}

/// All results of one experiment, ordered by (cell, replicate).
#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub experiment: String,
    pub results: Vec<CellResult>,
}

/// One emitted CSV record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub cell: String,
    pub replicate: usize,
    pub iteration: usize,
    pub metric: String,
    pub value: String,
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

impl ResultsTable {
    /// Flattens into CSV records, in deterministic order.
    pub fn records(&self) -> Vec<ResultRecord> {
        let mut out = Vec::new();
        for result in &self.results {
            let mut push = |iteration: usize, metric: &str, value: String| {
                out.push(ResultRecord {
                    experiment: self.experiment.clone(),
                    cell: result.cell.clone(),
                    replicate: result.replicate,
                    iteration,
                    metric: metric.to_string(),
                    value,
                });
            };
            if let Some(err) = &result.error {
                let clean: String = err
                    .chars()
                    .map(|c| if c == ',' || c == '\n' { ';' } else { c })
                    .collect();
                push(0, "failed", clean);
                continue;
            }
            for row in &result.rows {
                let it = row.iteration;
                push(it, "mean_top5_max_relevance", fmt_f64(row.mean_top5_max_relevance));
                push(
                    it,
                    "preference_error_rate",
                    row.preference_error_rate.map_or("NA".into(), fmt_f64),
                );
                push(it, "constraint_count", row.constraint_count.to_string());
                for rank in 1..=HISTOGRAM_RANKS {
                    push(it, &format!("look_rank_{rank}"), fmt_f64(row.look_histogram[rank - 1]));
                }
                for rank in 1..=HISTOGRAM_RANKS {
                    push(
                        it,
                        &format!("click_rank_{rank}"),
                        fmt_f64(row.click_histogram[rank - 1]),
                    );
                }
                push(
                    it,
                    "solver_converged",
                    row.solver_converged
                        .map_or("NA".into(), |c| (c as u8).to_string()),
                );
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        super::io::render_results_csv(&self.records())
    }

    /// Metric value of one (cell, replicate, iteration), if present.
    pub fn metric(&self, cell: &str, replicate: usize, iteration: usize) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.cell == cell && r.replicate == replicate)
            .and_then(|r| r.rows.iter().find(|row| row.iteration == iteration))
            .map(|row| row.mean_top5_max_relevance)
    }

    /// Mean metric over replicates of one (cell, iteration).
    pub fn mean_metric(&self, cell: &str, iteration: usize) -> Option<f64> {
        let values: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.cell == cell)
            .filter_map(|r| r.rows.iter().find(|row| row.iteration == iteration))
            .map(|row| row.mean_top5_max_relevance)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    /// Mean preference error rate over replicates of one (cell, iteration);
    /// undefined rates are skipped.
    pub fn mean_error_rate(&self, cell: &str, iteration: usize) -> Option<f64> {
        let values: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.cell == cell)
            .filter_map(|r| r.rows.iter().find(|row| row.iteration == iteration))
            .filter_map(|row| row.preference_error_rate)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

/// Runs one (cell, replicate) job to completion.
pub fn run_cell(
    base: &ExperimentConfig,
    cell: &CellSpec,
    replicate: usize,
) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut cfg = base.clone();
    for (key, value) in &cell.overrides {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    let corpus_seed = derive_seed(cfg.seed, &[tag::CORPUS, replicate as u64]);
    let params = CorpusParams {
        seed: corpus_seed,
        ..cfg.corpus.clone()
    };
    let corpus = generate_corpus(&params).map_err(|e| HarnessError::Config(e.to_string()))?;
    let index = Index::build(&corpus);
    let mut state = LoopState::new(&cfg, &corpus, &index, replicate as u64);
    let mut rows = Vec::with_capacity(cfg.run.iterations + 1);
    for _ in 0..=cfg.run.iterations {
        rows.push(state.run_iteration()?);
    }
    Ok(rows)
}

/// Full factorial over sweep cells and replicates. Jobs run in parallel;
/// output order and content are independent of the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, sweep: &Sweep) -> ResultsTable {
    let jobs: Vec<(usize, usize)> = sweep
        .cells
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| (0..cfg.replicates).map(move |r| (ci, r)))
        .collect();
    let results: Vec<CellResult> = jobs
        .into_par_iter()
        .map(|(ci, replicate)| {
            let cell = &sweep.cells[ci];
            match run_cell(cfg, cell, replicate) {
                Ok(rows) => CellResult {
                    cell: cell.label.clone(),
                    replicate,
                    rows,
                    error: None,
                },
                Err(e) => CellResult {
                    cell: cell.label.clone(),
                    replicate,
                    rows: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    ResultsTable {
        experiment: sweep.name.clone(),
        results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.corpus.num_documents = 300;
        cfg.run.users_per_iteration = 150;
        cfg.run.iterations = 1;
        cfg.run.eval_questions = 100;
        cfg.replicates = 2;
        cfg.seed = 123;
        cfg
    }

    #[test]
    fn loop_rows_are_deterministic_and_start_at_base() {
        let cfg = small_cfg();
        let sweep = sweep_by_name("baseline").unwrap();
        let a = run_experiment(&cfg, &sweep);
        let b = run_experiment(&cfg, &sweep);
        assert_eq!(a.to_csv(), b.to_csv());
        for result in &a.results {
            assert!(result.error.is_none(), "{:?}", result.error);
            assert_eq!(result.rows.len(), 2);
            assert_eq!(result.rows[0].iteration, 0);
            // Final row trains nothing.
            assert_eq!(result.rows[1].solver_converged, None);
            assert!(result.rows[0].solver_converged.is_some());
        }
    }

    #[test]
    fn cumulative_constraint_counts_never_shrink() {
        let mut cfg = small_cfg();
        cfg.run.iterations = 2;
        cfg.replicates = 1;
        let rows = run_cell(&cfg, &cell("default", &[]), 0).unwrap();
        for pair in rows.windows(2) {
            assert!(pair[1].constraint_count >= pair[0].constraint_count);
        }
    }

    #[test]
    fn failed_cells_are_recorded_not_fatal() {
        let cfg = small_cfg();
        let sweep = Sweep {
            name: "broken".into(),
            cells: vec![
                cell("bad", &[("corpus.ambiguity", "7")]),
                cell("good", &[]),
            ],
        };
        let table = run_experiment(&cfg, &sweep);
        let bad = table.results.iter().find(|r| r.cell == "bad").unwrap();
        assert!(bad.error.is_some());
        let good = table.results.iter().find(|r| r.cell == "good").unwrap();
        assert!(good.error.is_none());
        let csv = table.to_csv();
        assert!(csv.contains("failed"));
    }

    #[test]
    fn unknown_sweep_is_none() {
        assert!(sweep_by_name("nope").is_none());
        for name in ["baseline", "noise", "ambiguity", "trust", "reformulation"] {
            assert!(sweep_by_name(name).is_some());
        }
    }
}
