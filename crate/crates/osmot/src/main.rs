//! Command-line driver for corpus generation, simulation, preference
//! extraction, training, evaluation, sweeps and calibration.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use osmot::corpus::generate_corpus;
use osmot::feedback::{extract_all, preference_error_rate};
use osmot::harness::{
    calibrate_patience, evaluate_ranker, io, run_experiment, sweep_by_name, ExperimentConfig,
};
use osmot::learner::{build_training_problem, train, BaseRankCache, LearnerError};
use osmot::retrieval::{BaseRanker, Index, ModelRanker, Ranker};
use osmot::usersim::simulate_population;

#[derive(Parser)]
#[command(name = "osmot", version, about = "Closed-loop learning-to-rank simulator")]
struct Cli {
    /// Config file (`key = value` lines); defaults apply otherwise.
    /// `OSMOT_<KEY>` environment variables override either.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and write it to a file.
    GenerateCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a user population searching a corpus and write the click log.
    Simulate {
        #[arg(long)]
        corpus: PathBuf,
        /// Rank with this model instead of the TFIDF base ranker.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of users; defaults to loop.users_per_iteration.
        #[arg(long)]
        users: Option<usize>,
        /// Simulation seed; defaults to experiment.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mine pairwise preferences from a session log.
    ExtractPrefs {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also report the preference error rate against this corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train the ranking model from a preference file.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        prefs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report mean top-5 best relevance of a ranker over sampled questions.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Evaluation seed; defaults to experiment.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named sweep (baseline, noise, ambiguity, trust, reformulation).
    Experiment {
        #[arg(long)]
        sweep: String,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Worker threads; output is byte-identical for any value.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Find the patience scale matching a target fraction of deep looks.
    Calibrate {
        /// Target fraction of queries looking past rank five, in (0, 0.5).
        #[arg(long)]
        target: f64,
        /// Reuse this corpus instead of generating one from the config.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Users per probe; defaults to loop.users_per_iteration.
        #[arg(long)]
        users: Option<usize>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p)
            .with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env_overrides()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes the fully resolved configuration next to an output file.
fn write_resolved_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut path = out.as_os_str().to_owned();
    path.push(".config");
    std::fs::write(PathBuf::from(path), cfg.to_text())?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;

    match cli.command {
        Command::GenerateCorpus { out } => {
            let corpus = generate_corpus(&cfg.corpus)?;
            io::save_corpus(&corpus, &out)?;
            write_resolved_config(&cfg, &out)?;
            println!(
                "wrote corpus: {} documents, {} topics, {} words -> {}",
                corpus.num_documents(),
                corpus.topic_set.num_topics(),
                corpus.lexicon.num_words,
                out.display()
            );
        }
        Command::Simulate {
            corpus,
            model,
            out,
            users,
            seed,
        } => {
            let corpus = io::load_corpus(&corpus)?;
            let index = Index::build(&corpus);
            let model = model.map(|p| io::load_model(&p)).transpose()?;
            let ranker: Box<dyn Ranker> = match &model {
                Some(m) => Box::new(ModelRanker {
                    index: &index,
                    model: m,
                }),
                None => Box::new(BaseRanker { index: &index }),
            };
            let num_users = users.unwrap_or(cfg.run.users_per_iteration);
            let sim_seed = seed.unwrap_or(cfg.seed);
            let logs =
                simulate_population(num_users, ranker.as_ref(), &corpus, &cfg.user, sim_seed);
            io::save_logs(&logs, &out)?;
            write_resolved_config(&cfg, &out)?;
            let queries: usize = logs.iter().map(|l| l.records.len()).sum();
            let satisfied = logs.iter().filter(|l| l.satisfied).count();
            println!(
                "simulated {num_users} users, {queries} queries, {satisfied} satisfied -> {}",
                out.display()
            );
        }
        Command::ExtractPrefs { logs, out, corpus } => {
            let logs = io::load_logs(&logs)?;
            let prefs = extract_all(&logs);
            io::save_prefs(&prefs, &out)?;
            write_resolved_config(&cfg, &out)?;
            print!("extracted {} preferences -> {}", prefs.len(), out.display());
            if let Some(corpus) = corpus {
                let corpus = io::load_corpus(&corpus)?;
                match preference_error_rate(&prefs, &corpus) {
                    Ok(rate) => print!(", error rate {rate:.4}"),
                    Err(_) => print!(", error rate undefined"),
                }
            }
            println!();
        }
        Command::Train { corpus, prefs, out } => {
            let corpus = io::load_corpus(&corpus)?;
            let prefs = io::load_prefs(&prefs)?;
            let index = Index::build(&corpus);
            let mut cache = BaseRankCache::new();
            let problem = build_training_problem(&prefs, &index, cfg.train.c, &mut cache)?;
            let report = |sol: &osmot::learner::Solution, converged: bool| {
                println!(
                    "constraints={} dropped={} passes={} objective={} max_kkt_violation={} converged={}",
                    problem.constraints.len(),
                    problem.dropped,
                    sol.iterations_used,
                    sol.objective,
                    sol.max_kkt_violation,
                    converged
                );
            };
            match train(&problem, cfg.train.tolerance, cfg.train.max_passes) {
                Ok(solution) => {
                    io::save_model(&solution.model, &out)?;
                    write_resolved_config(&cfg, &out)?;
                    report(&solution, true);
                }
                Err(LearnerError::NonConvergence { solution, .. }) => {
                    io::save_model(&solution.model, &out)?;
                    write_resolved_config(&cfg, &out)?;
                    report(&solution, false);
                    eprintln!("warning: solver did not converge; wrote partial model");
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Evaluate {
            corpus,
            model,
            seed,
        } => {
            let corpus = io::load_corpus(&corpus)?;
            let index = Index::build(&corpus);
            let model = model.map(|p| io::load_model(&p)).transpose()?;
            let ranker: Box<dyn Ranker> = match &model {
                Some(m) => Box::new(ModelRanker {
                    index: &index,
                    model: m,
                }),
                None => Box::new(BaseRanker { index: &index }),
            };
            let metric = evaluate_ranker(
                ranker.as_ref(),
                &corpus,
                cfg.user.query_len,
                cfg.run.eval_questions,
                seed.unwrap_or(cfg.seed),
            );
            println!("mean_top5_max_relevance={metric}");
        }
        Command::Experiment {
            sweep,
            out_dir,
            threads,
        } => {
            let sweep = sweep_by_name(&sweep)
                .with_context(|| format!(
                    "unknown sweep {sweep:?}; known: baseline, noise, ambiguity, trust, reformulation"
                ))?;
            let table = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()?
                    .install(|| run_experiment(&cfg, &sweep)),
                None => run_experiment(&cfg, &sweep),
            };
            std::fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join(format!("{}.csv", sweep.name));
            io::save_results(&table.records(), &csv_path)?;
            std::fs::write(out_dir.join("config.txt"), cfg.to_text())?;
            println!("wrote {}", csv_path.display());
            for cell in &sweep.cells {
                for iteration in 0..=cfg.run.iterations {
                    if let Some(mean) = table.mean_metric(&cell.label, iteration) {
                        println!(
                            "{} iteration {}: mean_top5_max_relevance={:.4}",
                            cell.label, iteration, mean
                        );
                    }
                }
            }
            for result in &table.results {
                if let Some(err) = &result.error {
                    eprintln!(
                        "cell {} replicate {} failed: {err}",
                        result.cell, result.replicate
                    );
                }
            }
        }
        Command::Calibrate {
            target,
            corpus,
            users,
        } => {
            let corpus = match corpus {
                Some(p) => io::load_corpus(&p)?,
                None => generate_corpus(&cfg.corpus)?,
            };
            let index = Index::build(&corpus);
            let num_users = users.unwrap_or(cfg.run.users_per_iteration);
            let scale =
                calibrate_patience(target, &corpus, &index, &cfg.user, num_users, cfg.seed)?;
            println!("patience_scale={scale}");
        }
    }
    Ok(())
}

// Keep clap's derive honest.
#[test]
fn cli_parses() {
    use clap::CommandFactory;
    Cli::command().debug_assert();
}
