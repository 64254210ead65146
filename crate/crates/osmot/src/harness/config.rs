//! Flat `key = value` experiment configuration with dotted namespaces.
//!
//! Unknown keys are rejected. Every key can be overridden from the
//! environment via `OSMOT_` plus the upper-cased key with dots replaced by
//! underscores (`corpus.num_words` -> `OSMOT_CORPUS_NUM_WORDS`).

use std::fmt::Write as _;

use crate::corpus::CorpusParams;
use crate::usersim::BehaviorConfig;

use super::HarnessError;

/// Knobs of the closed learning loop itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub users_per_iteration: usize,
    /// Number of trained models; the results table has `iterations + 1` rows
    /// (row 0 is the base ranker).
    pub iterations: usize,
    pub eval_questions: usize,
    /// Train on the union of all iterations' preferences instead of only the
    /// freshest batch.
    pub cumulative_training: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            users_per_iteration: 4000,
            iterations: 4,
            eval_questions: 1000,
            cumulative_training: true,
        }
    }
}

/// Solver knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub c: f64,
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 0.1,
            tolerance: 1e-5,
            max_passes: 200,
        }
    }
}

/// Everything one experiment run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusParams,
    pub user: BehaviorConfig,
    pub run: LoopConfig,
    pub train: TrainConfig,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusParams::default(),
            user: BehaviorConfig::default(),
            run: LoopConfig::default(),
            train: TrainConfig::default(),
            replicates: 5,
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.corpus
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.user
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.run.users_per_iteration == 0 {
            return Err(HarnessError::Config(
                "loop.users_per_iteration must be at least 1".into(),
            ));
        }
        if self.run.iterations == 0 {
            return Err(HarnessError::Config(
                "loop.iterations must be at least 1".into(),
            ));
        }
        if self.run.eval_questions == 0 {
            return Err(HarnessError::Config(
                "loop.eval_questions must be at least 1".into(),
            ));
        }
        if !(self.train.c > 0.0) {
            return Err(HarnessError::Config("train.c must be positive".into()));
        }
        if !(self.train.tolerance > 0.0) {
            return Err(HarnessError::Config(
                "train.tolerance must be positive".into(),
            ));
        }
        if self.train.max_passes == 0 {
            return Err(HarnessError::Config(
                "train.max_passes must be at least 1".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(HarnessError::Config(
                "experiment.replicates must be at least 1".into(),
            ));
        }
        if self.user.query_len > self.corpus.words_per_topic {
            return Err(HarnessError::Config(format!(
                "user.query_len {} exceeds corpus.words_per_topic {}",
                self.user.query_len, self.corpus.words_per_topic
            )));
        }
        Ok(())
    }
}

macro_rules! config_keys {
    ($(($key:literal, $field:expr, $parse:ty)),+ $(,)?) => {
        /// All recognized configuration keys, in emission order.
        pub const KNOWN_KEYS: &[&str] = &[$($key),+];

        impl ExperimentConfig {
            /// Sets one dotted key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
                match key {
                    $($key => {
                        let parsed: $parse = value.trim().parse().map_err(|_| {
                            HarnessError::Config(format!(
                                "key {key}: cannot parse {value:?} as {}",
                                stringify!($parse)
                            ))
                        })?;
                        $field(self, parsed);
                        Ok(())
                    })+
                    _ => Err(HarnessError::Config(format!("unknown config key {key:?}"))),
                }
            }
        }
    };
}

config_keys![
    ("corpus.num_words", |c: &mut ExperimentConfig, v| c.corpus.num_words = v, usize),
    ("corpus.zipf_exponent_words", |c: &mut ExperimentConfig, v| c.corpus.zipf_exponent_words = v, f64),
    ("corpus.num_topics", |c: &mut ExperimentConfig, v| c.corpus.num_topics = v, usize),
    ("corpus.words_per_topic", |c: &mut ExperimentConfig, v| c.corpus.words_per_topic = v, usize),
    ("corpus.ambiguity", |c: &mut ExperimentConfig, v| c.corpus.ambiguity = v, usize),
    ("corpus.zipf_exponent_topics", |c: &mut ExperimentConfig, v| c.corpus.zipf_exponent_topics = v, f64),
    ("corpus.doc_length", |c: &mut ExperimentConfig, v| c.corpus.doc_length = v, usize),
    ("corpus.max_topics_per_doc", |c: &mut ExperimentConfig, v| c.corpus.max_topics_per_doc = v, u32),
    ("corpus.binomial_p", |c: &mut ExperimentConfig, v| c.corpus.binomial_p = v, f64),
    ("corpus.num_documents", |c: &mut ExperimentConfig, v| c.corpus.num_documents = v, usize),
    ("corpus.seed", |c: &mut ExperimentConfig, v| c.corpus.seed = v, u64),
    ("user.noise_alpha", |c: &mut ExperimentConfig, v| c.user.noise_alpha = v, f64),
    ("user.lookahead_margin", |c: &mut ExperimentConfig, v| c.user.lookahead_margin = v, f64),
    ("user.trust_coeff", |c: &mut ExperimentConfig, v| c.user.trust_coeff = v, f64),
    ("user.threshold_shift", |c: &mut ExperimentConfig, v| c.user.threshold_shift = v, f64),
    ("user.patience_scale", |c: &mut ExperimentConfig, v| c.user.patience_scale = v, f64),
    ("user.reformulation_prob", |c: &mut ExperimentConfig, v| c.user.reformulation_prob = v, f64),
    ("user.display_depth", |c: &mut ExperimentConfig, v| c.user.display_depth = v, usize),
    ("user.max_queries_per_chain", |c: &mut ExperimentConfig, v| c.user.max_queries_per_chain = v, usize),
    ("user.query_len", |c: &mut ExperimentConfig, v| c.user.query_len = v, usize),
    ("loop.users_per_iteration", |c: &mut ExperimentConfig, v| c.run.users_per_iteration = v, usize),
    ("loop.iterations", |c: &mut ExperimentConfig, v| c.run.iterations = v, usize),
    ("loop.eval_questions", |c: &mut ExperimentConfig, v| c.run.eval_questions = v, usize),
    ("loop.cumulative_training", |c: &mut ExperimentConfig, v| c.run.cumulative_training = v, bool),
    ("train.c", |c: &mut ExperimentConfig, v| c.train.c = v, f64),
    ("train.tolerance", |c: &mut ExperimentConfig, v| c.train.tolerance = v, f64),
    ("train.max_passes", |c: &mut ExperimentConfig, v| c.train.max_passes = v, usize),
    ("experiment.replicates", |c: &mut ExperimentConfig, v| c.replicates = v, usize),
    ("experiment.seed", |c: &mut ExperimentConfig, v| c.seed = v, u64),
];

impl ExperimentConfig {
    /// Current textual value of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "corpus.num_words" => self.corpus.num_words.to_string(),
            "corpus.zipf_exponent_words" => self.corpus.zipf_exponent_words.to_string(),
            "corpus.num_topics" => self.corpus.num_topics.to_string(),
            "corpus.words_per_topic" => self.corpus.words_per_topic.to_string(),
            "corpus.ambiguity" => self.corpus.ambiguity.to_string(),
            "corpus.zipf_exponent_topics" => self.corpus.zipf_exponent_topics.to_string(),
            "corpus.doc_length" => self.corpus.doc_length.to_string(),
            "corpus.max_topics_per_doc" => self.corpus.max_topics_per_doc.to_string(),
            "corpus.binomial_p" => self.corpus.binomial_p.to_string(),
            "corpus.num_documents" => self.corpus.num_documents.to_string(),
            "corpus.seed" => self.corpus.seed.to_string(),
            "user.noise_alpha" => self.user.noise_alpha.to_string(),
            "user.lookahead_margin" => self.user.lookahead_margin.to_string(),
            "user.trust_coeff" => self.user.trust_coeff.to_string(),
            "user.threshold_shift" => self.user.threshold_shift.to_string(),
            "user.patience_scale" => self.user.patience_scale.to_string(),
            "user.reformulation_prob" => self.user.reformulation_prob.to_string(),
            "user.display_depth" => self.user.display_depth.to_string(),
            "user.max_queries_per_chain" => self.user.max_queries_per_chain.to_string(),
            "user.query_len" => self.user.query_len.to_string(),
            "loop.users_per_iteration" => self.run.users_per_iteration.to_string(),
            "loop.iterations" => self.run.iterations.to_string(),
            "loop.eval_questions" => self.run.eval_questions.to_string(),
            "loop.cumulative_training" => self.run.cumulative_training.to_string(),
            "train.c" => self.train.c.to_string(),
            "train.tolerance" => self.train.tolerance.to_string(),
            "train.max_passes" => self.train.max_passes.to_string(),
            "experiment.replicates" => self.replicates.to_string(),
            "experiment.seed" => self.seed.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Renders the fully resolved configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KNOWN_KEYS {
            writeln!(out, "{key} = {}", self.get(key).unwrap()).unwrap();
        }
        out
    }

    /// Parses `key = value` text on top of the defaults.
    pub fn from_text(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
                line: lineno + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| HarnessError::Parse {
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_text(&text)
    }

    /// Environment variable name carrying the override for a key.
    pub fn env_var_for(key: &str) -> String {
        format!("OSMOT_{}", key.to_uppercase().replace('.', "_"))
    }

    /// Applies `OSMOT_*` environment overrides for every known key.
    pub fn apply_env_overrides(&mut self) -> Result<(), HarnessError> {
        for key in KNOWN_KEYS {
            if let Ok(value) = std::env::var(Self::env_var_for(key)) {
                self.set(key, &value)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("user.noise_alpha", "1.4").unwrap();
        cfg.set("corpus.num_documents", "777").unwrap();
        cfg.set("loop.cumulative_training", "false").unwrap();
        let text = cfg.to_text();
        let back = ExperimentConfig::from_text(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = ExperimentConfig::from_text("corpus.numwords = 7\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown config key"), "{msg}");
    }

    #[test]
    fn parse_error_names_the_line() {
        let err = ExperimentConfig::from_text("corpus.num_words = 10\nbogus line\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn env_var_names() {
        assert_eq!(
            ExperimentConfig::env_var_for("corpus.num_words"),
            "OSMOT_CORPUS_NUM_WORDS"
        );
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg =
            ExperimentConfig::from_text("# header\n\n  corpus.num_words = 123  \n").unwrap();
        assert_eq!(cfg.corpus.num_words, 123);
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }
}
