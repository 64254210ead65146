//! Simulated search users.
//!
//! Each user has a patience budget and a relevance threshold, walks a result
//! list top to bottom, perceives a noisy relevance estimate per abstract
//! (Beta-distributed with its mode at the true relevance), peeks one position
//! ahead before clicking, clicks when an abstract looks promising enough,
//! stops when a fully relevant document is found, and reformulates with some
//! probability when a query walk ends unanswered.

use rand::Rng;
use rand_distr::Distribution;
use thiserror::Error;

use crate::corpus::{Corpus, DocId, Lexicon, TopicId, TopicSet, WordId};
use crate::retrieval::{Query, Ranker};
use crate::seed::stream_rng;

#[derive(Debug, Error)]
pub enum UsersimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-user traits: how many results they will wade through and how
/// promising an abstract must look before they click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile {
    pub patience: f64,
    pub threshold: f64,
}

/// Population-level behavior knobs. The defaults describe the reference
/// population; experiments sweep individual fields.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorConfig {
    /// Beta noise sharpness for perceived relevance; 1 means abstracts carry
    /// no signal at all (uniform perception).
    pub noise_alpha: f64,
    /// How much better the next abstract must look before the user moves on
    /// instead of clicking.
    pub lookahead_margin: f64,
    /// Rank-trust bias: perceived relevance is inflated by
    /// `trust_coeff / rank`.
    pub trust_coeff: f64,
    /// Constant added to every sampled click threshold.
    pub threshold_shift: f64,
    /// Multiplier on the patience range.
    pub patience_scale: f64,
    /// Probability that an unsatisfied user runs another query.
    pub reformulation_prob: f64,
    /// Number of results shown per query.
    pub display_depth: usize,
    /// Hard cap on queries per session.
    pub max_queries_per_chain: usize,
    /// Words per generated query.
    pub query_len: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig {
            noise_alpha: 4.0,
            lookahead_margin: 0.1,
            trust_coeff: 0.0,
            threshold_shift: 0.0,
            patience_scale: 1.0,
            reformulation_prob: 0.5,
            display_depth: 10,
            max_queries_per_chain: 10,
            query_len: 2,
        }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<(), UsersimError> {
        if !(self.noise_alpha >= 1.0) {
            return Err(UsersimError::InvalidParameter(format!(
                "noise_alpha must be >= 1, got {}",
                self.noise_alpha
            )));
        }
        if self.lookahead_margin < 0.0 || self.trust_coeff < 0.0 {
            return Err(UsersimError::InvalidParameter(
                "lookahead_margin and trust_coeff must be non-negative".into(),
            ));
        }
        if !(self.patience_scale > 0.0) {
            return Err(UsersimError::InvalidParameter(
                "patience_scale must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.reformulation_prob) {
            return Err(UsersimError::InvalidParameter(format!(
                "reformulation_prob must be in [0,1], got {}",
                self.reformulation_prob
            )));
        }
        if self.display_depth < 2 {
            return Err(UsersimError::InvalidParameter(
                "display_depth must be at least 2".into(),
            ));
        }
        if self.max_queries_per_chain == 0 {
            return Err(UsersimError::InvalidParameter(
                "max_queries_per_chain must be at least 1".into(),
            ));
        }
        if self.query_len == 0 {
            return Err(UsersimError::InvalidParameter(
                "query_len must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// What happened within one query of a session: the results shown, how deep
/// the user looked, and which positions were clicked, in click order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query: Query,
    pub results: Vec<DocId>,
    /// Deepest 1-based position whose abstract was evaluated (peeks count).
    pub looks: usize,
    /// Clicked 1-based positions in temporal order.
    pub clicks: Vec<usize>,
}

impl QueryRecord {
    pub fn clicked(&self, position_1based: usize) -> bool {
        self.clicks.contains(&position_1based)
    }
}

/// One user's full session: a chain of queries pursuing a single question.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub chain_id: u32,
    pub user_id: u32,
    pub question_topic: TopicId,
    pub records: Vec<QueryRecord>,
    /// True iff the last click hit a document fully relevant to the question.
    pub satisfied: bool,
}

/// Samples a user profile: patience uniform on `(0, 5 * patience_scale]`,
/// threshold uniform on `[0.375, 0.875]` shifted by `threshold_shift` and
/// clamped to `[0, 1]`.
pub fn sample_user<R: Rng>(cfg: &BehaviorConfig, rng: &mut R) -> UserProfile {
    let u: f64 = rng.random();
    let patience = (1.0 - u) * 5.0 * cfg.patience_scale;
    let v: f64 = rng.random();
    let threshold = (0.375 + 0.5 * v + cfg.threshold_shift).clamp(0.0, 1.0);
    UserProfile {
        patience,
        threshold,
    }
}

/// Draws the question topic from the topic popularity law.
pub fn sample_question<R: Rng>(topic_set: &TopicSet, rng: &mut R) -> TopicId {
    topic_set.sample_topic(rng)
}

/// Samples `query_len` distinct words from the question topic, weighted by
/// global word frequency renormalized within the topic.
pub fn generate_query<R: Rng>(
    question_topic: TopicId,
    topic_set: &TopicSet,
    lexicon: &Lexicon,
    query_len: usize,
    rng: &mut R,
) -> Result<Query, UsersimError> {
    let words = topic_set.words_of(question_topic);
    if query_len == 0 || query_len > words.len() {
        return Err(UsersimError::InvalidParameter(format!(
            "query_len {query_len} outside [1, {}]",
            words.len()
        )));
    }
    let mut pool: Vec<(WordId, f64)> = words
        .iter()
        .map(|&w| (w, lexicon.frequency(w)))
        .collect();
    let mut picked = Vec::with_capacity(query_len);
    for _ in 0..query_len {
        let total: f64 = pool.iter().map(|&(_, w)| w).sum();
        let mut u: f64 = rng.random::<f64>() * total;
        let mut chosen = pool.len() - 1;
        for (i, &(_, w)) in pool.iter().enumerate() {
            if u < w {
                chosen = i;
                break;
            }
            u -= w;
        }
        picked.push(pool.swap_remove(chosen).0);
    }
    Ok(Query::new(picked, question_topic))
}

/// Draws the noisy relevance a user reads off an abstract: `Beta(alpha, beta)`
/// with `beta` chosen so the mode sits at the true relevance (at 0.05 when
/// the true relevance is zero). `alpha = 1` degenerates to uniform noise.
pub fn observe_relevance<R: Rng>(
    true_rel: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<f64, UsersimError> {
    if !(alpha >= 1.0) {
        return Err(UsersimError::InvalidParameter(format!(
            "noise alpha must be >= 1, got {alpha}"
        )));
    }
    let beta = beta_param(true_rel, alpha);
    let dist = rand_distr::Beta::new(alpha, beta).map_err(|e| {
        UsersimError::InvalidParameter(format!("beta({alpha}, {beta}): {e}"))
    })?;
    Ok(dist.sample(rng))
}

/// `beta` so that the Beta(alpha, beta) mode is at the (floored) relevance:
/// mode = (alpha-1)/(alpha+beta-2) = m.
pub fn beta_param(true_rel: f64, alpha: f64) -> f64 {
    let mode = if true_rel > 0.0 { true_rel } else { 0.05 };
    2.0 - alpha + (alpha - 1.0) / mode
}

fn apply_trust(obs: f64, rank_position: usize, trust_coeff: f64) -> f64 {
    (obs + trust_coeff / rank_position as f64).clamp(0.0, 1.0)
}

/// Observed relevance including the rank-trust bias.
pub fn perceived_relevance<R: Rng>(
    true_rel: f64,
    rank_position: usize,
    cfg: &BehaviorConfig,
    rng: &mut R,
) -> Result<f64, UsersimError> {
    let obs = observe_relevance(true_rel, cfg.noise_alpha, rng)?;
    Ok(apply_trust(obs, rank_position, cfg.trust_coeff))
}

fn observe_at<R: Rng, F: Fn(f64, usize, &mut R) -> f64>(
    idx: usize,
    true_rels: &[f64],
    obs: &mut [Option<f64>],
    looks: &mut usize,
    rng: &mut R,
    observe: &F,
) -> f64 {
    if let Some(v) = obs[idx] {
        return v;
    }
    let v = observe(true_rels[idx], idx + 1, rng);
    obs[idx] = Some(v);
    *looks = (*looks).max(idx + 1);
    v
}

/// Core session walk with an injectable observation function, used by tests
/// to force perceived relevance sequences.
fn simulate_session_with<R, F>(
    user: &UserProfile,
    question_topic: TopicId,
    ranker: &dyn Ranker,
    corpus: &Corpus,
    cfg: &BehaviorConfig,
    rng: &mut R,
    observe: F,
) -> SessionLog
where
    R: Rng,
    F: Fn(f64, usize, &mut R) -> f64,
{
    let mut records: Vec<QueryRecord> = Vec::new();
    let mut satisfied = false;

    loop {
        let query = generate_query(
            question_topic,
            &corpus.topic_set,
            &corpus.lexicon,
            cfg.query_len,
            rng,
        )
        .expect("query_len validated against topic size");
        let ranking = ranker.rank(&query, cfg.display_depth);
        let results: Vec<DocId> = ranking.entries.iter().map(|e| e.doc).collect();
        let true_rels: Vec<f64> = results
            .iter()
            .map(|&d| corpus.documents[d.index()].relevance_to(question_topic))
            .collect();

        let mut obs: Vec<Option<f64>> = vec![None; results.len()];
        let mut looks = 0usize;
        let mut clicks: Vec<usize> = Vec::new();
        let mut patience = user.patience;
        let mut i = 0usize;

        while patience > 0.0 && i < results.len() {
            let o_i = observe_at(i, &true_rels, &mut obs, &mut looks, rng, &observe);
            if o_i > user.threshold {
                // Peek at the next abstract before committing to the click;
                // move on if it looks clearly better.
                let mut move_on = false;
                if i + 1 < results.len() {
                    let o_next =
                        observe_at(i + 1, &true_rels, &mut obs, &mut looks, rng, &observe);
                    if o_next > o_i + cfg.lookahead_margin {
                        move_on = true;
                    }
                }
                if !move_on {
                    clicks.push(i + 1);
                    let rel = true_rels[i];
                    patience -= 0.5 + (1.0 - rel);
                    if rel == 1.0 {
                        satisfied = true;
                    }
                }
            } else {
                patience -= user.threshold - o_i;
            }
            if satisfied {
                break;
            }
            i += 1;
        }

        records.push(QueryRecord {
            query,
            results,
            looks,
            clicks,
        });

        if satisfied || records.len() >= cfg.max_queries_per_chain {
            break;
        }
        let coin: f64 = rng.random();
        if coin >= cfg.reformulation_prob {
            break; // gives up
        }
    }

    SessionLog {
        chain_id: 0,
        user_id: 0,
        question_topic,
        records,
        satisfied,
    }
}

/// Runs one user session against a ranker.
pub fn simulate_session<R: Rng>(
    user: &UserProfile,
    question_topic: TopicId,
    ranker: &dyn Ranker,
    corpus: &Corpus,
    cfg: &BehaviorConfig,
    rng: &mut R,
) -> SessionLog {
    simulate_session_with(user, question_topic, ranker, corpus, cfg, rng, |tr, pos, r| {
        perceived_relevance(tr, pos, cfg, r).expect("noise_alpha validated")
    })
}

/// Simulates an independent session per user. User `u` consumes stream `u`
/// of the given seed, so output is identical regardless of parallelism.
pub fn simulate_population(
    num_users: usize,
    ranker: &dyn Ranker,
    corpus: &Corpus,
    cfg: &BehaviorConfig,
    seed: u64,
) -> Vec<SessionLog> {
    use rayon::prelude::*;
    (0..num_users)
        .into_par_iter()
        .map(|u| {
            let mut rng = stream_rng(seed, u as u64);
            let user = sample_user(cfg, &mut rng);
            let topic = sample_question(&corpus.topic_set, &mut rng);
            let mut log = simulate_session(&user, topic, ranker, corpus, cfg, &mut rng);
            log.chain_id = u as u32;
            log.user_id = u as u32;
            log
        })
        .collect()
}
