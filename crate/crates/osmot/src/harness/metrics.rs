//! Evaluation metric and per-rank look/click statistics.

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::retrieval::Ranker;
use crate::seed::stream_rng;
use crate::usersim::{generate_query, sample_question, SessionLog};

/// Number of ranks covered by the look/click histograms.
pub const HISTOGRAM_RANKS: usize = 10;

/// One row of the results table: everything measured about one loop
/// iteration of one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    /// Mean over evaluation questions of the best true relevance among the
    /// ranker's top five results.
    pub mean_top5_max_relevance: f64,
    /// Error rate of this iteration's freshly mined preferences; `None` when
    /// no preference discriminated between distinct relevances.
    pub preference_error_rate: Option<f64>,
    /// Constraints available for training after folding in this iteration.
    pub constraint_count: usize,
    /// Fraction of query records whose look depth reached each rank.
    pub look_histogram: [f64; HISTOGRAM_RANKS],
    /// Fraction of query records clicking each rank.
    pub click_histogram: [f64; HISTOGRAM_RANKS],
    /// Whether the solver converged for the model trained from this row's
    /// data; `None` on the final row, which trains nothing.
    pub solver_converged: Option<bool>,
}

/// Samples `num_questions` first queries and averages the best true
/// relevance found in each top five. Question `i` uses stream `i` of the
/// seed, so the question set is fixed per seed regardless of parallelism.
pub fn evaluate_ranker(
    ranker: &dyn Ranker,
    corpus: &Corpus,
    query_len: usize,
    num_questions: usize,
    seed: u64,
) -> f64 {
    let per_question: Vec<f64> = (0..num_questions)
        .into_par_iter()
        .map(|qi| {
            let mut rng = stream_rng(seed, qi as u64);
            let topic = sample_question(&corpus.topic_set, &mut rng);
            let query = generate_query(topic, &corpus.topic_set, &corpus.lexicon, query_len, &mut rng)
                .expect("query_len validated against topic size");
            let ranking = ranker.rank(&query, 5);
            ranking
                .entries
                .iter()
                .map(|e| corpus.documents[e.doc.index()].relevance_to(topic))
                .fold(0.0, f64::max)
        })
        .collect();
    per_question.iter().sum::<f64>() / num_questions as f64
}

/// Per-rank look and click fractions over ranks 1..=10, with the number of
/// query records as denominator.
pub fn click_rank_histogram(
    logs: &[SessionLog],
) -> ([f64; HISTOGRAM_RANKS], [f64; HISTOGRAM_RANKS]) {
    let mut looks = [0u64; HISTOGRAM_RANKS];
    let mut clicks = [0u64; HISTOGRAM_RANKS];
    let mut records = 0u64;
    for log in logs {
        for rec in &log.records {
            records += 1;
            for rank in 1..=HISTOGRAM_RANKS.min(rec.looks) {
                looks[rank - 1] += 1;
            }
            for &c in &rec.clicks {
                if c <= HISTOGRAM_RANKS {
                    clicks[c - 1] += 1;
                }
            }
        }
    }
    let mut look_frac = [0.0; HISTOGRAM_RANKS];
    let mut click_frac = [0.0; HISTOGRAM_RANKS];
    if records > 0 {
        for i in 0..HISTOGRAM_RANKS {
            look_frac[i] = looks[i] as f64 / records as f64;
            click_frac[i] = clicks[i] as f64 / records as f64;
        }
    }
    (look_frac, click_frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusParams, DocId, TopicId};
    use crate::retrieval::{Query, Ranking, ScoredDoc};
    use crate::usersim::QueryRecord;

    /// Always returns the documents most relevant to the query topic.
    struct OracleRanker<'a> {
        corpus: &'a Corpus,
    }

    impl Ranker for OracleRanker<'_> {
        fn rank(&self, query: &Query, depth: usize) -> Ranking {
            let mut docs: Vec<DocId> = (0..self.corpus.num_documents() as u32).map(DocId).collect();
            docs.sort_by(|&a, &b| {
                let ra = self.corpus.documents[a.index()].relevance_to(query.topic);
                let rb = self.corpus.documents[b.index()].relevance_to(query.topic);
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            Ranking {
                query: query.clone(),
                entries: docs
                    .into_iter()
                    .take(depth)
                    .map(|doc| ScoredDoc { doc, score: 0.0 })
                    .collect(),
            }
        }
    }

    /// Always returns irrelevant documents.
    struct AdversarialRanker<'a> {
        corpus: &'a Corpus,
    }

    impl Ranker for AdversarialRanker<'_> {
        fn rank(&self, query: &Query, depth: usize) -> Ranking {
            let entries = self
                .corpus
                .documents
                .iter()
                .filter(|d| d.relevance_to(query.topic) == 0.0)
                .take(depth)
                .map(|d| ScoredDoc {
                    doc: d.id,
                    score: 0.0,
                })
                .collect();
            Ranking {
                query: query.clone(),
                entries,
            }
        }
    }

    #[test]
    fn oracle_and_adversarial_rankers_bound_the_metric() {
        let corpus = generate_corpus(&CorpusParams {
            num_documents: 800,
            ..CorpusParams::default()
        })
        .unwrap();
        // The oracle is capped by corpus coverage: a rare topic may lack any
        // fully relevant document, so the ceiling sits just below 1.
        let oracle = OracleRanker { corpus: &corpus };
        let metric = evaluate_ranker(&oracle, &corpus, 2, 200, 3);
        assert!(metric > 0.9, "oracle metric {metric}");
        let adversarial = AdversarialRanker { corpus: &corpus };
        let metric = evaluate_ranker(&adversarial, &corpus, 2, 200, 3);
        assert_eq!(metric, 0.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let corpus = generate_corpus(&CorpusParams {
            num_documents: 300,
            ..CorpusParams::default()
        })
        .unwrap();
        let index = crate::retrieval::Index::build(&corpus);
        let ranker = crate::retrieval::BaseRanker { index: &index };
        let a = evaluate_ranker(&ranker, &corpus, 2, 300, 11);
        let b = evaluate_ranker(&ranker, &corpus, 2, 300, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_counts_fractions() {
        let query = Query::new(vec![crate::corpus::WordId(0)], TopicId(0));
        let rec = |looks: usize, clicks: Vec<usize>| QueryRecord {
            query: query.clone(),
            results: (0..10).map(DocId).collect(),
            looks,
            clicks,
        };
        let logs = vec![
            SessionLog {
                chain_id: 0,
                user_id: 0,
                question_topic: TopicId(0),
                records: vec![rec(2, vec![1])],
                satisfied: true,
            },
            SessionLog {
                chain_id: 1,
                user_id: 1,
                question_topic: TopicId(0),
                records: vec![rec(4, vec![3]), rec(1, vec![1])],
                satisfied: true,
            },
        ];
        let (look, click) = click_rank_histogram(&logs);
        // 3 records: looks reach rank 1 in all, rank 2 in two, rank 4 in one.
        assert!((look[0] - 1.0).abs() < 1e-12);
        assert!((look[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((look[3] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(look[4], 0.0);
        // Clicks: rank 1 twice, rank 3 once.
        assert!((click[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((click[2] - 1.0 / 3.0).abs() < 1e-12);
        // Looks are non-increasing by construction.
        for i in 1..HISTOGRAM_RANKS {
            assert!(look[i] <= look[i - 1]);
        }
    }
}
