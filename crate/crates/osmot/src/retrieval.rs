//! Base TFIDF ranker, the sparse feature map and linear model scoring.
//!
//! The base ranker `rel0` is a TFIDF-weighted cosine similarity. A learned
//! model scores documents as a sparse dot product over two feature families:
//! 28 cumulative rank features that encode a document's position in the base
//! ranking, and one indicator feature per (query term, document) pair. Rank
//! features tie the learned function to the base ordering; term features let
//! it learn that a specific document answers a specific word.

use std::collections::HashMap;

use crate::corpus::{Corpus, DocId, TopicId, WordId};

/// Rank-feature thresholds: a feature per threshold `k`, set when the
/// document sits at base rank `<= k`.
pub const RANK_THRESHOLDS: [u32; 28] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80, 85, 90,
    95, 100,
];

/// Number of rank features.
pub const NUM_RANK_FEATURES: usize = RANK_THRESHOLDS.len();

/// Index into `RANK_THRESHOLDS` of the first threshold `>= rank`, or
/// `NUM_RANK_FEATURES` when the rank is beyond the last threshold.
pub fn first_threshold_at_or_above(rank: u32) -> usize {
    RANK_THRESHOLDS.partition_point(|&k| k < rank)
}

/// One dimension of the feature space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureId {
    /// Cumulative base-rank indicator at the given threshold.
    Rank(u32),
    /// Indicator that this (query term, document) pair matched.
    Term(WordId, DocId),
}

/// A query: a set of distinct terms, stored sorted, plus the question topic
/// it was generated from. The topic never influences ranking; it is carried
/// for evaluation and preference error measurement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    terms: Vec<WordId>,
    pub topic: TopicId,
}

impl Query {
    pub fn new(mut terms: Vec<WordId>, topic: TopicId) -> Query {
        terms.sort_unstable();
        terms.dedup();
        assert!(!terms.is_empty(), "query must have at least one term");
        Query { terms, topic }
    }

    pub fn terms(&self) -> &[WordId] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// The sparse feature vector of one (document, query) pair. All present
/// features have value 1; rank features are implied by the base rank
/// (downward closure over thresholds holds by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    pub doc: DocId,
    /// 1-based rank in the base ranking, if the document appeared in it.
    pub base_rank: Option<u32>,
    /// The query terms; each contributes a `Term(t, doc)` feature.
    pub terms: Vec<WordId>,
}

impl SparseFeatures {
    /// Thresholds whose rank feature is set.
    pub fn rank_thresholds(&self) -> impl Iterator<Item = u32> + '_ {
        let start = match self.base_rank {
            Some(r) => first_threshold_at_or_above(r),
            None => NUM_RANK_FEATURES,
        };
        RANK_THRESHOLDS[start..].iter().copied()
    }

    /// All set features, rank features first.
    pub fn entries(&self) -> Vec<(FeatureId, f64)> {
        let mut out: Vec<(FeatureId, f64)> = self
            .rank_thresholds()
            .map(|k| (FeatureId::Rank(k), 1.0))
            .collect();
        out.extend(
            self.terms
                .iter()
                .map(|&t| (FeatureId::Term(t, self.doc), 1.0)),
        );
        out
    }
}

/// A scored document in a ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc: DocId,
    pub score: f64,
}

/// An ordered result list for one query. Scores are non-increasing; ties are
/// broken by base rank, then document id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query: Query,
    pub entries: Vec<ScoredDoc>,
}

impl Ranking {
    /// 1-based position of a document, if present.
    pub fn position_of(&self, doc: DocId) -> Option<u32> {
        self.entries
            .iter()
            .position(|e| e.doc == doc)
            .map(|p| p as u32 + 1)
    }

    pub fn doc_at(&self, position_1based: usize) -> DocId {
        self.entries[position_1based - 1].doc
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Full base ordering of every document for one query, kept around for rank
/// features and tie-breaking.
pub struct BaseOrder {
    /// All document ids, best first. Zero-score documents follow the scored
    /// ones in ascending id order.
    pub order: Vec<DocId>,
    /// Document id -> 0-based position in `order`.
    pub position: Vec<u32>,
    /// Document id -> rel0 score.
    pub score: Vec<f64>,
}

/// Inverted index over a corpus with the statistics rel0 needs.
pub struct Index {
    num_docs: usize,
    /// word -> sorted (doc, term frequency) postings.
    postings: Vec<Vec<(DocId, u32)>>,
    /// word -> ln(M / df), df clamped to at least 1.
    idf: Vec<f64>,
    /// doc -> Euclidean norm of its tf*idf vector.
    doc_norm: Vec<f64>,
}

impl Index {
    pub fn build(corpus: &Corpus) -> Index {
        let num_docs = corpus.num_documents();
        let num_words = corpus.lexicon.num_words;
        let mut postings: Vec<Vec<(DocId, u32)>> = vec![Vec::new(); num_words];
        for doc in &corpus.documents {
            for &(w, c) in &doc.words {
                postings[w.index()].push((doc.id, c));
            }
        }
        let idf: Vec<f64> = postings
            .iter()
            .map(|p| (num_docs as f64 / (p.len().max(1)) as f64).ln())
            .collect();
        let mut doc_norm = vec![0.0; num_docs];
        for doc in &corpus.documents {
            let mut sq = 0.0;
            for &(w, c) in &doc.words {
                let weight = c as f64 * idf[w.index()];
                sq += weight * weight;
            }
            doc_norm[doc.id.index()] = sq.sqrt();
        }
        Index {
            num_docs,
            postings,
            idf,
            doc_norm,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn idf(&self, word: WordId) -> f64 {
        self.idf[word.index()]
    }

    fn query_norm(&self, query: &Query) -> f64 {
        query
            .terms()
            .iter()
            .map(|&t| {
                let w = self.idf[t.index()];
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// TFIDF-weighted cosine similarity between a document and a query.
    /// Query-side weights are the term idfs. Zero when nothing overlaps or
    /// either vector has zero norm.
    pub fn rel0_score(&self, doc: DocId, query: &Query) -> f64 {
        let mut dot = 0.0;
        for &t in query.terms() {
            let posting = &self.postings[t.index()];
            if let Ok(i) = posting.binary_search_by_key(&doc, |&(d, _)| d) {
                let idf = self.idf[t.index()];
                dot += posting[i].1 as f64 * idf * idf;
            }
        }
        let norm = self.doc_norm[doc.index()] * self.query_norm(query);
        if dot > 0.0 && norm > 0.0 {
            dot / norm
        } else {
            0.0
        }
    }

    /// Computes the complete base ordering for a query: documents with a
    /// positive rel0 score sorted by descending score (ties by id), followed
    /// by all remaining documents in id order.
    pub fn base_order(&self, query: &Query) -> BaseOrder {
        let m = self.num_docs;
        let mut score = vec![0.0; m];
        for &t in query.terms() {
            let idf = self.idf[t.index()];
            let w2 = idf * idf;
            for &(d, tf) in &self.postings[t.index()] {
                score[d.index()] += tf as f64 * w2;
            }
        }
        let q_norm = self.query_norm(query);
        let mut scored: Vec<DocId> = Vec::new();
        for i in 0..m {
            if score[i] > 0.0 {
                let norm = self.doc_norm[i] * q_norm;
                if norm > 0.0 {
                    score[i] /= norm;
                    scored.push(DocId(i as u32));
                } else {
                    score[i] = 0.0;
                }
            }
        }
        scored.sort_unstable_by(|&a, &b| {
            score[b.index()]
                .total_cmp(&score[a.index()])
                .then(a.cmp(&b))
        });
        let mut order = scored;
        let mut in_order = vec![false; m];
        for &d in &order {
            in_order[d.index()] = true;
        }
        for i in 0..m {
            if !in_order[i] {
                order.push(DocId(i as u32));
            }
        }
        let mut position = vec![0u32; m];
        for (pos, &d) in order.iter().enumerate() {
            position[d.index()] = pos as u32;
        }
        BaseOrder {
            order,
            position,
            score,
        }
    }

    /// Top `depth` documents by rel0 score.
    pub fn rank_base(&self, query: &Query, depth: usize) -> Ranking {
        let base = self.base_order(query);
        let entries = base
            .order
            .iter()
            .take(depth)
            .map(|&d| ScoredDoc {
                doc: d,
                score: base.score[d.index()],
            })
            .collect();
        Ranking {
            query: query.clone(),
            entries,
        }
    }

    /// Scores every document with the model and returns the top `depth`.
    /// Ties are broken by base order, which itself breaks ties by id.
    pub fn rank_learned(&self, model: &Model, query: &Query, depth: usize) -> Ranking {
        let m = self.num_docs;
        let base = self.base_order(query);
        let mut score = vec![0.0f64; m];
        for pos in 0..m.min(RANK_THRESHOLDS[NUM_RANK_FEATURES - 1] as usize) {
            let doc = base.order[pos];
            score[doc.index()] += model.rank_suffix_weight(pos as u32 + 1);
        }
        for &t in query.terms() {
            if let Some(list) = model.term_weights_for(t) {
                for &(d, w) in list {
                    if d.index() < m {
                        score[d.index()] += w;
                    }
                }
            }
        }
        let mut docs: Vec<DocId> = (0..m as u32).map(DocId).collect();
        docs.sort_unstable_by(|&a, &b| {
            score[b.index()]
                .total_cmp(&score[a.index()])
                .then(base.position[a.index()].cmp(&base.position[b.index()]))
        });
        let entries = docs
            .into_iter()
            .take(depth)
            .map(|d| ScoredDoc {
                doc: d,
                score: score[d.index()],
            })
            .collect();
        Ranking {
            query: query.clone(),
            entries,
        }
    }
}

/// Extracts the sparse feature vector of a document against a base ranking
/// computed for the same query at depth >= 100 (or the whole collection when
/// it is smaller).
pub fn feature_vector(doc: DocId, query: &Query, base: &Ranking) -> SparseFeatures {
    debug_assert_eq!(base.query.terms(), query.terms(), "base ranking query mismatch");
    SparseFeatures {
        doc,
        base_rank: base.position_of(doc),
        terms: query.terms().to_vec(),
    }
}

/// A sparse linear model over the feature space. Immutable; lookup tables are
/// precomputed at construction.
#[derive(Debug, Clone)]
pub struct Model {
    rank_weights: [f64; NUM_RANK_FEATURES],
    /// Suffix sums: `rank_suffix[i]` = sum of `rank_weights[i..]`.
    rank_suffix: [f64; NUM_RANK_FEATURES + 1],
    /// (word, doc) weights in first-appearance order, preserved in files.
    terms: Vec<((WordId, DocId), f64)>,
    by_word: HashMap<WordId, Vec<(DocId, f64)>>,
    lookup: HashMap<(WordId, DocId), f64>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.rank_weights == other.rank_weights && self.terms == other.terms
    }
}

impl Model {
    pub fn new(rank_weights: [f64; NUM_RANK_FEATURES], terms: Vec<((WordId, DocId), f64)>) -> Model {
        let mut rank_suffix = [0.0; NUM_RANK_FEATURES + 1];
        for i in (0..NUM_RANK_FEATURES).rev() {
            rank_suffix[i] = rank_suffix[i + 1] + rank_weights[i];
        }
        let mut by_word: HashMap<WordId, Vec<(DocId, f64)>> = HashMap::new();
        let mut lookup = HashMap::with_capacity(terms.len());
        for &((w, d), v) in &terms {
            by_word.entry(w).or_default().push((d, v));
            lookup.insert((w, d), v);
        }
        for list in by_word.values_mut() {
            list.sort_unstable_by_key(|&(d, _)| d);
        }
        Model {
            rank_weights,
            rank_suffix,
            terms,
            by_word,
            lookup,
        }
    }

    /// The all-zero model.
    pub fn zero() -> Model {
        Model::new([0.0; NUM_RANK_FEATURES], Vec::new())
    }

    pub fn rank_weights(&self) -> &[f64; NUM_RANK_FEATURES] {
        &self.rank_weights
    }

    /// Term weights in first-appearance order.
    pub fn term_entries(&self) -> &[((WordId, DocId), f64)] {
        &self.terms
    }

    pub fn term_weight(&self, word: WordId, doc: DocId) -> f64 {
        self.lookup.get(&(word, doc)).copied().unwrap_or(0.0)
    }

    fn term_weights_for(&self, word: WordId) -> Option<&Vec<(DocId, f64)>> {
        self.by_word.get(&word)
    }

    /// Total rank-feature weight collected by a document at the given
    /// (1-based) base rank: the sum of weights at thresholds >= that rank.
    pub fn rank_suffix_weight(&self, base_rank: u32) -> f64 {
        self.rank_suffix[first_threshold_at_or_above(base_rank)]
    }
}

/// Sparse dot product of model weights and a feature vector.
pub fn model_score(model: &Model, features: &SparseFeatures) -> f64 {
    let rank_part = match features.base_rank {
        Some(r) => model.rank_suffix_weight(r),
        None => 0.0,
    };
    let term_part: f64 = features
        .terms
        .iter()
        .map(|&t| model.term_weight(t, features.doc))
        .sum();
    rank_part + term_part
}

/// Anything that can produce a ranking for a query. Implemented by the base
/// ranker and by model-backed rankers; the user simulator only sees this.
pub trait Ranker: Sync {
    fn rank(&self, query: &Query, depth: usize) -> Ranking;
}

/// Ranks by rel0 only.
pub struct BaseRanker<'a> {
    pub index: &'a Index,
}

impl Ranker for BaseRanker<'_> {
    fn rank(&self, query: &Query, depth: usize) -> Ranking {
        self.index.rank_base(query, depth)
    }
}

/// Ranks by a learned model.
pub struct ModelRanker<'a> {
    pub index: &'a Index,
    pub model: &'a Model,
}

impl Ranker for ModelRanker<'_> {
    fn rank(&self, query: &Query, depth: usize) -> Ranking {
        self.index.rank_learned(self.model, query, depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        build_lexicon, generate_corpus, Corpus, CorpusParams, Document, Lexicon, TopicSet,
    };

    /// Hand-assembled corpus: explicit word bags, no generation randomness.
    fn tiny_corpus(docs: Vec<Vec<(u32, u32)>>, num_words: usize) -> Corpus {
        let lexicon = build_lexicon(num_words, 1.0, 0).unwrap();
        let topic_set = TopicSet::from_parts(
            vec![(0..num_words as u32).map(WordId).collect()],
            num_words,
            1,
            1.0,
            &lexicon,
        )
        .unwrap();
        let documents = docs
            .into_iter()
            .enumerate()
            .map(|(i, words)| Document {
                id: DocId(i as u32),
                k_d: 0,
                topic_relevance: vec![],
                words: words.into_iter().map(|(w, c)| (WordId(w), c)).collect(),
            })
            .collect();
        Corpus {
            params: CorpusParams {
                num_words,
                num_documents: 0,
                ..CorpusParams::default()
            },
            lexicon,
            topic_set,
            documents,
        }
    }

    fn q(terms: &[u32]) -> Query {
        Query::new(terms.iter().map(|&t| WordId(t)).collect(), TopicId(0))
    }

    #[test]
    fn rel0_zero_without_overlap() {
        // d0 = {a a b}, d1 = {b}; query {a} overlaps only d0.
        let corpus = tiny_corpus(vec![vec![(0, 2), (1, 1)], vec![(1, 1)]], 2);
        let index = Index::build(&corpus);
        assert_eq!(index.rel0_score(DocId(1), &q(&[0])), 0.0);
        let s0 = index.rel0_score(DocId(0), &q(&[0]));
        assert!(s0 > 0.0);
    }

    #[test]
    fn rel0_parallel_vectors_score_one() {
        // d0 contains exactly the two query terms once each; with equal idf
        // the document vector is parallel to the query vector.
        let corpus = tiny_corpus(vec![vec![(0, 1), (1, 1)], vec![(2, 3)], vec![(2, 1)]], 3);
        let index = Index::build(&corpus);
        let s = index.rel0_score(DocId(0), &q(&[0, 1]));
        assert!((s - 1.0).abs() < 1e-12, "score {s}");
    }

    #[test]
    fn rel0_hand_computed_example() {
        let corpus = tiny_corpus(vec![vec![(0, 2), (1, 1)], vec![(1, 1)]], 2);
        let index = Index::build(&corpus);
        // idf(a) = ln(2/1), idf(b) = ln(2/2) = 0. d0 vector = (2 idf_a, 0),
        // parallel to the query vector (idf_a) -> cosine 1.
        let s0 = index.rel0_score(DocId(0), &q(&[0]));
        assert!((s0 - 1.0).abs() < 1e-12);
        assert!(s0 > index.rel0_score(DocId(1), &q(&[0])));
    }

    #[test]
    fn rank_base_all_zero_orders_by_id() {
        let corpus = tiny_corpus(vec![vec![(0, 1)], vec![(0, 1)], vec![(0, 1)]], 2);
        let index = Index::build(&corpus);
        // Query on word 1 which no document contains.
        let r = index.rank_base(&q(&[1]), 3);
        let ids: Vec<u32> = r.entries.iter().map(|e| e.doc.0).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(r.entries.iter().all(|e| e.score == 0.0));
    }

    #[test]
    fn rank_base_depth_one_is_argmax() {
        let corpus = tiny_corpus(
            vec![vec![(0, 1), (1, 9)], vec![(0, 5), (1, 5)], vec![(1, 1)]],
            2,
        );
        let index = Index::build(&corpus);
        let full = index.rank_base(&q(&[0]), 3);
        let top = index.rank_base(&q(&[0]), 1);
        assert_eq!(top.entries.len(), 1);
        assert_eq!(top.entries[0].doc, full.entries[0].doc);
    }

    #[test]
    fn feature_vector_thresholds() {
        let params = CorpusParams {
            num_documents: 150,
            ..CorpusParams::default()
        };
        let corpus = generate_corpus(&params).unwrap();
        let index = Index::build(&corpus);
        let query = Query::new(
            corpus.topic_set.words_of(TopicId(0))[..2].to_vec(),
            TopicId(0),
        );
        let base = index.rank_base(&query, 100);
        // Rank 1: all 28 features.
        let f1 = feature_vector(base.doc_at(1), &query, &base);
        assert_eq!(f1.rank_thresholds().count(), 28);
        // Rank 12: thresholds {15,20,...,100} = 18 features.
        let f12 = feature_vector(base.doc_at(12), &query, &base);
        assert_eq!(f12.base_rank, Some(12));
        assert_eq!(f12.rank_thresholds().count(), 18);
        assert_eq!(f12.rank_thresholds().next(), Some(15));
        // Term features: exactly |q| of them.
        assert_eq!(f12.terms.len(), 2);
        let entries = f12.entries();
        let term_count = entries
            .iter()
            .filter(|(id, _)| matches!(id, FeatureId::Term(..)))
            .count();
        assert_eq!(term_count, 2);
    }

    #[test]
    fn model_score_uniform_rank_weights() {
        let corpus = tiny_corpus(vec![vec![(0, 1)], vec![(1, 1)]], 2);
        let index = Index::build(&corpus);
        let query = q(&[0]);
        let base = index.rank_base(&query, 100);
        let model = Model::new([0.01; NUM_RANK_FEATURES], vec![]);
        let f = feature_vector(base.doc_at(1), &query, &base);
        let s = model_score(&model, &f);
        assert!((s - 0.28).abs() < 1e-12, "score {s}");
        assert_eq!(model_score(&Model::zero(), &f), 0.0);
    }

    #[test]
    fn model_score_term_weight_linearity() {
        let corpus = tiny_corpus(vec![vec![(0, 1)], vec![(1, 1)]], 2);
        let index = Index::build(&corpus);
        let query = q(&[0]);
        let base = index.rank_base(&query, 100);
        let f = feature_vector(DocId(0), &query, &base);
        let without = model_score(&Model::zero(), &f);
        let with = model_score(
            &Model::new([0.0; NUM_RANK_FEATURES], vec![((WordId(0), DocId(0)), 1.0)]),
            &f,
        );
        assert!((with - without - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_learned_zero_model_matches_base_order() {
        let params = CorpusParams {
            num_documents: 200,
            ..CorpusParams::default()
        };
        let corpus = generate_corpus(&params).unwrap();
        let index = Index::build(&corpus);
        let query = Query::new(
            corpus.topic_set.words_of(TopicId(3))[..2].to_vec(),
            TopicId(3),
        );
        let base = index.rank_base(&query, 200);
        let learned = index.rank_learned(&Model::zero(), &query, 200);
        let b: Vec<DocId> = base.entries.iter().map(|e| e.doc).collect();
        let l: Vec<DocId> = learned.entries.iter().map(|e| e.doc).collect();
        assert_eq!(b, l);
    }

    #[test]
    fn rank_learned_equal_rank_weights_preserve_top100() {
        let params = CorpusParams {
            num_documents: 300,
            ..CorpusParams::default()
        };
        let corpus = generate_corpus(&params).unwrap();
        let index = Index::build(&corpus);
        let query = Query::new(
            corpus.topic_set.words_of(TopicId(1))[..2].to_vec(),
            TopicId(1),
        );
        let base = index.rank_base(&query, 100);
        let learned = index.rank_learned(&Model::new([0.05; NUM_RANK_FEATURES], vec![]), &query, 100);
        let b: Vec<DocId> = base.entries.iter().map(|e| e.doc).collect();
        let l: Vec<DocId> = learned.entries.iter().map(|e| e.doc).collect();
        assert_eq!(b, l);
    }

    #[test]
    fn rank_learned_dominant_term_weight_wins() {
        let params = CorpusParams {
            num_documents: 200,
            ..CorpusParams::default()
        };
        let corpus = generate_corpus(&params).unwrap();
        let index = Index::build(&corpus);
        let term = corpus.topic_set.words_of(TopicId(2))[0];
        let query = Query::new(vec![term], TopicId(2));
        let target = DocId(157);
        let model = Model::new(
            [0.01; NUM_RANK_FEATURES],
            vec![((term, target), 100.0)],
        );
        let learned = index.rank_learned(&model, &query, 5);
        assert_eq!(learned.entries[0].doc, target);
    }

    #[test]
    fn duplicating_documents_preserves_score_order() {
        let docs = vec![
            vec![(0, 3), (1, 1)],
            vec![(0, 1), (1, 2)],
            vec![(1, 4)],
            vec![(0, 2), (2, 2)],
        ];
        let single = tiny_corpus(docs.clone(), 3);
        let mut doubled_docs = docs.clone();
        doubled_docs.extend(docs);
        let doubled = tiny_corpus(doubled_docs, 3);
        let index1 = Index::build(&single);
        let index2 = Index::build(&doubled);
        let query = q(&[0, 1]);
        let s1: Vec<f64> = (0..4).map(|i| index1.rel0_score(DocId(i), &query)).collect();
        let s2: Vec<f64> = (0..4).map(|i| index2.rel0_score(DocId(i), &query)).collect();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(
                    s1[a].partial_cmp(&s1[b]).unwrap(),
                    s2[a].partial_cmp(&s2[b]).unwrap(),
                    "order of docs {a},{b} changed"
                );
            }
        }
    }
}
