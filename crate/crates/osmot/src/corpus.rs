//! Synthetic document collection with planted topic relevance.
//!
//! A corpus is built from a Zipf-distributed lexicon and a set of topics,
//! each topic being a fixed-size subset of the lexicon. Every document draws
//! a number of topics `k_d` binomially, fills itself with words sampled from
//! those topics (or from the whole lexicon when `k_d = 0`), and records a
//! ground-truth relevance of `1/k_d` per topic draw. That planted relevance
//! is what simulated users ultimately search for and what evaluation measures
//! against.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::seed::stream_rng;

/// Identifier of a lexicon word. Ids are dense `0..num_words`; smaller ids
/// are more frequent under the Zipf law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordId(pub u32);

/// Identifier of a topic. Ids are dense `0..num_topics`; smaller ids are more
/// popular under the topic Zipf law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TopicId(pub u32);

/// Identifier of a document, dense `0..num_documents`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocId(pub u32);

impl WordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TopicId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl DocId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{kind} id {id} out of range (max {max})")]
    IdOutOfRange {
        kind: &'static str,
        id: u32,
        max: u32,
    },
}

/// Discrete sampler over ranks `0..n` with probability proportional to
/// `1/(rank+1)^exponent`. Sampling is a binary search on the cumulative
/// table, so a given rng stream always yields the same sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipfTable {
    frequencies: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ZipfTable {
    pub fn new(n: usize, exponent: f64) -> Result<Self, CorpusError> {
        if n == 0 {
            return Err(CorpusError::InvalidParameter(
                "zipf table needs at least one element".into(),
            ));
        }
        if !(exponent > 0.0) {
            return Err(CorpusError::InvalidParameter(format!(
                "zipf exponent must be positive, got {exponent}"
            )));
        }
        let raw: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-exponent)).collect();
        let total: f64 = raw.iter().sum();
        let frequencies: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for f in &frequencies {
            acc += f;
            cumulative.push(acc);
        }
        // Guard the tail against rounding so sampling never falls off the end.
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(ZipfTable {
            frequencies,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequency(&self, rank: usize) -> f64 {
        self.frequencies[rank]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// Weighted sampler over an explicit item set (used for drawing words within
/// a topic, where weights are the global word frequencies renormalized).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedWords {
    words: Vec<WordId>,
    cumulative: Vec<f64>,
}

impl WeightedWords {
    fn new(words: Vec<WordId>, weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut cumulative = Vec::with_capacity(words.len());
        let mut acc = 0.0;
        for w in weights {
            acc += w / total;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        WeightedWords { words, cumulative }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> WordId {
        let u: f64 = rng.random();
        self.words[self.cumulative.partition_point(|&c| c <= u)]
    }
}

/// The word universe: Zipf-distributed frequencies over `num_words` words.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub num_words: usize,
    pub zipf_exponent: f64,
    table: ZipfTable,
}

impl Lexicon {
    /// Relative frequency of a word; proportional to `1/(id+1)^exponent` and
    /// normalized to sum to one.
    pub fn frequency(&self, word: WordId) -> f64 {
        self.table.frequency(word.index())
    }

    pub fn sample_word<R: Rng>(&self, rng: &mut R) -> WordId {
        WordId(self.table.sample(rng) as u32)
    }

    pub fn words(&self) -> impl Iterator<Item = WordId> {
        (0..self.num_words as u32).map(WordId)
    }
}

/// Builds the Zipf lexicon.
pub fn build_lexicon(
    num_words: usize,
    zipf_exponent: f64,
    _seed: u64,
) -> Result<Lexicon, CorpusError> {
    if num_words == 0 {
        return Err(CorpusError::InvalidParameter(
            "lexicon needs at least one word".into(),
        ));
    }
    if !(zipf_exponent > 0.0) {
        return Err(CorpusError::InvalidParameter(format!(
            "word zipf exponent must be positive, got {zipf_exponent}"
        )));
    }
    Ok(Lexicon {
        num_words,
        zipf_exponent,
        table: ZipfTable::new(num_words, zipf_exponent)?,
    })
}

/// A set of topics, each an `N`-word subset of the lexicon, plus the Zipf law
/// used to pick topics by popularity.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicSet {
    pub topics: Vec<Vec<WordId>>,
    pub words_per_topic: usize,
    pub ambiguity: usize,
    pub zipf_exponent: f64,
    popularity: ZipfTable,
    samplers: Vec<WeightedWords>,
}

impl TopicSet {
    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn words_of(&self, topic: TopicId) -> &[WordId] {
        &self.topics[topic.index()]
    }

    /// Draws a topic id from the popularity Zipf law.
    pub fn sample_topic<R: Rng>(&self, rng: &mut R) -> TopicId {
        TopicId(self.popularity.sample(rng) as u32)
    }

    pub fn popularity(&self, topic: TopicId) -> f64 {
        self.popularity.frequency(topic.index())
    }

    /// Draws one word from a topic, weighted by global word frequency
    /// renormalized within the topic.
    pub fn sample_word_in_topic<R: Rng>(&self, topic: TopicId, rng: &mut R) -> WordId {
        self.samplers[topic.index()].sample(rng)
    }

    fn rebuild_samplers(topics: &[Vec<WordId>], lexicon: &Lexicon) -> Vec<WeightedWords> {
        topics
            .iter()
            .map(|words| {
                let weights: Vec<f64> = words.iter().map(|&w| lexicon.frequency(w)).collect();
                WeightedWords::new(words.clone(), &weights)
            })
            .collect()
    }

    /// Reassembles a topic set from explicit word lists (corpus file loading).
    pub fn from_parts(
        topics: Vec<Vec<WordId>>,
        words_per_topic: usize,
        ambiguity: usize,
        zipf_exponent: f64,
        lexicon: &Lexicon,
    ) -> Result<Self, CorpusError> {
        let popularity = ZipfTable::new(topics.len(), zipf_exponent)?;
        let samplers = Self::rebuild_samplers(&topics, lexicon);
        Ok(TopicSet {
            topics,
            words_per_topic,
            ambiguity,
            zipf_exponent,
            popularity,
            samplers,
        })
    }
}

/// Builds the topic set.
///
/// With `ambiguity == 1` the topics partition a prefix of a random word
/// permutation, so no word belongs to two topics. With `ambiguity >= 2` each
/// topic samples its words uniformly without replacement, independently of
/// other topics, and the cardinalities must satisfy
/// `num_topics * words_per_topic == ambiguity * num_words` so that the mean
/// number of topics per word comes out at exactly `ambiguity`.
pub fn build_topics(
    lexicon: &Lexicon,
    num_topics: usize,
    words_per_topic: usize,
    ambiguity: usize,
    zipf_exponent_topics: f64,
    seed: u64,
) -> Result<TopicSet, CorpusError> {
    if num_topics == 0 || words_per_topic == 0 {
        return Err(CorpusError::InvalidParameter(
            "need at least one topic and one word per topic".into(),
        ));
    }
    if words_per_topic > lexicon.num_words {
        return Err(CorpusError::InvalidParameter(format!(
            "topic size {words_per_topic} exceeds lexicon size {}",
            lexicon.num_words
        )));
    }
    match ambiguity {
        0 => {
            return Err(CorpusError::InvalidParameter(
                "ambiguity must be at least 1".into(),
            ))
        }
        1 => {
            if num_topics * words_per_topic > lexicon.num_words {
                return Err(CorpusError::InvalidParameter(format!(
                    "ambiguity 1 needs num_topics * words_per_topic <= num_words \
                     ({num_topics} * {words_per_topic} > {})",
                    lexicon.num_words
                )));
            }
        }
        a => {
            if num_topics * words_per_topic != a * lexicon.num_words {
                return Err(CorpusError::InvalidParameter(format!(
                    "ambiguity {a} needs num_topics * words_per_topic == ambiguity * num_words \
                     ({num_topics} * {words_per_topic} != {a} * {})",
                    lexicon.num_words
                )));
            }
        }
    }

    let mut rng = stream_rng(seed, 0);
    let topics: Vec<Vec<WordId>> = if ambiguity == 1 {
        let mut pool: Vec<WordId> = lexicon.words().collect();
        // Fisher-Yates over the whole pool, then take disjoint chunks.
        for i in (1..pool.len()).rev() {
            let j = rng.random_range(0..=i);
            pool.swap(i, j);
        }
        (0..num_topics)
            .map(|t| {
                let mut words = pool[t * words_per_topic..(t + 1) * words_per_topic].to_vec();
                words.sort_unstable();
                words
            })
            .collect()
    } else {
        (0..num_topics)
            .map(|_| {
                let mut words = sample_without_replacement(lexicon.num_words, words_per_topic, &mut rng);
                words.sort_unstable();
                words.into_iter().map(|i| WordId(i as u32)).collect()
            })
            .collect()
    };

    TopicSet::from_parts(
        topics,
        words_per_topic,
        ambiguity,
        zipf_exponent_topics,
        lexicon,
    )
}

/// Uniform sample of `k` distinct values from `0..n` (partial Fisher-Yates on
/// an index map, O(k) memory for small k).
fn sample_without_replacement<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    use std::collections::HashMap;
    let mut swapped: HashMap<usize, usize> = HashMap::new();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        let vi = *swapped.get(&i).unwrap_or(&i);
        let vj = *swapped.get(&j).unwrap_or(&j);
        out.push(vj);
        swapped.insert(j, vi);
    }
    out
}

/// Mean number of topics each lexicon word belongs to.
pub fn ambiguity_stats(topic_set: &TopicSet, lexicon: &Lexicon) -> f64 {
    let memberships: usize = topic_set.topics.iter().map(|t| t.len()).sum();
    memberships as f64 / lexicon.num_words as f64
}

/// One synthetic document: a bag of words plus the planted per-topic
/// relevance accumulated during generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: DocId,
    /// Number of topic draws; zero means the document was sampled from the
    /// whole lexicon and is relevant to nothing.
    pub k_d: u32,
    /// Sorted `(topic, relevance)` pairs; relevances are positive multiples
    /// of `1/k_d` and sum to one when `k_d >= 1`.
    pub topic_relevance: Vec<(TopicId, f64)>,
    /// Sorted `(word, count)` pairs; counts sum to the document length.
    pub words: Vec<(WordId, u32)>,
}

impl Document {
    pub fn total_words(&self) -> u32 {
        self.words.iter().map(|&(_, c)| c).sum()
    }

    pub fn relevance_to(&self, topic: TopicId) -> f64 {
        self.topic_relevance
            .binary_search_by_key(&topic, |&(t, _)| t)
            .map(|i| self.topic_relevance[i].1)
            .unwrap_or(0.0)
    }

    pub fn count_of(&self, word: WordId) -> u32 {
        self.words
            .binary_search_by_key(&word, |&(w, _)| w)
            .map(|i| self.words[i].1)
            .unwrap_or(0)
    }
}

/// All generation constants plus the master seed. Regenerating from equal
/// params yields a bit-identical corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusParams {
    pub num_words: usize,
    pub zipf_exponent_words: f64,
    pub num_topics: usize,
    pub words_per_topic: usize,
    pub ambiguity: usize,
    pub zipf_exponent_topics: f64,
    pub doc_length: usize,
    pub max_topics_per_doc: u32,
    pub binomial_p: f64,
    pub num_documents: usize,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            num_words: 1000,
            zipf_exponent_words: 1.0,
            num_topics: 100,
            words_per_topic: 20,
            ambiguity: 2,
            zipf_exponent_topics: 1.0,
            doc_length: 100,
            max_topics_per_doc: 3,
            binomial_p: 0.5,
            num_documents: 3000,
            seed: 42,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.doc_length == 0 {
            return Err(CorpusError::InvalidParameter(
                "doc_length must be at least 1".into(),
            ));
        }
        if self.max_topics_per_doc == 0 {
            return Err(CorpusError::InvalidParameter(
                "max_topics_per_doc must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.binomial_p) {
            return Err(CorpusError::InvalidParameter(format!(
                "binomial_p must be in [0,1], got {}",
                self.binomial_p
            )));
        }
        if self.num_documents == 0 {
            return Err(CorpusError::InvalidParameter(
                "num_documents must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The generated collection: lexicon, topics, documents and the parameters
/// that produced them. Immutable once built, safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub params: CorpusParams,
    pub lexicon: Lexicon,
    pub topic_set: TopicSet,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn document(&self, id: DocId) -> Result<&Document, CorpusError> {
        self.documents
            .get(id.index())
            .ok_or(CorpusError::IdOutOfRange {
                kind: "document",
                id: id.0,
                max: self.documents.len().saturating_sub(1) as u32,
            })
    }
}

/// Generates one document.
///
/// `k_d` is drawn `Binomial(max_topics, p)`. With `k_d = 0` all `doc_length`
/// words come from the whole lexicon; otherwise each of the `k_d` topic draws
/// picks a topic from the popularity Zipf law, contributes
/// `doc_length / k_d` words from it (the last draw is topped up so counts sum
/// to `doc_length` exactly) and adds `1/k_d` relevance to that topic.
pub fn generate_document<R: Rng>(
    id: DocId,
    topic_set: &TopicSet,
    lexicon: &Lexicon,
    doc_length: usize,
    max_topics: u32,
    binomial_p: f64,
    rng: &mut R,
) -> Document {
    let binomial = Binomial::new(max_topics as u64, binomial_p).expect("binomial params validated");
    let k_d = binomial.sample(rng) as u32;

    let mut counts: std::collections::BTreeMap<WordId, u32> = std::collections::BTreeMap::new();
    let mut relevance: std::collections::BTreeMap<TopicId, f64> = std::collections::BTreeMap::new();

    if k_d == 0 {
        for _ in 0..doc_length {
            *counts.entry(lexicon.sample_word(rng)).or_insert(0) += 1;
        }
    } else {
        let per_draw = doc_length / k_d as usize;
        for draw in 0..k_d {
            let topic = topic_set.sample_topic(rng);
            let n_words = if draw == k_d - 1 {
                doc_length - per_draw * (k_d as usize - 1)
            } else {
                per_draw
            };
            for _ in 0..n_words {
                *counts
                    .entry(topic_set.sample_word_in_topic(topic, rng))
                    .or_insert(0) += 1;
            }
            *relevance.entry(topic).or_insert(0.0) += 1.0 / k_d as f64;
        }
    }

    Document {
        id,
        k_d,
        topic_relevance: relevance.into_iter().collect(),
        words: counts.into_iter().collect(),
    }
}

/// Generates the full corpus deterministically from `params`.
pub fn generate_corpus(params: &CorpusParams) -> Result<Corpus, CorpusError> {
    params.validate()?;
    let lexicon = build_lexicon(params.num_words, params.zipf_exponent_words, params.seed)?;
    let topic_set = build_topics(
        &lexicon,
        params.num_topics,
        params.words_per_topic,
        params.ambiguity,
        params.zipf_exponent_topics,
        params.seed,
    )?;
    // Each document gets its own stream so generation order is irrelevant.
    let documents: Vec<Document> = (0..params.num_documents)
        .map(|i| {
            let mut rng = stream_rng(params.seed, 1 + i as u64);
            generate_document(
                DocId(i as u32),
                &topic_set,
                &lexicon,
                params.doc_length,
                params.max_topics_per_doc,
                params.binomial_p,
                &mut rng,
            )
        })
        .collect();
    Ok(Corpus {
        params: params.clone(),
        lexicon,
        topic_set,
        documents,
    })
}

/// Planted relevance of a document to a topic; zero when the topic was never
/// drawn for that document.
pub fn true_relevance(corpus: &Corpus, doc: DocId, topic: TopicId) -> Result<f64, CorpusError> {
    if topic.index() >= corpus.topic_set.num_topics() {
        return Err(CorpusError::IdOutOfRange {
            kind: "topic",
            id: topic.0,
            max: corpus.topic_set.num_topics().saturating_sub(1) as u32,
        });
    }
    Ok(corpus.document(doc)?.relevance_to(topic))
}
