//! Osmot: a closed-loop simulation and learning library for ranked retrieval
//! from implicit click feedback.
//!
//! The pipeline is: generate a synthetic corpus with planted topic relevance
//! ([`corpus`]), rank it with a TFIDF base ranker and a learnable linear model
//! ([`retrieval`]), simulate users who click on results ([`usersim`]), mine
//! pairwise preferences from their click logs ([`feedback`]), train a ranking
//! SVM on those preferences ([`learner`]), and drive the loop plus parameter
//! sweeps from the experiment harness ([`harness`]).

pub mod corpus;
pub mod feedback;
pub mod harness;
pub mod learner;
pub mod retrieval;
pub mod seed;
pub mod usersim;

pub use corpus::{Corpus, CorpusParams, DocId, TopicId, WordId};
pub use retrieval::{Index, Model, Query, Ranker, Ranking};
pub use usersim::{BehaviorConfig, SessionLog};
