//! Plain-text persistence for every artifact: corpus, model, session logs,
//! preferences and results. All formats are tab-separated with a versioned
//! header line and reload bit-exactly; floats use the shortest
//! round-tripping decimal form except model weights, which are printed with
//! 12 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{
    build_lexicon, Corpus, CorpusParams, DocId, Document, TopicId, TopicSet, WordId,
};
use crate::feedback::{Preference, PreferenceSet, Strategy};
use crate::retrieval::{Model, Query, NUM_RANK_FEATURES, RANK_THRESHOLDS};
use crate::usersim::{QueryRecord, SessionLog};

use super::exp::ResultRecord;
use super::HarnessError;

const CORPUS_HEADER: &str = "osmot-corpus-v1";
const MODEL_HEADER: &str = "osmot-model-v1";
const LOGS_HEADER: &str = "osmot-logs-v1";
const PREFS_HEADER: &str = "osmot-prefs-v1";
const RESULTS_HEADER: &str = "experiment,cell,replicate,iteration,metric,value";

/// Placeholder for empty list fields.
const EMPTY: &str = "-";

fn perr(line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        line,
        message: message.into(),
    }
}

fn check_header(text: &str, expected: &str) -> Result<(), HarnessError> {
    match text.lines().next() {
        Some(first) if first == expected => Ok(()),
        Some(first) => Err(HarnessError::Header {
            expected: expected.to_string(),
            found: first.to_string(),
        }),
        None => Err(HarnessError::Header {
            expected: expected.to_string(),
            found: "<empty file>".to_string(),
        }),
    }
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    line: usize,
    what: &str,
) -> Result<T, HarnessError> {
    field
        .parse()
        .map_err(|_| perr(line, format!("cannot parse {what} from {field:?}")))
}

fn split_list(field: &str) -> Vec<&str> {
    if field == EMPTY || field.is_empty() {
        Vec::new()
    } else {
        field.split(',').collect()
    }
}

fn join_or_empty(items: &[String]) -> String {
    if items.is_empty() {
        EMPTY.to_string()
    } else {
        items.join(",")
    }
}

// ---------------------------------------------------------------------------
// Corpus

pub fn corpus_to_string(corpus: &Corpus) -> String {
    let p = &corpus.params;
    let mut out = String::new();
    writeln!(
        out,
        "{CORPUS_HEADER}\tnum_words={}\tzipf_exponent_words={}\tnum_topics={}\
         \twords_per_topic={}\tambiguity={}\tzipf_exponent_topics={}\tdoc_length={}\
         \tmax_topics_per_doc={}\tbinomial_p={}\tnum_documents={}\tseed={}",
        p.num_words,
        p.zipf_exponent_words,
        p.num_topics,
        p.words_per_topic,
        p.ambiguity,
        p.zipf_exponent_topics,
        p.doc_length,
        p.max_topics_per_doc,
        p.binomial_p,
        p.num_documents,
        p.seed
    )
    .unwrap();
    for (tid, words) in corpus.topic_set.topics.iter().enumerate() {
        let ids: Vec<String> = words.iter().map(|w| w.0.to_string()).collect();
        writeln!(out, "topic\t{tid}\t{}", ids.join(",")).unwrap();
    }
    for doc in &corpus.documents {
        let rels: Vec<String> = doc
            .topic_relevance
            .iter()
            .map(|(t, r)| format!("{}:{r}", t.0))
            .collect();
        let words: Vec<String> = doc
            .words
            .iter()
            .map(|(w, c)| format!("{}:{c}", w.0))
            .collect();
        writeln!(
            out,
            "doc\t{}\t{}\t{}\t{}",
            doc.id.0,
            doc.k_d,
            join_or_empty(&rels),
            join_or_empty(&words)
        )
        .unwrap();
    }
    out
}

fn parse_corpus_header(line: &str) -> Result<CorpusParams, HarnessError> {
    let mut params = CorpusParams::default();
    for field in line.split('\t').skip(1) {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| perr(1, format!("bad header field {field:?}")))?;
        match key {
            "num_words" => params.num_words = parse_field(value, 1, key)?,
            "zipf_exponent_words" => params.zipf_exponent_words = parse_field(value, 1, key)?,
            "num_topics" => params.num_topics = parse_field(value, 1, key)?,
            "words_per_topic" => params.words_per_topic = parse_field(value, 1, key)?,
            "ambiguity" => params.ambiguity = parse_field(value, 1, key)?,
            "zipf_exponent_topics" => params.zipf_exponent_topics = parse_field(value, 1, key)?,
            "doc_length" => params.doc_length = parse_field(value, 1, key)?,
            "max_topics_per_doc" => params.max_topics_per_doc = parse_field(value, 1, key)?,
            "binomial_p" => params.binomial_p = parse_field(value, 1, key)?,
            "num_documents" => params.num_documents = parse_field(value, 1, key)?,
            "seed" => params.seed = parse_field(value, 1, key)?,
            _ => return Err(perr(1, format!("unknown corpus header key {key:?}"))),
        }
    }
    Ok(params)
}

pub fn corpus_from_str(text: &str) -> Result<Corpus, HarnessError> {
    // The corpus header carries its params on the version line itself.
    let first = text.lines().next().unwrap_or("");
    let format_id = first.split('\t').next().unwrap_or("");
    if format_id != CORPUS_HEADER {
        return Err(HarnessError::Header {
            expected: CORPUS_HEADER.to_string(),
            found: format_id.to_string(),
        });
    }
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().unwrap();
    let params = parse_corpus_header(header)?;
    let lexicon = build_lexicon(params.num_words, params.zipf_exponent_words, params.seed)
        .map_err(|e| perr(1, e.to_string()))?;

    let mut topics: Vec<Vec<WordId>> = Vec::with_capacity(params.num_topics);
    let mut documents: Vec<Document> = Vec::with_capacity(params.num_documents);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.first().copied() {
            Some("topic") => {
                if fields.len() != 3 {
                    return Err(perr(lineno, "topic line needs 3 fields"));
                }
                let tid: usize = parse_field(fields[1], lineno, "topic id")?;
                if tid != topics.len() {
                    return Err(perr(lineno, format!("topic id {tid} out of order")));
                }
                let words = split_list(fields[2])
                    .iter()
                    .map(|f| parse_field::<u32>(f, lineno, "word id").map(WordId))
                    .collect::<Result<Vec<_>, _>>()?;
                topics.push(words);
            }
            Some("doc") => {
                if fields.len() != 5 {
                    return Err(perr(lineno, "doc line needs 5 fields"));
                }
                let id: u32 = parse_field(fields[1], lineno, "doc id")?;
                if id as usize != documents.len() {
                    return Err(perr(lineno, format!("doc id {id} out of order")));
                }
                let k_d: u32 = parse_field(fields[2], lineno, "k_d")?;
                let mut topic_relevance = Vec::new();
                for pair in split_list(fields[3]) {
                    let (t, r) = pair
                        .split_once(':')
                        .ok_or_else(|| perr(lineno, format!("bad relevance pair {pair:?}")))?;
                    topic_relevance.push((
                        TopicId(parse_field(t, lineno, "topic id")?),
                        parse_field(r, lineno, "relevance")?,
                    ));
                }
                let mut words = Vec::new();
                for pair in split_list(fields[4]) {
                    let (w, c) = pair
                        .split_once(':')
                        .ok_or_else(|| perr(lineno, format!("bad word pair {pair:?}")))?;
                    words.push((
                        WordId(parse_field(w, lineno, "word id")?),
                        parse_field(c, lineno, "count")?,
                    ));
                }
                documents.push(Document {
                    id: DocId(id),
                    k_d,
                    topic_relevance,
                    words,
                });
            }
            _ => return Err(perr(lineno, format!("unrecognized line kind {line:?}"))),
        }
    }
    if topics.len() != params.num_topics {
        return Err(perr(
            0,
            format!(
                "expected {} topics, found {}",
                params.num_topics,
                topics.len()
            ),
        ));
    }
    if documents.len() != params.num_documents {
        return Err(perr(
            0,
            format!(
                "expected {} documents, found {}",
                params.num_documents,
                documents.len()
            ),
        ));
    }
    let topic_set = TopicSet::from_parts(
        topics,
        params.words_per_topic,
        params.ambiguity,
        params.zipf_exponent_topics,
        &lexicon,
    )
    .map_err(|e| perr(0, e.to_string()))?;
    Ok(Corpus {
        params,
        lexicon,
        topic_set,
        documents,
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, corpus_to_string(corpus))?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus, HarnessError> {
    corpus_from_str(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Model

fn fmt_weight(w: f64) -> String {
    format!("{w:.11e}")
}

pub fn model_to_string(model: &Model) -> String {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    for (i, &thr) in RANK_THRESHOLDS.iter().enumerate() {
        let w = model.rank_weights()[i];
        if w != 0.0 {
            writeln!(out, "rank\t{thr}\t{}", fmt_weight(w)).unwrap();
        }
    }
    for &((word, doc), w) in model.term_entries() {
        writeln!(out, "term\t{}\t{}\t{}", word.0, doc.0, fmt_weight(w)).unwrap();
    }
    out
}

pub fn model_from_str(text: &str) -> Result<Model, HarnessError> {
    check_header(text, MODEL_HEADER)?;
    let mut rank_weights = [0.0f64; NUM_RANK_FEATURES];
    let mut terms: Vec<((WordId, DocId), f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.first().copied() {
            Some("rank") => {
                if fields.len() != 3 {
                    return Err(perr(lineno, "rank line needs 3 fields"));
                }
                let thr: u32 = parse_field(fields[1], lineno, "threshold")?;
                let pos = RANK_THRESHOLDS
                    .iter()
                    .position(|&k| k == thr)
                    .ok_or_else(|| perr(lineno, format!("unknown rank threshold {thr}")))?;
                rank_weights[pos] = parse_field(fields[2], lineno, "weight")?;
            }
            Some("term") => {
                if fields.len() != 4 {
                    return Err(perr(lineno, "term line needs 4 fields"));
                }
                terms.push((
                    (
                        WordId(parse_field(fields[1], lineno, "word id")?),
                        DocId(parse_field(fields[2], lineno, "doc id")?),
                    ),
                    parse_field(fields[3], lineno, "weight")?,
                ));
            }
            _ => return Err(perr(lineno, format!("unrecognized line kind {line:?}"))),
        }
    }
    Ok(Model::new(rank_weights, terms))
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, HarnessError> {
    model_from_str(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Session logs

pub fn logs_to_string(logs: &[SessionLog]) -> String {
    let mut out = String::new();
    out.push_str(LOGS_HEADER);
    out.push('\n');
    for log in logs {
        for (qi, rec) in log.records.iter().enumerate() {
            let terms: Vec<String> = rec.query.terms().iter().map(|t| t.0.to_string()).collect();
            let results: Vec<String> = rec.results.iter().map(|d| d.0.to_string()).collect();
            let clicks: Vec<String> = rec.clicks.iter().map(|c| c.to_string()).collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                log.chain_id,
                log.user_id,
                log.question_topic.0,
                qi + 1,
                terms.join(","),
                join_or_empty(&results),
                rec.looks,
                join_or_empty(&clicks),
                log.satisfied as u8
            )
            .unwrap();
        }
    }
    out
}

pub fn logs_from_str(text: &str) -> Result<Vec<SessionLog>, HarnessError> {
    check_header(text, LOGS_HEADER)?;
    let mut logs: Vec<SessionLog> = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(perr(
                lineno,
                format!("log line needs 9 fields, found {}", fields.len()),
            ));
        }
        let chain_id: u32 = parse_field(fields[0], lineno, "chain id")?;
        let user_id: u32 = parse_field(fields[1], lineno, "user id")?;
        let topic = TopicId(parse_field(fields[2], lineno, "topic id")?);
        let q_index: usize = parse_field(fields[3], lineno, "query index")?;
        let terms = split_list(fields[4])
            .iter()
            .map(|f| parse_field::<u32>(f, lineno, "term id").map(WordId))
            .collect::<Result<Vec<_>, _>>()?;
        if terms.is_empty() {
            return Err(perr(lineno, "query must have at least one term"));
        }
        let results = split_list(fields[5])
            .iter()
            .map(|f| parse_field::<u32>(f, lineno, "doc id").map(DocId))
            .collect::<Result<Vec<_>, _>>()?;
        let looks: usize = parse_field(fields[6], lineno, "looks")?;
        let clicks = split_list(fields[7])
            .iter()
            .map(|f| parse_field::<usize>(f, lineno, "click position"))
            .collect::<Result<Vec<_>, _>>()?;
        let satisfied = match fields[8] {
            "0" => false,
            "1" => true,
            other => return Err(perr(lineno, format!("bad satisfied flag {other:?}"))),
        };
        let record = QueryRecord {
            query: Query::new(terms, topic),
            results,
            looks,
            clicks,
        };

        let start_new = match logs.last() {
            Some(last) => last.chain_id != chain_id || q_index == 1,
            None => true,
        };
        if start_new {
            if q_index != 1 {
                return Err(perr(lineno, format!("chain must start at q_index 1, got {q_index}")));
            }
            logs.push(SessionLog {
                chain_id,
                user_id,
                question_topic: topic,
                records: vec![record],
                satisfied,
            });
        } else {
            let chain = logs.last_mut().unwrap();
            if q_index != chain.records.len() + 1 {
                return Err(perr(
                    lineno,
                    format!(
                        "expected q_index {}, got {q_index}",
                        chain.records.len() + 1
                    ),
                ));
            }
            chain.records.push(record);
            chain.satisfied = satisfied;
        }
    }
    Ok(logs)
}

pub fn save_logs(logs: &[SessionLog], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, logs_to_string(logs))?;
    Ok(())
}

pub fn load_logs(path: &Path) -> Result<Vec<SessionLog>, HarnessError> {
    logs_from_str(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Preferences

pub fn prefs_to_string(prefs: &PreferenceSet) -> String {
    let mut out = String::new();
    out.push_str(PREFS_HEADER);
    out.push('\n');
    for p in prefs.iter() {
        let terms: Vec<String> = p.query.terms().iter().map(|t| t.0.to_string()).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            p.query.topic.0,
            terms.join(","),
            p.winner.0,
            p.loser.0,
            p.strategy.name()
        )
        .unwrap();
    }
    out
}

pub fn prefs_from_str(text: &str) -> Result<PreferenceSet, HarnessError> {
    check_header(text, PREFS_HEADER)?;
    let mut prefs = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(perr(
                lineno,
                format!("preference line needs 5 fields, found {}", fields.len()),
            ));
        }
        let topic = TopicId(parse_field(fields[0], lineno, "topic id")?);
        let terms = split_list(fields[1])
            .iter()
            .map(|f| parse_field::<u32>(f, lineno, "term id").map(WordId))
            .collect::<Result<Vec<_>, _>>()?;
        if terms.is_empty() {
            return Err(perr(lineno, "preference query must have at least one term"));
        }
        let winner = DocId(parse_field(fields[2], lineno, "winner doc")?);
        let loser = DocId(parse_field(fields[3], lineno, "loser doc")?);
        if winner == loser {
            return Err(perr(lineno, "winner and loser must differ"));
        }
        let strategy = Strategy::from_name(fields[4])
            .ok_or_else(|| perr(lineno, format!("unknown strategy {:?}", fields[4])))?;
        prefs.push(Preference {
            query: Query::new(terms, topic),
            winner,
            loser,
            strategy,
        });
    }
    Ok(PreferenceSet { prefs })
}

pub fn save_prefs(prefs: &PreferenceSet, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, prefs_to_string(prefs))?;
    Ok(())
}

pub fn load_prefs(path: &Path) -> Result<PreferenceSet, HarnessError> {
    prefs_from_str(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Results CSV

pub fn render_results_csv(records: &[ResultRecord]) -> String {
    let mut out = String::new();
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.experiment, r.cell, r.replicate, r.iteration, r.metric, r.value
        )
        .unwrap();
    }
    out
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRecord>, HarnessError> {
    check_header(text, RESULTS_HEADER)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(perr(
                lineno,
                format!("results line needs 6 fields, found {}", fields.len()),
            ));
        }
        records.push(ResultRecord {
            experiment: fields[0].to_string(),
            cell: fields[1].to_string(),
            replicate: parse_field(fields[2], lineno, "replicate")?,
            iteration: parse_field(fields[3], lineno, "iteration")?,
            metric: fields[4].to_string(),
            value: fields[5].to_string(),
        });
    }
    Ok(records)
}

pub fn save_results(records: &[ResultRecord], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, render_results_csv(records))?;
    Ok(())
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    parse_results_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_corpus;
    use crate::retrieval::Index;
    use crate::usersim::{simulate_population, BehaviorConfig};

    fn small_corpus() -> Corpus {
        generate_corpus(&CorpusParams {
            num_documents: 80,
            ..CorpusParams::default()
        })
        .unwrap()
    }

    #[test]
    fn corpus_round_trip_is_identity() {
        let corpus = small_corpus();
        let text = corpus_to_string(&corpus);
        let back = corpus_from_str(&text).unwrap();
        assert_eq!(corpus, back);
        assert_eq!(text, corpus_to_string(&back));
    }

    #[test]
    fn corpus_header_mismatch_rejected() {
        assert!(matches!(
            corpus_from_str("osmot-corpus-v0\tnum_words=10\n"),
            Err(HarnessError::Header { .. })
        ));
    }

    #[test]
    fn truncated_corpus_names_line() {
        let corpus = small_corpus();
        let text = corpus_to_string(&corpus);
        // Chop the middle of the final doc line: its field count drops.
        let cut = text.trim_end().rfind('\t').unwrap();
        let err = corpus_from_str(&text[..cut]).unwrap_err();
        match err {
            HarnessError::Parse { line, .. } => assert!(line > 1, "line {line}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn logs_round_trip() {
        let corpus = small_corpus();
        let index = Index::build(&corpus);
        let ranker = crate::retrieval::BaseRanker { index: &index };
        let logs = simulate_population(60, &ranker, &corpus, &BehaviorConfig::default(), 17);
        let text = logs_to_string(&logs);
        let back = logs_from_str(&text).unwrap();
        assert_eq!(logs, back);
        assert_eq!(text, logs_to_string(&back));
    }

    #[test]
    fn truncated_log_line_is_an_error() {
        let text = format!("{LOGS_HEADER}\n0\t0\t5\t1\t3,4\n");
        let err = logs_from_str(&text).unwrap_err();
        match err {
            HarnessError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("9 fields"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn prefs_round_trip() {
        let corpus = small_corpus();
        let index = Index::build(&corpus);
        let ranker = crate::retrieval::BaseRanker { index: &index };
        let logs = simulate_population(120, &ranker, &corpus, &BehaviorConfig::default(), 23);
        let prefs = crate::feedback::extract_all(&logs);
        assert!(!prefs.is_empty());
        let text = prefs_to_string(&prefs);
        let back = prefs_from_str(&text).unwrap();
        assert_eq!(prefs, back);
        assert_eq!(text, prefs_to_string(&back));
    }

    #[test]
    fn model_file_round_trips_at_12_digits() {
        let mut rank = [0.0; NUM_RANK_FEATURES];
        for (i, w) in rank.iter_mut().enumerate() {
            *w = 0.01 + i as f64 * 0.001234567890123;
        }
        let model = Model::new(
            rank,
            vec![
                ((WordId(5), DocId(7)), 1.5),
                ((WordId(2), DocId(3)), -0.25),
                ((WordId(9), DocId(1)), 3.0e-7),
            ],
        );
        let text = model_to_string(&model);
        let back = model_from_str(&text).unwrap();
        // Printed form is stable under reload.
        assert_eq!(text, model_to_string(&back));
        for (a, b) in model.rank_weights().iter().zip(back.rank_weights()) {
            assert!((a - b).abs() <= a.abs() * 1e-11);
        }
        // Term order is preserved.
        let pairs: Vec<_> = back.term_entries().iter().map(|&(p, _)| p).collect();
        assert_eq!(
            pairs,
            vec![
                (WordId(5), DocId(7)),
                (WordId(2), DocId(3)),
                (WordId(9), DocId(1))
            ]
        );
    }

    #[test]
    fn results_round_trip_bytes() {
        let records = vec![
            ResultRecord {
                experiment: "noise".into(),
                cell: "alpha=4".into(),
                replicate: 0,
                iteration: 2,
                metric: "mean_top5_max_relevance".into(),
                value: "0.8125".into(),
            },
            ResultRecord {
                experiment: "noise".into(),
                cell: "alpha=1".into(),
                replicate: 4,
                iteration: 0,
                metric: "preference_error_rate".into(),
                value: "NA".into(),
            },
        ];
        let text = render_results_csv(&records);
        let back = parse_results_csv(&text).unwrap();
        assert_eq!(records, back);
        assert_eq!(text, render_results_csv(&back));
    }
}
