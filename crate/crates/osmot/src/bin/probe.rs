//! Scratch diagnostics for calibration (not part of the shipped interface).

use osmot::corpus::generate_corpus;
use osmot::feedback::{extract_all, Strategy};
use osmot::harness::ExperimentConfig;
use osmot::retrieval::{BaseRanker, Index};
use osmot::usersim::simulate_population;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_env_overrides().unwrap();
    cfg.validate().unwrap();
    let corpus = generate_corpus(&cfg.corpus).unwrap();
    let index = Index::build(&corpus);
    let ranker = BaseRanker { index: &index };
    let logs = simulate_population(cfg.run.users_per_iteration, &ranker, &corpus, &cfg.user, 99);

    let satisfied = logs.iter().filter(|l| l.satisfied).count();
    let queries: usize = logs.iter().map(|l| l.records.len()).sum();
    let clicks: usize = logs
        .iter()
        .flat_map(|l| &l.records)
        .map(|r| r.clicks.len())
        .sum();
    let docs = &corpus.documents;
    let rel1_clicks: usize = logs
        .iter()
        .flat_map(|l| {
            let topic = l.question_topic;
            l.records.iter().map(move |r| {
                r.clicks
                    .iter()
                    .filter(|&&c| docs[r.results[c - 1].index()].relevance_to(topic) == 1.0)
                    .count()
            })
        })
        .sum();
    println!(
        "users={} queries={} clicks={} rel1_clicks={} satisfied={}",
        logs.len(),
        queries,
        clicks,
        rel1_clicks,
        satisfied
    );

    let (look, click) = osmot::harness::click_rank_histogram(&logs);
    println!(
        "look: {:?}",
        look.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    println!(
        "click: {:?}",
        click.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
    );

    let prefs = extract_all(&logs);
    let mut wrong_kinds: std::collections::HashMap<String, usize> = Default::default();
    let mut right_kinds: std::collections::HashMap<String, usize> = Default::default();
    let mut grand_total = 0usize;
    let mut grand_wrong = 0usize;
    for p in prefs.iter() {
        let rw = corpus.documents[p.winner.index()].relevance_to(p.query.topic);
        let rl = corpus.documents[p.loser.index()].relevance_to(p.query.topic);
        if rw != rl {
            grand_total += 1;
            let key = format!("{rw:.2}>{rl:.2}");
            if rw < rl {
                grand_wrong += 1;
                *wrong_kinds.entry(key).or_insert(0) += 1;
            } else {
                *right_kinds.entry(key).or_insert(0) += 1;
            }
        }
    }
    println!(
        "overall err = {:.4} ({grand_wrong}/{grand_total})",
        grand_wrong as f64 / grand_total as f64
    );
    let mut wk: Vec<_> = wrong_kinds.into_iter().collect();
    wk.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    println!("wrong pair kinds: {:?}", &wk[..wk.len().min(6)]);
    let mut rk: Vec<_> = right_kinds.into_iter().collect();
    rk.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    println!("right pair kinds: {:?}", &rk[..rk.len().min(6)]);

    for strat in Strategy::ALL {
        let mut total = 0usize;
        let mut wrong = 0usize;
        let mut ties = 0usize;
        for p in prefs.iter().filter(|p| p.strategy == strat) {
            let rw = corpus.documents[p.winner.index()].relevance_to(p.query.topic);
            let rl = corpus.documents[p.loser.index()].relevance_to(p.query.topic);
            if rw == rl {
                ties += 1;
            } else {
                total += 1;
                if rw < rl {
                    wrong += 1;
                }
            }
        }
        println!(
            "{:28} n={:7} ties={:7} err={:.4}",
            strat.name(),
            total,
            ties,
            if total > 0 {
                wrong as f64 / total as f64
            } else {
                f64::NAN
            }
        );
    }
}
