//! Calibration of the patience scale against a target look depth.

use crate::corpus::Corpus;
use crate::retrieval::{BaseRanker, Index};
use crate::seed::{derive_seed, tag};
use crate::usersim::{simulate_population, BehaviorConfig};

use super::HarnessError;

const SCALE_LO: f64 = 1e-3;
const SCALE_HI: f64 = 1e3;
const TARGET_TOLERANCE: f64 = 0.01;
const MAX_STEPS: usize = 60;

/// Fraction of query records that looked past the top five results, under
/// the base ranker with the given patience scale.
pub fn fraction_past_five(
    corpus: &Corpus,
    index: &Index,
    cfg: &BehaviorConfig,
    num_users: usize,
    seed: u64,
    patience_scale: f64,
) -> f64 {
    let cfg = BehaviorConfig {
        patience_scale,
        ..cfg.clone()
    };
    let ranker = BaseRanker { index };
    let logs = simulate_population(num_users, &ranker, corpus, &cfg, seed);
    let mut records = 0usize;
    let mut past = 0usize;
    for log in &logs {
        for rec in &log.records {
            records += 1;
            if rec.looks > 5 {
                past += 1;
            }
        }
    }
    if records == 0 {
        0.0
    } else {
        past as f64 / records as f64
    }
}

/// Bisects the patience scale until the simulated fraction of queries that
/// look past rank five matches the target within 0.01. With a fixed seed the
/// fraction is monotone in the scale (a larger budget only ever deepens each
/// user's walk), so bisection is sound.
pub fn calibrate_patience(
    target_fraction_past_5: f64,
    corpus: &Corpus,
    index: &Index,
    cfg: &BehaviorConfig,
    num_users: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    if !(target_fraction_past_5 > 0.0 && target_fraction_past_5 < 0.5) {
        return Err(HarnessError::Calibration(format!(
            "target fraction must be in (0, 0.5), got {target_fraction_past_5}"
        )));
    }
    let sim_seed = derive_seed(seed, &[tag::CALIBRATE]);
    let frac = |scale: f64| fraction_past_five(corpus, index, cfg, num_users, sim_seed, scale);

    let mut lo = SCALE_LO;
    let mut hi = SCALE_HI;
    let f_lo = frac(lo);
    if (f_lo - target_fraction_past_5).abs() <= TARGET_TOLERANCE {
        return Ok(lo);
    }
    if f_lo > target_fraction_past_5 {
        return Err(HarnessError::Calibration(format!(
            "target {target_fraction_past_5} unreachable: fraction at minimum scale is {f_lo}"
        )));
    }
    let f_hi = frac(hi);
    if (f_hi - target_fraction_past_5).abs() <= TARGET_TOLERANCE {
        return Ok(hi);
    }
    if f_hi < target_fraction_past_5 {
        return Err(HarnessError::Calibration(format!(
            "target {target_fraction_past_5} unreachable: fraction at maximum scale is {f_hi}"
        )));
    }

    for _ in 0..MAX_STEPS {
        let mid = (lo * hi).sqrt(); // geometric midpoint over decades
        let f_mid = frac(mid);
        if (f_mid - target_fraction_past_5).abs() <= TARGET_TOLERANCE {
            return Ok(mid);
        }
        if f_mid < target_fraction_past_5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(HarnessError::Calibration(format!(
        "bisection did not reach target {target_fraction_past_5} within {MAX_STEPS} steps"
    )))
}
