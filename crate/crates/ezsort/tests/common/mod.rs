#![allow(dead_code)]

use std::fs;
use std::path::Path;

use serde_json::Value;

use ezsort::store::{SessionStore, StoredSession};
use ezsort_core::simulator::{synthesize_similarities, synthetic_items, SyntheticPreorderConfig};
use ezsort_core::{Event, ItemRecord, Outcome, SessionConfig, SimilarityTable, SplitMix64};

pub struct Fixture {
    pub items: Vec<ItemRecord>,
    pub sims: SimilarityTable,
    pub config: SessionConfig,
    pub truth_seed: u64,
}

pub fn fixture(n: usize, seed: u64) -> Fixture {
    let items = synthetic_items(n, seed);
    let sims = synthesize_similarities(
        &items,
        &SyntheticPreorderConfig {
            rng_seed: seed ^ 0x55,
            ..SyntheticPreorderConfig::default()
        },
    )
    .unwrap();
    let mut config = SessionConfig::default();
    config.elo_init.rng_seed = seed;
    Fixture {
        items,
        sims,
        config,
        truth_seed: seed,
    }
}

/// Annotator that is a pure function of the pair: ground truth with a
/// pseudo-random 10% of pairs flipped and some answered equal, so a
/// resumed run receives the same answers as the original.
pub fn answer(f: &Fixture, left: &str, right: &str) -> Outcome {
    let y = |id: &str| f.items.iter().find(|i| i.id == id).unwrap().ground_truth.unwrap();
    let key = left.bytes().chain(right.bytes()).fold(f.truth_seed, |h, b| SplitMix64::derive(h, b as u64));
    match key % 20 {
        0 | 1 => if y(left) >= y(right) { Outcome::RightFirst } else { Outcome::LeftFirst },
        2 => Outcome::Equal,
        _ => if y(left) >= y(right) { Outcome::LeftFirst } else { Outcome::RightFirst },
    }
}

/// Answers up to `limit` pending requests; returns how many were answered.
pub fn drive(f: &Fixture, s: &mut StoredSession, limit: usize) -> usize {
    let mut done = 0;
    while done < limit {
        let Some(req) = s.session().pending_record() else { break };
        s.submit(req.request_id, answer(f, &req.left, &req.right)).unwrap();
        done += 1;
    }
    done
}

/// Events with wall-clock timestamps removed.
pub fn normalized(events: &[Event]) -> Vec<Value> {
    events
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(e).unwrap();
            if let Some(o) = v.as_object_mut() {
                o.remove("timestamp_ms");
            }
            v
        })
        .collect()
}

/// One crash-resume trial: run partway, cut `events.log` at a random line
/// (sometimes leaving a torn fragment of the next one), reopen, finish,
/// and compare against an uninterrupted run.
pub fn crash_resume_trial(root: &Path, trial: u64) -> Result<(), String> {
    let mut rng = SplitMix64::new(SplitMix64::derive(0xc0ffee, trial));
    let n = 2 + rng.below(40);
    let f = fixture(n, trial);

    let reference_store = SessionStore::open(root.join("reference")).map_err(|e| e.to_string())?;
    let mut reference = reference_store
        .create(f.items.clone(), f.sims.clone(), f.config.clone())
        .map_err(|e| e.to_string())?;
    drive(&f, &mut reference, usize::MAX);
    let expected = normalized(&reference.session().events);
    let expected_ratings = reference.session().elo.ratings.clone();

    let store = SessionStore::open(root.join("crashy")).map_err(|e| e.to_string())?;
    let mut s = store
        .create(f.items.clone(), f.sims.clone(), f.config.clone())
        .map_err(|e| e.to_string())?;
    let id = s.id().to_string();
    let total_human = reference.session().stats().human as usize;
    drive(&f, &mut s, rng.below(total_human + 1));
    drop(s);

    let log_path = root.join("crashy").join(&id).join("events.log");
    let text = fs::read_to_string(&log_path).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().collect();
    let keep = 1 + rng.below(lines.len());
    let mut cut: String = lines[..keep].iter().map(|l| format!("{l}\n")).collect();
    if keep < lines.len() && rng.bernoulli(0.5) {
        let next = lines[keep];
        cut.push_str(&next[..rng.below(next.len())]);
    }
    fs::write(&log_path, cut).map_err(|e| e.to_string())?;

    let mut resumed = store.load(&id).map_err(|e| format!("resume failed: {e}"))?;
    drive(&f, &mut resumed, usize::MAX);
    if normalized(&resumed.session().events) != expected {
        return Err(format!("trial {trial}: trajectory differs after cut at line {keep}"));
    }
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    if bits(&resumed.session().elo.ratings) != bits(&expected_ratings) {
        return Err(format!("trial {trial}: final ratings differ"));
    }
    // the repaired log on disk replays to the same state
    drop(resumed);
    let again = store.load(&id).map_err(|e| e.to_string())?;
    if normalized(&again.session().events) != expected {
        return Err(format!("trial {trial}: reload after completion differs"));
    }
    Ok(())
}
