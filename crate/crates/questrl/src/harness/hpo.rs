//! Hyperparameter random search: each trial samples the search space, trains
//! for a fixed episode budget, and is scored by its best trailing-1000
//! average reward; a post-hoc evaluation reports the winrate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ci_half_width, HarnessError};
use crate::cards::{CardDb, DeckSpec, EncounterCopies};
use crate::curriculum::run_learning;
use crate::derive_seed;
use crate::agents::Hyper;
use crate::encoders::EncodingScheme;
use crate::engine::GameConfig;
use crate::sim::{run_batch, AgentSetup, SlotSpec};

const STREAM_HPO_SAMPLE: u64 = 21;
const STREAM_HPO_TRAIN: u64 = 22;
const STREAM_HPO_EVAL: u64 = 23;

/// The sampled search space: hidden neurons uniform over the range, learning
/// rate log-uniform over the interval, questing encoding uniform over the
/// listed types.
#[derive(Debug, Clone, PartialEq)]
pub struct HpoSpace {
    pub neurons: (usize, usize),
    pub learning_rate: (f64, f64),
    pub encodings: Vec<u8>,
}

impl Default for HpoSpace {
    fn default() -> Self {
        HpoSpace {
            neurons: (30, 150),
            learning_rate: (1e-4, 1e-3),
            encodings: vec![0, 1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpoSample {
    pub neurons: usize,
    pub learning_rate: f64,
    pub encoding: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoTrial {
    pub index: u32,
    pub sample: HpoSample,
    /// Best trailing-1000 average reward over the training run.
    pub score: f64,
    /// Post-hoc evaluation winrate.
    pub winrate: f64,
    pub eval_games: u32,
}

/// Draws every trial configuration up front from one seeded stream, so the
/// sampled configurations depend only on (space, trials, seed).
pub fn sample_trials(space: &HpoSpace, trials: u32, seed: u64) -> Vec<HpoSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_HPO_SAMPLE]));
    let (lo, hi) = space.learning_rate;
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..trials)
        .map(|_| HpoSample {
            neurons: rng.random_range(space.neurons.0..=space.neurons.1),
            learning_rate: rng.random_range(ln_lo..ln_hi).exp(),
            encoding: space.encodings[rng.random_range(0..space.encodings.len())],
        })
        .collect()
}

/// Runs `trials` independent trials of the reference optimization setup
/// (direct planning and questing learners over a random defense) and ranks
/// them by score, descending.
#[allow(clippy::too_many_arguments)]
pub fn hpo_search(
    space: &HpoSpace,
    trials: u32,
    seed: u64,
    game: &GameConfig,
    episodes: u32,
    eval_games: u32,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<Vec<HpoTrial>, HarnessError> {
    if space.encodings.is_empty() {
        return Err(HarnessError::Config("empty encoding set".into()));
    }
    if space.neurons.0 == 0 || space.neurons.0 > space.neurons.1 {
        return Err(HarnessError::Config("bad neuron range".into()));
    }
    if space.learning_rate.0 <= 0.0 || space.learning_rate.0 > space.learning_rate.1 {
        return Err(HarnessError::Config("bad learning-rate range".into()));
    }
    let samples = sample_trials(space, trials, seed);
    let mut results: Vec<HpoTrial> = samples
        .into_par_iter()
        .enumerate()
        .map(|(i, sample)| -> Result<HpoTrial, HarnessError> {
            let scheme = EncodingScheme::questing(sample.encoding)
                .ok_or_else(|| HarnessError::Config(format!("bad encoding {}", sample.encoding)))?;
            let hyper = Hyper::with_learning_rate(sample.neurons, sample.learning_rate);
            let setup = AgentSetup {
                planning: SlotSpec::RlDirect(hyper),
                questing: SlotSpec::RlDirect(hyper),
                defense: SlotSpec::Random,
                questing_scheme: scheme,
            };
            let train_seed = derive_seed(seed, &[STREAM_HPO_TRAIN, i as u64]);
            let (record, agents) =
                run_learning(&setup, game, episodes, None, train_seed, db, deck, copies)?;
            let score = record.best_trailing(1_000);
            let eval_seed = derive_seed(seed, &[STREAM_HPO_EVAL, i as u64]);
            let stats = run_batch(&agents, game, db, deck, copies, eval_games, eval_seed)?;
            Ok(HpoTrial {
                index: i as u32,
                sample,
                score,
                winrate: stats.winrate(),
                eval_games,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    results.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    Ok(results)
}

pub fn render_trials(trials: &[HpoTrial]) -> String {
    let mut out = String::from("rank neurons learning_rate encoding winrate score\n");
    for (rank, t) in trials.iter().enumerate() {
        let ci = ci_half_width(t.winrate, t.eval_games);
        out.push_str(&format!(
            "{} {} {:.2e} {} {:.1} ± {:.1} {:.3}\n",
            rank + 1,
            t.sample.neurons,
            t.sample.learning_rate,
            t.sample.encoding,
            t.winrate * 100.0,
            ci * 100.0,
            t.score,
        ));
    }
    out
}
