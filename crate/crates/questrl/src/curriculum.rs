//! The three learning strategies: one-step, two-step continued, and two-step
//! interrupted. Step 1 trains at reduced difficulties; step 2 continues the
//! selected networks at full difficulty. Interrupted runs stop once the
//! trailing-average reward clears a threshold.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cards::{CardDb, DeckSpec, EncounterCopies};
use crate::derive_seed;
use crate::engine::{GameConfig, Outcome};
use crate::harness::ci_half_width;
use crate::sim::{episode_seeds, play_episode, run_batch, AgentSetup, GameAgents, SimError};

const STREAM_STEP1: u64 = 11;
const STREAM_STEP2: u64 = 12;
const STREAM_EVAL_OWN: u64 = 13;
const STREAM_EVAL_FULL: u64 = 14;
const STREAM_EVAL_FINAL: u64 = 15;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Episode budget for one learning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub iterations: u32,
    pub episodes_per_iteration: u32,
    pub episode_cap: Option<u32>,
}

impl Budget {
    pub fn new(iterations: u32, episodes_per_iteration: u32) -> Budget {
        Budget {
            iterations,
            episodes_per_iteration,
            episode_cap: None,
        }
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.iterations == 0 || self.episodes_per_iteration == 0 {
            return Err(CurriculumError::Config(
                "budget iterations and episodes must be positive".into(),
            ));
        }
        if let Some(cap) = self.episode_cap {
            if cap < self.episodes_per_iteration {
                return Err(CurriculumError::Config(
                    "episode cap below the per-iteration budget".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Stop training once the trailing-window average reward exceeds the
/// threshold, checked every episode once the window is full.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterruptRule {
    pub window: usize,
    pub threshold: f64,
}

impl InterruptRule {
    pub fn new(window: usize, threshold: f64) -> InterruptRule {
        InterruptRule { window, threshold }
    }
}

impl Default for InterruptRule {
    fn default() -> Self {
        InterruptRule {
            window: 100,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Threshold,
}

/// One learning run's log: per-episode rewards and wins, the trailing-average
/// series, and how the run ended.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rewards: Vec<f64>,
    pub wins: Vec<bool>,
    pub trailing: Vec<f64>,
    pub trailing_window: usize,
    pub episodes_used: u32,
    pub stop_reason: StopReason,
    pub elapsed_secs: f64,
}

impl RunRecord {
    /// Comma-separated log: `episode,reward,win,trailing_avg`, trailing blank
    /// until the window fills.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,reward,win,trailing_avg\n");
        for i in 0..self.rewards.len() {
            let trailing = if i + 1 >= self.trailing_window {
                format!("{:.6}", self.trailing[i + 1 - self.trailing_window])
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.rewards[i],
                self.wins[i] as u8,
                trailing
            ));
        }
        out
    }

    pub fn final_trailing(&self) -> Option<f64> {
        self.trailing.last().copied()
    }

    /// Best trailing average over the run at the given window (the full-run
    /// mean when the run is shorter than the window).
    pub fn best_trailing(&self, window: usize) -> f64 {
        let w = window.min(self.rewards.len()).max(1);
        trailing_average(&self.rewards, w)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sliding arithmetic mean, defined from index window-1 onward, maintained
/// incrementally.
pub fn trailing_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    if series.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let mut sum: f64 = series[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..series.len() {
        sum += series[i] - series[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Trains a fresh agent assignment at one difficulty: plays full games, feeds
/// every decision transition to the learners, and stops at the episode cap or
/// on the interrupt rule.
pub fn run_learning(
    setup: &AgentSetup,
    game: &GameConfig,
    episode_cap: u32,
    interrupt: Option<InterruptRule>,
    seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<(RunRecord, GameAgents), CurriculumError> {
    let mut agents = setup.build(seed)?;
    let record = run_learning_with(&mut agents, game, episode_cap, interrupt, seed, db, deck, copies)?;
    Ok((record, agents))
}

/// As `run_learning`, but continues training the given agents in place.
pub fn run_learning_with(
    agents: &mut GameAgents,
    game: &GameConfig,
    episode_cap: u32,
    interrupt: Option<InterruptRule>,
    seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<RunRecord, CurriculumError> {
    if episode_cap == 0 {
        return Err(CurriculumError::Config("episode cap must be positive".into()));
    }
    if let Some(rule) = &interrupt {
        if rule.window == 0 || rule.window as u32 > episode_cap {
            return Err(CurriculumError::Config(format!(
                "interrupt window {} must be in 1..={episode_cap}",
                rule.window
            )));
        }
    }
    game.validate().map_err(|e| CurriculumError::Config(e.to_string()))?;
    agents.set_learn(true);
    let start = Instant::now();
    let window = interrupt.map(|r| r.window).unwrap_or(100);
    let mut rewards: Vec<f64> = Vec::new();
    let mut wins: Vec<bool> = Vec::new();
    let mut window_sum = 0.0;
    let mut stop_reason = StopReason::Budget;
    for ep in 0..episode_cap {
        let (game_seed, agent_seed) = episode_seeds(seed, ep as u64);
        let config = GameConfig {
            seed: game_seed,
            ..game.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
        let result = play_episode(agents, &config, db, deck, copies, &mut rng, None)?;
        window_sum += result.reward;
        if rewards.len() >= window {
            window_sum -= rewards[rewards.len() - window];
        }
        rewards.push(result.reward);
        wins.push(result.outcome == Outcome::Win);
        if let Some(rule) = &interrupt {
            if rewards.len() >= rule.window && (ep + 1) < episode_cap {
                let avg = window_sum / rule.window as f64;
                if avg > rule.threshold {
                    stop_reason = StopReason::Threshold;
                    break;
                }
            }
        }
    }
    let trailing = trailing_average(&rewards, window.min(rewards.len().max(1)));
    let episodes_used = rewards.len() as u32;
    Ok(RunRecord {
        rewards,
        wins,
        trailing,
        trailing_window: window,
        episodes_used,
        stop_reason,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// How step-1 networks qualify for step 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    /// Strictly above the winrate bound (0.90 in the reference pipeline).
    WinrateAbove(f64),
    /// The k best step-1 networks by tested winrate.
    TopK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    OneStep,
    TwoStepContinued,
    TwoStepInterrupted,
}

/// Full description of a learning strategy run.
#[derive(Debug, Clone)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub setup: AgentSetup,
    pub step1_difficulties: Vec<u32>,
    pub step2_difficulty: u32,
    pub step1_budget: Budget,
    pub step2_budget: Budget,
    pub selection: SelectionRule,
    pub step1_interrupt: InterruptRule,
    pub step2_interrupt: InterruptRule,
    pub eval_games: u32,
    pub game: GameConfig,
}

impl StrategySpec {
    /// Reference budgets: step 1 runs 10 iterations of 1,000 episodes over
    /// difficulties 1..9; step 2 runs 20 iterations of 2,500 episodes at
    /// difficulty 20; interrupted caps are 10,000 and 50,000 episodes with
    /// thresholds 0.5 and -0.1 over a 100-episode window.
    pub fn reference(kind: StrategyKind, setup: AgentSetup) -> StrategySpec {
        StrategySpec {
            kind,
            setup,
            step1_difficulties: (1..=9).collect(),
            step2_difficulty: 20,
            step1_budget: Budget {
                iterations: 10,
                episodes_per_iteration: 1_000,
                episode_cap: Some(10_000),
            },
            step2_budget: Budget {
                iterations: 20,
                episodes_per_iteration: 2_500,
                episode_cap: Some(50_000),
            },
            selection: SelectionRule::WinrateAbove(0.90),
            step1_interrupt: InterruptRule::new(100, 0.5),
            step2_interrupt: InterruptRule::new(100, -0.1),
            eval_games: 1_000,
            game: GameConfig::new(20, 0),
        }
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.step1_difficulties.is_empty() {
            return Err(CurriculumError::Config("no step-1 difficulties".into()));
        }
        for &d in &self.step1_difficulties {
            if d >= self.step2_difficulty {
                return Err(CurriculumError::Config(format!(
                    "step-1 difficulty {d} must be below the step-2 difficulty {}",
                    self.step2_difficulty
                )));
            }
            GameConfig { difficulty: d, ..self.game.clone() }
                .validate()
                .map_err(|e| CurriculumError::Config(e.to_string()))?;
        }
        self.step1_budget.validate()?;
        self.step2_budget.validate()?;
        if self.eval_games == 0 {
            return Err(CurriculumError::Config("eval_games must be positive".into()));
        }
        Ok(())
    }

    fn config_at(&self, difficulty: u32) -> GameConfig {
        GameConfig {
            difficulty,
            ..self.game.clone()
        }
    }
}

/// One trained step-1 network with its provenance.
#[derive(Debug, Clone)]
pub struct Step1Run {
    pub difficulty: u32,
    pub iteration: u32,
    pub record: RunRecord,
    pub agents: GameAgents,
}

fn train_step1_grid(
    spec: &StrategySpec,
    master_seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<Vec<Step1Run>, CurriculumError> {
    let mut units: Vec<(u32, u32)> = Vec::new();
    for &d in &spec.step1_difficulties {
        for it in 0..spec.step1_budget.iterations {
            units.push((d, it));
        }
    }
    units
        .into_par_iter()
        .map(|(difficulty, iteration)| {
            let seed = derive_seed(
                master_seed,
                &[STREAM_STEP1, difficulty as u64, iteration as u64],
            );
            let (record, agents) = run_learning(
                &spec.setup,
                &spec.config_at(difficulty),
                spec.step1_budget.episodes_per_iteration,
                None,
                seed,
                db,
                deck,
                copies,
            )?;
            Ok(Step1Run {
                difficulty,
                iteration,
                record,
                agents,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OneStepRun {
    pub difficulty: u32,
    pub iteration: u32,
    pub episodes_used: u32,
    pub full_difficulty_winrate: f64,
}

#[derive(Debug, Clone)]
pub struct OneStepReport {
    pub runs: Vec<OneStepRun>,
    pub per_difficulty_mean: Vec<(u32, f64)>,
    pub best: OneStepRun,
    pub total_episodes: u64,
    pub eval_games: u32,
    pub elapsed_secs: f64,
}

impl OneStepReport {
    pub fn render_text(&self) -> String {
        let mut out = String::from("one-step learning report\n");
        out.push_str(&format!(
            "runs {} | episodes {} | wall-clock {:.1}s\n",
            self.runs.len(),
            self.total_episodes,
            self.elapsed_secs
        ));
        out.push_str("difficulty mean_winrate_at_full\n");
        for (d, mean) in &self.per_difficulty_mean {
            let ci = ci_half_width(*mean, self.eval_games);
            out.push_str(&format!("{d} {:.3} ± {:.3}\n", mean, ci));
        }
        out.push_str(&format!(
            "best 0→{}→full iteration {} winrate {:.3}\n",
            self.best.difficulty, self.best.iteration, self.best.full_difficulty_winrate
        ));
        out
    }
}

/// Trains fresh networks at each reduced difficulty and tests every one at
/// the full difficulty. Returns the report and the best network.
pub fn one_step(
    spec: &StrategySpec,
    master_seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<(OneStepReport, GameAgents), CurriculumError> {
    spec.validate()?;
    let start = Instant::now();
    let step1 = train_step1_grid(spec, master_seed, db, deck, copies)?;
    let evals: Vec<f64> = step1
        .par_iter()
        .map(|run| {
            let eval_seed = derive_seed(
                master_seed,
                &[STREAM_EVAL_FULL, run.difficulty as u64, run.iteration as u64],
            );
            run_batch(
                &run.agents,
                &spec.config_at(spec.step2_difficulty),
                db,
                deck,
                copies,
                spec.eval_games,
                eval_seed,
            )
            .map(|stats| stats.winrate())
        })
        .collect::<Result<Vec<f64>, SimError>>()?;
    let runs: Vec<OneStepRun> = step1
        .iter()
        .zip(&evals)
        .map(|(run, &winrate)| OneStepRun {
            difficulty: run.difficulty,
            iteration: run.iteration,
            episodes_used: run.record.episodes_used,
            full_difficulty_winrate: winrate,
        })
        .collect();
    let per_difficulty_mean: Vec<(u32, f64)> = spec
        .step1_difficulties
        .iter()
        .map(|&d| {
            let xs: Vec<f64> = runs
                .iter()
                .filter(|r| r.difficulty == d)
                .map(|r| r.full_difficulty_winrate)
                .collect();
            (d, xs.iter().sum::<f64>() / xs.len() as f64)
        })
        .collect();
    let best_index = runs
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            a.full_difficulty_winrate
                .partial_cmp(&b.full_difficulty_winrate)
                .unwrap()
        })
        .map(|(i, _)| i)
        .expect("at least one run");
    let total_episodes = runs.iter().map(|r| r.episodes_used as u64).sum();
    let report = OneStepReport {
        best: runs[best_index].clone(),
        runs,
        per_difficulty_mean,
        total_episodes,
        eval_games: spec.eval_games,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok((report, step1.into_iter().nth(best_index).unwrap().agents))
}

/// Provenance and outcome of one pipeline that reached step 2.
#[derive(Debug, Clone)]
pub struct SurvivorResult {
    /// For example "0→6→20": fresh weights, step-1 difficulty, step-2
    /// difficulty.
    pub chain: String,
    pub difficulty: u32,
    pub iteration: u32,
    pub step1_winrate: f64,
    pub step1_episodes: u32,
    pub step2_episodes: u64,
    pub step2_stop: StopReason,
    pub final_winrate: f64,
}

#[derive(Debug, Clone)]
pub struct TwoStepReport {
    pub kind: StrategyKind,
    pub step1_results: Vec<(u32, u32, f64, u32)>,
    pub survivors: Vec<SurvivorResult>,
    pub best: Option<SurvivorResult>,
    pub total_episodes: u64,
    pub eval_games: u32,
    pub elapsed_secs: f64,
}

impl TwoStepReport {
    pub fn render_text(&self) -> String {
        let kind = match self.kind {
            StrategyKind::TwoStepContinued => "two-step continued",
            StrategyKind::TwoStepInterrupted => "two-step interrupted",
            StrategyKind::OneStep => "one-step",
        };
        let mut out = format!("{kind} learning report\n");
        out.push_str(&format!(
            "episodes {} | wall-clock {:.1}s\n",
            self.total_episodes, self.elapsed_secs
        ));
        out.push_str("step1: difficulty iteration score episodes\n");
        for (d, it, score, eps) in &self.step1_results {
            out.push_str(&format!("{d} {it} {score:.3} {eps}\n"));
        }
        if self.survivors.is_empty() {
            out.push_str("no networks qualified for step 2\n");
            return out;
        }
        out.push_str("step2: chain step1_winrate step2_episodes final_winrate\n");
        for s in &self.survivors {
            let ci = ci_half_width(s.final_winrate, self.eval_games);
            out.push_str(&format!(
                "{} {:.3} {} {:.3} ± {:.3}\n",
                s.chain, s.step1_winrate, s.step2_episodes, s.final_winrate, ci
            ));
        }
        if let Some(best) = &self.best {
            out.push_str(&format!(
                "best {} final winrate {:.3}\n",
                best.chain, best.final_winrate
            ));
        }
        out
    }
}

fn select_survivors(
    rule: SelectionRule,
    scored: &[(usize, f64)],
) -> Vec<usize> {
    match rule {
        SelectionRule::WinrateAbove(bound) => scored
            .iter()
            .filter(|(_, w)| *w > bound)
            .map(|(i, _)| *i)
            .collect(),
        SelectionRule::TopK(k) => {
            let mut ranked = scored.to_vec();
            ranked.sort_by(|(ia, wa), (ib, wb)| {
                wb.partial_cmp(wa).unwrap().then(ia.cmp(ib))
            });
            ranked.into_iter().take(k).map(|(i, _)| i).collect()
        }
    }
}

/// Two-step continued: step-1 networks are tested at their own difficulty;
/// qualifying networks continue training at the full difficulty for the whole
/// step-2 budget, restarting each iteration from the survivor's weights and
/// keeping the best iteration by trailing-1000 average reward.
pub fn two_step_continued(
    spec: &StrategySpec,
    master_seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<(TwoStepReport, Option<GameAgents>), CurriculumError> {
    spec.validate()?;
    let start = Instant::now();
    let step1 = train_step1_grid(spec, master_seed, db, deck, copies)?;
    let own_winrates: Vec<f64> = step1
        .par_iter()
        .map(|run| {
            let eval_seed = derive_seed(
                master_seed,
                &[STREAM_EVAL_OWN, run.difficulty as u64, run.iteration as u64],
            );
            run_batch(
                &run.agents,
                &spec.config_at(run.difficulty),
                db,
                deck,
                copies,
                spec.eval_games,
                eval_seed,
            )
            .map(|stats| stats.winrate())
        })
        .collect::<Result<Vec<f64>, SimError>>()?;
    let scored: Vec<(usize, f64)> = own_winrates.iter().copied().enumerate().collect();
    let survivor_indices = select_survivors(spec.selection, &scored);
    let step1_results: Vec<(u32, u32, f64, u32)> = step1
        .iter()
        .zip(&own_winrates)
        .map(|(r, &w)| (r.difficulty, r.iteration, w, r.record.episodes_used))
        .collect();

    let survivor_outputs: Vec<(SurvivorResult, GameAgents)> = survivor_indices
        .into_par_iter()
        .map(|idx| -> Result<(SurvivorResult, GameAgents), CurriculumError> {
            let parent = &step1[idx];
            let mut best: Option<(f64, GameAgents, u64)> = None;
            let mut episodes: u64 = 0;
            for it2 in 0..spec.step2_budget.iterations {
                let mut agents = parent.agents.clone();
                let seed = derive_seed(
                    master_seed,
                    &[
                        STREAM_STEP2,
                        parent.difficulty as u64,
                        parent.iteration as u64,
                        it2 as u64,
                    ],
                );
                let record = run_learning_with(
                    &mut agents,
                    &spec.config_at(spec.step2_difficulty),
                    spec.step2_budget.episodes_per_iteration,
                    None,
                    seed,
                    db,
                    deck,
                    copies,
                )?;
                episodes += record.episodes_used as u64;
                let score = record.best_trailing(1_000);
                if best.as_ref().map(|(b, _, _)| score > *b).unwrap_or(true) {
                    best = Some((score, agents, episodes));
                }
            }
            let (_, best_agents, _) = best.expect("step-2 iterations ran");
            let eval_seed = derive_seed(
                master_seed,
                &[
                    STREAM_EVAL_FINAL,
                    parent.difficulty as u64,
                    parent.iteration as u64,
                ],
            );
            let final_winrate = run_batch(
                &best_agents,
                &spec.config_at(spec.step2_difficulty),
                db,
                deck,
                copies,
                spec.eval_games,
                eval_seed,
            )?
            .winrate();
            Ok((
                SurvivorResult {
                    chain: format!("0→{}→{}", parent.difficulty, spec.step2_difficulty),
                    difficulty: parent.difficulty,
                    iteration: parent.iteration,
                    step1_winrate: own_winrates[idx],
                    step1_episodes: parent.record.episodes_used,
                    step2_episodes: episodes,
                    step2_stop: StopReason::Budget,
                    final_winrate,
                },
                best_agents,
            ))
        })
        .collect::<Result<Vec<_>, CurriculumError>>()?;

    finish_two_step(
        spec,
        StrategyKind::TwoStepContinued,
        start,
        step1_results,
        survivor_outputs,
    )
}

/// Two-step interrupted: one step-1 run per difficulty under the step-1
/// interrupt rule; difficulties that clear the threshold (rather than hitting
/// the cap) continue at full difficulty under the step-2 interrupt rule.
pub fn two_step_interrupted(
    spec: &StrategySpec,
    master_seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<(TwoStepReport, Option<GameAgents>), CurriculumError> {
    spec.validate()?;
    let start = Instant::now();
    let step1_cap = spec
        .step1_budget
        .episode_cap
        .unwrap_or(spec.step1_budget.iterations * spec.step1_budget.episodes_per_iteration);
    let step2_cap = spec
        .step2_budget
        .episode_cap
        .unwrap_or(spec.step2_budget.iterations * spec.step2_budget.episodes_per_iteration);

    let step1: Vec<Step1Run> = spec
        .step1_difficulties
        .par_iter()
        .map(|&difficulty| {
            let seed = derive_seed(master_seed, &[STREAM_STEP1, difficulty as u64, 0]);
            let (record, agents) = run_learning(
                &spec.setup,
                &spec.config_at(difficulty),
                step1_cap,
                Some(spec.step1_interrupt),
                seed,
                db,
                deck,
                copies,
            )?;
            Ok(Step1Run {
                difficulty,
                iteration: 0,
                record,
                agents,
            })
        })
        .collect::<Result<Vec<_>, CurriculumError>>()?;

    let step1_results: Vec<(u32, u32, f64, u32)> = step1
        .iter()
        .map(|r| {
            (
                r.difficulty,
                r.iteration,
                r.record.final_trailing().unwrap_or(-1.0),
                r.record.episodes_used,
            )
        })
        .collect();

    let survivor_outputs: Vec<(SurvivorResult, GameAgents)> = step1
        .par_iter()
        .filter(|run| run.record.stop_reason == StopReason::Threshold)
        .map(|parent| -> Result<(SurvivorResult, GameAgents), CurriculumError> {
            let mut agents = parent.agents.clone();
            let seed = derive_seed(master_seed, &[STREAM_STEP2, parent.difficulty as u64]);
            let record = run_learning_with(
                &mut agents,
                &spec.config_at(spec.step2_difficulty),
                step2_cap,
                Some(spec.step2_interrupt),
                seed,
                db,
                deck,
                copies,
            )?;
            let eval_seed = derive_seed(
                master_seed,
                &[STREAM_EVAL_FINAL, parent.difficulty as u64, 0],
            );
            let final_winrate = run_batch(
                &agents,
                &spec.config_at(spec.step2_difficulty),
                db,
                deck,
                copies,
                spec.eval_games,
                eval_seed,
            )?
            .winrate();
            Ok((
                SurvivorResult {
                    chain: format!("0→{}→{}", parent.difficulty, spec.step2_difficulty),
                    difficulty: parent.difficulty,
                    iteration: 0,
                    step1_winrate: parent.record.final_trailing().unwrap_or(-1.0),
                    step1_episodes: parent.record.episodes_used,
                    step2_episodes: record.episodes_used as u64,
                    step2_stop: record.stop_reason,
                    final_winrate,
                },
                agents,
            ))
        })
        .collect::<Result<Vec<_>, CurriculumError>>()?;

    finish_two_step(
        spec,
        StrategyKind::TwoStepInterrupted,
        start,
        step1_results,
        survivor_outputs,
    )
}

fn finish_two_step(
    spec: &StrategySpec,
    kind: StrategyKind,
    start: Instant,
    step1_results: Vec<(u32, u32, f64, u32)>,
    survivor_outputs: Vec<(SurvivorResult, GameAgents)>,
) -> Result<(TwoStepReport, Option<GameAgents>), CurriculumError> {
    let step1_episodes: u64 = step1_results.iter().map(|(_, _, _, e)| *e as u64).sum();
    let step2_episodes: u64 = survivor_outputs
        .iter()
        .map(|(s, _)| s.step2_episodes)
        .sum();
    let best_index = survivor_outputs
        .iter()
        .enumerate()
        .max_by(|(_, (a, _)), (_, (b, _))| {
            a.final_winrate.partial_cmp(&b.final_winrate).unwrap()
        })
        .map(|(i, _)| i);
    let mut survivors: Vec<SurvivorResult> = Vec::new();
    let mut best_agents: Option<GameAgents> = None;
    let best = best_index.map(|i| survivor_outputs[i].0.clone());
    for (i, (s, agents)) in survivor_outputs.into_iter().enumerate() {
        if Some(i) == best_index {
            best_agents = Some(agents);
        }
        survivors.push(s);
    }
    let report = TwoStepReport {
        kind,
        step1_results,
        survivors,
        best,
        total_episodes: step1_episodes + step2_episodes,
        eval_games: spec.eval_games,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok((report, best_agents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Hyper;
    use crate::encoders::EncodingScheme;
    use crate::sim::SlotSpec;

    fn fixtures() -> (CardDb, DeckSpec, EncounterCopies) {
        (
            CardDb::builtin(),
            DeckSpec::builtin(),
            EncounterCopies::builtin(),
        )
    }

    fn tiny_spec(kind: StrategyKind) -> StrategySpec {
        let mut spec = StrategySpec::reference(
            kind,
            AgentSetup::questing_direct(Hyper::default(), EncodingScheme::Questing2),
        );
        spec.step1_difficulties = vec![1, 2];
        spec.step1_budget = Budget {
            iterations: 2,
            episodes_per_iteration: 40,
            episode_cap: Some(80),
        };
        spec.step2_budget = Budget {
            iterations: 2,
            episodes_per_iteration: 40,
            episode_cap: Some(80),
        };
        spec.eval_games = 40;
        spec.selection = SelectionRule::TopK(1);
        spec
    }

    #[test]
    fn trailing_average_basics() {
        assert_eq!(trailing_average(&[3.0; 5], 3), vec![3.0, 3.0, 3.0]);
        assert_eq!(
            trailing_average(&[1.0, -1.0, 1.0, -1.0], 2),
            vec![0.0, 0.0, 0.0]
        );
        assert!(trailing_average(&[1.0], 2).is_empty());
    }

    #[test]
    fn trailing_average_matches_the_direct_mean() {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(3);
        use rand::Rng;
        let series: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let window = 37;
        let incremental = trailing_average(&series, window);
        for (i, &avg) in incremental.iter().enumerate() {
            let direct: f64 =
                series[i..i + window].iter().sum::<f64>() / window as f64;
            assert!((avg - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_threshold_always_stops_on_budget() {
        let (db, deck, copies) = fixtures();
        let setup = AgentSetup::all_random();
        let (record, _) = run_learning(
            &setup,
            &GameConfig::new(1, 0),
            120,
            Some(InterruptRule::new(50, 2.0)),
            7,
            &db,
            &deck,
            &copies,
        )
        .unwrap();
        assert_eq!(record.stop_reason, StopReason::Budget);
        assert_eq!(record.episodes_used, 120);
        assert_eq!(record.rewards.len(), 120);
    }

    #[test]
    fn reachable_threshold_stops_early() {
        // Random agents win often at difficulty 1; a -0.9 threshold over a
        // tiny window fires almost immediately.
        let (db, deck, copies) = fixtures();
        let setup = AgentSetup::all_random();
        let (record, _) = run_learning(
            &setup,
            &GameConfig::new(1, 0),
            5_000,
            Some(InterruptRule::new(10, -0.9)),
            7,
            &db,
            &deck,
            &copies,
        )
        .unwrap();
        assert_eq!(record.stop_reason, StopReason::Threshold);
        assert!(record.episodes_used < 5_000);
        let tail: f64 = record.rewards[record.rewards.len() - 10..]
            .iter()
            .sum::<f64>()
            / 10.0;
        assert!(tail > -0.9);
    }

    #[test]
    fn run_learning_is_deterministic() {
        let (db, deck, copies) = fixtures();
        let setup =
            AgentSetup::questing_direct(Hyper::default(), EncodingScheme::Questing2);
        let game = GameConfig::new(2, 0);
        let (a, agents_a) =
            run_learning(&setup, &game, 60, None, 42, &db, &deck, &copies).unwrap();
        let (b, agents_b) =
            run_learning(&setup, &game, 60, None, 42, &db, &deck, &copies).unwrap();
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(agents_a.snapshot_text(), agents_b.snapshot_text());
        let (c, _) = run_learning(&setup, &game, 60, None, 43, &db, &deck, &copies).unwrap();
        assert_ne!(a.rewards, c.rewards);
    }

    #[test]
    fn interrupt_window_must_fit_the_cap() {
        let (db, deck, copies) = fixtures();
        let setup = AgentSetup::all_random();
        let err = run_learning(
            &setup,
            &GameConfig::new(1, 0),
            50,
            Some(InterruptRule::new(100, 0.5)),
            1,
            &db,
            &deck,
            &copies,
        );
        assert!(matches!(err, Err(CurriculumError::Config(_))));
    }

    #[test]
    fn run_record_csv_has_one_row_per_episode() {
        let (db, deck, copies) = fixtures();
        let setup = AgentSetup::all_random();
        let (record, _) = run_learning(
            &setup,
            &GameConfig::new(1, 0),
            30,
            Some(InterruptRule::new(10, 2.0)),
            3,
            &db,
            &deck,
            &copies,
        )
        .unwrap();
        let csv = record.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "episode,reward,win,trailing_avg");
        assert_eq!(lines.len(), 31);
        // Trailing column empty before the window fills, present after.
        assert!(lines[1].ends_with(','));
        assert!(!lines[10].ends_with(','));
    }

    #[test]
    fn strategy_spec_rejects_step1_at_full_difficulty() {
        let mut spec = tiny_spec(StrategyKind::OneStep);
        spec.step1_difficulties = vec![20];
        assert!(matches!(spec.validate(), Err(CurriculumError::Config(_))));
    }

    #[test]
    fn one_step_bookkeeping_and_determinism() {
        let (db, deck, copies) = fixtures();
        let spec = tiny_spec(StrategyKind::OneStep);
        let (report, _) = one_step(&spec, 5, &db, &deck, &copies).unwrap();
        assert_eq!(report.runs.len(), 4); // 2 difficulties x 2 iterations
        assert_eq!(report.total_episodes, 4 * 40);
        assert_eq!(report.per_difficulty_mean.len(), 2);
        let (again, _) = one_step(&spec, 5, &db, &deck, &copies).unwrap();
        assert_eq!(report.render_text(), again.render_text());
    }

    #[test]
    fn selection_rules_are_strict_and_ranked() {
        let scored = vec![(0, 0.95), (1, 0.90), (2, 0.91), (3, 0.50)];
        let above = select_survivors(SelectionRule::WinrateAbove(0.90), &scored);
        // 0.90 exactly is not above 0.90.
        assert_eq!(above, vec![0, 2]);
        let top = select_survivors(SelectionRule::TopK(2), &scored);
        assert_eq!(top, vec![0, 2]);
    }

    #[test]
    fn two_step_continued_records_provenance() {
        let (db, deck, copies) = fixtures();
        let spec = tiny_spec(StrategyKind::TwoStepContinued);
        let (report, best) = two_step_continued(&spec, 9, &db, &deck, &copies).unwrap();
        assert_eq!(report.step1_results.len(), 4);
        assert_eq!(report.survivors.len(), 1); // TopK(1)
        let survivor = &report.survivors[0];
        assert!(survivor.chain.starts_with("0→"));
        assert!(survivor.chain.ends_with("→20"));
        assert_eq!(survivor.step2_episodes, 2 * 40);
        assert!(best.is_some());
        let (again, _) = two_step_continued(&spec, 9, &db, &deck, &copies).unwrap();
        assert_eq!(report.render_text(), again.render_text());
    }

    #[test]
    fn two_step_continued_with_impossible_selection_reports_empty() {
        let (db, deck, copies) = fixtures();
        let mut spec = tiny_spec(StrategyKind::TwoStepContinued);
        spec.selection = SelectionRule::WinrateAbove(1.5);
        let (report, best) = two_step_continued(&spec, 9, &db, &deck, &copies).unwrap();
        assert!(report.survivors.is_empty());
        assert!(best.is_none());
        assert!(report.render_text().contains("no networks qualified"));
    }

    #[test]
    fn two_step_interrupted_excludes_capped_runs() {
        let (db, deck, copies) = fixtures();
        let mut spec = tiny_spec(StrategyKind::TwoStepInterrupted);
        // Random questing at difficulty 1 wins often enough to clear a low
        // bar quickly; at difficulty 9 the same bar is out of reach within
        // the cap.
        spec.setup = AgentSetup::all_random();
        spec.step1_difficulties = vec![1, 9];
        spec.step1_interrupt = InterruptRule::new(20, 0.0);
        spec.step1_budget = Budget {
            iterations: 1,
            episodes_per_iteration: 150,
            episode_cap: Some(150),
        };
        spec.step2_interrupt = InterruptRule::new(20, 2.0);
        spec.step2_budget = Budget {
            iterations: 1,
            episodes_per_iteration: 40,
            episode_cap: Some(40),
        };
        spec.eval_games = 20;
        let (report, _) = two_step_interrupted(&spec, 3, &db, &deck, &copies).unwrap();
        let d1 = report
            .step1_results
            .iter()
            .find(|(d, _, _, _)| *d == 1)
            .unwrap();
        let d9 = report
            .step1_results
            .iter()
            .find(|(d, _, _, _)| *d == 9)
            .unwrap();
        assert!(d1.3 < 150, "difficulty 1 should clear the threshold early");
        assert_eq!(d9.3, 150, "difficulty 9 should hit the cap");
        assert_eq!(report.survivors.len(), 1);
        assert_eq!(report.survivors[0].difficulty, 1);
    }
}
