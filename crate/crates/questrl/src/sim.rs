//! Drives full games: binds the three phase agents to the engine through the
//! decoders, chains learning transitions across rounds, and runs frozen
//! evaluation batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::agents::{
    ActionQuery, ActorCriticAgent, ActorHead, AgentBundle, Hyper, PhaseAgent, PhaseRole,
    SlotPolicy, TakenAction,
};
use crate::cards::{CardDb, DeckSpec, EncounterCopies};
use crate::decoders::{
    direct_defense, direct_planning_loop, direct_questing, macro_planning, macro_questing,
    DecoderError, BETA_VALUES, DEFENSE_ACTIONS, PLANNING_ACTIONS, QUESTING_SLOTS,
};
use crate::derive_seed;
use crate::encoders::{encode_planning, encode_questing, EncodingScheme};
use crate::engine::{new_game, GameConfig, Outcome};

/// Seed stream tags so independent consumers never collide.
const STREAM_GAME: u64 = 1;
const STREAM_AGENT_RNG: u64 = 2;
const STREAM_NET_INIT: u64 = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
}

impl From<crate::engine::EngineError> for SimError {
    fn from(e: crate::engine::EngineError) -> Self {
        SimError::Decoder(DecoderError::Engine(e))
    }
}

impl From<crate::encoders::EncodeError> for SimError {
    fn from(e: crate::encoders::EncodeError) -> Self {
        SimError::Decoder(DecoderError::Encode(e))
    }
}

impl From<crate::agents::AgentError> for SimError {
    fn from(e: crate::agents::AgentError) -> Self {
        SimError::Decoder(DecoderError::Agent(e))
    }
}

/// How a decision phase turns agent output into engine actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Macro,
    Direct,
}

/// Which policy drives one phase slot.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotSpec {
    Random,
    RlMacro(Hyper),
    RlDirect(Hyper),
}

impl SlotSpec {
    pub fn is_rl(&self) -> bool {
        !matches!(self, SlotSpec::Random)
    }
}

/// Declarative agent assignment: which policy kind serves each of the three
/// decision phases, and the questing encoding in use.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSetup {
    pub planning: SlotSpec,
    pub questing: SlotSpec,
    pub defense: SlotSpec,
    pub questing_scheme: EncodingScheme,
}

impl AgentSetup {
    pub fn all_random() -> AgentSetup {
        AgentSetup {
            planning: SlotSpec::Random,
            questing: SlotSpec::Random,
            defense: SlotSpec::Random,
            questing_scheme: EncodingScheme::Questing2,
        }
    }

    /// The single-RL reference setup: a direct questing learner between
    /// random planning and defense.
    pub fn questing_direct(hyper: Hyper, scheme: EncodingScheme) -> AgentSetup {
        AgentSetup {
            planning: SlotSpec::Random,
            questing: SlotSpec::RlDirect(hyper),
            defense: SlotSpec::Random,
            questing_scheme: scheme,
        }
    }

    /// Builds fresh agents; network initialization is deterministic per seed.
    pub fn build(&self, seed: u64) -> Result<GameAgents, SimError> {
        if !self.questing_scheme.is_questing() {
            return Err(SimError::Config(format!(
                "{} is not a questing scheme",
                self.questing_scheme.as_str()
            )));
        }
        let planning_dim = EncodingScheme::Planning.dimension();
        let questing_dim = self.questing_scheme.dimension();
        let defense_dim = EncodingScheme::Defense.dimension();
        let net_seed = |slot: u64| derive_seed(seed, &[STREAM_NET_INIT, slot]);
        let (planning_mode, planning) = match &self.planning {
            SlotSpec::Random => (ActionMode::Direct, SlotPolicy::random()),
            SlotSpec::RlMacro(h) => (
                ActionMode::Macro,
                SlotPolicy::Rl(ActorCriticAgent::new(
                    planning_dim,
                    BETA_VALUES.len(),
                    ActorHead::Categorical,
                    *h,
                    net_seed(0),
                )?),
            ),
            SlotSpec::RlDirect(h) => (
                ActionMode::Direct,
                SlotPolicy::Rl(ActorCriticAgent::new(
                    planning_dim,
                    PLANNING_ACTIONS,
                    ActorHead::Categorical,
                    *h,
                    net_seed(0),
                )?),
            ),
        };
        let (questing_mode, questing) = match &self.questing {
            SlotSpec::Random => (ActionMode::Direct, SlotPolicy::random()),
            SlotSpec::RlMacro(h) => (
                ActionMode::Macro,
                SlotPolicy::Rl(ActorCriticAgent::new(
                    questing_dim,
                    BETA_VALUES.len(),
                    ActorHead::Categorical,
                    *h,
                    net_seed(1),
                )?),
            ),
            SlotSpec::RlDirect(h) => (
                ActionMode::Direct,
                SlotPolicy::Rl(ActorCriticAgent::new(
                    questing_dim,
                    QUESTING_SLOTS,
                    ActorHead::SlotMask,
                    *h,
                    net_seed(1),
                )?),
            ),
        };
        let defense = match &self.defense {
            SlotSpec::Random => SlotPolicy::random(),
            SlotSpec::RlDirect(h) => SlotPolicy::Rl(ActorCriticAgent::new(
                defense_dim,
                DEFENSE_ACTIONS,
                ActorHead::Categorical,
                *h,
                net_seed(2),
            )?),
            SlotSpec::RlMacro(_) => {
                return Err(SimError::Config(
                    "the defense phase has no macroaction form".into(),
                ))
            }
        };
        Ok(GameAgents {
            planning_mode,
            planning: PhaseAgent::new(planning),
            questing_mode,
            questing_scheme: self.questing_scheme,
            questing: PhaseAgent::new(questing),
            defense: PhaseAgent::new(defense),
        })
    }
}

/// The three phase agents bound to their action modes.
#[derive(Debug, Clone)]
pub struct GameAgents {
    pub planning_mode: ActionMode,
    pub planning: PhaseAgent,
    pub questing_mode: ActionMode,
    pub questing_scheme: EncodingScheme,
    pub questing: PhaseAgent,
    pub defense: PhaseAgent,
}

/// One phase slot of a loaded assignment: uniform random play or a restored
/// agent bundle with its action mode.
#[derive(Debug, Clone)]
pub enum PhaseAgentBuild {
    Random,
    Bundle(ActionMode, AgentBundle),
}

impl GameAgents {
    /// Assembles a frozen assignment from per-phase builds; the questing
    /// scheme follows the questing bundle when present.
    pub fn from_builds(
        planning: PhaseAgentBuild,
        questing: PhaseAgentBuild,
        defense: PhaseAgentBuild,
    ) -> GameAgents {
        let slot = |build: &PhaseAgentBuild| match build {
            PhaseAgentBuild::Random => SlotPolicy::random(),
            PhaseAgentBuild::Bundle(_, b) => SlotPolicy::Rl(b.agent.clone()),
        };
        let mode = |build: &PhaseAgentBuild| match build {
            PhaseAgentBuild::Random => ActionMode::Direct,
            PhaseAgentBuild::Bundle(mode, _) => *mode,
        };
        let questing_scheme = match &questing {
            PhaseAgentBuild::Bundle(_, b) => b.scheme,
            PhaseAgentBuild::Random => EncodingScheme::Questing2,
        };
        GameAgents {
            planning_mode: mode(&planning),
            planning: PhaseAgent::frozen(slot(&planning)),
            questing_mode: mode(&questing),
            questing_scheme,
            questing: PhaseAgent::frozen(slot(&questing)),
            defense: PhaseAgent::frozen(slot(&defense)),
        }
    }
    pub fn set_learn(&mut self, learn: bool) {
        self.planning.learn = learn;
        self.questing.learn = learn;
        self.defense.learn = learn;
    }

    /// Snapshot every RL slot as a bundle, keyed by phase role.
    pub fn bundles(&self) -> Vec<AgentBundle> {
        let mut out = Vec::new();
        if let Some(agent) = self.planning.policy.as_rl() {
            out.push(AgentBundle {
                role: PhaseRole::Planning,
                scheme: EncodingScheme::Planning,
                agent: agent.clone(),
            });
        }
        if let Some(agent) = self.questing.policy.as_rl() {
            out.push(AgentBundle {
                role: PhaseRole::Questing,
                scheme: self.questing_scheme,
                agent: agent.clone(),
            });
        }
        if let Some(agent) = self.defense.policy.as_rl() {
            out.push(AgentBundle {
                role: PhaseRole::Defense,
                scheme: EncodingScheme::Defense,
                agent: agent.clone(),
            });
        }
        out
    }

    /// Concatenated bundle text of every RL slot; equality means identical
    /// parameters.
    pub fn snapshot_text(&self) -> String {
        self.bundles()
            .iter()
            .map(AgentBundle::to_text)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub reward: f64,
    pub rounds: u32,
    pub random_events: u64,
}

/// Plays one full game. Every decision flows through the phase agents (and
/// their learning hooks when learning is enabled); the terminal reward is
/// flushed to all three slots at the end. The optional trace sink receives
/// per-phase decisions, feature vectors, and a state dump per round.
pub fn play_episode(
    agents: &mut GameAgents,
    config: &GameConfig,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut Vec<String>>,
) -> Result<EpisodeResult, SimError> {
    let mut state = new_game(config, db, deck, copies)?;
    let all_betas = [true; 6];
    while !state.outcome.is_over() {
        if let Some(t) = trace.as_deref_mut() {
            t.push(format!("== round {} ==", state.round));
        }
        state.resource_phase(db)?;

        match agents.planning_mode {
            ActionMode::Macro => {
                let features = encode_planning(&state, db)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(format!("planning features {}", features.render()));
                }
                let action =
                    agents
                        .planning
                        .decide(&features, ActionQuery::Choice { mask: &all_betas }, rng)?;
                let TakenAction::Index { index, .. } = action else {
                    return Err(SimError::Decoder(DecoderError::WrongActionKind));
                };
                let bought = macro_planning(&mut state, db, BETA_VALUES[index])?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(format!(
                        "planning beta {} bought {bought:?}",
                        BETA_VALUES[index]
                    ));
                }
            }
            ActionMode::Direct => {
                if let Some(t) = trace.as_deref_mut() {
                    if let Ok(features) = encode_planning(&state, db) {
                        t.push(format!("planning features {}", features.render()));
                    }
                }
                let bought = direct_planning_loop(&mut agents.planning, &mut state, db, rng)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(format!("planning bought {bought:?}"));
                }
            }
        }
        state.end_planning()?;

        let committed = match agents.questing_mode {
            ActionMode::Macro => {
                let features = encode_questing(&state, db, agents.questing_scheme)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(format!("questing features {}", features.render()));
                }
                let action =
                    agents
                        .questing
                        .decide(&features, ActionQuery::Choice { mask: &all_betas }, rng)?;
                let TakenAction::Index { index, .. } = action else {
                    return Err(SimError::Decoder(DecoderError::WrongActionKind));
                };
                macro_questing(&mut state, db, BETA_VALUES[index])?
            }
            ActionMode::Direct => {
                if let Some(t) = trace.as_deref_mut() {
                    if let Ok(features) = encode_questing(&state, db, agents.questing_scheme) {
                        t.push(format!("questing features {}", features.render()));
                    }
                }
                direct_questing(
                    &mut agents.questing,
                    &mut state,
                    db,
                    agents.questing_scheme,
                    rng,
                )?
            }
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(format!("questing committed {committed:?}"));
        }
        if state.outcome.is_over() {
            break;
        }

        state.travel_phase(db)?;
        state.encounter_phase(db)?;
        let assignments = direct_defense(&mut agents.defense, &mut state, db, rng)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(format!("defense assignments {assignments:?}"));
        }
        if state.outcome.is_over() {
            break;
        }
        state.attack_phase(db)?;
        state.refresh_phase(db)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(state.dump());
        }
    }
    let reward = state.outcome.reward();
    agents.planning.finish_episode(reward);
    agents.questing.finish_episode(reward);
    agents.defense.finish_episode(reward);
    if let Some(t) = trace.as_deref_mut() {
        t.push(format!("outcome {} after {} rounds", state.outcome, state.round));
        t.push(state.dump());
    }
    Ok(EpisodeResult {
        outcome: state.outcome,
        reward,
        rounds: state.round,
        random_events: state.random_events,
    })
}

/// Seeds for episode `i` of a training or evaluation stream.
pub fn episode_seeds(master_seed: u64, index: u64) -> (u64, u64) {
    (
        derive_seed(master_seed, &[STREAM_GAME, index]),
        derive_seed(master_seed, &[STREAM_AGENT_RNG, index]),
    )
}

/// Aggregate result of a frozen evaluation batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchStats {
    pub games: u32,
    pub wins: u32,
    pub loss_threat: u32,
    pub loss_heroes: u32,
    pub loss_timeout: u32,
    pub total_rounds: u64,
}

impl BatchStats {
    pub fn winrate(&self) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            self.wins as f64 / self.games as f64
        }
    }

    pub fn mean_rounds(&self) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            self.total_rounds as f64 / self.games as f64
        }
    }
}

/// Plays `n_games` independent seeded games with learning disabled. The
/// caller's agents are never mutated; per-game seeds depend only on the
/// master seed and game index, so batches with equal seeds are comparable
/// across assignments.
pub fn run_batch(
    agents: &GameAgents,
    base: &GameConfig,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
    n_games: u32,
    master_seed: u64,
) -> Result<BatchStats, SimError> {
    let results: Result<Vec<(Outcome, u32)>, SimError> = (0..n_games)
        .into_par_iter()
        .map(|i| {
            let mut local = agents.clone();
            local.set_learn(false);
            let (game_seed, agent_seed) = episode_seeds(master_seed, i as u64);
            let config = GameConfig {
                seed: game_seed,
                ..base.clone()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
            let ep = play_episode(&mut local, &config, db, deck, copies, &mut rng, None)?;
            Ok((ep.outcome, ep.rounds))
        })
        .collect();
    let mut stats = BatchStats::default();
    for (outcome, rounds) in results? {
        stats.games += 1;
        stats.total_rounds += rounds as u64;
        match outcome {
            Outcome::Win => stats.wins += 1,
            Outcome::LossThreat => stats.loss_threat += 1,
            Outcome::LossHeroesDead => stats.loss_heroes += 1,
            Outcome::LossTimeout => stats.loss_timeout += 1,
            Outcome::Ongoing => unreachable!("episodes always terminate"),
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixtures() -> (CardDb, DeckSpec, EncounterCopies) {
        (
            CardDb::builtin(),
            DeckSpec::builtin(),
            EncounterCopies::builtin(),
        )
    }

    #[test]
    fn random_episode_terminates_with_a_reward() {
        let (db, deck, copies) = fixtures();
        let mut agents = AgentSetup::all_random().build(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ep = play_episode(
            &mut agents,
            &GameConfig::new(8, 3),
            &db,
            &deck,
            &copies,
            &mut rng,
            None,
        )
        .unwrap();
        assert!(ep.outcome.is_over());
        assert_eq!(ep.reward.abs(), 1.0);
        assert!(ep.rounds <= 72);
    }

    #[test]
    fn episodes_are_deterministic_given_seeds() {
        let (db, deck, copies) = fixtures();
        let run = |game_seed: u64, agent_seed: u64| {
            let mut agents = AgentSetup::all_random().build(9).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
            let mut trace = Vec::new();
            let ep = play_episode(
                &mut agents,
                &GameConfig::new(8, game_seed),
                &db,
                &deck,
                &copies,
                &mut rng,
                Some(&mut trace),
            )
            .unwrap();
            (ep, trace)
        };
        let (a, ta) = run(5, 6);
        let (b, tb) = run(5, 6);
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = run(5, 7);
        // Same game seed, different agent decisions: usually different games.
        let _ = c;
    }

    #[test]
    fn rl_episode_runs_all_three_learners() {
        let (db, deck, copies) = fixtures();
        let setup = AgentSetup {
            planning: SlotSpec::RlDirect(Hyper::default()),
            questing: SlotSpec::RlDirect(Hyper::default()),
            defense: SlotSpec::RlDirect(Hyper::default()),
            questing_scheme: EncodingScheme::Questing2,
        };
        let mut agents = setup.build(11).unwrap();
        let before = agents.snapshot_text();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        play_episode(
            &mut agents,
            &GameConfig::new(4, 13),
            &db,
            &deck,
            &copies,
            &mut rng,
            None,
        )
        .unwrap();
        assert_ne!(agents.snapshot_text(), before);
        assert_eq!(agents.bundles().len(), 3);
    }

    #[test]
    fn macro_agents_play_full_games() {
        let (db, deck, copies) = fixtures();
        let setup = AgentSetup {
            planning: SlotSpec::RlMacro(Hyper::default()),
            questing: SlotSpec::RlMacro(Hyper::default()),
            defense: SlotSpec::Random,
            questing_scheme: EncodingScheme::Questing2,
        };
        let mut agents = setup.build(21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for seed in 0..5 {
            let ep = play_episode(
                &mut agents,
                &GameConfig::new(8, seed),
                &db,
                &deck,
                &copies,
                &mut rng,
                None,
            )
            .unwrap();
            assert!(ep.outcome.is_over());
        }
    }

    #[test]
    fn defense_macro_is_rejected() {
        let setup = AgentSetup {
            planning: SlotSpec::Random,
            questing: SlotSpec::Random,
            defense: SlotSpec::RlMacro(Hyper::default()),
            questing_scheme: EncodingScheme::Questing2,
        };
        assert!(matches!(setup.build(1), Err(SimError::Config(_))));
    }

    #[test]
    fn run_batch_is_deterministic_and_pure() {
        let (db, deck, copies) = fixtures();
        let mut agents = AgentSetup::questing_direct(
            Hyper::default(),
            EncodingScheme::Questing2,
        )
        .build(31)
        .unwrap();
        agents.set_learn(true);
        let snapshot = agents.snapshot_text();
        let a = run_batch(&agents, &GameConfig::new(8, 0), &db, &deck, &copies, 50, 77).unwrap();
        let b = run_batch(&agents, &GameConfig::new(8, 0), &db, &deck, &copies, 50, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.games, 50);
        assert_eq!(
            a.wins + a.loss_threat + a.loss_heroes + a.loss_timeout,
            a.games
        );
        // Evaluation never mutates the caller's agents.
        assert_eq!(agents.snapshot_text(), snapshot);
    }

    #[test]
    fn a_full_round_consumes_exactly_two_random_events() {
        let (db, deck, copies) = fixtures();
        let mut agents = AgentSetup::all_random().build(41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ep = play_episode(
            &mut agents,
            &GameConfig::new(20, 43),
            &db,
            &deck,
            &copies,
            &mut rng,
            None,
        )
        .unwrap();
        // The player deck (24 cards after the opening hand) never empties in
        // a 22-round game, so every round has one draw and one reveal.
        assert_eq!(ep.random_events, 2 * ep.rounds as u64);
    }
}
