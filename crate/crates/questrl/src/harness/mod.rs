//! Evaluation harness: winrate reports with confidence intervals over seeded
//! game batches, the seven-row multi-agent assignment grid, hyperparameter
//! random search, and the command-line interface.

pub mod cli;
pub mod config;
pub mod hpo;

use thiserror::Error;

use crate::agents::{ActorHead, AgentBundle, AgentError, PhaseRole};
use crate::cards::{CardDb, CardsError, DeckSpec, EncounterCopies};
use crate::curriculum::CurriculumError;
use crate::decoders::{BETA_VALUES, DEFENSE_ACTIONS, PLANNING_ACTIONS, QUESTING_SLOTS};
use crate::encoders::EncodingScheme;
use crate::engine::GameConfig;
use crate::sim::{run_batch, ActionMode, GameAgents, PhaseAgentBuild, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("bundle mismatch: {0}")]
    BundleMismatch(String),
    #[error(transparent)]
    Cards(#[from] CardsError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Half-width of the 95% normal-approximation confidence interval:
/// 1.96 * sqrt(p(1-p)/n).
pub fn ci_half_width(winrate: f64, games: u32) -> f64 {
    if games == 0 {
        return 0.0;
    }
    1.96 * (winrate * (1.0 - winrate) / games as f64).sqrt()
}

/// Aggregated evaluation of one assignment over a seeded game batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub games: u32,
    pub wins: u32,
    pub winrate: f64,
    pub ci_half: f64,
    pub mean_rounds: f64,
    pub loss_threat: u32,
    pub loss_heroes: u32,
    pub loss_timeout: u32,
    pub master_seed: u64,
}

impl EvalReport {
    pub fn render_text(&self) -> String {
        format!(
            "games {} | wins {} | winrate {:.4} ± {:.4} | mean rounds {:.1}\n\
             losses: threat {} heroes {} timeout {} | seed {}\n",
            self.games,
            self.wins,
            self.winrate,
            self.ci_half,
            self.mean_rounds,
            self.loss_threat,
            self.loss_heroes,
            self.loss_timeout,
            self.master_seed
        )
    }
}

/// Plays `n_games` independent seeded games with learning disabled and
/// aggregates the outcome statistics. Deterministic given the master seed;
/// never mutates the agents.
pub fn evaluate(
    agents: &GameAgents,
    config: &GameConfig,
    n_games: u32,
    master_seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<EvalReport, HarnessError> {
    if n_games == 0 {
        return Err(HarnessError::Config("evaluation needs games >= 1".into()));
    }
    config
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let stats = run_batch(agents, config, db, deck, copies, n_games, master_seed)?;
    Ok(EvalReport {
        games: stats.games,
        wins: stats.wins,
        winrate: stats.winrate(),
        ci_half: ci_half_width(stats.winrate(), stats.games),
        mean_rounds: stats.mean_rounds(),
        loss_threat: stats.loss_threat,
        loss_heroes: stats.loss_heroes,
        loss_timeout: stats.loss_timeout,
        master_seed,
    })
}

/// Checks a bundle against the phase it is meant to serve and derives its
/// action mode.
pub fn bundle_mode(bundle: &AgentBundle, role: PhaseRole) -> Result<ActionMode, HarnessError> {
    if bundle.role != role {
        return Err(HarnessError::BundleMismatch(format!(
            "bundle role {} cannot serve the {} phase",
            bundle.role.as_str(),
            role.as_str()
        )));
    }
    let actions = bundle.agent.actor.output_dim;
    let head = bundle.agent.head;
    let scheme = bundle.scheme;
    let mode = match role {
        PhaseRole::Planning => {
            if scheme != EncodingScheme::Planning {
                return Err(HarnessError::BundleMismatch(
                    "planning bundle must use the planning encoding".into(),
                ));
            }
            match (head, actions) {
                (ActorHead::Categorical, n) if n == BETA_VALUES.len() => ActionMode::Macro,
                (ActorHead::Categorical, n) if n == PLANNING_ACTIONS => ActionMode::Direct,
                _ => {
                    return Err(HarnessError::BundleMismatch(
                        "planning bundle has an unrecognized head".into(),
                    ))
                }
            }
        }
        PhaseRole::Questing => {
            if !scheme.is_questing() {
                return Err(HarnessError::BundleMismatch(
                    "questing bundle must use a questing encoding".into(),
                ));
            }
            match (head, actions) {
                (ActorHead::Categorical, n) if n == BETA_VALUES.len() => ActionMode::Macro,
                (ActorHead::SlotMask, n) if n == QUESTING_SLOTS => ActionMode::Direct,
                _ => {
                    return Err(HarnessError::BundleMismatch(
                        "questing bundle has an unrecognized head".into(),
                    ))
                }
            }
        }
        PhaseRole::Defense => {
            if scheme != EncodingScheme::Defense {
                return Err(HarnessError::BundleMismatch(
                    "defense bundle must use the defense encoding".into(),
                ));
            }
            match (head, actions) {
                (ActorHead::Categorical, n) if n == DEFENSE_ACTIONS => ActionMode::Direct,
                _ => {
                    return Err(HarnessError::BundleMismatch(
                        "defense bundle has an unrecognized head".into(),
                    ))
                }
            }
        }
    };
    Ok(mode)
}

/// Builds a frozen assignment from optional per-phase bundles; phases without
/// a bundle play uniformly at random.
pub fn assemble_agents(
    planning: Option<&AgentBundle>,
    questing: Option<&AgentBundle>,
    defense: Option<&AgentBundle>,
) -> Result<GameAgents, HarnessError> {
    let planning_build = match planning {
        Some(b) => PhaseAgentBuild::Bundle(bundle_mode(b, PhaseRole::Planning)?, b.clone()),
        None => PhaseAgentBuild::Random,
    };
    let questing_build = match questing {
        Some(b) => PhaseAgentBuild::Bundle(bundle_mode(b, PhaseRole::Questing)?, b.clone()),
        None => PhaseAgentBuild::Random,
    };
    let defense_build = match defense {
        Some(b) => PhaseAgentBuild::Bundle(bundle_mode(b, PhaseRole::Defense)?, b.clone()),
        None => PhaseAgentBuild::Random,
    };
    Ok(GameAgents::from_builds(
        planning_build,
        questing_build,
        defense_build,
    ))
}

/// The three trained single-phase agents required by the assignment grid.
#[derive(Debug, Clone)]
pub struct GridBundles {
    pub planning: AgentBundle,
    pub questing: AgentBundle,
    pub defense: AgentBundle,
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub planning_rl: bool,
    pub questing_rl: bool,
    pub defense_rl: bool,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub difficulty: u32,
    pub games: u32,
    pub master_seed: u64,
}

impl GridReport {
    pub fn row(&self, planning: bool, questing: bool, defense: bool) -> &GridRow {
        self.rows
            .iter()
            .find(|r| {
                r.planning_rl == planning && r.questing_rl == questing && r.defense_rl == defense
            })
            .expect("grid contains all seven assignments")
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "multi-agent grid | difficulty {} | {} games per row | seed {}\n",
            self.difficulty, self.games, self.master_seed
        );
        out.push_str("planning questing defense | winrate\n");
        let label = |rl: bool| if rl { "RL" } else { "random" };
        for row in &self.rows {
            out.push_str(&format!(
                "{} {} {} | {:.1} ± {:.1}\n",
                label(row.planning_rl),
                label(row.questing_rl),
                label(row.defense_rl),
                row.report.winrate * 100.0,
                row.report.ci_half * 100.0,
            ));
        }
        out
    }
}

/// The seven assignments of the ablation grid: three single-RL rows, three
/// double-RL rows, and the triple. Every row consumes identical game-seed
/// sequences, so differences are attributable to the assignments.
pub const GRID_ASSIGNMENTS: [(bool, bool, bool); 7] = [
    (true, false, false),
    (false, true, false),
    (false, false, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (true, true, true),
];

pub fn multiagent_grid(
    bundles: &GridBundles,
    config: &GameConfig,
    n_games: u32,
    master_seed: u64,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<GridReport, HarnessError> {
    let mut rows = Vec::with_capacity(GRID_ASSIGNMENTS.len());
    for (planning_rl, questing_rl, defense_rl) in GRID_ASSIGNMENTS {
        let agents = assemble_agents(
            planning_rl.then_some(&bundles.planning),
            questing_rl.then_some(&bundles.questing),
            defense_rl.then_some(&bundles.defense),
        )?;
        let report = evaluate(&agents, config, n_games, master_seed, db, deck, copies)?;
        rows.push(GridRow {
            planning_rl,
            questing_rl,
            defense_rl,
            report,
        });
    }
    Ok(GridReport {
        rows,
        difficulty: config.difficulty,
        games: n_games,
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Hyper;
    use crate::sim::{AgentSetup, SlotSpec};

    fn fixtures() -> (CardDb, DeckSpec, EncounterCopies) {
        (
            CardDb::builtin(),
            DeckSpec::builtin(),
            EncounterCopies::builtin(),
        )
    }

    #[test]
    fn ci_arithmetic_matches_the_closed_form() {
        // 2,830 wins over 10,000 games: winrate 0.283, half-width 0.008829.
        let winrate = 2_830.0 / 10_000.0;
        let ci = ci_half_width(winrate, 10_000);
        assert!((winrate - 0.283).abs() < 1e-12);
        assert!((ci - 0.008_828_945_530_207_6).abs() < 1e-6);
    }

    #[test]
    fn evaluate_rejects_zero_games() {
        let (db, deck, copies) = fixtures();
        let agents = AgentSetup::all_random().build(1).unwrap();
        assert!(matches!(
            evaluate(&agents, &GameConfig::new(8, 0), 0, 1, &db, &deck, &copies),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn evaluate_is_deterministic_and_pure() {
        let (db, deck, copies) = fixtures();
        let agents = AgentSetup::questing_direct(Hyper::default(), EncodingScheme::Questing2)
            .build(5)
            .unwrap();
        let before = agents.snapshot_text();
        let a = evaluate(&agents, &GameConfig::new(8, 0), 200, 9, &db, &deck, &copies).unwrap();
        let b = evaluate(&agents, &GameConfig::new(8, 0), 200, 9, &db, &deck, &copies).unwrap();
        let c = evaluate(&agents, &GameConfig::new(8, 0), 200, 9, &db, &deck, &copies).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(agents.snapshot_text(), before);
        assert_eq!(a.wins + a.loss_threat + a.loss_heroes + a.loss_timeout, 200);
    }

    #[test]
    fn bundle_mode_recognizes_every_legal_head() {
        let setup = AgentSetup {
            planning: SlotSpec::RlMacro(Hyper::default()),
            questing: SlotSpec::RlDirect(Hyper::default()),
            defense: SlotSpec::RlDirect(Hyper::default()),
            questing_scheme: EncodingScheme::Questing2,
        };
        let agents = setup.build(3).unwrap();
        let bundles = agents.bundles();
        assert_eq!(
            bundle_mode(&bundles[0], PhaseRole::Planning).unwrap(),
            ActionMode::Macro
        );
        assert_eq!(
            bundle_mode(&bundles[1], PhaseRole::Questing).unwrap(),
            ActionMode::Direct
        );
        assert_eq!(
            bundle_mode(&bundles[2], PhaseRole::Defense).unwrap(),
            ActionMode::Direct
        );
        // Serving the wrong phase is a mismatch.
        assert!(matches!(
            bundle_mode(&bundles[0], PhaseRole::Defense),
            Err(HarnessError::BundleMismatch(_))
        ));
    }

    #[test]
    fn grid_has_seven_rows_and_shared_seeds() {
        let (db, deck, copies) = fixtures();
        let setup = AgentSetup {
            planning: SlotSpec::RlDirect(Hyper::default()),
            questing: SlotSpec::RlDirect(Hyper::default()),
            defense: SlotSpec::RlDirect(Hyper::default()),
            questing_scheme: EncodingScheme::Questing2,
        };
        let agents = setup.build(7).unwrap();
        let b = agents.bundles();
        let bundles = GridBundles {
            planning: b[0].clone(),
            questing: b[1].clone(),
            defense: b[2].clone(),
        };
        let report = multiagent_grid(
            &bundles,
            &GameConfig::new(8, 0),
            30,
            11,
            &db,
            &deck,
            &copies,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 7);
        for row in &report.rows {
            assert_eq!(row.report.games, 30);
            assert_eq!(row.report.master_seed, 11);
        }
        // Identical assignments reproduce identical rows under the shared
        // seed sequence.
        let again = multiagent_grid(
            &bundles,
            &GameConfig::new(8, 0),
            30,
            11,
            &db,
            &deck,
            &copies,
        )
        .unwrap();
        for (x, y) in report.rows.iter().zip(&again.rows) {
            assert_eq!(x.report, y.report);
        }
    }

    #[test]
    fn assemble_accepts_missing_bundles_as_random() {
        let (db, deck, copies) = fixtures();
        let agents = assemble_agents(None, None, None).unwrap();
        let report =
            evaluate(&agents, &GameConfig::new(1, 0), 50, 3, &db, &deck, &copies).unwrap();
        assert_eq!(report.games, 50);
    }
}
