//! Command-line interface: play traced games, train agents, run the learning
//! strategies, evaluate assignments, sweep the multi-agent grid, and search
//! hyperparameters. Exit codes: 0 success, 2 configuration error, 1 runtime
//! error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::Settings;
use super::hpo::{hpo_search, render_trials, HpoSpace};
use super::{
    assemble_agents, bundle_mode, evaluate, multiagent_grid, GridBundles, HarnessError,
};
use crate::agents::{AgentBundle, AgentError, Hyper, PhaseRole};
use crate::cards::{CardDb, CardsError, DeckSpec, EncounterCopies};
use crate::curriculum::{
    one_step, run_learning, two_step_continued, two_step_interrupted, CurriculumError,
    InterruptRule, StrategyKind, StrategySpec,
};
use crate::encoders::EncodingScheme;
use crate::engine::GameConfig;
use crate::sim::{play_episode, AgentSetup, SimError, SlotSpec};

#[derive(Parser, Debug)]
#[command(
    name = "questrl",
    version,
    about = "Cooperative quest card game simulator with an online actor-critic learner"
)]
struct Cli {
    /// Master seed for all derived randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Quest points required to win (1-20).
    #[arg(long, global = true)]
    difficulty: Option<u32>,
    /// Settings file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Card database file.
    #[arg(long, global = true)]
    cards: Option<PathBuf>,
    /// Player deck specification file.
    #[arg(long, global = true)]
    deck: Option<PathBuf>,
    /// Output directory for reports, logs, and bundles.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll one seeded game and print the per-phase trace.
    Play {
        /// planning,questing,defense: random | rl-macro | rl-direct[:N].
        #[arg(long, default_value = "random,random,random")]
        agents: String,
        /// Print feature vectors and state dumps per round.
        #[arg(long)]
        trace: bool,
        /// Load a trained agent: phase=FILE (repeatable).
        #[arg(long)]
        bundle: Vec<String>,
    },
    /// Run one learning process and write its episode log and bundles.
    Train {
        #[arg(long, default_value = "random,rl-direct:2,random")]
        agents: String,
        #[arg(long)]
        episodes: u32,
        #[arg(long, default_value_t = 70)]
        hidden: usize,
        #[arg(long, default_value_t = 6e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        /// Stop once the trailing-window average reward exceeds this.
        #[arg(long)]
        interrupt_threshold: Option<f64>,
        #[arg(long, default_value_t = 100)]
        interrupt_window: usize,
    },
    /// Run a full learning strategy.
    Curriculum {
        /// one-step | two-step-continued | two-step-interrupted.
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value = "random,rl-direct:2,random")]
        agents: String,
        #[arg(long, default_value_t = 70)]
        hidden: usize,
        #[arg(long, default_value_t = 6e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
    },
    /// Evaluate a frozen assignment over a seeded game batch.
    Evaluate {
        #[arg(long)]
        agents: String,
        #[arg(long)]
        games: u32,
        /// Trained agent per RL slot: phase=FILE (repeatable).
        #[arg(long)]
        bundle: Vec<String>,
    },
    /// Evaluate all seven random/RL assignments with shared seeds.
    Grid {
        #[arg(long)]
        games: u32,
        /// Trained agent per phase: phase=FILE (repeatable).
        #[arg(long)]
        bundle: Vec<String>,
        /// Train fresh single-phase agents for this many episodes instead of
        /// loading bundles.
        #[arg(long)]
        train_episodes: Option<u32>,
        #[arg(long, default_value_t = 70)]
        hidden: usize,
        #[arg(long, default_value_t = 6e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
    },
    /// Random search over neurons, learning rate, and questing encoding.
    Hpo {
        #[arg(long, default_value_t = 100)]
        trials: u32,
        #[arg(long, default_value_t = 10_000)]
        episodes: u32,
        #[arg(long, default_value_t = 1_000)]
        eval_games: u32,
    },
}

struct Ctx {
    db: CardDb,
    deck: DeckSpec,
    copies: EncounterCopies,
    game: GameConfig,
    seed: u64,
    out: PathBuf,
}

fn load_ctx(cli: &Cli) -> Result<Ctx, HarnessError> {
    let db = match &cli.cards {
        Some(path) => CardDb::load(path)?,
        None => CardDb::builtin(),
    };
    let deck = match &cli.deck {
        Some(path) => DeckSpec::load(path)?,
        None => DeckSpec::builtin(),
    };
    deck.validate(&db)?;
    let copies = EncounterCopies::builtin();
    copies.validate(&db)?;
    let mut game = GameConfig::new(20, 0);
    if let Some(path) = &cli.config {
        Settings::load(path)?.apply_game(&mut game)?;
    }
    if let Some(d) = cli.difficulty {
        game.difficulty = d;
    }
    if let Some(s) = cli.seed {
        game.seed = s;
    }
    let seed = game.seed;
    game.validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    Ok(Ctx {
        db,
        deck,
        copies,
        game,
        seed,
        out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Random,
    RlMacro,
    RlDirect,
}

#[derive(Debug, Clone, Copy)]
struct AgentToken {
    kind: TokenKind,
    scheme: Option<u8>,
}

fn parse_token(raw: &str, phase: &str) -> Result<AgentToken, HarnessError> {
    let (name, scheme) = match raw.split_once(':') {
        Some((name, scheme)) => {
            let scheme: u8 = scheme.parse().map_err(|_| {
                HarnessError::Config(format!("bad encoding `{scheme}` in agent token `{raw}`"))
            })?;
            if scheme > 3 {
                return Err(HarnessError::Config(format!(
                    "questing encoding must be 0-3, got {scheme}"
                )));
            }
            if phase != "questing" {
                return Err(HarnessError::Config(format!(
                    "only the questing slot takes an encoding suffix, got `{raw}` for {phase}"
                )));
            }
            (name, Some(scheme))
        }
        None => (raw, None),
    };
    let kind = match name {
        "random" => TokenKind::Random,
        "rl-macro" => TokenKind::RlMacro,
        "rl-direct" => TokenKind::RlDirect,
        other => {
            return Err(HarnessError::Config(format!(
                "unknown agent kind `{other}` (expected random, rl-macro, or rl-direct)"
            )))
        }
    };
    if kind == TokenKind::RlMacro && phase == "defense" {
        return Err(HarnessError::Config(
            "the defense phase has no macroaction form".into(),
        ));
    }
    Ok(AgentToken { kind, scheme })
}

fn parse_agent_tokens(spec: &str) -> Result<[AgentToken; 3], HarnessError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(HarnessError::Config(format!(
            "agent spec needs planning,questing,defense, got `{spec}`"
        )));
    }
    Ok([
        parse_token(parts[0], "planning")?,
        parse_token(parts[1], "questing")?,
        parse_token(parts[2], "defense")?,
    ])
}

fn setup_from_tokens(tokens: &[AgentToken; 3], hyper: Hyper) -> AgentSetup {
    let slot = |t: &AgentToken| match t.kind {
        TokenKind::Random => SlotSpec::Random,
        TokenKind::RlMacro => SlotSpec::RlMacro(hyper),
        TokenKind::RlDirect => SlotSpec::RlDirect(hyper),
    };
    let scheme = EncodingScheme::questing(tokens[1].scheme.unwrap_or(2))
        .expect("token parser bounds the encoding");
    AgentSetup {
        planning: slot(&tokens[0]),
        questing: slot(&tokens[1]),
        defense: slot(&tokens[2]),
        questing_scheme: scheme,
    }
}

fn parse_bundles(args: &[String]) -> Result<BTreeMap<PhaseRole, AgentBundle>, HarnessError> {
    let mut out = BTreeMap::new();
    for raw in args {
        let (phase, path) = raw.split_once('=').ok_or_else(|| {
            HarnessError::Config(format!("expected phase=FILE, got `{raw}`"))
        })?;
        let role = PhaseRole::parse(phase.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown phase `{phase}`")))?;
        let bundle = AgentBundle::load(path.trim())?;
        if out.insert(role, bundle).is_some() {
            return Err(HarnessError::Config(format!(
                "duplicate bundle for phase `{phase}`"
            )));
        }
    }
    Ok(out)
}

/// Checks a loaded bundle against its slot token and returns it when the RL
/// slot is active.
fn bundle_for_slot<'a>(
    token: &AgentToken,
    role: PhaseRole,
    bundles: &'a BTreeMap<PhaseRole, AgentBundle>,
) -> Result<Option<&'a AgentBundle>, HarnessError> {
    if token.kind == TokenKind::Random {
        return Ok(None);
    }
    let bundle = bundles.get(&role).ok_or_else(|| {
        HarnessError::BundleMismatch(format!(
            "the {} slot is RL but no bundle was supplied",
            role.as_str()
        ))
    })?;
    let mode = bundle_mode(bundle, role)?;
    let expected = match token.kind {
        TokenKind::RlMacro => crate::sim::ActionMode::Macro,
        TokenKind::RlDirect => crate::sim::ActionMode::Direct,
        TokenKind::Random => unreachable!(),
    };
    if mode != expected {
        return Err(HarnessError::BundleMismatch(format!(
            "the {} bundle is {:?} but the assignment asks for {:?}",
            role.as_str(),
            mode,
            expected
        )));
    }
    if let Some(requested) = token.scheme {
        let scheme = EncodingScheme::questing(requested).unwrap();
        if bundle.scheme != scheme {
            return Err(HarnessError::BundleMismatch(format!(
                "the questing bundle uses {} but the assignment asks for {}",
                bundle.scheme.as_str(),
                scheme.as_str()
            )));
        }
    }
    Ok(Some(bundle))
}

fn write_out(ctx: &Ctx, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn save_bundles(ctx: &Ctx, agents: &crate::sim::GameAgents) -> Result<Vec<PathBuf>, HarnessError> {
    let mut paths = Vec::new();
    for bundle in agents.bundles() {
        let name = format!("{}.bundle", bundle.role.as_str());
        paths.push(write_out(ctx, &name, &bundle.to_text())?);
    }
    Ok(paths)
}

fn run_play(ctx: &Ctx, agents_spec: &str, trace: bool, bundle_args: &[String]) -> Result<(), HarnessError> {
    let tokens = parse_agent_tokens(agents_spec)?;
    let bundles = parse_bundles(bundle_args)?;
    let mut agents = if bundles.is_empty() {
        let mut built = setup_from_tokens(&tokens, Hyper::default()).build(ctx.seed)?;
        built.set_learn(false);
        built
    } else {
        assemble_agents(
            bundle_for_slot(&tokens[0], PhaseRole::Planning, &bundles)?,
            bundle_for_slot(&tokens[1], PhaseRole::Questing, &bundles)?,
            bundle_for_slot(&tokens[2], PhaseRole::Defense, &bundles)?,
        )?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(ctx.seed, &[101]));
    let mut sink = Vec::new();
    let result = play_episode(
        &mut agents,
        &ctx.game,
        &ctx.db,
        &ctx.deck,
        &ctx.copies,
        &mut rng,
        trace.then_some(&mut sink).map(|s| &mut *s),
    )?;
    for line in &sink {
        println!("{line}");
    }
    println!(
        "outcome {} | reward {} | rounds {}",
        result.outcome, result.reward, result.rounds
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_train(
    ctx: &Ctx,
    agents_spec: &str,
    episodes: u32,
    hidden: usize,
    lr: f64,
    gamma: f64,
    interrupt_threshold: Option<f64>,
    interrupt_window: usize,
) -> Result<(), HarnessError> {
    let hyper = Hyper {
        hidden,
        alpha_actor: lr,
        alpha_critic: lr,
        gamma,
    };
    let setup = setup_from_tokens(&parse_agent_tokens(agents_spec)?, hyper);
    let interrupt = interrupt_threshold.map(|threshold| InterruptRule {
        window: interrupt_window,
        threshold,
    });
    let (record, agents) = run_learning(
        &setup,
        &ctx.game,
        episodes,
        interrupt,
        ctx.seed,
        &ctx.db,
        &ctx.deck,
        &ctx.copies,
    )?;
    let log_path = write_out(ctx, "run.csv", &record.to_csv())?;
    let bundle_paths = save_bundles(ctx, &agents)?;
    println!(
        "trained {} episodes at difficulty {} | stop {:?} | final trailing-{} {:.3} | {:.1}s",
        record.episodes_used,
        ctx.game.difficulty,
        record.stop_reason,
        record.trailing_window,
        record.final_trailing().unwrap_or(f64::NAN),
        record.elapsed_secs
    );
    println!("episode log: {}", log_path.display());
    for p in bundle_paths {
        println!("bundle: {}", p.display());
    }
    Ok(())
}

fn run_curriculum(
    ctx: &Ctx,
    cli_config: Option<&PathBuf>,
    strategy: &str,
    agents_spec: &str,
    hyper: Hyper,
) -> Result<(), HarnessError> {
    let kind = match strategy {
        "one-step" => StrategyKind::OneStep,
        "two-step-continued" => StrategyKind::TwoStepContinued,
        "two-step-interrupted" => StrategyKind::TwoStepInterrupted,
        other => {
            return Err(HarnessError::Config(format!(
                "unknown strategy `{other}` (expected one-step, two-step-continued, or two-step-interrupted)"
            )))
        }
    };
    let setup = setup_from_tokens(&parse_agent_tokens(agents_spec)?, hyper);
    let mut spec = StrategySpec::reference(kind, setup);
    spec.game = ctx.game.clone();
    spec.step2_difficulty = ctx.game.difficulty;
    if let Some(path) = cli_config {
        Settings::load(path)?.apply_strategy(&mut spec)?;
    }
    let (text, best) = match kind {
        StrategyKind::OneStep => {
            let (report, best) = one_step(&spec, ctx.seed, &ctx.db, &ctx.deck, &ctx.copies)?;
            (report.render_text(), Some(best))
        }
        StrategyKind::TwoStepContinued => {
            let (report, best) =
                two_step_continued(&spec, ctx.seed, &ctx.db, &ctx.deck, &ctx.copies)?;
            (report.render_text(), best)
        }
        StrategyKind::TwoStepInterrupted => {
            let (report, best) =
                two_step_interrupted(&spec, ctx.seed, &ctx.db, &ctx.deck, &ctx.copies)?;
            (report.render_text(), best)
        }
    };
    print!("{text}");
    let path = write_out(ctx, "strategy_report.txt", &text)?;
    println!("report: {}", path.display());
    if let Some(best) = best {
        for p in save_bundles(ctx, &best)? {
            println!("best bundle: {}", p.display());
        }
    }
    Ok(())
}

fn run_evaluate(
    ctx: &Ctx,
    agents_spec: &str,
    games: u32,
    bundle_args: &[String],
) -> Result<(), HarnessError> {
    let tokens = parse_agent_tokens(agents_spec)?;
    let bundles = parse_bundles(bundle_args)?;
    let agents = assemble_agents(
        bundle_for_slot(&tokens[0], PhaseRole::Planning, &bundles)?,
        bundle_for_slot(&tokens[1], PhaseRole::Questing, &bundles)?,
        bundle_for_slot(&tokens[2], PhaseRole::Defense, &bundles)?,
    )?;
    let report = evaluate(
        &agents, &ctx.game, games, ctx.seed, &ctx.db, &ctx.deck, &ctx.copies,
    )?;
    let text = report.render_text();
    print!("{text}");
    let path = write_out(ctx, "eval.txt", &text)?;
    println!("report: {}", path.display());
    Ok(())
}

fn run_grid(
    ctx: &Ctx,
    games: u32,
    bundle_args: &[String],
    train_episodes: Option<u32>,
    hyper: Hyper,
) -> Result<(), HarnessError> {
    let bundles = if let Some(episodes) = train_episodes {
        let single = |setup: AgentSetup, stream: u64| -> Result<AgentBundle, HarnessError> {
            let (_, agents) = run_learning(
                &setup,
                &ctx.game,
                episodes,
                None,
                crate::derive_seed(ctx.seed, &[201, stream]),
                &ctx.db,
                &ctx.deck,
                &ctx.copies,
            )?;
            Ok(agents.bundles().remove(0))
        };
        let scheme = EncodingScheme::Questing2;
        GridBundles {
            planning: single(
                AgentSetup {
                    planning: SlotSpec::RlDirect(hyper),
                    questing: SlotSpec::Random,
                    defense: SlotSpec::Random,
                    questing_scheme: scheme,
                },
                0,
            )?,
            questing: single(AgentSetup::questing_direct(hyper, scheme), 1)?,
            defense: single(
                AgentSetup {
                    planning: SlotSpec::Random,
                    questing: SlotSpec::Random,
                    defense: SlotSpec::RlDirect(hyper),
                    questing_scheme: scheme,
                },
                2,
            )?,
        }
    } else {
        let loaded = parse_bundles(bundle_args)?;
        let take = |role: PhaseRole| -> Result<AgentBundle, HarnessError> {
            loaded.get(&role).cloned().ok_or_else(|| {
                HarnessError::Config(format!(
                    "the grid needs a {} bundle (or --train-episodes)",
                    role.as_str()
                ))
            })
        };
        GridBundles {
            planning: take(PhaseRole::Planning)?,
            questing: take(PhaseRole::Questing)?,
            defense: take(PhaseRole::Defense)?,
        }
    };
    let report = multiagent_grid(
        &bundles, &ctx.game, games, ctx.seed, &ctx.db, &ctx.deck, &ctx.copies,
    )?;
    let text = report.render_text();
    print!("{text}");
    let path = write_out(ctx, "grid.txt", &text)?;
    println!("report: {}", path.display());
    Ok(())
}

fn run_hpo(ctx: &Ctx, trials: u32, episodes: u32, eval_games: u32) -> Result<(), HarnessError> {
    let trials = hpo_search(
        &HpoSpace::default(),
        trials,
        ctx.seed,
        &ctx.game,
        episodes,
        eval_games,
        &ctx.db,
        &ctx.deck,
        &ctx.copies,
    )?;
    let text = render_trials(&trials);
    print!("{text}");
    let path = write_out(ctx, "hpo.txt", &text)?;
    println!("report: {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    let ctx = load_ctx(&cli)?;
    match &cli.command {
        Command::Play {
            agents,
            trace,
            bundle,
        } => run_play(&ctx, agents, *trace, bundle),
        Command::Train {
            agents,
            episodes,
            hidden,
            lr,
            gamma,
            interrupt_threshold,
            interrupt_window,
        } => run_train(
            &ctx,
            agents,
            *episodes,
            *hidden,
            *lr,
            *gamma,
            *interrupt_threshold,
            *interrupt_window,
        ),
        Command::Curriculum {
            strategy,
            agents,
            hidden,
            lr,
            gamma,
        } => run_curriculum(
            &ctx,
            cli.config.as_ref(),
            strategy,
            agents,
            Hyper {
                hidden: *hidden,
                alpha_actor: *lr,
                alpha_critic: *lr,
                gamma: *gamma,
            },
        ),
        Command::Evaluate {
            agents,
            games,
            bundle,
        } => run_evaluate(&ctx, agents, *games, bundle),
        Command::Grid {
            games,
            bundle,
            train_episodes,
            hidden,
            lr,
            gamma,
        } => run_grid(
            &ctx,
            *games,
            bundle,
            *train_episodes,
            Hyper {
                hidden: *hidden,
                alpha_actor: *lr,
                alpha_critic: *lr,
                gamma: *gamma,
            },
        ),
        Command::Hpo {
            trials,
            episodes,
            eval_games,
        } => run_hpo(&ctx, *trials, *episodes, *eval_games),
    }
}

fn exit_code_for(err: &HarnessError) -> i32 {
    match err {
        HarnessError::Config(_) | HarnessError::BundleMismatch(_) => 2,
        HarnessError::Cards(CardsError::Io { .. }) => 2,
        HarnessError::Cards(_) => 2,
        HarnessError::Agent(AgentError::Format(_)) => 2,
        HarnessError::Curriculum(CurriculumError::Config(_)) => 2,
        HarnessError::Sim(SimError::Config(_)) => 2,
        _ => 1,
    }
}

/// Entry point shared by the binary and the CLI tests. Takes the full argv
/// (including the program name) and returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
