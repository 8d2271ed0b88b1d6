//! The eight-phase round state machine with rule-based activities, random
//! events, and hooks for the three player-decision points (planning,
//! questing, defense).
//!
//! A round cycles Resource -> Planning -> Questing -> Travel -> Encounter ->
//! Defense -> Attack -> Refresh. The game's randomness enters at exactly two
//! points per round: the player card draw in the resource phase and the
//! encounter reveal in the questing phase; `GameState::random_events` counts
//! them.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cards::{
    build_encounter_deck, build_player_deck, CardDb, CardId, CardKind, CardsError, DeckSpec,
    EncounterCopies,
};

/// Threat level at which the game is lost.
pub const THREAT_LIMIT: i64 = 50;
pub const DEFAULT_STARTING_THREAT: i64 = 28;
pub const DEFAULT_OPENING_HAND: usize = 6;
pub const DEFAULT_MAX_ROUNDS: u32 = 72;
pub const MAX_DIFFICULTY: u32 = 20;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cards error: {0}")]
    Cards(#[from] CardsError),
    #[error("card {0} is not in hand")]
    NotInHand(CardId),
    #[error("card {0} costs more than the resource pool holds")]
    Unaffordable(CardId),
    #[error("operation invalid in phase {0:?}")]
    WrongPhase(Phase),
    #[error("character {0} is not ready")]
    NotReady(CardId),
    #[error("character {0} is not on the table")]
    NotOnTable(CardId),
    #[error("transient ally {0} cannot be committed to a quest")]
    TransientCommit(CardId),
    #[error("card {0} is not a valid defender")]
    InvalidDefender(CardId),
    #[error("defender {0} assigned to more than one attacker")]
    DoubleAssignment(CardId),
    #[error("enemy {0} is not engaged")]
    NotEngaged(CardId),
    #[error("game is already over")]
    GameOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Resource,
    Planning,
    Questing,
    Travel,
    Encounter,
    Defense,
    Attack,
    Refresh,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Ongoing,
    Win,
    LossThreat,
    LossHeroesDead,
    LossTimeout,
}

impl Outcome {
    pub fn is_over(self) -> bool {
        self != Outcome::Ongoing
    }

    /// Terminal reward: +1 on a win, -1 on any loss, 0 while ongoing.
    pub fn reward(self) -> f64 {
        match self {
            Outcome::Ongoing => 0.0,
            Outcome::Win => 1.0,
            _ => -1.0,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    /// Quest points needed to win, 1..=20.
    pub difficulty: u32,
    pub seed: u64,
    pub max_rounds: u32,
    pub starting_threat: i64,
    pub opening_hand: usize,
}

impl GameConfig {
    pub fn new(difficulty: u32, seed: u64) -> GameConfig {
        GameConfig {
            difficulty,
            seed,
            max_rounds: DEFAULT_MAX_ROUNDS,
            starting_threat: DEFAULT_STARTING_THREAT,
            opening_hand: DEFAULT_OPENING_HAND,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.difficulty < 1 || self.difficulty > MAX_DIFFICULTY {
            return Err(EngineError::Config(format!(
                "difficulty must be in 1..={MAX_DIFFICULTY}, got {}",
                self.difficulty
            )));
        }
        if self.max_rounds == 0 {
            return Err(EngineError::Config("max_rounds must be >= 1".into()));
        }
        if self.opening_hand > 30 {
            return Err(EngineError::Config(format!(
                "opening_hand must be <= 30, got {}",
                self.opening_hand
            )));
        }
        if self.starting_threat < 0 || self.starting_threat >= THREAT_LIMIT {
            return Err(EngineError::Config(format!(
                "starting_threat must be in 0..{THREAT_LIMIT}, got {}",
                self.starting_threat
            )));
        }
        Ok(())
    }
}

/// A character on the table. A character whose damage reaches its hit points
/// is removed immediately, so `damage < hit_points` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharacterInPlay {
    pub card: CardId,
    pub damage: u32,
    pub exhausted: bool,
    pub committed: bool,
}

impl CharacterInPlay {
    pub fn ready(card: CardId) -> CharacterInPlay {
        CharacterInPlay {
            card,
            damage: 0,
            exhausted: false,
            committed: false,
        }
    }

    pub fn is_ready(&self) -> bool {
        !self.exhausted && !self.committed
    }
}

/// An enemy in the engagement area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngagedEnemy {
    pub card: CardId,
    pub damage: u32,
}

/// Full mutable game situation. Single-threaded: move it between threads,
/// never share it mutably.
#[derive(Debug, Clone)]
pub struct GameState {
    pub round: u32,
    pub phase: Phase,
    pub threat_level: i64,
    pub resource_pool: u32,
    pub hand: Vec<CardId>,
    pub table: Vec<CharacterInPlay>,
    pub staging_area: Vec<CardId>,
    pub engagement_area: Vec<EngagedEnemy>,
    pub active_location: Option<(CardId, u32)>,
    pub quest_progress: u32,
    pub player_deck: Vec<CardId>,
    pub player_discard: Vec<CardId>,
    pub encounter_deck: Vec<CardId>,
    pub encounter_discard: Vec<CardId>,
    pub outcome: Outcome,
    pub difficulty: u32,
    pub max_rounds: u32,
    /// Count of RNG-consuming events so far (player draws and encounter
    /// reveals).
    pub random_events: u64,
    rng: ChaCha8Rng,
}

/// Starts a new game: round 1, resource phase, threat at the configured
/// start, heroes on the table ready, and the opening hand drawn from the
/// shuffled player deck.
pub fn new_game(
    config: &GameConfig,
    db: &CardDb,
    deck: &DeckSpec,
    copies: &EncounterCopies,
) -> Result<GameState, EngineError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut player_deck = build_player_deck(db, deck, &mut rng)?;
    let encounter_deck = build_encounter_deck(db, copies, &mut rng)?;
    let hand: Vec<CardId> = player_deck.drain(..config.opening_hand).collect();
    let table: Vec<CharacterInPlay> = db
        .of_kind(CardKind::Hero)
        .map(|d| CharacterInPlay::ready(d.id))
        .collect();
    Ok(GameState {
        round: 1,
        phase: Phase::Resource,
        threat_level: config.starting_threat,
        resource_pool: 0,
        hand,
        table,
        staging_area: Vec::new(),
        engagement_area: Vec::new(),
        active_location: None,
        quest_progress: 0,
        player_deck,
        player_discard: Vec::new(),
        encounter_deck,
        encounter_discard: Vec::new(),
        outcome: Outcome::Ongoing,
        difficulty: config.difficulty,
        max_rounds: config.max_rounds,
        random_events: 0,
        rng,
    })
}

impl GameState {
    fn check_phase(&self, expected: Phase) -> Result<(), EngineError> {
        if self.outcome.is_over() {
            return Err(EngineError::GameOver);
        }
        if self.phase != expected {
            return Err(EngineError::WrongPhase(self.phase));
        }
        Ok(())
    }

    pub fn heroes_alive(&self, db: &CardDb) -> usize {
        self.table
            .iter()
            .filter(|c| db.def(c.card).kind == CardKind::Hero)
            .count()
    }

    /// Sum of threat over all staging-area cards (enemies and lands).
    pub fn combined_threat(&self, db: &CardDb) -> u32 {
        self.staging_area.iter().map(|&id| db.def(id).threat).sum()
    }

    /// Subset of the hand affordable at the current pool, ascending id order,
    /// duplicates collapsed.
    pub fn affordable_cards(&self, db: &CardDb) -> Vec<CardId> {
        let mut ids: Vec<CardId> = self
            .hand
            .iter()
            .copied()
            .filter(|&id| db.def(id).cost <= self.resource_pool)
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Gains one resource per surviving hero and draws one card (a no-op on
    /// an empty player deck). Advances to Planning.
    pub fn resource_phase(&mut self, db: &CardDb) -> Result<(), EngineError> {
        self.check_phase(Phase::Resource)?;
        self.resource_pool += self.heroes_alive(db) as u32;
        if !self.player_deck.is_empty() {
            let idx = self.rng.random_range(0..self.player_deck.len());
            let card = self.player_deck.swap_remove(idx);
            self.hand.push(card);
            self.random_events += 1;
        }
        self.phase = Phase::Planning;
        Ok(())
    }

    /// Plays one ally from hand to the table, paying its cost.
    pub fn apply_planning(&mut self, db: &CardDb, card: CardId) -> Result<(), EngineError> {
        self.check_phase(Phase::Planning)?;
        let pos = self
            .hand
            .iter()
            .position(|&c| c == card)
            .ok_or(EngineError::NotInHand(card))?;
        let cost = db.def(card).cost;
        if cost > self.resource_pool {
            return Err(EngineError::Unaffordable(card));
        }
        self.hand.remove(pos);
        self.resource_pool -= cost;
        self.table.push(CharacterInPlay::ready(card));
        Ok(())
    }

    /// Closes the planning phase and advances to Questing.
    pub fn end_planning(&mut self) -> Result<(), EngineError> {
        self.check_phase(Phase::Planning)?;
        self.phase = Phase::Questing;
        Ok(())
    }

    /// Commits the listed characters, reveals one encounter card into the
    /// staging area (the round's second random event), and resolves committed
    /// willpower against the combined threat. Win and loss checks run here.
    pub fn questing_phase(&mut self, db: &CardDb, committed: &[CardId]) -> Result<(), EngineError> {
        self.check_phase(Phase::Questing)?;
        let mut chosen: Vec<usize> = Vec::with_capacity(committed.len());
        for &id in committed {
            let def = db.def(id);
            if def.kind != CardKind::Hero && def.kind != CardKind::Ally {
                return Err(EngineError::NotOnTable(id));
            }
            if def.transient {
                return Err(EngineError::TransientCommit(id));
            }
            // Each listed id claims one distinct table copy.
            let pos = self
                .table
                .iter()
                .enumerate()
                .position(|(i, c)| c.card == id && !chosen.contains(&i))
                .ok_or(EngineError::NotOnTable(id))?;
            if !self.table[pos].is_ready() {
                return Err(EngineError::NotReady(id));
            }
            chosen.push(pos);
        }
        let mut willpower: u32 = 0;
        for &pos in &chosen {
            self.table[pos].exhausted = true;
            self.table[pos].committed = true;
            willpower += db.def(self.table[pos].card).willpower;
        }
        self.reveal_encounter();
        let threat = self.combined_threat(db);
        if willpower > threat {
            self.apply_progress(db, willpower - threat);
            if self.quest_progress >= self.difficulty {
                self.outcome = Outcome::Win;
            }
        } else if willpower < threat {
            self.threat_level += (threat - willpower) as i64;
            if self.threat_level >= THREAT_LIMIT {
                self.outcome = Outcome::LossThreat;
            }
        }
        self.phase = Phase::Travel;
        Ok(())
    }

    fn reveal_encounter(&mut self) {
        if self.encounter_deck.is_empty() {
            self.encounter_deck.append(&mut self.encounter_discard);
        }
        if self.encounter_deck.is_empty() {
            return;
        }
        let idx = self.rng.random_range(0..self.encounter_deck.len());
        let card = self.encounter_deck.swap_remove(idx);
        self.staging_area.push(card);
        self.random_events += 1;
    }

    fn apply_progress(&mut self, db: &CardDb, mut delta: u32) {
        if let Some((loc, progress)) = self.active_location {
            let needed = db.def(loc).quest_points - progress;
            if delta >= needed {
                delta -= needed;
                self.active_location = None;
                self.encounter_discard.push(loc);
            } else {
                self.active_location = Some((loc, progress + delta));
                return;
            }
        }
        self.quest_progress += delta;
    }

    /// Makes the highest-threat staging land the active location if none is
    /// set; otherwise a no-op. Advances to Encounter.
    pub fn travel_phase(&mut self, db: &CardDb) -> Result<(), EngineError> {
        self.check_phase(Phase::Travel)?;
        if self.active_location.is_none() {
            let best = self
                .staging_area
                .iter()
                .enumerate()
                .filter(|(_, &id)| db.def(id).kind == CardKind::Land)
                .max_by(|(_, &a), (_, &b)| {
                    db.def(a)
                        .threat
                        .cmp(&db.def(b).threat)
                        // Ties break toward the lowest id for determinism.
                        .then(b.cmp(&a))
                })
                .map(|(i, _)| i);
            if let Some(i) = best {
                let loc = self.staging_area.remove(i);
                self.active_location = Some((loc, 0));
            }
        }
        self.phase = Phase::Encounter;
        Ok(())
    }

    /// Moves every staging enemy with engagement cost at or below the threat
    /// level into the engagement area, in ascending engagement-cost order.
    pub fn encounter_phase(&mut self, db: &CardDb) -> Result<(), EngineError> {
        self.check_phase(Phase::Encounter)?;
        let mut engaging: Vec<CardId> = self
            .staging_area
            .iter()
            .copied()
            .filter(|&id| {
                let def = db.def(id);
                def.kind == CardKind::Enemy && (def.engagement_cost as i64) <= self.threat_level
            })
            .collect();
        engaging.sort_by_key(|&id| (db.def(id).engagement_cost, id));
        for id in &engaging {
            let pos = self.staging_area.iter().position(|c| c == id).unwrap();
            self.staging_area.remove(pos);
            self.engagement_area.push(EngagedEnemy {
                card: *id,
                damage: 0,
            });
        }
        self.phase = Phase::Defense;
        Ok(())
    }

    /// Engaged-enemy traversal order used by the defense phase and the
    /// defense decoder: ascending id, stable among copies.
    pub fn engaged_attack_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.engagement_area.len()).collect();
        order.sort_by_key(|&i| (self.engagement_area[i].card, i));
        order
    }

    /// Resolves every engaged enemy's attack. `assignments` pairs attacker
    /// ids with an optional defender; entries are consumed in the attack
    /// traversal order, and attackers without an entry are undefended. An
    /// undefended attack strikes the surviving hero with the most remaining
    /// hit points for full damage.
    pub fn defense_phase(
        &mut self,
        db: &CardDb,
        assignments: &[(CardId, Option<CardId>)],
    ) -> Result<(), EngineError> {
        self.check_phase(Phase::Defense)?;
        let mut seen_defenders: Vec<CardId> = Vec::new();
        for &(attacker, defender) in assignments {
            if !self.engagement_area.iter().any(|e| e.card == attacker) {
                return Err(EngineError::NotEngaged(attacker));
            }
            if let Some(d) = defender {
                if seen_defenders.contains(&d) {
                    return Err(EngineError::DoubleAssignment(d));
                }
                let entry = self
                    .table
                    .iter()
                    .find(|c| c.card == d && c.is_ready())
                    .ok_or(EngineError::InvalidDefender(d))?;
                debug_assert!(entry.is_ready());
                seen_defenders.push(d);
            }
        }
        let order = self.engaged_attack_order();
        let mut pending: Vec<Option<(CardId, Option<CardId>)>> =
            assignments.iter().copied().map(Some).collect();
        for idx in order {
            if self.outcome.is_over() {
                break;
            }
            let attacker = self.engagement_area[idx].card;
            let attack = db.def(attacker).attack;
            let assigned = pending
                .iter_mut()
                .find(|slot| matches!(slot, Some((a, _)) if *a == attacker))
                .and_then(Option::take)
                .and_then(|(_, d)| d);
            // A defender that already left play (killed by an earlier
            // undefended attack this phase) no longer blocks; the attack
            // resolves undefended instead.
            let defender_pos = assigned.and_then(|d| {
                self.table
                    .iter()
                    .position(|c| c.card == d && c.is_ready())
            });
            match defender_pos {
                Some(pos) => {
                    let defender = self.table[pos].card;
                    self.table[pos].exhausted = true;
                    let damage = attack.saturating_sub(db.def(defender).defense);
                    self.damage_character(db, pos, damage);
                }
                None => {
                    let target = self
                        .table
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| db.def(c.card).kind == CardKind::Hero)
                        .max_by_key(|(_, c)| {
                            let remaining = db.def(c.card).hit_points - c.damage;
                            (remaining, std::cmp::Reverse(c.card))
                        })
                        .map(|(i, _)| i);
                    if let Some(pos) = target {
                        self.damage_character(db, pos, attack);
                    }
                }
            }
            if self.heroes_alive(db) == 0 {
                self.outcome = Outcome::LossHeroesDead;
            }
        }
        if !self.outcome.is_over() {
            self.phase = Phase::Attack;
        }
        Ok(())
    }

    fn damage_character(&mut self, db: &CardDb, pos: usize, damage: u32) {
        if damage == 0 {
            return;
        }
        let card = self.table[pos].card;
        let hp = db.def(card).hit_points;
        if self.table[pos].damage + damage >= hp {
            self.table.remove(pos);
            self.player_discard.push(card);
        } else {
            self.table[pos].damage += damage;
        }
    }

    /// All ready, uncommitted characters jointly strike the engaged enemy
    /// with the fewest remaining hit points; the attackers exhaust.
    pub fn attack_phase(&mut self, db: &CardDb) -> Result<(), EngineError> {
        self.check_phase(Phase::Attack)?;
        let attackers: Vec<usize> = self
            .table
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_ready())
            .map(|(i, _)| i)
            .collect();
        if !attackers.is_empty() && !self.engagement_area.is_empty() {
            let target = self
                .engagement_area
                .iter()
                .enumerate()
                .min_by_key(|(i, e)| {
                    let remaining = db.def(e.card).hit_points - e.damage;
                    (remaining, e.card, *i)
                })
                .map(|(i, _)| i)
                .unwrap();
            let total_attack: u32 = attackers
                .iter()
                .map(|&i| db.def(self.table[i].card).attack)
                .sum();
            for &i in &attackers {
                self.table[i].exhausted = true;
            }
            let enemy = self.engagement_area[target].card;
            let damage = total_attack.saturating_sub(db.def(enemy).defense);
            if self.engagement_area[target].damage + damage >= db.def(enemy).hit_points {
                self.engagement_area.remove(target);
                self.encounter_discard.push(enemy);
            } else {
                self.engagement_area[target].damage += damage;
            }
        }
        self.phase = Phase::Refresh;
        Ok(())
    }

    /// Readies every character, discards transient allies, raises the threat
    /// level by one, and opens the next round. Threat and timeout losses are
    /// checked here.
    pub fn refresh_phase(&mut self, db: &CardDb) -> Result<(), EngineError> {
        self.check_phase(Phase::Refresh)?;
        for c in &mut self.table {
            c.exhausted = false;
            c.committed = false;
        }
        let mut i = 0;
        while i < self.table.len() {
            if db.def(self.table[i].card).transient {
                let card = self.table.remove(i).card;
                self.player_discard.push(card);
            } else {
                i += 1;
            }
        }
        self.threat_level += 1;
        if self.threat_level >= THREAT_LIMIT {
            self.outcome = Outcome::LossThreat;
            return Ok(());
        }
        self.round += 1;
        if self.round > self.max_rounds {
            self.outcome = Outcome::LossTimeout;
            return Ok(());
        }
        self.phase = Phase::Resource;
        Ok(())
    }

    /// Deterministic line-oriented text dump: one zone per line, ids
    /// ascending where the zone is unordered. Used by replay tests.
    pub fn dump(&self) -> String {
        let sorted = |cards: &[CardId]| {
            let mut v: Vec<u8> = cards.iter().map(|c| c.0).collect();
            v.sort_unstable();
            v.iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut table: Vec<&CharacterInPlay> = self.table.iter().collect();
        table.sort_by_key(|c| c.card);
        let table_str = table
            .iter()
            .map(|c| {
                format!(
                    "{}:{}:{}{}",
                    c.card,
                    c.damage,
                    if c.exhausted { "x" } else { "r" },
                    if c.committed { "c" } else { "" }
                )
            })
            .collect::<Vec<_>>()
            .join(" ");
        let mut engaged: Vec<&EngagedEnemy> = self.engagement_area.iter().collect();
        engaged.sort_by_key(|e| (e.card, e.damage));
        let engaged_str = engaged
            .iter()
            .map(|e| format!("{}:{}", e.card, e.damage))
            .collect::<Vec<_>>()
            .join(" ");
        let active = match self.active_location {
            Some((loc, progress)) => format!("{loc}:{progress}"),
            None => "-".to_string(),
        };
        format!(
            "round {}\nphase {}\nthreat {}\npool {}\nprogress {}\noutcome {}\nevents {}\nhand {}\ntable {}\nstaging {}\nengagement {}\nactive {}\nplayer_deck {}\nplayer_discard {}\nencounter_deck {}\nencounter_discard {}\n",
            self.round,
            self.phase,
            self.threat_level,
            self.resource_pool,
            self.quest_progress,
            self.outcome,
            self.random_events,
            sorted(&self.hand),
            table_str,
            sorted(&self.staging_area),
            engaged_str,
            active,
            sorted(&self.player_deck),
            sorted(&self.player_discard),
            sorted(&self.encounter_deck),
            sorted(&self.encounter_discard),
        )
    }

    /// Multiset census over every zone; each physical card copy must live in
    /// exactly one zone at all times.
    pub fn zone_census(&self) -> std::collections::BTreeMap<CardId, u32> {
        let mut census = std::collections::BTreeMap::new();
        let mut add = |id: CardId| *census.entry(id).or_insert(0u32) += 1;
        for &c in &self.hand {
            add(c);
        }
        for c in &self.table {
            add(c.card);
        }
        for &c in &self.staging_area {
            add(c);
        }
        for e in &self.engagement_area {
            add(e.card);
        }
        if let Some((loc, _)) = self.active_location {
            add(loc);
        }
        for &c in &self.player_deck {
            add(c);
        }
        for &c in &self.player_discard {
            add(c);
        }
        for &c in &self.encounter_deck {
            add(c);
        }
        for &c in &self.encounter_discard {
            add(c);
        }
        census
    }
}
