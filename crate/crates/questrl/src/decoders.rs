//! Translates agent outputs into executable game actions: beta-weighted
//! macroactions that rank cards by a willpower/defense weighting, and direct
//! card choice (a purchase loop in planning, a one-shot commit mask in
//! questing, per-attacker picks in defense).

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::{ActionQuery, AgentError, PhaseAgent, TakenAction};
use crate::cards::{CardDb, CardDef, CardId, CardKind};
use crate::encoders::{encode_defense, encode_planning, encode_questing, EncodeError, EncodingScheme};
use crate::engine::{EngineError, GameState};

/// The six admissible macroaction weights.
pub const BETA_VALUES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Planning action space: 17 hand slots plus an explicit pass.
pub const PLANNING_ACTIONS: usize = 18;
pub const PLANNING_PASS: usize = 17;
/// Questing commit mask: 3 heroes plus 15 non-transient allies.
pub const QUESTING_SLOTS: usize = 18;
/// Defense action space: 18 character slots plus "no defender".
pub const DEFENSE_ACTIONS: usize = 19;
pub const DEFENSE_NONE: usize = 18;

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("agent returned an action of the wrong kind")]
    WrongActionKind,
}

/// Planning rank score: (beta * willpower + (1 - beta) * defense) / cost,
/// with a zero-cost denominator clamped to one.
pub fn planning_score(card: &CardDef, beta: f64) -> f64 {
    let numerator = beta * card.willpower as f64 + (1.0 - beta) * card.defense as f64;
    numerator / (card.cost.max(1) as f64)
}

/// Questing rank score: committed characters have no cost, so the
/// denominator is fixed at one.
pub fn questing_score(card: &CardDef, beta: f64) -> f64 {
    beta * card.willpower as f64 + (1.0 - beta) * card.defense as f64
}

/// Sorts indices by descending score with ascending card-id tie-break.
fn rank_by_score(ids: &[CardId], score: impl Fn(CardId) -> f64) -> Vec<CardId> {
    let mut ranked: Vec<CardId> = ids.to_vec();
    ranked.sort_by(|&a, &b| {
        score(b)
            .partial_cmp(&score(a))
            .unwrap()
            .then(a.cmp(&b))
    });
    ranked
}

/// Buys cards greedily in descending rank order until nothing affordable
/// remains; applies each purchase and returns the purchase list in order.
pub fn macro_planning(
    state: &mut GameState,
    db: &CardDb,
    beta: f64,
) -> Result<Vec<CardId>, DecoderError> {
    let ranked = rank_by_score(&state.hand.clone(), |id| planning_score(db.def(id), beta));
    let mut purchases = Vec::new();
    for id in ranked {
        if db.def(id).cost <= state.resource_pool {
            state.apply_planning(db, id)?;
            purchases.push(id);
        }
    }
    Ok(purchases)
}

/// Commits ready non-transient characters in descending rank order until the
/// committed willpower exceeds the staging area's combined threat, then
/// resolves the questing phase. Returns the commit list.
pub fn macro_questing(
    state: &mut GameState,
    db: &CardDb,
    beta: f64,
) -> Result<Vec<CardId>, DecoderError> {
    let candidates: Vec<CardId> = state
        .table
        .iter()
        .filter(|c| c.is_ready() && !db.def(c.card).transient)
        .map(|c| c.card)
        .collect();
    let ranked = rank_by_score(&candidates, |id| questing_score(db.def(id), beta));
    let threat = state.combined_threat(db);
    let mut committed = Vec::new();
    let mut willpower = 0u32;
    for id in ranked {
        committed.push(id);
        willpower += db.def(id).willpower;
        if willpower > threat {
            break;
        }
    }
    state.questing_phase(db, &committed)?;
    Ok(committed)
}

/// Direct planning: repeatedly offer the affordable cards plus a pass action;
/// apply each chosen purchase; stop on pass or when nothing is affordable.
/// Every intermediate decision flows through the agent's learning hook.
pub fn direct_planning_loop(
    agent: &mut PhaseAgent,
    state: &mut GameState,
    db: &CardDb,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CardId>, DecoderError> {
    let mut purchases = Vec::new();
    loop {
        let affordable = state.affordable_cards(db);
        if affordable.is_empty() {
            break;
        }
        let features = encode_planning(state, db)?;
        let mut mask = vec![false; PLANNING_ACTIONS];
        for id in &affordable {
            mask[(id.0 - 3) as usize] = true;
        }
        mask[PLANNING_PASS] = true;
        let action = agent.decide(&features, ActionQuery::Choice { mask: &mask }, rng)?;
        let TakenAction::Index { index, .. } = action else {
            return Err(DecoderError::WrongActionKind);
        };
        if index == PLANNING_PASS {
            break;
        }
        let card = CardId(index as u8 + 3);
        state.apply_planning(db, card)?;
        purchases.push(card);
    }
    Ok(purchases)
}

fn questing_legal_slots(state: &GameState, db: &CardDb) -> Vec<bool> {
    let mut legal = vec![false; QUESTING_SLOTS];
    for c in &state.table {
        if !c.is_ready() {
            continue;
        }
        let def = db.def(c.card);
        let slot = c.card.0 as usize;
        match def.kind {
            CardKind::Hero => legal[slot] = true,
            CardKind::Ally if !def.transient => legal[slot] = true,
            _ => {}
        }
    }
    legal
}

/// Direct questing: encode once, obtain an 18-slot commit mask, convert set
/// bits to card ids, and resolve the questing phase. Bits on illegal slots
/// are never set by the legality filter.
pub fn direct_questing(
    agent: &mut PhaseAgent,
    state: &mut GameState,
    db: &CardDb,
    scheme: EncodingScheme,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CardId>, DecoderError> {
    let features = encode_questing(state, db, scheme)?;
    let legal = questing_legal_slots(state, db);
    let action = agent.decide(&features, ActionQuery::Commit { legal: &legal }, rng)?;
    let TakenAction::Commit { bits, .. } = action else {
        return Err(DecoderError::WrongActionKind);
    };
    let committed: Vec<CardId> = bits
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b)
        .map(|(slot, _)| CardId(slot as u8))
        .collect();
    state.questing_phase(db, &committed)?;
    Ok(committed)
}

/// Direct defense: per engaged enemy in attack order, offer the ready
/// characters not yet chosen this phase plus "no defender"; then resolve the
/// defense phase with the accumulated assignments.
pub fn direct_defense(
    agent: &mut PhaseAgent,
    state: &mut GameState,
    db: &CardDb,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(CardId, Option<CardId>)>, DecoderError> {
    let attackers: Vec<CardId> = state
        .engaged_attack_order()
        .iter()
        .map(|&i| state.engagement_area[i].card)
        .collect();
    let mut assignments: Vec<(CardId, Option<CardId>)> = Vec::new();
    let mut used: Vec<CardId> = Vec::new();
    for attacker in attackers {
        let features = encode_defense(state, db, attacker)?;
        let mut mask = vec![false; DEFENSE_ACTIONS];
        for c in &state.table {
            let slot = c.card.0 as usize;
            if c.is_ready() && slot < DEFENSE_NONE && !used.contains(&c.card) {
                mask[slot] = true;
            }
        }
        mask[DEFENSE_NONE] = true;
        let action = agent.decide(&features, ActionQuery::Choice { mask: &mask }, rng)?;
        let TakenAction::Index { index, .. } = action else {
            return Err(DecoderError::WrongActionKind);
        };
        if index == DEFENSE_NONE {
            assignments.push((attacker, None));
        } else {
            let defender = CardId(index as u8);
            used.push(defender);
            assignments.push((attacker, Some(defender)));
        }
    }
    state.defense_phase(db, &assignments)?;
    Ok(assignments)
}
