//! Fixed-length feature vectors for each decision phase.
//!
//! Card slots are binary presence indicators (duplicate copies collapse to a
//! single 1); scalar tail entries carry raw unnormalized integers.

use thiserror::Error;

use crate::cards::{CardDb, CardId, CardKind, FIRST_ALLY_ID, FIRST_ENEMY_ID, FIRST_LAND_ID};
use crate::engine::{GameState, Phase};

/// Hand ally slots in the planning vector (ids 3..=19).
pub const PLANNING_ALLY_SLOTS: usize = 17;
/// Enemy slots shared by every scheme (ids 22..=36).
pub const ENEMY_SLOTS: usize = 15;
/// Character slots shared by the questing and defense schemes: 3 heroes plus
/// the 15 non-transient allies (ids 3..=17).
pub const CHARACTER_SLOTS: usize = 18;
/// Land slots in questing encoding type 1 (ids 37..=42).
pub const LAND_SLOTS: usize = 6;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("encoder invalid in phase {0:?}")]
    WrongPhase(Phase),
    #[error("attacker {0} is not engaged")]
    AttackerNotEngaged(CardId),
    #[error("{0:?} is not a questing scheme")]
    NotAQuestingScheme(EncodingScheme),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncodingScheme {
    Planning,
    Questing0,
    Questing1,
    Questing2,
    Questing3,
    Defense,
}

impl EncodingScheme {
    pub fn dimension(self) -> usize {
        match self {
            EncodingScheme::Planning => 33,
            EncodingScheme::Questing0 => 34,
            EncodingScheme::Questing1 => 40,
            EncodingScheme::Questing2 => 34,
            EncodingScheme::Questing3 => 34,
            EncodingScheme::Defense => 48,
        }
    }

    pub fn questing(kind: u8) -> Option<EncodingScheme> {
        match kind {
            0 => Some(EncodingScheme::Questing0),
            1 => Some(EncodingScheme::Questing1),
            2 => Some(EncodingScheme::Questing2),
            3 => Some(EncodingScheme::Questing3),
            _ => None,
        }
    }

    pub fn is_questing(self) -> bool {
        matches!(
            self,
            EncodingScheme::Questing0
                | EncodingScheme::Questing1
                | EncodingScheme::Questing2
                | EncodingScheme::Questing3
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingScheme::Planning => "planning",
            EncodingScheme::Questing0 => "questing0",
            EncodingScheme::Questing1 => "questing1",
            EncodingScheme::Questing2 => "questing2",
            EncodingScheme::Questing3 => "questing3",
            EncodingScheme::Defense => "defense",
        }
    }

    pub fn parse(s: &str) -> Option<EncodingScheme> {
        match s {
            "planning" => Some(EncodingScheme::Planning),
            "questing0" => Some(EncodingScheme::Questing0),
            "questing1" => Some(EncodingScheme::Questing1),
            "questing2" => Some(EncodingScheme::Questing2),
            "questing3" => Some(EncodingScheme::Questing3),
            "defense" => Some(EncodingScheme::Defense),
            _ => None,
        }
    }
}

/// Fixed-length numeric observation produced by one encoding scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub scheme: EncodingScheme,
    pub values: Vec<f64>,
}

impl FeatureVector {
    fn zeros(scheme: EncodingScheme) -> FeatureVector {
        FeatureVector {
            scheme,
            values: vec![0.0; scheme.dimension()],
        }
    }

    /// Space-separated integer rendering used by the trace CLI.
    pub fn render(&self) -> String {
        self.values
            .iter()
            .map(|v| format!("{}", *v as i64))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn ally_slot(id: CardId) -> usize {
    (id.0 - FIRST_ALLY_ID) as usize
}

fn enemy_slot(id: CardId) -> usize {
    (id.0 - FIRST_ENEMY_ID) as usize
}

fn land_slot(id: CardId) -> usize {
    (id.0 - FIRST_LAND_ID) as usize
}

/// Planning features: 17 hand-ally slots, 15 staging-enemy slots, and the
/// resource pool.
pub fn encode_planning(state: &GameState, db: &CardDb) -> Result<FeatureVector, EncodeError> {
    if state.phase != Phase::Planning {
        return Err(EncodeError::WrongPhase(state.phase));
    }
    let mut fv = FeatureVector::zeros(EncodingScheme::Planning);
    for &id in &state.hand {
        fv.values[ally_slot(id)] = 1.0;
    }
    for &id in &state.staging_area {
        if db.def(id).kind == CardKind::Enemy {
            fv.values[PLANNING_ALLY_SLOTS + enemy_slot(id)] = 1.0;
        }
    }
    fv.values[32] = state.resource_pool as f64;
    Ok(fv)
}

/// Fills the 18 character slots shared by the questing schemes: heroes by id,
/// then non-transient allies at slot = id.
fn fill_character_slots(values: &mut [f64], state: &GameState, db: &CardDb) {
    for c in &state.table {
        let def = db.def(c.card);
        match def.kind {
            CardKind::Hero => values[c.card.0 as usize] = 1.0,
            CardKind::Ally if !def.transient => values[c.card.0 as usize] = 1.0,
            _ => {}
        }
    }
}

/// Questing features for encoding types 0-3. Types differ in the enemy zone
/// observed (staging vs engagement) and the scalar tail (round number vs
/// combined threat).
pub fn encode_questing(
    state: &GameState,
    db: &CardDb,
    scheme: EncodingScheme,
) -> Result<FeatureVector, EncodeError> {
    if !scheme.is_questing() {
        return Err(EncodeError::NotAQuestingScheme(scheme));
    }
    if state.phase != Phase::Questing {
        return Err(EncodeError::WrongPhase(state.phase));
    }
    let mut fv = FeatureVector::zeros(scheme);
    fill_character_slots(&mut fv.values, state, db);
    let staging_enemies = || {
        state
            .staging_area
            .iter()
            .copied()
            .filter(|&id| db.def(id).kind == CardKind::Enemy)
    };
    match scheme {
        EncodingScheme::Questing0 => {
            for id in staging_enemies() {
                fv.values[CHARACTER_SLOTS + enemy_slot(id)] = 1.0;
            }
            fv.values[33] = state.round as f64;
        }
        EncodingScheme::Questing1 => {
            for &id in &state.staging_area {
                if db.def(id).kind == CardKind::Land {
                    fv.values[CHARACTER_SLOTS + land_slot(id)] = 1.0;
                }
            }
            if let Some((loc, _)) = state.active_location {
                fv.values[CHARACTER_SLOTS + land_slot(loc)] = 1.0;
            }
            for id in staging_enemies() {
                fv.values[CHARACTER_SLOTS + LAND_SLOTS + enemy_slot(id)] = 1.0;
            }
            fv.values[39] = state.round as f64;
        }
        EncodingScheme::Questing2 => {
            for id in staging_enemies() {
                fv.values[CHARACTER_SLOTS + enemy_slot(id)] = 1.0;
            }
            fv.values[33] = state.combined_threat(db) as f64;
        }
        EncodingScheme::Questing3 => {
            for e in &state.engagement_area {
                fv.values[CHARACTER_SLOTS + enemy_slot(e.card)] = 1.0;
            }
            fv.values[33] = state.combined_threat(db) as f64;
        }
        _ => unreachable!(),
    }
    Ok(fv)
}

/// Defense features for one attacker: ready uncommitted heroes and allies,
/// engaged enemies, and a one-hot of the current attacker.
pub fn encode_defense(
    state: &GameState,
    db: &CardDb,
    attacker: CardId,
) -> Result<FeatureVector, EncodeError> {
    if !state.engagement_area.iter().any(|e| e.card == attacker) {
        return Err(EncodeError::AttackerNotEngaged(attacker));
    }
    let mut fv = FeatureVector::zeros(EncodingScheme::Defense);
    for c in &state.table {
        if !c.is_ready() {
            continue;
        }
        let def = db.def(c.card);
        match def.kind {
            CardKind::Hero => fv.values[c.card.0 as usize] = 1.0,
            CardKind::Ally if !def.transient => fv.values[c.card.0 as usize] = 1.0,
            _ => {}
        }
    }
    for e in &state.engagement_area {
        fv.values[CHARACTER_SLOTS + enemy_slot(e.card)] = 1.0;
    }
    fv.values[CHARACTER_SLOTS + ENEMY_SLOTS + enemy_slot(attacker)] = 1.0;
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cards::{DeckSpec, EncounterCopies};
    use crate::engine::{new_game, CharacterInPlay, EngagedEnemy, GameConfig};

    fn surgical(phase: Phase) -> (GameState, CardDb) {
        let db = CardDb::builtin();
        let mut state = new_game(
            &GameConfig::new(8, 1),
            &db,
            &DeckSpec::builtin(),
            &EncounterCopies::builtin(),
        )
        .unwrap();
        state.phase = phase;
        state.hand.clear();
        state.player_deck.clear();
        state.encounter_deck.clear();
        state.staging_area.clear();
        (state, db)
    }

    fn one_slots(fv: &FeatureVector) -> Vec<usize> {
        fv.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn planning_reproduces_the_worked_example() {
        let (mut state, db) = surgical(Phase::Planning);
        state.hand = vec![CardId(3), CardId(8), CardId(9), CardId(16)];
        state.staging_area = vec![CardId(22), CardId(28), CardId(30)];
        state.resource_pool = 5;
        let fv = encode_planning(&state, &db).unwrap();
        assert_eq!(fv.values.len(), 33);
        assert_eq!(one_slots(&fv), vec![0, 5, 6, 13, 17, 23, 25]);
        assert_eq!(fv.values[32], 5.0);
    }

    #[test]
    fn planning_empty_state_is_the_zero_vector() {
        let (state, db) = surgical(Phase::Planning);
        let fv = encode_planning(&state, &db).unwrap();
        // Heroes are not part of the planning vector.
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planning_duplicates_collapse_to_binary_presence() {
        let (mut state, db) = surgical(Phase::Planning);
        state.hand = vec![CardId(9), CardId(9)];
        let fv = encode_planning(&state, &db).unwrap();
        assert_eq!(fv.values[6], 1.0);
        assert_eq!(one_slots(&fv).len(), 1);
    }

    #[test]
    fn planning_ignores_staging_lands_and_engagement() {
        let (mut state, db) = surgical(Phase::Planning);
        state.staging_area = vec![CardId(37)];
        state.engagement_area = vec![EngagedEnemy {
            card: CardId(28),
            damage: 0,
        }];
        let fv = encode_planning(&state, &db).unwrap();
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planning_requires_the_planning_phase() {
        let (state, db) = surgical(Phase::Questing);
        assert!(matches!(
            encode_planning(&state, &db),
            Err(EncodeError::WrongPhase(Phase::Questing))
        ));
    }

    #[test]
    fn questing2_reproduces_the_worked_example() {
        let (mut state, db) = surgical(Phase::Questing);
        state.staging_area = vec![CardId(22), CardId(28), CardId(30)];
        state.table.push(CharacterInPlay::ready(CardId(3)));
        state.table.push(CharacterInPlay::ready(CardId(9)));
        let fv = encode_questing(&state, &db, EncodingScheme::Questing2).unwrap();
        assert_eq!(fv.values.len(), 34);
        assert_eq!(one_slots(&fv), vec![0, 1, 2, 3, 9, 18, 24, 26]);
        assert_eq!(fv.values[33], 7.0);
    }

    #[test]
    fn questing0_tail_is_the_round_number() {
        let (mut state, db) = surgical(Phase::Questing);
        state.round = 3;
        let fv = encode_questing(&state, &db, EncodingScheme::Questing0).unwrap();
        assert_eq!(fv.values.len(), 34);
        assert_eq!(one_slots(&fv), vec![0, 1, 2]);
        assert_eq!(fv.values[33], 3.0);
        state.round = 1;
        let fresh = encode_questing(&state, &db, EncodingScheme::Questing0).unwrap();
        assert_eq!(fresh.values[33], 1.0);
    }

    #[test]
    fn questing1_sees_lands_and_the_active_location() {
        let (mut state, db) = surgical(Phase::Questing);
        state.staging_area = vec![CardId(38), CardId(22)];
        state.active_location = Some((CardId(42), 1));
        state.round = 4;
        let fv = encode_questing(&state, &db, EncodingScheme::Questing1).unwrap();
        assert_eq!(fv.values.len(), 40);
        // Land slots 18..23: Forest Gate (38) -> 19, Great Forest Web (42) -> 23.
        // Enemy slots 24..38: Forest Spider (22) -> 24.
        assert_eq!(one_slots(&fv), vec![0, 1, 2, 19, 23, 24]);
        assert_eq!(fv.values[39], 4.0);
    }

    #[test]
    fn questing3_reads_the_engagement_area_and_staging_threat() {
        let (mut state, db) = surgical(Phase::Questing);
        state.staging_area = vec![CardId(30)];
        state.engagement_area = vec![EngagedEnemy {
            card: CardId(28),
            damage: 1,
        }];
        let fv = encode_questing(&state, &db, EncodingScheme::Questing3).unwrap();
        assert_eq!(one_slots(&fv), vec![0, 1, 2, 24]);
        assert_eq!(fv.values[33], 3.0);
    }

    #[test]
    fn questing3_with_no_engagement_keeps_the_threat_tail() {
        let (mut state, db) = surgical(Phase::Questing);
        state.staging_area = vec![CardId(22), CardId(28)];
        let fv = encode_questing(&state, &db, EncodingScheme::Questing3).unwrap();
        assert_eq!(one_slots(&fv), vec![0, 1, 2]);
        assert_eq!(fv.values[33], 4.0);
    }

    #[test]
    fn questing_excludes_transient_allies() {
        let (mut state, db) = surgical(Phase::Questing);
        state.table.push(CharacterInPlay::ready(CardId(18)));
        state.table.push(CharacterInPlay::ready(CardId(17)));
        let fv = encode_questing(&state, &db, EncodingScheme::Questing2).unwrap();
        assert_eq!(one_slots(&fv), vec![0, 1, 2, 17]);
    }

    #[test]
    fn questing2_is_invariant_to_the_round_number() {
        let (mut state, db) = surgical(Phase::Questing);
        state.staging_area = vec![CardId(22)];
        let a = encode_questing(&state, &db, EncodingScheme::Questing2).unwrap();
        state.round = 17;
        let b = encode_questing(&state, &db, EncodingScheme::Questing2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn defense_reproduces_the_slot_arithmetic() {
        let (mut state, db) = surgical(Phase::Defense);
        state.engagement_area = vec![
            EngagedEnemy {
                card: CardId(22),
                damage: 0,
            },
            EngagedEnemy {
                card: CardId(28),
                damage: 0,
            },
        ];
        let fv = encode_defense(&state, &db, CardId(28)).unwrap();
        assert_eq!(fv.values.len(), 48);
        // Heroes 0..2; enemies at 18+0 and 18+6; attacker one-hot at 33+6.
        assert_eq!(one_slots(&fv), vec![0, 1, 2, 18, 24, 39]);
    }

    #[test]
    fn defense_hides_exhausted_characters() {
        let (mut state, db) = surgical(Phase::Defense);
        state.engagement_area = vec![EngagedEnemy {
            card: CardId(22),
            damage: 0,
        }];
        for c in &mut state.table {
            c.exhausted = true;
        }
        let fv = encode_defense(&state, &db, CardId(22)).unwrap();
        assert!(fv.values[..CHARACTER_SLOTS].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn defense_rejects_unengaged_attackers() {
        let (state, db) = surgical(Phase::Defense);
        assert!(matches!(
            encode_defense(&state, &db, CardId(30)),
            Err(EncodeError::AttackerNotEngaged(_))
        ));
    }

    #[test]
    fn dimensions_match_the_scheme_table() {
        let expected = [
            (EncodingScheme::Planning, 33),
            (EncodingScheme::Questing0, 34),
            (EncodingScheme::Questing1, 40),
            (EncodingScheme::Questing2, 34),
            (EncodingScheme::Questing3, 34),
            (EncodingScheme::Defense, 48),
        ];
        for (scheme, dim) in expected {
            assert_eq!(scheme.dimension(), dim);
        }
    }

    #[test]
    fn render_prints_space_separated_integers() {
        let (mut state, db) = surgical(Phase::Planning);
        state.hand = vec![CardId(3)];
        state.resource_pool = 4;
        let fv = encode_planning(&state, &db).unwrap();
        let rendered = fv.render();
        assert!(rendered.starts_with("1 0 0"));
        assert!(rendered.ends_with(" 4"));
        assert_eq!(rendered.split(' ').count(), 33);
    }
}
