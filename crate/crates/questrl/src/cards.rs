//! Static card database, deck specifications, and seeded deck construction.
//!
//! Card ids follow a fixed global layout: heroes 0-2, allies 3-19, enemies
//! 22-36, lands 37-42. Ids 20-21 are reserved and never used. Allies 18-19
//! are transient: they leave play at the end of every round and can never be
//! committed to a quest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const HERO_COUNT: usize = 3;
pub const ALLY_COUNT: usize = 17;
pub const ENEMY_COUNT: usize = 15;
pub const LAND_COUNT: usize = 6;

pub const FIRST_ALLY_ID: u8 = 3;
pub const LAST_ALLY_ID: u8 = 19;
pub const FIRST_ENEMY_ID: u8 = 22;
pub const LAST_ENEMY_ID: u8 = 36;
pub const FIRST_LAND_ID: u8 = 37;
pub const LAST_LAND_ID: u8 = 42;
/// Transient allies: playable and usable in defense or attack, discarded at
/// the end of every round, never committable to quests.
pub const TRANSIENT_IDS: [u8; 2] = [18, 19];

/// Number of cards in a legal player deck.
pub const PLAYER_DECK_SIZE: u32 = 30;

const CARD_DB_HEADER: &str =
    "id,name,kind,cost,willpower,attack,defense,hit_points,threat,engagement_cost,quest_points,transient";
const COPIES_HEADER: &str = "id,copies";

const BUILTIN_CARDS: &str = include_str!("../data/cards.csv");
const BUILTIN_ENCOUNTER_COPIES: &str = include_str!("../data/encounter_copies.csv");
const BUILTIN_PLAYER_DECK: &str = include_str!("../data/player_deck.csv");

#[derive(Debug, Error)]
pub enum CardsError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

impl CardsError {
    fn format(line: usize, message: impl Into<String>) -> Self {
        CardsError::Format {
            line,
            message: message.into(),
        }
    }

    fn schema(message: impl Into<String>) -> Self {
        CardsError::Schema(message.into())
    }
}

/// Identifier into the fixed global card layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CardId(pub u8);

impl fmt::Display for CardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl CardId {
    pub fn kind_from_layout(self) -> Option<CardKind> {
        match self.0 {
            0..=2 => Some(CardKind::Hero),
            FIRST_ALLY_ID..=LAST_ALLY_ID => Some(CardKind::Ally),
            FIRST_ENEMY_ID..=LAST_ENEMY_ID => Some(CardKind::Enemy),
            FIRST_LAND_ID..=LAST_LAND_ID => Some(CardKind::Land),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CardKind {
    Hero,
    Ally,
    Enemy,
    Land,
}

impl CardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CardKind::Hero => "hero",
            CardKind::Ally => "ally",
            CardKind::Enemy => "enemy",
            CardKind::Land => "land",
        }
    }

    fn parse(s: &str) -> Option<CardKind> {
        match s {
            "hero" => Some(CardKind::Hero),
            "ally" => Some(CardKind::Ally),
            "enemy" => Some(CardKind::Enemy),
            "land" => Some(CardKind::Land),
            _ => None,
        }
    }
}

/// Static card record. Fields that do not apply to the card's kind are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardDef {
    pub id: CardId,
    pub name: String,
    pub kind: CardKind,
    pub cost: u32,
    pub willpower: u32,
    pub attack: u32,
    pub defense: u32,
    pub hit_points: u32,
    pub threat: u32,
    pub engagement_cost: u32,
    pub quest_points: u32,
    pub transient: bool,
}

/// Validated, immutable card database. Safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardDb {
    defs: BTreeMap<CardId, CardDef>,
}

impl CardDb {
    pub fn load(path: impl AsRef<Path>) -> Result<CardDb, CardsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CardsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        CardDb::parse(&text)
    }

    pub fn parse(text: &str) -> Result<CardDb, CardsError> {
        let mut defs: BTreeMap<CardId, CardDef> = BTreeMap::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != CARD_DB_HEADER {
                    return Err(CardsError::format(
                        line_no,
                        format!("expected header `{CARD_DB_HEADER}`"),
                    ));
                }
                saw_header = true;
                continue;
            }
            let def = parse_card_row(line, line_no)?;
            if defs.contains_key(&def.id) {
                return Err(CardsError::schema(format!("duplicate id {}", def.id)));
            }
            defs.insert(def.id, def);
        }
        if !saw_header {
            return Err(CardsError::format(1, "missing header line"));
        }
        let db = CardDb { defs };
        db.validate()?;
        Ok(db)
    }

    /// The card set shipped with the crate.
    pub fn builtin() -> CardDb {
        CardDb::parse(BUILTIN_CARDS).expect("builtin card data is valid")
    }

    fn validate(&self) -> Result<(), CardsError> {
        let mut counts = [0usize; 4];
        for def in self.defs.values() {
            let slot = match def.kind {
                CardKind::Hero => 0,
                CardKind::Ally => 1,
                CardKind::Enemy => 2,
                CardKind::Land => 3,
            };
            counts[slot] += 1;
        }
        let expect = [HERO_COUNT, ALLY_COUNT, ENEMY_COUNT, LAND_COUNT];
        let names = ["hero", "ally", "enemy", "land"];
        for i in 0..4 {
            if counts[i] != expect[i] {
                return Err(CardsError::schema(format!(
                    "expected {} {} cards, found {}",
                    expect[i], names[i], counts[i]
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: CardId) -> Option<&CardDef> {
        self.defs.get(&id)
    }

    /// Definition lookup for an id known to be in the database.
    pub fn def(&self, id: CardId) -> &CardDef {
        self.defs
            .get(&id)
            .unwrap_or_else(|| panic!("card id {id} not in database"))
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CardDef> {
        self.defs.values()
    }

    pub fn of_kind(&self, kind: CardKind) -> impl Iterator<Item = &CardDef> {
        self.defs.values().filter(move |d| d.kind == kind)
    }

    pub fn hero_ids(&self) -> Vec<CardId> {
        self.of_kind(CardKind::Hero).map(|d| d.id).collect()
    }

    /// Serializes back to the file format; `parse(to_csv())` reproduces the
    /// records field-for-field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CARD_DB_HEADER);
        out.push('\n');
        for def in self.defs.values() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                def.id,
                def.name,
                def.kind.as_str(),
                def.cost,
                def.willpower,
                def.attack,
                def.defense,
                def.hit_points,
                def.threat,
                def.engagement_cost,
                def.quest_points,
                def.transient
            ));
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn def_mut(&mut self, id: CardId) -> &mut CardDef {
        self.defs.get_mut(&id).expect("card id in database")
    }
}

fn parse_card_row(line: &str, line_no: usize) -> Result<CardDef, CardsError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 12 {
        return Err(CardsError::format(
            line_no,
            format!("expected 12 fields, found {}", fields.len()),
        ));
    }
    let id_raw: u8 = fields[0]
        .parse()
        .map_err(|_| CardsError::format(line_no, format!("bad id `{}`", fields[0])))?;
    let id = CardId(id_raw);
    let kind = CardKind::parse(fields[2])
        .ok_or_else(|| CardsError::format(line_no, format!("unknown kind `{}`", fields[2])))?;
    let layout_kind = id.kind_from_layout().ok_or_else(|| {
        CardsError::format(line_no, format!("id {id_raw} outside the global layout"))
    })?;
    if kind != layout_kind {
        return Err(CardsError::format(
            line_no,
            format!(
                "id {id_raw} lies in the {} range but is declared {}",
                layout_kind.as_str(),
                kind.as_str()
            ),
        ));
    }
    let num = |i: usize| -> Result<u32, CardsError> {
        fields[i].parse().map_err(|_| {
            CardsError::format(line_no, format!("bad integer `{}` in field {}", fields[i], i))
        })
    };
    let transient = match fields[11] {
        "true" => true,
        "false" => false,
        other => {
            return Err(CardsError::format(
                line_no,
                format!("bad boolean `{other}` in field 11"),
            ))
        }
    };
    let def = CardDef {
        id,
        name: fields[1].to_string(),
        kind,
        cost: num(3)?,
        willpower: num(4)?,
        attack: num(5)?,
        defense: num(6)?,
        hit_points: num(7)?,
        threat: num(8)?,
        engagement_cost: num(9)?,
        quest_points: num(10)?,
        transient,
    };
    validate_card(&def, line_no)?;
    Ok(def)
}

fn validate_card(def: &CardDef, line_no: usize) -> Result<(), CardsError> {
    let bad = |msg: String| Err(CardsError::format(line_no, msg));
    let id = def.id.0;
    match def.kind {
        CardKind::Hero => {
            if def.hit_points == 0 {
                return bad(format!("hero {id} must have hit_points >= 1"));
            }
            if def.cost != 0 || def.threat != 0 || def.engagement_cost != 0 || def.quest_points != 0
            {
                return bad(format!("hero {id} has non-zero non-hero fields"));
            }
            if def.transient {
                return bad(format!("hero {id} cannot be transient"));
            }
        }
        CardKind::Ally => {
            if def.hit_points == 0 {
                return bad(format!("ally {id} must have hit_points >= 1"));
            }
            if def.cost == 0 {
                return bad(format!("ally {id} must have cost >= 1"));
            }
            if def.threat != 0 || def.engagement_cost != 0 || def.quest_points != 0 {
                return bad(format!("ally {id} has non-zero encounter fields"));
            }
            let should_be_transient = TRANSIENT_IDS.contains(&id);
            if def.transient != should_be_transient {
                return bad(format!(
                    "ally {id} transient flag must be {should_be_transient}"
                ));
            }
        }
        CardKind::Enemy => {
            if def.hit_points == 0 {
                return bad(format!("enemy {id} must have hit_points >= 1"));
            }
            if def.cost != 0 || def.willpower != 0 || def.quest_points != 0 || def.transient {
                return bad(format!("enemy {id} has non-zero player-card fields"));
            }
        }
        CardKind::Land => {
            if def.quest_points == 0 {
                return bad(format!("land {id} must have quest_points >= 1"));
            }
            if def.cost != 0
                || def.willpower != 0
                || def.attack != 0
                || def.defense != 0
                || def.hit_points != 0
                || def.engagement_cost != 0
                || def.transient
            {
                return bad(format!("land {id} has non-zero character fields"));
            }
        }
    }
    Ok(())
}

/// List of (card id, copy count) pairs; the shared representation behind the
/// player deck specification and the encounter copy table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyList {
    pub entries: Vec<(CardId, u32)>,
}

impl CopyList {
    pub fn total(&self) -> u32 {
        self.entries.iter().map(|(_, n)| n).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CopyList, CardsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CardsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        CopyList::parse(&text)
    }

    pub fn parse(text: &str) -> Result<CopyList, CardsError> {
        let mut entries = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != COPIES_HEADER {
                    return Err(CardsError::format(
                        line_no,
                        format!("expected header `{COPIES_HEADER}`"),
                    ));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(CardsError::format(
                    line_no,
                    format!("expected 2 fields, found {}", fields.len()),
                ));
            }
            let id: u8 = fields[0]
                .parse()
                .map_err(|_| CardsError::format(line_no, format!("bad id `{}`", fields[0])))?;
            let copies: u32 = fields[1]
                .parse()
                .map_err(|_| CardsError::format(line_no, format!("bad count `{}`", fields[1])))?;
            if !seen.insert(id) {
                return Err(CardsError::schema(format!("duplicate id {id}")));
            }
            entries.push((CardId(id), copies));
        }
        if !saw_header {
            return Err(CardsError::format(1, "missing header line"));
        }
        Ok(CopyList { entries })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(COPIES_HEADER);
        out.push('\n');
        for (id, copies) in &self.entries {
            out.push_str(&format!("{id},{copies}\n"));
        }
        out
    }

    fn expand(&self) -> Vec<CardId> {
        let mut cards = Vec::with_capacity(self.total() as usize);
        for &(id, copies) in &self.entries {
            for _ in 0..copies {
                cards.push(id);
            }
        }
        cards
    }
}

/// Player deck specification: ally ids with copy counts summing to 30.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeckSpec(pub CopyList);

impl DeckSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<DeckSpec, CardsError> {
        Ok(DeckSpec(CopyList::load(path)?))
    }

    pub fn parse(text: &str) -> Result<DeckSpec, CardsError> {
        Ok(DeckSpec(CopyList::parse(text)?))
    }

    pub fn builtin() -> DeckSpec {
        DeckSpec::parse(BUILTIN_PLAYER_DECK).expect("builtin deck spec is valid")
    }

    pub fn validate(&self, db: &CardDb) -> Result<(), CardsError> {
        for &(id, _) in &self.0.entries {
            let def = db
                .get(id)
                .ok_or_else(|| CardsError::schema(format!("unknown card id {id}")))?;
            if def.kind != CardKind::Ally {
                return Err(CardsError::schema(format!(
                    "deck spec id {id} is a {}, not an ally",
                    def.kind.as_str()
                )));
            }
        }
        let total = self.0.total();
        if total != PLAYER_DECK_SIZE {
            return Err(CardsError::schema(format!(
                "deck spec totals {total} copies, expected {PLAYER_DECK_SIZE}"
            )));
        }
        Ok(())
    }
}

/// Encounter deck copy table over enemy and land ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncounterCopies(pub CopyList);

impl EncounterCopies {
    pub fn load(path: impl AsRef<Path>) -> Result<EncounterCopies, CardsError> {
        Ok(EncounterCopies(CopyList::load(path)?))
    }

    pub fn parse(text: &str) -> Result<EncounterCopies, CardsError> {
        Ok(EncounterCopies(CopyList::parse(text)?))
    }

    pub fn builtin() -> EncounterCopies {
        EncounterCopies::parse(BUILTIN_ENCOUNTER_COPIES).expect("builtin copy table is valid")
    }

    pub fn validate(&self, db: &CardDb) -> Result<(), CardsError> {
        for &(id, _) in &self.0.entries {
            let def = db
                .get(id)
                .ok_or_else(|| CardsError::schema(format!("unknown card id {id}")))?;
            if def.kind != CardKind::Enemy && def.kind != CardKind::Land {
                return Err(CardsError::schema(format!(
                    "copy table id {id} is a {}, not an enemy or land",
                    def.kind.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Builds the shuffled 30-card player deck. Shuffling consumes the RNG
/// deterministically: the same seed always yields the same order.
pub fn build_player_deck(
    db: &CardDb,
    spec: &DeckSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CardId>, CardsError> {
    spec.validate(db)?;
    let mut cards = spec.0.expand();
    cards.shuffle(rng);
    Ok(cards)
}

/// Builds the shuffled encounter deck from a copy table (default: two copies
/// of each enemy and land, 42 cards).
pub fn build_encounter_deck(
    db: &CardDb,
    copies: &EncounterCopies,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CardId>, CardsError> {
    copies.validate(db)?;
    let mut cards = copies.0.expand();
    cards.shuffle(rng);
    Ok(cards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::BTreeMap;

    fn multiset(cards: &[CardId]) -> BTreeMap<CardId, u32> {
        let mut m = BTreeMap::new();
        for &c in cards {
            *m.entry(c).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn builtin_db_has_expected_cardinality() {
        let db = CardDb::builtin();
        assert_eq!(db.len(), 41);
        assert_eq!(db.of_kind(CardKind::Hero).count(), 3);
        assert_eq!(db.of_kind(CardKind::Ally).count(), 17);
        assert_eq!(db.of_kind(CardKind::Enemy).count(), 15);
        assert_eq!(db.of_kind(CardKind::Land).count(), 6);
    }

    #[test]
    fn named_cards_resolve_to_their_ids() {
        let db = CardDb::builtin();
        for (id, name, kind) in [
            (3, "Lorien Guide", CardKind::Ally),
            (8, "Northern Tracker", CardKind::Ally),
            (9, "Wandering Took", CardKind::Ally),
            (16, "Gandalf", CardKind::Ally),
            (22, "Forest Spider", CardKind::Enemy),
            (28, "King Spider", CardKind::Enemy),
            (30, "Ungoliants Spawn", CardKind::Enemy),
        ] {
            let def = db.def(CardId(id));
            assert_eq!(def.name, name);
            assert_eq!(def.kind, kind);
        }
    }

    #[test]
    fn fixture_costs_match_the_planning_arithmetic() {
        // Pool 5 -> play 9 (cost 2) -> pool 3 -> play 3 (cost 3) -> pool 0.
        let db = CardDb::builtin();
        assert_eq!(db.def(CardId(9)).cost, 2);
        assert_eq!(db.def(CardId(3)).cost, 3);
        assert_eq!(db.def(CardId(8)).cost, 4);
        assert_eq!(db.def(CardId(16)).cost, 5);
    }

    #[test]
    fn duplicate_id_is_a_schema_error() {
        let text = format!(
            "{CARD_DB_HEADER}\n\
             8,Northern Tracker,ally,4,1,1,2,3,0,0,0,false\n\
             8,Northern Tracker,ally,4,1,1,2,3,0,0,0,false\n"
        );
        match CardDb::parse(&text) {
            Err(CardsError::Schema(msg)) => assert!(msg.contains("duplicate id 8"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_reports_line_number() {
        let text = format!("{CARD_DB_HEADER}\n3,Lorien Guide,sorcery,3,1,1,0,2,0,0,0,false\n");
        match CardDb::parse(&text) {
            Err(CardsError::Format { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("sorcery"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_cardinality_is_a_schema_error() {
        // A lone ally row parses but fails the per-kind counts.
        let text = format!("{CARD_DB_HEADER}\n3,Lorien Guide,ally,3,1,1,0,2,0,0,0,false\n");
        assert!(matches!(CardDb::parse(&text), Err(CardsError::Schema(_))));
    }

    #[test]
    fn parse_reads_row_fields_verbatim() {
        // Oracle: the literal row below, re-read by hand.
        let mut rows = String::from(CARD_DB_HEADER);
        rows.push('\n');
        let db = CardDb::builtin();
        for def in db.iter() {
            if def.id == CardId(3) {
                rows.push_str("3,Lorien Guide,ally,2,1,1,1,2,0,0,0,false\n");
            } else {
                rows.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    def.id,
                    def.name,
                    def.kind.as_str(),
                    def.cost,
                    def.willpower,
                    def.attack,
                    def.defense,
                    def.hit_points,
                    def.threat,
                    def.engagement_cost,
                    def.quest_points,
                    def.transient
                ));
            }
        }
        let parsed = CardDb::parse(&rows).unwrap();
        let def = parsed.def(CardId(3));
        assert_eq!(def.cost, 2);
        assert_eq!(def.willpower, 1);
        assert_eq!(def.defense, 1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let db = CardDb::builtin();
        let reparsed = CardDb::parse(&db.to_csv()).unwrap();
        assert_eq!(db, reparsed);
    }

    #[test]
    fn single_type_deck_has_one_permutation() {
        let db = CardDb::builtin();
        let spec = DeckSpec(CopyList {
            entries: vec![(CardId(3), 30)],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let deck = build_player_deck(&db, &spec, &mut rng).unwrap();
        assert_eq!(deck, vec![CardId(3); 30]);
    }

    #[test]
    fn player_deck_shuffle_is_deterministic_per_seed() {
        let db = CardDb::builtin();
        let spec = DeckSpec::builtin();
        let a = build_player_deck(&db, &spec, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = build_player_deck(&db, &spec, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let c = build_player_deck(&db, &spec, &mut ChaCha8Rng::seed_from_u64(43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn deck_construction_is_a_permutation() {
        let db = CardDb::builtin();
        let spec = DeckSpec::builtin();
        let deck = build_player_deck(&db, &spec, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(deck.len(), 30);
        assert_eq!(multiset(&deck), multiset(&spec.0.expand()));
    }

    #[test]
    fn encounter_deck_defaults_to_42_cards() {
        let db = CardDb::builtin();
        let copies = EncounterCopies::builtin();
        assert_eq!(copies.0.total(), 42);
        let a = build_encounter_deck(&db, &copies, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = build_encounter_deck(&db, &copies, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.len(), 42);
        assert_eq!(a, b);
        assert_eq!(multiset(&a), multiset(&copies.0.expand()));
    }

    #[test]
    fn copy_table_rejects_ally_ids() {
        let db = CardDb::builtin();
        let copies = EncounterCopies(CopyList {
            entries: vec![(CardId(9), 2)],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            build_encounter_deck(&db, &copies, &mut rng),
            Err(CardsError::Schema(_))
        ));
    }

    #[test]
    fn deck_spec_rejects_non_ally_and_wrong_total() {
        let db = CardDb::builtin();
        let enemy_spec = DeckSpec(CopyList {
            entries: vec![(CardId(22), 30)],
        });
        assert!(matches!(
            enemy_spec.validate(&db),
            Err(CardsError::Schema(_))
        ));
        let short_spec = DeckSpec(CopyList {
            entries: vec![(CardId(3), 29)],
        });
        assert!(matches!(
            short_spec.validate(&db),
            Err(CardsError::Schema(_))
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            CardDb::load("/nonexistent/cards.csv"),
            Err(CardsError::Io { .. })
        ));
    }

    #[test]
    fn transient_flags_are_pinned_to_ids_18_and_19() {
        let db = CardDb::builtin();
        for def in db.of_kind(CardKind::Ally) {
            assert_eq!(def.transient, TRANSIENT_IDS.contains(&def.id.0));
        }
        // Marking a non-transient ally transient violates the schema.
        let bad = CardDb::builtin()
            .to_csv()
            .replace("9,Wandering Took,ally,2,1,1,1,2,0,0,0,false", "9,Wandering Took,ally,2,1,1,1,2,0,0,0,true");
        assert!(CardDb::parse(&bad).is_err());
    }
}
