//! Line-oriented `key = value` configuration files. Every game, budget, and
//! interrupt-rule field is addressable; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use super::HarnessError;
use crate::curriculum::{Budget, InterruptRule, StrategySpec};
use crate::engine::GameConfig;

const KNOWN_KEYS: [&str; 17] = [
    "difficulty",
    "seed",
    "max_rounds",
    "starting_threat",
    "opening_hand",
    "step1_difficulties",
    "step1_iterations",
    "step1_episodes",
    "step1_cap",
    "step1_interrupt_window",
    "step1_interrupt_threshold",
    "step2_difficulty",
    "step2_iterations",
    "step2_episodes",
    "step2_cap",
    "step2_interrupt_window",
    "step2_interrupt_threshold",
];
const EXTRA_KEYS: [&str; 2] = ["eval_games", "selection_winrate"];

/// Parsed settings: UTF-8, one `key = value` per line, `#` comments.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: impl AsRef<Path>) -> Result<Settings, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Settings::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Settings, HarnessError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) && !EXTRA_KEYS.contains(&key) {
                return Err(HarnessError::Config(format!(
                    "line {}: unknown key `{key}`",
                    idx + 1
                )));
            }
            values.insert(key.to_string(), value.to_string());
        }
        Ok(Settings { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                HarnessError::Config(format!("bad value `{raw}` for key `{key}`"))
            }),
        }
    }

    /// Overrides game fields present in the file.
    pub fn apply_game(&self, config: &mut GameConfig) -> Result<(), HarnessError> {
        if let Some(v) = self.get("difficulty")? {
            config.difficulty = v;
        }
        if let Some(v) = self.get("seed")? {
            config.seed = v;
        }
        if let Some(v) = self.get("max_rounds")? {
            config.max_rounds = v;
        }
        if let Some(v) = self.get("starting_threat")? {
            config.starting_threat = v;
        }
        if let Some(v) = self.get("opening_hand")? {
            config.opening_hand = v;
        }
        Ok(())
    }

    fn apply_budget(&self, prefix: &str, budget: &mut Budget) -> Result<(), HarnessError> {
        if let Some(v) = self.get(&format!("{prefix}_iterations"))? {
            budget.iterations = v;
        }
        if let Some(v) = self.get(&format!("{prefix}_episodes"))? {
            budget.episodes_per_iteration = v;
        }
        if let Some(v) = self.get(&format!("{prefix}_cap"))? {
            budget.episode_cap = Some(v);
        }
        Ok(())
    }

    fn apply_interrupt(&self, prefix: &str, rule: &mut InterruptRule) -> Result<(), HarnessError> {
        if let Some(v) = self.get(&format!("{prefix}_interrupt_window"))? {
            rule.window = v;
        }
        if let Some(v) = self.get(&format!("{prefix}_interrupt_threshold"))? {
            rule.threshold = v;
        }
        Ok(())
    }

    /// Overrides strategy fields present in the file.
    pub fn apply_strategy(&self, spec: &mut StrategySpec) -> Result<(), HarnessError> {
        self.apply_game(&mut spec.game)?;
        if let Some(raw) = self.values.get("step1_difficulties") {
            let difficulties: Result<Vec<u32>, _> =
                raw.split(',').map(|s| s.trim().parse::<u32>()).collect();
            spec.step1_difficulties = difficulties.map_err(|_| {
                HarnessError::Config(format!("bad value `{raw}` for key `step1_difficulties`"))
            })?;
        }
        if let Some(v) = self.get("step2_difficulty")? {
            spec.step2_difficulty = v;
        }
        self.apply_budget("step1", &mut spec.step1_budget)?;
        self.apply_budget("step2", &mut spec.step2_budget)?;
        self.apply_interrupt("step1", &mut spec.step1_interrupt)?;
        self.apply_interrupt("step2", &mut spec.step2_interrupt)?;
        if let Some(v) = self.get("eval_games")? {
            spec.eval_games = v;
        }
        if let Some(v) = self.get("selection_winrate")? {
            spec.selection = crate::curriculum::SelectionRule::WinrateAbove(v);
        }
        Ok(())
    }
}
