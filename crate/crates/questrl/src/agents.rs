//! Decision policies behind one common contract: the online actor-critic
//! agent and the uniform-random baseline, plus the per-phase transition
//! bookkeeping that feeds them.
//!
//! The actor-critic performs one TD(0) update per decision, online, with no
//! replay. Intermediate rewards are zero; the terminal reward is +1 or -1.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::derive_seed;
use crate::encoders::{EncodingScheme, FeatureVector};
use crate::neural::{masked_softmax, sigmoid, Mlp, NeuralError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("action mask has no legal option")]
    EmptyMask,
    #[error("action query does not match the agent's head")]
    HeadMismatch,
    #[error("scripted policy ran out of moves")]
    ScriptExhausted,
    #[error("bundle format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// One atomic decision as taken, including the legality context needed to
/// recompute its probability.
#[derive(Debug, Clone, PartialEq)]
pub enum TakenAction {
    /// Categorical pick over a masked action set.
    Index { index: usize, mask: Vec<bool> },
    /// Per-slot commit mask over a legality mask.
    Commit { bits: Vec<bool>, legal: Vec<bool> },
}

/// What kind of decision the caller needs.
#[derive(Debug, Clone, Copy)]
pub enum ActionQuery<'a> {
    Choice { mask: &'a [bool] },
    Commit { legal: &'a [bool] },
}

/// One learning transition. `done` holds exactly when `next_state` is absent,
/// and the reward is nonzero only on terminal transitions.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: TakenAction,
    pub reward: f64,
    pub next_state: Option<Vec<f64>>,
    pub done: bool,
}

/// Common contract used by every decoder: sample a legal action and learn
/// from observed transitions (a no-op for baselines).
pub trait DecisionPolicy {
    fn act(
        &mut self,
        features: &[f64],
        query: ActionQuery<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TakenAction, f64), AgentError>;

    fn observe(&mut self, transition: &Transition);
}

/// Output head of the actor network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorHead {
    /// Masked softmax over the output logits; one sample.
    Categorical,
    /// Independent two-point choice per output slot via a sigmoid.
    SlotMask,
}

impl ActorHead {
    pub fn as_str(self) -> &'static str {
        match self {
            ActorHead::Categorical => "choice",
            ActorHead::SlotMask => "mask",
        }
    }

    pub fn parse(s: &str) -> Option<ActorHead> {
        match s {
            "choice" => Some(ActorHead::Categorical),
            "mask" => Some(ActorHead::SlotMask),
            _ => None,
        }
    }
}

/// Learning-rate and discount settings for one actor-critic agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub hidden: usize,
    pub alpha_actor: f64,
    pub alpha_critic: f64,
    pub gamma: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            hidden: 70,
            alpha_actor: 6e-4,
            alpha_critic: 6e-4,
            gamma: 0.99,
        }
    }
}

impl Hyper {
    pub fn with_learning_rate(hidden: usize, lr: f64) -> Hyper {
        Hyper {
            hidden,
            alpha_actor: lr,
            alpha_critic: lr,
            ..Hyper::default()
        }
    }
}

/// Two small feed-forward networks (policy and value) updated online per
/// decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub head: ActorHead,
    pub alpha_actor: f64,
    pub alpha_critic: f64,
    pub gamma: f64,
}

impl ActorCriticAgent {
    pub fn new(
        input_dim: usize,
        action_dim: usize,
        head: ActorHead,
        hyper: Hyper,
        seed: u64,
    ) -> Result<ActorCriticAgent, AgentError> {
        let actor = Mlp::init(input_dim, hyper.hidden, action_dim, derive_seed(seed, &[1]))?;
        let critic = Mlp::init(input_dim, hyper.hidden, 1, derive_seed(seed, &[2]))?;
        Ok(ActorCriticAgent {
            actor,
            critic,
            head,
            alpha_actor: hyper.alpha_actor,
            alpha_critic: hyper.alpha_critic,
            gamma: hyper.gamma,
        })
    }

    /// State value estimate v(s) from the critic.
    pub fn value(&self, state: &[f64]) -> f64 {
        self.critic.forward(state).0[0]
    }

    /// One-step TD error: r + gamma * v(s') - v(s), with v(s') = 0 at
    /// terminal transitions.
    pub fn td_error(&self, t: &Transition) -> f64 {
        let v_next = match (&t.next_state, t.done) {
            (Some(s), false) => self.value(s),
            _ => 0.0,
        };
        t.reward + self.gamma * v_next - self.value(&t.state)
    }

    /// Log-probability of a realized action under the current policy.
    pub fn log_prob(&self, state: &[f64], action: &TakenAction) -> Result<f64, AgentError> {
        let (out, _) = self.actor.forward(state);
        match (self.head, action) {
            (ActorHead::Categorical, TakenAction::Index { index, mask }) => {
                let probs = masked_softmax(&out, mask).map_err(empty_mask)?;
                Ok(probs[*index].ln())
            }
            (ActorHead::SlotMask, TakenAction::Commit { bits, legal }) => {
                let mut lp = 0.0;
                for i in 0..out.len() {
                    if legal[i] {
                        let p = sigmoid(out[i]);
                        lp += if bits[i] { p.ln() } else { (1.0 - p).ln() };
                    }
                }
                Ok(lp)
            }
            _ => Err(AgentError::HeadMismatch),
        }
    }

    /// Gradient of ln pi(a|s) with respect to the actor outputs.
    fn actor_output_gradient(&self, out: &[f64], action: &TakenAction) -> Result<Vec<f64>, AgentError> {
        match (self.head, action) {
            (ActorHead::Categorical, TakenAction::Index { index, mask }) => {
                let probs = masked_softmax(out, mask).map_err(empty_mask)?;
                let mut g = vec![0.0; out.len()];
                for j in 0..out.len() {
                    if mask[j] {
                        g[j] = if j == *index { 1.0 - probs[j] } else { -probs[j] };
                    }
                }
                Ok(g)
            }
            (ActorHead::SlotMask, TakenAction::Commit { bits, legal }) => {
                let mut g = vec![0.0; out.len()];
                for i in 0..out.len() {
                    if legal[i] {
                        g[i] = (bits[i] as u8 as f64) - sigmoid(out[i]);
                    }
                }
                Ok(g)
            }
            _ => Err(AgentError::HeadMismatch),
        }
    }
}

fn empty_mask(e: NeuralError) -> AgentError {
    match e {
        NeuralError::EmptyMask => AgentError::EmptyMask,
        other => AgentError::Neural(other),
    }
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if draw < acc {
                return i;
            }
        }
    }
    last_positive
}

impl DecisionPolicy for ActorCriticAgent {
    fn act(
        &mut self,
        features: &[f64],
        query: ActionQuery<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TakenAction, f64), AgentError> {
        let (out, _) = self.actor.forward(features);
        match (self.head, query) {
            (ActorHead::Categorical, ActionQuery::Choice { mask }) => {
                let probs = masked_softmax(&out, mask).map_err(empty_mask)?;
                let index = sample_categorical(&probs, rng);
                let logprob = probs[index].ln();
                Ok((
                    TakenAction::Index {
                        index,
                        mask: mask.to_vec(),
                    },
                    logprob,
                ))
            }
            (ActorHead::SlotMask, ActionQuery::Commit { legal }) => {
                let mut bits = vec![false; out.len()];
                let mut logprob = 0.0;
                for i in 0..out.len() {
                    if legal[i] {
                        let p = sigmoid(out[i]);
                        let bit = rng.random::<f64>() < p;
                        bits[i] = bit;
                        logprob += if bit { p.ln() } else { (1.0 - p).ln() };
                    }
                }
                Ok((
                    TakenAction::Commit {
                        bits,
                        legal: legal.to_vec(),
                    },
                    logprob,
                ))
            }
            _ => Err(AgentError::HeadMismatch),
        }
    }

    fn observe(&mut self, t: &Transition) {
        debug_assert_eq!(t.done, t.next_state.is_none());
        let delta = self.td_error(t);
        let (_, critic_trace) = self.critic.forward(&t.state);
        let critic_grads = self.critic.backward(critic_trace, &[1.0]);
        self.critic
            .apply_gradients(&critic_grads, self.alpha_critic * delta);
        let (out, actor_trace) = self.actor.forward(&t.state);
        let out_grad = self
            .actor_output_gradient(&out, &t.action)
            .expect("transition action matches the actor head");
        let actor_grads = self.actor.backward(actor_trace, &out_grad);
        self.actor
            .apply_gradients(&actor_grads, self.alpha_actor * delta);
    }
}

/// Uniform baseline: equiprobable legal choices, fair coin per legal slot.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomAgent;

impl DecisionPolicy for RandomAgent {
    fn act(
        &mut self,
        _features: &[f64],
        query: ActionQuery<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TakenAction, f64), AgentError> {
        match query {
            ActionQuery::Choice { mask } => {
                let legal: Vec<usize> = mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m)
                    .map(|(i, _)| i)
                    .collect();
                if legal.is_empty() {
                    return Err(AgentError::EmptyMask);
                }
                let index = legal[rng.random_range(0..legal.len())];
                Ok((
                    TakenAction::Index {
                        index,
                        mask: mask.to_vec(),
                    },
                    -(legal.len() as f64).ln(),
                ))
            }
            ActionQuery::Commit { legal } => {
                let mut bits = vec![false; legal.len()];
                let mut n_legal = 0usize;
                for i in 0..legal.len() {
                    if legal[i] {
                        bits[i] = rng.random::<f64>() < 0.5;
                        n_legal += 1;
                    }
                }
                Ok((
                    TakenAction::Commit {
                        bits,
                        legal: legal.to_vec(),
                    },
                    n_legal as f64 * 0.5f64.ln(),
                ))
            }
        }
    }

    fn observe(&mut self, _t: &Transition) {}
}

/// Replays a fixed move list; used by trace and replay tests.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    pub moves: VecDeque<ScriptedMove>,
}

#[derive(Debug, Clone)]
pub enum ScriptedMove {
    Pick(usize),
    Commit(Vec<bool>),
}

impl ScriptedPolicy {
    pub fn new(moves: impl IntoIterator<Item = ScriptedMove>) -> ScriptedPolicy {
        ScriptedPolicy {
            moves: moves.into_iter().collect(),
        }
    }
}

impl DecisionPolicy for ScriptedPolicy {
    fn act(
        &mut self,
        _features: &[f64],
        query: ActionQuery<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(TakenAction, f64), AgentError> {
        let mv = self.moves.pop_front().ok_or(AgentError::ScriptExhausted)?;
        match (mv, query) {
            (ScriptedMove::Pick(index), ActionQuery::Choice { mask }) => Ok((
                TakenAction::Index {
                    index,
                    mask: mask.to_vec(),
                },
                0.0,
            )),
            (ScriptedMove::Commit(bits), ActionQuery::Commit { legal }) => {
                let bits: Vec<bool> = bits
                    .iter()
                    .zip(legal)
                    .map(|(&b, &l)| b && l)
                    .collect();
                Ok((
                    TakenAction::Commit {
                        bits,
                        legal: legal.to_vec(),
                    },
                    0.0,
                ))
            }
            _ => Err(AgentError::HeadMismatch),
        }
    }

    fn observe(&mut self, _t: &Transition) {}
}

/// Concrete policy slot: enum dispatch keeps agents cloneable and snapshot
/// friendly.
#[derive(Debug, Clone)]
pub enum SlotPolicy {
    Random(RandomAgent),
    Rl(ActorCriticAgent),
    Scripted(ScriptedPolicy),
}

impl SlotPolicy {
    pub fn random() -> SlotPolicy {
        SlotPolicy::Random(RandomAgent)
    }

    pub fn as_rl(&self) -> Option<&ActorCriticAgent> {
        match self {
            SlotPolicy::Rl(agent) => Some(agent),
            _ => None,
        }
    }

    pub fn as_rl_mut(&mut self) -> Option<&mut ActorCriticAgent> {
        match self {
            SlotPolicy::Rl(agent) => Some(agent),
            _ => None,
        }
    }
}

impl DecisionPolicy for SlotPolicy {
    fn act(
        &mut self,
        features: &[f64],
        query: ActionQuery<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TakenAction, f64), AgentError> {
        match self {
            SlotPolicy::Random(p) => p.act(features, query, rng),
            SlotPolicy::Rl(p) => p.act(features, query, rng),
            SlotPolicy::Scripted(p) => p.act(features, query, rng),
        }
    }

    fn observe(&mut self, t: &Transition) {
        match self {
            SlotPolicy::Random(p) => p.observe(t),
            SlotPolicy::Rl(p) => p.observe(t),
            SlotPolicy::Scripted(p) => p.observe(t),
        }
    }
}

/// Wraps a policy with the per-phase transition chain. Each decision emits
/// the previous pending transition (reward 0) to the policy's learning hook;
/// `finish_episode` emits the terminal transition with the game reward.
/// Transitions chain across phase and round boundaries.
#[derive(Debug, Clone)]
pub struct PhaseAgent {
    pub policy: SlotPolicy,
    pub learn: bool,
    pending: Option<(Vec<f64>, TakenAction)>,
}

impl PhaseAgent {
    pub fn new(policy: SlotPolicy) -> PhaseAgent {
        PhaseAgent {
            policy,
            learn: true,
            pending: None,
        }
    }

    pub fn frozen(policy: SlotPolicy) -> PhaseAgent {
        PhaseAgent {
            policy,
            learn: false,
            pending: None,
        }
    }

    pub fn decide(
        &mut self,
        features: &FeatureVector,
        query: ActionQuery<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<TakenAction, AgentError> {
        if self.learn {
            if let Some((state, action)) = self.pending.take() {
                self.policy.observe(&Transition {
                    state,
                    action,
                    reward: 0.0,
                    next_state: Some(features.values.clone()),
                    done: false,
                });
            }
        }
        let (action, _logprob) = self.policy.act(&features.values, query, rng)?;
        if self.learn {
            self.pending = Some((features.values.clone(), action.clone()));
        }
        Ok(action)
    }

    /// Flushes the pending decision as a terminal transition carrying the
    /// episode reward.
    pub fn finish_episode(&mut self, reward: f64) {
        if self.learn {
            if let Some((state, action)) = self.pending.take() {
                self.policy.observe(&Transition {
                    state,
                    action,
                    reward,
                    next_state: None,
                    done: true,
                });
            }
        }
        self.pending = None;
    }
}

/// Incremental running mean: Q_{n+1} = Q_n + (R_n - Q_n) / n. Returns the
/// same value as the batch mean.
pub fn episode_credit(rewards: &[f64]) -> f64 {
    let mut q = 0.0;
    for (n, &r) in rewards.iter().enumerate() {
        q += (r - q) / (n + 1) as f64;
    }
    q
}

/// Which decision phase an agent bundle serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PhaseRole {
    Planning,
    Questing,
    Defense,
}

impl PhaseRole {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseRole::Planning => "planning",
            PhaseRole::Questing => "questing",
            PhaseRole::Defense => "defense",
        }
    }

    pub fn parse(s: &str) -> Option<PhaseRole> {
        match s {
            "planning" => Some(PhaseRole::Planning),
            "questing" => Some(PhaseRole::Questing),
            "defense" => Some(PhaseRole::Defense),
            _ => None,
        }
    }
}

/// Serializable agent snapshot: a manifest line plus the two weight blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub role: PhaseRole,
    pub scheme: EncodingScheme,
    pub agent: ActorCriticAgent,
}

impl AgentBundle {
    pub fn to_text(&self) -> String {
        format!(
            "bundle {} {} {} {} {} {:.16e} {:.16e} {:.16e}\nactor\n{}critic\n{}",
            self.role.as_str(),
            self.scheme.as_str(),
            self.agent.head.as_str(),
            self.agent.actor.input_dim,
            self.agent.actor.output_dim,
            self.agent.gamma,
            self.agent.alpha_actor,
            self.agent.alpha_critic,
            self.agent.actor.to_text(),
            self.agent.critic.to_text(),
        )
    }

    pub fn from_text(text: &str) -> Result<AgentBundle, AgentError> {
        let mut lines = text.lines();
        let manifest = lines
            .next()
            .ok_or_else(|| AgentError::Format("empty bundle".into()))?;
        let fields: Vec<&str> = manifest.split_whitespace().collect();
        if fields.len() != 9 || fields[0] != "bundle" {
            return Err(AgentError::Format("bad manifest line".into()));
        }
        let role = PhaseRole::parse(fields[1])
            .ok_or_else(|| AgentError::Format(format!("unknown role `{}`", fields[1])))?;
        let scheme = EncodingScheme::parse(fields[2])
            .ok_or_else(|| AgentError::Format(format!("unknown scheme `{}`", fields[2])))?;
        let head = ActorHead::parse(fields[3])
            .ok_or_else(|| AgentError::Format(format!("unknown head `{}`", fields[3])))?;
        let input_dim: usize = fields[4]
            .parse()
            .map_err(|_| AgentError::Format("bad input dim".into()))?;
        let action_dim: usize = fields[5]
            .parse()
            .map_err(|_| AgentError::Format("bad action dim".into()))?;
        let parse_f = |s: &str| -> Result<f64, AgentError> {
            s.parse()
                .map_err(|_| AgentError::Format(format!("bad float `{s}`")))
        };
        let gamma = parse_f(fields[6])?;
        let alpha_actor = parse_f(fields[7])?;
        let alpha_critic = parse_f(fields[8])?;
        let rest: Vec<&str> = lines.collect();
        let actor_at = rest
            .iter()
            .position(|l| l.trim() == "actor")
            .ok_or_else(|| AgentError::Format("missing actor block".into()))?;
        let critic_at = rest
            .iter()
            .position(|l| l.trim() == "critic")
            .ok_or_else(|| AgentError::Format("missing critic block".into()))?;
        let actor = Mlp::from_text(&rest[actor_at + 1..critic_at].join("\n"))?;
        let critic = Mlp::from_text(&rest[critic_at + 1..].join("\n"))?;
        if actor.input_dim != input_dim || actor.output_dim != action_dim {
            return Err(AgentError::Format(
                "actor dims disagree with the manifest".into(),
            ));
        }
        if critic.input_dim != input_dim || critic.output_dim != 1 {
            return Err(AgentError::Format(
                "critic dims disagree with the manifest".into(),
            ));
        }
        if input_dim != scheme.dimension() {
            return Err(AgentError::Format(format!(
                "input dim {input_dim} does not match scheme {}",
                scheme.as_str()
            )));
        }
        Ok(AgentBundle {
            role,
            scheme,
            agent: ActorCriticAgent {
                actor,
                critic,
                head,
                alpha_actor,
                alpha_critic,
                gamma,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AgentError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<AgentBundle, AgentError> {
        let text = std::fs::read_to_string(path)?;
        AgentBundle::from_text(&text)
    }
}
