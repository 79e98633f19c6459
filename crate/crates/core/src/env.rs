//! Gym-style environment boundary shared by the arena and the planner models.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arena::{channel, Arena, ArenaConfig, ArenaFallback, ArenaState};
use crate::error::{Error, Result};
use crate::markov::{Fallback, FixedFallback};
use crate::model::{Action, EpisodeMeta, State};
use crate::planner::{ProgressionModel, ProgressionState};
use crate::quantize::{build_scheme, DimSpec, QuantizationScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    #[default]
    Arena,
    Progression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub events: Vec<String>,
    /// The action was invalid here and the environment did not advance.
    pub rejected: bool,
    pub done: bool,
}

/// Resolution ladder for an environment's default quantization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeConfig {
    /// Finest level index `K`.
    pub levels: usize,
    pub decay: f64,
    /// Decay for situational features that refine more slowly (arena
    /// adversary and POI offsets).
    pub context_decay: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            decay: 0.5,
            context_decay: 0.9,
        }
    }
}

pub trait Environment: Send {
    fn kind(&self) -> EnvKind;
    fn meta(&self) -> EpisodeMeta;
    fn reset(&mut self, seed: u64) -> State;
    fn step(&mut self, action: &Action) -> Transition;
    fn observe(&self) -> State;
    fn tick(&self) -> u64;
    fn fallback(&self) -> Arc<dyn Fallback>;
    /// Action taken on a tick with no decision (no-op or wait).
    fn idle_action(&self) -> Action;
    fn scheme(&self, cfg: &SchemeConfig) -> Result<QuantizationScheme>;
    /// Static scene description, sent once per reset.
    fn scene(&self) -> serde_json::Value;
    /// Compact dynamic state for rendering clients.
    fn frame(&self) -> serde_json::Value;
}

pub struct ArenaEnv {
    arena: Arena,
    state: ArenaState,
}

impl ArenaEnv {
    pub fn new(config: ArenaConfig) -> Result<Self> {
        let arena = Arena::new(config)?;
        let state = arena.reset();
        Ok(Self { arena, state })
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn state(&self) -> &ArenaState {
        &self.state
    }
}

impl Environment for ArenaEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Arena
    }

    fn meta(&self) -> EpisodeMeta {
        self.arena.meta()
    }

    fn reset(&mut self, seed: u64) -> State {
        let config = ArenaConfig {
            seed,
            ..self.arena.config().clone()
        };
        self.arena = Arena::new(config).expect("reseeding keeps a valid config");
        self.state = self.arena.reset();
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Transition {
        match self.arena.step(&self.state, action) {
            Ok((next, events)) => {
                self.state = next;
                Transition {
                    state: self.observe(),
                    events: events
                        .iter()
                        .map(|e| serde_json::to_value(e).map(|v| v.to_string()).unwrap_or_default())
                        .collect(),
                    rejected: false,
                    done: false,
                }
            }
            Err(_) => Transition {
                state: self.observe(),
                events: Vec::new(),
                rejected: true,
                done: false,
            },
        }
    }

    fn observe(&self) -> State {
        self.arena.features(&self.state)
    }

    fn tick(&self) -> u64 {
        self.state.tick
    }

    fn fallback(&self) -> Arc<dyn Fallback> {
        Arc::new(ArenaFallback)
    }

    fn idle_action(&self) -> Action {
        Action::bare(channel::NOOP)
    }

    fn scheme(&self, cfg: &SchemeConfig) -> Result<QuantizationScheme> {
        self.arena.scheme(cfg.levels, cfg.decay, cfg.context_decay)
    }

    fn scene(&self) -> serde_json::Value {
        serde_json::to_value(self.arena.config()).unwrap_or(serde_json::Value::Null)
    }

    fn frame(&self) -> serde_json::Value {
        let s = &self.state;
        let r = |x: f64| (x * 1000.0).round() / 1000.0;
        serde_json::json!({
            "pos": [r(s.pos[0]), r(s.pos[1])],
            "heading": r(s.heading),
            "adversaries": s.adversaries.iter().map(|a| [r(a.pos[0]), r(a.pos[1])]).collect::<Vec<_>>(),
            "blocked": s.blocked,
            "inventory": s.inventory,
        })
    }
}

/// A progression model as an environment: channel = action id, no arguments.
pub struct ProgressionEnv {
    model: ProgressionModel,
    state: ProgressionState,
}

impl ProgressionEnv {
    pub fn new(model: ProgressionModel) -> Self {
        let state = model.start();
        Self { model, state }
    }

    pub fn model(&self) -> &ProgressionModel {
        &self.model
    }

    pub fn state(&self) -> &ProgressionState {
        &self.state
    }

    /// Features: resources and XP; categories: level, N, M, event indicator.
    pub fn features(&self, s: &ProgressionState) -> State {
        let mut c: Vec<f64> = s.resources.iter().map(|r| *r as f64).collect();
        c.push(s.xp as f64);
        State::new(
            c,
            vec![s.level as i64, s.completed as i64, s.attempted as i64, s.in_event() as i64],
        )
    }
}

impl Environment for ProgressionEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Progression
    }

    fn meta(&self) -> EpisodeMeta {
        EpisodeMeta {
            env_id: format!("progression:{}", self.model.name()),
            seed: 0,
            period_ms: crate::model::DEFAULT_PERIOD_MS,
            continuous_dims: self.model.spec().resources.len() + 1,
            categorical_dims: 4,
            arg_arity: vec![0; self.model.num_actions()],
        }
    }

    fn reset(&mut self, _seed: u64) -> State {
        self.state = self.model.start();
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Transition {
        let id = action.channel as usize;
        let applied = if action.args.is_empty() {
            self.model.apply_action(&self.state, id)
        } else {
            Err(Error::invalid("progression actions take no arguments"))
        };
        match applied {
            Ok(next) => {
                self.state = next;
                Transition {
                    state: self.observe(),
                    events: vec![self.model.action_name(id).to_string()],
                    rejected: false,
                    done: self.model.is_goal(&self.state),
                }
            }
            Err(_) => Transition {
                state: self.observe(),
                events: Vec::new(),
                rejected: true,
                done: self.model.is_goal(&self.state),
            },
        }
    }

    fn observe(&self) -> State {
        self.features(&self.state)
    }

    fn tick(&self) -> u64 {
        self.state.elapsed as u64
    }

    fn fallback(&self) -> Arc<dyn Fallback> {
        Arc::new(FixedFallback {
            name: "wait".into(),
            action: self.idle_action(),
        })
    }

    fn idle_action(&self) -> Action {
        Action::bare(self.model.wait_id() as u32)
    }

    /// One dimension per resource over `[0, cap]` and one for XP over
    /// `[0, top]`, where `top` is the largest level threshold or goal XP.
    fn scheme(&self, cfg: &SchemeConfig) -> Result<QuantizationScheme> {
        let spec = self.model.spec();
        let mut dims: Vec<DimSpec> = spec
            .resources
            .iter()
            .map(|r| {
                let hi = r.cap.max(1) as f64;
                DimSpec::new(r.name.clone(), 0.0, hi, hi)
            })
            .collect();
        let top = spec.levels.iter().copied().chain(spec.goal.xp).max().unwrap_or(1).max(1) as f64;
        dims.push(DimSpec::new("xp", 0.0, top, top));
        build_scheme(dims, vec![vec![]; self.model.num_actions()], cfg.levels, cfg.decay)
    }

    fn scene(&self) -> serde_json::Value {
        serde_json::to_value(self.model.spec()).unwrap_or(serde_json::Value::Null)
    }

    fn frame(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).unwrap_or(serde_json::Value::Null)
    }
}

/// Builds an environment by kind from its text configuration.
pub fn from_config(kind: EnvKind, text: Option<&str>) -> Result<Box<dyn Environment>> {
    Ok(match kind {
        EnvKind::Arena => {
            let cfg = match text {
                Some(t) => ArenaConfig::from_toml(t)?,
                None => ArenaConfig::default(),
            };
            Box::new(ArenaEnv::new(cfg)?)
        }
        EnvKind::Progression => {
            let model = match text {
                Some(t) => ProgressionModel::from_toml(t)?,
                None => crate::planner::fixtures::toy(),
            };
            Box::new(ProgressionEnv::new(model))
        }
    })
}
