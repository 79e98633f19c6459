//! Progression models, A* planning and utility-based policies.

mod astar;
mod es;
pub mod fixtures;

pub use astar::{astar_plan, Plan, PlanStatus, DEFAULT_NODE_CUTOFF};
pub use es::{es_optimize, EsConfig, EsIteration, EsResult};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub name: String,
    pub initial: i64,
    pub cap: i64,
}

/// What an action does to the event track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effect {
    #[default]
    None,
    /// Attempted and completed in one action.
    InstantEvent,
    Start,
    Complete,
    Abandon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: String,
    /// Keys: `xp` or a resource name.
    #[serde(default)]
    pub reward: BTreeMap<String, i64>,
    /// Keys: resource names.
    #[serde(default)]
    pub cost: BTreeMap<String, i64>,
    /// Minimum resource amounts beyond the cost itself.
    #[serde(default)]
    pub requires: BTreeMap<String, i64>,
    #[serde(default)]
    pub min_level: u32,
    #[serde(default)]
    pub effect: Effect,
    /// Event this action starts or belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Goal {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xp: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<u32>,
}

/// Text form of a progression model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Ascending cumulative XP thresholds; level = thresholds reached.
    #[serde(default)]
    pub levels: Vec<i64>,
    #[serde(default)]
    pub events: Vec<String>,
    pub goal: Goal,
    #[serde(default)]
    pub resources: Vec<ResourceSpec>,
    pub actions: Vec<ActionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Free,
    InEvent(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct CompiledAction {
    xp: i64,
    gain: Vec<i64>,
    cost: Vec<i64>,
    /// Effective per-resource threshold: max(requires, cost).
    threshold: Vec<i64>,
    min_level: u32,
    effect: Effect,
    phase: Phase,
    /// Event started by a `Start` action.
    starts: Option<usize>,
    reward_vec: Vec<f64>,
    cost_vec: Vec<f64>,
}

/// A validated model. Action ids index [`ProgressionModel::action_names`];
/// the last id is the built-in `wait`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionModel {
    spec: ModelSpec,
    actions: Vec<CompiledAction>,
}

pub type ActionId = usize;

pub const WAIT: &str = "wait";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProgressionState {
    pub resources: Vec<i64>,
    pub level: u32,
    pub xp: i64,
    /// Completed events, N.
    pub completed: u32,
    /// Attempted events, M.
    pub attempted: u32,
    /// Index of the event in progress.
    pub event: Option<usize>,
    pub elapsed: u32,
}

impl ProgressionState {
    pub fn in_event(&self) -> bool {
        self.event.is_some()
    }

    /// Search key: the state without the elapsed counter.
    pub(crate) fn key(&self) -> (Vec<i64>, u32, i64, u32, u32, Option<usize>) {
        (
            self.resources.clone(),
            self.level,
            self.xp,
            self.completed,
            self.attempted,
            self.event,
        )
    }
}

impl ProgressionModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let res_index = |name: &str| spec.resources.iter().position(|r| r.name == name);
        let event_index = |name: &str| spec.events.iter().position(|e| e == name);
        if spec.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("level thresholds must be strictly ascending"));
        }
        for r in &spec.resources {
            if r.cap < 0 || r.initial < 0 || r.initial > r.cap {
                return Err(Error::config(format!("resource {} needs 0 <= initial <= cap", r.name)));
            }
        }
        let mut names = std::collections::HashSet::new();
        let mut actions = Vec::with_capacity(spec.actions.len() + 1);
        for a in &spec.actions {
            if a.name == WAIT || !names.insert(a.name.as_str()) {
                return Err(Error::config(format!("duplicate or reserved action name {}", a.name)));
            }
            let nr = spec.resources.len();
            let (mut gain, mut cost, mut threshold) = (vec![0; nr], vec![0; nr], vec![0; nr]);
            let mut xp = 0;
            for (k, v) in &a.reward {
                if *v < 0 {
                    return Err(Error::config(format!("{}: rewards must be non-negative", a.name)));
                }
                if k == "xp" {
                    xp = *v;
                } else {
                    gain[res_index(k).ok_or_else(|| Error::config(format!("{}: unknown resource {k}", a.name)))?] = *v;
                }
            }
            for (k, v) in &a.cost {
                if *v < 0 {
                    return Err(Error::config(format!("{}: costs must be non-negative", a.name)));
                }
                let i = res_index(k).ok_or_else(|| Error::config(format!("{}: unknown resource {k}", a.name)))?;
                cost[i] = *v;
                threshold[i] = *v;
            }
            for (k, v) in &a.requires {
                let i = res_index(k).ok_or_else(|| Error::config(format!("{}: unknown resource {k}", a.name)))?;
                threshold[i] = threshold[i].max(*v);
            }
            let ev = match &a.event {
                Some(e) => Some(event_index(e).ok_or_else(|| Error::config(format!("{}: unknown event {e}", a.name)))?),
                None => None,
            };
            let (phase, starts) = match (a.effect, ev) {
                (Effect::None, None) | (Effect::InstantEvent, None) => (Phase::Free, None),
                (Effect::Start, Some(e)) => (Phase::Free, Some(e)),
                (Effect::None | Effect::Complete | Effect::Abandon, Some(e)) => (Phase::InEvent(e), None),
                _ => return Err(Error::config(format!("{}: effect and event do not fit together", a.name))),
            };
            let completes = matches!(a.effect, Effect::InstantEvent | Effect::Complete) as i64;
            let reward_vec = std::iter::once(xp)
                .chain(gain.iter().copied())
                .chain(std::iter::once(completes))
                .map(|v| v as f64)
                .collect();
            let cost_vec = cost.iter().map(|v| *v as f64).collect();
            actions.push(CompiledAction {
                xp,
                gain,
                cost,
                threshold,
                min_level: a.min_level,
                effect: a.effect,
                phase,
                starts,
                reward_vec,
                cost_vec,
            });
        }
        let nr = spec.resources.len();
        actions.push(CompiledAction {
            xp: 0,
            gain: vec![0; nr],
            cost: vec![0; nr],
            threshold: vec![0; nr],
            min_level: 0,
            effect: Effect::None,
            phase: Phase::Free,
            starts: None,
            reward_vec: vec![0.0; nr + 2],
            cost_vec: vec![0.0; nr],
        });
        Ok(Self { spec, actions })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            offset: e.span().map(|s| s.start).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        Self::new(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.spec).expect("model spec is always representable")
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn wait_id(&self) -> ActionId {
        self.actions.len() - 1
    }

    pub fn action_name(&self, id: ActionId) -> &str {
        self.spec.actions.get(id).map(|a| a.name.as_str()).unwrap_or(WAIT)
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        if name == WAIT {
            return Some(self.wait_id());
        }
        self.spec.actions.iter().position(|a| a.name == name)
    }

    pub fn start(&self) -> ProgressionState {
        let mut s = ProgressionState {
            resources: self.spec.resources.iter().map(|r| r.initial).collect(),
            level: 0,
            xp: 0,
            completed: 0,
            attempted: 0,
            event: None,
            elapsed: 0,
        };
        s.level = self.level_for(s.xp);
        s
    }

    fn level_for(&self, xp: i64) -> u32 {
        self.spec.levels.iter().take_while(|t| xp >= **t).count() as u32
    }

    pub fn is_goal(&self, s: &ProgressionState) -> bool {
        let g = &self.spec.goal;
        g.level.is_none_or(|l| s.level >= l) && g.xp.is_none_or(|x| s.xp >= x) && g.events.is_none_or(|n| s.completed >= n)
    }

    pub fn is_available(&self, s: &ProgressionState, id: ActionId) -> bool {
        let Some(a) = self.actions.get(id) else {
            return false;
        };
        if id == self.wait_id() {
            return true;
        }
        let phase_ok = match a.phase {
            Phase::Free => s.event.is_none(),
            Phase::InEvent(e) => s.event == Some(e),
        };
        phase_ok && s.level >= a.min_level && s.resources.iter().zip(&a.threshold).all(|(have, need)| have >= need)
    }

    /// Ids of the actions available in `s`, ascending; never empty.
    pub fn available_actions(&self, s: &ProgressionState) -> Vec<ActionId> {
        (0..self.actions.len()).filter(|&i| self.is_available(s, i)).collect()
    }

    pub fn apply_action(&self, s: &ProgressionState, id: ActionId) -> Result<ProgressionState> {
        if !self.is_available(s, id) {
            return Err(Error::Unavailable(self.action_name(id).to_string()));
        }
        let a = &self.actions[id];
        let mut n = s.clone();
        for (i, r) in n.resources.iter_mut().enumerate() {
            *r = (*r - a.cost[i] + a.gain[i]).min(self.spec.resources[i].cap);
        }
        n.xp += a.xp;
        n.level = self.level_for(n.xp);
        match a.effect {
            Effect::InstantEvent => {
                n.attempted += 1;
                n.completed += 1;
            }
            Effect::Start => {
                n.attempted += 1;
                n.event = a.starts;
            }
            Effect::Complete => {
                n.completed += 1;
                n.event = None;
            }
            Effect::Abandon => n.event = None,
            Effect::None => {}
        }
        n.elapsed += 1;
        Ok(n)
    }

    /// Largest XP any single action grants.
    pub fn max_xp_gain(&self) -> i64 {
        self.actions.iter().map(|a| a.xp).max().unwrap_or(0)
    }

    /// Whether any single action can complete an event.
    fn completes_events(&self) -> bool {
        self.actions.iter().any(|a| matches!(a.effect, Effect::InstantEvent | Effect::Complete))
    }

    /// Lower bound on the actions still needed to reach the goal.
    pub fn remaining_bound(&self, s: &ProgressionState) -> Option<u32> {
        let g = &self.spec.goal;
        let mut need_xp = g.xp.unwrap_or(0);
        if let Some(l) = g.level {
            if l > 0 {
                need_xp = need_xp.max(*self.spec.levels.get(l as usize - 1)?);
            }
        }
        let xp_deficit = (need_xp - s.xp).max(0);
        let xp_steps = if xp_deficit == 0 {
            0
        } else {
            let gain = self.max_xp_gain();
            if gain <= 0 {
                return None;
            }
            (xp_deficit + gain - 1) / gain
        };
        let ev_deficit = g.events.map(|n| n.saturating_sub(s.completed)).unwrap_or(0);
        if ev_deficit > 0 && !self.completes_events() {
            return None;
        }
        Some((xp_steps as u32).max(ev_deficit))
    }

    /// Reward vector r(a): xp, resource gains, event completion.
    pub fn reward_vector(&self, id: ActionId) -> &[f64] {
        &self.actions[id].reward_vec
    }

    /// Cost vector c(a): resource costs.
    pub fn cost_vector(&self, id: ActionId) -> &[f64] {
        &self.actions[id].cost_vec
    }

    /// Relevant state components for the utility: resources as a fraction of
    /// their cap, the event indicator and a constant 1.
    pub fn utility_features(&self, s: &ProgressionState) -> Vec<f64> {
        let mut f: Vec<f64> = s
            .resources
            .iter()
            .zip(&self.spec.resources)
            .map(|(v, r)| if r.cap > 0 { *v as f64 / r.cap as f64 } else { 0.0 })
            .collect();
        f.push(if s.in_event() { 1.0 } else { 0.0 });
        f.push(1.0);
        f
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.resources.len() + 2
    }

    pub fn reward_dim(&self) -> usize {
        self.spec.resources.len() + 2
    }

    pub fn cost_dim(&self) -> usize {
        self.spec.resources.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub level: f64,
    pub xp: f64,
    pub events: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            level: 100.0,
            xp: 1.0,
            events: 0.1,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if !(self.events >= 0.0 && self.level > self.xp && self.xp > self.events) {
            return Err(Error::invalid("weights must satisfy level > xp > events >= 0"));
        }
        Ok(())
    }
}

/// Designer progress score: weighted sum of level, XP and completed events.
pub fn heuristic(s: &ProgressionState, w: &Weights) -> Result<f64> {
    w.validate()?;
    Ok(raw_heuristic(s, w))
}

pub(crate) fn raw_heuristic(s: &ProgressionState, w: &Weights) -> f64 {
    w.level * s.level as f64 + w.xp * s.xp as f64 + w.events * s.completed as f64
}

/// Bilinear utility coefficients.
///
/// `p[l]` weights reward component `l` against the state features and
/// `q[l]` does the same for cost component `l`, so
/// `U = Σ_l r_l (p_l · s) + Σ_l c_l (q_l · s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl UtilityParams {
    pub fn zeros(model: &ProgressionModel, temperature: f64) -> Self {
        let k = model.feature_dim();
        Self {
            p: vec![vec![0.0; k]; model.reward_dim()],
            q: vec![vec![0.0; k]; model.cost_dim()],
            temperature,
        }
    }
}

fn bilinear(coef: &[Vec<f64>], vec: &[f64], s: &[f64]) -> Result<f64> {
    if coef.len() != vec.len() {
        return Err(Error::Arity {
            field: "utility coefficients",
            expected: vec.len(),
            got: coef.len(),
        });
    }
    let mut u = 0.0;
    for (row, r) in coef.iter().zip(vec) {
        if row.len() != s.len() {
            return Err(Error::Arity {
                field: "utility state",
                expected: s.len(),
                got: row.len(),
            });
        }
        u += r * row.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(u)
}

/// Utility from explicit vectors.
pub fn utility_raw(params: &UtilityParams, reward: &[f64], cost: &[f64], s: &[f64]) -> Result<f64> {
    Ok(bilinear(&params.p, reward, s)? + bilinear(&params.q, cost, s)?)
}

pub fn utility(model: &ProgressionModel, params: &UtilityParams, s: &ProgressionState, id: ActionId) -> Result<f64> {
    let f = model.utility_features(s);
    utility_raw(params, model.reward_vector(id), model.cost_vector(id), &f)
}

/// Softmax of `utilities / temperature`, shifted by the maximum.
pub fn softmax_probs(utilities: &[f64], temperature: f64) -> Vec<f64> {
    let m = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = utilities.iter().map(|u| ((u - m) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn policy_sample<R: Rng + ?Sized>(
    model: &ProgressionModel,
    params: &UtilityParams,
    s: &ProgressionState,
    available: &[ActionId],
    rng: &mut R,
) -> Result<ActionId> {
    match available {
        [] => Err(Error::Empty("available actions")),
        [only] => Ok(*only),
        _ => {
            let u = available
                .iter()
                .map(|&a| utility(model, params, s, a))
                .collect::<Result<Vec<_>>>()?;
            let probs = softmax_probs(&u, params.temperature);
            let x: f64 = rng.random();
            let mut acc = 0.0;
            for (a, p) in available.iter().zip(&probs) {
                acc += p;
                if x < acc {
                    return Ok(*a);
                }
            }
            Ok(*available.last().expect("non-empty"))
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-3;

/// J(N, M) = N (N + ε) / (M + ε).
pub fn objective(n: u32, m: u32, eps: f64) -> f64 {
    let n = n as f64;
    n * (n + eps) / (m as f64 + eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub j: f64,
    pub completed: u32,
    pub attempted: u32,
    pub steps: u32,
    pub reached_goal: bool,
}

/// One episode under the softmax policy, stopping at the goal or the horizon.
pub fn rollout_objective(model: &ProgressionModel, params: &UtilityParams, horizon: u32, eps: f64, seed: u64) -> Result<Rollout> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = model.start();
    while s.elapsed < horizon && !model.is_goal(&s) {
        let avail = model.available_actions(&s);
        let a = policy_sample(model, params, &s, &avail, &mut rng)?;
        s = model.apply_action(&s, a)?;
    }
    Ok(Rollout {
        j: objective(s.completed, s.attempted, eps),
        completed: s.completed,
        attempted: s.attempted,
        steps: s.elapsed,
        reached_goal: model.is_goal(&s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ProgressionModel {
        fixtures::toy()
    }

    #[test]
    fn unaffordable_action_excluded() {
        let m = toy();
        let mut s = m.start();
        s.resources[0] = 0;
        let avail = m.available_actions(&s);
        assert!(!avail.contains(&m.action_id("work").unwrap()));
        assert!(avail.contains(&m.wait_id()));
    }

    #[test]
    fn thresholds_met_gives_full_free_set() {
        let m = toy();
        assert_eq!(m.available_actions(&m.start()), vec![0, 1, 2]);
    }

    #[test]
    fn inside_event_only_event_actions() {
        let m = fixtures::medic();
        let start = m.action_id("start_shift").unwrap();
        let s = m.apply_action(&m.start(), start).unwrap();
        assert!(s.in_event());
        for a in m.available_actions(&s) {
            let name = m.action_name(a);
            let spec = m.spec().actions.iter().find(|x| x.name == name);
            assert!(a == m.wait_id() || spec.unwrap().event.as_deref() == Some("shift"), "{name}");
            assert_ne!(a, start);
        }
    }

    #[test]
    fn work_arithmetic() {
        let m = toy();
        let s = m.apply_action(&m.start(), m.action_id("work").unwrap()).unwrap();
        assert_eq!((s.resources[0], s.xp), (5, 10));
    }

    #[test]
    fn level_up_from_table() {
        let m = fixtures::barista();
        let mut s = m.start();
        s.xp = m.spec().levels[0] - 1;
        s.resources = m.spec().resources.iter().map(|r| r.cap).collect();
        let serve = m.action_id("serve").unwrap();
        let before = s.level;
        let s = m.apply_action(&s, serve).unwrap();
        assert_eq!(s.level, before + 1);
    }

    #[test]
    fn attempt_without_resources_counts_only_m() {
        let m = fixtures::medic();
        let mut s = m.start();
        s.resources = vec![0; s.resources.len()];
        let started = m.apply_action(&s, m.action_id("start_shift").unwrap()).unwrap();
        assert_eq!((started.attempted, started.completed), (1, 0));
        assert!(!m.is_available(&started, m.action_id("finish_shift").unwrap()));
        let left = m.apply_action(&started, m.action_id("leave_shift").unwrap()).unwrap();
        assert_eq!((left.attempted, left.completed, left.in_event()), (1, 0, false));
    }

    #[test]
    fn unavailable_action_rejected() {
        let m = toy();
        let mut s = m.start();
        s.resources[0] = 0;
        assert!(matches!(m.apply_action(&s, 0), Err(Error::Unavailable(_))));
    }

    #[test]
    fn heuristic_values() {
        let m = toy();
        let w = Weights::default();
        let mut s = m.start();
        s.xp = 0;
        s.level = 0;
        s.completed = 0;
        assert_eq!(heuristic(&s, &w).unwrap(), 0.0);
        s.level = 2;
        s.xp = 40;
        s.completed = 3;
        assert!((heuristic(&s, &w).unwrap() - 240.3).abs() < 1e-12);
        let bad = Weights {
            level: 1.0,
            xp: 2.0,
            events: 0.1,
        };
        assert!(heuristic(&s, &bad).is_err());
    }

    #[test]
    fn utility_examples() {
        let m = toy();
        let zero = UtilityParams::zeros(&m, 1.0);
        for a in 0..m.num_actions() {
            assert_eq!(utility(&m, &zero, &m.start(), a).unwrap(), 0.0);
        }
        let mut p = UtilityParams::zeros(&m, 1.0);
        p.p.iter_mut().flatten().for_each(|x| *x = 1.3);
        p.q.iter_mut().flatten().for_each(|x| *x = -0.7);
        assert_eq!(utility(&m, &p, &m.start(), m.wait_id()).unwrap(), 0.0);
        let scalar = UtilityParams {
            p: vec![vec![1.0]],
            q: vec![vec![-1.0]],
            temperature: 1.0,
        };
        assert_eq!(utility_raw(&scalar, &[2.0], &[1.0], &[3.0]).unwrap(), 3.0);
        assert!(utility_raw(&scalar, &[2.0], &[1.0], &[3.0, 1.0]).is_err());
    }

    #[test]
    fn single_action_always_chosen() {
        let m = toy();
        let p = UtilityParams::zeros(&m, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(policy_sample(&m, &p, &m.start(), &[2], &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn equal_utilities_uniform_chi_square() {
        let m = toy();
        let p = UtilityParams::zeros(&m, 1.0);
        let avail = m.available_actions(&m.start());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0u32; avail.len()];
        let draws = 10_000;
        for _ in 0..draws {
            let a = policy_sample(&m, &p, &m.start(), &avail, &mut rng).unwrap();
            counts[avail.iter().position(|x| *x == a).unwrap()] += 1;
        }
        let e = draws as f64 / avail.len() as f64;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - e).powi(2) / e).sum();
        // 0.999 quantile of chi-square with 2 degrees of freedom.
        assert!(chi2 < 13.816, "chi2 {chi2}");
    }

    #[test]
    fn low_temperature_picks_argmax() {
        let m = toy();
        let mut p = UtilityParams::zeros(&m, 1e-3);
        p.p[0] = vec![0.0, 0.0, 0.1];
        let s = m.start();
        let avail = m.available_actions(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let work = m.action_id("work").unwrap();
        let hits = (0..1000).filter(|_| policy_sample(&m, &p, &s, &avail, &mut rng).unwrap() == work).count();
        assert!(hits as f64 / 1000.0 >= 0.99);
    }

    #[test]
    fn softmax_shift_invariant() {
        let u = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = u.iter().map(|x| x + 17.25).collect();
        for t in [0.1, 1.0, 3.0] {
            let a = softmax_probs(&u, t);
            let b = softmax_probs(&shifted, t);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn objective_examples() {
        assert!((objective(3, 3, 1e-3) - 3.0).abs() < 1e-9);
        assert!(objective(0, 5, 1e-3).abs() < 1e-12);
        let direct = 3.0 * 3.001 / 4.001;
        assert!((objective(3, 4, 1e-3) - direct).abs() < 1e-12);
        assert!((objective(3, 4, 1e-3) - 2.2505).abs() < 1e-3);
    }

    #[test]
    fn rollout_stops_at_goal() {
        let m = toy();
        let r = rollout_objective(&m, &UtilityParams::zeros(&m, 1.0), 200, DEFAULT_EPSILON, 3).unwrap();
        assert!(r.reached_goal);
        assert_eq!(r.completed, 3);
    }

    #[test]
    fn toml_round_trip() {
        let m = fixtures::medic();
        assert_eq!(ProgressionModel::from_toml(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn bad_models_rejected() {
        let mut spec = toy().spec().clone();
        spec.actions[0].cost.insert("energy".into(), -1);
        assert!(ProgressionModel::new(spec).is_err());
        let mut spec = toy().spec().clone();
        spec.actions[0].name = WAIT.into();
        assert!(ProgressionModel::new(spec).is_err());
        let mut spec = toy().spec().clone();
        spec.actions[0].reward.insert("gold".into(), 1);
        assert!(ProgressionModel::new(spec).is_err());
    }

    mod props {
        use proptest::prelude::*;

        use super::super::objective;

        proptest! {
            #[test]
            fn j_strictly_increasing_in_n(m in 1u32..200, n in 0u32..199) {
                prop_assume!(n < m);
                prop_assert!(objective(n + 1, m, 1e-3) > objective(n, m, 1e-3));
            }
        }
    }
}
