//! Stacked multi-resolution Markov models.
//!
//! A [`MarkovModel`] of order `n` at level `j` maps the level-`j` quantized
//! extended state `(s_t, a_{t-n}..a_{t-1})` to the multiset of *raw* actions
//! observed next. A [`MarkovEnsemble`] is the full `(n, j)` grid fitted on one
//! batch of demonstrations; a [`ModelSequence`] stacks ensembles so the most
//! recent demonstration is consulted first.

mod sequence;
mod telemetry;

pub use sequence::{Decision, Fallback, FixedFallback, ModelSequence, Source};
pub use telemetry::{competence, confidence, QueryRecord, Telemetry, DEFAULT_WINDOW};

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc;
use crate::error::{Error, Result};
use crate::model::{Action, Episode, State};
use crate::quantize::QuantizationScheme;

/// Observed next actions for one key, in first-seen order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActionCounts {
    entries: Vec<(Action, u64)>,
    total: u64,
}

impl ActionCounts {
    pub fn add(&mut self, action: &Action, count: u64) {
        match self.entries.iter_mut().find(|(a, _)| a == action) {
            Some((_, c)) => *c += count,
            None => self.entries.push((action.clone(), count)),
        }
        self.total += count;
    }

    pub fn entries(&self) -> &[(Action, u64)] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Draws an action with probability proportional to its count and returns
    /// it with its share of the total.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (&Action, f64) {
        let mut pick = rng.random_range(0..self.total);
        for (a, c) in &self.entries {
            if pick < *c {
                return (a, *c as f64 / self.total as f64);
            }
            pick -= c;
        }
        unreachable!("total equals the sum of counts")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    pub order: usize,
    pub level: usize,
    table: HashMap<Vec<i64>, ActionCounts>,
}

impl MarkovModel {
    fn new(order: usize, level: usize) -> Self {
        Self {
            order,
            level,
            table: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, key: &[i64]) -> Option<&ActionCounts> {
        self.table.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &ActionCounts)> {
        self.table.iter()
    }
}

/// Order in which `(n, j)` cells are probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    /// Decreasing order outer, decreasing level inner.
    #[default]
    OrderMajor,
    /// Decreasing level outer, decreasing order inner.
    LevelMajor,
}

/// Restricts which cells may answer a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LookupConfig {
    pub scan: ScanOrder,
    /// Lowest order allowed to answer.
    pub min_order: usize,
    /// Coarsest level allowed to answer.
    pub min_level: usize,
}

/// The state being decided on and the actions that led to it (oldest first).
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub state: &'a State,
    pub history: &'a [Action],
}

impl<'a> Context<'a> {
    pub fn new(state: &'a State, history: &'a [Action]) -> Self {
        Self { state, history }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Match<'e> {
    pub order: usize,
    pub level: usize,
    pub counts: &'e ActionCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub action: Action,
    pub order: usize,
    pub level: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovEnsemble {
    scheme: QuantizationScheme,
    max_order: usize,
    models: Vec<MarkovModel>,
}

impl MarkovEnsemble {
    fn empty(scheme: QuantizationScheme, max_order: usize) -> Self {
        let levels = scheme.num_levels();
        let models = (0..=max_order)
            .flat_map(|n| (0..levels).map(move |j| MarkovModel::new(n, j)))
            .collect();
        Self {
            scheme,
            max_order,
            models,
        }
    }

    pub fn scheme(&self) -> &QuantizationScheme {
        &self.scheme
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn model(&self, order: usize, level: usize) -> &MarkovModel {
        &self.models[order * self.scheme.num_levels() + level]
    }

    fn model_mut(&mut self, order: usize, level: usize) -> &mut MarkovModel {
        let l = self.scheme.num_levels();
        &mut self.models[order * l + level]
    }

    pub fn models(&self) -> &[MarkovModel] {
        &self.models
    }

    fn absorb(&mut self, episode: &Episode) {
        let levels = self.scheme.num_levels();
        let steps = episode.steps();
        let mut key = Vec::new();
        for j in 0..levels {
            let state_keys: Vec<Vec<i64>> = steps
                .iter()
                .map(|s| {
                    let mut k = Vec::new();
                    self.scheme.push_state_key(j, &s.state, &mut k);
                    k
                })
                .collect();
            let action_keys: Vec<Vec<i64>> = steps.iter().map(|s| self.scheme.action_key(j, &s.action)).collect();
            for (i, step) in steps.iter().enumerate() {
                for n in 0..=self.max_order.min(i) {
                    key.clear();
                    key.extend_from_slice(&state_keys[i]);
                    for ak in &action_keys[i - n..i] {
                        key.extend_from_slice(ak);
                    }
                    let model = self.model_mut(n, j);
                    match model.table.get_mut(key.as_slice()) {
                        Some(c) => c.add(&step.action, 1),
                        None => {
                            let mut c = ActionCounts::default();
                            c.add(&step.action, 1);
                            model.table.insert(key.clone(), c);
                        }
                    }
                }
            }
        }
    }

    /// Scans the grid for the first cell defined on `ctx`.
    pub fn lookup(&self, ctx: Context<'_>, cfg: &LookupConfig) -> Option<Match<'_>> {
        let levels = self.scheme.num_levels();
        let top_order = self.max_order.min(ctx.history.len());
        if cfg.min_order > top_order || cfg.min_level >= levels {
            return None;
        }
        let mut key = Vec::with_capacity(64);
        let mut probe = |n: usize, j: usize| -> Option<Match<'_>> {
            key.clear();
            self.scheme.push_state_key(j, ctx.state, &mut key);
            for a in &ctx.history[ctx.history.len() - n..] {
                self.scheme.push_action_key(j, a, &mut key);
            }
            self.model(n, j).get(&key).map(|counts| Match {
                order: n,
                level: j,
                counts,
            })
        };
        match cfg.scan {
            ScanOrder::OrderMajor => {
                for n in (cfg.min_order..=top_order).rev() {
                    for j in (cfg.min_level..levels).rev() {
                        if let Some(m) = probe(n, j) {
                            return Some(m);
                        }
                    }
                }
            }
            ScanOrder::LevelMajor => {
                for j in (cfg.min_level..levels).rev() {
                    for n in (cfg.min_order..=top_order).rev() {
                        if let Some(m) = probe(n, j) {
                            return Some(m);
                        }
                    }
                }
            }
        }
        None
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, ctx: Context<'_>, cfg: &LookupConfig, rng: &mut R) -> Option<Sampled> {
        let m = self.lookup(ctx, cfg)?;
        let (action, confidence) = m.counts.sample(rng);
        Some(Sampled {
            action: action.clone(),
            order: m.order,
            level: m.level,
            confidence,
        })
    }
}

/// Fits the full `(n, j)` grid, `n = 0..=max_order`, `j = 0..=K`.
pub fn fit_ensemble(episodes: &[Episode], scheme: &QuantizationScheme, max_order: usize) -> Result<MarkovEnsemble> {
    if episodes.is_empty() {
        return Err(Error::Empty("demonstration episodes"));
    }
    for e in episodes {
        scheme.check_meta(&e.meta)?;
    }
    let mut ens = MarkovEnsemble::empty(scheme.clone(), max_order);
    for e in episodes {
        ens.absorb(e);
    }
    Ok(ens)
}

// ---------------------------------------------------------------------------
// Serialization

pub const ENSEMBLE_FORMAT: &str = "markov-ensemble";
pub const ENSEMBLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct EnsembleHeader {
    max_order: usize,
    scheme: QuantizationScheme,
}

#[derive(Serialize, Deserialize)]
struct CountRecord {
    n: usize,
    j: usize,
    key: Vec<i64>,
    channel: u32,
    args: Vec<f64>,
    count: u64,
}

impl MarkovEnsemble {
    pub fn to_doc(&self) -> Result<String> {
        let header = EnsembleHeader {
            max_order: self.max_order,
            scheme: self.scheme.clone(),
        };
        let mut records = Vec::new();
        for m in &self.models {
            let mut keys: Vec<_> = m.table.iter().collect();
            keys.sort_by(|a, b| a.0.cmp(b.0));
            for (key, counts) in keys {
                for (a, c) in counts.entries() {
                    records.push(CountRecord {
                        n: m.order,
                        j: m.level,
                        key: key.clone(),
                        channel: a.channel,
                        args: a.args.clone(),
                        count: *c,
                    });
                }
            }
        }
        doc::to_string(ENSEMBLE_FORMAT, ENSEMBLE_VERSION, &header, records)
    }

    pub fn from_doc(text: &str) -> Result<Self> {
        let (h, records): (EnsembleHeader, Vec<CountRecord>) = doc::read_doc(text, ENSEMBLE_FORMAT, ENSEMBLE_VERSION)?;
        let scheme = QuantizationScheme::new(h.scheme.state_dims().to_vec(), h.scheme.arg_dims().to_vec(), h.scheme.levels().to_vec())?;
        let mut ens = MarkovEnsemble::empty(scheme, h.max_order);
        let levels = ens.scheme.num_levels();
        for r in records {
            if r.n > h.max_order || r.j >= levels || r.count == 0 {
                return Err(Error::invalid(format!("bad ensemble record (n={}, j={}, count={})", r.n, r.j, r.count)));
            }
            ens.model_mut(r.n, r.j)
                .table
                .entry(r.key)
                .or_default()
                .add(&Action::new(r.channel, r.args), r.count);
        }
        Ok(ens)
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn go(v: f64) -> Action {
        Action::new(1, vec![v])
    }

    #[test]
    fn three_step_episode_key_counts() {
        // Brute-force enumeration: order 0 has one key per distinct state,
        // order 1 has one key per t in 2..=3.
        let e = episode(&[(1.0, go(0.1)), (2.0, go(0.2)), (3.0, go(0.3))]);
        let ens = fit_ensemble(&[e], &scheme(1, 1.0), 1).unwrap();
        assert!(ens.model(0, 0).len() <= 3);
        assert_eq!(ens.model(0, 0).len(), 3);
        assert_eq!(ens.model(1, 0).len(), 2);
        for m in ens.models() {
            for (_, c) in m.iter() {
                assert!(c.total() >= 1);
            }
        }
    }

    #[test]
    fn identical_episodes_double_counts() {
        let e = episode(&[(1.0, go(0.1)), (2.0, go(0.2)), (2.0, go(0.3))]);
        let one = fit_ensemble(std::slice::from_ref(&e), &scheme(2, 4.0), 2).unwrap();
        let two = fit_ensemble(&[e.clone(), e], &scheme(2, 4.0), 2).unwrap();
        for (a, b) in one.models().iter().zip(two.models()) {
            assert_eq!(a.len(), b.len());
            for (k, c) in a.iter() {
                let d = b.get(k).unwrap();
                assert_eq!(d.total(), 2 * c.total());
                for ((x, cx), (y, cy)) in c.entries().iter().zip(d.entries()) {
                    assert_eq!(x, y);
                    assert_eq!(2 * cx, *cy);
                }
            }
        }
    }

    #[test]
    fn order_zero_is_per_state_sampling() {
        let e = episode(&[(1.0, go(0.1)), (1.0, go(0.2)), (5.0, go(0.3))]);
        let ens = fit_ensemble(&[e], &scheme(1, 1.0), 0).unwrap();
        assert_eq!(ens.models().len(), 2);
        let s = State::new(vec![1.0], vec![]);
        let m = ens.lookup(Context::new(&s, &[]), &LookupConfig::default()).unwrap();
        assert_eq!((m.order, m.level), (0, 1));
        assert_eq!(m.counts.entries().len(), 2);
    }

    #[test]
    fn empty_episode_list_rejected() {
        assert!(matches!(fit_ensemble(&[], &scheme(1, 1.0), 1), Err(Error::Empty(_))));
    }

    #[test]
    fn unique_action_returned_with_provenance() {
        let e = episode(&[(1.0, go(0.1)), (5.0, go(0.2)), (9.0, go(0.3))]);
        let ens = fit_ensemble(&[e], &scheme(2, 8.0), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = State::new(vec![9.0], vec![]);
        let got = ens.sample_action(Context::new(&s, &[go(0.2)]), &LookupConfig::default(), &mut rng).unwrap();
        assert_eq!(got.action, go(0.3));
        assert_eq!((got.order, got.level), (1, 2));
        assert_eq!(got.confidence, 1.0);
    }

    #[test]
    fn coarsest_level_covering_space_always_matches() {
        let e = episode(&[(10.0, go(0.1)), (20.0, go(0.2))]);
        let ens = fit_ensemble(&[e], &scheme(3, 100.0), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fresh = State::new(vec![77.7], vec![]);
        let got = ens.sample_action(Context::new(&fresh, &[]), &LookupConfig::default(), &mut rng).unwrap();
        assert_eq!((got.order, got.level), (0, 0));
        assert!(got.action == go(0.1) || got.action == go(0.2));
    }

    #[test]
    fn floors_exclude_coarse_matches() {
        let e = episode(&[(10.0, go(0.1)), (20.0, go(0.2))]);
        let ens = fit_ensemble(&[e], &scheme(3, 100.0), 2).unwrap();
        let fresh = State::new(vec![77.7], vec![]);
        let cfg = LookupConfig {
            min_level: 1,
            ..Default::default()
        };
        assert!(ens.lookup(Context::new(&fresh, &[]), &cfg).is_none());
    }

    #[test]
    fn partial_history_falls_through_to_lower_order() {
        let e = episode(&[(1.0, go(0.1)), (2.0, go(0.2)), (3.0, go(0.3)), (4.0, go(0.4))]);
        let ens = fit_ensemble(&[e], &scheme(1, 1.0), 3).unwrap();
        let s = State::new(vec![2.0], vec![]);
        let m = ens.lookup(Context::new(&s, &[go(0.1)]), &LookupConfig::default()).unwrap();
        assert_eq!(m.order, 1);
    }

    #[test]
    fn level_major_scan_prefers_resolution() {
        // Order-1 key matches only at level 0; order-0 key matches at level 1.
        let e = episode(&[(0.0, go(0.9)), (1.0, go(0.5))]);
        let ens = fit_ensemble(&[e], &scheme(1, 4.0), 1).unwrap();
        let s = State::new(vec![1.0], vec![]);
        let hist = [go(-0.9)];
        let om = ens.lookup(Context::new(&s, &hist), &LookupConfig::default()).unwrap();
        let lm = ens
            .lookup(
                Context::new(&s, &hist),
                &LookupConfig {
                    scan: ScanOrder::LevelMajor,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!((om.order, om.level), (1, 0));
        assert_eq!((lm.order, lm.level), (0, 1));
    }

    #[test]
    fn sampling_frequencies_follow_counts() {
        let pts: Vec<(f64, Action)> = [go(0.1), go(0.1), go(0.1), go(0.5)].into_iter().map(|a| (1.0, a)).collect();
        let ens = fit_ensemble(&[episode(&pts)], &scheme(1, 1.0), 0).unwrap();
        let s = State::new(vec![1.0], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|_| ens.sample_action(Context::new(&s, &[]), &LookupConfig::default(), &mut rng).unwrap().action == go(0.1))
            .count();
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.75).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn ensemble_doc_round_trip_is_exact() {
        let e = episode(&[(1.0, go(0.1)), (2.0, go(1.0 / 3.0)), (2.0, go(0.2)), (9.5, go(-0.7))]);
        let ens = fit_ensemble(&[e.clone(), e], &scheme(3, 16.0), 2).unwrap();
        let text = ens.to_doc().unwrap();
        let back = MarkovEnsemble::from_doc(&text).unwrap();
        assert_eq!(back, ens);
        assert_eq!(back.to_doc().unwrap(), text);
    }
}
