//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use mimic::arena::{record_episode, Arena, ArenaConfig, ArenaFallback, Behavior};
use mimic::distill::PolicyNet;
use mimic::markov::{fit_ensemble, ModelSequence};
use mimic::quantize::QuantizationScheme;
use mimic::{Action, Episode, State};

pub struct ArenaFixture {
    pub arena: Arena,
    pub scheme: QuantizationScheme,
    pub demos: Vec<Episode>,
    pub seq: ModelSequence,
    pub net: PolicyNet,
    /// `(state, history)` pairs taken from the demonstrations.
    pub queries: Vec<(State, Vec<Action>)>,
}

/// Circler demonstrations fitted at N = 3, K = 3.
pub fn arena_fixture(demos: usize, ticks: usize) -> ArenaFixture {
    let cfg = ArenaConfig {
        adversaries: 2,
        ..Default::default()
    };
    let demos: Vec<Episode> = (1..=demos as u64)
        .map(|s| {
            let arena = Arena::new(ArenaConfig { seed: s, ..cfg.clone() }).unwrap();
            record_episode(&arena, Behavior::Circler, ticks, s).unwrap()
        })
        .collect();
    let arena = Arena::new(cfg).unwrap();
    let scheme = arena.default_scheme(3, 0.5).unwrap();
    let seq = ModelSequence::new(Arc::new(ArenaFallback)).push_ensemble(fit_ensemble(&demos, &scheme, 3).unwrap());
    let net = PolicyNet::new(&arena.meta(), &scheme, 3, None, 1).unwrap();
    let mut queries = Vec::new();
    for ep in &demos {
        let actions: Vec<Action> = ep.actions().cloned().collect();
        for (i, st) in ep.steps().iter().enumerate() {
            queries.push((st.state.clone(), actions[i.saturating_sub(3)..i].to_vec()));
        }
    }
    ArenaFixture {
        arena,
        scheme,
        demos,
        seq,
        net,
        queries,
    }
}
