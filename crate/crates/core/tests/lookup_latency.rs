use std::sync::Arc;
use std::time::Instant;

use mimic::arena::{record_episode, Arena, ArenaConfig, ArenaFallback, Behavior};
use mimic::markov::{fit_ensemble, Context, ModelSequence};
use mimic::{Action, Episode, State};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn demos(count: u64) -> Vec<Episode> {
    let behaviors = [Behavior::Circler, Behavior::Zigzag, Behavior::Exploratory, Behavior::Aggressive];
    (0..count)
        .map(|i| {
            let arena = Arena::new(ArenaConfig {
                seed: i,
                spawn_jitter: 2.0,
                ..Default::default()
            })
            .unwrap();
            record_episode(&arena, behaviors[i as usize % behaviors.len()], 500, i).unwrap()
        })
        .collect()
}

fn median_latency_ns(seq: &ModelSequence, queries: &[(State, Vec<Action>)]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut times: Vec<u128> = queries
        .iter()
        .map(|(s, h)| {
            let t = Instant::now();
            std::hint::black_box(seq.policy_action(Context::new(s, h), &mut rng));
            t.elapsed().as_nanos()
        })
        .collect();
    times.sort_unstable();
    times[times.len() / 2] as f64
}

#[test]
fn median_lookup_latency_does_not_grow_with_the_corpus() {
    let big = demos(100);
    let small = &big[..1];
    let probe = demos(120);
    let queries: Vec<(State, Vec<Action>)> = probe[100..]
        .iter()
        .flat_map(|ep| {
            let acts: Vec<Action> = ep.actions().cloned().collect();
            ep.steps()
                .iter()
                .enumerate()
                .map(move |(t, s)| (s.state.clone(), acts[t.saturating_sub(3)..t].to_vec()))
                .collect::<Vec<_>>()
        })
        .take(10_000)
        .collect();
    assert_eq!(queries.len(), 10_000);
    let scheme = Arena::new(ArenaConfig::default()).unwrap().default_scheme(3, 0.5).unwrap();
    let seq = |eps: &[Episode]| ModelSequence::new(Arc::new(ArenaFallback)).push_ensemble(fit_ensemble(eps, &scheme, 3).unwrap());
    let (s_seq, b_seq) = (seq(small), seq(&big));
    median_latency_ns(&s_seq, &queries);
    let s = median_latency_ns(&s_seq, &queries);
    let b = median_latency_ns(&b_seq, &queries);
    println!("median lookup: {s:.0} ns at 500 steps, {b:.0} ns at 50000 steps");
    assert!(b < 2.0 * s, "{s} ns vs {b} ns");
}
