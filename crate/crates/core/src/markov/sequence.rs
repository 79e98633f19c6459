use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{fit_ensemble, Context, LookupConfig, MarkovEnsemble};
use crate::error::Result;
use crate::model::{Action, Episode, State};
use crate::quantize::QuantizationScheme;

/// Default policy executed when no ensemble can answer.
pub trait Fallback: Send + Sync {
    fn name(&self) -> &str;
    fn action(&self, state: &State) -> Action;
}

/// Always emits the same action.
#[derive(Debug, Clone)]
pub struct FixedFallback {
    pub name: String,
    pub action: Action,
}

impl FixedFallback {
    pub fn noop(channel: u32) -> Self {
        Self {
            name: "noop".into(),
            action: Action::bare(channel),
        }
    }
}

impl Fallback for FixedFallback {
    fn name(&self) -> &str {
        &self.name
    }

    fn action(&self, _state: &State) -> Action {
        self.action.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Index into the sequence (0 = oldest).
    Ensemble(usize),
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub source: Source,
    /// `(order, level)` of the answering cell.
    pub cell: Option<(usize, usize)>,
    /// Share of the matched key's counts held by the chosen action; 0 on fallback.
    pub confidence: f64,
}

impl Decision {
    pub fn answered(&self) -> bool {
        self.source != Source::Fallback
    }
}

/// Ensembles in demonstration order plus a fallback policy.
///
/// Cloning is cheap; ensembles are shared behind `Arc`.
#[derive(Clone)]
pub struct ModelSequence {
    ensembles: Vec<Arc<MarkovEnsemble>>,
    fallback: Arc<dyn Fallback>,
    pub config: LookupConfig,
}

impl fmt::Debug for ModelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSequence")
            .field("ensembles", &self.ensembles.len())
            .field("fallback", &self.fallback.name())
            .field("config", &self.config)
            .finish()
    }
}

impl ModelSequence {
    pub fn new(fallback: Arc<dyn Fallback>) -> Self {
        Self {
            ensembles: Vec::new(),
            fallback,
            config: LookupConfig::default(),
        }
    }

    pub fn with_config(mut self, config: LookupConfig) -> Self {
        self.config = config;
        self
    }

    pub fn len(&self) -> usize {
        self.ensembles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensembles.is_empty()
    }

    pub fn ensembles(&self) -> &[Arc<MarkovEnsemble>] {
        &self.ensembles
    }

    pub fn fallback(&self) -> &dyn Fallback {
        self.fallback.as_ref()
    }

    pub fn push_ensemble(&self, ensemble: MarkovEnsemble) -> ModelSequence {
        let mut next = self.clone();
        next.ensembles.push(Arc::new(ensemble));
        next
    }

    /// Fits a new ensemble on `episode` and appends it. An empty episode
    /// leaves the sequence unchanged.
    pub fn push_demonstration(&self, episode: &Episode, scheme: &QuantizationScheme, max_order: usize) -> Result<ModelSequence> {
        if episode.is_empty() {
            return Ok(self.clone());
        }
        let ens = fit_ensemble(std::slice::from_ref(episode), scheme, max_order)?;
        Ok(self.push_ensemble(ens))
    }

    /// Newest ensemble first; fallback on a total miss.
    pub fn policy_action<R: Rng + ?Sized>(&self, ctx: Context<'_>, rng: &mut R) -> Decision {
        for (i, ens) in self.ensembles.iter().enumerate().rev() {
            if let Some(m) = ens.lookup(ctx, &self.config) {
                let (action, confidence) = m.counts.sample(rng);
                return Decision {
                    action: action.clone(),
                    source: Source::Ensemble(i),
                    cell: Some((m.order, m.level)),
                    confidence,
                };
            }
        }
        Decision {
            action: self.fallback.action(ctx.state),
            source: Source::Fallback,
            cell: None,
            confidence: 0.0,
        }
    }

    /// Whether some ensemble is defined on `ctx`; consumes no randomness.
    pub fn answers(&self, ctx: Context<'_>) -> bool {
        self.ensembles.iter().any(|e| e.lookup(ctx, &self.config).is_some())
    }

    /// Fraction of the steps of `episodes` (with their true histories) the
    /// sequence answers without falling back.
    pub fn coverage(&self, episodes: &[Episode]) -> f64 {
        let mut total = 0usize;
        let mut hit = 0usize;
        for e in episodes {
            let actions: Vec<Action> = e.actions().cloned().collect();
            for (i, s) in e.steps().iter().enumerate() {
                total += 1;
                if self.answers(Context::new(&s.state, &actions[..i])) {
                    hit += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::Context;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn go(v: f64) -> Action {
        Action::new(1, vec![v])
    }

    fn seq() -> ModelSequence {
        ModelSequence::new(Arc::new(FixedFallback::noop(0)))
    }

    #[test]
    fn push_to_empty_has_length_one() {
        let s = seq()
            .push_demonstration(&episode(&[(1.0, go(0.1))]), &scheme(1, 1.0), 1)
            .unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn empty_demonstration_is_ignored() {
        let e = Episode::new(meta());
        let s = seq().push_demonstration(&e, &scheme(1, 1.0), 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn latest_demonstration_wins_and_older_still_answers() {
        let sch = scheme(2, 4.0);
        let e1 = episode(&[(1.0, go(0.1)), (7.0, go(0.7))]);
        let e2 = episode(&[(1.0, go(-0.5))]);
        let s1 = seq().push_demonstration(&e1, &sch, 1).unwrap();
        let s2 = s1.push_demonstration(&e2, &sch, 1).unwrap();
        assert!(Arc::ptr_eq(&s1.ensembles()[0], &s2.ensembles()[0]));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let both = State::new(vec![1.0], vec![]);
        let d = s2.policy_action(Context::new(&both, &[]), &mut rng);
        assert_eq!(d.action, go(-0.5));
        assert_eq!(d.source, Source::Ensemble(1));

        let only_first = State::new(vec![7.0], vec![]);
        let d = s2.policy_action(Context::new(&only_first, &[]), &mut rng);
        assert_eq!(d.action, go(0.7));
        assert_eq!(d.source, Source::Ensemble(0));
    }

    #[test]
    fn fresh_state_with_floors_uses_fallback() {
        let sch = scheme(2, 100.0);
        let s = seq()
            .push_demonstration(&episode(&[(1.0, go(0.1))]), &sch, 1)
            .unwrap()
            .with_config(LookupConfig {
                min_level: 1,
                ..Default::default()
            });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fresh = State::new(vec![90.0], vec![]);
        let d = s.policy_action(Context::new(&fresh, &[]), &mut rng);
        assert_eq!(d.source, Source::Fallback);
        assert_eq!(d.action, Action::bare(0));
        assert!(!d.answered());
    }

    #[test]
    fn same_seed_same_decision() {
        let pts: Vec<_> = (0..20).map(|i| (1.0, go(i as f64 / 20.0))).collect();
        let s = seq().push_demonstration(&episode(&pts), &scheme(1, 1.0), 0).unwrap();
        let st = State::new(vec![1.0], vec![]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| s.policy_action(Context::new(&st, &[]), &mut rng).action).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn coverage_never_drops_after_push() {
        let sch = scheme(3, 8.0);
        let e1 = episode(&[(1.0, go(0.1)), (2.0, go(0.2)), (3.0, go(0.3))]);
        let e2 = episode(&[(40.0, go(0.1)), (50.0, go(0.9))]);
        let eps = [e1.clone(), e2.clone()];
        let s1 = seq()
            .with_config(LookupConfig {
                min_level: 2,
                ..Default::default()
            })
            .push_demonstration(&e1, &sch, 2)
            .unwrap();
        let s2 = s1.push_demonstration(&e2, &sch, 2).unwrap();
        let (c0, c1, c2) = (seq().coverage(&eps), s1.coverage(&eps), s2.coverage(&eps));
        assert!(c0 <= c1 && c1 <= c2, "{c0} {c1} {c2}");
        assert_eq!(c2, 1.0);
    }
}
