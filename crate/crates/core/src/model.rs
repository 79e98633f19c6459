//! States, actions, episodes and extended states.

use serde::{Deserialize, Serialize};

use crate::doc;
use crate::error::{Error, Result};

/// Default timestep period, about 30 Hz.
pub const DEFAULT_PERIOD_MS: u32 = 33;

/// An engineered observation: real-valued features plus integer-coded flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub continuous: Vec<f64>,
    pub categorical: Vec<i64>,
}

impl State {
    pub fn new(continuous: Vec<f64>, categorical: Vec<i64>) -> Self {
        Self { continuous, categorical }
    }
}

/// A discrete action channel with real-valued arguments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub channel: u32,
    #[serde(default)]
    pub args: Vec<f64>,
}

impl Action {
    pub fn new(channel: u32, args: Vec<f64>) -> Self {
        Self { channel, args }
    }

    pub fn bare(channel: u32) -> Self {
        Self { channel, args: Vec::new() }
    }
}

/// Describes the shape of states and actions for one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub env_id: String,
    pub seed: u64,
    #[serde(default = "default_period")]
    pub period_ms: u32,
    pub continuous_dims: usize,
    pub categorical_dims: usize,
    /// Argument arity of each channel, indexed by channel id.
    pub arg_arity: Vec<usize>,
}

fn default_period() -> u32 {
    DEFAULT_PERIOD_MS
}

impl EpisodeMeta {
    pub fn check_state(&self, s: &State) -> Result<()> {
        if s.continuous.len() != self.continuous_dims {
            return Err(Error::Arity {
                field: "continuous",
                expected: self.continuous_dims,
                got: s.continuous.len(),
            });
        }
        if s.categorical.len() != self.categorical_dims {
            return Err(Error::Arity {
                field: "categorical",
                expected: self.categorical_dims,
                got: s.categorical.len(),
            });
        }
        if s.continuous.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("state contains a non-finite continuous value"));
        }
        Ok(())
    }

    pub fn check_action(&self, a: &Action) -> Result<()> {
        let arity = *self
            .arg_arity
            .get(a.channel as usize)
            .ok_or(Error::UnknownChannel(a.channel))?;
        if a.args.len() != arity {
            return Err(Error::Arity {
                field: "args",
                expected: arity,
                got: a.args.len(),
            });
        }
        if a.args.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("action contains a non-finite argument"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub state: State,
    pub action: Action,
}

/// An ordered sequence of `(state, action)` steps, `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub meta: EpisodeMeta,
    steps: Vec<Step>,
}

/// A state augmented with the `n` actions that preceded it.
///
/// `partial` is set when fewer than `n` earlier actions exist; such histories
/// never match an order-`n` model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub state: State,
    pub history: Vec<Action>,
    pub partial: bool,
}

impl Episode {
    pub fn new(meta: EpisodeMeta) -> Self {
        Self { meta, steps: Vec::new() }
    }

    /// Builds an episode from `(state, action)` pairs, numbering them from 1.
    pub fn from_pairs(meta: EpisodeMeta, pairs: impl IntoIterator<Item = (State, Action)>) -> Result<Self> {
        let mut e = Self::new(meta);
        for (s, a) in pairs {
            e.push(s, a)?;
        }
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Step at 1-based time `t`.
    pub fn step(&self, t: usize) -> Option<&Step> {
        t.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    pub fn actions(&self) -> impl ExactSizeIterator<Item = &Action> + '_ {
        self.steps.iter().map(|s| &s.action)
    }

    /// In-place append; the value-returning form is [`Episode::append_step`].
    pub fn push(&mut self, state: State, action: Action) -> Result<()> {
        self.meta.check_state(&state)?;
        self.meta.check_action(&action)?;
        let t = self.steps.len() + 1;
        self.steps.push(Step { t, state, action });
        Ok(())
    }

    pub fn append_step(&self, state: State, action: Action) -> Result<Episode> {
        let mut next = self.clone();
        next.push(state, action)?;
        Ok(next)
    }

    pub fn extended_state(&self, t: usize, n: usize) -> Result<ExtendedState> {
        let step = self.step(t).ok_or(Error::TimestepOutOfRange { t, len: self.len() })?;
        let available = t - 1;
        let take = n.min(available);
        let history = self.steps[t - 1 - take..t - 1]
            .iter()
            .map(|s| s.action.clone())
            .collect();
        Ok(ExtendedState {
            state: step.state.clone(),
            history,
            partial: available < n,
        })
    }

    /// Steps `from..=to` (1-based, inclusive) renumbered from 1.
    pub fn slice(&self, from: usize, to: usize) -> Result<Episode> {
        if from == 0 || from > to || to > self.len() {
            return Err(Error::TimestepOutOfRange { t: to, len: self.len() });
        }
        let steps = self.steps[from - 1..to]
            .iter()
            .enumerate()
            .map(|(i, s)| Step {
                t: i + 1,
                state: s.state.clone(),
                action: s.action.clone(),
            })
            .collect();
        Ok(Episode {
            meta: self.meta.clone(),
            steps,
        })
    }

    pub(crate) fn map_steps(&self, mut f: impl FnMut(&Step) -> (State, Action)) -> Episode {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let (state, action) = f(s);
                Step { t: s.t, state, action }
            })
            .collect();
        Episode {
            meta: self.meta.clone(),
            steps,
        }
    }
}

// ---------------------------------------------------------------------------
// Episode file format

pub const EPISODE_FORMAT: &str = "episode";
pub const EPISODE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StepRecord {
    t: usize,
    continuous: Vec<f64>,
    categorical: Vec<i64>,
    channel: u32,
    #[serde(default)]
    args: Vec<f64>,
}

impl Episode {
    pub fn to_doc(&self) -> Result<String> {
        let records = self.steps.iter().map(|s| StepRecord {
            t: s.t,
            continuous: s.state.continuous.clone(),
            categorical: s.state.categorical.clone(),
            channel: s.action.channel,
            args: s.action.args.clone(),
        });
        doc::to_string(EPISODE_FORMAT, EPISODE_VERSION, &self.meta, records)
    }

    pub fn from_doc(text: &str) -> Result<Episode> {
        let (meta, records): (EpisodeMeta, Vec<StepRecord>) = doc::read_doc(text, EPISODE_FORMAT, EPISODE_VERSION)?;
        let mut e = Episode::new(meta);
        for (i, r) in records.into_iter().enumerate() {
            if r.t != i + 1 {
                return Err(Error::invalid(format!("step {} carries t = {}", i + 1, r.t)));
            }
            e.push(State::new(r.continuous, r.categorical), Action::new(r.channel, r.args))?;
        }
        Ok(e)
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn append_to_empty_starts_at_one() {
        let e = Episode::new(meta());
        let e = e
            .append_step(State::new(vec![0.0, 0.0], vec![1]), Action::bare(0))
            .unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.steps()[0].t, 1);
    }

    #[test]
    fn append_increments_and_leaves_prefix_intact() {
        let e = ramp(5);
        let next = e.append_step(State::new(vec![9.0, 9.0], vec![0]), Action::bare(0)).unwrap();
        assert_eq!(next.len(), 6);
        assert_eq!(next.steps().last().unwrap().t, 6);
        assert_eq!(&next.steps()[..5], e.steps());
    }

    #[test]
    fn wrong_arity_names_field() {
        let e = Episode::new(meta());
        let err = e.append_step(State::new(vec![0.0], vec![0]), Action::bare(0)).unwrap_err();
        assert!(matches!(err, Error::Arity { field: "continuous", expected: 2, got: 1 }));
        let err = e.append_step(State::new(vec![0.0, 0.0], vec![0]), Action::bare(1)).unwrap_err();
        assert!(matches!(err, Error::Arity { field: "args", .. }));
        let err = e.append_step(State::new(vec![0.0, 0.0], vec![]), Action::bare(0)).unwrap_err();
        assert!(matches!(err, Error::Arity { field: "categorical", .. }));
    }

    #[test]
    fn extended_state_examples() {
        let e = ramp(5);
        let x = e.extended_state(4, 2).unwrap();
        assert_eq!(x.state, e.steps()[3].state);
        assert_eq!(x.history, vec![e.steps()[1].action.clone(), e.steps()[2].action.clone()]);
        assert!(!x.partial);

        let x = e.extended_state(1, 0).unwrap();
        assert!(x.history.is_empty());
        assert!(!x.partial);

        let x = e.extended_state(2, 3).unwrap();
        assert_eq!(x.history, vec![e.steps()[0].action.clone()]);
        assert!(x.partial);

        assert!(matches!(e.extended_state(0, 1), Err(Error::TimestepOutOfRange { .. })));
        assert!(matches!(e.extended_state(6, 1), Err(Error::TimestepOutOfRange { .. })));
    }

    #[test]
    fn shorter_history_is_suffix_of_longer() {
        let e = ramp(12);
        for t in 1..=12 {
            for n2 in 0..t {
                let long = e.extended_state(t, n2).unwrap().history;
                for n1 in 0..n2 {
                    let short = e.extended_state(t, n1).unwrap().history;
                    assert_eq!(short.as_slice(), &long[long.len() - short.len()..]);
                }
            }
        }
    }

    #[test]
    fn episode_doc_round_trip() {
        let e = ramp(7);
        let text = e.to_doc().unwrap();
        assert_eq!(text.lines().count(), 8);
        assert_eq!(Episode::from_doc(&text).unwrap(), e);
    }
}
