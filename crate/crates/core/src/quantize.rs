//! Multi-resolution uniform quantization of states, actions and episodes.
//!
//! A [`QuantizationScheme`] holds `K + 1` levels of per-dimension bin sizes,
//! coarsest first. Level `j` maps a continuous value to the left edge of its
//! bin, `origin + σ_j · ⌊(x − origin) / σ_j⌋`. Categorical features and action
//! channels pass through unchanged.

use serde::{Deserialize, Serialize};

use crate::doc;
use crate::error::{Error, Result};
use crate::model::{Action, Episode, EpisodeMeta, State};

/// Values this close (in bin units) below a bin edge are snapped onto it, so
/// re-quantizing an already quantized value is exact.
const EDGE_SNAP: f64 = 1e-9;

/// `σ · ⌊x / σ⌋`.
pub fn quantize_scalar(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("bin size must be positive, got {sigma}")));
    }
    if !x.is_finite() {
        return Err(Error::invalid("cannot quantize a non-finite value"));
    }
    Ok(sigma * (x / sigma).floor())
}

#[inline]
fn bin_index(x: f64, origin: f64, sigma: f64) -> i64 {
    let r = (x - origin) / sigma;
    let k = r.floor();
    if r - k > 1.0 - EDGE_SNAP {
        k as i64 + 1
    } else {
        k as i64
    }
}

/// One continuous dimension: a name and the span it is expected to cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl Dim {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), lo, hi }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Input to [`build_scheme`]: a dimension, its coarsest bin size and an
/// optional decay overriding the scheme-wide one.
#[derive(Debug, Clone)]
pub struct DimSpec {
    pub dim: Dim,
    pub coarsest: f64,
    pub decay: Option<f64>,
}

impl DimSpec {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, coarsest: f64) -> Self {
        Self {
            dim: Dim::new(name, lo, hi),
            coarsest,
            decay: None,
        }
    }

    pub fn with_decay(mut self, decay: f64) -> Self {
        self.decay = Some(decay);
        self
    }
}

/// Bin sizes for one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub state: Vec<f64>,
    /// Per channel, per argument.
    pub args: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationScheme {
    state_dims: Vec<Dim>,
    arg_dims: Vec<Vec<Dim>>,
    levels: Vec<Level>,
}

/// An episode quantized at one level, with the original actions kept for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedEpisode {
    pub level: usize,
    pub episode: Episode,
    pub raw_actions: Vec<Action>,
}

/// Geometric scheme `σ_j = σ_0 · decay^j`, `j = 0..=k`.
pub fn build_scheme(state: Vec<DimSpec>, args: Vec<Vec<DimSpec>>, k: usize, decay: f64) -> Result<QuantizationScheme> {
    let all = state.iter().chain(args.iter().flatten());
    for d in std::iter::once(decay).chain(all.filter_map(|d| d.decay)) {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::invalid(format!("decay must lie in (0, 1), got {d}")));
        }
    }
    if k < 1 {
        return Err(Error::invalid("at least two levels (K >= 1) are required"));
    }
    let sigma = |d: &DimSpec, j: usize| d.coarsest * d.decay.unwrap_or(decay).powi(j as i32);
    let levels = (0..=k)
        .map(|j| Level {
            state: state.iter().map(|d| sigma(d, j)).collect(),
            args: args.iter().map(|ch| ch.iter().map(|d| sigma(d, j)).collect()).collect(),
        })
        .collect();
    QuantizationScheme::new(
        state.into_iter().map(|d| d.dim).collect(),
        args.into_iter().map(|ch| ch.into_iter().map(|d| d.dim).collect()).collect(),
        levels,
    )
}

impl QuantizationScheme {
    pub fn new(state_dims: Vec<Dim>, arg_dims: Vec<Vec<Dim>>, levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Empty("quantization levels"));
        }
        for (j, lvl) in levels.iter().enumerate() {
            if lvl.state.len() != state_dims.len() {
                return Err(Error::Arity {
                    field: "level.state",
                    expected: state_dims.len(),
                    got: lvl.state.len(),
                });
            }
            if lvl.args.len() != arg_dims.len() || lvl.args.iter().zip(&arg_dims).any(|(a, d)| a.len() != d.len()) {
                return Err(Error::config(format!("level {j}: argument bin sizes do not match argument dims")));
            }
            let all = lvl.state.iter().chain(lvl.args.iter().flatten());
            if all.clone().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(Error::config(format!("level {j}: bin sizes must be positive and finite")));
            }
            if j > 0 {
                let prev = &levels[j - 1];
                let coarser = prev.state.iter().chain(prev.args.iter().flatten());
                if coarser.zip(all).any(|(a, b)| !(a > b)) {
                    return Err(Error::config(format!(
                        "level {j} is not strictly finer than level {}",
                        j - 1
                    )));
                }
            }
        }
        Ok(Self {
            state_dims,
            arg_dims,
            levels,
        })
    }

    /// Index of the finest level, `K`.
    pub fn k(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn state_dims(&self) -> &[Dim] {
        &self.state_dims
    }

    pub fn arg_dims(&self) -> &[Vec<Dim>] {
        &self.arg_dims
    }

    pub fn level(&self, j: usize) -> Result<&Level> {
        self.levels.get(j).ok_or(Error::LevelOutOfRange { level: j, max: self.k() })
    }

    /// Checks that an episode's arities line up with the scheme's dims.
    pub fn check_meta(&self, meta: &EpisodeMeta) -> Result<()> {
        if meta.continuous_dims != self.state_dims.len() {
            return Err(Error::Arity {
                field: "scheme.state_dims",
                expected: self.state_dims.len(),
                got: meta.continuous_dims,
            });
        }
        if meta.arg_arity.len() != self.arg_dims.len()
            || meta.arg_arity.iter().zip(&self.arg_dims).any(|(n, d)| *n != d.len())
        {
            return Err(Error::config("episode argument arities do not match the scheme"));
        }
        Ok(())
    }

    /// Appends the level-`j` bin indices of the continuous features, then
    /// the categorical features verbatim.
    pub fn push_state_key(&self, j: usize, s: &State, out: &mut Vec<i64>) {
        let lvl = &self.levels[j];
        out.extend(
            s.continuous
                .iter()
                .zip(&lvl.state)
                .zip(&self.state_dims)
                .map(|((x, sig), d)| bin_index(*x, d.lo, *sig)),
        );
        out.extend_from_slice(&s.categorical);
    }

    /// Appends the channel followed by the level-`j` bin indices of the args.
    pub fn push_action_key(&self, j: usize, a: &Action, out: &mut Vec<i64>) {
        out.push(a.channel as i64);
        if let (Some(sig), Some(dims)) = (
            self.levels[j].args.get(a.channel as usize),
            self.arg_dims.get(a.channel as usize),
        ) {
            out.extend(
                a.args
                    .iter()
                    .zip(sig)
                    .zip(dims)
                    .map(|((x, s), d)| bin_index(*x, d.lo, *s)),
            );
        }
    }

    pub fn action_key(&self, j: usize, a: &Action) -> Vec<i64> {
        let mut k = Vec::with_capacity(1 + a.args.len());
        self.push_action_key(j, a, &mut k);
        k
    }

    pub fn quantize_state(&self, j: usize, s: &State) -> Result<State> {
        let lvl = self.level(j)?;
        let continuous = s
            .continuous
            .iter()
            .zip(&lvl.state)
            .zip(&self.state_dims)
            .map(|((x, sig), d)| d.lo + sig * bin_index(*x, d.lo, *sig) as f64)
            .collect();
        Ok(State::new(continuous, s.categorical.clone()))
    }

    pub fn quantize_action(&self, j: usize, a: &Action) -> Result<Action> {
        let lvl = self.level(j)?;
        let sig = lvl.args.get(a.channel as usize).ok_or(Error::UnknownChannel(a.channel))?;
        let dims = &self.arg_dims[a.channel as usize];
        let args = a
            .args
            .iter()
            .zip(sig)
            .zip(dims)
            .map(|((x, s), d)| d.lo + s * bin_index(*x, d.lo, *s) as f64)
            .collect();
        Ok(Action::new(a.channel, args))
    }

    pub fn quantize_episode(&self, j: usize, episode: &Episode) -> Result<QuantizedEpisode> {
        self.level(j)?;
        self.check_meta(&episode.meta)?;
        let raw_actions = episode.actions().cloned().collect();
        let mut failure = None;
        let q = episode.map_steps(|s| {
            let state = self.quantize_state(j, &s.state).expect("level checked");
            let action = match self.quantize_action(j, &s.action) {
                Ok(a) => a,
                Err(e) => {
                    failure.get_or_insert(e);
                    s.action.clone()
                }
            };
            (state, action)
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(QuantizedEpisode {
            level: j,
            episode: q,
            raw_actions,
        })
    }

    /// Number of bins covering each state dimension at level `j`.
    pub fn state_steps(&self, j: usize) -> Result<Vec<usize>> {
        let lvl = self.level(j)?;
        Ok(self
            .state_dims
            .iter()
            .zip(&lvl.state)
            .map(|(d, s)| ((d.span() / s).ceil() as usize).max(1))
            .collect())
    }

    /// Bin sizes for the arguments of `channel` at level `j`.
    pub fn arg_sigmas(&self, j: usize, channel: u32) -> Option<&[f64]> {
        self.levels.get(j)?.args.get(channel as usize).map(Vec::as_slice)
    }
}

pub const SCHEME_FORMAT: &str = "quantization-scheme";
pub const SCHEME_VERSION: u32 = 1;

impl QuantizationScheme {
    pub fn to_doc(&self) -> Result<String> {
        doc::to_string(SCHEME_FORMAT, SCHEME_VERSION, self, std::iter::empty::<()>())
    }

    pub fn from_doc(text: &str) -> Result<Self> {
        let (s, _): (QuantizationScheme, Vec<serde_json::Value>) = doc::read_doc(text, SCHEME_FORMAT, SCHEME_VERSION)?;
        QuantizationScheme::new(s.state_dims, s.arg_dims, s.levels)
    }
}
