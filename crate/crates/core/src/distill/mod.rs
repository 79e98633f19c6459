//! Bootstrapped datasets and their distillation into feedforward policies.

mod net;

pub use net::{
    gradient_check, loss_and_grad, mean_loss, train_mlp, Dense, EpochStats, GradCheck, Loss, Mlp, TrainConfig, TrainReport,
    GRAD_CHECK_FLOOR,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arena::{Arena, ArenaConfig};
use crate::doc;
use crate::error::{Error, Result};
use crate::markov::{Context, ModelSequence, Source};
use crate::model::{Action, Episode, EpisodeMeta, State};
use crate::quantize::QuantizationScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Demonstration,
    Ensemble,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Demonstration episodes first, then bootstrap rollouts.
    pub episode: u32,
    pub state: State,
    /// Preceding actions, oldest first.
    pub history: Vec<Action>,
    pub action: Action,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub meta: EpisodeMeta,
    pub history: usize,
    pub demo_steps: usize,
    pub generated_steps: usize,
    pub target_multiplier: f64,
    pub multiplier: f64,
    /// The step budget ran out before the target.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

pub const DATASET_FORMAT: &str = "bootstrap-dataset";
pub const DATASET_VERSION: u32 = 1;

impl BootstrapDataset {
    pub fn multiplier(&self) -> f64 {
        self.header.multiplier
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.samples.iter().filter(|s| s.provenance == p).count()
    }

    pub fn generated(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.provenance != Provenance::Demonstration)
    }

    /// Splits generated samples by rollout: episodes with `episode % k == r`
    /// go to the second half.
    pub fn split_by_episode(&self, k: u32, r: u32) -> (Vec<Sample>, Vec<Sample>) {
        self.samples.iter().cloned().partition(|s| s.episode % k != r)
    }

    pub fn to_doc(&self) -> Result<String> {
        doc::to_string(DATASET_FORMAT, DATASET_VERSION, &self.header, self.samples.iter())
    }

    pub fn from_doc(text: &str) -> Result<Self> {
        let (header, samples) = doc::read_doc(text, DATASET_FORMAT, DATASET_VERSION)?;
        Ok(Self { header, samples })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub multiplier: f64,
    /// Ticks per bootstrap rollout.
    pub episode_len: usize,
    /// Cap on generated steps.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            multiplier: 10.0,
            episode_len: 300,
            max_steps: 2_000_000,
            seed: 0,
        }
    }
}

/// Demonstration samples with their true histories.
pub fn demonstration_samples(demos: &[Episode], history: usize) -> Vec<Sample> {
    let mut out = Vec::new();
    for (e, ep) in demos.iter().enumerate() {
        let actions: Vec<Action> = ep.actions().cloned().collect();
        for (i, st) in ep.steps().iter().enumerate() {
            out.push(Sample {
                episode: e as u32,
                state: st.state.clone(),
                history: actions[i.saturating_sub(history)..i].to_vec(),
                action: st.action.clone(),
                provenance: Provenance::Demonstration,
            });
        }
    }
    out
}

fn rollout_seed(seed: u64, i: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the sequence (ensembles plus fallback) in seeded arenas until the
/// generated steps reach `multiplier × demonstration steps`.
pub fn bootstrap(seq: &ModelSequence, configs: &[ArenaConfig], demos: &[Episode], cfg: &BootstrapConfig) -> Result<BootstrapDataset> {
    if configs.is_empty() {
        return Err(Error::Empty("arena configs"));
    }
    if demos.is_empty() {
        return Err(Error::Empty("demonstrations"));
    }
    if !(cfg.multiplier > 0.0) || cfg.episode_len == 0 {
        return Err(Error::invalid("multiplier and episode length must be positive"));
    }
    let history = seq.ensembles().iter().map(|e| e.max_order()).max().unwrap_or(0);
    let demo_samples = demonstration_samples(demos, history);
    let demo_steps = demo_samples.len();
    let target = (cfg.multiplier * demo_steps as f64).ceil() as usize;
    let budget = target.min(cfg.max_steps);
    let instances = budget.div_ceil(cfg.episode_len);
    let first_episode = demos.len() as u32;
    let arenas = configs.iter().cloned().map(Arena::new).collect::<Result<Vec<_>>>()?;

    let rollouts = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let seed = rollout_seed(cfg.seed, i);
            let base = &arenas[i as usize % arenas.len()];
            let arena = Arena::new(ArenaConfig {
                seed,
                ..base.config().clone()
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = arena.reset();
            let mut recent: Vec<Action> = Vec::with_capacity(history + 1);
            let len = cfg.episode_len.min(budget - i as usize * cfg.episode_len);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let obs = arena.features(&s);
                let d = seq.policy_action(Context::new(&obs, &recent), &mut rng);
                let (next, _) = arena.step(&s, &d.action)?;
                out.push(Sample {
                    episode: first_episode + i as u32,
                    state: obs,
                    history: recent.clone(),
                    action: d.action.clone(),
                    provenance: match d.source {
                        Source::Fallback => Provenance::Fallback,
                        Source::Ensemble(_) => Provenance::Ensemble,
                    },
                });
                recent.push(d.action);
                if recent.len() > history {
                    recent.remove(0);
                }
                s = next;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = demo_samples;
    samples.extend(rollouts.into_iter().flatten());
    let generated_steps = samples.len() - demo_steps;
    Ok(BootstrapDataset {
        header: DatasetHeader {
            meta: arenas[0].meta(),
            history,
            demo_steps,
            generated_steps,
            target_multiplier: cfg.multiplier,
            multiplier: generated_steps as f64 / demo_steps as f64,
            partial: generated_steps < target,
        },
        samples,
    })
}

/// Motion hidden width: twice the total quantization steps of the inputs.
pub fn width_rule(steps: &[usize]) -> Result<usize> {
    if steps.is_empty() {
        return Err(Error::Empty("quantization steps"));
    }
    if steps.contains(&0) {
        return Err(Error::invalid("every input needs at least one step"));
    }
    Ok(2 * steps.iter().sum::<usize>())
}

/// Discrete net shape: one layer per Markov order, each twice the input width.
pub fn depth_rule(max_order: usize, input_dim: usize) -> Result<(usize, usize)> {
    if max_order == 0 {
        return Err(Error::invalid("maximum order must be at least 1"));
    }
    Ok((max_order, 2 * input_dim))
}

/// Bound on normalised inputs; rare values of near-constant features would
/// otherwise dominate the first layer.
pub const INPUT_CLAMP: f64 = 5.0;

/// Maps (state, history) to a normalised input vector and actions to targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub continuous: usize,
    pub categorical: usize,
    pub history: usize,
    pub arg_arity: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Encoder {
    pub fn new(meta: &EpisodeMeta, history: usize) -> Self {
        let mut e = Self {
            continuous: meta.continuous_dims,
            categorical: meta.categorical_dims,
            history,
            arg_arity: meta.arg_arity.clone(),
            mean: Vec::new(),
            scale: Vec::new(),
        };
        let d = e.input_dim();
        e.mean = vec![0.0; d];
        e.scale = vec![1.0; d];
        e
    }

    pub fn channels(&self) -> usize {
        self.arg_arity.len()
    }

    pub fn motion_dim(&self) -> usize {
        self.arg_arity.iter().sum()
    }

    pub fn motion_offset(&self, channel: usize) -> usize {
        self.arg_arity[..channel].iter().sum()
    }

    pub fn input_dim(&self) -> usize {
        self.continuous + self.categorical + self.history * (self.channels() + self.motion_dim())
    }

    pub fn motion_target(&self, a: &Action) -> Vec<f64> {
        let mut m = vec![0.0; self.motion_dim()];
        let c = a.channel as usize;
        if c < self.channels() {
            let off = self.motion_offset(c);
            for (k, v) in a.args.iter().take(self.arg_arity[c]).enumerate() {
                m[off + k] = *v;
            }
        }
        m
    }

    pub fn flags(&self, a: &Action) -> Vec<f64> {
        let mut f = vec![0.0; self.channels()];
        if let Some(x) = f.get_mut(a.channel as usize) {
            *x = 1.0;
        }
        f
    }

    /// Unnormalised features; missing history slots are zero.
    pub fn raw(&self, s: &State, history: &[Action]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(&s.continuous);
        x.extend(s.categorical.iter().map(|v| *v as f64));
        let slot = self.channels() + self.motion_dim();
        let recent = &history[history.len().saturating_sub(self.history)..];
        x.extend(std::iter::repeat_n(0.0, (self.history - recent.len()) * slot));
        for a in recent {
            x.extend(self.flags(a));
            x.extend(self.motion_target(a));
        }
        x
    }

    /// Normalised features, clamped to ±[`INPUT_CLAMP`].
    pub fn encode(&self, s: &State, history: &[Action]) -> Vec<f64> {
        let mut x = self.raw(s, history);
        for ((v, m), k) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = ((*v - m) / k).clamp(-INPUT_CLAMP, INPUT_CLAMP);
        }
        x
    }

    /// Sets per-input mean and scale from `samples`.
    pub fn fit(&mut self, samples: &[Sample]) {
        let d = self.input_dim();
        if samples.is_empty() {
            return;
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for s in samples {
            for (i, v) in self.raw(&s.state, &s.history).into_iter().enumerate() {
                mean[i] += v;
                sq[i] += v * v;
            }
        }
        for i in 0..d {
            mean[i] /= n;
            let var = (sq[i] / n - mean[i] * mean[i]).max(0.0);
            sq[i] = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        }
        self.mean = mean;
        self.scale = sq;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub encoder: Encoder,
    pub motion: Mlp,
    pub discrete: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub channel: u32,
    pub motion: Vec<f64>,
    pub logits: Vec<f64>,
}

pub const NET_FORMAT: &str = "policy-net";
pub const NET_VERSION: u32 = 1;

impl PolicyNet {
    /// Builds a net whose shape follows the width and depth rules.
    ///
    /// The width rule uses the state bin counts at the finest level of
    /// `scheme`; `widths` overrides (motion width, discrete layers, discrete
    /// width) when given.
    pub fn new(
        meta: &EpisodeMeta,
        scheme: &QuantizationScheme,
        max_order: usize,
        widths: Option<(usize, usize, usize)>,
        seed: u64,
    ) -> Result<Self> {
        let encoder = Encoder::new(meta, max_order);
        let input = encoder.input_dim();
        let (mw, layers, dw) = match widths {
            Some(w) => w,
            None => {
                let mw = width_rule(&scheme.state_steps(scheme.k())?)?;
                let (l, w) = depth_rule(max_order, input)?;
                (mw, l, w)
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let motion = Mlp::new(&[input, mw, encoder.motion_dim().max(1)], &mut rng);
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(dw, layers));
        sizes.push(encoder.channels());
        let discrete = Mlp::new(&sizes, &mut rng);
        Ok(Self { encoder, motion, discrete })
    }

    pub fn predict(&self, s: &State, history: &[Action]) -> Prediction {
        let x = self.encoder.encode(s, history);
        let logits = self.discrete.forward(&x);
        let channel = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i as u32)
            .unwrap_or(0);
        let mut motion = self.motion.forward(&x);
        motion.truncate(self.encoder.motion_dim());
        Prediction { channel, motion, logits }
    }

    pub fn act(&self, s: &State, history: &[Action]) -> Action {
        let p = self.predict(s, history);
        let c = p.channel as usize;
        let off = self.encoder.motion_offset(c);
        Action::new(p.channel, p.motion[off..off + self.encoder.arg_arity[c]].to_vec())
    }

    /// Multiplies in one forward pass of both heads.
    pub fn forward_cost(&self) -> usize {
        self.motion.layers.iter().chain(&self.discrete.layers).map(|l| l.w.len()).sum()
    }

    pub fn to_doc(&self) -> Result<String> {
        doc::to_string(NET_FORMAT, NET_VERSION, self, std::iter::empty::<()>())
    }

    pub fn from_doc(text: &str) -> Result<Self> {
        let (net, _): (PolicyNet, Vec<serde_json::Value>) = doc::read_doc(text, NET_FORMAT, NET_VERSION)?;
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub motion: TrainReport,
    pub discrete: TrainReport,
}

/// Trains both heads on `samples`. Normalisation is fitted first when the
/// encoder is still the identity.
pub fn train(net: &PolicyNet, samples: &[Sample], cfg: &TrainConfig) -> Result<(PolicyNet, DistillReport)> {
    if samples.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut out = net.clone();
    if cfg.epochs > 0 && out.encoder.mean.iter().all(|m| *m == 0.0) && out.encoder.scale.iter().all(|s| *s == 1.0) {
        out.encoder.fit(samples);
    }
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| out.encoder.encode(&s.state, &s.history)).collect();
    let motion_t: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut m = out.encoder.motion_target(&s.action);
            m.resize(out.motion.output_dim(), 0.0);
            m
        })
        .collect();
    let flag_t: Vec<Vec<f64>> = samples.iter().map(|s| out.encoder.flags(&s.action)).collect();
    let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let mr: Vec<&[f64]> = motion_t.iter().map(Vec::as_slice).collect();
    let fr: Vec<&[f64]> = flag_t.iter().map(Vec::as_slice).collect();
    let (motion, motion_report) = train_mlp(&out.motion, Loss::Mse, &xr, &mr, cfg)?;
    let (discrete, discrete_report) = train_mlp(&out.discrete, Loss::Bce, &xr, &fr, cfg)?;
    if cfg.epochs == 0 {
        return Ok((
            net.clone(),
            DistillReport {
                motion: motion_report,
                discrete: discrete_report,
            },
        ));
    }
    out.motion = motion;
    out.discrete = discrete;
    Ok((
        out,
        DistillReport {
            motion: motion_report,
            discrete: discrete_report,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Channel matches and every argument is within one finest bin.
    pub ratio: f64,
    /// Channel matches.
    pub discrete: f64,
    /// Expected channel agreement if net and policy were independent.
    pub chance: f64,
    pub states: usize,
}

/// Compares the net with the sequence's decisions on `heldout`.
pub fn agreement(net: &PolicyNet, seq: &ModelSequence, heldout: &[Sample], seed: u64) -> Result<Agreement> {
    if heldout.is_empty() {
        return Err(Error::Empty("held-out states"));
    }
    let scheme = seq.ensembles().last().map(|e| e.scheme()).ok_or(Error::Empty("model sequence"))?;
    let finest = scheme.k();
    let channels = net.encoder.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut full, mut disc) = (0usize, 0usize);
    let mut net_marg = vec![0.0; channels];
    let mut pol_marg = vec![0.0; channels];
    for s in heldout {
        let d = seq.policy_action(Context::new(&s.state, &s.history), &mut rng);
        let p = net.predict(&s.state, &s.history);
        let c = d.action.channel as usize;
        if let Some(m) = pol_marg.get_mut(c) {
            *m += 1.0;
        }
        net_marg[p.channel as usize] += 1.0;
        if p.channel != d.action.channel {
            continue;
        }
        disc += 1;
        let off = net.encoder.motion_offset(c);
        let sig = scheme.arg_sigmas(finest, d.action.channel).unwrap_or(&[]);
        let close = d
            .action
            .args
            .iter()
            .enumerate()
            .all(|(k, v)| (p.motion[off + k] - v).abs() <= sig.get(k).copied().unwrap_or(0.0));
        if close {
            full += 1;
        }
    }
    let n = heldout.len() as f64;
    let chance = net_marg.iter().zip(&pol_marg).map(|(a, b)| (a / n) * (b / n)).sum();
    Ok(Agreement {
        ratio: full as f64 / n,
        discrete: disc as f64 / n,
        chance,
        states: heldout.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub train: TrainConfig,
    /// Generated rollouts with `episode % holdout == holdout - 1` are held out.
    pub holdout: u32,
    /// `(motion width, discrete layers, discrete width)` instead of the rules.
    pub widths: Option<(usize, usize, usize)>,
    /// Seeds weight initialisation and the agreement draws.
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            holdout: 5,
            widths: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillOutcome {
    pub net: PolicyNet,
    pub report: DistillReport,
    pub heldout: Agreement,
    /// Agreement on the generated training states.
    pub train: Agreement,
}

/// Trains a net on the demonstrations and most rollouts of `dataset` and
/// measures agreement with `seq` on the held-out rollouts.
pub fn distill(dataset: &BootstrapDataset, seq: &ModelSequence, cfg: &DistillConfig) -> Result<DistillOutcome> {
    if cfg.holdout < 2 {
        return Err(Error::invalid("holdout must be at least 2"));
    }
    let scheme = seq.ensembles().last().map(|e| e.scheme()).ok_or(Error::Empty("model sequence"))?;
    let held_out = |s: &Sample| s.provenance != Provenance::Demonstration && s.episode % cfg.holdout == cfg.holdout - 1;
    let (held, train_set): (Vec<Sample>, Vec<Sample>) = dataset.samples.iter().cloned().partition(|s| held_out(s));
    if held.is_empty() {
        return Err(Error::Empty("held-out rollouts"));
    }
    let net = PolicyNet::new(&dataset.header.meta, scheme, dataset.header.history, cfg.widths, cfg.seed)?;
    let (net, report) = train(&net, &train_set, &cfg.train)?;
    let generated: Vec<Sample> = train_set.iter().filter(|s| s.provenance != Provenance::Demonstration).cloned().collect();
    let heldout = agreement(&net, seq, &held, cfg.seed)?;
    let train = agreement(&net, seq, if generated.is_empty() { &train_set } else { &generated }, cfg.seed)?;
    Ok(DistillOutcome {
        net,
        report,
        heldout,
        train,
    })
}
