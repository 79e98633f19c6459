use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer; `w` is row-major `out × inp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    /// He-uniform initialisation.
    fn init<R: Rng + ?Sized>(inp: usize, out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inp.max(1) as f64).sqrt();
        Self {
            inp,
            out,
            w: (0..inp * out).map(|_| rng.random_range(-bound..bound)).collect(),
            b: vec![0.0; out],
        }
    }

    fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        for o in 0..self.out {
            let row = &self.w[o * self.inp..(o + 1) * self.inp];
            y.push(self.b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

/// ReLU on every hidden layer, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer activations kept for backpropagation.
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-initialised hidden layers; the output layer starts at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut layers: Vec<Dense> = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        if let Some(last) = layers.last_mut() {
            last.w.iter_mut().for_each(|w| *w = 0.0);
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inp
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out).unwrap_or(0)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.out).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).acts.pop().expect("at least one layer")
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(l.out);
            l.forward(&acts[i], &mut y);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        Trace { acts }
    }

    /// Accumulates parameter gradients into `grad` (laid out like
    /// [`Mlp::params`]) given dLoss/dOutput.
    fn backward(&self, t: &Trace, mut delta: Vec<f64>, grad: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.w.len() + l.b.len();
        }
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let x = &t.acts[i];
            let g = &mut grad[offsets[i]..offsets[i] + l.w.len() + l.b.len()];
            let (gw, gb) = g.split_at_mut(l.w.len());
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (gw, xv) in gw[o * l.inp..(o + 1) * l.inp].iter_mut().zip(x) {
                    *gw += d * xv;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; l.inp];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&l.w[o * l.inp..(o + 1) * l.inp]) {
                    *p += d * w;
                }
            }
            // ReLU derivative of the layer below.
            for (p, a) in prev.iter_mut().zip(&t.acts[i]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().expect("parameter count");
            }
        }
    }
}

/// Which loss an [`Mlp`] head is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Mean over outputs of the squared error.
    Mse,
    /// Mean over outputs of sigmoid cross-entropy on logits.
    Bce,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Loss {
    /// Loss value and dLoss/dOutput for one sample.
    fn eval(self, y: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
        let n = y.len().max(1) as f64;
        match self {
            Loss::Mse => {
                let d: Vec<f64> = y.iter().zip(t).map(|(a, b)| a - b).collect();
                (d.iter().map(|v| v * v).sum::<f64>() / n, d.iter().map(|v| 2.0 * v / n).collect())
            }
            Loss::Bce => {
                let mut l = 0.0;
                let mut g = Vec::with_capacity(y.len());
                for (z, t) in y.iter().zip(t) {
                    // log(1 + e^z) - t z, computed stably.
                    l += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
                    g.push((sigmoid(*z) - t) / n);
                }
                (l / n, g)
            }
        }
    }
}

/// Mean loss over `(inputs, targets)` and its gradient w.r.t. all parameters.
pub fn loss_and_grad(net: &Mlp, loss: Loss, xs: &[&[f64]], ts: &[&[f64]]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.num_params()];
    let mut total = 0.0;
    for (x, t) in xs.iter().zip(ts) {
        let tr = net.trace(x);
        let (l, d) = loss.eval(tr.acts.last().expect("output"), t);
        total += l;
        net.backward(&tr, d, &mut grad);
    }
    let n = xs.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (total / n, grad)
}

pub fn mean_loss(net: &Mlp, loss: Loss, xs: &[&[f64]], ts: &[&[f64]]) -> f64 {
    let n = xs.len().max(1) as f64;
    xs.iter().zip(ts).map(|(x, t)| loss.eval(&net.forward(x), t).0).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Relative errors below this gradient magnitude are measured absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient with central differences for every parameter.
pub fn gradient_check(net: &Mlp, loss: Loss, xs: &[&[f64]], ts: &[&[f64]], h: f64) -> GradCheck {
    let (_, analytic) = loss_and_grad(net, loss, xs, ts);
    let base = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p);
        let up = mean_loss(&probe, loss, xs, ts);
        p[i] = base[i] - h;
        probe.set_params(&p);
        let down = mean_loss(&probe, loss, xs, ts);
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    GradCheck {
        max_rel_error: worst,
        checked: base.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Fraction of samples held out for early stopping; 0 disables it.
    pub validation: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            validation: 0.1,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Momentum minibatch gradient descent on one head.
///
/// Returns the parameters with the best validation loss (or the last ones
/// when validation is disabled).
pub fn train_mlp(net: &Mlp, loss: Loss, xs: &[&[f64]], ts: &[&[f64]], cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    if xs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.validation) {
        return Err(Error::invalid("batch size must be positive and validation in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if xs.len() >= 10 { (xs.len() as f64 * cfg.validation).round() as usize } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);
    let pick = |idx: &[usize]| -> (Vec<&[f64]>, Vec<&[f64]>) { (idx.iter().map(|i| xs[*i]).collect(), idx.iter().map(|i| ts[*i]).collect()) };
    let (tx, tt) = pick(train_idx);
    let (vx, vt) = pick(val_idx);

    let initial = mean_loss(net, loss, &tx, &tt);
    let mut report = TrainReport {
        initial_loss: initial,
        history: Vec::new(),
        best_epoch: None,
        stopped_early: false,
    };
    let mut current = net.clone();
    let mut params = current.params();
    let mut velocity = vec![0.0; params.len()];
    let mut best = (f64::INFINITY, net.clone());
    let mut since_best = 0;
    let mut idx: Vec<usize> = (0..tx.len()).collect();

    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in idx.chunks(cfg.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|i| tx[*i]).collect();
            let bt: Vec<&[f64]> = batch.iter().map(|i| tt[*i]).collect();
            let (l, g) = loss_and_grad(&current, loss, &bx, &bt);
            sum += l * batch.len() as f64;
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            current.set_params(&params);
        }
        let train_loss = sum / tx.len() as f64;
        if !train_loss.is_finite() || train_loss > 10.0 * initial.max(1e-12) {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
                initial,
            });
        }
        let validation_loss = (!vx.is_empty()).then(|| mean_loss(&current, loss, &vx, &vt));
        report.history.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
        });
        let score = validation_loss.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, current.clone());
            report.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if !vx.is_empty() && since_best >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    if report.history.is_empty() {
        return Ok((net.clone(), report));
    }
    let out = if vx.is_empty() { current } else { best.1 };
    Ok((out, report))
}
