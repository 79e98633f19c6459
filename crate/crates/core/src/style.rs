//! n-gram behavior distributions and the λ-weighted style distance.
//!
//! For a behavior (a set of episodes) the order-`n` distribution counts every
//! window of `n + 1` consecutive quantized actions inside an episode. Two
//! behaviors are compared order by order with a bounded probability distance
//! and the per-order distances are aggregated as
//!
//! ```text
//! D = λ/(1-λ) · Σ_{n=0..N} λ^n d_n  +  λ^{N+1}/(1-λ) · d_N
//! ```
//!
//! That aggregate can exceed 1, so a normalized value (divided by the
//! aggregate with every `d_n = 1`) is reported next to it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::doc;
use crate::error::{Error, Result};
use crate::model::Episode;
use crate::quantize::QuantizationScheme;

/// What a gram element is made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramMode {
    /// Quantized actions only.
    #[default]
    Actions,
    /// Quantized `(state, action)` pairs.
    StateActions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Jsd,
    Hellinger,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsd" | "js" | "jensen-shannon" => Ok(Metric::Jsd),
            "hellinger" | "hd" => Ok(Metric::Hellinger),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramDistribution {
    pub n: usize,
    pub level: usize,
    pub weights: BTreeMap<Vec<i64>, f64>,
    /// Number of grams counted.
    pub samples: usize,
}

pub fn ngram_distribution(
    episodes: &[Episode],
    n: usize,
    scheme: &QuantizationScheme,
    level: usize,
    mode: GramMode,
) -> Result<NgramDistribution> {
    scheme.level(level)?;
    let total_steps: usize = episodes.iter().map(Episode::len).sum();
    if total_steps <= n {
        return Err(Error::invalid(format!(
            "{total_steps} steps cannot support order-{n} grams"
        )));
    }
    let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    let mut samples = 0usize;
    for e in episodes {
        scheme.check_meta(&e.meta)?;
        let elems: Vec<Vec<i64>> = e
            .steps()
            .iter()
            .map(|s| {
                let mut k = Vec::new();
                if mode == GramMode::StateActions {
                    scheme.push_state_key(level, &s.state, &mut k);
                }
                scheme.push_action_key(level, &s.action, &mut k);
                k
            })
            .collect();
        for w in elems.windows(n + 1) {
            *counts.entry(w.concat()).or_default() += 1;
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(Error::invalid(format!("no episode is longer than {n} steps")));
    }
    let weights = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / samples as f64))
        .collect();
    Ok(NgramDistribution {
        n,
        level,
        weights,
        samples,
    })
}

/// Aligns two sparse distributions on the union of their keys, padding with zeros.
fn aligned(p: &NgramDistribution, q: &NgramDistribution) -> (Vec<f64>, Vec<f64>) {
    let mut keys: Vec<&Vec<i64>> = p.weights.keys().chain(q.weights.keys()).collect();
    keys.sort();
    keys.dedup();
    let pv = keys.iter().map(|k| p.weights.get(*k).copied().unwrap_or(0.0)).collect();
    let qv = keys.iter().map(|k| q.weights.get(*k).copied().unwrap_or(0.0)).collect();
    (pv, qv)
}

/// Base-2 Jensen–Shannon divergence of two aligned distributions.
pub fn jsd_dense(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            acc += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            acc += 0.5 * b * (b / m).log2();
        }
    }
    acc.clamp(0.0, 1.0)
}

/// `(1/√2) · ‖√p − √q‖₂`.
pub fn hellinger_dense(p: &[f64], q: &[f64]) -> f64 {
    let ss: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    (0.5 * ss).sqrt().clamp(0.0, 1.0)
}

pub fn jsd(p: &NgramDistribution, q: &NgramDistribution) -> f64 {
    let (a, b) = aligned(p, q);
    jsd_dense(&a, &b)
}

pub fn hellinger(p: &NgramDistribution, q: &NgramDistribution) -> f64 {
    let (a, b) = aligned(p, q);
    hellinger_dense(&a, &b)
}

impl Metric {
    pub fn distance(self, p: &NgramDistribution, q: &NgramDistribution) -> f64 {
        match self {
            Metric::Jsd => jsd(p, q),
            Metric::Hellinger => hellinger(p, q),
        }
    }
}

/// The aggregate exactly as printed, for per-order distances `d_0..=d_N`.
pub fn aggregate_verbatim(lambda: f64, per_n: &[f64]) -> Result<f64> {
    check_lambda(lambda)?;
    let Some(&last) = per_n.last() else {
        return Err(Error::Empty("per-order distances"));
    };
    let scale = lambda / (1.0 - lambda);
    let mut pow = 1.0;
    let mut sum = 0.0;
    for d in per_n {
        sum += pow * d;
        pow *= lambda;
    }
    // `pow` is now λ^{N+1}.
    Ok(scale * sum + pow / (1.0 - lambda) * last)
}

/// Aggregate with every per-order distance equal to 1.
pub fn aggregate_max(lambda: f64, max_order: usize) -> Result<f64> {
    aggregate_verbatim(lambda, &vec![1.0; max_order + 1])
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must lie in (0, 1), got {lambda}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleDistanceReport {
    pub lambda: f64,
    pub max_order: usize,
    pub metric: Metric,
    pub level: usize,
    pub mode: GramMode,
    pub per_n: Vec<f64>,
    pub d_verbatim: f64,
    pub d_normalized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleConfig {
    pub lambda: f64,
    pub max_order: usize,
    pub metric: Metric,
    pub level: usize,
    pub mode: GramMode,
}

impl StyleConfig {
    pub fn new(lambda: f64, max_order: usize, metric: Metric, level: usize) -> Self {
        Self {
            lambda,
            max_order,
            metric,
            level,
            mode: GramMode::Actions,
        }
    }
}

impl StyleDistanceReport {
    pub fn from_per_n(cfg: &StyleConfig, per_n: Vec<f64>) -> Result<Self> {
        let d_verbatim = aggregate_verbatim(cfg.lambda, &per_n)?;
        let d_normalized = (d_verbatim / aggregate_max(cfg.lambda, per_n.len() - 1)?).clamp(0.0, 1.0);
        Ok(Self {
            lambda: cfg.lambda,
            max_order: cfg.max_order,
            metric: cfg.metric,
            level: cfg.level,
            mode: cfg.mode,
            per_n,
            d_verbatim,
            d_normalized,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "style distance  metric={:?} lambda={} N={} level={} grams={:?}",
            self.metric, self.lambda, self.max_order, self.level, self.mode
        );
        let _ = writeln!(s, "{:>4}  {:>12}", "n", "d(v_n,w_n)");
        for (n, d) in self.per_n.iter().enumerate() {
            let _ = writeln!(s, "{n:>4}  {d:>12.6}");
        }
        let _ = writeln!(s, "D_verbatim   {:.6}", self.d_verbatim);
        let _ = writeln!(s, "D_normalized {:.6}", self.d_normalized);
        s
    }
}

pub fn style_distance(v: &[Episode], w: &[Episode], cfg: &StyleConfig, scheme: &QuantizationScheme) -> Result<StyleDistanceReport> {
    check_lambda(cfg.lambda)?;
    let per_n = (0..=cfg.max_order)
        .map(|n| {
            let vn = ngram_distribution(v, n, scheme, cfg.level, cfg.mode)?;
            let wn = ngram_distribution(w, n, scheme, cfg.level, cfg.mode)?;
            Ok(cfg.metric.distance(&vn, &wn))
        })
        .collect::<Result<Vec<_>>>()?;
    StyleDistanceReport::from_per_n(cfg, per_n)
}

pub const REPORT_FORMAT: &str = "style-report";
pub const REPORT_VERSION: u32 = 1;

impl StyleDistanceReport {
    pub fn to_doc(&self) -> Result<String> {
        doc::to_string(REPORT_FORMAT, REPORT_VERSION, self, std::iter::empty::<()>())
    }

    pub fn from_doc(text: &str) -> Result<Self> {
        let (r, _): (Self, Vec<serde_json::Value>) = doc::read_doc(text, REPORT_FORMAT, REPORT_VERSION)?;
        Ok(r)
    }
}
