use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rollout_objective, ProgressionModel, UtilityParams, DEFAULT_EPSILON};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsConfig {
    /// Even; members come in mirrored pairs.
    pub population: usize,
    pub sigma: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Rollouts averaged per fitness evaluation.
    pub rollouts: usize,
    pub horizon: u32,
    pub epsilon: f64,
    pub initial_temperature: f64,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population: 32,
            sigma: 0.1,
            learning_rate: 0.05,
            iterations: 200,
            rollouts: 4,
            horizon: 200,
            epsilon: DEFAULT_EPSILON,
            initial_temperature: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsIteration {
    pub iteration: usize,
    pub mean_j: f64,
    pub mean_completed: f64,
    pub mean_attempted: f64,
    pub goal_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsResult {
    /// Centre of the population with the highest mean J.
    pub params: UtilityParams,
    pub final_params: UtilityParams,
    pub history: Vec<EsIteration>,
}

fn flatten(p: &UtilityParams) -> Vec<f64> {
    let mut v: Vec<f64> = p.p.iter().chain(&p.q).flatten().copied().collect();
    v.push(p.temperature.ln());
    v
}

fn unflatten(template: &UtilityParams, v: &[f64]) -> UtilityParams {
    let mut it = v.iter().copied();
    let mut take = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().map(|_| it.next().expect("length")).collect()).collect()
    };
    let p = take(&template.p);
    let q = take(&template.q);
    let log_t = v[v.len() - 1].clamp(-7.0, 7.0);
    UtilityParams {
        p,
        q,
        temperature: log_t.exp(),
    }
}

#[derive(Default, Clone, Copy)]
struct Fitness {
    j: f64,
    completed: f64,
    attempted: f64,
    reached: f64,
}

fn evaluate(model: &ProgressionModel, params: &UtilityParams, cfg: &EsConfig, seeds: &[u64]) -> Result<Fitness> {
    let mut f = Fitness::default();
    for s in seeds {
        let r = rollout_objective(model, params, cfg.horizon, cfg.epsilon, *s)?;
        f.j += r.j;
        f.completed += r.completed as f64;
        f.attempted += r.attempted as f64;
        f.reached += r.reached_goal as u8 as f64;
    }
    let n = seeds.len() as f64;
    Ok(Fitness {
        j: f.j / n,
        completed: f.completed / n,
        attempted: f.attempted / n,
        reached: f.reached / n,
    })
}

/// Centred ranks in [-0.5, 0.5]; ties broken by index.
fn centred_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]).then(a.cmp(b)));
    let mut r = vec![0.0; x.len()];
    let denom = (x.len() - 1).max(1) as f64;
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank as f64 / denom - 0.5;
    }
    r
}

/// Evolution strategy over the utility coefficients and log temperature.
///
/// Mirrored Gaussian perturbations, rank-shaped fitness, plain gradient
/// ascent. Every member of one iteration is scored on the same rollout seeds.
pub fn es_optimize(model: &ProgressionModel, cfg: &EsConfig) -> Result<EsResult> {
    if cfg.population < 2 || !cfg.population.is_multiple_of(2) {
        return Err(Error::invalid("population must be even and at least 2"));
    }
    if !(cfg.sigma > 0.0 && cfg.initial_temperature > 0.0) || cfg.rollouts == 0 {
        return Err(Error::invalid("sigma, temperature and rollouts must be positive"));
    }
    let template = UtilityParams::zeros(model, cfg.initial_temperature);
    let mut theta = flatten(&template);
    let dim = theta.len();
    let pairs = cfg.population / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best = (f64::NEG_INFINITY, template.clone());

    for it in 0..cfg.iterations {
        let noise: Vec<Vec<f64>> = (0..pairs)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let base = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((it as u64) << 20);
        let seeds: Vec<u64> = (0..cfg.rollouts as u64).map(|r| base.wrapping_add(r)).collect();
        let members: Vec<Vec<f64>> = noise
            .iter()
            .flat_map(|e| {
                let plus = theta.iter().zip(e).map(|(t, n)| t + cfg.sigma * n).collect();
                let minus = theta.iter().zip(e).map(|(t, n)| t - cfg.sigma * n).collect();
                [plus, minus]
            })
            .collect();
        let fitness = members
            .par_iter()
            .map(|m| evaluate(model, &unflatten(&template, m), cfg, &seeds))
            .collect::<Result<Vec<_>>>()?;

        let n = fitness.len() as f64;
        let mean = |f: fn(&Fitness) -> f64| fitness.iter().map(f).sum::<f64>() / n;
        let record = EsIteration {
            iteration: it,
            mean_j: mean(|f| f.j),
            mean_completed: mean(|f| f.completed),
            mean_attempted: mean(|f| f.attempted),
            goal_rate: mean(|f| f.reached),
        };
        if record.mean_j > best.0 {
            best = (record.mean_j, unflatten(&template, &theta));
        }
        history.push(record);

        let ranks = centred_ranks(&fitness.iter().map(|f| f.j).collect::<Vec<_>>());
        let scale = cfg.learning_rate / (cfg.population as f64 * cfg.sigma);
        for (k, e) in noise.iter().enumerate() {
            let w = ranks[2 * k] - ranks[2 * k + 1];
            for (t, x) in theta.iter_mut().zip(e) {
                *t += scale * w * x;
            }
        }
    }
    let final_params = unflatten(&template, &theta);
    let params = if history.is_empty() { template } else { best.1 };
    Ok(EsResult {
        params,
        final_params,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    fn small_cfg(iterations: usize) -> EsConfig {
        EsConfig {
            population: 8,
            iterations,
            rollouts: 2,
            horizon: 60,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn zero_iterations_returns_initial() {
        let m = fixtures::toy();
        let r = es_optimize(&m, &small_cfg(0)).unwrap();
        assert_eq!(r.params, UtilityParams::zeros(&m, 1.0));
        assert_eq!(r.final_params, r.params);
        assert!(r.history.is_empty());
    }

    #[test]
    fn same_seed_same_history() {
        let m = fixtures::medic();
        let a = es_optimize(&m, &small_cfg(5)).unwrap();
        let b = es_optimize(&m, &small_cfg(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn odd_population_rejected() {
        let m = fixtures::toy();
        let cfg = EsConfig {
            population: 7,
            ..small_cfg(1)
        };
        assert!(es_optimize(&m, &cfg).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let m = fixtures::medic();
        let mut p = UtilityParams::zeros(&m, 0.5);
        p.p[1][2] = 3.0;
        p.q[0][1] = -2.0;
        let back = unflatten(&p, &flatten(&p));
        assert_eq!(back.p, p.p);
        assert_eq!(back.q, p.q);
        assert!((back.temperature - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ranks_are_centred() {
        assert_eq!(centred_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
    }
}
