use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use mimic::arena::Behavior;
use mimic::distill::{bootstrap, distill, BootstrapDataset, Provenance};
use mimic::env::{EnvKind, Environment};
use mimic::gateway::{serve, write_atomic, Clock, Mode, ServeConfig};
use mimic::markov::{fit_ensemble, Context as Query, MarkovEnsemble, ModelSequence, QueryRecord, Telemetry};
use mimic::planner::{astar_plan, es_optimize, fixtures, ProgressionModel};
use mimic::style::{style_distance, Metric, StyleConfig};
use mimic::{Action, Episode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;

mod config;

use config::Config;

#[derive(Parser)]
#[command(name = "mimic", version, about = "Imitation, style and planning workbench")]
struct Cli {
    /// Seed for every randomised stage; overrides seeds in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; documents go to stdout when absent. For `serve`, the
    /// persistence root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(long)]
        tick_ms: Option<u64>,
        /// arena | progression
        #[arg(long, value_parser = kebab::<EnvKind>)]
        env: Option<EnvKind>,
        /// agent | human-override | mixed
        #[arg(long, value_parser = kebab::<Mode>)]
        mode: Option<Mode>,
        /// fast | live
        #[arg(long, value_parser = kebab::<Clock>)]
        clock: Option<Clock>,
    },
    /// Record a scripted arena behaviour as an episode.
    Record {
        /// circler | zigzag | aggressive | sniper | exploratory | sneaky
        #[arg(long)]
        policy: Behavior,
        #[arg(long, default_value_t = 500)]
        ticks: usize,
    },
    /// Fit a Markov ensemble on episodes.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        episodes: Vec<PathBuf>,
        #[arg(long)]
        order: Option<usize>,
    },
    /// Run ensembles (oldest first) plus the fallback and record the episode.
    Play {
        #[arg(long, num_args = 1.., required = true)]
        ensemble: Vec<PathBuf>,
        /// Environment id: `arena` or `progression:<fixture>`.
        #[arg(long, default_value = "arena")]
        env: String,
        #[arg(long, default_value_t = 500)]
        ticks: usize,
    },
    /// Generate a bootstrap dataset from ensembles and their demonstrations.
    Bootstrap {
        #[arg(long, num_args = 1.., required = true)]
        ensemble: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        episodes: Vec<PathBuf>,
        #[arg(long)]
        multiplier: Option<f64>,
        #[arg(long)]
        episode_len: Option<usize>,
    },
    /// Distil a bootstrap dataset into a policy net.
    Distill {
        #[arg(long)]
        dataset: PathBuf,
        /// Ensembles the dataset was generated with, for the agreement check.
        #[arg(long, num_args = 1.., required = true)]
        ensemble: Vec<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Style distance between two sets of episodes.
    StyleDist {
        #[arg(long, num_args = 1.., required = true)]
        a: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        b: Vec<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        order: Option<usize>,
        /// jsd | hellinger
        #[arg(long)]
        metric: Option<Metric>,
    },
    /// Progression planners.
    Plan {
        #[command(subcommand)]
        planner: PlanCommand,
    },
    /// Evaluation reports.
    Eval {
        #[command(subcommand)]
        what: EvalCommand,
    },
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Shortest plan by A*.
    Astar {
        /// Fixture name (toy, barista, medic, workshop) or TOML path.
        #[arg(long)]
        model: String,
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// Utility-policy search by evolution strategy.
    Es {
        #[arg(long)]
        model: String,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Competence and confidence per query window.
    Competence {
        #[arg(long, num_args = 1.., required = true)]
        ensemble: Vec<PathBuf>,
        /// Environment id: `arena` or `progression:<fixture>`.
        #[arg(long, default_value = "arena")]
        env: String,
        /// Query the demonstrated states of these episodes instead of
        /// rolling out.
        #[arg(long, num_args = 1..)]
        episodes: Vec<PathBuf>,
        #[arg(long, default_value_t = 500)]
        ticks: usize,
    },
}

fn kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::Serve {
            addr,
            tick_ms,
            env,
            mode,
            clock,
        } => cmd_serve(&cfg, seed, out, addr, tick_ms, env, mode, clock),
        Command::Record { policy, ticks } => cmd_record(&cfg, seed, out, policy, ticks),
        Command::Train { episodes, order } => cmd_train(&cfg, out, &episodes, order),
        Command::Play { ensemble, env, ticks } => cmd_play(&cfg, seed, out, &ensemble, &env, ticks),
        Command::Bootstrap {
            ensemble,
            episodes,
            multiplier,
            episode_len,
        } => cmd_bootstrap(&cfg, seed, out, &ensemble, &episodes, multiplier, episode_len),
        Command::Distill {
            dataset,
            ensemble,
            epochs,
        } => cmd_distill(&cfg, seed, out, &dataset, &ensemble, epochs),
        Command::StyleDist {
            a,
            b,
            lambda,
            order,
            metric,
        } => cmd_style(&cfg, out, &a, &b, lambda, order, metric),
        Command::Plan { planner } => match planner {
            PlanCommand::Astar { model, cutoff } => cmd_astar(&cfg, out, &model, cutoff),
            PlanCommand::Es {
                model,
                iterations,
                population,
            } => cmd_es(&cfg, seed, out, &model, iterations, population),
        },
        Command::Eval {
            what: EvalCommand::Competence {
                ensemble,
                env,
                episodes,
                ticks,
            },
        } => cmd_competence(&cfg, seed, out, &ensemble, &env, &episodes, ticks),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_episodes(paths: &[PathBuf]) -> Result<Vec<Episode>> {
    paths
        .iter()
        .map(|p| Episode::from_doc(&read(p)?).with_context(|| format!("decoding {}", p.display())))
        .collect()
}

fn read_ensembles(paths: &[PathBuf]) -> Result<Vec<MarkovEnsemble>> {
    paths
        .iter()
        .map(|p| MarkovEnsemble::from_doc(&read(p)?).with_context(|| format!("decoding {}", p.display())))
        .collect()
}

fn load_model(name: &str) -> Result<ProgressionModel> {
    if let Some(m) = fixtures::by_name(name) {
        return Ok(m);
    }
    Ok(ProgressionModel::from_toml(&read(Path::new(name))?)?)
}

/// The environment an episode was recorded in, from its `env_id`.
fn environment_for(cfg: &Config, env_id: &str) -> Result<Box<dyn Environment>> {
    if env_id == "arena" {
        return Ok(Box::new(mimic::env::ArenaEnv::new(cfg.arena.clone())?));
    }
    if let Some(name) = env_id.strip_prefix("progression:") {
        let model = fixtures::by_name(name).ok_or_else(|| anyhow!("unknown progression model `{name}`"))?;
        return Ok(Box::new(mimic::env::ProgressionEnv::new(model)));
    }
    bail!("unknown environment `{env_id}`")
}

fn sequence(cfg: &Config, env: &dyn Environment, ensembles: Vec<MarkovEnsemble>) -> Result<ModelSequence> {
    let meta = env.meta();
    let mut seq = ModelSequence::new(env.fallback()).with_config(cfg.ensemble.lookup);
    for e in ensembles {
        e.scheme().check_meta(&meta)?;
        seq = seq.push_ensemble(e);
    }
    Ok(seq)
}

#[allow(clippy::too_many_arguments)]
fn cmd_serve(
    cfg: &Config,
    seed: Option<u64>,
    out: Option<&Path>,
    addr: String,
    tick_ms: Option<u64>,
    env: Option<EnvKind>,
    mode: Option<Mode>,
    clock: Option<Clock>,
) -> Result<()> {
    let mut session = cfg.session.clone();
    session.seed = seed.unwrap_or(session.seed);
    session.env = env.unwrap_or(session.env);
    session.mode = mode.unwrap_or(session.mode);
    session.clock = clock.unwrap_or(session.clock);
    if session.env == EnvKind::Arena && session.env_config.is_none() {
        session.env_config = Some(cfg.arena.to_toml());
    }
    let server = serve(ServeConfig {
        addr,
        tick_ms: tick_ms.unwrap_or(session.tick_ms),
        root: out.map(Path::to_path_buf),
        session,
    })?;
    println!("listening on {}", server.local_addr());
    std::io::stdout().flush()?;
    server.join();
    Ok(())
}

fn cmd_record(cfg: &Config, seed: Option<u64>, out: Option<&Path>, policy: Behavior, ticks: usize) -> Result<()> {
    let seed = seed.unwrap_or(cfg.arena.seed);
    let arena = mimic::arena::Arena::new(mimic::arena::ArenaConfig {
        seed,
        ..cfg.arena.clone()
    })?;
    let ep = mimic::arena::record_episode(&arena, policy, ticks, seed)?;
    emit(out, &ep.to_doc()?)?;
    eprintln!("recorded {} steps of {}", ep.len(), policy.name());
    Ok(())
}

fn cmd_train(cfg: &Config, out: Option<&Path>, episodes: &[PathBuf], order: Option<usize>) -> Result<()> {
    let eps = read_episodes(episodes)?;
    let env = environment_for(cfg, &eps[0].meta.env_id)?;
    let scheme = env.scheme(&cfg.ensemble.scheme)?;
    let order = order.unwrap_or(cfg.ensemble.max_order);
    let started = Instant::now();
    let ens = fit_ensemble(&eps, &scheme, order)?;
    emit(out, &ens.to_doc()?)?;
    let keys: usize = ens.models().iter().map(|m| m.len()).sum();
    eprintln!(
        "fitted N={order} K={} on {} steps: {keys} keys in {:.2?}",
        scheme.k(),
        eps.iter().map(Episode::len).sum::<usize>(),
        started.elapsed()
    );
    Ok(())
}

/// Rolls the sequence out in `env` and returns the episode and per-query records.
fn rollout(
    env: &mut dyn Environment,
    seq: &ModelSequence,
    ticks: usize,
    seed: u64,
) -> Result<(Episode, Vec<QueryRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = env.reset(seed);
    let keep = seq.ensembles().iter().map(|e| e.max_order()).max().unwrap_or(0);
    let mut history: Vec<Action> = Vec::new();
    let mut ep = Episode::new(env.meta());
    let mut records = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        let d = seq.policy_action(Query::new(&s, &history), &mut rng);
        records.push(QueryRecord::from(&d));
        let tr = env.step(&d.action);
        if !tr.rejected {
            ep.push(s, d.action.clone())?;
            history.push(d.action);
            if history.len() > keep {
                history.remove(0);
            }
        }
        s = tr.state;
        if tr.done {
            break;
        }
    }
    Ok((ep, records))
}

fn cmd_play(
    cfg: &Config,
    seed: Option<u64>,
    out: Option<&Path>,
    ensemble: &[PathBuf],
    env_id: &str,
    ticks: usize,
) -> Result<()> {
    let ensembles = read_ensembles(ensemble)?;
    let mut env = environment_for(cfg, env_id)?;
    let seq = sequence(cfg, env.as_ref(), ensembles)?;
    let (ep, records) = rollout(env.as_mut(), &seq, ticks, seed.unwrap_or(cfg.arena.seed))?;
    emit(out, &ep.to_doc()?)?;
    let answered = records.iter().filter(|r| r.answered).count();
    eprintln!(
        "played {} steps; ensemble answered {answered} of {} queries",
        ep.len(),
        records.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bootstrap(
    cfg: &Config,
    seed: Option<u64>,
    out: Option<&Path>,
    ensemble: &[PathBuf],
    episodes: &[PathBuf],
    multiplier: Option<f64>,
    episode_len: Option<usize>,
) -> Result<()> {
    let ensembles = read_ensembles(ensemble)?;
    let demos = read_episodes(episodes)?;
    let env = mimic::env::ArenaEnv::new(cfg.arena.clone())?;
    let seq = sequence(cfg, &env, ensembles)?;
    let mut bc = cfg.bootstrap.clone();
    bc.seed = seed.unwrap_or(bc.seed);
    bc.multiplier = multiplier.unwrap_or(bc.multiplier);
    bc.episode_len = episode_len.unwrap_or(bc.episode_len);
    let started = Instant::now();
    let ds = bootstrap(&seq, std::slice::from_ref(&cfg.arena), &demos, &bc)?;
    emit(out, &ds.to_doc()?)?;
    eprintln!(
        "bootstrap: {} demonstration steps, {} generated (x{:.2}; ensemble {}, fallback {}) in {:.2?}",
        ds.header.demo_steps,
        ds.header.generated_steps,
        ds.multiplier(),
        ds.count(Provenance::Ensemble),
        ds.count(Provenance::Fallback),
        started.elapsed()
    );
    Ok(())
}

fn cmd_distill(
    cfg: &Config,
    seed: Option<u64>,
    out: Option<&Path>,
    dataset: &Path,
    ensemble: &[PathBuf],
    epochs: Option<usize>,
) -> Result<()> {
    let ds = BootstrapDataset::from_doc(&read(dataset)?).context("decoding dataset")?;
    let env = environment_for(cfg, &ds.header.meta.env_id)?;
    let seq = sequence(cfg, env.as_ref(), read_ensembles(ensemble)?)?;
    let mut dc = cfg.distill.clone();
    if let Some(s) = seed {
        dc.seed = s;
        dc.train.seed = s;
    }
    dc.train.epochs = epochs.unwrap_or(dc.train.epochs);
    let started = Instant::now();
    let res = distill(&ds, &seq, &dc)?;
    emit(out, &res.net.to_doc()?)?;
    eprintln!(
        "distilled in {:.2?}: motion {:?}, discrete {:?}",
        started.elapsed(),
        res.net.motion.hidden_widths(),
        res.net.discrete.hidden_widths()
    );
    eprintln!(
        "{}",
        serde_json::json!({ "heldout": res.heldout, "train": res.train, "forward_cost": res.net.forward_cost() })
    );
    Ok(())
}

fn cmd_style(
    cfg: &Config,
    out: Option<&Path>,
    a: &[PathBuf],
    b: &[PathBuf],
    lambda: Option<f64>,
    order: Option<usize>,
    metric: Option<Metric>,
) -> Result<()> {
    let (va, vb) = (read_episodes(a)?, read_episodes(b)?);
    let env = environment_for(cfg, &va[0].meta.env_id)?;
    let scheme = env.scheme(&cfg.ensemble.scheme)?;
    let s = &cfg.style;
    let mut sc = StyleConfig::new(
        lambda.unwrap_or(s.lambda),
        order.unwrap_or(s.max_order),
        metric.unwrap_or(s.metric),
        s.level.unwrap_or(scheme.k()),
    );
    sc.mode = s.grams;
    let report = style_distance(&va, &vb, &sc, &scheme)?;
    print!("{}", report.to_text());
    if let Some(p) = out {
        emit(Some(p), &report.to_doc()?)?;
    }
    Ok(())
}

fn cmd_astar(cfg: &Config, out: Option<&Path>, model: &str, cutoff: Option<usize>) -> Result<()> {
    let m = load_model(model)?;
    let plan = astar_plan(&m, &m.start(), &cfg.plan.weights, cutoff.unwrap_or(cfg.plan.node_cutoff))?;
    println!(
        "model {}  status {:?}  expanded {}  length {}  events {}",
        m.name(),
        plan.status,
        plan.expanded,
        plan.actions.len(),
        plan.final_state.completed
    );
    for (i, name) in plan.action_names(&m).iter().enumerate() {
        println!("{:>4}  {name}", i + 1);
    }
    if let Some(p) = out {
        let v = serde_json::json!({ "model": m.name(), "plan": plan, "names": plan.action_names(&m) });
        emit(Some(p), &format!("{v}\n"))?;
    }
    Ok(())
}

fn cmd_es(
    cfg: &Config,
    seed: Option<u64>,
    out: Option<&Path>,
    model: &str,
    iterations: Option<usize>,
    population: Option<usize>,
) -> Result<()> {
    let m = load_model(model)?;
    let mut es = cfg.es.clone();
    es.seed = seed.unwrap_or(es.seed);
    es.iterations = iterations.unwrap_or(es.iterations);
    es.population = population.unwrap_or(es.population);
    let res = es_optimize(&m, &es)?;
    println!("{:>5}  {:>10}  {:>9}  {:>9}  {:>6}", "iter", "mean_J", "events", "attempts", "goal");
    for h in &res.history {
        println!(
            "{:>5}  {:>10.4}  {:>9.3}  {:>9.3}  {:>6.3}",
            h.iteration, h.mean_j, h.mean_completed, h.mean_attempted, h.goal_rate
        );
    }
    if let Some(p) = out {
        emit(Some(p), &format!("{}\n", serde_json::to_string(&res)?))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_competence(
    cfg: &Config,
    seed: Option<u64>,
    out: Option<&Path>,
    ensemble: &[PathBuf],
    env_id: &str,
    episodes: &[PathBuf],
    ticks: usize,
) -> Result<()> {
    let ensembles = read_ensembles(ensemble)?;
    let mut env = environment_for(cfg, env_id)?;
    let seq = sequence(cfg, env.as_ref(), ensembles)?;
    let seed = seed.unwrap_or(cfg.arena.seed);
    let records = if episodes.is_empty() {
        rollout(env.as_mut(), &seq, ticks, seed)?.1
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = seq.ensembles().iter().map(|e| e.max_order()).max().unwrap_or(0);
        let mut records = Vec::new();
        for ep in read_episodes(episodes)? {
            let actions: Vec<Action> = ep.actions().cloned().collect();
            for (i, st) in ep.steps().iter().enumerate() {
                let hist = &actions[i.saturating_sub(keep)..i];
                records.push(QueryRecord::from(&seq.policy_action(Query::new(&st.state, hist), &mut rng)));
            }
        }
        records
    };
    let mut tel = Telemetry::new(cfg.session.window);
    let mut lines = String::new();
    for r in &records {
        if tel.record(*r) {
            lines.push_str(&serde_json::json!({
                "queries": tel.seen(),
                "competence": tel.competence()?,
                "confidence": tel.confidence()?,
            }).to_string());
            lines.push('\n');
        }
    }
    emit(out, &lines)?;
    let overall = mimic::markov::competence(&records).map_err(|e| anyhow!("{e}"))?;
    eprintln!("{} queries, overall competence {overall:.4}", records.len());
    Ok(())
}
