use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::persist::{self, Artifact, ArtifactKind};
use super::protocol::{
    decode_request, encode_reply, ActionSource, Clock, Mode, Reply, Request, StateMsg, MAX_STATE_BYTES,
};
use crate::env::{from_config, EnvKind, Environment, SchemeConfig};
use crate::error::{Error, Result};
use crate::markov::{Context, LookupConfig, ModelSequence, QueryRecord, Source, Telemetry, DEFAULT_WINDOW};
use crate::model::{Action, Episode, DEFAULT_PERIOD_MS};
use crate::quantize::QuantizationScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub env: EnvKind,
    /// Environment configuration text (TOML); the built-in default if absent.
    pub env_config: Option<String>,
    pub mode: Mode,
    pub clock: Clock,
    pub seed: u64,
    pub scheme: SchemeConfig,
    pub max_order: usize,
    pub lookup: LookupConfig,
    /// Queries per competence window.
    pub window: usize,
    /// Live tick period.
    pub tick_ms: u64,
    /// Standard deviation of Gaussian noise added to every action argument,
    /// drawn from an unseeded generator. Zero keeps sessions reproducible.
    pub noise: f64,
    /// Directory for `save` and `load`; both are refused without one.
    pub root: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Arena,
            env_config: None,
            mode: Mode::Agent,
            clock: Clock::Fast,
            seed: 0,
            scheme: SchemeConfig::default(),
            max_order: 3,
            lookup: LookupConfig::default(),
            window: DEFAULT_WINDOW,
            tick_ms: DEFAULT_PERIOD_MS as u64,
            noise: 0.0,
            root: None,
        }
    }
}

/// Human control input for [`handle_override`].
#[derive(Debug, Clone, PartialEq)]
pub enum OverrideEvent {
    DemoStart,
    Action(Action),
    DemoEnd,
}

/// One environment instance with its agent, recording buffer and telemetry.
pub struct Session {
    id: u64,
    cfg: SessionConfig,
    env: Box<dyn Environment>,
    scheme: QuantizationScheme,
    seq: ModelSequence,
    rng: ChaCha8Rng,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    history: Vec<Action>,
    telemetry: Telemetry,
    demo: Option<Episode>,
    segments: u32,
    last_demo: Option<Episode>,
    pending: Option<Action>,
    t: u64,
    started: bool,
    done: bool,
}

impl Session {
    pub fn new(id: u64, cfg: SessionConfig) -> Result<Self> {
        if cfg.max_order == 0 {
            return Err(Error::config("max_order must be at least 1"));
        }
        if cfg.tick_ms == 0 {
            return Err(Error::config("tick_ms must be positive"));
        }
        let noise = if cfg.noise > 0.0 {
            let n = Normal::new(0.0, cfg.noise).map_err(|e| Error::config(e.to_string()))?;
            Some((ChaCha8Rng::from_os_rng(), n))
        } else if cfg.noise == 0.0 {
            None
        } else {
            return Err(Error::config("noise must be non-negative"));
        };
        let mut env = from_config(cfg.env, cfg.env_config.as_deref())?;
        env.reset(cfg.seed);
        let scheme = env.scheme(&cfg.scheme)?;
        let seq = ModelSequence::new(env.fallback()).with_config(cfg.lookup);
        Ok(Self {
            id,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            telemetry: Telemetry::new(cfg.window),
            cfg,
            env,
            scheme,
            seq,
            noise,
            history: Vec::new(),
            demo: None,
            segments: 0,
            last_demo: None,
            pending: None,
            t: 0,
            started: false,
            done: false,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    pub fn scheme(&self) -> &QuantizationScheme {
        &self.scheme
    }

    pub fn sequence(&self) -> &ModelSequence {
        &self.seq
    }

    /// Attaches a model sequence; its fallback replaces the environment's.
    pub fn set_sequence(&mut self, seq: ModelSequence) {
        self.seq = seq;
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn demo_active(&self) -> bool {
        self.demo.is_some()
    }

    pub fn last_demo(&self) -> Option<&Episode> {
        self.last_demo.as_ref()
    }

    /// True once a live session has been reset and should tick.
    pub fn ticking(&self) -> bool {
        self.cfg.clock == Clock::Live && self.started
    }

    /// Decodes one line and returns the encoded reply lines. The first line
    /// answers the request and carries its id; later lines are events.
    pub fn handle_line(&mut self, line: &str) -> Vec<String> {
        match decode_request(line) {
            Ok(env) => {
                let replies = self.handle(env.body);
                replies
                    .iter()
                    .enumerate()
                    .map(|(i, r)| encode_reply(if i == 0 { env.id.as_ref() } else { None }, r))
                    .collect()
            }
            Err((id, e)) => vec![encode_reply(id.as_ref(), &Reply::error(e))],
        }
    }

    /// Applies one request. The first reply answers it; any further ones are
    /// events (a `state` after `reset`, `competence` at window boundaries).
    pub fn handle(&mut self, req: Request) -> Vec<Reply> {
        let out = match req {
            Request::Reset {
                seed,
                env,
                config,
                mode,
                clock,
            } => self.reset(seed, env, config, mode, clock),
            Request::Step { action } => self.step(action),
            Request::State {} => Ok(vec![Reply::State(self.state_msg(None, None, None, false, Vec::new()))]),
            Request::Override { action } => self.override_action(action),
            Request::DemoStart {} => self.demo_start(),
            Request::DemoEnd {} => self.demo_end(),
            Request::Competence {} => Ok(vec![self.competence()]),
            Request::Save { artifact, name } => self.save(artifact, &name),
            Request::Load { path } => self.load(&path),
            Request::Error { message } => Err(Error::Protocol(format!("client reported: {message}"))),
        };
        out.unwrap_or_else(|e| vec![Reply::error(e)])
    }

    /// One live tick: the pending override inside a demonstration segment
    /// (or in human-override mode), the idle action if none arrived, and
    /// the agent otherwise.
    pub fn tick(&mut self) -> Vec<Reply> {
        if !self.started {
            return Vec::new();
        }
        if self.demo.is_some() || self.cfg.mode == Mode::HumanOverride {
            match self.pending.take() {
                Some(a) => self.advance(a, ActionSource::Human, None),
                None => {
                    let idle = self.env.idle_action();
                    self.advance(idle, ActionSource::Idle, None)
                }
            }
        } else {
            self.agent_step()
        }
    }

    fn reset(
        &mut self,
        seed: Option<u64>,
        env: Option<EnvKind>,
        config: Option<String>,
        mode: Option<Mode>,
        clock: Option<Clock>,
    ) -> Result<Vec<Reply>> {
        if self.demo.is_some() {
            return Err(Error::Protocol("cannot reset during a demonstration segment".into()));
        }
        let kind = env.unwrap_or(self.cfg.env);
        if env.is_some() || config.is_some() {
            let text = config.or_else(|| if kind == self.cfg.env { self.cfg.env_config.clone() } else { None });
            let next = from_config(kind, text.as_deref())?;
            let scheme = next.scheme(&self.cfg.scheme)?;
            if kind != self.cfg.env {
                self.seq = ModelSequence::new(next.fallback()).with_config(self.cfg.lookup);
                self.last_demo = None;
            }
            self.env = next;
            self.scheme = scheme;
            self.cfg.env = kind;
            self.cfg.env_config = text;
        }
        if let Some(m) = mode {
            self.cfg.mode = m;
        }
        if let Some(c) = clock {
            self.cfg.clock = c;
        }
        let seed = seed.unwrap_or(self.cfg.seed);
        self.cfg.seed = seed;
        self.env.reset(seed);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.history.clear();
        self.pending = None;
        self.started = true;
        self.done = false;
        let reply = Reply::Reset {
            session: self.id,
            seed,
            env: self.cfg.env,
            mode: self.cfg.mode,
            clock: self.cfg.clock,
            meta: self.env.meta(),
            scene: self.env.scene(),
        };
        Ok(vec![reply, Reply::State(self.state_msg(None, None, None, false, Vec::new()))])
    }

    fn step(&mut self, action: Option<Action>) -> Result<Vec<Reply>> {
        if self.cfg.clock == Clock::Live {
            return Err(Error::Protocol("live sessions advance on their own clock".into()));
        }
        if self.demo.is_some() || self.cfg.mode == Mode::HumanOverride {
            return Err(Error::Protocol("human control is active; send override".into()));
        }
        self.started = true;
        Ok(match action {
            Some(a) => self.advance(a, ActionSource::Client, None),
            None => self.agent_step(),
        })
    }

    fn override_action(&mut self, action: Action) -> Result<Vec<Reply>> {
        match self.cfg.mode {
            Mode::Agent => return Err(Error::Protocol("agent sessions do not accept overrides".into())),
            Mode::Mixed if self.demo.is_none() => {
                return Err(Error::Protocol("override outside a demonstration segment; send demo-start".into()))
            }
            _ => {}
        }
        if self.cfg.clock == Clock::Live {
            self.pending = Some(action);
            return Ok(vec![Reply::Override { queued: true }]);
        }
        self.started = true;
        Ok(self.advance(action, ActionSource::Human, None))
    }

    fn demo_start(&mut self) -> Result<Vec<Reply>> {
        if self.cfg.mode == Mode::Agent {
            return Err(Error::Protocol("agent sessions do not record demonstrations".into()));
        }
        if self.demo.is_some() {
            return Err(Error::Protocol("demonstration already in progress".into()));
        }
        self.demo = Some(Episode::new(self.env.meta()));
        self.pending = None;
        self.segments += 1;
        Ok(vec![Reply::DemoStart { segment: self.segments }])
    }

    /// Fits the segment and makes it visible to the agent in one swap.
    fn demo_end(&mut self) -> Result<Vec<Reply>> {
        let ep = self
            .demo
            .take()
            .ok_or_else(|| Error::Protocol("demo-end without demo-start".into()))?;
        self.pending = None;
        let steps = ep.len();
        if !ep.is_empty() {
            self.seq = self.seq.push_demonstration(&ep, &self.scheme, self.cfg.max_order)?;
            self.last_demo = Some(ep);
        }
        Ok(vec![Reply::DemoEnd {
            segment: self.segments,
            steps,
            ensembles: self.seq.len(),
        }])
    }

    fn competence(&self) -> Reply {
        Reply::Competence {
            competence: self.telemetry.competence().ok(),
            confidence: self.telemetry.confidence().ok(),
            window: self.telemetry.window().len(),
            seen: self.telemetry.seen(),
        }
    }

    fn root(&self) -> Result<&PathBuf> {
        self.cfg
            .root
            .as_ref()
            .ok_or_else(|| Error::Protocol("session has no persistence root".into()))
    }

    fn save(&self, kind: ArtifactKind, name: &str) -> Result<Vec<Reply>> {
        let root = self.root()?;
        let artifact = match kind {
            ArtifactKind::Episode => Artifact::Episode(
                self.demo
                    .clone()
                    .or_else(|| self.last_demo.clone())
                    .ok_or_else(|| Error::Protocol("no demonstration recorded".into()))?,
            ),
            ArtifactKind::Ensemble => Artifact::Ensemble(
                self.seq
                    .ensembles()
                    .last()
                    .map(|e| (**e).clone())
                    .ok_or_else(|| Error::Protocol("model sequence is empty".into()))?,
            ),
            ArtifactKind::Scheme => Artifact::Scheme(self.scheme.clone()),
            ArtifactKind::Net | ArtifactKind::Report => {
                return Err(Error::Protocol(format!("sessions do not hold a {}", kind.name())))
            }
        };
        let file = persist::file_name(kind, name);
        persist::write_atomic(&persist::resolve(root, &file)?, &artifact.to_doc()?)?;
        Ok(vec![Reply::Save { artifact: kind, path: file }])
    }

    fn load(&mut self, path: &str) -> Result<Vec<Reply>> {
        if self.demo.is_some() {
            return Err(Error::Protocol("cannot load during a demonstration segment".into()));
        }
        let full = persist::resolve(self.root()?, path)?;
        let artifact = persist::restore(&full)?;
        let meta = self.env.meta();
        let kind = artifact.kind();
        match artifact {
            Artifact::Episode(ep) => {
                self.scheme.check_meta(&ep.meta)?;
                self.seq = self.seq.push_demonstration(&ep, &self.scheme, self.cfg.max_order)?;
            }
            Artifact::Ensemble(ens) => {
                ens.scheme().check_meta(&meta)?;
                self.seq = self.seq.push_ensemble(ens);
            }
            Artifact::Scheme(s) => {
                s.check_meta(&meta)?;
                self.scheme = s;
            }
            Artifact::Net(_) | Artifact::Report(_) => {
                return Err(Error::Protocol(format!("sessions cannot attach a {}", kind.name())))
            }
        }
        Ok(vec![Reply::Load {
            artifact: kind,
            ensembles: self.seq.len(),
        }])
    }

    fn agent_step(&mut self) -> Vec<Reply> {
        let obs = self.env.observe();
        let d = self.seq.policy_action(Context::new(&obs, &self.history), &mut self.rng);
        let window_done = self.telemetry.record(QueryRecord::from(&d));
        let (source, ensemble) = match d.source {
            Source::Ensemble(i) => (ActionSource::Ensemble, Some(i)),
            Source::Fallback => (ActionSource::Fallback, None),
        };
        let mut out = self.advance(d.action, source, ensemble);
        if window_done {
            out.push(self.competence());
        }
        out
    }

    fn advance(&mut self, mut action: Action, source: ActionSource, ensemble: Option<usize>) -> Vec<Reply> {
        if let Some((rng, normal)) = self.noise.as_mut() {
            for a in &mut action.args {
                *a += normal.sample(rng);
            }
        }
        let before = self.env.observe();
        let tr = self.env.step(&action);
        if !tr.rejected {
            if source == ActionSource::Human {
                if let Some(demo) = self.demo.as_mut() {
                    demo.push(before, action.clone()).expect("environment accepted the action");
                }
            }
            self.history.push(action.clone());
            let keep = self.cfg.max_order.max(self.seq.ensembles().iter().map(|e| e.max_order()).max().unwrap_or(0));
            if self.history.len() > keep {
                self.history.drain(..self.history.len() - keep);
            }
        }
        self.done = tr.done;
        vec![Reply::State(self.state_msg(Some(action), Some(source), ensemble, tr.rejected, tr.events))]
    }

    /// Builds a `state` message, dropping the frame and then the events if
    /// needed to stay within [`MAX_STATE_BYTES`].
    fn state_msg(
        &mut self,
        action: Option<Action>,
        source: Option<ActionSource>,
        ensemble: Option<usize>,
        rejected: bool,
        events: Vec<String>,
    ) -> StateMsg {
        self.t += 1;
        let mut msg = StateMsg {
            t: self.t,
            tick: self.env.tick(),
            state: self.env.observe(),
            action,
            source,
            ensemble,
            rejected,
            done: self.done,
            demo: self.demo.is_some(),
            events,
            frame: Some(self.env.frame()),
        };
        let size = |m: &StateMsg| encode_reply(None, &Reply::State(m.clone())).len();
        if size(&msg) > MAX_STATE_BYTES {
            msg.frame = None;
        }
        if size(&msg) > MAX_STATE_BYTES {
            msg.events.clear();
        }
        msg
    }
}

/// Drives a fast mixed-mode session through a human control stream and
/// returns the resulting model sequence.
pub fn handle_override(
    session: &mut Session,
    events: impl IntoIterator<Item = OverrideEvent>,
) -> Result<ModelSequence> {
    if session.cfg.mode != Mode::Mixed {
        return Err(Error::Protocol("override handling needs a mixed-mode session".into()));
    }
    if session.cfg.clock != Clock::Fast {
        return Err(Error::Protocol("override handling needs a fast session".into()));
    }
    for ev in events {
        let req = match ev {
            OverrideEvent::DemoStart => Request::DemoStart {},
            OverrideEvent::Action(action) => Request::Override { action },
            OverrideEvent::DemoEnd => Request::DemoEnd {},
        };
        if let Some(Reply::Error { message }) = session.handle(req).into_iter().next() {
            return Err(Error::Protocol(message));
        }
    }
    Ok(session.seq.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::channel;

    fn fast(mode: Mode) -> Session {
        Session::new(
            1,
            SessionConfig {
                mode,
                scheme: SchemeConfig {
                    levels: 3,
                    decay: 0.1,
                    context_decay: 0.9,
                },
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn reset(s: &mut Session, seed: u64) {
        let r = s.handle(Request::Reset {
            seed: Some(seed),
            env: None,
            config: None,
            mode: None,
            clock: None,
        });
        assert_eq!(r[0].kind(), "reset");
        assert_eq!(r[1].kind(), "state");
    }

    fn mv(i: usize) -> Action {
        let a = i as f64 * 0.3;
        Action::new(channel::MOVE, vec![a.cos(), a.sin()])
    }

    fn is_error(r: &[Reply]) -> bool {
        matches!(r.first(), Some(Reply::Error { .. }))
    }

    fn action_of(r: &[Reply]) -> (Action, ActionSource) {
        match &r[0] {
            Reply::State(m) => (m.action.clone().unwrap(), m.source.unwrap()),
            other => panic!("expected state, got {other:?}"),
        }
    }

    #[test]
    fn demo_end_without_start_is_an_error_and_session_survives() {
        let mut s = fast(Mode::Mixed);
        reset(&mut s, 0);
        assert!(is_error(&s.handle(Request::DemoEnd {})));
        assert_eq!(s.handle(Request::State {})[0].kind(), "state");
    }

    #[test]
    fn empty_demo_leaves_sequence_unchanged() {
        let mut s = fast(Mode::Mixed);
        reset(&mut s, 0);
        s.handle(Request::DemoStart {});
        match &s.handle(Request::DemoEnd {})[0] {
            Reply::DemoEnd { steps, ensembles, .. } => assert_eq!((*steps, *ensembles), (0, 0)),
            other => panic!("{other:?}"),
        }
        assert!(s.sequence().is_empty());
    }

    #[test]
    fn recorded_segment_is_replayed_and_visible_only_at_demo_end() {
        let mut s = fast(Mode::Mixed);
        reset(&mut s, 4);
        s.handle(Request::DemoStart {});
        for i in 0..40 {
            let (a, src) = action_of(&s.handle(Request::Override { action: mv(i) }));
            assert_eq!((a, src), (mv(i), ActionSource::Human));
            assert!(s.sequence().is_empty());
        }
        s.handle(Request::DemoEnd {});
        assert_eq!(s.sequence().len(), 1);
        reset(&mut s, 4);
        for i in 0..40 {
            let (a, src) = action_of(&s.handle(Request::Step { action: None }));
            assert_eq!(src, ActionSource::Ensemble);
            assert_eq!(a, mv(i), "step {i}");
        }
    }

    #[test]
    fn mode_rules() {
        let mut agent = fast(Mode::Agent);
        reset(&mut agent, 0);
        assert!(is_error(&agent.handle(Request::DemoStart {})));
        assert!(is_error(&agent.handle(Request::Override { action: mv(0) })));
        let mut mixed = fast(Mode::Mixed);
        reset(&mut mixed, 0);
        assert!(is_error(&mixed.handle(Request::Override { action: mv(0) })));
        mixed.handle(Request::DemoStart {});
        assert!(is_error(&mixed.handle(Request::DemoStart {})));
        assert!(is_error(&mixed.handle(Request::Step { action: None })));
        assert!(is_error(&mixed.handle(Request::Reset {
            seed: None,
            env: None,
            config: None,
            mode: None,
            clock: None
        })));
        let mut human = fast(Mode::HumanOverride);
        reset(&mut human, 0);
        assert_eq!(action_of(&human.handle(Request::Override { action: mv(1) })).1, ActionSource::Human);
        assert!(is_error(&human.handle(Request::Step { action: None })));
    }

    #[test]
    fn rejected_actions_are_flagged_and_not_recorded() {
        let mut s = fast(Mode::Mixed);
        reset(&mut s, 0);
        s.handle(Request::DemoStart {});
        match &s.handle(Request::Override { action: Action::bare(99) })[0] {
            Reply::State(m) => assert!(m.rejected),
            other => panic!("{other:?}"),
        }
        match &s.handle(Request::DemoEnd {})[0] {
            Reply::DemoEnd { steps, .. } => assert_eq!(*steps, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn competence_events_follow_each_window() {
        let mut s = fast(Mode::Agent);
        reset(&mut s, 0);
        let mut events = 0;
        for i in 1..=90 {
            let r = s.handle(Request::Step { action: None });
            if r.len() > 1 {
                assert_eq!(i % 30, 0);
                match &r[1] {
                    Reply::Competence { competence, window, .. } => {
                        assert_eq!(*competence, Some(0.0));
                        assert_eq!(*window, 30);
                    }
                    other => panic!("{other:?}"),
                }
                events += 1;
            }
        }
        assert_eq!(events, 3);
    }

    #[test]
    fn state_messages_fit_the_budget() {
        for env in [EnvKind::Arena, EnvKind::Progression] {
            let mut s = Session::new(
                1,
                SessionConfig {
                    env,
                    ..Default::default()
                },
            )
            .unwrap();
            reset(&mut s, 3);
            for _ in 0..300 {
                for r in s.handle(Request::Step { action: None }) {
                    let line = encode_reply(None, &r);
                    assert!(line.len() <= MAX_STATE_BYTES, "{} bytes", line.len());
                    if let Reply::State(m) = r {
                        assert!(m.frame.is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn save_and_load_through_the_root() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SessionConfig {
            mode: Mode::Mixed,
            root: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let mut s = Session::new(1, cfg.clone()).unwrap();
        reset(&mut s, 0);
        assert!(is_error(&s.handle(Request::Save {
            artifact: ArtifactKind::Ensemble,
            name: "e".into()
        })));
        s.handle(Request::DemoStart {});
        for i in 0..10 {
            s.handle(Request::Override { action: mv(i) });
        }
        s.handle(Request::DemoEnd {});
        let mut paths = Vec::new();
        for kind in [ArtifactKind::Episode, ArtifactKind::Ensemble, ArtifactKind::Scheme] {
            match &s.handle(Request::Save {
                artifact: kind,
                name: "run".into(),
            })[0] {
                Reply::Save { path, .. } => paths.push(path.clone()),
                other => panic!("{other:?}"),
            }
        }
        assert!(is_error(&s.handle(Request::Save {
            artifact: ArtifactKind::Net,
            name: "n".into()
        })));
        let mut other = Session::new(2, cfg).unwrap();
        for (p, n) in paths.iter().zip([1, 2, 2]) {
            match &other.handle(Request::Load { path: p.clone() })[0] {
                Reply::Load { ensembles, .. } => assert_eq!(*ensembles, n),
                r => panic!("{r:?}"),
            }
        }
        assert_eq!(other.sequence().ensembles()[1].as_ref(), s.sequence().ensembles()[0].as_ref());
        assert!(is_error(&other.handle(Request::Load { path: "../x".into() })));
        assert!(is_error(&other.handle(Request::Load { path: "missing".into() })));
    }

    #[test]
    fn live_override_is_applied_on_the_next_tick() {
        let mut s = Session::new(
            1,
            SessionConfig {
                mode: Mode::HumanOverride,
                clock: Clock::Live,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(s.tick().is_empty());
        reset(&mut s, 0);
        assert!(s.ticking());
        assert!(is_error(&s.handle(Request::Step { action: None })));
        assert_eq!(action_of(&s.tick()).1, ActionSource::Idle);
        assert!(matches!(s.handle(Request::Override { action: mv(2) })[0], Reply::Override { queued: true }));
        assert_eq!(action_of(&s.tick()), (mv(2), ActionSource::Human));
        assert_eq!(action_of(&s.tick()).1, ActionSource::Idle);
    }

    #[test]
    fn noise_perturbs_arguments() {
        let mut s = Session::new(
            1,
            SessionConfig {
                mode: Mode::HumanOverride,
                noise: 0.2,
                ..Default::default()
            },
        )
        .unwrap();
        reset(&mut s, 0);
        let (a, _) = action_of(&s.handle(Request::Override { action: mv(0) }));
        assert_ne!(a, mv(0));
        assert!(Session::new(
            1,
            SessionConfig {
                noise: -1.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn lines_with_bad_kinds_get_error_replies_with_their_id() {
        let mut s = fast(Mode::Agent);
        let out = s.handle_line(r#"{"v":1,"id":"q1","kind":"warp"}"#);
        assert_eq!(out.len(), 1);
        assert!(out[0].contains("\"kind\":\"error\"") && out[0].contains("\"id\":\"q1\""), "{}", out[0]);
        let out = s.handle_line(r#"{"v":1,"id":2,"kind":"error","message":"boom"}"#);
        assert!(out[0].contains("\"kind\":\"error\""));
        let out = s.handle_line(r#"{"v":1,"id":3,"kind":"state"}"#);
        assert!(out[0].contains("\"kind\":\"state\"") && out[0].contains("\"id\":3"));
    }

    #[test]
    fn identical_seeds_give_identical_transcripts() {
        let run = || {
            let mut s = fast(Mode::Mixed);
            let mut lines = Vec::new();
            lines.extend(s.handle_line(r#"{"v":1,"kind":"reset","seed":9}"#));
            lines.extend(s.handle_line(r#"{"v":1,"kind":"demo-start"}"#));
            for i in 0..5 {
                let a = mv(i);
                lines.extend(s.handle_line(&format!(
                    r#"{{"v":1,"kind":"override","action":{{"channel":1,"args":[{},{}]}}}}"#,
                    a.args[0], a.args[1]
                )));
            }
            lines.extend(s.handle_line(r#"{"v":1,"kind":"demo-end"}"#));
            for _ in 0..50 {
                lines.extend(s.handle_line(r#"{"v":1,"kind":"step"}"#));
            }
            lines
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn handle_override_requires_mixed_fast_sessions() {
        let mut agent = fast(Mode::Agent);
        assert!(handle_override(&mut agent, [OverrideEvent::DemoStart]).is_err());
        let mut s = fast(Mode::Mixed);
        reset(&mut s, 0);
        assert!(handle_override(&mut s, [OverrideEvent::DemoEnd]).is_err());
        let seq = handle_override(
            &mut s,
            [OverrideEvent::DemoStart, OverrideEvent::Action(mv(0)), OverrideEvent::DemoEnd],
        )
        .unwrap();
        assert_eq!(seq.len(), 1);
    }
}
