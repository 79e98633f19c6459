//! Deterministic top-down 2D arena.
//!
//! The agent is a point moving among axis-aligned obstacles inside a
//! rectangle. Adversaries patrol and give chase once the agent enters their
//! sight cone. Everything, including respawns, is driven by the configured
//! seed, so a configuration plus an action sequence fixes the trajectory.

mod policies;

pub use policies::{fallback_action, record_episode, scripted_policy, ArenaFallback, Behavior, CIRCLE_RADIUS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, EpisodeMeta, State, DEFAULT_PERIOD_MS};
use crate::quantize::{build_scheme, DimSpec, QuantizationScheme};

/// Action channel ids.
pub mod channel {
    pub const NOOP: u32 = 0;
    /// `move(dx, dy)`: direction in world axes, clamped to unit length.
    pub const MOVE: u32 = 1;
    /// `turn(dθ)`: radians.
    pub const TURN: u32 = 2;
    pub const FIRE: u32 = 3;
    pub const INTERACT: u32 = 4;
    pub const SPRINT: u32 = 5;

    pub const COUNT: usize = 6;
    pub const ARG_ARITY: [usize; COUNT] = [0, 2, 1, 0, 0, 0];
    pub const NAMES: [&str; COUNT] = ["noop", "move", "turn", "fire", "interact", "sprint"];
}

/// Layout of the feature vector produced by [`Arena::features`].
pub mod feature {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const HEADING_COS: usize = 2;
    pub const HEADING_SIN: usize = 3;
    pub const ADV_DX: usize = 4;
    pub const ADV_DY: usize = 5;
    pub const POI_DX: usize = 6;
    pub const POI_DY: usize = 7;
    pub const CONTACT_X: usize = 8;
    pub const CONTACT_Y: usize = 9;
    pub const CONTINUOUS: usize = 10;

    pub const BLOCKED: usize = 0;
    pub const IN_SIGHT: usize = 1;
    pub const POSSESSION: usize = 2;
    pub const SPRINTING: usize = 3;
    pub const CATEGORICAL: usize = 4;
}

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    /// Strict interior test; the boundary is free space.
    pub fn contains_interior(&self, p: Vec2) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaConfig {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Aabb>,
    pub points_of_interest: Vec<Vec2>,
    pub adversaries: usize,
    /// Units per second.
    pub adversary_speed: f64,
    pub agent_speed: f64,
    pub sprint_factor: f64,
    pub tick_ms: u32,
    pub seed: u64,
    pub spawn: Vec2,
    /// Agent spawn is drawn uniformly within this radius of `spawn`.
    pub spawn_jitter: f64,
    pub sight_range: f64,
    /// Half-angle of the sight cone, radians.
    pub sight_half_angle: f64,
    pub interact_radius: f64,
    pub catch_radius: f64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            width: 20.0,
            height: 20.0,
            obstacles: vec![
                Aabb::new([1.5, 1.5], [3.5, 3.0]),
                Aabb::new([16.0, 2.0], [18.0, 4.5]),
                Aabb::new([2.0, 16.5], [4.5, 18.0]),
                Aabb::new([15.5, 15.5], [17.0, 18.5]),
            ],
            points_of_interest: vec![[5.0, 5.0], [15.0, 6.0], [10.0, 17.0], [4.0, 12.0], [17.5, 11.0]],
            adversaries: 2,
            adversary_speed: 1.5,
            agent_speed: 4.0,
            sprint_factor: 1.5,
            tick_ms: DEFAULT_PERIOD_MS,
            seed: 0,
            spawn: [10.0, 4.0],
            spawn_jitter: 0.0,
            sight_range: 7.0,
            sight_half_angle: std::f64::consts::FRAC_PI_6,
            interact_radius: 1.0,
            catch_radius: 0.5,
        }
    }
}

impl ArenaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::config("arena bounds must be positive"));
        }
        if self.tick_ms == 0 {
            return Err(Error::config("tick must be positive"));
        }
        let inside = |p: Vec2| p[0] >= 0.0 && p[0] <= self.width && p[1] >= 0.0 && p[1] <= self.height;
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.min[0] < o.max[0] && o.min[1] < o.max[1]) || !inside(o.min) || !inside(o.max) {
                return Err(Error::config(format!("obstacle {i} is degenerate or outside the bounds")));
            }
        }
        for (i, p) in self.points_of_interest.iter().enumerate() {
            if !inside(*p) {
                return Err(Error::config(format!("point of interest {i} is outside the bounds")));
            }
        }
        if !inside(self.spawn) || self.obstacles.iter().any(|o| o.contains_interior(self.spawn)) {
            return Err(Error::config("spawn must be free space inside the bounds"));
        }
        if self.agent_speed < 0.0 || self.adversary_speed < 0.0 || self.spawn_jitter < 0.0 {
            return Err(Error::config("speeds and jitter must be non-negative"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ArenaConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            offset: e.span().map(|s| s.start).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("arena config is always representable")
    }

    pub fn dt(&self) -> f64 {
        self.tick_ms as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    pub pos: Vec2,
    pub heading: f64,
    pub chasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaState {
    pub tick: u64,
    pub pos: Vec2,
    pub vel: Vec2,
    pub heading: f64,
    pub sprint: bool,
    pub adversaries: Vec<Adversary>,
    /// Set iff the last move was clamped by a collision.
    pub blocked: bool,
    /// Sum of outward normals of the surfaces hit by the last move.
    pub contact: Vec2,
    /// Some adversary lies in the agent's sight cone.
    pub in_sight: bool,
    pub inventory: u32,
    pub collected: Vec<bool>,
    pub visited: Vec<bool>,
    pub respawns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "event", content = "index")]
pub enum Event {
    PickedUp(usize),
    Hit(usize),
    Blocked,
    Tagged(usize),
    Visited(usize),
}

/// A validated arena; `reset` and `step` are pure functions of their inputs.
#[derive(Debug, Clone)]
pub struct Arena {
    config: ArenaConfig,
}

impl Arena {
    pub fn new(config: ArenaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn meta(&self) -> EpisodeMeta {
        EpisodeMeta {
            env_id: "arena".into(),
            seed: self.config.seed,
            period_ms: self.config.tick_ms,
            continuous_dims: feature::CONTINUOUS,
            categorical_dims: feature::CATEGORICAL,
            arg_arity: channel::ARG_ARITY.to_vec(),
        }
    }

    pub fn reset(&self) -> ArenaState {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut pos = c.spawn;
        if c.spawn_jitter > 0.0 {
            for _ in 0..64 {
                let r = c.spawn_jitter * rng.random::<f64>().sqrt();
                let a = rng.random::<f64>() * std::f64::consts::TAU;
                let p = [c.spawn[0] + r * a.cos(), c.spawn[1] + r * a.sin()];
                if self.is_free(p) {
                    pos = p;
                    break;
                }
            }
        }
        let adversaries = (0..c.adversaries)
            .map(|_| Adversary {
                pos: self.free_point(&mut rng, pos),
                heading: rng.random::<f64>() * std::f64::consts::TAU,
                chasing: false,
            })
            .collect();
        let mut s = ArenaState {
            tick: 0,
            pos,
            vel: [0.0, 0.0],
            heading: 0.0,
            sprint: false,
            adversaries,
            blocked: false,
            contact: [0.0, 0.0],
            in_sight: false,
            inventory: 0,
            collected: vec![false; c.points_of_interest.len()],
            visited: vec![false; c.points_of_interest.len()],
            respawns: 0,
        };
        s.in_sight = self.target_in_cone(&s).is_some();
        s
    }

    pub fn is_free(&self, p: Vec2) -> bool {
        p[0] >= 0.0
            && p[0] <= self.config.width
            && p[1] >= 0.0
            && p[1] <= self.config.height
            && !self.config.obstacles.iter().any(|o| o.contains_interior(p))
    }

    /// Uniform free point at least 5 units from `away` (best effort).
    fn free_point(&self, rng: &mut ChaCha8Rng, away: Vec2) -> Vec2 {
        let c = &self.config;
        let mut last = [c.width * 0.5, c.height * 0.5];
        for _ in 0..256 {
            let p = [rng.random::<f64>() * c.width, rng.random::<f64>() * c.height];
            last = p;
            if self.is_free(p) && dist(p, away) >= 5.0 {
                return p;
            }
        }
        last
    }

    pub fn step(&self, state: &ArenaState, action: &Action) -> Result<(ArenaState, Vec<Event>)> {
        let c = &self.config;
        let arity = *channel::ARG_ARITY
            .get(action.channel as usize)
            .ok_or(Error::UnknownChannel(action.channel))?;
        if action.args.len() != arity {
            return Err(Error::Arity {
                field: "args",
                expected: arity,
                got: action.args.len(),
            });
        }
        let dt = c.dt();
        let mut s = state.clone();
        let mut events = Vec::new();
        s.vel = [0.0, 0.0];
        match action.channel {
            channel::MOVE => {
                let mut d = [action.args[0], action.args[1]];
                let n = norm(d);
                if n > 1.0 {
                    d = [d[0] / n, d[1] / n];
                }
                if n > 1e-12 {
                    s.heading = d[1].atan2(d[0]);
                }
                let speed = c.agent_speed * if s.sprint { c.sprint_factor } else { 1.0 };
                s.vel = [d[0] * speed, d[1] * speed];
            }
            channel::TURN => s.heading = wrap_angle(s.heading + action.args[0]),
            channel::FIRE => {
                if let Some(i) = self.target_in_cone(&s) {
                    events.push(Event::Hit(i));
                    self.respawn(&mut s, i);
                }
            }
            channel::INTERACT => {
                let near = c
                    .points_of_interest
                    .iter()
                    .enumerate()
                    .filter(|(i, p)| !s.collected[*i] && dist(**p, s.pos) <= c.interact_radius)
                    .min_by(|a, b| dist(*a.1, s.pos).total_cmp(&dist(*b.1, s.pos)));
                if let Some((i, _)) = near {
                    s.collected[i] = true;
                    s.inventory += 1;
                    events.push(Event::PickedUp(i));
                }
            }
            channel::SPRINT => s.sprint = !s.sprint,
            _ => {}
        }

        let (pos, contact) = self.sweep(s.pos, [s.vel[0] * dt, s.vel[1] * dt]);
        s.pos = pos;
        s.contact = contact;
        s.blocked = contact != [0.0, 0.0];
        if s.blocked {
            events.push(Event::Blocked);
        }

        for i in 0..s.adversaries.len() {
            self.advance_adversary(&mut s, i, dt);
            if dist(s.adversaries[i].pos, s.pos) < c.catch_radius {
                events.push(Event::Tagged(i));
                self.respawn(&mut s, i);
            }
        }

        for (i, p) in c.points_of_interest.iter().enumerate() {
            if !s.visited[i] && dist(*p, s.pos) <= c.interact_radius {
                s.visited[i] = true;
                events.push(Event::Visited(i));
            }
        }
        s.in_sight = self.target_in_cone(&s).is_some();
        s.tick += 1;
        Ok((s, events))
    }

    /// Moves `from` by `delta`, x then y, clamping against bounds and
    /// obstacle faces. Returns the new position and the summed contact normal.
    fn sweep(&self, from: Vec2, delta: Vec2) -> (Vec2, Vec2) {
        let mut p = from;
        let mut normal = [0.0, 0.0];
        for axis in 0..2 {
            let d = delta[axis];
            if d == 0.0 {
                continue;
            }
            let other = 1 - axis;
            let limit = if axis == 0 { self.config.width } else { self.config.height };
            let mut next = p[axis] + d;
            let mut hit = 0.0;
            for o in &self.config.obstacles {
                if !(p[other] > o.min[other] && p[other] < o.max[other]) {
                    continue;
                }
                if d > 0.0 && p[axis] <= o.min[axis] && next > o.min[axis] {
                    next = o.min[axis];
                    hit = -1.0;
                } else if d < 0.0 && p[axis] >= o.max[axis] && next < o.max[axis] {
                    next = o.max[axis];
                    hit = 1.0;
                }
            }
            if next < 0.0 {
                next = 0.0;
                hit = 1.0;
            } else if next > limit {
                next = limit;
                hit = -1.0;
            }
            p[axis] = next;
            normal[axis] += hit;
        }
        (p, normal)
    }

    fn advance_adversary(&self, s: &mut ArenaState, i: usize, dt: f64) {
        let c = &self.config;
        let agent = s.pos;
        let adv = &mut s.adversaries[i];
        let to_agent = sub(agent, adv.pos);
        let d = norm(to_agent);
        adv.chasing = d <= c.sight_range && angle_between(adv.heading, to_agent) <= c.sight_half_angle * 1.5 || adv.chasing && d <= c.sight_range * 1.5;
        let speed = if adv.chasing {
            adv.heading = to_agent[1].atan2(to_agent[0]);
            c.adversary_speed
        } else {
            adv.heading = wrap_angle(adv.heading + 0.5 * dt);
            0.5 * c.adversary_speed
        };
        let step = [adv.heading.cos() * speed * dt, adv.heading.sin() * speed * dt];
        let (pos, contact) = self.sweep(adv.pos, step);
        let adv = &mut s.adversaries[i];
        adv.pos = pos;
        if contact != [0.0, 0.0] && !adv.chasing {
            adv.heading = wrap_angle(adv.heading + std::f64::consts::FRAC_PI_2);
        }
    }

    fn respawn(&self, s: &mut ArenaState, i: usize) {
        s.respawns += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ s.respawns.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let pos = self.free_point(&mut rng, s.pos);
        s.adversaries[i] = Adversary {
            pos,
            heading: rng.random::<f64>() * std::f64::consts::TAU,
            chasing: false,
        };
    }

    /// Nearest adversary inside the agent's sight cone.
    pub fn target_in_cone(&self, s: &ArenaState) -> Option<usize> {
        let c = &self.config;
        s.adversaries
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                let v = sub(a.pos, s.pos);
                norm(v) <= c.sight_range && angle_between(s.heading, v) <= c.sight_half_angle
            })
            .min_by(|a, b| dist(a.1.pos, s.pos).total_cmp(&dist(b.1.pos, s.pos)))
            .map(|(i, _)| i)
    }

    pub fn nearest_adversary(&self, s: &ArenaState) -> Option<usize> {
        s.adversaries
            .iter()
            .enumerate()
            .min_by(|a, b| dist(a.1.pos, s.pos).total_cmp(&dist(b.1.pos, s.pos)))
            .map(|(i, _)| i)
    }

    pub fn nearest_unvisited(&self, s: &ArenaState) -> Option<usize> {
        self.config
            .points_of_interest
            .iter()
            .enumerate()
            .filter(|(i, _)| !s.visited[*i])
            .min_by(|a, b| dist(*a.1, s.pos).total_cmp(&dist(*b.1, s.pos)))
            .map(|(i, _)| i)
    }

    /// Engineered observation; layout in [`feature`].
    pub fn features(&self, s: &ArenaState) -> State {
        let rel = |p: Option<Vec2>| match p {
            Some(p) => sub(p, s.pos),
            None => [0.0, 0.0],
        };
        let adv = rel(self.nearest_adversary(s).map(|i| s.adversaries[i].pos));
        let poi = rel(self.nearest_unvisited(s).map(|i| self.config.points_of_interest[i]));
        let mut cont = vec![0.0; feature::CONTINUOUS];
        cont[feature::X] = s.pos[0];
        cont[feature::Y] = s.pos[1];
        cont[feature::HEADING_COS] = s.heading.cos();
        cont[feature::HEADING_SIN] = s.heading.sin();
        cont[feature::ADV_DX] = adv[0];
        cont[feature::ADV_DY] = adv[1];
        cont[feature::POI_DX] = poi[0];
        cont[feature::POI_DY] = poi[1];
        cont[feature::CONTACT_X] = s.contact[0];
        cont[feature::CONTACT_Y] = s.contact[1];
        let mut cat = vec![0; feature::CATEGORICAL];
        cat[feature::BLOCKED] = s.blocked as i64;
        cat[feature::IN_SIGHT] = s.in_sight as i64;
        cat[feature::POSSESSION] = (s.inventory > 0) as i64;
        cat[feature::SPRINTING] = s.sprint as i64;
        State::new(cont, cat)
    }

    /// Default multi-resolution scheme for arena features and actions; see
    /// [`Arena::scheme`].
    pub fn default_scheme(&self, levels_k: usize, decay: f64) -> Result<QuantizationScheme> {
        self.scheme(levels_k, decay, decay)
    }

    /// Level 0 spans each dimension with a single bin, so the coarsest
    /// models match any state with a previously seen flag combination.
    /// Agent pose, contact and action arguments refine by `decay`; the
    /// adversary and POI offsets refine by `context_decay`.
    pub fn scheme(&self, levels_k: usize, decay: f64, context_decay: f64) -> Result<QuantizationScheme> {
        let (w, h) = (self.config.width, self.config.height);
        let span = w.max(h);
        let whole = |name: &str, lo: f64, hi: f64| DimSpec::new(name, lo, hi, hi - lo);
        let context = |name: &str| whole(name, -span, span).with_decay(context_decay);
        let turn = std::f64::consts::PI;
        build_scheme(
            vec![
                whole("x", 0.0, w),
                whole("y", 0.0, h),
                whole("heading_cos", -1.0, 1.0),
                whole("heading_sin", -1.0, 1.0),
                context("adv_dx"),
                context("adv_dy"),
                context("poi_dx"),
                context("poi_dy"),
                whole("contact_x", -2.0, 2.0),
                whole("contact_y", -2.0, 2.0),
            ],
            vec![
                vec![],
                vec![whole("dx", -1.0, 1.0), whole("dy", -1.0, 1.0)],
                vec![whole("dtheta", -turn, turn)],
                vec![],
                vec![],
                vec![],
            ],
            levels_k,
            decay,
        )
    }
}

pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub(crate) fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = a.rem_euclid(t);
    if r > std::f64::consts::PI {
        r - t
    } else {
        r
    }
}

/// Unsigned angle between a heading and a direction vector.
pub(crate) fn angle_between(heading: f64, v: Vec2) -> f64 {
    if norm(v) == 0.0 {
        return 0.0;
    }
    wrap_angle(v[1].atan2(v[0]) - heading).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_arena() -> Arena {
        Arena::new(ArenaConfig {
            adversaries: 0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn same_seed_identical_reset() {
        let a = Arena::new(ArenaConfig {
            seed: 17,
            spawn_jitter: 2.0,
            ..Default::default()
        })
        .unwrap();
        let b = Arena::new(a.config().clone()).unwrap();
        assert_eq!(a.reset(), b.reset());
        let other = Arena::new(ArenaConfig {
            seed: 18,
            spawn_jitter: 2.0,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.reset(), other.reset());
    }

    #[test]
    fn zero_adversaries() {
        assert!(open_arena().reset().adversaries.is_empty());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ArenaConfig::default();
        c.obstacles.push(Aabb::new([18.0, 18.0], [25.0, 19.0]));
        assert!(Arena::new(c).is_err());
        let c = ArenaConfig {
            tick_ms: 0,
            ..Default::default()
        };
        assert!(Arena::new(c).is_err());
    }

    #[test]
    fn move_in_open_space_advances_by_velocity_times_tick() {
        let a = open_arena();
        let s = a.reset();
        let (n, ev) = a.step(&s, &Action::new(channel::MOVE, vec![1.0, 0.0])).unwrap();
        let expect = s.pos[0] + a.config().agent_speed * a.config().dt();
        assert!((n.pos[0] - expect).abs() < 1e-12);
        assert_eq!(n.pos[1], s.pos[1]);
        assert!(!n.blocked);
        assert!(ev.is_empty());
    }

    #[test]
    fn move_into_obstacle_is_clamped_and_blocked() {
        let a = Arena::new(ArenaConfig {
            adversaries: 0,
            obstacles: vec![Aabb::new([10.05, 0.0], [12.0, 8.0])],
            ..Default::default()
        })
        .unwrap();
        let s = a.reset();
        let (n, ev) = a.step(&s, &Action::new(channel::MOVE, vec![1.0, 0.0])).unwrap();
        assert_eq!(n.pos[0], 10.05);
        assert!(n.blocked);
        assert_eq!(n.contact, [-1.0, 0.0]);
        assert!(ev.contains(&Event::Blocked));
    }

    #[test]
    fn interact_next_to_point_picks_it_up() {
        let a = Arena::new(ArenaConfig {
            adversaries: 0,
            spawn: [5.5, 5.0],
            ..Default::default()
        })
        .unwrap();
        let s = a.reset();
        let (n, ev) = a.step(&s, &Action::bare(channel::INTERACT)).unwrap();
        assert_eq!(n.inventory, 1);
        assert!(ev.contains(&Event::PickedUp(0)));
        let (n2, ev2) = a.step(&n, &Action::bare(channel::INTERACT)).unwrap();
        assert_eq!(n2.inventory, 1);
        assert!(!ev2.iter().any(|e| matches!(e, Event::PickedUp(_))));
    }

    #[test]
    fn unknown_channel_rejected() {
        let a = open_arena();
        assert!(matches!(a.step(&a.reset(), &Action::bare(9)), Err(Error::UnknownChannel(9))));
        assert!(matches!(a.step(&a.reset(), &Action::bare(channel::MOVE)), Err(Error::Arity { .. })));
    }

    #[test]
    fn features_fit_observation_budget() {
        let a = Arena::new(ArenaConfig::default()).unwrap();
        let f = a.features(&a.reset());
        assert!(f.continuous.len() <= 32 && f.categorical.len() <= 8);
        a.meta().check_state(&f).unwrap();
    }

    #[test]
    fn config_toml_round_trip() {
        let c = ArenaConfig {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(ArenaConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
