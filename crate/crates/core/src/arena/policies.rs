use std::str::FromStr;

use rand::{Rng, SeedableRng};

use super::{channel, dist, feature, norm, sub, Arena, ArenaState, Vec2};
use crate::error::{Error, Result};
use crate::markov::Fallback;
use crate::model::{Action, Episode, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Behavior {
    Circler,
    Zigzag,
    Aggressive,
    Sniper,
    Exploratory,
    Sneaky,
}

impl Behavior {
    pub const ALL: [Behavior; 6] = [
        Behavior::Circler,
        Behavior::Zigzag,
        Behavior::Aggressive,
        Behavior::Sniper,
        Behavior::Exploratory,
        Behavior::Sneaky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Circler => "circler",
            Behavior::Zigzag => "zigzag",
            Behavior::Aggressive => "aggressive",
            Behavior::Sniper => "sniper",
            Behavior::Exploratory => "exploratory",
            Behavior::Sneaky => "sneaky",
        }
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Behavior::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

/// Radius of the circler's orbit around the arena centre.
pub const CIRCLE_RADIUS: f64 = 6.0;
const CIRCLE_NOISE: f64 = 0.05;
const ZIGZAG_MARGIN: f64 = 1.5;
const FLEE_RADIUS: f64 = 4.0;

fn toward(d: Vec2) -> Action {
    let n = norm(d);
    if n < 1e-9 {
        return Action::bare(channel::NOOP);
    }
    Action::new(channel::MOVE, vec![d[0] / n, d[1] / n])
}

/// Adds a component along the blocking surface so goal seeking slides past
/// obstacles instead of pressing into them.
fn slide(s: &ArenaState, d: Vec2) -> Vec2 {
    if !s.blocked {
        return d;
    }
    let n = s.contact;
    let t = [-n[1], n[0]];
    let sign = if d[0] * t[0] + d[1] * t[1] >= 0.0 { 1.0 } else { -1.0 };
    [d[0] + n[0] + 2.0 * sign * t[0], d[1] + n[1] + 2.0 * sign * t[1]]
}

/// Action chosen by the named scripted behavior.
///
/// Noise comes from `rng` only, so a fixed seed fixes the action.
pub fn scripted_policy<R: Rng + ?Sized>(behavior: Behavior, arena: &Arena, s: &ArenaState, rng: &mut R) -> Action {
    let c = arena.config();
    match behavior {
        Behavior::Circler => {
            let centre = [c.width * 0.5, c.height * 0.5];
            let r = sub(s.pos, centre);
            let rn = norm(r).max(1e-9);
            let radial = [r[0] / rn, r[1] / rn];
            let tangent = [-radial[1], radial[0]];
            let k = ((CIRCLE_RADIUS - rn) / 2.0).clamp(-1.0, 1.0);
            let noise = rng.random_range(-CIRCLE_NOISE..=CIRCLE_NOISE);
            toward([
                tangent[0] + k * radial[0] + noise,
                tangent[1] + k * radial[1] - noise,
            ])
        }
        Behavior::Zigzag => {
            let bounce = |p: f64, extent: f64, h: f64| {
                if p > extent - ZIGZAG_MARGIN {
                    -1.0
                } else if p < ZIGZAG_MARGIN || h >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            };
            let sx = bounce(s.pos[0], c.width, s.heading.cos());
            let sy = bounce(s.pos[1], c.height, s.heading.sin());
            toward(slide(s, [sx, sy]))
        }
        Behavior::Aggressive => {
            if arena.target_in_cone(s).is_some() {
                return Action::bare(channel::FIRE);
            }
            match arena.nearest_adversary(s) {
                Some(i) => toward(slide(s, sub(s.adversaries[i].pos, s.pos))),
                None => Action::bare(channel::NOOP),
            }
        }
        Behavior::Sniper => {
            if arena.target_in_cone(s).is_some() {
                Action::bare(channel::FIRE)
            } else {
                Action::bare(channel::NOOP)
            }
        }
        Behavior::Exploratory => {
            if let Some(a) = interact_if_adjacent(arena, s) {
                return a;
            }
            let Some(goal) = arena.nearest_unvisited(s).map(|i| c.points_of_interest[i]) else {
                return Action::bare(channel::NOOP);
            };
            let g = sub(goal, s.pos);
            let gn = norm(g).max(1e-9);
            let mut d = [g[0] / gn, g[1] / gn];
            for a in &s.adversaries {
                let away = sub(s.pos, a.pos);
                let an = norm(away);
                if an < FLEE_RADIUS && an > 1e-9 {
                    let w = (FLEE_RADIUS - an) / FLEE_RADIUS;
                    d[0] += 1.5 * w * away[0] / an;
                    d[1] += 1.5 * w * away[1] / an;
                }
            }
            toward(slide(s, d))
        }
        Behavior::Sneaky => {
            if let Some(a) = interact_if_adjacent(arena, s) {
                return a;
            }
            let Some(goal) = arena.nearest_unvisited(s).map(|i| c.points_of_interest[i]) else {
                return Action::bare(channel::NOOP);
            };
            let mut d = sub(goal, s.pos);
            let dn = norm(d).max(1e-9);
            d = [d[0] / dn, d[1] / dn];
            for a in &s.adversaries {
                let rel = sub(s.pos, a.pos);
                let rn = norm(rel);
                if rn > c.sight_range * 1.2 || rn < 1e-9 {
                    continue;
                }
                // Step sideways out of the cone, away from its axis.
                let axis = [a.heading.cos(), a.heading.sin()];
                let cross = axis[0] * rel[1] - axis[1] * rel[0];
                let side = if cross >= 0.0 { [-axis[1], axis[0]] } else { [axis[1], -axis[0]] };
                let ahead = axis[0] * rel[0] + axis[1] * rel[1] > 0.0;
                if ahead {
                    d = [d[0] * 0.3 + side[0], d[1] * 0.3 + side[1]];
                }
            }
            toward(slide(s, d))
        }
    }
}

/// Runs `behavior` from reset for `ticks` steps and records the episode.
pub fn record_episode(arena: &Arena, behavior: Behavior, ticks: usize, seed: u64) -> Result<Episode> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut ep = Episode::new(arena.meta());
    let mut s = arena.reset();
    for _ in 0..ticks {
        let a = scripted_policy(behavior, arena, &s, &mut rng);
        ep.push(arena.features(&s), a.clone())?;
        s = arena.step(&s, &a)?.0;
    }
    Ok(ep)
}

fn interact_if_adjacent(arena: &Arena, s: &ArenaState) -> Option<Action> {
    let c = arena.config();
    c.points_of_interest
        .iter()
        .enumerate()
        .any(|(i, p)| !s.collected[i] && dist(*p, s.pos) <= c.interact_radius)
        .then(|| Action::bare(channel::INTERACT))
}

/// Obstacle-avoidance default: when blocked, move along the contact normal;
/// otherwise no-op. Moving also turns the agent to face the new direction.
pub fn fallback_action(s: &ArenaState) -> Action {
    from_contact(s.blocked, s.contact)
}

fn from_contact(blocked: bool, contact: Vec2) -> Action {
    if !blocked || contact == [0.0, 0.0] {
        return Action::bare(channel::NOOP);
    }
    toward(contact)
}

/// [`fallback_action`] over the feature vector, for use in a model sequence.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArenaFallback;

impl Fallback for ArenaFallback {
    fn name(&self) -> &str {
        "arena-unblock"
    }

    fn action(&self, state: &State) -> Action {
        let blocked = state.categorical.get(feature::BLOCKED).copied().unwrap_or(0) != 0;
        let contact = [
            state.continuous.get(feature::CONTACT_X).copied().unwrap_or(0.0),
            state.continuous.get(feature::CONTACT_Y).copied().unwrap_or(0.0),
        ];
        from_contact(blocked, contact)
    }
}
