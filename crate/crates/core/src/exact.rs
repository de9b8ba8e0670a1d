//! Event-driven simulation of the original dynamics, where elastic particles
//! keep moving after they are struck and can be struck again.
//!
//! Between events the tracer moves with constant acceleration `F / M` and
//! every moving neutral moves ballistically. The next event is the earliest
//! of the first contact with the next standing particle and the catch-up
//! with any live mover. Movers faster than the tracer are parked in a
//! threshold heap and only rejoin the scan once the tracer could reach them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::model::{
    catch_up_time, flight_time, resolve_elastic, resolve_sticky, torricelli_velocity, ModelParams,
    TracerState,
};
use crate::modified::{collision_factor_sq, simulate_modified, ModifiedTrajectory};
use crate::numerics::{fmt17, CompensatedSum};

/// Absolute slack for ordering and past-event checks.
pub const CONSISTENCY_TOL: f64 = 1e-9;
/// Relative window inside which two candidate events count as simultaneous.
pub const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MoverStatus {
    Live,
    Pruned { threshold: f64 },
}

/// An elastic particle set in motion by the tracer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingNeutral {
    /// 1-based index of the particle in the environment.
    pub id: usize,
    pub position_at: f64,
    pub velocity: f64,
    pub updated_at: f64,
    pub status: MoverStatus,
}

impl MovingNeutral {
    pub fn position(&self, time: f64) -> f64 {
        self.position_at + self.velocity * (time - self.updated_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PrunedEntry {
    threshold: f64,
    slot: usize,
}

impl Eq for PrunedEntry {}

impl Ord for PrunedEntry {
    // Reversed: BinaryHeap pops the smallest threshold first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .threshold
            .total_cmp(&self.threshold)
            .then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for PrunedEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All movers, split into the live scan list and the pruned heap.
#[derive(Debug, Clone, Default)]
pub struct MoverSet {
    movers: Vec<MovingNeutral>,
    live: Vec<usize>,
    pruned: BinaryHeap<PrunedEntry>,
}

impl MoverSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mover: MovingNeutral) -> usize {
        let slot = self.movers.len();
        self.movers.push(MovingNeutral {
            status: MoverStatus::Live,
            ..mover
        });
        self.live.push(slot);
        slot
    }

    pub fn len(&self) -> usize {
        self.movers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.movers.is_empty()
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn get(&self, slot: usize) -> &MovingNeutral {
        &self.movers[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut MovingNeutral {
        &mut self.movers[slot]
    }

    /// `(slot, mover)` pairs currently in the scan list.
    pub fn live(&self) -> impl Iterator<Item = (usize, &MovingNeutral)> + '_ {
        self.live.iter().map(move |&s| (s, &self.movers[s]))
    }

    pub fn all(&self) -> &[MovingNeutral] {
        &self.movers
    }

    /// Park every live mover strictly faster than the tracer.
    pub fn prune(&mut self, tracer_velocity: f64) {
        let movers = &mut self.movers;
        let pruned = &mut self.pruned;
        self.live.retain(|&slot| {
            let m = &mut movers[slot];
            if m.velocity > tracer_velocity {
                m.status = MoverStatus::Pruned {
                    threshold: m.velocity,
                };
                pruned.push(PrunedEntry {
                    threshold: m.velocity,
                    slot,
                });
                false
            } else {
                true
            }
        });
    }

    /// Return every parked mover whose threshold the tracer velocity has
    /// reached. Positions are kept as ballistic anchors, so no update is needed.
    pub fn reinstate(&mut self, tracer_velocity: f64) -> usize {
        let mut count = 0;
        while let Some(top) = self.pruned.peek() {
            if top.threshold > tracer_velocity {
                break;
            }
            let entry = self.pruned.pop().expect("peeked");
            self.movers[entry.slot].status = MoverStatus::Live;
            self.live.push(entry.slot);
            count += 1;
        }
        count
    }
}

/// Reinstate movers the tracer has caught up with in velocity, then park the
/// ones it cannot currently reach.
pub fn prune_or_reinstate(state: &TracerState, movers: &mut MoverSet) {
    movers.reinstate(state.velocity);
    movers.prune(state.velocity);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// First contact with standing particle `index` (1-based).
    Standing { index: usize },
    /// Recollision with the mover in `slot`.
    Mover { slot: usize, id: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextEvent {
    /// Time until the event, measured from the state's clock.
    pub delay: f64,
    pub target: Target,
    /// Distance from the tracer to the target at the current time.
    pub gap: f64,
}

fn tie_rank(ev: &NextEvent) -> (f64, u8, usize) {
    match ev.target {
        Target::Standing { index } => (ev.gap, 0, index),
        Target::Mover { id, .. } => (ev.gap, 1, id),
    }
}

/// Earliest upcoming event among the next standing particle and the given
/// movers. Near-simultaneous candidates are ordered by distance, then
/// standing before moving, then particle id.
pub fn next_event<'a>(
    state: &TracerState,
    force: f64,
    next_standing: Option<(usize, f64)>,
    movers: impl IntoIterator<Item = (usize, &'a MovingNeutral)>,
) -> Option<NextEvent> {
    let mut candidates: Vec<NextEvent> = Vec::new();
    if let Some((index, pos)) = next_standing {
        let gap = pos - state.position;
        let delay = if force > 0.0 {
            Some(flight_time(state.velocity, force, state.mass, gap.max(0.0)))
        } else if state.velocity > 0.0 {
            Some(gap.max(0.0) / state.velocity)
        } else {
            None
        };
        if let Some(delay) = delay {
            candidates.push(NextEvent {
                delay,
                target: Target::Standing { index },
                gap,
            });
        }
    }
    for (slot, m) in movers {
        if m.status != MoverStatus::Live {
            continue;
        }
        let pos = m.position(state.time);
        if let Some(delay) = catch_up_time(state, force, pos, m.velocity) {
            candidates.push(NextEvent {
                delay,
                target: Target::Mover { slot, id: m.id },
                gap: pos - state.position,
            });
        }
    }
    let earliest = candidates
        .iter()
        .map(|c| c.delay)
        .fold(f64::INFINITY, f64::min);
    if !earliest.is_finite() {
        return None;
    }
    let window = TIE_REL * (state.time + earliest).max(f64::MIN_POSITIVE);
    candidates
        .into_iter()
        .filter(|c| c.delay - earliest <= window)
        .min_by(|a, b| {
            let (ga, ka, ia) = tie_rank(a);
            let (gb, kb, ib) = tie_rank(b);
            ga.total_cmp(&gb).then(ka.cmp(&kb)).then(ia.cmp(&ib))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FirstSticky,
    FirstElastic,
    Recollision,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::FirstSticky => "first_sticky",
            EventKind::FirstElastic => "first_elastic",
            EventKind::Recollision => "recollision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub seq: usize,
    pub time: f64,
    pub kind: EventKind,
    pub particle_id: usize,
    pub v_before: f64,
    pub v_after: f64,
    pub v_neutral_before: f64,
    /// `None` for an absorbed sticky particle.
    pub v_neutral_after: Option<f64>,
    pub mass_after: f64,
    pub position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecollisionEvent {
    pub time: f64,
    pub neutral_id: usize,
    pub v_before_tracer: f64,
    pub v_after_tracer: f64,
    pub v_neutral: f64,
}

/// Full history of one exact trajectory up to the last requested first contact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub first_contact_times: Vec<f64>,
    pub v_at_contact: Vec<f64>,
    pub v_after_contact: Vec<f64>,
    /// Tracer mass when it reaches particle `i`.
    pub mass: Vec<f64>,
    pub recollisions: Vec<RecollisionEvent>,
    /// Sum of `V^2(s) - V^2(s+)` over recollisions between contacts `j-1` and `j`.
    pub delta_big: Vec<f64>,
    /// Sum of `V(s) - v` over recollisions between contacts `j-1` and `j`.
    pub delta_small: Vec<f64>,
    pub events: Vec<EventRecord>,
}

impl TrajectoryRecord {
    pub fn n(&self) -> usize {
        self.first_contact_times.len()
    }

    /// `(S_n - t_n V_L) / sqrt(t_n)`: the position fluctuation sampled at the
    /// n-th first contact.
    pub fn position_fluctuation(&self, env: &Environment, v_limit: f64, n: usize) -> f64 {
        let t = self.first_contact_times[n - 1];
        (env.positions[n - 1] - t * v_limit) / t.sqrt()
    }

    /// CSV with header
    /// `event_seq,time,kind,particle_id,V_before,V_after,v_neutral_before,v_neutral_after,mass_after,Q`.
    pub fn write_events_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "event_seq",
            "time",
            "kind",
            "particle_id",
            "V_before",
            "V_after",
            "v_neutral_before",
            "v_neutral_after",
            "mass_after",
            "Q",
        ])?;
        for e in &self.events {
            w.write_record([
                e.seq.to_string(),
                fmt17(e.time),
                e.kind.as_str().to_string(),
                e.particle_id.to_string(),
                fmt17(e.v_before),
                fmt17(e.v_after),
                fmt17(e.v_neutral_before),
                e.v_neutral_after.map(fmt17).unwrap_or_default(),
                fmt17(e.mass_after),
                fmt17(e.position),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Park unreachable movers outside the candidate scan.
    pub pruning: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { pruning: true }
    }
}

pub fn simulate_exact(
    env: &Environment,
    params: &ModelParams,
    n_first_contacts: usize,
) -> Result<TrajectoryRecord> {
    simulate_exact_with(env, params, n_first_contacts, ExactOptions::default())
}

fn dump(state: &TracerState, movers: &MoverSet, events: &[EventRecord]) -> String {
    let mut out = format!("tracer: {state:?}\nlive movers:\n");
    for (slot, m) in movers.live() {
        out.push_str(&format!(
            "  slot {slot}: {m:?} at {}\n",
            m.position(state.time)
        ));
    }
    out.push_str("last events:\n");
    for e in events.iter().rev().take(8).rev() {
        out.push_str(&format!("  {e:?}\n"));
    }
    out
}

pub fn simulate_exact_with(
    env: &Environment,
    params: &ModelParams,
    n_first_contacts: usize,
    options: ExactOptions,
) -> Result<TrajectoryRecord> {
    params.validate()?;
    if n_first_contacts > env.len() {
        return Err(Error::InvalidInput(format!(
            "n_first_contacts = {n_first_contacts} exceeds environment length {}",
            env.len()
        )));
    }
    let n = n_first_contacts;
    let force = params.force;
    let mut state = TracerState::at_rest(params.tracer_mass0);
    let mut clock = CompensatedSum::new();
    let mut movers = MoverSet::new();

    let mut rec = TrajectoryRecord {
        first_contact_times: Vec::with_capacity(n),
        v_at_contact: Vec::with_capacity(n),
        v_after_contact: Vec::with_capacity(n),
        mass: Vec::with_capacity(n),
        recollisions: Vec::new(),
        delta_big: vec![0.0; n],
        delta_small: vec![0.0; n],
        events: Vec::with_capacity(n + n / 4),
    };

    let mut next_index = 1usize;
    while next_index <= n {
        let standing = Some((next_index, env.positions[next_index - 1]));
        let mut ev = next_event(&state, force, standing, movers.live())
            .expect("a standing particle is always reachable under positive force");
        if options.pruning {
            let accel = force / state.mass;
            while movers.reinstate(state.velocity + accel * ev.delay) > 0 {
                ev =
                    next_event(&state, force, standing, movers.live()).expect("standing candidate");
            }
        }
        if ev.delay < -CONSISTENCY_TOL || !ev.delay.is_finite() {
            return Err(Error::Consistency {
                message: format!("next event lies in the past: delay {}", ev.delay),
                dump: dump(&state, &movers, &rec.events),
            });
        }
        let delay = ev.delay.max(0.0);
        clock.add(delay);
        let now = clock.value();
        let accel = force / state.mass;

        match ev.target {
            Target::Standing { index } => {
                let dx = env.positions[index - 1] - state.position;
                if dx < -CONSISTENCY_TOL {
                    return Err(Error::Consistency {
                        message: format!("tracer passed standing particle {index} by {}", -dx),
                        dump: dump(&state, &movers, &rec.events),
                    });
                }
                let v_before = torricelli_velocity(state.velocity, force, state.mass, dx.max(0.0));
                let sticky = env.sticky[index - 1];
                let outcome = if sticky {
                    resolve_sticky(v_before, state.mass)?
                } else {
                    resolve_elastic(v_before, state.mass, 0.0)?
                };
                rec.first_contact_times.push(now);
                rec.v_at_contact.push(v_before);
                rec.v_after_contact.push(outcome.tracer_velocity_after);
                rec.mass.push(state.mass);
                state = TracerState {
                    time: now,
                    position: env.positions[index - 1],
                    velocity: outcome.tracer_velocity_after,
                    mass: outcome.tracer_mass_after,
                };
                if let Some(v_out) = outcome.neutral_velocity_after {
                    movers.insert(MovingNeutral {
                        id: index,
                        position_at: state.position,
                        velocity: v_out,
                        updated_at: now,
                        status: MoverStatus::Live,
                    });
                }
                rec.events.push(EventRecord {
                    seq: rec.events.len(),
                    time: now,
                    kind: if sticky {
                        EventKind::FirstSticky
                    } else {
                        EventKind::FirstElastic
                    },
                    particle_id: index,
                    v_before,
                    v_after: outcome.tracer_velocity_after,
                    v_neutral_before: 0.0,
                    v_neutral_after: outcome.neutral_velocity_after,
                    mass_after: outcome.tracer_mass_after,
                    position: state.position,
                });
                next_index += 1;
            }
            Target::Mover { slot, id } => {
                let position =
                    state.position + state.velocity * delay + 0.5 * accel * delay * delay;
                let v_before = state.velocity + accel * delay;
                let v_neutral = movers.get(slot).velocity;
                let outcome = resolve_elastic(v_before, state.mass, v_neutral).map_err(|e| {
                    Error::Consistency {
                        message: format!("recollision with particle {id} failed: {e}"),
                        dump: dump(&state, &movers, &rec.events),
                    }
                })?;
                let v_out = outcome.neutral_velocity_after.expect("elastic outcome");
                state = TracerState {
                    time: now,
                    position,
                    velocity: outcome.tracer_velocity_after,
                    mass: state.mass,
                };
                let m = movers.get_mut(slot);
                m.position_at = position;
                m.velocity = v_out;
                m.updated_at = now;

                let j = next_index - 1;
                rec.delta_big[j] += v_before * v_before
                    - outcome.tracer_velocity_after * outcome.tracer_velocity_after;
                rec.delta_small[j] += v_before - v_neutral;
                rec.recollisions.push(RecollisionEvent {
                    time: now,
                    neutral_id: id,
                    v_before_tracer: v_before,
                    v_after_tracer: outcome.tracer_velocity_after,
                    v_neutral,
                });
                rec.events.push(EventRecord {
                    seq: rec.events.len(),
                    time: now,
                    kind: EventKind::Recollision,
                    particle_id: id,
                    v_before,
                    v_after: outcome.tracer_velocity_after,
                    v_neutral_before: v_neutral,
                    v_neutral_after: Some(v_out),
                    mass_after: state.mass,
                    position,
                });
            }
        }

        for (_, m) in movers.live() {
            let gap = m.position(now) - state.position;
            if gap < -CONSISTENCY_TOL {
                return Err(Error::Consistency {
                    message: format!("tracer passed mover {} by {}", m.id, -gap),
                    dump: dump(&state, &movers, &rec.events),
                });
            }
        }
        if options.pruning {
            movers.prune(state.velocity);
        }
    }
    Ok(rec)
}

/// Differences between the exact and modified dynamics run on the same medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingReport {
    pub n: usize,
    /// `(t_n - tbar_n) / sqrt(n)`; exactly zero when no recollision happened
    /// before `t_n`, since both dynamics then follow the same path.
    pub dt_scaled: f64,
    /// The same difference as computed, including round-off between the two
    /// arithmetic paths.
    pub dt_scaled_direct: f64,
    /// `sqrt(n) (Vbar_n^2 - V_n^2)` from the recollision losses propagated
    /// through the collision factors; nonnegative by construction.
    pub dv2_scaled: f64,
    /// The same quantity as a direct difference of the two simulations.
    pub dv2_scaled_direct: f64,
    /// `sum_{j <= n} delta(j)`.
    pub delta_sum: f64,
    pub recollision_count: usize,
    /// Largest `j <= n` with `delta(j) > 0`.
    pub last_delta_index: Option<usize>,
}

/// Coupling quantities at contact `n` from already computed trajectories.
pub fn coupling_from(
    record: &TrajectoryRecord,
    modified: &ModifiedTrajectory,
    env: &Environment,
    n: usize,
) -> CouplingReport {
    let sqrt_n = (n as f64).sqrt();
    let mut propagated = 0.0;
    for j in 0..n {
        propagated = (propagated + record.delta_big[j])
            * collision_factor_sq(modified.mass[j], env.sticky[j]);
    }
    let v_exact = record.v_after_contact[n - 1];
    let t_n = record.first_contact_times[n - 1];
    let recollision_count = record.recollisions.iter().filter(|r| r.time <= t_n).count();
    let dt_direct = (t_n - modified.t_bar[n - 1]) / sqrt_n;
    CouplingReport {
        n,
        dt_scaled: if recollision_count == 0 {
            0.0
        } else {
            dt_direct
        },
        dt_scaled_direct: dt_direct,
        dv2_scaled: sqrt_n * propagated,
        dv2_scaled_direct: sqrt_n * (modified.v2_out[n - 1] - v_exact * v_exact),
        delta_sum: record.delta_small[..n].iter().sum(),
        recollision_count,
        last_delta_index: record.delta_small[..n]
            .iter()
            .rposition(|&d| d > 0.0)
            .map(|j| j + 1),
    }
}

/// Run both simulators on the first `n` particles of `env` and compare them.
pub fn coupling_report(
    env: &Environment,
    params: &ModelParams,
    n: usize,
) -> Result<CouplingReport> {
    let env_n = env.truncated(n);
    let record = simulate_exact(&env_n, params, n)?;
    let modified = simulate_modified(&env_n, params);
    Ok(coupling_from(&record, &modified, &env_n, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, GapDistSpec};

    fn params(p: f64) -> ModelParams {
        ModelParams::new(1.0, p, GapDistSpec::exponential(1.0).unwrap()).unwrap()
    }

    #[test]
    fn single_elastic_particle_then_one_recollision() {
        // Contact at t=2 (V=1 -> 1/3, v'=4/3); the tracer catches the mover
        // 4 time units later, at x = 19/3, before reaching particle 2 at x = 11.
        let env = Environment::from_parts(vec![1.0, 10.0], vec![false, true]).unwrap();
        let rec = simulate_exact(&env, &params(0.5), 2).unwrap();
        assert!((rec.first_contact_times[0] - 2.0).abs() < 1e-14);
        assert!((rec.v_at_contact[0] - 1.0).abs() < 1e-14);
        assert!((rec.v_after_contact[0] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(rec.recollisions.len(), 1);
        let r = rec.recollisions[0];
        assert!((r.time - 6.0).abs() < 1e-12);
        assert!((r.v_before_tracer - 7.0 / 3.0).abs() < 1e-12);
        assert!((r.v_neutral - 4.0 / 3.0).abs() < 1e-12);
        assert!((r.v_after_tracer - 5.0 / 3.0).abs() < 1e-12);
        assert!((rec.events[1].position - 19.0 / 3.0).abs() < 1e-12);
        assert_eq!(rec.delta_small[0], 0.0);
        assert!((rec.delta_small[1] - 1.0).abs() < 1e-12);
        assert!((rec.delta_big[1] - 24.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn only_first_contact_requested() {
        let env = Environment::from_parts(vec![1.0], vec![false]).unwrap();
        let rec = simulate_exact(&env, &params(0.5), 1).unwrap();
        assert_eq!(rec.n(), 1);
        assert!(rec.recollisions.is_empty());
    }

    #[test]
    fn all_sticky_matches_modified() {
        let p = params(1.0);
        let env = sample_environment(&p, 2000, 5, 0).unwrap();
        let rec = simulate_exact(&env, &p, env.len()).unwrap();
        let m = simulate_modified(&env, &p);
        assert!(rec.recollisions.is_empty());
        for k in 0..env.len() {
            assert!((rec.first_contact_times[k] - m.t_bar[k]).abs() <= 1e-10 * m.t_bar[k]);
            let v_out = m.v2_out[k].sqrt();
            assert!((rec.v_after_contact[k] - v_out).abs() <= 1e-10 * v_out);
            assert_eq!(rec.mass[k], m.mass[k]);
        }
        let c = coupling_report(&env, &p, env.len()).unwrap();
        assert_eq!(c.dv2_scaled, 0.0);
        assert_eq!(c.delta_sum, 0.0);
    }

    #[test]
    fn next_event_examples() {
        let rest = TracerState {
            time: 0.0,
            position: 0.0,
            velocity: 0.0,
            mass: 2.0,
        };
        let ev = next_event(&rest, 1.0, Some((1, 1.0)), std::iter::empty()).unwrap();
        assert_eq!(ev.target, Target::Standing { index: 1 });
        assert!((ev.delay - 2.0).abs() < 1e-15);

        let s = TracerState {
            velocity: 1.0,
            ..rest
        };
        let fast = MovingNeutral {
            id: 7,
            position_at: 0.1,
            velocity: 50.0,
            updated_at: 0.0,
            status: MoverStatus::Live,
        };
        let ev = next_event(&s, 1.0, Some((9, 1.0)), [(0usize, &fast)]).unwrap();
        assert_eq!(ev.target, Target::Standing { index: 9 });

        let slow = MovingNeutral {
            velocity: 0.01,
            ..fast
        };
        let ev = next_event(&s, 1.0, Some((9, 1.0)), [(0usize, &slow)]).unwrap();
        assert_eq!(ev.target, Target::Mover { slot: 0, id: 7 });
        let expected = 2.0 * 0.1 / (0.99 + (0.99f64 * 0.99 + 2.0 * 0.5 * 0.1).sqrt());
        assert!((ev.delay - expected).abs() < 1e-15);
    }

    #[test]
    fn simultaneous_events_prefer_nearest_then_standing() {
        let s = TracerState {
            time: 0.0,
            position: 0.0,
            velocity: 1.0,
            mass: 2.0,
        };
        // Mover parked exactly on the standing particle with zero velocity.
        let m = MovingNeutral {
            id: 1,
            position_at: 1.0,
            velocity: 0.0,
            updated_at: 0.0,
            status: MoverStatus::Live,
        };
        let ev = next_event(&s, 1.0, Some((2, 1.0)), [(0usize, &m)]).unwrap();
        assert_eq!(ev.target, Target::Standing { index: 2 });
    }

    #[test]
    fn prune_and_reinstate() {
        let mut set = MoverSet::new();
        let state = TracerState {
            time: 0.0,
            position: 0.0,
            velocity: 0.4,
            mass: 3.0,
        };
        prune_or_reinstate(&state, &mut set);
        assert!(set.is_empty());

        set.insert(MovingNeutral {
            id: 1,
            position_at: 1.0,
            velocity: 0.5,
            updated_at: 0.0,
            status: MoverStatus::Live,
        });
        set.insert(MovingNeutral {
            id: 2,
            position_at: 1.0,
            velocity: 0.3,
            updated_at: 0.0,
            status: MoverStatus::Live,
        });
        prune_or_reinstate(&state, &mut set);
        assert_eq!(set.live_count(), 1);
        assert_eq!(set.get(0).status, MoverStatus::Pruned { threshold: 0.5 });

        let faster = TracerState {
            velocity: 0.6,
            ..state
        };
        assert_eq!(set.reinstate(faster.velocity), 1);
        assert_eq!(set.get(0).status, MoverStatus::Live);
        // Ballistic anchor unchanged; position follows from time alone.
        assert!((set.get(0).position(2.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pruning_is_exact() {
        let p = params(0.3);
        for idx in 0..40 {
            let env = sample_environment(&p, 150, 77, idx).unwrap();
            let a = simulate_exact_with(&env, &p, 150, ExactOptions { pruning: true }).unwrap();
            let b = simulate_exact_with(&env, &p, 150, ExactOptions { pruning: false }).unwrap();
            assert_eq!(a.events, b.events, "trajectory {idx}");
        }
    }

    #[test]
    fn coupling_identities() {
        let p = params(0.5);
        let env = sample_environment(&p, 3000, 12, 1).unwrap();
        let c = coupling_report(&env, &p, 3000).unwrap();
        assert!(c.dv2_scaled >= 0.0);
        assert!((c.dv2_scaled - c.dv2_scaled_direct).abs() < 1e-9);
        let rec = simulate_exact(&env, &p, 3000).unwrap();
        let from_log: f64 = rec
            .recollisions
            .iter()
            .map(|r| r.v_before_tracer - r.v_neutral)
            .sum();
        assert!((c.delta_sum - from_log).abs() <= 1e-12 * from_log.max(1.0));
        assert_eq!(c.recollision_count, rec.recollisions.len());
    }

    #[test]
    fn too_many_contacts_rejected() {
        let env = Environment::from_parts(vec![1.0], vec![true]).unwrap();
        assert!(simulate_exact(&env, &params(0.5), 2).is_err());
    }
}
