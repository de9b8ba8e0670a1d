//! Brute-force fixed-step integrator used to cross-check the event-driven
//! simulator. Collisions are detected as crossings at the end of each step and
//! resolved with momentum balance written out independently.

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::exact::EventKind;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEvent {
    pub time: f64,
    pub kind: EventKind,
    pub particle_id: usize,
}

struct Body {
    id: usize,
    x: f64,
    v: f64,
}

/// Events up to and including the `n_first_contacts`-th first contact.
pub fn fixed_step_events(
    env: &Environment,
    params: &ModelParams,
    n_first_contacts: usize,
    dt: f64,
) -> Result<Vec<OracleEvent>> {
    params.validate()?;
    if dt.is_nan() || dt <= 0.0 || n_first_contacts > env.len() {
        return Err(Error::InvalidInput(format!(
            "bad oracle request: dt={dt}, n={n_first_contacts}"
        )));
    }
    let f = params.force;
    let mut mass = params.tracer_mass0;
    let (mut q, mut v) = (0.0f64, 0.0f64);
    let mut movers: Vec<Body> = Vec::new();
    let mut next = 0usize;
    let mut events = Vec::new();
    let mut step: u64 = 0;

    while next < n_first_contacts {
        let a = f / mass;
        q += v * dt + 0.5 * a * dt * dt;
        v += a * dt;
        for b in &mut movers {
            b.x += b.v * dt;
        }
        step += 1;
        let t = step as f64 * dt;

        // Resolve crossings in the order they happened within the step,
        // estimated by how long ago each one occurred.
        loop {
            let mut pick: Option<(f64, Option<usize>)> = None;
            if next < n_first_contacts && q >= env.positions[next] {
                let ago = (q - env.positions[next]) / v.max(f64::MIN_POSITIVE);
                pick = Some((ago, None));
            }
            for (slot, b) in movers.iter().enumerate() {
                if q >= b.x && v > b.v {
                    let ago = (q - b.x) / (v - b.v);
                    if pick.is_none_or(|(best, _)| ago > best) {
                        pick = Some((ago, Some(slot)));
                    }
                }
            }
            let Some((_, which)) = pick else { break };
            match which {
                None => {
                    let id = next + 1;
                    if env.sticky[next] {
                        // Total momentum m v shared by m + 1 units of mass.
                        v = mass * v / (mass + 1.0);
                        mass += 1.0;
                        events.push(OracleEvent {
                            time: t,
                            kind: EventKind::FirstSticky,
                            particle_id: id,
                        });
                    } else {
                        let (vt, vn) = elastic(mass, v, 0.0);
                        v = vt;
                        movers.push(Body { id, x: q, v: vn });
                        events.push(OracleEvent {
                            time: t,
                            kind: EventKind::FirstElastic,
                            particle_id: id,
                        });
                    }
                    next += 1;
                    if next == n_first_contacts {
                        break;
                    }
                }
                Some(slot) => {
                    let (vt, vn) = elastic(mass, v, movers[slot].v);
                    v = vt;
                    movers[slot].v = vn;
                    movers[slot].x = q;
                    events.push(OracleEvent {
                        time: t,
                        kind: EventKind::Recollision,
                        particle_id: movers[slot].id,
                    });
                }
            }
        }
    }
    Ok(events)
}

/// Elastic collision of masses `m` and 1 in the centre-of-mass frame.
fn elastic(m: f64, v: f64, u: f64) -> (f64, f64) {
    let vcm = (m * v + u) / (m + 1.0);
    (2.0 * vcm - v, 2.0 * vcm - u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::GapDistSpec;

    #[test]
    fn hand_example() {
        let p = ModelParams::new(1.0, 0.5, GapDistSpec::exponential(1.0).unwrap()).unwrap();
        let env = Environment::from_parts(vec![1.0, 10.0], vec![false, true]).unwrap();
        let ev = fixed_step_events(&env, &p, 2, 1e-5).unwrap();
        assert_eq!(ev.len(), 3);
        assert!((ev[0].time - 2.0).abs() < 1e-4);
        assert_eq!(ev[1].kind, EventKind::Recollision);
        assert!((ev[1].time - 6.0).abs() < 1e-3);
    }
}
