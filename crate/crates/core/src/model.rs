//! Collision laws and constant-acceleration kinematics shared by both
//! simulators.

use serde::{Deserialize, Serialize};

use crate::environment::GapDistSpec;
use crate::error::{ensure_finite, Error, Result};

/// Approach speeds below this are treated as a grazing contact, not a collision.
pub const GRAZING_SPEED: f64 = 1e-12;

fn default_mass0() -> f64 {
    2.0
}

/// Physical and statistical parameters of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Constant force acting on the tracer.
    pub force: f64,
    /// Probability that a neutral particle is sticky.
    pub stick_prob: f64,
    /// Initial tracer mass, in units of the neutral mass.
    #[serde(default = "default_mass0")]
    pub tracer_mass0: f64,
    pub gap_dist: GapDistSpec,
}

impl ModelParams {
    pub fn new(force: f64, stick_prob: f64, gap_dist: GapDistSpec) -> Result<Self> {
        let params = Self {
            force,
            stick_prob,
            tracer_mass0: default_mass0(),
            gap_dist,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_tracer_mass0(mut self, mass0: f64) -> Result<Self> {
        self.tracer_mass0 = mass0;
        self.validate()?;
        Ok(self)
    }

    /// Field-level check; returns the offending field name and a message.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.force.is_finite() && self.force > 0.0) {
            return Err((
                "force",
                format!("force must be positive and finite, got {}", self.force),
            ));
        }
        if !(self.stick_prob > 0.0 && self.stick_prob <= 1.0) {
            return Err(("stick_prob", "stick_prob must be in (0,1]".to_string()));
        }
        if !(self.tracer_mass0.is_finite() && self.tracer_mass0 > 1.0) {
            return Err((
                "tracer_mass0",
                format!("tracer_mass0 must be > 1, got {}", self.tracer_mass0),
            ));
        }
        self.gap_dist.check().map_err(|msg| ("gap_dist", msg))
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(field, msg)| Error::InvalidInput(format!("{field}: {msg}")))
    }

    pub fn mean_gap(&self) -> f64 {
        self.gap_dist.declared_mean
    }

    pub fn gap_variance(&self) -> f64 {
        self.gap_dist.declared_var
    }

    /// Almost-sure limit velocity `sqrt(F mu / (2 - p))`.
    pub fn limit_velocity(&self) -> f64 {
        (self.force * self.mean_gap() / (2.0 - self.stick_prob)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracerState {
    pub time: f64,
    pub position: f64,
    pub velocity: f64,
    pub mass: f64,
}

impl TracerState {
    /// The static initial condition: at rest at the origin.
    pub fn at_rest(mass0: f64) -> Self {
        Self {
            time: 0.0,
            position: 0.0,
            velocity: 0.0,
            mass: mass0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionOutcome {
    pub tracer_velocity_after: f64,
    /// Post-collision neutral velocity; `None` when the neutral was absorbed.
    pub neutral_velocity_after: Option<f64>,
    pub tracer_mass_after: f64,
}

/// Perfectly inelastic collision with a standing unit-mass particle.
pub fn resolve_sticky(v_tracer: f64, m_tracer: f64) -> Result<CollisionOutcome> {
    ensure_finite("v_tracer", v_tracer)?;
    ensure_finite("m_tracer", m_tracer)?;
    if m_tracer < 1.0 {
        return Err(Error::InvalidInput(format!(
            "m_tracer must be >= 1, got {m_tracer}"
        )));
    }
    Ok(CollisionOutcome {
        tracer_velocity_after: m_tracer * v_tracer / (m_tracer + 1.0),
        neutral_velocity_after: None,
        tracer_mass_after: m_tracer + 1.0,
    })
}

/// Perfectly elastic collision between the tracer and a unit-mass neutral
/// moving at `v_neutral`.
pub fn resolve_elastic(v_tracer: f64, m_tracer: f64, v_neutral: f64) -> Result<CollisionOutcome> {
    ensure_finite("v_tracer", v_tracer)?;
    ensure_finite("m_tracer", m_tracer)?;
    ensure_finite("v_neutral", v_neutral)?;
    if m_tracer <= 1.0 {
        return Err(Error::InvalidInput(format!(
            "m_tracer must be > 1, got {m_tracer}"
        )));
    }
    if v_tracer <= v_neutral {
        return Err(Error::NoApproach {
            v_tracer,
            v_neutral,
        });
    }
    let denom = m_tracer + 1.0;
    // Written around the relative velocity so that v' - V+ = V - v holds to
    // rounding even when the masses are very unequal.
    let rel = v_tracer - v_neutral;
    let tracer_after = v_tracer - 2.0 * rel / denom;
    let neutral_after = v_neutral + 2.0 * m_tracer * rel / denom;
    Ok(CollisionOutcome {
        tracer_velocity_after: tracer_after,
        neutral_velocity_after: Some(neutral_after),
        tracer_mass_after: m_tracer,
    })
}

/// Velocity after covering `dx` from velocity `v0` under acceleration `force / mass`.
pub fn torricelli_velocity(v0: f64, force: f64, mass: f64, dx: f64) -> f64 {
    (v0 * v0 + 2.0 * force * dx / mass).sqrt()
}

/// Time to cover `dx > 0` starting at `v0` under acceleration `force / mass`.
pub fn flight_time(v0: f64, force: f64, mass: f64, dx: f64) -> f64 {
    if dx <= 0.0 {
        return 0.0;
    }
    2.0 * dx / (v0 + torricelli_velocity(v0, force, mass, dx))
}

/// Earliest `t >= 0` at which the tracer reaches a neutral moving ballistically
/// from `neutral_pos` at `neutral_vel`. `None` when it never does or when the
/// contact would be grazing.
pub fn catch_up_time(
    tracer: &TracerState,
    force: f64,
    neutral_pos: f64,
    neutral_vel: f64,
) -> Option<f64> {
    let accel = force / tracer.mass;
    let gap = (neutral_pos - tracer.position).max(0.0);
    let rel = tracer.velocity - neutral_vel;
    if accel <= 0.0 {
        if rel <= GRAZING_SPEED {
            return None;
        }
        return Some(gap / rel);
    }
    // Approach speed at contact.
    let contact_speed = (rel * rel + 2.0 * accel * gap).sqrt();
    if contact_speed < GRAZING_SPEED {
        return None;
    }
    if rel > 0.0 {
        Some(2.0 * gap / (rel + contact_speed))
    } else {
        Some((contact_speed - rel) / accel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn sticky_examples() {
        let o = resolve_sticky(1.0, 2.0).unwrap();
        assert!((o.tracer_velocity_after - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(o.tracer_mass_after, 3.0);
        assert!(o.neutral_velocity_after.is_none());

        let o = resolve_sticky(0.0, 5.0).unwrap();
        assert_eq!(o.tracer_velocity_after, 0.0);
        assert_eq!(o.tracer_mass_after, 6.0);

        let o = resolve_sticky(1.0, 1e6).unwrap();
        assert!((o.tracer_velocity_after - 1e6 / (1e6 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn sticky_rejects_non_finite() {
        assert!(matches!(
            resolve_sticky(f64::NAN, 2.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            resolve_sticky(1.0, f64::INFINITY),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn elastic_examples() {
        let o = resolve_elastic(1.0, 2.0, 0.0).unwrap();
        let v = o.neutral_velocity_after.unwrap();
        assert!((o.tracer_velocity_after - 1.0 / 3.0).abs() < 1e-15);
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
        assert!(rel_err(2.0 * o.tracer_velocity_after + v, 2.0) < 1e-15);
        assert!(rel_err(2.0 * o.tracer_velocity_after.powi(2) + v * v, 2.0) < 1e-15);

        let o = resolve_elastic(1.0, 1e9, 0.0).unwrap();
        assert!((o.tracer_velocity_after - 1.0).abs() < 1e-8);
        assert!((o.neutral_velocity_after.unwrap() - 2.0).abs() < 1e-8);

        let o = resolve_elastic(0.9, 3.0, 0.5).unwrap();
        let diff = o.neutral_velocity_after.unwrap() - o.tracer_velocity_after;
        assert!((diff - 0.4).abs() < 1e-15);
    }

    #[test]
    fn elastic_requires_approach() {
        assert!(matches!(
            resolve_elastic(0.5, 2.0, 0.5),
            Err(Error::NoApproach { .. })
        ));
        assert!(matches!(
            resolve_elastic(1.0, 1.0, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn torricelli_examples() {
        assert_eq!(torricelli_velocity(0.0, 1.0, 2.0, 1.0), 1.0);
        assert_eq!(torricelli_velocity(3.0, 1.0, 2.0, 0.0), 3.0);
        assert_eq!(torricelli_velocity(1.0, 2.0, 4.0, 3.0), 2.0);
    }

    #[test]
    fn flight_time_examples() {
        assert!((flight_time(0.0, 1.0, 2.0, 1.0) - 2.0).abs() < 1e-15);
        // Ballistic limit: acceleration 1e-12.
        assert!((flight_time(1.0, 1e-12, 1.0, 5.0) - 5.0).abs() < 1e-9);
        // Quadratic-root oracle: t + t^2 = 4.
        let oracle = (-1.0 + 17.0f64.sqrt()) / 2.0;
        assert!(rel_err(flight_time(1.0, 2.0, 1.0, 4.0), oracle) < 1e-12);
    }

    #[test]
    fn catch_up_examples() {
        let rest = TracerState {
            time: 0.0,
            position: 0.0,
            velocity: 0.0,
            mass: 2.0,
        };
        assert!((catch_up_time(&rest, 1.0, 1.0, 0.0).unwrap() - 2.0).abs() < 1e-15);

        let moving = TracerState {
            velocity: 1.0,
            ..rest
        };
        let oracle = 2.0 + 2.0 * 2.0f64.sqrt();
        assert!(rel_err(catch_up_time(&moving, 1.0, 1.0, 2.0).unwrap(), oracle) < 1e-14);

        let light = TracerState { mass: 1.0, ..rest };
        assert_eq!(catch_up_time(&light, 0.0, 1.0, 1.0), None);

        // Contact already made and approaching.
        assert_eq!(catch_up_time(&moving, 1.0, 0.0, 0.5), Some(0.0));
        // Grazing contact.
        let level = TracerState {
            velocity: 0.5,
            ..rest
        };
        assert_eq!(catch_up_time(&level, 1.0, 0.0, 0.5), None);
    }

    #[test]
    fn params_validation() {
        let gaps = GapDistSpec::exponential(1.0).unwrap();
        assert!(ModelParams::new(1.0, 0.5, gaps.clone()).is_ok());
        assert!(ModelParams::new(-1.0, 0.5, gaps.clone()).is_err());
        assert!(ModelParams::new(1.0, 0.0, gaps.clone()).is_err());
        assert!(ModelParams::new(1.0, 1.0, gaps.clone()).is_ok());
        let p = ModelParams::new(1.0, 0.5, gaps).unwrap();
        assert!(p.clone().with_tracer_mass0(1.0).is_err());
        assert!(p.with_tracer_mass0(3.5).is_ok());
    }
}
