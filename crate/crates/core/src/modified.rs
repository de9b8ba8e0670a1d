//! The modified process: elastic particles vanish at first contact, so the
//! tracer meets every particle at its initial position and the whole
//! trajectory follows from an O(n) recursion in squared-velocity space.

use std::io::Write;

use crate::decomposition::x_column;
use crate::environment::Environment;
use crate::error::Result;
use crate::model::ModelParams;
use crate::numerics::{fmt17, CompensatedSum};

/// Arrays indexed by `i - 1` for collision `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedTrajectory {
    pub n: usize,
    /// Squared velocity just before collision `i`.
    pub v2_in: Vec<f64>,
    /// Squared velocity just after collision `i`.
    pub v2_out: Vec<f64>,
    /// Collision times.
    pub t_bar: Vec<f64>,
    /// Tracer mass when it reaches particle `i`.
    pub mass: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ModifiedTrajectory {
    /// Post-collision velocity after collision `i` (1-based).
    pub fn velocity_after(&self, i: usize) -> f64 {
        self.v2_out[i - 1].sqrt()
    }

    /// `(S_n - t_n V_L) / sqrt(n)`.
    pub fn position_fluctuation(&self, env: &Environment, v_limit: f64, n: usize) -> f64 {
        (env.positions[n - 1] - self.t_bar[n - 1] * v_limit) / (n as f64).sqrt()
    }

    /// `sqrt(n) (V_n - V_L)`.
    pub fn velocity_fluctuation(&self, v_limit: f64, n: usize) -> f64 {
        (n as f64).sqrt() * (self.velocity_after(n) - v_limit)
    }

    /// CSV with header `i,t_bar,v2_in,v2_out,M,S`.
    pub fn write_csv<W: Write>(&self, env: &Environment, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "t_bar", "v2_in", "v2_out", "M", "S"])?;
        for k in 0..self.n {
            w.write_record([
                (k + 1).to_string(),
                fmt17(self.t_bar[k]),
                fmt17(self.v2_in[k]),
                fmt17(self.v2_out[k]),
                fmt17(self.mass[k]),
                fmt17(env.positions[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Squared collision factor `((M + eta - 1) / (M + 1))^2`.
#[inline]
pub fn collision_factor_sq(mass: f64, sticky: bool) -> f64 {
    let eta = if sticky { 1.0 } else { 0.0 };
    let f = (mass + eta - 1.0) / (mass + 1.0);
    f * f
}

/// Run the modified dynamics over the whole environment.
pub fn simulate_modified(env: &Environment, params: &ModelParams) -> ModifiedTrajectory {
    let n = env.len();
    let force = params.force;
    if force <= 0.0 {
        return ModifiedTrajectory {
            n: 0,
            v2_in: Vec::new(),
            v2_out: Vec::new(),
            t_bar: Vec::new(),
            mass: Vec::new(),
            warnings: vec![format!(
                "degenerate input: force = {force}, tracer never moves"
            )],
        };
    }
    let mut v2_in = Vec::with_capacity(n);
    let mut v2_out = Vec::with_capacity(n);
    let mut t_bar = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);

    let mut m = params.tracer_mass0;
    let mut v2_prev = 0.0;
    let mut clock = CompensatedSum::new();
    for (&xi, &sticky) in env.gaps.iter().zip(&env.sticky) {
        let v2 = v2_prev + 2.0 * force * xi / m;
        clock.add(2.0 * xi / (v2.sqrt() + v2_prev.sqrt()));
        let out = v2 * collision_factor_sq(m, sticky);
        v2_in.push(v2);
        v2_out.push(out);
        t_bar.push(clock.value());
        mass.push(m);
        if sticky {
            m += 1.0;
        }
        v2_prev = out;
    }
    let mut warnings = Vec::new();
    if params.gap_dist.outside_theorem_hypotheses {
        warnings
            .push("gap law is not absolutely continuous; limit theorems do not apply".to_string());
    }
    ModifiedTrajectory {
        n,
        v2_in,
        v2_out,
        t_bar,
        mass,
        warnings,
    }
}

/// Squared velocity after collision `i` from the closed product form
/// `sum_j 2 F xi_j X_{i,j}`.
pub fn v2_product_form(env: &Environment, params: &ModelParams, i: usize) -> f64 {
    if params.force <= 0.0 {
        return 0.0;
    }
    let column = x_column(env, params, i);
    let acc: CompensatedSum = column
        .iter()
        .enumerate()
        .map(|(j, x)| 2.0 * params.force * env.gaps[j] * x)
        .collect();
    acc.value()
}
