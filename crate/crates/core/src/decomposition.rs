//! Closed-form limit constants and term-by-term evaluation of the velocity
//! fluctuation sum of the modified process.
//!
//! Notation, with `M_k` the tracer mass on reaching particle `k`:
//! `f_k = (M_k + eta_k - 1) / (M_k + 1)`, `E_{i,j} = prod_{k=j..i} f_k^2`,
//! `X_{i,j} = E_{i,j} / M_j` and `w_{i,j} = j^(zeta-1) / i^zeta`.
//! Every double sum `sum_i sum_j w_{i,j} (...)` is evaluated through a
//! one-pass recursion in `i`; `decompose_direct` keeps the quadratic form.

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::modified::{collision_factor_sq, simulate_modified};
use crate::numerics::{decay_ratio, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub v_limit: f64,
    pub zeta: f64,
    pub sigma_w: f64,
    pub sigma_z: f64,
    pub sigma_q_tilde: f64,
    pub sigma_q_hat: f64,
    pub sigma_q: f64,
    pub sigma_v_hat: Option<f64>,
    pub sigma_v: Option<f64>,
}

impl TheoryConstants {
    /// Fill the velocity constants from an empirical estimate of `sigma_v_hat`.
    pub fn with_sigma_v_hat(mut self, sigma_v_hat: f64, mean_gap: f64) -> Self {
        self.sigma_v_hat = Some(sigma_v_hat);
        self.sigma_v = Some((mean_gap / self.v_limit).sqrt() * sigma_v_hat);
        self
    }
}

pub fn zeta(stick_prob: f64) -> f64 {
    2.0 * (2.0 - stick_prob) / stick_prob
}

pub fn theory_constants(params: &ModelParams) -> TheoryConstants {
    let f = params.force;
    let p = params.stick_prob;
    let mu = params.mean_gap();
    let sigma = params.gap_variance().sqrt();
    let z = zeta(p);
    let v_limit = (f * mu / (2.0 - p)).sqrt();
    let sigma_w = 2.0 * f * mu / (p * z.sqrt()) * sigma;
    let sigma_z = 4.0 * f * mu * mu * ((1.0 - p) / (p * z.powi(3))).sqrt();
    let sigma_q_tilde = (sigma_w * sigma_w + sigma_z * sigma_z).sqrt();
    let sigma_q_hat = sigma_q_tilde / (2.0 * v_limit * v_limit);
    let sigma_q = (v_limit / mu).sqrt() * sigma_q_hat;
    TheoryConstants {
        v_limit,
        zeta: z,
        sigma_w,
        sigma_z,
        sigma_q_tilde,
        sigma_q_hat,
        sigma_q,
        sigma_v_hat: None,
        sigma_v: None,
    }
}

/// Exact standard deviations of `W3n` and `Z4n` at finite `n`, from their
/// coefficient forms and the gap and stickiness variances.
pub fn term_std_at(params: &ModelParams, n: usize) -> (f64, f64) {
    let f = params.force;
    let p = params.stick_prob;
    let mu = params.mean_gap();
    let z = zeta(p);
    let a = w3_coefficients(z, n);
    let sum_a2: f64 = a.iter().map(|x| x * x).sum();
    let sum_b2: f64 = a
        .iter()
        .enumerate()
        .map(|(k, x)| (x - 1.0 / (k + 1) as f64).powi(2))
        .sum();
    let sqrt_n = (n as f64).sqrt();
    let std_w3 = 2.0 * f * mu / (p * sqrt_n) * (params.gap_variance() * sum_a2).sqrt();
    let std_z4 = 4.0 * f * mu * mu / (z * p * sqrt_n) * (p * (1.0 - p) * sum_b2).sqrt();
    (std_w3, std_z4)
}

/// Limits of [`term_std_at`] as `n` grows: `sum_j a_{j,n}^2 / n` tends to
/// `2 / (zeta (2 zeta - 1))`.
pub fn term_std_limit(params: &ModelParams) -> (f64, f64) {
    let f = params.force;
    let p = params.stick_prob;
    let mu = params.mean_gap();
    let z = zeta(p);
    let c = 2.0 / (z * (2.0 * z - 1.0));
    let std_w3 = 2.0 * f * mu / p * (params.gap_variance() * c).sqrt();
    let std_z4 = 4.0 * f * mu * mu / (z * p) * (p * (1.0 - p) * c).sqrt();
    (std_w3, std_z4)
}

/// `a_{j,n} = j^(zeta-1) sum_{i=j..n} i^-zeta` for `j = 1..n`.
pub fn w3_coefficients(z: f64, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    for j in (1..=n).rev() {
        let next = if j < n {
            decay_ratio(j + 1, z - 1.0) * a[j]
        } else {
            0.0
        };
        a[j - 1] = 1.0 / j as f64 + next;
    }
    a
}

/// `L_{k,n} = k^-2 (sum_{j<=k} j^(zeta-1)) (sum_{i=k..n} i^-zeta)` for `k = 1..n`.
pub fn z5_coefficients(z: f64, n: usize) -> Vec<f64> {
    // k^-zeta sum_{j<=k} j^(zeta-1) is s_k; k^zeta sum_{i>=k} i^-zeta is a_{k,n} k.
    let a = w3_coefficients(z, n);
    let mut s = 0.0;
    (1..=n)
        .map(|k| {
            s = s * decay_ratio(k, z) + 1.0 / k as f64;
            s * a[k - 1] / k as f64
        })
        .collect()
}

/// Tracer masses `M_1..M_n` on reaching each particle.
pub fn masses(env: &Environment, params: &ModelParams, n: usize) -> Vec<f64> {
    let mut m = params.tracer_mass0;
    env.sticky[..n]
        .iter()
        .map(|&s| {
            let here = m;
            if s {
                m += 1.0;
            }
            here
        })
        .collect()
}

/// `y_k = 2 ln f_k`.
fn log_factor(mass: f64, sticky: bool) -> f64 {
    collision_factor_sq(mass, sticky).ln()
}

/// `X_{i,j}`, with the product taken as a compensated sum of logarithms.
pub fn compute_x(env: &Environment, params: &ModelParams, i: usize, j: usize) -> f64 {
    assert!(1 <= j && j <= i && i <= env.len(), "need 1 <= j <= i <= n");
    let m = masses(env, params, i);
    let y: CompensatedSum = (j..=i)
        .map(|k| log_factor(m[k - 1], env.sticky[k - 1]))
        .collect();
    y.value().exp() / m[j - 1]
}

/// `X_{i,1}, ..., X_{i,i}`.
pub fn x_column(env: &Environment, params: &ModelParams, i: usize) -> Vec<f64> {
    let m = masses(env, params, i);
    let mut out = vec![0.0; i];
    let mut y = CompensatedSum::new();
    for j in (1..=i).rev() {
        y.add(log_factor(m[j - 1], env.sticky[j - 1]));
        out[j - 1] = y.value().exp() / m[j - 1];
    }
    out
}

/// Whether `X_{i,j}` stays within a factor `1 +- eps` of `w_{i,j} / p` for all
/// `m <= j <= i <= bound`, and the first violation in scan order otherwise.
pub fn check_a_event(
    env: &Environment,
    params: &ModelParams,
    m: usize,
    eps: f64,
    bound: usize,
) -> Result<(bool, Option<(usize, usize)>)> {
    if eps.is_nan() || eps <= 0.0 || m < 1 || bound > env.len() {
        return Err(Error::InvalidInput(format!(
            "need eps > 0, m >= 1, bound <= n; got eps={eps}, m={m}, bound={bound}, n={}",
            env.len()
        )));
    }
    let p = params.stick_prob;
    let z = zeta(p);
    let upper = eps.ln_1p();
    let lower = (-eps).ln_1p();
    let mass = masses(env, params, bound);
    // ln(X_{i,j} p i^zeta / j^(zeta-1)) = alpha_j + beta_i with
    // alpha_j = -Lambda_{j-1} - ln M_j - (zeta-1) ln j + ln p,
    // beta_i = Lambda_i + zeta ln i, Lambda the prefix sum of y_k.
    let mut lambda = CompensatedSum::new();
    let mut best_hi = (f64::NEG_INFINITY, 0usize);
    let mut best_lo = (f64::INFINITY, 0usize);
    for i in 1..=bound {
        let li = (i as f64).ln();
        if i >= m {
            let alpha = -lambda.value() - mass[i - 1].ln() - (z - 1.0) * li + p.ln();
            if alpha > best_hi.0 {
                best_hi = (alpha, i);
            }
            if alpha < best_lo.0 {
                best_lo = (alpha, i);
            }
        }
        lambda.add(log_factor(mass[i - 1], env.sticky[i - 1]));
        if i >= m {
            let beta = lambda.value() + z * li;
            if best_hi.0 + beta >= upper {
                return Ok((false, Some((i, best_hi.1))));
            }
            if best_lo.0 + beta <= lower {
                return Ok((false, Some((i, best_lo.1))));
            }
        }
    }
    Ok((true, None))
}

/// `R_{i,j} = Y_{i,j} + zeta ln(i/j)` and its five-way split.
pub fn compute_r_split(
    env: &Environment,
    params: &ModelParams,
    i: usize,
    j: usize,
) -> (f64, [f64; 5]) {
    assert!(1 <= j && j <= i && i <= env.len(), "need 1 <= j <= i <= n");
    let p = params.stick_prob;
    let z = zeta(p);
    let mass = masses(env, params, i);
    let mut y = CompensatedSum::new();
    let mut harmonic = CompensatedSum::new();
    let mut r2 = CompensatedSum::new();
    let mut r3 = CompensatedSum::new();
    let mut r4 = CompensatedSum::new();
    for k in j..=i {
        let mk = mass[k - 1];
        let kf = k as f64;
        let eb = env.eta_bar(k, p);
        let mean_mass = p * (kf - 1.0) + 3.0;
        y.add(log_factor(mk, env.sticky[k - 1]));
        harmonic.add(1.0 / kf);
        r2.add(z / kf - 2.0 * (2.0 - p) / (mk + 1.0));
        r3.add(2.0 * eb * (1.0 / (mk + 1.0) - 1.0 / mean_mass));
        r4.add(2.0 * eb / mean_mass);
    }
    let log_ratio = (i as f64).ln() - (j as f64).ln();
    let r = y.value() + z * log_ratio;
    let r1 = z * (log_ratio - harmonic.value());
    let (r2, r3, r4) = (r2.value(), r3.value(), r4.value());
    let r5 = r - (r1 + r2 + r3 + r4);
    (r, [r1, r2, r3, r4, r5])
}

/// `max_{j <= i <= bound} |R_{i,j}|`.
pub fn r_sup(env: &Environment, params: &ModelParams, j: usize, bound: usize) -> f64 {
    let z = zeta(params.stick_prob);
    let mass = masses(env, params, bound);
    let lj = (j as f64).ln();
    let mut y = CompensatedSum::new();
    let mut best: f64 = 0.0;
    for i in j..=bound {
        y.add(log_factor(mass[i - 1], env.sticky[i - 1]));
        best = best.max((y.value() + z * ((i as f64).ln() - lj)).abs());
    }
    best
}

/// Every term of the expansion of `lhs = n^-1/2 sum_i xi_{i+1} (Vbar_i^2 - V_L^2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub n: usize,
    #[serde(rename = "V1n")]
    pub v1n: f64,
    #[serde(rename = "V2n")]
    pub v2n: f64,
    #[serde(rename = "W3n")]
    pub w3n: f64,
    #[serde(rename = "W4n")]
    pub w4n: f64,
    #[serde(rename = "Z1n")]
    pub z1n: f64,
    #[serde(rename = "Z2n")]
    pub z2n: f64,
    #[serde(rename = "Z3n")]
    pub z3n: f64,
    #[serde(rename = "Z3n_prime")]
    pub z3n_prime: f64,
    #[serde(rename = "Z3n_tilde")]
    pub z3n_tilde: f64,
    #[serde(rename = "Z4n")]
    pub z4n: f64,
    #[serde(rename = "Z5n")]
    pub z5n: f64,
    #[serde(rename = "Z6n")]
    pub z6n: f64,
    #[serde(rename = "Gn")]
    pub gn: f64,
    #[serde(rename = "Hn")]
    pub hn: f64,
    pub lhs: f64,
    /// Deviation of the Riemann sum from its integral, weighted by `xi_{i+1}`.
    pub riemann: f64,
    /// Contributions of `R^(1)..R^(5)` to `Z3n_prime`.
    pub r_parts: [f64; 5],
    /// `Riemann + (Z1 + R2 part) + Z2 + R1 part + R5 part + Z6 + Z3n_tilde + (R4 part - Z4)`.
    pub residual: f64,
    #[serde(skip)]
    pub a_jn: Vec<f64>,
    #[serde(skip)]
    pub l_kn: Vec<f64>,
}

impl DecompositionReport {
    /// `lhs - (Gn + Hn + residual)`; zero up to rounding.
    pub fn reconstruction_error(&self) -> f64 {
        self.lhs - (self.gn + self.hn + self.residual)
    }

    /// `lhs` minus the pieces of the exact split; zero up to rounding.
    pub fn identity_error(&self) -> f64 {
        self.lhs
            - (self.riemann
                + self.v1n
                + self.v2n
                + self.w3n
                + self.w4n
                + self.z1n
                + self.z2n
                + self.z3n_prime
                + self.z3n_tilde)
    }

    /// `W3n` evaluated from its coefficient form.
    pub fn w3n_from_coefficients(&self, env: &Environment, params: &ModelParams) -> f64 {
        let mu = params.mean_gap();
        let pref = 2.0 * params.force * mu / (params.stick_prob * (self.n as f64).sqrt());
        let acc: CompensatedSum = self
            .a_jn
            .iter()
            .enumerate()
            .map(|(j, a)| a * env.xi_bar(j + 1, mu))
            .collect();
        pref * acc.value()
    }

    /// `Z5n` evaluated from the `L_{k,n}` coefficients.
    pub fn z5n_from_coefficients(&self, env: &Environment, params: &ModelParams) -> f64 {
        let p = params.stick_prob;
        let mu = params.mean_gap();
        let pref = 4.0 * params.force * mu * mu / (p * (self.n as f64).sqrt());
        let mut m_bar = 0.0;
        let mut acc = CompensatedSum::new();
        for (k0, l) in self.l_kn.iter().enumerate() {
            let k = k0 + 1;
            let kf = k as f64;
            let eb = env.eta_bar(k, p);
            let mean_mass = p * (kf - 1.0) + 3.0;
            acc.add(l * kf * kf * eb * m_bar / (mean_mass * mean_mass));
            m_bar -= eb;
        }
        pref * acc.value()
    }
}

/// Accumulator for `Psi(g)_i = sum_{j<=i} w_{i,j} sum_{k=j..i} g_k`.
#[derive(Debug, Default, Clone, Copy)]
struct Psi {
    value: f64,
}

impl Psi {
    fn step(&mut self, r: f64, g: f64, s: f64) -> f64 {
        self.value = self.value * r + g * s;
        self.value
    }
}

fn check_length(env: &Environment, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if env.len() < n + 1 {
        return Err(Error::InsufficientData {
            needed: n + 1,
            got: env.len(),
        });
    }
    Ok(())
}

fn lhs_sum(env: &Environment, params: &ModelParams, n: usize, v_limit: f64) -> f64 {
    let traj = simulate_modified(&env.truncated(n), params);
    let v2l = v_limit * v_limit;
    let acc: CompensatedSum = (1..=n)
        .map(|i| env.xi(i + 1) * (traj.v2_out[i - 1] - v2l))
        .collect();
    acc.value() / (n as f64).sqrt()
}

struct Prefactors {
    gap: f64,
    gap_p: f64,
    gap2: f64,
    gap2_p: f64,
}

impl Prefactors {
    fn new(params: &ModelParams, n: usize) -> Self {
        let f = params.force;
        let mu = params.mean_gap();
        let p = params.stick_prob;
        let sn = (n as f64).sqrt();
        Self {
            gap: 2.0 * f * mu / sn,
            gap_p: 2.0 * f * mu / (p * sn),
            gap2: 2.0 * f * mu * mu / sn,
            gap2_p: 2.0 * f * mu * mu / (p * sn),
        }
    }
}

#[derive(Default)]
struct Sums {
    v1: CompensatedSum,
    v2: CompensatedSum,
    w3: CompensatedSum,
    w4: CompensatedSum,
    z1: CompensatedSum,
    z2: CompensatedSum,
    z3: CompensatedSum,
    z4: CompensatedSum,
    z5: CompensatedSum,
    c: [CompensatedSum; 5],
    riemann: CompensatedSum,
}

fn assemble(sums: Sums, env: &Environment, params: &ModelParams, n: usize) -> DecompositionReport {
    let f = params.force;
    let z = zeta(params.stick_prob);
    let pre = Prefactors::new(params, n);
    let sn = (n as f64).sqrt();
    let v1n = 2.0 * f / sn * sums.v1.value();
    let v2n = pre.gap * sums.v2.value();
    let w3n = pre.gap_p * sums.w3.value();
    let w4n = pre.gap * sums.w4.value();
    let z1n = pre.gap2 * sums.z1.value();
    let z2n = pre.gap2 * sums.z2.value();
    let z3n = pre.gap2 * sums.z3.value();
    let r_parts = sums.c.map(|c| pre.gap2_p * c.value());
    let z3n_prime: f64 = r_parts.iter().sum();
    let z3n_tilde = z3n - z3n_prime;
    let z4n = 2.0 * pre.gap2_p / z * sums.z4.value();
    let z5n = 2.0 * pre.gap2_p * sums.z5.value();
    let z6n = r_parts[2] - z5n;
    let riemann = pre.gap_p * sums.riemann.value();
    let gn = w3n + z4n;
    let hn = v1n + v2n + w4n + z5n;
    let residual = riemann
        + (z1n + r_parts[1])
        + z2n
        + r_parts[0]
        + r_parts[4]
        + z6n
        + z3n_tilde
        + (r_parts[3] - z4n);
    let lhs = lhs_sum(env, params, n, theory_constants(params).v_limit);
    DecompositionReport {
        n,
        v1n,
        v2n,
        w3n,
        w4n,
        z1n,
        z2n,
        z3n,
        z3n_prime,
        z3n_tilde,
        z4n,
        z5n,
        z6n,
        gn,
        hn,
        lhs,
        riemann,
        r_parts,
        residual,
        a_jn: w3_coefficients(z, n),
        l_kn: z5_coefficients(z, n),
    }
}

/// Evaluate every term in one pass over `i = 1..n`.
pub fn decompose(env: &Environment, params: &ModelParams, n: usize) -> Result<DecompositionReport> {
    params.validate()?;
    check_length(env, n)?;
    let p = params.stick_prob;
    let mu = params.mean_gap();
    let z = zeta(p);
    let mass = masses(env, params, n);

    let mut sums = Sums::default();
    // Running sums over j <= i, each updated from i-1 to i.
    let (mut b, mut c, mut g, mut h, mut k_, mut l_, mut u) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut s, mut rho) = (0.0, 0.0);
    let mut harm = Psi::default();
    let mut psi = [Psi::default(); 4];
    let mut psi_z5 = Psi::default();
    let mut m_bar = 0.0;

    for i in 1..=n {
        let fi = i as f64;
        let r = decay_ratio(i, z);
        let mi = mass[i - 1];
        let sticky = env.sticky[i - 1];
        let f2 = collision_factor_sq(mi, sticky);
        let xb = env.xi_bar(i, mu);
        let eb = env.eta_bar(i, p);
        let xb_next = env.xi_bar(i + 1, mu);

        s = s * r + 1.0 / fi;
        let d = s / p;
        b = f2 * (b + xb / mi);
        c = f2 * (c + 1.0 / mi);
        g = g * r + xb / fi;
        let dev = 1.0 / mi - 1.0 / (p * fi);
        h = h * r + dev;
        k_ = f2 * (k_ + dev);
        l_ = f2 * (l_ + 1.0 / (p * fi));
        if i > 1 {
            let prev = i - 1;
            u = r * (u + env.eta_bar(prev, p) / prev as f64);
        }
        rho = rho * r + fi.ln() / fi;

        let y = log_factor(mi, sticky);
        let mean_mass = p * (fi - 1.0) + 3.0;
        let harm_i = harm.step(r, z / fi, s);
        let g2 = z / fi - 2.0 * (2.0 - p) / (mi + 1.0);
        let g3 = 2.0 * eb * (1.0 / (mi + 1.0) - 1.0 / mean_mass);
        let g4 = 2.0 * eb / mean_mass;
        let g5 = y + 2.0 * (2.0 - env.eta(i)) / (mi + 1.0);
        let log_part = z * (fi.ln() * s - rho);

        sums.v1.add(xb_next * b);
        sums.v2.add(xb_next * (c - d));
        sums.w3.add(g);
        sums.w4.add(b - g / p);
        sums.z1.add(h);
        sums.z2.add(k_ - h);
        sums.z3.add(l_ - d);
        sums.z4.add(u);
        sums.c[0].add(log_part - harm_i);
        sums.c[1].add(psi[0].step(r, g2, s));
        sums.c[2].add(psi[1].step(r, g3, s));
        sums.c[3].add(psi[2].step(r, g4, s));
        sums.c[4].add(psi[3].step(r, g5, s));
        sums.z5
            .add(psi_z5.step(r, eb * m_bar / (mean_mass * mean_mass), s));
        sums.riemann.add(env.xi(i + 1) * (s - 1.0 / z));
        m_bar -= eb;
    }
    Ok(assemble(sums, env, params, n))
}

/// Largest `n` accepted by [`decompose_direct`].
pub const DIRECT_MAX_N: usize = 2000;

/// Quadratic-cost evaluation of every term straight from its double-sum form.
pub fn decompose_direct(
    env: &Environment,
    params: &ModelParams,
    n: usize,
) -> Result<DecompositionReport> {
    params.validate()?;
    check_length(env, n)?;
    if n > DIRECT_MAX_N {
        return Err(Error::InvalidInput(format!(
            "direct evaluation limited to n <= {DIRECT_MAX_N}"
        )));
    }
    let p = params.stick_prob;
    let mu = params.mean_gap();
    let z = zeta(p);
    let mass = masses(env, params, n);
    let eta_bar: Vec<f64> = (1..=n).map(|k| env.eta_bar(k, p)).collect();
    let mut m_bar = vec![0.0; n + 1];
    for k in 1..=n {
        m_bar[k] = m_bar[k - 1] - eta_bar[k - 1];
    }
    let mut sums = Sums::default();
    for j in 1..=n {
        let fj = j as f64;
        let mj = mass[j - 1];
        let xbj = env.xi_bar(j, mu);
        let mut y = 0.0;
        let mut harmonic = 0.0;
        let (mut r2, mut r3, mut r4, mut z5) = (0.0, 0.0, 0.0, 0.0);
        for i in j..=n {
            let fi = i as f64;
            let mi = mass[i - 1];
            let eb = eta_bar[i - 1];
            let mean_mass = p * (fi - 1.0) + 3.0;
            y += log_factor(mi, env.sticky[i - 1]);
            harmonic += 1.0 / fi;
            r2 += z / fi - 2.0 * (2.0 - p) / (mi + 1.0);
            r3 += 2.0 * eb * (1.0 / (mi + 1.0) - 1.0 / mean_mass);
            r4 += 2.0 * eb / mean_mass;
            z5 += eb * m_bar[i - 1] / (mean_mass * mean_mass);

            let e = y.exp();
            let x = e / mj;
            let log_ratio = fi.ln() - fj.ln();
            let w = ((z - 1.0) * fj.ln() - z * fi.ln()).exp();
            let pw = (-z * log_ratio).exp();
            let xb_next = env.xi_bar(i + 1, mu);
            let dev = 1.0 / mj - 1.0 / (p * fj);
            let r = y + z * log_ratio;
            let r1 = z * (log_ratio - harmonic);

            sums.v1.add(xb_next * xbj * x);
            sums.v2.add(xb_next * (x - w / p));
            sums.w3.add(w * xbj);
            sums.w4.add(xbj * (x - w / p));
            sums.z1.add(dev * pw);
            sums.z2.add(dev * (e - pw));
            sums.z3.add((e - pw) / (p * fj));
            sums.c[0].add(w * r1);
            sums.c[1].add(w * r2);
            sums.c[2].add(w * r3);
            sums.c[3].add(w * r4);
            sums.c[4].add(w * (r - r1 - r2 - r3 - r4));
            sums.z5.add(w * z5);
        }
    }
    for i in 1..=n {
        let fi = i as f64;
        let mut s = 0.0;
        for j in 1..=i {
            let fj = j as f64;
            s += ((z - 1.0) * fj.ln() - z * fi.ln()).exp();
            if j < i {
                sums.z4
                    .add(((z - 1.0) * fj.ln() - z * fi.ln()).exp() * eta_bar[j - 1]);
            }
        }
        sums.riemann.add(env.xi(i + 1) * (s - 1.0 / z));
    }
    Ok(assemble(sums, env, params, n))
}
