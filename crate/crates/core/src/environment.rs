//! Reproducible realizations of the random medium: inter-particle gaps and
//! stickiness flags.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::fmt17;

/// Law of a single inter-particle gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapKind {
    Exponential {
        mean: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// Deterministic gaps. Not absolutely continuous, so outside the
    /// hypotheses of the limit theorems; meant for hand-checkable tests.
    Constant {
        value: f64,
    },
}

impl GapKind {
    /// Analytic `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            GapKind::Exponential { mean } => (mean, mean * mean),
            GapKind::Uniform { lo, hi } => (0.5 * (lo + hi), (hi - lo) * (hi - lo) / 12.0),
            GapKind::Gamma { shape, scale } => (shape * scale, shape * scale * scale),
            GapKind::Constant { value } => (value, 0.0),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        let ok = match *self {
            GapKind::Exponential { mean } => mean.is_finite() && mean > 0.0,
            GapKind::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo,
            GapKind::Gamma { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
            GapKind::Constant { value } => value.is_finite() && value > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid gap distribution parameters: {self:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GapKindTag {
    Exponential,
    Uniform,
    Gamma,
    Constant,
}

/// Flat wire form of [`GapDistSpec`]; unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GapDistRaw {
    kind: GapKindTag,
    mean: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    shape: Option<f64>,
    scale: Option<f64>,
    value: Option<f64>,
    declared_mean: Option<f64>,
    declared_var: Option<f64>,
    // Derived; accepted so that serialized specs read back.
    #[allow(dead_code)]
    outside_theorem_hypotheses: Option<bool>,
}

/// Gap law together with its declared first two moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GapDistRaw")]
pub struct GapDistSpec {
    #[serde(flatten)]
    pub kind: GapKind,
    pub declared_mean: f64,
    pub declared_var: f64,
    pub outside_theorem_hypotheses: bool,
}

impl TryFrom<GapDistRaw> for GapDistSpec {
    type Error = String;

    fn try_from(raw: GapDistRaw) -> std::result::Result<Self, String> {
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| format!("missing field `{name}`"));
        let extra = |names: &[(&str, Option<f64>)]| -> std::result::Result<(), String> {
            match names.iter().find(|(_, v)| v.is_some()) {
                Some((name, _)) => Err(format!("field `{name}` does not apply to {:?}", raw.kind)),
                None => Ok(()),
            }
        };
        let kind = match raw.kind {
            GapKindTag::Exponential => {
                extra(&[
                    ("lo", raw.lo),
                    ("hi", raw.hi),
                    ("shape", raw.shape),
                    ("scale", raw.scale),
                    ("value", raw.value),
                ])?;
                GapKind::Exponential {
                    mean: need("mean", raw.mean)?,
                }
            }
            GapKindTag::Uniform => {
                extra(&[
                    ("mean", raw.mean),
                    ("shape", raw.shape),
                    ("scale", raw.scale),
                    ("value", raw.value),
                ])?;
                GapKind::Uniform {
                    lo: need("lo", raw.lo)?,
                    hi: need("hi", raw.hi)?,
                }
            }
            GapKindTag::Gamma => {
                extra(&[
                    ("mean", raw.mean),
                    ("lo", raw.lo),
                    ("hi", raw.hi),
                    ("value", raw.value),
                ])?;
                GapKind::Gamma {
                    shape: need("shape", raw.shape)?,
                    scale: need("scale", raw.scale)?,
                }
            }
            GapKindTag::Constant => {
                extra(&[
                    ("mean", raw.mean),
                    ("lo", raw.lo),
                    ("hi", raw.hi),
                    ("shape", raw.shape),
                    ("scale", raw.scale),
                ])?;
                GapKind::Constant {
                    value: need("value", raw.value)?,
                }
            }
        };
        let spec = GapDistSpec::from_kind(kind)?;
        let agree = |declared: Option<f64>, actual: f64| match declared {
            None => true,
            Some(d) => (d - actual).abs() <= 1e-12 * actual.abs().max(1.0),
        };
        if !agree(raw.declared_mean, spec.declared_mean) {
            return Err(format!(
                "declared_mean {:?} disagrees with analytic mean {}",
                raw.declared_mean, spec.declared_mean
            ));
        }
        if !agree(raw.declared_var, spec.declared_var) {
            return Err(format!(
                "declared_var {:?} disagrees with analytic variance {}",
                raw.declared_var, spec.declared_var
            ));
        }
        Ok(spec)
    }
}

impl GapDistSpec {
    pub fn from_kind(kind: GapKind) -> std::result::Result<Self, String> {
        kind.check()?;
        let (mean, var) = kind.moments();
        Ok(Self {
            kind,
            declared_mean: mean,
            declared_var: var,
            outside_theorem_hypotheses: matches!(kind, GapKind::Constant { .. }),
        })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Self::from_kind(GapKind::Exponential { mean }).map_err(Error::InvalidInput)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::from_kind(GapKind::Uniform { lo, hi }).map_err(Error::InvalidInput)
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::from_kind(GapKind::Gamma { shape, scale }).map_err(Error::InvalidInput)
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::from_kind(GapKind::Constant { value }).map_err(Error::InvalidInput)
    }

    pub(crate) fn check(&self) -> std::result::Result<(), String> {
        self.kind.check()?;
        let (mean, var) = self.kind.moments();
        if (mean - self.declared_mean).abs() > 1e-12 * mean.abs().max(1.0)
            || (var - self.declared_var).abs() > 1e-12 * var.abs().max(1.0)
        {
            return Err("declared moments disagree with the distribution".to_string());
        }
        Ok(())
    }

    fn sampler(&self) -> GapSampler {
        match self.kind {
            GapKind::Exponential { mean } => GapSampler::Exponential(mean),
            GapKind::Uniform { lo, hi } => GapSampler::Uniform(lo, hi),
            GapKind::Gamma { shape, scale } => {
                GapSampler::Gamma(Gamma::new(shape, scale).expect("validated gamma parameters"))
            }
            GapKind::Constant { value } => GapSampler::Constant(value),
        }
    }
}

/// Analytic mean and variance of the gap law.
pub fn moments(spec: &GapDistSpec) -> (f64, f64) {
    spec.kind.moments()
}

enum GapSampler {
    Exponential(f64),
    Uniform(f64, f64),
    Gamma(Gamma<f64>),
    Constant(f64),
}

impl GapSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match self {
                // Inverse CDF on (0, 1].
                GapSampler::Exponential(mean) => {
                    let u: f64 = rng.random();
                    -mean * (1.0 - u).ln()
                }
                GapSampler::Uniform(lo, hi) => lo + (hi - lo) * rng.random::<f64>(),
                GapSampler::Gamma(g) => g.sample(rng),
                GapSampler::Constant(v) => *v,
            };
            // Gaps must be strictly positive.
            if x > 0.0 {
                return x;
            }
        }
    }
}

/// Independent random stream for one trajectory: a ChaCha8 key derived from
/// the master seed, with the trajectory index selecting the stream.
pub fn trajectory_rng(master_seed: u64, trajectory_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory_index);
    rng
}

/// One realization of the medium.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub gaps: Vec<f64>,
    pub sticky: Vec<bool>,
    pub positions: Vec<f64>,
    pub seed: u64,
    pub trajectory_index: u64,
    pub params_digest: String,
}

impl Environment {
    /// Build from explicit gaps and flags.
    pub fn from_parts(gaps: Vec<f64>, sticky: Vec<bool>) -> Result<Self> {
        if gaps.is_empty() {
            return Err(Error::InvalidInput(
                "environment must contain at least one particle".into(),
            ));
        }
        if gaps.len() != sticky.len() {
            return Err(Error::InvalidInput(format!(
                "gaps ({}) and sticky ({}) lengths differ",
                gaps.len(),
                sticky.len()
            )));
        }
        if let Some(bad) = gaps.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "gaps must be positive and finite, got {bad}"
            )));
        }
        let positions = gaps
            .iter()
            .scan(0.0, |s, g| {
                *s += g;
                Some(*s)
            })
            .collect();
        Ok(Self {
            gaps,
            sticky,
            positions,
            seed: 0,
            trajectory_index: 0,
            params_digest: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    /// `eta_i` as 0/1 for 1-based particle index `i`.
    pub fn eta(&self, i: usize) -> f64 {
        if self.sticky[i - 1] {
            1.0
        } else {
            0.0
        }
    }

    /// `xi_i` for 1-based particle index `i`.
    pub fn xi(&self, i: usize) -> f64 {
        self.gaps[i - 1]
    }

    /// Centered gap `xi_i - mu`.
    pub fn xi_bar(&self, i: usize, mu: f64) -> f64 {
        self.gaps[i - 1] - mu
    }

    /// Centered stickiness `eta_i - p`.
    pub fn eta_bar(&self, i: usize, p: f64) -> f64 {
        self.eta(i) - p
    }

    /// Prefix of the first `n` particles.
    pub fn truncated(&self, n: usize) -> Environment {
        let n = n.min(self.len());
        Environment {
            gaps: self.gaps[..n].to_vec(),
            sticky: self.sticky[..n].to_vec(),
            positions: self.positions[..n].to_vec(),
            seed: self.seed,
            trajectory_index: self.trajectory_index,
            params_digest: self.params_digest.clone(),
        }
    }

    /// CSV with header `i,xi,eta,S`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "xi", "eta", "S"])?;
        for i in 0..self.len() {
            w.write_record([
                (i + 1).to_string(),
                fmt17(self.gaps[i]),
                u8::from(self.sticky[i]).to_string(),
                fmt17(self.positions[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["i", "xi", "eta", "S"] {
            return Err(Error::InvalidInput(format!(
                "unexpected environment header: {headers:?}"
            )));
        }
        let mut gaps = Vec::new();
        let mut sticky = Vec::new();
        let mut stored_positions = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let parse = |col: usize| -> Result<f64> {
                record[col].trim().parse::<f64>().map_err(|e| {
                    Error::InvalidInput(format!("row {}: column {}: {e}", row + 1, &headers[col]))
                })
            };
            let index = parse(0)?;
            if index != (row + 1) as f64 {
                return Err(Error::InvalidInput(format!(
                    "row {}: expected i = {}",
                    row + 1,
                    row + 1
                )));
            }
            gaps.push(parse(1)?);
            sticky.push(match record[2].trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "row {}: eta must be 0 or 1, got {other}",
                        row + 1
                    )))
                }
            });
            stored_positions.push(parse(3)?);
        }
        let env = Self::from_parts(gaps, sticky)?;
        for (i, (a, b)) in env.positions.iter().zip(&stored_positions).enumerate() {
            if (a - b).abs() > 1e-9 * b.abs().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "row {}: S = {b} inconsistent with cumulative gaps {a}",
                    i + 1
                )));
            }
        }
        Ok(env)
    }
}

/// Short hex digest identifying the parameters an environment was drawn under.
pub fn params_digest(params: &ModelParams) -> String {
    let bytes = serde_json::to_vec(params).expect("params serialize");
    Sha256::digest(&bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Draw `n` particles for trajectory `trajectory_index` under `master_seed`.
///
/// Draws are sequential (gap then flag, per particle), so environments of
/// different lengths from the same key share their common prefix.
pub fn sample_environment(
    params: &ModelParams,
    n: usize,
    master_seed: u64,
    trajectory_index: u64,
) -> Result<Environment> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    params.validate()?;
    let mut rng = trajectory_rng(master_seed, trajectory_index);
    let sampler = params.gap_dist.sampler();
    let p = params.stick_prob;
    let mut gaps = Vec::with_capacity(n);
    let mut sticky = Vec::with_capacity(n);
    for _ in 0..n {
        gaps.push(sampler.sample(&mut rng));
        let u: f64 = rng.random();
        sticky.push(u < p);
    }
    let mut env = Environment::from_parts(gaps, sticky)?;
    env.seed = master_seed;
    env.trajectory_index = trajectory_index;
    env.params_digest = params_digest(params);
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gaps: GapDistSpec, p: f64) -> ModelParams {
        ModelParams::new(1.0, p, gaps).unwrap()
    }

    #[test]
    fn moments_examples() {
        assert_eq!(moments(&GapDistSpec::exponential(2.0).unwrap()), (2.0, 4.0));
        let (m, v) = moments(&GapDistSpec::uniform(0.0, 1.0).unwrap());
        assert_eq!(m, 0.5);
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(moments(&GapDistSpec::constant(3.0).unwrap()), (3.0, 0.0));
        assert!(
            GapDistSpec::constant(3.0)
                .unwrap()
                .outside_theorem_hypotheses
        );
        assert!(
            !GapDistSpec::exponential(1.0)
                .unwrap()
                .outside_theorem_hypotheses
        );
    }

    #[test]
    fn all_sticky_when_p_is_one() {
        let env = sample_environment(
            &params(GapDistSpec::exponential(1.0).unwrap(), 1.0),
            5,
            9,
            0,
        )
        .unwrap();
        assert!(env.sticky.iter().all(|&s| s));
    }

    #[test]
    fn constant_gap_positions() {
        let env =
            sample_environment(&params(GapDistSpec::constant(1.0).unwrap(), 0.5), 3, 1, 0).unwrap();
        assert_eq!(env.positions, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_length_rejected() {
        let p = params(GapDistSpec::exponential(1.0).unwrap(), 0.5);
        assert!(matches!(
            sample_environment(&p, 0, 1, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn reproducible_and_stream_separated() {
        let p = params(GapDistSpec::exponential(1.0).unwrap(), 0.5);
        let a = sample_environment(&p, 100, 42, 3).unwrap();
        let b = sample_environment(&p, 100, 42, 3).unwrap();
        let c = sample_environment(&p, 100, 42, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.gaps, c.gaps);
        let longer = sample_environment(&p, 200, 42, 3).unwrap();
        assert_eq!(&longer.gaps[..100], &a.gaps[..]);
        assert_eq!(&longer.sticky[..100], &a.sticky[..]);
    }

    #[test]
    fn exponential_mean_lln_band() {
        let p = params(GapDistSpec::exponential(1.0).unwrap(), 0.5);
        let env = sample_environment(&p, 1_000_000, 2024, 0).unwrap();
        let mean = env.gaps.iter().sum::<f64>() / env.len() as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn empirical_moments_within_four_standard_errors() {
        let kinds = [
            GapDistSpec::exponential(1.5).unwrap(),
            GapDistSpec::uniform(0.5, 2.0).unwrap(),
            GapDistSpec::gamma(2.5, 0.4).unwrap(),
            GapDistSpec::gamma(0.5, 2.0).unwrap(),
        ];
        let n = 1_000_000;
        for spec in kinds {
            let env = sample_environment(&params(spec.clone(), 0.5), n, 7, 1).unwrap();
            let nf = n as f64;
            let mean = env.gaps.iter().sum::<f64>() / nf;
            let var = env.gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            let m4 = env.gaps.iter().map(|g| (g - mean).powi(4)).sum::<f64>() / nf;
            let se_mean = (spec.declared_var / nf).sqrt();
            let se_var = ((m4 - var * var) / nf).sqrt();
            assert!(
                (mean - spec.declared_mean).abs() < 4.0 * se_mean,
                "{spec:?}: mean {mean}"
            );
            assert!(
                (var - spec.declared_var).abs() < 4.0 * se_var,
                "{spec:?}: var {var}"
            );
        }
    }

    #[test]
    fn sticky_fraction_matches_p() {
        let p = params(GapDistSpec::exponential(1.0).unwrap(), 0.3);
        let env = sample_environment(&p, 200_000, 5, 2).unwrap();
        let frac = env.sticky.iter().filter(|&&s| s).count() as f64 / env.len() as f64;
        let se = (0.3f64 * 0.7 / env.len() as f64).sqrt();
        assert!((frac - 0.3).abs() < 4.0 * se);
    }

    #[test]
    fn csv_round_trip() {
        let p = params(GapDistSpec::gamma(2.0, 0.5).unwrap(), 0.5);
        let env = sample_environment(&p, 50, 11, 0).unwrap();
        let mut buf = Vec::new();
        env.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,xi,eta,S\n"));
        let back = Environment::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.gaps, env.gaps);
        assert_eq!(back.sticky, env.sticky);
        assert_eq!(back.positions, env.positions);
    }

    #[test]
    fn csv_rejects_inconsistent_positions() {
        let text = "i,xi,eta,S\n1,1.0,1,1.0\n2,1.0,0,5.0\n";
        assert!(Environment::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn gap_spec_json_checks_declared_moments() {
        let ok: GapDistSpec =
            serde_json::from_str(r#"{"kind":"exponential","mean":2.0,"declared_var":4.0}"#)
                .unwrap();
        assert_eq!(ok.declared_mean, 2.0);
        let bad = serde_json::from_str::<GapDistSpec>(
            r#"{"kind":"exponential","mean":2.0,"declared_mean":1.0}"#,
        );
        assert!(bad.is_err());
        let unknown =
            serde_json::from_str::<GapDistSpec>(r#"{"kind":"exponential","mean":2.0,"rate":1.0}"#);
        assert!(unknown.is_err());
        let back: GapDistSpec = serde_json::from_str(&serde_json::to_string(&ok).unwrap()).unwrap();
        assert_eq!(back, ok);
    }
}
