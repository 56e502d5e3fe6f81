//! JSON schemas for measures, moduli and domains.

use serde::{Deserialize, Serialize};

use crate::geometry::Domain;
use crate::measure::{MeasureKind, SphericalMeasure};
use crate::modulus::{Modulus, ModulusKind};
use crate::{c, f, Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomConfig {
    pub dir: Vec<f64>,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Uniform {
        mass: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Atoms {
        atoms: Vec<AtomConfig>,
    },
    Density {
        nodes: Vec<Vec<f64>>,
        weights: Vec<f64>,
        values: Vec<f64>,
    },
}

impl MeasureConfig {
    /// `dim` is used for the uniform variant when the config leaves it out.
    pub fn build<T: Real>(&self, dim: usize) -> Result<SphericalMeasure<T>> {
        match self {
            MeasureConfig::Uniform { mass, dim: d } => SphericalMeasure::uniform(d.unwrap_or(dim), c(*mass)),
            MeasureConfig::Atoms { atoms } => {
                let dirs = atoms.iter().map(|a| a.dir.iter().map(|&x| c(x)).collect()).collect();
                let w = atoms.iter().map(|a| c(a.w)).collect();
                SphericalMeasure::atoms(atoms.first().map_or(dim, |a| a.dir.len()), dirs, w)
            }
            MeasureConfig::Density { nodes, weights, values } => SphericalMeasure::density(
                nodes.first().map_or(dim, |n| n.len()),
                nodes.iter().map(|n| n.iter().map(|&x| c(x)).collect()).collect(),
                weights.iter().map(|&x| c(x)).collect(),
                values.iter().map(|&x| c(x)).collect(),
            ),
        }
    }

    pub fn from_measure<T: Real>(m: &SphericalMeasure<T>) -> Self {
        let v = |x: &[T]| x.iter().map(|&y| f(y)).collect::<Vec<_>>();
        match &m.kind {
            MeasureKind::Uniform { mass } => MeasureConfig::Uniform { mass: f(*mass), dim: Some(m.dim) },
            MeasureKind::Atoms { dirs, weights } => MeasureConfig::Atoms {
                atoms: dirs.iter().zip(weights).map(|(d, &w)| AtomConfig { dir: v(d), w: f(w) }).collect(),
            },
            MeasureKind::Density { nodes, weights, values } => MeasureConfig::Density {
                nodes: nodes.iter().map(|n| v(n)).collect(),
                weights: v(weights),
                values: v(values),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulusConfig {
    Power { alpha: f64 },
    LogPower { p: f64 },
    Linear { cap: f64 },
    Table { t: Vec<f64>, w: Vec<f64> },
}

impl ModulusConfig {
    pub fn build<T: Real>(&self) -> Result<Modulus<T>> {
        match self {
            ModulusConfig::Power { alpha } => Modulus::power(c(*alpha)),
            ModulusConfig::LogPower { p } => Modulus::log_power(c(*p)),
            ModulusConfig::Linear { cap } => Modulus::linear(c(*cap)),
            ModulusConfig::Table { t, w } => {
                Modulus::table(t.iter().map(|&x| c(x)).collect(), w.iter().map(|&x| c(x)).collect())
            }
        }
    }

    pub fn from_modulus<T: Real>(m: &Modulus<T>) -> Self {
        match &m.kind {
            ModulusKind::Power { alpha } => ModulusConfig::Power { alpha: f(*alpha) },
            ModulusKind::LogPower { p } => ModulusConfig::LogPower { p: f(*p) },
            ModulusKind::Linear { cap } => ModulusConfig::Linear { cap: f(*cap) },
            ModulusKind::Table(tab) => ModulusConfig::Table {
                t: tab.t.iter().map(|&x| f(x)).collect(),
                w: tab.v.iter().map(|&x| f(x)).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Interval { a: f64, b: f64 },
    Ball { c: Vec<f64>, r: f64 },
    DiniGraph { modulus: ModulusConfig, window: f64 },
    /// L-shaped domain (-h, h)^2 minus the quadrant [0, h) x (-h, 0].
    Corner { half: f64 },
}

impl DomainConfig {
    pub fn build<T: Real>(&self) -> Result<Domain<T>> {
        match self {
            DomainConfig::Interval { a, b } => Domain::interval(c(*a), c(*b)),
            DomainConfig::Ball { c: center, r } => Domain::ball(center.iter().map(|&x| c(x)).collect(), c(*r)),
            DomainConfig::DiniGraph { modulus, window } => Domain::dini_graph(modulus.build()?, c(*window)),
            DomainConfig::Corner { half } => Domain::corner(c(*half)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainConfig::Interval { .. } => 1,
            DomainConfig::Ball { c, .. } => c.len(),
            DomainConfig::DiniGraph { .. } | DomainConfig::Corner { .. } => 2,
        }
    }
}

/// Parses any of the schemas from a JSON string, mapping failures to
/// [`Error::Schema`].
pub fn parse<'a, S: Deserialize<'a>>(text: &'a str) -> Result<S> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_round_trip() {
        let text = r#"{"type":"atoms","atoms":[{"dir":[1.0,0.0],"w":0.5},{"dir":[0.0,1.0],"w":0.5}]}"#;
        let cfg: MeasureConfig = parse(text).unwrap();
        let m: SphericalMeasure<f64> = cfg.build(2).unwrap();
        assert_eq!(MeasureConfig::from_measure(&m), cfg);
        let again: MeasureConfig = parse(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_type_is_schema_error() {
        let r: Result<MeasureConfig> = parse(r#"{"type":"cauchy","mass":1}"#);
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn domain_and_modulus() {
        let d: DomainConfig = parse(r#"{"type":"dini_graph","modulus":{"type":"log_power","p":2},"window":1}"#).unwrap();
        assert_eq!(d.dim(), 2);
        let dom: Domain<f64> = d.build().unwrap();
        assert!(dom.contains(&[0.0, 0.5]));
    }
}
