//! Experiment configuration: schema, validation, overrides and hashing.

use std::collections::BTreeMap;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stabound::config::{DomainConfig, MeasureConfig, ModulusConfig};
use stabound::{Error, Result};

use crate::checks::{CHECKS, TOLERANCES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub s: f64,
    pub measure: MeasureConfig,
    #[serde(default = "default_true")]
    pub pub_flag: bool,
}

fn default_true() -> bool {
    true
}

/// Right-hand side: a constant or an expression in x, y (or x0, x1, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Constant { value: f64 },
    Expr { expr: String },
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Constant { value: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<ModulusConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub f: SourceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = stabound::config::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(op) = &self.operator {
            if !(op.s > 0.0 && op.s < 1.0) {
                return Err(schema(format!("s = {} not in (0, 1)", op.s)));
            }
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h < 1.0) {
                return Err(schema(format!("h = {h} not in (0, 1)")));
            }
        }
        for name in &self.checks {
            if !CHECKS.iter().any(|c| c.name == name) {
                return Err(schema(format!("unknown check '{name}'")));
            }
        }
        for (name, v) in &self.tolerances {
            if !TOLERANCES.iter().any(|t| t.0 == name) {
                return Err(schema(format!("unknown tolerance '{name}'")));
            }
            if !v.is_finite() {
                return Err(schema(format!("tolerance '{name}' is not finite")));
            }
        }
        let dim = self.domain.as_ref().map_or(1, |d| d.dim());
        Source::new(&self.f)?.eval(&vec![0.0; dim])?;
        if let (Some(op), Some(dom)) = (&self.operator, &self.domain) {
            let dim = op.measure.build::<f64>(dom.dim())?.dim;
            if dim != dom.dim() {
                return Err(schema(format!("measure dimension {dim} differs from domain dimension {}", dom.dim())));
            }
        }
        Ok(())
    }

    /// Applies command-line overrides and revalidates.
    pub fn override_with(&mut self, s: Option<f64>, h: Option<f64>, tolerances: &[(String, f64)]) -> Result<()> {
        if let Some(s) = s {
            match &mut self.operator {
                Some(op) => op.s = s,
                None => return Err(schema("--s given but the config has no operator")),
            }
        }
        if h.is_some() {
            self.h = h;
        }
        for (k, v) in tolerances {
            self.tolerances.insert(k.clone(), *v);
        }
        self.validate()
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let text = serde_json::to_string(&c).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        if let Some(v) = self.tolerances.get(name) {
            return *v;
        }
        TOLERANCES.iter().find(|t| t.0 == name).map(|t| t.1).expect("tolerance is registered")
    }
}

/// Parses `name=value`.
pub fn parse_tolerance(arg: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = arg.split_once('=').ok_or_else(|| format!("expected name=value, got '{arg}'"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("tolerance '{k}': {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Compiled right-hand side.
pub struct Source {
    kind: SourceKind,
}

enum SourceKind {
    Constant(f64),
    Expr(Node<DefaultNumericTypes>),
}

impl Source {
    pub fn new(cfg: &SourceConfig) -> Result<Self> {
        let kind = match cfg {
            SourceConfig::Constant { value } => SourceKind::Constant(*value),
            SourceConfig::Expr { expr } => {
                SourceKind::Expr(build_operator_tree(expr).map_err(|e| schema(format!("f: {e}")))?)
            }
        };
        Ok(Source { kind })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            SourceKind::Constant(v) => Ok(*v),
            SourceKind::Expr(node) => {
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                let names = ["x", "y", "z"];
                for (i, &v) in x.iter().enumerate() {
                    let set = |ctx: &mut HashMapContext, k: String| ctx.set_value(k, Value::Float(v));
                    set(&mut ctx, format!("x{i}")).map_err(|e| schema(e.to_string()))?;
                    if let Some(n) = names.get(i) {
                        set(&mut ctx, n.to_string()).map_err(|e| schema(e.to_string()))?;
                    }
                }
                node.eval_number_with_context(&ctx).map_err(|e| schema(format!("f at {x:?}: {e}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"operator":{"s":0.5,"measure":{"type":"uniform","mass":1}},"domain":{"type":"interval","a":-1,"b":1}}"#;

    #[test]
    fn s_bound_is_a_schema_error() {
        let text = BASE.replace("0.5", "1.0");
        assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_names_are_rejected() {
        let mut cfg = ExperimentConfig::parse(BASE).unwrap();
        cfg.checks.push("nope".into());
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::parse(BASE).unwrap();
        assert!(cfg.override_with(None, None, &[("nope".into(), 1.0)]).is_err());
        assert!(ExperimentConfig::parse(r#"{"extra":1}"#).is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let mut cfg = ExperimentConfig::parse(BASE).unwrap();
        let h = cfg.hash();
        cfg.out = Some("elsewhere".into());
        assert_eq!(cfg.hash(), h);
        cfg.h = Some(0.1);
        assert_ne!(cfg.hash(), h);
    }

    #[test]
    fn expression_source() {
        let src = Source::new(&SourceConfig::Expr { expr: "1 + x * y - x1".into() }).unwrap();
        assert_eq!(src.eval(&[2.0, 3.0]).unwrap(), 4.0);
        assert!(Source::new(&SourceConfig::Expr { expr: "(x".into() }).is_err());
        let text = format!(r#"{}, "f": {{"type": "expr", "expr": "1 + w"}}}}"#, &BASE[..BASE.len() - 1]);
        assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Schema(_))));
    }
}
