use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::OptimizerError;

/// A concrete parameter value as stored in trial records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    /// Numeric view (bools map to 0/1).
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(x) => Some(x),
            ParamValue::Str(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            ParamValue::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(x: f64) -> Self {
        ParamValue::Float(x)
    }
}

impl From<i64> for ParamValue {
    fn from(x: i64) -> Self {
        ParamValue::Int(x)
    }
}

impl From<bool> for ParamValue {
    fn from(x: bool) -> Self {
        ParamValue::Bool(x)
    }
}

impl From<&str> for ParamValue {
    fn from(x: &str) -> Self {
        ParamValue::Str(x.to_owned())
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
    Categorical { choices: Vec<ParamValue> },
}

/// The parameter is only active when `param` took the value `equals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub param: String,
    pub equals: ParamValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub name: String,
    #[serde(flatten)]
    pub kind: DomainKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<Condition>,
}

impl ParamDomain {
    pub fn uniform(name: &str, low: f64, high: f64) -> Self {
        Self { name: name.into(), kind: DomainKind::Uniform { low, high }, when: None }
    }

    pub fn log_uniform(name: &str, low: f64, high: f64) -> Self {
        Self { name: name.into(), kind: DomainKind::LogUniform { low, high }, when: None }
    }

    pub fn categorical(name: &str, choices: impl IntoIterator<Item = ParamValue>) -> Self {
        Self {
            name: name.into(),
            kind: DomainKind::Categorical { choices: choices.into_iter().collect() },
            when: None,
        }
    }

    pub fn when(mut self, param: &str, equals: impl Into<ParamValue>) -> Self {
        self.when = Some(Condition { param: param.into(), equals: equals.into() });
        self
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match &self.kind {
            DomainKind::Uniform { low, high } | DomainKind::LogUniform { low, high } => {
                v.as_f64().is_some_and(|x| !matches!(v, ParamValue::Bool(_)) && x >= *low && x <= *high)
            }
            DomainKind::Categorical { choices } => choices.contains(v),
        }
    }

    /// Whether the parameter applies given the values chosen so far.
    pub fn is_active(&self, params: &Params) -> bool {
        match &self.when {
            None => true,
            Some(c) => params.get(&c.param) == Some(&c.equals),
        }
    }

    fn validate(&self) -> Result<(), OptimizerError> {
        let err = |reason: &str| {
            Err(OptimizerError::InvalidDomain { name: self.name.clone(), reason: reason.into() })
        };
        match &self.kind {
            DomainKind::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return err("uniform bounds must be finite with low < high");
                }
            }
            DomainKind::LogUniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low > 0.0 && low < high) {
                    return err("log-uniform bounds must satisfy 0 < low < high");
                }
            }
            DomainKind::Categorical { choices } => {
                if choices.is_empty() {
                    return err("categorical choices must be non-empty");
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return err("categorical choices must be distinct");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered list of parameter domains; conditions may only refer to earlier parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    #[serde(rename = "param")]
    pub params: Vec<ParamDomain>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamDomain>) -> Result<Self, OptimizerError> {
        let s = Self { params };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.params.is_empty() {
            return Err(OptimizerError::EmptySpace);
        }
        let mut seen = HashSet::new();
        for p in &self.params {
            p.validate()?;
            if let Some(c) = &p.when {
                if !seen.contains(c.param.as_str()) {
                    return Err(OptimizerError::BadCondition { param: p.name.clone(), parent: c.param.clone() });
                }
            }
            if !seen.insert(p.name.as_str()) {
                return Err(OptimizerError::DuplicateParam(p.name.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamDomain> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Checks that `params` holds exactly the active parameters, each inside its domain.
    pub fn check(&self, params: &Params) -> Result<(), String> {
        let mut active = Params::new();
        for d in &self.params {
            if !d.is_active(&active) {
                if params.contains_key(&d.name) {
                    return Err(format!("parameter '{}' is inactive but present", d.name));
                }
                continue;
            }
            let v = params.get(&d.name).ok_or_else(|| format!("missing parameter '{}'", d.name))?;
            if !d.contains(v) {
                return Err(format!("value {v} outside the domain of '{}'", d.name));
            }
            active.insert(d.name.clone(), v.clone());
        }
        if let Some(extra) = params.keys().find(|k| self.get(k).is_none()) {
            return Err(format!("unknown parameter '{extra}'"));
        }
        Ok(())
    }
}
