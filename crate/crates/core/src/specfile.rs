//! JSON description of a system and its canonical serialization.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Point;
use crate::ifs::{Angle, IfsError, IfsSystem, IsometryType, Similitude};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid spec JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("map {0} must give exactly one of \"angle\" and \"irrational_angle\"")]
    AngleChoice(usize),
    #[error("map {index}: {source}")]
    Map { index: usize, source: IfsError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: i64,
    pub den: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub ratio: f64,
    #[serde(default)]
    pub angle: Option<Fraction>,
    #[serde(default)]
    pub irrational_angle: Option<f64>,
    #[serde(default)]
    pub reflect: bool,
    pub w: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub maps: Vec<MapSpec>,
}

impl MapSpec {
    pub fn similitude(&self, index: usize) -> Result<Similitude, SpecError> {
        let angle = match (self.angle, self.irrational_angle) {
            (Some(f), None) => Angle::rational(f.num, f.den),
            (None, Some(v)) => Ok(Angle::irrational(v)),
            _ => return Err(SpecError::AngleChoice(index)),
        }
        .map_err(|source| SpecError::Map { index, source })?;
        Similitude::new(
            self.ratio,
            IsometryType::new(angle, self.reflect),
            Point::from(self.w),
        )
        .map_err(|source| SpecError::Map { index, source })
    }

    pub fn from_similitude(m: &Similitude) -> Self {
        let t = m.isometry();
        let (angle, irrational_angle) = match t.angle {
            Angle::Rational { num, den } => (Some(Fraction { num, den }), None),
            Angle::Irrational(v) => (None, Some(v)),
        };
        MapSpec {
            ratio: m.ratio(),
            angle,
            irrational_angle,
            reflect: t.reflect,
            w: m.translation().into(),
        }
    }
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn similitudes(&self) -> Result<Vec<Similitude>, SpecError> {
        self.maps
            .iter()
            .enumerate()
            .map(|(i, m)| m.similitude(i))
            .collect()
    }

    /// The system as written, without normalization.
    pub fn system(&self) -> Result<IfsSystem, SpecError> {
        IfsSystem::new(self.similitudes()?).map_err(|source| SpecError::Map { index: 0, source })
    }

    pub fn from_system(sys: &IfsSystem) -> Self {
        SpecFile {
            maps: sys.maps().iter().map(MapSpec::from_similitude).collect(),
        }
    }

    pub fn canonical_json(&self) -> String {
        to_canonical_json(self)
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sorted keys, no whitespace, floats with 17 significant digits.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut out = String::new();
    write_canonical(&v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.push_str(&n.to_string());
            } else {
                out.push_str(&format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(x, out);
            }
            out.push(']');
        }
        Value::Object(o) => {
            let mut keys: Vec<&String> = o.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&o[k], out);
            }
            out.push('}');
        }
    }
}
