//! Model weights and their JSON file: a versioned flat map from names such
//! as `energy.cv_deviation` or `planner.lambda` to values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyWeights, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::io;
use crate::planner::{PlannerWeights, PLAN_FEATURE_NAMES};

pub const WEIGHTS_FORMAT: &str = "structdrive.weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelWeights {
    pub energy: EnergyWeights,
    pub planner: PlannerWeights,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    weights: BTreeMap<String, f64>,
}

impl ModelWeights {
    pub fn zero() -> Self {
        ModelWeights {
            energy: EnergyWeights::zero(),
            planner: PlannerWeights::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        self.planner.validate()
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (name, w) in FEATURE_NAMES.iter().zip(self.energy.unary) {
            m.insert(format!("energy.{name}"), w);
        }
        m.insert("energy.gamma".into(), self.energy.gamma);
        for (name, w) in PLAN_FEATURE_NAMES.iter().zip(self.planner.traj) {
            m.insert(format!("planner.{name}"), w);
        }
        m.insert("planner.lambda".into(), self.planner.lambda);
        m
    }

    pub fn from_map(mut m: BTreeMap<String, f64>) -> Result<Self> {
        let mut take = |key: String| {
            m.remove(&key)
                .ok_or_else(|| Error::config(format!("weights file lacks `{key}`")))
        };
        let mut w = ModelWeights::zero();
        for (slot, name) in w.energy.unary.iter_mut().zip(FEATURE_NAMES) {
            *slot = take(format!("energy.{name}"))?;
        }
        w.energy.gamma = take("energy.gamma".into())?;
        for (slot, name) in w.planner.traj.iter_mut().zip(PLAN_FEATURE_NAMES) {
            *slot = take(format!("planner.{name}"))?;
        }
        w.planner.lambda = take("planner.lambda".into())?;
        if let Some(extra) = m.keys().next() {
            return Err(Error::config(format!("unknown weight `{extra}`")));
        }
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = WeightsFile {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            weights: self.to_map(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let file: WeightsFile = io::parse_json(path, text)?;
        if file.format != WEIGHTS_FORMAT {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("unexpected format `{}`", file.format),
            });
        }
        if file.version != WEIGHTS_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                what: "weights file",
                found: file.version,
                expected: WEIGHTS_VERSION,
            });
        }
        ModelWeights::from_map(file.weights).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelWeights::from_json(path, &io::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_strictness() {
        let w = ModelWeights::default();
        let p = Path::new("w.json");
        assert_eq!(ModelWeights::from_json(p, &w.to_json().unwrap()).unwrap(), w);
        let mut m = w.to_map();
        m.insert("energy.bogus".into(), 1.0);
        assert!(ModelWeights::from_map(m).is_err());
        let mut m = w.to_map();
        m.remove("planner.lambda");
        assert!(ModelWeights::from_map(m).is_err());
        let v2 = w.to_json().unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            ModelWeights::from_json(p, &v2),
            Err(Error::Version { found: 2, .. })
        ));
    }
}
