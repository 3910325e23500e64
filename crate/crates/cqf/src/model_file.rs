//! The JSON model document: `plant {n, m, theta, R, N}`,
//! `observer {nu, p, mu, vartheta, r, N1, N2, pi_columns}`, `cost {F, G}`.
//!
//! Matrices are row-major nested arrays and `pi_columns` lists 1-based
//! column indices of the plant field. The declared sizes are redundant with
//! the matrix shapes and are cross-checked on load.

use std::path::Path;

use cqf_core::model::{self, CostSpec, Model, ObserverSpec, PlantSpec, Selector};
use cqf_core::{Mat, Violation};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::report::SCHEMA;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub n: usize,
    pub m: usize,
    pub theta: Mat,
    #[serde(rename = "R")]
    pub energy: Mat,
    #[serde(rename = "N")]
    pub coupling: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverFile {
    pub nu: usize,
    pub p: usize,
    pub mu: usize,
    pub vartheta: Mat,
    pub r: Mat,
    #[serde(rename = "N1")]
    pub n1: Mat,
    #[serde(rename = "N2")]
    pub n2: Mat,
    pub pi_columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(rename = "F")]
    pub f: Mat,
    #[serde(rename = "G")]
    pub g: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub plant: PlantFile,
    pub observer: ObserverFile,
    pub cost: CostFile,
}

fn declared(out: &mut Vec<Violation>, field: &str, declared: usize, actual: usize, source: &str) {
    if declared != actual {
        out.push(Violation {
            field: field.to_string(),
            message: format!("declared {declared} but {source} gives {actual}"),
        });
    }
}

impl ModelFile {
    fn specs(&self) -> (PlantSpec, ObserverSpec, CostSpec) {
        let plant = PlantSpec {
            theta: self.plant.theta.clone(),
            energy: self.plant.energy.clone(),
            coupling: self.plant.coupling.clone(),
        };
        let observer = ObserverSpec {
            ccr: self.observer.vartheta.clone(),
            energy: self.observer.r.clone(),
            plant_coupling: self.observer.n1.clone(),
            noise_coupling: self.observer.n2.clone(),
            selector: Selector::from_one_based(&self.observer.pi_columns, self.plant.m),
        };
        let cost = CostSpec {
            f: self.cost.f.clone(),
            g: self.cost.g.clone(),
        };
        (plant, observer, cost)
    }

    /// Every problem with the document: declared sizes that disagree with
    /// the matrices, then the structural checks of the model itself.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (p, o) = (&self.plant, &self.observer);
        declared(&mut out, "plant.n", p.n, p.theta.rows(), "theta");
        declared(&mut out, "plant.m", p.m, p.coupling.rows(), "N");
        declared(&mut out, "observer.nu", o.nu, o.vartheta.rows(), "vartheta");
        declared(&mut out, "observer.p", o.p, o.pi_columns.len(), "pi_columns");
        declared(&mut out, "observer.mu", o.mu, o.n2.rows(), "N2");
        let (plant, observer, cost) = self.specs();
        out.extend(model::violations(&plant, &observer, &cost));
        out
    }

    pub fn into_model(self) -> CliResult<Model> {
        let v = self.violations();
        if !v.is_empty() {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(CliError::input(format!("invalid model: {}", list.join("; "))));
        }
        let (plant, observer, cost) = self.specs();
        Ok(Model::new(plant, observer, cost)?)
    }

    pub fn from_model(model: &Model) -> Self {
        let (plant, obs, cost) = (model.plant(), model.observer(), model.cost());
        ModelFile {
            plant: PlantFile {
                n: plant.n(),
                m: plant.m(),
                theta: plant.theta.clone(),
                energy: plant.energy.clone(),
                coupling: plant.coupling.clone(),
            },
            observer: ObserverFile {
                nu: obs.nu(),
                p: obs.p(),
                mu: obs.mu(),
                vartheta: obs.ccr.clone(),
                r: obs.energy.clone(),
                n1: obs.plant_coupling.clone(),
                n2: obs.noise_coupling.clone(),
                pi_columns: obs.selector.columns_one_based(),
            },
            cost: CostFile {
                f: cost.f.clone(),
                g: cost.g.clone(),
            },
        }
    }
}

/// Parses a model document. A run report whose outputs carry a `model`
/// (from `random` or `optimize`) is accepted as well, so commands chain.
pub fn parse(text: &str) -> CliResult<ModelFile> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CliError::input(format!("malformed JSON: {e}")))?;
    let doc = match value.get("schema").and_then(Value::as_str) {
        Some(s) if s == SCHEMA => value
            .get("outputs")
            .and_then(|o| o.get("model"))
            .cloned()
            .ok_or_else(|| CliError::input("report has no outputs.model to read"))?,
        Some(s) => return Err(CliError::input(format!("unsupported report schema {s:?}"))),
        None => value,
    };
    serde_json::from_value(doc).map_err(|e| CliError::input(format!("invalid model document: {e}")))
}

pub fn read(path: &Path) -> CliResult<ModelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cqf_core::model::{random_instance, Dims};

    fn seeded() -> Model {
        random_instance(1, Dims::new(4, 2, 4, 2, 2)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let model = seeded();
        let text = serde_json::to_string(&ModelFile::from_model(&model)).unwrap();
        let back = parse(&text).unwrap().into_model().unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn uses_documented_keys() {
        let v = serde_json::to_value(ModelFile::from_model(&seeded())).unwrap();
        for key in ["n", "m", "theta", "R", "N"] {
            assert!(v["plant"].get(key).is_some(), "plant.{key}");
        }
        for key in ["nu", "p", "mu", "vartheta", "r", "N1", "N2", "pi_columns"] {
            assert!(v["observer"].get(key).is_some(), "observer.{key}");
        }
        assert!(v["cost"].get("F").is_some() && v["cost"].get("G").is_some());
        assert_eq!(v["observer"]["pi_columns"], serde_json::json!([1, 2]));
    }

    #[test]
    fn declared_sizes_are_cross_checked() {
        let mut file = ModelFile::from_model(&seeded());
        file.plant.n = 6;
        file.observer.mu = 4;
        let fields: Vec<String> = file.violations().into_iter().map(|v| v.field).collect();
        assert_eq!(fields, ["plant.n", "observer.mu"]);
        assert!(matches!(file.into_model(), Err(CliError::Input(_))));
    }

    #[test]
    fn structural_violations_are_reported() {
        let mut file = ModelFile::from_model(&seeded());
        file.observer.r = Mat::from_rows(&[[1.0, 2.0], [0.0, 1.0]], 2).unwrap();
        let fields: Vec<String> = file.violations().into_iter().map(|v| v.field).collect();
        assert!(fields.contains(&"observer.r".to_string()), "{fields:?}");
    }

    #[test]
    fn unknown_keys_and_bad_json_are_input_errors() {
        assert!(matches!(parse("{"), Err(CliError::Input(_))));
        let mut v = serde_json::to_value(ModelFile::from_model(&seeded())).unwrap();
        v["plant"]["extra"] = serde_json::json!(1);
        assert!(matches!(parse(&v.to_string()), Err(CliError::Input(_))));
    }

    #[test]
    fn reads_model_out_of_a_report() {
        let model = seeded();
        let report = serde_json::json!({
            "schema": SCHEMA,
            "outputs": { "model": ModelFile::from_model(&model) },
        });
        let back = parse(&report.to_string()).unwrap().into_model().unwrap();
        assert_eq!(back, model);
    }
}
