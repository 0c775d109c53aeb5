//! Model files in JSON or TOML.
//!
//! ```json
//! {"n": 3, "m": 2,
//!  "P": [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]],
//!  "rates": {"kind": "table", "values": [1, 2, 2.5]}}
//! ```
//!
//! `P` may instead be `{"graph": [[0, 1], [1, 2]], "kind": "srw"}`, the simple
//! random walk on an undirected edge list. Sites are 0-based.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};
use crate::model::{JumpMatrix, RateSpec, ZrpModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Srw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySpec {
    Dense(Vec<Vec<f64>>),
    Graph {
        graph: Vec<(usize, usize)>,
        kind: GraphKind,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "P")]
    pub p: GeometrySpec,
    pub rates: RateSpec,
}

impl ModelFile {
    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ZrpError::ModelFile(e.to_string()))
    }

    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ZrpError::ModelFile(e.to_string()))
    }

    /// Reads `.toml` files as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ZrpError::ModelFile(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::parse_toml(&text),
            _ => Self::parse_json(&text),
        }
    }

    pub fn geometry(&self, renormalize: bool) -> Result<JumpMatrix> {
        let p = match &self.p {
            GeometrySpec::Dense(rows) => JumpMatrix::from_rows_with(rows, renormalize)?,
            GeometrySpec::Graph { graph, kind: GraphKind::Srw } => {
                JumpMatrix::simple_random_walk(self.n, graph)?
            }
        };
        if p.sites() != self.n {
            return Err(ZrpError::ModelFile(format!(
                "field P: {} sites, but n = {}",
                p.sites(),
                self.n
            )));
        }
        Ok(p)
    }

    pub fn to_model(&self, renormalize: bool) -> Result<ZrpModel> {
        ZrpModel::new(self.geometry(renormalize)?, self.rates.clone(), self.m)
    }
}
