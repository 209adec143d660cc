//! JSON system document with CSV sidecars for the netload matrices.
//!
//! ```json
//! {
//!   "network": { "nodes": 3, "slack": 0, "lines": [{"from": 0, "to": 1, "limit": 250, "susceptance": 10}] },
//!   "generators": [{"node": 0, "cost_quad": 0.04, "cost_lin": 12, "g_max": 220, "ramp_up": 220, "ramp_down": 220}],
//!   "storages": [{"node": 2, "p_max": 40, "e_max": 160, "efficiency": 0.95, "marginal_cost": 5, "e_init": 80}],
//!   "config": { "epsilon": 0.1, "reserve_ratio": 0.05, "horizon": 24 },
//!   "netload": { "mu": "mu.csv", "sigma": "sigma.csv" },
//!   "price_sigma": [8.0, ...]
//! }
//! ```
//!
//! Sidecar paths are relative to the document. A `ptdf` matrix may replace
//! the susceptances; when both are present the validator checks that they
//! agree.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::system::io::{read_matrix_csv, write_matrix_csv};
use crate::system::{compute_ptdf, BundledCase, Generator, Line, NetloadModel, Network, PowerSystem, Storage, SystemConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub nodes: usize,
    #[serde(default)]
    pub slack: usize,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptdf: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetloadDoc {
    pub mu: String,
    pub sigma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub network: NetworkDoc,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub storages: Vec<Storage>,
    pub config: SystemConfig,
    pub netload: NetloadDoc,
    /// Baseline price interval per period; a single value is broadcast.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_sigma: Option<Vec<f64>>,
}

/// A document resolved into model types.
#[derive(Clone, Debug)]
pub struct LoadedSystem {
    pub system: PowerSystem,
    pub netload: NetloadModel,
    pub price_sigma: Vec<f64>,
}

pub const DEFAULT_PRICE_SIGMA: f64 = 10.0;

impl SystemDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes") + "\n"
    }

    /// Resolves the document; `sidecar(name)` returns a sidecar's text.
    ///
    /// Structural problems that `validate_system` reports by index (σ < 0,
    /// capacity, bounds) are left for it; only what prevents building the
    /// model types is an error here.
    pub fn resolve(&self, sidecar: &dyn Fn(&str) -> Result<String>) -> Result<LoadedSystem> {
        let net = &self.network;
        if net.nodes == 0 {
            return Err(Error::Invalid("network needs at least one node".into()));
        }
        let network = match (&net.ptdf, net.lines.is_empty()) {
            (_, true) => Network { node_count: net.nodes, lines: Vec::new(), ptdf: Vec::new(), slack: Some(net.slack) },
            (Some(p), false) => Network { node_count: net.nodes, lines: net.lines.clone(), ptdf: p.clone(), slack: None },
            (None, false) => {
                if net.lines.iter().any(|l| l.susceptance.is_none()) {
                    return Err(Error::Invalid("every line needs a susceptance when no ptdf is given".into()));
                }
                if net.lines.iter().any(|l| l.from >= net.nodes || l.to >= net.nodes) || net.slack >= net.nodes {
                    return Err(Error::Invalid("line endpoint or slack outside the node range".into()));
                }
                let ptdf = compute_ptdf(net.nodes, &net.lines, net.slack)?;
                Network { node_count: net.nodes, lines: net.lines.clone(), ptdf, slack: Some(net.slack) }
            }
        };
        let mu = read_matrix_csv(&sidecar(&self.netload.mu)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", self.netload.mu)))?;
        let sigma = read_matrix_csv(&sidecar(&self.netload.sigma)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", self.netload.sigma)))?;
        let horizon = self.config.horizon;
        let price_sigma = match &self.price_sigma {
            None => vec![DEFAULT_PRICE_SIGMA; horizon],
            Some(v) if v.len() == 1 => vec![v[0]; horizon],
            Some(v) if v.len() == horizon => v.clone(),
            Some(v) => {
                return Err(Error::Dimension(format!("price_sigma has {} entries for horizon {horizon}", v.len())))
            }
        };
        Ok(LoadedSystem {
            system: PowerSystem {
                network,
                generators: self.generators.clone(),
                storages: self.storages.clone(),
                config: self.config.clone(),
            },
            netload: NetloadModel { mu, sigma, correlation: self.netload.correlation.clone() },
            price_sigma,
        })
    }

    /// Document for an in-memory case, pointing at `mu.csv` and `sigma.csv`.
    pub fn from_case(case: &BundledCase) -> Self {
        let net = &case.system.network;
        let has_b = !net.lines.is_empty() && net.lines.iter().all(|l| l.susceptance.is_some());
        SystemDocument {
            network: NetworkDoc {
                nodes: net.node_count,
                slack: net.slack.unwrap_or(0),
                lines: net.lines.clone(),
                ptdf: if has_b || net.lines.is_empty() { None } else { Some(net.ptdf.clone()) },
            },
            generators: case.system.generators.clone(),
            storages: case.system.storages.clone(),
            config: case.system.config.clone(),
            netload: NetloadDoc { mu: "mu.csv".into(), sigma: "sigma.csv".into(), correlation: case.netload.correlation.clone() },
            price_sigma: Some(case.price_sigma.clone()),
        }
    }
}

/// Reads a document and its sidecars from disk.
pub fn load_system(path: &Path) -> Result<LoadedSystem> {
    let text = std::fs::read_to_string(path)?;
    let doc = SystemDocument::from_json(&text)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    doc.resolve(&|name| Ok(std::fs::read_to_string(dir.join(name))?))
}

/// Writes `system.json`, `mu.csv` and `sigma.csv` into `dir`.
pub fn write_case(dir: &Path, case: &BundledCase) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("system.json"), SystemDocument::from_case(case).to_json())?;
    std::fs::write(dir.join("mu.csv"), write_matrix_csv(&case.netload.mu))?;
    std::fs::write(dir.join("sigma.csv"), write_matrix_csv(&case.netload.sigma))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{three_node_test_system, validate_system};

    fn sidecars(case: &BundledCase) -> impl Fn(&str) -> Result<String> {
        let mu = write_matrix_csv(&case.netload.mu);
        let sigma = write_matrix_csv(&case.netload.sigma);
        move |name| match name {
            "mu.csv" => Ok(mu.clone()),
            "sigma.csv" => Ok(sigma.clone()),
            other => Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, other.to_string()))),
        }
    }

    #[test]
    fn document_round_trips_the_three_node_case() {
        let case = three_node_test_system();
        let doc = SystemDocument::from_case(&case);
        let back = SystemDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        let loaded = back.resolve(&sidecars(&case)).unwrap();
        assert_eq!(loaded.system.generators, case.system.generators);
        assert_eq!(loaded.price_sigma, case.price_sigma);
        for (a, b) in loaded.system.network.ptdf.iter().flatten().zip(case.system.network.ptdf.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in loaded.netload.mu.iter().flatten().zip(case.netload.mu.iter().flatten()) {
            assert!((a - b).abs() <= 5e-7);
        }
        assert!(validate_system(&loaded.system, &loaded.netload).passed());
    }

    #[test]
    fn unknown_fields_and_missing_sidecars_fail() {
        let case = three_node_test_system();
        let json = SystemDocument::from_case(&case).to_json().replacen("\"generators\"", "\"generatorz\"", 1);
        assert!(SystemDocument::from_json(&json).is_err());
        let doc = SystemDocument::from_case(&case);
        let err = doc.resolve(&|_| Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "x")))).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn scalar_price_sigma_is_broadcast() {
        let case = three_node_test_system();
        let mut doc = SystemDocument::from_case(&case);
        doc.price_sigma = Some(vec![3.0]);
        assert_eq!(doc.resolve(&sidecars(&case)).unwrap().price_sigma, vec![3.0; 24]);
        doc.price_sigma = Some(vec![3.0, 4.0]);
        assert!(doc.resolve(&sidecars(&case)).is_err());
    }
}
