//! JSON case files.
//!
//! ```json
//! {
//!   "name": "two-bus",
//!   "base_mva": 100.0,
//!   "buses": [
//!     {"id": 1, "kind": "PV", "v_set": 1.0, "p": 0.25},
//!     {"id": 2, "kind": "PQ", "p": -0.25, "q": -0.125, "b_shunt": 0.0}
//!   ],
//!   "branches": [{"from": 1, "to": 2, "b": -1.0}]
//! }
//! ```
//!
//! Every electrical quantity is per unit on `base_mva`. Buses may appear in
//! any order; the loader reorders them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CaseError;
use crate::network::{Bus, BusKind, Line, PowerNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseBusKind {
    #[serde(rename = "PQ")]
    Pq,
    #[serde(rename = "PV")]
    Pv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBus {
    pub id: usize,
    pub kind: CaseBusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_set: Option<f64>,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_shunt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBranch {
    pub from: usize,
    pub to: usize,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub buses: Vec<CaseBus>,
    pub branches: Vec<CaseBranch>,
}

fn default_base() -> f64 {
    100.0
}

impl CaseFile {
    pub fn into_network(self) -> Result<PowerNetwork, CaseError> {
        let buses = self
            .buses
            .into_iter()
            .map(|b| {
                let kind = match b.kind {
                    CaseBusKind::Pq => {
                        if b.v_set.is_some() {
                            return Err(CaseError::Bus {
                                id: b.id,
                                msg: "PQ bus must not carry v_set".into(),
                            });
                        }
                        BusKind::Pq {
                            q: b.q.ok_or_else(|| CaseError::Bus {
                                id: b.id,
                                msg: "PQ bus needs q".into(),
                            })?,
                        }
                    }
                    CaseBusKind::Pv => {
                        if b.q.is_some() {
                            return Err(CaseError::Bus {
                                id: b.id,
                                msg: "PV bus must not carry q".into(),
                            });
                        }
                        BusKind::Pv {
                            v_set: b.v_set.ok_or_else(|| CaseError::Bus {
                                id: b.id,
                                msg: "PV bus needs v_set".into(),
                            })?,
                        }
                    }
                };
                Ok(Bus {
                    id: b.id,
                    kind,
                    p: b.p,
                    b_shunt: b.b_shunt.unwrap_or(0.0),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lines = self
            .branches
            .into_iter()
            .map(|br| Line::new(br.from, br.to, br.b))
            .collect();
        Ok(PowerNetwork::new(self.base_mva, buses, lines)?)
    }

    pub fn from_network(net: &PowerNetwork, name: Option<String>) -> Self {
        let buses = net
            .buses()
            .iter()
            .map(|b| {
                let (kind, v_set, q) = match b.kind {
                    BusKind::Pq { q } => (CaseBusKind::Pq, None, Some(q)),
                    BusKind::Pv { v_set } => (CaseBusKind::Pv, Some(v_set), None),
                };
                CaseBus {
                    id: b.id,
                    kind,
                    v_set,
                    p: b.p,
                    q,
                    b_shunt: (b.b_shunt != 0.0).then_some(b.b_shunt),
                }
            })
            .collect();
        let branches = net
            .lines()
            .into_iter()
            .map(|l| CaseBranch {
                from: l.from,
                to: l.to,
                b: l.b,
            })
            .collect();
        CaseFile {
            name,
            base_mva: net.base_mva(),
            buses,
            branches,
        }
    }
}

pub fn parse_case(text: &str) -> Result<PowerNetwork, CaseError> {
    serde_json::from_str::<CaseFile>(text)?.into_network()
}

pub fn load_case(path: impl AsRef<Path>) -> Result<PowerNetwork, CaseError> {
    parse_case(&fs::read_to_string(path)?)
}

pub fn case_to_json(net: &PowerNetwork, name: Option<String>) -> String {
    serde_json::to_string_pretty(&CaseFile::from_network(net, name))
        .expect("case file serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "base_mva": 100.0,
        "buses": [
            {"id": 2, "kind": "PQ", "p": -0.25, "q": -0.125},
            {"id": 1, "kind": "PV", "v_set": 1.0, "p": 0.25}
        ],
        "branches": [{"from": 2, "to": 1, "b": -1.0}]
    }"#;

    #[test]
    fn parses_and_orients() {
        let net = parse_case(TWO_BUS).unwrap();
        assert_eq!(net.n_load(), 1);
        assert_eq!(net.buses()[0].id, 2);
        // generator-load branch flipped to start at the generator
        assert_eq!(net.branches()[0].from, 1);
        assert_eq!(net.branches()[0].to, 0);
    }

    #[test]
    fn round_trip() {
        let net = parse_case(TWO_BUS).unwrap();
        let again = parse_case(&case_to_json(&net, Some("x".into()))).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn missing_fields_are_reported() {
        let bad = r#"{"buses": [{"id": 1, "kind": "PV", "p": 0.0}], "branches": []}"#;
        assert!(matches!(parse_case(bad), Err(CaseError::Bus { id: 1, .. })));
        let bad = r#"{"buses": [{"id": 1, "kind": "PQ", "p": 0.0, "q": 0.0, "v_set": 1.0}], "branches": []}"#;
        assert!(matches!(parse_case(bad), Err(CaseError::Bus { id: 1, .. })));
        assert!(matches!(parse_case("{"), Err(CaseError::Json(_))));
    }
}
