//! Reading policies, topologies and scenarios from text.
//!
//! * [`cilium`]: the `CiliumNetworkPolicy` YAML subset and its expansion into
//!   single-pair policies.
//! * [`canonical`]: the canonical JSON serialization of internal policies.
//! * [`topology`] and [`scenario_file`]: model-level YAML documents that
//!   declare endpoints by symbolic name.

pub mod canonical;
pub mod cilium;
pub mod scenario_file;
pub mod topology;

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{Cidr, Endpoint, ModelError, Namespace, Policy, Port};

pub use canonical::{from_canonical, to_canonical};
pub use cilium::{
    expand_rules, expand_rules_with, parse_cilium_policies, parse_cilium_policy, CiliumPolicyDoc,
    EgressRule, IngressRule, ParsedPolicy,
};
pub use scenario_file::{parse_scenario, parse_scenario_with, ScenarioDocument};
pub use topology::{parse_topology, AppRecord, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("malformed YAML: {0}")]
    MalformedYaml(String),
    #[error("unsupported apiVersion {0:?} (expected \"cilium.io/v2\")")]
    UnsupportedApiVersion(String),
    #[error("unsupported kind {0:?} (expected \"CiliumNetworkPolicy\")")]
    UnsupportedKind(String),
    #[error("missing required field {0}")]
    MissingField(String),
    #[error("invalid CIDR {0:?}")]
    InvalidCidrString(String),
    #[error("invalid port {0:?}")]
    InvalidPort(String),
    #[error("invalid direction {0:?} (expected 0, 1, ingress or egress)")]
    InvalidDirection(String),
    #[error("invalid rule at {path}: {reason}")]
    InvalidRule { path: String, reason: String },
    #[error("invalid endpoint {name:?}: {source}")]
    InvalidEndpoint { name: String, source: ModelError },
    #[error("policy document {0:?} expands to no policies")]
    EmptyExpansion(String),
    #[error("unknown endpoint reference {0:?}")]
    UnknownEndpointReference(String),
    #[error("unknown policy reference {0:?}")]
    UnknownPolicyReference(String),
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("invalid expectation {0:?}")]
    InvalidExpectation(String),
}

impl From<serde_yaml::Error> for IngestError {
    fn from(err: serde_yaml::Error) -> Self {
        IngestError::MalformedYaml(err.to_string())
    }
}

/// Namespace ids keyed by name. Names without an entry get id 1, the id
/// every real namespace carries in the reference scenarios.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NamespaceIds {
    ids: BTreeMap<String, u32>,
}

impl NamespaceIds {
    pub const DEFAULT_ID: u32 = 1;

    pub fn new(ids: BTreeMap<String, u32>) -> Self {
        Self { ids }
    }

    pub fn id(&self, name: &str) -> u32 {
        self.ids.get(name).copied().unwrap_or(Self::DEFAULT_ID)
    }

    pub fn namespace(&self, name: &str) -> Result<Namespace, ModelError> {
        Namespace::new(name, self.id(name))
    }
}

/// Symbolic names visible to scenario and topology documents.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    endpoints: BTreeMap<String, Endpoint>,
    policies: BTreeMap<String, Vec<Policy>>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_endpoint(&mut self, name: &str, endpoint: Endpoint) -> Result<(), IngestError> {
        if self.endpoints.contains_key(name) {
            return Err(IngestError::DuplicateSymbol(name.to_string()));
        }
        self.endpoints.insert(name.to_string(), endpoint);
        Ok(())
    }

    /// Binds `name` to one or more policies (a scenario's `create_policy`
    /// step, or every policy expanded from a named Cilium document).
    pub fn declare_policies(
        &mut self,
        name: &str,
        policies: Vec<Policy>,
    ) -> Result<(), IngestError> {
        if self.policies.contains_key(name) {
            return Err(IngestError::DuplicateSymbol(name.to_string()));
        }
        self.policies.insert(name.to_string(), policies);
        Ok(())
    }

    pub fn endpoint(&self, name: &str) -> Result<&Endpoint, IngestError> {
        self.endpoints
            .get(name)
            .ok_or_else(|| IngestError::UnknownEndpointReference(name.to_string()))
    }

    pub fn policies(&self, name: &str) -> Result<&[Policy], IngestError> {
        self.policies
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| IngestError::UnknownPolicyReference(name.to_string()))
    }

    pub fn endpoint_names(&self) -> impl Iterator<Item = (&str, &Endpoint)> {
        self.endpoints.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub(crate) enum RawNamespace {
    Name(String),
    Full { name: String, id: u32 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub(crate) enum RawNumber {
    Int(u64),
    Text(String),
}

impl RawNumber {
    pub(crate) fn to_u64(&self) -> Option<u64> {
        match self {
            RawNumber::Int(n) => Some(*n),
            RawNumber::Text(s) if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) => {
                s.parse().ok()
            }
            RawNumber::Text(_) => None,
        }
    }

    pub(crate) fn text(&self) -> String {
        match self {
            RawNumber::Int(n) => n.to_string(),
            RawNumber::Text(s) => s.clone(),
        }
    }
}

/// A symbolically named endpoint in the placeholder-tolerant model encoding:
/// `0.0.0.0/0`, namespace `-` (or `{name: "-", id: 0}`), port `0` and an empty
/// label all mean "absent".
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawEndpointSpec {
    pub name: String,
    #[serde(default)]
    pub cidr: Option<String>,
    #[serde(default)]
    pub namespace: Option<RawNamespace>,
    #[serde(default)]
    pub port: Option<RawNumber>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub expect: Option<String>,
}

impl RawEndpointSpec {
    pub(crate) fn resolve(&self, namespaces: &NamespaceIds) -> Result<Endpoint, IngestError> {
        let cidr = match &self.cidr {
            None => None,
            Some(text) => {
                let cidr: Cidr = text
                    .parse()
                    .map_err(|_| IngestError::InvalidCidrString(text.clone()))?;
                (!cidr.is_sentinel()).then_some(cidr)
            }
        };
        let invalid = |source| IngestError::InvalidEndpoint {
            name: self.name.clone(),
            source,
        };
        let namespace = match &self.namespace {
            None => None,
            Some(RawNamespace::Name(name)) if name == Namespace::SENTINEL_NAME => None,
            Some(RawNamespace::Name(name)) => Some(namespaces.namespace(name).map_err(invalid)?),
            Some(RawNamespace::Full { name, id }) => {
                let ns = Namespace::new(name.clone(), *id).map_err(invalid)?;
                (!ns.is_sentinel()).then_some(ns)
            }
        };
        let port = match &self.port {
            None => None,
            Some(raw) => match raw.to_u64() {
                Some(0) => None,
                Some(n) => Some(
                    u32::try_from(n)
                        .ok()
                        .and_then(|n| Port::new(n).ok())
                        .ok_or_else(|| IngestError::InvalidPort(raw.text()))?,
                ),
                None => return Err(IngestError::InvalidPort(raw.text())),
            },
        };
        let label = self.label.clone().filter(|l| !l.is_empty());
        Endpoint::new(cidr, namespace, port, label).map_err(invalid)
    }
}
