//! Topology documents: namespace ids, named endpoints and the applications
//! deployed on them.
//!
//! ```yaml
//! namespaces: { NS-UI: 1 }          # optional; unlisted names get id 1
//! endpoints:
//!   - { name: client, cidr: 10.28.1.2/30 }
//!   - { name: webui-https, namespace: NS-UI, port: 443, label: WebUI }
//! applications:
//!   - { id: 1, name: Client, send: client }
//!   - { id: 2, name: WebUI, send: webui-https, listen: [webui-https], receive_only: true, policies: [UIPolicy] }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::{IngestError, NamespaceIds, RawEndpointSpec, SymbolTable};
use crate::model::{AppId, Endpoint};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    #[serde(default)]
    namespaces: BTreeMap<String, u32>,
    #[serde(default)]
    endpoints: Vec<RawEndpointSpec>,
    #[serde(default)]
    applications: Vec<RawApp>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawApp {
    id: u32,
    #[serde(default)]
    name: Option<String>,
    send: String,
    #[serde(default)]
    listen: Vec<String>,
    #[serde(default)]
    receive_only: bool,
    #[serde(default)]
    policies: Vec<String>,
}

/// An application ready to deploy, with its policy references still
/// symbolic (they name policy documents loaded separately).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppRecord {
    pub id: AppId,
    pub name: String,
    pub send: Endpoint,
    pub listen: BTreeSet<Endpoint>,
    pub receive_only: bool,
    pub policy_refs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub namespaces: NamespaceIds,
    /// Declared endpoints in file order.
    pub endpoints: Vec<(String, Endpoint)>,
    pub applications: Vec<AppRecord>,
}

impl Topology {
    /// Symbol table holding the topology's endpoint names.
    pub fn symbols(&self) -> SymbolTable {
        let mut table = SymbolTable::new();
        for (name, endpoint) in &self.endpoints {
            table
                .declare_endpoint(name, endpoint.clone())
                .expect("names were checked for duplicates while parsing");
        }
        table
    }

    pub fn application_name(&self, id: AppId) -> Option<&str> {
        self.applications
            .iter()
            .find(|a| a.id == id)
            .map(|a| a.name.as_str())
    }
}

pub fn parse_topology(text: &str) -> Result<Topology, IngestError> {
    let raw: RawTopology = serde_yaml::from_str(text)?;
    let namespaces = NamespaceIds::new(raw.namespaces);
    let mut table = SymbolTable::new();
    let mut endpoints = Vec::with_capacity(raw.endpoints.len());
    for spec in &raw.endpoints {
        if spec.expect.is_some() {
            return Err(IngestError::MalformedYaml(format!(
                "endpoint {:?}: `expect` is only valid in scenario steps",
                spec.name
            )));
        }
        let endpoint = spec.resolve(&namespaces)?;
        table.declare_endpoint(&spec.name, endpoint.clone())?;
        endpoints.push((spec.name.clone(), endpoint));
    }

    let mut seen = BTreeSet::new();
    let mut applications = Vec::with_capacity(raw.applications.len());
    for app in raw.applications {
        if !seen.insert(app.id) {
            return Err(IngestError::DuplicateSymbol(format!(
                "application id {}",
                app.id
            )));
        }
        let listen = app
            .listen
            .iter()
            .map(|name| table.endpoint(name).cloned())
            .collect::<Result<_, _>>()?;
        applications.push(AppRecord {
            id: AppId(app.id),
            name: app.name.unwrap_or_else(|| format!("app{}", app.id)),
            send: table.endpoint(&app.send)?.clone(),
            listen,
            receive_only: app.receive_only,
            policy_refs: app.policies,
        });
    }

    Ok(Topology {
        namespaces,
        endpoints,
        applications,
    })
}
