//! Scenario documents.
//!
//! ```yaml
//! mode: strict
//! steps:
//!   - create_endpoint: { name: ep1, cidr: 10.28.1.2/30, namespace: { name: "-", id: 0 }, port: 0, label: "" }
//!   - create_policy: { name: pol, first: ep2, second: ep1, direction: 0 }
//!   - deploy_application: { id: 1, send: ep1, listen: [], receive_only: false, policies: [pol] }
//!   - send_data: { from: 1, to: 2, endpoint: ep2, expect: allow }
//! ```
//!
//! `expect` accepts `ok`, `allow`, `deny` (send steps only; a policy
//! violation in TransferData), `violation` (any violation of the step's own
//! operation) or `violation:<Operation>[:<Kind>]`.

use std::collections::BTreeSet;

use serde::Deserialize;

use super::{IngestError, NamespaceIds, RawEndpointSpec, RawNumber, SymbolTable};
use crate::engine::{Operation, ViolationKind};
use crate::matching::MatchMode;
use crate::model::{AppId, Direction, Policy};
use crate::scenario::{Expected, ScenarioStep, StepAction};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    mode: Option<MatchMode>,
    #[serde(default)]
    check_listen: Option<bool>,
    #[serde(with = "serde_yaml::with::singleton_map_recursive")]
    steps: Vec<RawStep>,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawStep {
    CreateEndpoint(RawEndpointSpec),
    CreatePolicy(RawPolicyStep),
    DeployApplication(RawDeployStep),
    SendData(RawSendStep),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicyStep {
    name: Option<String>,
    first: String,
    second: String,
    direction: RawNumber,
    #[serde(default)]
    expect: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDeployStep {
    id: u32,
    send: String,
    #[serde(default)]
    listen: Vec<String>,
    #[serde(default)]
    receive_only: bool,
    #[serde(default)]
    policies: Vec<String>,
    #[serde(default)]
    expect: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSendStep {
    from: u32,
    to: u32,
    endpoint: String,
    #[serde(default)]
    expect: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioDocument {
    pub name: Option<String>,
    pub mode: Option<MatchMode>,
    pub check_listen: Option<bool>,
    pub steps: Vec<ScenarioStep>,
}

fn parse_direction(raw: &RawNumber) -> Result<Direction, IngestError> {
    match raw {
        RawNumber::Text(t) if t.eq_ignore_ascii_case("ingress") => Ok(Direction::Ingress),
        RawNumber::Text(t) if t.eq_ignore_ascii_case("egress") => Ok(Direction::Egress),
        RawNumber::Int(n) => {
            Direction::try_from(*n).map_err(|_| IngestError::InvalidDirection(raw.text()))
        }
        RawNumber::Text(_) => Err(IngestError::InvalidDirection(raw.text())),
    }
}

fn parse_expect(raw: Option<&str>, action: &StepAction) -> Result<Expected, IngestError> {
    let invalid = || IngestError::InvalidExpectation(raw.unwrap_or_default().to_string());
    let is_send = matches!(action, StepAction::SendData { .. });
    let expected = match raw.map(str::trim) {
        None | Some("ok") => Expected::Ok,
        Some("allow") if is_send => Expected::Ok,
        Some("deny") if is_send => Expected::denied(),
        Some("violation") => Expected::PreconditionViolation {
            operation: action.operations()[0],
            kind: None,
        },
        Some(other) => {
            let rest = other.strip_prefix("violation:").ok_or_else(invalid)?;
            let (op, kind) = match rest.split_once(':') {
                Some((op, kind)) => (
                    op,
                    Some(kind.parse::<ViolationKind>().map_err(|_| invalid())?),
                ),
                None => (rest, None),
            };
            let operation: Operation = op.parse().map_err(|_| invalid())?;
            Expected::PreconditionViolation { operation, kind }
        }
    };
    if let Expected::PreconditionViolation { operation, .. } = expected {
        if !action.operations().contains(&operation) {
            return Err(invalid());
        }
    }
    Ok(expected)
}

/// Parses a scenario that declares all of its own symbols.
pub fn parse_scenario(text: &str) -> Result<ScenarioDocument, IngestError> {
    parse_scenario_with(text, &mut SymbolTable::new(), &NamespaceIds::default())
}

/// Parses a scenario whose steps may also reference symbols already in
/// `symbols` (topology endpoints, policy document names). Symbols the
/// scenario declares are added to the table.
pub fn parse_scenario_with(
    text: &str,
    symbols: &mut SymbolTable,
    namespaces: &NamespaceIds,
) -> Result<ScenarioDocument, IngestError> {
    let raw: RawScenario = serde_yaml::from_str(text)?;
    let mut steps = Vec::with_capacity(raw.steps.len());
    for step in raw.steps {
        let (action, expect) = match step {
            RawStep::CreateEndpoint(spec) => {
                let endpoint = spec.resolve(namespaces)?;
                symbols.declare_endpoint(&spec.name, endpoint.clone())?;
                (StepAction::CreateEndpoint { endpoint }, spec.expect)
            }
            RawStep::CreatePolicy(p) => {
                let first = symbols.endpoint(&p.first)?.clone();
                let second = symbols.endpoint(&p.second)?.clone();
                let direction = parse_direction(&p.direction)?;
                if let Some(name) = &p.name {
                    symbols.declare_policies(
                        name,
                        vec![Policy::new(first.clone(), second.clone(), direction)],
                    )?;
                }
                (
                    StepAction::CreatePolicy {
                        first,
                        second,
                        direction,
                    },
                    p.expect,
                )
            }
            RawStep::DeployApplication(d) => {
                let send = symbols.endpoint(&d.send)?.clone();
                let listen = d
                    .listen
                    .iter()
                    .map(|n| symbols.endpoint(n).cloned())
                    .collect::<Result<BTreeSet<_>, _>>()?;
                let mut policies = BTreeSet::new();
                for name in &d.policies {
                    policies.extend(symbols.policies(name)?.iter().cloned());
                }
                (
                    StepAction::DeployApplication {
                        id: AppId(d.id),
                        send,
                        listen,
                        receive_only: d.receive_only,
                        policies,
                    },
                    d.expect,
                )
            }
            RawStep::SendData(s) => (
                StepAction::SendData {
                    from: AppId(s.from),
                    to: AppId(s.to),
                    endpoint: symbols.endpoint(&s.endpoint)?.clone(),
                },
                s.expect,
            ),
        };
        let expected = parse_expect(expect.as_deref(), &action)?;
        steps.push(ScenarioStep { action, expected });
    }
    Ok(ScenarioDocument {
        name: raw.name,
        mode: raw.mode,
        check_listen: raw.check_listen,
        steps,
    })
}
