//! Scripted scenarios: a sequence of operations, each with an expected
//! outcome, run against a system state.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::engine::{EngineError, Operation, TransferOptions, ViolationKind};
use crate::matching::MatchVerdict;
use crate::model::{new_system, AppId, Direction, Endpoint, Policy, SystemState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum StepAction {
    CreateEndpoint {
        endpoint: Endpoint,
    },
    CreatePolicy {
        first: Endpoint,
        second: Endpoint,
        direction: Direction,
    },
    DeployApplication {
        id: AppId,
        send: Endpoint,
        listen: BTreeSet<Endpoint>,
        receive_only: bool,
        policies: BTreeSet<Policy>,
    },
    SendData {
        from: AppId,
        to: AppId,
        endpoint: Endpoint,
    },
}

impl StepAction {
    pub fn name(&self) -> &'static str {
        match self {
            StepAction::CreateEndpoint { .. } => "create_endpoint",
            StepAction::CreatePolicy { .. } => "create_policy",
            StepAction::DeployApplication { .. } => "deploy_application",
            StepAction::SendData { .. } => "send_data",
        }
    }

    /// Operations whose contract this action can violate.
    pub fn operations(&self) -> &'static [Operation] {
        match self {
            StepAction::CreateEndpoint { .. } => &[Operation::CreateEndpoint],
            StepAction::CreatePolicy { .. } => &[Operation::CreatePolicy],
            StepAction::DeployApplication { .. } => &[Operation::DeployApplication],
            StepAction::SendData { .. } => &[
                Operation::SendData,
                Operation::TransferData,
                Operation::GetApplication,
            ],
        }
    }
}

/// What a step is expected to do.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Expected {
    #[default]
    Ok,
    /// The named operation fails its precondition; when `kind` is given the
    /// failure must also be of that kind.
    PreconditionViolation {
        operation: Operation,
        kind: Option<ViolationKind>,
    },
}

impl Expected {
    /// A transfer rejected because no policy permits it.
    pub fn denied() -> Self {
        Expected::PreconditionViolation {
            operation: Operation::TransferData,
            kind: Some(ViolationKind::PolicyViolation),
        }
    }

    pub fn is_met_by(&self, actual: &Outcome) -> bool {
        match (self, actual) {
            (Expected::Ok, Outcome::Ok) => true,
            (
                Expected::PreconditionViolation { operation, kind },
                Outcome::PreconditionViolation {
                    operation: actual_op,
                    kind: actual_kind,
                    ..
                },
            ) => operation == actual_op && kind.is_none_or(|k| k == *actual_kind),
            _ => false,
        }
    }
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expected::Ok => f.write_str("ok"),
            Expected::PreconditionViolation {
                operation,
                kind: None,
            } => {
                write!(f, "precondition violation in {operation}")
            }
            Expected::PreconditionViolation {
                operation,
                kind: Some(kind),
            } => {
                write!(f, "precondition violation in {operation} ({kind})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioStep {
    pub action: StepAction,
    pub expected: Expected,
}

impl ScenarioStep {
    pub fn new(action: StepAction) -> Self {
        Self {
            action,
            expected: Expected::Ok,
        }
    }

    pub fn expecting(mut self, expected: Expected) -> Self {
        self.expected = expected;
        self
    }
}

/// What a step actually did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    PreconditionViolation {
        operation: Operation,
        kind: ViolationKind,
        message: String,
    },
}

impl From<&EngineError> for Outcome {
    fn from(err: &EngineError) -> Self {
        Outcome::PreconditionViolation {
            operation: err.operation(),
            kind: err.kind(),
            message: err.to_string(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Ok => f.write_str("ok"),
            Outcome::PreconditionViolation {
                operation,
                kind,
                message,
            } => {
                write!(
                    f,
                    "precondition violation in {operation} ({kind}): {message}"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepOutcome {
    pub index: usize,
    pub action: &'static str,
    pub actual: Outcome,
    pub expected: Expected,
    pub matched: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<MatchVerdict>,
}

/// Execution stopped at `step` because its outcome was not the expected one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioAborted {
    pub step: usize,
    pub actual: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub steps_run: usize,
    pub outcomes: Vec<StepOutcome>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted: Option<ScenarioAborted>,
}

fn apply(
    state: &mut SystemState,
    action: &StepAction,
    options: TransferOptions,
) -> Result<Option<MatchVerdict>, EngineError> {
    match action {
        StepAction::CreateEndpoint { endpoint } => {
            state.add_endpoint(endpoint.clone()).map(|_| None)
        }
        StepAction::CreatePolicy {
            first,
            second,
            direction,
        } => state
            .create_policy(first.clone(), second.clone(), *direction)
            .map(|_| None),
        StepAction::DeployApplication {
            id,
            send,
            listen,
            receive_only,
            policies,
        } => state
            .deploy_application(
                *id,
                send.clone(),
                listen.clone(),
                *receive_only,
                policies.clone(),
            )
            .map(|_| None),
        StepAction::SendData { from, to, endpoint } => {
            state.send_data(*from, *to, endpoint, options).map(Some)
        }
    }
}

/// Runs `steps` in order on `state`. Steps whose outcome matches the
/// expectation (including expected failures) let execution continue; the
/// first mismatch halts the run.
pub fn run_scenario_on(
    state: &mut SystemState,
    steps: &[ScenarioStep],
    options: impl Into<TransferOptions>,
) -> ScenarioReport {
    let options = options.into();
    let mut outcomes = Vec::with_capacity(steps.len());
    let mut aborted = None;
    for (index, step) in steps.iter().enumerate() {
        let (actual, verdict) = match apply(state, &step.action, options) {
            Ok(verdict) => (Outcome::Ok, verdict),
            Err(err) => (Outcome::from(&err), err.verdict().cloned()),
        };
        let matched = step.expected.is_met_by(&actual);
        outcomes.push(StepOutcome {
            index,
            action: step.action.name(),
            actual: actual.clone(),
            expected: step.expected,
            matched,
            verdict,
        });
        if !matched {
            aborted = Some(ScenarioAborted {
                step: index,
                actual,
            });
            break;
        }
    }
    ScenarioReport {
        steps_run: outcomes.len(),
        passed: aborted.is_none(),
        outcomes,
        aborted,
    }
}

/// Runs `steps` against a fresh system.
pub fn run_scenario(steps: &[ScenarioStep], options: impl Into<TransferOptions>) -> ScenarioReport {
    run_scenario_on(&mut new_system(), steps, options)
}
