//! Endpoint-pair model of Cilium network policies.
//!
//! Policies map an ordered pair of endpoints to a direction. Transfers
//! between deployed applications are permitted only when some policy
//! matches the sender's send endpoint and the target endpoint in the
//! policy's orientation. The crate ingests `CiliumNetworkPolicy` YAML into
//! that model, runs scripted scenarios and computes system-wide reachability.

pub mod engine;
pub mod ingest;
pub mod matching;
pub mod model;
pub mod reachability;
pub mod scenario;

pub use engine::{EngineError, Operation, TransferOptions, ViolationKind};
pub use matching::{
    cidr_contains, endpoint_matches, evaluate, policy_permits, FailedPredicate, MatchMode,
    MatchVerdict,
};
pub use model::{
    new_system, AppId, Application, Cidr, Direction, Endpoint, Message, ModelError, Namespace,
    Policy, PolicyOrigin, Port, SystemState,
};
pub use reachability::{ReachabilityEntry, ReachabilityMatrix};
pub use scenario::{
    run_scenario, run_scenario_on, Expected, Outcome, ScenarioReport, ScenarioStep, StepAction,
};
