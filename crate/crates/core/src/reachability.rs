//! System-wide reachability: every (sender, receiver, listen endpoint)
//! triple evaluated against the global policy set.

use serde::Serialize;

use crate::engine::TransferOptions;
use crate::matching::{evaluate, MatchMode, MatchVerdict};
use crate::model::{AppId, Endpoint, SystemState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReachabilityEntry {
    pub sender: AppId,
    pub receiver: AppId,
    pub endpoint: Endpoint,
    /// Whether `endpoint` is in the global endpoint set. A transfer to an
    /// unregistered endpoint fails regardless of policies.
    pub endpoint_registered: bool,
    pub verdict: MatchVerdict,
}

impl ReachabilityEntry {
    pub fn allowed(&self) -> bool {
        self.endpoint_registered && self.verdict.allowed
    }
}

/// One entry per triple with distinct sender and receiver and a sender that
/// is not receive-only, ordered by sender, receiver, endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReachabilityMatrix {
    pub mode: MatchMode,
    pub entries: Vec<ReachabilityEntry>,
}

impl ReachabilityMatrix {
    pub fn compute(state: &SystemState, options: impl Into<TransferOptions>) -> Self {
        let options = options.into();
        let mut entries = Vec::new();
        for sender in state.applications().filter(|a| !a.receive_only) {
            for receiver in state.applications().filter(|r| r.app_id != sender.app_id) {
                for endpoint in &receiver.listen_endpoints {
                    entries.push(ReachabilityEntry {
                        sender: sender.app_id,
                        receiver: receiver.app_id,
                        endpoint: endpoint.clone(),
                        endpoint_registered: state.endpoints().contains(endpoint),
                        verdict: evaluate(
                            state.policies(),
                            &sender.send_endpoint,
                            endpoint,
                            options.mode,
                        ),
                    });
                }
            }
        }
        Self {
            mode: options.mode,
            entries,
        }
    }

    pub fn allowed(&self) -> impl Iterator<Item = &ReachabilityEntry> {
        self.entries.iter().filter(|e| e.allowed())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
