//! Contract-checked state transitions over [`SystemState`].
//!
//! Each operation checks its precondition before touching the state, so a
//! failed call leaves the state exactly as it was.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{evaluate, MatchMode, MatchVerdict};
use crate::model::{
    AppId, Application, Cidr, Direction, Endpoint, Message, ModelError, Namespace, Policy, Port,
    SystemState,
};

/// The operation whose contract was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operation {
    CreateEndpoint,
    CreatePolicy,
    DeployApplication,
    GetApplication,
    SendData,
    TransferData,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for Operation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "CreateEndpoint" => Operation::CreateEndpoint,
            "CreatePolicy" => Operation::CreatePolicy,
            "DeployApplication" => Operation::DeployApplication,
            "GetApplication" => Operation::GetApplication,
            "SendData" => Operation::SendData,
            "TransferData" => Operation::TransferData,
            other => return Err(format!("unknown operation {other:?}")),
        })
    }
}

/// Data-free discriminant of [`EngineError`], used to match expected failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    InvalidEndpoint,
    UnknownApplication,
    DuplicateEndpoint,
    DuplicatePolicy,
    DuplicateApplicationId,
    SenderUnknown,
    SenderReceiveOnly,
    ReceiverUnknown,
    EndpointUnknown,
    NotListening,
    PolicyViolation,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use ViolationKind::*;
        Ok(match s {
            "InvalidEndpoint" => InvalidEndpoint,
            "UnknownApplication" => UnknownApplication,
            "DuplicateEndpoint" => DuplicateEndpoint,
            "DuplicatePolicy" => DuplicatePolicy,
            "DuplicateApplicationId" => DuplicateApplicationId,
            "SenderUnknown" => SenderUnknown,
            "SenderReceiveOnly" => SenderReceiveOnly,
            "ReceiverUnknown" => ReceiverUnknown,
            "EndpointUnknown" => EndpointUnknown,
            "NotListening" => NotListening,
            "PolicyViolation" => PolicyViolation,
            other => return Err(format!("unknown violation kind {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(#[from] ModelError),
    #[error("no application with id {0}")]
    UnknownApplication(AppId),
    #[error("endpoint {0} already exists")]
    DuplicateEndpoint(Box<Endpoint>),
    #[error("policy {0} already exists")]
    DuplicatePolicy(Box<Policy>),
    #[error("application id {0} already deployed")]
    DuplicateApplicationId(AppId),
    #[error("sender application {0} does not exist")]
    SenderUnknown(AppId),
    #[error("sender application {0} is receive-only")]
    SenderReceiveOnly(AppId),
    #[error("receiver application {0} does not exist")]
    ReceiverUnknown(AppId),
    #[error("endpoint {0} is not a known endpoint")]
    EndpointUnknown(Box<Endpoint>),
    #[error("receiver application {receiver} does not listen on {endpoint}")]
    NotListening {
        receiver: AppId,
        endpoint: Box<Endpoint>,
    },
    #[error("no policy permits the transfer")]
    PolicyViolation(Box<MatchVerdict>),
}

impl EngineError {
    pub fn kind(&self) -> ViolationKind {
        match self {
            EngineError::InvalidEndpoint(_) => ViolationKind::InvalidEndpoint,
            EngineError::UnknownApplication(_) => ViolationKind::UnknownApplication,
            EngineError::DuplicateEndpoint(_) => ViolationKind::DuplicateEndpoint,
            EngineError::DuplicatePolicy(_) => ViolationKind::DuplicatePolicy,
            EngineError::DuplicateApplicationId(_) => ViolationKind::DuplicateApplicationId,
            EngineError::SenderUnknown(_) => ViolationKind::SenderUnknown,
            EngineError::SenderReceiveOnly(_) => ViolationKind::SenderReceiveOnly,
            EngineError::ReceiverUnknown(_) => ViolationKind::ReceiverUnknown,
            EngineError::EndpointUnknown(_) => ViolationKind::EndpointUnknown,
            EngineError::NotListening { .. } => ViolationKind::NotListening,
            EngineError::PolicyViolation(_) => ViolationKind::PolicyViolation,
        }
    }

    /// The operation whose precondition failed.
    pub fn operation(&self) -> Operation {
        match self {
            EngineError::InvalidEndpoint(_) | EngineError::DuplicateEndpoint(_) => {
                Operation::CreateEndpoint
            }
            EngineError::DuplicatePolicy(_) => Operation::CreatePolicy,
            EngineError::DuplicateApplicationId(_) => Operation::DeployApplication,
            EngineError::UnknownApplication(_) => Operation::GetApplication,
            EngineError::SenderUnknown(_) | EngineError::SenderReceiveOnly(_) => {
                Operation::SendData
            }
            EngineError::ReceiverUnknown(_)
            | EngineError::EndpointUnknown(_)
            | EngineError::NotListening { .. }
            | EngineError::PolicyViolation(_) => Operation::TransferData,
        }
    }

    pub fn verdict(&self) -> Option<&MatchVerdict> {
        match self {
            EngineError::PolicyViolation(verdict) => Some(verdict),
            _ => None,
        }
    }
}

/// How transfers are checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TransferOptions {
    pub mode: MatchMode,
    /// Also require the target endpoint to be one of the receiver's listen
    /// endpoints.
    pub check_listen: bool,
}

impl TransferOptions {
    pub fn new(mode: MatchMode) -> Self {
        Self {
            mode,
            check_listen: false,
        }
    }
}

impl From<MatchMode> for TransferOptions {
    fn from(mode: MatchMode) -> Self {
        Self::new(mode)
    }
}

impl SystemState {
    pub fn get_application(&self, aid: AppId) -> Result<&Application, EngineError> {
        self.applications
            .get(&aid)
            .ok_or(EngineError::UnknownApplication(aid))
    }

    pub fn add_endpoint(&mut self, endpoint: Endpoint) -> Result<Endpoint, EngineError> {
        if self.endpoints.contains(&endpoint) {
            return Err(EngineError::DuplicateEndpoint(Box::new(endpoint)));
        }
        self.endpoints.insert(endpoint.clone());
        Ok(endpoint)
    }

    pub fn create_endpoint(
        &mut self,
        cidr: Option<Cidr>,
        namespace: Option<Namespace>,
        port: Option<Port>,
        label: Option<String>,
    ) -> Result<Endpoint, EngineError> {
        let endpoint = Endpoint::new(cidr, namespace, port, label)?;
        self.add_endpoint(endpoint)
    }

    pub fn add_policy(&mut self, policy: Policy) -> Result<Policy, EngineError> {
        if self.policies.contains(&policy) {
            return Err(EngineError::DuplicatePolicy(Box::new(policy)));
        }
        self.policies.insert(policy.clone());
        Ok(policy)
    }

    pub fn create_policy(
        &mut self,
        first: Endpoint,
        second: Endpoint,
        direction: Direction,
    ) -> Result<Policy, EngineError> {
        self.add_policy(Policy::new(first, second, direction))
    }

    /// Deploys an application and gives it an empty received-data log.
    pub fn deploy_application(
        &mut self,
        aid: AppId,
        send_endpoint: Endpoint,
        listen_endpoints: BTreeSet<Endpoint>,
        receive_only: bool,
        applied_policies: BTreeSet<Policy>,
    ) -> Result<(), EngineError> {
        if self.applications.contains_key(&aid) {
            return Err(EngineError::DuplicateApplicationId(aid));
        }
        self.applications.insert(
            aid,
            Application {
                app_id: aid,
                send_endpoint,
                listen_endpoints,
                receive_only,
                applied_policies,
            },
        );
        self.app_data.entry(aid).or_default();
        Ok(())
    }

    /// Sends a fresh message from `sid` to `rid` through endpoint `rep`.
    pub fn send_data(
        &mut self,
        sid: AppId,
        rid: AppId,
        rep: &Endpoint,
        options: impl Into<TransferOptions>,
    ) -> Result<MatchVerdict, EngineError> {
        let sender = self
            .applications
            .get(&sid)
            .ok_or(EngineError::SenderUnknown(sid))?;
        if sender.receive_only {
            return Err(EngineError::SenderReceiveOnly(sid));
        }
        self.transfer_data(sid, rid, rep, Message::new(), options)
    }

    /// Checks whether a transfer would be permitted, without changing state.
    pub fn check_transfer(
        &self,
        sapp: AppId,
        rapp: AppId,
        rep: &Endpoint,
        options: impl Into<TransferOptions>,
    ) -> Result<MatchVerdict, EngineError> {
        let options = options.into();
        if !self.endpoints.contains(rep) {
            return Err(EngineError::EndpointUnknown(Box::new(rep.clone())));
        }
        let sender = self.get_application(sapp)?;
        let receiver = self
            .applications
            .get(&rapp)
            .ok_or(EngineError::ReceiverUnknown(rapp))?;
        if options.check_listen && !receiver.listen_endpoints.contains(rep) {
            return Err(EngineError::NotListening {
                receiver: rapp,
                endpoint: Box::new(rep.clone()),
            });
        }
        let verdict = evaluate(&self.policies, &sender.send_endpoint, rep, options.mode);
        if verdict.allowed {
            Ok(verdict)
        } else {
            Err(EngineError::PolicyViolation(Box::new(verdict)))
        }
    }

    /// Appends `msg` to the receiver's log if some policy permits the
    /// transfer from the sender's send endpoint to `rep`.
    pub fn transfer_data(
        &mut self,
        sapp: AppId,
        rapp: AppId,
        rep: &Endpoint,
        msg: Message,
        options: impl Into<TransferOptions>,
    ) -> Result<MatchVerdict, EngineError> {
        let verdict = self.check_transfer(sapp, rapp, rep, options)?;
        let log = self.app_data.entry(rapp).or_default();
        let before = log.len();
        log.push(msg);
        debug_assert_eq!(log.len(), before + 1);
        Ok(verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::new_system;

    fn ep_ns(name: &str) -> Endpoint {
        Endpoint::new(None, Some(Namespace::new(name, 1).unwrap()), None, None).unwrap()
    }

    fn client() -> Endpoint {
        Endpoint::new(Some("10.28.1.2/30".parse().unwrap()), None, None, None).unwrap()
    }

    fn webui() -> Endpoint {
        Endpoint::new(
            None,
            Some(Namespace::new("NS-UI", 1).unwrap()),
            Some(Port::new(443).unwrap()),
            Some("WebUI".into()),
        )
        .unwrap()
    }

    fn scenario1(violating: bool) -> SystemState {
        let mut s = new_system();
        let ep1 = s.add_endpoint(client()).unwrap();
        let ep2 = s.add_endpoint(webui()).unwrap();
        let pol = if violating {
            let ep3 = s
                .add_endpoint(
                    Endpoint::new(Some("10.28.1.4/30".parse().unwrap()), None, None, None).unwrap(),
                )
                .unwrap();
            s.create_policy(ep3, ep1.clone(), Direction::Ingress)
                .unwrap()
        } else {
            s.create_policy(ep2.clone(), ep1.clone(), Direction::Ingress)
                .unwrap()
        };
        s.deploy_application(AppId(1), ep1, BTreeSet::new(), false, [pol.clone()].into())
            .unwrap();
        s.deploy_application(AppId(2), ep2.clone(), [ep2].into(), true, [pol].into())
            .unwrap();
        s
    }

    #[test]
    fn get_application_lookup() {
        let s = scenario1(false);
        assert_eq!(s.get_application(AppId(2)).unwrap().app_id, AppId(2));
        assert_eq!(s.get_application(AppId(1)).unwrap().send_endpoint, client());
        assert_eq!(
            s.get_application(AppId(7)),
            Err(EngineError::UnknownApplication(AppId(7)))
        );
    }

    #[test]
    fn duplicates_rejected() {
        let mut s = new_system();
        s.add_endpoint(client()).unwrap();
        assert_eq!(
            s.add_endpoint(client()),
            Err(EngineError::DuplicateEndpoint(Box::new(client())))
        );
        assert_eq!(s.endpoints().len(), 1);
        s.create_policy(webui(), client(), Direction::Ingress)
            .unwrap();
        assert!(matches!(
            s.create_policy(webui(), client(), Direction::Ingress),
            Err(EngineError::DuplicatePolicy(_))
        ));
        s.create_policy(webui(), client(), Direction::Egress)
            .unwrap();
        s.deploy_application(AppId(1), client(), BTreeSet::new(), false, BTreeSet::new())
            .unwrap();
        assert_eq!(
            s.deploy_application(AppId(1), webui(), BTreeSet::new(), false, BTreeSet::new()),
            Err(EngineError::DuplicateApplicationId(AppId(1)))
        );
        assert!(matches!(
            s.create_endpoint(None, None, None, None),
            Err(EngineError::InvalidEndpoint(ModelError::EmptyEndpoint))
        ));
    }

    #[test]
    fn create_endpoint_three_fields() {
        let mut s = new_system();
        let ep = s
            .create_endpoint(
                None,
                Some(Namespace::new("NS-UI", 1).unwrap()),
                Some(Port::new(443).unwrap()),
                Some("WebUI".into()),
            )
            .unwrap();
        assert_eq!(ep, webui());
    }

    #[test]
    fn deploy_initialises_log() {
        let s = scenario1(false);
        assert_eq!(s.received(AppId(1)), Some(&[][..]));
        assert_eq!(s.received(AppId(2)), Some(&[][..]));
        assert!(s.invariants_hold());
    }

    #[test]
    fn scenario1_send_allowed() {
        let mut s = scenario1(false);
        let verdict = s
            .send_data(AppId(1), AppId(2), &webui(), MatchMode::Strict)
            .unwrap();
        assert!(verdict.allowed);
        assert_eq!(s.received(AppId(2)).unwrap().len(), 1);
    }

    #[test]
    fn scenario1_violation_denied_without_state_change() {
        let mut s = scenario1(true);
        let before = s.clone();
        let err = s
            .send_data(AppId(1), AppId(2), &webui(), MatchMode::Strict)
            .unwrap_err();
        assert_eq!(err.kind(), ViolationKind::PolicyViolation);
        assert_eq!(err.operation(), Operation::TransferData);
        assert_eq!(s, before);
        let again = s
            .send_data(AppId(1), AppId(2), &webui(), MatchMode::Strict)
            .unwrap_err();
        assert_eq!(err, again);
    }

    #[test]
    fn send_preconditions() {
        let mut s = scenario1(false);
        assert_eq!(
            s.send_data(AppId(2), AppId(1), &client(), MatchMode::Strict),
            Err(EngineError::SenderReceiveOnly(AppId(2)))
        );
        assert_eq!(
            s.send_data(AppId(9), AppId(2), &webui(), MatchMode::Strict),
            Err(EngineError::SenderUnknown(AppId(9)))
        );
        assert_eq!(
            s.send_data(AppId(1), AppId(5), &webui(), MatchMode::Strict),
            Err(EngineError::ReceiverUnknown(AppId(5)))
        );
        let never_created = ep_ns("nowhere");
        assert_eq!(
            s.transfer_data(
                AppId(1),
                AppId(2),
                &never_created,
                Message::new(),
                MatchMode::Strict
            ),
            Err(EngineError::EndpointUnknown(Box::new(never_created)))
        );
        assert_eq!(s.total_messages(), 0);
    }

    #[test]
    fn empty_system_denies() {
        let mut s = new_system();
        let a = s.add_endpoint(ep_ns("a")).unwrap();
        s.deploy_application(AppId(1), a.clone(), BTreeSet::new(), false, BTreeSet::new())
            .unwrap();
        s.deploy_application(
            AppId(2),
            a.clone(),
            [a.clone()].into(),
            false,
            BTreeSet::new(),
        )
        .unwrap();
        let err = s
            .send_data(AppId(1), AppId(2), &a, MatchMode::Strict)
            .unwrap_err();
        assert_eq!(err.verdict(), Some(&MatchVerdict::deny_all()));
    }

    #[test]
    fn listen_check_is_opt_in() {
        let mut s = new_system();
        let cmd = s.add_endpoint(ep_ns("NS-Command")).unwrap();
        let asset = s.add_endpoint(client()).unwrap();
        let stray = s.add_endpoint(ep_ns("NS-Web")).unwrap();
        s.create_policy(cmd.clone(), stray.clone(), Direction::Egress)
            .unwrap();
        s.deploy_application(
            AppId(1),
            asset.clone(),
            [asset].into(),
            false,
            BTreeSet::new(),
        )
        .unwrap();
        s.deploy_application(AppId(2), cmd, BTreeSet::new(), false, BTreeSet::new())
            .unwrap();
        assert!(s
            .send_data(AppId(2), AppId(1), &stray, MatchMode::Strict)
            .is_ok());
        let strict_listen = TransferOptions {
            mode: MatchMode::Strict,
            check_listen: true,
        };
        assert_eq!(
            s.send_data(AppId(2), AppId(1), &stray, strict_listen)
                .unwrap_err()
                .kind(),
            ViolationKind::NotListening
        );
        assert_eq!(s.received(AppId(1)).unwrap().len(), 1);
    }
}
