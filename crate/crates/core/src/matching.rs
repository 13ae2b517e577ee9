//! Deciding whether a transfer between two endpoints is permitted by a policy.
//!
//! Two modes are supported. [`MatchMode::Strict`] compares endpoints by
//! structural equality, exactly like the equality-based precondition of the
//! transfer operation. [`MatchMode::Semantic`] treats each present field of a
//! policy endpoint as a constraint: CIDRs by containment, namespace by name,
//! port and label by equality.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Cidr, Direction, Endpoint, Policy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Strict,
    Semantic,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Strict => "strict",
            MatchMode::Semantic => "semantic",
        })
    }
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(MatchMode::Strict),
            "semantic" => Ok(MatchMode::Semantic),
            other => Err(format!(
                "unknown match mode {other:?} (expected strict or semantic)"
            )),
        }
    }
}

/// The address is wider than the block, so containment is not defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{address} is wider than {block}")]
pub struct ContainmentUndefined {
    pub block: Cidr,
    pub address: Cidr,
}

/// True iff the first `block.sig_bits()` bits of both addresses agree.
pub fn cidr_contains(block: &Cidr, address: &Cidr) -> Result<bool, ContainmentUndefined> {
    if address.sig_bits() < block.sig_bits() {
        return Err(ContainmentUndefined {
            block: *block,
            address: *address,
        });
    }
    Ok((block.to_u32() ^ address.to_u32()) & block.mask() == 0)
}

/// Which side of the transfer a policy endpoint was checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Sender => "sender",
            Role::Receiver => "receiver",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointField {
    Cidr,
    Namespace,
    Port,
    Label,
}

impl fmt::Display for EndpointField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndpointField::Cidr => "cidr",
            EndpointField::Namespace => "namespace",
            EndpointField::Port => "port",
            EndpointField::Label => "label",
        })
    }
}

/// The first predicate of a policy that rejected a transfer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum FailedPredicate {
    /// The endpoints match the policy only with sender and receiver swapped.
    Orientation { direction: Direction },
    /// A field required by the policy differs from (or is missing in) the
    /// concrete endpoint.
    Field { role: Role, field: EndpointField },
    /// The concrete address lies outside the policy's block.
    Containment {
        role: Role,
        block: Cidr,
        address: Cidr,
    },
    /// The concrete address is wider than the policy's block.
    ContainmentUndefined {
        role: Role,
        block: Cidr,
        address: Cidr,
    },
}

impl fmt::Display for FailedPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailedPredicate::Orientation { direction } => {
                write!(
                    f,
                    "orientation: {direction} pair matches only with sender and receiver swapped"
                )
            }
            FailedPredicate::Field { role, field } => write!(f, "{role} {field} mismatch"),
            FailedPredicate::Containment {
                role,
                block,
                address,
            } => {
                write!(f, "{role} cidr containment: {address} not in {block}")
            }
            FailedPredicate::ContainmentUndefined {
                role,
                block,
                address,
            } => {
                write!(
                    f,
                    "{role} cidr containment undefined: {address} is wider than {block}"
                )
            }
        }
    }
}

/// Checks one policy endpoint against a concrete endpoint.
pub fn check_endpoint(
    spec: &Endpoint,
    concrete: &Endpoint,
    mode: MatchMode,
    role: Role,
) -> Result<(), FailedPredicate> {
    let field = |field| FailedPredicate::Field { role, field };
    match mode {
        MatchMode::Strict => {
            if spec.cidr() != concrete.cidr() {
                Err(field(EndpointField::Cidr))
            } else if spec.namespace() != concrete.namespace() {
                Err(field(EndpointField::Namespace))
            } else if spec.port() != concrete.port() {
                Err(field(EndpointField::Port))
            } else if spec.label() != concrete.label() {
                Err(field(EndpointField::Label))
            } else {
                Ok(())
            }
        }
        MatchMode::Semantic => {
            if let Some(block) = spec.cidr() {
                let address = concrete.cidr().ok_or(field(EndpointField::Cidr))?;
                match cidr_contains(block, address) {
                    Ok(true) => {}
                    Ok(false) => {
                        return Err(FailedPredicate::Containment {
                            role,
                            block: *block,
                            address: *address,
                        })
                    }
                    Err(_) => {
                        return Err(FailedPredicate::ContainmentUndefined {
                            role,
                            block: *block,
                            address: *address,
                        })
                    }
                }
            }
            if let Some(ns) = spec.namespace() {
                if concrete.namespace().map(|c| c.name()) != Some(ns.name()) {
                    return Err(field(EndpointField::Namespace));
                }
            }
            if spec.port().is_some() && spec.port() != concrete.port() {
                return Err(field(EndpointField::Port));
            }
            if spec.label().is_some() && spec.label() != concrete.label() {
                return Err(field(EndpointField::Label));
            }
            Ok(())
        }
    }
}

pub fn endpoint_matches(spec: &Endpoint, concrete: &Endpoint, mode: MatchMode) -> bool {
    check_endpoint(spec, concrete, mode, Role::Receiver).is_ok()
}

fn check_oriented(
    policy: &Policy,
    sender: &Endpoint,
    receiver: &Endpoint,
    mode: MatchMode,
) -> Result<(), FailedPredicate> {
    let (first, second) = policy.pair();
    match policy.direction() {
        Direction::Ingress => {
            check_endpoint(first, receiver, mode, Role::Receiver)?;
            check_endpoint(second, sender, mode, Role::Sender)
        }
        Direction::Egress => {
            check_endpoint(first, sender, mode, Role::Sender)?;
            check_endpoint(second, receiver, mode, Role::Receiver)
        }
    }
}

/// Checks a single policy, reporting the first failing predicate.
pub fn check_policy(
    policy: &Policy,
    sender: &Endpoint,
    receiver: &Endpoint,
    mode: MatchMode,
) -> Result<(), FailedPredicate> {
    check_oriented(policy, sender, receiver, mode).map_err(|failure| {
        if check_oriented(policy, receiver, sender, mode).is_ok() {
            FailedPredicate::Orientation {
                direction: policy.direction(),
            }
        } else {
            failure
        }
    })
}

pub fn policy_permits(
    policy: &Policy,
    sender: &Endpoint,
    receiver: &Endpoint,
    mode: MatchMode,
) -> bool {
    check_oriented(policy, sender, receiver, mode).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicyFailure {
    pub policy: Policy,
    pub predicate: FailedPredicate,
}

/// Outcome of evaluating a transfer against a policy set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchVerdict {
    pub allowed: bool,
    pub matched_policy: Option<Policy>,
    pub failed_predicates: Vec<PolicyFailure>,
}

impl MatchVerdict {
    pub fn deny_all() -> Self {
        Self {
            allowed: false,
            matched_policy: None,
            failed_predicates: Vec::new(),
        }
    }
}

fn sorted_by_key<'a, I>(policies: I) -> Vec<(String, &'a Policy)>
where
    I: IntoIterator<Item = &'a Policy>,
{
    let mut keyed: Vec<_> = policies
        .into_iter()
        .map(|p| (p.canonical_key(), p))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed
}

/// Allowed iff at least one policy permits the transfer. The reported match is
/// the permitting policy with the smallest canonical serialization; on denial
/// every policy contributes its first failing predicate, in the same order.
pub fn evaluate<'a, I>(
    policies: I,
    sender: &Endpoint,
    receiver: &Endpoint,
    mode: MatchMode,
) -> MatchVerdict
where
    I: IntoIterator<Item = &'a Policy>,
{
    let keyed = sorted_by_key(policies);
    if let Some((_, policy)) = keyed
        .iter()
        .find(|(_, p)| policy_permits(p, sender, receiver, mode))
    {
        return MatchVerdict {
            allowed: true,
            matched_policy: Some((*policy).clone()),
            failed_predicates: Vec::new(),
        };
    }
    let failed_predicates = keyed
        .into_iter()
        .filter_map(|(_, policy)| {
            check_policy(policy, sender, receiver, mode)
                .err()
                .map(|predicate| PolicyFailure {
                    policy: policy.clone(),
                    predicate,
                })
        })
        .collect();
    MatchVerdict {
        allowed: false,
        matched_policy: None,
        failed_predicates,
    }
}

/// Per-policy result used by explanations: `Ok` for a match, otherwise the
/// first failing predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyExplanation {
    pub policy: Policy,
    pub result: Result<(), FailedPredicate>,
}

pub fn explain<'a, I>(
    policies: I,
    sender: &Endpoint,
    receiver: &Endpoint,
    mode: MatchMode,
) -> Vec<PolicyExplanation>
where
    I: IntoIterator<Item = &'a Policy>,
{
    sorted_by_key(policies)
        .into_iter()
        .map(|(_, policy)| PolicyExplanation {
            policy: policy.clone(),
            result: check_policy(policy, sender, receiver, mode),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Namespace, Port};
    use proptest::prelude::*;

    fn cidr(s: &str) -> Cidr {
        s.parse().unwrap()
    }

    /// Independent containment oracle. Blocks of at most 2^16 addresses are
    /// enumerated one address at a time; larger blocks fall back to interval
    /// arithmetic on the address range computed by integer division.
    fn brute_force_contains(block: &Cidr, address: &Cidr) -> bool {
        let range = |c: &Cidr| {
            let size = 1u64 << (32 - c.sig_bits());
            let lo = u64::from(c.to_u32()) / size * size;
            (lo, lo + size - 1)
        };
        let (lo, hi) = range(block);
        let (alo, ahi) = range(address);
        if block.size() <= 1 << 16 {
            (lo..=hi).any(|a| a == alo) && (lo..=hi).any(|a| a == ahi)
        } else {
            lo <= alo && ahi <= hi
        }
    }

    fn ep(
        cidr_: Option<&str>,
        ns: Option<&str>,
        port: Option<u32>,
        label: Option<&str>,
    ) -> Endpoint {
        Endpoint::new(
            cidr_.map(cidr),
            ns.map(|n| Namespace::new(n, 1).unwrap()),
            port.map(|p| Port::new(p).unwrap()),
            label.map(str::to_string),
        )
        .unwrap()
    }

    #[test]
    fn containment_examples() {
        let block = cidr("10.28.1.2/30");
        assert!(brute_force_contains(&block, &cidr("10.28.1.3/32")));
        assert!(!brute_force_contains(&block, &cidr("10.28.1.4/32")));
        assert_eq!(cidr_contains(&block, &cidr("10.28.1.3/32")), Ok(true));
        assert_eq!(cidr_contains(&block, &cidr("10.28.1.4/32")), Ok(false));
        assert_eq!(
            cidr_contains(&cidr("0.0.0.0/0"), &cidr("203.0.113.9/32")),
            Ok(true)
        );
        assert_eq!(
            cidr_contains(&cidr("10.29.1.23/28"), &cidr("10.29.1.17/32")),
            Ok(true)
        );
        assert_eq!(
            cidr_contains(&cidr("10.29.1.23/28"), &cidr("10.29.1.32/32")),
            Ok(false)
        );
        assert!(cidr_contains(&cidr("10.28.1.2/30"), &cidr("10.28.1.0/24")).is_err());
    }

    #[test]
    fn containment_exhaustive_slash_24_and_up() {
        for prefix in 24..=32 {
            let block = Cidr::new(192, 168, 7, 77, prefix).unwrap();
            for host in 0..=255u32 {
                let addr = Cidr::new(192, 168, 7, host, 32).unwrap();
                assert_eq!(
                    cidr_contains(&block, &addr).unwrap(),
                    brute_force_contains(&block, &addr),
                    "{block} vs {addr}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn containment_matches_oracle(raw_block in any::<u32>(), raw_addr in any::<u32>(), prefix in 8u32..=32, aprefix in 0u32..=32) {
            let block = Cidr::from_octets(raw_block.to_be_bytes(), prefix).unwrap();
            // keep addresses near the block so both outcomes occur
            let near = (raw_block & !0xffff) | (raw_addr & 0xffff);
            let address = Cidr::from_octets(near.to_be_bytes(), aprefix.max(prefix)).unwrap();
            prop_assert_eq!(cidr_contains(&block, &address).unwrap(), brute_force_contains(&block, &address));
        }
    }

    #[test]
    fn endpoint_match_examples() {
        let spec = ep(Some("10.28.1.2/30"), None, None, None);
        assert!(endpoint_matches(&spec, &spec, MatchMode::Strict));
        assert!(endpoint_matches(
            &spec,
            &ep(Some("10.28.1.1/32"), None, None, None),
            MatchMode::Semantic
        ));
        assert!(!endpoint_matches(
            &spec,
            &ep(Some("10.28.1.1/32"), None, None, None),
            MatchMode::Strict
        ));

        let webui = ep(None, Some("NS-UI"), Some(443), Some("WebUI"));
        let concrete = ep(Some("10.0.0.7/32"), Some("NS-UI"), Some(443), Some("WebUI"));
        assert!(endpoint_matches(&webui, &concrete, MatchMode::Semantic));
        let command = ep(None, Some("NS-UI"), Some(443), Some("Command"));
        assert_eq!(
            check_endpoint(&webui, &command, MatchMode::Semantic, Role::Receiver),
            Err(FailedPredicate::Field {
                role: Role::Receiver,
                field: EndpointField::Label
            })
        );
    }

    #[test]
    fn semantic_namespace_ignores_id() {
        let spec = ep(None, Some("NS-UI"), None, None);
        let other_id =
            Endpoint::new(None, Some(Namespace::new("NS-UI", 9).unwrap()), None, None).unwrap();
        assert!(endpoint_matches(&spec, &other_id, MatchMode::Semantic));
        assert!(!endpoint_matches(&spec, &other_id, MatchMode::Strict));
    }

    #[test]
    fn policy_orientation() {
        let webui = ep(None, Some("NS-UI"), Some(443), Some("WebUI"));
        let client = ep(Some("10.28.1.2/30"), None, None, None);
        let other = ep(Some("10.28.1.4/30"), None, None, None);
        let ingress = Policy::new(webui.clone(), client.clone(), Direction::Ingress);
        assert!(policy_permits(&ingress, &client, &webui, MatchMode::Strict));
        assert!(!policy_permits(
            &ingress,
            &webui,
            &client,
            MatchMode::Strict
        ));
        assert_eq!(
            check_policy(&ingress, &webui, &client, MatchMode::Strict),
            Err(FailedPredicate::Orientation {
                direction: Direction::Ingress
            })
        );
        let wrong = Policy::new(webui.clone(), other, Direction::Ingress);
        assert!(!policy_permits(&wrong, &client, &webui, MatchMode::Strict));
        assert_eq!(
            check_policy(&wrong, &client, &webui, MatchMode::Strict),
            Err(FailedPredicate::Field {
                role: Role::Sender,
                field: EndpointField::Cidr
            })
        );

        let command = ep(None, Some("NS-Command"), None, Some("Command"));
        let asset = ep(Some("10.29.1.23/28"), None, Some(5443), None);
        let egress = Policy::new(command.clone(), asset.clone(), Direction::Egress);
        assert!(policy_permits(&egress, &command, &asset, MatchMode::Strict));
        assert!(!policy_permits(
            &egress,
            &asset,
            &command,
            MatchMode::Strict
        ));
    }

    #[test]
    fn evaluate_deny_by_default_and_tie_break() {
        let a = ep(None, Some("A"), None, None);
        let b = ep(None, Some("B"), None, None);
        let verdict = evaluate(std::iter::empty(), &a, &b, MatchMode::Strict);
        assert_eq!(verdict, MatchVerdict::deny_all());

        let wide = Policy::new(
            ep(None, Some("B"), None, None),
            ep(None, None, None, Some("x")),
            Direction::Ingress,
        );
        let exact = Policy::new(b.clone(), a.clone(), Direction::Ingress);
        let egress = Policy::new(a.clone(), b.clone(), Direction::Egress);
        let forward = [wide.clone(), exact.clone(), egress.clone()];
        let backward = [egress, exact, wide];
        let v1 = evaluate(&forward, &a, &b, MatchMode::Strict);
        let v2 = evaluate(&backward, &a, &b, MatchMode::Strict);
        assert!(v1.allowed);
        assert_eq!(v1, v2);
        let expected = forward
            .iter()
            .filter(|p| policy_permits(p, &a, &b, MatchMode::Strict))
            .min_by_key(|p| p.canonical_key())
            .cloned();
        assert_eq!(v1.matched_policy, expected);
    }

    #[test]
    fn denial_lists_every_policy_once() {
        let a = ep(None, Some("A"), None, None);
        let b = ep(None, Some("B"), None, None);
        let c = ep(None, Some("C"), None, None);
        let policies = [
            Policy::new(c.clone(), a.clone(), Direction::Ingress),
            Policy::new(a.clone(), c.clone(), Direction::Egress),
        ];
        let v = evaluate(&policies, &a, &b, MatchMode::Strict);
        assert!(!v.allowed);
        assert!(v.matched_policy.is_none());
        assert_eq!(v.failed_predicates.len(), 2);
        assert!(v.failed_predicates.iter().all(|f| matches!(
            f.predicate,
            FailedPredicate::Field {
                role: Role::Receiver,
                field: EndpointField::Namespace
            }
        )));
    }

    #[test]
    fn semantic_containment_predicates() {
        let webui = ep(None, Some("NS-UI"), Some(443), Some("WebUI"));
        let policy = Policy::new(
            webui.clone(),
            ep(Some("10.28.1.2/30"), None, None, None),
            Direction::Ingress,
        );
        let outside = ep(Some("10.28.1.4/32"), None, None, None);
        let v = evaluate([&policy], &outside, &webui, MatchMode::Semantic);
        assert!(!v.allowed);
        assert!(matches!(
            v.failed_predicates[0].predicate,
            FailedPredicate::Containment {
                role: Role::Sender,
                ..
            }
        ));
        let wide = ep(Some("10.28.0.0/16"), None, None, None);
        let v = evaluate([&policy], &wide, &webui, MatchMode::Semantic);
        assert!(matches!(
            v.failed_predicates[0].predicate,
            FailedPredicate::ContainmentUndefined { .. }
        ));
        let inside = ep(Some("10.28.1.2/32"), None, None, None);
        assert!(evaluate([&policy], &inside, &webui, MatchMode::Semantic).allowed);
    }
}
