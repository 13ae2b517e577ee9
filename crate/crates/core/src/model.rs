//! Domain types: CIDR blocks, namespaces, endpoints, endpoint-pair policies,
//! applications and the global system state.
//!
//! Every constructor validates its input, so a value of any of these types
//! always satisfies the type's invariants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("octet {0} out of range 0..=255")]
    OctetOutOfRange(u32),
    #[error("prefix length {0} out of range 0..=32")]
    PrefixOutOfRange(u32),
    #[error("invalid CIDR string {0:?}")]
    InvalidCidrString(String),
    #[error("port {0} out of range 1..=65535")]
    PortOutOfRange(u32),
    #[error("namespace name must not be empty")]
    EmptyNamespace,
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("endpoint must carry at least one of cidr, namespace, port, label")]
    EmptyEndpoint,
    #[error("direction must be 0 (ingress) or 1 (egress), got {0}")]
    InvalidDirection(u64),
}

/// An IPv4 block: four octets plus a prefix length.
///
/// The octets are kept exactly as written (`10.29.1.23/28` is not rewritten to
/// its network base), so structural equality is over the literal form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cidr {
    octets: [u8; 4],
    sig_bits: u8,
}

impl Cidr {
    pub fn new(b1: u32, b2: u32, b3: u32, b4: u32, sig_bits: u32) -> Result<Self, ModelError> {
        let mut octets = [0u8; 4];
        for (slot, value) in octets.iter_mut().zip([b1, b2, b3, b4]) {
            *slot = u8::try_from(value).map_err(|_| ModelError::OctetOutOfRange(value))?;
        }
        Self::from_octets(octets, sig_bits)
    }

    pub fn from_octets(octets: [u8; 4], sig_bits: u32) -> Result<Self, ModelError> {
        if sig_bits > 32 {
            return Err(ModelError::PrefixOutOfRange(sig_bits));
        }
        Ok(Self {
            octets,
            sig_bits: sig_bits as u8,
        })
    }

    /// A single host address (`/32`).
    pub fn host(addr: Ipv4Addr) -> Self {
        Self {
            octets: addr.octets(),
            sig_bits: 32,
        }
    }

    pub fn octets(&self) -> [u8; 4] {
        self.octets
    }

    pub fn sig_bits(&self) -> u32 {
        u32::from(self.sig_bits)
    }

    pub fn address(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.octets)
    }

    pub fn to_u32(&self) -> u32 {
        u32::from_be_bytes(self.octets)
    }

    pub fn mask(&self) -> u32 {
        match self.sig_bits {
            0 => 0,
            bits => u32::MAX << (32 - u32::from(bits)),
        }
    }

    pub fn network(&self) -> u32 {
        self.to_u32() & self.mask()
    }

    /// Number of addresses covered by the block.
    pub fn size(&self) -> u64 {
        1u64 << (32 - self.sig_bits())
    }

    /// `mk_CIDR(0,0,0,0,0)`, the "no CIDR" placeholder used by scenario encodings.
    pub fn is_sentinel(&self) -> bool {
        self.octets == [0; 4] && self.sig_bits == 0
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.address(), self.sig_bits)
    }
}

impl FromStr for Cidr {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || ModelError::InvalidCidrString(s.to_string());
        let (addr, prefix) = s.trim().split_once('/').ok_or_else(invalid)?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| invalid())?;
        if prefix.is_empty() || !prefix.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        let prefix: u32 = prefix.parse().map_err(|_| invalid())?;
        Self::from_octets(addr.octets(), prefix).map_err(|_| invalid())
    }
}

impl Serialize for Cidr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cidr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A kubernetes namespace. The id only takes part in structural equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawNamespace")]
pub struct Namespace {
    name: String,
    id: u32,
}

#[derive(Deserialize)]
struct RawNamespace {
    name: String,
    id: u32,
}

impl TryFrom<RawNamespace> for Namespace {
    type Error = ModelError;

    fn try_from(raw: RawNamespace) -> Result<Self, Self::Error> {
        Namespace::new(raw.name, raw.id)
    }
}

impl Namespace {
    pub const SENTINEL_NAME: &'static str = "-";

    pub fn new(name: impl Into<String>, id: u32) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyNamespace);
        }
        Ok(Self { name, id })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    /// `mk_Namespace("-", 0)`.
    pub fn is_sentinel(&self) -> bool {
        self.name == Self::SENTINEL_NAME && self.id == 0
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.name, self.id)
    }
}

/// A TCP/UDP port in `1..=65535`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Port(u16);

impl Port {
    pub fn new(value: u32) -> Result<Self, ModelError> {
        match u16::try_from(value) {
            Ok(p) if p != 0 => Ok(Self(p)),
            _ => Err(ModelError::PortOutOfRange(value)),
        }
    }

    pub fn get(self) -> u16 {
        self.0
    }
}

impl TryFrom<u32> for Port {
    type Error = ModelError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Port::new(value)
    }
}

impl From<Port> for u32 {
    fn from(port: Port) -> u32 {
        u32::from(port.0)
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The unit of addressability: any non-empty combination of CIDR, namespace,
/// port and label. Absent fields are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawEndpoint")]
pub struct Endpoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    cidr: Option<Cidr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    namespace: Option<Namespace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    port: Option<Port>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    #[serde(default)]
    cidr: Option<Cidr>,
    #[serde(default)]
    namespace: Option<Namespace>,
    #[serde(default)]
    port: Option<Port>,
    #[serde(default)]
    label: Option<String>,
}

impl TryFrom<RawEndpoint> for Endpoint {
    type Error = ModelError;

    fn try_from(raw: RawEndpoint) -> Result<Self, Self::Error> {
        Endpoint::new(raw.cidr, raw.namespace, raw.port, raw.label)
    }
}

impl Endpoint {
    pub fn new(
        cidr: Option<Cidr>,
        namespace: Option<Namespace>,
        port: Option<Port>,
        label: Option<String>,
    ) -> Result<Self, ModelError> {
        if label.as_deref() == Some("") {
            return Err(ModelError::EmptyLabel);
        }
        if cidr.is_none() && namespace.is_none() && port.is_none() && label.is_none() {
            return Err(ModelError::EmptyEndpoint);
        }
        Ok(Self {
            cidr,
            namespace,
            port,
            label,
        })
    }

    /// Builds an endpoint from the placeholder-style encoding used by the
    /// scenario files: `0.0.0.0/0`, namespace `("-", 0)`, port `0` and the
    /// empty label all mean "absent".
    pub fn from_sentinels(
        cidr: Cidr,
        namespace: Namespace,
        port: u32,
        label: &str,
    ) -> Result<Self, ModelError> {
        let cidr = (!cidr.is_sentinel()).then_some(cidr);
        let namespace = (!namespace.is_sentinel()).then_some(namespace);
        let port = match port {
            0 => None,
            p => Some(Port::new(p)?),
        };
        let label = (!label.is_empty()).then(|| label.to_string());
        Self::new(cidr, namespace, port, label)
    }

    /// Inverse of [`Endpoint::from_sentinels`].
    pub fn to_sentinels(&self) -> (Cidr, Namespace, u32, String) {
        let cidr = self.cidr.unwrap_or(Cidr {
            octets: [0; 4],
            sig_bits: 0,
        });
        let namespace = self.namespace.clone().unwrap_or(Namespace {
            name: Namespace::SENTINEL_NAME.to_string(),
            id: 0,
        });
        let port = self.port.map_or(0, u32::from);
        let label = self.label.clone().unwrap_or_default();
        (cidr, namespace, port, label)
    }

    pub fn cidr(&self) -> Option<&Cidr> {
        self.cidr.as_ref()
    }

    pub fn namespace(&self) -> Option<&Namespace> {
        self.namespace.as_ref()
    }

    pub fn port(&self) -> Option<Port> {
        self.port
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(cidr) = &self.cidr {
            parts.push(format!("cidr={cidr}"));
        }
        if let Some(ns) = &self.namespace {
            parts.push(format!("ns={ns}"));
        }
        if let Some(port) = self.port {
            parts.push(format!("port={port}"));
        }
        if let Some(label) = &self.label {
            parts.push(format!("label={label}"));
        }
        write!(f, "({})", parts.join(" "))
    }
}

/// Policy direction, serialized as `0` (ingress) or `1` (egress).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub enum Direction {
    Ingress,
    Egress,
}

impl Direction {
    pub fn code(self) -> u64 {
        match self {
            Direction::Ingress => 0,
            Direction::Egress => 1,
        }
    }
}

impl TryFrom<u64> for Direction {
    type Error = ModelError;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Direction::Ingress),
            1 => Ok(Direction::Egress),
            other => Err(ModelError::InvalidDirection(other)),
        }
    }
}

impl From<Direction> for u64 {
    fn from(direction: Direction) -> u64 {
        direction.code()
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Ingress => "ingress",
            Direction::Egress => "egress",
        })
    }
}

/// Where a policy came from: the source document and the rule inside it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PolicyOrigin {
    pub document: String,
    pub section: Direction,
    pub rule: usize,
}

impl fmt::Display for PolicyOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} rule {}", self.document, self.section, self.rule)
    }
}

/// One endpoint pair mapped to a direction.
///
/// Ingress pairs are `(receiver, sender)`, egress pairs `(sender, receiver)`.
/// Equality, ordering and hashing ignore `origin`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Policy {
    direction: Direction,
    first: Endpoint,
    second: Endpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<PolicyOrigin>,
}

impl Policy {
    pub fn new(first: Endpoint, second: Endpoint, direction: Direction) -> Self {
        Self {
            direction,
            first,
            second,
            origin: None,
        }
    }

    pub fn with_origin(mut self, origin: PolicyOrigin) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn first(&self) -> &Endpoint {
        &self.first
    }

    pub fn second(&self) -> &Endpoint {
        &self.second
    }

    pub fn pair(&self) -> (&Endpoint, &Endpoint) {
        (&self.first, &self.second)
    }

    pub fn origin(&self) -> Option<&PolicyOrigin> {
        self.origin.as_ref()
    }

    /// Serialized form with the origin stripped; the total order used to
    /// pick a deterministic match among several permitting policies.
    pub fn canonical_key(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            direction: Direction,
            first: &'a Endpoint,
            second: &'a Endpoint,
        }
        serde_json::to_string(&Key {
            direction: self.direction,
            first: &self.first,
            second: &self.second,
        })
        .expect("policy serialization is infallible")
    }

    fn structural(&self) -> (Direction, &Endpoint, &Endpoint) {
        (self.direction, &self.first, &self.second)
    }
}

impl PartialEq for Policy {
    fn eq(&self, other: &Self) -> bool {
        self.structural() == other.structural()
    }
}

impl Eq for Policy {}

impl std::hash::Hash for Policy {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.structural().hash(state);
    }
}

impl PartialOrd for Policy {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Policy {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.structural().cmp(&other.structural())
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.direction, self.first, self.second)?;
        if let Some(origin) = &self.origin {
            write!(f, " [{origin}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppId(pub u32);

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Application {
    pub app_id: AppId,
    pub send_endpoint: Endpoint,
    pub listen_endpoints: BTreeSet<Endpoint>,
    pub receive_only: bool,
    pub applied_policies: BTreeSet<Policy>,
}

static NEXT_MESSAGE: AtomicU64 = AtomicU64::new(0);

/// Opaque data token; every call to [`Message::new`] yields a distinct value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Message(u64);

impl Message {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        Self(NEXT_MESSAGE.fetch_add(1, AtomicOrdering::Relaxed))
    }
}

/// Global state: deployed applications, policies, endpoints and the data
/// received by each application.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SystemState {
    pub(crate) applications: BTreeMap<AppId, Application>,
    pub(crate) policies: BTreeSet<Policy>,
    pub(crate) endpoints: BTreeSet<Endpoint>,
    pub(crate) app_data: BTreeMap<AppId, Vec<Message>>,
}

impl SystemState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn applications(&self) -> impl ExactSizeIterator<Item = &Application> {
        self.applications.values()
    }

    pub fn policies(&self) -> &BTreeSet<Policy> {
        &self.policies
    }

    pub fn endpoints(&self) -> &BTreeSet<Endpoint> {
        &self.endpoints
    }

    pub fn app_data(&self) -> &BTreeMap<AppId, Vec<Message>> {
        &self.app_data
    }

    pub fn received(&self, app: AppId) -> Option<&[Message]> {
        self.app_data.get(&app).map(Vec::as_slice)
    }

    pub fn total_messages(&self) -> usize {
        self.app_data.values().map(Vec::len).sum()
    }

    /// Checks the state invariants that are not already guaranteed by the
    /// container types: application ids agree with their map keys and every
    /// data log belongs to a deployed application.
    pub fn invariants_hold(&self) -> bool {
        self.applications.iter().all(|(id, app)| *id == app.app_id)
            && self
                .app_data
                .keys()
                .all(|id| self.applications.contains_key(id))
    }
}

/// An empty system.
pub fn new_system() -> SystemState {
    SystemState::new()
}
