//! `CiliumNetworkPolicy` ingestion.
//!
//! Accepted subset: `metadata.name`, `metadata.namespace`,
//! `spec.endpointSelector.matchLabels`, ingress rules with `fromCIDRSet`,
//! `fromEndpoints` and `toPorts`, egress rules with `toCIDRSet` and
//! `toPorts`. Other keys under `spec` are reported as warnings.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_yaml::Value;

use super::{IngestError, NamespaceIds, RawNumber};
use crate::model::{Cidr, Direction, Endpoint, Policy, PolicyOrigin, Port};

pub const API_VERSION: &str = "cilium.io/v2";
pub const KIND: &str = "CiliumNetworkPolicy";

const APP_KEY: &str = "app";
const NAMESPACE_KEY: &str = "io.kubernetes.pod.namespace";

pub type LabelMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngressRule {
    pub from_cidr_set: Vec<Cidr>,
    pub from_endpoints: Vec<LabelMap>,
    pub to_ports: Vec<Port>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgressRule {
    pub to_cidr_set: Vec<Cidr>,
    pub to_ports: Vec<Port>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiliumPolicyDoc {
    pub api_version: String,
    pub kind: String,
    pub name: String,
    pub namespace: String,
    pub endpoint_selector: LabelMap,
    pub ingress_rules: Vec<IngressRule>,
    pub egress_rules: Vec<EgressRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPolicy {
    pub doc: CiliumPolicyDoc,
    /// Keys under `spec` outside the accepted subset, as dotted paths.
    pub warnings: Vec<String>,
}

type Extra = BTreeMap<String, Value>;

#[derive(Deserialize)]
struct RawDoc {
    metadata: RawMetadata,
    spec: RawSpec,
}

#[derive(Deserialize)]
struct RawMetadata {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    namespace: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawSpec {
    #[serde(default)]
    endpoint_selector: Option<RawSelector>,
    #[serde(default)]
    ingress: Vec<RawIngress>,
    #[serde(default)]
    egress: Vec<RawEgress>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase")]
struct RawSelector {
    #[serde(default)]
    match_labels: LabelMap,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Deserialize)]
struct RawIngress {
    #[serde(default, rename = "fromCIDRSet")]
    from_cidr_set: Vec<RawCidrRule>,
    #[serde(default, rename = "fromEndpoints")]
    from_endpoints: Vec<RawSelector>,
    #[serde(default, rename = "toPorts")]
    to_ports: Vec<RawPortRule>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Deserialize)]
struct RawEgress {
    #[serde(default, rename = "toCIDRSet")]
    to_cidr_set: Vec<RawCidrRule>,
    #[serde(default, rename = "toPorts")]
    to_ports: Vec<RawPortRule>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Deserialize)]
struct RawCidrRule {
    cidr: String,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Deserialize)]
struct RawPortRule {
    #[serde(default)]
    ports: Vec<RawPort>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Deserialize)]
struct RawPort {
    port: RawNumber,
    // Protocols are not modeled; the key is accepted silently.
    #[serde(default)]
    #[allow(dead_code)]
    protocol: Option<String>,
    #[serde(flatten)]
    extra: Extra,
}

struct Warnings(Vec<String>);

impl Warnings {
    fn extra(&mut self, path: &str, extra: &Extra) {
        for key in extra.keys() {
            self.0
                .push(format!("{path}.{key}: unsupported key ignored"));
        }
    }
}

fn parse_cidr(text: &str) -> Result<Cidr, IngestError> {
    text.parse()
        .map_err(|_| IngestError::InvalidCidrString(text.to_string()))
}

fn parse_ports(
    rules: &[RawPortRule],
    path: &str,
    warnings: &mut Warnings,
) -> Result<Vec<Port>, IngestError> {
    let mut ports = Vec::new();
    for (i, rule) in rules.iter().enumerate() {
        let rule_path = format!("{path}.toPorts[{i}]");
        warnings.extra(&rule_path, &rule.extra);
        for (j, raw) in rule.ports.iter().enumerate() {
            warnings.extra(&format!("{rule_path}.ports[{j}]"), &raw.extra);
            let port = raw
                .port
                .to_u64()
                .and_then(|n| u32::try_from(n).ok())
                .and_then(|n| Port::new(n).ok())
                .ok_or_else(|| IngestError::InvalidPort(raw.port.text()))?;
            ports.push(port);
        }
    }
    Ok(ports)
}

fn parse_cidr_rules(
    rules: &[RawCidrRule],
    path: &str,
    warnings: &mut Warnings,
) -> Result<Vec<Cidr>, IngestError> {
    rules
        .iter()
        .enumerate()
        .map(|(i, rule)| {
            warnings.extra(&format!("{path}[{i}]"), &rule.extra);
            parse_cidr(&rule.cidr)
        })
        .collect()
}

fn required_str<'a>(value: &'a Value, key: &str) -> Result<&'a str, IngestError> {
    match value.get(key) {
        None | Some(Value::Null) => Err(IngestError::MissingField(key.to_string())),
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(IngestError::MalformedYaml(format!(
            "{key} must be a string, got {other:?}"
        ))),
    }
}

fn non_empty(value: Option<String>, field: &str) -> Result<String, IngestError> {
    value
        .filter(|s| !s.is_empty())
        .ok_or_else(|| IngestError::MissingField(field.to_string()))
}

fn from_value(value: Value) -> Result<ParsedPolicy, IngestError> {
    if !value.is_mapping() {
        return Err(IngestError::MalformedYaml(
            "policy document must be a mapping".into(),
        ));
    }
    let api_version = required_str(&value, "apiVersion")?.to_string();
    if api_version != API_VERSION {
        return Err(IngestError::UnsupportedApiVersion(api_version));
    }
    let kind = required_str(&value, "kind")?.to_string();
    if kind != KIND {
        return Err(IngestError::UnsupportedKind(kind));
    }
    if value.get("spec").is_none() {
        return Err(IngestError::MissingField("spec".into()));
    }
    let raw: RawDoc = serde_yaml::from_value(value)?;
    let name = non_empty(raw.metadata.name, "metadata.name")?;
    let namespace = non_empty(raw.metadata.namespace, "metadata.namespace")?;

    let mut warnings = Warnings(Vec::new());
    warnings.extra("spec", &raw.spec.extra);
    let selector = raw.spec.endpoint_selector.unwrap_or_default();
    warnings.extra("spec.endpointSelector", &selector.extra);

    let mut ingress_rules = Vec::new();
    for (i, rule) in raw.spec.ingress.iter().enumerate() {
        let path = format!("spec.ingress[{i}]");
        warnings.extra(&path, &rule.extra);
        let from_cidr_set = parse_cidr_rules(
            &rule.from_cidr_set,
            &format!("{path}.fromCIDRSet"),
            &mut warnings,
        )?;
        let from_endpoints = rule
            .from_endpoints
            .iter()
            .enumerate()
            .map(|(j, sel)| {
                warnings.extra(&format!("{path}.fromEndpoints[{j}]"), &sel.extra);
                sel.match_labels.clone()
            })
            .collect::<Vec<_>>();
        if from_cidr_set.is_empty() && from_endpoints.is_empty() {
            return Err(IngestError::InvalidRule {
                path,
                reason: "ingress rule has no fromCIDRSet or fromEndpoints source".into(),
            });
        }
        let to_ports = parse_ports(&rule.to_ports, &path, &mut warnings)?;
        ingress_rules.push(IngressRule {
            from_cidr_set,
            from_endpoints,
            to_ports,
        });
    }

    let mut egress_rules = Vec::new();
    for (i, rule) in raw.spec.egress.iter().enumerate() {
        let path = format!("spec.egress[{i}]");
        warnings.extra(&path, &rule.extra);
        let to_cidr_set = parse_cidr_rules(
            &rule.to_cidr_set,
            &format!("{path}.toCIDRSet"),
            &mut warnings,
        )?;
        if to_cidr_set.is_empty() {
            return Err(IngestError::InvalidRule {
                path,
                reason: "egress rule has no toCIDRSet destination".into(),
            });
        }
        let to_ports = parse_ports(&rule.to_ports, &path, &mut warnings)?;
        egress_rules.push(EgressRule {
            to_cidr_set,
            to_ports,
        });
    }

    Ok(ParsedPolicy {
        doc: CiliumPolicyDoc {
            api_version,
            kind,
            name,
            namespace,
            endpoint_selector: selector.match_labels,
            ingress_rules,
            egress_rules,
        },
        warnings: warnings.0,
    })
}

/// Parses a single policy document.
pub fn parse_cilium_policy(text: &str) -> Result<ParsedPolicy, IngestError> {
    let value: Value = serde_yaml::from_str(text)?;
    from_value(value)
}

/// Parses a stream of `---`-separated policy documents, skipping empty ones.
pub fn parse_cilium_policies(text: &str) -> Result<Vec<ParsedPolicy>, IngestError> {
    let mut parsed = Vec::new();
    for document in serde_yaml::Deserializer::from_str(text) {
        let value = Value::deserialize(document)?;
        if value.is_null() {
            continue;
        }
        parsed.push(from_value(value)?);
    }
    Ok(parsed)
}

/// Splits selector labels into an optional namespace override and a label.
///
/// The `app` value becomes the label; any other keys (besides the pod
/// namespace key) are appended as sorted `key=value` pairs.
fn selector_parts(labels: &LabelMap) -> (Option<&str>, Option<String>) {
    let namespace = labels.get(NAMESPACE_KEY).map(String::as_str);
    let mut parts: Vec<String> = labels.get(APP_KEY).cloned().into_iter().collect();
    parts.extend(
        labels
            .iter()
            .filter(|(k, _)| *k != APP_KEY && *k != NAMESPACE_KEY)
            .map(|(k, v)| format!("{k}={v}")),
    );
    let label = (!parts.is_empty()).then(|| parts.join(","));
    (namespace, label)
}

fn selected_endpoint(
    labels: &LabelMap,
    default_namespace: &str,
    port: Option<Port>,
    namespaces: &NamespaceIds,
    doc_name: &str,
) -> Result<Endpoint, IngestError> {
    let (ns_override, label) = selector_parts(labels);
    let invalid = |source| IngestError::InvalidEndpoint {
        name: doc_name.to_string(),
        source,
    };
    let namespace = namespaces
        .namespace(ns_override.unwrap_or(default_namespace))
        .map_err(invalid)?;
    Endpoint::new(None, Some(namespace), port, label).map_err(invalid)
}

fn port_choices(ports: &[Port]) -> Vec<Option<Port>> {
    if ports.is_empty() {
        vec![None]
    } else {
        ports.iter().copied().map(Some).collect()
    }
}

/// Expands a document into single-pair policies using default namespace ids.
pub fn expand_rules(doc: &CiliumPolicyDoc) -> Result<Vec<Policy>, IngestError> {
    expand_rules_with(doc, &NamespaceIds::default())
}

/// Expands a document into single-pair policies.
///
/// Ingress: one policy per source per port, pairing the selected endpoint
/// (carrying the port) with the peer. Egress: one policy per CIDR per port,
/// pairing the selected endpoint (no port) with the CIDR peer carrying the
/// port.
pub fn expand_rules_with(
    doc: &CiliumPolicyDoc,
    namespaces: &NamespaceIds,
) -> Result<Vec<Policy>, IngestError> {
    let mut policies = Vec::new();
    let origin = |section, rule| PolicyOrigin {
        document: doc.name.clone(),
        section,
        rule,
    };
    let invalid = |source| IngestError::InvalidEndpoint {
        name: doc.name.clone(),
        source,
    };

    for (index, rule) in doc.ingress_rules.iter().enumerate() {
        let mut peers = Vec::new();
        for cidr in &rule.from_cidr_set {
            peers.push(Endpoint::new(Some(*cidr), None, None, None).map_err(invalid)?);
        }
        for labels in &rule.from_endpoints {
            peers.push(selected_endpoint(
                labels,
                &doc.namespace,
                None,
                namespaces,
                &doc.name,
            )?);
        }
        for peer in &peers {
            for port in port_choices(&rule.to_ports) {
                let selected = selected_endpoint(
                    &doc.endpoint_selector,
                    &doc.namespace,
                    port,
                    namespaces,
                    &doc.name,
                )?;
                policies.push(
                    Policy::new(selected, peer.clone(), Direction::Ingress)
                        .with_origin(origin(Direction::Ingress, index)),
                );
            }
        }
    }

    for (index, rule) in doc.egress_rules.iter().enumerate() {
        let selected = selected_endpoint(
            &doc.endpoint_selector,
            &doc.namespace,
            None,
            namespaces,
            &doc.name,
        )?;
        for cidr in &rule.to_cidr_set {
            for port in port_choices(&rule.to_ports) {
                let peer = Endpoint::new(Some(*cidr), None, port, None).map_err(invalid)?;
                policies.push(
                    Policy::new(selected.clone(), peer, Direction::Egress)
                        .with_origin(origin(Direction::Egress, index)),
                );
            }
        }
    }

    if policies.is_empty() {
        return Err(IngestError::EmptyExpansion(doc.name.clone()));
    }
    Ok(policies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Namespace;
    use proptest::prelude::*;

    const UI_POLICY: &str = r#"apiVersion: cilium.io/v2
kind: CiliumNetworkPolicy
metadata:
  name: UIPolicy
  namespace: NS-UI
spec:
  endpointSelector:
    matchLabels:
      app: WebUI
  ingress:
    - fromCIDRSet:
        - cidr: 10.28.1.2/30 #Client CIDR block
      toPorts:
        - ports:
            - port: "443"
"#;

    const COMMAND_POLICY: &str = r#"apiVersion: cilium.io/v2
kind: CiliumNetworkPolicy
metadata:
  name: Command-Policy
  namespace: NS-Command
spec:
  endpointSelector:
    matchLabels:
      app: Command
  ingress:
    - fromEndpoints:
        - matchLabels:
            app: WebUI
            io.kubernetes.pod.namespace: NS-UI
  egress:
    - toCIDRSet:
        - cidr: 10.29.1.23/28
      toPorts:
        - ports:
            - port: "5443"
"#;

    fn ns(name: &str) -> Option<Namespace> {
        Some(Namespace::new(name, 1).unwrap())
    }

    fn labels(pairs: &[(&str, &str)]) -> LabelMap {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn parses_client_policy() {
        let parsed = parse_cilium_policy(UI_POLICY).unwrap();
        assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
        let doc = parsed.doc;
        assert_eq!(doc.name, "UIPolicy");
        assert_eq!(doc.namespace, "NS-UI");
        assert_eq!(doc.endpoint_selector, labels(&[("app", "WebUI")]));
        assert_eq!(
            doc.ingress_rules,
            vec![IngressRule {
                from_cidr_set: vec!["10.28.1.2/30".parse().unwrap()],
                from_endpoints: vec![],
                to_ports: vec![Port::new(443).unwrap()],
            }]
        );
        assert!(doc.egress_rules.is_empty());
    }

    #[test]
    fn parses_command_policy() {
        let parsed = parse_cilium_policy(COMMAND_POLICY).unwrap();
        assert!(parsed.warnings.is_empty());
        let doc = parsed.doc;
        assert_eq!(doc.name, "Command-Policy");
        assert_eq!(
            doc.ingress_rules[0].from_endpoints,
            vec![labels(&[
                ("app", "WebUI"),
                ("io.kubernetes.pod.namespace", "NS-UI")
            ])]
        );
        assert_eq!(
            doc.egress_rules,
            vec![EgressRule {
                to_cidr_set: vec!["10.29.1.23/28".parse().unwrap()],
                to_ports: vec![Port::new(5443).unwrap()],
            }]
        );
    }

    #[test]
    fn expands_client_policy() {
        let policies = expand_rules(&parse_cilium_policy(UI_POLICY).unwrap().doc).unwrap();
        assert_eq!(policies.len(), 1);
        let webui = Endpoint::new(
            None,
            ns("NS-UI"),
            Some(Port::new(443).unwrap()),
            Some("WebUI".into()),
        )
        .unwrap();
        let client =
            Endpoint::new(Some("10.28.1.2/30".parse().unwrap()), None, None, None).unwrap();
        assert_eq!(policies[0], Policy::new(webui, client, Direction::Ingress));
        let origin = policies[0].origin().unwrap();
        assert_eq!((origin.document.as_str(), origin.rule), ("UIPolicy", 0));
    }

    #[test]
    fn expands_command_policy() {
        let policies = expand_rules(&parse_cilium_policy(COMMAND_POLICY).unwrap().doc).unwrap();
        let command = Endpoint::new(None, ns("NS-Command"), None, Some("Command".into())).unwrap();
        let webui = Endpoint::new(None, ns("NS-UI"), None, Some("WebUI".into())).unwrap();
        let asset = Endpoint::new(
            Some("10.29.1.23/28".parse().unwrap()),
            None,
            Some(Port::new(5443).unwrap()),
            None,
        )
        .unwrap();
        assert_eq!(
            policies,
            vec![
                Policy::new(command.clone(), webui, Direction::Ingress),
                Policy::new(command, asset, Direction::Egress),
            ]
        );
    }

    #[test]
    fn cartesian_expansion() {
        let text = UI_POLICY
            .replace(
                "        - cidr: 10.28.1.2/30 #Client CIDR block\n",
                "        - cidr: 10.28.1.2/30\n        - cidr: 10.28.2.0/24\n",
            )
            .replace(
                "            - port: \"443\"\n",
                "            - port: \"443\"\n            - port: 8443\n",
            );
        let policies = expand_rules(&parse_cilium_policy(&text).unwrap().doc).unwrap();
        assert_eq!(policies.len(), 4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad_prefix = UI_POLICY.replace("10.28.1.2/30", "10.28.1.2/33");
        assert_eq!(
            parse_cilium_policy(&bad_prefix),
            Err(IngestError::InvalidCidrString("10.28.1.2/33".into()))
        );
        assert_eq!(
            parse_cilium_policy(&UI_POLICY.replace("\"443\"", "\"0\"")),
            Err(IngestError::InvalidPort("0".into()))
        );
        assert_eq!(
            parse_cilium_policy(&UI_POLICY.replace("\"443\"", "https")),
            Err(IngestError::InvalidPort("https".into()))
        );
        assert_eq!(
            parse_cilium_policy(&UI_POLICY.replace("\"443\"", "70000")),
            Err(IngestError::InvalidPort("70000".into()))
        );
        assert!(matches!(
            parse_cilium_policy(&UI_POLICY.replace("cilium.io/v2", "networking.k8s.io/v1")),
            Err(IngestError::UnsupportedApiVersion(_))
        ));
        assert!(matches!(
            parse_cilium_policy(
                &UI_POLICY.replace("kind: CiliumNetworkPolicy", "kind: NetworkPolicy")
            ),
            Err(IngestError::UnsupportedKind(_))
        ));
        assert!(matches!(
            parse_cilium_policy("a: [b"),
            Err(IngestError::MalformedYaml(_))
        ));
        assert!(matches!(
            parse_cilium_policy(&UI_POLICY.replace("  namespace: NS-UI\n", "")),
            Err(IngestError::MissingField(_))
        ));
    }

    #[test]
    fn unknown_spec_keys_warn() {
        let text = UI_POLICY.replace(
            "      toPorts:\n",
            "      toEntities: [world]\n      toPorts:\n        - rules: {http: [{method: GET}]}\n",
        );
        let parsed = parse_cilium_policy(&text).unwrap();
        assert_eq!(
            parsed.warnings,
            vec![
                "spec.ingress[0].toEntities: unsupported key ignored".to_string(),
                "spec.ingress[0].toPorts[0].rules: unsupported key ignored".to_string(),
            ]
        );
    }

    #[test]
    fn rules_without_sources_rejected() {
        let text = "apiVersion: cilium.io/v2\nkind: CiliumNetworkPolicy\nmetadata: {name: p, namespace: n}\nspec:\n  endpointSelector: {matchLabels: {app: a}}\n  ingress:\n    - toPorts: [{ports: [{port: \"80\"}]}]\n";
        assert!(matches!(
            parse_cilium_policy(text),
            Err(IngestError::InvalidRule { .. })
        ));
        let text = "apiVersion: cilium.io/v2\nkind: CiliumNetworkPolicy\nmetadata: {name: p, namespace: n}\nspec:\n  endpointSelector: {matchLabels: {app: a}}\n";
        let doc = parse_cilium_policy(text).unwrap().doc;
        assert_eq!(
            expand_rules(&doc),
            Err(IngestError::EmptyExpansion("p".into()))
        );
    }

    #[test]
    fn multi_document_stream() {
        let text = format!("{UI_POLICY}---\n{COMMAND_POLICY}---\n");
        let docs = parse_cilium_policies(&text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].doc.name, "Command-Policy");
    }

    #[test]
    fn selector_labels() {
        assert_eq!(
            selector_parts(&labels(&[("app", "X")])),
            (None, Some("X".into()))
        );
        assert_eq!(
            selector_parts(&labels(&[("tier", "db"), ("app", "X"), ("env", "prod")])),
            (None, Some("X,env=prod,tier=db".into()))
        );
        assert_eq!(
            selector_parts(&labels(&[("io.kubernetes.pod.namespace", "NS")])),
            (Some("NS"), None)
        );
    }

    #[test]
    fn peer_namespace_defaults_to_policy_namespace() {
        let text = COMMAND_POLICY.replace("            io.kubernetes.pod.namespace: NS-UI\n", "");
        let policies = expand_rules(&parse_cilium_policy(&text).unwrap().doc).unwrap();
        assert_eq!(
            policies[0].second().namespace().unwrap().name(),
            "NS-Command"
        );
    }

    fn doc_strategy() -> impl Strategy<Value = CiliumPolicyDoc> {
        let cidr = (any::<u32>(), 8u32..=32)
            .prop_map(|(a, p)| Cidr::from_octets(a.to_be_bytes(), p).unwrap());
        let port = (1u32..=65535).prop_map(|p| Port::new(p).unwrap());
        let selector = prop::collection::btree_map("[a-z]{1,4}", "[a-z]{1,4}", 0..3);
        let ingress = (
            prop::collection::vec(cidr.clone(), 0..3),
            prop::collection::vec(selector.clone(), 0..3),
            prop::collection::vec(port.clone(), 0..3),
        )
            .prop_filter("needs a source", |(c, e, _)| !c.is_empty() || !e.is_empty())
            .prop_map(|(from_cidr_set, from_endpoints, to_ports)| IngressRule {
                from_cidr_set,
                from_endpoints,
                to_ports,
            });
        let egress = (
            prop::collection::vec(cidr, 1..3),
            prop::collection::vec(port, 0..3),
        )
            .prop_map(|(to_cidr_set, to_ports)| EgressRule {
                to_cidr_set,
                to_ports,
            });
        (
            selector,
            prop::collection::vec(ingress, 0..3),
            prop::collection::vec(egress, 0..3),
        )
            .prop_filter("needs a rule", |(_, i, e)| !i.is_empty() || !e.is_empty())
            .prop_map(
                |(endpoint_selector, ingress_rules, egress_rules)| CiliumPolicyDoc {
                    api_version: API_VERSION.into(),
                    kind: KIND.into(),
                    name: "generated".into(),
                    namespace: "ns".into(),
                    endpoint_selector,
                    ingress_rules,
                    egress_rules,
                },
            )
    }

    proptest! {
        #[test]
        fn expansion_count(doc in doc_strategy()) {
            let expected: usize = doc
                .ingress_rules
                .iter()
                .map(|r| (r.from_cidr_set.len() + r.from_endpoints.len()) * r.to_ports.len().max(1))
                .chain(doc.egress_rules.iter().map(|r| r.to_cidr_set.len() * r.to_ports.len().max(1)))
                .sum();
            prop_assert_eq!(expand_rules(&doc).unwrap().len(), expected);
        }

        #[test]
        fn canonical_round_trip(doc in doc_strategy()) {
            let policies = expand_rules(&doc).unwrap();
            let text = super::super::to_canonical(&policies);
            let back = super::super::from_canonical(&text).unwrap();
            prop_assert_eq!(&back, &policies);
            let origins: Vec<_> = back.iter().map(|p| p.origin().cloned()).collect();
            let expected: Vec<_> = policies.iter().map(|p| p.origin().cloned()).collect();
            prop_assert_eq!(origins, expected);
        }
    }
}
