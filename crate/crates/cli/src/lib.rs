//! Command implementations behind the `ciliumcheck` binary.
//!
//! Every command writes its report to `out`, diagnostics to `err`, and
//! returns an [`Exit`] status: 0 on success, 1 when the analysed flow or
//! scenario is rejected, 2 on input or configuration errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use ciliumcheck_core::ingest::{
    expand_rules_with, parse_cilium_policies, parse_scenario_with, parse_topology, to_canonical,
    IngestError, NamespaceIds, SymbolTable, Topology,
};
use ciliumcheck_core::matching::explain;
use ciliumcheck_core::{
    new_system, run_scenario_on, AppId, Cidr, Endpoint, EngineError, MatchMode, ModelError, Policy,
    Port, ReachabilityMatrix, ScenarioReport, SystemState, TransferOptions,
};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Rejected = 1,
    Error = 2,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Table,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected table or json)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },
    #[error("setting up the system: {0}")]
    Seed(EngineError),
    #[error("invalid endpoint spec {spec:?}: {reason}")]
    EndpointSpec { spec: String, reason: String },
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ingest_err(path: &Path) -> impl FnOnce(IngestError) -> CliError + '_ {
    move |source| CliError::Ingest {
        path: path.to_path_buf(),
        source,
    }
}

/// Expanded policy documents.
#[derive(Debug, Clone)]
pub struct PolicyDocument {
    pub path: PathBuf,
    pub name: String,
    pub policies: Vec<Policy>,
}

#[derive(Debug, Default)]
pub struct PolicySet {
    pub documents: Vec<PolicyDocument>,
    pub warnings: Vec<String>,
}

impl PolicySet {
    pub fn load(paths: &[PathBuf], namespaces: &NamespaceIds) -> Result<Self, CliError> {
        let mut set = PolicySet::default();
        for path in paths {
            let text = read(path)?;
            for parsed in parse_cilium_policies(&text).map_err(ingest_err(path))? {
                set.warnings.extend(
                    parsed
                        .warnings
                        .iter()
                        .map(|w| format!("{}: {}: {w}", path.display(), parsed.doc.name)),
                );
                let policies =
                    expand_rules_with(&parsed.doc, namespaces).map_err(ingest_err(path))?;
                set.documents.push(PolicyDocument {
                    path: path.clone(),
                    name: parsed.doc.name,
                    policies,
                });
            }
        }
        Ok(set)
    }

    pub fn policies(&self) -> impl Iterator<Item = &Policy> {
        self.documents.iter().flat_map(|d| d.policies.iter())
    }

    /// Distinct policies (structural equality, first origin kept).
    pub fn distinct(&self) -> BTreeSet<Policy> {
        let mut set = BTreeSet::new();
        for policy in self.policies() {
            if !set.contains(policy) {
                set.insert(policy.clone());
            }
        }
        set
    }
}

/// A system seeded from policy documents and an optional topology.
pub struct Workspace {
    pub state: SystemState,
    pub symbols: SymbolTable,
    pub topology: Option<Topology>,
    pub namespaces: NamespaceIds,
    pub warnings: Vec<String>,
}

impl Workspace {
    pub fn load(policy_paths: &[PathBuf], topology_path: Option<&Path>) -> Result<Self, CliError> {
        let topology = match topology_path {
            Some(path) => Some(parse_topology(&read(path)?).map_err(ingest_err(path))?),
            None => None,
        };
        let namespaces = topology
            .as_ref()
            .map(|t| t.namespaces.clone())
            .unwrap_or_default();
        let policies = PolicySet::load(policy_paths, &namespaces)?;
        let mut warnings = policies.warnings.clone();

        let mut symbols = topology.as_ref().map(Topology::symbols).unwrap_or_default();
        for doc in &policies.documents {
            symbols
                .declare_policies(&doc.name, doc.policies.clone())
                .map_err(ingest_err(&doc.path))?;
        }

        let mut state = new_system();
        if let Some(topology) = &topology {
            for (_, endpoint) in &topology.endpoints {
                let _ = state.add_endpoint(endpoint.clone());
            }
        }
        for policy in policies.policies() {
            if let Err(EngineError::DuplicatePolicy(dup)) = state.add_policy(policy.clone()) {
                warnings.push(format!("duplicate policy skipped: {dup}"));
            }
        }
        if let Some(topology) = &topology {
            for app in &topology.applications {
                let mut applied = BTreeSet::new();
                for name in &app.policy_refs {
                    let path = topology_path.expect("topology was loaded from a path");
                    applied.extend(
                        symbols
                            .policies(name)
                            .map_err(ingest_err(path))?
                            .iter()
                            .cloned(),
                    );
                }
                state
                    .deploy_application(
                        app.id,
                        app.send.clone(),
                        app.listen.clone(),
                        app.receive_only,
                        applied,
                    )
                    .map_err(CliError::Seed)?;
            }
        }
        Ok(Self {
            state,
            symbols,
            topology,
            namespaces,
            warnings,
        })
    }

    fn app_name(&self, id: AppId) -> String {
        self.topology
            .as_ref()
            .and_then(|t| t.application_name(id))
            .map_or_else(|| format!("app{id}"), str::to_string)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckArgs {
    pub policies: Vec<PathBuf>,
    pub topology: Option<PathBuf>,
    pub scenario: PathBuf,
    pub mode: Option<MatchMode>,
    pub format: Format,
    pub check_listen: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ReachabilityArgs {
    pub policies: Vec<PathBuf>,
    pub topology: PathBuf,
    pub mode: MatchMode,
    pub format: Format,
    pub check_listen: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExplainArgs {
    pub policies: Vec<PathBuf>,
    pub sender: String,
    pub receiver: String,
    pub mode: MatchMode,
    pub format: Format,
}

fn finish(result: Result<Exit, CliError>, err: &mut dyn Write) -> Exit {
    match result {
        Ok(exit) => exit,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Exit::Error
        }
    }
}

fn emit_warnings(warnings: &[String], err: &mut dyn Write) {
    for w in warnings {
        let _ = writeln!(err, "warning: {w}");
    }
}

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let result = (|| {
        let mut ws = Workspace::load(&args.policies, args.topology.as_deref())?;
        emit_warnings(&ws.warnings, err);
        let text = read(&args.scenario)?;
        let doc = parse_scenario_with(&text, &mut ws.symbols, &ws.namespaces)
            .map_err(ingest_err(&args.scenario))?;
        let options = TransferOptions {
            mode: args.mode.or(doc.mode).unwrap_or_default(),
            check_listen: args.check_listen || doc.check_listen.unwrap_or(false),
        };
        let report = run_scenario_on(&mut ws.state, &doc.steps, options);
        let name = doc
            .name
            .unwrap_or_else(|| args.scenario.display().to_string());
        match args.format {
            Format::Table => {
                out.write_all(render_report(&name, options.mode, &report).as_bytes())?
            }
            Format::Json => {
                let value =
                    serde_json::json!({ "scenario": name, "mode": options.mode, "report": report });
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&value).expect("serializable")
                )?;
            }
        }
        Ok(if report.passed {
            Exit::Success
        } else {
            Exit::Rejected
        })
    })();
    finish(result, err)
}

pub fn cmd_reachability(args: &ReachabilityArgs, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let result = (|| {
        let ws = Workspace::load(&args.policies, Some(&args.topology))?;
        emit_warnings(&ws.warnings, err);
        let options = TransferOptions {
            mode: args.mode,
            check_listen: args.check_listen,
        };
        let matrix = ReachabilityMatrix::compute(&ws.state, options);
        match args.format {
            Format::Table => out.write_all(render_matrix(&ws, &matrix).as_bytes())?,
            Format::Json => writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&matrix).expect("serializable")
            )?,
        }
        Ok(Exit::Success)
    })();
    finish(result, err)
}

pub fn cmd_explain(args: &ExplainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let result = (|| {
        let namespaces = NamespaceIds::default();
        let sender = parse_endpoint_spec(&args.sender, &namespaces)?;
        let receiver = parse_endpoint_spec(&args.receiver, &namespaces)?;
        let set = PolicySet::load(&args.policies, &namespaces)?;
        emit_warnings(&set.warnings, err);
        let policies = set.distinct();
        let explanations = explain(&policies, &sender, &receiver, args.mode);
        let allowed = explanations.iter().any(|e| e.result.is_ok());
        match args.format {
            Format::Table => {
                let mut text = String::new();
                let _ = writeln!(text, "sender   {sender}");
                let _ = writeln!(text, "receiver {receiver}");
                let _ = writeln!(text, "mode     {}", args.mode);
                if explanations.is_empty() {
                    let _ = writeln!(text, "no policies loaded");
                }
                for e in &explanations {
                    let origin = e
                        .policy
                        .origin()
                        .map_or_else(|| "<unnamed>".to_string(), ToString::to_string);
                    match &e.result {
                        Ok(()) => {
                            let _ = writeln!(text, "MATCH  {origin}");
                        }
                        Err(predicate) => {
                            let _ = writeln!(text, "DENY   {origin}: {predicate}");
                        }
                    }
                }
                let _ = writeln!(
                    text,
                    "result: {}",
                    if allowed { "ALLOWED" } else { "DENIED" }
                );
                out.write_all(text.as_bytes())?;
            }
            Format::Json => {
                let rows: Vec<_> = explanations
                    .iter()
                    .map(|e| {
                        serde_json::json!({
                            "policy": e.policy,
                            "match": e.result.is_ok(),
                            "failed_predicate": e.result.as_ref().err(),
                        })
                    })
                    .collect();
                let value = serde_json::json!({
                    "sender": sender,
                    "receiver": receiver,
                    "mode": args.mode,
                    "allowed": allowed,
                    "policies": rows,
                });
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&value).expect("serializable")
                )?;
            }
        }
        Ok(if allowed {
            Exit::Success
        } else {
            Exit::Rejected
        })
    })();
    finish(result, err)
}

/// Prints the canonical serialization of the expanded policies.
pub fn cmd_expand(policies: &[PathBuf], out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let result = (|| {
        let set = PolicySet::load(policies, &NamespaceIds::default())?;
        emit_warnings(&set.warnings, err);
        let all: Vec<Policy> = set.policies().cloned().collect();
        out.write_all(to_canonical(&all).as_bytes())?;
        Ok(Exit::Success)
    })();
    finish(result, err)
}

/// Parses `key=value` pairs separated by commas. Keys: `cidr`, `namespace`
/// (or `ns`, optionally `NAME#ID`), `port`, `label`.
pub fn parse_endpoint_spec(spec: &str, namespaces: &NamespaceIds) -> Result<Endpoint, CliError> {
    let bad = |reason: String| CliError::EndpointSpec {
        spec: spec.to_string(),
        reason,
    };
    let (mut cidr, mut namespace, mut port, mut label) = (None, None, None, None);
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
        match key.trim() {
            "cidr" => cidr = Some(value.parse::<Cidr>().map_err(|e| bad(e.to_string()))?),
            "namespace" | "ns" => {
                let ns = match value.split_once('#') {
                    Some((name, id)) => {
                        let id = id
                            .parse()
                            .map_err(|_| bad(format!("invalid namespace id {id:?}")))?;
                        ciliumcheck_core::Namespace::new(name, id)
                    }
                    None => namespaces.namespace(value),
                };
                namespace = Some(ns.map_err(|e: ModelError| bad(e.to_string()))?);
            }
            "port" => {
                let n: u32 = value
                    .parse()
                    .map_err(|_| bad(format!("invalid port {value:?}")))?;
                port = Some(Port::new(n).map_err(|e| bad(e.to_string()))?);
            }
            "label" => label = Some(value.to_string()),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    Endpoint::new(cidr, namespace, port, label).map_err(|e| bad(e.to_string()))
}

pub fn render_report(name: &str, mode: MatchMode, report: &ScenarioReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "scenario {name} ({mode})");
    for o in &report.outcomes {
        let status = if o.matched { "PASS" } else { "FAIL" };
        let _ = writeln!(
            text,
            "  [{}] {:<18} expected {} / actual {}  {status}",
            o.index, o.action, o.expected, o.actual
        );
        if let Some(verdict) = &o.verdict {
            if let Some(policy) = &verdict.matched_policy {
                let _ = writeln!(text, "      matched {policy}");
            }
            for failure in &verdict.failed_predicates {
                let _ = writeln!(text, "      {}: {}", failure.policy, failure.predicate);
            }
        }
    }
    let _ = writeln!(
        text,
        "result: {} ({} of {} steps run)",
        if report.passed { "PASS" } else { "FAIL" },
        report.steps_run,
        report.outcomes.len().max(report.steps_run)
    );
    text
}

pub fn render_matrix(ws: &Workspace, matrix: &ReachabilityMatrix) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "reachability ({}), {} flows",
        matrix.mode,
        matrix.len()
    );
    for entry in &matrix.entries {
        let detail = if entry.allowed() {
            let policy = entry
                .verdict
                .matched_policy
                .as_ref()
                .expect("allowed verdict has a match");
            match policy.origin() {
                Some(origin) => format!("via {origin}"),
                None => format!("via {policy}"),
            }
        } else if !entry.endpoint_registered {
            "endpoint not registered".to_string()
        } else {
            "no permitting policy".to_string()
        };
        let _ = writeln!(
            text,
            "{:<5} {:>3} {:<10} -> {:>3} {:<10} {}  {}",
            if entry.allowed() { "ALLOW" } else { "DENY" },
            entry.sender,
            ws.app_name(entry.sender),
            entry.receiver,
            ws.app_name(entry.receiver),
            entry.endpoint,
            detail
        );
    }
    let _ = writeln!(text, "allowed: {}", matrix.allowed().count());
    text
}
