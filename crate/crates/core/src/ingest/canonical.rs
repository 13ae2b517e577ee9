//! Canonical text form of internal policies: a JSON array with a fixed field
//! order (`direction`, `first`, `second`, `origin`) and absent endpoint
//! fields omitted.

use super::IngestError;
use crate::model::Policy;

pub fn to_canonical(policies: &[Policy]) -> String {
    let mut text =
        serde_json::to_string_pretty(policies).expect("policy serialization is infallible");
    text.push('\n');
    text
}

pub fn from_canonical(text: &str) -> Result<Vec<Policy>, IngestError> {
    serde_json::from_str(text)
        .map_err(|e| IngestError::MalformedYaml(format!("canonical policy list: {e}")))
}
