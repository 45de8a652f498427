use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifiers carried by every artifact after the heatmap stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub hand_id: String,
    pub object_id: String,
    /// Hash of the heatmap JSON header the artifact was derived from.
    pub heatmap_id: String,
    /// Hash of the resolved planner settings.
    pub config_hash: String,
    pub seed: u64,
}

pub fn expect_same(what: &str, expected: &str, found: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Provenance(format!(
            "{what} does not match: artifact has {}, inputs give {}",
            short(found),
            short(expected)
        )))
    }
}

fn short(id: &str) -> &str {
    &id[..id.len().min(12)]
}
