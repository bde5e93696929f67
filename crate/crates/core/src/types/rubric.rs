//! A rubric is one natural-language evaluation criterion. Identity is the
//! content hash of the normalized text, so equal criteria deduplicate the
//! same way across runs, pools, and cache files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TypeError;

/// Where a rubric came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricOrigin {
    /// Generated from the seed preference pairs before refinement started.
    Seed,
    /// Proposed from a hard pair during the given refinement round.
    Refined { round: u32 },
}

/// One natural-language evaluation criterion with identity and provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    /// Content hash of the normalized text, hex encoded.
    pub id: String,
    /// The criterion as written (not normalized).
    pub text: String,
    pub origin: RubricOrigin,
    /// Round index at which this rubric entered a working set.
    pub created_round: u32,
}

impl Rubric {
    /// Builds a rubric, normalizing only for identity. Fails if the text is
    /// empty after normalization.
    pub fn new(text: &str, origin: RubricOrigin, created_round: u32) -> Result<Self, TypeError> {
        let id = rubric_id(text)?;
        Ok(Self {
            id,
            text: text.trim().to_string(),
            origin,
            created_round,
        })
    }

    /// Seed-pool rubric (round 0).
    pub fn seed(text: &str) -> Result<Self, TypeError> {
        Self::new(text, RubricOrigin::Seed, 0)
    }

    /// Refinement rubric proposed during `round`.
    pub fn refined(text: &str, round: u32) -> Result<Self, TypeError> {
        Self::new(text, RubricOrigin::Refined { round }, round)
    }
}

/// Canonical form used for identity and deduplication: lowercased, internal
/// whitespace collapsed to single spaces, trimmed, trailing periods removed.
pub fn normalize_rubric_text(text: &str) -> Result<String, TypeError> {
    let mut out = String::with_capacity(text.len());
    let mut last_was_space = true; // swallows leading whitespace
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !last_was_space {
                out.push(' ');
                last_was_space = true;
            }
        } else {
            for lower in ch.to_lowercase() {
                out.push(lower);
            }
            last_was_space = false;
        }
    }
    while out.ends_with(' ') || out.ends_with('.') {
        out.pop();
    }
    if out.is_empty() {
        return Err(TypeError::InvalidRubric);
    }
    Ok(out)
}

/// Deterministic id: SHA-256 of the normalized text, hex encoded.
pub fn rubric_id(text: &str) -> Result<String, TypeError> {
    let normalized = normalize_rubric_text(text)?;
    let digest = Sha256::digest(normalized.as_bytes());
    Ok(hex_encode(&digest))
}

fn hex_encode(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_whitespace_and_case() {
        assert_eq!(
            normalize_rubric_text("  The image matches   the prompt. ").unwrap(),
            "the image matches the prompt"
        );
    }

    #[test]
    fn normalizes_single_character() {
        assert_eq!(normalize_rubric_text("X").unwrap(), "x");
    }

    #[test]
    fn empty_input_is_invalid() {
        assert!(matches!(
            normalize_rubric_text(""),
            Err(TypeError::InvalidRubric)
        ));
        assert!(matches!(
            normalize_rubric_text(" .. "),
            Err(TypeError::InvalidRubric)
        ));
    }

    #[test]
    fn interior_periods_survive() {
        assert_eq!(normalize_rubric_text("a. b.").unwrap(), "a. b");
    }

    #[test]
    fn id_is_normalization_invariant() {
        assert_eq!(rubric_id("A b").unwrap(), rubric_id("a  B").unwrap());
        assert_ne!(rubric_id("a").unwrap(), rubric_id("b").unwrap());
    }

    #[test]
    fn id_has_fixed_length_for_long_input() {
        let long = "x".repeat(10 * 1024);
        let id = rubric_id(&long).unwrap();
        assert_eq!(id.len(), 64);
        assert!(id.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn rubric_stores_trimmed_original_text() {
        let r = Rubric::seed("  The Sky is Blue.  ").unwrap();
        assert_eq!(r.text, "The Sky is Blue.");
        assert_eq!(r.id, rubric_id("the sky is blue").unwrap());
    }
}
