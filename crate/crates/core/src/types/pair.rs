//! A preference pair: one prompt, two image references, and a human label
//! saying which image is preferred. Labels are strictly binary; ties never
//! appear in training data.

use serde::{Deserialize, Serialize};

/// Which side of a pair a human preferred (or a judge request targets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferredSide {
    A,
    B,
}

impl PreferredSide {
    /// Label sign: `+1` when side a is preferred, `-1` otherwise.
    pub fn sign<F: crate::num::Real>(self) -> F {
        match self {
            PreferredSide::A => F::one(),
            PreferredSide::B => -F::one(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PreferredSide::A => "a",
            PreferredSide::B => "b",
        }
    }
}

/// A labeled preference pair plus mining bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub prompt: String,
    /// Opaque image reference (path or URL); resolved by the judge backend.
    pub image_a: String,
    pub image_b: String,
    pub label: PreferredSide,
    /// Times this pair was mined as a hard pair.
    #[serde(default)]
    pub selection_count: u32,
}

impl PreferencePair {
    pub fn new(id: &str, prompt: &str, image_a: &str, image_b: &str, label: PreferredSide) -> Self {
        Self {
            id: id.to_string(),
            prompt: prompt.to_string(),
            image_a: image_a.to_string(),
            image_b: image_b.to_string(),
            label,
            selection_count: 0,
        }
    }

    /// Image reference for the requested side.
    pub fn image(&self, side: PreferredSide) -> &str {
        match side {
            PreferredSide::A => &self.image_a,
            PreferredSide::B => &self.image_b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_signs() {
        assert_eq!(PreferredSide::A.sign::<f64>(), 1.0);
        assert_eq!(PreferredSide::B.sign::<f64>(), -1.0);
    }

    #[test]
    fn label_serializes_as_letter() {
        let pair = PreferencePair::new("p1", "a cat", "a.png", "b.png", PreferredSide::B);
        let json = serde_json::to_string(&pair).unwrap();
        assert!(json.contains("\"label\":\"b\""));
        let back: PreferencePair = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pair);
    }
}
