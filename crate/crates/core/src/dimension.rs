use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A scored aspect of pronunciation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Accuracy,
    Fluency,
    Prosody,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Accuracy, Dimension::Fluency, Dimension::Prosody];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Accuracy => "accuracy",
            Dimension::Fluency => "fluency",
            Dimension::Prosody => "prosody",
        }
    }

    /// JSON field holding the reasoning for this dimension.
    pub fn reason_field(self) -> &'static str {
        match self {
            Dimension::Accuracy => "reason_accuracy",
            Dimension::Fluency => "reason_fluency",
            Dimension::Prosody => "reason_prosody",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accuracy" => Ok(Dimension::Accuracy),
            "fluency" => Ok(Dimension::Fluency),
            "prosody" => Ok(Dimension::Prosody),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}
