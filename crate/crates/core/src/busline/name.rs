use std::fmt;

use serde::{Deserialize, Serialize};

use super::BusError;

/// Validated node (or topic) name: non-empty, `[A-Za-z0-9_/]`, at most 128 bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeName(String);

impl NodeName {
    pub fn new(value: impl Into<String>) -> Result<Self, BusError> {
        let value = value.into();
        if value.is_empty() {
            return Err(BusError::BadName("name is empty".into()));
        }
        if value.len() > 128 {
            return Err(BusError::BadName(format!("name exceeds 128 bytes: {value:.32}...")));
        }
        if let Some(bad) = value
            .chars()
            .find(|c| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '/'))
        {
            return Err(BusError::BadName(format!("illegal character {bad:?} in {value:?}")));
        }
        Ok(NodeName(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for NodeName {
    type Error = String;
    fn try_from(value: String) -> Result<Self, String> {
        NodeName::new(value).map_err(|e| e.to_string())
    }
}

impl From<NodeName> for String {
    fn from(name: NodeName) -> String {
        name.0
    }
}

impl std::str::FromStr for NodeName {
    type Err = BusError;
    fn from_str(s: &str) -> Result<Self, BusError> {
        NodeName::new(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_typical_names() {
        for name in ["supervisor", "robotino_0", "robot/ir", "A1/b_2"] {
            assert!(NodeName::new(name).is_ok(), "{name}");
        }
    }

    #[test]
    fn rejects_bad_names() {
        assert!(NodeName::new("").is_err());
        assert!(NodeName::new("has space").is_err());
        assert!(NodeName::new("dash-ed").is_err());
        assert!(NodeName::new("x".repeat(129)).is_err());
    }
}
