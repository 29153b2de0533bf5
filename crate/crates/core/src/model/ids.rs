use serde::{Deserialize, Serialize};
use std::fmt;

use super::ModelError;

fn valid_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

macro_rules! identifier {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        ///
        /// Restricted to ASCII letters, digits, `_`, `-` and `.` so it can be
        /// embedded in CSV headers and ledger lines without escaping.
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, ModelError> {
                let s = s.into();
                if valid_identifier(&s) {
                    Ok(Self(s))
                } else {
                    Err(ModelError::InvalidIdentifier(s))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = ModelError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl std::str::FromStr for $name {
            type Err = ModelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

identifier!(
    /// A consuming building taking part in the community.
    ParticipantId
);
identifier!(
    /// A metered counting point.
    MeterId
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_separators() {
        assert!(ParticipantId::new("ESTIA1").is_ok());
        assert!(MeterId::new("pv-01.a_b").is_ok());
        for bad in ["", "a b", "a,b", "a|b", "é"] {
            assert!(ParticipantId::new(bad).is_err(), "{bad:?}");
        }
        assert!(serde_json::from_str::<MeterId>("\"x,y\"").is_err());
    }
}
