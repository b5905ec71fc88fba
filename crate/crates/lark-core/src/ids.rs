//! Abstract entity and relation identifiers.
//!
//! After abstraction every entity is `e<i>` and every relation is `r<j>`,
//! with indexes assigned in first-appearance order. The numeric part is the
//! canonical sort key everywhere (retrieval tie-breaking, placeholder
//! expansion, symbolic answers). IDs serialize as their textual form in all
//! file formats.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

macro_rules! id_type {
    ($name:ident, $prefix:literal, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            /// Numeric part of the ID.
            pub fn index(self) -> u32 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                s.strip_prefix($prefix)
                    .and_then(|digits| {
                        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                            None
                        } else {
                            digits.parse::<u32>().ok()
                        }
                    })
                    .map($name)
                    .ok_or_else(|| Error::UnknownId(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(D::Error::custom)
            }
        }
    };
}

id_type!(EntityId, "e", "An abstract entity ID, rendered as `e<i>`.");
id_type!(RelationId, "r", "An abstract relation ID, rendered as `r<j>`.");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_round_trip() {
        let e = EntityId(42);
        assert_eq!(e.to_string(), "e42");
        assert_eq!("e42".parse::<EntityId>().unwrap(), e);
        assert_eq!("r0".parse::<RelationId>().unwrap(), RelationId(0));
    }

    #[test]
    fn rejects_malformed_ids() {
        assert!("42".parse::<EntityId>().is_err());
        assert!("e".parse::<EntityId>().is_err());
        assert!("r1x".parse::<RelationId>().is_err());
        assert!("e-1".parse::<EntityId>().is_err());
        assert!("r7".parse::<EntityId>().is_err());
    }

    #[test]
    fn ordering_is_numeric_not_lexicographic() {
        assert!(EntityId(2) < EntityId(10));
    }

    #[test]
    fn serde_uses_textual_form() {
        let json = serde_json::to_string(&EntityId(7)).unwrap();
        assert_eq!(json, "\"e7\"");
        let back: EntityId = serde_json::from_str(&json).unwrap();
        assert_eq!(back, EntityId(7));
    }
}
