use std::fmt;

use serde::{Deserialize, Serialize};

/// Unordered pair of item ids; the identity used for dedup and exclusion.
///
/// The smaller id (byte order) is always stored first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey(String, String);

impl PairKey {
    pub fn new(x: &str, y: &str) -> Self {
        if x <= y {
            PairKey(x.to_owned(), y.to_owned())
        } else {
            PairKey(y.to_owned(), x.to_owned())
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0 == id || self.1 == id
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.0, self.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unordered() {
        assert_eq!(PairKey::new("b", "a"), PairKey::new("a", "b"));
        assert_eq!(PairKey::new("b", "a").first(), "a");
        assert_eq!(PairKey::new("x", "y").to_string(), "x|y");
    }
}
