use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: String,
    /// Allowed values; never empty.
    pub values: Vec<String>,
}

/// A conjunction of predicates over distinct features. The empty rule
/// matches every row.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupRule {
    pub predicates: Vec<Predicate>,
}

impl SubgroupRule {
    pub fn new(predicates: Vec<Predicate>) -> Self {
        SubgroupRule { predicates }
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn uses(&self, feature: &str) -> bool {
        self.predicates.iter().any(|p| p.feature == feature)
    }
}

impl fmt::Display for SubgroupRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicates.is_empty() {
            return f.write_str("all rows");
        }
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{} ∈ {{", p.feature)?;
            for (j, v) in p.values.iter().enumerate() {
                if j > 0 {
                    f.write_str(", ")?;
                }
                f.write_str(v)?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

/// An edit to a rule. Edits build a new rule and never touch the original.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RuleEdit {
    DropPredicate { index: usize },
    SetValues { index: usize, values: Vec<String> },
    AddPredicate { feature: String, values: Vec<String> },
    /// Swap predicate `index` for one on another feature.
    ReplacePredicate { index: usize, feature: String, values: Vec<String> },
}
