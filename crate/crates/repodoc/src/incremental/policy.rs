//! The propagation policy: a rule matrix deciding, per change type and edge
//! kind, how far a change's impact travels through the graph.

use crate::graph::RelationKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// What happened to an entity between two snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeType {
    Added,
    Removed,
    BodyModified,
    SignatureModified,
}

impl ChangeType {
    pub fn as_str(self) -> &'static str {
        match self {
            ChangeType::Added => "added",
            ChangeType::Removed => "removed",
            ChangeType::BodyModified => "body_modified",
            ChangeType::SignatureModified => "signature_modified",
        }
    }
}

/// Traversal direction relative to an edge: `Up` walks edges backward (to
/// dependents, e.g. callers), `Down` walks them forward (to dependencies).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropDirection {
    Up,
    Down,
}

impl PropDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            PropDirection::Up => "up",
            PropDirection::Down => "down",
        }
    }
}

/// Whether and how far to keep walking when a traversal meets an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAction {
    Stop,
    /// `None` means unlimited hops.
    Propagate { max_hops: Option<u32> },
}

type RuleKey = (ChangeType, bool, RelationKind, PropDirection);

/// Rule matrix keyed by (change type, origin visibility, edge kind,
/// direction). Missing entries mean [`PolicyAction::Stop`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagationPolicy {
    rules: BTreeMap<RuleKey, PolicyAction>,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("malformed rule key {0:?} (want change/visibility/kind/direction)")]
    Key(String),
    #[error("malformed rule value {0:?} (want stop, unlimited, or a hop count)")]
    Value(String),
    #[error("malformed policy file: {0}")]
    Toml(String),
}

impl PropagationPolicy {
    pub fn empty() -> Self {
        PropagationPolicy {
            rules: BTreeMap::new(),
        }
    }

    /// The default matrix. Interface changes ripple to all transitive
    /// dependents; implementation changes stay within one hop; adds and
    /// removals reach direct neighbors on both sides so their doc context
    /// lists stay correct.
    pub fn extended_default() -> Self {
        use ChangeType::*;
        use PropDirection::*;
        use RelationKind::*;
        let mut policy = PropagationPolicy::empty();
        let unlimited = PolicyAction::Propagate { max_hops: None };
        let one = PolicyAction::Propagate { max_hops: Some(1) };
        for public in [true, false] {
            for kind in [Calls, Implements, Extends] {
                policy.set(SignatureModified, public, kind, Up, unlimited);
                policy.set(SignatureModified, public, kind, Down, one);
                for change in [Added, Removed] {
                    policy.set(change, public, kind, Up, one);
                    policy.set(change, public, kind, Down, one);
                }
            }
            policy.set(SignatureModified, public, Imports, Up, unlimited);
            policy.set(Added, public, Imports, Up, one);
            policy.set(Removed, public, Imports, Up, one);
        }
        // Body changes are invisible to dependents of private code; public
        // bodies still shift call edges, so direct neighbors are rechecked.
        policy.set(BodyModified, true, Calls, Up, one);
        policy.set(BodyModified, true, Calls, Down, one);
        policy
    }

    pub fn set(
        &mut self,
        change: ChangeType,
        origin_public: bool,
        kind: RelationKind,
        direction: PropDirection,
        action: PolicyAction,
    ) {
        self.rules.insert((change, origin_public, kind, direction), action);
    }

    pub fn action(
        &self,
        change: ChangeType,
        origin_public: bool,
        kind: RelationKind,
        direction: PropDirection,
    ) -> PolicyAction {
        self.rules
            .get(&(change, origin_public, kind, direction))
            .copied()
            .unwrap_or(PolicyAction::Stop)
    }

    /// True when no rule carries a finite hop bound. Propagation is a
    /// closure operator (idempotent) exactly on such policies.
    pub fn is_unlimited(&self) -> bool {
        self.rules.values().all(|a| {
            !matches!(
                a,
                PolicyAction::Propagate {
                    max_hops: Some(_)
                }
            )
        })
    }

    pub fn to_toml(&self) -> String {
        let mut rules = BTreeMap::new();
        for ((change, public, kind, direction), action) in &self.rules {
            let key = format!(
                "{}/{}/{}/{}",
                change.as_str(),
                if *public { "public" } else { "private" },
                kind.as_str(),
                direction.as_str()
            );
            let value = match action {
                PolicyAction::Stop => "stop".to_string(),
                PolicyAction::Propagate { max_hops: None } => "unlimited".to_string(),
                PolicyAction::Propagate { max_hops: Some(n) } => n.to_string(),
            };
            rules.insert(key, value);
        }
        let doc = PolicyDoc { schema: 1, rules };
        toml::to_string_pretty(&doc).expect("policy serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, PolicyError> {
        let doc: PolicyDoc = toml::from_str(text).map_err(|e| PolicyError::Toml(e.to_string()))?;
        let mut policy = PropagationPolicy::empty();
        for (key, value) in doc.rules {
            let parts: Vec<&str> = key.split('/').collect();
            let [change, visibility, kind, direction] = parts[..] else {
                return Err(PolicyError::Key(key));
            };
            let change = match change {
                "added" => ChangeType::Added,
                "removed" => ChangeType::Removed,
                "body_modified" => ChangeType::BodyModified,
                "signature_modified" => ChangeType::SignatureModified,
                _ => return Err(PolicyError::Key(key)),
            };
            let public = match visibility {
                "public" => true,
                "private" => false,
                _ => return Err(PolicyError::Key(key)),
            };
            let kind = RelationKind::all()
                .iter()
                .copied()
                .find(|k| k.as_str() == kind)
                .ok_or_else(|| PolicyError::Key(key.clone()))?;
            let direction = match direction {
                "up" => PropDirection::Up,
                "down" => PropDirection::Down,
                _ => return Err(PolicyError::Key(key)),
            };
            let action = match value.as_str() {
                "stop" => PolicyAction::Stop,
                "unlimited" => PolicyAction::Propagate { max_hops: None },
                n => PolicyAction::Propagate {
                    max_hops: Some(n.parse().map_err(|_| PolicyError::Value(value.clone()))?),
                },
            };
            policy.set(change, public, kind, direction, action);
        }
        Ok(policy)
    }
}

impl Default for PropagationPolicy {
    fn default() -> Self {
        Self::extended_default()
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyDoc {
    schema: u32,
    rules: BTreeMap<String, String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChangeType::*;
    use PropDirection::*;

    #[test]
    fn default_matrix_matches_the_documented_rules() {
        let p = PropagationPolicy::extended_default();
        assert_eq!(
            p.action(SignatureModified, true, RelationKind::Calls, Up),
            PolicyAction::Propagate { max_hops: None }
        );
        assert_eq!(
            p.action(SignatureModified, false, RelationKind::Calls, Up),
            PolicyAction::Propagate { max_hops: None }
        );
        assert_eq!(
            p.action(BodyModified, true, RelationKind::Calls, Up),
            PolicyAction::Propagate { max_hops: Some(1) }
        );
        assert_eq!(
            p.action(BodyModified, false, RelationKind::Calls, Up),
            PolicyAction::Stop
        );
        assert_eq!(
            p.action(BodyModified, true, RelationKind::Imports, Up),
            PolicyAction::Stop
        );
        assert_eq!(
            p.action(Added, true, RelationKind::Extends, Down),
            PolicyAction::Propagate { max_hops: Some(1) }
        );
        assert_eq!(
            p.action(Removed, false, RelationKind::Imports, Up),
            PolicyAction::Propagate { max_hops: Some(1) }
        );
        assert!(!p.is_unlimited());
    }

    #[test]
    fn toml_round_trip_preserves_every_rule() {
        let p = PropagationPolicy::extended_default();
        let text = p.to_toml();
        let back = PropagationPolicy::from_toml(&text).unwrap();
        assert_eq!(back, p);
        assert!(text.contains("\"signature_modified/public/calls/up\" = \"unlimited\""));
        assert!(text.contains("\"body_modified/public/calls/up\" = \"1\""));
    }

    #[test]
    fn malformed_policies_are_rejected() {
        assert!(PropagationPolicy::from_toml("schema = 1\n[rules]\n\"x\" = \"stop\"").is_err());
        assert!(PropagationPolicy::from_toml(
            "schema = 1\n[rules]\n\"added/public/calls/up\" = \"soon\""
        )
        .is_err());
        assert!(PropagationPolicy::from_toml("not toml [").is_err());
    }

    #[test]
    fn unlimited_detection() {
        let mut p = PropagationPolicy::empty();
        assert!(p.is_unlimited());
        p.set(
            Added,
            true,
            RelationKind::Calls,
            Up,
            PolicyAction::Propagate { max_hops: None },
        );
        assert!(p.is_unlimited());
        p.set(
            Added,
            true,
            RelationKind::Calls,
            Down,
            PolicyAction::Propagate { max_hops: Some(2) },
        );
        assert!(!p.is_unlimited());
    }
}
