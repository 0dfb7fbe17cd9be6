//! Incremental documentation maintenance: change detection, impact
//! propagation under a configurable policy, dependency-ordered selective
//! regeneration, and structural module-tree upkeep.

pub mod detect;
pub mod policy;
pub mod propagate;
pub mod refresh;
pub mod topo;
pub mod tree;
pub mod update;

pub use detect::{detect_changes, ChangeSet, EntityChange};
pub use policy::{ChangeType, PolicyAction, PolicyError, PropDirection, PropagationPolicy};
pub use propagate::{propagate, Origin, UnionEdge};
pub use refresh::{refresh_graph, RefreshOutcome};
pub use topo::{affected_order, is_valid_order};
pub use tree::update_tree_structure;
pub use update::{
    update_from_directory, update_repository, UpdateError, UpdateOptions, UpdateOutcome,
    UpdateReport,
};
