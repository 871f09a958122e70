use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{AttachmentFeature, RigidTransform};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }
    };
}

string_id!(PartId);
string_id!(ConnectorId);
string_id!(NodeId);
string_id!(
    /// Attachment point label, unique across the whole graph (e.g. `1B`).
    AttachmentPointId
);
string_id!(EdgeId);

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorType {
    MortiseTenon,
    Dowel,
    Screw,
}

impl ConnectorType {
    pub const ALL: [ConnectorType; 3] = [Self::MortiseTenon, Self::Dowel, Self::Screw];

    /// Whether instances of this type carry a separate connector piece.
    pub fn has_connector_piece(self) -> bool {
        !matches!(self, Self::MortiseTenon)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MortiseTenon => "mortise_tenon",
            Self::Dowel => "dowel",
            Self::Screw => "screw",
        }
    }
}

impl fmt::Display for ConnectorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One side of a connection instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub part: PartId,
    pub point: AttachmentPointId,
}

impl Endpoint {
    pub fn new(part: impl Into<String>, point: impl Into<String>) -> Self {
        Self {
            part: PartId::new(part),
            point: AttachmentPointId::new(point),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionInstance {
    pub connector_type: ConnectorType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connector: Option<ConnectorId>,
    pub end_a: Endpoint,
    pub end_b: Endpoint,
    /// Meters advanced per revolution; screws only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screw_lead: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Part {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub attachment_points: BTreeMap<AttachmentPointId, AttachmentFeature<f64>>,
    /// Ground-truth pose of the part in the finished product, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembled_pose: Option<RigidTransform<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Part { part: PartId },
    Subassembly,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    #[serde(flatten)]
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeId>,
}

impl GraphNode {
    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(self.id.as_str())
    }
}

/// All connection instances between two sibling nodes. `end_a` of every
/// instance lies under `nodes[0]`, `end_b` under `nodes[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionEdge {
    pub id: EdgeId,
    pub nodes: [NodeId; 2],
    pub instances: Vec<ConnectionInstance>,
}

/// Hierarchical assembly graph with composition (node children),
/// equivalence and connection edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyGraph {
    pub format_version: u32,
    pub name: String,
    pub parts: BTreeMap<PartId, Part>,
    #[serde(default)]
    pub connectors: BTreeMap<ConnectorId, ConnectorType>,
    pub nodes: Vec<GraphNode>,
    #[serde(default)]
    pub equivalence_edges: Vec<[NodeId; 2]>,
    #[serde(default)]
    pub connection_edges: Vec<ConnectionEdge>,
    /// Connection edges in manual order.
    #[serde(default)]
    pub step_order: Vec<EdgeId>,
}

impl AssemblyGraph {
    pub fn node(&self, id: &NodeId) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&ConnectionEdge> {
        self.connection_edges.iter().find(|e| &e.id == id)
    }

    pub fn root(&self) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Root)
    }

    /// Parent→child pairs implied by the node child lists.
    pub fn composition_edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes
            .iter()
            .flat_map(|n| n.children.iter().map(move |c| (n.id.clone(), c.clone())))
            .collect()
    }

    pub fn parent_of(&self, id: &NodeId) -> Option<&NodeId> {
        self.nodes
            .iter()
            .find(|n| n.children.contains(id))
            .map(|n| &n.id)
    }

    /// Parts at or below `id`. Unknown ids and cycles yield a partial set.
    pub fn parts_under(&self, id: &NodeId) -> BTreeSet<PartId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id.clone()];
        let mut seen = BTreeSet::new();
        while let Some(current) = stack.pop() {
            if !seen.insert(current.clone()) {
                continue;
            }
            if let Some(node) = self.node(&current) {
                if let NodeKind::Part { part } = &node.kind {
                    out.insert(part.clone());
                }
                stack.extend(node.children.iter().cloned());
            }
        }
        out
    }

    /// Node ids at or below `id`.
    pub fn subtree(&self, id: &NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id.clone()];
        while let Some(current) = stack.pop() {
            if !seen.insert(current.clone()) {
                continue;
            }
            if let Some(node) = self.node(&current) {
                stack.extend(node.children.iter().cloned());
            }
        }
        seen
    }

    pub fn feature(&self, end: &Endpoint) -> Option<&AttachmentFeature<f64>> {
        self.parts.get(&end.part)?.attachment_points.get(&end.point)
    }

    pub fn instance_count(&self) -> usize {
        self.connection_edges.iter().map(|e| e.instances.len()).sum()
    }
}
