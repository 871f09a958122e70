//! Connection-enriched hierarchical assembly graph.
//!
//! Leaves are parts, inner nodes are subassemblies, and the single root is
//! the finished product. Composition edges are the node child lists;
//! equivalence edges mark interchangeable components; connection edges join
//! siblings and carry one [`ConnectionInstance`] per connector.

mod frames;
mod io;
mod plan;
mod types;
mod validate;

pub use frames::{
    anchor_part, edge_pairs, evaluate_poses, feature_in_node, frames_from_edges, load_poses, part_cloud, solve_graph_poses,
    truth_edge_transform, truth_frames, EdgeSolution, GraphPoses, NodeFrames, PosesFile, POSES_FORMAT_VERSION,
};
pub use io::{load_graph, save_graph, GraphIoError};
pub(crate) use io::from_json_str;
pub use plan::{plan_sequence, ConnectionOperation};
pub use types::*;
pub use validate::{validate, Rule, ValidationReport, Violation};

use thiserror::Error;

use crate::geometry::{AttachmentFeature, RigidTransform};
use crate::pose::PoseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph: {} violation(s), first: {}", .0.violations.len(), .0.violations.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(ValidationReport),
    #[error("edge {edge}: {source}")]
    Pose {
        edge: EdgeId,
        #[source]
        source: PoseError,
    },
    #[error(transparent)]
    Io(#[from] GraphIoError),
    #[error("graph carries no ground-truth assembled poses")]
    NoGroundTruth,
    #[error("pose metrics: {0}")]
    Metrics(PoseError),
}

/// Incremental construction of an [`AssemblyGraph`]. Nothing is checked until
/// [`validate`] runs.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    graph: AssemblyGraph,
    explicit_order: bool,
}

impl GraphBuilder {
    pub const ROOT: &'static str = "root";

    pub fn new(name: impl Into<String>) -> Self {
        Self {
            graph: AssemblyGraph {
                format_version: FORMAT_VERSION,
                name: name.into(),
                parts: Default::default(),
                connectors: Default::default(),
                nodes: vec![GraphNode {
                    id: NodeId::new(Self::ROOT),
                    kind: NodeKind::Root,
                    label: None,
                    children: vec![],
                }],
                equivalence_edges: vec![],
                connection_edges: vec![],
                step_order: vec![],
            },
            explicit_order: false,
        }
    }

    fn attach(&mut self, node: GraphNode, parent: &str) {
        if let Some(p) = self.graph.nodes.iter_mut().find(|n| n.id.as_str() == parent) {
            p.children.push(node.id.clone());
        }
        self.graph.nodes.push(node);
    }

    /// Adds a subassembly node under `parent`.
    pub fn subassembly(mut self, id: &str, label: &str, parent: &str) -> Self {
        self.attach(
            GraphNode {
                id: NodeId::new(id),
                kind: NodeKind::Subassembly,
                label: Some(label.to_owned()),
                children: vec![],
            },
            parent,
        );
        self
    }

    /// Adds a part together with its leaf node (same id) under `parent`.
    pub fn part(mut self, id: &str, label: &str, parent: &str, assembled_pose: Option<RigidTransform<f64>>) -> Self {
        self.graph.parts.insert(
            PartId::new(id),
            Part {
                label: Some(label.to_owned()),
                attachment_points: Default::default(),
                assembled_pose,
            },
        );
        self.attach(
            GraphNode {
                id: NodeId::new(id),
                kind: NodeKind::Part { part: PartId::new(id) },
                label: Some(label.to_owned()),
                children: vec![],
            },
            parent,
        );
        self
    }

    pub fn point(mut self, part: &str, point: &str, feature: AttachmentFeature<f64>) -> Self {
        self.graph
            .parts
            .entry(PartId::new(part))
            .or_default()
            .attachment_points
            .insert(AttachmentPointId::new(point), feature);
        self
    }

    pub fn connector(mut self, id: &str, kind: ConnectorType) -> Self {
        self.graph.connectors.insert(ConnectorId::new(id), kind);
        self
    }

    pub fn edge(mut self, id: &str, a: &str, b: &str, instances: Vec<ConnectionInstance>) -> Self {
        self.graph.connection_edges.push(ConnectionEdge {
            id: EdgeId::new(id),
            nodes: [NodeId::new(a), NodeId::new(b)],
            instances,
        });
        self
    }

    pub fn equivalence(mut self, a: &str, b: &str) -> Self {
        self.graph.equivalence_edges.push([NodeId::new(a), NodeId::new(b)]);
        self
    }

    /// Overrides the default step order (edge insertion order).
    pub fn step_order(mut self, edges: &[&str]) -> Self {
        self.graph.step_order = edges.iter().map(|e| EdgeId::new(*e)).collect();
        self.explicit_order = true;
        self
    }

    pub fn build(mut self) -> AssemblyGraph {
        if !self.explicit_order {
            self.graph.step_order = self.graph.connection_edges.iter().map(|e| e.id.clone()).collect();
        }
        self.graph
    }
}

impl ConnectionInstance {
    pub fn mortise_tenon(end_a: Endpoint, end_b: Endpoint) -> Self {
        Self {
            connector_type: ConnectorType::MortiseTenon,
            connector: None,
            end_a,
            end_b,
            screw_lead: None,
        }
    }

    pub fn with_connector(kind: ConnectorType, connector: &str, end_a: Endpoint, end_b: Endpoint) -> Self {
        Self {
            connector_type: kind,
            connector: Some(ConnectorId::new(connector)),
            end_a,
            end_b,
            screw_lead: None,
        }
    }
}
