//! Relative part poses recovered by solving every connection edge.
//!
//! Each node has a frame: the local frame of the lexicographically smallest
//! part beneath it. Edges are solved bottom-up so that features on a
//! subassembly are expressed in that subassembly's frame.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use nalgebra::Vector3;

use super::io::from_json_str;
use super::types::*;
use super::validate::validate;
use super::{GraphError, GraphIoError};
use crate::geometry::{AttachmentFeature, RigidTransform};
use crate::pose::{pose_metrics, solve_alignment, AlignmentResult, Degeneracy, MatchedPairs, PoseMetrics};

pub const POSES_FORMAT_VERSION: u32 = 1;

/// Solved edge transforms as written by `pose solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub format_version: u32,
    pub task: String,
    pub alpha: f64,
    pub edges: BTreeMap<EdgeId, EdgeSolution>,
}

impl PosesFile {
    pub fn new(task: &str, alpha: f64, poses: &GraphPoses) -> Self {
        Self {
            format_version: POSES_FORMAT_VERSION,
            task: task.to_owned(),
            alpha,
            edges: poses.edges.clone(),
        }
    }

    pub fn edge_transforms(&self) -> BTreeMap<EdgeId, RigidTransform<f64>> {
        self.edges.iter().map(|(k, v)| (k.clone(), v.transform)).collect()
    }
}

pub fn load_poses(text: &str) -> Result<PosesFile, GraphIoError> {
    let file: PosesFile = from_json_str(text)?;
    if file.format_version != POSES_FORMAT_VERSION {
        return Err(GraphIoError::Schema {
            field: "format_version".into(),
            message: format!("unsupported version {}, expected {POSES_FORMAT_VERSION}", file.format_version),
        });
    }
    Ok(file)
}

/// Sample points for a part: its origin, its attachment points, and each
/// point moved 1 cm along its normal.
pub fn part_cloud(part: &Part) -> Vec<Vector3<f64>> {
    let mut cloud = vec![Vector3::zeros()];
    for f in part.attachment_points.values() {
        cloud.push(f.position);
        cloud.push(f.position + f.normal * 0.01);
    }
    cloud
}

/// Scores part poses composed from solved edge transforms against the
/// graph's assembled poses, both in the root frame.
pub fn evaluate_poses(
    graph: &AssemblyGraph,
    edges: &BTreeMap<EdgeId, RigidTransform<f64>>,
    pa_threshold: f64,
) -> Result<PoseMetrics, GraphError> {
    let report = validate(graph);
    if !report.is_valid() {
        return Err(GraphError::Invalid(report));
    }
    let root = &graph.root().expect("validated").id;
    let truth = truth_frames(graph).ok_or(GraphError::NoGroundTruth)?;
    let solved = frames_from_edges(graph, edges);
    let (truth, solved) = (&truth[root], &solved[root]);
    let mut predicted = Vec::new();
    let mut expected = Vec::new();
    let mut clouds = Vec::new();
    for (id, part) in &graph.parts {
        predicted.push(solved.get(id).copied().unwrap_or_else(RigidTransform::identity));
        expected.push(truth[id]);
        clouds.push(part_cloud(part));
    }
    pose_metrics(&predicted, &expected, &clouds, pa_threshold).map_err(GraphError::Metrics)
}

/// Part poses in a node's frame, for every node of the graph.
pub type NodeFrames = BTreeMap<NodeId, BTreeMap<PartId, RigidTransform<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSolution {
    /// Maps the frame of `edge.nodes[0]` into the frame of `edge.nodes[1]`.
    pub transform: RigidTransform<f64>,
    pub residual: f64,
    pub degeneracy: Degeneracy,
}

impl From<AlignmentResult<f64>> for EdgeSolution {
    fn from(r: AlignmentResult<f64>) -> Self {
        Self {
            transform: r.transform,
            residual: r.residual,
            degeneracy: r.degeneracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPoses {
    pub edges: BTreeMap<EdgeId, EdgeSolution>,
    pub frames: NodeFrames,
}

impl GraphPoses {
    /// Solved transform of every edge, `nodes[0]` into `nodes[1]`.
    pub fn edge_transforms(&self) -> BTreeMap<EdgeId, RigidTransform<f64>> {
        self.edges.iter().map(|(k, v)| (k.clone(), v.transform)).collect()
    }

    /// Transform taking the held component's frame into the fixed one's.
    pub fn held_to_fixed(&self, edge: &EdgeId, held_is_first: bool) -> Option<RigidTransform<f64>> {
        let t = self.edges.get(edge)?.transform;
        Some(if held_is_first { t } else { t.inverse() })
    }

    /// Part poses in the root frame.
    pub fn assembled(&self, graph: &AssemblyGraph) -> Option<&BTreeMap<PartId, RigidTransform<f64>>> {
        self.frames.get(&graph.root()?.id)
    }
}

pub fn anchor_part(graph: &AssemblyGraph, node: &NodeId) -> Option<PartId> {
    graph.parts_under(node).into_iter().next()
}

/// Endpoint feature expressed in the frame of `node`.
pub fn feature_in_node(
    graph: &AssemblyGraph,
    frames: &NodeFrames,
    node: &NodeId,
    end: &Endpoint,
) -> Option<AttachmentFeature<f64>> {
    let pose = frames.get(node)?.get(&end.part)?;
    Some(graph.feature(end)?.transformed(pose))
}

/// Matched pairs for one edge given frames for both of its nodes.
pub fn edge_pairs(graph: &AssemblyGraph, frames: &NodeFrames, edge: &ConnectionEdge, alpha: f64) -> Option<MatchedPairs<f64>> {
    let [a, b] = &edge.nodes;
    let pairs = edge
        .instances
        .iter()
        .map(|inst| {
            Some((
                feature_in_node(graph, frames, a, &inst.end_a)?,
                feature_in_node(graph, frames, b, &inst.end_b)?,
            ))
        })
        .collect::<Option<Vec<_>>>()?;
    Some(MatchedPairs::new(pairs).with_alpha(alpha))
}

/// Solves every connection edge and composes part poses up the hierarchy.
pub fn solve_graph_poses(graph: &AssemblyGraph, alpha: f64) -> Result<GraphPoses, GraphError> {
    let report = validate(graph);
    if !report.is_valid() {
        return Err(GraphError::Invalid(report));
    }
    let mut frames = NodeFrames::new();
    let mut edges = BTreeMap::new();
    let root = graph.root().expect("validated").id.clone();
    for node_id in post_order(graph, &root) {
        let node = graph.node(&node_id).expect("validated");
        if let NodeKind::Part { part } = &node.kind {
            frames.insert(node_id.clone(), BTreeMap::from([(part.clone(), RigidTransform::identity())]));
            continue;
        }
        let mut local: BTreeMap<&EdgeId, RigidTransform<f64>> = BTreeMap::new();
        for edge in child_edges(graph, node) {
            let pairs = edge_pairs(graph, &frames, edge, alpha).expect("validated endpoints");
            let result = solve_alignment(&pairs).map_err(|source| GraphError::Pose {
                edge: edge.id.clone(),
                source,
            })?;
            local.insert(&edge.id, result.transform);
            edges.insert(edge.id.clone(), EdgeSolution::from(result));
        }
        let placed = place_children(graph, node, |edge| local.get(&edge.id).copied());
        let mut parts = BTreeMap::new();
        for (child, child_pose) in placed {
            for (part, pose) in &frames[&child] {
                parts.insert(part.clone(), child_pose.compose(pose));
            }
        }
        frames.insert(node_id, parts);
    }
    Ok(GraphPoses { edges, frames })
}

/// Node frames from already solved edge transforms, keyed by edge id in the
/// `nodes[0]` to `nodes[1]` direction. Children without a transform path to
/// the anchor child are left out.
pub fn frames_from_edges(graph: &AssemblyGraph, edges: &BTreeMap<EdgeId, RigidTransform<f64>>) -> NodeFrames {
    let mut frames = NodeFrames::new();
    let Some(root) = graph.root() else { return frames };
    for node_id in post_order(graph, &root.id) {
        let Some(node) = graph.node(&node_id) else { continue };
        if let NodeKind::Part { part } = &node.kind {
            frames.insert(node_id.clone(), BTreeMap::from([(part.clone(), RigidTransform::identity())]));
            continue;
        }
        let placed = place_children(graph, node, |edge| edges.get(&edge.id).copied());
        let mut parts = BTreeMap::new();
        for (child, child_pose) in placed {
            for (part, pose) in frames.get(&child).into_iter().flatten() {
                parts.insert(part.clone(), child_pose.compose(pose));
            }
        }
        frames.insert(node_id, parts);
    }
    frames
}

/// Node frames derived from the parts' assembled poses. `None` unless every
/// part carries one.
pub fn truth_frames(graph: &AssemblyGraph) -> Option<NodeFrames> {
    let assembled: BTreeMap<&PartId, &RigidTransform<f64>> = graph
        .parts
        .iter()
        .map(|(id, p)| Some((id, p.assembled_pose.as_ref()?)))
        .collect::<Option<_>>()?;
    let mut frames = NodeFrames::new();
    for node in &graph.nodes {
        let anchor = anchor_part(graph, &node.id)?;
        let anchor_inv = assembled.get(&anchor)?.inverse();
        let parts = graph
            .parts_under(&node.id)
            .into_iter()
            .map(|p| {
                let pose = anchor_inv.compose(assembled[&p]);
                (p, pose)
            })
            .collect();
        frames.insert(node.id.clone(), parts);
    }
    Some(frames)
}

/// Ground-truth transform from the frame of `edge.nodes[0]` to `edge.nodes[1]`.
pub fn truth_edge_transform(graph: &AssemblyGraph, edge: &ConnectionEdge) -> Option<RigidTransform<f64>> {
    let pose = |node: &NodeId| {
        let anchor = anchor_part(graph, node)?;
        graph.parts.get(&anchor)?.assembled_pose
    };
    let a = pose(&edge.nodes[0])?;
    let b = pose(&edge.nodes[1])?;
    Some(b.inverse().compose(&a))
}

fn post_order(graph: &AssemblyGraph, root: &NodeId) -> Vec<NodeId> {
    fn visit(graph: &AssemblyGraph, id: &NodeId, out: &mut Vec<NodeId>) {
        if let Some(node) = graph.node(id) {
            for child in &node.children {
                visit(graph, child, out);
            }
        }
        out.push(id.clone());
    }
    let mut out = Vec::new();
    visit(graph, root, &mut out);
    out
}

fn child_edges<'g>(graph: &'g AssemblyGraph, node: &'g GraphNode) -> impl Iterator<Item = &'g ConnectionEdge> {
    graph
        .connection_edges
        .iter()
        .filter(move |e| e.nodes.iter().all(|n| node.children.contains(n)))
}

/// Places each child in the node frame by walking the child connection
/// graph outward from the child that holds the node's anchor part.
fn place_children<F>(graph: &AssemblyGraph, node: &GraphNode, transform: F) -> BTreeMap<NodeId, RigidTransform<f64>>
where
    F: Fn(&ConnectionEdge) -> Option<RigidTransform<f64>>,
{
    let anchor = anchor_part(graph, &node.id);
    let start = node
        .children
        .iter()
        .find(|c| anchor.as_ref().is_some_and(|a| graph.parts_under(c).contains(a)))
        .cloned();
    let mut placed = BTreeMap::new();
    let Some(start) = start else { return placed };
    placed.insert(start.clone(), RigidTransform::identity());
    let mut queue = VecDeque::from([start]);
    let edges: Vec<&ConnectionEdge> = child_edges(graph, node).collect();
    while let Some(current) = queue.pop_front() {
        for edge in &edges {
            let Some(t) = transform(edge) else { continue };
            let [a, b] = &edge.nodes;
            let current_pose = placed[&current];
            let next = if b == &current && !placed.contains_key(a) {
                Some((a.clone(), current_pose.compose(&t)))
            } else if a == &current && !placed.contains_key(b) {
                Some((b.clone(), current_pose.compose(&t.inverse())))
            } else {
                None
            };
            if let Some((id, pose)) = next {
                placed.insert(id.clone(), pose);
                queue.push_back(id);
            }
        }
    }
    placed
}
