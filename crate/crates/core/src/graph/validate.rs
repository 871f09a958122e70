use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::types::*;

/// Invariant a graph can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    FormatVersion,
    EmptyId,
    DuplicateId,
    RootCount,
    UnknownNode,
    ParentCount,
    Unreachable,
    PartNodeWithChildren,
    UnknownPart,
    PartNodeCount,
    NonUnitNormal,
    NotSiblings,
    SelfConnection,
    EmptyEdge,
    EndpointOutsideNode,
    UnknownAttachmentPoint,
    SamePartInstance,
    /// Mortise-tenon instances carry no connector; dowels and screws must.
    ConnectorPresence,
    UnknownConnector,
    ConnectorTypeMismatch,
    ConnectorReused,
    ScrewLead,
    EquivalenceLayout,
    StepOrder,
    DisconnectedChildren,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    /// Node, edge, part or field the violation is attached to.
    pub locus: Vec<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at [{}]: {}", self.rule, self.locus.join(", "), self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }

    fn push(&mut self, rule: Rule, locus: &[&str], message: impl Into<String>) {
        self.violations.push(Violation {
            rule,
            locus: locus.iter().map(|s| s.to_string()).collect(),
            message: message.into(),
        });
    }
}

/// Checks every structural invariant and reports all violations found.
pub fn validate(graph: &AssemblyGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    if graph.format_version != FORMAT_VERSION {
        report.push(
            Rule::FormatVersion,
            &["format_version"],
            format!("expected {FORMAT_VERSION}, found {}", graph.format_version),
        );
    }
    check_ids(graph, &mut report);
    let parents = check_tree(graph, &mut report);
    check_parts(graph, &mut report);
    check_connections(graph, &parents, &mut report);
    check_equivalences(graph, &mut report);
    check_step_order(graph, &parents, &mut report);
    report
}

fn check_ids(graph: &AssemblyGraph, report: &mut ValidationReport) {
    let mut nodes = BTreeSet::new();
    for node in &graph.nodes {
        if node.id.as_str().is_empty() {
            report.push(Rule::EmptyId, &["nodes"], "empty node id");
        }
        if !nodes.insert(&node.id) {
            report.push(Rule::DuplicateId, &[node.id.as_str()], "duplicate node id");
        }
    }
    let mut edges = BTreeSet::new();
    for edge in &graph.connection_edges {
        if edge.id.as_str().is_empty() {
            report.push(Rule::EmptyId, &["connection_edges"], "empty edge id");
        }
        if !edges.insert(&edge.id) {
            report.push(Rule::DuplicateId, &[edge.id.as_str()], "duplicate edge id");
        }
    }
    let mut points: BTreeMap<&AttachmentPointId, &PartId> = BTreeMap::new();
    for (part_id, part) in &graph.parts {
        if part_id.as_str().is_empty() {
            report.push(Rule::EmptyId, &["parts"], "empty part id");
        }
        for point in part.attachment_points.keys() {
            if point.as_str().is_empty() {
                report.push(Rule::EmptyId, &[part_id.as_str()], "empty attachment point id");
            }
            if let Some(first) = points.insert(point, part_id) {
                report.push(
                    Rule::DuplicateId,
                    &[point.as_str(), first.as_str(), part_id.as_str()],
                    "attachment point id used on two parts",
                );
            }
        }
    }
    for connector in graph.connectors.keys() {
        if connector.as_str().is_empty() {
            report.push(Rule::EmptyId, &["connectors"], "empty connector id");
        }
    }
}

/// Returns the child→parent map (first parent wins).
fn check_tree(graph: &AssemblyGraph, report: &mut ValidationReport) -> BTreeMap<NodeId, NodeId> {
    let ids: BTreeSet<&NodeId> = graph.nodes.iter().map(|n| &n.id).collect();
    let roots: Vec<&GraphNode> = graph.nodes.iter().filter(|n| n.kind == NodeKind::Root).collect();
    if roots.len() != 1 {
        let locus: Vec<&str> = roots.iter().map(|n| n.id.as_str()).collect();
        report.push(Rule::RootCount, &locus, format!("expected exactly one root, found {}", roots.len()));
    }

    let mut parents: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut parent_counts: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for node in &graph.nodes {
        if matches!(node.kind, NodeKind::Part { .. }) && !node.children.is_empty() {
            report.push(Rule::PartNodeWithChildren, &[node.id.as_str()], "part nodes must be leaves");
        }
        for child in &node.children {
            if !ids.contains(child) {
                report.push(Rule::UnknownNode, &[node.id.as_str(), child.as_str()], "child is not a node");
                continue;
            }
            *parent_counts.entry(child).or_default() += 1;
            parents.entry(child.clone()).or_insert_with(|| node.id.clone());
        }
    }
    for node in &graph.nodes {
        let count = parent_counts.get(&node.id).copied().unwrap_or(0);
        let expected = usize::from(node.kind != NodeKind::Root);
        if count != expected {
            report.push(
                Rule::ParentCount,
                &[node.id.as_str()],
                format!("has {count} parents via composition edges, expected {expected}"),
            );
        }
    }
    if let [root] = roots.as_slice() {
        let reachable = graph.subtree(&root.id);
        for node in &graph.nodes {
            if !reachable.contains(&node.id) {
                report.push(Rule::Unreachable, &[node.id.as_str()], "not reachable from the root");
            }
        }
    }
    parents
}

fn check_parts(graph: &AssemblyGraph, report: &mut ValidationReport) {
    let mut uses: BTreeMap<&PartId, usize> = graph.parts.keys().map(|p| (p, 0)).collect();
    for node in &graph.nodes {
        if let NodeKind::Part { part } = &node.kind {
            match uses.get_mut(part) {
                Some(n) => *n += 1,
                None => report.push(Rule::UnknownPart, &[node.id.as_str(), part.as_str()], "node references an unknown part"),
            }
        }
    }
    for (part, n) in uses {
        if n != 1 {
            report.push(Rule::PartNodeCount, &[part.as_str()], format!("part appears in {n} nodes, expected 1"));
        }
    }
    for (part_id, part) in &graph.parts {
        for (point, feature) in &part.attachment_points {
            if let Err(e) = feature.check() {
                report.push(Rule::NonUnitNormal, &[part_id.as_str(), point.as_str()], e.to_string());
            }
        }
        if let Some(pose) = &part.assembled_pose {
            if let Err(e) = pose.check() {
                report.push(Rule::NonUnitNormal, &[part_id.as_str(), "assembled_pose"], e.to_string());
            }
        }
    }
}

fn check_connections(graph: &AssemblyGraph, parents: &BTreeMap<NodeId, NodeId>, report: &mut ValidationReport) {
    let mut pairs: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut connector_uses: BTreeMap<&ConnectorId, &EdgeId> = BTreeMap::new();
    for edge in &graph.connection_edges {
        let [a, b] = &edge.nodes;
        let e = edge.id.as_str();
        let known = graph.node(a).is_some() && graph.node(b).is_some();
        if !known {
            report.push(Rule::UnknownNode, &[e, a.as_str(), b.as_str()], "edge references an unknown node");
        }
        if a == b {
            report.push(Rule::SelfConnection, &[e, a.as_str()], "edge joins a node to itself");
        } else if known && (parents.get(a).is_none() || parents.get(a) != parents.get(b)) {
            report.push(Rule::NotSiblings, &[e, a.as_str(), b.as_str()], "connection edges must join siblings");
        }
        let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        if !pairs.insert(key) {
            report.push(Rule::DuplicateId, &[e, a.as_str(), b.as_str()], "second edge between the same nodes");
        }
        if edge.instances.is_empty() {
            report.push(Rule::EmptyEdge, &[e], "edge has no connection instances");
        }
        let under_a = graph.parts_under(a);
        let under_b = graph.parts_under(b);
        for (i, inst) in edge.instances.iter().enumerate() {
            let loc = format!("{e}#{i}");
            for (end, side, under) in [(&inst.end_a, a, &under_a), (&inst.end_b, b, &under_b)] {
                if !graph.parts.contains_key(&end.part) {
                    report.push(Rule::UnknownPart, &[&loc, end.part.as_str()], "instance references an unknown part");
                } else if graph.feature(end).is_none() {
                    report.push(
                        Rule::UnknownAttachmentPoint,
                        &[&loc, end.part.as_str(), end.point.as_str()],
                        "attachment point not on the referenced part",
                    );
                }
                if known && !under.contains(&end.part) {
                    report.push(
                        Rule::EndpointOutsideNode,
                        &[&loc, side.as_str(), end.part.as_str()],
                        "instance endpoint is not under its edge node",
                    );
                }
            }
            if inst.end_a.part == inst.end_b.part {
                report.push(Rule::SamePartInstance, &[&loc, inst.end_a.part.as_str()], "both ends on the same part");
            }
            match (&inst.connector, inst.connector_type.has_connector_piece()) {
                (Some(c), false) => report.push(
                    Rule::ConnectorPresence,
                    &[&loc, c.as_str()],
                    "mortise-tenon instances must not name a connector",
                ),
                (None, true) => report.push(
                    Rule::ConnectorPresence,
                    &[&loc],
                    format!("{} instances must name a connector", inst.connector_type),
                ),
                _ => {}
            }
            if let Some(c) = &inst.connector {
                match graph.connectors.get(c) {
                    None => report.push(Rule::UnknownConnector, &[&loc, c.as_str()], "connector not declared"),
                    Some(t) if *t != inst.connector_type => report.push(
                        Rule::ConnectorTypeMismatch,
                        &[&loc, c.as_str()],
                        format!("connector is a {t}, instance says {}", inst.connector_type),
                    ),
                    _ => {}
                }
                if let Some(first) = connector_uses.insert(c, &edge.id) {
                    report.push(
                        Rule::ConnectorReused,
                        &[&loc, c.as_str(), first.as_str()],
                        "connector used by more than one instance",
                    );
                }
            }
            match (inst.screw_lead, inst.connector_type) {
                (Some(lead), ConnectorType::Screw) if !(lead.is_finite() && lead > 0.0) => {
                    report.push(Rule::ScrewLead, &[&loc], format!("screw lead must be positive, got {lead}"))
                }
                (Some(_), t) if t != ConnectorType::Screw => {
                    report.push(Rule::ScrewLead, &[&loc], "screw lead on a non-screw instance")
                }
                _ => {}
            }
        }
    }

    // Each subassembly's children must be joined into one piece by the
    // connection edges among them.
    for node in &graph.nodes {
        if node.children.len() < 2 {
            continue;
        }
        let mut reached: BTreeSet<&NodeId> = BTreeSet::from([&node.children[0]]);
        loop {
            let before = reached.len();
            for edge in &graph.connection_edges {
                let [a, b] = &edge.nodes;
                if node.children.contains(a) && node.children.contains(b) && (reached.contains(a) || reached.contains(b)) {
                    reached.insert(a);
                    reached.insert(b);
                }
            }
            if reached.len() == before {
                break;
            }
        }
        for child in &node.children {
            if !reached.contains(child) {
                report.push(
                    Rule::DisconnectedChildren,
                    &[node.id.as_str(), child.as_str()],
                    "child is not connected to its siblings",
                );
            }
        }
    }
}

fn check_equivalences(graph: &AssemblyGraph, report: &mut ValidationReport) {
    for [a, b] in &graph.equivalence_edges {
        if graph.node(a).is_none() || graph.node(b).is_none() {
            report.push(Rule::UnknownNode, &[a.as_str(), b.as_str()], "equivalence edge references an unknown node");
            continue;
        }
        if a == b {
            report.push(Rule::SelfConnection, &[a.as_str()], "equivalence edge joins a node to itself");
            continue;
        }
        if layout_signature(graph, a) != layout_signature(graph, b) {
            report.push(
                Rule::EquivalenceLayout,
                &[a.as_str(), b.as_str()],
                "attachment layouts differ beyond relabeling",
            );
        }
    }
}

/// Attachment layout of every part under a node, independent of point and
/// part labels. Coordinates are quantized to 1 nm.
pub(crate) fn layout_signature(graph: &AssemblyGraph, node: &NodeId) -> Vec<Vec<[i64; 6]>> {
    let q = |v: f64| (v * 1e9).round() as i64;
    let mut parts: Vec<Vec<[i64; 6]>> = graph
        .parts_under(node)
        .iter()
        .filter_map(|p| graph.parts.get(p))
        .map(|part| {
            let mut points: Vec<[i64; 6]> = part
                .attachment_points
                .values()
                .map(|f| {
                    [
                        q(f.position.x),
                        q(f.position.y),
                        q(f.position.z),
                        q(f.normal.x),
                        q(f.normal.y),
                        q(f.normal.z),
                    ]
                })
                .collect();
            points.sort_unstable();
            points
        })
        .collect();
    parts.sort();
    parts
}

fn check_step_order(graph: &AssemblyGraph, parents: &BTreeMap<NodeId, NodeId>, report: &mut ValidationReport) {
    let mut position: BTreeMap<&EdgeId, usize> = BTreeMap::new();
    for (i, id) in graph.step_order.iter().enumerate() {
        if graph.edge(id).is_none() {
            report.push(Rule::StepOrder, &[id.as_str()], "step references an unknown edge");
        } else if position.insert(id, i).is_some() {
            report.push(Rule::StepOrder, &[id.as_str()], "edge listed twice in step order");
        }
    }
    for edge in &graph.connection_edges {
        if !position.contains_key(&edge.id) {
            report.push(Rule::StepOrder, &[edge.id.as_str()], "edge missing from step order");
        }
    }
    // An edge between two nodes can only run after every edge inside them.
    for edge in &graph.connection_edges {
        let Some(&at) = position.get(&edge.id) else { continue };
        let Some(parent) = parents.get(&edge.nodes[0]) else { continue };
        for inner in &graph.connection_edges {
            let Some(&inner_at) = position.get(&inner.id) else { continue };
            let inner_parent = parents.get(&inner.nodes[0]);
            let nested = inner_parent.is_some_and(|p| {
                p != parent && edge.nodes.iter().any(|n| graph.subtree(n).contains(p))
            });
            if nested && inner_at > at {
                report.push(
                    Rule::StepOrder,
                    &[edge.id.as_str(), inner.id.as_str()],
                    "edge runs before an edge inside one of its components",
                );
            }
        }
    }
}
