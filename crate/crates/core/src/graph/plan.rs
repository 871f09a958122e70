use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::types::*;
use super::validate::{validate, ValidationReport};
use super::GraphError;

/// One connector insertion or fastening, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionOperation {
    /// `<edge>#<instance index>`.
    pub id: String,
    /// 1-based position in the plan.
    pub step: usize,
    pub edge: EdgeId,
    pub instance_index: usize,
    pub connector_type: ConnectorType,
    /// Component grounded on the table.
    pub fixed: NodeId,
    /// Component moved onto the fixed one.
    pub held: NodeId,
    /// Connector piece carried instead of the held component, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connector: Option<ConnectorId>,
    pub fixed_end: Endpoint,
    pub held_end: Endpoint,
    /// True when the held component is `edge.nodes[0]`.
    pub held_is_first: bool,
}

impl ConnectionOperation {
    pub fn instance<'g>(&self, graph: &'g AssemblyGraph) -> Option<&'g ConnectionInstance> {
        graph.edge(&self.edge)?.instances.get(self.instance_index)
    }
}

/// Expands the graph into one operation per connection instance, following
/// the manual step order and instance order within each edge.
///
/// For each edge the component that already holds more connected parts stays
/// fixed; ties go to the lower node id.
pub fn plan_sequence(graph: &AssemblyGraph) -> Result<Vec<ConnectionOperation>, GraphError> {
    let report: ValidationReport = validate(graph);
    if !report.is_valid() {
        return Err(GraphError::Invalid(report));
    }
    let mut connected: BTreeSet<PartId> = BTreeSet::new();
    let mut ops = Vec::with_capacity(graph.instance_count());
    for edge_id in &graph.step_order {
        let edge = graph.edge(edge_id).expect("validated step order");
        let [a, b] = &edge.nodes;
        let count = |node: &NodeId| graph.parts_under(node).intersection(&connected).count();
        let (ca, cb) = (count(a), count(b));
        let a_fixed = ca > cb || (ca == cb && a < b);
        let (fixed, held) = if a_fixed { (a, b) } else { (b, a) };
        for (i, inst) in edge.instances.iter().enumerate() {
            let (fixed_end, held_end) = if a_fixed {
                (inst.end_a.clone(), inst.end_b.clone())
            } else {
                (inst.end_b.clone(), inst.end_a.clone())
            };
            connected.insert(inst.end_a.part.clone());
            connected.insert(inst.end_b.part.clone());
            ops.push(ConnectionOperation {
                id: format!("{}#{}", edge.id, i),
                step: ops.len() + 1,
                edge: edge.id.clone(),
                instance_index: i,
                connector_type: inst.connector_type,
                fixed: fixed.clone(),
                held: held.clone(),
                connector: inst.connector.clone(),
                fixed_end,
                held_end,
                held_is_first: !a_fixed,
            });
        }
    }
    Ok(ops)
}
