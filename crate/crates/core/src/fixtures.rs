//! Synthetic versions of the four benchmark tasks.
//!
//! Geometry is simplified but the part, connector and step counts are the
//! real ones. Every connection is laid out as a world-frame point and normal
//! on the assembled product; local features are derived from the parts'
//! assembled poses, so the ground truth is exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::extraction::{ExtractionDataset, ExtractionStep, PointPair, StepComponent, DATASET_FORMAT_VERSION};
use crate::geometry::{AttachmentFeature, RigidTransform};
use crate::graph::{
    AssemblyGraph, AttachmentPointId, ConnectionInstance, ConnectorType, Endpoint, GraphBuilder,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ShoeShelf,
    Chair,
    LegoPerson,
    PlaneModel,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::ShoeShelf, Task::Chair, Task::LegoPerson, Task::PlaneModel];

    pub fn name(self) -> &'static str {
        match self {
            Task::ShoeShelf => "shoe_shelf",
            Task::Chair => "chair",
            Task::LegoPerson => "lego_person",
            Task::PlaneModel => "plane_model",
        }
    }

    pub fn part_count(self) -> usize {
        match self {
            Task::ShoeShelf => 4,
            Task::Chair => 6,
            Task::LegoPerson => 9,
            Task::PlaneModel => 11,
        }
    }

    /// Number of connection operations.
    pub fn step_count(self) -> usize {
        match self {
            Task::ShoeShelf => 11,
            Task::Chair => 22,
            Task::LegoPerson => 8,
            Task::PlaneModel => 12,
        }
    }

    pub fn graph(self) -> AssemblyGraph {
        match self {
            Task::ShoeShelf => shoe_shelf(),
            Task::Chair => chair(),
            Task::LegoPerson => lego_person(),
            Task::PlaneModel => plane_model(),
        }
    }

    pub fn dataset(self) -> ExtractionDataset {
        dataset_from_graph(&self.graph())
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

/// One extraction step per connection edge, in step order. Candidates are the
/// attachment points under each component not consumed by earlier steps.
pub fn dataset_from_graph(graph: &AssemblyGraph) -> ExtractionDataset {
    let mut consumed: BTreeSet<AttachmentPointId> = BTreeSet::new();
    let mut steps = Vec::new();
    for (i, edge_id) in graph.step_order.iter().enumerate() {
        let Some(edge) = graph.edge(edge_id) else { continue };
        let step_index = i + 1;
        let components = edge
            .nodes
            .iter()
            .map(|node| {
                let label = graph.node(node).map(|n| n.display_name().to_owned()).unwrap_or_default();
                let candidates = graph
                    .parts_under(node)
                    .iter()
                    .filter_map(|p| graph.parts.get(p))
                    .flat_map(|p| p.attachment_points.keys())
                    .filter(|p| !consumed.contains(*p))
                    .cloned()
                    .collect();
                StepComponent {
                    node: node.clone(),
                    label,
                    image: Some(format!("components/{}/{}.png", graph.name, node)),
                    candidates,
                }
            })
            .collect();
        let mut connector_budget = BTreeMap::new();
        let mut truth_pairs = Vec::new();
        for inst in &edge.instances {
            *connector_budget.entry(inst.connector_type).or_default() += 1;
            consumed.insert(inst.end_a.point.clone());
            consumed.insert(inst.end_b.point.clone());
            truth_pairs.push(PointPair {
                points: [inst.end_a.point.clone(), inst.end_b.point.clone()],
                connector_type: inst.connector_type,
            });
        }
        steps.push(ExtractionStep {
            step_index,
            edge: Some(edge.id.clone()),
            components,
            connector_budget,
            truth_pairs,
            manual_present: true,
            manual_image: Some(format!("manuals/{}/step_{:02}.png", graph.name, step_index)),
        });
    }
    ExtractionDataset {
        format_version: DATASET_FORMAT_VERSION,
        task: graph.name.clone(),
        steps,
    }
}

/// Lays out parts and connections in world coordinates.
struct Layout {
    builder: GraphBuilder,
    poses: BTreeMap<String, RigidTransform<f64>>,
    numbers: BTreeMap<String, usize>,
    letters: BTreeMap<String, u8>,
    connectors: BTreeMap<ConnectorType, usize>,
}

fn v(p: [f64; 3]) -> Vector3<f64> {
    Vector3::from(p)
}

fn translated(p: [f64; 3]) -> RigidTransform<f64> {
    RigidTransform::from_translation(v(p))
}

fn rotated(axis: [f64; 3], angle: f64, p: [f64; 3]) -> RigidTransform<f64> {
    RigidTransform::from_axis_angle(&v(axis).normalize(), angle, v(p))
}

impl Layout {
    fn new(name: &str) -> Self {
        Self {
            builder: GraphBuilder::new(name),
            poses: BTreeMap::new(),
            numbers: BTreeMap::new(),
            letters: BTreeMap::new(),
            connectors: BTreeMap::new(),
        }
    }

    fn sub(mut self, id: &str, label: &str, parent: &str) -> Self {
        self.builder = self.builder.subassembly(id, label, parent);
        self
    }

    /// `number` prefixes the part's attachment point labels ("1A", "1B", ...).
    fn part(mut self, id: &str, number: usize, label: &str, parent: &str, pose: RigidTransform<f64>) -> Self {
        self.builder = self.builder.part(id, label, parent, Some(pose));
        self.poses.insert(id.to_owned(), pose);
        self.numbers.insert(id.to_owned(), number);
        self
    }

    /// Adds an attachment point given in world coordinates.
    fn point(&mut self, part: &str, world: [f64; 3], normal: [f64; 3]) -> Endpoint {
        let letter = self.letters.entry(part.to_owned()).or_insert(b'A');
        let label = format!("{}{}", self.numbers[part], *letter as char);
        *letter += 1;
        let feature = AttachmentFeature::normalized(v(world), v(normal)).transformed(&self.poses[part].inverse());
        let builder = std::mem::replace(&mut self.builder, GraphBuilder::new(""));
        self.builder = builder.point(part, &label, feature);
        Endpoint::new(part, label)
    }

    /// A connection at `world` whose `a`-side normal is `normal`.
    fn join(&mut self, kind: ConnectorType, a: &str, b: &str, world: [f64; 3], normal: [f64; 3]) -> ConnectionInstance {
        let end_a = self.point(a, world, normal);
        let end_b = self.point(b, world, [-normal[0], -normal[1], -normal[2]]);
        self.instance(kind, end_a, end_b)
    }

    fn instance(&mut self, kind: ConnectorType, end_a: Endpoint, end_b: Endpoint) -> ConnectionInstance {
        if !kind.has_connector_piece() {
            return ConnectionInstance::mortise_tenon(end_a, end_b);
        }
        let n = self.connectors.entry(kind).or_insert(0);
        *n += 1;
        let id = format!("{}_{}", kind.as_str(), n);
        let builder = std::mem::replace(&mut self.builder, GraphBuilder::new(""));
        self.builder = builder.connector(&id, kind);
        ConnectionInstance::with_connector(kind, &id, end_a, end_b)
    }

    fn edge(mut self, id: &str, a: &str, b: &str, instances: Vec<ConnectionInstance>) -> Self {
        self.builder = self.builder.edge(id, a, b, instances);
        self
    }

    fn equivalence(mut self, a: &str, b: &str) -> Self {
        self.builder = self.builder.equivalence(a, b);
        self
    }

    fn build(self) -> AssemblyGraph {
        self.builder.build()
    }
}

use ConnectorType::{Dowel, MortiseTenon as Mt, Screw};

const X: [f64; 3] = [1.0, 0.0, 0.0];
const NX: [f64; 3] = [-1.0, 0.0, 0.0];
const Y: [f64; 3] = [0.0, 1.0, 0.0];
const NY: [f64; 3] = [0.0, -1.0, 0.0];
const Z: [f64; 3] = [0.0, 0.0, 1.0];
const NZ: [f64; 3] = [0.0, 0.0, -1.0];

/// Two sides, two shelves. Shelves are tenoned and screwed into the sides.
pub fn shoe_shelf() -> AssemblyGraph {
    let mut l = Layout::new("shoe_shelf")
        .sub("frame", "side frame with shelves", "root")
        .part("side_left", 1, "left side panel", "frame", rotated(Z, 0.3, [0.0, 0.15, 0.3]))
        .part("shelf_top", 2, "top shelf board", "frame", rotated(X, -0.2, [0.3, 0.15, 0.5]))
        .part("shelf_bottom", 3, "bottom shelf board", "frame", rotated(Y, 0.5, [0.3, 0.15, 0.1]))
        .part("side_right", 4, "right side panel", "root", rotated([1.0, 1.0, 0.0], 1.1, [0.6, 0.15, 0.3]));

    let e1 = vec![
        l.join(Mt, "side_left", "shelf_top", [0.0, 0.08, 0.5], X),
        l.join(Mt, "side_left", "shelf_top", [0.0, 0.22, 0.5], X),
        l.join(Screw, "side_left", "shelf_top", [0.0, 0.15, 0.52], X),
    ];
    let e2 = vec![
        l.join(Mt, "side_left", "shelf_bottom", [0.0, 0.08, 0.1], X),
        l.join(Mt, "side_left", "shelf_bottom", [0.0, 0.22, 0.1], X),
        l.join(Screw, "side_left", "shelf_bottom", [0.0, 0.15, 0.12], X),
    ];
    let e3 = vec![
        l.join(Mt, "shelf_top", "side_right", [0.6, 0.08, 0.5], X),
        l.join(Mt, "shelf_top", "side_right", [0.6, 0.22, 0.5], X),
        l.join(Mt, "shelf_bottom", "side_right", [0.6, 0.08, 0.1], X),
        l.join(Mt, "shelf_bottom", "side_right", [0.6, 0.22, 0.1], X),
        l.join(Screw, "shelf_top", "side_right", [0.6, 0.15, 0.52], X),
    ];
    l.edge("E1", "side_left", "shelf_top", e1)
        .edge("E2", "side_left", "shelf_bottom", e2)
        .edge("E3", "frame", "side_right", e3)
        .build()
}

/// Side frames, two rails, a backrest and a seat. The first step joins the
/// left side frame to the backrest with dowels 1B-5E and 1C-5F.
pub fn chair() -> AssemblyGraph {
    let mut l = Layout::new("chair")
        .sub("frame_assembly", "chair frame", "root")
        .sub("left_assembly", "left frame with backrest and rails", "frame_assembly")
        .part("side_frame_left", 1, "h-shaped side frame", "left_assembly", rotated(Y, 0.4, [0.0, 0.2, 0.45]))
        .part("backrest", 5, "curved backrest panel", "left_assembly", rotated(X, 0.15, [0.22, 0.4, 0.7]))
        .part("front_rail", 2, "front rail", "left_assembly", rotated(Z, -0.7, [0.22, 0.0, 0.35]))
        .part("back_rail", 3, "back rail", "left_assembly", rotated([0.0, 1.0, 1.0], 2.0, [0.22, 0.4, 0.35]))
        .part("side_frame_right", 4, "right side frame", "frame_assembly", rotated(Z, std::f64::consts::PI, [0.45, 0.2, 0.45]))
        .part("seat", 6, "seat panel", "root", rotated([1.0, 0.0, 1.0], -0.6, [0.22, 0.2, 0.46]));

    // Point creation order fixes the labels: backrest 5A-5D come first so the
    // backrest dowels of the first step are 5E and 5F.
    let e4_backrest = vec![
        l.join(Dowel, "backrest", "side_frame_right", [0.45, 0.4, 0.6], X),
        l.join(Dowel, "backrest", "side_frame_right", [0.45, 0.4, 0.8], X),
    ];
    l.point("backrest", [0.1, 0.42, 0.9], Z);
    l.point("backrest", [0.35, 0.42, 0.9], Z);
    l.point("side_frame_left", [0.0, 0.2, 0.1], NZ);

    let e1 = vec![
        l.join(Dowel, "side_frame_left", "backrest", [0.0, 0.4, 0.6], X),
        l.join(Dowel, "side_frame_left", "backrest", [0.0, 0.4, 0.8], X),
    ];
    let e2 = vec![
        l.join(Dowel, "side_frame_left", "front_rail", [0.0, 0.0, 0.32], X),
        l.join(Dowel, "side_frame_left", "front_rail", [0.0, 0.0, 0.38], X),
        l.join(Screw, "side_frame_left", "front_rail", [0.0, 0.01, 0.35], X),
    ];
    let e3 = vec![
        l.join(Dowel, "side_frame_left", "back_rail", [0.0, 0.4, 0.32], X),
        l.join(Dowel, "side_frame_left", "back_rail", [0.0, 0.4, 0.38], X),
        l.join(Screw, "side_frame_left", "back_rail", [0.0, 0.39, 0.35], X),
    ];
    let mut e4 = e4_backrest;
    e4.extend([
        l.join(Dowel, "front_rail", "side_frame_right", [0.45, 0.0, 0.32], X),
        l.join(Dowel, "front_rail", "side_frame_right", [0.45, 0.0, 0.38], X),
        l.join(Screw, "front_rail", "side_frame_right", [0.45, 0.01, 0.35], X),
        l.join(Dowel, "back_rail", "side_frame_right", [0.45, 0.4, 0.32], X),
        l.join(Dowel, "back_rail", "side_frame_right", [0.45, 0.4, 0.38], X),
        l.join(Screw, "back_rail", "side_frame_right", [0.45, 0.39, 0.35], X),
    ]);
    let e5 = vec![
        l.join(Mt, "side_frame_left", "seat", [0.02, 0.1, 0.45], Z),
        l.join(Mt, "side_frame_right", "seat", [0.43, 0.1, 0.45], Z),
        l.join(Screw, "front_rail", "seat", [0.15, 0.0, 0.45], Z),
        l.join(Screw, "front_rail", "seat", [0.30, 0.0, 0.45], Z),
        l.join(Screw, "back_rail", "seat", [0.15, 0.4, 0.45], Z),
        l.join(Screw, "back_rail", "seat", [0.30, 0.4, 0.45], Z),
    ];
    l.edge("E1", "side_frame_left", "backrest", e1)
        .edge("E2", "side_frame_left", "front_rail", e2)
        .edge("E3", "side_frame_left", "back_rail", e3)
        .edge("E4", "left_assembly", "side_frame_right", e4)
        .edge("E5", "frame_assembly", "seat", e5)
        .build()
}

/// Minifigure: every joint is a single stud. Parts are only translated, so
/// each single-stud joint is recovered exactly by the minimal rotation.
pub fn lego_person() -> AssemblyGraph {
    let mut l = Layout::new("lego_person")
        .sub("lower_body", "hips with legs", "root")
        .sub("arm_left_assembly", "left arm with hand", "root")
        .sub("arm_right_assembly", "right arm with hand", "root")
        .part("torso", 1, "torso", "root", translated([0.0, 0.0, 0.03]))
        .part("hips", 2, "hips", "lower_body", translated([0.0, 0.0, 0.012]))
        .part("leg_left", 3, "left leg", "lower_body", translated([-0.005, 0.0, 0.01]))
        .part("leg_right", 4, "right leg", "lower_body", translated([0.005, 0.0, 0.01]))
        .part("arm_left", 5, "left arm", "arm_left_assembly", translated([-0.008, 0.0, 0.04]))
        .part("arm_right", 6, "right arm", "arm_right_assembly", translated([0.008, 0.0, 0.04]))
        .part("hand_left", 7, "left hand", "arm_left_assembly", translated([-0.01, 0.0, 0.028]))
        .part("hand_right", 8, "right hand", "arm_right_assembly", translated([0.01, 0.0, 0.028]))
        .part("head", 9, "head", "root", translated([0.0, 0.0, 0.045]));

    let legs_l = vec![l.join(Mt, "hips", "leg_left", [-0.005, 0.0, 0.01], NZ)];
    let legs_r = vec![l.join(Mt, "hips", "leg_right", [0.005, 0.0, 0.01], NZ)];
    let hand_l = vec![l.join(Mt, "arm_left", "hand_left", [-0.01, 0.0, 0.028], NZ)];
    let hand_r = vec![l.join(Mt, "arm_right", "hand_right", [0.01, 0.0, 0.028], NZ)];
    let lower = vec![l.join(Mt, "torso", "hips", [0.0, 0.0, 0.015], NZ)];
    let arm_l = vec![l.join(Mt, "torso", "arm_left", [-0.008, 0.0, 0.04], NX)];
    let arm_r = vec![l.join(Mt, "torso", "arm_right", [0.008, 0.0, 0.04], X)];
    let head = vec![l.join(Mt, "torso", "head", [0.0, 0.0, 0.045], Z)];
    l.edge("E1", "hips", "leg_left", legs_l)
        .edge("E2", "hips", "leg_right", legs_r)
        .edge("E3", "arm_left", "hand_left", hand_l)
        .edge("E4", "arm_right", "hand_right", hand_r)
        .edge("E5", "torso", "lower_body", lower)
        .edge("E6", "torso", "arm_left_assembly", arm_l)
        .edge("E7", "torso", "arm_right_assembly", arm_r)
        .edge("E8", "torso", "head", head)
        .equivalence("leg_left", "leg_right")
        .equivalence("hand_left", "hand_right")
        .build()
}

/// Toy airplane: fuselage group, landing gear, two wings and a propeller.
/// The right wing is the left wing turned half a revolution about z.
pub fn plane_model() -> AssemblyGraph {
    let mut l = Layout::new("plane_model")
        .sub("body", "fuselage with nose, cockpit and tail", "root")
        .sub("gear", "landing gear", "root")
        .part("fuselage", 1, "fuselage", "body", translated([0.0, 0.0, 0.0]))
        .part("nose", 2, "nose cone", "body", translated([0.15, 0.0, 0.0]))
        .part("cockpit", 3, "cockpit canopy", "body", translated([0.05, 0.0, 0.02]))
        .part("stabilizer", 4, "horizontal stabilizer", "body", translated([-0.14, 0.0, 0.005]))
        .part("fin", 5, "vertical fin", "body", translated([-0.145, 0.0, 0.012]))
        .part("wing_left", 6, "left wing", "root", translated([0.01, 0.02, 0.0]))
        .part("wing_right", 7, "right wing", "root", rotated(Z, std::f64::consts::PI, [0.01, -0.02, 0.0]))
        .part("strut", 8, "gear strut", "gear", translated([0.05, 0.0, -0.04]))
        .part("wheel_left", 9, "left wheel", "gear", translated([0.05, 0.03, -0.05]))
        .part("wheel_right", 10, "right wheel", "gear", translated([0.05, -0.03, -0.05]))
        .part("propeller", 11, "propeller", "root", translated([0.17, 0.0, 0.0]));

    let nose = vec![l.join(Mt, "fuselage", "nose", [0.15, 0.0, 0.0], X)];
    let cockpit = vec![l.join(Dowel, "fuselage", "cockpit", [0.05, 0.0, 0.02], Z)];
    let stab = vec![l.join(Mt, "fuselage", "stabilizer", [-0.14, 0.0, 0.005], Z)];
    let fin = vec![l.join(Mt, "fuselage", "fin", [-0.145, 0.0, 0.012], Z)];
    let wheel_l = vec![l.join(Dowel, "strut", "wheel_left", [0.05, 0.03, -0.05], Y)];
    let wheel_r = vec![l.join(Dowel, "strut", "wheel_right", [0.05, -0.03, -0.05], NY)];
    let wing_l = vec![
        l.join(Mt, "fuselage", "wing_left", [0.03, 0.02, 0.0], Y),
        l.join(Dowel, "fuselage", "wing_left", [-0.01, 0.02, 0.0], Y),
    ];
    let wing_r = vec![
        l.join(Mt, "fuselage", "wing_right", [0.03, -0.02, 0.0], NY),
        l.join(Dowel, "fuselage", "wing_right", [-0.01, -0.02, 0.0], NY),
    ];
    let gear = vec![l.join(Mt, "fuselage", "strut", [0.05, 0.0, -0.03], NZ)];
    let prop = vec![l.join(Mt, "nose", "propeller", [0.17, 0.0, 0.0], X)];
    l.edge("E1", "fuselage", "nose", nose)
        .edge("E2", "fuselage", "cockpit", cockpit)
        .edge("E3", "fuselage", "stabilizer", stab)
        .edge("E4", "fuselage", "fin", fin)
        .edge("E5", "strut", "wheel_left", wheel_l)
        .edge("E6", "strut", "wheel_right", wheel_r)
        .edge("E7", "body", "wing_left", wing_l)
        .edge("E8", "body", "wing_right", wing_r)
        .edge("E9", "body", "gear", gear)
        .edge("E10", "body", "propeller", prop)
        .equivalence("wing_left", "wing_right")
        .build()
}
