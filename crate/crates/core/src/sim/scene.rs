use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HeldBody, HoleGeometry, HoleSpec, JointState, SimError, StepCaps, World};
use crate::geometry::{minimal_rotation, RigidTransform};
use crate::graph::{
    feature_in_node, frames_from_edges, from_json_str, truth_edge_transform, truth_frames, AssemblyGraph, ConnectionOperation,
    ConnectorType, EdgeId, GraphIoError,
};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Solved edge transforms, `nodes[0]` frame into `nodes[1]` frame.
pub type EdgePoses = BTreeMap<EdgeId, RigidTransform<f64>>;

/// Partial hole geometry; unset fields keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleOverride {
    pub radius: Option<f64>,
    pub depth: Option<f64>,
    pub clearance: Option<f64>,
    pub chamfer: Option<f64>,
    pub peg_chamfer: Option<f64>,
    pub tilt_max: Option<f64>,
    pub pitch: Option<f64>,
    pub final_turns: Option<f64>,
}

impl HoleOverride {
    pub fn apply(&self, g: &mut HoleGeometry) {
        let fields = [
            (&mut g.radius, self.radius),
            (&mut g.depth, self.depth),
            (&mut g.clearance, self.clearance),
            (&mut g.chamfer, self.chamfer),
            (&mut g.peg_chamfer, self.peg_chamfer),
            (&mut g.tilt_max, self.tilt_max),
            (&mut g.pitch, self.pitch),
            (&mut g.final_turns, self.final_turns),
        ];
        for (slot, value) in fields {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

/// Hole geometry overrides per connector type and per operation id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_type: BTreeMap<ConnectorType, HoleOverride>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub operations: BTreeMap<String, HoleOverride>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            format_version: SCENARIO_FORMAT_VERSION,
            by_type: BTreeMap::new(),
            operations: BTreeMap::new(),
        }
    }
}

impl Scenario {
    /// Defaults for the connector type, then the instance's screw lead, then
    /// type overrides, then operation overrides.
    pub fn geometry(&self, graph: &AssemblyGraph, op: &ConnectionOperation) -> HoleGeometry {
        let mut g = HoleGeometry::for_connector(op.connector_type);
        if let Some(lead) = op.instance(graph).and_then(|i| i.screw_lead) {
            g.pitch = lead;
        }
        if let Some(o) = self.by_type.get(&op.connector_type) {
            o.apply(&mut g);
        }
        if let Some(o) = self.operations.get(&op.id) {
            o.apply(&mut g);
        }
        g
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario, SimError> {
    let scenario: Scenario = from_json_str(text)?;
    if scenario.format_version != SCENARIO_FORMAT_VERSION {
        return Err(GraphIoError::Schema {
            field: "format_version".into(),
            message: format!("unsupported version {}, expected {SCENARIO_FORMAT_VERSION}", scenario.format_version),
        }
        .into());
    }
    Ok(scenario)
}

/// Geometry shared by every trial of one operation.
///
/// The fixed component is grounded so that its attachment point sits at the
/// world origin with the outward normal along +z. Mortise-tenon operations
/// move the held component; dowel and screw operations move the connector
/// piece, whose frame has its origin at the tip and +z pointing out of the
/// hole when seated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationScene {
    pub operation: String,
    pub connector_type: ConnectorType,
    pub fixed_pose: RigidTransform<f64>,
    pub hole: HoleSpec,
    /// Held body placed by the solved pose.
    pub aligned: HeldBody,
    pub truth_pose: RigidTransform<f64>,
}

impl OperationScene {
    /// Uses the parts' assembled poses for the physical geometry when the
    /// graph has them, otherwise the solved poses.
    pub fn build(graph: &AssemblyGraph, op: &ConnectionOperation, poses: &EdgePoses, scenario: &Scenario) -> Result<Self, SimError> {
        let geometry = scenario.geometry(graph, op);
        geometry.check()?;
        let unsolved = || SimError::UnsolvedPose {
            operation: op.id.clone(),
        };
        let edge = graph.edge(&op.edge).ok_or_else(unsolved)?;
        let solved = poses.get(&op.edge).copied().ok_or_else(unsolved)?;
        let orient = |t: RigidTransform<f64>| if op.held_is_first { t } else { t.inverse() };
        let solved = orient(solved);
        let truth = truth_edge_transform(graph, edge).map(orient).unwrap_or(solved);

        let frames = truth_frames(graph).unwrap_or_else(|| frames_from_edges(graph, poses));
        let missing = |what: &str| SimError::MissingFeature {
            operation: op.id.clone(),
            what: what.to_owned(),
        };
        let fixed_feature =
            feature_in_node(graph, &frames, &op.fixed, &op.fixed_end).ok_or_else(|| missing("fixed attachment feature"))?;
        let held_feature =
            feature_in_node(graph, &frames, &op.held, &op.held_end).ok_or_else(|| missing("held attachment feature"))?;

        let ground = minimal_rotation(&fixed_feature.normal, &Vector3::z());
        let fixed_pose = RigidTransform {
            rotation: ground,
            translation: -(ground * fixed_feature.position),
        };
        let hole = HoleSpec {
            axis_pose: frame_along(
                fixed_pose.apply_point(&fixed_feature.position),
                fixed_pose.apply_vector(&fixed_feature.normal),
            ),
            geometry,
        };

        let placed = fixed_pose.compose(&solved);
        let (aligned, truth_pose) = if op.connector_type.has_connector_piece() {
            let tip = placed.apply_point(&held_feature.position);
            let out = -placed.apply_vector(&held_feature.normal);
            let body = HeldBody {
                pose: frame_along(tip, out),
                tip_offset: Vector3::zeros(),
                axis: -Vector3::z(),
            };
            (body, hole.axis_pose)
        } else {
            let body = HeldBody {
                pose: placed,
                tip_offset: held_feature.position,
                axis: held_feature.normal,
            };
            (body, fixed_pose.compose(&truth))
        };
        Ok(Self {
            operation: op.id.clone(),
            connector_type: op.connector_type,
            fixed_pose,
            hole,
            aligned,
            truth_pose,
        })
    }
}

/// Frame at `origin` whose +z is `axis`, with the smallest rotation from the
/// world frame.
fn frame_along(origin: Vector3<f64>, axis: Vector3<f64>) -> RigidTransform<f64> {
    RigidTransform {
        rotation: minimal_rotation(&Vector3::z(), &axis),
        translation: origin,
    }
}

/// Start-state perturbation for a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    /// Height above the aligned pose along the hole axis.
    pub lift: f64,
    /// Bound of the uniform offset along each lateral axis.
    pub lateral: f64,
    /// Bound of a uniform tilt of the insertion axis; zero disables it.
    pub tilt: f64,
    pub caps: StepCaps,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            lift: 0.02,
            lateral: 0.003,
            tilt: 0.0,
            caps: StepCaps::default(),
        }
    }
}

/// Places the held body above its aligned pose and perturbs it under `seed`.
/// The controller's nominal target is the perturbed position lowered back
/// by `lift`, since the perturbation is unknown to it.
pub fn init_trial(scene: &OperationScene, options: &InitOptions, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |bound: f64| if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
    let dx = sample(options.lateral);
    let dy = sample(options.lateral);
    let tilt = if options.tilt > 0.0 { rng.random_range(0.0..=options.tilt) } else { 0.0 };
    let azimuth = if options.tilt > 0.0 { rng.random_range(0.0..TAU) } else { 0.0 };

    let mut world = World {
        operation: scene.operation.clone(),
        connector_type: scene.connector_type,
        hole: scene.hole,
        fixed_pose: scene.fixed_pose,
        held: scene.aligned,
        joint: JointState::default(),
        caps: options.caps,
        truth_pose: scene.truth_pose,
        nominal_tip: Vector3::zeros(),
        steps: 0,
        trace: None,
    };
    let aligned_tip = world.tip();
    world.held.pose.translation += scene.hole.axis_pose.apply_vector(&Vector3::new(dx, dy, options.lift));
    if tilt > 0.0 {
        let axis = Vector3::new(azimuth.cos(), azimuth.sin(), 0.0);
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), tilt).into_inner();
        world.rotate_about_tip(&rotation);
    }
    world.nominal_tip = aligned_tip + Vector3::new(dx, dy, 0.0);
    world
}
