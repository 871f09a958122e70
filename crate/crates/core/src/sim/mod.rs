//! Quasi-static connector insertion: proximity-triggered joints for
//! mortise-tenon and dowel connections, the staged screw mechanism, and a
//! geometric peg-in-hole contact model.
//!
//! All positions, commands and forces used by the stepping code are in the
//! hole frame.

pub mod contact;
mod scene;
mod step;

pub use scene::{init_trial, load_scenario, EdgePoses, HoleOverride, InitOptions, OperationScene, Scenario, SCENARIO_FORMAT_VERSION};
pub use step::{check_success, pose_errors, step_sim, write_trace, TraceEntry, ROTATION_TOLERANCE, TRANSLATION_TOLERANCE};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RigidTransform;
use crate::graph::{ConnectorType, GraphIoError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid hole geometry: {0}")]
    InvalidHole(String),
    #[error("operation {operation}: no solved pose for its edge")]
    UnsolvedPose { operation: String },
    #[error("operation {operation}: {what}")]
    MissingFeature { operation: String, what: String },
    #[error(transparent)]
    Format(#[from] GraphIoError),
}

/// Hole and peg dimensions in meters, plus the joint thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleGeometry {
    /// Bore radius.
    pub radius: f64,
    pub depth: f64,
    /// Radial gap between peg and bore.
    pub clearance: f64,
    /// Radial extent of the entry funnel.
    pub chamfer: f64,
    /// Radial extent of the chamfer on the peg tip.
    pub peg_chamfer: f64,
    /// Largest axis misalignment that still engages, in radians.
    pub tilt_max: f64,
    /// Screw advance per revolution.
    pub pitch: f64,
    /// Revolutions at full depth before a screw is tight.
    pub final_turns: f64,
}

impl HoleGeometry {
    pub fn for_connector(kind: ConnectorType) -> Self {
        let (radius, depth) = match kind {
            ConnectorType::MortiseTenon => (0.004, 0.006),
            ConnectorType::Dowel => (0.004, 0.008),
            ConnectorType::Screw => (0.002, 0.005),
        };
        Self {
            radius,
            depth,
            clearance: 0.0005,
            chamfer: 0.002,
            peg_chamfer: 0.001,
            tilt_max: 0.05,
            pitch: 0.00125,
            final_turns: 0.5,
        }
    }

    pub fn peg_radius(&self) -> f64 {
        self.radius - self.clearance
    }

    /// Height of the flat surface around the funnel.
    pub fn top(&self) -> f64 {
        self.depth + self.chamfer
    }

    pub fn check(&self) -> Result<(), SimError> {
        let fields = [
            self.radius,
            self.depth,
            self.clearance,
            self.chamfer,
            self.peg_chamfer,
            self.tilt_max,
            self.pitch,
            self.final_turns,
        ];
        let bad = |m: &str| Err(SimError::InvalidHole(m.to_owned()));
        if fields.iter().any(|v| !v.is_finite()) {
            return bad("non-finite dimension");
        }
        if self.radius <= 0.0 || self.depth <= 0.0 || self.pitch <= 0.0 {
            return bad("radius, depth and pitch must be positive");
        }
        if self.clearance < 0.0 || self.chamfer < 0.0 || self.peg_chamfer < 0.0 || self.tilt_max < 0.0 || self.final_turns < 0.0 {
            return bad("clearance, chamfers, tilt_max and final_turns must be non-negative");
        }
        if self.clearance >= self.radius {
            return bad("clearance must be smaller than the radius");
        }
        if self.peg_chamfer > self.peg_radius() {
            return bad("peg chamfer exceeds the peg radius");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    /// Hole frame in the world; +z points out of the hole and the origin is
    /// the seated tip position.
    pub axis_pose: RigidTransform<f64>,
    pub geometry: HoleGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointPhase {
    Free,
    AxisConstrained,
    /// Screws only: rotation has started unlocking translation.
    Tightening,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub phase: JointPhase,
    pub inserted_depth: f64,
    /// Accumulated screw revolutions since engagement.
    pub turns: f64,
    /// Revolutions made at full depth.
    pub torque_turns: f64,
}

impl Default for JointState {
    fn default() -> Self {
        Self {
            phase: JointPhase::Free,
            inserted_depth: 0.0,
            turns: 0.0,
            torque_turns: 0.0,
        }
    }
}

/// Force on the held body in model units, hole frame. One unit is the
/// reaction of a full chamfer contact.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactReading {
    pub force: Vector3<f64>,
}

impl ContactReading {
    pub fn in_contact(&self) -> bool {
        self.force != Vector3::zeros()
    }

    pub fn lateral(&self) -> Vector3<f64> {
        Vector3::new(self.force.x, self.force.y, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldBody {
    pub pose: RigidTransform<f64>,
    /// Insertion tip in the body frame.
    pub tip_offset: Vector3<f64>,
    /// Insertion direction in the body frame; points into the hole when seated.
    pub axis: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Command {
    /// Displacement in the hole frame.
    Translate(Vector3<f64>),
    /// Rotation about the hole axis through the tip; positive tightens.
    RotateAboutAxis(f64),
    /// Displacement into the hole along its axis.
    Press(f64),
}

/// Per-step command limits; larger commands are scaled down to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCaps {
    pub translation: f64,
    pub rotation: f64,
}

impl Default for StepCaps {
    fn default() -> Self {
        Self {
            translation: 0.001,
            rotation: 0.1,
        }
    }
}

impl StepCaps {
    pub fn clamp(&self, command: &Command) -> Command {
        match *command {
            Command::Translate(v) => {
                let n = v.norm();
                Command::Translate(if n > self.translation { v * (self.translation / n) } else { v })
            }
            Command::RotateAboutAxis(a) => Command::RotateAboutAxis(a.clamp(-self.rotation, self.rotation)),
            Command::Press(s) => Command::Press(s.clamp(-self.translation, self.translation)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub operation: String,
    pub connector_type: ConnectorType,
    pub hole: HoleSpec,
    /// Pose of the grounded component.
    pub fixed_pose: RigidTransform<f64>,
    pub held: HeldBody,
    pub joint: JointState,
    pub caps: StepCaps,
    /// Seated pose of the held body.
    pub truth_pose: RigidTransform<f64>,
    /// Where the controller believes the seated tip is, hole frame.
    pub nominal_tip: Vector3<f64>,
    pub steps: usize,
    #[serde(skip)]
    pub trace: Option<Vec<TraceEntry>>,
}

impl World {
    /// Tip position in the hole frame.
    pub fn tip(&self) -> Vector3<f64> {
        let world_tip = self.held.pose.apply_point(&self.held.tip_offset);
        self.hole.axis_pose.inverse().apply_point(&world_tip)
    }

    fn set_tip(&mut self, tip: Vector3<f64>) {
        let delta = self.hole.axis_pose.apply_vector(&(tip - self.tip()));
        self.held.pose.translation += delta;
    }

    /// Insertion direction in the hole frame.
    pub fn axis(&self) -> Vector3<f64> {
        let world_axis = self.held.pose.apply_vector(&self.held.axis);
        self.hole.axis_pose.rotation.transpose() * world_axis.normalize()
    }

    /// Angle between the body's insertion direction and the hole axis.
    pub fn tilt(&self) -> f64 {
        (-self.axis().z).clamp(-1.0, 1.0).acos()
    }

    pub fn lateral_offset(&self) -> f64 {
        self.tip().xy().norm()
    }

    /// Rotates the body about its tip by `rotation`, given in the hole frame.
    fn rotate_about_tip(&mut self, rotation: &Matrix3<f64>) {
        let h = self.hole.axis_pose.rotation;
        let world_rotation = h * rotation * h.transpose();
        let tip = self.held.pose.apply_point(&self.held.tip_offset);
        let pose = &mut self.held.pose;
        pose.rotation = world_rotation * pose.rotation;
        pose.translation = tip + world_rotation * (pose.translation - tip);
    }
}
