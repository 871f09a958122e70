use std::f64::consts::TAU;
use std::io::{self, Write};

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::contact::{in_window, support, support_force, Support};
use super::{Command, ContactReading, JointPhase, World};
use crate::geometry::{geodesic_angle, swing_angle, RigidTransform};
use crate::graph::ConnectorType;

/// Geodesic rotation error bound for a successful insertion, radians.
pub const ROTATION_TOLERANCE: f64 = 0.05;
/// Translation error bound for a successful insertion, meters.
pub const TRANSLATION_TOLERANCE: f64 = 0.0002;

/// One simulator step, for replay and debugging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub command: Command,
    pub pose: RigidTransform<f64>,
    pub force: Vector3<f64>,
    pub phase: JointPhase,
    pub inserted_depth: f64,
}

/// Writes entries as line-delimited JSON.
pub fn write_trace<W: Write>(entries: &[TraceEntry], mut out: W) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Advances the world by one command and returns the contact reading after
/// the move. Commands beyond the step caps are scaled down; blocked motion
/// is dropped and shows up as force.
pub fn step_sim(world: &mut World, command: &Command) -> ContactReading {
    world.steps += 1;
    let command = world.caps.clamp(command);
    let (delta, angle) = match command {
        Command::Translate(v) => (v, 0.0),
        Command::RotateAboutAxis(a) => (Vector3::zeros(), a),
        Command::Press(s) => (Vector3::new(0.0, 0.0, -s), 0.0),
    };
    let reading = match world.joint.phase {
        JointPhase::Free => step_free(world, delta, angle),
        JointPhase::AxisConstrained | JointPhase::Tightening => step_engaged(world, delta, angle),
        JointPhase::Fixed => step_fixed(delta),
    };
    if let Some(trace) = world.trace.as_mut() {
        trace.push(TraceEntry {
            step: world.steps,
            command,
            pose: world.held.pose,
            force: reading.force,
            phase: world.joint.phase,
            inserted_depth: world.joint.inserted_depth,
        });
    }
    reading
}

fn spin(angle: f64) -> nalgebra::Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner()
}

/// Support for a free body, including the jam at the bore entrance when the
/// body is over the bore but tilted past the engagement window.
fn free_support(world: &World, offset: f64) -> Support {
    let g = &world.hole.geometry;
    if in_window(g, offset) && world.tilt() > g.tilt_max {
        return Support {
            height: g.depth,
            sloped: false,
        };
    }
    support(g, offset)
}

fn step_free(world: &mut World, delta: Vector3<f64>, angle: f64) -> ContactReading {
    let g = world.hole.geometry;
    if angle != 0.0 {
        world.rotate_about_tip(&spin(angle));
    }
    let mut tip = world.tip();
    let lateral = Vector3::new(delta.x, delta.y, 0.0);
    if lateral != Vector3::zeros() {
        let jammed = in_window(&g, tip.xy().norm()) && world.tilt() > g.tilt_max && tip.z <= g.depth;
        if jammed {
            reseat(world);
            tip = world.tip();
        }
        tip += lateral;
        let floor = free_support(world, tip.xy().norm()).height;
        tip.z = tip.z.max(floor);
    }
    let support = free_support(world, tip.xy().norm());
    if delta.z < 0.0 {
        tip.z = (tip.z + delta.z).max(support.height);
    } else {
        tip.z += delta.z;
    }
    world.set_tip(tip);

    let offset = tip.xy().norm();
    if in_window(&g, offset) && tip.z <= g.depth && world.tilt() <= g.tilt_max {
        return engage(world, tip);
    }
    ContactReading {
        force: support_force(&tip, support),
    }
}

/// Halves the tilt by rotating the body about its tip toward the hole axis.
fn reseat(world: &mut World) {
    let axis = world.axis();
    let down = -Vector3::z();
    let cross = axis.cross(&down);
    if cross.norm() == 0.0 {
        return;
    }
    let angle = 0.5 * cross.norm().atan2(axis.dot(&down));
    let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(cross), angle).into_inner();
    world.rotate_about_tip(&rotation);
}

/// Snaps the tip onto the axis and forms the axial joint.
fn engage(world: &mut World, tip: Vector3<f64>) -> ContactReading {
    let g = world.hole.geometry;
    let joint = &mut world.joint;
    joint.phase = JointPhase::AxisConstrained;
    let mut blocked = false;
    if world.connector_type == ConnectorType::Screw {
        // Translation stays locked until the screw is turned.
        blocked = tip.z < g.depth;
        joint.inserted_depth = 0.0;
    } else {
        joint.inserted_depth = (g.depth - tip.z).clamp(0.0, g.depth);
        if joint.inserted_depth >= g.depth {
            joint.phase = JointPhase::Fixed;
        }
    }
    let z = g.depth - world.joint.inserted_depth;
    world.set_tip(Vector3::new(0.0, 0.0, z));
    ContactReading {
        force: if blocked { Vector3::z() } else { Vector3::zeros() },
    }
}

fn step_engaged(world: &mut World, delta: Vector3<f64>, angle: f64) -> ContactReading {
    let g = world.hole.geometry;
    let screw = world.connector_type == ConnectorType::Screw;
    let mut force = Vector3::zeros();
    let lateral = delta.xy();
    if lateral.norm() > 0.0 {
        let dir = lateral / lateral.norm();
        force.x = -dir.x;
        force.y = -dir.y;
    }

    if angle != 0.0 {
        let joint = world.joint;
        let turns = joint.turns + angle / TAU;
        let allowed = !screw || g.pitch * turns >= joint.inserted_depth;
        if allowed {
            world.rotate_about_tip(&spin(angle));
            if screw {
                let joint = &mut world.joint;
                joint.turns = turns;
                joint.phase = JointPhase::Tightening;
                if joint.inserted_depth >= g.depth && angle > 0.0 {
                    joint.torque_turns += angle / TAU;
                }
            }
        } else {
            force.z = 1.0;
        }
    }

    let joint = &mut world.joint;
    if delta.z < 0.0 {
        let cap = if screw { g.depth.min(g.pitch * joint.turns) } else { g.depth };
        let wanted = joint.inserted_depth - delta.z;
        if wanted >= cap {
            if wanted > cap {
                force.z = 1.0;
            }
            joint.inserted_depth = cap.max(joint.inserted_depth);
        } else {
            joint.inserted_depth = wanted;
        }
    } else if delta.z > 0.0 {
        if screw {
            force.z = -1.0;
        } else {
            joint.inserted_depth = (joint.inserted_depth - delta.z).max(0.0);
        }
    }

    let done = if screw {
        joint.inserted_depth >= g.depth && joint.torque_turns >= g.final_turns
    } else {
        joint.inserted_depth >= g.depth
    };
    if done {
        joint.phase = JointPhase::Fixed;
    }
    let z = g.depth - joint.inserted_depth;
    world.set_tip(Vector3::new(0.0, 0.0, z));
    ContactReading { force }
}

fn step_fixed(delta: Vector3<f64>) -> ContactReading {
    let mut force = Vector3::zeros();
    let lateral = delta.xy();
    if lateral.norm() > 0.0 {
        force.x = -lateral.x / lateral.norm();
        force.y = -lateral.y / lateral.norm();
    }
    if delta.z != 0.0 {
        force.z = -delta.z.signum();
    }
    ContactReading { force }
}

/// Rotation and translation error of the held body against `truth`.
/// Screws are symmetric about their axis, so only the swing is counted.
pub fn pose_errors(world: &World, truth: &RigidTransform<f64>) -> (f64, f64) {
    let relative = truth.rotation.transpose() * world.held.pose.rotation;
    let rotation = if world.connector_type == ConnectorType::Screw {
        swing_angle(&relative, &world.held.axis.normalize())
    } else {
        geodesic_angle(&relative)
    };
    (rotation, world.held.pose.translation_distance(truth))
}

/// True when the joint is fixed and the held body is within both error
/// bounds of `truth`.
pub fn check_success(world: &World, truth: &RigidTransform<f64>) -> bool {
    let (rotation, translation) = pose_errors(world, truth);
    world.joint.phase == JointPhase::Fixed && rotation < ROTATION_TOLERANCE && translation < TRANSLATION_TOLERANCE
}
