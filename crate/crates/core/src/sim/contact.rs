//! Heightfield contact between an upright chamfered peg and a chamfered hole.
//!
//! Hole frame: +z points out of the hole, the origin is the seated tip
//! position. The bore (radius `radius`) runs from z = 0 to z = `depth`, a 45°
//! funnel widens it by `chamfer` up to the flat top at `depth + chamfer`. The
//! peg has radius `radius - clearance` with a 45° tip chamfer of radial
//! extent `peg_chamfer`.

use nalgebra::Vector3;

use super::HoleGeometry;

/// Tolerance used when deciding whether the tip rests on a support.
pub const TOUCH_TOLERANCE: f64 = 1e-12;

/// Lowest reachable tip height at a lateral offset, and whether the binding
/// contact is inclined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub height: f64,
    pub sloped: bool,
}

/// Height of the fixed part's surface at radial distance `rho` from the axis.
pub fn surface_height(g: &HoleGeometry, rho: f64) -> f64 {
    if rho < g.radius {
        0.0
    } else if rho <= g.radius + g.chamfer {
        g.depth + (rho - g.radius)
    } else {
        g.depth + g.chamfer
    }
}

/// Height of the peg's lower surface above its tip at distance `sigma` from
/// the peg axis.
pub fn peg_relief(g: &HoleGeometry, sigma: f64) -> f64 {
    (sigma - (g.peg_radius() - g.peg_chamfer)).max(0.0)
}

/// Support under an upright peg whose axis is `offset` away from the hole
/// axis. The far side of the peg binds first, so only points on the ray
/// through both axes matter; along it the gap is piecewise linear and its
/// maximum sits on a breakpoint.
pub fn support(g: &HoleGeometry, offset: f64) -> Support {
    if in_window(g, offset) {
        return Support {
            height: 0.0,
            sloped: false,
        };
    }
    let rp = g.peg_radius();
    let f = |s: f64| surface_height(g, offset + s) - peg_relief(g, s);
    let mut knots = vec![
        0.0,
        rp,
        rp - g.peg_chamfer,
        g.radius - offset,
        g.radius + g.chamfer - offset,
    ];
    knots.retain(|s| (0.0..=rp).contains(s));
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let height = knots.iter().map(|&s| f(s)).fold(f64::NEG_INFINITY, f64::max);

    // Flat when the maximum is held along a stretch where both surfaces
    // are level; any other binding contact involves a 45° face.
    let flat = knots.windows(2).any(|w| {
        let (a, b) = (w[0], w[1]);
        if b - a <= TOUCH_TOLERANCE {
            return false;
        }
        let mid = 0.5 * (a + b);
        let rho = offset + mid;
        let surface_level = rho < g.radius || rho > g.radius + g.chamfer;
        let peg_level = mid < rp - g.peg_chamfer;
        surface_level && peg_level && (f(a) - height).abs() <= TOUCH_TOLERANCE && (f(b) - height).abs() <= TOUCH_TOLERANCE
    });
    Support { height, sloped: !flat }
}

/// Whether a peg at `offset` fits the bore without touching the funnel.
pub fn in_window(g: &HoleGeometry, offset: f64) -> bool {
    offset <= g.clearance + TOUCH_TOLERANCE
}

/// Reaction on a free peg with its tip at `tip` (hole frame) resting on
/// `support`: one unit along +z, plus one unit toward the axis on an
/// inclined contact. Zero when the tip is above the support.
pub fn support_force(tip: &Vector3<f64>, support: Support) -> Vector3<f64> {
    if tip.z > support.height + TOUCH_TOLERANCE {
        return Vector3::zeros();
    }
    let offset = tip.xy().norm();
    let mut force = Vector3::z();
    if support.sloped && offset > 0.0 {
        force.x = -tip.x / offset;
        force.y = -tip.y / offset;
    }
    force
}
