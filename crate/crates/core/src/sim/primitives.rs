//! Parametric scene primitives with closed-form ray intersection, surface
//! distance, and surface normals.
//!
//! Every shape exposes two independent computations: `intersect` solves the
//! parametric ray equation, while `surface_distance` / `surface_normal_near`
//! evaluate the surface implicitly at a point. Tests use the latter pair as
//! an oracle against the former.

use crate::geom::{UnitVec3, Vec3};

use super::SimError;

/// Rays starting closer than this to a surface do not register a hit.
const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveShape {
    /// Infinite plane through `point` with the given normal.
    Plane { point: Vec3, normal: UnitVec3 },
    /// Axis-aligned box; all six faces are reflective from either side.
    Aabb { min: Vec3, max: Vec3 },
    /// Finite open cylinder (lateral surface only, no end caps).
    Cylinder {
        center: Vec3,
        axis: UnitVec3,
        radius: f64,
        half_length: f64,
    },
    /// Infinite half-cylindrical shell opening downward: the set of points at
    /// distance `radius` from the axis line whose radial offset has a
    /// non-negative world-z component. Models a tunnel arch / ceiling.
    TunnelArc {
        center: Vec3,
        axis: UnitVec3,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePrimitive {
    pub shape: PrimitiveShape,
    pub material_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub primitives: Vec<ScenePrimitive>,
    pub name: String,
}

/// An intersection: parametric range along the ray and the (sign-unoriented)
/// surface normal at the hit point, both in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub range: f64,
    pub normal: UnitVec3,
}

impl PrimitiveShape {
    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            PrimitiveShape::Plane { .. } => Ok(()),
            PrimitiveShape::Aabb { min, max } => {
                if min.x < max.x && min.y < max.y && min.z < max.z {
                    Ok(())
                } else {
                    Err(SimError::InvalidPrimitive(
                        "box min must be strictly below max on every axis".into(),
                    ))
                }
            }
            PrimitiveShape::Cylinder {
                radius,
                half_length,
                ..
            } => {
                if *radius > 0.0 && *half_length > 0.0 {
                    Ok(())
                } else {
                    Err(SimError::InvalidPrimitive(
                        "cylinder radius and half_length must be > 0".into(),
                    ))
                }
            }
            PrimitiveShape::TunnelArc { axis, radius, .. } => {
                if *radius <= 0.0 {
                    return Err(SimError::InvalidPrimitive(
                        "tunnel radius must be > 0".into(),
                    ));
                }
                if axis.z.abs() > 1.0 - 1e-9 {
                    return Err(SimError::InvalidPrimitive(
                        "tunnel axis must not be vertical".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// First intersection with the ray `origin + t * dir` for `t` in
    /// `[T_MIN, max_range]`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<RayHit> {
        match self {
            PrimitiveShape::Plane { point, normal } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = normal.dot(&(point - origin)) / denom;
                (T_MIN..=max_range).contains(&t).then_some(RayHit {
                    range: t,
                    normal: *normal,
                })
            }
            PrimitiveShape::Aabb { min, max } => intersect_aabb(min, max, origin, dir, max_range),
            PrimitiveShape::Cylinder {
                center,
                axis,
                radius,
                half_length,
            } => {
                let accept = |hit: &Vec3| ((hit - center).dot(axis)).abs() <= *half_length;
                intersect_infinite_cylinder(center, axis, *radius, origin, dir, max_range, accept)
            }
            PrimitiveShape::TunnelArc {
                center,
                axis,
                radius,
            } => {
                let accept = |hit: &Vec3| {
                    let offset = hit - center;
                    let radial = offset - axis.as_vec() * offset.dot(axis);
                    radial.z >= 0.0
                };
                intersect_infinite_cylinder(center, axis, *radius, origin, dir, max_range, accept)
            }
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        match self {
            PrimitiveShape::Plane { point, normal } => normal.dot(&(p - point)).abs(),
            PrimitiveShape::Aabb { min, max } => {
                let mut outside_sq = 0.0;
                let mut inside_gap = f64::INFINITY;
                for a in 0..3 {
                    let (lo, hi, x) = (min[a], max[a], p[a]);
                    if x < lo {
                        outside_sq += (lo - x) * (lo - x);
                    } else if x > hi {
                        outside_sq += (x - hi) * (x - hi);
                    } else {
                        inside_gap = inside_gap.min((x - lo).min(hi - x));
                    }
                }
                if outside_sq > 0.0 {
                    outside_sq.sqrt()
                } else {
                    inside_gap
                }
            }
            PrimitiveShape::Cylinder {
                center,
                axis,
                radius,
                half_length,
            } => {
                let offset = p - center;
                let s = offset.dot(axis);
                let rho = (offset - axis.as_vec() * s).norm();
                let radial_gap = rho - radius;
                let axial_gap = s.abs() - half_length;
                if axial_gap <= 0.0 {
                    radial_gap.abs()
                } else {
                    (radial_gap * radial_gap + axial_gap * axial_gap).sqrt()
                }
            }
            PrimitiveShape::TunnelArc {
                center,
                axis,
                radius,
            } => {
                let offset = p - center;
                let s = offset.dot(axis);
                let radial = offset - axis.as_vec() * s;
                if radial.z >= 0.0 {
                    return (radial.norm() - radius).abs();
                }
                // Below the shell rim: nearest points are the two boundary
                // lines where the radial direction is horizontal.
                let rim = horizontal_perp(axis);
                let d_pos = (radial - rim * *radius).norm();
                let d_neg = (radial + rim * *radius).norm();
                d_pos.min(d_neg)
            }
        }
    }

    /// Surface normal of the face nearest to `p` (sign unoriented). `None`
    /// when the direction is ambiguous, e.g. a point on the cylinder axis.
    pub fn surface_normal_near(&self, p: &Vec3) -> Option<UnitVec3> {
        match self {
            PrimitiveShape::Plane { normal, .. } => Some(*normal),
            PrimitiveShape::Aabb { min, max } => {
                // Nearest face by absolute gap; ties take the lowest axis.
                let mut best_axis = 0;
                let mut best_gap = f64::INFINITY;
                for a in 0..3 {
                    let gap = (p[a] - min[a]).abs().min((p[a] - max[a]).abs());
                    if gap < best_gap {
                        best_gap = gap;
                        best_axis = a;
                    }
                }
                let mut n = Vec3::zeros();
                n[best_axis] = 1.0;
                UnitVec3::try_new(n).ok()
            }
            PrimitiveShape::Cylinder { center, axis, .. }
            | PrimitiveShape::TunnelArc { center, axis, .. } => {
                let offset = p - center;
                let radial = offset - axis.as_vec() * offset.dot(axis);
                UnitVec3::normalize(radial).ok()
            }
        }
    }
}

fn horizontal_perp(axis: &UnitVec3) -> Vec3 {
    let h = axis.cross(&Vec3::z());
    h / h.norm()
}

fn intersect_aabb(
    min: &Vec3,
    max: &Vec3,
    origin: &Vec3,
    dir: &Vec3,
    max_range: f64,
) -> Option<RayHit> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis_near = 0usize;
    let mut axis_far = 0usize;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (t1, t2) = {
            let t1 = (min[a] - origin[a]) * inv;
            let t2 = (max[a] - origin[a]) * inv;
            if t1 <= t2 {
                (t1, t2)
            } else {
                (t2, t1)
            }
        };
        if t1 > t_near {
            t_near = t1;
            axis_near = a;
        }
        if t2 < t_far {
            t_far = t2;
            axis_far = a;
        }
    }
    if t_near > t_far {
        return None;
    }
    let (t, axis) = if t_near >= T_MIN {
        (t_near, axis_near)
    } else if t_far >= T_MIN {
        // Origin inside the box: the exit face is the visible one.
        (t_far, axis_far)
    } else {
        return None;
    };
    if t > max_range {
        return None;
    }
    let mut n = Vec3::zeros();
    n[axis] = 1.0;
    Some(RayHit {
        range: t,
        normal: UnitVec3::try_new(n).expect("axis unit vector"),
    })
}

fn intersect_infinite_cylinder(
    center: &Vec3,
    axis: &UnitVec3,
    radius: f64,
    origin: &Vec3,
    dir: &Vec3,
    max_range: f64,
    accept: impl Fn(&Vec3) -> bool,
) -> Option<RayHit> {
    let m = origin - center;
    let md = m - axis.as_vec() * m.dot(axis);
    let dd = dir - axis.as_vec() * dir.dot(axis);
    let a = dd.norm_squared();
    if a < 1e-15 {
        return None; // ray parallel to the axis
    }
    let b = 2.0 * md.dot(&dd);
    let c = md.norm_squared() - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    for t in [(-b - sqrt_disc) / (2.0 * a), (-b + sqrt_disc) / (2.0 * a)] {
        if !(T_MIN..=max_range).contains(&t) {
            continue;
        }
        let hit = origin + dir * t;
        if !accept(&hit) {
            continue;
        }
        let offset = hit - center;
        let radial = offset - axis.as_vec() * offset.dot(axis);
        if let Ok(normal) = UnitVec3::normalize(radial) {
            return Some(RayHit { range: t, normal });
        }
    }
    None
}

impl Scene {
    pub fn new(name: impl Into<String>, primitives: Vec<ScenePrimitive>) -> Result<Self, SimError> {
        if primitives.is_empty() {
            return Err(SimError::EmptyScene);
        }
        for prim in &primitives {
            prim.shape.validate()?;
        }
        Ok(Self {
            primitives,
            name: name.into(),
        })
    }

    /// Nearest intersection over all primitives; ties on range resolve to the
    /// lowest primitive index.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<(usize, RayHit)> {
        let mut best: Option<(usize, RayHit)> = None;
        for (idx, prim) in self.primitives.iter().enumerate() {
            if let Some(hit) = prim.shape.intersect(origin, dir, max_range) {
                let closer = match &best {
                    Some((_, cur)) => hit.range < cur.range,
                    None => true,
                };
                if closer {
                    best = Some((idx, hit));
                }
            }
        }
        best
    }

    /// Unsigned distance from `p` to the closest primitive surface.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|prim| prim.shape.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the primitive whose surface is closest to `p`.
    pub fn nearest_primitive(&self, p: &Vec3) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (idx, prim) in self.primitives.iter().enumerate() {
            let d = prim.shape.surface_distance(p);
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        best
    }
}
