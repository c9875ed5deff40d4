//! Planar domains, damping coefficients and control regions.
//!
//! All shapes are analytic: the signed distance to the boundary (the normal
//! coordinate `x_d` near the boundary) and the outward normal have closed
//! forms, which both the field solver and the ray tracer rely on.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (times the domain diameter) for "on the boundary".
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }

    /// Counter-clockwise rotation by a right angle.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

/// Bounded planar domain. Rectangles occupy `[0, lx] x [0, ly]`; disks and
/// annuli are centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Rectangle { lx: f64, ly: f64 },
    Disk { r_out: f64 },
    Annulus { r_in: f64, r_out: f64 },
}

/// A smooth piece of the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPart {
    Left,
    Right,
    Bottom,
    Top,
    OuterCircle,
    InnerCircle,
}

impl BoundaryPart {
    /// True for the circular components (the only ones that can carry
    /// gliding or diffractive contacts).
    pub fn is_curved(self) -> bool {
        matches!(self, BoundaryPart::OuterCircle | BoundaryPart::InnerCircle)
    }
}

impl Domain {
    pub fn rectangle(lx: f64, ly: f64) -> Result<Self> {
        let d = Domain::Rectangle { lx, ly };
        d.validate()?;
        Ok(d)
    }

    pub fn disk(r_out: f64) -> Result<Self> {
        let d = Domain::Disk { r_out };
        d.validate()?;
        Ok(d)
    }

    pub fn annulus(r_in: f64, r_out: f64) -> Result<Self> {
        let d = Domain::Annulus { r_in, r_out };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Domain::Rectangle { lx, ly } if ok(lx) && ok(ly) => Ok(()),
            Domain::Disk { r_out } if ok(r_out) => Ok(()),
            Domain::Annulus { r_in, r_out } if ok(r_in) && ok(r_out) && r_in < r_out => Ok(()),
            _ => Err(Error::InvalidDomain(format!("{self:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::Rectangle { .. } => "rectangle",
            Domain::Disk { .. } => "disk",
            Domain::Annulus { .. } => "annulus",
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Rectangle { lx, ly } => lx.hypot(ly),
            Domain::Disk { r_out } | Domain::Annulus { r_out, .. } => 2.0 * r_out,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Domain::Rectangle { lx, ly } => lx * ly,
            Domain::Disk { r_out } => PI * r_out * r_out,
            Domain::Annulus { r_in, r_out } => PI * (r_out * r_out - r_in * r_in),
        }
    }

    /// Lower-left and upper-right corners of the bounding box.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match *self {
            Domain::Rectangle { lx, ly } => (Vec2::ZERO, Vec2::new(lx, ly)),
            Domain::Disk { r_out } | Domain::Annulus { r_out, .. } => {
                (Vec2::new(-r_out, -r_out), Vec2::new(r_out, r_out))
            }
        }
    }

    pub fn boundary_tol(&self) -> f64 {
        BOUNDARY_TOL * self.diameter()
    }

    /// Signed distance to the boundary: positive inside, zero on the
    /// boundary, negative outside.
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        match *self {
            Domain::Rectangle { lx, ly } => {
                let inside = p.x.min(lx - p.x).min(p.y).min(ly - p.y);
                if inside >= 0.0 {
                    inside
                } else {
                    let dx = (-p.x).max(p.x - lx).max(0.0);
                    let dy = (-p.y).max(p.y - ly).max(0.0);
                    if dx == 0.0 && dy == 0.0 {
                        inside
                    } else {
                        -dx.hypot(dy)
                    }
                }
            }
            Domain::Disk { r_out } => r_out - p.norm(),
            Domain::Annulus { r_in, r_out } => {
                let r = p.norm();
                (r - r_in).min(r_out - r)
            }
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.boundary_distance(p) > 0.0
    }

    pub fn contains_closure(&self, p: Vec2) -> bool {
        self.boundary_distance(p) >= -self.boundary_tol()
    }

    /// Boundary component closest to `p`. Ties at rectangle corners resolve
    /// in the order left, right, bottom, top.
    pub fn nearest_part(&self, p: Vec2) -> BoundaryPart {
        match *self {
            Domain::Rectangle { lx, ly } => {
                let cands = [
                    (p.x.abs(), BoundaryPart::Left),
                    ((lx - p.x).abs(), BoundaryPart::Right),
                    (p.y.abs(), BoundaryPart::Bottom),
                    ((ly - p.y).abs(), BoundaryPart::Top),
                ];
                let mut best = cands[0];
                for c in &cands[1..] {
                    if c.0 < best.0 {
                        best = *c;
                    }
                }
                best.1
            }
            Domain::Disk { .. } => BoundaryPart::OuterCircle,
            Domain::Annulus { r_in, r_out } => {
                let r = p.norm();
                if (r - r_in).abs() < (r_out - r).abs() {
                    BoundaryPart::InnerCircle
                } else {
                    BoundaryPart::OuterCircle
                }
            }
        }
    }

    /// Outward unit normal of a given boundary component at `p`.
    pub fn part_normal(&self, part: BoundaryPart, p: Vec2) -> Vec2 {
        match part {
            BoundaryPart::Left => Vec2::new(-1.0, 0.0),
            BoundaryPart::Right => Vec2::new(1.0, 0.0),
            BoundaryPart::Bottom => Vec2::new(0.0, -1.0),
            BoundaryPart::Top => Vec2::new(0.0, 1.0),
            BoundaryPart::OuterCircle => p.normalized(),
            BoundaryPart::InnerCircle => -p.normalized(),
        }
    }

    /// Outward unit normal at a boundary point. For the annulus the inner
    /// circle's outward normal points toward the origin.
    pub fn boundary_normal(&self, p: Vec2) -> Result<Vec2> {
        let d = self.boundary_distance(p);
        if d.abs() > self.boundary_tol() {
            return Err(Error::NotOnBoundary { x: p.x, y: p.y, distance: d });
        }
        Ok(self.part_normal(self.nearest_part(p), p))
    }

    /// Signed curvature of a boundary component, positive when the domain
    /// is locally convex there (outer circles), negative for the inner
    /// circle of an annulus, zero on straight sides.
    pub fn part_curvature(&self, part: BoundaryPart) -> f64 {
        match (*self, part) {
            (Domain::Disk { r_out }, BoundaryPart::OuterCircle)
            | (Domain::Annulus { r_out, .. }, BoundaryPart::OuterCircle) => 1.0 / r_out,
            (Domain::Annulus { r_in, .. }, BoundaryPart::InnerCircle) => -1.0 / r_in,
            _ => 0.0,
        }
    }

    /// Radius of a circular boundary component.
    pub fn part_radius(&self, part: BoundaryPart) -> Option<f64> {
        match (*self, part) {
            (Domain::Disk { r_out }, BoundaryPart::OuterCircle)
            | (Domain::Annulus { r_out, .. }, BoundaryPart::OuterCircle) => Some(r_out),
            (Domain::Annulus { r_in, .. }, BoundaryPart::InnerCircle) => Some(r_in),
            _ => None,
        }
    }

    /// Boundary components of this domain.
    pub fn parts(&self) -> &'static [BoundaryPart] {
        match self {
            Domain::Rectangle { .. } => &[
                BoundaryPart::Left,
                BoundaryPart::Right,
                BoundaryPart::Bottom,
                BoundaryPart::Top,
            ],
            Domain::Disk { .. } => &[BoundaryPart::OuterCircle],
            Domain::Annulus { .. } => &[BoundaryPart::OuterCircle, BoundaryPart::InnerCircle],
        }
    }

    /// Total boundary length.
    pub fn perimeter(&self) -> f64 {
        match *self {
            Domain::Rectangle { lx, ly } => 2.0 * (lx + ly),
            Domain::Disk { r_out } => 2.0 * PI * r_out,
            Domain::Annulus { r_in, r_out } => 2.0 * PI * (r_in + r_out),
        }
    }

    /// Maps `u in [0,1)` to a boundary point by arc length, returning the
    /// point and its component.
    pub fn boundary_point(&self, u: f64) -> (Vec2, BoundaryPart) {
        let s = u.rem_euclid(1.0) * self.perimeter();
        match *self {
            Domain::Rectangle { lx, ly } => {
                if s < lx {
                    (Vec2::new(s, 0.0), BoundaryPart::Bottom)
                } else if s < lx + ly {
                    (Vec2::new(lx, s - lx), BoundaryPart::Right)
                } else if s < 2.0 * lx + ly {
                    (Vec2::new(lx - (s - lx - ly), ly), BoundaryPart::Top)
                } else {
                    (Vec2::new(0.0, ly - (s - 2.0 * lx - ly)), BoundaryPart::Left)
                }
            }
            Domain::Disk { r_out } => {
                (Vec2::from_angle(s / r_out) * r_out, BoundaryPart::OuterCircle)
            }
            Domain::Annulus { r_in, r_out } => {
                let outer_len = 2.0 * PI * r_out;
                if s < outer_len {
                    (Vec2::from_angle(s / r_out) * r_out, BoundaryPart::OuterCircle)
                } else {
                    let t = s - outer_len;
                    (Vec2::from_angle(t / r_in) * r_in, BoundaryPart::InnerCircle)
                }
            }
        }
    }

    /// Projects a point that is within tolerance of `part` exactly onto it.
    pub fn snap_to_part(&self, part: BoundaryPart, p: Vec2) -> Vec2 {
        match (*self, part) {
            (Domain::Rectangle { .. }, BoundaryPart::Left) => Vec2::new(0.0, p.y),
            (Domain::Rectangle { lx, .. }, BoundaryPart::Right) => Vec2::new(lx, p.y),
            (Domain::Rectangle { .. }, BoundaryPart::Bottom) => Vec2::new(p.x, 0.0),
            (Domain::Rectangle { ly, .. }, BoundaryPart::Top) => Vec2::new(p.x, ly),
            _ => match self.part_radius(part) {
                Some(r) => p.normalized() * r,
                None => p,
            },
        }
    }

    /// True when `p` lies within `tol` of a rectangle vertex.
    pub fn near_corner(&self, p: Vec2, tol: f64) -> bool {
        match *self {
            Domain::Rectangle { lx, ly } => {
                let near_x = p.x.abs() <= tol || (lx - p.x).abs() <= tol;
                let near_y = p.y.abs() <= tol || (ly - p.y).abs() <= tol;
                near_x && near_y
            }
            _ => false,
        }
    }
}

/// Polynomial ramp `zeta^p` on `[0,1]`, vanishing for `zeta <= 0`.
fn ramp(zeta: f64, exponent: f64) -> f64 {
    if zeta <= 0.0 {
        0.0
    } else {
        zeta.min(1.0).powf(exponent)
    }
}

/// Nonnegative bounded damping coefficient `b(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingField {
    Constant {
        amplitude: f64,
    },
    /// `amplitude * zeta^p` with `zeta = (width - dist_to_boundary) / width`.
    BoundaryCollar {
        width: f64,
        amplitude: f64,
        smoothness_exponent: f64,
    },
    /// `amplitude * zeta^p` with `zeta = (radius - |x - center|) / radius`.
    Ball {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
        smoothness_exponent: f64,
    },
}

impl DampingField {
    pub fn zero() -> Self {
        DampingField::Constant { amplitude: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDamping(m.to_string()));
        let amp_ok = |a: f64| a.is_finite() && a >= 0.0;
        match *self {
            DampingField::Constant { amplitude } if !amp_ok(amplitude) => {
                bad("amplitude must be finite and >= 0")
            }
            DampingField::BoundaryCollar { width, amplitude, smoothness_exponent }
            | DampingField::Ball { radius: width, amplitude, smoothness_exponent, .. } => {
                if !(width.is_finite() && width > 0.0) {
                    bad("width/radius must be > 0")
                } else if !amp_ok(amplitude) {
                    bad("amplitude must be finite and >= 0")
                } else if !(smoothness_exponent.is_finite() && smoothness_exponent >= 0.0) {
                    bad("smoothness_exponent must be >= 0")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, domain: &Domain, p: Vec2) -> f64 {
        match *self {
            DampingField::Constant { amplitude } => amplitude,
            DampingField::BoundaryCollar { width, amplitude, smoothness_exponent } => {
                let zeta = (width - domain.boundary_distance(p)) / width;
                amplitude * ramp(zeta, smoothness_exponent)
            }
            DampingField::Ball { center, radius, amplitude, smoothness_exponent } => {
                let zeta = (radius - p.dist(center.into())) / radius;
                amplitude * ramp(zeta, smoothness_exponent)
            }
        }
    }

    pub fn max_value(&self) -> f64 {
        match *self {
            DampingField::Constant { amplitude }
            | DampingField::BoundaryCollar { amplitude, .. }
            | DampingField::Ball { amplitude, .. } => amplitude,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max_value() == 0.0
    }

    /// Lipschitz constant of `b`, when it exists (ramp exponent >= 1).
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match *self {
            DampingField::Constant { .. } => Some(0.0),
            DampingField::BoundaryCollar { width, amplitude, smoothness_exponent }
            | DampingField::Ball { radius: width, amplitude, smoothness_exponent, .. } => {
                if amplitude == 0.0 {
                    Some(0.0)
                } else if smoothness_exponent >= 1.0 {
                    Some(amplitude * smoothness_exponent / width)
                } else {
                    None
                }
            }
        }
    }
}

/// Control region `omega`, described analytically so that ray/segment
/// entry times can be computed in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlRegion {
    Whole,
    Empty,
    Ball { center: [f64; 2], radius: f64 },
    /// Points within `width` of the boundary.
    BoundaryCollar { width: f64 },
    Union { regions: Vec<ControlRegion> },
}

impl ControlRegion {
    /// The open support `{b > 0}` of a damping profile.
    pub fn from_damping(b: &DampingField) -> Self {
        if b.is_zero() {
            return ControlRegion::Empty;
        }
        match *b {
            DampingField::Constant { .. } => ControlRegion::Whole,
            DampingField::BoundaryCollar { width, .. } => ControlRegion::BoundaryCollar { width },
            DampingField::Ball { center, radius, .. } => ControlRegion::Ball { center, radius },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlRegion::Ball { radius, .. } | ControlRegion::BoundaryCollar { width: radius }
                if !(radius.is_finite() && *radius > 0.0) =>
            {
                Err(Error::ConfigInvalid {
                    path: "region".into(),
                    message: "radius/width must be > 0".into(),
                })
            }
            ControlRegion::Union { regions } => regions.iter().try_for_each(|r| r.validate()),
            _ => Ok(()),
        }
    }

    /// Membership test on the closure of the domain.
    pub fn contains(&self, domain: &Domain, p: Vec2) -> bool {
        if !domain.contains_closure(p) {
            return false;
        }
        self.shape_contains(domain, p)
    }

    fn shape_contains(&self, domain: &Domain, p: Vec2) -> bool {
        match self {
            ControlRegion::Whole => true,
            ControlRegion::Empty => false,
            ControlRegion::Ball { center, radius } => p.dist((*center).into()) < *radius,
            ControlRegion::BoundaryCollar { width } => domain.boundary_distance(p) < *width,
            ControlRegion::Union { regions } => regions.iter().any(|r| r.shape_contains(domain, p)),
        }
    }

    /// Smallest `t in [0, t_max]` such that `origin + t * dir` enters the
    /// region (infimum of the open entry set), or `None`.
    pub fn first_entry_on_segment(
        &self,
        domain: &Domain,
        origin: Vec2,
        dir: Vec2,
        t_max: f64,
    ) -> Option<f64> {
        let mut intervals = Vec::new();
        self.collect_intervals(domain, origin, dir, &mut intervals);
        intervals
            .into_iter()
            .filter(|&(lo, hi)| hi > lo && hi > 0.0 && lo <= t_max)
            .map(|(lo, _)| lo.max(0.0))
            .min_by(f64::total_cmp)
    }

    fn collect_intervals(&self, domain: &Domain, o: Vec2, v: Vec2, out: &mut Vec<(f64, f64)>) {
        match self {
            ControlRegion::Whole => out.push((f64::NEG_INFINITY, f64::INFINITY)),
            ControlRegion::Empty => {}
            ControlRegion::Ball { center, radius } => {
                if let Some(iv) = inside_circle(o - Vec2::from(*center), v, *radius) {
                    out.push(iv);
                }
            }
            ControlRegion::BoundaryCollar { width } => match *domain {
                Domain::Rectangle { lx, ly } => {
                    half_line(o.x, v.x, *width, true, out);
                    half_line(o.x, v.x, lx - width, false, out);
                    half_line(o.y, v.y, *width, true, out);
                    half_line(o.y, v.y, ly - width, false, out);
                }
                Domain::Disk { r_out } => outside_circle(o, v, r_out - width, out),
                Domain::Annulus { r_in, r_out } => {
                    if let Some(iv) = inside_circle(o, v, r_in + width) {
                        out.push(iv);
                    }
                    outside_circle(o, v, r_out - width, out);
                }
            },
            ControlRegion::Union { regions } => {
                for r in regions {
                    r.collect_intervals(domain, o, v, out);
                }
            }
        }
    }
}

/// Roots of `|o + t v|^2 = rho^2` in ascending order.
fn circle_roots(o: Vec2, v: Vec2, rho: f64) -> Option<(f64, f64)> {
    let a = v.norm_sq();
    let b = o.dot(v);
    let c = o.norm_sq() - rho * rho;
    let disc = b * b - a * c;
    if disc <= 0.0 || a == 0.0 {
        return None;
    }
    let q = -(b + b.signum() * disc.sqrt());
    let (t1, t2) = if q == 0.0 {
        let s = disc.sqrt() / a;
        (-s, s)
    } else {
        (q / a, c / q)
    };
    Some((t1.min(t2), t1.max(t2)))
}

fn inside_circle(o: Vec2, v: Vec2, rho: f64) -> Option<(f64, f64)> {
    if rho <= 0.0 {
        return None;
    }
    circle_roots(o, v, rho)
}

fn outside_circle(o: Vec2, v: Vec2, rho: f64, out: &mut Vec<(f64, f64)>) {
    if rho <= 0.0 {
        out.push((f64::NEG_INFINITY, f64::INFINITY));
        return;
    }
    match circle_roots(o, v, rho) {
        Some((t1, t2)) => {
            out.push((f64::NEG_INFINITY, t1));
            out.push((t2, f64::INFINITY));
        }
        None => {
            if o.norm() > rho {
                out.push((f64::NEG_INFINITY, f64::INFINITY));
            }
        }
    }
}

/// Interval where `o + t v < c` (`below`) or `> c` (otherwise).
fn half_line(o: f64, v: f64, c: f64, below: bool, out: &mut Vec<(f64, f64)>) {
    let sign = if below { 1.0 } else { -1.0 };
    // condition: sign * (o + t v - c) < 0
    let (o, v) = (sign * (o - c), sign * v);
    if v == 0.0 {
        if o < 0.0 {
            out.push((f64::NEG_INFINITY, f64::INFINITY));
        }
    } else {
        let t0 = -o / v;
        if v > 0.0 {
            out.push((f64::NEG_INFINITY, t0));
        } else {
            out.push((t0, f64::INFINITY));
        }
    }
}
