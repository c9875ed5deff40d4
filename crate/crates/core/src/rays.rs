//! Generalized bicharacteristics of `p = |xi|^2 - 1` for the flat metric.
//!
//! The Hamiltonian parameter `s` is kept: `x' = 2 xi`, so a straight segment
//! of parameter length `s` covers geometric length `2s`. At a boundary
//! contact the ray reflects (hyperbolic), passes on (diffractive), follows
//! the boundary circle (gliding), or stops (corner, tangency to a flat side).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryPart, ControlRegion, Domain, Vec2};

/// `|xi_d|` below this is treated as a tangential contact.
pub const TOL_GLANCE: f64 = 1e-8;
/// Allowed deviation of `|xi|` from one.
pub const TOL_XI: f64 = 1e-10;
/// Corner radius relative to the domain diameter.
pub const TOL_CORNER: f64 = 1e-9;
/// Safety cap on boundary events per ray.
pub const MAX_EVENTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec2,
    pub xi: Vec2,
}

impl PhasePoint {
    pub fn new(x: Vec2, xi: Vec2) -> Result<Self> {
        check_xi(xi)?;
        Ok(Self { x, xi })
    }

    pub fn from_angle(x: Vec2, theta: f64) -> Self {
        Self { x, xi: Vec2::from_angle(theta) }
    }

    /// `p(x, xi) = |xi|^2 - 1`.
    pub fn symbol(&self) -> f64 {
        self.xi.norm_sq() - 1.0
    }
}

fn check_xi(xi: Vec2) -> Result<()> {
    let dev = xi.norm() - 1.0;
    if !(dev.abs() <= TOL_XI) {
        return Err(Error::DegenerateDirection(dev));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContactClass {
    /// Transversal contact; `xi_d = -xi . n` is the inward normal component,
    /// negative for an arriving ray.
    Hyperbolic { xi_d: f64 },
    Diffractive,
    Gliding,
    /// Contact of finite order `k` with `x_d(s) ~ alpha s^k`.
    HigherOrder { k: u32, alpha: f64 },
    Corner,
    InfiniteOrder,
}

impl ContactClass {
    pub fn label(&self) -> &'static str {
        match self {
            ContactClass::Hyperbolic { .. } => "hyperbolic",
            ContactClass::Diffractive => "diffractive",
            ContactClass::Gliding => "gliding",
            ContactClass::HigherOrder { .. } => "higher_order",
            ContactClass::Corner => "corner",
            ContactClass::InfiniteOrder => "infinite_order",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, ContactClass::Corner | ContactClass::InfiniteOrder)
    }
}

/// Continuation after a tangential contact of order `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuation {
    Straight,
    Glide,
}

/// Four-case table: even order curves inside (`alpha > 0`) or outside;
/// odd order crosses, and the sign of `alpha` tells on which side the
/// continuation lies.
pub fn higher_order_continuation(k: u32, alpha: f64) -> Continuation {
    match (k % 2 == 0, alpha > 0.0) {
        (true, true) => Continuation::Straight,
        (true, false) => Continuation::Glide,
        (false, true) => Continuation::Straight,
        (false, false) => Continuation::Glide,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryHit {
    Hit { s: f64, x: Vec2, part: BoundaryPart },
    NoHit { s_max: f64 },
}

/// Smallest positive `t` with `x + t v` on the boundary, excluding the
/// component the point currently sits on when moving away from it.
fn first_hit(domain: &Domain, x: Vec2, v: Vec2, on: Option<BoundaryPart>) -> Option<(f64, BoundaryPart)> {
    let mut best: Option<(f64, BoundaryPart)> = None;
    let mut consider = |t: f64, part: BoundaryPart| {
        if t > 0.0 && t.is_finite() && best.map_or(true, |(b, _)| t < b) {
            best = Some((t, part));
        }
    };
    match *domain {
        Domain::Rectangle { lx, ly } => {
            let walls = [
                (BoundaryPart::Left, x.x, -v.x),
                (BoundaryPart::Right, lx - x.x, v.x),
                (BoundaryPart::Bottom, x.y, -v.y),
                (BoundaryPart::Top, ly - x.y, v.y),
            ];
            for (part, gap, speed) in walls {
                if Some(part) != on && speed > 0.0 {
                    consider(gap.max(0.0) / speed, part);
                }
            }
        }
        Domain::Disk { r_out } => {
            if let Some(t) = exit_circle(x, v, r_out, on == Some(BoundaryPart::OuterCircle)) {
                consider(t, BoundaryPart::OuterCircle);
            }
        }
        Domain::Annulus { r_in, r_out } => {
            if let Some(t) = exit_circle(x, v, r_out, on == Some(BoundaryPart::OuterCircle)) {
                consider(t, BoundaryPart::OuterCircle);
            }
            if on != Some(BoundaryPart::InnerCircle) {
                if let Some(t) = enter_circle(x, v, r_in) {
                    consider(t, BoundaryPart::InnerCircle);
                }
            }
        }
    }
    best
}

/// Forward root of `|x + t v| = r` from inside the circle.
fn exit_circle(x: Vec2, v: Vec2, r: f64, on_circle: bool) -> Option<f64> {
    let a = v.norm_sq();
    let b = x.dot(v);
    if on_circle {
        // roots 0 and -2b/a
        return (b < 0.0).then(|| -2.0 * b / a);
    }
    let c = (x.norm_sq() - r * r).min(0.0);
    let disc = (b * b - a * c).max(0.0).sqrt();
    Some(if b <= 0.0 { (-b + disc) / a } else { -c / (b + disc) })
}

/// First root of `|x + t v| = r` from outside the circle, if any.
fn enter_circle(x: Vec2, v: Vec2, r: f64) -> Option<f64> {
    let a = v.norm_sq();
    let b = x.dot(v);
    let c = (x.norm_sq() - r * r).max(0.0);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    Some(c / (-b + disc.sqrt()))
}

fn on_boundary_part(domain: &Domain, x: Vec2) -> Option<BoundaryPart> {
    (domain.boundary_distance(x).abs() <= domain.boundary_tol()).then(|| domain.nearest_part(x))
}

/// First boundary intersection of `x + 2 s xi` within `s <= s_max`.
pub fn next_boundary_event(domain: &Domain, x: Vec2, xi: Vec2, s_max: f64) -> Result<BoundaryHit> {
    check_xi(xi)?;
    let on = on_boundary_part(domain, x);
    Ok(match first_hit(domain, x, xi * 2.0, on) {
        Some((s, part)) if s <= s_max => {
            BoundaryHit::Hit { s, x: domain.snap_to_part(part, x + xi * (2.0 * s)), part }
        }
        _ => BoundaryHit::NoHit { s_max },
    })
}

/// `x_d(s) ~ alpha s^2` along the straight continuation of a tangential
/// ray, with `x_d` the signed boundary distance: `alpha = -2 kappa |xi|^2`.
pub fn contact_alpha(domain: &Domain, part: BoundaryPart) -> f64 {
    -2.0 * domain.part_curvature(part)
}

fn classify_on(domain: &Domain, part: BoundaryPart, x: Vec2, xi: Vec2) -> ContactClass {
    if domain.near_corner(x, TOL_CORNER * domain.diameter()) {
        return ContactClass::Corner;
    }
    let n = domain.part_normal(part, x);
    let xi_d = -xi.dot(n);
    if xi_d.abs() > TOL_GLANCE {
        return ContactClass::Hyperbolic { xi_d };
    }
    let alpha = contact_alpha(domain, part);
    if alpha > 0.0 {
        ContactClass::Diffractive
    } else if alpha < 0.0 {
        ContactClass::Gliding
    } else {
        ContactClass::InfiniteOrder
    }
}

pub fn classify_contact(domain: &Domain, x_hit: Vec2, xi: Vec2) -> Result<ContactClass> {
    let d = domain.boundary_distance(x_hit);
    if d.abs() > domain.boundary_tol() {
        return Err(Error::NotOnBoundary { x: x_hit.x, y: x_hit.y, distance: d });
    }
    Ok(classify_on(domain, domain.nearest_part(x_hit), x_hit, xi))
}

/// Specular reflection `xi - 2 (xi . n) n`.
pub fn reflect(domain: &Domain, x_hit: Vec2, xi: Vec2) -> Result<Vec2> {
    let n = domain.boundary_normal(x_hit)?;
    Ok(reflect_in(n, xi))
}

fn reflect_in(n: Vec2, xi: Vec2) -> Vec2 {
    xi - n * (2.0 * xi.dot(n))
}

/// Gliding motion along a boundary circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Glide {
    pub part: BoundaryPart,
    pub radius: f64,
    pub theta0: f64,
    /// `+1` counter-clockwise, `-1` clockwise.
    pub orientation: f64,
}

impl Glide {
    fn start(domain: &Domain, x: Vec2, xi: Vec2) -> Result<Self> {
        let part = domain.nearest_part(x);
        if !part.is_curved() {
            return Err(Error::GlideOnFlatSide);
        }
        match classify_on(domain, part, x, xi) {
            ContactClass::Gliding => {}
            other => return Err(Error::NotGliding(other.label().into())),
        }
        let radius = domain.part_radius(part).expect("curved part has a radius");
        let orientation = if x.cross(xi) >= 0.0 { 1.0 } else { -1.0 };
        Ok(Self { part, radius, theta0: x.y.atan2(x.x), orientation })
    }

    /// State after parameter time `s` (geometric arc length `2s`).
    pub fn at(&self, s: f64) -> PhasePoint {
        let th = self.theta0 + self.orientation * 2.0 * s / self.radius;
        let (sn, cs) = th.sin_cos();
        PhasePoint { x: Vec2::new(cs, sn) * self.radius, xi: Vec2::new(-sn, cs) * self.orientation }
    }
}

pub fn glide_step(domain: &Domain, x_hit: Vec2, xi: Vec2, ds: f64) -> Result<PhasePoint> {
    check_xi(xi)?;
    let d = domain.boundary_distance(x_hit);
    if d.abs() > domain.boundary_tol() {
        return Err(Error::NotOnBoundary { x: x_hit.x, y: x_hit.y, distance: d });
    }
    Ok(Glide::start(domain, x_hit, xi)?.at(ds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arc {
    Interior { start: Vec2, xi: Vec2, s_start: f64, s_len: f64 },
    Gliding { glide: Glide, s_start: f64, s_len: f64 },
}

impl Arc {
    pub fn s_start(&self) -> f64 {
        match *self {
            Arc::Interior { s_start, .. } | Arc::Gliding { s_start, .. } => s_start,
        }
    }

    pub fn s_len(&self) -> f64 {
        match *self {
            Arc::Interior { s_len, .. } | Arc::Gliding { s_len, .. } => s_len,
        }
    }

    pub fn state_at(&self, s: f64) -> PhasePoint {
        match *self {
            Arc::Interior { start, xi, s_start, .. } => PhasePoint { x: start + xi * (2.0 * (s - s_start)), xi },
            Arc::Gliding { glide, s_start, .. } => glide.at(s - s_start),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayEvent {
    pub s: f64,
    pub x: Vec2,
    pub part: BoundaryPart,
    pub class: ContactClass,
    /// Direction after the event.
    pub xi_after: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxTime,
    Corner,
    InfiniteOrder,
    EventLimit,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneralizedRay {
    pub start: PhasePoint,
    pub arcs: Vec<Arc>,
    pub events: Vec<RayEvent>,
    pub s_max: f64,
    /// Parameter time actually covered (`< s_max` only on early termination).
    pub s_end: f64,
    pub terminated: Termination,
}

impl GeneralizedRay {
    /// `Gamma(s, rho)`; right-continuous in `xi` at reflections. Times past
    /// an early termination return the final state.
    pub fn state_at(&self, s: f64) -> PhasePoint {
        let s = s.clamp(0.0, self.s_end);
        let idx = self.arcs.partition_point(|a| a.s_start() <= s);
        if idx == 0 {
            return self.start;
        }
        self.arcs[idx - 1].state_at(s)
    }

    pub fn end_state(&self) -> PhasePoint {
        self.state_at(self.s_end)
    }

    /// Points `(s, x, event label)` along the ray: arc starts, events and
    /// `glide_points` samples per gliding arc, then the final state.
    pub fn polyline(&self, glide_points: usize) -> Vec<(f64, Vec2, &'static str)> {
        let mut out = vec![(0.0, self.start.x, "start")];
        let mut ev = self.events.iter().peekable();
        for arc in &self.arcs {
            let (s0, len) = (arc.s_start(), arc.s_len());
            while let Some(e) = ev.next_if(|e| e.s <= s0) {
                out.push((e.s, e.x, e.class.label()));
            }
            if let Arc::Gliding { .. } = arc {
                let m = glide_points.max(1);
                for k in 1..m {
                    let s = s0 + len * k as f64 / m as f64;
                    out.push((s, arc.state_at(s).x, "glide"));
                }
            }
        }
        for e in ev {
            out.push((e.s, e.x, e.class.label()));
        }
        let end = self.end_state();
        let label = match self.terminated {
            Termination::MaxTime => "end",
            Termination::Corner => "corner",
            Termination::InfiniteOrder => "infinite_order",
            Termination::EventLimit => "event_limit",
        };
        if out.last().map_or(true, |p| p.0 < self.s_end || label != "end") {
            out.push((self.s_end, end.x, label));
        }
        out
    }
}

pub fn trace_generalized(domain: &Domain, rho0: PhasePoint, s_max: f64) -> Result<GeneralizedRay> {
    check_xi(rho0.xi)?;
    if !(s_max.is_finite() && s_max >= 0.0) {
        return Err(Error::ConfigInvalid { path: "s_max".into(), message: "must be >= 0".into() });
    }
    let d = domain.boundary_distance(rho0.x);
    if d < -domain.boundary_tol() {
        return Err(Error::NotOnBoundary { x: rho0.x.x, y: rho0.x.y, distance: d });
    }
    let mut ray = GeneralizedRay {
        start: rho0,
        arcs: Vec::new(),
        events: Vec::new(),
        s_max,
        s_end: s_max,
        terminated: Termination::MaxTime,
    };
    let mut x = rho0.x;
    let mut xi = rho0.xi;
    let mut s = 0.0;
    let mut on = on_boundary_part(domain, x);
    let mut glide: Option<Glide> = None;

    // a start on the boundary is handled as a contact unless it moves inward
    if let Some(part) = on {
        x = domain.snap_to_part(part, x);
        let class = classify_on(domain, part, x, xi);
        match class {
            ContactClass::Hyperbolic { xi_d } if xi_d < 0.0 => {
                xi = reflect_in(domain.part_normal(part, x), xi);
                ray.events.push(RayEvent { s, x, part, class, xi_after: xi });
            }
            ContactClass::Hyperbolic { .. } => {}
            ContactClass::Gliding => {
                ray.events.push(RayEvent { s, x, part, class, xi_after: xi });
                glide = Some(Glide::start(domain, x, xi)?);
            }
            ContactClass::Diffractive | ContactClass::HigherOrder { .. } => {
                ray.events.push(RayEvent { s, x, part, class, xi_after: xi });
            }
            ContactClass::Corner | ContactClass::InfiniteOrder => {
                ray.events.push(RayEvent { s, x, part, class, xi_after: xi });
                ray.s_end = 0.0;
                ray.terminated =
                    if class == ContactClass::Corner { Termination::Corner } else { Termination::InfiniteOrder };
                return Ok(ray);
            }
        }
    }

    loop {
        if let Some(g) = glide {
            // curvature is constant along a circle, so gliding never releases
            ray.arcs.push(Arc::Gliding { glide: g, s_start: s, s_len: s_max - s });
            return Ok(ray);
        }
        if ray.events.len() >= MAX_EVENTS {
            ray.s_end = s;
            ray.terminated = Termination::EventLimit;
            return Ok(ray);
        }
        let hit = first_hit(domain, x, xi * 2.0, on);
        let (ds, part) = match hit {
            Some((ds, part)) if s + ds < s_max => (ds, part),
            _ => {
                ray.arcs.push(Arc::Interior { start: x, xi, s_start: s, s_len: s_max - s });
                return Ok(ray);
            }
        };
        ray.arcs.push(Arc::Interior { start: x, xi, s_start: s, s_len: ds });
        s += ds;
        x = domain.snap_to_part(part, x + xi * (2.0 * ds));
        on = Some(part);
        let class = classify_on(domain, part, x, xi);
        match class {
            ContactClass::Hyperbolic { .. } => xi = reflect_in(domain.part_normal(part, x), xi),
            ContactClass::Gliding => glide = Some(Glide::start(domain, x, xi)?),
            ContactClass::Diffractive => {}
            ContactClass::HigherOrder { k, alpha } => {
                if higher_order_continuation(k, alpha) == Continuation::Glide {
                    glide = Some(Glide::start(domain, x, xi)?);
                }
            }
            ContactClass::Corner | ContactClass::InfiniteOrder => {
                ray.events.push(RayEvent { s, x, part, class, xi_after: xi });
                ray.s_end = s;
                ray.terminated =
                    if class == ContactClass::Corner { Termination::Corner } else { Termination::InfiniteOrder };
                return Ok(ray);
            }
        }
        ray.events.push(RayEvent { s, x, part, class, xi_after: xi });
    }
}

/// Parameter time at which the ray first meets `omega`, if before its end.
pub fn first_entry_time(domain: &Domain, omega: &ControlRegion, ray: &GeneralizedRay) -> Option<f64> {
    for arc in &ray.arcs {
        let (s0, len) = (arc.s_start(), arc.s_len());
        match *arc {
            Arc::Interior { start, xi, .. } => {
                if let Some(t) = omega.first_entry_on_segment(domain, start, xi * 2.0, len) {
                    return Some(s0 + t);
                }
            }
            Arc::Gliding { glide, .. } => {
                if let Some(t) = glide_entry(domain, omega, &glide, len) {
                    return Some(s0 + t);
                }
            }
        }
    }
    None
}

/// Entry along a gliding arc: dense sampling then bisection.
fn glide_entry(domain: &Domain, omega: &ControlRegion, g: &Glide, len: f64) -> Option<f64> {
    let inside = |s: f64| omega.contains(domain, g.at(s).x);
    if inside(0.0) {
        return Some(0.0);
    }
    // arc length per sample at most 1e-3 of the radius, capped at one turn
    let turn = PI * g.radius;
    let span = len.min(turn);
    let n = ((span * 2.0 / g.radius) / 1e-3).ceil().max(1.0) as usize;
    let mut prev = 0.0;
    for k in 1..=n {
        let s = span * k as f64 / n as f64;
        if inside(s) {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = s;
    }
    None
}

/// Halton radical inverse.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / base as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Shifted Halton points in `[0,1)^3` (bases 2, 3, 5).
struct Halton {
    shift: [f64; 3],
    index: u64,
}

impl Halton {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        Self { shift: [rng.gen(), rng.gen(), rng.gen()], index: 1 }
    }

    fn next(&mut self) -> [f64; 3] {
        let i = self.index;
        self.index += 1;
        let mut p = [radical_inverse(i, 2), radical_inverse(i, 3), radical_inverse(i, 5)];
        for (v, s) in p.iter_mut().zip(self.shift) {
            *v = (*v + s).fract();
        }
        p
    }
}

/// Deterministic phase-space samples: interior points with uniform
/// directions, plus a `boundary_fraction` of boundary points carrying
/// inward transversal directions or, on curved parts, tangential ones.
pub fn sample_phase_points(domain: &Domain, n: usize, seed: u64, boundary_fraction: f64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut interior = Halton::new(&mut rng);
    let mut boundary = Halton::new(&mut rng);
    let n_boundary = ((n as f64) * boundary_fraction.clamp(0.0, 1.0)).round() as usize;
    let n_interior = n - n_boundary.min(n);
    let (lo, hi) = domain.bounding_box();
    let mut out = Vec::with_capacity(n);
    while out.len() < n_interior {
        let [a, b, c] = interior.next();
        let x = Vec2::new(lo.x + a * (hi.x - lo.x), lo.y + b * (hi.y - lo.y));
        if domain.contains(x) {
            out.push(PhasePoint::from_angle(x, 2.0 * PI * c));
        }
    }
    let mut k = 0usize;
    while out.len() < n {
        let [a, b, _] = boundary.next();
        let (x, part) = domain.boundary_point(a);
        let n_out = domain.part_normal(part, x);
        let t = n_out.perp();
        let glancing = part.is_curved() && k % 2 == 1;
        k += 1;
        let xi = if glancing {
            if b < 0.5 { t } else { -t }
        } else {
            let phi = (b - 0.5) * PI * (1.0 - 1e-6);
            -n_out * phi.cos() + t * phi.sin()
        };
        out.push(PhasePoint { x, xi: xi.normalized() });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GccVerdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl GccVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            GccVerdict::Satisfied => "satisfied",
            GccVerdict::Violated => "violated",
            GccVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GccSample {
    pub start: PhasePoint,
    pub entry_time: Option<f64>,
    pub excluded: Option<Termination>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GccOptions {
    pub n_samples: usize,
    pub s_max: f64,
    pub seed: u64,
    pub boundary_fraction: f64,
    /// Excluded fraction above which the verdict is inconclusive.
    pub max_excluded_fraction: f64,
}

impl Default for GccOptions {
    fn default() -> Self {
        Self { n_samples: 2000, s_max: 20.0, seed: 0, boundary_fraction: 0.1, max_excluded_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GccReport {
    pub verdict: GccVerdict,
    pub samples_total: usize,
    pub satisfied: usize,
    /// Estimate of the minimal control time `s_0`.
    pub worst_escape_time: f64,
    pub violating_rays: Vec<PhasePoint>,
    pub excluded_corner: usize,
    pub excluded_infinite_order: usize,
    pub excluded_event_limit: usize,
    pub options: GccOptions,
    #[serde(skip)]
    pub samples: Vec<GccSample>,
}

impl GccReport {
    pub fn excluded(&self) -> usize {
        self.excluded_corner + self.excluded_infinite_order + self.excluded_event_limit
    }
}

pub fn gcc_check(domain: &Domain, omega: &ControlRegion, n_samples: usize, s_max: f64) -> Result<GccReport> {
    gcc_check_with(domain, omega, GccOptions { n_samples, s_max, ..GccOptions::default() })
}

pub fn gcc_check_with(domain: &Domain, omega: &ControlRegion, opts: GccOptions) -> Result<GccReport> {
    if opts.n_samples == 0 {
        return Err(Error::ConfigInvalid { path: "n_samples".into(), message: "must be >= 1".into() });
    }
    if !(opts.s_max.is_finite() && opts.s_max > 0.0) {
        return Err(Error::ConfigInvalid { path: "s_max".into(), message: "must be > 0".into() });
    }
    domain.validate()?;
    omega.validate()?;
    let starts = sample_phase_points(domain, opts.n_samples, opts.seed, opts.boundary_fraction);
    let samples: Vec<GccSample> = starts
        .par_iter()
        .map(|&start| {
            let ray = trace_generalized(domain, start, opts.s_max)?;
            let entry_time = first_entry_time(domain, omega, &ray);
            let excluded = match (entry_time, ray.terminated) {
                (None, t @ (Termination::Corner | Termination::InfiniteOrder | Termination::EventLimit)) => Some(t),
                _ => None,
            };
            Ok(GccSample { start, entry_time, excluded })
        })
        .collect::<Result<_>>()?;

    let count = |t: Termination| samples.iter().filter(|s| s.excluded == Some(t)).count();
    let excluded_corner = count(Termination::Corner);
    let excluded_infinite_order = count(Termination::InfiniteOrder);
    let excluded_event_limit = count(Termination::EventLimit);
    let satisfied = samples.iter().filter(|s| s.entry_time.is_some()).count();
    let violating_rays: Vec<PhasePoint> =
        samples.iter().filter(|s| s.entry_time.is_none() && s.excluded.is_none()).map(|s| s.start).collect();
    let worst_escape_time = samples.iter().filter_map(|s| s.entry_time).fold(0.0, f64::max);
    let excluded = excluded_corner + excluded_infinite_order + excluded_event_limit;
    let verdict = if excluded as f64 > opts.max_excluded_fraction * samples.len() as f64 {
        GccVerdict::Inconclusive
    } else if violating_rays.is_empty() {
        GccVerdict::Satisfied
    } else {
        GccVerdict::Violated
    };
    Ok(GccReport {
        verdict,
        samples_total: samples.len(),
        satisfied,
        worst_escape_time,
        violating_rays,
        excluded_corner,
        excluded_infinite_order,
        excluded_event_limit,
        options: opts,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        a.dist(b) <= tol
    }

    #[test]
    fn boundary_event_examples() {
        let r = Domain::rectangle(1.0, 1.0).unwrap();
        match next_boundary_event(&r, Vec2::new(0.5, 0.5), Vec2::new(0.0, 1.0), 10.0).unwrap() {
            BoundaryHit::Hit { s, x, part } => {
                assert!((s - 0.25).abs() < 1e-15);
                assert!(close(x, Vec2::new(0.5, 1.0), 1e-15));
                assert_eq!(part, BoundaryPart::Top);
            }
            h => panic!("{h:?}"),
        }
        let d = Domain::disk(1.0).unwrap();
        match next_boundary_event(&d, Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 10.0).unwrap() {
            BoundaryHit::Hit { s, x, .. } => {
                assert!((s - 0.5).abs() < 1e-15);
                assert!(close(x, Vec2::new(1.0, 0.0), 1e-15));
            }
            h => panic!("{h:?}"),
        }
        let a = Domain::annulus(0.5, 1.0).unwrap();
        let y = (1.0f64 - 0.75 * 0.75).sqrt();
        match next_boundary_event(&a, Vec2::new(0.75, 0.0), Vec2::new(0.0, 1.0), 10.0).unwrap() {
            BoundaryHit::Hit { s, x, part } => {
                assert!((s - y / 2.0).abs() < 1e-14);
                assert!(close(x, Vec2::new(0.75, y), 1e-14));
                assert_eq!(part, BoundaryPart::OuterCircle);
            }
            h => panic!("{h:?}"),
        }
        assert!(matches!(
            next_boundary_event(&r, Vec2::new(0.5, 0.5), Vec2::new(0.0, 1.1), 1.0),
            Err(Error::DegenerateDirection(_))
        ));
        assert!(matches!(
            next_boundary_event(&r, Vec2::new(0.5, 0.5), Vec2::new(0.0, 1.0), 0.1).unwrap(),
            BoundaryHit::NoHit { .. }
        ));
    }

    #[test]
    fn classification_examples() {
        let r = Domain::rectangle(1.0, 1.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match classify_contact(&r, Vec2::new(0.5, 0.0), Vec2::new(s, -s)).unwrap() {
            ContactClass::Hyperbolic { xi_d } => assert!((xi_d.abs() - s).abs() < 1e-15),
            c => panic!("{c:?}"),
        }
        let d = Domain::disk(1.0).unwrap();
        assert_eq!(classify_contact(&d, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).unwrap(), ContactClass::Gliding);
        let a = Domain::annulus(0.5, 1.0).unwrap();
        assert_eq!(
            classify_contact(&a, Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0)).unwrap(),
            ContactClass::Diffractive
        );
        assert_eq!(
            classify_contact(&r, Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0)).unwrap(),
            ContactClass::InfiniteOrder
        );
        assert_eq!(classify_contact(&r, Vec2::new(0.0, 0.0), Vec2::new(s, s)).unwrap(), ContactClass::Corner);
        assert!(classify_contact(&r, Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn continuation_table() {
        assert_eq!(higher_order_continuation(2, 1.0), Continuation::Straight);
        assert_eq!(higher_order_continuation(2, -1.0), Continuation::Glide);
        assert_eq!(higher_order_continuation(3, 1.0), Continuation::Straight);
        assert_eq!(higher_order_continuation(3, -1.0), Continuation::Glide);
    }

    #[test]
    fn reflection_examples() {
        let r = Domain::rectangle(1.0, 1.0).unwrap();
        let out = reflect(&r, Vec2::new(0.3, 1.0), Vec2::new(0.6, 0.8)).unwrap();
        assert!(close(out, Vec2::new(0.6, -0.8), 1e-15));
        let d = Domain::disk(1.0).unwrap();
        let n = Vec2::from_angle(0.7);
        assert!(close(reflect(&d, n, n).unwrap(), -n, 1e-15));
    }

    #[test]
    fn glide_examples() {
        let d = Domain::disk(1.0).unwrap();
        let p = glide_step(&d, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), PI / 4.0).unwrap();
        assert!(close(p.x, Vec2::new(0.0, 1.0), 1e-15));
        let full = glide_step(&d, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), PI).unwrap();
        assert!(close(full.x, Vec2::new(1.0, 0.0), 1e-9));
        let a = Domain::annulus(0.5, 1.0).unwrap();
        assert!(matches!(
            glide_step(&a, Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), 0.1),
            Err(Error::NotGliding(_))
        ));
        let r = Domain::rectangle(1.0, 1.0).unwrap();
        assert!(matches!(
            glide_step(&r, Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0), 0.1),
            Err(Error::GlideOnFlatSide)
        ));
    }

    #[test]
    fn vertical_bouncing_ray() {
        let r = Domain::rectangle(1.0, 1.0).unwrap();
        let ray = trace_generalized(&r, PhasePoint::new(Vec2::new(0.5, 0.5), Vec2::new(0.0, 1.0)).unwrap(), 3.0).unwrap();
        assert!(ray.events.iter().all(|e| matches!(e.class, ContactClass::Hyperbolic { .. })));
        let s: Vec<f64> = ray.events.iter().map(|e| e.s).collect();
        assert_eq!(s.len(), 6);
        for w in s.windows(3) {
            assert!((w[2] - w[0] - 1.0).abs() < 1e-14);
        }
        let back = ray.state_at(1.0);
        assert!(close(back.x, Vec2::new(0.5, 0.5), 1e-14));
        assert!(close(back.xi, Vec2::new(0.0, 1.0), 1e-14));
    }

    #[test]
    fn diameter_ray_in_disk() {
        let d = Domain::disk(1.0).unwrap();
        let ray = trace_generalized(&d, PhasePoint::from_angle(Vec2::new(0.0, 0.0), 0.3), 5.0).unwrap();
        assert!(!ray.events.is_empty());
        for e in &ray.events {
            match e.class {
                ContactClass::Hyperbolic { xi_d } => assert!((xi_d.abs() - 1.0).abs() < 1e-12),
                c => panic!("{c:?}"),
            }
        }
    }

    #[test]
    fn tangent_start_glides_forever() {
        let d = Domain::disk(1.0).unwrap();
        let ray = trace_generalized(&d, PhasePoint::new(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).unwrap(), 2.0).unwrap();
        assert!(matches!(ray.arcs.last(), Some(Arc::Gliding { .. })));
        let p = ray.state_at(PI / 4.0);
        assert!(close(p.x, Vec2::new(0.0, 1.0), 1e-14));
    }

    #[test]
    fn diffractive_contact_passes_straight() {
        let a = Domain::annulus(0.5, 1.0).unwrap();
        let ray = trace_generalized(&a, PhasePoint::new(Vec2::new(0.5, -0.8), Vec2::new(0.0, 1.0)).unwrap(), 1.0).unwrap();
        let first = ray.events[0];
        assert_eq!(first.class, ContactClass::Diffractive);
        assert!(close(first.x, Vec2::new(0.5, 0.0), 1e-12));
        assert!(close(first.xi_after, Vec2::new(0.0, 1.0), 0.0));
    }

    #[test]
    fn gcc_examples() {
        let d = Domain::disk(1.0).unwrap();
        let rep = gcc_check(&d, &ControlRegion::BoundaryCollar { width: 0.2 }, 300, 5.0).unwrap();
        assert_eq!(rep.verdict, GccVerdict::Satisfied);
        assert!(rep.worst_escape_time > 0.0 && rep.worst_escape_time <= 1.0);

        let r = Domain::rectangle(1.0, 1.0).unwrap();
        let ball = ControlRegion::Ball { center: [0.5, 0.5], radius: 0.1 };
        let witness = trace_generalized(&r, PhasePoint::new(Vec2::new(0.1, 0.5), Vec2::new(0.0, 1.0)).unwrap(), 20.0).unwrap();
        assert_eq!(first_entry_time(&r, &ball, &witness), None);
        assert_eq!(gcc_check(&r, &ball, 300, 20.0).unwrap().verdict, GccVerdict::Violated);

        let a = Domain::annulus(0.5, 1.0).unwrap();
        let inner = ControlRegion::Ball { center: [0.0, 0.0], radius: 0.6 };
        // chord of the outer circle with closest approach 0.8
        let chord = trace_generalized(&a, PhasePoint::new(Vec2::new(0.8, 0.0), Vec2::new(0.0, 1.0)).unwrap(), 20.0).unwrap();
        assert_eq!(first_entry_time(&a, &inner, &chord), None);
        assert_eq!(gcc_check(&a, &inner, 300, 20.0).unwrap().verdict, GccVerdict::Violated);
    }

    #[test]
    fn samples_are_deterministic_and_valid() {
        for d in [Domain::rectangle(2.0, 1.0).unwrap(), Domain::annulus(0.4, 1.0).unwrap()] {
            let a = sample_phase_points(&d, 200, 9, 0.1);
            let b = sample_phase_points(&d, 200, 9, 0.1);
            assert_eq!(a, b);
            assert_eq!(a.len(), 200);
            for p in &a {
                assert!(d.contains_closure(p.x));
                assert!(p.symbol().abs() <= 1e-12);
            }
        }
    }
}
