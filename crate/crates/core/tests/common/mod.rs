//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use acoustolab::rays::{trace_generalized, Termination};
use acoustolab::{Domain, PhasePoint, SystemOperator, Vec2};
use faer::{c64, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `W^{1/2} A_d W^{-1/2}` assembled column by column from the matrix-free
/// operator.
pub fn scaled_dense_by_columns(op: &SystemOperator) -> Mat<f64> {
    let n = op.n_dof();
    let w = op.weights();
    let mut m = Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0 / w[j].sqrt();
        let col = op.apply_ad(&e);
        for i in 0..n {
            m[(i, j)] = w[i].sqrt() * col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Orthonormal basis of `(ker B)^perp` from the eigenvectors of `B^T B`.
pub fn range_basis(b: &Mat<f64>) -> Mat<f64> {
    let btb = b.transpose() * b;
    let eig = btb.self_adjoint_eigen(Side::Lower).expect("eigensolve");
    let s = eig.S().column_vector();
    let u = eig.U();
    let n = b.ncols();
    let lam_max = (0..n).map(|k| s[k]).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&k| s[k] > 1e-8 * lam_max).collect();
    Mat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])
}

/// `||(A_d - i mu)^{-1}||` on the complement of the kernel, by full dense SVD
/// of the compressed operator.
pub struct ResolventOracle {
    compressed: Mat<f64>,
}

impl ResolventOracle {
    pub fn new(op: &SystemOperator) -> Self {
        let b = scaled_dense_by_columns(op);
        let q = range_basis(&b);
        Self { compressed: q.transpose() * &b * &q }
    }

    pub fn norm(&self, mu: f64) -> f64 {
        let m = self.compressed.nrows();
        let c = Mat::<c64>::from_fn(m, m, |i, j| c64::new(self.compressed[(i, j)], if i == j { -mu } else { 0.0 }));
        let sv = c.singular_values().expect("dense SVD");
        1.0 / sv.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Signed distance to the boundary, positive inside. Valid near the
/// boundary, away from rectangle corners.
pub fn signed_distance(domain: &Domain, p: Vec2) -> f64 {
    match *domain {
        Domain::Rectangle { lx, ly } => p.x.min(lx - p.x).min(p.y).min(ly - p.y),
        Domain::Disk { r_out } => r_out - p.norm(),
        Domain::Annulus { r_in, r_out } => (r_out - p.norm()).min(p.norm() - r_in),
    }
}

/// A boundary point away from corners, with its outward normal.
pub fn random_boundary_point(domain: &Domain, rng: &mut impl Rng) -> (Vec2, Vec2) {
    match *domain {
        Domain::Rectangle { lx, ly } => {
            let t: f64 = rng.gen_range(0.05..0.95);
            match rng.gen_range(0..4) {
                0 => (Vec2::new(t * lx, 0.0), Vec2::new(0.0, -1.0)),
                1 => (Vec2::new(lx, t * ly), Vec2::new(1.0, 0.0)),
                2 => (Vec2::new(t * lx, ly), Vec2::new(0.0, 1.0)),
                _ => (Vec2::new(0.0, t * ly), Vec2::new(-1.0, 0.0)),
            }
        }
        Domain::Disk { r_out } => {
            let n = Vec2::from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
            (n * r_out, n)
        }
        Domain::Annulus { r_in, r_out } => {
            let n = Vec2::from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
            if rng.gen_bool(0.5) {
                (n * r_out, n)
            } else {
                (n * r_in, -n)
            }
        }
    }
}

/// Contact type from finite differences of the signed distance along the
/// straight line through `x` in direction `xi`: first derivative for
/// transversal contacts, second derivative for tangential ones.
pub fn fd_contact_label(domain: &Domain, x: Vec2, xi: Vec2, tol_glance: f64) -> &'static str {
    let h = 1e-3;
    let d = |s: f64| signed_distance(domain, x + xi * s);
    let d0 = d(0.0);
    let first = (d(h) - d(-h)) / (2.0 * h);
    if first.abs() > tol_glance {
        return "hyperbolic";
    }
    let second = (d(h) + d(-h) - 2.0 * d0) / (h * h);
    if second > 1e-6 {
        "diffractive"
    } else if second < -1e-6 {
        "gliding"
    } else {
        "infinite_order"
    }
}

/// Largest `|xi| - 1`, and for disks the angular momentum drift, along a ray.
pub fn ray_invariant_drift(domain: &Domain, start: PhasePoint, s_max: f64, probes: usize) -> Option<(f64, f64)> {
    let ray = trace_generalized(domain, start, s_max).ok()?;
    if ray.terminated != Termination::MaxTime {
        return None;
    }
    let l0 = start.x.cross(start.xi);
    let (mut xi_drift, mut l_drift) = (0.0f64, 0.0f64);
    for k in 0..=probes {
        let s = s_max * k as f64 / probes as f64;
        let p = ray.state_at(s);
        xi_drift = xi_drift.max((p.xi.norm() - 1.0).abs());
        if matches!(domain, Domain::Disk { .. }) {
            l_drift = l_drift.max((p.x.cross(p.xi) - l0).abs());
        }
    }
    Some((xi_drift, l_drift))
}

fn phase_distance(a: PhasePoint, b: PhasePoint) -> f64 {
    a.x.dist(b.x) + a.xi.dist(b.xi)
}

/// `|Gamma(s1 + s2, rho) - Gamma(s2, Gamma(s1, rho))|`.
pub fn group_mismatch(domain: &Domain, start: PhasePoint, s1: f64, s2: f64) -> Option<f64> {
    let whole = trace_generalized(domain, start, s1 + s2).ok()?;
    let first = trace_generalized(domain, start, s1).ok()?;
    if whole.terminated != Termination::MaxTime || first.terminated != Termination::MaxTime {
        return None;
    }
    let second = trace_generalized(domain, first.end_state(), s2).ok()?;
    Some(phase_distance(whole.end_state(), second.end_state()))
}

/// Distance between `rho` and the result of running to `s`, reversing the
/// direction, running `s` again and reversing back.
pub fn reversal_mismatch(domain: &Domain, start: PhasePoint, s: f64) -> Option<f64> {
    let fwd = trace_generalized(domain, start, s).ok()?;
    if fwd.terminated != Termination::MaxTime {
        return None;
    }
    let end = fwd.end_state();
    let back = trace_generalized(domain, PhasePoint { x: end.x, xi: -end.xi }, s).ok()?;
    if back.terminated != Termination::MaxTime {
        return None;
    }
    let b = back.end_state();
    let back_xi = -b.xi;
    let mut mismatch = phase_distance(start, PhasePoint { x: b.x, xi: back_xi });
    // on the boundary, incoming and reflected directions are the same point
    if signed_distance(domain, start.x).abs() <= 1e-12 {
        let n = outward_normal(domain, start.x);
        let reflected = back_xi - n * (2.0 * back_xi.dot(n));
        mismatch = mismatch.min(phase_distance(start, PhasePoint { x: b.x, xi: reflected }));
    }
    Some(mismatch)
}

/// Outward unit normal at a boundary point away from corners.
pub fn outward_normal(domain: &Domain, p: Vec2) -> Vec2 {
    match *domain {
        Domain::Rectangle { lx, ly } => {
            let sides = [(p.x, Vec2::new(-1.0, 0.0)), (lx - p.x, Vec2::new(1.0, 0.0)), (p.y, Vec2::new(0.0, -1.0)), (ly - p.y, Vec2::new(0.0, 1.0))];
            sides.iter().min_by(|a, b| a.0.abs().total_cmp(&b.0.abs())).unwrap().1
        }
        Domain::Disk { .. } => p.normalized(),
        Domain::Annulus { r_in, r_out } => {
            if (p.norm() - r_in).abs() < (p.norm() - r_out).abs() { -p.normalized() } else { p.normalized() }
        }
    }
}

/// Instances with at most 1500 unknowns covering both grid shapes.
pub fn small_instances() -> Vec<SystemOperator> {
    use acoustolab::DampingField;
    let rect = Domain::rectangle(1.0, 1.0).unwrap();
    let ann = Domain::annulus(0.5, 1.0).unwrap();
    vec![
        SystemOperator::assemble(
            rect,
            [12, 12],
            DampingField::Ball { center: [0.5, 0.5], radius: 0.2, amplitude: 5.0, smoothness_exponent: 0.0 },
        )
        .unwrap(),
        SystemOperator::assemble(
            rect,
            [20, 20],
            DampingField::BoundaryCollar { width: 0.2, amplitude: 5.0, smoothness_exponent: 2.0 },
        )
        .unwrap(),
        SystemOperator::assemble(
            ann,
            [6, 24],
            DampingField::BoundaryCollar { width: 0.15, amplitude: 2.0, smoothness_exponent: 1.0 },
        )
        .unwrap(),
    ]
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RayMetrics {
    pub rays: usize,
    pub skipped: usize,
    /// Rays grazing a diffractive boundary, where the flow is only Hölder
    /// continuous; excluded from the group and reversal checks.
    pub grazing: usize,
    pub xi_drift: f64,
    pub angular_momentum_drift: f64,
    pub group_mismatch: f64,
    pub reversal_mismatch: f64,
}

/// Invariant checks over `n` sampled rays (10% boundary starts, half of
/// them glancing on curved parts).
pub fn ray_metrics(domain: &Domain, n: usize, seed: u64) -> RayMetrics {
    use acoustolab::rays::sample_phase_points;
    let mut r = rng(seed);
    let mut m = RayMetrics::default();
    for start in sample_phase_points(domain, n, seed, 0.1) {
        let s1: f64 = r.gen_range(0.5..5.0);
        let s2: f64 = r.gen_range(0.5..5.0);
        let Some((xi, l)) = ray_invariant_drift(domain, start, s1 + s2, 50) else {
            m.skipped += 1;
            continue;
        };
        m.rays += 1;
        m.xi_drift = m.xi_drift.max(xi);
        m.angular_momentum_drift = m.angular_momentum_drift.max(l);
        if grazes_diffractive(domain, start, s1 + s2) {
            m.grazing += 1;
            continue;
        }
        match (group_mismatch(domain, start, s1, s2), reversal_mismatch(domain, start, s1)) {
            (Some(g), Some(t)) => {
                m.group_mismatch = m.group_mismatch.max(g);
                m.reversal_mismatch = m.reversal_mismatch.max(t);
            }
            _ => m.skipped += 1,
        }
    }
    m
}

/// Whether the ray touches a concave boundary piece nearly tangentially.
pub fn grazes_diffractive(domain: &Domain, start: PhasePoint, s_max: f64) -> bool {
    use acoustolab::rays::contact_alpha;
    use acoustolab::ContactClass;
    let Ok(ray) = trace_generalized(domain, start, s_max) else { return false };
    let start_grazes = signed_distance(domain, start.x).abs() <= 1e-12
        && contact_alpha(domain, domain.nearest_part(start.x)) > 0.0
        && start.xi.dot(outward_normal(domain, start.x)).abs() < 1e-6;
    start_grazes
        || ray.events.iter().any(|e| match e.class {
            ContactClass::Diffractive => true,
            ContactClass::Hyperbolic { xi_d } => xi_d.abs() < 1e-6 && contact_alpha(domain, e.part) > 0.0,
            _ => false,
        })
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ClassificationMetrics {
    pub cases: usize,
    pub compared: usize,
    pub agreed: usize,
}

/// Library contact classes against [`fd_contact_label`] on random boundary
/// contacts. Directions are tangential with a normal tilt spread over many
/// scales; tilts within a factor 10 of `TOL_GLANCE` are not compared.
pub fn classification_metrics(n: usize, seed: u64) -> ClassificationMetrics {
    use acoustolab::rays::TOL_GLANCE;
    let domains = [
        Domain::rectangle(1.5, 1.0).unwrap(),
        Domain::disk(1.0).unwrap(),
        Domain::annulus(0.4, 1.0).unwrap(),
    ];
    let mut r = rng(seed);
    let mut m = ClassificationMetrics::default();
    for k in 0..n {
        let d = &domains[k % domains.len()];
        let (x, normal) = random_boundary_point(d, &mut r);
        let tangent = if r.gen_bool(0.5) { normal.perp() } else { -normal.perp() };
        let tilt = if r.gen_bool(0.25) {
            0.0
        } else {
            let mag = 10f64.powf(r.gen_range(-12.0..0.0));
            if r.gen_bool(0.5) { mag } else { -mag }
        };
        let xi = (tangent + normal * tilt).normalized();
        m.cases += 1;
        let xi_d = xi.dot(normal).abs();
        if xi_d > 0.1 * TOL_GLANCE && xi_d < 10.0 * TOL_GLANCE {
            continue;
        }
        m.compared += 1;
        let got = acoustolab::classify_contact(d, x, xi).expect("boundary point").label();
        if got == fd_contact_label(d, x, xi, TOL_GLANCE) {
            m.agreed += 1;
        }
    }
    m
}
