//! Time evolution `Z' = A_d Z` with the implicit midpoint rule.
//!
//! With midpoint quadrature of the dissipation, the discrete energy balance
//! `E(Z_{k+1}) - E(Z_k) = -dt ||sqrt(b) u_{k+1/2}||^2` is an algebraic
//! identity, so the energy identity can be checked to rounding.

mod kernel;

pub use kernel::{KernelBasis, KernelRoute, AMBIGUITY_BAND, DEFAULT_DENSE_LIMIT, KERNEL_THRESHOLD};

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use serde::Serialize;

use crate::discretization::{StateVector, SystemOperator};
use crate::error::{Error, Result};

/// `1/2 <Z, Z>_H`.
pub fn energy(op: &SystemOperator, z: &[f64]) -> f64 {
    0.5 * op.inner(z, z).unwrap_or(f64::NAN)
}

/// Implicit midpoint integrator with the pressure Schur complement
/// `W_r + tau^2 G^T W_u (I + tau D)^{-1} G` factored once.
pub struct MidpointStepper<'a> {
    op: &'a SystemOperator,
    dt: f64,
    /// `1 / (1 + tau b_f)`.
    lambda: Vec<f64>,
    solver: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl<'a> MidpointStepper<'a> {
    pub fn new(op: &'a SystemOperator, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::ConfigInvalid { path: "dt".into(), message: "must be > 0".into() });
        }
        let tau = 0.5 * dt;
        let lambda: Vec<f64> = op.face_damping().iter().map(|b| 1.0 / (1.0 + tau * b)).collect();
        let nc = op.n_cells();
        let mut trips = Vec::with_capacity(4 * op.n_faces() + nc);
        for (c, a) in op.cell_weights().iter().enumerate() {
            trips.push(Triplet::new(c, c, *a));
        }
        for (face, l) in op.grid.faces.iter().zip(&lambda) {
            let k = tau * tau * l * face.length / face.dist;
            let [a, b] = face.cells;
            trips.push(Triplet::new(a, a, k));
            trips.push(Triplet::new(b, b, k));
            trips.push(Triplet::new(a, b, -k));
            trips.push(Triplet::new(b, a, -k));
        }
        let s = SparseColMat::<usize, f64>::try_new_from_triplets(nc, nc, &trips)
            .map_err(|e| Error::SolverFailure(format!("Schur assembly: {e:?}")))?;
        let solver = s
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("Schur factorization: {e:?}")))?;
        Ok(Self { op, dt, lambda, solver })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solves `(I - dt/2 A_d) Z' = (I + dt/2 A_d) Z`.
    pub fn step(&self, z: &[f64]) -> Vec<f64> {
        let op = self.op;
        let nf = op.n_faces();
        let nc = op.n_cells();
        let tau = 0.5 * self.dt;
        let adz = op.apply_ad(z);
        let y: Vec<f64> = z.iter().zip(&adz).map(|(a, b)| a + tau * b).collect();
        let (yu, yr) = y.split_at(nf);

        let lyu: Vec<f64> = yu.iter().zip(&self.lambda).map(|(a, l)| a * l).collect();
        let mut vly = vec![0.0; nc];
        op.div(&lyu, &mut vly);
        let mut rhs = Mat::<f64>::zeros(nc, 1);
        for c in 0..nc {
            rhs[(c, 0)] = op.cell_weights()[c] * (yr[c] - tau * vly[c]);
        }
        self.solver.solve_in_place(rhs.as_mut());
        let xr: Vec<f64> = (0..nc).map(|c| rhs[(c, 0)]).collect();

        let mut gx = vec![0.0; nf];
        op.grad(&xr, &mut gx);
        let mut out = Vec::with_capacity(op.n_dof());
        out.extend((0..nf).map(|f| self.lambda[f] * (yu[f] - tau * gx[f])));
        out.extend(xr);
        out
    }
}

/// One implicit midpoint step.
pub fn step_midpoint(op: &SystemOperator, z: &[f64], dt: f64) -> Result<Vec<f64>> {
    Ok(MidpointStepper::new(op, dt)?.step(z))
}

/// Sampled history of an evolution.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// `Q_k = sum_{j<k} dt ||sqrt(b) u_{j+1/2}||^2`.
    pub damping_integrals: Vec<f64>,
    /// `||Z_k - P_E Z_0||_H` (or `||Z_k||_H` without a kernel).
    pub residual_norms: Vec<f64>,
    /// `||P_E Z_k - P_E Z_0||_H`; empty without a kernel.
    pub kernel_drift: Vec<f64>,
    #[serde(skip)]
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn initial_energy(&self) -> f64 {
        self.energies[0]
    }

    /// `max_k |E_0 - E_k - Q_k|`.
    pub fn energy_identity_residual_max(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .zip(&self.damping_integrals)
            .map(|(e, q)| (e0 - e - q).abs())
            .fold(0.0, f64::max)
    }

    /// `max_k (E_{k+1} - E_k)`, positive only if energy ever increased.
    pub fn max_energy_increase(&self) -> f64 {
        self.energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    pub fn max_kernel_drift(&self) -> f64 {
        self.kernel_drift.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions<'k> {
    /// Record every n-th step (the final step is always recorded).
    pub sample_every: usize,
    pub kernel: Option<&'k KernelBasis>,
}

impl Default for EvolveOptions<'_> {
    fn default() -> Self {
        Self { sample_every: 1, kernel: None }
    }
}

pub fn evolve(op: &SystemOperator, z0: &StateVector, t_final: f64, dt: f64) -> Result<Trajectory> {
    evolve_with(op, z0, t_final, dt, EvolveOptions::default())
}

pub fn evolve_with(
    op: &SystemOperator,
    z0: &StateVector,
    t_final: f64,
    dt: f64,
    opts: EvolveOptions<'_>,
) -> Result<Trajectory> {
    if !(t_final.is_finite() && t_final >= dt) {
        return Err(Error::ConfigInvalid { path: "t_final".into(), message: "must be >= dt".into() });
    }
    let stepper = MidpointStepper::new(op, dt)?;
    let steps = (t_final / dt).round() as usize;
    let every = opts.sample_every.max(1);
    let z_init = &z0.data;
    let pe0: Option<Vec<f64>> = opts.kernel.map(|k| k.project(op, z_init).0);

    let mut traj = Trajectory {
        times: vec![0.0],
        energies: vec![energy(op, z_init)],
        damping_integrals: vec![0.0],
        residual_norms: Vec::new(),
        kernel_drift: Vec::new(),
        final_state: Vec::new(),
    };
    let record_residual = |traj: &mut Trajectory, z: &[f64]| match (&pe0, opts.kernel) {
        (Some(pe0), Some(k)) => {
            let (pe, _) = k.project(op, z);
            let res: Vec<f64> = z.iter().zip(pe0).map(|(a, b)| a - b).collect();
            let drift: Vec<f64> = pe.iter().zip(pe0).map(|(a, b)| a - b).collect();
            traj.residual_norms.push(op.norm(&res));
            traj.kernel_drift.push(op.norm(&drift));
        }
        _ => traj.residual_norms.push(op.norm(z)),
    };
    record_residual(&mut traj, z_init);

    let mut z = z_init.clone();
    let mut q = 0.0;
    for k in 1..=steps {
        let next = stepper.step(&z);
        let mid: Vec<f64> = z.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        q += dt * op.damping_form(&mid);
        z = next;
        if k % every == 0 || k == steps {
            traj.times.push(k as f64 * dt);
            traj.energies.push(energy(op, &z));
            traj.damping_integrals.push(q);
            record_residual(&mut traj, &z);
        }
    }
    traj.final_state = z;
    Ok(traj)
}

/// Exponential fit `residual ~ C exp(-c t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Residuals below this are treated as fully decayed.
pub const DECAY_FLOOR: f64 = 1e-14;

/// Least-squares line through `(t_k, ln residual_k)` on the window
/// `[T (1 - window_fraction), T]`.
pub fn fit_decay(traj: &Trajectory, window_fraction: f64) -> Result<DecayFit> {
    fit_decay_series(&traj.times, &traj.residual_norms, window_fraction)
}

pub fn fit_decay_series(times: &[f64], residuals: &[f64], window_fraction: f64) -> Result<DecayFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::ConfigInvalid {
            path: "window_fraction".into(),
            message: "must lie in (0, 1]".into(),
        });
    }
    let t_end = times.last().copied().unwrap_or(0.0);
    let t_start = t_end * (1.0 - window_fraction);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(residuals)
        .filter(|(t, r)| **t >= t_start - 1e-12 * t_end.abs() && **r > DECAY_FLOOR)
        .map(|(t, r)| (*t, r.ln()))
        .collect();
    if pts.len() < 2 {
        let in_window = times.iter().filter(|t| **t >= t_start).count();
        return Err(Error::DegenerateFit(format!(
            "{} of {in_window} window residuals above {DECAY_FLOOR:e}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::DegenerateFit("window holds a single time".into()));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r_squared = if syy == 0.0 { 1.0 } else { (sty * sty) / (stt * syy) };
    Ok(DecayFit { amplitude: intercept.exp(), rate: -slope, r_squared, points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DampingField, Domain};

    fn rect(n: usize, b: DampingField) -> SystemOperator {
        SystemOperator::assemble(Domain::rectangle(1.0, 1.0).unwrap(), [n, n], b).unwrap()
    }

    #[test]
    fn energy_examples() {
        let op = rect(4, DampingField::zero());
        let z = StateVector::zeros(&op);
        assert_eq!(energy(&op, &z.data), 0.0);
        let mut z = StateVector::random(&op, 3);
        let n = op.norm(&z.data);
        z.data.iter_mut().for_each(|v| *v /= n);
        assert!((energy(&op, &z.data) - 0.5).abs() < 1e-15);
        let z = StateVector::random(&op, 4);
        let brute: f64 = 0.5 * op.weights().iter().zip(&z.data).map(|(w, v)| w * v * v).sum::<f64>();
        assert!((energy(&op, &z.data) - brute).abs() < 1e-15);
    }

    #[test]
    fn midpoint_is_isometric_without_damping() {
        let op = rect(8, DampingField::zero());
        let z = StateVector::random(&op, 1);
        let next = step_midpoint(&op, &z.data, 0.05).unwrap();
        let (a, b) = (op.norm(&z.data), op.norm(&next));
        assert!((a - b).abs() <= 1e-12 * a);
        let zero = StateVector::zeros(&op);
        assert!(step_midpoint(&op, &zero.data, 0.05).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn midpoint_step_balances_energy() {
        let op = rect(8, DampingField::Constant { amplitude: 1.0 });
        let dt = 1e-2;
        let z = StateVector::random(&op, 7);
        let next = step_midpoint(&op, &z.data, dt).unwrap();
        let mid: Vec<f64> = z.data.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let de = energy(&op, &next) - energy(&op, &z.data);
        let res = de + dt * op.damping_form(&mid);
        assert!(res.abs() <= 1e-12 * energy(&op, &z.data), "{res}");
    }

    #[test]
    fn midpoint_solves_the_linear_system() {
        let op = SystemOperator::assemble(
            Domain::annulus(0.4, 1.0).unwrap(),
            [5, 12],
            DampingField::BoundaryCollar { width: 0.2, amplitude: 3.0, smoothness_exponent: 1.0 },
        )
        .unwrap();
        let dt = 0.1;
        let z = StateVector::random(&op, 2);
        let x = step_midpoint(&op, &z.data, dt).unwrap();
        let lhs: Vec<f64> = x.iter().zip(op.apply_ad(&x)).map(|(a, b)| a - 0.5 * dt * b).collect();
        let rhs: Vec<f64> = z.data.iter().zip(op.apply_ad(&z.data)).map(|(a, b)| a + 0.5 * dt * b).collect();
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(op.norm(&diff) <= 1e-13 * op.norm(&rhs));
    }

    #[test]
    fn conservative_evolution() {
        let op = rect(10, DampingField::zero());
        let z0 = StateVector::smooth_random(&op, 1);
        let traj = evolve(&op, &z0, 1.0, 0.01).unwrap();
        assert!(traj.max_energy_drift() <= 1e-11 * traj.initial_energy());
    }

    #[test]
    fn energy_identity_holds_along_trajectory() {
        let op = rect(10, DampingField::BoundaryCollar { width: 0.2, amplitude: 5.0, smoothness_exponent: 2.0 });
        let z0 = StateVector::smooth_random(&op, 2);
        let traj = evolve(&op, &z0, 2.0, 0.01).unwrap();
        assert!(traj.energy_identity_residual_max() <= 1e-10 * traj.initial_energy());
        assert!(traj.max_energy_increase() <= 1e-12 * traj.initial_energy());
    }

    #[test]
    fn kernel_elements_are_stationary() {
        let op = rect(8, DampingField::Ball { center: [0.3, 0.5], radius: 0.2, amplitude: 1.0, smoothness_exponent: 1.0 });
        let k = KernelBasis::compute_with(&op, KernelRoute::Dense).unwrap();
        assert!(k.dim() > 0);
        let q: Vec<f64> = k.basis().unwrap().col(0).iter().copied().collect();
        let z0 = StateVector::from_vec(&op, q.clone()).unwrap();
        let stepper = MidpointStepper::new(&op, 0.05).unwrap();
        let mut z = q.clone();
        for _ in 0..20 {
            z = stepper.step(&z);
            let d: Vec<f64> = z.iter().zip(&q).map(|(a, b)| a - b).collect();
            assert!(op.norm(&d) <= 1e-10);
        }
        let traj = evolve_with(&op, &z0, 1.0, 0.05, EvolveOptions { sample_every: 1, kernel: Some(&k) }).unwrap();
        assert!(traj.residual_norms.iter().all(|&r| r <= 1e-10));
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let res: Vec<f64> = times.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        let fit = fit_decay_series(&times, &res, 0.75).unwrap();
        assert!((fit.amplitude - 2.0).abs() < 1e-6);
        assert!((fit.rate - 0.3).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn fit_flags_fully_decayed_series() {
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let res = vec![1e-16; 10];
        assert!(matches!(fit_decay_series(&times, &res, 0.75), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn undamped_fit_shows_no_decay() {
        let op = rect(8, DampingField::zero());
        let k = KernelBasis::compute(&op).unwrap();
        let z0 = StateVector::smooth_random(&op, 4);
        let traj = evolve_with(&op, &z0, 2.0, 0.02, EvolveOptions { sample_every: 1, kernel: Some(&k) }).unwrap();
        let fit = fit_decay(&traj, 0.75).unwrap();
        assert!(fit.rate <= 1e-6, "{}", fit.rate);
    }

    #[test]
    fn rejects_bad_time_parameters() {
        let op = rect(4, DampingField::zero());
        let z0 = StateVector::zeros(&op);
        assert!(evolve(&op, &z0, 0.001, 0.01).is_err());
        assert!(step_midpoint(&op, &z0.data, -1.0).is_err());
    }
}
