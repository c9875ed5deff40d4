//! Resolvent norms `||(A_d - i mu)^{-1}|_{H_0}||` on the imaginary axis and
//! quasimodes realizing them.
//!
//! `H_0` is the orthogonal complement of `ker A_d` (including the constant
//! pressure). Both `H_0` and the kernel reduce `A_d`, so the restricted
//! inverse is the full inverse applied to `H_0` data.
//!
//! Two routes: a dense SVD of the restricted scaled matrix when the kernel
//! came with an explicit range basis of moderate size, and otherwise Lanczos
//! on `M^{-1} M^{-*}` with `M = A_d - i mu`, each application costing two
//! sparse complex solves on the pressure Schur complement.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::SystemOperator;
use crate::error::{Error, Result};
use crate::semigroup::KernelBasis;

/// `sigma_min < SINGULAR_THRESHOLD * sigma_max` is reported as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-13;
/// Default largest restricted dimension for the dense route.
pub const DEFAULT_DENSE_LIMIT: usize = 600;
/// Default cap on the sup of the sweep for a "bounded" verdict.
pub const DEFAULT_CAP: f64 = 1e3;

const LANCZOS_TOL: f64 = 1e-11;
const LANCZOS_MAX_ITER: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolventRoute {
    Auto { dense_limit: usize },
    Dense,
    Lanczos,
}

impl Default for ResolventRoute {
    fn default() -> Self {
        ResolventRoute::Auto { dense_limit: DEFAULT_DENSE_LIMIT }
    }
}

/// Complex state `(u, r)` with the real layout of [`SystemOperator`].
pub type ComplexState = Vec<c64>;

pub fn apply_ad_complex(op: &SystemOperator, z: &[c64]) -> ComplexState {
    let re: Vec<f64> = z.iter().map(|v| v.re).collect();
    let im: Vec<f64> = z.iter().map(|v| v.im).collect();
    let (a, b) = (op.apply_ad(&re), op.apply_ad(&im));
    a.into_iter().zip(b).map(|(x, y)| c64::new(x, y)).collect()
}

pub fn inner_complex(op: &SystemOperator, z: &[c64], w: &[c64]) -> c64 {
    op.weights().iter().zip(z).zip(w).map(|((c, a), b)| a.conj() * b * *c).sum()
}

pub fn norm_complex(op: &SystemOperator, z: &[c64]) -> f64 {
    op.weights().iter().zip(z).map(|(c, a)| c * a.norm_sqr()).sum::<f64>().sqrt()
}

fn weighted_norm(w: &[f64], z: &[c64]) -> f64 {
    w.iter().zip(z).map(|(c, a)| c * a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn project_h0_complex(op: &SystemOperator, kernel: &KernelBasis, z: &[c64]) -> ComplexState {
    let re: Vec<f64> = z.iter().map(|v| v.re).collect();
    let im: Vec<f64> = z.iter().map(|v| v.im).collect();
    let (a, b) = (kernel.project_h0(op, &re), kernel.project_h0(op, &im));
    a.into_iter().zip(b).map(|(x, y)| c64::new(x, y)).collect()
}

/// `(A_d - i mu) z`.
fn apply_shifted(op: &SystemOperator, mu: f64, z: &[c64]) -> ComplexState {
    let mut out = apply_ad_complex(op, z);
    for (o, v) in out.iter_mut().zip(z) {
        *o -= c64::new(0.0, mu) * v;
    }
    out
}

/// Sparse solver for `M x = f` and `M^* y = v` (`H`-adjoint), `M = A_d - i mu`.
struct ShiftedSolver<'a> {
    op: &'a SystemOperator,
    mu: f64,
    /// `(b_f + i mu)^{-1}`.
    lambda: Vec<c64>,
    lu: faer::sparse::linalg::solvers::Lu<usize, c64>,
}

impl<'a> ShiftedSolver<'a> {
    fn new(op: &'a SystemOperator, mu: f64) -> Result<Self> {
        let singular = || Error::SingularAtMu { mu, sigma_min: 0.0, sigma_max: op.norm_estimate() + mu.abs() };
        let lambda: Vec<c64> = op.face_damping().iter().map(|b| c64::new(*b, mu).inv()).collect();
        let nc = op.n_cells();
        let mut trips = Vec::with_capacity(4 * op.n_faces() + nc);
        for (c, a) in op.cell_weights().iter().enumerate() {
            trips.push(Triplet::new(c, c, c64::new(0.0, mu * a)));
        }
        for (face, l) in op.grid.faces.iter().zip(&lambda) {
            let k = l * (face.length / face.dist);
            let [a, b] = face.cells;
            trips.push(Triplet::new(a, a, k));
            trips.push(Triplet::new(b, b, k));
            trips.push(Triplet::new(a, b, -k));
            trips.push(Triplet::new(b, a, -k));
        }
        let s = SparseColMat::<usize, c64>::try_new_from_triplets(nc, nc, &trips)
            .map_err(|e| Error::SolverFailure(format!("shifted Schur assembly: {e:?}")))?;
        let lu = s.sp_lu().map_err(|_| singular())?;
        Ok(Self { op, mu, lambda, lu })
    }

    /// `G^T W_u x` for face data `x`.
    fn grad_adjoint(&self, x: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.op.n_cells()];
        for (face, v) in self.op.grid.faces.iter().zip(x) {
            let flux = v * face.length;
            out[face.cells[0]] -= flux;
            out[face.cells[1]] += flux;
        }
        out
    }

    fn grad(&self, r: &[c64]) -> Vec<c64> {
        self.op.grid.faces.iter().map(|f| (r[f.cells[1]] - r[f.cells[0]]) / f.dist).collect()
    }

    fn solve_cells(&self, rhs: Vec<c64>, conjugate: bool) -> Vec<c64> {
        let n = rhs.len();
        let mut m = Mat::<c64>::from_fn(n, 1, |i, _| if conjugate { rhs[i].conj() } else { rhs[i] });
        self.lu.solve_in_place(m.as_mut());
        (0..n).map(|i| if conjugate { m[(i, 0)].conj() } else { m[(i, 0)] }).collect()
    }

    /// `x = M^{-1} f`.
    fn solve(&self, f: &[c64]) -> ComplexState {
        let nf = self.op.n_faces();
        let (fu, fr) = f.split_at(nf);
        let lf: Vec<c64> = fu.iter().zip(&self.lambda).map(|(a, l)| a * l).collect();
        let glf = self.grad_adjoint(&lf);
        let rhs: Vec<c64> =
            fr.iter().zip(self.op.cell_weights()).zip(&glf).map(|((r, w), g)| -(r * *w) - g).collect();
        let xr = self.solve_cells(rhs, false);
        let gx = self.grad(&xr);
        let mut out: Vec<c64> = (0..nf).map(|i| -self.lambda[i] * (fu[i] + gx[i])).collect();
        out.extend(xr);
        out
    }

    /// `y = M^{-*} v`, with `M^* = A - D + i mu`.
    fn solve_adjoint(&self, v: &[c64]) -> ComplexState {
        let nf = self.op.n_faces();
        let (vu, vr) = v.split_at(nf);
        let lv: Vec<c64> = vu.iter().zip(&self.lambda).map(|(a, l)| a * l.conj()).collect();
        let glv = self.grad_adjoint(&lv);
        let rhs: Vec<c64> =
            vr.iter().zip(self.op.cell_weights()).zip(&glv).map(|((r, w), g)| -(r * *w) + g).collect();
        let yr = self.solve_cells(rhs, true);
        let gy = self.grad(&yr);
        let b = self.op.face_damping();
        let mut out: Vec<c64> = (0..nf).map(|i| -(vu[i] - gy[i]) / c64::new(b[i], -self.mu)).collect();
        out.extend(yr);
        out
    }
}

/// Smallest singular value of `A_d - i mu` on `H_0` with the maximizing
/// input (an `H`-unit vector in `H_0`).
#[derive(Debug, Clone)]
pub struct SigmaMin {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub vector: ComplexState,
    pub iterations: usize,
    pub dense: bool,
}

pub fn sigma_min(op: &SystemOperator, kernel: &KernelBasis, mu: f64, route: ResolventRoute) -> Result<SigmaMin> {
    if !mu.is_finite() {
        return Err(Error::ConfigInvalid { path: "mu".into(), message: "must be finite".into() });
    }
    let dense = match (route, kernel.range_scaled()) {
        (ResolventRoute::Dense, Some(_)) => true,
        (ResolventRoute::Dense, None) => {
            return Err(Error::SolverFailure("dense route needs a dense kernel basis".into()))
        }
        (ResolventRoute::Auto { dense_limit }, Some(q)) => q.ncols() <= dense_limit,
        _ => false,
    };
    if dense {
        dense_sigma_min(op, kernel, mu)
    } else {
        lanczos_sigma_min(op, kernel, mu)
    }
}

fn dense_sigma_min(op: &SystemOperator, kernel: &KernelBasis, mu: f64) -> Result<SigmaMin> {
    let q = kernel.range_scaled().expect("checked by caller");
    let n = op.n_dof();
    let k = q.ncols();
    if k == 0 {
        return Err(Error::SolverFailure("H_0 is trivial".into()));
    }
    let a = op.dense_scaled_ad();
    let aq = &a * q;
    let m = Mat::<c64>::from_fn(k, k, |i, j| {
        let re: f64 = (0..n).map(|l| q[(l, i)] * aq[(l, j)]).sum();
        c64::new(re, if i == j { -mu } else { 0.0 })
    });
    let svd = m.svd().map_err(|e| Error::SolverFailure(format!("dense SVD: {e:?}")))?;
    let s = svd.S().column_vector();
    let (mut imin, mut smax) = (0, 0.0f64);
    for i in 0..k {
        smax = smax.max(s[i].re);
        if s[i].re < s[imin].re {
            imin = i;
        }
    }
    let smin = s[imin].re;
    let v = svd.V();
    let w = op.weights();
    let vector = (0..n)
        .map(|l| (0..k).map(|j| v[(j, imin)] * q[(l, j)]).sum::<c64>() / w[l].sqrt())
        .collect();
    Ok(SigmaMin { sigma_min: smin, sigma_max: smax, vector, iterations: 0, dense: true })
}

fn lanczos_sigma_min(op: &SystemOperator, kernel: &KernelBasis, mu: f64) -> Result<SigmaMin> {
    let solver = ShiftedSolver::new(op, mu)?;
    let n = op.n_dof();
    let w = op.weights();
    let h0_dim = n.saturating_sub(kernel.dim() + 1);
    if h0_dim == 0 {
        return Err(Error::SolverFailure("H_0 is trivial".into()));
    }
    let max_iter = h0_dim.min(LANCZOS_MAX_ITER);
    let sigma_max = op.norm_estimate() + mu.abs();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start: Vec<c64> = (0..n).map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut q = project_h0_complex(op, kernel, &start);
    let nq = weighted_norm(w, &q);
    q.iter_mut().for_each(|v| *v /= nq);

    let mut basis: Vec<ComplexState> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let y = solver.solve_adjoint(&q);
        let x = solver.solve(&project_h0_complex(op, kernel, &y));
        let mut r = project_h0_complex(op, kernel, &x);
        basis.push(q);
        // full reorthogonalization, twice
        let mut a_it = 0.0;
        for pass in 0..2 {
            for (j, b) in basis.iter().enumerate() {
                let c = inner_w(w, b, &r);
                if pass == 0 && j == basis.len() - 1 {
                    a_it = c.re;
                }
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= c * bi;
                }
            }
        }
        alpha.push(a_it);
        let b_next = weighted_norm(w, &r);

        let (theta, svec) = top_ritz(&alpha, &beta);
        let resid = b_next * svec.last().unwrap().abs();
        best = Some((theta, svec));
        if resid <= LANCZOS_TOL * theta || b_next <= 1e-300 || basis.len() == max_iter {
            break;
        }
        beta.push(b_next);
        r.iter_mut().for_each(|v| *v /= b_next);
        q = r;
    }
    let (theta, s) = best.expect("at least one iteration");
    let mut vector = vec![c64::new(0.0, 0.0); n];
    for (coef, b) in s.iter().zip(&basis) {
        for (v, bi) in vector.iter_mut().zip(b) {
            *v += bi * *coef;
        }
    }
    let nv = weighted_norm(w, &vector);
    vector.iter_mut().for_each(|v| *v /= nv);
    Ok(SigmaMin { sigma_min: 1.0 / theta.sqrt(), sigma_max, vector, iterations, dense: false })
}

fn inner_w(w: &[f64], a: &[c64], b: &[c64]) -> c64 {
    w.iter().zip(a).zip(b).map(|((c, x), y)| x.conj() * y * *c).sum()
}

/// Largest eigenpair of the symmetric tridiagonal Lanczos matrix.
fn top_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t.self_adjoint_eigen(faer::Side::Lower).expect("tridiagonal eigensolve");
    let s = eig.S().column_vector();
    let mut imax = 0;
    for i in 1..k {
        if s[i] > s[imax] {
            imax = i;
        }
    }
    let u = eig.U();
    (s[imax], (0..k).map(|i| u[(i, imax)]).collect())
}

fn check_singular(mu: f64, s: &SigmaMin) -> Result<()> {
    if !(s.sigma_min >= SINGULAR_THRESHOLD * s.sigma_max) {
        return Err(Error::SingularAtMu { mu, sigma_min: s.sigma_min, sigma_max: s.sigma_max });
    }
    Ok(())
}

pub fn resolvent_norm(op: &SystemOperator, kernel: &KernelBasis, mu: f64) -> Result<f64> {
    resolvent_norm_with(op, kernel, mu, ResolventRoute::default())
}

pub fn resolvent_norm_with(op: &SystemOperator, kernel: &KernelBasis, mu: f64, route: ResolventRoute) -> Result<f64> {
    let s = sigma_min(op, kernel, mu, route)?;
    check_singular(mu, &s)?;
    Ok(1.0 / s.sigma_min)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub mu: f64,
    /// `None` when the operator was singular at `mu` or the solve failed.
    pub norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    /// Largest finite norm; singular entries are listed in `singular_mus`.
    pub sup_norm: f64,
    pub argmax_mu: f64,
    pub cap: f64,
    pub singular_mus: Vec<f64>,
    /// `sup_norm <= cap` and every entry finite.
    pub verdict_bounded: bool,
}

impl SweepResult {
    pub fn mus(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mu).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.norm.unwrap_or(f64::INFINITY)).collect()
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.norm.is_none()).count()
    }
}

/// Inclusive uniform grid `mu_min, mu_min + step, ..., <= mu_max`.
pub fn mu_grid(mu_min: f64, mu_max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || mu_max < mu_min {
        return Vec::new();
    }
    let n = ((mu_max - mu_min) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| mu_min + k as f64 * step).collect()
}

pub fn resolvent_sweep(op: &SystemOperator, kernel: &KernelBasis, mus: &[f64], cap: f64) -> Result<SweepResult> {
    resolvent_sweep_with(op, kernel, mus, cap, ResolventRoute::default())
}

pub fn resolvent_sweep_with(
    op: &SystemOperator,
    kernel: &KernelBasis,
    mus: &[f64],
    cap: f64,
    route: ResolventRoute,
) -> Result<SweepResult> {
    if mus.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let entries: Vec<SweepEntry> = mus
        .par_iter()
        .map(|&mu| match resolvent_norm_with(op, kernel, mu, route) {
            Ok(n) => SweepEntry { mu, norm: Some(n), error: None },
            Err(e) => SweepEntry { mu, norm: None, error: Some(e.to_string()) },
        })
        .collect();
    let (mut sup, mut arg) = (0.0f64, f64::NAN);
    for e in &entries {
        if let Some(v) = e.norm {
            if v > sup {
                sup = v;
                arg = e.mu;
            }
        }
    }
    let singular_mus: Vec<f64> = entries.iter().filter(|e| e.norm.is_none()).map(|e| e.mu).collect();
    let verdict_bounded = sup <= cap && singular_mus.is_empty();
    Ok(SweepResult { entries, sup_norm: sup, argmax_mu: arg, cap, singular_mus, verdict_bounded })
}

/// Near-null vector of `A_d - i mu` on `H_0`, normalized so `||u|| + ||r|| = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct Quasimode {
    pub mu: f64,
    pub h: f64,
    #[serde(skip)]
    pub u: Vec<c64>,
    #[serde(skip)]
    pub r: Vec<c64>,
    /// `sigma_min = 1 / resolvent_norm`.
    pub sigma: f64,
    /// `||(A_d - i mu) Z||_H` for the normalized `Z`.
    pub defect: f64,
    pub norm_u: f64,
    pub norm_r: f64,
}

impl Quasimode {
    pub fn state(&self) -> ComplexState {
        self.u.iter().chain(&self.r).copied().collect()
    }
}

/// Unlike [`resolvent_norm`], an exact eigenvalue is not an error here: the
/// returned vector is then the eigenvector.
pub fn quasimode(op: &SystemOperator, kernel: &KernelBasis, mu: f64) -> Result<Quasimode> {
    quasimode_with(op, kernel, mu, ResolventRoute::default())
}

pub fn quasimode_with(op: &SystemOperator, kernel: &KernelBasis, mu: f64, route: ResolventRoute) -> Result<Quasimode> {
    let s = sigma_min(op, kernel, mu, route)?;
    let nf = op.n_faces();
    let w = op.weights();
    let mut z = s.vector;
    // fix the global phase at the largest pressure entry so output is reproducible
    if let Some(p) = z[nf..].iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
        if p.norm() > 0.0 {
            let ph = p.conj() / p.norm();
            z.iter_mut().for_each(|v| *v *= ph);
        }
    }
    let nu = weighted_norm(&w[..nf], &z[..nf]);
    let nr = weighted_norm(&w[nf..], &z[nf..]);
    let scale = nu + nr;
    z.iter_mut().for_each(|v| *v /= scale);
    let defect = norm_complex(op, &apply_shifted(op, mu, &z));
    let r = z.split_off(nf);
    Ok(Quasimode {
        mu,
        h: 1.0 / mu.abs(),
        u: z,
        r,
        sigma: s.sigma_min,
        defect,
        norm_u: nu / scale,
        norm_r: nr / scale,
    })
}

/// `| ||u||_H - ||r||_H |`.
pub fn equipartition_defect(op: &SystemOperator, qm: &Quasimode) -> f64 {
    let nf = op.n_faces();
    let w = op.weights();
    (weighted_norm(&w[..nf], &qm.u) - weighted_norm(&w[nf..], &qm.r)).abs()
}

/// `||sqrt(b) u||_H^2`.
pub fn damping_overlap(op: &SystemOperator, qm: &Quasimode) -> f64 {
    op.face_damping().iter().zip(op.face_weights()).zip(&qm.u).map(|((b, w), u)| b * w * u.norm_sqr()).sum()
}
