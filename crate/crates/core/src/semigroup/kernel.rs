//! Null space `E = ker A_d` and the orthogonal projection onto it.
//!
//! Two routes produce the same subspace:
//!
//! * dense: full SVD of the `H`-scaled operator, cut at `1e-10 * sigma_max`
//!   with an ambiguity band check;
//! * structural: `E` is the set of divergence-free face fields vanishing on
//!   damped faces, so `P_E u = Pi_F (u - G phi)` where `phi` solves a graph
//!   Laplacian over the undamped faces (one grounded cell per connected
//!   component). Its dimension is `#free faces - #cells + #components`.

use faer::sparse::{SparseColMat, Triplet};
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::discretization::SystemOperator;
use crate::error::{Error, Result};

/// Relative singular-value cut defining the numerical null space.
pub const KERNEL_THRESHOLD: f64 = 1e-10;
/// Singular values in `[1e-11, 1e-9] * sigma_max` make the cut ambiguous.
pub const AMBIGUITY_BAND: (f64, f64) = (1e-11, 1e-9);
/// Default largest `n_dof` handled by the dense SVD route.
pub const DEFAULT_DENSE_LIMIT: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelRoute {
    /// Dense SVD when `n_dof <= dense_limit`, structural projector otherwise.
    Auto { dense_limit: usize },
    Dense,
    Structural,
}

impl Default for KernelRoute {
    fn default() -> Self {
        KernelRoute::Auto { dense_limit: DEFAULT_DENSE_LIMIT }
    }
}

#[derive(Debug)]
pub struct KernelBasis {
    dim: usize,
    repr: Repr,
}

#[derive(Debug)]
enum Repr {
    Dense(DenseKernel),
    Structural(HodgeProjector),
}

#[derive(Debug)]
struct DenseKernel {
    /// `H`-orthonormal basis of `E` in state coordinates.
    basis: Mat<f64>,
    /// Euclidean-orthonormal basis of `H_0 = E^perp` (mean-zero pressures)
    /// in `W^{1/2}`-scaled coordinates.
    range_scaled: Mat<f64>,
    singular_values: Vec<f64>,
}

#[derive(Debug)]
struct HodgeProjector {
    free: Vec<bool>,
    grounded: Vec<bool>,
    solver: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl KernelBasis {
    pub fn compute(op: &SystemOperator) -> Result<Self> {
        Self::compute_with(op, KernelRoute::default())
    }

    pub fn compute_with(op: &SystemOperator, route: KernelRoute) -> Result<Self> {
        let dense = match route {
            KernelRoute::Auto { dense_limit } => op.n_dof() <= dense_limit,
            KernelRoute::Dense => true,
            KernelRoute::Structural => false,
        };
        if dense {
            dense_kernel(op)
        } else {
            structural_kernel(op)
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, Repr::Dense(_))
    }

    /// Explicit `H`-orthonormal basis (dense route only).
    pub fn basis(&self) -> Option<&Mat<f64>> {
        match &self.repr {
            Repr::Dense(d) => Some(&d.basis),
            Repr::Structural(_) => None,
        }
    }

    /// Orthonormal basis of `E^perp` in scaled coordinates (dense route only).
    pub fn range_scaled(&self) -> Option<&Mat<f64>> {
        match &self.repr {
            Repr::Dense(d) => Some(&d.range_scaled),
            Repr::Structural(_) => None,
        }
    }

    /// Singular values of the scaled operator (dense route only), descending.
    pub fn singular_values(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Dense(d) => Some(&d.singular_values),
            Repr::Structural(_) => None,
        }
    }

    /// Velocity part of `P_E z` (the pressure part of `P_E z` is zero).
    pub fn project_velocity(&self, op: &SystemOperator, z: &[f64]) -> Vec<f64> {
        let nf = op.n_faces();
        match &self.repr {
            Repr::Dense(d) => {
                let mut out = vec![0.0; nf];
                let w = op.weights();
                for k in 0..self.dim {
                    let q = d.basis.col(k);
                    let c: f64 = (0..op.n_dof()).map(|i| w[i] * q[i] * z[i]).sum();
                    for i in 0..nf {
                        out[i] += c * q[i];
                    }
                }
                out
            }
            Repr::Structural(h) => h.project(op, &z[..nf]),
        }
    }

    /// `(Z_E, Z - Z_E)` with `Z_E = P_E Z`.
    pub fn project(&self, op: &SystemOperator, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ze = self.project_velocity(op, z);
        ze.resize(op.n_dof(), 0.0);
        let rest = z.iter().zip(&ze).map(|(a, b)| a - b).collect();
        (ze, rest)
    }

    /// Orthogonal projection onto `H_0`: removes the kernel component and the
    /// pressure mean.
    pub fn project_h0(&self, op: &SystemOperator, z: &[f64]) -> Vec<f64> {
        let nf = op.n_faces();
        let pu = self.project_velocity(op, z);
        let mut out = Vec::with_capacity(op.n_dof());
        out.extend(z[..nf].iter().zip(&pu).map(|(a, b)| a - b));
        out.extend(op.mean_zero_project(&z[nf..]));
        out
    }
}

fn scaled_mean_direction(op: &SystemOperator) -> Vec<f64> {
    let nf = op.n_faces();
    let total: f64 = op.cell_weights().iter().sum();
    let mut e = vec![0.0; op.n_dof()];
    for (i, a) in op.cell_weights().iter().enumerate() {
        e[nf + i] = (a / total).sqrt();
    }
    e
}

fn dense_kernel(op: &SystemOperator) -> Result<KernelBasis> {
    let n = op.n_dof();
    let m = op.dense_scaled_ad();
    let svd = m.svd().map_err(|e| Error::SolverFailure(format!("dense SVD: {e:?}")))?;
    let s = svd.S().column_vector();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let smax = sigma[0].max(f64::MIN_POSITIVE);

    // Every operator has at least the constant-pressure direction in its
    // null space; only report ambiguity for the genuine cut.
    if let Some(pos) = sigma
        .iter()
        .position(|&v| v >= AMBIGUITY_BAND.0 * smax && v <= AMBIGUITY_BAND.1 * smax)
    {
        let above = sigma[..pos].iter().rev().find(|&&v| v > AMBIGUITY_BAND.1 * smax);
        let below = sigma[pos..].iter().find(|&&v| v < AMBIGUITY_BAND.0 * smax);
        let gap = match (above, below) {
            (Some(a), Some(b)) if *b > 0.0 => a / b,
            _ => f64::INFINITY,
        };
        return Err(Error::ThresholdAmbiguous { sigma: sigma[pos], relative: sigma[pos] / smax, gap });
    }

    let cut = KERNEL_THRESHOLD * smax;
    let v = svd.V();
    let null: Vec<usize> = order.iter().copied().filter(|&i| s[i] < cut).collect();
    let range: Vec<usize> = order.iter().copied().filter(|&i| s[i] >= cut).collect();

    // Null block contains E plus the constant-pressure direction; remove the
    // latter and re-orthonormalize.
    let e = scaled_mean_direction(op);
    let mut nb = Mat::<f64>::zeros(n, null.len());
    for (k, &j) in null.iter().enumerate() {
        let c: f64 = (0..n).map(|i| e[i] * v[(i, j)]).sum();
        for i in 0..n {
            nb[(i, k)] = v[(i, j)] - c * e[i];
        }
    }
    let basis_scaled = if null.is_empty() {
        Mat::<f64>::zeros(n, 0)
    } else {
        let nsvd = nb.thin_svd().map_err(|e| Error::SolverFailure(format!("null-space SVD: {e:?}")))?;
        let ns = nsvd.S().column_vector();
        let keep: Vec<usize> = (0..null.len()).filter(|&k| ns[k] > 0.5).collect();
        let u = nsvd.U();
        Mat::from_fn(n, keep.len(), |i, k| u[(i, keep[k])])
    };
    let dim = basis_scaled.ncols();
    let w = op.weights();
    let basis = Mat::from_fn(n, dim, |i, k| basis_scaled[(i, k)] / w[i].sqrt());
    let range_scaled = Mat::from_fn(n, range.len(), |i, k| v[(i, range[k])]);
    Ok(KernelBasis {
        dim,
        repr: Repr::Dense(DenseKernel { basis, range_scaled, singular_values: sigma }),
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn structural_kernel(op: &SystemOperator) -> Result<KernelBasis> {
    let nc = op.n_cells();
    let cut = KERNEL_THRESHOLD * op.norm_estimate();
    let free: Vec<bool> = op.face_damping().iter().map(|&b| b <= cut).collect();
    let mut uf = UnionFind::new(nc);
    for (f, face) in op.grid.faces.iter().enumerate() {
        if free[f] {
            uf.union(face.cells[0], face.cells[1]);
        }
    }
    let grounded: Vec<bool> = (0..nc).map(|c| uf.find(c) == c).collect();
    let components = grounded.iter().filter(|&&g| g).count();
    let n_free = free.iter().filter(|&&f| f).count();
    let dim = n_free + components - nc;

    let mut trips = Vec::with_capacity(4 * n_free + nc);
    for (f, face) in op.grid.faces.iter().enumerate() {
        if !free[f] {
            continue;
        }
        let c = face.length / face.dist;
        let [a, b] = face.cells;
        for (i, j, v) in [(a, a, c), (b, b, c), (a, b, -c), (b, a, -c)] {
            if !grounded[i] && !grounded[j] {
                trips.push(Triplet::new(i, j, v));
            }
        }
    }
    for (c, &g) in grounded.iter().enumerate() {
        if g {
            trips.push(Triplet::new(c, c, 1.0));
        }
    }
    let lap = SparseColMat::<usize, f64>::try_new_from_triplets(nc, nc, &trips)
        .map_err(|e| Error::SolverFailure(format!("Laplacian assembly: {e:?}")))?;
    let solver = lap
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::SolverFailure(format!("Laplacian factorization: {e:?}")))?;
    Ok(KernelBasis { dim, repr: Repr::Structural(HodgeProjector { free, grounded, solver }) })
}

impl HodgeProjector {
    fn project(&self, op: &SystemOperator, u: &[f64]) -> Vec<f64> {
        let nc = op.n_cells();
        let mut rhs = Mat::<f64>::zeros(nc, 1);
        for (f, face) in op.grid.faces.iter().enumerate() {
            if self.free[f] {
                let flux = face.length * u[f];
                rhs[(face.cells[0], 0)] -= flux;
                rhs[(face.cells[1], 0)] += flux;
            }
        }
        for (c, &g) in self.grounded.iter().enumerate() {
            if g {
                rhs[(c, 0)] = 0.0;
            }
        }
        self.solver.solve_in_place(rhs.as_mut());
        op.grid
            .faces
            .iter()
            .enumerate()
            .map(|(f, face)| {
                if self.free[f] {
                    u[f] - (rhs[(face.cells[1], 0)] - rhs[(face.cells[0], 0)]) / face.dist
                } else {
                    0.0
                }
            })
            .collect()
    }
}
