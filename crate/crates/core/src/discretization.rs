//! Staggered (MAC-style) discretization of the damped acoustic system.
//!
//! Pressures `r` live at cell centres, normal velocities `u` on interior
//! faces. Boundary faces carry no unknown, which encodes `u . n = 0`
//! strongly. The divergence is defined as the negative weighted adjoint of
//! the gradient, `V = -W_r^{-1} G^T W_u`, so discrete integration by parts
//! holds to rounding and the operator `A = (0 G; V 0)` is skew-adjoint in the
//! lumped `H` inner product.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use faer::Mat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DampingField, Domain, Vec2};

pub const MIN_RESOLUTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridShape {
    /// `nx x ny` cells of size `dx x dy` covering `[0,lx] x [0,ly]`.
    Cartesian { nx: usize, ny: usize, dx: f64, dy: f64 },
    /// `nr x ntheta` polar cells, periodic in angle.
    Polar { nr: usize, ntheta: usize, dr: f64, dtheta: f64, r_in: f64 },
}

/// An interior face between cells `cells[0]` and `cells[1]`; the velocity
/// unknown is oriented from the first cell to the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub cells: [usize; 2],
    pub center: Vec2,
    pub normal: Vec2,
    /// Face length (flux area).
    pub length: f64,
    /// Distance between the two cell centres.
    pub dist: f64,
    /// Lumped measure attached to the face, `length * dist`.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub domain: Domain,
    pub shape: GridShape,
    pub cell_centers: Vec<Vec2>,
    pub cell_areas: Vec<f64>,
    pub faces: Vec<Face>,
}

impl Grid {
    pub fn new(domain: Domain, resolution: [usize; 2]) -> Result<Self> {
        domain.validate()?;
        let min = resolution[0].min(resolution[1]);
        if min < MIN_RESOLUTION {
            return Err(Error::ResolutionTooCoarse { got: min, min: MIN_RESOLUTION });
        }
        match domain {
            Domain::Rectangle { lx, ly } => Ok(Self::cartesian(domain, lx, ly, resolution)),
            Domain::Annulus { r_in, r_out } => Ok(Self::polar(domain, r_in, r_out, resolution)),
            Domain::Disk { .. } => Err(Error::UnsupportedDomain("disk")),
        }
    }

    fn cartesian(domain: Domain, lx: f64, ly: f64, [nx, ny]: [usize; 2]) -> Self {
        let (dx, dy) = (lx / nx as f64, ly / ny as f64);
        let cell = |i: usize, j: usize| j * nx + i;
        let mut cell_centers = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                cell_centers.push(Vec2::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy));
            }
        }
        let cell_areas = vec![dx * dy; nx * ny];
        let mut faces = Vec::with_capacity((nx - 1) * ny + nx * (ny - 1));
        for j in 0..ny {
            for i in 0..nx - 1 {
                faces.push(Face {
                    cells: [cell(i, j), cell(i + 1, j)],
                    center: Vec2::new((i + 1) as f64 * dx, (j as f64 + 0.5) * dy),
                    normal: Vec2::new(1.0, 0.0),
                    length: dy,
                    dist: dx,
                    weight: dx * dy,
                });
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                faces.push(Face {
                    cells: [cell(i, j), cell(i, j + 1)],
                    center: Vec2::new((i as f64 + 0.5) * dx, (j + 1) as f64 * dy),
                    normal: Vec2::new(0.0, 1.0),
                    length: dx,
                    dist: dy,
                    weight: dx * dy,
                });
            }
        }
        Grid {
            domain,
            shape: GridShape::Cartesian { nx, ny, dx, dy },
            cell_centers,
            cell_areas,
            faces,
        }
    }

    fn polar(domain: Domain, r_in: f64, r_out: f64, [nr, nt]: [usize; 2]) -> Self {
        let dr = (r_out - r_in) / nr as f64;
        let dt = 2.0 * PI / nt as f64;
        let cell = |i: usize, j: usize| j * nr + i;
        let radius = |i: usize| r_in + (i as f64 + 0.5) * dr;
        let mut cell_centers = Vec::with_capacity(nr * nt);
        let mut cell_areas = Vec::with_capacity(nr * nt);
        for j in 0..nt {
            let th = (j as f64 + 0.5) * dt;
            for i in 0..nr {
                cell_centers.push(Vec2::from_angle(th) * radius(i));
                // exact polar cell area: (r_{i+1}^2 - r_i^2) dtheta / 2 = r_mid dr dtheta
                cell_areas.push(radius(i) * dr * dt);
            }
        }
        let mut faces = Vec::with_capacity((nr - 1) * nt + nr * nt);
        for j in 0..nt {
            let th = (j as f64 + 0.5) * dt;
            for i in 0..nr - 1 {
                let rf = r_in + (i + 1) as f64 * dr;
                faces.push(Face {
                    cells: [cell(i, j), cell(i + 1, j)],
                    center: Vec2::from_angle(th) * rf,
                    normal: Vec2::from_angle(th),
                    length: rf * dt,
                    dist: dr,
                    weight: rf * dt * dr,
                });
            }
        }
        for j in 0..nt {
            let th = (j + 1) as f64 * dt;
            for i in 0..nr {
                let rc = radius(i);
                faces.push(Face {
                    cells: [cell(i, j), cell(i, (j + 1) % nt)],
                    center: Vec2::from_angle(th) * rc,
                    normal: Vec2::from_angle(th).perp(),
                    length: dr,
                    dist: rc * dt,
                    weight: rc * dt * dr,
                });
            }
        }
        Grid {
            domain,
            shape: GridShape::Polar { nr, ntheta: nt, dr, dtheta: dt, r_in },
            cell_centers,
            cell_areas,
            faces,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cell_centers.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn total_area(&self) -> f64 {
        self.cell_areas.iter().sum()
    }

    /// Largest face-to-face spacing, used for resolution guards.
    pub fn max_spacing(&self) -> f64 {
        match self.shape {
            GridShape::Cartesian { dx, dy, .. } => dx.max(dy),
            GridShape::Polar { dr, dtheta, r_in, nr, .. } => {
                dr.max((r_in + nr as f64 * dr) * dtheta)
            }
        }
    }
}

/// Discrete state `Z = (u, r)`: face velocities followed by cell pressures.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub data: Vec<f64>,
    n_faces: usize,
}

impl StateVector {
    pub fn zeros(op: &SystemOperator) -> Self {
        Self { data: vec![0.0; op.n_dof()], n_faces: op.n_faces() }
    }

    pub fn from_parts(op: &SystemOperator, u: &[f64], r: &[f64]) -> Result<Self> {
        check_len(op.n_faces(), u.len())?;
        check_len(op.n_cells(), r.len())?;
        let mut data = Vec::with_capacity(op.n_dof());
        data.extend_from_slice(u);
        data.extend_from_slice(r);
        Ok(Self { data, n_faces: op.n_faces() })
    }

    pub fn from_vec(op: &SystemOperator, data: Vec<f64>) -> Result<Self> {
        check_len(op.n_dof(), data.len())?;
        Ok(Self { data, n_faces: op.n_faces() })
    }

    pub fn u(&self) -> &[f64] {
        &self.data[..self.n_faces]
    }

    pub fn r(&self) -> &[f64] {
        &self.data[self.n_faces..]
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.data[..self.n_faces]
    }

    pub fn r_mut(&mut self) -> &mut [f64] {
        &mut self.data[self.n_faces..]
    }

    /// White-noise state with mean-zero pressure.
    pub fn random(op: &SystemOperator, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..op.n_dof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut z = Self { data, n_faces: op.n_faces() };
        let r = op.mean_zero_project(z.r());
        z.r_mut().copy_from_slice(&r);
        z
    }

    /// Smooth seeded initial datum: a few Gaussian pressure pulses plus a
    /// smooth velocity field made of Gaussian vortices and sources, sampled
    /// as normal components on faces.
    pub fn smooth_random(op: &SystemOperator, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domain = op.grid.domain;
        let (lo, hi) = domain.bounding_box();
        let diam = domain.diameter();
        let width = 0.08 * diam;
        let sample_point = |rng: &mut ChaCha8Rng| loop {
            let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            if domain.boundary_distance(p) > 2.0 * width {
                return p;
            }
        };
        let pulses: Vec<(Vec2, f64)> =
            (0..3).map(|_| (sample_point(&mut rng), rng.gen_range(-1.0..1.0))).collect();
        let vortices: Vec<(Vec2, f64, f64)> = (0..3)
            .map(|_| (sample_point(&mut rng), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let gauss = |p: Vec2, c: Vec2| (-(p - c).norm_sq() / (2.0 * width * width)).exp();
        let r: Vec<f64> = op
            .grid
            .cell_centers
            .iter()
            .map(|&p| pulses.iter().map(|&(c, a)| a * gauss(p, c)).sum())
            .collect();
        let u: Vec<f64> = op
            .grid
            .faces
            .iter()
            .map(|f| {
                vortices
                    .iter()
                    .map(|&(c, swirl, source)| {
                        let d = (f.center - c) * (1.0 / width);
                        let field = d.perp() * swirl + d * source;
                        field.dot(f.normal) * gauss(f.center, c)
                    })
                    .sum()
            })
            .collect();
        let r = op.mean_zero_project(&r);
        Self::from_parts(op, &u, &r).expect("lengths match by construction")
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}

/// Assembled discrete system: grid, face damping and `H` weights.
#[derive(Debug)]
pub struct SystemOperator {
    pub grid: Grid,
    pub damping: DampingField,
    /// `b` sampled at face centres (the diagonal of `BB*` on `u`).
    face_damping: Vec<f64>,
    /// Diagonal `H` weights, faces then cells.
    weights: Vec<f64>,
    norm_estimate: OnceLock<f64>,
}

impl SystemOperator {
    pub fn assemble(domain: Domain, resolution: [usize; 2], damping: DampingField) -> Result<Self> {
        damping.validate()?;
        let grid = Grid::new(domain, resolution)?;
        let face_damping = grid.faces.iter().map(|f| damping.eval(&domain, f.center)).collect();
        let mut weights: Vec<f64> = grid.faces.iter().map(|f| f.weight).collect();
        weights.extend_from_slice(&grid.cell_areas);
        Ok(Self { grid, damping, face_damping, weights, norm_estimate: OnceLock::new() })
    }

    pub fn n_faces(&self) -> usize {
        self.grid.n_faces()
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn n_dof(&self) -> usize {
        self.n_faces() + self.n_cells()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn face_weights(&self) -> &[f64] {
        &self.weights[..self.n_faces()]
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.weights[self.n_faces()..]
    }

    pub fn face_damping(&self) -> &[f64] {
        &self.face_damping
    }

    /// `(G r)_f = (r_{c1} - r_{c0}) / dist_f`.
    pub fn grad(&self, r: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.grid.faces) {
            *o = (r[f.cells[1]] - r[f.cells[0]]) / f.dist;
        }
    }

    /// `(V u)_c`: net outward flux of `u` through the faces of `c` over its area.
    pub fn div(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&uf, f) in u.iter().zip(&self.grid.faces) {
            let flux = f.length * uf;
            out[f.cells[0]] += flux;
            out[f.cells[1]] -= flux;
        }
        for (o, a) in out.iter_mut().zip(&self.grid.cell_areas) {
            *o /= a;
        }
    }

    /// `A z = (G r, V u)`.
    pub fn apply_a(&self, z: &[f64]) -> Vec<f64> {
        let nf = self.n_faces();
        let mut out = vec![0.0; self.n_dof()];
        let (ou, or) = out.split_at_mut(nf);
        self.grad(&z[nf..], ou);
        self.div(&z[..nf], or);
        out
    }

    /// `A_d z = -A z - D z`.
    pub fn apply_ad(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.apply_a(z);
        for (i, o) in out.iter_mut().enumerate() {
            *o = -*o;
            if i < self.n_faces() {
                *o -= self.face_damping[i] * z[i];
            }
        }
        out
    }

    pub fn inner(&self, z: &[f64], w: &[f64]) -> Result<f64> {
        check_len(self.n_dof(), z.len())?;
        check_len(self.n_dof(), w.len())?;
        Ok(self.weights.iter().zip(z).zip(w).map(|((c, a), b)| c * a * b).sum())
    }

    pub fn norm(&self, z: &[f64]) -> f64 {
        self.inner(z, z).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    /// `||sqrt(b) u||_H^2` for the velocity part of `z`.
    pub fn damping_form(&self, z: &[f64]) -> f64 {
        self.face_damping
            .iter()
            .zip(self.face_weights())
            .zip(z)
            .map(|((b, w), u)| b * w * u * u)
            .sum()
    }

    /// Area-weighted mean of `r`.
    pub fn weighted_mean(&self, r: &[f64]) -> f64 {
        let a = &self.grid.cell_areas;
        r.iter().zip(a).map(|(v, w)| v * w).sum::<f64>() / a.iter().sum::<f64>()
    }

    /// `r - (sum a_i r_i / sum a_i)`.
    pub fn mean_zero_project(&self, r: &[f64]) -> Vec<f64> {
        let m = self.weighted_mean(r);
        r.iter().map(|v| v - m).collect()
    }

    /// Coordinate triplets `(row, col, value)` of `A` in state ordering.
    pub fn a_triplets(&self) -> Vec<(usize, usize, f64)> {
        let nf = self.n_faces();
        let mut t = Vec::with_capacity(4 * nf);
        for (fi, f) in self.grid.faces.iter().enumerate() {
            t.push((fi, nf + f.cells[0], -1.0 / f.dist));
            t.push((fi, nf + f.cells[1], 1.0 / f.dist));
            t.push((nf + f.cells[0], fi, f.length / self.grid.cell_areas[f.cells[0]]));
            t.push((nf + f.cells[1], fi, -f.length / self.grid.cell_areas[f.cells[1]]));
        }
        t
    }

    /// Writes `A`, the damping diagonal `D` and the weights `W` as
    /// whitespace-separated triplets with a one-line header each.
    pub fn dump_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# A n={} nnz={}", self.n_dof(), 4 * self.n_faces())?;
        for (i, j, v) in self.a_triplets() {
            writeln!(out, "{i} {j} {v:.16e}")?;
        }
        writeln!(out, "# D n={}", self.n_dof())?;
        for (i, b) in self.face_damping.iter().enumerate() {
            writeln!(out, "{i} {i} {b:.16e}")?;
        }
        writeln!(out, "# W n={}", self.n_dof())?;
        for (i, w) in self.weights.iter().enumerate() {
            writeln!(out, "{i} {i} {w:.16e}")?;
        }
        Ok(())
    }

    /// Dense `W^{1/2} A_d W^{-1/2}`: the damped operator in coordinates where
    /// the `H` inner product is Euclidean.
    pub fn dense_scaled_ad(&self) -> Mat<f64> {
        let n = self.n_dof();
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut m = Mat::<f64>::zeros(n, n);
        for (i, j, v) in self.a_triplets() {
            m[(i, j)] -= sw[i] * v / sw[j];
        }
        for (i, b) in self.face_damping.iter().enumerate() {
            m[(i, i)] -= b;
        }
        m
    }

    /// Cheap upper estimate of `||A_d||_H` (power iteration on `A_d^* A_d`,
    /// inflated by 5%). Cached after first use.
    pub fn norm_estimate(&self) -> f64 {
        *self.norm_estimate.get_or_init(|| {
            let mut z = StateVector::random(self, 0x5eed).data;
            let mut lambda = 0.0;
            for _ in 0..60 {
                let nz = self.norm(&z);
                z.iter_mut().for_each(|v| *v /= nz);
                let y = self.apply_ad(&z);
                // A_d^* = A - D in the H inner product
                let mut w = self.apply_a(&y);
                for i in 0..self.n_faces() {
                    w[i] -= self.face_damping[i] * y[i];
                }
                lambda = self.inner(&z, &w).unwrap_or(0.0);
                z = w;
            }
            1.05 * lambda.max(0.0).sqrt()
        })
    }
}
