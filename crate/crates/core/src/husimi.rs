//! Coherent-state (Husimi) densities of pressure fields and the phase-space
//! diagnostics built on them.
//!
//! `H(x0, xi0) = |<f, phi_{x0,xi0}>|^2` with the normalized Gaussian
//! `phi = (pi h)^{-1/2} exp(-|x - x0|^2 / 2h) exp(i xi0 . x / h)`. For a fixed
//! `x0` all frequencies come from one FFT of the windowed field, `xi = h k`.
//! Masses use the resolution of identity `(2 pi h)^{-2} int H dx0 dxi = ||f||^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as c64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::discretization::{GridShape, SystemOperator};
use crate::error::{Error, Result};
use crate::semigroup::KernelBasis;
use crate::spectral::{self, Quasimode};

/// Default half-width of the shell `||xi|^2 - 1| <= delta`.
pub const DEFAULT_DELTA: f64 = 0.25;
/// Minimum points per semiclassical wavelength `2 pi h`.
pub const POINTS_PER_WAVELENGTH: f64 = 6.0;
/// Full 4-D densities are kept only up to this many points.
pub const FULL_GRID_LIMIT: usize = 16 * 16 * 16 * 16;

/// Complex samples on a uniform Cartesian patch, row-major (`j * nx + i`),
/// sample `(i, j)` sitting at `origin + (i dx, j dy)`.
#[derive(Debug, Clone)]
pub struct Patch {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: [f64; 2],
    /// Periodic in `x` and `y` respectively.
    pub periodic: [bool; 2],
    pub values: Vec<c64>,
}

impl Patch {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, values: Vec<c64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::ShapeMismatch { expected: nx * ny, got: values.len() });
        }
        if nx == 0 || ny == 0 || !(dx > 0.0 && dy > 0.0) {
            return Err(Error::ConfigInvalid { path: "patch".into(), message: "empty or degenerate patch".into() });
        }
        Ok(Self { nx, ny, dx, dy, origin: [0.0, 0.0], periodic: [false, false], values })
    }

    pub fn from_fn(nx: usize, ny: usize, dx: f64, dy: f64, f: impl Fn(f64, f64) -> c64) -> Self {
        let values = (0..nx * ny).map(|k| f((k % nx) as f64 * dx, (k / nx) as f64 * dy)).collect();
        Self { nx, ny, dx, dy, origin: [0.0, 0.0], periodic: [false, false], values }
    }

    pub fn with_periodic(mut self, px: bool, py: bool) -> Self {
        self.periodic = [px, py];
        self
    }

    /// Pressure field of the operator's grid. Cartesian grids map directly;
    /// annulus fields are unrolled to `(r_mean theta, r - r_in)`, periodic in
    /// the angular direction.
    pub fn from_cells(op: &SystemOperator, r: &[c64]) -> Result<Self> {
        if r.len() != op.n_cells() {
            return Err(Error::ShapeMismatch { expected: op.n_cells(), got: r.len() });
        }
        match op.grid.shape {
            GridShape::Cartesian { nx, ny, dx, dy } => Ok(Self {
                nx,
                ny,
                dx,
                dy,
                origin: [0.5 * dx, 0.5 * dy],
                periodic: [false, false],
                values: r.to_vec(),
            }),
            GridShape::Polar { nr, ntheta, dr, dtheta, r_in } => {
                let r_mean = r_in + 0.5 * nr as f64 * dr;
                // cell (i radial, j angular) is stored at j*nr + i
                let values = (0..nr * ntheta).map(|k| r[(k % ntheta) * nr + k / ntheta]).collect();
                Ok(Self {
                    nx: ntheta,
                    ny: nr,
                    dx: r_mean * dtheta,
                    dy: dr,
                    origin: [0.5 * r_mean * dtheta, 0.5 * dr],
                    periodic: [true, false],
                    values,
                })
            }
        }
    }

    pub fn lengths(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    /// `sum |f|^2 dx dy`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx * self.dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HusimiOptions {
    /// Evaluate at every `x0_stride`-th sample in each direction.
    pub x0_stride: usize,
    /// Keep the full `(x0, xi)` grid when it has at most [`FULL_GRID_LIMIT`] points.
    pub keep_full: bool,
}

impl Default for HusimiOptions {
    fn default() -> Self {
        Self { x0_stride: 1, keep_full: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HusimiDensity {
    pub h: f64,
    /// Centres `x0` evaluated, row-major `(n_x0x, n_x0y)`.
    pub n_x0: [usize; 2],
    pub x0_x: Vec<f64>,
    pub x0_y: Vec<f64>,
    /// Frequency axes `xi = h k`, ascending.
    pub xi_x: Vec<f64>,
    pub xi_y: Vec<f64>,
    /// Mass per frequency cell, row-major over `(xi_x, xi_y)`.
    pub xi_marginal: Vec<f64>,
    /// Mass per `x0` cell, row-major over `(x0_x, x0_y)`.
    pub x_marginal: Vec<f64>,
    pub total_mass: f64,
    pub min_value: f64,
    /// Masses indexed `[x0 index][xi index]` when small enough.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<Vec<Vec<f64>>>,
}

impl HusimiDensity {
    /// `xi` of the heaviest frequency cell.
    pub fn xi_argmax(&self) -> (f64, f64) {
        let k = argmax(&self.xi_marginal);
        let nxk = self.xi_x.len();
        (self.xi_x[k % nxk], self.xi_y[k / nxk])
    }

    /// `x0` of the heaviest centre.
    pub fn x_argmax(&self) -> (f64, f64) {
        let k = argmax(&self.x_marginal);
        (self.x0_x[k % self.n_x0[0]], self.x0_y[k / self.n_x0[0]])
    }

    pub fn x_argmax_index(&self) -> (usize, usize) {
        let k = argmax(&self.x_marginal);
        (k % self.n_x0[0], k / self.n_x0[0])
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

/// Unshifted FFT bin `m` to signed frequency index.
fn signed_bin(m: usize, n: usize) -> i64 {
    if m < n.div_ceil(2) {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Signed separation along one axis, minimal image when periodic.
fn offset(a: f64, b: f64, len: f64, periodic: bool) -> f64 {
    let d = a - b;
    if periodic {
        d - len * (d / len).round()
    } else {
        d
    }
}

struct Plans {
    x: Arc<dyn Fft<f64>>,
    y: Arc<dyn Fft<f64>>,
}

fn fft2(plans: &Plans, data: &mut [c64], nx: usize, ny: usize) {
    for row in data.chunks_mut(nx) {
        plans.x.process(row);
    }
    let mut col = vec![c64::new(0.0, 0.0); ny];
    for i in 0..nx {
        for j in 0..ny {
            col[j] = data[j * nx + i];
        }
        plans.y.process(&mut col);
        for j in 0..ny {
            data[j * nx + i] = col[j];
        }
    }
}

pub fn husimi_transform(patch: &Patch, h: f64, opts: HusimiOptions) -> Result<HusimiDensity> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::ConfigInvalid { path: "h".into(), message: "must be > 0".into() });
    }
    let limit = 2.0 * PI * h / POINTS_PER_WAVELENGTH;
    let spacing = patch.dx.max(patch.dy);
    if spacing > limit {
        return Err(Error::ResolutionGuard { spacing, limit });
    }
    let (nx, ny) = (patch.nx, patch.ny);
    let (lx, ly) = patch.lengths();
    let stride = opts.x0_stride.max(1);
    let x0i: Vec<usize> = (0..nx).step_by(stride).collect();
    let x0j: Vec<usize> = (0..ny).step_by(stride).collect();
    let x0_x: Vec<f64> = x0i.iter().map(|&i| patch.origin[0] + i as f64 * patch.dx).collect();
    let x0_y: Vec<f64> = x0j.iter().map(|&j| patch.origin[1] + j as f64 * patch.dy).collect();
    let dx0 = (stride as f64 * patch.dx) * (stride as f64 * patch.dy);

    let mut planner = FftPlanner::<f64>::new();
    let plans = Plans { x: planner.plan_fft_forward(nx), y: planner.plan_fft_forward(ny) };
    let norm = 1.0 / (PI * h).sqrt();
    let cell = patch.dx * patch.dy;
    let scale = 1.0 / (lx * ly);

    // Window values per axis, reused for every centre.
    let window = |n: usize, d: f64, len: f64, periodic: bool, c: usize| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let o = offset(k as f64 * d, c as f64 * d, len, periodic);
                (-o * o / (2.0 * h)).exp()
            })
            .collect()
    };

    let centres: Vec<(usize, usize)> =
        x0j.iter().flat_map(|&j| x0i.iter().map(move |&i| (i, j))).collect();
    let rows: Vec<Vec<f64>> = centres
        .par_iter()
        .map(|&(ci, cj)| {
            let wx = window(nx, patch.dx, lx, patch.periodic[0], ci);
            let wy = window(ny, patch.dy, ly, patch.periodic[1], cj);
            let mut buf: Vec<c64> = patch
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v * (norm * cell * wx[k % nx] * wy[k / nx]))
                .collect();
            fft2(&plans, &mut buf, nx, ny);
            buf.iter().map(|f| f.norm_sqr() * scale).collect()
        })
        .collect();

    // reorder frequency bins ascending
    let order_x: Vec<usize> = {
        let mut o: Vec<usize> = (0..nx).collect();
        o.sort_by_key(|&m| signed_bin(m, nx));
        o
    };
    let order_y: Vec<usize> = {
        let mut o: Vec<usize> = (0..ny).collect();
        o.sort_by_key(|&m| signed_bin(m, ny));
        o
    };
    let xi_x: Vec<f64> = order_x.iter().map(|&m| h * 2.0 * PI * signed_bin(m, nx) as f64 / lx).collect();
    let xi_y: Vec<f64> = order_y.iter().map(|&m| h * 2.0 * PI * signed_bin(m, ny) as f64 / ly).collect();

    let mut xi_marginal = vec![0.0; nx * ny];
    let mut x_marginal = Vec::with_capacity(rows.len());
    let mut min_value = f64::INFINITY;
    for row in &rows {
        let mut sum = 0.0;
        for (b, &my) in order_y.iter().enumerate() {
            for (a, &mx) in order_x.iter().enumerate() {
                let v = row[my * nx + mx];
                xi_marginal[b * nx + a] += v * dx0;
                sum += v;
                min_value = min_value.min(v);
            }
        }
        x_marginal.push(sum * dx0);
    }
    let total_mass = x_marginal.iter().sum();
    let full = (opts.keep_full && rows.len() * nx * ny <= FULL_GRID_LIMIT).then(|| {
        rows.iter()
            .map(|row| {
                order_y.iter().flat_map(|&my| order_x.iter().map(move |&mx| row[my * nx + mx])).collect()
            })
            .collect()
    });
    Ok(HusimiDensity {
        h,
        n_x0: [x0i.len(), x0j.len()],
        x0_x,
        x0_y,
        xi_x,
        xi_y,
        xi_marginal,
        x_marginal,
        total_mass,
        min_value,
        full,
    })
}

/// Fraction of mass with `||xi|^2 - 1| > delta`.
pub fn shell_mass_defect(density: &HusimiDensity, delta: f64) -> Result<f64> {
    if !(density.total_mass >= 1e-30) {
        return Err(Error::ZeroMass);
    }
    let nxk = density.xi_x.len();
    let off: f64 = density
        .xi_marginal
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let (a, b) = (density.xi_x[k % nxk], density.xi_y[k / nxk]);
            (a * a + b * b - 1.0).abs() > delta
        })
        .map(|(_, v)| v)
        .sum();
    Ok((off / density.total_mass).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct HusimiSummary {
    pub mu: f64,
    pub h: f64,
    pub shell_mass_defect: f64,
    pub damping_overlap: f64,
    pub equipartition_defect: f64,
    pub total_mass: f64,
    pub sigma: f64,
    pub norm_u: f64,
    pub norm_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanOptions {
    pub delta: f64,
    pub husimi: HusimiOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { delta: DEFAULT_DELTA, husimi: HusimiOptions::default() }
    }
}

pub fn summarize(op: &SystemOperator, qm: &Quasimode, opts: ScanOptions) -> Result<HusimiSummary> {
    let patch = Patch::from_cells(op, &qm.r)?;
    let density = husimi_transform(&patch, qm.h, opts.husimi)?;
    Ok(HusimiSummary {
        mu: qm.mu,
        h: qm.h,
        shell_mass_defect: shell_mass_defect(&density, opts.delta)?,
        damping_overlap: spectral::damping_overlap(op, qm),
        equipartition_defect: spectral::equipartition_defect(op, qm),
        total_mass: density.total_mass,
        sigma: qm.sigma,
        norm_u: qm.norm_u,
        norm_r: qm.norm_r,
    })
}

/// One summary per `mu`, in input order; failures are reported per entry.
pub fn measure_scan(
    op: &SystemOperator,
    kernel: &KernelBasis,
    mus: &[f64],
    opts: ScanOptions,
) -> Result<Vec<Result<HusimiSummary>>> {
    if mus.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if mus.iter().any(|m| !(*m > 0.0)) || mus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ConfigInvalid {
            path: "mu_list".into(),
            message: "must be positive and increasing".into(),
        });
    }
    Ok(mus
        .par_iter()
        .map(|&mu| {
            let qm = spectral::quasimode(op, kernel, mu)?;
            summarize(op, &qm, opts)
        })
        .collect())
}
