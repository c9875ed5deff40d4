//! One function per subcommand. Each writes its CSV files, fills the summary
//! and returns the verdict string when the subcommand produces one.

use std::time::Instant;

use acoustolab::husimi::{measure_scan, HusimiOptions, ScanOptions};
use acoustolab::rays::{gcc_check_with, sample_phase_points, trace_generalized, GeneralizedRay, Termination};
use acoustolab::semigroup::{evolve_with, fit_decay, EvolveOptions};
use acoustolab::spectral::{damping_overlap, equipartition_defect, mu_grid, resolvent_sweep as sweep};
use acoustolab::{quasimode as compute_quasimode, KernelBasis, StateVector, SystemOperator};
use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde_json::json;

use crate::output::{num, CsvOut, Summary};
use crate::RunContext;

type Verdict = anyhow::Result<Option<String>>;

fn block<'a, T>(block: &'a Option<T>, name: &str) -> anyhow::Result<&'a T> {
    block.as_ref().ok_or_else(|| anyhow!("invalid configuration at `{name}`: block is required for this subcommand"))
}

fn assemble(ctx: &RunContext, summary: &mut Summary) -> anyhow::Result<SystemOperator> {
    let t0 = Instant::now();
    let cfg = &ctx.config;
    let op = SystemOperator::assemble(cfg.domain, cfg.require_resolution()?, cfg.damping.clone())?;
    summary.set("n_dof", op.n_dof());
    summary.set("n_faces", op.n_faces());
    summary.set("n_cells", op.n_cells());
    if ctx.dump_matrix {
        write_matrix(ctx, &op, summary)?;
    }
    summary.timing("assemble", t0);
    Ok(op)
}

fn kernel(op: &SystemOperator, summary: &mut Summary) -> anyhow::Result<KernelBasis> {
    let t0 = Instant::now();
    let k = KernelBasis::compute(op)?;
    summary.set("kernel_dim", k.dim());
    summary.set("kernel_route", if k.is_dense() { "dense" } else { "structural" });
    summary.timing("kernel", t0);
    Ok(k)
}

fn write_matrix(ctx: &RunContext, op: &SystemOperator, summary: &mut Summary) -> anyhow::Result<()> {
    let path = ctx.out.join("matrix.txt");
    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    op.dump_triplets(&mut w)?;
    std::io::Write::flush(&mut w)?;
    summary.file("matrix.txt");
    Ok(())
}

pub fn simulate(ctx: &RunContext, summary: &mut Summary) -> Verdict {
    let sim = block(&ctx.config.simulate, "simulate")?;
    let op = assemble(ctx, summary)?;
    let k = kernel(&op, summary)?;
    let z0 = match sim.initial.as_str() {
        "random" => StateVector::random(&op, sim.seed),
        _ => StateVector::smooth_random(&op, sim.seed),
    };
    let t0 = Instant::now();
    let traj =
        evolve_with(&op, &z0, sim.t_final, sim.dt, EvolveOptions { sample_every: sim.sample_every, kernel: Some(&k) })?;
    summary.timing("evolve", t0);

    let mut csv = CsvOut::create(&ctx.out, "trajectory.csv", &["t", "E", "Q", "residual"])?;
    for i in 0..traj.times.len() {
        csv.row([
            num(traj.times[i]),
            num(traj.energies[i]),
            num(traj.damping_integrals[i]),
            num(traj.residual_norms[i]),
        ])?;
    }
    csv.finish()?;
    summary.file("trajectory.csv");

    let e0 = traj.initial_energy();
    summary.set("steps", (sim.t_final / sim.dt).round() as usize);
    summary.set("initial_energy", e0);
    summary.set("final_energy", traj.energies.last().copied());
    summary.set("energy_identity_residual_max", traj.energy_identity_residual_max());
    summary.set("max_energy_increase", traj.max_energy_increase());
    summary.set("max_energy_drift", traj.max_energy_drift());
    summary.set("max_kernel_drift", traj.max_kernel_drift());
    match fit_decay(&traj, sim.window_fraction) {
        Ok(f) => summary.set(
            "decay_fit",
            json!({ "C": f.amplitude, "c": f.rate, "r_squared": f.r_squared, "points": f.points }),
        ),
        Err(e) => summary.set("decay_fit", json!({ "error": e.to_string() })),
    }
    Ok(None)
}

pub fn resolvent_sweep(ctx: &RunContext, summary: &mut Summary) -> Verdict {
    let sw = block(&ctx.config.sweep, "sweep")?;
    let op = assemble(ctx, summary)?;
    let k = kernel(&op, summary)?;
    let mus = mu_grid(sw.mu_min, sw.mu_max, sw.mu_step);
    let t0 = Instant::now();
    let res = sweep(&op, &k, &mus, sw.cap)?;
    summary.timing("sweep", t0);

    let mut csv = CsvOut::create(&ctx.out, "sweep.csv", &["mu", "norm"])?;
    for e in &res.entries {
        csv.row([num(e.mu), e.norm.map_or_else(|| "inf".to_string(), num)])?;
    }
    csv.finish()?;
    summary.file("sweep.csv");

    let failures: Vec<_> =
        res.entries.iter().filter_map(|e| e.error.as_ref().map(|m| json!({ "mu": e.mu, "error": m }))).collect();
    summary.set("grid_size", mus.len());
    summary.set("sup_norm", res.sup_norm);
    summary.set("argmax_mu", res.argmax_mu);
    summary.set("cap", res.cap);
    summary.set("verdict_bounded", res.verdict_bounded);
    summary.set("singular_mus", &res.singular_mus);
    summary.set("failures", failures);
    Ok(Some(if res.verdict_bounded { "bounded" } else { "unbounded" }.to_string()))
}

pub fn quasimode(ctx: &RunContext, summary: &mut Summary) -> Verdict {
    let q = block(&ctx.config.quasimode, "quasimode")?;
    let op = assemble(ctx, summary)?;
    let k = kernel(&op, summary)?;
    let t0 = Instant::now();
    let qm = compute_quasimode(&op, &k, q.mu)?;
    summary.timing("quasimode", t0);

    let mut csv = CsvOut::create(&ctx.out, "quasimode.csv", &["kind", "index", "x", "y", "re", "im"])?;
    for (i, (f, v)) in op.grid.faces.iter().zip(&qm.u).enumerate() {
        csv.row(["u".to_string(), i.to_string(), num(f.center.x), num(f.center.y), num(v.re), num(v.im)])?;
    }
    for (i, (c, v)) in op.grid.cell_centers.iter().zip(&qm.r).enumerate() {
        csv.row(["r".to_string(), i.to_string(), num(c.x), num(c.y), num(v.re), num(v.im)])?;
    }
    csv.finish()?;
    summary.file("quasimode.csv");

    summary.set("quasimode", &qm);
    summary.set("equipartition_defect", equipartition_defect(&op, &qm));
    summary.set("damping_overlap", damping_overlap(&op, &qm));
    Ok(None)
}

fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::MaxTime => "max_time",
        Termination::Corner => "corner",
        Termination::InfiniteOrder => "infinite_order",
        Termination::EventLimit => "event_limit",
    }
}

pub fn rays(ctx: &RunContext, summary: &mut Summary) -> Verdict {
    let rc = block(&ctx.config.rays, "rays")?;
    let domain = ctx.config.domain;
    let t0 = Instant::now();
    let starts = sample_phase_points(&domain, rc.samples, rc.seed, rc.boundary_fraction);
    let rays: Vec<GeneralizedRay> =
        starts.par_iter().map(|&p| trace_generalized(&domain, p, rc.s_max)).collect::<Result<_, _>>()?;
    summary.timing("trace", t0);

    let mut csv = CsvOut::create(&ctx.out, "rays.csv", &["ray", "s", "x", "y", "event"])?;
    let mut terminations = std::collections::BTreeMap::<&str, usize>::new();
    let mut events = 0;
    for (i, ray) in rays.iter().enumerate() {
        for (s, x, label) in ray.polyline(rc.glide_points) {
            csv.row([i.to_string(), num(s), num(x.x), num(x.y), label.to_string()])?;
        }
        *terminations.entry(termination_label(ray.terminated)).or_default() += 1;
        events += ray.events.len();
    }
    csv.finish()?;
    summary.file("rays.csv");
    summary.set("rays", rays.len());
    summary.set("events", events);
    summary.set("terminations", terminations);
    Ok(None)
}

/// Witness rays kept in the summary; the CSV lists every sample.
const MAX_WITNESSES: usize = 20;

pub fn gcc(ctx: &RunContext, summary: &mut Summary) -> Verdict {
    let gc = block(&ctx.config.gcc, "gcc")?;
    let region = ctx.config.control_region();
    let t0 = Instant::now();
    let report = gcc_check_with(&ctx.config.domain, &region, gc.options())?;
    summary.timing("gcc", t0);

    let mut csv = CsvOut::create(&ctx.out, "gcc_samples.csv", &["sample", "x", "y", "xi_x", "xi_y", "entry_time", "excluded"])?;
    for (i, s) in report.samples.iter().enumerate() {
        csv.row([
            i.to_string(),
            num(s.start.x.x),
            num(s.start.x.y),
            num(s.start.xi.x),
            num(s.start.xi.y),
            s.entry_time.map_or_else(String::new, num),
            s.excluded.map_or("", termination_label).to_string(),
        ])?;
    }
    csv.finish()?;
    summary.file("gcc_samples.csv");

    summary.set("region", &region);
    summary.set("options", report.options);
    summary.set("samples_total", report.samples_total);
    summary.set("satisfied", report.satisfied);
    summary.set("worst_escape_time", report.worst_escape_time);
    summary.set("violating", report.violating_rays.len());
    summary.set("witnesses", &report.violating_rays[..report.violating_rays.len().min(MAX_WITNESSES)]);
    summary.set(
        "excluded",
        json!({
            "corner": report.excluded_corner,
            "infinite_order": report.excluded_infinite_order,
            "event_limit": report.excluded_event_limit,
        }),
    );
    Ok(Some(report.verdict.as_str().to_string()))
}

pub fn husimi(ctx: &RunContext, summary: &mut Summary) -> Verdict {
    let hc = block(&ctx.config.husimi, "husimi")?;
    let op = assemble(ctx, summary)?;
    let k = kernel(&op, summary)?;
    let opts = ScanOptions { delta: hc.delta, husimi: HusimiOptions { x0_stride: hc.x0_stride, keep_full: false } };
    let t0 = Instant::now();
    let scan = measure_scan(&op, &k, &hc.mu_list, opts)?;
    summary.timing("scan", t0);

    let header = [
        "mu",
        "h",
        "shell_mass_defect",
        "damping_overlap",
        "equipartition_defect",
        "total_mass",
        "sigma",
        "norm_u",
        "norm_r",
    ];
    let mut csv = CsvOut::create(&ctx.out, "husimi.csv", &header)?;
    let mut failures = Vec::new();
    for (mu, entry) in hc.mu_list.iter().zip(&scan) {
        match entry {
            Ok(s) => csv.row(
                [
                    s.mu,
                    s.h,
                    s.shell_mass_defect,
                    s.damping_overlap,
                    s.equipartition_defect,
                    s.total_mass,
                    s.sigma,
                    s.norm_u,
                    s.norm_r,
                ]
                .map(num),
            )?,
            Err(e) => {
                let mut row = vec![num(*mu), num(1.0 / mu)];
                row.extend(std::iter::repeat("nan".to_string()).take(header.len() - 2));
                csv.row(row)?;
                failures.push(json!({ "mu": mu, "error": e.to_string() }));
            }
        }
    }
    csv.finish()?;
    summary.file("husimi.csv");
    let ok: Vec<_> = scan.iter().filter_map(|e| e.as_ref().ok()).collect();
    summary.set("entries", ok);
    summary.set("failures", failures);
    Ok(None)
}

pub fn dump_matrix(ctx: &RunContext, summary: &mut Summary) -> Verdict {
    let op = assemble(ctx, summary)?;
    if !ctx.dump_matrix {
        write_matrix(ctx, &op, summary)?;
    }
    summary.set("nnz_a", 4 * op.n_faces());
    Ok(None)
}
