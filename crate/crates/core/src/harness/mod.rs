//! Experiment orchestration: seeding, worker pools, the studies behind each
//! CLI subcommand, and their tables and reports.
//!
//! Trajectories are farmed out to a rayon pool and merged strictly in
//! trajectory order, so the worker count never changes a single output byte.
//! Trajectory `k` of a study draws from `trajectory_rng(study_seed, k)`,
//! where `study_seed` is derived from the master seed, a study label and the
//! lattice size.

pub mod config;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dynamics::{initial_probabilities, sample_initial, trajectory_rng, Configuration, Simulator};
use crate::empirical::{
    pair_field, pair_road, Boundary, CoarseGrid, MartingaleTracker, MartingaleWeights, ReplacementTracker,
    ReplacementWeights,
};
use crate::error::{Error, Result};
use crate::generator_exact::{
    bernoulli_measure, check_dirichlet_identities, entropy_bound, forward_solve, product_measure, relative_entropy,
    GeneratorParts, IdentityReport, MeasureVector, StateSpace,
};
use crate::io::{snapshot_table, trajectory_table, write_json, Table};
use crate::lattice::LatticeGeom;
use crate::pde::{
    duality_check, energy_functional, init_pde, init_pde_unchecked, pde_step, solve, solve_uniform, weak_residual,
    PdeParams,
};
use crate::stats::{bonferroni_z, tv_sharp_bound, tv_three_sigma_bound, MeanStderr};
use crate::testfn::{FieldMode, TestFunctionPair, TimeFactor, XWave};

pub use config::{
    ConvergenceConfig, DiagnosticKind, DiagnosticsConfig, DirichletConfig, EnergyConfig, ExperimentConfig,
    ExperimentKind, MartingaleConfig, ModelConfig, OracleConfig, OracleInitial, PairSpec, PdeConfig, Profile,
    ProfileSpec, QvScalingConfig, ReplacementConfig,
};

/// Master seed for one study at one lattice size.
pub fn derive_seed(master: u64, label: &str, n: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update((n as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// `f(0), ..., f(count - 1)` evaluated on the pool, returned in index order.
pub fn par_indexed<T, F>(pool: &rayon::ThreadPool, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}

/// Tables plus a JSON summary produced by one experiment.
#[derive(Debug)]
pub struct Emitted {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub passed: bool,
    pub summary: serde_json::Value,
    pub tables: Vec<Table>,
}

impl Emitted {
    fn new<R: Serialize>(kind: ExperimentKind, cfg: &ExperimentConfig, passed: bool, report: &R, tables: Vec<Table>) -> Result<Self> {
        Ok(Emitted { kind, config_hash: cfg.hash(), passed, summary: serde_json::to_value(report)?, tables })
    }

    /// Writes every table as CSV and the summary as `<kind>_report.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::with_capacity(self.tables.len() + 1);
        for t in &self.tables {
            paths.push(t.write(dir)?);
        }
        let name = format!("{}_report", self.kind.name().replace('-', "_"));
        paths.push(write_json(dir, &name, self.kind.name(), &self.config_hash, self.passed, &self.summary)?);
        Ok(paths)
    }
}

/// Runs the experiment behind a subcommand.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<Emitted> {
    let pool = thread_pool(cfg.workers)?;
    match kind {
        ExperimentKind::Simulate => run_simulate(cfg, &pool),
        ExperimentKind::Pde => {
            let (r, t) = run_pde_verification(cfg)?;
            Emitted::new(kind, cfg, r.passed, &r, t)
        }
        ExperimentKind::Converge => {
            let (r, t) = run_convergence_study(cfg, &pool)?;
            Emitted::new(kind, cfg, r.passed, &r, t)
        }
        ExperimentKind::Oracle => {
            let (r, t) = run_oracle_comparison(cfg, &pool)?;
            Emitted::new(kind, cfg, r.passed, &r, t)
        }
        ExperimentKind::DirichletCheck => {
            let (r, t) = run_dirichlet_check(cfg)?;
            Emitted::new(kind, cfg, r.passed, &r, t)
        }
        ExperimentKind::Diagnostics => {
            let (r, t) = run_diagnostics(cfg, &pool)?;
            Emitted::new(kind, cfg, r.passed, &r, t)
        }
    }
}

fn horizon(times: &[f64]) -> Result<f64> {
    times.last().copied().ok_or_else(|| Error::Config("at least one observation time is required".into()))
}

fn build_pairs(specs: &[PairSpec], p: usize) -> Result<Vec<TestFunctionPair<f64>>> {
    specs.iter().map(|s| s.build(p)).collect()
}

/// `Simulator::run` with an event budget.
fn run_capped<F>(
    sim: &Simulator,
    init: &Configuration,
    t_end: f64,
    obs: &[f64],
    cap: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    mut on_event: F,
) -> Result<Vec<Configuration>>
where
    F: FnMut(f64, &crate::dynamics::Event, &Configuration),
{
    let mut count = 0usize;
    let (snaps, _) = sim.run(init, t_end, obs, rng, |t, ev, c| {
        count += 1;
        if count > cap {
            return Err(Error::TrajectoryTooLong { cap });
        }
        on_event(t, ev, c);
        Ok(())
    })?;
    Ok(snaps)
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    pub profile: String,
    pub n: Vec<usize>,
    pub trajectories: usize,
    pub times: Vec<f64>,
    /// Mean particle counts `(field, road)` per size and time.
    pub mean_particles: Vec<Vec<(f64, f64)>>,
}

fn run_simulate(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Emitted> {
    let profile = cfg.profile()?;
    let model = cfg.model.params()?;
    let t_end = horizon(&cfg.times)?;
    let pairs = build_pairs(&cfg.convergence.pairs, cfg.p)?;
    let labels: Vec<String> = cfg.convergence.pairs.iter().map(PairSpec::label).collect();
    let hash = cfg.hash();
    let mut pairings = Table::new(
        "simulate_pairings",
        &hash,
        &["n", "trajectory", "time", "pair", "field", "road", "field_particles", "road_particles"],
    );
    let mut mean_particles = Vec::new();
    let mut log = None;
    for &n in &cfg.n {
        let geom = LatticeGeom::new(cfg.p, n)?;
        let sim = Simulator::new(model, geom.clone())?;
        let seed = derive_seed(cfg.seed, "simulate", n);
        let keep_log = log.is_none();
        let per_traj = par_indexed(pool, cfg.trajectories, |k| {
            let mut rng = trajectory_rng(seed, k as u64);
            let init = sample_initial(|x, y| profile.v0(x, y), |x| profile.u0(x), &geom, &mut rng)?;
            if keep_log && k == 0 {
                let (rec, snaps) = sim.simulate(&init, t_end, &cfg.times, cfg.event_cap, &mut rng)?;
                Ok((snaps, Some(rec)))
            } else {
                Ok((run_capped(&sim, &init, t_end, &cfg.times, cfg.event_cap, &mut rng, |_, _, _| {})?, None))
            }
        })?;
        let mut counts = vec![(0.0, 0.0); cfg.times.len()];
        for (k, (snaps, rec)) in per_traj.into_iter().enumerate() {
            if let Some(rec) = rec {
                log = Some(trajectory_table(&rec, 0, &format!("simulate_trajectory_n{n}"), &hash));
            }
            for (j, c) in snaps.iter().enumerate() {
                let (nf, nr) = c.total_particles();
                counts[j].0 += nf as f64;
                counts[j].1 += nr as f64;
                for (pair, label) in pairs.iter().zip(&labels) {
                    let t = cfg.times[j];
                    pairings.push(vec![
                        n.into(),
                        k.into(),
                        t.into(),
                        label.as_str().into(),
                        pair_field(c, pair, t, &geom).into(),
                        pair_road(c, pair, t, &geom).into(),
                        nf.into(),
                        nr.into(),
                    ]);
                }
            }
        }
        let m = cfg.trajectories as f64;
        mean_particles.push(counts.into_iter().map(|(a, b)| (a / m, b / m)).collect());
    }
    let report = SimulateReport {
        profile: profile.name.clone(),
        n: cfg.n.clone(),
        trajectories: cfg.trajectories,
        times: cfg.times.clone(),
        mean_particles,
    };
    let mut tables = vec![pairings];
    tables.extend(log);
    Emitted::new(ExperimentKind::Simulate, cfg, true, &report, tables)
}

// ---------------------------------------------------------------- pde

#[derive(Clone, Debug, Serialize)]
pub struct RefinementRow {
    pub cells: usize,
    pub error: f64,
    /// `log2(error_prev / error)`; absent on the coarsest level.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PdeReport {
    pub profile: String,
    pub dt: f64,
    pub steps: usize,
    pub mass_initial: f64,
    pub mass_relative_drift: f64,
    pub mass_ok: bool,
    pub range: (f64, f64),
    pub max_principle_ok: bool,
    pub self_convergence: Vec<RefinementRow>,
    pub self_convergence_ok: bool,
    pub weak_residual: Vec<RefinementRow>,
    pub weak_residual_ok: bool,
    pub duality: Vec<RefinementRow>,
    pub duality_ok: bool,
    pub flat_distance: Vec<(f64, f64)>,
    pub relaxation_monotone: bool,
    pub passed: bool,
}

fn with_orders(levels: &[usize], errors: Vec<f64>) -> Vec<RefinementRow> {
    errors
        .iter()
        .enumerate()
        .map(|(i, &e)| RefinementRow {
            cells: levels[i],
            error: e,
            order: (i > 0).then(|| (errors[i - 1] / e).log2()),
        })
        .collect()
}

fn orders_at_least(rows: &[RefinementRow], min: f64) -> bool {
    rows.len() >= 2 && rows.iter().filter_map(|r| r.order).all(|o| o >= min)
}

fn verification_v0(x: &[f64], y: f64) -> f64 {
    0.5 + 0.3 * (2.0 * PI * x[0]).cos() * (PI * y).cos() + 0.1 * y
}

fn verification_u0(x: &[f64]) -> f64 {
    0.4 + 0.2 * (2.0 * PI * x[0]).sin()
}

/// Emits snapshots of the configured profile and runs the solver checks:
/// conservation and the maximum principle over `pde.steps` steps,
/// self-convergence of the x-independent problem, weak-form and duality
/// refinement on a smooth verification problem, and relaxation to the
/// flat state.
pub fn run_pde_verification(cfg: &ExperimentConfig) -> Result<(PdeReport, Vec<Table>)> {
    let pc = &cfg.pde;
    let m = &cfg.model;
    let p = cfg.p;
    let params = |cells: usize| PdeParams::new(p, cells, m.d, m.road_d, m.alpha, pc.cfl_safety);
    let profile = cfg.profile()?;
    let hash = cfg.hash();
    let mut tables = Vec::new();

    let mut state = init_pde(|x, y| profile.v0(x, y), |x| profile.u0(x), params(pc.cells)?)?;
    let mut times = cfg.times.clone();
    times.retain(|&t| t <= pc.t_end);
    let snaps = solve(&mut state, pc.t_end, &times)?;
    for (j, s) in snaps.iter().enumerate() {
        tables.push(snapshot_table(s, &format!("pde_snapshot_{j:02}"), &hash));
    }

    let mut st = init_pde(|x, y| profile.v0(x, y), |x| profile.u0(x), params(pc.cells)?)?;
    let dt = st.dt;
    let mass0 = st.total_mass();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut mass_table = Table::new("pde_mass", &hash, &["step", "time", "mass", "min", "max"]);
    let stride = (pc.steps / 100).max(1);
    for k in 0..=pc.steps {
        if k > 0 {
            pde_step(&mut st)?;
        }
        let (a, b) = st.range();
        lo = lo.min(a);
        hi = hi.max(b);
        if k % stride == 0 || k == pc.steps {
            mass_table.push(vec![k.into(), st.time.into(), st.total_mass().into(), a.into(), b.into()]);
        }
    }
    let drift = if mass0 != 0.0 { ((st.total_mass() - mass0) / mass0).abs() } else { st.total_mass().abs() };
    tables.push(mass_table);

    let levels = &pc.refinement;
    let reduced = |cells: usize| -> Result<Vec<f64>> {
        let mut s = init_pde(|_, y| 0.2 + 0.6 * y * y, |_| 0.9, params(cells)?.with_x_cells(1)?)?;
        solve(&mut s, pc.t_end, &[])?;
        let mut out = s.v.clone();
        out.push(s.u[0]);
        Ok(out)
    };
    let reference = reduced(pc.reference_cells)?;
    let mut self_errors = Vec::new();
    for &c in levels {
        if !pc.reference_cells.is_multiple_of(c) {
            return Err(Error::Config(format!("reference resolution {} is not a multiple of {c}", pc.reference_cells)));
        }
        let f = pc.reference_cells / c;
        let coarse = reduced(c)?;
        let mut e = (coarse[c] - reference[pc.reference_cells]).abs();
        for j in 0..c {
            let avg = reference[j * f..(j + 1) * f].iter().sum::<f64>() / f as f64;
            e = e.max((coarse[j] - avg).abs());
        }
        self_errors.push(e);
    }
    let self_convergence = with_orders(levels, self_errors);

    let horizon_w = 0.05f64.min(pc.t_end);
    let k = vec![1; p - 1];
    let pair = TestFunctionPair::fourier(k.clone(), 1, 1.0, 0.5, 2.0);
    let mut weak = Vec::new();
    for &c in levels {
        let mut s = init_pde(verification_v0, verification_u0, params(c)?)?;
        let n = (horizon_w / s.dt).ceil() as usize;
        let snaps = solve_uniform(&mut s, horizon_w, n, None)?;
        let (rf, rr) = weak_residual(&snaps, &pair, horizon_w)?;
        weak.push(rf.abs().max(rr.abs()));
    }
    let weak_residual = with_orders(levels, weak);

    let sources = TestFunctionPair::new(
        TimeFactor::bump(horizon_w),
        FieldMode::cosine(1.0, k.clone(), 1),
        TimeFactor::one(),
        XWave { amp: 0.7, k, phase: 0.3 },
    );
    let mut dual = Vec::new();
    for &c in levels {
        let pr = params(c)?;
        let n = (horizon_w / pr.stable_dt()).ceil() as usize;
        dual.push(duality_check(verification_v0, verification_u0, &sources, horizon_w, pr, n)?.residual.abs());
    }
    let duality = with_orders(levels, dual);

    let mut lt = init_pde_unchecked(|x, y| profile.v0(x, y), |x| profile.u0(x), params(pc.cells.min(32))?)?;
    let lt_times: Vec<f64> = (1..=40).map(|i| pc.long_time * i as f64 / 40.0).collect();
    let lt_snaps = solve(&mut lt, pc.long_time, &lt_times)?;
    let flat_distance: Vec<(f64, f64)> = lt_snaps.iter().map(|s| (s.time, s.flat_distance())).collect();
    let after: Vec<f64> = flat_distance.iter().filter(|(t, _)| *t >= 0.1 * pc.long_time).map(|x| x.1).collect();
    let relaxation_monotone = after.windows(2).all(|w| w[1] < w[0] || w[1] <= 1e-13);
    let mut conv = Table::new("pde_refinement", &hash, &["study", "cells", "error", "order"]);
    for (name, rows) in [("self_convergence", &self_convergence), ("weak_residual", &weak_residual), ("duality", &duality)] {
        for r in rows {
            conv.push(vec![name.into(), r.cells.into(), r.error.into(), r.order.unwrap_or(f64::NAN).into()]);
        }
    }
    tables.push(conv);
    let mut rel = Table::new("pde_relaxation", &hash, &["time", "flat_distance"]);
    for &(t, d) in &flat_distance {
        rel.push(vec![t.into(), d.into()]);
    }
    tables.push(rel);

    let mass_ok = drift <= 1e-10;
    let max_principle_ok = lo >= 0.0 && hi <= 1.0;
    let self_convergence_ok = orders_at_least(&self_convergence, 1.8);
    let weak_residual_ok = orders_at_least(&weak_residual, 1.0);
    let duality_ok = orders_at_least(&duality, 1.0);
    let passed = mass_ok && max_principle_ok && self_convergence_ok && weak_residual_ok && duality_ok && relaxation_monotone;
    let report = PdeReport {
        profile: profile.name.clone(),
        dt,
        steps: pc.steps,
        mass_initial: mass0,
        mass_relative_drift: drift,
        mass_ok,
        range: (lo, hi),
        max_principle_ok,
        self_convergence,
        self_convergence_ok,
        weak_residual,
        weak_residual_ok,
        duality,
        duality_ok,
        flat_distance,
        relaxation_monotone,
        passed,
    };
    Ok((report, tables))
}

// ---------------------------------------------------------------- converge

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub time: f64,
    pub field_error: f64,
    /// Standard error of the Monte Carlo mean in the worst field cell.
    pub field_stderr: f64,
    pub road_error: f64,
    pub road_stderr: f64,
    /// Largest `|mean - pde| / stderr` over field and road cells.
    pub max_z: f64,
    /// `max_z` is below the Bonferroni-corrected 3-sigma threshold.
    pub noise_consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub profile: String,
    pub bins: usize,
    pub trajectories: usize,
    pub rows: Vec<ConvergenceRow>,
    pub wall_seconds: Vec<(usize, f64)>,
    pub z_threshold: f64,
    /// `error(largest N) < error(smallest N)` for field and road, per time.
    pub field_decreasing: Vec<bool>,
    pub road_decreasing: Vec<bool>,
    pub flat: bool,
    pub passed: bool,
}

/// Monte Carlo mean coarse densities against the PDE solution.
///
/// For a flat profile the pass condition is that every cell deviation is
/// consistent with sampling noise; otherwise the sup-cell error at the
/// largest `N` must be below the error at the smallest `N`, for field and
/// road at every observation time.
pub fn run_convergence_study(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(ConvergenceReport, Vec<Table>)> {
    if cfg.n.len() < 2 {
        return Err(Error::Config("the convergence study needs at least two lattice sizes".into()));
    }
    let profile = cfg.profile()?;
    let model = cfg.model.params()?;
    let t_end = horizon(&cfg.times)?;
    let bins = cfg.convergence.bins;
    let hash = cfg.hash();
    let pairs = build_pairs(&cfg.convergence.pairs, cfg.p)?;
    let labels: Vec<String> = cfg.convergence.pairs.iter().map(PairSpec::label).collect();

    let m = &cfg.model;
    let pde_params = PdeParams::new(cfg.p, cfg.pde.cells, m.d, m.road_d, m.alpha, cfg.pde.cfl_safety)?;
    let mut pde = init_pde(|x, y| profile.v0(x, y), |x| profile.u0(x), pde_params)?;
    let pde_snaps = solve(&mut pde, t_end, &cfg.times)?;

    let mut rows = Vec::new();
    let mut wall = Vec::new();
    let mut cells = Table::new(
        "converge_cells",
        &hash,
        &["n", "time", "kind", "cell", "mc_mean", "mc_stderr", "pde", "error"],
    );
    let mut raw = Table::new("converge_pairings", &hash, &["n", "trajectory", "time", "pair", "field", "road"]);
    let mut z_threshold = 0.0;
    for &n in &cfg.n {
        let start = Instant::now();
        let geom = LatticeGeom::new(cfg.p, n)?;
        let sim = Simulator::new(model, geom.clone())?;
        let grid = CoarseGrid::new(&geom, bins)?;
        let seed = derive_seed(cfg.seed, "converge", n);
        let per_traj = par_indexed(pool, cfg.trajectories, |k| {
            let mut rng = trajectory_rng(seed, k as u64);
            let init = sample_initial(|x, y| profile.v0(x, y), |x| profile.u0(x), &geom, &mut rng)?;
            let snaps = run_capped(&sim, &init, t_end, &cfg.times, cfg.event_cap, &mut rng, |_, _, _| {})?;
            let dens: Vec<_> = snaps.iter().map(|c| grid.density(c)).collect();
            let pairings: Vec<Vec<(f64, f64)>> = snaps
                .iter()
                .zip(&cfg.times)
                .map(|(c, &t)| pairs.iter().map(|p| (pair_field(c, p, t, &geom), pair_road(c, p, t, &geom))).collect())
                .collect();
            Ok((dens, pairings))
        })?;
        let mtraj = cfg.trajectories as f64;
        let ncells = grid.field_cells() + grid.road_cells();
        z_threshold = bonferroni_z(ncells * cfg.times.len());
        for (j, &t) in cfg.times.iter().enumerate() {
            let mut sum = vec![0.0; ncells];
            let mut sq = vec![0.0; ncells];
            for (dens, _) in &per_traj {
                for (c, v) in dens[j].field.iter().chain(&dens[j].road).enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            let proj = grid.project(|x, y| pde_snaps[j].interpolate_field(x, y), |x| pde_snaps[j].interpolate_road(x));
            let target: Vec<f64> = proj.field.iter().chain(&proj.road).copied().collect();
            let mut row = ConvergenceRow {
                n,
                time: t,
                field_error: 0.0,
                field_stderr: 0.0,
                road_error: 0.0,
                road_stderr: 0.0,
                max_z: 0.0,
                noise_consistent: true,
            };
            for c in 0..ncells {
                let mean = sum[c] / mtraj;
                let var = if cfg.trajectories > 1 { ((sq[c] - mtraj * mean * mean) / (mtraj - 1.0)).max(0.0) } else { f64::NAN };
                let se = (var / mtraj).sqrt();
                let err = (mean - target[c]).abs();
                let field = c < grid.field_cells();
                let (e, s) = if field { (&mut row.field_error, &mut row.field_stderr) } else { (&mut row.road_error, &mut row.road_stderr) };
                if err > *e {
                    *e = err;
                    *s = se;
                }
                let z = if se > 0.0 { err / se } else if err > 1e-12 { f64::INFINITY } else { 0.0 };
                row.max_z = row.max_z.max(z);
                let (kind, idx) = if field { ("field", c) } else { ("road", c - grid.field_cells()) };
                cells.push(vec![n.into(), t.into(), kind.into(), idx.into(), mean.into(), se.into(), target[c].into(), err.into()]);
            }
            row.noise_consistent = row.max_z <= z_threshold;
            rows.push(row);
        }
        for (k, (_, pairings)) in per_traj.iter().enumerate() {
            for (j, &t) in cfg.times.iter().enumerate() {
                for (label, &(f, r)) in labels.iter().zip(&pairings[j]) {
                    raw.push(vec![n.into(), k.into(), t.into(), label.as_str().into(), f.into(), r.into()]);
                }
            }
        }
        wall.push((n, start.elapsed().as_secs_f64()));
    }

    let (first, last) = (cfg.n[0], cfg.n[cfg.n.len() - 1]);
    let at = |n: usize, t: f64| rows.iter().find(|r| r.n == n && r.time == t).expect("row exists");
    let field_decreasing: Vec<bool> = cfg.times.iter().map(|&t| at(last, t).field_error < at(first, t).field_error).collect();
    let road_decreasing: Vec<bool> = cfg.times.iter().map(|&t| at(last, t).road_error < at(first, t).road_error).collect();
    let flat = profile.is_flat();
    let passed = if flat {
        rows.iter().all(|r| r.noise_consistent)
    } else {
        field_decreasing.iter().chain(&road_decreasing).all(|&b| b)
    };
    let mut summary = Table::new(
        "converge_errors",
        &hash,
        &["n", "time", "field_error", "field_stderr", "road_error", "road_stderr", "max_z", "noise_consistent"],
    );
    for r in &rows {
        summary.push(vec![
            r.n.into(),
            r.time.into(),
            r.field_error.into(),
            r.field_stderr.into(),
            r.road_error.into(),
            r.road_stderr.into(),
            r.max_z.into(),
            r.noise_consistent.into(),
        ]);
    }
    let report = ConvergenceReport {
        profile: profile.name.clone(),
        bins,
        trajectories: cfg.trajectories,
        rows,
        wall_seconds: wall,
        z_threshold,
        field_decreasing,
        road_decreasing,
        flat,
        passed,
    };
    Ok((report, vec![summary, cells, raw]))
}

// ---------------------------------------------------------------- oracle

#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub time: f64,
    pub tv: f64,
    /// `3 sqrt(K / n)`.
    pub bound: f64,
    /// Sharper deviation bound, reported for reference.
    pub sharp_bound: f64,
    pub mass_drift: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub p: usize,
    pub n: usize,
    pub states: usize,
    pub trajectories: usize,
    pub rows: Vec<OracleRow>,
    pub passed: bool,
}

/// Histogram of simulated states against the exact forward law.
pub fn run_oracle_comparison(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(OracleReport, Vec<Table>)> {
    let oc = &cfg.oracle;
    let geom = LatticeGeom::new(oc.p, oc.n)?;
    let space = StateSpace::new(&geom).map_err(|e| Error::Config(format!("oracle geometry: {e}")))?;
    let model = cfg.model.params()?;
    let gen = GeneratorParts::<f64>::new(&space, &model)?;
    let t_end = horizon(&oc.times)?;
    if oc.trajectories == 0 {
        return Err(Error::Config("oracle trajectory count must be at least 1".into()));
    }
    let (mu0, probs) = match oc.initial {
        OracleInitial::Product => {
            let profile = cfg.profile()?;
            let (pf, pr) = initial_probabilities(|x, y| profile.v0(x, y), |x| profile.u0(x), &geom)?;
            (product_measure::<f64>(&space, &pf, &pr)?, Some((pf, pr)))
        }
        OracleInitial::Dirac { state } => {
            if state >= space.len() {
                return Err(Error::Config(format!("Dirac state {state} outside the {} oracle states", space.len())));
            }
            (MeasureVector::dirac(&space, state), None)
        }
    };
    let sim = Simulator::new(model, geom.clone())?;
    let seed = derive_seed(cfg.seed, "oracle", oc.n);
    let codes = par_indexed(pool, oc.trajectories, |k| {
        let mut rng = trajectory_rng(seed, k as u64);
        let init = match (&probs, &oc.initial) {
            (Some((pf, pr)), _) => {
                use rand::Rng;
                Configuration {
                    eta: pf.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect(),
                    xi: pr.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect(),
                }
            }
            (None, OracleInitial::Dirac { state }) => space.decode(*state),
            _ => unreachable!("product law always has probabilities"),
        };
        let snaps = run_capped(&sim, &init, t_end, &oc.times, cfg.event_cap, &mut rng, |_, _, _| {})?;
        Ok(snaps.iter().map(|c| space.encode(c) as u32).collect::<Vec<u32>>())
    })?;
    let hash = cfg.hash();
    let mut hist_table = Table::new("oracle_histogram", &hash, &["time", "state", "mc", "exact"]);
    let mut rows = Vec::new();
    for (j, &t) in oc.times.iter().enumerate() {
        let mut hist = vec![0.0; space.len()];
        for c in &codes {
            hist[c[j] as usize] += 1.0;
        }
        hist.iter_mut().for_each(|h| *h /= oc.trajectories as f64);
        let exact = forward_solve(&gen, &mu0, t)?;
        let tv = exact.measure.total_variation(&hist);
        for (s, (&h, &e)) in hist.iter().zip(&exact.measure.0).enumerate() {
            if h > 0.0 || e > 1e-12 {
                hist_table.push(vec![t.into(), s.into(), h.into(), e.into()]);
            }
        }
        let bound = tv_three_sigma_bound(space.len(), oc.trajectories);
        rows.push(OracleRow {
            time: t,
            tv,
            bound,
            sharp_bound: tv_sharp_bound(&exact.measure.0, oc.trajectories),
            mass_drift: exact.mass_drift,
            passed: tv <= bound,
        });
    }
    let mut tv_table = Table::new("oracle_tv", &hash, &["time", "tv", "bound", "sharp_bound", "passed"]);
    for r in &rows {
        tv_table.push(vec![r.time.into(), r.tv.into(), r.bound.into(), r.sharp_bound.into(), r.passed.into()]);
    }
    let passed = rows.iter().all(|r| r.passed);
    let report = OracleReport { p: oc.p, n: oc.n, states: space.len(), trajectories: oc.trajectories, rows, passed };
    Ok((report, vec![tv_table, hist_table]))
}

// ---------------------------------------------------------------- dirichlet-check

#[derive(Clone, Debug, Serialize)]
pub struct EntropyRow {
    pub gamma: f64,
    pub family: String,
    pub measures: usize,
    pub max_entropy: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirichletCheckReport {
    pub identities: IdentityReport,
    pub entropy: Vec<EntropyRow>,
    pub passed: bool,
}

/// Dirichlet-form identities on random densities and the entropy bound on
/// random and Dirac measures.
pub fn run_dirichlet_check(cfg: &ExperimentConfig) -> Result<(DirichletCheckReport, Vec<Table>)> {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let dc = &cfg.dirichlet;
    let geom = LatticeGeom::new(dc.p, dc.n)?;
    let space = StateSpace::new(&geom)?;
    let model = cfg.model.params()?;
    let gen = GeneratorParts::<f64>::new(&space, &model)?;
    let identities = check_dirichlet_identities(&gen, dc.gamma, dc.trials, derive_seed(cfg.seed, "dirichlet", dc.n))?;

    let mut entropy = Vec::new();
    for &gamma in &dc.entropy_gammas {
        let nu = bernoulli_measure::<f64>(&space, gamma)?;
        let bound = entropy_bound(gamma, &geom);
        let mut rng = trajectory_rng(derive_seed(cfg.seed, "entropy", dc.n), gamma.to_bits());
        let mut max_random = f64::NEG_INFINITY;
        for _ in 0..dc.entropy_samples {
            let sharpness = 4.0 * rng.random::<f64>();
            let mut w: Vec<f64> = (0..space.len()).map(|_| (sharpness * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= z);
            max_random = max_random.max(relative_entropy(&MeasureVector(w), &nu)?);
        }
        let mut max_dirac = f64::NEG_INFINITY;
        for s in 0..space.len() {
            max_dirac = max_dirac.max(relative_entropy(&MeasureVector::dirac(&space, s), &nu)?);
        }
        for (family, count, max) in [("random", dc.entropy_samples, max_random), ("dirac", space.len(), max_dirac)] {
            entropy.push(EntropyRow { gamma, family: family.into(), measures: count, max_entropy: max, bound, passed: max <= bound });
        }
    }
    let hash = cfg.hash();
    let mut id_table = Table::new("dirichlet_identities", &hash, &["identity", "part", "asserted", "max_deviation", "passed"]);
    for c in &identities.checks {
        id_table.push(vec![
            c.identity.as_str().into(),
            c.part.as_str().into(),
            c.asserted.into(),
            c.max_deviation.into(),
            c.passed.into(),
        ]);
    }
    id_table.push(vec!["fitted_c".into(), "robin+reaction".into(), false.into(), identities.fitted_c.into(), true.into()]);
    let mut ent_table = Table::new("entropy_bound", &hash, &["gamma", "family", "measures", "max_entropy", "bound", "passed"]);
    for r in &entropy {
        ent_table.push(vec![
            r.gamma.into(),
            r.family.as_str().into(),
            r.measures.into(),
            r.max_entropy.into(),
            r.bound.into(),
            r.passed.into(),
        ]);
    }
    let passed = identities.passed && entropy.iter().all(|r| r.passed);
    Ok((DirichletCheckReport { identities, entropy, passed }, vec![id_table, ent_table]))
}

// ---------------------------------------------------------------- diagnostics

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleRow {
    pub pair: String,
    pub time: f64,
    pub mean: f64,
    pub stderr: f64,
    pub mean_square: f64,
    pub mean_qv: f64,
    /// Mean and standard error of `M^2 - int B`.
    pub excess: f64,
    pub excess_stderr: f64,
    pub zero_mean_ok: bool,
    pub variance_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct QvRow {
    pub pair: String,
    pub n_small: usize,
    pub n_large: usize,
    pub mean_square_small: f64,
    pub stderr_small: f64,
    pub mean_square_large: f64,
    pub stderr_large: f64,
    pub ratio: f64,
    pub in_band: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplacementRow {
    pub sweep: String,
    pub boundary: Boundary,
    pub n: usize,
    pub eps: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplacementSummary {
    pub rows: Vec<ReplacementRow>,
    /// Per sweep and boundary: every step decreases by more than the
    /// combined standard error of its two estimates.
    pub decreasing: Vec<(String, Boundary, bool)>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyRow {
    pub q: usize,
    pub estimate: f64,
    pub best_single: f64,
    pub cap: f64,
    pub fraction: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DiagnosticsReport {
    pub martingale: Option<Vec<MartingaleRow>>,
    pub qv_scaling: Option<Vec<QvRow>>,
    pub replacement: Option<ReplacementSummary>,
    pub energy: Option<Vec<EnergyRow>>,
    pub passed: bool,
}

/// Per pair, `M(t_j)` and `int_0^{t_j} B` at every observation time.
type PairSeries = Vec<(Vec<f64>, Vec<f64>)>;

/// One [`PairSeries`] per trajectory.
fn martingale_samples(
    cfg: &ExperimentConfig,
    pool: &rayon::ThreadPool,
    n: usize,
    trajectories: usize,
    times: &[f64],
    pairs: &[TestFunctionPair<f64>],
    label: &str,
) -> Result<Vec<PairSeries>> {
    let profile = cfg.profile()?;
    let model = cfg.model.params()?;
    let geom = LatticeGeom::new(cfg.p, n)?;
    let sim = Simulator::new(model, geom.clone())?;
    let weights: Vec<MartingaleWeights<f64>> =
        pairs.iter().map(|p| MartingaleWeights::new(&geom, &model, p)).collect::<Result<_>>()?;
    let t_end = horizon(times)?;
    let seed = derive_seed(cfg.seed, label, n);
    par_indexed(pool, trajectories, |k| {
        let mut rng = trajectory_rng(seed, k as u64);
        let init = sample_initial(|x, y| profile.v0(x, y), |x| profile.u0(x), &geom, &mut rng)?;
        let mut trackers: Vec<_> = weights.iter().map(|w| MartingaleTracker::new(w, &init, times)).collect::<Result<_>>()?;
        run_capped(&sim, &init, t_end, &[], cfg.event_cap, &mut rng, |t, ev, _| {
            for tr in trackers.iter_mut() {
                tr.on_event(t, ev);
            }
        })?;
        trackers
            .into_iter()
            .map(|tr| {
                let s = tr.finish(t_end)?;
                Ok(((0..times.len()).map(|j| s.total(j)).collect(), (0..times.len()).map(|j| s.qv_total(j)).collect()))
            })
            .collect()
    })
}

fn martingale_diagnostic(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Vec<MartingaleRow>> {
    let mc = &cfg.diagnostics.martingale;
    let pairs = build_pairs(&mc.pairs, cfg.p)?;
    let samples = martingale_samples(cfg, pool, mc.n, mc.trajectories, &mc.times, &pairs, "martingale")?;
    let mut rows = Vec::new();
    for (pi, spec) in mc.pairs.iter().enumerate() {
        for (j, &t) in mc.times.iter().enumerate() {
            let ms: Vec<f64> = samples.iter().map(|s| s[pi].0[j]).collect();
            let qv: Vec<f64> = samples.iter().map(|s| s[pi].1[j]).collect();
            let excess: Vec<f64> = ms.iter().zip(&qv).map(|(m, q)| m * m - q).collect();
            let a = MeanStderr::from_samples(&ms);
            let e = MeanStderr::from_samples(&excess);
            rows.push(MartingaleRow {
                pair: spec.label(),
                time: t,
                mean: a.mean,
                stderr: a.stderr,
                mean_square: ms.iter().map(|m| m * m).sum::<f64>() / ms.len() as f64,
                mean_qv: crate::stats::mean(&qv),
                excess: e.mean,
                excess_stderr: e.stderr,
                zero_mean_ok: a.mean.abs() <= 3.0 * a.stderr,
                variance_ok: e.mean.abs() <= 4.0 * e.stderr,
            });
        }
    }
    Ok(rows)
}

fn qv_scaling_diagnostic(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Vec<QvRow>> {
    let qc = &cfg.diagnostics.qv_scaling;
    let pairs = build_pairs(&qc.pairs, cfg.p)?;
    let (ns, nl) = (qc.n[0], qc.n[1]);
    let small = martingale_samples(cfg, pool, ns, qc.trajectories, &[qc.t], &pairs, "qv")?;
    let large = martingale_samples(cfg, pool, nl, qc.trajectories, &[qc.t], &pairs, "qv")?;
    let sq = |s: &[PairSeries], pi: usize| {
        MeanStderr::from_samples(&s.iter().map(|x| x[pi].0[0] * x[pi].0[0]).collect::<Vec<_>>())
    };
    Ok(qc
        .pairs
        .iter()
        .enumerate()
        .map(|(pi, spec)| {
            let a = sq(&small, pi);
            let b = sq(&large, pi);
            let ratio = a.mean / b.mean;
            QvRow {
                pair: spec.label(),
                n_small: ns,
                n_large: nl,
                mean_square_small: a.mean,
                stderr_small: a.stderr,
                mean_square_large: b.mean,
                stderr_large: b.stderr,
                ratio,
                in_band: ratio >= qc.band[0] && ratio <= qc.band[1],
            }
        })
        .collect())
}

fn replacement_diagnostic(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<ReplacementSummary> {
    let rc = &cfg.diagnostics.replacement;
    let profile = cfg.profile()?;
    let model = cfg.model.params()?;
    let g = FieldMode::constant(1.0, cfg.p);
    let mut sizes: Vec<usize> = rc.n.clone();
    if !sizes.contains(&rc.eps_n) {
        sizes.push(rc.eps_n);
    }
    sizes.sort_unstable();
    let boundaries = [Boundary::Lower, Boundary::Upper];
    let mut rows = Vec::new();
    for &n in &sizes {
        let mut eps_here: Vec<(String, f64)> = Vec::new();
        if rc.n.contains(&n) {
            eps_here.push(("n".into(), rc.eps));
        }
        if n == rc.eps_n {
            eps_here.extend(rc.eps_list.iter().map(|&e| ("eps".to_string(), e)));
        }
        let geom = LatticeGeom::new(cfg.p, n)?;
        let sim = Simulator::new(model, geom.clone())?;
        let mut weights = Vec::new();
        for &b in &boundaries {
            for (_, e) in &eps_here {
                weights.push(ReplacementWeights::new(&geom, &g, TimeFactor::one(), *e, b)?);
            }
        }
        let seed = derive_seed(cfg.seed, "replacement", n);
        let values = par_indexed(pool, rc.trajectories, |k| {
            let mut rng = trajectory_rng(seed, k as u64);
            let init = sample_initial(|x, y| profile.v0(x, y), |x| profile.u0(x), &geom, &mut rng)?;
            let mut trackers: Vec<_> = weights.iter().map(|w| ReplacementTracker::new(w, &init)).collect::<Result<_>>()?;
            run_capped(&sim, &init, rc.t, &[], cfg.event_cap, &mut rng, |t, ev, after| {
                for tr in trackers.iter_mut() {
                    tr.on_event(t, ev, after);
                }
            })?;
            Ok(trackers.into_iter().map(|tr| tr.finish(rc.t).abs()).collect::<Vec<f64>>())
        })?;
        for (bi, &b) in boundaries.iter().enumerate() {
            for (ei, (sweep, e)) in eps_here.iter().enumerate() {
                let idx = bi * eps_here.len() + ei;
                let s = MeanStderr::from_samples(&values.iter().map(|v| v[idx]).collect::<Vec<_>>());
                rows.push(ReplacementRow { sweep: sweep.clone(), boundary: b, n, eps: *e, mean: s.mean, stderr: s.stderr });
            }
        }
    }
    let mut decreasing = Vec::new();
    for sweep in ["n", "eps"] {
        for &b in &boundaries {
            let seq: Vec<&ReplacementRow> = rows.iter().filter(|r| r.sweep == sweep && r.boundary == b).collect();
            let ok = seq.len() >= 2
                && seq.windows(2).all(|w| w[0].mean - w[1].mean > (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt());
            decreasing.push((sweep.to_string(), b, ok));
        }
    }
    let passed = decreasing.iter().all(|d| d.2);
    Ok(ReplacementSummary { rows, decreasing, passed })
}

/// Energy estimates for the manufactured field
/// `v = 1/2 + A e^{-t} cos(2 pi x_1) sin^2(pi y)` with `A = 0.2`, against
/// the closed-form caps `1/2 int ||d_q v||^2` for `q = 1` and `q = p`.
pub fn energy_diagnostic(cfg: &ExperimentConfig) -> Result<Vec<EnergyRow>> {
    let ec = &cfg.diagnostics.energy;
    let m = &cfg.model;
    let params = PdeParams::new(cfg.p, ec.cells, m.d, m.road_d, m.alpha, cfg.pde.cfl_safety)?;
    let amp = 0.2;
    let a = |t: f64| amp * (-t).exp();
    let snaps = (0..=ec.snapshots)
        .map(|k| {
            let t = ec.t_end * k as f64 / ec.snapshots.max(1) as f64;
            let mut s = init_pde(|x, y| 0.5 + a(t) * (2.0 * PI * x[0]).cos() * (PI * y).sin().powi(2), |_| 0.5, params.clone())?;
            s.time = t;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let int_a2 = amp * amp * (1.0 - (-2.0 * ec.t_end).exp()) / 2.0;
    let caps = [(1, 0.5 * int_a2 * 4.0 * PI * PI * 0.5 * 0.375), (cfg.p, 0.5 * int_a2 * 0.5 * PI * PI * 0.5)];
    caps.iter()
        .map(|&(q, cap)| {
            let e = energy_functional(&snaps, q, ec.family_size)?;
            let estimate = e.value.unwrap_or(f64::NEG_INFINITY);
            Ok(EnergyRow {
                q,
                estimate,
                best_single: e.best_single().unwrap_or(f64::NEG_INFINITY),
                cap,
                fraction: estimate / cap,
                passed: estimate <= cap && estimate >= ec.fraction * cap,
            })
        })
        .collect()
}

/// Martingale, quadratic-variation, replacement and energy diagnostics, as
/// selected by `diagnostics.list`. An empty list produces an empty bundle.
pub fn run_diagnostics(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(DiagnosticsReport, Vec<Table>)> {
    let hash = cfg.hash();
    let list = &cfg.diagnostics.list;
    let mut report = DiagnosticsReport::default();
    let mut tables = Vec::new();
    if list.contains(&DiagnosticKind::Martingale) {
        let rows = martingale_diagnostic(cfg, pool)?;
        let mut t = Table::new(
            "diag_martingale",
            &hash,
            &["pair", "time", "mean", "stderr", "mean_square", "mean_qv", "excess", "excess_stderr", "zero_mean_ok", "variance_ok"],
        );
        for r in &rows {
            t.push(vec![
                r.pair.as_str().into(),
                r.time.into(),
                r.mean.into(),
                r.stderr.into(),
                r.mean_square.into(),
                r.mean_qv.into(),
                r.excess.into(),
                r.excess_stderr.into(),
                r.zero_mean_ok.into(),
                r.variance_ok.into(),
            ]);
        }
        tables.push(t);
        report.martingale = Some(rows);
    }
    if list.contains(&DiagnosticKind::QvScaling) {
        let rows = qv_scaling_diagnostic(cfg, pool)?;
        let mut t = Table::new(
            "diag_qv_scaling",
            &hash,
            &["pair", "n_small", "n_large", "mean_square_small", "stderr_small", "mean_square_large", "stderr_large", "ratio", "in_band"],
        );
        for r in &rows {
            t.push(vec![
                r.pair.as_str().into(),
                r.n_small.into(),
                r.n_large.into(),
                r.mean_square_small.into(),
                r.stderr_small.into(),
                r.mean_square_large.into(),
                r.stderr_large.into(),
                r.ratio.into(),
                r.in_band.into(),
            ]);
        }
        tables.push(t);
        report.qv_scaling = Some(rows);
    }
    if list.contains(&DiagnosticKind::Replacement) {
        let summary = replacement_diagnostic(cfg, pool)?;
        let mut t = Table::new("diag_replacement", &hash, &["sweep", "boundary", "n", "eps", "mean", "stderr"]);
        for r in &summary.rows {
            t.push(vec![r.sweep.as_str().into(), r.boundary.name().into(), r.n.into(), r.eps.into(), r.mean.into(), r.stderr.into()]);
        }
        tables.push(t);
        report.replacement = Some(summary);
    }
    if list.contains(&DiagnosticKind::Energy) {
        let rows = energy_diagnostic(cfg)?;
        let mut t = Table::new("diag_energy", &hash, &["q", "estimate", "best_single", "cap", "fraction", "passed"]);
        for r in &rows {
            t.push(vec![r.q.into(), r.estimate.into(), r.best_single.into(), r.cap.into(), r.fraction.into(), r.passed.into()]);
        }
        tables.push(t);
        report.energy = Some(rows);
    }
    report.passed = report.martingale.iter().flatten().all(|r| r.zero_mean_ok && r.variance_ok)
        && report.qv_scaling.iter().flatten().all(|r| r.in_band)
        && report.replacement.as_ref().is_none_or(|r| r.passed)
        && report.energy.iter().flatten().all(|r| r.passed);
    Ok((report, tables))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_label_and_size() {
        let a = derive_seed(1, "converge", 16);
        assert_ne!(a, derive_seed(1, "converge", 32));
        assert_ne!(a, derive_seed(1, "oracle", 16));
        assert_ne!(a, derive_seed(2, "converge", 16));
        assert_eq!(a, derive_seed(1, "converge", 16));
    }

    #[test]
    fn indexed_map_keeps_order() {
        let pool = thread_pool(Some(3)).unwrap();
        let v = par_indexed(&pool, 100, |k| Ok(k * k)).unwrap();
        assert_eq!(v, (0..100).map(|k| k * k).collect::<Vec<_>>());
        let err = par_indexed(&pool, 10, |k| if k == 7 { Err(Error::Config("boom".into())) } else { Ok(k) });
        assert!(err.is_err());
    }

    #[test]
    fn empty_diagnostic_list_is_noop() {
        let mut cfg = ExperimentConfig::default();
        cfg.diagnostics.list.clear();
        let (r, t) = run_diagnostics(&cfg, &thread_pool(Some(1)).unwrap()).unwrap();
        assert!(t.is_empty() && r.passed && r.martingale.is_none() && r.energy.is_none());
    }
}
