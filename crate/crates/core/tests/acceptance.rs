//! End-to-end acceptance run: one line per criterion, non-zero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fieldroad::harness::{self, DiagnosticKind, ExperimentConfig, ProfileSpec};
use fieldroad::stats::tv_three_sigma_bound;

/// `3 sqrt(512 / 1e5)`.
const ORACLE_TV_BOUND: f64 = 0.214_662_525_839_979_8;
/// `log(2) * 3^2`, the entropy cap at `gamma = 1/2`, `N = 3`.
const ENTROPY_CAP_HALF: f64 = 6.238_324_625_039_508;
/// `1/2 int_0^0.1 int ||d_q v||^2` for the manufactured field, by adaptive
/// cubature.
const ENERGY_CAP_Q1: f64 = 0.013_417_918_179_027_78;
const ENERGY_CAP_Q2: f64 = 0.004_472_639_393_009_26;

struct Outcome {
    passed: bool,
    detail: String,
}

type Check = fn(&rayon::ThreadPool) -> fieldroad::Result<Outcome>;

fn base() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed <= limit
}

fn dirichlet_identities(_: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let start = Instant::now();
    let (r, _) = harness::run_dirichlet_check(&base())?;
    let id = &r.identities;
    let fast = within(Duration::from_secs(60), start.elapsed());
    let worst_exact = id.checks.iter().filter(|c| c.asserted).map(|c| c.max_deviation).fold(0.0, f64::max);
    Ok(Outcome {
        passed: id.passed && id.checks.len() == 5 && fast,
        detail: format!(
            "exact parts max rel dev {worst_exact:.2e}, fitted c {:.4}, {:.1}s",
            id.fitted_c,
            start.elapsed().as_secs_f64()
        ),
    })
}

fn entropy_bound(_: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let (r, _) = harness::run_dirichlet_check(&base())?;
    let cap_half = r.entropy.iter().find(|e| e.gamma == 0.5).map(|e| e.bound).unwrap_or(f64::NAN);
    let slack = r.entropy.iter().map(|e| e.bound - e.max_entropy).fold(f64::INFINITY, f64::min);
    let dirac = r.entropy.iter().filter(|e| e.family == "dirac").count();
    Ok(Outcome {
        passed: r.entropy.iter().all(|e| e.passed) && dirac == 3 && (cap_half - ENTROPY_CAP_HALF).abs() < 1e-12,
        detail: format!("{} families, min slack {slack:.3e}", r.entropy.len()),
    })
}

fn simulator_exactness(pool: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let start = Instant::now();
    let cfg = base();
    assert_eq!(cfg.oracle.trajectories, 100_000);
    let (r, _) = harness::run_oracle_comparison(&cfg, pool)?;
    let bound_ok = (tv_three_sigma_bound(r.states, r.trajectories) - ORACLE_TV_BOUND).abs() < 1e-15;
    let fast = within(Duration::from_secs(300), start.elapsed());
    let tvs: Vec<String> = r.rows.iter().map(|x| format!("t={} tv={:.4}", x.time, x.tv)).collect();
    Ok(Outcome {
        passed: r.passed && bound_ok && fast && r.rows.len() == 2,
        detail: format!("{} (bound {ORACLE_TV_BOUND:.4}), {:.1}s", tvs.join(", "), start.elapsed().as_secs_f64()),
    })
}

fn diagnostics(pool: &rayon::ThreadPool, which: DiagnosticKind) -> fieldroad::Result<harness::DiagnosticsReport> {
    let mut cfg = base();
    cfg.diagnostics.list = vec![which];
    Ok(harness::run_diagnostics(&cfg, pool)?.0)
}

fn martingale_suite(pool: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let rows = diagnostics(pool, DiagnosticKind::Martingale)?.martingale.unwrap_or_default();
    let zmax = rows.iter().map(|r| (r.mean / r.stderr).abs()).fold(0.0, f64::max);
    let vmax = rows.iter().map(|r| (r.excess / r.excess_stderr).abs()).fold(0.0, f64::max);
    Ok(Outcome {
        passed: rows.len() == 12 && rows.iter().all(|r| r.zero_mean_ok && r.variance_ok),
        detail: format!("{} cases, max |mean|/se {zmax:.2}, max variance z {vmax:.2}", rows.len()),
    })
}

fn qv_scaling(pool: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let rows = diagnostics(pool, DiagnosticKind::QvScaling)?.qv_scaling.unwrap_or_default();
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.ratio)).collect();
    Ok(Outcome {
        passed: !rows.is_empty() && rows.iter().all(|r| r.in_band),
        detail: format!("ratio N16/N32 = {} (band [1.4, 2.9])", ratios.join(", ")),
    })
}

fn replacement(pool: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let r = diagnostics(pool, DiagnosticKind::Replacement)?.replacement.expect("requested");
    let seqs: Vec<String> = r
        .decreasing
        .iter()
        .map(|(s, b, ok)| format!("{s}/{}:{}", b.name(), if *ok { "ok" } else { "no" }))
        .collect();
    Ok(Outcome { passed: r.passed && r.decreasing.len() == 4, detail: seqs.join(" ") })
}

fn hydrodynamic(pool: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let start = Instant::now();
    let mut cfg = base();
    cfg.n = vec![16, 64];
    assert_eq!(cfg.trajectories, 200);
    let (cos, _) = harness::run_convergence_study(&cfg, pool)?;
    cfg.profile = ProfileSpec::Flat { c: 0.5 };
    let (flat, _) = harness::run_convergence_study(&cfg, pool)?;
    let fast = within(Duration::from_secs(1800), start.elapsed());
    let errs: Vec<String> = cos
        .rows
        .iter()
        .map(|r| format!("N{} t{}: {:.4}/{:.4}", r.n, r.time, r.field_error, r.road_error))
        .collect();
    let zmax = flat.rows.iter().map(|r| r.max_z).fold(0.0, f64::max);
    Ok(Outcome {
        passed: cos.passed && !cos.flat && flat.flat && flat.passed && fast,
        detail: format!(
            "field/road {}; flat max z {zmax:.2} <= {:.2}; {:.0}s",
            errs.join(", "),
            flat.z_threshold,
            start.elapsed().as_secs_f64()
        ),
    })
}

fn pde_solver(_: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let cfg = base();
    assert_eq!(cfg.pde.steps, 10_000);
    let (r, _) = harness::run_pde_verification(&cfg)?;
    let last = |rows: &[harness::RefinementRow]| rows.last().and_then(|x| x.order).unwrap_or(f64::NAN);
    Ok(Outcome {
        passed: r.passed,
        detail: format!(
            "mass drift {:.1e}, range [{:.3}, {:.3}], orders self {:.2} weak {:.2} duality {:.2}, relaxation {}",
            r.mass_relative_drift,
            r.range.0,
            r.range.1,
            last(&r.self_convergence),
            last(&r.weak_residual),
            last(&r.duality),
            if r.relaxation_monotone { "monotone" } else { "not monotone" }
        ),
    })
}

fn energy(_: &rayon::ThreadPool) -> fieldroad::Result<Outcome> {
    let cfg = base();
    assert_eq!(cfg.diagnostics.energy.family_size, 32);
    let rows = harness::energy_diagnostic(&cfg)?;
    let caps_ok = rows.len() == 2
        && (rows[0].cap - ENERGY_CAP_Q1).abs() <= 1e-12 * ENERGY_CAP_Q1
        && (rows[1].cap - ENERGY_CAP_Q2).abs() <= 1e-12 * ENERGY_CAP_Q2;
    let fr: Vec<String> = rows.iter().map(|r| format!("q={} {:.1}%", r.q, 100.0 * r.fraction)).collect();
    Ok(Outcome {
        passed: caps_ok && rows.iter().all(|r| r.passed && r.estimate <= r.cap && r.fraction >= 0.8),
        detail: format!("estimate/cap {}", fr.join(", ")),
    })
}

fn main() -> ExitCode {
    let pool = harness::thread_pool(None).expect("thread pool");
    let checks: [(&str, Check); 9] = [
        ("dirichlet-form identities", dirichlet_identities),
        ("entropy bound", entropy_bound),
        ("simulator exactness", simulator_exactness),
        ("martingale suite", martingale_suite),
        ("quadratic-variation scaling", qv_scaling),
        ("replacement diagnostic", replacement),
        ("hydrodynamic convergence", hydrodynamic),
        ("pde solver", pde_solver),
        ("energy functional", energy),
    ];
    let mut failures = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let (passed, detail) = match check(&pool) {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!("criterion {} {:<28} {}  {}", i + 1, name, if passed { "PASS" } else { "FAIL" }, detail);
    }
    println!("acceptance: {}/{} criteria passed", checks.len() - failures, checks.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
