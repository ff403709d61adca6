//! Experiment configuration (TOML) and the named initial profiles and
//! test-function pairs it refers to.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::ModelParams;
use crate::error::{Error, Result};
use crate::io::{config_hash, read_numeric_csv};
use crate::testfn::{FieldMode, TestFunctionPair, TimeFactor, XWave};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Pde,
    Converge,
    Oracle,
    DirichletCheck,
    Diagnostics,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Pde => "pde",
            ExperimentKind::Converge => "converge",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::DirichletCheck => "dirichlet-check",
            ExperimentKind::Diagnostics => "diagnostics",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d: f64,
    pub road_d: f64,
    pub alpha: f64,
    pub b: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { d: 1.0, road_d: 1.0, alpha: 1.0, b: 0.5 }
    }
}

impl ModelConfig {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.d, self.road_d, self.alpha, self.b)
    }
}

/// Initial macroscopic profile `(v0, u0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `v0 = u0 = c`.
    Flat { c: f64 },
    /// `v0 = level + a cos(2 pi x_1) cos(pi y)`, `u0 = level + road_amp cos(2 pi x_1)`.
    CosMode {
        #[serde(default = "half")]
        level: f64,
        a: f64,
        #[serde(default)]
        road_amp: f64,
    },
    /// `v0 = left` for `x_1 < 1/2` and `right` otherwise; `u0 = road`.
    Step { left: f64, right: f64, road: f64 },
    /// Field rows `x_1, y, value` and road rows `x_1, value` (p = 2), read
    /// as piecewise-constant data around the tabulated points.
    Tabulated { field: PathBuf, road: PathBuf },
}

fn half() -> f64 {
    0.5
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::CosMode { level: 0.5, a: 0.3, road_amp: 0.0 }
    }
}

type FieldFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type RoadFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Evaluable profile built from a [`ProfileSpec`].
#[derive(Clone)]
pub struct Profile {
    pub name: String,
    field: Arc<FieldFn>,
    road: Arc<RoadFn>,
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profile").field("name", &self.name).finish()
    }
}

impl Profile {
    pub fn v0(&self, x: &[f64], y: f64) -> f64 {
        (self.field)(x, y)
    }

    pub fn u0(&self, x: &[f64]) -> f64 {
        (self.road)(x)
    }

    pub fn is_flat(&self) -> bool {
        self.name.starts_with("flat")
    }
}

fn nearest(grid: &[f64], x: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl ProfileSpec {
    /// Resolves relative tabulated paths against `base`.
    pub fn build(&self, base: &Path) -> Result<Profile> {
        let check = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::ProfileOutOfRange { value: v, location: format!("preset parameter {name}") })
            }
        };
        match *self {
            ProfileSpec::Flat { c } => {
                check("c", c)?;
                Ok(Profile { name: format!("flat({c})"), field: Arc::new(move |_, _| c), road: Arc::new(move |_| c) })
            }
            ProfileSpec::CosMode { level, a, road_amp } => {
                check("level - |a|", level - a.abs())?;
                check("level + |a|", level + a.abs())?;
                check("level - |road_amp|", level - road_amp.abs())?;
                check("level + |road_amp|", level + road_amp.abs())?;
                Ok(Profile {
                    name: format!("cos-mode({level},{a},{road_amp})"),
                    field: Arc::new(move |x, y| level + a * (2.0 * PI * x[0]).cos() * (PI * y).cos()),
                    road: Arc::new(move |x| level + road_amp * (2.0 * PI * x[0]).cos()),
                })
            }
            ProfileSpec::Step { left, right, road } => {
                check("left", left)?;
                check("right", right)?;
                check("road", road)?;
                Ok(Profile {
                    name: format!("step({left},{right},{road})"),
                    field: Arc::new(move |x, _| if x[0] < 0.5 { left } else { right }),
                    road: Arc::new(move |_| road),
                })
            }
            ProfileSpec::Tabulated { ref field, ref road } => {
                let fpath = base.join(field);
                let rpath = base.join(road);
                let frows = read_numeric_csv(&fpath)?;
                let rrows = read_numeric_csv(&rpath)?;
                if frows.is_empty() || frows.iter().any(|r| r.len() != 3) {
                    return Err(Error::Config(format!("{}: expected rows `x, y, value`", fpath.display())));
                }
                if rrows.is_empty() || rrows.iter().any(|r| r.len() != 2) {
                    return Err(Error::Config(format!("{}: expected rows `x, value`", rpath.display())));
                }
                for r in frows.iter().chain(&rrows) {
                    check("tabulated value", r[r.len() - 1])?;
                }
                let xs = sorted_unique(frows.iter().map(|r| r[0]).collect());
                let ys = sorted_unique(frows.iter().map(|r| r[1]).collect());
                let mut table = vec![f64::NAN; xs.len() * ys.len()];
                for r in &frows {
                    table[nearest(&ys, r[1]) * xs.len() + nearest(&xs, r[0])] = r[2];
                }
                if table.iter().any(|v| v.is_nan()) {
                    return Err(Error::Config(format!("{}: field table is not a full tensor grid", fpath.display())));
                }
                let rxs: Vec<f64> = rrows.iter().map(|r| r[0]).collect();
                let rvals: Vec<f64> = rrows.iter().map(|r| r[1]).collect();
                Ok(Profile {
                    name: "tabulated".into(),
                    field: Arc::new(move |x, y| table[nearest(&ys, y) * xs.len() + nearest(&xs, x[0])]),
                    road: Arc::new(move |x| rvals[nearest(&rxs, x[0])]),
                })
            }
        }
    }
}

/// Named test-function pair families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PairSpec {
    /// `G = e^{-lambda t} cos(2 pi k.x) cos(m pi y)`, `H = road_amp e^{-mu t} cos(2 pi k.x)`.
    Fourier { k: Vec<i32>, m: u32, lambda: f64, road_amp: f64, mu: f64 },
    /// `G = B_T(t) amp cos(2 pi k.x + phase) y^2 (1-y)^2 cos(r pi y)`, `H = road_amp cos(2 pi k.x)`.
    Bump { k: Vec<i32>, phase: f64, r: u32, amp: f64, horizon: f64, road_amp: f64 },
    /// `G = 0`, `H = amp cos(2 pi k.x)`.
    Road { k: Vec<i32>, amp: f64 },
    /// `G = c`, `H = 0`.
    Constant { c: f64 },
}

impl PairSpec {
    pub fn build(&self, p: usize) -> Result<TestFunctionPair<f64>> {
        let dims = p - 1;
        let check_k = |k: &[i32]| {
            if k.len() == dims {
                Ok(())
            } else {
                Err(Error::Config(format!("wave vector {k:?} needs {dims} components for p = {p}")))
            }
        };
        Ok(match self {
            PairSpec::Fourier { k, m, lambda, road_amp, mu } => {
                check_k(k)?;
                TestFunctionPair::fourier(k.clone(), *m, *lambda, *road_amp, *mu)
            }
            PairSpec::Bump { k, phase, r, amp, horizon, road_amp } => {
                check_k(k)?;
                TestFunctionPair::new(
                    TimeFactor::bump(*horizon),
                    FieldMode::bump(*amp, k.clone(), *phase, *r),
                    TimeFactor::one(),
                    XWave { amp: *road_amp, k: k.clone(), phase: 0.0 },
                )
            }
            PairSpec::Road { k, amp } => {
                check_k(k)?;
                TestFunctionPair::new(
                    TimeFactor::one(),
                    FieldMode::zero(p),
                    TimeFactor::one(),
                    XWave { amp: *amp, k: k.clone(), phase: 0.0 },
                )
            }
            PairSpec::Constant { c } => TestFunctionPair::constant_field(*c, p),
        })
    }

    pub fn label(&self) -> String {
        match self {
            PairSpec::Fourier { k, m, .. } => format!("fourier{k:?}m{m}"),
            PairSpec::Bump { k, r, .. } => format!("bump{k:?}r{r}"),
            PairSpec::Road { k, .. } => format!("road{k:?}"),
            PairSpec::Constant { c } => format!("constant({c})"),
        }
        .replace([' ', ','], "")
    }
}

fn default_pairs() -> Vec<PairSpec> {
    vec![
        PairSpec::Fourier { k: vec![1], m: 1, lambda: 1.0, road_amp: 1.0, mu: 1.0 },
        PairSpec::Bump { k: vec![2], phase: 0.3, r: 1, amp: 1.0, horizon: 0.1, road_amp: 0.5 },
        PairSpec::Road { k: vec![1], amp: 1.0 },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    /// Cells per axis.
    pub cells: usize,
    pub cfl_safety: f64,
    /// Horizon of the `pde` experiment; snapshots at `times` are emitted.
    pub t_end: f64,
    /// Resolutions of the refinement studies.
    pub refinement: Vec<usize>,
    /// Fine reference resolution of the x-independent self-convergence study.
    pub reference_cells: usize,
    pub steps: usize,
    pub long_time: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            cells: 128,
            cfl_safety: 0.4,
            t_end: 0.1,
            refinement: vec![16, 32, 64],
            reference_cells: 256,
            steps: 10_000,
            long_time: 6.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    /// Coarse cells per axis.
    pub bins: usize,
    pub pairs: Vec<PairSpec>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { bins: 8, pairs: default_pairs() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law", deny_unknown_fields)]
pub enum OracleInitial {
    /// Product measure of the configured profile.
    Product,
    /// Point mass on the given state code.
    Dirac { state: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub p: usize,
    pub n: usize,
    pub trajectories: usize,
    pub times: Vec<f64>,
    pub initial: OracleInitial,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { p: 2, n: 3, trajectories: 100_000, times: vec![0.05, 0.1], initial: OracleInitial::Product }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirichletConfig {
    pub p: usize,
    pub n: usize,
    /// Random densities per identity check.
    pub trials: usize,
    pub gamma: f64,
    /// Random measures per reference density in the entropy check.
    pub entropy_samples: usize,
    pub entropy_gammas: Vec<f64>,
}

impl Default for DirichletConfig {
    fn default() -> Self {
        DirichletConfig { p: 2, n: 3, trials: 100, gamma: 0.5, entropy_samples: 1000, entropy_gammas: vec![0.25, 0.5, 0.75] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Martingale,
    QvScaling,
    Replacement,
    Energy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MartingaleConfig {
    pub n: usize,
    pub trajectories: usize,
    pub times: Vec<f64>,
    pub pairs: Vec<PairSpec>,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        MartingaleConfig { n: 32, trajectories: 200, times: vec![0.025, 0.05, 0.075, 0.1], pairs: default_pairs() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QvScalingConfig {
    /// Exactly two sizes, the second twice the first.
    pub n: Vec<usize>,
    pub trajectories: usize,
    pub t: f64,
    pub pairs: Vec<PairSpec>,
    pub band: [f64; 2],
}

impl Default for QvScalingConfig {
    fn default() -> Self {
        QvScalingConfig {
            n: vec![16, 32],
            trajectories: 1000,
            t: 0.1,
            pairs: vec![PairSpec::Fourier { k: vec![1], m: 1, lambda: 1.0, road_amp: 1.0, mu: 1.0 }],
            band: [1.4, 2.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplacementConfig {
    /// Sizes for the study at fixed `eps`.
    pub n: Vec<usize>,
    pub eps: f64,
    /// Box sizes for the study at fixed `eps_n`, in decreasing order.
    pub eps_list: Vec<f64>,
    pub eps_n: usize,
    pub trajectories: usize,
    pub t: f64,
}

impl Default for ReplacementConfig {
    fn default() -> Self {
        ReplacementConfig { n: vec![16, 32, 64], eps: 0.1, eps_list: vec![0.2, 0.1, 0.05], eps_n: 64, trajectories: 100, t: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub cells: usize,
    pub family_size: usize,
    pub t_end: f64,
    pub snapshots: usize,
    /// Required fraction of the closed-form cap.
    pub fraction: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig { cells: 32, family_size: 32, t_end: 0.1, snapshots: 20, fraction: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub list: Vec<DiagnosticKind>,
    pub martingale: MartingaleConfig,
    pub qv_scaling: QvScalingConfig,
    pub replacement: ReplacementConfig,
    pub energy: EnergyConfig,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            list: vec![DiagnosticKind::Martingale, DiagnosticKind::QvScaling, DiagnosticKind::Replacement, DiagnosticKind::Energy],
            martingale: MartingaleConfig::default(),
            qv_scaling: QvScalingConfig::default(),
            replacement: ReplacementConfig::default(),
            energy: EnergyConfig::default(),
        }
    }
}

/// Everything an experiment needs. Every field has a default, so an empty
/// file is a valid configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub seed: u64,
    /// Worker threads; defaults to one per core. Does not affect results,
    /// so it is left out of the config hash.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub p: usize,
    /// Lattice sizes, ascending.
    pub n: Vec<usize>,
    /// Trajectory count `M`.
    pub trajectories: usize,
    pub times: Vec<f64>,
    pub event_cap: usize,
    pub model: ModelConfig,
    pub profile: ProfileSpec,
    pub pde: PdeConfig,
    pub convergence: ConvergenceConfig,
    pub oracle: OracleConfig,
    pub dirichlet: DirichletConfig,
    pub diagnostics: DiagnosticsConfig,
    /// Directory that relative tabulated-profile paths are resolved
    /// against; set by [`ExperimentConfig::from_file`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            seed: 20240917,
            workers: None,
            output_dir: None,
            p: 2,
            n: vec![16, 32, 64],
            trajectories: 200,
            times: vec![0.05, 0.1],
            event_cap: 100_000_000,
            model: ModelConfig::default(),
            profile: ProfileSpec::default(),
            pde: PdeConfig::default(),
            convergence: ConvergenceConfig::default(),
            oracle: OracleConfig::default(),
            dirichlet: DirichletConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        cfg.profile.build(&cfg.base_dir)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(2..=3).contains(&self.p) {
            return err(format!("p must be 2 or 3, got {}", self.p));
        }
        if self.trajectories == 0 {
            return err("trajectory count M must be at least 1".into());
        }
        if self.n.is_empty() || self.n.windows(2).any(|w| w[0] >= w[1]) {
            return err(format!("N list must be non-empty and strictly ascending, got {:?}", self.n));
        }
        if self.times.windows(2).any(|w| w[0] > w[1]) || self.times.iter().any(|&t| !(t >= 0.0)) {
            return err(format!("observation times must be sorted and nonnegative, got {:?}", self.times));
        }
        if self.workers == Some(0) {
            return err("workers must be at least 1".into());
        }
        self.model.params()?;
        let d = &self.diagnostics;
        if d.qv_scaling.n.len() != 2 {
            return err("qv_scaling.n must list exactly two sizes".into());
        }
        if d.replacement.eps_list.windows(2).any(|w| w[0] <= w[1]) {
            return err("replacement.eps_list must be strictly decreasing".into());
        }
        if d.replacement.n.windows(2).any(|w| w[0] >= w[1]) {
            return err("replacement.n must be strictly ascending".into());
        }
        for pair in self.convergence.pairs.iter().chain(&d.martingale.pairs).chain(&d.qv_scaling.pairs) {
            pair.build(self.p)?;
        }
        Ok(())
    }

    /// Canonical JSON text of the parsed configuration.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hash of the canonical text plus the contents of any tabulated
    /// profile files.
    pub fn hash(&self) -> String {
        let mut text = self.canonical();
        if let ProfileSpec::Tabulated { field, road } = &self.profile {
            for f in [field, road] {
                text.push('\n');
                text.push_str(&std::fs::read_to_string(self.base_dir.join(f)).unwrap_or_default());
            }
        }
        config_hash(&text)
    }

    pub fn profile(&self) -> Result<Profile> {
        self.profile.build(&self.base_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.hash(), ExperimentConfig::default().hash());
        let mut w = cfg.clone();
        w.workers = Some(3);
        w.output_dir = Some(PathBuf::from("elsewhere"));
        assert_eq!(w.hash(), cfg.hash());
        w.seed += 1;
        assert_ne!(w.hash(), cfg.hash());
    }

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seed = 7
            n = [8, 16]
            trajectories = 10
            [model]
            alpha = 2.0
            [profile]
            preset = "flat"
            c = 0.25
            [[convergence.pairs]]
            kind = "road"
            k = [1]
            amp = 1.0
            [diagnostics]
            list = ["energy"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.alpha, 2.0);
        assert_eq!(cfg.profile, ProfileSpec::Flat { c: 0.25 });
        assert_eq!(cfg.diagnostics.list, vec![DiagnosticKind::Energy]);
        assert_eq!(cfg.convergence.pairs.len(), 1);
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("trajectories = 0").is_err());
        assert!(ExperimentConfig::from_toml("n = [32, 16]").is_err());
        assert!(ExperimentConfig::from_toml("typo = 1").is_err());
        assert!(ExperimentConfig::from_toml("[profile]\npreset = \"nope\"").is_err());
        let bad = ExperimentConfig::from_toml("[profile]\npreset = \"flat\"\nc = 1.5").unwrap();
        assert!(matches!(bad.profile(), Err(Error::ProfileOutOfRange { .. })));
    }

    #[test]
    fn presets_evaluate() {
        let base = Path::new(".");
        let cos = ProfileSpec::CosMode { level: 0.5, a: 0.3, road_amp: 0.1 }.build(base).unwrap();
        assert!((cos.v0(&[0.0], 0.0) - 0.8).abs() < 1e-15);
        assert!((cos.u0(&[0.5]) - 0.4).abs() < 1e-15);
        let step = ProfileSpec::Step { left: 1.0, right: 0.0, road: 0.5 }.build(base).unwrap();
        assert_eq!((step.v0(&[0.25], 0.3), step.v0(&[0.75], 0.3)), (1.0, 0.0));
        assert!(ProfileSpec::Flat { c: 0.5 }.build(base).unwrap().is_flat());
    }
}
