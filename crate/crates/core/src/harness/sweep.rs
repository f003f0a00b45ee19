//! Monte-Carlo sweeps over noise level or point count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{error_distance, error_normal, error_reprojection, DistanceScale};
use crate::baselines::{calibrate_with_reference, ReferenceMethod};
use crate::error::{Error, Result};
use crate::geometry::{MirrorPlane, ReflectionSequence};
use crate::linear::calibrate_linear;
use crate::lm::LmConfig;
use crate::refine::{bundle_adjust, bundle_adjust_mirrors};
use crate::synth::{default_rig, generate, GroundTruth, KaleidoscopicObservation, Layout, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ProposedLinear,
    ProposedBa,
    Baseline,
    Takahashi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ProposedLinear => "proposed-linear",
            Method::ProposedBa => "proposed-ba",
            Method::Baseline => "baseline",
            Method::Takahashi => "takahashi",
        }
    }
}

/// A method together with the scene points it is run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub layout: Layout,
    /// Number of points. Overridden by the level on a point-count sweep.
    pub count: usize,
    /// Chambers the method may use. Defaults to all generated chambers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chambers: Option<Vec<ReflectionSequence>>,
    /// Follow a reference-object method with the kaleidoscopic bundle
    /// adjustment. Ignored by the proposed methods.
    #[serde(default)]
    pub refine: bool,
}

impl MethodConfig {
    pub fn new(method: Method, layout: Layout, count: usize) -> Self {
        Self {
            method,
            layout,
            count,
            chambers: None,
            refine: false,
        }
    }

    /// A reference-object method followed by bundle adjustment.
    pub fn refined(method: Method, layout: Layout, count: usize) -> Self {
        Self {
            refine: true,
            ..Self::new(method, layout, count)
        }
    }

    fn is_refined_reference(&self) -> bool {
        self.refine && matches!(self.method, Method::Baseline | Method::Takahashi)
    }

    /// Label such as `proposed-ba/planar/5` or `baseline+ba/planar/5`.
    pub fn label(&self) -> String {
        let layout = match self.layout {
            Layout::Random => "random",
            Layout::Planar => "planar",
        };
        let suffix = if self.is_refined_reference() { "+ba" } else { "" };
        format!("{}{}/{}/{}", self.method.name(), suffix, layout, self.count)
    }
}

/// The method and point configurations of the evaluation figures, plus the
/// unrefined reference-object methods.
pub fn default_methods() -> Vec<MethodConfig> {
    use Method::*;
    let mut out = Vec::new();
    for (layout, count) in [(Layout::Random, 5), (Layout::Planar, 5), (Layout::Random, 1)] {
        out.push(MethodConfig::new(ProposedLinear, layout, count));
        out.push(MethodConfig::new(ProposedBa, layout, count));
    }
    for method in [Baseline, Takahashi] {
        out.push(MethodConfig::new(method, Layout::Planar, 5));
        out.push(MethodConfig::refined(method, Layout::Planar, 5));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Pixel noise standard deviation.
    Sigma,
    /// Number of scene points.
    Points,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub levels: Vec<f64>,
    /// Noise level used when sweeping over the point count.
    #[serde(default = "default_fixed_sigma")]
    pub fixed_sigma: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodConfig>,
    #[serde(default = "default_rig")]
    pub scene: SceneConfig,
}

fn default_fixed_sigma() -> f64 {
    1.0
}

fn default_trials() -> usize {
    100
}

impl SweepSpec {
    /// σ ∈ {0, 0.5, 1, 1.5, 2} px with five points.
    pub fn noise_sweep(trials: usize, seed: u64) -> Self {
        Self {
            axis: SweepAxis::Sigma,
            levels: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            fixed_sigma: default_fixed_sigma(),
            trials,
            seed,
            methods: default_methods(),
            scene: default_rig(),
        }
    }

    /// `N_p ∈ {1, 2, 3, 5, 8}` at σ = 1 px. Every method runs at each count.
    pub fn point_sweep(trials: usize, seed: u64) -> Self {
        Self {
            axis: SweepAxis::Points,
            levels: vec![1.0, 2.0, 3.0, 5.0, 8.0],
            ..Self::noise_sweep(trials, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("no sweep levels".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods".into()));
        }
        for &v in &self.levels {
            let ok = match self.axis {
                SweepAxis::Sigma => v.is_finite() && v >= 0.0,
                SweepAxis::Points => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::Config(format!("invalid sweep level {v}")));
            }
        }
        if !(self.fixed_sigma.is_finite() && self.fixed_sigma >= 0.0) {
            return Err(Error::Config(format!("invalid fixed sigma {}", self.fixed_sigma)));
        }
        for m in &self.methods {
            if let Some(ch) = &m.chambers {
                if let Some(s) = ch.iter().find(|s| !self.scene.sequences.contains(s)) {
                    return Err(Error::Config(format!("chamber {s} is not generated")));
                }
            }
        }
        self.scene.validate()
    }

    /// Scene of one method at one level, before the trial seed offset. The
    /// sweep seed replaces the scene seed.
    /// Methods that run at each level. On the point-count axis the level sets
    /// the count, so configurations differing only in count collapse into
    /// the first of them.
    pub fn active_methods(&self) -> Vec<MethodConfig> {
        match self.axis {
            SweepAxis::Sigma => self.methods.clone(),
            SweepAxis::Points => {
                let mut out: Vec<MethodConfig> = Vec::new();
                for m in &self.methods {
                    let m = MethodConfig { count: 0, ..m.clone() };
                    if !out.contains(&m) {
                        out.push(m);
                    }
                }
                out
            }
        }
    }

    fn scene_for(&self, method: &MethodConfig, level: f64) -> SceneConfig {
        let mut scene = self.scene.clone();
        scene.seed = self.seed;
        scene.points.layout = method.layout;
        match self.axis {
            SweepAxis::Sigma => {
                scene.noise_sigma = level;
                scene.points.count = method.count;
            }
            SweepAxis::Points => {
                scene.noise_sigma = self.fixed_sigma;
                scene.points.count = level as usize;
            }
        }
        scene
    }
}

/// Errors of one method on one trial. Degenerate trials carry NaN errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub e_n: f64,
    pub e_d: f64,
    pub e_rep: f64,
    /// Bundle-adjustment iterations for refined methods, total PnP
    /// iterations for unrefined reference-object methods, 0 otherwise.
    pub n_iter: usize,
    pub degenerate: bool,
}

impl TrialResult {
    pub fn degenerate() -> Self {
        Self {
            e_n: f64::NAN,
            e_d: f64::NAN,
            e_rep: f64::NAN,
            n_iter: 0,
            degenerate: true,
        }
    }
}

fn scored(
    mirrors: &[MirrorPlane; 3],
    scale: DistanceScale,
    n_iter: usize,
    truth: &GroundTruth,
    obs: &[KaleidoscopicObservation],
    scene: &SceneConfig,
) -> TrialResult {
    let normals = mirrors.map(|m| *m.normal());
    let distances = mirrors.map(|m| m.distance());
    match error_reprojection(mirrors, obs, &scene.intrinsics) {
        Ok(e_rep) => TrialResult {
            e_n: error_normal(&normals, &truth.normals()),
            e_d: error_distance(&distances, &truth.distances(), scale),
            e_rep,
            n_iter,
            degenerate: false,
        },
        Err(_) => TrialResult::degenerate(),
    }
}

/// Runs one method on one generated scene.
///
/// The reprojection error is measured on every generated chamber, whatever
/// subset the method used.
pub fn run_trial(
    method: &MethodConfig,
    truth: &GroundTruth,
    obs: &[KaleidoscopicObservation],
    scene: &SceneConfig,
) -> TrialResult {
    let used: Vec<KaleidoscopicObservation> = match &method.chambers {
        Some(ch) => obs.iter().map(|o| o.restricted_to(ch)).collect(),
        None => obs.to_vec(),
    };
    let a = &scene.intrinsics;
    match method.method {
        Method::ProposedLinear | Method::ProposedBa => {
            let linear = match calibrate_linear(&used, a) {
                Ok(l) if !l.diagnostics.is_degenerate() => l,
                _ => return TrialResult::degenerate(),
            };
            if method.method == Method::ProposedLinear {
                return scored(&linear.mirrors, DistanceScale::Relative, 0, truth, obs, scene);
            }
            match bundle_adjust(&linear, &used, a) {
                Ok((mirrors, report)) => scored(
                    &mirrors,
                    DistanceScale::Relative,
                    report.iterations,
                    truth,
                    obs,
                    scene,
                ),
                Err(_) => TrialResult::degenerate(),
            }
        }
        Method::Baseline | Method::Takahashi => {
            let kind = if method.method == Method::Baseline {
                ReferenceMethod::Baseline
            } else {
                ReferenceMethod::Takahashi
            };
            let result = truth
                .reference_object()
                .and_then(|object| calibrate_with_reference(kind, &used, &object, a));
            let (mirrors, iterations) = match result {
                Ok(r) => r,
                Err(_) => return TrialResult::degenerate(),
            };
            if !method.refine {
                return scored(&mirrors, DistanceScale::Metric, iterations, truth, obs, scene);
            }
            match bundle_adjust_mirrors(&mirrors, &used, a, &LmConfig::default()) {
                Ok((mirrors, report)) => scored(
                    &mirrors,
                    DistanceScale::Relative,
                    report.iterations,
                    truth,
                    obs,
                    scene,
                ),
                Err(_) => TrialResult::degenerate(),
            }
        }
    }
}

/// Aggregate of one (level, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub method: String,
    pub mean_e_n: f64,
    pub std_e_n: f64,
    pub mean_e_d: f64,
    pub std_e_d: f64,
    pub mean_e_rep: f64,
    pub std_e_rep: f64,
    pub mean_n_iter: f64,
    pub degenerate_count: usize,
    pub trials: usize,
}

/// Mean and sample standard deviation (0 for fewer than two values, NaN for none).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl SweepRow {
    pub fn aggregate(axis_value: f64, method: String, results: &[TrialResult]) -> Self {
        let ok: Vec<&TrialResult> = results.iter().filter(|r| !r.degenerate).collect();
        let col = |f: fn(&TrialResult) -> f64| mean_std(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (mean_e_n, std_e_n) = col(|r| r.e_n);
        let (mean_e_d, std_e_d) = col(|r| r.e_d);
        let (mean_e_rep, std_e_rep) = col(|r| r.e_rep);
        let (mean_n_iter, _) = col(|r| r.n_iter as f64);
        Self {
            axis_value,
            method,
            mean_e_n,
            std_e_n,
            mean_e_d,
            std_e_d,
            mean_e_rep,
            std_e_rep,
            mean_n_iter,
            degenerate_count: results.len() - ok.len(),
            trials: results.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: &str = "axis_value,method,mean_e_n,std_e_n,mean_e_d,std_e_d,\
mean_e_rep,std_e_rep,mean_n_iter,degenerate_count,trials";

/// Fixed-point decimal with `digits` significant digits.
pub fn format_significant(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can carry into a new leading digit (9.99…→10.0…); drop one decimal then.
    let rounded: f64 = s.parse().unwrap_or(v);
    if decimals > 0 && rounded.abs().log10().floor() as i64 > magnitude {
        format!("{v:.*}", decimals - 1)
    } else {
        s
    }
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let f = |v: f64| format_significant(v, 9);
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let axis = match self.axis {
                SweepAxis::Points => format!("{}", r.axis_value as usize),
                SweepAxis::Sigma => f(r.axis_value),
            };
            let fields = [
                axis,
                r.method.clone(),
                f(r.mean_e_n),
                f(r.std_e_n),
                f(r.mean_e_d),
                f(r.std_e_d),
                f(r.mean_e_rep),
                f(r.std_e_rep),
                f(r.mean_n_iter),
                r.degenerate_count.to_string(),
                r.trials.to_string(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn row(&self, axis_value: f64, method: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.axis_value == axis_value && r.method == method)
    }
}

type Generated = (GroundTruth, Vec<KaleidoscopicObservation>);

/// All per-trial results, indexed `[level][method][trial]` with methods as
/// in [`SweepSpec::active_methods`].
pub type TrialGrid = Vec<Vec<Vec<TrialResult>>>;

/// Runs every trial of the sweep. Trials run in parallel, but the results
/// depend only on the spec.
///
/// Trial `t` of every cell uses seed `seed + t`, so methods sharing a point
/// configuration see identical observations.
pub fn run_trials(spec: &SweepSpec) -> Result<TrialGrid> {
    spec.validate()?;
    let methods = spec.active_methods();
    let jobs: Vec<(usize, usize)> = (0..spec.levels.len())
        .flat_map(|l| (0..spec.trials).map(move |t| (l, t)))
        .collect();
    let results: Vec<Vec<TrialResult>> = jobs
        .par_iter()
        .map(|&(l, t)| {
            let level = spec.levels[l];
            let mut cache: Vec<(SceneConfig, Result<Generated>)> = Vec::new();
            methods
                .iter()
                .map(|m| {
                    let scene = spec.scene_for(m, level).for_trial(t as u64);
                    let idx = match cache.iter().position(|(s, _)| *s == scene) {
                        Some(i) => i,
                        None => {
                            let generated = generate(&scene);
                            cache.push((scene, generated));
                            cache.len() - 1
                        }
                    };
                    let (scene, generated) = &cache[idx];
                    match generated {
                        Ok((truth, obs)) => run_trial(m, truth, obs, scene),
                        Err(_) => TrialResult::degenerate(),
                    }
                })
                .collect()
        })
        .collect();

    let mut grid: TrialGrid = vec![vec![Vec::with_capacity(spec.trials); methods.len()]; spec.levels.len()];
    for (&(l, _), per_method) in jobs.iter().zip(results) {
        for (m, r) in per_method.into_iter().enumerate() {
            grid[l][m].push(r);
        }
    }
    Ok(grid)
}

/// Runs the sweep and aggregates each (level, method) cell.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    let grid = run_trials(spec)?;
    let methods = spec.active_methods();
    let mut rows = Vec::new();
    for (l, per_method) in grid.iter().enumerate() {
        for (m, results) in per_method.iter().enumerate() {
            let mut cfg = methods[m].clone();
            if spec.axis == SweepAxis::Points {
                cfg.count = spec.levels[l] as usize;
            }
            rows.push(SweepRow::aggregate(spec.levels[l], cfg.label(), results));
        }
    }
    Ok(SweepTable {
        axis: spec.axis,
        rows,
    })
}
