//! `kaleidocal`: simulate, calibrate, triangulate and sweep from the command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or other failure |
//! | 2 | unreadable or invalid input file |
//! | 3 | scene generation failed |
//! | 4 | missing chambers or missing reference object |
//! | 5 | degenerate configuration |

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use kaleidocal::baselines::{calibrate_with_reference, ReferenceMethod, ReferenceObject};
use kaleidocal::harness::{error_distance, error_normal, error_reprojection, run_sweep, DistanceScale, SweepSpec};
use kaleidocal::io::{to_json, CalibrationDiagnostics, CalibrationFile, CorrespondenceFile, PointsFile, Scale};
use kaleidocal::linear::{calibrate_linear, triangulate};
use kaleidocal::lm::LmConfig;
use kaleidocal::refine::{bundle_adjust, bundle_adjust_mirrors};
use kaleidocal::synth::{generate, GroundTruth, SceneConfig};
use kaleidocal::Error;

#[derive(Parser)]
#[command(name = "kaleidocal", version, about = "Extrinsic calibration of three-mirror kaleidoscopic cameras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic correspondence file from a scene config.
    ///
    /// Also writes `<stem>.truth.json` (ground truth) and
    /// `<stem>.reference.json` (the scene points as a reference object).
    Simulate {
        config: PathBuf,
        output: PathBuf,
    },
    /// Estimate the mirrors from a correspondence file.
    Calibrate {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Proposed)]
        method: MethodArg,
        /// Kaleidoscopic bundle adjustment after the initial estimate.
        #[arg(long, value_enum, default_value_t = Switch::On)]
        ba: Switch,
        /// Reference object (required by baseline and takahashi).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Ground-truth sidecar; adds E_n and E_d to the summary.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Triangulate every point of a correspondence file with given mirrors.
    Triangulate {
        input: PathBuf,
        calibration: PathBuf,
        output: PathBuf,
    },
    /// Run a Monte-Carlo sweep and write the CSV table.
    Sweep {
        spec: PathBuf,
        output: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Proposed,
    Baseline,
    Takahashi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Serialize)]
struct Summary {
    method: MethodArg,
    ba: bool,
    e_rep: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_d: Option<f64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn parse_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(2, format!("{}: {e}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| parse_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_failure(path, e))
}

/// Writes every file or none: each goes to a temporary sibling first.
fn write_all(files: &[(PathBuf, String)]) -> CliResult<()> {
    let tmp: Vec<PathBuf> = files
        .iter()
        .map(|(p, _)| {
            let mut name = p.file_name().unwrap_or_default().to_os_string();
            name.push(".partial");
            p.with_file_name(name)
        })
        .collect();
    let cleanup = |upto: usize| {
        for t in &tmp[..upto] {
            let _ = fs::remove_file(t);
        }
    };
    for (i, ((path, content), t)) in files.iter().zip(&tmp).enumerate() {
        if let Err(e) = fs::write(t, content) {
            cleanup(i);
            return Err(Failure::new(1, format!("{}: {e}", path.display())));
        }
    }
    for ((path, _), t) in files.iter().zip(&tmp) {
        if let Err(e) = fs::rename(t, path) {
            cleanup(tmp.len());
            return Err(Failure::new(1, format!("{}: {e}", path.display())));
        }
    }
    Ok(())
}

/// `<dir>/<stem>.<suffix>.json` next to `output`.
fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_string_lossy();
    output.with_file_name(format!("{stem}.{suffix}.json"))
}

fn library_failure(e: Error) -> Failure {
    let code = match &e {
        Error::MissingChambers(_) => 4,
        Error::InsufficientConstraints { rows, .. } if *rows < 2 => 4,
        Error::InsufficientConstraints { .. }
        | Error::DegenerateConfiguration(_)
        | Error::DegenerateIntersection(_)
        | Error::IllPosedTriangulation { .. }
        | Error::InconsistentGeometry(_)
        | Error::DegenerateSequence(_) => 5,
        Error::SequenceKey(_) | Error::MirrorIndex { .. } | Error::Intrinsics(_) | Error::Config(_) => 2,
        _ => 1,
    };
    Failure::new(code, e.to_string())
}

fn cmd_simulate(config: &Path, output: &Path) -> CliResult<()> {
    let scene: SceneConfig = read_json(config)?;
    scene.validate().map_err(|e| parse_failure(config, e))?;
    let (truth, points) = generate(&scene).map_err(|e| Failure::new(3, e.to_string()))?;
    let object = truth
        .reference_object()
        .map_err(|e| Failure::new(3, format!("reference object: {e}")));
    let file = CorrespondenceFile {
        intrinsics: scene.intrinsics,
        points,
    };
    let mut files = vec![
        (output.to_path_buf(), to_json(&file)),
        (sidecar(output, "truth"), to_json(&truth)),
    ];
    // A scene too small to serve as a reference object still simulates.
    match object {
        Ok(object) => files.push((sidecar(output, "reference"), to_json(&object))),
        Err(f) => eprintln!("warning: {}", f.message),
    }
    write_all(&files)
}

fn check_points(file: &CorrespondenceFile, path: &Path) -> CliResult<()> {
    if file.points.is_empty() {
        return Err(parse_failure(path, "no points"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    input: &Path,
    output: &Path,
    method: MethodArg,
    ba: bool,
    reference: Option<&Path>,
    truth: Option<&Path>,
) -> CliResult<()> {
    let file: CorrespondenceFile = read_json(input)?;
    check_points(&file, input)?;
    let truth: Option<GroundTruth> = truth.map(read_json).transpose()?;
    let a = &file.intrinsics;
    let obs = &file.points;

    let mut diagnostics = CalibrationDiagnostics::default();
    let (mirrors, scale) = match method {
        MethodArg::Proposed => {
            let linear = calibrate_linear(obs, a).map_err(library_failure)?;
            if linear.diagnostics.is_degenerate() {
                return Err(Failure::new(
                    5,
                    format!(
                        "degenerate configuration: {}",
                        serde_json::to_string(&linear.diagnostics).expect("serializable")
                    ),
                ));
            }
            diagnostics.linear = Some(linear.diagnostics.clone());
            let mirrors = if ba {
                let (mirrors, report) = bundle_adjust(&linear, obs, a).map_err(library_failure)?;
                diagnostics.refinement = Some(report);
                mirrors
            } else {
                linear.mirrors
            };
            (mirrors, Scale::Relative)
        }
        MethodArg::Baseline | MethodArg::Takahashi => {
            let path = reference.ok_or_else(|| {
                Failure::new(4, "the baseline and takahashi methods need --reference")
            })?;
            let object: ReferenceObject = read_json(path)?;
            object.validate().map_err(|e| parse_failure(path, e))?;
            if object.len() != obs.len() {
                return Err(parse_failure(
                    path,
                    format!("{} landmarks for {} observed points", object.len(), obs.len()),
                ));
            }
            let kind = if method == MethodArg::Baseline {
                ReferenceMethod::Baseline
            } else {
                ReferenceMethod::Takahashi
            };
            let (mirrors, iterations) =
                calibrate_with_reference(kind, obs, &object, a).map_err(library_failure)?;
            diagnostics.pnp_iterations = Some(iterations);
            if ba {
                let (mirrors, report) = bundle_adjust_mirrors(&mirrors, obs, a, &LmConfig::default())
                    .map_err(library_failure)?;
                diagnostics.refinement = Some(report);
                (mirrors, Scale::Relative)
            } else {
                (mirrors, Scale::Metric)
            }
        }
    };

    let e_rep = error_reprojection(&mirrors, obs, a).map_err(library_failure)?;
    diagnostics.e_rep = e_rep;
    let (e_n, e_d) = match &truth {
        Some(t) => {
            let dist_scale = match scale {
                Scale::Relative => DistanceScale::Relative,
                Scale::Metric => DistanceScale::Metric,
            };
            (
                Some(error_normal(&mirrors.map(|m| *m.normal()), &t.normals())),
                Some(error_distance(&mirrors.map(|m| m.distance()), &t.distances(), dist_scale)),
            )
        }
        None => (None, None),
    };
    let out = CalibrationFile {
        mirrors,
        scale,
        diagnostics,
    };
    write_all(&[(output.to_path_buf(), to_json(&out))])?;
    let summary = Summary {
        method,
        ba,
        e_rep,
        e_n,
        e_d,
    };
    println!("{}", serde_json::to_string(&summary).expect("serializable"));
    Ok(())
}

fn cmd_triangulate(input: &Path, calibration: &Path, output: &Path) -> CliResult<()> {
    let file: CorrespondenceFile = read_json(input)?;
    check_points(&file, input)?;
    let cal: CalibrationFile = read_json(calibration)?;
    let points = triangulate(&file.points, &file.intrinsics, &cal.mirrors)
        .map_err(library_failure)?
        .iter()
        .map(|p| [p.x, p.y, p.z])
        .collect();
    write_all(&[(output.to_path_buf(), to_json(&PointsFile { points }))])
}

fn cmd_sweep(spec_path: &Path, output: &Path) -> CliResult<()> {
    let spec: SweepSpec = read_json(spec_path)?;
    spec.validate().map_err(|e| parse_failure(spec_path, e))?;
    let table = run_sweep(&spec).map_err(|e| parse_failure(spec_path, e))?;
    write_all(&[(output.to_path_buf(), table.to_csv())])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, output } => cmd_simulate(config, output),
        Command::Calibrate {
            input,
            output,
            method,
            ba,
            reference,
            truth,
        } => cmd_calibrate(
            input,
            output,
            *method,
            *ba == Switch::On,
            reference.as_deref(),
            truth.as_deref(),
        ),
        Command::Triangulate {
            input,
            calibration,
            output,
        } => cmd_triangulate(input, calibration, output),
        Command::Sweep { spec, output } => cmd_sweep(spec, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
