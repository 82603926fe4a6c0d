//! The `selfsim` command line. Each subcommand parses its inputs, calls one
//! library entry point and prints JSON on stdout.

pub mod render;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use selfsim_core::certify::{certify, Budgets, Certificate};
use selfsim_core::check::check_certificate;
use selfsim_core::derotation::derotate;
use selfsim_core::dimension::{box_dimension, default_scales, moran_root, sample_attractor};
use selfsim_core::distance::{sample_pinned_distances, Cone};
use selfsim_core::ifs::{generation_balls, normalize_into_ball, Normalized, DEFAULT_BUDGET};
use selfsim_core::projection::scan_directions;
use selfsim_core::separation::extract_separated_subsystem;
use selfsim_core::{Point, SpecFile};

use render::{render, RenderSpec};

pub const BUDGET_ENV: &str = "SELFSIM_BUDGET";

#[derive(Debug, Parser)]
#[command(
    name = "selfsim",
    version,
    about = "Distance-set dimension bounds for planar self-similar sets"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Similarity dimension (Moran root of the ratios).
    Dim { spec: PathBuf },
    /// Box-counting dimension of a chaos-game sample.
    Boxdim {
        spec: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        points: usize,
    },
    /// Generation-n balls.
    Balls {
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        generation: usize,
    },
    /// Separated subsystem of dimension above a target.
    Separate {
        spec: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 8)]
        max_gen: usize,
    },
    /// Identity-type subsystem with Moran root above 1 − ε.
    Derotate {
        spec: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 12)]
        max_iter: usize,
    },
    /// Good projection directions on a half-circle grid, as JSON lines.
    ProjectScan {
        derotated: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 360)]
        grid: usize,
        #[arg(long, default_value_t = 6)]
        max_gen: usize,
    },
    /// Builds a certificate.
    Certify {
        spec: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        sep_max_gen: Option<usize>,
        #[arg(long)]
        derot_max_iter: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        family_max_gen: Option<usize>,
        #[arg(long)]
        k0_depth: Option<usize>,
        #[arg(long)]
        cantor_depth: Option<usize>,
        #[arg(long)]
        cone_samples: Option<usize>,
    },
    /// Re-validates a certificate independently.
    Check { certificate: PathBuf },
    /// Distances from a point to a chaos-game sample.
    Pinned {
        spec: PathBuf,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
    },
    /// PNG of generation balls and cones.
    Render {
        spec: PathBuf,
        /// Comma-separated generations, e.g. 1,2; empty for none.
        #[arg(long, default_value = "1")]
        gens: String,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        width: u32,
        #[arg(long, default_value_t = 512)]
        height: u32,
        /// Cone as `apex_x,apex_y,axis_x,axis_y,alpha`; repeatable.
        #[arg(long)]
        cone: Vec<String>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] selfsim_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error("certificate rejected by {0} check(s)")]
    Rejected(usize),
}

impl CliError {
    pub fn kind(&self) -> String {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io".into(),
            CliError::Json { .. } => "json".into(),
            CliError::Usage(_) => "usage".into(),
            CliError::Image(_) => "image".into(),
            CliError::Rejected(_) => "check".into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Core(selfsim_core::Error::Certify(e)) = self {
            body["stage"] = json!(e.stage);
            body["detail"] = json!(e.detail);
        }
        json!({ "error": body })
    }
}

fn core<E: Into<selfsim_core::Error>>(e: E) -> CliError {
    CliError::Core(e.into())
}

/// Parses `argv` and runs the command; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.exit_code()
        }
    }
}

/// Enumeration budget from the environment, or the default.
pub fn budget() -> Result<usize, CliError> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&b| b > 0)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "{BUDGET_ENV} must be a positive integer, got {v:?}"
                ))
            }),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A spec file, or any JSON object holding one under `"spec"` (such as
/// the output of `derotate`).
pub fn load_spec(path: &Path) -> Result<SpecFile, CliError> {
    let text = read(path)?;
    let json_err = |source| CliError::Json {
        path: path.display().to_string(),
        source,
    };
    let mut value: Value = serde_json::from_str(&text).map_err(json_err)?;
    if value.get("maps").is_none() {
        if let Some(inner) = value.get_mut("spec") {
            value = inner.take();
        }
    }
    serde_json::from_value(value).map_err(json_err)
}

/// The spec's system scaled into the reference ball.
pub fn load_system(path: &Path) -> Result<(SpecFile, Normalized), CliError> {
    let spec = load_spec(path)?;
    let maps = spec.similitudes().map_err(core)?;
    let normalized = normalize_into_ball(maps).map_err(core)?;
    Ok((spec, normalized))
}

fn print(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string(v).map_err(|source| CliError::Json {
        path: "<stdout>".into(),
        source,
    })?;
    writeln!(out, "{text}").map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn parse_gens(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad generation {t:?}")))
        })
        .collect()
}

fn parse_cone(s: &str) -> Result<Cone, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad cone {s:?}")))?;
    if v.len() != 5 {
        return Err(CliError::Usage(format!("cone {s:?} needs five numbers")));
    }
    Ok(Cone {
        apex: Point::new(v[0], v[1]),
        axis: Point::new(v[2], v[3]).normalized(),
        alpha: v[4],
    })
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let budget = budget()?;
    let seed = cli.seed;
    match &cli.command {
        Command::Dim { spec } => {
            let (_, n) = load_system(spec)?;
            let root = moran_root(&n.system.ratios(), 1.0).map_err(core)?;
            print(out, &root.value)
        }
        Command::Boxdim { spec, points } => {
            let (_, n) = load_system(spec)?;
            let sample = sample_attractor(&n.system, *points, seed);
            let est = box_dimension(&sample, &default_scales()).map_err(core)?;
            print(out, &est)
        }
        Command::Balls { spec, generation } => {
            let (_, n) = load_system(spec)?;
            let balls = generation_balls(&n.system, *generation, budget).map_err(core)?;
            print(out, &balls)
        }
        Command::Separate {
            spec,
            target,
            max_gen,
        } => {
            let (_, n) = load_system(spec)?;
            let sep =
                extract_separated_subsystem(&n.system, *target, *max_gen, budget).map_err(core)?;
            let sub = sep.system(&n.system).map_err(core)?;
            print(
                out,
                &json!({ "separated": sep, "spec": SpecFile::from_system(&sub) }),
            )
        }
        Command::Derotate {
            spec,
            eps,
            max_iter,
        } => {
            let (_, n) = load_system(spec)?;
            let d = derotate(&n.system, *eps, *max_iter, budget).map_err(core)?;
            print(
                out,
                &json!({
                    "words": d.words,
                    "iterations": d.iterations,
                    "mass_trace": d.mass_trace,
                    "c": d.c,
                    "spec": SpecFile::from_system(&d.system),
                }),
            )
        }
        Command::ProjectScan {
            derotated,
            eps,
            grid,
            max_gen,
        } => {
            let (_, n) = load_system(derotated)?;
            for fam in scan_directions(&n.system, *eps, *grid, *max_gen, budget) {
                print(out, &fam)?;
            }
            Ok(())
        }
        Command::Certify {
            spec,
            eps,
            out: path,
            sep_max_gen,
            derot_max_iter,
            grid,
            family_max_gen,
            k0_depth,
            cantor_depth,
            cone_samples,
        } => {
            let spec_file = load_spec(spec)?;
            let d = Budgets::default();
            let budgets = Budgets {
                enumeration: budget,
                separation_generations: sep_max_gen.unwrap_or(d.separation_generations),
                derotation_iterations: derot_max_iter.unwrap_or(d.derotation_iterations),
                scan_grid: grid.unwrap_or(d.scan_grid),
                family_generations: family_max_gen.unwrap_or(d.family_generations),
                k0_depth: k0_depth.unwrap_or(d.k0_depth),
                cantor_depth: cantor_depth.unwrap_or(d.cantor_depth),
                cone_samples: cone_samples.unwrap_or(d.cone_samples),
                ..d
            };
            let cert = certify(&spec_file, *eps, &budgets, seed).map_err(core)?;
            match path {
                Some(p) => {
                    write_file(p, &cert.to_json())?;
                    print(
                        out,
                        &json!({ "branch": cert.branch, "bound": cert.bound, "out": p.display().to_string() }),
                    )
                }
                None => print(out, &cert),
            }
        }
        Command::Check { certificate } => {
            let text = read(certificate)?;
            let cert = Certificate::from_json(&text).map_err(|source| CliError::Json {
                path: certificate.display().to_string(),
                source,
            })?;
            let report = check_certificate(&cert);
            print(out, &report)?;
            if report.ok {
                Ok(())
            } else {
                Err(CliError::Rejected(report.failures().len()))
            }
        }
        Command::Pinned { spec, x, points } => {
            let (_, n) = load_system(spec)?;
            let pin = Point::new(x[0], x[1]);
            print(out, &sample_pinned_distances(&n.system, pin, *points, seed))
        }
        Command::Render {
            spec,
            gens,
            out: path,
            width,
            height,
            cone,
        } => {
            if *width == 0 || *height == 0 {
                return Err(CliError::Usage("image dimensions must be positive".into()));
            }
            let (_, n) = load_system(spec)?;
            let rs = RenderSpec {
                width: *width,
                height: *height,
                generations: parse_gens(gens)?,
                cones: cone
                    .iter()
                    .map(|c| parse_cone(c))
                    .collect::<Result<_, _>>()?,
            };
            let img = render(&n.system, &rs, budget).map_err(core)?;
            img.image.save(path)?;
            print(
                out,
                &json!({ "out": path.display().to_string(), "disks": img.disks, "width": width, "height": height }),
            )
        }
    }
}
