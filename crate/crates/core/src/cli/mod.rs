//! Command-line front end: argument parsing, run manifests and exit codes.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{read_json, write_json};

pub use commands::add_noise;
pub use config::RunConfig;
pub use report::{report_table, ReportRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "bidomain", version, about = "Transmembrane potential reconstruction for the bidomain model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Synth,
    ReconstructP1,
    ReconstructP2,
    Nullspace,
    Eval,
    GreenCheck,
    HeatCheck,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an analytic shell dataset (meshes and surface fields).
    Synth(Flags),
    /// Recover v from the heart trace u_e.
    ReconstructP1(Flags),
    /// Recover v from torso data through the regularised Cauchy problem.
    ReconstructP2(Flags),
    /// Build a null-space element and check that the torso cannot see it.
    Nullspace(Flags),
    /// Compare reconstructions with the true v.
    Eval(Flags),
    /// Elliptic Green identity on a sphere.
    GreenCheck(Flags),
    /// Heat-kernel properties and the parabolic Green identity.
    HeatCheck(Flags),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Output directory (defaults to the recorded one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by every command; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat `key = value` parameter file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub heart_mesh: Option<PathBuf>,
    #[arg(long)]
    pub torso_mesh: Option<PathBuf>,
    #[arg(long)]
    pub sigma_li: Option<f64>,
    #[arg(long)]
    pub sigma_le: Option<f64>,
    #[arg(long)]
    pub m_b: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub alpha_count: Option<usize>,
    /// `lcurve`, `fixed:<alpha>` or `discrepancy:<level>`.
    #[arg(long)]
    pub selection: Option<String>,
    /// `identity` or `gradient`.
    #[arg(long)]
    pub penalty: Option<String>,
    /// Noise standard deviation as a fraction of the peak torso potential.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long)]
    pub r1: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub subdivisions: Option<usize>,
    /// Harmonic degree of the synthetic heart trace.
    #[arg(long = "l")]
    pub degree: Option<usize>,
    #[arg(long = "m", allow_hyphen_values = true)]
    pub order: Option<i32>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    pub bump_center: Option<String>,
    #[arg(long)]
    pub bump_radius: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub proportional: Option<bool>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub p1: Option<PathBuf>,
    #[arg(long)]
    pub p2: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub time_steps: Option<usize>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        macro_rules! push {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(x) = &self.$field {
                    v.push(($key, x.to_string()));
                })*
            };
        }
        macro_rules! push_path {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(x) = &self.$field {
                    v.push(($key, x.display().to_string()));
                })*
            };
        }
        push_path!(out => "out", data => "data", heart_mesh => "heart_mesh", torso_mesh => "torso_mesh",
            truth => "truth", p1 => "p1", p2 => "p2");
        push!(sigma_li => "sigma_li", sigma_le => "sigma_le", m_b => "m_b", c0 => "c0",
            alpha_min => "alpha_min", alpha_max => "alpha_max", alpha_count => "alpha_count",
            selection => "selection", penalty => "penalty", noise => "noise", seed => "seed",
            geometry => "geometry", r1 => "r1", r2 => "r2", subdivisions => "subdivisions",
            degree => "degree", order => "order", amplitude => "amplitude", bump_center => "bump_center",
            bump_radius => "bump_radius", grid_step => "grid_step", proportional => "proportional",
            label => "label", time_steps => "time_steps");
        v
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for (k, v) in self.pairs() {
            config.set(k, &v)?;
        }
        config.absolutize()?;
        Ok(config)
    }
}

/// Record written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    pub version: String,
    pub config: RunConfig,
    /// Files written into the output directory.
    pub outputs: Vec<String>,
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Runs a resolved command and writes its manifest.
pub fn execute(kind: CommandKind, config: RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let (outputs, results) = match kind {
        CommandKind::Synth => commands::synth(&config)?,
        CommandKind::ReconstructP1 => commands::reconstruct_p1(&config)?,
        CommandKind::ReconstructP2 => commands::reconstruct_p2(&config)?,
        CommandKind::Nullspace => commands::nullspace(&config)?,
        CommandKind::Eval => commands::eval(&config)?,
        CommandKind::GreenCheck => commands::green_check(&config)?,
        CommandKind::HeatCheck => commands::heat_check(&config)?,
    };
    let manifest = RunManifest {
        command: kind,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        outputs,
        results,
    };
    write_json(&manifest.config.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Maps a parsed command line to a run; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Replay { manifest, out } => RunManifest::load(&manifest).and_then(|m| {
            let mut config = m.config;
            if let Some(out) = out {
                config.out = std::path::absolute(&out).map_err(|e| Error::io(&out, e))?;
            }
            execute(m.command, config)
        }),
        Command::Synth(f) => f.resolve().and_then(|c| execute(CommandKind::Synth, c)),
        Command::ReconstructP1(f) => f.resolve().and_then(|c| execute(CommandKind::ReconstructP1, c)),
        Command::ReconstructP2(f) => f.resolve().and_then(|c| execute(CommandKind::ReconstructP2, c)),
        Command::Nullspace(f) => f.resolve().and_then(|c| execute(CommandKind::Nullspace, c)),
        Command::Eval(f) => f.resolve().and_then(|c| execute(CommandKind::Eval, c)),
        Command::GreenCheck(f) => f.resolve().and_then(|c| execute(CommandKind::GreenCheck, c)),
        Command::HeatCheck(f) => f.resolve().and_then(|c| execute(CommandKind::HeatCheck, c)),
    };
    match outcome {
        Ok(m) => {
            if let Some(text) = m.results.get("summary").and_then(|s| s.as_str()) {
                print!("{text}");
            }
            if m.results.get("pass").and_then(|p| p.as_bool()) == Some(false) {
                eprintln!("error: check failed, see {}", m.config.out.join(MANIFEST).display());
                return EXIT_SOLVER;
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_SOLVER
    }
}

/// Parses `args` (program name first) and runs; argument errors exit 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

/// Caps the global thread pool at `BIDOMAIN_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("BIDOMAIN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Invalid(format!("BIDOMAIN_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "sigma_li = 10\nm_b = 5\n").unwrap();
        let cli = Cli::try_parse_from([
            "bidomain",
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--m-b",
            "6",
            "--bump-center",
            "-0.1,0,0.2",
        ])
        .unwrap();
        let Command::Synth(flags) = cli.command else { panic!() };
        let c = flags.resolve().unwrap();
        assert_eq!((c.sigma_li, c.m_b, c.sigma_le), (10.0, 6.0, 45.0));
        assert_eq!(c.bump_center, [-0.1, 0.0, 0.2]);
        assert!(c.out.is_absolute());
    }

    #[test]
    fn bad_arguments_are_validation_errors() {
        assert_eq!(main_with_args(["bidomain", "frobnicate"]), EXIT_VALIDATION);
        assert_eq!(main_with_args(["bidomain", "synth", "--sigma-li", "abc"]), EXIT_VALIDATION);
        assert_eq!(main_with_args(["bidomain", "reconstruct-p1", "--sigma-li", "-3"]), EXIT_VALIDATION);
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nothing");
        assert_eq!(
            main_with_args(["bidomain", "reconstruct-p1", "--data", missing.to_str().unwrap()]),
            EXIT_VALIDATION
        );
    }
}
