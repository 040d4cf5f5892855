use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ncg_core::campaign::{
    coherent_tower_run, run_campaign, workers_from_env, CampaignConfig, CampaignReport, CheckKind, CheckSpec,
    PRESETS,
};
use ncg_core::coverings::TowerSpec;
use ncg_core::dixmier::{dirac_inverse_power_stream, ncint_estimate, FitModel};
use ncg_core::error::{NcgError, Result};
use ncg_core::report::AxiomReport;
use ncg_core::spectral::{dirac_spectrum, DiracParams};

/// Verification driver for the truncated noncommutative torus, its spectral
/// triple, covering projections and Dixmier-trace estimates.
///
/// Exit status: 0 when every check passes, 1 when any fails, 2 on a usage or
/// configuration error.
#[derive(Parser)]
#[command(name = "ncg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of the truncated Dirac operator with multiplicities.
    Spectrum(Common),
    /// Noncommutative integral of |D|^-2 from the lattice stream.
    Dixmier(Common),
    /// Covering identity for lifted partitions of unity on the circle.
    VerifyCircle(Common),
    /// Completeness of the covering projections on the torus.
    VerifyTorusCover(Common),
    /// First-order condition, real-structure commutant and sign table.
    VerifyTripleAxioms(Common),
    /// Descent along a tower of coverings and inner-product constancy.
    CoherentTower(TowerArgs),
    /// Runs a JSON campaign config and writes the JSON report.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a config or a bundled preset and prints a readable summary.
    Report {
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: Option<String>,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau_re: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau_im: Option<f64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    guard: Option<u32>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    fold: Option<u32>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct TowerArgs {
    #[command(flatten)]
    common: Common,
    /// Tower JSON `{"theta0": .., "levels": [{"m": .., "n": .., "k": ..}, ..]}`.
    #[arg(long)]
    tower: Option<PathBuf>,
}

impl Common {
    fn spec(&self, check: CheckKind) -> Result<CheckSpec> {
        let spec = CheckSpec {
            theta: self.theta,
            tau_re: self.tau_re,
            tau_im: self.tau_im,
            m: self.m,
            n: self.n,
            k: self.k,
            window: self.window,
            guard: self.guard,
            grid: self.grid,
            cutoff: self.cutoff,
            lambda_max: self.lambda_max,
            fold: self.fold,
            depth: self.depth,
            seed: self.seed,
            tolerance: self.tolerance,
            ..CheckSpec::new(check)
        };
        spec.validate("")?;
        Ok(spec)
    }

    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn json_only(&self) -> Result<()> {
        match self.format {
            Some(Format::Csv) => Err(NcgError::invalid("--format", "this command only writes JSON")),
            _ => Ok(()),
        }
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn status(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn emit_reports(common: &Common, reports: &[AxiomReport]) -> Result<ExitCode> {
    common.json_only()?;
    let text = serde_json::to_string_pretty(reports)? + "\n";
    emit(common.out.as_ref(), &text)?;
    Ok(status(reports.iter().all(|r| r.pass)))
}

fn spectrum(common: &Common) -> Result<ExitCode> {
    let spec = common.spec(CheckKind::DiracSpectrum)?;
    let (m, n) = spec.orders();
    let p = DiracParams::scaled(spec.tau(), spec.theta()?, m, n)?;
    let entries = dirac_spectrum(&p, spec.window()?.radius())?;
    let text = match common.format(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("eigenvalue,multiplicity\n");
            for e in &entries {
                s.push_str(&format!("{},{}\n", e.eigenvalue, e.multiplicity));
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&entries)? + "\n",
    };
    emit(common.out.as_ref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn dixmier(common: &Common) -> Result<ExitCode> {
    let spec = common.spec(CheckKind::Integral)?;
    let (m, n) = spec.orders();
    let lambda_max = spec.lambda_max();
    let stream = dirac_inverse_power_stream(spec.tau(), m, n, 2.0, lambda_max.ceil() as usize + 2)?;
    match common.format(Format::Json) {
        Format::Csv => {
            let mut buf = Vec::new();
            stream.write_csv(&mut buf)?;
            emit(common.out.as_ref(), &String::from_utf8_lossy(&buf))?;
        }
        Format::Json => {
            let est = ncint_estimate(&stream, lambda_max, FitModel::default())?;
            if est.warning {
                eprintln!("warning: poor fit, residual {:.3e}", est.fit_residual);
            }
            emit(common.out.as_ref(), &(serde_json::to_string_pretty(&est)? + "\n"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn triple_axioms(common: &Common) -> Result<ExitCode> {
    let mut reports = Vec::new();
    for kind in [CheckKind::FirstOrder, CheckKind::RealStructure, CheckKind::SignTable] {
        reports.extend(common.spec(kind)?.run()?);
    }
    emit_reports(common, &reports)
}

fn coherent_tower(args: &TowerArgs) -> Result<ExitCode> {
    let common = &args.common;
    common.json_only()?;
    let mut spec = common.spec(CheckKind::CoherentTower)?;
    if let Some(path) = &args.tower {
        let tower = TowerSpec::from_json(&fs::read_to_string(path)?)
            .map_err(|e| NcgError::invalid("--tower", e.to_string()))?;
        spec.tower = Some(tower.config());
        spec.validate("")?;
    }
    let outcome = coherent_tower_run(&spec.tower()?, spec.cutoff(), spec.tolerance(1e-10))?;
    emit(common.out.as_ref(), &(serde_json::to_string_pretty(&outcome)? + "\n"))?;
    Ok(status(outcome.reports.iter().all(|r| r.pass)))
}

fn load_config(path: &PathBuf) -> Result<CampaignConfig> {
    let text = fs::read_to_string(path).map_err(|e| NcgError::invalid("config", format!("{}: {e}", path.display())))?;
    CampaignConfig::from_json(&text)
}

fn campaign(config: &CampaignConfig) -> Result<CampaignReport> {
    run_campaign(config, workers_from_env()?)
}

fn summary_text(report: &CampaignReport) -> String {
    let mut s = format!("schema {}  generator {}\n", report.schema, report.generator);
    for check in &report.checks {
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        let name = serde_json::to_value(check.params.check)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        s.push_str(&format!("{verdict}  {name}  ({:.2} s)\n", check.wall_clock_seconds));
        if let Some(e) = &check.error {
            s.push_str(&format!("      error: {e}\n"));
        }
        for r in &check.reports {
            let mark = if r.pass { "ok " } else { "BAD" };
            s.push_str(&format!("      {mark} {:.3e}  {}\n", r.residual, r.axiom));
        }
    }
    s.push_str(&format!(
        "{} of {} checks passed ({} reports)\n",
        report.summary.passed, report.summary.checks, report.summary.reports
    ));
    s
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Spectrum(c) => spectrum(&c),
        Command::Dixmier(c) => dixmier(&c),
        Command::VerifyCircle(c) => emit_reports(&c, &c.spec(CheckKind::CircleIdentity)?.run()?),
        Command::VerifyTorusCover(c) => emit_reports(&c, &c.spec(CheckKind::TorusCompleteness)?.run()?),
        Command::VerifyTripleAxioms(c) => triple_axioms(&c),
        Command::CoherentTower(t) => coherent_tower(&t),
        Command::Run { config, out } => {
            let report = campaign(&load_config(&config)?)?;
            emit(out.as_ref(), &(report.to_json() + "\n"))?;
            Ok(status(report.pass))
        }
        Command::Report { config, preset, out } => {
            let config = match (config, preset) {
                (Some(path), None) => load_config(&path)?,
                (None, Some(name)) => CampaignConfig::preset(&name).expect("preset names are validated by clap"),
                _ => return Err(NcgError::invalid("report", "give exactly one of a config path or --preset")),
            };
            let report = campaign(&config)?;
            if let Some(path) = &out {
                fs::write(path, report.to_json() + "\n")?;
            }
            print!("{}", summary_text(&report));
            Ok(status(report.pass))
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
