use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;
use stokeslab::continuation::{Branch, BranchPoint};
use stokeslab::hodograph::HeightField;
use stokeslab::spectra::{assemble_forms, solve_family, Family, Modes};
use stokeslab_cli::pipeline::{branch_stage, dispersion_stage, stream_stage};
use stokeslab_cli::{export, run_pipeline, run_with_branch, BifurcationReport, ConfigError, Format, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "stokeslab", version, about = "Rotational Stokes waves: branches, Bloch spectra and subharmonic bifurcations")]
struct Cli {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform stream: stream.csv (y, U) and stream.json.
    Stream,
    /// Dispersion curve: dispersion.csv (tau, sigma) and dispersion.json.
    Dispersion,
    /// Continues the Stokes branch and stores its checkpoints.
    Branch,
    /// Eigenvalues of one family at a stored point.
    Spectrum(SpectrumArgs),
    /// Bifurcation analysis of a stored branch.
    Bifurcate(BifurcateArgs),
    /// Full pipeline, or re-export of an existing report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    HalfEven,
    Aux0Star,
    AuxStar0,
    Aux00,
    Dirichlet,
    Neumann,
    Bloch,
    Subharmonic,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Branch point or HeightField checkpoint.
    #[arg(long)]
    point: PathBuf,
    #[arg(long, value_enum, default_value = "half-even")]
    family: FamilyArg,
    /// Physical quasi-momentum for the Bloch family.
    #[arg(long)]
    tau: Option<f64>,
    /// Period multiplier for the subharmonic family.
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Also write the eigenvectors.
    #[arg(long)]
    vectors: bool,
}

#[derive(Args)]
struct BifurcateArgs {
    /// Branch directory; defaults to <out>/branch.
    #[arg(long)]
    branch: Option<PathBuf>,
    /// Period multipliers a..b (inclusive).
    #[arg(long = "M-range", value_parser = parse_usize_range)]
    m_range: Option<(usize, usize)>,
    /// Root-sweep window t_lo..t_hi.
    #[arg(long, value_parser = parse_f64_range)]
    window: Option<(f64, f64)>,
}

#[derive(Args)]
struct ReportArgs {
    /// Re-export this report instead of running the pipeline.
    #[arg(long)]
    from: Option<PathBuf>,
}

fn split_range(s: &str) -> Result<(&str, &str), String> {
    s.split_once("..").ok_or_else(|| format!("expected a..b, got {s}"))
}

fn parse_usize_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = split_range(s)?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn parse_f64_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = split_range(s)?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_point(path: &Path) -> anyhow::Result<HeightField> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(p) = serde_json::from_str::<BranchPoint>(&text) {
        return Ok(p.hf);
    }
    Ok(serde_json::from_str::<HeightField>(&text)?)
}

fn spectrum(args: &SpectrumArgs, out: &Path) -> anyhow::Result<()> {
    let hf = load_point(&args.point)?;
    let family = match args.family {
        FamilyArg::HalfEven => Family::HalfEven,
        FamilyArg::Aux0Star => Family::Aux0Star,
        FamilyArg::AuxStar0 => Family::AuxStar0,
        FamilyArg::Aux00 => Family::Aux00,
        FamilyArg::Dirichlet => Family::Dirichlet,
        FamilyArg::Neumann => Family::Neumann,
        FamilyArg::Bloch => {
            let Some(tau) = args.tau else { bail!(ConfigError::NotPositive { field: "tau", value: f64::NAN }) };
            Family::Bloch(tau * hf.period / (2.0 * std::f64::consts::PI * hf.lambda))
        }
        FamilyArg::Subharmonic => match args.m {
            Some(m) if m >= 1 => Family::Subharmonic(m),
            _ => bail!(ConfigError::MRange(args.m.unwrap_or(0), args.m.unwrap_or(0))),
        },
    };
    let ft = assemble_forms(&hf, family.layout())?;
    let res = solve_family(&ft, family, args.count)?;
    let mut w = csv::Writer::from_path(out.join("spectrum.csv"))?;
    w.write_record(["index", "eigenvalue"])?;
    for (k, v) in res.eigenvalues.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    if args.vectors {
        let mut w = csv::Writer::from_path(out.join("vectors.csv"))?;
        w.write_record(["index", "node", "re", "im"])?;
        match &res.modes {
            Some(Modes::Real(vs)) => {
                for (k, v) in vs.iter().enumerate() {
                    for (n, x) in v.iter().enumerate() {
                        w.write_record([k.to_string(), n.to_string(), x.to_string(), "0".into()])?;
                    }
                }
            }
            Some(Modes::Complex(vs)) => {
                for (k, v) in vs.iter().enumerate() {
                    for (n, x) in v.iter().enumerate() {
                        w.write_record([k.to_string(), n.to_string(), x.re.to_string(), x.im.to_string()])?;
                    }
                }
            }
            None => {}
        }
        w.flush()?;
    }
    println!("residual {:.3e}", res.residual);
    Ok(())
}

fn finish(report: &BifurcationReport, out: &Path) -> anyhow::Result<()> {
    export(report, out, Format::Json)?;
    export(report, out, Format::Csv)?;
    match &report.t0 {
        Some(s) => println!("t0 = {}", s.t0),
        None => println!("t0 not found"),
    }
    for p in &report.subharmonic {
        println!("M = {}: t_M = {}, crossing number {}", p.m, p.t_m, p.crossing_number);
    }
    for n in &report.notes {
        println!("note [{}]: {}", n.stage, n.message);
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = Some(out.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    println!("config hash {}", cfg.hash());
    match &cli.command {
        Command::Stream => {
            let (stream, summary) = stream_stage(&cfg)?;
            let mut w = csv::Writer::from_path(out.join("stream.csv"))?;
            w.write_record(["y", "U"])?;
            for k in 0..=200 {
                let y = stream.d * k as f64 / 200.0;
                w.write_record([y.to_string(), stream.u(y).to_string()])?;
            }
            w.flush()?;
            write_json(&out.join("stream.json"), &json!({ "s": summary.s, "d": summary.d, "R": summary.r }))?;
        }
        Command::Dispersion => {
            let (stream, _) = stream_stage(&cfg)?;
            let d = dispersion_stage(&stream)?;
            let mut w = csv::Writer::from_path(out.join("dispersion.csv"))?;
            w.write_record(["tau", "sigma"])?;
            for (t, s) in d.table.tau.iter().zip(&d.table.sigma) {
                w.write_record([t.to_string(), s.to_string()])?;
            }
            w.flush()?;
            write_json(
                &out.join("dispersion.json"),
                &json!({ "tau_star": d.tau_star, "Lambda0": d.lambda0, "sigma0": d.sigma0 }),
            )?;
        }
        Command::Branch => {
            cfg.validate()?;
            let (stream, _) = stream_stage(&cfg)?;
            let d = dispersion_stage(&stream)?;
            let b = branch_stage(&cfg, &stream, d.tau_star)?;
            b.save(&out.join("branch"))?;
            println!("{} points, stop: {:?}", b.points.len(), b.stop);
        }
        Command::Spectrum(args) => spectrum(args, &out)?,
        Command::Bifurcate(args) => {
            if let Some((a, b)) = args.m_range {
                cfg.m_min = a;
                cfg.m_max = b;
            }
            if args.window.is_some() {
                cfg.window = args.window;
            }
            let dir = args.branch.clone().unwrap_or_else(|| out.join("branch"));
            let branch = Branch::load(&dir).with_context(|| format!("loading branch {}", dir.display()))?;
            let report = run_with_branch(&cfg, Some(branch))?;
            finish(&report, &out)?;
        }
        Command::Report(args) => {
            let report = match &args.from {
                Some(p) => BifurcationReport::load(p)?,
                None => run_pipeline(&cfg)?,
            };
            finish(&report, &out)?;
        }
    }
    info!("done");
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<PipelineError>() {
        Some(p) if p.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    faer::set_global_parallelism(faer::Par::Seq);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
