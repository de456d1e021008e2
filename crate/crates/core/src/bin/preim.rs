use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use preim::archive::{write_rows, RomArchive};
use preim::bench::{run_algorithm, run_comparison, testcase, write_run_logs, Algorithm, CaseConfig, CaseId, RunOptions};
use preim::rom::{online_solve, reconstruct};
use preim::PreimError;

#[derive(Parser)]
#[command(name = "preim", version, about = "Reduced-order modelling of nonlinear heat transfer with progressive empirical interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a reduced model and write it as an archive directory.
    Offline(OfflineArgs),
    /// Solve the reduced model stored in an archive for one parameter.
    Online(OnlineArgs),
    /// Compare several offline algorithms on a test case.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct CaseArgs {
    #[arg(long, value_parser = parse_case)]
    case: CaseId,
    /// Mesh refinement (cells per unit length).
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    eps_pod: Option<f64>,
    #[arg(long)]
    eps_eim: Option<f64>,
    #[arg(long)]
    eps_rb: Option<f64>,
    #[arg(long, value_enum, default_value = "off")]
    rb_criterion: Switch,
    /// Comma-separated training parameters whose high-fidelity trajectories seed the progressive algorithms.
    #[arg(long, value_delimiter = ',')]
    init_params: Vec<f64>,
}

#[derive(Args)]
struct OfflineArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, value_parser = parse_algorithm)]
    algo: Algorithm,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OnlineArgs {
    #[arg(long)]
    rom: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    mu: f64,
    /// Also write the nodal fields, which requires reading the stored basis.
    #[arg(long)]
    reconstruct: bool,
    /// Output directory; the reduced trajectory goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm, required = true)]
    algos: Vec<Algorithm>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_case(s: &str) -> Result<CaseId, String> {
    s.parse().map_err(|e: PreimError| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: PreimError| e.to_string())
}

enum Failure {
    Usage(String),
    Run(PreimError),
}

impl From<PreimError> for Failure {
    fn from(e: PreimError) -> Self {
        Failure::Run(e)
    }
}

fn configure(args: &CaseArgs) -> Result<(CaseConfig, RunOptions), Failure> {
    let mut config = testcase(args.case);
    if let Some(r) = args.refine {
        if r == 0 {
            return Err(Failure::Usage("--refine must be positive".into()));
        }
        config.refine = r;
    }
    for (value, slot, flag) in [
        (args.eps_pod, &mut config.eps_pod, "--eps-pod"),
        (args.eps_eim, &mut config.eps_eim, "--eps-eim"),
        (args.eps_rb, &mut config.eps_rb, "--eps-rb"),
    ] {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure::Usage(format!("{flag} must be a positive number")));
            }
            *slot = v;
        }
    }
    let mut init = Vec::new();
    for &mu in &args.init_params {
        let idx = config
            .training
            .iter()
            .position(|&p| (p - mu).abs() <= 1e-9 * mu.abs().max(1.0))
            .ok_or_else(|| Failure::Usage(format!("--init-params: {mu} is not a training parameter")))?;
        init.push(idx);
    }
    let opts = RunOptions { rb_criterion: matches!(args.rb_criterion, Switch::On), init };
    Ok((config, opts))
}

fn offline(args: &OfflineArgs) -> Result<(), Failure> {
    let (config, opts) = configure(&args.case)?;
    let model = config.build_model()?;
    eprintln!(
        "case {} ({} dofs, {} steps), algorithm {}",
        config.id,
        model.num_dofs(),
        model.num_steps(),
        args.algo
    );
    let run = run_algorithm(&config, &model, args.algo, &opts)?;
    RomArchive::save(&args.out, &config.archive_info(args.algo), &run.rom, &run.basis, &run.eim)?;
    write_run_logs(&run, &args.out.join("logs"))?;
    let mut params = run.hf_params();
    params.sort_by(f64::total_cmp);
    println!("N={}", run.basis.len());
    println!("M={}", run.eim.rank());
    println!("hf_count={}", run.hf.len());
    println!("hf_params={}", params.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    println!("delta_eim={:e}", run.delta_eim);
    println!("offline_seconds={:.3}", run.seconds);
    Ok(())
}

fn online(args: &OnlineArgs) -> Result<(), Failure> {
    if !args.rom.join("manifest.txt").is_file() {
        return Err(Failure::Run(PreimError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no archive manifest in {}", args.rom.display()),
        ))));
    }
    let archive = RomArchive::load(&args.rom)?;
    let (lo, hi) = archive.manifest.info.mu_range;
    if !(lo..=hi).contains(&args.mu) {
        eprintln!("warning: mu = {} lies outside the training range [{lo}, {hi}]", args.mu);
    }
    let coeffs = online_solve(&archive.rom, args.mu)?;
    let rows = || archive.rom.times.iter().zip(&coeffs).map(|(t, c)| std::iter::once(*t).chain(c.iter().copied()).collect());
    match &args.out {
        Some(dir) => {
            write_rows(&dir.join("reduced.csv"), rows())?;
            if args.reconstruct {
                let basis = archive.load_basis()?;
                reconstruct(&basis, args.mu, &coeffs)?.write_csv(&dir.join("nodal.csv"))?;
            }
        }
        None => {
            if args.reconstruct {
                return Err(Failure::Usage("--reconstruct requires --out".into()));
            }
            for row in rows() {
                let line: Vec<String> = row.iter().map(|v: &f64| format!("{v:.16e}")).collect();
                println!("{}", line.join(","));
            }
        }
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let (config, opts) = configure(&args.case)?;
    let cmp = run_comparison(&config, &args.algos, &opts, Some(Path::new(&args.out)))?;
    println!("algorithm,N,M,hf_count,delta_eim,max_error,offline_seconds");
    for s in &cmp.summaries {
        println!(
            "{},{},{},{},{:e},{:e},{:.3}",
            s.algorithm, s.basis_len, s.eim_rank, s.hf_count, s.delta_eim, s.max_error, s.offline_seconds
        );
    }
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("PREIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("PREIM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Run(PreimError::InvalidArgument(e.to_string())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Offline(a) => offline(a),
        Command::Online(a) => online(a),
        Command::Report(a) => report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
