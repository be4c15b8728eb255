use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qmine_core::eigensolver::Axis;
use qmine_core::mice::MiceMode;
use qmine_core::plugin::plugin_mi_ensemble;
use qmine_core::sampling::{sample_bitstrings_with_meta, FIT_SIZES};
use qmine_core::sweep::{susceptibility_scan, Entry};
use qmine_core::{
    estimate_mi, fit_convergence, ground_state, plugin_mi, read_dataset, run_point, run_sweep, specific_entropy,
    write_dataset, ConfigFile, ConvergencePoint, DatasetMeta, Error, FieldRange, FitWeighting, ModelParams,
    PartitionKind, Quantity, SweepConfig,
};

#[derive(Parser)]
#[command(name = "qmine", version, about = "Exact and estimated mutual information of the Ising ring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact quantities at one field point.
    Solve(SolveArgs),
    /// Draw measurement bitstrings from the ground state and write them to a file.
    Sample(SampleArgs),
    /// Neural mutual-information estimate from a dataset file.
    Mine(MineArgs),
    /// Specific entropy from a dataset file.
    Mice(MiceArgs),
    /// Plug-in mutual information of a dataset, or a convergence fit over sample sizes.
    Plugin(PluginArgs),
    /// Grid sweep writing one CSV per quantity.
    Sweep(SweepArgs),
    /// Fidelity susceptibility along one field with the other held fixed.
    Fidelity(FidelityArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Key = value file overriding defaults; explicit flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_sites: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    partition: Option<PartitionKind>,
}

impl Common {
    fn build(&self) -> Result<SweepConfig, Error> {
        let mut c = SweepConfig::default();
        if let Some(path) = &self.config {
            ConfigFile::load(path)?.apply(&mut c)?;
        }
        if let Some(n) = self.n_sites {
            c.n_sites = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
            c.train.seed = s;
            c.mice.train.seed = s;
        }
        if let Some(p) = self.partition {
            c.partition = p;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    bx: f64,
    #[arg(long)]
    bz: f64,
    /// Comma list of quantity names, or `exact`/`all`.
    #[arg(long, default_value = "exact")]
    quantities: String,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    bx: f64,
    #[arg(long)]
    bz: f64,
    #[arg(long, default_value_t = 15000)]
    samples: usize,
    /// Output file, or a directory to hold `bitstrings.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    common: Common,
    dataset: PathBuf,
    /// Directory for per-network learning curves.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MiceModeArg {
    Plugin,
    Mine,
}

#[derive(Args)]
struct MiceArgs {
    #[command(flatten)]
    common: Common,
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = MiceModeArg::Mine)]
    mode: MiceModeArg,
}

#[derive(Args)]
struct PluginArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset file; without it, datasets are drawn at `--bx`/`--bz` and fitted.
    dataset: Option<PathBuf>,
    #[arg(long, required_unless_present = "dataset")]
    bx: Option<f64>,
    #[arg(long, required_unless_present = "dataset")]
    bz: Option<f64>,
    /// Comma list of dataset sizes for the fit.
    #[arg(long)]
    samples: Option<String>,
    /// Datasets averaged per size.
    #[arg(long, default_value_t = 100)]
    repeats: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    bx_range: Option<FieldRange>,
    #[arg(long)]
    bz_range: Option<FieldRange>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    quantities: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FidelityArgs {
    #[command(flatten)]
    common: Common,
    /// Field held fixed.
    #[arg(long, default_value = "x")]
    fixed: Axis,
    /// Value of the fixed field.
    #[arg(long)]
    value: f64,
    /// Scan of the other field, `start:stop:step`.
    #[arg(long)]
    range: FieldRange,
    #[arg(long, default_value_t = qmine_core::sweep::DEFAULT_DELTA)]
    delta: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_numeric() => 3,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn run(command: Command) -> Result<String, Error> {
    match command {
        Command::Solve(a) => solve(a),
        Command::Sample(a) => sample(a),
        Command::Mine(a) => mine(a),
        Command::Mice(a) => mice(a),
        Command::Plugin(a) => plugin(a),
        Command::Sweep(a) => sweep(a),
        Command::Fidelity(a) => fidelity(a),
    }
}

fn solve(a: SolveArgs) -> Result<String, Error> {
    let mut c = a.common.build()?;
    c.quantities = Quantity::parse_list(&a.quantities)?;
    let record = run_point(&c, a.bx, a.bz)?;
    if let Some(e) = record.entries.iter().find(|e| e.flags.iter().any(|f| f == "error_numeric")) {
        return Err(Error::Numeric(format!("{} failed at bx={} bz={}", e.quantity, a.bx, a.bz)));
    }
    let mut out = String::from(qmine_core::sweep::CSV_HEADER);
    out.push('\n');
    for e in &record.entries {
        out.push_str(&Entry::csv_row(e, a.bx, a.bz));
        out.push('\n');
    }
    Ok(out)
}

fn sample(a: SampleArgs) -> Result<String, Error> {
    let c = a.common.build()?;
    let params = ModelParams::new(c.n_sites, a.bx, a.bz)?;
    let node = qmine_core::seeds::for_node(c.seed, a.bx, a.bz);
    let gs = ground_state(&params, &c.solver.with_seed(qmine_core::seeds::derive(node, 0)))?;
    let meta = DatasetMeta { field_x: a.bx, field_z: a.bz, seed: qmine_core::seeds::derive(node, 1) };
    let dataset = sample_bitstrings_with_meta(&gs.state, a.samples, meta)?;
    let path = if a.out.is_dir() { a.out.join("bitstrings.txt") } else { a.out };
    write_dataset(&dataset, &path)?;
    let mut out = format!("wrote {} samples to {}\n", dataset.len(), path.display());
    if gs.near_degenerate() {
        out.push_str("warning: ground state is near-degenerate\n");
    }
    Ok(out)
}

fn mine(a: MineArgs) -> Result<String, Error> {
    let c = a.common.build()?;
    let dataset = read_dataset(&a.dataset)?;
    let part = c.partition.build(dataset.n_sites())?;
    let est = estimate_mi(&dataset, &part, &c.train)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for (i, curves) in est.diagnostics.iter().enumerate() {
            let path = dir.join(format!("curves_{i:02}.csv"));
            let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
            curves.write_csv(std::io::BufWriter::new(file)).map_err(|e| io_error(&path, e))?;
        }
    }
    let mut out = format!("mine_mi={}\nstd={}\n", est.value, est.std);
    for (i, (v, stop)) in est.per_network.iter().zip(&est.stop_iterations).enumerate() {
        let _ = writeln!(out, "network {i}: {v} (stop at iteration {stop})");
    }
    Ok(out)
}

fn mice(a: MiceArgs) -> Result<String, Error> {
    let c = a.common.build()?;
    let dataset = read_dataset(&a.dataset)?;
    let mode = match a.mode {
        MiceModeArg::Plugin => MiceMode::Plugin,
        MiceModeArg::Mine => MiceMode::Mine,
    };
    let d = specific_entropy(&dataset, &c.mice, mode)?;
    let mut out = String::from("level,volume,mi,std,estimator\n");
    for (j, l) in d.levels.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", j + 1, l.volume, l.mi, l.mi_std, l.estimator.name());
    }
    let _ = writeln!(out, "s_k={}\ns0={}", d.s_k, d.s0);
    Ok(out)
}

fn plugin(a: PluginArgs) -> Result<String, Error> {
    let c = a.common.build()?;
    if let Some(path) = &a.dataset {
        let dataset = read_dataset(path)?;
        let part = c.partition.build(dataset.n_sites())?;
        return Ok(format!("plugin_mi={}\n", plugin_mi(&dataset, &part)?));
    }
    let (bx, bz) = (a.bx.expect("required by clap"), a.bz.expect("required by clap"));
    let sizes: Vec<usize> = match &a.samples {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad sample size {s:?}"))))
            .collect::<Result<_, _>>()?,
        None => FIT_SIZES.to_vec(),
    };
    let params = ModelParams::new(c.n_sites, bx, bz)?;
    let part = c.partition.build(c.n_sites)?;
    let node = qmine_core::seeds::for_node(c.seed, bx, bz);
    let psi = ground_state(&params, &c.solver.with_seed(qmine_core::seeds::derive(node, 0)))?.state;
    let exact = qmine_core::exact_mutual_information(&psi, &part)?;
    let points = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let (value, std) = plugin_mi_ensemble(&psi, &part, n, a.repeats, qmine_core::seeds::derive(node, 10 + i as u64))?;
            Ok(ConvergencePoint { n: n as f64, value, std })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let fit = fit_convergence(&points, FitWeighting::Unweighted)?;
    let mut out = String::from("n,plugin_mi,std\n");
    for p in &points {
        let _ = writeln!(out, "{},{},{}", p.n, p.value, p.std);
    }
    let _ = writeln!(out, "m0={}\nk={}\nn0={}\nexact_mi={exact}", fit.m0, fit.k, fit.n0);
    let _ = writeln!(out, "relative_error={}", (fit.m0 - exact).abs() / exact.abs());
    Ok(out)
}

fn sweep(a: SweepArgs) -> Result<String, Error> {
    let mut c = a.common.build()?;
    if let Some(r) = a.bx_range {
        c.bx = r;
    }
    if let Some(r) = a.bz_range {
        c.bz = r;
    }
    if let Some(n) = a.samples {
        c.samples = n;
    }
    if let Some(q) = &a.quantities {
        c.quantities = Quantity::parse_list(q)?;
    }
    if let Some(dir) = a.out {
        c.out_dir = dir;
    }
    let summary = run_sweep(&c)?;
    let mut out = format!("{} nodes, {} computed\n", summary.nodes_total, summary.nodes_computed);
    for f in &summary.files {
        let _ = writeln!(out, "{}", f.display());
    }
    Ok(out)
}

fn fidelity(a: FidelityArgs) -> Result<String, Error> {
    let c = a.common.build()?;
    let scan = susceptibility_scan(&c, a.fixed, a.value, &a.range, a.delta)?;
    let other = match a.fixed {
        Axis::X => "bz",
        Axis::Z => "bx",
    };
    let mut out = format!("{other},chi\n");
    for (f, chi) in &scan.points {
        let _ = writeln!(out, "{f},{chi}");
    }
    for &i in &scan.interior_maxima {
        let _ = writeln!(out, "# interior maximum at {other}={}", scan.points[i].0);
    }
    Ok(out)
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}
