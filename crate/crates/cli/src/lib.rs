//! Batch front end: reads an experiment file, writes CSV and SVG artifacts.
//!
//! Every artifact starts with a `config-sha256` line and contains no
//! wall-clock data, so identical inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use qstc::analysis::{linear_fit, relative_error, Region, RegionRow, VerificationReport};
use qstc::certify::Certificate;
use qstc::config::{Experiment, ExperimentConfig, TWO_TANK_TOML};
use qstc::report::{self, Chart};
use qstc::simulate::{sweep, Scheme, SimResult};
use qstc::stm::sigma_bounds_log;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Window used for the error-ratio check in `compare`.
pub const RATIO_WINDOW: (f64, f64) = (3.0, 4.0);
/// Window used for the linear fit of the log-scheme error in `compare`.
pub const FIT_WINDOW: (f64, f64) = (0.5, 6.0);

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qstc::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("certificate {path}: {reason}")]
    Certificate { path: PathBuf, reason: String },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Verification(_) | CliError::Core(qstc::Error::BlowUp { .. }) => {
                EXIT_VERIFICATION
            }
            CliError::Core(_) | CliError::Certificate { .. } => EXIT_PRECONDITION,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "qstc",
    version,
    about = "Quantized self-triggered control experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the contraction certificate and print its table.
    Certify(Common),
    /// Tabulate the log-scheme σ window over ρ.
    Region(Common),
    /// Run one scheme and verify its guarantees.
    Simulate(SimulateArgs),
    /// Run the ideal loop and both schemes and compare their errors.
    Compare(CertArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment file (TOML). Defaults to the bundled two-tank experiment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Seed for randomized sweeps, overriding `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CertArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reuse a certificate written by `certify` instead of recomputing it.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Log,
    Zoom,
    Ideal,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Log => Scheme::Log,
            SchemeArg::Zoom => Scheme::Zoom,
            SchemeArg::Ideal => Scheme::Ideal,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub cert: CertArgs,
    /// Scheme to run, overriding `run.scheme`.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Extra runs from random initial states inside the admissible ball.
    #[arg(long, default_value_t = 0)]
    pub sweep: usize,
}

/// A loaded experiment file and its digest.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
    pub jobs: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load(common: &Common) -> CliResult<Loaded> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path).map_err(io_err(path))?,
        None => TWO_TANK_TOML.to_string(),
    };
    let mut config = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    Ok(Loaded {
        config,
        hash,
        out,
        jobs: common.jobs,
    })
}

impl Loaded {
    fn header(&self) -> String {
        format!("# config-sha256 {}\n", self.hash)
    }

    fn write(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let path = self.out.join(name);
        fs::write(&path, format!("{}{}", self.header(), body)).map_err(io_err(&path))?;
        Ok(path)
    }

    fn write_svg(&self, name: &str, chart: &Chart) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let path = self.out.join(name);
        let body = format!("<!-- config-sha256 {} -->\n{}", self.hash, chart.to_svg());
        fs::write(&path, body).map_err(io_err(&path))?;
        Ok(path)
    }

    fn write_csv(
        &self,
        name: &str,
        header: &[String],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> CliResult<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Io {
            path: self.out.join(name),
            source: std::io::Error::other(e.to_string()),
        };
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io {
            path: self.out.join(name),
            source: std::io::Error::other(e.to_string()),
        })?;
        self.write(name, &String::from_utf8_lossy(&bytes))
    }

    fn experiment(&self, certificate: Option<&Path>) -> CliResult<Experiment> {
        match certificate {
            None => Ok(Experiment::new(self.config.clone())?),
            Some(path) => {
                let cert = read_certificate(path)?;
                Ok(Experiment::with_certificate(self.config.clone(), cert)?)
            }
        }
    }
}

pub fn read_certificate(path: &Path) -> CliResult<Certificate> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| CliError::Certificate {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Runs a parsed command, returning lines for stdout.
pub fn execute(cli: &Cli) -> CliResult<Vec<String>> {
    match &cli.command {
        Command::Certify(c) => certify(c),
        Command::Region(c) => region(c),
        Command::Simulate(s) => simulate(s),
        Command::Compare(c) => compare(c),
    }
}

pub fn certify(common: &Common) -> CliResult<Vec<String>> {
    let loaded = load(common)?;
    let exp = loaded.experiment(None)?;
    let text = toml::to_string(&exp.cert).map_err(|e| qstc::Error::Config(e.to_string()))?;
    let path = loaded.write("certificate.toml", &text)?;
    let mut lines: Vec<String> = exp.cert.summary().lines().map(str::to_string).collect();
    lines.push(format!("wrote {}", path.display()));
    Ok(lines)
}

pub fn region(common: &Common) -> CliResult<Vec<String>> {
    let loaded = load(common)?;
    let exp = loaded.experiment(None)?;
    let grid = loaded.config.region.grid();
    let bounds = sweep(&grid, loaded.jobs, |&rho| sigma_bounds_log(rho, &exp.cert))?;
    let rows = grid
        .iter()
        .zip(bounds)
        .map(|(&rho, b)| {
            b.map(|(lower, upper)| RegionRow {
                rho,
                lower,
                upper,
                feasible: lower < upper,
            })
        })
        .collect::<qstc::Result<Vec<_>>>()?;
    let region = Region {
        rows,
        crossing: qstc::analysis::region_crossing(&exp.cert)?,
    };
    let header = ["rho", "sigma_lower", "sigma_upper", "feasible"].map(String::from);
    let path = loaded.write_csv(
        "region.csv",
        &header,
        region.rows.iter().map(|r| {
            vec![
                num(r.rho),
                num(r.lower),
                num(r.upper),
                r.feasible.to_string(),
            ]
        }),
    )?;
    loaded.write_svg("region.svg", &report::region_chart(&region))?;
    let mut lines = vec![format!("wrote {}", path.display())];
    match region.crossing {
        Some((rho, sigma)) => {
            lines.push(format!("crossing rho_min = {rho:.4}, sigma = {sigma:.4}"))
        }
        None => lines.push("no crossing in (0, 1]".into()),
    }
    if let Some(last) = region.rows.last() {
        lines.push(format!(
            "upper bound at rho = {:.4}: {:.4}",
            last.rho, last.upper
        ));
    }
    Ok(lines)
}

fn run_csv(loaded: &Loaded, sim: &SimResult) -> CliResult<()> {
    let traj = &sim.trajectory;
    let stride = loaded.config.output.stride;
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|i| format!("x{i}")));
    header.extend((1..=traj.input_dim()).map(|i| format!("u{i}")));
    let rows = (0..traj.len())
        .filter(|k| k % stride == 0 || *k + 1 == traj.len())
        .map(|k| {
            let mut row = vec![num(traj.time(k))];
            row.extend(traj.state(k).iter().map(|&v| num(v)));
            match traj.input(k) {
                Some(u) => row.extend(u.iter().map(|&v| num(v))),
                None => row.extend(std::iter::repeat_n(String::new(), traj.input_dim())),
            }
            row
        });
    loaded.write_csv(&format!("{}_run.csv", sim.scheme.as_str()), &header, rows)?;
    Ok(())
}

fn samples_csv(loaded: &Loaded, sim: &SimResult) -> CliResult<()> {
    let n = sim.trajectory.dim();
    let mut header = vec!["k".to_string(), "t_k".to_string()];
    header.extend((1..=n).map(|i| format!("q{i}")));
    header.extend(["tau", "ell", "mu", "trigger_cause", "truncated"].map(String::from));
    let rows = sim.records.iter().map(|r| {
        let mut row = vec![r.k.to_string(), num(r.t_k)];
        row.extend(r.q.iter().map(|&v| num(v)));
        row.push(num(r.tau));
        row.push(opt(r.ell));
        row.push(opt(r.mu.map(num)));
        row.push(r.cause.as_str().to_string());
        row.push(r.truncated.to_string());
        row
    });
    loaded.write_csv(
        &format!("{}_samples.csv", sim.scheme.as_str()),
        &header,
        rows,
    )?;
    Ok(())
}

fn verification_csv(loaded: &Loaded, scheme: Scheme, rep: &VerificationReport) -> CliResult<()> {
    let header = ["claim", "bound", "margin", "pass"].map(String::from);
    let rows = rep.claims.iter().map(|c| {
        vec![
            c.name.to_string(),
            c.bound.clone(),
            num(c.margin),
            c.pass.to_string(),
        ]
    });
    loaded.write_csv(
        &format!("{}_verification.csv", scheme.as_str()),
        &header,
        rows,
    )?;
    Ok(())
}

fn emit_run(loaded: &Loaded, sim: &SimResult) -> CliResult<Vec<String>> {
    let name = sim.scheme.as_str();
    run_csv(loaded, sim)?;
    loaded.write_svg(
        &format!("{name}_state.svg"),
        &report::state_chart(sim, loaded.config.output.stride),
    )?;
    let mut lines = vec![format!(
        "{name}: {} sampling instants on (0, {}]",
        sim.sample_count(),
        sim.horizon
    )];
    if sim.scheme != Scheme::Ideal {
        samples_csv(loaded, sim)?;
        loaded.write_svg(
            &format!("{name}_intervals.svg"),
            &report::interval_chart(sim),
        )?;
        loaded.write_svg(&format!("{name}_input.svg"), &report::input_chart(sim))?;
    }
    if let Some(rep) = &sim.verification {
        verification_csv(loaded, sim.scheme, rep)?;
        lines.extend(rep.summary().lines().map(|l| format!("{name}: {l}")));
    }
    Ok(lines)
}

fn failed(sim: &SimResult) -> Option<String> {
    let rep = sim.verification.as_ref()?;
    (!rep.passed()).then(|| {
        let names: Vec<&str> = rep
            .claims
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect();
        format!("{} scheme: {}", sim.scheme.as_str(), names.join(", "))
    })
}

/// Initial states drawn uniformly in norm-radius inside 90% of the admissible ball.
pub fn random_initial_states(
    exp: &Experiment,
    scheme: Scheme,
    count: usize,
    seed: u64,
) -> CliResult<Vec<Vec<f64>>> {
    let radius = match scheme {
        Scheme::Log => exp.cert.r / exp.cert.l_cl,
        Scheme::Zoom => exp.zoom_parts()?.0.range(),
        Scheme::Ideal => exp.cert.r / exp.cert.l_cl,
    };
    let norm = exp.cert.norm_cl();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = exp.cert.dim();
    Ok((0..count)
        .map(|_| loop {
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = norm.eval(&y);
            if len > 1e-12 {
                let scale = 0.9 * radius * rng.gen::<f64>() / len;
                break y.iter().map(|v| v * scale).collect();
            }
        })
        .collect())
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Vec<String>> {
    let loaded = load(&args.cert.common)?;
    let scheme: Scheme = args.scheme.map_or(loaded.config.run.scheme, Into::into);
    let exp = loaded.experiment(args.cert.certificate.as_deref())?;
    exp.check(scheme)?;
    let sim = exp.run(scheme)?;
    let mut lines = emit_run(&loaded, &sim)?;
    let mut failures: Vec<String> = failed(&sim).into_iter().collect();

    if args.sweep > 0 {
        let starts = random_initial_states(&exp, scheme, args.sweep, loaded.config.run.seed)?;
        let results = sweep(&starts, loaded.jobs, |x0| {
            let mut e = exp.clone();
            e.config.run.x0 = x0.clone();
            e.run(scheme)
        })?;
        let n = exp.cert.dim();
        let mut header = vec!["run".to_string()];
        header.extend((1..=n).map(|i| format!("x0_{i}")));
        header.extend(["samples", "min_interval", "passed"].map(String::from));
        let mut rows = Vec::with_capacity(results.len());
        for (i, (x0, res)) in starts.iter().zip(results).enumerate() {
            let sim = res?;
            if let Some(f) = failed(&sim) {
                failures.push(format!("sweep run {i}: {f}"));
            }
            let rep = sim.verification.as_ref();
            let mut row = vec![i.to_string()];
            row.extend(x0.iter().map(|&v| num(v)));
            row.push(sim.sample_count().to_string());
            row.push(opt(rep.and_then(|r| r.min_interval).map(num)));
            row.push(rep.is_some_and(VerificationReport::passed).to_string());
            rows.push(row);
        }
        let path = loaded.write_csv(&format!("{}_sweep.csv", scheme.as_str()), &header, rows)?;
        lines.push(format!("wrote {} ({} runs)", path.display(), args.sweep));
    }
    if failures.is_empty() {
        Ok(lines)
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

/// Summary statistics printed by `compare`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub log_samples: usize,
    pub zoom_samples: usize,
    pub log_fit_r2: f64,
    pub max_ratio: f64,
}

/// Fit of `e_log` over [`FIT_WINDOW`] and the largest `e_zo / e_log` over [`RATIO_WINDOW`].
pub fn compare_stats(
    e_log: &[(f64, Option<f64>)],
    e_zo: &[(f64, Option<f64>)],
) -> qstc::Result<(f64, f64)> {
    let inside = |t: f64, w: (f64, f64)| t >= w.0 - 1e-12 && t <= w.1 + 1e-12;
    let pts: Vec<(f64, f64)> = e_log
        .iter()
        .filter(|(t, _)| inside(*t, FIT_WINDOW))
        .filter_map(|&(t, e)| e.map(|e| (t, e)))
        .collect();
    let fit = linear_fit(&pts)?;
    let ratio = e_log
        .iter()
        .zip(e_zo)
        .filter(|((t, _), _)| inside(*t, RATIO_WINDOW))
        .filter_map(|((_, a), (_, b))| match (a, b) {
            (Some(a), Some(b)) if *a > 0.0 => Some(b / a),
            _ => None,
        })
        .fold(0.0, f64::max);
    Ok((fit.r_squared, ratio))
}

pub fn compare(args: &CertArgs) -> CliResult<Vec<String>> {
    let loaded = load(&args.common)?;
    let exp = loaded.experiment(args.certificate.as_deref())?;
    exp.check(Scheme::Log)?;
    exp.check(Scheme::Zoom)?;
    let schemes = [Scheme::Ideal, Scheme::Log, Scheme::Zoom];
    let mut runs = sweep(&schemes, loaded.jobs, |&s| exp.run(s))?.into_iter();
    let (ideal, log, zoom) = (
        runs.next().unwrap()?,
        runs.next().unwrap()?,
        runs.next().unwrap()?,
    );
    let mut lines = Vec::new();
    for sim in [&log, &zoom] {
        lines.extend(emit_run(&loaded, sim)?);
    }
    let e_log = relative_error(&log, &ideal)?;
    let e_zo = relative_error(&zoom, &ideal)?;
    let stride = loaded.config.output.stride;
    let header = ["t", "e_log", "e_zo"].map(String::from);
    let rows = e_log
        .iter()
        .zip(&e_zo)
        .enumerate()
        .filter(|(k, _)| k % stride == 0 || *k + 1 == e_log.len())
        .map(|(_, ((t, a), (_, b)))| vec![num(*t), opt(a.map(num)), opt(b.map(num))]);
    let path = loaded.write_csv("compare.csv", &header, rows)?;
    loaded.write_svg(
        "compare.svg",
        &report::error_chart(&[("e_log", &e_log), ("e_zo", &e_zo)], stride),
    )?;
    let (r2, ratio) = compare_stats(&e_log, &e_zo)?;
    lines.push(format!(
        "e_log linear fit on [{}, {}]: R^2 = {r2:.4}",
        FIT_WINDOW.0, FIT_WINDOW.1
    ));
    lines.push(format!(
        "max e_zo / e_log on [{}, {}]: {ratio:.4}",
        RATIO_WINDOW.0, RATIO_WINDOW.1
    ));
    lines.push(format!("wrote {}", path.display()));
    let failures: Vec<String> = [&log, &zoom]
        .into_iter()
        .filter_map(|s| failed(s))
        .collect();
    if failures.is_empty() {
        Ok(lines)
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}
