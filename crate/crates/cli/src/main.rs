use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sps_ellipsoids::baselines::{asymptotic_ellipsoid, set_membership_run};
use sps_ellipsoids::bounds::{
    dmr_bound, dmr_c_constant, eoa_radius_bound, eoa_size_bound, indicator_diameter_bound,
    BoundParams, DmrParams,
};
use sps_ellipsoids::harness::{
    bench, emit_outputs, run_coverage, run_size_sweep, run_table, simulate_trial, to_csv, to_svg,
    BoundForm, ExperimentConfig, OutputFormat, DMR_NU,
};
use sps_ellipsoids::sps::sps_initialize;
use sps_ellipsoids::{eoa, Dataset, Ellipsoid, Error, Result};

#[derive(Parser)]
#[command(
    name = "sps",
    version,
    about = "Sign-perturbed sums confidence ellipsoids for linear regression"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Fraction of trials whose SPS region contains the true parameter.
    Coverage {
        /// Number of trials; defaults to the configuration's trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Median region sizes over the prefix grid.
    Sweep,
    /// Higher-order FIR comparison table.
    Table1,
    /// Evaluate the a priori size bounds on a grid of sample sizes.
    Bounds {
        /// JSON file with the bound parameters and the sample sizes `ns`.
        #[arg(long)]
        params: PathBuf,
    },
    /// SPS outer-approximation ellipsoid for one dataset.
    Eoa(DataArgs),
    /// Asymptotic chi-squared ellipsoid for one dataset.
    Asymptotic(DataArgs),
    /// Set-membership outer-bounding ellipsoid for one dataset.
    Setmem(DataArgs),
    /// Time the dual solves for several dimensions.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Dataset JSON `{regressors: [[..]], outputs: [..]}`; otherwise one trial is simulated from the configuration.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trial index to simulate when no dataset is given.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DataFile {
    regressors: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsRequest {
    sigma: f64,
    lambda0: f64,
    kappa: f64,
    #[serde(default = "one")]
    rho: f64,
    d: usize,
    m: usize,
    q: usize,
    delta: f64,
    ns: Vec<usize>,
    /// Regressor proxy for the DMR column; the column is left empty without it.
    #[serde(default)]
    sigma_phi: Option<f64>,
    #[serde(default)]
    eoa_bound_form: BoundForm,
}

fn one() -> f64 {
    1.0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(k) = g.threads {
        if k == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let format: OutputFormat = g.format.parse()?;
    match &cli.command {
        Command::Coverage { trials } => {
            let cfg = load_config(g, ExperimentConfig::bounded_noise_reference)?;
            let trials = trials.unwrap_or(cfg.trials);
            let cov = run_coverage(&cfg, trials)?;
            let text = format!(
                "trials,coverage,nominal\n{trials},{cov},{}\n",
                cfg.confidence()
            );
            write_text(g, "coverage.csv", &text)
        }
        Command::Sweep => {
            if g.out.is_none() && format == OutputFormat::Gnuplot {
                return Err(Error::InvalidConfig(
                    "gnuplot output writes two files and needs --out".into(),
                ));
            }
            let cfg = load_config(g, ExperimentConfig::bounded_noise_reference)?;
            let table = run_size_sweep(&cfg)?;
            match (&g.out, format) {
                (Some(dir), _) => {
                    for p in emit_outputs(&table, format, dir, "sweep")? {
                        eprintln!("wrote {}", p.display());
                    }
                    Ok(())
                }
                (None, OutputFormat::Csv) => write_text(g, "sweep.csv", &to_csv(&table)?),
                (None, OutputFormat::Svg) => write_text(g, "sweep.svg", &to_svg(&table)?),
                (None, OutputFormat::Gnuplot) => unreachable!("rejected above"),
            }
        }
        Command::Table1 => {
            let mut configs = match &g.config {
                Some(path) => {
                    let text = fs::read_to_string(path)?;
                    let cfgs: Vec<ExperimentConfig> = serde_json::from_str(&text)?;
                    for c in &cfgs {
                        c.validate()?;
                    }
                    cfgs
                }
                None => [(4, 1000), (4, 2000), (6, 2000), (10, 6000)]
                    .into_iter()
                    .map(|(d, n)| ExperimentConfig::high_order_row(d, n))
                    .collect(),
            };
            if let Some(seed) = g.seed {
                configs.iter_mut().for_each(|c| c.seed = seed);
            }
            let rows = run_table(&configs)?;
            let mut text =
                String::from("d,n,sps_eoa,eoa_bound,dmr_bound,asymptotic,kappa,lambda0\n");
            for r in rows {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{},{},{}",
                    r.d,
                    r.n,
                    r.sps_eoa,
                    opt(r.eoa_bound),
                    opt(r.dmr),
                    r.asymptotic,
                    r.kappa,
                    r.lambda0
                );
            }
            write_text(g, "table1.csv", &text)
        }
        Command::Bounds { params } => {
            let req: BoundsRequest = serde_json::from_str(&fs::read_to_string(params)?)?;
            write_text(g, "bounds.csv", &bounds_csv(&req)?)
        }
        Command::Eoa(args) => {
            let cfg = load_config(g, ExperimentConfig::bounded_noise_reference)?;
            let e = match &args.data {
                Some(path) => {
                    let ds = load_dataset(path)?;
                    let sps = sps_initialize(cfg.m, cfg.q, ds.n(), cfg.seed)?;
                    eoa(&ds, &sps, cfg.eoa_tol)?
                }
                None => {
                    let (ds, sps) = simulate_trial(&cfg, args.trial)?;
                    eoa(&ds, &sps, cfg.eoa_tol)?
                }
            };
            write_ellipsoid(g, "eoa.json", &e)
        }
        Command::Asymptotic(args) => {
            let cfg = load_config(g, ExperimentConfig::bounded_noise_reference)?;
            let ds = dataset_for(&cfg, args)?;
            write_ellipsoid(
                g,
                "asymptotic.json",
                &asymptotic_ellipsoid(&ds, cfg.confidence())?,
            )
        }
        Command::Setmem(args) => {
            let cfg = load_config(g, ExperimentConfig::bounded_noise_reference)?;
            let ds = dataset_for(&cfg, args)?;
            let eps = cfg.noise_bound().ok_or_else(|| {
                Error::InvalidConfig("setmem needs a noise bound for this noise family".into())
            })?;
            write_ellipsoid(
                g,
                "setmem.json",
                &set_membership_run(&ds, eps, cfg.init_radius())?,
            )
        }
        Command::Bench { dims, n, m, reps } => {
            let rows = bench(dims, *n, *m, *reps, g.seed.unwrap_or(0))?;
            let mut text = String::from("d,seconds,ratio\n");
            for r in rows {
                let _ = writeln!(text, "{},{},{}", r.d, r.seconds, r.ratio);
            }
            write_text(g, "bench.csv", &text)
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn load_config(g: &Global, default: fn() -> ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
        None => default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let file: DataFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let n = file.regressors.len();
    let d = file.regressors.first().map_or(0, Vec::len);
    if file.regressors.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(
            "regressor rows have different lengths".into(),
        ));
    }
    let phi = nalgebra::DMatrix::from_row_iterator(n, d, file.regressors.into_iter().flatten());
    Dataset::new(phi, nalgebra::DVector::from_vec(file.outputs))
}

fn dataset_for(cfg: &ExperimentConfig, args: &DataArgs) -> Result<Dataset> {
    match &args.data {
        Some(path) => load_dataset(path),
        None => simulate_trial(cfg, args.trial).map(|(ds, _)| ds),
    }
}

fn bounds_csv(req: &BoundsRequest) -> Result<String> {
    let params = BoundParams {
        sigma: req.sigma,
        lambda0: req.lambda0,
        kappa: req.kappa,
        rho: req.rho,
        d: req.d,
        m: req.m,
        q: req.q,
        delta: req.delta,
    };
    params.validate()?;
    if req.ns.is_empty() {
        return Err(Error::InvalidConfig(
            "ns must list at least one sample size".into(),
        ));
    }
    let eta = req.q as f64 / req.m as f64;
    let mut text = String::from("n,eoa_bound,indicator_bound,dmr_bound\n");
    for &n in &req.ns {
        let eoa = match req.eoa_bound_form {
            BoundForm::Radius => eoa_radius_bound(&params, n),
            BoundForm::Diameter => eoa_size_bound(&params, n),
        };
        let ind = indicator_diameter_bound(&params, n);
        let dmr = req.sigma_phi.and_then(|sigma_phi| {
            let c = dmr_c_constant(sigma_phi, DMR_NU, eta, req.d, n).ok()?;
            let p = DmrParams {
                sigma_phi,
                sigma_w: req.sigma,
                nu: DMR_NU,
                eta,
                c,
            };
            dmr_bound(&p, req.d, n).ok()
        });
        let _ = writeln!(text, "{n},{},{},{}", opt(eoa.ok()), opt(ind.ok()), opt(dmr));
    }
    Ok(text)
}

fn write_ellipsoid(g: &Global, name: &str, e: &Ellipsoid) -> Result<()> {
    let mut text = serde_json::to_string_pretty(e)?;
    text.push('\n');
    write_text(g, name, &text)
}

fn write_text(g: &Global, name: &str, text: &str) -> Result<()> {
    match &g.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
