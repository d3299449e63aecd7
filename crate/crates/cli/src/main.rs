//! `dperm` command-line front end.
//!
//! Every subcommand accepts `--config spec.json`; flags given on the
//! command line override fields of the JSON spec. Exit codes: 0 success,
//! 1 validation error, 2 failed oracle check, 3 I/O error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dperm::harness::{
    cmd_bias_oracle, cmd_lower_bound_demo, cmd_phi_scaling, cmd_rnmm_pipeline, cmd_sweep_clip,
    BiasOracleSpec, CsvReport, LowerBoundSpec, PhiScalingSpec, RnmmSpec, SweepSpec,
};
use dperm::Error;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(
    name = "dperm",
    version,
    about = "Differentially private ERM experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep clip-norm candidates over a step-size grid and seeds.
    SweepClip(SweepArgs),
    /// Select the clip norm with Report Noisy Max, then run DP-SGD.
    RnmmPipeline(RnmmArgs),
    /// Risk under the heavy-tailed schedule as the sample size grows.
    PhiScaling(PhiArgs),
    /// Check the clipping-bias inequality chain on random distributions.
    BiasOracle(BiasArgs),
    /// Numerical checks on the two-atom heavy-tailed instance.
    LowerBoundDemo(LowerBoundArgs),
}

#[derive(Args)]
struct Common {
    /// JSON spec file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when omitted).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Budget {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
}

#[derive(Args)]
struct Seeds {
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Shorthand for seeds 0..N.
    #[arg(long, conflicts_with = "seeds")]
    seed_count: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Training CSV: feature columns followed by an integer label.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out CSV with the same layout.
    #[arg(long, requires = "data")]
    test_data: Option<PathBuf>,
    /// Append a constant 1 feature to every row.
    #[arg(long)]
    append_bias: bool,
    /// Generate a planted-rule dataset with this many samples instead.
    #[arg(long, conflicts_with = "data")]
    planted_n: Option<usize>,
    #[arg(long, default_value_t = 20)]
    planted_d: usize,
    #[arg(long, default_value_t = 3)]
    planted_m: usize,
    /// Feature norms uniform on [radial_lo, radial_hi].
    #[arg(long, default_value_t = 1.0)]
    radial_lo: f64,
    #[arg(long, default_value_t = 10.0)]
    radial_hi: f64,
    #[arg(long, default_value_t = 0.0)]
    min_margin: f64,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 0)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    budget: Budget,
    #[command(flatten)]
    seeds: Seeds,
    /// Clip-norm candidates: absolute values, `p<q>` percentiles or `inf`.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<String>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    expected_batch: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    step_sizes: Option<Vec<f64>>,
    #[arg(long)]
    disable_noise: bool,
    #[arg(long)]
    reference_iterations: Option<usize>,
}

#[derive(Args)]
struct RnmmArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    seeds: Seeds,
    #[arg(long)]
    epsilon_total: Option<f64>,
    /// Selection budget; `inf` for exact selection.
    #[arg(long)]
    epsilon_rnmm: Option<String>,
    #[arg(long)]
    epsilon_dpsgd: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    expected_batch: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    rnmm_clamp: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    public_lipschitz_prior: Option<Vec<f64>>,
    #[arg(long)]
    reference_iterations: Option<usize>,
}

#[derive(Args)]
struct PhiArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    budget: Budget,
    #[command(flatten)]
    seeds: Seeds,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    tail_k: Option<f64>,
    #[arg(long)]
    label_noise: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    expected_batch: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    reference_iterations: Option<usize>,
}

#[derive(Args)]
struct BiasArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    p_values: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    tau_factors: Option<Vec<f64>>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    budget: Budget,
    #[command(flatten)]
    seeds: Seeds,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    expected_batch: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
}

/// Collects explicitly given flags into a JSON object.
struct Overrides(Map<String, Value>);

impl Overrides {
    fn new() -> Self {
        Self(Map::new())
    }

    fn set<T: serde::Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), json!(v));
        }
        self
    }

    fn budget(&mut self, b: &Budget) -> &mut Self {
        self.set("epsilon", b.epsilon)
            .set("delta", b.delta)
            .set("nu", b.nu)
    }

    fn seeds(&mut self, s: &Seeds) -> &mut Self {
        let list = s
            .seeds
            .clone()
            .or_else(|| s.seed_count.map(|n| (0..n).collect()));
        self.set("seeds", list)
    }

    fn data(&mut self, d: &DataArgs) -> &mut Self {
        let source = if let Some(path) = &d.data {
            Some(json!({
                "kind": "csv",
                "path": path,
                "append_bias": d.append_bias,
                "test_path": d.test_data,
            }))
        } else {
            d.planted_n.map(|n| {
                json!({
                    "kind": "planted",
                    "generator": {
                        "n": n,
                        "d": d.planted_d,
                        "m": d.planted_m,
                        "radial": {"law": "uniform", "lo": d.radial_lo, "hi": d.radial_hi},
                        "min_margin": d.min_margin,
                        "label_noise": d.label_noise,
                    },
                    "n_test": d.n_test,
                    "seed": d.data_seed,
                })
            })
        };
        self.set("data", source)
    }
}

fn load_spec<T: DeserializeOwned>(
    common: &Common,
    name: &str,
    overrides: Overrides,
) -> Result<T, Error> {
    let mut base = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
            match value {
                Value::Object(map) => map,
                _ => return Err(Error::InvalidConfig("config must be a JSON object".into())),
            }
        }
        None => Map::new(),
    };
    if let Some(cmd) = base.remove("command") {
        if cmd != Value::String(name.into()) {
            return Err(Error::InvalidConfig(format!(
                "config is for command {cmd}, not {name:?}"
            )));
        }
    }
    base.remove("output");
    base.extend(overrides.0);
    serde_json::from_value(Value::Object(base)).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn config_output(common: &Common) -> Result<Option<PathBuf>, Error> {
    if common.output.is_some() {
        return Ok(common.output.clone());
    }
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(value
        .get("output")
        .and_then(Value::as_str)
        .map(PathBuf::from))
}

fn execute(cli: Cli) -> Result<(), Error> {
    let (common, report): (&Common, Box<dyn CsvReport>) = match &cli.command {
        Command::SweepClip(a) => {
            let mut o = Overrides::new();
            o.data(&a.data)
                .budget(&a.budget)
                .seeds(&a.seeds)
                .set("candidates", a.candidates.clone())
                .set("iterations", a.iterations)
                .set("expected_batch", a.expected_batch)
                .set("step_sizes", a.step_sizes.clone())
                .set("disable_noise", a.disable_noise.then_some(true))
                .set("reference_iterations", a.reference_iterations);
            let spec: SweepSpec = load_spec(&a.common, "sweep-clip", o)?;
            (&a.common, Box::new(cmd_sweep_clip(&spec)?))
        }
        Command::RnmmPipeline(a) => {
            let mut o = Overrides::new();
            o.data(&a.data)
                .seeds(&a.seeds)
                .set("epsilon_total", a.epsilon_total)
                .set("epsilon_rnmm", a.epsilon_rnmm.clone())
                .set("epsilon_dpsgd", a.epsilon_dpsgd)
                .set("delta", a.delta)
                .set("nu", a.nu)
                .set("iterations", a.iterations)
                .set("expected_batch", a.expected_batch)
                .set("step_size", a.step_size)
                .set("rnmm_clamp", a.rnmm_clamp)
                .set("public_lipschitz_prior", a.public_lipschitz_prior.clone())
                .set("reference_iterations", a.reference_iterations);
            let spec: RnmmSpec = load_spec(&a.common, "rnmm-pipeline", o)?;
            (&a.common, Box::new(cmd_rnmm_pipeline(&spec)?))
        }
        Command::PhiScaling(a) => {
            let mut o = Overrides::new();
            o.budget(&a.budget)
                .seeds(&a.seeds)
                .set("n_values", a.n_values.clone())
                .set("d", a.d)
                .set("m", a.m)
                .set("tail_k", a.tail_k)
                .set("label_noise", a.label_noise)
                .set("gamma", a.gamma)
                .set("max_iterations", a.max_iterations)
                .set("expected_batch", a.expected_batch)
                .set("data_seed", a.data_seed)
                .set("reference_iterations", a.reference_iterations);
            let spec: PhiScalingSpec = load_spec(&a.common, "phi-scaling", o)?;
            (&a.common, Box::new(cmd_phi_scaling(&spec)?))
        }
        Command::BiasOracle(a) => {
            let mut o = Overrides::new();
            o.set("count", a.count)
                .set("p_values", a.p_values.clone())
                .set("seed", a.seed)
                .set("tau_factors", a.tau_factors.clone())
                .set("tolerance", a.tolerance);
            let spec: BiasOracleSpec = load_spec(&a.common, "bias-oracle", o)?;
            (&a.common, Box::new(cmd_bias_oracle(&spec)?))
        }
        Command::LowerBoundDemo(a) => {
            let mut o = Overrides::new();
            o.budget(&a.budget)
                .seeds(&a.seeds)
                .set("d", a.d)
                .set("p", a.p)
                .set("k", a.k)
                .set("n", a.n)
                .set("iterations", a.iterations)
                .set("expected_batch", a.expected_batch)
                .set("grid_step", a.grid_step);
            let spec: LowerBoundSpec = load_spec(&a.common, "lower-bound-demo", o)?;
            (&a.common, Box::new(cmd_lower_bound_demo(&spec)?))
        }
    };

    match config_output(common)? {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            report.write_csv(&mut out)?;
            out.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            report.write_csv(&mut out)?;
        }
    }
    match report.failure() {
        Some(msg) => Err(Error::OracleFailure(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dperm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
