//! Command-line front end: simulate, estimate, distance, montecarlo,
//! summarize.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use slatenet::estimator::{PipelineConfig, PipelineContext};
use slatenet::graph_config::{config_distance, ConfigDump, MatchOptions, RootMarkPolicy, RootedConfig, TreatmentSlate};
use slatenet::harness::{
    read_results_csv, run_montecarlo, summarize, write_json_mirror, write_plot_csv, write_results_csv,
    write_summary_csv, DatasetBundle, EstimatorKind, McOptions,
};
use slatenet::simgen::{default_target_unit, generate_dataset, DgpProfile};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ESTIMATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(rename_all = "snake_case")]
#[command(name = "slatenet", version, about = "Localized debiased estimation of treatment-slate contrasts on networks")]
struct Cli {
    /// Seed for every random draw (dataset, folds, sweep cells).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it as a JSON bundle.
    Simulate(SimulateArgs),
    /// Estimate one contrast for one unit of a dataset bundle.
    Estimate(EstimateArgs),
    /// Config distance between two rooted-config JSON files.
    Distance(DistanceArgs),
    /// Monte Carlo sweep over sample sizes.
    Montecarlo(MontecarloArgs),
    /// Aggregate a results CSV.
    Summarize(SummarizeArgs),
}

/// DGP overrides; names match the profile keys.
#[derive(Debug, Args, Default)]
#[command(rename_all = "snake_case")]
struct DgpFlags {
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    avg_degree: Option<f64>,
    #[arg(long)]
    s_active: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    interference_strength: Option<f64>,
    #[arg(long = "R")]
    dgp_radius: Option<usize>,
    #[arg(long)]
    true_contrast: Option<f64>,
    #[arg(long)]
    covariate_dim: Option<usize>,
    /// Any other profile key, as KEY=VALUE.
    #[arg(long = "dgp", value_name = "KEY=VALUE")]
    dgp_extra: Vec<String>,
}

/// Pipeline overrides; names match the config keys.
#[derive(Debug, Args, Default)]
#[command(rename_all = "snake_case")]
struct PipelineFlags {
    /// JSON or TOML file with pipeline keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "radius")]
    radius: Option<usize>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long = "b_G")]
    b_g: Option<f64>,
    #[arg(long = "K_cf")]
    k_cf: Option<usize>,
    #[arg(long)]
    b_mu: Option<f64>,
    #[arg(long)]
    b_x: Option<f64>,
    #[arg(long)]
    fold_mode: Option<String>,
    #[arg(long)]
    c_lambda: Option<f64>,
    #[arg(long)]
    c_eta: Option<f64>,
    #[arg(long)]
    order_cap: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    max_inflations: Option<usize>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    root_marks: Option<String>,
    #[arg(long)]
    localize: Option<bool>,
    #[arg(long)]
    use_config_nuisance: Option<bool>,
    /// Any other pipeline key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set_extra: Vec<String>,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
struct SimulateArgs {
    /// Named profile: fig2 or appendixA.
    #[arg(long, default_value = "fig2")]
    profile: String,
    /// JSON or TOML file with profile keys, applied over the named profile.
    #[arg(long)]
    profile_config: Option<PathBuf>,
    #[command(flatten)]
    dgp: DgpFlags,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
struct EstimateArgs {
    /// Dataset bundle.
    data: PathBuf,
    /// Target unit; default is the lowest-index unit with a neighbor.
    #[arg(long)]
    unit: Option<usize>,
    /// Slate coordinates (1-based, comma separated) flipped between the two
    /// slates of the contrast.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    flip: Vec<usize>,
    /// Reference slate as comma-separated +1/-1 entries; all +1 by default.
    #[arg(long, allow_hyphen_values = true)]
    base: Option<String>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
struct DistanceArgs {
    a: PathBuf,
    b: PathBuf,
    /// Radius; defaults to the smaller of the two config radii.
    #[arg(long = "R")]
    radius: Option<usize>,
    #[arg(long)]
    root_marks: Option<String>,
    #[arg(long)]
    use_covariate_marks: bool,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
struct MontecarloArgs {
    #[arg(long, default_value = "fig2")]
    profile: String,
    #[arg(long)]
    profile_config: Option<PathBuf>,
    #[command(flatten)]
    dgp: DgpFlags,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,500,1000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "proposed,oracle,baseline")]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    unit: Option<usize>,
    /// Record wall-clock runtimes (makes the CSV non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
struct SummarizeArgs {
    results: PathBuf,
    /// Write the summary CSV here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

/// Usage-level failure (bad flags, unreadable input) vs. estimation failure.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Estimation(String),
}

fn usage<E: ToString>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Parses a JSON or TOML object file into a JSON map.
fn read_object(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text = read(path)?;
    let value: Value = if path.extension().is_some_and(|e| e == "toml") {
        let t: toml::Table = toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(usage)?
    } else {
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(Failure::Usage(format!("{}: expected a table of keys", path.display()))),
    }
}

fn parse_kv(items: &[String]) -> Result<Vec<(String, Value)>, Failure> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("expected KEY=VALUE, got {s:?}")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            Ok((k.to_string(), value))
        })
        .collect()
}

/// Serializes `base`, overlays `layers` in order (later wins) and
/// deserializes. `canon` maps key aliases to the serialized key name.
fn overlay<T: Serialize + DeserializeOwned>(
    base: &T,
    layers: Vec<Vec<(String, Value)>>,
    canon: fn(&str) -> &str,
) -> Result<T, Failure> {
    let Value::Object(mut map) = serde_json::to_value(base).map_err(usage)? else {
        unreachable!("config types serialize as objects")
    };
    for (k, v) in layers.into_iter().flatten() {
        map.insert(canon(&k).to_string(), v);
    }
    serde_json::from_value(Value::Object(map)).map_err(usage)
}

fn dgp_key(k: &str) -> &str {
    match k {
        "n" => "N",
        "radius" => "R",
        other => other,
    }
}

fn pipeline_key(k: &str) -> &str {
    match k {
        "R" => "radius",
        "b_G" => "b_g",
        "K_cf" => "k_cf",
        other => other,
    }
}

fn push<T: Serialize>(out: &mut Vec<(String, Value)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.to_string(), serde_json::to_value(v).expect("plain value")));
    }
}

fn build_profile(
    name: &str,
    file: Option<&Path>,
    flags: &DgpFlags,
    seed: Option<u64>,
) -> Result<DgpProfile, Failure> {
    let base = DgpProfile::named(name).map_err(usage)?;
    let mut layers = Vec::new();
    if let Some(f) = file {
        layers.push(read_object(f)?.into_iter().collect());
    }
    let mut v = Vec::new();
    push(&mut v, "N", &flags.n);
    push(&mut v, "p", &flags.p);
    push(&mut v, "avg_degree", &flags.avg_degree);
    push(&mut v, "s_active", &flags.s_active);
    push(&mut v, "noise_sd", &flags.noise_sd);
    push(&mut v, "interference_strength", &flags.interference_strength);
    push(&mut v, "R", &flags.dgp_radius);
    push(&mut v, "true_contrast", &flags.true_contrast);
    push(&mut v, "covariate_dim", &flags.covariate_dim);
    push(&mut v, "seed", &seed);
    v.extend(parse_kv(&flags.dgp_extra)?);
    layers.push(v);
    let profile: DgpProfile = overlay(&base, layers, dgp_key)?;
    profile.validate().map_err(usage)?;
    Ok(profile)
}

fn build_pipeline(base: PipelineConfig, flags: &PipelineFlags, seed: Option<u64>) -> Result<PipelineConfig, Failure> {
    let mut layers = Vec::new();
    if let Some(f) = &flags.config {
        layers.push(read_object(f)?.into_iter().collect());
    }
    let mut v = Vec::new();
    push(&mut v, "radius", &flags.radius);
    push(&mut v, "kernel", &flags.kernel);
    push(&mut v, "b_g", &flags.b_g);
    push(&mut v, "k_cf", &flags.k_cf);
    push(&mut v, "b_mu", &flags.b_mu);
    push(&mut v, "b_x", &flags.b_x);
    push(&mut v, "fold_mode", &flags.fold_mode);
    push(&mut v, "c_lambda", &flags.c_lambda);
    push(&mut v, "c_eta", &flags.c_eta);
    push(&mut v, "order_cap", &flags.order_cap);
    push(&mut v, "level", &flags.level);
    push(&mut v, "max_inflations", &flags.max_inflations);
    push(&mut v, "lipschitz", &flags.lipschitz);
    push(&mut v, "root_marks", &flags.root_marks);
    push(&mut v, "localize", &flags.localize);
    push(&mut v, "use_config_nuisance", &flags.use_config_nuisance);
    push(&mut v, "seed", &seed);
    v.extend(parse_kv(&flags.set_extra)?);
    layers.push(v);
    overlay(&base, layers, pipeline_key)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(usage)?;
            out.write_all(b"\n").map_err(usage)
        }
    }
}

fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<(), Failure> {
    let profile = build_profile(&args.profile, args.profile_config.as_deref(), &args.dgp, seed)?;
    let (data, truth) = generate_dataset(&profile).map_err(usage)?;
    let bundle = DatasetBundle::from_parts(&data, Some(&profile), Some(&truth));
    write_out(args.out.as_deref(), &bundle.to_json().map_err(usage)?)
}

fn parse_slate(text: &str) -> Result<TreatmentSlate, Failure> {
    let bits = text
        .split(',')
        .map(|s| match s.trim() {
            "1" | "+1" | "+" => Ok(1i8),
            "-1" | "-" => Ok(-1i8),
            other => Err(Failure::Usage(format!("slate entries must be +1 or -1, got {other:?}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    TreatmentSlate::new(bits).map_err(usage)
}

fn estimate(args: &EstimateArgs, seed: Option<u64>) -> Result<(), Failure> {
    let bundle = DatasetBundle::from_json(&read(&args.data)?).map_err(|e| Failure::Usage(format!("{}: {e}", args.data.display())))?;
    let cfg = build_pipeline(PipelineConfig::default(), &args.pipeline, seed)?;
    let p = bundle.t.first().map(TreatmentSlate::dim).ok_or_else(|| Failure::Usage("dataset has no units".into()))?;
    let radius = cfg.radius.or(bundle.radius()).unwrap_or(1);
    let data = bundle.to_dataset(radius).map_err(usage)?;
    let unit = args.unit.unwrap_or_else(|| default_target_unit(data.graph()));
    if unit >= data.len() {
        return Err(Failure::Usage(format!("unit {unit} out of range for {} units", data.len())));
    }
    let t2 = match &args.base {
        Some(s) => parse_slate(s)?,
        None => TreatmentSlate::constant(p, 1).map_err(usage)?,
    };
    if t2.dim() != p {
        return Err(Failure::Usage(format!("base slate has {} entries, data has {p}", t2.dim())));
    }
    let mut t = t2.clone();
    for &c in &args.flip {
        if c == 0 || c > p {
            return Err(Failure::Usage(format!("flip coordinate {c} outside 1..={p}")));
        }
        t = t.with(c - 1, -t.get(c - 1)).map_err(usage)?;
    }
    let report = PipelineContext::new(&data, &cfg)
        .and_then(|ctx| ctx.estimate(unit, &t, &t2))
        .map_err(|e| {
            let mut msg = e.to_string();
            if let Some(h) = e.hamming_half_width {
                msg.push_str(&format!(" (Lipschitz fallback half-width {h})"));
            }
            Failure::Estimation(msg)
        })?;
    write_out(None, &serde_json::to_string_pretty(&report).map_err(usage)?)
}

fn read_config(path: &Path) -> Result<RootedConfig, Failure> {
    let dump: ConfigDump = serde_json::from_str(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    RootedConfig::from_dump(dump).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn distance(args: &DistanceArgs) -> Result<(), Failure> {
    let a = read_config(&args.a)?;
    let b = read_config(&args.b)?;
    let root_marks: RootMarkPolicy = match &args.root_marks {
        Some(s) => serde_json::from_value(Value::String(s.clone())).map_err(usage)?,
        None => RootMarkPolicy::default(),
    };
    let opts = MatchOptions {
        root_marks,
        use_covariate_marks: args.use_covariate_marks,
        ..MatchOptions::default()
    };
    let radius = args.radius.unwrap_or(a.radius().min(b.radius()));
    let d = config_distance(&a, &b, radius, &opts).map_err(usage)?;
    write_out(None, &format!("{d:?}"))
}

fn montecarlo(args: &MontecarloArgs, seed: Option<u64>) -> Result<(), Failure> {
    let profile = build_profile(&args.profile, args.profile_config.as_deref(), &args.dgp, None)?;
    // Sweeps default to interactions of order <= 2; a full dictionary is
    // available through --order_cap.
    let base = PipelineConfig {
        order_cap: Some(2),
        ..DgpProfile::pipeline_defaults(&args.profile).map_err(usage)?
    };
    let pipeline = build_pipeline(base, &args.pipeline, None)?;
    let estimators = args
        .estimators
        .iter()
        .map(|s| s.parse::<EstimatorKind>().map_err(usage))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = McOptions {
        sizes: args.sizes.clone(),
        reps: args.reps,
        estimators,
        base_seed: seed.unwrap_or(0),
        workers: args.workers,
        pipeline,
        unit: args.unit,
        timing: args.timing,
        failure_hook: None,
    };
    let results = run_montecarlo(&profile, &opts).map_err(usage)?;
    let summary = summarize(&results);
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::Usage(format!("{}: {e}", args.out_dir.display())))?;
    let create = |name: &str| {
        let path = args.out_dir.join(name);
        fs::File::create(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    };
    write_results_csv(create("results.csv")?, &results).map_err(usage)?;
    write_summary_csv(create("summary.csv")?, &summary).map_err(usage)?;
    write_json_mirror(create("results.json")?, &results, &summary).map_err(usage)?;
    write_plot_csv(create("plot.csv")?, &results, &summary).map_err(usage)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary).map_err(usage)?;
    std::io::stdout().lock().write_all(&buf).map_err(usage)?;
    let failed = results.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see results.json", results.len());
    }
    Ok(())
}

fn summarize_cmd(args: &SummarizeArgs) -> Result<(), Failure> {
    let file = fs::File::open(&args.results).map_err(|e| Failure::Usage(format!("{}: {e}", args.results.display())))?;
    let results = read_results_csv(file).map_err(usage)?;
    if results.is_empty() {
        return Err(Failure::Usage("results file has no rows".into()));
    }
    let summary = summarize(&results);
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary).map_err(usage)?;
    if let Some(p) = &args.out {
        fs::write(p, &buf).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    }
    if args.json {
        write_out(None, &serde_json::to_string_pretty(&summary).map_err(usage)?)
    } else {
        std::io::stdout().lock().write_all(&buf).map_err(usage)
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Estimate(a) => estimate(a, cli.seed),
        Command::Distance(a) => distance(a),
        Command::Montecarlo(a) => montecarlo(a, cli.seed),
        Command::Summarize(a) => summarize_cmd(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Estimation(m)) => {
            eprintln!("estimation failed: {m}");
            EXIT_ESTIMATION
        }
    }
}
