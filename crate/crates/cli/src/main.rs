//! `rhomix`: fit mixtures by ρ-estimation, select models and run simulation studies.
//!
//! Exit codes: 0 success, 2 search or study failure, 3 invalid configuration or data,
//! 4 a study finished but missed an acceptance band.

mod data;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rhomix::experiments::{preset, run_study, StudyConfig, TruthSpec, PRESETS};
use rhomix::rho::{delta_default, rho_estimate_lattice, BlockSource, KAPPA_DEFAULT};
use rhomix::selection::{data_lattice, select_emission_families, select_order, NetResolution};
use rhomix::{rng, EmissionKind, EmissionSpec, ModelDescriptor, Result, RhoError, SearchConfig};

#[derive(Debug, Parser)]
#[command(
    name = "rhomix",
    version,
    about = "Robust ρ-estimation of finite mixtures"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "RHOMIX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one mixture model.
    Fit(FitArgs),
    /// Penalized selection of the number of components.
    SelectK(SelectKArgs),
    /// Selection between Gaussian and Cauchy components.
    SelectFamily(SelectFamilyArgs),
    /// Run a simulation study from a preset or a config file.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML or JSON file with defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample file, one observation per line.
    #[arg(long, conflicts_with = "generate")]
    data: Option<PathBuf>,
    /// Draw this many observations from `--truth` instead of reading data.
    #[arg(long, requires = "truth")]
    generate: Option<usize>,
    /// Truth specification (TOML or JSON) for `--generate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum number of T evaluations.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    location_per_iqr: Option<f64>,
    #[arg(long)]
    location_step: Option<f64>,
    #[arg(long)]
    scale_log_step: Option<f64>,
    #[arg(long)]
    weight_per_root_n: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of components.
    #[arg(long)]
    k: Option<usize>,
    /// Families, comma separated: one for all components or one per component.
    #[arg(long, value_delimiter = ',')]
    family: Vec<String>,
    /// Shape parameter of `spike` and `skew_gaussian`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight floor δ (default `V̄ / (n (K − 1)) ∧ 1/K`).
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Args)]
struct SelectKArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Candidate orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    k_range: Vec<usize>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Penalty scale κ.
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Debug, Args)]
struct SelectFamilyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Preset name.
    #[arg(conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Study config file (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Output directory (default `study-<kind>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

/// Defaults read from `--config`; flags take precedence.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    generate: Option<usize>,
    truth: Option<TruthSpec>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    k: Option<usize>,
    families: Vec<String>,
    alpha: Option<f64>,
    delta: Option<f64>,
    kappa: Option<f64>,
    k_range: Vec<usize>,
    resolution: Option<NetResolution>,
    search: Option<SearchConfig>,
}

fn config_error(msg: impl Into<String>) -> RhoError {
    RhoError::Config(msg.into())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))
}

fn parse_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }
}

/// Inputs shared by the model subcommands after merging flags and file.
struct Resolved {
    file: FileConfig,
    x: Vec<f64>,
    seed: u64,
    out: PathBuf,
    resolution: NetResolution,
    search: SearchConfig,
}

fn resolve(common: &CommonArgs) -> Result<Resolved> {
    let file: FileConfig = match &common.config {
        Some(p) => parse_structured(p)?,
        None => FileConfig::default(),
    };
    let seed = common.seed.or(file.seed).unwrap_or(0);
    let data = common.data.clone().or_else(|| file.data.clone());
    let generate = common.generate.or(file.generate);
    let x = match (data, generate) {
        (Some(_), Some(_)) => {
            return Err(config_error(
                "give either a data file or a generator, not both",
            ))
        }
        (Some(p), None) => data::read_sample(&p)?,
        (None, Some(n)) => {
            let truth = match &common.truth {
                Some(p) => parse_structured::<TruthSpec>(p)?,
                None => file
                    .truth
                    .clone()
                    .ok_or_else(|| config_error("--generate needs a truth"))?,
            };
            if n == 0 {
                return Err(config_error("--generate needs at least one observation"));
            }
            truth.sample(n, &mut rng::from_seed(seed))?
        }
        (None, None) => return Err(config_error("no data: pass --data or --generate")),
    };
    let mut resolution = file.resolution.clone().unwrap_or_default();
    if let Some(v) = common.location_per_iqr {
        resolution.location_per_iqr = v;
    }
    if let Some(v) = common.location_step {
        resolution.location_step = Some(v);
    }
    if let Some(v) = common.scale_log_step {
        resolution.scale_log_step = v;
    }
    if let Some(v) = common.weight_per_root_n {
        resolution.weight_per_root_n = v;
    }
    resolution.validate()?;
    let mut search = file.search.clone().unwrap_or_default();
    search.seed = seed;
    if let Some(b) = common.budget {
        search.budget = b;
    }
    let out = common
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Resolved {
        file,
        x,
        seed,
        out,
        resolution,
        search,
    })
}

fn family_spec(name: &str, alpha: Option<f64>) -> Result<EmissionSpec> {
    EmissionSpec::new(
        EmissionKind::from_name(name, alpha).map_err(|e| config_error(e.to_string()))?,
    )
}

fn write_json(out: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

fn cmd_fit(args: &FitArgs) -> Result<u8> {
    let r = resolve(&args.common)?;
    let names = if args.family.is_empty() {
        r.file.families.clone()
    } else {
        args.family.clone()
    };
    let names = if names.is_empty() {
        vec!["gaussian".to_string()]
    } else {
        names
    };
    let alpha = args.alpha.or(r.file.alpha);
    let k = args.k.or(r.file.k);
    let families: Vec<EmissionSpec> = match (names.len(), k) {
        (1, k) => vec![family_spec(&names[0], alpha)?; k.unwrap_or(1)],
        (m, Some(k)) if k != m => {
            return Err(config_error(format!("{m} families given for K={k}")));
        }
        _ => names
            .iter()
            .map(|f| family_spec(f, alpha))
            .collect::<Result<_>>()?,
    };
    if families.is_empty() {
        return Err(config_error("K must be at least 1"));
    }
    let vbar: u32 = families.iter().map(|f| f.vc_bound).sum();
    let delta = args
        .delta
        .or(r.file.delta)
        .unwrap_or_else(|| delta_default(families.len(), vbar as f64, r.x.len()));
    let descriptor =
        ModelDescriptor::new(families, delta).map_err(|e| config_error(e.to_string()))?;
    let lattice = data_lattice(&descriptor, &r.x, &r.resolution)?;
    let fit = rho_estimate_lattice(&r.x, &lattice, None, &r.search)?;
    let path = write_json(&r.out, "fit.json", &fit)?;
    println!(
        "fit {} on n={} (seed {}): Υ={:.6}, report {}",
        descriptor.label(),
        r.x.len(),
        r.seed,
        fit.upsilon,
        path.display()
    );
    Ok(0)
}

fn cmd_select_k(args: &SelectKArgs) -> Result<u8> {
    let r = resolve(&args.common)?;
    let ks = if args.k_range.is_empty() {
        r.file.k_range.clone()
    } else {
        args.k_range.clone()
    };
    let ks = if ks.is_empty() { vec![1, 2, 3] } else { ks };
    let name = args
        .family
        .clone()
        .or_else(|| r.file.families.first().cloned())
        .unwrap_or_else(|| "gaussian".into());
    let family = family_spec(&name, args.alpha.or(r.file.alpha))?;
    let kappa = args.kappa.or(r.file.kappa).unwrap_or(KAPPA_DEFAULT);
    let sel = select_order(
        &r.x,
        &ks,
        family,
        kappa,
        |d| Ok(BlockSource::Lattice(data_lattice(d, &r.x, &r.resolution)?)),
        &r.search,
    )?;
    let path = write_json(&r.out, "select-k.json", &sel)?;
    println!(
        "selected K={} on n={}, report {}",
        sel.k_hat,
        r.x.len(),
        path.display()
    );
    Ok(0)
}

fn cmd_select_family(args: &SelectFamilyArgs) -> Result<u8> {
    let r = resolve(&args.common)?;
    let k = args.k.or(r.file.k).unwrap_or(2);
    if k == 0 {
        return Err(config_error("K must be at least 1"));
    }
    let sel = select_emission_families(
        &r.x,
        k,
        |d| Ok(BlockSource::Lattice(data_lattice(d, &r.x, &r.resolution)?)),
        &r.search,
    )?;
    let path = write_json(&r.out, "select-family.json", &sel)?;
    println!(
        "selected {} ({} Gaussian of {k}) on n={}, report {}",
        sel.fit.descriptor.label(),
        sel.j_hat,
        r.x.len(),
        path.display()
    );
    Ok(0)
}

fn cmd_study(args: &StudyArgs) -> Result<u8> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), None) => preset(name).map_err(|_| {
            config_error(format!(
                "unknown study `{name}`; presets: {}",
                PRESETS.join(", ")
            ))
        })?,
        (None, Some(p)) => StudyConfig::parse(&read_text(p)?)?,
        _ => return Err(config_error("give a preset name or --config")),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    if args.print_config {
        print!(
            "{}",
            toml::to_string(&cfg).map_err(|e| config_error(e.to_string()))?
        );
        return Ok(0);
    }
    let report = run_study(&cfg)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("study-{}", cfg.study.name())));
    report.write_artifacts(&out)?;
    for c in &report.checks {
        println!(
            "{} {} = {:.6} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            band_text(&c.band)
        );
    }
    println!(
        "{} study written to {} (config {})",
        cfg.study.name(),
        out.display(),
        &report.config_hash[..12]
    );
    Ok(if report.passed { 0 } else { 4 })
}

fn band_text(b: &rhomix::experiments::Band) -> String {
    let side = |v: Option<f64>, inf: &str| v.map_or(inf.to_string(), |v| format!("{v}"));
    format!("[{}, {}]", side(b.lo, "-inf"), side(b.hi, "inf"))
}

fn exit_code(e: &RhoError) -> u8 {
    match e {
        RhoError::Search(_)
        | RhoError::Budget { .. }
        | RhoError::Numeric(_)
        | RhoError::Study(_) => 2,
        RhoError::Config(_) | RhoError::Domain(_) | RhoError::Io(_) | RhoError::Json(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(3);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::SelectK(a) => cmd_select_k(a),
        Command::SelectFamily(a) => cmd_select_family(a),
        Command::Study(a) => cmd_study(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
