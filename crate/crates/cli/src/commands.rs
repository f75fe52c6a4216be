//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::Serialize;

use cascade_core::{
    crossover_budget, curves_to_csv, deferral_curve, load_batch, paired_permutation_test,
    select_deferrals, validate_for_rule, win_tie_loss, Batch, ColumnPair, CostModelParams,
    CurvePoint, DeferralBudget, DeferralRule, PermutationConfig, PermutationTestResult,
    ScoreColumn, ScoreOrientation, WinTieLoss,
};
use cascade_gateway::{run_cascade_live, ResponseCache};

use crate::config::load_config;
use crate::manifest::{write_json, write_text, RunManifest};
use crate::profiles::resolve_cost_model;
use crate::{
    CliError, CurveArgs, DeferArgs, ParityArgs, PermtestArgs, RunLiveArgs, WtlArgs,
};

fn parse_orientations(lower_better: &[String]) -> Result<Vec<ScoreOrientation>, CliError> {
    lower_better
        .iter()
        .map(|name| {
            name.parse::<ScoreColumn>()
                .map(ScoreOrientation::lower_better)
                .map_err(CliError::Usage)
        })
        .collect()
}

fn load(batch_path: &Path, lower_better: &[String]) -> Result<Batch, CliError> {
    let orientations = parse_orientations(lower_better)?;
    load_batch(batch_path, &orientations).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_rule(name: &str, seed: u64, columns: ColumnPair) -> Result<DeferralRule, CliError> {
    match name {
        "qe" => Ok(DeferralRule::Qe),
        "random" => Ok(DeferralRule::Random { seed }),
        "shortest" => Ok(DeferralRule::LengthShortest),
        "longest" => Ok(DeferralRule::LengthLongest),
        "logprobs" => Ok(DeferralRule::LogProbs),
        "oracle" => Ok(DeferralRule::Oracle { columns }),
        other => Err(CliError::Usage(format!(
            "unknown rule \"{other}\" (expected qe, random, shortest, longest, logprobs, oracle)"
        ))),
    }
}

fn parse_column(name: &str) -> Result<ScoreColumn, CliError> {
    name.parse().map_err(CliError::Usage)
}

fn parse_pair(name: &str) -> Result<ColumnPair, CliError> {
    name.parse().map_err(CliError::Usage)
}

fn parse_grid(raw: Option<&str>) -> Result<Vec<f64>, CliError> {
    let Some(raw) = raw else {
        return Ok((0..=10).map(|i| i as f64 / 10.0).collect());
    };
    raw.split(',')
        .map(|token| {
            let eta: f64 = token
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("grid value \"{token}\" is not a number")))?;
            if eta.is_finite() && (0.0..=1.0).contains(&eta) {
                Ok(eta)
            } else {
                Err(CliError::Usage(format!("grid value {eta} is outside [0, 1]")))
            }
        })
        .collect()
}

/// Turns a non-empty missing-column report into the exit-2 error text.
fn require_columns(batch: &Batch, rule: &DeferralRule) -> Result<(), CliError> {
    let report = validate_for_rule(batch, rule);
    if report.is_ok() {
        return Ok(());
    }
    let shown: Vec<&str> = report.missing_ids.iter().take(10).map(String::as_str).collect();
    let suffix = if report.missing_ids.len() > shown.len() { ", ..." } else { "" };
    Err(CliError::Usage(format!(
        "rule {} requires [{}]; {} of {} records are missing them: {}{suffix}",
        report.rule,
        report.required.join(", "),
        report.missing_ids.len(),
        batch.len(),
        shown.join(", "),
    )))
}

fn budget(eta: f64) -> Result<DeferralBudget, CliError> {
    DeferralBudget::new(eta).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn cmd_defer(args: &DeferArgs, config_path: Option<PathBuf>) -> Result<(), CliError> {
    let batch = load(&args.batch, &args.lower_better)?;
    let columns = parse_pair(&args.quality_col)?;
    let rule = parse_rule(&args.rule, args.seed, columns)?;
    require_columns(&batch, &rule)?;
    let decision = select_deferrals(&batch, &rule, budget(args.eta)?)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let export = decision.export(&batch).map_err(|e| CliError::Usage(e.to_string()))?;
    write_json(&args.out, "decision.json", &export)?;

    let mut manifest = RunManifest::new("defer", config_path);
    manifest.inputs = vec![args.batch.clone()];
    manifest.seed = rule.seed();
    manifest.outputs = vec!["decision.json".into()];
    write_json(&args.out, "manifest.json", &manifest)?;

    println!(
        "deferred {} of {} records (eta_effective {:.4}) -> {}",
        decision.deferred.len(),
        batch.len(),
        decision.eta_effective,
        args.out.join("decision.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CurveFile<'a> {
    batch: &'a str,
    quality_columns: ColumnPair,
    cost_profile: &'a str,
    grid: &'a [f64],
    seed: u64,
    small_mean: f64,
    large_mean: f64,
    /// Smallest grid budget per rule whose mean reaches the large-model
    /// mean, if any.
    crossover_to_large_mean: Vec<(String, Option<f64>)>,
    points: &'a [CurvePoint],
}

pub fn cmd_curve(args: &CurveArgs, config_path: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(config_path.as_deref())?;
    let batch = load(&args.batch, &args.lower_better)?;
    let columns = parse_pair(&args.quality_col)?;
    let grid = parse_grid(args.grid.as_deref())?;
    let cost = resolve_cost_model(&args.cost_profile, &config)?;

    let rules: Vec<DeferralRule> = args
        .rules
        .split(',')
        .map(|name| parse_rule(name.trim(), args.seed, columns))
        .collect::<Result<_, _>>()?;

    let mut points: Vec<CurvePoint> = Vec::new();
    let mut crossovers: Vec<(String, Option<f64>)> = Vec::new();
    let small_mean = mean_of(&batch, columns.small)?;
    let large_mean = mean_of(&batch, columns.large)?;
    for rule in &rules {
        require_columns(&batch, rule)?;
        let curve = deferral_curve(&batch, rule, &grid, &cost, columns)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let crossover =
            crossover_budget(&curve, large_mean).map_err(|e| CliError::Usage(e.to_string()))?;
        crossovers.push((rule.label().to_string(), crossover));
        points.extend(curve);
    }

    write_text(&args.out, "curves.csv", &curves_to_csv(&points))?;
    write_json(
        &args.out,
        "curves.json",
        &CurveFile {
            batch: batch.name(),
            quality_columns: columns,
            cost_profile: &args.cost_profile,
            grid: &grid,
            seed: args.seed,
            small_mean,
            large_mean,
            crossover_to_large_mean: crossovers,
            points: &points,
        },
    )?;

    let mut manifest = RunManifest::new("curve", config_path);
    manifest.inputs = vec![args.batch.clone()];
    manifest.seed = Some(args.seed);
    manifest.grid = Some(grid.clone());
    manifest.cost_profile = Some(args.cost_profile.clone());
    manifest.outputs = vec!["curves.csv".into(), "curves.json".into()];
    write_json(&args.out, "manifest.json", &manifest)?;

    println!(
        "wrote {} curve points for {} rule(s) -> {}",
        points.len(),
        rules.len(),
        args.out.join("curves.csv").display()
    );
    Ok(())
}

fn mean_of(batch: &Batch, column: ScoreColumn) -> Result<f64, CliError> {
    let values = batch.column_values(column).map_err(|e| CliError::Usage(e.to_string()))?;
    cascade_core::mean_quality(&values).map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Serialize)]
struct BridgeRow {
    k: usize,
    cascade_equivalent_eta: f64,
    reranking_x: f64,
}

#[derive(Serialize)]
struct ParityFile {
    cost_profile: String,
    params: CostModelParams,
    eta_star: f64,
    cascade_can_beat_always_large: bool,
    reranking_parity_k: Option<usize>,
    bridge: Vec<BridgeRow>,
}

pub fn cmd_parity(args: &ParityArgs, config_path: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(config_path.as_deref())?;
    let cost = resolve_cost_model(&args.cost_profile, &config)?;
    let eta_star = cost.parity_fraction();
    let parity_k = cost.reranking_parity_k(10_000);
    let bridge: Vec<BridgeRow> = (1..=args.k_max)
        .map(|k| {
            Ok(BridgeRow {
                k,
                cascade_equivalent_eta: cost
                    .cascade_equivalent_eta(k)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
                reranking_x: cost
                    .reranking_flops(k, 1.0)
                    .map_err(|e| CliError::Usage(e.to_string()))?
                    .relative_cost_x,
            })
        })
        .collect::<Result<_, CliError>>()?;

    println!(
        "cost profile {}: N_S={:e} N_QE={:e} N_L={:e} D_S={} D_L={}",
        args.cost_profile,
        cost.n_small(),
        cost.n_qe(),
        cost.n_large(),
        cost.d_small(),
        cost.d_large()
    );
    println!("parity fraction eta* = {eta_star:.4}");
    if eta_star <= 0.0 {
        println!("warning: N_S + N_QE >= N_L; cascading cannot beat always-large under this profile");
    }
    match parity_k {
        Some(k) => println!("reranking parity K = {k} (largest hypothesis count with X <= 1)"),
        None => println!("reranking parity K = none (even one hypothesis exceeds the budget)"),
    }
    println!("{:>3}  {:>22}  {:>12}", "K", "cascade-equivalent eta", "reranking X");
    for row in &bridge {
        println!("{:>3}  {:>22.4}  {:>12.4}", row.k, row.cascade_equivalent_eta, row.reranking_x);
    }

    if let Some(out) = &args.out {
        let file = ParityFile {
            cost_profile: args.cost_profile.clone(),
            params: CostModelParams {
                n_small: cost.n_small(),
                n_large: cost.n_large(),
                n_qe: cost.n_qe(),
                d_small: cost.d_small(),
                d_large: cost.d_large(),
            },
            eta_star,
            cascade_can_beat_always_large: eta_star > 0.0,
            reranking_parity_k: parity_k,
            bridge,
        };
        write_json(out, "parity.json", &file)?;
        let mut manifest = RunManifest::new("parity", config_path);
        manifest.cost_profile = Some(args.cost_profile.clone());
        manifest.outputs = vec!["parity.json".into()];
        write_json(out, "manifest.json", &manifest)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct WtlFile<'a> {
    batch: &'a str,
    a: &'static str,
    b: &'static str,
    #[serde(flatten)]
    result: WinTieLoss,
}

pub fn cmd_wtl(args: &WtlArgs, config_path: Option<PathBuf>) -> Result<(), CliError> {
    let batch = load(&args.batch, &args.lower_better)?;
    let a = parse_column(&args.a)?;
    let b = parse_column(&args.b)?;
    let result = win_tie_loss(&batch, a, b, args.threshold)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_json(
        &args.out,
        "wtl.json",
        &WtlFile { batch: batch.name(), a: a.name(), b: b.name(), result },
    )?;

    let mut manifest = RunManifest::new("wtl", config_path);
    manifest.inputs = vec![args.batch.clone()];
    manifest.outputs = vec!["wtl.json".into()];
    write_json(&args.out, "manifest.json", &manifest)?;

    println!(
        "{} vs {}: wins {:.3} ties {:.3} losses {:.3} (threshold {}, n {})",
        a.name(),
        b.name(),
        result.wins,
        result.ties,
        result.losses,
        result.threshold,
        result.n
    );
    Ok(())
}

#[derive(Serialize)]
struct PermtestFile<'a> {
    batch: &'a str,
    a: &'static str,
    b: &'static str,
    alpha: f64,
    /// True when the two columns differ significantly (`p < alpha`).
    significant: bool,
    #[serde(flatten)]
    result: PermutationTestResult,
}

pub fn cmd_permtest(args: &PermtestArgs, config_path: Option<PathBuf>) -> Result<(), CliError> {
    let batch = load(&args.batch, &args.lower_better)?;
    let a = parse_column(&args.a)?;
    let b = parse_column(&args.b)?;
    let left = batch.column_values(a).map_err(|e| CliError::Usage(e.to_string()))?;
    let right = batch.column_values(b).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = PermutationConfig {
        max_exact_n: args.max_exact_n,
        iterations: args.iterations,
        seed: args.seed,
    };
    let result = paired_permutation_test(&left, &right, &config)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_json(
        &args.out,
        "permtest.json",
        &PermtestFile {
            batch: batch.name(),
            a: a.name(),
            b: b.name(),
            alpha: args.alpha,
            significant: result.p_value < args.alpha,
            result,
        },
    )?;

    let mut manifest = RunManifest::new("permtest", config_path);
    manifest.inputs = vec![args.batch.clone()];
    manifest.seed = Some(args.seed);
    manifest.outputs = vec!["permtest.json".into()];
    write_json(&args.out, "manifest.json", &manifest)?;

    println!(
        "p = {:.6} (observed |mean diff| {:.6}, n {}, {})",
        result.p_value,
        result.observed_stat,
        result.n_pairs,
        if result.p_value < args.alpha { "significant" } else { "not significant" }
    );
    Ok(())
}

fn read_sources(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read sources {}: {e}", path.display())))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

pub fn cmd_run_live(args: &RunLiveArgs, config_path: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(config_path.as_deref())?;
    let endpoints = config
        .endpoints
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no [endpoints] section".into()))?;
    let live = config
        .live
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no [live] section".into()))?;
    let profile = args.cost_profile.as_deref().unwrap_or(&live.cost_profile);
    let cost = resolve_cost_model(profile, &config)?;
    let sources = read_sources(&args.sources)?;
    let cache = ResponseCache::open(&live.cache_dir)
        .map_err(|e| CliError::Other(anyhow::anyhow!("opening cache: {e}")))?;

    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Other(anyhow::anyhow!("starting runtime: {e}")))?;
    let client = reqwest::Client::new();
    let run = runtime.block_on(run_cascade_live(
        &client,
        &sources,
        endpoints,
        budget(args.eta)?,
        &cost,
        &cache,
        &live.lang_pair,
        &live.batch_name,
    ))?;

    let jsonl = run
        .batch
        .to_jsonl()
        .map_err(|e| CliError::Other(anyhow::anyhow!("serializing batch: {e}")))?;
    write_text(&args.out, "batch.jsonl", &jsonl)?;
    let export = run.decision.export(&run.batch).map_err(|e| CliError::Usage(e.to_string()))?;
    write_json(&args.out, "decision.json", &export)?;
    write_json(&args.out, "cost.json", &run.cost)?;
    write_json(&args.out, "failures.json", &run.failures)?;

    let mut manifest = RunManifest::new("run-live", config_path);
    manifest.inputs = vec![args.sources.clone()];
    manifest.cost_profile = Some(profile.to_string());
    manifest.outputs = vec![
        "batch.jsonl".into(),
        "decision.json".into(),
        "cost.json".into(),
        "failures.json".into(),
    ];
    write_json(&args.out, "manifest.json", &manifest)?;

    println!(
        "translated {} sources; deferred {} (eta_effective {:.4}); relative cost X = {:.4}; outputs in {}",
        run.batch.len(),
        run.decision.deferred.len(),
        run.decision.eta_effective,
        run.cost.relative_cost_x,
        args.out.display()
    );
    if !run.failures.is_empty() {
        return Err(CliError::Remote(format!(
            "{} item(s) failed after retries; see {}",
            run.failures.len(),
            args.out.join("failures.json").display()
        )));
    }
    Ok(())
}
