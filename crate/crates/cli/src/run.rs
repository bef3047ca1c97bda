//! Subcommand implementations: resolve flags into core configurations, run,
//! and write results plus a reproducibility manifest.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use ptlsi_core::stats::linear_fit_r2;
use ptlsi_core::{
    ingest_csv, run_ptlsi, run_suite, BaselineOptions, ConditioningMode, CoreError, DomainSpec,
    InferenceConfig, InferenceResult, IngestOptions, IngestReport, Method, NoiseFamily,
    OracleTransLassoConfig, PipelineConfig, Result, Scenario, SearchOptions, SuiteConfig,
    SuiteOutcome, SyntheticSpec, TransFusionConfig,
};

use crate::plot::{self, PlotRow};
use crate::{BenchArgs, Command, IngestArgs, IngestCheckArgs, InferArgs, NoiseArgs, RateArgs, ShapeArgs};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Infer(a) => infer(a),
        Command::Fpr(a) => rate(a, Scenario::Null, "fpr"),
        Command::Tpr(a) => rate(a, Scenario::Signal, "tpr"),
        Command::Noise(a) => noise(a),
        Command::Bench(a) => bench(a),
        Command::IngestCheck(a) => ingest_check(a),
    }
}

fn invalid(msg: String) -> CoreError {
    CoreError::validation(msg)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("--alpha must lie strictly between 0 and 1; got {alpha}")))
    }
}

fn parse_usize_list(raw: &str, flag: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = raw
        .split(',')
        .map(|tok| tok.trim())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| invalid(format!("{flag}: '{tok}' is not a non-negative integer")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(invalid(format!("{flag}: no values given")));
    }
    Ok(values)
}

fn parse_noise(name: &str) -> Result<NoiseFamily> {
    NoiseFamily::ALL
        .into_iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| {
            invalid(format!(
                "unknown noise family '{name}' (expected gaussian, laplace, skewnormal10, or t20)"
            ))
        })
}

fn parse_methods(raw: &str) -> Result<Vec<Method>> {
    if raw == "all" {
        return Ok(Method::ALL.to_vec());
    }
    raw.split(',')
        .map(|tok| tok.trim())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            Method::ALL.into_iter().find(|m| m.name() == tok).ok_or_else(|| {
                invalid(format!(
                    "unknown method '{tok}' (expected selective, oc, naive, bonferroni, datasplit, or all)"
                ))
            })
        })
        .collect()
}

impl ShapeArgs {
    fn resolve(&self, scenario: Scenario) -> Result<SyntheticSpec> {
        let mut spec = match self.preset.as_str() {
            "desk" => SyntheticSpec::desk_default(scenario),
            "paper" => SyntheticSpec::paper_default(scenario),
            other => {
                return Err(invalid(format!(
                    "unknown preset '{other}' (expected desk or paper)"
                )))
            }
        };
        if let Some(v) = self.p {
            spec.p = v;
        }
        if let Some(v) = self.n_t {
            spec.n_t = v;
        }
        if let Some(v) = self.n_s {
            spec.n_s = v;
        }
        if let Some(v) = self.informative {
            spec.informative = v;
        }
        if let Some(v) = self.uninformative {
            spec.uninformative = v;
        }
        if let Some(v) = self.gamma {
            spec.gamma = v;
        }
        if let Some(v) = self.upsilon {
            spec.upsilon = v;
        }
        spec.noise = parse_noise(&self.noise)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn pipeline_config(
    name: &str,
    lambda_scale: Option<f64>,
    lambda_stacked: Option<f64>,
    lambda_pooled: Option<f64>,
    lambda_debias: Option<f64>,
    informative: Vec<usize>,
) -> Result<PipelineConfig> {
    match name {
        "transfusion" => Ok(PipelineConfig::TransFusion(TransFusionConfig {
            source_weights: None,
            lambda_stacked,
            lambda_debias,
            lambda_scale: lambda_scale.unwrap_or(1.0),
        })),
        "oracle-translasso" => {
            if informative.is_empty() {
                return Err(invalid(
                    "oracle-translasso needs informative source indices".to_string(),
                ));
            }
            Ok(PipelineConfig::OracleTransLasso(OracleTransLassoConfig {
                informative,
                lambda_pooled,
                lambda_debias,
                lambda_scale: lambda_scale.unwrap_or(1.0),
            }))
        }
        other => Err(invalid(format!(
            "unknown pipeline '{other}' (expected transfusion or oracle-translasso)"
        ))),
    }
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CoreError::Io(e.to_string()))
}

fn rows_to_csv<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| CoreError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CoreError::Io(e.to_string()))
}

fn write_text(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: C,
    outputs: Vec<String>,
}

/// Write the run manifest: to the explicit path, or next to --out, or to
/// stderr when results went to stdout.
fn emit_manifest<C: Serialize>(
    command: &'static str,
    config: &C,
    written: &[&Option<PathBuf>],
    manifest_path: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<()> {
    let manifest = Manifest {
        tool: "ptlsi",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        outputs: written
            .iter()
            .filter_map(|o| o.as_ref().map(|p| p.display().to_string()))
            .collect(),
    };
    let text = to_json(&manifest)?;
    let target = manifest_path
        .clone()
        .or_else(|| out.as_ref().map(|p| p.with_extension("manifest.json")));
    match target {
        Some(path) => fs::write(path, text)?,
        None => eprint!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct RateRow {
    x: f64,
    setting: String,
    scenario: &'static str,
    family: &'static str,
    method: &'static str,
    rate: Option<f64>,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
    rejections: usize,
    tests: usize,
    skipped: usize,
    trials: usize,
    empty_trials: usize,
    degenerate_splits: usize,
}

fn summarize_suite(
    outcome: &SuiteOutcome,
    cfg: &SuiteConfig,
    scenario: Scenario,
    x: f64,
    setting: String,
) -> Vec<RateRow> {
    let scenario_name = match scenario {
        Scenario::Null => "null",
        Scenario::Signal => "signal",
    };
    cfg.methods
        .iter()
        .map(|&method| {
            let summary = outcome.summary(method).expect("method present");
            let est = match scenario {
                Scenario::Null => summary.fpr(),
                Scenario::Signal => summary.tpr(),
            };
            let (tests, rejections) = match scenario {
                Scenario::Null => (summary.null_tests, summary.null_rejections),
                Scenario::Signal => (summary.nonnull_tests, summary.nonnull_rejections),
            };
            RateRow {
                x,
                setting: setting.clone(),
                scenario: scenario_name,
                family: cfg.spec.noise.name(),
                method: method.name(),
                rate: est.map(|e| e.rate),
                ci_lower: est.map(|e| e.ci_lower),
                ci_upper: est.map(|e| e.ci_upper),
                rejections,
                tests,
                skipped: summary.skipped,
                trials: outcome.trials,
                empty_trials: outcome.empty_trials,
                degenerate_splits: outcome.degenerate_splits,
            }
        })
        .collect()
}

fn build_suite(
    args: &RateArgs,
    spec: SyntheticSpec,
    methods: Vec<Method>,
) -> Result<SuiteConfig> {
    let informative = (0..spec.informative).collect();
    let pipeline = pipeline_config(
        &args.pipeline,
        args.lambda_scale,
        args.lambda_stacked,
        args.lambda_pooled,
        args.lambda_debias,
        informative,
    )?;
    if args.trials == 0 {
        return Err(invalid("--trials must be positive".to_string()));
    }
    Ok(SuiteConfig {
        spec,
        pipeline,
        trials: args.trials,
        alpha: args.alpha,
        master_seed: args.seed,
        methods,
        search: SearchOptions::default(),
        progress: args.progress,
    })
}

fn emit_rate_output(
    args: &RateArgs,
    rows: Vec<RateRow>,
    configs: Vec<SuiteConfig>,
    command: &'static str,
    y_label: &str,
) -> Result<()> {
    let text = match args.format.as_str() {
        "csv" => rows_to_csv(&rows)?,
        "json" => to_json(&rows)?,
        other => return Err(invalid(format!("unknown format '{other}' (expected csv or json)"))),
    };
    write_text(&args.out, &text)?;
    if let Some(plot_path) = &args.plot {
        let plot_rows: Vec<PlotRow> = rows
            .iter()
            .filter_map(|r| {
                Some(PlotRow {
                    x: r.x,
                    series: r.method.to_string(),
                    value: r.rate?,
                    ci_lo: r.ci_lower?,
                    ci_hi: r.ci_upper?,
                })
            })
            .collect();
        plot::emit(&plot_rows, plot_path, command, "target sample size", y_label)?;
    }
    emit_manifest(
        command,
        &configs,
        &[&args.out, &args.plot],
        &args.manifest,
        &args.out,
    )
}

fn rate(args: RateArgs, scenario: Scenario, command: &'static str) -> Result<()> {
    check_alpha(args.alpha)?;
    let methods = parse_methods(&args.method)?;
    let base = args.shape.resolve(scenario)?;
    let sweep = match &args.sweep_nt {
        Some(raw) => parse_usize_list(raw, "--sweep-nt")?,
        None => vec![base.n_t],
    };
    let mut rows = Vec::new();
    let mut configs = Vec::new();
    for &n_t in &sweep {
        let mut spec = base;
        spec.n_t = n_t;
        let cfg = build_suite(&args, spec, methods.clone())?;
        let outcome = run_suite(&cfg)?;
        rows.extend(summarize_suite(&outcome, &cfg, scenario, n_t as f64, format!("n_t={n_t}")));
        configs.push(cfg);
    }
    let y_label = match scenario {
        Scenario::Null => "false positive rate",
        Scenario::Signal => "true positive rate",
    };
    emit_rate_output(&args, rows, configs, command, y_label)
}

fn noise(args: NoiseArgs) -> Result<()> {
    let NoiseArgs { rate: rate_args, families } = args;
    check_alpha(rate_args.alpha)?;
    if rate_args.sweep_nt.is_some() {
        return Err(invalid(
            "--sweep-nt is not supported here; the sweep axis is the noise family".to_string(),
        ));
    }
    let methods = parse_methods(&rate_args.method)?;
    let family_list: Vec<NoiseFamily> = match &families {
        Some(raw) => raw
            .split(',')
            .map(|tok| tok.trim())
            .filter(|tok| !tok.is_empty())
            .map(parse_noise)
            .collect::<Result<_>>()?,
        None => NoiseFamily::ALL.to_vec(),
    };
    if family_list.is_empty() {
        return Err(invalid("--families: no values given".to_string()));
    }
    let base = rate_args.shape.resolve(Scenario::Null)?;
    let mut rows = Vec::new();
    let mut configs = Vec::new();
    for (i, &family) in family_list.iter().enumerate() {
        let mut spec = base;
        spec.noise = family;
        let cfg = build_suite(&rate_args, spec, methods.clone())?;
        let outcome = run_suite(&cfg)?;
        rows.extend(summarize_suite(
            &outcome,
            &cfg,
            Scenario::Null,
            i as f64,
            family.name().to_string(),
        ));
        configs.push(cfg);
    }
    emit_rate_output(&rate_args, rows, configs, "noise", "false positive rate")
}

#[derive(Serialize)]
struct BenchRow {
    n_t: usize,
    trial: usize,
    secs: f64,
    segments: usize,
    features: usize,
}

#[derive(Serialize)]
struct BenchSetting {
    n_t: usize,
    trials: usize,
    median_secs_per_feature: Option<f64>,
    median_segments_per_feature: Option<f64>,
}

#[derive(Serialize)]
struct BenchReport {
    rows: Vec<BenchRow>,
    settings: Vec<BenchSetting>,
    /// Least-squares fit of per-trial seconds on per-trial segments.
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

fn bench(args: BenchArgs) -> Result<()> {
    let sweep = parse_usize_list(&args.sweep_nt, "--sweep-nt")?;
    if args.trials == 0 {
        return Err(invalid("--trials must be positive".to_string()));
    }
    let base = args.shape.resolve(Scenario::Signal)?;
    let mut rows = Vec::new();
    let mut settings = Vec::new();
    let mut configs = Vec::new();
    for &n_t in &sweep {
        let mut spec = base;
        spec.n_t = n_t;
        let informative = (0..spec.informative).collect();
        let pipeline = pipeline_config(
            &args.pipeline,
            args.lambda_scale,
            args.lambda_stacked,
            args.lambda_pooled,
            args.lambda_debias,
            informative,
        )?;
        let cfg = SuiteConfig {
            spec,
            pipeline,
            trials: args.trials,
            alpha: 0.05,
            master_seed: args.seed,
            methods: vec![Method::Selective],
            search: SearchOptions::default(),
            progress: args.progress,
        };
        let outcome = run_suite(&cfg)?;
        let mut secs_per_feature = Vec::new();
        let mut segments_per_feature = Vec::new();
        for t in &outcome.timings {
            rows.push(BenchRow {
                n_t,
                trial: t.trial,
                secs: t.secs,
                segments: t.segments,
                features: t.features,
            });
            if t.features > 0 {
                secs_per_feature.push(t.secs / t.features as f64);
                segments_per_feature.push(t.segments as f64 / t.features as f64);
            }
        }
        settings.push(BenchSetting {
            n_t,
            trials: outcome.trials,
            median_secs_per_feature: median(&mut secs_per_feature),
            median_segments_per_feature: median(&mut segments_per_feature),
        });
        configs.push(cfg);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().map(|r| (r.segments as f64, r.secs)).unzip();
    let (slope, intercept, r_squared) = linear_fit_r2(&xs, &ys);
    let report = BenchReport { rows, settings, slope, intercept, r_squared };
    let text = match args.format.as_str() {
        "csv" => rows_to_csv(&report.rows)?,
        "json" => to_json(&report)?,
        other => return Err(invalid(format!("unknown format '{other}' (expected csv or json)"))),
    };
    write_text(&args.out, &text)?;
    emit_manifest("bench", &configs, &[&args.out], &args.manifest, &args.out)
}

fn ingest_options(args: &IngestArgs) -> Result<(PathBuf, IngestOptions)> {
    let domain = match (&args.domain_column, &args.sources) {
        (Some(column), None) => {
            let target_value = args.target_value.clone().ok_or_else(|| {
                invalid("--target-value is required with --domain-column".to_string())
            })?;
            DomainSpec::Column { name: column.clone(), target_value }
        }
        (None, Some(raw)) => {
            let sources: Vec<PathBuf> = raw
                .split(',')
                .map(|tok| tok.trim())
                .filter(|tok| !tok.is_empty())
                .map(PathBuf::from)
                .collect();
            if sources.is_empty() {
                return Err(invalid("--sources: no files given".to_string()));
            }
            DomainSpec::Files { sources }
        }
        (Some(_), Some(_)) => {
            return Err(invalid(
                "use either --domain-column or --sources, not both".to_string(),
            ))
        }
        (None, None) => {
            return Err(invalid(
                "one of --domain-column (with --target-value) or --sources is required".to_string(),
            ))
        }
    };
    let opts = IngestOptions {
        response_column: args.response.clone(),
        domain,
        target_rows: args.target_rows,
        source_rows: args.source_rows,
        seed: args.seed,
        standardize: !args.no_standardize,
        sigma2: args.sigma2,
    };
    Ok((args.data.clone(), opts))
}

#[derive(Serialize)]
struct DatasetShapes {
    p: usize,
    n_t: usize,
    n_s: usize,
    k: usize,
}

#[derive(Serialize)]
struct IngestCheckDocument {
    shapes: DatasetShapes,
    report: IngestReport,
}

fn ingest_check(args: IngestCheckArgs) -> Result<()> {
    let (path, opts) = ingest_options(&args.ingest)?;
    let (data, report) = ingest_csv(&path, &opts)?;
    let doc = IngestCheckDocument {
        shapes: DatasetShapes {
            p: data.feature_count(),
            n_t: data.n_t(),
            n_s: data.n_s(),
            k: data.k(),
        },
        report,
    };
    write_text(&args.out, &to_json(&doc)?)?;
    emit_manifest("ingest-check", &opts, &[&args.out], &args.manifest, &args.out)
}

#[derive(Serialize)]
struct InferDocument {
    alpha: f64,
    ingest: IngestReport,
    result: InferenceResult,
}

#[derive(Serialize)]
struct InferManifestConfig {
    data: String,
    ingest: IngestOptions,
    inference: InferenceConfig,
    alpha: f64,
}

fn infer(args: InferArgs) -> Result<()> {
    check_alpha(args.alpha)?;
    let (path, opts) = ingest_options(&args.ingest)?;
    let informative = match &args.informative {
        Some(raw) => parse_usize_list(raw, "--informative")?,
        None => Vec::new(),
    };
    let pipeline = pipeline_config(
        &args.pipeline,
        args.lambda_scale,
        args.lambda_stacked,
        args.lambda_pooled,
        args.lambda_debias,
        informative,
    )?;
    let mode = match args.mode.as_str() {
        "full" => ConditioningMode::Full,
        "oc" => ConditioningMode::OverConditioning,
        other => return Err(invalid(format!("unknown mode '{other}' (expected full or oc)"))),
    };
    let mut search = SearchOptions::default();
    if let Some(cap) = args.solver_max_sweeps {
        search.solver_max_sweeps = cap;
    }
    let cfg = InferenceConfig {
        pipeline,
        mode,
        baselines: BaselineOptions {
            bonferroni: !args.no_bonferroni,
            datasplit: args.datasplit_seed,
        },
        compute_oc: args.compute_oc,
        search,
    };
    let (data, report) = ingest_csv(&path, &opts)?;
    let result = run_ptlsi(&data, &cfg)?;
    let doc = InferDocument { alpha: args.alpha, ingest: report, result };
    write_text(&args.out, &to_json(&doc)?)?;
    let config = InferManifestConfig {
        data: path.display().to_string(),
        ingest: opts,
        inference: cfg,
        alpha: args.alpha,
    };
    emit_manifest("infer", &config, &[&args.out], &args.manifest, &args.out)
}
