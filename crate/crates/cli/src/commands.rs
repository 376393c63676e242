use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bmdl_core::search::{InitStrategy, Scorer};
use bmdl_core::simulate::{run_study, simulate_series, Scenario};
use bmdl_core::{
    fit, season_of, ChangepointConfig, FittedParams, Hyperparams, Metadata, Objective, SearchOptions, SeriesData,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ingest::{ingest, StationRecord, YearMonth};
use crate::output::{
    changepoints, FitOutput, ModeName, ScoreOutput, SeriesInfo, StudyOutput, TimePoint, SCHEMA_VERSION,
};

/// Exit status when a fit finished but some chains aborted.
pub const EXIT_ABORTED_CHAINS: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "bmdl", version, about = "Bayesian MDL multiple changepoint detection")]
pub struct Cli {
    /// Worker threads (defaults to BMDL_THREADS, then the number of CPUs).
    #[arg(long, global = true, env = "BMDL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for the best changepoint configuration of a series.
    Fit(FitArgs),
    /// Score one explicit configuration.
    Score(ScoreArgs),
    /// Draw one series from a scenario file.
    Simulate(SimulateArgs),
    /// Run a replication study from a scenario file.
    Study(StudyArgs),
    /// Convert fit or study JSON into tidy CSV for plotting.
    Plotdata(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Uni,
    Bi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Objective,
    SixPerCentury,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with header year,month,value[,value].
    #[arg(long)]
    pub series: PathBuf,
    /// CSV with header year,month listing documented change times.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uni")]
    pub mode: Mode,
    /// Column analyzed in univariate mode (name or 1-based index).
    #[arg(long)]
    pub component: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub ar_order: usize,
    #[arg(long, default_value_t = 12)]
    pub period: usize,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long, value_enum, default_value = "default")]
    pub preset: Preset,
    /// TOML file with any of a, b_undoc, b_doc, nu, alpha_undoc, alpha_doc.
    #[arg(long)]
    pub hyperparams: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b_undoc: Option<f64>,
    #[arg(long)]
    pub b_doc: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
}

impl PriorArgs {
    /// Preset, then the file (missing keys take default values), then flags.
    pub fn resolve(&self) -> Result<Hyperparams> {
        let mut hp = match self.preset {
            Preset::Default => Hyperparams::default(),
            Preset::Objective => Hyperparams::objective(),
            Preset::SixPerCentury => Hyperparams::six_per_century(),
        };
        if let Some(path) = &self.hyperparams {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let table: toml::Table =
                toml::from_str(&text).with_context(|| format!("invalid hyperparameter file {}", path.display()))?;
            hp = table
                .clone()
                .try_into()
                .with_context(|| format!("invalid hyperparameter file {}", path.display()))?;
            if table.contains_key("b_undoc") && !table.contains_key("alpha_undoc") {
                hp.alpha_undoc[3] = hp.b_undoc;
            }
            if table.contains_key("b_doc") && !table.contains_key("alpha_doc") {
                hp.alpha_doc[3] = hp.b_doc;
            }
        }
        if let Some(v) = self.a {
            hp.a = v;
        }
        if let Some(v) = self.b_undoc {
            hp.b_undoc = v;
            hp.alpha_undoc[3] = v;
        }
        if let Some(v) = self.b_doc {
            hp.b_doc = v;
            hp.alpha_doc[3] = v;
        }
        if let Some(v) = self.nu {
            hp.nu = v;
        }
        Ok(hp)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value = "bmdl")]
    pub objective: Objective,
    #[arg(long, default_value_t = 20_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub flip_probability: f64,
    /// Per-component cap on m (default floor((N - p) / 20)).
    #[arg(long)]
    pub max_changepoints: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_spacing: usize,
    /// Start chains 1.. from random configurations.
    #[arg(long)]
    pub random_init: bool,
    /// Trace sampling interval; 0 disables traces.
    #[arg(long, default_value_t = 100)]
    pub trace_every: usize,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value = "bmdl")]
    pub objective: Objective,
    /// Changepoints of the first component: time indices or YYYY-MM, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub times: Option<String>,
    /// Changepoints of the second component (bivariate mode).
    #[arg(long, allow_hyphen_values = true)]
    pub times2: Option<String>,
    /// Re-score the best configuration of a fit JSON (objective and
    /// hyperparameters are taken from the file).
    #[arg(long, conflicts_with_all = ["times", "times2"])]
    pub fit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Calendar month of t = 1.
    #[arg(long, default_value = "1901-01")]
    pub start: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Override the scenario's replication count.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Override the scenario's MCMC iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Fit JSON: emits observed and fitted means per time.
    #[arg(long, conflicts_with = "table")]
    pub fit: Option<PathBuf>,
    /// Series CSV to include observed values with --fit.
    #[arg(long, requires = "fit")]
    pub series: Option<PathBuf>,
    /// Emit chain traces of the fit instead of the fitted means.
    #[arg(long, requires = "fit")]
    pub traces: bool,
    /// Study JSON: emits per-time flag rates.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Runs the parsed command and returns the process exit status.
pub fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("cannot configure {n} threads: {e}"))?;
    }
    match cli.command {
        Command::Fit(a) => run_fit(&a),
        Command::Score(a) => run_score(&a),
        Command::Simulate(a) => run_simulate(&a),
        Command::Study(a) => run_study_cmd(&a),
        Command::Plotdata(a) => run_plotdata(&a),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => write_stdout(text),
    }
}

fn write_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

struct Loaded {
    record: StationRecord,
    data: SeriesData,
    metadata: Metadata,
    names: Vec<String>,
    mode: ModeName,
}

fn pick_column(record: &StationRecord, component: Option<&str>) -> Result<usize> {
    let Some(c) = component else { return Ok(0) };
    if let Some(i) = record.names.iter().position(|n| n == c) {
        return Ok(i);
    }
    match c.parse::<usize>() {
        Ok(i) if (1..=record.names.len()).contains(&i) => Ok(i - 1),
        _ => bail!("unknown component {c:?}; columns are {}", record.names.join(", ")),
    }
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let (record, data, metadata) = ingest(&args.series, args.metadata.as_deref(), args.period, args.ar_order)?;
    match args.mode {
        Mode::Bi => {
            if data.components() != 2 {
                bail!(
                    "bivariate mode needs two value columns, {} has one",
                    args.series.display()
                );
            }
            let names = record.names.clone();
            Ok(Loaded {
                record,
                data,
                metadata,
                names,
                mode: ModeName::Bivariate,
            })
        }
        Mode::Uni => {
            let k = pick_column(&record, args.component.as_deref())?;
            let names = vec![record.names[k].clone()];
            Ok(Loaded {
                data: data.component(k)?,
                record,
                metadata,
                names,
                mode: ModeName::Univariate,
            })
        }
    }
}

fn series_info(l: &Loaded) -> SeriesInfo {
    SeriesInfo {
        start: l.record.start,
        n: l.data.len(),
        period: l.data.period(),
        ar_order: l.data.ar_order(),
        components: l.names.clone(),
    }
}

fn summary(l: &Loaded, config: &ChangepointConfig) -> String {
    let mut s = String::new();
    for (k, name) in l.names.iter().enumerate() {
        let months: Vec<String> = config
            .times(k)
            .iter()
            .map(|&t| format!("{} (t={t})", l.record.month_of(t)))
            .collect();
        let list = if months.is_empty() {
            "none".to_string()
        } else {
            months.join(", ")
        };
        let _ = writeln!(s, "{name}: {} changepoint(s): {list}", config.m_of(k));
    }
    s
}

fn run_fit(a: &FitArgs) -> Result<u8> {
    let l = load(&a.data)?;
    let hp = a.prior.resolve()?;
    let opts = SearchOptions {
        iterations: a.iterations,
        chains: a.chains,
        seed: a.seed,
        flip_probability: a.flip_probability,
        max_changepoints: a.max_changepoints,
        min_spacing: a.min_spacing,
        objective: a.objective,
        init: if a.random_init {
            InitStrategy::Random
        } else {
            InitStrategy::Empty
        },
        trace_every: a.trace_every,
    };
    let result = fit(&l.data, &l.metadata, &hp, &opts)?;
    let aborted = result.aborted_chains();
    let out = FitOutput {
        schema_version: SCHEMA_VERSION,
        kind: "fit".into(),
        mode: l.mode,
        objective: a.objective,
        series: series_info(&l),
        metadata: l.metadata.times().map(|t| TimePoint::new(&l.record, t)).collect(),
        hyperparams: hp,
        search: opts,
        changepoints: changepoints(&l.record, &l.names, &result.best_config),
        best_config: result.best_config.clone(),
        best_score: result.best_score,
        best_params: result.best_params,
        comparator_scores: result.comparator_scores,
        chains: result.chains,
    };
    let json = serde_json::to_string_pretty(&out)? + "\n";
    emit(a.output.as_deref(), &json)?;
    eprint!("{}", summary(&l, &out.best_config));
    eprintln!("{} = {:.4} nats", a.objective, out.best_score.total);
    if aborted > 0 {
        eprintln!("warning: {aborted} of {} chain(s) aborted", out.chains.len());
        return Ok(EXIT_ABORTED_CHAINS);
    }
    Ok(0)
}

/// Parses a comma-separated list of time indices or YYYY-MM months.
pub fn parse_times(spec: &str, record: &StationRecord) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let t = if tok.contains('-') {
            let ym = YearMonth::parse(tok).ok_or_else(|| anyhow!("invalid month {tok:?}, expected YYYY-MM"))?;
            let t = record.index_of(ym);
            if t < 1 {
                bail!("{tok} precedes the start of the series");
            }
            t as usize
        } else {
            tok.parse().map_err(|_| anyhow!("invalid time {tok:?}"))?
        };
        out.push(t);
    }
    Ok(out)
}

fn run_score(a: &ScoreArgs) -> Result<u8> {
    let (config, objective, hp, l) = match &a.fit {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let prev: FitOutput =
                serde_json::from_str(&text).with_context(|| format!("invalid fit JSON {}", path.display()))?;
            let data_args = DataArgs {
                series: a.data.series.clone(),
                metadata: a.data.metadata.clone(),
                mode: match prev.mode {
                    ModeName::Univariate => Mode::Uni,
                    ModeName::Bivariate => Mode::Bi,
                },
                component: prev.series.components.first().cloned(),
                ar_order: prev.series.ar_order,
                period: prev.series.period,
            };
            let mut l = load(&data_args)?;
            if a.data.metadata.is_none() {
                l.metadata = Metadata::new(prev.metadata.iter().map(|p| p.t), l.data.len(), l.data.ar_order())?;
            }
            (prev.best_config, prev.objective, prev.hyperparams, l)
        }
        None => {
            let l = load(&a.data)?;
            let mut times = vec![parse_times(a.times.as_deref().unwrap_or(""), &l.record)?];
            if l.mode == ModeName::Bivariate {
                times.push(parse_times(a.times2.as_deref().unwrap_or(""), &l.record)?);
            } else if a.times2.is_some() {
                bail!("--times2 needs --mode bi");
            }
            let config = ChangepointConfig::from_component_times(times, l.data.len(), l.data.ar_order())?;
            (config, a.objective, a.prior.resolve()?, l)
        }
    };
    let scorer = Scorer::new(&l.data, &l.metadata, &hp, objective)?;
    let score = scorer.score(&config)?;
    let out = ScoreOutput {
        schema_version: SCHEMA_VERSION,
        kind: "score".into(),
        mode: l.mode,
        objective,
        series: series_info(&l),
        changepoints: changepoints(&l.record, &l.names, &config),
        config,
        score,
    };
    write_stdout(&(serde_json::to_string_pretty(&out)? + "\n"))?;
    eprintln!(
        "{objective}: fit {:.6} + mu {:.6} + config {:.6} = {:.6}",
        score.fit_term, score.mu_penalty, score.config_penalty, score.total
    );
    Ok(0)
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let s: Scenario = toml::from_str(&text).with_context(|| format!("invalid scenario file {}", path.display()))?;
    s.validate()
        .with_context(|| format!("invalid scenario {}", path.display()))?;
    Ok(s)
}

fn run_simulate(a: &SimulateArgs) -> Result<u8> {
    let scenario = read_scenario(&a.scenario)?;
    let start = YearMonth::parse(&a.start).ok_or_else(|| anyhow!("invalid --start {:?}, expected YYYY-MM", a.start))?;
    let data = simulate_series(&scenario, a.seed)?;
    let record = StationRecord {
        start,
        names: scenario.components.iter().map(|c| c.name.clone()).collect(),
        columns: data.columns().to_vec(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["year".to_string(), "month".to_string()];
    header.extend(record.names.iter().cloned());
    w.write_record(&header)?;
    for t in 1..=data.len() {
        let ym = record.month_of(t);
        let mut row = vec![ym.year.to_string(), ym.month.to_string()];
        row.extend(data.columns().iter().map(|c| c[t - 1].to_string()));
        w.write_record(&row)?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    emit(a.output.as_deref(), &text)?;
    Ok(0)
}

fn run_study_cmd(a: &StudyArgs) -> Result<u8> {
    let mut scenario = read_scenario(&a.scenario)?;
    if let Some(it) = a.iterations {
        scenario.search.iterations = it;
    }
    let table = run_study(&scenario, a.seed, a.replications)?;
    if let Some(path) = &a.json {
        let out = StudyOutput {
            schema_version: SCHEMA_VERSION,
            kind: "study".into(),
            table: table.clone(),
        };
        fs::write(path, serde_json::to_string_pretty(&out)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    emit(a.csv.as_deref(), &table.to_csv())?;
    Ok(0)
}

fn fitted_mean(params: &FittedParams, config: &ChangepointConfig, k: usize, t: usize, period: usize) -> f64 {
    let (s, mu) = match params {
        FittedParams::Univariate {
            seasonal_means,
            regime_means,
            ..
        } => (seasonal_means, regime_means),
        FittedParams::Bivariate {
            seasonal_means,
            regime_means,
            ..
        } => (&seasonal_means[k], &regime_means[k]),
    };
    let regime = config.times(k).iter().filter(|&&tau| tau <= t).count();
    s[season_of(t, period) - 1] + if regime == 0 { 0.0 } else { mu[regime - 1] }
}

fn run_plotdata(a: &PlotArgs) -> Result<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(path) = &a.fit {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let fit: FitOutput =
            serde_json::from_str(&text).with_context(|| format!("invalid fit JSON {}", path.display()))?;
        if a.traces {
            w.write_record(["chain", "iteration", "score", "best", "m"])?;
            for c in &fit.chains {
                for s in &c.trace {
                    w.write_record([
                        c.index.to_string(),
                        s.iteration.to_string(),
                        s.score.to_string(),
                        s.best.to_string(),
                        s.m.to_string(),
                    ])?;
                }
            }
        } else {
            let observed = match &a.series {
                Some(p) => {
                    let (record, _, _) = ingest(p, None, fit.series.period, fit.series.ar_order)?;
                    let cols: Result<Vec<Vec<f64>>> = fit
                        .series
                        .components
                        .iter()
                        .map(|name| {
                            let i = pick_column(&record, Some(name))?;
                            Ok(record.columns[i].clone())
                        })
                        .collect();
                    Some(cols?)
                }
                None => None,
            };
            let record = StationRecord {
                start: fit.series.start,
                names: fit.series.components.clone(),
                columns: vec![],
            };
            w.write_record([
                "component",
                "t",
                "year",
                "month",
                "observed",
                "fitted_mean",
                "changepoint",
            ])?;
            for (k, name) in fit.series.components.iter().enumerate() {
                for t in 1..=fit.series.n {
                    let ym = record.month_of(t);
                    let obs = observed
                        .as_ref()
                        .and_then(|o| o[k].get(t - 1))
                        .map(|v| v.to_string())
                        .unwrap_or_default();
                    let mean = fitted_mean(&fit.best_params, &fit.best_config, k, t, fit.series.period);
                    w.write_record([
                        name.clone(),
                        t.to_string(),
                        ym.year.to_string(),
                        ym.month.to_string(),
                        obs,
                        mean.to_string(),
                        u8::from(fit.best_config.is_changepoint(k, t)).to_string(),
                    ])?;
                }
            }
        }
    } else if let Some(path) = &a.table {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let study: StudyOutput =
            serde_json::from_str(&text).with_context(|| format!("invalid study JSON {}", path.display()))?;
        let t = &study.table;
        w.write_record(["detector", "component", "t", "flag_rate", "true_changepoint"])?;
        for row in &t.rows {
            for (i, rate) in row.rates.flag_rates.iter().enumerate() {
                let time = t.ar_order + 1 + i;
                w.write_record([
                    row.detector.clone(),
                    row.component.clone(),
                    time.to_string(),
                    format!("{rate:.2}"),
                    u8::from(row.true_times.contains(&time)).to_string(),
                ])?;
            }
        }
    } else {
        bail!("plotdata needs --fit or --table");
    }
    let text = String::from_utf8(w.into_inner()?)?;
    emit(a.output.as_deref(), &text)?;
    Ok(0)
}
