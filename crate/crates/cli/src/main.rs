//! `trendcast` command-line driver.

mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use config::Config;
use trendcast::backtest::{backtest_panel, write_scores_csv};
use trendcast::ingest::{
    format_date, parse_iso_date, parse_jhu_wide, parse_long, write_hub_quantiles, write_long, DailySeries,
    HubForecast, SeriesKind,
};
use trendcast::pipeline::{forecast_region, RegionForecast};
use trendcast::preprocess::preprocess_pipeline;
use trendcast::probabilistic::Target;
use trendcast::riskmap::{classify, read_reff, read_tests, write_riskmap_csv, RiskInput};
use trendcast::screening::{screen_series, select_regions, write_screening_csv};

/// Bad invocation rather than bad data; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "trendcast", version, about = "Robust trend forecasts for daily case and death counts")]
struct Cli {
    /// Flat TOML file overriding pipeline parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Glob over region ids (`country` or `country/subregion`).
    #[arg(long, global = true)]
    regions: Option<String>,
    /// Forecast origin; later data are ignored.
    #[arg(long, global = true, value_parser = parse_date)]
    as_of: Option<NaiveDate>,
    /// Seed for synthetic data generation; recorded for reproducibility.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Daily counts: JHU wide cumulative file or `region,date,value` long file.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Cases)]
    kind: Kind,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Kind {
    Cases,
    Deaths,
}

impl From<Kind> for SeriesKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Cases => SeriesKind::Cases,
            Kind::Deaths => SeriesKind::Deaths,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert input data to the long daily format.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Clean negative counts, reporting gaps and unreported trailing days.
    Preprocess {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Estimate the piecewise robust trend.
    Trend {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Weekly quantile forecasts in hub format, plus one SVG per region.
    Forecast {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long)]
        no_plot: bool,
    },
    /// Rolling-origin evaluation against the constant-week baseline.
    Backtest {
        #[command(flatten)]
        input: InputArgs,
        /// Later snapshot used as ground truth (defaults to the input).
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, value_parser = parse_date)]
        start: Option<NaiveDate>,
        #[arg(long, value_parser = parse_date)]
        end: Option<NaiveDate>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Data-quality screening and region selection.
    Screen {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Risk colours from forecast incidence, R-effective and testing.
    Riskmap {
        #[command(flatten)]
        input: InputArgs,
        /// `region,date,r_eff`
        #[arg(long)]
        reff: PathBuf,
        /// `region,tests_per_million`
        #[arg(long)]
        tests: PathBuf,
        /// `region,population`
        #[arg(long)]
        population: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// SVG charts only.
    Plot {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    parse_iso_date(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_series(args: &InputArgs, pattern: Option<&str>) -> anyhow::Result<Vec<DailySeries>> {
    let bytes = fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let kind = args.kind.into();
    let long = bytes.starts_with(b"region,date,value");
    let mut all = if long { parse_long(&bytes, kind)? } else { parse_jhu_wide(&bytes, kind)? };
    if let Some(p) = pattern {
        let pat = glob::Pattern::new(p).map_err(|e| usage(format!("invalid region glob {p:?}: {e}")))?;
        all.retain(|s| pat.matches(&s.region.id()));
    }
    if all.is_empty() {
        return Err(usage(format!("no region matches {:?}", pattern.unwrap_or("*"))));
    }
    all.sort_by(|a, b| a.region.cmp(&b.region));
    Ok(all)
}

/// Restrict to `as_of`, or pad with unreported days up to it, so every
/// region shares the same origin date.
fn align_to(series: &DailySeries, origin: NaiveDate) -> anyhow::Result<DailySeries> {
    if origin < series.start_date {
        return Err(usage(format!("origin {} precedes data for {}", format_date(origin), series.region)));
    }
    let last = (origin - series.start_date).num_days() as usize;
    let mut s = series.truncated(last);
    s.values.resize(last + 1, None);
    Ok(s)
}

fn origin_date(series: &[DailySeries], as_of: Option<NaiveDate>) -> NaiveDate {
    as_of.unwrap_or_else(|| series.iter().map(DailySeries::end_date).max().expect("non-empty"))
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn file_stem(region_id: &str) -> String {
    region_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

const HUB_TARGETS: [Target; 2] = [Target::WeeklyTotal(1), Target::WeeklyTotal(2)];

fn forecasts(series: &[DailySeries], origin: NaiveDate, cfg: &Config) -> anyhow::Result<Vec<RegionForecast>> {
    let pipeline = cfg.pipeline();
    let exec = cfg.execution();
    let aligned = series.iter().map(|s| align_to(s, origin)).collect::<anyhow::Result<Vec<_>>>()?;
    let results = exec.map(&aligned, |s| forecast_region(s, s.len() - 1, &HUB_TARGETS, &pipeline, exec));
    let mut out = Vec::new();
    for (s, r) in aligned.iter().zip(results) {
        match r {
            Ok(f) => {
                for (t, why) in &f.missing {
                    warn!("{}: no quantiles for {}: {why}", s.region, t.label());
                }
                out.push(f);
            }
            Err(e) => warn!("{}: skipped: {e}", s.region),
        }
    }
    if out.is_empty() {
        return Err(anyhow!("no region had enough history to forecast"));
    }
    Ok(out)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        info!("seed {seed}");
    }
    let regions = cli.regions.as_deref();
    match cli.command {
        Command::Ingest { input, output } => {
            let mut series = load_series(&input, regions)?;
            if let Some(d) = cli.as_of {
                series = series.iter().filter(|s| s.start_date <= d).map(|s| align_to(s, d)).collect::<anyhow::Result<_>>()?;
            }
            write(&output, &write_long(&series)?)
        }
        Command::Preprocess { input, output } => {
            let series = load_series(&input, regions)?;
            let origin = origin_date(&series, cli.as_of);
            let pcfg = cfg.pipeline().preprocess;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["region", "date", "value", "provenance"])?;
            for s in &series {
                let clean = preprocess_pipeline(&align_to(s, origin)?, &pcfg);
                for (i, (v, p)) in clean.values.iter().zip(&clean.provenance).enumerate() {
                    let date = format_date(s.date_at(i));
                    w.write_record([s.region.id(), date, format!("{v:.3}"), format!("{p:?}").to_lowercase()])?;
                }
            }
            write(&output, &w.into_inner().map_err(|e| anyhow!(e.to_string()))?)
        }
        Command::Trend { input, output } => {
            let series = load_series(&input, regions)?;
            let origin = origin_date(&series, cli.as_of);
            let p = cfg.pipeline();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["region", "date", "value", "trend", "outlier"])?;
            for s in &series {
                let clean = preprocess_pipeline(&align_to(s, origin)?, &p.preprocess);
                let t = match trendcast::piecewise::estimate_piecewise_trend(&clean, &p.trend) {
                    Ok(t) => t,
                    Err(e) => {
                        warn!("{}: skipped: {e}", s.region);
                        continue;
                    }
                };
                for (i, v) in t.values.iter().enumerate() {
                    w.write_record([
                        s.region.id(),
                        format_date(s.date_at(i)),
                        format!("{:.3}", clean.values[i]),
                        format!("{v:.3}"),
                        t.outlier_mask[i].to_string(),
                    ])?;
                }
            }
            write(&output, &w.into_inner().map_err(|e| anyhow!(e.to_string()))?)
        }
        Command::Forecast { input, output_dir, no_plot } => {
            let series = load_series(&input, regions)?;
            let origin = origin_date(&series, cli.as_of);
            let fcs = forecasts(&series, origin, &cfg)?;
            let kind: SeriesKind = input.kind.into();
            let hub: Vec<HubForecast> = fcs
                .iter()
                .flat_map(|f| {
                    f.quantiles.iter().map(|q| HubForecast { location: f.region.id(), kind, forecast: q.clone() })
                })
                .collect();
            write(&output_dir.join("forecasts.csv"), &write_hub_quantiles(&hub, origin)?)?;
            if !no_plot {
                for f in &fcs {
                    let id = f.region.id();
                    write(&output_dir.join(format!("{}.svg", file_stem(&id))), plot::render_svg(&id, f, 84).as_bytes())?;
                }
            }
            Ok(())
        }
        Command::Plot { input, output_dir } => {
            let series = load_series(&input, regions)?;
            let origin = origin_date(&series, cli.as_of);
            for f in forecasts(&series, origin, &cfg)? {
                let id = f.region.id();
                write(&output_dir.join(format!("{}.svg", file_stem(&id))), plot::render_svg(&id, &f, 84).as_bytes())?;
            }
            Ok(())
        }
        Command::Backtest { input, ground_truth, start, end, output_dir } => {
            let series = load_series(&input, regions)?;
            let mut cfg = cfg;
            cfg.backtest_start = start.or(cfg.backtest_start);
            cfg.backtest_end = end.or(cfg.backtest_end);
            let bt = cfg.backtest().map_err(|e| usage(e.to_string()))?;
            let truth_path = ground_truth.or_else(|| cfg.ground_truth.clone());
            let truth = match truth_path {
                Some(p) => load_series(&InputArgs { input: p, kind: input.kind }, regions)?,
                None => series.clone(),
            };
            let mut panel = Vec::new();
            for s in &series {
                match truth.iter().find(|t| t.region == s.region) {
                    Some(t) => panel.push((s.clone(), t.clone())),
                    None => warn!("{}: no ground truth, skipped", s.region),
                }
            }
            let report = backtest_panel(&panel, &bt, &cfg.pipeline(), cfg.execution())
                .map_err(|e| match e {
                    trendcast::error::Error::InvalidParameter(m) => usage(m),
                    other => other.into(),
                })?;
            for (region, why) in &report.failures {
                warn!("{region}: not evaluated: {why}");
            }
            let skipped: usize = report.regions.iter().map(|r| r.skipped_origins).sum();
            if skipped > 0 {
                warn!("{skipped} region-origins skipped for insufficient history");
            }
            let mut scores = Vec::new();
            write_scores_csv(&report, &mut scores)?;
            write(&output_dir.join("scores.csv"), &scores)?;
            let mut strat = Vec::new();
            report.stratification.write_csv(&mut strat)?;
            write(&output_dir.join("stratification.csv"), &strat)
        }
        Command::Screen { input, output } => {
            let series = load_series(&input, regions)?;
            let sc = cfg.screening();
            let metrics = series
                .iter()
                .map(|s| {
                    let s = match cli.as_of {
                        Some(d) => align_to(s, d)?,
                        None => s.clone(),
                    };
                    Ok((s.region.clone(), screen_series(&s, &sc)?))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let reports = select_regions(metrics, &sc);
            let mut buf = Vec::new();
            write_screening_csv(&reports, &mut buf)?;
            write(&output, &buf)
        }
        Command::Riskmap { input, reff, tests, population, output } => {
            let series = load_series(&input, regions)?;
            let origin = origin_date(&series, cli.as_of);
            let reff = read_reff(&fs::read(&reff)?, Some(origin))?;
            let tests = read_tests(&fs::read(&tests)?)?;
            let pops = read_population(&fs::read(&population)?)?;
            let mut rows = Vec::new();
            for f in forecasts(&series, origin, &cfg)? {
                let id = f.region.id();
                let mut region = f.region.clone();
                if let Some(&p) = pops.get(&id) {
                    region = region.with_population(p)?;
                }
                let input = RiskInput {
                    region,
                    forecast_weekly_cases: f.point.method.weekly_total(1)?.total,
                    r_eff: reff.get(&id).copied(),
                    tests_per_million: tests.get(&id).copied(),
                };
                let class = classify(&input)?;
                if let Some(d) = class.diagnostic {
                    info!("{id}: {d:?}");
                }
                rows.push((input, class));
            }
            let mut buf = Vec::new();
            write_riskmap_csv(&rows, &mut buf)?;
            write(&output, &buf)
        }
    }
}

fn read_population(bytes: &[u8]) -> anyhow::Result<std::collections::BTreeMap<String, u64>> {
    #[derive(serde::Deserialize)]
    struct Row {
        region: String,
        population: u64,
    }
    let mut out = std::collections::BTreeMap::new();
    for (i, row) in csv::Reader::from_reader(bytes).deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("population row {}", i + 2))?;
        out.insert(row.region, row.population);
    }
    Ok(out)
}
