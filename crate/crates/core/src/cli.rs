//! Command-line front end: one subcommand per workflow step, each reading
//! files and writing its artifacts to disk.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{attribute_density, compare_scored, decompose_attribute, flag_outliers, DEFAULT_MAD_K};
use crate::drift::{
    detect_drift_points, segment_at, segment_log, segments_from_ranges, sliding_window_pvalues, write_pvalues_csv,
    DriftPoint, PValueSeries, Segment, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::eventlog::{parse_log, read_header, DiscretizerSpec, EventLog, Schema};
use crate::parameters::{train_model, EdbnModel};
use crate::plot::PlotDocument;
use crate::scoring::{read_trace_means, score_log, write_scores_csv, write_trace_scores_csv, TraceScore};
use crate::structure::StructureConfig;
use crate::testkit::{generate_log, ring_matrix, Applicants, DriftChange, DriftSpec, ProcessSpec};

pub const THREADS_ENV: &str = "DRIFTSCOPE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "driftscope", version, about = "Concept-drift detection and explanation for event logs")]
pub struct Cli {
    /// key=value file supplying any flag not given on the command line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on the head of a log and save it.
    Learn(LearnArgs),
    /// Score every trace of a log against a model.
    Score(ScoreArgs),
    /// Sliding-window KS test over trace scores.
    Drift(DriftArgs),
    /// Split the trace range into segments.
    Segment(SegmentArgs),
    /// Per-segment attribute densities and the median overlay.
    Density(DensityArgs),
    /// Value / CPT / FD components of one attribute.
    Decompose(DecomposeArgs),
    /// Traces whose attribute scores deviate from their segment.
    Outliers(OutliersArgs),
    /// Generate a synthetic log with ground truth.
    Synth(SynthArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Event log CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Schema file of `column = kind` lines; inferred from the header when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "case")]
    pub trace_id: String,
    #[arg(long)]
    pub timestamp: Option<String>,
    /// Columns to ignore.
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
    /// Equal-frequency discretization as `attribute:bins`.
    #[arg(long, value_parser = parse_discretize)]
    pub discretize: Vec<DiscretizerSpec>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 30_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub train_events: u64,
    #[arg(long, default_value_t = 0.99)]
    pub fd_threshold: f64,
    #[arg(long, default_value_t = 2)]
    pub k_max: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelInput {
    #[arg(long)]
    pub model: PathBuf,
    /// Event log CSV, parsed with the model's schema.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Detail {
    /// One row per trace.
    #[default]
    Trace,
    /// One row per event and attribute with every component.
    Event,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: ModelInput,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub detail: Detail,
    /// Also write the trace-score plot (JSON, plus SVG with --svg).
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    /// Scores CSV written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Window size; repeat for several.
    #[arg(long = "window", value_delimiter = ',', default_value = "400", value_parser = parse_window)]
    pub windows: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    /// Minimum distance between drift points; defaults to the window size.
    #[arg(long)]
    pub min_separation: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Scores CSV (fixes the number of traces).
    #[arg(long)]
    pub scores: PathBuf,
    /// drift_points.json written by `drift`.
    #[arg(long, conflicts_with_all = ["cuts", "range"])]
    pub drift: Option<PathBuf>,
    /// Which window's drift points to use; defaults to the first.
    #[arg(long, requires = "drift")]
    pub window: Option<usize>,
    #[arg(long, value_delimiter = ',', conflicts_with = "range")]
    pub cuts: Vec<usize>,
    /// Half-open range `start:end`; repeat for several.
    #[arg(long, value_parser = parse_range)]
    pub range: Vec<(usize, usize)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub data: ModelInput,
    #[arg(long)]
    pub segments: PathBuf,
    /// Segment the model was trained on; deltas are relative to it.
    #[arg(long, default_value_t = 0)]
    pub reference: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub data: ModelInput,
    #[arg(long)]
    pub attribute: String,
    /// Restrict to one segment of --segments.
    #[arg(long, requires = "segments")]
    pub segment: Option<usize>,
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct OutliersArgs {
    #[command(flatten)]
    pub data: ModelInput,
    /// Segments to judge traces within; the whole log otherwise.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAD_K)]
    pub k: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub traces: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Process description (JSON); the built-in example otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Drift list (JSON array).
    #[arg(long, conflicts_with = "drift_at")]
    pub drifts: Option<PathBuf>,
    /// Shorthand drift: new transition matrix plus a new doctype value.
    #[arg(long)]
    pub drift_at: Vec<usize>,
    /// Draw applicants from a pool of this size instead of one per trace.
    #[arg(long)]
    pub applicant_pool: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

fn parse_discretize(s: &str) -> std::result::Result<DiscretizerSpec, String> {
    let (attribute, bins) = s.rsplit_once(':').ok_or("expected attribute:bins")?;
    let bin_count = bins.parse::<usize>().map_err(|e| e.to_string())?;
    if bin_count < 2 {
        return Err("need at least 2 bins".into());
    }
    Ok(DiscretizerSpec {
        attribute: attribute.to_string(),
        bin_count,
    })
}

fn parse_window(s: &str) -> std::result::Result<usize, String> {
    let w = s.parse::<usize>().map_err(|e| e.to_string())?;
    if w < 4 || w % 2 != 0 {
        return Err("window must be even and at least 4".into());
    }
    Ok(w)
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected start:end")?;
    Ok((
        a.parse().map_err(|e: std::num::ParseIntError| e.to_string())?,
        b.parse().map_err(|e: std::num::ParseIntError| e.to_string())?,
    ))
}

/// Appends `--key value` for every config-file entry whose flag is not
/// already on the command line.
fn merge_config(mut args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    let path = args.get(pos + 1).ok_or("--config needs a path")?.clone();
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", Path::new(&path).display()))?;
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut extra = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", no + 1))?;
        let key = key.trim().replace('_', "-");
        if key == "config" || given.contains(&key) {
            continue;
        }
        let value = value.trim();
        extra.push(OsString::from(format!("--{key}")));
        if !value.is_empty() && value != "true" {
            extra.push(OsString::from(value));
        }
    }
    args.extend(extra);
    Ok(args)
}

fn configure_threads() {
    let Ok(v) = std::env::var(THREADS_ENV) else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={v}: expected a positive integer"),
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 on usage errors, 1 on runtime failures.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Learn(a) => learn(a),
        Command::Score(a) => score(a),
        Command::Drift(a) => drift(a),
        Command::Segment(a) => segment(a),
        Command::Density(a) => density(a),
        Command::Decompose(a) => decompose(a),
        Command::Outliers(a) => outliers(a),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => serve(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Writes `<path>` as plot JSON and, with `svg`, a sibling `.svg`.
fn write_plot(path: &Path, doc: &PlotDocument, svg: bool) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(doc.to_json().as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    if svg {
        let svg_path = path.with_extension("svg");
        fs::write(&svg_path, doc.to_svg()).map_err(|e| Error::io(&svg_path, e))?;
    }
    Ok(())
}

pub fn load_input(a: &InputArgs) -> Result<EventLog> {
    let schema = match &a.schema {
        Some(p) => Schema::from_config_file(p)?,
        None => Schema::infer(&read_header(&a.input)?, &a.trace_id, a.timestamp.as_deref())?,
    };
    let mut log = parse_log(&a.input, &schema)?;
    if !a.drop.is_empty() {
        log = log.filter_attributes(&a.drop)?;
    }
    for d in &a.discretize {
        log = log.discretize(d)?;
    }
    Ok(log)
}

fn load_scored(data: &ModelInput) -> Result<(EdbnModel, Vec<TraceScore>)> {
    let model = EdbnModel::load(&data.model)?;
    let log = parse_log(&data.input, &model.schema)?;
    let scores = score_log(&model, &log)?;
    Ok((model, scores))
}

fn learn(a: LearnArgs) -> Result<()> {
    let log = load_input(&a.input)?;
    let (train, _) = log.split_train(a.train_events as usize)?;
    log::info!(
        "training on {} traces / {} events of {}",
        train.trace_count(),
        train.event_count(),
        log.trace_count()
    );
    let config = StructureConfig {
        fd_threshold: a.fd_threshold,
        k_max: a.k_max,
        ..StructureConfig::default()
    };
    let model = train_model(&train, &config)?;
    log::info!("structure:\n{}", model.graph);
    model.save(&a.out)
}

fn score(a: ScoreArgs) -> Result<()> {
    let (model, scores) = load_scored(&a.data)?;
    let w = create(&a.out)?;
    match a.detail {
        Detail::Trace => write_trace_scores_csv(&scores, w)?,
        Detail::Event => write_scores_csv(&model, &scores, w)?,
    }
    if let Some(p) = &a.plot {
        let training = Some(model.metadata.trace_count).filter(|&n| n > 0);
        write_plot(p, &PlotDocument::trace_scores(&scores, training, &[]), a.svg)?;
    }
    log::info!("scored {} traces", scores.len());
    Ok(())
}

/// Drift points of one window size, as written to `drift_points.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    pub window: usize,
    pub threshold: f64,
    pub min_separation: usize,
    pub drift_points: Vec<DriftPoint>,
}

fn read_means(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_trace_means(BufReader::new(file))?.into_iter().map(|(_, m)| m).collect())
}

fn drift(a: DriftArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(Error::InvalidArgument("threshold must lie in (0, 1)".into()));
    }
    let means = read_means(&a.scores)?;
    let mut all_series: Vec<PValueSeries> = Vec::new();
    let mut reports = Vec::new();
    for &w in &a.windows {
        let series = sliding_window_pvalues(&means, w, a.step)?;
        let min_sep = a.min_separation.unwrap_or(w);
        let points = detect_drift_points(&series, a.threshold, min_sep)?;
        write_pvalues_csv(&series, create(&a.out_dir.join(format!("pvalues_w{w}.csv")))?)?;
        log::info!(
            "window {w}: {} drift point(s) at {:?}",
            points.len(),
            points.iter().map(|p| p.trace_index).collect::<Vec<_>>()
        );
        reports.push(DriftReport {
            window: w,
            threshold: a.threshold,
            min_separation: min_sep,
            drift_points: points,
        });
        all_series.push(series);
    }
    write_json(&a.out_dir.join("drift_points.json"), &reports)?;
    let markers = &reports[0].drift_points;
    write_plot(
        &a.out_dir.join("drift_plot.json"),
        &PlotDocument::drift(&all_series, a.threshold, markers),
        a.svg,
    )
}

/// Contents of a segments file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentFile {
    pub trace_count: usize,
    pub segments: Vec<Segment>,
}

fn segment(a: SegmentArgs) -> Result<()> {
    let n = read_means(&a.scores)?.len();
    let segments = if let Some(path) = &a.drift {
        let reports: Vec<DriftReport> = read_json(path)?;
        let report = match a.window {
            Some(w) => reports
                .iter()
                .find(|r| r.window == w)
                .ok_or_else(|| Error::InvalidArgument(format!("no drift points for window {w} in {}", path.display())))?,
            None => reports
                .first()
                .ok_or_else(|| Error::InvalidArgument(format!("{} lists no windows", path.display())))?,
        };
        segment_log(n, &report.drift_points)?
    } else if !a.range.is_empty() {
        segments_from_ranges(n, &a.range)?
    } else {
        segment_at(n, &a.cuts)?
    };
    for s in &segments {
        log::info!("segment {}: traces [{}, {})", s.id, s.start_trace, s.end_trace);
    }
    write_json(
        &a.out,
        &SegmentFile {
            trace_count: n,
            segments,
        },
    )
}

fn read_segments(path: &Path, n: usize) -> Result<Vec<Segment>> {
    let file: SegmentFile = read_json(path)?;
    if file.trace_count != n {
        return Err(Error::InvalidArgument(format!(
            "segments cover {} traces but the log has {n}",
            file.trace_count
        )));
    }
    Ok(file.segments)
}

fn density(a: DensityArgs) -> Result<()> {
    let (model, scores) = load_scored(&a.data)?;
    let segments = read_segments(&a.segments, scores.len())?;
    let cmp = compare_scored(&model, &scores, &segments, a.reference)?;
    write_json(&a.out_dir.join("density.json"), &cmp)?;
    for s in &cmp.summaries {
        write_plot(&a.out_dir.join(format!("density_segment{}.json", s.segment_id)), &s.plot(), a.svg)?;
    }
    write_plot(&a.out_dir.join("median_overlay.json"), &cmp.overlay.plot(), a.svg)?;
    for other in &cmp.overlay.segment_ids {
        if *other == a.reference {
            continue;
        }
        let ranked = cmp.overlay.ranked_changes(a.reference, *other);
        if let Some((attr, delta)) = ranked.first() {
            log::info!("segment {other}: largest median change {attr} ({delta:+.3})");
        }
    }
    Ok(())
}

fn decompose(a: DecomposeArgs) -> Result<()> {
    let (model, scores) = load_scored(&a.data)?;
    let traces = match (&a.segments, a.segment) {
        (Some(path), Some(sid)) => {
            let segs = read_segments(path, scores.len())?;
            let seg = segs
                .iter()
                .find(|s| s.id == sid)
                .ok_or_else(|| Error::InvalidArgument(format!("no segment {sid} in {}", path.display())))?;
            &scores[seg.range()]
        }
        _ => &scores[..],
    };
    let breakdown = decompose_attribute(&model, traces, &a.attribute)?;
    write_json(&a.out, &breakdown)?;
    write_plot(&a.out.with_extension("plot.json"), &breakdown.plot(), a.svg)
}

fn outliers(a: OutliersArgs) -> Result<()> {
    if a.k.is_nan() || a.k <= 0.0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let (model, scores) = load_scored(&a.data)?;
    let segments = match &a.segments {
        Some(p) => read_segments(p, scores.len())?,
        None => segment_at(scores.len(), &[])?,
    };
    let mut found = Vec::new();
    for s in &segments {
        let summary = attribute_density(&model, &scores[s.range()], s.id)?;
        found.extend(flag_outliers(&summary, a.k));
    }
    log::info!("{} outlier trace(s) at k = {}", found.len(), a.k);
    write_json(&a.out, &found)
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => read_json(p)?,
        None => ProcessSpec::example(a.seed),
    };
    if a.spec.is_none() {
        spec.seed = a.seed;
    }
    if let Some(n) = a.applicant_pool {
        spec.applicants = Applicants::Pool(n);
    }
    let drifts: Vec<DriftSpec> = match &a.drifts {
        Some(p) => read_json(p)?,
        None => a
            .drift_at
            .iter()
            .enumerate()
            .map(|(i, &at)| DriftSpec {
                at_trace: at,
                changes: vec![
                    DriftChange::Transitions {
                        matrix: ring_matrix(spec.activities.len(), 2 + i, 0.6, 0.1),
                    },
                    DriftChange::NewValue {
                        attribute: "doctype".into(),
                        value: format!("New document {}", i + 1),
                        probability: 0.1,
                    },
                ],
            })
            .collect(),
    };
    let generated = generate_log(&spec, a.traces, &drifts)?;
    let mut w = create(&a.out)?;
    generated.log.write_csv(&mut w)?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    if let Some(p) = &a.truth {
        write_json(p, &generated.truth)?;
    }
    log::info!(
        "wrote {} traces / {} events to {}",
        generated.log.trace_count(),
        generated.log.event_count(),
        a.out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    runtime
        .block_on(crate::api::serve(crate::api::ServerConfig {
            port: a.port,
            data_dir: a.data_dir.clone(),
        }))
        .map_err(|e| Error::io(a.data_dir.unwrap_or_default(), e))
}
