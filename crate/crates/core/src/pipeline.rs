//! End-to-end orchestration: ingest, filter, features, fit, report.
//!
//! Every stage is available in two forms. [`run_pipeline`] hands data
//! between stages in memory and writes each artifact as it goes. The
//! `stage_*` functions are the file-mediated equivalents behind the CLI
//! subcommands: each reads the previous stage's artifact from the output
//! directory, so any stage can be re-run or swapped out. The two routes
//! produce byte-identical artifacts because all values round-trip
//! exactly through the delimited text files.
//!
//! Artifacts are written to a temporary sibling and renamed into place,
//! so an interrupted run never leaves a partial file. `report.json` is
//! always written last: its presence marks a completed run.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    classical_mds, global_mean_distances, label_offense, offense_share, profile_deviations,
    summarize_clusters, transition_matrix, ClusterSummary, MdsEmbedding, TransitionMatrix,
};
use crate::clustering::{kmeans, select_k, KMeansModel, KSelection};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{
    build_feature_matrix, centroid_series, stream_features_csv, FeatureMatrix,
};
use crate::ingest::{
    clip_to_play, parse_records, regularize, select_roster, stream_regularized_csv,
    AttackDirection, FrameSeries, MatchTimeline, Period, RawSession,
};
use crate::kalman::filter_frames;
use crate::plot;

/// The full analysis product of one run: everything the report files
/// contain, in one serializable tree.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub summaries: Vec<ClusterSummary>,
    /// One embedding per cluster, from its mean inter-player distances.
    pub embeddings: Vec<MdsEmbedding>,
    pub transitions: TransitionMatrix,
    pub global_mean_distances: Vec<f64>,
    /// The configuration that produced this report.
    pub config: PipelineConfig,
}

/// A fitted model plus, when a k-range was searched, the full selection
/// trace.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: KMeansModel,
    pub selection: Option<KSelection>,
}

/// Runs every stage in memory, writing all artifacts into `config.out`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PhaseReport> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;

    let session = load_session(config).map_err(|e| e.in_stage("ingest"))?;
    let frames = regularize(&session, config.grid_ms).map_err(|e| e.in_stage("ingest"))?;

    let (frames, frames_stage) = if config.kalman.enabled {
        let filtered = filter_frames(&frames, &config.kalman.filter_config())
            .map_err(|e| e.in_stage("filter"))?;
        (filtered, "filter")
    } else {
        (frames, "ingest")
    };
    write_atomic(&config.out.join("frames.csv"), |w| frames.write_csv(w))
        .map_err(|e| e.in_stage(frames_stage))?;

    let features = build_feature_matrix(&frames).map_err(|e| e.in_stage("features"))?;
    write_atomic(&config.out.join("features.csv"), |w| features.write_csv(w))
        .map_err(|e| e.in_stage("features"))?;

    let fit = fit_features(&features, config).map_err(|e| e.in_stage("fit"))?;
    write_atomic(&config.out.join("labels.csv"), |w| {
        write_labels(w, &features.timestamps, &fit.model.labels)
    })
    .map_err(|e| e.in_stage("fit"))?;
    write_atomic(&config.out.join("model.txt"), |w| write_model(w, &fit))
        .map_err(|e| e.in_stage("fit"))?;

    let report = build_report(config, &frames, &features, &fit.model.labels, fit.model.k)
        .map_err(|e| e.in_stage("report"))?;
    write_report_artifacts(config, &frames, &report).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}

/// Stage 1: parse, clip, restrict to the roster, regularize, and stream
/// `frames.csv` to disk without materializing the grid. Returns the
/// frame count.
pub fn stage_ingest(config: &PipelineConfig) -> Result<u64> {
    let run = || -> Result<u64> {
        config.validate_base()?;
        let session = load_session(config)?;
        fs::create_dir_all(&config.out)?;
        let mut frames = 0;
        write_atomic(&config.out.join("frames.csv"), |w| {
            frames = stream_regularized_csv(&session, config.grid_ms, None, w)?;
            Ok(())
        })?;
        Ok(frames)
    };
    run().map_err(|e| e.in_stage("ingest"))
}

/// Stage 2: Kalman-filter `frames.csv` in place. A disabled filter is a
/// no-op, leaving the carried-forward positions untouched.
pub fn stage_filter(config: &PipelineConfig) -> Result<()> {
    let run = || -> Result<()> {
        config.validate_base()?;
        if !config.kalman.enabled {
            return Ok(());
        }
        let path = config.out.join("frames.csv");
        let frames = FrameSeries::read_csv(open(&path)?)?;
        let filtered = filter_frames(&frames, &config.kalman.filter_config())?;
        write_atomic(&path, |w| filtered.write_csv(w))
    };
    run().map_err(|e| e.in_stage("filter"))
}

/// Stage 3: convert `frames.csv` into `features.csv`, one row at a time.
/// Returns the row count.
pub fn stage_features(config: &PipelineConfig) -> Result<u64> {
    let run = || -> Result<u64> {
        config.validate_base()?;
        let frames = open(&config.out.join("frames.csv"))?;
        let mut rows = 0;
        write_atomic(&config.out.join("features.csv"), |w| {
            rows = stream_features_csv(frames, w)?;
            Ok(())
        })?;
        Ok(rows)
    };
    run().map_err(|e| e.in_stage("features"))
}

/// Stage 4: cluster `features.csv`, writing `labels.csv` and
/// `model.txt`.
pub fn stage_fit(config: &PipelineConfig) -> Result<FitResult> {
    let run = || -> Result<FitResult> {
        config.validate()?;
        let features = FeatureMatrix::read_csv(open(&config.out.join("features.csv"))?)?;
        let fit = fit_features(&features, config)?;
        write_atomic(&config.out.join("labels.csv"), |w| {
            write_labels(w, &features.timestamps, &fit.model.labels)
        })?;
        write_atomic(&config.out.join("model.txt"), |w| write_model(w, &fit))?;
        Ok(fit)
    };
    run().map_err(|e| e.in_stage("fit"))
}

/// Stage 5: analyze the fitted clusters and emit every report artifact.
pub fn stage_report(config: &PipelineConfig) -> Result<PhaseReport> {
    let run = || -> Result<PhaseReport> {
        config.validate()?;
        let frames = FrameSeries::read_csv(open(&config.out.join("frames.csv"))?)?;
        let features = FeatureMatrix::read_csv(open(&config.out.join("features.csv"))?)?;
        let (timestamps, labels) = read_labels(open(&config.out.join("labels.csv"))?)?;
        if timestamps != features.timestamps {
            return Err(Error::Format {
                file: "labels",
                reason: "timestamps do not match features.csv".into(),
            });
        }
        let k = read_model_k(open(&config.out.join("model.txt"))?)?;
        let report = build_report(config, &frames, &features, &labels, k)?;
        write_report_artifacts(config, &frames, &report)?;
        Ok(report)
    };
    run().map_err(|e| e.in_stage("report"))
}

/// Generates the demo scenario, writing `session.csv`, `truth.csv`, and
/// a ready-to-run `config.toml` into the output directory. The emitted
/// config inherits everything from `config` except the input path, the
/// record format, and the timeline, which are pinned to the generated
/// session; when no clustering choice was made it searches k in [2, 12].
/// Returns the sample count.
pub fn stage_synth(config: &PipelineConfig, scenario_seed: u64) -> Result<u64> {
    let run = || -> Result<u64> {
        config.validate_base()?;
        let scenario = crate::synth::eight_formation_demo(scenario_seed);
        let (session, truth) = crate::synth::generate_session(&scenario)?;
        fs::create_dir_all(&config.out)?;

        let session_path = config.out.join("session.csv");
        write_atomic(&session_path, |w| crate::ingest::write_records(&session, w))?;
        write_atomic(&config.out.join("truth.csv"), |w| {
            crate::synth::write_truth_csv(&truth, &scenario, w)
        })?;

        let mut run_cfg = config.clone();
        run_cfg.input = Some(session_path);
        run_cfg.format = crate::ingest::records_format();
        run_cfg.timeline = Some(scenario.timeline());
        if run_cfg.clustering.k.is_none() && run_cfg.clustering.k_range.is_none() {
            run_cfg.clustering.k_range = Some([2, 12]);
        }
        write_atomic(&config.out.join("config.toml"), |w| {
            w.write_all(run_cfg.to_toml().as_bytes())?;
            Ok(())
        })?;
        Ok(session.samples.len() as u64)
    };
    run().map_err(|e| e.in_stage("synth"))
}

/// Parses the raw feed and applies the timeline clip and roster
/// restriction from the config.
pub fn load_session(config: &PipelineConfig) -> Result<RawSession> {
    let input = config.input_path()?;
    let session = parse_records(BufReader::new(File::open(input)?), &config.format)?;
    let session = match &config.timeline {
        Some(timeline) => clip_to_play(&session, timeline)?,
        None => session,
    };
    match config.roster_ids() {
        Some(roster) => select_roster(&session, &roster),
        None if session.roster.len() == 5 => Ok(session),
        None => Err(Error::RosterSize(session.roster.len())),
    }
}

/// Clusters the feature matrix with a fixed k or a searched range,
/// whichever the config picked.
pub fn fit_features(features: &FeatureMatrix, config: &PipelineConfig) -> Result<FitResult> {
    let kcfg = config.clustering.kmeans();
    match (config.clustering.k, config.clustering.k_range) {
        (Some(k), None) => {
            let model = kmeans(features.as_slice(), features.dim, k, &kcfg)?;
            Ok(FitResult {
                model,
                selection: None,
            })
        }
        (None, Some([lo, hi])) => {
            let selection = select_k(
                features.as_slice(),
                features.dim,
                lo,
                hi,
                &kcfg,
                &config.clustering.selection(),
            )?;
            Ok(FitResult {
                model: selection.model.clone(),
                selection: Some(selection),
            })
        }
        _ => Err(Error::Config(
            "set exactly one of clustering.k or clustering.k_range".into(),
        )),
    }
}

/// Computes every report component from the fitted labels.
pub fn build_report(
    config: &PipelineConfig,
    frames: &FrameSeries,
    features: &FeatureMatrix,
    labels: &[usize],
    k: usize,
) -> Result<PhaseReport> {
    let mut summaries = summarize_clusters(features, labels, k)?;
    let global = global_mean_distances(features)?;

    let timeline = effective_timeline(config, frames)?;
    let centroids = centroid_series(frames);
    let timestamps: Vec<i64> = (0..frames.len()).map(|i| frames.timestamp(i)).collect();
    let flags = label_offense(&timestamps, &centroids, &timeline, &config.court)?;
    let shares = offense_share(labels, &flags, k)?;
    for (summary, share) in summaries.iter_mut().zip(shares) {
        summary.offense_share = Some(share);
    }

    let embeddings = summaries
        .iter()
        .map(|s| {
            let n = s.mean_distance_matrix.len();
            let flat: Vec<f64> = s.mean_distance_matrix.iter().flatten().copied().collect();
            classical_mds(&flat, n)
        })
        .collect::<Result<Vec<_>>>()?;

    let transitions = transition_matrix(labels, k)?;
    Ok(PhaseReport {
        summaries,
        embeddings,
        transitions,
        global_mean_distances: global,
        config: config.clone(),
    })
}

/// The timeline used for offense labeling: the configured one, or a
/// single whole-span period attacking positive x.
fn effective_timeline(config: &PipelineConfig, frames: &FrameSeries) -> Result<MatchTimeline> {
    match &config.timeline {
        Some(timeline) => Ok(timeline.clone()),
        None => {
            let last = frames.timestamp(frames.len().saturating_sub(1));
            MatchTimeline::new(vec![Period {
                start_ms: frames.start_ms,
                end_ms: last + 1,
                attack: AttackDirection::PositiveX,
            }])
        }
    }
}

fn write_report_artifacts(
    config: &PipelineConfig,
    frames: &FrameSeries,
    report: &PhaseReport,
) -> Result<()> {
    let out = &config.out;
    let pair_labels = crate::features::pair_labels(&frames.players);
    write_atomic(&out.join("summaries.csv"), |w| {
        write_summaries(w, report, &pair_labels)
    })?;
    write_atomic(&out.join("transitions.csv"), |w| {
        write_transitions(w, &report.transitions)
    })?;
    for (summary, embedding) in report.summaries.iter().zip(&report.embeddings) {
        let name = format!("mds_{}.csv", summary.cluster_id);
        write_atomic(&out.join(name), |w| {
            write_mds(w, &frames.players, embedding)
        })?;
    }

    let plots = out.join("plots");
    fs::create_dir_all(&plots)?;
    for (summary, embedding) in report.summaries.iter().zip(&report.embeddings) {
        let c = summary.cluster_id;
        write_atomic(&plots.join(format!("mds_{c}.svg")), |w| {
            w.write_all(plot::mds_scatter(&frames.players, embedding, c).as_bytes())?;
            Ok(())
        })?;
        let deviations = profile_deviations(summary, &report.global_mean_distances)?;
        write_atomic(&plots.join(format!("profile_{c}.svg")), |w| {
            w.write_all(plot::profile_bars(&pair_labels, &deviations, c).as_bytes())?;
            Ok(())
        })?;
    }
    write_atomic(&plots.join("transitions.svg"), |w| {
        w.write_all(plot::transition_heatmap(&report.transitions).as_bytes())?;
        Ok(())
    })?;

    write_atomic(&out.join("report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, report)
            .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_labels<W: Write>(mut out: W, timestamps: &[i64], labels: &[usize]) -> Result<()> {
    writeln!(out, "t_ms,cluster")?;
    for (t, label) in timestamps.iter().zip(labels) {
        writeln!(out, "{t},{label}")?;
    }
    Ok(())
}

/// Reads a labels file written by [`write_labels`].
pub fn read_labels<R: Read>(source: R) -> Result<(Vec<i64>, Vec<usize>)> {
    let file = "labels";
    let mut lines = BufReader::new(source).lines();
    match lines.next() {
        Some(Ok(h)) if h == "t_ms,cluster" => {}
        Some(Ok(_)) => {
            return Err(Error::Format {
                file,
                reason: "expected header t_ms,cluster".into(),
            })
        }
        Some(Err(e)) => return Err(e.into()),
        None => {
            return Err(Error::Format {
                file,
                reason: "empty file".into(),
            })
        }
    }
    let mut timestamps = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (t, label) = line.split_once(',').ok_or_else(|| Error::Format {
            file,
            reason: format!("row {row}: expected two fields"),
        })?;
        timestamps.push(t.parse().map_err(|e| Error::Format {
            file,
            reason: format!("row {row}: bad t_ms: {e}"),
        })?);
        labels.push(label.parse().map_err(|e| Error::Format {
            file,
            reason: format!("row {row}: bad cluster: {e}"),
        })?);
    }
    Ok((timestamps, labels))
}

fn write_model<W: Write>(mut out: W, fit: &FitResult) -> Result<()> {
    let m = &fit.model;
    writeln!(out, "k {}", m.k)?;
    writeln!(out, "dim {}", m.dim)?;
    writeln!(out, "within_deviance {}", m.within_deviance)?;
    writeln!(out, "iterations {}", m.iterations)?;
    writeln!(out, "restart {}", m.restart)?;
    writeln!(out, "converged {}", m.converged)?;
    match &fit.selection {
        Some(sel) => {
            let lo = sel.candidates.first().map_or(m.k, |c| c.k);
            let hi = sel.candidates.last().map_or(m.k, |c| c.k);
            writeln!(out, "selection range {lo} {hi}")?;
            writeln!(out, "fallback {}", sel.fallback)?;
            for c in &sel.candidates {
                writeln!(
                    out,
                    "candidate {} within {} between {} total {} ratio {} gain {}",
                    c.k, c.within, c.between, c.total, c.ratio, c.gain
                )?;
            }
        }
        None => writeln!(out, "selection fixed")?,
    }
    for j in 0..m.k {
        write!(out, "centroid {j}")?;
        for v in m.centroid(j) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads back the cluster count from a model file's first line.
pub fn read_model_k<R: Read>(source: R) -> Result<usize> {
    let file = "model";
    let mut first = String::new();
    BufReader::new(source).read_line(&mut first)?;
    match first.trim_end().strip_prefix("k ") {
        Some(k) => k.parse().map_err(|e| Error::Format {
            file,
            reason: format!("bad k: {e}"),
        }),
        None => Err(Error::Format {
            file,
            reason: "first line must be `k <count>`".into(),
        }),
    }
}

fn write_summaries<W: Write>(mut out: W, report: &PhaseReport, pair_labels: &[String]) -> Result<()> {
    write!(out, "cluster,count,share,offense_share")?;
    for label in pair_labels {
        write!(out, ",{label}")?;
    }
    writeln!(out)?;
    for s in &report.summaries {
        write!(out, "{},{},{}", s.cluster_id, s.count, s.share)?;
        match s.offense_share {
            Some(v) => write!(out, ",{v}")?,
            None => write!(out, ",")?,
        }
        for v in &s.mean_distances {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn write_transitions<W: Write>(mut out: W, t: &TransitionMatrix) -> Result<()> {
    writeln!(out, "from,to,count,probability")?;
    for from in 0..t.k {
        for to in 0..t.k {
            if from == to {
                continue;
            }
            writeln!(
                out,
                "{from},{to},{},{}",
                t.count(from, to),
                t.probability(from, to)
            )?;
        }
    }
    Ok(())
}

fn write_mds<W: Write>(
    mut out: W,
    players: &[crate::ingest::PlayerId],
    embedding: &MdsEmbedding,
) -> Result<()> {
    writeln!(out, "player,x,y")?;
    for (p, point) in players.iter().zip(&embedding.coordinates) {
        writeln!(out, "{p},{},{}", point.x, point.y)?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Writes through a temporary sibling and renames into place, removing
/// the temporary on failure.
fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}
