//! Synthetic sessions with known ground truth, plus the brute-force
//! oracles used to validate clustering.
//!
//! A scenario is a handful of named formations (five anchor points
//! each), a schedule that walks through them, Gaussian positional
//! jitter, and an irregular sampling model with exponential inter-sample
//! gaps. Everything is driven by one seed, so generated sessions are
//! exactly reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::OffenseFlag;
use crate::error::{Error, Result};
use crate::ingest::{
    AttackDirection, CourtDims, MatchTimeline, Period, PlayerId, Point, PositionSample,
    RawSession, SessionMeta,
};

/// A named static shape: where each of the five players stands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    pub name: String,
    pub anchors: Vec<Point>,
}

/// One schedule entry: hold a formation for a duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub formation: usize,
    pub duration_ms: i64,
}

/// Full description of a synthetic session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub court: CourtDims,
    pub formations: Vec<Formation>,
    pub schedule: Vec<ScheduleEntry>,
    /// Standard deviation of the Gaussian noise added to each anchor
    /// coordinate, in meters.
    pub jitter_std: f64,
    /// Mean of the exponential inter-sample gap, per player, in ms.
    pub mean_interval_ms: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.formations.is_empty() {
            return Err(Error::Scenario("no formations".into()));
        }
        if !(self.court.length_m > 0.0) || !(self.court.width_m > 0.0) {
            return Err(Error::Scenario("court dimensions must be positive".into()));
        }
        for f in &self.formations {
            if f.anchors.len() != 5 {
                return Err(Error::Scenario(format!(
                    "formation '{}' has {} anchors, want 5",
                    f.name,
                    f.anchors.len()
                )));
            }
            for a in &f.anchors {
                if !(0.0..=self.court.length_m).contains(&a.x)
                    || !(0.0..=self.court.width_m).contains(&a.y)
                {
                    return Err(Error::Scenario(format!(
                        "formation '{}' anchor ({}, {}) is outside the court",
                        f.name, a.x, a.y
                    )));
                }
            }
        }
        if self.schedule.is_empty() {
            return Err(Error::Scenario("empty schedule".into()));
        }
        for (i, e) in self.schedule.iter().enumerate() {
            if e.formation >= self.formations.len() {
                return Err(Error::Scenario(format!(
                    "schedule entry {i} references formation {} of {}",
                    e.formation,
                    self.formations.len()
                )));
            }
            if e.duration_ms <= 0 {
                return Err(Error::Scenario(format!(
                    "schedule entry {i} has non-positive duration {}",
                    e.duration_ms
                )));
            }
        }
        if !(self.jitter_std >= 0.0) || !self.jitter_std.is_finite() {
            return Err(Error::Scenario(format!(
                "jitter_std must be >= 0, got {}",
                self.jitter_std
            )));
        }
        if !(self.mean_interval_ms >= 1.0) || !self.mean_interval_ms.is_finite() {
            return Err(Error::Scenario(format!(
                "mean_interval_ms must be >= 1, got {}",
                self.mean_interval_ms
            )));
        }
        Ok(())
    }

    pub fn total_duration_ms(&self) -> i64 {
        self.schedule.iter().map(|e| e.duration_ms).sum()
    }

    /// A single-period timeline spanning the schedule, attacking +x.
    pub fn timeline(&self) -> MatchTimeline {
        MatchTimeline {
            periods: vec![Period {
                start_ms: 0,
                end_ms: self.total_duration_ms(),
                attack: AttackDirection::PositiveX,
            }],
        }
    }
}

/// Which formation was truly active over each stretch of the session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthSegment {
    pub start_ms: i64,
    /// Exclusive.
    pub end_ms: i64,
    pub formation: usize,
}

/// The generator's answer key: true formation per instant plus each
/// formation's anchor centroid (for true offense flags).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub segments: Vec<TruthSegment>,
    /// Anchor centroid per formation id.
    pub formation_centroids: Vec<Point>,
}

impl GroundTruth {
    pub fn formation_at(&self, t_ms: i64) -> Option<usize> {
        let idx = self.segments.partition_point(|s| s.end_ms <= t_ms);
        self.segments
            .get(idx)
            .filter(|s| s.start_ms <= t_ms && t_ms < s.end_ms)
            .map(|s| s.formation)
    }

    /// True formation ids aligned to arbitrary grid instants.
    pub fn labels_for(&self, timestamps: &[i64]) -> Result<Vec<usize>> {
        timestamps
            .iter()
            .map(|t| {
                self.formation_at(*t)
                    .ok_or(Error::InstantOutsideTimeline(*t))
            })
            .collect()
    }

    /// True offense flags from each active formation's anchor centroid.
    pub fn offense_for(
        &self,
        timestamps: &[i64],
        timeline: &MatchTimeline,
        court: &CourtDims,
    ) -> Result<Vec<OffenseFlag>> {
        let labels = self.labels_for(timestamps)?;
        let centroids: Vec<Point> = labels
            .iter()
            .map(|f| self.formation_centroids[*f])
            .collect();
        crate::analysis::label_offense(timestamps, &centroids, timeline, court)
    }
}

/// Generates an irregular raw sample stream for a scenario.
///
/// Each player samples independently: timestamps start at 0 and advance
/// by exponential gaps with the configured mean (rounded to at least
/// 1 ms), and every sample sits at the active formation's anchor plus
/// Gaussian jitter. The same scenario always produces the same session.
pub fn generate_session(scenario: &Scenario) -> Result<(RawSession, GroundTruth)> {
    scenario.validate()?;
    let mut segments = Vec::with_capacity(scenario.schedule.len());
    let mut t = 0i64;
    for e in &scenario.schedule {
        segments.push(TruthSegment {
            start_ms: t,
            end_ms: t + e.duration_ms,
            formation: e.formation,
        });
        t += e.duration_ms;
    }
    let formation_centroids: Vec<Point> = scenario
        .formations
        .iter()
        .map(|f| {
            let mx = f.anchors.iter().map(|a| a.x).sum::<f64>() / 5.0;
            let my = f.anchors.iter().map(|a| a.y).sum::<f64>() / 5.0;
            Point::new(mx, my)
        })
        .collect();
    let truth = GroundTruth {
        segments,
        formation_centroids,
    };

    let gap = Exp::new(1.0 / scenario.mean_interval_ms)
        .map_err(|e| Error::Scenario(format!("bad sampling model: {e}")))?;
    let noise = Normal::new(0.0, scenario.jitter_std)
        .map_err(|e| Error::Scenario(format!("bad jitter model: {e}")))?;

    // Every player reports at each segment start (formations switch as
    // a unit), then at exponential intervals inside the segment. That
    // keeps the carried-forward grid aligned with the schedule exactly,
    // so ground truth never straddles a boundary.
    let mut samples = Vec::new();
    for p in 0..5usize {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed.wrapping_add(p as u64 + 1));
        let player = PlayerId(p as u32 + 1);
        for seg in &truth.segments {
            let anchor = scenario.formations[seg.formation].anchors[p];
            let mut t = seg.start_ms;
            while t < seg.end_ms {
                let x = anchor.x + noise.sample(&mut rng);
                let y = anchor.y + noise.sample(&mut rng);
                samples.push(PositionSample {
                    timestamp_ms: t,
                    player,
                    x,
                    y,
                    z: 0.0,
                });
                let step = gap.sample(&mut rng).round().max(1.0);
                t += step as i64;
            }
        }
    }
    let session = RawSession::from_samples(samples, SessionMeta::default());
    Ok((session, truth))
}

/// Writes the answer key as `start_ms,end_ms,formation,name` rows, one
/// per schedule segment (`end_ms` exclusive).
pub fn write_truth_csv<W: std::io::Write>(
    truth: &GroundTruth,
    scenario: &Scenario,
    mut out: W,
) -> Result<()> {
    writeln!(out, "start_ms,end_ms,formation,name")?;
    for seg in &truth.segments {
        writeln!(
            out,
            "{},{},{},{}",
            seg.start_ms, seg.end_ms, seg.formation, scenario.formations[seg.formation].name
        )?;
    }
    Ok(())
}

/// The demo scenario: eight distinct formations revisited in shuffled
/// rounds over a ten-minute session. Anchor positions are calibrated so
/// the formations' pairwise-distance signatures are nearly equidistant
/// from each other (all separations within roughly a 1.3x band), which
/// keeps every split informative during k selection.
pub fn eight_formation_demo(seed: u64) -> Scenario {
    let f = |name: &str, pts: [(f64, f64); 5]| Formation {
        name: name.into(),
        anchors: pts.iter().map(|(x, y)| Point::new(*x, *y)).collect(),
    };
    let formations = vec![
        f(
            "press-line",
            [(3.7, 7.2), (4.9, 7.1), (14.6, 7.1), (17.1, 7.1), (18.5, 7.1)],
        ),
        f(
            "box-center",
            [(11.9, 0.5), (12.9, 11.8), (14.5, 0.7), (21.2, 14.5), (13.0, 4.0)],
        ),
        f(
            "attack-wedge",
            [(12.5, 4.0), (23.5, 2.4), (23.5, 14.5), (22.8, 3.4), (26.1, 6.5)],
        ),
        f(
            "three-tight",
            [(20.0, 4.4), (22.6, 4.9), (21.4, 5.4), (9.9, 9.9), (8.0, 3.0)],
        ),
        f(
            "zigzag",
            [(5.7, 0.5), (9.8, 12.7), (13.0, 5.4), (15.5, 13.7), (22.2, 0.7)],
        ),
        f(
            "compact-blob",
            [(5.8, 5.4), (7.7, 4.5), (8.4, 10.6), (11.8, 5.6), (6.2, 9.3)],
        ),
        f(
            "corner-posts",
            [(4.3, 4.2), (6.6, 12.8), (21.0, 3.5), (21.8, 12.3), (12.9, 6.5)],
        ),
        f(
            "attack-overload",
            [(17.5, 6.0), (5.5, 4.0), (18.5, 11.0), (17.5, 12.3), (10.5, 4.0)],
        ),
    ];

    // Shuffled rounds: every formation appears once per round, no
    // immediate repeats across round boundaries, durations 5-10 s.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schedule: Vec<ScheduleEntry> = Vec::new();
    let total_target = 600_000i64;
    let mut elapsed = 0i64;
    let mut last: Option<usize> = None;
    while elapsed < total_target {
        let mut order: Vec<usize> = (0..formations.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        if last == Some(order[0]) {
            order.swap(0, formations.len() - 1);
        }
        for fid in order {
            if elapsed >= total_target {
                break;
            }
            let duration = rng.random_range(5_000..=10_000).min(total_target - elapsed);
            schedule.push(ScheduleEntry {
                formation: fid,
                duration_ms: duration,
            });
            elapsed += duration;
            last = Some(fid);
        }
    }

    Scenario {
        court: CourtDims::default(),
        formations,
        schedule,
        jitter_std: 0.3,
        mean_interval_ms: 50.0,
        seed,
    }
}

/// Exhaustively finds the labeling with minimal within-cluster deviance
/// over all partitions of `n` points into at most `k` non-empty groups.
///
/// Partitions are enumerated in canonical first-occurrence form (each
/// new label is the smallest unused one), so every set partition is
/// visited exactly once. The count blows up like Stirling numbers, so
/// inputs are capped at 12 points.
pub fn enumerate_optimal_partition(
    data: &[f64],
    dim: usize,
    k: usize,
) -> Result<(Vec<usize>, f64)> {
    if k == 0 {
        return Err(Error::BadK(0));
    }
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: data.len(),
        });
    }
    let n = data.len() / dim;
    if n == 0 {
        return Err(Error::TooFewRows { rows: 0, k });
    }
    if n > 12 {
        return Err(Error::TooManyPoints(n));
    }

    let mut labels = vec![0usize; n];
    let mut best_labels = vec![0usize; n];
    let mut best_wd = f64::INFINITY;
    // Depth-first walk over canonical labelings: position i may use any
    // label up to min(max-so-far + 1, k - 1).
    fn walk(
        i: usize,
        max_used: usize,
        labels: &mut Vec<usize>,
        data: &[f64],
        dim: usize,
        k: usize,
        best_wd: &mut f64,
        best_labels: &mut Vec<usize>,
    ) {
        let n = labels.len();
        if i == n {
            let wd = within_deviance(data, dim, labels, max_used + 1);
            if wd < *best_wd {
                *best_wd = wd;
                best_labels.copy_from_slice(labels);
            }
            return;
        }
        let cap = (max_used + 1).min(k - 1);
        for label in 0..=cap {
            labels[i] = label;
            walk(
                i + 1,
                max_used.max(label),
                labels,
                data,
                dim,
                k,
                best_wd,
                best_labels,
            );
        }
    }
    walk(
        1.min(n),
        0,
        &mut labels,
        data,
        dim,
        k,
        &mut best_wd,
        &mut best_labels,
    );
    Ok((best_labels, best_wd))
}

/// Within-cluster deviance with mean centroids (no validation; the
/// enumeration guarantees well-formed labels).
fn within_deviance(data: &[f64], dim: usize, labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for i in 0..n {
        let j = labels[i];
        counts[j] += 1;
        for d in 0..dim {
            sums[j * dim + d] += data[i * dim + d];
        }
    }
    let mut wd = 0.0;
    for i in 0..n {
        let j = labels[i];
        for d in 0..dim {
            let mean = sums[j * dim + d] / counts[j] as f64;
            let diff = data[i * dim + d] - mean;
            wd += diff * diff;
        }
    }
    wd
}

/// Adjusted Rand index between two labelings of the same instants.
///
/// Chance-corrected pair-counting agreement: 1 for identical partitions
/// (up to renaming), around 0 for independent ones, negative for worse
/// than chance.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (x, y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[*x] += 1;
        cols[*y] += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let sum_cells: f64 = table.iter().map(|m| c2(*m)).sum();
    let sum_rows: f64 = rows.iter().map(|m| c2(*m)).sum();
    let sum_cols: f64 = cols.iter().map(|m| c2(*m)).sum();
    let pairs = c2(n as u64);
    let expected = sum_rows * sum_cols / pairs;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() == 0.0 {
        // Both partitions are trivial in the same way; call it perfect.
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{deviances_about_means, kmeans, KMeansConfig};
    use crate::features::build_feature_matrix;
    use crate::ingest::{regularize, session_stats};

    fn tiny_scenario(jitter: f64, seed: u64) -> Scenario {
        Scenario {
            court: CourtDims::default(),
            formations: vec![
                Formation {
                    name: "left".into(),
                    anchors: vec![
                        Point::new(2.0, 2.0),
                        Point::new(2.0, 13.0),
                        Point::new(7.0, 2.0),
                        Point::new(7.0, 13.0),
                        Point::new(4.5, 7.5),
                    ],
                },
                Formation {
                    name: "tight".into(),
                    anchors: vec![
                        Point::new(20.0, 6.0),
                        Point::new(21.0, 7.0),
                        Point::new(20.5, 8.0),
                        Point::new(22.0, 6.5),
                        Point::new(22.0, 8.5),
                    ],
                },
            ],
            schedule: vec![
                ScheduleEntry {
                    formation: 0,
                    duration_ms: 1000,
                },
                ScheduleEntry {
                    formation: 1,
                    duration_ms: 1000,
                },
            ],
            jitter_std: jitter,
            mean_interval_ms: 100.0,
            seed,
        }
    }

    #[test]
    fn noise_free_samples_sit_on_anchors() {
        let scenario = tiny_scenario(0.0, 1);
        let (session, truth) = generate_session(&scenario).unwrap();
        for s in &session.samples {
            let f = truth.formation_at(s.timestamp_ms).unwrap();
            let anchor = scenario.formations[f].anchors[(s.player.0 - 1) as usize];
            assert_eq!((s.x, s.y), (anchor.x, anchor.y));
        }
    }

    #[test]
    fn schedule_arithmetic_and_sample_counts() {
        let scenario = tiny_scenario(0.1, 2);
        let (session, truth) = generate_session(&scenario).unwrap();
        assert_eq!(truth.formation_at(999), Some(0));
        assert_eq!(truth.formation_at(1000), Some(1));
        assert_eq!(truth.formation_at(1999), Some(1));
        assert_eq!(truth.formation_at(2000), None);
        // ~20 samples per player at 100 ms mean over 2000 ms.
        for p in 1..=5u32 {
            let count = session
                .samples
                .iter()
                .filter(|s| s.player == PlayerId(p))
                .count();
            assert!((8..=45).contains(&count), "player {p}: {count} samples");
        }
    }

    #[test]
    fn same_seed_reproduces_the_session() {
        let scenario = tiny_scenario(0.25, 3);
        let (a, ta) = generate_session(&scenario).unwrap();
        let (b, tb) = generate_session(&scenario).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(ta, tb);
        let (c, _) = generate_session(&tiny_scenario(0.25, 4)).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn sampling_rate_tracks_the_mean_interval() {
        let mut scenario = tiny_scenario(0.1, 5);
        scenario.mean_interval_ms = 162.0;
        scenario.schedule = vec![
            ScheduleEntry {
                formation: 0,
                duration_ms: 300_000,
            },
            ScheduleEntry {
                formation: 1,
                duration_ms: 300_000,
            },
        ];
        let (session, _) = generate_session(&scenario).unwrap();
        let stats = session_stats(&session).unwrap();
        // Five players at ~6.17 samples/s each.
        assert!(
            (28.0..34.0).contains(&stats.overall_rate_hz),
            "rate {}",
            stats.overall_rate_hz
        );
    }

    #[test]
    fn scenario_validation_catches_bad_fields() {
        let mut s = tiny_scenario(0.1, 1);
        s.schedule[0].duration_ms = 0;
        assert!(matches!(generate_session(&s), Err(Error::Scenario(_))));

        let mut s = tiny_scenario(0.1, 1);
        s.formations[0].anchors[0].x = -1.0;
        assert!(matches!(generate_session(&s), Err(Error::Scenario(_))));

        let mut s = tiny_scenario(-0.5, 1);
        s.jitter_std = -0.5;
        assert!(matches!(generate_session(&s), Err(Error::Scenario(_))));

        let mut s = tiny_scenario(0.1, 1);
        s.schedule[1].formation = 9;
        assert!(matches!(generate_session(&s), Err(Error::Scenario(_))));
    }

    #[test]
    fn noise_free_recovery_is_perfect() {
        let scenario = tiny_scenario(0.0, 6);
        let (session, truth) = generate_session(&scenario).unwrap();
        let frames = regularize(&session, 20).unwrap();
        let features = build_feature_matrix(&frames).unwrap();
        let model = kmeans(features.as_slice(), 10, 2, &KMeansConfig::default()).unwrap();
        let timestamps: Vec<i64> = (0..frames.len()).map(|i| frames.timestamp(i)).collect();
        let true_labels = truth.labels_for(&timestamps).unwrap();
        let ari = adjusted_rand_index(&model.labels, &true_labels).unwrap();
        assert_eq!(ari, 1.0);
    }

    #[test]
    fn truth_offense_follows_anchor_centroids() {
        let scenario = tiny_scenario(0.0, 7);
        let (_, truth) = generate_session(&scenario).unwrap();
        let timeline = scenario.timeline();
        let flags = truth
            .offense_for(&[0, 500, 1000, 1500], &timeline, &scenario.court)
            .unwrap();
        // Formation "left" centroids at x = 4.5 (own half), "tight" at
        // x = 21.1 (attacking half, +x attack).
        assert_eq!(flags[0], OffenseFlag::Defensive);
        assert_eq!(flags[1], OffenseFlag::Defensive);
        assert_eq!(flags[2], OffenseFlag::Offensive);
        assert_eq!(flags[3], OffenseFlag::Offensive);
    }

    #[test]
    fn demo_scenario_is_valid_and_balanced() {
        let scenario = eight_formation_demo(7);
        scenario.validate().unwrap();
        assert_eq!(scenario.formations.len(), 8);
        assert_eq!(scenario.total_duration_ms(), 600_000);
        // No immediate repeats, every formation gets a fair share.
        for w in scenario.schedule.windows(2) {
            assert_ne!(w[0].formation, w[1].formation);
        }
        let mut occupancy = [0i64; 8];
        for e in &scenario.schedule {
            occupancy[e.formation] += e.duration_ms;
        }
        for (f, ms) in occupancy.iter().enumerate() {
            assert!(
                (40_000..=120_000).contains(ms),
                "formation {f} holds {ms} ms"
            );
        }
    }

    #[test]
    fn enumeration_finds_separated_pair() {
        let (labels, wd) = enumerate_optimal_partition(&[0.0, 10.0], 1, 2).unwrap();
        assert_eq!(labels, vec![0, 1]);
        assert_eq!(wd, 0.0);
    }

    #[test]
    fn enumeration_on_identical_points_is_free() {
        let data = vec![3.0; 8];
        let (_, wd) = enumerate_optimal_partition(&data, 1, 3).unwrap();
        assert_eq!(wd, 0.0);
    }

    #[test]
    fn enumeration_bounds_input_size() {
        let data = vec![0.0; 13];
        assert!(matches!(
            enumerate_optimal_partition(&data, 1, 2),
            Err(Error::TooManyPoints(13))
        ));
    }

    /// Independent check: minimum WD over every raw k-labeling (not
    /// just canonical ones), using the clustering module's deviances.
    /// Raw labelings may skip cluster indices, so each is compacted to
    /// its occupied groups before scoring.
    fn odometer_min_wd(data: &[f64], dim: usize, k: usize) -> f64 {
        let n = data.len() / dim;
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            let mut map = vec![usize::MAX; k];
            let mut used = 0;
            let compact: Vec<usize> = labels
                .iter()
                .map(|&l| {
                    if map[l] == usize::MAX {
                        map[l] = used;
                        used += 1;
                    }
                    map[l]
                })
                .collect();
            let wd = deviances_about_means(data, dim, &compact, used)
                .unwrap()
                .within;
            if wd < best {
                best = wd;
            }
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                labels[i] += 1;
                if labels[i] < k {
                    break;
                }
                labels[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn enumeration_matches_independent_search_and_bounds_lloyd() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..10 {
            let n = rng.random_range(4..9);
            let k = rng.random_range(2..4usize).min(n);
            let data: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() * 10.0).collect();
            let (labels, wd) = enumerate_optimal_partition(&data, 2, k).unwrap();
            let independent = odometer_min_wd(&data, 2, k);
            assert!(
                (wd - independent).abs() < 1e-9,
                "trial {trial}: {wd} vs {independent}"
            );
            // The canonical labeling must itself score WD*. It may use
            // fewer than k groups, but never skips an index.
            let used = labels.iter().max().unwrap() + 1;
            let rescored = deviances_about_means(&data, 2, &labels, used)
                .unwrap()
                .within;
            assert!((rescored - wd).abs() < 1e-12);

            let model = kmeans(
                &data,
                2,
                k,
                &KMeansConfig {
                    restarts: 50,
                    ..KMeansConfig::default()
                },
            )
            .unwrap();
            assert!(
                model.within_deviance >= wd - 1e-9,
                "trial {trial}: Lloyd beat the exhaustive optimum"
            );
        }
    }

    #[test]
    fn ari_perfect_and_relabeled() {
        let a = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        let renamed = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(adjusted_rand_index(&a, &renamed).unwrap(), 1.0);
    }

    #[test]
    fn ari_matches_hand_computed_contingency() {
        // 12 instants, 3 x 3 contingency table worked out by hand:
        // sum of C(n_ij,2) = 16, row/col pair sums = 18 each,
        // expected = 18*18/66, ARI = (16 - 54/11) / (18 - 54/11) = 1/12.
        let a = vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
        let b = vec![0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 0, 0];
        let ari = adjusted_rand_index(&a, &b).unwrap();
        assert!((ari - 1.0 / 12.0).abs() < 1e-12, "{ari}");
    }

    #[test]
    fn ari_near_zero_for_independent_labelings() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<usize> = (0..5000).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..5000).map(|_| rng.random_range(0..4)).collect();
        let ari = adjusted_rand_index(&a, &b).unwrap();
        assert!(ari.abs() < 0.05, "{ari}");
    }

    #[test]
    fn ari_validates_input() {
        assert!(matches!(
            adjusted_rand_index(&[0, 1], &[0]),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(matches!(
            adjusted_rand_index(&[0], &[0]),
            Err(Error::TooFewSamples { got: 1, need: 2 })
        ));
    }

    #[test]
    fn demo_scenario_is_recovered_at_k_eight() {
        use crate::clustering::{select_k, KMeansConfig, SelectionConfig};
        use crate::features::build_feature_matrix;
        use crate::ingest::regularize;

        let scenario = eight_formation_demo(7);
        let (session, truth) = generate_session(&scenario).unwrap();
        let frames = regularize(&session, 20).unwrap();
        let features = build_feature_matrix(&frames).unwrap();
        let sel = select_k(
            features.as_slice(),
            10,
            2,
            12,
            &KMeansConfig::default(),
            &SelectionConfig::default(),
        )
        .unwrap();
        assert_eq!(sel.chosen_k, 8);
        assert!(!sel.fallback);

        let timestamps: Vec<i64> = (0..frames.len()).map(|i| frames.timestamp(i)).collect();
        let truth_labels = truth.labels_for(&timestamps).unwrap();
        let ari = adjusted_rand_index(&sel.model.labels, &truth_labels).unwrap();
        assert!(ari >= 0.9, "ARI {ari} below 0.9");
    }
}
