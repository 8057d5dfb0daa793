//! Raw sensor ingestion: parsing, clipping to in-play periods, roster
//! selection, and regularization onto a uniform millisecond grid.
//!
//! The sensor feed is an irregular stream of per-player position readings.
//! Everything downstream works on a complete grid where every active player
//! has a coordinate at every instant, so the gap between the two worlds is
//! bridged here with last-observation-carried-forward (LOCF) imputation.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier a sensor assigns to one player.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PlayerId(pub u32);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar position in meters (court coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Court extent in meters. Regulation courts are 28 x 15.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtDims {
    pub length_m: f64,
    pub width_m: f64,
}

impl Default for CourtDims {
    fn default() -> Self {
        CourtDims {
            length_m: 28.0,
            width_m: 15.0,
        }
    }
}

impl CourtDims {
    pub fn half_line_x(&self) -> f64 {
        self.length_m / 2.0
    }
}

/// One raw sensor reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSample {
    /// Milliseconds since the session epoch.
    pub timestamp_ms: i64,
    pub player: PlayerId,
    /// Meters along the court length.
    pub x: f64,
    /// Meters along the court width.
    pub y: f64,
    /// Meters vertical; parsed but unused by the analysis.
    pub z: f64,
}

/// Which half of the court the tracked team attacks during a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackDirection {
    PositiveX,
    NegativeX,
}

impl AttackDirection {
    pub fn flipped(self) -> Self {
        match self {
            AttackDirection::PositiveX => AttackDirection::NegativeX,
            AttackDirection::NegativeX => AttackDirection::PositiveX,
        }
    }
}

/// One in-play period: `[start_ms, end_ms)` plus the attacking half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub start_ms: i64,
    pub end_ms: i64,
    pub attack: AttackDirection,
}

/// The in-play periods of a match, in chronological order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchTimeline {
    pub periods: Vec<Period>,
}

impl MatchTimeline {
    pub fn new(periods: Vec<Period>) -> Result<Self> {
        let timeline = MatchTimeline { periods };
        timeline.validate()?;
        Ok(timeline)
    }

    /// Periods must be sorted by start, non-overlapping, each with start < end.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.periods.iter().enumerate() {
            if p.start_ms >= p.end_ms {
                return Err(Error::BadTimeline);
            }
            if i > 0 && p.start_ms < self.periods[i - 1].end_ms {
                return Err(Error::BadTimeline);
            }
        }
        Ok(())
    }

    pub fn contains(&self, t_ms: i64) -> bool {
        self.period_at(t_ms).is_some()
    }

    pub fn period_at(&self, t_ms: i64) -> Option<&Period> {
        self.periods
            .iter()
            .find(|p| p.start_ms <= t_ms && t_ms < p.end_ms)
    }

    /// Same periods with every attack direction reversed.
    pub fn with_flipped_attack(&self) -> Self {
        MatchTimeline {
            periods: self
                .periods
                .iter()
                .map(|p| Period {
                    attack: p.attack.flipped(),
                    ..*p
                })
                .collect(),
        }
    }
}

/// Session-level metadata carried alongside the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub court: CourtDims,
    /// Sensor grid resolution in meters (1.0 for a 1 m^2 pixel grid).
    pub grid_resolution_m: f64,
}

impl Default for SessionMeta {
    fn default() -> Self {
        SessionMeta {
            court: CourtDims::default(),
            grid_resolution_m: 1.0,
        }
    }
}

/// Counters accumulated while parsing a raw feed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostics {
    /// Lines that produced a sample.
    pub parsed: u64,
    /// Lines skipped as malformed.
    pub rejected: u64,
    /// Samples read with a timestamp earlier than their predecessor.
    pub out_of_order: u64,
}

/// A time-ordered raw tracking session.
#[derive(Debug, Clone, Default)]
pub struct RawSession {
    /// Sorted by timestamp; stable within equal timestamps (read order).
    pub samples: Vec<PositionSample>,
    /// Distinct players present, ascending.
    pub roster: Vec<PlayerId>,
    pub meta: SessionMeta,
    pub diagnostics: ParseDiagnostics,
}

impl RawSession {
    /// Builds a session from samples, sorting them (stably) by timestamp
    /// and deriving the roster.
    pub fn from_samples(samples: Vec<PositionSample>, meta: SessionMeta) -> Self {
        let mut session = RawSession {
            samples,
            roster: Vec::new(),
            meta,
            diagnostics: ParseDiagnostics::default(),
        };
        session.sort_and_derive_roster();
        session
    }

    fn sort_and_derive_roster(&mut self) {
        if !self
            .samples
            .windows(2)
            .all(|w| w[0].timestamp_ms <= w[1].timestamp_ms)
        {
            self.samples.sort_by_key(|s| s.timestamp_ms);
        }
        let ids: BTreeSet<PlayerId> = self.samples.iter().map(|s| s.player).collect();
        self.roster = ids.into_iter().collect();
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.samples.first().map(|s| s.timestamp_ms)
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.samples.last().map(|s| s.timestamp_ms)
    }
}

/// Which column holds which field, by position or by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnMap {
    /// Zero-based column positions for (timestamp, player, x, y, z).
    Indices {
        timestamp: usize,
        player: usize,
        x: usize,
        y: usize,
        z: usize,
    },
    /// Header names; requires `has_header`.
    Names {
        timestamp: String,
        player: String,
        x: String,
        y: String,
        z: String,
    },
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap::Indices {
            timestamp: 0,
            player: 1,
            x: 2,
            y: 3,
            z: 4,
        }
    }
}

/// Describes the raw delimited-text feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordFormat {
    /// Field delimiter as a single byte; comma by default.
    pub delimiter: char,
    pub has_header: bool,
    pub columns: ColumnMap,
    /// Multiplier applied to x, y, z (e.g. pixel pitch in meters).
    pub scale: f64,
    /// Hard failure once more than this many lines are rejected.
    pub max_rejects: u64,
}

impl Default for RecordFormat {
    fn default() -> Self {
        RecordFormat {
            delimiter: ',',
            has_header: false,
            columns: ColumnMap::default(),
            scale: 1.0,
            max_rejects: 100,
        }
    }
}

/// Parses a delimited sample stream into a [`RawSession`].
///
/// Malformed lines are counted and skipped until `max_rejects` is exceeded,
/// which aborts the parse. Out-of-order timestamps are tolerated: the result
/// is stably sorted and `diagnostics.out_of_order` records how many samples
/// arrived behind their predecessor.
pub fn parse_records<R: Read>(source: R, format: &RecordFormat) -> Result<RawSession> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter as u8)
        .has_headers(format.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let columns = resolve_columns(&mut reader, format)?;
    let mut diag = ParseDiagnostics::default();
    let mut samples: Vec<PositionSample> = Vec::new();
    let mut line = if format.has_header { 1u64 } else { 0u64 };
    let mut prev_t = i64::MIN;

    for record in reader.records() {
        line += 1;
        let parsed = record
            .map_err(|e| e.to_string())
            .and_then(|r| parse_sample(&r, &columns, format.scale));
        match parsed {
            Ok(sample) => {
                if sample.timestamp_ms < prev_t {
                    diag.out_of_order += 1;
                }
                prev_t = sample.timestamp_ms;
                samples.push(sample);
                diag.parsed += 1;
            }
            Err(reason) => {
                diag.rejected += 1;
                if diag.rejected > format.max_rejects {
                    return Err(Error::RejectThreshold {
                        rejected: diag.rejected,
                        threshold: format.max_rejects,
                        line,
                        reason,
                    });
                }
            }
        }
    }

    let mut session = RawSession::from_samples(samples, SessionMeta::default());
    session.diagnostics = diag;
    Ok(session)
}

/// Writes a session as `t_ms,player,x,y,z` lines with a header, the
/// inverse of [`parse_records`] under the matching format descriptor.
pub fn write_records<W: Write>(session: &RawSession, mut out: W) -> Result<()> {
    writeln!(out, "t_ms,player,x,y,z")?;
    for s in &session.samples {
        writeln!(out, "{},{},{},{},{}", s.timestamp_ms, s.player, s.x, s.y, s.z)?;
    }
    Ok(())
}

/// The format descriptor matching [`write_records`] output.
pub fn records_format() -> RecordFormat {
    RecordFormat {
        has_header: true,
        columns: ColumnMap::Names {
            timestamp: "t_ms".into(),
            player: "player".into(),
            x: "x".into(),
            y: "y".into(),
            z: "z".into(),
        },
        ..RecordFormat::default()
    }
}

/// Resolved zero-based positions of (timestamp, player, x, y, z).
struct ColumnIdx {
    timestamp: usize,
    player: usize,
    x: usize,
    y: usize,
    z: usize,
}

fn resolve_columns<R: Read>(
    reader: &mut csv::Reader<R>,
    format: &RecordFormat,
) -> Result<ColumnIdx> {
    match &format.columns {
        ColumnMap::Indices {
            timestamp,
            player,
            x,
            y,
            z,
        } => Ok(ColumnIdx {
            timestamp: *timestamp,
            player: *player,
            x: *x,
            y: *y,
            z: *z,
        }),
        ColumnMap::Names {
            timestamp,
            player,
            x,
            y,
            z,
        } => {
            if !format.has_header {
                return Err(Error::Config(
                    "columns are named but the format declares no header".into(),
                ));
            }
            let headers = reader
                .headers()
                .map_err(|e| Error::Config(format!("cannot read header: {e}")))?
                .clone();
            let find = |name: &str| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Config(format!("missing column '{name}' in header")))
            };
            Ok(ColumnIdx {
                timestamp: find(timestamp)?,
                player: find(player)?,
                x: find(x)?,
                y: find(y)?,
                z: find(z)?,
            })
        }
    }
}

fn parse_sample(
    record: &csv::StringRecord,
    columns: &ColumnIdx,
    scale: f64,
) -> std::result::Result<PositionSample, String> {
    let field = |i: usize| {
        record
            .get(i)
            .ok_or_else(|| format!("missing column {i}"))
    };
    let timestamp_ms: i64 = field(columns.timestamp)?
        .parse()
        .map_err(|e| format!("bad timestamp: {e}"))?;
    if timestamp_ms < 0 {
        return Err(format!("negative timestamp {timestamp_ms}"));
    }
    let player: u32 = field(columns.player)?
        .parse()
        .map_err(|e| format!("bad player id: {e}"))?;
    let coord = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v: f64 = field(i)?
            .parse()
            .map_err(|e| format!("bad {name}: {e}"))?;
        let v = v * scale;
        if !v.is_finite() {
            return Err(format!("non-finite {name}"));
        }
        Ok(v)
    };
    Ok(PositionSample {
        timestamp_ms,
        player: PlayerId(player),
        x: coord(columns.x, "x")?,
        y: coord(columns.y, "y")?,
        z: coord(columns.z, "z")?,
    })
}

/// Keeps exactly the samples whose timestamp lies inside some timeline
/// period. Errors if nothing survives (timeline/session mismatch).
pub fn clip_to_play(session: &RawSession, timeline: &MatchTimeline) -> Result<RawSession> {
    timeline.validate()?;
    if timeline.periods.is_empty() {
        return Err(Error::BadTimeline);
    }
    let samples: Vec<PositionSample> = session
        .samples
        .iter()
        .filter(|s| timeline.contains(s.timestamp_ms))
        .copied()
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyClip);
    }
    let mut clipped = RawSession::from_samples(samples, session.meta);
    clipped.diagnostics = session.diagnostics;
    Ok(clipped)
}

/// Restricts a session to an active five-player roster.
pub fn select_roster(session: &RawSession, active: &[PlayerId]) -> Result<RawSession> {
    let active: BTreeSet<PlayerId> = active.iter().copied().collect();
    if active.len() != 5 {
        return Err(Error::RosterSize(active.len()));
    }
    for id in &active {
        if !session.roster.contains(id) {
            return Err(Error::UnknownPlayer(*id));
        }
    }
    let samples: Vec<PositionSample> = session
        .samples
        .iter()
        .filter(|s| active.contains(&s.player))
        .copied()
        .collect();
    let mut selected = RawSession::from_samples(samples, session.meta);
    selected.diagnostics = session.diagnostics;
    Ok(selected)
}

/// A complete, regular grid of frames for the active roster.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    /// Milliseconds between grid instants.
    pub grid_step: i64,
    /// Timestamp of frame 0.
    pub start_ms: i64,
    /// Active players in ascending id order; fixes the column layout.
    pub players: Vec<PlayerId>,
    /// Row-major: frame i occupies `[i * players.len() .. (i+1) * players.len()]`.
    coords: Vec<Point>,
    /// Parallel to `coords`: true where the value was carried forward
    /// rather than observed at that exact instant.
    imputed: Vec<bool>,
    /// Set once the coordinates have been Kalman filtered.
    pub filtered: bool,
}

impl FrameSeries {
    pub fn len(&self) -> usize {
        if self.players.is_empty() {
            0
        } else {
            self.coords.len() / self.players.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn timestamp(&self, frame: usize) -> i64 {
        self.start_ms + frame as i64 * self.grid_step
    }

    /// All player positions at one instant, in roster order.
    pub fn frame(&self, frame: usize) -> &[Point] {
        let n = self.players.len();
        &self.coords[frame * n..(frame + 1) * n]
    }

    pub fn imputed(&self, frame: usize) -> &[bool] {
        let n = self.players.len();
        &self.imputed[frame * n..(frame + 1) * n]
    }

    pub fn position(&self, frame: usize, player_idx: usize) -> Point {
        self.coords[frame * self.players.len() + player_idx]
    }

    /// One player's coordinate series along a single axis.
    pub fn axis_series(&self, player_idx: usize, axis: Axis) -> Vec<f64> {
        let n = self.players.len();
        self.coords
            .iter()
            .skip(player_idx)
            .step_by(n)
            .map(|p| match axis {
                Axis::X => p.x,
                Axis::Y => p.y,
            })
            .collect()
    }

    /// Replaces one player's series along one axis.
    pub fn set_axis_series(&mut self, player_idx: usize, axis: Axis, values: &[f64]) {
        let n = self.players.len();
        assert_eq!(values.len(), self.len());
        for (frame, v) in values.iter().enumerate() {
            let p = &mut self.coords[frame * n + player_idx];
            match axis {
                Axis::X => p.x = *v,
                Axis::Y => p.y = *v,
            }
        }
    }

    /// Re-expresses the frames as exact-time samples (z = 0), mostly for
    /// round-trip checks.
    pub fn to_samples(&self) -> Vec<PositionSample> {
        let mut out = Vec::with_capacity(self.coords.len());
        for frame in 0..self.len() {
            let t = self.timestamp(frame);
            for (pi, player) in self.players.iter().enumerate() {
                let p = self.position(frame, pi);
                out.push(PositionSample {
                    timestamp_ms: t,
                    player: *player,
                    x: p.x,
                    y: p.y,
                    z: 0.0,
                });
            }
        }
        out
    }

    /// Writes `t_ms, p<id>_x, p<id>_y, ...` in roster order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "t_ms")?;
        for p in &self.players {
            write!(out, ",p{p}_x,p{p}_y")?;
        }
        writeln!(out)?;
        for frame in 0..self.len() {
            write!(out, "{}", self.timestamp(frame))?;
            for point in self.frame(frame) {
                write!(out, ",{},{}", point.x, point.y)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads a frames file written by [`FrameSeries::write_csv`].
    ///
    /// The grid step is inferred from the first two rows; imputation and
    /// filter flags are in-memory diagnostics and are not persisted.
    pub fn read_csv<R: Read>(source: R) -> Result<FrameSeries> {
        let mut coords: Vec<Point> = Vec::new();
        let (players, start_ms, grid_step, frames) = stream_frames_csv(source, |_, _, frame| {
            coords.extend_from_slice(frame);
            Ok(())
        })?;
        let n = players.len();
        Ok(FrameSeries {
            grid_step,
            start_ms,
            players,
            coords,
            imputed: vec![false; frames as usize * n],
            filtered: false,
        })
    }
}

/// Streams a frames file row by row without materializing it. The sink
/// receives the roster, the instant, and the positions for every row in
/// order; the uniform-grid invariant is checked as rows arrive. Returns
/// the roster, frame 0's timestamp, the grid step, and the row count.
pub fn stream_frames_csv<R, F>(source: R, mut sink: F) -> Result<(Vec<PlayerId>, i64, i64, u64)>
where
    R: Read,
    F: FnMut(&[PlayerId], i64, &[Point]) -> Result<()>,
{
    let file = "frames";
    let mut lines = BufReader::new(source).lines();
    let header = lines.next().ok_or_else(|| Error::Format {
        file,
        reason: "empty file".into(),
    })??;
    let mut fields = header.split(',');
    if fields.next() != Some("t_ms") {
        return Err(Error::Format {
            file,
            reason: "first column must be t_ms".into(),
        });
    }
    let mut players = Vec::new();
    let cols: Vec<&str> = fields.collect();
    if cols.is_empty() || cols.len() % 2 != 0 {
        return Err(Error::Format {
            file,
            reason: "expected p<id>_x,p<id>_y column pairs".into(),
        });
    }
    for pair in cols.chunks(2) {
        let id_x = pair[0]
            .strip_prefix('p')
            .and_then(|s| s.strip_suffix("_x"))
            .and_then(|s| s.parse::<u32>().ok());
        let id_y = pair[1]
            .strip_prefix('p')
            .and_then(|s| s.strip_suffix("_y"))
            .and_then(|s| s.parse::<u32>().ok());
        match (id_x, id_y) {
            (Some(a), Some(b)) if a == b => players.push(PlayerId(a)),
            _ => {
                return Err(Error::Format {
                    file,
                    reason: format!("bad column pair {}/{}", pair[0], pair[1]),
                })
            }
        }
    }

    let n = players.len();
    let mut frame = vec![Point::new(0.0, 0.0); n];
    let mut start_ms = 0i64;
    let mut grid_step = 1i64;
    let mut count = 0u64;
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: i64 = parts.next().unwrap().parse().map_err(|e| Error::Format {
            file,
            reason: format!("row {row}: bad t_ms: {e}"),
        })?;
        match count {
            0 => start_ms = t,
            1 => {
                grid_step = t - start_ms;
                if grid_step < 1 {
                    return Err(Error::Format {
                        file,
                        reason: "timestamps must be strictly increasing".into(),
                    });
                }
            }
            _ => {
                if t != start_ms + count as i64 * grid_step {
                    return Err(Error::Format {
                        file,
                        reason: format!("row {row}: timestamps are not on a uniform grid"),
                    });
                }
            }
        }
        for slot in frame.iter_mut() {
            let x: f64 = parts
                .next()
                .ok_or_else(|| Error::Format {
                    file,
                    reason: format!("row {row}: short row"),
                })?
                .parse()
                .map_err(|e| Error::Format {
                    file,
                    reason: format!("row {row}: bad x: {e}"),
                })?;
            let y: f64 = parts
                .next()
                .ok_or_else(|| Error::Format {
                    file,
                    reason: format!("row {row}: short row"),
                })?
                .parse()
                .map_err(|e| Error::Format {
                    file,
                    reason: format!("row {row}: bad y: {e}"),
                })?;
            *slot = Point::new(x, y);
        }
        sink(&players, t, &frame)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Format {
            file,
            reason: "no frames".into(),
        });
    }
    Ok((players, start_ms, grid_step, count))
}

/// Coordinate axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Regularizes a session onto a uniform grid with LOCF imputation.
///
/// The grid starts at the latest first-sample timestamp across the roster
/// (the earliest instant at which every player has a value to carry
/// forward) and ends at the last sample.
pub fn regularize(session: &RawSession, grid_step: i64) -> Result<FrameSeries> {
    regularize_impl(session, grid_step, None)
}

/// Like [`regularize`] but over an explicit `[start_ms, end_ms]` span.
/// Errors if some player has no sample at or before `start_ms`.
pub fn regularize_span(
    session: &RawSession,
    grid_step: i64,
    start_ms: i64,
    end_ms: i64,
) -> Result<FrameSeries> {
    regularize_impl(session, grid_step, Some((start_ms, end_ms)))
}

/// Regularizes and writes the frames file in one streaming pass, never
/// holding more than one frame in memory. The bytes are identical to
/// materializing with [`regularize`] and calling
/// [`FrameSeries::write_csv`]. Returns the number of frames written.
pub fn stream_regularized_csv<W: Write>(
    session: &RawSession,
    grid_step: i64,
    span: Option<(i64, i64)>,
    mut out: W,
) -> Result<u64> {
    write!(out, "t_ms")?;
    for p in &session.roster {
        write!(out, ",p{p}_x,p{p}_y")?;
    }
    writeln!(out)?;
    stream_frames(session, grid_step, span, |t, frame, _| {
        write!(out, "{t}")?;
        for point in frame {
            write!(out, ",{},{}", point.x, point.y)?;
        }
        writeln!(out)?;
        Ok(())
    })
}

fn regularize_impl(
    session: &RawSession,
    grid_step: i64,
    span: Option<(i64, i64)>,
) -> Result<FrameSeries> {
    let players = session.roster.clone();
    let n = players.len();
    let mut coords = Vec::new();
    let mut imputed = Vec::new();
    let mut start = 0i64;
    let mut first = true;
    stream_frames(session, grid_step, span, |t, frame, mask| {
        if first {
            start = t;
            first = false;
        }
        coords.extend_from_slice(frame);
        imputed.extend_from_slice(mask);
        Ok(())
    })?;
    debug_assert_eq!(coords.len() % n.max(1), 0);
    Ok(FrameSeries {
        grid_step,
        start_ms: start,
        players,
        coords,
        imputed,
        filtered: false,
    })
}

/// Single forward pass over the session, invoking `sink` once per grid
/// instant with the players' LOCF positions and the per-player imputation
/// mask. Memory stays bounded by the roster size, so multi-million-frame
/// grids never materialize. Returns the number of frames emitted.
pub fn stream_frames<F>(
    session: &RawSession,
    grid_step: i64,
    span: Option<(i64, i64)>,
    mut sink: F,
) -> Result<u64>
where
    F: FnMut(i64, &[Point], &[bool]) -> Result<()>,
{
    if grid_step < 1 {
        return Err(Error::BadGridStep(grid_step));
    }
    if session.samples.is_empty() {
        return Err(Error::EmptySession);
    }
    let players = &session.roster;
    let n = players.len();
    let player_idx = |id: PlayerId| players.binary_search(&id).ok();

    let (start, end) = match span {
        Some((s, e)) => (s, e),
        None => {
            let mut first_seen: Vec<Option<i64>> = vec![None; n];
            for s in &session.samples {
                if let Some(i) = player_idx(s.player) {
                    if first_seen[i].is_none() {
                        first_seen[i] = Some(s.timestamp_ms);
                    }
                }
            }
            let mut start = i64::MIN;
            for (i, seen) in first_seen.iter().enumerate() {
                match seen {
                    Some(t) => start = start.max(*t),
                    None => return Err(Error::LeadingGap(players[i])),
                }
            }
            (start, session.last_timestamp().unwrap())
        }
    };
    if end < start {
        return Err(Error::Config(format!(
            "regularize span end {end} precedes start {start}"
        )));
    }

    let mut last: Vec<Option<Point>> = vec![None; n];
    let mut exact = vec![false; n];
    let mut frame = vec![Point::new(0.0, 0.0); n];
    let mut mask = vec![false; n];
    let mut cursor = 0usize;
    let samples = &session.samples;
    let mut count = 0u64;
    let mut t = start;
    loop {
        exact.iter_mut().for_each(|b| *b = false);
        while cursor < samples.len() && samples[cursor].timestamp_ms <= t {
            let s = &samples[cursor];
            if let Some(i) = player_idx(s.player) {
                last[i] = Some(Point::new(s.x, s.y));
                if s.timestamp_ms == t {
                    exact[i] = true;
                }
            }
            cursor += 1;
        }
        for i in 0..n {
            match last[i] {
                Some(p) => {
                    frame[i] = p;
                    mask[i] = !exact[i];
                }
                None => return Err(Error::LeadingGap(players[i])),
            }
        }
        sink(t, &frame, &mask)?;
        count += 1;
        match t.checked_add(grid_step) {
            Some(next) if next <= end => t = next,
            _ => break,
        }
    }
    Ok(count)
}

/// Sampling-rate summary of a raw session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStats {
    pub total_samples: usize,
    pub span_ms: i64,
    /// Samples per second across all players.
    pub overall_rate_hz: f64,
    /// Mean gap between consecutive samples, per player with >= 2 samples.
    pub per_player_mean_interval_ms: Vec<(PlayerId, f64)>,
}

/// Computes sampling statistics from the sorted sample stream.
pub fn session_stats(session: &RawSession) -> Result<SessionStats> {
    let total = session.samples.len();
    if total < 2 {
        return Err(Error::TooFewSamples {
            got: total,
            need: 2,
        });
    }
    let first = session.first_timestamp().unwrap();
    let last = session.last_timestamp().unwrap();
    let span_ms = last - first;
    if span_ms == 0 {
        return Err(Error::Config(
            "session_stats: all samples share one timestamp".into(),
        ));
    }
    let overall_rate_hz = total as f64 / (span_ms as f64 / 1000.0);

    let mut per_player = Vec::new();
    for player in &session.roster {
        let mut prev: Option<i64> = None;
        let mut gaps = 0u64;
        let mut gap_sum = 0i64;
        for s in session.samples.iter().filter(|s| s.player == *player) {
            if let Some(p) = prev {
                gap_sum += s.timestamp_ms - p;
                gaps += 1;
            }
            prev = Some(s.timestamp_ms);
        }
        if gaps > 0 {
            per_player.push((*player, gap_sum as f64 / gaps as f64));
        }
    }
    Ok(SessionStats {
        total_samples: total,
        span_ms,
        overall_rate_hz,
        per_player_mean_interval_ms: per_player,
    })
}
