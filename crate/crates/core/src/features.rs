//! Per-instant feature extraction: the ten pairwise player distances.
//!
//! A lineup of five players defines C(5,2) = 10 unordered pairs. The
//! Euclidean distance of each pair, listed in a fixed lexicographic
//! order over the ascending roster, is the feature vector for that
//! instant. The representation is invariant to where on the court the
//! formation sits and how it is oriented, which is exactly what makes
//! it usable for recognizing recurring shapes.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::ingest::{FrameSeries, PlayerId, Point, RawSession};

/// Number of players a feature vector describes.
pub const LINEUP: usize = 5;
/// Feature dimensionality: C(5,2).
pub const FEATURE_DIM: usize = 10;

/// Index pairs (i, j) with i < j in lexicographic order.
pub fn pair_order(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Column labels `d_<a>_<b>` using the actual player ids.
pub fn pair_labels(players: &[PlayerId]) -> Vec<String> {
    pair_order(players.len())
        .into_iter()
        .map(|(i, j)| format!("d_{}_{}", players[i], players[j]))
        .collect()
}

/// Pairwise Euclidean distances of one frame, in [`pair_order`].
pub fn pairwise_distances(frame: &[Point]) -> Vec<f64> {
    pair_order(frame.len())
        .into_iter()
        .map(|(i, j)| frame[i].distance(&frame[j]))
        .collect()
}

/// Dense row-major feature matrix with the grid timestamps attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub timestamps: Vec<i64>,
    /// Column labels, `d_<a>_<b>` per pair.
    pub labels: Vec<String>,
    pub dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(timestamps: Vec<i64>, labels: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if labels.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: labels.len(),
            });
        }
        if data.len() != timestamps.len() * dim {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: timestamps.len() * dim,
            });
        }
        Ok(FeatureMatrix {
            timestamps,
            labels,
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Writes `t_ms,d_a_b,...` with one row per instant.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "t_ms")?;
        for label in &self.labels {
            write!(out, ",{label}")?;
        }
        writeln!(out)?;
        for (t, row) in self.timestamps.iter().zip(self.rows()) {
            write!(out, "{t}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads a features file written by [`FeatureMatrix::write_csv`].
    pub fn read_csv<R: Read>(source: R) -> Result<FeatureMatrix> {
        let file = "features";
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
        let labels: Vec<String> = fields.map(str::to_owned).collect();
        if labels.is_empty() {
            return Err(Error::Format {
                file,
                reason: "no feature columns".into(),
            });
        }
        let dim = labels.len();
        let mut timestamps = Vec::new();
        let mut data = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let t: i64 = parts
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::Format {
                    file,
                    reason: format!("row {row}: bad t_ms: {e}"),
                })?;
            timestamps.push(t);
            let mut count = 0;
            for part in parts {
                let v: f64 = part.parse().map_err(|e| Error::Format {
                    file,
                    reason: format!("row {row}: bad value: {e}"),
                })?;
                data.push(v);
                count += 1;
            }
            if count != dim {
                return Err(Error::Format {
                    file,
                    reason: format!("row {row}: expected {dim} values, got {count}"),
                });
            }
        }
        FeatureMatrix::new(timestamps, labels, dim, data)
    }
}

/// Builds the feature matrix for a five-player frame series.
pub fn build_feature_matrix(frames: &FrameSeries) -> Result<FeatureMatrix> {
    if frames.players.len() != LINEUP {
        return Err(Error::PlayerCount(frames.players.len()));
    }
    let labels = pair_labels(&frames.players);
    let mut timestamps = Vec::with_capacity(frames.len());
    let mut data = Vec::with_capacity(frames.len() * FEATURE_DIM);
    for i in 0..frames.len() {
        timestamps.push(frames.timestamp(i));
        data.extend(pairwise_distances(frames.frame(i)));
    }
    FeatureMatrix::new(timestamps, labels, FEATURE_DIM, data)
}

/// Mean position of the lineup at every instant.
pub fn centroid_series(frames: &FrameSeries) -> Vec<Point> {
    let n = frames.players.len() as f64;
    (0..frames.len())
        .map(|i| {
            let mut x = 0.0;
            let mut y = 0.0;
            for p in frames.frame(i) {
                x += p.x;
                y += p.y;
            }
            Point::new(x / n, y / n)
        })
        .collect()
}

/// Converts a frames file into a features file row by row, never holding
/// more than one frame in memory. The bytes are identical to reading the
/// frames, building the matrix, and writing it. Returns the row count.
pub fn stream_features_csv<R: Read, W: Write>(frames_csv: R, mut out: W) -> Result<u64> {
    let pairs = pair_order(LINEUP);
    let mut row = [0.0f64; FEATURE_DIM];
    let mut started = false;
    let (_, _, _, count) = crate::ingest::stream_frames_csv(frames_csv, |players, t, frame| {
        if !started {
            if players.len() != LINEUP {
                return Err(Error::PlayerCount(players.len()));
            }
            write!(out, "t_ms")?;
            for label in pair_labels(players) {
                write!(out, ",{label}")?;
            }
            writeln!(out)?;
            started = true;
        }
        for (slot, (i, j)) in row.iter_mut().zip(&pairs) {
            *slot = frame[*i].distance(&frame[*j]);
        }
        write!(out, "{t}")?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
        Ok(())
    })?;
    Ok(count)
}

/// Streams feature rows straight from a raw session without ever
/// materializing the frame grid: each grid instant is regularized,
/// reduced to its distance vector, and handed to `sink`. Memory use is
/// bounded by the lineup size. Returns the number of rows emitted.
pub fn stream_feature_rows<F>(
    session: &RawSession,
    grid_step: i64,
    span: Option<(i64, i64)>,
    mut sink: F,
) -> Result<u64>
where
    F: FnMut(i64, &[f64]) -> Result<()>,
{
    if session.roster.len() != LINEUP {
        return Err(Error::PlayerCount(session.roster.len()));
    }
    let pairs = pair_order(LINEUP);
    let mut row = [0.0f64; FEATURE_DIM];
    crate::ingest::stream_frames(session, grid_step, span, |t, frame, _| {
        for (slot, (i, j)) in row.iter_mut().zip(&pairs) {
            *slot = frame[*i].distance(&frame[*j]);
        }
        sink(t, &row)
    })
}
