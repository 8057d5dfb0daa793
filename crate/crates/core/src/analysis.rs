//! Phase characterization: occupancy shares, mean distance profiles,
//! planar embeddings of each phase's shape, offense labeling, and the
//! switch transition matrix.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{pair_order, FeatureMatrix};
use crate::ingest::{CourtDims, MatchTimeline, Point};

/// Aggregate description of one phase (cluster of instants).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    /// Instants assigned to this cluster.
    pub count: usize,
    /// Fraction of all instants, in [0, 1].
    pub share: f64,
    /// Mean distance per player pair, in pair order (meters).
    pub mean_distances: Vec<f64>,
    /// The same means arranged as a symmetric matrix with zero diagonal.
    pub mean_distance_matrix: Vec<Vec<f64>>,
    /// Fraction of the cluster's instants spent attacking; filled in by
    /// [`offense_share`] once offense flags exist.
    pub offense_share: Option<f64>,
}

/// Per-cluster occupancy and mean pairwise distances.
///
/// Every cluster index in `0..k` must own at least one instant.
pub fn summarize_clusters(
    features: &FeatureMatrix,
    labels: &[usize],
    k: usize,
) -> Result<Vec<ClusterSummary>> {
    if k == 0 {
        return Err(Error::BadK(0));
    }
    if labels.len() != features.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: features.len(),
        });
    }
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(Error::BadLabel { label: *bad, k });
    }
    let dim = features.dim;
    let side = matrix_side(dim)?;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k * dim];
    for (row, label) in features.rows().zip(labels) {
        counts[*label] += 1;
        for (acc, v) in sums[label * dim..(label + 1) * dim].iter_mut().zip(row) {
            *acc += v;
        }
    }
    if let Some(j) = counts.iter().position(|c| *c == 0) {
        return Err(Error::EmptyCluster(j));
    }
    let total = features.len() as f64;
    let pairs = pair_order(side);
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mean: Vec<f64> = sums[j * dim..(j + 1) * dim]
            .iter()
            .map(|s| s / counts[j] as f64)
            .collect();
        let mut matrix = vec![vec![0.0f64; side]; side];
        for ((a, b), v) in pairs.iter().zip(&mean) {
            matrix[*a][*b] = *v;
            matrix[*b][*a] = *v;
        }
        out.push(ClusterSummary {
            cluster_id: j,
            count: counts[j],
            share: counts[j] as f64 / total,
            mean_distances: mean,
            mean_distance_matrix: matrix,
            offense_share: None,
        });
    }
    Ok(out)
}

/// Number of players whose pair count is `dim`, i.e. the m solving
/// m(m-1)/2 = dim.
fn matrix_side(dim: usize) -> Result<usize> {
    let mut m = 2;
    while m * (m - 1) / 2 < dim {
        m += 1;
    }
    if m * (m - 1) / 2 != dim {
        return Err(Error::Config(format!(
            "{dim} features do not form a pairwise-distance set"
        )));
    }
    Ok(m)
}

/// Column means over all instants.
pub fn global_mean_distances(features: &FeatureMatrix) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let mut mean = vec![0.0f64; features.dim];
    for row in features.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= features.len() as f64;
    }
    Ok(mean)
}

/// How far a cluster's mean pair distances sit from the global means.
/// Negative entries mean the pair is tighter than average in this phase.
pub fn profile_deviations(summary: &ClusterSummary, global: &[f64]) -> Result<Vec<f64>> {
    if summary.mean_distances.len() != global.len() {
        return Err(Error::LengthMismatch {
            left: summary.mean_distances.len(),
            right: global.len(),
        });
    }
    Ok(summary
        .mean_distances
        .iter()
        .zip(global)
        .map(|(c, g)| c - g)
        .collect())
}

/// Planar embedding of a distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdsEmbedding {
    /// One 2-D point per row of the input matrix; defined up to rigid
    /// motion and reflection, pinned by a deterministic sign rule.
    pub coordinates: Vec<Point>,
    /// The two largest eigenvalues of the centered matrix, descending,
    /// as found (a slightly negative second value signals the input was
    /// not exactly planar-Euclidean).
    pub eigenvalues: [f64; 2],
    /// Largest absolute difference between embedded and input distances.
    pub stress_abs: f64,
    /// Set when some eigenvalue is negative beyond rounding, i.e. the
    /// matrix is not Euclidean-embeddable.
    pub non_euclidean: bool,
}

/// Classical (Torgerson) multidimensional scaling to two dimensions.
///
/// Squares the distances, double-centers them into the Gram matrix
/// B = -1/2 J D2 J, and reads coordinates off the top two eigenpairs,
/// clamping negative eigenvalues to zero. The sign of each output
/// dimension is fixed by making its largest-magnitude coordinate
/// positive, so equal inputs give bitwise-equal embeddings.
pub fn classical_mds(distances: &[f64], n: usize) -> Result<MdsEmbedding> {
    if n < 2 {
        return Err(Error::MatrixTooSmall(n));
    }
    if distances.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: distances.len(),
        });
    }
    for i in 0..n {
        if distances[i * n + i] != 0.0 {
            return Err(Error::BadDistanceMatrix);
        }
        for j in 0..n {
            let d = distances[i * n + j];
            if !d.is_finite() || d < 0.0 || (d - distances[j * n + i]).abs() > 1e-9 {
                return Err(Error::BadDistanceMatrix);
            }
        }
    }

    // Double-center the squared distances.
    let d2 = |i: usize, j: usize| {
        let d = distances[i * n + j];
        d * d
    };
    let mut row_mean = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            row_mean[i] += d2(i, j);
        }
        row_mean[i] /= n as f64;
    }
    let grand_mean = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (d2(i, j) - row_mean[i] - row_mean[j] + grand_mean)
    });
    let trace: f64 = (0..n).map(|i| b[(i, i)]).sum();

    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, c| eig.eigenvalues[*c].total_cmp(&eig.eigenvalues[*a]));

    let min_eig = (0..n)
        .map(|i| eig.eigenvalues[i])
        .fold(f64::INFINITY, f64::min);
    let non_euclidean = min_eig < -1e-6 * trace.max(0.0) && min_eig < 0.0;

    let top = [order[0], order[1]];
    let eigenvalues = [eig.eigenvalues[top[0]], eig.eigenvalues[top[1]]];
    let mut coords = vec![Point::new(0.0, 0.0); n];
    for (dim, idx) in top.iter().enumerate() {
        let scale = eigenvalues[dim].max(0.0).sqrt();
        let column: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, *idx)] * scale).collect();
        // Deterministic sign: the largest-magnitude entry points up.
        let mut anchor = 0;
        for (i, v) in column.iter().enumerate() {
            if v.abs() > column[anchor].abs() {
                anchor = i;
            }
        }
        let flip = if column[anchor] < 0.0 { -1.0 } else { 1.0 };
        for (i, v) in column.iter().enumerate() {
            let value = v * flip;
            if dim == 0 {
                coords[i].x = value;
            } else {
                coords[i].y = value;
            }
        }
    }

    let mut stress_abs = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let embedded = coords[i].distance(&coords[j]);
            stress_abs = stress_abs.max((embedded - distances[i * n + j]).abs());
        }
    }
    Ok(MdsEmbedding {
        coordinates: coords,
        eigenvalues,
        stress_abs,
        non_euclidean,
    })
}

/// Whether the lineup centroid sits in the attacking half at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OffenseFlag {
    Offensive,
    Defensive,
}

impl OffenseFlag {
    pub fn is_offensive(self) -> bool {
        self == OffenseFlag::Offensive
    }

    pub fn flipped(self) -> Self {
        match self {
            OffenseFlag::Offensive => OffenseFlag::Defensive,
            OffenseFlag::Defensive => OffenseFlag::Offensive,
        }
    }
}

/// Labels every instant offensive or defensive from the lineup centroid.
///
/// An instant is Offensive iff the centroid's x coordinate lies strictly
/// inside the attacking half for the period covering that instant; a
/// centroid exactly on the half-court line counts as Defensive. Instants
/// outside every period are an error (they should have been clipped).
pub fn label_offense(
    timestamps: &[i64],
    centroids: &[Point],
    timeline: &MatchTimeline,
    court: &CourtDims,
) -> Result<Vec<OffenseFlag>> {
    if timestamps.len() != centroids.len() {
        return Err(Error::LengthMismatch {
            left: timestamps.len(),
            right: centroids.len(),
        });
    }
    timeline.validate()?;
    let half = court.half_line_x();
    timestamps
        .iter()
        .zip(centroids)
        .map(|(t, c)| {
            let period = timeline
                .period_at(*t)
                .ok_or(Error::InstantOutsideTimeline(*t))?;
            let offensive = match period.attack {
                crate::ingest::AttackDirection::PositiveX => c.x > half,
                crate::ingest::AttackDirection::NegativeX => c.x < half,
            };
            Ok(if offensive {
                OffenseFlag::Offensive
            } else {
                OffenseFlag::Defensive
            })
        })
        .collect()
}

/// Fraction of each cluster's instants flagged offensive.
pub fn offense_share(labels: &[usize], flags: &[OffenseFlag], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::BadK(0));
    }
    if labels.len() != flags.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: flags.len(),
        });
    }
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(Error::BadLabel { label: *bad, k });
    }
    let mut counts = vec![0usize; k];
    let mut offensive = vec![0usize; k];
    for (label, flag) in labels.iter().zip(flags) {
        counts[*label] += 1;
        if flag.is_offensive() {
            offensive[*label] += 1;
        }
    }
    if let Some(j) = counts.iter().position(|c| *c == 0) {
        return Err(Error::EmptyCluster(j));
    }
    Ok((0..k)
        .map(|j| offensive[j] as f64 / counts[j] as f64)
        .collect())
}

/// Switch statistics between phases: how often the phase at t+1 differs
/// from the phase at t, and where it goes when it does.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    pub k: usize,
    /// Row-major k x k switch counts; the diagonal is structurally zero.
    pub counts: Vec<u64>,
    /// Row-normalized counts. Rows that never switch stay all-zero.
    pub probabilities: Vec<f64>,
    /// True for rows with at least one observed switch.
    pub active_rows: Vec<bool>,
}

impl TransitionMatrix {
    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.k + to]
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.probabilities[from * self.k + to]
    }

    pub fn total_switches(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts label switches between adjacent instants. Pairs with equal
/// labels are ignored entirely, so the diagonal stays zero and the
/// matrix describes where a phase goes when it ends.
pub fn transition_matrix(labels: &[usize], k: usize) -> Result<TransitionMatrix> {
    if k == 0 {
        return Err(Error::BadK(0));
    }
    if labels.len() < 2 {
        return Err(Error::TooFewSamples {
            got: labels.len(),
            need: 2,
        });
    }
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(Error::BadLabel { label: *bad, k });
    }
    let mut counts = vec![0u64; k * k];
    for pair in labels.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a != b {
            counts[a * k + b] += 1;
        }
    }
    let mut probabilities = vec![0.0f64; k * k];
    let mut active_rows = vec![false; k];
    for i in 0..k {
        let row_total: u64 = counts[i * k..(i + 1) * k].iter().sum();
        if row_total > 0 {
            active_rows[i] = true;
            for j in 0..k {
                probabilities[i * k + j] = counts[i * k + j] as f64 / row_total as f64;
            }
        }
    }
    Ok(TransitionMatrix {
        k,
        counts,
        probabilities,
        active_rows,
    })
}
