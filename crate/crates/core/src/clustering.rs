//! K-means phase clustering with deviance-based model selection.
//!
//! Instants with similar pairwise-distance profiles are grouped by
//! Lloyd's algorithm, seeded with the k-means++ scheme and restarted
//! from several seeds. The number of phases is picked by an elbow rule
//! on the between/total deviance ratio, which climbs toward 1 as k grows
//! and flattens once additional clusters stop explaining real structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Knobs for one k-means fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    /// Base RNG seed; restart r uses `seed + r`.
    pub seed: u64,
    /// Independent seedings to try; the lowest within-deviance wins.
    pub restarts: usize,
    /// Hard cap on Lloyd iterations per restart.
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid movement.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            seed: 0,
            restarts: 10,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("kmeans restarts must be >= 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("kmeans max_iter must be >= 1".into()));
        }
        if !(self.tol >= 0.0) || !self.tol.is_finite() {
            return Err(Error::Config(format!(
                "kmeans tol must be a non-negative number, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// A fitted k-means model.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major k x dim.
    pub centroids: Vec<f64>,
    /// Arg-min assignment of every input row to `centroids`.
    pub labels: Vec<usize>,
    /// Sum over rows of squared distance to the assigned centroid.
    pub within_deviance: f64,
    /// Lloyd iterations used by the winning restart.
    pub iterations: usize,
    /// Which restart won.
    pub restart: usize,
    /// False when the winning restart hit `max_iter` while still moving.
    pub converged: bool,
}

impl KMeansModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }
}

/// Squared Euclidean distance between two rows.
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid index; ties go to the lowest index.
fn nearest(centroids: &[f64], dim: usize, row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = dist2(c, row);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// Assigns a single feature row with the fitted model. Ties break toward
/// the lowest cluster index, matching training.
pub fn assign(model: &KMeansModel, row: &[f64]) -> Result<usize> {
    if row.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: row.len(),
        });
    }
    Ok(nearest(&model.centroids, model.dim, row).0)
}

/// Re-scores a whole row-major block of feature rows against a fitted
/// model, one label per row. Same nearest-centroid rule as [`assign`].
pub fn assign_all(model: &KMeansModel, data: &[f64], dim: usize) -> Result<Vec<usize>> {
    if dim != model.dim || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: dim,
        });
    }
    Ok(data
        .chunks_exact(dim)
        .map(|row| nearest(&model.centroids, dim, row).0)
        .collect())
}

/// k-means++ seeding: the first centroid is uniform, each later one is
/// drawn with probability proportional to squared distance from the
/// centroids chosen so far.
fn seed_centroids(
    data: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point already coincides with a centroid.
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for i in 0..n {
            let d = dist2(row(i), &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

struct LloydRun {
    centroids: Vec<f64>,
    labels: Vec<usize>,
    within: f64,
    iterations: usize,
    converged: bool,
}

fn lloyd(
    data: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LloydRun> {
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = seed_centroids(data, n, dim, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut converged = false;
    let tol2 = cfg.tol * cfg.tol;

    while iterations < cfg.max_iter {
        iterations += 1;

        // Assignment step.
        let mut changed = false;
        for i in 0..n {
            let (j, _) = nearest(&centroids, dim, row(i));
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        if !changed && iterations > 1 {
            converged = true;
            break;
        }

        // Update step: centroids become the means of their members.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let j = labels[i];
            counts[j] += 1;
            let s = &mut sums[j * dim..(j + 1) * dim];
            for (acc, v) in s.iter_mut().zip(row(i)) {
                *acc += v;
            }
        }

        // Repair empty clusters by reseeding each at the point currently
        // farthest from its assigned centroid. A zero maximum means every
        // point sits exactly on a centroid and the cluster is hopeless.
        let mut repaired = false;
        let mut taken: Vec<usize> = Vec::new();
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let mut far_i = usize::MAX;
            let mut far_d = 0.0;
            for i in 0..n {
                if taken.contains(&i) || counts[labels[i]] <= 1 {
                    continue;
                }
                let d = dist2(row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]);
                if d > far_d {
                    far_d = d;
                    far_i = i;
                }
            }
            if far_i == usize::MAX || far_d == 0.0 {
                return Err(Error::EmptyCluster(j));
            }
            taken.push(far_i);
            repaired = true;
            let donor = labels[far_i];
            counts[donor] -= 1;
            for (acc, v) in sums[donor * dim..(donor + 1) * dim]
                .iter_mut()
                .zip(row(far_i))
            {
                *acc -= v;
            }
            labels[far_i] = j;
            counts[j] = 1;
            for (acc, v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(row(far_i)) {
                *acc += v;
            }
        }

        let mut movement2 = 0.0f64;
        for j in 0..k {
            let c = &mut centroids[j * dim..(j + 1) * dim];
            let s = &sums[j * dim..(j + 1) * dim];
            let inv = 1.0 / counts[j] as f64;
            let mut m2 = 0.0;
            for (cv, sv) in c.iter_mut().zip(s) {
                let next = sv * inv;
                let d = next - *cv;
                m2 += d * d;
                *cv = next;
            }
            movement2 = movement2.max(m2);
        }
        if movement2 <= tol2 && !repaired {
            converged = true;
            break;
        }
    }

    // Sync labels to the final centroids and score.
    let mut within = 0.0;
    for i in 0..n {
        let (j, d) = nearest(&centroids, dim, row(i));
        labels[i] = j;
        within += d;
    }
    Ok(LloydRun {
        centroids,
        labels,
        within,
        iterations,
        converged,
    })
}

/// Fits k-means to `data` (row-major, `dim` columns) with multiple
/// seeded restarts, returning the restart with the lowest within-cluster
/// deviance. The same data, k, and config always produce bitwise
/// identical results.
pub fn kmeans(data: &[f64], dim: usize, k: usize, cfg: &KMeansConfig) -> Result<KMeansModel> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::BadK(k));
    }
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: data.len(),
        });
    }
    let n = data.len() / dim;
    if n < k {
        return Err(Error::TooFewRows { rows: n, k });
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i / dim));
    }

    let mut best: Option<(LloydRun, usize)> = None;
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
        let run = lloyd(data, n, dim, k, cfg, &mut rng)?;
        let better = match &best {
            None => true,
            Some((b, _)) => run.within < b.within,
        };
        if better {
            best = Some((run, restart));
        }
    }
    let (run, restart) = best.unwrap();
    Ok(KMeansModel {
        k,
        dim,
        centroids: run.centroids,
        labels: run.labels,
        within_deviance: run.within,
        iterations: run.iterations,
        restart,
        converged: run.converged,
    })
}

/// Total, within-cluster, and between-cluster deviances of a labeling.
///
/// `within` is measured about whatever centroids were supplied. When the
/// centroids are the member means the decomposition is exact:
/// within + between = total up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Deviances {
    pub total: f64,
    pub within: f64,
    pub between: f64,
}

impl Deviances {
    /// Between/total ratio; defined as 0 when the data has no spread.
    pub fn ratio(&self) -> f64 {
        if self.total > 0.0 {
            self.between / self.total
        } else {
            0.0
        }
    }
}

/// Computes the deviance decomposition of `labels` over `data` about an
/// explicit row-major block of `centroids` (one per cluster). Every
/// cluster must have at least one member.
pub fn deviances(
    data: &[f64],
    dim: usize,
    labels: &[usize],
    centroids: &[f64],
) -> Result<Deviances> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: data.len(),
        });
    }
    if centroids.is_empty() || centroids.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: centroids.len(),
        });
    }
    let k = centroids.len() / dim;
    let n = data.len() / dim;
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if n == 0 {
        return Err(Error::TooFewRows { rows: 0, k });
    }
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(Error::BadLabel { label: *bad, k });
    }
    let mut counts = vec![0usize; k];
    for &j in labels {
        counts[j] += 1;
    }
    if let Some(j) = counts.iter().position(|c| *c == 0) {
        return Err(Error::EmptyCluster(j));
    }

    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut grand = vec![0.0f64; dim];
    for i in 0..n {
        for (g, v) in grand.iter_mut().zip(row(i)) {
            *g += v;
        }
    }
    for g in grand.iter_mut() {
        *g /= n as f64;
    }

    let mut total = 0.0;
    let mut within = 0.0;
    for i in 0..n {
        total += dist2(row(i), &grand);
        let j = labels[i];
        within += dist2(row(i), &centroids[j * dim..(j + 1) * dim]);
    }
    let mut between = 0.0;
    for j in 0..k {
        between += counts[j] as f64 * dist2(&centroids[j * dim..(j + 1) * dim], &grand);
    }
    Ok(Deviances {
        total,
        within,
        between,
    })
}

/// Deviance decomposition with the centroids taken as the member means
/// of `labels`, so within + between = total up to rounding.
pub fn deviances_about_means(
    data: &[f64],
    dim: usize,
    labels: &[usize],
    k: usize,
) -> Result<Deviances> {
    if k == 0 {
        return Err(Error::BadK(k));
    }
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: data.len(),
        });
    }
    let n = data.len() / dim;
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if n == 0 {
        return Err(Error::TooFewRows { rows: 0, k });
    }
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(Error::BadLabel { label: *bad, k });
    }
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &j) in labels.iter().enumerate() {
        counts[j] += 1;
        for (acc, v) in sums[j * dim..(j + 1) * dim]
            .iter_mut()
            .zip(&data[i * dim..(i + 1) * dim])
        {
            *acc += v;
        }
    }
    if let Some(j) = counts.iter().position(|c| *c == 0) {
        return Err(Error::EmptyCluster(j));
    }
    let mut means = sums;
    for j in 0..k {
        let inv = 1.0 / counts[j] as f64;
        for v in means[j * dim..(j + 1) * dim].iter_mut() {
            *v *= inv;
        }
    }
    deviances(data, dim, labels, &means)
}

/// Elbow-rule thresholds for choosing k.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// The between/total ratio a candidate must reach.
    pub min_ratio: f64,
    /// Adding a cluster must improve the ratio by at least this much to
    /// keep going.
    pub min_gain: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            min_ratio: 0.5,
            min_gain: 0.03,
        }
    }
}

/// Scores for one candidate k.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KCandidate {
    pub k: usize,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    /// between/total.
    pub ratio: f64,
    /// Ratio improvement over k-1 (the raw ratio at the smallest k).
    pub gain: f64,
}

/// Result of scanning a k range.
#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub candidates: Vec<KCandidate>,
    pub chosen_k: usize,
    /// True when no candidate met the thresholds and the largest-gain
    /// candidate was used instead.
    pub fallback: bool,
    /// The fitted model for `chosen_k`.
    pub model: KMeansModel,
}

/// Applies the elbow rule to a list of (k, ratio) pairs for consecutive
/// k. Picks the smallest k whose ratio clears `min_ratio` and whose
/// successor adds less than `min_gain`; the gain clause is vacuous for
/// the last candidate. Falls back to the largest-gain k when nothing
/// qualifies.
fn choose_from_ratios(ratios: &[(usize, f64)], sel: &SelectionConfig) -> (usize, bool) {
    for (i, (k, ratio)) in ratios.iter().enumerate() {
        if *ratio >= sel.min_ratio {
            let gain_ahead = ratios.get(i + 1).map(|(_, next)| next - ratio);
            match gain_ahead {
                Some(g) if g >= sel.min_gain => continue,
                _ => return (*k, false),
            }
        }
    }
    let mut best_k = ratios[0].0;
    let mut best_gain = f64::NEG_INFINITY;
    for (i, (k, ratio)) in ratios.iter().enumerate() {
        let gain = if i == 0 {
            *ratio
        } else {
            ratio - ratios[i - 1].1
        };
        if gain > best_gain {
            best_gain = gain;
            best_k = *k;
        }
    }
    (best_k, true)
}

/// Fits every k in `k_min..=k_max` and picks one by the elbow rule on
/// the between/total deviance ratio.
pub fn select_k(
    data: &[f64],
    dim: usize,
    k_min: usize,
    k_max: usize,
    kcfg: &KMeansConfig,
    sel: &SelectionConfig,
) -> Result<KSelection> {
    if k_min == 0 {
        return Err(Error::BadK(0));
    }
    if k_max < k_min {
        return Err(Error::Config(format!(
            "k range is empty: {k_min}..{k_max}"
        )));
    }
    let mut candidates = Vec::new();
    let mut models = Vec::new();
    let mut prev_ratio = 0.0;
    for k in k_min..=k_max {
        let model = kmeans(data, dim, k, kcfg)?;
        let dev = deviances(data, dim, &model.labels, &model.centroids)?;
        let ratio = dev.ratio();
        let gain = if k == k_min { ratio } else { ratio - prev_ratio };
        candidates.push(KCandidate {
            k,
            within: dev.within,
            between: dev.between,
            total: dev.total,
            ratio,
            gain,
        });
        prev_ratio = ratio;
        models.push(model);
    }
    let ratios: Vec<(usize, f64)> = candidates.iter().map(|c| (c.k, c.ratio)).collect();
    let (chosen_k, fallback) = choose_from_ratios(&ratios, sel);
    let model = models.swap_remove(chosen_k - k_min);
    Ok(KSelection {
        candidates,
        chosen_k,
        fallback,
        model,
    })
}
