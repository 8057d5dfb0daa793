//! Randomized invariant checks. Each test states a structural promise of
//! the library (idempotence, conservation, invariance under symmetry,
//! agreement with a brute-force oracle) and hammers it with generated
//! inputs.

use proptest::prelude::*;

use courtphase::analysis::{
    classical_mds, label_offense, transition_matrix, OffenseFlag,
};
use courtphase::clustering::{deviances, deviances_about_means, kmeans, KMeansConfig};
use courtphase::features::pairwise_distances;
use courtphase::ingest::{
    clip_to_play, regularize, AttackDirection, CourtDims, MatchTimeline, Period, PlayerId, Point,
    PositionSample, RawSession, SessionMeta,
};
use courtphase::synth::{adjusted_rand_index, enumerate_optimal_partition};

fn session_from(per_player: Vec<Vec<(i64, f64, f64)>>) -> RawSession {
    let mut samples = Vec::new();
    for (idx, extras) in per_player.into_iter().enumerate() {
        let player = PlayerId(idx as u32 + 1);
        // Anchor every player at t = 0 so the auto-detected span never
        // rejects the session for a leading gap.
        samples.push(PositionSample {
            timestamp_ms: 0,
            player,
            x: idx as f64,
            y: 1.0,
            z: 0.0,
        });
        for (timestamp_ms, x, y) in extras {
            samples.push(PositionSample {
                timestamp_ms,
                player,
                x,
                y,
                z: 0.0,
            });
        }
    }
    RawSession::from_samples(samples, SessionMeta::default())
}

fn sparse_session() -> impl Strategy<Value = RawSession> {
    let one = prop::collection::vec((0i64..3_000, 0.0..28.0f64, 0.0..15.0f64), 0..12);
    prop::collection::vec(one, 5).prop_map(session_from)
}

fn timeline() -> impl Strategy<Value = MatchTimeline> {
    prop::collection::vec((0i64..1_200, 1i64..900, any::<bool>()), 1..4).prop_map(|raw| {
        let mut periods = Vec::new();
        let mut cursor = 0;
        for (gap, len, positive) in raw {
            let start_ms = cursor + gap;
            let end_ms = start_ms + len;
            cursor = end_ms;
            periods.push(Period {
                start_ms,
                end_ms,
                attack: if positive {
                    AttackDirection::PositiveX
                } else {
                    AttackDirection::NegativeX
                },
            });
        }
        MatchTimeline::new(periods).unwrap()
    })
}

proptest! {
    /// Feeding a regular series back through regularization changes nothing:
    /// every grid instant already carries its own sample.
    #[test]
    fn regularizing_twice_is_the_same_as_once(
        session in sparse_session(),
        step in 1i64..250,
    ) {
        let once = regularize(&session, step).unwrap();
        let relaid = RawSession::from_samples(once.to_samples(), SessionMeta::default());
        let twice = regularize(&relaid, step).unwrap();

        prop_assert_eq!(once.len(), twice.len());
        for i in 0..once.len() {
            prop_assert_eq!(once.timestamp(i), twice.timestamp(i));
            prop_assert_eq!(once.frame(i), twice.frame(i));
            prop_assert!(twice.imputed(i).iter().all(|held| !held));
        }
    }

    /// The held positions agree with a literal backward scan through the
    /// sample list, and the flags mark exactly the instants with no sample.
    #[test]
    fn held_values_match_a_scan_back_oracle(
        session in sparse_session(),
        step in 1i64..250,
    ) {
        let frames = regularize(&session, step).unwrap();
        for i in 0..frames.len() {
            let t = frames.timestamp(i);
            prop_assert_eq!(t, frames.start_ms + i as i64 * step);
            for (p, id) in frames.players.iter().enumerate() {
                let held = session
                    .samples
                    .iter()
                    .rev()
                    .find(|s| s.player == *id && s.timestamp_ms <= t)
                    .unwrap();
                prop_assert_eq!(frames.position(i, p), Point::new(held.x, held.y));
                let sampled_here = session
                    .samples
                    .iter()
                    .any(|s| s.player == *id && s.timestamp_ms == t);
                prop_assert_eq!(frames.imputed(i)[p], !sampled_here);
            }
        }
    }

    /// Clipping keeps exactly the samples whose timestamp falls inside some
    /// period, in their original order.
    #[test]
    fn clipping_agrees_with_period_membership(
        session in sparse_session(),
        timeline in timeline(),
    ) {
        let expected: Vec<PositionSample> = session
            .samples
            .iter()
            .filter(|s| timeline.contains(s.timestamp_ms))
            .cloned()
            .collect();
        match clip_to_play(&session, &timeline) {
            Ok(clipped) => {
                prop_assert!(!expected.is_empty());
                prop_assert_eq!(clipped.samples.len(), expected.len());
                for (got, want) in clipped.samples.iter().zip(&expected) {
                    prop_assert_eq!(got.timestamp_ms, want.timestamp_ms);
                    prop_assert_eq!(got.player, want.player);
                    prop_assert_eq!(got.x, want.x);
                    prop_assert_eq!(got.y, want.y);
                }
            }
            Err(courtphase::Error::EmptyClip) => prop_assert!(expected.is_empty()),
            Err(other) => return Err(TestCaseError::fail(format!("unexpected error {other}"))),
        }
    }

    /// Pairwise distances are blind to rotation and translation of the
    /// whole lineup.
    #[test]
    fn features_are_invariant_under_rigid_motion(
        raw in prop::collection::vec((0.0..28.0f64, 0.0..15.0f64), 5),
        angle in 0.0..std::f64::consts::TAU,
        shift in (-50.0..50.0f64, -50.0..50.0f64),
    ) {
        let frame: Vec<Point> = raw.iter().map(|(x, y)| Point::new(*x, *y)).collect();
        let (sin, cos) = angle.sin_cos();
        let moved: Vec<Point> = frame
            .iter()
            .map(|p| Point::new(
                cos * p.x - sin * p.y + shift.0,
                sin * p.x + cos * p.y + shift.1,
            ))
            .collect();

        let before = pairwise_distances(&frame);
        let after = pairwise_distances(&moved);
        prop_assert_eq!(before.len(), 10);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!((b - a).abs() <= 1e-9 * b.max(1.0));
        }
    }

    /// Within- plus between-cluster deviance always reproduces the total,
    /// whatever the labeling.
    #[test]
    fn deviance_parts_sum_to_the_total(
        rows in prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 3), 2..40),
        k in 1usize..6,
        label_seed in any::<u64>(),
    ) {
        let n = rows.len();
        let dim = rows[0].len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        // Arbitrary but full labeling: the first k rows pin one member
        // per cluster, the rest scatter.
        let k = k.min(n);
        let labels: Vec<usize> = (0..n)
            .map(|i| {
                if i < k {
                    i
                } else {
                    ((label_seed.rotate_left(i as u32 % 64) >> 7) as usize) % k
                }
            })
            .collect();

        let parts = deviances_about_means(&data, dim, &labels, k).unwrap();
        let residual = (parts.within + parts.between - parts.total).abs();
        prop_assert!(residual <= 1e-9 * parts.total.max(1.0));
        if parts.total > 0.0 {
            let ratio = parts.ratio();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ratio));
        }
    }

    /// The same data, seed, and settings always fit to bitwise-identical
    /// models, and the fit reports a deviance that matches a recount.
    #[test]
    fn fitting_is_deterministic_and_self_consistent(
        rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 2), 6..30),
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= rows.len());
        let dim = rows[0].len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let cfg = KMeansConfig { seed, restarts: 3, ..KMeansConfig::default() };

        let first = kmeans(&data, dim, k, &cfg).unwrap();
        let second = kmeans(&data, dim, k, &cfg).unwrap();
        prop_assert_eq!(&first.labels, &second.labels);
        prop_assert_eq!(&first.centroids, &second.centroids);

        let mut seen = vec![false; k];
        for &label in &first.labels {
            prop_assert!(label < k);
            seen[label] = true;
        }
        prop_assert!(seen.iter().all(|s| *s), "a cluster came back empty");

        let recount = deviances(&data, dim, &first.labels, &first.centroids).unwrap();
        prop_assert!(
            (first.within_deviance - recount.within).abs()
                <= 1e-9 * recount.within.max(1.0)
        );
    }

    /// Lloyd iterations can stall in a local optimum but can never do
    /// better than exhaustive search over all partitions.
    #[test]
    fn fits_never_beat_exhaustive_search(
        rows in prop::collection::vec(prop::collection::vec(-20.0..20.0f64, 2), 4..9),
        k in 2usize..4,
    ) {
        prop_assume!(k <= rows.len());
        let dim = rows[0].len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let cfg = KMeansConfig { seed: 1, restarts: 10, ..KMeansConfig::default() };

        let fitted = kmeans(&data, dim, k, &cfg).unwrap();
        let (_, best) = enumerate_optimal_partition(&data, dim, k).unwrap();
        prop_assert!(fitted.within_deviance >= best - 1e-9 * best.max(1.0));
    }

    /// Relabeling clusters cannot change agreement: the index is exactly 1
    /// against any permutation of itself and is symmetric in its arguments.
    #[test]
    fn rand_index_ignores_label_names(
        (labels, other) in (2usize..50).prop_flat_map(|n| (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..4, n),
        )),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        prop_assume!(labels.iter().collect::<std::collections::HashSet<_>>().len() > 1);
        let renamed: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let self_score = adjusted_rand_index(&labels, &renamed).unwrap();
        prop_assert!((self_score - 1.0).abs() <= 1e-12);

        let ab = adjusted_rand_index(&labels, &other).unwrap();
        let ba = adjusted_rand_index(&other, &labels).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    /// Distances between points recovered from a planar configuration match
    /// the input distances, checked directly rather than via the reported
    /// stress.
    #[test]
    fn embedding_reproduces_planar_distances(
        raw in prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64), 5),
    ) {
        let points: Vec<Point> = raw.iter().map(|(x, y)| Point::new(*x, *y)).collect();
        let n = points.len();
        let mut distances = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                distances[i * n + j] = points[i].distance(&points[j]);
            }
        }

        let embedding = classical_mds(&distances, n).unwrap();
        prop_assert!(!embedding.non_euclidean);
        prop_assert!(embedding.eigenvalues[0] >= embedding.eigenvalues[1] - 1e-9);
        for i in 0..n {
            for j in 0..n {
                let got = embedding.coordinates[i].distance(&embedding.coordinates[j]);
                prop_assert!(
                    (got - distances[i * n + j]).abs() <= 1e-6,
                    "pair ({}, {}): {} vs {}", i, j, got, distances[i * n + j]
                );
            }
        }
        prop_assert!(embedding.stress_abs <= 1e-6);
    }

    /// Switch counts agree with a direct scan over consecutive labels; rows
    /// normalize to one exactly when the phase was ever left.
    #[test]
    fn transitions_match_a_direct_scan(
        labels in prop::collection::vec(0usize..5, 2..60),
        k in 5usize..6,
    ) {
        let t = transition_matrix(&labels, k).unwrap();
        let mut oracle = vec![0u64; k * k];
        for w in labels.windows(2) {
            if w[0] != w[1] {
                oracle[w[0] * k + w[1]] += 1;
            }
        }
        for from in 0..k {
            let mut row_total = 0u64;
            let mut row_prob = 0.0;
            for to in 0..k {
                prop_assert_eq!(t.count(from, to), oracle[from * k + to]);
                row_total += oracle[from * k + to];
                row_prob += t.probability(from, to);
            }
            prop_assert_eq!(t.count(from, from), 0);
            prop_assert_eq!(t.active_rows[from], row_total > 0);
            if row_total > 0 {
                prop_assert!((row_prob - 1.0).abs() <= 1e-12);
            } else {
                prop_assert_eq!(row_prob, 0.0);
            }
        }
        prop_assert_eq!(t.total_switches(), oracle.iter().sum::<u64>());
    }

    /// Reversing the attacking half flips every verdict, and flipping twice
    /// restores the original.
    #[test]
    fn offense_flips_with_the_attack_direction(
        raw in prop::collection::vec((0.0..28.0f64, 0.0..15.0f64), 1..40),
    ) {
        let court = CourtDims::default();
        let half = court.half_line_x();
        let centroids: Vec<Point> = raw
            .iter()
            .map(|(x, y)| Point::new(*x, *y))
            .filter(|p| (p.x - half).abs() > 1e-6)
            .collect();
        prop_assume!(!centroids.is_empty());
        let timestamps: Vec<i64> = (0..centroids.len() as i64).map(|i| i * 20).collect();
        let timeline = MatchTimeline::new(vec![Period {
            start_ms: 0,
            end_ms: timestamps.last().unwrap() + 1,
            attack: AttackDirection::PositiveX,
        }])
        .unwrap();
        let mirrored = timeline.with_flipped_attack();

        let flags = label_offense(&timestamps, &centroids, &timeline, &court).unwrap();
        let opposite = label_offense(&timestamps, &centroids, &mirrored, &court).unwrap();
        let back = label_offense(
            &timestamps,
            &centroids,
            &mirrored.with_flipped_attack(),
            &court,
        )
        .unwrap();

        for ((a, b), c) in flags.iter().zip(&opposite).zip(&back) {
            prop_assert_eq!(a.flipped(), *b);
            prop_assert_eq!(*a, *c);
            prop_assert!(matches!(a, OffenseFlag::Offensive | OffenseFlag::Defensive));
        }
    }
}
