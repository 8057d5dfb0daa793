//! Static SVG renderings of the report artifacts: per-cluster shape
//! maps, per-cluster distance profiles, and the switch heatmap. The
//! plots carry no data of their own; everything in them is re-derivable
//! from the CSV artifacts. Output is a deterministic function of the
//! input, so repeated runs produce identical bytes.

use std::fmt::Write;

use crate::analysis::{MdsEmbedding, TransitionMatrix};
use crate::ingest::PlayerId;

const FONT: &str = "font-family=\"sans-serif\"";

fn header(out: &mut String, width: u32, height: u32, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" {FONT}>{title}</text>\n",
        width / 2
    );
}

/// Scatter of the five embedded player positions for one cluster.
pub fn mds_scatter(players: &[PlayerId], embedding: &MdsEmbedding, cluster: usize) -> String {
    let (w, h, margin) = (420.0f64, 420.0f64, 48.0f64);
    let mut out = String::new();
    header(
        &mut out,
        w as u32,
        h as u32,
        &format!("cluster {cluster}: mean shape (2-D scaling)"),
    );

    let mut radius = 1.0f64;
    for p in &embedding.coordinates {
        radius = radius.max(p.x.abs()).max(p.y.abs());
    }
    radius *= 1.15;
    let scale = (w / 2.0 - margin) / radius;
    let cx = w / 2.0;
    let cy = h / 2.0 + 10.0;
    let sx = |x: f64| cx + x * scale;
    // SVG y grows downward; flip so positive y plots upward.
    let sy = |y: f64| cy - y * scale;

    let _ = write!(
        out,
        "<line x1=\"{m}\" y1=\"{cy:.1}\" x2=\"{e:.1}\" y2=\"{cy:.1}\" stroke=\"#ccc\"/>\n\
         <line x1=\"{cx:.1}\" y1=\"{t}\" x2=\"{cx:.1}\" y2=\"{b:.1}\" stroke=\"#ccc\"/>\n",
        m = margin,
        e = w - margin,
        t = margin,
        b = h - margin + 10.0,
    );
    for (player, p) in players.iter().zip(&embedding.coordinates) {
        let _ = write!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"7\" fill=\"#33658a\"/>\n\
             <text x=\"{x:.2}\" y=\"{ty:.2}\" text-anchor=\"middle\" font-size=\"12\" {FONT}>p{player}</text>\n",
            x = sx(p.x),
            y = sy(p.y),
            ty = sy(p.y) - 11.0,
        );
    }
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#555\" {FONT}>\
         eigenvalues {:.3} / {:.3}, stress {:.2e}</text>\n</svg>\n",
        margin,
        h - 12.0,
        embedding.eigenvalues[0],
        embedding.eigenvalues[1],
        embedding.stress_abs,
    );
    out
}

/// Bar chart of one cluster's mean pair distances minus the match-wide
/// means: bars below zero mean the pair plays tighter than average.
pub fn profile_bars(pair_labels: &[String], deviations: &[f64], cluster: usize) -> String {
    let (w, h) = (560.0f64, 320.0f64);
    let (left, right, top, bottom) = (52.0f64, 16.0f64, 40.0f64, 46.0f64);
    let mut out = String::new();
    header(
        &mut out,
        w as u32,
        h as u32,
        &format!("cluster {cluster}: pair distances vs match average"),
    );

    let mut peak = 0.5f64;
    for d in deviations {
        peak = peak.max(d.abs());
    }
    peak *= 1.1;
    let plot_h = h - top - bottom;
    let zero_y = top + plot_h / 2.0;
    let y_scale = plot_h / 2.0 / peak;
    let n = deviations.len().max(1) as f64;
    let slot = (w - left - right) / n;
    let bar_w = slot * 0.62;

    let _ = write!(
        out,
        "<line x1=\"{left}\" y1=\"{zero_y:.1}\" x2=\"{:.1}\" y2=\"{zero_y:.1}\" stroke=\"#888\"/>\n\
         <text x=\"14\" y=\"{:.1}\" font-size=\"10\" {FONT}>+{peak:.2}</text>\n\
         <text x=\"14\" y=\"{:.1}\" font-size=\"10\" {FONT}>-{peak:.2}</text>\n",
        w - right,
        top + 4.0,
        top + plot_h + 4.0,
    );
    for (i, (label, d)) in pair_labels.iter().zip(deviations).enumerate() {
        let x = left + i as f64 * slot + (slot - bar_w) / 2.0;
        let bar_h = d.abs() * y_scale;
        let (y, fill) = if *d >= 0.0 {
            (zero_y - bar_h, "#d1495b")
        } else {
            (zero_y, "#33658a")
        };
        let _ = write!(
            out,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{bar_h:.2}\" fill=\"{fill}\"/>\n\
             <text x=\"{tx:.2}\" y=\"{ty:.1}\" text-anchor=\"middle\" font-size=\"9\" {FONT}>{label}</text>\n",
            tx = x + bar_w / 2.0,
            ty = h - bottom + 14.0,
        );
    }
    out.push_str("</svg>\n");
    out
}

/// k x k heatmap of switch probabilities; cell (row, column) is the
/// probability the next phase is `column` given `row` just ended.
pub fn transition_heatmap(t: &TransitionMatrix) -> String {
    let cell = 46.0f64;
    let (left, top) = (64.0f64, 56.0f64);
    let w = left + t.k as f64 * cell + 20.0;
    let h = top + t.k as f64 * cell + 24.0;
    let mut out = String::new();
    header(
        &mut out,
        w as u32,
        h as u32,
        "switch probabilities (row: from, column: to)",
    );

    for i in 0..t.k {
        let _ = write!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\" {FONT}>to {i}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\" {FONT}>from {i}</text>\n",
            left + (i as f64 + 0.5) * cell,
            top - 8.0,
            left - 6.0,
            top + (i as f64 + 0.5) * cell + 4.0,
        );
    }
    for from in 0..t.k {
        for to in 0..t.k {
            let x = left + to as f64 * cell;
            let y = top + from as f64 * cell;
            if from == to {
                let _ = writeln!(
                    out,
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" \
                     fill=\"#eee\" stroke=\"#bbb\"/>"
                );
                continue;
            }
            let p = t.probability(from, to);
            let _ = write!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" \
                 fill=\"#33658a\" fill-opacity=\"{p:.3}\" stroke=\"#bbb\"/>\n\
                 <text x=\"{tx:.1}\" y=\"{ty:.1}\" text-anchor=\"middle\" font-size=\"10\" {FONT}>{p:.2}</text>\n",
                tx = x + cell / 2.0,
                ty = y + cell / 2.0 + 3.0,
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
