//! Threshold-free evaluation of attack results and report emission.

use std::fmt::Write as _;
use std::path::Path;

use crate::attack::{AttackResult, AttackVariant};
use crate::codec;
use crate::error::{Error, Result};
use crate::scoring::ScoreVariant;

/// FPR levels reported when none are requested.
pub const DEFAULT_FPR_LEVELS: [f64; 2] = [0.01, 0.001];

/// ROC curve from `(0, 0)` to `(1, 1)`, one point per distinct score.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` pairs, both non-decreasing.
    pub points: Vec<(f64, f64)>,
    /// `thresholds[k]` is the score at which `points[k]` is reached; the first is `+inf`.
    pub thresholds: Vec<f64>,
}

/// Sweep thresholds from the highest score down; equal scores enter together,
/// so a tie group holding both classes becomes one diagonal segment.
pub fn roc_curve(result: &AttackResult) -> Result<RocCurve> {
    let positives = result.membership_truth.iter().filter(|&&b| b).count();
    let negatives = result.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(
            "attack result",
            format!("ROC needs both classes ({positives} members, {negatives} non-members)"),
        ));
    }
    let mut order: Vec<usize> = (0..result.len()).collect();
    order.sort_by(|&a, &b| result.scores[b].total_cmp(&result.scores[a]));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let score = result.scores[order[k]];
        while k < order.len() && result.scores[order[k]] == score {
            if result.membership_truth[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / n, tp as f64 / p));
        thresholds.push(score);
    }
    Ok(RocCurve { points, thresholds })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Highest TPR reachable with FPR at most `fpr_level`, interpolating along segments.
pub fn tpr_at_fpr(curve: &RocCurve, fpr_level: f64) -> Result<f64> {
    if !(fpr_level > 0.0 && fpr_level < 1.0) {
        return Err(Error::invalid("fpr level", format!("{fpr_level} not in (0, 1)")));
    }
    let mut best: f64 = 0.0;
    for w in curve.points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x1 <= fpr_level {
            best = best.max(y1);
        } else {
            if x0 <= fpr_level {
                best = best.max(y0 + (fpr_level - x0) / (x1 - x0) * (y1 - y0));
            }
            break;
        }
    }
    Ok(best)
}

/// Best `(tpr + 1 - fpr) / 2` over the curve's operating points.
pub fn balanced_accuracy(curve: &RocCurve) -> f64 {
    curve
        .points
        .iter()
        .map(|&(fpr, tpr)| (tpr + 1.0 - fpr) / 2.0)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    /// `(fpr level, tpr)` in requested order.
    pub tpr_at_fpr: Vec<(f64, f64)>,
    pub balanced_accuracy: f64,
}

pub fn metrics(result: &AttackResult, fpr_levels: &[f64]) -> Result<MetricsReport> {
    let curve = roc_curve(result)?;
    let tpr = fpr_levels
        .iter()
        .map(|&l| Ok((l, tpr_at_fpr(&curve, l)?)))
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        auc: auc(&curve),
        tpr_at_fpr: tpr,
        balanced_accuracy: balanced_accuracy(&curve),
    })
}

/// One cell of the results grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub attack: AttackVariant,
    pub score: ScoreVariant,
    pub metrics: MetricsReport,
}

/// Evaluate every result and order the rows attack-major, score-minor.
pub fn evaluate_grid(results: &[AttackResult], fpr_levels: &[f64]) -> Result<Vec<GridRow>> {
    if results.is_empty() {
        return Err(Error::invalid("report", "no attack results"));
    }
    let mut rows = results
        .iter()
        .map(|r| {
            Ok(GridRow {
                attack: r.variant,
                score: r.score_variant,
                metrics: metrics(r, fpr_levels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.attack, r.score));
    if let Some(w) = rows.windows(2).find(|w| (w[0].attack, w[0].score) == (w[1].attack, w[1].score)) {
        return Err(Error::invalid(
            "report",
            format!("duplicate result for attack {} / score {}", w[0].attack, w[0].score),
        ));
    }
    Ok(rows)
}

/// CSV with header `attack,score_variant,auc,tpr@<level>...,balanced_acc`.
/// Numbers use Rust's shortest round-trip formatting.
pub fn render_csv(rows: &[GridRow], fpr_levels: &[f64]) -> String {
    let mut out = String::from("attack,score_variant,auc");
    for l in fpr_levels {
        let _ = write!(out, ",tpr@{l}");
    }
    out.push_str(",balanced_acc\n");
    for row in rows {
        let _ = write!(out, "{},{},{}", row.attack, row.score, row.metrics.auc);
        for (_, t) in &row.metrics.tpr_at_fpr {
            let _ = write!(out, ",{t}");
        }
        let _ = writeln!(out, ",{}", row.metrics.balanced_accuracy);
    }
    out
}

fn attack_color(v: AttackVariant) -> &'static str {
    match v {
        AttackVariant::Online => "#1b2f6b",
        AttackVariant::OnlineFixedVariance => "#f28e2b",
        AttackVariant::Offline => "#9a9a9a",
        AttackVariant::OfflineFixedVariance => "#d4a72c",
        AttackVariant::GlobalThreshold => "#4e9ad6",
    }
}

/// Grouped bar chart of AUC: one group per score variant, one bar per attack variant,
/// with a dashed chance line at 0.5. Pure function of `rows`.
pub fn render_svg(rows: &[GridRow]) -> String {
    const W: f64 = 820.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 70.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let y_of = |v: f64| TOP + plot_h * (1.0 - v.clamp(0.0, 1.0));

    let mut scores: Vec<ScoreVariant> = rows.iter().map(|r| r.score).collect();
    scores.sort();
    scores.dedup();
    let mut attacks: Vec<AttackVariant> = rows.iter().map(|r| r.attack).collect();
    attacks.sort();
    attacks.dedup();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">AUC by attack and score variant</text>"#,
        LEFT + plot_w / 2.0
    );
    for k in 0..=4 {
        let v = k as f64 * 0.25;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e4e4e4"/><text x="{:.1}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }

    let group_w = plot_w / scores.len().max(1) as f64;
    let bar_w = group_w * 0.8 / attacks.len().max(1) as f64;
    for (g, score) in scores.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w + group_w * 0.1;
        for (b, attack) in attacks.iter().enumerate() {
            let Some(row) = rows.iter().find(|r| r.score == *score && r.attack == *attack) else {
                continue;
            };
            let auc = row.metrics.auc;
            let y = y_of(auc);
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-attack="{attack}" data-score="{score}" data-auc="{auc}" x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                gx + b as f64 * bar_w,
                bar_w * 0.92,
                TOP + plot_h - y,
                attack_color(*attack)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + (g as f64 + 0.5) * group_w,
            TOP + plot_h + 20.0,
            xml_escape(score.label())
        );
    }

    let chance = y_of(0.5);
    let _ = writeln!(
        s,
        r##"<line class="chance" x1="{LEFT}" y1="{chance:.2}" x2="{:.2}" y2="{chance:.2}" stroke="#c0392b" stroke-dasharray="6 4"/>"##,
        LEFT + plot_w
    );
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="#333"/><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333"/>"##,
        TOP + plot_h,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">AUC</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (b, attack) in attacks.iter().enumerate() {
        let y = TOP + 10.0 + b as f64 * 22.0;
        let x = W - RIGHT + 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="14" height="14" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            attack_color(*attack),
            x + 20.0,
            y + 11.0,
            xml_escape(attack.label())
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write the CSV and SVG reports for a grid of results.
pub fn emit_report(
    results: &[AttackResult],
    fpr_levels: &[f64],
    csv_path: Option<&Path>,
    svg_path: Option<&Path>,
) -> Result<Vec<GridRow>> {
    let rows = evaluate_grid(results, fpr_levels)?;
    if let Some(p) = csv_path {
        codec::write_file(p, render_csv(&rows, fpr_levels).as_bytes())?;
    }
    if let Some(p) = svg_path {
        codec::write_file(p, render_svg(&rows).as_bytes())?;
    }
    Ok(rows)
}
