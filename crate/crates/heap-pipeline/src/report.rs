//! CSV and SVG emission for metric reports and study comparison tables.

use std::path::Path;

use crate::evaluate::{CurvePair, MetricsReport};
use crate::study::StudyResult;
use crate::PipelineError;

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

fn curve_csv(pair: &CurvePair) -> String {
    let mut out = String::from("bin,generated,truth\n");
    for (i, (g, t)) in pair.generated.iter().zip(&pair.truth).enumerate() {
        out.push_str(&format!("{i},{g:.9e},{t:.9e}\n"));
    }
    out
}

/// Minimal two-series line plot; log-10 y axis when `log_y`.
fn curve_svg(pair: &CurvePair, title: &str, log_y: bool) -> String {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let map = |v: f64| if log_y { v.max(1e-300).log10() } else { v };
    let all: Vec<f64> = pair.generated.iter().chain(&pair.truth).map(|&v| map(v)).collect();
    let (ymin, ymax) = all
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let yspan = (ymax - ymin).max(1e-12);
    let n = pair.generated.len().max(2) as f64;
    let poly = |series: &[f64]| {
        series
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = pad + (w - 2.0 * pad) * i as f64 / (n - 1.0);
                let y = h - pad - (h - 2.0 * pad) * (map(v) - ymin) / yspan;
                format!("{x:.1},{y:.1}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
            "<polyline points=\"{truth}\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1.5\"/>\n",
            "<polyline points=\"{gen}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n",
            "<text x=\"{lx}\" y=\"36\" font-size=\"12\" fill=\"#444444\">truth</text>\n",
            "<text x=\"{lx}\" y=\"52\" font-size=\"12\" fill=\"#d62728\">generated</text>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        tx = w / 2.0,
        title = title,
        truth = poly(&pair.truth),
        gen = poly(&pair.generated),
        lx = w - 150.0,
    )
}

/// Writes the per-curve CSVs, the summary table, and SVG plots for one
/// evaluated rollout.
pub fn write_metrics_report(dir: impl AsRef<Path>, report: &MetricsReport) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;

    let families = [
        ("spatial_spectrum", &report.spatial, true),
        ("temporal_spectrum", &report.temporal, true),
        ("autocorrelation", &report.autocorr, false),
    ];
    for (name, pairs, log_y) in families {
        for (ch, pair) in ["n", "phi"].iter().zip(pairs.iter()) {
            write_file(&dir.join(format!("{name}_{ch}.csv")), &curve_csv(pair))?;
            write_file(
                &dir.join(format!("{name}_{ch}.svg")),
                &curve_svg(pair, &format!("{name} ({ch})"), log_y),
            )?;
        }
    }

    let e = &report.errors;
    let mut summary = String::from("metric,field,error\n");
    for (ch, i) in [("n", 0), ("phi", 1)] {
        summary.push_str(&format!("spatial_spectrum,{ch},{:.9e}\n", e.spatial[i]));
        summary.push_str(&format!("temporal_spectrum,{ch},{:.9e}\n", e.temporal[i]));
        summary.push_str(&format!("autocorrelation,{ch},{:.9e}\n", e.autocorr[i]));
    }
    summary.push_str(&format!("extrema,phi,{:.9e}\n", e.extrema));
    summary.push_str(&format!("worst_primary,both,{:.9e}\n", e.worst_primary()));
    summary.push_str(&format!(
        "extrema_counts,phi,\"gen {:.2}/{:.2} truth {:.2}/{:.2}\"\n",
        report.extrema_generated.mean_minima,
        report.extrema_generated.mean_maxima,
        report.extrema_truth.mean_minima,
        report.extrema_truth.mean_maxima,
    ));
    if let Some(step) = report.diverged_at {
        summary.push_str(&format!("diverged_at,.,{step}\n"));
    }
    summary.push_str(&format!("rollout_secs,.,{:.3}\n", report.rollout_secs));
    write_file(&dir.join("summary.csv"), &summary)
}

/// Machine-readable comparison table: per planned model, the best realization
/// and top-k statistics for each metric plus training cost.
pub fn study_summary_csv(result: &StudyResult) -> String {
    let mut out = String::from(
        "label,evaluated,best_seed,best_worst,best_spatial,best_temporal,best_autocorr,best_extrema,\
         topk_worst_mean,topk_worst_std,topk_spatial_mean,topk_spatial_std,\
         topk_temporal_mean,topk_temporal_std,topk_autocorr_mean,topk_autocorr_std,\
         topk_extrema_mean,topk_extrema_std,ae_train_secs,mean_pred_train_secs\n",
    );
    for entry in &result.entries {
        let evaluated = entry.outcomes.iter().filter(|o| o.worst.is_some()).count();
        let best = entry.best_outcome();
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
        let agg = |a: &Option<crate::study::Aggregate>| match a {
            Some(a) => format!("{:.6e},{:.6e}", a.mean, a.std),
            None => "-,-".into(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.1},{:.1}\n",
            entry.label,
            evaluated,
            best.map(|b| b.seed.to_string()).unwrap_or_else(|| "-".into()),
            opt(best.and_then(|b| b.worst)),
            opt(best.and_then(|b| b.errors.map(|e| e.spatial[0]))),
            opt(best.and_then(|b| b.errors.map(|e| e.temporal[0]))),
            opt(best.and_then(|b| b.errors.map(|e| e.autocorr[0]))),
            opt(best.and_then(|b| b.errors.map(|e| e.extrema))),
            agg(&entry.worst_agg),
            agg(&entry.spatial_agg),
            agg(&entry.temporal_agg),
            agg(&entry.autocorr_agg),
            agg(&entry.extrema_agg),
            entry.ae_train_secs,
            entry.mean_pred_train_secs,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_contains_both_series() {
        let pair = CurvePair { generated: vec![1.0, 2.0, 3.0], truth: vec![1.5, 1.8, 2.5] };
        let svg = curve_svg(&pair, "test", false);
        assert!(svg.contains("polyline"));
        assert!(svg.contains("generated"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn curve_csv_has_header_and_rows() {
        let pair = CurvePair { generated: vec![1.0, 2.0], truth: vec![3.0, 4.0] };
        let csv = curve_csv(&pair);
        assert!(csv.starts_with("bin,generated,truth\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
