//! SVG figures regenerated from the files a run persisted.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use plotters::prelude::*;

use super::{ExperimentReport, SweepReport};
use crate::nn::Matrix;
use crate::{Error, Result};

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::State(format!("plotting: {e}"))
}

/// Projects rows onto their two leading principal components. Each
/// component's sign is fixed so that its largest-magnitude loading is positive.
pub fn pca_2d(points: &Matrix<f64>) -> Matrix<f64> {
    let (n, d) = (points.rows, points.cols);
    if n == 0 || d == 0 {
        return Matrix::new(n, 2, vec![0.0; 2 * n]);
    }
    let mut mean = vec![0.0; d];
    for row in points.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| points.row(i)[j] - mean[j]);
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = vec![0.0; 2 * n];
    for (k, &col) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(col).clone_owned();
        let lead = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if lead < 0.0 {
            v.neg_mut();
        }
        let proj = &centered * v;
        for i in 0..n {
            out[2 * i + k] = proj[i];
        }
    }
    Matrix::new(n, 2, out)
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5)..(hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad)..(hi + pad)
    }
}

fn line_chart(path: &Path, title: &str, x_desc: &str, series: &[(&str, Vec<(f64, f64)>)], log_x: bool) -> Result<()> {
    let xs: Vec<f64> = series.iter().flat_map(|(_, s)| s.iter().map(|p| p.0)).collect();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let colors = [BLUE, RED, GREEN, MAGENTA];
    let mut builder = ChartBuilder::on(&root);
    builder.caption(title, ("sans-serif", 20)).margin(12).x_label_area_size(36).y_label_area_size(48);
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart.configure_mesh().x_desc(x_desc).y_desc("score").draw().map_err(plot_err)?;
            for ((name, pts), color) in series.iter().zip(colors.iter().cycle()) {
                let color = *color;
                chart
                    .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                    .map_err(plot_err)?
                    .label(*name)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
                chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(plot_err)?;
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
        }};
    }
    if log_x && lo > 0.0 {
        draw!(builder.build_cartesian_2d((lo * 0.8..hi * 1.25).log_scale(), 0f64..1.05f64).map_err(plot_err)?);
    } else {
        draw!(builder.build_cartesian_2d(padded(lo, hi), 0f64..1.05f64).map_err(plot_err)?);
    }
    root.present().map_err(plot_err)
}

fn projection_chart(path: &Path, proj: &Matrix<f64>, labels: &[String]) -> Result<()> {
    let xs: Vec<f64> = (0..proj.rows).map(|i| proj.row(i)[0]).collect();
    let ys: Vec<f64> = (0..proj.rows).map(|i| proj.row(i)[1]).collect();
    let range = |v: &[f64]| padded(v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let root = SVGBackend::new(path, (640, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("embeddings (first two principal components)", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(range(&xs), range(&ys))
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("PC1").y_desc("PC2").draw().map_err(plot_err)?;
    let mut distinct: Vec<&String> = labels.iter().collect();
    distinct.sort();
    distinct.dedup();
    for (k, label) in distinct.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let pts: Vec<(f64, f64)> = (0..proj.rows).filter(|&i| &labels[i] == *label).map(|i| (xs[i], ys[i])).collect();
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 2, color.filled())))
            .map_err(plot_err)?
            .label(label.as_str())
            .legend(move |(x, y)| Circle::new((x + 8, y), 3, color.filled()));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn read_tsv(path: &Path) -> Option<String> {
    fs::read_to_string(path).ok().filter(|s| !s.trim().is_empty())
}

/// Writes `plots/windows.svg`, `plots/k_sensitivity.svg` and
/// `plots/projection.svg` for whatever inputs exist under `run_dir`.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let plots = run_dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut written = Vec::new();

    if let Ok(text) = fs::read_to_string(run_dir.join("reports/report.json")) {
        let report = ExperimentReport::from_json(&text)?;
        let w = &report.summary.windows;
        let pick = |f: fn(&crate::metrics::WindowReport) -> Option<f64>| -> Vec<(f64, f64)> {
            w.iter().filter_map(|r| f(r).map(|v| (r.window_index as f64, v))).collect()
        };
        let mut series = vec![("accuracy", pick(|r| Some(r.accuracy))), ("weighted F1", pick(|r| Some(r.weighted_f1))), ("F_out", pick(|r| r.f_out))];
        if !report.average_accuracy.is_empty() {
            series.push(("A_k", w.iter().zip(&report.average_accuracy).map(|(r, a)| (r.window_index as f64, *a)).collect()));
        }
        let path = plots.join("windows.svg");
        line_chart(&path, &format!("{} per window", report.protocol), "window", &series, false)?;
        written.push(path);
    }

    if let Ok(text) = fs::read_to_string(run_dir.join("reports/sweep.json")) {
        let sweep: SweepReport = serde_json::from_str(&text)?;
        let series = [
            ("accuracy", sweep.points.iter().map(|p| (p.k as f64, p.accuracy)).collect()),
            ("weighted F1", sweep.points.iter().map(|p| (p.k as f64, p.weighted_f1)).collect()),
            ("filter purity", sweep.points.iter().map(|p| (p.k as f64, p.filter_purity)).collect()),
        ];
        let path = plots.join("k_sensitivity.svg");
        line_chart(&path, "sensitivity to K", "K", &series, true)?;
        written.push(path);
    }

    match (read_tsv(&plots.join("embeddings.tsv")), fs::read_to_string(plots.join("embeddings_meta.tsv"))) {
        (Some(emb), Ok(meta)) => {
            let rows: Vec<Vec<f64>> = emb
                .lines()
                .map(|l| l.split('\t').map(|v| v.parse::<f64>().map_err(plot_err)).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            let labels: Vec<String> = meta.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap_or("?").to_owned()).collect();
            let d = rows.first().map_or(0, Vec::len);
            let m = Matrix::new(rows.len(), d, rows.into_iter().flatten().collect());
            let path = plots.join("projection.svg");
            projection_chart(&path, &pca_2d(&m), &labels)?;
            written.push(path);
        }
        _ => log::info!("no embeddings exported under {}; projection skipped", plots.display()),
    }
    Ok(written)
}
