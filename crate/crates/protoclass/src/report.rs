//! CSV tables and SVG figures from stored sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{format_err, Error, Result};
use crate::eval::SweepRecord;

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    /// SNR levels that get a confusion heatmap per model and channel.
    pub heatmap_snrs: Vec<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            heatmap_snrs: vec![0.0, 30.0],
        }
    }
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    format_err(format!("plotting failed: {e}"))
}

/// Writes `<model>.csv` per sweep, `accuracy_vs_snr.svg` with one line per
/// (model, channel) and confusion heatmaps. Nothing is written if the input
/// is empty or any sweep has no points. Returns the written paths.
pub fn write_report(sweeps: &[SweepRecord], out_dir: &Path, opts: &ReportOptions) -> Result<Vec<PathBuf>> {
    if sweeps.is_empty() {
        return Err(protoclass_core::Error::InsufficientData("report needs at least one sweep".into()).into());
    }
    if let Some(s) = sweeps.iter().find(|s| s.points.is_empty()) {
        return Err(protoclass_core::Error::InsufficientData(format!("sweep {:?} has no points", s.model)).into());
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for s in sweeps {
        let p = out_dir.join(format!("{}.csv", file_stem(&s.model)));
        fs::write(&p, s.to_csv()).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    let p = out_dir.join("accuracy_vs_snr.svg");
    accuracy_plot(sweeps, &p)?;
    written.push(p);
    for s in sweeps {
        for channel in s.channels() {
            for &snr in &opts.heatmap_snrs {
                if let Some(point) = s.points.iter().find(|p| p.channel == channel && p.snr_db == snr) {
                    let p = out_dir.join(format!(
                        "confusion_{}_{}_{}dB.svg",
                        file_stem(&s.model),
                        file_stem(&channel),
                        snr
                    ));
                    heatmap(&s.class_names, &point.confusion, &format!("{} / {channel} / {snr} dB", s.model), &p)?;
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}

fn accuracy_plot(sweeps: &[SweepRecord], path: &Path) -> Result<()> {
    let (lo, hi) = sweeps
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.snr_db))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let root = SVGBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Accuracy vs SNR", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(55)
        .build_cartesian_2d(lo..hi, 0.0..1.0)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("SNR (dB)")
        .y_desc("Accuracy")
        .draw()
        .map_err(plot_err)?;
    let mut k = 0;
    for s in sweeps {
        for channel in s.channels() {
            let color = PALETTE[k % PALETTE.len()];
            k += 1;
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|p| p.channel == channel)
                .map(|p| (p.snr_db, p.accuracy))
                .collect();
            chart
                .draw_series(LineSeries::new(pts, color.stroke_width(2)))
                .map_err(plot_err)?
                .label(format!("{} / {channel}", s.model))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn heatmap(classes: &[String], counts: &[Vec<usize>], title: &str, path: &Path) -> Result<()> {
    let n = classes.len();
    if counts.len() != n || counts.iter().any(|r| r.len() != n) {
        return Err(format_err(format!("{title}: confusion matrix does not match {n} classes")));
    }
    let root = SVGBackend::new(path, (560, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0..n, 0..n)
        .map_err(plot_err)?;
    let label = |v: &usize| classes.get(*v).cloned().unwrap_or_default();
    chart
        .configure_mesh()
        .disable_mesh()
        .x_desc("Predicted")
        .y_desc("True")
        .x_labels(n)
        .y_labels(n)
        .x_label_formatter(&label)
        .y_label_formatter(&label)
        .draw()
        .map_err(plot_err)?;
    for (t, row) in counts.iter().enumerate() {
        let support: usize = row.iter().sum();
        for (p, &c) in row.iter().enumerate() {
            let rate = if support > 0 { c as f64 / support as f64 } else { 0.0 };
            let shade = (255.0 * (1.0 - rate)) as u8;
            // truth rows run top to bottom
            let y = n - 1 - t;
            chart
                .draw_series(std::iter::once(Rectangle::new(
                    [(p, y), (p + 1, y + 1)],
                    RGBColor(shade, shade, 255).filled(),
                )))
                .map_err(plot_err)?;
        }
    }
    root.present().map_err(plot_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::PointRecord;

    fn record() -> SweepRecord {
        SweepRecord {
            model: "m".into(),
            timestamp_unix: 0,
            class_names: vec!["b".into(), "g".into()],
            points: (-6..=6)
                .map(|k| PointRecord {
                    channel: "none".into(),
                    snr_db: 5.0 * k as f64,
                    trials: 4,
                    accuracy: 0.5 + 0.05 * k as f64,
                    confusion: vec![vec![2, 0], vec![1, 1]],
                    undetected: vec![0, 0],
                })
                .collect(),
        }
    }

    #[test]
    fn writes_csv_and_figures() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&[record()], dir.path(), &ReportOptions::default()).unwrap();
        assert_eq!(files.len(), 4);
        let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert_eq!(csv.lines().count(), 14);
        let svg = fs::read_to_string(dir.path().join("accuracy_vs_snr.svg")).unwrap();
        assert!(svg.contains("SNR (dB)") && svg.contains("Accuracy"));
    }

    #[test]
    fn empty_input_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(write_report(&[], &out, &ReportOptions::default()).is_err());
        let mut r = record();
        r.points.clear();
        assert!(write_report(&[r], &out, &ReportOptions::default()).is_err());
        assert!(!out.exists());
    }
}
