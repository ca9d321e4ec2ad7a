//! Aggregation tables (JSON and CSV) and bar-chart SVGs.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::aggregate::{aggregate, Aggregate, Dimension, SummaryRow};
use super::metrics::Metric;
use super::records::ResultRecord;
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct Table<'a> {
    metric: Metric,
    group_by: Vec<&'static str>,
    excluded_configurations: usize,
    rows: &'a [SummaryRow],
}

/// Writes `summary_<metric>.{json,csv}`, `wins_<metric>.svg` and
/// `ranks_<metric>.svg` into `out_dir`; returns the files written.
pub fn write_report(
    records: &[ResultRecord],
    group_by: &[Dimension],
    metrics: &[Metric],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for &metric in metrics {
        let agg = aggregate(records, group_by, metric);
        let rows = agg.rows();
        let json_path = out_dir.join(format!("summary_{metric}.json"));
        let table = Table {
            metric,
            group_by: group_by.iter().map(|d| d.as_str()).collect(),
            excluded_configurations: agg.excluded,
            rows: &rows,
        };
        std::fs::write(&json_path, serde_json::to_string_pretty(&table)?)?;
        files.push(json_path);

        let csv_path = out_dir.join(format!("summary_{metric}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        files.push(csv_path);

        let wins = out_dir.join(format!("wins_{metric}.svg"));
        bar_chart(&agg, &wins, &format!("wins ({metric})"), |s| s.wins as f64)?;
        files.push(wins);
        let ranks = out_dir.join(format!("ranks_{metric}.svg"));
        bar_chart(&agg, &ranks, &format!("mean rank ({metric})"), |s| s.mean_rank)?;
        files.push(ranks);
    }
    Ok(files)
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::InvalidArgument(format!("plotting failed: {e}"))
}

fn bar_chart(
    agg: &Aggregate,
    path: &Path,
    title: &str,
    value: impl Fn(&super::aggregate::AlgoSummary) -> f64,
) -> Result<()> {
    let groups: Vec<String> = agg.groups.keys().map(|g| g.to_string()).collect();
    let n_groups = groups.len().max(1);
    let n_algs = agg.algorithms.len().max(1);
    let top = agg
        .groups
        .values()
        .flat_map(|a| a.values().map(&value))
        .fold(1.0f64, f64::max)
        * 1.1;

    let width = (160 + 90 * n_groups as u32).clamp(480, 2400);
    let root = SVGBackend::new(path, (width, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(-0.5f64..n_groups as f64 - 0.5, 0f64..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n_groups)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                groups.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .draw()
        .map_err(plot_err)?;

    let bar = 0.8 / n_algs as f64;
    for (ai, alg) in agg.algorithms.iter().enumerate() {
        let color = Palette99::pick(ai).to_rgba();
        let bars: Vec<Rectangle<(f64, f64)>> = agg
            .groups
            .values()
            .enumerate()
            .filter_map(|(gi, algs)| algs.get(alg).map(|s| (gi, value(s))))
            .map(|(gi, v)| {
                let x0 = gi as f64 - 0.4 + ai as f64 * bar;
                Rectangle::new([(x0, 0.0), (x0 + bar * 0.9, v)], color.filled())
            })
            .collect();
        chart
            .draw_series(bars)
            .map_err(plot_err)?
            .label(alg.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
