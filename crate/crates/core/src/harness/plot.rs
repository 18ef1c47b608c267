//! SVG line charts rendered from metrics CSV files.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use super::metrics::{MetricsTable, TextTable};
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: &str = "file,series,points,x_first,x_last,y_first,y_last,y_mean,y_min,y_max";

/// One named curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// How a CSV schema maps onto a chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChartSpec {
    pub x: &'static str,
    pub y: &'static str,
    /// Columns whose joint value names a series.
    pub group: &'static [&'static str],
    /// Keep only rows where this column equals this value.
    pub filter: Option<(&'static str, &'static str)>,
}

/// Chart layout for the known CSV schemas, recognised by header. Per-image
/// and summary tables have none.
fn spec_for(header: &[String]) -> Option<ChartSpec> {
    let has = |c: &str| header.iter().any(|h| h == c);
    let spec = |x, y, group, filter| Some(ChartSpec { x, y, group, filter });
    if has("val_psnr_db") {
        spec("epoch", "val_psnr_db", &[], None)
    } else if has("mode") && has("psnr_db") && has("epoch") {
        spec("epoch", "psnr_db", &["mode"], None)
    } else if has("mean_qoe") && has("slot") {
        spec("slot", "mean_qoe", &["scheme"], Some(("link", "0")))
    } else if has("final_window_qoe") {
        spec("seed", "final_window_qoe", &["scheme"], None)
    } else if has("accuracy") && has("max_rounds") && !has("image") {
        spec("max_rounds", "accuracy", &["source_size", "patch_size"], None)
    } else if has("accuracy") && has("rho") {
        spec("snr_db", "accuracy", &["rho"], None)
    } else if has("variant") && has("psnr_db") {
        spec("bits", "psnr_db", &["variant"], None)
    } else {
        None
    }
}

/// Extracts series from `table`; `None` if the schema has no chart.
pub fn series_from(table: &TextTable) -> Result<Option<(ChartSpec, Vec<Series>)>> {
    let Some(spec) = spec_for(&table.header) else {
        return Ok(None);
    };
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| Error::Contract(format!("missing column {name:?}")))
    };
    let (xi, yi) = (col(spec.x)?, col(spec.y)?);
    let groups = spec.group.iter().map(|g| col(g)).collect::<Result<Vec<_>>>()?;
    let filter = spec.filter.map(|(c, v)| col(c).map(|i| (i, v))).transpose()?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in &table.records {
        if let Some((i, v)) = filter {
            if rec[i] != v {
                continue;
            }
        }
        let name = if groups.is_empty() {
            spec.y.to_owned()
        } else {
            groups
                .iter()
                .zip(spec.group)
                .map(|(&i, g)| format!("{g}={}", rec[i]))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Contract(format!("non-numeric value {s:?}: {e}")))
        };
        let point = (parse(&rec[xi])?, parse(&rec[yi])?);
        if !series.contains_key(&name) {
            order.push(name.clone());
        }
        series.entry(name).or_default().push(point);
    }
    let out = order
        .into_iter()
        .map(|name| Series {
            points: series.remove(&name).unwrap_or_default(),
            name,
        })
        .collect();
    Ok(Some((spec, out)))
}

/// Trailing moving average over `window` points; `window <= 1` is a no-op.
pub fn smooth(points: &[(f64, f64)], window: usize) -> Vec<(f64, f64)> {
    if window <= 1 {
        return points.to_vec();
    }
    let mut sum = 0.0;
    points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            sum += y;
            if i >= window {
                sum -= points[i - window].1;
            }
            (x, sum / (i + 1).min(window) as f64)
        })
        .collect()
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Renders `series` as an SVG line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (y0, y1) = bounds(all().map(|p| p.1));
    let plot_err = |e: &dyn std::fmt::Display| Error::Contract(format!("plot rendering: {e}"));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| plot_err(&e))?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(y_label)
            .draw()
            .map_err(|e| plot_err(&e))?;
        for (i, s) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(|e| plot_err(&e))?
                .label(s.name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        if series.len() > 1 {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| plot_err(&e))?;
        }
        root.present().map_err(|e| plot_err(&e))?;
    }
    Ok(svg)
}

/// Plots a CSV as `svg_path` and appends its per-series summary rows.
/// Returns `false`, writing nothing, for files without a chart schema.
pub fn plot_csv(path: &Path, svg_path: &Path, smoothing: usize, summary: &mut MetricsTable) -> Result<bool> {
    let table = TextTable::read(path)?;
    let Some((spec, series)) = series_from(&table)? else {
        return Ok(false);
    };
    let series: Vec<Series> = series
        .into_iter()
        .map(|s| Series {
            points: if spec.x == "slot" { smooth(&s.points, smoothing) } else { s.points },
            name: s.name,
        })
        .collect();
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    for s in &series {
        let ys = s.points.iter().map(|p| p.1);
        let n = s.points.len();
        let (first, last) = (s.points.first().copied(), s.points.last().copied());
        let (xf, yf) = first.unwrap_or((f64::NAN, f64::NAN));
        let (xl, yl) = last.unwrap_or((f64::NAN, f64::NAN));
        summary.push(crate::row![
            file.as_str(),
            s.name.as_str(),
            n,
            xf,
            xl,
            yf,
            yl,
            ys.clone().sum::<f64>() / n.max(1) as f64,
            ys.clone().fold(f64::INFINITY, f64::min),
            ys.fold(f64::NEG_INFINITY, f64::max),
        ])?;
    }
    let stem = path.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let svg = line_chart(&stem, spec.x, spec.y, &series)?;
    std::fs::write(svg_path, svg).map_err(|e| Error::io(svg_path, e))?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, i as f64)).collect();
        let s = smooth(&pts, 2);
        assert_eq!(s.iter().map(|p| p.1).collect::<Vec<_>>(), vec![0.0, 0.5, 1.5, 2.5, 3.5]);
        assert_eq!(smooth(&pts, 1), pts);
    }

    #[test]
    fn drift_rows_group_by_mode() {
        let table = TextTable {
            header: "mode,epoch,snr_db,mse,psnr_db".split(',').map(String::from).collect(),
            records: vec![
                vec!["none".into(), "0".into(), "21".into(), "0.01".into(), "20".into()],
                vec!["none".into(), "1".into(), "21".into(), "0.01".into(), "20".into()],
                vec!["finetune_real".into(), "0".into(), "21".into(), "0.01".into(), "20".into()],
            ],
        };
        let (_, series) = series_from(&table).unwrap().unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].name, "mode=none");
        assert_eq!(series[0].points, vec![(0.0, 20.0), (1.0, 20.0)]);
    }

    #[test]
    fn chart_is_svg() {
        let s = Series {
            name: "a".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0)],
        };
        let svg = line_chart("t", "x", "y", &[s.clone(), s]).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}
