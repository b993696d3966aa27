use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::io::write_atomic;
use crate::result::{PlotKind, ScenarioResult, Series};
use crate::LabError;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Writes `<series>.svg` and `<series>.csv` for every series in `result`.
pub fn emit_plots(result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    let mut written = Vec::new();
    for series in &result.series {
        let csv_path = dir.join(format!("{}.csv", series.name));
        write_atomic(&csv_path, series_csv(series).as_bytes())?;
        written.push(csv_path);
        let svg_path = dir.join(format!("{}.svg", series.name));
        let svg = render(series).map_err(|e| LabError::Plot(format!("{}: {e}", series.name)))?;
        write_atomic(&svg_path, svg.as_bytes())?;
        written.push(svg_path);
    }
    Ok(written)
}

fn series_csv(series: &Series) -> String {
    let mut out = String::from("line,x,y\n");
    for line in &series.lines {
        for (x, y) in &line.points {
            out.push_str(&format!("{},{x:?},{y:?}\n", line.label));
        }
    }
    out
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> Option<((f64, f64), (f64, f64))> {
    points
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .fold(None, |acc, (x, y)| match acc {
            None => Some(((x, x), (y, y))),
            Some(((x0, x1), (y0, y1))) => Some(((x0.min(x), x1.max(x)), (y0.min(y), y1.max(y)))),
        })
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn render(series: &Series) -> Result<String, Box<dyn std::error::Error>> {
    let log = matches!(series.kind, PlotKind::LogLog | PlotKind::Sweep);
    let transform = |(x, y): (f64, f64)| if log { (x.log10(), y.log10()) } else { (x, y) };
    let all = series.lines.iter().flat_map(|l| l.points.iter().copied().map(transform));
    let ((x0, x1), (y0, y1)) = bounds(all).unwrap_or(((0.0, 1.0), (0.0, 1.0)));
    let (xr, yr) = (padded((x0, x1)), padded((y0, y1)));

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 520)).into_drawing_area();
        root.fill(&WHITE)?;
        let title = series.annotation.as_deref().unwrap_or(&series.name);
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 18))
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)?;
        let (xl, yl) = if log {
            (format!("log10 {}", series.x_label), format!("log10 {}", series.y_label))
        } else {
            (series.x_label.clone(), series.y_label.clone())
        };
        chart.configure_mesh().x_desc(xl).y_desc(yl).draw()?;
        for (k, line) in series.lines.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = line
                .points
                .iter()
                .copied()
                .map(transform)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            let scatter = series.kind == PlotKind::LogLog && k == 0;
            if scatter {
                chart
                    .draw_series(pts.iter().map(|&p| Circle::new(p, 2, color.filled())))?
                    .label(line.label.clone())
                    .legend(move |(x, y)| Circle::new((x + 10, y), 3, color.filled()));
            } else {
                chart
                    .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))?
                    .label(line.label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
                if series.kind == PlotKind::Sweep {
                    chart.draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled())))?;
                }
            }
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()?;
        root.present()?;
    }
    Ok(svg)
}
