//! Minimal SVG charts.

use plotters::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl PlotSpec {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new() }
    }

    pub fn with(mut self, label: &str, style: Style, points: Vec<(f64, f64)>) -> Self {
        let points = points.into_iter().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        self.series.push(Series { label: label.into(), points, style });
        self
    }
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    if !(hi > lo) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        return (c - 1.0)..(c + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad)..(hi + pad)
}

pub fn render_svg(spec: &PlotSpec) -> Result<String, Box<dyn std::error::Error>> {
    let all = spec.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err("no finite points to plot".into());
    }
    let colors = [BLUE, RED, BLACK, GREEN, MAGENTA];
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 460)).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(&spec.title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(64)
            .build_cartesian_2d(padded(x0, x1), padded(y0, y1))?;
        chart.configure_mesh().x_desc(&spec.x_label).y_desc(&spec.y_label).draw()?;
        for (k, s) in spec.series.iter().enumerate() {
            let color = colors[k % colors.len()];
            let drawn = match s.style {
                Style::Line => chart.draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))?,
                Style::Points => {
                    chart.draw_series(s.points.iter().map(|&p| Circle::new(p, 2, color.filled())))?
                }
            };
            drawn.label(&s.label).legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 14, y + 4)], color.filled()));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
    }
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_a_chart() {
        let spec = PlotSpec::new("t", "x", "y")
            .with("a", Style::Line, vec![(0.0, 1.0), (1.0, 2.0)])
            .with("b", Style::Points, vec![(0.5, 1.5)]);
        let svg = render_svg(&spec).unwrap();
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn empty_chart_is_an_error() {
        assert!(render_svg(&PlotSpec::new("t", "x", "y")).is_err());
    }
}
