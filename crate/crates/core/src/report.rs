//! Tabular and SVG report output.
//!
//! Every SVG here is rendered from the same rows as its sibling CSV: data
//! points carry their CSV values verbatim in `data-x` / `data-y`
//! attributes, and histogram bars carry their bin counts.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complexity::{EntropyDistribution, EntropySample, MAX_ENTROPY_BITS};
use crate::error::{Error, Result};

pub const CANVAS_WIDTH: u32 = 800;
pub const CANVAS_HEIGHT: u32 = 600;

const LEFT: f64 = 90.0;
const RIGHT: f64 = 760.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 520.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    Linear,
    Log10,
}

impl AxisScale {
    pub fn name(self) -> &'static str {
        match self {
            AxisScale::Linear => "linear",
            AxisScale::Log10 => "log10",
        }
    }

    fn transform(self, v: f64) -> Option<f64> {
        match self {
            AxisScale::Linear => v.is_finite().then_some(v),
            AxisScale::Log10 => (v > 0.0 && v.is_finite()).then(|| v.log10()),
        }
    }
}

fn csv_bytes<F>(header: &[&str], mut rows: F) -> Result<Vec<u8>>
where
    F: FnMut(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    rows(&mut wtr)?;
    wtr.into_inner()
        .map_err(|e| Error::Validation(format!("cannot finish CSV: {e}")))
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// `image_id,entropy_bits`
pub fn samples_csv(samples: &[EntropySample]) -> Result<Vec<u8>> {
    csv_bytes(&["image_id", "entropy_bits"], |w| {
        for s in samples {
            w.write_record([s.image_id.as_str(), &s.entropy_bits.to_string()])?;
        }
        Ok(())
    })
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<EntropySample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "entropy_bits"] {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: "expected header image_id,entropy_bits".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let raw = rec.get(1).unwrap_or("");
        let entropy_bits: f64 = raw.parse().map_err(|_| Error::Row {
            path: path.to_path_buf(),
            row: line,
            message: format!("cannot parse '{raw}' as entropy"),
        })?;
        if !(0.0..=MAX_ENTROPY_BITS).contains(&entropy_bits) {
            return Err(Error::Row {
                path: path.to_path_buf(),
                row: line,
                message: format!("entropy {entropy_bits} outside [0, 8] bits"),
            });
        }
        out.push(EntropySample {
            image_id: rec.get(0).unwrap_or("").to_string(),
            entropy_bits,
        });
    }
    Ok(out)
}

/// `bin,lower_bits,upper_bits,count`
pub fn histogram_csv(dist: &EntropyDistribution) -> Result<Vec<u8>> {
    let b = dist.binning();
    csv_bytes(&["bin", "lower_bits", "upper_bits", "count"], |w| {
        for (k, c) in dist.counts().iter().enumerate() {
            w.write_record([
                k.to_string(),
                b.edge(k).to_string(),
                b.edge(k + 1).to_string(),
                c.to_string(),
            ])?;
        }
        Ok(())
    })
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let mult = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    mult * mag
}

fn format_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

/// Axis over transformed coordinates with tick positions and labels.
struct Axis {
    scale: AxisScale,
    lo: f64,
    hi: f64,
    ticks: Vec<(f64, String)>,
}

impl Axis {
    fn fit(scale: AxisScale, values: &[f64]) -> Axis {
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        match scale {
            AxisScale::Log10 => {
                let (mut lo, mut hi) = (lo.floor(), hi.ceil());
                if lo == hi {
                    lo -= 1.0;
                    hi += 1.0;
                }
                let ticks = (lo as i64..=hi as i64)
                    .map(|k| (k as f64, format!("1e{k}")))
                    .collect();
                Axis {
                    scale,
                    lo,
                    hi,
                    ticks,
                }
            }
            AxisScale::Linear => {
                if lo == hi {
                    lo -= 0.5;
                    hi += 0.5;
                }
                let step = nice_step(hi - lo);
                let lo = (lo / step).floor() * step;
                let hi = (hi / step).ceil() * step;
                Axis::linear(lo, hi, step)
            }
        }
    }

    fn linear(lo: f64, hi: f64, step: f64) -> Axis {
        let n = ((hi - lo) / step).round() as i64;
        let ticks = (0..=n)
            .map(|i| {
                let v = lo + i as f64 * step;
                (v, format_tick(v, step))
            })
            .collect();
        Axis {
            scale: AxisScale::Linear,
            lo,
            hi,
            ticks,
        }
    }

    fn frac(&self, t: f64) -> f64 {
        (t - self.lo) / (self.hi - self.lo)
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn svg_open(out: &mut String, kind: &str, title: &str, attrs: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" viewBox="0 0 {CANVAS_WIDTH} {CANVAS_HEIGHT}" data-kind="{kind}"{attrs}>"#
    );
    let _ = writeln!(out, "<title>{}</title>", xml_escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        px((LEFT + RIGHT) / 2.0),
        xml_escape(title)
    );
}

fn draw_axes(out: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str) {
    let _ = writeln!(out, r#"<g id="x-axis" data-scale="{}">"#, x.scale.name());
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}" stroke="black"/>"#
    );
    for (t, label) in &x.ticks {
        let cx = px(LEFT + x.frac(*t) * (RIGHT - LEFT));
        let _ = writeln!(
            out,
            r#"<line class="tick" x1="{cx}" y1="{BOTTOM}" x2="{cx}" y2="{}" stroke="black"/><text class="tick-label" x="{cx}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>"#,
            BOTTOM + 5.0,
            BOTTOM + 20.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        px((LEFT + RIGHT) / 2.0),
        BOTTOM + 50.0,
        xml_escape(x_label)
    );
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g id="y-axis" data-scale="{}">"#, y.scale.name());
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}" stroke="black"/>"#
    );
    for (t, label) in &y.ticks {
        let cy = px(BOTTOM - y.frac(*t) * (BOTTOM - TOP));
        let _ = writeln!(
            out,
            r#"<line class="tick" x1="{}" y1="{cy}" x2="{LEFT}" y2="{cy}" stroke="black"/><text class="tick-label" x="{}" y="{cy}" text-anchor="end" dominant-baseline="middle" font-family="sans-serif" font-size="11">{label}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="25" y="{0}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 25 {0})">{1}</text>"#,
        px((TOP + BOTTOM) / 2.0),
        xml_escape(y_label)
    );
    let _ = writeln!(out, "</g>");
}

/// Render a 64-bin (or other) entropy histogram as SVG.
pub fn histogram_svg(dist: &EntropyDistribution, title: &str) -> String {
    let max = dist.counts().iter().copied().max().unwrap_or(0).max(1) as f64;
    let x = Axis::linear(0.0, MAX_ENTROPY_BITS, 1.0);
    let step = nice_step(max).max(1.0);
    let y = Axis::linear(0.0, (max / step).ceil() * step, step);

    let mut out = String::new();
    svg_open(
        &mut out,
        "entropy-hist",
        title,
        &format!(
            r#" data-bins="{}" data-samples="{}""#,
            dist.binning().bins(),
            dist.sample_count()
        ),
    );
    draw_axes(&mut out, &x, &y, "entropy (bits)", "image count");
    let _ = writeln!(out, r#"<g id="bars">"#);
    let b = dist.binning();
    for (k, &count) in dist.counts().iter().enumerate() {
        let x0 = LEFT + x.frac(b.edge(k)) * (RIGHT - LEFT);
        let x1 = LEFT + x.frac(b.edge(k + 1)) * (RIGHT - LEFT);
        let h = y.frac(count as f64) * (BOTTOM - TOP);
        let _ = writeln!(
            out,
            r##"<rect class="bar" data-bin="{k}" data-count="{count}" x="{}" y="{}" width="{}" height="{}" fill="#4c72b0"/>"##,
            px(x0),
            px(BOTTOM - h),
            px(x1 - x0),
            px(h)
        );
    }
    let _ = writeln!(out, "</g>\n</svg>");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub label: String,
    pub dataset: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPlot {
    pub kind: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: AxisScale,
    pub y_scale: AxisScale,
    pub points: Vec<ScatterPoint>,
}

impl ScatterPlot {
    /// `label,dataset,x,y`
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(&["label", "dataset", "x", "y"], |w| {
            for p in &self.points {
                w.write_record([
                    p.label.as_str(),
                    p.dataset.as_str(),
                    &p.x.to_string(),
                    &p.y.to_string(),
                ])?;
            }
            Ok(())
        })
    }

    /// Points that cannot be placed on the chosen axes (non-positive on a log axis).
    pub fn unplottable(&self) -> usize {
        self.points.len() - self.plottable().count()
    }

    fn plottable(&self) -> impl Iterator<Item = (&ScatterPoint, f64, f64)> {
        self.points.iter().filter_map(|p| {
            Some((
                p,
                self.x_scale.transform(p.x)?,
                self.y_scale.transform(p.y)?,
            ))
        })
    }

    /// Datasets in first-appearance order; each gets its own marker.
    pub fn datasets(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for p in &self.points {
            if !seen.contains(&p.dataset.as_str()) {
                seen.push(&p.dataset);
            }
        }
        seen
    }

    pub fn to_svg(&self) -> String {
        let placed: Vec<_> = self.plottable().collect();
        let xs: Vec<f64> = placed.iter().map(|&(_, x, _)| x).collect();
        let ys: Vec<f64> = placed.iter().map(|&(_, _, y)| y).collect();
        let x_axis = Axis::fit(self.x_scale, &xs);
        let y_axis = Axis::fit(self.y_scale, &ys);
        let datasets = self.datasets();

        let mut out = String::new();
        svg_open(
            &mut out,
            &self.kind,
            &self.title,
            &format!(
                r#" data-x-scale="{}" data-y-scale="{}" data-points="{}" data-omitted="{}""#,
                self.x_scale.name(),
                self.y_scale.name(),
                placed.len(),
                self.points.len() - placed.len()
            ),
        );
        draw_axes(&mut out, &x_axis, &y_axis, &self.x_label, &self.y_label);

        let _ = writeln!(out, r#"<g id="points">"#);
        for (p, tx, ty) in &placed {
            let cx = LEFT + x_axis.frac(*tx) * (RIGHT - LEFT);
            let cy = BOTTOM - y_axis.frac(*ty) * (BOTTOM - TOP);
            let group = datasets.iter().position(|d| *d == p.dataset).unwrap_or(0);
            let _ = writeln!(
                out,
                r#"<g class="point" data-label="{}" data-dataset="{}" data-x="{}" data-y="{}">{}<text class="point-label" x="{}" y="{}" font-family="sans-serif" font-size="10">{}</text></g>"#,
                xml_escape(&p.label),
                xml_escape(&p.dataset),
                p.x,
                p.y,
                marker(group, cx, cy),
                px(cx + 6.0),
                px(cy - 6.0),
                xml_escape(&p.label)
            );
        }
        let _ = writeln!(out, "</g>");

        let _ = writeln!(out, r#"<g id="legend">"#);
        for (i, d) in datasets.iter().enumerate() {
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<g class="legend-entry" data-dataset="{}">{}<text x="{}" y="{}" dominant-baseline="middle" font-family="sans-serif" font-size="11">{}</text></g>"#,
                xml_escape(d),
                marker(i, RIGHT - 110.0, ly),
                px(RIGHT - 100.0),
                px(ly),
                xml_escape(d)
            );
        }
        let _ = writeln!(out, "</g>\n</svg>");
        out
    }
}

fn marker(group: usize, cx: f64, cy: f64) -> String {
    let colour = PALETTE[group % PALETTE.len()];
    let r = 4.5;
    match group % 4 {
        0 => format!(
            r#"<circle class="marker" cx="{}" cy="{}" r="{r}" fill="{colour}"/>"#,
            px(cx),
            px(cy)
        ),
        1 => format!(
            r#"<rect class="marker" x="{}" y="{}" width="{}" height="{}" fill="{colour}"/>"#,
            px(cx - r),
            px(cy - r),
            px(2.0 * r),
            px(2.0 * r)
        ),
        2 => format!(
            r#"<polygon class="marker" points="{},{} {},{} {},{}" fill="{colour}"/>"#,
            px(cx),
            px(cy - r),
            px(cx + r),
            px(cy + r),
            px(cx - r),
            px(cy + r)
        ),
        _ => format!(
            r#"<polygon class="marker" points="{},{} {},{} {},{} {},{}" fill="{colour}"/>"#,
            px(cx),
            px(cy - r),
            px(cx + r),
            px(cy),
            px(cx),
            px(cy + r),
            px(cx - r),
            px(cy)
        ),
    }
}
