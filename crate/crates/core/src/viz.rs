//! Standalone SVG rendering of cell heat maps and pie-chart lattices.
//!
//! Cells are drawn with `X` increasing rightward and `Y` increasing upward,
//! so row `Y = height - 1` is at the top. Output is a pure function of the
//! inputs: no timestamps, and every number is printed with fixed rules.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::FEATURE_NAMES;
use crate::som::CellStats;
use crate::trace::{format_time, SimKind, SimTrace, Snapshot};

/// Sequential ramp for heat maps, cold to hot.
pub const HEAT_RAMP: [(u8, u8, u8); 5] = [
    (0x31, 0x36, 0x95),
    (0x45, 0x75, 0xb4),
    (0xfe, 0xe0, 0x90),
    (0xf4, 0x6d, 0x43),
    (0xa5, 0x00, 0x26),
];
pub const EMPTY_FILL: &str = "#d9d9d9";

/// Fixed state colors: S blue, I red, R grey; C green, D orange.
pub const SIR_PALETTE: [&str; 3] = ["#4575b4", "#d73027", "#969696"];
pub const SPD_PALETTE: [&str; 2] = ["#1a9850", "#f46d43"];

pub fn palette(kind: SimKind) -> &'static [&'static str] {
    match kind {
        SimKind::Sir => &SIR_PALETTE,
        SimKind::Spd => &SPD_PALETTE,
    }
}

const HEAT_CELL: f64 = 36.0;
const PIE_CELL: f64 = 60.0;
const PIE_RADIUS: f64 = 26.0;

/// Ramp position in `[0, 1]`; a degenerate range maps to the hot end.
pub fn ramp_position(value: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((value - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Heat-map fill for `value` on a panel spanning `[min, max]`.
pub fn heat_color(value: f64, min: f64, max: f64) -> String {
    let t = ramp_position(value, min, max);
    let segments = (HEAT_RAMP.len() - 1) as f64;
    let pos = t * segments;
    let i = (pos.floor() as usize).min(HEAT_RAMP.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (HEAT_RAMP[i], HEAT_RAMP[i + 1]);
    let lerp = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(a.0, b.0),
        lerp(a.1, b.1),
        lerp(a.2, b.2)
    )
}

/// Coordinates with three decimals and no trailing zeros.
fn num(x: f64) -> String {
    let r = (x * 1000.0).round() / 1000.0;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

/// Legend labels: four significant digits.
fn label(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let digits = (3 - x.abs().log10().floor() as i32).clamp(0, 12) as usize;
    let s = format!("{x:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    writeln!(
        out,
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">
<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##,
        w = num(width),
        h = num(height)
    )
    .unwrap();
}

/// Heat-map panel set: cell counts first, then one panel per feature mean.
pub fn render_heatmaps(stats: &CellStats, title: &str) -> Result<String> {
    if stats.counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyRender("every cell is empty".into()));
    }
    let (w, h) = (stats.width, stats.height);
    let mut panels: Vec<(String, String, Vec<Option<f64>>)> = vec![(
        "count".into(),
        "nodes per cell".into(),
        stats
            .counts
            .iter()
            .map(|&c| (c > 0).then_some(c as f64))
            .collect(),
    )];
    for (f, name) in FEATURE_NAMES.iter().enumerate() {
        panels.push((name.to_string(), format!("mean {name}"), stats.component(f)));
    }

    let panel_w = w as f64 * HEAT_CELL + 60.0;
    let panel_h = h as f64 * HEAT_CELL + 90.0;
    let columns = 3;
    let rows = panels.len().div_ceil(columns);
    let mut out = String::new();
    svg_open(
        &mut out,
        columns as f64 * panel_w + 20.0,
        rows as f64 * panel_h + 40.0,
    );
    writeln!(
        out,
        r#"<text x="10" y="22" font-size="16">{}</text>"#,
        escape(title)
    )
    .unwrap();

    for (p, (key, caption, values)) in panels.iter().enumerate() {
        let ox = 10.0 + (p % columns) as f64 * panel_w;
        let oy = 34.0 + (p / columns) as f64 * panel_h;
        let populated: Vec<f64> = values.iter().flatten().copied().collect();
        let min = populated.iter().copied().fold(f64::INFINITY, f64::min);
        let max = populated.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        writeln!(
            out,
            r#"<g class="panel" data-panel="{key}" transform="translate({},{})">"#,
            num(ox),
            num(oy)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="30" y="14" font-size="13">{}</text>"#,
            escape(caption)
        )
        .unwrap();
        let gx = 30.0;
        let gy = 22.0;
        for (idx, v) in values.iter().enumerate() {
            let (x, y) = (idx % w, idx / w);
            let px = gx + x as f64 * HEAT_CELL;
            let py = gy + (h - 1 - y) as f64 * HEAT_CELL;
            match v {
                Some(v) => writeln!(
                    out,
                    r##"<rect class="cell" data-x="{x}" data-y="{y}" data-value="{v}" x="{}" y="{}" width="{s}" height="{s}" fill="{}" stroke="#ffffff"/>"##,
                    num(px),
                    num(py),
                    heat_color(*v, min, max),
                    s = num(HEAT_CELL)
                ),
                None => writeln!(
                    out,
                    r##"<rect class="cell empty" data-x="{x}" data-y="{y}" x="{}" y="{}" width="{s}" height="{s}" fill="{EMPTY_FILL}" stroke="#ffffff"/>"##,
                    num(px),
                    num(py),
                    s = num(HEAT_CELL)
                ),
            }
            .unwrap();
        }
        axes(&mut out, gx, gy, w, h, HEAT_CELL);

        // Legend: ramp swatches with min and max labels.
        let ly = gy + h as f64 * HEAT_CELL + 26.0;
        let steps = 20;
        let sw = (w as f64 * HEAT_CELL) / steps as f64;
        for s in 0..steps {
            let t = s as f64 / (steps - 1) as f64;
            writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="8" fill="{}"/>"#,
                num(gx + s as f64 * sw),
                num(ly),
                num(sw + 0.2),
                heat_color(t, 0.0, 1.0)
            )
            .unwrap();
        }
        let legend = if min == max {
            format!("min = max = {}", label(min))
        } else {
            String::new()
        };
        writeln!(
            out,
            r#"<text class="legend-min" x="{}" y="{}" font-size="10">{}</text>"#,
            num(gx),
            num(ly + 20.0),
            label(min)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text class="legend-max" x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#,
            num(gx + w as f64 * HEAT_CELL),
            num(ly + 20.0),
            label(max)
        )
        .unwrap();
        if !legend.is_empty() {
            writeln!(
                out,
                r#"<text class="legend-note" x="{}" y="{}" font-size="10">{}</text>"#,
                num(gx),
                num(ly + 32.0),
                legend
            )
            .unwrap();
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn axes(out: &mut String, gx: f64, gy: f64, w: usize, h: usize, cell: f64) {
    for x in 0..w {
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{x}</text>"#,
            num(gx + (x as f64 + 0.5) * cell),
            num(gy + h as f64 * cell + 12.0)
        )
        .unwrap();
    }
    for y in 0..h {
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y}</text>"#,
            num(gx - 4.0),
            num(gy + (h - 1 - y) as f64 * cell + cell / 2.0 + 3.0)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10">X &#8594;</text>"#,
        num(gx + w as f64 * cell + 4.0),
        num(gy + h as f64 * cell + 12.0)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">Y &#8593;</text>"#,
        num(gx - 4.0),
        num(gy - 2.0)
    )
    .unwrap();
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PieOptions {
    /// Scale each pie's radius by `sqrt(population / largest population)`.
    pub scale_by_population: bool,
}

/// One sector of a pie: `(state index, start angle, sweep angle)` in degrees,
/// clockwise from twelve o'clock.
pub fn pie_sectors(counts: &[usize]) -> Vec<(usize, f64, f64)> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut start = 0.0;
    let mut out = Vec::new();
    for (state, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let sweep = 360.0 * c as f64 / total as f64;
        out.push((state, start, sweep));
        start += sweep;
    }
    out
}

fn polar(cx: f64, cy: f64, r: f64, deg: f64) -> (f64, f64) {
    let rad = (deg - 90.0).to_radians();
    (cx + r * rad.cos(), cy + r * rad.sin())
}

/// The pie lattice for one snapshot as an SVG group (no document wrapper,
/// no legend). Shared by the single-snapshot and timeline renderers.
pub fn pie_lattice_group(
    snapshot: &Snapshot,
    kind: SimKind,
    width: usize,
    height: usize,
    options: &PieOptions,
) -> String {
    let colors = palette(kind);
    let states = kind.states();
    let max_pop = (0..snapshot.counts.len())
        .map(|c| snapshot.cell_total(c))
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    writeln!(
        out,
        r#"<g class="pie-lattice" data-t="{t}">
<text x="30" y="14" font-size="13">t = {t}</text>"#,
        t = format_time(snapshot.time)
    )
    .unwrap();
    let gx = 30.0;
    let gy = 22.0;
    writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#bdbdbd"/>"##,
        num(gx),
        num(gy),
        num(width as f64 * PIE_CELL),
        num(height as f64 * PIE_CELL)
    )
    .unwrap();
    for (cell, counts) in snapshot.counts.iter().enumerate() {
        let total = snapshot.cell_total(cell);
        if total == 0 {
            continue;
        }
        let (x, y) = (cell % width, cell / width);
        let cx = gx + (x as f64 + 0.5) * PIE_CELL;
        let cy = gy + ((height - 1 - y) as f64 + 0.5) * PIE_CELL;
        let r = if options.scale_by_population {
            PIE_RADIUS * (total as f64 / max_pop as f64).sqrt()
        } else {
            PIE_RADIUS
        };
        writeln!(
            out,
            r#"<g class="pie" data-x="{x}" data-y="{y}" data-n="{total}">"#
        )
        .unwrap();
        for (state, start, sweep) in pie_sectors(counts) {
            let common = format!(
                r#"class="sector" data-state="{}" data-angle="{sweep}" fill="{}""#,
                states[state], colors[state]
            );
            if counts[state] == total {
                writeln!(
                    out,
                    r#"<circle {common} cx="{}" cy="{}" r="{}"/>"#,
                    num(cx),
                    num(cy),
                    num(r)
                )
                .unwrap();
            } else {
                let (x0, y0) = polar(cx, cy, r, start);
                let (x1, y1) = polar(cx, cy, r, start + sweep);
                let large = u8::from(sweep > 180.0);
                writeln!(
                    out,
                    r#"<path {common} d="M {} {} L {} {} A {r} {r} 0 {large} 1 {} {} Z"/>"#,
                    num(cx),
                    num(cy),
                    num(x0),
                    num(y0),
                    num(x1),
                    num(y1),
                    r = num(r)
                )
                .unwrap();
            }
        }
        out.push_str("</g>\n");
    }
    axes(&mut out, gx, gy, width, height, PIE_CELL);
    out.push_str("</g>\n");
    out
}

fn pie_legend(out: &mut String, kind: SimKind, x: f64, y: f64) {
    writeln!(
        out,
        r#"<g class="legend" transform="translate({},{})">"#,
        num(x),
        num(y)
    )
    .unwrap();
    for (i, (state, color)) in kind.states().iter().zip(palette(kind)).enumerate() {
        let lx = i as f64 * 60.0;
        writeln!(
            out,
            r#"<rect x="{}" y="0" width="12" height="12" fill="{color}"/><text x="{}" y="10" font-size="11">{state}</text>"#,
            num(lx),
            num(lx + 16.0)
        )
        .unwrap();
    }
    out.push_str("</g>\n");
}

fn lattice_size(width: usize, height: usize) -> (f64, f64) {
    (
        width as f64 * PIE_CELL + 70.0,
        height as f64 * PIE_CELL + 50.0,
    )
}

/// Pie-chart lattice for a single snapshot.
pub fn render_pie_lattice(
    snapshot: &Snapshot,
    kind: SimKind,
    width: usize,
    height: usize,
    options: &PieOptions,
) -> String {
    let (pw, ph) = lattice_size(width, height);
    let mut out = String::new();
    svg_open(&mut out, pw + 20.0, ph + 40.0);
    out.push_str(r#"<g class="frame" transform="translate(10,10)">"#);
    out.push('\n');
    out.push_str(&pie_lattice_group(snapshot, kind, width, height, options));
    out.push_str("</g>\n");
    pie_legend(&mut out, kind, 40.0, ph + 14.0);
    out.push_str("</svg>\n");
    out
}

/// Sequence of pie lattices at the snapshots nearest to `times`, wrapped
/// into rows of `columns` panels, with one shared legend.
pub fn render_timeline(
    trace: &SimTrace,
    times: &[f64],
    columns: usize,
    options: &PieOptions,
) -> Result<String> {
    if times.is_empty() {
        return Err(Error::EmptyRender("no times selected".into()));
    }
    let columns = columns.max(1);
    let snaps: Vec<&Snapshot> = times
        .iter()
        .map(|&t| {
            trace
                .nearest(t)
                .ok_or_else(|| Error::EmptyRender("trace has no snapshots".into()))
        })
        .collect::<Result<_>>()?;
    let (pw, ph) = lattice_size(trace.width, trace.height);
    let cols = columns.min(snaps.len());
    let rows = snaps.len().div_ceil(columns);
    let mut out = String::new();
    svg_open(&mut out, cols as f64 * pw + 20.0, rows as f64 * ph + 40.0);
    for (i, snap) in snaps.iter().enumerate() {
        writeln!(
            out,
            r#"<g class="frame" transform="translate({},{})">"#,
            num(10.0 + (i % columns) as f64 * pw),
            num(10.0 + (i / columns) as f64 * ph)
        )
        .unwrap();
        out.push_str(&pie_lattice_group(
            snap,
            trace.kind,
            trace.width,
            trace.height,
            options,
        ));
        out.push_str("</g>\n");
    }
    pie_legend(&mut out, trace.kind, 40.0, rows as f64 * ph + 14.0);
    out.push_str("</svg>\n");
    Ok(out)
}
