//! Static SVG plots of a logged run.
//!
//! - `path`: reference, tractor and trailer traces over obstacle discs with
//!   their safety circles.
//! - `inputs`: each input channel against time with its limit lines.
//! - `barriers`: every logged barrier value against time with the zero line.
//! - `footprint`: the body rectangles swept along the run.

use std::fmt::Write;
use std::str::FromStr;

use crate::dynamics::{footprint, trailer_pose, OrientedRect};
use crate::logio::TrajectoryFile;
use crate::{Error, RobotKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Path,
    Inputs,
    Barriers,
    Footprint,
}

impl FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "path" => Ok(Self::Path),
            "inputs" => Ok(Self::Inputs),
            "barriers" => Ok(Self::Barriers),
            "footprint" => Ok(Self::Footprint),
            other => Err(Error::InvalidParameter(format!(
                "unknown plot kind '{other}' (expected path, inputs, barriers or footprint)"
            ))),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];
const TRACTOR: &str = "#1f77b4";
const TRAILER: &str = "#ff7f0e";

#[derive(Debug, Clone, Copy)]
struct Bounds {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Bounds {
    fn empty() -> Self {
        Self {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        }
    }

    fn include(&mut self, x: f64, y: f64) {
        if x.is_finite() && y.is_finite() {
            self.x0 = self.x0.min(x);
            self.x1 = self.x1.max(x);
            self.y0 = self.y0.min(y);
            self.y1 = self.y1.max(y);
        }
    }

    fn include_y(&mut self, y: f64) {
        if y.is_finite() {
            self.y0 = self.y0.min(y);
            self.y1 = self.y1.max(y);
        }
    }

    /// Falls back to the unit box and pads degenerate or tight ranges.
    fn finish(mut self, pad: f64) -> Self {
        if !(self.x0 <= self.x1) {
            (self.x0, self.x1) = (0.0, 1.0);
        }
        if !(self.y0 <= self.y1) {
            (self.y0, self.y1) = (0.0, 1.0);
        }
        for (lo, hi) in [(&mut self.x0, &mut self.x1), (&mut self.y0, &mut self.y1)] {
            let span = (*hi - *lo).max(1e-9 * lo.abs().max(1.0));
            let extra = if *hi - *lo <= 0.0 { 0.5 * lo.abs().max(1.0) } else { pad * span };
            *lo -= extra;
            *hi += extra;
        }
        self
    }

    /// Widens one axis so both axes share a scale in a `w` by `h` panel.
    fn equal_aspect(mut self, w: f64, h: f64) -> Self {
        let sx = (self.x1 - self.x0) / w;
        let sy = (self.y1 - self.y0) / h;
        if sx > sy {
            let grow = (sx * h - (self.y1 - self.y0)) / 2.0;
            self.y0 -= grow;
            self.y1 += grow;
        } else {
            let grow = (sy * w - (self.x1 - self.x0)) / 2.0;
            self.x0 -= grow;
            self.x1 += grow;
        }
        self
    }
}

/// A plotting area at pixel offset (`left`, `top`).
struct Panel {
    left: f64,
    top: f64,
    w: f64,
    h: f64,
    b: Bounds,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.b.x0) / (self.b.x1 - self.b.x0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.top + (self.b.y1 - y) / (self.b.y1 - self.b.y0) * self.h
    }

    fn scale(&self) -> f64 {
        self.w / (self.b.x1 - self.b.x0)
    }

    fn axes(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, t, w, h) = (self.left, self.top, self.w, self.h);
        let _ = writeln!(
            svg,
            r##"<g class="axes"><rect x="{l:.2}" y="{t:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#333"/>"##
        );
        for v in ticks(self.b.x0, self.b.x1) {
            let x = self.px(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##,
                t + h,
                t + h + 4.0,
                t + h + 16.0,
                tick_label(v)
            );
        }
        for v in ticks(self.b.y0, self.b.y1) {
            let y = self.py(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"##,
                l - 4.0,
                l - 6.0,
                y + 4.0,
                tick_label(v)
            );
        }
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"##,
            l + w / 2.0,
            t - 8.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"##,
            l + w / 2.0,
            t + h + 34.0,
            escape(xlabel)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text></g>"##,
            l - 44.0,
            t + h / 2.0,
            l - 44.0,
            t + h / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&self, svg: &mut String, pts: &[(f64, f64)], color: &str, extra: &str) {
        let mut d = String::new();
        for &(x, y) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(d, "{:.2},{:.2} ", self.px(x), self.py(y));
        }
        if d.is_empty() {
            return;
        }
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" {extra}/>"##,
            d.trim_end()
        );
    }

    fn hline(&self, svg: &mut String, y: f64, color: &str, extra: &str) {
        let py = self.py(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="{color}" {extra}/>"##,
            self.left,
            self.left + self.w
        );
    }

    fn circle(&self, svg: &mut String, x: f64, y: f64, r: f64, style: &str) {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" {style}/>"##,
            self.px(x),
            self.py(y),
            r * self.scale()
        );
    }

    fn rect(&self, svg: &mut String, r: &OrientedRect, style: &str) {
        let pts: Vec<String> = r
            .corners()
            .iter()
            .map(|c| format!("{:.2},{:.2}", self.px(c.x), self.py(c.y)))
            .collect();
        let _ = writeln!(svg, r##"<polygon points="{}" {style}/>"##, pts.join(" "));
    }

    fn clip_open(&self, svg: &mut String, id: &str) {
        let _ = writeln!(
            svg,
            r##"<clipPath id="{id}"><rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/></clipPath><g clip-path="url(#{id})">"##,
            self.left, self.top, self.w, self.h
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let v = if v.abs() < 1e-12 { 0.0 } else { v };
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn legend(svg: &mut String, x: f64, y: f64, items: &[(&str, &str)]) {
    for (i, (label, color)) in items.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"##,
            x + 18.0,
            x + 22.0,
            yy + 4.0,
            escape(label)
        );
    }
}

pub fn render(file: &TrajectoryFile, kind: PlotKind) -> String {
    match kind {
        PlotKind::Path => render_path(file),
        PlotKind::Inputs => render_inputs(file),
        PlotKind::Barriers => render_barriers(file),
        PlotKind::Footprint => render_footprint(file),
    }
}

fn world_bounds(file: &TrajectoryFile, w: f64, h: f64) -> Bounds {
    let mut b = Bounds::empty();
    for p in &file.meta.reference {
        b.include(p[0], p[1]);
    }
    for e in &file.log.entries {
        let f = footprint(&e.state, &file.meta.geometry);
        for c in f.tractor.corners().iter().chain(f.trailer.corners().iter()) {
            b.include(c.x, c.y);
        }
    }
    let ring = file.meta.d1.max(file.meta.d2);
    for o in &file.meta.obstacles {
        let r = o.radius.max(ring);
        b.include(o.x - r, o.y - r);
        b.include(o.x + r, o.y + r);
    }
    b.finish(0.05).equal_aspect(w, h)
}

fn draw_obstacles(svg: &mut String, panel: &Panel, file: &TrajectoryFile) {
    for o in &file.meta.obstacles {
        panel.circle(svg, o.x, o.y, o.radius.max(0.05), r##"fill="#555" fill-opacity="0.7" class="obstacle""##);
        if file.meta.d1 > 0.0 {
            panel.circle(svg, o.x, o.y, file.meta.d1, r##"fill="none" stroke="#1f77b4" stroke-dasharray="6 4""##);
        }
        if file.meta.d2 > 0.0 {
            panel.circle(svg, o.x, o.y, file.meta.d2, r##"fill="none" stroke="#ff7f0e" stroke-dasharray="2 3""##);
        }
    }
}

fn world_panel(file: &TrajectoryFile) -> (Panel, f64, f64) {
    let (w, h) = (760.0, 560.0);
    let panel = Panel {
        left: 70.0,
        top: 40.0,
        w,
        h,
        b: world_bounds(file, w, h),
    };
    (panel, 960.0, 660.0)
}

fn render_path(file: &TrajectoryFile) -> String {
    let (panel, width, height) = world_panel(file);
    let mut svg = String::new();
    panel.axes(&mut svg, &format!("{} path", file.meta.scenario), "x [m]", "y [m]");
    panel.clip_open(&mut svg, "plot-area");
    draw_obstacles(&mut svg, &panel, file);
    let reference: Vec<(f64, f64)> = file.meta.reference.iter().map(|p| (p[0], p[1])).collect();
    panel.polyline(&mut svg, &reference, "#888", r#"stroke-dasharray="8 4" class="reference""#);
    let tractor: Vec<(f64, f64)> = file.log.entries.iter().map(|e| (e.state.x1, e.state.y1)).collect();
    let trailer: Vec<(f64, f64)> = file
        .log
        .entries
        .iter()
        .map(|e| {
            let (x, y, _) = trailer_pose(&e.state, &file.meta.geometry);
            (x, y)
        })
        .collect();
    panel.polyline(&mut svg, &tractor, TRACTOR, r#"class="tractor""#);
    panel.polyline(&mut svg, &trailer, TRAILER, r#"class="trailer""#);
    svg.push_str("</g>\n");
    legend(&mut svg, width - 110.0, 50.0, &[("ref", "#888"), ("tractor", TRACTOR), ("trailer", TRAILER)]);
    document(width, height, &svg)
}

fn render_footprint(file: &TrajectoryFile) -> String {
    let (panel, width, height) = world_panel(file);
    let mut svg = String::new();
    panel.axes(&mut svg, &format!("{} footprint", file.meta.scenario), "x [m]", "y [m]");
    panel.clip_open(&mut svg, "plot-area");
    for e in &file.log.entries {
        let f = footprint(&e.state, &file.meta.geometry);
        panel.rect(&mut svg, &f.trailer, &format!(r#"fill="{TRAILER}" fill-opacity="0.08" stroke="{TRAILER}" stroke-opacity="0.35" stroke-width="0.5""#));
        panel.rect(&mut svg, &f.tractor, &format!(r#"fill="{TRACTOR}" fill-opacity="0.08" stroke="{TRACTOR}" stroke-opacity="0.35" stroke-width="0.5""#));
    }
    draw_obstacles(&mut svg, &panel, file);
    svg.push_str("</g>\n");
    legend(&mut svg, width - 110.0, 50.0, &[("tractor", TRACTOR), ("trailer", TRAILER)]);
    document(width, height, &svg)
}

fn render_inputs(file: &TrajectoryFile) -> String {
    let lim = &file.meta.limits;
    let channels: Vec<(usize, &str, f64)> = match file.meta.robot {
        RobotKind::Msttr => vec![
            (0, "jerk [m/s^3]", lim.jerk_max),
            (1, "tractor angular velocity [rad/s]", lim.omega1_max),
            (2, "trailer angular velocity [rad/s]", lim.omega2_max),
        ],
        RobotKind::Ssttr => vec![
            (0, "acceleration [m/s^2]", lim.a_max),
            (1, "tractor angular velocity [rad/s]", lim.omega1_max),
        ],
    };
    let (pw, ph) = (300.0, 300.0);
    let width = 90.0 + channels.len() as f64 * (pw + 80.0);
    let height = 420.0;
    let mut svg = String::new();
    for (i, (slot, label, limit)) in channels.iter().enumerate() {
        let get = |u: &crate::InputVector| [u.jerk, u.omega1, u.omega2][*slot];
        let nom: Vec<(f64, f64)> = file.log.entries.iter().map(|e| (e.t, get(&e.u_nominal))).collect();
        let safe: Vec<(f64, f64)> = file.log.entries.iter().map(|e| (e.t, get(&e.u_safe))).collect();
        let mut b = Bounds::empty();
        for &(t, v) in nom.iter().chain(&safe) {
            b.include(t, v);
        }
        b.include_y(*limit);
        b.include_y(-*limit);
        if file.log.entries.is_empty() {
            b.include(0.0, *limit);
            b.include(1.0, -*limit);
        }
        let panel = Panel {
            left: 90.0 + i as f64 * (pw + 80.0),
            top: 50.0,
            w: pw,
            h: ph,
            b: b.finish(0.08),
        };
        panel.axes(&mut svg, label, "t [s]", label);
        for sign in [1.0, -1.0] {
            let v = sign * limit;
            panel.hline(&mut svg, v, "#c00", &format!(r#"stroke-dasharray="5 3" class="limit" data-value="{v}""#));
        }
        panel.polyline(&mut svg, &nom, "#888", r#"stroke-dasharray="4 2" class="nominal""#);
        panel.polyline(&mut svg, &safe, TRACTOR, r#"class="safe""#);
    }
    legend(&mut svg, 90.0, height - 30.0, &[("nominal", "#888"), ("safe", TRACTOR)]);
    document(width, height, &svg)
}

fn render_barriers(file: &TrajectoryFile) -> String {
    let n = file.log.num_obstacles;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for k in 0..n {
        series.push((
            format!("h1_{k}"),
            file.log.entries.iter().map(|e| (e.t, e.h_tractor[k])).collect(),
        ));
    }
    for k in 0..n {
        series.push((
            format!("h2_{k}"),
            file.log.entries.iter().map(|e| (e.t, e.h_trailer[k])).collect(),
        ));
    }
    let mut b = Bounds::empty();
    for (_, pts) in &series {
        for &(t, v) in pts {
            b.include(t, v);
        }
    }
    b.include_y(0.0);
    let (w, h) = (760.0, 420.0);
    let panel = Panel {
        left: 90.0,
        top: 40.0,
        w,
        h,
        b: b.finish(0.05),
    };
    let mut svg = String::new();
    panel.axes(&mut svg, &format!("{} barrier values", file.meta.scenario), "t [s]", "h");
    panel.hline(&mut svg, 0.0, "#000", r#"stroke-width="1.2" class="zero""#);
    let mut items = Vec::new();
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if name.starts_with("h2") { r#"stroke-dasharray="6 3" "# } else { "" };
        panel.polyline(&mut svg, pts, color, &format!(r#"{dash}class="barrier" data-name="{name}""#));
        items.push((name.as_str(), color));
    }
    legend(&mut svg, 90.0 + w + 20.0, 50.0, &items);
    document(90.0 + w + 110.0, h + 110.0, &svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logio::LogMeta;
    use crate::types::{InputVector, LogEntry, StateVector};
    use crate::{Obstacle, TrajectoryLog};

    fn sample(n_steps: usize) -> TrajectoryFile {
        let mut log = TrajectoryLog::new(RobotKind::Msttr, 0.2, 1);
        for i in 0..n_steps {
            let t = i as f64 * 0.2;
            log.push(LogEntry {
                t,
                state: StateVector {
                    x1: 3.0 * t,
                    v: 3.0,
                    ..Default::default()
                },
                u_nominal: InputVector::new(0.1, 0.0, 0.0),
                u_safe: InputVector::new(0.1, 0.2, -0.1),
                h_tractor: vec![10.0 - t],
                h_trailer: vec![20.0 - t],
                filter_active: false,
                mpc_cost: 0.0,
                min_clearance: 1.0,
            })
            .unwrap();
        }
        let mut meta = LogMeta::bare(&log);
        meta.obstacles = vec![Obstacle::new(5.0, 3.0, 1.0)];
        meta.d1 = 4.6;
        meta.d2 = 3.0;
        TrajectoryFile { meta, log }
    }

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed svg")
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("footprint".parse::<PlotKind>().unwrap(), PlotKind::Footprint);
        assert!("heatmap".parse::<PlotKind>().is_err());
    }

    #[test]
    fn empty_log_gives_axes_only() {
        let mut f = sample(0);
        f.meta.obstacles.clear();
        for kind in [PlotKind::Path, PlotKind::Inputs, PlotKind::Barriers, PlotKind::Footprint] {
            let svg = render(&f, kind);
            let doc = parse(&svg);
            assert!(doc.descendants().any(|n| n.attribute("class") == Some("axes")));
            assert!(!doc.descendants().any(|n| n.has_tag_name("polyline")), "{kind:?}");
        }
    }

    #[test]
    fn input_limit_lines_match_limits() {
        let svg = render(&sample(10), PlotKind::Inputs);
        let doc = parse(&svg);
        let mut values: Vec<f64> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("limit"))
            .map(|n| n.attribute("data-value").unwrap().parse().unwrap())
            .collect();
        values.sort_by(f64::total_cmp);
        assert_eq!(values, [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5]);
    }

    #[test]
    fn barrier_traces_stay_above_zero_line() {
        let svg = render(&sample(20), PlotKind::Barriers);
        let doc = parse(&svg);
        let zero: f64 = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("zero"))
            .and_then(|n| n.attribute("y1"))
            .unwrap()
            .parse()
            .unwrap();
        let lines: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("barrier")).collect();
        assert_eq!(lines.len(), 2);
        for l in lines {
            for p in l.attribute("points").unwrap().split(' ') {
                let y: f64 = p.split(',').nth(1).unwrap().parse().unwrap();
                assert!(y < zero);
            }
        }
    }

    #[test]
    fn path_and_footprint_draw_bodies() {
        let f = sample(5);
        let path = render(&f, PlotKind::Path);
        let doc = parse(&path);
        assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("obstacle")).count(), 1);
        assert!(doc.descendants().any(|n| n.attribute("class") == Some("trailer")));
        let fp = render(&f, PlotKind::Footprint);
        assert_eq!(parse(&fp).descendants().filter(|n| n.has_tag_name("polygon")).count(), 10);
    }

    #[test]
    fn tick_generation() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(tick_label(0.5), "0.5");
        assert_eq!(tick_label(-3.0), "-3");
    }
}
