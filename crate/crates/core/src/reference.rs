//! Reference trajectories: a waypoint polyline with circular corner fillets,
//! an acceleration-limited speed profile that starts and ends at rest, and
//! the matching state and input samples at the controller rate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mpc::{MsttrWindow, ReferenceWindow, SsttrWindow};
use crate::types::{InputVector, Limits, RobotGeometry, SsttrInput, SsttrState, StateVector};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub waypoints: Vec<[f64; 2]>,
    /// Cruise speed used for every segment without an explicit entry.
    pub speed: f64,
    /// Optional per-segment speeds (one per waypoint pair).
    #[serde(default)]
    pub segment_speeds: Vec<f64>,
    pub fillet_radius: f64,
    /// Magnitude of the speed-up and slow-down acceleration.
    #[serde(default = "default_accel")]
    pub accel: f64,
}

fn default_accel() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Line {
        start: [f64; 2],
        heading: f64,
        length: f64,
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        /// Polar angle of the entry point around the center.
        start_angle: f64,
        /// Signed turn angle (positive is counter-clockwise).
        sweep: f64,
        heading: f64,
    },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { length, .. } => length,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }
}

/// Sample of the geometric path at an arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub x: f64,
    pub y: f64,
    /// Unwrapped tangent heading.
    pub heading: f64,
    pub curvature: f64,
    pub segment: usize,
}

/// Line-arc path through the waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pieces: Vec<(Piece, usize)>,
    starts: Vec<f64>,
    length: f64,
}

fn signed_turn(h_in: f64, h_out: f64) -> f64 {
    let mut d = (h_out - h_in).rem_euclid(2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    }
    d
}

impl Path {
    pub fn new(waypoints: &[[f64; 2]], fillet_radius: f64) -> Result<Self, Error> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if waypoints.len() < 2 {
            return bad("a reference needs at least two waypoints".into());
        }
        if !(fillet_radius > 0.0) {
            return bad(format!("fillet radius must be positive, got {fillet_radius}"));
        }
        let n = waypoints.len();
        let mut headings = Vec::with_capacity(n - 1);
        let mut lengths = Vec::with_capacity(n - 1);
        for w in waypoints.windows(2) {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            let len = dx.hypot(dy);
            if !(len > 0.0) {
                return bad("consecutive waypoints must differ".into());
            }
            lengths.push(len);
            headings.push(dy.atan2(dx));
        }
        // Unwrap headings so the path heading is continuous.
        for i in 1..headings.len() {
            headings[i] = headings[i - 1] + signed_turn(headings[i - 1], headings[i]);
        }
        let mut tangent = vec![0.0; n];
        for i in 1..n - 1 {
            let turn = headings[i] - headings[i - 1];
            if turn.abs() >= PI - 1e-9 {
                return bad(format!("waypoint {i} reverses direction"));
            }
            tangent[i] = fillet_radius * (turn.abs() / 2.0).tan();
        }
        let mut pieces = Vec::new();
        for seg in 0..n - 1 {
            let used = tangent[seg] + tangent[seg + 1];
            if used > lengths[seg] + 1e-9 {
                return bad(format!(
                    "segment {seg} is too short for the fillets ({:.3} m needed, {:.3} m available)",
                    used, lengths[seg]
                ));
            }
            let (c, s) = (headings[seg].cos(), headings[seg].sin());
            let p0 = waypoints[seg];
            let start = [p0[0] + c * tangent[seg], p0[1] + s * tangent[seg]];
            let length = lengths[seg] - used;
            if length > 1e-12 {
                pieces.push((
                    Piece::Line {
                        start,
                        heading: headings[seg],
                        length,
                    },
                    seg,
                ));
            }
            if seg + 1 < n - 1 {
                let turn = headings[seg + 1] - headings[seg];
                if turn.abs() > 1e-12 {
                    let corner = waypoints[seg + 1];
                    let entry = [corner[0] - c * tangent[seg + 1], corner[1] - s * tangent[seg + 1]];
                    let side = turn.signum();
                    let center = [entry[0] - s * fillet_radius * side, entry[1] + c * fillet_radius * side];
                    let start_angle = (entry[1] - center[1]).atan2(entry[0] - center[0]);
                    pieces.push((
                        Piece::Arc {
                            center,
                            radius: fillet_radius,
                            start_angle,
                            sweep: turn,
                            heading: headings[seg],
                        },
                        seg,
                    ));
                }
            }
        }
        let mut starts = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for (p, _) in &pieces {
            starts.push(acc);
            acc += p.length();
        }
        Ok(Self {
            pieces,
            starts,
            length: acc,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Point at arc length `s`, clamped to the path.
    pub fn at(&self, s: f64) -> PathPoint {
        let s = s.clamp(0.0, self.length);
        let idx = self.starts.iter().rposition(|&st| st <= s).unwrap_or_default();
        let (piece, segment) = self.pieces[idx];
        let ds = (s - self.starts[idx]).min(piece.length());
        match piece {
            Piece::Line { start, heading, .. } => PathPoint {
                x: start[0] + heading.cos() * ds,
                y: start[1] + heading.sin() * ds,
                heading,
                curvature: 0.0,
                segment,
            },
            Piece::Arc {
                center,
                radius,
                start_angle,
                sweep,
                heading,
            } => {
                let side = sweep.signum();
                let phi = ds / radius;
                let ang = start_angle + side * phi;
                PathPoint {
                    x: center[0] + radius * ang.cos(),
                    y: center[1] + radius * ang.sin(),
                    heading: heading + side * phi,
                    curvature: side / radius,
                    segment,
                }
            }
        }
    }
}

/// Sampled reference at the controller rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub ts: f64,
    pub states: Vec<StateVector>,
    pub inputs: Vec<InputVector>,
    pub path: Path,
}

/// Builds the reference states and inputs for the given path and speeds.
pub fn generate_reference(
    spec: &ReferenceSpec,
    geom: &RobotGeometry,
    limits: &Limits,
    ts: f64,
) -> Result<Reference, Error> {
    if !(ts > 0.0) {
        return Err(Error::InvalidParameter("sampling time must be positive".into()));
    }
    let min_radius = geom.l1 / limits.delta1_max.tan();
    if spec.fillet_radius < min_radius {
        return Err(Error::InvalidParameter(format!(
            "fillet radius {} m is below the minimum turning radius {:.3} m",
            spec.fillet_radius, min_radius
        )));
    }
    let segments = spec.waypoints.len().saturating_sub(1);
    if !spec.segment_speeds.is_empty() && spec.segment_speeds.len() != segments {
        return Err(Error::InvalidParameter(format!(
            "expected {segments} segment speeds, got {}",
            spec.segment_speeds.len()
        )));
    }
    let speed_of = |seg: usize| spec.segment_speeds.get(seg).copied().unwrap_or(spec.speed);
    if (0..segments).any(|s| !(speed_of(s) > 0.0 && speed_of(s) <= limits.v_max)) {
        return Err(Error::InvalidParameter("segment speeds must lie in (0, v_max]".into()));
    }
    if !(spec.accel > 0.0 && spec.accel <= limits.a_max) {
        return Err(Error::InvalidParameter("reference acceleration must lie in (0, a_max]".into()));
    }
    let path = Path::new(&spec.waypoints, spec.fillet_radius)?;
    let total = path.length();

    // Speed cap along the path: the segment speed, limited so the robot can
    // brake to every later speed and to rest at the end.
    const DS: f64 = 0.01;
    let cells = (total / DS).ceil() as usize + 1;
    let mut cap: Vec<f64> = (0..cells).map(|i| speed_of(path.at(i as f64 * DS).segment)).collect();
    cap[cells - 1] = 0.0;
    for i in (0..cells - 1).rev() {
        let reach = (cap[i + 1].powi(2) + 2.0 * spec.accel * DS).sqrt();
        cap[i] = cap[i].min(reach);
    }
    let cap_at = |s: f64| {
        let f = (s / DS).clamp(0.0, (cells - 1) as f64);
        let i = (f.floor() as usize).min(cells - 2);
        let w = f - i as f64;
        cap[i] * (1.0 - w) + cap[i + 1] * w
    };

    // Integrate arc length in time with the acceleration limit.
    let fine = 100;
    let dt = ts / fine as f64;
    let (mut s, mut v) = (0.0f64, 0.0f64);
    let mut samples = vec![(0.0, 0.0)];
    loop {
        for _ in 0..fine {
            let target = cap_at(s + v * dt);
            v = (v + spec.accel * dt).min(target).max(0.0);
            s = (s + v * dt).min(total);
        }
        if total - s < 1e-3 {
            s = total;
            v = 0.0;
        }
        samples.push((s, v));
        if s >= total {
            break;
        }
        if samples.len() > 1_000_000 {
            return Err(Error::InvalidParameter("reference does not reach its end".into()));
        }
    }

    // States from geometry; trailer articulation integrated with a passive
    // trailer so the reference is kinematically consistent.
    let mut states = Vec::with_capacity(samples.len());
    let mut psi = 0.0f64;
    for (k, &(s, v)) in samples.iter().enumerate() {
        let p = path.at(s);
        let delta1 = (geom.l1 * p.curvature).atan();
        if k > 0 {
            let (s_prev, v_prev) = samples[k - 1];
            let d_prev = (geom.l1 * path.at(s_prev).curvature).atan();
            let sub = 20;
            let h = ts / sub as f64;
            for j in 0..sub {
                let w = (j as f64 + 0.5) / sub as f64;
                let vv = v_prev + (v - v_prev) * w;
                let dd = if w < 0.5 { d_prev } else { delta1 };
                psi += h * (vv / geom.l1 * dd.tan() - vv / geom.l2 * psi.sin());
            }
        }
        states.push(StateVector {
            x1: p.x,
            y1: p.y,
            v,
            a: 0.0,
            theta: p.heading,
            psi,
            delta1,
            delta2: 0.0,
        });
    }
    let n = states.len();
    for k in 0..n {
        let next = states[(k + 1).min(n - 1)].v;
        states[k].a = ((next - states[k].v) / ts).clamp(-limits.a_max, limits.a_max);
    }
    let mut inputs = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (x, y) = (&states[k], &states[k + 1]);
        inputs.push(InputVector::new(
            ((y.a - x.a) / ts).clamp(-limits.jerk_max, limits.jerk_max),
            ((y.delta1 - x.delta1) / ts).clamp(-limits.omega1_max, limits.omega1_max),
            0.0,
        ));
    }
    Ok(Reference { ts, states, inputs, path })
}

impl Reference {
    pub fn duration(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.ts
    }

    pub fn state_at(&self, k: usize) -> StateVector {
        let last = *self.states.last().expect("reference has at least one state");
        let mut s = self.states.get(k).copied().unwrap_or(last);
        if k >= self.states.len() {
            s.v = 0.0;
            s.a = 0.0;
        }
        s
    }

    pub fn input_at(&self, k: usize) -> InputVector {
        self.inputs.get(k).copied().unwrap_or_default()
    }

    /// Window starting at sample `k`, padded past the end with the final
    /// state and zero input.
    pub fn window(&self, k: usize, horizon: usize) -> MsttrWindow {
        ReferenceWindow {
            states: (k..=k + horizon).map(|i| self.state_at(i)).collect(),
            inputs: (k..k + horizon).map(|i| self.input_at(i)).collect(),
        }
    }

    /// Single-steering window: the reference acceleration becomes the input.
    pub fn ssttr_window(&self, k: usize, horizon: usize) -> SsttrWindow {
        ReferenceWindow {
            states: (k..=k + horizon).map(|i| SsttrState::from_full(&self.state_at(i))).collect(),
            inputs: (k..k + horizon)
                .map(|i| SsttrInput {
                    a: if i < self.inputs.len() { self.state_at(i).a } else { 0.0 },
                    omega1: self.input_at(i).omega1,
                })
                .collect(),
        }
    }

    /// Start pose on the path shifted laterally (positive to the left), at rest.
    pub fn initial_state(&self, lateral_offset: f64) -> StateVector {
        let p = self.path.at(0.0);
        StateVector {
            x1: p.x - p.heading.sin() * lateral_offset,
            y1: p.y + p.heading.cos() * lateral_offset,
            theta: p.heading,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_substepped, Msttr};
    use approx::assert_relative_eq;

    fn turn_spec(radius: f64) -> ReferenceSpec {
        ReferenceSpec {
            waypoints: vec![[0.0, 0.0], [40.0, 0.0], [40.0, 40.0]],
            speed: 3.0,
            segment_speeds: vec![],
            fillet_radius: radius,
            accel: 0.5,
        }
    }

    #[test]
    fn straight_line_has_no_steering() {
        let spec = ReferenceSpec {
            waypoints: vec![[0.0, 0.0], [100.0, 0.0]],
            speed: 5.0,
            ..turn_spec(10.0)
        };
        let r = generate_reference(&spec, &RobotGeometry::default(), &Limits::default(), 0.2).unwrap();
        assert!(r.states.iter().all(|s| s.delta1 == 0.0 && s.psi == 0.0 && s.theta == 0.0));
        let vmax = r.states.iter().map(|s| s.v).fold(0.0, f64::max);
        assert_relative_eq!(vmax, 5.0, epsilon = 1e-9);
        assert_eq!(r.states.last().unwrap().v, 0.0);
        assert_relative_eq!(r.states.last().unwrap().x1, 100.0, epsilon = 1e-9);
    }

    #[test]
    fn arc_steering_matches_bicycle_relation() {
        let r = generate_reference(&turn_spec(20.0), &RobotGeometry::default(), &Limits::default(), 0.2).unwrap();
        let on_arc = r.states.iter().map(|s| s.delta1).fold(0.0, f64::max);
        assert_relative_eq!(on_arc, (2.5f64 / 20.0).atan(), epsilon = 1e-12);
        assert_relative_eq!(on_arc, 0.12435, epsilon = 1e-5);
        let last = r.states.last().unwrap();
        assert_relative_eq!(last.theta, PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(last.y1, 40.0, epsilon = 1e-9);
    }

    #[test]
    fn path_is_continuous() {
        let path = Path::new(&[[0.0, 0.0], [30.0, 0.0], [30.0, 30.0], [0.0, 40.0]], 8.0).unwrap();
        let mut prev = path.at(0.0);
        let mut s = 0.05;
        while s <= path.length() {
            let p = path.at(s);
            assert!((p.x - prev.x).hypot(p.y - prev.y) <= 0.05 + 1e-9);
            assert!((p.heading - prev.heading).abs() < 0.05 / 8.0 + 1e-9);
            prev = p;
            s += 0.05;
        }
    }

    #[test]
    fn tight_fillet_rejected() {
        let e = generate_reference(&turn_spec(2.0), &RobotGeometry::default(), &Limits::default(), 0.2);
        assert!(e.is_err());
        let short = ReferenceSpec {
            waypoints: vec![[0.0, 0.0], [5.0, 0.0], [5.0, 5.0]],
            ..turn_spec(10.0)
        };
        assert!(generate_reference(&short, &RobotGeometry::default(), &Limits::default(), 0.2).is_err());
    }

    #[test]
    fn inputs_and_states_respect_limits() {
        let lim = Limits::default();
        let r = generate_reference(&turn_spec(9.0), &RobotGeometry::default(), &lim, 0.2).unwrap();
        assert!(r.states.iter().all(|s| crate::types::validate_state(s, &lim).is_empty()));
        assert!(r.inputs.iter().all(|u| crate::types::validate_input(u, &lim).is_empty()));
    }

    #[test]
    fn reference_is_nearly_kinematic() {
        let g = RobotGeometry::default();
        let r = generate_reference(&turn_spec(20.0), &g, &Limits::default(), 0.2).unwrap();
        let model = Msttr { geom: g };
        let mut worst: f64 = 0.0;
        for k in 0..r.inputs.len() {
            let x = r.states[k].to_vector();
            let next = integrate_substepped(&model, &x, &r.inputs[k].to_vector(), 0.2, 10).unwrap();
            let e = next - r.states[k + 1].to_vector();
            worst = worst.max(e[0].hypot(e[1]));
        }
        // O(Ts^2) with curvature and speed steps.
        assert!(worst < 0.2 * 0.2 * 3.0, "{worst}");
    }

    #[test]
    fn window_is_padded() {
        let r = generate_reference(&turn_spec(20.0), &RobotGeometry::default(), &Limits::default(), 0.2).unwrap();
        let end = r.states.len() - 1;
        let w = r.window(end - 1, 5);
        assert_eq!(w.states.len(), 6);
        assert_eq!(w.inputs.len(), 5);
        assert_eq!(w.states[5], *r.states.last().unwrap());
        assert_eq!(w.inputs[4], InputVector::default());
        let sw = r.ssttr_window(0, 5);
        assert_eq!(sw.states.len(), 6);
    }

    #[test]
    fn initial_offset_is_lateral() {
        let r = generate_reference(&turn_spec(20.0), &RobotGeometry::default(), &Limits::default(), 0.2).unwrap();
        let s0 = r.initial_state(2.0);
        assert_relative_eq!(s0.y1, 2.0, epsilon = 1e-12);
        assert_eq!(s0.v, 0.0);
    }
}
