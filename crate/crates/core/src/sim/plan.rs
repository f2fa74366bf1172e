use serde::{Deserialize, Serialize};

use crate::control::Vec3;
use crate::error::{Error, Result};
use crate::phantom::Bounds;

/// Straight scan at constant lateral speed, preceded by a settling phase
/// during which the target holds at the start point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanPlan {
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// m/s
    pub speed: f64,
    /// Target height below the mapped surface at the start point, m.
    pub depth: f64,
    /// Hold before the lateral motion starts, s.
    pub settle: f64,
    /// Physics steps per control cycle.
    pub substeps: usize,
}

impl Default for ScanPlan {
    fn default() -> Self {
        Self {
            start: [0.02, 0.165],
            end: [0.30, 0.165],
            speed: 0.01,
            depth: 0.015,
            settle: 2.0,
            substeps: 2,
        }
    }
}

impl ScanPlan {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    pub fn duration(&self) -> f64 {
        self.settle + self.length() / self.speed
    }

    pub fn direction(&self) -> [f64; 2] {
        let l = self.length();
        if l == 0.0 {
            [1.0, 0.0]
        } else {
            [(self.end[0] - self.start[0]) / l, (self.end[1] - self.start[1]) / l]
        }
    }

    pub fn validate(&self, bounds: &Bounds) -> Result<()> {
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(Error::invalid("speed", "must be > 0"));
        }
        if !(self.depth.is_finite() && self.depth > 0.0) {
            return Err(Error::invalid("depth", "must be > 0"));
        }
        if !(self.settle.is_finite() && self.settle >= 0.0) {
            return Err(Error::invalid("settle", "must be >= 0"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps", "must be >= 1"));
        }
        for p in [self.start, self.end] {
            if !bounds.contains(p[0], p[1]) {
                return Err(Error::OutOfWorkspace { x: p[0], y: p[1] });
            }
        }
        Ok(())
    }

    /// Target position and velocity at `t` for a target height `z_d`. The
    /// velocity is right-continuous so it is constant over each step that
    /// starts on the switching instants.
    pub fn target(&self, t: f64, z_d: f64) -> (Vec3, Vec3) {
        let d = self.direction();
        let travel = self.length() / self.speed;
        let tau = (t - self.settle).clamp(0.0, travel);
        let moving = t >= self.settle && t < self.settle + travel;
        let s = self.speed * tau;
        let v = if moving { self.speed } else { 0.0 };
        (
            [self.start[0] + d[0] * s, self.start[1] + d[1] * s, z_d],
            [d[0] * v, d[1] * v, 0.0],
        )
    }
}

/// Trapezoidal lift of the phantom surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lift {
    pub t_start: f64,
    pub height: f64,
    pub ramp_up: f64,
    pub hold: f64,
    pub ramp_down: f64,
}

impl Lift {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.ramp_up + self.hold + self.ramp_down
    }

    /// Height and its rate.
    pub fn profile(&self, t: f64) -> (f64, f64) {
        let t1 = self.t_start + self.ramp_up;
        let t2 = t1 + self.hold;
        let t3 = t2 + self.ramp_down;
        if t < self.t_start || t >= t3 {
            (0.0, 0.0)
        } else if t < t1 {
            let r = self.height / self.ramp_up;
            (r * (t - self.t_start), r)
        } else if t < t2 {
            (self.height, 0.0)
        } else {
            let r = self.height / self.ramp_down;
            (self.height - r * (t - t2), -r)
        }
    }
}

/// Schedule of surface lifts, non-overlapping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub lifts: Vec<Lift>,
}

/// Largest lift accepted, m.
pub const MAX_LIFT: f64 = 0.05;

impl Disturbance {
    pub fn none() -> Self {
        Self::default()
    }

    /// 2 cm, 1 s ramps, 3 s hold, centred on `t_mid`.
    pub fn lift(t_mid: f64) -> Self {
        Self::trapezoid(t_mid, 0.02, 1.0, 3.0, 1.0)
    }

    /// Same lift with the surface dropping away in 50 ms.
    pub fn fast_drop(t_mid: f64) -> Self {
        Self::trapezoid(t_mid, 0.02, 1.0, 3.0, 0.05)
    }

    pub fn trapezoid(t_mid: f64, height: f64, ramp_up: f64, hold: f64, ramp_down: f64) -> Self {
        let total = ramp_up + hold + ramp_down;
        Self {
            lifts: vec![Lift {
                t_start: t_mid - 0.5 * total,
                height,
                ramp_up,
                hold,
                ramp_down,
            }],
        }
    }

    pub fn is_none(&self) -> bool {
        self.lifts.iter().all(|l| l.height == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.lifts {
            if !(l.height >= 0.0 && l.height <= MAX_LIFT) {
                return Err(Error::invalid("lift.height", format!("must lie in [0, {MAX_LIFT}] m")));
            }
            if !(l.ramp_up > 0.0 && l.ramp_down > 0.0 && l.hold >= 0.0 && l.t_start.is_finite()) {
                return Err(Error::invalid("lift", "ramps must be > 0 and hold >= 0"));
            }
        }
        let mut spans: Vec<(f64, f64)> = self.lifts.iter().map(|l| (l.t_start, l.t_end())).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::invalid("lift", "segments overlap"));
        }
        Ok(())
    }

    pub fn profile(&self, t: f64) -> (f64, f64) {
        self.lifts.iter().fold((0.0, 0.0), |(h, r), l| {
            let (a, b) = l.profile(t);
            (h + a, r + b)
        })
    }
}
