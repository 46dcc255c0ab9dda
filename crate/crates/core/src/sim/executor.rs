//! Joint-space trajectory execution under speed and acceleration caps.
//!
//! A plan's waypoint chain is treated as one continuous path: a single
//! trapezoidal profile is laid over the chain's cumulative lead-joint arc,
//! so a densely resampled straight line takes exactly as long as the same
//! line expressed as two waypoints. Per segment every joint's displacement
//! is at most the lead joint's, so following the path at the profile speed
//! keeps every joint under the cap.

use crate::robot::JointConfig;

/// Symmetric accelerate-cruise-decelerate profile over a scalar distance.
#[derive(Clone, Copy, Debug)]
pub struct TrapezoidProfile {
    pub distance: f64,
    pub v_peak: f64,
    pub t_accel: f64,
    pub t_cruise: f64,
}

impl TrapezoidProfile {
    pub fn new(distance: f64, v_max: f64, a_max: f64) -> Self {
        let d = distance.max(0.0);
        if d * a_max <= v_max * v_max {
            // Too short to reach cruise speed: triangular profile.
            let v_peak = (d * a_max).sqrt();
            let t_accel = if a_max > 0.0 { v_peak / a_max } else { 0.0 };
            Self { distance: d, v_peak, t_accel, t_cruise: 0.0 }
        } else {
            let t_accel = v_max / a_max;
            let t_cruise = (d - v_max * v_max / a_max) / v_max;
            Self { distance: d, v_peak: v_max, t_accel, t_cruise }
        }
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.t_accel + self.t_cruise
    }

    /// Distance covered after `t` seconds, clamped to the profile.
    pub fn position(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let a = if self.t_accel > 0.0 { self.v_peak / self.t_accel } else { 0.0 };
        if t < self.t_accel {
            0.5 * a * t * t
        } else if t < self.t_accel + self.t_cruise {
            0.5 * self.v_peak * self.t_accel + self.v_peak * (t - self.t_accel)
        } else if t < self.duration() {
            let td = self.duration() - t;
            self.distance - 0.5 * a * td * td
        } else {
            self.distance
        }
    }
}

/// Rest-to-rest duration of a single straight joint-space move.
pub fn segment_duration(from: &JointConfig, to: &JointConfig, v_max: f64, a_max: f64) -> f64 {
    TrapezoidProfile::new(from.max_abs_diff(to), v_max, a_max).duration()
}

/// What a single `step` call produced.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepOutcome {
    /// The configuration changed this step.
    pub moved: bool,
    /// The final waypoint has been reached.
    pub done: bool,
}

/// Steps a waypoint chain forward in fixed time increments under one
/// rest-to-rest profile covering the whole chain.
#[derive(Clone, Debug)]
pub struct Executor {
    waypoints: Vec<JointConfig>,
    /// Cumulative lead-joint arc at each waypoint; cum[0] = 0.
    cum: Vec<f64>,
    profile: TrapezoidProfile,
    t: f64,
    s: f64,
    /// Current segment: s lies in [cum[seg], cum[seg+1]).
    seg: usize,
    q: JointConfig,
    done: bool,
}

impl Executor {
    /// `waypoints` must be non-empty. Consecutive duplicates are dropped; a
    /// chain with no net motion is already complete.
    pub fn new(waypoints: Vec<JointConfig>, v_max: f64, a_max: f64) -> Self {
        assert!(!waypoints.is_empty(), "executor needs at least one waypoint");
        let mut chain: Vec<JointConfig> = Vec::with_capacity(waypoints.len());
        for w in waypoints {
            if chain.last() != Some(&w) {
                chain.push(w);
            }
        }
        let mut cum = Vec::with_capacity(chain.len());
        let mut total = 0.0;
        cum.push(0.0);
        for w in chain.windows(2) {
            total += w[0].max_abs_diff(&w[1]);
            cum.push(total);
        }
        let q = chain[0];
        let done = chain.len() == 1;
        Self {
            waypoints: chain,
            cum,
            profile: TrapezoidProfile::new(total, v_max, a_max),
            t: 0.0,
            s: 0.0,
            seg: 0,
            q,
            done,
        }
    }

    pub fn current(&self) -> &JointConfig {
        &self.q
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Waypoints not yet fully traversed, starting from the current
    /// configuration. This is the path still to be driven, suitable for
    /// collision checks against a fresh map.
    pub fn remaining(&self) -> Vec<JointConfig> {
        if self.done {
            return vec![self.q];
        }
        let mut path = vec![self.q];
        path.extend_from_slice(&self.waypoints[self.seg + 1..]);
        path
    }

    /// Configuration the arm will occupy after `ticks` further steps of
    /// `dt`, assuming no interruption.
    pub fn predicted_after(&self, ticks: u64, dt: f64) -> JointConfig {
        let mut probe = self.clone();
        for _ in 0..ticks {
            probe.step(dt);
        }
        *probe.current()
    }

    /// Advances by `dt` along the chain profile.
    pub fn step(&mut self, dt: f64) -> StepOutcome {
        let mut out = StepOutcome::default();
        if self.done {
            out.done = true;
            return out;
        }
        let start = self.q;
        self.t += dt;
        self.s = self.profile.position(self.t);
        if self.t >= self.profile.duration() {
            self.done = true;
            out.done = true;
            self.seg = self.waypoints.len() - 1;
            self.q = *self.waypoints.last().expect("non-empty");
        } else {
            while self.seg + 2 < self.waypoints.len() && self.s >= self.cum[self.seg + 1] {
                self.seg += 1;
            }
            let lo = self.cum[self.seg];
            let hi = self.cum[self.seg + 1];
            let frac = if hi > lo { (self.s - lo) / (hi - lo) } else { 1.0 };
            self.q = self.waypoints[self.seg].lerp(&self.waypoints[self.seg + 1], frac.min(1.0));
        }
        out.moved = self.q != start;
        out
    }
}
