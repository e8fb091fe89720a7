//! Event-driven billiards on a rectangular table.
//!
//! Between events every moving ball travels in a straight line with constant
//! sliding-friction deceleration `μg`. Events are ball–ball contacts,
//! ball–wall contacts and balls coming to rest; contacts are located as the
//! first entry root of the polynomial gap function for each pair or wall.
//! Key states are recorded at launch, at every contact and once everything
//! is at rest.

use serde::{Deserialize, Serialize};

use super::trajectory::{SystemId, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BilliardsMode {
    /// Unknowns `(α, y⁰_cue)`.
    TwoD,
    /// Unknowns `(y⁰_cue, x⁰_cue, α, v⁰_cue)`.
    FourD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BilliardsSpec {
    pub mode: BilliardsMode,
    pub table_width: f64,
    pub table_height: f64,
    pub ball_radius: f64,
    pub fixed_balls: Vec<[f64; 2]>,
    pub friction_mu: f64,
    pub restitution_e: f64,
    pub gravity: f64,
    pub keyframe_count: usize,
    /// Time spacing of rest-state padding frames.
    pub padding_interval: f64,
    /// Cue start x for the 2-D problem.
    pub cue_x: f64,
    /// Cue launch speed for the 2-D problem.
    pub cue_speed: f64,
    pub alpha_bounds: [f64; 2],
    pub y_bounds: [f64; 2],
    pub x_bounds: [f64; 2],
    pub speed_bounds: [f64; 2],
}

/// Apex at `(1.5, 0.5)`, opening towards +x, neighbours 2 mm apart.
pub fn default_rack(radius: f64) -> Vec<[f64; 2]> {
    let spacing = 2.0 * radius + 0.002;
    let (ax, ay) = (1.5, 0.5);
    let dx = spacing * 3f64.sqrt() / 2.0;
    vec![[ax, ay], [ax + dx, ay - spacing / 2.0], [ax + dx, ay + spacing / 2.0]]
}

impl Default for BilliardsSpec {
    fn default() -> Self {
        Self::new(BilliardsMode::TwoD)
    }
}

impl BilliardsSpec {
    pub fn new(mode: BilliardsMode) -> Self {
        let radius = 0.03;
        Self {
            mode,
            table_width: 2.0,
            table_height: 1.0,
            ball_radius: radius,
            fixed_balls: default_rack(radius),
            friction_mu: 0.5,
            restitution_e: 0.8,
            gravity: 9.81,
            keyframe_count: 10,
            padding_interval: 0.5,
            cue_x: 0.2,
            cue_speed: 5.0,
            alpha_bounds: [-0.3, 0.5],
            y_bounds: [0.2, 0.8],
            x_bounds: [0.1, 0.5],
            speed_bounds: [4.0, 6.0],
        }
    }

    pub fn param_count(&self) -> usize {
        match self.mode {
            BilliardsMode::TwoD => 2,
            BilliardsMode::FourD => 4,
        }
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let order: Vec<[f64; 2]> = match self.mode {
            BilliardsMode::TwoD => vec![self.alpha_bounds, self.y_bounds],
            BilliardsMode::FourD => vec![self.y_bounds, self.x_bounds, self.alpha_bounds, self.speed_bounds],
        };
        (
            order.iter().map(|b| b[0]).collect(),
            order.iter().map(|b| b[1]).collect(),
        )
    }

    pub fn ball_count(&self) -> usize {
        self.fixed_balls.len() + 1
    }

    /// Values per key state: (x, y, vx, vy) for every ball.
    pub fn frame_len(&self) -> usize {
        4 * self.ball_count()
    }

    fn deceleration(&self) -> f64 {
        self.friction_mu * self.gravity
    }

    fn inside(&self, p: [f64; 2]) -> bool {
        let r = self.ball_radius;
        p[0] >= r && p[0] <= self.table_width - r && p[1] >= r && p[1] <= self.table_height - r
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ball_radius > 0.0
            && self.table_width > 2.0 * self.ball_radius
            && self.table_height > 2.0 * self.ball_radius)
        {
            return Err(Error::config("billiards: table must fit a ball"));
        }
        if !(self.restitution_e > 0.0 && self.restitution_e <= 1.0) {
            return Err(Error::config("billiards: restitution must lie in (0, 1]"));
        }
        if !(self.friction_mu >= 0.0 && self.gravity > 0.0) {
            return Err(Error::config("billiards: need μ ≥ 0 and g > 0"));
        }
        if self.keyframe_count < 2 || !(self.padding_interval > 0.0) {
            return Err(Error::config(
                "billiards: need ≥ 2 key frames and positive padding interval",
            ));
        }
        for (i, p) in self.fixed_balls.iter().enumerate() {
            if !self.inside(*p) {
                return Err(Error::config(format!("billiards: fixed ball {i} is off the table")));
            }
            for q in &self.fixed_balls[..i] {
                if dist(*p, *q) < 2.0 * self.ball_radius {
                    return Err(Error::config(format!("billiards: fixed ball {i} overlaps another")));
                }
            }
        }
        Ok(())
    }

    /// Decode the control vector into cue start position, angle and speed.
    pub fn cue_launch(&self, params: &[f64]) -> Result<CueLaunch> {
        if params.len() != self.param_count() {
            return Err(Error::shape(format!(
                "billiards expects {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(match self.mode {
            BilliardsMode::TwoD => CueLaunch {
                position: [self.cue_x, params[1]],
                angle: params[0],
                speed: self.cue_speed,
            },
            BilliardsMode::FourD => CueLaunch {
                position: [params[1], params[0]],
                angle: params[2],
                speed: params[3],
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueLaunch {
    pub position: [f64; 2],
    pub angle: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl Ball {
    fn speed(&self) -> f64 {
        norm(self.vel)
    }

    fn moving(&self) -> bool {
        self.vel != [0.0, 0.0]
    }

    /// Deceleration vector (opposes motion).
    fn accel(&self, decel: f64) -> [f64; 2] {
        let s = self.speed();
        if s == 0.0 {
            [0.0, 0.0]
        } else {
            [-decel * self.vel[0] / s, -decel * self.vel[1] / s]
        }
    }

    fn advance(&mut self, dt: f64, decel: f64) {
        let s = self.speed();
        if s == 0.0 || dt <= 0.0 {
            return;
        }
        let dir = [self.vel[0] / s, self.vel[1] / s];
        let stop = if decel > 0.0 { s / decel } else { f64::INFINITY };
        if dt >= stop {
            let travel = s * stop - 0.5 * decel * stop * stop;
            self.pos = [self.pos[0] + dir[0] * travel, self.pos[1] + dir[1] * travel];
            self.vel = [0.0, 0.0];
        } else {
            let travel = s * dt - 0.5 * decel * dt * dt;
            let v = s - decel * dt;
            self.pos = [self.pos[0] + dir[0] * travel, self.pos[1] + dir[1] * travel];
            self.vel = [dir[0] * v, dir[1] * v];
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm([a[0] - b[0], a[1] - b[1]])
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Ball { a: usize, b: usize },
    Wall { ball: usize, wall: Wall },
}

/// One resolved contact with the involved velocities before and after.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactRecord {
    pub time: f64,
    pub kind: ContactKind,
    /// Unit normal: centre of `a` towards centre of `b`, or the inward wall normal.
    pub normal: [f64; 2],
    pub before: Vec<[f64; 2]>,
    pub after: Vec<[f64; 2]>,
}

/// Full event-driven run before padding.
#[derive(Debug, Clone, PartialEq)]
pub struct BilliardsRun {
    pub key_states: Vec<Vec<Ball>>,
    pub key_times: Vec<f64>,
    pub contacts: Vec<ContactRecord>,
    /// True when every ball came to rest within the keyframe budget.
    pub settled: bool,
}

impl BilliardsRun {
    /// Key states padded with the final state (or truncated) to exactly
    /// `keyframe_count` frames.
    pub fn to_trajectory(&self, spec: &BilliardsSpec) -> Result<Trajectory> {
        let k = spec.keyframe_count;
        let flatten = |balls: &Vec<Ball>| -> Vec<f64> {
            balls
                .iter()
                .flat_map(|b| [b.pos[0], b.pos[1], b.vel[0], b.vel[1]])
                .collect()
        };
        let mut frames: Vec<Vec<f64>> = self.key_states.iter().take(k).map(flatten).collect();
        let mut times: Vec<f64> = self.key_times.iter().take(k).copied().collect();
        let last_state = frames.last().cloned().expect("launch state recorded");
        let mut t = *times.last().expect("launch time recorded");
        while frames.len() < k {
            t += spec.padding_interval;
            frames.push(last_state.clone());
            times.push(t);
        }
        let system = match spec.mode {
            BilliardsMode::TwoD => SystemId::Billiards2d,
            BilliardsMode::FourD => SystemId::Billiards4d,
        };
        Trajectory::new(system, frames, times)
    }
}

mod roots {
    //! Real roots of low-degree polynomials on an interval, by recursive
    //! isolation between critical points followed by bisection.

    /// Coefficients in increasing degree.
    pub fn eval(p: &[f64], t: f64) -> f64 {
        p.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(p: &[f64]) -> Vec<f64> {
        p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
    }

    fn trim(p: &[f64]) -> &[f64] {
        let scale = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut n = p.len();
        while n > 1 && p[n - 1].abs() <= 1e-300_f64.max(scale * 1e-18) {
            n -= 1;
        }
        &p[..n]
    }

    fn bisect(p: &[f64], mut lo: f64, mut hi: f64) -> f64 {
        let mut flo = eval(p, lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = eval(p, mid);
            if fm == 0.0 {
                return mid;
            }
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Sorted roots in `[a, b]` where the polynomial changes sign.
    pub fn sign_change_roots(p: &[f64], a: f64, b: f64) -> Vec<f64> {
        let p = trim(p);
        if p.len() <= 1 {
            return Vec::new();
        }
        let mut knots = vec![a];
        if p.len() > 2 {
            knots.extend(
                sign_change_roots(&derivative(p), a, b)
                    .into_iter()
                    .filter(|&c| c > a && c < b),
            );
        }
        knots.push(b);
        let mut out = Vec::new();
        for w in knots.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (flo, fhi) = (eval(p, lo), eval(p, hi));
            if flo == 0.0 {
                if out.last() != Some(&lo) {
                    out.push(lo);
                }
            } else if (flo < 0.0) != (fhi < 0.0) && fhi != 0.0 {
                out.push(bisect(p, lo, hi));
            }
        }
        let fb = eval(p, b);
        if fb == 0.0 && out.last() != Some(&b) {
            out.push(b);
        }
        out
    }

    /// First time in `[0, horizon]` at which the gap polynomial enters the
    /// non-positive region while decreasing.
    pub fn first_entry(gap: &[f64], horizon: f64) -> Option<f64> {
        let slope = derivative(gap);
        if eval(gap, 0.0) <= 0.0 && eval(&slope, 0.0) < 0.0 {
            return Some(0.0);
        }
        sign_change_roots(gap, 0.0, horizon)
            .into_iter()
            .find(|&t| eval(&slope, t) < 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    time: f64,
    kind: ContactKind,
}

fn wall_gap(ball: &Ball, accel: [f64; 2], wall: Wall, spec: &BilliardsSpec) -> Vec<f64> {
    let r = spec.ball_radius;
    // position along the axis: p + v t + a t²/2
    let (axis, sign, limit) = match wall {
        Wall::Left => (0, 1.0, r),
        Wall::Right => (0, -1.0, spec.table_width - r),
        Wall::Bottom => (1, 1.0, r),
        Wall::Top => (1, -1.0, spec.table_height - r),
    };
    vec![
        sign * (ball.pos[axis] - limit),
        sign * ball.vel[axis],
        sign * 0.5 * accel[axis],
    ]
}

fn pair_gap(a: &Ball, b: &Ball, aa: [f64; 2], ab: [f64; 2], radius: f64) -> Vec<f64> {
    // d(t) = A + B t + C t², gap = |d|² − (2R)²
    let av = [b.pos[0] - a.pos[0], b.pos[1] - a.pos[1]];
    let bv = [b.vel[0] - a.vel[0], b.vel[1] - a.vel[1]];
    let cv = [0.5 * (ab[0] - aa[0]), 0.5 * (ab[1] - aa[1])];
    vec![
        dot(av, av) - 4.0 * radius * radius,
        2.0 * dot(av, bv),
        dot(bv, bv) + 2.0 * dot(av, cv),
        2.0 * dot(bv, cv),
        dot(cv, cv),
    ]
}

const WALLS: [Wall; 4] = [Wall::Left, Wall::Right, Wall::Bottom, Wall::Top];

/// Ties within this window are resolved by candidate (index) order.
const TIE_WINDOW: f64 = 1e-9;

fn next_contact(balls: &[Ball], spec: &BilliardsSpec, horizon: f64) -> Option<Candidate> {
    let decel = spec.deceleration();
    let accels: Vec<[f64; 2]> = balls.iter().map(|b| b.accel(decel)).collect();
    let mut best: Option<Candidate> = None;
    let mut offer = |c: Candidate| match best {
        Some(b) if c.time >= b.time - TIE_WINDOW => {}
        _ => best = Some(c),
    };
    for (i, ball) in balls.iter().enumerate() {
        for j in (i + 1)..balls.len() {
            if !ball.moving() && !balls[j].moving() {
                continue;
            }
            let gap = pair_gap(ball, &balls[j], accels[i], accels[j], spec.ball_radius);
            if let Some(t) = roots::first_entry(&gap, horizon) {
                offer(Candidate {
                    time: t,
                    kind: ContactKind::Ball { a: i, b: j },
                });
            }
        }
        if ball.moving() {
            for wall in WALLS {
                let gap = wall_gap(ball, accels[i], wall, spec);
                if let Some(t) = roots::first_entry(&gap, horizon) {
                    offer(Candidate {
                        time: t,
                        kind: ContactKind::Wall { ball: i, wall },
                    });
                }
            }
        }
    }
    best
}

fn resolve(balls: &mut [Ball], kind: ContactKind, e: f64, time: f64) -> ContactRecord {
    match kind {
        ContactKind::Ball { a, b } => {
            let d = [balls[b].pos[0] - balls[a].pos[0], balls[b].pos[1] - balls[a].pos[1]];
            let n = norm(d);
            let normal = [d[0] / n, d[1] / n];
            let before = vec![balls[a].vel, balls[b].vel];
            let closing = dot(balls[a].vel, normal) - dot(balls[b].vel, normal);
            if closing > 0.0 {
                let j = 0.5 * (1.0 + e) * closing;
                balls[a].vel = [balls[a].vel[0] - j * normal[0], balls[a].vel[1] - j * normal[1]];
                balls[b].vel = [balls[b].vel[0] + j * normal[0], balls[b].vel[1] + j * normal[1]];
            }
            ContactRecord {
                time,
                kind,
                normal,
                before,
                after: vec![balls[a].vel, balls[b].vel],
            }
        }
        ContactKind::Wall { ball, wall } => {
            let (axis, normal) = match wall {
                Wall::Left => (0, [1.0, 0.0]),
                Wall::Right => (0, [-1.0, 0.0]),
                Wall::Bottom => (1, [0.0, 1.0]),
                Wall::Top => (1, [0.0, -1.0]),
            };
            let before = vec![balls[ball].vel];
            if balls[ball].vel[axis] * normal[axis] < 0.0 {
                balls[ball].vel[axis] *= -e;
            }
            ContactRecord {
                time,
                kind,
                normal,
                before,
                after: vec![balls[ball].vel],
            }
        }
    }
}

/// Simulate one shot up to `keyframe_count` key states.
pub fn billiards_run(spec: &BilliardsSpec, params: &[f64]) -> Result<BilliardsRun> {
    spec.validate()?;
    let cue = spec.cue_launch(params)?;
    if !params.iter().all(|v| v.is_finite()) || !(cue.speed >= 0.0) {
        return Err(Error::OutOfBounds(format!(
            "billiards: invalid cue parameters {params:?}"
        )));
    }
    if !spec.inside(cue.position) {
        return Err(Error::OutOfBounds(format!(
            "billiards: cue start {:?} is off the table",
            cue.position
        )));
    }
    for (i, p) in spec.fixed_balls.iter().enumerate() {
        if dist(*p, cue.position) < 2.0 * spec.ball_radius {
            return Err(Error::OutOfBounds(format!(
                "billiards: cue start {:?} overlaps fixed ball {i}",
                cue.position
            )));
        }
    }

    let mut balls = Vec::with_capacity(spec.ball_count());
    balls.push(Ball {
        pos: cue.position,
        vel: [cue.speed * cue.angle.cos(), cue.speed * cue.angle.sin()],
    });
    balls.extend(spec.fixed_balls.iter().map(|&pos| Ball { pos, vel: [0.0, 0.0] }));

    let decel = spec.deceleration();
    let mut now = 0.0;
    let mut run = BilliardsRun {
        key_states: vec![balls.clone()],
        key_times: vec![0.0],
        contacts: Vec::new(),
        settled: false,
    };
    // bounded loop: each iteration is a contact (adds a key state) or a ball stopping
    let max_iterations = 64 * (spec.keyframe_count + spec.ball_count());
    for _ in 0..max_iterations {
        if run.key_states.len() >= spec.keyframe_count {
            return Ok(run);
        }
        let next_stop = balls
            .iter()
            .filter(|b| b.moving())
            .map(|b| if decel > 0.0 { b.speed() / decel } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        if next_stop.is_infinite() && balls.iter().all(|b| !b.moving()) {
            run.settled = true;
            if run.key_states.last() != Some(&balls) {
                run.key_states.push(balls.clone());
                run.key_times.push(now);
            }
            return Ok(run);
        }
        if !next_stop.is_finite() {
            return Err(Error::config("billiards: frictionless motion never settles"));
        }
        match next_contact(&balls, spec, next_stop) {
            Some(c) => {
                for b in balls.iter_mut() {
                    b.advance(c.time, decel);
                }
                now += c.time;
                let record = resolve(&mut balls, c.kind, spec.restitution_e, now);
                run.contacts.push(record);
                // simultaneous contacts share one key state
                if run.key_times.len() > 1 && *run.key_times.last().unwrap() == now {
                    *run.key_states.last_mut().unwrap() = balls.clone();
                } else {
                    run.key_states.push(balls.clone());
                    run.key_times.push(now);
                }
            }
            None => {
                for b in balls.iter_mut() {
                    b.advance(next_stop, decel);
                    if b.speed() <= decel * 1e-12 {
                        b.vel = [0.0, 0.0];
                    }
                }
                now += next_stop;
            }
        }
    }
    Err(Error::NonFinite("billiards: event loop did not terminate".into()))
}

pub fn billiards_simulate(spec: &BilliardsSpec, params: &[f64]) -> Result<Trajectory> {
    billiards_run(spec, params)?.to_trajectory(spec)
}
