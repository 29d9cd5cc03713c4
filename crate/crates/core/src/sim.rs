//! Nonlinear closed-loop simulation: an adaptive Dormand-Prince 5(4)
//! integrator, named reference waveforms, shaped input disturbances, and a
//! harness that couples the benchmark models to fixed or scheduled
//! controllers.

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lfr::point;
use crate::models::{arm, disk};
use crate::rbf::RbfControllerField;
use crate::rng::{stream_rng, streams};
use crate::synthesis::ControllerParam;

/// State-norm threshold beyond which a trajectory counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard cap on the internal step size.
    pub max_step: f64,
    /// Spacing of the recorded output grid.
    pub dt_out: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            max_step: 1e-2,
            dt_out: 1e-2,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.rel_tol) && ok(self.abs_tol) && ok(self.max_step) && ok(self.dt_out)) {
            return Err(Error::Invalid(
                "solver tolerances, step cap, and output spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Number of vector-field evaluations.
    pub evals: usize,
}

/// Bare integration output on the uniform recording grid.
#[derive(Debug, Clone)]
pub struct RawSim {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub stats: SolverStats,
    pub diverged: bool,
}

const SAFETY: f64 = 0.9;
const SHRINK_FLOOR: f64 = 0.2;
const GROW_CAP: f64 = 5.0;

struct Stepper<'a, F> {
    f: &'a F,
    opts: &'a SolverOptions,
    stats: SolverStats,
    h: f64,
}

impl<'a, F: Fn(f64, &DVector<f64>) -> DVector<f64>> Stepper<'a, F> {
    fn new(f: &'a F, opts: &'a SolverOptions) -> Self {
        Self {
            f,
            opts,
            stats: SolverStats::default(),
            h: opts.max_step,
        }
    }

    /// Integrates `x` from `t` to exactly `t_target`. Returns true when the
    /// trajectory diverged (state norm blew up or the step underflowed);
    /// `t` and `x` are then left at the last accepted sample.
    fn advance(&mut self, t: &mut f64, x: &mut DVector<f64>, t_target: f64) -> bool {
        if *t >= t_target {
            return false;
        }
        let dim = x.len() as f64;
        let mut k1 = (self.f)(*t, x);
        self.stats.evals += 1;
        while *t < t_target {
            if x.norm() > DIVERGENCE_NORM {
                return true;
            }
            let to_target = t_target - *t;
            let cap = self.h.min(self.opts.max_step);
            // Stretch up to 1% to land on the target instead of leaving a
            // roundoff sliver behind.
            let (h, hits_target) = if to_target <= cap * 1.01 {
                (to_target, true)
            } else {
                (cap, false)
            };
            if h < 8.0 * f64::EPSILON * t.abs().max(1.0) {
                return true;
            }

            let k2 = (self.f)(*t + 0.2 * h, &(&*x + &k1 * (0.2 * h)));
            let k3 = (self.f)(
                *t + 0.3 * h,
                &(&*x + &k1 * (3.0 / 40.0 * h) + &k2 * (9.0 / 40.0 * h)),
            );
            let k4 = (self.f)(
                *t + 0.8 * h,
                &(&*x + &k1 * (44.0 / 45.0 * h) - &k2 * (56.0 / 15.0 * h) + &k3 * (32.0 / 9.0 * h)),
            );
            let k5 = (self.f)(
                *t + 8.0 / 9.0 * h,
                &(&*x + &k1 * (19372.0 / 6561.0 * h) - &k2 * (25360.0 / 2187.0 * h)
                    + &k3 * (64448.0 / 6561.0 * h)
                    - &k4 * (212.0 / 729.0 * h)),
            );
            let k6 = (self.f)(
                *t + h,
                &(&*x + &k1 * (9017.0 / 3168.0 * h) - &k2 * (355.0 / 33.0 * h)
                    + &k3 * (46732.0 / 5247.0 * h)
                    + &k4 * (49.0 / 176.0 * h)
                    - &k5 * (5103.0 / 18656.0 * h)),
            );
            let x_new = &*x
                + &k1 * (35.0 / 384.0 * h)
                + &k3 * (500.0 / 1113.0 * h)
                + &k4 * (125.0 / 192.0 * h)
                - &k5 * (2187.0 / 6784.0 * h)
                + &k6 * (11.0 / 84.0 * h);
            let k7 = (self.f)(*t + h, &x_new);
            self.stats.evals += 6;

            let err_vec = &k1 * (71.0 / 57600.0 * h) - &k3 * (71.0 / 16695.0 * h)
                + &k4 * (71.0 / 1920.0 * h)
                - &k5 * (17253.0 / 339200.0 * h)
                + &k6 * (22.0 / 525.0 * h)
                - &k7 * (h / 40.0);
            let mut acc = 0.0;
            for i in 0..x.len() {
                let scale = self.opts.abs_tol
                    + self.opts.rel_tol * x[i].abs().max(x_new[i].abs());
                let r = err_vec[i] / scale;
                acc += r * r;
            }
            let err = (acc / dim).sqrt();

            if err.is_finite() && err <= 1.0 {
                *t = if hits_target { t_target } else { *t + h };
                *x = x_new;
                k1 = k7;
                self.stats.accepted += 1;
                let grow = if err == 0.0 {
                    GROW_CAP
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(SHRINK_FLOOR, GROW_CAP)
                };
                self.h = (h * grow).min(self.opts.max_step);
            } else {
                self.stats.rejected += 1;
                let shrink = if err.is_finite() {
                    (SAFETY * err.powf(-0.2)).clamp(SHRINK_FLOOR, 1.0)
                } else {
                    SHRINK_FLOOR
                };
                self.h = h * shrink;
            }
        }
        false
    }
}

/// Integrates `x' = f(t, x)` over `t_span`, recording on a uniform grid of
/// spacing about `dt_out`. Divergence truncates the trajectory and sets the
/// flag instead of failing.
pub fn ode_rk45<F: Fn(f64, &DVector<f64>) -> DVector<f64>>(
    f: F,
    x0: &DVector<f64>,
    t_span: (f64, f64),
    opts: &SolverOptions,
) -> Result<RawSim> {
    opts.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::Invalid("time span must be finite with t1 > t0".into()));
    }
    let span = t1 - t0;
    let n_out = (span / opts.dt_out).ceil().max(1.0) as usize;
    let mut stepper = Stepper::new(&f, opts);
    let mut t = t0;
    let mut x = x0.clone();
    let mut out = RawSim {
        t: vec![t0],
        x: vec![x.clone()],
        stats: SolverStats::default(),
        diverged: false,
    };
    for i in 1..=n_out {
        let target = t0 + span * i as f64 / n_out as f64;
        if stepper.advance(&mut t, &mut x, target) {
            out.diverged = true;
            out.t.push(t);
            out.x.push(x.clone());
            break;
        }
        out.t.push(t);
        out.x.push(x.clone());
    }
    out.stats = stepper.stats;
    Ok(out)
}

/// One C1 ramp between two held levels.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Transition {
    start: f64,
    end: f64,
    from: f64,
    to: f64,
}

impl Transition {
    fn value(&self, t: f64) -> f64 {
        if t <= self.start {
            self.from
        } else if t >= self.end {
            self.to
        } else {
            let s = (t - self.start) / (self.end - self.start);
            self.from + (self.to - self.from) * s * s * (3.0 - 2.0 * s)
        }
    }

    fn slope(&self, t: f64) -> f64 {
        if t <= self.start || t >= self.end {
            0.0
        } else {
            let w = self.end - self.start;
            let s = (t - self.start) / w;
            (self.to - self.from) * 6.0 * s * (1.0 - s) / w
        }
    }
}

/// Named multichannel reference built from smooth ramps between held
/// levels; continuously differentiable everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    name: String,
    duration: f64,
    channels: Vec<Vec<Transition>>,
}

fn ramps(spec: &[(f64, f64, f64, f64)]) -> Vec<Transition> {
    let out: Vec<Transition> = spec
        .iter()
        .map(|&(start, end, from, to)| Transition { start, end, from, to })
        .collect();
    for pair in out.windows(2) {
        debug_assert!(pair[0].end <= pair[1].start && pair[0].to == pair[1].from);
    }
    debug_assert!(out.iter().all(|tr| tr.end > tr.start));
    out
}

/// Looks up a built-in reference by its versioned name.
pub fn waveform(name: &str) -> Result<Waveform> {
    let (duration, channels): (f64, Vec<Vec<Transition>>) = match name {
        "disk_multistep_v1" => (
            10.0,
            vec![ramps(&[
                (0.5, 1.0, 0.0, 1.5),
                (3.0, 3.5, 1.5, -1.0),
                (5.5, 6.0, -1.0, 2.0),
                (8.0, 8.5, 2.0, 0.0),
            ])],
        ),
        "arm_reference1_v1" => (
            10.0,
            vec![
                ramps(&[
                    (0.5, 1.5, 0.0, 0.8),
                    (4.0, 5.0, 0.8, -0.8),
                    (7.5, 8.5, -0.8, 0.0),
                ]),
                ramps(&[
                    (1.0, 2.0, 0.0, -0.6),
                    (4.5, 5.5, -0.6, 0.6),
                    (8.0, 9.0, 0.6, 0.0),
                ]),
            ],
        ),
        "arm_reference2_v1" => (
            10.0,
            vec![
                ramps(&[
                    (0.5, 1.2, 0.0, 1.0),
                    (3.0, 3.8, 1.0, -0.5),
                    (6.0, 6.8, -0.5, 0.8),
                    (8.5, 9.3, 0.8, 0.0),
                ]),
                ramps(&[
                    (1.0, 1.7, 0.0, 0.5),
                    (3.5, 4.3, 0.5, -0.8),
                    (6.5, 7.3, -0.8, 0.4),
                    (8.7, 9.5, 0.4, 0.0),
                ]),
            ],
        ),
        "arm_reference3_v1" => (
            10.0,
            vec![
                ramps(&[(1.0, 4.0, 0.0, 1.2), (6.0, 9.0, 1.2, 0.0)]),
                ramps(&[(1.0, 4.0, 0.0, -1.2), (6.0, 9.0, -1.2, 0.0)]),
            ],
        ),
        other => {
            return Err(Error::Invalid(format!("unknown reference waveform `{other}`")));
        }
    };
    Ok(Waveform {
        name: name.to_string(),
        duration,
        channels,
    })
}

impl Waveform {
    /// All-zero reference with the given channel count.
    pub fn zero(channels: usize, duration: f64) -> Self {
        Self {
            name: "zero".into(),
            duration,
            channels: vec![Vec::new(); channels],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channels(&self) -> usize {
        self.channels.len()
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        self.channels.iter().map(|c| channel_value(c, t)).collect()
    }

    pub fn derivative(&self, t: f64) -> Vec<f64> {
        self.channels.iter().map(|c| channel_slope(c, t)).collect()
    }
}

fn channel_value(trs: &[Transition], t: f64) -> f64 {
    let Some(first) = trs.first() else { return 0.0 };
    let mut v = first.from;
    for tr in trs {
        if t < tr.start {
            break;
        }
        v = tr.value(t);
    }
    v
}

fn channel_slope(trs: &[Transition], t: f64) -> f64 {
    trs.iter()
        .find(|tr| t > tr.start && t < tr.end)
        .map_or(0.0, |tr| tr.slope(t))
}

/// Exogenous disturbance applied during a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disturbance {
    None,
    /// Zero-order-held Gaussian noise driving the plant-input shaping
    /// filter; `variance` is the held sample variance.
    FilteredNoise { seed: u64, variance: f64, hold: f64 },
}

impl Disturbance {
    /// Disk benchmark default: PSD 0.7 over a 0.01 s hold.
    pub fn disk_noise(seed: u64) -> Self {
        Disturbance::FilteredNoise {
            seed,
            variance: 70.0,
            hold: 0.01,
        }
    }
}

/// A simulatable benchmark plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearModel {
    /// Unbalanced disk at a fixed mass realization `delta1` in [-1, 1].
    UnbalancedDisk { delta1: f64 },
    RobotArm,
}

impl NonlinearModel {
    /// (plant states, plant inputs, measured outputs).
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            NonlinearModel::UnbalancedDisk { .. } => (2, 1, 1),
            NonlinearModel::RobotArm => (4, 2, 2),
        }
    }
}

/// Controller placed in the loop: a fixed design or a scheduled field
/// queried along the trajectory.
#[derive(Debug, Clone, Copy)]
pub enum LoopController<'a> {
    Fixed(&'a ControllerParam),
    Scheduled(&'a RbfControllerField),
}

/// Closed-loop trajectory on the recording grid, plus per-channel
/// root-mean-square tracking errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub rmse: Vec<f64>,
    pub stats: SolverStats,
    pub diverged: bool,
}

impl SimResult {
    /// Rows `t, x..., u..., y..., r...` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        let label = |out: &mut String, tag: &str, n: usize| {
            for i in 1..=n {
                out.push_str(&format!(",{tag}{i}"));
            }
        };
        label(&mut out, "x", self.x.first().map_or(0, Vec::len));
        label(&mut out, "u", self.u.first().map_or(0, Vec::len));
        label(&mut out, "y", self.y.first().map_or(0, Vec::len));
        label(&mut out, "r", self.r.first().map_or(0, Vec::len));
        out.push('\n');
        for i in 0..self.t.len() {
            out.push_str(&format!("{}", self.t[i]));
            for block in [&self.x[i], &self.u[i], &self.y[i], &self.r[i]] {
                for v in block.iter() {
                    out.push_str(&format!(",{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

struct LoopLayout {
    n_x: usize,
    n_y: usize,
    n_xk: usize,
    /// Filter states appended after the controller block.
    n_filter: usize,
}

/// Simulates a controller on a benchmark plant from rest. The controller
/// sees the tracking error `r - y`; for the arm its command passes through
/// the actuator roll-off, and scheduled designs are re-queried from the
/// state at every derivative evaluation. Divergence truncates the run and
/// reports infinite tracking errors.
pub fn simulate_closed_loop(
    model: &NonlinearModel,
    controller: &LoopController,
    reference: &Waveform,
    disturbance: &Disturbance,
    t_span: (f64, f64),
    opts: &SolverOptions,
) -> Result<SimResult> {
    opts.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::Invalid("time span must be finite with t1 > t0".into()));
    }
    let (n_x, n_u, n_y) = model.dims();
    if reference.channels() != n_y {
        return Err(Error::Shape(format!(
            "reference has {} channels, plant measures {}",
            reference.channels(),
            n_y
        )));
    }
    let structure = match controller {
        LoopController::Fixed(p) => p.structure(true),
        LoopController::Scheduled(f) => f.structure(),
    };
    if structure.n_y != n_y || structure.n_u != n_u {
        return Err(Error::Shape(format!(
            "controller is {}x{}, loop needs {}x{}",
            structure.n_u, structure.n_y, n_u, n_y
        )));
    }
    if matches!(controller, LoopController::Scheduled(_))
        && !matches!(model, NonlinearModel::RobotArm)
    {
        return Err(Error::Invalid(
            "scheduled controllers are only wired to the robot arm".into(),
        ));
    }
    if let LoopController::Scheduled(f) = controller {
        if f.domain().n_blocks() != 10 {
            return Err(Error::Shape(format!(
                "arm scheduling field needs 10 blocks, got {}",
                f.domain().n_blocks()
            )));
        }
    }
    let noise = match *disturbance {
        Disturbance::None => None,
        Disturbance::FilteredNoise { seed, variance, hold } => {
            if !matches!(model, NonlinearModel::UnbalancedDisk { .. }) {
                return Err(Error::Invalid(
                    "input noise shaping is only wired to the disk benchmark".into(),
                ));
            }
            if !(variance.is_finite() && variance >= 0.0 && hold > 0.0) {
                return Err(Error::Invalid("noise needs variance >= 0 and hold > 0".into()));
            }
            let n_holds = ((t1 - t0) / hold).ceil().max(1.0) as usize;
            let normal = Normal::new(0.0, variance.sqrt())
                .map_err(|_| Error::Invalid("bad noise variance".into()))?;
            let mut rng = stream_rng(seed, streams::NOISE);
            let values: Vec<f64> = (0..n_holds).map(|_| normal.sample(&mut rng)).collect();
            Some((hold, values))
        }
    };

    let layout = LoopLayout {
        n_x,
        n_y,
        n_xk: structure.n_xk,
        n_filter: match model {
            NonlinearModel::UnbalancedDisk { .. } => usize::from(noise.is_some()),
            NonlinearModel::RobotArm => 2,
        },
    };
    let dim = layout.n_x + layout.n_xk + layout.n_filter;

    // The held noise sample active for the current integration segment.
    let w_now = std::cell::Cell::new(0.0f64);
    let drift = |t: f64, z: &DVector<f64>| -> DVector<f64> {
        loop_derivative(model, controller, reference, &layout, w_now.get(), t, z)
    };

    // Segment the horizon at output points and noise-hold boundaries.
    let span = t1 - t0;
    let n_out = (span / opts.dt_out).ceil().max(1.0) as usize;
    let mut events: Vec<(f64, bool)> = (1..=n_out)
        .map(|i| (t0 + span * i as f64 / n_out as f64, true))
        .collect();
    if let Some((hold, values)) = &noise {
        let tol = 1e-9 * hold;
        for j in 1..values.len() {
            let tj = t0 + hold * j as f64;
            if tj >= t1 {
                break;
            }
            match events.binary_search_by(|(te, _)| te.partial_cmp(&tj).unwrap()) {
                Ok(_) => {}
                Err(pos) => {
                    let dup = [pos.checked_sub(1), Some(pos)]
                        .into_iter()
                        .flatten()
                        .filter_map(|k| events.get(k))
                        .any(|(te, _)| (te - tj).abs() <= tol);
                    if !dup {
                        events.insert(pos, (tj, false));
                    }
                }
            }
        }
        w_now.set(values[0]);
    }

    let mut stepper = Stepper::new(&drift, opts);
    let mut t = t0;
    let mut z = DVector::zeros(dim);
    let mut res = SimResult {
        t: Vec::with_capacity(n_out + 1),
        x: Vec::new(),
        u: Vec::new(),
        y: Vec::new(),
        r: Vec::new(),
        rmse: vec![0.0; n_y],
        stats: SolverStats::default(),
        diverged: false,
    };
    let record = |t: f64, z: &DVector<f64>, res: &mut SimResult| {
        let (u, y, r) = observe(model, controller, reference, &layout, t, z);
        for j in 0..layout.n_y {
            res.rmse[j] += (y[j] - r[j]) * (y[j] - r[j]);
        }
        res.t.push(t);
        res.x.push(z.as_slice().to_vec());
        res.u.push(u);
        res.y.push(y);
        res.r.push(r);
    };
    record(t0, &z, &mut res);
    for (te, is_output) in events {
        if stepper.advance(&mut t, &mut z, te) {
            res.diverged = true;
            record(t, &z, &mut res);
            break;
        }
        if is_output {
            record(t, &z, &mut res);
        }
        if let Some((hold, values)) = &noise {
            let idx = (((te - t0) / hold) + 1e-9).floor() as usize;
            w_now.set(values[idx.min(values.len() - 1)]);
        }
    }
    res.stats = stepper.stats;
    let n_samples = res.t.len() as f64;
    for v in res.rmse.iter_mut() {
        *v = if res.diverged {
            f64::INFINITY
        } else {
            (*v / n_samples).sqrt()
        };
    }
    Ok(res)
}

/// Controller matrices active at the given plant state.
fn controller_at(controller: &LoopController, x_plant: &[f64]) -> ControllerParam {
    match controller {
        LoopController::Fixed(p) => (*p).clone(),
        LoopController::Scheduled(field) => {
            let mut x4 = [0.0; 4];
            x4.copy_from_slice(&x_plant[..4]);
            let p = arm::scheduling_map(&x4);
            field
                .query(&point(&p))
                .expect("field dimensions were checked up front")
                .param
        }
    }
}

fn loop_derivative(
    model: &NonlinearModel,
    controller: &LoopController,
    reference: &Waveform,
    layout: &LoopLayout,
    w_held: f64,
    t: f64,
    z: &DVector<f64>,
) -> DVector<f64> {
    let r = reference.value(t);
    let x_plant = &z.as_slice()[..layout.n_x];
    let kp = controller_at(controller, x_plant);
    let e = DVector::from_fn(layout.n_y, |j, _| r[j] - x_plant[j]);
    let xk = z.rows(layout.n_x, layout.n_xk).clone_owned();
    let u_k = &kp.c_k * &xk + &kp.d_k * &e;
    let dxk = &kp.a_k * &xk + &kp.b_k * &e;

    let mut dz = DVector::zeros(z.len());
    dz.rows_mut(layout.n_x, layout.n_xk).copy_from(&dxk);
    match model {
        NonlinearModel::UnbalancedDisk { delta1 } => {
            let mut u_plant = u_k[0];
            if layout.n_filter == 1 {
                let xw = z[layout.n_x + layout.n_xk];
                u_plant += disk::WEIGHT_DI.state_gain() * xw;
                dz[layout.n_x + layout.n_xk] = -disk::WEIGHT_DI.c * xw + w_held;
            }
            let dx = disk::dynamics(&[x_plant[0], x_plant[1]], u_plant, *delta1);
            dz[0] = dx[0];
            dz[1] = dx[1];
        }
        NonlinearModel::RobotArm => {
            let base = layout.n_x + layout.n_xk;
            let gain = arm::WEIGHT_ACTUATOR.state_gain();
            let tau = [gain * z[base], gain * z[base + 1]];
            let dx = arm::dynamics(
                &[x_plant[0], x_plant[1], x_plant[2], x_plant[3]],
                &tau,
            );
            for i in 0..4 {
                dz[i] = dx[i];
            }
            for j in 0..2 {
                dz[base + j] = -arm::WEIGHT_ACTUATOR.c * z[base + j] + u_k[j];
            }
        }
    }
    dz
}

/// (controller command, measured output, reference) at a recorded sample.
fn observe(
    model: &NonlinearModel,
    controller: &LoopController,
    reference: &Waveform,
    layout: &LoopLayout,
    t: f64,
    z: &DVector<f64>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = reference.value(t);
    let x_plant = &z.as_slice()[..layout.n_x];
    let kp = controller_at(controller, x_plant);
    let e = DVector::from_fn(layout.n_y, |j, _| r[j] - x_plant[j]);
    let xk = z.rows(layout.n_x, layout.n_xk).clone_owned();
    let u_k = &kp.c_k * &xk + &kp.d_k * &e;
    let y = match model {
        NonlinearModel::UnbalancedDisk { .. } => vec![x_plant[0]],
        NonlinearModel::RobotArm => vec![x_plant[0], x_plant[1]],
    };
    (u_k.as_slice().to_vec(), y, r)
}
