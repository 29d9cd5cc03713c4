//! Derivative-free tuning of fixed-structure output-feedback controllers
//! against a finite set of local plant models.
//!
//! The tuner runs in two phases per restart. Phase one minimizes the worst
//! closed-loop spectral abscissa over the model set until every loop clears
//! a stability margin; phase two minimizes the aggregate performance cost
//! behind an instability barrier. Restarts are reduced deterministically by
//! `(cost, restart index)` so parallel execution cannot reorder ties.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::lti::{
    lower_lft, matrix_from_rows, matrix_to_rows, spectral_abscissa, StateSpaceModel,
};
use crate::rng::{derive_seed, stream_rng, streams};

/// How per-model costs combine into the tuning objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Max,
    Sum,
}

impl Aggregate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregate::Max => "max",
            Aggregate::Sum => "sum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregate::Max),
            "sum" => Ok(Aggregate::Sum),
            other => Err(Error::Format(format!("unknown aggregate `{other}`"))),
        }
    }
}

/// Shape of the tuned controller: state dimension, measurement and
/// actuation widths, and whether a direct feedthrough term is tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerStructure {
    pub n_xk: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub direct_feedthrough: bool,
}

impl ControllerStructure {
    pub fn new(n_xk: usize, n_y: usize, n_u: usize, direct_feedthrough: bool) -> Result<Self> {
        let s = Self {
            n_xk,
            n_y,
            n_u,
            direct_feedthrough,
        };
        if s.n_y == 0 || s.n_u == 0 {
            return Err(Error::Invalid(
                "controller needs at least one measurement and one output".into(),
            ));
        }
        if s.n_params() == 0 {
            return Err(Error::Invalid(
                "controller structure has no tunable parameters".into(),
            ));
        }
        Ok(s)
    }

    /// Reads the measurement and actuation widths off a local model carrying
    /// canonical `y` / `u` groups.
    pub fn for_model(
        model: &StateSpaceModel,
        n_xk: usize,
        direct_feedthrough: bool,
    ) -> Result<Self> {
        let n_y = model.output_group("y")?.len;
        let n_u = model.input_group("u")?.len;
        Self::new(n_xk, n_y, n_u, direct_feedthrough)
    }

    /// Number of free scalar parameters.
    pub fn n_params(&self) -> usize {
        self.n_xk * self.n_xk
            + self.n_xk * self.n_y
            + self.n_u * self.n_xk
            + if self.direct_feedthrough {
                self.n_u * self.n_y
            } else {
                0
            }
    }

    /// Builds the controller matrices from a flat parameter vector laid out
    /// row-major as `A_k`, `B_k`, `C_k`, then `D_k` when tuned.
    pub fn unpack(&self, theta: &[f64]) -> Result<ControllerParam> {
        if theta.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                theta.len()
            )));
        }
        let mut at = 0usize;
        let mut take = |rows: usize, cols: usize| {
            let m = DMatrix::from_row_slice(rows, cols, &theta[at..at + rows * cols]);
            at += rows * cols;
            m
        };
        let a_k = take(self.n_xk, self.n_xk);
        let b_k = take(self.n_xk, self.n_y);
        let c_k = take(self.n_u, self.n_xk);
        let d_k = if self.direct_feedthrough {
            take(self.n_u, self.n_y)
        } else {
            DMatrix::zeros(self.n_u, self.n_y)
        };
        Ok(ControllerParam { a_k, b_k, c_k, d_k })
    }

    /// Flattens a controller back into the parameter layout of [`unpack`].
    ///
    /// [`unpack`]: ControllerStructure::unpack
    pub fn pack(&self, param: &ControllerParam) -> Result<Vec<f64>> {
        if param.structure(self.direct_feedthrough) != *self {
            return Err(Error::Shape("controller does not match structure".into()));
        }
        if !self.direct_feedthrough && param.d_k.iter().any(|&x| x != 0.0) {
            return Err(Error::Shape(
                "structure fixes the feedthrough at zero but the controller has one".into(),
            ));
        }
        let mut theta = Vec::with_capacity(self.n_params());
        for m in [&param.a_k, &param.b_k, &param.c_k] {
            theta.extend(m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
        }
        if self.direct_feedthrough {
            theta.extend(
                param
                    .d_k
                    .row_iter()
                    .flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
            );
        }
        Ok(theta)
    }
}

/// A concrete linear output-feedback controller
/// `dx_k = A_k x_k + B_k y`, `u = C_k x_k + D_k y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParam {
    pub a_k: DMatrix<f64>,
    pub b_k: DMatrix<f64>,
    pub c_k: DMatrix<f64>,
    pub d_k: DMatrix<f64>,
}

impl ControllerParam {
    pub fn new(
        a_k: DMatrix<f64>,
        b_k: DMatrix<f64>,
        c_k: DMatrix<f64>,
        d_k: DMatrix<f64>,
    ) -> Result<Self> {
        if !a_k.is_square() {
            return Err(Error::Shape("A_k must be square".into()));
        }
        let n_xk = a_k.nrows();
        if b_k.nrows() != n_xk || c_k.ncols() != n_xk {
            return Err(Error::Shape("B_k/C_k do not match the state dimension".into()));
        }
        if d_k.nrows() != c_k.nrows() || d_k.ncols() != b_k.ncols() {
            return Err(Error::Shape("D_k does not match the channel widths".into()));
        }
        Ok(Self { a_k, b_k, c_k, d_k })
    }

    pub fn n_xk(&self) -> usize {
        self.a_k.nrows()
    }

    pub fn structure(&self, direct_feedthrough: bool) -> ControllerStructure {
        ControllerStructure {
            n_xk: self.a_k.nrows(),
            n_y: self.b_k.ncols(),
            n_u: self.c_k.nrows(),
            direct_feedthrough,
        }
    }

    /// State-space realization with the controller's natural group names:
    /// input `y`, output `u`.
    pub fn realize(&self) -> Result<StateSpaceModel> {
        StateSpaceModel::new(
            self.a_k.clone(),
            self.b_k.clone(),
            self.c_k.clone(),
            self.d_k.clone(),
            &[("y", self.b_k.ncols())],
            &[("u", self.c_k.nrows())],
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "A_k": matrix_to_rows(&self.a_k),
            "B_k": matrix_to_rows(&self.b_k),
            "C_k": matrix_to_rows(&self.c_k),
            "D_k": matrix_to_rows(&self.d_k),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("controller must be a JSON object".into()))?;
        let get = |name: &str| -> Result<DMatrix<f64>> {
            matrix_from_rows(
                obj.get(name)
                    .ok_or_else(|| Error::Format(format!("missing field `{name}`")))?,
            )
        };
        Self::new(get("A_k")?, get("B_k")?, get("C_k")?, get("D_k")?)
    }
}

/// Closes the loop between a local model (canonical `u` input and `y`
/// output groups) and a controller.
pub fn close_loop(model: &StateSpaceModel, param: &ControllerParam) -> Result<StateSpaceModel> {
    lower_lft(model, &param.realize()?, "y", "u")
}

fn model_abscissa(m: &StateSpaceModel) -> f64 {
    spectral_abscissa(m.a()).unwrap_or(f64::INFINITY)
}

/// Largest closed-loop spectral abscissa over the model set; an ill-posed
/// interconnection counts as `+inf`.
pub fn worst_abscissa(models: &[StateSpaceModel], param: &ControllerParam) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for model in models {
        match close_loop(model, param) {
            Ok(cl) => worst = worst.max(model_abscissa(&cl)),
            Err(_) => return f64::INFINITY,
        }
    }
    worst
}

/// Aggregate cost of a controller over the model set.
///
/// Every closed loop must be well posed and strictly stable, otherwise the
/// value is `+inf`; per-model costs come from `cost_fn` on the closed loop
/// (which should itself return `+inf` on failure, never panic).
pub fn multimodel_cost<F>(
    models: &[StateSpaceModel],
    param: &ControllerParam,
    aggregate: Aggregate,
    cost_fn: &F,
) -> f64
where
    F: Fn(&StateSpaceModel) -> f64 + ?Sized,
{
    let mut total = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for model in models {
        let cl = match close_loop(model, param) {
            Ok(cl) => cl,
            Err(_) => return f64::INFINITY,
        };
        if model_abscissa(&cl) >= 0.0 {
            return f64::INFINITY;
        }
        let c = cost_fn(&cl);
        if !c.is_finite() {
            return f64::INFINITY;
        }
        match aggregate {
            Aggregate::Max => worst = worst.max(c),
            Aggregate::Sum => total += c,
        }
    }
    match aggregate {
        Aggregate::Max => worst,
        Aggregate::Sum => total,
    }
}

/// Budgets and options for the tuner.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Independent starts; the first uses the warm start when one is given,
    /// otherwise all zeros.
    pub restarts: usize,
    /// Objective evaluations per restart in the stabilization phase.
    pub phase1_budget: usize,
    /// Objective evaluations per restart in the performance phase.
    pub phase2_budget: usize,
    /// Stability margin the first phase must reach.
    pub stability_margin: f64,
    /// Standard deviation of random initial parameters; `None` scales with
    /// the model dynamics.
    pub init_scale: Option<f64>,
    /// Skip the performance phase and return the most stabilizing design.
    pub stability_only: bool,
    pub aggregate: Aggregate,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            restarts: 6,
            phase1_budget: 500,
            phase2_budget: 700,
            stability_margin: 1e-3,
            init_scale: None,
            stability_only: false,
            aggregate: Aggregate::Max,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.phase1_budget == 0 {
            return Err(Error::Invalid("restarts and budgets must be positive".into()));
        }
        if !(self.stability_margin.is_finite() && self.stability_margin > 0.0) {
            return Err(Error::Invalid("stability margin must be positive".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Invalid("init scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Result of a tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    pub param: ControllerParam,
    /// Final objective: aggregate cost, or the worst abscissa when tuned for
    /// stability only.
    pub cost: f64,
    /// Worst closed-loop spectral abscissa of the returned design.
    pub abscissa: f64,
    /// Index of the winning restart.
    pub restart: usize,
}

const NM_FTOL: f64 = 1e-9;
const NM_XTOL: f64 = 1e-10;

/// Nelder-Mead minimizer with an evaluation budget and optional early-exit
/// target. Returns the best vertex seen.
fn nelder_mead<F>(
    f: &F,
    x0: &[f64],
    scale: f64,
    budget: usize,
    target: Option<f64>,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0);
    simplex.push((x0.to_vec(), v0));
    let step = scale.max(1e-4);
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }

    let reached = |v: f64| target.map(|t| v < t).unwrap_or(false);

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if reached(best) || evals.get() >= budget {
            break;
        }
        if worst.is_finite() {
            let spread = worst - best;
            let width = simplex[1..]
                .iter()
                .flat_map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                })
                .fold(0.0f64, f64::max);
            if spread <= NM_FTOL * (1.0 + best.abs()) && width <= NM_XTOL {
                break;
            }
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let second_worst = simplex[n - 1].1;
        let xw = simplex[n].0.clone();

        let at = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&xw)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = at(1.0);
        let fr = eval(&xr);
        if fr < best {
            let xe = at(2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = (xe, fe);
            } else {
                simplex[n] = (xr, fr);
            }
        } else if fr < second_worst {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = at(0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = at(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = vertex
                        .0
                        .iter()
                        .zip(&x_best)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    let fv = eval(&shrunk);
                    *vertex = (shrunk, fv);
                    if evals.get() >= budget {
                        break;
                    }
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

fn default_init_scale(models: &[StateSpaceModel]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for m in models {
        let n = m.a().nrows();
        if n > 0 {
            acc += 0.1 * m.a().norm() / n as f64;
            count += 1;
        }
    }
    if count == 0 || acc == 0.0 {
        0.1
    } else {
        (acc / count as f64).max(0.01)
    }
}

fn restart_start(
    structure: &ControllerStructure,
    warm: Option<&[f64]>,
    restart: usize,
    scale: f64,
    seed: u64,
) -> Vec<f64> {
    if restart == 0 {
        return match warm {
            Some(theta) => theta.to_vec(),
            None => vec![0.0; structure.n_params()],
        };
    }
    let mut rng = stream_rng(
        derive_seed(seed, streams::SYNTHESIS + restart as u64 * streams::STRIDE),
        0,
    );
    let normal = rand_distr::Normal::new(0.0, scale).unwrap();
    (0..structure.n_params())
        .map(|_| rng.sample(normal))
        .collect()
}

/// Tunes a fixed-structure controller against the model set.
///
/// Each model must expose canonical `u` / `y` groups. Each restart first
/// drives the worst closed-loop abscissa below `-stability_margin`, then
/// (unless `stability_only`) minimizes the aggregate of `cost_fn` over the
/// closed loops behind an instability barrier. Restarts that never
/// stabilize are dropped; if none stabilize the error carries the best
/// abscissa reached. Deterministic in `seed` regardless of thread count.
pub fn synthesize<F>(
    models: &[StateSpaceModel],
    structure: ControllerStructure,
    cfg: &SynthesisConfig,
    warm_start: Option<&ControllerParam>,
    cost_fn: &F,
    seed: u64,
) -> Result<SynthesisOutcome>
where
    F: Fn(&StateSpaceModel) -> f64 + Sync + ?Sized,
{
    cfg.validate()?;
    if models.is_empty() {
        return Err(Error::Invalid("no models to tune against".into()));
    }
    for m in models {
        let n_y = m.output_group("y")?.len;
        let n_u = m.input_group("u")?.len;
        if n_y != structure.n_y || n_u != structure.n_u {
            return Err(Error::Shape(format!(
                "model exposes {n_y} measurements and {n_u} inputs, structure wants {} and {}",
                structure.n_y, structure.n_u
            )));
        }
    }
    let warm_theta = match warm_start {
        Some(p) => Some(structure.pack(p)?),
        None => None,
    };
    let scale = cfg.init_scale.unwrap_or_else(|| default_init_scale(models));

    let phase1 = |theta: &[f64]| match structure.unpack(theta) {
        Ok(p) => worst_abscissa(models, &p),
        Err(_) => f64::INFINITY,
    };
    let phase2 = |theta: &[f64]| match structure.unpack(theta) {
        Ok(p) => multimodel_cost(models, &p, cfg.aggregate, cost_fn),
        Err(_) => f64::INFINITY,
    };

    struct RestartResult {
        restart: usize,
        theta: Vec<f64>,
        cost: f64,
        abscissa: f64,
        stabilized: bool,
    }

    let results: Vec<RestartResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let x0 = restart_start(&structure, warm_theta.as_deref(), r, scale, seed);
            let (theta1, absc1) = nelder_mead(
                &phase1,
                &x0,
                scale,
                cfg.phase1_budget,
                Some(-cfg.stability_margin),
            );
            if !(absc1 < 0.0) {
                return RestartResult {
                    restart: r,
                    theta: theta1,
                    cost: f64::INFINITY,
                    abscissa: absc1,
                    stabilized: false,
                };
            }
            if cfg.stability_only {
                return RestartResult {
                    restart: r,
                    theta: theta1,
                    cost: absc1,
                    abscissa: absc1,
                    stabilized: true,
                };
            }
            let (theta2, cost2) = nelder_mead(&phase2, &theta1, scale, cfg.phase2_budget, None);
            let (theta, cost) = if cost2.is_finite() {
                (theta2, cost2)
            } else {
                // The performance phase never left the barrier; keep the
                // stabilizing design.
                let c = multimodel_cost(
                    models,
                    &structure.unpack(&theta1).unwrap(),
                    cfg.aggregate,
                    cost_fn,
                );
                (theta1, c)
            };
            let abscissa = match structure.unpack(&theta) {
                Ok(p) => worst_abscissa(models, &p),
                Err(_) => f64::INFINITY,
            };
            RestartResult {
                restart: r,
                theta,
                cost,
                abscissa,
                stabilized: true,
            }
        })
        .collect();

    let winner = results
        .iter()
        .filter(|r| r.stabilized && r.abscissa < 0.0)
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.restart.cmp(&b.restart)));
    match winner {
        Some(w) => Ok(SynthesisOutcome {
            param: structure.unpack(&w.theta)?,
            cost: w.cost,
            abscissa: w.abscissa,
            restart: w.restart,
        }),
        None => {
            let best_abscissa = results
                .iter()
                .map(|r| r.abscissa)
                .fold(f64::INFINITY, f64::min);
            Err(Error::Synthesis { best_abscissa })
        }
    }
}

/// Tunes an independent controller for each model, for interpolation into a
/// scheduled design. Seeds are derived per index, so the list is stable
/// under reordering of calls.
pub fn synthesize_each<F>(
    models: &[StateSpaceModel],
    structure: ControllerStructure,
    cfg: &SynthesisConfig,
    cost_fn: &F,
    seed: u64,
) -> Result<Vec<SynthesisOutcome>>
where
    F: Fn(&StateSpaceModel) -> f64 + Sync + ?Sized,
{
    models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            synthesize(
                std::slice::from_ref(m),
                structure,
                cfg,
                None,
                cost_fn,
                derive_seed(seed, streams::SYNTHESIS + (1000 + i as u64) * streams::STRIDE),
            )
        })
        .collect()
}

/// Serializes a tuned controller together with its closed-loop summary.
pub fn outcome_to_json(outcome: &SynthesisOutcome, kind: &str) -> Value {
    let mut obj = Map::new();
    obj.insert("kind".into(), json!(kind));
    obj.insert("controller".into(), outcome.param.to_json());
    obj.insert("cost".into(), json!(outcome.cost));
    obj.insert("abscissa".into(), json!(outcome.abscissa));
    obj.insert("restart".into(), json!(outcome.restart));
    Value::Object(obj)
}
