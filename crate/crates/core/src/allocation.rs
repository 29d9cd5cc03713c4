//! The outer design loop: grow the grid where the current controller is
//! predicted to perform worst.
//!
//! Each iteration tunes a controller on the current grid, probes the box
//! with the surrogate-guided search for the most informative point, and
//! appends that point to the grid. The loop stops when the predicted worst
//! cost stops improving, when a candidate would duplicate an existing
//! point, or when the iteration budget runs out.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::bayesopt::{bo_find_most_informative, AcquisitionConfig, BoOutcome};
use crate::error::{Error, Result};
use crate::gp::{ObservationSet, ObservationTag};
use crate::lfr::{sample_domain, DeltaStructure, GridPoint, LfrPlant, PlantKind};
use crate::lti::{
    gen_h2_norm, h2_norm, hinf_norm, lyapunov_solve, spectral_abscissa, StateSpaceModel,
};
use crate::rbf::{fit_field, RbfControllerField};
use crate::rng::{derive_seed, streams};
use crate::synthesis::{
    close_loop, synthesize, synthesize_each, Aggregate, ControllerParam, ControllerStructure,
    SynthesisConfig,
};

/// Two grid points closer than this (in the max norm) count as the same
/// point.
pub const DUPLICATE_TOL: f64 = 1e-9;

/// Relative tolerance handed to the frequency-peak computation inside cost
/// evaluation.
pub const COST_HINF_REL_TOL: f64 = 1e-6;

/// System norm used by a cost term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Hinf,
    H2,
    GenH2,
}

impl NormKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormKind::Hinf => "hinf",
            NormKind::H2 => "h2",
            NormKind::GenH2 => "gen_h2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hinf" => Ok(NormKind::Hinf),
            "h2" => Ok(NormKind::H2),
            "gen_h2" => Ok(NormKind::GenH2),
            other => Err(Error::Format(format!("unknown norm `{other}`"))),
        }
    }
}

/// Channel selector: a named group or every remaining channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelSel {
    All,
    Named(String),
}

impl ChannelSel {
    pub fn as_str(&self) -> &str {
        match self {
            ChannelSel::All => "*",
            ChannelSel::Named(n) => n,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Format("empty channel selector".into()));
        }
        Ok(if s == "*" {
            ChannelSel::All
        } else {
            ChannelSel::Named(s.to_string())
        })
    }
}

/// One weighted norm of one closed-loop channel block.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTerm {
    pub input: ChannelSel,
    pub output: ChannelSel,
    pub norm: NormKind,
    pub weight: f64,
}

/// The scalar cost of a closed loop: weighted channel norms combined by max
/// or sum.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub terms: Vec<CostTerm>,
    pub combine: Aggregate,
}

impl CostSpec {
    /// The peak gain of the full disturbance-to-performance map.
    pub fn full_hinf() -> Self {
        Self {
            terms: vec![CostTerm {
                input: ChannelSel::All,
                output: ChannelSel::All,
                norm: NormKind::Hinf,
                weight: 1.0,
            }],
            combine: Aggregate::Max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Invalid("cost needs at least one term".into()));
        }
        for t in &self.terms {
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(Error::Invalid(format!(
                    "cost weight must be finite and non-negative, got {}",
                    t.weight
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|t| {
                json!({
                    "input": t.input.as_str(),
                    "output": t.output.as_str(),
                    "norm": t.norm.as_str(),
                    "weight": t.weight,
                })
            })
            .collect();
        json!({ "terms": terms, "combine": self.combine.as_str() })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("cost must be a JSON object".into()))?;
        let terms_v = obj
            .get("terms")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("cost needs a `terms` array".into()))?;
        let mut terms = Vec::with_capacity(terms_v.len());
        for tv in terms_v {
            let t = tv
                .as_object()
                .ok_or_else(|| Error::Format("cost term must be an object".into()))?;
            let text = |name: &str| -> Result<&str> {
                t.get(name)
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Format(format!("cost term needs a string `{name}`")))
            };
            terms.push(CostTerm {
                input: ChannelSel::parse(text("input")?)?,
                output: ChannelSel::parse(text("output")?)?,
                norm: NormKind::parse(text("norm")?)?,
                weight: t
                    .get("weight")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Format("cost term needs a numeric `weight`".into()))?,
            });
        }
        let combine = Aggregate::parse(
            obj.get("combine")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Format("cost needs a `combine` string".into()))?,
        )?;
        let spec = Self { terms, combine };
        spec.validate()?;
        Ok(spec)
    }
}

fn term_system(cl: &StateSpaceModel, term: &CostTerm) -> Result<StateSpaceModel> {
    let all_inputs: Vec<&str> = cl.input_groups().iter().map(|g| g.name.as_str()).collect();
    let all_outputs: Vec<&str> = cl.output_groups().iter().map(|g| g.name.as_str()).collect();
    let inputs: Vec<&str> = match &term.input {
        ChannelSel::All => all_inputs,
        ChannelSel::Named(n) => vec![n.as_str()],
    };
    let outputs: Vec<&str> = match &term.output {
        ChannelSel::All => all_outputs,
        ChannelSel::Named(n) => vec![n.as_str()],
    };
    cl.subsystem(&outputs, &inputs)
}

/// Scalar cost of a closed loop. Unstable or otherwise unusable loops score
/// `+inf`; a missing channel name, or a squared-norm term on a channel with
/// direct feedthrough, is a structural error.
pub fn closed_loop_cost(cl: &StateSpaceModel, spec: &CostSpec) -> Result<f64> {
    spec.validate()?;
    let mut total = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for term in &spec.terms {
        let sys = term_system(cl, term)?;
        let value = match term.norm {
            NormKind::Hinf => hinf_norm(&sys, COST_HINF_REL_TOL),
            NormKind::H2 => h2_norm(&sys),
            NormKind::GenH2 => gen_h2_norm(&sys),
        };
        let value = match value {
            Ok(v) => v,
            Err(Error::Group(e)) | Err(Error::Shape(e)) => return Err(Error::Group(e)),
            Err(Error::InfiniteNorm) => {
                return Err(Error::Invalid(format!(
                    "{} term on channel ({} -> {}) needs zero feedthrough",
                    term.norm.as_str(),
                    term.input.as_str(),
                    term.output.as_str(),
                )))
            }
            Err(_) => return Ok(f64::INFINITY),
        };
        match spec.combine {
            Aggregate::Max => worst = worst.max(term.weight * value),
            Aggregate::Sum => total += term.weight * value,
        }
    }
    Ok(match spec.combine {
        Aggregate::Max => worst,
        Aggregate::Sum => total,
    })
}

/// The deliverable of the design loop: a single robust controller or a
/// scheduled field of them.
#[derive(Debug, Clone, PartialEq)]
pub enum GridController {
    Robust(ControllerParam),
    Scheduled(RbfControllerField),
}

impl GridController {
    /// Concrete controller matrices used at a scheduling point.
    pub fn at(&self, point: &GridPoint) -> Result<ControllerParam> {
        match self {
            GridController::Robust(p) => Ok(p.clone()),
            GridController::Scheduled(field) => Ok(field.query(point)?.param),
        }
    }

    pub fn kind(&self) -> PlantKind {
        match self {
            GridController::Robust(_) => PlantKind::Robust,
            GridController::Scheduled(_) => PlantKind::Lpv,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            GridController::Robust(p) => json!({ "kind": "robust", "controller": p.to_json() }),
            GridController::Scheduled(f) => {
                json!({ "kind": "lpv", "field": f.to_json() })
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("controller artifact must be a JSON object".into()))?;
        match obj.get("kind").and_then(Value::as_str) {
            Some("robust") => Ok(GridController::Robust(ControllerParam::from_json(
                obj.get("controller")
                    .ok_or_else(|| Error::Format("missing `controller`".into()))?,
            )?)),
            Some("lpv") => Ok(GridController::Scheduled(RbfControllerField::from_json(
                obj.get("field")
                    .ok_or_else(|| Error::Format("missing `field`".into()))?,
            )?)),
            _ => Err(Error::Format("controller kind must be `robust` or `lpv`".into())),
        }
    }
}

/// Cost of the controller at one scheduling point: close the local loop and
/// score it. Instability and ill-posedness give `+inf`; malformed points or
/// missing channels are errors.
pub fn evaluate_cost(
    plant: &LfrPlant,
    point: &GridPoint,
    controller: &GridController,
    spec: &CostSpec,
) -> Result<f64> {
    let local = plant.local_model_at(point)?;
    let param = controller.at(point)?;
    let cl = match close_loop(&local, &param) {
        Ok(cl) => cl,
        Err(Error::WellPosed(_)) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    match spectral_abscissa(cl.a()) {
        Ok(a) if a >= 0.0 => return Ok(f64::INFINITY),
        Ok(_) => {}
        Err(_) => return Ok(f64::INFINITY),
    }
    closed_loop_cost(&cl, spec)
}

/// How a grid point entered the selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    Initial,
    Allocated { iteration: usize },
}

impl PointOrigin {
    fn as_string(&self) -> String {
        match self {
            PointOrigin::Initial => "initial".into(),
            PointOrigin::Allocated { iteration } => format!("allocated-{iteration}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s == "initial" {
            return Ok(PointOrigin::Initial);
        }
        if let Some(rest) = s.strip_prefix("allocated-") {
            let iteration = rest
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad origin `{s}`")))?;
            return Ok(PointOrigin::Allocated { iteration });
        }
        Err(Error::Format(format!("bad origin `{s}`")))
    }
}

/// An ordered, duplicate-free set of grid points with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    domain: DeltaStructure,
    points: Vec<GridPoint>,
    origins: Vec<PointOrigin>,
}

impl Selection {
    pub fn new(domain: DeltaStructure) -> Self {
        Self {
            domain,
            points: Vec::new(),
            origins: Vec::new(),
        }
    }

    pub fn domain(&self) -> &DeltaStructure {
        &self.domain
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn origins(&self) -> &[PointOrigin] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest max-norm distance from `point` to the selection; infinite
    /// when empty.
    pub fn min_distance(&self, point: &GridPoint) -> f64 {
        self.points
            .iter()
            .map(|p| p.linf_distance(point))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_duplicate(&self, point: &GridPoint) -> bool {
        self.min_distance(point) <= DUPLICATE_TOL
    }

    /// Appends a point, enforcing domain membership and distinctness.
    pub fn push(&mut self, point: GridPoint, origin: PointOrigin) -> Result<()> {
        self.domain.check_point(&point)?;
        if self.is_duplicate(&point) {
            return Err(Error::Invalid(format!(
                "grid point {:?} duplicates an existing point",
                point.coords()
            )));
        }
        self.points.push(point);
        self.origins.push(origin);
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let points: Vec<Value> = self
            .points
            .iter()
            .zip(&self.origins)
            .map(|(p, o)| {
                json!({
                    "coords": p.coords().to_vec(),
                    "origin": o.as_string(),
                })
            })
            .collect();
        json!({ "domain": self.domain.to_json(), "points": points })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("selection must be a JSON object".into()))?;
        let domain = DeltaStructure::from_json(
            obj.get("domain")
                .ok_or_else(|| Error::Format("selection needs a `domain`".into()))?,
        )?;
        let mut sel = Selection::new(domain);
        let points = obj
            .get("points")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("selection needs a `points` array".into()))?;
        for pv in points {
            let p = pv
                .as_object()
                .ok_or_else(|| Error::Format("selection point must be an object".into()))?;
            let coords: Vec<f64> = p
                .get("coords")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Format("selection point needs `coords`".into()))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::Format("coordinate must be a number".into()))
                })
                .collect::<Result<_>>()?;
            let origin = PointOrigin::parse(
                p.get("origin")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Format("selection point needs an `origin`".into()))?,
            )?;
            sel.push(GridPoint::new(coords)?, origin)?;
        }
        Ok(sel)
    }
}

/// Draws `count` distinct random points as an initial grid.
pub fn random_selection(domain: &DeltaStructure, count: usize, seed: u64) -> Result<Selection> {
    if count == 0 {
        return Err(Error::Invalid("initial grid cannot be empty".into()));
    }
    let mut sel = Selection::new(domain.clone());
    let mut attempt = 0u64;
    while sel.len() < count {
        if attempt > 100 * count as u64 {
            return Err(Error::Invalid(
                "domain too degenerate for the requested number of distinct points".into(),
            ));
        }
        let draw = sample_domain(domain, 1, derive_seed(seed, streams::INITIAL_SAMPLES + attempt));
        attempt += 1;
        let p = draw.into_iter().next().unwrap();
        if !sel.is_duplicate(&p) {
            sel.push(p, PointOrigin::Initial)?;
        }
    }
    Ok(sel)
}

/// The two extreme corners of the box as an initial grid (a single point
/// when the box is fully degenerate).
pub fn corner_init(domain: &DeltaStructure) -> Result<Selection> {
    let mut sel = Selection::new(domain.clone());
    let lo = domain.min_corner();
    let hi = domain.max_corner();
    sel.push(lo.clone(), PointOrigin::Initial)?;
    if lo.linf_distance(&hi) > DUPLICATE_TOL {
        sel.push(hi, PointOrigin::Initial)?;
    }
    Ok(sel)
}

/// Random initial grid plus a controller tuned on it, as a starting design
/// for [`allocate`]. Setting `cfg.synthesis.stability_only` gets a cheap
/// merely-stabilizing start. Deterministic in `seed`.
pub fn random_init(
    plant: &LfrPlant,
    n0: usize,
    cfg: &AllocationConfig,
    seed: u64,
) -> Result<(Selection, GridController)> {
    cfg.validate()?;
    let selection = random_selection(plant.delta(), n0, seed)?;
    let structure = ControllerStructure::for_model(
        &plant.local_model_at(&selection.points()[0])?,
        cfg.n_xk,
        cfg.direct_feedthrough,
    )?;
    let controller = design_on_grid(
        plant,
        &selection,
        cfg,
        structure,
        None,
        derive_seed(seed, streams::SYNTHESIS),
    )?;
    Ok((selection, controller))
}

/// Knobs of the outer design loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationConfig {
    pub cost: CostSpec,
    /// Controller state dimension.
    pub n_xk: usize,
    /// Whether the controller gets a tunable direct feedthrough.
    pub direct_feedthrough: bool,
    pub synthesis: SynthesisConfig,
    pub acquisition: AcquisitionConfig,
    /// Maximum number of grid points added. Zero skips the loop and just
    /// tunes on the initial grid.
    pub max_outer: usize,
    /// Relative improvement of the predicted worst cost below which an
    /// iteration counts as stalled.
    pub improvement_tol: f64,
    /// Consecutive stalled iterations that stop the loop.
    pub patience: usize,
}

impl AllocationConfig {
    pub fn new(cost: CostSpec) -> Self {
        Self {
            cost,
            n_xk: 2,
            direct_feedthrough: false,
            synthesis: SynthesisConfig::default(),
            acquisition: AcquisitionConfig::default(),
            max_outer: 8,
            improvement_tol: 0.01,
            patience: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        self.synthesis.validate()?;
        self.acquisition.validate()?;
        if !(self.improvement_tol.is_finite() && self.improvement_tol >= 0.0) {
            return Err(Error::Invalid("improvement_tol must be non-negative".into()));
        }
        if self.patience == 0 {
            return Err(Error::Invalid("patience must be positive".into()));
        }
        Ok(())
    }
}

/// One outer-loop step: the point that was added and the grid cost of the
/// design before and after it took effect.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocTraceRow {
    pub iteration: usize,
    pub point: GridPoint,
    pub cost_before: f64,
    pub cost_after: f64,
    pub grid_size: usize,
    /// Posterior-mean prediction of the search at the chosen point.
    pub predicted_worst: f64,
    /// True cost of the chosen point under the design it was chosen
    /// against. A value below `cost_before` means the search missed the
    /// actual worst case that round.
    pub candidate_cost: f64,
}

/// Grid and trace built before a mid-loop failure.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAllocation {
    pub selection: Selection,
    pub trace: Vec<AllocTraceRow>,
}

fn fail(
    iteration: usize,
    e: Error,
    selection: &Selection,
    trace: &[AllocTraceRow],
    initial_len: usize,
) -> Error {
    if selection.len() <= initial_len {
        return e;
    }
    Error::Aborted {
        iteration,
        source: Box::new(e),
        partial: Box::new(PartialAllocation {
            selection: selection.clone(),
            trace: trace.to_vec(),
        }),
    }
}

/// Result of a design-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOutcome {
    pub selection: Selection,
    pub controller: GridController,
    /// Aggregate grid cost of the final design.
    pub cost: f64,
    pub trace: Vec<AllocTraceRow>,
    pub early_stopped: bool,
    /// Surrogate observations from the last completed search.
    pub observations: Option<ObservationSet>,
}

fn grid_cost(
    plant: &LfrPlant,
    selection: &Selection,
    controller: &GridController,
    spec: &CostSpec,
) -> Result<f64> {
    let costs: Vec<f64> = selection
        .points()
        .iter()
        .map(|p| evaluate_cost(plant, p, controller, spec))
        .collect::<Result<_>>()?;
    Ok(match spec.combine {
        Aggregate::Max => costs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregate::Sum => costs.iter().sum(),
    })
}

fn design_on_grid(
    plant: &LfrPlant,
    selection: &Selection,
    cfg: &AllocationConfig,
    structure: ControllerStructure,
    warm: Option<&ControllerParam>,
    seed: u64,
) -> Result<GridController> {
    let models: Vec<StateSpaceModel> = selection
        .points()
        .iter()
        .map(|p| plant.local_model_at(p))
        .collect::<Result<_>>()?;
    let mut syn = cfg.synthesis.clone();
    syn.aggregate = cfg.cost.combine;
    let spec = cfg.cost.clone();
    let cost_fn = move |cl: &StateSpaceModel| {
        closed_loop_cost(cl, &spec).unwrap_or(f64::INFINITY)
    };
    match plant.kind() {
        PlantKind::Robust => {
            let out = synthesize(&models, structure, &syn, warm, &cost_fn, seed)?;
            Ok(GridController::Robust(out.param))
        }
        PlantKind::Lpv => {
            let outs = synthesize_each(&models, structure, &syn, &cost_fn, seed)?;
            let params: Vec<ControllerParam> = outs.into_iter().map(|o| o.param).collect();
            let field = fit_field(plant.delta(), selection.points(), &params, None)?;
            Ok(GridController::Scheduled(field))
        }
    }
}

fn seeded_observations(
    plant: &LfrPlant,
    selection: &Selection,
    controller: &GridController,
    spec: &CostSpec,
    n_random: usize,
    seed: u64,
) -> Result<ObservationSet> {
    let mut data = ObservationSet::new(plant.delta().clone());
    for p in selection.points() {
        let c = evaluate_cost(plant, p, controller, spec)?;
        data.push(p.clone(), c, ObservationTag::Allocation)?;
    }
    let mut drawn = 0usize;
    let mut attempt = 0u64;
    while drawn < n_random {
        if attempt > 100 * n_random as u64 + 100 {
            break;
        }
        let p = sample_domain(plant.delta(), 1, derive_seed(seed, attempt))
            .into_iter()
            .next()
            .unwrap();
        attempt += 1;
        if data.min_distance(&p) <= DUPLICATE_TOL {
            continue;
        }
        let c = evaluate_cost(plant, &p, controller, spec)?;
        data.push(p, c, ObservationTag::InitialRandom)?;
        drawn += 1;
    }
    Ok(data)
}

fn search_candidate(
    plant: &LfrPlant,
    selection: &Selection,
    controller: &GridController,
    cfg: &AllocationConfig,
    data_seed: u64,
    bo_seed: u64,
) -> Result<(BoOutcome, ObservationSet)> {
    let mut data = seeded_observations(
        plant,
        selection,
        controller,
        &cfg.cost,
        cfg.acquisition.initial_samples,
        data_seed,
    )?;
    let objective = |p: &GridPoint| {
        evaluate_cost(plant, p, controller, &cfg.cost).unwrap_or(f64::INFINITY)
    };
    let outcome = bo_find_most_informative(&objective, &mut data, &cfg.acquisition, bo_seed)?;
    Ok((outcome, data))
}

/// Runs the design loop from an initial grid.
///
/// Per iteration: tune on the grid, search the box for the point where the
/// tuned design is predicted to perform worst, and add it. A candidate that
/// duplicates the grid triggers one fresh-seeded retry, then falls back to
/// the worst-scoring distinct observation. The loop ends early after
/// `patience` consecutive iterations whose predicted worst cost improved by
/// less than `improvement_tol` (relative); the stalled candidate is not
/// added. Deterministic in `seed`.
pub fn allocate(
    plant: &LfrPlant,
    initial: &Selection,
    cfg: &AllocationConfig,
    seed: u64,
) -> Result<AllocationOutcome> {
    cfg.validate()?;
    if initial.is_empty() {
        return Err(Error::Invalid("initial grid cannot be empty".into()));
    }
    if initial.domain() != plant.delta() {
        return Err(Error::Domain(
            "initial grid domain does not match the plant".into(),
        ));
    }
    let initial_len = initial.len();

    let first_local = plant.local_model_at(&initial.points()[0])?;
    let structure =
        ControllerStructure::for_model(&first_local, cfg.n_xk, cfg.direct_feedthrough)?;

    let mut selection = initial.clone();
    let mut warm: Option<ControllerParam> = None;
    let mut controller: Option<GridController> = None;
    let mut current_cost = f64::NAN;
    let mut grid_dirty = true;

    let mut trace: Vec<AllocTraceRow> = Vec::new();
    let mut pending: Option<AllocTraceRow> = None;
    let mut prev_predicted: Option<f64> = None;
    let mut stall = 0usize;
    let mut early_stopped = false;
    let mut observations: Option<ObservationSet> = None;

    for iteration in 1..=cfg.max_outer {
        if grid_dirty {
            let designed = design_on_grid(
                plant,
                &selection,
                cfg,
                structure,
                warm.as_ref(),
                derive_seed(seed, streams::SYNTHESIS + iteration as u64 * streams::STRIDE),
            )
            .and_then(|ctl| {
                let cost = grid_cost(plant, &selection, &ctl, &cfg.cost)?;
                Ok((ctl, cost))
            });
            let (ctl, cost) = match designed {
                Ok(pair) => pair,
                Err(e) => {
                    // No design covers the grown grid; the point that broke
                    // it stays on record with an infinite after-cost.
                    if let Some(mut row) = pending.take() {
                        row.cost_after = f64::INFINITY;
                        trace.push(row);
                    }
                    return Err(fail(iteration, e, &selection, &trace, initial_len));
                }
            };
            current_cost = cost;
            if let GridController::Robust(p) = &ctl {
                warm = Some(p.clone());
            }
            controller = Some(ctl);
            grid_dirty = false;
        }
        if let Some(mut row) = pending.take() {
            row.cost_after = current_cost;
            trace.push(row);
        }

        let ctl = controller.as_ref().unwrap();
        let (mut outcome, mut data) = search_candidate(
            plant,
            &selection,
            ctl,
            cfg,
            derive_seed(seed, streams::INITIAL_SAMPLES + iteration as u64 * streams::STRIDE),
            derive_seed(seed, streams::BO_ITERATION + iteration as u64 * streams::STRIDE),
        )
        .map_err(|e| fail(iteration, e, &selection, &trace, initial_len))?;

        // Stall bookkeeping on the predicted worst cost of the current
        // design. Infinite predictions mean the design still fails
        // somewhere, so the search must go on.
        let predicted = outcome.predicted_mean;
        if let Some(prev) = prev_predicted {
            let improved = if !predicted.is_finite() {
                true
            } else if !prev.is_finite() {
                true
            } else {
                let denom = prev.abs().max(f64::MIN_POSITIVE);
                (prev - predicted) / denom >= cfg.improvement_tol
            };
            if improved {
                stall = 0;
            } else {
                stall += 1;
            }
            if stall >= cfg.patience {
                early_stopped = true;
                observations = Some(data);
                break;
            }
        }
        prev_predicted = Some(predicted);

        if selection.is_duplicate(&outcome.selected) {
            let (retry_outcome, retry_data) = search_candidate(
                plant,
                &selection,
                ctl,
                cfg,
                derive_seed(seed, streams::RETRY + iteration as u64 * streams::STRIDE),
                derive_seed(
                    seed,
                    streams::RETRY + (iteration as u64 + cfg.max_outer as u64) * streams::STRIDE,
                ),
            )
            .map_err(|e| fail(iteration, e, &selection, &trace, initial_len))?;
            outcome = retry_outcome;
            data = retry_data;
        }
        let candidate = if selection.is_duplicate(&outcome.selected) {
            let fallback = data
                .iter()
                .filter(|o| !selection.is_duplicate(&o.point))
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .map(|o| o.point.clone());
            match fallback {
                Some(p) => p,
                None => {
                    return Err(Error::Invalid(
                        "allocation stalled: every candidate duplicates the grid".into(),
                    ))
                }
            }
        } else {
            outcome.selected.clone()
        };

        let candidate_cost = evaluate_cost(plant, &candidate, ctl, &cfg.cost)
            .map_err(|e| fail(iteration, e, &selection, &trace, initial_len))?;
        selection
            .push(candidate.clone(), PointOrigin::Allocated { iteration })
            .map_err(|e| fail(iteration, e, &selection, &trace, initial_len))?;
        grid_dirty = true;
        pending = Some(AllocTraceRow {
            iteration,
            point: candidate,
            cost_before: current_cost,
            cost_after: f64::NAN,
            grid_size: selection.len(),
            predicted_worst: predicted,
            candidate_cost,
        });
        observations = Some(data);
    }

    if grid_dirty {
        let final_round = cfg.max_outer + 1;
        let designed = design_on_grid(
            plant,
            &selection,
            cfg,
            structure,
            warm.as_ref(),
            derive_seed(seed, streams::SYNTHESIS + final_round as u64 * streams::STRIDE),
        )
        .and_then(|ctl| {
            let cost = grid_cost(plant, &selection, &ctl, &cfg.cost)?;
            Ok((ctl, cost))
        });
        let (ctl, cost) = match designed {
            Ok(pair) => pair,
            Err(e) => {
                if let Some(mut row) = pending.take() {
                    row.cost_after = f64::INFINITY;
                    trace.push(row);
                }
                return Err(fail(final_round, e, &selection, &trace, initial_len));
            }
        };
        current_cost = cost;
        controller = Some(ctl);
    }
    if let Some(mut row) = pending.take() {
        row.cost_after = current_cost;
        trace.push(row);
    }
    if !current_cost.is_finite() {
        return Err(fail(
            cfg.max_outer + 1,
            Error::Numerical("final design scores an infinite cost on its own grid".into()),
            &selection,
            &trace,
            initial_len,
        ));
    }

    Ok(AllocationOutcome {
        selection,
        controller: controller.unwrap(),
        cost: current_cost,
        trace,
        early_stopped,
        observations,
    })
}

/// Margin used when verifying a common quadratic certificate.
pub const CQLF_MARGIN: f64 = 1e-9;

/// Tries a common quadratic Lyapunov certificate for a family of state
/// matrices by averaging the per-matrix solutions of `A' X + X A + I = 0`.
///
/// Returns the certificate when the average is positive definite and makes
/// every `A' X + X A` negative definite with margin [`CQLF_MARGIN`];
/// otherwise `None`. A non-Hurwitz member is an error: the question only
/// makes sense for a stable family. This is a cheap sufficient check, not a
/// decision procedure.
pub fn common_lyapunov_heuristic(mats: &[DMatrix<f64>]) -> Result<Option<DMatrix<f64>>> {
    if mats.is_empty() {
        return Err(Error::Invalid("no matrices given".into()));
    }
    let n = mats[0].nrows();
    let eye = DMatrix::identity(n, n);
    let mut avg = DMatrix::zeros(n, n);
    for a in mats {
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Shape("matrices differ in size".into()));
        }
        avg += lyapunov_solve(a, &eye)?;
    }
    avg /= mats.len() as f64;

    let min_eig = |m: &DMatrix<f64>| -> f64 {
        let sym = (m + m.transpose()) * 0.5;
        sym.symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    if min_eig(&avg) <= 0.0 {
        return Ok(None);
    }
    for a in mats {
        let deriv = a.transpose() * &avg + &avg * a;
        if min_eig(&(-deriv)) <= CQLF_MARGIN {
            return Ok(None);
        }
    }
    Ok(Some(avg))
}

/// Grid used by the validation sweep: a full tensor grid up to four
/// parameters, a seeded Latin hypercube beyond that. Deterministic in
/// `density` alone.
pub fn sweep_points(domain: &DeltaStructure, density: usize) -> Result<Vec<GridPoint>> {
    if density < 2 {
        return Err(Error::Invalid("sweep density must be at least 2".into()));
    }
    let (lo, hi) = domain.bounds();
    let d = lo.len();
    if d <= 4 {
        let axis_counts: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| if b > a { density } else { 1 })
            .collect();
        let total: usize = axis_counts.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut index = vec![0usize; d];
        for _ in 0..total {
            let coords: Vec<f64> = (0..d)
                .map(|ax| {
                    if axis_counts[ax] == 1 {
                        lo[ax]
                    } else {
                        lo[ax]
                            + (hi[ax] - lo[ax]) * index[ax] as f64
                                / (axis_counts[ax] - 1) as f64
                    }
                })
                .collect();
            points.push(GridPoint::new(coords)?);
            for ax in (0..d).rev() {
                index[ax] += 1;
                if index[ax] < axis_counts[ax] {
                    break;
                }
                index[ax] = 0;
            }
        }
        Ok(points)
    } else {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let n = density.pow(4).min(20_000);
        let mut rng = crate::rng::stream_rng(density as u64, streams::SWEEP);
        let mut strata: Vec<Vec<usize>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            strata.push(order);
        }
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let coords: Vec<f64> = (0..d)
                .map(|ax| {
                    if hi[ax] > lo[ax] {
                        let cell = strata[ax][i] as f64;
                        let u: f64 = rng.gen::<f64>();
                        lo[ax] + (hi[ax] - lo[ax]) * (cell + u) / n as f64
                    } else {
                        lo[ax]
                    }
                })
                .collect();
            points.push(GridPoint::new(coords)?);
        }
        Ok(points)
    }
}

/// One scored sweep sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub point: GridPoint,
    pub cost: f64,
}

/// Validation sweep over the whole box.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub samples: Vec<SweepSample>,
    pub worst_index: usize,
}

impl SweepResult {
    pub fn worst(&self) -> &SweepSample {
        &self.samples[self.worst_index]
    }
}

/// Scores the controller across the box and reports the worst point.
/// Deterministic for a given plant, controller, and density.
pub fn worst_case_sweep(
    plant: &LfrPlant,
    controller: &GridController,
    spec: &CostSpec,
    density: usize,
) -> Result<SweepResult> {
    let points = sweep_points(plant.delta(), density)?;
    let costs: Vec<f64> = points
        .par_iter()
        .map(|p| evaluate_cost(plant, p, controller, spec))
        .collect::<Result<_>>()?;
    let samples: Vec<SweepSample> = points
        .into_iter()
        .zip(costs)
        .map(|(point, cost)| SweepSample { point, cost })
        .collect();
    let worst_index = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .map(|(i, _)| i)
        .unwrap();
    Ok(SweepResult {
        samples,
        worst_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfr::{point, DeltaBlock};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    /// Lightly damped oscillator with uncertain stiffness. The plant is
    /// stable over the whole box; the resonance peak grows as the stiffness
    /// drops, so the worst case sits at the lower edge.
    fn toy_plant(kind: PlantKind) -> LfrPlant {
        // states (position, velocity); stiffness 1 + 0.8 theta.
        let a = dmatrix![0.0, 1.0; -1.0, -0.4];
        // inputs: delta (1), w (1), u (1); outputs: delta (1), z (2), y (1).
        let b = dmatrix![
            0.0, 0.0, 0.0;
            -0.8, 1.0, 1.0
        ];
        let c = dmatrix![
            1.0, 0.0;
            1.0, 0.0;
            0.0, 0.0;
            1.0, 0.0
        ];
        let mut d = DMatrix::zeros(4, 3);
        d[(2, 2)] = 0.3;
        let model = StateSpaceModel::new(
            a,
            b,
            c,
            d,
            &[("delta", 1), ("w", 1), ("u", 1)],
            &[("delta", 1), ("z", 2), ("y", 1)],
        )
        .unwrap();
        let delta = DeltaStructure::new(vec![DeltaBlock {
            name: "stiffness".into(),
            rep: 1,
            lo: -1.0,
            hi: 1.0,
        }])
        .unwrap();
        LfrPlant::new(model, delta, kind, "u", "y").unwrap()
    }

    fn zero_controller(n_xk: usize) -> ControllerParam {
        ControllerParam {
            a_k: DMatrix::identity(n_xk, n_xk) * -1.0,
            b_k: DMatrix::zeros(n_xk, 1),
            c_k: DMatrix::zeros(1, n_xk),
            d_k: DMatrix::zeros(1, 1),
        }
    }

    fn quick_config() -> AllocationConfig {
        let mut cfg = AllocationConfig::new(CostSpec::full_hinf());
        cfg.n_xk = 1;
        cfg.direct_feedthrough = true;
        cfg.synthesis = SynthesisConfig {
            restarts: 2,
            phase1_budget: 150,
            phase2_budget: 250,
            init_scale: Some(0.5),
            ..SynthesisConfig::default()
        };
        cfg.acquisition = AcquisitionConfig {
            margin: 0.2,
            budget: 14,
            initial_samples: 4,
            fit_restarts: 2,
            multistart: 8,
            refine_sweeps: 2,
        };
        cfg.max_outer = 3;
        cfg
    }

    #[test]
    fn cost_spec_json_round_trip_and_validation() {
        let spec = CostSpec {
            terms: vec![
                CostTerm {
                    input: ChannelSel::Named("w".into()),
                    output: ChannelSel::All,
                    norm: NormKind::Hinf,
                    weight: 2.0,
                },
                CostTerm {
                    input: ChannelSel::All,
                    output: ChannelSel::Named("z".into()),
                    norm: NormKind::H2,
                    weight: 0.5,
                },
            ],
            combine: Aggregate::Sum,
        };
        let text = serde_json::to_string(&spec.to_json()).unwrap();
        let back = CostSpec::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(spec, back);

        let bad = CostSpec {
            terms: vec![CostTerm {
                input: ChannelSel::All,
                output: ChannelSel::All,
                norm: NormKind::Hinf,
                weight: -1.0,
            }],
            combine: Aggregate::Max,
        };
        assert!(bad.validate().is_err());
        assert!(CostSpec {
            terms: vec![],
            combine: Aggregate::Max
        }
        .validate()
        .is_err());
    }

    #[test]
    fn evaluate_cost_matches_manual_closure() {
        let plant = toy_plant(PlantKind::Robust);
        let k = zero_controller(1);
        let spec = CostSpec::full_hinf();
        let p = point(&[0.25]);
        let via_eval = evaluate_cost(&plant, &p, &GridController::Robust(k.clone()), &spec)
            .unwrap();
        let local = plant.local_model_at(&p).unwrap();
        let cl = close_loop(&local, &k).unwrap();
        let manual = closed_loop_cost(&cl, &spec).unwrap();
        assert_relative_eq!(via_eval, manual, epsilon = 1e-12);
        assert!(via_eval.is_finite());

        // A named-channel term must match the subsystem norm directly.
        let named = CostSpec {
            terms: vec![CostTerm {
                input: ChannelSel::Named("w".into()),
                output: ChannelSel::Named("z".into()),
                norm: NormKind::Hinf,
                weight: 3.0,
            }],
            combine: Aggregate::Max,
        };
        let sub = cl.subsystem(&["z"], &["w"]).unwrap();
        let expect = 3.0 * hinf_norm(&sub, COST_HINF_REL_TOL).unwrap();
        assert_relative_eq!(
            closed_loop_cost(&cl, &named).unwrap(),
            expect,
            epsilon = 1e-12
        );

        // Unknown channel names are structural errors, not infinities.
        let missing = CostSpec {
            terms: vec![CostTerm {
                input: ChannelSel::Named("nope".into()),
                output: ChannelSel::All,
                norm: NormKind::Hinf,
                weight: 1.0,
            }],
            combine: Aggregate::Max,
        };
        assert!(closed_loop_cost(&cl, &missing).is_err());
    }

    #[test]
    fn destabilizing_controller_scores_infinite() {
        let plant = toy_plant(PlantKind::Robust);
        // Strong positive position feedback flips the spring sign.
        let k = ControllerParam {
            a_k: DMatrix::zeros(0, 0),
            b_k: DMatrix::zeros(0, 1),
            c_k: DMatrix::zeros(1, 0),
            d_k: dmatrix![5.0],
        };
        let c = evaluate_cost(
            &plant,
            &point(&[0.0]),
            &GridController::Robust(k),
            &CostSpec::full_hinf(),
        )
        .unwrap();
        assert_eq!(c, f64::INFINITY);
    }

    #[test]
    fn selection_enforces_domain_and_distinctness() {
        let domain = DeltaStructure::unit_box(&["a", "b"]).unwrap();
        let mut sel = Selection::new(domain);
        sel.push(point(&[0.0, 0.0]), PointOrigin::Initial).unwrap();
        sel.push(point(&[0.5, 0.0]), PointOrigin::Allocated { iteration: 1 })
            .unwrap();
        assert!(sel
            .push(point(&[0.5, 5e-10]), PointOrigin::Initial)
            .is_err());
        assert!(sel.push(point(&[2.0, 0.0]), PointOrigin::Initial).is_err());
        assert_eq!(sel.len(), 2);
        assert!(sel.is_duplicate(&point(&[0.0, 1e-10])));
        assert!(!sel.is_duplicate(&point(&[0.1, 0.0])));

        let text = serde_json::to_string(&sel.to_json()).unwrap();
        let back = Selection::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(sel, back);
    }

    #[test]
    fn random_selection_is_deterministic_and_distinct() {
        let domain = DeltaStructure::unit_box(&["a", "b"]).unwrap();
        let a = random_selection(&domain, 6, 42).unwrap();
        let b = random_selection(&domain, 6, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        for (i, p) in a.points().iter().enumerate() {
            assert!(domain.contains(p));
            for q in &a.points()[i + 1..] {
                assert!(p.linf_distance(q) > DUPLICATE_TOL);
            }
        }
        let c = random_selection(&domain, 6, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn corner_init_returns_the_box_extremes() {
        let domain = DeltaStructure::unit_box(&["a", "b"]).unwrap();
        let sel = corner_init(&domain).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel.points()[0], point(&[-1.0, -1.0]));
        assert_eq!(sel.points()[1], point(&[1.0, 1.0]));

        let flat = DeltaStructure::new(vec![DeltaBlock {
            name: "frozen".into(),
            rep: 1,
            lo: 0.4,
            hi: 0.4,
        }])
        .unwrap();
        assert_eq!(corner_init(&flat).unwrap().len(), 1);
    }

    #[test]
    fn random_init_designs_a_stabilizing_start() {
        let plant = toy_plant(PlantKind::Robust);
        let mut cfg = quick_config();
        cfg.synthesis.stability_only = true;
        let (sel, ctl) = random_init(&plant, 3, &cfg, 11).unwrap();
        assert_eq!(sel.len(), 3);
        for p in sel.points() {
            let c = evaluate_cost(&plant, p, &ctl, &cfg.cost).unwrap();
            assert!(c.is_finite(), "initial design must stabilize its grid");
        }
        let (sel2, ctl2) = random_init(&plant, 3, &cfg, 11).unwrap();
        assert_eq!(sel, sel2);
        assert_eq!(ctl, ctl2);
    }

    #[test]
    fn zero_budget_returns_the_initial_grid_with_a_design() {
        let plant = toy_plant(PlantKind::Robust);
        let mut cfg = quick_config();
        cfg.max_outer = 0;
        let mut initial = Selection::new(plant.delta().clone());
        initial.push(point(&[-0.3]), PointOrigin::Initial).unwrap();
        initial.push(point(&[0.8]), PointOrigin::Initial).unwrap();
        let out = allocate(&plant, &initial, &cfg, 5).unwrap();
        assert_eq!(out.selection, initial);
        assert!(out.trace.is_empty());
        assert!(!out.early_stopped);
        assert!(out.cost.is_finite());
    }

    /// Unstable integrator whose control gain is the uncertain parameter:
    /// x' = x + theta u. No single controller covers both signs of theta, so
    /// growing the grid across zero must kill the design.
    fn sign_flip_plant() -> LfrPlant {
        let a = dmatrix![1.0];
        // inputs: delta, w, u; outputs: delta, z, y. Control reaches the
        // state only through the delta channel, so B_u is zero.
        let b = dmatrix![1.0, 1.0, 0.0];
        let c = dmatrix![0.0; 1.0; 1.0];
        let mut d = DMatrix::zeros(3, 3);
        d[(0, 2)] = 1.0;
        let model = StateSpaceModel::new(
            a,
            b,
            c,
            d,
            &[("delta", 1), ("w", 1), ("u", 1)],
            &[("delta", 1), ("z", 1), ("y", 1)],
        )
        .unwrap();
        let delta = DeltaStructure::new(vec![DeltaBlock {
            name: "gain".into(),
            rep: 1,
            lo: -1.0,
            hi: 1.0,
        }])
        .unwrap();
        LfrPlant::new(model, delta, PlantKind::Robust, "u", "y").unwrap()
    }

    #[test]
    fn mid_loop_synthesis_failure_carries_partial_progress() {
        let plant = sign_flip_plant();
        let mut cfg = quick_config();
        cfg.max_outer = 4;
        let mut initial = Selection::new(plant.delta().clone());
        initial.push(point(&[0.9]), PointOrigin::Initial).unwrap();

        let err = allocate(&plant, &initial, &cfg, 23).unwrap_err();
        match err {
            Error::Aborted {
                iteration,
                source,
                partial,
            } => {
                assert!(iteration >= 2);
                assert!(matches!(*source, Error::Synthesis { .. }));
                assert!(partial.selection.len() > initial.len());
                assert_eq!(partial.selection.points()[0], point(&[0.9]));
                // The point that broke the design is on record.
                let last = partial.trace.last().unwrap();
                assert_eq!(last.cost_after, f64::INFINITY);
                // Any theta <= 0 is fatal next to 0.9: zero is uncontrollable
                // and negative gains flip the feedback sign.
                assert!(
                    last.point.coords()[0] <= 0.0,
                    "the fatal point {} should sit at or across the sign flip",
                    last.point.coords()[0]
                );
            }
            other => panic!("expected an aborted design loop, got {other:?}"),
        }
    }

    #[test]
    fn allocation_moves_toward_the_worst_edge() {
        let plant = toy_plant(PlantKind::Robust);
        let cfg = quick_config();
        let mut initial = Selection::new(plant.delta().clone());
        initial.push(point(&[0.6]), PointOrigin::Initial).unwrap();
        initial.push(point(&[0.9]), PointOrigin::Initial).unwrap();

        let out = allocate(&plant, &initial, &cfg, 17).unwrap();
        assert!(!out.trace.is_empty());
        let first = &out.trace[0];
        assert!(
            first.point.coords()[0] < 0.0,
            "first allocated point {} should move toward the soft-spring edge",
            first.point.coords()[0]
        );
        assert_eq!(first.grid_size, 3);
        assert!(out.cost.is_finite());
        assert_eq!(
            out.selection.len(),
            initial.len() + out.trace.len(),
            "every trace row corresponds to one added point"
        );

        // Trace chaining: cost_after of row t is cost_before of row t+1.
        for w in out.trace.windows(2) {
            assert_relative_eq!(w[0].cost_after, w[1].cost_before, epsilon = 1e-12);
            assert_eq!(w[0].grid_size + 1, w[1].grid_size);
        }
        for row in &out.trace {
            assert!(row.cost_after.is_finite());
            assert!(!row.candidate_cost.is_nan());
        }
        // The first candidate should genuinely be worse than the grid it
        // was chosen against; later rounds may miss.
        assert!(
            out.trace[0].candidate_cost >= out.trace[0].cost_before - 1e-6,
            "first candidate cost {} vs grid cost {}",
            out.trace[0].candidate_cost,
            out.trace[0].cost_before
        );
    }

    #[test]
    fn allocation_is_deterministic_in_seed() {
        let plant = toy_plant(PlantKind::Robust);
        let mut cfg = quick_config();
        cfg.max_outer = 2;
        let mut initial = Selection::new(plant.delta().clone());
        initial.push(point(&[0.5]), PointOrigin::Initial).unwrap();
        let a = allocate(&plant, &initial, &cfg, 9).unwrap();
        let b = allocate(&plant, &initial, &cfg, 9).unwrap();
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.cost, b.cost);
    }

    /// Same oscillator but with the uncertainty channel disconnected: the
    /// local models are identical across the box.
    fn theta_free_plant() -> LfrPlant {
        let a = dmatrix![0.0, 1.0; -1.0, -0.4];
        let b = dmatrix![
            0.0, 0.0, 0.0;
            0.0, 1.0, 1.0
        ];
        let c = dmatrix![
            1.0, 0.0;
            1.0, 0.0;
            0.0, 0.0;
            1.0, 0.0
        ];
        let mut d = DMatrix::zeros(4, 3);
        d[(2, 2)] = 0.3;
        let model = StateSpaceModel::new(
            a,
            b,
            c,
            d,
            &[("delta", 1), ("w", 1), ("u", 1)],
            &[("delta", 1), ("z", 2), ("y", 1)],
        )
        .unwrap();
        let delta = DeltaStructure::new(vec![DeltaBlock {
            name: "stiffness".into(),
            rep: 1,
            lo: -1.0,
            hi: 1.0,
        }])
        .unwrap();
        LfrPlant::new(model, delta, PlantKind::Robust, "u", "y").unwrap()
    }

    #[test]
    fn flat_cost_surface_stops_early() {
        let plant = theta_free_plant();
        let mut cfg = quick_config();
        cfg.max_outer = 6;
        cfg.improvement_tol = 0.05;
        cfg.patience = 2;
        let mut initial = Selection::new(plant.delta().clone());
        initial.push(point(&[-0.4]), PointOrigin::Initial).unwrap();
        initial.push(point(&[0.7]), PointOrigin::Initial).unwrap();
        let out = allocate(&plant, &initial, &cfg, 21).unwrap();
        assert!(out.early_stopped, "flat surface should stall the loop");
        assert!(
            out.selection.len() <= initial.len() + 2,
            "stalled loop added {} points",
            out.selection.len() - initial.len()
        );
        assert_eq!(out.trace.len(), out.selection.len() - initial.len());
    }

    #[test]
    fn lpv_allocation_returns_a_scheduled_field() {
        let plant = toy_plant(PlantKind::Lpv);
        let mut cfg = quick_config();
        cfg.max_outer = 1;
        let mut initial = Selection::new(plant.delta().clone());
        initial.push(point(&[-0.5]), PointOrigin::Initial).unwrap();
        initial.push(point(&[0.5]), PointOrigin::Initial).unwrap();
        let out = allocate(&plant, &initial, &cfg, 3).unwrap();
        match &out.controller {
            GridController::Scheduled(field) => {
                assert_eq!(field.nodes().len(), out.selection.len());
            }
            other => panic!("expected a scheduled controller, got {other:?}"),
        }
        assert!(out.cost.is_finite());
    }

    #[test]
    fn common_lyapunov_certificate_and_counterexample() {
        let a1 = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let a2 = dmatrix![-3.0, 0.0; 0.0, -0.5];
        let cert = common_lyapunov_heuristic(&[a1, a2]).unwrap();
        assert!(cert.is_some());
        let x = cert.unwrap();
        assert!(x.symmetric_eigen().eigenvalues.iter().all(|&e| e > 0.0));

        // Both members are stable, but the pair is known to admit no common
        // quadratic certificate: A1 A2^{-1} has a repeated eigenvalue at -1.
        let b1 = dmatrix![-1.0, 2.0; 0.0, -1.0];
        let b2 = dmatrix![-1.0, 0.0; 2.0, -1.0];
        assert!(common_lyapunov_heuristic(&[b1, b2]).unwrap().is_none());

        // A non-Hurwitz member makes the question ill posed.
        let c1 = dmatrix![1.0, 0.0; 0.0, -1.0];
        let c2 = dmatrix![-1.0, 0.0; 0.0, -1.0];
        assert!(matches!(
            common_lyapunov_heuristic(&[c1, c2]),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn sweep_points_tensor_and_lhs_paths() {
        let d2 = DeltaStructure::unit_box(&["a", "b"]).unwrap();
        let pts = sweep_points(&d2, 5).unwrap();
        assert_eq!(pts.len(), 25);
        assert!(pts.contains(&point(&[-1.0, -1.0])));
        assert!(pts.contains(&point(&[1.0, 1.0])));
        assert!(pts.contains(&point(&[0.0, 0.0])));
        // Row-major ordering: the second coordinate varies fastest.
        assert_eq!(pts[0], point(&[-1.0, -1.0]));
        assert_eq!(pts[1], point(&[-1.0, -0.5]));

        let d5 = DeltaStructure::unit_box(&["a", "b", "c", "d", "e"]).unwrap();
        let lhs = sweep_points(&d5, 4).unwrap();
        assert_eq!(lhs.len(), 256);
        for p in &lhs {
            assert!(d5.contains(p));
        }
        assert_eq!(lhs, sweep_points(&d5, 4).unwrap());
        assert_ne!(lhs, sweep_points(&d5, 5).unwrap()[..256].to_vec());

        assert!(sweep_points(&d2, 1).is_err());

        // Degenerate axes collapse instead of duplicating points.
        let frozen = DeltaStructure::new(vec![
            DeltaBlock {
                name: "live".into(),
                rep: 1,
                lo: 0.0,
                hi: 1.0,
            },
            DeltaBlock {
                name: "fixed".into(),
                rep: 1,
                lo: 0.3,
                hi: 0.3,
            },
        ])
        .unwrap();
        let pts = sweep_points(&frozen, 3).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| p.coords()[1] == 0.3));
    }

    #[test]
    fn sweep_finds_the_soft_spring_edge() {
        let plant = toy_plant(PlantKind::Robust);
        let controller = GridController::Robust(zero_controller(1));
        let result =
            worst_case_sweep(&plant, &controller, &CostSpec::full_hinf(), 21).unwrap();
        assert_eq!(result.samples.len(), 21);
        assert_relative_eq!(result.worst().point.coords()[0], -1.0, epsilon = 1e-12);
        // Costs grow monotonically toward the soft edge for this plant.
        assert!(result.worst().cost >= result.samples[10].cost);
    }
}
