//! Run configuration: JSON schema, benchmark presets, and resolution of
//! the effective settings from file values plus command-line overrides.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Value};

use gridalloc_core::models::arm;
use gridalloc_core::sim::waveform;
use gridalloc_core::{
    corner_init, profile, random_selection, AllocationConfig, CostSpec, DeltaStructure,
    Disturbance, GridPoint, LfrPlant, NonlinearModel, PlantKind, ReplicationEntry, Selection,
    SolverOptions, StateSpaceModel, SynthesisConfig,
};

use crate::io::read_json;
use crate::{CommonArgs, Failure};

fn cfg_err(e: gridalloc_core::Error) -> Failure {
    Failure::config(e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantRef {
    #[serde(default)]
    builtin: Option<String>,
    #[serde(default)]
    file: Option<PathBuf>,
}

#[derive(Deserialize, Clone)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Corners,
    Random { n0: usize },
    Explicit { points: Vec<Vec<f64>> },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct ControllerOverride {
    n_xk: Option<usize>,
    direct_feedthrough: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SynthesisOverride {
    restarts: Option<usize>,
    phase1_budget: Option<usize>,
    phase2_budget: Option<usize>,
    stability_margin: Option<f64>,
    init_scale: Option<f64>,
    stability_only: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct AcquisitionOverride {
    margin: Option<f64>,
    budget: Option<usize>,
    initial_samples: Option<usize>,
    fit_restarts: Option<usize>,
    multistart: Option<usize>,
    refine_sweeps: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct AllocOverride {
    improvement_tol: Option<f64>,
    patience: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SimOverride {
    reference: Option<String>,
    t_final: Option<f64>,
    /// Disk mass realization used by the nonlinear simulation.
    delta1: Option<f64>,
    /// `false` disables the shaped input noise; an object
    /// `{"variance": .., "hold": .., "seed": ..}` customizes it.
    noise: Option<Value>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_step: Option<f64>,
    dt_out: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    plant: PlantRef,
    #[serde(default)]
    cost: Option<Value>,
    #[serde(default)]
    init: Option<InitSpec>,
    #[serde(default)]
    profile: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    n_target: Option<usize>,
    #[serde(default)]
    controller: Option<ControllerOverride>,
    #[serde(default)]
    synthesis: Option<SynthesisOverride>,
    #[serde(default)]
    acquisition: Option<AcquisitionOverride>,
    #[serde(default)]
    allocation: Option<AllocOverride>,
    #[serde(default)]
    simulation: Option<SimOverride>,
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    UnbalancedDisk,
    RobotArm,
}

/// Nonlinear simulation scenario attached to a benchmark run.
pub struct SimScenario {
    pub model: NonlinearModel,
    pub reference: String,
    pub t_final: f64,
    pub disturbance: Disturbance,
    pub opts: SolverOptions,
}

/// Fully resolved run settings.
pub struct Resolved {
    pub plant: LfrPlant,
    pub init: Selection,
    pub cfg: AllocationConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub sim: Option<SimScenario>,
    /// Everything above, rendered back to JSON for the run directory.
    pub snapshot: Value,
}

/// Scheduling box the arm presets tune over: the envelope of the
/// scheduling map along the first reference, assuming perfect tracking.
pub fn arm_preset_domain() -> Result<DeltaStructure, Failure> {
    let w = waveform("arm_reference1_v1").map_err(cfg_err)?;
    let n = 2000usize;
    let samples: Vec<[f64; 4]> = (0..=n)
        .map(|i| {
            let t = w.duration() * i as f64 / n as f64;
            let r = w.value(t);
            let dr = w.derivative(t);
            [r[0], r[1], dr[0], dr[1]]
        })
        .collect();
    arm::scheduling_box(&samples).map_err(cfg_err)
}

fn parse_matrix(v: &Value, name: &str) -> Result<DMatrix<f64>, Failure> {
    let rows = v
        .as_array()
        .ok_or_else(|| Failure::config(format!("plant `{name}` must be an array of rows")))?;
    let nrows = rows.len();
    let mut data = Vec::new();
    let mut ncols = None;
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| Failure::config(format!("plant `{name}` rows must be arrays")))?;
        if *ncols.get_or_insert(row.len()) != row.len() {
            return Err(Failure::config(format!("plant `{name}` rows differ in length")));
        }
        for x in row {
            data.push(
                x.as_f64()
                    .ok_or_else(|| Failure::config(format!("plant `{name}` has a non-number")))?,
            );
        }
    }
    Ok(DMatrix::from_row_slice(nrows, ncols.unwrap_or(0), &data))
}

fn parse_groups(v: &Value, side: &str) -> Result<Vec<(String, usize)>, Failure> {
    let arr = v
        .as_array()
        .ok_or_else(|| Failure::config(format!("plant `{side}` must be an array")))?;
    arr.iter()
        .map(|g| {
            let pair = g.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                Failure::config(format!("plant `{side}` entries must be [name, width] pairs"))
            })?;
            let name = pair[0]
                .as_str()
                .ok_or_else(|| Failure::config(format!("plant `{side}` group name must be a string")))?;
            let width = pair[1]
                .as_u64()
                .ok_or_else(|| Failure::config(format!("plant `{side}` group width must be an integer")))?;
            Ok((name.to_string(), width as usize))
        })
        .collect()
}

/// Parses a plant description: state-space matrices with named channel
/// groups, the parameter box, the loop kind, and the controller channels.
pub fn parse_plant(v: &Value) -> Result<LfrPlant, Failure> {
    let obj = v
        .as_object()
        .ok_or_else(|| Failure::config("plant description must be a JSON object".into()))?;
    let field = |name: &str| -> Result<&Value, Failure> {
        obj.get(name)
            .ok_or_else(|| Failure::config(format!("plant description needs `{name}`")))
    };
    let a = parse_matrix(field("A")?, "A")?;
    let b = parse_matrix(field("B")?, "B")?;
    let c = parse_matrix(field("C")?, "C")?;
    let d = parse_matrix(field("D")?, "D")?;
    let inputs = parse_groups(field("inputs")?, "inputs")?;
    let outputs = parse_groups(field("outputs")?, "outputs")?;
    let in_refs: Vec<(&str, usize)> = inputs.iter().map(|(n, w)| (n.as_str(), *w)).collect();
    let out_refs: Vec<(&str, usize)> = outputs.iter().map(|(n, w)| (n.as_str(), *w)).collect();
    let model =
        StateSpaceModel::new(a, b, c, d, &in_refs, &out_refs).map_err(cfg_err)?;
    let domain = DeltaStructure::from_json(field("blocks")?).map_err(cfg_err)?;
    let kind = match field("kind")?.as_str() {
        Some("robust") => PlantKind::Robust,
        Some("lpv") => PlantKind::Lpv,
        _ => return Err(Failure::config("plant `kind` must be \"robust\" or \"lpv\"".into())),
    };
    let control = field("control")?
        .as_str()
        .ok_or_else(|| Failure::config("plant `control` must be a group name".into()))?;
    let meas = field("measurement")?
        .as_str()
        .ok_or_else(|| Failure::config("plant `measurement` must be a group name".into()))?;
    match obj.get("replication") {
        None | Some(Value::Null) => {
            LfrPlant::new(model, domain, kind, control, meas).map_err(cfg_err)
        }
        Some(rv) => {
            let arr = rv.as_array().ok_or_else(|| {
                Failure::config("plant `replication` must be an array of [block, source]".into())
            })?;
            let entries = arr
                .iter()
                .map(|e| {
                    let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                        Failure::config("replication entries must be [block, source]".into())
                    })?;
                    let get = |i: usize| {
                        pair[i].as_u64().map(|x| x as usize).ok_or_else(|| {
                            Failure::config("replication indices must be integers".into())
                        })
                    };
                    Ok(ReplicationEntry {
                        block: get(0)?,
                        source: get(1)?,
                    })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            LfrPlant::with_replication(model, domain, kind, control, meas, entries)
                .map_err(cfg_err)
        }
    }
}

struct Preset {
    n_xk: usize,
    direct: bool,
    profile: &'static str,
    n_target_extra: usize,
    init: InitSpec,
}

fn mid_point(domain: &DeltaStructure) -> Vec<f64> {
    domain
        .blocks()
        .iter()
        .map(|b| 0.5 * (b.lo + b.hi))
        .collect()
}

/// Loads, validates, and fully resolves the run configuration.
pub fn resolve(args: &CommonArgs) -> Result<Resolved, Failure> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("a --config file is required for this command".into()))?;
    let raw = read_json(path)?;
    let file: FileConfig = serde_json::from_value(raw)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;

    let (plant, benchmark, plant_snapshot) = match (&file.plant.builtin, &file.plant.file) {
        (Some(name), None) => match name.as_str() {
            "unbalanced_disk" => (
                gridalloc_core::models::disk::genplant(),
                Some(Benchmark::UnbalancedDisk),
                json!({ "builtin": "unbalanced_disk" }),
            ),
            "robot_arm" => (
                arm::genplant(&arm_preset_domain()?).map_err(cfg_err)?,
                Some(Benchmark::RobotArm),
                json!({ "builtin": "robot_arm" }),
            ),
            other => {
                return Err(Failure::config(format!(
                    "unknown builtin plant `{other}` (expected unbalanced_disk or robot_arm)"
                )));
            }
        },
        (None, Some(plant_path)) => {
            let resolved_path = if plant_path.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(plant_path)
            } else {
                plant_path.clone()
            };
            let v = read_json(&resolved_path)?;
            (parse_plant(&v)?, None, json!({ "embedded": v }))
        }
        _ => {
            return Err(Failure::config(
                "plant needs exactly one of `builtin` or `file`".into(),
            ));
        }
    };

    let preset = match benchmark {
        Some(Benchmark::UnbalancedDisk) => Preset {
            n_xk: 3,
            direct: false,
            profile: "focused",
            n_target_extra: 3,
            init: InitSpec::Corners,
        },
        Some(Benchmark::RobotArm) => {
            let domain = plant.delta();
            Preset {
                n_xk: 2,
                direct: true,
                profile: "exploratory",
                n_target_extra: 5,
                init: InitSpec::Explicit {
                    points: vec![
                        domain.min_corner().coords().to_vec(),
                        mid_point(domain),
                        domain.max_corner().coords().to_vec(),
                    ],
                },
            }
        }
        None => Preset {
            n_xk: 2,
            direct: false,
            profile: "focused",
            n_target_extra: 3,
            init: InitSpec::Corners,
        },
    };

    let seed = args.seed.or(file.seed).unwrap_or(0);

    let profile_name = args
        .profile
        .clone()
        .or(file.profile)
        .unwrap_or_else(|| preset.profile.to_string());
    let mut acquisition = profile(&profile_name).map_err(cfg_err)?;
    if let Some(o) = &file.acquisition {
        if let Some(v) = o.margin {
            acquisition.margin = v;
        }
        if let Some(v) = o.budget {
            acquisition.budget = v;
        }
        if let Some(v) = o.initial_samples {
            acquisition.initial_samples = v;
        }
        if let Some(v) = o.fit_restarts {
            acquisition.fit_restarts = v;
        }
        if let Some(v) = o.multistart {
            acquisition.multistart = v;
        }
        if let Some(v) = o.refine_sweeps {
            acquisition.refine_sweeps = v;
        }
    }

    let mut synthesis = SynthesisConfig::default();
    if let Some(o) = &file.synthesis {
        if let Some(v) = o.restarts {
            synthesis.restarts = v;
        }
        if let Some(v) = o.phase1_budget {
            synthesis.phase1_budget = v;
        }
        if let Some(v) = o.phase2_budget {
            synthesis.phase2_budget = v;
        }
        if let Some(v) = o.stability_margin {
            synthesis.stability_margin = v;
        }
        if o.init_scale.is_some() {
            synthesis.init_scale = o.init_scale;
        }
        if let Some(v) = o.stability_only {
            synthesis.stability_only = v;
        }
    }

    let cost = match &file.cost {
        None => CostSpec::full_hinf(),
        Some(v) => CostSpec::from_json(v).map_err(cfg_err)?,
    };

    let mut cfg = AllocationConfig::new(cost);
    cfg.n_xk = file
        .controller
        .as_ref()
        .and_then(|c| c.n_xk)
        .unwrap_or(preset.n_xk);
    cfg.direct_feedthrough = file
        .controller
        .as_ref()
        .and_then(|c| c.direct_feedthrough)
        .unwrap_or(preset.direct);
    cfg.synthesis = synthesis;
    cfg.acquisition = acquisition;
    if let Some(o) = &file.allocation {
        if let Some(v) = o.improvement_tol {
            cfg.improvement_tol = v;
        }
        if let Some(v) = o.patience {
            cfg.patience = v;
        }
    }

    let init_spec = file.init.clone().unwrap_or(preset.init);
    let init = build_init(&plant, &init_spec, seed)?;
    let n_target = file
        .n_target
        .unwrap_or(init.len() + preset.n_target_extra);
    if n_target < init.len() {
        return Err(Failure::config(format!(
            "n_target {} is below the initial grid size {}",
            n_target,
            init.len()
        )));
    }
    cfg.max_outer = n_target - init.len();
    cfg.validate().map_err(cfg_err)?;

    let out = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("run"));

    let sim = match benchmark {
        None => None,
        Some(bench) => Some(resolve_sim(bench, file.simulation.as_ref(), seed)?),
    };

    let snapshot = snapshot_json(
        &plant_snapshot,
        seed,
        &profile_name,
        &cfg,
        &init_spec,
        n_target,
        &out,
        sim.as_ref(),
    );

    Ok(Resolved {
        plant,
        init,
        cfg,
        seed,
        out,
        sim,
        snapshot,
    })
}

fn build_init(plant: &LfrPlant, spec: &InitSpec, seed: u64) -> Result<Selection, Failure> {
    let domain = plant.delta();
    match spec {
        InitSpec::Corners => corner_init(domain).map_err(cfg_err),
        InitSpec::Random { n0 } => {
            if *n0 == 0 {
                return Err(Failure::config("random init needs n0 >= 1".into()));
            }
            random_selection(domain, *n0, seed).map_err(cfg_err)
        }
        InitSpec::Explicit { points } => {
            if points.is_empty() {
                return Err(Failure::config("explicit init needs at least one point".into()));
            }
            let mut sel = Selection::new(domain.clone());
            for coords in points {
                let p = GridPoint::new(coords.clone()).map_err(cfg_err)?;
                domain.check_point(&p).map_err(cfg_err)?;
                sel.push(p, gridalloc_core::PointOrigin::Initial)
                    .map_err(cfg_err)?;
            }
            Ok(sel)
        }
    }
}

fn resolve_sim(
    bench: Benchmark,
    over: Option<&SimOverride>,
    seed: u64,
) -> Result<SimScenario, Failure> {
    let default_ref = match bench {
        Benchmark::UnbalancedDisk => "disk_multistep_v1",
        Benchmark::RobotArm => "arm_reference1_v1",
    };
    let reference = over
        .and_then(|o| o.reference.clone())
        .unwrap_or_else(|| default_ref.to_string());
    waveform(&reference).map_err(cfg_err)?;

    let mut opts = SolverOptions::default();
    if bench == Benchmark::RobotArm {
        opts.max_step = 1e-3;
    }
    if let Some(o) = over {
        if let Some(v) = o.rel_tol {
            opts.rel_tol = v;
        }
        if let Some(v) = o.abs_tol {
            opts.abs_tol = v;
        }
        if let Some(v) = o.max_step {
            opts.max_step = v;
        }
        if let Some(v) = o.dt_out {
            opts.dt_out = v;
        }
    }
    opts.validate().map_err(cfg_err)?;

    let model = match bench {
        Benchmark::UnbalancedDisk => NonlinearModel::UnbalancedDisk {
            delta1: over.and_then(|o| o.delta1).unwrap_or(0.0),
        },
        Benchmark::RobotArm => NonlinearModel::RobotArm,
    };

    let disturbance = match bench {
        Benchmark::RobotArm => Disturbance::None,
        Benchmark::UnbalancedDisk => match over.and_then(|o| o.noise.as_ref()) {
            None => Disturbance::disk_noise(seed),
            Some(Value::Bool(false)) => Disturbance::None,
            Some(Value::Bool(true)) => Disturbance::disk_noise(seed),
            Some(Value::Object(m)) => {
                let num = |key: &str, default: f64| -> Result<f64, Failure> {
                    match m.get(key) {
                        None => Ok(default),
                        Some(v) => v.as_f64().ok_or_else(|| {
                            Failure::config(format!("noise `{key}` must be a number"))
                        }),
                    }
                };
                Disturbance::FilteredNoise {
                    seed: m
                        .get("seed")
                        .map(|v| {
                            v.as_u64().ok_or_else(|| {
                                Failure::config("noise `seed` must be an integer".into())
                            })
                        })
                        .transpose()?
                        .unwrap_or(seed),
                    variance: num("variance", 70.0)?,
                    hold: num("hold", 0.01)?,
                }
            }
            Some(_) => {
                return Err(Failure::config(
                    "simulation `noise` must be a boolean or an object".into(),
                ));
            }
        },
    };

    let t_final = over.and_then(|o| o.t_final).unwrap_or(10.0);
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Failure::config("simulation t_final must be positive".into()));
    }

    Ok(SimScenario {
        model,
        reference,
        t_final,
        disturbance,
        opts,
    })
}

#[allow(clippy::too_many_arguments)]
fn snapshot_json(
    plant: &Value,
    seed: u64,
    profile_name: &str,
    cfg: &AllocationConfig,
    init: &InitSpec,
    n_target: usize,
    out: &Path,
    sim: Option<&SimScenario>,
) -> Value {
    let init_v = match init {
        InitSpec::Corners => json!({ "mode": "corners" }),
        InitSpec::Random { n0 } => json!({ "mode": "random", "n0": n0 }),
        InitSpec::Explicit { points } => json!({ "mode": "explicit", "points": points }),
    };
    let sim_v = sim.map(|s| {
        let noise = match s.disturbance {
            Disturbance::None => json!(false),
            Disturbance::FilteredNoise { seed, variance, hold } => {
                json!({ "seed": seed, "variance": variance, "hold": hold })
            }
        };
        let delta1 = match s.model {
            NonlinearModel::UnbalancedDisk { delta1 } => json!(delta1),
            NonlinearModel::RobotArm => Value::Null,
        };
        json!({
            "reference": s.reference,
            "t_final": s.t_final,
            "delta1": delta1,
            "noise": noise,
            "rel_tol": s.opts.rel_tol,
            "abs_tol": s.opts.abs_tol,
            "max_step": s.opts.max_step,
            "dt_out": s.opts.dt_out,
        })
    });
    json!({
        "plant": plant,
        "seed": seed,
        "profile": profile_name,
        "cost": cfg.cost.to_json(),
        "controller": {
            "n_xk": cfg.n_xk,
            "direct_feedthrough": cfg.direct_feedthrough,
        },
        "synthesis": {
            "restarts": cfg.synthesis.restarts,
            "phase1_budget": cfg.synthesis.phase1_budget,
            "phase2_budget": cfg.synthesis.phase2_budget,
            "stability_margin": cfg.synthesis.stability_margin,
            "init_scale": cfg.synthesis.init_scale,
            "stability_only": cfg.synthesis.stability_only,
        },
        "acquisition": {
            "margin": cfg.acquisition.margin,
            "budget": cfg.acquisition.budget,
            "initial_samples": cfg.acquisition.initial_samples,
            "fit_restarts": cfg.acquisition.fit_restarts,
            "multistart": cfg.acquisition.multistart,
            "refine_sweeps": cfg.acquisition.refine_sweeps,
        },
        "allocation": {
            "improvement_tol": cfg.improvement_tol,
            "patience": cfg.patience,
        },
        "init": init_v,
        "n_target": n_target,
        "out": out.display().to_string(),
        "simulation": sim_v,
    })
}

/// Rebuilds the plant recorded in a run snapshot.
pub fn plant_from_snapshot(snapshot: &Value) -> Result<LfrPlant, Failure> {
    let plant_v = snapshot
        .get("plant")
        .ok_or_else(|| Failure::config("run snapshot has no `plant` entry".into()))?;
    if let Some(name) = plant_v.get("builtin").and_then(Value::as_str) {
        match name {
            "unbalanced_disk" => Ok(gridalloc_core::models::disk::genplant()),
            "robot_arm" => arm::genplant(&arm_preset_domain()?).map_err(cfg_err),
            other => Err(Failure::config(format!("unknown builtin plant `{other}`"))),
        }
    } else if let Some(embedded) = plant_v.get("embedded") {
        parse_plant(embedded)
    } else {
        Err(Failure::config("run snapshot plant entry is malformed".into()))
    }
}
