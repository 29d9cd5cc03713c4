//! Subcommand implementations. Each command reads its inputs, runs the
//! corresponding library routine, and writes artifacts into the run
//! directory.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use gridalloc_core::gp::ObservationSet;
use gridalloc_core::{
    allocate, close_loop, common_lyapunov_heuristic, evaluate_local, waveform,
    worst_case_sweep, AllocTraceRow, Error, GridController, LfrPlant, LoopController,
    Selection, SweepResult,
};

use crate::config;
use crate::io::{parse_csv, read_json, write_atomic, write_json};
use crate::{CommonArgs, Failure};

fn runtime(e: Error) -> Failure {
    Failure::runtime(e.to_string())
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn trace_csv(trace: &[AllocTraceRow], d: usize) -> String {
    let mut out = String::from("iteration");
    for i in 1..=d {
        out.push_str(&format!(",theta_{i}"));
    }
    out.push_str(",cost_before,cost_after,grid_size\n");
    for row in trace {
        out.push_str(&row.iteration.to_string());
        for v in row.point.coords() {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            fmt(row.cost_before),
            fmt(row.cost_after),
            row.grid_size
        ));
    }
    out
}

fn sweep_csv(sweep: &SweepResult, d: usize) -> String {
    let mut out = String::new();
    for i in 1..=d {
        out.push_str(&format!("theta_{i},"));
    }
    out.push_str("cost\n");
    for s in &sweep.samples {
        for v in s.point.coords() {
            out.push_str(&fmt(*v));
            out.push(',');
        }
        out.push_str(&fmt(s.cost));
        out.push('\n');
    }
    out
}

fn write_selection(dir: &Path, selection: &Selection) -> Result<(), Failure> {
    write_json(&dir.join("selection.json"), &selection.to_json())
}

fn write_trace(dir: &Path, trace: &[AllocTraceRow], d: usize) -> Result<(), Failure> {
    write_atomic(&dir.join("trace.csv"), trace_csv(trace, d).as_bytes())
}

pub fn cmd_allocate(args: &CommonArgs) -> Result<(), Failure> {
    run_design(args, false)
}

pub fn cmd_synthesize(args: &CommonArgs) -> Result<(), Failure> {
    run_design(args, true)
}

fn run_design(args: &CommonArgs, fixed_grid: bool) -> Result<(), Failure> {
    let mut r = config::resolve(args)?;
    if fixed_grid {
        r.cfg.max_outer = 0;
    }
    let d = r.plant.delta().n_blocks();
    write_json(&r.out.join("config_resolved.json"), &r.snapshot)?;
    match allocate(&r.plant, &r.init, &r.cfg, r.seed) {
        Ok(outcome) => {
            write_selection(&r.out, &outcome.selection)?;
            write_json(&r.out.join("controller.json"), &outcome.controller.to_json())?;
            let obs = outcome
                .observations
                .unwrap_or_else(|| ObservationSet::new(r.plant.delta().clone()));
            write_atomic(&r.out.join("observations.csv"), obs.to_csv().as_bytes())?;
            write_trace(&r.out, &outcome.trace, d)?;
            println!(
                "{}: grid size {}, worst cost {}{}",
                if fixed_grid { "synthesize" } else { "allocate" },
                outcome.selection.len(),
                fmt(outcome.cost),
                if outcome.early_stopped { " (early stop)" } else { "" }
            );
            Ok(())
        }
        Err(Error::Aborted {
            iteration,
            source,
            partial,
        }) => {
            write_selection(&r.out, &partial.selection)?;
            write_trace(&r.out, &partial.trace, d)?;
            Err(Failure::runtime(format!(
                "design aborted at iteration {iteration}: {source}"
            )))
        }
        Err(e) => Err(runtime(e)),
    }
}

fn read_controller(dir: &Path) -> Result<GridController, Failure> {
    let v = read_json(&dir.join("controller.json"))?;
    GridController::from_json(&v).map_err(|e| Failure::config(e.to_string()))
}

pub fn cmd_analyze(args: &CommonArgs) -> Result<(), Failure> {
    let r = config::resolve(args)?;
    let controller = read_controller(&r.out)?;
    let density = args.density.unwrap_or(21);
    let sweep = worst_case_sweep(&r.plant, &controller, &r.cfg.cost, density).map_err(runtime)?;
    let d = r.plant.delta().n_blocks();
    write_atomic(&r.out.join("sweep.csv"), sweep_csv(&sweep, d).as_bytes())?;
    let worst = sweep.worst();
    println!(
        "analyze: {} samples, worst cost {} at {:?}",
        sweep.samples.len(),
        fmt(worst.cost),
        worst.point.coords()
    );
    Ok(())
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<(), Failure> {
    let r = config::resolve(args)?;
    let scenario = r.sim.as_ref().ok_or_else(|| {
        Failure::config("simulate needs a builtin benchmark plant".into())
    })?;
    let controller = read_controller(&r.out)?;
    let loop_controller = match &controller {
        GridController::Robust(p) => LoopController::Fixed(p),
        GridController::Scheduled(f) => LoopController::Scheduled(f),
    };
    let reference = waveform(&scenario.reference).map_err(runtime)?;
    let result = gridalloc_core::simulate_closed_loop(
        &scenario.model,
        &loop_controller,
        &reference,
        &scenario.disturbance,
        (0.0, scenario.t_final),
        &scenario.opts,
    )
    .map_err(runtime)?;
    write_atomic(&r.out.join("sim.csv"), result.to_csv().as_bytes())?;
    let rmse: Vec<String> = result.rmse.iter().map(|v| fmt(*v)).collect();
    println!(
        "simulate: {} samples, rmse [{}]{}",
        result.t.len(),
        rmse.join(", "),
        if result.diverged { " (diverged)" } else { "" }
    );
    Ok(())
}

fn f64_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(fmt(x))
    }
}

fn cqlf_entry(plant: &LfrPlant, selection: &Selection, controller: &GridController) -> Value {
    let mut mats = Vec::new();
    for point in selection.points() {
        let closed = evaluate_local(plant, point)
            .and_then(|local| controller.at(point).and_then(|p| close_loop(&local, &p)));
        match closed {
            Ok(m) => mats.push(m.a().clone()),
            Err(_) => {
                return json!({ "checked": false, "all_hurwitz": false, "certified": false });
            }
        }
    }
    match common_lyapunov_heuristic(&mats) {
        Ok(Some(_)) => json!({ "checked": true, "all_hurwitz": true, "certified": true }),
        Ok(None) => json!({ "checked": true, "all_hurwitz": true, "certified": false }),
        Err(_) => json!({ "checked": true, "all_hurwitz": false, "certified": false }),
    }
}

fn tracking_entry(dir: &Path) -> Result<Value, Failure> {
    let path = dir.join("sim.csv");
    if !path.exists() {
        return Ok(Value::Null);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let (header, rows) = parse_csv(&text, &path)?;
    if rows.is_empty() {
        return Err(Failure::config(format!("{} has no data rows", path.display())));
    }
    let cols = |prefix: &str| -> Vec<usize> {
        header
            .iter()
            .enumerate()
            .filter(|(_, name)| {
                name.starts_with(prefix) && name[prefix.len()..].chars().all(|c| c.is_ascii_digit())
            })
            .map(|(i, _)| i)
            .collect()
    };
    let x_cols = cols("x");
    let y_cols = cols("y");
    let r_cols = cols("r");
    if y_cols.len() != r_cols.len() || y_cols.is_empty() {
        return Err(Failure::config(format!(
            "{} header lacks matching y/r columns",
            path.display()
        )));
    }
    let last = rows.last().unwrap();
    let x_norm: f64 = x_cols
        .iter()
        .map(|&i| last[i] * last[i])
        .sum::<f64>()
        .sqrt();
    let diverged = !x_norm.is_finite() || x_norm > 1e8;
    let rmse: Vec<Value> = if diverged {
        y_cols.iter().map(|_| f64_json(f64::INFINITY)).collect()
    } else {
        y_cols
            .iter()
            .zip(&r_cols)
            .map(|(&yi, &ri)| {
                let ms = rows
                    .iter()
                    .map(|row| (row[yi] - row[ri]).powi(2))
                    .sum::<f64>()
                    / rows.len() as f64;
                f64_json(ms.sqrt())
            })
            .collect()
    };
    Ok(json!({ "rmse": rmse, "diverged": diverged, "samples": rows.len() }))
}

pub fn cmd_report(args: &CommonArgs) -> Result<(), Failure> {
    let dir: PathBuf = args.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let snapshot = read_json(&dir.join("config_resolved.json"))?;
    let plant = config::plant_from_snapshot(&snapshot)?;
    let selection_v = read_json(&dir.join("selection.json"))?;
    let selection = Selection::from_json(&selection_v).map_err(|e| Failure::config(e.to_string()))?;
    let controller = read_controller(&dir)?;

    let sweep_path = dir.join("sweep.csv");
    let sweep_text = std::fs::read_to_string(&sweep_path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", sweep_path.display())))?;
    let (sweep_header, sweep_rows) = parse_csv(&sweep_text, &sweep_path)?;
    if sweep_rows.is_empty() {
        return Err(Failure::config(format!(
            "{} has no data rows",
            sweep_path.display()
        )));
    }
    let cost_col = sweep_header.len() - 1;
    if sweep_header[cost_col] != "cost" {
        return Err(Failure::config(format!(
            "{} last column must be `cost`",
            sweep_path.display()
        )));
    }
    let worst_row = sweep_rows
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a[cost_col].total_cmp(&b[cost_col]))
        .map(|(i, _)| i)
        .unwrap();
    let worst_cost = sweep_rows[worst_row][cost_col];
    let worst_point: Vec<f64> = sweep_rows[worst_row][..cost_col].to_vec();
    let all_finite = sweep_rows.iter().all(|row| row[cost_col].is_finite());

    let cqlf = cqlf_entry(&plant, &selection, &controller);
    let tracking = tracking_entry(&dir)?;

    let points_v = selection
        .to_json()
        .get("points")
        .cloned()
        .unwrap_or(Value::Null);
    let summary = json!({
        "grid": {
            "size": selection.len(),
            "points": points_v,
        },
        "controller": match controller.kind() {
            gridalloc_core::PlantKind::Robust => "robust",
            gridalloc_core::PlantKind::Lpv => "scheduled",
        },
        "worst_case": {
            "cost": f64_json(worst_cost),
            "point": worst_point,
            "samples": sweep_rows.len(),
        },
        "stability": {
            "all_sweep_costs_finite": all_finite,
            "cqlf": cqlf,
        },
        "tracking": tracking,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "report: worst cost {} over {} samples, grid size {}",
        fmt(worst_cost),
        sweep_rows.len(),
        selection.len()
    );
    Ok(())
}
