//! Multiquadric interpolation of controller matrices over the scheduling
//! box, turning a finite set of point designs into a gain-scheduled
//! controller field.
//!
//! Nodes are rescaled to the unit box before any distance is computed, so
//! the shape parameter is meaningful regardless of the physical units of
//! the scheduling variables. The field reproduces the node designs exactly
//! (up to one step of iterative refinement) and extends smoothly between
//! and beyond them; queries outside the box are answered but flagged.

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::lfr::{DeltaStructure, GridPoint};
use crate::lti::{matrix_from_rows, matrix_to_rows, RCOND_FLOOR};
use crate::synthesis::{ControllerParam, ControllerStructure};

/// Multiquadric basis: `sqrt(||a - b||^2 + c^2)` on already-rescaled
/// coordinates.
pub fn rbf_distance(a: &[f64], b: &[f64], c: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (r2 + c * c).sqrt()
}

/// A controller field: one design per node, interpolated everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfControllerField {
    domain: DeltaStructure,
    nodes: Vec<GridPoint>,
    scaled: Vec<Vec<f64>>,
    c: f64,
    /// Interpolation weights, one row per node, one column per controller
    /// entry.
    w: DMatrix<f64>,
    n_xk: usize,
    n_y: usize,
    n_u: usize,
}

/// A field query: the interpolated design plus a flag for queries outside
/// the scheduling box.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub param: ControllerParam,
    pub extrapolated: bool,
}

fn flatten(param: &ControllerParam) -> Vec<f64> {
    let n_xk = param.a_k.nrows();
    let n_u = param.c_k.nrows();
    let n_y = param.b_k.ncols();
    let mut row = Vec::with_capacity((n_xk + n_u) * (n_xk + n_y));
    for i in 0..n_xk {
        for j in 0..n_xk {
            row.push(param.a_k[(i, j)]);
        }
        for j in 0..n_y {
            row.push(param.b_k[(i, j)]);
        }
    }
    for i in 0..n_u {
        for j in 0..n_xk {
            row.push(param.c_k[(i, j)]);
        }
        for j in 0..n_y {
            row.push(param.d_k[(i, j)]);
        }
    }
    row
}

fn unflatten(row: &[f64], n_xk: usize, n_y: usize, n_u: usize) -> ControllerParam {
    let mut a_k = DMatrix::zeros(n_xk, n_xk);
    let mut b_k = DMatrix::zeros(n_xk, n_y);
    let mut c_k = DMatrix::zeros(n_u, n_xk);
    let mut d_k = DMatrix::zeros(n_u, n_y);
    let mut at = 0usize;
    for i in 0..n_xk {
        for j in 0..n_xk {
            a_k[(i, j)] = row[at];
            at += 1;
        }
        for j in 0..n_y {
            b_k[(i, j)] = row[at];
            at += 1;
        }
    }
    for i in 0..n_u {
        for j in 0..n_xk {
            c_k[(i, j)] = row[at];
            at += 1;
        }
        for j in 0..n_y {
            d_k[(i, j)] = row[at];
            at += 1;
        }
    }
    ControllerParam { a_k, b_k, c_k, d_k }
}

fn mean_nearest_neighbor(scaled: &[Vec<f64>]) -> f64 {
    let n = scaled.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut nearest = f64::INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2: f64 = scaled[i]
                .iter()
                .zip(&scaled[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            nearest = nearest.min(d2.sqrt());
        }
        acc += nearest;
    }
    acc / n as f64
}

fn rcond_estimate(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, norm: f64) -> f64 {
    let n = lu.u().nrows();
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..n {
        let d = lu.u()[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if norm == 0.0 || dmax == 0.0 {
        0.0
    } else {
        dmin / dmax
    }
}

/// Fits a controller field through the node designs.
///
/// `shape` is the multiquadric parameter on the rescaled (unit-box)
/// coordinates; `None` picks half the mean nearest-neighbor distance. A
/// nearly singular kernel matrix (duplicate or pathologically clustered
/// nodes) fails with a conditioning error.
pub fn fit_field(
    domain: &DeltaStructure,
    nodes: &[GridPoint],
    params: &[ControllerParam],
    shape: Option<f64>,
) -> Result<RbfControllerField> {
    if nodes.is_empty() || nodes.len() != params.len() {
        return Err(Error::Invalid(format!(
            "need matching node and design lists, got {} and {}",
            nodes.len(),
            params.len()
        )));
    }
    for p in nodes {
        domain.check_point(p)?;
    }
    let dims = (
        params[0].a_k.nrows(),
        params[0].b_k.ncols(),
        params[0].c_k.nrows(),
    );
    for p in params {
        if (p.a_k.nrows(), p.b_k.ncols(), p.c_k.nrows()) != dims {
            return Err(Error::Shape("node designs differ in structure".into()));
        }
    }
    let (n_xk, n_y, n_u) = dims;
    let scaled: Vec<Vec<f64>> = nodes.iter().map(|p| domain.rescale_to_unit(p)).collect();

    let c = match shape {
        Some(c) => {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Invalid("shape parameter must be positive".into()));
            }
            c
        }
        None => {
            if nodes.len() == 1 {
                0.5
            } else {
                let nn = 0.5 * mean_nearest_neighbor(&scaled);
                if nn > 0.0 {
                    nn
                } else {
                    return Err(Error::Conditioning { rcond: 0.0 });
                }
            }
        }
    };

    let n = nodes.len();
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            dist[(i, j)] = rbf_distance(&scaled[i], &scaled[j], c);
        }
    }
    let m_cols = (n_xk + n_u) * (n_xk + n_y);
    let mut targets = DMatrix::zeros(n, m_cols);
    for (i, p) in params.iter().enumerate() {
        let row = flatten(p);
        for (j, v) in row.iter().enumerate() {
            targets[(i, j)] = *v;
        }
    }

    let lu = dist.clone().lu();
    let rcond = rcond_estimate(&lu, dist.norm());
    if rcond < RCOND_FLOOR {
        return Err(Error::Conditioning { rcond });
    }
    let mut w = lu
        .solve(&targets)
        .ok_or(Error::Conditioning { rcond })?;
    // One refinement pass cleans up the node-exactness residual.
    let residual = &targets - &dist * &w;
    if let Some(correction) = lu.solve(&residual) {
        w += correction;
    }

    Ok(RbfControllerField {
        domain: domain.clone(),
        nodes: nodes.to_vec(),
        scaled,
        c,
        w,
        n_xk,
        n_y,
        n_u,
    })
}

impl RbfControllerField {
    pub fn domain(&self) -> &DeltaStructure {
        &self.domain
    }

    pub fn nodes(&self) -> &[GridPoint] {
        &self.nodes
    }

    pub fn shape(&self) -> f64 {
        self.c
    }

    pub fn structure(&self) -> ControllerStructure {
        ControllerStructure {
            n_xk: self.n_xk,
            n_y: self.n_y,
            n_u: self.n_u,
            direct_feedthrough: true,
        }
    }

    /// Interpolated design at a scheduling point. Points outside the box
    /// are evaluated anyway and flagged as extrapolated.
    pub fn query(&self, point: &GridPoint) -> Result<FieldSample> {
        if point.dim() != self.domain.n_blocks() {
            return Err(Error::Shape(format!(
                "query has {} coordinates, field expects {}",
                point.dim(),
                self.domain.n_blocks()
            )));
        }
        let q = self.domain.rescale_to_unit(point);
        let mut row = vec![0.0; self.w.ncols()];
        for (i, s) in self.scaled.iter().enumerate() {
            let d = rbf_distance(&q, s, self.c);
            for (j, r) in row.iter_mut().enumerate() {
                *r += d * self.w[(i, j)];
            }
        }
        Ok(FieldSample {
            param: unflatten(&row, self.n_xk, self.n_y, self.n_u),
            extrapolated: !self.domain.contains(point),
        })
    }

    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|p| json!(p.coords().to_vec()))
            .collect();
        let mut obj = Map::new();
        obj.insert("domain".into(), self.domain.to_json());
        obj.insert("nodes".into(), Value::Array(nodes));
        obj.insert("c".into(), json!(self.c));
        obj.insert("W".into(), matrix_to_rows(&self.w));
        obj.insert("dims".into(), json!([self.n_xk, self.n_y, self.n_u]));
        Value::Object(obj)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("controller field must be a JSON object".into()))?;
        let get = |name: &str| -> Result<&Value> {
            obj.get(name)
                .ok_or_else(|| Error::Format(format!("missing field `{name}`")))
        };
        let domain = DeltaStructure::from_json(get("domain")?)?;
        let nodes_v = get("nodes")?
            .as_array()
            .ok_or_else(|| Error::Format("nodes must be an array".into()))?;
        let mut nodes = Vec::with_capacity(nodes_v.len());
        for nv in nodes_v {
            let coords: Vec<f64> = nv
                .as_array()
                .ok_or_else(|| Error::Format("node must be an array".into()))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::Format("node coordinate must be a number".into()))
                })
                .collect::<Result<_>>()?;
            nodes.push(GridPoint::new(coords)?);
        }
        let c = get("c")?
            .as_f64()
            .ok_or_else(|| Error::Format("c must be a number".into()))?;
        let w = matrix_from_rows(get("W")?)?;
        let dims = get("dims")?
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| Error::Format("dims must be [n_xk, n_y, n_u]".into()))?;
        let dim = |i: usize| -> Result<usize> {
            dims[i]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format("dims entries must be integers".into()))
        };
        let (n_xk, n_y, n_u) = (dim(0)?, dim(1)?, dim(2)?);
        if w.nrows() != nodes.len() || w.ncols() != (n_xk + n_u) * (n_xk + n_y) {
            return Err(Error::Format("weight matrix does not match nodes and dims".into()));
        }
        let scaled = nodes.iter().map(|p| domain.rescale_to_unit(p)).collect();
        Ok(Self {
            domain,
            nodes,
            scaled,
            c,
            w,
            n_xk,
            n_y,
            n_u,
        })
    }
}
