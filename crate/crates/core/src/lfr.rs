//! Uncertain and parameter-varying plants in linear fractional form.
//!
//! A plant couples a nominal LTI block to a diagonal parameter matrix
//! `Delta(theta) = diag(theta_1 I, ..., theta_r I)` through a dedicated
//! `delta` channel group on each side. Freezing `theta` and closing the loop
//! yields an ordinary LTI model; the parameter box is a closed interval per
//! block, boundary included.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lti::{upper_lft, StateSpaceModel};

/// One scalar parameter block: `rep` copies of the same scalar on the
/// diagonal, ranging over the closed interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBlock {
    pub name: String,
    pub rep: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Ordered collection of parameter blocks describing the diagonal structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaStructure {
    blocks: Vec<DeltaBlock>,
}

impl DeltaStructure {
    pub fn new(blocks: Vec<DeltaBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Invalid("at least one parameter block required".into()));
        }
        for b in &blocks {
            if b.name.is_empty() {
                return Err(Error::Invalid("empty block name".into()));
            }
            if b.rep == 0 {
                return Err(Error::Invalid(format!("block `{}` has zero repetition", b.name)));
            }
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo <= b.hi) {
                return Err(Error::Invalid(format!(
                    "block `{}` needs finite bounds with lo <= hi",
                    b.name
                )));
            }
        }
        let mut names: Vec<&str> = blocks.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != blocks.len() {
            return Err(Error::Invalid("duplicate block names".into()));
        }
        Ok(Self { blocks })
    }

    /// Unit box structure `[-1, 1]^r` with each block repeated once.
    pub fn unit_box(names: &[&str]) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|n| DeltaBlock {
                    name: n.to_string(),
                    rep: 1,
                    lo: -1.0,
                    hi: 1.0,
                })
                .collect(),
        )
    }

    pub fn blocks(&self) -> &[DeltaBlock] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total diagonal dimension, i.e. the sum of repetitions.
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.rep).sum()
    }

    /// Verifies that a point has one coordinate per block and lies inside
    /// the closed box.
    pub fn check_point(&self, point: &GridPoint) -> Result<()> {
        if point.dim() != self.n_blocks() {
            return Err(Error::Shape(format!(
                "point has {} coordinates, structure has {} blocks",
                point.dim(),
                self.n_blocks()
            )));
        }
        for (b, &v) in self.blocks.iter().zip(point.coords()) {
            if v < b.lo || v > b.hi {
                return Err(Error::Domain(format!(
                    "coordinate {} of block `{}` outside [{}, {}]",
                    v, b.name, b.lo, b.hi
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, point: &GridPoint) -> bool {
        self.check_point(point).is_ok()
    }

    /// Lower and upper corners of the box, one entry per block.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.blocks.iter().map(|b| b.lo).collect(),
            self.blocks.iter().map(|b| b.hi).collect(),
        )
    }

    pub fn min_corner(&self) -> GridPoint {
        GridPoint::new(self.blocks.iter().map(|b| b.lo).collect()).unwrap()
    }

    pub fn max_corner(&self) -> GridPoint {
        GridPoint::new(self.blocks.iter().map(|b| b.hi).collect()).unwrap()
    }

    pub fn midpoint(&self) -> GridPoint {
        GridPoint::new(self.blocks.iter().map(|b| 0.5 * (b.lo + b.hi)).collect()).unwrap()
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b.hi - b.lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Affine map of a point onto the unit box `[0, 1]^r`; degenerate
    /// (zero-width) intervals map to 0.
    pub fn rescale_to_unit(&self, point: &GridPoint) -> Vec<f64> {
        self.blocks
            .iter()
            .zip(point.coords())
            .map(|(b, &v)| {
                let width = b.hi - b.lo;
                if width > 0.0 {
                    (v - b.lo) / width
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.blocks
                .iter()
                .map(|b| json!({"name": b.name, "rep": b.rep, "lo": b.lo, "hi": b.hi}))
                .collect(),
        )
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::Format("delta_blocks must be an array".into()))?;
        let mut blocks = Vec::with_capacity(arr.len());
        for item in arr {
            let obj = item
                .as_object()
                .ok_or_else(|| Error::Format("delta block must be an object".into()))?;
            let name = obj
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Format("delta block needs a string `name`".into()))?;
            let rep = obj
                .get("rep")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Format("delta block needs integer `rep`".into()))?;
            let lo = obj
                .get("lo")
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Format("delta block needs numeric `lo`".into()))?;
            let hi = obj
                .get("hi")
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Format("delta block needs numeric `hi`".into()))?;
            blocks.push(DeltaBlock {
                name: name.to_string(),
                rep: rep as usize,
                lo,
                hi,
            });
        }
        Self::new(blocks)
    }
}

/// A point in the parameter box: one scalar per block.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    coords: Vec<f64>,
}

impl GridPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Invalid("empty grid point".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite grid point coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Chebyshev distance, used for duplicate detection.
    pub fn linf_distance(&self, other: &GridPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    }
}

/// Builds the square block-diagonal parameter matrix for a point.
///
/// Blocks appear in structure order, each scalar repeated `rep` times on the
/// diagonal; the point must lie inside the closed box.
pub fn delta_matrix(structure: &DeltaStructure, point: &GridPoint) -> Result<DMatrix<f64>> {
    structure.check_point(point)?;
    let dim = structure.total_dim();
    let mut m = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for (block, &v) in structure.blocks().iter().zip(point.coords()) {
        for _ in 0..block.rep {
            m[(k, k)] = v;
            k += 1;
        }
    }
    Ok(m)
}

/// How a parameter block drives one loop-input channel: channel `i` of the
/// closure carries `theta[block] * z[source]`.
///
/// The default (no map) wiring is square and diagonal; an explicit map lets
/// one repeated scalar feed several channels from shared loop outputs, which
/// arises when products of parameters are realized with a minimal number of
/// channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationEntry {
    pub block: usize,
    pub source: usize,
}

/// Whether the parameter blocks model uncertainty (one robust controller for
/// the whole box) or a measured scheduling variable (controller may vary
/// over the box).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    Robust,
    Lpv,
}

impl PlantKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlantKind::Robust => "robust",
            PlantKind::Lpv => "lpv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(PlantKind::Robust),
            "lpv" => Ok(PlantKind::Lpv),
            other => Err(Error::Format(format!("unknown plant kind `{other}`"))),
        }
    }
}

/// An LTI block with a designated `delta` loop, a parameter structure over a
/// box, and named control/measurement groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LfrPlant {
    model: StateSpaceModel,
    delta: DeltaStructure,
    kind: PlantKind,
    control_group: String,
    measurement_group: String,
    replication: Option<Vec<ReplicationEntry>>,
}

impl LfrPlant {
    /// Builds a plant with the default square diagonal closure.
    pub fn new(
        model: StateSpaceModel,
        delta: DeltaStructure,
        kind: PlantKind,
        control_group: &str,
        measurement_group: &str,
    ) -> Result<Self> {
        Self::build(model, delta, kind, control_group, measurement_group, None)
    }

    /// Builds a plant whose loop-input channels are wired through an
    /// explicit replication map instead of the square diagonal default.
    pub fn with_replication(
        model: StateSpaceModel,
        delta: DeltaStructure,
        kind: PlantKind,
        control_group: &str,
        measurement_group: &str,
        entries: Vec<ReplicationEntry>,
    ) -> Result<Self> {
        Self::build(
            model,
            delta,
            kind,
            control_group,
            measurement_group,
            Some(entries),
        )
    }

    fn build(
        model: StateSpaceModel,
        delta: DeltaStructure,
        kind: PlantKind,
        control_group: &str,
        measurement_group: &str,
        replication: Option<Vec<ReplicationEntry>>,
    ) -> Result<Self> {
        let din = model.input_group("delta")?.clone();
        let dout = model.output_group("delta")?.clone();
        if model.input_groups()[0].name != "delta" || model.output_groups()[0].name != "delta" {
            return Err(Error::Group("`delta` must be the first group on both sides".into()));
        }
        match &replication {
            None => {
                let dim = delta.total_dim();
                if din.len != dim || dout.len != dim {
                    return Err(Error::Shape(format!(
                        "delta channels ({} in, {} out) must both match structure dimension {}",
                        din.len, dout.len, dim
                    )));
                }
            }
            Some(entries) => {
                if entries.len() != din.len {
                    return Err(Error::Shape(format!(
                        "replication map has {} entries, delta input group has {} channels",
                        entries.len(),
                        din.len
                    )));
                }
                for e in entries {
                    if e.block >= delta.n_blocks() {
                        return Err(Error::Invalid(format!(
                            "replication entry references block {}, structure has {}",
                            e.block,
                            delta.n_blocks()
                        )));
                    }
                    if e.source >= dout.len {
                        return Err(Error::Invalid(format!(
                            "replication entry references output channel {}, group has {}",
                            e.source, dout.len
                        )));
                    }
                }
            }
        }
        model.input_group(control_group)?;
        model.output_group(measurement_group)?;
        if control_group == "delta" || measurement_group == "delta" {
            return Err(Error::Group("control/measurement group cannot be `delta`".into()));
        }

        let plant = Self {
            model,
            delta,
            kind,
            control_group: control_group.to_string(),
            measurement_group: measurement_group.to_string(),
            replication,
        };
        plant.check_well_posedness()?;
        Ok(plant)
    }

    /// Probes invertibility of the fractional closure at the box corners
    /// (when there are at most 8 blocks) and at the midpoint.
    fn check_well_posedness(&self) -> Result<()> {
        let r = self.delta.n_blocks();
        let mut probes = vec![self.delta.midpoint()];
        if r <= 8 {
            let (lo, hi) = self.delta.bounds();
            for mask in 0..(1usize << r) {
                let coords: Vec<f64> = (0..r)
                    .map(|i| if mask & (1 << i) != 0 { hi[i] } else { lo[i] })
                    .collect();
                probes.push(GridPoint::new(coords).unwrap());
            }
        }
        for p in &probes {
            self.local_model_at(p).map_err(|e| match e {
                Error::WellPosed(msg) => Error::WellPosed(format!(
                    "fractional closure singular at {:?}: {msg}",
                    p.coords()
                )),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }

    pub fn delta(&self) -> &DeltaStructure {
        &self.delta
    }

    pub fn kind(&self) -> PlantKind {
        self.kind
    }

    pub fn control_group(&self) -> &str {
        &self.control_group
    }

    pub fn measurement_group(&self) -> &str {
        &self.measurement_group
    }

    pub fn replication(&self) -> Option<&[ReplicationEntry]> {
        self.replication.as_deref()
    }

    /// The (possibly rectangular) closure matrix mapping the delta output
    /// channels to the delta input channels at a point.
    pub fn effective_closure(&self, point: &GridPoint) -> Result<DMatrix<f64>> {
        self.delta.check_point(point)?;
        match &self.replication {
            None => delta_matrix(&self.delta, point),
            Some(entries) => {
                let n_out = self.model.output_group("delta")?.len;
                let mut m = DMatrix::zeros(entries.len(), n_out);
                for (i, e) in entries.iter().enumerate() {
                    m[(i, e.source)] = point.coords()[e.block];
                }
                Ok(m)
            }
        }
    }

    /// Frozen local model at a scheduling point, with the control and
    /// measurement groups renamed to the canonical `u` and `y`.
    pub fn local_model_at(&self, point: &GridPoint) -> Result<StateSpaceModel> {
        let closure = self.effective_closure(point)?;
        let mut local = upper_lft(&closure, &self.model, "delta")?;
        if self.control_group != "u" {
            local.rename_input_group(&self.control_group, "u")?;
        }
        if self.measurement_group != "y" {
            local.rename_output_group(&self.measurement_group, "y")?;
        }
        Ok(local)
    }

    pub fn to_json(&self) -> Value {
        let mut obj = match self.model.to_json() {
            Value::Object(o) => o,
            _ => unreachable!(),
        };
        obj.insert("kind".into(), json!(self.kind.as_str()));
        obj.insert("delta_blocks".into(), self.delta.to_json());
        obj.insert("control_group".into(), json!(self.control_group));
        obj.insert("measurement_group".into(), json!(self.measurement_group));
        if let Some(entries) = &self.replication {
            obj.insert(
                "replication_map".into(),
                Value::Array(
                    entries
                        .iter()
                        .map(|e| json!([e.block, e.source]))
                        .collect(),
                ),
            );
        }
        Value::Object(obj)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("plant must be a JSON object".into()))?;
        let model = StateSpaceModel::from_json(v)?;
        let kind = PlantKind::parse(
            obj.get("kind")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Format("plant needs a string `kind`".into()))?,
        )?;
        let delta = DeltaStructure::from_json(
            obj.get("delta_blocks")
                .ok_or_else(|| Error::Format("plant needs `delta_blocks`".into()))?,
        )?;
        let control = obj
            .get("control_group")
            .and_then(Value::as_str)
            .unwrap_or("u");
        let meas = obj
            .get("measurement_group")
            .and_then(Value::as_str)
            .unwrap_or("y");
        let replication = match obj.get("replication_map") {
            None => None,
            Some(Value::Array(items)) => {
                let mut entries = Vec::with_capacity(items.len());
                for item in items {
                    let pair = item
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .ok_or_else(|| {
                            Error::Format("replication entry must be [block, source]".into())
                        })?;
                    entries.push(ReplicationEntry {
                        block: pair[0].as_u64().ok_or_else(|| {
                            Error::Format("replication block must be an integer".into())
                        })? as usize,
                        source: pair[1].as_u64().ok_or_else(|| {
                            Error::Format("replication source must be an integer".into())
                        })? as usize,
                    });
                }
                Some(entries)
            }
            Some(_) => return Err(Error::Format("replication_map must be an array".into())),
        };
        Self::build(model, delta, kind, control, meas, replication)
    }
}

/// Freezes the parameters at a point and closes the delta loop, returning a
/// plain LTI model whose control input group is renamed to `u` and whose
/// measurement output group is renamed to `y`.
pub fn evaluate_local(plant: &LfrPlant, point: &GridPoint) -> Result<StateSpaceModel> {
    plant.local_model_at(point)
}

/// Draws `count` points uniformly from the box, deterministically in `seed`.
pub fn sample_domain(structure: &DeltaStructure, count: usize, seed: u64) -> Vec<GridPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coords = structure
                .blocks()
                .iter()
                .map(|b| {
                    if b.hi > b.lo {
                        rng.gen_range(b.lo..=b.hi)
                    } else {
                        b.lo
                    }
                })
                .collect();
            GridPoint::new(coords).unwrap()
        })
        .collect()
}

/// Convenience constructor used across tests and builders.
pub fn point(coords: &[f64]) -> GridPoint {
    GridPoint::new(coords.to_vec()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_block_structure() -> DeltaStructure {
        DeltaStructure::new(vec![
            DeltaBlock {
                name: "m".into(),
                rep: 2,
                lo: -1.0,
                hi: 1.0,
            },
            DeltaBlock {
                name: "p".into(),
                rep: 1,
                lo: -1.0,
                hi: 1.0,
            },
        ])
        .unwrap()
    }

    #[test]
    fn delta_matrix_repeats_blocks() {
        let s = two_block_structure();
        let m = delta_matrix(&s, &point(&[0.3, -0.7])).unwrap();
        assert_eq!(m.shape(), (3, 3));
        assert_relative_eq!(m[(0, 0)], 0.3);
        assert_relative_eq!(m[(1, 1)], 0.3);
        assert_relative_eq!(m[(2, 2)], -0.7);
        assert_relative_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn delta_matrix_rejects_out_of_box() {
        let s = two_block_structure();
        assert!(matches!(
            delta_matrix(&s, &point(&[1.2, 0.0])),
            Err(Error::Domain(_))
        ));
        // Boundary points are inside the closed box.
        assert!(delta_matrix(&s, &point(&[1.0, -1.0])).is_ok());
    }

    #[test]
    fn delta_matrix_rejects_dimension_mismatch() {
        let s = two_block_structure();
        assert!(matches!(
            delta_matrix(&s, &point(&[0.0])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn structure_validation() {
        assert!(DeltaStructure::new(vec![]).is_err());
        assert!(DeltaStructure::new(vec![DeltaBlock {
            name: "a".into(),
            rep: 0,
            lo: 0.0,
            hi: 1.0
        }])
        .is_err());
        assert!(DeltaStructure::new(vec![DeltaBlock {
            name: "a".into(),
            rep: 1,
            lo: 1.0,
            hi: 0.0
        }])
        .is_err());
    }

    #[test]
    fn sample_domain_is_deterministic_and_in_box() {
        let s = two_block_structure();
        let a = sample_domain(&s, 25, 7);
        let b = sample_domain(&s, 25, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| s.contains(p)));
        let c = sample_domain(&s, 25, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn rescale_maps_box_to_unit() {
        let s = DeltaStructure::new(vec![DeltaBlock {
            name: "x".into(),
            rep: 1,
            lo: 2.0,
            hi: 6.0,
        }])
        .unwrap();
        assert_relative_eq!(s.rescale_to_unit(&point(&[2.0]))[0], 0.0);
        assert_relative_eq!(s.rescale_to_unit(&point(&[6.0]))[0], 1.0);
        assert_relative_eq!(s.rescale_to_unit(&point(&[4.0]))[0], 0.5);
    }

    fn simple_plant() -> LfrPlant {
        // dx = (-1 + theta) x + u, y = x: delta channel feeds the state.
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::zeros(2, 2),
            &[("delta", 1), ("u", 1)],
            &[("delta", 1), ("y", 1)],
        )
        .unwrap();
        let delta = DeltaStructure::unit_box(&["k"]).unwrap();
        LfrPlant::new(model, delta, PlantKind::Robust, "u", "y").unwrap()
    }

    #[test]
    fn evaluate_local_closes_scalar_loop() {
        let plant = simple_plant();
        let local = evaluate_local(&plant, &point(&[0.5])).unwrap();
        assert_relative_eq!(local.a()[(0, 0)], -0.5);
        assert_eq!(local.input_groups()[0].name, "u");
        assert_eq!(local.output_groups()[0].name, "y");
        assert!(matches!(
            evaluate_local(&plant, &point(&[2.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn affine_dependence_is_exactly_linear_when_d_dd_zero() {
        let plant = simple_plant();
        let pa = point(&[-0.8]);
        let pb = point(&[0.6]);
        let mid = point(&[-0.1]);
        let la = evaluate_local(&plant, &pa).unwrap();
        let lb = evaluate_local(&plant, &pb).unwrap();
        let lm = evaluate_local(&plant, &mid).unwrap();
        let avg = (la.a() + lb.a()) * 0.5;
        assert_relative_eq!((lm.a() - avg).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn replication_map_shares_one_block_across_channels() {
        // w1 = t1 z1, w2 = t2 z1, w3 = t2 z2 with z2 = w1, so the state sees
        // t1, t2 and the product t1 t2 from two loop outputs only.
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-2.0]),
            DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 1.0]),
            DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(
                3,
                4,
                &[
                    0.0, 0.0, 0.0, 0.0, //
                    1.0, 0.0, 0.0, 0.0, //
                    0.0, 0.0, 0.0, 0.0,
                ],
            ),
            &[("delta", 3), ("u", 1)],
            &[("delta", 2), ("y", 1)],
        )
        .unwrap();
        let delta = DeltaStructure::unit_box(&["t1", "t2"]).unwrap();
        let plant = LfrPlant::with_replication(
            model,
            delta,
            PlantKind::Robust,
            "u",
            "y",
            vec![
                ReplicationEntry { block: 0, source: 0 },
                ReplicationEntry { block: 1, source: 0 },
                ReplicationEntry { block: 1, source: 1 },
            ],
        )
        .unwrap();
        let (t1, t2) = (0.5, -0.8);
        let local = evaluate_local(&plant, &point(&[t1, t2])).unwrap();
        // a_cl = -2 + 1*t1 + 2*t2 + 3*t1*t2 acting on x through z1 = x.
        let expected = -2.0 + t1 + 2.0 * t2 + 3.0 * t1 * t2;
        assert_relative_eq!(local.a()[(0, 0)], expected, epsilon = 1e-12);
    }

    #[test]
    fn replication_map_validation() {
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-2.0]),
            DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::zeros(2, 3),
            &[("delta", 2), ("u", 1)],
            &[("delta", 1), ("y", 1)],
        )
        .unwrap();
        let delta = DeltaStructure::unit_box(&["t1"]).unwrap();
        let bad_len = LfrPlant::with_replication(
            model.clone(),
            delta.clone(),
            PlantKind::Robust,
            "u",
            "y",
            vec![ReplicationEntry { block: 0, source: 0 }],
        );
        assert!(bad_len.is_err());
        let bad_block = LfrPlant::with_replication(
            model,
            delta,
            PlantKind::Robust,
            "u",
            "y",
            vec![
                ReplicationEntry { block: 0, source: 0 },
                ReplicationEntry { block: 3, source: 0 },
            ],
        );
        assert!(bad_block.is_err());
    }

    #[test]
    fn ill_posed_closure_rejected_at_construction() {
        // z = w + x feeding w = theta z: at theta = 1 the loop is singular.
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            &[("delta", 1), ("u", 1)],
            &[("delta", 1), ("y", 1)],
        )
        .unwrap();
        let delta = DeltaStructure::unit_box(&["t"]).unwrap();
        assert!(matches!(
            LfrPlant::new(model, delta, PlantKind::Robust, "u", "y"),
            Err(Error::WellPosed(_))
        ));
    }

    #[test]
    fn plant_json_round_trip() {
        let plant = simple_plant();
        let text = serde_json::to_string(&plant.to_json()).unwrap();
        let back = LfrPlant::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(plant, back);
    }
}
