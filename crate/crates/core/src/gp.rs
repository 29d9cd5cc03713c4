//! Gaussian-process regression of a scalar cost over the parameter box.
//!
//! Observations may carry an infinite cost (a failed closed loop); those
//! rows are kept for bookkeeping and duplicate detection but excluded from
//! the fit. Inputs are affinely rescaled to the unit box before any kernel
//! evaluation, the prior mean is zero, and hyperparameters are chosen by
//! maximizing the log marginal likelihood with a multi-start coordinate
//! search in log space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::lfr::{DeltaStructure, GridPoint};
use crate::rng::stream_rng;

/// Provenance of one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationTag {
    InitialRandom,
    BoQuery,
    Allocation,
}

impl ObservationTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObservationTag::InitialRandom => "initial-random",
            ObservationTag::BoQuery => "bo-query",
            ObservationTag::Allocation => "allocation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "initial-random" => Ok(ObservationTag::InitialRandom),
            "bo-query" => Ok(ObservationTag::BoQuery),
            "allocation" => Ok(ObservationTag::Allocation),
            other => Err(Error::Format(format!("unknown observation tag `{other}`"))),
        }
    }
}

/// One evaluated point: location, cost (possibly `+inf`), and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: GridPoint,
    pub value: f64,
    pub tag: ObservationTag,
}

/// Ordered set of cost observations over a parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    domain: DeltaStructure,
    observations: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(domain: DeltaStructure) -> Self {
        Self {
            domain,
            observations: Vec::new(),
        }
    }

    pub fn domain(&self) -> &DeltaStructure {
        &self.domain
    }

    /// Appends an observation. The value may be `+inf` but not NaN, and the
    /// point must lie inside the domain box.
    pub fn push(&mut self, point: GridPoint, value: f64, tag: ObservationTag) -> Result<()> {
        if value.is_nan() || value == f64::NEG_INFINITY {
            return Err(Error::Invalid("observation value must be a number or +inf".into()));
        }
        self.domain.check_point(&point)?;
        self.observations.push(Observation { point, value, tag });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter()
    }

    /// Points and values of the finite-cost observations only.
    pub fn finite(&self) -> (Vec<&GridPoint>, Vec<f64>) {
        let mut points = Vec::new();
        let mut values = Vec::new();
        for o in &self.observations {
            if o.value.is_finite() {
                points.push(&o.point);
                values.push(o.value);
            }
        }
        (points, values)
    }

    /// Largest finite observed cost, if any.
    pub fn best_finite(&self) -> Option<f64> {
        self.observations
            .iter()
            .filter(|o| o.value.is_finite())
            .map(|o| o.value)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    pub fn any_infinite(&self) -> bool {
        self.observations.iter().any(|o| o.value.is_infinite())
    }

    /// Chebyshev distance from `point` to the closest stored observation.
    pub fn min_distance(&self, point: &GridPoint) -> f64 {
        self.observations
            .iter()
            .map(|o| o.point.linf_distance(point))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `theta_1,...,theta_d,gamma,tag`; floats are written
    /// in shortest round-trip form and infinity as `inf`.
    pub fn to_csv(&self) -> String {
        let d = self.domain.n_blocks();
        let mut out = String::new();
        for i in 1..=d {
            out.push_str(&format!("theta_{i},"));
        }
        out.push_str("gamma,tag\n");
        for o in &self.observations {
            for v in o.point.coords() {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{},{}\n", o.value, o.tag.as_str()));
        }
        out
    }

    pub fn from_csv(domain: DeltaStructure, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty observation csv".into()))?;
        let d = domain.n_blocks();
        let expected: Vec<String> = (1..=d)
            .map(|i| format!("theta_{i}"))
            .chain(["gamma".to_string(), "tag".to_string()])
            .collect();
        let got: Vec<&str> = header.split(',').collect();
        if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Format(format!("unexpected observation header `{header}`")));
        }
        let mut set = ObservationSet::new(domain);
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 2 {
                return Err(Error::Format(format!("bad observation row `{line}`")));
            }
            let coords: Vec<f64> = fields[..d]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad coordinate `{f}`")))
                })
                .collect::<Result<_>>()?;
            let value = fields[d]
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad gamma `{}`", fields[d])))?;
            let tag = ObservationTag::parse(fields[d + 1])?;
            set.push(GridPoint::new(coords)?, value, tag)?;
        }
        Ok(set)
    }
}

/// Kernel hyperparameters: output amplitude and input length scale, both in
/// rescaled (unit-box) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyperparams {
    pub amplitude: f64,
    pub length_scale: f64,
}

impl GpHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::Invalid("amplitude must be positive".into()));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(Error::Invalid("length scale must be positive".into()));
        }
        Ok(())
    }
}

/// Matern 5/2 covariance as a function of Euclidean distance.
pub fn matern52(distance: f64, hyper: &GpHyperparams) -> f64 {
    let a2 = hyper.amplitude * hyper.amplitude;
    if distance == 0.0 {
        return a2;
    }
    let r = 5.0f64.sqrt() * distance / hyper.length_scale;
    a2 * (1.0 + r + r * r / 3.0) * (-r).exp()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn gram_matrix(x: &[Vec<f64>], hyper: &GpHyperparams) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| matern52(euclidean(&x[i], &x[j]), hyper))
}

/// Cholesky factorization with an escalating diagonal jitter, from 1e-10 up
/// to 1e-6 in decade steps.
fn cholesky_with_jitter(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let scale = k.diagonal().max().max(1e-300);
    let mut jitter = 1e-10;
    while jitter <= 1e-6 {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter * scale;
        }
        if let Some(chol) = kj.cholesky() {
            return Ok((chol, jitter * scale));
        }
        jitter *= 10.0;
    }
    Err(Error::Fit("covariance not positive definite after jitter ladder".into()))
}

/// Log marginal likelihood of zero-mean data under the Matern 5/2 prior:
/// `-(gamma' K^{-1} gamma + log det K + N log 2 pi) / 2` with the jitter
/// that makes `K` factorizable included in `K`.
pub fn log_marginal_likelihood(
    x: &[Vec<f64>],
    gamma: &[f64],
    hyper: &GpHyperparams,
) -> Result<f64> {
    hyper.validate()?;
    if x.len() != gamma.len() || x.is_empty() {
        return Err(Error::Invalid("inputs and values must be non-empty and equal length".into()));
    }
    let k = gram_matrix(x, hyper);
    let (chol, _) = cholesky_with_jitter(&k)?;
    let g = DVector::from_column_slice(gamma);
    let alpha = chol.solve(&g);
    let data_term = g.dot(&alpha);
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let n = gamma.len() as f64;
    Ok(-0.5 * (data_term + logdet + n * (2.0 * std::f64::consts::PI).ln()))
}

/// Fitted Gaussian-process posterior over the parameter box.
#[derive(Debug, Clone)]
pub struct GpModel {
    domain: DeltaStructure,
    x: Vec<Vec<f64>>,
    hyper: GpHyperparams,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    n_observations: usize,
}

impl GpModel {
    /// Builds the posterior for fixed hyperparameters from the finite
    /// observations in `data`.
    pub fn with_hyper(data: &ObservationSet, hyper: GpHyperparams) -> Result<Self> {
        hyper.validate()?;
        let (points, values) = data.finite();
        if points.is_empty() {
            return Err(Error::Fit("no finite observations to fit".into()));
        }
        let x: Vec<Vec<f64>> = points
            .iter()
            .map(|p| data.domain().rescale_to_unit(p))
            .collect();
        let k = gram_matrix(&x, &hyper);
        let (chol, jitter) = cholesky_with_jitter(&k)?;
        let gamma = DVector::from_column_slice(&values);
        let alpha = chol.solve(&gamma);
        Ok(Self {
            domain: data.domain().clone(),
            n_observations: x.len(),
            x,
            hyper,
            jitter,
            chol,
            alpha,
        })
    }

    /// Fits hyperparameters by multi-start coordinate search on the log
    /// marginal likelihood, then builds the posterior.
    ///
    /// Amplitude is searched within `[1e-3, 1e3]` times the value spread and
    /// length scale within `[1e-2, 10]` times the rescaled box diameter; the
    /// search is deterministic in `seed`.
    pub fn fit(data: &ObservationSet, restarts: usize, seed: u64) -> Result<Self> {
        let (points, values) = data.finite();
        if points.is_empty() {
            return Err(Error::Fit("no finite observations to fit".into()));
        }
        let x: Vec<Vec<f64>> = points
            .iter()
            .map(|p| data.domain().rescale_to_unit(p))
            .collect();

        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut spread = var.sqrt();
        if !(spread.is_finite() && spread > 0.0) {
            spread = 1.0;
        }
        let diameter = (data.domain().n_blocks() as f64).sqrt();
        let amp_bounds = ((1e-3 * spread).ln(), (1e3 * spread).ln());
        let len_bounds = ((1e-2 * diameter).ln(), (10.0 * diameter).ln());

        let objective = |log_amp: f64, log_len: f64| -> f64 {
            let hyper = GpHyperparams {
                amplitude: log_amp.exp(),
                length_scale: log_len.exp(),
            };
            log_marginal_likelihood(&x, &values, &hyper).unwrap_or(f64::NEG_INFINITY)
        };

        let mut best: Option<(f64, (f64, f64))> = None;
        for restart in 0..restarts.max(1) {
            let start = if restart == 0 {
                (
                    spread.ln().clamp(amp_bounds.0, amp_bounds.1),
                    (0.5 * diameter).ln().clamp(len_bounds.0, len_bounds.1),
                )
            } else {
                let mut rng = stream_rng(seed, restart as u64);
                (
                    rng.gen_range(amp_bounds.0..=amp_bounds.1),
                    rng.gen_range(len_bounds.0..=len_bounds.1),
                )
            };
            let (value, point) =
                coordinate_search(&objective, start, amp_bounds, len_bounds, 12);
            let better = match &best {
                None => true,
                Some((bv, _)) => value > *bv,
            };
            if better {
                best = Some((value, point));
            }
        }
        let (_, (log_amp, log_len)) = best.ok_or_else(|| Error::Fit("no fit restart succeeded".into()))?;
        Self::with_hyper(
            data,
            GpHyperparams {
                amplitude: log_amp.exp(),
                length_scale: log_len.exp(),
            },
        )
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    pub fn domain(&self) -> &DeltaStructure {
        &self.domain
    }

    /// Posterior mean and variance at a point; the variance is clamped at
    /// zero from below.
    pub fn posterior(&self, point: &GridPoint) -> Result<(f64, f64)> {
        if point.dim() != self.domain.n_blocks() {
            return Err(Error::Shape(format!(
                "query has {} coordinates, domain has {} blocks",
                point.dim(),
                self.domain.n_blocks()
            )));
        }
        let q = self.domain.rescale_to_unit(point);
        let k_star = DVector::from_fn(self.x.len(), |i, _| {
            matern52(euclidean(&self.x[i], &q), &self.hyper)
        });
        let mean = k_star.dot(&self.alpha);
        let v = self.chol.solve(&k_star);
        let var = self.hyper.amplitude * self.hyper.amplitude - k_star.dot(&v);
        Ok((mean, var.max(0.0)))
    }
}

/// Coordinate descent with a golden-section line search per axis inside a
/// rectangular log-space box.
fn coordinate_search(
    objective: &dyn Fn(f64, f64) -> f64,
    start: (f64, f64),
    bounds0: (f64, f64),
    bounds1: (f64, f64),
    sweeps: usize,
) -> (f64, (f64, f64)) {
    let mut current = start;
    let mut value = objective(current.0, current.1);
    for _ in 0..sweeps {
        let before = value;
        for axis in 0..2 {
            let bounds = if axis == 0 { bounds0 } else { bounds1 };
            let f = |t: f64| {
                if axis == 0 {
                    objective(t, current.1)
                } else {
                    objective(current.0, t)
                }
            };
            let (t_best, v_best) = golden_max(&f, bounds.0, bounds.1, 28);
            if v_best > value {
                value = v_best;
                if axis == 0 {
                    current.0 = t_best;
                } else {
                    current.1 = t_best;
                }
            }
        }
        if value - before <= 1e-10 * value.abs().max(1.0) {
            break;
        }
    }
    (value, current)
}

/// Golden-section search for a maximum on `[lo, hi]`.
pub(crate) fn golden_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    // Keep whichever probe ended best, endpoints included.
    let mut best = (mid, fm);
    for (t, v) in [(c, fc), (d, fd), (lo, f(lo)), (hi, f(hi))] {
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

/// Free-function form of [`GpModel::fit`].
pub fn fit(data: &ObservationSet, restarts: usize, seed: u64) -> Result<GpModel> {
    GpModel::fit(data, restarts, seed)
}
