//! Continuous-time LTI state-space models with named channel groups.
//!
//! A model stores `dx = A x + B u`, `y = C x + D u` together with an ordered
//! partition of its input and output channels into named groups. Groups give
//! interconnection code (fractional closures, controller loops, cost
//! channels) a way to address signal bundles by role instead of by raw
//! column index.

mod norms;
mod star;

pub use norms::{gen_h2_norm, h2_norm, hinf_norm};
pub use star::{lower_lft, upper_lft};

use nalgebra::{Complex, DMatrix};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Largest state dimension accepted by the dense Lyapunov solver.
pub const LYAPUNOV_STATE_CAP: usize = 30;

/// Relative real-part threshold under which an eigenvalue of the Hamiltonian
/// test matrix counts as lying on the imaginary axis.
pub(crate) const IMAG_AXIS_TOL: f64 = 1e-8;

/// Reciprocal-condition-number floor for frequency-domain solves.
pub(crate) const RCOND_FLOOR: f64 = 1e-12;

/// One named contiguous slice of a model's input or output channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl ChannelGroup {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

fn build_groups(spec: &[(&str, usize)], total: usize, side: &str) -> Result<Vec<ChannelGroup>> {
    let mut groups = Vec::with_capacity(spec.len());
    let mut start = 0usize;
    for (name, len) in spec {
        if name.is_empty() {
            return Err(Error::Group(format!("empty {side} group name")));
        }
        if groups.iter().any(|g: &ChannelGroup| g.name == *name) {
            return Err(Error::Group(format!("duplicate {side} group `{name}`")));
        }
        groups.push(ChannelGroup {
            name: name.to_string(),
            start,
            len: *len,
        });
        start += *len;
    }
    if start != total {
        return Err(Error::Group(format!(
            "{side} groups cover {start} channels, model has {total}"
        )));
    }
    Ok(groups)
}

/// State-space model with named input and output channel groups.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    input_groups: Vec<ChannelGroup>,
    output_groups: Vec<ChannelGroup>,
}

impl StateSpaceModel {
    /// Builds a model, validating shapes, finiteness, and group coverage.
    ///
    /// `input_groups` and `output_groups` list `(name, width)` pairs in
    /// channel order; the widths must add up to the number of columns of `B`
    /// and rows of `C` respectively. Zero-width groups are allowed.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        input_groups: &[(&str, usize)],
        output_groups: &[(&str, usize)],
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!("A must be square, got {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Shape(format!("B has {} rows, expected {}", b.nrows(), n)));
        }
        if c.ncols() != n {
            return Err(Error::Shape(format!("C has {} cols, expected {}", c.ncols(), n)));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Shape(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite entry in {name}")));
            }
        }
        let input_groups = build_groups(input_groups, b.ncols(), "input")?;
        let output_groups = build_groups(output_groups, c.nrows(), "output")?;
        Ok(Self {
            a,
            b,
            c,
            d,
            input_groups,
            output_groups,
        })
    }

    /// Builds a static (zero-state) model from a gain matrix.
    pub fn from_static(
        d: DMatrix<f64>,
        input_groups: &[(&str, usize)],
        output_groups: &[(&str, usize)],
    ) -> Result<Self> {
        let (p, m) = (d.nrows(), d.ncols());
        Self::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, m),
            DMatrix::zeros(p, 0),
            d,
            input_groups,
            output_groups,
        )
    }

    /// Single-input single-output model with default group names `u` and `y`.
    pub fn siso(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        Self::new(a, b, c, d, &[("u", 1)], &[("y", 1)])
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn input_groups(&self) -> &[ChannelGroup] {
        &self.input_groups
    }
    pub fn output_groups(&self) -> &[ChannelGroup] {
        &self.output_groups
    }

    pub fn input_group(&self, name: &str) -> Result<&ChannelGroup> {
        self.input_groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Group(format!("no input group `{name}`")))
    }

    pub fn output_group(&self, name: &str) -> Result<&ChannelGroup> {
        self.output_groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Group(format!("no output group `{name}`")))
    }

    /// Column indices covered by the listed input groups, in listed order.
    pub fn input_cols(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut cols = Vec::new();
        for name in names {
            cols.extend(self.input_group(name)?.range());
        }
        Ok(cols)
    }

    /// Row indices covered by the listed output groups, in listed order.
    pub fn output_rows(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut rows = Vec::new();
        for name in names {
            rows.extend(self.output_group(name)?.range());
        }
        Ok(rows)
    }

    /// Extracts the subsystem mapping the listed input groups to the listed
    /// output groups. The state dynamics are shared; only B, C, D shrink.
    pub fn subsystem(&self, outputs: &[&str], inputs: &[&str]) -> Result<StateSpaceModel> {
        let cols = self.input_cols(inputs)?;
        let rows = self.output_rows(outputs)?;
        let b = select_columns(&self.b, &cols);
        let c = select_rows(&self.c, &rows);
        let d = select_rows(&select_columns(&self.d, &cols), &rows);
        let in_spec: Vec<(&str, usize)> = inputs
            .iter()
            .map(|n| (*n, self.input_group(n).unwrap().len))
            .collect();
        let out_spec: Vec<(&str, usize)> = outputs
            .iter()
            .map(|n| (*n, self.output_group(n).unwrap().len))
            .collect();
        StateSpaceModel::new(self.a.clone(), b, c, d, &in_spec, &out_spec)
    }

    /// Renames an input group in place.
    pub fn rename_input_group(&mut self, from: &str, to: &str) -> Result<()> {
        if self.input_groups.iter().any(|g| g.name == to) && from != to {
            return Err(Error::Group(format!("input group `{to}` already exists")));
        }
        let g = self
            .input_groups
            .iter_mut()
            .find(|g| g.name == from)
            .ok_or_else(|| Error::Group(format!("no input group `{from}`")))?;
        g.name = to.to_string();
        Ok(())
    }

    /// Renames an output group in place.
    pub fn rename_output_group(&mut self, from: &str, to: &str) -> Result<()> {
        if self.output_groups.iter().any(|g| g.name == to) && from != to {
            return Err(Error::Group(format!("output group `{to}` already exists")));
        }
        let g = self
            .output_groups
            .iter_mut()
            .find(|g| g.name == from)
            .ok_or_else(|| Error::Group(format!("no output group `{from}`")))?;
        g.name = to.to_string();
        Ok(())
    }

    /// Serializes to a JSON value with row-major nested arrays for the four
    /// matrices and `name -> [start, len]` maps for the channel groups.
    pub fn to_json(&self) -> Value {
        json!({
            "A": matrix_to_rows(&self.a),
            "B": matrix_to_rows(&self.b),
            "C": matrix_to_rows(&self.c),
            "D": matrix_to_rows(&self.d),
            "input_groups": groups_to_json(&self.input_groups),
            "output_groups": groups_to_json(&self.output_groups),
        })
    }

    /// Parses the JSON layout produced by [`StateSpaceModel::to_json`].
    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("state-space model must be a JSON object".into()))?;
        let a = matrix_from_rows(field(obj, "A")?)?;
        let b = matrix_from_rows(field(obj, "B")?)?;
        let c = matrix_from_rows(field(obj, "C")?)?;
        let d = matrix_from_rows(field(obj, "D")?)?;
        let ig = groups_from_json(field(obj, "input_groups")?)?;
        let og = groups_from_json(field(obj, "output_groups")?)?;
        let ig_spec: Vec<(&str, usize)> = ig.iter().map(|(n, l)| (n.as_str(), *l)).collect();
        let og_spec: Vec<(&str, usize)> = og.iter().map(|(n, l)| (n.as_str(), *l)).collect();
        StateSpaceModel::new(a, b, c, d, &ig_spec, &og_spec)
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::Format(format!("missing field `{name}`")))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
        .collect();
    Value::Array(rows)
}

pub(crate) fn matrix_from_rows(v: &Value) -> Result<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::Format("matrix must be an array of rows".into()))?;
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0]
        .as_array()
        .ok_or_else(|| Error::Format("matrix row must be an array".into()))?
        .len();
    let mut data = Vec::with_capacity(rows.len() * ncols);
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Format("matrix row must be an array".into()))?;
        if row.len() != ncols {
            return Err(Error::Format("ragged matrix rows".into()));
        }
        for x in row {
            data.push(
                x.as_f64()
                    .ok_or_else(|| Error::Format("matrix entry must be a number".into()))?,
            );
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

fn groups_to_json(groups: &[ChannelGroup]) -> Value {
    let mut map = Map::new();
    for g in groups {
        map.insert(g.name.clone(), json!([g.start, g.len]));
    }
    Value::Object(map)
}

fn groups_from_json(v: &Value) -> Result<Vec<(String, usize)>> {
    let map = v
        .as_object()
        .ok_or_else(|| Error::Format("groups must be a JSON object".into()))?;
    let mut entries: Vec<(String, usize, usize)> = Vec::new();
    for (name, val) in map {
        let pair = val
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::Format(format!("group `{name}` must be [start, len]")))?;
        let start = pair[0]
            .as_u64()
            .ok_or_else(|| Error::Format("group start must be an integer".into()))?;
        let len = pair[1]
            .as_u64()
            .ok_or_else(|| Error::Format("group len must be an integer".into()))?;
        entries.push((name.clone(), start as usize, len as usize));
    }
    entries.sort_by_key(|(_, start, _)| *start);
    Ok(entries.into_iter().map(|(n, _, l)| (n, l)).collect())
}

pub(crate) fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.set_column(k, &m.column(j));
    }
    out
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (k, &i) in rows.iter().enumerate() {
        out.set_row(k, &m.row(i));
    }
    out
}

/// Largest real part over the eigenvalues of `a`.
///
/// QR sweep budget per matrix dimension before the eigenvalue solver gives
/// up. LAPACK converges in under 30 sweeps per eigenvalue; anything beyond
/// this cap is a numerical dead end, not slow convergence.
const EIG_SWEEPS_PER_DIM: usize = 75;

/// Rescales `a` in place by a diagonal similarity with power-of-two entries
/// until every row and its matching column have comparable 1-norms
/// (Parlett-Reinsch balancing). Power-of-two factors are exact in binary
/// floating point, so the eigenvalues are unchanged.
fn balance_in_place(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    const SQR: f64 = RADIX * RADIX;
    let n = a.nrows();
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            let s = c + r;
            if c == 0.0 || r == 0.0 || !s.is_finite() {
                continue;
            }
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= SQR;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= SQR;
            }
            if (c + r) / f < 0.95 * s && f.is_finite() {
                converged = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if converged {
            return;
        }
    }
}

/// Eigenvalues of a general real square matrix, computed on a balanced copy
/// with a hard cap on QR sweeps so badly scaled inputs surface as an error
/// instead of a hang.
pub(crate) fn balanced_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!(
            "eigenvalues need a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite entry in eigenvalue problem".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut b = a.clone();
    balance_in_place(&mut b);
    let schur = nalgebra::linalg::Schur::try_new(b, f64::EPSILON, EIG_SWEEPS_PER_DIM * n)
        .ok_or_else(|| Error::Numerical("eigenvalue iteration failed to converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// An empty matrix has no eigenvalues and returns negative infinity, which
/// makes zero-state (static) systems count as stable.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    let eigs = balanced_eigenvalues(a)?;
    Ok(eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let scale = a[(i, j)];
            if scale != 0.0 {
                for p in 0..br {
                    for q in 0..bc {
                        out[(i * br + p, j * bc + q)] = scale * b[(p, q)];
                    }
                }
            }
        }
    }
    out
}

/// Solves the continuous Lyapunov equation `A' X + X A + Q = 0` for
/// symmetric `Q` and Hurwitz `A` by a dense Kronecker linearization.
///
/// The vectorized system is `(I (x) A' + A' (x) I) vec(X) = -vec(Q)`, which
/// caps the usable state dimension at [`LYAPUNOV_STATE_CAP`]. The result is
/// symmetrized before returning.
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Shape(format!(
            "lyapunov needs square A and Q of equal size, got A {}x{}, Q {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if n > LYAPUNOV_STATE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: LYAPUNOV_STATE_CAP,
        });
    }
    let asym = (q - q.transpose()).norm() / q.norm().max(1.0);
    if asym > 1e-9 {
        return Err(Error::Invalid(format!("Q must be symmetric (asymmetry {asym:.3e})")));
    }
    let alpha = spectral_abscissa(a)?;
    if alpha >= 0.0 {
        return Err(Error::Unstable { abscissa: alpha });
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let at = a.transpose();
    let eye = DMatrix::identity(n, n);
    let system = kron(&eye, &at) + kron(&at, &eye);
    let rhs = nalgebra::DVector::from_column_slice(&(-q).as_slice().to_vec());
    let lu = system.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Evaluates the frequency response `D + C (i w I - A)^{-1} B`.
///
/// Fails with a resonance error when `i w I - A` is nearly singular, i.e.
/// when `w` sits on top of an imaginary-axis mode.
pub fn eval_freq(sys: &StateSpaceModel, omega: f64) -> Result<DMatrix<C64>> {
    if !omega.is_finite() {
        return Err(Error::Invalid("omega must be finite".into()));
    }
    let n = sys.n_states();
    let d: DMatrix<C64> = sys.d.map(|v| C64::new(v, 0.0));
    if n == 0 {
        return Ok(d);
    }
    let mut m: DMatrix<C64> = sys.a.map(|v| C64::new(-v, 0.0));
    for i in 0..n {
        m[(i, i)] += C64::new(0.0, omega);
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if rcond < RCOND_FLOOR {
        return Err(Error::Resonance { omega, rcond });
    }
    let b: DMatrix<C64> = sys.b.map(|v| C64::new(v, 0.0));
    let c: DMatrix<C64> = sys.c.map(|v| C64::new(v, 0.0));
    let lu = m.lu();
    let x = lu
        .solve(&b)
        .ok_or_else(|| Error::Numerical("frequency-response solve failed".into()))?;
    Ok(d + c * x)
}

/// Largest singular value of a real matrix; 0 for an empty one.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        let a = dm(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = dm(1, 1, &[1.0]);
        let c = dm(1, 2, &[1.0, 0.0]);
        let d = dm(1, 1, &[0.0]);
        let err = StateSpaceModel::new(a, b, c, d, &[("u", 1)], &[("y", 1)]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn constructor_rejects_group_mismatch() {
        let a = dm(1, 1, &[-1.0]);
        let b = dm(1, 2, &[1.0, 0.0]);
        let c = dm(1, 1, &[1.0]);
        let d = dm(1, 2, &[0.0, 0.0]);
        let err = StateSpaceModel::new(a, b, c, d, &[("u", 1)], &[("y", 1)]);
        assert!(matches!(err, Err(Error::Group(_))));
    }

    #[test]
    fn constructor_rejects_nonfinite() {
        let a = dm(1, 1, &[f64::NAN]);
        let b = dm(1, 1, &[1.0]);
        let c = dm(1, 1, &[1.0]);
        let d = dm(1, 1, &[0.0]);
        assert!(StateSpaceModel::new(a, b, c, d, &[("u", 1)], &[("y", 1)]).is_err());
    }

    #[test]
    fn groups_resolve_ranges() {
        let a = dm(1, 1, &[-1.0]);
        let b = dm(1, 3, &[1.0, 0.0, 2.0]);
        let c = dm(2, 1, &[1.0, 0.0]);
        let d = DMatrix::zeros(2, 3);
        let sys =
            StateSpaceModel::new(a, b, c, d, &[("w", 2), ("u", 1)], &[("z", 1), ("y", 1)]).unwrap();
        assert_eq!(sys.input_group("w").unwrap().range(), 0..2);
        assert_eq!(sys.input_group("u").unwrap().range(), 2..3);
        assert!(sys.input_group("nope").is_err());
    }

    #[test]
    fn abscissa_examples() {
        assert_relative_eq!(
            spectral_abscissa(&(-DMatrix::<f64>::identity(2, 2))).unwrap(),
            -1.0
        );
        let rot = dm(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(spectral_abscissa(&rot).unwrap(), 0.0, epsilon = 1e-12);
        let unstable = dm(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert_relative_eq!(
            spectral_abscissa(&unstable).unwrap(),
            2.0f64.sqrt(),
            epsilon = 1e-10
        );
        assert_eq!(
            spectral_abscissa(&DMatrix::zeros(0, 0)).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn lyapunov_scalar_and_residual() {
        let a = dm(1, 1, &[-1.0]);
        let q = dm(1, 1, &[2.0]);
        let x = lyapunov_solve(&a, &q).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0, epsilon = 1e-12);

        let a = dm(
            3,
            3,
            &[-2.0, 1.0, 0.0, 0.0, -1.5, 0.5, -0.3, 0.0, -1.0],
        );
        let q = DMatrix::identity(3, 3);
        let x = lyapunov_solve(&a, &q).unwrap();
        let residual = a.transpose() * &x + &x * &a + &q;
        let bound = 1e-8 * (a.norm() * x.norm() + q.norm());
        assert!(residual.norm() <= bound, "residual {} > {}", residual.norm(), bound);
        assert_relative_eq!((&x - x.transpose()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_rejects_contract_violations() {
        let a = dm(1, 1, &[1.0]);
        let q = dm(1, 1, &[1.0]);
        assert!(matches!(
            lyapunov_solve(&a, &q),
            Err(Error::Unstable { .. })
        ));
        let a = dm(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let q = dm(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(matches!(lyapunov_solve(&a, &q), Err(Error::Invalid(_))));
        let big = -DMatrix::<f64>::identity(31, 31);
        let qb = DMatrix::identity(31, 31);
        assert!(matches!(
            lyapunov_solve(&big, &qb),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn eval_freq_first_order_lag() {
        let sys = StateSpaceModel::siso(
            dm(1, 1, &[-1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[0.0]),
        )
        .unwrap();
        let h = eval_freq(&sys, 1.0).unwrap();
        assert_relative_eq!(h[(0, 0)].norm(), 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        let h0 = eval_freq(&sys, 0.0).unwrap();
        assert_relative_eq!(h0[(0, 0)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eval_freq_pure_gain_and_resonance() {
        let sys = StateSpaceModel::from_static(dm(1, 1, &[3.0]), &[("u", 1)], &[("y", 1)]).unwrap();
        let h = eval_freq(&sys, 123.4).unwrap();
        assert_relative_eq!(h[(0, 0)].re, 3.0);

        let osc = StateSpaceModel::siso(
            dm(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            dm(2, 1, &[0.0, 1.0]),
            dm(1, 2, &[1.0, 0.0]),
            dm(1, 1, &[0.0]),
        )
        .unwrap();
        assert!(matches!(
            eval_freq(&osc, 1.0),
            Err(Error::Resonance { .. })
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let sys = StateSpaceModel::new(
            dm(2, 2, &[0.0, 1.0, -51.0831, -1.674761345], ),
            dm(2, 3, &[0.0, 0.1, 0.25644, 1.0 / 3.0, -7.5e-3, 2.0]),
            dm(1, 2, &[1.0, 0.0]),
            dm(1, 3, &[0.0, 0.0, std::f64::consts::PI]),
            &[("w", 2), ("u", 1)],
            &[("y", 1)],
        )
        .unwrap();
        let v = sys.to_json();
        let text = serde_json::to_string(&v).unwrap();
        let back = StateSpaceModel::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(sys, back);
    }

    #[test]
    fn subsystem_extracts_named_channels() {
        let sys = StateSpaceModel::new(
            dm(1, 1, &[-1.0]),
            dm(1, 3, &[1.0, 2.0, 3.0]),
            dm(2, 1, &[1.0, -1.0]),
            dm(2, 3, &[0.0, 0.5, 0.0, 1.5, 0.0, 0.0]),
            &[("w", 2), ("u", 1)],
            &[("z", 1), ("y", 1)],
        )
        .unwrap();
        let sub = sys.subsystem(&["y"], &["u"]).unwrap();
        assert_eq!(sub.n_inputs(), 1);
        assert_eq!(sub.n_outputs(), 1);
        assert_relative_eq!(sub.b()[(0, 0)], 3.0);
        assert_relative_eq!(sub.c()[(0, 0)], -1.0);
        assert_relative_eq!(sub.d()[(0, 0)], 0.0);
    }
}
