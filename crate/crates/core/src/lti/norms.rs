//! System norms for stable LTI models.

use nalgebra::DMatrix;

use super::{
    balanced_eigenvalues, lyapunov_solve, sigma_max, spectral_abscissa, StateSpaceModel,
    IMAG_AXIS_TOL,
};
use crate::error::{Error, Result};

fn require_stable(sys: &StateSpaceModel) -> Result<()> {
    let alpha = spectral_abscissa(sys.a())?;
    if alpha >= 0.0 {
        return Err(Error::Unstable { abscissa: alpha });
    }
    Ok(())
}

/// Controllability Gramian `Wc` solving `A Wc + Wc A' + B B' = 0`.
fn controllability_gramian(sys: &StateSpaceModel) -> Result<DMatrix<f64>> {
    let at = sys.a().transpose();
    let q = sys.b() * sys.b().transpose();
    lyapunov_solve(&at, &q)
}

/// Imaginary-axis crossing frequencies of the Hamiltonian matrix for level
/// `gamma`, sorted ascending. A crossing at `w` certifies that the gain
/// reaches `gamma` near that frequency.
fn hamiltonian_crossings(sys: &StateSpaceModel, gamma: f64) -> Result<Vec<f64>> {
    let n = sys.n_states();
    let m = sys.n_inputs();
    let a = sys.a();
    let b = sys.b();
    let c = sys.c();
    let d = sys.d();

    let mut r = DMatrix::identity(m, m) * (gamma * gamma);
    r -= d.transpose() * d;
    let r_lu = r.lu();
    let x_dt = r_lu
        .solve(&d.transpose())
        .ok_or_else(|| Error::Numerical("singular gamma-level block".into()))?;
    let x_bt = r_lu
        .solve(&b.transpose())
        .ok_or_else(|| Error::Numerical("singular gamma-level block".into()))?;

    let a_bar = a + b * &x_dt * c;
    let top_right = b * x_bt;
    let inner = DMatrix::identity(d.nrows(), d.nrows()) + d * &x_dt;
    let bottom_left = -(c.transpose() * inner * c);

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_bar);
    h.view_mut((0, n), (n, n)).copy_from(&top_right);
    h.view_mut((n, 0), (n, n)).copy_from(&bottom_left);
    h.view_mut((n, n), (n, n)).copy_from(&(-a_bar.transpose()));

    // Threshold per eigenvalue: relative to its own magnitude so that slow
    // stable modes of a stiff loop are not mistaken for axis crossings, with
    // a floor covering the eigensolver's backward error on a large matrix.
    let floor = 100.0 * f64::EPSILON * h.norm();
    let eigs = balanced_eigenvalues(&h)?;
    let mut crossings: Vec<f64> = eigs
        .iter()
        .filter(|l| l.re.abs() <= floor + IMAG_AXIS_TOL * (1.0 + l.im.abs()))
        .map(|l| l.im.abs())
        .collect();
    crossings.sort_by(f64::total_cmp);
    crossings.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    Ok(crossings)
}

/// Largest singular value of the frequency response at `omega`, or `None`
/// when the resolvent solve breaks down.
fn gain_at(sys: &StateSpaceModel, omega: f64) -> Option<f64> {
    use nalgebra::Complex;
    let n = sys.n_states();
    let d: DMatrix<Complex<f64>> = sys.d().map(|v| Complex::new(v, 0.0));
    let mut m: DMatrix<Complex<f64>> = sys.a().map(|v| Complex::new(-v, 0.0));
    for i in 0..n {
        m[(i, i)] += Complex::new(0.0, omega);
    }
    let b: DMatrix<Complex<f64>> = sys.b().map(|v| Complex::new(v, 0.0));
    let x = m.lu().solve(&b)?;
    let c: DMatrix<Complex<f64>> = sys.c().map(|v| Complex::new(v, 0.0));
    let resp = d + c * x;
    Some(resp.svd(false, false).singular_values.max())
}

/// H-infinity norm of a stable model by the two-step gamma iteration: the
/// level is raised to the largest response gain at the midpoints of the
/// Hamiltonian axis crossings until no crossing remains, then the last
/// level is certified as an upper bound. `rel_tol` controls the relative
/// accuracy.
pub fn hinf_norm(sys: &StateSpaceModel, rel_tol: f64) -> Result<f64> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Invalid("rel_tol must lie in (0, 1)".into()));
    }
    require_stable(sys)?;
    let d_gain = sigma_max(sys.d());
    if sys.n_states() == 0 || sys.n_inputs() == 0 || sys.n_outputs() == 0 {
        return Ok(d_gain);
    }

    let wc = controllability_gramian(sys)?;
    let wo = {
        let q = sys.c().transpose() * sys.c();
        lyapunov_solve(sys.a(), &q)?
    };
    let n = sys.n_states() as f64;
    let trace_product = (&wc * &wo).trace().max(0.0);
    let gramian_bound = (n * trace_product).sqrt();
    if gramian_bound == 0.0 {
        return Ok(d_gain);
    }

    // Probe the feedthrough, DC, and one frequency per pole magnitude to
    // seed the lower bound near the dominant peak.
    let mut lo = d_gain;
    let mut probe = |w: f64| {
        if let Some(g) = gain_at(sys, w) {
            if g > lo {
                lo = g;
            }
        }
    };
    probe(0.0);
    for l in balanced_eigenvalues(sys.a())?.iter() {
        probe((l.re * l.re + l.im * l.im).sqrt());
    }
    lo = lo.max(1e-12 * gramian_bound);

    for _ in 0..60 {
        let gamma = lo * (1.0 + 2.0 * rel_tol);
        let crossings = hamiltonian_crossings(sys, gamma)?;
        if crossings.is_empty() {
            return Ok(lo * (1.0 + rel_tol));
        }
        let mut next = lo;
        let mut probe = |w: f64| {
            if let Some(g) = gain_at(sys, w) {
                if g > next {
                    next = g;
                }
            }
        };
        if crossings.len() == 1 {
            probe(crossings[0]);
        } else {
            for pair in crossings.windows(2) {
                probe(0.5 * (pair[0] + pair[1]));
            }
        }
        if next <= lo {
            // Crossings within numerical fuzz of the current level; no
            // frequency actually exceeds it.
            return Ok(lo * (1.0 + rel_tol));
        }
        lo = next;
    }
    Err(Error::Numerical("hinf gamma iteration stalled".into()))
}

/// H2 norm `sqrt(trace(C Wc C'))` of a strictly proper stable model.
pub fn h2_norm(sys: &StateSpaceModel) -> Result<f64> {
    require_stable(sys)?;
    if sys.d().iter().any(|v| *v != 0.0) {
        return Err(Error::InfiniteNorm);
    }
    if sys.n_states() == 0 {
        return Ok(0.0);
    }
    let wc = controllability_gramian(sys)?;
    let gram = sys.c() * wc * sys.c().transpose();
    Ok(gram.trace().max(0.0).sqrt())
}

/// Generalized H2 norm `sqrt(lambda_max(C Wc C'))`, the L2-to-Linf induced
/// gain of a strictly proper stable model.
pub fn gen_h2_norm(sys: &StateSpaceModel) -> Result<f64> {
    require_stable(sys)?;
    if sys.d().iter().any(|v| *v != 0.0) {
        return Err(Error::InfiniteNorm);
    }
    if sys.n_states() == 0 || sys.n_outputs() == 0 {
        return Ok(0.0);
    }
    let wc = controllability_gramian(sys)?;
    let gram = sys.c() * wc * sys.c().transpose();
    let sym = (&gram + gram.transpose()) * 0.5;
    let eigs = sym.symmetric_eigen().eigenvalues;
    Ok(eigs.max().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn lag() -> StateSpaceModel {
        StateSpaceModel::siso(
            dm(1, 1, &[-1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[0.0]),
        )
        .unwrap()
    }

    #[test]
    fn hinf_first_order_lag() {
        assert_relative_eq!(hinf_norm(&lag(), 1e-6).unwrap(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn hinf_static_gain() {
        let sys = StateSpaceModel::from_static(dm(1, 1, &[3.0]), &[("u", 1)], &[("y", 1)]).unwrap();
        assert_relative_eq!(hinf_norm(&sys, 1e-6).unwrap(), 3.0);
    }

    #[test]
    fn hinf_resonant_peak() {
        // 1/(s^2 + 0.2 s + 1): peak 1/(2 zeta sqrt(1 - zeta^2)) at zeta = 0.1.
        let sys = StateSpaceModel::siso(
            dm(2, 2, &[0.0, 1.0, -1.0, -0.2]),
            dm(2, 1, &[0.0, 1.0]),
            dm(1, 2, &[1.0, 0.0]),
            dm(1, 1, &[0.0]),
        )
        .unwrap();
        let zeta: f64 = 0.1;
        let expected = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt());
        assert_relative_eq!(
            hinf_norm(&sys, 1e-7).unwrap(),
            expected,
            max_relative = 1e-5
        );
    }

    #[test]
    fn hinf_exceeds_feedthrough() {
        let sys = StateSpaceModel::siso(
            dm(1, 1, &[-2.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[-1.0]),
            dm(1, 1, &[0.7]),
        )
        .unwrap();
        let norm = hinf_norm(&sys, 1e-6).unwrap();
        assert!(norm >= 0.7);
    }

    #[test]
    fn hinf_rejects_unstable() {
        let sys = StateSpaceModel::siso(
            dm(1, 1, &[1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[0.0]),
        )
        .unwrap();
        assert!(matches!(
            hinf_norm(&sys, 1e-6),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn h2_first_order_lag() {
        // Impulse response e^{-t}; squared integral 1/2.
        assert_relative_eq!(
            h2_norm(&lag()).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-10
        );
    }

    #[test]
    fn h2_rejects_feedthrough_and_instability() {
        let sys = StateSpaceModel::siso(
            dm(1, 1, &[-1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[0.5]),
        )
        .unwrap();
        assert!(matches!(h2_norm(&sys), Err(Error::InfiniteNorm)));
        let unstable = StateSpaceModel::siso(
            dm(1, 1, &[1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[1.0]),
            dm(1, 1, &[0.0]),
        )
        .unwrap();
        assert!(matches!(h2_norm(&unstable), Err(Error::Unstable { .. })));
    }

    #[test]
    fn gen_h2_matches_h2_for_siso() {
        // For a single output, trace and max eigenvalue coincide.
        let sys = lag();
        assert_relative_eq!(
            gen_h2_norm(&sys).unwrap(),
            h2_norm(&sys).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gen_h2_below_h2_for_mimo() {
        let sys = StateSpaceModel::new(
            dm(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            dm(2, 1, &[1.0, 1.0]),
            dm(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DMatrix::zeros(2, 1),
            &[("u", 1)],
            &[("y", 2)],
        )
        .unwrap();
        let h2 = h2_norm(&sys).unwrap();
        let g2 = gen_h2_norm(&sys).unwrap();
        assert!(g2 <= h2 + 1e-12, "gen h2 {g2} should not exceed h2 {h2}");
    }
}
