//! Redheffer star products: closing channel groups of a model through a
//! static matrix (upper closure) or a dynamic system (lower closure).

use nalgebra::DMatrix;

use super::{select_columns, select_rows, ChannelGroup, StateSpaceModel};
use crate::error::{Error, Result};

fn rcond(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax > 0.0 {
        smin / smax
    } else {
        0.0
    }
}

fn solve_right(m: &DMatrix<f64>, rhs: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let rc = rcond(m);
    if rc < 1e-12 {
        return Err(Error::WellPosed(format!("{context} (rcond {rc:.3e})")));
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::WellPosed(format!("{context} (singular)")))
}

fn remaining_groups(groups: &[ChannelGroup], removed: &str) -> Vec<(String, usize)> {
    groups
        .iter()
        .filter(|g| g.name != removed)
        .map(|g| (g.name.clone(), g.len))
        .collect()
}

/// Closes the loop `w_g = delta * z_g` around the named input/output group
/// pair of `sys` with a static matrix.
///
/// `delta` maps the group's output channels to its input channels, so its
/// shape must be `(input width) x (output width)`; rectangular maps let a
/// repeated parameter feed several channels at once. The returned model
/// keeps the remaining groups in their original order.
pub fn upper_lft(
    delta: &DMatrix<f64>,
    sys: &StateSpaceModel,
    group: &str,
) -> Result<StateSpaceModel> {
    let gin = sys.input_group(group)?.clone();
    let gout = sys.output_group(group)?.clone();
    if delta.nrows() != gin.len || delta.ncols() != gout.len {
        return Err(Error::Shape(format!(
            "closure matrix must be {}x{}, got {}x{}",
            gin.len,
            gout.len,
            delta.nrows(),
            delta.ncols()
        )));
    }

    let d_cols: Vec<usize> = gin.range().collect();
    let r_cols: Vec<usize> = (0..sys.n_inputs()).filter(|j| !gin.range().contains(j)).collect();
    let d_rows: Vec<usize> = gout.range().collect();
    let r_rows: Vec<usize> = (0..sys.n_outputs()).filter(|i| !gout.range().contains(i)).collect();

    let b_d = select_columns(sys.b(), &d_cols);
    let b_r = select_columns(sys.b(), &r_cols);
    let c_d = select_rows(sys.c(), &d_rows);
    let c_r = select_rows(sys.c(), &r_rows);
    let d_dd = select_rows(&select_columns(sys.d(), &d_cols), &d_rows);
    let d_dr = select_rows(&select_columns(sys.d(), &r_cols), &d_rows);
    let d_rd = select_rows(&select_columns(sys.d(), &d_cols), &r_rows);
    let d_rr = select_rows(&select_columns(sys.d(), &r_cols), &r_rows);

    // phi = delta (I - D_dd delta)^{-1}, applied as z -> w gain of the loop.
    let eye = DMatrix::identity(gout.len, gout.len);
    let closure = &eye - &d_dd * delta;
    let inv_part = solve_right(&closure, &eye, "fractional closure")?;
    let phi = delta * inv_part;

    let a_cl = sys.a() + &b_d * &phi * &c_d;
    let b_cl = &b_r + &b_d * &phi * &d_dr;
    let c_cl = &c_r + &d_rd * &phi * &c_d;
    let d_cl = &d_rr + &d_rd * &phi * &d_dr;

    let in_spec = remaining_groups(sys.input_groups(), group);
    let out_spec = remaining_groups(sys.output_groups(), group);
    let in_ref: Vec<(&str, usize)> = in_spec.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    let out_ref: Vec<(&str, usize)> = out_spec.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    StateSpaceModel::new(a_cl, b_cl, c_cl, d_cl, &in_ref, &out_ref)
}

/// Closes the loop `u = K y` between the plant's actuation input group and
/// measurement output group with a dynamic system `k`.
///
/// States stack as (plant, controller). The closed loop maps the remaining
/// input groups to the remaining output groups, names preserved.
pub fn lower_lft(
    plant: &StateSpaceModel,
    k: &StateSpaceModel,
    meas_group: &str,
    act_group: &str,
) -> Result<StateSpaceModel> {
    let gu = plant.input_group(act_group)?.clone();
    let gy = plant.output_group(meas_group)?.clone();
    if k.n_inputs() != gy.len || k.n_outputs() != gu.len {
        return Err(Error::Shape(format!(
            "controller must be {}x{} (outputs x inputs), got {}x{}",
            gu.len,
            gy.len,
            k.n_outputs(),
            k.n_inputs()
        )));
    }

    let u_cols: Vec<usize> = gu.range().collect();
    let w_cols: Vec<usize> = (0..plant.n_inputs()).filter(|j| !gu.range().contains(j)).collect();
    let y_rows: Vec<usize> = gy.range().collect();
    let z_rows: Vec<usize> = (0..plant.n_outputs()).filter(|i| !gy.range().contains(i)).collect();

    let b_u = select_columns(plant.b(), &u_cols);
    let b_w = select_columns(plant.b(), &w_cols);
    let c_y = select_rows(plant.c(), &y_rows);
    let c_z = select_rows(plant.c(), &z_rows);
    let d_yu = select_rows(&select_columns(plant.d(), &u_cols), &y_rows);
    let d_yw = select_rows(&select_columns(plant.d(), &w_cols), &y_rows);
    let d_zu = select_rows(&select_columns(plant.d(), &u_cols), &z_rows);
    let d_zw = select_rows(&select_columns(plant.d(), &w_cols), &z_rows);

    let (ak, bk, ck, dk) = (k.a(), k.b(), k.c(), k.d());
    let ny = gy.len;
    let nu = gu.len;

    // psi = (I - D_yu D_k)^{-1}, lambda = (I - D_k D_yu)^{-1}.
    let psi = solve_right(
        &(DMatrix::identity(ny, ny) - &d_yu * dk),
        &DMatrix::identity(ny, ny),
        "controller loop",
    )?;
    let lambda = solve_right(
        &(DMatrix::identity(nu, nu) - dk * &d_yu),
        &DMatrix::identity(nu, nu),
        "controller loop",
    )?;

    let n = plant.n_states();
    let nk = k.n_states();
    let mut a_cl = DMatrix::zeros(n + nk, n + nk);
    a_cl.view_mut((0, 0), (n, n))
        .copy_from(&(plant.a() + &b_u * &lambda * dk * &c_y));
    a_cl.view_mut((0, n), (n, nk)).copy_from(&(&b_u * &lambda * ck));
    a_cl.view_mut((n, 0), (nk, n)).copy_from(&(bk * &psi * &c_y));
    a_cl.view_mut((n, n), (nk, nk))
        .copy_from(&(ak + bk * &psi * &d_yu * ck));

    let nw = w_cols.len();
    let mut b_cl = DMatrix::zeros(n + nk, nw);
    b_cl.view_mut((0, 0), (n, nw))
        .copy_from(&(&b_w + &b_u * &lambda * dk * &d_yw));
    b_cl.view_mut((n, 0), (nk, nw)).copy_from(&(bk * &psi * &d_yw));

    let nz = z_rows.len();
    let mut c_cl = DMatrix::zeros(nz, n + nk);
    c_cl.view_mut((0, 0), (nz, n))
        .copy_from(&(&c_z + &d_zu * &lambda * dk * &c_y));
    c_cl.view_mut((0, n), (nz, nk)).copy_from(&(&d_zu * &lambda * ck));

    let d_cl = &d_zw + &d_zu * &lambda * dk * &d_yw;

    let in_spec = remaining_groups(plant.input_groups(), act_group);
    let out_spec = remaining_groups(plant.output_groups(), meas_group);
    let in_ref: Vec<(&str, usize)> = in_spec.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    let out_ref: Vec<(&str, usize)> = out_spec.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    StateSpaceModel::new(a_cl, b_cl, c_cl, d_cl, &in_ref, &out_ref)
}
