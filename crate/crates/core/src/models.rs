//! Built-in benchmark plants: an unbalanced disk with parametric
//! uncertainty and a planar two-link robotic arm in quasi-LPV form. Each
//! comes as a bare fractional plant plus a weighted generalized plant ready
//! for synthesis, along with the true nonlinear dynamics for simulation.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::lfr::{DeltaBlock, DeltaStructure, LfrPlant, PlantKind, ReplicationEntry};
use crate::lti::StateSpaceModel;

/// `sin(x)/x` continued through zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Coefficients of the first-order weight `(b s + a) / (s + c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrder {
    pub b: f64,
    pub a: f64,
    pub c: f64,
}

impl FirstOrder {
    pub fn dc_gain(&self) -> f64 {
        self.a / self.c
    }

    /// Gain applied to the filter state in the observable realization
    /// `x' = -c x + v`, `out = (a - b c) x + b v`.
    pub fn state_gain(&self) -> f64 {
        self.a - self.b * self.c
    }

    /// One-state SISO realization with the given channel names.
    pub fn realize(&self, input: &str, output: &str) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, -self.c),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, self.state_gain()),
            DMatrix::from_element(1, 1, self.b),
            &[(input, 1)],
            &[(output, 1)],
        )
        .unwrap()
    }
}

/// Unbalanced rotating disk driven by a voltage input. The off-center mass
/// deviates by up to 60% and the angle nonlinearity is embedded as a second
/// bounded parameter.
pub mod disk {
    use super::*;

    /// Nominal off-center mass (kg).
    pub const M_HAT: f64 = 7e-2;
    /// Mass deviation weight: `M = M_HAT + W_MASS * delta1`.
    pub const W_MASS: f64 = 0.042;
    pub const GRAVITY: f64 = 9.8;
    /// Lever arm of the off-center mass (m).
    pub const OFFSET: f64 = 4.2e-2;
    /// Disk inertia (kg m^2).
    pub const INERTIA: f64 = 2.2e-4;
    /// Actuator time constant (s).
    pub const MOTOR_TAU: f64 = 0.5971;
    /// Actuator gain (rad / (s V)).
    pub const MOTOR_GAIN: f64 = 15.31;
    /// Nominal value of the sinc surrogate: `p = P_HAT + W_P * delta2`.
    pub const P_HAT: f64 = 0.39;
    pub const W_P: f64 = 0.61;

    /// Pendulum stiffness scale `g l / J`.
    pub const C1: f64 = GRAVITY * OFFSET / INERTIA;
    /// Viscous damping `1 / tau`.
    pub const C2: f64 = 1.0 / MOTOR_TAU;
    /// Input gain `K_m / tau`.
    pub const C3: f64 = MOTOR_GAIN / MOTOR_TAU;

    /// Tracking-error weight, low pass with DC gain near 10.
    pub const WEIGHT_Z1: FirstOrder = FirstOrder {
        b: 0.5012,
        a: 8.3818,
        c: 0.8382,
    };
    /// Control-effort weight, high pass.
    pub const WEIGHT_Z2: FirstOrder = FirstOrder {
        b: 10.0,
        a: 34.8219,
        c: 1101.2,
    };
    /// Reference shaper.
    pub const WEIGHT_R: FirstOrder = FirstOrder {
        b: 0.0,
        a: 2.282,
        c: 0.7216,
    };
    /// Input-disturbance shaper.
    pub const WEIGHT_DI: FirstOrder = FirstOrder {
        b: 0.0,
        a: 0.0144,
        c: 0.1443,
    };

    /// Parameter box: the mass deviation enters once; the sinc surrogate
    /// multiplies both the nominal and the deviated mass paths, so it is
    /// repeated twice.
    pub fn delta_box() -> DeltaStructure {
        DeltaStructure::new(vec![
            DeltaBlock {
                name: "delta1".into(),
                rep: 1,
                lo: -1.0,
                hi: 1.0,
            },
            DeltaBlock {
                name: "delta2".into(),
                rep: 2,
                lo: -1.0,
                hi: 1.0,
            },
        ])
        .unwrap()
    }

    fn loop_wiring() -> Vec<ReplicationEntry> {
        // w1 = delta1 * x1, w2 = delta2 * x1, w3 = delta2 * w1; the chained
        // channel realizes the delta1*delta2 product with one extra line.
        vec![
            ReplicationEntry { block: 0, source: 0 },
            ReplicationEntry { block: 1, source: 0 },
            ReplicationEntry { block: 1, source: 1 },
        ]
    }

    /// Bare uncertain disk: two states, a 3-in 2-out parameter loop,
    /// voltage input `u`, angle output `y`.
    pub fn lfr() -> LfrPlant {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -C1 * M_HAT * P_HAT, -C2]);
        let b = DMatrix::from_row_slice(
            2,
            4,
            &[
                0.0,
                0.0,
                0.0,
                0.0,
                -C1 * W_MASS * P_HAT,
                -C1 * M_HAT * W_P,
                -C1 * W_MASS * W_P,
                C3,
            ],
        );
        // outputs: loop taps (x1, w1) then the measured angle.
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let mut d = DMatrix::zeros(3, 4);
        d[(1, 0)] = 1.0;
        let model = StateSpaceModel::new(
            a,
            b,
            c,
            d,
            &[("delta", 3), ("u", 1)],
            &[("delta", 2), ("y", 1)],
        )
        .unwrap();
        LfrPlant::with_replication(
            model,
            delta_box(),
            PlantKind::Robust,
            "u",
            "y",
            loop_wiring(),
        )
        .unwrap()
    }

    /// Weighted generalized plant with six states: disk (2), tracking
    /// weight, effort weight, reference shaper, disturbance shaper. The
    /// controller measures the tracking error `e` and drives `y_k`; the
    /// scored channels are `(w_r, w_di) -> (z1, z2)`.
    pub fn genplant() -> LfrPlant {
        // states: x1 angle, x2 rate, x3 W_z1, x4 W_z2, x5 W_r, x6 W_di.
        // inputs: w_delta(3), w_r, w_di, y_k. outputs: z_delta(2), z1, z2, e.
        let mut a = DMatrix::zeros(6, 6);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -C1 * M_HAT * P_HAT;
        a[(1, 1)] = -C2;
        a[(1, 5)] = C3 * WEIGHT_DI.state_gain(); // disk input picks up the shaped disturbance
        a[(2, 0)] = -1.0;
        a[(2, 2)] = -WEIGHT_Z1.c;
        a[(2, 4)] = WEIGHT_R.state_gain(); // tracking weight is fed e = r - x1
        a[(3, 3)] = -WEIGHT_Z2.c;
        a[(4, 4)] = -WEIGHT_R.c;
        a[(5, 5)] = -WEIGHT_DI.c;

        let mut b = DMatrix::zeros(6, 6);
        b[(1, 0)] = -C1 * W_MASS * P_HAT;
        b[(1, 1)] = -C1 * M_HAT * W_P;
        b[(1, 2)] = -C1 * W_MASS * W_P;
        b[(1, 5)] = C3;
        b[(3, 5)] = 1.0;
        b[(4, 3)] = 1.0;
        b[(5, 4)] = 1.0;

        let mut c = DMatrix::zeros(5, 6);
        c[(0, 0)] = 1.0; // loop tap x1
        c[(2, 0)] = -WEIGHT_Z1.b;
        c[(2, 2)] = WEIGHT_Z1.state_gain();
        c[(2, 4)] = WEIGHT_Z1.b * WEIGHT_R.state_gain();
        c[(3, 3)] = WEIGHT_Z2.state_gain();
        c[(4, 0)] = -1.0;
        c[(4, 4)] = WEIGHT_R.state_gain();

        let mut d = DMatrix::zeros(5, 6);
        d[(1, 0)] = 1.0; // loop tap w1
        d[(3, 5)] = WEIGHT_Z2.b;

        let model = StateSpaceModel::new(
            a,
            b,
            c,
            d,
            &[("delta", 3), ("w_r", 1), ("w_di", 1), ("y_k", 1)],
            &[("delta", 2), ("z1", 1), ("z2", 1), ("e", 1)],
        )
        .unwrap();
        LfrPlant::with_replication(
            model,
            delta_box(),
            PlantKind::Robust,
            "y_k",
            "e",
            loop_wiring(),
        )
        .unwrap()
    }

    /// True nonlinear dynamics at mass realization `delta1`:
    /// `x1' = x2`, `x2' = -M c1 sin(x1) - c2 x2 + c3 u`.
    pub fn dynamics(x: &[f64; 2], u: f64, delta1: f64) -> [f64; 2] {
        let m = M_HAT + W_MASS * delta1;
        [x[1], -m * C1 * x[0].sin() - C2 * x[1] + C3 * u]
    }
}

/// Planar two-link robotic arm with torque inputs and measured joint
/// angles, embedded exactly as a ten-parameter quasi-LPV model.
pub mod arm {
    use super::*;

    /// Inertia of the first link group (the `M11` entry).
    pub const INERTIA_1: f64 = 5.6794;
    /// Inertia coupling between the links.
    pub const COUPLING: f64 = 1.473;
    /// Inertia of the second link group (the `M22` entry).
    pub const INERTIA_2: f64 = 1.7985;
    /// Gravity gain on the first joint.
    pub const GRAVITY_1: f64 = 0.4;
    /// Gravity gain on the second joint.
    pub const GRAVITY_2: f64 = 0.4;
    /// Viscous friction acting on the relative joint motion.
    pub const FRICTION: f64 = 2.0;
    /// Motor torque gain.
    pub const MOTOR_GAIN: f64 = 1.0;

    /// Tracking-error weight, one per joint.
    pub const WEIGHT_TRACK: FirstOrder = FirstOrder {
        b: 0.5,
        a: 5.0,
        c: 5e-5,
    };
    /// Static torque-effort weight, one per joint.
    pub const WEIGHT_EFFORT: f64 = 3e-3;
    /// Actuator roll-off between the controller and the joints.
    pub const WEIGHT_ACTUATOR: FirstOrder = FirstOrder {
        b: 0.0,
        a: 1e3,
        c: 1e3,
    };

    /// Joint-space mass matrix.
    pub fn mass_matrix(q1: f64, q2: f64) -> Matrix2<f64> {
        let bc = COUPLING * (q1 - q2).cos();
        Matrix2::new(INERTIA_1, bc, bc, INERTIA_2)
    }

    /// True nonlinear dynamics `x = (q1, q2, q1', q2')`, `u = (tau1, tau2)`.
    pub fn dynamics(x: &[f64; 4], u: &[f64; 2]) -> [f64; 4] {
        let (a, b, c) = (INERTIA_1, COUPLING, INERTIA_2);
        let (d, e, f, n) = (GRAVITY_1, GRAVITY_2, FRICTION, MOTOR_GAIN);
        let cos_d = (x[0] - x[1]).cos();
        let sin_d = (x[0] - x[1]).sin();
        let h = a * c - (b * cos_d) * (b * cos_d);
        // Coriolis/centrifugal plus friction on the relative velocity.
        let cor = Vector2::new(
            b * sin_d * x[3] * x[3] + f * x[2],
            -b * sin_d * x[2] * x[2] + f * (x[3] - x[2]),
        );
        let grav = Vector2::new(-d * x[0].sin(), -e * x[1].sin());
        let rhs = Vector2::new(n * u[0], n * u[1]) - cor - grav;
        // Closed-form 2x2 inverse of the mass matrix.
        let acc = Vector2::new(
            (c * rhs[0] - b * cos_d * rhs[1]) / h,
            (-b * cos_d * rhs[0] + a * rhs[1]) / h,
        );
        [x[2], x[3], acc[0], acc[1]]
    }

    /// Scheduling map `p = eta(x)`: ten components, exact for the dynamics
    /// above.
    pub fn scheduling_map(x: &[f64; 4]) -> [f64; 10] {
        let (a, b, c) = (INERTIA_1, COUPLING, INERTIA_2);
        let f = FRICTION;
        let cos_d = (x[0] - x[1]).cos();
        let sin_d = (x[0] - x[1]).sin();
        let h = a * c - (b * cos_d) * (b * cos_d);
        [
            1.0 / h,
            cos_d / h,
            sinc(x[0]) / h,
            cos_d * sinc(x[1]) / h,
            (-b * b * sin_d * cos_d * x[2] - (c + b * cos_d) * f) / h,
            (-c * sin_d * x[3] + cos_d * f) / h,
            cos_d * sinc(x[0]) / h,
            sinc(x[1]) / h,
            (a * b * sin_d * x[2] + f * (a + b * cos_d)) / h,
            (b * b * sin_d * cos_d * x[3] - a * f) / h,
        ]
    }

    /// LPV state and input matrices at a scheduling value.
    pub fn lpv_matrices(p: &[f64; 10]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (a, b, c) = (INERTIA_1, COUPLING, INERTIA_2);
        let (d, e, n) = (GRAVITY_1, GRAVITY_2, MOTOR_GAIN);
        let a_mat = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0,
                0.0,
                1.0,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                c * d * p[2],
                -b * e * p[3],
                p[4],
                b * p[5],
                -b * d * p[6],
                a * e * p[7],
                p[8],
                p[9],
            ],
        );
        let b_mat = DMatrix::from_row_slice(
            4,
            2,
            &[
                0.0,
                0.0,
                0.0,
                0.0,
                c * n * p[0],
                -b * n * p[1],
                -b * n * p[1],
                a * n * p[0],
            ],
        );
        (a_mat, b_mat)
    }

    /// Scheduling box spanned componentwise by `eta` along a state
    /// trajectory.
    pub fn scheduling_box(samples: &[[f64; 4]]) -> Result<DeltaStructure> {
        if samples.is_empty() {
            return Err(Error::Invalid("no trajectory samples given".into()));
        }
        let mut lo = [f64::INFINITY; 10];
        let mut hi = [f64::NEG_INFINITY; 10];
        for x in samples {
            let p = scheduling_map(x);
            for i in 0..10 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let reps = [2usize, 2, 1, 1, 1, 1, 1, 1, 1, 1];
        DeltaStructure::new(
            (0..10)
                .map(|i| DeltaBlock {
                    name: format!("p{}", i + 1),
                    rep: reps[i],
                    lo: lo[i],
                    hi: hi[i],
                })
                .collect(),
        )
    }

    /// Loop matrices of the affine embedding: contribution columns into the
    /// acceleration rows and the matching tap rows over `(x, tau)`.
    ///
    /// Channel order follows the blocks: p1 twice, p2 twice, then p3..p10.
    /// Taps for p1/p2 read the joint torques; the rest read single states.
    fn loop_columns() -> DMatrix<f64> {
        let (a, b, c) = (INERTIA_1, COUPLING, INERTIA_2);
        let (d, e, n) = (GRAVITY_1, GRAVITY_2, MOTOR_GAIN);
        let mut l = DMatrix::zeros(4, 12);
        l[(2, 0)] = c * n;
        l[(3, 1)] = a * n;
        l[(2, 2)] = -b * n;
        l[(3, 3)] = -b * n;
        l[(2, 4)] = c * d;
        l[(2, 5)] = -b * e;
        l[(2, 6)] = 1.0;
        l[(2, 7)] = b;
        l[(3, 8)] = -b * d;
        l[(3, 9)] = a * e;
        l[(3, 10)] = 1.0;
        l[(3, 11)] = 1.0;
        l
    }

    /// State part of the tap rows (12 x 4); torque parts are wired by the
    /// caller since the torque source differs between the bare plant and
    /// the generalized plant.
    fn tap_state_rows() -> DMatrix<f64> {
        let mut t = DMatrix::zeros(12, 4);
        t[(4, 0)] = 1.0;
        t[(5, 1)] = 1.0;
        t[(6, 2)] = 1.0;
        t[(7, 3)] = 1.0;
        t[(8, 0)] = 1.0;
        t[(9, 1)] = 1.0;
        t[(10, 2)] = 1.0;
        t[(11, 3)] = 1.0;
        t
    }

    /// Tap channels reading each torque: (channel, torque index).
    const TORQUE_TAPS: [(usize, usize); 4] = [(0, 0), (1, 1), (2, 1), (3, 0)];

    /// Bare LPV arm over a scheduling box: four states, a diagonal
    /// 12-channel parameter loop, torque inputs `u`, angle outputs `y`.
    pub fn lpv_plant(domain: &DeltaStructure) -> Result<LfrPlant> {
        check_domain(domain)?;
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 2)] = 1.0;
        a[(1, 3)] = 1.0;
        let mut b = DMatrix::zeros(4, 14);
        b.view_mut((0, 0), (4, 12)).copy_from(&loop_columns());
        let mut c = DMatrix::zeros(14, 4);
        c.view_mut((0, 0), (12, 4)).copy_from(&tap_state_rows());
        c[(12, 0)] = 1.0;
        c[(13, 1)] = 1.0;
        let mut d = DMatrix::zeros(14, 14);
        for &(ch, j) in &TORQUE_TAPS {
            d[(ch, 12 + j)] = 1.0;
        }
        let model = StateSpaceModel::new(
            a,
            b,
            c,
            d,
            &[("delta", 12), ("u", 2)],
            &[("delta", 12), ("y", 2)],
        )?;
        LfrPlant::new(model, domain.clone(), PlantKind::Lpv, "u", "y")
    }

    fn check_domain(domain: &DeltaStructure) -> Result<()> {
        let reps: Vec<usize> = domain.blocks().iter().map(|b| b.rep).collect();
        if reps != [2, 2, 1, 1, 1, 1, 1, 1, 1, 1] {
            return Err(Error::Invalid(
                "arm scheduling box needs blocks p1..p10 with repetitions (2,2,1,...,1)".into(),
            ));
        }
        Ok(())
    }

    /// Weighted generalized plant with eight states: arm (4), tracking
    /// weights (2), actuator filters (2). The controller measures the
    /// tracking error `e` (two channels) and drives `u`; the torque applied
    /// to the joints is the actuator output plus the disturbance `d`, and
    /// the scored channels are `(r, d) -> (z1, z2)`.
    pub fn genplant(domain: &DeltaStructure) -> Result<LfrPlant> {
        check_domain(domain)?;
        // states: x1..x4 arm, x5 x6 tracking weights, x7 x8 actuator.
        // inputs: w_delta(12), r(2), d(2), u(2).
        // outputs: z_delta(12), z1(2), z2(2), e(2).
        let act_gain = WEIGHT_ACTUATOR.state_gain();
        let mut a = DMatrix::zeros(8, 8);
        a[(0, 2)] = 1.0;
        a[(1, 3)] = 1.0;
        a[(4, 0)] = -1.0;
        a[(4, 4)] = -WEIGHT_TRACK.c;
        a[(5, 1)] = -1.0;
        a[(5, 5)] = -WEIGHT_TRACK.c;
        a[(6, 6)] = -WEIGHT_ACTUATOR.c;
        a[(7, 7)] = -WEIGHT_ACTUATOR.c;

        let mut b = DMatrix::zeros(8, 18);
        b.view_mut((0, 0), (4, 12)).copy_from(&loop_columns());
        b[(4, 12)] = 1.0;
        b[(5, 13)] = 1.0;
        b[(6, 16)] = 1.0;
        b[(7, 17)] = 1.0;

        let mut c = DMatrix::zeros(18, 8);
        c.view_mut((0, 0), (12, 4)).copy_from(&tap_state_rows());
        let mut d = DMatrix::zeros(18, 18);
        // torque taps read the actuator states plus the raw disturbance.
        for &(ch, j) in &TORQUE_TAPS {
            c[(ch, 6 + j)] = act_gain;
            d[(ch, 14 + j)] = 1.0;
        }
        for j in 0..2 {
            // z1 = weighted tracking error.
            c[(12 + j, 4 + j)] = WEIGHT_TRACK.state_gain();
            c[(12 + j, j)] = -WEIGHT_TRACK.b;
            d[(12 + j, 12 + j)] = WEIGHT_TRACK.b;
            // z2 = effort weight on the applied torque.
            c[(14 + j, 6 + j)] = WEIGHT_EFFORT * act_gain;
            d[(14 + j, 14 + j)] = WEIGHT_EFFORT;
            // e = r - q.
            c[(16 + j, j)] = -1.0;
            d[(16 + j, 12 + j)] = 1.0;
        }

        let model = StateSpaceModel::new(
            a,
            b,
            c,
            d,
            &[("delta", 12), ("r", 2), ("d", 2), ("u", 2)],
            &[("delta", 12), ("z1", 2), ("z2", 2), ("e", 2)],
        )?;
        LfrPlant::new(model, domain.clone(), PlantKind::Lpv, "u", "e")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfr::point;
    use crate::lti::hinf_norm;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn disk_constants_match_their_definitions() {
        assert_relative_eq!(disk::C1, 1870.9090909090912, epsilon = 1e-9);
        assert_relative_eq!(disk::C2, 1.6747613465081226, epsilon = 1e-12);
        assert_relative_eq!(disk::C3, 25.64059621503936, epsilon = 1e-11);
    }

    #[test]
    fn disk_lfr_nominal_matrices_are_frozen() {
        let plant = disk::lfr();
        let m = plant.model();
        assert_relative_eq!(m.a()[(1, 0)], -51.0758181818182, epsilon = 1e-10);
        assert_relative_eq!(m.a()[(1, 1)], -1.6747613465081226, epsilon = 1e-12);
        assert_relative_eq!(m.b()[(1, 0)], -30.645490909090917, epsilon = 1e-10);
        assert_relative_eq!(m.b()[(1, 1)], -79.8878181818182, epsilon = 1e-10);
        assert_relative_eq!(m.b()[(1, 2)], -47.932690909090915, epsilon = 1e-10);
        assert_relative_eq!(m.b()[(1, 3)], 25.64059621503936, epsilon = 1e-11);
    }

    #[test]
    fn disk_frozen_parameter_rows_match_direct_construction() {
        let plant = disk::lfr();
        let mut rng = stream_rng(2024, 0);
        for _ in 0..25 {
            let d1: f64 = rng.gen_range(-1.0..1.0);
            let d2: f64 = rng.gen_range(-1.0..1.0);
            let local = plant.local_model_at(&point(&[d1, d2])).unwrap();
            let mass = disk::M_HAT + disk::W_MASS * d1;
            let p = disk::P_HAT + disk::W_P * d2;
            assert_relative_eq!(local.a()[(1, 0)], -disk::C1 * mass * p, epsilon = 1e-10);
            assert_relative_eq!(local.a()[(1, 1)], -disk::C2, epsilon = 1e-12);
            assert_relative_eq!(local.a()[(0, 1)], 1.0, epsilon = 1e-14);
            assert_relative_eq!(local.b()[(1, 0)], disk::C3, epsilon = 1e-11);
        }
    }

    #[test]
    fn disk_genplant_freezes_consistently_with_the_bare_lfr() {
        let gen = disk::genplant();
        let bare = disk::lfr();
        let mut rng = stream_rng(2025, 0);
        for _ in 0..10 {
            let d1: f64 = rng.gen_range(-1.0..1.0);
            let d2: f64 = rng.gen_range(-1.0..1.0);
            let pt = point(&[d1, d2]);
            let g = gen.local_model_at(&pt).unwrap();
            let f = bare.local_model_at(&pt).unwrap();
            // The disk block inside the generalized plant carries the same
            // frozen dynamics as the bare plant.
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(g.a()[(i, j)], f.a()[(i, j)], epsilon = 1e-10);
                }
            }
            // Disturbance path into the disk: c3 * DC state gain of W_di.
            assert_relative_eq!(
                g.a()[(1, 5)],
                disk::C3 * disk::WEIGHT_DI.state_gain(),
                epsilon = 1e-10
            );
        }
        assert_eq!(gen.model().a().nrows(), 6);
    }

    #[test]
    fn disk_weights_have_expected_gains() {
        assert_relative_eq!(disk::WEIGHT_R.dc_gain(), 3.162416851441242, epsilon = 1e-12);
        assert_relative_eq!(disk::WEIGHT_Z1.dc_gain(), 9.999761393462181, epsilon = 1e-12);
        // The tracking weight is a plain low-pass: its peak sits at DC.
        let peak = hinf_norm(&disk::WEIGHT_Z1.realize("v", "z"), 1e-8).unwrap();
        assert_relative_eq!(peak, disk::WEIGHT_Z1.dc_gain(), epsilon = 1e-6);
    }

    #[test]
    fn disk_dynamics_agree_with_the_lfr_for_small_angles() {
        // With sin(x) ~ p*x frozen at the matching surrogate value, the
        // nonlinear vector field matches the local linear model.
        let plant = disk::lfr();
        let x = [0.3f64, -0.2];
        let u = 0.7;
        let d1 = 0.4;
        let p = sinc(x[0]);
        let d2 = (p - disk::P_HAT) / disk::W_P;
        let local = plant.local_model_at(&point(&[d1, d2])).unwrap();
        let lin = local.a() * nalgebra::DVector::from_column_slice(&x)
            + local.b().column(0) * u;
        let nl = disk::dynamics(&x, u, d1);
        assert_relative_eq!(lin[0], nl[0], epsilon = 1e-10);
        assert_relative_eq!(lin[1], nl[1], epsilon = 1e-10);
    }

    #[test]
    fn arm_mass_matrix_is_positive_definite() {
        let mut rng = stream_rng(7, 0);
        for _ in 0..100 {
            let q1: f64 = rng.gen_range(-3.2..3.2);
            let q2: f64 = rng.gen_range(-3.2..3.2);
            let m = arm::mass_matrix(q1, q2);
            assert!(m[(0, 0)] > 0.0);
            assert!(m.determinant() > 0.0, "h = {} at ({q1}, {q2})", m.determinant());
            assert_eq!(m[(0, 1)], m[(1, 0)]);
        }
    }

    #[test]
    fn arm_lpv_embedding_reproduces_the_nonlinear_dynamics() {
        let mut rng = stream_rng(8, 0);
        for _ in 0..100 {
            let x = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            ];
            let u = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let p = arm::scheduling_map(&x);
            let (a, b) = arm::lpv_matrices(&p);
            let xv = nalgebra::DVector::from_column_slice(&x);
            let uv = nalgebra::DVector::from_column_slice(&u);
            let lin = a * xv + b * uv;
            let nl = arm::dynamics(&x, &u);
            for i in 0..4 {
                assert_relative_eq!(lin[i], nl[i], epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn arm_equilibrium_is_preserved() {
        let zero = arm::dynamics(&[0.0; 4], &[0.0; 2]);
        assert_eq!(zero, [0.0; 4]);
        let p0 = arm::scheduling_map(&[0.0; 4]);
        assert_relative_eq!(p0[0], 0.12430587753367542, epsilon = 1e-14);
        assert_relative_eq!(p0[4], -0.8133333567028382, epsilon = 1e-14);
        assert_relative_eq!(p0[8], 1.77817071694372, epsilon = 1e-13);
        assert_relative_eq!(p0[9], -1.4119656017295124, epsilon = 1e-14);
        let (a, _) = arm::lpv_matrices(&p0);
        let xv = nalgebra::DVector::zeros(4);
        assert_eq!((a * xv).norm(), 0.0);
    }

    #[test]
    fn arm_lfr_closure_matches_the_direct_lpv_matrices() {
        let mut rng = stream_rng(9, 0);
        let samples: Vec<[f64; 4]> = (0..50)
            .map(|_| {
                [
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ]
            })
            .collect();
        let domain = arm::scheduling_box(&samples).unwrap();
        let plant = arm::lpv_plant(&domain).unwrap();
        for x in samples.iter().take(10) {
            let p = arm::scheduling_map(x);
            let local = plant.local_model_at(&point(&p)).unwrap();
            let (a, b) = arm::lpv_matrices(&p);
            assert_relative_eq!((local.a() - a).norm(), 0.0, epsilon = 1e-12);
            assert_relative_eq!((local.b() - b).norm(), 0.0, epsilon = 1e-12);
        }
        assert_eq!(domain.total_dim(), 12);
    }

    #[test]
    fn arm_genplant_embeds_the_lpv_dynamics_behind_the_actuator() {
        let mut rng = stream_rng(10, 0);
        let samples: Vec<[f64; 4]> = (0..50)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                ]
            })
            .collect();
        let domain = arm::scheduling_box(&samples).unwrap();
        let gen = arm::genplant(&domain).unwrap();
        assert_eq!(gen.model().a().nrows(), 8);
        let p = arm::scheduling_map(&samples[0]);
        let local = gen.local_model_at(&point(&p)).unwrap();
        let (a, b) = arm::lpv_matrices(&p);
        // Arm block matches, and the torque now arrives through the
        // actuator states with the filter's DC state gain.
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(local.a()[(i, j)], a[(i, j)], epsilon = 1e-12);
            }
            for j in 0..2 {
                assert_relative_eq!(
                    local.a()[(i, 6 + j)],
                    b[(i, j)] * arm::WEIGHT_ACTUATOR.state_gain(),
                    epsilon = 1e-9,
                );
            }
        }
    }

    #[test]
    fn sinc_is_continuous_through_zero() {
        assert_eq!(sinc(0.0), 1.0);
        assert_relative_eq!(sinc(1e-7), 1.0, epsilon = 1e-13);
        assert_relative_eq!(sinc(std::f64::consts::PI), 0.0, epsilon = 1e-15);
        assert_relative_eq!(sinc(1.0), 1.0f64.sin(), epsilon = 1e-15);
    }
}
