use std::sync::Arc;

use algebroid_lab_core::algebroid::Action;
use algebroid_lab_core::integrate::{
    convergence_study, halving_ladder, integrate, rkmk4_step_with_order, step, ActionODE, Method,
};
use nalgebra::{DMatrix, DVector, Rotation3, Unit, Vector3};
use proptest::prelude::*;

const ACTION_METHODS: [Method; 2] = [Method::LieEuler, Method::RKMK4];

fn unit_vector() -> impl Strategy<Value = DVector<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("away from the origin", |(a, b, c)| a * a + b * b + c * c > 0.01)
        .prop_map(|(a, b, c)| DVector::from_vec(vec![a, b, c]).normalize())
}

fn rotation(axis: &DVector<f64>, angle: f64) -> DMatrix<f64> {
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(axis[0], axis[1], axis[2])), angle);
    DMatrix::from_iterator(3, 3, r.matrix().iter().copied())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // z = Qy solves ż = z × Q f(Qᵀz); every action-based step commutes with Q.
    #[test]
    fn steps_are_rotation_equivariant(axis in unit_vector(), angle in -3.0f64..3.0, y in unit_vector(), h in 0.01f64..0.3) {
        let base = ActionODE::sphere_builtin();
        let q = rotation(&axis, angle);
        let (q1, qt) = (q.clone(), q.transpose());
        let f = move |z: &DVector<f64>| {
            let y = &qt * z;
            &q1 * DVector::from_vec(vec![1.0, 0.5 * y[2], y[0] / 3.0])
        };
        let rotated = ActionODE::new("rotated", Arc::new(Action::so3_sphere()), f, &q * &base.y0, 1.0).unwrap();
        for m in ACTION_METHODS {
            let a = &q * step(&base, m, &y, h).unwrap();
            let b = step(&rotated, m, &(&q * &y), h).unwrap();
            prop_assert!((a - b).amax() <= 1e-12, "{}", m.name());
        }
    }

    #[test]
    fn action_steps_stay_on_the_sphere(y0 in unit_vector(), h in 0.05f64..0.5) {
        let p = ActionODE::sphere_builtin().with_initial(y0, 1.0).unwrap();
        for m in ACTION_METHODS {
            let t = integrate(&p, m, h, 10_000).unwrap();
            prop_assert!(t.max_drift <= 1e-12, "{}: {:e}", m.name(), t.max_drift);
        }
    }
}

#[test]
fn truncating_dexpinv_costs_order() {
    let p = ActionODE::sphere_builtin();
    let ladder = halving_ladder(0.1, 5);
    let slope = |m| convergence_study(&p, m, &ladder).unwrap().slope.unwrap();
    assert!(slope(Method::Rkmk4 { dexpinv_order: 0 }) <= 2.5);
    assert!((3.7..=4.3).contains(&slope(Method::RKMK4)));
}

#[test]
fn truncation_is_harmless_for_constant_coefficients() {
    let a = DVector::from_vec(vec![0.3, -0.2, 0.9]);
    let y0 = DVector::from_vec(vec![0.0, 0.6, 0.8]);
    let p = ActionODE::constant(Arc::new(Action::so3_sphere()), a, y0.clone(), 1.0).unwrap();
    let full = rkmk4_step_with_order(&p, &y0, 0.2, 2).unwrap();
    let truncated = rkmk4_step_with_order(&p, &y0, 0.2, 0).unwrap();
    assert!((full - truncated).amax() <= 1e-14);
}
