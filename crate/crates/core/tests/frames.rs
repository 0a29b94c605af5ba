use maxclass_core::distribution::{Distribution2, OdeModel};
use maxclass_core::frames::*;
use maxclass_core::symplectic::Symplectification;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn symp(m: usize) -> Symplectification {
    Symplectification::new(&Distribution2::from_ode(&OdeModel::maximal(m)).unwrap()).unwrap()
}

#[test]
fn epsilon_normalization_at_random_covectors() {
    let s = symp(2);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for k in 0..20 {
        let q: Vec<f64> = (0..5).map(|_| rng.random_range(-0.8..0.8)).collect();
        let l = s.sample_regular_covector(&q, k).unwrap();
        let velocity = rng.random_range(0.3..3.0);
        let e = epsilon_normalize(&s, &l, velocity).unwrap();
        assert!((e.pairing.abs() - 1.0).abs() < PAIRING_TOL, "pairing {}", e.pairing);
        assert!(e.scale.is_finite() && e.scale > 0.0);
        let v = vertical_space(&s, &l, 1).unwrap();
        assert!(v.residual(&e.vector) < 1e-8);
        let rescaled = epsilon_normalize(&s, &l, 2.0 * velocity).unwrap();
        assert!((rescaled.pairing.abs() - 1.0).abs() < PAIRING_TOL);
    }
}

#[test]
fn skew_complement_of_jacobi_subspace_is_itself() {
    let s = symp(3);
    let l = s.sample_regular_covector(&[0.1, 0.2, -0.3, 0.4, 0.0, 0.5], 3).unwrap();
    let j = s.jacobi_subspace(&l).unwrap();
    let c = skew_complement(&s, &l, 0).unwrap();
    assert_eq!(c.dim(), j.dim());
    for col in c.basis.column_iter() {
        assert!(j.residual(&col.into_owned()) < 1e-8);
    }
    let all = skew_complements(&s, &l, 2).unwrap();
    let dims: Vec<usize> = all.iter().map(|f| f.dim()).collect();
    assert_eq!(dims, [5, 4, 3]);
}

#[test]
fn flows_close_into_gl2() {
    let s = symp(2);
    let flows = sigma_flow_fields(&s).unwrap();
    let pts = sample_sigma_points(&s, 10, 77).unwrap();
    for (label, r) in flows.gl2_residuals(&pts).unwrap() {
        assert!(r < FRAME_TOL, "{label}: {r}");
    }
    let (table, residual) = flows.structure(&pts).unwrap();
    assert!(residual < FRAME_TOL);
    assert!(table.rounding_error() < FRAME_TOL);
    let t = table.rounded();
    let i = |l: &str| t.index(l).unwrap();
    assert_eq!(t.format_relation(i("g1"), i("g2")), "[g1,g2] = 2 g2");
    assert_eq!(t.format_relation(i("g1"), i("h")), "[g1,h] = -2 h");
    assert_eq!(t.format_relation(i("g2"), i("h")), "[g2,h] = g1");
}

#[test]
fn model_frames_up_to_seven() {
    for n in [5, 6, 7] {
        let f = model_frame(n).unwrap();
        let c = &f.checks;
        assert_eq!(f.fields.len(), 2 * n - 1);
        assert_eq!(c.dimension, 2 * n - 1);
        assert!(c.symmetry_residual < FRAME_TOL, "n = {n}: {}", c.symmetry_residual);
        assert!(c.fit_residual < FRAME_TOL);
        assert!(c.antisymmetry < FRAME_TOL);
        assert!(c.jacobi_residual < FRAME_TOL);
        assert!(c.rounding_error < FRAME_TOL);
        assert!(c.heisenberg_residual < FRAME_TOL);
        assert!(c.center_residual < FRAME_TOL);
        let t = &f.table;
        let m = n - 3;
        let i = |l: &str| t.index(l).unwrap();
        for k in 1..=2 * m {
            let j = 2 * m - k + 1;
            let sign = if k % 2 == 1 { "" } else { "-" };
            if k < j {
                assert_eq!(
                    t.format_relation(i(&format!("eps{k}")), i(&format!("eps{j}"))),
                    format!("[eps{k},eps{j}] = {sign}eta")
                );
            }
        }
    }
}

#[test]
fn table_does_not_depend_on_samples() {
    let a = model_frame_with_seed(6, 1).unwrap();
    let b = model_frame_with_seed(6, 2).unwrap();
    assert_eq!(a.table, b.table);
}

#[test]
fn kappa_on_model_frames() {
    for n in [6, 7] {
        let m = n - 3;
        let (_, fields) = model_fields(n).unwrap();
        let gl2 = [
            fields[0].clone(),
            fields[1].clone(),
            fields[2].clone(),
            fields[3].clone(),
        ];
        let u: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.2).collect();
        let k = kappa_coefficients(&gl2, &fields[4], m, &u).unwrap();
        assert!(k.k1.abs() < 1e-6);
        assert!(k.k2.unwrap().abs() < 1e-6);
        assert!(k.k3.unwrap().abs() < 1e-6);
        assert!(k.residual < 1e-8);
        let bent = fields[4]
            .add(&fields[2].scale(maxclass_core::expr::Num::Float(0.1)))
            .unwrap();
        let k = kappa_coefficients(&gl2, &bent, m, &u).unwrap();
        let moved = [k.k1, k.k2.unwrap(), k.k3.unwrap()].iter().any(|v| v.abs() > 1e-3);
        assert!(moved, "{k:?}");
    }
}
