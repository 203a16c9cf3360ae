use gradplast::algebra::{Mat3, SlipBasis, SlipSystem, Vec3};
use gradplast::grid::{
    curl_adjoint, curl_mat, div_mat, grad, grad_adjoint, l2_inner, Face, FaceSet, GridSpec, Mat3Field, SlipField,
    Vec3Field,
};
use gradplast::solver::{eliminate_eta, prox_scalar_iso, prox_scalar_kin};
use gradplast::verify::{prox_iso_reference, prox_kin_reference};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> impl Strategy<Value = GridSpec> {
    (2usize..6, 2usize..6, 2usize..6, 1u8..64).prop_map(|(nx, ny, nz, mask)| {
        let faces: Vec<Face> = Face::ALL.iter().copied().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, f)| f).collect();
        GridSpec::new(nx, ny, nz, 1.0 / nx.max(ny).max(nz) as f64, FaceSet::from_faces(&faces)).unwrap()
    })
}

fn vec_field(spec: &GridSpec, seed: u64) -> Vec3Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vec3Field::from_vec(
        (0..spec.cells())
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    )
}

fn mat_field(spec: &GridSpec, seed: u64) -> Mat3Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat3Field::from_vec(
        (0..spec.cells())
            .map(|_| Mat3::from_row_major([0; 9].map(|_| rng.random_range(-1.0..1.0))))
            .collect(),
    )
}

fn max_norm(f: &Mat3Field) -> f64 {
    f.values().iter().fold(0.0f64, |m, a| m.max(a.norm()))
}

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("not too short", |(a, b, c)| a * a + b * b + c * c > 0.01)
        .prop_map(|(a, b, c)| {
            let v = Vec3::new(a, b, c);
            v * (1.0 / v.norm())
        })
}

fn system() -> impl Strategy<Value = SlipSystem> {
    (unit(), unit())
        .prop_filter("independent", |(l, w)| l.cross(w).norm() > 0.1)
        .prop_map(|(l, w)| {
            let nu = l.cross(&w);
            SlipSystem::new(l, nu * (1.0 / nu.norm())).unwrap()
        })
}

proptest! {
    #[test]
    fn iso_prox_vanishes_below_threshold(t in 0.01f64..10.0, s0 in 0.0f64..1.0, k in 0.0f64..2.0, e in 0.0f64..1.0, r in 0.0f64..=1.0) {
        let thr = t * (s0 + k * e);
        prop_assert_eq!(prox_scalar_iso(r * thr, t, s0, k, e), 0.0);
        prop_assert_eq!(prox_scalar_iso(-r * thr, t, s0, k, e), 0.0);
    }

    #[test]
    fn iso_prox_is_monotone_and_nonexpansive(
        x in -5.0f64..5.0, y in -5.0f64..5.0,
        t in 0.01f64..10.0, s0 in 0.0f64..1.0, k in 0.0f64..2.0, e in 0.0f64..1.0,
    ) {
        let (px, py) = (prox_scalar_iso(x, t, s0, k, e), prox_scalar_iso(y, t, s0, k, e));
        prop_assert!((px - py) * (x - y) >= 0.0);
        prop_assert!((px - py).abs() <= (x - y).abs() * (1.0 + 1e-15));
    }

    #[test]
    fn iso_prox_matches_reference(x in -5.0f64..5.0, t in 0.01f64..10.0, s0 in 0.0f64..1.0, k in 0.0f64..2.0, e in 0.0f64..1.0) {
        let d = prox_scalar_iso(x, t, s0, k, e);
        let g = prox_iso_reference(x, t, s0, k, e);
        prop_assert!((d - g).abs() <= 1e-10 * (1.0 + x.abs()), "{} vs {}", d, g);
    }

    #[test]
    fn kin_prox_is_odd_and_matches_reference(x in -5.0f64..5.0, t in 0.01f64..10.0, s0 in 0.0f64..1.0) {
        let d = prox_scalar_kin(x, t, s0);
        prop_assert_eq!(d, -prox_scalar_kin(-x, t, s0));
        prop_assert!((d - prox_kin_reference(x, t, s0)).abs() <= 1e-10 * (1.0 + x.abs()));
    }

    #[test]
    fn curl_of_grad_vanishes(spec in grid(), seed in any::<u64>()) {
        let u = vec_field(&spec, seed);
        let cg = curl_mat(&grad(&u, &spec).unwrap(), &spec).unwrap();
        let h = spec.h();
        prop_assert!(max_norm(&cg) <= 1e-13 / (h * h), "{}", max_norm(&cg));
    }

    #[test]
    fn div_of_curl_vanishes(spec in grid(), seed in any::<u64>()) {
        let x = mat_field(&spec, seed);
        let dc = div_mat(&curl_mat(&x, &spec).unwrap(), &spec).unwrap();
        let worst = dc.values().iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let h = spec.h();
        prop_assert!(worst <= 1e-13 / (h * h), "{}", worst);
    }

    #[test]
    fn adjoints_are_transposes(spec in grid(), seed in any::<u64>()) {
        let u = vec_field(&spec, seed);
        let s = mat_field(&spec, seed ^ 1);
        let x = mat_field(&spec, seed ^ 2);
        let lhs = l2_inner(&grad(&u, &spec).unwrap(), &s, &spec).unwrap();
        let rhs = l2_inner(&u, &grad_adjoint(&s, &spec).unwrap(), &spec).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
        let lhs = l2_inner(&curl_mat(&x, &spec).unwrap(), &s, &spec).unwrap();
        let rhs = l2_inner(&x, &curl_adjoint(&s, &spec).unwrap(), &spec).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn plastic_distortion_is_traceless(systems in prop::collection::vec(system(), 1..5), g in prop::collection::vec(-2.0f64..2.0, 5)) {
        let basis = SlipBasis::new(systems).unwrap();
        let p = basis.apply(&g[..basis.len()]).unwrap();
        prop_assert!(p.trace().abs() <= 1e-12);
    }

    #[test]
    fn hardening_variable_never_decreases(d in prop::collection::vec(-1.0f64..1.0, 12), e in prop::collection::vec(0.0f64..1.0, 12)) {
        let d = SlipField::from_vec(3, d).unwrap();
        let prev = SlipField::from_vec(3, e).unwrap();
        let eta = eliminate_eta(&d, &prev).unwrap();
        for ((a, b), q) in eta.values().iter().zip(prev.values()).zip(d.values()) {
            prop_assert!(a >= b);
            prop_assert!((a - b - q.abs()).abs() <= 1e-15);
        }
    }
}
