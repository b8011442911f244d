use hvdw::fiber::*;
use hvdw::field::*;
use hvdw::lie::LieAlgebraSpec;
use hvdw::rng::{seeded, sym};
use proptest::prelude::*;
use std::sync::Arc;

fn u1_setting(sizes: &[usize], k: u32, scheme: Scheme) -> Arc<Setting> {
    Setting::new(LieAlgebraSpec::u1(), FiberBasis::u1(k), BaseManifoldSpec::torus(sizes).with_scheme(scheme)).unwrap()
}

fn su2_setting(sizes: &[usize], jmax: f64) -> Arc<Setting> {
    Setting::new(LieAlgebraSpec::su2(), FiberBasis::su2(jmax).unwrap(), BaseManifoldSpec::torus(sizes)).unwrap()
}

fn scalar_lattice(s: &Setting, f: impl Fn(&[f64]) -> f64) -> Lattice {
    let mut l = s.lattice(1);
    let c0 = s.fiber.constant_index();
    for site in 0..s.nsites() {
        l.at_mut(site, 0)[c0] = C64::new(f(&s.base.position(site)), 0.0);
    }
    l
}

fn max_dev(s: &Setting, l: &Lattice, f: impl Fn(&[f64]) -> f64) -> f64 {
    let c0 = s.fiber.constant_index();
    (0..s.nsites()).map(|site| (l.at(site, 0)[c0] - f(&s.base.position(site))).norm()).fold(0.0, f64::max)
}

#[test]
fn derivative_of_constant_vanishes() {
    for scheme in [Scheme::Spectral, Scheme::Central2, Scheme::Central4] {
        let s = u1_setting(&[8, 6], 1, scheme);
        let l = scalar_lattice(&s, |_| 3.0);
        for a in 0..2 {
            assert!(s.derivative(&l, a).max_abs() < 1e-12);
        }
    }
}

#[test]
fn spectral_derivative_is_exact_for_band_limited_input() {
    let s = u1_setting(&[32], 0, Scheme::Spectral);
    let l = scalar_lattice(&s, |x| x[0].sin());
    let d = horizontal_derivative(&s, &l, 0, false).unwrap();
    assert!(max_dev(&s, &d, |x| x[0].cos()) < 1e-13);
}

#[test]
fn central_schemes_refine_at_their_order() {
    let err = |n: usize, scheme| {
        let s = u1_setting(&[n], 0, scheme);
        let d = s.derivative(&scalar_lattice(&s, |x| x[0].sin()), 0);
        max_dev(&s, &d, |x| x[0].cos())
    };
    let r2 = err(32, Scheme::Central2) / err(64, Scheme::Central2);
    let r4 = err(32, Scheme::Central4) / err(64, Scheme::Central4);
    assert!((r2 - 4.0).abs() < 0.05, "central-2 ratio {r2}");
    assert!((r4 - 16.0).abs() < 0.3, "central-4 ratio {r4}");
}

#[test]
fn covariant_derivative_couples_frame_connection() {
    let mut base = BaseManifoldSpec::torus(&[4, 4]);
    base.gamma[3] = 0.5; // Γ^1_{22}
    base.gamma[6] = -0.5; // Γ^2_{21}
    let s = Setting::new(LieAlgebraSpec::u1(), FiberBasis::u1(0), base).unwrap();
    let mut eta = ConnectionField::zero(&s);
    for site in 0..s.nsites() {
        eta.eta.at_mut(site, 0)[0] = C64::new(1.0, 0.0); // η_1 = 1
        eta.eta.at_mut(site, 1)[0] = C64::new(2.0, 0.0); // η_2 = 2
    }
    // (∇_2 η)_2 = −η_1 Γ^1_{22} = −0.5 and (∇_2 η)_1 = −η_2 Γ^2_{21} = 1
    let d = horizontal_derivative(&s, &eta.eta, 1, true).unwrap();
    assert!((d.at(5, 1)[0] - C64::new(-0.5, 0.0)).norm() < 1e-14);
    assert!((d.at(5, 0)[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
    assert!(horizontal_derivative(&s, &eta.eta, 0, true).unwrap().max_abs() < 1e-14);
}

#[test]
fn u1_curvature_of_sine_potential() {
    let s = u1_setting(&[16, 8], 2, Scheme::Spectral);
    let a = {
        let mut a = BaseField::zeros(s.nsites(), 2);
        for site in 0..s.nsites() {
            a.at_mut(site)[1] = s.base.position(site)[0].sin();
        }
        a
    };
    let eta = equivariant_embed(&s, &a).unwrap();
    let f = curvature(&eta);
    assert!(!f.lossy);
    assert!(max_dev(&s, &f.f, |x| x[0].cos()) < 1e-13);
    let zero = curvature(&ConnectionField::zero(&s));
    assert_eq!(zero.f.max_abs(), 0.0);
}

#[test]
fn su2_constant_field_curvature_is_conjugated_t3() {
    let s = su2_setting(&[2, 2], 1.0);
    let mut a = BaseField::zeros(s.nsites(), 6);
    for site in 0..s.nsites() {
        a.at_mut(site)[0] = 1.0; // A_1 = t_1
        a.at_mut(site)[3 + 1] = 1.0; // A_2 = t_2
    }
    let eta = equivariant_embed(&s, &a).unwrap();
    let f = curvature(&eta);
    let mut rng = seeded(4);
    for _ in 0..5 {
        let g = GroupElement::random(Group::SU2, &mut rng);
        let m = g.inv().ad_matrix();
        for i in 0..3 {
            let v = s.fiber.evaluate(f.f.at(3, i), &g).unwrap();
            assert!((v.re - m[i * 3 + 2]).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }
}

#[test]
fn equivariance_defect_examples() {
    // U1 with a k = 1 fiber mode
    let s = u1_setting(&[4], 2, Scheme::Spectral);
    let mut eta = ConnectionField::zero(&s);
    let k1 = s.fiber.index(Mode::Fourier(1)).unwrap();
    for site in 0..s.nsites() {
        eta.eta.at_mut(site, 0)[k1] = C64::new(0.3, 0.1);
    }
    let e = equivariance_defect(&eta);
    assert!((e.at(2, 0)[k1] - C64::new(0.0, 1.0) * C64::new(0.3, 0.1)).norm() < 1e-15);

    // SU2 with fiber-constant η_1 = t_1
    let s = su2_setting(&[2, 2], 1.0);
    let mut eta = ConnectionField::zero(&s);
    for site in 0..s.nsites() {
        eta.eta.at_mut(site, 0)[0] = C64::new(1.0, 0.0);
    }
    let e = equivariance_defect(&eta);
    let su2 = LieAlgebraSpec::su2();
    for j in 0..3 {
        let mut tj = [0.0; 3];
        tj[j] = 1.0;
        let expect = su2.bracket(&tj, &[1.0, 0.0, 0.0]).unwrap();
        for i in 0..3 {
            assert!((e.at(1, j * 3 + i)[0].re - expect[i]).abs() < 1e-15);
        }
    }
    assert!(e.max_abs() > 0.5);
}

#[test]
fn embed_keeps_the_fixed_axis() {
    let s = su2_setting(&[2, 2], 1.0);
    let mut a = BaseField::zeros(s.nsites(), 6);
    a.at_mut(0)[2] = 1.0;
    let eta = equivariant_embed(&s, &a).unwrap();
    let g = GroupElement::exp(Group::SU2, &[0.0, 0.0, std::f64::consts::FRAC_PI_2]).unwrap();
    for i in 0..3 {
        let v = s.fiber.evaluate(eta.eta.at(0, i), &g).unwrap();
        assert!((v.re - if i == 2 { 1.0 } else { 0.0 }).abs() < 1e-14);
    }
    assert_eq!(equivariant_embed(&s, &BaseField::zeros(4, 6)).unwrap().eta.max_abs(), 0.0);
    let u = u1_setting(&[3], 2, Scheme::Spectral);
    let mut a = BaseField::zeros(3, 1);
    a.data = vec![0.5, -1.0, 2.0];
    let e = equivariant_embed(&u, &a).unwrap();
    assert_eq!(BaseField::from_lattice(&e.eta, &u.fiber), a);
    let small = su2_setting(&[2, 2], 0.5);
    assert!(matches!(equivariant_embed(&small, &BaseField::zeros(4, 6)), Err(hvdw::Error::Config(_))));
}

#[test]
fn fiber_divergence_guard() {
    let b = FiberBasis::su2(1.0).unwrap();
    let phi = Lattice::zeros(1, 2 * 4, b.len());
    let aff = LieAlgebraSpec::aff1();
    assert!(matches!(fiber_divergence_average(&aff, &b, &phi), Err(hvdw::Error::NonUnimodular(_))));
}

#[test]
fn snapshot_file_round_trip() {
    let s = su2_setting(&[2, 3], 1.0);
    let mut rng = seeded(1);
    let mut eta = ConnectionField::zero(&s);
    eta.eta.data.iter_mut().for_each(|v| *v = C64::new(sym(&mut rng, 1.0), sym(&mut rng, 1.0)));
    let p = MomentumField::zero(&s);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.hvdw");
    state_snapshot(&eta, &p, serde_json::Value::Null).save(&path).unwrap();
    let snap = Snapshot::load(&path).unwrap();
    let (e2, _) = state_from_snapshot(&snap).unwrap();
    assert_eq!(e2.eta, eta.eta);
    assert_eq!(snap.header.truncation, 2);
    assert!(Snapshot::load(&dir.path().join("missing")).is_err());
}

fn random_base(s: &Setting, seed: u64, amp: f64) -> BaseField {
    // band-limited: low Fourier modes on every axis
    let mut rng = seeded(seed);
    let (n, r) = (s.n(), s.r());
    let mut a = BaseField::zeros(s.nsites(), n * r);
    let waves: Vec<(Vec<f64>, f64, f64)> = (0..n * r * 3)
        .map(|_| ((0..n).map(|_| (sym(&mut rng, 1.5)).round()).collect(), sym(&mut rng, amp), sym(&mut rng, 3.0)))
        .collect();
    for site in 0..s.nsites() {
        let x = s.base.position(site);
        for c in 0..n * r {
            let mut v = 0.0;
            for (k, amp, ph) in &waves[c * 3..c * 3 + 3] {
                v += amp * (k.iter().zip(&x).map(|(k, x)| k * x).sum::<f64>() + ph).cos();
            }
            a.at_mut(site)[c] = v;
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn embedded_fields_are_equivariant(seed in 0u64..10_000) {
        let s = su2_setting(&[4, 4], 1.0);
        let eta = equivariant_embed(&s, &random_base(&s, seed, 0.5)).unwrap();
        prop_assert!(equivariance_defect(&eta).max_abs() < 1e-12);
        prop_assert!(eta.eta.reality_defect(&s.fiber) < 1e-14);
    }

    #[test]
    fn embedded_curvature_is_conjugated_base_curvature(seed in 0u64..10_000) {
        let s = su2_setting(&[4, 4], 1.0);
        let a = random_base(&s, seed, 0.5);
        let f = curvature(&equivariant_embed(&s, &a).unwrap());
        // base curvature from the fiber-constant lift
        let mut flat = ConnectionField::zero(&s);
        flat.eta = a.to_lattice(&s.fiber);
        let base_f = curvature(&flat);
        let mut rng = seeded(seed);
        let g = GroupElement::random(Group::SU2, &mut rng);
        let m = g.inv().ad_matrix();
        for site in 0..s.nsites() {
            let phi: Vec<f64> = (0..3).map(|i| base_f.f.at(site, i)[0].re).collect();
            for i in 0..3 {
                let v = s.fiber.evaluate(f.f.at(site, i), &g).unwrap();
                let expect: f64 = (0..3).map(|j| m[i * 3 + j] * phi[j]).sum();
                prop_assert!((v.re - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn abelian_curvature_is_antisymmetrized_derivative(seed in 0u64..10_000) {
        let s = u1_setting(&[8, 8], 2, Scheme::Spectral);
        let mut eta = ConnectionField::zero(&s);
        eta.eta = random_base(&s, seed, 1.0).to_lattice(&s.fiber);
        let f = curvature(&eta);
        let d1 = s.derivative(&eta.eta, 0);
        let d2 = s.derivative(&eta.eta, 1);
        for site in 0..s.nsites() {
            let expect = d1.at(site, 1)[2] - d2.at(site, 0)[2];
            prop_assert!((f.f.at(site, 0)[2] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn fiber_divergence_average_vanishes(seed in 0u64..10_000) {
        for b in [FiberBasis::u1(3), FiberBasis::su2(1.5).unwrap()] {
            let spec = if b.group() == Group::U1 { LieAlgebraSpec::u1() } else { LieAlgebraSpec::su2() };
            let r = spec.dim();
            let mut rng = seeded(seed);
            let mut phi = Lattice::zeros(3, 2 * r * r, b.len());
            phi.data.iter_mut().for_each(|v| *v = C64::new(sym(&mut rng, 1.0), sym(&mut rng, 1.0)));
            let avg = fiber_divergence_average(&spec, &b, &phi).unwrap();
            prop_assert!(avg.iter().all(|z| z.norm() <= 1e-14));
        }
    }
}
