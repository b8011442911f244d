mod common;

use common::*;
use hvdw::dynamics::*;
use hvdw::fiber::*;
use hvdw::field::*;
use hvdw::gauge::*;
use hvdw::rng::seeded;
use hvdw::Error;
use proptest::prelude::*;
use std::sync::Arc;

fn diff(a: &Lattice, b: &Lattice, basis: &FiberBasis) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d.max_norm(basis)
}

fn with_fiber_mode(eta: &ConnectionField, mode: Mode, amp: f64) -> ConnectionField {
    let s = &eta.setting;
    let mut out = eta.clone();
    let mu = s.fiber.index(mode).unwrap();
    for site in 0..s.nsites() {
        out.eta.at_mut(site, 0)[mu] += C64::new(amp, 0.3 * amp);
    }
    out.eta.realify(&s.fiber);
    out
}

#[test]
fn identity_gauge_is_trivial() {
    let s = su2_setting(&[4, 4], 2.0);
    let (eta, p) = random_state(&s, 3, 1);
    let f = GaugeElement::identity(&s);
    let (e2, p2, lossy) = gauge_transform(&eta, &p, &f, true).unwrap();
    assert!(!lossy);
    assert!(diff(&e2.eta, &eta.eta, &s.fiber) < 1e-14);
    assert!(diff(&p2.paj, &p.paj, &s.fiber) < 1e-14);
    assert!(diff(&p2.pab, &p.pab, &s.fiber) < 1e-14);
}

#[test]
fn u1_shifts_potential_by_gradient() {
    let s = u1_setting(&[8, 8], 2);
    let a = random_base(&s, 5, 0.5);
    let eta = equivariant_embed(&s, &a).unwrap();
    let p = MomentumField::zero(&s);
    let mut rng = seeded(9);
    let f = GaugeElement::random(&s, &mut rng, 0.7, 1).unwrap();
    let (e2, _, _) = gauge_transform(&eta, &p, &f, true).unwrap();
    let at = extract_base_field(&e2).unwrap();
    let phi = Lattice { nsites: s.nsites(), ncomp: 1, nmodes: 1, data: f.potential.data.iter().map(|&v| C64::new(v, 0.0)).collect() };
    for d in 0..2 {
        let dphi = s.derivative(&phi, d);
        for site in 0..s.nsites() {
            let want = a.at(site)[d] + dphi.data[site].re;
            assert!((at.at(site)[d] - want).abs() < 1e-12);
        }
    }
    // curvature is invariant
    let f0 = curvature(&eta);
    let f1 = curvature(&e2);
    assert!(diff(&f0.f, &f1.f, &s.fiber) < 1e-12);
}

fn pointwise_gap(eta: &ConnectionField, p: &MomentumField, e2: &ConnectionField, p2: &MomentumField, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..4 {
        let g = GroupElement::random(eta.setting.fiber.group(), &mut rng);
        let l0 = lagrangian_density_at(eta, p, &g).unwrap();
        let l1 = lagrangian_density_at(e2, p2, &g).unwrap();
        for (x, y) in l0.iter().zip(&l1) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

#[test]
fn su2_lagrangian_is_pointwise_invariant() {
    let s = su2_setting(&[16, 16], 3.0);
    let (eta, p) = random_state(&s, 21, 1);
    let mut rng = seeded(22);
    let f = GaugeElement::random(&s, &mut rng, 0.1, 1).unwrap();
    let (e2, p2, lossy) = gauge_transform(&eta, &p, &f, true).unwrap();
    assert!(!lossy);
    let gap = pointwise_gap(&eta, &p, &e2, &p2, 23);
    assert!(gap < 1e-10, "gap {gap:e}");
}

#[test]
fn strict_mode_rejects_truncation() {
    let s = su2_setting(&[4, 4], 1.0);
    let (eta, p) = random_state(&s, 2, 1);
    let mut rng = seeded(4);
    let f = GaugeElement::random(&s, &mut rng, 0.5, 1).unwrap();
    assert!(matches!(gauge_transform(&eta, &p, &f, true), Err(Error::Truncation(_))));
    let (_, _, lossy) = gauge_transform(&eta, &p, &f, false).unwrap();
    assert!(lossy);
}

#[test]
fn su2_curvature_is_covariant() {
    let s = su2_setting(&[16, 16], 3.0);
    let a = random_base(&s, 31, 0.4);
    let eta = equivariant_embed(&s, &a).unwrap();
    let mut rng = seeded(32);
    let f = GaugeElement::random(&s, &mut rng, 0.1, 1).unwrap();
    let mut p = MomentumField::zero(&s);
    let curv = curvature(&eta);
    assert!(!curv.lossy);
    p.pab = curv.f.clone();
    let (e2, pf, _) = gauge_transform(&eta, &p, &f, true).unwrap();
    let curv2 = curvature(&e2);
    assert!(!curv2.lossy);
    assert!(diff(&curv2.f, &pf.pab, &s.fiber) < 1e-10);
    // the transformed connection stays equivariant
    assert!(equivariance_defect(&e2).max_norm(&s.fiber) < 1e-12);
}

#[test]
fn actions_agree_on_equivariant_connections() {
    for s in [u1_setting(&[8, 8], 2), su2_setting(&[8, 8], 2.0)] {
        let a = random_base(&s, 41, 0.5);
        let eta = equivariant_embed(&s, &a).unwrap();
        let mut rng = seeded(42);
        let f = GaugeElement::random(&s, &mut rng, 0.6, 1).unwrap();
        let (e1, _, _) = gauge_transform(&eta, &MomentumField::zero(&s), &f, false).unwrap();
        let e2 = alternative_gauge_pullback(&eta, &f).unwrap();
        assert!(diff(&e1.eta, &e2.eta, &s.fiber) < 1e-10);
    }
}

#[test]
fn actions_differ_off_equivariance() {
    let cases = [(u1_setting(&[8, 8], 2), Mode::Fourier(1)), (su2_setting(&[8, 8], 3.0), Mode::Wigner(2, 0, 2))];
    for (s, mode) in cases {
        let a = random_base(&s, 51, 0.5);
        let eta = with_fiber_mode(&equivariant_embed(&s, &a).unwrap(), mode, 0.3);
        let mut rng = seeded(52);
        let f = GaugeElement::random(&s, &mut rng, 0.6, 1).unwrap();
        let (e1, _, _) = gauge_transform(&eta, &MomentumField::zero(&s), &f, false).unwrap();
        let e2 = alternative_gauge_pullback(&eta, &f).unwrap();
        let mut d = e1.eta.clone();
        d.axpy(-1.0, &e2.eta);
        assert!(d.norm2(&s.fiber).sqrt() > 1e-6);
    }
}

#[test]
fn alternative_pullback_translates_fiber_argument() {
    let s = su2_setting(&[4, 4], 2.0);
    let (eta, _) = random_state(&s, 61, 2);
    let mut rng = seeded(62);
    let f = GaugeElement::random(&s, &mut rng, 0.6, 1).unwrap();
    let e2 = alternative_gauge_pullback(&eta, &f).unwrap();
    let m = adjoint_matrix_function(&s.spec, &s.fiber).unwrap();
    let g = GroupElement::random(Group::SU2, &mut rng);
    let mg = m.iter().map(|x| x.evaluate(&g).unwrap()).collect::<Vec<_>>();
    let site = 5;
    let fg = f.values[site].mul(&g).unwrap();
    for a in 0..2 {
        for i in 0..3 {
            let lhs = s.fiber.evaluate(e2.eta.at(site, a * 3 + i), &g).unwrap();
            let mut rhs = s.fiber.evaluate(eta.eta.at(site, a * 3 + i), &fg).unwrap();
            for l in 0..3 {
                rhs += mg[i * 3 + l] * f.u[(site * 2 + a) * 3 + l];
            }
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}

fn u1_dual(s: &Arc<Setting>, seed: u64) -> DualGaugeElement {
    let chi = random_base(s, seed, 0.5);
    DualGaugeElement::u1_constant(s, &chi).unwrap()
}

#[test]
fn u1_dual_shift_leaves_dynamics_alone() {
    let s = u1_setting(&[8, 8], 2);
    let (eta, p) = random_state(&s, 71, 1);
    let chi = u1_dual(&s, 72);
    let p2 = dual_gauge_shift(&p, &chi).unwrap();
    assert!((action(&eta, &p) - action(&eta, &p2)).abs() < 1e-12);
    let h0 = hamiltonian_density(&epsilon_from_level_set(&p), &p).unwrap();
    let h1 = hamiltonian_density(&epsilon_from_level_set(&p2), &p2).unwrap();
    assert!(h0.max_diff(&h1) < 1e-14);
    let r0 = hvdw_residuals(&eta, &p, None).unwrap();
    let r1 = hvdw_residuals(&eta, &p2, None).unwrap();
    assert_eq!(r0.r1.data, r1.r1.data);
    assert_eq!(r0.r2.data, r1.r2.data);
    assert!(diff(&r0.r3, &r1.r3, &s.fiber) < 1e-10);
}

#[test]
fn su2_dual_seed_satisfies_constraint() {
    let s = su2_setting(&[4, 4], 2.0);
    let (eta, p) = random_state(&s, 81, 1);
    let seed = random_lattice(&s, 2 * 9, 82, 0.5, 1);
    let (chi, lossy) = DualGaugeElement::su2_from_seed(&s, &seed).unwrap();
    assert!(!lossy);
    assert!(chi.chi.max_norm(&s.fiber) > 1e-3);
    let p2 = dual_gauge_shift(&p, &chi).unwrap();
    assert!((action(&eta, &p) - action(&eta, &p2)).abs() < 1e-12);
    let r0 = hvdw_residuals(&eta, &p, None).unwrap();
    let r1 = hvdw_residuals(&eta, &p2, None).unwrap();
    assert_eq!(r0.r1.data, r1.r1.data);
    assert_eq!(r0.r2.data, r1.r2.data);
    assert!(diff(&r0.r3, &r1.r3, &s.fiber) < 1e-10);
}

#[test]
fn dual_constraint_violations_are_rejected() {
    let s = su2_setting(&[4, 4], 1.0);
    let bad = random_lattice(&s, 2 * 9, 91, 0.5, 1);
    assert!(matches!(DualGaugeElement::new(&s, bad.clone()), Err(Error::Constraint(_))));
    let p = MomentumField::zero(&s);
    assert!(matches!(dual_gauge_shift(&p, &DualGaugeElement { chi: bad }), Err(Error::Constraint(_))));
    let u = u1_setting(&[4, 4], 2);
    assert!(matches!(DualGaugeElement::su2_from_seed(&u, &u.lattice(2)), Err(Error::Unsupported(_))));
}

#[test]
fn dual_fixing_projects_onto_gauge_directions() {
    let s = su2_setting(&[4, 4], 2.0);
    let fixer = GaugeFixer::new(&s).unwrap();
    let x = random_lattice(&s, 2 * 9, 101, 0.5, 2);
    let px = fixer.dual_residual(&x);
    assert!(dual_divergence(&s, &px).unwrap().max_norm(&s.fiber) < 1e-10);
    assert!(diff(&fixer.dual_residual(&px), &px, &s.fiber) < 1e-12);
    assert!(px.reality_defect(&s.fiber) < 1e-12);
    let seed = random_lattice(&s, 2 * 9, 102, 0.5, 1);
    let (chi, _) = DualGaugeElement::su2_from_seed(&s, &seed).unwrap();
    assert!(diff(&fixer.dual_residual(&chi.chi), &chi.chi, &s.fiber) < 1e-10);
    // the complement has no gauge part
    let mut rest = x.clone();
    rest.axpy(-1.0, &px);
    assert!(fixer.dual_residual(&rest).max_norm(&s.fiber) < 1e-10);
}

#[test]
fn lorenz_residual_of_pure_gradient_is_laplacian() {
    let s = u1_setting(&[8, 8], 1);
    let phi = random_base(&s, 111, 0.5);
    let phi1 = BaseField { ncomp: 1, data: (0..s.nsites()).map(|i| phi.at(i)[0]).collect() };
    let lat = phi1.to_lattice(&s.fiber);
    let mut a = BaseField::zeros(s.nsites(), 2);
    let mut lap = vec![0.0; s.nsites()];
    for d in 0..2 {
        let g = s.derivative(&lat, d);
        let gg = s.derivative(&g, d);
        for site in 0..s.nsites() {
            a.at_mut(site)[d] = g.at(site, 0)[s.fiber.constant_index()].re;
            lap[site] += gg.at(site, 0)[s.fiber.constant_index()].re;
        }
    }
    let eta = equivariant_embed(&s, &a).unwrap();
    let fixer = GaugeFixer::new(&s).unwrap();
    let q = fixer.lorenz_residual(&eta).unwrap();
    for site in 0..s.nsites() {
        assert!((q.at(site)[0] - lap[site]).abs() < 1e-12);
    }
}

#[test]
fn lorenz_residual_of_equivariant_connection_is_divergence() {
    let s = su2_setting(&[8, 8], 1.0);
    let a = random_base(&s, 121, 0.5);
    let eta = equivariant_embed(&s, &a).unwrap();
    let q = GaugeFixer::new(&s).unwrap().lorenz_residual(&eta).unwrap();
    let lat = a.to_lattice(&s.fiber);
    for i in 0..3 {
        for site in 0..s.nsites() {
            let mut want = 0.0;
            for d in 0..2 {
                want += s.derivative(&lat, d).at(site, d * 3 + i)[s.fiber.constant_index()].re;
            }
            assert!((q.at(site)[i] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn lorenz_adjoint_is_transpose() {
    let mut base = BaseManifoldSpec::torus(&[6, 5]);
    base.metric = vec![1.0, 2.0];
    base.gamma[(0 * 2 + 1) * 2 + 1] = 0.3;
    base.gamma[(1 * 2 + 1) * 2 + 0] = -0.3;
    let s = Setting::new(hvdw::lie::LieAlgebraSpec::su2(), FiberBasis::su2(2.0).unwrap(), base).unwrap();
    let fixer = GaugeFixer::new(&s).unwrap();
    let eta = ConnectionField { setting: s.clone(), eta: random_lattice(&s, 6, 131, 0.5, 2) };
    let q = random_base(&s, 132, 0.5);
    let q3 = BaseField { ncomp: 3, data: (0..s.nsites()).flat_map(|i| q.at(i)[..3].to_vec()).collect() };
    let lhs: f64 = fixer.lorenz_residual(&eta).unwrap().data.iter().zip(&q3.data).map(|(x, y)| x * y).sum();
    let rhs = eta.eta.dot(&fixer.lorenz_adjoint(&q3).unwrap(), &s.fiber);
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn gauge_fixing_report_is_zero_at_vacuum() {
    let s = su2_setting(&[4, 4], 1.0);
    let (_, _, rep) = gauge_fixing_residuals(&ConnectionField::zero(&s), &MomentumField::zero(&s)).unwrap();
    assert_eq!(rep.lorenz_l2, 0.0);
    assert_eq!(rep.dual_linf, 0.0);
}

#[test]
fn gauge_element_round_trips_through_snapshot() {
    let s = su2_setting(&[4, 4], 1.0);
    let mut rng = seeded(141);
    let f = GaugeElement::random(&s, &mut rng, 0.5, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.snap");
    f.snapshot(&s).save(&path).unwrap();
    let back = GaugeElement::from_snapshot(&s, &Snapshot::load(&path).unwrap()).unwrap();
    assert_eq!(back.u, f.u);
    assert_eq!(back.potential.data, f.potential.data);
}

#[test]
fn non_group_values_are_rejected() {
    let s = u1_setting(&[4, 4], 1);
    let mut f = GaugeElement::identity(&s);
    f.values[3] = GroupElement::U1(C64::new(1.5, 0.0));
    let e = ConnectionField::zero(&s);
    assert!(matches!(gauge_transform(&e, &MomentumField::zero(&s), &f, true), Err(Error::NotGroupElement(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn u1_action_is_gauge_invariant(seed in 0u64..1000, amp in 0.0f64..1.5) {
        let s = u1_setting(&[6, 6], 2);
        let (eta, p) = random_state(&s, seed, 2);
        let mut rng = seeded(seed + 7);
        let f = GaugeElement::random(&s, &mut rng, amp, 1).unwrap();
        let (e2, p2, _) = gauge_transform(&eta, &p, &f, true).unwrap();
        prop_assert!((action(&eta, &p) - action(&e2, &p2)).abs() < 1e-10);
        let r0 = hvdw_residuals(&eta, &p, None).unwrap().norms(&s);
        let r1 = hvdw_residuals(&e2, &p2, None).unwrap().norms(&s);
        prop_assert!((r0.total_l2 - r1.total_l2).abs() < 1e-10);
    }

    #[test]
    fn su2_global_gauge_preserves_residual_norms(seed in 0u64..1000) {
        let s = su2_setting(&[4, 4], 1.0);
        let eta = equivariant_embed(&s, &random_base(&s, seed, 0.5)).unwrap();
        let p = legendre_momentum(&curvature(&eta));
        let mut rng = seeded(seed + 1);
        let x: Vec<f64> = (0..3).map(|_| hvdw::rng::sym(&mut rng, 2.0)).collect();
        let phi = BaseField { ncomp: 3, data: (0..s.nsites()).flat_map(|_| x.clone()).collect() };
        let f = GaugeElement::from_potential(&s, &phi).unwrap();
        let (e2, p2, _) = gauge_transform(&eta, &p, &f, true).unwrap();
        prop_assert!((action(&eta, &p) - action(&e2, &p2)).abs() < 1e-10);
        let r0 = hvdw_residuals(&eta, &p, None).unwrap().norms(&s);
        let r1 = hvdw_residuals(&e2, &p2, None).unwrap().norms(&s);
        prop_assert!((r0.r1_l2 - r1.r1_l2).abs() < 1e-10);
        prop_assert!((r0.r2_l2 - r1.r2_l2).abs() < 1e-10);
        prop_assert!((r0.r3_l2 - r1.r3_l2).abs() < 1e-10);
    }
}
