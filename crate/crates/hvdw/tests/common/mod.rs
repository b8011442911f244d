#![allow(dead_code)]

use hvdw::fiber::{FiberBasis, C64};
use hvdw::field::{BaseField, BaseManifoldSpec, ConnectionField, Lattice, MomentumField, Setting};
use hvdw::lie::LieAlgebraSpec;
use hvdw::rng::{seeded, sym, SeedRng};
use std::sync::Arc;

pub fn u1_setting(sizes: &[usize], k: u32) -> Arc<Setting> {
    Setting::new(LieAlgebraSpec::u1(), FiberBasis::u1(k), BaseManifoldSpec::torus(sizes)).unwrap()
}

pub fn su2_setting(sizes: &[usize], jmax: f64) -> Arc<Setting> {
    Setting::new(LieAlgebraSpec::su2(), FiberBasis::su2(jmax).unwrap(), BaseManifoldSpec::torus(sizes)).unwrap()
}

/// Sum of a few low plane waves with random amplitude and phase.
pub fn wave(s: &Setting, rng: &mut SeedRng, amp: f64, kmax: i32) -> Vec<f64> {
    let n = s.n();
    let waves: Vec<(Vec<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let k = (0..n).map(|_| (sym(rng, kmax as f64 + 0.49)).round()).collect();
            (k, sym(rng, amp), sym(rng, 3.0))
        })
        .collect();
    (0..s.nsites())
        .map(|site| {
            let x = s.base.position(site);
            waves.iter().map(|(k, a, ph)| a * (k.iter().zip(&x).map(|(k, x)| k * x).sum::<f64>() + ph).cos()).sum()
        })
        .collect()
}

pub fn random_base(s: &Setting, seed: u64, amp: f64) -> BaseField {
    let mut rng = seeded(seed);
    let nc = s.n() * s.r();
    let mut a = BaseField::zeros(s.nsites(), nc);
    for c in 0..nc {
        let w = wave(s, &mut rng, amp, 1);
        for site in 0..s.nsites() {
            a.at_mut(site)[c] = w[site];
        }
    }
    a
}

/// Real band-limited lattice with fiber modes up to `deg`.
pub fn random_lattice(s: &Setting, ncomp: usize, seed: u64, amp: f64, deg: i32) -> Lattice {
    let mut rng = seeded(seed);
    let mut l = s.lattice(ncomp);
    let modes = s.fiber.modes().to_vec();
    for c in 0..ncomp {
        for (mu, m) in modes.iter().enumerate() {
            if m.degree() > deg {
                continue;
            }
            let re = wave(s, &mut rng, amp, 1);
            let im = wave(s, &mut rng, amp, 1);
            for site in 0..s.nsites() {
                l.at_mut(site, c)[mu] = C64::new(re[site], im[site]);
            }
        }
    }
    l.realify(&s.fiber);
    l
}

pub fn random_state(s: &Arc<Setting>, seed: u64, deg: i32) -> (ConnectionField, MomentumField) {
    let (n, r) = (s.n(), s.r());
    let eta = ConnectionField { setting: s.clone(), eta: random_lattice(s, n * r, seed, 0.4, deg) };
    let p = MomentumField {
        setting: s.clone(),
        pab: random_lattice(s, s.npairs() * r, seed + 1, 0.4, deg),
        paj: random_lattice(s, n * r * r, seed + 2, 0.4, deg),
    };
    (eta, p)
}
