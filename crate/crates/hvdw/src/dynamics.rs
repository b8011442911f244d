//! Densities, residuals and the Poincaré–Cartan form.
//!
//! Index sums over `ab` run over ordered pairs in the formulas below unless
//! they are written `a<b`. With `F_{ab} = (∇_aη)_b − (∇_bη)_a + [η_a,η_b]`
//! and `E_{a,j} = ρ_jη_a + [t_j,η_a]` the Lagrangian density is
//!
//! ```text
//! L = ½ Σ_{a<b} 𝗀_aa 𝗀_bb h^{ij} p^{ab}_i p^{ab}_j − Σ_{a<b} p^{ab}·F_{ab} + Σ_{a,j} p^{aj}·E_{a,j}
//! ```
//!
//! and the residuals are
//!
//! ```text
//! R1_{ab} = F_{ab} − h^{ij} 𝗀_aa 𝗀_bb p^{ab}_j
//! R2_{a,j} = E_{a,j}
//! R3^c = ∂_b p^{cb} − Γ^c_{ab} p^{ab} − ad*_{η_b} p^{cb} + ρ_j p^{cj} − ad*_{t_j} p^{cj} − tr(ad_{t_j}) p^{cj}
//! ```
//!
//! Sign dictionary between the action `S = vol · Σ_sites ∫_G L` and the
//! residuals, with `⟨·,·⟩` the Haar pairing summed over sites:
//!
//! | variation  | `δS / vol`        |
//! |------------|-------------------|
//! | `δp^{ab}`, `a<b` | `−⟨R1_{ab}, δp^{ab}⟩` |
//! | `δp^{aj}`  | `+⟨R2_{a,j}, δp^{aj}⟩` |
//! | `δη_a`     | `−⟨R3^a, δη_a⟩`   |
//!
//! Writing `D` for this diagonal of signs, the residual map is `R = D ∇S`,
//! so its Jacobian satisfies `Jᵀ = D J D`.

use crate::error::{check_len, Error, Result};
use crate::fiber::{FiberBasis, GroupElement, C64};
use crate::field::{
    covariant_derivative, curvature, equivariance_defect, BaseField, BaseManifoldSpec, ConnectionField,
    CurvatureField, Lattice, MomentumField, Setting,
};
use crate::lie::LieAlgebraSpec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);

/// A scalar density on `P` in a given fiber basis.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub basis: Arc<FiberBasis>,
    pub data: Lattice,
}

impl ScalarField {
    pub fn at(&self, site: usize) -> &[C64] {
        self.data.at(site, 0)
    }

    pub fn evaluate(&self, site: usize, g: &GroupElement) -> Result<f64> {
        Ok(self.basis.evaluate(self.at(site), g)?.re)
    }

    /// Largest coefficient-wise difference, comparing in the larger basis.
    pub fn max_diff(&self, other: &ScalarField) -> f64 {
        let (big, small) = if self.basis.len() >= other.basis.len() { (self, other) } else { (other, self) };
        let mut m: f64 = 0.0;
        for site in 0..big.data.nsites {
            let mut v = big.at(site).to_vec();
            for (mu, mode) in small.basis.modes().iter().enumerate() {
                v[big.basis.index(*mode).expect("nested bases")] -= small.at(site)[mu];
            }
            m = v.iter().fold(m, |m, z| m.max(z.norm()));
        }
        m
    }
}

/// `p^{ab}_i = h_{ij} 𝗀^{aa} 𝗀^{bb} F^j_{ab}`, with `p^{aj} = 0`.
pub fn legendre_momentum(f: &CurvatureField) -> MomentumField {
    let s = &f.setting;
    let (r, nm) = (s.r(), s.nm());
    let mut p = MomentumField::zero(s);
    for (pi, (a, b)) in s.pairs().into_iter().enumerate() {
        let gg = 1.0 / (s.base.metric[a] * s.base.metric[b]);
        for site in 0..s.nsites() {
            for i in 0..r {
                for j in 0..r {
                    let h = s.spec.h(i, j) * gg;
                    if h == 0.0 {
                        continue;
                    }
                    for mu in 0..nm {
                        let v = f.f.at(site, pi * r + j)[mu];
                        p.pab.at_mut(site, pi * r + i)[mu] += v * h;
                    }
                }
            }
        }
    }
    p
}

fn widen_lattice(s: &Setting, l: &Lattice) -> Lattice {
    let w = s.wide_basis();
    let mut out = Lattice::zeros(l.nsites, l.ncomp, w.len());
    for site in 0..l.nsites {
        for c in 0..l.ncomp {
            out.at_mut(site, c).copy_from_slice(&s.widen(l.at(site, c)));
        }
    }
    out
}

fn as_wide(s: &Setting, f: &ScalarField) -> Result<Lattice> {
    let w = s.wide_basis();
    if Arc::ptr_eq(&f.basis, &w) {
        Ok(f.data.clone())
    } else if Arc::ptr_eq(&f.basis, &s.fiber) {
        Ok(widen_lattice(s, &f.data))
    } else {
        Err(Error::Config("scalar field basis does not belong to this setting".into()))
    }
}

/// `¼ h^{ij} p^{ab}_i p_{abj}` in the wide basis.
fn quarter_p_squared(p: &MomentumField) -> Lattice {
    let s = &p.setting;
    let r = s.r();
    let w = s.wide_basis();
    let pw = widen_lattice(s, &p.pab);
    let mut out = Lattice::zeros(s.nsites(), 1, w.len());
    for (pi, (a, b)) in s.pairs().into_iter().enumerate() {
        let gg = s.base.metric[a] * s.base.metric[b];
        for site in 0..s.nsites() {
            for i in 0..r {
                for j in 0..r {
                    let hij = s.spec.h_inv(i, j) * gg * 0.5;
                    if hij == 0.0 {
                        continue;
                    }
                    let (x, y) = (pw.at(site, pi * r + i).to_vec(), pw.at(site, pi * r + j).to_vec());
                    w.mul_add(&x, &y, hij, out.at_mut(site, 0));
                }
            }
        }
    }
    out
}

/// `ε = ¼ h^{ij} 𝗀_{ac} 𝗀_{bd} p^{ab}_i p^{cd}_j`, the level set `H = 0`.
pub fn epsilon_from_level_set(p: &MomentumField) -> ScalarField {
    ScalarField { basis: p.setting.wide_basis(), data: quarter_p_squared(p) }
}

/// `H = ε − ¼ h^{ij} 𝗀_{ac} 𝗀_{bd} p^{ab}_i p^{cd}_j` in the wide basis.
pub fn hamiltonian_density(eps: &ScalarField, p: &MomentumField) -> Result<ScalarField> {
    let s = &p.setting;
    let mut h = as_wide(s, eps)?;
    h.axpy(-1.0, &quarter_p_squared(p));
    Ok(ScalarField { basis: s.wide_basis(), data: h })
}

/// The Lagrangian density as a function on `P`, exact in the wide basis.
pub fn lagrangian_density(eta: &ConnectionField, p: &MomentumField) -> ScalarField {
    let s = &eta.setting;
    let (n, r) = (s.n(), s.r());
    let w = s.wide_basis();
    let nw = w.len();
    let nabla: Vec<Lattice> = (0..n).map(|a| widen_lattice(s, &covariant_derivative(eta, a))).collect();
    let etaw = widen_lattice(s, &eta.eta);
    let pab = widen_lattice(s, &p.pab);
    let paj = widen_lattice(s, &p.paj);
    let e = widen_lattice(s, &equivariance_defect(eta));
    let mut out = quarter_p_squared(p);
    let mut f = vec![ZERO; r * nw];
    for site in 0..s.nsites() {
        let acc = out.at_mut(site, 0);
        for (pi, (a, b)) in s.pairs().into_iter().enumerate() {
            for k in 0..r * nw {
                f[k] = nabla[a].block(site, b * r, r)[k] - nabla[b].block(site, a * r, r)[k];
            }
            s.bracket_add_in(&w, etaw.block(site, a * r, r), etaw.block(site, b * r, r), 1.0, &mut f);
            for i in 0..r {
                w.mul_add(pab.at(site, pi * r + i), &f[i * nw..(i + 1) * nw], -1.0, acc);
            }
        }
        for c in 0..n * r * r {
            w.mul_add(paj.at(site, c), e.at(site, c), 1.0, acc);
        }
    }
    ScalarField { basis: w, data: out }
}

/// Values of the Lagrangian density at `(x, g)` for every site.
pub fn lagrangian_density_at(eta: &ConnectionField, p: &MomentumField, g: &GroupElement) -> Result<Vec<f64>> {
    let s = &eta.setting;
    let (n, r) = (s.n(), s.r());
    let modes = s.fiber.mode_values(g)?;
    let ev = |c: &[C64]| -> f64 { c.iter().zip(&modes).map(|(x, y)| x * y).sum::<C64>().re };
    let nabla: Vec<Lattice> = (0..n).map(|a| covariant_derivative(eta, a)).collect();
    let e = equivariance_defect(eta);
    let mut out = vec![0.0; s.nsites()];
    for (site, o) in out.iter_mut().enumerate() {
        let etav: Vec<f64> = (0..n * r).map(|c| ev(eta.eta.at(site, c))).collect();
        let mut l = 0.0;
        for (pi, (a, b)) in s.pairs().into_iter().enumerate() {
            let gg = s.base.metric[a] * s.base.metric[b];
            let pv: Vec<f64> = (0..r).map(|i| ev(p.pab.at(site, pi * r + i))).collect();
            let br = s.spec.bracket(&etav[a * r..(a + 1) * r], &etav[b * r..(b + 1) * r])?;
            for i in 0..r {
                for j in 0..r {
                    l += 0.5 * gg * s.spec.h_inv(i, j) * pv[i] * pv[j];
                }
                let fi = ev(nabla[a].at(site, b * r + i)) - ev(nabla[b].at(site, a * r + i)) + br[i];
                l -= pv[i] * fi;
            }
        }
        for c in 0..n * r * r {
            l += ev(p.paj.at(site, c)) * ev(e.at(site, c));
        }
        *o = l;
    }
    Ok(out)
}

/// `Σ_sites Σ_comp ∫_G x·y`, real part.
pub fn haar_pairing(basis: &FiberBasis, x: &Lattice, y: &Lattice) -> f64 {
    let nm = x.nmodes;
    x.data.chunks(nm).zip(y.data.chunks(nm)).map(|(a, b)| basis.haar_pair(a, b).re).sum()
}

/// `S = vol · Σ_sites ∫_G L`, with the Haar integrals taken exactly.
pub fn action(eta: &ConnectionField, p: &MomentumField) -> f64 {
    let s = &eta.setting;
    let r = s.r();
    let fb = &s.fiber;
    let f = curvature(eta);
    let mut acc = 0.0;
    for (pi, (a, b)) in s.pairs().into_iter().enumerate() {
        let gg = s.base.metric[a] * s.base.metric[b];
        for site in 0..s.nsites() {
            for i in 0..r {
                let pi_i = p.pab.at(site, pi * r + i);
                for j in 0..r {
                    let h = s.spec.h_inv(i, j);
                    if h != 0.0 {
                        acc += 0.5 * gg * h * fb.haar_pair(pi_i, p.pab.at(site, pi * r + j)).re;
                    }
                }
                acc -= fb.haar_pair(pi_i, f.f.at(site, pi * r + i)).re;
            }
        }
    }
    acc += haar_pairing(fb, &p.paj, &equivariance_defect(eta));
    acc * s.base.cell_volume()
}

/// The three residual families and the level-set defect.
#[derive(Clone, Debug)]
pub struct ResidualBundle {
    /// `R1^i_{ab}` at `pair(a,b)*r + i`.
    pub r1: Lattice,
    /// `R2^i_{a,j}` at `(a*r + j)*r + i`.
    pub r2: Lattice,
    /// `R3^a_i` at `a*r + i`.
    pub r3: Lattice,
    /// Per-site `L²(G)` norm of `H(ε, p)`; zero when `ε` lies on the level set.
    pub levelset_defect: Vec<f64>,
    pub lossy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub r1_l2: f64,
    pub r2_l2: f64,
    pub r3_l2: f64,
    pub r1_linf: f64,
    pub r2_linf: f64,
    pub r3_linf: f64,
    pub levelset_linf: f64,
    pub total_l2: f64,
}

impl ResidualBundle {
    /// `L²` norms include the cell volume; `L∞` norms are the largest
    /// `L²(G)` norm of a single component.
    pub fn norms(&self, setting: &Setting) -> ResidualNorms {
        let b = &setting.fiber;
        let vol = setting.base.cell_volume();
        let (a, bb, c) = (self.r1.norm2(b) * vol, self.r2.norm2(b) * vol, self.r3.norm2(b) * vol);
        ResidualNorms {
            r1_l2: a.sqrt(),
            r2_l2: bb.sqrt(),
            r3_l2: c.sqrt(),
            r1_linf: self.r1.max_norm(b),
            r2_linf: self.r2.max_norm(b),
            r3_linf: self.r3.max_norm(b),
            levelset_linf: self.levelset_defect.iter().cloned().fold(0.0, f64::max),
            total_l2: (a + bb + c).sqrt(),
        }
    }
}

struct Parts {
    r1: Lattice,
    r2: Lattice,
    r3: Lattice,
    lossy: bool,
}

fn linear_part(s: &Setting, eta: &Lattice, pab: &Lattice, paj: &Lattice) -> Parts {
    let (n, r, nm) = (s.n(), s.r(), s.nm());
    let mut r1 = s.lattice(s.npairs() * r);
    let mut r3 = s.lattice(n * r);
    // covariant derivatives of η
    let mut nabla = Vec::with_capacity(n);
    for a in 0..n {
        let mut d = s.derivative(eta, a);
        for b in 0..n {
            for c in 0..n {
                let g = s.base.gamma(c, a, b);
                if g != 0.0 {
                    for site in 0..s.nsites() {
                        for i in 0..r {
                            for mu in 0..nm {
                                let v = eta.at(site, c * r + i)[mu];
                                d.at_mut(site, b * r + i)[mu] -= v * g;
                            }
                        }
                    }
                }
            }
        }
        nabla.push(d);
    }
    let trace = s.spec.unimodularity_defect();
    for (pi, (a, b)) in s.pairs().into_iter().enumerate() {
        let gg = s.base.metric[a] * s.base.metric[b];
        for site in 0..s.nsites() {
            for i in 0..r {
                let dst = r1.at_mut(site, pi * r + i);
                for mu in 0..nm {
                    dst[mu] = nabla[a].at(site, b * r + i)[mu] - nabla[b].at(site, a * r + i)[mu];
                }
                for j in 0..r {
                    let h = s.spec.h_inv(i, j) * gg;
                    if h != 0.0 {
                        for mu in 0..nm {
                            dst[mu] -= pab.at(site, pi * r + j)[mu] * h;
                        }
                    }
                }
            }
        }
        // ∂_b p^{ab} into R3^a and ∂_a p^{ba} = −∂_a p^{ab} into R3^b
        let mut comp = Lattice::zeros(s.nsites(), r, nm);
        for site in 0..s.nsites() {
            comp.block_mut(site, 0, r).copy_from_slice(pab.block(site, pi * r, r));
        }
        let db = s.derivative(&comp, b);
        let da = s.derivative(&comp, a);
        for site in 0..s.nsites() {
            for k in 0..r * nm {
                r3.block_mut(site, a * r, r)[k] += db.block(site, 0, r)[k];
                r3.block_mut(site, b * r, r)[k] -= da.block(site, 0, r)[k];
            }
        }
        // −Γ^c_{ab} p^{ab} − Γ^c_{ba} p^{ba}
        for c in 0..n {
            let g = s.base.gamma(c, a, b) - s.base.gamma(c, b, a);
            if g != 0.0 {
                for site in 0..s.nsites() {
                    for k in 0..r * nm {
                        let v = pab.block(site, pi * r, r)[k];
                        r3.block_mut(site, c * r, r)[k] -= v * g;
                    }
                }
            }
        }
    }
    let mut r2 = s.lattice(n * r * r);
    for site in 0..s.nsites() {
        for a in 0..n {
            let ea = eta.block(site, a * r, r);
            for j in 0..r {
                let dst = r2.block_mut(site, (a * r + j) * r, r);
                for i in 0..r {
                    s.fiber.rho_add(j, &ea[i * nm..(i + 1) * nm], 1.0, &mut dst[i * nm..(i + 1) * nm]);
                }
                s.bracket_t_add(j, ea, 1.0, dst);
            }
            let dst = r3.block_mut(site, a * r, r);
            for j in 0..r {
                let pj = paj.block(site, (a * r + j) * r, r);
                for i in 0..r {
                    s.fiber.rho_add(j, &pj[i * nm..(i + 1) * nm], 1.0, &mut dst[i * nm..(i + 1) * nm]);
                }
                s.ad_star_t_add(j, pj, -1.0, dst);
                if trace[j] != 0.0 {
                    for (d, v) in dst.iter_mut().zip(pj) {
                        *d -= v * trace[j];
                    }
                }
            }
        }
    }
    Parts { r1, r2, r3, lossy: false }
}

/// Adds `Q(x, y)`: `[η^x_a, η^y_b]` to `R1_{ab}` and `−ad*_{η^x_b} p^{y,ab}` to `R3^a`.
fn quadratic_add(s: &Setting, ex: &Lattice, ey: &Lattice, pab_y: &Lattice, out: &mut Parts) {
    let r = s.r();
    let n = s.n();
    let mut lossy = false;
    for (pi, (a, b)) in s.pairs().into_iter().enumerate() {
        for site in 0..s.nsites() {
            lossy |= s.bracket_add(
                ex.block(site, a * r, r),
                ey.block(site, b * r, r),
                1.0,
                out.r1.block_mut(site, pi * r, r),
            );
        }
    }
    for site in 0..s.nsites() {
        for a in 0..n {
            for b in 0..n {
                let Some((pi, sg)) = s.pair(a, b) else { continue };
                lossy |= s.ad_star_add(
                    ex.block(site, b * r, r),
                    pab_y.block(site, pi * r, r),
                    -sg,
                    out.r3.block_mut(site, a * r, r),
                );
            }
        }
    }
    out.lossy |= lossy;
}

fn levelset(eps: Option<&ScalarField>, p: &MomentumField) -> Result<Vec<f64>> {
    let s = &p.setting;
    match eps {
        None => Ok(vec![0.0; s.nsites()]),
        Some(e) => {
            let h = hamiltonian_density(e, p)?;
            Ok((0..s.nsites()).map(|site| h.basis.inner(h.at(site), h.at(site)).sqrt()).collect())
        }
    }
}

/// The HVDW residual system; `eps = None` places `ε` on the level set.
pub fn hvdw_residuals(eta: &ConnectionField, p: &MomentumField, eps: Option<&ScalarField>) -> Result<ResidualBundle> {
    let s = &eta.setting;
    let mut parts = linear_part(s, &eta.eta, &p.pab, &p.paj);
    quadratic_add(s, &eta.eta, &eta.eta, &p.pab, &mut parts);
    Ok(ResidualBundle {
        r1: parts.r1,
        r2: parts.r2,
        r3: parts.r3,
        levelset_defect: levelset(eps, p)?,
        lossy: parts.lossy,
    })
}

/// Unknowns of the HVDW system: `η`, `p^{ab}`, `p^{aj}` as lattices.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVec {
    pub eta: Lattice,
    pub pab: Lattice,
    pub paj: Lattice,
}

impl StateVec {
    pub fn from_fields(eta: &ConnectionField, p: &MomentumField) -> Self {
        Self { eta: eta.eta.clone(), pab: p.pab.clone(), paj: p.paj.clone() }
    }

    pub fn zeros(s: &Setting) -> Self {
        let (n, r) = (s.n(), s.r());
        Self { eta: s.lattice(n * r), pab: s.lattice(s.npairs() * r), paj: s.lattice(n * r * r) }
    }

    pub fn into_fields(self, s: &Arc<Setting>) -> (ConnectionField, MomentumField) {
        (
            ConnectionField { setting: s.clone(), eta: self.eta },
            MomentumField { setting: s.clone(), pab: self.pab, paj: self.paj },
        )
    }

    pub fn axpy(&mut self, a: f64, o: &StateVec) {
        self.eta.axpy(a, &o.eta);
        self.pab.axpy(a, &o.pab);
        self.paj.axpy(a, &o.paj);
    }

    pub fn scale(&mut self, a: f64) {
        self.eta.scale(a);
        self.pab.scale(a);
        self.paj.scale(a);
    }

    pub fn dot(&self, o: &StateVec, b: &FiberBasis) -> f64 {
        self.eta.dot(&o.eta, b) + self.pab.dot(&o.pab, b) + self.paj.dot(&o.paj, b)
    }

    pub fn realify(&mut self, b: &FiberBasis) {
        self.eta.realify(b);
        self.pab.realify(b);
        self.paj.realify(b);
    }
}

/// Residuals stacked in the order matching [`StateVec`]: `(R3, R1, R2)`.
pub fn residual_vec(s: &Setting, x: &StateVec) -> StateVec {
    let mut parts = linear_part(s, &x.eta, &x.pab, &x.paj);
    quadratic_add(s, &x.eta, &x.eta, &x.pab, &mut parts);
    StateVec { eta: parts.r3, pab: parts.r1, paj: parts.r2 }
}

/// `J(x) v` for the stacked residual map.
pub fn jacobian_apply(s: &Setting, x: &StateVec, v: &StateVec) -> StateVec {
    let mut parts = linear_part(s, &v.eta, &v.pab, &v.paj);
    quadratic_add(s, &x.eta, &v.eta, &v.pab, &mut parts);
    quadratic_add(s, &v.eta, &x.eta, &x.pab, &mut parts);
    StateVec { eta: parts.r3, pab: parts.r1, paj: parts.r2 }
}

/// `J(x)ᵀ w` through `Jᵀ = D J D`.
pub fn jacobian_transpose_apply(s: &Setting, x: &StateVec, w: &StateVec) -> StateVec {
    let mut dw = w.clone();
    dw.eta.scale(-1.0);
    dw.pab.scale(-1.0);
    let mut out = jacobian_apply(s, x, &dw);
    out.eta.scale(-1.0);
    out.pab.scale(-1.0);
    out
}

/// `Φ^{ab}_{;b} + [A_b, Φ^{ab}]` for a base field `A` (components `a*r + i`).
pub fn yang_mills_residual(setting: &Arc<Setting>, a_field: &BaseField) -> Result<BaseField> {
    let (n, r) = (setting.n(), setting.r());
    check_len(n * r, a_field.ncomp)?;
    let fb = &setting.fiber;
    let eta = ConnectionField { setting: setting.clone(), eta: a_field.to_lattice(fb) };
    let f = curvature(&eta);
    // raise indices, then reuse the momentum divergence with h = id
    let mut phi = MomentumField::zero(setting);
    for (pi, (a, b)) in setting.pairs().into_iter().enumerate() {
        let gg = 1.0 / (setting.base.metric[a] * setting.base.metric[b]);
        for site in 0..setting.nsites() {
            for k in 0..r {
                let v = f.f.at(site, pi * r + k).to_vec();
                for (d, x) in phi.pab.at_mut(site, pi * r + k).iter_mut().zip(v) {
                    *d = x * gg;
                }
            }
        }
    }
    let mut parts = linear_part(setting, &eta.eta, &phi.pab, &phi.paj);
    // [A_b, Φ^{ab}] with all fiber-constant factors
    for site in 0..setting.nsites() {
        for a in 0..n {
            for b in 0..n {
                let Some((pi, sg)) = setting.pair(a, b) else { continue };
                setting.bracket_add(
                    eta.eta.block(site, b * r, r),
                    phi.pab.block(site, pi * r, r),
                    sg,
                    parts.r3.block_mut(site, a * r, r),
                );
            }
        }
    }
    Ok(BaseField::from_lattice(&parts.r3, fb))
}

/// `A^j_a = ∫_G M^i_j η^i_a`, exact when `η` is equivariant.
pub fn extract_base_field(eta: &ConnectionField) -> Result<BaseField> {
    let s = &eta.setting;
    let (n, r) = (s.n(), s.r());
    let m = s.fiber.adjoint_matrix().ok_or_else(|| Error::Config("adjoint functions unavailable".into()))?;
    let mut a = BaseField::zeros(s.nsites(), n * r);
    for site in 0..s.nsites() {
        for aa in 0..n {
            for j in 0..r {
                a.at_mut(site)[aa * r + j] =
                    (0..r).map(|i| s.fiber.haar_pair(&m[i * r + j], eta.eta.at(site, aa * r + i)).re).sum();
            }
        }
    }
    Ok(a)
}

/// Pointwise values of `(η, p, e)` on the phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub n: usize,
    pub r: usize,
    /// `η^i_a` at `a*r + i`.
    pub eta: Vec<f64>,
    /// `p^{ab}_i` for `a < b` at `pair*r + i`.
    pub pab: Vec<f64>,
    /// `p^{aj}_i` at `(a*r + j)*r + i`.
    pub paj: Vec<f64>,
    pub e: f64,
}

/// Pointwise jet coordinates `λ^i_{a;b}` and `λ^i_{a;j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetPoint {
    pub lab: Vec<f64>,
    pub laj: Vec<f64>,
}

fn pair_index(n: usize, a: usize, b: usize) -> Option<(usize, f64)> {
    match a.cmp(&b) {
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Less => Some((a * n - a * (a + 1) / 2 + (b - a - 1), 1.0)),
        std::cmp::Ordering::Greater => Some((b * n - b * (b + 1) / 2 + (a - b - 1), -1.0)),
    }
}

impl PhasePoint {
    pub fn zero(n: usize, r: usize) -> Self {
        Self { n, r, eta: vec![0.0; n * r], pab: vec![0.0; n * (n - 1) / 2 * r], paj: vec![0.0; n * r * r], e: 0.0 }
    }

    /// `p^{ab}_i` for any ordered pair.
    pub fn p_ab(&self, a: usize, b: usize, i: usize) -> f64 {
        pair_index(self.n, a, b).map_or(0.0, |(k, s)| s * self.pab[k * self.r + i])
    }

    pub fn eta_a(&self, a: usize) -> &[f64] {
        &self.eta[a * self.r..(a + 1) * self.r]
    }

    fn check(&self, spec: &LieAlgebraSpec, base: &BaseManifoldSpec) -> Result<()> {
        check_len(base.n(), self.n)?;
        check_len(spec.dim(), self.r)?;
        check_len(self.n * self.r, self.eta.len())?;
        check_len(self.n * (self.n - 1) / 2 * self.r, self.pab.len())?;
        check_len(self.n * self.r * self.r, self.paj.len())
    }

    /// `ε = e − ½ p^{ab}_i η^i_c(Γ^c_{ab} − Γ^c_{ba}) + ½ p^{ab}_i [η_a,η_b]^i + p^{aj}_i [η_a,t_j]^i`.
    pub fn epsilon(&self, spec: &LieAlgebraSpec, base: &BaseManifoldSpec) -> Result<f64> {
        self.check(spec, base)?;
        let (n, r) = (self.n, self.r);
        let mut eps = self.e;
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let br = spec.bracket(self.eta_a(a), self.eta_a(b))?;
                for i in 0..r {
                    let p = self.p_ab(a, b, i);
                    eps += 0.5 * p * br[i];
                    for c in 0..n {
                        eps -= 0.5 * p * self.eta[c * r + i] * (base.gamma(c, a, b) - base.gamma(c, b, a));
                    }
                }
            }
        }
        for a in 0..n {
            for j in 0..r {
                let mut tj = vec![0.0; r];
                tj[j] = 1.0;
                let br = spec.bracket(self.eta_a(a), &tj)?;
                for i in 0..r {
                    eps += self.paj[(a * r + j) * r + i] * br[i];
                }
            }
        }
        Ok(eps)
    }
}

/// `H = ε − ¼ h^{ij} 𝗀_{ac} 𝗀_{bd} p^{ab}_i p^{cd}_j` at a point.
pub fn hamiltonian_at(spec: &LieAlgebraSpec, base: &BaseManifoldSpec, eps: f64, pt: &PhasePoint) -> f64 {
    let (n, r) = (pt.n, pt.r);
    let mut q = 0.0;
    for a in 0..n {
        for b in 0..n {
            for i in 0..r {
                for j in 0..r {
                    q += spec.h_inv(i, j) * base.metric[a] * base.metric[b] * pt.p_ab(a, b, i) * pt.p_ab(a, b, j);
                }
            }
        }
    }
    eps - 0.25 * q
}

/// Curvature from jet coordinates: `F^i_{ab} = λ^i_{b;a} − λ^i_{a;b} + [η_a,η_b]^i`.
fn jet_curvature(spec: &LieAlgebraSpec, pt: &PhasePoint, jet: &JetPoint, a: usize, b: usize) -> Result<Vec<f64>> {
    let (n, r) = (pt.n, pt.r);
    let mut f = spec.bracket(pt.eta_a(a), pt.eta_a(b))?;
    for i in 0..r {
        f[i] += jet.lab[(b * n + a) * r + i] - jet.lab[(a * n + b) * r + i];
    }
    Ok(f)
}

/// `L(z, η, λ) = −¼ 𝗀^{ac} 𝗀^{bd} h_{ij} F^i_{ab} F^j_{cd}`.
pub fn yang_mills_lagrangian_at(
    spec: &LieAlgebraSpec,
    base: &BaseManifoldSpec,
    pt: &PhasePoint,
    jet: &JetPoint,
) -> Result<f64> {
    let (n, r) = (pt.n, pt.r);
    let mut l = 0.0;
    for a in 0..n {
        for b in 0..n {
            let f = jet_curvature(spec, pt, jet, a, b)?;
            let gg = 1.0 / (base.metric[a] * base.metric[b]);
            for i in 0..r {
                for j in 0..r {
                    l -= 0.25 * gg * spec.h(i, j) * f[i] * f[j];
                }
            }
        }
    }
    Ok(l)
}

/// Pointwise Legendre momentum `p^{ab}_i = h_{ij} 𝗀^{aa} 𝗀^{bb} F^j_{ab}` from a jet.
pub fn legendre_momentum_at(
    spec: &LieAlgebraSpec,
    base: &BaseManifoldSpec,
    pt: &PhasePoint,
    jet: &JetPoint,
) -> Result<Vec<f64>> {
    let (n, r) = (pt.n, pt.r);
    let mut p = vec![0.0; n * (n - 1) / 2 * r];
    for a in 0..n {
        for b in a + 1..n {
            let (k, _) = pair_index(n, a, b).unwrap();
            let f = jet_curvature(spec, pt, jet, a, b)?;
            for i in 0..r {
                p[k * r + i] = (0..r).map(|j| spec.h(i, j) * f[j]).sum::<f64>() / (base.metric[a] * base.metric[b]);
            }
        }
    }
    Ok(p)
}

/// `W = e + p^{ab}_i(λ^i_{a;b} + η^i_c Γ^c_{ba}) + p^{aj}_i λ^i_{a;j} − L` and
/// the stationarity residual `p^{ab}_i − ∂L/∂λ^i_{a;b}` for `a < b`.
///
/// With `constrained` the jet must satisfy `λ_{a;j} = [η_a, t_j]`, which
/// turns the third term into `p^{aj}_i [η_a, t_j]^i`.
pub fn legendre_w(
    spec: &LieAlgebraSpec,
    base: &BaseManifoldSpec,
    pt: &PhasePoint,
    jet: &JetPoint,
    constrained: bool,
) -> Result<(f64, Vec<f64>)> {
    pt.check(spec, base)?;
    let (n, r) = (pt.n, pt.r);
    check_len(n * n * r, jet.lab.len())?;
    check_len(n * r * r, jet.laj.len())?;
    if constrained {
        for a in 0..n {
            for j in 0..r {
                let mut tj = vec![0.0; r];
                tj[j] = 1.0;
                let br = spec.bracket(pt.eta_a(a), &tj)?;
                for i in 0..r {
                    if (jet.laj[(a * r + j) * r + i] - br[i]).abs() > 1e-12 {
                        return Err(Error::Constraint(format!(
                            "λ_{{{};{}}} violates the equivariance constraint",
                            a + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
    }
    let mut w = pt.e;
    for a in 0..n {
        for b in 0..n {
            for i in 0..r {
                let mut t = jet.lab[(a * n + b) * r + i];
                for c in 0..n {
                    t += pt.eta[c * r + i] * base.gamma(c, b, a);
                }
                w += pt.p_ab(a, b, i) * t;
            }
        }
    }
    w += pt.paj.iter().zip(&jet.laj).map(|(p, l)| p * l).sum::<f64>();
    w -= yang_mills_lagrangian_at(spec, base, pt, jet)?;
    let lp = legendre_momentum_at(spec, base, pt, jet)?;
    let stat = pt.pab.iter().zip(&lp).map(|(p, l)| p - l).collect();
    Ok((w, stat))
}

/// A tangent vector given by the values of the coframe `(β^a, γ^i, dη^i_a)`
/// together with the momentum and energy velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub dx: Vec<f64>,
    pub dg: Vec<f64>,
    pub deta: Vec<f64>,
    pub dp: Vec<f64>,
    pub de: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSample {
    pub value_a: f64,
    pub value_b: f64,
    pub epsilon: f64,
}

impl ThetaSample {
    pub fn defect(&self) -> f64 {
        (self.value_a - self.value_b).abs()
    }
}

/// Exterior forms with float coefficients over numbered 1-forms.
#[derive(Clone, Debug, Default)]
struct FForm(BTreeMap<Vec<u16>, f64>);

impl FForm {
    fn gen(k: u16) -> Self {
        Self(BTreeMap::from([(vec![k], 1.0)]))
    }

    fn wedge_all(ks: impl IntoIterator<Item = u16>) -> Self {
        let mut f = Self(BTreeMap::from([(vec![], 1.0)]));
        for k in ks {
            f = f.wedge(&Self::gen(k));
        }
        f
    }

    fn add_scaled(&mut self, o: &FForm, s: f64) {
        if s == 0.0 {
            return;
        }
        for (k, v) in &o.0 {
            *self.0.entry(k.clone()).or_insert(0.0) += v * s;
        }
    }

    fn wedge(&self, o: &FForm) -> FForm {
        let mut out = FForm::default();
        for (k1, v1) in &self.0 {
            for (k2, v2) in &o.0 {
                if k1.iter().any(|x| k2.contains(x)) {
                    continue;
                }
                let mut m: Vec<u16> = k1.iter().chain(k2).cloned().collect();
                // sort with sign
                let mut sign = 1.0;
                for i in 1..m.len() {
                    let mut j = i;
                    while j > 0 && m[j - 1] > m[j] {
                        m.swap(j - 1, j);
                        sign = -sign;
                        j -= 1;
                    }
                }
                *out.0.entry(m).or_insert(0.0) += sign * v1 * v2;
            }
        }
        out
    }

    /// Contraction with the vector dual to generator `k`.
    fn interior(&self, k: u16) -> FForm {
        let mut out = FForm::default();
        for (m, v) in &self.0 {
            if let Some(pos) = m.iter().position(|&x| x == k) {
                let mut rest = m.clone();
                rest.remove(pos);
                let s = if pos % 2 == 0 { 1.0 } else { -1.0 };
                *out.0.entry(rest).or_insert(0.0) += s * v;
            }
        }
        out
    }

    fn evaluate(&self, vectors: &[Vec<f64>]) -> f64 {
        let k = vectors.len();
        let mut acc = 0.0;
        for (m, v) in &self.0 {
            if m.len() != k || *v == 0.0 {
                continue;
            }
            let mat = DMatrix::from_fn(k, k, |i, j| vectors[j][m[i] as usize]);
            acc += v * mat.determinant();
        }
        acc
    }
}

/// Evaluates `θ` on `n + r` tangent vectors in both forms:
/// `e β∧γ + p^{ab}_i dη^i_a∧β_b∧γ + (−1)ⁿ p^{aj}_i dη^i_a∧β∧γ_j` and
/// `ε β∧γ + p_i ∧ (dη + η∧η)^i`.
pub fn theta_eval(
    spec: &LieAlgebraSpec,
    base: &BaseManifoldSpec,
    pt: &PhasePoint,
    tangents: &[TangentVector],
) -> Result<ThetaSample> {
    pt.check(spec, base)?;
    let (n, r) = (pt.n, pt.r);
    check_len(n + r, tangents.len())?;
    let nb = n as u16;
    let ng = r as u16;
    let beta_id = |a: usize| a as u16;
    let gamma_id = |i: usize| nb + i as u16;
    let deta_id = |a: usize, i: usize| nb + ng + (a * r + i) as u16;
    let mut values = Vec::with_capacity(n + r);
    for t in tangents {
        check_len(n, t.dx.len())?;
        check_len(r, t.dg.len())?;
        check_len(n * r, t.deta.len())?;
        values.push(t.dx.iter().chain(&t.dg).chain(&t.deta).cloned().collect::<Vec<f64>>());
    }
    let beta = FForm::wedge_all((0..n).map(beta_id));
    let gamma = FForm::wedge_all((0..r).map(gamma_id));
    let vol = beta.wedge(&gamma);
    let sgn_n = if n % 2 == 0 { 1.0 } else { -1.0 };
    let beta_b: Vec<FForm> = (0..n).map(|b| beta.interior(beta_id(b))).collect();
    let gamma_j: Vec<FForm> = (0..r).map(|j| gamma.interior(gamma_id(j))).collect();

    let mut form_a = FForm::default();
    form_a.add_scaled(&vol, pt.e);
    for a in 0..n {
        for i in 0..r {
            let de = FForm::gen(deta_id(a, i));
            for b in 0..n {
                let p = pt.p_ab(a, b, i);
                if p != 0.0 {
                    form_a.add_scaled(&de.wedge(&beta_b[b]).wedge(&gamma), p);
                }
            }
            for j in 0..r {
                let p = pt.paj[(a * r + j) * r + i];
                if p != 0.0 {
                    form_a.add_scaled(&de.wedge(&beta).wedge(&gamma_j[j]), sgn_n * p);
                }
            }
        }
    }

    let eps = pt.epsilon(spec, base)?;
    let mut form_b = FForm::default();
    form_b.add_scaled(&vol, eps);
    let beta1: Vec<FForm> = (0..n).map(|a| FForm::gen(beta_id(a))).collect();
    let gamma1: Vec<FForm> = (0..r).map(|i| FForm::gen(gamma_id(i))).collect();
    for i in 0..r {
        // p_i = −½ p^{ab}_i β_{ab}∧γ + (−1)ⁿ p^{aj}_i β_a∧γ_j
        let mut pform = FForm::default();
        for a in 0..n {
            for b in 0..n {
                let p = pt.p_ab(a, b, i);
                if p != 0.0 {
                    pform.add_scaled(&beta_b[a].interior(beta_id(b)).wedge(&gamma), -0.5 * p);
                }
            }
            for j in 0..r {
                let p = pt.paj[(a * r + j) * r + i];
                if p != 0.0 {
                    pform.add_scaled(&beta_b[a].wedge(&gamma_j[j]), sgn_n * p);
                }
            }
        }
        // Ω^i = dη^i_a∧β^a + (½[η_a,η_b]^i − η^i_c Γ^c_{ab}) β^a∧β^b + [η_a,t_j]^i β^a∧γ^j
        let mut omega = FForm::default();
        for a in 0..n {
            omega.add_scaled(&FForm::gen(deta_id(a, i)).wedge(&beta1[a]), 1.0);
            for b in 0..n {
                let br = spec.bracket(pt.eta_a(a), pt.eta_a(b))?;
                let mut cf = 0.5 * br[i];
                for c in 0..n {
                    cf -= pt.eta[c * r + i] * base.gamma(c, a, b);
                }
                omega.add_scaled(&beta1[a].wedge(&beta1[b]), cf);
            }
            for j in 0..r {
                let mut tj = vec![0.0; r];
                tj[j] = 1.0;
                let br = spec.bracket(pt.eta_a(a), &tj)?;
                omega.add_scaled(&beta1[a].wedge(&gamma1[j]), br[i]);
            }
        }
        form_b.add_scaled(&pform.wedge(&omega), 1.0);
    }
    Ok(ThetaSample { value_a: form_a.evaluate(&values), value_b: form_b.evaluate(&values), epsilon: eps })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstVariationReport {
    pub h: f64,
    /// Central difference of the action at step `h`.
    pub finite_difference: f64,
    /// Central difference at step `h/2`.
    pub finite_difference_half: f64,
    /// Residual pairing predicted by the sign dictionary.
    pub predicted: f64,
    pub rel_error: f64,
    pub rel_error_half: f64,
    /// `rel_error / rel_error_half`, ≈ 4 for second-order decay.
    pub ratio: f64,
}

impl FirstVariationReport {
    /// Errors below `floor` count as converged to rounding.
    pub fn second_order(&self, floor: f64) -> bool {
        (self.rel_error <= floor && self.rel_error_half <= floor) || (self.ratio > 3.0 && self.ratio < 5.0)
    }
}

/// Compares `dS/dh` by central differences against the residual pairing.
pub fn first_variation_check(
    eta: &ConnectionField,
    p: &MomentumField,
    dir: &StateVec,
    h: f64,
) -> Result<FirstVariationReport> {
    if !(h > 0.0) {
        return Err(Error::Config("step must be positive".into()));
    }
    let s = &eta.setting;
    let x = StateVec::from_fields(eta, p);
    let act = |t: f64| {
        let mut y = x.clone();
        y.axpy(t, dir);
        let (e, q) = y.into_fields(s);
        action(&e, &q)
    };
    let fd = (act(h) - act(-h)) / (2.0 * h);
    let fd2 = (act(h / 2.0) - act(-h / 2.0)) / h;
    let res = hvdw_residuals(eta, p, None)?;
    let fb = &s.fiber;
    let predicted = s.base.cell_volume()
        * (-haar_pairing(fb, &res.r1, &dir.pab) + haar_pairing(fb, &res.r2, &dir.paj)
            - haar_pairing(fb, &res.r3, &dir.eta));
    let scale = predicted.abs().max(fd.abs()).max(1e-300);
    let rel = (fd - predicted).abs() / scale;
    let rel2 = (fd2 - predicted).abs() / scale;
    Ok(FirstVariationReport {
        h,
        finite_difference: fd,
        finite_difference_half: fd2,
        predicted,
        rel_error: rel,
        rel_error_half: rel2,
        ratio: if rel2 > 0.0 { rel / rel2 } else { f64::INFINITY },
    })
}
