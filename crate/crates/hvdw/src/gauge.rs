//! The gauge group `𝒢`, its pull-back action, the dual group `𝒢*` and the
//! gauge-fixing residuals.
//!
//! A gauge element is `γ(x, g) = g⁻¹ f(x) g` with `f = exp(φ^i t_i)` for a
//! band-limited potential `φ`. In the trivialization
//!
//! ```text
//! η̃_a = M(g) u_a + T(g) η_a,   p̃ = T(g) p,   T = M R_fᵀ Mᵀ
//! ```
//!
//! where `u_a = f⁻¹∂_a f`, `R_f = Ad_f` and `M(g) = Ad_{g⁻¹}`.

use crate::error::{check_len, Error, Result};
use crate::fiber::{FiberBasis, Group, GroupElement, Mode, C64};
use crate::field::{covariant_derivative, BaseField, ConnectionField, Lattice, MomentumField, Setting, Snapshot};
use crate::rng::SeedRng;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);
/// Largest fiber divergence accepted for a dual gauge element.
pub const DUAL_TOL: f64 = 1e-10;

/// `f(x)` on the lattice together with `u_a = f⁻¹∂_a f`.
#[derive(Clone, Debug)]
pub struct GaugeElement {
    pub group: Group,
    pub values: Vec<GroupElement>,
    /// `u^i_a` at `(site*n + a)*r + i`.
    pub u: Vec<f64>,
    /// The potential `φ` with `f = exp(φ)`.
    pub potential: BaseField,
}

/// `f⁻¹ d f` for `f = exp(x)` applied to `dx`, with `[x, y] = x × y` on su(2).
fn dexp_su2(x: &[f64], dx: &[f64]) -> [f64; 3] {
    let th2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let th = th2.sqrt();
    let (c1, c2) = if th < 1e-4 {
        (0.5 - th2 / 24.0, 1.0 / 6.0 - th2 / 120.0)
    } else {
        ((1.0 - th.cos()) / th2, (th - th.sin()) / (th2 * th))
    };
    let cross = |a: &[f64], b: &[f64]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let xd = cross(x, dx);
    let xxd = cross(x, &xd);
    [0, 1, 2].map(|i| dx[i] - c1 * xd[i] + c2 * xxd[i])
}

impl GaugeElement {
    /// `f = exp(φ^i t_i)`; derivatives of `φ` use the setting's scheme.
    pub fn from_potential(setting: &Arc<Setting>, phi: &BaseField) -> Result<Self> {
        let (n, r) = (setting.n(), setting.r());
        check_len(r, phi.ncomp)?;
        check_len(setting.nsites(), phi.nsites())?;
        let group = setting.fiber.group();
        let lifted = Lattice { nsites: setting.nsites(), ncomp: r, nmodes: 1, data: phi.data.iter().map(|&v| C64::new(v, 0.0)).collect() };
        let grads: Vec<Lattice> = (0..n).map(|a| setting.derivative(&lifted, a)).collect();
        let mut values = Vec::with_capacity(setting.nsites());
        let mut u = vec![0.0; setting.nsites() * n * r];
        for site in 0..setting.nsites() {
            let x = phi.at(site);
            values.push(GroupElement::exp(group, x)?);
            for a in 0..n {
                let dx: Vec<f64> = (0..r).map(|i| grads[a].data[site * r + i].re).collect();
                let v = match group {
                    Group::U1 => vec![dx[0]],
                    Group::SU2 => dexp_su2(x, &dx).to_vec(),
                };
                u[(site * n + a) * r..(site * n + a + 1) * r].copy_from_slice(&v);
            }
        }
        Ok(Self { group, values, u, potential: phi.clone() })
    }

    pub fn identity(setting: &Arc<Setting>) -> Self {
        Self::from_potential(setting, &BaseField::zeros(setting.nsites(), setting.r())).expect("zero potential")
    }

    /// Random potential built from plane waves with `|k_a| ≤ k_max`.
    pub fn random(setting: &Arc<Setting>, rng: &mut SeedRng, amp: f64, k_max: i32) -> Result<Self> {
        Self::from_potential(setting, &band_limited_field(setting, rng, setting.r(), amp, k_max, 3))
    }

    pub fn check(&self) -> Result<()> {
        self.values.iter().try_for_each(|g| g.check())
    }

    /// Stores the potential in the snapshot container.
    pub fn snapshot(&self, setting: &Setting) -> Snapshot {
        let lat = Lattice {
            nsites: self.potential.nsites(),
            ncomp: self.potential.ncomp,
            nmodes: 1,
            data: self.potential.data.iter().map(|&v| C64::new(v, 0.0)).collect(),
        };
        Snapshot::new(setting, vec![("gauge_potential", lat)], serde_json::json!({"kind": "gauge"}))
    }

    pub fn from_snapshot(setting: &Arc<Setting>, snap: &Snapshot) -> Result<Self> {
        let l = snap.field("gauge_potential").ok_or_else(|| Error::Config("snapshot lacks a gauge potential".into()))?;
        let phi = BaseField { ncomp: l.ncomp, data: l.data.iter().map(|z| z.re).collect() };
        Self::from_potential(setting, &phi)
    }
}

/// Real field whose components are sums of `waves` plane waves.
pub fn band_limited_field(
    setting: &Setting,
    rng: &mut SeedRng,
    ncomp: usize,
    amp: f64,
    k_max: i32,
    waves: usize,
) -> BaseField {
    use crate::rng::sym;
    let n = setting.n();
    let mut out = BaseField::zeros(setting.nsites(), ncomp);
    for c in 0..ncomp {
        let ws: Vec<(Vec<f64>, f64, f64)> = (0..waves)
            .map(|_| {
                let k = (0..n).map(|_| sym(rng, k_max as f64 + 0.499).round()).collect();
                (k, sym(rng, amp), sym(rng, std::f64::consts::PI))
            })
            .collect();
        for site in 0..setting.nsites() {
            let x = setting.base.position(site);
            let mut v = 0.0;
            for (k, a, ph) in &ws {
                let mut arg = *ph;
                for (d, kd) in k.iter().enumerate() {
                    let period = setting.base.spacings[d] * setting.base.sizes[d] as f64;
                    arg += kd * x[d] * 2.0 * std::f64::consts::PI / period;
                }
                v += a * arg.cos();
            }
            out.at_mut(site)[c] = v;
        }
    }
    out
}

fn require_adjoint(s: &Setting) -> Result<&Vec<Vec<C64>>> {
    s.fiber.adjoint_matrix().ok_or_else(|| Error::Config("gauge actions need j_max ≥ 1".into()))
}

/// Per-site operator `v ↦ T v` with `T^i_k = M^i_l R^m_l M^k_m`, evaluated
/// exactly in a basis two spin levels above the fields.
struct Transport<'a> {
    mid: &'a Mid,
    r: usize,
    b: Vec<Vec<C64>>,
}

struct Mid {
    basis: Arc<FiberBasis>,
    /// narrow mode `μ` sits at `map[μ]`
    map: Vec<usize>,
    m: Vec<Vec<C64>>,
}

impl Mid {
    fn new(s: &Setting) -> Result<Self> {
        let narrow = &s.fiber;
        let basis = match narrow.group() {
            Group::U1 => narrow.clone(),
            Group::SU2 => FiberBasis::su2((narrow.truncation() + 4) as f64 / 2.0)
                .map_err(|_| Error::Unsupported("gauge transforms need j_max ≤ 6".into()))?,
        };
        let map: Vec<usize> = narrow.modes().iter().map(|m| basis.index(*m).expect("mid basis contains narrow modes")).collect();
        let m = require_adjoint(s)?.iter().map(|x| embed(&basis, &map, x)).collect();
        Ok(Self { basis, map, m })
    }
}

fn embed(basis: &FiberBasis, map: &[usize], src: &[C64]) -> Vec<C64> {
    let mut out = basis.zeros();
    for (mu, &v) in src.iter().enumerate() {
        out[map[mu]] = v;
    }
    out
}

impl<'a> Transport<'a> {
    fn new(mid: &'a Mid, rmat: &[f64], r: usize) -> Self {
        let nm = mid.basis.len();
        let mut b = vec![vec![ZERO; nm]; r * r];
        for l in 0..r {
            for k in 0..r {
                for mm in 0..r {
                    let c = rmat[mm * r + l];
                    if c != 0.0 {
                        for (o, v) in b[l * r + k].iter_mut().zip(&mid.m[k * r + mm]) {
                            *o += v * c;
                        }
                    }
                }
            }
        }
        Self { mid, r, b }
    }

    /// Adds the projection of `T v` to `out`; true if the projection drops
    /// a visible part.
    fn apply_add(&self, v: &[C64], out: &mut [C64]) -> bool {
        let (r, basis) = (self.r, &self.mid.basis);
        let (nm, nn) = (basis.len(), self.mid.map.len());
        let vw: Vec<Vec<C64>> = (0..r).map(|k| embed(basis, &self.mid.map, &v[k * nn..(k + 1) * nn])).collect();
        let mut c = vec![ZERO; nm];
        let mut res = vec![ZERO; nm];
        let mut lossy = false;
        for i in 0..r {
            res.iter_mut().for_each(|x| *x = ZERO);
            for l in 0..r {
                c.iter_mut().for_each(|x| *x = ZERO);
                for k in 0..r {
                    basis.mul_add(&self.b[l * r + k], &vw[k], 1.0, &mut c);
                }
                basis.mul_add(&self.mid.m[i * r + l], &c, 1.0, &mut res);
            }
            let total = basis.inner(&res, &res);
            let dst = &mut out[i * nn..(i + 1) * nn];
            let mut kept = 0.0;
            for (mu, &w) in self.mid.map.iter().enumerate() {
                dst[mu] += res[w];
                kept += res[w].norm_sqr() * basis.weight(w);
            }
            if (total - kept).max(0.0).sqrt() > 1e-12 * total.sqrt().max(1.0) {
                lossy = true;
            }
        }
        lossy
    }
}

/// The primary action of `𝒢` on `(η, p)`. With `strict`, any truncation
/// loss is an error.
pub fn gauge_transform(
    eta: &ConnectionField,
    p: &MomentumField,
    f: &GaugeElement,
    strict: bool,
) -> Result<(ConnectionField, MomentumField, bool)> {
    let s = &eta.setting;
    let (n, r, nm) = (s.n(), s.r(), s.nm());
    check_len(s.nsites(), f.values.len())?;
    if f.group != s.fiber.group() {
        return Err(Error::NotGroupElement("gauge element of the wrong group".into()));
    }
    f.check()?;
    let m = require_adjoint(s)?;
    let mid = Mid::new(s)?;
    let npab = s.npairs() * r;
    let results: Vec<(Vec<C64>, Vec<C64>, Vec<C64>, bool)> = (0..s.nsites())
        .into_par_iter()
        .map(|site| {
            let t = Transport::new(&mid, &f.values[site].ad_matrix(), r);
            let mut lossy = false;
            let mut e = vec![ZERO; n * r * nm];
            for a in 0..n {
                let dst = &mut e[a * r * nm..(a + 1) * r * nm];
                lossy |= t.apply_add(eta.eta.block(site, a * r, r), dst);
                for i in 0..r {
                    for l in 0..r {
                        let ul = f.u[(site * n + a) * r + l];
                        if ul != 0.0 {
                            for (o, v) in dst[i * nm..(i + 1) * nm].iter_mut().zip(&m[i * r + l]) {
                                *o += v * ul;
                            }
                        }
                    }
                }
            }
            let mut pab = vec![ZERO; npab * nm];
            for k in 0..s.npairs() {
                lossy |= t.apply_add(p.pab.block(site, k * r, r), &mut pab[k * r * nm..(k + 1) * r * nm]);
            }
            let mut paj = vec![ZERO; n * r * r * nm];
            for k in 0..n * r {
                lossy |= t.apply_add(p.paj.block(site, k * r, r), &mut paj[k * r * nm..(k + 1) * r * nm]);
            }
            (e, pab, paj, lossy)
        })
        .collect();
    let mut out_eta = ConnectionField::zero(s);
    let mut out_p = MomentumField::zero(s);
    let mut lossy = false;
    for (site, (e, pab, paj, l)) in results.into_iter().enumerate() {
        out_eta.eta.block_mut(site, 0, n * r).copy_from_slice(&e);
        out_p.pab.block_mut(site, 0, s.npairs() * r).copy_from_slice(&pab);
        out_p.paj.block_mut(site, 0, n * r * r).copy_from_slice(&paj);
        lossy |= l;
    }
    if strict && lossy {
        return Err(Error::Truncation("gauge transform exceeds the fiber truncation".into()));
    }
    Ok((out_eta, out_p, lossy))
}

/// Pull-back by `z ↦ z·γ(z)`: `η̃_a(x, g) = η_a(x, f(x) g) + M(g) u_a`.
pub fn alternative_gauge_pullback(eta: &ConnectionField, f: &GaugeElement) -> Result<ConnectionField> {
    let s = &eta.setting;
    let (n, r, nm) = (s.n(), s.r(), s.nm());
    check_len(s.nsites(), f.values.len())?;
    f.check()?;
    let m = require_adjoint(s)?;
    let basis = &s.fiber;
    let mut out = ConnectionField::zero(s);
    for site in 0..s.nsites() {
        let d = basis.mode_values(&f.values[site])?;
        for c in 0..n * r {
            let src = eta.eta.at(site, c);
            let dst = out.eta.at_mut(site, c);
            for (mu, mode) in basis.modes().iter().enumerate() {
                if src[mu] == ZERO {
                    continue;
                }
                match *mode {
                    Mode::Fourier(_) => dst[mu] += src[mu] * d[mu],
                    Mode::Wigner(tj, tm, tmp) => {
                        // Σ_m c_{(j,m,m')} D^j_{mn}(f) lands on (j, n, m')
                        let mut tn = -tj;
                        while tn <= tj {
                            let dm = d[basis.index(Mode::Wigner(tj, tm, tn)).unwrap()];
                            dst[basis.index(Mode::Wigner(tj, tn, tmp)).unwrap()] += src[mu] * dm;
                            tn += 2;
                        }
                    }
                }
            }
        }
        for a in 0..n {
            for i in 0..r {
                let dst = out.eta.at_mut(site, a * r + i);
                for l in 0..r {
                    let ul = f.u[(site * n + a) * r + l];
                    for mu in 0..nm {
                        dst[mu] += m[i * r + l][mu] * ul;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `Dχ^a_i = Σ_j ρ_j χ^{aj}_i − (ad*_{t_j} χ^{aj})_i` per site, component `a*r + i`.
pub fn dual_divergence(setting: &Setting, chi: &Lattice) -> Result<Lattice> {
    let (n, r, nm) = (setting.n(), setting.r(), setting.nm());
    check_len(n * r * r, chi.ncomp)?;
    let mut out = setting.lattice(n * r);
    for site in 0..setting.nsites() {
        for a in 0..n {
            let dst = out.block_mut(site, a * r, r);
            for j in 0..r {
                let cj = chi.block(site, (a * r + j) * r, r);
                for i in 0..r {
                    setting.fiber.rho_add(j, &cj[i * nm..(i + 1) * nm], 1.0, &mut dst[i * nm..(i + 1) * nm]);
                }
                setting.ad_star_t_add(j, cj, -1.0, dst);
            }
        }
    }
    Ok(out)
}

/// A shift `p^{aj} ↦ p^{aj} + χ^{aj}` with `Dχ = 0`.
#[derive(Clone, Debug)]
pub struct DualGaugeElement {
    pub chi: Lattice,
}

impl DualGaugeElement {
    pub fn new(setting: &Setting, chi: Lattice) -> Result<Self> {
        let d = dual_divergence(setting, &chi)?;
        let defect = d.max_norm(&setting.fiber);
        if defect > DUAL_TOL {
            return Err(Error::Constraint(format!("dual gauge element has fiber divergence {defect:e}")));
        }
        Ok(Self { chi })
    }

    pub fn zero(setting: &Setting) -> Self {
        Self { chi: setting.lattice(setting.n() * setting.r() * setting.r()) }
    }

    /// Fiber-constant `χ^{a1}` for U(1), from values at component `a`.
    pub fn u1_constant(setting: &Setting, values: &BaseField) -> Result<Self> {
        if setting.fiber.group() != Group::U1 {
            return Err(Error::Unsupported("fiber-constant seeds are the U(1) recipe".into()));
        }
        check_len(setting.n(), values.ncomp)?;
        Self::new(setting, values.to_lattice(&setting.fiber))
    }

    /// SU(2) recipe from a 𝔤-valued fiber 1-form seed `φ^a_{kn}` stored at
    /// `(a*r + k)*r + n`: `ψ^{aj}_k = c(j,m,n) ρ_m φ^a_{kn} − φ^a_{kj}` and
    /// `χ^{aj}_i = ψ^{aj}_k M^i_k`.
    pub fn su2_from_seed(setting: &Setting, phi: &Lattice) -> Result<(Self, bool)> {
        if setting.fiber.group() != Group::SU2 {
            return Err(Error::Unsupported("the curl recipe needs an SU(2) fiber".into()));
        }
        let (n, r, nm) = (setting.n(), setting.r(), setting.nm());
        check_len(n * r * r, phi.ncomp)?;
        let m = require_adjoint(setting)?;
        let basis = &setting.fiber;
        let mut chi = setting.lattice(n * r * r);
        let mut lossy = false;
        for site in 0..setting.nsites() {
            for a in 0..n {
                for j in 0..r {
                    for k in 0..r {
                        let mut psi = vec![ZERO; nm];
                        for mm in 0..r {
                            for nn in 0..r {
                                let c = setting.spec.c(j, mm, nn);
                                if c != 0.0 {
                                    basis.rho_add(mm, phi.at(site, (a * r + k) * r + nn), c, &mut psi);
                                }
                            }
                        }
                        for (o, v) in psi.iter_mut().zip(phi.at(site, (a * r + k) * r + j)) {
                            *o -= v;
                        }
                        for i in 0..r {
                            lossy |= basis.mul_add(&psi, &m[i * r + k], 1.0, chi.at_mut(site, (a * r + j) * r + i));
                        }
                    }
                }
            }
        }
        Ok((Self::new(setting, chi)?, lossy))
    }
}

/// `p^{aj} ↦ p^{aj} + χ^{aj}` with `p^{ab}` untouched.
pub fn dual_gauge_shift(p: &MomentumField, chi: &DualGaugeElement) -> Result<MomentumField> {
    let s = &p.setting;
    check_len(p.paj.data.len(), chi.chi.data.len())?;
    let defect = dual_divergence(s, &chi.chi)?.max_norm(&s.fiber);
    if defect > DUAL_TOL {
        return Err(Error::Constraint(format!("dual gauge element has fiber divergence {defect:e}")));
    }
    let mut out = p.clone();
    out.paj.axpy(1.0, &chi.chi);
    Ok(out)
}

/// Orthogonal projectors onto `ker D` on each vertical block of modes.
pub struct GaugeFixer {
    setting: Arc<Setting>,
    /// Mode sets with row-major projectors over `(j, i, mode)`.
    blocks: Vec<(Vec<usize>, Vec<C64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeFixingReport {
    pub lorenz_l2: f64,
    pub lorenz_linf: f64,
    pub dual_l2: f64,
    pub dual_linf: f64,
}

impl GaugeFixer {
    pub fn new(setting: &Arc<Setting>) -> Result<Self> {
        if !setting.spec.is_unimodular() {
            return Err(Error::NonUnimodular(setting.spec.label().to_string()));
        }
        let basis = &setting.fiber;
        let r = setting.r();
        let nm = basis.len();
        // modes linked by some ρ_j form a block
        let mut parent: Vec<usize> = (0..nm).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for j in 0..r {
            let mut unit = basis.zeros();
            for src in 0..nm {
                unit[src] = C64::new(1.0, 0.0);
                let img = basis.rho(j, &unit);
                unit[src] = ZERO;
                for (dst, v) in img.iter().enumerate() {
                    if v.norm() > 0.0 {
                        let (a, b) = (find(&mut parent, src), find(&mut parent, dst));
                        parent[a] = b;
                    }
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for mu in 0..nm {
            let root = find(&mut parent, mu);
            groups.entry(root).or_default().push(mu);
        }
        let mut blocks = Vec::new();
        for (_, modes) in groups {
            let b = modes.len();
            // input (j, i, μ) ↦ output (i, μ)
            let mut d = DMatrix::<C64>::zeros(r * b, r * r * b);
            for j in 0..r {
                for (col, &src) in modes.iter().enumerate() {
                    let mut unit = basis.zeros();
                    unit[src] = C64::new(1.0, 0.0);
                    let img = basis.rho(j, &unit);
                    for i in 0..r {
                        for (row, &dst) in modes.iter().enumerate() {
                            d[(i * b + row, (j * r + i) * b + col)] += img[dst];
                        }
                        for ip in 0..r {
                            let c = setting.spec.c(i, j, ip);
                            if c != 0.0 {
                                d[(ip * b + col, (j * r + i) * b + col)] -= C64::new(c, 0.0);
                            }
                        }
                    }
                }
            }
            let pinv = d.clone().pseudo_inverse(1e-12).map_err(|e| Error::Config(e.to_string()))?;
            let proj = DMatrix::<C64>::identity(r * r * b, r * r * b) - pinv * d;
            let m = r * r * b;
            let flat = (0..m * m).map(|k| proj[(k / m, k % m)]).collect();
            blocks.push((modes, flat));
        }
        Ok(Self { setting: setting.clone(), blocks })
    }

    /// `Π_{ker D} p^{a·}` per site.
    pub fn dual_residual(&self, paj: &Lattice) -> Lattice {
        let s = &self.setting;
        let (r, nm) = (s.r(), s.nm());
        let mut out = paj.same_shape();
        // chunks are (site, a) blocks
        let w = r * r * nm;
        let mut buf = Vec::new();
        for (src, dst) in paj.data.chunks(w).zip(out.data.chunks_mut(w)) {
            for (modes, proj) in &self.blocks {
                let b = modes.len();
                let m = r * r * b;
                buf.clear();
                for ji in 0..r * r {
                    buf.extend(modes.iter().map(|&mu| src[ji * nm + mu]));
                }
                for row in 0..m {
                    let pr = &proj[row * m..(row + 1) * m];
                    let mut acc = ZERO;
                    for (p, v) in pr.iter().zip(&buf) {
                        acc += p * v;
                    }
                    dst[(row / b) * nm + modes[row % b]] = acc;
                }
            }
        }
        out
    }

    /// `q_i = ∫_G (M^k_i Σ_a 𝗀^{aa} (∇_a η)^k_a)` per site.
    pub fn lorenz_residual(&self, eta: &ConnectionField) -> Result<BaseField> {
        let q = self.lorenz_residual_complex(&eta.eta)?;
        Ok(BaseField { ncomp: q.ncomp, data: q.data.iter().map(|z| z.re).collect() })
    }

    /// The complex-linear extension of [`lorenz_residual`](Self::lorenz_residual),
    /// as a lattice with one mode.
    pub fn lorenz_residual_complex(&self, eta: &Lattice) -> Result<Lattice> {
        let s = &self.setting;
        let (n, r) = (s.n(), s.r());
        let m = require_adjoint(s)?;
        let eta = ConnectionField { setting: s.clone(), eta: eta.clone() };
        let mut div = s.lattice(r);
        for a in 0..n {
            let d = covariant_derivative(&eta, a);
            let ga = 1.0 / s.base.metric[a];
            for site in 0..s.nsites() {
                for k in 0..r {
                    let src = d.at(site, a * r + k).to_vec();
                    for (o, v) in div.at_mut(site, k).iter_mut().zip(src) {
                        *o += v * ga;
                    }
                }
            }
        }
        let mut q = Lattice::zeros(s.nsites(), r, 1);
        for site in 0..s.nsites() {
            for i in 0..r {
                q.at_mut(site, i)[0] = (0..r).map(|k| s.fiber.haar_pair(&m[k * r + i], div.at(site, k))).sum();
            }
        }
        Ok(q)
    }

    /// Adjoint of [`lorenz_residual`](Self::lorenz_residual) for the
    /// lattice inner products `Σ q·q'` and `Σ ⟨η, η'⟩_{L²(G)}`.
    pub fn lorenz_adjoint(&self, q: &BaseField) -> Result<Lattice> {
        let s = &self.setting;
        let (n, r, nm) = (s.n(), s.r(), s.nm());
        let m = require_adjoint(s)?;
        // w^k = M^k_i q_i as a fiber function
        let mut w = s.lattice(r);
        for site in 0..s.nsites() {
            for k in 0..r {
                let dst = w.at_mut(site, k);
                for i in 0..r {
                    let qi = q.at(site)[i];
                    for mu in 0..nm {
                        dst[mu] += m[k * r + i][mu] * qi;
                    }
                }
            }
        }
        let mut out = s.lattice(n * r);
        for a in 0..n {
            let ga = 1.0 / s.base.metric[a];
            let d = s.derivative(&w, a);
            for site in 0..s.nsites() {
                for k in 0..r {
                    let src = d.at(site, k).to_vec();
                    for (o, v) in out.at_mut(site, a * r + k).iter_mut().zip(src) {
                        *o -= v * ga;
                    }
                }
                for c in 0..n {
                    let g = s.base.gamma(c, a, a) * ga;
                    if g != 0.0 {
                        for k in 0..r {
                            let src = w.at(site, k).to_vec();
                            for (o, v) in out.at_mut(site, c * r + k).iter_mut().zip(src) {
                                *o -= v * g;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn report(&self, eta: &ConnectionField, p: &MomentumField) -> Result<GaugeFixingReport> {
        let s = &self.setting;
        let q = self.lorenz_residual(eta)?;
        let d = self.dual_residual(&p.paj);
        let vol = s.base.cell_volume();
        Ok(GaugeFixingReport {
            lorenz_l2: q.l2() * vol.sqrt(),
            lorenz_linf: q.max_abs(),
            dual_l2: (d.norm2(&s.fiber) * vol).sqrt(),
            dual_linf: d.max_norm(&s.fiber),
        })
    }
}

/// The Lorenz-type and `𝒢*`-fixing residuals of a state.
pub fn gauge_fixing_residuals(eta: &ConnectionField, p: &MomentumField) -> Result<(BaseField, Lattice, GaugeFixingReport)> {
    let g = GaugeFixer::new(&eta.setting)?;
    Ok((g.lorenz_residual(eta)?, g.dual_residual(&p.paj), g.report(eta, p)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dexp_matches_finite_difference() {
        let x = [0.3, -0.7, 1.1];
        let dx = [0.2, 0.5, -0.4];
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a - h * b).collect();
        let f = GroupElement::exp(Group::SU2, &x).unwrap();
        let (GroupElement::SU2(p), GroupElement::SU2(m), GroupElement::SU2(fi)) = (
            GroupElement::exp(Group::SU2, &xp).unwrap(),
            GroupElement::exp(Group::SU2, &xm).unwrap(),
            f.inv(),
        ) else {
            unreachable!()
        };
        let mut d = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                d[i][j] = (p[i][j] - m[i][j]) / (2.0 * h);
            }
        }
        let comp = crate::fiber::su2_components(&crate::fiber::mat_mul(&fi, &d));
        let an = dexp_su2(&x, &dx);
        for i in 0..3 {
            assert!((comp[i] - an[i]).abs() < 1e-8);
        }
        let small = dexp_su2(&[1e-6, 0.0, 0.0], &dx);
        assert!((small[0] - dx[0]).abs() < 1e-9);
    }
}
