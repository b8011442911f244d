//! Lattice fields on `P = Tⁿ × G` and the operators acting on them.
//!
//! Every field is a [`Lattice`] of fiber functions laid out as
//! `[site][component][mode]`, sites row-major with the last axis fastest.
//! Component layouts:
//!
//! | field        | component index      |
//! |--------------|----------------------|
//! | `η^i_a`      | `a*r + i`            |
//! | `p^{ab}_i`   | `pair(a,b)*r + i`    |
//! | `p^{aj}_i`   | `(a*r + j)*r + i`    |
//! | `λ^i_{a;b}`  | `(a*n + b)*r + i`    |
//! | `λ^i_{a;j}`  | `(a*r + j)*r + i`    |
//!
//! Pairs `a < b` are numbered lexicographically. The vertical block of `η`
//! is the identity by construction and is not stored.

use crate::error::{check_len, Error, Result};
use crate::fiber::{FiberBasis, Group, C64};
use crate::lie::LieAlgebraSpec;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Spectral,
    Central2,
    Central4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseManifoldSpec {
    pub sizes: Vec<usize>,
    pub spacings: Vec<f64>,
    /// Diagonal of the frame metric.
    pub metric: Vec<f64>,
    /// `Γ^c_{ab}` at `(c*n + a)*n + b`.
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub scheme: Scheme,
}

impl BaseManifoldSpec {
    /// Flat Euclidean torus of period `2π` in every direction.
    pub fn torus(sizes: &[usize]) -> Self {
        let n = sizes.len();
        Self {
            sizes: sizes.to_vec(),
            spacings: sizes.iter().map(|&s| 2.0 * PI / s as f64).collect(),
            metric: vec![1.0; n],
            gamma: vec![0.0; n * n * n],
            scheme: Scheme::Spectral,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn n(&self) -> usize {
        self.sizes.len()
    }

    pub fn nsites(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn gamma(&self, c: usize, a: usize, b: usize) -> f64 {
        let n = self.n();
        self.gamma[(c * n + a) * n + b]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacings.iter().product()
    }

    pub fn is_euclidean(&self) -> bool {
        self.metric.iter().all(|&g| g > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("lattice sizes must be positive".into()));
        }
        check_len(n, self.spacings.len())?;
        check_len(n, self.metric.len())?;
        check_len(n * n * n, self.gamma.len())?;
        if self.spacings.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Config("spacings must be positive".into()));
        }
        if self.metric.iter().any(|&g| g == 0.0 || !g.is_finite()) {
            return Err(Error::Config("frame metric is degenerate".into()));
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if (self.gamma(a, c, b) + self.gamma(b, c, a)).abs() > 1e-12 {
                        return Err(Error::Config(format!(
                            "frame connection not antisymmetric at Γ^{}_{{{}{}}}",
                            a + 1,
                            c + 1,
                            b + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Row-major site index of lattice coordinates.
    pub fn site(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.sizes).fold(0, |acc, (&x, &n)| acc * n + x % n)
    }

    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut c = vec![0; self.n()];
        for a in (0..self.n()).rev() {
            c[a] = site % self.sizes[a];
            site /= self.sizes[a];
        }
        c
    }

    /// Positions `x_a = coord · Δx_a` of a site.
    pub fn position(&self, site: usize) -> Vec<f64> {
        self.coords(site).iter().zip(&self.spacings).map(|(&c, &h)| c as f64 * h).collect()
    }

    fn stride(&self, a: usize) -> usize {
        self.sizes[a + 1..].iter().product()
    }
}

/// Lie algebra, fiber basis and base manifold shared by a family of fields.
pub struct Setting {
    pub spec: LieAlgebraSpec,
    pub fiber: Arc<FiberBasis>,
    pub base: BaseManifoldSpec,
    brackets: Vec<(usize, usize, Vec<(usize, f64)>)>,
    plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    wide: OnceLock<Arc<FiberBasis>>,
}

impl std::fmt::Debug for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Setting")
            .field("algebra", &self.spec.label())
            .field("fiber", &self.fiber)
            .field("sizes", &self.base.sizes)
            .finish()
    }
}

impl Setting {
    pub fn new(spec: LieAlgebraSpec, fiber: Arc<FiberBasis>, base: BaseManifoldSpec) -> Result<Arc<Self>> {
        base.validate()?;
        fiber.supports(&spec)?;
        let r = spec.dim();
        let mut brackets = Vec::new();
        for i in 0..r {
            for j in 0..r {
                let ks: Vec<(usize, f64)> =
                    (0..r).filter(|&k| spec.c(k, i, j) != 0.0).map(|k| (k, spec.c(k, i, j))).collect();
                if !ks.is_empty() {
                    brackets.push((i, j, ks));
                }
            }
        }
        let mut planner = FftPlanner::new();
        let plans =
            base.sizes.iter().map(|&s| (planner.plan_fft_forward(s), planner.plan_fft_inverse(s))).collect();
        Ok(Arc::new(Self { spec, fiber, base, brackets, plans, wide: OnceLock::new() }))
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn r(&self) -> usize {
        self.spec.dim()
    }

    pub fn nm(&self) -> usize {
        self.fiber.len()
    }

    pub fn nsites(&self) -> usize {
        self.base.nsites()
    }

    pub fn npairs(&self) -> usize {
        let n = self.n();
        n * (n - 1) / 2
    }

    /// Index of the pair `{a, b}` and the sign of `(a, b)` relative to it.
    pub fn pair(&self, a: usize, b: usize) -> Option<(usize, f64)> {
        let n = self.n();
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some((a * n - a * (a + 1) / 2 + (b - a - 1), 1.0)),
            std::cmp::Ordering::Greater => Some((b * n - b * (b + 1) / 2 + (a - b - 1), -1.0)),
        }
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
    }

    /// A basis with three times the truncation, large enough to hold cubic
    /// densities exactly.
    pub fn wide_basis(&self) -> Arc<FiberBasis> {
        self.wide
            .get_or_init(|| match self.fiber.group() {
                Group::U1 => FiberBasis::u1(3 * self.fiber.truncation() as u32),
                Group::SU2 => FiberBasis::su2(1.5 * self.fiber.truncation() as f64)
                    .expect("SU2 densities need 3 j_max within the supported range"),
            })
            .clone()
    }

    /// Copies narrow coefficients into the wide basis.
    pub fn widen(&self, src: &[C64]) -> Vec<C64> {
        let w = self.wide_basis();
        let mut out = w.zeros();
        for (mu, m) in self.fiber.modes().iter().enumerate() {
            out[w.index(*m).expect("wide basis contains narrow modes")] = src[mu];
        }
        out
    }

    pub fn lattice(&self, ncomp: usize) -> Lattice {
        Lattice::zeros(self.nsites(), ncomp, self.nm())
    }

    /// `out_k += s · [x, y]^k` for `x, y, out` holding `r` consecutive
    /// fiber functions in `basis`. Returns the lossy flag.
    pub fn bracket_add_in(&self, basis: &FiberBasis, x: &[C64], y: &[C64], s: f64, out: &mut [C64]) -> bool {
        let nm = basis.len();
        let mut tmp = vec![ZERO; nm];
        let mut lossy = false;
        for (i, j, ks) in &self.brackets {
            tmp.iter_mut().for_each(|v| *v = ZERO);
            lossy |= basis.mul_add(&x[i * nm..(i + 1) * nm], &y[j * nm..(j + 1) * nm], s, &mut tmp);
            for &(k, c) in ks {
                for (o, t) in out[k * nm..(k + 1) * nm].iter_mut().zip(&tmp) {
                    *o += t * c;
                }
            }
        }
        lossy
    }

    pub fn bracket_add(&self, x: &[C64], y: &[C64], s: f64, out: &mut [C64]) -> bool {
        self.bracket_add_in(&self.fiber, x, y, s, out)
    }

    /// `out_i += s · (ad*_x ℓ)_i = s · ℓ_k c^k_{ji} x^j`.
    pub fn ad_star_add(&self, x: &[C64], l: &[C64], s: f64, out: &mut [C64]) -> bool {
        let nm = self.nm();
        let mut tmp = vec![ZERO; nm];
        let mut lossy = false;
        for (j, i, ks) in &self.brackets {
            for &(k, c) in ks {
                tmp.iter_mut().for_each(|v| *v = ZERO);
                lossy |= self.fiber.mul_add(&x[j * nm..(j + 1) * nm], &l[k * nm..(k + 1) * nm], s * c, &mut tmp);
                for (o, t) in out[i * nm..(i + 1) * nm].iter_mut().zip(&tmp) {
                    *o += t;
                }
            }
        }
        lossy
    }

    /// `out_k += s · [t_j, x]^k = s · c^k_{jl} x^l`.
    pub fn bracket_t_add(&self, j: usize, x: &[C64], s: f64, out: &mut [C64]) {
        let nm = self.nm();
        for (jj, l, ks) in &self.brackets {
            if *jj != j {
                continue;
            }
            for &(k, c) in ks {
                for mu in 0..nm {
                    out[k * nm + mu] += x[l * nm + mu] * (s * c);
                }
            }
        }
    }

    /// `out_i += s · (ad*_{t_j} ℓ)_i = s · ℓ_k c^k_{ji}`.
    pub fn ad_star_t_add(&self, j: usize, l: &[C64], s: f64, out: &mut [C64]) {
        let nm = self.nm();
        for (jj, i, ks) in &self.brackets {
            if *jj != j {
                continue;
            }
            for &(k, c) in ks {
                for mu in 0..nm {
                    out[i * nm + mu] += l[k * nm + mu] * (s * c);
                }
            }
        }
    }

    /// Plain derivative `∂_a` of every component.
    pub fn derivative(&self, f: &Lattice, a: usize) -> Lattice {
        let mut out = Lattice::zeros(f.nsites, f.ncomp, f.nmodes);
        self.derivative_add(f, a, 1.0, &mut out);
        out
    }

    /// `out += s · ∂_a f`.
    pub fn derivative_add(&self, f: &Lattice, a: usize, s: f64, out: &mut Lattice) {
        let n_a = self.base.sizes[a];
        let stride = self.base.stride(a);
        let h = self.base.spacings[a];
        let w = f.ncomp * f.nmodes;
        let lines: Vec<usize> = (0..f.nsites).filter(|&st| (st / stride) % n_a == 0).collect();
        match self.base.scheme {
            Scheme::Spectral => {
                let (fwd, inv) = &self.plans[a];
                let mut buf = vec![ZERO; w * n_a];
                let kappa: Vec<f64> = (0..n_a)
                    .map(|k| {
                        let k = k as i64;
                        let n = n_a as i64;
                        if 2 * k == n {
                            0.0
                        } else {
                            let kk = if 2 * k > n { k - n } else { k };
                            2.0 * PI * kk as f64 / (n as f64 * h)
                        }
                    })
                    .collect();
                for &st in &lines {
                    for x in 0..n_a {
                        let site = st + x * stride;
                        for c in 0..w {
                            buf[c * n_a + x] = f.data[site * w + c];
                        }
                    }
                    fwd.process(&mut buf);
                    for c in 0..w {
                        for k in 0..n_a {
                            buf[c * n_a + k] *= C64::new(0.0, kappa[k] / n_a as f64);
                        }
                    }
                    inv.process(&mut buf);
                    for x in 0..n_a {
                        let site = st + x * stride;
                        for c in 0..w {
                            out.data[site * w + c] += buf[c * n_a + x] * s;
                        }
                    }
                }
            }
            Scheme::Central2 | Scheme::Central4 => {
                let stencil: &[(isize, f64)] = if self.base.scheme == Scheme::Central2 {
                    &[(1, 0.5), (-1, -0.5)]
                } else {
                    &[(1, 8.0 / 12.0), (-1, -8.0 / 12.0), (2, -1.0 / 12.0), (-2, 1.0 / 12.0)]
                };
                for &st in &lines {
                    for x in 0..n_a {
                        let site = st + x * stride;
                        for &(off, cf) in stencil {
                            let xn = (x as isize + off).rem_euclid(n_a as isize) as usize;
                            let src = st + xn * stride;
                            let k = cf * s / h;
                            for c in 0..w {
                                out.data[site * w + c] += f.data[src * w + c] * k;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Complex fiber coefficients for `ncomp` functions at every site.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub nsites: usize,
    pub ncomp: usize,
    pub nmodes: usize,
    pub data: Vec<C64>,
}

impl Lattice {
    pub fn zeros(nsites: usize, ncomp: usize, nmodes: usize) -> Self {
        Self { nsites, ncomp, nmodes, data: vec![ZERO; nsites * ncomp * nmodes] }
    }

    pub fn same_shape(&self) -> Self {
        Self::zeros(self.nsites, self.ncomp, self.nmodes)
    }

    fn offset(&self, site: usize, comp: usize) -> usize {
        (site * self.ncomp + comp) * self.nmodes
    }

    pub fn at(&self, site: usize, comp: usize) -> &[C64] {
        let o = self.offset(site, comp);
        &self.data[o..o + self.nmodes]
    }

    pub fn at_mut(&mut self, site: usize, comp: usize) -> &mut [C64] {
        let o = self.offset(site, comp);
        &mut self.data[o..o + self.nmodes]
    }

    /// `count` consecutive components starting at `comp`.
    pub fn block(&self, site: usize, comp: usize, count: usize) -> &[C64] {
        let o = self.offset(site, comp);
        &self.data[o..o + count * self.nmodes]
    }

    pub fn block_mut(&mut self, site: usize, comp: usize, count: usize) -> &mut [C64] {
        let o = self.offset(site, comp);
        &mut self.data[o..o + count * self.nmodes]
    }

    pub fn axpy(&mut self, s: f64, other: &Lattice) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y * s;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `Σ_sites Σ_comp ⟨x, y⟩_{L²(G)}`.
    pub fn dot(&self, other: &Lattice, basis: &FiberBasis) -> f64 {
        let nm = self.nmodes;
        self.data.chunks(nm).zip(other.data.chunks(nm)).map(|(a, b)| basis.inner(a, b)).sum()
    }

    pub fn norm2(&self, basis: &FiberBasis) -> f64 {
        self.dot(self, basis)
    }

    /// Largest `L²(G)` norm of a single component function.
    pub fn max_norm(&self, basis: &FiberBasis) -> f64 {
        self.data.chunks(self.nmodes).map(|a| basis.inner(a, a).sqrt()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn realify(&mut self, basis: &FiberBasis) {
        for c in self.data.chunks_mut(self.nmodes) {
            basis.realify(c);
        }
    }

    pub fn reality_defect(&self, basis: &FiberBasis) -> f64 {
        self.data.chunks(self.nmodes).map(|c| basis.reality_defect(c)).fold(0.0, f64::max)
    }
}

/// Real base-manifold field with `ncomp` components per site.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseField {
    pub ncomp: usize,
    pub data: Vec<f64>,
}

impl BaseField {
    pub fn zeros(nsites: usize, ncomp: usize) -> Self {
        Self { ncomp, data: vec![0.0; nsites * ncomp] }
    }

    pub fn nsites(&self) -> usize {
        self.data.len() / self.ncomp
    }

    pub fn at(&self, site: usize) -> &[f64] {
        &self.data[site * self.ncomp..(site + 1) * self.ncomp]
    }

    pub fn at_mut(&mut self, site: usize) -> &mut [f64] {
        &mut self.data[site * self.ncomp..(site + 1) * self.ncomp]
    }

    pub fn l2(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Lifts to fiber-constant functions.
    pub fn to_lattice(&self, basis: &FiberBasis) -> Lattice {
        let mut out = Lattice::zeros(self.nsites(), self.ncomp, basis.len());
        let c0 = basis.constant_index();
        for (k, &v) in self.data.iter().enumerate() {
            out.data[k * basis.len() + c0] = C64::new(v, 0.0);
        }
        out
    }

    /// Real part of the Haar average of each component.
    pub fn from_lattice(l: &Lattice, basis: &FiberBasis) -> Self {
        Self { ncomp: l.ncomp, data: l.data.chunks(l.nmodes).map(|c| basis.haar(c).re).collect() }
    }
}

#[derive(Clone, Debug)]
pub struct ConnectionField {
    pub setting: Arc<Setting>,
    pub eta: Lattice,
}

impl ConnectionField {
    pub fn zero(setting: &Arc<Setting>) -> Self {
        Self { setting: setting.clone(), eta: setting.lattice(setting.n() * setting.r()) }
    }

    /// The `r` components of `η_a` at a site.
    pub fn eta_a(&self, site: usize, a: usize) -> &[C64] {
        let r = self.setting.r();
        self.eta.block(site, a * r, r)
    }
}

#[derive(Clone, Debug)]
pub struct MomentumField {
    pub setting: Arc<Setting>,
    pub pab: Lattice,
    pub paj: Lattice,
}

impl MomentumField {
    pub fn zero(setting: &Arc<Setting>) -> Self {
        let (n, r) = (setting.n(), setting.r());
        Self { setting: setting.clone(), pab: setting.lattice(setting.npairs() * r), paj: setting.lattice(n * r * r) }
    }
}

#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub setting: Arc<Setting>,
    pub f: Lattice,
    pub lossy: bool,
}

#[derive(Clone, Debug)]
pub struct JetField {
    pub setting: Arc<Setting>,
    pub lab: Lattice,
    pub laj: Lattice,
}

impl JetField {
    /// The jet of a field: `λ_{a;b} = (∇_b η)_a` and `λ_{a;j} = ρ_j η_a`.
    pub fn of(eta: &ConnectionField) -> Self {
        let s = &eta.setting;
        let (n, r, nm) = (s.n(), s.r(), s.nm());
        let mut lab = s.lattice(n * n * r);
        for b in 0..n {
            let d = covariant_derivative(eta, b);
            for site in 0..s.nsites() {
                for a in 0..n {
                    lab.block_mut(site, (a * n + b) * r, r).copy_from_slice(d.block(site, a * r, r));
                }
            }
        }
        let mut laj = s.lattice(n * r * r);
        for site in 0..s.nsites() {
            for a in 0..n {
                for j in 0..r {
                    for i in 0..r {
                        let src = eta.eta.at(site, a * r + i);
                        let mut tmp = vec![ZERO; nm];
                        s.fiber.rho_add(j, src, 1.0, &mut tmp);
                        laj.at_mut(site, (a * r + j) * r + i).copy_from_slice(&tmp);
                    }
                }
            }
        }
        Self { setting: s.clone(), lab, laj }
    }
}

/// `∇_a` of an `η`-shaped lattice: component `b` is `∂_a η_b − η_c Γ^c_{ab}`.
pub fn covariant_derivative(eta: &ConnectionField, a: usize) -> Lattice {
    let s = &eta.setting;
    let (n, r) = (s.n(), s.r());
    let mut out = s.derivative(&eta.eta, a);
    for b in 0..n {
        for c in 0..n {
            let g = s.base.gamma(c, a, b);
            if g == 0.0 {
                continue;
            }
            for site in 0..s.nsites() {
                for i in 0..r {
                    let src: Vec<C64> = eta.eta.at(site, c * r + i).to_vec();
                    for (o, v) in out.at_mut(site, b * r + i).iter_mut().zip(src) {
                        *o -= v * g;
                    }
                }
            }
        }
    }
    out
}

/// `∂_a f`, or `(∇_a f)` when `covariant` is set and `f` has the shape of `η`.
pub fn horizontal_derivative(setting: &Arc<Setting>, f: &Lattice, a: usize, covariant: bool) -> Result<Lattice> {
    if a >= setting.n() {
        return Err(Error::Config(format!("direction {a} outside the base of dimension {}", setting.n())));
    }
    if !covariant {
        return Ok(setting.derivative(f, a));
    }
    check_len(setting.n() * setting.r(), f.ncomp)?;
    Ok(covariant_derivative(&ConnectionField { setting: setting.clone(), eta: f.clone() }, a))
}

/// `F_{ab} = (∇_a η)_b − (∇_b η)_a + [η_a, η_b]` for `a < b`.
pub fn curvature(eta: &ConnectionField) -> CurvatureField {
    let s = &eta.setting;
    let (n, r) = (s.n(), s.r());
    let nabla: Vec<Lattice> = (0..n).map(|a| covariant_derivative(eta, a)).collect();
    let mut f = s.lattice(s.npairs() * r);
    let mut lossy = false;
    for (p, (a, b)) in s.pairs().into_iter().enumerate() {
        for site in 0..s.nsites() {
            let out = f.block_mut(site, p * r, r);
            for (k, v) in out.iter_mut().enumerate() {
                *v = nabla[a].block(site, b * r, r)[k] - nabla[b].block(site, a * r, r)[k];
            }
            lossy |= s.bracket_add(eta.eta_a(site, a), eta.eta_a(site, b), 1.0, out);
        }
    }
    CurvatureField { setting: s.clone(), f, lossy }
}

/// `E_{a,j} = ρ_j η_a + [t_j, η_a]` at component `(a*r + j)*r + i`.
pub fn equivariance_defect(eta: &ConnectionField) -> Lattice {
    let s = &eta.setting;
    let (n, r, nm) = (s.n(), s.r(), s.nm());
    let mut out = s.lattice(n * r * r);
    for site in 0..s.nsites() {
        for a in 0..n {
            let ea = eta.eta_a(site, a);
            for j in 0..r {
                let dst = out.block_mut(site, (a * r + j) * r, r);
                for i in 0..r {
                    s.fiber.rho_add(j, &ea[i * nm..(i + 1) * nm], 1.0, &mut dst[i * nm..(i + 1) * nm]);
                }
                s.bracket_t_add(j, ea, 1.0, dst);
            }
        }
    }
    out
}

/// `η^i_a(x, g) = M(g)^i_j A^j_a(x)` for `A` with components `a*r + j`.
pub fn equivariant_embed(setting: &Arc<Setting>, a_field: &BaseField) -> Result<ConnectionField> {
    let (n, r, nm) = (setting.n(), setting.r(), setting.nm());
    check_len(n * r, a_field.ncomp)?;
    check_len(setting.nsites(), a_field.nsites())?;
    let m = setting
        .fiber
        .adjoint_matrix()
        .ok_or_else(|| Error::Config("SU2 equivariant fields need j_max ≥ 1".into()))?;
    let mut eta = ConnectionField::zero(setting);
    for site in 0..setting.nsites() {
        let av = a_field.at(site);
        for a in 0..n {
            for i in 0..r {
                let dst = eta.eta.at_mut(site, a * r + i);
                for j in 0..r {
                    let x = av[a * r + j];
                    if x == 0.0 {
                        continue;
                    }
                    for mu in 0..nm {
                        dst[mu] += m[i * r + j][mu] * x;
                    }
                }
            }
        }
    }
    Ok(eta)
}

/// `∫_G Σ_j ρ_j Φ^{aj}` per site, component `a*r + i`.
pub fn fiber_divergence_average(spec: &LieAlgebraSpec, basis: &FiberBasis, phi: &Lattice) -> Result<Vec<C64>> {
    if !spec.is_unimodular() {
        return Err(Error::NonUnimodular(spec.label().to_string()));
    }
    basis.supports(spec)?;
    let r = spec.dim();
    if phi.ncomp % (r * r) != 0 || phi.nmodes != basis.len() {
        return Err(Error::DimensionMismatch { expected: r * r, got: phi.ncomp });
    }
    let n = phi.ncomp / (r * r);
    let mut out = vec![ZERO; phi.nsites * n * r];
    let mut tmp = basis.zeros();
    for site in 0..phi.nsites {
        for a in 0..n {
            for i in 0..r {
                tmp.iter_mut().for_each(|v| *v = ZERO);
                for j in 0..r {
                    basis.rho_add(j, phi.at(site, (a * r + j) * r + i), 1.0, &mut tmp);
                }
                out[(site * n + a) * r + i] = basis.haar(&tmp);
            }
        }
    }
    Ok(out)
}

const MAGIC: &[u8; 8] = b"HVDWSNAP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentInfo {
    pub name: String,
    pub nsites: usize,
    pub ncomp: usize,
    pub nmodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub endianness: String,
    pub dtype: String,
    pub group: Group,
    pub truncation: i32,
    pub algebra: serde_json::Value,
    pub base: BaseManifoldSpec,
    pub components: Vec<ComponentInfo>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub fields: Vec<Lattice>,
}

impl Snapshot {
    pub fn new(setting: &Setting, named: Vec<(&str, Lattice)>, meta: serde_json::Value) -> Self {
        let components = named
            .iter()
            .map(|(name, l)| ComponentInfo { name: name.to_string(), nsites: l.nsites, ncomp: l.ncomp, nmodes: l.nmodes })
            .collect();
        let header = SnapshotHeader {
            format: "hvdw-snapshot".into(),
            version: 1,
            endianness: "little".into(),
            dtype: "complex-f64".into(),
            group: setting.fiber.group(),
            truncation: setting.fiber.truncation(),
            algebra: serde_json::from_str(&setting.spec.to_json_string()).expect("spec json"),
            base: setting.base.clone(),
            components,
            meta,
        };
        Self { header, fields: named.into_iter().map(|(_, l)| l).collect() }
    }

    pub fn field(&self, name: &str) -> Option<&Lattice> {
        self.header.components.iter().position(|c| c.name == name).map(|k| &self.fields[k])
    }

    /// Rebuilds the setting recorded in the header.
    pub fn setting(&self) -> Result<Arc<Setting>> {
        let spec = LieAlgebraSpec::from_json_str(&self.header.algebra.to_string())?;
        let fiber = match self.header.group {
            Group::U1 => FiberBasis::u1(self.header.truncation as u32),
            Group::SU2 => FiberBasis::su2(self.header.truncation as f64 / 2.0)?,
        };
        Setting::new(spec, fiber, self.header.base.clone())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for l in &self.fields {
            let mut buf = Vec::with_capacity(l.data.len() * 16);
            for z in &l.data {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not an hvdw snapshot".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 26 {
            return Err(Error::Config("snapshot header too large".into()));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: SnapshotHeader = serde_json::from_slice(&header)?;
        if header.endianness != "little" || header.dtype != "complex-f64" {
            return Err(Error::Config("unsupported snapshot encoding".into()));
        }
        let mut fields = Vec::new();
        for c in &header.components {
            let count = c.nsites * c.ncomp * c.nmodes;
            let mut bytes = vec![0u8; count * 16];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(16)
                .map(|b| {
                    C64::new(
                        f64::from_le_bytes(b[..8].try_into().unwrap()),
                        f64::from_le_bytes(b[8..].try_into().unwrap()),
                    )
                })
                .collect();
            fields.push(Lattice { nsites: c.nsites, ncomp: c.ncomp, nmodes: c.nmodes, data });
        }
        Ok(Self { header, fields })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Snapshot of a full state `(η, p)`.
pub fn state_snapshot(eta: &ConnectionField, p: &MomentumField, meta: serde_json::Value) -> Snapshot {
    Snapshot::new(&eta.setting, vec![("eta", eta.eta.clone()), ("pab", p.pab.clone()), ("paj", p.paj.clone())], meta)
}

/// Reads back a state written by [`state_snapshot`].
pub fn state_from_snapshot(snap: &Snapshot) -> Result<(ConnectionField, MomentumField)> {
    let setting = snap.setting()?;
    let get = |name: &str, ncomp: usize| -> Result<Lattice> {
        let l = snap.field(name).ok_or_else(|| Error::Config(format!("snapshot lacks `{name}`")))?;
        check_len(ncomp, l.ncomp)?;
        check_len(setting.nsites(), l.nsites)?;
        check_len(setting.nm(), l.nmodes)?;
        Ok(l.clone())
    };
    let (n, r) = (setting.n(), setting.r());
    let eta = ConnectionField { setting: setting.clone(), eta: get("eta", n * r)? };
    let p = MomentumField { setting: setting.clone(), pab: get("pab", setting.npairs() * r)?, paj: get("paj", n * r * r)? };
    Ok((eta, p))
}
