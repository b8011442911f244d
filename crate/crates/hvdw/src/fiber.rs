//! Spectral representation of functions on the structure group.
//!
//! U(1) uses Fourier modes `e^{ikθ}` with `|k| ≤ K` and generator `t = i`.
//! SU(2) uses Wigner matrix coefficients `D^j_{mm'}` with `j ≤ j_max`, in the
//! Condon–Shortley basis realized on homogeneous polynomials, and generators
//! `t_i = −iσ_i/2`. Half-integer labels are stored doubled. The Haar measure
//! has total volume one, so the integral is the constant coefficient.

use crate::error::{Error, Result};
use crate::lie::LieAlgebraSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, OnceLock};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
/// Coefficient products below this size do not count as truncation loss.
pub const LOSSY_EPS: f64 = 1e-14;
/// Tolerance for accepting a group element.
pub const GROUP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    U1,
    SU2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Fourier(i32),
    /// `(2j, 2m, 2m')`.
    Wigner(i32, i32, i32),
}

impl Mode {
    /// Doubled degree for SU2 (`2j`), `|k|` for U1.
    pub fn degree(&self) -> i32 {
        match *self {
            Mode::Fourier(k) => k.abs(),
            Mode::Wigner(tj, _, _) => tj,
        }
    }
}

struct ProductTable {
    offsets: Vec<u32>,
    entries: Vec<(u32, f64)>,
    lossy: Vec<bool>,
}

pub struct FiberBasis {
    group: Group,
    trunc: i32,
    modes: Vec<Mode>,
    partner: Vec<usize>,
    partner_sign: Vec<f64>,
    weight: Vec<f64>,
    rho: Vec<Vec<(u32, u32, C64)>>,
    product: OnceLock<ProductTable>,
    adjoint: OnceLock<Option<Vec<Vec<C64>>>>,
}

impl std::fmt::Debug for FiberBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FiberBasis({:?}, trunc {}, {} modes)", self.group, self.trunc, self.modes.len())
    }
}

fn factorial(n: i32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn binom(n: i32, k: i32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Clebsch–Gordan coefficient `⟨j1 m1 j2 m2 | J M⟩` with doubled arguments.
pub fn clebsch_gordan(tj1: i32, tm1: i32, tj2: i32, tm2: i32, tj: i32, tm: i32) -> f64 {
    if tm1 + tm2 != tm || tm1.abs() > tj1 || tm2.abs() > tj2 || tm.abs() > tj {
        return 0.0;
    }
    if tj < (tj1 - tj2).abs() || tj > tj1 + tj2 || (tj1 + tj2 + tj) % 2 != 0 {
        return 0.0;
    }
    if (tj1 + tm1) % 2 != 0 || (tj2 + tm2) % 2 != 0 || (tj + tm) % 2 != 0 {
        return 0.0;
    }
    let h = |x: i32| x / 2;
    let pre = ((tj + 1) as f64 * factorial(h(tj + tj1 - tj2)) * factorial(h(tj - tj1 + tj2))
        * factorial(h(tj1 + tj2 - tj))
        / factorial(h(tj1 + tj2 + tj) + 1))
        .sqrt();
    let pre2 = (factorial(h(tj + tm))
        * factorial(h(tj - tm))
        * factorial(h(tj1 - tm1))
        * factorial(h(tj1 + tm1))
        * factorial(h(tj2 - tm2))
        * factorial(h(tj2 + tm2)))
    .sqrt();
    let mut sum = 0.0;
    for k in 0..=h(tj1 + tj2 - tj) {
        let a = [
            k,
            h(tj1 + tj2 - tj) - k,
            h(tj1 - tm1) - k,
            h(tj2 + tm2) - k,
            h(tj - tj2 + tm1) + k,
            h(tj - tj1 - tm2) + k,
        ];
        if a.iter().any(|&x| x < 0) {
            continue;
        }
        let den: f64 = a.iter().map(|&x| factorial(x)).product();
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sgn / den;
    }
    pre * pre2 * sum
}

/// Spin-`j` matrix of a 2×2 Lie algebra element `x` acting on the
/// polynomial basis, rows and columns ordered `m = j, j−1, …, −j`.
fn spin_matrix(tj: i32, x: [[C64; 2]; 2]) -> Vec<C64> {
    let d = (tj + 1) as usize;
    let mut out = vec![ZERO; d * d];
    for col in 0..d {
        let tmp = tj - 2 * col as i32;
        let p = (tj + tmp) / 2;
        let q = (tj - tmp) / 2;
        out[col * d + col] += x[0][0] * p as f64 + x[1][1] * q as f64;
        if col + 1 < d {
            // m = m' − 1
            out[(col + 1) * d + col] += x[1][0] * ((p * (q + 1)) as f64).sqrt();
        }
        if col > 0 {
            // m = m' + 1
            out[(col - 1) * d + col] += x[0][1] * ((q * (p + 1)) as f64).sqrt();
        }
    }
    out
}

/// The SU(2) generators `t_i = −iσ_i/2` as 2×2 arrays.
pub fn su2_generators() -> [[[C64; 2]; 2]; 3] {
    let z = ZERO;
    let h = C64::new(0.5, 0.0);
    let ih = C64::new(0.0, 0.5);
    [[[z, -ih], [-ih, z]], [[z, -h], [h, z]], [[-ih, z], [z, ih]]]
}

impl FiberBasis {
    /// Fourier basis `k ∈ [−K, K]`.
    pub fn u1(k_max: u32) -> Arc<Self> {
        let k = k_max as i32;
        let modes: Vec<Mode> = (-k..=k).map(Mode::Fourier).collect();
        let nm = modes.len();
        let partner = (0..nm).map(|i| nm - 1 - i).collect();
        let rho = vec![(0..nm)
            .filter(|&i| i as i32 != k)
            .map(|i| (i as u32, i as u32, C64::new(0.0, (i as i32 - k) as f64)))
            .collect()];
        Arc::new(Self {
            group: Group::U1,
            trunc: k,
            modes,
            partner,
            partner_sign: vec![1.0; nm],
            weight: vec![1.0; nm],
            rho,
            product: OnceLock::new(),
            adjoint: OnceLock::new(),
        })
    }

    /// Wigner basis with `j ≤ j_max`; `j_max` must be a multiple of ½.
    pub fn su2(j_max: f64) -> Result<Arc<Self>> {
        let tj_max = (2.0 * j_max).round();
        if !(0.0..=16.0).contains(&tj_max) || (tj_max - 2.0 * j_max).abs() > 1e-12 {
            return Err(Error::Config(format!("j_max must be a multiple of 1/2 in [0, 8], got {j_max}")));
        }
        let tj_max = tj_max as i32;
        let mut modes = Vec::new();
        for tj in 0..=tj_max {
            for row in 0..=tj {
                for col in 0..=tj {
                    modes.push(Mode::Wigner(tj, tj - 2 * row, tj - 2 * col));
                }
            }
        }
        let mut basis = Self {
            group: Group::SU2,
            trunc: tj_max,
            partner: Vec::new(),
            partner_sign: Vec::new(),
            weight: Vec::new(),
            rho: Vec::new(),
            modes,
            product: OnceLock::new(),
            adjoint: OnceLock::new(),
        };
        for &m in &basis.modes {
            let Mode::Wigner(tj, tm, tmp) = m else { unreachable!() };
            basis.partner.push(basis.index(Mode::Wigner(tj, -tm, -tmp)).expect("partner in basis"));
            basis.partner_sign.push(if ((tm - tmp) / 2) % 2 == 0 { 1.0 } else { -1.0 });
            basis.weight.push(1.0 / (tj + 1) as f64);
        }
        for t in su2_generators() {
            let mut ops = Vec::new();
            for tj in 0..=tj_max {
                let d = (tj + 1) as usize;
                let mat = spin_matrix(tj, t);
                for row in 0..d {
                    let tm = tj - 2 * row as i32;
                    for src in 0..d {
                        for dst in 0..d {
                            let cf = mat[dst * d + src];
                            if cf != ZERO {
                                let s = basis.index(Mode::Wigner(tj, tm, tj - 2 * src as i32)).unwrap();
                                let o = basis.index(Mode::Wigner(tj, tm, tj - 2 * dst as i32)).unwrap();
                                ops.push((o as u32, s as u32, cf));
                            }
                        }
                    }
                }
            }
            basis.rho.push(ops);
        }
        Ok(Arc::new(basis))
    }

    pub fn group(&self) -> Group {
        self.group
    }

    /// `K` for U1, `2 j_max` for SU2.
    pub fn truncation(&self) -> i32 {
        self.trunc
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Number of vertical generators.
    pub fn rank(&self) -> usize {
        self.rho.len()
    }

    pub fn index(&self, m: Mode) -> Option<usize> {
        match (self.group, m) {
            (Group::U1, Mode::Fourier(k)) if k.abs() <= self.trunc => Some((k + self.trunc) as usize),
            (Group::SU2, Mode::Wigner(tj, tm, tmp))
                if tj <= self.trunc && tj >= 0 && tm.abs() <= tj && tmp.abs() <= tj
                    && (tj + tm) % 2 == 0 && (tj + tmp) % 2 == 0 =>
            {
                let off: i32 = (0..tj).map(|t| (t + 1) * (t + 1)).sum();
                let row = (tj - tm) / 2;
                let col = (tj - tmp) / 2;
                Some((off + row * (tj + 1) + col) as usize)
            }
            _ => None,
        }
    }

    /// Haar norm of mode `μ`: `1` for Fourier, `1/(2j+1)` for Wigner.
    pub fn weight(&self, mu: usize) -> f64 {
        self.weight[mu]
    }

    /// Checks that `spec` is the algebra this fiber's generators realize.
    pub fn supports(&self, spec: &LieAlgebraSpec) -> Result<()> {
        let ok = match self.group {
            Group::U1 => spec.dim() == 1 && spec.is_abelian(),
            Group::SU2 => {
                let su2 = LieAlgebraSpec::su2();
                spec.dim() == 3
                    && (0..3).all(|k| {
                        (0..3).all(|i| (0..3).all(|j| (spec.c(k, i, j) - su2.c(k, i, j)).abs() <= 1e-12))
                    })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "algebra `{}` is not realized by the {:?} fiber",
                spec.label(),
                self.group
            )))
        }
    }

    pub fn zeros(&self) -> Vec<C64> {
        vec![ZERO; self.len()]
    }

    pub fn constant_index(&self) -> usize {
        match self.group {
            Group::U1 => self.trunc as usize,
            Group::SU2 => 0,
        }
    }

    /// `dst += s · ρ_j src`.
    pub fn rho_add(&self, j: usize, src: &[C64], s: f64, dst: &mut [C64]) {
        for &(o, i, c) in &self.rho[j] {
            dst[o as usize] += c * src[i as usize] * s;
        }
    }

    pub fn rho(&self, j: usize, src: &[C64]) -> Vec<C64> {
        let mut out = self.zeros();
        self.rho_add(j, src, 1.0, &mut out);
        out
    }

    fn table(&self) -> &ProductTable {
        self.product.get_or_init(|| self.build_table())
    }

    fn build_table(&self) -> ProductTable {
        let nm = self.len();
        let mut offsets = Vec::with_capacity(nm * nm + 1);
        let mut entries = Vec::new();
        let mut lossy = Vec::with_capacity(nm * nm);
        offsets.push(0u32);
        for a in 0..nm {
            for b in 0..nm {
                match (self.modes[a], self.modes[b]) {
                    (Mode::Fourier(k1), Mode::Fourier(k2)) => {
                        if let Some(o) = self.index(Mode::Fourier(k1 + k2)) {
                            entries.push((o as u32, 1.0));
                            lossy.push(false);
                        } else {
                            lossy.push(true);
                        }
                    }
                    (Mode::Wigner(j1, m1, n1), Mode::Wigner(j2, m2, n2)) => {
                        let mut lost = false;
                        let mut tj = (j1 - j2).abs();
                        while tj <= j1 + j2 {
                            let cf = clebsch_gordan(j1, m1, j2, m2, tj, m1 + m2)
                                * clebsch_gordan(j1, n1, j2, n2, tj, n1 + n2);
                            if cf != 0.0 {
                                match self.index(Mode::Wigner(tj, m1 + m2, n1 + n2)) {
                                    Some(o) => entries.push((o as u32, cf)),
                                    None => lost = true,
                                }
                            }
                            tj += 2;
                        }
                        lossy.push(lost);
                    }
                    _ => unreachable!(),
                }
                offsets.push(entries.len() as u32);
            }
        }
        ProductTable { offsets, entries, lossy }
    }

    /// `out += s · P(a·b)` where `P` keeps modes of degree `≤ out_trunc`.
    /// Returns whether a nonnegligible part of the exact product was dropped.
    pub fn mul_add_trunc(&self, a: &[C64], b: &[C64], s: f64, out: &mut [C64], out_trunc: i32) -> bool {
        let t = self.table();
        let nm = self.len();
        let mut lossy = false;
        for (ia, &x) in a.iter().enumerate() {
            if x == ZERO {
                continue;
            }
            let xs = x * s;
            let xn = x.norm();
            let base = ia * nm;
            for (ib, &y) in b.iter().enumerate() {
                if y == ZERO {
                    continue;
                }
                let p = base + ib;
                if t.lossy[p] && xn * y.norm() > LOSSY_EPS {
                    lossy = true;
                }
                let xy = xs * y;
                for &(o, c) in &t.entries[t.offsets[p] as usize..t.offsets[p + 1] as usize] {
                    let o = o as usize;
                    if self.modes[o].degree() <= out_trunc {
                        out[o] += xy * c;
                    } else if xn * y.norm() * c.abs() > LOSSY_EPS {
                        lossy = true;
                    }
                }
            }
        }
        lossy
    }

    /// `out += s · P(a·b)` projected on this basis.
    #[inline]
    pub fn mul_add(&self, a: &[C64], b: &[C64], s: f64, out: &mut [C64]) -> bool {
        let t = self.table();
        let nm = self.len();
        let mut lossy = false;
        for (ia, &x) in a.iter().enumerate() {
            if x == ZERO {
                continue;
            }
            let xs = x * s;
            let base = ia * nm;
            for (ib, &y) in b.iter().enumerate() {
                if y == ZERO {
                    continue;
                }
                let p = base + ib;
                if t.lossy[p] && !lossy && x.norm() * y.norm() > LOSSY_EPS {
                    lossy = true;
                }
                let xy = xs * y;
                for &(o, c) in &t.entries[t.offsets[p] as usize..t.offsets[p + 1] as usize] {
                    out[o as usize] += xy * c;
                }
            }
        }
        lossy
    }

    /// Exact `∫ a·b` under the normalized Haar measure.
    #[inline]
    pub fn haar_pair(&self, a: &[C64], b: &[C64]) -> C64 {
        let mut s = ZERO;
        for mu in 0..a.len() {
            s += a[mu] * b[self.partner[mu]] * (self.partner_sign[mu] * self.weight[mu]);
        }
        s
    }

    /// `Re ∫ conj(a)·b`; the `L²(G)` inner product.
    #[inline]
    pub fn inner(&self, a: &[C64], b: &[C64]) -> f64 {
        let mut s = 0.0;
        for mu in 0..a.len() {
            s += (a[mu].re * b[mu].re + a[mu].im * b[mu].im) * self.weight[mu];
        }
        s
    }

    pub fn haar(&self, a: &[C64]) -> C64 {
        a[self.constant_index()]
    }

    /// Coefficients of the complex conjugate function.
    pub fn conj(&self, a: &[C64]) -> Vec<C64> {
        let mut out = self.zeros();
        for mu in 0..a.len() {
            out[self.partner[mu]] = a[mu].conj() * self.partner_sign[mu];
        }
        out
    }

    /// Projects `a` in place onto real-valued functions.
    pub fn realify(&self, a: &mut [C64]) {
        let c = self.conj(a);
        for (x, y) in a.iter_mut().zip(c) {
            *x = (*x + y) * 0.5;
        }
    }

    /// Largest deviation from the reality condition.
    pub fn reality_defect(&self, a: &[C64]) -> f64 {
        let c = self.conj(a);
        a.iter().zip(c).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    /// Highest degree carrying a coefficient above `tol`.
    pub fn degree_of(&self, a: &[C64], tol: f64) -> i32 {
        a.iter()
            .zip(&self.modes)
            .filter(|(x, _)| x.norm() > tol)
            .map(|(_, m)| m.degree())
            .max()
            .unwrap_or(0)
    }

    /// Values of all basis modes at `g`.
    pub fn mode_values(&self, g: &GroupElement) -> Result<Vec<C64>> {
        g.check()?;
        match (self.group, g) {
            (Group::U1, GroupElement::U1(z)) => {
                Ok(self.modes.iter().map(|m| if let Mode::Fourier(k) = m { z.powi(*k) } else { ZERO }).collect())
            }
            (Group::SU2, GroupElement::SU2(g)) => {
                let [[a, b], [c, d]] = *g;
                let mut out = Vec::with_capacity(self.len());
                for m in &self.modes {
                    let Mode::Wigner(tj, tm, tmp) = *m else { unreachable!() };
                    let p = (tj + tmp) / 2;
                    let q = (tj - tmp) / 2;
                    let xp = (tj + tm) / 2;
                    let norm = (factorial(xp) * factorial(tj - xp) / (factorial(p) * factorial(q))).sqrt();
                    let mut s = ZERO;
                    for sx in 0..=p {
                        let u = xp - sx;
                        if u < 0 || u > q {
                            continue;
                        }
                        s += a.powi(sx) * c.powi(p - sx) * b.powi(u) * d.powi(q - u) * (binom(p, sx) * binom(q, u));
                    }
                    out.push(s * norm);
                }
                Ok(out)
            }
            _ => Err(Error::NotGroupElement(format!("{:?} element for a {:?} fiber", g.group(), self.group))),
        }
    }

    pub fn evaluate(&self, a: &[C64], g: &GroupElement) -> Result<C64> {
        let v = self.mode_values(g)?;
        Ok(a.iter().zip(&v).map(|(x, y)| x * y).sum())
    }

    /// `M(g)^i_j` with `Ad_{g⁻¹} t_j = M(g)^i_j t_i`, row-major `i*r + j`.
    pub fn adjoint_matrix(&self) -> Option<&Vec<Vec<C64>>> {
        self.adjoint.get_or_init(|| self.build_adjoint()).as_ref()
    }

    fn build_adjoint(&self) -> Option<Vec<Vec<C64>>> {
        match self.group {
            Group::U1 => {
                let mut one = self.zeros();
                one[self.constant_index()] = C64::new(1.0, 0.0);
                Some(vec![one])
            }
            Group::SU2 if self.trunc >= 2 => {
                // M^i_j = −2 tr(t_i g† t_j g), with g_{xy} = D^{1/2}_{xy} and
                // conj(D_{xy}) = (−1)^{m_x − m_y} D_{x̄ȳ}.
                let t = su2_generators();
                let tm = |x: usize| if x == 0 { 1 } else { -1 };
                let dmode = |x: usize, y: usize| self.index(Mode::Wigner(1, tm(x), tm(y))).unwrap();
                let mut out = Vec::with_capacity(9);
                for i in 0..3 {
                    for j in 0..3 {
                        let mut acc = self.zeros();
                        for a in 0..2 {
                            for b in 0..2 {
                                for c in 0..2 {
                                    for d in 0..2 {
                                        let w = t[i][a][b] * t[j][c][d] * (-2.0);
                                        if w == ZERO {
                                            continue;
                                        }
                                        let sgn = if ((tm(c) - tm(b)) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                                        let mut f1 = self.zeros();
                                        f1[dmode(d, a)] = C64::new(1.0, 0.0);
                                        let mut f2 = self.zeros();
                                        f2[dmode(1 - c, 1 - b)] = w * sgn;
                                        self.mul_add(&f1, &f2, 1.0, &mut acc);
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
                Some(out)
            }
            Group::SU2 => None,
        }
    }
}

/// A single function on the fiber.
#[derive(Clone, Debug)]
pub struct FiberFunction {
    pub basis: Arc<FiberBasis>,
    pub coeffs: Vec<C64>,
}

impl PartialEq for FiberFunction {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis) && self.coeffs == other.coeffs
    }
}

impl FiberFunction {
    pub fn zero(basis: &Arc<FiberBasis>) -> Self {
        Self { basis: basis.clone(), coeffs: basis.zeros() }
    }

    pub fn constant(basis: &Arc<FiberBasis>, c: f64) -> Self {
        let mut f = Self::zero(basis);
        f.coeffs[basis.constant_index()] = C64::new(c, 0.0);
        f
    }

    pub fn mode(basis: &Arc<FiberBasis>, m: Mode) -> Result<Self> {
        let idx = basis.index(m).ok_or_else(|| Error::Config(format!("mode {m:?} outside the basis")))?;
        let mut f = Self::zero(basis);
        f.coeffs[idx] = C64::new(1.0, 0.0);
        Ok(f)
    }

    /// `g ↦ d/dt f(g·exp(t t_j))` at `t = 0`.
    pub fn vertical_derivative(&self, j: usize) -> Self {
        Self { basis: self.basis.clone(), coeffs: self.basis.rho(j, &self.coeffs) }
    }

    pub fn haar_integral(&self) -> C64 {
        self.basis.haar(&self.coeffs)
    }

    /// Pointwise product projected on degrees `≤ out_trunc`, with the lossy
    /// flag.
    pub fn multiply(&self, other: &Self, out_trunc: i32) -> (Self, bool) {
        let mut out = Self::zero(&self.basis);
        let lossy = self.basis.mul_add_trunc(&self.coeffs, &other.coeffs, 1.0, &mut out.coeffs, out_trunc);
        (out, lossy)
    }

    pub fn evaluate(&self, g: &GroupElement) -> Result<C64> {
        self.basis.evaluate(&self.coeffs, g)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.basis.reality_defect(&self.coeffs) <= tol
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

/// The `r×r` matrix of fiber functions `M(g) = Ad_{g⁻¹}` in the basis `t_i`.
pub fn adjoint_matrix_function(spec: &LieAlgebraSpec, basis: &Arc<FiberBasis>) -> Result<Vec<FiberFunction>> {
    basis.supports(spec)?;
    let m = basis
        .adjoint_matrix()
        .ok_or_else(|| Error::Config("SU2 adjoint functions need j_max ≥ 1".into()))?;
    Ok(m.iter().map(|c| FiberFunction { basis: basis.clone(), coeffs: c.clone() }).collect())
}

/// An element of U(1) (unit complex number) or SU(2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupElement {
    U1(C64),
    SU2([[C64; 2]; 2]),
}

pub type Mat2 = [[C64; 2]; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut o = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

pub fn mat_adj(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

fn su2_combination(x: &[f64]) -> Mat2 {
    let t = su2_generators();
    let mut o = [[ZERO; 2]; 2];
    for (k, tk) in t.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                o[i][j] += tk[i][j] * x[k];
            }
        }
    }
    o
}

/// Components of a traceless anti-Hermitian 2×2 matrix in the basis `t_i`.
pub fn su2_components(x: &Mat2) -> [f64; 3] {
    let t = su2_generators();
    let mut out = [0.0; 3];
    for (k, tk) in t.iter().enumerate() {
        let mut tr = ZERO;
        for a in 0..2 {
            for b in 0..2 {
                tr += tk[a][b] * x[b][a];
            }
        }
        out[k] = -2.0 * tr.re;
    }
    out
}

impl GroupElement {
    pub fn group(&self) -> Group {
        match self {
            GroupElement::U1(_) => Group::U1,
            GroupElement::SU2(_) => Group::SU2,
        }
    }

    pub fn identity(group: Group) -> Self {
        match group {
            Group::U1 => GroupElement::U1(C64::new(1.0, 0.0)),
            Group::SU2 => GroupElement::SU2([[C64::new(1.0, 0.0), ZERO], [ZERO, C64::new(1.0, 0.0)]]),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            GroupElement::U1(z) => {
                if (z.norm() - 1.0).abs() > GROUP_TOL {
                    return Err(Error::NotGroupElement(format!("|z| = {}", z.norm())));
                }
            }
            GroupElement::SU2(g) => {
                let p = mat_mul(&mat_adj(g), g);
                let dev = (p[0][0] - 1.0).norm() + (p[1][1] - 1.0).norm() + p[0][1].norm() + p[1][0].norm();
                let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
                if dev > GROUP_TOL || (det - 1.0).norm() > GROUP_TOL {
                    return Err(Error::NotGroupElement(format!("unitarity defect {dev:e}, det {det}")));
                }
            }
        }
        Ok(())
    }

    /// `exp(x^i t_i)`.
    pub fn exp(group: Group, x: &[f64]) -> Result<Self> {
        match group {
            Group::U1 => {
                crate::error::check_len(1, x.len())?;
                Ok(GroupElement::U1(C64::from_polar(1.0, x[0])))
            }
            Group::SU2 => {
                crate::error::check_len(3, x.len())?;
                let th = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let (c, s) = ((th / 2.0).cos(), if th > 0.0 { (th / 2.0).sin() / th } else { 0.5 });
                // exp(X) = cos(θ/2) I + (2 sin(θ/2)/θ) X for X = x^i t_i.
                let xm = su2_combination(x);
                let mut g = [[ZERO; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        g[i][j] = xm[i][j] * (2.0 * s) + if i == j { C64::new(c, 0.0) } else { ZERO };
                    }
                }
                Ok(GroupElement::SU2(g))
            }
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (GroupElement::U1(a), GroupElement::U1(b)) => Ok(GroupElement::U1(a * b)),
            (GroupElement::SU2(a), GroupElement::SU2(b)) => Ok(GroupElement::SU2(mat_mul(a, b))),
            _ => Err(Error::NotGroupElement("mixed groups".into())),
        }
    }

    pub fn inv(&self) -> Self {
        match self {
            GroupElement::U1(a) => GroupElement::U1(a.conj()),
            GroupElement::SU2(a) => GroupElement::SU2(mat_adj(a)),
        }
    }

    /// `Ad_g` as a row-major `r×r` matrix: `Ad_g t_j = R^i_j t_i`.
    pub fn ad_matrix(&self) -> Vec<f64> {
        match self {
            GroupElement::U1(_) => vec![1.0],
            GroupElement::SU2(g) => {
                let t = su2_generators();
                let gi = mat_adj(g);
                let mut out = vec![0.0; 9];
                for j in 0..3 {
                    let c = su2_components(&mat_mul(&mat_mul(g, &t[j]), &gi));
                    for i in 0..3 {
                        out[i * 3 + j] = c[i];
                    }
                }
                out
            }
        }
    }

    pub fn random(group: Group, rng: &mut crate::rng::SeedRng) -> Self {
        match group {
            Group::U1 => GroupElement::U1(C64::from_polar(1.0, crate::rng::sym(rng, std::f64::consts::PI))),
            Group::SU2 => loop {
                let q: Vec<f64> = (0..4).map(|_| crate::rng::sym(rng, 1.0)).collect();
                let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.1 && n <= 1.0 {
                    let a = C64::new(q[0] / n, q[1] / n);
                    let b = C64::new(q[2] / n, q[3] / n);
                    break GroupElement::SU2([[a, b], [-b.conj(), a.conj()]]);
                }
            },
        }
    }
}
