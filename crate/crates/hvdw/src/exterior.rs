//! Graded exterior algebra on the coframe `β^a, γ^i` and the formal
//! connection forms `ω^a_b`, with exact rational coefficients.
//!
//! Words are kept sorted in the global order `β^1 < … < β^n < γ^1 < … < γ^r <
//! ω^1_2 < ω^1_3 < …`. The derivative follows `dβ^a = −ω^a_b ∧ β^b` and
//! `dγ^i = −½ c^i_{jk} γ^j ∧ γ^k`; `dω` is outside the engine.

use crate::error::{Error, Result};
use crate::lie::LieAlgebraSpec;
use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

pub type Coeff = BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Beta(usize),
    Gamma(usize),
    /// `ω^a_b` with `a < b`.
    Omega(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameVector {
    E(usize),
    Rho(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub n: usize,
    pub r: usize,
}

impl Frame {
    pub fn new(n: usize, r: usize) -> Self {
        Self { n, r }
    }

    fn id(&self, g: Generator) -> u16 {
        match g {
            Generator::Beta(a) => a as u16,
            Generator::Gamma(i) => (self.n + i) as u16,
            Generator::Omega(a, b) => {
                debug_assert!(a < b);
                let before: usize = (0..a).map(|x| self.n - 1 - x).sum();
                (self.n + self.r + before + (b - a - 1)) as u16
            }
        }
    }

    fn generator(&self, id: u16) -> Generator {
        let id = id as usize;
        if id < self.n {
            return Generator::Beta(id);
        }
        if id < self.n + self.r {
            return Generator::Gamma(id - self.n);
        }
        let mut k = id - self.n - self.r;
        for a in 0..self.n {
            let row = self.n - 1 - a;
            if k < row {
                return Generator::Omega(a, a + 1 + k);
            }
            k -= row;
        }
        unreachable!("generator id out of range")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct CoframeForm {
    frame: Frame,
    terms: BTreeMap<Vec<u16>, Coeff>,
}

/// Sorts a word in place and returns its permutation sign, or `None` when a
/// generator repeats.
fn canonical(word: &mut [u16]) -> Option<bool> {
    let mut odd = false;
    for i in 1..word.len() {
        let mut j = i;
        while j > 0 && word[j - 1] > word[j] {
            word.swap(j - 1, j);
            odd = !odd;
            j -= 1;
        }
    }
    if word.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some(odd)
    }
}

/// Exact rational for an `f64`, preferring a short fraction when one
/// represents the same double.
pub fn coeff_from_f64(x: f64) -> Coeff {
    if let Some(q) = Rational64::approximate_float(x) {
        if q.to_f64() == Some(x) {
            return BigRational::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()));
        }
    }
    BigRational::from_float(x).expect("finite coefficient")
}

impl CoframeForm {
    pub fn zero(frame: Frame) -> Self {
        Self { frame, terms: BTreeMap::new() }
    }

    pub fn scalar(frame: Frame, q: Coeff) -> Self {
        let mut f = Self::zero(frame);
        f.push(Vec::new(), q);
        f
    }

    pub fn one(frame: Frame) -> Self {
        Self::scalar(frame, Coeff::one())
    }

    pub fn generator(frame: Frame, g: Generator) -> Self {
        let mut f = Self::zero(frame);
        f.push(vec![frame.id(g)], Coeff::one());
        f
    }

    pub fn beta(frame: Frame, a: usize) -> Self {
        Self::generator(frame, Generator::Beta(a))
    }

    pub fn gamma(frame: Frame, i: usize) -> Self {
        Self::generator(frame, Generator::Gamma(i))
    }

    /// `ω^a_b`, using `ω^a_b = −ω^b_a`.
    pub fn omega(frame: Frame, a: usize, b: usize) -> Self {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => Self::zero(frame),
            std::cmp::Ordering::Less => Self::generator(frame, Generator::Omega(a, b)),
            std::cmp::Ordering::Greater => Self::generator(frame, Generator::Omega(b, a)).neg(),
        }
    }

    /// `β = β^1 ∧ … ∧ β^n`.
    pub fn beta_vol(frame: Frame) -> Self {
        (0..frame.n).fold(Self::one(frame), |acc, a| acc.wedge(&Self::beta(frame, a)))
    }

    /// `γ = γ^1 ∧ … ∧ γ^r`.
    pub fn gamma_vol(frame: Frame) -> Self {
        (0..frame.r).fold(Self::one(frame), |acc, i| acc.wedge(&Self::gamma(frame, i)))
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    fn push(&mut self, word: Vec<u16>, q: Coeff) {
        if q.is_zero() {
            return;
        }
        match self.terms.get_mut(&word) {
            Some(e) => {
                *e += q;
                if e.is_zero() {
                    self.terms.remove(&word);
                }
            }
            None => {
                self.terms.insert(word, q);
            }
        }
    }

    fn push_unsorted(&mut self, mut word: Vec<u16>, q: Coeff) {
        if let Some(odd) = canonical(&mut word) {
            self.push(word, if odd { -q } else { q });
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Degrees of the terms present (a homogeneous form has one).
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.terms.keys().map(|w| w.len()).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn terms(&self) -> impl Iterator<Item = (Vec<Generator>, &Coeff)> + '_ {
        self.terms
            .iter()
            .map(move |(w, q)| (w.iter().map(|&id| self.frame.generator(id)).collect(), q))
    }

    pub fn contains_omega(&self) -> bool {
        let lim = (self.frame.n + self.frame.r) as u16;
        self.terms.keys().any(|w| w.iter().any(|&g| g >= lim))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, q) in &other.terms {
            out.push(w.clone(), q.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Coeff::one())
    }

    pub fn scale(&self, q: &Coeff) -> Self {
        let mut out = Self::zero(self.frame);
        for (w, c) in &self.terms {
            out.push(w.clone(), c * q);
        }
        out
    }

    pub fn wedge(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.frame);
        for (w1, q1) in &self.terms {
            for (w2, q2) in &other.terms {
                let mut w = w1.clone();
                w.extend_from_slice(w2);
                out.push_unsorted(w, q1 * q2);
            }
        }
        out
    }

    /// Interior product as a graded antiderivation.
    pub fn interior(&self, v: FrameVector) -> Result<Self> {
        let target = match v {
            FrameVector::E(a) => self.frame.id(Generator::Beta(a)),
            FrameVector::Rho(i) => self.frame.id(Generator::Gamma(i)),
        };
        let lim = (self.frame.n + self.frame.r) as u16;
        let mut out = Self::zero(self.frame);
        for (w, q) in &self.terms {
            if w.iter().any(|&g| g >= lim) {
                return Err(Error::Unsupported(
                    "interior product of a formal connection form ω^a_b".into(),
                ));
            }
            if let Some(pos) = w.iter().position(|&g| g == target) {
                let mut rest = w.clone();
                rest.remove(pos);
                out.push(rest, if pos % 2 == 1 { -q.clone() } else { q.clone() });
            }
        }
        Ok(out)
    }

    /// Iterated interior product `v_k ⌟ (… ⌟ (v_1 ⌟ self))`.
    pub fn interior_many(&self, vs: &[FrameVector]) -> Result<Self> {
        vs.iter().try_fold(self.clone(), |acc, &v| acc.interior(v))
    }

    /// Value on the ordered multivector `(v_1, …, v_k)`, i.e. the degree-zero
    /// part of the iterated contraction.
    pub fn evaluate(&self, vs: &[FrameVector]) -> Result<Coeff> {
        let f = vs.iter().try_fold(self.clone(), |acc, &v| acc.interior(v))?;
        Ok(f.terms.get(&Vec::new()).cloned().unwrap_or_else(Coeff::zero))
    }

    fn d_generator(&self, g: Generator, spec: &LieAlgebraSpec) -> Result<Self> {
        let fr = self.frame;
        match g {
            Generator::Beta(a) => {
                let mut out = Self::zero(fr);
                for b in 0..fr.n {
                    out = out.sub(&Self::omega(fr, a, b).wedge(&Self::beta(fr, b)));
                }
                Ok(out)
            }
            Generator::Gamma(i) => {
                let mut out = Self::zero(fr);
                let half = BigRational::new(BigInt::from(-1), BigInt::from(2));
                for j in 0..fr.r {
                    for k in 0..fr.r {
                        let c = spec.c(i, j, k);
                        if c != 0.0 {
                            let q = coeff_from_f64(c) * &half;
                            out = out.add(&Self::gamma(fr, j).wedge(&Self::gamma(fr, k)).scale(&q));
                        }
                    }
                }
                Ok(out)
            }
            Generator::Omega(..) => Err(Error::Unsupported(
                "exterior derivative of a formal connection form ω^a_b".into(),
            )),
        }
    }

    /// Exterior derivative, extended from the generators as a graded
    /// derivation; coefficients are constants.
    pub fn d(&self, spec: &LieAlgebraSpec) -> Result<Self> {
        if spec.dim() != self.frame.r {
            return Err(Error::DimensionMismatch { expected: self.frame.r, got: spec.dim() });
        }
        let fr = self.frame;
        let mut out = Self::zero(fr);
        for (w, q) in &self.terms {
            for pos in 0..w.len() {
                let dg = self.d_generator(fr.generator(w[pos]), spec)?;
                let mut left = Self::zero(fr);
                left.push(w[..pos].to_vec(), if pos % 2 == 1 { -q.clone() } else { q.clone() });
                let mut right = Self::zero(fr);
                right.push(w[pos + 1..].to_vec(), Coeff::one());
                out = out.add(&left.wedge(&dg).wedge(&right));
            }
        }
        Ok(out)
    }
}

impl fmt::Display for CoframeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (word, q) in self.terms() {
            let sign = if q.is_negative() { "-" } else { "+" };
            if first {
                if q.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let a = q.abs();
            let names: Vec<String> = word
                .iter()
                .map(|g| match g {
                    Generator::Beta(a) => format!("β^{}", a + 1),
                    Generator::Gamma(i) => format!("γ^{}", i + 1),
                    Generator::Omega(a, b) => format!("ω^{}_{}", a + 1, b + 1),
                })
                .collect();
            if names.is_empty() {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "{}", names.join("∧"))?;
            } else {
                write!(f, "{a}·{}", names.join("∧"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CoframeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoframeForm({self})")
    }
}

/// `β_a = e_a ⌟ β`.
pub fn beta_a(frame: Frame, a: usize) -> Result<CoframeForm> {
    CoframeForm::beta_vol(frame).interior(FrameVector::E(a))
}

/// `β_{ab} = e_b ⌟ (e_a ⌟ β)`.
pub fn beta_ab(frame: Frame, a: usize, b: usize) -> Result<CoframeForm> {
    beta_a(frame, a)?.interior(FrameVector::E(b))
}

/// `γ_i = ρ_i ⌟ γ`.
pub fn gamma_i(frame: Frame, i: usize) -> Result<CoframeForm> {
    CoframeForm::gamma_vol(frame).interior(FrameVector::Rho(i))
}

/// `γ_{ij} = ρ_j ⌟ (ρ_i ⌟ γ)`.
pub fn gamma_ij(frame: Frame, i: usize, j: usize) -> Result<CoframeForm> {
    gamma_i(frame, i)?.interior(FrameVector::Rho(j))
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityEntry {
    pub name: String,
    /// One-based indices of the instance.
    pub indices: Vec<usize>,
    pub defect: String,
    pub zero: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub algebra: String,
    pub n: usize,
    pub r: usize,
    pub entries: Vec<IdentityEntry>,
    /// `dγ_i` for each `i`; vanishes exactly when the algebra is unimodular.
    pub corollary: Vec<IdentityEntry>,
    /// Whether `dγ_i = −tr(ad_{t_i}) γ` holds for every `i`.
    pub corollary_matches_trace: bool,
    pub unimodular: bool,
    pub all_zero: bool,
}

impl IdentityReport {
    pub fn corollary_zero(&self) -> bool {
        self.corollary.iter().all(|e| e.zero)
    }
}

fn delta(a: usize, b: usize) -> Coeff {
    if a == b {
        Coeff::one()
    } else {
        Coeff::zero()
    }
}

pub fn verify_identities(spec: &LieAlgebraSpec, n: usize) -> Result<IdentityReport> {
    if n < 2 {
        return Err(Error::Config("base dimension must be at least 2".into()));
    }
    let r = spec.dim();
    let fr = Frame::new(n, r);
    let beta = CoframeForm::beta_vol(fr);
    let gamma = CoframeForm::gamma_vol(fr);
    let mut entries = Vec::new();
    let mut record = |name: &str, idx: &[usize], f: CoframeForm| {
        entries.push(IdentityEntry {
            name: name.to_string(),
            indices: idx.iter().map(|x| x + 1).collect(),
            zero: f.is_zero(),
            defect: f.to_string(),
        });
    };

    let bas: Vec<CoframeForm> = (0..n).map(|a| beta_a(fr, a)).collect::<Result<_>>()?;
    let gis: Vec<CoframeForm> = (0..r).map(|i| gamma_i(fr, i)).collect::<Result<_>>()?;
    for a in 0..n {
        for b in 0..n {
            let f = CoframeForm::beta(fr, a).wedge(&bas[b]).sub(&beta.scale(&delta(a, b)));
            record("beta_contraction", &[a, b], f);
        }
    }
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let lhs = CoframeForm::beta(fr, a)
                        .wedge(&CoframeForm::beta(fr, b))
                        .wedge(&beta_ab(fr, c, d)?);
                    let k = delta(a, c) * delta(b, d) - delta(a, d) * delta(b, c);
                    record("beta_double_contraction", &[a, b, c, d], lhs.sub(&beta.scale(&k)));
                }
            }
        }
    }
    for i in 0..r {
        for j in 0..r {
            let f = CoframeForm::gamma(fr, i).wedge(&gis[j]).sub(&gamma.scale(&delta(i, j)));
            record("gamma_contraction", &[i, j], f);
        }
    }
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                for l in 0..r {
                    let lhs = CoframeForm::gamma(fr, i)
                        .wedge(&CoframeForm::gamma(fr, j))
                        .wedge(&gamma_ij(fr, k, l)?);
                    let q = delta(i, k) * delta(j, l) - delta(i, l) * delta(j, k);
                    record("gamma_double_contraction", &[i, j, k, l], lhs.sub(&gamma.scale(&q)));
                }
            }
        }
    }
    let tr = spec.unimodularity_defect();
    let mut corollary = Vec::new();
    let mut corollary_matches_trace = true;
    for i in 0..r {
        let dg = gis[i].d(spec)?;
        let t = gamma.scale(&coeff_from_f64(tr[i]));
        record("dgamma_trace", &[i], dg.add(&t));
        corollary_matches_trace &= dg == t.neg();
        corollary.push(IdentityEntry {
            name: "dgamma".into(),
            indices: vec![i + 1],
            zero: dg.is_zero(),
            defect: dg.to_string(),
        });
    }
    for a in 0..n {
        let mut rhs = CoframeForm::zero(fr);
        for b in 0..n {
            rhs = rhs.add(&CoframeForm::omega(fr, b, a).wedge(&bas[b]));
        }
        record("dbeta_a", &[a], bas[a].d(spec)?.sub(&rhs));
    }
    for a in 0..n {
        for b in 0..n {
            let mut rhs = CoframeForm::zero(fr);
            for c in 0..n {
                rhs = rhs
                    .add(&CoframeForm::omega(fr, c, a).wedge(&beta_ab(fr, c, b)?))
                    .add(&CoframeForm::omega(fr, c, b).wedge(&beta_ab(fr, a, c)?));
            }
            record("dbeta_ab", &[a, b], beta_ab(fr, a, b)?.d(spec)?.sub(&rhs));
        }
    }
    let all_zero = entries.iter().all(|e| e.zero);
    Ok(IdentityReport {
        algebra: spec.label().to_string(),
        n,
        r,
        entries,
        corollary,
        corollary_matches_trace,
        unimodular: spec.is_unimodular(),
        all_zero,
    })
}

/// `d(dγ^i)` for every `i`; identically zero exactly when the
/// antisymmetrized structure constants satisfy Jacobi.
pub fn d_squared_gamma(spec: &LieAlgebraSpec, n: usize) -> Result<Vec<CoframeForm>> {
    let fr = Frame::new(n, spec.dim());
    (0..spec.dim()).map(|i| CoframeForm::gamma(fr, i).d(spec)?.d(spec)).collect()
}
