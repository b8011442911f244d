//! Finite-dimensional Lie algebras given by structure constants.
//!
//! Conventions: `[t_i, t_j] = c^k_{ij} t_k`, covectors are paired with
//! vectors by plain contraction, and `(ad*_x ℓ)_j = ℓ_k c^k_{ij} x^i` so that
//! `ℓ([x, ζ]) = (ad*_x ℓ)(ζ)`.

use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Tolerance under which a spec is accepted by [`LieAlgebraSpec::validate`].
pub const ACCEPT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDoc", into = "SpecDoc")]
pub struct LieAlgebraSpec {
    label: String,
    r: usize,
    c: Vec<f64>,
    h: Vec<f64>,
    h_inv: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    label: String,
    r: usize,
    c: Vec<Vec<Vec<f64>>>,
    h: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpecDiagnostics {
    pub antisymmetry: f64,
    pub jacobi: f64,
    pub ad_invariance: f64,
    pub failed: Vec<String>,
    pub accepted: bool,
}

impl TryFrom<SpecDoc> for LieAlgebraSpec {
    type Error = Error;
    fn try_from(doc: SpecDoc) -> Result<Self> {
        let spec = Self::new(&doc.label, doc.c, doc.h)?;
        check_len(doc.r, spec.r)?;
        Ok(spec)
    }
}

impl From<LieAlgebraSpec> for SpecDoc {
    fn from(s: LieAlgebraSpec) -> Self {
        let r = s.r;
        SpecDoc {
            label: s.label.clone(),
            r,
            c: (0..r).map(|k| (0..r).map(|i| (0..r).map(|j| s.c(k, i, j)).collect()).collect()).collect(),
            h: (0..r).map(|i| (0..r).map(|j| s.h(i, j)).collect()).collect(),
        }
    }
}

impl LieAlgebraSpec {
    /// Builds a spec from `c[k][i][j] = c^k_{ij}` and the metric `h[i][j]`.
    ///
    /// Only shapes and nondegeneracy of `h` are checked here; the algebraic
    /// invariants are reported by [`validate`](Self::validate).
    pub fn new(label: &str, c: Vec<Vec<Vec<f64>>>, h: Vec<Vec<f64>>) -> Result<Self> {
        let r = c.len();
        if r == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        let mut flat = Vec::with_capacity(r * r * r);
        for ck in &c {
            check_len(r, ck.len())?;
            for row in ck {
                check_len(r, row.len())?;
                flat.extend_from_slice(row);
            }
        }
        check_len(r, h.len())?;
        let mut hf = Vec::with_capacity(r * r);
        for row in &h {
            check_len(r, row.len())?;
            hf.extend_from_slice(row);
        }
        Self::from_flat(label, r, flat, hf)
    }

    pub fn from_flat(label: &str, r: usize, c: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        check_len(r * r * r, c.len())?;
        check_len(r * r, h.len())?;
        let hm = DMatrix::from_row_slice(r, r, &h);
        let scale = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let asym = (0..r)
            .flat_map(|i| (0..r).map(move |j| (i, j)))
            .fold(0.0f64, |m, (i, j)| m.max((h[i * r + j] - h[j * r + i]).abs()));
        if asym > ACCEPT_TOL * scale.max(1.0) {
            return Err(Error::InvalidSpec(format!("metric h is not symmetric (defect {asym:e})")));
        }
        let inv = hm
            .clone()
            .try_inverse()
            .filter(|_| hm.determinant().abs() > 1e-12 * scale.powi(r as i32).max(1e-300))
            .ok_or_else(|| Error::InvalidSpec("metric h is singular".into()))?;
        let h_inv = (0..r * r).map(|k| inv[(k / r, k % r)]).collect();
        Ok(Self { label: label.to_string(), r, c, h, h_inv })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(s)?;
        Self::try_from(doc)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SpecDoc::from(self.clone())).expect("spec serializes")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    /// `c^k_{ij}`.
    #[inline]
    pub fn c(&self, k: usize, i: usize, j: usize) -> f64 {
        self.c[(k * self.r + i) * self.r + j]
    }

    #[inline]
    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.r + j]
    }

    #[inline]
    pub fn h_inv(&self, i: usize, j: usize) -> f64 {
        self.h_inv[i * self.r + j]
    }

    pub fn with_metric(&self, h: Vec<Vec<f64>>) -> Result<Self> {
        let r = self.r;
        let c = (0..r)
            .map(|k| (0..r).map(|i| (0..r).map(|j| self.c(k, i, j)).collect()).collect())
            .collect();
        Self::new(&self.label, c, h)
    }

    /// Returns a copy with `c^k_{ij}` replaced.
    pub fn with_constant(&self, k: usize, i: usize, j: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.c[(k * self.r + i) * self.r + j] = value;
        out
    }

    pub fn is_abelian(&self) -> bool {
        self.c.iter().all(|&x| x == 0.0)
    }

    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.r, x.len())?;
        check_len(self.r, y.len())?;
        let r = self.r;
        let mut out = vec![0.0; r];
        for k in 0..r {
            let mut s = 0.0;
            for i in 0..r {
                for j in 0..r {
                    s += self.c(k, i, j) * x[i] * y[j];
                }
            }
            out[k] = s;
        }
        Ok(out)
    }

    pub fn ad_star(&self, x: &[f64], l: &[f64]) -> Result<Vec<f64>> {
        check_len(self.r, x.len())?;
        check_len(self.r, l.len())?;
        let r = self.r;
        let mut out = vec![0.0; r];
        for j in 0..r {
            let mut s = 0.0;
            for k in 0..r {
                for i in 0..r {
                    s += l[k] * self.c(k, i, j) * x[i];
                }
            }
            out[j] = s;
        }
        Ok(out)
    }

    /// `h_*`: vector to covector.
    pub fn metric_lower(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.r, xi.len())?;
        Ok((0..self.r).map(|i| (0..self.r).map(|j| self.h(i, j) * xi[j]).sum()).collect())
    }

    /// `h^*`: covector to vector.
    pub fn metric_raise(&self, l: &[f64]) -> Result<Vec<f64>> {
        check_len(self.r, l.len())?;
        Ok((0..self.r).map(|i| (0..self.r).map(|j| self.h_inv(i, j) * l[j]).sum()).collect())
    }

    /// `tr(ad_{t_i}) = Σ_j c^j_{ij}`.
    pub fn unimodularity_defect(&self) -> Vec<f64> {
        (0..self.r).map(|i| (0..self.r).map(|j| self.c(j, i, j)).sum()).collect()
    }

    pub fn is_unimodular(&self) -> bool {
        self.unimodularity_defect().iter().all(|x| x.abs() <= ACCEPT_TOL)
    }

    pub fn validate(&self) -> SpecDiagnostics {
        let r = self.r;
        let mut antisymmetry = 0.0f64;
        let mut jacobi = 0.0f64;
        let mut ad_invariance = 0.0f64;
        for k in 0..r {
            for i in 0..r {
                for j in 0..r {
                    antisymmetry = antisymmetry.max((self.c(k, i, j) + self.c(k, j, i)).abs());
                }
            }
        }
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    for l in 0..r {
                        let mut s = 0.0;
                        for m in 0..r {
                            s += self.c(m, i, j) * self.c(l, m, k)
                                + self.c(m, j, k) * self.c(l, m, i)
                                + self.c(m, k, i) * self.c(l, m, j);
                        }
                        jacobi = jacobi.max(s.abs());
                    }
                }
            }
        }
        // h([t_x, t_y], t_z) + h(t_y, [t_x, t_z])
        for x in 0..r {
            for y in 0..r {
                for z in 0..r {
                    let mut s = 0.0;
                    for m in 0..r {
                        s += self.c(m, x, y) * self.h(m, z) + self.h(y, m) * self.c(m, x, z);
                    }
                    ad_invariance = ad_invariance.max(s.abs());
                }
            }
        }
        let mut failed = Vec::new();
        if antisymmetry > ACCEPT_TOL {
            failed.push("antisymmetry".to_string());
        }
        if jacobi > ACCEPT_TOL {
            failed.push("jacobi".to_string());
        }
        if ad_invariance > ACCEPT_TOL {
            failed.push("ad_invariance".to_string());
        }
        SpecDiagnostics { antisymmetry, jacobi, ad_invariance, accepted: failed.is_empty(), failed }
    }

    pub fn u1() -> Self {
        let i = Complex64::new(0.0, 1.0);
        from_matrix_basis("u1", &[DMatrix::from_element(1, 1, i)])
    }

    /// `t_i = −iσ_i/2`, so that `c^k_{ij} = ε_{ijk}`.
    pub fn su2() -> Self {
        from_matrix_basis("su2", &su2_matrices())
    }

    pub fn u1_su2() -> Self {
        let mut basis = Vec::with_capacity(4);
        let mut t0 = DMatrix::zeros(3, 3);
        t0[(0, 0)] = Complex64::new(0.0, 1.0);
        basis.push(t0);
        for s in su2_matrices() {
            let mut t = DMatrix::zeros(3, 3);
            t.view_mut((1, 1), (2, 2)).copy_from(&s);
            basis.push(t);
        }
        from_matrix_basis("u1+su2", &basis)
    }

    /// The non-unimodular control `[t₁, t₂] = t₂`.
    pub fn aff1() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let mut t1 = DMatrix::zeros(2, 2);
        t1[(0, 0)] = one;
        let mut t2 = DMatrix::zeros(2, 2);
        t2[(0, 1)] = one;
        from_matrix_basis("aff1", &[t1, t2])
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "u1" => Some(Self::u1()),
            "su2" => Some(Self::su2()),
            "u1+su2" | "u1_su2" => Some(Self::u1_su2()),
            "aff1" => Some(Self::aff1()),
            _ => None,
        }
    }
}

pub fn su2_matrices() -> Vec<DMatrix<Complex64>> {
    let z = Complex64::new(0.0, 0.0);
    let h = Complex64::new(0.5, 0.0);
    let ih = Complex64::new(0.0, 0.5);
    vec![
        DMatrix::from_row_slice(2, 2, &[z, -ih, -ih, z]),
        DMatrix::from_row_slice(2, 2, &[z, -h, h, z]),
        DMatrix::from_row_slice(2, 2, &[-ih, z, z, ih]),
    ]
}

/// Decomposes `X` on a real basis of matrices in the real inner product
/// `Re tr(A† B)`.
pub fn decompose(basis: &[DMatrix<Complex64>], x: &DMatrix<Complex64>) -> Vec<f64> {
    let r = basis.len();
    let ip = |a: &DMatrix<Complex64>, b: &DMatrix<Complex64>| (a.adjoint() * b).trace().re;
    let gram = DMatrix::from_fn(r, r, |i, j| ip(&basis[i], &basis[j]));
    let rhs = nalgebra::DVector::from_fn(r, |i, _| ip(&basis[i], x));
    let sol = gram.lu().solve(&rhs).expect("matrix basis is linearly independent");
    sol.iter().copied().collect()
}

/// Structure constants of the real span of `basis` computed from commutators.
pub fn structure_constants_from_matrices(basis: &[DMatrix<Complex64>]) -> Vec<f64> {
    let r = basis.len();
    let mut c = vec![0.0; r * r * r];
    for i in 0..r {
        for j in 0..r {
            let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
            for (k, v) in decompose(basis, &comm).into_iter().enumerate() {
                c[(k * r + i) * r + j] = snap(v);
            }
        }
    }
    c
}

fn snap(v: f64) -> f64 {
    let q = (v * 1024.0).round() / 1024.0;
    if (v - q).abs() < 1e-13 {
        q
    } else {
        v
    }
}

fn from_matrix_basis(label: &str, basis: &[DMatrix<Complex64>]) -> LieAlgebraSpec {
    let r = basis.len();
    let c = structure_constants_from_matrices(basis);
    let h = (0..r * r).map(|k| if k / r == k % r { 1.0 } else { 0.0 }).collect();
    LieAlgebraSpec::from_flat(label, r, c, h).expect("builtin spec is well formed")
}
