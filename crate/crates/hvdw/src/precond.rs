//! Block preconditioner for the Gauss–Newton normal equations.
//!
//! The penalized residual map linearized at zero is translation invariant on
//! the lattice, hence block diagonal after a discrete Fourier transform in x.
//! Its blocks are read off from impulse responses and grouped by the fiber
//! modes they couple.

use crate::dynamics::{jacobian_apply, StateVec};
use crate::error::{Error, Result};
use crate::fiber::C64;
use crate::field::Setting;
use crate::gauge::GaugeFixer;
use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);
const PATTERN_TOL: f64 = 1e-13;

/// Per-site layout of unknowns: `η`, then `p^{ab}`, then `p^{aj}`.
struct Layout {
    ne: usize,
    nb: usize,
    nj: usize,
}

impl Layout {
    fn total(&self) -> usize {
        self.ne + self.nb + self.nj
    }

    fn pack(&self, v: &StateVec, nsites: usize) -> Vec<C64> {
        let nu = self.total();
        let mut out = vec![ZERO; nsites * nu];
        for site in 0..nsites {
            let o = &mut out[site * nu..(site + 1) * nu];
            o[..self.ne].copy_from_slice(&v.eta.data[site * self.ne..(site + 1) * self.ne]);
            o[self.ne..self.ne + self.nb].copy_from_slice(&v.pab.data[site * self.nb..(site + 1) * self.nb]);
            o[self.ne + self.nb..].copy_from_slice(&v.paj.data[site * self.nj..(site + 1) * self.nj]);
        }
        out
    }

    fn unpack(&self, data: &[C64], out: &mut StateVec, nsites: usize) {
        let nu = self.total();
        for site in 0..nsites {
            let o = &data[site * nu..(site + 1) * nu];
            out.eta.data[site * self.ne..(site + 1) * self.ne].copy_from_slice(&o[..self.ne]);
            out.pab.data[site * self.nb..(site + 1) * self.nb].copy_from_slice(&o[self.ne..self.ne + self.nb]);
            out.paj.data[site * self.nj..(site + 1) * self.nj].copy_from_slice(&o[self.ne + self.nb..]);
        }
    }
}

struct Block {
    cols: Vec<usize>,
    /// `M(k) = (Aᴴ W_r A + μ W_s)⁻¹ W_s`, row-major, one per wavevector.
    mats: Vec<Vec<C64>>,
}

pub(crate) struct BlockPreconditioner {
    setting: Arc<Setting>,
    layout: Layout,
    blocks: Vec<Block>,
    ffts: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

/// In-place multidimensional DFT of `[site][w]` data over the sites.
fn fft_sites(data: &mut [C64], w: usize, sizes: &[usize], ffts: &[(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)], inverse: bool) {
    let nsites: usize = sizes.iter().product();
    for (a, &na) in sizes.iter().enumerate() {
        let stride: usize = sizes[a + 1..].iter().product();
        let fft = if inverse { &ffts[a].1 } else { &ffts[a].0 };
        let mut line = vec![ZERO; na];
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        for start in (0..nsites).filter(|&st| (st / stride) % na == 0) {
            for c in 0..w {
                for (t, l) in line.iter_mut().enumerate() {
                    *l = data[(start + t * stride) * w + c];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (t, l) in line.iter().enumerate() {
                    data[(start + t * stride) * w + c] = *l;
                }
            }
        }
    }
    if inverse {
        let s = 1.0 / nsites as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

fn find(p: &mut [usize], mut x: usize) -> usize {
    while p[x] != x {
        p[x] = p[p[x]];
        x = p[x];
    }
    x
}

impl BlockPreconditioner {
    pub(crate) fn new(setting: &Arc<Setting>, fixer: &GaugeFixer, w: f64, mu_rel: f64) -> Result<Self> {
        let s = setting;
        let (n, r, nm, nsites) = (s.n(), s.r(), s.nm(), s.nsites());
        let layout = Layout { ne: n * r * nm, nb: s.npairs() * r * nm, nj: n * r * r * nm };
        let nu = layout.total();
        let mut planner = FftPlanner::new();
        let ffts: Vec<_> = s.base.sizes.iter().map(|&m| (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))).collect();
        let zero = StateVec::zeros(s);
        // residual rows per site: R3, R1, R2, Lorenz, dual
        let nrow = layout.total() + r + layout.nj;
        let basis = &s.fiber;
        let mut wr = Vec::with_capacity(nrow);
        let mode_w = |k: usize| basis.weight(k % nm);
        for k in 0..layout.total() {
            wr.push(mode_w(k));
        }
        wr.extend(std::iter::repeat(1.0).take(r));
        for k in 0..layout.nj {
            wr.push(mode_w(k));
        }
        let ws: Vec<f64> = (0..nu).map(mode_w).collect();

        let response = |col: usize| -> Result<Vec<C64>> {
            let mut v = StateVec::zeros(s);
            let mut packed = vec![ZERO; nsites * nu];
            packed[col] = C64::new(1.0, 0.0);
            layout.unpack(&packed, &mut v, nsites);
            let a = jacobian_apply(s, &zero, &v);
            let q = fixer.lorenz_residual_complex(&v.eta)?;
            let d = fixer.dual_residual(&v.paj);
            let ra = layout.pack(&a, nsites);
            let mut out = vec![ZERO; nsites * nrow];
            for site in 0..nsites {
                let o = &mut out[site * nrow..(site + 1) * nrow];
                o[..nu].copy_from_slice(&ra[site * nu..(site + 1) * nu]);
                for i in 0..r {
                    o[nu + i] = q.data[site * r + i] * w;
                }
                for (k, x) in d.data[site * layout.nj..(site + 1) * layout.nj].iter().enumerate() {
                    o[nu + r + k] = x * w;
                }
            }
            Ok(out)
        };

        // columns sharing a residual row end up in one block
        let mut parent: Vec<usize> = (0..nu).collect();
        let mut rows_of: Vec<Vec<usize>> = Vec::with_capacity(nu);
        let mut owner = vec![usize::MAX; nrow];
        for col in 0..nu {
            let h = response(col)?;
            let rows: Vec<usize> = (0..nrow).filter(|&row| (0..nsites).any(|st| h[st * nrow + row].norm() > PATTERN_TOL)).collect();
            for &row in &rows {
                if owner[row] == usize::MAX {
                    owner[row] = col;
                } else {
                    let (a, b) = (find(&mut parent, owner[row]), find(&mut parent, col));
                    parent[a] = b;
                }
            }
            rows_of.push(rows);
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for col in 0..nu {
            let root = find(&mut parent, col);
            groups.entry(root).or_default().push(col);
        }

        // Fourier blocks of the normal operator
        let mut grams = Vec::new();
        let mut diag_sum = 0.0;
        let mut diag_count = 0usize;
        for (_, cols) in groups {
            let mut rows: Vec<usize> = cols.iter().flat_map(|&c| rows_of[c].iter().copied()).collect();
            rows.sort_unstable();
            rows.dedup();
            let (g, nr) = (cols.len(), rows.len());
            // ahat[k][row_local * g + col_local]
            let mut ahat = vec![vec![ZERO; nr * g]; nsites];
            for (cl, &col) in cols.iter().enumerate() {
                let h = response(col)?;
                let mut sub = vec![ZERO; nsites * nr];
                for st in 0..nsites {
                    for (rl, &row) in rows.iter().enumerate() {
                        sub[st * nr + rl] = h[st * nrow + row];
                    }
                }
                fft_sites(&mut sub, nr, &s.base.sizes, &ffts, false);
                for (k, a) in ahat.iter_mut().enumerate() {
                    for rl in 0..nr {
                        a[rl * g + cl] = sub[k * nr + rl];
                    }
                }
            }
            let mut per_k = Vec::with_capacity(nsites);
            for a in &ahat {
                let am = DMatrix::<C64>::from_fn(nr, g, |i, j| a[i * g + j] * wr[rows[i]].sqrt());
                let gram = am.adjoint() * &am;
                for i in 0..g {
                    diag_sum += gram[(i, i)].re / ws[cols[i]];
                    diag_count += 1;
                }
                per_k.push(gram);
            }
            grams.push((cols, per_k));
        }
        let mu = mu_rel * (diag_sum / diag_count.max(1) as f64).max(f64::MIN_POSITIVE);
        let mut blocks = Vec::with_capacity(grams.len());
        for (cols, per_k) in grams {
            let g = cols.len();
            let mut mats = Vec::with_capacity(nsites);
            for mut gram in per_k {
                for (i, &c) in cols.iter().enumerate() {
                    gram[(i, i)] += C64::new(mu * ws[c], 0.0);
                }
                let inv = gram.try_inverse().ok_or_else(|| Error::Config("singular preconditioner block".into()))?;
                mats.push((0..g * g).map(|k| inv[(k / g, k % g)] * ws[cols[k % g]]).collect());
            }
            blocks.push(Block { cols, mats });
        }
        Ok(Self { setting: s.clone(), layout, blocks, ffts })
    }

    pub(crate) fn apply(&self, v: &StateVec) -> StateVec {
        let s = &self.setting;
        let nsites = s.nsites();
        let nu = self.layout.total();
        let mut data = self.layout.pack(v, nsites);
        fft_sites(&mut data, nu, &s.base.sizes, &self.ffts, false);
        let mut out = vec![ZERO; data.len()];
        let mut x = Vec::new();
        for b in &self.blocks {
            let g = b.cols.len();
            for k in 0..nsites {
                x.clear();
                x.extend(b.cols.iter().map(|&c| data[k * nu + c]));
                let m = &b.mats[k];
                for (i, &c) in b.cols.iter().enumerate() {
                    let row = &m[i * g..(i + 1) * g];
                    let mut acc = ZERO;
                    for (p, y) in row.iter().zip(&x) {
                        acc += p * y;
                    }
                    out[k * nu + c] = acc;
                }
            }
        }
        fft_sites(&mut out, nu, &s.base.sizes, &self.ffts, true);
        let mut res = StateVec::zeros(s);
        self.layout.unpack(&out, &mut res, nsites);
        res.realify(&s.fiber);
        res
    }
}
