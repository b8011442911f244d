//! Least-squares solution of the HVDW system and the emergent-equivariance
//! experiment.
//!
//! The objective is
//!
//! ```text
//! Φ(x) = ½ |R(x)|² + ½ w² |Lor(η)|² + ½ w² |Π p^{a·}|²
//! ```
//!
//! with `R` the stacked residuals, `Lor` the Lorenz-type residual and `Π`
//! the projection onto fiber-divergence-free fields. All squared norms carry
//! the cell volume.

use crate::dynamics::{
    action, extract_base_field, hvdw_residuals, jacobian_apply, jacobian_transpose_apply, legendre_momentum,
    residual_vec, yang_mills_residual, StateVec,
};
use crate::error::{Error, Result};
use crate::fiber::{FiberBasis, Group, Mode, C64};
use crate::field::{
    curvature, equivariance_defect, fiber_divergence_average, equivariant_embed, BaseField, BaseManifoldSpec,
    ConnectionField, Lattice, MomentumField, Setting,
};
use crate::gauge::{band_limited_field, GaugeFixer};
use crate::lie::LieAlgebraSpec;
use crate::precond::BlockPreconditioner;
use crate::rng::{seeded, sym, SeedRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GradientFlow,
    GaussNewton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backtracking {
    pub shrink: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self { shrink: 0.5, armijo: 1e-4, max_halvings: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub method: Method,
    pub max_iterations: usize,
    /// Bound on the physical residual `|R|` (L² over all components).
    pub tolerance: f64,
    pub backtracking: Backtracking,
    /// Weight `w` of the gauge-fixing penalties.
    pub gauge_penalty: f64,
    /// Inner (P)CG iterations per Gauss–Newton step.
    pub cg_iterations: usize,
    /// Relative decrease of the normal-equation residual ending an inner solve.
    pub cg_tolerance: f64,
    /// Initial gradient-flow step.
    pub flow_step: f64,
    /// Precondition Gauss–Newton steps with the Fourier blocks of the
    /// linearization at zero.
    pub preconditioner: bool,
    /// Relative shift `μ` regularizing the preconditioner blocks.
    pub preconditioner_shift: f64,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: Method::GaussNewton,
            max_iterations: 60,
            tolerance: 1e-10,
            backtracking: Backtracking::default(),
            gauge_penalty: 0.1,
            cg_iterations: 100,
            cg_tolerance: 1e-3,
            flow_step: 0.1,
            preconditioner: true,
            preconditioner_shift: 1e-3,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        let b = &self.backtracking;
        if !(b.shrink > 0.0 && b.shrink < 1.0) || !(b.armijo >= 0.0 && b.armijo < 1.0) {
            return Err(Error::Config("backtracking needs 0 < shrink < 1 and 0 ≤ armijo < 1".into()));
        }
        if !(self.gauge_penalty >= 0.0) || !(self.flow_step > 0.0) || !(self.preconditioner_shift > 0.0) {
            return Err(Error::Config("penalty must be nonnegative and flow step positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub total: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub lorenz: f64,
    pub dual: f64,
    pub equivariance_defect: f64,
    pub action: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    /// Why the iteration stopped.
    pub stop: String,
    pub eta: ConnectionField,
    pub p: MomentumField,
}

/// Residuals of the penalized system.
struct Augmented {
    r: StateVec,
    lorenz: BaseField,
    dual: Lattice,
}

struct Problem<'a> {
    s: &'a Arc<Setting>,
    fixer: GaugeFixer,
    w: f64,
    vol: f64,
}

impl<'a> Problem<'a> {
    fn residual(&self, x: &StateVec) -> Result<Augmented> {
        let eta = ConnectionField { setting: self.s.clone(), eta: x.eta.clone() };
        let mut lorenz = self.fixer.lorenz_residual(&eta)?;
        lorenz.data.iter_mut().for_each(|v| *v *= self.w);
        let mut dual = self.fixer.dual_residual(&x.paj);
        dual.scale(self.w);
        Ok(Augmented { r: residual_vec(self.s, x), lorenz, dual })
    }

    fn apply(&self, x: &StateVec, v: &StateVec) -> Result<Augmented> {
        let ve = ConnectionField { setting: self.s.clone(), eta: v.eta.clone() };
        let mut lorenz = self.fixer.lorenz_residual(&ve)?;
        lorenz.data.iter_mut().for_each(|y| *y *= self.w);
        let mut dual = self.fixer.dual_residual(&v.paj);
        dual.scale(self.w);
        Ok(Augmented { r: jacobian_apply(self.s, x, v), lorenz, dual })
    }

    fn transpose(&self, x: &StateVec, y: &Augmented) -> Result<StateVec> {
        let mut out = jacobian_transpose_apply(self.s, x, &y.r);
        let le = self.fixer.lorenz_adjoint(&y.lorenz)?;
        out.eta.axpy(self.w, &le);
        let d = self.fixer.dual_residual(&y.dual);
        out.paj.axpy(self.w, &d);
        Ok(out)
    }

    fn norm2(&self, y: &Augmented) -> f64 {
        let b = &self.s.fiber;
        (y.r.dot(&y.r, b) + y.lorenz.data.iter().map(|v| v * v).sum::<f64>() + y.dual.norm2(b)) * self.vol
    }

    fn objective(&self, y: &Augmented) -> f64 {
        0.5 * self.norm2(y)
    }

    fn entry(&self, x: &StateVec, y: &Augmented, iteration: usize, step: f64) -> TraceEntry {
        let b = &self.s.fiber;
        let (eta, p) = x.clone().into_fields(self.s);
        let defect = equivariance_defect(&eta);
        let w2 = if self.w > 0.0 { 1.0 / (self.w * self.w) } else { 0.0 };
        let lor = y.lorenz.data.iter().map(|v| v * v).sum::<f64>() * self.vol * w2;
        TraceEntry {
            iteration,
            objective: self.objective(y),
            total: (y.r.dot(&y.r, b) * self.vol).sqrt(),
            r1: (y.r.pab.norm2(b) * self.vol).sqrt(),
            r2: (y.r.paj.norm2(b) * self.vol).sqrt(),
            r3: (y.r.eta.norm2(b) * self.vol).sqrt(),
            lorenz: lor.sqrt(),
            dual: (y.dual.norm2(b) * self.vol * w2).sqrt(),
            equivariance_defect: (defect.norm2(b) * self.vol).sqrt(),
            action: action(&eta, &p),
            step,
        }
    }

    /// Least-squares `min |A v + y|` by CGLS, starting from `v = 0`.
    fn cgls(&self, x: &StateVec, y: &Augmented, iters: usize, tol: f64) -> Result<StateVec> {
        let b = &self.s.fiber;
        let mut v = StateVec::zeros(self.s);
        // residual of the normal equations: s = −Aᵀ(A v + y)
        let mut gy = self.transpose(x, y)?;
        gy.scale(-1.0);
        let mut sres = gy;
        let mut d = sres.clone();
        let mut gamma = sres.dot(&sres, b);
        let g0 = gamma;
        if g0 == 0.0 {
            return Ok(v);
        }
        let mut q = self.apply(x, &d)?;
        for _ in 0..iters {
            let qq = self.norm2(&q) / self.vol;
            if qq <= 0.0 {
                break;
            }
            let alpha = gamma / qq;
            v.axpy(alpha, &d);
            // s ← s − α Aᵀ q
            let atq = self.transpose(x, &q)?;
            sres.axpy(-alpha, &atq);
            let gnew = sres.dot(&sres, b);
            if gnew <= tol * tol * g0 {
                break;
            }
            let beta = gnew / gamma;
            gamma = gnew;
            d.scale(beta);
            d.axpy(1.0, &sres);
            q = self.apply(x, &d)?;
        }
        v.realify(b);
        Ok(v)
    }

    /// Preconditioned CG on the normal equations `AᵀA v = −Aᵀy`.
    fn pcg(&self, x: &StateVec, y: &Augmented, m: &BlockPreconditioner, iters: usize, tol: f64) -> Result<StateVec> {
        let b = &self.s.fiber;
        let mut v = StateVec::zeros(self.s);
        let mut res = self.transpose(x, y)?;
        res.scale(-1.0);
        let r0 = res.dot(&res, b);
        if r0 == 0.0 {
            return Ok(v);
        }
        let mut z = m.apply(&res);
        let mut d = z.clone();
        let mut rz = res.dot(&z, b);
        for _ in 0..iters {
            let q = self.apply(x, &d)?;
            let qq = self.norm2(&q) / self.vol;
            if !(qq > 0.0) || !(rz > 0.0) {
                break;
            }
            let alpha = rz / qq;
            v.axpy(alpha, &d);
            res.axpy(-alpha, &self.transpose(x, &q)?);
            if res.dot(&res, b) <= tol * tol * r0 {
                break;
            }
            z = m.apply(&res);
            let rz_new = res.dot(&z, b);
            d.scale(rz_new / rz);
            d.axpy(1.0, &z);
            rz = rz_new;
        }
        v.realify(b);
        Ok(v)
    }

    fn gradient(&self, x: &StateVec, y: &Augmented) -> Result<StateVec> {
        let mut g = self.transpose(x, y)?;
        g.scale(self.vol);
        Ok(g)
    }
}

fn require_euclidean(base: &BaseManifoldSpec) -> Result<()> {
    if base.metric.iter().any(|&g| g <= 0.0) {
        return Err(Error::Unsupported("the solver needs a Euclidean signature".into()));
    }
    Ok(())
}

/// Gradient of `½|R|²` with the cell volume, without penalties.
pub fn residual_gradient(eta: &ConnectionField, p: &MomentumField) -> StateVec {
    let s = &eta.setting;
    let x = StateVec::from_fields(eta, p);
    let r = residual_vec(s, &x);
    let mut g = jacobian_transpose_apply(s, &x, &r);
    g.scale(s.base.cell_volume());
    g
}

/// Minimizes the penalized squared residual from `(η, p)`.
pub fn solve_hvdw(eta: &ConnectionField, p: &MomentumField, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let s = &eta.setting;
    require_euclidean(&s.base)?;
    let prob = Problem { s, fixer: GaugeFixer::new(s)?, w: opts.gauge_penalty, vol: s.base.cell_volume() };
    let b = &s.fiber;
    let mut x = StateVec::from_fields(eta, p);
    x.realify(b);
    let mut y = prob.residual(&x)?;
    let mut trace = vec![prob.entry(&x, &y, 0, 0.0)];
    let mut flow_step = opts.flow_step;
    let mut stop = "max iterations".to_string();
    let mut converged = trace[0].total <= opts.tolerance;
    if converged {
        stop = "tolerance".into();
    }
    let prec = match (opts.method, opts.preconditioner) {
        (Method::GaussNewton, true) if !converged => {
            Some(BlockPreconditioner::new(s, &prob.fixer, prob.w, opts.preconditioner_shift)?)
        }
        _ => None,
    };
    let mut it = 0;
    while !converged && it < opts.max_iterations {
        it += 1;
        let f0 = prob.objective(&y);
        let g = prob.gradient(&x, &y)?;
        let (dir, mut t) = match opts.method {
            Method::GaussNewton => match &prec {
                Some(m) => (prob.pcg(&x, &y, m, opts.cg_iterations, opts.cg_tolerance)?, 1.0),
                None => (prob.cgls(&x, &y, opts.cg_iterations, opts.cg_tolerance)?, 1.0),
            },
            Method::GradientFlow => {
                let mut d = g.clone();
                d.scale(-1.0);
                (d, flow_step)
            }
        };
        let slope = g.dot(&dir, b);
        if !(slope < 0.0) {
            stop = "no descent direction".into();
            break;
        }
        let mut accepted = None;
        for _ in 0..=opts.backtracking.max_halvings {
            let mut xt = x.clone();
            xt.axpy(t, &dir);
            xt.realify(b);
            let yt = prob.residual(&xt)?;
            let ft = prob.objective(&yt);
            if ft <= f0 + opts.backtracking.armijo * t * slope && ft < f0 {
                accepted = Some((xt, yt));
                break;
            }
            t *= opts.backtracking.shrink;
        }
        let Some((xn, yn)) = accepted else {
            stop = "line search failed".into();
            break;
        };
        if opts.method == Method::GradientFlow {
            flow_step = (t * 2.0).min(1e6);
        }
        x = xn;
        y = yn;
        let e = prob.entry(&x, &y, it, t);
        converged = e.total <= opts.tolerance;
        trace.push(e);
        if converged {
            stop = "tolerance".into();
        }
    }
    let (eta, p) = x.into_fields(s);
    Ok(SolveReport { trace, converged, stop, eta, p })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FiberGroup {
    #[serde(rename = "u1")]
    U1,
    #[serde(rename = "su2")]
    SU2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    pub group: FiberGroup,
    /// `K` for U(1), `j_max` for SU(2).
    pub truncation: f64,
}

impl FiberConfig {
    pub fn basis(&self) -> Result<Arc<FiberBasis>> {
        match self.group {
            FiberGroup::U1 => {
                if self.truncation < 0.0 || self.truncation.fract() != 0.0 {
                    return Err(Error::Config("U1 truncation must be a nonnegative integer".into()));
                }
                Ok(FiberBasis::u1(self.truncation as u32))
            }
            FiberGroup::SU2 => FiberBasis::su2(self.truncation),
        }
    }
}

/// Seeded initial data for the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitRecipe {
    /// Amplitude of each plane wave in `A`.
    pub base_amplitude: f64,
    pub base_kmax: i32,
    pub waves: usize,
    /// Amplitude of the non-equivariant fiber modes added to `η`.
    pub fiber_perturbation: f64,
    /// Amplitude of the initial `p^{aj}`.
    pub momentum_amplitude: f64,
    /// Start `p^{ab}` at the Legendre momentum of the initial `η`.
    pub legendre: bool,
}

impl Default for InitRecipe {
    fn default() -> Self {
        Self { base_amplitude: 0.2, base_kmax: 1, waves: 3, fiber_perturbation: 0.1, momentum_amplitude: 0.05, legendre: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algebra: LieAlgebraSpec,
    pub fiber: FiberConfig,
    pub base: BaseManifoldSpec,
    #[serde(default)]
    pub init: InitRecipe,
    #[serde(default)]
    pub solve: SolveOptions,
    pub seeds: Vec<u64>,
    /// Bound on the equivariance defect and Yang–Mills residual of a
    /// converged run.
    #[serde(default = "default_bound")]
    pub bound: f64,
}

fn default_bound() -> f64 {
    1e-6
}

impl ExperimentConfig {
    pub fn setting(&self) -> Result<Arc<Setting>> {
        Setting::new(self.algebra.clone(), self.fiber.basis()?, self.base.clone())
    }

    /// Refuses inputs outside the Theorem's hypotheses.
    pub fn check(&self) -> Result<()> {
        if !self.algebra.is_unimodular() {
            return Err(Error::NonUnimodular(self.algebra.label().to_string()));
        }
        let diag = self.algebra.validate();
        if !diag.accepted {
            return Err(Error::InvalidSpec(format!("algebra fails {}", diag.failed.join(", "))));
        }
        require_euclidean(&self.base)?;
        self.solve.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        Ok(())
    }
}

/// Builds the seeded non-equivariant initial state.
pub fn initial_state(s: &Arc<Setting>, recipe: &InitRecipe, rng: &mut SeedRng) -> Result<(ConnectionField, MomentumField)> {
    let (n, r) = (s.n(), s.r());
    let mut a = band_limited_field(s, rng, n * r, recipe.base_amplitude, recipe.base_kmax, recipe.waves);
    // mean-free A
    for c in 0..n * r {
        let mean = (0..s.nsites()).map(|i| a.at(i)[c]).sum::<f64>() / s.nsites() as f64;
        (0..s.nsites()).for_each(|i| a.at_mut(i)[c] -= mean);
    }
    let mut eta = equivariant_embed(s, &a)?;
    perturb(s, &mut eta.eta, rng, recipe.fiber_perturbation, true);
    let mut p = if recipe.legendre { legendre_momentum(&curvature(&eta)) } else { MomentumField::zero(s) };
    perturb(s, &mut p.paj, rng, recipe.momentum_amplitude, false);
    Ok((eta, p))
}

/// Adds seeded noise to every nonconstant fiber mode (all modes if `!skip_constant`).
fn perturb(s: &Setting, l: &mut Lattice, rng: &mut SeedRng, amp: f64, skip_constant: bool) {
    if amp == 0.0 {
        return;
    }
    let modes = s.fiber.modes().to_vec();
    for site in 0..l.nsites {
        for c in 0..l.ncomp {
            for (mu, m) in modes.iter().enumerate() {
                let constant = matches!(m, Mode::Fourier(0) | Mode::Wigner(0, 0, 0));
                if skip_constant && constant {
                    continue;
                }
                l.at_mut(site, c)[mu] += C64::new(sym(rng, amp), sym(rng, amp));
            }
        }
    }
    l.realify(&s.fiber);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub converged: bool,
    pub stop: String,
    pub iterations: usize,
    pub final_total: f64,
    /// Largest `L²(G)` norm of a component of `E_{a,j}`.
    pub equivariance_defect: f64,
    pub yang_mills_l2: f64,
    pub yang_mills_linf: f64,
    /// Largest `|∫_G Σ_j ρ_j p^{aj}|`.
    pub divergence_average: f64,
    /// Extracted `A(x)` at component `a*r + i` per site.
    pub base_field: Vec<f64>,
    pub within_bounds: bool,
    pub trace: Vec<TraceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub algebra: String,
    pub group: FiberGroup,
    pub truncation: f64,
    pub sizes: Vec<usize>,
    pub bound: f64,
    pub runs: Vec<RunRecord>,
    pub converged_fraction: f64,
    /// Every converged run satisfies both bounds.
    pub converged_within_bounds: bool,
}

fn run_seed(s: &Arc<Setting>, cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let mut rng = seeded(seed);
    let (eta0, p0) = initial_state(s, &cfg.init, &mut rng)?;
    let mut opts = cfg.solve.clone();
    opts.seed = seed;
    let rep = solve_hvdw(&eta0, &p0, &opts)?;
    let b = &s.fiber;
    let defect = equivariance_defect(&rep.eta).max_norm(b);
    let a = if s.fiber.group() == Group::U1 || s.fiber.adjoint_matrix().is_some() {
        extract_base_field(&rep.eta)?
    } else {
        BaseField::zeros(s.nsites(), s.n() * s.r())
    };
    let ym = yang_mills_residual(s, &a)?;
    let div = fiber_divergence_average(&s.spec, b, &rep.p.paj)?;
    let last = rep.trace.last().expect("trace has an initial entry");
    let ym_l2 = ym.l2() * s.base.cell_volume().sqrt();
    let ym_linf = ym.max_abs();
    Ok(RunRecord {
        seed,
        converged: rep.converged,
        stop: rep.stop.clone(),
        iterations: last.iteration,
        final_total: last.total,
        equivariance_defect: defect,
        yang_mills_l2: ym_l2,
        yang_mills_linf: ym_linf,
        divergence_average: div.iter().map(|z| z.norm()).fold(0.0, f64::max),
        base_field: a.data,
        within_bounds: defect <= cfg.bound && ym_linf <= cfg.bound,
        trace: rep.trace,
    })
}

/// Solves from every seed in parallel and reports the Theorem's observables.
pub fn emergent_equivariance_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.check()?;
    let s = cfg.setting()?;
    let runs: Vec<RunRecord> = cfg.seeds.par_iter().map(|&seed| run_seed(&s, cfg, seed)).collect::<Result<_>>()?;
    let nconv = runs.iter().filter(|r| r.converged).count();
    Ok(ExperimentReport {
        algebra: cfg.algebra.label().to_string(),
        group: cfg.fiber.group.clone(),
        truncation: cfg.fiber.truncation,
        sizes: cfg.base.sizes.clone(),
        bound: cfg.bound,
        converged_within_bounds: runs.iter().filter(|r| r.converged).all(|r| r.within_bounds),
        converged_fraction: nconv as f64 / runs.len() as f64,
        runs,
    })
}

#[derive(Serialize)]
struct JsonLine<'a> {
    seed: u64,
    #[serde(flatten)]
    entry: &'a TraceEntry,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    seed: u64,
    converged: bool,
    stop: &'a str,
    iterations: usize,
    final_total: f64,
    equivariance_defect: f64,
    yang_mills_l2: f64,
    yang_mills_linf: f64,
    divergence_average: f64,
    within_bounds: bool,
}

impl ExperimentReport {
    /// One JSON record per iteration of every run.
    pub fn write_trace_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for run in &self.runs {
            for entry in &run.trace {
                serde_json::to_writer(&mut w, &JsonLine { seed: run.seed, entry })?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// One CSV row per run.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.runs {
            out.serialize(CsvRow {
                seed: r.seed,
                converged: r.converged,
                stop: &r.stop,
                iterations: r.iterations,
                final_total: r.final_total,
                equivariance_defect: r.equivariance_defect,
                yang_mills_l2: r.yang_mills_l2,
                yang_mills_linf: r.yang_mills_linf,
                divergence_average: r.divergence_average,
                within_bounds: r.within_bounds,
            })
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `trace.jsonl`, `summary.csv` and `report.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_trace_jsonl(std::io::BufWriter::new(std::fs::File::create(dir.join("trace.jsonl"))?))?;
        self.write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Residual norms of a state; a convenience for reports.
pub fn residual_summary(eta: &ConnectionField, p: &MomentumField) -> Result<crate::dynamics::ResidualNorms> {
    Ok(hvdw_residuals(eta, p, None)?.norms(&eta.setting))
}
