use crate::config::*;
use crate::CliError;
use hvdw::dynamics::{action, epsilon_from_level_set, hamiltonian_density, lagrangian_density_at, ResidualNorms};
use hvdw::exterior::{verify_identities, IdentityReport};
use hvdw::fiber::{Group, GroupElement, C64};
use hvdw::field::{equivariance_defect, state_snapshot};
use hvdw::gauge::*;
use hvdw::lie::{LieAlgebraSpec, SpecDiagnostics, ACCEPT_TOL};
use hvdw::rng::{seeded, sym};
use hvdw::solver::{emergent_equivariance_experiment, residual_summary, ExperimentConfig, ExperimentReport, RunRecord};
use hvdw::Error;
use serde::Serialize;
use std::path::Path;

/// What a subcommand found: a JSON report and whether its checks passed.
pub struct Finding {
    pub report: serde_json::Value,
    pub passed: bool,
}

fn finding(report: impl Serialize, passed: bool) -> Finding {
    Finding { report: serde_json::to_value(report).expect("report json"), passed }
}

fn write_json(dir: &Path, name: &str, v: &impl Serialize) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), serde_json::to_string_pretty(v).expect("report json") + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct IdentitiesReport {
    algebra: String,
    diagnostics: SpecDiagnostics,
    unimodularity_defect: Vec<f64>,
    assert_unimodular: bool,
    reports: Vec<IdentityReport>,
    passed: bool,
}

pub fn identities(cfg: &IdentitiesConfig, out: Option<&Path>) -> Result<Finding, CliError> {
    let spec = &cfg.algebra;
    let diagnostics = spec.validate();
    let reports = cfg.n.iter().map(|&n| verify_identities(spec, n)).collect::<hvdw::Result<Vec<_>>>()?;
    let structure_ok = diagnostics.antisymmetry <= ACCEPT_TOL && diagnostics.jacobi <= ACCEPT_TOL;
    let passed = structure_ok
        && reports.iter().all(|r| r.all_zero)
        && (!cfg.assert_unimodular || spec.is_unimodular());
    let rep = IdentitiesReport {
        algebra: spec.label().to_string(),
        unimodularity_defect: spec.unimodularity_defect(),
        diagnostics,
        assert_unimodular: cfg.assert_unimodular,
        reports,
        passed,
    };
    if let Some(dir) = out {
        write_json(dir, "identities.json", &rep)?;
    }
    Ok(finding(rep, passed))
}

pub fn identities_for(name: &str, n: Vec<usize>, assert_unimodular: bool, dir: &Path) -> Result<IdentitiesConfig, CliError> {
    let value = algebra_value(name, dir)?;
    let algebra: LieAlgebraSpec = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("algebra `{name}`: {e}")))?;
    Ok(IdentitiesConfig { algebra, n: if n.is_empty() { vec![2, 3] } else { n }, assert_unimodular })
}

#[derive(Serialize)]
struct GoldenComparison {
    max_deviation: f64,
    tolerance: f64,
    matches: bool,
}

#[derive(Serialize)]
struct ResidualsReport {
    algebra: String,
    group: Group,
    truncation: i32,
    sizes: Vec<usize>,
    residuals: ResidualNorms,
    equivariance_defect: f64,
    action: f64,
    /// Absent for non-unimodular algebras.
    gauge_fixing: Option<GaugeFixingReport>,
    golden: Option<GoldenComparison>,
}

fn norms_vec(n: &ResidualNorms) -> [f64; 8] {
    [n.r1_l2, n.r2_l2, n.r3_l2, n.r1_linf, n.r2_linf, n.r3_linf, n.levelset_linf, n.total_l2]
}

pub fn residuals(cfg: &ResidualsConfig, dir: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Finding, CliError> {
    let (eta, p) = cfg.state.build(dir, seed)?;
    let s = &eta.setting;
    let norms = residual_summary(&eta, &p)?;
    let gauge_fixing = match GaugeFixer::new(s) {
        Ok(g) => Some(g.report(&eta, &p)?),
        Err(Error::NonUnimodular(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let golden = match &cfg.golden {
        Some(path) => {
            let expect = load_golden(&dir.join(path))?;
            let max_deviation =
                norms_vec(&norms).iter().zip(norms_vec(&expect)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Some(GoldenComparison { max_deviation, tolerance: cfg.golden_tolerance, matches: max_deviation <= cfg.golden_tolerance })
        }
        None => None,
    };
    let passed = golden.as_ref().is_none_or(|g| g.matches);
    let rep = ResidualsReport {
        algebra: s.spec.label().to_string(),
        group: s.fiber.group(),
        truncation: s.fiber.truncation(),
        sizes: s.base.sizes.clone(),
        equivariance_defect: equivariance_defect(&eta).max_norm(&s.fiber),
        action: action(&eta, &p),
        residuals: norms.clone(),
        gauge_fixing,
        golden,
    };
    if let Some(dir) = out {
        write_json(dir, "residuals.json", &rep)?;
        write_json(dir, "norms.json", &norms)?;
        std::fs::create_dir_all(dir)?;
        state_snapshot(&eta, &p, serde_json::json!({"kind": "state"})).save(&dir.join("state.snap"))?;
    }
    Ok(finding(rep, passed))
}

#[derive(Serialize)]
struct TransformRecord {
    index: usize,
    lossy: bool,
    lagrangian_gap: f64,
    action_gap: f64,
    residual_change: f64,
}

#[derive(Serialize)]
struct DualRecord {
    constraint_linf: f64,
    hamiltonian_exact: bool,
    action_gap: f64,
}

#[derive(Serialize)]
struct GaugeReport {
    algebra: String,
    group: Group,
    tolerance: f64,
    transforms: Vec<TransformRecord>,
    max_lagrangian_gap: f64,
    max_action_gap: f64,
    dual: Option<DualRecord>,
    passed: bool,
}

pub fn gauge_check(cfg: &GaugeCheckConfig, dir: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Finding, CliError> {
    let (eta, p) = cfg.state.build(dir, None)?;
    let s = &eta.setting;
    let g = &cfg.gauge;
    let mut rng = seeded(seed.unwrap_or(g.seed));
    let s0 = action(&eta, &p);
    let r0 = residual_summary(&eta, &p)?.total_l2;
    let mut transforms = Vec::with_capacity(g.transforms);
    for index in 0..g.transforms {
        let f = GaugeElement::random(s, &mut rng, g.amplitude, g.k_max)?;
        let (e2, p2, lossy) = gauge_transform(&eta, &p, &f, g.strict)?;
        let mut gap = 0.0f64;
        for _ in 0..g.fiber_samples {
            let x = GroupElement::random(s.fiber.group(), &mut rng);
            let l0 = lagrangian_density_at(&eta, &p, &x)?;
            let l1 = lagrangian_density_at(&e2, &p2, &x)?;
            gap = l0.iter().zip(&l1).map(|(a, b)| (a - b).abs()).fold(gap, f64::max);
        }
        transforms.push(TransformRecord {
            index,
            lossy,
            lagrangian_gap: gap,
            action_gap: (action(&e2, &p2) - s0).abs(),
            residual_change: (residual_summary(&e2, &p2)?.total_l2 - r0).abs(),
        });
    }
    let dual = if g.dual {
        let (n, r) = (s.n(), s.r());
        let chi = match s.fiber.group() {
            Group::U1 => DualGaugeElement::u1_constant(s, &band_limited_field(s, &mut rng, n, 0.5, 1, 3))?,
            Group::SU2 => {
                // the seed stays one level below the truncation so χ fits
                let modes = s.fiber.modes();
                let top = modes.iter().map(|m| m.degree()).max().unwrap_or(0);
                let mut seed_lat = s.lattice(n * r * r);
                for (k, z) in seed_lat.data.iter_mut().enumerate() {
                    if top == 0 || modes[k % modes.len()].degree() < top {
                        *z = C64::new(sym(&mut rng, 0.5), sym(&mut rng, 0.5));
                    }
                }
                seed_lat.realify(&s.fiber);
                DualGaugeElement::su2_from_seed(s, &seed_lat)?.0
            }
        };
        let p2 = dual_gauge_shift(&p, &chi)?;
        let eps = epsilon_from_level_set(&p);
        Some(DualRecord {
            constraint_linf: dual_divergence(s, &chi.chi)?.max_norm(&s.fiber),
            hamiltonian_exact: hamiltonian_density(&eps, &p)?.data == hamiltonian_density(&eps, &p2)?.data,
            action_gap: (action(&eta, &p2) - s0).abs(),
        })
    } else {
        None
    };
    let max_lagrangian_gap = transforms.iter().map(|t| t.lagrangian_gap).fold(0.0, f64::max);
    let max_action_gap = transforms.iter().map(|t| t.action_gap).fold(0.0, f64::max);
    let passed = max_lagrangian_gap <= g.tolerance
        && max_action_gap <= g.tolerance
        && dual.as_ref().is_none_or(|d| d.hamiltonian_exact && d.action_gap <= g.tolerance);
    let rep = GaugeReport {
        algebra: s.spec.label().to_string(),
        group: s.fiber.group(),
        tolerance: g.tolerance,
        transforms,
        max_lagrangian_gap,
        max_action_gap,
        dual,
        passed,
    };
    if let Some(dir) = out {
        write_json(dir, "gauge.json", &rep)?;
    }
    Ok(finding(rep, passed))
}

#[derive(Serialize)]
struct Plan<'a> {
    config: &'a ExperimentConfig,
    nsites: usize,
    fiber_modes: usize,
    unknowns_per_state: usize,
    outputs: Vec<String>,
}

/// Run record without its trace, for the console summary.
#[derive(Serialize)]
struct RunLine<'a> {
    seed: u64,
    converged: bool,
    stop: &'a str,
    iterations: usize,
    final_total: f64,
    equivariance_defect: f64,
    yang_mills_linf: f64,
    within_bounds: bool,
}

impl<'a> From<&'a RunRecord> for RunLine<'a> {
    fn from(r: &'a RunRecord) -> Self {
        RunLine {
            seed: r.seed,
            converged: r.converged,
            stop: &r.stop,
            iterations: r.iterations,
            final_total: r.final_total,
            equivariance_defect: r.equivariance_defect,
            yang_mills_linf: r.yang_mills_linf,
            within_bounds: r.within_bounds,
        }
    }
}

#[derive(Serialize)]
struct ExperimentSummary<'a> {
    algebra: &'a str,
    converged_fraction: f64,
    converged_within_bounds: bool,
    runs: Vec<RunLine<'a>>,
}

pub fn experiment(cfg: &ExperimentConfig, out: Option<&Path>, dry_run: bool) -> Result<Finding, CliError> {
    if let Err(e) = cfg.check() {
        return Err(match e {
            Error::NonUnimodular(label) => CliError::Refused(format!(
                "algebra `{label}` has tr ad ≠ 0; emergent equivariance is only established for a compact unimodular structure group"
            )),
            e => e.into(),
        });
    }
    if dry_run {
        let s = cfg.setting()?;
        let per_state = (s.n() * s.r() + s.npairs() * s.r() + s.n() * s.r() * s.r()) * s.nm() * s.nsites();
        let outputs = match out {
            Some(d) => ["trace.jsonl", "summary.csv", "report.json"].iter().map(|f| d.join(f).display().to_string()).collect(),
            None => vec![],
        };
        let plan = Plan { config: cfg, nsites: s.nsites(), fiber_modes: s.nm(), unknowns_per_state: per_state, outputs };
        return Ok(finding(plan, true));
    }
    let rep: ExperimentReport = emergent_equivariance_experiment(cfg)?;
    if let Some(dir) = out {
        rep.write_outputs(dir)?;
    }
    let passed = rep.converged_within_bounds && rep.runs.iter().any(|r| r.converged);
    let summary = ExperimentSummary {
        algebra: &rep.algebra,
        converged_fraction: rep.converged_fraction,
        converged_within_bounds: rep.converged_within_bounds,
        runs: rep.runs.iter().map(RunLine::from).collect(),
    };
    Ok(finding(summary, passed))
}
