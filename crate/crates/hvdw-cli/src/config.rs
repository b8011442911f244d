//! JSON configuration documents.
//!
//! A string in an `algebra` slot names a built-in algebra (`u1`, `su2`,
//! `u1_su2`, `aff1`) or a spec file relative to the config file.

use crate::CliError;
use hvdw::dynamics::ResidualNorms;
use hvdw::field::{state_from_snapshot, BaseManifoldSpec, ConnectionField, MomentumField, Setting, Snapshot};
use hvdw::lie::LieAlgebraSpec;
use hvdw::rng::seeded;
use hvdw::solver::{initial_state, FiberConfig, InitRecipe};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub struct Loaded<T> {
    pub doc: T,
    pub dir: PathBuf,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: malformed JSON: {e}", path.display())))?;
    resolve_algebras(&mut value, &dir)?;
    let doc = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(Loaded { doc, dir })
}

pub fn algebra_value(name: &str, dir: &Path) -> Result<Value, CliError> {
    if let Some(spec) = LieAlgebraSpec::builtin(name) {
        return Ok(serde_json::from_str(&spec.to_json_string()).expect("spec json"));
    }
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("algebra `{}`: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: malformed JSON: {e}", path.display())))
}

fn resolve_algebras(v: &mut Value, dir: &Path) -> Result<(), CliError> {
    match v {
        Value::Object(map) => {
            for (k, x) in map.iter_mut() {
                if k == "algebra" {
                    if let Value::String(name) = x {
                        *x = algebra_value(name, dir)?;
                        continue;
                    }
                }
                resolve_algebras(x, dir)?;
            }
        }
        Value::Array(xs) => {
            for x in xs {
                resolve_algebras(x, dir)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn default_n() -> Vec<usize> {
    vec![2, 3]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub algebra: LieAlgebraSpec,
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    /// Fail unless the algebra is unimodular.
    #[serde(default)]
    pub assert_unimodular: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingConfig {
    pub algebra: LieAlgebraSpec,
    pub fiber: FiberConfig,
    pub base: BaseManifoldSpec,
}

impl SettingConfig {
    pub fn setting(&self) -> hvdw::Result<Arc<Setting>> {
        Setting::new(self.algebra.clone(), self.fiber.basis()?, self.base.clone())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub algebra: LieAlgebraSpec,
    pub fiber: FiberConfig,
    pub base: BaseManifoldSpec,
    #[serde(default)]
    pub init: InitRecipe,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateSource {
    /// A snapshot written by `residuals --out`.
    File(PathBuf),
    /// `η = 0`, `p = 0`.
    Flat(SettingConfig),
    /// The seeded experiment initial state.
    Initial(InitialConfig),
}

impl StateSource {
    pub fn build(&self, dir: &Path, seed: Option<u64>) -> Result<(ConnectionField, MomentumField), CliError> {
        match self {
            StateSource::File(p) => {
                let path = dir.join(p);
                let snap = Snapshot::load(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                Ok(state_from_snapshot(&snap)?)
            }
            StateSource::Flat(c) => {
                let s = c.setting()?;
                Ok((ConnectionField::zero(&s), MomentumField::zero(&s)))
            }
            StateSource::Initial(c) => {
                let s = Setting::new(c.algebra.clone(), c.fiber.basis()?, c.base.clone())?;
                let mut rng = seeded(seed.unwrap_or(c.seed));
                Ok(initial_state(&s, &c.init, &mut rng)?)
            }
        }
    }
}

fn golden_tolerance() -> f64 {
    1e-12
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualsConfig {
    pub state: StateSource,
    /// JSON file holding expected residual norms.
    #[serde(default)]
    pub golden: Option<PathBuf>,
    #[serde(default = "golden_tolerance")]
    pub golden_tolerance: f64,
}

pub fn load_golden(path: &Path) -> Result<ResidualNorms, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeParams {
    pub transforms: usize,
    /// Amplitude and largest wavenumber of the random gauge potential.
    pub amplitude: f64,
    pub k_max: i32,
    pub seed: u64,
    /// Random fiber points at which `L` is compared.
    pub fiber_samples: usize,
    pub tolerance: f64,
    /// Reject transforms whose result leaves the truncation.
    pub strict: bool,
    /// Also check a constraint-satisfying dual shift.
    pub dual: bool,
}

impl Default for GaugeParams {
    fn default() -> Self {
        Self { transforms: 20, amplitude: 0.1, k_max: 1, seed: 0, fiber_samples: 4, tolerance: 1e-10, strict: false, dual: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeCheckConfig {
    pub state: StateSource,
    #[serde(default)]
    pub gauge: GaugeParams,
}
