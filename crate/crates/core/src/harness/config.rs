//! JSON configuration shared by the library entry points and the CLI.
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::report::Method;
use crate::bases::BasisKind;
use crate::error::{Error, Result};
use crate::hyper::SeedRule;
use crate::mesh_fom::{BurgersConstants, FomProblem, NewtonOptions, ParamDomain, ProblemKind, StructuredMesh};
use crate::sqp::SqpOptions;
use crate::training::TrainingPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemName {
    Heat,
    Burgers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ProblemName,
    pub nx: usize,
    pub ny: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_box: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<BurgersConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_domain: Option<ParamDomain>,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<FomProblem> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config("meshes need at least 2 cells per axis".into()));
        }
        let base = match self.problem {
            ProblemName::Heat => FomProblem::heat(self.nx, self.ny),
            ProblemName::Burgers => FomProblem::burgers(self.nx, self.ny),
        };
        let domain_box = self.domain_box.unwrap_or(base.mesh.domain_box);
        if domain_box.iter().any(|r| !(r[1] > r[0])) {
            return Err(Error::Config("domain box bounds must be increasing".into()));
        }
        let param_domain = self.param_domain.unwrap_or(base.param_domain);
        if (0..2).any(|k| !(param_domain.hi[k] >= param_domain.lo[k])) {
            return Err(Error::Config("parameter domain bounds must be ordered".into()));
        }
        if self.constants.is_some() && base.kind != ProblemKind::BurgersFd {
            return Err(Error::Config("constants apply to the burgers problem only".into()));
        }
        Ok(FomProblem::new(
            base.kind,
            StructuredMesh::new(self.nx, self.ny, domain_box, base.mesh.dofs_per_node),
            self.constants.unwrap_or(base.burgers),
            param_domain,
        ))
    }
}

/// Port compatibility: `"strong"` or a number of weak constraints per port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintSpec {
    Strong,
    Weak(usize),
}

impl ConstraintSpec {
    pub fn label(self) -> &'static str {
        match self {
            ConstraintSpec::Strong => "strong",
            ConstraintSpec::Weak(_) => "weak",
        }
    }

    pub fn n_c(self) -> usize {
        match self {
            ConstraintSpec::Strong => 0,
            ConstraintSpec::Weak(n) => n,
        }
    }
}

impl Serialize for ConstraintSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ConstraintSpec::Strong => s.serialize_str("strong"),
            ConstraintSpec::Weak(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ConstraintSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Count(usize),
        }
        match Raw::deserialize(d)? {
            Raw::Name(s) if s == "strong" => Ok(ConstraintSpec::Strong),
            Raw::Count(n) if n > 0 => Ok(ConstraintSpec::Weak(n)),
            _ => Err(serde::de::Error::custom(
                "constraint must be \"strong\" or a positive count per port",
            )),
        }
    }
}

fn default_ratio() -> f64 {
    2.0
}

fn default_upsilon_res() -> f64 {
    1e-12
}

fn default_seed_rule() -> SeedRule {
    SeedRule::InterfaceNodes
}

/// One online configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub method: Method,
    pub basis: BasisKind,
    pub constraint: ConstraintSpec,
    pub upsilon_state: f64,
    pub upsilon_bnd: f64,
    #[serde(default = "default_upsilon_res")]
    pub upsilon_res: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_seed_rule")]
    pub seed_rule: SeedRule,
}

fn default_upsilon_res_grid() -> Vec<f64> {
    vec![default_upsilon_res()]
}

fn default_ratio_grid() -> Vec<f64> {
    vec![default_ratio()]
}

fn default_weak_seeds() -> usize {
    5
}

fn default_repeats() -> usize {
    1
}

/// Parameter-study grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyGrid {
    pub methods: Vec<Method>,
    pub basis_kinds: Vec<BasisKind>,
    pub upsilon_state: Vec<f64>,
    pub upsilon_bnd: Vec<f64>,
    #[serde(default = "default_upsilon_res_grid")]
    pub upsilon_res: Vec<f64>,
    #[serde(default = "default_ratio_grid")]
    pub ratios: Vec<f64>,
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default = "default_weak_seeds")]
    pub weak_seeds: usize,
    #[serde(default = "default_repeats")]
    pub timing_repeats: usize,
    #[serde(default = "default_seed_rule")]
    pub seed_rule: SeedRule,
}

/// Hyper-reduction settings used by `build-hyper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSpec {
    pub method: Method,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_upsilon_res")]
    pub upsilon_res: f64,
    #[serde(default = "default_seed_rule")]
    pub seed_rule: SeedRule,
}

/// The full configuration document; each entry point reads the sections it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingPlan>,
    /// Snapshot directory written by `train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<HyperSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqp: Option<SqpOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T> {
        field
            .as_ref()
            .ok_or_else(|| Error::Config(format!("missing \"{name}\" section")))
    }
}
