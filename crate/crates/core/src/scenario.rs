//! Declarative experiment configuration.
//!
//! A scenario is one JSON file: one-particle dimension, kinetic and
//! potential matrices inline as row-major (re, im) pairs, interaction
//! scaling, initial correlations, initial one-particle data (exact or
//! scaling-limit form), truncation orders, time grid, ε ladder, tolerances,
//! and the experiment to dispatch. Validation runs before any computation
//! and reports every violated constraint at once.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::correlations::CorrelationFamily;
use crate::dynamics::{HamiltonianSpec, System};
use crate::hierarchy::{InitialDatum, SeriesTruncation};
use crate::meanfield::ScaledFamily;
use crate::op::{LabeledOperator, MatrixJson, OneParticleSpace};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("could not parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario is invalid:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Which experiment a run dispatches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    Identities,
    HierarchyEquivalence,
    MeanfieldLadder,
    CorrelationPropagation,
    Continuum,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "identities" => Ok(Self::Identities),
            "hierarchy-equivalence" => Ok(Self::HierarchyEquivalence),
            "meanfield-ladder" => Ok(Self::MeanfieldLadder),
            "correlation-propagation" => Ok(Self::CorrelationPropagation),
            "continuum" => Ok(Self::Continuum),
            other => Err(format!("unknown experiment {other:?}")),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Identities => "identities",
            Self::HierarchyEquivalence => "hierarchy-equivalence",
            Self::MeanfieldLadder => "meanfield-ladder",
            Self::CorrelationPropagation => "correlation-propagation",
            Self::Continuum => "continuum",
        };
        write!(f, "{name}")
    }
}

/// Initial wave profile of a continuum run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WaveProfile {
    PlaneWave { mode: i32 },
    Gaussian { sigma: f64 },
}

/// Coupling kernel choice of a continuum run. The pair operator of the
/// cubic coupling is not pinned down by the theory; the default ties it to
/// the delta indicator scaled by `strength`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelChoice {
    Delta { strength: f64 },
    Identity { strength: f64 },
    Projector { sigma: f64, strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuumRun {
    NlsPlaneWave,
    GpDeltaReduction,
    Gp,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ContinuumConfig {
    pub length: f64,
    pub grid_points: usize,
    pub dt: f64,
    pub steps: usize,
    pub profile: WaveProfile,
    pub kernel: KernelChoice,
    pub run: ContinuumRun,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Tolerances {
    /// Budget for the series-vs-integration defect check (added to the
    /// series tail).
    pub defect_budget: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub n_max: usize,
    pub s_max: usize,
}

/// The on-disk shape of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    pub experiment: String,
    pub seed: u64,
    pub dim: usize,
    pub kinetic: MatrixJson,
    pub potential: MatrixJson,
    pub epsilon: f64,
    /// Correlation operators g_n for n = 2, 3, … in order.
    #[serde(default)]
    pub correlations: Vec<MatrixJson>,
    #[serde(default)]
    pub f1_0: Option<MatrixJson>,
    #[serde(default)]
    pub f1_limit: Option<MatrixJson>,
    pub truncation: TruncationConfig,
    pub time: TimeGrid,
    #[serde(default)]
    pub eps_ladder: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub continuum: Option<ContinuumConfig>,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub space: OneParticleSpace,
    pub spec: HamiltonianSpec,
    pub correlations: BTreeMap<usize, LabeledOperator>,
    pub f1_0: Option<LabeledOperator>,
    pub f1_limit: Option<LabeledOperator>,
    pub trunc: SeriesTruncation,
    pub s_max: usize,
    pub t_end: f64,
    pub steps: usize,
    pub eps_ladder: Vec<f64>,
    pub defect_budget: f64,
    pub continuum: Option<ContinuumConfig>,
    hash: String,
}

/// Documented dense-storage ceiling: d^(particles) for the largest space a
/// run touches must stay desk-scale.
pub const MAX_TOTAL_DIMENSION: usize = 4096;

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let canonical = serde_json::to_string(&file).expect("scenario serializes");
        let hash = hex_digest(&canonical);
        let mut violations: Vec<String> = Vec::new();

        let experiment = Experiment::from_str(&file.experiment)
            .map_err(|e| ScenarioError::Invalid(vec![e]))?;

        let space = match OneParticleSpace::new(file.dim) {
            Ok(s) => Some(s),
            Err(e) => {
                violations.push(format!("space: {e}"));
                None
            }
        };

        let kinetic = LabeledOperator::try_from(&file.kinetic)
            .map_err(|e| violations.push(format!("kinetic: {e}")))
            .ok();
        let potential = LabeledOperator::try_from(&file.potential)
            .map_err(|e| violations.push(format!("potential: {e}")))
            .ok();
        if let Some(k) = &kinetic {
            if k.dim() != file.dim || k.labels() != [1] {
                violations.push("kinetic must be a one-particle matrix on label 1".into());
            }
        }
        let spec = match (kinetic, potential) {
            (Some(k), Some(p)) => match HamiltonianSpec::new(k, p, file.epsilon) {
                Ok(s) => Some(s),
                Err(e) => {
                    violations.push(format!("hamiltonian: {e}"));
                    None
                }
            },
            _ => None,
        };

        let mut correlations = BTreeMap::new();
        for (i, m) in file.correlations.iter().enumerate() {
            let order = i + 2;
            match LabeledOperator::try_from(m) {
                Ok(g) => {
                    if g.num_particles() != order || g.dim() != file.dim {
                        violations.push(format!(
                            "correlation g_{order} must act on {order} particles of dimension {}",
                            file.dim
                        ));
                    } else {
                        let dev = g.symmetry_report().max_deviation;
                        if dev > 1e-10 * g.trace_norm().max(1.0) {
                            violations.push(format!(
                                "correlation g_{order} is not permutation-symmetric \
                                 (deviation {dev:.3e})"
                            ));
                        }
                        correlations.insert(order, g);
                    }
                }
                Err(e) => violations.push(format!("correlation g_{order}: {e}")),
            }
        }

        let f1_0 = parse_one_particle(&file.f1_0, "f1_0", file.dim, &mut violations);
        let f1_limit = parse_one_particle(&file.f1_limit, "f1_limit", file.dim, &mut violations);

        if file.truncation.s_max < 1 {
            violations.push("truncation.s_max must be ≥ 1".into());
        }
        if file.truncation.n_max > 3 {
            violations.push("truncation.n_max must be ≤ 3 (generated-operator ceiling)".into());
        }
        let total = file.truncation.s_max + file.truncation.n_max;
        if file.dim.checked_pow(total as u32).unwrap_or(usize::MAX) > MAX_TOTAL_DIMENSION {
            violations.push(format!(
                "dim^(s_max+n_max) = {}^{} exceeds the dense-storage ceiling {MAX_TOTAL_DIMENSION}",
                file.dim, total
            ));
        }
        if !(file.time.t_end > 0.0) {
            violations.push("time.t_end must be positive".into());
        }
        if file.time.steps < 1 {
            violations.push("time.steps must be ≥ 1".into());
        }
        if !file.eps_ladder.is_empty() {
            if file.eps_ladder.iter().any(|&e| !(e > 0.0)) {
                violations.push("eps_ladder entries must be positive".into());
            }
            if file.eps_ladder.windows(2).any(|w| w[0] <= w[1]) {
                violations.push("eps_ladder must be strictly decreasing".into());
            }
        }
        if !(file.epsilon >= 0.0) {
            violations.push("epsilon must be nonnegative".into());
        }

        match experiment {
            Experiment::Identities | Experiment::HierarchyEquivalence => {
                if f1_0.is_none() {
                    violations.push(format!("experiment {experiment} requires f1_0"));
                }
            }
            Experiment::MeanfieldLadder | Experiment::CorrelationPropagation => {
                if f1_limit.is_none() {
                    violations.push(format!("experiment {experiment} requires f1_limit"));
                }
                if file.eps_ladder.is_empty() {
                    violations.push(format!("experiment {experiment} requires eps_ladder"));
                }
                if experiment == Experiment::CorrelationPropagation && file.truncation.s_max < 2 {
                    violations.push("correlation propagation requires s_max ≥ 2".into());
                }
            }
            Experiment::Continuum => {
                if file.continuum.is_none() {
                    violations.push("experiment continuum requires the continuum section".into());
                }
            }
        }

        if let Some(cont) = &file.continuum {
            if !(cont.length > 0.0) {
                violations.push("continuum.length must be positive".into());
            }
            if cont.grid_points < 16 || !cont.grid_points.is_power_of_two() {
                violations.push("continuum.grid_points must be a power of two ≥ 16".into());
            }
            if !(cont.dt > 0.0) {
                violations.push("continuum.dt must be positive".into());
            }
            if cont.steps < 1 {
                violations.push("continuum.steps must be ≥ 1".into());
            }
            let needs_kernel = !matches!(cont.run, ContinuumRun::NlsPlaneWave);
            if needs_kernel && cont.grid_points > 32 {
                violations.push(
                    "dense pair kernels are limited to grids of at most 32 points".into(),
                );
            }
            match cont.profile {
                WaveProfile::Gaussian { sigma } if !(sigma > 0.0) => {
                    violations.push("gaussian profile needs sigma > 0".into());
                }
                _ => {}
            }
        }

        if !violations.is_empty() {
            return Err(ScenarioError::Invalid(violations));
        }

        Ok(Scenario {
            name: file.name,
            experiment,
            seed: file.seed,
            space: space.expect("validated"),
            spec: spec.expect("validated"),
            correlations,
            f1_0,
            f1_limit,
            trunc: SeriesTruncation {
                n_max: file.truncation.n_max,
            },
            s_max: file.truncation.s_max,
            t_end: file.time.t_end,
            steps: file.time.steps,
            eps_ladder: file.eps_ladder,
            defect_budget: file.tolerances.defect_budget.unwrap_or(1e-6),
            continuum: file.continuum,
            hash,
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Correlation family precomputed far enough for every series this
    /// scenario can request.
    pub fn correlation_family(&self) -> CorrelationFamily {
        let max_order = (self.s_max + self.trunc.n_max).max(self.trunc.n_max + 2);
        CorrelationFamily::new(self.dim(), &self.correlations, max_order)
            .expect("validated correlations")
    }

    pub fn system(&self) -> System {
        System::new(self.spec.clone()).expect("validated spec")
    }

    pub fn initial_datum(&self) -> Option<InitialDatum> {
        let f1 = self.f1_0.clone()?;
        Some(InitialDatum::new(f1, self.correlation_family()).expect("validated initial data"))
    }

    pub fn scaled_family(&self) -> Option<ScaledFamily> {
        let f1 = self.f1_limit.clone()?;
        Some(ScaledFamily::new(self.eps_ladder.clone(), f1).expect("validated ladder"))
    }

    /// Apply command-line overrides; the result is re-validated.
    pub fn with_overrides(
        &self,
        file: &ScenarioFile,
        n_max: Option<usize>,
        eps_ladder: Option<Vec<f64>>,
    ) -> Result<Scenario, ScenarioError> {
        let mut file = file.clone();
        if let Some(n) = n_max {
            file.truncation.n_max = n;
        }
        if let Some(ladder) = eps_ladder {
            file.eps_ladder = ladder;
        }
        Scenario::from_file(file)
    }
}

fn parse_one_particle(
    m: &Option<MatrixJson>,
    what: &str,
    dim: usize,
    violations: &mut Vec<String>,
) -> Option<LabeledOperator> {
    let m = m.as_ref()?;
    match LabeledOperator::try_from(m) {
        Ok(op) => {
            if op.num_particles() != 1 || op.dim() != dim {
                violations.push(format!("{what} must be a one-particle matrix"));
                return None;
            }
            if op.hermiticity_deviation() > 1e-10 {
                violations.push(format!("{what} must be Hermitian"));
                return None;
            }
            if op.min_eigenvalue() < -1e-12 {
                violations.push(format!(
                    "{what} must be positive (min eigenvalue {:.3e})",
                    op.min_eigenvalue()
                ));
                return None;
            }
            Some(op)
        }
        Err(e) => {
            violations.push(format!("{what}: {e}"));
            None
        }
    }
}

fn hex_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// The standard scenarios shipped with the workbench; the JSON files under
/// `fixtures/` are generated from these constructors and kept in sync by a
/// test.
pub mod fixtures {
    use super::*;
    use crate::op::C64;
    use crate::probe;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Kinetic term diag(0, 1).
    fn kinetic() -> LabeledOperator {
        LabeledOperator::new(
            2,
            vec![1],
            array![[c(0., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
        )
        .unwrap()
    }

    /// 0.1 × a fixed seeded swap-symmetric Hermitian pair potential.
    fn potential() -> LabeledOperator {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        probe::random_hermitian(2, &[1, 2], &mut rng)
            .symmetrize()
            .scale_re(0.1)
    }

    /// Identity plus a diagonal swap-symmetric perturbation; diagonal so the
    /// initial marginals stay Hermitian for the diagonal one-particle data.
    fn pair_correlation() -> MatrixJson {
        let g2 = LabeledOperator::new(
            2,
            vec![1, 2],
            array![
                [c(1.14, 0.), c(0., 0.), c(0., 0.), c(0., 0.)],
                [c(0., 0.), c(0.94, 0.), c(0., 0.), c(0., 0.)],
                [c(0., 0.), c(0., 0.), c(0.94, 0.), c(0., 0.)],
                [c(0., 0.), c(0., 0.), c(0., 0.), c(1.10, 0.)]
            ],
        )
        .unwrap();
        MatrixJson::from(&g2)
    }

    fn one_particle(norm: f64) -> MatrixJson {
        let f = LabeledOperator::new(
            2,
            vec![1],
            array![[c(0.6, 0.), c(0., 0.)], [c(0., 0.), c(0.4, 0.)]],
        )
        .unwrap()
        .scale_re(norm);
        MatrixJson::from(&f)
    }

    fn base(name: &str, experiment: &str) -> ScenarioFile {
        ScenarioFile {
            name: name.into(),
            experiment: experiment.into(),
            seed: 20260810,
            dim: 2,
            kinetic: MatrixJson::from(&kinetic()),
            potential: MatrixJson::from(&potential()),
            epsilon: 0.2,
            correlations: vec![pair_correlation()],
            f1_0: None,
            f1_limit: None,
            truncation: TruncationConfig { n_max: 2, s_max: 2 },
            time: TimeGrid {
                t_end: 0.5,
                steps: 100,
            },
            eps_ladder: Vec::new(),
            tolerances: Tolerances::default(),
            continuum: None,
        }
    }

    /// Correlated pair data with small one-particle norm; the equivalence
    /// workhorse.
    pub fn standard_small() -> ScenarioFile {
        let mut f = base("standard-small", "hierarchy-equivalence");
        f.f1_0 = Some(one_particle(0.01));
        f.truncation.s_max = 3;
        f
    }

    /// Same dynamics at the larger one-particle norm, run through the
    /// operator-identity suite.
    pub fn standard_large() -> ScenarioFile {
        let mut f = base("standard-large", "identities");
        f.f1_0 = Some(one_particle(0.1));
        f
    }

    /// Fully factorized (chaos) initial data.
    pub fn chaos() -> ScenarioFile {
        let mut f = base("chaos", "hierarchy-equivalence");
        f.correlations.clear();
        f.f1_0 = Some(one_particle(0.1));
        f.truncation.s_max = 3;
        f
    }

    /// Scaling ladder against the integrated limit equation.
    pub fn meanfield_ladder() -> ScenarioFile {
        let mut f = base("meanfield-ladder", "meanfield-ladder");
        f.f1_limit = Some(one_particle(0.01));
        f.eps_ladder = vec![0.5, 0.25, 0.125, 0.0625];
        f.time.steps = 100;
        f
    }

    /// Propagation of initial correlations down the same ladder.
    pub fn correlation_propagation() -> ScenarioFile {
        let mut f = base("correlation-propagation", "correlation-propagation");
        f.f1_limit = Some(one_particle(0.01));
        f.eps_ladder = vec![0.5, 0.25, 0.125, 0.0625];
        f
    }

    /// The chaos control of the propagation statement.
    pub fn chaos_propagation() -> ScenarioFile {
        let mut f = correlation_propagation();
        f.name = "chaos-propagation".into();
        f.correlations.clear();
        f
    }

    /// Soliton-free cubic-equation run on a plane wave.
    pub fn continuum_nls() -> ScenarioFile {
        let mut f = base("continuum-nls", "continuum");
        f.continuum = Some(ContinuumConfig {
            length: 16.0,
            grid_points: 64,
            dt: 1e-3,
            steps: 1000,
            profile: WaveProfile::PlaneWave { mode: 2 },
            kernel: KernelChoice::Delta { strength: 1.0 },
            run: ContinuumRun::NlsPlaneWave,
            snapshot_every: None,
        });
        f
    }

    /// Delta-coupling reduction of the nonlocal cubic solver.
    pub fn continuum_gp() -> ScenarioFile {
        let mut f = base("continuum-gp", "continuum");
        f.continuum = Some(ContinuumConfig {
            length: 16.0,
            grid_points: 32,
            dt: 2e-3,
            steps: 250,
            profile: WaveProfile::Gaussian { sigma: 1.0 },
            kernel: KernelChoice::Delta { strength: 1.0 },
            run: ContinuumRun::GpDeltaReduction,
            snapshot_every: None,
        });
        f
    }

    /// Every shipped fixture, in the order the fixture suite runs them.
    pub fn all() -> Vec<ScenarioFile> {
        vec![
            standard_small(),
            standard_large(),
            chaos(),
            meanfield_ladder(),
            correlation_propagation(),
            chaos_propagation(),
            continuum_nls(),
            continuum_gp(),
        ]
    }

    pub fn to_json(file: &ScenarioFile) -> String {
        let mut text = serde_json::to_string_pretty(file).expect("fixtures serialize");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse_and_validate() {
        for file in fixtures::all() {
            let text = fixtures::to_json(&file);
            let scenario = Scenario::parse(&text).unwrap_or_else(|e| {
                panic!("fixture {} failed: {e}", file.name);
            });
            assert_eq!(scenario.name, file.name);
            assert!(!scenario.hash().is_empty());
        }
    }

    #[test]
    fn hash_is_deterministic_and_sensitive() {
        let a = Scenario::from_file(fixtures::standard_small()).unwrap();
        let b = Scenario::from_file(fixtures::standard_small()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut file = fixtures::standard_small();
        file.epsilon = 0.3;
        let c = Scenario::from_file(file).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let mut file = fixtures::standard_small();
        file.experiment = "frobnicate".into();
        assert!(matches!(
            Scenario::from_file(file),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn validation_collects_every_violation() {
        let mut file = fixtures::meanfield_ladder();
        file.epsilon = -1.0;
        file.time.t_end = -2.0;
        file.eps_ladder = vec![0.25, 0.5];
        let err = Scenario::from_file(file).unwrap_err();
        match err {
            ScenarioError::Invalid(violations) => {
                assert!(violations.len() >= 3, "got {violations:?}");
                assert!(violations.iter().any(|v| v.contains("epsilon")));
                assert!(violations.iter().any(|v| v.contains("t_end")));
                assert!(violations.iter().any(|v| v.contains("eps_ladder")));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn missing_required_fields_are_reported() {
        let mut file = fixtures::standard_small();
        file.f1_0 = None;
        let err = Scenario::from_file(file).unwrap_err();
        assert!(format!("{err}").contains("requires f1_0"));

        let mut file = fixtures::continuum_nls();
        file.continuum = None;
        let err = Scenario::from_file(file).unwrap_err();
        assert!(format!("{err}").contains("continuum section"));
    }

    #[test]
    fn overrides_revalidate() {
        let file = fixtures::meanfield_ladder();
        let scenario = Scenario::from_file(file.clone()).unwrap();
        let overridden = scenario
            .with_overrides(&file, Some(3), Some(vec![0.4, 0.2]))
            .unwrap();
        assert_eq!(overridden.trunc.n_max, 3);
        assert_eq!(overridden.eps_ladder, vec![0.4, 0.2]);
        assert!(scenario
            .with_overrides(&file, Some(9), None)
            .is_err());
    }

    #[test]
    fn asymmetric_correlation_is_flagged() {
        let mut file = fixtures::standard_small();
        // break the swap symmetry of g2
        file.correlations[0].data[1] = [0.5, 0.0];
        let err = Scenario::from_file(file).unwrap_err();
        assert!(format!("{err}").contains("permutation-symmetric"));
    }
}
