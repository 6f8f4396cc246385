//! Experiment descriptions: the TOML file schema, flag overrides, and
//! the resolution step that merges both into a validated
//! [`ExperimentConfig`].
//!
//! Parsing is strict. Unknown keys are rejected with their file
//! position, model parameters that the chosen model does not use are
//! rejected by name, and the ladder geometry is checked against the
//! reference grid before anything runs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use stoheat::{
    EigenBasis, LadderSpec, ModelSpec, Nonlinearity, SchemeParams, TestFunctional,
};

/// Stream constants separating the three estimates of one experiment;
/// the weak ladder uses the seed itself. XOR keeps distinct user seeds
/// on distinct streams without colliding with neighbouring seeds.
const STRONG_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const MOMENT_STREAM: u64 = 0xd1b5_4a32_d192_ed03;

pub const MODEL_NAMES: [&str; 5] = [
    "linear_additive",
    "sin_additive",
    "rational_additive",
    "affine",
    "cos_diffusion",
];

const REACTION_NAMES: [&str; 3] = ["zero", "sin", "rational"];

/// Everything a run depends on, fully resolved. Serialised verbatim
/// into `manifest.json`, so an artifact directory identifies its own
/// inputs. The initial state is always the zero field.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub domain_a: f64,
    pub domain_b: f64,
    /// Retained spectral modes m.
    pub modes: usize,
    /// Collocation nodes P; P >= 2m keeps products alias-safe.
    pub colloc: usize,
    /// Horizon T.
    pub horizon: f64,
    /// Step-size ladder, coarsest first by convention.
    pub dts: Vec<f64>,
    /// The coupled reference runs at min(dts) / 2^ref_refine.
    pub ref_refine: u32,
    pub model: ModelConfig,
    pub phi: String,
    /// Paired samples per weak-error rung.
    pub m_weak: usize,
    /// Coupled paths per strong-error rung.
    pub m_strong: usize,
    pub experiment_seed: u64,
    pub output: PathBuf,
    /// Worker threads; 0 means the library default.
    pub workers: usize,
    pub assertions: Assertions,
}

impl ExperimentConfig {
    pub fn basis(&self) -> Result<EigenBasis> {
        EigenBasis::new(self.domain_a, self.domain_b, self.modes).map_err(Into::into)
    }

    pub fn phi_functional(&self) -> TestFunctional {
        TestFunctional::from_name(&self.phi).expect("resolved at load time")
    }

    pub fn ladder(&self, samples: usize, seed: u64) -> LadderSpec {
        LadderSpec {
            horizon: self.horizon,
            dts: self.dts.clone(),
            samples,
            ref_refine: self.ref_refine,
            experiment_seed: seed,
            colloc: self.colloc,
        }
    }

    /// Single-resolution scheme at the finest ladder rung, for the
    /// moment probe.
    pub fn finest_params(&self) -> Result<SchemeParams> {
        let dt = self.dts.iter().copied().fold(f64::INFINITY, f64::min);
        let steps = (self.horizon / dt).round() as usize;
        SchemeParams::from_dt(dt, steps, self.modes, self.colloc).map_err(Into::into)
    }

    pub fn weak_seed(&self) -> u64 {
        self.experiment_seed
    }

    pub fn strong_seed(&self) -> u64 {
        self.experiment_seed ^ STRONG_STREAM
    }

    pub fn moment_seed(&self) -> u64 {
        self.experiment_seed ^ MOMENT_STREAM
    }
}

/// Model name plus exactly the parameters that model uses.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "name")]
pub enum ModelConfig {
    #[serde(rename = "linear_additive")]
    LinearAdditive { sigma_level: f64 },
    #[serde(rename = "sin_additive")]
    SinAdditive { sigma_level: f64 },
    #[serde(rename = "rational_additive")]
    RationalAdditive { sigma_level: f64 },
    #[serde(rename = "affine")]
    Affine {
        f_gain: f64,
        f_offset: f64,
        sigma_gain: f64,
        sigma_offset: f64,
    },
    #[serde(rename = "cos_diffusion")]
    CosDiffusion { reaction: Reaction },
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reaction {
    Zero,
    Sin,
    Rational,
}

impl ModelConfig {
    pub fn to_spec(&self) -> ModelSpec {
        match *self {
            ModelConfig::LinearAdditive { sigma_level } => ModelSpec::linear_additive(sigma_level),
            ModelConfig::SinAdditive { sigma_level } => ModelSpec::sin_additive(sigma_level),
            ModelConfig::RationalAdditive { sigma_level } => {
                ModelSpec::rational_additive(sigma_level)
            }
            ModelConfig::Affine {
                f_gain,
                f_offset,
                sigma_gain,
                sigma_offset,
            } => ModelSpec::affine(f_gain, f_offset, sigma_gain, sigma_offset),
            ModelConfig::CosDiffusion { reaction } => ModelSpec::cos_diffusion(match reaction {
                Reaction::Zero => Nonlinearity::Zero,
                Reaction::Sin => Nonlinearity::Sin,
                Reaction::Rational => Nonlinearity::Rational,
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::LinearAdditive { .. } => "linear_additive",
            ModelConfig::SinAdditive { .. } => "sin_additive",
            ModelConfig::RationalAdditive { .. } => "rational_additive",
            ModelConfig::Affine { .. } => "affine",
            ModelConfig::CosDiffusion { .. } => "cos_diffusion",
        }
    }

    /// The diffusion level when the noise is additive.
    pub fn additive_level(&self) -> Option<f64> {
        match *self {
            ModelConfig::LinearAdditive { sigma_level }
            | ModelConfig::SinAdditive { sigma_level }
            | ModelConfig::RationalAdditive { sigma_level } => Some(sigma_level),
            _ => None,
        }
    }
}

/// Optional post-run bounds; any violated bound turns the exit status
/// nonzero. Bounds on a slope whose fit is unavailable also fail.
#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Assertions {
    pub weak_slope_min: Option<f64>,
    pub weak_slope_max: Option<f64>,
    pub strong_slope_min: Option<f64>,
    pub strong_slope_max: Option<f64>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
}

impl Assertions {
    pub fn is_empty(&self) -> bool {
        self.weak_slope_min.is_none()
            && self.weak_slope_max.is_none()
            && self.strong_slope_min.is_none()
            && self.strong_slope_max.is_none()
            && self.ratio_min.is_none()
            && self.ratio_max.is_none()
    }
}

/// Raw file schema: `[section] key = value` groups, everything
/// optional. Absent keys fall back to the shipped defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    domain: DomainFile,
    #[serde(default)]
    discretization: DiscretizationFile,
    #[serde(default)]
    model: ModelFile,
    #[serde(default)]
    estimation: EstimationFile,
    #[serde(default)]
    execution: ExecutionFile,
    #[serde(default)]
    assertions: Assertions,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    a: Option<f64>,
    b: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscretizationFile {
    modes: Option<usize>,
    colloc: Option<usize>,
    horizon: Option<f64>,
    dts: Option<Vec<f64>>,
    ref_refine: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: Option<String>,
    sigma_level: Option<f64>,
    f_gain: Option<f64>,
    f_offset: Option<f64>,
    sigma_gain: Option<f64>,
    sigma_offset: Option<f64>,
    reaction: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimationFile {
    phi: Option<String>,
    m_weak: Option<usize>,
    m_strong: Option<usize>,
    experiment_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExecutionFile {
    output: Option<PathBuf>,
    workers: Option<usize>,
}

/// Command-line overrides; each one wins over the file value.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Left endpoint of the spatial domain.
    #[arg(long)]
    pub a: Option<f64>,
    /// Right endpoint of the spatial domain.
    #[arg(long)]
    pub b: Option<f64>,
    /// Retained spectral modes m.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Collocation nodes P (requires P >= 2m).
    #[arg(long)]
    pub colloc: Option<usize>,
    /// Time horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Comma-separated step-size ladder, e.g. 0.0625,0.03125.
    #[arg(long, value_delimiter = ',')]
    pub dts: Option<Vec<f64>>,
    /// Reference refinement r; the reference runs at min(dts)/2^r.
    #[arg(long)]
    pub ref_refine: Option<u32>,
    /// Model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Additive noise level (linear/sin/rational_additive models).
    #[arg(long)]
    pub sigma_level: Option<f64>,
    /// Reaction gain (affine model).
    #[arg(long)]
    pub f_gain: Option<f64>,
    /// Reaction offset (affine model).
    #[arg(long)]
    pub f_offset: Option<f64>,
    /// Diffusion gain (affine model).
    #[arg(long)]
    pub sigma_gain: Option<f64>,
    /// Diffusion offset (affine model).
    #[arg(long)]
    pub sigma_offset: Option<f64>,
    /// Reaction term for cos_diffusion: zero, sin, or rational.
    #[arg(long)]
    pub reaction: Option<String>,
    /// Test functional for the weak ladder.
    #[arg(long)]
    pub phi: Option<String>,
    /// Paired samples per weak-error rung.
    #[arg(long)]
    pub m_weak: Option<usize>,
    /// Coupled paths per strong-error rung.
    #[arg(long)]
    pub m_strong: Option<usize>,
    /// Base seed; every path is a pure function of (seed, path index).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (0 = library default).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Reads `path`, applies `overrides`, validates, and resolves.
pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let file: FileConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    resolve(file, overrides)
}

/// Default ladder dt = T 2^-j, j = 4..9, coarsest first.
fn default_dts(horizon: f64) -> Vec<f64> {
    (4..=9).map(|j| horizon / f64::from(1u32 << j)).collect()
}

fn resolve(file: FileConfig, ov: &Overrides) -> Result<ExperimentConfig> {
    let domain_a = ov.a.or(file.domain.a).unwrap_or(0.0);
    let domain_b = ov.b.or(file.domain.b).unwrap_or(1.0);
    let modes = ov.modes.or(file.discretization.modes).unwrap_or(64);
    let colloc = ov
        .colloc
        .or(file.discretization.colloc)
        .unwrap_or(2 * modes);
    let horizon = ov.horizon.or(file.discretization.horizon).unwrap_or(1.0);
    let dts = ov
        .dts
        .clone()
        .or(file.discretization.dts)
        .unwrap_or_else(|| default_dts(horizon));
    let ref_refine = ov.ref_refine.or(file.discretization.ref_refine).unwrap_or(3);
    let phi = ov
        .phi
        .clone()
        .or(file.estimation.phi)
        .unwrap_or_else(|| "phi_exp".to_string());
    let m_weak = ov.m_weak.or(file.estimation.m_weak).unwrap_or(100_000);
    let m_strong = ov.m_strong.or(file.estimation.m_strong).unwrap_or(2000);
    let experiment_seed = ov.seed.or(file.estimation.experiment_seed).unwrap_or(1);
    let output = ov
        .output
        .clone()
        .or(file.execution.output)
        .unwrap_or_else(|| PathBuf::from("artifacts"));
    let workers = ov.workers.or(file.execution.workers).unwrap_or(0);

    if !(domain_a < domain_b) || !domain_a.is_finite() || !domain_b.is_finite() {
        bail!("domain: need a < b, got a = {domain_a}, b = {domain_b}");
    }
    if modes == 0 {
        bail!("discretization.modes: must be positive");
    }
    if colloc < 2 * modes {
        bail!(
            "discretization.colloc: P = {colloc} must be at least 2m = {}",
            2 * modes
        );
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        bail!("discretization.horizon: must be positive and finite, got {horizon}");
    }
    if !(1..=20).contains(&ref_refine) {
        bail!("discretization.ref_refine: must lie in 1..=20, got {ref_refine}");
    }
    if m_weak < 2 || m_strong < 2 {
        bail!("estimation: m_weak and m_strong need at least 2 samples for standard errors");
    }
    if dts.is_empty() {
        bail!("discretization.dts: ladder must not be empty");
    }
    if let Some(&dt) = dts.iter().find(|&&dt| dt > 1.0) {
        bail!("discretization.dts: dt = {dt} exceeds 1; the scheme is analysed for dt <= 1");
    }

    let model = resolve_model(&file.model, ov)?;

    if TestFunctional::from_name(&phi).is_none() {
        let names: Vec<&str> = TestFunctional::ALL.iter().map(|f| f.name()).collect();
        bail!(
            "estimation.phi: unknown test functional '{phi}'; available: {}",
            names.join(", ")
        );
    }

    let assertions = file.assertions;
    for (name, lo, hi) in [
        (
            "weak_slope",
            assertions.weak_slope_min,
            assertions.weak_slope_max,
        ),
        (
            "strong_slope",
            assertions.strong_slope_min,
            assertions.strong_slope_max,
        ),
        ("ratio", assertions.ratio_min, assertions.ratio_max),
    ] {
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if lo > hi {
                bail!("assertions.{name}: min {lo} exceeds max {hi}");
            }
        }
    }

    let cfg = ExperimentConfig {
        domain_a,
        domain_b,
        modes,
        colloc,
        horizon,
        dts,
        ref_refine,
        model,
        phi,
        m_weak,
        m_strong,
        experiment_seed,
        output,
        workers,
        assertions,
    };

    // Grid geometry: every rung divides T and sits on the reference
    // grid. Uses sample/seed placeholders; only geometry is checked.
    cfg.ladder(2, 0)
        .validate()
        .map_err(|e| anyhow!("discretization.dts: {e}"))?;

    Ok(cfg)
}

fn resolve_model(file: &ModelFile, ov: &Overrides) -> Result<ModelConfig> {
    let name = ov
        .model
        .clone()
        .or_else(|| file.name.clone())
        .unwrap_or_else(|| "linear_additive".to_string());
    let sigma_level = ov.sigma_level.or(file.sigma_level);
    let f_gain = ov.f_gain.or(file.f_gain);
    let f_offset = ov.f_offset.or(file.f_offset);
    let sigma_gain = ov.sigma_gain.or(file.sigma_gain);
    let sigma_offset = ov.sigma_offset.or(file.sigma_offset);
    let reaction = ov.reaction.clone().or_else(|| file.reaction.clone());

    // Reject parameters the chosen model does not read; a silently
    // ignored key would make the manifest lie about the run.
    let reject_unused = |used: &[&str]| -> Result<()> {
        let provided = [
            ("sigma_level", sigma_level.is_some()),
            ("f_gain", f_gain.is_some()),
            ("f_offset", f_offset.is_some()),
            ("sigma_gain", sigma_gain.is_some()),
            ("sigma_offset", sigma_offset.is_some()),
            ("reaction", reaction.is_some()),
        ];
        for (key, given) in provided {
            if given && !used.contains(&key) {
                bail!("model.{key}: not a parameter of {name}");
            }
        }
        Ok(())
    };

    match name.as_str() {
        "linear_additive" => {
            reject_unused(&["sigma_level"])?;
            Ok(ModelConfig::LinearAdditive {
                sigma_level: sigma_level.unwrap_or(1.0),
            })
        }
        "sin_additive" => {
            reject_unused(&["sigma_level"])?;
            Ok(ModelConfig::SinAdditive {
                sigma_level: sigma_level.unwrap_or(1.0),
            })
        }
        "rational_additive" => {
            reject_unused(&["sigma_level"])?;
            Ok(ModelConfig::RationalAdditive {
                sigma_level: sigma_level.unwrap_or(1.0),
            })
        }
        "affine" => {
            reject_unused(&["f_gain", "f_offset", "sigma_gain", "sigma_offset"])?;
            let missing: Vec<&str> = [
                ("f_gain", f_gain.is_some()),
                ("f_offset", f_offset.is_some()),
                ("sigma_gain", sigma_gain.is_some()),
                ("sigma_offset", sigma_offset.is_some()),
            ]
            .iter()
            .filter(|(_, given)| !given)
            .map(|(key, _)| *key)
            .collect();
            if !missing.is_empty() {
                bail!(
                    "model: 'affine' needs f_gain, f_offset, sigma_gain, sigma_offset (missing: {})",
                    missing.join(", ")
                );
            }
            Ok(ModelConfig::Affine {
                f_gain: f_gain.unwrap(),
                f_offset: f_offset.unwrap(),
                sigma_gain: sigma_gain.unwrap(),
                sigma_offset: sigma_offset.unwrap(),
            })
        }
        "cos_diffusion" => {
            reject_unused(&["reaction"])?;
            let reaction = match reaction.as_deref().unwrap_or("sin") {
                "zero" => Reaction::Zero,
                "sin" => Reaction::Sin,
                "rational" => Reaction::Rational,
                other => bail!(
                    "model.reaction: unknown reaction '{other}'; available: {}",
                    REACTION_NAMES.join(", ")
                ),
            };
            Ok(ModelConfig::CosDiffusion { reaction })
        }
        other => bail!(
            "model.name: unknown model '{other}'; available: {}",
            MODEL_NAMES.join(", ")
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_str(body: &str, ov: &Overrides) -> Result<ExperimentConfig> {
        let file: FileConfig = toml::from_str(body)?;
        resolve(file, ov)
    }

    #[test]
    fn empty_file_resolves_to_shipped_defaults() {
        let cfg = from_str("", &Overrides::default()).unwrap();
        assert_eq!((cfg.domain_a, cfg.domain_b), (0.0, 1.0));
        assert_eq!((cfg.modes, cfg.colloc), (64, 128));
        assert_eq!(cfg.horizon, 1.0);
        assert_eq!(cfg.dts, default_dts(1.0));
        assert_eq!(cfg.ref_refine, 3);
        assert_eq!(cfg.model.name(), "linear_additive");
        assert_eq!(cfg.model.additive_level(), Some(1.0));
        assert_eq!(cfg.phi, "phi_exp");
        assert_eq!((cfg.m_weak, cfg.m_strong), (100_000, 2000));
        assert_eq!(cfg.experiment_seed, 1);
        assert_eq!(cfg.workers, 0);
        assert!(cfg.assertions.is_empty());
    }

    #[test]
    fn shipped_default_file_matches_built_in_defaults() {
        let text = fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/default.toml"
        ))
        .unwrap();
        let from_file: FileConfig = toml::from_str(&text).unwrap();
        let shipped = resolve(from_file, &Overrides::default()).unwrap();
        let built_in = from_str("", &Overrides::default()).unwrap();
        assert_eq!(
            serde_json::to_value(&shipped).unwrap(),
            serde_json::to_value(&built_in).unwrap()
        );
    }

    #[test]
    fn flags_override_file_values() {
        let ov = Overrides {
            horizon: Some(2.0),
            seed: Some(99),
            dts: Some(vec![0.5, 0.25]),
            ..Overrides::default()
        };
        let cfg = from_str("[discretization]\nhorizon = 1.0\n", &ov).unwrap();
        assert_eq!(cfg.horizon, 2.0);
        assert_eq!(cfg.experiment_seed, 99);
        assert_eq!(cfg.dts, vec![0.5, 0.25]);
    }

    #[test]
    fn derived_streams_differ() {
        let cfg = from_str("", &Overrides::default()).unwrap();
        assert_ne!(cfg.weak_seed(), cfg.strong_seed());
        assert_ne!(cfg.weak_seed(), cfg.moment_seed());
        assert_ne!(cfg.strong_seed(), cfg.moment_seed());
    }

    #[test]
    fn unknown_model_lists_options() {
        let err = from_str("[model]\nname = \"banana\"\n", &Overrides::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("banana"), "{msg}");
        for name in MODEL_NAMES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn unknown_phi_lists_options() {
        let err = from_str("[estimation]\nphi = \"phi_nope\"\n", &Overrides::default())
            .unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("phi_nope"), "{msg}");
        assert!(msg.contains("phi_exp") && msg.contains("phi_coord") && msg.contains("phi_sq"));
    }

    #[test]
    fn affine_missing_parameters_are_named() {
        let body = "[model]\nname = \"affine\"\nf_gain = 0.5\nf_offset = 0.0\nsigma_gain = 0.1\n";
        let err = from_str(body, &Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("sigma_offset"));
    }

    #[test]
    fn parameter_of_wrong_model_is_rejected() {
        let body = "[model]\nname = \"sin_additive\"\nf_gain = 2.0\n";
        let err = from_str(body, &Overrides::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("f_gain") && msg.contains("sin_additive"), "{msg}");
    }

    #[test]
    fn rung_off_the_reference_grid_is_named() {
        // T/3 divides the horizon in steps but is not a multiple of the
        // reference step derived from min(dts) = T/4.
        let body = "[discretization]\ndts = [0.3333333333333333, 0.25]\n";
        let err = from_str(body, &Overrides::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("rung 0"), "{msg}");
        assert!(msg.contains("0.333"), "{msg}");
    }

    #[test]
    fn colloc_below_twice_modes_is_rejected() {
        let err = from_str(
            "[discretization]\nmodes = 8\ncolloc = 12\n",
            &Overrides::default(),
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("2m"));
    }

    #[test]
    fn inverted_assertion_band_is_rejected() {
        let body = "[assertions]\nweak_slope_min = 0.9\nweak_slope_max = 0.1\n";
        let err = from_str(body, &Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("weak_slope"));
    }
}
