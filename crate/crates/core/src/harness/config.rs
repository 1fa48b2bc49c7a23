use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{generate_source, sim1_mixing_matrix, HarmonicComponent, MixingMatrix, MultichannelSeries, NoiseSpec, SourceSpec};
use crate::whittle_ica::SolverOptions;

/// Separation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CicaLsp,
    Sobi,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::CicaLsp => "cica_lsp",
            Method::Sobi => "sobi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cica_lsp" => Ok(Method::CicaLsp),
            "sobi" => Ok(Method::Sobi),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?} (expected cica_lsp or sobi)"))),
        }
    }
}

/// A harmonic whose phase is redrawn from `Uniform[-pi, pi]` per replicate when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicConfig {
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Radians per sample.
    pub frequency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

fn default_amplitude() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub harmonics: Vec<HarmonicConfig>,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixingConfig {
    /// Rows of the mixing matrix `A` in `X = A S`.
    Fixed { matrix: Vec<Vec<f64>> },
    /// Standard Gaussian entries drawn per replicate.
    RandomSeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub master_seed: u64,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sobi_lags: Option<Vec<usize>>,
    #[serde(default)]
    pub solver: SolverOptions,
    pub mixing: MixingConfig,
    pub sources: Vec<SourceConfig>,
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 5] = ["sim1", "sim1_512", "sim1_4096", "sim1_desk", "ar2_rate"];

/// Default master seed of the built-in presets.
pub const PRESET_SEED: u64 = 20_201_202;

/// The four mixed-spectrum sources: harmonics of amplitude 2 at
/// `(2pi/128)(1,2,3)`, `2pi/512 + (2pi/64)(1,2,3)`, `(2pi/64)(1,2,3)` and
/// `2pi/128 + (2pi/64)(1,2,3)` over Gaussian, uniform, AR(1) and MA(1) noise.
pub fn sim1_sources() -> Vec<SourceConfig> {
    let lines = |offset: f64, step: f64| -> Vec<HarmonicConfig> {
        (1..=3)
            .map(|p| HarmonicConfig { amplitude: 2.0, frequency: offset + step * p as f64, phase: None })
            .collect()
    };
    vec![
        SourceConfig { harmonics: lines(0.0, 2.0 * PI / 128.0), noise: NoiseSpec::GaussianWhite { sigma: 1.0 } },
        SourceConfig {
            harmonics: lines(2.0 * PI / 512.0, 2.0 * PI / 64.0),
            noise: NoiseSpec::UniformWhite { half_width: 3f64.sqrt() },
        },
        SourceConfig { harmonics: lines(0.0, 2.0 * PI / 64.0), noise: NoiseSpec::Ar1 { coefficient: 0.8 } },
        SourceConfig {
            harmonics: lines(2.0 * PI / 128.0, 2.0 * PI / 64.0),
            noise: NoiseSpec::Ma1 { coefficient: 0.5 },
        },
    ]
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let sim1 = |sizes: Vec<usize>, replicates: usize| ExperimentConfig {
            name: Some(name.to_string()),
            master_seed: PRESET_SEED,
            sample_sizes: sizes,
            replicates,
            methods: vec![Method::CicaLsp, Method::Sobi],
            output_dir: None,
            sobi_lags: None,
            solver: SolverOptions::default(),
            mixing: MixingConfig::Fixed { matrix: sim1_mixing_matrix().iter().map(|r| r.to_vec()).collect() },
            sources: sim1_sources(),
        };
        let cfg = match name {
            "sim1" => sim1(vec![512, 4096], 100),
            "sim1_512" => sim1(vec![512], 100),
            "sim1_4096" => sim1(vec![4096], 100),
            "sim1_desk" => sim1(vec![512], 20),
            "ar2_rate" => ExperimentConfig {
                name: Some(name.to_string()),
                master_seed: PRESET_SEED,
                sample_sizes: vec![512, 4096],
                replicates: 50,
                methods: vec![Method::CicaLsp],
                output_dir: None,
                sobi_lags: None,
                solver: SolverOptions::default(),
                mixing: MixingConfig::RandomSeeded,
                sources: vec![
                    SourceConfig { harmonics: vec![], noise: NoiseSpec::Ar1 { coefficient: 0.9 } },
                    SourceConfig { harmonics: vec![], noise: NoiseSpec::Ar1 { coefficient: -0.9 } },
                ],
            },
            other => {
                return Err(Error::Config(format!("unknown preset {other:?}; available: {}", PRESETS.join(", "))));
            }
        };
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// A preset name or a path to a TOML file.
    pub fn load(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if PRESETS.contains(&spec) && !path.exists() {
            Self::preset(spec)
        } else if path.is_file() {
            Self::from_path(path).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
                other => other,
            })
        } else {
            Err(Error::Config(format!("{spec:?} is neither a preset ({}) nor a config file", PRESETS.join(", "))))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::Config("sample_sizes must not be empty".into()));
        }
        if let Some(&t) = self.sample_sizes.iter().find(|&&t| t < 64) {
            return Err(Error::Config(format!("sample size {t} is below the minimum of 64")));
        }
        let m = self.n_sources();
        if m < 2 {
            return Err(Error::Config(format!("at least 2 sources are required, got {m}")));
        }
        for (j, s) in self.sources.iter().enumerate() {
            s.noise.validate().map_err(|e| Error::Config(format!("source {}: {e}", j + 1)))?;
            for h in &s.harmonics {
                HarmonicComponent { amplitude: h.amplitude, frequency: h.frequency, phase: h.phase.unwrap_or(0.0) }
                    .validate()
                    .map_err(|e| Error::Config(format!("source {}: {e}", j + 1)))?;
            }
        }
        if let MixingConfig::Fixed { matrix } = &self.mixing {
            if matrix.len() != m || matrix.iter().any(|r| r.len() != m) {
                return Err(Error::Config(format!("mixing matrix must be {m}x{m}")));
            }
            MixingMatrix::<f64>::from_rows(matrix).map_err(|e| Error::Config(format!("mixing matrix: {e}")))?;
        }
        if let Some(lags) = &self.sobi_lags {
            crate::sobi::LagSet::new(lags.clone()).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(master) ^ T) ^ replicate)`.
pub fn derive_seed(master_seed: u64, n_samples: usize, replicate: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ n_samples as u64) ^ replicate as u64)
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub sources: MultichannelSeries<f64>,
    pub mixing: MixingMatrix<f64>,
    pub observations: MultichannelSeries<f64>,
    pub seed: u64,
}

/// Generates replicate `replicate` at sample size `n_samples`; depends on
/// nothing else in the sweep.
pub fn generate_replicate(config: &ExperimentConfig, n_samples: usize, replicate: usize) -> Result<Replicate> {
    let seed = derive_seed(config.master_seed, n_samples, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channels = Vec::with_capacity(config.n_sources());
    for source in &config.sources {
        let harmonics = source
            .harmonics
            .iter()
            .map(|h| {
                let phase = match h.phase {
                    Some(p) => p,
                    None => rng.random_range(-PI..=PI),
                };
                HarmonicComponent::new(h.amplitude, h.frequency, phase)
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = SourceSpec::new(harmonics, source.noise)?;
        channels.push(generate_source::<f64>(&spec, n_samples, rng.random())?);
    }
    let sources = MultichannelSeries::from_channels(&channels)?;
    let mixing = match &config.mixing {
        MixingConfig::Fixed { matrix } => MixingMatrix::from_rows(matrix)?,
        MixingConfig::RandomSeeded => {
            let m = config.n_sources();
            loop {
                let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
                if let Ok(mix) = MixingMatrix::new(a) {
                    break mix;
                }
            }
        }
    };
    let observations = crate::signals::mix(&mixing, &sources)?;
    Ok(Replicate { sources, mixing, observations, seed })
}
