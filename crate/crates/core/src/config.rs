//! Run configuration shared by every pipeline command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::DenoiserHyperparams;
use crate::error::{Error, Result};
use crate::fusion::{load_templates, FusionConfig, UrsatzTemplate};
use crate::realize::VoiceProfile;
use crate::sampler::{GuidanceConfig, LibraryRequest};
use crate::score::{KeyContext, RhythmMode};
use crate::theory::TheoryConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub offset: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { steps: 100, offset: 0.008 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub train: u64,
    pub generate: u64,
    pub fuse: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { train: 1, generate: 2, fuse: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Phrases drawn per library run.
    pub samples: usize,
    /// Candidates per reverse step.
    pub candidates: usize,
    pub rhythm: RhythmMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { samples: 40, candidates: 4, rhythm: RhythmMode::WholePhrase }
    }
}

/// Everything a pipeline run reads. Relative paths resolve against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub templates: Option<PathBuf>,
    pub home_key: String,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserHyperparams,
    pub generation: GenerationConfig,
    pub theory: TheoryConfig,
    pub fusion_retries: usize,
    /// Top to bottom; defaults by voice count when absent.
    pub profiles: Option<Vec<VoiceProfile>>,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus"),
            output: PathBuf::from("out"),
            templates: None,
            home_key: "C major".into(),
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserHyperparams::toy(),
            generation: GenerationConfig::default(),
            theory: TheoryConfig::default(),
            fusion_retries: 32,
            profiles: None,
            seeds: Seeds::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.corpus = base.join(&cfg.corpus);
        cfg.output = base.join(&cfg.output);
        cfg.templates = cfg.templates.map(|t| base.join(t));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.denoiser.validate()?;
        if self.schedule.steps != self.denoiser.steps {
            return Err(Error::Config(format!(
                "schedule has {} steps but the denoiser expects {}",
                self.schedule.steps, self.denoiser.steps
            )));
        }
        if !(self.schedule.offset > 0.0) {
            return Err(Error::Config("schedule offset must be positive".into()));
        }
        if self.generation.candidates == 0 {
            return Err(Error::Config("generation.candidates must be at least 1".into()));
        }
        self.home_key.parse::<KeyContext>().map_err(|e| Error::Config(format!("home_key: {e}")))?;
        if let Some(ps) = &self.profiles {
            for p in ps {
                p.validate()?;
            }
        }
        Ok(())
    }

    pub fn require_corpus(&self) -> Result<()> {
        if !self.corpus.is_dir() {
            return Err(Error::Config(format!("corpus directory {} does not exist", self.corpus.display())));
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<Vec<UrsatzTemplate>> {
        match &self.templates {
            Some(p) if !p.is_file() => {
                Err(Error::Config(format!("template file {} does not exist", p.display())))
            }
            Some(p) => load_templates(p),
            None => Ok(UrsatzTemplate::defaults()),
        }
    }

    pub fn profiles(&self, voices: usize) -> Vec<VoiceProfile> {
        match &self.profiles {
            Some(p) => p.clone(),
            None => VoiceProfile::defaults(voices),
        }
    }

    pub fn library_request(&self) -> LibraryRequest {
        LibraryRequest {
            count: self.generation.samples,
            rhythm: self.generation.rhythm,
            guidance: GuidanceConfig { candidates: self.generation.candidates, rules: self.theory.rules.clone() },
            theory: self.theory.clone(),
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            home_key: self.home_key.clone(),
            retries: self.fusion_retries,
            theory: self.theory.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_errors() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"corpsu": "x"}"#).is_err());
    }

    #[test]
    fn step_mismatch_is_caught() {
        let mut cfg = RunConfig::default();
        cfg.schedule.steps = 50;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
