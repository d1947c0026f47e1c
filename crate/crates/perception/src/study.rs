use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{hex_digest, Error, Result, API_VERSION};

/// One study sample: the input image, its ground truth and one output per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySample {
    pub id: String,
    pub input: String,
    pub truth: String,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub v: u32,
    pub dataset: String,
    pub models: Vec<String>,
    pub samples: Vec<StudySample>,
    /// Offer the ground truth as one more anonymous candidate.
    #[serde(default)]
    pub selectable_ground_truth: bool,
}

pub const GROUND_TRUTH: &str = "ground_truth";

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v != API_VERSION {
            return Err(Error::Config(format!("unsupported study version {}", self.v)));
        }
        if self.models.len() < 2 {
            return Err(Error::Config("a study needs at least two models".into()));
        }
        let models: BTreeSet<&str> = self.models.iter().map(String::as_str).collect();
        if models.len() != self.models.len() {
            return Err(Error::Config("duplicate model name".into()));
        }
        if models.contains(GROUND_TRUTH) {
            return Err(Error::Config(format!("{GROUND_TRUTH:?} is reserved")));
        }
        if self.samples.is_empty() {
            return Err(Error::Config("study has no samples".into()));
        }
        let mut ids = BTreeSet::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate sample id {:?}", s.id)));
            }
            let have: BTreeSet<&str> = s.outputs.keys().map(String::as_str).collect();
            if have != models {
                return Err(Error::Config(format!(
                    "sample {:?} has outputs for {:?}, expected {:?}",
                    s.id, have, models
                )));
            }
        }
        Ok(())
    }
}

/// Which picture of a sample an image URL refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRole {
    Input,
    Truth,
    Output(String),
}

/// A validated study with every image resolved to an existing file and an opaque token.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: StudyConfig,
    images: BTreeMap<String, PathBuf>,
    tokens: BTreeMap<(usize, String), String>,
}

impl Study {
    pub fn load(path: impl AsRef<Path>) -> Result<Study> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(path.to_path_buf(), e))?;
        let config: StudyConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Study::new(config, base, &text)
    }

    /// `salt` keeps image tokens unguessable from sample and model names.
    pub fn new(config: StudyConfig, base: &Path, salt: &str) -> Result<Study> {
        config.validate()?;
        let mut images = BTreeMap::new();
        let mut tokens = BTreeMap::new();
        for (idx, s) in config.samples.iter().enumerate() {
            let mut roles = vec![("input".to_string(), &s.input), ("truth".to_string(), &s.truth)];
            roles.extend(s.outputs.iter().map(|(m, p)| (format!("out:{m}"), p)));
            for (role, rel) in roles {
                let full = base.join(rel);
                if !full.is_file() {
                    return Err(Error::Config(format!(
                        "sample {:?}: missing image {}",
                        s.id,
                        full.display()
                    )));
                }
                let ext = full
                    .extension()
                    .and_then(|e| e.to_str())
                    .unwrap_or("png")
                    .to_ascii_lowercase();
                let token = format!(
                    "{}.{ext}",
                    &hex_digest(&[salt, &config.dataset, &s.id, &role])[..24]
                );
                images.insert(token.clone(), full);
                tokens.insert((idx, role), token);
            }
        }
        Ok(Study {
            config,
            images,
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.config.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.config.samples.is_empty()
    }

    pub fn image_url(&self, sample: usize, role: &ImageRole) -> String {
        let key = match role {
            ImageRole::Input => "input".to_string(),
            ImageRole::Truth => "truth".to_string(),
            ImageRole::Output(m) => format!("out:{m}"),
        };
        format!("/images/{}", self.tokens[&(sample, key)])
    }

    pub fn image_path(&self, token: &str) -> Option<&Path> {
        self.images.get(token).map(PathBuf::as_path)
    }

    /// Names a vote may refer to, in report order.
    pub fn choices(&self) -> Vec<String> {
        let mut v = self.config.models.clone();
        if self.config.selectable_ground_truth {
            v.push(GROUND_TRUTH.to_string());
        }
        v
    }
}
