//! TOML recipes: a map (preset or full spec) plus optional run defaults.

use std::path::Path;

use saddlelab::da_maps::presets::{cat_matrix, mane_torus_spec, t4_matrix, t4_post_surgery_spec, t4_pre_surgery_spec, CAT_WEAK_BAND, T4_WEAK_BAND};
use saddlelab::da_maps::{MapModel, MapSpec};
use saddlelab::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Named maps that need no spelled-out spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Preset {
    Cat,
    /// Cat map with a planar mixing of support `eps` at the origin.
    Mane { eps: f64 },
    T4Linear,
    T4PreSurgery,
    T4PostSurgery,
}

impl Preset {
    pub fn spec(&self) -> Result<MapSpec> {
        Ok(match self {
            Preset::Cat => MapSpec::linear_torus(cat_matrix(), CAT_WEAK_BAND),
            Preset::Mane { eps } => mane_torus_spec(*eps),
            Preset::T4Linear => MapSpec::linear_torus(t4_matrix(), T4_WEAK_BAND),
            Preset::T4PreSurgery => t4_pre_surgery_spec(),
            Preset::T4PostSurgery => t4_post_surgery_spec()?,
        })
    }
}

/// Defaults for the run; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDefaults {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub horizon: Option<usize>,
    pub tol: Option<f64>,
    pub rho: Option<f64>,
    pub pairs: Option<usize>,
    pub ball_radius: Option<f64>,
    pub samples: Option<usize>,
    pub window: Option<usize>,
    /// Extra points whose fixed-point index the `surgery` command reports.
    #[serde(default)]
    pub index_points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    preset: Option<Preset>,
    #[serde(default)]
    map: Option<MapSpec>,
    #[serde(default)]
    run: RunDefaults,
}

#[derive(Clone, Debug)]
pub struct Recipe {
    pub name: String,
    pub spec: MapSpec,
    pub run: RunDefaults,
    pub sha256: String,
    pub text: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line for a validation error: the line naming a label the
/// message mentions, else the map's header.
fn validation_line(text: &str, message: &str) -> usize {
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim().strip_prefix("label") {
            let label = rest.trim_start_matches([' ', '=']).trim().trim_matches('"');
            if !label.is_empty() && message.contains(label) {
                return i + 1;
            }
        }
    }
    text.lines().position(|l| l.trim_start().starts_with("[map") || l.trim_start().starts_with("[preset") || l.trim_start().starts_with("preset")).map_or(1, |i| i + 1)
}

impl Recipe {
    pub fn parse(text: &str, fallback_name: &str) -> Result<Recipe> {
        let file: RecipeFile = toml::from_str(text).map_err(|e| Error::Recipe {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let spec = match (&file.preset, file.map) {
            (Some(p), None) => p.spec().map_err(|e| Error::Recipe { line: validation_line(text, ""), message: e.to_string() })?,
            (None, Some(m)) => m,
            (Some(_), Some(_)) => return Err(Error::Recipe { line: 1, message: "give either `preset` or `[map]`, not both".into() }),
            (None, None) => return Err(Error::Recipe { line: 1, message: "missing `preset` or `[map]`".into() }),
        };
        let sha256 = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Recipe { name: file.name.unwrap_or_else(|| fallback_name.to_string()), spec, run: file.run, sha256, text: text.to_string() })
    }

    pub fn load(path: &Path) -> Result<Recipe> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("recipe");
        Recipe::parse(&text, stem)
    }

    /// Builds the map; validation failures point at a recipe line.
    pub fn model(&self) -> Result<MapModel<f64>> {
        MapModel::from_spec(&self.spec).map_err(|e| {
            let message = e.to_string();
            Error::Recipe { line: validation_line(&self.text, &message), message }
        })
    }
}
