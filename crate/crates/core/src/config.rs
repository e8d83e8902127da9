//! Run configuration shared by every subcommand, read from TOML.
//!
//! Unknown keys are rejected at every level. [`RunConfig::resolved`] fills in
//! mode-dependent defaults so the echoed file replays the run exactly.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bake::BakeConfig;
use crate::camera::{DEFAULT_ELEVATION_DEG, DEFAULT_HALF_EXTENT, DEFAULT_IMAGE_SIZE, REFERENCE_VIEW_COUNT};
use crate::dataset::SampleConfig;
use crate::jigsaw::{JigsawConfig, Mode, DEFAULT_BACKGROUND};
use crate::roundtrip::RoundtripConfig;

/// File name of the resolved configuration written next to outputs.
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Error,
    #[default]
    Warn,
    Info,
    Debug,
    Trace,
}

impl Verbosity {
    pub fn level(self) -> log::LevelFilter {
        match self {
            Verbosity::Error => log::LevelFilter::Error,
            Verbosity::Warn => log::LevelFilter::Warn,
            Verbosity::Info => log::LevelFilter::Info,
            Verbosity::Debug => log::LevelFilter::Debug,
            Verbosity::Trace => log::LevelFilter::Trace,
        }
    }

    /// One step louder per count, saturating at trace.
    pub fn raised(self, by: u8) -> Self {
        const ORDER: [Verbosity; 5] = [
            Verbosity::Error,
            Verbosity::Warn,
            Verbosity::Info,
            Verbosity::Debug,
            Verbosity::Trace,
        ];
        let i = ORDER.iter().position(|v| *v == self).expect("listed");
        ORDER[(i + by as usize).min(ORDER.len() - 1)]
    }
}

/// Which cameras `render` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ViewSpec {
    Ortho6,
    Random(usize),
}

impl FromStr for ViewSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ortho6" {
            return Ok(ViewSpec::Ortho6);
        }
        match s.strip_prefix("random:").map(str::parse::<usize>) {
            Some(Ok(n)) if n > 0 => Ok(ViewSpec::Random(n)),
            _ => Err(format!("invalid view spec {s:?}, expected ortho6 or random:<n> with n >= 1")),
        }
    }
}

impl fmt::Display for ViewSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewSpec::Ortho6 => write!(f, "ortho6"),
            ViewSpec::Random(n) => write!(f, "random:{n}"),
        }
    }
}

impl TryFrom<String> for ViewSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ViewSpec> for String {
    fn from(v: ViewSpec) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JigsawSection {
    pub mode: Mode,
    /// Defaults to 64 in train mode and 128 in infer mode.
    pub patch_size: Option<usize>,
    /// Defaults to 0.25 in train mode; always 0 in infer mode.
    pub mask_ratio: Option<f64>,
    pub background: Vec<f64>,
}

impl Default for JigsawSection {
    fn default() -> Self {
        Self {
            mode: Mode::Train,
            patch_size: None,
            mask_ratio: None,
            background: vec![DEFAULT_BACKGROUND],
        }
    }
}

impl JigsawSection {
    pub fn to_config(&self, seed: u64) -> JigsawConfig {
        let base = JigsawConfig::for_mode(self.mode, seed);
        JigsawConfig {
            patch_size: self.patch_size.unwrap_or(base.patch_size),
            mask_ratio: match self.mode {
                Mode::Infer => 0.0,
                Mode::Train => self.mask_ratio.unwrap_or(base.mask_ratio),
            },
            background: self.background.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub size: usize,
    pub half_extent: f64,
    pub views: ViewSpec,
    pub elevation_deg: [f64; 2],
    pub supersample: bool,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            size: DEFAULT_IMAGE_SIZE,
            half_extent: DEFAULT_HALF_EXTENT,
            views: ViewSpec::Ortho6,
            elevation_deg: [DEFAULT_ELEVATION_DEG.0, DEFAULT_ELEVATION_DEG.1],
            supersample: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundtripSection {
    pub view_size: usize,
    pub half_extent: f64,
}

impl Default for RoundtripSection {
    fn default() -> Self {
        let d = RoundtripConfig::default();
        Self {
            view_size: d.view_size,
            half_extent: d.half_extent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_root: Option<PathBuf>,
    pub verbosity: Verbosity,
    pub threads: Option<usize>,
    pub jigsaw: JigsawSection,
    pub render: RenderSection,
    pub pairs: SampleConfig,
    pub bake: BakeConfig,
    pub roundtrip: RoundtripSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pairs = SampleConfig {
            references: REFERENCE_VIEW_COUNT,
            ..SampleConfig::default()
        };
        Self {
            seed: 0,
            output_root: None,
            verbosity: Verbosity::default(),
            threads: None,
            jigsaw: JigsawSection::default(),
            render: RenderSection::default(),
            pairs,
            bake: BakeConfig::default(),
            roundtrip: RoundtripSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Copy with every mode-dependent default made explicit.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let j = self.jigsaw.to_config(self.seed);
        out.jigsaw.patch_size = Some(j.patch_size);
        out.jigsaw.mask_ratio = Some(j.mask_ratio);
        out
    }

    pub fn roundtrip_config(&self) -> RoundtripConfig {
        RoundtripConfig {
            view_size: self.roundtrip.view_size,
            half_extent: self.roundtrip.half_extent,
            bake: self.bake.clone(),
        }
    }

    /// Writes the resolved config as TOML to `path`.
    pub fn write_resolved(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.resolved().to_toml()).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["sed = 1", "[jigsaw]\npatchsize = 3", "[bake]\nknn = 2", "[nope]\n"] {
            assert!(matches!(RunConfig::from_toml_str(text), Err(ConfigError::Parse(_))), "{text}");
        }
    }

    #[test]
    fn resolved_echo_roundtrips() {
        let mut cfg = RunConfig::from_toml_str("seed = 9\n[jigsaw]\nmode = \"infer\"\n[render]\nviews = \"random:3\"").unwrap();
        cfg.bake.depth_epsilon = 0.1 + 0.2;
        let echoed = cfg.resolved();
        assert_eq!(echoed.jigsaw.patch_size, Some(128));
        assert_eq!(echoed.jigsaw.mask_ratio, Some(0.0));
        assert_eq!(echoed.render.views, ViewSpec::Random(3));
        assert_eq!(RunConfig::from_toml_str(&echoed.to_toml()).unwrap(), echoed);
    }

    #[test]
    fn view_specs() {
        assert_eq!("ortho6".parse::<ViewSpec>(), Ok(ViewSpec::Ortho6));
        assert_eq!("random:4".parse::<ViewSpec>(), Ok(ViewSpec::Random(4)));
        for bad in ["random:0", "random:", "ortho", "random:x"] {
            assert!(bad.parse::<ViewSpec>().is_err());
        }
    }

    #[test]
    fn verbosity_steps() {
        assert_eq!(Verbosity::Warn.raised(1), Verbosity::Info);
        assert_eq!(Verbosity::Warn.raised(9), Verbosity::Trace);
    }
}
