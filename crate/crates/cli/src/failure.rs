//! Errors surfaced to the user, each with a module-qualified code and an
//! exit status: 1 for bad input, 2 for internal failures.

use std::fmt;

use jigsaw3d::attention::AttentionError;
use jigsaw3d::bake::BakeError;
use jigsaw3d::config::ConfigError;
use jigsaw3d::dataset::DatasetError;
use jigsaw3d::image::ImageError;
use jigsaw3d::jigsaw::JigsawError;
use jigsaw3d::mesh::MeshError;
use jigsaw3d::metrics::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validation,
    Internal,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub code: String,
    pub message: String,
}

impl Failure {
    pub fn validation(code: &str, message: impl fmt::Display) -> Self {
        Self {
            kind: Kind::Validation,
            code: code.to_string(),
            message: message.to_string(),
        }
    }

    pub fn internal(code: &str, message: impl fmt::Display) -> Self {
        Self {
            kind: Kind::Internal,
            code: code.to_string(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Validation => 1,
            Kind::Internal => 2,
        }
    }

    /// `error[module::Code]: message` on one line.
    pub fn line(&self) -> String {
        let msg: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {}", self.code, msg)
    }

    /// Failure writing an output; never the user's fault once inputs validated.
    pub fn write(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Self::internal("io::Write", format!("{}: {e}", path.display()))
    }
}

impl From<JigsawError> for Failure {
    fn from(e: JigsawError) -> Self {
        let code = match e {
            JigsawError::NonDivisibleDimensions { .. } => "jigsaw::NonDivisibleDimensions",
            JigsawError::DimensionMismatch(_) => "jigsaw::DimensionMismatch",
            JigsawError::InvalidConfig(_) => "jigsaw::InvalidConfig",
        };
        Self::validation(code, e)
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        let code = match e {
            ImageError::InvalidDimensions { .. } => "image::InvalidDimensions",
            ImageError::OutOfRange { .. } => "image::OutOfRange",
            ImageError::UnsupportedChannels(_) => "image::UnsupportedChannels",
            ImageError::Codec { .. } => "image::Codec",
        };
        Self::validation(code, e)
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        let code = match e {
            MeshError::Parse { .. } => "mesh::ParseError",
            MeshError::MissingUVs => "mesh::MissingUVs",
            MeshError::EmptyMesh => "mesh::EmptyMesh",
            MeshError::Io { .. } => "mesh::Io",
        };
        Self::validation(code, e)
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::ChannelMismatch { .. } => "metrics::ChannelMismatch",
            MetricsError::EmptyFeature => "metrics::EmptyFeature",
            MetricsError::EmptyViewList => "metrics::EmptyViewList",
        };
        Self::validation(code, e)
    }
}

impl From<BakeError> for Failure {
    fn from(e: BakeError) -> Self {
        let code = match e {
            BakeError::Mesh(inner) => return inner.into(),
            BakeError::CountMismatch { .. } => "bake::CountMismatch",
            BakeError::SizeMismatch { .. } => "bake::SizeMismatch",
            BakeError::NoValidTexels => "bake::NoValidTexels",
            BakeError::InvalidConfig(_) => "bake::InvalidConfig",
        };
        Self::validation(code, e)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::Mesh(inner) => return inner.into(),
            DatasetError::Jigsaw(inner) => return inner.into(),
            DatasetError::Image(inner) => return inner.into(),
            DatasetError::Io { .. } => return Self::internal("dataset::Io", e),
            DatasetError::MissingFile(_) => "dataset::MissingFile",
            DatasetError::VersionMismatch { .. } => "dataset::VersionMismatch",
            DatasetError::CorruptManifest(_) => "dataset::CorruptManifest",
            DatasetError::DuplicateId(_) => "dataset::DuplicateId",
            DatasetError::InvalidConfig(_) => "dataset::InvalidConfig",
        };
        Self::validation(code, e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => "config::Io",
            ConfigError::Parse(_) => "config::Parse",
            ConfigError::Invalid(_) => "config::Invalid",
        };
        Self::validation(code, e)
    }
}

impl From<AttentionError> for Failure {
    fn from(e: AttentionError) -> Self {
        Self::internal("attention::KernelError", e)
    }
}
