//! Files: PNG images, `.wreath` shape files, sample records, plain
//! `key=value` configuration and run manifests.

mod config;
mod manifest;
mod png;
mod samples;
mod shape_file;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{parse_config, read_config, RunConfig};
pub use manifest::RunManifest;
pub use png::{decode_png, encode_png, read_png, write_png};
pub use samples::{format_sample, parse_sample, read_samples, write_samples, SampleRecord};
pub use shape_file::{
    format_shape_file, parse_shape_file, read_shape_file, write_shape_file, ShapeFile,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("{}: file not found", .path.display())]
    Missing { path: PathBuf },
    #[error("{}: malformed image: {reason}", .path.display())]
    MalformedImage { path: PathBuf, reason: String },
    #[error("{}: cannot write: {reason}", .path.display())]
    Unwritable { path: PathBuf, reason: String },
    #[error("{}: read failed: {reason}", .path.display())]
    Read { path: PathBuf, reason: String },
    #[error("{}:{line}: {reason}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl IoError {
    pub(crate) fn at(self, path: &Path) -> IoError {
        match self {
            IoError::Parse { line, reason, .. } => IoError::Parse {
                path: path.to_path_buf(),
                line,
                reason,
            },
            IoError::MalformedImage { reason, .. } => IoError::MalformedImage {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| read_error(path, e))
}

pub(crate) fn read_error(path: &Path, e: std::io::Error) -> IoError {
    if e.kind() == std::io::ErrorKind::NotFound {
        IoError::Missing {
            path: path.to_path_buf(),
        }
    } else {
        IoError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    }
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|e| IoError::Unwritable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub(crate) fn parse_error(line: usize, reason: impl Into<String>) -> IoError {
    IoError::Parse {
        path: PathBuf::new(),
        line,
        reason: reason.into(),
    }
}
