//! Posterior sample records: one line per sample, tab-separated
//! `key=value` fields.

use std::fmt::Write as _;
use std::path::Path;

use super::{parse_error, read_text, write_bytes, IoError};
use crate::grammar::{parse, Shape};
use crate::inference::PosteriorSample;
use crate::priors::BlurParams;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub iteration: usize,
    pub shape: Shape,
    pub lambda: f64,
    pub blur: BlurParams,
    pub log_post: f64,
    pub log_lik: f64,
}

impl From<&PosteriorSample> for SampleRecord {
    fn from(s: &PosteriorSample) -> Self {
        SampleRecord {
            iteration: s.iteration,
            shape: s.shape.clone(),
            lambda: s.lambda,
            blur: s.blur,
            log_post: s.log_post,
            log_lik: s.log_lik,
        }
    }
}

const KEYS: [&str; 7] = [
    "iteration",
    "shape",
    "lambda",
    "blur_w",
    "blur_sigma",
    "log_post",
    "log_lik",
];

pub fn format_sample(r: &SampleRecord) -> String {
    format!(
        "iteration={}\tshape={}\tlambda={:?}\tblur_w={}\tblur_sigma={:?}\tlog_post={:?}\tlog_lik={:?}",
        r.iteration, r.shape, r.lambda, r.blur.w_b, r.blur.sigma_b, r.log_post, r.log_lik
    )
}

fn field<T: std::str::FromStr>(v: &str, key: &str, line: usize) -> Result<T, IoError> {
    v.parse()
        .map_err(|_| parse_error(line, format!("bad value for {key}: {v:?}")))
}

/// Parses one record; `line` is only used in errors.
pub fn parse_sample(text: &str, line: usize) -> Result<SampleRecord, IoError> {
    let parts: Vec<&str> = text.split('\t').collect();
    if parts.len() != KEYS.len() {
        return Err(parse_error(
            line,
            format!("expected {} fields, found {}", KEYS.len(), parts.len()),
        ));
    }
    let mut values = Vec::with_capacity(KEYS.len());
    for (part, key) in parts.iter().zip(KEYS) {
        match part.split_once('=') {
            Some((k, v)) if k == key => values.push(v),
            _ => return Err(parse_error(line, format!("expected field {key}"))),
        }
    }
    let shape = parse(values[1]).map_err(|e| parse_error(line, format!("bad shape: {e}")))?;
    Ok(SampleRecord {
        iteration: field(values[0], "iteration", line)?,
        shape,
        lambda: field(values[2], "lambda", line)?,
        blur: BlurParams {
            w_b: field(values[3], "blur_w", line)?,
            sigma_b: field(values[4], "blur_sigma", line)?,
        },
        log_post: field(values[5], "log_post", line)?,
        log_lik: field(values[6], "log_lik", line)?,
    })
}

pub fn write_samples(records: &[SampleRecord], path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", format_sample(r));
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>, IoError> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| parse_sample(l, i + 1))
        .collect::<Result<_, _>>()
        .map_err(|e| e.at(path))
}
