//! `.wreath` files: the shape in the text syntax, optionally preceded by
//! `# key=value` comment lines carrying metadata such as the scale.

use std::path::Path;

use super::{parse_error, read_text, write_bytes, IoError};
use crate::grammar::{parse, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFile {
    pub shape: Shape,
    pub meta: Vec<(String, String)>,
}

impl ShapeFile {
    pub fn new(shape: Shape) -> Self {
        ShapeFile {
            shape,
            meta: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn lambda(&self) -> Option<f64> {
        self.get("lambda").and_then(|v| v.parse().ok())
    }
}

pub fn format_shape_file(f: &ShapeFile) -> String {
    let mut out = String::new();
    for (k, v) in &f.meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(&f.shape.to_string());
    out.push('\n');
    out
}

pub fn parse_shape_file(text: &str) -> Result<ShapeFile, IoError> {
    let mut meta = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    let shape = parse(text).map_err(|e| {
        let line = match &e {
            crate::grammar::GrammarError::Syntax(p) => p.line,
            _ => 0,
        };
        parse_error(line, e.to_string())
    })?;
    Ok(ShapeFile { shape, meta })
}

pub fn read_shape_file(path: &Path) -> Result<ShapeFile, IoError> {
    parse_shape_file(&read_text(path)?).map_err(|e| e.at(path))
}

pub fn write_shape_file(f: &ShapeFile, path: &Path) -> Result<(), IoError> {
    write_bytes(path, format_shape_file(f).as_bytes())
}
