//! Shape DSL: data model, validation, text format and canonical form.
//!
//! A shape is an ordered list of `(group, occupancy)` levels. Level 1 is the
//! innermost one and acts first on the origin; every later level copies the
//! figure built so far once per occupied group element.

mod canonical;
mod parse;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{Axis, Transform};

pub use canonical::canonicalize;
pub use parse::{parse, parse_unvalidated, ParseError};

/// Default cap on the number of levels in a shape.
pub const MAX_LEVELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupSpec {
    TransX,
    TransY,
    /// Discrete rotation group of order `n` about the origin.
    Rot(u32),
    /// Continuous rotation about the origin.
    RotFull,
    Mirror,
    /// Uniform scaling group generated by `l`.
    Scale(f64),
}

impl GroupSpec {
    /// Size of the index set for finite groups.
    pub fn order(&self) -> Option<u32> {
        match self {
            GroupSpec::Rot(n) => Some(*n),
            GroupSpec::Mirror => Some(2),
            _ => None,
        }
    }

    pub fn translation_axis(&self) -> Option<Axis> {
        match self {
            GroupSpec::TransX => Some(Axis::X),
            GroupSpec::TransY => Some(Axis::Y),
            _ => None,
        }
    }

    pub fn is_translation(&self) -> bool {
        self.translation_axis().is_some()
    }

    /// Whether every element of the group fixes the origin.
    pub fn fixes_origin(&self) -> bool {
        !self.is_translation()
    }

    /// The group element with index `k`. For `RotFull` the index is an angle
    /// in radians.
    pub fn element(&self, k: f64) -> Transform {
        match *self {
            GroupSpec::TransX => Transform::translation(Axis::X, k),
            GroupSpec::TransY => Transform::translation(Axis::Y, k),
            GroupSpec::Rot(n) => {
                Transform::rotation(n.max(2) as i64, k as i64).expect("order is at least 2")
            }
            GroupSpec::RotFull => Transform::rotation_continuous(k),
            GroupSpec::Mirror => Transform::mirror(k as i64),
            GroupSpec::Scale(l) => Transform::scale(l, k as i64).unwrap_or(Transform::IDENTITY),
        }
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::TransX => f.write_str("Trans X"),
            GroupSpec::TransY => f.write_str("Trans Y"),
            GroupSpec::Rot(n) => write!(f, "Rot {n}"),
            GroupSpec::RotFull => f.write_str("Rot 2π"),
            GroupSpec::Mirror => f.write_str("Mirror"),
            GroupSpec::Scale(l) => write!(f, "Scale {}", fmt_real(*l)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Occupancy {
    /// Explicit set of group indices. Integers for finite groups and scale;
    /// translations may use arbitrary reals.
    Discrete(Vec<f64>),
    /// Continuous range of translation offsets.
    Interval {
        lo: f64,
        hi: f64,
    },
    Full,
}

impl Occupancy {
    pub fn single(v: f64) -> Self {
        Occupancy::Discrete(vec![v])
    }

    pub fn is_single(&self) -> bool {
        matches!(self, Occupancy::Discrete(v) if v.len() == 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub group: GroupSpec,
    pub occ: Occupancy,
}

impl Level {
    pub fn new(group: GroupSpec, occ: Occupancy) -> Self {
        Level { group, occ }
    }

    /// Continuous levels sweep their fiber into a curve instead of making
    /// countable copies.
    pub fn is_continuous(&self) -> bool {
        matches!(self.occ, Occupancy::Interval { .. }) || self.group == GroupSpec::RotFull
    }

    /// Indices of the discrete copies made by this level, in drawing order.
    /// Empty for continuous levels.
    pub fn indices(&self) -> Vec<f64> {
        if self.is_continuous() {
            return Vec::new();
        }
        match &self.occ {
            Occupancy::Discrete(v) => v.clone(),
            Occupancy::Full => match self.group.order() {
                Some(n) => (0..n).map(f64::from).collect(),
                None => Vec::new(),
            },
            Occupancy::Interval { .. } => Vec::new(),
        }
    }

    /// Number of copies of the fiber; continuous levels count as one.
    pub fn copy_count(&self) -> usize {
        if self.is_continuous() {
            1
        } else {
            self.indices().len()
        }
    }

    /// A level with exactly one discrete element.
    pub fn is_single(&self) -> bool {
        !self.is_continuous() && self.copy_count() == 1
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.group, format_occupancy(self))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Shape {
    pub levels: Vec<Level>,
}

impl Shape {
    pub fn new(levels: Vec<Level>) -> Self {
        Shape { levels }
    }

    pub fn empty() -> Self {
        Shape::default()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        validate(self, MAX_LEVELS)
    }

    /// Product of per-level copy counts.
    pub fn copy_count(&self) -> usize {
        self.levels
            .iter()
            .fold(1usize, |acc, l| acc.saturating_mul(l.copy_count()))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, level) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{level}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Shape {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// Deterministic text form accepted by [`parse`].
pub fn serialize(s: &Shape) -> String {
    s.to_string()
}

/// Invariant violations. Level numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("shape has {count} levels, at most {max} allowed")]
    TooManyLevels { count: usize, max: usize },
    #[error("level {level}: rotation order must be at least 2, got {order}")]
    InvalidRotationOrder { level: usize, order: u32 },
    #[error("level {level}: scale factor must be positive and finite, got {value}")]
    InvalidScale { level: usize, value: f64 },
    #[error("level {level}: empty occupancy")]
    EmptyOccupancy { level: usize },
    #[error("level {level}: occupancy value {value} is not finite")]
    NonFiniteIndex { level: usize, value: f64 },
    #[error("level {level}: occupancy indices are not sorted")]
    UnsortedOccupancy { level: usize },
    #[error("level {level}: duplicate occupancy index {value}")]
    DuplicateIndex { level: usize, value: f64 },
    #[error("level {level}: index {value} must be an integer for {group}")]
    NonIntegerIndex {
        level: usize,
        value: f64,
        group: String,
    },
    #[error("level {level}: index {value} outside 0..{order}")]
    IndexOutOfRange {
        level: usize,
        value: f64,
        order: u32,
    },
    #[error("level {level}: the listed indices cover the whole group; write it as full occupancy")]
    WholeSetNotFull { level: usize },
    #[error("level {level}: interval [{lo}, {hi}] has lo > hi")]
    ReversedInterval { level: usize, lo: f64, hi: f64 },
    #[error("level {level}: intervals are only allowed on translations")]
    IntervalOnNonTranslation { level: usize },
    #[error("level {level}: full occupancy is undefined for {group}")]
    FullOnInfiniteGroup { level: usize, group: String },
    #[error("level {level}: continuous rotation only supports full occupancy")]
    PartialContinuousRotation { level: usize },
    #[error("level {level}: continuous occupancy needs a single point as fiber")]
    ContinuousFiberNotPoint { level: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrammarError {
    #[error("syntax error: {0}")]
    Syntax(#[from] ParseError),
    #[error("invalid shape: {0}")]
    Invalid(#[from] ValidationError),
    #[error("invalid control structure: {0}")]
    InvalidControl(String),
}

/// Checks every shape invariant, reporting the first violation found.
pub fn validate(s: &Shape, max_levels: usize) -> Result<(), ValidationError> {
    if s.levels.len() > max_levels {
        return Err(ValidationError::TooManyLevels {
            count: s.levels.len(),
            max: max_levels,
        });
    }
    let mut point_fiber = true;
    for (i, lvl) in s.levels.iter().enumerate() {
        let level = i + 1;
        validate_level(lvl, level)?;
        if lvl.is_continuous() {
            if !point_fiber {
                return Err(ValidationError::ContinuousFiberNotPoint { level });
            }
            point_fiber = false;
        } else if lvl.copy_count() != 1 {
            point_fiber = false;
        }
    }
    Ok(())
}

fn validate_level(lvl: &Level, level: usize) -> Result<(), ValidationError> {
    match lvl.group {
        GroupSpec::Rot(n) if n < 2 => {
            return Err(ValidationError::InvalidRotationOrder { level, order: n })
        }
        GroupSpec::Scale(l) if !(l > 0.0 && l.is_finite()) => {
            return Err(ValidationError::InvalidScale { level, value: l })
        }
        _ => {}
    }
    match &lvl.occ {
        Occupancy::Full => {
            if lvl.group.order().is_none() && lvl.group != GroupSpec::RotFull {
                return Err(ValidationError::FullOnInfiniteGroup {
                    level,
                    group: lvl.group.to_string(),
                });
            }
        }
        Occupancy::Interval { lo, hi } => {
            if !lvl.group.is_translation() {
                return Err(ValidationError::IntervalOnNonTranslation { level });
            }
            for v in [*lo, *hi] {
                if !v.is_finite() {
                    return Err(ValidationError::NonFiniteIndex { level, value: v });
                }
            }
            if lo > hi {
                return Err(ValidationError::ReversedInterval {
                    level,
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        Occupancy::Discrete(values) => {
            if lvl.group == GroupSpec::RotFull {
                return Err(ValidationError::PartialContinuousRotation { level });
            }
            if values.is_empty() {
                return Err(ValidationError::EmptyOccupancy { level });
            }
            for &v in values {
                if !v.is_finite() {
                    return Err(ValidationError::NonFiniteIndex { level, value: v });
                }
                if !lvl.group.is_translation() && v.fract() != 0.0 {
                    return Err(ValidationError::NonIntegerIndex {
                        level,
                        value: v,
                        group: lvl.group.to_string(),
                    });
                }
                if let Some(n) = lvl.group.order() {
                    if v < 0.0 || v >= f64::from(n) {
                        return Err(ValidationError::IndexOutOfRange {
                            level,
                            value: v,
                            order: n,
                        });
                    }
                }
            }
            for w in values.windows(2) {
                if w[0] == w[1] {
                    return Err(ValidationError::DuplicateIndex { level, value: w[0] });
                }
                if w[0] > w[1] {
                    return Err(ValidationError::UnsortedOccupancy { level });
                }
            }
            if let Some(n) = lvl.group.order() {
                if values.len() == n as usize {
                    return Err(ValidationError::WholeSetNotFull { level });
                }
            }
        }
    }
    Ok(())
}

/// Regular polygon with `n` sides, built from a segment `[-t, t]` that is
/// rescaled by `l`, lifted to height `h` and copied by `Rot n`.
///
/// The rescaling makes the side length `2·l·t` equal to that of the regular
/// polygon with apothem `h`, i.e. `l = h·tan(π/n)/t`.
pub fn regular_polygon_control(n: u32, t: f64, h: f64) -> Result<Shape, GrammarError> {
    if n < 3 {
        return Err(GrammarError::InvalidControl(format!(
            "polygon needs at least 3 sides, got {n}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(GrammarError::InvalidControl(format!(
            "half-width must be positive, got {t}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(GrammarError::InvalidControl(format!(
            "height must be positive, got {h}"
        )));
    }
    let l = h * (std::f64::consts::PI / f64::from(n)).tan() / t;
    let shape = Shape::new(vec![
        Level::new(GroupSpec::Scale(l), Occupancy::single(-1.0)),
        Level::new(GroupSpec::TransX, Occupancy::Interval { lo: -t, hi: t }),
        Level::new(GroupSpec::Scale(l), Occupancy::single(1.0)),
        Level::new(GroupSpec::TransY, Occupancy::single(h)),
        Level::new(GroupSpec::Rot(n), Occupancy::Full),
    ]);
    validate(&shape, MAX_LEVELS)?;
    Ok(shape)
}

/// Shortest round-tripping text for a real, always marked as non-integer
/// (`1.0`, `0.5`, `1e-7`).
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

fn is_integral(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15
}

fn format_occupancy(lvl: &Level) -> String {
    match &lvl.occ {
        Occupancy::Full => match lvl.group {
            GroupSpec::Rot(n) => format!("[0..{}]", n.saturating_sub(1)),
            GroupSpec::Mirror => "[0..1]".to_string(),
            _ => "full".to_string(),
        },
        Occupancy::Interval { lo, hi } => format!("[{},{}]", fmt_real(*lo), fmt_real(*hi)),
        Occupancy::Discrete(values) => {
            if values.iter().all(|v| is_integral(*v)) {
                format!("[{}]", format_integer_runs(values))
            } else if values.len() == 1 {
                let c = fmt_real(values[0]);
                format!("[{c},{c}]")
            } else {
                let items: Vec<String> = values
                    .iter()
                    .map(|v| {
                        if is_integral(*v) {
                            format!("{}", *v as i64)
                        } else {
                            fmt_real(*v)
                        }
                    })
                    .collect();
                if values.len() == 2 {
                    format!("{{{}}}", items.join(","))
                } else {
                    format!("[{}]", items.join(","))
                }
            }
        }
    }
}

/// Joins integers, collapsing consecutive runs of three or more into `a..b`.
fn format_integer_runs(values: &[f64]) -> String {
    let ints: Vec<i64> = values.iter().map(|v| *v as i64).collect();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < ints.len() {
        let mut j = i;
        while j + 1 < ints.len() && ints[j + 1] == ints[j] + 1 {
            j += 1;
        }
        if j - i >= 2 {
            parts.push(format!("{}..{}", ints[i], ints[j]));
        } else {
            for v in &ints[i..=j] {
                parts.push(v.to_string());
            }
        }
        i = j + 1;
    }
    parts.join(",")
}
