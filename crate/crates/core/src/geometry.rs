//! Affine maps of the plane in homogeneous coordinates.
//!
//! Every transformation family used by the shape model (translations,
//! discrete and continuous rotations about the origin, mirrors and uniform
//! scalings) is a 3×3 matrix whose last row is `(0, 0, 1)`. Rotations follow
//! the row convention `(cos θ, sin θ; −sin θ, cos θ)`, so a positive angle
//! turns `(1, 0)` towards `(0, −1)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation order must be at least 2, got {0}")]
    InvalidRotationOrder(i64),
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::X => f.write_str("X"),
            Axis::Y => f.write_str("Y"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Homogeneous 2D affine transformation stored as a dense row-major 3×3
/// matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    m: [[f64; 3]; 3],
}

impl Default for Transform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds a transform from the upper 2×3 block; the last row is fixed.
    pub fn from_affine(a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64) -> Self {
        Transform {
            m: [[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn translation(axis: Axis, t: f64) -> Self {
        match axis {
            Axis::X => Self::from_affine(1.0, 0.0, t, 0.0, 1.0, 0.0),
            Axis::Y => Self::from_affine(1.0, 0.0, 0.0, 0.0, 1.0, t),
        }
    }

    /// Element `k` of the cyclic rotation group of order `n`, θ = 2πk/n.
    ///
    /// Equal angles (as reduced fractions of a full turn) produce
    /// bit-identical matrices, and multiples of 30° are exact.
    pub fn rotation(n: i64, k: i64) -> Result<Self, GeometryError> {
        if n < 2 {
            return Err(GeometryError::InvalidRotationOrder(n));
        }
        let (cos, sin) = turn_fraction_cos_sin(k.rem_euclid(n), n);
        Ok(Self::rotation_from_cos_sin(cos, sin))
    }

    pub fn rotation_continuous(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Self::rotation_from_cos_sin(snap(cos), snap(sin))
    }

    fn rotation_from_cos_sin(cos: f64, sin: f64) -> Self {
        Self::from_affine(cos, sin, 0.0, -sin, cos, 0.0)
    }

    /// Mirror along the X axis: odd `k` maps `(x, y)` to `(x, −y)`.
    pub fn mirror(k: i64) -> Self {
        if k.rem_euclid(2) == 0 {
            Self::IDENTITY
        } else {
            Self::from_affine(1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
        }
    }

    /// Mirror along the Y axis: odd `k` maps `(x, y)` to `(−x, y)`.
    pub fn mirror_y(k: i64) -> Self {
        if k.rem_euclid(2) == 0 {
            Self::IDENTITY
        } else {
            Self::from_affine(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
        }
    }

    /// Uniform scaling by `l^k`.
    pub fn scale(l: f64, k: i64) -> Result<Self, GeometryError> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(GeometryError::InvalidScale(l));
        }
        let f = l.powi(k as i32);
        Ok(Self::from_affine(f, 0.0, 0.0, 0.0, f, 0.0))
    }

    /// `self ∘ other`: `other` is applied first.
    pub fn compose(&self, other: &Transform) -> Transform {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(2) {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        m[2] = [0.0, 0.0, 1.0];
        Transform { m }
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.m;
        Point {
            x: m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            y: m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        }
    }

    /// Applies the transform to a homogeneous column vector.
    pub fn apply_homogeneous(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Length scale factor of a similarity transform.
    pub fn length_scale(&self) -> f64 {
        self.determinant().abs().sqrt()
    }

    pub fn approx_eq(&self, other: &Transform, tol: f64) -> bool {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// cos/sin of the angle `2π·k/n` for `0 <= k < n`, computed after reducing
/// the fraction so that equal angles give identical bits.
fn turn_fraction_cos_sin(k: i64, n: i64) -> (f64, f64) {
    let g = gcd(k, n);
    let (k, n) = (k / g, n / g);
    let quarter_turns = 4 * k;
    let quadrant = quarter_turns / n;
    let rem = quarter_turns % n;
    let (c0, s0) = if rem == 0 {
        (1.0, 0.0)
    } else if 3 * rem == n {
        // 30 degrees
        (half_sqrt3(), 0.5)
    } else if 3 * rem == 2 * n {
        // 60 degrees
        (0.5, half_sqrt3())
    } else {
        let theta = FRAC_PI_2 * rem as f64 / n as f64;
        (theta.cos(), theta.sin())
    };
    match quadrant {
        0 => (c0, s0),
        1 => (-s0, c0),
        2 => (-c0, -s0),
        _ => (s0, -c0),
    }
}

fn half_sqrt3() -> f64 {
    0.5 * 3.0f64.sqrt()
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs().max(1)
}

fn snap(v: f64) -> f64 {
    const EPS: f64 = 4.0 * f64::EPSILON;
    if v.abs() < EPS {
        0.0
    } else if (v - 1.0).abs() < EPS {
        1.0
    } else if (v + 1.0).abs() < EPS {
        -1.0
    } else {
        v
    }
}
