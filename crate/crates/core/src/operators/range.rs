use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed region known to contain the numerical range of an operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RangeRegion {
    /// `{Re z <= max_re}`.
    HalfPlane {
        max_re: f64,
    },
    /// Points whose direction from `vertex` is within `half_angle` of the
    /// negative real axis. `half_angle = 0` is the ray `(-inf, vertex]`.
    Sector {
        vertex: Complex64,
        half_angle: f64,
    },
    Disk {
        center: Complex64,
        radius: f64,
    },
    /// Convex polygon, vertices in order (either orientation).
    Polygon {
        vertices: Vec<Complex64>,
    },
}

impl RangeRegion {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RangeRegion::HalfPlane { max_re } => max_re.is_finite(),
            RangeRegion::Sector { vertex, half_angle } => {
                finite(*vertex) && (0.0..=PI).contains(half_angle)
            }
            RangeRegion::Disk { center, radius } => finite(*center) && *radius >= 0.0,
            RangeRegion::Polygon { vertices } => {
                !vertices.is_empty() && vertices.iter().all(|v| finite(*v))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "malformed range region {self:?}"
            )))
        }
    }

    /// Euclidean distance from `z` to the region; zero inside.
    pub fn distance(&self, z: Complex64) -> f64 {
        match self {
            RangeRegion::HalfPlane { max_re } => (z.re - max_re).max(0.0),
            RangeRegion::Sector { vertex, half_angle } => {
                let d = z - vertex;
                let r = d.norm();
                if r == 0.0 {
                    return 0.0;
                }
                // Angle between d and the negative real axis, in [0, π].
                let psi = PI - d.arg().abs();
                let gap = psi - half_angle;
                if gap <= 0.0 {
                    0.0
                } else if gap >= FRAC_PI_2 {
                    r
                } else {
                    r * gap.sin()
                }
            }
            RangeRegion::Disk { center, radius } => ((z - center).norm() - radius).max(0.0),
            RangeRegion::Polygon { vertices } => polygon_distance(vertices, z),
        }
    }
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

fn segment_distance(a: Complex64, b: Complex64, z: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let s = (((z - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + ab * s)).norm()
}

fn polygon_distance(vertices: &[Complex64], z: Complex64) -> f64 {
    let n = vertices.len();
    let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    let boundary = (0..n)
        .map(|i| {
            let (a, b) = edge(i);
            segment_distance(a, b, z)
        })
        .fold(f64::INFINITY, f64::min);
    if n < 3 {
        return boundary;
    }
    // Inside a convex polygon iff all edge cross products share a sign.
    let (mut pos, mut neg) = (false, false);
    for i in 0..n {
        let (a, b) = edge(i);
        let cross = ((b - a).conj() * (z - a)).im;
        pos |= cross > 0.0;
        neg |= cross < 0.0;
    }
    if pos && neg {
        boundary
    } else {
        0.0
    }
}

/// `1/dist(z, region)`, a bound on `||R(z, A)||` whenever the region contains
/// the numerical range of `A`. `None` when `z` lies in the region.
pub fn resolvent_norm_bound(z: Complex64, region: &RangeRegion) -> Option<f64> {
    let d = region.distance(z);
    (d > 0.0).then(|| 1.0 / d)
}

/// Input data describing a generator: Hille–Yosida constants and optional
/// analytic-sector and numerical-range information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBounds {
    /// `||exp(tA)|| <= M e^{ωt}`, with `M >= 1`.
    pub m: f64,
    pub omega: f64,
    /// The sector `|arg z| < π - δ` lies in the resolvent set.
    pub sector_delta: Option<f64>,
    pub range_region: Option<RangeRegion>,
    /// `K` in `||R(z, A)|| <= K/|z|` on the contour. When absent a default
    /// from the sector geometry is used and flagged as not certified.
    pub sector_constant: Option<f64>,
}

impl GeneratorBounds {
    pub fn new(m: f64, omega: f64) -> Self {
        Self {
            m,
            omega,
            sector_delta: None,
            range_region: None,
            sector_constant: None,
        }
    }

    /// Contraction semigroup with spectrum within angle `delta` of the
    /// negative real axis.
    pub fn sectorial(delta: f64) -> Self {
        Self {
            sector_delta: Some(delta),
            ..Self::new(1.0, 0.0)
        }
    }

    pub fn with_region(mut self, region: RangeRegion) -> Self {
        self.range_region = Some(region);
        self
    }

    pub fn with_sector_constant(mut self, k: f64) -> Self {
        self.sector_constant = Some(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 1.0) || !self.m.is_finite() {
            return Err(Error::InvalidInput(format!(
                "M must be >= 1, got {}",
                self.m
            )));
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidInput("omega must be finite".into()));
        }
        if let Some(delta) = self.sector_delta {
            if !(0.0..FRAC_PI_2).contains(&delta) {
                return Err(Error::InvalidInput(format!(
                    "delta must lie in [0, π/2), got {delta}"
                )));
            }
        }
        if let Some(k) = self.sector_constant {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "sector constant must be positive, got {k}"
                )));
            }
        }
        if let Some(region) = &self.range_region {
            region.validate()?;
        }
        Ok(())
    }

    /// Resolvent-norm bound at `z` and whether it is certified.
    ///
    /// The numerical-range bound is preferred; otherwise `K/|z|` with the
    /// supplied or default sector constant. `None` if no finite bound applies.
    pub fn resolvent_bound(&self, z: Complex64) -> Option<(f64, bool)> {
        if let Some(region) = &self.range_region {
            if let Some(b) = resolvent_norm_bound(z, region) {
                return Some((b, true));
            }
        }
        let delta = self.sector_delta?;
        let r = z.norm();
        if r == 0.0 {
            return None;
        }
        match self.sector_constant {
            Some(k) => Some((k / r, true)),
            None => {
                let phi = (PI - delta) - z.arg().abs();
                (phi > 0.0).then(|| (1.0 / (r * phi.min(FRAC_PI_2).sin()), false))
            }
        }
    }
}
