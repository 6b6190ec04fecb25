//! Spherical geometry on the ERP lattice.
//!
//! Latitude runs from `-π/2` (south pole) to `π/2` (north pole) with the
//! equator at 0; longitude lies in `(-π, π]`. Pixel centers sit at half-integer
//! offsets, so row `u` and column `v` map to
//!
//! ```text
//! lat = π/2 - π (u + 0.5) / H
//! lon = 2π (v + 0.5) / W - π
//! ```

use core::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::math;
use crate::swt::SampleGrid;

/// A point on the sphere in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngleCoord {
    pub lat: f64,
    pub lon: f64,
}

impl AngleCoord {
    /// Validates `lat` and wraps `lon` into `(-π, π]`.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::domain("angle components must be finite"));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&lat) {
            return Err(Error::domain("latitude outside [-pi/2, pi/2]"));
        }
        Ok(AngleCoord {
            lat,
            lon: wrap_lon(lon),
        })
    }

    pub const fn equator() -> Self {
        AngleCoord { lat: 0.0, lon: 0.0 }
    }
}

/// Wraps a longitude into `(-π, π]`. Values already in range are returned
/// unchanged.
pub fn wrap_lon(lon: f64) -> f64 {
    if lon > -PI && lon <= PI {
        return lon;
    }
    let r = math::rem_euclid(lon + PI, TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// A point on the unit sphere.
///
/// Constructors keep `x² + y² + z² = 1` to within rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVec3 {
    /// Normalizes `(x, y, z)`; the zero vector is rejected.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = math::sqrt(x * x + y * y + z * z);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::domain("cannot normalize a zero or non-finite vector"));
        }
        Ok(UnitVec3 {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn dot(&self, o: &UnitVec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Components of the cross product; not a unit vector in general.
    pub fn cross(&self, o: &UnitVec3) -> [f64; 3] {
        [
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        ]
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// A proper rotation of 3-space stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation about the polar axis; adds `alpha` to every longitude.
    pub fn yaw(alpha: f64) -> Self {
        let (s, c) = math::sin_cos(alpha);
        RotationMatrix([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation about the `y` axis. Positive `beta` tilts `(1, 0, 0)` north,
    /// so a point on the prime meridian gains `beta` latitude.
    pub fn pitch(beta: f64) -> Self {
        let (s, c) = math::sin_cos(beta);
        RotationMatrix([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    }

    pub fn mul(&self, rhs: &RotationMatrix) -> RotationMatrix {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        RotationMatrix(out)
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.0;
        RotationMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn apply(&self, p: &UnitVec3) -> UnitVec3 {
        let m = &self.0;
        UnitVec3 {
            x: m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
            y: m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
            z: m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
        }
    }

    /// Largest absolute entry of `RᵀR - I`.
    pub fn orthogonality_error(&self) -> f64 {
        let rtr = self.transpose().mul(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((rtr.0[i][j] - target).abs());
            }
        }
        err
    }
}

/// The ERP pixel lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErpGridSpec {
    pub height: usize,
    pub width: usize,
}

impl ErpGridSpec {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 1 {
            return Err(Error::config("ERP height must be at least 1"));
        }
        if width < 2 {
            return Err(Error::config("ERP width must be at least 2"));
        }
        if height > u32::MAX as usize || width > u32::MAX as usize / height {
            return Err(Error::config("ERP grid too large for 32-bit pixel indices"));
        }
        Ok(ErpGridSpec { height, width })
    }

    /// `true` for the usual 2:1 panorama aspect.
    pub fn is_canonical(&self) -> bool {
        self.width == 2 * self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Latitude spacing between pixel rows.
    pub fn lat_step(&self) -> f64 {
        PI / self.height as f64
    }

    /// Longitude spacing between pixel columns.
    pub fn lon_step(&self) -> f64 {
        TAU / self.width as f64
    }
}

/// Continuous pixel coordinates (row `u`, column `v`) to angles.
pub fn pixel_to_angle(u: f64, v: f64, spec: &ErpGridSpec) -> Result<AngleCoord> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    if !(u >= 0.0 && u < h) || !(v >= 0.0 && v < w) {
        return Err(Error::domain("pixel coordinate outside the ERP grid"));
    }
    let lat = FRAC_PI_2 - PI * (u + 0.5) / h;
    let lon = TAU * (v + 0.5) / w - PI;
    Ok(AngleCoord { lat, lon })
}

/// Angles to continuous pixel coordinates `(u, v)`; inverse of
/// [`pixel_to_angle`]. The pole rows map to `u = -0.5` and `u = H - 0.5`.
pub fn angle_to_pixel(a: &AngleCoord, spec: &ErpGridSpec) -> (f64, f64) {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let u = (FRAC_PI_2 - a.lat) * h / PI - 0.5;
    let v = (a.lon + PI) * w / TAU - 0.5;
    (u, v)
}

/// Spherical projection of an angle onto the unit sphere.
pub fn sp(a: &AngleCoord) -> UnitVec3 {
    let (slat, clat) = math::sin_cos(a.lat);
    let (slon, clon) = math::sin_cos(a.lon);
    UnitVec3 {
        x: clat * clon,
        y: clat * slon,
        z: slat,
    }
}

/// Inverse spherical projection. Vectors off the unit sphere by more than
/// `1e-9` are renormalized first; the poles report longitude 0.
pub fn isp(p: &UnitVec3) -> Result<AngleCoord> {
    let n2 = p.x * p.x + p.y * p.y + p.z * p.z;
    if !(n2.is_finite() && n2 > 0.0) {
        return Err(Error::domain("zero or non-finite vector has no direction"));
    }
    let (x, y, z) = if (n2 - 1.0).abs() > 1e-9 {
        let n = math::sqrt(n2);
        (p.x / n, p.y / n, p.z / n)
    } else {
        (p.x, p.y, p.z)
    };
    // atan2 stays well conditioned next to the poles, unlike asin(z).
    let lat = math::atan2(z, math::sqrt(x * x + y * y));
    let lon = if x == 0.0 && y == 0.0 {
        0.0
    } else {
        let l = math::atan2(y, x);
        if l <= -PI {
            PI
        } else {
            l
        }
    };
    Ok(AngleCoord { lat, lon })
}

/// Rotation carrying the template center `(0, 0)` onto `target`.
///
/// Pitch is applied first (moving along the prime meridian), then yaw, so the
/// longitude of the target only enters through a pure longitude shift.
pub fn rotation_for(target: &AngleCoord) -> RotationMatrix {
    RotationMatrix::yaw(target.lon).mul(&RotationMatrix::pitch(target.lat))
}

/// Central angle between two unit vectors, in `[0, π]`.
pub fn great_circle_distance(a: &UnitVec3, b: &UnitVec3) -> f64 {
    let c = a.cross(b);
    let s = math::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    math::atan2(s, a.dot(b))
}

/// `k×k` sampling grid from a regular lattice on the plane tangent at
/// `center`, spaced `step` apart and mapped back by inverse gnomonic
/// projection. Row 0 is the northernmost row.
pub fn gnomonic_grid(center: &AngleCoord, k: usize, step: f64) -> Result<SampleGrid> {
    if k == 0 {
        return Err(Error::config("gnomonic kernel size must be at least 1"));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::config("gnomonic step must be positive"));
    }
    let (s0, c0) = math::sin_cos(center.lat);
    let half = (k as f64 - 1.0) / 2.0;
    let mut coords = alloc::vec::Vec::with_capacity(k * k);
    for i in 0..k {
        let y = -(i as f64 - half) * step;
        for j in 0..k {
            let x = (j as f64 - half) * step;
            let rho = math::sqrt(x * x + y * y);
            if !rho.is_finite() {
                return Err(Error::domain("gnomonic grid point beyond the tangent hemisphere"));
            }
            if rho == 0.0 {
                coords.push(*center);
                continue;
            }
            let c = math::atan(rho);
            if c >= FRAC_PI_2 {
                return Err(Error::domain("gnomonic grid point beyond the tangent hemisphere"));
            }
            let (sc, cc) = math::sin_cos(c);
            let lat = math::asin((cc * s0 + y * sc * c0 / rho).clamp(-1.0, 1.0));
            let lon = center.lon + math::atan2(x * sc, rho * c0 * cc - y * s0 * sc);
            coords.push(AngleCoord {
                lat,
                lon: wrap_lon(lon),
            });
        }
    }
    Ok(SampleGrid {
        rows: k,
        cols: k,
        coords,
    })
}
