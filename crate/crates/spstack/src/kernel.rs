//! Spatial-temporal and Matérn correlation functions and correlation-matrix
//! assembly.

use nalgebra::DMatrix;
use puruspe::besselik;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A space-time coordinate: planar location plus a time point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpaceTimeCoord {
    pub s: [f64; 2],
    pub t: f64,
}

impl SpaceTimeCoord {
    pub fn new(s1: f64, s2: f64, t: f64) -> Self {
        Self { s: [s1, s2], t }
    }

    pub fn spatial_distance(&self, other: &Self) -> f64 {
        let dx = self.s[0] - other.s[0];
        let dy = self.s[1] - other.s[1];
        (dx * dx + dy * dy).sqrt()
    }

    pub fn time_gap(&self, other: &Self) -> f64 {
        (self.t - other.t).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.s[0].is_finite() && self.s[1].is_finite() && self.t.is_finite()
    }
}

/// Correlation-function parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum KernelParams {
    /// Non-separable space-time kernel with temporal decay `phi_t` and
    /// spatial decay `phi_s`.
    SpaceTime { phi_t: f64, phi_s: f64 },
    /// Matérn kernel with decay `phi` and smoothness `nu`.
    Matern { phi: f64, nu: f64 },
}

impl KernelParams {
    pub fn space_time(phi_t: f64, phi_s: f64) -> Result<Self> {
        if phi_t <= 0.0 || phi_s <= 0.0 || !phi_t.is_finite() || !phi_s.is_finite() {
            return Err(Error::Parameter(format!(
                "decay parameters must be positive, got phi_t={phi_t}, phi_s={phi_s}"
            )));
        }
        Ok(Self::SpaceTime { phi_t, phi_s })
    }

    pub fn matern(phi: f64, nu: f64) -> Result<Self> {
        if phi <= 0.0 || nu <= 0.0 || !phi.is_finite() || !nu.is_finite() {
            return Err(Error::Parameter(format!(
                "Matérn parameters must be positive, got phi={phi}, nu={nu}"
            )));
        }
        Ok(Self::Matern { phi, nu })
    }

    /// A key identifying the kernel bit-for-bit, used for factor caching.
    pub fn cache_key(&self) -> (u8, u64, u64) {
        match *self {
            KernelParams::SpaceTime { phi_t, phi_s } => (0, phi_t.to_bits(), phi_s.to_bits()),
            KernelParams::Matern { phi, nu } => (1, phi.to_bits(), nu.to_bits()),
        }
    }
}

/// Matérn correlation at distance `d`.
fn matern_corr(d: f64, phi: f64, nu: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    let x = phi * d;
    let (_, k, _, _) = besselik(nu, x);
    if k == 0.0 || !k.is_finite() {
        // Far field: the kernel has decayed below representable range.
        return 0.0;
    }
    let log_c = nu * x.ln() - (nu - 1.0) * std::f64::consts::LN_2 - ln_gamma(nu) + k.ln();
    log_c.exp().min(1.0)
}

/// Correlation between two coordinates.
///
/// The space-time kind evaluates
/// `(phi_t |t-t'|^2 + 1)^{-1} exp(-phi_s ||s-s'|| / sqrt(1 + phi_t |t-t'|^2))`.
pub fn corr(a: &SpaceTimeCoord, b: &SpaceTimeCoord, params: &KernelParams) -> f64 {
    match *params {
        KernelParams::SpaceTime { phi_t, phi_s } => {
            let u = a.time_gap(b);
            let d = a.spatial_distance(b);
            let denom = phi_t * u * u + 1.0;
            (1.0 / denom) * (-phi_s * d / denom.sqrt()).exp()
        }
        KernelParams::Matern { phi, nu } => matern_corr(a.spatial_distance(b), phi, nu),
    }
}

/// Symmetric correlation matrix over `coords`.
///
/// The upper triangle is filled and mirrored, so the result is bitwise
/// symmetric. Exactly coincident coordinates are rejected: they would make
/// the matrix singular.
pub fn corr_matrix(coords: &[SpaceTimeCoord], params: &KernelParams) -> Result<DMatrix<f64>> {
    let n = coords.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in i + 1..n {
            if coords[i] == coords[j] {
                return Err(Error::Data(format!(
                    "duplicate coordinates at indices {i} and {j}"
                )));
            }
            let v = corr(&coords[i], &coords[j], params);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Cross-correlation matrix between observed and new coordinates,
/// `n x n_new` with entries `corr(coords[i], new_coords[j])`.
pub fn cross_corr_matrix(
    coords: &[SpaceTimeCoord],
    new_coords: &[SpaceTimeCoord],
    params: &KernelParams,
) -> DMatrix<f64> {
    DMatrix::from_fn(coords.len(), new_coords.len(), |i, j| {
        corr(&coords[i], &new_coords[j], params)
    })
}

/// Spatial decay giving correlation 0.05 at `range` (zero time gap), found
/// by bisection to absolute tolerance 1e-8.
///
/// Supports the convention of choosing decay grids so the effective range
/// is a target fraction of the maximum inter-coordinate distance.
pub fn spatial_decay_for_range(range: f64, smoothness: Option<f64>) -> Result<f64> {
    if range <= 0.0 || !range.is_finite() {
        return Err(Error::Parameter(format!(
            "effective range must be positive, got {range}"
        )));
    }
    let corr_at = |phi: f64| -> f64 {
        match smoothness {
            None => (-phi * range).exp(),
            Some(nu) => matern_corr(range, phi, nu),
        }
    };
    let target = 0.05;
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while corr_at(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical(
                "no decay bracket found for effective range".into(),
            ));
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if corr_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
