//! Closed-form benchmark: plane wave hitting a homogeneous slab on [-1, 1].
//!
//! For a constant medium value `a0` the refractive index is
//! `n = sqrt(1 + a0)` and reflection/transmission follow from matching the
//! field and its derivative at the two interfaces. Everything here is
//! explicit 2x2 transfer-matrix algebra, so the oracle shares no code with
//! the integral-equation solver it checks.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Analytic slab solution for incident wave `e^{ikx}`.
#[derive(Debug, Clone)]
pub struct SlabSolution {
    pub wave_number: f64,
    pub medium_value: f64,
    /// Refractive index `sqrt(1 + a0)`.
    pub index: f64,
    /// Reflection coefficient (amplitude of `e^{-ikx}` for x < -1).
    pub reflection: Complex64,
    /// Transmission coefficient (amplitude of `e^{ikx}` for x > 1).
    pub transmission: Complex64,
    /// Interior right-going amplitude.
    amp_fwd: Complex64,
    /// Interior left-going amplitude.
    amp_bwd: Complex64,
}

/// Solve the slab in closed form. Requires `1 + a0 > 0`.
pub fn slab_analytic(k: f64, a0: f64) -> Result<SlabSolution> {
    if !(k > 0.0) {
        return Err(Error::config(format!("wave number must be positive, got {k}")));
    }
    if 1.0 + a0 <= 0.0 {
        return Err(Error::Physics(format!(
            "slab index undefined: 1 + a0 = {} <= 0",
            1.0 + a0
        )));
    }
    let n = (1.0 + a0).sqrt();
    let e2ikn = Complex64::cis(2.0 * k * n);
    let em2ikn = Complex64::cis(-2.0 * k * n);
    // Field at the left interface expressed through the transmitted wave:
    // u(-1)        = T e^{ik} * p
    // u'(-1)/(ik)  = T e^{ik} * q
    let p = ((n + 1.0) * em2ikn + (n - 1.0) * e2ikn) / (2.0 * n);
    let q = ((n + 1.0) * em2ikn - (n - 1.0) * e2ikn) / 2.0;
    let transmission = 2.0 * Complex64::cis(-2.0 * k) / (p + q);
    let reflection = transmission * (p - q) / 2.0;
    let te_ik = transmission * Complex64::cis(k);
    let amp_fwd = te_ik * ((n + 1.0) / (2.0 * n)) * Complex64::cis(-k * n);
    let amp_bwd = te_ik * ((n - 1.0) / (2.0 * n)) * Complex64::cis(k * n);
    Ok(SlabSolution {
        wave_number: k,
        medium_value: a0,
        index: n,
        reflection,
        transmission,
        amp_fwd,
        amp_bwd,
    })
}

impl SlabSolution {
    /// Total field inside the slab (valid for x in [-1, 1]).
    pub fn total_field(&self, xs: &[f64]) -> Vec<Complex64> {
        let kn = self.wave_number * self.index;
        xs.iter()
            .map(|&x| self.amp_fwd * Complex64::cis(kn * x) + self.amp_bwd * Complex64::cis(-kn * x))
            .collect()
    }

    /// Scattered field `u - u_inc` inside the slab.
    pub fn scattered_field(&self, xs: &[f64]) -> Vec<Complex64> {
        let k = self.wave_number;
        self.total_field(xs)
            .into_iter()
            .zip(xs)
            .map(|(u, &x)| u - Complex64::cis(k * x))
            .collect()
    }

    /// `|R|^2 + |T|^2`, which is 1 for a lossless (real-index) slab.
    pub fn energy(&self) -> f64 {
        self.reflection.norm_sqr() + self.transmission.norm_sqr()
    }
}
