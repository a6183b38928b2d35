//! Periodic-box bookkeeping: integer wavevectors, Stokes eigenvalues, dealiasing.
//!
//! Fields live on an n³ collocation grid over [0, L)³ and are represented by
//! Fourier coefficients û_k indexed by integer wavevectors k with |k_i| < n/2.
//! On divergence-free fields the Stokes operator is diagonal in this basis with
//! eigenvalues λ_k = |2πk/L|² = λ₁|k|², so every spectral sum can be organized
//! by the integer shell s = |k|² and λ₁ = (2π/L)² is the Poincaré constant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule for zeroing high modes after a nonlinear product.
///
/// `TwoThirds` removes every mode with |k_i| > n/3 on any axis. Products of two
/// retained modes then alias only onto removed modes, so the truncated
/// convolution equals the exact (Galerkin) one on the kept set and the energy
/// orthogonality of the advection term survives discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dealias {
    TwoThirds,
    None,
}

/// Cubic periodic grid: modes per dimension, box side, dealiasing rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub box_len: f64,
    pub dealias: Dealias,
}

impl GridSpec {
    pub fn new(n: usize, box_len: f64, dealias: Dealias) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "grid.n must be an even integer >= 4, got {n}"
            )));
        }
        if !(box_len > 0.0) || !box_len.is_finite() {
            return Err(Error::Config(format!(
                "grid box length must be positive and finite, got {box_len}"
            )));
        }
        Ok(Self { n, box_len, dealias })
    }

    /// Smallest nonzero Stokes eigenvalue, λ₁ = (2π/L)².
    pub fn lambda1(&self) -> f64 {
        let k0 = 2.0 * PI / self.box_len;
        k0 * k0
    }

    /// Collocation spacing L/n.
    pub fn spacing(&self) -> f64 {
        self.box_len / self.n as f64
    }

    /// Box volume L³ (the Parseval factor for integral norms).
    pub fn volume(&self) -> f64 {
        self.box_len.powi(3)
    }

    /// Signed integer wavenumber for an array index along any axis.
    pub fn freq(&self, idx: usize) -> i64 {
        debug_assert!(idx < self.n);
        if idx <= self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Array index holding wavenumber k (k may be negative).
    pub fn index_of(&self, k: i64) -> usize {
        let n = self.n as i64;
        (k.rem_euclid(n)) as usize
    }

    /// Per-index wavenumbers, `freqs()[i] == freq(i)`.
    pub fn freqs(&self) -> Vec<i64> {
        (0..self.n).map(|i| self.freq(i)).collect()
    }

    /// Largest |k_i| kept by the dealiasing rule. The Nyquist index n/2 is
    /// always excluded (its sign is ambiguous for real fields).
    pub fn max_kept_wavenumber(&self) -> i64 {
        match self.dealias {
            Dealias::TwoThirds => (self.n / 3) as i64,
            Dealias::None => (self.n / 2 - 1) as i64,
        }
    }

    /// Whether wavevector (kx, ky, kz) survives the dealiasing rule.
    pub fn keeps(&self, kx: i64, ky: i64, kz: i64) -> bool {
        let m = self.max_kept_wavenumber();
        kx.abs() <= m && ky.abs() <= m && kz.abs() <= m
    }

    /// Stokes eigenvalue of the integer shell s = |k|².
    pub fn eigenvalue(&self, s: i64) -> f64 {
        self.lambda1() * s as f64
    }

    /// Largest eigenvalue representable after dealiasing: λ₁·3·(max |k_i|)².
    pub fn max_eigenvalue(&self) -> f64 {
        let m = self.max_kept_wavenumber();
        self.lambda1() * (3 * m * m) as f64
    }
}
