//! Divergence-free periodic vector fields stored as Fourier coefficients.
//!
//! A [`SpectralField`] holds three complex coefficient arrays, one per velocity
//! component, indexed so that entry `[ix, iy, iz]` is û_k for the integer
//! wavevector k = (freq(ix), freq(iy), freq(iz)). Real-valued fields satisfy
//! the Hermitian symmetry û_{-k} = conj(û_k); the k = 0 mode is kept at zero
//! (the space-average-zero class) and the Nyquist planes are never populated.
//!
//! Norms carry the L³ Parseval factor so that `sobolev_norm(0)` is the true
//! L² integral norm |v| and `sobolev_norm(1)` is the H¹ seminorm ‖v‖ = |∇v|.

use ndarray::Array3;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    /// Coefficient arrays for the three velocity components.
    pub coeffs: [Array3<Complex64>; 3],
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n;
        Self {
            grid,
            coeffs: [
                Array3::zeros((n, n, n)),
                Array3::zeros((n, n, n)),
                Array3::zeros((n, n, n)),
            ],
        }
    }

    pub fn component_slice(&self, c: usize) -> &[Complex64] {
        self.coeffs[c].as_slice().expect("standard layout")
    }

    pub fn component_slice_mut(&mut self, c: usize) -> &mut [Complex64] {
        self.coeffs[c].as_slice_mut().expect("standard layout")
    }

    /// Zero the spatial mean (the k = 0 coefficient of every component).
    pub fn zero_mean(&mut self) {
        for c in 0..3 {
            self.coeffs[c][[0, 0, 0]] = Complex64::ZERO;
        }
    }

    /// Zero the Nyquist planes |k_i| = n/2, whose sign is ambiguous for real
    /// fields. All constructors in this crate keep them empty; this enforces
    /// the invariant on externally loaded data.
    pub fn zero_nyquist(&mut self) {
        let ny = self.grid.n / 2;
        for c in 0..3 {
            let a = &mut self.coeffs[c];
            a.index_axis_mut(ndarray::Axis(0), ny).fill(Complex64::ZERO);
            a.index_axis_mut(ndarray::Axis(1), ny).fill(Complex64::ZERO);
            a.index_axis_mut(ndarray::Axis(2), ny).fill(Complex64::ZERO);
        }
    }

    /// Project onto exactly Hermitian-symmetric coefficients by averaging
    /// û_k with conj(û_{-k}). Idempotent; leaves real fields unchanged up to
    /// rounding in the paired average.
    pub fn symmetrize(&mut self) {
        let n = self.grid.n;
        let idx = |k: usize| (n - k) % n;
        for c in 0..3 {
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        let (jx, jy, jz) = (idx(ix), idx(iy), idx(iz));
                        if (ix, iy, iz) <= (jx, jy, jz) {
                            let a = self.coeffs[c][[ix, iy, iz]];
                            let b = self.coeffs[c][[jx, jy, jz]];
                            let avg = 0.5 * (a + b.conj());
                            self.coeffs[c][[ix, iy, iz]] = avg;
                            self.coeffs[c][[jx, jy, jz]] = avg.conj();
                        }
                    }
                }
            }
        }
    }

    /// Max over modes of |û_{-k} - conj(û_k)|, a reality-violation measure.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let idx = |k: usize| (n - k) % n;
        let mut worst = 0.0f64;
        for c in 0..3 {
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        let a = self.coeffs[c][[ix, iy, iz]];
                        let b = self.coeffs[c][[idx(ix), idx(iy), idx(iz)]];
                        worst = worst.max((a - b.conj()).norm());
                    }
                }
            }
        }
        worst
    }

    /// (L³ Σ_k λ_k^α |û_k|²)^{1/2} with λ_k = λ₁|k|²; α = 0 gives the L² norm
    /// |v|, α = 1 the H¹ seminorm ‖v‖, α = 2 gives |Av|.
    pub fn sobolev_norm(&self, alpha: f64) -> f64 {
        let grid = &self.grid;
        let freqs = grid.freqs();
        let lambda1 = grid.lambda1();
        let c0 = self.component_slice(0);
        let c1 = self.component_slice(1);
        let c2 = self.component_slice(2);
        let mut total = 0.0f64;
        let mut off = 0usize;
        for &kx in &freqs {
            for &ky in &freqs {
                let sxy = kx * kx + ky * ky;
                for &kz in &freqs {
                    let s = sxy + kz * kz;
                    if s != 0 {
                        let e = c0[off].norm_sqr() + c1[off].norm_sqr() + c2[off].norm_sqr();
                        let w = if alpha == 0.0 {
                            1.0
                        } else if alpha == 1.0 {
                            lambda1 * s as f64
                        } else {
                            (lambda1 * s as f64).powf(alpha)
                        };
                        total += w * e;
                    }
                    off += 1;
                }
            }
        }
        (total * grid.volume()).sqrt()
    }

    /// L² inner product (u, v) = L³ Σ_k Re(û_k · conj(v̂_k)).
    pub fn inner_product(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product needs matching grids");
        let mut total = 0.0f64;
        for c in 0..3 {
            let a = self.component_slice(c);
            let b = other.component_slice(c);
            for (x, y) in a.iter().zip(b.iter()) {
                total += x.re * y.re + x.im * y.im;
            }
        }
        total * self.grid.volume()
    }

    /// Max over modes of |k·û_k| / (|k||û_k|), a scale-free divergence check.
    pub fn divergence_defect(&self) -> f64 {
        let grid = &self.grid;
        let freqs = grid.freqs();
        let c0 = self.component_slice(0);
        let c1 = self.component_slice(1);
        let c2 = self.component_slice(2);
        let mut worst = 0.0f64;
        let mut off = 0usize;
        for &kx in &freqs {
            for &ky in &freqs {
                for &kz in &freqs {
                    let s = kx * kx + ky * ky + kz * kz;
                    if s != 0 {
                        let d = c0[off] * kx as f64 + c1[off] * ky as f64 + c2[off] * kz as f64;
                        let mag = (c0[off].norm_sqr() + c1[off].norm_sqr() + c2[off].norm_sqr())
                            .sqrt()
                            * (s as f64).sqrt();
                        if mag > 0.0 {
                            worst = worst.max(d.norm() / mag);
                        }
                    }
                    off += 1;
                }
            }
        }
        worst
    }

    /// Pointwise maximum of the velocity magnitude on the collocation grid.
    pub fn max_pointwise_speed(&self) -> f64 {
        let phys = self.to_physical();
        let mut worst = 0.0f64;
        for i in 0..phys[0].len() {
            let m = phys[0][i] * phys[0][i] + phys[1][i] * phys[1][i] + phys[2][i] * phys[2][i];
            worst = worst.max(m);
        }
        worst.sqrt()
    }

    /// Collocation values of each component (real parts after synthesis).
    pub fn to_physical(&self) -> [Vec<f64>; 3] {
        let mut out: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for c in 0..3 {
            let mut a = self.coeffs[c].clone();
            fft::inverse(&mut a);
            out[c] = a
                .as_slice()
                .expect("standard layout")
                .iter()
                .map(|z| z.re)
                .collect();
        }
        out
    }

    pub fn scale(&mut self, a: f64) {
        for c in 0..3 {
            for v in self.component_slice_mut(c) {
                *v *= a;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// self += a · other (elementwise axpy on coefficients).
    pub fn add_scaled(&mut self, a: f64, other: &Self) {
        assert_eq!(self.grid, other.grid);
        for c in 0..3 {
            let src = other.coeffs[c].as_slice().expect("standard layout");
            let dst = self.coeffs[c].as_slice_mut().expect("standard layout");
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += a * s;
            }
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        (0..3).all(|c| {
            self.component_slice(c)
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite())
        })
    }
}

/// ABC/Beltrami eigenfield of curl: with κ = 2π/L,
/// u = (a sin κx₃ + c cos κx₂, b sin κx₁ + a cos κx₃, c sin κx₂ + b cos κx₁)
/// satisfies ∇×u = κu and P_σ B(u,u) = 0, so the unforced solution decays as
/// e^{-νκ²t} u₀ — the analytic oracle used throughout the tests.
pub fn beltrami_field(grid: GridSpec, a: f64, b: f64, c: f64) -> SpectralField {
    let mut u = SpectralField::zeros(grid);
    let p = grid.index_of(1);
    let m = grid.index_of(-1);
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, 0.5);
    // sin κx = (e^{iκx} - e^{-iκx}) / 2i: coefficient -i/2 at +1, +i/2 at -1.
    // cos κx: coefficient 1/2 at ±1.
    // Component 0: a sin κx₃ + c cos κx₂
    u.coeffs[0][[0, 0, p]] = -ihalf * a;
    u.coeffs[0][[0, 0, m]] = ihalf * a;
    u.coeffs[0][[0, p, 0]] = half * c;
    u.coeffs[0][[0, m, 0]] = half * c;
    // Component 1: b sin κx₁ + a cos κx₃
    u.coeffs[1][[p, 0, 0]] = -ihalf * b;
    u.coeffs[1][[m, 0, 0]] = ihalf * b;
    u.coeffs[1][[0, 0, p]] = half * a;
    u.coeffs[1][[0, 0, m]] = half * a;
    // Component 2: c sin κx₂ + b cos κx₁
    u.coeffs[2][[0, p, 0]] = -ihalf * c;
    u.coeffs[2][[0, m, 0]] = ihalf * c;
    u.coeffs[2][[p, 0, 0]] = half * b;
    u.coeffs[2][[m, 0, 0]] = half * b;
    u
}

/// Deterministic random divergence-free field: |û_k| = |k|^{-spectrum} exactly,
/// uniformly random phases and in-plane orientation, Hermitian by construction.
///
/// Modes are visited in lexicographic order over the |k| ≤ k_max ball and the
/// generator never consults the grid resolution, so a given seed produces the
/// same coefficients on every grid that can hold them — which is what lets
/// interpolant-constant estimates be compared across resolutions.
pub fn random_div_free_field(
    grid: GridSpec,
    seed: u64,
    spectrum: f64,
    k_max: i64,
) -> Result<SpectralField> {
    if k_max < 1 || k_max as usize >= grid.n / 2 {
        return Err(Error::Config(format!(
            "random field k_max must satisfy 1 <= k_max < n/2, got k_max={k_max} with n={}",
            grid.n
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(grid);
    let kk = k_max * k_max;
    for kx in -k_max..=k_max {
        for ky in -k_max..=k_max {
            for kz in -k_max..=k_max {
                let s = kx * kx + ky * ky + kz * kz;
                if s == 0 || s > kk || !is_canonical(kx, ky, kz) {
                    continue;
                }
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                let phi1 = rng.random::<f64>() * std::f64::consts::TAU;
                let phi2 = rng.random::<f64>() * std::f64::consts::TAU;
                let mag = (s as f64).sqrt().powf(-spectrum);
                let (e1, e2) = plane_basis(kx, ky, kz);
                let a = mag * theta.cos() * Complex64::new(phi1.cos(), phi1.sin());
                let b = mag * theta.sin() * Complex64::new(phi2.cos(), phi2.sin());
                let coeff = [
                    a * e1[0] + b * e2[0],
                    a * e1[1] + b * e2[1],
                    a * e1[2] + b * e2[2],
                ];
                let (ix, iy, iz) = (grid.index_of(kx), grid.index_of(ky), grid.index_of(kz));
                let (jx, jy, jz) = (grid.index_of(-kx), grid.index_of(-ky), grid.index_of(-kz));
                for c in 0..3 {
                    u.coeffs[c][[ix, iy, iz]] = coeff[c];
                    u.coeffs[c][[jx, jy, jz]] = coeff[c].conj();
                }
            }
        }
    }
    Ok(u)
}

/// One representative per ±k pair: first nonzero component positive.
fn is_canonical(kx: i64, ky: i64, kz: i64) -> bool {
    if kx != 0 {
        kx > 0
    } else if ky != 0 {
        ky > 0
    } else {
        kz > 0
    }
}

/// Real orthonormal basis of the plane perpendicular to k.
fn plane_basis(kx: i64, ky: i64, kz: i64) -> ([f64; 3], [f64; 3]) {
    let k = [kx as f64, ky as f64, kz as f64];
    let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    let khat = [k[0] / norm, k[1] / norm, k[2] / norm];
    // Axis least aligned with k, for a numerically safe cross product.
    let axis = {
        let a = [k[0].abs(), k[1].abs(), k[2].abs()];
        if a[0] <= a[1] && a[0] <= a[2] {
            [1.0, 0.0, 0.0]
        } else if a[1] <= a[2] {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        }
    };
    let e1 = normalize(cross(khat, axis));
    let e2 = cross(khat, e1); // already unit: khat ⊥ e1, both unit
    (e1, e2)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}
