//! Spatial operators of the incompressible dynamics: Leray projection,
//! Stokes operator powers, dealiasing, and the pseudo-spectral bilinear term.

use ndarray::Array3;
use num_complex::Complex64;

use crate::fft;
use crate::field::SpectralField;
use crate::grid::GridSpec;

/// In-place Leray–Helmholtz projection onto divergence-free fields:
/// û_k ← û_k − k (k·û_k)/|k|². Exact on the discrete mode set.
pub fn leray_project(u: &mut SpectralField) {
    let freqs = u.grid.freqs();
    let n = u.grid.n;
    let (c0, rest) = u.coeffs.split_at_mut(1);
    let (c1, c2) = rest.split_at_mut(1);
    let a0 = c0[0].as_slice_mut().expect("standard layout");
    let a1 = c1[0].as_slice_mut().expect("standard layout");
    let a2 = c2[0].as_slice_mut().expect("standard layout");
    let mut off = 0usize;
    for ix in 0..n {
        let kx = freqs[ix] as f64;
        for iy in 0..n {
            let ky = freqs[iy] as f64;
            for iz in 0..n {
                let kz = freqs[iz] as f64;
                let s = kx * kx + ky * ky + kz * kz;
                if s != 0.0 {
                    let dot = (a0[off] * kx + a1[off] * ky + a2[off] * kz) / s;
                    a0[off] -= dot * kx;
                    a1[off] -= dot * ky;
                    a2[off] -= dot * kz;
                }
                off += 1;
            }
        }
    }
}

/// A^α u with A the Stokes operator, diagonal with eigenvalue λ₁|k|².
/// α = 1 is the (negative) Laplacian on divergence-free fields; fractional α
/// is defined spectrally. The k = 0 mode maps to zero for every α.
pub fn stokes_apply(u: &SpectralField, alpha: f64) -> SpectralField {
    let mut out = u.clone();
    let freqs = u.grid.freqs();
    let lambda1 = u.grid.lambda1();
    let n = u.grid.n;
    for c in 0..3 {
        let a = out.coeffs[c].as_slice_mut().expect("standard layout");
        let mut off = 0usize;
        for ix in 0..n {
            let kx = freqs[ix];
            for iy in 0..n {
                let ky = freqs[iy];
                for iz in 0..n {
                    let kz = freqs[iz];
                    let s = kx * kx + ky * ky + kz * kz;
                    let w = if s == 0 {
                        0.0
                    } else if alpha == 1.0 {
                        lambda1 * s as f64
                    } else {
                        (lambda1 * s as f64).powf(alpha)
                    };
                    a[off] *= w;
                    off += 1;
                }
            }
        }
    }
    out
}

/// Zero every mode outside the kept set of the grid's dealiasing rule
/// (plus the Nyquist planes, which are always dropped).
pub fn dealias_in_place(u: &mut SpectralField) {
    let grid = u.grid;
    let keep = keep_mask(&grid);
    for c in 0..3 {
        let a = u.coeffs[c].as_slice_mut().expect("standard layout");
        for (v, &k) in a.iter_mut().zip(keep.iter()) {
            if !k {
                *v = Complex64::ZERO;
            }
        }
    }
}

/// Flat boolean mask over the coefficient array: true on kept modes.
fn keep_mask(grid: &GridSpec) -> Vec<bool> {
    let freqs = grid.freqs();
    let m = grid.max_kept_wavenumber();
    let n = grid.n;
    let mut mask = Vec::with_capacity(n * n * n);
    for &kx in &freqs {
        for &ky in &freqs {
            for &kz in &freqs {
                mask.push(kx.abs() <= m && ky.abs() <= m && kz.abs() <= m);
            }
        }
    }
    mask
}

/// B(u, v) = P_σ[(u·∇)v], evaluated pseudo-spectrally: differentiate v in
/// Fourier space, multiply on the collocation grid, transform back, then
/// dealias, zero the mean, and Leray-project.
///
/// With the 2/3 rule and inputs supported on the kept set, the collocation
/// product equals the exact Galerkin convolution on kept modes, so the energy
/// identity ⟨B(u,w), w⟩ = 0 holds discretely to rounding — the property the
/// long-horizon stability of the solver rests on.
pub fn bilinear_term(u: &SpectralField, v: &SpectralField) -> SpectralField {
    assert_eq!(u.grid, v.grid, "bilinear term needs matching grids");
    let grid = u.grid;
    let n = grid.n;
    let npts = n * n * n;
    let kappa = std::f64::consts::TAU / grid.box_len;

    // Physical-space velocity components of u.
    let mut u_phys: Vec<Vec<f64>> = Vec::with_capacity(3);
    for c in 0..3 {
        let mut a = u.coeffs[c].clone();
        fft::inverse(&mut a);
        u_phys.push(a.as_slice().expect("layout").iter().map(|z| z.re).collect());
    }

    let freqs = grid.freqs();
    let mut out = SpectralField::zeros(grid);
    let mut accum = vec![0.0f64; npts];
    let mut work: Array3<Complex64> = Array3::zeros((n, n, n));

    for j in 0..3 {
        accum.iter_mut().for_each(|x| *x = 0.0);
        for d in 0..3 {
            // ∂_d v_j in Fourier space: multiply by i κ k_d.
            {
                let src = v.coeffs[j].as_slice().expect("layout");
                let dst = work.as_slice_mut().expect("layout");
                let mut off = 0usize;
                for &kx in &freqs {
                    for &ky in &freqs {
                        for &kz in &freqs {
                            let kd = [kx, ky, kz][d];
                            dst[off] = src[off] * Complex64::new(0.0, kappa * kd as f64);
                            off += 1;
                        }
                    }
                }
            }
            fft::inverse(&mut work);
            let w = work.as_slice().expect("layout");
            let ud = &u_phys[d];
            for i in 0..npts {
                accum[i] += ud[i] * w[i].re;
            }
        }
        {
            let dst = work.as_slice_mut().expect("layout");
            for i in 0..npts {
                dst[i] = Complex64::new(accum[i], 0.0);
            }
        }
        fft::forward(&mut work);
        out.coeffs[j].assign(&work);
    }

    dealias_in_place(&mut out);
    out.zero_mean();
    out.zero_nyquist();
    leray_project(&mut out);
    out
}

/// ∇×u computed spectrally.
pub fn curl(u: &SpectralField) -> SpectralField {
    let grid = u.grid;
    let n = grid.n;
    let kappa = std::f64::consts::TAU / grid.box_len;
    let freqs = grid.freqs();
    let mut out = SpectralField::zeros(grid);
    let s0 = u.component_slice(0);
    let s1 = u.component_slice(1);
    let s2 = u.component_slice(2);
    let mut off = 0usize;
    for ix in 0..n {
        let kx = freqs[ix] as f64 * kappa;
        for iy in 0..n {
            let ky = freqs[iy] as f64 * kappa;
            for iz in 0..n {
                let kz = freqs[iz] as f64 * kappa;
                let i = Complex64::new(0.0, 1.0);
                let d0 = i * (ky * s2[off] - kz * s1[off]);
                let d1 = i * (kz * s0[off] - kx * s2[off]);
                let d2 = i * (kx * s1[off] - ky * s0[off]);
                out.coeffs[0].as_slice_mut().unwrap()[off] = d0;
                out.coeffs[1].as_slice_mut().unwrap()[off] = d1;
                out.coeffs[2].as_slice_mut().unwrap()[off] = d2;
                off += 1;
            }
        }
    }
    out
}

/// Restrict to modes with λ_k ≤ Λ·λ₁ — the spectral projector onto the first
/// shells. `cutoff` is measured in units of λ₁ (i.e. it is |k|² at the edge).
pub fn project_low_modes(u: &SpectralField, shell_cap: i64) -> SpectralField {
    let mut out = u.clone();
    restrict_low_modes(&mut out, shell_cap);
    out
}

/// In-place version of [`project_low_modes`]: zero every mode with |k|² > cap.
pub fn restrict_low_modes(u: &mut SpectralField, shell_cap: i64) {
    let freqs = u.grid.freqs();
    let n = u.grid.n;
    for c in 0..3 {
        let a = u.coeffs[c].as_slice_mut().expect("standard layout");
        let mut off = 0usize;
        for ix in 0..n {
            let kx = freqs[ix];
            for iy in 0..n {
                let ky = freqs[iy];
                for iz in 0..n {
                    let kz = freqs[iz];
                    if kx * kx + ky * ky + kz * kz > shell_cap {
                        a[off] = Complex64::ZERO;
                    }
                    off += 1;
                }
            }
        }
    }
}

/// Complement of [`restrict_low_modes`]: zero every mode with |k|² ≤ cap.
pub fn restrict_high_modes(u: &mut SpectralField, shell_cap: i64) {
    let freqs = u.grid.freqs();
    let n = u.grid.n;
    for c in 0..3 {
        let a = u.coeffs[c].as_slice_mut().expect("standard layout");
        let mut off = 0usize;
        for ix in 0..n {
            let kx = freqs[ix];
            for iy in 0..n {
                let ky = freqs[iy];
                for iz in 0..n {
                    let kz = freqs[iz];
                    if kx * kx + ky * ky + kz * kz <= shell_cap {
                        a[off] = Complex64::ZERO;
                    }
                    off += 1;
                }
            }
        }
    }
}
