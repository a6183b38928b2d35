//! Three-dimensional complex FFTs with cached plans.
//!
//! Convention: `forward` maps collocation values to Fourier coefficients and
//! carries the 1/n³ normalization, so u(x_j) = Σ_k û_k e^{i2πk·x_j/L} is
//! recovered exactly by the unnormalized `inverse`. All transforms run
//! serially in a fixed lane order, so results are bit-reproducible.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array3;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

fn plan(n: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, dir == FftDirection::Forward);
    let mut map = cache.lock().unwrap();
    map.entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(n, dir))
        .clone()
}

/// Collocation values -> Fourier coefficients (includes the 1/n³ factor).
pub fn forward(a: &mut Array3<Complex64>) {
    let n = cubic_len(a);
    transform(a, FftDirection::Forward);
    let scale = 1.0 / (n * n * n) as f64;
    for v in a.as_slice_mut().expect("standard layout") {
        *v *= scale;
    }
}

/// Fourier coefficients -> collocation values (unnormalized synthesis sum).
pub fn inverse(a: &mut Array3<Complex64>) {
    transform(a, FftDirection::Inverse);
}

fn cubic_len(a: &Array3<Complex64>) -> usize {
    let s = a.shape();
    assert!(s[0] == s[1] && s[1] == s[2], "cubic arrays only");
    s[0]
}

fn transform(a: &mut Array3<Complex64>, dir: FftDirection) {
    let n = cubic_len(a);
    let fft = plan(n, dir);
    let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
    let data = a.as_slice_mut().expect("standard layout");

    // Axis 2: lanes are contiguous.
    for lane in data.chunks_exact_mut(n) {
        fft.process_with_scratch(lane, &mut scratch);
    }

    // Axes 1 and 0: gather each strided lane through a small buffer.
    let mut lane = vec![Complex64::ZERO; n];
    for (stride, starts) in [
        (n, axis1_starts(n)),      // axis 1: start i·n² + k, stride n
        (n * n, axis0_starts(n)),  // axis 0: start j·n + k, stride n²
    ] {
        for start in starts {
            for (t, slot) in lane.iter_mut().enumerate() {
                *slot = data[start + t * stride];
            }
            fft.process_with_scratch(&mut lane, &mut scratch);
            for (t, slot) in lane.iter().enumerate() {
                data[start + t * stride] = *slot;
            }
        }
    }
}

fn axis1_starts(n: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            v.push(i * n * n + k);
        }
    }
    v
}

fn axis0_starts(n: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            v.push(j * n + k);
        }
    }
    v
}
