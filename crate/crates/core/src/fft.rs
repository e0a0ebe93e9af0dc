//! Thin FFT helpers shared by the signal-path modules.
//!
//! Real transforms follow the usual half-spectrum convention: `rfft` returns
//! `n/2 + 1` bins for an `n`-point input and `irfft` reconstructs the real
//! signal assuming conjugate symmetry.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::FftPlanner;
use std::sync::Mutex;

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

/// Forward complex FFT, in place.
pub fn fft_in_place(buf: &mut [Complex64]) {
    let plan = PLANNER.lock().unwrap().plan_fft_forward(buf.len());
    plan.process(buf);
}

/// Inverse complex FFT, in place, scaled by `1/n`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    let plan = PLANNER.lock().unwrap().plan_fft_inverse(n);
    plan.process(buf);
    let s = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= s;
    }
}

/// Real-input FFT: returns the `n/2 + 1` non-negative-frequency bins.
pub fn rfft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Inverse of [`rfft`]: reconstructs `n` real samples from `n/2 + 1` bins.
///
/// The negative-frequency half is filled in by conjugate symmetry, so any
/// imaginary residue in the input DC/Nyquist bins is discarded.
pub fn irfft(spec: &[Complex64], n: usize) -> Vec<f64> {
    assert_eq!(spec.len(), n / 2 + 1, "irfft: spectrum/length mismatch");
    let mut buf = vec![Complex64::default(); n];
    buf[..spec.len()].copy_from_slice(spec);
    for k in spec.len()..n {
        buf[k] = buf[n - k].conj();
    }
    ifft_in_place(&mut buf);
    buf.into_iter().map(|v| v.re).collect()
}

/// Frequencies of the [`rfft`] bins for an `n`-point signal at `fs`.
pub fn rfft_freqs(n: usize, fs: f64) -> Vec<f64> {
    (0..n / 2 + 1).map(|k| k as f64 * fs / n as f64).collect()
}

/// Analytic signal via the frequency-domain Hilbert construction:
/// positive frequencies doubled, negative zeroed, DC and Nyquist kept.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == half) {
            // keep
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex64::default();
        }
    }
    ifft_in_place(&mut buf);
    buf
}

/// Smallest 5-smooth (2^a 3^b 5^c) length >= `n`; keeps FFT plans fast.
pub fn next_fast_len(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    let mut best = usize::MAX;
    let mut p5 = 1usize;
    while p5 < best {
        let mut p3 = p5;
        while p3 < best {
            // round p3 up to the next power of two multiple >= n
            let mut p2 = p3;
            while p2 < n {
                p2 = match p2.checked_mul(2) {
                    Some(v) => v,
                    None => break,
                };
            }
            if p2 >= n && p2 < best {
                best = p2;
            }
            p3 = match p3.checked_mul(3) {
                Some(v) => v,
                None => break,
            };
        }
        p5 = match p5.checked_mul(5) {
            Some(v) => v,
            None => break,
        };
    }
    best
}
