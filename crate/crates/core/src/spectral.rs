//! Two-dimensional FFTs on the periodic square and the wavenumber
//! bookkeeping shared by every spectral operator.
//!
//! Convention: the forward transform is unnormalized, the inverse carries
//! the full `1/n²` factor. Arrays are row-major with `x` fastest, so the
//! mode `(kx, ky)` lives at index `iy * n + ix`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            let mut real = RealFftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
                r2c: real.plan_fft_forward(n),
                c2r: real.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// In-place transpose in cache-sized tiles.
fn transpose_square(data: &mut [Complex64], n: usize) {
    const TILE: usize = 16;
    for jb in (0..n).step_by(TILE) {
        for ib in (jb..n).step_by(TILE) {
            for j in jb..(jb + TILE).min(n) {
                let start = if ib == jb { j + 1 } else { ib };
                for i in start..(ib + TILE).min(n) {
                    data.swap(j * n + i, i * n + j);
                }
            }
        }
    }
}

fn fft2_in_place(data: &mut [Complex64], n: usize, fft: &dyn Fft<f64>, scratch: &mut [Complex64]) {
    // rustfft transforms every length-n chunk of the buffer.
    fft.process_with_scratch(data, scratch);
    transpose_square(data, n);
    fft.process_with_scratch(data, scratch);
    transpose_square(data, n);
}

/// Reusable buffers for the transforms of one grid size. Hot loops keep
/// one of these around instead of allocating on every call.
pub struct FftWork {
    n: usize,
    plans: Arc<Plans>,
    /// Packed pair, `n²`.
    z: Vec<Complex64>,
    /// Half spectrum stored by columns, `(n/2 + 1) · n`.
    cols: Vec<Complex64>,
    real_row: Vec<f64>,
    half_row: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
    r2c_scratch: Vec<Complex64>,
    c2r_scratch: Vec<Complex64>,
}

impl FftWork {
    pub fn new(n: usize) -> FftWork {
        let plans = plans(n);
        let half = n / 2 + 1;
        let fft_len = plans.forward.get_inplace_scratch_len().max(plans.inverse.get_inplace_scratch_len());
        FftWork {
            n,
            z: vec![Complex64::default(); n * n],
            cols: vec![Complex64::default(); half * n],
            real_row: vec![0.0; n],
            half_row: vec![Complex64::default(); half],
            fft_scratch: vec![Complex64::default(); fft_len],
            r2c_scratch: vec![Complex64::default(); plans.r2c.get_scratch_len()],
            c2r_scratch: vec![Complex64::default(); plans.c2r.get_scratch_len()],
            plans,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Forward transform of a real array, returned as the full spectrum.
pub fn forward_real(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); n * n];
    forward_real_into(values, &mut out, &mut FftWork::new(n));
    out
}

pub fn forward_real_into(values: &[f64], out: &mut [Complex64], work: &mut FftWork) {
    let n = work.n;
    debug_assert!(values.len() == n * n && out.len() == n * n);
    let half = n / 2 + 1;
    let FftWork {
        plans,
        cols,
        real_row,
        half_row,
        fft_scratch,
        r2c_scratch,
        ..
    } = work;
    // Real transform of every row, stored transposed: column kx is row kx of `cols`.
    for iy in 0..n {
        real_row.copy_from_slice(&values[iy * n..(iy + 1) * n]);
        plans
            .r2c
            .process_with_scratch(real_row, half_row, r2c_scratch)
            .expect("buffer sizes match the plan");
        for (kx, &c) in half_row.iter().enumerate() {
            cols[kx * n + iy] = c;
        }
    }
    plans.forward.process_with_scratch(cols, fft_scratch);
    for ky in 0..n {
        let my = (n - ky) % n;
        let row = &mut out[ky * n..(ky + 1) * n];
        for kx in 0..half {
            row[kx] = cols[kx * n + ky];
        }
        for kx in half..n {
            row[kx] = cols[(n - kx) * n + my].conj();
        }
    }
}

pub fn forward_complex(data: &mut [Complex64], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    let p = plans(n);
    let mut scratch = vec![Complex64::default(); p.forward.get_inplace_scratch_len()];
    fft2_in_place(data, n, p.forward.as_ref(), &mut scratch);
}

/// Inverse transform, keeping the real part.
pub fn inverse_real(data: Vec<Complex64>, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    inverse_real_into(&data, &mut out, &mut FftWork::new(n));
    out
}

pub fn inverse_real_into(data: &[Complex64], out: &mut [f64], work: &mut FftWork) {
    let n = work.n;
    debug_assert!(data.len() == n * n && out.len() == n * n);
    let half = n / 2 + 1;
    let FftWork {
        plans,
        cols,
        half_row,
        fft_scratch,
        c2r_scratch,
        ..
    } = work;
    // The real part of the inverse only sees the Hermitian part
    // (X(k) + conj X(−k))/2, which is determined by the columns kx ≤ n/2.
    for kx in 0..half {
        let mx = (n - kx) % n;
        let col = &mut cols[kx * n..(kx + 1) * n];
        for (ky, c) in col.iter_mut().enumerate() {
            let my = (n - ky) % n;
            *c = (data[ky * n + kx] + data[my * n + mx].conj()) * 0.5;
        }
    }
    plans.inverse.process_with_scratch(cols, fft_scratch);
    let scale = 1.0 / (n * n) as f64;
    for iy in 0..n {
        for (kx, r) in half_row.iter_mut().enumerate() {
            *r = cols[kx * n + iy] * scale;
        }
        // Round-off aside these are real already.
        half_row[0].im = 0.0;
        if n.is_multiple_of(2) {
            half_row[half - 1].im = 0.0;
        }
        plans
            .c2r
            .process_with_scratch(half_row, &mut out[iy * n..(iy + 1) * n], c2r_scratch)
            .expect("buffer sizes match the plan");
    }
}

/// Forward transforms of two real arrays through one complex transform.
pub fn forward_real_pair(a: &[f64], b: &[f64], n: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut fa = vec![Complex64::default(); n * n];
    let mut fb = vec![Complex64::default(); n * n];
    forward_real_pair_into(a, b, &mut fa, &mut fb, &mut FftWork::new(n));
    (fa, fb)
}

pub fn forward_real_pair_into(a: &[f64], b: &[f64], fa: &mut [Complex64], fb: &mut [Complex64], work: &mut FftWork) {
    let n = work.n;
    debug_assert!(a.len() == n * n && b.len() == n * n);
    let z = &mut work.z;
    for (zi, (&x, &y)) in z.iter_mut().zip(a.iter().zip(b)) {
        *zi = Complex64::new(x, y);
    }
    fft2_in_place(z, n, work.plans.forward.as_ref(), &mut work.fft_scratch);
    for iy in 0..n {
        let my = (n - iy) % n;
        for ix in 0..n {
            let mx = (n - ix) % n;
            let (zk, zm) = (z[iy * n + ix], z[my * n + mx].conj());
            fa[iy * n + ix] = (zk + zm) * 0.5;
            fb[iy * n + ix] = (zk - zm) * Complex64::new(0.0, -0.5);
        }
    }
}

/// Inverse transforms of two spectra of real fields through one complex
/// transform.
pub fn inverse_real_pair(a: &[Complex64], b: &[Complex64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut ra = vec![0.0; n * n];
    let mut rb = vec![0.0; n * n];
    inverse_real_pair_into(a, b, &mut ra, &mut rb, &mut FftWork::new(n));
    (ra, rb)
}

pub fn inverse_real_pair_into(a: &[Complex64], b: &[Complex64], ra: &mut [f64], rb: &mut [f64], work: &mut FftWork) {
    let n = work.n;
    debug_assert!(a.len() == n * n && b.len() == n * n);
    let i = Complex64::new(0.0, 1.0);
    let z = &mut work.z;
    for (zi, (&x, &y)) in z.iter_mut().zip(a.iter().zip(b)) {
        *zi = x + i * y;
    }
    fft2_in_place(z, n, work.plans.inverse.as_ref(), &mut work.fft_scratch);
    let scale = 1.0 / (n * n) as f64;
    for (k, c) in z.iter().enumerate() {
        ra[k] = c.re * scale;
        rb[k] = c.im * scale;
    }
}

/// Signed integer wavenumber of FFT index `i`; the Nyquist index maps to `+n/2`.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Precomputed per-axis multipliers for a grid.
#[derive(Clone, Debug)]
pub struct Modes {
    pub n: usize,
    /// Physical wavenumber `2πk/L`, Nyquist included.
    pub k: Vec<f64>,
    /// Derivative multiplier: `2πk/L`, with the Nyquist mode zeroed so that
    /// derivatives of real fields stay real and skew-adjoint.
    pub dk: Vec<f64>,
    /// 2/3-rule mask per axis.
    pub keep: Vec<bool>,
}

impl Modes {
    pub fn new(grid: &Grid) -> Modes {
        let n = grid.n();
        let base = 2.0 * PI / grid.length();
        let kmax = ((n - 1) / 3) as i64;
        let mut k = Vec::with_capacity(n);
        let mut dk = Vec::with_capacity(n);
        let mut keep = Vec::with_capacity(n);
        for i in 0..n {
            let w = wavenumber(i, n);
            k.push(base * w as f64);
            dk.push(if 2 * i == n { 0.0 } else { base * w as f64 });
            keep.push(w.abs() <= kmax);
        }
        Modes { n, k, dk, keep }
    }

    /// `|k|²` of mode `(ix, iy)` (the symbol of `-Δ`).
    #[inline]
    pub fn k2(&self, ix: usize, iy: usize) -> f64 {
        self.k[ix] * self.k[ix] + self.k[iy] * self.k[iy]
    }

    #[inline]
    pub fn kept(&self, ix: usize, iy: usize) -> bool {
        self.keep[ix] && self.keep[iy]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_transforms_match_single_ones() {
        let n = 16;
        let a: Vec<f64> = (0..n * n).map(|i| ((i * 7919) % 113) as f64 / 17.0).collect();
        let b: Vec<f64> = (0..n * n).map(|i| ((i * 104729) % 97) as f64 / 13.0 - 3.0).collect();
        let (fa, fb) = forward_real_pair(&a, &b, n);
        for (x, y) in fa.iter().zip(forward_real(&a, n)).chain(fb.iter().zip(forward_real(&b, n))) {
            assert!((x - y).norm() < 1e-10);
        }
        let (ra, rb) = inverse_real_pair(&fa, &fb, n);
        for (x, y) in ra.iter().zip(&a).chain(rb.iter().zip(&b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let n = 16;
        let values: Vec<f64> = (0..n * n).map(|i| ((i * 7919) % 113) as f64 / 17.0).collect();
        let back = inverse_real(forward_real(&values, n), n);
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_unnormalized() {
        let n = 8;
        let spec = forward_real(&vec![1.0; n * n], n);
        assert!((spec[0].re - (n * n) as f64).abs() < 1e-12);
        assert!(spec[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn nyquist_derivative_is_zeroed() {
        let g = Grid::new(8, 1.0).unwrap();
        let m = Modes::new(&g);
        assert_eq!(wavenumber(4, 8), 4);
        assert_eq!(wavenumber(5, 8), -3);
        assert_eq!(m.dk[4], 0.0);
        assert!(m.k[4] > 0.0);
        // n = 8 keeps |k| <= 2.
        assert_eq!(m.keep.iter().filter(|&&b| b).count(), 5);
    }
}
