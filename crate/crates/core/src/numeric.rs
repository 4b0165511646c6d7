//! Floating-point helpers: compensated summation, exact products and
//! phase reduction modulo one.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Chunk length used by the deterministic parallel reductions.
pub const SUM_CHUNK: usize = 1 << 14;

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Neumaier summation applied independently to both components.
#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexNeumaier {
    re: Neumaier,
    im: Neumaier,
}

impl ComplexNeumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Compensated sum of a slice.
pub fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut acc = Neumaier::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Sum of `f(0) + ... + f(n-1)` whose result does not depend on the number of
/// worker threads: fixed chunks are summed in parallel, then the chunk
/// totals are combined sequentially in index order.
pub fn det_sum<F>(n: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync,
{
    let chunks = n.div_ceil(SUM_CHUNK);
    let partial: Vec<Complex64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = ComplexNeumaier::new();
            for i in c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n) {
                acc.add(f(i));
            }
            acc.value()
        })
        .collect();
    let mut acc = ComplexNeumaier::new();
    for z in partial {
        acc.add(z);
    }
    acc.value()
}

/// Real-valued counterpart of [`det_sum`].
pub fn det_sum_real<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(SUM_CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Neumaier::new();
            for i in c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n) {
                acc.add(f(i));
            }
            acc.value()
        })
        .collect();
    neumaier_sum(&partial)
}

/// Error-free product: `a * b == p + e` exactly.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Fractional part in `[0, 1)`.
#[inline]
pub fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `{a * b}` computed from the exact product `p + e`.
#[inline]
pub fn frac_mul_f64(a: f64, b: f64) -> f64 {
    let (p, e) = two_prod(a, b);
    frac(frac(p) + frac(e))
}

/// `{xi * w}` for an integer `w` of any size representable in `i128`.
///
/// `w` is split into base-2^32 limbs; each limb multiplies the exactly
/// reduced `{xi * 2^(32 j)}`, so no precision is lost to the magnitude of `w`.
pub fn frac_mul_int(xi: f64, w: i128) -> f64 {
    if w == 0 || xi == 0.0 {
        return 0.0;
    }
    let mag = w.unsigned_abs();
    let r = if mag < (1u128 << 53) {
        frac_mul_f64(xi, mag as f64)
    } else {
        let mut acc = 0.0;
        let mut scale = frac(xi);
        let mut rest = mag;
        while rest != 0 {
            let limb = (rest & 0xffff_ffff) as f64;
            acc = frac(acc + frac_mul_f64(scale, limb));
            rest >>= 32;
            scale = frac(scale * 4_294_967_296.0);
        }
        acc
    };
    if w < 0 && r != 0.0 {
        1.0 - r
    } else {
        r
    }
}

/// `e(t) = exp(2 pi i t)`, evaluated after reducing `t` to `[-1/2, 1/2)`.
#[inline]
pub fn unit(t: f64) -> Complex64 {
    let mut r = frac(t);
    if r >= 0.5 {
        r -= 1.0;
    }
    let (s, c) = (TAU * r).sin_cos();
    Complex64::new(c, s)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Dyadic values `2^lo, 2^(lo+1), ...` not exceeding `max`.
pub fn dyadic_upto(lo: u32, max: u64) -> Vec<u64> {
    (lo..64).map(|j| 1u64 << j).take_while(|&n| n <= max).collect()
}
