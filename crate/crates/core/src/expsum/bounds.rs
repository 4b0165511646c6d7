//! Numerical checks of the Van der Corput and bilinear bounds, and the
//! truncated Fourier series of the sawtooth.

use super::PhaseSpec;
use crate::error::{Error, Result};
use crate::numeric::{det_sum, frac, frac_mul_f64, unit, Neumaier};
use crate::thinfn::{admissible_params, ThinFunction};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

const VDC_SAMPLES: u64 = 257;
const VDC_SLACK: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct VdcReport {
    pub sum_abs: f64,
    pub bound: f64,
    pub constant: f64,
    /// Whether sampled `k`-th differences stayed within `[eta, r eta]`.
    pub precondition_ok: bool,
    pub min_kth_diff: f64,
    pub max_kth_diff: f64,
}

fn binom(k: u32, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// Compares `|sum_{1<=n<=N} e(F(n))|` with
/// `r N (eta^{1/(2^k-2)} + N^{-2/2^k} + (N^k eta)^{-2/2^k})`.
///
/// The bracket `eta <= |F^{(k)}| <= r eta` is probed with `k`-th forward
/// differences at evenly spaced points and reported, not enforced.
pub fn vdc_bound_check<F>(f: F, n: u64, k: u32, eta: f64, r: f64) -> Result<VdcReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    if k < 2 || n < 1 || !(eta > 0.0) || !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need k >= 2, N >= 1, eta > 0, r >= 1 (k = {k}, N = {n}, eta = {eta}, r = {r})"
        )));
    }
    let s = det_sum(n as usize, |i| unit(f((i + 1) as f64)));
    let nf = n as f64;
    let two_k = 2f64.powi(k as i32);
    let bound =
        r * nf * (eta.powf(1.0 / (two_k - 2.0)) + nf.powf(-2.0 / two_k) + (nf.powi(k as i32) * eta).powf(-2.0 / two_k));
    let span = n.saturating_sub(k as u64).max(1);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..VDC_SAMPLES {
        let x = 1.0 + (span - 1) as f64 * i as f64 / (VDC_SAMPLES - 1) as f64;
        let mut acc = Neumaier::new();
        for j in 0..=k {
            let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            acc.add(sign * binom(k, j) * f(x + j as f64));
        }
        let d = acc.value().abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let precondition_ok = lo >= eta * (1.0 - VDC_SLACK) && hi <= r * eta * (1.0 + VDC_SLACK);
    Ok(VdcReport {
        sum_abs: s.norm(),
        bound,
        constant: s.norm() / bound,
        precondition_ok,
        min_kth_diff: lo,
        max_kth_diff: hi,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BilinearReport {
    pub value: Complex64,
    pub bound: f64,
    pub constant: f64,
}

fn moment_ok(d: &[Complex64]) -> (bool, f64, f64) {
    let len = d.len() as f64;
    let lhs: f64 = d.iter().map(|z| z.norm_sqr()).sum();
    let rhs = len * len.ln().powi(3).max(1.0);
    (lhs <= rhs, lhs, rhs)
}

/// `sum_{L<l<=2L} sum_{K<k<=2K, P<kl<=P1} D1(l) D2(k) e(xi W(kl) + m phi(kl))`
/// against the right side of the bilinear estimate with implied constant 1.
///
/// `d1` holds `D1(L+1), ..., D1(2L)` so `L = d1.len()`; likewise for `d2`.
pub fn bilinear_sum_bound(d1: &[Complex64], d2: &[Complex64], spec: &PhaseSpec) -> Result<BilinearReport> {
    let (l, k) = (d1.len() as u64, d2.len() as u64);
    if l == 0 || k == 0 {
        return Err(Error::InvalidArgument("empty coefficient sequence".into()));
    }
    if spec.m == 0 {
        return Err(Error::HypothesisViolated("m = 0".into()));
    }
    let q = spec.w.degree() as i32;
    let a = 2f64.powi(q + 1) - 2.0;
    let two_q = 2f64.powi(q);
    let kl = (k * l) as f64;
    let mn = k.min(l) as f64;
    let phi = spec.tf.phi(kl)?;
    let sigma = spec.tf.sigma(kl)?;
    let lhs1 = phi;
    let rhs1 = mn.powf((2f64.powi(2 * q + 1) + two_q - 2.0) / a);
    if lhs1 > rhs1 {
        return Err(Error::HypothesisViolated(format!(
            "phi(KL) = {lhs1} > min(K,L)^e = {rhs1}"
        )));
    }
    let lhs2 = spec.m.unsigned_abs() as f64 * mn.powf(a / two_q);
    let rhs2 = (sigma * phi).powf(a / two_q);
    if lhs2 > rhs2 {
        return Err(Error::HypothesisViolated(format!(
            "|m| min(K,L)^e = {lhs2} > (sigma phi)(KL)^e = {rhs2}"
        )));
    }
    for (name, d) in [("Delta1", d1), ("Delta2", d2)] {
        let (ok, lhs, rhs) = moment_ok(d);
        if !ok {
            return Err(Error::HypothesisViolated(format!(
                "sum |{name}|^2 = {lhs} > len log^3 len = {rhs}"
            )));
        }
    }
    let lo = (spec.p + 1).max((l + 1) * (k + 1));
    let hi = spec.p1.min(4 * k * l);
    let z = spec.unit_table(lo, hi)?;
    let value = det_sum(l as usize, |i| {
        let ll = l + 1 + i as u64;
        let mut acc = crate::numeric::ComplexNeumaier::new();
        for (j, &b) in d2.iter().enumerate() {
            let n = ll * (k + 1 + j as u64);
            if n >= lo && n <= hi {
                acc.add(b * z[(n - lo) as usize]);
            }
        }
        acc.value() * d1[i]
    });
    let e = a / (two_q * (2f64.powi(q + 2) - 2.0));
    let lf = l as f64;
    let kf = k as f64;
    let bound = (spec.m.unsigned_abs() as f64).powf(1.0 / (2f64.powi(q + 2) - 2.0))
        * lf.ln().powi(2)
        * kf.ln().powi(2)
        * (sigma * phi).powf(-e)
        * mn.powf(e)
        * kl;
    Ok(BilinearReport {
        value,
        bound,
        constant: value.norm() / bound,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SawtoothReport {
    pub phi_exact: f64,
    pub phi_trunc: f64,
    pub err: f64,
    pub err_bound: f64,
    /// `err / err_bound`.
    pub constant: f64,
}

/// `Phi(t) = {t} - 1/2` against `sum_{0<|m|<=M} e(-m t) / (2 pi i m)
/// = -sum_{m=1}^{M} sin(2 pi m t) / (pi m)`, with the bound
/// `min(1, 1 / (M ||t||))`.
pub fn sawtooth(t: f64, m: u64) -> Result<SawtoothReport> {
    if m == 0 {
        return Err(Error::InvalidArgument("M = 0".into()));
    }
    let phi_exact = frac(t) - 0.5;
    let mut acc = Neumaier::new();
    for j in 1..=m {
        acc.add(-unit(frac_mul_f64(j as f64, t)).im / (PI * j as f64));
    }
    let phi_trunc = acc.value();
    let ft = frac(t);
    let dist = ft.min(1.0 - ft);
    let err_bound = if dist == 0.0 {
        1.0
    } else {
        (1.0 / (m as f64 * dist)).min(1.0)
    };
    let err = (phi_exact - phi_trunc).abs();
    Ok(SawtoothReport {
        phi_exact,
        phi_trunc,
        err,
        err_bound,
        constant: err / err_bound,
    })
}

/// Truncation `M = P^{1 + chi + eps} / phi(P)` with `chi` the largest
/// admissible value and `eps = chi / (200 (2^{q+2} - 1))`.
pub fn default_truncation(tf: &ThinFunction, p: u64, q: u32) -> Result<f64> {
    let chi = admissible_params(q, tf.gamma())?.chi_max;
    let eps = chi / (200.0 * (2f64.powi(q as i32 + 2) - 1.0));
    Ok((p as f64).powf(1.0 + chi + eps) / tf.phi(p as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expsum::IntPolynomial;
    use crate::thinfn::{make_thin_function, Family, FamilyParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn power(g: f64) -> ThinFunction {
        make_thin_function(Family::Power, FamilyParams::power(g)).unwrap()
    }

    #[test]
    fn linear_phase_violates_second_derivative_bracket() {
        let r = vdc_bound_check(|x| 0.5 * x, 1000, 2, 1e-3, 1.0).unwrap();
        assert!(!r.precondition_ok);
        assert_eq!(r.max_kth_diff, 0.0);
    }

    #[test]
    fn quadratic_phase_constant() {
        let beta = 1e-4;
        let r = vdc_bound_check(|x| beta * x * x, 10_000, 2, 2.0 * beta, 1.0).unwrap();
        assert!(r.precondition_ok);
        // 1e4 (0.01414 + 0.01 + 0.00707)
        assert!((r.bound - 312.132).abs() < 1e-3, "bound {}", r.bound);
        assert!(r.constant <= 100.0);
    }

    #[test]
    fn cubic_phase_constant() {
        let beta = 1e-6;
        let r = vdc_bound_check(|x| beta * x * x * x, 10_000, 3, 6.0 * beta, 1.0).unwrap();
        assert!(r.precondition_ok, "{r:?}");
        assert!(r.constant <= 100.0);
    }

    #[test]
    fn direct_sum_of_quadratic_phase() {
        // Oracle: plain loop in naive order.
        let beta = 3e-4;
        let r = vdc_bound_check(|x| beta * x * x, 500, 2, 2.0 * beta, 1.0).unwrap();
        let mut s = Complex64::new(0.0, 0.0);
        for n in 1..=500 {
            let t = beta * (n * n) as f64;
            s += Complex64::from_polar(1.0, 2.0 * PI * t);
        }
        assert!((r.sum_abs - s.norm()).abs() < 1e-9);
    }

    #[test]
    fn bilinear_zero_sequence() {
        let tf = power(0.95);
        let spec = PhaseSpec::new(0.3, IntPolynomial::identity(), 1, &tf, 1024, 2048).unwrap();
        let d1 = vec![Complex64::new(0.0, 0.0); 32];
        let d2 = vec![Complex64::new(1.0, 0.0); 32];
        let r = bilinear_sum_bound(&d1, &d2, &spec).unwrap();
        assert_eq!(r.value, Complex64::new(0.0, 0.0));
        assert_eq!(r.constant, 0.0);
    }

    #[test]
    fn bilinear_all_ones_matches_double_loop() {
        let tf = power(0.95);
        let spec = PhaseSpec::new(0.3, IntPolynomial::identity(), 1, &tf, 1024, 2048).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); 32];
        let r = bilinear_sum_bound(&ones, &ones, &spec).unwrap();
        let mut want = Complex64::new(0.0, 0.0);
        for l in 33..=64u64 {
            for k in 33..=64u64 {
                let n = k * l;
                if n > 1024 && n <= 2048 {
                    let t = 0.3 * n as f64 + tf.phi(n as f64).unwrap();
                    want += Complex64::from_polar(1.0, 2.0 * PI * t);
                }
            }
        }
        assert!((r.value - want).norm() < 1e-9);
        assert!(r.constant <= 1e3);
    }

    #[test]
    fn bilinear_random_unit_coefficients() {
        let tf = power(0.95);
        let spec = PhaseSpec::new(0.3, IntPolynomial::identity(), 1, &tf, 4096, 8192).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || -> Vec<Complex64> {
                (0..64)
                    .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI))
                    .collect()
            };
            let (d1, d2) = (draw(), draw());
            let r = bilinear_sum_bound(&d1, &d2, &spec).unwrap();
            assert!(r.constant <= 1e3, "seed {seed}: {}", r.constant);
        }
    }

    #[test]
    fn bilinear_hypothesis_reported() {
        let tf = power(0.95);
        let spec = PhaseSpec::new(0.3, IntPolynomial::identity(), 1000, &tf, 1024, 2048).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); 32];
        assert!(matches!(
            bilinear_sum_bound(&ones, &ones, &spec),
            Err(Error::HypothesisViolated(_))
        ));
        let spec = PhaseSpec::new(0.3, IntPolynomial::identity(), 1, &tf, 1024, 2048).unwrap();
        let big = vec![Complex64::new(10.0, 0.0); 32];
        assert!(matches!(
            bilinear_sum_bound(&big, &ones, &spec),
            Err(Error::HypothesisViolated(_))
        ));
    }

    #[test]
    fn sawtooth_examples() {
        for m in [1, 7, 100] {
            let r = sawtooth(0.5, m).unwrap();
            assert_eq!(r.phi_exact, 0.0);
            assert!(r.phi_trunc.abs() < 1e-14);
            assert!(r.err <= (2.0 / m as f64).min(1.0));
        }
        let r = sawtooth(0.25, 100).unwrap();
        assert!((r.err_bound - 0.04).abs() < 1e-15);
        assert!(r.err <= 0.04);
        let r = sawtooth(1.0 / 3.0, 50).unwrap();
        assert!((r.err_bound - 0.06).abs() < 1e-12);
        assert!(r.constant <= 2.0);
    }

    #[test]
    fn sawtooth_series_matches_closed_form_of_first_term() {
        let t: f64 = 0.1;
        let r = sawtooth(t, 1).unwrap();
        assert!((r.phi_trunc + (2.0 * PI * t).sin() / PI).abs() < 1e-15);
    }
}
