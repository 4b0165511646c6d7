//! Exponential sums over primes and thin primes.
//!
//! Phases are always reduced modulo one before the exponential is taken:
//! `xi W(k)` through the exact integer `W(k)` and [`frac_mul_int`], and
//! `m phi(k)` in double-double arithmetic.

mod bounds;
mod vaughan;

pub use bounds::{
    bilinear_sum_bound, default_truncation, sawtooth, vdc_bound_check, BilinearReport, SawtoothReport, VdcReport,
};
pub use vaughan::{
    default_v, pi_v, vaughan_moment_check, vaughan_pointwise, vaughan_regime_scan, vaughan_split, xi_v, VaughanSplit,
};

pub use crate::poly::IntPolynomial;

use crate::error::{Error, Result};
use crate::numeric::{det_sum, frac, frac_mul_int, least_squares_slope, unit, ComplexNeumaier};
use crate::sieve::{PrimeTable, ThinPrimeSet};
use crate::thinfn::{admissible_params, ThinFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// Phase `xi W(k) + m phi(k)` on the range `(P, P1]`.
#[derive(Clone, Debug)]
pub struct PhaseSpec<'a> {
    pub xi: f64,
    pub w: IntPolynomial,
    pub m: i64,
    pub tf: &'a ThinFunction,
    pub p: u64,
    pub p1: u64,
}

impl<'a> PhaseSpec<'a> {
    pub fn new(xi: f64, w: IntPolynomial, m: i64, tf: &'a ThinFunction, p: u64, p1: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::InvalidArgument(format!("xi = {xi} not in [0, 1]")));
        }
        if !(p < p1 && p1 <= 2 * p) {
            return Err(Error::InvalidArgument(format!("need P < P1 <= 2P, got ({p}, {p1}]")));
        }
        if m.unsigned_abs() >= 1 << 53 {
            return Err(Error::InvalidArgument(format!("|m| = {m} too large")));
        }
        w.check_range(p1)?;
        Ok(PhaseSpec { xi, w, m, tf, p, p1 })
    }

    /// `{xi W(n) + m phi(n)}`.
    pub fn phase(&self, n: u64) -> Result<f64> {
        let a = frac_mul_int(self.xi, self.w.eval_unchecked(n as i64));
        if self.m == 0 {
            return Ok(a);
        }
        let t = self.tf.phi_dd(n)?.mul_f64(self.m as f64);
        let b = (t - t.floor()).to_f64();
        Ok(frac(a + b))
    }

    /// `e(phase(n))` for every `n` in `[lo, hi]`, in order.
    pub fn unit_table(&self, lo: u64, hi: u64) -> Result<Vec<Complex64>> {
        if lo > hi {
            return Ok(Vec::new());
        }
        (lo..=hi).into_par_iter().map(|n| Ok(unit(self.phase(n)?))).collect()
    }
}

/// `sum_{P < k <= P1} Lambda(k) e(xi W(k) + m phi(k))`.
pub fn lambda_exp_sum(pt: &PrimeTable, spec: &PhaseSpec) -> Result<Complex64> {
    pt.check_range(spec.p1)?;
    let ks: Vec<(u64, f64)> = (spec.p + 1..=spec.p1)
        .filter_map(|k| {
            let l = pt.lambda(k);
            (l != 0.0).then_some((k, l))
        })
        .collect();
    let z: Vec<Complex64> = ks
        .par_iter()
        .map(|&(k, _)| Ok(unit(spec.phase(k)?)))
        .collect::<Result<_>>()?;
    Ok(det_sum(ks.len(), |i| z[i] * ks[i].1))
}

/// `(G~, F~)`: the weighted sum over thin primes `<= N` and the `log p`
/// weighted sum over all primes `<= N`, both with phase `xi W(p)`.
pub fn weighted_prime_sums(
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    xi: f64,
    n: u64,
) -> Result<(Complex64, Complex64)> {
    pt.check_range(n)?;
    tps.check_limit(n)?;
    w.check_range(n)?;
    let thin = &tps.primes()[..tps.count_upto(n)];
    let weights = tps.weights();
    let all = pt.primes_upto(n);
    let g = det_sum(thin.len(), |i| {
        unit(frac_mul_int(xi, w.eval_unchecked(thin[i] as i64))) * weights[i]
    });
    let f = det_sum(all.len(), |i| {
        let p = all[i];
        unit(frac_mul_int(xi, w.eval_unchecked(p as i64))) * (p as f64).ln()
    });
    Ok((g, f))
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayEntry {
    pub n: u64,
    pub gap: f64,
    pub normalized: f64,
}

/// `sup_xi |G~ - F~|` on dyadic `N`, with the fitted growth exponent.
#[derive(Clone, Debug, Serialize)]
pub struct DecayProfile {
    pub entries: Vec<DecayEntry>,
    /// Least-squares slope of `log gap` against `log N` over entries with
    /// a positive gap; `None` when fewer than two such entries exist.
    pub fitted_exponent: Option<f64>,
    pub xi_grid_size: usize,
    /// Every gap is exactly zero (the thin set is all primes).
    pub exact_zero: bool,
}

impl DecayProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "N,gap,gap_over_N")?;
        for e in &self.entries {
            writeln!(out, "{},{:.17e},{:.17e}", e.n, e.gap, e.normalized)?;
        }
        match self.fitted_exponent {
            Some(s) => writeln!(out, "fitted_exponent,{s:.17e},")?,
            None => writeln!(out, "fitted_exponent,,")?,
        }
        Ok(())
    }
}

/// Running sums along ascending primes, read out at each checkpoint.
fn prefix_at_checkpoints(
    primes: &[u64],
    weights: &dyn Fn(usize) -> f64,
    wvals: &[i128],
    xi: f64,
    checkpoints: &[u64],
) -> Vec<Complex64> {
    let mut acc = ComplexNeumaier::new();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut i = 0;
    for &n in checkpoints {
        while i < primes.len() && primes[i] <= n {
            acc.add(unit(frac_mul_int(xi, wvals[i])) * weights(i));
            i += 1;
        }
        out.push(acc.value());
    }
    out
}

/// Measures `gap(N) = max_j |G~(xi_j, N) - F~(xi_j, N)|` on the grid
/// `xi_j = j / grid` for dyadic `N = 2, 4, ..., <= N_max`.
pub fn formlem_decay(
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    xi_grid_size: usize,
    n_max: u64,
) -> Result<DecayProfile> {
    if xi_grid_size < 64 {
        return Err(Error::InvalidArgument(format!("xi grid {xi_grid_size} < 64")));
    }
    pt.check_range(n_max)?;
    tps.check_limit(n_max)?;
    w.check_range(n_max)?;
    let checkpoints = crate::numeric::dyadic_upto(1, n_max);
    let thin = &tps.primes()[..tps.count_upto(n_max)];
    let thin_w: Vec<i128> = thin.iter().map(|&p| w.eval_unchecked(p as i64)).collect();
    let tw = tps.weights();
    let all = pt.primes_upto(n_max);
    let all_w: Vec<i128> = all.iter().map(|&p| w.eval_unchecked(p as i64)).collect();
    let all_log: Vec<f64> = all.iter().map(|&p| (p as f64).ln()).collect();
    let gaps: Vec<Vec<f64>> = (0..xi_grid_size)
        .into_par_iter()
        .map(|j| {
            let xi = j as f64 / xi_grid_size as f64;
            let g = prefix_at_checkpoints(thin, &|i| tw[i], &thin_w, xi, &checkpoints);
            let f = prefix_at_checkpoints(all, &|i| all_log[i], &all_w, xi, &checkpoints);
            g.iter().zip(&f).map(|(a, b)| (a - b).norm()).collect()
        })
        .collect();
    let entries: Vec<DecayEntry> = checkpoints
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let gap = gaps.iter().map(|row| row[c]).fold(0.0, f64::max);
            DecayEntry {
                n,
                gap,
                normalized: gap / n as f64,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = entries
        .iter()
        .filter(|e| e.gap > 0.0)
        .map(|e| ((e.n as f64).ln(), e.gap.ln()))
        .unzip();
    Ok(DecayProfile {
        exact_zero: entries.iter().all(|e| e.gap == 0.0),
        fitted_exponent: least_squares_slope(&xs, &ys),
        entries,
        xi_grid_size,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiErrorReport {
    pub value: Complex64,
    pub magnitude: f64,
    /// `N^{1 - chi}` with `chi` the largest admissible value.
    pub reference: f64,
    pub chi: f64,
    pub ratio: f64,
}

/// `sum_{k <= N} phi'(k)^{-1} (Phi(-phi(k+1)) - Phi(-phi(k))) Lambda(k) e(xi W(k))`
/// with the sawtooth `Phi(t) = {t} - 1/2`. Terms start at the first `k`
/// inside the domain of `phi`.
pub fn phi_error_sum(tf: &ThinFunction, pt: &PrimeTable, w: &IntPolynomial, xi: f64, n: u64) -> Result<PhiErrorReport> {
    pt.check_range(n)?;
    w.check_range(n)?;
    let k0 = (tf.h_x0().ceil() as u64).max(2);
    let ks: Vec<(u64, f64)> = (k0..=n)
        .filter_map(|k| {
            let l = pt.lambda(k);
            (l != 0.0).then_some((k, l))
        })
        .collect();
    let terms: Vec<Complex64> = ks
        .par_iter()
        .map(|&(k, lam)| {
            let a = tf.phi(k as f64)?;
            let b = tf.phi((k + 1) as f64)?;
            let saw = frac(-b) - frac(-a);
            if saw == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let weight = tf.phi_prime_inv(k as f64)?;
            Ok(unit(frac_mul_int(xi, w.eval_unchecked(k as i64))) * (weight * saw * lam))
        })
        .collect::<Result<_>>()?;
    let value = det_sum(terms.len(), |i| terms[i]);
    let chi = admissible_params(w.degree() as u32, tf.gamma().min(1.0))?.chi_max;
    let reference = (n as f64).powf(1.0 - chi);
    Ok(PhiErrorReport {
        value,
        magnitude: value.norm(),
        reference,
        chi,
        ratio: value.norm() / reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::Dd;
    use crate::sieve::{build_prime_table, enumerate_thin_primes};
    use crate::thinfn::{make_thin_function, Family, FamilyParams};

    fn power(g: f64) -> ThinFunction {
        make_thin_function(Family::Power, FamilyParams::power(g)).unwrap()
    }

    #[test]
    fn zero_phase_is_chebyshev_difference() {
        let pt = build_prime_table(100).unwrap();
        let tf = power(1.0);
        let spec = PhaseSpec::new(0.0, IntPolynomial::identity(), 0, &tf, 10, 20).unwrap();
        let s = lambda_exp_sum(&pt, &spec).unwrap();
        let want = 11f64.ln() + 13f64.ln() + 2f64.ln() + 17f64.ln() + 19f64.ln();
        assert!((s.re - want).abs() < 1e-13);
        assert_eq!(s.im, 0.0);
    }

    #[test]
    fn half_frequency_two_terms() {
        let pt = build_prime_table(100).unwrap();
        let tf = power(1.0);
        let spec = PhaseSpec::new(0.5, IntPolynomial::identity(), 0, &tf, 2, 4).unwrap();
        let s = lambda_exp_sum(&pt, &spec).unwrap();
        assert!((s.re - (2f64.ln() - 3f64.ln())).abs() < 1e-14);
        assert!(s.im.abs() < 1e-14);
    }

    #[test]
    fn matches_double_double_resummation() {
        // xi = 0.3 is M 2^-e exactly; xi W(k) mod 1 is then an exact
        // integer residue, and m phi(k) is formed in double-double.
        let pt = build_prime_table(1 << 14).unwrap();
        let tf = power(0.95);
        let w = IntPolynomial::monomial(2).unwrap();
        let (p, p1) = (1u64 << 12, 1u64 << 13);
        let spec = PhaseSpec::new(0.3, w, 2, &tf, p, p1).unwrap();
        let got = lambda_exp_sum(&pt, &spec).unwrap();

        let bits = 0.3f64.to_bits();
        let e = 1075 - ((bits >> 52) & 0x7ff) as i32;
        let mant = ((bits & ((1u64 << 52) - 1)) | (1 << 52)) as i128;
        let modulus = 1i128 << e;
        let (mut re, mut im) = (Dd::ZERO, Dd::ZERO);
        for k in p + 1..=p1 {
            let lam = pt.lambda(k);
            if lam == 0.0 {
                continue;
            }
            let r = (mant * (k as i128 * k as i128)).rem_euclid(modulus);
            let a = Dd::from_u64(r as u64).ldexp(-e);
            let b = tf.phi_dd(k).unwrap().mul_f64(2.0);
            let t = a + b;
            let t = (t - t.floor()).to_f64();
            let (s, c) = (std::f64::consts::TAU * t).sin_cos();
            re = re + Dd::from_f64(c).mul_f64(lam);
            im = im + Dd::from_f64(s).mul_f64(lam);
        }
        assert!((got.re - re.to_f64()).abs() < 1e-9, "{} vs {}", got.re, re.to_f64());
        assert!((got.im - im.to_f64()).abs() < 1e-9, "{} vs {}", got.im, im.to_f64());
    }

    #[test]
    fn conjugation_symmetry() {
        let pt = build_prime_table(5000).unwrap();
        let tf = power(0.93);
        let w = IntPolynomial::parse("1,3,2").unwrap();
        let a = PhaseSpec::new(0.7, w.clone(), 3, &tf, 2000, 4000).unwrap();
        // 1 - 0.7 is exact in binary64, 1 - 0.3 is not.
        let b = PhaseSpec::new(1.0 - 0.7, w, -3, &tf, 2000, 4000).unwrap();
        let sa = lambda_exp_sum(&pt, &a).unwrap();
        let sb = lambda_exp_sum(&pt, &b).unwrap();
        assert!((sa - sb.conj()).norm() < 1e-10);
    }

    #[test]
    fn identity_sums_coincide() {
        let pt = build_prime_table(1 << 12).unwrap();
        let tf = power(1.0);
        let s = enumerate_thin_primes(&tf, &pt, 1 << 12).unwrap();
        let (g, f) = weighted_prime_sums(&s, &pt, &IntPolynomial::identity(), 0.377, 1 << 12).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn zero_frequency_sums_are_real() {
        let pt = build_prime_table(10_000).unwrap();
        let tf = power(0.95);
        let s = enumerate_thin_primes(&tf, &pt, 10_000).unwrap();
        let (g, f) = weighted_prime_sums(&s, &pt, &IntPolynomial::identity(), 0.0, 10_000).unwrap();
        assert_eq!(g.im, 0.0);
        assert_eq!(f.im, 0.0);
        let wsum: f64 = s.weights().iter().sum();
        assert!((g.re - wsum).abs() < 1e-9 * wsum);
    }

    #[test]
    fn identity_decay_profile_is_exact_zero() {
        let pt = build_prime_table(1 << 10).unwrap();
        let tf = power(1.0);
        let s = enumerate_thin_primes(&tf, &pt, 1 << 10).unwrap();
        let d = formlem_decay(&s, &pt, &IntPolynomial::identity(), 64, 1 << 10).unwrap();
        assert!(d.exact_zero);
        assert!(d.fitted_exponent.is_none());
        assert_eq!(d.entries.len(), 10);
    }

    #[test]
    fn decay_profile_matches_pointwise_sums() {
        let pt = build_prime_table(1 << 12).unwrap();
        let tf = power(0.9);
        let s = enumerate_thin_primes(&tf, &pt, 1 << 12).unwrap();
        let w = IntPolynomial::identity();
        let d = formlem_decay(&s, &pt, &w, 64, 1 << 12).unwrap();
        let last = d.entries.last().unwrap();
        let direct = (0..64)
            .map(|j| {
                let (g, f) = weighted_prime_sums(&s, &pt, &w, j as f64 / 64.0, 1 << 12).unwrap();
                (g - f).norm()
            })
            .fold(0.0, f64::max);
        assert!((last.gap - direct).abs() <= 1e-10 * direct);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,gap,gap_over_N\n"));
        assert!(text.lines().last().unwrap().starts_with("fitted_exponent,"));
    }

    #[test]
    fn phi_error_vanishes_for_identity() {
        let pt = build_prime_table(5000).unwrap();
        let r = phi_error_sum(&power(1.0), &pt, &IntPolynomial::identity(), 0.3, 5000).unwrap();
        assert_eq!(r.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn phi_error_zero_frequency_is_real_and_small() {
        let pt = build_prime_table(10_000).unwrap();
        let r = phi_error_sum(&power(0.95), &pt, &IntPolynomial::identity(), 0.0, 10_000).unwrap();
        assert_eq!(r.value.im, 0.0);
        assert!(r.magnitude < 10_000.0);
    }
}
