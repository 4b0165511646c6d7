//! Vaughan's identity and the four-way split of a `Lambda`-weighted sum.
//!
//! With `Pi_v(l) = sum_{rs = l, r <= v, s <= v} Lambda(r) mu(s)` and
//! `Xi_v(l) = sum_{d | l, d > v} mu(d)`, for every `n > v`
//!
//! ```text
//! Lambda(n) = sum_{kl = n, l <= v} mu(l) log k
//!           - sum_{kl = n, l <= v^2} Pi_v(l)
//!           + sum_{kl = n, k > v, l > v} Lambda(k) Xi_v(l).
//! ```
//!
//! For `n <= v` the right side vanishes instead, so the identity fails
//! exactly at prime powers `n <= v`; [`vaughan_regime_scan`] confirms this.

use super::PhaseSpec;
use crate::error::{Error, Result};
use crate::numeric::{det_sum, ComplexNeumaier};
use crate::sieve::PrimeTable;
use num_complex::Complex64;
use serde::Serialize;

/// `v = P1^{(2^{q+1} - 2) / (2^{2q+1} + 2^q - 2)}`.
pub fn default_v(p1: u64, q: usize) -> f64 {
    let q = q as i32;
    let num = 2f64.powi(q + 1) - 2.0;
    let den = 2f64.powi(2 * q + 1) + 2f64.powi(q) - 2.0;
    (p1 as f64).powf(num / den)
}

/// `Pi_v(l)` straight from the definition.
pub fn pi_v(pt: &PrimeTable, v: f64, l: u64) -> f64 {
    let vi = v.floor() as u64;
    let mut acc = 0.0;
    for r in 1..=vi.min(l) {
        if l.is_multiple_of(r) {
            let s = l / r;
            if s <= vi {
                acc += pt.lambda(r) * pt.mu(s) as f64;
            }
        }
    }
    acc
}

/// `Xi_v(l)` straight from the definition.
pub fn xi_v(pt: &PrimeTable, v: f64, l: u64) -> i64 {
    (1..=l)
        .filter(|&d| l.is_multiple_of(d) && d as f64 > v)
        .map(|d| pt.mu(d) as i64)
        .sum()
}

/// `Pi_v` on `0..=lmax`, by a double loop over `r, s <= v`.
fn pi_table(pt: &PrimeTable, v: f64, lmax: u64) -> Vec<f64> {
    let vi = v.floor() as u64;
    let mut t = vec![0.0; lmax as usize + 1];
    for r in 2..=vi {
        let lam = pt.lambda(r);
        if lam == 0.0 {
            continue;
        }
        for s in 1..=vi {
            let l = r * s;
            if l > lmax {
                break;
            }
            t[l as usize] += lam * pt.mu(s) as f64;
        }
    }
    t
}

/// `Xi_v` on `0..=lmax`, using `Xi_v(l) = [l = 1] - sum_{d | l, d <= v} mu(d)`.
fn xi_table(pt: &PrimeTable, v: f64, lmax: u64) -> Vec<i32> {
    let vi = (v.floor() as u64).min(lmax);
    let mut t = vec![0i32; lmax as usize + 1];
    if lmax >= 1 {
        t[1] = 1;
    }
    for d in 1..=vi {
        let mu = pt.mu(d) as i32;
        if mu == 0 {
            continue;
        }
        let mut l = d;
        while l <= lmax {
            t[l as usize] -= mu;
            l += d;
        }
    }
    t
}

/// Right side of the identity at a single `n`.
pub fn vaughan_pointwise(pt: &PrimeTable, n: u64, v: f64) -> f64 {
    let mut acc = 0.0;
    for l in 1..=n {
        if !n.is_multiple_of(l) {
            continue;
        }
        let k = n / l;
        let lf = l as f64;
        if lf <= v {
            acc += pt.mu(l) as f64 * (k as f64).ln();
        }
        if lf <= v * v {
            acc -= pi_v(pt, v, l);
        }
        if lf > v && (k as f64) > v {
            acc += pt.lambda(k) * xi_v(pt, v, l) as f64;
        }
    }
    acc
}

/// Every `n <= n_max` at which the identity fails by more than `1e-9`.
pub fn vaughan_regime_scan(pt: &PrimeTable, v: f64, n_max: u64) -> Result<Vec<u64>> {
    pt.check_range(n_max)?;
    Ok((1..=n_max)
        .filter(|&n| (vaughan_pointwise(pt, n, v) - pt.lambda(n)).abs() > 1e-9)
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct VaughanSplit {
    pub s1: Complex64,
    pub s21: Complex64,
    pub s22: Complex64,
    pub s3: Complex64,
    pub direct: Complex64,
    /// `|direct - (S1 - S21 - S22 + S3)|`.
    pub residual: f64,
    pub v: f64,
}

impl VaughanSplit {
    /// `residual <= 1e-8 (1 + |direct|)`.
    pub fn exact(&self) -> bool {
        self.residual <= 1e-8 * (1.0 + self.direct.norm())
    }
}

/// The four sums of the decomposition on `(P, P1]`, next to the direct sum.
pub fn vaughan_split(pt: &PrimeTable, spec: &PhaseSpec, v: f64) -> Result<VaughanSplit> {
    if !(v >= 2.0) {
        return Err(Error::InvalidArgument(format!("v = {v} < 2")));
    }
    if spec.p as f64 <= v {
        return Err(Error::RegimeViolation(format!(
            "P = {} <= v = {v}; the identity needs n > v",
            spec.p
        )));
    }
    pt.check_range(spec.p1)?;
    let (p, p1) = (spec.p, spec.p1);
    let vi = v.floor() as u64;
    let v2 = (v * v).floor() as u64;
    let lmax = (p1 as f64 / v).floor() as u64;
    let z = spec.unit_table(p + 1, p1)?;
    let at = |n: u64| z[(n - p - 1) as usize];
    let pis = pi_table(pt, v, v2.max(1));
    let xis = xi_table(pt, v, lmax.max(1));

    let inner = |l: u64, kmin: u64, weight: &dyn Fn(u64) -> f64| {
        let mut acc = ComplexNeumaier::new();
        for k in kmin.max(p / l + 1)..=p1 / l {
            let wk = weight(k);
            if wk != 0.0 {
                acc.add(at(k * l) * wk);
            }
        }
        acc.value()
    };

    let s1 = det_sum(vi as usize, |i| {
        let l = i as u64 + 1;
        let mu = pt.mu(l) as f64;
        if mu == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        inner(l, 1, &|k| (k as f64).ln()) * mu
    });
    let s21 = det_sum(vi as usize, |i| {
        let l = i as u64 + 1;
        let c = pis[l as usize];
        if c == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        inner(l, 1, &|_| 1.0) * c
    });
    let s22 = det_sum(v2.saturating_sub(vi) as usize, |i| {
        let l = vi + 1 + i as u64;
        let c = pis[l as usize];
        if c == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        inner(l, 1, &|_| 1.0) * c
    });
    let s3 = det_sum(lmax.saturating_sub(vi) as usize, |i| {
        let l = vi + 1 + i as u64;
        let c = xis[l as usize];
        if c == 0 {
            return Complex64::new(0.0, 0.0);
        }
        inner(l, vi + 1, &|k| pt.lambda(k)) * c as f64
    });
    let direct = det_sum(z.len(), |i| z[i] * pt.lambda(p + 1 + i as u64));
    let residual = (direct - (s1 - s21 - s22 + s3)).norm();
    Ok(VaughanSplit {
        s1,
        s21,
        s22,
        s3,
        direct,
        residual,
        v,
    })
}

/// `(sum_{L<l<=2L} |Pi_v(l)|^2 / (L log^2 L), sum_{L<l<=2L} |Xi_v(l)|^2 / (L log^3 L))`.
pub fn vaughan_moment_check(pt: &PrimeTable, v: f64, l: u64) -> Result<(f64, f64)> {
    if l < 2 {
        return Err(Error::InvalidArgument(format!("L = {l} < 2")));
    }
    pt.check_range(2 * l)?;
    let pis = pi_table(pt, v, 2 * l);
    let xis = xi_table(pt, v, 2 * l);
    let lf = l as f64;
    let range = (l + 1) as usize..=(2 * l) as usize;
    let m_pi: f64 = pis[range.clone()].iter().map(|x| x * x).sum();
    let m_xi: f64 = xis[range].iter().map(|&x| (x as f64) * (x as f64)).sum();
    Ok((m_pi / (lf * lf.ln().powi(2)), m_xi / (lf * lf.ln().powi(3))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expsum::IntPolynomial;
    use crate::sieve::build_prime_table;
    use crate::thinfn::{make_thin_function, Family, FamilyParams};

    #[test]
    fn convolution_examples() {
        let pt = build_prime_table(100).unwrap();
        for v in [1.0, 2.0, 7.5] {
            assert_eq!(pi_v(&pt, v, 1), 0.0);
            assert_eq!(xi_v(&pt, v, 1), 0);
        }
        assert_eq!(pi_v(&pt, 2.0, 4), -(2f64.ln()));
        assert_eq!(xi_v(&pt, 1.0, 2), -1);
    }

    #[test]
    fn tables_match_definitions() {
        let pt = build_prime_table(1000).unwrap();
        let v = 6.5;
        let pis = pi_table(&pt, v, 60);
        let xis = xi_table(&pt, v, 300);
        for l in 1..=60 {
            assert!((pis[l as usize] - pi_v(&pt, v, l)).abs() < 1e-12, "Pi({l})");
        }
        for l in 1..=300 {
            assert_eq!(xis[l as usize] as i64, xi_v(&pt, v, l), "Xi({l})");
        }
    }

    #[test]
    fn identity_fails_exactly_at_small_prime_powers() {
        let pt = build_prime_table(2000).unwrap();
        for v in [2.0, 5.0, 10.0, 17.3] {
            let bad = vaughan_regime_scan(&pt, v, 2000).unwrap();
            let want: Vec<u64> = (1..=2000u64)
                .filter(|&n| n as f64 <= v && pt.lambda(n) != 0.0)
                .collect();
            assert_eq!(bad, want, "v = {v}");
        }
    }

    #[test]
    fn split_reproduces_direct_sum() {
        let pt = build_prime_table(4000).unwrap();
        let tf = make_thin_function(Family::Power, FamilyParams::power(0.95)).unwrap();
        let spec = PhaseSpec::new(0.17, IntPolynomial::identity(), 1, &tf, 1000, 2000).unwrap();
        let r = vaughan_split(&pt, &spec, 2000f64.powf(0.2)).unwrap();
        assert!(r.exact(), "residual {}", r.residual);
        let r = vaughan_split(&pt, &spec, default_v(2000, 1)).unwrap();
        assert!(r.exact(), "residual {}", r.residual);
    }

    #[test]
    fn default_v_exponent() {
        assert!((default_v(10_000, 1) - 10.0).abs() < 1e-12);
        // q = 2: (8 - 2) / (32 + 4 - 2) = 6/34.
        assert!((default_v(1 << 17, 2) - 2f64.powf(17.0 * 6.0 / 34.0)).abs() < 1e-9);
    }

    #[test]
    fn regime_violation() {
        let pt = build_prime_table(100).unwrap();
        let tf = make_thin_function(Family::Power, FamilyParams::power(1.0)).unwrap();
        let spec = PhaseSpec::new(0.1, IntPolynomial::identity(), 0, &tf, 5, 10).unwrap();
        assert!(matches!(vaughan_split(&pt, &spec, 6.0), Err(Error::RegimeViolation(_))));
    }

    #[test]
    fn moments_bounded() {
        let pt = build_prime_table(2_000).unwrap();
        assert_eq!(vaughan_moment_check(&pt, 1.0, 500).unwrap().0, 0.0);
        let (a, b) = vaughan_moment_check(&pt, 10.0, 1000).unwrap();
        assert!(a <= 100.0 && b <= 100.0);
    }
}
