//! Integer polynomials `W: Z -> Z` evaluated in exact 128-bit arithmetic.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IntPolynomial {
    /// Constant term first.
    coeffs: Vec<i64>,
}

impl IntPolynomial {
    pub fn new(coeffs: Vec<i64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidArgument("polynomial degree must be at least 1".into()));
        }
        if *coeffs.last().unwrap() == 0 {
            return Err(Error::InvalidArgument("leading coefficient is zero".into()));
        }
        Ok(IntPolynomial { coeffs })
    }

    /// `W(x) = x`.
    pub fn identity() -> Self {
        IntPolynomial { coeffs: vec![0, 1] }
    }

    /// `W(x) = x^q`.
    pub fn monomial(q: usize) -> Result<Self> {
        let mut c = vec![0; q + 1];
        c[q] = 1;
        Self::new(c)
    }

    /// Parses comma-separated coefficients, constant term first.
    pub fn parse(s: &str) -> Result<Self> {
        let coeffs = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad coefficient '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coeffs)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    /// `W(k)` with overflow detection.
    pub fn eval(&self, k: i64) -> Result<i128> {
        let k = k as i128;
        let mut acc: i128 = 0;
        for &a in self.coeffs.iter().rev() {
            acc = acc
                .checked_mul(k)
                .and_then(|v| v.checked_add(a as i128))
                .ok_or_else(|| Error::Overflow(format!("W({k}) exceeds 128 bits")))?;
        }
        Ok(acc)
    }

    /// Ok when every `|k| <= kmax` evaluates without overflow, so callers
    /// may use [`Self::eval_unchecked`] on that range.
    pub fn check_range(&self, kmax: u64) -> Result<()> {
        let k = kmax as i128;
        let mut bound: i128 = 0;
        for &a in self.coeffs.iter().rev() {
            bound = bound
                .checked_mul(k)
                .and_then(|v| v.checked_add((a as i128).abs()))
                .ok_or_else(|| Error::Overflow(format!("W on [-{kmax}, {kmax}] exceeds 128 bits")))?;
        }
        Ok(())
    }

    /// `W(k)` without overflow checks; valid after a successful
    /// [`Self::check_range`] covering `k`.
    #[inline]
    pub fn eval_unchecked(&self, k: i64) -> i128 {
        let k = k as i128;
        self.coeffs
            .iter()
            .rev()
            .fold(0i128, |acc, &a| acc.wrapping_mul(k).wrapping_add(a as i128))
    }

    /// `W(k) mod m` in `[0, m)`, exact for any `k`.
    pub fn eval_mod(&self, k: i64, m: u64) -> u64 {
        let m = m as i128;
        let kk = (k as i128).rem_euclid(m);
        let mut acc: i128 = 0;
        for &a in self.coeffs.iter().rev() {
            acc = (acc * kk + (a as i128).rem_euclid(m)).rem_euclid(m);
        }
        acc as u64
    }
}

impl fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}
