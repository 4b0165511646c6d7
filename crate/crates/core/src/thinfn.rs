//! Thin functions `h` of exponent `c in [1, 2)`, their inverse `phi`, and
//! the slowly varying diagnostics attached to them.
//!
//! Every family is written as `h(x) = C_h x^c exp(psi(log x))` where
//! `psi` is the logarithm of the slowly varying factor:
//!
//! | family | h(x)                      | psi(u)            |
//! |--------|---------------------------|-------------------|
//! | Power  | `C_h x^c`                 | `0`               |
//! | H1     | `x^c log^A x`             | `A log u`         |
//! | H2     | `x^c exp(A log^B x)`      | `A u^B`           |
//! | H3     | `x log^C x`               | `C log u`         |
//! | H4     | `x exp(C log^B x)`        | `C u^B`           |
//! | H5     | `x l_m(x)`                | `log^{(m)} u`     |
//!
//! Derivatives up to order four come from the exact jet of `psi` in the
//! variable `u = log x`, so no numerical differentiation is involved.

use crate::dd::Dd;
use crate::error::{Error, Result};
use num_rational::Ratio;
use serde::Serialize;
use std::collections::HashMap;
use std::fmt;
use std::sync::RwLock;

/// Points in the log-spaced grid used to select and verify `x0`.
pub const X0_GRID_POINTS: usize = 10_000;
/// Largest admissible left endpoint.
pub const X0_MAX: f64 = 1e6;
const X0_GRID_TOP: f64 = 1e15;
const PHI_CACHE_CAP: usize = 1 << 20;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Family {
    Power,
    H1,
    H2,
    H3,
    H4,
    H5,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Power => "power",
            Family::H1 => "h1",
            Family::H2 => "h2",
            Family::H3 => "h3",
            Family::H4 => "h4",
            Family::H5 => "h5",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s.trim().to_ascii_lowercase().as_str() {
            "power" | "ps" => Ok(Family::Power),
            "h1" => Ok(Family::H1),
            "h2" => Ok(Family::H2),
            "h3" => Ok(Family::H3),
            "h4" => Ok(Family::H4),
            "h5" => Ok(Family::H5),
            other => Err(Error::ParameterOutOfRange(format!("unknown family '{other}'"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw user parameters; which fields are required depends on the family.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FamilyParams {
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// The `C` of H3 and H4.
    pub cc: Option<f64>,
    pub m: Option<u32>,
    pub c_h: Option<f64>,
    /// `None` selects `x0` automatically.
    pub x0: Option<f64>,
}

impl FamilyParams {
    pub fn power(gamma: f64) -> Self {
        FamilyParams {
            gamma: Some(gamma),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Psi {
    Zero,
    LogU(f64),
    PowU(f64, f64),
    IterLog(u32),
}

/// Quantities accepted by [`ThinFunction::evaluate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    H,
    HDeriv(u8),
    Phi,
    PhiDeriv(u8),
    EllH,
    Vartheta,
    Theta,
    Sigma,
}

struct PhiCache {
    enabled: bool,
    map: RwLock<HashMap<u64, f64>>,
}

impl PhiCache {
    fn new(enabled: bool) -> Self {
        PhiCache {
            enabled,
            map: RwLock::new(HashMap::new()),
        }
    }

    fn get(&self, x: f64) -> Option<f64> {
        if !self.enabled {
            return None;
        }
        self.map.read().ok()?.get(&x.to_bits()).copied()
    }

    fn put(&self, x: f64, y: f64) {
        if !self.enabled {
            return;
        }
        if let Ok(mut m) = self.map.write() {
            if m.len() < PHI_CACHE_CAP {
                m.insert(x.to_bits(), y);
            }
        }
    }
}

/// A member of the class of thin functions together with its domain.
pub struct ThinFunction {
    family: Family,
    c: f64,
    gamma: f64,
    gamma_dd: Dd,
    params: FamilyParams,
    psi: Psi,
    c_h: f64,
    x0: f64,
    x0_auto: bool,
    hx0: f64,
    identity: bool,
    cache: PhiCache,
}

impl Clone for ThinFunction {
    fn clone(&self) -> Self {
        ThinFunction {
            family: self.family,
            c: self.c,
            gamma: self.gamma,
            gamma_dd: self.gamma_dd,
            params: self.params.clone(),
            psi: self.psi,
            c_h: self.c_h,
            x0: self.x0,
            x0_auto: self.x0_auto,
            hx0: self.hx0,
            identity: self.identity,
            cache: PhiCache::new(self.cache.enabled),
        }
    }
}

impl fmt::Debug for ThinFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThinFunction")
            .field("family", &self.family)
            .field("c", &self.c)
            .field("gamma", &self.gamma)
            .field("params", &self.params)
            .field("x0", &self.x0)
            .field("x0_auto", &self.x0_auto)
            .finish()
    }
}

fn falling(c: f64, n: u8) -> f64 {
    (0..n).map(|j| c - j as f64).product()
}

/// Jet of `log f` from the jet of `f` (orders 0..=4).
fn log_jet(f: [f64; 5]) -> [f64; 5] {
    let r1 = f[1] / f[0];
    let r2 = f[2] / f[0];
    let r3 = f[3] / f[0];
    let r4 = f[4] / f[0];
    [
        f[0].ln(),
        r1,
        r2 - r1 * r1,
        r3 - 3.0 * r1 * r2 + 2.0 * r1.powi(3),
        r4 - 4.0 * r1 * r3 - 3.0 * r2 * r2 + 12.0 * r1 * r1 * r2 - 6.0 * r1.powi(4),
    ]
}

fn check_range(name: &str, v: f64, ok: bool) -> Result<()> {
    if v.is_finite() && ok {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!("{name} = {v}")))
    }
}

/// Builds a thin function, validating parameters and fixing `x0`.
pub fn make_thin_function(family: Family, params: FamilyParams) -> Result<ThinFunction> {
    let p = &params;
    let need =
        |v: Option<f64>, name: &str| v.ok_or_else(|| Error::ParameterOutOfRange(format!("{family} requires {name}")));
    let exponent = || -> Result<f64> {
        match (p.c, p.gamma) {
            (Some(c), None) => Ok(c),
            (None, Some(g)) => {
                check_range("gamma", g, g > 0.5 && g <= 1.0)?;
                Ok(1.0 / g)
            }
            (Some(c), Some(g)) => {
                if (c * g - 1.0).abs() > 1e-12 {
                    Err(Error::ParameterOutOfRange(format!("c = {c} and gamma = {g} disagree")))
                } else {
                    Ok(c)
                }
            }
            (None, None) => Err(Error::ParameterOutOfRange(format!("{family} requires c or gamma"))),
        }
    };
    let unit_exponent = || -> Result<f64> {
        let c = p.c.unwrap_or(1.0);
        let g = p.gamma.unwrap_or(1.0);
        if c != 1.0 || g != 1.0 {
            return Err(Error::ParameterOutOfRange(format!("{family} has c = 1 fixed")));
        }
        Ok(1.0)
    };
    let (c, psi) = match family {
        Family::Power => (exponent()?, Psi::Zero),
        Family::H1 => (exponent()?, Psi::LogU(need(p.a, "A")?)),
        Family::H2 => (exponent()?, Psi::PowU(need(p.a, "A")?, need(p.b, "B")?)),
        Family::H3 => (unit_exponent()?, Psi::LogU(need(p.cc, "C")?)),
        Family::H4 => (unit_exponent()?, Psi::PowU(need(p.cc, "C")?, need(p.b, "B")?)),
        Family::H5 => {
            let m = p.m.ok_or_else(|| Error::ParameterOutOfRange("h5 requires m".into()))?;
            if m == 0 {
                return Err(Error::ParameterOutOfRange("m = 0".into()));
            }
            (unit_exponent()?, Psi::IterLog(m))
        }
    };
    check_range("c", c, (1.0..2.0).contains(&c))?;
    match psi {
        Psi::LogU(a) => check_range(if family == Family::H3 { "C" } else { "A" }, a, true)?,
        Psi::PowU(a, b) => {
            check_range("B", b, b > 0.0 && b < 1.0)?;
            check_range(if family == Family::H4 { "C" } else { "A" }, a, true)?;
        }
        _ => {}
    }
    if matches!(family, Family::H3 | Family::H4) {
        let cc = p.cc.unwrap_or(0.0);
        check_range("C", cc, cc > 0.0)?;
    }
    let c_h = p.c_h.unwrap_or(1.0);
    check_range("C_h", c_h, c_h > 0.0)?;
    let gamma = match (family, p.gamma) {
        (Family::Power | Family::H1 | Family::H2, Some(g)) => g,
        _ => 1.0 / c,
    };
    let identity = family == Family::Power && c == 1.0 && c_h == 1.0;
    let mut tf = ThinFunction {
        family,
        c,
        gamma,
        gamma_dd: Dd::ONE / Dd::from_f64(c),
        params: params.clone(),
        psi,
        c_h,
        x0: 1.0,
        x0_auto: p.x0.is_none(),
        hx0: 1.0,
        identity,
        cache: PhiCache::new(true),
    };
    tf.x0 = match p.x0 {
        Some(x0) => {
            check_range("x0", x0, x0 >= 1.0 && x0 >= tf.domain_floor())?;
            tf.verify_from(x0)?;
            x0
        }
        None => tf.select_x0()?,
    };
    tf.hx0 = tf.h_raw(tf.x0)?;
    if tf.hx0 < 1.0 {
        return Err(Error::MonotonicityUnattainable(format!("h(x0) = {} < 1", tf.hx0)));
    }
    Ok(tf)
}

impl ThinFunction {
    /// `h(x) = x`, the function whose thin set is all primes.
    pub fn identity() -> ThinFunction {
        make_thin_function(Family::Power, FamilyParams::power(1.0)).expect("identity is valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// `1/c` to double-double accuracy.
    pub fn gamma_dd(&self) -> Dd {
        self.gamma_dd
    }
    pub fn c_h(&self) -> f64 {
        self.c_h
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn x0_auto(&self) -> bool {
        self.x0_auto
    }
    /// `h(x0)`, the left end of the domain of `phi`.
    pub fn h_x0(&self) -> f64 {
        self.hx0
    }
    pub fn params(&self) -> &FamilyParams {
        &self.params
    }
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Enables or disables the memo table for `phi`.
    pub fn with_phi_cache(mut self, enabled: bool) -> ThinFunction {
        self.cache = PhiCache::new(enabled);
        self
    }

    /// Infimum of the natural domain of the family.
    fn domain_floor(&self) -> f64 {
        match self.psi {
            Psi::Zero => 0.0,
            Psi::IterLog(m) => {
                let mut e = 0.0f64;
                for _ in 1..m {
                    e = e.exp();
                }
                e.exp()
            }
            _ => 1.0,
        }
    }

    fn psi_jet(&self, u: f64) -> Option<[f64; 5]> {
        match self.psi {
            Psi::Zero => Some([0.0; 5]),
            Psi::LogU(a) => {
                if u <= 0.0 {
                    return None;
                }
                let r = 1.0 / u;
                Some([a * u.ln(), a * r, -a * r * r, 2.0 * a * r.powi(3), -6.0 * a * r.powi(4)])
            }
            Psi::PowU(a, b) => {
                if u <= 0.0 {
                    return None;
                }
                let t = a * u.powf(b);
                let r = 1.0 / u;
                let d1 = t * b * r;
                let d2 = d1 * (b - 1.0) * r;
                let d3 = d2 * (b - 2.0) * r;
                let d4 = d3 * (b - 3.0) * r;
                Some([t, d1, d2, d3, d4])
            }
            Psi::IterLog(m) => {
                let mut jet = [u, 1.0, 0.0, 0.0, 0.0];
                for _ in 0..m {
                    if !(jet[0] > 0.0) {
                        return None;
                    }
                    jet = log_jet(jet);
                }
                Some(jet)
            }
        }
    }

    fn domain_err(&self, x: f64, side: &str) -> Error {
        Error::DomainError(format!("{side}({x}) outside the domain of {}", self.family))
    }

    /// `[h, h', h'', h''', h'''']` at `x` without the `x >= x0` check.
    fn h_jet(&self, x: f64) -> Result<[f64; 5]> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(self.domain_err(x, "h"));
        }
        if self.identity {
            return Ok([x, 1.0, 0.0, 0.0, 0.0]);
        }
        let c = self.c;
        if self.psi == Psi::Zero {
            let mut out = [0.0; 5];
            for (n, o) in out.iter_mut().enumerate() {
                *o = self.c_h * falling(c, n as u8) * x.powf(c - n as f64);
            }
            return Ok(out);
        }
        let u = x.ln();
        let s = self.psi_jet(u).ok_or_else(|| self.domain_err(x, "h"))?;
        let h = self.c_h * x.powf(c) * s[0].exp();
        let f1 = c + s[1];
        let d = (c - 1.0) + s[1];
        let (f2, f3, f4) = (s[2], s[3], s[4]);
        let k2 = f2 + f1 * d;
        let k3 = f3 + 3.0 * f2 * d + f1 * d * (d - 1.0);
        let k4 = f4
            + f3 * (4.0 * f1 - 6.0)
            + 3.0 * f2 * f2
            + f2 * (6.0 * f1 * f1 - 18.0 * f1 + 11.0)
            + f1 * d * (d - 1.0) * (d - 2.0);
        Ok([
            h,
            h * f1 / x,
            h * k2 / (x * x),
            h * k3 / (x * x * x),
            h * k4 / (x * x * x * x),
        ])
    }

    fn h_raw(&self, x: f64) -> Result<f64> {
        Ok(self.h_jet(x)?[0])
    }

    fn check_h_domain(&self, x: f64) -> Result<()> {
        if x >= self.x0 && x.is_finite() {
            Ok(())
        } else {
            Err(self.domain_err(x, "h"))
        }
    }

    fn check_phi_domain(&self, x: f64) -> Result<()> {
        if x >= self.hx0 && x.is_finite() {
            Ok(())
        } else {
            Err(self.domain_err(x, "phi"))
        }
    }

    pub fn h(&self, x: f64) -> Result<f64> {
        self.check_h_domain(x)?;
        self.h_raw(x)
    }

    /// `h^{(n)}(x)` for `n <= 4`.
    pub fn h_deriv(&self, n: u8, x: f64) -> Result<f64> {
        if n > 4 {
            return Err(Error::InvalidArgument(format!("derivative order {n} > 4")));
        }
        self.check_h_domain(x)?;
        Ok(self.h_jet(x)?[n as usize])
    }

    /// `vartheta(x) = x h'(x) / h(x) - c`.
    pub fn vartheta(&self, x: f64) -> Result<f64> {
        self.check_h_domain(x)?;
        let s = self.psi_jet(x.ln()).ok_or_else(|| self.domain_err(x, "vartheta"))?;
        Ok(s[1])
    }

    /// `ell_h(x) = h(x) / (C_h x^c)`.
    pub fn ell_h(&self, x: f64) -> Result<f64> {
        self.check_h_domain(x)?;
        let s = self.psi_jet(x.ln()).ok_or_else(|| self.domain_err(x, "ell_h"))?;
        Ok(s[0].exp())
    }

    /// Inverse of `h`: the unique `y >= x0` with `h(y) = x`.
    pub fn phi(&self, x: f64) -> Result<f64> {
        self.check_phi_domain(x)?;
        if self.identity {
            return Ok(x);
        }
        if self.psi == Psi::Zero {
            return Ok((x / self.c_h).powf(self.gamma));
        }
        if let Some(y) = self.cache.get(x) {
            return Ok(y);
        }
        let y = self.phi_solve(x)?;
        self.cache.put(x, y);
        Ok(y)
    }

    fn phi_solve(&self, x: f64) -> Result<f64> {
        let c = self.c;
        let t = (x / self.c_h).ln();
        // Work in u = log y.
        let eval = |u: f64| -> Result<(f64, f64)> {
            let s = self
                .psi_jet(u)
                .ok_or_else(|| Error::NoConvergence(format!("phi({x}): left the domain")))?;
            Ok((c * u + s[0] - t, c + s[1]))
        };
        let mut lo = self.x0.ln();
        let mut hi = (t / c).max(lo) + 1.0;
        let mut steps = 0;
        while eval(hi)?.0 < 0.0 {
            hi = lo + 2.0 * (hi - lo);
            steps += 1;
            if steps > NEWTON_MAX_ITER {
                return Err(Error::NoConvergence(format!("phi({x}): no upper bracket")));
            }
        }
        let mut u = (t / c).clamp(lo, hi);
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (gv, dv) = eval(u)?;
            if gv == 0.0 {
                converged = true;
                break;
            }
            if gv > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let mut un = u - gv / dv;
            if !(un > lo && un < hi) {
                un = 0.5 * (lo + hi);
            }
            let step = (un - u).abs();
            u = un;
            if step <= 1e-15 * u.abs().max(1.0) || hi - lo <= 1e-15 * u.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!(
                "phi({x}): tolerance 1e-14 not met in {NEWTON_MAX_ITER} iterations"
            )));
        }
        let mut y = u.exp().max(self.x0);
        for _ in 0..2 {
            let j = self.h_jet(y)?;
            let yn = y - (j[0] - x) / j[1];
            if !(yn >= self.x0) {
                break;
            }
            y = yn;
        }
        let resid = (self.h_raw(y)? - x).abs() / x;
        if resid > 1e-12 {
            return Err(Error::NoConvergence(format!("phi({x}): residual {resid:e}")));
        }
        Ok(y)
    }

    /// `phi^{(n)}(x)` for `n <= 3`; `n = 0` is `phi` itself.
    pub fn phi_deriv(&self, n: u8, x: f64) -> Result<f64> {
        let y = self.phi(x)?;
        let j = self.h_jet(y)?;
        match n {
            0 => Ok(y),
            1 => Ok(1.0 / j[1]),
            2 => Ok(-j[2] / j[1].powi(3)),
            3 => Ok((3.0 * j[2] * j[2] - j[1] * j[3]) / j[1].powi(5)),
            _ => Err(Error::InvalidArgument(format!("phi derivative order {n} > 3"))),
        }
    }

    /// `1 / phi'(x) = h'(phi(x))`, the weight attached to a thin prime.
    pub fn phi_prime_inv(&self, x: f64) -> Result<f64> {
        if self.identity {
            self.check_phi_domain(x)?;
            return Ok(1.0);
        }
        let y = self.phi(x)?;
        Ok(self.h_jet(y)?[1])
    }

    /// `theta(x) = 1 / (c + vartheta(phi(x))) - gamma`.
    pub fn theta(&self, x: f64) -> Result<f64> {
        if self.psi == Psi::Zero {
            self.check_phi_domain(x)?;
            return Ok(0.0);
        }
        let y = self.phi(x)?;
        let v = self.vartheta(y)?;
        Ok(1.0 / (self.c + v) - self.gamma)
    }

    /// `sigma(x) = -theta(x)` when `c = 1` and `h` is not the identity;
    /// otherwise `1`.
    pub fn sigma(&self, x: f64) -> Result<f64> {
        if self.c == 1.0 && !self.identity {
            Ok(-self.theta(x)?)
        } else {
            self.check_phi_domain(x)?;
            Ok(1.0)
        }
    }

    pub fn evaluate(&self, q: Quantity, x: f64) -> Result<f64> {
        match q {
            Quantity::H => self.h(x),
            Quantity::HDeriv(n) => self.h_deriv(n, x),
            Quantity::Phi => self.phi(x),
            Quantity::PhiDeriv(n) => self.phi_deriv(n, x),
            Quantity::EllH => self.ell_h(x),
            Quantity::Vartheta => self.vartheta(x),
            Quantity::Theta => self.theta(x),
            Quantity::Sigma => self.sigma(x),
        }
    }

    fn psi0_dd(&self, u: Dd) -> Dd {
        match self.psi {
            Psi::Zero => Dd::ZERO,
            Psi::LogU(a) => u.ln().mul_f64(a),
            Psi::PowU(a, b) => u.powf(Dd::from_f64(b)).mul_f64(a),
            Psi::IterLog(m) => {
                let mut v = u;
                for _ in 0..m {
                    v = v.ln();
                }
                v
            }
        }
    }

    /// `h(n)` in double-double arithmetic.
    pub fn h_dd(&self, n: u64) -> Dd {
        let x = Dd::from_u64(n);
        if self.identity {
            return x;
        }
        let u = x.ln();
        (u.mul_f64(self.c) + self.psi0_dd(u)).exp().mul_f64(self.c_h)
    }

    /// `phi(x)` in double-double arithmetic, seeded by the binary64 value.
    pub fn phi_dd(&self, x: u64) -> Result<Dd> {
        let xd = Dd::from_u64(x);
        if self.identity {
            return Ok(xd);
        }
        let t = xd.div_f64(self.c_h).ln();
        if self.psi == Psi::Zero {
            return Ok((t * self.gamma_dd).exp());
        }
        let mut u = Dd::from_f64(self.phi(x as f64)?.ln());
        for _ in 0..3 {
            let s = self.psi_jet(u.hi).ok_or_else(|| self.domain_err(x as f64, "phi"))?;
            let g = u.mul_f64(self.c) + self.psi0_dd(u) - t;
            u = u - g.div_f64(self.c + s[1]);
        }
        Ok(u.exp())
    }

    /// `floor(h(n))`, falling back to double-double arithmetic when the
    /// binary64 value is too close to an integer to be trusted.
    pub fn floor_h(&self, n: u64) -> Result<i64> {
        if self.identity {
            return Ok(n as i64);
        }
        let v = self.h(n as f64)?;
        if n == 1 && self.psi == Psi::Zero {
            // 1^c = 1 exactly, so h(1) = C_h with no rounding.
            return Ok(v.floor() as i64);
        }
        guarded_floor(v, || Ok(self.h_dd(n)))
    }

    /// `floor(phi(x))` for an integer argument, with the same safeguard.
    pub fn floor_phi(&self, x: u64) -> Result<i64> {
        if self.identity {
            return Ok(x as i64);
        }
        let v = self.phi(x as f64)?;
        if self.psi == Psi::Zero && x as f64 == self.c_h {
            return Ok(1);
        }
        guarded_floor(v, || self.phi_dd(x))
    }

    /// `ceil(phi(x))` for an integer argument.
    pub fn ceil_phi(&self, x: u64) -> Result<i64> {
        if self.identity {
            return Ok(x as i64);
        }
        let v = self.phi(x as f64)?;
        if self.psi == Psi::Zero && x as f64 == self.c_h {
            return Ok(1);
        }
        Ok(-guarded_floor(-v, || Ok(-self.phi_dd(x)?))?)
    }

    fn grid_ok(&self, x: f64, prev_vartheta: &mut Option<f64>) -> bool {
        let j = match self.h_jet(x) {
            Ok(j) => j,
            Err(_) => return false,
        };
        if !j.iter().all(|v| v.is_finite()) || j[0] < 1.0 || !(j[1] > 0.0) {
            return false;
        }
        if self.identity {
            return true;
        }
        if !(j[2] > 0.0) {
            return false;
        }
        if self.c == 1.0 {
            let v = match self.psi_jet(x.ln()) {
                Some(s) => s[1],
                None => return false,
            };
            let ok = v > 0.0 && prev_vartheta.is_none_or(|p| v <= p);
            *prev_vartheta = Some(v);
            return ok;
        }
        true
    }

    fn grid_from(lo: f64) -> impl Iterator<Item = f64> {
        let top = X0_GRID_TOP.max(lo * 1e3);
        let ratio = (top / lo).ln() / (X0_GRID_POINTS - 1) as f64;
        (0..X0_GRID_POINTS).map(move |i| if i == 0 { lo } else { lo * (ratio * i as f64).exp() })
    }

    fn select_x0(&self) -> Result<f64> {
        let floor = self.domain_floor();
        let lo = if floor == 0.0 { 1.0 } else { floor * (1.0 + 1e-6) };
        if lo > X0_MAX {
            return Err(Error::MonotonicityUnattainable(format!(
                "{} is only defined for x > {floor:e}",
                self.family
            )));
        }
        let grid: Vec<f64> = Self::grid_from(lo).collect();
        let mut prev = None;
        let mut last_fail: Option<usize> = None;
        for (i, &x) in grid.iter().enumerate() {
            if !self.grid_ok(x, &mut prev) {
                last_fail = Some(i);
            }
        }
        let idx = match last_fail {
            None => 0,
            Some(i) if i + 1 < grid.len() => i + 1,
            Some(_) => {
                return Err(Error::MonotonicityUnattainable(format!(
                    "{}: conditions fail up to the end of the grid",
                    self.family
                )))
            }
        };
        let x0 = grid[idx];
        if x0 > X0_MAX {
            return Err(Error::MonotonicityUnattainable(format!(
                "{}: conditions fail up to x = {:e} > 1e6",
                self.family,
                grid[idx - 1]
            )));
        }
        Ok(x0)
    }

    fn verify_from(&self, x0: f64) -> Result<()> {
        let mut prev = None;
        for x in Self::grid_from(x0) {
            if !self.grid_ok(x, &mut prev) {
                return Err(Error::MonotonicityUnattainable(format!(
                    "{}: supplied x0 = {x0} fails at x = {x:e}",
                    self.family
                )));
            }
        }
        Ok(())
    }

    /// Flat `key=value` description, one pair per line.
    pub fn to_kv(&self) -> String {
        let mut out = format!("family={}\n", self.family);
        let p = &self.params;
        match self.family {
            Family::Power | Family::H1 | Family::H2 => match p.gamma {
                Some(g) => out += &format!("gamma={g}\n"),
                None => out += &format!("c={}\n", self.c),
            },
            _ => {}
        }
        if let Some(a) = p.a {
            out += &format!("A={a}\n");
        }
        if let Some(b) = p.b {
            out += &format!("B={b}\n");
        }
        if let Some(cc) = p.cc {
            out += &format!("C={cc}\n");
        }
        if let Some(m) = p.m {
            out += &format!("m={m}\n");
        }
        out += &format!("C_h={}\n", self.c_h);
        if self.x0_auto {
            out += "x0=auto\n";
        } else {
            out += &format!("x0={}\n", self.x0);
        }
        out
    }

    /// Inverse of [`ThinFunction::to_kv`]. Blank lines and `#` comments
    /// are skipped.
    pub fn from_kv(text: &str) -> Result<ThinFunction> {
        let mut family = None;
        let mut p = FamilyParams::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = || -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("{k}: '{v}' is not a number")))
            };
            match k {
                "family" => family = Some(Family::parse(v)?),
                "gamma" => p.gamma = Some(num()?),
                "c" => p.c = Some(num()?),
                "A" => p.a = Some(num()?),
                "B" => p.b = Some(num()?),
                "C" => p.cc = Some(num()?),
                "m" => {
                    p.m = Some(
                        v.parse()
                            .map_err(|_| Error::InvalidArgument(format!("m: '{v}' is not a positive integer")))?,
                    )
                }
                "C_h" => p.c_h = Some(num()?),
                "x0" => p.x0 = if v == "auto" { None } else { Some(num()?) },
                other => return Err(Error::InvalidArgument(format!("unknown key '{other}'"))),
            }
        }
        let family = family.ok_or_else(|| Error::InvalidArgument("missing family".into()))?;
        make_thin_function(family, p)
    }
}

/// Absolute distance below which a binary64 floor is re-checked.
pub fn floor_guard(v: f64) -> f64 {
    1e-9f64.max(64.0 * f64::EPSILON * v.abs())
}

/// Floor of `v`, re-evaluated through `refine` when `v` is near an integer.
pub fn guarded_floor(v: f64, refine: impl FnOnce() -> Result<Dd>) -> Result<i64> {
    let fl = v.floor();
    let dist = (v - fl).min(fl + 1.0 - v);
    if dist > floor_guard(v) {
        return Ok(fl as i64);
    }
    let d = refine()?;
    let tol = 1e-25f64.max(1e-30 * v.abs());
    if d.dist_to_int() < tol {
        return Err(Error::PrecisionExhausted(format!(
            "value {v} lies within {tol:e} of an integer"
        )));
    }
    Ok(d.floor().to_f64() as i64)
}

/// One row of [`derivative_ratio_report`].
#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub x: f64,
    pub h_ratio: f64,
    pub h_limit: f64,
    pub phi_ratio: Option<f64>,
    pub phi_limit: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioReport {
    pub n: u8,
    pub normalised_by_vartheta: bool,
    pub rows: Vec<RatioRow>,
    pub h_ratio_min: f64,
    pub h_ratio_max: f64,
}

/// Compares `x^n h^{(n)}(x) / h(x)` (divided additionally by `vartheta`
/// when `c = 1` and `n >= 2`) with its limiting value, and likewise for
/// `phi` when `n <= 3`.
pub fn derivative_ratio_report(tf: &ThinFunction, n: u8, grid: &[f64]) -> Result<RatioReport> {
    if n == 0 || n > 4 {
        return Err(Error::InvalidArgument(format!("order {n} not in 1..=4")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    let unit = tf.c == 1.0;
    let by_vartheta = unit && n >= 2;
    let h_limit = if by_vartheta {
        let f: f64 = (1..=(n as u32 - 2)).map(|k| k as f64).product();
        if n.is_multiple_of(2) {
            f
        } else {
            -f
        }
    } else {
        falling(tf.c, n)
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &x in grid {
        let h = tf.h(x)?;
        let hn = tf.h_deriv(n, x)?;
        let mut ratio = x.powi(n as i32) * hn / h;
        if by_vartheta {
            ratio /= tf.vartheta(x)?;
        }
        let (phi_ratio, phi_limit) = if n <= 3 && x >= tf.h_x0() {
            let p = tf.phi(x)?;
            let pn = tf.phi_deriv(n, x)?;
            (Some(x.powi(n as i32) * pn / p), Some(falling(tf.gamma, n)))
        } else {
            (None, None)
        };
        rows.push(RatioRow {
            x,
            h_ratio: ratio,
            h_limit,
            phi_ratio,
            phi_limit,
        });
    }
    let h_ratio_min = rows.iter().map(|r| r.h_ratio).fold(f64::INFINITY, f64::min);
    let h_ratio_max = rows.iter().map(|r| r.h_ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(RatioReport {
        n,
        normalised_by_vartheta: by_vartheta,
        rows,
        h_ratio_min,
        h_ratio_max,
    })
}

/// Largest admissible `chi` for a degree-`q` polynomial and exponent `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibleParams {
    pub q: u32,
    pub gamma: f64,
    pub chi_max: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub c_q: Ratio<u64>,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

impl AdmissibleParams {
    /// `c_q` as a binary64 value.
    pub fn c_q_f64(&self) -> f64 {
        *self.c_q.numer() as f64 / *self.c_q.denom() as f64
    }
}

/// `chi_max = (1 - (2^{2q+2} + 2^q - 2)(1 - gamma)) / (2^q (2^{q+3} - 2))`,
/// clamped at zero, and `c_q = (2^{2q+2}+2^q-2) / (2^{2q+2}+2^q-3)`.
pub fn admissible_params(q: u32, gamma: f64) -> Result<AdmissibleParams> {
    if q == 0 || q > 14 {
        return Err(Error::ParameterOutOfRange(format!("q = {q} not in 1..=14")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("gamma = {gamma} not in (0, 1]")));
    }
    let a = (1u64 << (2 * q + 2)) + (1u64 << q) - 2;
    let denom = (1u64 << q) * ((1u64 << (q + 3)) - 2);
    let chi = (1.0 - a as f64 * (1.0 - gamma)) / denom as f64;
    Ok(AdmissibleParams {
        q,
        gamma,
        chi_max: chi.max(0.0),
        c_q: Ratio::new(a, a - 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(g: f64) -> ThinFunction {
        make_thin_function(Family::Power, FamilyParams::power(g)).unwrap()
    }

    fn h3(cc: f64) -> ThinFunction {
        make_thin_function(
            Family::H3,
            FamilyParams {
                cc: Some(cc),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_power_family() {
        let tf = power(1.0);
        assert!(tf.is_identity());
        assert_eq!(tf.c(), 1.0);
        assert_eq!(tf.x0(), 1.0);
        assert_eq!(tf.h(12345.0).unwrap(), 12345.0);
        assert_eq!(tf.theta(100.0).unwrap(), 0.0);
    }

    #[test]
    fn power_exponent_is_reciprocal_of_gamma() {
        let tf = power(0.9);
        assert!((tf.c() - 10.0 / 9.0).abs() < 1e-15);
        let phi = tf.phi(1024.0).unwrap();
        assert!((phi - 1024f64.powf(0.9)).abs() <= 1e-13 * phi);
    }

    #[test]
    fn h1_negative_log_power_is_not_convex_below_1e6() {
        // x^1.05 log^-2 x is concave while 2.93 < log x < 39 (roots of
        // 1.5 a^2 - 1.1 a + 0.0525 with a = 2 / log x), so no x0 <= 1e6.
        let r = make_thin_function(
            Family::H1,
            FamilyParams {
                c: Some(1.05),
                a: Some(-2.0),
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::MonotonicityUnattainable(_))), "{r:?}");
        let a = |u: f64| 2.0 / u;
        let q = |u: f64| 1.5 * a(u).powi(2) - 1.1 * a(u) + 0.0525;
        assert!(q(10.0) < 0.0 && q(38.0) < 0.0 && q(40.0) > 0.0);
    }

    #[test]
    fn h1_with_positive_log_power_gets_auto_x0() {
        let tf = make_thin_function(
            Family::H1,
            FamilyParams {
                c: Some(1.05),
                a: Some(2.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(tf.x0_auto());
        assert!(tf.x0() > 1.0 && tf.x0() <= X0_MAX);
        assert!(tf.h(tf.x0()).unwrap() >= 1.0);
    }

    #[test]
    fn h5_depth_four_has_no_domain_below_1e6() {
        let r = make_thin_function(
            Family::H5,
            FamilyParams {
                m: Some(4),
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::MonotonicityUnattainable(_))));
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        let bad = [
            (Family::Power, FamilyParams::power(0.4)),
            (
                Family::Power,
                FamilyParams {
                    c: Some(2.0),
                    ..Default::default()
                },
            ),
            (
                Family::H2,
                FamilyParams {
                    c: Some(1.2),
                    a: Some(1.0),
                    b: Some(1.0),
                    ..Default::default()
                },
            ),
            (
                Family::H3,
                FamilyParams {
                    cc: Some(0.0),
                    ..Default::default()
                },
            ),
            (
                Family::H5,
                FamilyParams {
                    m: Some(0),
                    ..Default::default()
                },
            ),
            (
                Family::H3,
                FamilyParams {
                    cc: Some(1.0),
                    c: Some(1.2),
                    ..Default::default()
                },
            ),
        ];
        for (f, p) in bad {
            assert!(
                matches!(make_thin_function(f, p.clone()), Err(Error::ParameterOutOfRange(_))),
                "{f} {p:?}"
            );
        }
    }

    #[test]
    fn h3_inverse_residual() {
        let tf = h3(1.0);
        let y = tf.phi(100.0).unwrap();
        assert!(((y * y.ln()) - 100.0).abs() / 100.0 < 1e-12);
        assert!((tf.h(y).unwrap() - 100.0).abs() / 100.0 < 1e-12);
    }

    #[test]
    fn h3_closed_form_derivatives() {
        // h = x log x: h' = log x + 1, h'' = 1/x, h''' = -1/x^2, h'''' = 2/x^3.
        let tf = h3(1.0);
        let x: f64 = 12345.678;
        let u = x.ln();
        let expect = [x * u, u + 1.0, 1.0 / x, -1.0 / (x * x), 2.0 / x.powi(3)];
        for (n, e) in expect.iter().enumerate() {
            let got = tf.h_deriv(n as u8, x).unwrap();
            assert!((got - e).abs() <= 1e-13 * e.abs(), "n = {n}: {got} vs {e}");
        }
        assert!((tf.vartheta(x).unwrap() - 1.0 / u).abs() < 1e-15);
    }

    #[test]
    fn h2_closed_form_first_derivative() {
        let (c, a, b) = (1.1, 0.5, 0.5);
        let tf = make_thin_function(
            Family::H2,
            FamilyParams {
                c: Some(c),
                a: Some(a),
                b: Some(b),
                ..Default::default()
            },
        )
        .unwrap();
        let x: f64 = 5.0e4;
        let u = x.ln();
        let h = x.powf(c) * (a * u.powf(b)).exp();
        let h1 = h / x * (c + a * b * u.powf(b - 1.0));
        assert!((tf.h(x).unwrap() - h).abs() <= 1e-14 * h);
        assert!((tf.h_deriv(1, x).unwrap() - h1).abs() <= 1e-13 * h1);
    }

    #[test]
    fn h5_second_level_matches_closed_form() {
        // h = x log log x: h' = log log x + 1/log x, h'' = 1/(x log x) - 1/(x log^2 x).
        let tf = make_thin_function(
            Family::H5,
            FamilyParams {
                m: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let x: f64 = 1.0e7;
        let u = x.ln();
        let h1 = u.ln() + 1.0 / u;
        let h2 = 1.0 / (x * u) - 1.0 / (x * u * u);
        assert!((tf.h_deriv(1, x).unwrap() - h1).abs() <= 1e-13 * h1);
        assert!((tf.h_deriv(2, x).unwrap() - h2).abs() <= 1e-12 * h2);
    }

    #[test]
    fn power_ratio_is_constant() {
        let tf = power(0.8);
        let r = derivative_ratio_report(&tf, 2, &[1e6]).unwrap();
        assert!((r.rows[0].h_ratio - 0.3125).abs() < 1e-12);
        assert_eq!(r.rows[0].h_limit, 1.25 * 0.25);
    }

    #[test]
    fn h1_first_ratio_matches_closed_form() {
        // x h'/h = c + A / log x exactly; at 1e8 that is 1.2543, not 1.2.
        let tf = make_thin_function(
            Family::H1,
            FamilyParams {
                c: Some(1.2),
                a: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        let x = 1e8;
        let r = derivative_ratio_report(&tf, 1, &[x]).unwrap();
        let oracle = 1.2 + 1.0 / x.ln();
        assert!((r.rows[0].h_ratio - oracle).abs() < 1e-12);
        assert_eq!(r.rows[0].h_limit, 1.2);
    }

    #[test]
    fn h3_second_ratio_near_one() {
        let tf = h3(1.0);
        let x = 1e8;
        let r = derivative_ratio_report(&tf, 2, &[x]).unwrap();
        // x^2 h'' / (vartheta h) = x / ((1/log x) x log x) = 1.
        assert!((r.rows[0].h_ratio - 1.0).abs() < 1e-2);
        assert!(r.normalised_by_vartheta);
    }

    #[test]
    fn admissible_examples() {
        let a = admissible_params(1, 1.0).unwrap();
        assert!((a.chi_max - 1.0 / 28.0).abs() < 1e-15);
        assert_eq!(a.c_q, Ratio::new(16, 15));
        assert_eq!(admissible_params(1, 15.0 / 16.0).unwrap().chi_max, 0.0);
        let b = admissible_params(2, 1.0).unwrap();
        assert!((b.chi_max - 1.0 / 120.0).abs() < 1e-15);
        assert_eq!(b.c_q, Ratio::new(66, 65));
    }

    #[test]
    fn chi_positive_iff_gamma_above_reciprocal_cq() {
        for q in 1..=4 {
            let a0 = admissible_params(q, 1.0).unwrap();
            let g0 = 1.0 / a0.c_q_f64();
            assert!(admissible_params(q, g0 + 1e-9).unwrap().chi_max > 0.0);
            assert_eq!(admissible_params(q, g0 - 1e-9).unwrap().chi_max, 0.0);
        }
    }

    #[test]
    fn kv_roundtrip() {
        let tf = make_thin_function(
            Family::H2,
            FamilyParams {
                gamma: Some(0.9),
                a: Some(0.5),
                b: Some(0.5),
                ..Default::default()
            },
        )
        .unwrap();
        let back = ThinFunction::from_kv(&tf.to_kv()).unwrap();
        assert_eq!(back.family(), Family::H2);
        assert_eq!(back.c(), tf.c());
        assert_eq!(back.x0(), tf.x0());
        assert!(ThinFunction::from_kv("family=power\nbogus=1\n").is_err());
    }

    #[test]
    fn phi_derivatives_match_power_closed_form() {
        let tf = power(0.85);
        let g: f64 = 0.85;
        let x: f64 = 3.0e5;
        let closed = [
            x.powf(g),
            g * x.powf(g - 1.0),
            g * (g - 1.0) * x.powf(g - 2.0),
            g * (g - 1.0) * (g - 2.0) * x.powf(g - 3.0),
        ];
        for (n, e) in closed.iter().enumerate() {
            let v = tf.phi_deriv(n as u8, x).unwrap();
            assert!((v - e).abs() <= 1e-12 * e.abs(), "n = {n}");
        }
    }

    #[test]
    fn dd_evaluation_agrees_with_binary64() {
        let tf = h3(1.5);
        for n in [100u64, 4567, 1_000_003] {
            let a = tf.h(n as f64).unwrap();
            let b = tf.h_dd(n).to_f64();
            assert!((a - b).abs() <= 1e-14 * a);
            let p = tf.phi(n as f64).unwrap();
            let q = tf.phi_dd(n).unwrap().to_f64();
            assert!((p - q).abs() <= 1e-14 * p);
        }
    }

    #[test]
    fn guarded_floor_escalates() {
        // 1e-12 below an integer: binary64 floor is ambiguous, refine decides.
        let v = 7.0 - 1e-12;
        let r = guarded_floor(v, || Ok(Dd::new(7.0, -1e-12))).unwrap();
        assert_eq!(r, 6);
        let e = guarded_floor(7.0, || Ok(Dd::from_f64(7.0)));
        assert!(matches!(e, Err(Error::PrecisionExhausted(_))));
        assert_eq!(guarded_floor(7.25, || unreachable!()).unwrap(), 7);
    }

    #[test]
    fn domain_errors() {
        let tf = h3(1.0);
        assert!(matches!(tf.h(tf.x0() * 0.5), Err(Error::DomainError(_))));
        assert!(matches!(tf.phi(0.5), Err(Error::DomainError(_))));
    }

    #[test]
    fn cache_does_not_change_results() {
        let a = h3(2.0);
        let b = h3(2.0).with_phi_cache(false);
        for x in [50.0, 777.0, 1e6, 777.0] {
            assert_eq!(a.phi(x).unwrap(), b.phi(x).unwrap());
        }
    }
}
