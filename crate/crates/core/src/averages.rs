//! Averaging kernels along `W(p)`, their convolutions with finitely
//! supported signals, and dyadic maximal functions.
//!
//! Every maximal function here is computed exactly on the finite window
//! where some dyadic convolution can be nonzero. Partial sums are built
//! incrementally in ascending `p`, so each dyadic layer costs only the
//! primes it adds.

use crate::error::{Error, Result};
use crate::numeric::{dyadic_upto, frac_mul_int, unit, ComplexNeumaier, Neumaier};
use crate::poly::IntPolynomial;
use crate::sieve::{PrimeTable, ThinPrimeSet};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

/// A finitely supported function `Z -> C` with no stored zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseSignal {
    support: BTreeMap<i64, Complex64>,
}

impl SparseSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delta(x: i64) -> Self {
        Self::from_real([(x, 1.0)])
    }

    /// Sums values at repeated indices and drops zeros.
    pub fn from_pairs<I: IntoIterator<Item = (i64, Complex64)>>(pairs: I) -> Self {
        let mut support = BTreeMap::new();
        for (x, v) in pairs {
            *support.entry(x).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
        support.retain(|_, v| *v != Complex64::new(0.0, 0.0));
        SparseSignal { support }
    }

    pub fn from_real<I: IntoIterator<Item = (i64, f64)>>(pairs: I) -> Self {
        Self::from_pairs(pairs.into_iter().map(|(x, v)| (x, Complex64::new(v, 0.0))))
    }

    pub fn get(&self, x: i64) -> Complex64 {
        self.support.get(&x).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.support.iter().map(|(&x, &v)| (x, v))
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        self.support.keys().copied()
    }

    pub fn plus(&self, other: &SparseSignal) -> SparseSignal {
        Self::from_pairs(self.iter().chain(other.iter()))
    }

    pub fn scaled(&self, c: Complex64) -> SparseSignal {
        Self::from_pairs(self.iter().map(|(x, v)| (x, v * c)))
    }

    pub fn shifted(&self, d: i64) -> SparseSignal {
        SparseSignal {
            support: self.iter().map(|(x, v)| (x + d, v)).collect(),
        }
    }

    /// Every value is real and nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        self.support.values().all(|v| v.im == 0.0 && v.re >= 0.0)
    }

    /// `index,re,im` rows after a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,re,im")?;
        for (x, v) in self.iter() {
            writeln!(out, "{x},{:.17e},{:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    /// Reads the format written by [`Self::write_csv`]; blank lines and
    /// lines starting with `#` are skipped, and the header is optional.
    pub fn read_csv<R: BufRead>(input: R) -> Result<SparseSignal> {
        let mut pairs = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
                continue;
            }
            let bad = || Error::InvalidArgument(format!("signal line {}: '{line}'", lineno + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(bad());
            }
            let x: i64 = fields[0].parse().map_err(|_| bad())?;
            let re: f64 = fields[1].parse().map_err(|_| bad())?;
            let im: f64 = match fields.get(2) {
                Some(s) => s.parse().map_err(|_| bad())?,
                None => 0.0,
            };
            if !re.is_finite() || !im.is_finite() {
                return Err(bad());
            }
            pairs.push((x, Complex64::new(re, im)));
        }
        Ok(Self::from_pairs(pairs))
    }
}

/// `(sum |f(x)|^r)^{1/r}`; `r = f64::INFINITY` gives the sup norm.
pub fn lr_norm(f: &SparseSignal, r: f64) -> Result<f64> {
    if r.is_nan() || r < 1.0 {
        return Err(Error::InvalidArgument(format!("r = {r} < 1")));
    }
    if r.is_infinite() {
        return Ok(f.support.values().map(|v| v.norm()).fold(0.0, f64::max));
    }
    let mut acc = Neumaier::new();
    for v in f.support.values() {
        acc.add(v.norm().powf(r));
    }
    Ok(acc.value().powf(1.0 / r))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum KernelVariant {
    /// `pi_h(N)^{-1} sum_{p in P_{h,N}} delta_{W(p)}`.
    Kh,
    /// `N^{-1} sum_{p in P_{h,N}} phi'(p)^{-1} log p delta_{W(p)}`.
    K1,
    /// `N^{-1} sum_{p <= N} log p delta_{W(p)}`.
    K2,
}

impl KernelVariant {
    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::Kh => "kh",
            KernelVariant::K1 => "k1",
            KernelVariant::K2 => "k2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kh" | "h" => Ok(KernelVariant::Kh),
            "k1" | "1" => Ok(KernelVariant::K1),
            "k2" | "2" => Ok(KernelVariant::K2),
            _ => Err(Error::InvalidArgument(format!("unknown kernel '{s}'"))),
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Kernel {
    pub variant: KernelVariant,
    pub n: u64,
    pub atoms: BTreeMap<i64, f64>,
    pub mass: f64,
}

impl Kernel {
    pub fn weight_at(&self, x: i64) -> f64 {
        self.atoms.get(&x).copied().unwrap_or(0.0)
    }

    pub fn as_signal(&self) -> SparseSignal {
        SparseSignal::from_real(self.atoms.iter().map(|(&x, &w)| (x, w)))
    }

    /// `sum_x K(x) e(xi x)`.
    pub fn fourier(&self, xi: f64) -> Complex64 {
        let mut acc = ComplexNeumaier::new();
        for (&x, &w) in &self.atoms {
            acc.add(unit(frac_mul_int(xi, x as i128)) * w);
        }
        acc.value()
    }
}

/// One point mass before normalisation: weight `weight` at `atom = W(k)`.
#[derive(Clone, Copy, Debug)]
struct Term {
    k: u64,
    atom: i64,
    weight: f64,
}

fn atom(w: &IntPolynomial, k: u64) -> Result<i64> {
    i64::try_from(w.eval_unchecked(k as i64)).map_err(|_| Error::Overflow(format!("W({k}) exceeds 64 bits")))
}

fn kernel_terms(
    variant: KernelVariant,
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    n: u64,
) -> Result<Vec<Term>> {
    w.check_range(n)?;
    match variant {
        KernelVariant::Kh | KernelVariant::K1 => {
            tps.check_limit(n)?;
            let m = tps.count_upto(n);
            let ps = &tps.primes()[..m];
            let ws = &tps.weights()[..m];
            ps.iter()
                .zip(ws)
                .map(|(&p, &wt)| {
                    Ok(Term {
                        k: p,
                        atom: atom(w, p)?,
                        weight: if variant == KernelVariant::Kh { 1.0 } else { wt },
                    })
                })
                .collect()
        }
        KernelVariant::K2 => {
            pt.check_range(n)?;
            pt.primes_upto(n)
                .iter()
                .map(|&p| {
                    Ok(Term {
                        k: p,
                        atom: atom(w, p)?,
                        weight: (p as f64).ln(),
                    })
                })
                .collect()
        }
    }
}

/// Normaliser of the variant at `N`, given the number of terms `<= N`.
fn normaliser(variant: KernelVariant, n: u64, count: usize) -> f64 {
    match variant {
        KernelVariant::Kh => count as f64,
        KernelVariant::K1 | KernelVariant::K2 => n as f64,
    }
}

pub fn build_kernel(
    variant: KernelVariant,
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    n: u64,
) -> Result<Kernel> {
    let terms = kernel_terms(variant, tps, pt, w, n)?;
    if terms.is_empty() {
        return Err(Error::EmptySet(format!("no primes for kernel {variant} at N = {n}")));
    }
    let norm = normaliser(variant, n, terms.len());
    let mut raw: BTreeMap<i64, Neumaier> = BTreeMap::new();
    for t in &terms {
        raw.entry(t.atom).or_default().add(t.weight);
    }
    let atoms: BTreeMap<i64, f64> = raw.into_iter().map(|(x, s)| (x, s.value() / norm)).collect();
    let mut mass = Neumaier::new();
    for &v in atoms.values() {
        mass.add(v);
    }
    Ok(Kernel {
        variant,
        n,
        atoms,
        mass: mass.value(),
    })
}

/// `(K * f)(x) = sum_a K(a) f(x - a)`, exactly on the finite support.
pub fn convolve(kernel: &Kernel, f: &SparseSignal) -> SparseSignal {
    let mut acc: BTreeMap<i64, ComplexNeumaier> = BTreeMap::new();
    for (&a, &wt) in &kernel.atoms {
        for (y, v) in f.iter() {
            acc.entry(y + a).or_default().add(v * wt);
        }
    }
    SparseSignal::from_pairs(acc.into_iter().map(|(x, s)| (x, s.value())))
}

const DENSE_WINDOW: i128 = 1 << 24;
const WINDOW_CHUNK: i64 = 1 << 15;

/// `sup_{layers} |sum_{k <= N} weight_k f(x - atom_k)| / norm(N)` over the
/// whole window where the sums can be nonzero. `layers` holds `(N, norm)`
/// in ascending `N`, with positive norms; `terms` is sorted by `k`.
fn layered_maximal(f: &SparseSignal, terms: &[Term], layers: &[(u64, f64)]) -> SparseSignal {
    let Some(&(n_last, _)) = layers.last() else {
        return SparseSignal::new();
    };
    let used = &terms[..terms.partition_point(|t| t.k <= n_last)];
    let fv: Vec<(i64, Complex64)> = f.iter().collect();
    if fv.is_empty() || used.is_empty() {
        return SparseSignal::new();
    }
    let amin = used.iter().map(|t| t.atom).min().unwrap();
    let amax = used.iter().map(|t| t.atom).max().unwrap();
    let lo = fv[0].0 + amin;
    let hi = fv[fv.len() - 1].0 + amax;
    let values: Vec<(i64, f64)> = if (hi as i128 - lo as i128 + 1) <= DENSE_WINDOW {
        let chunks = ((hi - lo) / WINDOW_CHUNK + 1) as usize;
        let parts: Vec<Vec<(i64, f64)>> = (0..chunks)
            .into_par_iter()
            .map(|c| dense_chunk(&fv, used, layers, lo + c as i64 * WINDOW_CHUNK, hi))
            .collect();
        parts.into_iter().flatten().collect()
    } else {
        sparse_layers(&fv, used, layers)
    };
    SparseSignal::from_real(values)
}

fn dense_chunk(fv: &[(i64, Complex64)], terms: &[Term], layers: &[(u64, f64)], clo: i64, hi: i64) -> Vec<(i64, f64)> {
    let chi = (clo + WINDOW_CHUNK - 1).min(hi);
    let len = (chi - clo + 1) as usize;
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut best = vec![0.0f64; len];
    let mut t = 0;
    for &(n, norm) in layers {
        while t < terms.len() && terms[t].k <= n {
            let Term { atom, weight, .. } = terms[t];
            let start = fv.partition_point(|&(y, _)| y + atom < clo);
            for &(y, v) in &fv[start..] {
                let x = y + atom;
                if x > chi {
                    break;
                }
                acc[(x - clo) as usize] += v * weight;
            }
            t += 1;
        }
        for (b, a) in best.iter_mut().zip(&acc) {
            let v = a.norm() / norm;
            if v > *b {
                *b = v;
            }
        }
    }
    best.into_iter()
        .enumerate()
        .filter(|&(_, v)| v > 0.0)
        .map(|(i, v)| (clo + i as i64, v))
        .collect()
}

fn sparse_layers(fv: &[(i64, Complex64)], terms: &[Term], layers: &[(u64, f64)]) -> Vec<(i64, f64)> {
    let mut acc: HashMap<i64, (Complex64, f64)> = HashMap::new();
    let mut t = 0;
    for &(n, norm) in layers {
        while t < terms.len() && terms[t].k <= n {
            let Term { atom, weight, .. } = terms[t];
            for &(y, v) in fv {
                acc.entry(y + atom).or_insert((Complex64::new(0.0, 0.0), 0.0)).0 += v * weight;
            }
            t += 1;
        }
        for (s, b) in acc.values_mut() {
            *b = b.max(s.norm() / norm);
        }
    }
    acc.into_iter()
        .map(|(x, (_, b))| (x, b))
        .filter(|&(_, b)| b > 0.0)
        .collect()
}

/// `M f(x) = sup_{N dyadic, N <= N_max} |K_N * f(x)|` for the chosen kernel.
pub fn maximal_function(
    f: &SparseSignal,
    variant: KernelVariant,
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    n_max: u64,
) -> Result<SparseSignal> {
    if !n_max.is_power_of_two() || n_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "N_max = {n_max} is not a dyadic value >= 2"
        )));
    }
    let terms = kernel_terms(variant, tps, pt, w, n_max)?;
    if terms.is_empty() {
        return Err(Error::EmptySet(format!("no primes for kernel {variant} up to {n_max}")));
    }
    let layers: Vec<(u64, f64)> = dyadic_upto(1, n_max)
        .into_iter()
        .map(|n| (n, terms.partition_point(|t| t.k <= n)))
        .filter(|&(_, count)| count > 0)
        .map(|(n, count)| (n, normaliser(variant, n, count)))
        .collect();
    Ok(layered_maximal(f, &terms, &layers))
}

/// Which monotonicity hypothesis of the comparison holds for `w2 / w1` on `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RatioMonotonicity {
    Decreasing,
    Increasing,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub hypothesis: RatioMonotonicity,
    /// `max_x M2*(f)(x) / M1*(f)(x)` over the support of `M1*(f)`.
    pub ratio_max: f64,
    /// `sup_{n in S} w2(n) W1(n) / (w1(n) W2(n))`.
    pub c_sup: f64,
    /// `1 + 2 C_sup + 1e-9`.
    pub bound: f64,
    pub holds: bool,
}

/// Compares the weighted maximal functions
/// `M_i*(f)(x) = sup_{N in Z} W_i(N)^{-1} |sum_{k in S, k <= N} w_i(k) f(x - Omega(k))|`.
///
/// The monotonicity of `w2 / w1` is checked on the elements of `S`.
pub fn weighted_maximal_compare(
    s: &[u64],
    w1: &dyn Fn(u64) -> f64,
    w2: &dyn Fn(u64) -> f64,
    f: &SparseSignal,
    omega: &IntPolynomial,
    z: &[u64],
) -> Result<ComparisonReport> {
    if s.is_empty() {
        return Err(Error::EmptySet("S is empty".into()));
    }
    if s.windows(2).any(|p| p[0] >= p[1]) || z.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidArgument("S and Z must be strictly increasing".into()));
    }
    if !f.is_nonnegative() {
        return Err(Error::InvalidArgument("f must be real and nonnegative".into()));
    }
    omega.check_range(*s.last().unwrap())?;
    let a: Vec<f64> = s.iter().map(|&k| w1(k)).collect();
    let b: Vec<f64> = s.iter().map(|&k| w2(k)).collect();
    if let Some(i) = a
        .iter()
        .zip(&b)
        .position(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::HypothesisViolated(format!(
            "weights not positive at n = {}",
            s[i]
        )));
    }
    let r: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y / x).collect();
    let slack = 1e-12;
    let hypothesis = if r.windows(2).all(|p| p[1] <= p[0] * (1.0 + slack)) {
        RatioMonotonicity::Decreasing
    } else if r.windows(2).all(|p| p[1] >= p[0] * (1.0 - slack)) {
        RatioMonotonicity::Increasing
    } else {
        return Err(Error::HypothesisViolated(
            "w2 / w1 is neither decreasing nor increasing on S".into(),
        ));
    };
    let (mut sum1, mut sum2) = (Neumaier::new(), Neumaier::new());
    let mut c_sup = 0.0f64;
    let mut prefix1 = Vec::with_capacity(s.len());
    let mut prefix2 = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        sum1.add(a[i]);
        sum2.add(b[i]);
        prefix1.push(sum1.value());
        prefix2.push(sum2.value());
        c_sup = c_sup.max(r[i] * sum1.value() / sum2.value());
    }
    let terms = |wts: &[f64]| -> Result<Vec<Term>> {
        s.iter()
            .zip(wts)
            .map(|(&k, &weight)| {
                Ok(Term {
                    k,
                    atom: atom(omega, k)?,
                    weight,
                })
            })
            .collect()
    };
    let layers = |prefix: &[f64]| -> Vec<(u64, f64)> {
        z.iter()
            .filter_map(|&n| {
                let c = s.partition_point(|&k| k <= n);
                (c > 0).then(|| (n, prefix[c - 1]))
            })
            .collect()
    };
    let m1 = layered_maximal(f, &terms(&a)?, &layers(&prefix1));
    let m2 = layered_maximal(f, &terms(&b)?, &layers(&prefix2));
    let mut ratio_max = 0.0f64;
    for (x, v2) in m2.iter() {
        let v1 = m1.get(x).re;
        ratio_max = ratio_max.max(if v1 > 0.0 { v2.re / v1 } else { f64::INFINITY });
    }
    let bound = 1.0 + 2.0 * c_sup + 1e-9;
    Ok(ComparisonReport {
        hypothesis,
        ratio_max,
        c_sup,
        bound,
        holds: ratio_max <= bound,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AbelReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of `sum_{a<n<=b} u(n) g(n) = U(b) g(b) - int_a^b U(t) g'(t) dt`
/// with `U(t) = sum_{a<n<=t} u(n)`. `U` is a step function, so the integral
/// over each unit segment is `U(n) (g(n+1) - g(n))`, clipped at `b`.
pub fn abel_summation(u: &dyn Fn(u64) -> f64, g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<AbelReport> {
    if !(a >= 0.0 && a < b && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 <= a < b, got a = {a}, b = {b}")));
    }
    let first = a.floor() as u64 + 1;
    let last = b.floor() as u64;
    let mut lhs = Neumaier::new();
    let mut integral = Neumaier::new();
    let mut big_u = Neumaier::new();
    for n in first..=last {
        let un = u(n);
        let gn = g(n as f64);
        lhs.add(un * gn);
        big_u.add(un);
        let end = ((n + 1) as f64).min(b);
        if end > n as f64 {
            integral.add(big_u.value() * (g(end) - gn));
        }
    }
    let lhs = lhs.value();
    let rhs = big_u.value() * g(b) - integral.value();
    Ok(AbelReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `max_j |K1^(xi_j) - K2^(xi_j)|` on `xi_j = j / grid`.
pub fn kernel_gap_norm(tps: &ThinPrimeSet, pt: &PrimeTable, w: &IntPolynomial, n: u64, grid: usize) -> Result<f64> {
    if grid == 0 {
        return Err(Error::InvalidArgument("empty xi grid".into()));
    }
    let k1 = build_kernel(KernelVariant::K1, tps, pt, w, n)?;
    let k2 = build_kernel(KernelVariant::K2, tps, pt, w, n)?;
    let diff: BTreeMap<i64, f64> = {
        let mut d = k1.atoms.clone();
        for (&x, &v) in &k2.atoms {
            *d.entry(x).or_insert(0.0) -= v;
        }
        d
    };
    let diff: Vec<(i64, f64)> = diff.into_iter().filter(|&(_, v)| v != 0.0).collect();
    Ok((0..grid)
        .into_par_iter()
        .map(|j| {
            let xi = j as f64 / grid as f64;
            let mut acc = ComplexNeumaier::new();
            for &(x, v) in &diff {
                acc.add(unit(frac_mul_int(xi, x as i128)) * v);
            }
            acc.value().norm()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::{build_prime_table, enumerate_thin_primes};
    use crate::thinfn::{make_thin_function, Family, FamilyParams, ThinFunction};

    fn power(g: f64) -> ThinFunction {
        make_thin_function(Family::Power, FamilyParams::power(g)).unwrap()
    }

    fn setup(g: f64, n: u64) -> (PrimeTable, ThinPrimeSet) {
        let pt = build_prime_table(n).unwrap();
        let tps = enumerate_thin_primes(&power(g), &pt, n).unwrap();
        (pt, tps)
    }

    #[test]
    fn signal_canonical_form() {
        let s = SparseSignal::from_real([(1, 1.0), (1, -1.0), (2, 3.0), (2, 1.0)]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(2).re, 4.0);
        assert_eq!(s.get(1), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn signal_csv_round_trip() {
        let s = SparseSignal::from_pairs([(-3, Complex64::new(0.1, -2.5)), (7, Complex64::new(1e-300, 0.0))]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(SparseSignal::read_csv(&buf[..]).unwrap(), s);
        assert!(SparseSignal::read_csv("1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn small_norms() {
        for r in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
            assert_eq!(lr_norm(&SparseSignal::delta(0), r).unwrap(), 1.0);
        }
        let two = SparseSignal::from_real([(0, 1.0), (1, 1.0)]);
        assert!((lr_norm(&two, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(lr_norm(&two, 0.5).is_err());
    }

    #[test]
    fn kh_kernel_at_ten() {
        let (pt, tps) = setup(1.0, 100);
        let k = build_kernel(KernelVariant::Kh, &tps, &pt, &IntPolynomial::identity(), 10).unwrap();
        assert_eq!(k.atoms.keys().copied().collect::<Vec<_>>(), vec![2, 3, 5, 7]);
        assert!(k.atoms.values().all(|&v| v == 0.25));
        assert_eq!(k.mass, 1.0);
        let sq = build_kernel(KernelVariant::Kh, &tps, &pt, &IntPolynomial::monomial(2).unwrap(), 10).unwrap();
        assert_eq!(sq.atoms.keys().copied().collect::<Vec<_>>(), vec![4, 9, 25, 49]);
        let shifted = convolve(&k, &SparseSignal::delta(2));
        assert_eq!(shifted.indices().collect::<Vec<_>>(), vec![4, 5, 7, 9]);
        assert_eq!(convolve(&k, &SparseSignal::delta(0)), k.as_signal());
    }

    #[test]
    fn coinciding_atoms_accumulate() {
        let (pt, tps) = setup(1.0, 100);
        // W(3) = W(7) = -21.
        let w = IntPolynomial::new(vec![0, -10, 1]).unwrap();
        let k = build_kernel(KernelVariant::Kh, &tps, &pt, &w, 10).unwrap();
        assert_eq!(k.weight_at(-21), 0.5);
        assert_eq!(k.atoms.len(), 3);
    }

    #[test]
    fn k1_equals_k2_for_all_primes() {
        let (pt, tps) = setup(1.0, 5000);
        let w = IntPolynomial::identity();
        let a = build_kernel(KernelVariant::K1, &tps, &pt, &w, 4096).unwrap();
        let b = build_kernel(KernelVariant::K2, &tps, &pt, &w, 4096).unwrap();
        assert_eq!(a.atoms, b.atoms);
        assert_eq!(kernel_gap_norm(&tps, &pt, &w, 4096, 64).unwrap(), 0.0);
    }

    #[test]
    fn kernel_masses() {
        let (pt, tps) = setup(0.95, 1 << 16);
        let w = IntPolynomial::identity();
        let kh = build_kernel(KernelVariant::Kh, &tps, &pt, &w, 1 << 16).unwrap();
        assert!((kh.mass - 1.0).abs() < 1e-12);
        for v in [KernelVariant::K1, KernelVariant::K2] {
            let k = build_kernel(v, &tps, &pt, &w, 1 << 16).unwrap();
            assert!(k.mass > 0.5 && k.mass < 1.5, "{v}: {}", k.mass);
        }
    }

    #[test]
    fn maximal_of_delta_is_largest_weight() {
        let (pt, tps) = setup(1.0, 64);
        let w = IntPolynomial::identity();
        let m = maximal_function(&SparseSignal::delta(0), KernelVariant::Kh, &tps, &pt, &w, 64).unwrap();
        for x in [2i64, 3, 5, 7, 31, 61] {
            let want = dyadic_upto(1, 64)
                .into_iter()
                .filter(|&n| n >= x as u64)
                .map(|n| 1.0 / pt.pi(n) as f64)
                .fold(0.0, f64::max);
            assert_eq!(m.get(x).re, want, "x = {x}");
        }
        assert_eq!(m.get(4).re, 0.0);
    }

    #[test]
    fn maximal_dominates_last_layer() {
        let (pt, tps) = setup(0.95, 1 << 12);
        let w = IntPolynomial::identity();
        let f = SparseSignal::from_real((0..50).map(|i| (i * 7 % 23, (i % 5) as f64)));
        let m = maximal_function(&f, KernelVariant::Kh, &tps, &pt, &w, 1 << 12).unwrap();
        let k = build_kernel(KernelVariant::Kh, &tps, &pt, &w, 1 << 12).unwrap();
        for (x, v) in convolve(&k, &f).iter() {
            assert!(m.get(x).re >= v.norm() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn sparse_and_dense_windows_agree() {
        let (pt, tps) = setup(0.95, 1 << 10);
        let w = IntPolynomial::identity();
        let terms = kernel_terms(KernelVariant::K1, &tps, &pt, &w, 1 << 10).unwrap();
        let layers: Vec<(u64, f64)> = dyadic_upto(1, 1 << 10).into_iter().map(|n| (n, n as f64)).collect();
        let f = SparseSignal::from_pairs((0..40).map(|i| (3 * i - 20, Complex64::new(i as f64, 1.0))));
        let fv: Vec<(i64, Complex64)> = f.iter().collect();
        let dense = layered_maximal(&f, &terms, &layers);
        let sparse = SparseSignal::from_real(sparse_layers(&fv, &terms, &layers));
        assert_eq!(dense, sparse);
    }

    #[test]
    fn comparison_with_equal_weights() {
        let s: Vec<u64> = vec![2, 3, 5, 7, 11, 13];
        let f = SparseSignal::from_real([(0, 1.0), (4, 2.0)]);
        let r =
            weighted_maximal_compare(&s, &|_| 1.0, &|_| 1.0, &f, &IntPolynomial::identity(), &[2, 4, 8, 16]).unwrap();
        assert_eq!(r.ratio_max, 1.0);
        assert_eq!(r.c_sup, 1.0);
        assert!(r.holds);
    }

    #[test]
    fn comparison_rejects_non_monotone_ratio() {
        let s: Vec<u64> = vec![2, 3, 5, 7];
        let f = SparseSignal::delta(0);
        let w2 = |k: u64| if k == 3 { 5.0 } else { 1.0 };
        let r = weighted_maximal_compare(&s, &|_| 1.0, &w2, &f, &IntPolynomial::identity(), &[2, 4, 8]);
        assert!(matches!(r, Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn abel_examples() {
        let r = abel_summation(&|_| 0.0, &|x| x, 0.0, 10.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let r = abel_summation(&|_| 1.0, &|x| x, 0.0, 10.0).unwrap();
        assert_eq!(r.lhs, 55.0);
        assert!(r.residual <= 1e-10);
        let r = abel_summation(&|_| 1.0, &|x| x * x, 0.5, 7.25).unwrap();
        assert!(r.residual <= 1e-12 * r.lhs);
    }

    #[test]
    fn abel_with_von_mangoldt() {
        let pt = build_prime_table(10_000).unwrap();
        let r = abel_summation(&|n| pt.lambda(n), &|x| 1.0 / x.ln(), 2.0, 10_000.0).unwrap();
        let direct: f64 = (3..=10_000u64).map(|n| pt.lambda(n) / (n as f64).ln()).sum();
        assert!((r.lhs - direct).abs() <= 1e-9 * direct);
        assert!(r.residual <= 1e-8 * r.lhs.abs());
    }
}
