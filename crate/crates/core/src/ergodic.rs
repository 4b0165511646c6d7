//! Ergodic averages along `W(p)` for thin primes `p` in two concrete
//! measure-preserving systems: the cycle `Z_m` with `T x = x + 1` and the
//! circle rotation `T x = x + alpha mod 1`.

use crate::error::{Error, Result};
use crate::numeric::{frac, frac_mul_f64, frac_mul_int, unit, ComplexNeumaier};
use crate::poly::IntPolynomial;
use crate::sieve::{PrimeTable, ThinPrimeSet};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DynamicalSystem {
    FiniteCycle { m: u64 },
    CircleRotation { alpha: f64 },
}

/// An observable: a full table of values on `Z_m`, or a trigonometric
/// polynomial `sum_k c_k e(k x)` on the circle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Observable {
    Table(Vec<Complex64>),
    Trig(Vec<(i64, Complex64)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Point {
    Cycle(u64),
    Circle(f64),
}

impl DynamicalSystem {
    pub fn finite_cycle(m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("cycle length must be at least 1".into()));
        }
        Ok(DynamicalSystem::FiniteCycle { m })
    }

    pub fn circle_rotation(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha = {alpha}")));
        }
        Ok(DynamicalSystem::CircleRotation { alpha: frac(alpha) })
    }

    /// Checks that `f` and `x` live on this system.
    pub fn check(&self, f: &Observable, x: Point) -> Result<()> {
        match (self, f, x) {
            (DynamicalSystem::FiniteCycle { m }, Observable::Table(t), Point::Cycle(x)) => {
                if t.len() as u64 != *m {
                    return Err(Error::InvalidArgument(format!(
                        "table has {} entries, cycle has {m}",
                        t.len()
                    )));
                }
                if x >= *m {
                    return Err(Error::InvalidArgument(format!("point {x} outside Z_{m}")));
                }
                Ok(())
            }
            (DynamicalSystem::CircleRotation { .. }, Observable::Trig(_), Point::Circle(x)) => {
                if !(0.0..1.0).contains(&x) {
                    return Err(Error::InvalidArgument(format!("point {x} outside [0, 1)")));
                }
                Ok(())
            }
            _ => Err(Error::InvalidArgument(
                "observable or point does not match the system".into(),
            )),
        }
    }

    /// `f(T^s x)` with the orbit position reduced exactly.
    pub fn eval_orbit(&self, f: &Observable, x: Point, s: i128) -> Complex64 {
        match (self, f, x) {
            (DynamicalSystem::FiniteCycle { m }, Observable::Table(t), Point::Cycle(x)) => {
                let pos = (x as i128 + s.rem_euclid(*m as i128)) % *m as i128;
                t[pos as usize]
            }
            (DynamicalSystem::CircleRotation { alpha }, Observable::Trig(cs), Point::Circle(x)) => {
                let y = frac(x + frac_mul_int(*alpha, s));
                cs.iter().map(|&(k, c)| c * unit(frac_mul_f64(k as f64, y))).sum()
            }
            _ => panic!("eval_orbit on a mismatched system; call check first"),
        }
    }

    /// `int f dmu`.
    pub fn space_average(&self, f: &Observable) -> Complex64 {
        match f {
            Observable::Table(t) => t.iter().sum::<Complex64>() / t.len() as f64,
            Observable::Trig(cs) => cs.iter().filter(|(k, _)| *k == 0).map(|(_, c)| c).sum(),
        }
    }

    /// The observable `f o T^s`.
    pub fn compose(&self, f: &Observable, s: i128) -> Observable {
        match (self, f) {
            (DynamicalSystem::FiniteCycle { m }, Observable::Table(t)) => {
                let shift = s.rem_euclid(*m as i128) as usize;
                Observable::Table((0..t.len()).map(|i| t[(i + shift) % t.len()]).collect())
            }
            (DynamicalSystem::CircleRotation { alpha }, Observable::Trig(cs)) => {
                let t = frac_mul_int(*alpha, s);
                Observable::Trig(
                    cs.iter()
                        .map(|&(k, c)| (k, c * unit(frac_mul_f64(k as f64, t))))
                        .collect(),
                )
            }
            _ => f.clone(),
        }
    }

    /// Sixteen fixed start points spread over the space.
    pub fn sample_points(&self) -> Vec<Point> {
        match self {
            DynamicalSystem::FiniteCycle { m } => {
                let mut xs: Vec<u64> = (0..16u64).map(|j| j * m / 16).collect();
                xs.dedup();
                xs.into_iter().map(Point::Cycle).collect()
            }
            DynamicalSystem::CircleRotation { .. } => (0..16).map(|j| Point::Circle(j as f64 / 16.0)).collect(),
        }
    }
}

/// Averages at increasing checkpoints.
#[derive(Clone, Debug, Serialize)]
pub struct AverageSeries {
    pub checkpoints: Vec<u64>,
    pub values: Vec<Complex64>,
    pub weighted: bool,
}

impl AverageSeries {
    /// `N,re,im,gap` where `gap` is `|A_N - A_prev|`, empty on the first row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "N,re,im,gap")?;
        for (i, (n, v)) in self.checkpoints.iter().zip(&self.values).enumerate() {
            let gap = if i == 0 {
                String::new()
            } else {
                format!("{:.17e}", (v - self.values[i - 1]).norm())
            };
            writeln!(out, "{n},{:.17e},{:.17e},{gap}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Averages of `f(T^{W(p)} x)` at each checkpoint, in one ascending pass
/// over the thin primes. Unweighted: `pi_h(N)^{-1} sum f(..)`; weighted:
/// `N^{-1} sum phi'(p)^{-1} log p f(..)`.
#[allow(clippy::too_many_arguments)]
pub fn average_series(
    sys: &DynamicalSystem,
    f: &Observable,
    x: Point,
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    checkpoints: &[u64],
    weighted: bool,
) -> Result<AverageSeries> {
    sys.check(f, x)?;
    if checkpoints.is_empty() || checkpoints.windows(2).any(|p| p[0] >= p[1]) || checkpoints[0] == 0 {
        return Err(Error::InvalidArgument(
            "checkpoints must be positive and strictly increasing".into(),
        ));
    }
    let n_max = *checkpoints.last().unwrap();
    pt.check_range(n_max)?;
    tps.check_limit(n_max)?;
    w.check_range(n_max)?;
    let primes = tps.primes();
    let weights = tps.weights();
    let mut acc = ComplexNeumaier::new();
    let mut i = 0;
    let mut values = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        while i < primes.len() && primes[i] <= n {
            let v = sys.eval_orbit(f, x, w.eval_unchecked(primes[i] as i64));
            acc.add(if weighted { v * weights[i] } else { v });
            i += 1;
        }
        let norm = if weighted { n as f64 } else { i as f64 };
        if norm == 0.0 {
            return Err(Error::EmptySet(format!("no thin primes up to {n}")));
        }
        values.push(acc.value() / norm);
    }
    Ok(AverageSeries {
        checkpoints: checkpoints.to_vec(),
        values,
        weighted,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn ergodic_average(
    sys: &DynamicalSystem,
    f: &Observable,
    x: Point,
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    n: u64,
    weighted: bool,
) -> Result<Complex64> {
    Ok(average_series(sys, f, x, tps, pt, w, &[n], weighted)?.values[0])
}

/// The same series from several start points, computed in parallel.
#[allow(clippy::too_many_arguments)]
pub fn sampled_series(
    sys: &DynamicalSystem,
    f: &Observable,
    points: &[Point],
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    checkpoints: &[u64],
    weighted: bool,
) -> Result<Vec<AverageSeries>> {
    points
        .par_iter()
        .map(|&x| average_series(sys, f, x, tps, pt, w, checkpoints, weighted))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub cauchy_gaps: Vec<f64>,
    pub last_gap: f64,
}

/// Gaps `|A_{N_{j+1}} - A_{N_j}|` between consecutive checkpoints.
pub fn convergence_report(series: &AverageSeries) -> Result<ConvergenceReport> {
    if series.values.len() < 4 {
        return Err(Error::TooFewCheckpoints(series.values.len()));
    }
    let cauchy_gaps: Vec<f64> = series.values.windows(2).map(|p| (p[1] - p[0]).norm()).collect();
    Ok(ConvergenceReport {
        last_gap: *cauchy_gaps.last().unwrap(),
        cauchy_gaps,
    })
}

/// `Z_eps = {floor((1 + eps)^n) : n >= 1}` up to `max`, ascending without
/// repeats.
pub fn z_eps(eps: f64, max: u64) -> Result<Vec<u64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    let base = 1.0 + eps;
    let mut out: Vec<u64> = Vec::new();
    for n in 1.. {
        let v = base.powi(n).floor();
        if v > max as f64 {
            break;
        }
        let v = v as u64;
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct OscillationReport {
    /// `sum_j` of the block suprema.
    pub value: f64,
    /// Number of blocks `J`.
    pub j: usize,
    pub per_block: Vec<f64>,
    pub value_over_j: f64,
}

/// `sum_j sup_{N_j < N <= N_{j+1}, N in Z_eps} |A1_N f(x) - A1_{N_j} f(x)|`
/// with the weighted averages `A1`.
#[allow(clippy::too_many_arguments)]
pub fn oscillation_sum(
    sys: &DynamicalSystem,
    f: &Observable,
    x: Point,
    tps: &ThinPrimeSet,
    pt: &PrimeTable,
    w: &IntPolynomial,
    breaks: &[u64],
    eps: f64,
) -> Result<OscillationReport> {
    if breaks.len() < 2 || breaks[0] == 0 || breaks.windows(2).any(|p| 2 * p[0] >= p[1]) {
        return Err(Error::InvalidBreaks(format!(
            "need at least two positive breaks with 2 N_j < N_(j+1), got {breaks:?}"
        )));
    }
    let n_max = *breaks.last().unwrap();
    let grid = z_eps(eps, n_max)?;
    let mut checkpoints: Vec<u64> = grid.iter().copied().filter(|&n| n >= breaks[0]).collect();
    checkpoints.extend_from_slice(breaks);
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let series = average_series(sys, f, x, tps, pt, w, &checkpoints, true)?;
    let at = |n: u64| series.values[checkpoints.binary_search(&n).unwrap()];
    let per_block: Vec<f64> = breaks
        .windows(2)
        .map(|b| {
            let base = at(b[0]);
            let lo = grid.partition_point(|&n| n <= b[0]);
            let hi = grid.partition_point(|&n| n <= b[1]);
            grid[lo..hi].iter().map(|&n| (at(n) - base).norm()).fold(0.0, f64::max)
        })
        .collect();
    let value: f64 = per_block.iter().sum();
    let j = per_block.len();
    Ok(OscillationReport {
        value,
        j,
        value_over_j: value / j as f64,
        per_block,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::{build_prime_table, enumerate_thin_primes};
    use crate::thinfn::{make_thin_function, Family, FamilyParams};

    fn setup(g: f64, n: u64) -> (PrimeTable, ThinPrimeSet) {
        let pt = build_prime_table(n).unwrap();
        let tf = make_thin_function(Family::Power, FamilyParams::power(g)).unwrap();
        let tps = enumerate_thin_primes(&tf, &pt, n).unwrap();
        (pt, tps)
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn one_point_space() {
        let (pt, tps) = setup(0.95, 1 << 12);
        let sys = DynamicalSystem::finite_cycle(1).unwrap();
        let f = Observable::Table(vec![Complex64::new(2.5, -1.0)]);
        for n in [16u64, 100, 4096] {
            let v = ergodic_average(
                &sys,
                &f,
                Point::Cycle(0),
                &tps,
                &pt,
                &IntPolynomial::identity(),
                n,
                false,
            )
            .unwrap();
            assert_eq!(v, Complex64::new(2.5, -1.0));
        }
    }

    #[test]
    fn parity_cycle_hand_count() {
        let (pt, tps) = setup(1.0, 1 << 14);
        let sys = DynamicalSystem::finite_cycle(2).unwrap();
        let f = Observable::Table(vec![c(1.0), c(-1.0)]);
        let cps: Vec<u64> = (4..=14).map(|j| 1u64 << j).collect();
        let s = average_series(
            &sys,
            &f,
            Point::Cycle(0),
            &tps,
            &pt,
            &IntPolynomial::identity(),
            &cps,
            false,
        )
        .unwrap();
        for (n, v) in cps.iter().zip(&s.values) {
            let pi = pt.pi(*n) as f64;
            assert!((v.re - (2.0 - pi) / pi).abs() < 1e-15);
            assert_eq!(v.im, 0.0);
        }
        let r = convergence_report(&s).unwrap();
        assert!(r.cauchy_gaps.iter().all(|&g| g >= 0.0));
        assert!(r.last_gap < r.cauchy_gaps[0]);
    }

    #[test]
    fn too_few_checkpoints() {
        let s = AverageSeries {
            checkpoints: vec![2, 4, 8],
            values: vec![c(1.0); 3],
            weighted: false,
        };
        assert!(matches!(convergence_report(&s), Err(Error::TooFewCheckpoints(3))));
        let s = AverageSeries {
            checkpoints: vec![2, 4, 8, 16],
            values: vec![c(1.0); 4],
            weighted: false,
        };
        assert!(convergence_report(&s).unwrap().cauchy_gaps.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn composition_preserves_space_average() {
        let sys = DynamicalSystem::finite_cycle(7).unwrap();
        let f = Observable::Table((0..7).map(|i| Complex64::new(i as f64, (i * i) as f64)).collect());
        for s in [-9i128, 0, 3, 1 << 70] {
            assert_eq!(sys.space_average(&sys.compose(&f, s)), sys.space_average(&f));
        }
        let rot = DynamicalSystem::circle_rotation(2f64.sqrt() - 1.0).unwrap();
        let g = Observable::Trig(vec![(0, c(0.5)), (1, c(1.0)), (-3, Complex64::new(0.0, 2.0))]);
        assert_eq!(rot.space_average(&rot.compose(&g, 12345)), c(0.5));
    }

    #[test]
    fn circle_orbit_matches_direct_rotation() {
        let alpha = 0.1234;
        let sys = DynamicalSystem::circle_rotation(alpha).unwrap();
        let f = Observable::Trig(vec![(1, c(1.0)), (2, c(0.5))]);
        for s in [0i128, 1, 17, 1000] {
            let y = (0.25 + s as f64 * alpha).rem_euclid(1.0);
            let want = unit(y) + unit(2.0 * y) * 0.5;
            assert!((sys.eval_orbit(&f, Point::Circle(0.25), s) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let sys = DynamicalSystem::finite_cycle(3).unwrap();
        assert!(sys.check(&Observable::Table(vec![c(1.0); 2]), Point::Cycle(0)).is_err());
        assert!(sys.check(&Observable::Table(vec![c(1.0); 3]), Point::Cycle(3)).is_err());
        assert!(sys.check(&Observable::Trig(vec![]), Point::Circle(0.0)).is_err());
        assert!(DynamicalSystem::finite_cycle(0).is_err());
    }

    #[test]
    fn z_eps_matches_exact_powers() {
        let got = z_eps(0.5, 1 << 20).unwrap();
        let mut want = Vec::new();
        let (mut num, mut den) = (3u128, 2u128);
        while num / den <= 1 << 20 {
            let v = (num / den) as u64;
            if want.last() != Some(&v) {
                want.push(v);
            }
            num *= 3;
            den *= 2;
        }
        assert_eq!(got, want);
        assert_eq!(&got[..6], &[1, 2, 3, 5, 7, 11]);
        assert!(z_eps(0.0, 10).is_err());
    }

    #[test]
    fn oscillation_validates_breaks() {
        let (pt, tps) = setup(1.0, 1 << 10);
        let sys = DynamicalSystem::finite_cycle(1).unwrap();
        let f = Observable::Table(vec![c(1.0)]);
        let w = IntPolynomial::identity();
        for bad in [&[4u64][..], &[4, 8], &[0, 4], &[4, 16, 20]] {
            let r = oscillation_sum(&sys, &f, Point::Cycle(0), &tps, &pt, &w, bad, 0.5);
            assert!(matches!(r, Err(Error::InvalidBreaks(_))), "{bad:?}");
        }
        let breaks: Vec<u64> = (1..=5).map(|j| 1u64 << (2 * j)).collect();
        let r = oscillation_sum(&sys, &f, Point::Cycle(0), &tps, &pt, &w, &breaks, 0.5).unwrap();
        assert_eq!(r.j, 4);
        assert!(r.value.is_finite() && r.value >= 0.0);
    }
}
