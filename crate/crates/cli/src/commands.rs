//! One entry per subcommand: the keys it accepts with their defaults, and a
//! `prepare` step that validates everything before returning the deferred
//! computation.

use crate::config::{invalid, CliError, RunConfig};
use crate::report::{num, Report};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use thinprime::averages::{lr_norm, maximal_function, KernelVariant, SparseSignal};
use thinprime::ergodic::{average_series, oscillation_sum, DynamicalSystem, Observable, Point};
use thinprime::expsum::{
    bilinear_sum_bound, default_v, formlem_decay, vaughan_split, vdc_bound_check, IntPolynomial, PhaseSpec,
};
use thinprime::goldbach::{goldbach_batch, goldbach_report, parseval_check, GoldbachReport, ParsevalSource};
use thinprime::sieve::{
    build_prime_table, build_prime_table_cached, density_profile, enumerate_thin_primes, PrimeTable, MAX_LIMIT,
};
use thinprime::thinfn::{admissible_params, make_thin_function, Family, FamilyParams, ThinFunction};

pub type Job = Box<dyn FnOnce() -> Result<Report, CliError>>;

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    /// Accepts the thin-function keys.
    pub thin: bool,
    pub keys: &'static [(&'static str, Option<&'static str>)],
}

/// Keys describing the thin function `h`.
pub const THIN_KEYS: &[(&str, Option<&str>)] = &[
    ("family", Some("power")),
    ("gamma", None),
    ("c", None),
    ("A", None),
    ("B", None),
    ("C", None),
    ("m", None),
    ("C_h", None),
    ("x0", None),
];

pub const COMMANDS: &[Command] = &[
    Command {
        name: "sieve",
        about: "enumerate thin primes up to N",
        thin: true,
        keys: &[("N", Some("1000000")), ("cache", None)],
    },
    Command {
        name: "density",
        about: "pi_h(x) and pi_h(x) log x / phi(x) at checkpoints",
        thin: true,
        keys: &[("N", Some("1000000")), ("checkpoints", None)],
    },
    Command {
        name: "vaughan",
        about: "four-way Vaughan split of a Lambda-weighted exponential sum",
        thin: true,
        keys: &[
            ("W", Some("0,1")),
            ("P", Some("10000")),
            ("P1", None),
            ("xi", Some("0.3")),
            ("freq", Some("1")),
            ("v", None),
        ],
    },
    Command {
        name: "formlem-decay",
        about: "sup over a xi grid of the weighted thin-prime sum minus the prime sum",
        thin: true,
        keys: &[("W", Some("0,1")), ("N", Some("65536")), ("grid", Some("256"))],
    },
    Command {
        name: "vdc",
        about: "Van der Corput bound against a direct exponential sum",
        thin: true,
        keys: &[
            ("phase", Some("monomial")),
            ("beta", Some("1e-4")),
            ("k", Some("2")),
            ("N", Some("10000")),
            ("eta", None),
            ("r", None),
        ],
    },
    Command {
        name: "bilinear",
        about: "type II bilinear sum against its bound",
        thin: true,
        keys: &[
            ("W", Some("0,1")),
            ("P", Some("4096")),
            ("P1", Some("8192")),
            ("xi", Some("0.3")),
            ("freq", Some("1")),
            ("L", Some("64")),
            ("K", Some("64")),
            ("coeffs", Some("random")),
            ("seed", Some("0")),
        ],
    },
    Command {
        name: "maximal",
        about: "l^r ratios of the dyadic maximal function along W(p)",
        thin: true,
        keys: &[
            ("W", Some("0,1")),
            ("kernel", Some("kh")),
            ("N", Some("16384")),
            ("support", Some("1024")),
            ("seed", Some("0")),
            ("trials", Some("1")),
            ("r", Some("1,1.5,2,4,inf")),
            ("signal", None),
        ],
    },
    Command {
        name: "abel",
        about: "summation by parts, both sides",
        thin: false,
        keys: &[
            ("u", Some("one")),
            ("g", Some("identity")),
            ("a", Some("0")),
            ("b", Some("10")),
        ],
    },
    Command {
        name: "ergodic",
        about: "ergodic averages along W(p) at dyadic N",
        thin: true,
        keys: &[
            ("W", Some("0,1")),
            ("system", Some("cycle")),
            ("mod", Some("2")),
            ("alpha", Some("sqrt2-1")),
            ("table", None),
            ("k", Some("1")),
            ("x", Some("0")),
            ("weighted", Some("false")),
            ("N_min", Some("16")),
            ("N", Some("1048576")),
        ],
    },
    Command {
        name: "oscillation",
        about: "oscillation sum of the weighted ergodic averages",
        thin: true,
        keys: &[
            ("W", Some("0,1")),
            ("system", Some("rotation")),
            ("mod", Some("2")),
            ("alpha", Some("sqrt2-1")),
            ("table", None),
            ("k", Some("1")),
            ("x", Some("0")),
            ("eps", Some("0.5")),
            ("J", Some("8")),
            ("breaks", None),
        ],
    },
    Command {
        name: "goldbach",
        about: "ternary Goldbach counts in three power-type thin sets",
        thin: false,
        keys: &[
            ("gammas", Some("1,1,1")),
            ("N", None),
            ("N_lo", None),
            ("N_hi", None),
            ("cutoff", Some("10000")),
        ],
    },
    Command {
        name: "parseval",
        about: "discrete Parseval check for the prime exponential sum",
        thin: true,
        keys: &[
            ("N", Some("100")),
            ("weighted", Some("false")),
            ("source", Some("thin")),
            ("dft", None),
        ],
    },
    Command {
        name: "admissible",
        about: "largest admissible chi and the exponent c_q",
        thin: false,
        keys: &[("q", Some("1")), ("gamma", Some("1"))],
    },
];

impl Command {
    pub fn find(name: &str) -> Option<&'static Command> {
        COMMANDS.iter().find(|c| c.name == name)
    }

    fn all_keys(&self) -> impl Iterator<Item = &'static (&'static str, Option<&'static str>)> {
        let thin: &'static [(&str, Option<&str>)] = if self.thin { THIN_KEYS } else { &[] };
        thin.iter().chain(self.keys.iter())
    }

    pub fn knows(&self, key: &str) -> bool {
        self.all_keys().any(|(k, _)| *k == key)
    }

    /// Merges defaults under the given settings.
    pub fn resolve(&self, given: Vec<(String, String)>) -> RunConfig {
        let mut cfg = RunConfig::default();
        for (k, d) in self.all_keys() {
            if let Some(d) = d {
                cfg.values.insert(k.to_string(), d.to_string());
            }
        }
        cfg.values.extend(given);
        cfg
    }

    pub fn prepare(&self, cfg: &RunConfig) -> Result<Job, CliError> {
        match self.name {
            "sieve" => sieve(cfg),
            "density" => density(cfg),
            "vaughan" => vaughan(cfg),
            "formlem-decay" => decay(cfg),
            "vdc" => vdc(cfg),
            "bilinear" => bilinear(cfg),
            "maximal" => maximal(cfg),
            "abel" => abel(cfg),
            "ergodic" => ergodic(cfg),
            "oscillation" => oscillation(cfg),
            "goldbach" => goldbach(cfg),
            "parseval" => parseval(cfg),
            "admissible" => admissible(cfg),
            other => Err(CliError::Validation(format!("unknown subcommand '{other}'"))),
        }
    }
}

pub fn thin_function(cfg: &RunConfig) -> Result<ThinFunction, CliError> {
    let family = Family::parse(cfg.str("family")?).map_err(invalid)?;
    let m = match cfg.opt_u64("m")? {
        Some(m) => Some(u32::try_from(m).map_err(|_| CliError::Validation(format!("m = {m} too large")))?),
        None => None,
    };
    let x0 = match cfg.opt_str("x0") {
        None | Some("auto") => None,
        Some(_) => cfg.opt_f64("x0")?,
    };
    let mut p = FamilyParams {
        gamma: cfg.opt_f64("gamma")?,
        c: cfg.opt_f64("c")?,
        a: cfg.opt_f64("A")?,
        b: cfg.opt_f64("B")?,
        cc: cfg.opt_f64("C")?,
        m,
        c_h: cfg.opt_f64("C_h")?,
        x0,
    };
    if matches!(family, Family::Power | Family::H1 | Family::H2) && p.gamma.is_none() && p.c.is_none() {
        p.gamma = Some(1.0);
    }
    make_thin_function(family, p).map_err(invalid)
}

fn polynomial(cfg: &RunConfig) -> Result<IntPolynomial, CliError> {
    IntPolynomial::parse(cfg.str("W")?).map_err(invalid)
}

fn limit(key: &str, n: u64) -> Result<u64, CliError> {
    if n > MAX_LIMIT {
        return Err(CliError::Validation(format!(
            "{key} = {n} exceeds the sieve maximum {MAX_LIMIT}"
        )));
    }
    Ok(n)
}

fn thin_summary(r: &mut Report, tf: &ThinFunction) {
    let kv: Vec<String> = tf.to_kv().lines().map(str::to_string).collect();
    r.set("thin_function", json!(kv.join(";")));
}

fn c(z: Complex64) -> [Value; 2] {
    [num(z.re), num(z.im)]
}

fn sieve(cfg: &RunConfig) -> Result<Job, CliError> {
    let tf = thin_function(cfg)?;
    let n = limit("N", cfg.u64("N")?)?;
    let cache = cfg.opt_str("cache").map(PathBuf::from);
    Ok(Box::new(move || {
        let pt = match &cache {
            Some(path) => build_prime_table_cached(n, path)?,
            None => build_prime_table(n)?,
        };
        let tps = enumerate_thin_primes(&tf, &pt, n)?;
        let mut r = Report::new(&["p", "n_witness", "weight"]);
        for ((&p, &k), &w) in tps.primes().iter().zip(tps.witnesses()).zip(tps.weights()) {
            r.row(vec![json!(p), json!(k), num(w)]);
        }
        r.set("count", json!(tps.len()));
        thin_summary(&mut r, &tf);
        Ok(r)
    }))
}

fn density(cfg: &RunConfig) -> Result<Job, CliError> {
    let tf = thin_function(cfg)?;
    let n = limit("N", cfg.u64("N")?)?;
    let checkpoints = match cfg.opt_str("checkpoints") {
        Some(_) => cfg.u64_list("checkpoints")?,
        None => {
            let mut v: Vec<u64> = (1..20).map(|e| 10u64.pow(e)).take_while(|&x| x <= n).collect();
            if v.last() != Some(&n) {
                v.push(n);
            }
            v
        }
    };
    if checkpoints.iter().any(|&x| x > n || x < 2) || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Validation(
            "checkpoints must be increasing, at least 2 and at most N".into(),
        ));
    }
    Ok(Box::new(move || {
        let pt = build_prime_table(n)?;
        let tps = enumerate_thin_primes(&tf, &pt, n)?;
        let mut r = Report::new(&["x", "count", "ratio"]);
        for row in density_profile(&tps, &checkpoints)? {
            r.row(vec![json!(row.x), json!(row.count), num(row.ratio)]);
        }
        thin_summary(&mut r, &tf);
        Ok(r)
    }))
}

struct PhaseArgs {
    tf: ThinFunction,
    w: IntPolynomial,
    xi: f64,
    freq: i64,
    p: u64,
    p1: u64,
}

fn phase_args(cfg: &RunConfig) -> Result<PhaseArgs, CliError> {
    let tf = thin_function(cfg)?;
    let w = polynomial(cfg)?;
    let p = cfg.u64("P")?;
    let p1 = match cfg.opt_u64("P1")? {
        Some(v) => v,
        None => 2 * p,
    };
    limit("P1", p1)?;
    let xi = cfg.f64("xi")?;
    let freq = cfg.i64("freq")?;
    PhaseSpec::new(xi, w.clone(), freq, &tf, p, p1).map_err(invalid)?;
    Ok(PhaseArgs { tf, w, xi, freq, p, p1 })
}

fn vaughan(cfg: &RunConfig) -> Result<Job, CliError> {
    let a = phase_args(cfg)?;
    let v = match cfg.opt_f64("v")? {
        Some(v) => v,
        None => default_v(a.p1, a.w.degree()),
    };
    if !(v >= 2.0) || a.p as f64 <= v {
        return Err(CliError::Validation(format!(
            "need 2 <= v < P, got v = {v}, P = {}",
            a.p
        )));
    }
    Ok(Box::new(move || {
        let pt = build_prime_table(a.p1)?;
        let spec = PhaseSpec::new(a.xi, a.w.clone(), a.freq, &a.tf, a.p, a.p1)?;
        let s = vaughan_split(&pt, &spec, v)?;
        let mut r = Report::new(&["part", "re", "im"]);
        for (name, z) in [
            ("S1", s.s1),
            ("S21", s.s21),
            ("S22", s.s22),
            ("S3", s.s3),
            ("direct", s.direct),
        ] {
            let [re, im] = c(z);
            r.row(vec![json!(name), re, im]);
        }
        r.set("v", num(v));
        r.set("residual", num(s.residual));
        r.set("exact", json!(s.exact()));
        thin_summary(&mut r, &a.tf);
        Ok(r)
    }))
}

fn decay(cfg: &RunConfig) -> Result<Job, CliError> {
    let tf = thin_function(cfg)?;
    let w = polynomial(cfg)?;
    let n = limit("N", cfg.u64("N")?)?;
    let grid = cfg.u64("grid")? as usize;
    if grid < 64 {
        return Err(CliError::Validation(format!("grid = {grid} < 64")));
    }
    if n < 2 {
        return Err(CliError::Validation("N must be at least 2".into()));
    }
    w.check_range(n).map_err(invalid)?;
    Ok(Box::new(move || {
        let pt = build_prime_table(n)?;
        let tps = enumerate_thin_primes(&tf, &pt, n)?;
        let d = formlem_decay(&tps, &pt, &w, grid, n)?;
        let mut r = Report::new(&["N", "gap", "gap_over_N"]);
        for e in &d.entries {
            r.row(vec![json!(e.n), num(e.gap), num(e.normalized)]);
        }
        r.set("fitted_exponent", d.fitted_exponent.map(num).unwrap_or(Value::Null));
        r.set("exact_zero", json!(d.exact_zero));
        thin_summary(&mut r, &tf);
        Ok(r)
    }))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn vdc(cfg: &RunConfig) -> Result<Job, CliError> {
    let phase = cfg.str("phase")?.to_string();
    let beta = cfg.f64("beta")?;
    let k = cfg.u64("k")?;
    let n = cfg.u64("N")?;
    if !(2..=8).contains(&k) {
        return Err(CliError::Validation(format!("k = {k} not in 2..=8")));
    }
    if n < 1 || beta == 0.0 || !beta.is_finite() {
        return Err(CliError::Validation("need N >= 1 and a finite nonzero beta".into()));
    }
    let k = k as u32;
    let eta = cfg.opt_f64("eta")?;
    let rr = cfg.opt_f64("r")?;
    let tf = match phase.as_str() {
        "monomial" => None,
        "phi" => Some(thin_function(cfg)?),
        other => return Err(CliError::Validation(format!("phase '{other}' is not monomial or phi"))),
    };
    Ok(Box::new(move || {
        let f = |x: f64| match &tf {
            None => beta * x.powi(k as i32),
            Some(tf) => beta * tf.phi(x).unwrap_or(f64::NAN),
        };
        let (eta, rr) = match (eta, rr, &tf) {
            (Some(e), Some(r), _) => (e, r),
            (e, r, None) => (e.unwrap_or(factorial(k) * beta.abs()), r.unwrap_or(1.0)),
            (e, r, Some(_)) => {
                let probe = vdc_bound_check(f, n, k, 1.0, 1.0)?;
                let lo = probe.min_kth_diff;
                let eta = e.unwrap_or(lo);
                (eta, r.unwrap_or((probe.max_kth_diff / eta).max(1.0)))
            }
        };
        let rep = vdc_bound_check(f, n, k, eta, rr)?;
        if !rep.sum_abs.is_finite() {
            return Err(CliError::Compute(thinprime::Error::DomainError(
                "phase not finite on [1, N]".into(),
            )));
        }
        let mut r = Report::new(&["N", "k", "eta", "r", "sum_abs", "bound", "constant", "precondition_ok"]);
        r.row(vec![
            json!(n),
            json!(k),
            num(eta),
            num(rr),
            num(rep.sum_abs),
            num(rep.bound),
            num(rep.constant),
            json!(rep.precondition_ok),
        ]);
        r.set("constant", num(rep.constant));
        Ok(r)
    }))
}

fn bilinear(cfg: &RunConfig) -> Result<Job, CliError> {
    let a = phase_args(cfg)?;
    let l = cfg.u64("L")? as usize;
    let k = cfg.u64("K")? as usize;
    if l == 0 || k == 0 {
        return Err(CliError::Validation("L and K must be positive".into()));
    }
    let coeffs = cfg.str("coeffs")?.to_string();
    if coeffs != "random" && coeffs != "ones" {
        return Err(CliError::Validation(format!("coeffs '{coeffs}' is not random or ones")));
    }
    let seed = cfg.u64("seed")?;
    Ok(Box::new(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<Complex64> {
            (0..len)
                .map(|_| {
                    if coeffs == "ones" {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())
                    }
                })
                .collect()
        };
        let (d1, d2) = (draw(l), draw(k));
        let spec = PhaseSpec::new(a.xi, a.w.clone(), a.freq, &a.tf, a.p, a.p1)?;
        let b = bilinear_sum_bound(&d1, &d2, &spec)?;
        let mut r = Report::new(&["re", "im", "abs", "bound", "constant"]);
        let [re, im] = c(b.value);
        r.row(vec![re, im, num(b.value.norm()), num(b.bound), num(b.constant)]);
        r.set("constant", num(b.constant));
        thin_summary(&mut r, &a.tf);
        Ok(r)
    }))
}

fn maximal(cfg: &RunConfig) -> Result<Job, CliError> {
    let tf = thin_function(cfg)?;
    let w = polynomial(cfg)?;
    let variant = KernelVariant::parse(cfg.str("kernel")?).map_err(invalid)?;
    let n = limit("N", cfg.u64("N")?)?;
    if !n.is_power_of_two() || n < 2 {
        return Err(CliError::Validation(format!("N = {n} must be a power of two")));
    }
    w.check_range(n).map_err(invalid)?;
    let support = cfg.u64("support")?;
    let seed = cfg.u64("seed")?;
    let trials = cfg.u64("trials")?;
    let rs = cfg.f64_list("r")?;
    if rs.iter().any(|&r| r < 1.0) {
        return Err(CliError::Validation("every r must be at least 1".into()));
    }
    let signal = match cfg.opt_str("signal") {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::Validation(format!("signal {path}: {e}")))?;
            Some(SparseSignal::read_csv(BufReader::new(file)).map_err(invalid)?)
        }
        None => {
            if support == 0 || trials == 0 {
                return Err(CliError::Validation("support and trials must be positive".into()));
            }
            None
        }
    };
    Ok(Box::new(move || {
        let pt = build_prime_table(n)?;
        let tps = enumerate_thin_primes(&tf, &pt, n)?;
        let inputs: Vec<(u64, SparseSignal)> = match signal {
            Some(s) => vec![(seed, s)],
            None => (seed..seed + trials)
                .map(|s| (s, random_indicator(support, s)))
                .collect(),
        };
        let mut r = Report::new(&["r", "support_size", "seed", "ratio"]);
        for (s, f) in &inputs {
            let m = maximal_function(f, variant, &tps, &pt, &w, n)?;
            for &rv in &rs {
                let ratio = lr_norm(&m, rv)? / lr_norm(f, rv)?;
                r.row(vec![num(rv), json!(f.len()), json!(s), num(ratio)]);
            }
        }
        r.set("kernel", json!(variant.name()));
        thin_summary(&mut r, &tf);
        Ok(r)
    }))
}

/// Random 0/1 values on `[0, support)`, never identically zero.
pub fn random_indicator(support: u64, seed: u64) -> SparseSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(i64, f64)> = (0..support as i64)
        .filter(|_| rng.random_bool(0.5))
        .map(|x| (x, 1.0))
        .collect();
    if pairs.is_empty() {
        pairs.push((0, 1.0));
    }
    SparseSignal::from_real(pairs)
}

fn abel(cfg: &RunConfig) -> Result<Job, CliError> {
    let u = cfg.str("u")?.to_string();
    let g = cfg.str("g")?.to_string();
    let a = cfg.f64("a")?;
    let b = cfg.f64("b")?;
    if !(a >= 0.0 && a < b && b.is_finite()) {
        return Err(CliError::Validation(format!("need 0 <= a < b, got a = {a}, b = {b}")));
    }
    if !matches!(u.as_str(), "one" | "lambda" | "mu") {
        return Err(CliError::Validation(format!("u '{u}' is not one, lambda or mu")));
    }
    let floor = match g.as_str() {
        "identity" | "sqrt" => 0.0,
        "log" => f64::MIN_POSITIVE,
        "inv_log" => 1.0 + f64::EPSILON,
        other => {
            return Err(CliError::Validation(format!(
                "g '{other}' is not identity, sqrt, log or inv_log"
            )))
        }
    };
    if a < floor {
        return Err(CliError::Validation(format!(
            "g = {g} is not defined on [a, b] with a = {a}"
        )));
    }
    let top = limit("b", b.floor() as u64)?;
    Ok(Box::new(move || {
        let pt: Option<PrimeTable> = if u == "one" {
            None
        } else {
            Some(build_prime_table(top.max(2))?)
        };
        let uf = |n: u64| match (u.as_str(), &pt) {
            ("lambda", Some(pt)) => pt.lambda(n),
            ("mu", Some(pt)) => pt.mu(n) as f64,
            _ => 1.0,
        };
        let gf = |x: f64| match g.as_str() {
            "identity" => x,
            "sqrt" => x.sqrt(),
            "log" => x.ln(),
            _ => 1.0 / x.ln(),
        };
        let rep = thinprime::averages::abel_summation(&uf, &gf, a, b)?;
        let mut r = Report::new(&["lhs", "rhs", "residual"]);
        r.row(vec![num(rep.lhs), num(rep.rhs), num(rep.residual)]);
        Ok(r)
    }))
}

struct SystemArgs {
    sys: DynamicalSystem,
    f: Observable,
    x: Point,
}

fn system_args(cfg: &RunConfig) -> Result<SystemArgs, CliError> {
    let out = match cfg.str("system")? {
        "cycle" => {
            let m = cfg.u64("mod")?;
            let sys = DynamicalSystem::finite_cycle(m).map_err(invalid)?;
            let table: Vec<f64> = match cfg.opt_str("table") {
                Some(_) => cfg.f64_list("table")?,
                None if m >= 2 => (0..m)
                    .map(|i| [1.0, -1.0].get(i as usize).copied().unwrap_or(0.0))
                    .collect(),
                None => vec![1.0],
            };
            let f = Observable::Table(table.into_iter().map(|v| Complex64::new(v, 0.0)).collect());
            let x = Point::Cycle(cfg.u64("x")?);
            SystemArgs { sys, f, x }
        }
        "rotation" => {
            let alpha = match cfg.str("alpha")? {
                "sqrt2-1" => 2f64.sqrt() - 1.0,
                _ => cfg.f64("alpha")?,
            };
            let sys = DynamicalSystem::circle_rotation(alpha).map_err(invalid)?;
            let f = Observable::Trig(vec![(cfg.i64("k")?, Complex64::new(1.0, 0.0))]);
            let x = Point::Circle(cfg.f64("x")?);
            SystemArgs { sys, f, x }
        }
        other => {
            return Err(CliError::Validation(format!(
                "system '{other}' is not cycle or rotation"
            )))
        }
    };
    out.sys.check(&out.f, out.x).map_err(invalid)?;
    Ok(out)
}

fn ergodic(cfg: &RunConfig) -> Result<Job, CliError> {
    let tf = thin_function(cfg)?;
    let w = polynomial(cfg)?;
    let s = system_args(cfg)?;
    let weighted = cfg.bool("weighted")?;
    let n_min = cfg.u64("N_min")?;
    let n = limit("N", cfg.u64("N")?)?;
    if n_min < 2 || n_min > n {
        return Err(CliError::Validation(format!(
            "need 2 <= N_min <= N, got {n_min} and {n}"
        )));
    }
    w.check_range(n).map_err(invalid)?;
    let mut checkpoints: Vec<u64> = (1..64).map(|j| 1u64 << j).filter(|&v| v >= n_min && v <= n).collect();
    if checkpoints.last() != Some(&n) {
        checkpoints.push(n);
    }
    Ok(Box::new(move || {
        let pt = build_prime_table(n)?;
        let tps = enumerate_thin_primes(&tf, &pt, n)?;
        let series = average_series(&s.sys, &s.f, s.x, &tps, &pt, &w, &checkpoints, weighted)?;
        let mut r = Report::new(&["N", "re", "im", "gap"]);
        for (i, (n, v)) in series.checkpoints.iter().zip(&series.values).enumerate() {
            let gap = if i == 0 {
                Value::Null
            } else {
                num((v - series.values[i - 1]).norm())
            };
            let [re, im] = c(*v);
            r.row(vec![json!(n), re, im, gap]);
        }
        r.set("weighted", json!(weighted));
        thin_summary(&mut r, &tf);
        Ok(r)
    }))
}

fn oscillation(cfg: &RunConfig) -> Result<Job, CliError> {
    let tf = thin_function(cfg)?;
    let w = polynomial(cfg)?;
    let s = system_args(cfg)?;
    let eps = cfg.f64("eps")?;
    if !(eps > 0.0) {
        return Err(CliError::Validation(format!("eps = {eps} must be positive")));
    }
    let breaks: Vec<u64> = match cfg.opt_str("breaks") {
        Some(_) => cfg.u64_list("breaks")?,
        None => {
            let j = cfg.u64("J")?;
            if !(1..=30).contains(&j) {
                return Err(CliError::Validation(format!("J = {j} not in 1..=30")));
            }
            (1..=j + 1).map(|i| 1u64 << (2 * i)).collect()
        }
    };
    if breaks.len() < 2 || breaks[0] == 0 || breaks.windows(2).any(|p| 2 * p[0] >= p[1]) {
        return Err(CliError::Validation(format!(
            "breaks {breaks:?} must satisfy 2 N_j < N_(j+1)"
        )));
    }
    let n = limit("breaks", *breaks.last().unwrap())?;
    w.check_range(n).map_err(invalid)?;
    Ok(Box::new(move || {
        let pt = build_prime_table(n)?;
        let tps = enumerate_thin_primes(&tf, &pt, n)?;
        let o = oscillation_sum(&s.sys, &s.f, s.x, &tps, &pt, &w, &breaks, eps)?;
        let mut r = Report::new(&["j", "N_j", "N_next", "sup"]);
        for (j, v) in o.per_block.iter().enumerate() {
            r.row(vec![json!(j + 1), json!(breaks[j]), json!(breaks[j + 1]), num(*v)]);
        }
        r.set("value", num(o.value));
        r.set("J", json!(o.j));
        r.set("value_over_J", num(o.value_over_j));
        thin_summary(&mut r, &tf);
        Ok(r)
    }))
}

fn goldbach(cfg: &RunConfig) -> Result<Job, CliError> {
    let gammas = cfg.f64_list("gammas")?;
    if gammas.len() != 3 {
        return Err(CliError::Validation(format!(
            "gammas needs three values, got {}",
            gammas.len()
        )));
    }
    let tfs: Vec<ThinFunction> = gammas
        .iter()
        .map(|&g| make_thin_function(Family::Power, FamilyParams::power(g)).map_err(invalid))
        .collect::<Result<_, _>>()?;
    let cutoff = cfg.u64("cutoff")?;
    if cutoff < 100 {
        return Err(CliError::Validation(format!("cutoff = {cutoff} < 100")));
    }
    let (lo, hi, single) = match (cfg.opt_u64("N")?, cfg.opt_u64("N_lo")?, cfg.opt_u64("N_hi")?) {
        (Some(n), None, None) => (n, n, true),
        (None, Some(lo), Some(hi)) => (lo, hi, false),
        _ => return Err(CliError::Validation("give either N or both N_lo and N_hi".into())),
    };
    if single && (lo < 7 || lo % 2 == 0) {
        return Err(CliError::Validation(format!("N = {lo} must be odd and at least 7")));
    }
    if !single && (lo < 7 || hi < (lo | 1)) {
        return Err(CliError::Validation(format!(
            "need 7 <= N_lo <= N_hi, got [{lo}, {hi}]"
        )));
    }
    if hi > 1 << 26 {
        return Err(CliError::Validation(format!("N = {hi} is beyond the supported 2^26")));
    }
    Ok(Box::new(move || {
        let pt = build_prime_table(hi.max(cutoff))?;
        let sets = tfs
            .iter()
            .map(|tf| enumerate_thin_primes(tf, &pt, hi))
            .collect::<Result<Vec<_>, _>>()?;
        let refs = [&sets[0], &sets[1], &sets[2]];
        let reports: Vec<GoldbachReport> = if single {
            vec![goldbach_report(refs, lo, cutoff)?]
        } else {
            goldbach_batch(refs, lo, hi, cutoff)?
        };
        let mut r = Report::new(&["N", "R", "S_paper", "S_classical", "main_term", "ratio", "flags"]);
        for g in &reports {
            r.row(vec![
                json!(g.n),
                json!(g.r),
                num(g.s_paper),
                num(g.s_classical),
                num(g.main_term),
                num(g.ratio),
                json!(g.flags.join(";")),
            ]);
        }
        if let [g] = &reports[..] {
            r.set("vinogradov_ratio", g.vinogradov_ratio.map(num).unwrap_or(Value::Null));
            r.set("tail_bound", num(g.tail_bound));
            r.set("dft_size", json!(g.dft_size));
        }
        Ok(r)
    }))
}

fn parseval(cfg: &RunConfig) -> Result<Job, CliError> {
    let tf = thin_function(cfg)?;
    let n = limit("N", cfg.u64("N")?)?;
    let weighted = cfg.bool("weighted")?;
    let source = cfg.str("source")?.to_string();
    if source != "thin" && source != "all" {
        return Err(CliError::Validation(format!("source '{source}' is not thin or all")));
    }
    let dft = cfg.opt_u64("dft")?.map(|m| m as usize);
    if let Some(m) = dft {
        if (m as u64) < 2 * n + 1 {
            return Err(CliError::Validation(format!("dft = {m} < 2N + 1 = {}", 2 * n + 1)));
        }
    }
    Ok(Box::new(move || {
        let pt = build_prime_table(n.max(2))?;
        let tps = enumerate_thin_primes(&tf, &pt, n.max(2))?;
        let src = if source == "thin" {
            ParsevalSource::Thin(&tps)
        } else {
            ParsevalSource::All(&pt)
        };
        let p = parseval_check(src, n, weighted, dft)?;
        let mut r = Report::new(&["N", "lhs", "rhs", "relative_error", "dft_size"]);
        r.row(vec![
            json!(n),
            num(p.lhs),
            num(p.rhs),
            num(p.relative_error()),
            json!(p.dft_size),
        ]);
        thin_summary(&mut r, &tf);
        Ok(r)
    }))
}

fn admissible(cfg: &RunConfig) -> Result<Job, CliError> {
    let q = u32::try_from(cfg.u64("q")?).map_err(|_| CliError::Validation("q too large".into()))?;
    let gamma = cfg.f64("gamma")?;
    let ap = admissible_params(q, gamma).map_err(invalid)?;
    Ok(Box::new(move || {
        let v = serde_json::to_value(&ap).map_err(|e| CliError::Io(e.into()))?;
        let mut r = Report::new(&["q", "gamma", "chi_max", "c_q"]);
        r.row(vec![
            v["q"].clone(),
            v["gamma"].clone(),
            v["chi_max"].clone(),
            v["c_q"].clone(),
        ]);
        r.set("chi_max", v["chi_max"].clone());
        r.set("c_q", v["c_q"].clone());
        Ok(r)
    }))
}
