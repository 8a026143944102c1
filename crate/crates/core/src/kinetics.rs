//! Motility functions `γ(v)` and intake functions `F(w)`.
//!
//! Parametric families are evaluated in closed form. Tabulated families are
//! piecewise linear between their sample points and constant beyond the last
//! one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default working range `[v_lo, v_hi]` for sampled assumption checks.
pub const DEFAULT_RANGE: (f64, f64) = (1e-2, 1e4);

/// Number of log-spaced samples used by [`validate_assumptions`].
pub const VALIDATION_SAMPLES: usize = 1000;

/// Right end of the bracket expansion in [`find_c1`].
pub const C1_BRACKET_LIMIT: f64 = 1e12;

/// Exponents tried when looking for a witness of `inf_{v > v̄} v^k γ(v) > 0`.
pub const MAX_WITNESS_EXPONENT: u32 = 16;

const SIMPSON_RTOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum KineticsError {
    #[error("{family}: parameter {name} must be positive and finite, got {value}")]
    Parameter {
        family: &'static str,
        name: &'static str,
        value: f64,
    },
    #[error("table: {0}")]
    Table(String),
    #[error("{what} must be {bound}, got {value}")]
    Domain {
        what: &'static str,
        bound: &'static str,
        value: f64,
    },
    #[error("gamma(v) >= D/2 = {target} for every v up to {limit:e}; no admissible C1")]
    C1Unattainable { target: f64, limit: f64 },
}

/// Motility function families `γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum MotilitySpec {
    /// `c0 / v^k`
    #[serde(rename = "power")]
    PowerLaw { c0: f64, k: f64 },
    /// `exp(-chi v)`
    #[serde(rename = "exponential")]
    Exponential { chi: f64 },
    /// `1 / (c + v^k)`
    #[serde(rename = "rational")]
    Rational { c: f64, k: f64 },
    /// Piecewise-linear through `(v, γ)` points with strictly increasing `v`.
    #[serde(rename = "tabulated")]
    Tabulated { points: Vec<[f64; 2]> },
}

/// Intake function families `F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum IntakeSpec {
    /// `w^2 / (w^2 + lambda)`
    #[serde(rename = "hill")]
    Hill { lambda: f64 },
    /// `slope * w`
    #[serde(rename = "linear")]
    Linear { slope: f64 },
    /// Piecewise-linear through `(w, F)` points; the first point must be `(0, 0)`.
    #[serde(rename = "tabulated")]
    Tabulated { points: Vec<[f64; 2]> },
}

fn positive(family: &'static str, name: &'static str, value: f64) -> Result<(), KineticsError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(KineticsError::Parameter {
            family,
            name,
            value,
        })
    }
}

fn check_table(points: &[[f64; 2]]) -> Result<(), KineticsError> {
    if points.len() < 2 {
        return Err(KineticsError::Table("need at least two points".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(KineticsError::Table("non-finite entry".into()));
    }
    if points.windows(2).any(|p| p[1][0] <= p[0][0]) {
        return Err(KineticsError::Table(
            "abscissae must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn interpolate(points: &[[f64; 2]], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let k = points.partition_point(|p| p[0] <= x);
    let [x0, y0] = points[k - 1];
    let [x1, y1] = points[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance `rtol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    // a coarse composite pass sets the absolute scale for the tolerance
    let pieces = 16;
    let width = (b - a) / pieces as f64;
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(pieces);
    for p in 0..pieces {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == pieces { b } else { lo + width };
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let s = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += s.abs();
        parts.push((lo, hi, fa, fm, fb, s));
    }
    let tol = rtol * total.max(f64::MIN_POSITIVE) / pieces as f64;
    parts
        .into_iter()
        .map(|(lo, hi, fa, fm, fb, s)| recurse(f, lo, hi, fa, fm, fb, s, tol, 48))
        .sum()
}

impl MotilitySpec {
    pub fn validate(&self) -> Result<(), KineticsError> {
        match *self {
            Self::PowerLaw { c0, k } => {
                positive("power", "c0", c0)?;
                positive("power", "k", k)
            }
            Self::Exponential { chi } => positive("exponential", "chi", chi),
            Self::Rational { c, k } => {
                positive("rational", "c", c)?;
                positive("rational", "k", k)
            }
            Self::Tabulated { ref points } => {
                check_table(points)?;
                if points[0][0] < 0.0 {
                    return Err(KineticsError::Table("v must be non-negative".into()));
                }
                Ok(())
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::PowerLaw { .. } => "power",
            Self::Exponential { .. } => "exponential",
            Self::Rational { .. } => "rational",
            Self::Tabulated { .. } => "tabulated",
        }
    }

    /// Whether `γ` is singular at `v = 0`.
    pub fn is_singular_at_zero(&self) -> bool {
        matches!(self, Self::PowerLaw { .. })
    }

    /// Whether the family is strictly decreasing by construction.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, Self::Tabulated { .. })
    }

    /// The family's own statement about `inf_{v > v̄} v^k γ(v) > 0`:
    /// `Some(Some(k))` with its witness exponent, `Some(None)` when it never
    /// holds, `None` when only sampling can tell.
    pub fn declared_uniform_bound(&self) -> Option<Option<f64>> {
        match *self {
            Self::PowerLaw { k, .. } | Self::Rational { k, .. } => Some(Some(k)),
            Self::Exponential { .. } => Some(None),
            Self::Tabulated { .. } => None,
        }
    }

    fn check_arg(&self, v: f64) -> Result<(), KineticsError> {
        if v.is_nan() || v < 0.0 {
            return Err(KineticsError::Domain {
                what: "v",
                bound: "non-negative",
                value: v,
            });
        }
        if v == 0.0 && self.is_singular_at_zero() {
            return Err(KineticsError::Domain {
                what: "v",
                bound: "positive for a singular motility",
                value: v,
            });
        }
        Ok(())
    }

    /// `γ(v)`.
    pub fn gamma(&self, v: f64) -> Result<f64, KineticsError> {
        self.check_arg(v)?;
        Ok(self.gamma_unchecked(v))
    }

    /// `γ(v)` without argument checks, for hot loops over states whose
    /// invariants already guarantee `v > 0`.
    #[inline]
    pub fn gamma_unchecked(&self, v: f64) -> f64 {
        match *self {
            Self::PowerLaw { c0, k } => {
                if k == 1.0 {
                    c0 / v
                } else if k == 2.0 {
                    c0 / (v * v)
                } else {
                    c0 * v.powf(-k)
                }
            }
            Self::Exponential { chi } => (-chi * v).exp(),
            Self::Rational { c, k } => {
                let vk = if k == 1.0 {
                    v
                } else if k == 2.0 {
                    v * v
                } else {
                    v.powf(k)
                };
                1.0 / (c + vk)
            }
            Self::Tabulated { ref points } => interpolate(points, v),
        }
    }

    /// Writes `γ(v_i)` for every entry; same values as [`Self::gamma_unchecked`].
    pub fn gamma_into(&self, v: &[f64], out: &mut [f64]) {
        let each = |out: &mut [f64], f: &dyn Fn(f64) -> f64| {
            for (o, &x) in out.iter_mut().zip(v) {
                *o = f(x);
            }
        };
        match *self {
            Self::PowerLaw { c0, k } if k == 1.0 => {
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = c0 / x;
                }
            }
            Self::PowerLaw { c0, k } if k == 2.0 => {
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = c0 / (x * x);
                }
            }
            Self::Rational { c, k } if k == 1.0 => {
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = 1.0 / (c + x);
                }
            }
            _ => each(out, &|x| self.gamma_unchecked(x)),
        }
    }

    /// `ln γ(v)`, finite where `γ` itself underflows.
    pub fn ln_gamma_unchecked(&self, v: f64) -> f64 {
        match *self {
            Self::PowerLaw { c0, k } => c0.ln() - k * v.ln(),
            Self::Exponential { chi } => -chi * v,
            Self::Rational { c, k } => -(c + v.powf(k)).ln(),
            Self::Tabulated { ref points } => interpolate(points, v).ln(),
        }
    }

    /// `γ'(v)`: analytic for parametric families, centered difference for tables.
    pub fn gamma_prime(&self, v: f64) -> Result<f64, KineticsError> {
        self.check_arg(v)?;
        Ok(match *self {
            Self::PowerLaw { c0, k } => -k * c0 * v.powf(-k - 1.0),
            Self::Exponential { chi } => -chi * (-chi * v).exp(),
            Self::Rational { c, k } => {
                if v == 0.0 && k < 1.0 {
                    return Err(KineticsError::Domain {
                        what: "v",
                        bound: "positive for a rational motility with k < 1",
                        value: v,
                    });
                }
                let d = c + v.powf(k);
                if k == 1.0 {
                    -1.0 / (d * d)
                } else {
                    -k * v.powf(k - 1.0) / (d * d)
                }
            }
            Self::Tabulated { ref points } => {
                let eps = 1e-6 * v.max(1e-3);
                let lo = (v - eps).max(0.0);
                let hi = v + eps;
                (interpolate(points, hi) - interpolate(points, lo)) / (hi - lo)
            }
        })
    }

    /// `Γ(s) = (1/D) ∫_{C1}^{s} γ(x) dx`; negative for `s < C1`.
    pub fn gamma_antiderivative(&self, s: f64, c1: f64, d: f64) -> Result<f64, KineticsError> {
        for (what, value) in [("s", s), ("C1", c1), ("D", d)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(KineticsError::Domain {
                    what,
                    bound: "positive",
                    value,
                });
            }
        }
        if s == c1 {
            return Ok(0.0);
        }
        let integral = match *self {
            Self::PowerLaw { c0, k } => {
                let e = 1.0 - k;
                let log_ratio = (s / c1).ln();
                if e.abs() < 1e-12 {
                    c0 * log_ratio
                } else {
                    // C1^e (exp(e ln(s/C1)) - 1) / e, accurate for k near 1
                    c0 * c1.powf(e) * (e * log_ratio).exp_m1() / e
                }
            }
            Self::Exponential { chi } => {
                // (e^{-chi C1} - e^{-chi s}) / chi
                (-chi * c1).exp() * -(-chi * (s - c1)).exp_m1() / chi
            }
            Self::Rational { c, k } if k == 1.0 => ((c + s) / (c + c1)).ln(),
            Self::Rational { c, k } if k == 2.0 => {
                let r = c.sqrt();
                ((s / r).atan() - (c1 / r).atan()) / r
            }
            _ => {
                let f = |x: f64| self.gamma_unchecked(x);
                adaptive_simpson(&f, c1, s, SIMPSON_RTOL)
            }
        };
        Ok(integral / d)
    }
}

/// Picks `C1` with `γ(C1) = D/2` by bracketing and bisection, starting from
/// the default working-range left end.
pub fn find_c1(spec: &MotilitySpec, d: f64) -> Result<f64, KineticsError> {
    find_c1_from(spec, d, DEFAULT_RANGE.0)
}

/// As [`find_c1`] with an explicit left end `left > 0`.
///
/// If `γ(left) <= D/2` the left end itself is returned. Otherwise the bracket
/// doubles to the right until `γ` drops to `D/2`; if that never happens below
/// [`C1_BRACKET_LIMIT`] the limit is returned when `γ` is already below `D`
/// there, and the search fails otherwise.
pub fn find_c1_from(spec: &MotilitySpec, d: f64, left: f64) -> Result<f64, KineticsError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(KineticsError::Domain {
            what: "D",
            bound: "positive",
            value: d,
        });
    }
    if !(left > 0.0) {
        return Err(KineticsError::Domain {
            what: "left end",
            bound: "positive",
            value: left,
        });
    }
    let target = 0.5 * d;
    let g = |v: f64| spec.gamma_unchecked(v);
    if g(left) <= target {
        return Ok(left);
    }
    let mut lo;
    let mut hi = left;
    loop {
        lo = hi;
        hi = (hi * 2.0).min(C1_BRACKET_LIMIT);
        if g(hi) <= target {
            break;
        }
        if hi >= C1_BRACKET_LIMIT {
            return if g(hi) < d {
                Ok(hi)
            } else {
                Err(KineticsError::C1Unattainable {
                    target,
                    limit: C1_BRACKET_LIMIT,
                })
            };
        }
    }
    // invariant: g(lo) > target >= g(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // return whichever endpoint sits closer to the target level
    Ok(if (g(lo) - target).abs() < (g(hi) - target).abs() {
        lo
    } else {
        hi
    })
}

impl IntakeSpec {
    pub fn validate(&self) -> Result<(), KineticsError> {
        match *self {
            Self::Hill { lambda } => positive("hill", "lambda", lambda),
            Self::Linear { slope } => positive("linear", "slope", slope),
            Self::Tabulated { ref points } => {
                check_table(points)?;
                if points[0] != [0.0, 0.0] {
                    return Err(KineticsError::Table(
                        "intake table must start at (0, 0)".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Hill { .. } => "hill",
            Self::Linear { .. } => "linear",
            Self::Tabulated { .. } => "tabulated",
        }
    }

    /// Whether `F` is non-decreasing by construction.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, Self::Tabulated { .. })
    }

    /// `F(w)`.
    pub fn intake(&self, w: f64) -> Result<f64, KineticsError> {
        if w.is_nan() || w < 0.0 {
            return Err(KineticsError::Domain {
                what: "w",
                bound: "non-negative",
                value: w,
            });
        }
        Ok(self.intake_unchecked(w))
    }

    #[inline]
    pub fn intake_unchecked(&self, w: f64) -> f64 {
        match *self {
            Self::Hill { lambda } => {
                let w2 = w * w;
                w2 / (w2 + lambda)
            }
            Self::Linear { slope } => slope * w,
            Self::Tabulated { ref points } => interpolate(points, w),
        }
    }

    /// Writes `F(w_i)` for every entry.
    pub fn intake_into(&self, w: &[f64], out: &mut [f64]) {
        match *self {
            Self::Hill { lambda } => {
                for (o, &x) in out.iter_mut().zip(w) {
                    let x2 = x * x;
                    *o = x2 / (x2 + lambda);
                }
            }
            Self::Linear { slope } => {
                for (o, &x) in out.iter_mut().zip(w) {
                    *o = slope * x;
                }
            }
            Self::Tabulated { .. } => {
                for (o, &x) in out.iter_mut().zip(w) {
                    *o = self.intake_unchecked(x);
                }
            }
        }
    }

    /// `F'(w)` (one-sided from the right at table knots).
    pub fn intake_prime(&self, w: f64) -> f64 {
        match *self {
            Self::Hill { lambda } => {
                let d = w * w + lambda;
                2.0 * lambda * w / (d * d)
            }
            Self::Linear { slope } => slope,
            Self::Tabulated { ref points } => {
                if w >= points[points.len() - 1][0] {
                    return 0.0;
                }
                let k = points.partition_point(|p| p[0] <= w).max(1);
                let [x0, y0] = points[k - 1];
                let [x1, y1] = points[k];
                (y1 - y0) / (x1 - x0)
            }
        }
    }

    /// `sup |F'|` on `[0, w_max]`.
    pub fn lipschitz_bound(&self, w_max: f64) -> Result<f64, KineticsError> {
        if w_max.is_nan() || w_max < 0.0 {
            return Err(KineticsError::Domain {
                what: "w_max",
                bound: "non-negative",
                value: w_max,
            });
        }
        Ok(match *self {
            Self::Hill { lambda } => {
                // F' peaks at w = sqrt(lambda / 3) and increases before it
                let peak = (lambda / 3.0).sqrt();
                self.intake_prime(w_max.min(peak))
            }
            Self::Linear { slope } => slope,
            Self::Tabulated { ref points } => points
                .windows(2)
                .take_while(|p| p[0][0] < w_max || p[0][0] == 0.0)
                .map(|p| ((p[1][1] - p[0][1]) / (p[1][0] - p[0][0])).abs())
                .fold(0.0, f64::max),
        })
    }
}

/// Outcome of one sampled structural check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Sampled certificate for `inf_{v > v̄} v^k γ(v) > 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformBoundCheck {
    pub holds: bool,
    /// Smallest exponent that passed, if any.
    pub witness_k: Option<f64>,
    /// Minimum of `v^k γ(v)` over the samples for the witness (or the largest tried exponent).
    pub inf: f64,
    /// What the family declares about itself.
    pub declared: Option<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub range: (f64, f64),
    pub checks: Vec<Check>,
    pub uniform_bound: UniformBoundCheck,
}

impl AssumptionReport {
    /// All structural checks pass. The uniform-bound flag is informational.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn log_samples(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Samples the structural assumptions on `γ` and `F` over `range`.
///
/// This is a heuristic certificate: every condition is tested on
/// [`VALIDATION_SAMPLES`] log-spaced points, not proven on `(0, ∞)`.
pub fn validate_assumptions(
    motility: &MotilitySpec,
    intake: &IntakeSpec,
    range: (f64, f64),
) -> Result<AssumptionReport, KineticsError> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(KineticsError::Domain {
            what: "validation range",
            bound: "0 < v_lo < v_hi",
            value: lo,
        });
    }
    motility.validate()?;
    intake.validate()?;
    let vs = log_samples(lo, hi, VALIDATION_SAMPLES);
    let gammas: Vec<f64> = vs.iter().map(|&v| motility.gamma_unchecked(v)).collect();
    // positivity and monotonicity are judged on ln γ so that underflow is not a violation
    let ln_gammas: Vec<f64> = vs.iter().map(|&v| motility.ln_gamma_unchecked(v)).collect();
    let mut checks = Vec::new();

    let bad = vs.iter().zip(&ln_gammas).find(|(_, g)| !(g.is_finite()));
    checks.push(Check {
        name: "gamma_positive",
        passed: bad.is_none(),
        detail: match bad {
            Some((v, _)) => format!("gamma({v:e}) = {:e}", motility.gamma_unchecked(*v)),
            None => format!("gamma > 0 at {} samples", vs.len()),
        },
    });

    let rising = vs.windows(2).zip(ln_gammas.windows(2)).find_map(|(v, g)| {
        let slope = motility.gamma_prime(v[1]).unwrap_or(f64::NAN);
        let flat = slope == 0.0 && motility.gamma_unchecked(v[1]) == 0.0;
        (g[1] >= g[0] || !(slope < 0.0 || flat)).then_some((v[1], slope))
    });
    checks.push(Check {
        name: "gamma_decreasing",
        passed: rising.is_none(),
        detail: match rising {
            Some((v, s)) => format!("not strictly decreasing near v = {v:e} (gamma' = {s:e})"),
            None => "gamma' < 0 and sampled values strictly decrease".into(),
        },
    });

    let (g_lo, g_hi) = (gammas[0], gammas[gammas.len() - 1]);
    checks.push(Check {
        name: "gamma_decays",
        passed: g_hi < g_lo / 10.0,
        detail: format!("gamma(v_lo) = {g_lo:e}, gamma(v_hi) = {g_hi:e}"),
    });

    let f0 = intake.intake_unchecked(0.0);
    checks.push(Check {
        name: "intake_zero_at_origin",
        passed: f0 == 0.0,
        detail: format!("F(0) = {f0:e}"),
    });
    let ws = log_samples(lo, hi, VALIDATION_SAMPLES);
    let nonpos = ws.iter().find(|&&w| !(intake.intake_unchecked(w) > 0.0));
    checks.push(Check {
        name: "intake_positive",
        passed: nonpos.is_none(),
        detail: match nonpos {
            Some(w) => format!("F({w:e}) = {:e}", intake.intake_unchecked(*w)),
            None => format!("F > 0 at {} samples", ws.len()),
        },
    });
    let lip = intake.lipschitz_bound(hi)?;
    checks.push(Check {
        name: "intake_lipschitz",
        passed: lip.is_finite(),
        detail: format!("L_F on [0, {hi:e}] = {lip:e}"),
    });

    Ok(AssumptionReport {
        range,
        checks,
        uniform_bound: uniform_bound_check(motility, &vs),
    })
}

/// Tries the declared exponent and then `k = 1..=16`. An exponent passes when
/// `v^k γ(v)` is positive at every sample and does not decay over the top
/// decade of the range (its value at `v_hi` is at least half its value at
/// `v_hi / 10`).
fn uniform_bound_check(motility: &MotilitySpec, vs: &[f64]) -> UniformBoundCheck {
    let declared = motility.declared_uniform_bound();
    let hi = vs[vs.len() - 1];
    let weighted = |k: f64, v: f64| {
        let g = motility.gamma_unchecked(v);
        if g == 0.0 {
            0.0
        } else {
            (k * v.ln() + g.ln()).exp()
        }
    };

    let mut candidates: Vec<f64> = Vec::new();
    if let Some(Some(k)) = declared {
        candidates.push(k);
    }
    candidates.extend((1..=MAX_WITNESS_EXPONENT).map(f64::from));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut last_inf = 0.0;
    for k in candidates {
        let inf = vs
            .iter()
            .map(|&v| weighted(k, v))
            .fold(f64::INFINITY, f64::min);
        last_inf = inf;
        let top = weighted(k, hi);
        let decade = weighted(k, hi / 10.0);
        if inf > 0.0 && inf.is_finite() && top >= 0.5 * decade {
            return UniformBoundCheck {
                holds: true,
                witness_k: Some(k),
                inf,
                declared,
            };
        }
    }
    UniformBoundCheck {
        holds: false,
        witness_k: None,
        inf: last_inf,
        declared,
    }
}
