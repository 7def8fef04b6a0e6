//! Catalog and calculus of the convex functions driving the Orlicz geometry.
//!
//! An N-function is a strictly increasing convex `Φ: [0,∞) → [0,∞)` with
//! `Φ(t)/t → 0` at zero and `→ ∞` at infinity. The catalog also carries two
//! linear-growth members that show up as limit cases: the identity `t`
//! (admitted as the p → 1⁺ limit of the power family) and the normalized
//! Huber function (linear tail past its kink). Both are rejected where
//! superlinear growth is required.

use crate::error::{Error, Result};

/// Exponent cap for the `exp` kinds; `exp(700)` is near the top of f64 range.
const MAX_EXP_ARG: f64 = 700.0;

/// Convex function usable inside the univariate transport objective.
///
/// Implemented by [`NFunction`]; tests implement it for custom curves.
pub trait OrliczFunction {
    fn eval(&self, t: f64) -> f64;
    fn deriv(&self, t: f64) -> f64;
    fn deriv2(&self, t: f64) -> f64;

    /// Φ(t), Φ′(t), Φ″(t) together; the solver's Newton loop calls this
    /// once per edge, so shared transcendentals are worth fusing.
    fn eval_all(&self, t: f64) -> (f64, f64, f64) {
        (self.eval(t), self.deriv(t), self.deriv2(t))
    }
}

/// A member of the convex-function catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum NFunction {
    /// `t^p`, `p > 1`.
    Power { p: f64 },
    /// `(p-1)^(p-1) / p^p · t^p`, `p > 1`; the scaling that collapses the
    /// transport objective to a closed form.
    PowerScaled { p: f64 },
    /// `t^p / p`, `p > 1`; the classic self-dual-at-2 conjugate family.
    PowerOverP { p: f64 },
    /// `exp(t) - t - 1`.
    ExpMinus,
    /// `exp(t^p) - 1`, `p > 1`.
    ExpPower { p: f64 },
    /// `(1+t)·ln(1+t) - t`.
    LogEntropy,
    /// Normalized Huber function with kink parameter `delta > 0`.
    Huber { delta: f64 },
    /// `t`; not an N-function (linear growth), kept as the p → 1⁺ limit.
    Linear,
}

impl NFunction {
    pub fn power(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(NFunction::Power { p })
    }

    pub fn power_scaled(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(NFunction::PowerScaled { p })
    }

    pub fn power_over_p(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(NFunction::PowerOverP { p })
    }

    pub fn exp_power(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(NFunction::ExpPower { p })
    }

    pub fn huber(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("huber delta must be positive, got {delta}")));
        }
        Ok(NFunction::Huber { delta })
    }

    /// True for every kind that outgrows any linear function, i.e. the
    /// genuine N-functions. `Linear` and `Huber` have linear tails.
    pub fn has_superlinear_growth(&self) -> bool {
        !matches!(self, NFunction::Linear | NFunction::Huber { .. })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, NFunction::Linear)
    }

    /// Φ(t) for t ≥ 0. Negative inputs are clamped to 0; the exponent of the
    /// `exp` kinds saturates at 700 so the result stays finite and monotone.
    /// Use [`NFunction::try_eval`] for checked evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            NFunction::Power { p } => pow_p(t, p),
            NFunction::PowerScaled { p } => scaled_coeff(p) * pow_p(t, p),
            NFunction::PowerOverP { p } => pow_p(t, p) / p,
            NFunction::ExpMinus => {
                let t = t.min(MAX_EXP_ARG);
                t.exp_m1() - t
            }
            NFunction::ExpPower { p } => {
                let t = t.min(MAX_EXP_ARG.powf(1.0 / p));
                pow_p(t, p).exp_m1()
            }
            NFunction::LogEntropy => (1.0 + t) * t.ln_1p() - t,
            NFunction::Huber { delta } => {
                let c = huber_unit(delta);
                if t <= 1.0 {
                    huber_raw(c * t, delta)
                } else {
                    let s = huber_slope(delta);
                    s * t - (s - 1.0)
                }
            }
            NFunction::Linear => t,
        }
    }

    /// Checked evaluation: rejects negative arguments, and arguments past the
    /// exponent saturation point of the `exp` kinds.
    pub fn try_eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::invalid(format!("negative argument {t}")));
        }
        match *self {
            NFunction::ExpMinus if t > MAX_EXP_ARG => {
                Err(Error::Range(format!("exp argument {t} exceeds {MAX_EXP_ARG}")))
            }
            NFunction::ExpPower { p } if t.powf(p) > MAX_EXP_ARG => Err(Error::Range(format!(
                "exp argument {}^{p} exceeds {MAX_EXP_ARG}",
                t
            ))),
            _ => Ok(self.eval(t)),
        }
    }

    /// First derivative Φ′(t); left derivative at kinks of the Huber kind.
    pub fn deriv(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            NFunction::Power { p } => p * pow_p(t, p - 1.0),
            NFunction::PowerScaled { p } => scaled_coeff(p) * p * pow_p(t, p - 1.0),
            NFunction::PowerOverP { p } => pow_p(t, p - 1.0),
            NFunction::ExpMinus => t.min(MAX_EXP_ARG).exp_m1(),
            NFunction::ExpPower { p } => {
                let t = t.min(MAX_EXP_ARG.powf(1.0 / p));
                p * pow_p(t, p - 1.0) * pow_p(t, p).exp()
            }
            NFunction::LogEntropy => t.ln_1p(),
            NFunction::Huber { delta } => {
                let c = huber_unit(delta);
                if t <= 1.0 {
                    let s = c * t;
                    if s <= delta {
                        c * s
                    } else {
                        c * delta
                    }
                } else {
                    huber_slope(delta)
                }
            }
            NFunction::Linear => 1.0,
        }
    }

    /// Second derivative Φ″(t), one-sided (from the left) at kinks.
    pub fn deriv2(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            NFunction::Power { p } => p * (p - 1.0) * t.powf(p - 2.0),
            NFunction::PowerScaled { p } => scaled_coeff(p) * p * (p - 1.0) * t.powf(p - 2.0),
            NFunction::PowerOverP { p } => (p - 1.0) * t.powf(p - 2.0),
            NFunction::ExpMinus => t.min(MAX_EXP_ARG).exp(),
            NFunction::ExpPower { p } => {
                let t = t.min(MAX_EXP_ARG.powf(1.0 / p));
                let e = t.powf(p).exp();
                (p * (p - 1.0) * t.powf(p - 2.0) + p * p * t.powf(2.0 * p - 2.0)) * e
            }
            NFunction::LogEntropy => 1.0 / (1.0 + t),
            NFunction::Huber { delta } => {
                let c = huber_unit(delta);
                if t <= 1.0 && c * t <= delta {
                    c * c
                } else {
                    0.0
                }
            }
            NFunction::Linear => 0.0,
        }
    }

    /// Both derivatives at once.
    pub fn derivatives(&self, t: f64) -> Result<(f64, f64)> {
        if t < 0.0 {
            return Err(Error::invalid(format!("negative argument {t}")));
        }
        Ok((self.deriv(t), self.deriv2(t)))
    }

    /// The unique t ≥ 0 with Φ(t) = y, closed form where available, else
    /// safeguarded Newton to 1e-12 relative.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(Error::invalid(format!("inverse of negative value {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match *self {
            NFunction::Power { p } => Ok(y.powf(1.0 / p)),
            NFunction::PowerScaled { p } => Ok((y / scaled_coeff(p)).powf(1.0 / p)),
            NFunction::PowerOverP { p } => Ok((p * y).powf(1.0 / p)),
            NFunction::ExpPower { p } => Ok(y.ln_1p().powf(1.0 / p)),
            NFunction::Linear => Ok(y),
            NFunction::Huber { delta } => {
                let c = huber_unit(delta);
                if y <= 1.0 {
                    if y <= delta * delta / 2.0 {
                        Ok((2.0 * y).sqrt() / c)
                    } else {
                        Ok((y / delta + delta / 2.0) / c)
                    }
                } else {
                    let s = huber_slope(delta);
                    Ok((y + s - 1.0) / s)
                }
            }
            NFunction::ExpMinus | NFunction::LogEntropy => {
                root_increasing(&|t| self.eval(t), &|t| self.deriv(t), y, 1.0)
            }
        }
    }

    /// The complementary function Ψ(t) = sup_{a ≥ 0} (a·t − Φ(a)).
    ///
    /// Returns the analytic partner where one exists; `ExpPower` gets a
    /// numeric complement evaluated through the stationarity root
    /// `Φ′(a) = t`. Linear-growth kinds have complements that are infinite
    /// past a finite threshold and are rejected; callers wanting the `t`
    /// limit case should use the dedicated first-order fast paths instead.
    pub fn complementary(&self) -> Result<ComplementaryPair> {
        let psi = match *self {
            NFunction::Power { p } => {
                Complement::Analytic(NFunction::PowerScaled { p: conjugate(p) })
            }
            NFunction::PowerScaled { p } => {
                Complement::Analytic(NFunction::Power { p: conjugate(p) })
            }
            NFunction::PowerOverP { p } => {
                Complement::Analytic(NFunction::PowerOverP { p: conjugate(p) })
            }
            NFunction::ExpMinus => Complement::Analytic(NFunction::LogEntropy),
            NFunction::LogEntropy => Complement::Analytic(NFunction::ExpMinus),
            NFunction::ExpPower { .. } => Complement::Numeric(NumericComplement {
                phi: self.clone(),
            }),
            NFunction::Linear | NFunction::Huber { .. } => {
                return Err(Error::invalid(
                    "complement of a linear-growth function is not finite-valued; \
                     use the first-order fast paths for the limit case",
                ));
            }
        };
        Ok(ComplementaryPair {
            phi: self.clone(),
            psi,
        })
    }

    /// Parse a spec string: `power:p=2`, `power_scaled:p=2`, `power_over_p:p=2`,
    /// `exp_minus`, `exp_power:p=2`, `log_entropy`, `huber:delta=1`, `linear`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |key: &str| -> Result<f64> {
            let a = arg.ok_or_else(|| Error::invalid(format!("{name} requires {key}=<value>")))?;
            let (k, v) = a
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected {key}=<value>, got {a:?}")))?;
            if k.trim() != key {
                return Err(Error::invalid(format!("expected parameter {key}, got {k:?}")));
            }
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad value for {key}: {e}")))
        };
        match name {
            "power" => NFunction::power(num("p")?),
            "power_scaled" => NFunction::power_scaled(num("p")?),
            "power_over_p" => NFunction::power_over_p(num("p")?),
            "exp_minus" => Ok(NFunction::ExpMinus),
            "exp_power" => NFunction::exp_power(num("p")?),
            "log_entropy" => Ok(NFunction::LogEntropy),
            "huber" => NFunction::huber(if arg.is_some() { num("delta")? } else { 1.0 }),
            "linear" => Ok(NFunction::Linear),
            other => Err(Error::invalid(format!("unknown N-function kind {other:?}"))),
        }
    }

    /// Spec-string rendering; inverse of [`NFunction::parse`].
    pub fn spec_string(&self) -> String {
        match *self {
            NFunction::Power { p } => format!("power:p={p}"),
            NFunction::PowerScaled { p } => format!("power_scaled:p={p}"),
            NFunction::PowerOverP { p } => format!("power_over_p:p={p}"),
            NFunction::ExpMinus => "exp_minus".to_string(),
            NFunction::ExpPower { p } => format!("exp_power:p={p}"),
            NFunction::LogEntropy => "log_entropy".to_string(),
            NFunction::Huber { delta } => format!("huber:delta={delta}"),
            NFunction::Linear => "linear".to_string(),
        }
    }
}

impl std::fmt::Display for NFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.spec_string())
    }
}

impl OrliczFunction for NFunction {
    fn eval(&self, t: f64) -> f64 {
        NFunction::eval(self, t)
    }
    fn deriv(&self, t: f64) -> f64 {
        NFunction::deriv(self, t)
    }
    fn deriv2(&self, t: f64) -> f64 {
        NFunction::deriv2(self, t)
    }

    fn eval_all(&self, t: f64) -> (f64, f64, f64) {
        let t = t.max(0.0);
        match *self {
            NFunction::ExpMinus => {
                let t = t.min(MAX_EXP_ARG);
                let em1 = t.exp_m1();
                // e^t = expm1(t) + 1
                (em1 - t, em1, em1 + 1.0)
            }
            NFunction::ExpPower { p } => {
                let t = t.min(MAX_EXP_ARG.powf(1.0 / p));
                if t == 0.0 {
                    return (0.0, 0.0, self.deriv2(0.0));
                }
                let tp = pow_p(t, p);
                let em1 = tp.exp_m1();
                let e = em1 + 1.0;
                // t^(p-1) = t^p/t, t^(p-2) = t^p/t², t^(2p-2) = (t^p)²/t²
                let d2 = p * tp * (p - 1.0 + p * tp) / (t * t) * e;
                (em1, p * (tp / t) * e, d2)
            }
            NFunction::Power { p } => {
                if t == 0.0 {
                    return (0.0, 0.0, self.deriv2(0.0));
                }
                let tp = pow_p(t, p);
                (tp, p * (tp / t), p * (p - 1.0) * tp / (t * t))
            }
            NFunction::PowerScaled { p } => {
                if t == 0.0 {
                    return (0.0, 0.0, self.deriv2(0.0));
                }
                let c = scaled_coeff(p);
                let tp = pow_p(t, p);
                (c * tp, c * p * (tp / t), c * p * (p - 1.0) * tp / (t * t))
            }
            _ => (self.eval(t), self.deriv(t), self.deriv2(t)),
        }
    }
}

/// `t^p` with the ubiquitous quadratic case kept off the `powf` path.
fn pow_p(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else if p == 1.0 {
        t
    } else {
        t.powf(p)
    }
}

/// An N-function together with its complementary function.
#[derive(Debug, Clone)]
pub struct ComplementaryPair {
    pub phi: NFunction,
    pub psi: Complement,
}

/// Complementary function: a catalog member, or a numeric evaluator when no
/// closed form exists.
#[derive(Debug, Clone)]
pub enum Complement {
    Analytic(NFunction),
    Numeric(NumericComplement),
}

impl Complement {
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Complement::Analytic(nf) => nf.try_eval(t),
            Complement::Numeric(nc) => nc.eval(t),
        }
    }

    /// The analytic partner, if there is one.
    pub fn as_analytic(&self) -> Option<&NFunction> {
        match self {
            Complement::Analytic(nf) => Some(nf),
            Complement::Numeric(_) => None,
        }
    }
}

/// Evaluates Ψ(t) = a*·t − Φ(a*) where a* is the unique root of Φ′(a) = t.
///
/// The root exists and is unique because Φ′ is continuous, strictly
/// increasing from 0, and unbounded for superlinear Φ.
#[derive(Debug, Clone)]
pub struct NumericComplement {
    phi: NFunction,
}

impl NumericComplement {
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::invalid(format!("negative argument {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let a = root_increasing(&|a| self.phi.deriv(a), &|a| self.phi.deriv2(a), t, 1.0)?;
        Ok(a * t - self.phi.eval(a))
    }
}

/// Discrete Luxemburg norm: inf { t > 0 : Σ wᵢ·Φ(|vᵢ|/t) ≤ 1 }, by monotone
/// bisection. Returns 0 when every value is 0.
pub fn luxemburg_norm_discrete(values: &[f64], weights: &[f64], phi: &NFunction) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::invalid(format!(
            "values/weights length mismatch: {} vs {}",
            values.len(),
            weights.len()
        )));
    }
    if values.iter().chain(weights.iter()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite value or weight"));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::invalid("negative weight"));
    }
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if vmax == 0.0 {
        return Ok(0.0);
    }
    let modular = |t: f64| -> f64 {
        values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * phi.eval(v.abs() / t))
            .sum::<f64>()
    };
    // Bracket the feasibility boundary: modular(t) is nonincreasing in t.
    let mut hi = vmax;
    let mut grow = 0;
    while modular(hi) > 1.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 300 {
            return Err(Error::NonConvergence("luxemburg bracket expansion".into()));
        }
    }
    let mut lo = hi / 2.0;
    while modular(lo) <= 1.0 {
        hi = lo;
        lo /= 2.0;
        if lo == 0.0 {
            // feasible all the way down to subnormal t
            return Ok(hi);
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if modular(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("exponent p must satisfy 1 < p < inf, got {p}")));
    }
    Ok(())
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn scaled_coeff(p: f64) -> f64 {
    (p - 1.0).powf(p - 1.0) / p.powf(p)
}

/// Raw Huber function: quadratic up to `delta`, linear after.
fn huber_raw(s: f64, delta: f64) -> f64 {
    if s <= delta {
        0.5 * s * s
    } else {
        delta * (s - 0.5 * delta)
    }
}

/// `f_H⁻¹(1)`: the input scaling that normalizes the Huber function to 1 at 1.
fn huber_unit(delta: f64) -> f64 {
    if delta >= std::f64::consts::SQRT_2 {
        std::f64::consts::SQRT_2
    } else {
        1.0 / delta + delta / 2.0
    }
}

/// Left derivative of the normalized Huber function at 1; slope of its tail.
fn huber_slope(delta: f64) -> f64 {
    let c = huber_unit(delta);
    if c <= delta {
        c * c
    } else {
        c * delta
    }
}

/// Solve f(x) = target for continuous nondecreasing f with f(0) ≤ target,
/// by bracket doubling then Newton with a bisection safeguard.
fn root_increasing(
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64) -> f64,
    target: f64,
    start_hi: f64,
) -> Result<f64> {
    let mut hi = start_hi.max(f64::MIN_POSITIVE);
    let mut grow = 0;
    while f(hi) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 400 {
            return Err(Error::NonConvergence(format!(
                "bracket expansion stalled at x={hi:e} targeting {target:e}"
            )));
        }
    }
    let mut lo = 0.0f64;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if fx == 0.0 || hi - lo <= 1e-12 * hi.max(1e-300) {
            return Ok(x);
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}
