//! Arbitrary-precision real arithmetic: the precision contract shared by every
//! other module, Γ at positive real arguments, and decimal-string I/O.
//!
//! Reals are `rug::Float` (MPFR, correctly rounded). Values cross module and
//! process boundaries only as decimal strings.

use std::str::FromStr;
use std::sync::Mutex;

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use thiserror::Error;

/// Minimum number of guard digits between requested and working precision.
pub const MIN_GUARD_DIGITS: u32 = 20;

/// Bits of extra precision used inside special-function kernels.
const KERNEL_GUARD_BITS: u32 = 64;

const BITS_PER_DIGIT: f64 = std::f64::consts::LOG2_10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("cannot parse '{0}' as a real number")]
    Parse(String),
    #[error("invalid precision: working digits {working} < decimal digits {decimal} + {MIN_GUARD_DIGITS}")]
    Precision { decimal: u32, working: u32 },
}

/// Requested output digits and the internal digits all arithmetic is carried at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrecisionContext {
    decimal_digits: u32,
    working_digits: u32,
}

impl PrecisionContext {
    pub fn new(decimal_digits: u32, working_digits: u32) -> Result<Self, NumericsError> {
        if decimal_digits == 0 || working_digits < decimal_digits + MIN_GUARD_DIGITS {
            return Err(NumericsError::Precision {
                decimal: decimal_digits,
                working: working_digits,
            });
        }
        Ok(Self {
            decimal_digits,
            working_digits,
        })
    }

    /// Context with the guard rule `decimal + max(20, ceil(0.15 * n_max))`, where
    /// `n_max` is the largest truncation order the computation will touch.
    pub fn for_order(decimal_digits: u32, n_max: usize) -> Self {
        let decimal_digits = decimal_digits.max(1);
        let guard = MIN_GUARD_DIGITS.max((0.15 * n_max as f64).ceil() as u32);
        Self {
            decimal_digits,
            working_digits: decimal_digits + guard,
        }
    }

    pub fn decimal_digits(&self) -> u32 {
        self.decimal_digits
    }

    pub fn working_digits(&self) -> u32 {
        self.working_digits
    }

    /// MPFR precision in bits matching `working_digits`.
    pub fn bits(&self) -> u32 {
        digits_to_bits(self.working_digits)
    }

    pub fn real<T>(&self, value: T) -> Float
    where
        Float: rug::Assign<T>,
    {
        Float::with_val(self.bits(), value)
    }

    pub fn zero(&self) -> Float {
        Float::new(self.bits())
    }

    pub fn parse(&self, text: &str) -> Result<Float, NumericsError> {
        parse_real(text, self.bits())
    }

    /// Relative tolerance `10^(-working_digits + 5)` promised by the special functions.
    pub fn tolerance(&self) -> Float {
        let exp = -(self.working_digits as i32) + 5;
        Float::with_val(self.bits(), 10).pow(exp)
    }
}

pub fn digits_to_bits(digits: u32) -> u32 {
    (digits as f64 * BITS_PER_DIGIT).ceil() as u32 + 8
}

/// Parses a decimal (`-0.1875`, `1.5e-3`) or rational (`-3/16`) string at `bits` precision.
pub fn parse_real(text: &str, bits: u32) -> Result<Float, NumericsError> {
    let trimmed = text.trim();
    let cleaned = trimmed.strip_prefix('+').unwrap_or(trimmed);
    if cleaned.contains('/') {
        let q = Rational::from_str(cleaned).map_err(|_| NumericsError::Parse(text.to_string()))?;
        return Ok(Float::with_val(bits, &q));
    }
    let parsed = Float::parse(cleaned).map_err(|_| NumericsError::Parse(text.to_string()))?;
    let value = Float::with_val(bits, parsed);
    if !value.is_finite() {
        return Err(NumericsError::Parse(text.to_string()));
    }
    Ok(value)
}

/// `n!` computed exactly as an integer and rounded once to the context precision.
pub fn factorial(n: u32, ctx: &PrecisionContext) -> Float {
    let exact = Integer::from(Integer::factorial(n));
    Float::with_val(ctx.bits(), &exact)
}

/// Γ(z) for real z > 0 with relative error below `10^(-working_digits + 5)`.
///
/// Integer arguments go through the exact factorial. Otherwise the argument is
/// shifted up by the recurrence until the Stirling series for ln Γ converges
/// to the working precision, using exact Bernoulli numbers.
pub fn gamma_pos_real(z: &Float, ctx: &PrecisionContext) -> Result<Float, NumericsError> {
    if z.is_nan() || *z <= 0 {
        return Err(NumericsError::Domain(format!(
            "gamma requires a positive argument, got {}",
            format_sig(z, 10)
        )));
    }
    if z.is_integer() && *z <= 10_000 {
        let n = z.to_u32_saturating().unwrap_or(1);
        return Ok(factorial(n - 1, ctx));
    }
    let prec = ctx.bits() + KERNEL_GUARD_BITS;
    let z = Float::with_val(prec, z);
    let target_digits = ctx.working_digits() as f64 + 10.0;

    // Shift so that the asymptotic series is well inside its useful range.
    let threshold = target_digits.max(20.0);
    let zf = z.to_f64();
    let shift = if zf < threshold {
        (threshold - zf).ceil() as u32
    } else {
        0
    };
    let mut product = Float::with_val(prec, 1);
    for i in 0..shift {
        product *= Float::with_val(prec, &z + i);
    }
    let w = Float::with_val(prec, &z + shift);
    let ln_gamma_w = stirling_ln_gamma(&w, prec);
    let mut result = ln_gamma_w.exp();
    result /= product;
    Ok(Float::with_val(ctx.bits(), result))
}

fn stirling_ln_gamma(w: &Float, prec: u32) -> Float {
    let half = Float::with_val(prec, 0.5);
    let ln_w = Float::with_val(prec, w.ln_ref());
    let two_pi = Float::with_val(prec, Constant::Pi) * 2u32;
    let mut sum = Float::with_val(prec, w - &half) * &ln_w;
    sum -= w;
    sum += Float::with_val(prec, two_pi.ln()) * &half;

    let eps = Float::with_val(prec, 1) >> (prec as i32);
    let w2 = Float::with_val(prec, w * w);
    let mut w_pow = Float::with_val(prec, w);
    let mut k = 1usize;
    loop {
        let b = bernoulli_even(k);
        let denom = (2 * k) as u64 * (2 * k - 1) as u64;
        let mut term = Float::with_val(prec, &b);
        term /= denom;
        term /= &w_pow;
        sum += &term;
        if term.abs() < Float::with_val(prec, sum.abs_ref()) * &eps || k > 4000 {
            break;
        }
        w_pow *= &w2;
        k += 1;
    }
    sum
}

static BERNOULLI: Mutex<Vec<Rational>> = Mutex::new(Vec::new());

/// Exact B_{2k} (k ≥ 1), memoized, from Σ_{j=0}^{m} C(m+1, j) B_j = 0.
fn bernoulli_even(k: usize) -> Rational {
    let mut cache = BERNOULLI.lock().unwrap_or_else(|e| e.into_inner());
    // cache holds B_0..B_m for all m computed so far (odd ones are zero past B_1)
    let m_needed = 2 * k;
    if cache.is_empty() {
        cache.push(Rational::from(1));
        cache.push(Rational::from((-1, 2)));
    }
    while cache.len() <= m_needed {
        let m = cache.len();
        if m % 2 == 1 {
            cache.push(Rational::new());
            continue;
        }
        let mut acc = Rational::new();
        let mut binom = Integer::from(1); // C(m+1, 0)
        for (j, b) in cache.iter().enumerate() {
            if j > 0 {
                binom *= (m + 1 - j + 1) as u64;
                binom /= j as u64;
            }
            if *b != 0 {
                acc += Rational::from(&binom * b.clone());
            }
        }
        acc /= (m + 1) as u64;
        cache.push(-acc);
    }
    cache[m_needed].clone()
}

/// Formats `x` with `digits` significant digits, positional notation for
/// moderate exponents and `d.ddde±N` otherwise. Deterministic and
/// platform-independent.
pub fn format_sig(x: &Float, digits: usize) -> String {
    let digits = digits.max(1);
    if x.is_zero() {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let (negative, mantissa, exp) = x.to_sign_string_exp(10, Some(digits));
    // value = 0.mantissa * 10^exp
    let exp = exp.unwrap_or(0);
    let sign = if negative { "-" } else { "" };
    let body = if (-25..=40).contains(&exp) {
        if exp <= 0 {
            format!("0.{}{}", "0".repeat((-exp) as usize), mantissa)
        } else if (exp as usize) >= mantissa.len() {
            format!("{}{}", mantissa, "0".repeat(exp as usize - mantissa.len()))
        } else {
            let (int_part, frac_part) = mantissa.split_at(exp as usize);
            format!("{int_part}.{frac_part}")
        }
    } else {
        let (lead, rest) = mantissa.split_at(1);
        if rest.is_empty() {
            format!("{lead}e{}", exp - 1)
        } else {
            format!("{lead}.{rest}e{}", exp - 1)
        }
    };
    format!("{sign}{body}")
}

/// The first `digits` significant decimal digits of `x` (no sign, no point),
/// truncated rather than rounded. Used for digit-prefix comparisons.
pub fn significant_prefix(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".repeat(digits);
    }
    // Over-render then truncate so rounding never carries into the prefix.
    let (_, mantissa, _) = x.to_sign_string_exp(10, Some(digits + 12));
    mantissa.chars().take(digits).collect()
}

/// Number of leading significant digits on which `a` and `b` agree, measured as
/// `-log10(|a-b| / max(|a|,|b|))`, capped at the precision of the inputs.
pub fn agreeing_digits(a: &Float, b: &Float) -> f64 {
    let prec = a.prec().max(b.prec());
    let diff = Float::with_val(prec, a - b).abs();
    let scale = Float::with_val(prec, a.abs_ref()).max(&Float::with_val(prec, b.abs_ref()));
    let cap = prec as f64 / BITS_PER_DIGIT;
    if diff.is_zero() {
        return cap;
    }
    if scale.is_zero() {
        return 0.0;
    }
    let rel = Float::with_val(prec, diff / scale);
    (-rel.log10().to_f64()).min(cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(40, 70).unwrap()
    }

    #[test]
    fn precision_contract_rejects_thin_guard() {
        assert!(PrecisionContext::new(30, 49).is_err());
        assert!(PrecisionContext::new(30, 50).is_ok());
        let c = PrecisionContext::for_order(30, 300);
        assert_eq!(c.working_digits(), 30 + 45);
        assert_eq!(PrecisionContext::for_order(30, 20).working_digits(), 50);
    }

    #[test]
    fn factorial_small_values() {
        let c = ctx();
        assert_eq!(factorial(0, &c), 1);
        assert_eq!(factorial(5, &c), 120);
        assert_eq!(factorial(10, &c), 3_628_800);
    }

    #[test]
    fn gamma_known_values() {
        let c = ctx();
        assert_eq!(gamma_pos_real(&c.real(4), &c).unwrap(), 6);
        assert_eq!(gamma_pos_real(&c.real(1), &c).unwrap(), 1);
        let half = gamma_pos_real(&c.real(0.5), &c).unwrap();
        let sqrt_pi = Float::with_val(c.bits(), Constant::Pi).sqrt();
        assert!(agreeing_digits(&half, &sqrt_pi) > 65.0);
        assert!(format_sig(&half, 32).starts_with("1.7724538509055160272981674833411"));
    }

    #[test]
    fn gamma_rejects_non_positive() {
        let c = ctx();
        assert!(matches!(gamma_pos_real(&c.real(0), &c), Err(NumericsError::Domain(_))));
        assert!(gamma_pos_real(&c.real(-1.5), &c).is_err());
    }

    #[test]
    fn bernoulli_numbers() {
        assert_eq!(bernoulli_even(1), Rational::from((1, 6)));
        assert_eq!(bernoulli_even(2), Rational::from((-1, 30)));
        assert_eq!(bernoulli_even(6), Rational::from((691, -2730)));
    }

    #[test]
    fn formatting() {
        let c = ctx();
        assert_eq!(format_sig(&c.parse("-3/16").unwrap(), 6), "-0.187500");
        assert_eq!(format_sig(&c.real(120), 3), "120");
        assert_eq!(format_sig(&c.real(1234.5), 5), "1234.5");
        assert_eq!(format_sig(&c.parse("1e-40").unwrap(), 3), "1.00e-40");
        assert_eq!(format_sig(&c.zero(), 3), "0");
        let x = c.parse("0.019360437202459504192").unwrap();
        assert_eq!(significant_prefix(&x, 6), "193604");
    }

    #[test]
    fn parsing() {
        let c = ctx();
        assert_eq!(c.parse("-0.1875").unwrap(), c.parse("-3/16").unwrap());
        assert_eq!(c.parse("+4").unwrap(), 4);
        assert!(c.parse("abc").is_err());
        assert!(c.parse("1/0").is_err());
    }
}
