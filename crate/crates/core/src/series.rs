//! Truncated power series W(x) = Σ_{n≥1} a_n x^{2n} of the log-wavefunction
//! Ψ = exp(W) for −Ψ″ + ρx²Ψ + g x^{2M}Ψ = EΨ, and the map from coefficients
//! to (E, ρ, c).
//!
//! Substituting Ψ = exp(W) gives W″ + (W′)² = ρx² + g x^{2M} − E. Matching the
//! x^{2n} coefficient yields
//!
//! ```text
//! 2(n+1)(2n+1) a_{n+1} + Σ_{m=1}^{n} 4m(n−m+1) a_m a_{n−m+1} = [n=1]ρ + [n=M]g − [n=0]E
//! ```
//!
//! Two parametrizations are supported. In [`Parametrization::Scaled`] the
//! variable is rescaled x → c·x so that a₁ = k·a₂ with k = ±4, a₂ is fixed and
//! a_{M+1} is the free coefficient; E, ρ and c follow from the x⁰, x² and x^{2M}
//! equations. In [`Parametrization::Direct`] (ρ, g) are fixed, c = 1 and the
//! energy is the free parameter.

use std::fmt;
use std::str::FromStr;

use rug::{Assign, Float};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{format_sig, PrecisionContext};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("scaling-degenerate: c^(2M+2)·g = {0} is not positive, so c is not real")]
    ScalingDegenerate(String),
}

/// Sign of k = a₁/a₂ in the scaled parametrization; |k| is always 4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KSign {
    Plus,
    Minus,
}

impl KSign {
    pub fn value(self) -> i32 {
        match self {
            KSign::Plus => 4,
            KSign::Minus => -4,
        }
    }
}

impl fmt::Display for KSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSign::Plus => write!(f, "+4"),
            KSign::Minus => write!(f, "-4"),
        }
    }
}

impl FromStr for KSign {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "4" | "+4" | "+" => Ok(KSign::Plus),
            "-4" | "-" => Ok(KSign::Minus),
            other => Err(SeriesError::InvalidSpec(format!(
                "k must be +4 or -4, got '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Parametrization {
    /// Rescaled variable with a₁ = k·a₂; the free parameter is a_{M+1}.
    Scaled { k: KSign, a2: Float },
    /// Fixed ρ (and the problem's g); the free parameter is E.
    Direct { rho: Float },
}

impl Parametrization {
    pub fn name(&self) -> &'static str {
        match self {
            Parametrization::Scaled { .. } => "scaled",
            Parametrization::Direct { .. } => "direct",
        }
    }
}

/// The potential and how its series is parametrized.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    /// Half the anharmonic power: the potential term is g·x^{2M}.
    pub m: u32,
    pub g: Float,
    pub mode: Parametrization,
    /// Truncation order N: W keeps a₁..a_N.
    pub order: usize,
}

impl ProblemSpec {
    pub fn scaled(m: u32, k: KSign, a2: Float, order: usize) -> Self {
        let g = Float::with_val(a2.prec(), 1);
        Self {
            m,
            g,
            mode: Parametrization::Scaled { k, a2 },
            order,
        }
    }

    pub fn direct(m: u32, g: Float, rho: Float, order: usize) -> Self {
        Self {
            m,
            g,
            mode: Parametrization::Direct { rho },
            order,
        }
    }

    pub fn with_order(&self, order: usize) -> Self {
        Self {
            order,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.m < 2 {
            return Err(SeriesError::InvalidSpec(format!("M must be ≥ 2, got {}", self.m)));
        }
        if self.order < self.m as usize + 2 {
            return Err(SeriesError::InvalidSpec(format!(
                "truncation order N={} must be ≥ M+2={}",
                self.order,
                self.m + 2
            )));
        }
        if !(self.g.is_finite() && self.g > 0) {
            return Err(SeriesError::InvalidSpec("g must be positive".into()));
        }
        match &self.mode {
            Parametrization::Scaled { a2, .. } => {
                if a2.is_zero() || !a2.is_finite() {
                    return Err(SeriesError::InvalidSpec(
                        "scaled mode needs a finite, non-zero a2".into(),
                    ));
                }
            }
            Parametrization::Direct { rho } => {
                if !rho.is_finite() {
                    return Err(SeriesError::InvalidSpec("rho must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// Coefficients a₁..a_N of W together with the physical parameters they encode.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSolution {
    pub m: u32,
    /// `a[i]` is a_{i+1}.
    pub a: Vec<Float>,
    /// Energy in the original variable.
    pub energy: Float,
    pub rho: Float,
    /// Rescaling factor (x_original = c · x_series); 1 in direct mode.
    pub c: Float,
    pub g: Float,
    /// Coupling seen by the series variable, c^{2M+2}·g.
    pub g_eff: Float,
    /// E·c², the energy seen by the series variable.
    pub energy_eff: Float,
    /// ρ·c⁴.
    pub rho_eff: Float,
}

impl SeriesSolution {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// a_n for 1-based n.
    pub fn coeff(&self, n: usize) -> &Float {
        &self.a[n - 1]
    }

    /// W at a point of the series variable.
    pub fn log_psi(&self, x: &Float) -> Float {
        let prec = self.a[0].prec();
        let x2 = Float::with_val(prec, x * x);
        // Horner in x²
        let mut acc = Float::new(prec);
        for a in self.a.iter().rev() {
            acc *= &x2;
            acc += a;
        }
        acc * x2
    }

    /// CSV with columns `n,a_n`.
    pub fn coefficients_csv(&self, digits: usize) -> String {
        let mut out = String::from("n,a_n\n");
        for (i, a) in self.a.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, format_sig(a, digits)));
        }
        out
    }
}

/// Σ_{m=1}^{n} 4m(n−m+1) a_m a_{n−m+1}, with `a[i] = a_{i+1}`.
fn quadratic_term(a: &[Float], n: usize, prec: u32) -> Float {
    let mut sum = Float::new(prec);
    let mut prod = Float::new(prec);
    let mut lo = 1;
    let mut hi = n;
    // pair (m, n−m+1) with its mirror
    while lo < hi {
        prod.assign(&a[lo - 1] * &a[hi - 1]);
        prod *= 8 * (lo * hi) as u64;
        sum += &prod;
        lo += 1;
        hi -= 1;
    }
    if lo == hi {
        prod.assign(&a[lo - 1] * &a[lo - 1]);
        prod *= 4 * (lo * lo) as u64;
        sum += &prod;
    }
    sum
}

/// Generates a₁..a_N for `spec`. `free` is a_{M+1} in scaled mode and E in
/// direct mode.
pub fn ground_coefficients(
    spec: &ProblemSpec,
    free: &Float,
    ctx: &PrecisionContext,
) -> Result<SeriesSolution, SeriesError> {
    spec.validate()?;
    let prec = ctx.bits();
    let m = spec.m as usize;
    let order = spec.order;
    let g = Float::with_val(prec, &spec.g);
    let mut a: Vec<Float> = Vec::with_capacity(order);

    let mut g_eff = Float::with_val(prec, &g);
    let rho_eff;
    let energy_eff;

    match &spec.mode {
        Parametrization::Scaled { k, a2 } => {
            let a2 = Float::with_val(prec, a2);
            let a1 = Float::with_val(prec, &a2 * k.value());
            rho_eff = Float::with_val(prec, &a1 * &a1) * 4u32 + Float::with_val(prec, &a2 * 12u32);
            energy_eff = Float::with_val(prec, &a1 * -2i32);
            a.push(a1);
            a.push(a2);
            for n in 2..order {
                let q = quadratic_term(&a, n, prec);
                if n == m {
                    let next = Float::with_val(prec, free);
                    g_eff = Float::with_val(prec, &next * (2 * (n + 1) * (2 * n + 1)) as u64) + q;
                    a.push(next);
                } else {
                    a.push(-q / (2 * (n + 1) * (2 * n + 1)) as u64);
                }
            }
        }
        Parametrization::Direct { rho } => {
            let rho = Float::with_val(prec, rho);
            energy_eff = Float::with_val(prec, free);
            a.push(Float::with_val(prec, &energy_eff / -2i32));
            for n in 1..order {
                let mut rhs = Float::new(prec);
                if n == 1 {
                    rhs += &rho;
                }
                if n == m {
                    rhs += &g;
                }
                let q = quadratic_term(&a, n, prec);
                a.push((rhs - q) / (2 * (n + 1) * (2 * n + 1)) as u64);
            }
            rho_eff = rho;
        }
    }

    if g_eff <= 0 {
        return Err(SeriesError::ScalingDegenerate(format_sig(&g_eff, 12)));
    }
    let c = match spec.mode {
        Parametrization::Scaled { .. } => {
            let ratio = Float::with_val(prec, &g_eff / &g);
            ratio.root(2 * spec.m + 2)
        }
        Parametrization::Direct { .. } => Float::with_val(prec, 1),
    };
    let c2 = Float::with_val(prec, &c * &c);
    let c4 = Float::with_val(prec, &c2 * &c2);
    let energy = Float::with_val(prec, &energy_eff / &c2);
    let rho = Float::with_val(prec, &rho_eff / &c4);

    Ok(SeriesSolution {
        m: spec.m,
        a,
        energy,
        rho,
        c,
        g,
        g_eff,
        energy_eff,
        rho_eff,
    })
}

/// Closed-form (E, ρ, c) for the quartic (M = 2) scaled parametrization:
/// E = −2k·a₂/D^{1/3}, ρ = (4k²a₂² + 12a₂)/D^{2/3}, c = D^{1/6}, D = 16k·a₂² + 30a₃.
pub fn physical_params(
    a2: &Float,
    a3: &Float,
    k: KSign,
    ctx: &PrecisionContext,
) -> Result<(Float, Float, Float), SeriesError> {
    let prec = ctx.bits();
    let k = k.value();
    let a2sq = Float::with_val(prec, a2 * a2);
    let denom = Float::with_val(prec, &a2sq * (16 * k)) + Float::with_val(prec, a3 * 30u32);
    if denom <= 0 {
        return Err(SeriesError::ScalingDegenerate(format_sig(&denom, 12)));
    }
    let cube = denom.clone().cbrt();
    let energy = Float::with_val(prec, a2 * (-2 * k)) / &cube;
    let numer = Float::with_val(prec, &a2sq * (4 * k * k)) + Float::with_val(prec, a2 * 12u32);
    let rho = numer / Float::with_val(prec, &cube * &cube);
    let c = denom.root(6);
    Ok((energy, rho, c))
}
