//! Excited states as Ψ_q = P_q·Ψ₀. The prefactor obeys P″ + 2W′P′ + E_q·P = 0,
//! whose power series is fixed by the ground coefficients a_m, a parity, and one
//! tuning parameter: c₂ for even states, τ = −c₃ for odd ones.
//!
//! Everything here lives in the same (possibly rescaled) variable as the ground
//! series, so the excitation energy in physical units is E_q/c².

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rug::{Assign, Float};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::numerics::{format_sig, PrecisionContext};
use crate::resummation::{resum, BorelSeries, CurveConfig, ResummationCurve};
use crate::series::SeriesSolution;
use crate::tuner::{locate_brackets, refine_bracket, CurveProbe, Orientation, TuneConfig, TuneError};

/// Ratio of the last retained term to the leading term that bounds the trusted
/// radius of a truncated series.
pub const RELIABILITY_RATIO: f64 = 1e-10;

/// Grid points used for node counting.
pub const NODE_GRID: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitedError {
    #[error("ground series has order {have}, need at least {need}")]
    GroundTooShort { have: usize, need: usize },
    #[error("inconclusive-node-count: reliability radius {radius} does not reach the turning point {turning}")]
    RadiusTooSmall { radius: String, turning: String },
    #[error("inconclusive-node-count: sign change in the last grid cell at radius {0}")]
    EdgeZero(String),
}

impl ExcitedError {
    pub fn signal(&self) -> &'static str {
        match self {
            ExcitedError::GroundTooShort { .. } => "invalid-request",
            _ => "inconclusive-node-count",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Lowest power of x in P: 0 or 1.
    pub fn offset(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parity::Even => f.write_str("even"),
            Parity::Odd => f.write_str("odd"),
        }
    }
}

impl FromStr for Parity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "even" => Ok(Parity::Even),
            "odd" => Ok(Parity::Odd),
            other => Err(format!("parity must be even or odd, got '{other}'")),
        }
    }
}

/// How a state's level number was assigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LabelSource {
    Nodes,
    Oracle,
}

#[derive(Clone, Debug)]
pub struct ExcitedState {
    pub parity: Parity,
    /// c₀..c_K with the other parity's entries zero.
    pub c: Vec<Float>,
    /// Scan variable: c₂ (even) or −c₃ (odd).
    pub tau: Float,
    /// Excitation energy in the series variable: −2c₂ or −6c₃ − 4a₁.
    pub e_q: Float,
    /// Physical excitation energy e_q/c².
    pub excitation: Float,
    /// Ground plus excitation, physical units.
    pub energy: Float,
    pub nodes: Option<usize>,
    pub q: Option<usize>,
    pub label_source: Option<LabelSource>,
    pub alpha_used: f64,
    pub digits: u32,
    pub n_final: usize,
    pub bracket: Option<(Float, Float)>,
    pub orientation: Option<Orientation>,
}

impl ExcitedState {
    /// q_j = c_{2j+p}: the even series in x² left after removing x^p.
    pub fn reduced(&self) -> Vec<Float> {
        self.c.iter().skip(self.parity.offset()).step_by(2).cloned().collect()
    }

    /// P(x) by Horner in x² on the reduced series.
    pub fn prefactor(&self, x: &Float) -> Float {
        let prec = x.prec();
        let x2 = Float::with_val(prec, x * x);
        let mut acc = Float::new(prec);
        for q in self.reduced().iter().rev() {
            acc *= &x2;
            acc += q;
        }
        if self.parity == Parity::Odd {
            acc *= x;
        }
        acc
    }

    pub fn to_json(&self) -> Value {
        let d = self.digits.max(1) as usize;
        json!({
            "parity": self.parity.to_string(),
            "tau": format_sig(&self.tau, d),
            "E_q": format_sig(&self.excitation, d),
            "E_total": format_sig(&self.energy, d),
            "nodes": self.nodes,
            "q": self.q,
            "label_source": self.label_source,
            "digits": self.digits,
            "N": self.n_final,
            "alpha": format!("{:.2}", self.alpha_used),
        })
    }
}

/// Prefactor coefficients through c_{2n+p} for the given parity and τ.
///
/// The x^k equation (k+2)(k+1)c_{k+2} + Σ_{m≥1} 4m·a_m·(k−2m+2)·c_{k−2m+2}
/// + E_q·c_k = 0 fixes E_q at k = p and c_{k+2} for k = p+2, p+4, ….
pub fn prefactor_coefficients(
    ground: &SeriesSolution,
    parity: Parity,
    tau: &Float,
    n: usize,
    ctx: &PrecisionContext,
) -> Result<ExcitedState, ExcitedError> {
    if ground.order() < n.max(1) {
        return Err(ExcitedError::GroundTooShort { have: ground.order(), need: n.max(1) });
    }
    let prec = ctx.bits();
    let p = parity.offset();
    let len = 2 * n + p + 1;
    let mut c = vec![Float::new(prec); len.max(p + 3)];
    let a1 = Float::with_val(prec, &ground.a[0]);
    c[p] = Float::with_val(prec, 1);
    let e_q = match parity {
        Parity::Even => {
            c[2] = Float::with_val(prec, tau);
            Float::with_val(prec, &c[2] * -2i32)
        }
        Parity::Odd => {
            c[3] = Float::with_val(prec, -tau);
            Float::with_val(prec, &c[3] * -6i32) - Float::with_val(prec, &a1 * 4u32)
        }
    };
    let a: Vec<Float> = ground.a.iter().map(|x| Float::with_val(prec, x)).collect();
    let mut term = Float::new(prec);
    let mut k = p + 2;
    while k + 2 < len {
        let mut sum = Float::with_val(prec, &e_q * &c[k]);
        // j = k − 2m + 2 runs over the same parity as k, down to j = p.
        let mut m = 1;
        while 2 * m <= k + 2 - p {
            let j = k + 2 - 2 * m;
            if j > 0 {
                term.assign(&a[m - 1] * &c[j]);
                term *= (4 * m * j) as u64;
                sum += &term;
            }
            m += 1;
        }
        c[k + 2] = -sum / ((k + 2) * (k + 1)) as u64;
        k += 2;
    }
    c.truncate(len);
    let c2 = Float::with_val(prec, &ground.c * &ground.c);
    let excitation = Float::with_val(prec, &e_q / &c2);
    let energy = Float::with_val(prec, &ground.energy) + &excitation;
    Ok(ExcitedState {
        parity,
        c,
        tau: Float::with_val(prec, tau),
        e_q,
        excitation,
        energy,
        nodes: None,
        q: None,
        label_source: None,
        alpha_used: 0.0,
        digits: 0,
        n_final: n,
        bracket: None,
        orientation: None,
    })
}

/// T_N(λ) = Σ_j q_j λ^{2jα}/Γ(2jα+1) over the reduced series.
pub fn resum_prefactor(
    state: &ExcitedState,
    alpha: &Float,
    ctx: &PrecisionContext,
    cfg: &CurveConfig,
) -> Result<ResummationCurve, TuneError> {
    let series = BorelSeries::new(state.reduced(), 0, 0, alpha, ctx)?;
    Ok(resum(&series, cfg))
}

/// Prefactor curves over τ for a fixed ground series.
pub struct ExcitedProbe<'a> {
    pub ground: &'a SeriesSolution,
    pub parity: Parity,
}

impl CurveProbe for ExcitedProbe<'_> {
    fn curve(
        &self,
        param: &Float,
        order: usize,
        alpha: &Float,
        ctx: &PrecisionContext,
        cfg: &CurveConfig,
    ) -> Result<ResummationCurve, TuneError> {
        let state = prefactor_coefficients(self.ground, self.parity, param, order, ctx)
            .map_err(|e| TuneError::Invalid(e.to_string()))?;
        resum_prefactor(&state, alpha, ctx, cfg)
    }
}

/// Tuning defaults for prefactor scans: α starts at 0.6 or lower.
pub fn excited_config(base: &TuneConfig, m: u32) -> TuneConfig {
    let cfg = base.for_m(m);
    TuneConfig { alpha_start: Some(cfg.start_alpha().min(0.6)), ..cfg }
}

/// Finds every flip of the prefactor curve in `scan_range`, bisects each to
/// `target_digits`, and returns the states in increasing τ. `ground` must reach
/// order `cfg.n_cap` and be tuned at least as accurately as the target.
pub fn tune_excited(
    ground: &SeriesSolution,
    parity: Parity,
    scan_range: (&str, &str),
    target_digits: u32,
    cfg: &TuneConfig,
) -> Result<Vec<ExcitedState>, TuneError> {
    cfg.validate()?;
    if ground.order() < cfg.n_cap {
        return Err(TuneError::Invalid(format!(
            "ground series order {} is below N cap {}",
            ground.order(),
            cfg.n_cap
        )));
    }
    let probe = ExcitedProbe { ground, parity };
    // Higher levels only separate once N is large enough, so the scan order is
    // doubled until two successive orders agree on the number of flips.
    let mut order = cfg.first_order();
    let mut previous: Option<usize> = None;
    let scanned = loop {
        let ctx = PrecisionContext::for_order(cfg.decimal_digits(target_digits), order);
        let lo = ctx.parse(scan_range.0)?;
        let hi = ctx.parse(scan_range.1)?;
        let outcome = locate_brackets(&probe, (&lo, &hi), order, cfg, &ctx);
        let count = outcome.as_ref().map(|o| o.brackets.len()).unwrap_or(0);
        if order >= cfg.n_cap || (count > 0 && previous == Some(count)) {
            break outcome?;
        }
        previous = Some(count);
        order = (order * 2).min(cfg.n_cap);
    };
    let refined: Vec<_> = scanned
        .brackets
        .par_iter()
        .map(|(blo, bhi, o)| refine_bracket(&probe, (blo, bhi), *o, scanned.order, scanned.alpha, target_digits, cfg))
        .collect::<Result<_, _>>()?;
    let mut states = Vec::with_capacity(refined.len());
    for r in refined {
        let tau = r.midpoint();
        let mut state = prefactor_coefficients(ground, parity, &tau, r.order, &r.ctx)
            .map_err(|e| TuneError::Invalid(e.to_string()))?;
        state.alpha_used = r.alpha;
        state.digits = r.digits();
        state.bracket = Some((r.lo.clone(), r.hi.clone()));
        state.orientation = Some(r.orientation);
        if let Ok(nodes) = count_nodes(&state, ground, &r.ctx) {
            state.nodes = Some(nodes);
            state.q = Some(nodes);
            state.label_source = Some(LabelSource::Nodes);
        }
        states.push(state);
    }
    Ok(states)
}

/// Largest |x| where the last nonzero retained term of `coeffs` (successive
/// powers `step` apart) stays below RELIABILITY_RATIO of the leading one.
pub fn reliability_radius(coeffs: &[Float], step: usize) -> Option<f64> {
    let lead = coeffs.iter().position(|c| !c.is_zero())?;
    let last = coeffs.iter().rposition(|c| !c.is_zero())?;
    if last == lead {
        return Some(f64::INFINITY);
    }
    let power = ((last - lead) * step) as f64;
    let ratio = (coeffs[lead].to_f64().abs() / coeffs[last].to_f64().abs()).ln();
    Some(((RELIABILITY_RATIO.ln() + ratio) / power).exp())
}

/// Outermost classical turning point of ρy² + g·y^{2M} = E in the series variable.
pub fn turning_point(m: u32, g: f64, rho: f64, energy: f64) -> f64 {
    let v = |y: f64| rho * y * y + g * y.powi(2 * m as i32);
    let mut hi = 1.0;
    while v(hi) < energy {
        hi *= 2.0;
    }
    let mut lo = if rho < 0.0 { (-rho / (m as f64 * g)).powf(1.0 / (2.0 * (m as f64 - 1.0))) } else { 0.0 };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if v(mid) < energy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Real zeros of P_q: twice the sign changes of the reduced series on (0, r],
/// plus one for the zero of an odd state at the origin. Every node of a bound
/// state lies inside the classically allowed region, so the count is
/// conclusive only when r reaches the turning point.
pub fn count_nodes(
    state: &ExcitedState,
    ground: &SeriesSolution,
    ctx: &PrecisionContext,
) -> Result<usize, ExcitedError> {
    let reduced = state.reduced();
    let radius = reliability_radius(&reduced, 2).unwrap_or(f64::INFINITY);
    let total_eff = Float::with_val(ctx.bits(), &ground.energy_eff + &state.e_q).to_f64();
    let turning = turning_point(ground.m, ground.g_eff.to_f64(), ground.rho_eff.to_f64(), total_eff);
    if radius <= turning {
        return Err(ExcitedError::RadiusTooSmall {
            radius: format!("{radius:.6}"),
            turning: format!("{turning:.6}"),
        });
    }
    let reach = radius.min(4.0 * turning.max(1.0));
    let prec = ctx.bits();
    let values: Vec<bool> = (1..=NODE_GRID)
        .into_par_iter()
        .map(|i| {
            let y = Float::with_val(prec, reach * i as f64 / NODE_GRID as f64);
            let y2 = Float::with_val(prec, &y * &y);
            let mut acc = Float::new(prec);
            for q in reduced.iter().rev() {
                acc *= &y2;
                acc += q;
            }
            acc.is_sign_positive()
        })
        .collect();
    let changes: Vec<usize> = values.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(i, _)| i).collect();
    if changes.last() == Some(&(NODE_GRID - 2)) && reach == radius {
        return Err(ExcitedError::EdgeZero(format!("{radius:.6}")));
    }
    Ok(2 * changes.len() + state.parity.offset())
}

/// Labels states with no conclusive node count by the index of the nearest
/// reference eigenvalue.
pub fn assign_levels(states: &mut [ExcitedState], reference: &[Float]) {
    for s in states.iter_mut().filter(|s| s.q.is_none()) {
        let nearest = reference
            .iter()
            .enumerate()
            .map(|(i, e)| (i, Float::with_val(e.prec(), e - &s.energy).abs().to_f64()))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((i, _)) = nearest {
            s.q = Some(i);
            s.label_source = Some(LabelSource::Oracle);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{ground_coefficients, KSign, ProblemSpec};

    fn quartic_ground(ctx: &PrecisionContext, order: usize) -> SeriesSolution {
        let spec = ProblemSpec::scaled(2, KSign::Plus, ctx.parse("-3/16").unwrap(), order);
        let a3 = ctx.parse("0.019360437202459504192019975317212335964255895815").unwrap();
        ground_coefficients(&spec, &a3, ctx).unwrap()
    }

    #[test]
    fn energy_relations_hold_exactly() {
        let ctx = PrecisionContext::for_order(30, 30);
        let ground = quartic_ground(&ctx, 30);
        let tau = ctx.parse("0.37").unwrap();
        let even = prefactor_coefficients(&ground, Parity::Even, &tau, 12, &ctx).unwrap();
        assert_eq!(even.e_q, Float::with_val(ctx.bits(), &even.c[2] * -2i32));
        assert_eq!(even.c[0], 1);
        assert!(even.c.iter().skip(1).step_by(2).all(|c| c.is_zero()));
        let odd = prefactor_coefficients(&ground, Parity::Odd, &tau, 12, &ctx).unwrap();
        let expect = Float::with_val(ctx.bits(), &odd.c[3] * -6i32) - Float::with_val(ctx.bits(), &ground.a[0] * 4u32);
        assert_eq!(odd.e_q, expect);
        assert_eq!(odd.c[3], -tau);
        assert_eq!(odd.c.len(), 2 * 12 + 2);
    }

    #[test]
    fn pure_harmonic_odd_prefactor_is_x() {
        // Only a₁ nonzero: W = a₁x², P = x with E_q = −4a₁ and nothing else.
        let ctx = PrecisionContext::for_order(20, 10);
        let mut ground = quartic_ground(&ctx, 10);
        for a in ground.a.iter_mut().skip(1) {
            *a = Float::new(ctx.bits());
        }
        let state = prefactor_coefficients(&ground, Parity::Odd, &ctx.zero(), 8, &ctx).unwrap();
        assert!(state.c.iter().skip(2).all(|c| c.is_zero()));
        assert_eq!(state.e_q, Float::with_val(ctx.bits(), &ground.a[0] * -4i32));
    }

    #[test]
    fn ground_prefactor_has_no_nodes() {
        let ctx = PrecisionContext::for_order(20, 20);
        let ground = quartic_ground(&ctx, 20);
        let state = prefactor_coefficients(&ground, Parity::Even, &ctx.zero(), 10, &ctx).unwrap();
        assert!(state.c.iter().skip(1).all(|c| c.is_zero()));
        assert_eq!(count_nodes(&state, &ground, &ctx).unwrap(), 0);
    }

    #[test]
    fn short_ground_is_rejected() {
        let ctx = PrecisionContext::for_order(20, 10);
        let ground = quartic_ground(&ctx, 10);
        assert!(matches!(
            prefactor_coefficients(&ground, Parity::Even, &ctx.zero(), 11, &ctx),
            Err(ExcitedError::GroundTooShort { .. })
        ));
    }

    #[test]
    fn turning_point_of_quartic() {
        assert!((turning_point(2, 1.0, 0.0, 16.0) - 2.0).abs() < 1e-12);
        assert!((turning_point(2, 1.0, -2.0, 0.0) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn radius_from_last_term() {
        let c: Vec<Float> = [1.0, 0.5, 1e-6].iter().map(|&v| Float::with_val(64, v)).collect();
        // |1e-6·x⁴| = 1e-10 at x = 0.1.
        let r = reliability_radius(&c, 2).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
    }

    #[test]
    fn parity_parses() {
        assert_eq!("Odd".parse::<Parity>().unwrap(), Parity::Odd);
        assert!("other".parse::<Parity>().is_err());
    }
}
