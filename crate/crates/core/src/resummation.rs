//! Modified Borel partial sums of a truncated even series and the diagnostics
//! used to decide whether the resummed curve flattens.
//!
//! For coefficients b_n (n = n₀..N) of Σ b_n x^{2n}, the partial sum at order N is
//!
//! ```text
//! S_N(λ) = Σ_{n=n₀}^{N} b_n λ^{(2n−p)α} / Γ(2nα+1)
//! ```
//!
//! with pole order p = M+1 for the log-wavefunction and p = 0 for an excited
//! state prefactor. α ∈ (0, 1] enters only through these exponents.

use std::fmt;

use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{format_sig, gamma_pos_real, NumericsError, PrecisionContext};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResummationError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid resummation input: {0}")]
    Invalid(String),
    #[error("plateau unavailable: curve classified {0}")]
    NotFlat(Classification),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Decreasing,
    Flat,
    Increasing,
    Oscillatory,
    Indeterminate,
}

impl Classification {
    /// True for the two labels that fix a side of the tuned value.
    pub fn is_directional(self) -> bool {
        matches!(self, Classification::Decreasing | Classification::Increasing)
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Classification::Decreasing => "Decreasing",
            Classification::Flat => "Flat",
            Classification::Increasing => "Increasing",
            Classification::Oscillatory => "Oscillatory",
            Classification::Indeterminate => "Indeterminate",
        };
        f.write_str(s)
    }
}

/// Thresholds for windowing and classification.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveConfig {
    pub grid_points: usize,
    /// Relative tolerance between orders N and N−1 inside the trusted window.
    pub delta: f64,
    /// Floor for the relative-difference denominator.
    pub floor: f64,
    /// |tail slope| above this is Increasing/Decreasing.
    pub slope_threshold: f64,
    /// More sign changes than this in the second difference is Oscillatory.
    pub oscillation_limit: usize,
    pub min_window_points: usize,
    /// The analysis stops at the first point where |S_N| exceeds this multiple
    /// of the curve's scale over its first `min_window_points` grid points.
    pub blowup_factor: f64,
    /// Upper grid end for the first pass; defaults to N/4.
    pub initial_lambda_max: Option<f64>,
    pub max_refinements: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            grid_points: 128,
            delta: 1e-4,
            floor: 1e-30,
            slope_threshold: 1e-2,
            oscillation_limit: 6,
            min_window_points: 8,
            blowup_factor: 10.0,
            initial_lambda_max: None,
            max_refinements: 24,
        }
    }
}

/// A truncated series prepared for Borel summation: coefficients with their
/// Γ(2nα+1) denominators precomputed.
#[derive(Clone, Debug)]
pub struct BorelSeries {
    coeffs: Vec<Float>,
    first_index: usize,
    pole_order: u32,
    alpha: Float,
    gammas: Vec<Float>,
}

impl BorelSeries {
    /// `coeffs[i]` multiplies x^{2(first_index+i)}.
    pub fn new(
        coeffs: Vec<Float>,
        first_index: usize,
        pole_order: u32,
        alpha: &Float,
        ctx: &PrecisionContext,
    ) -> Result<Self, ResummationError> {
        if coeffs.len() < 2 {
            return Err(ResummationError::Invalid(
                "need at least two terms to compare orders N and N-1".into(),
            ));
        }
        if !(*alpha > 0 && *alpha <= 1) {
            return Err(ResummationError::Invalid(format!(
                "alpha must lie in (0, 1], got {}",
                format_sig(alpha, 6)
            )));
        }
        let bits = ctx.bits();
        let alpha = Float::with_val(bits, alpha);
        let gammas = (0..coeffs.len())
            .map(|i| {
                let n = (first_index + i) as u32;
                let arg = Float::with_val(bits, &alpha * (2 * n)) + 1u32;
                gamma_pos_real(&arg, ctx)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let coeffs = coeffs.into_iter().map(|c| Float::with_val(bits, c)).collect();
        Ok(Self {
            coeffs,
            first_index,
            pole_order,
            alpha,
            gammas,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest index N.
    pub fn last_index(&self) -> usize {
        self.first_index + self.coeffs.len() - 1
    }

    pub fn first_index(&self) -> usize {
        self.first_index
    }

    pub fn pole_order(&self) -> u32 {
        self.pole_order
    }

    pub fn alpha(&self) -> &Float {
        &self.alpha
    }

    /// Returns (S_{N−1}(λ), dropped term), so that S_N = S_{N−1} + dropped.
    fn split_sum(&self, lambda: &Float) -> (Float, Float) {
        let bits = self.alpha.prec();
        // μ = λ^{2α}; term_n = b_n · λ^{-pα} μ^n / Γ(2nα+1)
        let mu = if self.alpha == 1 {
            Float::with_val(bits, lambda * lambda)
        } else {
            Float::with_val(bits, lambda.pow(Float::with_val(bits, &self.alpha * 2u32)))
        };
        let mut power = if self.pole_order == 0 {
            Float::with_val(bits, 1)
        } else if self.alpha == 1 {
            Float::with_val(bits, lambda.pow(-(self.pole_order as i32)))
        } else {
            let e = Float::with_val(bits, &self.alpha * self.pole_order) * -1i32;
            Float::with_val(bits, lambda.pow(&e))
        };
        if self.first_index > 0 {
            power *= Float::with_val(bits, (&mu).pow(self.first_index as u32));
        }
        let mut sum = Float::new(bits);
        let last = self.coeffs.len() - 1;
        let mut dropped = Float::new(bits);
        for (i, (b, gamma)) in self.coeffs.iter().zip(&self.gammas).enumerate() {
            if i > 0 {
                power *= &mu;
            }
            let term = Float::with_val(bits, b * &power) / gamma;
            if i == last {
                dropped = term;
            } else {
                sum += term;
            }
        }
        (sum, dropped)
    }

    /// S_N(λ).
    pub fn partial_sum(&self, lambda: &Float) -> Float {
        let (sum, dropped) = self.split_sum(lambda);
        sum + dropped
    }

    /// The last term b_N λ^{(2N−p)α}/Γ(2Nα+1).
    pub fn dropped_term(&self, lambda: &Float) -> Float {
        self.split_sum(lambda).1
    }

    /// (S_N, S_{N−1}) on a grid.
    pub fn evaluate(&self, grid: &[Float]) -> (Vec<Float>, Vec<Float>) {
        grid.par_iter()
            .map(|lambda| {
                let (prev, dropped) = self.split_sum(lambda);
                (Float::with_val(prev.prec(), &prev + &dropped), prev)
            })
            .unzip()
    }
}

/// Σ_{n=n₀}^{N} b_n λ^{(2n−p)α} / Γ(2nα+1) for a single λ.
pub fn borel_partial_sum(
    coeffs: &[Float],
    first_index: usize,
    pole_order: u32,
    alpha: &Float,
    lambda: &Float,
    ctx: &PrecisionContext,
) -> Result<Float, ResummationError> {
    if *lambda <= 0 {
        return Err(ResummationError::Invalid("lambda must be positive".into()));
    }
    if coeffs.len() == 1 {
        let mut padded = coeffs.to_vec();
        padded.push(ctx.zero());
        let s = BorelSeries::new(padded, first_index, pole_order, alpha, ctx)?;
        return Ok(s.partial_sum(lambda));
    }
    let s = BorelSeries::new(coeffs.to_vec(), first_index, pole_order, alpha, ctx)?;
    Ok(s.partial_sum(lambda))
}

/// Resummed curve over a λ grid with its trusted window and label.
#[derive(Clone, Debug)]
pub struct ResummationCurve {
    pub lambda_grid: Vec<Float>,
    pub values_n: Vec<Float>,
    pub values_nm1: Vec<Float>,
    pub alpha: Float,
    pub pole_order: u32,
    pub order: usize,
    /// Index of the largest trusted grid point.
    pub window: Option<usize>,
    pub classification: Classification,
    /// Relative tail rise (v(λ_max) − v(0.8λ_max)) / (|plateau guess| + floor).
    pub tail_slope: Option<f64>,
    pub plateau: Option<Float>,
}

impl ResummationCurve {
    pub fn window_max(&self) -> Option<&Float> {
        self.window.map(|i| &self.lambda_grid[i])
    }

    /// CSV with columns `lambda,L_N,L_N-1`.
    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("lambda,L_N,L_N-1\n");
        for ((l, v), w) in self.lambda_grid.iter().zip(&self.values_n).zip(&self.values_nm1) {
            out.push_str(&format!(
                "{},{},{}\n",
                format_sig(l, digits),
                format_sig(v, digits),
                format_sig(w, digits)
            ));
        }
        out
    }
}

fn linear_grid(lambda_max: &Float, points: usize) -> Vec<Float> {
    (1..=points)
        .map(|i| Float::with_val(lambda_max.prec(), lambda_max * i as u32) / points as u32)
        .collect()
}

/// Largest grid index where |S_N − S_{N−1}| / max(|S_N|, floor) < delta.
pub fn validity_window(
    values_n: &[Float],
    values_nm1: &[Float],
    delta: f64,
    floor: f64,
) -> Option<usize> {
    values_n
        .iter()
        .zip(values_nm1)
        .enumerate()
        .rev()
        .find(|(_, (a, b))| {
            let prec = a.prec();
            let diff = Float::with_val(prec, *a - *b).abs();
            let scale = Float::with_val(prec, a.abs_ref()).max(&Float::with_val(prec, floor));
            diff < Float::with_val(prec, scale * delta)
        })
        .map(|(i, _)| i)
}

fn tail_start(grid: &[Float], window: usize) -> usize {
    let cut = Float::with_val(grid[window].prec(), &grid[window] * 0.8f64);
    grid[..=window]
        .iter()
        .position(|l| *l >= cut)
        .unwrap_or(window)
}

fn mean(values: &[Float]) -> Float {
    let prec = values[0].prec();
    let mut acc = Float::new(prec);
    for v in values {
        acc += v;
    }
    acc / values.len() as u32
}

/// Number of sign changes of the discrete second difference inside the window,
/// ignoring entries below `rel_floor` times the largest one.
pub fn second_difference_sign_changes(values: &[Float], rel_floor: f64) -> usize {
    if values.len() < 3 {
        return 0;
    }
    let prec = values[0].prec();
    let d2: Vec<Float> = values
        .windows(3)
        .map(|w| Float::with_val(prec, &w[2] - Float::with_val(prec, &w[1] * 2u32)) + &w[0])
        .collect();
    let largest = d2
        .iter()
        .map(|d| Float::with_val(prec, d.abs_ref()))
        .fold(Float::new(prec), |m, d| m.max(&d));
    let cutoff = largest * rel_floor;
    let mut changes = 0;
    let mut last_sign: Option<bool> = None;
    for d in &d2 {
        if Float::with_val(prec, d.abs_ref()) <= cutoff {
            continue;
        }
        let sign = d.is_sign_positive();
        if let Some(prev) = last_sign {
            if prev != sign {
                changes += 1;
            }
        }
        last_sign = Some(sign);
    }
    changes
}

/// Relative tail rise of the curve inside `window`, normalized by the tail mean.
pub fn tail_slope(grid: &[Float], values: &[Float], window: usize, floor: f64) -> f64 {
    let start = tail_start(grid, window);
    let guess = mean(&values[start..=window]);
    let prec = guess.prec();
    let rise = Float::with_val(prec, &values[window] - &values[start]);
    let norm = Float::with_val(prec, guess.abs_ref()) + floor;
    (rise / norm).to_f64()
}

/// End of the analysed part of the window: the trusted window cut at the first
/// point where the curve has blown up past `blowup_factor` times its scale near
/// the origin.
///
/// A mistuned curve can grow with an oscillating envelope, so only its first
/// departure from flatness carries the sign that locates the tuned value.
pub fn analysis_end(values: &[Float], window: usize, cfg: &CurveConfig) -> usize {
    let prec = values[0].prec();
    let early = cfg.min_window_points.min(window + 1);
    let scale = values[..early]
        .iter()
        .map(|v| Float::with_val(prec, v.abs_ref()))
        .fold(Float::with_val(prec, cfg.floor), |m, v| m.max(&v));
    let limit = scale * cfg.blowup_factor;
    values[..=window]
        .iter()
        .position(|v| Float::with_val(prec, v.abs_ref()) > limit)
        .unwrap_or(window)
}

/// Labels the curve from its behaviour inside the trusted window.
pub fn classify_curve(
    grid: &[Float],
    values: &[Float],
    window: Option<usize>,
    cfg: &CurveConfig,
) -> (Classification, Option<f64>) {
    let Some(w) = window else {
        return (Classification::Indeterminate, None);
    };
    if w + 1 < cfg.min_window_points {
        return (Classification::Indeterminate, None);
    }
    let end = analysis_end(values, w, cfg).max(1);
    let slope = tail_slope(grid, values, end, cfg.floor);
    if end + 1 >= cfg.min_window_points
        && second_difference_sign_changes(&values[..=end], 1e-3) > cfg.oscillation_limit
    {
        return (Classification::Oscillatory, Some(slope));
    }
    let label = if slope > cfg.slope_threshold {
        Classification::Increasing
    } else if slope < -cfg.slope_threshold {
        Classification::Decreasing
    } else {
        Classification::Flat
    };
    (label, Some(slope))
}

/// Mean of the curve over the last 20% of its window; only for Flat curves.
pub fn plateau_estimate(curve: &ResummationCurve) -> Result<Float, ResummationError> {
    if curve.classification != Classification::Flat {
        return Err(ResummationError::NotFlat(curve.classification));
    }
    let w = curve.window.ok_or(ResummationError::NotFlat(curve.classification))?;
    let start = tail_start(&curve.lambda_grid, w);
    Ok(mean(&curve.values_n[start..=w]))
}

/// Evaluates the curve on an adaptive grid reaching the edge of the trusted
/// window, then classifies it.
pub fn resum(series: &BorelSeries, cfg: &CurveConfig) -> ResummationCurve {
    let prec = series.alpha().prec();
    let default_hi = (series.last_index() as f64 / 4.0).max(1.0);
    let mut hi = Float::with_val(prec, cfg.initial_lambda_max.unwrap_or(default_hi));
    let mut refitted = false;
    let mut attempt = 0;
    loop {
        attempt += 1;
        let grid = linear_grid(&hi, cfg.grid_points);
        let (values_n, values_nm1) = series.evaluate(&grid);
        let window = validity_window(&values_n, &values_nm1, cfg.delta, cfg.floor);
        let last = cfg.grid_points - 1;
        let next_hi = match window {
            None => Some(Float::with_val(prec, &hi / 4u32)),
            Some(w) if w == last => Some(Float::with_val(prec, &grid[w] * 1.5f64)),
            Some(w) if !refitted && Float::with_val(prec, &grid[w] * 1.5f64) < hi => {
                refitted = true;
                Some(Float::with_val(prec, &grid[w] * 1.5f64))
            }
            Some(_) => None,
        };
        match next_hi {
            Some(h) if attempt < cfg.max_refinements => hi = h,
            _ => {
                let (classification, slope) = classify_curve(&grid, &values_n, window, cfg);
                let mut curve = ResummationCurve {
                    lambda_grid: grid,
                    values_n,
                    values_nm1,
                    alpha: series.alpha().clone(),
                    pole_order: series.pole_order(),
                    order: series.last_index(),
                    window,
                    classification,
                    tail_slope: slope,
                    plateau: None,
                };
                curve.plateau = plateau_estimate(&curve).ok();
                return curve;
            }
        }
    }
}

/// Value the ground-state curve should approach at the tuned point:
/// −√g_eff / ((M+1) Γ((M+1)α+1)).
pub fn predicted_plateau(
    g_eff: &Float,
    m: u32,
    alpha: &Float,
    ctx: &PrecisionContext,
) -> Result<Float, ResummationError> {
    let bits = ctx.bits();
    let arg = Float::with_val(bits, alpha * (m + 1)) + 1u32;
    let gamma = gamma_pos_real(&arg, ctx)?;
    let root = Float::with_val(bits, g_eff.sqrt_ref());
    Ok(-(root / gamma) / (m + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(30, 60).unwrap()
    }

    #[test]
    fn single_term_sum() {
        let c = ctx();
        let v = borel_partial_sum(&[c.real(1)], 1, 3, &c.real(1), &c.real(2), &c).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn rejects_bad_alpha_and_lambda() {
        let c = ctx();
        let coeffs = vec![c.real(1), c.real(2)];
        assert!(BorelSeries::new(coeffs.clone(), 1, 3, &c.real(1.5), &c).is_err());
        assert!(BorelSeries::new(coeffs.clone(), 1, 3, &c.real(0), &c).is_err());
        assert!(borel_partial_sum(&coeffs, 1, 3, &c.real(1), &c.real(-1), &c).is_err());
    }

    #[test]
    fn zero_last_coefficient_trusts_whole_grid() {
        let c = ctx();
        let coeffs = vec![c.real(-0.5), c.real(0.1), c.real(0.01), c.zero()];
        let s = BorelSeries::new(coeffs, 1, 3, &c.real(1), &c).unwrap();
        let grid = linear_grid(&c.real(5), 32);
        let (vn, vm) = s.evaluate(&grid);
        assert_eq!(validity_window(&vn, &vm, 1e-4, 1e-30), Some(31));
    }

    #[test]
    fn constant_curve_is_flat_with_that_plateau() {
        let c = ctx();
        // p = 0 and only the n = 0 term: S(λ) = 2 everywhere
        let s = BorelSeries::new(vec![c.real(2), c.zero()], 0, 0, &c.real(1), &c).unwrap();
        let curve = resum(&s, &CurveConfig::default());
        assert_eq!(curve.classification, Classification::Flat);
        assert_eq!(curve.plateau.unwrap(), 2);
    }

    #[test]
    fn short_window_is_indeterminate() {
        let c = ctx();
        let grid: Vec<Float> = (1..=5).map(|i| c.real(i)).collect();
        let vals: Vec<Float> = (1..=5).map(|i| c.real(i)).collect();
        let (label, _) = classify_curve(&grid, &vals, Some(4), &CurveConfig::default());
        assert_eq!(label, Classification::Indeterminate);
        let (label, _) = classify_curve(&grid, &vals, None, &CurveConfig::default());
        assert_eq!(label, Classification::Indeterminate);
    }

    #[test]
    fn alternating_curve_is_oscillatory() {
        let c = ctx();
        let grid: Vec<Float> = (1..=40).map(|i| c.real(i)).collect();
        let vals: Vec<Float> = (1..=40)
            .map(|i| c.real(1.0 + 0.1 * (i as f64 * 1.3).sin()))
            .collect();
        let (label, _) = classify_curve(&grid, &vals, Some(39), &CurveConfig::default());
        assert_eq!(label, Classification::Oscillatory);
    }

    #[test]
    fn plateau_requires_flat() {
        let c = ctx();
        let s = BorelSeries::new(vec![c.real(0), c.real(1), c.real(1)], 0, 0, &c.real(1), &c)
            .unwrap();
        let curve = resum(&s, &CurveConfig::default());
        assert_ne!(curve.classification, Classification::Flat);
        assert!(plateau_estimate(&curve).is_err());
    }

    #[test]
    fn predicted_plateau_quartic() {
        let c = ctx();
        // −√9/18 = −1/6 at g_eff = 9, M = 2, α = 1
        let p = predicted_plateau(&c.real(9), 2, &c.real(1), &c).unwrap();
        assert_eq!(p, Float::with_val(c.bits(), -1) / 6u32);
    }
}
