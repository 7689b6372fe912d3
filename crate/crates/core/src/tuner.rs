//! Boundary-condition tuning: bracket the free parameter on the flip of the
//! resummed curve between decaying and growing, bisect, and raise the truncation
//! order (and with it the working precision) as the bracket narrows.
//!
//! Each probe resums the series at a trial parameter and reads the sign of the
//! curve's tail slope. Directional labels decide a bisection step directly. A
//! Flat label below the order cap means N is too small to resolve the bracket,
//! so N is doubled; at the cap the sign of the residual slope still decides.

use std::fmt;

use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::numerics::{format_sig, parse_real, NumericsError, PrecisionContext};
use crate::resummation::{
    predicted_plateau, resum, BorelSeries, Classification, CurveConfig, ResummationCurve,
    ResummationError,
};
use crate::series::{ground_coefficients, KSign, Parametrization, ProblemSpec, SeriesError, SeriesSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuneError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Resummation(#[from] ResummationError),
    #[error("bracket-not-found: no classification flip in [{lo}, {hi}]")]
    BracketNotFound { lo: String, hi: String },
    #[error("alpha-exhausted: curve still oscillatory at alpha = {0}")]
    AlphaExhausted(String),
    #[error("indeterminate: trusted window too short at parameter {0} with N at its cap")]
    Indeterminate(String),
    #[error("outer-bracket: {0}")]
    OuterBracket(String),
    #[error("step-limit: no convergence within {0} bisection steps")]
    StepLimit(usize),
    #[error("invalid tuning request: {0}")]
    Invalid(String),
}

impl TuneError {
    /// Stable machine-readable name for the failure.
    pub fn signal(&self) -> &'static str {
        match self {
            TuneError::Series(SeriesError::ScalingDegenerate(_)) => "scaling-degenerate",
            TuneError::Series(_) => "invalid-spec",
            TuneError::Numerics(_) => "numerics",
            TuneError::Resummation(_) => "resummation",
            TuneError::BracketNotFound { .. } => "bracket-not-found",
            TuneError::AlphaExhausted(_) => "alpha-exhausted",
            TuneError::Indeterminate(_) => "indeterminate",
            TuneError::OuterBracket(_) => "outer-bracket",
            TuneError::StepLimit(_) => "step-limit",
            TuneError::Invalid(_) => "invalid-request",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TuneConfig {
    pub n_start: usize,
    pub n_cap: usize,
    pub scan_points: usize,
    /// Scan interval for the free parameter as decimal strings; a mode-dependent
    /// default when unset.
    pub scan_range: Option<(String, String)>,
    /// How many times a flip-free scan range is doubled about its centre.
    pub scan_expansions: usize,
    /// First α tried; `None` picks [`default_alpha`] for the problem's M.
    pub alpha_start: Option<f64>,
    pub alpha_step: f64,
    pub alpha_floor: f64,
    /// Relative bracket width 10^(−digits_per_order·N) that triggers N ← 2N.
    pub digits_per_order: f64,
    /// Digits bisected past the target before stopping.
    pub guard_digits: u32,
    pub max_steps: usize,
    pub curve: CurveConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            n_start: 24,
            n_cap: 400,
            scan_points: 64,
            scan_range: None,
            scan_expansions: 3,
            alpha_start: None,
            alpha_step: 0.1,
            alpha_floor: 0.3,
            digits_per_order: 0.18,
            guard_digits: 2,
            max_steps: 4000,
            curve: CurveConfig::default(),
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<(), TuneError> {
        if self.n_start < 4 || self.n_cap < 4 {
            return Err(TuneError::Invalid("N start and cap must be at least 4".into()));
        }
        let start = self.start_alpha();
        if !(self.alpha_floor > 0.0 && self.alpha_floor <= start && start <= 1.0) {
            return Err(TuneError::Invalid(format!(
                "need 0 < alpha floor {} <= alpha start {start} <= 1",
                self.alpha_floor
            )));
        }
        if self.alpha_step <= 0.0 {
            return Err(TuneError::Invalid("alpha step must be positive".into()));
        }
        if self.scan_points < 2 {
            return Err(TuneError::Invalid("scan needs at least 2 intervals".into()));
        }
        Ok(())
    }

    /// Decimal digits carried for a run targeting `target_digits`.
    pub fn decimal_digits(&self, target_digits: u32) -> u32 {
        target_digits + self.guard_digits + 8
    }

    /// Context at the highest order a run may reach; inputs should be parsed here.
    pub fn max_context(&self, target_digits: u32) -> PrecisionContext {
        PrecisionContext::for_order(self.decimal_digits(target_digits), self.n_cap)
    }

    pub fn start_alpha(&self) -> f64 {
        self.alpha_start.unwrap_or(1.0)
    }

    /// Fills in the M-dependent α start and, when doing so, slows escalation
    /// by the same factor since resolution per order drops with α. A config
    /// whose α start is already set is returned unchanged.
    pub fn for_m(&self, m: u32) -> TuneConfig {
        if self.alpha_start.is_some() {
            return self.clone();
        }
        let alpha = default_alpha(m).max(self.alpha_floor);
        TuneConfig { alpha_start: Some(alpha), digits_per_order: self.digits_per_order * alpha, ..self.clone() }
    }

    pub fn first_order(&self) -> usize {
        self.n_start.min(self.n_cap)
    }

    fn alpha_value(alpha: f64, bits: u32) -> Float {
        parse_real(&format!("{alpha:.6}"), bits).expect("formatted alpha parses")
    }

    fn reduced_alpha(&self, alpha: f64) -> Option<f64> {
        let next = ((alpha - self.alpha_step) * 1e6).round() / 1e6;
        (next >= self.alpha_floor - 1e-9).then_some(next)
    }
}

/// Starting α for x^{2M}: 3/(M+1) rounded down to a tenth, at most 1. Off-axis
/// singularities move closer to the real axis as M grows and need a stronger
/// rotation.
pub fn default_alpha(m: u32) -> f64 {
    ((30.0 / (m as f64 + 1.0)).floor() / 10.0).min(1.0)
}

/// Resummed curve of a series family indexed by one real parameter.
pub trait CurveProbe: Sync {
    fn curve(
        &self,
        param: &Float,
        order: usize,
        alpha: &Float,
        ctx: &PrecisionContext,
        cfg: &CurveConfig,
    ) -> Result<ResummationCurve, TuneError>;
}

/// Ground-state log-wavefunction curves; the parameter is a_{M+1} or E.
pub struct GroundProbe {
    pub spec: ProblemSpec,
}

impl CurveProbe for GroundProbe {
    fn curve(
        &self,
        param: &Float,
        order: usize,
        alpha: &Float,
        ctx: &PrecisionContext,
        cfg: &CurveConfig,
    ) -> Result<ResummationCurve, TuneError> {
        let sol = ground_coefficients(&self.spec.with_order(order), param, ctx)?;
        let series = BorelSeries::new(sol.a, 1, self.spec.m + 1, alpha, ctx)?;
        Ok(resum(&series, cfg))
    }
}

/// Which side of the tuned value a probe landed on: the sign of its tail slope.
/// Oscillatory and Indeterminate curves fix no side.
pub fn side(curve: &ResummationCurve) -> Option<i8> {
    match curve.classification {
        Classification::Oscillatory | Classification::Indeterminate => None,
        _ => Some(if curve.tail_slope.unwrap_or(0.0) >= 0.0 { 1 } else { -1 }),
    }
}

/// Curve behaviour just below the tuned value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Orientation {
    /// Decreasing below, Increasing above.
    DecreasingBelow,
    /// Increasing below, Decreasing above.
    IncreasingBelow,
}

impl Orientation {
    fn from_lower_side(s: i8) -> Self {
        if s < 0 {
            Orientation::DecreasingBelow
        } else {
            Orientation::IncreasingBelow
        }
    }

    /// Expected slope sign at the lower end of a bracket.
    pub fn lower_side(self) -> i8 {
        match self {
            Orientation::DecreasingBelow => -1,
            Orientation::IncreasingBelow => 1,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Orientation::DecreasingBelow => f.write_str("decreasing-below"),
            Orientation::IncreasingBelow => f.write_str("increasing-below"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StepKind {
    /// Midpoint replaced one end; the width halved.
    Bisect,
    /// N was raised and both ends re-checked.
    Escalate,
    /// α was lowered after an oscillatory probe and both ends re-checked.
    ReduceAlpha,
    /// An end no longer matched the orientation and was pushed outward.
    Reopen,
}

/// Bracket state after one step of a refinement.
#[derive(Clone, Debug)]
pub struct BracketStep {
    pub kind: StepKind,
    pub lo: Float,
    pub hi: Float,
    pub order: usize,
    pub alpha: f64,
    /// Label of the midpoint probe for bisection steps.
    pub label: Option<Classification>,
}

/// A converged bracket with the state it was reached in.
#[derive(Clone, Debug)]
pub struct Refined {
    pub lo: Float,
    pub hi: Float,
    pub orientation: Orientation,
    pub order: usize,
    pub alpha: f64,
    pub ctx: PrecisionContext,
    pub trace: Vec<BracketStep>,
    /// Bisection steps decided by the residual slope of a Flat curve at the cap.
    pub flat_steps: usize,
}

impl Refined {
    pub fn midpoint(&self) -> Float {
        midpoint(&self.lo, &self.hi, self.ctx.bits())
    }

    pub fn digits(&self) -> u32 {
        bracket_digits(&self.lo, &self.hi)
    }
}

fn midpoint(lo: &Float, hi: &Float, bits: u32) -> Float {
    Float::with_val(bits, lo + hi) / 2u32
}

/// log10 of the bracket width relative to the smaller end's magnitude; an
/// absolute width when the bracket touches or straddles zero.
pub fn bracket_log_width(lo: &Float, hi: &Float) -> f64 {
    let bits = lo.prec().max(hi.prec());
    let width = Float::with_val(bits, hi - lo);
    if width <= 0 {
        return f64::NEG_INFINITY;
    }
    let straddles = (lo.is_sign_negative() || lo.is_zero()) && (hi.is_sign_positive() || hi.is_zero());
    let scale = if straddles {
        Float::with_val(bits, 1)
    } else {
        Float::with_val(bits, lo.abs_ref()).min(&Float::with_val(bits, hi.abs_ref()))
    };
    (width / scale).log10().to_f64()
}

/// Whole digits the bracket pins down.
pub fn bracket_digits(lo: &Float, hi: &Float) -> u32 {
    let lw = bracket_log_width(lo, hi);
    if lw.is_infinite() {
        return u32::MAX;
    }
    (-lw).floor().max(0.0) as u32
}

/// Probes a linear grid of `points + 1` parameters in parallel.
pub fn scan<P: CurveProbe>(
    probe: &P,
    lo: &Float,
    hi: &Float,
    points: usize,
    order: usize,
    alpha: f64,
    ctx: &PrecisionContext,
    cfg: &CurveConfig,
) -> Vec<(Float, Result<ResummationCurve, TuneError>)> {
    let bits = ctx.bits();
    let alpha = TuneConfig::alpha_value(alpha, bits);
    let step = Float::with_val(bits, hi - lo) / points as u32;
    (0..=points)
        .into_par_iter()
        .map(|i| {
            let p = Float::with_val(bits, &step * i as u32) + lo;
            let c = probe.curve(&p, order, &alpha, ctx, cfg);
            (p, c)
        })
        .collect()
}

/// Index pairs of consecutive usable scan points whose sides differ.
pub fn find_flips(sides: &[Option<i8>]) -> Vec<(usize, usize)> {
    let mut flips = Vec::new();
    let mut prev: Option<(usize, i8)> = None;
    for (i, s) in sides.iter().enumerate() {
        if let Some(s) = *s {
            if let Some((j, ps)) = prev {
                if ps != s {
                    flips.push((j, i));
                }
            }
            prev = Some((i, s));
        }
    }
    flips
}

/// Brackets found by scanning, with the order and α the scan ended at.
pub struct ScanOutcome {
    pub brackets: Vec<(Float, Float, Orientation)>,
    pub order: usize,
    pub alpha: f64,
}

/// Scans `range` with `order` terms, lowering α while the scan shows
/// oscillation and no flip, and doubling the range about its centre while no
/// flip appears.
pub fn locate_brackets<P: CurveProbe>(
    probe: &P,
    range: (&Float, &Float),
    order: usize,
    cfg: &TuneConfig,
    ctx: &PrecisionContext,
) -> Result<ScanOutcome, TuneError> {
    let bits = ctx.bits();
    let mut lo = Float::with_val(bits, range.0);
    let mut hi = Float::with_val(bits, range.1);
    if lo >= hi {
        return Err(TuneError::Invalid("scan range must have lo < hi".into()));
    }
    let mut alpha = cfg.start_alpha();
    for expansion in 0..=cfg.scan_expansions {
        loop {
            let probes = scan(probe, &lo, &hi, cfg.scan_points, order, alpha, ctx, &cfg.curve);
            let sides: Vec<Option<i8>> = probes
                .iter()
                .map(|(_, c)| c.as_ref().ok().and_then(side))
                .collect();
            let flips = find_flips(&sides);
            if !flips.is_empty() {
                let brackets = flips
                    .into_iter()
                    .map(|(i, j)| {
                        let o = Orientation::from_lower_side(sides[i].unwrap());
                        (probes[i].0.clone(), probes[j].0.clone(), o)
                    })
                    .collect();
                return Ok(ScanOutcome { brackets, order, alpha });
            }
            let oscillatory = probes.iter().any(|(_, c)| {
                matches!(c, Ok(c) if c.classification == Classification::Oscillatory)
            });
            match cfg.reduced_alpha(alpha) {
                Some(next) if oscillatory => alpha = next,
                _ => break,
            }
        }
        if expansion < cfg.scan_expansions {
            let centre = midpoint(&lo, &hi, bits);
            let half = Float::with_val(bits, &hi - &lo);
            lo = Float::with_val(bits, &centre - &half);
            hi = Float::with_val(bits, &centre + &half);
        }
    }
    Err(TuneError::BracketNotFound {
        lo: format_sig(&lo, 12),
        hi: format_sig(&hi, 12),
    })
}

struct Bisector<'a, P> {
    probe: &'a P,
    cfg: &'a TuneConfig,
    decimal: u32,
    stop_digits: f64,
    lo: Float,
    hi: Float,
    orientation: Orientation,
    order: usize,
    alpha: f64,
    ctx: PrecisionContext,
    trace: Vec<BracketStep>,
    flat_steps: usize,
}

impl<P: CurveProbe> Bisector<'_, P> {
    fn probe_at(&self, p: &Float) -> Result<ResummationCurve, TuneError> {
        let alpha = TuneConfig::alpha_value(self.alpha, self.ctx.bits());
        self.probe.curve(p, self.order, &alpha, &self.ctx, &self.cfg.curve)
    }

    fn record(&mut self, kind: StepKind, label: Option<Classification>) {
        self.trace.push(BracketStep {
            kind,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            order: self.order,
            alpha: self.alpha,
            label,
        });
    }

    fn set_order(&mut self, order: usize) {
        self.order = order;
        self.ctx = PrecisionContext::for_order(self.decimal, order);
        let bits = self.ctx.bits();
        self.lo = Float::with_val(bits, &self.lo);
        self.hi = Float::with_val(bits, &self.hi);
    }

    fn reduce_alpha(&mut self) -> Result<(), TuneError> {
        match self.cfg.reduced_alpha(self.alpha) {
            Some(next) => {
                self.alpha = next;
                self.record(StepKind::ReduceAlpha, None);
                self.recheck_ends()
            }
            None => Err(TuneError::AlphaExhausted(format!("{:.2}", self.alpha))),
        }
    }

    fn escalate(&mut self) -> Result<(), TuneError> {
        let next = (self.order * 2).min(self.cfg.n_cap);
        self.set_order(next);
        self.record(StepKind::Escalate, None);
        self.recheck_ends()
    }

    /// Restores the orientation at both ends after N or α changed, pushing an
    /// end outward until its side is right again.
    fn recheck_ends(&mut self) -> Result<(), TuneError> {
        let lower = self.orientation.lower_side();
        for end_is_lo in [true, false] {
            let want = if end_is_lo { lower } else { -lower };
            let mut reach = 1u32;
            loop {
                let at = if end_is_lo { self.lo.clone() } else { self.hi.clone() };
                let curve = self.probe_at(&at)?;
                match side(&curve) {
                    Some(s) if s == want => break,
                    Some(_) => {
                        // The end sits on the wrong side: it becomes the opposite
                        // end and the search moves outward.
                        let bits = self.ctx.bits();
                        let width = Float::with_val(bits, &self.hi - &self.lo);
                        let push = Float::with_val(bits, &width * reach);
                        if end_is_lo {
                            self.hi = at;
                            self.lo = Float::with_val(bits, &self.lo - &push);
                        } else {
                            self.lo = at;
                            self.hi = Float::with_val(bits, &self.hi + &push);
                        }
                        self.record(StepKind::Reopen, Some(curve.classification));
                        reach = reach.saturating_mul(2);
                        if self.trace.len() > self.cfg.max_steps {
                            return Err(TuneError::StepLimit(self.cfg.max_steps));
                        }
                    }
                    None if curve.classification == Classification::Oscillatory => {
                        return self.reduce_alpha();
                    }
                    None if self.order < self.cfg.n_cap => return self.escalate(),
                    None => return Err(TuneError::Indeterminate(format_sig(&at, 20))),
                }
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<Refined, TuneError> {
        self.recheck_ends()?;
        loop {
            if self.trace.len() > self.cfg.max_steps {
                return Err(TuneError::StepLimit(self.cfg.max_steps));
            }
            let digits = -bracket_log_width(&self.lo, &self.hi);
            if digits >= self.stop_digits {
                break;
            }
            if self.order < self.cfg.n_cap && digits >= self.cfg.digits_per_order * self.order as f64 {
                self.escalate()?;
                continue;
            }
            let mid = midpoint(&self.lo, &self.hi, self.ctx.bits());
            let curve = self.probe_at(&mid)?;
            match side(&curve) {
                None if curve.classification == Classification::Oscillatory => self.reduce_alpha()?,
                None if self.order < self.cfg.n_cap => self.escalate()?,
                None => return Err(TuneError::Indeterminate(format_sig(&mid, 20))),
                Some(_) if curve.classification == Classification::Flat && self.order < self.cfg.n_cap => {
                    self.escalate()?
                }
                Some(s) => {
                    if curve.classification == Classification::Flat {
                        self.flat_steps += 1;
                    }
                    if s == self.orientation.lower_side() {
                        self.lo = mid;
                    } else {
                        self.hi = mid;
                    }
                    self.record(StepKind::Bisect, Some(curve.classification));
                }
            }
        }
        Ok(Refined {
            lo: self.lo,
            hi: self.hi,
            orientation: self.orientation,
            order: self.order,
            alpha: self.alpha,
            ctx: self.ctx,
            trace: self.trace,
            flat_steps: self.flat_steps,
        })
    }
}

/// Bisects a scanned bracket to `target_digits` (plus guard digits), raising N
/// and lowering α as the probes demand.
pub fn refine_bracket<P: CurveProbe>(
    probe: &P,
    bracket: (&Float, &Float),
    orientation: Orientation,
    order: usize,
    alpha: f64,
    target_digits: u32,
    cfg: &TuneConfig,
) -> Result<Refined, TuneError> {
    let decimal = cfg.decimal_digits(target_digits);
    let ctx = PrecisionContext::for_order(decimal, order);
    let bits = ctx.bits();
    Bisector {
        probe,
        cfg,
        decimal,
        stop_digits: (target_digits + cfg.guard_digits) as f64,
        lo: Float::with_val(bits, bracket.0),
        hi: Float::with_val(bits, bracket.1),
        orientation,
        order,
        alpha,
        ctx,
        trace: Vec::new(),
        flat_steps: 0,
    }
    .run()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TuneMode {
    Scaled,
    Direct,
    /// Scaled mode with a₂ adjusted to reach a target ρ.
    Rho,
}

impl TuneMode {
    pub fn name(self) -> &'static str {
        match self {
            TuneMode::Scaled => "scaled",
            TuneMode::Direct => "direct",
            TuneMode::Rho => "rho",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub mode: TuneMode,
    pub m: u32,
    pub g: Float,
    pub k: Option<KSign>,
    pub a2: Option<Float>,
    /// The tuned quantity: a_{M+1} (scaled), E (direct) or a₂ (rho).
    pub parameter: Float,
    pub bracket: (Float, Float),
    pub target_digits: u32,
    /// Bracket digits; in rho mode also capped by how closely ρ meets its target.
    pub digits_achieved: u32,
    /// a_{M+1} of the tuned series.
    pub free_coefficient: Float,
    pub energy: Float,
    pub rho: Float,
    pub g_eff: Float,
    pub n_final: usize,
    pub alpha_used: f64,
    pub plateau: Option<Float>,
    /// Order the plateau was read at.
    pub plateau_order: Option<usize>,
    pub predicted_plateau: Float,
    pub orientation: Orientation,
    pub flat_steps: usize,
    /// ρ − target for rho-mode runs.
    pub rho_residual: Option<Float>,
    pub trace: Vec<BracketStep>,
    /// Coefficients at N_final and the tuned parameter.
    pub solution: SeriesSolution,
}

impl TuneResult {
    /// JSON record with every number as a decimal string.
    pub fn to_json(&self) -> Value {
        let d = self.digits_achieved.clamp(1, self.target_digits + 8) as usize;
        let out = self.target_digits as usize + 5;
        let mut v = json!({
            "mode": self.mode.name(),
            "M": self.m,
            "g": format_sig(&self.g, out),
            "k": self.k.map(|k| k.to_string()),
            "a2": self.a2.as_ref().map(|a| format_sig(a, out)),
            "parameter": format_sig(&self.parameter, d),
            "bracket": [format_sig(&self.bracket.0, d + 3), format_sig(&self.bracket.1, d + 3)],
            "free_coefficient": format_sig(&self.free_coefficient, d),
            "E": format_sig(&self.energy, d),
            "rho": format_sig(&self.rho, d),
            "g_eff": format_sig(&self.g_eff, d),
            "digits": self.digits_achieved,
            "N": self.n_final,
            "alpha": format!("{:.2}", self.alpha_used),
            "plateau": self.plateau.as_ref().map(|p| format_sig(p, 12)),
            "plateau_N": self.plateau_order,
            "predicted_plateau": format_sig(&self.predicted_plateau, 12),
            "orientation": self.orientation.to_string(),
        });
        if let Some(r) = &self.rho_residual {
            v["rho_residual"] = json!(format_sig(r, 6));
        }
        v
    }
}

/// Lowest value of ρx² + g·x^{2M}.
fn potential_minimum(m: u32, g: f64, rho: f64) -> f64 {
    if rho >= 0.0 {
        return 0.0;
    }
    let x2 = (-rho / (m as f64 * g)).powf(1.0 / (m as f64 - 1.0));
    rho * x2 + g * x2.powi(m as i32)
}

/// Best Gaussian upper bound on the ground energy, exp(−ωx²/2) trial.
fn gaussian_bound(m: u32, g: f64, rho: f64) -> f64 {
    let double_fact: f64 = (1..=m).map(|i| (2 * i - 1) as f64).product();
    let energy = |w: f64| w / 2.0 + rho / (2.0 * w) + g * double_fact / (2.0 * w).powi(m as i32);
    (0..=400)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 400.0))
        .map(energy)
        .fold(f64::INFINITY, f64::min)
}

fn default_scan_range(spec: &ProblemSpec) -> (String, String) {
    match &spec.mode {
        Parametrization::Scaled { .. } => ("0".into(), "0.1".into()),
        Parametrization::Direct { rho } => {
            let (g, rho) = (spec.g.to_f64(), rho.to_f64());
            let floor = potential_minimum(spec.m, g, rho);
            let top = gaussian_bound(spec.m, g, rho);
            let hi = top + 0.25 * (top - floor) + 0.1;
            (format!("{floor:.6}"), format!("{hi:.6}"))
        }
    }
}

fn scan_bounds(spec: &ProblemSpec, cfg: &TuneConfig, ctx: &PrecisionContext) -> Result<(Float, Float), TuneError> {
    let (lo, hi) = cfg.scan_range.clone().unwrap_or_else(|| default_scan_range(spec));
    Ok((ctx.parse(&lo)?, ctx.parse(&hi)?))
}

/// Tunes the ground state of `spec` (its order is ignored) to `target_digits`.
pub fn tune_ground(spec: &ProblemSpec, target_digits: u32, cfg: &TuneConfig) -> Result<TuneResult, TuneError> {
    let cfg = &cfg.for_m(spec.m);
    cfg.validate()?;
    spec.with_order(cfg.n_cap.max(spec.m as usize + 2)).validate()?;
    let probe = GroundProbe { spec: spec.clone() };
    let first = PrecisionContext::for_order(cfg.decimal_digits(target_digits), cfg.first_order());
    let (lo, hi) = scan_bounds(spec, cfg, &first)?;
    let scanned = locate_brackets(&probe, (&lo, &hi), cfg.first_order(), cfg, &first)?;
    let (blo, bhi, orientation) = &scanned.brackets[0];
    let refined = refine_bracket(&probe, (blo, bhi), *orientation, scanned.order, scanned.alpha, target_digits, cfg)?;
    finish_ground(spec, &probe, refined, target_digits, cfg)
}

fn finish_ground(
    spec: &ProblemSpec,
    probe: &GroundProbe,
    refined: Refined,
    target_digits: u32,
    cfg: &TuneConfig,
) -> Result<TuneResult, TuneError> {
    let ctx = refined.ctx;
    let bits = ctx.bits();
    let param = refined.midpoint();
    let alpha = TuneConfig::alpha_value(refined.alpha, bits);
    // The flat band narrows as N grows, so the tuned curve may already read
    // directional at N_final; the plateau comes from the highest order at which
    // it still reads Flat.
    let mut plateau = None;
    let mut order = refined.order;
    while plateau.is_none() && order >= cfg.first_order().min(refined.order) / 2 && order > spec.m as usize + 1 {
        let curve = probe.curve(&param, order, &alpha, &ctx, &cfg.curve)?;
        plateau = curve.plateau.map(|p| (p, order));
        order /= 2;
    }
    let solution = ground_coefficients(&spec.with_order(refined.order), &param, &ctx)?;
    let predicted = predicted_plateau(&solution.g_eff, spec.m, &alpha, &ctx)?;
    let (mode, k, a2) = match &spec.mode {
        Parametrization::Scaled { k, a2 } => (TuneMode::Scaled, Some(*k), Some(Float::with_val(bits, a2))),
        Parametrization::Direct { .. } => (TuneMode::Direct, None, None),
    };
    let free_coefficient = solution.coeff(spec.m as usize + 1).clone();
    Ok(TuneResult {
        mode,
        m: spec.m,
        g: Float::with_val(bits, &spec.g),
        k,
        a2,
        digits_achieved: refined.digits(),
        bracket: (refined.lo.clone(), refined.hi.clone()),
        parameter: param,
        target_digits,
        free_coefficient,
        energy: solution.energy.clone(),
        rho: solution.rho.clone(),
        g_eff: solution.g_eff.clone(),
        n_final: refined.order,
        alpha_used: refined.alpha,
        plateau_order: plateau.as_ref().map(|p| p.1),
        plateau: plateau.map(|p| p.0),
        predicted_plateau: predicted,
        orientation: refined.orientation,
        flat_steps: refined.flat_steps,
        rho_residual: None,
        trace: refined.trace,
        solution,
    })
}

/// Adjusts a₂ (k = +4, M = 2) until the tuned solution's ρ equals `target_rho`
/// to within 10^(−target_digits), tuning a₃ afresh at every trial a₂.
pub fn tune_to_rho(target_rho: &Float, target_digits: u32, cfg: &TuneConfig) -> Result<TuneResult, TuneError> {
    cfg.validate()?;
    let ctx = cfg.max_context(target_digits + 4);
    let bits = ctx.bits();
    let target = Float::with_val(bits, target_rho);
    let inner_digits = target_digits + 4;
    let inner = |a2: &Float| -> Result<(TuneResult, Float), TuneError> {
        let spec = ProblemSpec::scaled(2, KSign::Plus, Float::with_val(bits, a2), cfg.n_cap);
        let r = tune_ground(&spec, inner_digits, cfg)?;
        let f = Float::with_val(bits, &r.rho - &target);
        Ok((r, f))
    };

    // ρ vanishes exactly at a₂ = −3/16; ρ < 0 on (−3/16, 0) and ρ > 0 below it.
    let root = ctx.parse("-3/16")?;
    if target == 0 {
        let (mut r, f) = inner(&root)?;
        r.mode = TuneMode::Rho;
        r.parameter = root.clone();
        r.bracket = (root.clone(), root);
        r.rho_residual = Some(f);
        return Ok(r);
    }
    let factors: &[&str] = if target < 0 {
        &["0.8", "0.6", "0.4", "0.3", "0.2", "0.1", "0.05", "0.02", "0.01"]
    } else {
        &["1.25", "1.5", "2", "3", "5", "8", "13", "21"]
    };
    let mut near = (root.clone(), Float::with_val(bits, -&target));
    let mut far = None;
    for f in factors {
        let a2 = Float::with_val(bits, &root * &ctx.parse(f)?);
        let (_, value) = inner(&a2)?;
        if value.is_sign_negative() == near.1.is_sign_negative() {
            near = (a2, value);
        } else {
            far = Some((a2, value));
            break;
        }
    }
    let Some(mut far) = far else {
        return Err(TuneError::OuterBracket(format!(
            "rho = {} not reached along the a2 probes",
            format_sig(&target, 12)
        )));
    };

    // Illinois-modified regula falsi on f(a₂) = ρ(a₂) − target.
    let tol = Float::with_val(bits, 10).pow(-(target_digits as i32)) * Float::with_val(bits, target.abs_ref()).max(&Float::with_val(bits, 1));
    let mut last_kept: Option<bool> = None;
    for _ in 0..80 {
        let denom = Float::with_val(bits, &far.1 - &near.1);
        let step = Float::with_val(bits, &far.0 - &near.0) * &near.1 / denom;
        let trial = Float::with_val(bits, &near.0 - &step);
        let (result, value) = inner(&trial)?;
        if Float::with_val(bits, value.abs_ref()) <= tol {
            let (lo, hi) = if near.0 < far.0 { (near.0, far.0) } else { (far.0, near.0) };
            let mut r = result;
            r.mode = TuneMode::Rho;
            r.parameter = trial;
            r.bracket = (lo, hi);
            r.digits_achieved = r.digits_achieved.min(residual_digits(&value, &target));
            r.rho_residual = Some(value);
            return Ok(r);
        }
        if value.is_sign_negative() == near.1.is_sign_negative() {
            near = (trial, value);
            if last_kept == Some(true) {
                far.1 /= 2u32;
            }
            last_kept = Some(true);
        } else {
            far = (trial, value);
            if last_kept == Some(false) {
                near.1 /= 2u32;
            }
            last_kept = Some(false);
        }
    }
    Err(TuneError::OuterBracket("a2 iteration did not converge".into()))
}

/// Whole digits to which ρ matches its target.
fn residual_digits(residual: &Float, target: &Float) -> u32 {
    if residual.is_zero() {
        return u32::MAX;
    }
    let scale = target.to_f64().abs().max(1.0);
    (-(residual.to_f64().abs() / scale).log10()).floor().max(0.0) as u32
}

/// One sweep grid point: its a₂ and the tuning outcome.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub a2: Float,
    pub result: Result<TuneResult, TuneError>,
}

/// Tunes a_{M+1} at `steps` evenly spaced a₂ values in [from, to].
pub fn sweep(
    m: u32,
    k: KSign,
    a2_range: (&str, &str),
    steps: usize,
    target_digits: u32,
    cfg: &TuneConfig,
) -> Result<Vec<SweepRow>, TuneError> {
    cfg.validate()?;
    if steps == 0 {
        return Err(TuneError::Invalid("sweep needs at least one step".into()));
    }
    let ctx = cfg.max_context(target_digits);
    let bits = ctx.bits();
    let from = ctx.parse(a2_range.0)?;
    let to = ctx.parse(a2_range.1)?;
    let grid: Vec<Float> = if steps == 1 {
        vec![from]
    } else {
        let step = Float::with_val(bits, &to - &from) / (steps - 1) as u32;
        (0..steps).map(|i| Float::with_val(bits, &step * i as u32) + &from).collect()
    };
    Ok(grid
        .into_par_iter()
        .map(|a2| {
            let spec = ProblemSpec::scaled(m, k, a2.clone(), cfg.n_cap);
            let result = tune_ground(&spec, target_digits, cfg);
            SweepRow { a2, result }
        })
        .collect())
}

/// CSV table `a2,a_free,E,rho,digits,status`; failed rows keep their a₂ and
/// carry the error signal in the status column.
pub fn sweep_csv(rows: &[SweepRow], digits: usize) -> String {
    let mut out = String::from("a2,a_free,E,rho,digits,status\n");
    for row in rows {
        let a2 = format_sig(&row.a2, digits);
        match &row.result {
            Ok(r) => out.push_str(&format!(
                "{a2},{},{},{},{},ok\n",
                format_sig(&r.free_coefficient, digits),
                format_sig(&r.energy, digits),
                format_sig(&r.rho, digits),
                r.digits_achieved
            )),
            Err(e) => out.push_str(&format!("{a2},,,,,error:{}\n", e.signal())),
        }
    }
    out
}
