//! Property checks shared by the proptest suites and the acceptance gate. Each
//! takes plain inputs and returns a description of the first violation.

#![allow(dead_code)]

use anharmonic::excited::{prefactor_coefficients, Parity};
use anharmonic::numerics::{factorial, gamma_pos_real, PrecisionContext};
use anharmonic::oracle::{diagonalize, oracle_context, OracleSpec};
use anharmonic::resummation::{BorelSeries, Classification, ResummationCurve};
use anharmonic::series::{ground_coefficients, KSign, ProblemSpec, SeriesSolution};
use anharmonic::tuner::{refine_bracket, CurveProbe, Orientation, StepKind, TuneConfig, TuneError};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rug::{ops::Pow, Float};

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// |a − b| ≤ 10^{−digits}·scale.
fn close(a: &Float, b: &Float, scale: &Float, digits: i32) -> bool {
    let diff = Float::with_val(a.prec(), a - b).abs();
    let tol = Float::with_val(a.prec(), 10).pow(-digits) * Float::with_val(a.prec(), scale.abs_ref()).max(&Float::with_val(a.prec(), 1e-300));
    diff <= tol
}

// ---------------------------------------------------------------- resummation

#[derive(Clone, Debug)]
pub struct DroppedCase {
    pub coeffs: Vec<f64>,
    pub first_index: usize,
    pub pole_order: u32,
    pub alpha: f64,
    pub lambda: f64,
}

pub fn dropped_case() -> impl Strategy<Value = DroppedCase> {
    (prop::collection::vec(-10.0f64..10.0, 3..30), 0usize..3, 0u32..5, 0.3f64..=1.0, 0.05f64..25.0).prop_map(
        |(coeffs, first_index, pole_order, alpha, lambda)| DroppedCase { coeffs, first_index, pole_order, alpha, lambda },
    )
}

/// S_N − S_{N−1} equals the last term, which also matches a direct evaluation
/// with MPFR's own Γ.
pub fn check_dropped_term(case: &DroppedCase) -> Check {
    let ctx = PrecisionContext::for_order(40, case.coeffs.len());
    let bits = ctx.bits();
    let coeffs: Vec<Float> = case.coeffs.iter().map(|c| ctx.real(*c)).collect();
    let alpha = ctx.real(case.alpha);
    let lambda = ctx.real(case.lambda);
    let full = BorelSeries::new(coeffs.clone(), case.first_index, case.pole_order, &alpha, &ctx).map_err(|e| e.to_string())?;
    let short = BorelSeries::new(coeffs[..coeffs.len() - 1].to_vec(), case.first_index, case.pole_order, &alpha, &ctx)
        .map_err(|e| e.to_string())?;
    let s_n = full.partial_sum(&lambda);
    let s_nm1 = short.partial_sum(&lambda);
    let dropped = full.dropped_term(&lambda);
    let n = (case.first_index + coeffs.len() - 1) as u32;
    let exponent = Float::with_val(bits, (2 * n as i64 - case.pole_order as i64) as f64) * &alpha;
    let gamma = Float::with_val(bits, Float::with_val(bits, &alpha * (2 * n)) + 1u32).gamma();
    let direct = Float::with_val(bits, coeffs.last().unwrap() * Float::with_val(bits, (&lambda).pow(&exponent))) / gamma;
    let diff = Float::with_val(bits, &s_n - &s_nm1);
    let scale = Float::with_val(bits, s_n.abs_ref()).max(&Float::with_val(bits, dropped.abs_ref()));
    ensure(close(&diff, &dropped, &scale, 30), || {
        format!("S_N - S_N-1 = {diff} but dropped term = {dropped} for {case:?}")
    })?;
    ensure(close(&direct, &dropped, &direct, 30), || format!("dropped {dropped} vs direct {direct} for {case:?}"))
}

// --------------------------------------------------------------------- series

#[derive(Clone, Debug)]
pub struct SeriesCase {
    pub m: u32,
    pub k_plus: bool,
    pub a2: f64,
    pub free: f64,
    pub order: usize,
    pub direct: bool,
    pub g: f64,
    pub rho: f64,
}

pub fn series_case() -> impl Strategy<Value = SeriesCase> {
    (2u32..6, any::<bool>(), -0.5f64..-0.01, -0.2f64..0.2, 8usize..40, any::<bool>(), 0.2f64..3.0, -3.0f64..3.0)
        .prop_map(|(m, k_plus, a2, free, order, direct, g, rho)| SeriesCase { m, k_plus, a2, free, order, direct, g, rho })
}

pub fn build_series(case: &SeriesCase, ctx: &PrecisionContext) -> Result<SeriesSolution, String> {
    let spec = if case.direct {
        ProblemSpec::direct(case.m, ctx.real(case.g), ctx.real(case.rho), case.order)
    } else {
        let k = if case.k_plus { KSign::Plus } else { KSign::Minus };
        ProblemSpec::scaled(case.m, k, ctx.real(case.a2), case.order)
    };
    let free = if case.direct { ctx.real(case.free * 10.0) } else { ctx.real(case.free) };
    ground_coefficients(&spec, &free, ctx).map_err(|e| e.to_string())
}

/// Residual of W″ + W′² = V − E, coefficient by coefficient, built from a plain
/// polynomial product rather than the library's recurrence.
pub fn ground_residuals(sol: &SeriesSolution) -> Vec<(Float, Float)> {
    let bits = sol.a[0].prec();
    let n = sol.order();
    let a = |i: usize| Float::with_val(bits, &sol.a[i - 1]);
    // W′ as a dense polynomial: coefficient of x^{2i-1} is 2i·a_i.
    let mut w1 = vec![Float::new(bits); 2 * n + 1];
    for i in 1..=n {
        w1[2 * i - 1] = a(i) * (2 * i) as u32;
    }
    let mut sq = vec![Float::new(bits); 4 * n + 1];
    for (p, x) in w1.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (q, y) in w1.iter().enumerate() {
            if !y.is_zero() {
                sq[p + q] += Float::with_val(bits, x * y);
            }
        }
    }
    (0..n)
        .map(|j| {
            let w2 = a(j + 1) * ((2 * j + 2) * (2 * j + 1)) as u32;
            let mut r = Float::with_val(bits, &w2 + &sq[2 * j]);
            let mut scale = Float::with_val(bits, w2.abs_ref()) + Float::with_val(bits, sq[2 * j].abs_ref());
            if j == 0 {
                r += &sol.energy_eff;
                scale += Float::with_val(bits, sol.energy_eff.abs_ref());
            }
            if j == 1 {
                r -= &sol.rho_eff;
                scale += Float::with_val(bits, sol.rho_eff.abs_ref());
            }
            if j == sol.m as usize {
                r -= &sol.g_eff;
                scale += Float::with_val(bits, sol.g_eff.abs_ref());
            }
            (r, scale)
        })
        .collect()
}

pub fn check_series_residuals(case: &SeriesCase) -> Check {
    let ctx = PrecisionContext::for_order(40, case.order);
    let sol = match build_series(case, &ctx) {
        Ok(s) => s,
        // Invalid combinations are rejected up front; nothing to check.
        Err(_) => return Ok(()),
    };
    ensure(sol.order() == case.order, || format!("order {} != {}", sol.order(), case.order))?;
    for (j, (r, scale)) in ground_residuals(&sol).iter().enumerate() {
        ensure(close(r, &Float::new(r.prec()), scale, 35), || format!("residual x^{}: {r} (scale {scale}) for {case:?}", 2 * j))?;
    }
    if !case.direct {
        // ρ/E² = 1 + 3/(k²a₂) in physical units.
        let bits = ctx.bits();
        let lhs = Float::with_val(bits, &sol.rho / Float::with_val(bits, sol.energy.square_ref()));
        let rhs = Float::with_val(bits, 3) / (ctx.real(case.a2) * 16u32) + 1u32;
        ensure(close(&lhs, &rhs, &rhs.clone().abs().max(&ctx.real(1)), 35), || format!("rho/E^2 {lhs} vs {rhs}"))?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ExcitedCase {
    pub series: SeriesCase,
    pub odd: bool,
    pub tau: f64,
    pub n: usize,
}

pub fn excited_case() -> impl Strategy<Value = ExcitedCase> {
    (series_case(), any::<bool>(), -8.0f64..8.0, 3usize..20).prop_map(|(mut series, odd, tau, n)| {
        series.order = series.order.max(2 * n + 4);
        ExcitedCase { series, odd, tau, n }
    })
}

/// Residual of P″ + 2W′P′ + E_q·P = 0 from an independent polynomial product.
pub fn check_excited_residuals(case: &ExcitedCase) -> Check {
    let ctx = PrecisionContext::for_order(40, case.series.order);
    let Ok(ground) = build_series(&case.series, &ctx) else {
        return Ok(());
    };
    let parity = if case.odd { Parity::Odd } else { Parity::Even };
    let state = prefactor_coefficients(&ground, parity, &ctx.real(case.tau), case.n, &ctx).map_err(|e| e.to_string())?;
    let bits = ctx.bits();
    let c = &state.c;
    ensure(c[parity.offset()] == 1, || "leading prefactor coefficient is not 1".into())?;
    for k in 0..c.len().saturating_sub(2) {
        let mut r = Float::with_val(bits, &c[k + 2] * ((k + 2) * (k + 1)) as u32);
        let mut scale = Float::with_val(bits, r.abs_ref());
        let ek = Float::with_val(bits, &state.e_q * &c[k]);
        scale += Float::with_val(bits, ek.abs_ref());
        r += ek;
        // 2W′P′ at x^k pairs 2i·a_i x^{2i−1} with j·c_j x^{j−1}, 2i + j − 2 = k.
        for i in 1..=ground.order() {
            if 2 * i > k + 1 {
                break;
            }
            let j = k + 2 - 2 * i;
            if j == 0 || c[j].is_zero() {
                continue;
            }
            let t = Float::with_val(bits, &ground.a[i - 1] * &c[j]) * (4 * i * j) as u32;
            scale += Float::with_val(bits, t.abs_ref());
            r += t;
        }
        ensure(close(&r, &Float::new(bits), &scale, 35), || format!("prefactor residual x^{k}: {r} for {case:?}"))?;
    }
    Ok(())
}

// ------------------------------------------------------------------- numerics

pub fn check_gamma_factorial(n: u32) -> Check {
    let ctx = PrecisionContext::for_order(50, 0);
    let g = gamma_pos_real(&ctx.real(n + 1), &ctx).map_err(|e| e.to_string())?;
    let f = factorial(n, &ctx);
    let exact = Float::with_val(ctx.bits(), rug::Integer::from(rug::Integer::factorial(n)));
    ensure(close(&g, &f, &f, 48) && close(&f, &exact, &exact, 48), || format!("Gamma({}) = {g} but {n}! = {f}", n + 1))
}

/// Γ(z+1) = zΓ(z), and Γ agrees with MPFR's independent implementation.
pub fn check_gamma_recurrence(z: f64) -> Check {
    let ctx = PrecisionContext::for_order(50, 0);
    let bits = ctx.bits();
    let z = ctx.real(z);
    let gz = gamma_pos_real(&z, &ctx).map_err(|e| e.to_string())?;
    let gz1 = gamma_pos_real(&Float::with_val(bits, &z + 1u32), &ctx).map_err(|e| e.to_string())?;
    let zg = Float::with_val(bits, &z * &gz);
    ensure(close(&gz1, &zg, &zg, 45), || format!("Gamma(z+1) {gz1} vs z Gamma(z) {zg} at z={z}"))?;
    let mpfr = Float::with_val(bits, z.gamma_ref());
    ensure(close(&gz, &mpfr, &mpfr, 45), || format!("Gamma({z}) = {gz} but MPFR gives {mpfr}"))
}

// --------------------------------------------------------------------- oracle

#[derive(Clone, Debug)]
pub struct OracleCase {
    pub m: u32,
    pub g: f64,
    pub rho: f64,
    pub basis: usize,
    pub extra: usize,
}

pub fn oracle_case() -> impl Strategy<Value = OracleCase> {
    (2u32..5, 0.3f64..3.0, -2.0f64..2.0, 20usize..36, 2usize..12).prop_map(|(m, g, rho, basis, extra)| OracleCase {
        m,
        g,
        rho,
        basis,
        extra,
    })
}

/// Enlarging the basis never raises a level (Cauchy interlacing).
pub fn check_variational(case: &OracleCase) -> Check {
    let ctx = oracle_context();
    let levels = 3;
    let small = OracleSpec::new(case.m, ctx.real(case.g), ctx.real(case.rho), case.basis, levels);
    let large = OracleSpec { basis_size: case.basis + case.extra, ..small.clone() };
    let e_small = diagonalize(&small, false).map_err(|e| e.to_string())?.energies();
    let e_large = diagonalize(&large, false).map_err(|e| e.to_string())?.energies();
    let slack = ctx.real(1e-50);
    for (i, (s, l)) in e_small.iter().zip(&e_large).enumerate() {
        ensure(Float::with_val(ctx.bits(), l - s) <= slack, || format!("level {i} rose from {s} to {l} for {case:?}"))?;
    }
    Ok(())
}

/// g = 0, ρ = s², ω = s gives E_n = (2n+1)s exactly.
pub fn check_harmonic(m: u32, s_num: u32, s_den: u32, levels: usize) -> Check {
    let ctx = oracle_context();
    let bits = ctx.bits();
    let s = Float::with_val(bits, s_num) / s_den;
    let mut spec = OracleSpec::new(m, ctx.zero(), Float::with_val(bits, s.square_ref()), 4 * levels + 8, levels);
    spec.omega = s.clone();
    let energies = diagonalize(&spec, false).map_err(|e| e.to_string())?.energies();
    for (n, e) in energies.iter().enumerate() {
        let want = Float::with_val(bits, &s * (2 * n as u32 + 1));
        ensure(close(e, &want, &want, 55), || format!("level {n}: {e} vs {want} (s = {s})"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------- tuner

/// A probe with a known root: the slope sign says which side a parameter lies
/// on, and inside a zone that shrinks with N the curve reads Flat.
pub struct SyntheticProbe {
    pub root: Float,
    pub sign: i8,
    pub digits_per_order: f64,
}

impl CurveProbe for SyntheticProbe {
    fn curve(
        &self,
        param: &Float,
        order: usize,
        alpha: &Float,
        ctx: &PrecisionContext,
        _cfg: &anharmonic::resummation::CurveConfig,
    ) -> Result<ResummationCurve, TuneError> {
        let d = Float::with_val(ctx.bits(), param - &self.root) * self.sign as i32;
        let zone = 10f64.powf(-self.digits_per_order * order as f64);
        let slope = d.to_f64();
        let classification = if slope.abs() < zone {
            Classification::Flat
        } else if slope > 0.0 {
            Classification::Increasing
        } else {
            Classification::Decreasing
        };
        let slope = if slope == 0.0 { 1e-300 } else { slope };
        let grid = vec![ctx.real(0), ctx.real(1)];
        Ok(ResummationCurve {
            values_n: grid.clone(),
            values_nm1: grid.clone(),
            lambda_grid: grid,
            alpha: alpha.clone(),
            pole_order: 0,
            order,
            window: Some(1),
            classification,
            tail_slope: Some(slope),
            plateau: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BracketCase {
    pub root: f64,
    pub below: f64,
    pub above: f64,
    pub increasing_below: bool,
    pub target: u32,
    pub digits_per_order: f64,
}

pub fn bracket_case() -> impl Strategy<Value = BracketCase> {
    (-5.0f64..5.0, 1e-4f64..2.0, 1e-4f64..2.0, any::<bool>(), 4u32..25, 0.1f64..0.5).prop_map(
        |(root, below, above, increasing_below, target, digits_per_order)| BracketCase {
            root,
            below,
            above,
            increasing_below,
            target,
            digits_per_order,
        },
    )
}

/// Every step keeps lo < hi, bisection only shrinks the bracket, order never
/// drops, α never rises, and the final bracket still contains the root after
/// every escalation.
pub fn check_bracket(case: &BracketCase) -> Check {
    let cfg = TuneConfig { n_start: 12, n_cap: 192, ..TuneConfig::default() };
    let ctx = PrecisionContext::for_order(cfg.decimal_digits(case.target), cfg.n_cap);
    let root = ctx.real(case.root);
    let lo = Float::with_val(ctx.bits(), &root - case.below);
    let hi = Float::with_val(ctx.bits(), &root + case.above);
    let (orientation, sign) = if case.increasing_below {
        (Orientation::IncreasingBelow, -1)
    } else {
        (Orientation::DecreasingBelow, 1)
    };
    let probe = SyntheticProbe { root: root.clone(), sign, digits_per_order: case.digits_per_order };
    let r = refine_bracket(&probe, (&lo, &hi), orientation, cfg.n_start, 1.0, case.target, &cfg)
        .map_err(|e| format!("{e} for {case:?}"))?;
    check_trace(&r.trace, &r.lo, &r.hi, cfg.n_cap)?;
    ensure(r.lo <= root && root <= r.hi, || format!("root {root} escaped final bracket [{}, {}] for {case:?}", r.lo, r.hi))?;
    ensure(r.digits() >= case.target, || format!("stopped at {} digits, target {}", r.digits(), case.target))
}

pub fn check_trace(trace: &[anharmonic::tuner::BracketStep], lo: &Float, hi: &Float, n_cap: usize) -> Check {
    let mut prev: Option<&anharmonic::tuner::BracketStep> = None;
    for (i, s) in trace.iter().enumerate() {
        ensure(s.lo < s.hi, || format!("step {i}: lo {} >= hi {}", s.lo, s.hi))?;
        ensure(s.order <= n_cap, || format!("step {i}: order {} above cap", s.order))?;
        if let Some(p) = prev {
            ensure(s.order >= p.order, || format!("step {i}: order fell {} -> {}", p.order, s.order))?;
            ensure(s.alpha <= p.alpha + 1e-12, || format!("step {i}: alpha rose {} -> {}", p.alpha, s.alpha))?;
            if s.kind == StepKind::Bisect {
                ensure(s.lo >= p.lo && s.hi <= p.hi, || format!("step {i}: bisection widened the bracket"))?;
                let w_prev = Float::with_val(s.lo.prec(), &p.hi - &p.lo);
                let w = Float::with_val(s.lo.prec(), &s.hi - &s.lo);
                ensure(w * 2u32 <= w_prev * (1.0 + 1e-9), || format!("step {i}: bisection did not halve"))?;
            }
        }
        prev = Some(s);
    }
    if let Some(last) = trace.last() {
        ensure(&last.lo == lo && &last.hi == hi, || "final bracket differs from last trace step".into())?;
    }
    Ok(())
}

// --------------------------------------------------------------------- runner

/// Runs `check` over `cases` inputs drawn from `strategy` with a fixed seed.
pub fn run_property<S: Strategy>(cases: u32, strategy: S, check: impl Fn(&S::Value) -> Check) -> Check
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner
        .run(&strategy, |v| check(&v).map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())
}
