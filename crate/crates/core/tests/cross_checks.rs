//! Series-method results against the basis-diagonalization oracle, plus checks
//! that the test oracles themselves notice a corrupted input.

mod common;

use anharmonic::excited::{excited_config, tune_excited, Parity};
use anharmonic::numerics::{agreeing_digits, PrecisionContext};
use anharmonic::oracle::{diagonalize, eigenfunction, oracle_context, OracleSpec};
use anharmonic::series::{ground_coefficients, KSign, ProblemSpec, SeriesSolution};
use anharmonic::tuner::TuneConfig;
use anharmonic::wavefn::evaluate;
use rug::Float;

const QUARTIC_A3: &str = "0.01936043720245950419201997531721233596425589581549397570027615152";
const QUARTIC_E0: &str = "1.0603620904841828996470460166926635455152087285289779332162452417";

fn quartic(order: usize, ctx: &PrecisionContext) -> SeriesSolution {
    let spec = ProblemSpec::scaled(2, KSign::Plus, ctx.parse("-3/16").unwrap(), order);
    ground_coefficients(&spec, &ctx.parse(QUARTIC_A3).unwrap(), ctx).unwrap()
}

#[test]
fn residual_oracle_detects_a_corrupted_coefficient() {
    let ctx = PrecisionContext::for_order(40, 30);
    let mut sol = quartic(30, &ctx);
    let clean = common::ground_residuals(&sol);
    assert!(clean.iter().all(|(r, s)| r.clone().abs() <= s.clone() * 1e-35));
    let bump = Float::with_val(ctx.bits(), 1) + Float::with_val(ctx.bits(), 1e-20);
    sol.a[7] *= bump;
    let dirty = common::ground_residuals(&sol);
    assert!(dirty.iter().any(|(r, s)| r.clone().abs() > s.clone() * 1e-35));
}

#[test]
fn oracle_is_robust_to_basis_frequency() {
    let ctx = oracle_context();
    let mut a = OracleSpec::new(2, ctx.real(1), ctx.zero(), 200, 4);
    let e1 = diagonalize(&a, false).unwrap().energies();
    a.omega = ctx.real(2);
    let e2 = diagonalize(&a, false).unwrap().energies();
    for (x, y) in e1.iter().zip(&e2) {
        assert!(agreeing_digits(x, y) >= 25.0, "{x} vs {y}");
    }
    assert!(agreeing_digits(&e1[0], &ctx.parse(QUARTIC_E0).unwrap()) >= 28.0);
}

#[test]
fn oracle_reproduces_the_exact_sextic_zero() {
    let ctx = oracle_context();
    let mut spec = OracleSpec::new(3, ctx.real(1), ctx.real(-3), 200, 2);
    spec.omega = ctx.real(2);
    let e = diagonalize(&spec, false).unwrap().energies();
    // Basis truncation leaves about 1e-26 at this size.
    assert!(e[0].clone().abs() < 1e-20, "E0 = {}", e[0]);
}

#[test]
fn series_wavefunction_matches_oracle_eigenvector() {
    let ctx = PrecisionContext::for_order(40, 100);
    let ground = quartic(100, &ctx);
    let octx = oracle_context();
    let spec = OracleSpec::new(2, octx.real(1), octx.zero(), 200, 1);
    let sol = diagonalize(&spec, true).unwrap();
    let v = sol.levels[0].vector.as_ref().unwrap();
    for x in ["0.2", "0.5", "1.0"] {
        let xo = octx.parse(x).unwrap();
        let ratio = Float::with_val(octx.bits(), eigenfunction(v, &spec.omega, &xo) / eigenfunction(v, &spec.omega, &octx.zero()));
        let series = evaluate(&ground, None, &ctx.parse(x).unwrap());
        let digits = agreeing_digits(&Float::with_val(octx.bits(), &series), &ratio);
        assert!(digits >= 6.0, "x = {x}: series {series} vs oracle {ratio} ({digits:.1} digits)");
    }
}

#[test]
fn second_excitation_nodes_match_oracle_eigenvector() {
    let cfg = TuneConfig { n_cap: 192, ..TuneConfig::default() };
    let ctx = cfg.max_context(16);
    let ground = quartic(192, &ctx);
    let states = tune_excited(&ground, Parity::Even, ("-6", "-0.5"), 8, &excited_config(&cfg, 2)).unwrap();
    assert_eq!(states.len(), 1);
    assert_eq!(states[0].nodes, Some(2));
    assert_eq!(states[0].q, Some(2));

    let octx = oracle_context();
    let spec = OracleSpec::new(2, octx.real(1), octx.zero(), 120, 3);
    let sol = diagonalize(&spec, true).unwrap();
    let v = sol.levels[2].vector.as_ref().unwrap();
    let samples: Vec<bool> = (0..=400)
        .map(|i| {
            let x = octx.real(-4.0 + 8.0 * i as f64 / 400.0);
            eigenfunction(v, &spec.omega, &x).is_sign_positive()
        })
        .collect();
    let flips = samples.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(flips, 2);
    assert!(agreeing_digits(&Float::with_val(octx.bits(), &states[0].energy), &sol.levels[2].energy) >= 8.0);
}
