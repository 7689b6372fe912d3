//! Independent eigenvalue check: the Hamiltonian −d²/dx² + ρx² + g·x^{2M}
//! truncated to the lowest eigenfunctions of −d²/dx² + ω²x² and diagonalized
//! at fixed extended precision.
//!
//! Position matrix elements come from the tridiagonal x operator,
//! ⟨n|x|n+1⟩ = √((n+1)/(2ω)); higher even powers are repeated products of it.
//! The potential is parity-even, so the matrix splits into even and odd blocks
//! that are reduced to tridiagonal form by Householder reflections and solved
//! by Sturm-sequence bisection.

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Assign, Float};
use serde_json::{json, Value};
use thiserror::Error;

use crate::excited::Parity;
use crate::numerics::{format_sig, PrecisionContext};

/// Decimal digits the matrix is assembled and diagonalized at.
pub const ORACLE_DIGITS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle spec: {0}")]
    Invalid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("oracle-failure: {0}")]
    Failure(String),
}

impl OracleError {
    pub fn signal(&self) -> &'static str {
        match self {
            OracleError::Invalid(_) => "invalid-spec",
            OracleError::Domain(_) => "domain",
            OracleError::Failure(_) => "oracle-failure",
        }
    }
}

/// Basis frequency that converges well for x^{2M}: wider potentials want a
/// stiffer basis.
pub fn default_omega(m: u32) -> u32 {
    m.saturating_sub(1).max(1)
}

/// Context every oracle computation runs in.
pub fn oracle_context() -> PrecisionContext {
    PrecisionContext::for_order(ORACLE_DIGITS, 0)
}

#[derive(Clone, Debug)]
pub struct OracleSpec {
    pub m: u32,
    pub g: Float,
    pub rho: Float,
    pub basis_size: usize,
    pub omega: Float,
    pub levels: usize,
}

impl OracleSpec {
    /// Spec with ω = 1.
    pub fn new(m: u32, g: Float, rho: Float, basis_size: usize, levels: usize) -> Self {
        let omega = Float::with_val(g.prec(), 1);
        Self { m, g, rho, basis_size, omega, levels }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.m < 1 {
            return Err(OracleError::Invalid("M must be at least 1".into()));
        }
        if self.levels == 0 {
            return Err(OracleError::Invalid("at least one level must be requested".into()));
        }
        if self.basis_size < 4 * self.levels + 8 {
            return Err(OracleError::Invalid(format!(
                "basis size {} below 4·levels + 8 = {}",
                self.basis_size,
                4 * self.levels + 8
            )));
        }
        if self.omega <= 0 {
            return Err(OracleError::Invalid("omega must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "M": self.m,
            "g": format_sig(&self.g, 20),
            "rho": format_sig(&self.rho, 20),
            "basis": self.basis_size,
            "omega": format_sig(&self.omega, 20),
            "levels": self.levels,
        })
    }
}

/// Applies the x operator to a vector in a basis of `len` states.
fn apply_x(v: &[Float], hop: &[Float], bits: u32) -> Vec<Float> {
    let len = v.len();
    let mut out = vec![Float::new(bits); len];
    let mut t = Float::new(bits);
    for n in 0..len {
        if v[n].is_zero() {
            continue;
        }
        if n + 1 < len {
            t.assign(&v[n] * &hop[n]);
            out[n + 1] += &t;
        }
        if n > 0 {
            t.assign(&v[n] * &hop[n - 1]);
            out[n - 1] += &t;
        }
    }
    out
}

/// ⟨n|x|n+1⟩ for n = 0..len−1.
fn hopping(len: usize, omega: &Float, bits: u32) -> Vec<Float> {
    let two_omega = Float::with_val(bits, omega * 2u32);
    (0..len)
        .map(|n| (Float::with_val(bits, n + 1) / &two_omega).sqrt())
        .collect()
}

/// x^power applied to basis state j, exact in a basis wide enough to hold it.
fn power_column(j: usize, power: u32, hop: &[Float], bits: u32) -> Vec<Float> {
    let len = j + power as usize + 1;
    let mut v = vec![Float::new(bits); len];
    v[j] = Float::with_val(bits, 1);
    for _ in 0..power {
        v = apply_x(&v, &hop[..len], bits);
    }
    v
}

/// ⟨i|x^power|j⟩; `power` must be even.
pub fn matrix_element(i: usize, j: usize, power: u32, omega: &Float, ctx: &PrecisionContext) -> Result<Float, OracleError> {
    if power % 2 == 1 {
        return Err(OracleError::Domain(format!("odd power x^{power} breaks parity")));
    }
    if *omega <= 0 {
        return Err(OracleError::Domain("omega must be positive".into()));
    }
    let bits = ctx.bits();
    if i.abs_diff(j) > power as usize || (i + j) % 2 == 1 {
        return Ok(Float::new(bits));
    }
    let hop = hopping(j + power as usize + 1, omega, bits);
    let col = power_column(j, power, &hop, bits);
    Ok(col.get(i).cloned().unwrap_or_else(|| Float::new(bits)))
}

/// Full truncated Hamiltonian, row-major and exactly symmetric.
pub fn hamiltonian(spec: &OracleSpec, ctx: &PrecisionContext) -> Vec<Vec<Float>> {
    let bits = ctx.bits();
    let b = spec.basis_size;
    let big = 2 * spec.m;
    let hop = hopping(b + big as usize + 1, &spec.omega, bits);
    let omega = Float::with_val(bits, &spec.omega);
    let shift = Float::with_val(bits, &spec.rho) - Float::with_val(bits, &omega * &omega);
    let g = Float::with_val(bits, &spec.g);
    let columns: Vec<Vec<Float>> = (0..b)
        .into_par_iter()
        .map(|j| {
            let x2 = power_column(j, 2, &hop, bits);
            let xm = power_column(j, big, &hop, bits);
            // Upper triangle only (i ≤ j); mirrored below.
            (0..=j)
                .map(|i| {
                    let mut h = Float::with_val(bits, x2.get(i).unwrap_or(&Float::new(bits)) * &shift);
                    h += Float::with_val(bits, xm.get(i).unwrap_or(&Float::new(bits)) * &g);
                    if i == j {
                        h += Float::with_val(bits, &omega * (2 * i + 1) as u32);
                    }
                    h
                })
                .collect()
        })
        .collect();
    let mut h = vec![vec![Float::new(bits); b]; b];
    for (j, col) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            h[j][i] = v.clone();
            h[i][j] = v;
        }
    }
    h
}

/// Householder reduction of a symmetric matrix to tridiagonal (d, e).
fn tridiagonalize(mut a: Vec<Vec<Float>>, bits: u32) -> (Vec<Float>, Vec<Float>) {
    let n = a.len();
    let mut t = Float::new(bits);
    for k in 0..n.saturating_sub(2) {
        let mut norm2 = Float::new(bits);
        for row in a.iter().skip(k + 1) {
            t.assign(row[k].square_ref());
            norm2 += &t;
        }
        if norm2.is_zero() {
            continue;
        }
        let norm = Float::with_val(bits, norm2.sqrt_ref());
        let alpha = if a[k + 1][k].is_sign_negative() { norm } else { -norm };
        let mut v: Vec<Float> = (k + 1..n).map(|i| a[i][k].clone()).collect();
        v[0] -= &alpha;
        let mut vn2 = Float::new(bits);
        for x in &v {
            t.assign(x.square_ref());
            vn2 += &t;
        }
        if vn2.is_zero() {
            continue;
        }
        let vn = vn2.sqrt();
        for x in v.iter_mut() {
            *x /= &vn;
        }
        let m = v.len();
        // p = A_sub·v, w = p − (vᵀp)v, A_sub ← A_sub − 2vwᵀ − 2wvᵀ.
        let p: Vec<Float> = (0..m)
            .map(|r| {
                let row = &a[k + 1 + r];
                let mut s = Float::new(bits);
                let mut t = Float::new(bits);
                for (c, vc) in v.iter().enumerate() {
                    t.assign(&row[k + 1 + c] * vc);
                    s += &t;
                }
                s
            })
            .collect();
        let mut vp = Float::new(bits);
        for (x, y) in v.iter().zip(&p) {
            t.assign(x * y);
            vp += &t;
        }
        let w: Vec<Float> = v
            .iter()
            .zip(&p)
            .map(|(x, y)| Float::with_val(bits, y - Float::with_val(bits, x * &vp)))
            .collect();
        for r in 0..m {
            for c in 0..m {
                t.assign(&v[r] * &w[c]);
                let mut u = Float::with_val(bits, &w[r] * &v[c]);
                u += &t;
                u *= 2u32;
                a[k + 1 + r][k + 1 + c] -= &u;
            }
        }
        a[k + 1][k].assign(&alpha);
        a[k][k + 1].assign(&alpha);
        for i in k + 2..n {
            a[i][k] = Float::new(bits);
            a[k][i] = Float::new(bits);
        }
    }
    let d = (0..n).map(|i| a[i][i].clone()).collect();
    let e = (0..n.saturating_sub(1)).map(|i| a[i + 1][i].clone()).collect();
    (d, e)
}

/// Number of eigenvalues of the tridiagonal (d, e) below x.
fn sturm_count(d: &[Float], e2: &[Float], x: &Float, tiny: &Float, bits: u32) -> usize {
    let mut count = 0;
    let mut q = Float::with_val(bits, &d[0] - x);
    let mut t = Float::new(bits);
    for i in 0..d.len() {
        if i > 0 {
            t.assign(&e2[i - 1] / &q);
            q.assign(&d[i] - x);
            q -= &t;
        }
        if q.is_zero() {
            q.assign(tiny);
        }
        if q.is_sign_negative() {
            count += 1;
        }
    }
    count
}

/// The k lowest eigenvalues of a symmetric tridiagonal matrix, ascending.
fn lowest_eigenvalues(d: &[Float], e: &[Float], k: usize, bits: u32) -> Vec<Float> {
    let n = d.len();
    let e2: Vec<Float> = e.iter().map(|x| Float::with_val(bits, x.square_ref())).collect();
    // Gershgorin bounds.
    let mut lo = Float::with_val(bits, &d[0]);
    let mut hi = Float::with_val(bits, &d[0]);
    for i in 0..n {
        let mut r = Float::new(bits);
        if i > 0 {
            r += Float::with_val(bits, e[i - 1].abs_ref());
        }
        if i + 1 < n {
            r += Float::with_val(bits, e[i].abs_ref());
        }
        lo = lo.min(&Float::with_val(bits, &d[i] - &r));
        hi = hi.max(&Float::with_val(bits, &d[i] + &r));
    }
    let span = Float::with_val(bits, &hi - &lo) + 1u32;
    lo -= &span / Float::with_val(bits, 1000);
    hi += &span / Float::with_val(bits, 1000);
    let tiny = Float::with_val(bits, Float::with_val(bits, 2).pow(-(bits as i32) + 8)) * &span;
    (0..k.min(n))
        .into_par_iter()
        .map(|idx| {
            let mut a = lo.clone();
            let mut b = hi.clone();
            for _ in 0..bits + 64 {
                let mid = Float::with_val(bits, &a + &b) / 2u32;
                if mid == a || mid == b {
                    break;
                }
                if sturm_count(d, &e2, &mid, &tiny, bits) > idx {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            Float::with_val(bits, &a + &b) / 2u32
        })
        .collect()
}

/// Solves (A − shift)x = rhs by Gaussian elimination with partial pivoting.
fn shifted_solve(a: &[Vec<Float>], shift: &Float, rhs: &[Float], bits: u32) -> Option<Vec<Float>> {
    let n = a.len();
    let mut m: Vec<Vec<Float>> = a.to_vec();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= shift;
    }
    let mut b = rhs.to_vec();
    let mut t = Float::new(bits);
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].clone().abs().partial_cmp(&m[y][col].clone().abs()).unwrap())?;
        if m[pivot][col].is_zero() {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let f = Float::with_val(bits, &m[r][col] / &m[col][col]);
            for c in col..n {
                t.assign(&f * &m[col][c]);
                m[r][c] -= &t;
            }
            t.assign(&f * &b[col]);
            b[r] -= &t;
        }
    }
    let mut x = vec![Float::new(bits); n];
    for r in (0..n).rev() {
        let mut s = b[r].clone();
        for c in r + 1..n {
            t.assign(&m[r][c] * &x[c]);
            s -= &t;
        }
        x[r] = s / &m[r][r];
    }
    Some(x)
}

/// Unit eigenvector for a known eigenvalue by inverse iteration, sign fixed so
/// the first sizeable component is positive.
fn eigenvector(a: &[Vec<Float>], value: &Float, bits: u32) -> Option<Vec<Float>> {
    let n = a.len();
    let nudge = Float::with_val(bits, Float::with_val(bits, 2).pow(-(bits as i32) / 2)) * (Float::with_val(bits, value.abs_ref()) + 1u32);
    let shift = Float::with_val(bits, value + &nudge);
    let mut v = vec![Float::with_val(bits, 1); n];
    for _ in 0..3 {
        let x = shifted_solve(a, &shift, &v, bits)?;
        let norm = x.iter().fold(Float::new(bits), |s, y| s + Float::with_val(bits, y.square_ref())).sqrt();
        if norm.is_zero() {
            return None;
        }
        v = x.into_iter().map(|y| y / &norm).collect();
    }
    let big = v.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|x| x.to_f64().abs() > 1e-3 * big) {
        if first.is_sign_negative() {
            for x in v.iter_mut() {
                *x = -x.clone();
            }
        }
    }
    Some(v)
}

#[derive(Clone, Debug)]
pub struct OracleLevel {
    pub energy: Float,
    pub parity: Parity,
    /// Coefficients over the full basis when requested.
    pub vector: Option<Vec<Float>>,
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub spec: OracleSpec,
    pub levels: Vec<OracleLevel>,
}

impl OracleSolution {
    pub fn energies(&self) -> Vec<Float> {
        self.levels.iter().map(|l| l.energy.clone()).collect()
    }

    pub fn to_json(&self, digits: usize) -> Value {
        json!({
            "spec": self.spec.to_json(),
            "eigenvalues": self.levels.iter().map(|l| format_sig(&l.energy, digits)).collect::<Vec<_>>(),
            "parities": self.levels.iter().map(|l| l.parity.to_string()).collect::<Vec<_>>(),
        })
    }
}

/// Lowest `spec.levels` eigenvalues, ascending, optionally with eigenvectors.
pub fn diagonalize(spec: &OracleSpec, with_vectors: bool) -> Result<OracleSolution, OracleError> {
    spec.validate()?;
    let ctx = oracle_context();
    let bits = ctx.bits();
    let h = hamiltonian(spec, &ctx);
    let b = spec.basis_size;
    let mut levels = Vec::new();
    for parity in [Parity::Even, Parity::Odd] {
        let idx: Vec<usize> = (parity.offset()..b).step_by(2).collect();
        let block: Vec<Vec<Float>> = idx.iter().map(|&i| idx.iter().map(|&j| h[i][j].clone()).collect()).collect();
        let (d, e) = tridiagonalize(block.clone(), bits);
        let values = lowest_eigenvalues(&d, &e, spec.levels, bits);
        for value in values {
            if !value.is_finite() {
                return Err(OracleError::Failure("non-finite eigenvalue".into()));
            }
            let vector = if with_vectors {
                let v = eigenvector(&block, &value, bits)
                    .ok_or_else(|| OracleError::Failure("inverse iteration broke down".into()))?;
                let mut full = vec![Float::new(bits); b];
                for (k, &i) in idx.iter().enumerate() {
                    full[i] = v[k].clone();
                }
                Some(full)
            } else {
                None
            };
            levels.push(OracleLevel { energy: value, parity, vector });
        }
    }
    levels.sort_by(|x, y| x.energy.partial_cmp(&y.energy).unwrap());
    levels.truncate(spec.levels);
    Ok(OracleSolution { spec: spec.clone(), levels })
}

/// Σ_n v_n ψ_n(x) with ψ_n the normalized eigenfunctions of −d²/dx² + ω²x².
pub fn eigenfunction(vector: &[Float], omega: &Float, x: &Float) -> Float {
    let bits = x.prec();
    let root_omega = Float::with_val(bits, omega.sqrt_ref());
    let xi = Float::with_val(bits, x * &root_omega);
    let pi = Float::with_val(bits, rug::float::Constant::Pi);
    let norm = Float::with_val(bits, omega / pi).root(4);
    let gauss = Float::with_val(bits, -Float::with_val(bits, xi.square_ref()) / 2u32).exp();
    let mut prev = Float::new(bits);
    let mut cur = norm * gauss;
    let mut sum = Float::new(bits);
    for (n, c) in vector.iter().enumerate() {
        sum += Float::with_val(bits, c * &cur);
        let a = Float::with_val(bits, Float::with_val(bits, 2) / (n + 1) as u32).sqrt();
        let b = Float::with_val(bits, Float::with_val(bits, n as u32) / (n + 1) as u32).sqrt();
        let next = Float::with_val(bits, &a * &xi) * &cur - b * &prev;
        prev = cur;
        cur = next;
    }
    sum
}
