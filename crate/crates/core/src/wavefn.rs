//! Samples of Ψ₀ = exp(W) and Ψ_q = P_q·Ψ₀ on a symmetric grid, kept inside the
//! radius where the truncated series can be trusted.
//!
//! The series live in the scaled variable y = x/c; samples are reported at the
//! physical x.

use rayon::prelude::*;
use rug::Float;

use crate::excited::{reliability_radius, ExcitedState, Parity};
use crate::numerics::{format_sig, PrecisionContext};
use crate::series::SeriesSolution;

#[derive(Clone, Debug)]
pub struct WavefunctionTable {
    pub grid: Vec<Float>,
    pub psi: Vec<Float>,
    /// Trusted half-width in physical x.
    pub reliability_radius: f64,
    pub q: usize,
    pub parity: Parity,
    pub digits: usize,
    /// Set when the requested range had to be cut back to the radius.
    pub warning: Option<String>,
}

impl WavefunctionTable {
    /// Metadata line, then `x,psi` rows as decimal strings.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# q={} parity={} r={:.6} digits={}",
            self.q, self.parity, self.reliability_radius, self.digits
        );
        if let Some(w) = &self.warning {
            out.push_str(&format!(" warning={}", w.replace(' ', "_")));
        }
        out.push_str("\nx,psi\n");
        for (x, p) in self.grid.iter().zip(&self.psi) {
            out.push_str(&format!("{},{}\n", format_sig(x, self.digits), format_sig(p, self.digits)));
        }
        out
    }

    /// Sign changes along the grid, skipping exact zeros.
    pub fn sign_changes(&self) -> usize {
        let signs: Vec<bool> = self.psi.iter().filter(|p| !p.is_zero()).map(|p| p.is_sign_positive()).collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Trusted radius in physical x for the ground series and, if given, a prefactor.
pub fn radius(ground: &SeriesSolution, state: Option<&ExcitedState>) -> f64 {
    let mut r = reliability_radius(&ground.a, 2).unwrap_or(f64::INFINITY);
    if let Some(s) = state {
        r = r.min(reliability_radius(&s.reduced(), 2).unwrap_or(f64::INFINITY));
    }
    r * ground.c.to_f64()
}

/// Ψ at physical x.
pub fn evaluate(ground: &SeriesSolution, state: Option<&ExcitedState>, x: &Float) -> Float {
    let prec = x.prec();
    let y = Float::with_val(prec, x / &ground.c);
    let psi = ground.log_psi(&y).exp();
    match state {
        Some(s) => s.prefactor(&y) * psi,
        None => psi,
    }
}

/// `grid_size` evenly spaced samples on [−R, R], R the trusted radius or
/// `range` if that is smaller.
pub fn sample(
    ground: &SeriesSolution,
    state: Option<&ExcitedState>,
    grid_size: usize,
    range: Option<f64>,
    digits: usize,
    ctx: &PrecisionContext,
) -> WavefunctionTable {
    let r = radius(ground, state);
    let mut warning = None;
    let reach = match range {
        Some(want) if want <= r => want,
        Some(want) => {
            warning = Some(format!("requested range {want} truncated to reliability radius {r:.6}"));
            r
        }
        None => r,
    };
    let bits = ctx.bits();
    let n = grid_size.max(2);
    let reach_f = Float::with_val(bits, reach);
    let grid: Vec<Float> = (0..n)
        .map(|i| {
            // x_i = R·(2i − (n−1))/(n−1): symmetric, exactly mirrored.
            let k = 2 * i as i64 - (n as i64 - 1);
            Float::with_val(bits, &reach_f * k) / (n as u32 - 1)
        })
        .collect();
    let psi = grid.par_iter().map(|x| evaluate(ground, state, x)).collect();
    let (q, parity) = match state {
        Some(s) => (s.q.unwrap_or(0), s.parity),
        None => (0, Parity::Even),
    };
    WavefunctionTable { grid, psi, reliability_radius: r, q, parity, digits, warning }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{ground_coefficients, KSign, ProblemSpec};

    fn ground(ctx: &PrecisionContext) -> SeriesSolution {
        let spec = ProblemSpec::scaled(2, KSign::Plus, ctx.parse("-3/16").unwrap(), 40);
        let a3 = ctx.parse("0.0193604372024595041920199753172").unwrap();
        ground_coefficients(&spec, &a3, ctx).unwrap()
    }

    #[test]
    fn ground_samples_even_positive_and_one_at_origin() {
        let ctx = PrecisionContext::for_order(20, 40);
        let g = ground(&ctx);
        let t = sample(&g, None, 21, None, 20, &ctx);
        assert_eq!(t.grid.len(), 21);
        assert!(t.grid[10].is_zero());
        assert_eq!(t.psi[10], 1);
        for i in 0..21 {
            assert!(t.psi[i].is_sign_positive() && !t.psi[i].is_zero());
            assert_eq!(t.psi[i], t.psi[20 - i]);
            assert!(t.grid[i].to_f64().abs() <= t.reliability_radius);
        }
        assert_eq!(t.sign_changes(), 0);
    }

    #[test]
    fn oversize_range_is_cut_with_warning() {
        let ctx = PrecisionContext::for_order(20, 40);
        let g = ground(&ctx);
        let t = sample(&g, None, 5, Some(1e6), 10, &ctx);
        assert!(t.warning.is_some());
        let t = sample(&g, None, 5, Some(0.1), 10, &ctx);
        assert!(t.warning.is_none());
        assert!(t.to_csv().starts_with("# q=0 parity=even"));
    }
}
