//! Growth-rate comparison of the asymmetric well against its parts.

use pairwell_core::observables::{growth_rate, Channel, NumberSeries};
use pairwell_core::{Error, Result};

/// Relative tolerance inside which `Γ_A` and `Γ_B + Γ_C` count as equal.
pub const ADDITIVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Superadditive,
    Additive,
    Subadditive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Superadditive => "superadditive",
            Verdict::Additive => "additive",
            Verdict::Subadditive => "subadditive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// Asymmetric well.
    pub gamma_a: f64,
    /// Well-only surrogate.
    pub gamma_b: f64,
    /// Step only; zero when absent.
    pub gamma_c: f64,
    pub verdict: Verdict,
}

impl Comparison {
    pub fn sum_parts(&self) -> f64 {
        self.gamma_b + self.gamma_c
    }
}

pub fn verdict(gamma_a: f64, parts: f64, rel_tol: f64) -> Verdict {
    let scale = gamma_a.abs().max(parts.abs()).max(f64::MIN_POSITIVE);
    if (gamma_a - parts).abs() <= rel_tol * scale {
        Verdict::Additive
    } else if gamma_a > parts {
        Verdict::Superadditive
    } else {
        Verdict::Subadditive
    }
}

/// Late-window positron growth rates of three runs sharing one time grid.
pub fn enhancement_compare(
    a: &NumberSeries,
    b: &NumberSeries,
    c: Option<&NumberSeries>,
    window: (f64, f64),
) -> Result<Comparison> {
    for (name, s) in [("well", Some(b)), ("step", c)] {
        if let Some(s) = s {
            if s.times != a.times {
                return Err(Error::Mismatch(format!(
                    "{name} run uses a different time grid from the asymmetric run"
                )));
            }
        }
    }
    let rate = |s: &NumberSeries| growth_rate(s, Channel::Positron, window);
    let gamma_a = rate(a)?;
    let gamma_b = rate(b)?;
    let gamma_c = c.map(rate).transpose()?.unwrap_or(0.0);
    Ok(Comparison {
        gamma_a,
        gamma_b,
        gamma_c,
        verdict: verdict(gamma_a, gamma_b + gamma_c, ADDITIVE_TOL),
    })
}
