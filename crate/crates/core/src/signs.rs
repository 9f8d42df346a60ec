//! Closed-form one-dimensional harmonic overlaps and the product sign rule
//! used to restore signs of sampled amplitudes.

use crate::error::{HqcsError, Result};
use crate::focksim::AmplitudeTable;

/// Largest quantum number for which the closed form is evaluated.
pub const MAX_ANALYTIC_QUANTUM: usize = 170;

/// Parameters of `⟨χ_i^0|χ_m^v⟩` for two 1-D oscillators whose minima differ
/// by `shift = q_i,min - q_m,min` along the shared coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneModeOverlapParams {
    pub beta_i: f64,
    pub beta_m: f64,
    pub shift: f64,
    pub quantum: usize,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `⟨χ_i^0|χ_m^v⟩ = Γ Δq^v Σ_l C_l`, summed in log space with signs tracked
/// separately.
pub fn one_mode_overlap_analytic(p: &OneModeOverlapParams) -> Result<f64> {
    if !(p.beta_i > 0.0) || !(p.beta_m > 0.0) {
        return Err(HqcsError::InvalidParameter {
            mode: 0,
            reason: format!("oscillator constants must be positive ({}, {})", p.beta_i, p.beta_m),
        });
    }
    let v = p.quantum;
    if v > MAX_ANALYTIC_QUANTUM {
        return Err(HqcsError::Overflow(format!(
            "quantum {v} exceeds the factorial guard {MAX_ANALYTIC_QUANTUM}"
        )));
    }
    if p.beta_m < p.beta_i {
        log::warn!(
            "intermediate frequency {} below initial {}; sign rule only approximate",
            p.beta_m,
            p.beta_i
        );
    }
    let (bi, bm, dq) = (p.beta_i, p.beta_m, p.shift);
    let sum = bi + bm;
    let ln_gamma = 0.5 * (ln_factorial(v) - v as f64 * 2f64.ln() + (2.0 * (bi * bm).sqrt() / sum).ln())
        - bi * bm * dq * dq / (2.0 * sum);

    // Δq^v · C_l = Δq^l (2 βi √βm / (βi+βm))^l / l! · r^k / k!, k = (v-l)/2
    let x = 2.0 * bi * bm.sqrt() * dq / sum;
    let r = (bm - bi) / sum;
    let mut terms: Vec<(f64, f64)> = Vec::new();
    for l in (v % 2..=v).step_by(2) {
        let k = (v - l) / 2;
        if l > 0 && x == 0.0 {
            continue;
        }
        if k > 0 && r == 0.0 {
            continue;
        }
        let mut ln = -ln_factorial(l) - ln_factorial(k);
        let mut sign = 1.0;
        if l > 0 {
            ln += l as f64 * x.abs().ln();
            if x < 0.0 && l % 2 == 1 {
                sign = -sign;
            }
        }
        if k > 0 {
            ln += k as f64 * r.abs().ln();
            if r < 0.0 && k % 2 == 1 {
                sign = -sign;
            }
        }
        terms.push((sign, ln));
    }
    let Some(max_ln) = terms.iter().map(|t| t.1).reduce(f64::max) else {
        return Ok(0.0);
    };
    let scaled: f64 = terms.iter().map(|(s, ln)| s * (ln - max_ln).exp()).sum();
    Ok(scaled * (ln_gamma + max_ln).exp())
}

/// `sgn(Δq)` with `sgn(0) = +1`.
pub fn sign_of(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `Π_n sgn(Δq_n)^{v_n}`.
pub fn config_sign(shift: &[f64], occupation: &[u16]) -> f64 {
    shift
        .iter()
        .zip(occupation)
        .filter(|(dq, v)| **dq < 0.0 && **v % 2 == 1)
        .fold(1.0, |acc, _| -acc)
}

/// Probability mass of the table on configurations where the 1-D sign rule
/// has no analytic backing: some excited mode has zero displacement or an
/// intermediate frequency below the initial one.
pub fn inapplicable_mass(
    table: &AmplitudeTable,
    shift: &[f64],
    initial_frequencies: &[f64],
    intermediate_frequencies: &[f64],
) -> f64 {
    let weak: Vec<bool> = (0..shift.len())
        .map(|n| shift[n] == 0.0 || intermediate_frequencies[n] < initial_frequencies[n])
        .collect();
    let mut mass = 0.0;
    for (i, a) in table.amplitudes.iter().enumerate() {
        if *a == 0.0 {
            continue;
        }
        let occ = table.basis.occupation(i);
        if occ.iter().zip(&weak).any(|(v, w)| *w && *v > 0) {
            mass += a * a;
        }
    }
    mass
}
