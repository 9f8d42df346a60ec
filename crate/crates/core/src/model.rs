//! Two-surface vibronic model: harmonic initial surface, 1-mode-representation
//! final surface, Duschinsky relation `q_f = S q_i + Δq`, and unit handling.
//!
//! Everything is stored in hartree and mass-weighted atomic units. Conversions
//! happen only when reading model files or writing spectra.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HqcsError, Result};

/// 1 hartree in cm⁻¹ (CODATA 2018).
pub const HARTREE_TO_CM1: f64 = 219_474.631_363_2;
/// 1 hartree in eV (CODATA 2018).
pub const HARTREE_TO_EV: f64 = 27.211_386_245_988;

/// Max-norm tolerance on `SᵀS - I`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyUnit {
    #[serde(rename = "au")]
    Hartree,
    #[serde(rename = "cm-1")]
    Wavenumber,
    #[serde(rename = "eV")]
    ElectronVolt,
}

impl EnergyUnit {
    fn per_hartree(self) -> f64 {
        match self {
            EnergyUnit::Hartree => 1.0,
            EnergyUnit::Wavenumber => HARTREE_TO_CM1,
            EnergyUnit::ElectronVolt => HARTREE_TO_EV,
        }
    }
}

impl FromStr for EnergyUnit {
    type Err = HqcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "au" | "a.u." | "hartree" | "Eh" => Ok(EnergyUnit::Hartree),
            "cm-1" | "cm^-1" | "cm⁻¹" | "wavenumber" => Ok(EnergyUnit::Wavenumber),
            "eV" | "ev" => Ok(EnergyUnit::ElectronVolt),
            other => Err(HqcsError::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for EnergyUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnergyUnit::Hartree => "au",
            EnergyUnit::Wavenumber => "cm-1",
            EnergyUnit::ElectronVolt => "eV",
        };
        f.write_str(s)
    }
}

/// Linear energy conversion between hartree, cm⁻¹ and eV.
pub fn convert_units(value: f64, from: EnergyUnit, to: EnergyUnit) -> f64 {
    if from == to {
        return value;
    }
    value / from.per_hartree() * to.per_hartree()
}

/// String-tagged variant of [`convert_units`].
pub fn convert_units_named(value: f64, from: &str, to: &str) -> Result<f64> {
    Ok(convert_units(value, from.parse()?, to.parse()?))
}

pub fn cm1_to_hartree(value: f64) -> f64 {
    convert_units(value, EnergyUnit::Wavenumber, EnergyUnit::Hartree)
}

pub fn hartree_to_cm1(value: f64) -> f64 {
    convert_units(value, EnergyUnit::Hartree, EnergyUnit::Wavenumber)
}

/// Zero-based normal-mode index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex(pub usize);

/// `V = Σ ½ ω_n² q_n² + V_eq`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPes {
    pub frequencies: Vec<f64>,
    pub energy_offset: f64,
}

impl HarmonicPes {
    pub fn new(frequencies: Vec<f64>) -> Self {
        Self {
            frequencies,
            energy_offset: 0.0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn zero_point_energy(&self) -> f64 {
        self.frequencies.iter().sum::<f64>() / 2.0
    }
}

/// One-dimensional potential of a single final-state mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OneModePotential {
    /// `½ ω² q²`
    Harmonic { omega: f64 },
    /// `D (1 - exp(-α q))²`
    Morse { depth: f64, alpha: f64 },
    /// `Σ_{j=1..p} c_j q^j`; `coefficients[0]` is `c_1`.
    Polynomial { coefficients: Vec<f64> },
}

impl OneModePotential {
    /// Morse potential whose harmonic frequency at the minimum is `omega`.
    pub fn morse_from_frequency(depth: f64, omega: f64) -> Self {
        OneModePotential::Morse {
            depth,
            alpha: omega / (2.0 * depth).sqrt(),
        }
    }

    pub fn eval(&self, q: f64) -> f64 {
        match self {
            OneModePotential::Harmonic { omega } => 0.5 * omega * omega * q * q,
            OneModePotential::Morse { depth, alpha } => {
                let x = 1.0 - (-alpha * q).exp();
                depth * x * x
            }
            OneModePotential::Polynomial { coefficients } => {
                // Horner on c_p q^p + ... + c_1 q
                let mut acc = 0.0;
                for c in coefficients.iter().rev() {
                    acc = (acc + c) * q;
                }
                acc
            }
        }
    }

    /// Curvature frequency at `q = 0`, where it is defined analytically.
    pub fn harmonic_frequency(&self) -> Option<f64> {
        match self {
            OneModePotential::Harmonic { omega } => Some(*omega),
            OneModePotential::Morse { depth, alpha } => Some((2.0 * alpha * alpha * depth).sqrt()),
            OneModePotential::Polynomial { coefficients } => {
                let c2 = coefficients.get(1).copied().unwrap_or(0.0);
                (c2 > 0.0).then(|| (2.0 * c2).sqrt())
            }
        }
    }

    fn validate(&self, mode: usize) -> Result<()> {
        let bad = |reason: &str| HqcsError::InvalidParameter {
            mode,
            reason: reason.to_string(),
        };
        match self {
            OneModePotential::Harmonic { omega } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(HqcsError::NonPositiveFrequency {
                        surface: "final potential",
                        mode,
                        value: *omega,
                    });
                }
            }
            OneModePotential::Morse { depth, alpha } => {
                if !(depth.is_finite() && *depth > 0.0) {
                    return Err(bad("Morse depth must be positive"));
                }
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(bad("Morse range parameter must be positive"));
                }
            }
            OneModePotential::Polynomial { coefficients } => {
                if coefficients.is_empty() {
                    return Err(bad("polynomial has no coefficients"));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(bad("polynomial coefficient is not finite"));
                }
            }
        }
        Ok(())
    }
}

/// `q_f = S q_i + Δq`.
#[derive(Clone, Debug, PartialEq)]
pub struct DuschinskyMap {
    pub rotation: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl DuschinskyMap {
    pub fn new(rotation: DMatrix<f64>, shift: DVector<f64>) -> Self {
        Self { rotation, shift }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rotation: DMatrix::identity(n, n),
            shift: DVector::zeros(n),
        }
    }

    /// Build from the inverse relation `q_i = S' q_f + Δq'`.
    pub fn from_inverse(s_inv: DMatrix<f64>, shift_inv: DVector<f64>) -> Self {
        let rotation = s_inv.transpose();
        let shift = -(&rotation * shift_inv);
        Self { rotation, shift }
    }

    pub fn n_modes(&self) -> usize {
        self.shift.len()
    }
}

/// Max-norm of `SᵀS - I` together with its location.
pub fn orthogonality_deviation(s: &DMatrix<f64>) -> (f64, usize, usize) {
    let g = s.transpose() * s;
    let mut worst = (0.0, 0, 0);
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (g[(i, j)] - target).abs();
            if dev > worst.0 || dev.is_nan() {
                worst = (dev, i, j);
            }
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct VibronicModel {
    pub initial: HarmonicPes,
    pub final_potentials: Vec<OneModePotential>,
    /// Harmonic frequencies of the final surface at its minimum; these define
    /// the intermediate surface.
    pub final_frequencies: Vec<f64>,
    pub duschinsky: DuschinskyMap,
    /// `V_i(0) - V_f(0)`, hartree.
    pub adiabatic_gap: f64,
    pub transition_dipole: f64,
}

impl VibronicModel {
    pub fn n_modes(&self) -> usize {
        self.initial.n_modes()
    }

    pub fn validate(self) -> Result<Self> {
        validate_model(self)
    }

    /// Fully harmonic model: the final potentials are `½ω_f² q²`.
    pub fn harmonic(
        initial_frequencies: Vec<f64>,
        final_frequencies: Vec<f64>,
        duschinsky: DuschinskyMap,
        adiabatic_gap: f64,
    ) -> Self {
        let final_potentials = final_frequencies
            .iter()
            .map(|&omega| OneModePotential::Harmonic { omega })
            .collect();
        Self {
            initial: HarmonicPes::new(initial_frequencies),
            final_potentials,
            final_frequencies,
            duschinsky,
            adiabatic_gap,
            transition_dipole: 1.0,
        }
    }
}

/// Returns the model unchanged iff every invariant of the model types holds.
pub fn validate_model(model: VibronicModel) -> Result<VibronicModel> {
    let n = model.initial.n_modes();
    if n == 0 {
        return Err(HqcsError::DimensionMismatch {
            what: "initial frequencies".into(),
            expected: 1,
            found: 0,
        });
    }
    let check_len = |what: &str, found: usize| {
        if found == n {
            Ok(())
        } else {
            Err(HqcsError::DimensionMismatch {
                what: what.to_string(),
                expected: n,
                found,
            })
        }
    };
    check_len("final potentials", model.final_potentials.len())?;
    check_len("final frequencies", model.final_frequencies.len())?;
    check_len("Duschinsky shift", model.duschinsky.shift.len())?;
    check_len("Duschinsky matrix rows", model.duschinsky.rotation.nrows())?;
    check_len("Duschinsky matrix columns", model.duschinsky.rotation.ncols())?;

    for (mode, &w) in model.initial.frequencies.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            return Err(HqcsError::NonPositiveFrequency {
                surface: "initial",
                mode,
                value: w,
            });
        }
    }
    for (mode, &w) in model.final_frequencies.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            return Err(HqcsError::NonPositiveFrequency {
                surface: "final",
                mode,
                value: w,
            });
        }
    }
    for (mode, pot) in model.final_potentials.iter().enumerate() {
        pot.validate(mode)?;
    }
    if model.duschinsky.shift.iter().any(|x| !x.is_finite()) {
        return Err(HqcsError::InvalidParameter {
            mode: 0,
            reason: "Duschinsky shift is not finite".into(),
        });
    }
    let (deviation, row, col) = orthogonality_deviation(&model.duschinsky.rotation);
    if !(deviation < ORTHOGONALITY_TOL) {
        return Err(HqcsError::NonOrthogonalDuschinsky {
            deviation,
            row,
            col,
        });
    }
    if !model.adiabatic_gap.is_finite() {
        return Err(HqcsError::InvalidParameter {
            mode: 0,
            reason: "adiabatic gap is not finite".into(),
        });
    }
    if !(model.transition_dipole.is_finite() && model.transition_dipole >= 0.0) {
        return Err(HqcsError::InvalidParameter {
            mode: 0,
            reason: "transition dipole must be non-negative".into(),
        });
    }
    Ok(model)
}

/// A Givens rotation by `theta` in the plane of two modes, written as
/// `S_aa = cos θ, S_ab = -sin θ, S_ba = sin θ, S_bb = cos θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneRotation {
    pub first: ModeIndex,
    pub second: ModeIndex,
    pub theta: f64,
}

impl PlaneRotation {
    pub fn new(first: usize, second: usize, theta: f64) -> Self {
        Self {
            first: ModeIndex(first),
            second: ModeIndex(second),
            theta,
        }
    }
}

/// Product of plane rotations. The list is in application order: the first
/// entry acts first on a coordinate vector, so `[r1, r2, r3]` gives
/// `S = R3 R2 R1`.
pub fn make_rotation(n_modes: usize, rotations: &[PlaneRotation]) -> Result<DMatrix<f64>> {
    let mut s = DMatrix::<f64>::identity(n_modes, n_modes);
    for r in rotations {
        let (a, b) = (r.first.0, r.second.0);
        if a >= n_modes || b >= n_modes || a == b {
            return Err(HqcsError::InvalidPair(a, b, n_modes));
        }
        let (sin, cos) = r.theta.sin_cos();
        // left-multiply: only rows a and b change
        for col in 0..n_modes {
            let xa = s[(a, col)];
            let xb = s[(b, col)];
            s[(a, col)] = cos * xa - sin * xb;
            s[(b, col)] = sin * xa + cos * xb;
        }
    }
    Ok(s)
}

/// Frequencies of the harmonic intermediate surface sharing the final
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct IntermediatePes {
    pub frequencies: Vec<f64>,
}

/// `ω_m,n = max(ω_i,n, ω_f,n)`.
pub fn intermediate_pes(model: &VibronicModel) -> IntermediatePes {
    let frequencies = model
        .initial
        .frequencies
        .iter()
        .zip(&model.final_frequencies)
        .map(|(&wi, &wf)| wi.max(wf))
        .collect();
    IntermediatePes { frequencies }
}
