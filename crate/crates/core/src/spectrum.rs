//! Line assembly, energy bookkeeping and Gaussian broadening.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anharmonic::ModeSolution;
use crate::error::{HqcsError, Result};
use crate::focksim::AmplitudeTable;
use crate::model::{hartree_to_cm1, VibronicModel};
use crate::sampling::{assemble_amplitudes, AssemblyOptions, PairSet};

pub const DEFAULT_GRID_POINTS: usize = 2001;
/// Half-width of the default grid beyond the outermost lines, in units of σ.
pub const GRID_MARGIN_SIGMAS: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralLine {
    pub energy: f64,
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumGrid {
    pub energies: Vec<f64>,
    pub intensities: Vec<f64>,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Emission,
    Absorption,
}

/// Energy axis; `None` bounds default to the line range padded by 6σ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
            lower: None,
            upper: None,
        }
    }
}

impl GridSpec {
    pub fn axis(&self, lines: &[SpectralLine], sigma: f64) -> Vec<f64> {
        let (mut lo, mut hi) = lines.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| {
            (lo.min(l.energy), hi.max(l.energy))
        });
        if !lo.is_finite() {
            lo = 0.0;
            hi = 0.0;
        }
        let lo = self.lower.unwrap_or(lo - GRID_MARGIN_SIGMAS * sigma);
        let hi = self.upper.unwrap_or(hi + GRID_MARGIN_SIGMAS * sigma);
        let n = self.points.max(2);
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }
}

/// `E_{i,0} = E_ad + Σ ω_i / 2`, relative to the final electronic minimum.
pub fn initial_state_energy(model: &VibronicModel) -> f64 {
    model.adiabatic_gap + model.initial.zero_point_energy()
}

/// `Σ_n ε_{n, v_n}`.
pub fn final_config_energy(solutions: &[ModeSolution], vf: &[u16]) -> Result<f64> {
    let mut e = 0.0;
    for (mode, (s, &v)) in solutions.iter().zip(vf).enumerate() {
        let v = v as usize;
        e += s.eigenvalues.get(v).ok_or(HqcsError::IndexOutOfRange {
            mode,
            index: v,
            bound: s.eigenvalues.len(),
        })?;
    }
    Ok(e)
}

/// Transition energy of a line ending in a final state of energy `ef`.
pub fn transition_energy(e_initial: f64, ef: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Emission => e_initial - ef,
        Direction::Absorption => ef - e_initial,
    }
}

/// One line per distinct sampled `v_f` with strength `|μ|² A(v_f)²`.
pub fn line_list(
    pairs: &PairSet,
    table: &AmplitudeTable,
    shift: &[f64],
    solutions: &[ModeSolution],
    model: &VibronicModel,
    opts: &AssemblyOptions,
    direction: Direction,
) -> Result<Vec<SpectralLine>> {
    let e0 = initial_state_energy(model);
    let mu2 = model.transition_dipole * model.transition_dipole;
    assemble_amplitudes(pairs, table, shift, solutions, opts)
        .into_iter()
        .map(|(vf, a)| {
            Ok(SpectralLine {
                energy: transition_energy(e0, final_config_energy(solutions, &vf)?, direction),
                strength: mu2 * a * a,
            })
        })
        .collect()
}

/// `I(E) = Σ s exp(-(E - E_line)² / (2σ²))` with an unnormalized kernel.
pub fn broaden(lines: &[SpectralLine], sigma: f64, grid: &GridSpec) -> Result<SpectrumGrid> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(HqcsError::Config(format!("broadening width {sigma} must be positive")));
    }
    let energies = grid.axis(lines, sigma);
    let intensities = broaden_on(lines, sigma, &energies);
    Ok(SpectrumGrid {
        energies,
        intensities,
        sigma,
    })
}

/// Broadening onto a given axis, accumulated in per-worker partial grids.
pub fn broaden_on(lines: &[SpectralLine], sigma: f64, energies: &[f64]) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    lines
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = vec![0.0; energies.len()];
            for line in chunk {
                for (y, &e) in acc.iter_mut().zip(energies) {
                    let x = e - line.energy;
                    *y += line.strength * (-x * x * inv).exp();
                }
            }
            acc
        })
        .reduce(
            || vec![0.0; energies.len()],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

impl SpectrumGrid {
    pub fn max_intensity(&self) -> f64 {
        self.intensities.iter().copied().fold(0.0, f64::max)
    }

    /// Copy scaled so that the highest point is 1.
    pub fn normalized(&self) -> SpectrumGrid {
        let m = self.max_intensity();
        let scale = if m > 0.0 { 1.0 / m } else { 1.0 };
        SpectrumGrid {
            energies: self.energies.clone(),
            intensities: self.intensities.iter().map(|y| y * scale).collect(),
            sigma: self.sigma,
        }
    }

    /// Local maxima above `fraction` of the global maximum, as
    /// `(energy, intensity)` refined by a parabola through the three
    /// neighbouring points.
    pub fn peaks(&self, fraction: f64) -> Vec<(f64, f64)> {
        let m = self.max_intensity();
        let y = &self.intensities;
        let x = &self.energies;
        let mut out = Vec::new();
        for k in 1..y.len().saturating_sub(1) {
            if y[k] > y[k - 1] && y[k] >= y[k + 1] && y[k] > fraction * m {
                let denom = y[k - 1] - 2.0 * y[k] + y[k + 1];
                let (dx, peak) = if denom < 0.0 {
                    let t = 0.5 * (y[k - 1] - y[k + 1]) / denom;
                    (t, y[k] - 0.25 * (y[k - 1] - y[k + 1]) * t)
                } else {
                    (0.0, y[k])
                };
                out.push((x[k] + dx * (x[k + 1] - x[k]), peak));
            }
        }
        out
    }

    /// CSV with header `energy_cm1,intensity`; `shift_cm1` is added to the
    /// energy axis.
    pub fn write_csv<W: Write>(&self, mut w: W, normalize: bool, shift_cm1: f64) -> Result<()> {
        let grid = if normalize { self.normalized() } else { self.clone() };
        writeln!(w, "energy_cm1,intensity")?;
        for (e, y) in grid.energies.iter().zip(&grid.intensities) {
            writeln!(w, "{:.6},{:.12e}", hartree_to_cm1(*e) + shift_cm1, y)?;
        }
        Ok(())
    }
}
