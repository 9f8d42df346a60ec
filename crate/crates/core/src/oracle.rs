//! Brute-force references at desk scale: grid quadrature of harmonic
//! overlaps, sum-over-states and correlation-function spectra from an
//! independent sinc-DVR solve, and exact sign tables.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::anharmonic::{mode_hamiltonian, potential_minimum, solve_mode, HamiltonianPath, HoBasisSpec};
use crate::error::{HqcsError, Result};
use crate::focksim::FockBasis;
use crate::model::{intermediate_pes, OneModePotential, VibronicModel};
use crate::spectrum::{initial_state_energy, SpectralLine, SpectrumGrid};

/// Largest tensor grid the quadrature will build.
pub const MAX_GRID_POINTS: u128 = 1 << 24;
pub const MIN_POINTS_PER_MODE: usize = 64;

/// Ground state of the initial surface, `q_i = Sᵀ (q_f - Δq)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialGround {
    pub frequencies: Vec<f64>,
    pub rotation: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl InitialGround {
    pub fn from_model(model: &VibronicModel) -> Self {
        Self {
            frequencies: model.initial.frequencies.clone(),
            rotation: model.duschinsky.rotation.clone(),
            shift: model.duschinsky.shift.clone(),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    /// `K = S W Sᵀ`, the precision matrix in final coordinates.
    fn precision(&self) -> DMatrix<f64> {
        let w = DMatrix::from_diagonal(&DVector::from_vec(self.frequencies.clone()));
        &self.rotation * w * self.rotation.transpose()
    }

    /// Standard deviation of `q_n` in the ground state.
    fn marginal_width(&self, n: usize) -> f64 {
        let var: f64 = (0..self.n_modes())
            .map(|k| self.rotation[(n, k)].powi(2) / (2.0 * self.frequencies[k]))
            .sum();
        var.sqrt()
    }

    fn log_norm(&self) -> f64 {
        self.frequencies.iter().map(|w| 0.25 * (w / std::f64::consts::PI).ln()).sum()
    }
}

/// Pair of harmonic surfaces: the initial ground state and target
/// oscillators of the given frequencies centred at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicPair {
    pub initial: InitialGround,
    pub target_frequencies: Vec<f64>,
}

impl HarmonicPair {
    /// Target = the intermediate surface of `model`.
    pub fn intermediate(model: &VibronicModel) -> Self {
        Self {
            initial: InitialGround::from_model(model),
            target_frequencies: intermediate_pes(model).frequencies,
        }
    }

    pub fn new(initial: &[f64], target: &[f64], rotation: DMatrix<f64>, shift: DVector<f64>) -> Self {
        Self {
            initial: InitialGround {
                frequencies: initial.to_vec(),
                rotation,
                shift,
            },
            target_frequencies: target.to_vec(),
        }
    }
}

/// Grid controls in units of each target oscillator's length `1/√ω`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    /// Window half-width beyond the classical turning point of the highest level.
    pub extent: f64,
    /// Largest grid step.
    pub step: f64,
    pub min_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            extent: 8.0,
            step: 0.3,
            min_points: MIN_POINTS_PER_MODE,
        }
    }
}

impl QuadratureSpec {
    pub fn refined(&self) -> Self {
        Self {
            step: self.step / 2.0,
            ..*self
        }
    }
}

/// `χ_v(q)` for `v < levels` at each point, via the normalized Hermite
/// recurrence.
pub fn ho_functions(omega: f64, levels: usize, points: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(levels, points.len());
    let c0 = (omega / std::f64::consts::PI).powf(0.25);
    for (p, &q) in points.iter().enumerate() {
        let x = omega.sqrt() * q;
        let mut prev = 0.0;
        let mut cur = c0 * (-0.5 * x * x).exp();
        for v in 0..levels {
            out[(v, p)] = cur;
            let next = (2.0 / (v + 1) as f64).sqrt() * x * cur - (v as f64 / (v + 1) as f64).sqrt() * prev;
            prev = cur;
            cur = next;
        }
    }
    out
}

/// Per-mode quadrature grid with the basis functions pre-multiplied by the
/// trapezoid weight.
struct ModeGrid {
    points: Vec<f64>,
    weighted: DMatrix<f64>,
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// `Σ_grid φ_i^0(q) Π_n M_n[v_n, p_n]` for every `v`, lexicographic in `v`.
fn contract_with_initial(initial: &InitialGround, grids: &[ModeGrid]) -> Result<Vec<f64>> {
    let n = grids.len();
    let total: u128 = grids.iter().map(|g| g.points.len() as u128).product();
    if total > MAX_GRID_POINTS {
        return Err(HqcsError::CutoffOverflow {
            requested: total,
            limit: MAX_GRID_POINTS,
        });
    }
    let k = initial.precision();
    let log_norm = initial.log_norm();
    let levels: Vec<usize> = grids.iter().map(|g| g.weighted.nrows()).collect();
    let out_len: usize = levels.iter().product();

    // parallel over the first mode's points; each slab contracts the rest
    let partial: Vec<Vec<f64>> = grids[0]
        .points
        .par_iter()
        .enumerate()
        .map(|(p0, &x0)| {
            let rest_dims: Vec<usize> = grids[1..].iter().map(|g| g.points.len()).collect();
            let rest_len: usize = rest_dims.iter().product();
            let mut slab = vec![0.0; rest_len];
            let mut dq = vec![0.0; n];
            for (idx, value) in slab.iter_mut().enumerate() {
                let mut r = idx;
                for m in (1..n).rev() {
                    let len = grids[m].points.len();
                    dq[m] = grids[m].points[r % len] - initial.shift[m];
                    r /= len;
                }
                dq[0] = x0 - initial.shift[0];
                let mut quad = 0.0;
                for a in 0..n {
                    let mut row = 0.0;
                    for b in 0..n {
                        row += k[(a, b)] * dq[b];
                    }
                    quad += dq[a] * row;
                }
                *value = (log_norm - 0.5 * quad).exp();
            }
            // contract modes 1..n; the contracted axis moves to the back
            let mut tensor = slab;
            let mut dims = rest_dims;
            for g in &grids[1..] {
                let len = dims[0];
                let rest: usize = dims[1..].iter().product();
                let lv = g.weighted.nrows();
                let mut next = vec![0.0; rest * lv];
                for i in 0..len {
                    for r in 0..rest {
                        let t = tensor[i * rest + r];
                        if t == 0.0 {
                            continue;
                        }
                        for v in 0..lv {
                            next[r * lv + v] += g.weighted[(v, i)] * t;
                        }
                    }
                }
                tensor = next;
                dims.remove(0);
                dims.push(lv);
            }
            let rest_out = tensor.len();
            let mut out = vec![0.0; out_len];
            for v0 in 0..levels[0] {
                let w = grids[0].weighted[(v0, p0)];
                for (r, t) in tensor.iter().enumerate() {
                    out[v0 * rest_out + r] += w * t;
                }
            }
            out
        })
        .collect();

    let mut result = vec![0.0; out_len];
    for part in partial {
        for (a, b) in result.iter_mut().zip(part) {
            *a += b;
        }
    }
    Ok(result)
}

fn harmonic_grids(pair: &HarmonicPair, levels: usize, spec: &QuadratureSpec) -> Vec<ModeGrid> {
    let k = pair.initial.precision();
    pair.target_frequencies
        .iter()
        .enumerate()
        .map(|(n, &w)| {
            let len = 1.0 / w.sqrt();
            let half = ((2 * levels + 1) as f64).sqrt() + spec.extent;
            // resolve the narrower of the target and the initial Gaussian
            let initial_len = 1.0 / k[(n, n)].sqrt();
            let step = spec.step * len.min(initial_len) / ((2 * levels + 1) as f64).sqrt().max(1.0) * 2.0;
            let width = 2.0 * half * len;
            let points = ((width / step).ceil() as usize + 1).max(spec.min_points);
            let xs = uniform(-half * len, half * len, points);
            let h = xs[1] - xs[0];
            let weighted = ho_functions(w, levels, &xs) * h;
            ModeGrid { points: xs, weighted }
        })
        .collect()
}

/// `⟨φ_i^0|χ^v⟩` for every `v` in the box `{0..=cutoff}^N`, by tensor-grid
/// quadrature. Lexicographic order as in [`FockBasis`].
pub fn quadrature_overlaps(pair: &HarmonicPair, cutoff: usize, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let n = pair.initial.n_modes();
    if n > 3 {
        return Err(HqcsError::TooManyModes {
            operation: "quadrature overlap",
            max: 3,
            found: n,
        });
    }
    let grids = harmonic_grids(pair, cutoff + 1, spec);
    contract_with_initial(&pair.initial, &grids)
}

/// Single overlap `⟨φ_i^0|χ^v⟩`.
pub fn quadrature_overlap(pair: &HarmonicPair, v: &[u16], spec: &QuadratureSpec) -> Result<f64> {
    let cutoff = v.iter().copied().max().unwrap_or(0) as usize;
    let basis = FockBasis::new(v.len(), cutoff.max(1))?;
    let all = quadrature_overlaps(pair, cutoff.max(1), spec)?;
    Ok(all[basis.index(v).expect("inside box")])
}

/// Eigenpairs of `-½ d²/dq² + V(q) - V_min` on a uniform grid
/// (Colbert-Miller sinc DVR).
#[derive(Clone, Debug)]
pub struct SincDvrMode {
    pub points: Vec<f64>,
    pub energies: Vec<f64>,
    /// Column `v` holds `ψ_v(x_k) √h`.
    pub vectors: DMatrix<f64>,
}

pub fn sinc_dvr_mode(potential: &OneModePotential, lo: f64, hi: f64, points: usize) -> Result<SincDvrMode> {
    let xs = uniform(lo, hi, points);
    let h = xs[1] - xs[0];
    let vmin = potential_minimum(potential, lo, hi);
    let pi2 = std::f64::consts::PI.powi(2);
    let hmat = DMatrix::from_fn(points, points, |i, j| {
        if i == j {
            pi2 / (6.0 * h * h) + potential.eval(xs[i]) - vmin
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            sign / (h * h * d * d)
        }
    });
    let eig = SymmetricEigen::try_new(hmat, 1e-15, 100_000).ok_or(HqcsError::NonConvergedEigensolve(0))?;
    let mut order: Vec<usize> = (0..points).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Ok(SincDvrMode {
        energies: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        vectors: DMatrix::from_fn(points, points, |r, c| eig.eigenvectors[(r, order[c])]),
        points: xs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SosOptions {
    /// Half-width of each mode's box in initial-state standard deviations.
    pub box_widths: f64,
    /// Grid points per shortest de Broglie half-wavelength in the box.
    pub points_per_wavelength: f64,
    /// Lines weaker than this are dropped.
    pub min_strength: f64,
}

impl Default for SosOptions {
    fn default() -> Self {
        Self {
            box_widths: 10.0,
            points_per_wavelength: 4.0,
            min_strength: 1e-10,
        }
    }
}

/// Per-mode sinc-DVR solutions on boxes around the initial wavepacket.
pub fn sos_modes(model: &VibronicModel, opts: &SosOptions) -> Result<Vec<SincDvrMode>> {
    let initial = InitialGround::from_model(model);
    (0..model.n_modes())
        .into_par_iter()
        .map(|n| {
            let sigma = initial.marginal_width(n);
            let center = initial.shift[n];
            let lo = center - opts.box_widths * sigma;
            let hi = center + opts.box_widths * sigma;
            let pot = &model.final_potentials[n];
            let vmin = potential_minimum(pot, lo, hi);
            // kinetic scale set by the potential over the bulk of the wavepacket
            let inner = uniform(center - 4.0 * sigma, center + 4.0 * sigma, 401);
            let e_rel = inner.iter().map(|&x| pot.eval(x) - vmin).fold(0.0, f64::max);
            let k_max = (2.0 * e_rel).sqrt().max(1.0 / sigma);
            let step = (std::f64::consts::PI / k_max / opts.points_per_wavelength * 2.0).min(sigma / 3.0);
            let points = (((hi - lo) / step).ceil() as usize + 1).clamp(32, 3000);
            sinc_dvr_mode(pot, lo, hi, points).map_err(|e| match e {
                HqcsError::NonConvergedEigensolve(_) => HqcsError::NonConvergedEigensolve(n),
                other => other,
            })
        })
        .collect()
}

fn dvr_grids(modes: &[SincDvrMode]) -> Vec<ModeGrid> {
    modes
        .iter()
        .map(|m| ModeGrid {
            points: m.points.clone(),
            weighted: m.vectors.transpose() * (m.points[1] - m.points[0]).sqrt(),
        })
        .collect()
}

/// Every transition `i,0 → f,v` with its strength `|μ|² |⟨φ_i^0|φ_f^v⟩|²`,
/// on the emission axis `E_{i,0} - E_{f,v}`.
pub fn exact_spectrum_sos(model: &VibronicModel, opts: &SosOptions) -> Result<Vec<SpectralLine>> {
    let n = model.n_modes();
    if n > 3 {
        return Err(HqcsError::TooManyModes {
            operation: "sum-over-states spectrum",
            max: 3,
            found: n,
        });
    }
    let modes = sos_modes(model, opts)?;
    let overlaps = contract_with_initial(&InitialGround::from_model(model), &dvr_grids(&modes))?;
    let dims: Vec<usize> = modes.iter().map(|m| m.energies.len()).collect();
    let e0 = initial_state_energy(model);
    let mu2 = model.transition_dipole.powi(2);
    let mut lines = Vec::new();
    for (idx, o) in overlaps.iter().enumerate() {
        let strength = mu2 * o * o;
        if strength <= opts.min_strength {
            continue;
        }
        let mut r = idx;
        let mut ef = 0.0;
        for m in (0..n).rev() {
            ef += modes[m].energies[r % dims[m]];
            r /= dims[m];
        }
        lines.push(SpectralLine {
            energy: e0 - ef,
            strength,
        });
    }
    Ok(lines)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TcfOptions {
    pub total_time: f64,
    pub step: f64,
    pub sigma: f64,
}

impl TcfOptions {
    /// `Δt = 8` a.u. and a window long enough that `σT = 10`.
    pub fn for_sigma(sigma: f64) -> Self {
        Self {
            total_time: 10.0 / sigma,
            step: 8.0,
            sigma,
        }
    }
}

/// Spectrum from `C(t) = Σ_v |⟨φ_i^0|φ_f^v⟩|² e^{i(E_{i,0}-E_v)t}` by a
/// Gaussian-windowed discrete Fourier transform, scaled to match the
/// unnormalized broadening kernel.
pub fn tcf_spectrum(model: &VibronicModel, tcf: &TcfOptions, energies: &[f64]) -> Result<SpectrumGrid> {
    if !(tcf.sigma > 0.0 && tcf.step > 0.0 && tcf.total_time > 0.0) {
        return Err(HqcsError::Config("correlation function needs positive σ, Δt and T".into()));
    }
    let opts = SosOptions {
        min_strength: 0.0,
        ..Default::default()
    };
    let all = exact_spectrum_sos(model, &opts)?;
    let total: f64 = all.iter().map(|l| l.strength).sum();
    let lines: Vec<SpectralLine> = all.into_iter().filter(|l| l.strength > 1e-12 * total).collect();
    // rotating frame about the axis midpoint; the step shrinks until aliased
    // images at 2π/Δt stay clear of the axis
    let reference = match (energies.first(), energies.last()) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        _ => 0.0,
    };
    let line_reach = lines.iter().map(|l| (l.energy - reference).abs()).fold(0.0, f64::max);
    let axis_reach = energies.iter().map(|e| (e - reference).abs()).fold(0.0, f64::max);
    let alias_free = 2.0 * std::f64::consts::PI / (line_reach + axis_reach + 10.0 * tcf.sigma);
    let dt = if tcf.step > alias_free {
        log::info!("correlation step reduced from {} to {alias_free:.3} to avoid aliasing", tcf.step);
        alias_free
    } else {
        tcf.step
    };
    let steps = (tcf.total_time / dt).ceil() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let corr: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            lines.iter().fold((0.0, 0.0), |(re, im), l| {
                let (s, c) = ((l.energy - reference) * t).sin_cos();
                (re + l.strength * c, im + l.strength * s)
            })
        })
        .collect();
    let scale = tcf.sigma / (2.0 * std::f64::consts::PI).sqrt() * dt;
    let intensities = energies
        .par_iter()
        .map(|&e| {
            let mut acc = 0.0;
            for (k, (&t, &(re, im))) in times.iter().zip(&corr).enumerate() {
                let window = (-0.5 * tcf.sigma * tcf.sigma * t * t).exp();
                let (s, c) = ((e - reference) * t).sin_cos();
                // Re[C(t) e^{-iEt}], doubled for the negative-time half
                let term = (re * c + im * s) * window;
                acc += if k == 0 { term } else { 2.0 * term };
            }
            acc * scale
        })
        .collect();
    Ok(SpectrumGrid {
        energies: energies.to_vec(),
        intensities,
        sigma: tcf.sigma,
    })
}

/// Signed overlaps `⟨φ_i^0|φ_f^v⟩` over a `levels^N` window.
#[derive(Clone, Debug, PartialEq)]
pub struct SignTable {
    pub basis: FockBasis,
    pub overlaps: Vec<f64>,
}

impl SignTable {
    pub fn overlap(&self, v: &[u16]) -> f64 {
        self.basis.index(v).map_or(0.0, |i| self.overlaps[i])
    }

    pub fn sign(&self, v: &[u16]) -> f64 {
        if self.overlap(v) < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Final eigenstates are expanded in the HO basis at `ω_f` (largest
/// coefficient positive) and integrated against `φ_i^0` on a grid; the
/// global phase makes the ground-ground overlap positive.
pub fn exact_sign_table(model: &VibronicModel, levels: usize, n_basis: usize) -> Result<SignTable> {
    let n = model.n_modes();
    if n > 4 {
        return Err(HqcsError::TooManyModes {
            operation: "exact sign table",
            max: 4,
            found: n,
        });
    }
    let basis = FockBasis::new(n, levels.saturating_sub(1).max(1))?;
    let levels = basis.levels();
    let initial = InitialGround::from_model(model);
    let k = initial.precision();

    let per_mode_cap = (MAX_GRID_POINTS as f64).powf(1.0 / n as f64).floor() as usize;
    let spec = QuadratureSpec::default();
    let mut grids = Vec::with_capacity(n);
    for m in 0..n {
        let w = model.final_frequencies[m];
        let ho = HoBasisSpec::new(w, n_basis.max(levels))?;
        let solution = match &model.final_potentials[m] {
            OneModePotential::Harmonic { omega } if (omega - w).abs() <= 1e-14 * w => {
                DMatrix::identity(ho.n_basis, levels)
            }
            pot => solve_mode(pot, &ho, levels, HamiltonianPath::Dvr)?.overlap,
        };
        let len = 1.0 / w.sqrt();
        let half = ((2 * ho.n_basis + 1) as f64).sqrt().min(((2 * levels + 1) as f64).sqrt() + 4.0) + spec.extent;
        let initial_len = 1.0 / k[(m, m)].sqrt();
        let step = spec.step * len.min(initial_len) / ((2 * levels + 1) as f64).sqrt() * 2.0;
        let mut points = ((2.0 * half * len / step).ceil() as usize + 1).max(spec.min_points);
        if points > per_mode_cap {
            log::warn!("sign table grid for mode {m} capped at {per_mode_cap} points (wanted {points})");
            points = per_mode_cap;
        }
        let xs = uniform(-half * len, half * len, points);
        let h = xs[1] - xs[0];
        let chi = ho_functions(w, ho.n_basis, &xs);
        let weighted = solution.transpose() * chi * h;
        grids.push(ModeGrid { points: xs, weighted });
    }
    let mut overlaps = contract_with_initial(&initial, &grids)?;
    if overlaps[0] < 0.0 {
        overlaps.iter_mut().for_each(|o| *o = -*o);
    }
    Ok(SignTable { basis, overlaps })
}

/// Ground state of `-½ d²/dq² + ½ ω_i² (q - Δq)²` expanded in the lowest
/// `levels` oscillator functions of frequency `ω_m`, largest coefficient
/// positive. Converges to the exact overlaps as `levels` grows.
pub fn truncated_ground_state(omega_i: f64, omega_m: f64, shift: f64, levels: usize) -> Result<Vec<f64>> {
    let spec = HoBasisSpec::new(omega_m, levels)?;
    let w2 = omega_i * omega_i;
    // V = ½ω_i²q² - ω_i²Δq q (the constant does not change eigenvectors)
    let pot = OneModePotential::Polynomial {
        coefficients: vec![-w2 * shift, 0.5 * w2],
    };
    let h = mode_hamiltonian(&pot, &spec, HamiltonianPath::Ladder)?;
    let eig = SymmetricEigen::try_new(h, 1e-15, 100_000).ok_or(HqcsError::NonConvergedEigensolve(0))?;
    let ground = eig.eigenvalues.imin();
    let mut v: Vec<f64> = eig.eigenvectors.column(ground).iter().copied().collect();
    let big = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
    if big < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(v)
}
