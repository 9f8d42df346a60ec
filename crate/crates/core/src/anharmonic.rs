//! Per-mode eigensolver for the final 1-mode potentials in the harmonic basis
//! of the intermediate surface, and the overlap tables `⟨χ_m^{v_m}|χ_f^{v_f}⟩`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{HqcsError, Result};
use crate::model::OneModePotential;

pub const DEFAULT_N_BASIS: usize = 60;
pub const DEFAULT_N_STATES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoBasisSpec {
    pub omega: f64,
    pub n_basis: usize,
}

impl HoBasisSpec {
    pub fn new(omega: f64, n_basis: usize) -> Result<Self> {
        if n_basis < 2 {
            return Err(HqcsError::Config(format!("basis size {n_basis} is below 2")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(HqcsError::NonPositiveFrequency {
                surface: "intermediate",
                mode: 0,
                value: omega,
            });
        }
        Ok(Self { omega, n_basis })
    }
}

/// Grid points and the orthogonal map whose column `k` is the DVR function
/// at `points[k]` expanded in the primitive HO functions.
#[derive(Clone, Debug, PartialEq)]
pub struct DvrGrid {
    pub points: DVector<f64>,
    pub transform: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HamiltonianPath {
    Dvr,
    Ladder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSolution {
    /// Ascending, measured from the potential's own minimum.
    pub eigenvalues: Vec<f64>,
    /// `overlap[(v_m, v_f)] = ⟨χ_m^{v_m}|χ_f^{v_f}⟩`, `n_basis × n_states`.
    pub overlap: DMatrix<f64>,
    /// Set when the requested states reach the edge of the grid window.
    pub window_warning: Option<String>,
}

impl ModeSolution {
    pub fn n_states(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Solution of a harmonic mode at the basis frequency: identity overlaps.
    pub fn harmonic(omega: f64, n_basis: usize, n_states: usize) -> Self {
        Self {
            eigenvalues: (0..n_states).map(|v| (v as f64 + 0.5) * omega).collect(),
            overlap: DMatrix::identity(n_basis, n_states),
            window_warning: None,
        }
    }
}

/// Position operator `⟨v|q|v+1⟩ = √((v+1)/(2ω))` in a basis of `n` functions.
pub fn position_matrix(omega: f64, n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n);
    for v in 0..n.saturating_sub(1) {
        let x = ((v + 1) as f64 / (2.0 * omega)).sqrt();
        q[(v, v + 1)] = x;
        q[(v + 1, v)] = x;
    }
    q
}

/// `-½ d²/dq²` in the HO basis.
pub fn kinetic_matrix(omega: f64, n: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(n, n);
    for v in 0..n {
        t[(v, v)] = 0.25 * omega * (2 * v + 1) as f64;
        if v + 2 < n {
            let x = -0.25 * omega * (((v + 1) * (v + 2)) as f64).sqrt();
            t[(v, v + 2)] = x;
            t[(v + 2, v)] = x;
        }
    }
    t
}

fn sorted_eigen(m: DMatrix<f64>, mode: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, 1e-15, 100_000).ok_or(HqcsError::NonConvergedEigensolve(mode))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn build_ho_dvr(spec: &HoBasisSpec) -> DvrGrid {
    let q = position_matrix(spec.omega, spec.n_basis);
    let (points, mut transform) = sorted_eigen(q, 0).expect("tridiagonal eigenproblem");
    for c in 0..spec.n_basis {
        if transform[(0, c)] < 0.0 {
            transform.column_mut(c).neg_mut();
        }
    }
    DvrGrid {
        points: DVector::from_vec(points),
        transform,
    }
}

/// `Σ c_j q^j` with exact matrix elements in the truncated basis.
fn polynomial_matrix(coefficients: &[f64], omega: f64, n: usize) -> DMatrix<f64> {
    let big = n + coefficients.len();
    let q = position_matrix(omega, big);
    let mut power = DMatrix::identity(big, big);
    let mut v = DMatrix::zeros(n, n);
    for &c in coefficients {
        power = &power * &q;
        if c != 0.0 {
            v += power.view((0, 0), (n, n)) * c;
        }
    }
    v
}

pub fn mode_hamiltonian(
    potential: &OneModePotential,
    spec: &HoBasisSpec,
    path: HamiltonianPath,
) -> Result<DMatrix<f64>> {
    let n = spec.n_basis;
    let potential_matrix = match (path, potential) {
        (HamiltonianPath::Dvr, _) => {
            let grid = build_ho_dvr(spec);
            let values = grid.points.map(|x| potential.eval(x));
            &grid.transform * DMatrix::from_diagonal(&values) * grid.transform.transpose()
        }
        (HamiltonianPath::Ladder, OneModePotential::Harmonic { omega }) => {
            polynomial_matrix(&[0.0, 0.5 * omega * omega], spec.omega, n)
        }
        (HamiltonianPath::Ladder, OneModePotential::Polynomial { coefficients }) => {
            polynomial_matrix(coefficients, spec.omega, n)
        }
        (HamiltonianPath::Ladder, OneModePotential::Morse { .. }) => {
            return Err(HqcsError::UnsupportedPotentialForLadder(0));
        }
    };
    let h = kinetic_matrix(spec.omega, n) + potential_matrix;
    Ok((&h + h.transpose()) * 0.5)
}

/// Minimum of the potential over `[lo, hi]` by a dense scan and golden-section
/// refinement.
pub fn potential_minimum(potential: &OneModePotential, lo: f64, hi: f64) -> f64 {
    match potential {
        OneModePotential::Harmonic { .. } | OneModePotential::Morse { .. } if lo <= 0.0 && hi >= 0.0 => {
            return 0.0;
        }
        _ => {}
    }
    let samples = 4001;
    let step = (hi - lo) / (samples - 1) as f64;
    let mut best = (lo, potential.eval(lo));
    for k in 1..samples {
        let x = lo + step * k as f64;
        let y = potential.eval(x);
        if y < best.1 {
            best = (x, y);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if potential.eval(c) < potential.eval(d) {
            b = d;
        } else {
            a = c;
        }
    }
    potential.eval(0.5 * (a + b)).min(best.1)
}

/// Diagonalize one mode and keep the lowest `n_states` states. Eigenvectors
/// have their largest-magnitude component positive.
pub fn solve_mode(
    potential: &OneModePotential,
    spec: &HoBasisSpec,
    n_states: usize,
    path: HamiltonianPath,
) -> Result<ModeSolution> {
    if n_states == 0 || n_states > spec.n_basis {
        return Err(HqcsError::Config(format!(
            "number of states {n_states} must be in 1..={}",
            spec.n_basis
        )));
    }
    let h = mode_hamiltonian(potential, spec, path)?;
    let scale = h.amax();
    let (values, mut vectors) = sorted_eigen(h.clone(), 0)?;

    for c in 0..n_states {
        let mut col = vectors.column_mut(c);
        let big = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if big < 0.0 {
            col.neg_mut();
        }
        let x = vectors.column(c);
        let residual = (&h * x - x * values[c]).norm();
        if !(residual < 1e-10 * scale.max(1e-300)) {
            return Err(HqcsError::NonConvergedEigensolve(0));
        }
    }

    let grid = build_ho_dvr(spec);
    let lo = grid.points[0];
    let hi = grid.points[spec.n_basis - 1];
    let vmin = potential_minimum(potential, lo, hi);
    let eigenvalues: Vec<f64> = values[..n_states].iter().map(|e| e - vmin).collect();

    let top = eigenvalues[n_states - 1];
    let edge = (potential.eval(lo) - vmin).min(potential.eval(hi) - vmin);
    let window_warning = (edge < top).then(|| {
        let msg = format!(
            "potential at the grid edge ({edge:.6e}) lies below the highest requested level ({top:.6e})"
        );
        log::warn!("PotentialWindowWarning: {msg}");
        msg
    });

    Ok(ModeSolution {
        eigenvalues,
        overlap: vectors.columns(0, n_states).into_owned(),
        window_warning,
    })
}

/// Solve every mode in parallel, each in the HO basis of its own frequency.
pub fn solve_modes(
    potentials: &[OneModePotential],
    frequencies: &[f64],
    n_basis: usize,
    n_states: usize,
    path: HamiltonianPath,
) -> Result<Vec<ModeSolution>> {
    potentials
        .par_iter()
        .zip(frequencies.par_iter())
        .enumerate()
        .map(|(mode, (pot, &omega))| {
            let spec = HoBasisSpec::new(omega, n_basis).map_err(|e| match e {
                HqcsError::NonPositiveFrequency { surface, value, .. } => {
                    HqcsError::NonPositiveFrequency { surface, mode, value }
                }
                other => other,
            })?;
            solve_mode(pot, &spec, n_states, path).map_err(|e| match e {
                HqcsError::UnsupportedPotentialForLadder(_) => HqcsError::UnsupportedPotentialForLadder(mode),
                HqcsError::NonConvergedEigensolve(_) => HqcsError::NonConvergedEigensolve(mode),
                other => other,
            })
        })
        .collect()
}

/// Least-squares fit `Σ_{j=1..degree} c_j q^j` of `potential - potential(0)`
/// on `n_points` uniform points of `[lo, hi]`.
pub fn polynomial_fit(
    potential: &OneModePotential,
    lo: f64,
    hi: f64,
    degree: usize,
    n_points: usize,
) -> Result<OneModePotential> {
    if degree == 0 || n_points <= degree || !(hi > lo) {
        return Err(HqcsError::Config("invalid polynomial fit window".into()));
    }
    let scale = lo.abs().max(hi.abs());
    let v0 = potential.eval(0.0);
    let xs: Vec<f64> = (0..n_points)
        .map(|k| lo + (hi - lo) * k as f64 / (n_points - 1) as f64)
        .collect();
    let design = DMatrix::from_fn(n_points, degree, |r, c| (xs[r] / scale).powi(c as i32 + 1));
    let rhs = DVector::from_fn(n_points, |r, _| potential.eval(xs[r]) - v0);
    let svd = design.svd(true, true);
    let b = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| HqcsError::Config(format!("polynomial fit failed: {e}")))?;
    let coefficients = b
        .iter()
        .enumerate()
        .map(|(j, c)| c / scale.powi(j as i32 + 1))
        .collect();
    Ok(OneModePotential::Polynomial { coefficients })
}
