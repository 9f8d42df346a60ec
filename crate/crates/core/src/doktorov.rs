//! Dimensionless Duschinsky map `R_m = A R_i + d` and its SVD parameterization
//! of the Doktorov unitary.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{HqcsError, Result};

/// Ratio below which the smallest singular value of `A` is treated as zero.
pub const SINGULAR_RATIO_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DimensionlessMap {
    pub a: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// `A = O_L diag(l) O_Rᵀ`, plus the dimensionless displacement `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoktorovParams {
    pub left: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub right: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl DoktorovParams {
    pub fn n_modes(&self) -> usize {
        self.d.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.left * DMatrix::from_diagonal(&self.singular_values) * self.right.transpose()
    }

    /// Squeezing parameters `λ_n = ln l_n`.
    pub fn squeezing(&self) -> Vec<f64> {
        self.singular_values.iter().map(|l| l.ln()).collect()
    }

    /// Displacement amplitudes `α_n = d_n / √2`.
    pub fn displacement(&self) -> Vec<f64> {
        self.d.iter().map(|x| x / std::f64::consts::SQRT_2).collect()
    }

    /// Parameters of a map with `A = I`, `d = 0`.
    pub fn identity(n: usize) -> Self {
        Self {
            left: DMatrix::identity(n, n),
            singular_values: DVector::from_element(n, 1.0),
            right: DMatrix::identity(n, n),
            d: DVector::zeros(n),
        }
    }
}

/// `A = diag(√ω_m) S diag(1/√ω_i)`, `d = diag(√ω_m) Δq`.
pub fn build_dimensionless(
    initial_frequencies: &[f64],
    intermediate_frequencies: &[f64],
    rotation: &DMatrix<f64>,
    shift: &DVector<f64>,
) -> DimensionlessMap {
    let n = shift.len();
    let a = DMatrix::from_fn(n, n, |r, c| {
        intermediate_frequencies[r].sqrt() * rotation[(r, c)] / initial_frequencies[c].sqrt()
    });
    let d = DVector::from_fn(n, |r, _| intermediate_frequencies[r].sqrt() * shift[r]);
    DimensionlessMap { a, d }
}

/// SVD with singular values descending and the first non-negligible entry of
/// every `O_L` column positive (the matching `O_R` column flips with it).
pub fn decompose(map: &DimensionlessMap) -> Result<DoktorovParams> {
    let n = map.d.len();
    let svd = SVD::new(map.a.clone(), true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]));

    let max = sv[order[0]];
    let min = sv[order[n - 1]];
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio > SINGULAR_RATIO_TOL) {
        return Err(HqcsError::SingularMap { ratio });
    }

    let mut left = DMatrix::zeros(n, n);
    let mut right = DMatrix::zeros(n, n);
    let mut singular_values = DVector::zeros(n);
    for (k, &src) in order.iter().enumerate() {
        let col = u.column(src);
        let pivot = col
            .iter()
            .copied()
            .find(|x| x.abs() > 1e-12)
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        left.set_column(k, &(col * sign));
        right.set_column(k, &(v_t.row(src).transpose() * sign));
        singular_values[k] = sv[src];
    }

    Ok(DoktorovParams {
        left,
        singular_values,
        right,
        d: map.d.clone(),
    })
}
