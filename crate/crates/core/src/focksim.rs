//! Exact truncated-Fock simulation of the Doktorov unitary acting on the
//! vacuum. This stands in for the boson-sampling device: it produces the
//! amplitudes `⟨φ_m^v|φ_i^0⟩` over a per-mode cutoff and draws samples from
//! their squared magnitudes.
//!
//! The state is built as `D(d/√2) U(O_L) S(ln l) U(O_Rᵀ) |0⟩`. Intermediate
//! states are kept sparse and truncated by total quanta, which keeps every
//! number-conserving sector complete so the rotation step is exact.
//! All amplitudes are real because every parameter of the map is real.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use nalgebra::{DMatrix, Schur};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::doktorov::DoktorovParams;
use crate::error::{HqcsError, Result};

/// Largest number of stored amplitudes (dense or sparse) accepted.
pub const MAX_AMPLITUDES: u128 = 1 << 27;
/// Probability mass allowed beyond the total-quanta cap of the squeezed vacuum.
pub const SQUEEZE_TAIL_TOL: f64 = 1e-20;
/// Amplitudes below this magnitude are dropped from sparse states.
pub const PRUNE_TOL: f64 = 1e-17;
/// Draws per RNG stream. Stream `k` serves draws `k*SAMPLE_CHUNK ..`.
pub const SAMPLE_CHUNK: u64 = 8192;

pub type Occupation = Vec<u16>;

/// Per-mode cutoff box `{0..=cutoff}^N`, enumerated lexicographically with
/// mode 0 most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockBasis {
    pub n_modes: usize,
    pub cutoff: usize,
}

impl FockBasis {
    pub fn new(n_modes: usize, cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(HqcsError::Config("Fock cutoff must be at least 1".into()));
        }
        if n_modes == 0 {
            return Err(HqcsError::Config("Fock basis needs at least one mode".into()));
        }
        let requested = (cutoff as u128 + 1).checked_pow(n_modes as u32).unwrap_or(u128::MAX);
        if requested > MAX_AMPLITUDES {
            return Err(HqcsError::CutoffOverflow {
                requested,
                limit: MAX_AMPLITUDES,
            });
        }
        Ok(Self { n_modes, cutoff })
    }

    pub fn levels(&self) -> usize {
        self.cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.levels().pow(self.n_modes as u32)
    }

    pub fn index(&self, occ: &[u16]) -> Option<usize> {
        if occ.len() != self.n_modes {
            return None;
        }
        let mut idx = 0usize;
        for &v in occ {
            if v as usize > self.cutoff {
                return None;
            }
            idx = idx * self.levels() + v as usize;
        }
        Some(idx)
    }

    pub fn occupation(&self, mut index: usize) -> Occupation {
        let mut occ = vec![0u16; self.n_modes];
        for slot in occ.iter_mut().rev() {
            *slot = (index % self.levels()) as u16;
            index /= self.levels();
        }
        occ
    }
}

/// Sparse real state over occupation vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub n_modes: usize,
    pub amplitudes: BTreeMap<Occupation, f64>,
}

impl StateVector {
    pub fn vacuum(n_modes: usize) -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(vec![0u16; n_modes], 1.0);
        Self { n_modes, amplitudes }
    }

    pub fn basis_state(occ: Occupation) -> Self {
        let n_modes = occ.len();
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(occ, 1.0);
        Self { n_modes, amplitudes }
    }

    pub fn get(&self, occ: &[u16]) -> f64 {
        self.amplitudes.get(occ).copied().unwrap_or(0.0)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a * a).sum()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Probability of finding `n` total quanta, for `n = 0..`.
    pub fn quanta_distribution(&self) -> Vec<f64> {
        let mut dist = Vec::new();
        for (occ, a) in &self.amplitudes {
            let n: usize = occ.iter().map(|&v| v as usize).sum();
            if dist.len() <= n {
                dist.resize(n + 1, 0.0);
            }
            dist[n] += a * a;
        }
        dist
    }
}

fn guard(requested: u128) -> Result<()> {
    if requested > MAX_AMPLITUDES {
        Err(HqcsError::CutoffOverflow {
            requested,
            limit: MAX_AMPLITUDES,
        })
    } else {
        Ok(())
    }
}

/// `exp(generator)` of a single-mode operator built at `internal` levels and
/// projected onto `rows × cols`.
fn projected_exponential(
    internal: usize,
    rows: usize,
    cols: usize,
    generator: impl Fn(usize, usize) -> f64,
) -> Result<DMatrix<f64>> {
    guard((internal as u128) * (internal as u128))?;
    let g = DMatrix::from_fn(internal, internal, generator);
    let e = g.exp();
    Ok(e.view((0, 0), (rows, cols)).into_owned())
}

fn internal_cutoff(rows: usize, cols: usize) -> usize {
    2 * rows.max(cols) + 2
}

/// `⟨m|exp(α a† - α a)|n⟩` for `m < rows`, `n < cols`.
pub fn displacement_matrix(alpha: f64, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    // pad by the mean quanta of a coherent state so the projected block is
    // far from the truncation edge
    let internal = internal_cutoff(rows, cols) + (alpha * alpha).ceil() as usize;
    projected_exponential(internal, rows, cols, |r, c| {
        if r == c + 1 {
            alpha * (r as f64).sqrt()
        } else if c == r + 1 {
            -alpha * (c as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// `⟨m|exp(λ/2 (a†² - a²))|n⟩` for `m < rows`, `n < cols`.
pub fn squeeze_matrix(lambda: f64, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let extra = (4.0 * lambda.abs().sinh().powi(2)).ceil() as usize;
    let internal = internal_cutoff(rows, cols) + extra;
    projected_exponential(internal, rows, cols, |r, c| {
        if r == c + 2 {
            0.5 * lambda * ((r * (r - 1)) as f64).sqrt()
        } else if c == r + 2 {
            -0.5 * lambda * ((c * (c - 1)) as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// Apply a single-mode matrix to `mode`. Output quanta on that mode are
/// limited to `matrix.nrows() - 1` and, if given, total quanta to `total_cap`.
fn apply_single_mode(
    state: &StateVector,
    mode: usize,
    matrix: &DMatrix<f64>,
    total_cap: Option<usize>,
) -> Result<StateVector> {
    if mode >= state.n_modes {
        return Err(HqcsError::IndexOutOfRange {
            mode,
            index: mode,
            bound: state.n_modes,
        });
    }
    // columns: every occupation sharing the other modes
    let mut groups: BTreeMap<Occupation, Vec<(usize, f64)>> = BTreeMap::new();
    for (occ, &a) in &state.amplitudes {
        let mut rest = occ.clone();
        let q = rest[mode] as usize;
        rest[mode] = 0;
        groups.entry(rest).or_default().push((q, a));
    }
    guard(groups.len() as u128 * matrix.nrows() as u128)?;

    let mut out = BTreeMap::new();
    for (rest, column) in groups {
        let rest_total: usize = rest.iter().map(|&v| v as usize).sum();
        let max_out = match total_cap {
            Some(cap) if cap < rest_total => continue,
            Some(cap) => (cap - rest_total).min(matrix.nrows() - 1),
            None => matrix.nrows() - 1,
        };
        for m in 0..=max_out {
            let mut acc = 0.0;
            for &(q, a) in &column {
                if q < matrix.ncols() {
                    acc += matrix[(m, q)] * a;
                }
            }
            if acc.abs() > PRUNE_TOL {
                let mut occ = rest.clone();
                occ[mode] = m as u16;
                out.insert(occ, acc);
            }
        }
    }
    Ok(StateVector {
        n_modes: state.n_modes,
        amplitudes: out,
    })
}

fn max_quanta_on(state: &StateVector, mode: usize) -> usize {
    state
        .amplitudes
        .keys()
        .map(|o| o[mode] as usize)
        .max()
        .unwrap_or(0)
}

/// Displace one mode by real `alpha`; output quanta on that mode are
/// truncated at `out_cutoff`.
pub fn apply_displacement(
    state: &StateVector,
    mode: usize,
    alpha: f64,
    out_cutoff: usize,
) -> Result<StateVector> {
    if alpha == 0.0 && max_quanta_on(state, mode) <= out_cutoff {
        return Ok(state.clone());
    }
    let cols = max_quanta_on(state, mode) + 1;
    let m = displacement_matrix(alpha, out_cutoff + 1, cols)?;
    apply_single_mode(state, mode, &m, None)
}

/// Squeeze one mode by real `lambda`; output is truncated at `out_cutoff`
/// quanta on that mode and optionally at `total_cap` quanta overall.
pub fn apply_squeeze(
    state: &StateVector,
    mode: usize,
    lambda: f64,
    out_cutoff: usize,
    total_cap: Option<usize>,
) -> Result<StateVector> {
    let cols = max_quanta_on(state, mode) + 1;
    let m = squeeze_matrix(lambda, out_cutoff + 1, cols)?;
    apply_single_mode(state, mode, &m, total_cap)
}

/// Real antisymmetric `Λ` with `exp(Λ) = O` for `det O = +1`, together with
/// the largest rotation angle.
fn orthogonal_log(o: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = o.nrows();
    let (q, t) = Schur::try_new(o.clone(), 1e-15, 10_000)
        .ok_or_else(|| HqcsError::LogBranchFailure("Schur decomposition did not converge".into()))?
        .unpack();
    let mut log_t = DMatrix::<f64>::zeros(n, n);
    let mut flipped = Vec::new();
    let mut theta_max: f64 = 0.0;
    let mut k = 0;
    while k < n {
        if k + 1 < n && t[(k + 1, k)].abs() > 1e-13 {
            let c = 0.5 * (t[(k, k)] + t[(k + 1, k + 1)]);
            let s = 0.5 * (t[(k + 1, k)] - t[(k, k + 1)]);
            let theta = s.atan2(c);
            log_t[(k + 1, k)] = theta;
            log_t[(k, k + 1)] = -theta;
            theta_max = theta_max.max(theta.abs());
            k += 2;
        } else {
            if t[(k, k)] < 0.0 {
                flipped.push(k);
            }
            k += 1;
        }
    }
    if flipped.len() % 2 == 1 {
        return Err(HqcsError::LogBranchFailure(
            "orthogonal matrix has determinant -1".into(),
        ));
    }
    // paired -1 eigenvalues form half turns
    for pair in flipped.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        log_t[(b, a)] = std::f64::consts::PI;
        log_t[(a, b)] = -std::f64::consts::PI;
        theta_max = std::f64::consts::PI;
    }
    let lambda = &q * log_t * q.transpose();
    let lambda = (&lambda - lambda.transpose()) * 0.5;
    let err = (lambda.clone().exp() - o).amax();
    if !(err < 1e-10) {
        return Err(HqcsError::LogBranchFailure(format!(
            "logarithm reconstructs the rotation only to {err:.3e}"
        )));
    }
    Ok((lambda, theta_max))
}

/// All occupations of `n_modes` with exactly `total` quanta, lexicographic.
fn sector_occupations(n_modes: usize, total: usize) -> Vec<Occupation> {
    fn rec(prefix: &mut Occupation, left: usize, modes_left: usize, out: &mut Vec<Occupation>) {
        if modes_left == 1 {
            prefix.push(left as u16);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in (0..=left).rev() {
            prefix.push(v as u16);
            rec(prefix, left - v, modes_left - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n_modes), total, n_modes, &mut out);
    out.reverse();
    out
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// `exp(Σ a†_j Λ_jk a_k)` restricted to one total-quanta sector, applied to `x`.
fn rotate_sector(
    occs: &[Occupation],
    x: &[f64],
    lambda: &DMatrix<f64>,
    theta_max: f64,
) -> Vec<f64> {
    let n_modes = lambda.nrows();
    let total: usize = occs.first().map(|o| o.iter().map(|&v| v as usize).sum()).unwrap_or(0);
    if total == 0 {
        return x.to_vec();
    }
    let index: HashMap<&Occupation, usize> = occs.iter().enumerate().map(|(i, o)| (o, i)).collect();

    // sparse generator in coordinate form: y[row] += w * x[col]
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut target = Vec::with_capacity(n_modes);
    for (col, occ) in occs.iter().enumerate() {
        for k in 0..n_modes {
            if occ[k] == 0 {
                continue;
            }
            for j in 0..n_modes {
                let l = lambda[(j, k)];
                if j == k || l == 0.0 {
                    continue;
                }
                target.clear();
                target.extend_from_slice(occ);
                target[k] -= 1;
                target[j] += 1;
                let row = index[&target];
                let w = l * (occ[k] as f64).sqrt() * (target[j] as f64).sqrt();
                entries.push((row, col, w));
            }
        }
    }

    // spectral radius of the sector generator is total * theta_max
    let radius = total as f64 * theta_max;
    let steps = (radius / 0.5).ceil().max(1.0) as usize;
    let h = 1.0 / steps as f64;
    let mut v = x.to_vec();
    let mut term = vec![0.0; v.len()];
    let mut next = vec![0.0; v.len()];
    for _ in 0..steps {
        term.copy_from_slice(&v);
        let mut acc = v.clone();
        for order in 1..200 {
            next.iter_mut().for_each(|y| *y = 0.0);
            for &(r, c, w) in &entries {
                next[r] += w * term[c];
            }
            let scale = h / order as f64;
            let mut norm = 0.0;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = n * scale;
                norm += *t * *t;
            }
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
            }
            if norm.sqrt() < 1e-18 {
                break;
            }
        }
        v = acc;
    }
    v
}

/// Apply the passive linear-optics unitary `U(O)` with `U† R U = O R`.
/// A determinant of -1 is handled by a parity factor on the last mode.
pub fn apply_rotation(state: &StateVector, o: &DMatrix<f64>) -> Result<StateVector> {
    let n = state.n_modes;
    if o.nrows() != n || o.ncols() != n {
        return Err(HqcsError::DimensionMismatch {
            what: "rotation".into(),
            expected: n,
            found: o.nrows(),
        });
    }
    let (dev, _, _) = crate::model::orthogonality_deviation(o);
    if !(dev < 1e-10) {
        return Err(HqcsError::LogBranchFailure(format!(
            "matrix is not orthogonal (deviation {dev:.3e})"
        )));
    }
    if (o - DMatrix::identity(n, n)).amax() == 0.0 {
        return Ok(state.clone());
    }

    let mut work = state.clone();
    let mut proper = o.clone();
    if o.determinant() < 0.0 {
        // O = O' F with F = diag(1, .., 1, -1); U(O) = U(O') U(F)
        for (occ, a) in work.amplitudes.iter_mut() {
            if occ[n - 1] % 2 == 1 {
                *a = -*a;
            }
        }
        for r in 0..n {
            proper[(r, n - 1)] = -proper[(r, n - 1)];
        }
    }
    let (lambda, theta_max) = orthogonal_log(&proper)?;

    let mut sectors: BTreeMap<usize, Vec<(&Occupation, f64)>> = BTreeMap::new();
    for (occ, &a) in &work.amplitudes {
        let total: usize = occ.iter().map(|&v| v as usize).sum();
        sectors.entry(total).or_default().push((occ, a));
    }
    let total_size: u128 = sectors
        .keys()
        .map(|&t| binomial((t + n - 1) as u128, (n - 1) as u128))
        .sum();
    guard(total_size)?;

    let rotated: Vec<Vec<(Occupation, f64)>> = sectors
        .into_par_iter()
        .map(|(total, members)| {
            let occs = sector_occupations(n, total);
            let lookup: HashMap<&Occupation, usize> =
                occs.iter().enumerate().map(|(i, o)| (o, i)).collect();
            let mut x = vec![0.0; occs.len()];
            for (occ, a) in members {
                x[lookup[occ]] = a;
            }
            let y = rotate_sector(&occs, &x, &lambda, theta_max);
            occs.into_iter()
                .zip(y)
                .filter(|(_, a)| a.abs() > PRUNE_TOL)
                .collect()
        })
        .collect();

    let amplitudes = rotated.into_iter().flatten().collect();
    Ok(StateVector {
        n_modes: n,
        amplitudes,
    })
}

/// Dense amplitudes over a [`FockBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeTable {
    pub basis: FockBasis,
    pub amplitudes: Vec<f64>,
}

impl AmplitudeTable {
    pub fn from_state(basis: FockBasis, state: &StateVector) -> Self {
        let mut amplitudes = vec![0.0; basis.dim()];
        for (occ, &a) in &state.amplitudes {
            if let Some(i) = basis.index(occ) {
                amplitudes[i] = a;
            }
        }
        Self { basis, amplitudes }
    }

    pub fn amplitude(&self, occ: &[u16]) -> f64 {
        self.basis.index(occ).map_or(0.0, |i| self.amplitudes[i])
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.amplitudes[index] * self.amplitudes[index]
    }

    pub fn total_probability(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    /// Binary dump: `n_modes`, `cutoff`, `count` as u64, then `count`
    /// `(index: u64, amplitude: f64)` pairs; little-endian, nonzero entries only.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let nonzero: Vec<(usize, f64)> = self
            .amplitudes
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, a)| *a != 0.0)
            .collect();
        w.write_all(&(self.basis.n_modes as u64).to_le_bytes())?;
        w.write_all(&(self.basis.cutoff as u64).to_le_bytes())?;
        w.write_all(&(nonzero.len() as u64).to_le_bytes())?;
        for (i, a) in nonzero {
            w.write_all(&(i as u64).to_le_bytes())?;
            w.write_all(&a.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let n_modes = u64::from_le_bytes(next(&mut r)?) as usize;
        let cutoff = u64::from_le_bytes(next(&mut r)?) as usize;
        let count = u64::from_le_bytes(next(&mut r)?) as usize;
        let basis = FockBasis::new(n_modes, cutoff)?;
        let mut amplitudes = vec![0.0; basis.dim()];
        for _ in 0..count {
            let i = u64::from_le_bytes(next(&mut r)?) as usize;
            let a = f64::from_le_bytes(next(&mut r)?);
            let slot = amplitudes.get_mut(i).ok_or(HqcsError::IndexOutOfRange {
                mode: 0,
                index: i,
                bound: basis.dim(),
            })?;
            *slot = a;
        }
        Ok(Self { basis, amplitudes })
    }
}

/// `1 - Σ P(v)`, clamped to `[0, 1]`.
pub fn norm_deficit(table: &AmplitudeTable) -> f64 {
    (1.0 - table.total_probability()).clamp(0.0, 1.0)
}

/// Probability distribution of total quanta in the squeezed vacuum
/// `⊗ S(λ_n)|0⟩`, out to where the remaining mass is negligible.
fn squeezed_quanta_distribution(lambdas: &[f64]) -> Vec<f64> {
    let mut total = vec![1.0];
    for &lam in lambdas {
        let t2 = lam.tanh().powi(2);
        let mut single = vec![1.0 / lam.cosh()];
        // P(2k) = (2k)! / (4^k k!^2) tanh^{2k} / cosh; stored at index 2k
        let mut p = 1.0 / lam.cosh();
        let mut k = 0usize;
        while p > 1e-40 && k < 100_000 && t2 > 0.0 {
            k += 1;
            p *= t2 * ((2 * k - 1) as f64) / (2 * k) as f64;
            single.push(0.0);
            single.push(p);
        }
        let mut next = vec![0.0; total.len() + single.len() - 1];
        for (i, a) in total.iter().enumerate() {
            for (j, b) in single.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        while next.len() > 1 && *next.last().unwrap() < 1e-60 {
            next.pop();
        }
        total = next;
    }
    total
}

/// Smallest total-quanta cap whose squeezed-vacuum tail is below `tol`.
pub fn squeeze_total_cap(lambdas: &[f64], tol: f64) -> usize {
    let dist = squeezed_quanta_distribution(lambdas);
    let mut tail = 0.0;
    for cap in (0..dist.len()).rev() {
        tail += dist[cap];
        if tail >= tol {
            return cap;
        }
    }
    0
}

/// Amplitudes `⟨φ_m^v|φ_i^0⟩` for every `v` in `basis`.
pub fn doktorov_state(params: &DoktorovParams, basis: FockBasis) -> Result<AmplitudeTable> {
    let n = params.n_modes();
    if basis.n_modes != n {
        return Err(HqcsError::DimensionMismatch {
            what: "Fock basis modes".into(),
            expected: n,
            found: basis.n_modes,
        });
    }
    let lambdas = params.squeezing();
    let cap = squeeze_total_cap(&lambdas, SQUEEZE_TAIL_TOL);
    guard(binomial((cap + n) as u128, n as u128))?;
    if cap > u16::MAX as usize / 2 {
        return Err(HqcsError::Overflow(format!("squeezing needs {cap} quanta")));
    }

    let mut state = StateVector::vacuum(n);
    state = apply_rotation(&state, &params.right.transpose())?;
    for (mode, &lam) in lambdas.iter().enumerate() {
        if lam != 0.0 {
            state = apply_squeeze(&state, mode, lam, cap, Some(cap))?;
        }
    }
    state = apply_rotation(&state, &params.left)?;
    for (mode, &alpha) in params.displacement().iter().enumerate() {
        state = apply_displacement(&state, mode, alpha, basis.cutoff)?;
    }
    Ok(AmplitudeTable::from_state(basis, &state))
}

/// Empirical sample counts over configuration indices of a [`FockBasis`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigTable {
    pub counts: BTreeMap<usize, u64>,
    pub total: u64,
    pub seed: u64,
}

impl ConfigTable {
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }
}

/// RNG for stream `stream` of a run seeded with `seed`: ChaCha8 keyed by the
/// seed with the stream id as the ChaCha stream. Results do not depend on the
/// number of worker threads.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw `draws` i.i.d. configurations from `P(v) / Σ P`.
pub fn sample(table: &AmplitudeTable, draws: u64, seed: u64) -> Result<ConfigTable> {
    if draws == 0 {
        return Err(HqcsError::Config("number of samples must be at least 1".into()));
    }
    let weights: Vec<f64> = table.amplitudes.iter().map(|a| a * a).collect();
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(HqcsError::EmptyTable);
    }
    let dist = WeightedIndex::new(&weights).map_err(|_| HqcsError::EmptyTable)?;
    let n_chunks = draws.div_ceil(SAMPLE_CHUNK);
    let partial: Vec<BTreeMap<usize, u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream_rng(seed, chunk);
            let start = chunk * SAMPLE_CHUNK;
            let len = SAMPLE_CHUNK.min(draws - start);
            let mut counts = BTreeMap::new();
            for _ in 0..len {
                *counts.entry(dist.sample(&mut rng)).or_insert(0u64) += 1;
            }
            counts
        })
        .collect();
    let mut counts = BTreeMap::new();
    for part in partial {
        for (k, c) in part {
            *counts.entry(k).or_insert(0) += c;
        }
    }
    Ok(ConfigTable {
        counts,
        total: draws,
        seed,
    })
}
