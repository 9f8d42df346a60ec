//! Classical sampling stage: biased two-level draws of `(v_m, v_f)` pairs,
//! the signed amplitude assembly over a sampled support, and the
//! completeness metric.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anharmonic::ModeSolution;
use crate::error::{HqcsError, Result};
use crate::focksim::{stream_rng, AmplitudeTable, ConfigTable, FockBasis, Occupation, SAMPLE_CHUNK};
use crate::signs::config_sign;

/// Offset separating pair-sampling RNG streams from boson-sampling streams.
pub const PAIR_STREAM_OFFSET: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `v_m` drawn with its exact probability restricted to the sampled support.
    #[default]
    ExactProbability,
    /// `v_m` drawn with its boson-sampling count.
    EmpiricalCounts,
}

impl FromStr for WeightMode {
    type Err = HqcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_probability" | "exact-probability" | "exact" => Ok(Self::ExactProbability),
            "empirical_counts" | "empirical-counts" | "counts" => Ok(Self::EmpiricalCounts),
            other => Err(HqcsError::Config(format!("unknown weight mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsConfig {
    pub loops: u64,
    pub bias: f64,
    pub seed: u64,
    pub weight_mode: WeightMode,
}

impl CsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.loops == 0 {
            return Err(HqcsError::Config("classical sampling needs at least one loop".into()));
        }
        if !(self.bias >= 1.0 && self.bias.is_finite()) {
            return Err(HqcsError::Config(format!("bias {} must be at least 1", self.bias)));
        }
        Ok(())
    }
}

/// Sampled `(v_m, v_f)` pairs with visit counts. `v_m` is an index into
/// `basis`; `support` is the set of `v_m` seen by boson sampling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    pub basis: FockBasis,
    pub support: Vec<usize>,
    pub pairs: BTreeMap<(usize, Occupation), u64>,
    pub loops: u64,
}

impl PairSet {
    pub fn m_m(&self) -> usize {
        self.pairs.keys().map(|(m, _)| *m).collect::<BTreeSet<_>>().len()
    }

    pub fn m_f(&self) -> usize {
        self.final_configs().len()
    }

    pub fn m_pair(&self) -> usize {
        self.pairs.len()
    }

    /// Distinct sampled `v_f`, sorted.
    pub fn final_configs(&self) -> Vec<Occupation> {
        self.pairs
            .keys()
            .map(|(_, f)| f.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Text dump: `v_m_tuple TAB v_f_tuple TAB count` per pair.
    pub fn to_text(&self) -> String {
        let tuple = |v: &[u16]| {
            let inner: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            format!("({})", inner.join(","))
        };
        let mut out = String::new();
        for ((m, f), count) in &self.pairs {
            let _ = writeln!(out, "{}\t{}\t{}", tuple(&self.basis.occupation(*m)), tuple(f), count);
        }
        out
    }
}

/// Draw `cs.loops` pairs: `v_m` from the sampled support, then each
/// `v_f,n` independently with probability `∝ |Ω_n[v_m,n][v_f,n]|^{2/k}`.
pub fn sample_pairs(
    configs: &ConfigTable,
    table: &AmplitudeTable,
    solutions: &[ModeSolution],
    cs: &CsConfig,
) -> Result<PairSet> {
    cs.validate()?;
    let basis = table.basis;
    if configs.counts.is_empty() {
        return Err(HqcsError::EmptyTable);
    }
    if solutions.len() != basis.n_modes {
        return Err(HqcsError::DimensionMismatch {
            what: "mode solutions".into(),
            expected: basis.n_modes,
            found: solutions.len(),
        });
    }
    let support: Vec<usize> = configs.counts.keys().copied().collect();
    let weights: Vec<f64> = match cs.weight_mode {
        WeightMode::ExactProbability => support.iter().map(|&i| table.probability(i)).collect(),
        WeightMode::EmpiricalCounts => support.iter().map(|&i| configs.counts[&i] as f64).collect(),
    };
    let vm_dist = WeightedIndex::new(&weights).map_err(|_| HqcsError::EmptyTable)?;

    // conditional v_f tables for every quantum present in the support
    let exponent = 2.0 / cs.bias;
    let mut rows: Vec<BTreeMap<usize, WeightedIndex<f64>>> = vec![BTreeMap::new(); basis.n_modes];
    for &i in &support {
        for (mode, &q) in basis.occupation(i).iter().enumerate() {
            let q = q as usize;
            if rows[mode].contains_key(&q) {
                continue;
            }
            let omega = &solutions[mode].overlap;
            if q >= omega.nrows() {
                return Err(HqcsError::IndexOutOfRange {
                    mode,
                    index: q,
                    bound: omega.nrows(),
                });
            }
            let w: Vec<f64> = omega.row(q).iter().map(|x| x.abs().powf(exponent)).collect();
            let dist = WeightedIndex::new(&w).map_err(|_| HqcsError::ZeroWeightRow { mode, quantum: q })?;
            rows[mode].insert(q, dist);
        }
    }

    let n_chunks = cs.loops.div_ceil(SAMPLE_CHUNK);
    let partial: Vec<BTreeMap<(usize, Occupation), u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream_rng(cs.seed, PAIR_STREAM_OFFSET + chunk);
            let start = chunk * SAMPLE_CHUNK;
            let len = SAMPLE_CHUNK.min(cs.loops - start);
            let mut out = BTreeMap::new();
            for _ in 0..len {
                let vm = support[vm_dist.sample(&mut rng)];
                let occ = basis.occupation(vm);
                let vf: Occupation = occ
                    .iter()
                    .enumerate()
                    .map(|(mode, &q)| rows[mode][&(q as usize)].sample(&mut rng) as u16)
                    .collect();
                *out.entry((vm, vf)).or_insert(0u64) += 1;
            }
            out
        })
        .collect();
    let mut pairs = BTreeMap::new();
    for part in partial {
        for (k, c) in part {
            *pairs.entry(k).or_insert(0) += c;
        }
    }
    Ok(PairSet {
        basis,
        support,
        pairs,
        loops: cs.loops,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignSource {
    /// `Π sgn(Δq_n)^{v_n}`, as available from a sampling device.
    #[default]
    Rule,
    /// Signs of the simulated amplitudes.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumScope {
    /// Sum over every `v_m` in the boson-sampling support.
    #[default]
    Support,
    /// Sum only over the `v_m` paired with each `v_f`.
    PairedOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssemblyOptions {
    pub sign_source: SignSource,
    pub scope: SumScope,
    /// Use `P / Σ P` over the truncated table.
    pub renormalize: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            sign_source: SignSource::Rule,
            scope: SumScope::Support,
            renormalize: true,
        }
    }
}

/// `A(v_f) = Σ_{v_m} s(v_m) √P(v_m) Π_n Ω_n[v_m,n][v_f,n]` for every distinct
/// sampled `v_f`, in sorted order.
pub fn assemble_amplitudes(
    pairs: &PairSet,
    table: &AmplitudeTable,
    shift: &[f64],
    solutions: &[ModeSolution],
    opts: &AssemblyOptions,
) -> Vec<(Occupation, f64)> {
    let basis = pairs.basis;
    let norm = if opts.renormalize {
        table.total_probability().sqrt()
    } else {
        1.0
    };
    let signed = |i: usize| -> f64 {
        let a = table.amplitudes[i];
        match opts.sign_source {
            SignSource::Exact => a / norm,
            SignSource::Rule => config_sign(shift, &basis.occupation(i)) * a.abs() / norm,
        }
    };
    let support: Vec<(Occupation, f64)> = pairs
        .support
        .iter()
        .map(|&i| (basis.occupation(i), signed(i)))
        .collect();

    let mut paired: BTreeMap<&Occupation, Vec<usize>> = BTreeMap::new();
    if opts.scope == SumScope::PairedOnly {
        for (m, f) in pairs.pairs.keys() {
            paired.entry(f).or_default().push(*m);
        }
    }

    let product = |vm: &[u16], vf: &[u16]| -> f64 {
        vm.iter()
            .zip(vf)
            .zip(solutions)
            .map(|((&m, &f), s)| s.overlap[(m as usize, f as usize)])
            .product()
    };

    pairs
        .final_configs()
        .into_par_iter()
        .map(|vf| {
            let a = match opts.scope {
                SumScope::Support => support.iter().map(|(vm, s)| s * product(vm, &vf)).sum(),
                SumScope::PairedOnly => paired[&vf]
                    .iter()
                    .map(|&i| signed(i) * product(&basis.occupation(i), &vf))
                    .sum(),
            };
            (vf, a)
        })
        .collect()
}

/// `Σ_{sampled v_f} A(v_f)²`.
pub fn completeness(
    pairs: &PairSet,
    table: &AmplitudeTable,
    shift: &[f64],
    solutions: &[ModeSolution],
    opts: &AssemblyOptions,
) -> f64 {
    assemble_amplitudes(pairs, table, shift, solutions, opts)
        .iter()
        .map(|(_, a)| a * a)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doktorov::{build_dimensionless, decompose};
    use crate::focksim::{doktorov_state, sample};
    use crate::model::{make_rotation, PlaneRotation};
    use nalgebra::{DMatrix, DVector};

    fn two_mode_table(cutoff: usize) -> (AmplitudeTable, Vec<f64>) {
        let shift = vec![15.0, -10.0];
        let s = make_rotation(2, &[PlaneRotation::new(0, 1, 0.4)]).unwrap();
        let map = build_dimensionless(&[0.002, 0.003], &[0.004, 0.003], &s, &DVector::from_vec(shift.clone()));
        let t = doktorov_state(&decompose(&map).unwrap(), FockBasis::new(2, cutoff).unwrap()).unwrap();
        (t, shift)
    }

    fn identity_solutions(n_modes: usize, n: usize) -> Vec<ModeSolution> {
        (0..n_modes).map(|_| ModeSolution::harmonic(0.01, n, n)).collect()
    }

    /// A small mixing table: rotation by `theta` between levels 0 and 1 of
    /// each mode, identity elsewhere.
    fn mixing_solutions(n_modes: usize, n: usize, theta: f64) -> Vec<ModeSolution> {
        (0..n_modes)
            .map(|_| {
                let mut s = ModeSolution::harmonic(0.01, n, n);
                let mut o = DMatrix::identity(n, n);
                for k in (0..n - 1).step_by(2) {
                    o[(k, k)] = theta.cos();
                    o[(k + 1, k + 1)] = theta.cos();
                    o[(k, k + 1)] = theta.sin();
                    o[(k + 1, k)] = -theta.sin();
                }
                s.overlap = o;
                s
            })
            .collect()
    }

    fn cs(loops: u64, bias: f64, seed: u64) -> CsConfig {
        CsConfig {
            loops,
            bias,
            seed,
            weight_mode: WeightMode::ExactProbability,
        }
    }

    #[test]
    fn identity_overlaps_pair_diagonally() {
        let (t, _) = two_mode_table(6);
        let configs = sample(&t, 5000, 1).unwrap();
        let p = sample_pairs(&configs, &t, &identity_solutions(2, 10), &cs(3000, 1.0, 5)).unwrap();
        for (m, f) in p.pairs.keys() {
            assert_eq!(&t.basis.occupation(*m), f);
        }
        assert_eq!(p.m_pair(), p.m_m());
        assert_eq!(p.pairs.values().sum::<u64>(), 3000);
    }

    #[test]
    fn single_loop() {
        let (t, _) = two_mode_table(4);
        let configs = sample(&t, 100, 1).unwrap();
        let p = sample_pairs(&configs, &t, &mixing_solutions(2, 8, 0.5), &cs(1, 2.0, 0)).unwrap();
        assert_eq!(p.m_pair(), 1);
        assert_eq!(p.m_m(), 1);
        assert_eq!(p.m_f(), 1);
    }

    #[test]
    fn rejects_bad_config_and_zero_rows() {
        let (t, _) = two_mode_table(4);
        let configs = sample(&t, 100, 1).unwrap();
        let sols = mixing_solutions(2, 8, 0.5);
        assert!(sample_pairs(&configs, &t, &sols, &cs(0, 1.0, 0)).is_err());
        assert!(sample_pairs(&configs, &t, &sols, &cs(10, 0.5, 0)).is_err());
        let mut zero = sols.clone();
        zero[1].overlap.row_mut(0).fill(0.0);
        assert!(matches!(
            sample_pairs(&configs, &t, &zero, &cs(10, 1.0, 0)),
            Err(HqcsError::ZeroWeightRow { mode: 1, quantum: 0 })
        ));
    }

    #[test]
    fn deterministic_and_nested() {
        let (t, _) = two_mode_table(5);
        let configs = sample(&t, 10_000, 3).unwrap();
        let sols = mixing_solutions(2, 8, 0.7);
        let a = sample_pairs(&configs, &t, &sols, &cs(20_000, 2.0, 11)).unwrap();
        let b = sample_pairs(&configs, &t, &sols, &cs(20_000, 2.0, 11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
        // a shorter run draws a prefix of the same sequence
        let small = sample_pairs(&configs, &t, &sols, &cs(100, 2.0, 11)).unwrap();
        for key in small.pairs.keys() {
            assert!(a.pairs.contains_key(key));
        }
    }

    #[test]
    fn unbiased_frequencies_match_product_weights() {
        let (t, _) = two_mode_table(4);
        let configs = sample(&t, 200_000, 8).unwrap();
        let sols = mixing_solutions(2, 6, 0.6);
        let n = 100_000u64;
        let p = sample_pairs(&configs, &t, &sols, &cs(n, 1.0, 21)).unwrap();
        let z: f64 = configs.counts.keys().map(|&i| t.probability(i)).sum();
        let mut worst: f64 = 0.0;
        for &vm in &configs.counts.keys().copied().collect::<Vec<_>>() {
            let occ = t.basis.occupation(vm);
            for f0 in 0..6u16 {
                for f1 in 0..6u16 {
                    let w = t.probability(vm) / z
                        * sols[0].overlap[(occ[0] as usize, f0 as usize)].powi(2)
                        * sols[1].overlap[(occ[1] as usize, f1 as usize)].powi(2);
                    if w < 1e-4 {
                        continue;
                    }
                    let hat = p.pairs.get(&(vm, vec![f0, f1])).copied().unwrap_or(0) as f64 / n as f64;
                    let se = (w * (1.0 - w) / n as f64).sqrt();
                    worst = worst.max((hat - w).abs() / se);
                }
            }
        }
        assert!(worst < 4.5, "worst deviation {worst} standard errors");
    }

    #[test]
    fn bias_increases_final_coverage() {
        let (t, _) = two_mode_table(4);
        let configs = sample(&t, 50_000, 2).unwrap();
        let sols: Vec<ModeSolution> = (0..2)
            .map(|_| {
                let mut s = ModeSolution::harmonic(0.01, 8, 8);
                // spread each row geometrically over the final levels
                s.overlap = DMatrix::from_fn(8, 8, |r, c| 0.3f64.powi((r as i32 - c as i32).abs()));
                s
            })
            .collect();
        let mean_mf = |k: f64| -> f64 {
            (0..8)
                .map(|seed| sample_pairs(&configs, &t, &sols, &cs(300, k, seed)).unwrap().m_f() as f64)
                .sum::<f64>()
                / 8.0
        };
        let (k1, k2, k4) = (mean_mf(1.0), mean_mf(2.0), mean_mf(4.0));
        assert!(k1 < k2 && k2 < k4, "{k1} {k2} {k4}");
    }

    #[test]
    fn completeness_with_identity_is_sampled_mass() {
        let (t, shift) = two_mode_table(6);
        let configs = sample(&t, 20_000, 4).unwrap();
        let sols = identity_solutions(2, 10);
        let p = sample_pairs(&configs, &t, &sols, &cs(50_000, 1.0, 9)).unwrap();
        let opts = AssemblyOptions {
            renormalize: false,
            ..Default::default()
        };
        let c = completeness(&p, &t, &shift, &sols, &opts);
        let sampled: f64 = p.final_configs().iter().map(|f| t.amplitude(f).powi(2)).sum();
        assert!((c - sampled).abs() < 1e-12);
    }

    #[test]
    fn completeness_grows_with_nested_loops() {
        let (t, shift) = two_mode_table(6);
        let configs = sample(&t, 20_000, 4).unwrap();
        let sols = mixing_solutions(2, 8, 0.5);
        let mut last = 0.0;
        for loops in [10, 100, 1000, 10_000] {
            let p = sample_pairs(&configs, &t, &sols, &cs(loops, 2.0, 3)).unwrap();
            let c = completeness(&p, &t, &shift, &sols, &AssemblyOptions::default());
            assert!(c >= last - 1e-14 && c <= 1.0 + 1e-10);
            last = c;
        }
    }

    #[test]
    fn completeness_independent_of_pair_order() {
        let (t, shift) = two_mode_table(5);
        let configs = sample(&t, 5_000, 4).unwrap();
        let sols = mixing_solutions(2, 8, 0.5);
        let p = sample_pairs(&configs, &t, &sols, &cs(2_000, 2.0, 3)).unwrap();
        let c1 = completeness(&p, &t, &shift, &sols, &AssemblyOptions::default());
        let mut q = p.clone();
        q.support.reverse();
        let c2 = completeness(&q, &t, &shift, &sols, &AssemblyOptions::default());
        assert!((c1 - c2).abs() < 1e-13);
    }

    #[test]
    fn paired_scope_is_subset_of_support_sum() {
        let (t, shift) = two_mode_table(5);
        let configs = sample(&t, 5_000, 4).unwrap();
        let sols = identity_solutions(2, 8);
        let p = sample_pairs(&configs, &t, &sols, &cs(2_000, 1.0, 3)).unwrap();
        // with identity overlaps both scopes pick the same single term
        let a = completeness(&p, &t, &shift, &sols, &AssemblyOptions::default());
        let b = completeness(
            &p,
            &t,
            &shift,
            &sols,
            &AssemblyOptions {
                scope: SumScope::PairedOnly,
                ..Default::default()
            },
        );
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn text_export_format() {
        let (t, _) = two_mode_table(3);
        let configs = sample(&t, 100, 1).unwrap();
        let p = sample_pairs(&configs, &t, &identity_solutions(2, 5), &cs(5, 1.0, 1)).unwrap();
        let text = p.to_text();
        let line = text.lines().next().unwrap();
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3);
        assert!(fields[0].starts_with('(') && fields[1].ends_with(')'));
        assert_eq!(text.lines().map(|l| l.split('\t').nth(2).unwrap().parse::<u64>().unwrap()).sum::<u64>(), 5);
    }

    #[test]
    fn weight_mode_parsing() {
        assert_eq!("exact_probability".parse::<WeightMode>().unwrap(), WeightMode::ExactProbability);
        assert_eq!("empirical-counts".parse::<WeightMode>().unwrap(), WeightMode::EmpiricalCounts);
        assert!("x".parse::<WeightMode>().is_err());
    }
}
