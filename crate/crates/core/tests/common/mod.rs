#![allow(dead_code)]

use std::path::PathBuf;

use hqcs::cli::{load_model_file, with_rotation_angle};
use hqcs::model::{cm1_to_hartree, make_rotation, DuschinskyMap, PlaneRotation, VibronicModel, HARTREE_TO_EV};
use nalgebra::DVector;

pub const W0_CM1: f64 = 3868.0;
pub const DEPTH_EV: f64 = 5.52;

pub fn w0() -> f64 {
    cm1_to_hartree(W0_CM1)
}

pub fn depth() -> f64 {
    DEPTH_EV / HARTREE_TO_EV
}

/// `(1/ω0) √(D/2)`
pub fn unit_shift() -> f64 {
    (depth() / 2.0).sqrt() / w0()
}

/// Two-mode harmonic benchmark: `ω_f = (ω0, ratio ω0)`, `ω_i = ω_f / 5`,
/// both displacements `-(1/ω0)√(D/2)`, one rotation by `theta`.
pub fn two_mode_benchmark(ratio: f64, theta: f64) -> VibronicModel {
    let wf = vec![w0(), ratio * w0()];
    let wi = wf.iter().map(|w| w / 5.0).collect();
    let s = make_rotation(2, &[PlaneRotation::new(0, 1, theta)]).unwrap();
    VibronicModel::harmonic(wi, wf, DuschinskyMap::new(s, DVector::from_element(2, -unit_shift())), 0.0)
        .validate()
        .unwrap()
}

/// The six two-mode sign benchmarks as `(label, ω_f2/ω0, θ)`.
pub fn two_mode_cases() -> Vec<(&'static str, f64, f64)> {
    use std::f64::consts::PI;
    vec![
        ("a", 0.5, PI / 6.0),
        ("b", 0.5, PI / 4.0),
        ("c", 0.5, PI / 3.0),
        ("d", 0.2, PI / 2.0),
        ("e", 0.5, PI / 2.0),
        ("f", 2.0, PI / 2.0),
    ]
}

/// Four-mode benchmark: `ω_f,n = ω0/n`, `ω_i = ω_f/5`, six chained π/4
/// rotations, `Δq_1 > 0` and `Δq_2..4 < 0`.
pub fn four_mode_benchmark() -> VibronicModel {
    let wf: Vec<f64> = (1..=4).map(|n| w0() / n as f64).collect();
    let wi = wf.iter().map(|w| w / 5.0).collect();
    let q = std::f64::consts::FRAC_PI_4;
    let planes: Vec<PlaneRotation> = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        .iter()
        .map(|&(a, b)| PlaneRotation::new(a, b, q))
        .collect();
    let s = make_rotation(4, &planes).unwrap();
    let d = unit_shift();
    let shift = DVector::from_vec(vec![d, -d, -d, -d]);
    VibronicModel::harmonic(wi, wf, DuschinskyMap::new(s, shift), 0.0)
        .validate()
        .unwrap()
}

pub fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn morse2(theta: f64) -> VibronicModel {
    let doc = load_model_file(&data_file("morse2.json")).unwrap();
    with_rotation_angle(doc.model, theta).unwrap()
}
