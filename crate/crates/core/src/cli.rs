//! Model-file ingestion, pipeline orchestration and run artifacts.
//!
//! Model files are JSON. Every numeric block carries its own `units` tag
//! (`"cm-1"`, `"eV"` or `"au"`); coordinates and displacements are in
//! mass-weighted atomic units unless tagged `"dimensionless"`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::anharmonic::{solve_modes, HamiltonianPath, ModeSolution, DEFAULT_N_BASIS};
use crate::doktorov::{build_dimensionless, decompose, DoktorovParams};
use crate::error::{HqcsError, Result};
use crate::focksim::{doktorov_state, norm_deficit, sample, AmplitudeTable, ConfigTable, FockBasis};
use crate::model::{
    convert_units, hartree_to_cm1, intermediate_pes, make_rotation, DuschinskyMap, EnergyUnit, HarmonicPes,
    OneModePotential, PlaneRotation, VibronicModel,
};
use crate::oracle::{exact_spectrum_sos, tcf_spectrum, SosOptions, TcfOptions};
use crate::sampling::{completeness, sample_pairs, AssemblyOptions, CsConfig, PairSet, SignSource, SumScope, WeightMode};
use crate::signs::inapplicable_mass;
use crate::spectrum::{broaden_on, line_list, Direction, GridSpec, SpectralLine, SpectrumGrid, DEFAULT_GRID_POINTS};

pub const DEFAULT_CUTOFF: usize = 15;
pub const DEFAULT_SAMPLES: u64 = 10_000;
pub const DEFAULT_N_STATES: usize = 15;
pub const DEFAULT_SIGMA: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_TCF_STEP: f64 = 8.0;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Quantity {
    value: f64,
    units: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrequencyBlock {
    units: String,
    frequencies: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalBlock {
    units: String,
    frequencies: Vec<f64>,
    #[serde(default)]
    potentials: Option<Vec<PotentialSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PotentialSpec {
    /// `½ ω_f² q²` at the block's frequency.
    Harmonic,
    /// `D (1 - e^{-αq})²`; `alpha` (a.u.) defaults to `ω_f / √(2D)`.
    Morse { depth: Quantity, alpha: Option<f64> },
    /// `Σ c_j q^j` in a.u., starting at `c_1`.
    Polynomial { coefficients: Vec<f64> },
    /// `D[(αq)² - (αq)³ + (7/12)(αq)⁴]` with `α = ω_f / √(2D)`.
    Quartic { depth: Quantity },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `q_f = S q_i + Δq`
    #[default]
    FinalFromInitial,
    /// `q_i = S q_f + Δq`
    InitialFromFinal,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RotationSpec {
    modes: [usize; 2],
    angle: f64,
    #[serde(default)]
    angle_units: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShiftBlock {
    units: String,
    values: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DuschinskyBlock {
    #[serde(default)]
    convention: Convention,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    rotations: Option<Vec<RotationSpec>>,
    shift: ShiftBlock,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    notes: Vec<String>,
    #[serde(default)]
    direction: Option<Direction>,
    #[serde(default)]
    default_cutoff: Option<usize>,
    initial: FrequencyBlock,
    #[serde(rename = "final")]
    final_block: FinalBlock,
    duschinsky: DuschinskyBlock,
    adiabatic_gap: Quantity,
    #[serde(default)]
    transition_dipole: Option<f64>,
    #[serde(default)]
    spectrum_shift: Option<Quantity>,
}

/// A parsed model together with the run hints stored next to it.
#[derive(Clone, Debug)]
pub struct ModelDocument {
    pub name: String,
    /// Provenance notes carried by the file.
    pub notes: Vec<String>,
    pub model: VibronicModel,
    pub direction: Direction,
    pub default_cutoff: Option<usize>,
    /// Constant added to the output energy axis, cm⁻¹.
    pub spectrum_shift_cm1: f64,
    pub sha256: String,
}

fn parse_err(path: &Path, field: &str, message: impl Into<String>) -> HqcsError {
    HqcsError::Parse {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.into(),
    }
}

fn unit(path: &Path, field: &str, s: &str) -> Result<EnergyUnit> {
    EnergyUnit::from_str(s).map_err(|_| parse_err(path, field, format!("unknown unit '{s}'")))
}

fn energy(path: &Path, field: &str, q: &Quantity) -> Result<f64> {
    Ok(convert_units(q.value, unit(path, field, &q.units)?, EnergyUnit::Hartree))
}

fn frequencies(path: &Path, field: &str, units: &str, values: &[f64]) -> Result<Vec<f64>> {
    let u = unit(path, field, units)?;
    Ok(values.iter().map(|&w| convert_units(w, u, EnergyUnit::Hartree)).collect())
}

/// Quartic surrogate `D[(αq)² - (αq)³ + (7/12)(αq)⁴]`, curvature `ω` at 0.
pub fn quartic_surrogate(depth: f64, omega: f64) -> OneModePotential {
    let alpha = omega / (2.0 * depth).sqrt();
    OneModePotential::Polynomial {
        coefficients: vec![
            0.0,
            depth * alpha.powi(2),
            -depth * alpha.powi(3),
            7.0 / 12.0 * depth * alpha.powi(4),
        ],
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse model text; `path` is only used in error messages.
pub fn parse_model_str(text: &str, path: &Path) -> Result<ModelDocument> {
    if text.trim().is_empty() {
        return Err(parse_err(path, "<document>", "file is empty"));
    }
    let raw: ModelFile = serde_json::from_str(text).map_err(|e| {
        parse_err(path, &format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })?;

    let n = raw.initial.frequencies.len();
    let wi = frequencies(path, "initial.units", &raw.initial.units, &raw.initial.frequencies)?;
    let wf = frequencies(path, "final.units", &raw.final_block.units, &raw.final_block.frequencies)?;
    if wf.len() != n {
        return Err(parse_err(
            path,
            "final.frequencies",
            format!("{} entries, initial block has {n}", wf.len()),
        ));
    }

    let potentials = match &raw.final_block.potentials {
        None => wf.iter().map(|&omega| OneModePotential::Harmonic { omega }).collect(),
        Some(list) => {
            if list.len() != n {
                return Err(parse_err(path, "final.potentials", format!("{} entries for {n} modes", list.len())));
            }
            let mut out = Vec::with_capacity(n);
            for (mode, (spec, &omega)) in list.iter().zip(&wf).enumerate() {
                let field = format!("final.potentials[{mode}]");
                out.push(match spec {
                    PotentialSpec::Harmonic => OneModePotential::Harmonic { omega },
                    PotentialSpec::Morse { depth, alpha } => {
                        let d = energy(path, &field, depth)?;
                        match alpha {
                            Some(alpha) => OneModePotential::Morse { depth: d, alpha: *alpha },
                            None => OneModePotential::morse_from_frequency(d, omega),
                        }
                    }
                    PotentialSpec::Polynomial { coefficients } => OneModePotential::Polynomial {
                        coefficients: coefficients.clone(),
                    },
                    PotentialSpec::Quartic { depth } => quartic_surrogate(energy(path, &field, depth)?, omega),
                });
            }
            out
        }
    };

    let d = &raw.duschinsky;
    let rotation = match (&d.matrix, &d.rotations) {
        (Some(_), Some(_)) => {
            return Err(parse_err(path, "duschinsky", "give either 'matrix' or 'rotations', not both"));
        }
        (Some(rows), None) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(parse_err(path, "duschinsky.matrix", format!("expected {n}x{n}")));
            }
            DMatrix::from_fn(n, n, |r, c| rows[r][c])
        }
        (None, Some(list)) => {
            let mut planes = Vec::with_capacity(list.len());
            for (k, r) in list.iter().enumerate() {
                let angle = match r.angle_units.as_deref() {
                    None | Some("rad") => r.angle,
                    Some("deg") => r.angle.to_radians(),
                    Some(other) => {
                        return Err(parse_err(path, &format!("duschinsky.rotations[{k}]"), format!("unknown angle unit '{other}'")));
                    }
                };
                planes.push(PlaneRotation::new(r.modes[0], r.modes[1], angle));
            }
            make_rotation(n, &planes)?
        }
        (None, None) => DMatrix::identity(n, n),
    };
    if d.shift.values.len() != n {
        return Err(parse_err(path, "duschinsky.shift", format!("{} entries for {n} modes", d.shift.values.len())));
    }
    let shift_values: Vec<f64> = match d.shift.units.as_str() {
        "au" => d.shift.values.clone(),
        // x = √ω q along the coordinates the shift lives in
        "dimensionless" => {
            let w = match d.convention {
                Convention::FinalFromInitial => &wf,
                Convention::InitialFromFinal => &wi,
            };
            d.shift.values.iter().zip(w).map(|(x, w)| x / w.sqrt()).collect()
        }
        other => return Err(parse_err(path, "duschinsky.shift.units", format!("unknown unit '{other}'"))),
    };
    let shift = DVector::from_vec(shift_values);
    let duschinsky = match d.convention {
        Convention::FinalFromInitial => DuschinskyMap::new(rotation, shift),
        Convention::InitialFromFinal => DuschinskyMap::from_inverse(rotation, shift),
    };

    let model = VibronicModel {
        initial: HarmonicPes::new(wi),
        final_potentials: potentials,
        final_frequencies: wf,
        duschinsky,
        adiabatic_gap: energy(path, "adiabatic_gap", &raw.adiabatic_gap)?,
        transition_dipole: raw.transition_dipole.unwrap_or(1.0),
    }
    .validate()?;

    let spectrum_shift_cm1 = match &raw.spectrum_shift {
        Some(q) => hartree_to_cm1(energy(path, "spectrum_shift", q)?),
        None => 0.0,
    };
    Ok(ModelDocument {
        name: raw
            .name
            .unwrap_or_else(|| path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned())),
        notes: raw.notes,
        model,
        direction: raw.direction.unwrap_or_default(),
        default_cutoff: raw.default_cutoff,
        spectrum_shift_cm1,
        sha256: sha256_hex(text.as_bytes()),
    })
}

pub fn load_model_file(path: &Path) -> Result<ModelDocument> {
    let text = fs::read_to_string(path)?;
    parse_model_str(&text, path)
}

pub fn parse_model_file(path: &Path) -> Result<VibronicModel> {
    Ok(load_model_file(path)?.model)
}

/// Replace the Duschinsky rotation by a single rotation by `theta` between
/// the first two modes.
pub fn with_rotation_angle(mut model: VibronicModel, theta: f64) -> Result<VibronicModel> {
    model.duschinsky.rotation = make_rotation(model.n_modes(), &[PlaneRotation::new(0, 1, theta)])?;
    model.validate()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Hqcs,
    OracleSos,
    OracleTcf,
    Both,
}

impl FromStr for RunMode {
    type Err = HqcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hqcs" => Ok(Self::Hqcs),
            "oracle-sos" => Ok(Self::OracleSos),
            "oracle-tcf" => Ok(Self::OracleTcf),
            "both" => Ok(Self::Both),
            other => Err(HqcsError::Config(format!("unknown run mode '{other}'"))),
        }
    }
}

impl RunMode {
    fn runs_hqcs(self) -> bool {
        matches!(self, Self::Hqcs | Self::Both)
    }
    fn runs_sos(self) -> bool {
        matches!(self, Self::OracleSos | Self::Both)
    }
    fn runs_tcf(self) -> bool {
        matches!(self, Self::OracleTcf | Self::Both)
    }
}

/// How each mode's Hamiltonian is built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PathChoice {
    /// Ladder operators when every potential is a polynomial, DVR otherwise.
    #[default]
    Auto,
    Dvr,
    Ladder,
}

impl FromStr for PathChoice {
    type Err = HqcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "dvr" => Ok(Self::Dvr),
            "ladder" => Ok(Self::Ladder),
            other => Err(HqcsError::Config(format!("unknown Hamiltonian path '{other}'"))),
        }
    }
}

impl PathChoice {
    fn resolve(self, potentials: &[OneModePotential]) -> HamiltonianPath {
        match self {
            PathChoice::Dvr => HamiltonianPath::Dvr,
            PathChoice::Ladder => HamiltonianPath::Ladder,
            PathChoice::Auto => {
                if potentials.iter().all(|p| !matches!(p, OneModePotential::Morse { .. })) {
                    HamiltonianPath::Ladder
                } else {
                    HamiltonianPath::Dvr
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: PathBuf,
    /// Per-mode quanta cutoff; `None` takes the model file's default, then 15.
    pub d_max: Option<usize>,
    pub omega_bs: u64,
    pub omega_cs: u64,
    pub bias: f64,
    pub n_basis: usize,
    pub n_states: usize,
    pub sigma: f64,
    pub seed: u64,
    pub weight_mode: WeightMode,
    pub output: PathBuf,
    pub mode: RunMode,
    /// Overrides the model rotation with one angle between modes 0 and 1.
    pub theta: Option<f64>,
    /// Overrides the model file's spectrum shift, cm⁻¹.
    pub shift_cm1: Option<f64>,
    pub direction: Option<Direction>,
    pub sign_source: SignSource,
    pub scope: SumScope,
    pub renormalize: bool,
    pub path: PathChoice,
    pub grid_points: usize,
    pub normalize: bool,
    pub tcf_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::new(),
            d_max: None,
            omega_bs: DEFAULT_SAMPLES,
            omega_cs: DEFAULT_SAMPLES,
            bias: 1.0,
            n_basis: DEFAULT_N_BASIS,
            n_states: DEFAULT_N_STATES,
            sigma: DEFAULT_SIGMA,
            seed: DEFAULT_SEED,
            weight_mode: WeightMode::default(),
            output: PathBuf::from("hqcs-out"),
            mode: RunMode::default(),
            theta: None,
            shift_cm1: None,
            direction: None,
            sign_source: SignSource::default(),
            scope: SumScope::default(),
            renormalize: true,
            path: PathChoice::default(),
            grid_points: DEFAULT_GRID_POINTS,
            normalize: true,
            tcf_step: DEFAULT_TCF_STEP,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d-max", self.d_max.unwrap_or(1) as u64),
            ("omega-bs", self.omega_bs),
            ("omega-cs", self.omega_cs),
            ("n-basis", self.n_basis as u64),
            ("n-states", self.n_states as u64),
            ("grid-points", self.grid_points as u64),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(HqcsError::Config(format!("{name} must be positive")));
            }
        }
        if self.grid_points < 2 {
            return Err(HqcsError::Config("grid-points must be at least 2".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(HqcsError::Config(format!("sigma {} must be positive", self.sigma)));
        }
        if !(self.tcf_step > 0.0) {
            return Err(HqcsError::Config("tcf-step must be positive".into()));
        }
        if self.n_states > self.n_basis {
            return Err(HqcsError::Config(format!(
                "n-states {} exceeds n-basis {}",
                self.n_states, self.n_basis
            )));
        }
        if let Some(c) = self.d_max {
            if c >= self.n_basis {
                return Err(HqcsError::Config(format!("d-max {c} must be below n-basis {}", self.n_basis)));
            }
        }
        CsConfig {
            loops: self.omega_cs,
            bias: self.bias,
            seed: self.seed,
            weight_mode: self.weight_mode,
        }
        .validate()
    }

    fn assembly(&self) -> AssemblyOptions {
        AssemblyOptions {
            sign_source: self.sign_source,
            scope: self.scope,
            renormalize: self.renormalize,
        }
    }
}

/// Everything the HQCS stages produce for one model.
#[derive(Clone, Debug)]
pub struct HqcsRun {
    pub cutoff: usize,
    pub intermediate_frequencies: Vec<f64>,
    pub params: DoktorovParams,
    pub table: AmplitudeTable,
    pub configs: ConfigTable,
    pub solutions: Vec<ModeSolution>,
    pub pairs: PairSet,
    pub lines: Vec<SpectralLine>,
    pub norm_deficit: f64,
    pub completeness: f64,
    pub inapplicable_sign_mass: f64,
    pub timings: Vec<(&'static str, f64)>,
    pub warnings: Vec<String>,
}

fn timed<T>(timings: &mut Vec<(&'static str, f64)>, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.push((name, start.elapsed().as_secs_f64()));
    Ok(out)
}

/// Intermediate surface, Doktorov parameters, Fock amplitudes and samples,
/// per-mode solves, pair sampling and the line list.
pub fn run_hqcs(model: &VibronicModel, cutoff: usize, direction: Direction, cfg: &RunConfig) -> Result<HqcsRun> {
    cfg.validate()?;
    if cutoff == 0 || cutoff >= cfg.n_basis {
        return Err(HqcsError::Config(format!(
            "cutoff {cutoff} must be in 1..{}",
            cfg.n_basis
        )));
    }
    let mut timings = Vec::new();
    let mut warnings = Vec::new();
    let n = model.n_modes();
    // memory guard before any allocation
    let basis = FockBasis::new(n, cutoff)?;

    let wm = intermediate_pes(model).frequencies;
    let wi = &model.initial.frequencies;
    for (mode, (a, b)) in wi.iter().zip(&wm).enumerate() {
        if b < a {
            warnings.push(format!("mode {mode}: intermediate frequency below initial"));
        }
    }
    let params = timed(&mut timings, "doktorov", || {
        decompose(&build_dimensionless(wi, &wm, &model.duschinsky.rotation, &model.duschinsky.shift))
    })?;
    let table = timed(&mut timings, "focksim_amplitudes", || doktorov_state(&params, basis))?;
    let deficit = norm_deficit(&table);
    if deficit > 1e-2 {
        warnings.push(format!("Fock cutoff {cutoff} leaves norm deficit {deficit:.3e}"));
    }
    let configs = timed(&mut timings, "focksim_sample", || sample(&table, cfg.omega_bs, cfg.seed))?;

    let path = cfg.path.resolve(&model.final_potentials);
    let solutions = timed(&mut timings, "anharmonic", || {
        solve_modes(&model.final_potentials, &wm, cfg.n_basis, cfg.n_states, path)
    })?;
    for (mode, s) in solutions.iter().enumerate() {
        if let Some(w) = &s.window_warning {
            warnings.push(format!("mode {mode}: {w}"));
        }
    }

    let cs = CsConfig {
        loops: cfg.omega_cs,
        bias: cfg.bias,
        seed: cfg.seed,
        weight_mode: cfg.weight_mode,
    };
    let pairs = timed(&mut timings, "sampling", || sample_pairs(&configs, &table, &solutions, &cs))?;
    let shift: Vec<f64> = model.duschinsky.shift.iter().copied().collect();
    let opts = cfg.assembly();
    let lines = timed(&mut timings, "spectrum_lines", || {
        line_list(&pairs, &table, &shift, &solutions, model, &opts, direction)
    })?;
    let total: f64 = lines.iter().map(|l| l.strength).sum::<f64>() / model.transition_dipole.powi(2);
    let comp = completeness(&pairs, &table, &shift, &solutions, &opts);
    debug_assert!((total - comp).abs() <= 1e-9 * comp.max(1.0));
    let inapplicable = inapplicable_mass(&table, &shift, wi, &wm);
    if inapplicable > 1e-3 {
        warnings.push(format!("sign rule lacks analytic backing on probability mass {inapplicable:.3e}"));
    }

    Ok(HqcsRun {
        cutoff,
        intermediate_frequencies: wm,
        params,
        table,
        configs,
        solutions,
        pairs,
        lines,
        norm_deficit: deficit,
        completeness: comp,
        inapplicable_sign_mass: inapplicable,
        timings,
        warnings,
    })
}

/// Energy range of the lines carrying non-negligible strength.
pub fn significant_lines(lines: &[SpectralLine], relative: f64) -> Vec<SpectralLine> {
    let top = lines.iter().map(|l| l.strength).fold(0.0, f64::max);
    lines.iter().copied().filter(|l| l.strength >= relative * top).collect()
}

/// Files and in-memory results of one run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub hqcs: Option<HqcsRun>,
    pub spectrum: Option<SpectrumGrid>,
    pub sos: Option<SpectrumGrid>,
    pub tcf: Option<SpectrumGrid>,
    pub metadata: serde_json::Value,
    pub files: Vec<PathBuf>,
}

fn write_grid(dir: &Path, name: &str, grid: &SpectrumGrid, cfg: &RunConfig, shift: f64, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    grid.write_csv(&mut buf, cfg.normalize, shift)?;
    fs::write(&path, buf)?;
    files.push(path);
    Ok(())
}

/// Run the configured stages and write the spectrum CSV(s), the pair-set
/// dump and `metadata.json` into the output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let doc = load_model_file(&cfg.model)?;
    let model = match cfg.theta {
        Some(theta) => with_rotation_angle(doc.model.clone(), theta)?,
        None => doc.model.clone(),
    };
    let direction = cfg.direction.unwrap_or(doc.direction);
    let cutoff = cfg.d_max.or(doc.default_cutoff).unwrap_or(DEFAULT_CUTOFF);
    let shift_cm1 = cfg.shift_cm1.unwrap_or(doc.spectrum_shift_cm1);
    fs::create_dir_all(&cfg.output)?;
    let mut files = Vec::new();
    let mut oracle_timings: Vec<(&'static str, f64)> = Vec::new();

    let hqcs = if cfg.mode.runs_hqcs() {
        Some(run_hqcs(&model, cutoff, direction, cfg)?)
    } else {
        None
    };

    let sos_lines = if cfg.mode.runs_sos() || cfg.mode.runs_tcf() {
        let lines = timed(&mut oracle_timings, "oracle_sos", || exact_spectrum_sos(&model, &SosOptions::default()))?;
        Some(match direction {
            Direction::Emission => lines,
            Direction::Absorption => {
                // E_f - E_i0 = -(E_i0 - E_f)
                lines
                    .into_iter()
                    .map(|l| SpectralLine {
                        energy: -l.energy,
                        strength: l.strength,
                    })
                    .collect()
            }
        })
    } else {
        None
    };

    let axis_lines = match (&hqcs, &sos_lines) {
        (Some(run), _) => significant_lines(&run.lines, 1e-8),
        (None, Some(lines)) => significant_lines(lines, 1e-8),
        (None, None) => Vec::new(),
    };
    let axis = GridSpec {
        points: cfg.grid_points,
        ..Default::default()
    }
    .axis(&axis_lines, cfg.sigma);

    let spectrum = hqcs.as_ref().map(|run| SpectrumGrid {
        intensities: broaden_on(&run.lines, cfg.sigma, &axis),
        energies: axis.clone(),
        sigma: cfg.sigma,
    });
    let sos = match (cfg.mode.runs_sos(), &sos_lines) {
        (true, Some(lines)) => Some(SpectrumGrid {
            intensities: broaden_on(lines, cfg.sigma, &axis),
            energies: axis.clone(),
            sigma: cfg.sigma,
        }),
        _ => None,
    };
    let tcf = if cfg.mode.runs_tcf() {
        let opts = TcfOptions {
            step: cfg.tcf_step,
            ..TcfOptions::for_sigma(cfg.sigma)
        };
        let grid = timed(&mut oracle_timings, "oracle_tcf", || {
            let axis_emission: Vec<f64> = match direction {
                Direction::Emission => axis.clone(),
                Direction::Absorption => axis.iter().map(|e| -e).collect(),
            };
            let mut g = tcf_spectrum(&model, &opts, &axis_emission)?;
            g.energies = axis.clone();
            Ok(g)
        })?;
        Some(grid)
    } else {
        None
    };

    if let Some(g) = &spectrum {
        write_grid(&cfg.output, "spectrum.csv", g, cfg, shift_cm1, &mut files)?;
    }
    if let Some(g) = &sos {
        write_grid(&cfg.output, "spectrum_sos.csv", g, cfg, shift_cm1, &mut files)?;
    }
    if let Some(g) = &tcf {
        write_grid(&cfg.output, "spectrum_tcf.csv", g, cfg, shift_cm1, &mut files)?;
    }
    if let Some(run) = &hqcs {
        let pairs_path = cfg.output.join("pairs.tsv");
        fs::write(&pairs_path, run.pairs.to_text())?;
        files.push(pairs_path);
        let lines_path = cfg.output.join("lines.csv");
        let mut text = String::from("energy_cm1,strength\n");
        for l in &run.lines {
            text.push_str(&format!("{:.6},{:.12e}\n", hartree_to_cm1(l.energy) + shift_cm1, l.strength));
        }
        fs::write(&lines_path, text)?;
        files.push(lines_path);
    }

    let peaks = |g: &Option<SpectrumGrid>| -> serde_json::Value {
        g.as_ref().map_or(serde_json::Value::Null, |g| {
            let top = g.max_intensity();
            g.peaks(0.1)
                .iter()
                .map(|(e, y)| json!({"energy_cm1": hartree_to_cm1(*e) + shift_cm1, "relative_intensity": y / top}))
                .collect()
        })
    };
    let mut stage_times = serde_json::Map::new();
    if let Some(run) = &hqcs {
        for (name, t) in &run.timings {
            stage_times.insert((*name).into(), json!(t));
        }
    }
    for (name, t) in &oracle_timings {
        stage_times.insert((*name).into(), json!(t));
    }
    stage_times.insert("total".into(), json!(start.elapsed().as_secs_f64()));

    let hqcs_meta = hqcs.as_ref().map_or(serde_json::Value::Null, |run| {
        json!({
            "intermediate_frequencies_cm1": run.intermediate_frequencies.iter().map(|w| hartree_to_cm1(*w)).collect::<Vec<_>>(),
            "squeezing": run.params.squeezing(),
            "displacement": run.params.displacement(),
            "norm_deficit": run.norm_deficit,
            "completeness": run.completeness,
            "m_m": run.pairs.m_m(),
            "m_f": run.pairs.m_f(),
            "m_pair": run.pairs.m_pair(),
            "support_size": run.pairs.support.len(),
            "inapplicable_sign_mass": run.inapplicable_sign_mass,
            "n_lines": run.lines.len(),
        })
    });
    let warnings: Vec<String> = hqcs.as_ref().map_or(Vec::new(), |r| r.warnings.clone());
    let metadata = json!({
        "model": {
            "name": doc.name,
            "path": cfg.model.display().to_string(),
            "sha256": doc.sha256,
            "n_modes": model.n_modes(),
            "theta": cfg.theta,
        },
        "mode": cfg.mode,
        "direction": direction,
        "seeds": {"boson_sampling": cfg.seed, "classical_sampling": cfg.seed},
        "cutoffs": {"d_max": cutoff, "n_basis": cfg.n_basis, "n_states": cfg.n_states},
        "sampling": {
            "omega_bs": cfg.omega_bs,
            "omega_cs": cfg.omega_cs,
            "bias": cfg.bias,
            "weight_mode": cfg.weight_mode,
            "sign_source": cfg.sign_source,
            "scope": cfg.scope,
            "renormalize": cfg.renormalize,
        },
        "sigma": cfg.sigma,
        "spectrum_shift_cm1": shift_cm1,
        "hqcs": hqcs_meta,
        "peaks": {"hqcs": peaks(&spectrum), "sos": peaks(&sos), "tcf": peaks(&tcf)},
        "stage_seconds": stage_times,
        "warnings": warnings,
    });
    let meta_path = cfg.output.join("metadata.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&metadata).expect("json value") + "\n")?;
    files.push(meta_path);

    Ok(RunReport {
        hqcs,
        spectrum,
        sos,
        tcf,
        metadata,
        files,
    })
}

/// Directory holding the bundled example models.
pub fn bundled_data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}
