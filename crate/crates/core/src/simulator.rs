//! Seeded generation of the benchmark assets: a cardinal cubic B-spline
//! signal space, a smooth power-law background family, planted sparse
//! spectra, and per-sample Gaussian perturbations.
//!
//! Everything is a pure function of (configuration, seeds); the same
//! configuration always produces bitwise-identical instances.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::function_space::{Grid, SampledFunction, SpanningSet};

/// Interpretation of "noise of p% of each data point".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// Per-sample standard deviation `(p/100)·|f(x_j)|`.
    #[default]
    RelativeStd,
    /// Per-sample variance `(p/100)·|f(x_j)|` (the literal reading; its units
    /// are inconsistent, kept for sensitivity studies).
    RelativeVar,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::RelativeStd => "relative_std",
            NoiseMode::RelativeVar => "relative_var",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relative_std" => Some(NoiseMode::RelativeStd),
            "relative_var" => Some(NoiseMode::RelativeVar),
            _ => None,
        }
    }
}

/// Scaling applied to the synthetic background before mixing it with the
/// signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackgroundMode {
    /// Scale the summed background to unit maximum on the interval, putting
    /// it on the same footing as the order-one signal.
    #[default]
    UnitMax,
    /// Use the weighted sum as-is. The weights grow like `j⁴e^(-0.05j)`, so
    /// the raw background dwarfs the signal by ~7 orders of magnitude; only
    /// useful for sensitivity studies.
    Raw,
}

impl BackgroundMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundMode::UnitMax => "unit_max",
            BackgroundMode::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unit_max" => Some(BackgroundMode::UnitMax),
            "raw" => Some(BackgroundMode::Raw),
            _ => None,
        }
    }
}

/// How the data-fidelity stopping threshold δ is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaPolicy {
    /// `δ = n_points · (p/100)² · mean(f_obs²) · safety`, the expected noise
    /// energy of the observed samples.
    Auto { safety: f64 },
    /// Explicit δ.
    Fixed(f64),
}

impl Default for DeltaPolicy {
    fn default() -> Self {
        DeltaPolicy::Auto { safety: 1.0 }
    }
}

/// Full description of a benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid_a: f64,
    pub grid_b: f64,
    pub n_points: usize,
    /// Distance between consecutive spline knots.
    pub knot_spacing: f64,
    /// Number of background family members J.
    pub background_count: usize,
    /// Planted support size K.
    pub support_size: usize,
    pub coeff_min: f64,
    pub coeff_max: f64,
    pub noise_percent: f64,
    pub noise_mode: NoiseMode,
    pub background_mode: BackgroundMode,
    pub support_seed: u64,
    pub coeff_seed: u64,
    pub noise_seed: u64,
    /// Sparsity exponent for the nonlinear route, in (0, 1].
    pub q: f64,
    pub delta: DeltaPolicy,
    /// Rank tolerance for the linear-route projector (0 keeps everything).
    pub rank_tol: f64,
    /// Rank tolerance for orthonormalizing the background family.
    pub wperp_rel_tol: f64,
    /// Cap on selected constraints; `None` means the model dimension M.
    pub max_constraints: Option<usize>,
    /// Use unit-norm model kets (the raw splines keep partition of unity).
    pub normalize_basis: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid_a: 0.0,
            grid_b: 1.0,
            n_points: 1001,
            knot_spacing: 0.01,
            background_count: 50,
            support_size: 30,
            coeff_min: 0.0,
            coeff_max: 1.0,
            noise_percent: 1e-5,
            noise_mode: NoiseMode::default(),
            background_mode: BackgroundMode::default(),
            support_seed: 42,
            coeff_seed: 43,
            noise_seed: 44,
            q: 0.8,
            delta: DeltaPolicy::default(),
            rank_tol: 0.0,
            wperp_rel_tol: 1e-12,
            max_constraints: None,
            normalize_basis: true,
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::uniform(self.grid_a, self.grid_b, self.n_points)
    }

    /// Model dimension M implied by the interval and knot spacing.
    pub fn spline_count(&self) -> Result<usize> {
        Ok(knot_intervals(self.grid_a, self.grid_b, self.knot_spacing)? + 3)
    }

    /// Offsets all three seeds; used for repeated-realization sweeps.
    pub fn with_seed_offset(&self, offset: u64) -> Self {
        ExperimentConfig {
            support_seed: self.support_seed + offset,
            coeff_seed: self.coeff_seed + offset,
            noise_seed: self.noise_seed + offset,
            ..self.clone()
        }
    }

    /// Serializes to the flat `key = value` configuration format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid_a = {:.16e}", self.grid_a);
        let _ = writeln!(s, "grid_b = {:.16e}", self.grid_b);
        let _ = writeln!(s, "n_points = {}", self.n_points);
        let _ = writeln!(s, "knot_spacing = {:.16e}", self.knot_spacing);
        let _ = writeln!(s, "background_count = {}", self.background_count);
        let _ = writeln!(s, "support_size = {}", self.support_size);
        let _ = writeln!(s, "coeff_min = {:.16e}", self.coeff_min);
        let _ = writeln!(s, "coeff_max = {:.16e}", self.coeff_max);
        let _ = writeln!(s, "noise_percent = {:.16e}", self.noise_percent);
        let _ = writeln!(s, "noise_mode = {}", self.noise_mode.as_str());
        let _ = writeln!(s, "background_mode = {}", self.background_mode.as_str());
        let _ = writeln!(s, "support_seed = {}", self.support_seed);
        let _ = writeln!(s, "coeff_seed = {}", self.coeff_seed);
        let _ = writeln!(s, "noise_seed = {}", self.noise_seed);
        let _ = writeln!(s, "q = {:.16e}", self.q);
        match self.delta {
            DeltaPolicy::Auto { safety } => {
                let _ = writeln!(s, "delta = auto");
                let _ = writeln!(s, "delta_safety = {safety:.16e}");
            }
            DeltaPolicy::Fixed(d) => {
                let _ = writeln!(s, "delta = {d:.16e}");
            }
        }
        let _ = writeln!(s, "rank_tol = {:.16e}", self.rank_tol);
        let _ = writeln!(s, "wperp_rel_tol = {:.16e}", self.wperp_rel_tol);
        match self.max_constraints {
            Some(m) => {
                let _ = writeln!(s, "max_constraints = {m}");
            }
            None => {
                let _ = writeln!(s, "max_constraints = auto");
            }
        }
        let _ = writeln!(s, "normalize_basis = {}", self.normalize_basis);
        s
    }

    /// Parses the flat `key = value` configuration format. Unknown keys are
    /// rejected with a line diagnostic; missing keys keep their defaults.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut delta_safety = 1.0;
        let mut delta_auto = true;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, lineno, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let bad =
                |msg: String| -> Error { Error::parse(origin, lineno, msg) };
            let parse_f64 = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|e| bad(format!("invalid number `{v}`: {e}")))
            };
            let parse_usize = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|e| bad(format!("invalid integer `{v}`: {e}")))
            };
            let parse_u64 = |v: &str| -> Result<u64> {
                v.parse::<u64>()
                    .map_err(|e| bad(format!("invalid integer `{v}`: {e}")))
            };
            match key {
                "grid_a" => cfg.grid_a = parse_f64(value)?,
                "grid_b" => cfg.grid_b = parse_f64(value)?,
                "n_points" => cfg.n_points = parse_usize(value)?,
                "knot_spacing" => cfg.knot_spacing = parse_f64(value)?,
                "background_count" => cfg.background_count = parse_usize(value)?,
                "support_size" => cfg.support_size = parse_usize(value)?,
                "coeff_min" => cfg.coeff_min = parse_f64(value)?,
                "coeff_max" => cfg.coeff_max = parse_f64(value)?,
                "noise_percent" => cfg.noise_percent = parse_f64(value)?,
                "noise_mode" => {
                    cfg.noise_mode = NoiseMode::parse(value)
                        .ok_or_else(|| bad(format!("unknown noise_mode `{value}`")))?;
                }
                "background_mode" => {
                    cfg.background_mode = BackgroundMode::parse(value)
                        .ok_or_else(|| bad(format!("unknown background_mode `{value}`")))?;
                }
                "support_seed" => cfg.support_seed = parse_u64(value)?,
                "coeff_seed" => cfg.coeff_seed = parse_u64(value)?,
                "noise_seed" => cfg.noise_seed = parse_u64(value)?,
                "q" => cfg.q = parse_f64(value)?,
                "delta" => {
                    if value == "auto" {
                        delta_auto = true;
                    } else {
                        delta_auto = false;
                        cfg.delta = DeltaPolicy::Fixed(parse_f64(value)?);
                    }
                }
                "delta_safety" => delta_safety = parse_f64(value)?,
                "rank_tol" => cfg.rank_tol = parse_f64(value)?,
                "wperp_rel_tol" => cfg.wperp_rel_tol = parse_f64(value)?,
                "max_constraints" => {
                    cfg.max_constraints = if value == "auto" {
                        None
                    } else {
                        Some(parse_usize(value)?)
                    };
                }
                "normalize_basis" => {
                    cfg.normalize_basis = value
                        .parse::<bool>()
                        .map_err(|_| bad(format!("invalid boolean `{value}`")))?;
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if delta_auto {
            cfg.delta = DeltaPolicy::Auto {
                safety: delta_safety,
            };
        }
        Ok(cfg)
    }
}

fn knot_intervals(a: f64, b: f64, spacing: f64) -> Result<usize> {
    if spacing <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "knot spacing must be positive, got {spacing}"
        )));
    }
    let ratio = (b - a) / spacing;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-12 * rounded.max(1.0) || rounded < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "knot spacing {spacing} does not divide the interval [{a}, {b}]"
        )));
    }
    Ok(rounded as usize)
}

/// Evaluates the Cox-de Boor recursion for the degree-`p` basis function
/// anchored at knot index `i` of the uniform extended sequence.
fn cox_de_boor(knots: &[f64], i: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        return if knots[i] <= x && x < knots[i + 1] {
            1.0
        } else {
            0.0
        };
    }
    let left_den = knots[i + p] - knots[i];
    let right_den = knots[i + p + 1] - knots[i + 1];
    let left = (x - knots[i]) / left_den * cox_de_boor(knots, i, p - 1, x);
    let right = (knots[i + p + 1] - x) / right_den * cox_de_boor(knots, i + 1, p - 1, x);
    left + right
}

/// Cubic B-spline basis on uniform knots spaced `spacing`, restricted to the
/// grid interval. All translates whose support meets the interval are kept,
/// so the partition of unity `Σ_i B_i(x) = 1` holds on the whole interval.
/// For `[0, 1]` with spacing 0.01 this yields 103 functions.
pub fn bspline_basis(grid: &Arc<Grid>, spacing: f64) -> Result<SpanningSet> {
    let a = grid.a();
    let intervals = knot_intervals(a, grid.b(), spacing)?;
    let count = intervals + 3;
    // Extended uniform knots from a-3Δ to b+3Δ; the recursion then needs no
    // boundary special cases anywhere on [a, b].
    let knots: Vec<f64> = (0..=intervals + 6)
        .map(|j| a + (j as f64 - 3.0) * spacing)
        .collect();
    let functions = (0..count)
        .map(|i| {
            SampledFunction::from_fn(grid, |x| cox_de_boor(&knots, i, 3, x))
        })
        .collect::<Result<Vec<_>>>()?;
    SpanningSet::new("bspline", functions)
}

/// Background family `y_j(x) = (x + 0.01 j)^(-0.01 j)`, `j = 1..=count`.
pub fn background_family(grid: &Arc<Grid>, count: usize) -> Result<SpanningSet> {
    if count < 1 {
        return Err(Error::InvalidArgument(
            "background family needs at least one member".into(),
        ));
    }
    let functions = (1..=count)
        .map(|j| {
            let shift = 0.01 * j as f64;
            SampledFunction::from_fn(grid, |x| (x + shift).powf(-shift))
        })
        .collect::<Result<Vec<_>>>()?;
    SpanningSet::new("background_family", functions)
}

/// Weight of the `j`-th background component, `j⁴ e^(-0.05 j)`.
pub fn background_weight(j: usize) -> f64 {
    let jf = j as f64;
    jf.powi(4) * (-0.05 * jf).exp()
}

/// Weighted background `g = Σ_j j⁴ e^(-0.05 j) y_j`, scaled per `mode`.
pub fn make_background(family: &SpanningSet, mode: BackgroundMode) -> Result<SampledFunction> {
    let weights: Vec<f64> = (1..=family.len()).map(background_weight).collect();
    let g = family.combine(&weights)?;
    Ok(match mode {
        BackgroundMode::Raw => g,
        BackgroundMode::UnitMax => {
            let max = g.values().iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs()));
            if max > 0.0 {
                g.scale(1.0 / max)
            } else {
                g
            }
        }
    })
}

/// Draws `k` distinct basis indices (1-based, ascending) and their
/// coefficients, and assembles the planted signal `f_V = Σ c_ℓ B_ℓ`.
pub fn plant_spectrum(
    basis: &SpanningSet,
    k: usize,
    coeff_range: (f64, f64),
    support_seed: u64,
    coeff_seed: u64,
) -> Result<(Vec<usize>, Vec<f64>, SampledFunction)> {
    let m = basis.len();
    if k > m {
        return Err(Error::InvalidArgument(format!(
            "support size {k} exceeds basis dimension {m}"
        )));
    }
    if coeff_range.0 > coeff_range.1 {
        return Err(Error::InvalidArgument(format!(
            "empty coefficient range [{}, {}]",
            coeff_range.0, coeff_range.1
        )));
    }
    let mut support_rng = ChaCha8Rng::seed_from_u64(support_seed);
    let mut support: Vec<usize> = rand::seq::index::sample(&mut support_rng, m, k)
        .iter()
        .map(|i| i + 1)
        .collect();
    support.sort_unstable();

    let mut coeff_rng = ChaCha8Rng::seed_from_u64(coeff_seed);
    let width = coeff_range.1 - coeff_range.0;
    let coeffs: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rand::Rng::random(&mut coeff_rng);
            coeff_range.0 + width * u
        })
        .collect();

    let mut full = vec![0.0; m];
    for (&idx, &c) in support.iter().zip(&coeffs) {
        full[idx - 1] = c;
    }
    let f_v = basis.combine(&full)?;
    Ok((support, coeffs, f_v))
}

/// Adds per-sample independent Gaussian noise scaled to each data point.
///
/// Returns the perturbed function and the realized noise vector, stored as
/// the exact sample-wise difference so that `noisy - f == noise` bitwise.
pub fn add_noise(
    f: &SampledFunction,
    percent: f64,
    mode: NoiseMode,
    noise_seed: u64,
) -> Result<(SampledFunction, Vec<f64>)> {
    if percent < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise percent must be nonnegative, got {percent}"
        )));
    }
    if percent == 0.0 {
        return Ok((f.clone(), vec![0.0; f.len()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let fraction = percent / 100.0;
    let mut noisy = Vec::with_capacity(f.len());
    let mut noise = Vec::with_capacity(f.len());
    for &v in f.values() {
        let std = match mode {
            NoiseMode::RelativeStd => fraction * v.abs(),
            NoiseMode::RelativeVar => (fraction * v.abs()).sqrt(),
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        let perturbed = v + std * z;
        noise.push(perturbed - v);
        noisy.push(perturbed);
    }
    let noisy = SampledFunction::new(Arc::clone(f.grid()), noisy)?;
    Ok((noisy, noise))
}

/// A fully materialized benchmark instance.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub config: ExperimentConfig,
    /// 1-based planted support indices, ascending.
    pub true_support: Vec<usize>,
    pub true_coeffs: Vec<f64>,
    pub f_v: SampledFunction,
    pub background: SampledFunction,
    pub f_clean: SampledFunction,
    pub f_obs: SampledFunction,
    pub noise: Vec<f64>,
}

/// Generates the instance described by `config`.
pub fn generate_instance(config: &ExperimentConfig) -> Result<PlantedInstance> {
    let grid = config.grid()?;
    let basis = bspline_basis(&grid, config.knot_spacing)?;
    let family = background_family(&grid, config.background_count)?;
    let background = make_background(&family, config.background_mode)?;
    let (true_support, true_coeffs, f_v) = plant_spectrum(
        &basis,
        config.support_size,
        (config.coeff_min, config.coeff_max),
        config.support_seed,
        config.coeff_seed,
    )?;
    let f_clean = f_v.axpy(1.0, &background)?;
    let (f_obs, noise) = add_noise(
        &f_clean,
        config.noise_percent,
        config.noise_mode,
        config.noise_seed,
    )?;
    Ok(PlantedInstance {
        config: config.clone(),
        true_support,
        true_coeffs,
        f_v,
        background,
        f_clean,
        f_obs,
        noise,
    })
}

const BUNDLE_FILES: [&str; 7] = [
    "config",
    "f_obs.csv",
    "f_clean.csv",
    "f_V.csv",
    "g.csv",
    "support.csv",
    "noise.csv",
];

impl PlantedInstance {
    /// Writes the on-disk bundle: `config`, `f_obs.csv`, `f_clean.csv`,
    /// `f_V.csv`, `g.csv`, `support.csv`, `noise.csv`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let write = |name: &str, contents: String| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))
        };
        write("config", self.config.to_text())?;
        write("f_obs.csv", self.f_obs.to_csv())?;
        write("f_clean.csv", self.f_clean.to_csv())?;
        write("f_V.csv", self.f_v.to_csv())?;
        write("g.csv", self.background.to_csv())?;
        let mut support = String::from("i,c_i\n");
        for (idx, c) in self.true_support.iter().zip(&self.true_coeffs) {
            let _ = writeln!(support, "{idx},{c:.16e}");
        }
        write("support.csv", support)?;
        let noise_fn = SampledFunction::new(Arc::clone(self.f_obs.grid()), self.noise.clone())?;
        write("noise.csv", noise_fn.to_csv())?;
        Ok(())
    }

    /// Reads a bundle written by [`PlantedInstance::write_bundle`].
    pub fn read_bundle(dir: &Path) -> Result<PlantedInstance> {
        for name in BUNDLE_FILES {
            if !dir.join(name).exists() {
                return Err(Error::InvalidArgument(format!(
                    "instance bundle {} is missing `{name}`",
                    dir.display()
                )));
            }
        }
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))
        };
        let config = ExperimentConfig::from_text(&read("config")?, "config")?;
        let f_obs = SampledFunction::from_csv(&read("f_obs.csv")?, "f_obs.csv")?;
        let f_clean = SampledFunction::from_csv(&read("f_clean.csv")?, "f_clean.csv")?;
        let f_v = SampledFunction::from_csv(&read("f_V.csv")?, "f_V.csv")?;
        let background = SampledFunction::from_csv(&read("g.csv")?, "g.csv")?;
        let noise = SampledFunction::from_csv(&read("noise.csv")?, "noise.csv")?;

        let mut true_support = Vec::new();
        let mut true_coeffs = Vec::new();
        for (idx, line) in read("support.csv")?.lines().enumerate() {
            if idx == 0 {
                if line.trim() != "i,c_i" {
                    return Err(Error::parse("support.csv", 1, "expected header `i,c_i`"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (i_str, c_str) = line
                .split_once(',')
                .ok_or_else(|| Error::parse("support.csv", idx + 1, "expected `i,c_i`"))?;
            true_support.push(
                i_str
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::parse("support.csv", idx + 1, e.to_string()))?,
            );
            true_coeffs.push(
                c_str
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse("support.csv", idx + 1, e.to_string()))?,
            );
        }
        Ok(PlantedInstance {
            config,
            true_support,
            true_coeffs,
            f_v,
            background,
            f_clean,
            f_obs,
            noise: noise.values().to_vec(),
        })
    }
}
