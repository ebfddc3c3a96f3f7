//! Run configuration: TOML schema, defaults, validation and construction of
//! the microstructure, phase laws and loading program it describes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::IsotropicModuli;
use crate::material::{HardeningCurve, MaterialLaw};
use crate::microstructure::{
    hexagonal_lattice, laminate, load_phase_image, random_fibers, square_lattice, Fiber, FiberShape, FiberSpec,
    PhaseMap,
};
use crate::solver::{LoadingProgram, SolverConfig};
use crate::tensor::{GridSpec, SymTensor};

/// Steps of the default program when some phase is plastic.
pub const DEFAULT_PLASTIC_STEPS: usize = 20;
/// Final axial strain of the default program.
pub const DEFAULT_FINAL_STRAIN: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridConfig,
    pub microstructure: MicrostructureConfig,
    pub phases: Vec<PhaseConfig>,
    #[serde(default)]
    pub loading: LoadingConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
}

/// Pixel counts and cell lengths. Unset values are derived from the
/// generator: square cells by default, `T1 = sqrt(3) T2` and `N2 = N1 / 2`
/// for the hexagonal array, the image size for image input.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum MicrostructureConfig {
    Uniform,
    Square {
        volume_fraction: f64,
    },
    Hexagonal {
        volume_fraction: f64,
    },
    Laminate {
        volume_fraction: f64,
    },
    Random {
        volume_fraction: f64,
        count: usize,
        #[serde(default = "default_shape")]
        shape: ShapeName,
        /// Major to minor axis ratio of elliptical fibers.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aspect_ratio: Option<f64>,
        #[serde(default)]
        penetrable: bool,
        #[serde(default)]
        min_spacing_px: f64,
        #[serde(default)]
        seed: u64,
    },
    Image {
        path: PathBuf,
        /// Gray levels separating consecutive phases.
        thresholds: Vec<u8>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Circle,
    Ellipse,
    Triangle,
}

fn default_shape() -> ShapeName {
    ShapeName::Circle
}

/// Default ellipse aspect ratio.
pub const DEFAULT_ASPECT_RATIO: f64 = 10.0 / 3.0;

/// One phase: a preset and/or explicit moduli (MPa). A phase is plastic when
/// it has a yield stress; `hardening` is a linear modulus, `hardening_table`
/// a CSV of `p, sigma0` rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub young: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yield_stress: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardening: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardening_table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadingConfig {
    /// Uniaxial stress at `angle_deg` from axis 1, up to an axial strain.
    Uniaxial {
        #[serde(default)]
        angle_deg: f64,
        #[serde(default = "default_final_strain")]
        final_strain: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
    /// Mean stress along `direction` (11, 22, 33, 12), up to `E : direction = final_level`.
    StressDirection {
        direction: [f64; 4],
        final_level: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
    /// Macroscopic strain (11, 22, 33, 12) reached in equal increments.
    Strain {
        strain: [f64; 4],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
}

fn default_final_strain() -> f64 {
    DEFAULT_FINAL_STRAIN
}

impl Default for LoadingConfig {
    fn default() -> Self {
        Self::Uniaxial { angle_deg: 0.0, final_strain: DEFAULT_FINAL_STRAIN, steps: None }
    }
}

impl LoadingConfig {
    fn steps(&self) -> Option<usize> {
        match self {
            Self::Uniaxial { steps, .. } | Self::StressDirection { steps, .. } | Self::Strain { steps, .. } => *steps,
        }
    }

    fn steps_mut(&mut self) -> &mut Option<usize> {
        match self {
            Self::Uniaxial { steps, .. } | Self::StressDirection { steps, .. } | Self::Strain { steps, .. } => steps,
        }
    }

    pub fn program(&self) -> Result<LoadingProgram> {
        let steps = self.steps().unwrap_or(1);
        if steps == 0 {
            return Err(Error::Config("loading.steps must be at least 1".into()));
        }
        let program = match *self {
            Self::Uniaxial { angle_deg, final_strain, .. } => {
                LoadingProgram::uniaxial_stress(angle_deg, final_strain, steps)
            }
            Self::StressDirection { direction, final_level, .. } => LoadingProgram::StressDirection {
                direction: SymTensor::from_array(direction),
                levels: (1..=steps).map(|i| final_level * i as f64 / steps as f64).collect(),
            },
            Self::Strain { strain, .. } => LoadingProgram::strain_ramp(SymTensor::from_array(strain), steps),
        };
        program.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(program)
    }

    /// Loading direction of a stress-controlled program.
    pub fn direction(&self) -> Option<SymTensor> {
        match *self {
            Self::Uniaxial { angle_deg, .. } => Some(crate::solver::uniaxial_direction(angle_deg)),
            Self::StressDirection { direction, .. } => Some(SymTensor::from_array(direction)),
            Self::Strain { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormatName {
    #[default]
    Pgm,
    Png,
}

impl ImageFormatName {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Pgm => "pgm",
            Self::Png => "png",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Field maps to write; see [`MAP_NAMES`].
    pub maps: Vec<String>,
    pub format: ImageFormatName,
    /// Fixed `[min, max]` gray scales by map name; other maps are auto-scaled.
    pub scale: BTreeMap<String, [f64; 2]>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            maps: ["phase", "p", "eps_eq", "sigma_eq"].map(String::from).to_vec(),
            format: ImageFormatName::Pgm,
            scale: BTreeMap::new(),
        }
    }
}

/// Names accepted in `output.maps`.
pub const MAP_NAMES: [&str; 12] =
    ["phase", "p", "eps_eq", "sigma_eq", "eps11", "eps22", "eps33", "eps12", "sig11", "sig22", "sig33", "sig12"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub samples: usize,
    /// One seed per sample; defaults to consecutive seeds from the generator seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    1
}

impl EnsembleConfig {
    pub fn seeds(&self, base: u64) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..self.samples as u64).map(|i| base.wrapping_add(i)).collect())
    }
}

/// Moduli of the built-in presets: `(E, nu, yield stress)` in MPa.
pub fn preset(name: &str) -> Result<(f64, f64, Option<f64>)> {
    match name {
        "aluminum" => Ok((68.9e3, 0.35, Some(68.9))),
        "boron" => Ok((400.0e3, 0.23, None)),
        other => Err(Error::Config(format!("unknown phase preset {other:?} (known: aluminum, boron)"))),
    }
}

impl PhaseConfig {
    pub fn preset(name: &str) -> Self {
        Self { preset: Some(name.to_string()), ..Self::default() }
    }

    /// Explicit values filled in from the preset.
    fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if let Some(name) = &self.preset {
            let (e, nu, y) = preset(name)?;
            out.young.get_or_insert(e);
            out.poisson.get_or_insert(nu);
            if out.yield_stress.is_none() {
                out.yield_stress = y;
            }
            if out.yield_stress.is_some() && out.hardening.is_none() && out.hardening_table.is_none() {
                out.hardening = Some(0.0);
            }
        }
        Ok(out)
    }

    pub fn law(&self) -> Result<MaterialLaw> {
        let p = self.resolved()?;
        let (Some(e), Some(nu)) = (p.young, p.poisson) else {
            return Err(Error::Config("phase needs young and poisson (or a preset)".into()));
        };
        let elastic = IsotropicModuli::from_young_poisson(e, nu).map_err(|e| Error::Config(e.to_string()))?;
        let curve = match (p.yield_stress, p.hardening, &p.hardening_table) {
            (None, None, None) => return Ok(MaterialLaw::elastic(elastic)),
            (_, Some(_), Some(_)) => {
                return Err(Error::Config("phase sets both hardening and hardening_table".into()))
            }
            (y, _, Some(path)) => {
                if y.is_some() {
                    return Err(Error::Config("hardening_table already defines the yield stress".into()));
                }
                HardeningCurve::tabulated(read_hardening_table(path)?)
            }
            (Some(y), h, None) => match h.unwrap_or(0.0) {
                h if h == 0.0 => HardeningCurve::perfect(y),
                h => HardeningCurve::linear(y, h),
            },
            (None, Some(_), None) => return Err(Error::Config("hardening needs a yield_stress".into())),
        };
        Ok(MaterialLaw::plastic(elastic, curve.map_err(|e| Error::Config(e.to_string()))?))
    }
}

/// Reads `p, sigma0` rows; a non-numeric first row is taken as a header.
pub fn read_hardening_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read hardening table {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: Option<Vec<f64>> = rec.iter().map(|f| f.parse().ok()).collect();
        match parsed.as_deref() {
            Some([p, s]) => points.push((*p, *s)),
            None if i == 0 => continue,
            _ => {
                return Err(Error::Config(format!(
                    "{} line {}: expected two numbers `p, sigma0`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(points)
}

/// A generated microstructure and, for fiber generators, the fibers.
#[derive(Clone, Debug)]
pub struct Microstructure {
    pub map: PhaseMap,
    pub fibers: Vec<Fiber>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase_paths(base);
        Ok(cfg)
    }

    fn rebase_paths(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MicrostructureConfig::Image { path, .. } = &mut self.microstructure {
            rebase(path);
        }
        for phase in &mut self.phases {
            if let Some(p) = &mut phase.hardening_table {
                rebase(p);
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn is_plastic(&self) -> bool {
        self.phases.iter().any(|p| {
            p.resolved().map(|r| r.yield_stress.is_some() || r.hardening_table.is_some()).unwrap_or(false)
        })
    }

    /// Sets the generator seed, if the generator is random.
    pub fn set_seed(&mut self, value: u64) {
        if let MicrostructureConfig::Random { seed, .. } = &mut self.microstructure {
            *seed = value;
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.microstructure {
            MicrostructureConfig::Random { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Fills every default so that the echoed config reproduces the run.
    pub fn resolved(&self) -> Result<Self> {
        let mut cfg = self.clone();
        let hex = matches!(cfg.microstructure, MicrostructureConfig::Hexagonal { .. });
        if let MicrostructureConfig::Image { path, .. } = &cfg.microstructure {
            let (w, h) = image::image_dimensions(path)
                .map_err(|e| Error::Config(format!("cannot read image {}: {e}", path.display())))?;
            for (set, actual, name) in [(cfg.grid.n1, w as usize, "n1"), (cfg.grid.n2, h as usize, "n2")] {
                if set.is_some_and(|n| n != actual) {
                    return Err(Error::Config(format!("grid.{name} = {} but the image has {actual}", set.unwrap())));
                }
            }
            cfg.grid.n1 = Some(w as usize);
            cfg.grid.n2 = Some(h as usize);
        }
        let g = &mut cfg.grid;
        let n1 = g.n1.ok_or_else(|| Error::Config("grid.n1 is required".into()))?;
        g.n2.get_or_insert(if hex { n1 / 2 } else { n1 });
        let t2 = *g.t2.get_or_insert(1.0);
        g.t1.get_or_insert(if hex { 3f64.sqrt() * t2 } else { 1.0 });

        if let MicrostructureConfig::Random { shape: ShapeName::Ellipse, aspect_ratio, .. } = &mut cfg.microstructure {
            aspect_ratio.get_or_insert(DEFAULT_ASPECT_RATIO);
        }
        let mut phases = Vec::with_capacity(cfg.phases.len());
        for p in &cfg.phases {
            phases.push(p.resolved()?);
        }
        cfg.phases = phases;
        let plastic = cfg.is_plastic();
        cfg.loading.steps_mut().get_or_insert(if plastic { DEFAULT_PLASTIC_STEPS } else { 1 });
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Config("at least one phase is required".into()));
        }
        for name in &self.output.maps {
            if !MAP_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown map {name:?} (known: {})", MAP_NAMES.join(", "))));
            }
        }
        for (name, [lo, hi]) in &self.output.scale {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("output.scale.{name} must be finite with min < max")));
            }
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Error::Config("solver.tol must be positive and solver.max_iter at least 1".into()));
        }
        if let Some(e) = &self.ensemble {
            if e.samples == 0 || e.threads == 0 {
                return Err(Error::Config("ensemble.samples and ensemble.threads must be at least 1".into()));
            }
            if e.seeds.as_ref().is_some_and(|s| s.len() != e.samples) {
                return Err(Error::Config("ensemble.seeds must list one seed per sample".into()));
            }
        }
        for p in &self.phases {
            if let Some(path) = &p.hardening_table {
                if !path.is_file() {
                    return Err(Error::Config(format!("hardening table {} does not exist", path.display())));
                }
            }
            p.law()?;
        }
        self.loading.program()?;
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        match (g.n1, g.n2, g.t1, g.t2) {
            (Some(n1), Some(n2), Some(t1), Some(t2)) => GridSpec::new(n1, n2, t1, t2),
            _ => Err(Error::Config("grid is not resolved".into())),
        }
    }

    pub fn laws(&self) -> Result<Vec<MaterialLaw>> {
        self.phases.iter().map(PhaseConfig::law).collect()
    }

    /// Builds the microstructure and checks its phase count against the phases block.
    pub fn microstructure(&self) -> Result<Microstructure> {
        let grid = self.grid_spec()?;
        let config_err = |e: Error| match e {
            e @ (Error::UnattainableFraction { .. }
            | Error::PackingFailed { .. }
            | Error::HexagonalAspect
            | Error::InvalidMicrostructure(_)
            | Error::InvalidGrid(_)) => Error::Config(e.to_string()),
            other => other,
        };
        let (map, fibers) = match &self.microstructure {
            MicrostructureConfig::Uniform => (PhaseMap::uniform(grid), Vec::new()),
            MicrostructureConfig::Square { volume_fraction } => {
                (square_lattice(&grid, *volume_fraction).map_err(config_err)?, Vec::new())
            }
            MicrostructureConfig::Hexagonal { volume_fraction } => {
                (hexagonal_lattice(&grid, *volume_fraction).map_err(config_err)?, Vec::new())
            }
            MicrostructureConfig::Laminate { volume_fraction } => {
                (laminate(&grid, *volume_fraction).map_err(config_err)?, Vec::new())
            }
            MicrostructureConfig::Random {
                volume_fraction,
                count,
                shape,
                aspect_ratio,
                penetrable,
                min_spacing_px,
                seed,
            } => {
                let shape = match shape {
                    ShapeName::Circle => FiberShape::Circle,
                    ShapeName::Ellipse => {
                        FiberShape::Ellipse { aspect_ratio: aspect_ratio.unwrap_or(DEFAULT_ASPECT_RATIO) }
                    }
                    ShapeName::Triangle => FiberShape::EquilateralTriangle,
                };
                let spec = FiberSpec {
                    shape,
                    count: *count,
                    volume_fraction: *volume_fraction,
                    penetrable: *penetrable,
                    min_spacing_px: *min_spacing_px,
                    rng_seed: *seed,
                };
                random_fibers(&grid, &spec).map_err(config_err)?
            }
            MicrostructureConfig::Image { path, thresholds } => {
                (load_phase_image(path, thresholds, grid.t1, grid.t2)?, Vec::new())
            }
        };
        if map.n_phases() != self.phases.len() {
            return Err(Error::Config(format!(
                "microstructure has {} phases but {} are configured",
                map.n_phases(),
                self.phases.len()
            )));
        }
        Ok(Microstructure { map, fibers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = r#"
        [grid]
        n1 = 32

        [microstructure]
        generator = "square"
        volume_fraction = 0.475

        [[phases]]
        preset = "aluminum"

        [[phases]]
        preset = "boron"
    "#;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::from_toml(SQUARE).unwrap().resolved().unwrap();
        assert_eq!(cfg.grid, GridConfig { n1: Some(32), n2: Some(32), t1: Some(1.0), t2: Some(1.0) });
        assert_eq!(cfg.loading.steps(), Some(DEFAULT_PLASTIC_STEPS));
        assert_eq!(cfg.phases[0].hardening, Some(0.0));
        assert_eq!(cfg.phases[1].yield_stress, None);
        let laws = cfg.laws().unwrap();
        assert!(!laws[0].is_elastic() && laws[1].is_elastic());
        assert_eq!(cfg.microstructure().unwrap().map.n_phases(), 2);

        let echoed = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(echoed, cfg);
        assert_eq!(echoed.resolved().unwrap(), cfg);
    }

    #[test]
    fn elastic_runs_default_to_one_step() {
        let text = SQUARE.replace("preset = \"aluminum\"", "young = 68.9e3\npoisson = 0.35");
        let cfg = RunConfig::from_toml(&text).unwrap().resolved().unwrap();
        assert_eq!(cfg.loading.steps(), Some(1));
    }

    #[test]
    fn hexagonal_cell_defaults() {
        let text = SQUARE.replace("\"square\"", "\"hexagonal\"");
        let cfg = RunConfig::from_toml(&text).unwrap().resolved().unwrap();
        let g = cfg.grid_spec().unwrap();
        assert_eq!((g.n1, g.n2), (32, 16));
        assert!((g.t1 - 3f64.sqrt()).abs() < 1e-15);
        cfg.microstructure().unwrap();
    }

    #[test]
    fn schema_errors() {
        let bad = [
            SQUARE.replace("volume_fraction", "fraction"),
            SQUARE.replace("\"boron\"", "\"steel\""),
            SQUARE.replace("n1 = 32", ""),
            SQUARE.replace("[grid]", "[grid]\nn3 = 4"),
            format!("{SQUARE}\n[loading]\nmode = \"uniaxial\"\nsteps = 0"),
            format!("{SQUARE}\n[output]\nmaps = [\"stress\"]"),
            format!("{SQUARE}\n[[phases]]\npreset = \"boron\""),
            SQUARE.replace("preset = \"boron\"", "preset = \"boron\"\nhardening_table = \"missing.csv\""),
        ];
        for text in bad {
            let err = RunConfig::from_toml(&text)
                .and_then(|c| c.resolved())
                .and_then(|c| c.microstructure().map(|_| ()))
                .unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err:?}");
        }
    }

    #[test]
    fn phase_laws() {
        let hardening = PhaseConfig { hardening: Some(1171.0), ..PhaseConfig::preset("aluminum") };
        let law = hardening.law().unwrap();
        assert_eq!(law.plastic, Some(HardeningCurve::Linear { sigma0: 68.9, modulus: 1171.0 }));
        assert!((law.elastic.young() - 68.9e3).abs() < 1e-9);

        let no_yield = PhaseConfig { young: Some(1.0), poisson: Some(0.3), hardening: Some(1.0), ..Default::default() };
        assert!(no_yield.law().is_err());
    }

    #[test]
    fn hardening_table_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        std::fs::write(&path, "p,sigma0\n0,68.9\n0.01,80\n").unwrap();
        let phase = PhaseConfig {
            young: Some(68.9e3),
            poisson: Some(0.35),
            hardening_table: Some(path.clone()),
            ..Default::default()
        };
        let law = phase.law().unwrap();
        assert_eq!(law.plastic.unwrap().sigma0(0.005), 74.45);

        std::fs::write(&path, "0,68.9\n0.01\n").unwrap();
        assert!(matches!(phase.law(), Err(Error::Config(_)) | Err(Error::Csv(_))));
    }

    #[test]
    fn config_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"
            [microstructure]
            generator = "image"
            path = "map.png"
            thresholds = [128]

            [[phases]]
            preset = "aluminum"

            [[phases]]
            preset = "boron"
        "#;
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, text).unwrap();
        let cfg = RunConfig::load(&cfg_path).unwrap();
        let MicrostructureConfig::Image { path, .. } = &cfg.microstructure else { unreachable!() };
        assert_eq!(path, &dir.path().join("map.png"));
        assert!(matches!(cfg.resolved(), Err(Error::Config(_))));

        let pixels: Vec<u8> = (0..8 * 4).map(|k| if k % 8 < 3 { 255 } else { 0 }).collect();
        crate::io::write_gray_image(&dir.path().join("map.png"), 8, 4, pixels).unwrap();
        let cfg = cfg.resolved().unwrap();
        assert_eq!((cfg.grid.n1, cfg.grid.n2), (Some(8), Some(4)));
        let m = cfg.microstructure().unwrap();
        assert_eq!(m.map.counts(), vec![20, 12]);
    }
}
