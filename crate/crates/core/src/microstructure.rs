//! Phase maps and their generators: periodic lattices, random fiber
//! packings, penetrable fibers, laminates and grayscale images.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::GridSpec;

/// Phase id per pixel; phase 0 is the matrix by convention.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    grid: GridSpec,
    ids: Vec<u8>,
    n_phases: usize,
}

impl PhaseMap {
    /// Builds a map where every id is below `n_phases` and every phase occurs.
    pub fn new(grid: GridSpec, ids: Vec<u8>, n_phases: usize) -> Result<Self> {
        if ids.len() != grid.len() {
            return Err(Error::InvalidMicrostructure(format!(
                "{} ids for a {}x{} grid",
                ids.len(),
                grid.n1,
                grid.n2
            )));
        }
        let mut counts = vec![0usize; n_phases];
        for &id in &ids {
            match counts.get_mut(id as usize) {
                Some(c) => *c += 1,
                None => {
                    return Err(Error::InvalidMicrostructure(format!("phase id {id} outside 0..{n_phases}")))
                }
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidMicrostructure(format!("phase {empty} has no pixel")));
        }
        Ok(Self { grid, ids, n_phases })
    }

    /// Builds a map whose phase count is inferred from the largest id present.
    fn from_ids(grid: GridSpec, ids: Vec<u8>) -> Self {
        let mut present = [false; 256];
        for &id in &ids {
            present[id as usize] = true;
        }
        let n_phases = present.iter().rposition(|&p| p).map_or(1, |m| m + 1);
        Self { grid, ids, n_phases }
    }

    pub fn uniform(grid: GridSpec) -> Self {
        Self { grid, ids: vec![0; grid.len()], n_phases: 1 }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    pub fn n_phases(&self) -> usize {
        self.n_phases
    }

    pub fn phase(&self, i1: usize, i2: usize) -> u8 {
        self.ids[self.grid.index(i1, i2)]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_phases];
        for &id in &self.ids {
            c[id as usize] += 1;
        }
        c
    }

    /// Pixel fraction of each phase.
    pub fn fractions(&self) -> Vec<f64> {
        let n = self.ids.len() as f64;
        self.counts().into_iter().map(|c| c as f64 / n).collect()
    }

    pub fn fraction(&self, phase: u8) -> f64 {
        self.fractions().get(phase as usize).copied().unwrap_or(0.0)
    }
}

/// Cross-section of a fiber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FiberShape {
    Circle,
    /// Ratio of the major to the minor axis.
    Ellipse { aspect_ratio: f64 },
    EquilateralTriangle,
}

/// Parameters of a random fiber arrangement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec {
    pub shape: FiberShape,
    pub count: usize,
    pub volume_fraction: f64,
    /// Overlapping fibers allowed; the radius is then tuned to hit the fraction.
    pub penetrable: bool,
    /// Minimum gap between impenetrable fibers, in pixels.
    pub min_spacing_px: f64,
    pub rng_seed: u64,
}

/// Placement attempts per fiber before giving up.
pub const ATTEMPTS_PER_FIBER: usize = 10_000;

/// One placed fiber: center, orientation and shape sized to a given area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fiber {
    pub center: (f64, f64),
    pub angle: f64,
    pub shape: FiberShape,
    pub area: f64,
}

impl Fiber {
    pub fn circle(center: (f64, f64), radius: f64) -> Self {
        Self { center, angle: 0.0, shape: FiberShape::Circle, area: PI * radius * radius }
    }

    /// Radius of the circumscribed circle.
    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            FiberShape::Circle => (self.area / PI).sqrt(),
            FiberShape::Ellipse { aspect_ratio } => (self.area * aspect_ratio / PI).sqrt(),
            FiberShape::EquilateralTriangle => {
                let side = (4.0 * self.area / 3f64.sqrt()).sqrt();
                side / 3f64.sqrt()
            }
        }
    }

    /// Whether the offset `(dx, dy)` from the center lies inside the shape grown by `margin`.
    pub fn contains(&self, dx: f64, dy: f64, margin: f64) -> bool {
        match self.shape {
            FiberShape::Circle => {
                let r = (self.area / PI).sqrt() + margin;
                dx * dx + dy * dy < r * r
            }
            FiberShape::Ellipse { aspect_ratio } => {
                let major = (self.area * aspect_ratio / PI).sqrt();
                let (a, b) = (major + margin, major / aspect_ratio + margin);
                let (s, c) = self.angle.sin_cos();
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) < 1.0
            }
            FiberShape::EquilateralTriangle => {
                let apothem = self.bounding_radius() / 2.0 + margin;
                (0..3).all(|k| {
                    let (s, c) = (self.angle + k as f64 * 2.0 * PI / 3.0).sin_cos();
                    -(dx * c + dy * s) < apothem
                })
            }
        }
    }

    /// Calls `f(index)` on every pixel whose center lies inside the grown shape.
    fn for_each_pixel(&self, grid: &GridSpec, margin: f64, mut f: impl FnMut(usize)) {
        let (h1, h2) = grid.spacing();
        let reach = self.bounding_radius() + margin;
        let (cx, cy) = self.center;
        let lo1 = ((cx - reach) / h1).floor() as i64;
        let hi1 = ((cx + reach) / h1).ceil() as i64;
        let lo2 = ((cy - reach) / h2).floor() as i64;
        let hi2 = ((cy + reach) / h2).ceil() as i64;
        for i1 in lo1..=hi1 {
            let dx = i1 as f64 * h1 - cx;
            let w1 = i1.rem_euclid(grid.n1 as i64) as usize;
            for i2 in lo2..=hi2 {
                let dy = i2 as f64 * h2 - cy;
                if self.contains(dx, dy, margin) {
                    f(grid.index(w1, i2.rem_euclid(grid.n2 as i64) as usize));
                }
            }
        }
    }
}

/// Rasterizes fibers as phase 1 on a phase-0 matrix. Pixel `(i1, i2)` is
/// centered on its sample point `(i1 h1, i2 h2)` and belongs to a fiber when
/// that point is inside.
pub fn rasterize(grid: &GridSpec, fibers: &[Fiber]) -> PhaseMap {
    let mut ids = vec![0u8; grid.len()];
    for fiber in fibers {
        fiber.for_each_pixel(grid, 0.0, |k| ids[k] = 1);
    }
    PhaseMap::from_ids(*grid, ids)
}

fn check_fraction(f: f64, max: f64, what: &str) -> Result<()> {
    if !(0.0..max).contains(&f) {
        return Err(Error::UnattainableFraction {
            requested: f,
            reason: format!("{what} requires 0 <= f < {max:.4}"),
        });
    }
    Ok(())
}

/// One circular fiber centered in the cell.
pub fn square_lattice(grid: &GridSpec, f: f64) -> Result<PhaseMap> {
    let side = grid.t1.min(grid.t2);
    let max = PI * side * side / (4.0 * grid.area());
    check_fraction(f, max, "a square lattice of touching-free fibers")?;
    let r = (f * grid.area() / PI).sqrt();
    Ok(rasterize(grid, &[Fiber::circle((grid.t1 / 2.0, grid.t2 / 2.0), r)]))
}

/// Fiber centers of the hexagonal cell: one at the center, one shared by the corners.
pub fn hexagonal_centers(grid: &GridSpec) -> [(f64, f64); 2] {
    [(0.0, 0.0), (grid.t1 / 2.0, grid.t2 / 2.0)]
}

/// Hexagonal lattice in its rectangular cell with `n1 = 2 n2` and `t1 = sqrt(3) t2`.
pub fn hexagonal_lattice(grid: &GridSpec, f: f64) -> Result<PhaseMap> {
    if grid.n1 != 2 * grid.n2 || (grid.t1 - 3f64.sqrt() * grid.t2).abs() > 1e-9 * grid.t1 {
        return Err(Error::HexagonalAspect);
    }
    check_fraction(f, PI / (2.0 * 3f64.sqrt()), "a hexagonal lattice of touching-free fibers")?;
    let r = (f * grid.area() / (2.0 * PI)).sqrt();
    let fibers = hexagonal_centers(grid).map(|c| Fiber::circle(c, r));
    Ok(rasterize(grid, &fibers))
}

/// Layers normal to x1: the first `round(f n1)` columns are phase 1.
pub fn laminate(grid: &GridSpec, f: f64) -> Result<PhaseMap> {
    let cols = (f * grid.n1 as f64).round() as usize;
    if !(0.0..=1.0).contains(&f) || cols == 0 || cols == grid.n1 {
        return Err(Error::UnattainableFraction {
            requested: f,
            reason: format!("a laminate on {} columns needs both layers non-empty", grid.n1),
        });
    }
    let ids = (0..grid.len()).map(|k| u8::from(grid.unindex(k).0 < cols)).collect();
    PhaseMap::new(*grid, ids, 2)
}

/// Minimum-image separation of two points in the periodic cell.
pub fn periodic_offset(grid: &GridSpec, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let wrap = |d: f64, t: f64| d - t * (d / t).round();
    (wrap(b.0 - a.0, grid.t1), wrap(b.1 - a.1, grid.t2))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random centers, reproducible from the seed.
pub fn random_centers(grid: &GridSpec, count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut r = rng(seed);
    (0..count).map(|_| (r.gen::<f64>() * grid.t1, r.gen::<f64>() * grid.t2)).collect()
}

fn validate_spec(spec: &FiberSpec) -> Result<()> {
    if spec.count == 0 {
        return Err(Error::InvalidMicrostructure("fiber count must be positive".into()));
    }
    if let FiberShape::Ellipse { aspect_ratio } = spec.shape {
        if !(aspect_ratio >= 1.0) {
            return Err(Error::InvalidMicrostructure(format!("ellipse aspect ratio {aspect_ratio} < 1")));
        }
    }
    if !(spec.min_spacing_px >= 0.0) {
        return Err(Error::InvalidMicrostructure("minimum spacing must be non-negative".into()));
    }
    if !(spec.volume_fraction > 0.0 && spec.volume_fraction < 1.0) {
        return Err(Error::UnattainableFraction {
            requested: spec.volume_fraction,
            reason: "random arrangements need 0 < f < 1".into(),
        });
    }
    Ok(())
}

/// Random sequential adsorption of equal-area fibers, or penetrable circles
/// whose radius is adjusted to the requested pixel fraction.
pub fn random_fibers(grid: &GridSpec, spec: &FiberSpec) -> Result<(PhaseMap, Vec<Fiber>)> {
    validate_spec(spec)?;
    if spec.penetrable {
        if spec.shape != FiberShape::Circle {
            return Err(Error::InvalidMicrostructure("penetrable fibers must be circular".into()));
        }
        let centers = random_centers(grid, spec.count, spec.rng_seed);
        let r = penetrable_radius(grid, &centers, spec.volume_fraction)?;
        let fibers: Vec<Fiber> = centers.iter().map(|&c| Fiber::circle(c, r)).collect();
        return Ok((rasterize(grid, &fibers), fibers));
    }

    let area = spec.volume_fraction * grid.area() / spec.count as f64;
    let (h1, h2) = grid.spacing();
    let gap = spec.min_spacing_px * (h1 * h2).sqrt();
    let template = Fiber { center: (0.0, 0.0), angle: 0.0, shape: spec.shape, area };
    let reach = 2.0 * template.bounding_radius() + gap;
    if reach > grid.t1.min(grid.t2) {
        return Err(Error::UnattainableFraction {
            requested: spec.volume_fraction,
            reason: format!("{} fibers are too large to fit without self-contact", spec.count),
        });
    }

    let mut r = rng(spec.rng_seed);
    let mut fibers: Vec<Fiber> = Vec::with_capacity(spec.count);
    // owner mask of dilated shapes, used for non-circular shapes
    let mut occupied = vec![false; grid.len()];
    let circle = spec.shape == FiberShape::Circle;
    for _ in 0..spec.count {
        let mut placed = None;
        for _ in 0..ATTEMPTS_PER_FIBER {
            let center = (r.gen::<f64>() * grid.t1, r.gen::<f64>() * grid.t2);
            let angle = if circle { 0.0 } else { r.gen::<f64>() * 2.0 * PI };
            let cand = Fiber { center, angle, ..template };
            let free = if circle {
                fibers.iter().all(|o| {
                    let (dx, dy) = periodic_offset(grid, o.center, center);
                    dx.hypot(dy) >= reach
                })
            } else {
                let mut hit = false;
                cand.for_each_pixel(grid, gap / 2.0, |k| hit |= occupied[k]);
                !hit
            };
            if free {
                placed = Some(cand);
                break;
            }
        }
        let Some(fiber) = placed else {
            let achieved = rasterize(grid, &fibers).fraction(1);
            return Err(Error::PackingFailed { placed: fibers.len(), requested: spec.count, achieved });
        };
        if !circle {
            fiber.for_each_pixel(grid, gap / 2.0, |k| occupied[k] = true);
        }
        fibers.push(fiber);
    }
    Ok((rasterize(grid, &fibers), fibers))
}

/// Radius at which penetrable circles at `centers` cover the fraction `f` of pixels.
pub fn penetrable_radius(grid: &GridSpec, centers: &[(f64, f64)], f: f64) -> Result<f64> {
    let frac = |r: f64| {
        let fibers: Vec<Fiber> = centers.iter().map(|&c| Fiber::circle(c, r)).collect();
        rasterize(grid, &fibers).fraction(1)
    };
    let (mut lo, mut hi) = (0.0, 0.5 * grid.t1.hypot(grid.t2));
    if frac(hi) < f {
        return Err(Error::UnattainableFraction { requested: f, reason: "centers cannot cover the cell".into() });
    }
    let (h1, h2) = grid.spacing();
    while hi - lo > 1e-3 * h1.min(h2) {
        let mid = 0.5 * (lo + hi);
        if frac(mid) < f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Whether some 4-connected cluster of `phase` wraps around the periodic cell.
pub fn percolates(map: &PhaseMap, phase: u8) -> bool {
    let g = map.grid();
    let (n1, n2) = (g.n1 as i64, g.n2 as i64);
    // unwrapped coordinates of the first visit, per pixel
    let mut seen: Vec<Option<(i64, i64)>> = vec![None; g.len()];
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if map.ids[start] != phase || seen[start].is_some() {
            continue;
        }
        let (s1, s2) = g.unindex(start);
        seen[start] = Some((s1 as i64, s2 as i64));
        queue.push_back((s1 as i64, s2 as i64));
        while let Some((u1, u2)) = queue.pop_front() {
            for (d1, d2) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (v1, v2) = (u1 + d1, u2 + d2);
                let k = g.index(v1.rem_euclid(n1) as usize, v2.rem_euclid(n2) as usize);
                if map.ids[k] != phase {
                    continue;
                }
                match seen[k] {
                    None => {
                        seen[k] = Some((v1, v2));
                        queue.push_back((v1, v2));
                    }
                    Some(prev) if prev != (v1, v2) => return true,
                    Some(_) => {}
                }
            }
        }
    }
    false
}

/// Reads a grayscale image; `thresholds` split gray levels into phases
/// (`gray < thresholds[0]` is phase 0, and so on). Image x maps to the first axis.
pub fn load_phase_image(path: &Path, thresholds: &[u8], t1: f64, t2: f64) -> Result<PhaseMap> {
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("image thresholds must be strictly increasing".into()));
    }
    let img = image::open(path)
        .map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let grid = GridSpec::new(w as usize, h as usize, t1, t2)?;
    let mut ids = vec![0u8; grid.len()];
    for (x, y, px) in img.enumerate_pixels() {
        let gray = px.0[0];
        ids[grid.index(x as usize, y as usize)] = thresholds.iter().filter(|&&t| gray >= t).count() as u8;
    }
    PhaseMap::new(grid, ids, thresholds.len() + 1).map_err(|e| match e {
        Error::InvalidMicrostructure(m) => Error::Config(format!("thresholds do not cover the gray levels: {m}")),
        other => other,
    })
}

/// Gray level used for a phase id when writing a map.
pub fn phase_gray(id: u8, n_phases: usize) -> u8 {
    if n_phases <= 1 {
        0
    } else {
        (id as usize * 255 / (n_phases - 1)) as u8
    }
}

/// Writes the map as an 8-bit image (format from the extension) and a
/// `<path>.phases.txt` sidecar listing `gray phase` pairs.
pub fn write_phase_map(map: &PhaseMap, path: &Path) -> Result<PathBuf> {
    let g = map.grid();
    let pixels = (0..g.n2)
        .flat_map(|y| (0..g.n1).map(move |x| (x, y)))
        .map(|(x, y)| phase_gray(map.phase(x, y), map.n_phases))
        .collect();
    crate::io::write_gray_image(path, g.n1, g.n2, pixels)?;
    let legend: String = (0..map.n_phases)
        .map(|id| format!("{} {}\n", phase_gray(id as u8, map.n_phases), id))
        .collect();
    let sidecar = crate::io::sidecar(path, "phases.txt");
    crate::io::write_atomic(&sidecar, legend.as_bytes())?;
    Ok(sidecar)
}
