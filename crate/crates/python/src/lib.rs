//! Python bindings: microstructures, phase laws, elastic solves and
//! uniaxial loading programs.

use homog::analysis::{flow_stress, hardening_modulus, young_modulus_probe, OverallCurve};
use homog::green::IsotropicModuli;
use homog::material::{HardeningCurve, MaterialLaw};
use homog::microstructure::{
    hexagonal_lattice, laminate, percolates, random_fibers, square_lattice, FiberShape, FiberSpec, PhaseMap,
};
use homog::solver::{solve_elastic, uniaxial_direction, CellSolver, LoadingProgram, SolverConfig};
use homog::tensor::{GridSpec, SymTensor};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(homog_py, SolverError, PyException);

fn to_py(e: homog::Error) -> PyErr {
    use homog::Error::*;
    match e {
        MaxIterations { .. } | Diverged { .. } | InfiniteContrast(_) | ZeroMeanStress | DegenerateDirection(_) => {
            SolverError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Isotropic phase law, elastic or J2 elastoplastic with linear hardening.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Material {
    law: MaterialLaw,
}

#[pymethods]
impl Material {
    #[staticmethod]
    fn elastic(young: f64, poisson: f64) -> PyResult<Self> {
        let m = IsotropicModuli::from_young_poisson(young, poisson).map_err(to_py)?;
        Ok(Self { law: MaterialLaw::elastic(m) })
    }

    #[staticmethod]
    #[pyo3(signature = (young, poisson, yield_stress, hardening = 0.0))]
    fn plastic(young: f64, poisson: f64, yield_stress: f64, hardening: f64) -> PyResult<Self> {
        let m = IsotropicModuli::from_young_poisson(young, poisson).map_err(to_py)?;
        let curve = if hardening == 0.0 {
            HardeningCurve::perfect(yield_stress)
        } else {
            HardeningCurve::linear(yield_stress, hardening)
        };
        Ok(Self { law: MaterialLaw::plastic(m, curve.map_err(to_py)?) })
    }

    #[getter]
    fn young(&self) -> f64 {
        self.law.elastic.young()
    }

    #[getter]
    fn poisson(&self) -> f64 {
        self.law.elastic.poisson()
    }

    #[getter]
    fn is_elastic(&self) -> bool {
        self.law.is_elastic()
    }

    fn __repr__(&self) -> String {
        format!("Material(young={}, poisson={}, elastic={})", self.young(), self.poisson(), self.is_elastic())
    }
}

/// Periodic pixel map of phase ids.
#[pyclass(frozen)]
struct Microstructure {
    map: PhaseMap,
}

fn square_grid(n: usize) -> PyResult<GridSpec> {
    GridSpec::square(n).map_err(to_py)
}

#[pymethods]
impl Microstructure {
    /// One circular fiber per square cell of `n x n` pixels.
    #[staticmethod]
    fn square(n: usize, fraction: f64) -> PyResult<Self> {
        Ok(Self { map: square_lattice(&square_grid(n)?, fraction).map_err(to_py)? })
    }

    /// Hexagonal array on a `2n x n` rectangular cell.
    #[staticmethod]
    fn hexagonal(n: usize, fraction: f64) -> PyResult<Self> {
        let grid = GridSpec::new(2 * n, n, 3f64.sqrt(), 1.0).map_err(to_py)?;
        Ok(Self { map: hexagonal_lattice(&grid, fraction).map_err(to_py)? })
    }

    /// Layers normal to the first axis; phase 1 occupies `fraction`.
    #[staticmethod]
    fn laminate(n: usize, fraction: f64) -> PyResult<Self> {
        Ok(Self { map: laminate(&square_grid(n)?, fraction).map_err(to_py)? })
    }

    /// Random circular fibers, impenetrable unless `penetrable`.
    #[staticmethod]
    #[pyo3(signature = (n, count, fraction, seed = 0, penetrable = false))]
    fn random(n: usize, count: usize, fraction: f64, seed: u64, penetrable: bool) -> PyResult<Self> {
        let spec = FiberSpec {
            shape: FiberShape::Circle,
            count,
            volume_fraction: fraction,
            penetrable,
            min_spacing_px: 0.0,
            rng_seed: seed,
        };
        Ok(Self { map: random_fibers(&square_grid(n)?, &spec).map_err(to_py)?.0 })
    }

    /// From phase ids in storage order (first index fastest).
    #[staticmethod]
    #[pyo3(signature = (n1, n2, ids, n_phases, t1 = 1.0, t2 = 1.0))]
    fn from_ids(n1: usize, n2: usize, ids: Vec<u8>, n_phases: usize, t1: f64, t2: f64) -> PyResult<Self> {
        let grid = GridSpec::new(n1, n2, t1, t2).map_err(to_py)?;
        Ok(Self { map: PhaseMap::new(grid, ids, n_phases).map_err(to_py)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.map.grid().n1, self.map.grid().n2)
    }

    #[getter]
    fn n_phases(&self) -> usize {
        self.map.n_phases()
    }

    fn fractions(&self) -> Vec<f64> {
        self.map.fractions()
    }

    fn ids(&self) -> Vec<u8> {
        self.map.ids().to_vec()
    }

    fn percolates(&self, phase: u8) -> bool {
        percolates(&self.map, phase)
    }

    fn __repr__(&self) -> String {
        let (n1, n2) = self.shape();
        format!("Microstructure({n1}x{n2}, fractions={:?})", self.fractions())
    }
}

/// Overall response of a uniaxial loading program.
#[pyclass(frozen)]
struct Curve {
    curve: OverallCurve,
    iterations: Vec<usize>,
}

#[pymethods]
impl Curve {
    /// `(strain, stress)` pairs along the loading direction.
    fn axial(&self) -> Vec<(f64, f64)> {
        self.curve.axial()
    }

    fn flow_stress(&self) -> PyResult<f64> {
        Ok(flow_stress(&self.curve).map_err(to_py)?.value)
    }

    fn hardening_modulus(&self) -> PyResult<f64> {
        hardening_modulus(&self.curve).map_err(to_py)
    }

    #[getter]
    fn iterations(&self) -> Vec<usize> {
        self.iterations.clone()
    }

    fn __len__(&self) -> usize {
        self.curve.points.len()
    }
}

fn laws(materials: &[Material]) -> Vec<MaterialLaw> {
    materials.iter().map(|m| m.law.clone()).collect()
}

fn config(tol: f64) -> SolverConfig {
    SolverConfig { tol, ..SolverConfig::default() }
}

/// Mean stress `(11, 22, 33, 12)` and iteration count for a prescribed mean strain.
#[pyfunction]
#[pyo3(signature = (micro, materials, strain, tol = 1e-4))]
fn solve(
    py: Python<'_>,
    micro: &Microstructure,
    materials: Vec<Material>,
    strain: [f64; 4],
    tol: f64,
) -> PyResult<([f64; 4], usize)> {
    let laws = laws(&materials);
    let state = py
        .detach(|| solve_elastic(&micro.map, &laws, &SymTensor::from_array(strain), &config(tol)))
        .map_err(to_py)?;
    Ok((state.macro_stress().to_array(), state.history[0].iterations))
}

/// Young's modulus under uniaxial stress at `angle` degrees.
#[pyfunction]
#[pyo3(signature = (micro, materials, angle = 0.0, tol = 1e-4))]
fn young_modulus(py: Python<'_>, micro: &Microstructure, materials: Vec<Material>, angle: f64, tol: f64) -> PyResult<f64> {
    let laws = laws(&materials);
    py.detach(|| young_modulus_probe(&micro.map, &laws, &uniaxial_direction(angle), &config(tol))).map_err(to_py)
}

/// Uniaxial tension at `angle` degrees in `steps` equal increments up to `final_strain`.
#[pyfunction]
#[pyo3(signature = (micro, materials, angle = 0.0, final_strain = 0.01, steps = 20, tol = 1e-4))]
fn uniaxial_tension(
    py: Python<'_>,
    micro: &Microstructure,
    materials: Vec<Material>,
    angle: f64,
    final_strain: f64,
    steps: usize,
    tol: f64,
) -> PyResult<Curve> {
    let laws = laws(&materials);
    let program = LoadingProgram::uniaxial_stress(angle, final_strain, steps);
    program.validate().map_err(to_py)?;
    let state = py
        .detach(|| CellSolver::new(&micro.map, &laws, config(tol)).and_then(|mut s| s.run(&program)))
        .map_err(to_py)?;
    Ok(Curve {
        curve: OverallCurve::from_history(&program, &state.history),
        iterations: state.history.iter().map(|r| r.iterations).collect(),
    })
}

#[pymodule]
fn homog_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Material>()?;
    m.add_class::<Microstructure>()?;
    m.add_class::<Curve>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(young_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(uniaxial_tension, m)?)?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
