use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Grid-sampled density at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: Grid, time: f64) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values, time }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Midpoint rule `Σ weight(x_i) ρ_i |cell|`.
    pub fn weighted_moment(&self, weight: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (i, &rho) in self.values.iter().enumerate() {
            let x = self.grid.center(i);
            let w = weight(&x);
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    what: "moment weight",
                    x,
                    t: self.time,
                });
            }
            acc += w * rho;
        }
        Ok(acc * self.grid.cell_volume())
    }
}

/// `Σ weight(x_i) ρ_i |cell|`.
pub fn weighted_moment(state: &DensityField, weight: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    state.weighted_moment(weight)
}

/// Discretisations of the initial measure.
#[derive(Clone)]
pub enum InitialMeasure {
    Gaussian {
        mean: Vec<f64>,
        covariance: DMatrix<f64>,
        mass: f64,
    },
    /// Isotropic Gaussian of standard deviation `width` (default `2h`).
    PointMassSmoothed {
        center: Vec<f64>,
        width: Option<f64>,
        mass: f64,
    },
    /// A density evaluated at cell centres, used as is.
    GridFunction(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for InitialMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialMeasure::Gaussian { mean, covariance, mass } => f
                .debug_struct("Gaussian")
                .field("mean", mean)
                .field("covariance", covariance)
                .field("mass", mass)
                .finish(),
            InitialMeasure::PointMassSmoothed { center, width, mass } => f
                .debug_struct("PointMassSmoothed")
                .field("center", center)
                .field("width", width)
                .field("mass", mass)
                .finish(),
            InitialMeasure::GridFunction(_) => f.write_str("GridFunction"),
        }
    }
}

impl InitialMeasure {
    pub fn standard_gaussian(dimension: usize) -> Self {
        InitialMeasure::Gaussian {
            mean: vec![0.0; dimension],
            covariance: DMatrix::identity(dimension, dimension),
            mass: 1.0,
        }
    }

    pub fn gaussian_isotropic(mean: Vec<f64>, std: f64) -> Self {
        let d = mean.len();
        InitialMeasure::Gaussian {
            mean,
            covariance: DMatrix::from_diagonal_element(d, d, std * std),
            mass: 1.0,
        }
    }

    pub fn point_mass(center: Vec<f64>) -> Self {
        InitialMeasure::PointMassSmoothed {
            center,
            width: None,
            mass: 1.0,
        }
    }

    pub fn grid_function<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        InitialMeasure::GridFunction(Arc::new(f))
    }
}

/// How the projected field relates to the nominal measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub nominal_mass: f64,
    /// Midpoint-rule mass before renormalisation, relative to nominal.
    pub captured_fraction: f64,
    /// Factor applied to reach the nominal mass exactly (1 if none).
    pub renormalization: f64,
    pub truncation_warning: bool,
}

const CAPTURE_WARNING: f64 = 1e-6;
const CAPTURE_FLOOR: f64 = 0.5;

fn gaussian_values(grid: &Grid, mean: &[f64], covariance: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = grid.dimension();
    if mean.len() != d || covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: mean.len(),
        });
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Parameter("covariance must be symmetric positive definite".into()))?;
    let det: f64 = chol.l().diagonal().iter().map(|v| v * v).product();
    let norm = ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt();
    let m = DVector::from_column_slice(mean);
    Ok((0..grid.len())
        .map(|i| {
            let z = DVector::from_vec(grid.center(i)) - &m;
            let q = z.dot(&chol.solve(&z));
            (-0.5 * q).exp() / norm
        })
        .collect())
}

/// Samples `spec` at cell centres. Gaussian-type measures are rescaled to
/// their nominal mass; a captured fraction below `1 - 1e-6` sets the
/// warning flag and one below `0.5` is a truncation error.
pub fn project_initial_measure(spec: &InitialMeasure, grid: &Grid) -> Result<(DensityField, ProjectionReport)> {
    let (values, nominal) = match spec {
        InitialMeasure::Gaussian { mean, covariance, mass } => (gaussian_values(grid, mean, covariance)?, *mass),
        InitialMeasure::PointMassSmoothed { center, width, mass } => {
            let h = (0..grid.dimension()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
            let w = width.unwrap_or(2.0 * h);
            if !(w > 0.0) {
                return Err(Error::Parameter(format!("smoothing width must be positive, got {w}")));
            }
            let d = grid.dimension();
            (
                gaussian_values(grid, center, &DMatrix::from_diagonal_element(d, d, w * w))?,
                *mass,
            )
        }
        InitialMeasure::GridFunction(f) => {
            let mut values = Vec::with_capacity(grid.len());
            for i in 0..grid.len() {
                let x = grid.center(i);
                let v = f(&x);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Parameter(format!(
                        "initial density {v} at {x:?} is not a finite nonnegative number"
                    )));
                }
                values.push(v);
            }
            let field = DensityField::new(grid.clone(), values, 0.0)?;
            let mass = field.mass();
            let report = ProjectionReport {
                nominal_mass: mass,
                captured_fraction: 1.0,
                renormalization: 1.0,
                truncation_warning: false,
            };
            return Ok((field, report));
        }
    };
    if !(nominal >= 0.0) || !nominal.is_finite() {
        return Err(Error::Parameter(format!(
            "nominal mass must be nonnegative, got {nominal}"
        )));
    }
    let mut field = DensityField::new(grid.clone(), values, 0.0)?;
    let captured = field.mass();
    if captured < CAPTURE_FLOOR {
        return Err(Error::Truncation { captured });
    }
    let scale = nominal / captured;
    for v in &mut field.values {
        *v *= scale;
    }
    Ok((
        field,
        ProjectionReport {
            nominal_mass: nominal,
            captured_fraction: captured,
            renormalization: scale,
            truncation_warning: captured < 1.0 - CAPTURE_WARNING,
        },
    ))
}

/// Radius beyond which a density below `exp(-rate |x|^power)` is under
/// `tolerance`.
pub fn truncation_radius(rate: f64, power: f64, tolerance: f64) -> Result<f64> {
    if !(rate > 0.0 && power > 0.0 && tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::Parameter(format!(
            "truncation radius needs rate > 0, power > 0 and tolerance in (0, 1), got ({rate}, {power}, {tolerance})"
        )));
    }
    Ok((-tolerance.ln() / rate).powf(1.0 / power))
}
