//! Turning a validated spec into core objects.

use std::sync::Arc;

use fpk_core::solver::{project_initial_measure, ProjectionReport};
use fpk_core::{CoefficientField, DensityField, Grid, InitialMeasure, SolverConfig};
use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::AppError;
use crate::expr::Compiled;
use crate::spec::{DiffusionSpec, InitialSpec, ProblemSpec};

fn scalar(c: &Compiled) -> impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static {
    let c = Arc::new(c.clone());
    move |x, t| c.eval(x, t).unwrap_or(f64::NAN)
}

fn vector(cs: &[Compiled]) -> impl Fn(&[f64], f64) -> DVector<f64> + Send + Sync + 'static {
    let cs: Arc<Vec<Compiled>> = Arc::new(cs.to_vec());
    move |x, t| DVector::from_iterator(cs.len(), cs.iter().map(|c| c.eval(x, t).unwrap_or(f64::NAN)))
}

impl ProblemSpec {
    /// Coefficient field backed by the interpreted expressions. Evaluation
    /// errors surface as non-finite values; [`ProblemSpec::probe`] reports
    /// them with their location beforehand.
    pub fn field(&self) -> CoefficientField {
        let coeffs = &self.coefficients;
        let d = self.dimension;
        let drift = vector(&coeffs.drift);
        let potential = scalar(&coeffs.potential);
        let mut field = match &coeffs.diffusion {
            DiffusionSpec::Isotropic { a } => CoefficientField::isotropic(d, scalar(a), drift, potential),
            DiffusionSpec::Matrix { entries } => {
                let entries: Arc<Vec<Vec<Compiled>>> = Arc::new(entries.clone());
                let matrix = move |x: &[f64], t: f64| {
                    DMatrix::from_fn(d, d, |i, j| entries[i][j].eval(x, t).unwrap_or(f64::NAN))
                };
                CoefficientField::new(d, matrix, drift, potential)
            }
        };
        if let Some(div) = &coeffs.divergence {
            field = field.with_analytic_divergence(vector(div));
        }
        if coeffs.uses_time {
            field = field.time_dependent();
        }
        field
    }

    pub fn grid(&self) -> Result<Grid, AppError> {
        Ok(Grid::new(self.grid.extents.clone(), self.grid.cells.clone())?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        // Times past the end collapse onto it; duplicates would repeat a snapshot.
        let mut times: Vec<f64> = s
            .snapshots
            .times(s.end_time)
            .into_iter()
            .map(|t| t.min(s.end_time))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        SolverConfig::new(s.time_step, s.end_time)
            .with_snapshots(times)
            .with_scheme(s.scheme)
            .with_boundary(s.boundary)
            .with_reaction(s.reaction)
    }

    /// Projects the initial measure; a density profile is rescaled to its
    /// declared mass.
    pub fn initial_state(&self, grid: &Grid) -> Result<(DensityField, ProjectionReport), AppError> {
        let measure = match &self.initial {
            InitialSpec::Gaussian { mean, std, mass } => {
                let d = mean.len();
                InitialMeasure::Gaussian {
                    mean: mean.clone(),
                    covariance: DMatrix::from_diagonal_element(d, d, std * std),
                    mass: *mass,
                }
            }
            InitialSpec::PointMass { center, width, mass } => InitialMeasure::PointMassSmoothed {
                center: center.clone(),
                width: *width,
                mass: *mass,
            },
            InitialSpec::Density { density, .. } => {
                for i in 0..grid.len() {
                    let x = grid.center(i);
                    density.eval(&x, 0.0).map_err(|source| AppError::Evaluation {
                        key: "[initial] density".into(),
                        x,
                        t: 0.0,
                        source,
                    })?;
                }
                let profile = scalar(density);
                InitialMeasure::grid_function(move |x| profile(x, 0.0))
            }
        };
        let (mut state, report) = project_initial_measure(&measure, grid)?;
        if let InitialSpec::Density { mass, .. } = &self.initial {
            let total = state.mass();
            if !(total > 0.0) {
                return Err(AppError::Input("initial density has no mass on the grid".into()));
            }
            let scale = mass / total;
            state.values.iter_mut().for_each(|v| *v *= scale);
        }
        Ok((state, report))
    }

    /// Evaluates every coefficient expression at the cell centres (and at the
    /// end time when time enters) and reports the first failure.
    pub fn probe(&self, grid: &Grid) -> Result<(), AppError> {
        let c = &self.coefficients;
        let mut named: Vec<(String, &Compiled)> = Vec::new();
        match &c.diffusion {
            DiffusionSpec::Isotropic { a } => named.push(("a".into(), a)),
            DiffusionSpec::Matrix { entries } => {
                for (i, row) in entries.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        named.push((format!("a{}{}", i + 1, j + 1), e));
                    }
                }
            }
        }
        for (i, b) in c.drift.iter().enumerate() {
            named.push((format!("b{}", i + 1), b));
        }
        named.push(("c".into(), &c.potential));
        if let Some(div) = &c.divergence {
            for (i, e) in div.iter().enumerate() {
                named.push((format!("div{}", i + 1), e));
            }
        }
        let times: &[f64] = if c.uses_time {
            &[0.0, self.solver.end_time]
        } else {
            &[0.0]
        };
        for i in 0..grid.len() {
            let x = grid.center(i);
            for &t in times {
                for (key, e) in &named {
                    if let Err(source) = e.eval(&x, t) {
                        return Err(AppError::Evaluation {
                            key: format!("[coefficients] {key}"),
                            x,
                            t,
                            source,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the normalized spec.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use crate::spec::parse_spec;

    #[test]
    fn ou_preset_builds_the_expected_field() {
        let spec = parse_spec("[problem]\npreset = \"ou1d\"\n").unwrap();
        let field = spec.field();
        assert_eq!(field.diffusion(&[0.3], 0.0).unwrap()[(0, 0)], 1.0);
        assert_eq!(field.drift(&[0.3], 0.0).unwrap()[0], -0.3);
        assert_eq!(field.potential(&[0.3], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn probe_locates_evaluation_failures() {
        let spec = parse_spec("[problem]\ndimension = 1\n[coefficients]\na = \"1\"\nc = \"ln(abs(x1) - 1)\"\n[grid]\nextent = 2\ncells = 8\n").unwrap();
        let err = spec.probe(&spec.grid().unwrap()).unwrap_err().to_string();
        assert!(err.contains("[coefficients] c"), "{err}");
    }

    #[test]
    fn density_initial_data_is_normalized() {
        let spec = parse_spec(
            "[problem]\ndimension = 1\n[coefficients]\na = \"1\"\n[initial]\nkind = \"density\"\ndensity = \"exp(-x1^2)\"\nmass = 2\n",
        )
        .unwrap();
        let grid = spec.grid().unwrap();
        let (state, _) = spec.initial_state(&grid).unwrap();
        assert!((state.mass() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn digest_tracks_content() {
        let a = parse_spec("[problem]\npreset = \"ou1d\"\n").unwrap();
        let b = parse_spec("[problem]\npreset = \"ou1d\"\n[grid]\ncells = 128\n").unwrap();
        assert_eq!(a.digest(), a.digest());
        assert_ne!(a.digest(), b.digest());
    }
}
