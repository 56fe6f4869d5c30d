//! Moment and density bounds for Fokker–Planck–Kolmogorov equations, and a
//! finite-volume solver to check them against.

pub mod coefficients;
pub mod error;
pub mod lyapunov;
pub mod quadrature;
pub mod roots;
pub mod solver;
pub mod testfn;
pub mod verify;

pub use coefficients::{
    certify_dissipativity, ellipticity_extremes, Certificate, Certification, CertificationFailure, CoefficientField,
    DivergenceMode, LyapunovExpression, NormConvention, Region, Sampling, SpectralBounds, StepRule,
};
pub use error::{Error, Result};
pub use lyapunov::{EtaPoint, EtaProfile, GrowthFunction, RateFunctions};
pub use solver::{DensityField, Grid, InitialMeasure, SolverConfig, TimeStep};
pub use testfn::TestFunction;
pub use verify::{
    check_envelope, decay_exponent_estimate, fit_envelope_constants, local_ellipticity, phi_transform,
    pointwise_bound_rhs, DecayModel, EllipticityWindow, EnvelopeSpec, ExponentEstimate, PhiWeight, VerificationReport,
};
