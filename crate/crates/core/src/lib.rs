//! Charged-particle dynamics in time-dependent uniform magnetic fields.
//!
//! The planar motion is propagated through 2×2 symplectic transfer matrices
//! combined with a rotation of the plane. On top of that sit stability maps
//! over biharmonic amplitudes, inverse pulse design from a generating
//! function, multi-stage protocols with external forces, and a few
//! laboratory-scale estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::needless_range_loop)]

pub mod design;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod linalg;
pub mod perturb;
pub mod protocol;
pub mod pulse;
pub mod stability;

pub use design::{
    beta_from_theta, solve_theta, symmetric_flow, validate_design, validate_theta, ExactPulse,
    Regime, SignProfile, SineSeries, ThetaDesign, ThetaFunction, ValidityReport,
};
pub use dynamics::{
    angular_momentum, compose_planar, fuzzy_centre, integrate_transfer, planar_map,
    propagate_trajectory, rotation_phase, FuzzyCentre, PlanarMap, ToleranceSpec, TrajectoryRecord,
    TransferMatrix,
};
pub use error::{Error, Result};
pub use field::{
    correction_coefficient, field_with_corrections, lab_scaling, rotating_cylinder_field,
    CorrectionSeries, FieldProfile, PhysicalConstants, ScalingRow,
};
pub use linalg::{Mat2, Mat4, PhaseVector};
pub use perturb::{forced_squeeze_factors, perturbed_run, DriftReport, ForceSpec, ForcedFactors};
pub use protocol::{
    find_loop_period, protocol_map, reversed, run_protocol, ProtocolOptions, ProtocolResult, Stage,
};
pub use pulse::{Convention, Interval, Pulse, PulseShape, RotationConvention};
pub use stability::{
    classify, find_squeeze_points, refine_threshold, scan_strutt, threshold_kind, CellClass,
    CellProbe, CellResult, FreeEvolutionKind, FreeKind, ScanGrid, ScanOptions, SqueezePoint,
    StruttMap,
};
