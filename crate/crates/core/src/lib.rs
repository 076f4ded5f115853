//! Fixed-point power flow for lossless radial networks.
//!
//! The crate solves the lossless AC power flow equations on radial
//! networks by iterating a fixed-point map in the normalized PQ voltages,
//! recovers phase angles from the resulting branch flows, and issues
//! parametric solvability certificates with guaranteed voltage and angle
//! bounds. A polar Newton-Raphson solver and a brute-force residual scanner
//! serve as independent cross-checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {:e})", $tol);
    }};
}

pub mod case;
pub mod error;
pub mod fppf;
pub mod network;
pub mod oracle;
pub mod solvability;
pub mod stiffness;
pub mod synthetic;

pub use case::{load_case, parse_case, CaseFile};
pub use error::{CaseError, CertificateError, FppfError, NetworkError, OracleError, StiffnessError};
pub use fppf::{
    edge_voltage_products, fppf_map, fppf_solve, recover_angles, residual, FixedPointMap,
    FppfState, PowerFlowSolution, SolveOptions,
};
pub use network::{
    branch_flows, susceptance_matrix, validate_network, Branch, BranchClass, Bus, BusKind,
    IncidenceSet, Line, PowerNetwork, ValidationReport,
};
pub use oracle::{grid_scan, newton_solve, NewtonConfig, NewtonReport};
pub use solvability::{
    certify, certify_general, certify_no_pqpq, loading_profile, quartic_interval,
    saddle_node_check, two_bus_solve, Certificate, LoadingProfile, TwoBusResult,
};
pub use stiffness::StiffnessSet;
