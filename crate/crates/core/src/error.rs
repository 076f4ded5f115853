use thiserror::Error;

use crate::network::ValidationReport;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("branch {index} references unknown bus id {bus}")]
    UnknownBus { index: usize, bus: usize },
    #[error("branch {0} is a self-loop")]
    SelfLoop(usize),
    #[error("branches {first} and {second} connect the same pair of buses")]
    ParallelBranch { first: usize, second: usize },
    #[error("PV bus {0} needs a positive, finite voltage setpoint")]
    BadSetpoint(usize),
    #[error("network is not radial (connected and acyclic)")]
    NotRadial,
    #[error("active injections are unbalanced: sum = {sum:e}")]
    InfeasibleInjections { sum: f64 },
    #[error("injection vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("network failed validation:\n{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("reading case file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing case file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bus {id}: {msg}")]
    Bus { id: usize, msg: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Error)]
pub enum StiffnessError {
    #[error("B_LL is not negative definite")]
    SingularBll,
    #[error("nodal stiffness matrix is not negative definite")]
    SingularS,
    #[error("open-circuit voltage at load bus {bus} is not positive ({value})")]
    NonPositiveOpenCircuit { bus: usize, value: f64 },
}

#[derive(Debug, Error)]
pub enum FppfError {
    #[error("square-root argument negative on branch {branch} (iteration {iteration}); iterate left the solvable region")]
    SqrtDomain { branch: usize, iteration: usize },
    #[error("no convergence after {} iterations (last step {:e})", .0.iterations, .0.history.last().copied().unwrap_or(f64::NAN))]
    NotConverged(Box<crate::fppf::FppfState>),
    #[error("branch {branch} needs |sin(eta)| = {sine} >= 1; no solution with angle differences inside (-pi/2, pi/2)")]
    AngleDomain { branch: usize, sine: f64 },
    #[error("voltage vector must be strictly positive with length {expected}")]
    BadVoltage { expected: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Stiffness(#[from] StiffnessError),
}

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("network has {0} PQ-PQ branches; this certificate requires none")]
    LoadLoadBranches(usize),
    #[error("load bus {bus} has Q = {q} > 0; certificates assume inductive loads")]
    CapacitiveLoad { bus: usize, q: f64 },
    #[error("loading parameter must be finite and nonnegative, got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid scan supports at most {limit} PQ buses, network has {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("scan box list has length {got}, expected {expected}")]
    BoxMismatch { expected: usize, got: usize },
    #[error("network has no PV bus to act as angle reference")]
    NoReference,
    #[error(transparent)]
    Stiffness(#[from] StiffnessError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}
