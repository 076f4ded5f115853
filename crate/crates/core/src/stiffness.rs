//! Open-circuit voltages and the branch/nodal stiffness matrices.

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};

use crate::error::StiffnessError;
use crate::network::{
    susceptance_matrix, BranchClass, Incidence, IncidenceSet, PowerNetwork, Side,
    SusceptanceMatrix,
};

/// Absolute tolerance used for positivity and row-sum checks.
pub const STIFFNESS_TOL: f64 = 1e-11;

/// `V_L* = -B_LL^{-1} B_LG V_G`, the PQ voltages with zero injections.
pub fn open_circuit_voltages(
    net: &PowerNetwork,
    b: &SusceptanceMatrix,
) -> Result<DVector<f64>, StiffnessError> {
    let n = net.n_load();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = Cholesky::new(-b.ll().into_owned()).ok_or(StiffnessError::SingularBll)?;
    let v_oc = chol.solve(&(b.lg() * net.v_gen()));
    if let Some((bus, &value)) = v_oc.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(StiffnessError::NonPositiveOpenCircuit {
            bus: net.buses()[bus].id,
            value,
        });
    }
    Ok(v_oc)
}

/// Reference voltage of a bus: `V_i*` at loads, the setpoint at generators.
fn reference_voltage(net: &PowerNetwork, v_oc: &DVector<f64>, bus: usize) -> f64 {
    net.setpoint(bus).unwrap_or_else(|| v_oc[bus])
}

/// Diagonal of the branch stiffness matrix, `V_i* V_j* B_ij` per branch.
pub fn branch_stiffness(net: &PowerNetwork, v_oc: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        net.branch_count(),
        net.branches().iter().map(|br| {
            reference_voltage(net, v_oc, br.from) * reference_voltage(net, v_oc, br.to) * br.coupling()
        }),
    )
}

/// `S = 1/4 [V_L*] B_LL [V_L*]`.
pub fn nodal_stiffness(b: &SusceptanceMatrix, v_oc: &DVector<f64>) -> DMatrix<f64> {
    let scale = DMatrix::from_diagonal(v_oc);
    &scale * b.ll() * &scale * 0.25
}

/// `N = -1/4 S^{-1} |A|_L^{gl} D_gl`.
pub fn normalized_coupling(
    s: &DMatrix<f64>,
    d_gl: &DVector<f64>,
    abs_l_gl: DMatrixView<'_, f64>,
) -> Result<DMatrix<f64>, StiffnessError> {
    if s.nrows() == 0 {
        return Ok(DMatrix::zeros(0, d_gl.len()));
    }
    let chol = Cholesky::new(-s.clone()).ok_or(StiffnessError::SingularS)?;
    let rhs = abs_l_gl * DMatrix::from_diagonal(d_gl);
    // -1/4 S^{-1} X = 1/4 (-S)^{-1} X
    Ok(chol.solve(&rhs) * 0.25)
}

/// Every stiffness quantity of a network, computed once.
#[derive(Debug, Clone)]
pub struct StiffnessSet {
    pub v_oc: DVector<f64>,
    /// Diagonal of `D`, in branch order.
    pub d: DVector<f64>,
    pub s: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    neg_s: Option<Cholesky<f64, Dyn>>,
}

impl StiffnessSet {
    pub fn compute(net: &PowerNetwork) -> Result<Self, StiffnessError> {
        let b = susceptance_matrix(net);
        let inc = IncidenceSet::build(net);
        Self::from_parts(net, &b, &inc)
    }

    pub fn from_parts(
        net: &PowerNetwork,
        b: &SusceptanceMatrix,
        inc: &IncidenceSet,
    ) -> Result<Self, StiffnessError> {
        let v_oc = open_circuit_voltages(net, b)?;
        let d = branch_stiffness(net, &v_oc);
        let s = nodal_stiffness(b, &v_oc);
        let gl = net.class_range(BranchClass::GenLoad);
        let d_gl = d.rows(gl.start, gl.len()).into_owned();
        let coupling = normalized_coupling(
            &s,
            &d_gl,
            inc.block(Incidence::Abs, Side::Load, BranchClass::GenLoad),
        )?;
        let neg_s = if s.nrows() == 0 {
            None
        } else {
            Some(Cholesky::new(-s.clone()).ok_or(StiffnessError::SingularS)?)
        };
        Ok(StiffnessSet {
            v_oc,
            d,
            s,
            coupling,
            neg_s,
        })
    }

    /// `S^{-1} rhs` via the stored factorization.
    pub fn solve_s(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.neg_s {
            Some(chol) => -chol.solve(rhs),
            None => DVector::zeros(0),
        }
    }

    /// Dense `S^{-1}`; used where the certificate needs entrywise signs.
    pub fn s_inverse(&self) -> DMatrix<f64> {
        match &self.neg_s {
            Some(chol) => -chol.inverse(),
            None => DMatrix::zeros(0, 0),
        }
    }

    /// `max_i |(N 1)_i - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        self.coupling
            .column_sum()
            .iter()
            .map(|r| (r - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_coupling(&self) -> f64 {
        self.coupling.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when `N` is row-stochastic to [`STIFFNESS_TOL`].
    pub fn is_row_stochastic(&self) -> bool {
        self.row_sum_defect() < STIFFNESS_TOL && self.min_coupling() >= -STIFFNESS_TOL
    }

    /// Reference voltage of any bus (`V_i*` or the PV setpoint).
    pub fn reference_voltage(&self, net: &PowerNetwork, bus: usize) -> f64 {
        reference_voltage(net, &self.v_oc, bus)
    }
}
