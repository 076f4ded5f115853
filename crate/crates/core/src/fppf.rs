//! The fixed-point power flow map, its iteration, and angle recovery.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::FppfError;
use crate::network::{branch_flows, BranchClass, Incidence, IncidenceSet, PowerNetwork, Side};
use crate::stiffness::StiffnessSet;

/// `h(v)`: `v_i v_j` on load-load branches, `v_j` on generator-load
/// branches (load end), 1 on generator-generator branches.
pub fn edge_voltage_products(net: &PowerNetwork, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        net.branch_count(),
        net.branches().iter().map(|br| match br.class {
            BranchClass::LoadLoad => v[br.from] * v[br.to],
            BranchClass::GenLoad => v[br.to],
            BranchClass::GenGen => 1.0,
        }),
    )
}

/// `1 - sqrt(1 - s^2)` written to avoid cancellation for small `s`.
fn one_minus_root(s: f64) -> Option<f64> {
    let arg = 1.0 - s * s;
    (arg >= 0.0).then(|| s * s / (1.0 + arg.sqrt()))
}

/// The fixed-point map of a network with fixed injections.
#[derive(Debug, Clone)]
pub struct FixedPointMap<'a> {
    net: &'a PowerNetwork,
    stiff: &'a StiffnessSet,
    q_load: DVector<f64>,
    flows: DVector<f64>,
    /// `p_e / D_e` per branch.
    ratio: DVector<f64>,
}

impl<'a> FixedPointMap<'a> {
    pub fn new(net: &'a PowerNetwork, stiff: &'a StiffnessSet) -> Result<Self, FppfError> {
        let flows = branch_flows(net, &net.p_injections())?;
        Ok(Self::with_flows(net, stiff, net.q_load(), flows))
    }

    pub fn with_flows(
        net: &'a PowerNetwork,
        stiff: &'a StiffnessSet,
        q_load: DVector<f64>,
        flows: DVector<f64>,
    ) -> Self {
        let ratio = flows.component_div(&stiff.d);
        FixedPointMap {
            net,
            stiff,
            q_load,
            flows,
            ratio,
        }
    }

    pub fn flows(&self) -> &DVector<f64> {
        &self.flows
    }

    /// `p_e / D_e` per branch.
    pub fn normalized_flows(&self) -> &DVector<f64> {
        &self.ratio
    }

    /// Evaluates `f(v)`. A domain failure reports iteration 0.
    pub fn eval(&self, v: &DVector<f64>) -> Result<DVector<f64>, FppfError> {
        let n = self.net.n_load();
        if v.len() != n || v.iter().any(|&x| !(x > 0.0)) {
            return Err(FppfError::BadVoltage { expected: n });
        }
        let mut rhs = DVector::from_iterator(n, (0..n).map(|i| -self.q_load[i] / v[i]));
        let d = &self.stiff.d;
        for (e, br) in self.net.branches().iter().enumerate() {
            let (i, k) = (br.from, br.to);
            match br.class {
                BranchClass::LoadLoad => {
                    let u = one_minus_root(self.ratio[e] / (v[i] * v[k]))
                        .ok_or(FppfError::SqrtDomain { branch: e, iteration: 0 })?;
                    rhs[i] += d[e] * v[k] * u;
                    rhs[k] += d[e] * v[i] * u;
                }
                BranchClass::GenLoad => {
                    let u = one_minus_root(self.ratio[e] / v[k])
                        .ok_or(FppfError::SqrtDomain { branch: e, iteration: 0 })?;
                    rhs[k] += d[e] * u;
                }
                BranchClass::GenGen => {}
            }
        }
        let mut out = self.stiff.solve_s(&rhs) * 0.25;
        out.add_scalar_mut(1.0);
        Ok(out)
    }

    /// Branch angle differences from `sin(eta) = p / (h(v) D)`.
    pub fn branch_angles(&self, v: &DVector<f64>) -> Result<DVector<f64>, FppfError> {
        let h = edge_voltage_products(self.net, v);
        let mut eta = DVector::zeros(h.len());
        for e in 0..h.len() {
            let sine = self.ratio[e] / h[e];
            if !(sine.abs() < 1.0) {
                return Err(FppfError::AngleDomain { branch: e, sine });
            }
            eta[e] = sine.asin();
        }
        Ok(eta)
    }
}

/// Literal matrix form of the map, assembled from incidence blocks.
/// [`FixedPointMap::eval`] computes the same quantity branch by branch.
pub fn fppf_map(
    v: &DVector<f64>,
    stiff: &StiffnessSet,
    inc: &IncidenceSet,
    q_load: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>, FppfError> {
    let n = stiff.v_oc.len();
    if v.len() != n || v.iter().any(|&x| !(x > 0.0)) {
        return Err(FppfError::BadVoltage { expected: n });
    }
    let ll = inc.class_range(BranchClass::LoadLoad);
    let gl = inc.class_range(BranchClass::GenLoad);
    let block = |which, class| inc.block(which, Side::Load, class);

    let d_ll = stiff.d.rows(ll.start, ll.len());
    let d_gl = stiff.d.rows(gl.start, gl.len());
    let p_ll = p.rows(ll.start, ll.len());
    let p_gl = p.rows(gl.start, gl.len());

    let from_v = block(Incidence::Plus, BranchClass::LoadLoad).transpose() * v;
    let to_v = block(Incidence::Minus, BranchClass::LoadLoad).transpose() * v;
    let h_ll = from_v.component_mul(&to_v);
    let h_gl = block(Incidence::Minus, BranchClass::GenLoad).transpose() * v;

    let u = |h: &DVector<f64>, d: nalgebra::DVectorView<f64>, p: nalgebra::DVectorView<f64>, offset| {
        let mut out = DVector::zeros(h.len());
        for e in 0..h.len() {
            let s = p[e] / (h[e] * d[e]);
            let arg = 1.0 - s * s;
            if arg < 0.0 {
                return Err(FppfError::SqrtDomain { branch: offset + e, iteration: 0 });
            }
            out[e] = 1.0 - arg.sqrt();
        }
        Ok(out)
    };
    let u_ll = u(&h_ll, d_ll, p_ll, ll.start)?;
    let u_gl = u(&h_gl, d_gl, p_gl, gl.start)?;

    let du_ll = DVector::from_iterator(ll.len(), (0..ll.len()).map(|e| d_ll[e] * u_ll[e]));
    let du_gl = DVector::from_iterator(gl.len(), (0..gl.len()).map(|e| d_gl[e] * u_gl[e]));

    let rhs = -q_load.component_div(v)
        + block(Incidence::Abs, BranchClass::GenLoad) * du_gl
        + block(Incidence::Plus, BranchClass::LoadLoad) * DMatrix::from_diagonal(&to_v) * &du_ll
        + block(Incidence::Minus, BranchClass::LoadLoad) * DMatrix::from_diagonal(&from_v) * &du_ll;
    let mut out = stiff.solve_s(&rhs) * 0.25;
    out.add_scalar_mut(1.0);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Stop when `max |v_{k+1} - v_k| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial iterate; `None` is the flat start `v = 1`.
    pub start: Option<DVector<f64>>,
    /// Record every iterate in [`FppfState::iterates`].
    pub keep_iterates: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 500,
            start: None,
            keep_iterates: false,
        }
    }
}

/// Outcome of a fixed-point iteration.
#[derive(Debug, Clone, Serialize)]
pub struct FppfState {
    /// Normalized PQ voltages `V_i / V_i*`.
    pub v: Vec<f64>,
    /// Branch flows in branch order.
    pub flows: Vec<f64>,
    pub iterations: usize,
    /// `max |v - f(v)|` at the returned iterate, if it could be evaluated.
    pub residual: Option<f64>,
    /// Step sizes `max |v_{k+1} - v_k|`.
    pub history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<f64>>>,
    pub converged: bool,
}

impl FppfState {
    pub fn voltage(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.v)
    }

    /// The shifted variable `x = v - 1`.
    pub fn deviation(&self) -> DVector<f64> {
        self.voltage().add_scalar(-1.0)
    }
}

/// Iterates `v <- f(v)` from `opts.start` (flat by default).
pub fn fppf_solve(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    opts: &SolveOptions,
) -> Result<FppfState, FppfError> {
    let map = FixedPointMap::new(net, stiff)?;
    solve_map(&map, opts)
}

pub fn solve_map(map: &FixedPointMap<'_>, opts: &SolveOptions) -> Result<FppfState, FppfError> {
    let n = map.net.n_load();
    let mut v = match &opts.start {
        Some(s) if s.len() != n => return Err(FppfError::BadVoltage { expected: n }),
        Some(s) => s.clone(),
        None => DVector::from_element(n, 1.0),
    };
    let mut history = Vec::new();
    let mut iterates = opts.keep_iterates.then(|| vec![v.as_slice().to_vec()]);
    let state = |v: &DVector<f64>, history: Vec<f64>, iterates, converged| {
        let residual = map.eval(v).ok().map(|fv| (fv - v).amax());
        FppfState {
            v: v.as_slice().to_vec(),
            flows: map.flows.as_slice().to_vec(),
            iterations: history.len(),
            residual,
            history,
            iterates,
            converged,
        }
    };

    for k in 1..=opts.max_iter {
        let next = match map.eval(&v) {
            Ok(next) => next,
            Err(FppfError::SqrtDomain { branch, .. }) => {
                return Err(FppfError::SqrtDomain { branch, iteration: k })
            }
            Err(FppfError::BadVoltage { .. }) => {
                return Err(FppfError::NotConverged(Box::new(state(&v, history, iterates, false))))
            }
            Err(err) => return Err(err),
        };
        if next.iter().any(|&x| !(x > 0.0)) {
            return Err(FppfError::NotConverged(Box::new(state(&v, history, iterates, false))));
        }
        let step = (&next - &v).amax();
        v = next;
        history.push(step);
        if let Some(it) = iterates.as_mut() {
            it.push(v.as_slice().to_vec());
        }
        if step <= opts.tol {
            return Ok(state(&v, history, iterates, true));
        }
    }
    Err(FppfError::NotConverged(Box::new(state(&v, history, iterates, false))))
}

/// A full power flow solution in bus and branch order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowSolution {
    /// Bus angles in radians; the first PV bus is the reference.
    pub theta: Vec<f64>,
    /// Voltage magnitudes at every bus, PQ buses first.
    pub voltage: Vec<f64>,
    /// Branch angle differences `theta_from - theta_to`.
    pub eta: Vec<f64>,
    /// Reactive injections at PV buses.
    pub q_pv: Vec<f64>,
}

impl PowerFlowSolution {
    /// PQ voltage magnitudes.
    pub fn v_load(&self, net: &PowerNetwork) -> &[f64] {
        &self.voltage[..net.n_load()]
    }
}

/// Index of the angle reference: the first PV bus, or bus 0 without one.
pub fn reference_bus(net: &PowerNetwork) -> usize {
    if net.n_gen() > 0 {
        net.n_load()
    } else {
        0
    }
}

/// Solves `A^T theta = eta` on the tree with `theta_ref = 0`.
pub fn angles_from_branches(net: &PowerNetwork, eta: &DVector<f64>) -> DVector<f64> {
    let nb = net.bus_count();
    let mut theta = DVector::zeros(nb);
    if nb == 0 {
        return theta;
    }
    let adj = net.adjacency();
    let mut seen = vec![false; nb];
    let root = reference_bus(net);
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &(e, w) in &adj[u] {
            if seen[w] {
                continue;
            }
            let br = &net.branches()[e];
            theta[w] = if br.from == u {
                theta[u] - eta[e]
            } else {
                theta[u] + eta[e]
            };
            seen[w] = true;
            stack.push(w);
        }
    }
    theta
}

/// Assembles a solution from bus angles and all bus voltage magnitudes.
pub fn solution_from_polar(
    net: &PowerNetwork,
    theta: &DVector<f64>,
    voltage: &DVector<f64>,
) -> PowerFlowSolution {
    let eta = net
        .branches()
        .iter()
        .map(|br| theta[br.from] - theta[br.to])
        .collect();
    let mut q = vec![0.0; net.bus_count()];
    for (k, bus) in net.buses().iter().enumerate() {
        q[k] = -bus.b_shunt * voltage[k] * voltage[k];
    }
    for br in net.branches() {
        let (i, j) = (br.from, br.to);
        let c = br.coupling();
        let vv = voltage[i] * voltage[j];
        let diff = theta[i] - theta[j];
        // each branch adds b to B_ii, so -B_ii V_i^2 gains c V_i^2
        q[i] += c * voltage[i] * voltage[i] - vv * c * diff.cos();
        q[j] += c * voltage[j] * voltage[j] - vv * c * diff.cos();
    }
    PowerFlowSolution {
        theta: theta.as_slice().to_vec(),
        voltage: voltage.as_slice().to_vec(),
        eta,
        q_pv: q[net.n_load()..].to_vec(),
    }
}

/// Bus voltages `V_L = [V_L*] v` with PV setpoints appended.
pub fn bus_voltages(net: &PowerNetwork, stiff: &StiffnessSet, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        net.bus_count(),
        (0..net.bus_count()).map(|k| {
            net.setpoint(k)
                .unwrap_or_else(|| v[k] * stiff.v_oc[k])
        }),
    )
}

/// Converts a fixed point into angles and voltages.
pub fn recover_angles(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    state: &FppfState,
) -> Result<PowerFlowSolution, FppfError> {
    let v = state.voltage();
    let flows = DVector::from_column_slice(&state.flows);
    let map = FixedPointMap::with_flows(net, stiff, net.q_load(), flows);
    let eta = map.branch_angles(&v)?;
    let theta = angles_from_branches(net, &eta);
    let mut sol = solution_from_polar(net, &theta, &bus_voltages(net, stiff, &v));
    // keep the recovered differences exactly rather than re-deriving them
    sol.eta = eta.as_slice().to_vec();
    Ok(sol)
}

/// Power balance mismatches at all buses (active) and PQ buses (reactive).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub active: Vec<f64>,
    pub reactive: Vec<f64>,
}

impl Residual {
    pub fn max_abs(&self) -> f64 {
        self.active
            .iter()
            .chain(&self.reactive)
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// `P_i - sum_j V_i V_j B_ij sin(theta_i - theta_j)` at every bus and
/// `Q_i + sum_j V_i V_j B_ij cos(theta_i - theta_j)` at PQ buses.
pub fn residual(net: &PowerNetwork, sol: &PowerFlowSolution) -> Residual {
    let theta = DVector::from_column_slice(&sol.theta);
    let voltage = DVector::from_column_slice(&sol.voltage);
    residual_polar(net, &theta, &voltage)
}

pub fn residual_polar(net: &PowerNetwork, theta: &DVector<f64>, voltage: &DVector<f64>) -> Residual {
    let n = net.n_load();
    let mut active: Vec<f64> = net.buses().iter().map(|b| b.p).collect();
    let q = net.q_load();
    let mut reactive: Vec<f64> = (0..n)
        .map(|i| q[i] + net.buses()[i].b_shunt * voltage[i] * voltage[i])
        .collect();
    for br in net.branches() {
        let (i, j) = (br.from, br.to);
        let b = br.b;
        let vv = voltage[i] * voltage[j];
        let diff = theta[i] - theta[j];
        // B_ij = -b off the diagonal
        active[i] -= -b * vv * diff.sin();
        active[j] -= b * vv * diff.sin();
        if i < n {
            reactive[i] += b * voltage[i] * voltage[i] - b * vv * diff.cos();
        }
        if j < n {
            reactive[j] += b * voltage[j] * voltage[j] - b * vv * diff.cos();
        }
    }
    Residual { active, reactive }
}
