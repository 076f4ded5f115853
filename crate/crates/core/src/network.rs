//! Lossless radial network model.
//!
//! Buses are stored with all PQ (load) buses first and all PV (generator)
//! buses after them, so every matrix built from a [`PowerNetwork`] has the
//! load/generator block structure without further permutation. Branches are
//! grouped load-load, generator-load, generator-generator, and every
//! generator-load branch is oriented from the generator to the load.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::NetworkError;

/// Default tolerance on the active power balance, per unit.
pub const DEFAULT_BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusKind {
    /// Fixed active and reactive injection.
    Pq { q: f64 },
    /// Fixed active injection and voltage magnitude.
    Pv { v_set: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// External label, as used in case files.
    pub id: usize,
    pub kind: BusKind,
    /// Active power injection, per unit.
    pub p: f64,
    /// Shunt susceptance, per unit.
    pub b_shunt: f64,
}

impl Bus {
    pub fn pq(id: usize, p: f64, q: f64) -> Self {
        Bus {
            id,
            kind: BusKind::Pq { q },
            p,
            b_shunt: 0.0,
        }
    }

    pub fn pv(id: usize, p: f64, v_set: f64) -> Self {
        Bus {
            id,
            kind: BusKind::Pv { v_set },
            p,
            b_shunt: 0.0,
        }
    }

    pub fn with_shunt(mut self, b_shunt: f64) -> Self {
        self.b_shunt = b_shunt;
        self
    }

    pub fn is_load(&self) -> bool {
        matches!(self.kind, BusKind::Pq { .. })
    }
}

/// A branch as given by the user, referring to external bus ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series susceptance, per unit. Inductive lines have `b < 0`.
    pub b: f64,
}

impl Line {
    pub fn new(from: usize, to: usize, b: f64) -> Self {
        Line { from, to, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchClass {
    LoadLoad,
    GenLoad,
    GenGen,
}

/// A normalized branch; `from` and `to` are internal bus indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub b: f64,
    pub class: BranchClass,
}

impl Branch {
    /// Off-diagonal susceptance entry `B_ij = -b_ij`.
    pub fn coupling(&self) -> f64 {
        -self.b
    }

    pub fn other(&self, bus: usize) -> usize {
        if bus == self.from {
            self.to
        } else {
            self.from
        }
    }

    /// Entry of the oriented incidence matrix at `bus` (+1 sending, -1 receiving).
    pub fn incidence(&self, bus: usize) -> f64 {
        if bus == self.from {
            1.0
        } else if bus == self.to {
            -1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    n_load: usize,
    n_ll: usize,
    n_gl: usize,
}

impl PowerNetwork {
    /// Builds a network, reordering buses (PQ first) and branches (LL, GL,
    /// GG) and orienting generator-load branches towards the load.
    ///
    /// Structural defects that make the model meaningless (unknown ids,
    /// self-loops, parallel branches, missing setpoints) are rejected here;
    /// everything else is left to [`validate_network`].
    pub fn new(base_mva: f64, buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self, NetworkError> {
        let mut seen = HashSet::new();
        for bus in &buses {
            if !seen.insert(bus.id) {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
            if let BusKind::Pv { v_set } = bus.kind {
                if !(v_set.is_finite() && v_set > 0.0) {
                    return Err(NetworkError::BadSetpoint(bus.id));
                }
            }
        }

        let (mut ordered, gens): (Vec<Bus>, Vec<Bus>) = buses.into_iter().partition(Bus::is_load);
        let n_load = ordered.len();
        ordered.extend(gens);
        let index: HashMap<usize, usize> =
            ordered.iter().enumerate().map(|(k, b)| (b.id, k)).collect();

        let mut pairs = HashMap::new();
        let mut branches = Vec::with_capacity(lines.len());
        for (k, line) in lines.iter().enumerate() {
            let lookup = |id: usize| {
                index
                    .get(&id)
                    .copied()
                    .ok_or(NetworkError::UnknownBus { index: k, bus: id })
            };
            let (mut from, mut to) = (lookup(line.from)?, lookup(line.to)?);
            if from == to {
                return Err(NetworkError::SelfLoop(k));
            }
            if let Some(&first) = pairs.get(&(from.min(to), from.max(to))) {
                return Err(NetworkError::ParallelBranch { first, second: k });
            }
            pairs.insert((from.min(to), from.max(to)), k);

            let class = match (from < n_load, to < n_load) {
                (true, true) => BranchClass::LoadLoad,
                (false, false) => BranchClass::GenGen,
                _ => BranchClass::GenLoad,
            };
            if class == BranchClass::GenLoad && from < n_load {
                std::mem::swap(&mut from, &mut to);
            }
            branches.push(Branch {
                from,
                to,
                b: line.b,
                class,
            });
        }
        // stable: keeps the user's order inside each class
        branches.sort_by_key(|b| b.class);
        let n_ll = branches
            .iter()
            .filter(|b| b.class == BranchClass::LoadLoad)
            .count();
        let n_gl = branches
            .iter()
            .filter(|b| b.class == BranchClass::GenLoad)
            .count();

        Ok(PowerNetwork {
            base_mva,
            buses: ordered,
            branches,
            n_load,
            n_ll,
            n_gl,
        })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Number of PQ buses.
    pub fn n_load(&self) -> usize {
        self.n_load
    }

    /// Number of PV buses.
    pub fn n_gen(&self) -> usize {
        self.buses.len() - self.n_load
    }

    pub fn is_load(&self, bus: usize) -> bool {
        bus < self.n_load
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Index range of the branches in `class`.
    pub fn class_range(&self, class: BranchClass) -> Range<usize> {
        match class {
            BranchClass::LoadLoad => 0..self.n_ll,
            BranchClass::GenLoad => self.n_ll..self.n_ll + self.n_gl,
            BranchClass::GenGen => self.n_ll + self.n_gl..self.branches.len(),
        }
    }

    pub fn class_count(&self, class: BranchClass) -> usize {
        self.class_range(class).len()
    }

    /// Active injections `P` for all buses.
    pub fn p_injections(&self) -> DVector<f64> {
        DVector::from_iterator(self.buses.len(), self.buses.iter().map(|b| b.p))
    }

    /// Reactive injections `Q_L` at the PQ buses.
    pub fn q_load(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_load,
            self.buses[..self.n_load].iter().map(|b| match b.kind {
                BusKind::Pq { q } => q,
                BusKind::Pv { .. } => unreachable!("load block holds PQ buses only"),
            }),
        )
    }

    /// PV voltage setpoints `V_G`.
    pub fn v_gen(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_gen(),
            self.buses[self.n_load..].iter().map(|b| match b.kind {
                BusKind::Pv { v_set } => v_set,
                BusKind::Pq { .. } => unreachable!("generator block holds PV buses only"),
            }),
        )
    }

    pub fn setpoint(&self, bus: usize) -> Option<f64> {
        match self.buses[bus].kind {
            BusKind::Pv { v_set } => Some(v_set),
            BusKind::Pq { .. } => None,
        }
    }

    /// Copy of the network with new active injections (all buses) and
    /// reactive injections (PQ buses).
    pub fn with_injections(
        &self,
        p: &DVector<f64>,
        q_load: &DVector<f64>,
    ) -> Result<PowerNetwork, NetworkError> {
        if p.len() != self.buses.len() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.buses.len(),
                got: p.len(),
            });
        }
        if q_load.len() != self.n_load {
            return Err(NetworkError::DimensionMismatch {
                expected: self.n_load,
                got: q_load.len(),
            });
        }
        let mut net = self.clone();
        for (k, bus) in net.buses.iter_mut().enumerate() {
            bus.p = p[k];
            if let BusKind::Pq { q } = &mut bus.kind {
                *q = q_load[k];
            }
        }
        Ok(net)
    }

    /// Multiplies every active and reactive injection by `factor`.
    pub fn scale_loading(&self, factor: f64) -> PowerNetwork {
        let mut net = self.clone();
        for bus in &mut net.buses {
            bus.p *= factor;
            if let BusKind::Pq { q } = &mut bus.kind {
                *q *= factor;
            }
        }
        net
    }

    /// Multiplies PV setpoints by `kappa` and all injections by `kappa^2`.
    /// The normalized power flow problem is unchanged by this map.
    pub fn rescale_voltage(&self, kappa: f64) -> PowerNetwork {
        let mut net = self.scale_loading(kappa * kappa);
        for bus in &mut net.buses {
            if let BusKind::Pv { v_set } = &mut bus.kind {
                *v_set *= kappa;
            }
        }
        net
    }

    /// The user-facing branch list with external ids.
    pub fn lines(&self) -> Vec<Line> {
        self.branches
            .iter()
            .map(|br| Line::new(self.buses[br.from].id, self.buses[br.to].id, br.b))
            .collect()
    }

    /// Per-bus adjacency as `(branch, neighbour)` pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.buses.len()];
        for (e, br) in self.branches.iter().enumerate() {
            adj[br.from].push((e, br.to));
            adj[br.to].push((e, br.from));
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    CycleDetected,
    Disconnected { components: usize },
    NoGenerator,
    NonInductiveBranch { branch: usize, b: f64 },
    CapacitiveLoad { bus: usize, q: f64 },
    Unbalanced { sum: f64 },
}

impl Issue {
    pub fn severity(&self) -> Severity {
        match self {
            Issue::CapacitiveLoad { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::CycleDetected => write!(f, "cycle detected"),
            Issue::Disconnected { components } => {
                write!(f, "network is disconnected ({components} components)")
            }
            Issue::NoGenerator => write!(f, "no PV bus present"),
            Issue::NonInductiveBranch { branch, b } => {
                write!(f, "branch {branch} has non-negative series susceptance {b}")
            }
            Issue::CapacitiveLoad { bus, q } => {
                write!(f, "inductive-load assumption violated at bus {bus} (Q = {q})")
            }
            Issue::Unbalanced { sum } => write!(f, "active injections sum to {sum:e}, not zero"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// True when nothing worse than a warning was found.
    pub fn accepted(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity() == Severity::Warning)
    }

    pub fn into_result(self) -> Result<Self, NetworkError> {
        if self.accepted() {
            Ok(self)
        } else {
            Err(NetworkError::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            let tag = match issue.severity() {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{tag}: {issue}")?;
        }
        Ok(())
    }
}

pub fn validate_network(net: &PowerNetwork) -> ValidationReport {
    validate_network_with_tol(net, DEFAULT_BALANCE_TOL)
}

pub fn validate_network_with_tol(net: &PowerNetwork, balance_tol: f64) -> ValidationReport {
    let mut issues = Vec::new();
    let nb = net.bus_count();

    let mut parent: Vec<usize> = (0..nb).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut cycle = false;
    for br in net.branches() {
        let (a, b) = (find(&mut parent, br.from), find(&mut parent, br.to));
        if a == b {
            cycle = true;
        } else {
            parent[a] = b;
        }
    }
    if cycle {
        issues.push(Issue::CycleDetected);
    }
    let components = (0..nb).filter(|&x| find(&mut parent, x) == x).count();
    if components > 1 {
        issues.push(Issue::Disconnected { components });
    }
    if net.n_gen() == 0 {
        issues.push(Issue::NoGenerator);
    }
    for (e, br) in net.branches().iter().enumerate() {
        if !(br.b < 0.0) {
            issues.push(Issue::NonInductiveBranch { branch: e, b: br.b });
        }
    }
    for bus in net.buses() {
        if let BusKind::Pq { q } = bus.kind {
            if q > 0.0 {
                issues.push(Issue::CapacitiveLoad { bus: bus.id, q });
            }
        }
    }
    let sum: f64 = net.buses().iter().map(|b| b.p).sum();
    if sum.abs() > balance_tol {
        issues.push(Issue::Unbalanced { sum });
    }
    ValidationReport { issues }
}

/// Which variant of the incidence matrix to view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Incidence {
    Oriented,
    Plus,
    Minus,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Load,
    Gen,
}

/// Oriented, sending, receiving and unoriented incidence matrices.
#[derive(Debug, Clone)]
pub struct IncidenceSet {
    pub a: DMatrix<f64>,
    pub a_plus: DMatrix<f64>,
    pub a_minus: DMatrix<f64>,
    pub a_abs: DMatrix<f64>,
    n_load: usize,
    ranges: [Range<usize>; 3],
}

impl IncidenceSet {
    pub fn build(net: &PowerNetwork) -> Self {
        let (nb, ne) = (net.bus_count(), net.branch_count());
        let mut a_plus = DMatrix::zeros(nb, ne);
        let mut a_minus = DMatrix::zeros(nb, ne);
        for (e, br) in net.branches().iter().enumerate() {
            a_plus[(br.from, e)] = 1.0;
            a_minus[(br.to, e)] = 1.0;
        }
        IncidenceSet {
            a: &a_plus - &a_minus,
            a_abs: &a_plus + &a_minus,
            a_plus,
            a_minus,
            n_load: net.n_load(),
            ranges: [
                net.class_range(BranchClass::LoadLoad),
                net.class_range(BranchClass::GenLoad),
                net.class_range(BranchClass::GenGen),
            ],
        }
    }

    pub fn class_range(&self, class: BranchClass) -> Range<usize> {
        self.ranges[class as usize].clone()
    }

    pub fn matrix(&self, which: Incidence) -> &DMatrix<f64> {
        match which {
            Incidence::Oriented => &self.a,
            Incidence::Plus => &self.a_plus,
            Incidence::Minus => &self.a_minus,
            Incidence::Abs => &self.a_abs,
        }
    }

    /// Block view, e.g. `block(Incidence::Abs, Side::Load, BranchClass::GenLoad)`
    /// is `|A|_L^{gl}`.
    pub fn block(&self, which: Incidence, side: Side, class: BranchClass) -> DMatrixView<'_, f64> {
        let m = self.matrix(which);
        let rows = match side {
            Side::Load => 0..self.n_load,
            Side::Gen => self.n_load..m.nrows(),
        };
        let cols = self.ranges[class as usize].clone();
        m.view((rows.start, cols.start), (rows.len(), cols.len()))
    }
}

/// Bus susceptance matrix with load/generator blocks.
#[derive(Debug, Clone)]
pub struct SusceptanceMatrix {
    pub full: DMatrix<f64>,
    n_load: usize,
}

impl SusceptanceMatrix {
    pub fn ll(&self) -> DMatrixView<'_, f64> {
        let n = self.n_load;
        self.full.view((0, 0), (n, n))
    }

    pub fn lg(&self) -> DMatrixView<'_, f64> {
        let (n, nb) = (self.n_load, self.full.nrows());
        self.full.view((0, n), (n, nb - n))
    }

    pub fn gl(&self) -> DMatrixView<'_, f64> {
        let (n, nb) = (self.n_load, self.full.nrows());
        self.full.view((n, 0), (nb - n, n))
    }

    pub fn gg(&self) -> DMatrixView<'_, f64> {
        let (n, nb) = (self.n_load, self.full.nrows());
        self.full.view((n, n), (nb - n, nb - n))
    }
}

pub fn susceptance_matrix(net: &PowerNetwork) -> SusceptanceMatrix {
    let nb = net.bus_count();
    let mut b = DMatrix::zeros(nb, nb);
    for (i, bus) in net.buses().iter().enumerate() {
        b[(i, i)] = bus.b_shunt;
    }
    for br in net.branches() {
        b[(br.from, br.to)] = -br.b;
        b[(br.to, br.from)] = -br.b;
        b[(br.from, br.from)] += br.b;
        b[(br.to, br.to)] += br.b;
    }
    SusceptanceMatrix {
        full: b,
        n_load: net.n_load(),
    }
}

pub fn branch_flows(net: &PowerNetwork, p: &DVector<f64>) -> Result<DVector<f64>, NetworkError> {
    branch_flows_with_tol(net, p, DEFAULT_BALANCE_TOL)
}

/// Solves `A p = P` on a tree by repeatedly stripping leaves.
pub fn branch_flows_with_tol(
    net: &PowerNetwork,
    injections: &DVector<f64>,
    balance_tol: f64,
) -> Result<DVector<f64>, NetworkError> {
    let nb = net.bus_count();
    if injections.len() != nb {
        return Err(NetworkError::DimensionMismatch {
            expected: nb,
            got: injections.len(),
        });
    }
    let sum = injections.sum();
    if sum.abs() > balance_tol {
        return Err(NetworkError::InfeasibleInjections { sum });
    }
    if nb == 0 {
        return Ok(DVector::zeros(0));
    }
    if net.branch_count() + 1 != nb {
        return Err(NetworkError::NotRadial);
    }

    let adj = net.adjacency();
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut used = vec![false; net.branch_count()];
    let mut residual = injections.clone();
    let mut flows = DVector::zeros(net.branch_count());
    let mut leaves: VecDeque<usize> = (0..nb).filter(|&u| degree[u] == 1).collect();
    let mut stripped = 0;

    while let Some(u) = leaves.pop_front() {
        if degree[u] != 1 {
            continue;
        }
        let &(e, w) = adj[u]
            .iter()
            .find(|(e, _)| !used[*e])
            .expect("leaf has one live branch");
        let br = &net.branches()[e];
        flows[e] = br.incidence(u) * residual[u];
        residual[w] -= br.incidence(w) * flows[e];
        used[e] = true;
        stripped += 1;
        degree[u] = 0;
        degree[w] -= 1;
        if degree[w] == 1 {
            leaves.push_back(w);
        }
    }
    if stripped != net.branch_count() {
        return Err(NetworkError::NotRadial);
    }
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_bus(p: f64, q: f64) -> PowerNetwork {
        PowerNetwork::new(
            100.0,
            vec![Bus::pv(1, p, 1.0), Bus::pq(2, -p, q)],
            vec![Line::new(2, 1, -1.0)],
        )
        .unwrap()
    }

    fn six_bus_path() -> PowerNetwork {
        // loads 1..3, generators 4..6; edges 1 LL, 3 GL, 1 GG
        PowerNetwork::new(
            100.0,
            vec![
                Bus::pv(4, 0.0, 1.0),
                Bus::pq(1, 0.0, 0.0),
                Bus::pv(5, 0.0, 1.0),
                Bus::pq(2, 0.0, 0.0),
                Bus::pq(3, 0.0, 0.0),
                Bus::pv(6, 0.0, 1.0),
            ],
            vec![
                Line::new(1, 4, -1.0),
                Line::new(5, 6, -1.0),
                Line::new(1, 2, -1.0),
                Line::new(5, 2, -1.0),
                Line::new(3, 6, -1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_bus_is_valid() {
        let net = two_bus(0.3, -0.1);
        assert!(validate_network(&net).is_empty());
    }

    #[test]
    fn extra_edge_is_a_cycle() {
        let net = PowerNetwork::new(
            100.0,
            vec![Bus::pv(1, 0.0, 1.0), Bus::pq(2, 0.0, 0.0), Bus::pq(3, 0.0, 0.0)],
            vec![
                Line::new(1, 2, -1.0),
                Line::new(2, 3, -1.0),
                Line::new(3, 1, -1.0),
            ],
        )
        .unwrap();
        let report = validate_network(&net);
        assert!(!report.accepted());
        assert!(report.issues.contains(&Issue::CycleDetected));
        assert_eq!(report.issues[0].to_string(), "cycle detected");
    }

    #[test]
    fn capacitive_load_is_only_a_warning() {
        let net = two_bus(0.0, 0.1);
        let report = validate_network(&net);
        assert!(report.accepted());
        assert_eq!(report.warnings().count(), 1);
        assert!(report.to_string().contains("inductive-load assumption violated"));
    }

    #[test]
    fn rejects_structural_defects() {
        let buses = || vec![Bus::pv(1, 0.0, 1.0), Bus::pq(2, 0.0, 0.0)];
        assert!(matches!(
            PowerNetwork::new(1.0, buses(), vec![Line::new(2, 2, -1.0)]),
            Err(NetworkError::SelfLoop(0))
        ));
        assert!(matches!(
            PowerNetwork::new(1.0, buses(), vec![Line::new(1, 2, -1.0), Line::new(2, 1, -2.0)]),
            Err(NetworkError::ParallelBranch { first: 0, second: 1 })
        ));
        assert!(matches!(
            PowerNetwork::new(1.0, buses(), vec![Line::new(1, 7, -1.0)]),
            Err(NetworkError::UnknownBus { bus: 7, .. })
        ));
        assert!(matches!(
            PowerNetwork::new(1.0, vec![Bus::pv(1, 0.0, 0.0)], vec![]),
            Err(NetworkError::BadSetpoint(1))
        ));
    }

    #[test]
    fn disconnected_and_unbalanced() {
        let net = PowerNetwork::new(
            1.0,
            vec![Bus::pv(1, 0.5, 1.0), Bus::pq(2, 0.0, 0.0), Bus::pv(3, 0.0, 1.0)],
            vec![Line::new(1, 2, 0.5)],
        )
        .unwrap();
        let report = validate_network(&net);
        assert!(report
            .issues
            .contains(&Issue::Disconnected { components: 2 }));
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::Unbalanced { .. })));
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::NonInductiveBranch { .. })));
    }

    #[test]
    fn two_bus_incidence_matches_orientation() {
        let net = two_bus(0.0, 0.0);
        let inc = IncidenceSet::build(&net);
        // rows (load, gen); the generator sends
        assert_eq!(inc.a.as_slice(), &[-1.0, 1.0]);
        assert_eq!(inc.a_plus.as_slice(), &[0.0, 1.0]);
        assert_eq!(inc.a_minus.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn six_bus_path_block_structure() {
        let net = six_bus_path();
        let inc = IncidenceSet::build(&net);
        assert_eq!(inc.a.shape(), (6, 5));
        assert_eq!(net.class_count(BranchClass::LoadLoad), 1);
        assert_eq!(net.class_count(BranchClass::GenLoad), 3);
        assert_eq!(net.class_count(BranchClass::GenGen), 1);
        for which in [Incidence::Oriented, Incidence::Abs] {
            assert!(inc
                .block(which, Side::Gen, BranchClass::LoadLoad)
                .iter()
                .all(|&x| x == 0.0));
            assert!(inc
                .block(which, Side::Load, BranchClass::GenGen)
                .iter()
                .all(|&x| x == 0.0));
        }
        assert!(inc
            .block(Incidence::Plus, Side::Load, BranchClass::GenLoad)
            .iter()
            .all(|&x| x == 0.0));
        assert!(inc
            .block(Incidence::Minus, Side::Gen, BranchClass::GenLoad)
            .iter()
            .all(|&x| x == 0.0));
        for col in inc.a.column_iter() {
            assert_eq!(col.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&x| x == -1.0).count(), 1);
        }
        assert_eq!(inc.a_abs.row_sum().iter().copied().collect::<Vec<_>>(), vec![2.0; 5]);
        assert_eq!(&inc.a_plus + &inc.a_minus, inc.a_abs);
    }

    #[test]
    fn susceptance_two_bus_blocks() {
        let net = PowerNetwork::new(
            1.0,
            vec![Bus::pv(1, 0.0, 1.0), Bus::pq(2, 0.0, 0.0)],
            vec![Line::new(1, 2, -3.0)],
        )
        .unwrap();
        let b = susceptance_matrix(&net);
        assert_eq!(b.ll()[(0, 0)], -3.0);
        assert_eq!(b.lg()[(0, 0)], 3.0);
        assert_eq!(b.gl()[(0, 0)], 3.0);
        assert_eq!(b.gg()[(0, 0)], -3.0);
        assert!(b.full.column_sum().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn susceptance_path_by_hand() {
        // PQ(1) - PV(2) - PV(3), b = -1 each, shunt 0.25 at the load
        let net = PowerNetwork::new(
            1.0,
            vec![
                Bus::pq(1, 0.0, 0.0).with_shunt(0.25),
                Bus::pv(2, 0.0, 1.0),
                Bus::pv(3, 0.0, 1.0),
            ],
            vec![Line::new(1, 2, -1.0), Line::new(2, 3, -1.0)],
        )
        .unwrap();
        let b = susceptance_matrix(&net);
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[-0.75, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -1.0],
        );
        assert_eq!(b.full, expected);
    }

    #[test]
    fn two_bus_flow_is_generator_output() {
        let net = two_bus(1.0, 0.0);
        let p = branch_flows(&net, &net.p_injections()).unwrap();
        assert_eq!(p.as_slice(), &[1.0]);
        let zero = branch_flows(&net, &DVector::zeros(2)).unwrap();
        assert_eq!(zero.as_slice(), &[0.0]);
    }

    #[test]
    fn unbalanced_flows_rejected() {
        let net = two_bus(1.0, 0.0);
        let p = DVector::from_vec(vec![-1.0, 1.1]);
        assert!(matches!(
            branch_flows(&net, &p),
            Err(NetworkError::InfeasibleInjections { .. })
        ));
    }

    #[test]
    fn injections_and_scaling() {
        let net = two_bus(0.4, -0.2);
        let scaled = net.rescale_voltage(2.0);
        assert_eq!(scaled.v_gen()[0], 2.0);
        assert_eq!(scaled.q_load()[0], -0.8);
        assert_eq!(scaled.p_injections()[1], 1.6);
        let moved = net
            .with_injections(&DVector::from_vec(vec![0.1, -0.1]), &DVector::from_vec(vec![-0.5]))
            .unwrap();
        assert_eq!(moved.q_load()[0], -0.5);
        assert_eq!(moved.buses()[0].p, 0.1);
    }
}
