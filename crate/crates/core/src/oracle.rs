//! Independent cross-checks: a damped polar Newton-Raphson solver and a
//! brute-force residual scan over normalized PQ voltages.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FppfError, OracleError};
use crate::fppf::{
    angles_from_branches, bus_voltages, reference_bus, residual_polar, solution_from_polar,
    FixedPointMap, PowerFlowSolution,
};
use crate::network::{BranchClass, PowerNetwork};
use crate::stiffness::StiffnessSet;

/// Largest PQ count accepted by [`grid_scan`].
pub const SCAN_LIMIT: usize = 3;

/// Initial point for Newton: angles at every bus and PQ voltage magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStart {
    pub theta: DVector<f64>,
    pub v_load: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Target for the sup-norm of the power mismatch.
    pub tol: f64,
    pub max_iter: usize,
    /// Step scaling applied when the full step does not halve the mismatch.
    pub damping: f64,
    pub starts: Vec<NewtonStart>,
    /// Sup distance in `(theta, V_L)` below which two solutions coincide.
    pub dedup_tol: f64,
}

impl NewtonConfig {
    /// Flat start: zero angles, open-circuit PQ voltages.
    pub fn flat(net: &PowerNetwork, stiff: &StiffnessSet) -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iter: 100,
            damping: 0.7,
            starts: vec![NewtonStart {
                theta: DVector::zeros(net.bus_count()),
                v_load: stiff.v_oc.clone(),
            }],
            dedup_tol: 1e-6,
        }
    }

    /// Single start at normalized voltages `v` with zero angles.
    pub fn from_normalized(net: &PowerNetwork, stiff: &StiffnessSet, v: &DVector<f64>) -> Self {
        let mut cfg = Self::flat(net, stiff);
        cfg.starts[0].v_load = v.component_mul(&stiff.v_oc);
        cfg
    }

    /// Appends `count` seeded random starts: `V_L` uniform in
    /// `[0.2, 1.2] V_L*`, angles uniform in `[-pi/2, pi/2]`.
    pub fn with_random_starts(
        mut self,
        net: &PowerNetwork,
        stiff: &StiffnessSet,
        count: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = reference_bus(net);
        for _ in 0..count {
            let mut theta = DVector::from_fn(net.bus_count(), |_, _| {
                rng.random_range(-FRAC_PI_2..=FRAC_PI_2)
            });
            theta[reference] = 0.0;
            let v_load = stiff.v_oc.map(|v| v * rng.random_range(0.2..=1.2));
            self.starts.push(NewtonStart { theta, v_load });
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartFailure {
    pub start: usize,
    pub iterations: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonReport {
    /// Distinct converged solutions with positive voltages.
    pub solutions: Vec<PowerFlowSolution>,
    /// Iterations used by the start that first found each solution.
    pub iterations: Vec<usize>,
    pub failures: Vec<StartFailure>,
}

/// Index layout of the Newton unknowns: angles of non-reference buses,
/// then PQ voltage magnitudes.
struct Layout {
    reference: usize,
    nb: usize,
    n: usize,
}

impl Layout {
    fn new(net: &PowerNetwork) -> Self {
        Layout {
            reference: reference_bus(net),
            nb: net.bus_count(),
            n: net.n_load(),
        }
    }

    fn dim(&self) -> usize {
        self.nb - 1 + self.n
    }

    fn theta_col(&self, bus: usize) -> Option<usize> {
        match bus.cmp(&self.reference) {
            std::cmp::Ordering::Less => Some(bus),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(bus - 1),
        }
    }

    fn v_col(&self, bus: usize) -> Option<usize> {
        (bus < self.n).then(|| self.nb - 1 + bus)
    }

    fn unpack(&self, net: &PowerNetwork, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut theta = DVector::zeros(self.nb);
        let mut voltage = DVector::zeros(self.nb);
        for k in 0..self.nb {
            if let Some(c) = self.theta_col(k) {
                theta[k] = x[c];
            }
            voltage[k] = match self.v_col(k) {
                Some(c) => x[c],
                None => net.setpoint(k).expect("generator bus"),
            };
        }
        (theta, voltage)
    }

    fn pack(&self, theta: &DVector<f64>, v_load: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        for k in 0..self.nb {
            if let Some(c) = self.theta_col(k) {
                x[c] = theta[k] - theta[self.reference];
            }
            if let Some(c) = self.v_col(k) {
                x[c] = v_load[k];
            }
        }
        x
    }

    /// Mismatch vector: active at non-reference buses, reactive at PQ buses.
    fn mismatch(&self, net: &PowerNetwork, x: &DVector<f64>) -> DVector<f64> {
        let (theta, voltage) = self.unpack(net, x);
        let r = residual_polar(net, &theta, &voltage);
        let mut f = DVector::zeros(self.dim());
        for k in 0..self.nb {
            if let Some(c) = self.theta_col(k) {
                f[c] = r.active[k];
            }
            if let Some(c) = self.v_col(k) {
                f[c] = r.reactive[k];
            }
        }
        f
    }

    /// Analytic Jacobian of [`Self::mismatch`].
    fn jacobian(&self, net: &PowerNetwork, x: &DVector<f64>) -> DMatrix<f64> {
        let (theta, voltage) = self.unpack(net, x);
        let mut jac = DMatrix::zeros(self.dim(), self.dim());
        for k in 0..self.n {
            if let Some(row) = self.v_col(k) {
                let bus = &net.buses()[k];
                jac[(row, row)] += 2.0 * bus.b_shunt * voltage[k];
            }
        }
        for br in net.branches() {
            let c = br.coupling();
            for (i, j) in [(br.from, br.to), (br.to, br.from)] {
                let diff = theta[i] - theta[j];
                let (sin, cos) = diff.sin_cos();
                let (vi, vj) = (voltage[i], voltage[j]);
                // active_i = P_i - sum_j V_i V_j c sin(theta_i - theta_j)
                if let Some(row) = self.theta_col(i) {
                    if let Some(col) = self.theta_col(i) {
                        jac[(row, col)] -= vi * vj * c * cos;
                    }
                    if let Some(col) = self.theta_col(j) {
                        jac[(row, col)] += vi * vj * c * cos;
                    }
                    if let Some(col) = self.v_col(i) {
                        jac[(row, col)] -= vj * c * sin;
                    }
                    if let Some(col) = self.v_col(j) {
                        jac[(row, col)] -= vi * c * sin;
                    }
                }
                // reactive_i = Q_i + B_ii V_i^2 + sum_j V_i V_j c cos(theta_i - theta_j)
                if let Some(row) = self.v_col(i) {
                    if let Some(col) = self.theta_col(i) {
                        jac[(row, col)] -= vi * vj * c * sin;
                    }
                    if let Some(col) = self.theta_col(j) {
                        jac[(row, col)] += vi * vj * c * sin;
                    }
                    // B_ii gains b = -c per incident branch
                    jac[(row, row)] += -2.0 * c * vi + vj * c * cos;
                    if let Some(col) = self.v_col(j) {
                        jac[(row, col)] += vi * c * cos;
                    }
                }
            }
        }
        jac
    }
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

enum Outcome {
    Converged(DVector<f64>, usize),
    Failed(String, usize),
}

fn run_start(net: &PowerNetwork, layout: &Layout, cfg: &NewtonConfig, mut x: DVector<f64>) -> Outcome {
    let mut f = layout.mismatch(net, &x);
    let mut norm = f.amax();
    for it in 0..=cfg.max_iter {
        if !norm.is_finite() {
            return Outcome::Failed("mismatch is not finite".into(), it);
        }
        if norm <= cfg.tol {
            return Outcome::Converged(x, it);
        }
        if it == cfg.max_iter {
            break;
        }
        let jac = layout.jacobian(net, &x);
        let Some(dx) = jac.lu().solve(&(-&f)) else {
            return Outcome::Failed("singular Jacobian".into(), it);
        };
        let mut accepted = false;
        let full = &x + &dx;
        let f_full = layout.mismatch(net, &full);
        if f_full.amax() <= 0.5 * norm {
            x = full;
            f = f_full;
            accepted = true;
        } else {
            let mut step = cfg.damping;
            for _ in 0..30 {
                let trial = &x + &dx * step;
                let f_trial = layout.mismatch(net, &trial);
                if f_trial.amax() < norm {
                    x = trial;
                    f = f_trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            return Outcome::Failed("line search stalled".into(), it + 1);
        }
        norm = f.amax();
    }
    Outcome::Failed(format!("no convergence in {} iterations", cfg.max_iter), cfg.max_iter)
}

/// Runs damped Newton from every configured start and collects the
/// distinct converged solutions with positive PQ voltages.
pub fn newton_solve(net: &PowerNetwork, cfg: &NewtonConfig) -> Result<NewtonReport, OracleError> {
    if net.n_gen() == 0 {
        return Err(OracleError::NoReference);
    }
    let layout = Layout::new(net);
    let mut report = NewtonReport {
        solutions: Vec::new(),
        iterations: Vec::new(),
        failures: Vec::new(),
    };
    let mut keys: Vec<DVector<f64>> = Vec::new();
    for (s, start) in cfg.starts.iter().enumerate() {
        let x0 = layout.pack(&start.theta, &start.v_load);
        match run_start(net, &layout, cfg, x0) {
            Outcome::Failed(reason, iterations) => report.failures.push(StartFailure {
                start: s,
                iterations,
                reason,
            }),
            Outcome::Converged(x, iterations) => {
                let (mut theta, voltage) = layout.unpack(net, &x);
                if voltage.iter().any(|&v| !(v > 0.0)) {
                    report.failures.push(StartFailure {
                        start: s,
                        iterations,
                        reason: "converged to non-positive voltage".into(),
                    });
                    continue;
                }
                theta.apply(|t| *t = wrap_angle(*t));
                let key = layout.pack(&theta, &voltage);
                let duplicate = keys.iter().any(|k| {
                    (0..k.len()).all(|c| {
                        let d = k[c] - key[c];
                        let d = if c < layout.nb - 1 { wrap_angle(d) } else { d };
                        d.abs() <= cfg.dedup_tol
                    })
                });
                if !duplicate {
                    keys.push(key);
                    report
                        .solutions
                        .push(solution_from_polar(net, &theta, &voltage));
                    report.iterations.push(iterations);
                }
            }
        }
    }
    Ok(report)
}

/// Normalized PQ voltages `V_i / V_i*` of a solution.
pub fn normalized_voltages(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    sol: &PowerFlowSolution,
) -> DVector<f64> {
    DVector::from_fn(net.n_load(), |i, _| sol.voltage[i] / stiff.v_oc[i])
}

/// True when every branch angle difference lies in `(-pi/2, pi/2)`.
pub fn within_half_pi(sol: &PowerFlowSolution) -> bool {
    sol.eta.iter().all(|e| wrap_angle(*e).abs() < FRAC_PI_2)
}

/// A grid point (or bracketed root) whose mismatch fell below threshold.
#[derive(Debug, Clone, Serialize)]
pub struct ScanHit {
    /// Normalized PQ voltages.
    pub v: Vec<f64>,
    /// Sup-norm power mismatch at `v` with angles recovered by arcsin.
    pub residual: f64,
    /// Newton refinement started from the hit, if it converged.
    pub refined: Option<PowerFlowSolution>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub points_evaluated: usize,
    pub hits: Vec<ScanHit>,
}

/// Grid coordinates strictly inside `(lo, hi)`: cell midpoints.
fn axis(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    let h = (hi - lo) / resolution as f64;
    (0..resolution).map(|k| lo + (k as f64 + 0.5) * h).collect()
}

/// Sup-norm mismatch at normalized voltages `v`, with angles recovered from
/// the branch flows; `None` when some `|sin eta| >= 1`.
pub fn recovered_mismatch(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    map: &FixedPointMap<'_>,
    v: &DVector<f64>,
) -> Option<f64> {
    let (theta, voltage) = recovered_polar(net, stiff, map, v).ok()?;
    Some(residual_polar(net, &theta, &voltage).max_abs())
}

fn recovered_polar(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    map: &FixedPointMap<'_>,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), FppfError> {
    let eta = map.branch_angles(v)?;
    Ok((angles_from_branches(net, &eta), bus_voltages(net, stiff, v)))
}

/// Reactive mismatch of PQ bus `i` alone; depends only on `v_i` when no
/// load-load branch touches `i`.
fn bus_mismatch(net: &PowerNetwork, stiff: &StiffnessSet, ratio: &DVector<f64>, adj: &[Vec<(usize, usize)>], i: usize, v: f64) -> Option<f64> {
    let bus = &net.buses()[i];
    let vi = v * stiff.v_oc[i];
    let q = net.q_load()[i];
    let mut r = q + bus.b_shunt * vi * vi;
    for &(e, j) in &adj[i] {
        let br = &net.branches()[e];
        let s = ratio[e] / v;
        if !(s.abs() < 1.0) {
            return None;
        }
        let vj = net.setpoint(j).expect("neighbour of a PQ bus is a PV bus here");
        r += br.b * vi * vi + br.coupling() * vi * vj * (1.0 - s * s).sqrt();
    }
    Some(r)
}

/// Scans a box of normalized PQ voltages for near-solutions.
///
/// Every grid point whose recovered-angle mismatch is below `threshold` is
/// reported. Without load-load branches the mismatch separates by bus, so
/// each axis is also searched for sign changes, which are bisected to a
/// root; this finds solutions that fall between grid points. Each hit is
/// refined by Newton.
pub fn grid_scan(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    boxes: &[(f64, f64)],
    resolution: usize,
    threshold: f64,
) -> Result<ScanReport, OracleError> {
    let n = net.n_load();
    if n > SCAN_LIMIT {
        return Err(OracleError::TooLarge {
            limit: SCAN_LIMIT,
            got: n,
        });
    }
    if boxes.len() != n {
        return Err(OracleError::BoxMismatch {
            expected: n,
            got: boxes.len(),
        });
    }
    if net.n_gen() == 0 {
        return Err(OracleError::NoReference);
    }
    let map = FixedPointMap::new(net, stiff).map_err(|e| match e {
        FppfError::Network(e) => OracleError::Network(e),
        other => unreachable!("flow computation failed: {other}"),
    })?;
    let axes: Vec<Vec<f64>> = boxes
        .iter()
        .map(|&(lo, hi)| axis(lo, hi, resolution))
        .collect();

    let candidates: Vec<DVector<f64>>;
    let mut points_evaluated = 0;
    if net.class_count(BranchClass::LoadLoad) == 0 {
        let adj = net.adjacency();
        let ratio = map.normalized_flows();
        let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (i, grid) in axes.iter().enumerate() {
            let f = |v: f64| bus_mismatch(net, stiff, ratio, &adj, i, v);
            let vals: Vec<Option<f64>> = grid.iter().map(|&v| f(v)).collect();
            points_evaluated += vals.len();
            let mut near = Vec::new();
            for (k, val) in vals.iter().enumerate() {
                if let Some(r) = val {
                    if r.abs() < threshold {
                        near.push(grid[k]);
                    }
                }
                if k + 1 < vals.len() {
                    if let (Some(a), Some(b)) = (val, vals[k + 1]) {
                        if a.signum() != b.signum() && a.abs() >= threshold && b.abs() >= threshold {
                            near.push(bisect(&f, axes[i][k], axes[i][k + 1], *a));
                        }
                    }
                }
            }
            per_axis.push(near);
        }
        candidates = cartesian(&per_axis);
    } else {
        let all = cartesian(&axes);
        points_evaluated = all.len();
        candidates = all
            .into_iter()
            .filter(|v| recovered_mismatch(net, stiff, &map, v).is_some_and(|r| r < threshold))
            .collect();
    }

    let mut hits = Vec::new();
    for v in candidates {
        let Some(residual) = recovered_mismatch(net, stiff, &map, &v) else {
            continue;
        };
        if residual >= threshold {
            continue;
        }
        let (theta, voltage) = recovered_polar(net, stiff, &map, &v).expect("checked above");
        let mut cfg = NewtonConfig::flat(net, stiff);
        cfg.starts[0] = NewtonStart {
            theta,
            v_load: voltage.rows(0, n).into_owned(),
        };
        let refined = newton_solve(net, &cfg)?.solutions.into_iter().next();
        hits.push(ScanHit {
            v: v.as_slice().to_vec(),
            residual,
            refined,
        });
    }
    Ok(ScanReport {
        points_evaluated,
        hits,
    })
}

fn bisect(f: &impl Fn(f64) -> Option<f64>, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let sign_lo = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match f(mid) {
            Some(0.0) => return mid,
            Some(r) if r.signum() == sign_lo => lo = mid,
            Some(_) => hi = mid,
            None => break,
        }
    }
    0.5 * (lo + hi)
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fppf::{fppf_solve, recover_angles, residual, SolveOptions};
    use crate::network::{Bus, Line};
    use crate::solvability::two_bus_solve;

    fn two_bus(gamma: f64, delta: f64) -> PowerNetwork {
        PowerNetwork::new(
            1.0,
            vec![Bus::pv(1, gamma, 1.0), Bus::pq(2, -gamma, -delta / 4.0)],
            vec![Line::new(1, 2, -1.0)],
        )
        .unwrap()
    }

    fn mixed() -> PowerNetwork {
        PowerNetwork::new(
            1.0,
            vec![
                Bus::pv(1, 0.4, 1.02),
                Bus::pv(2, -0.1, 1.0),
                Bus::pq(3, -0.1, -0.2),
                Bus::pq(4, -0.2, -0.1),
            ],
            vec![
                Line::new(1, 2, -6.0),
                Line::new(1, 3, -5.0),
                Line::new(3, 4, -7.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = mixed().with_injections(
            &DVector::from_vec(vec![-0.1, -0.2, 0.4, -0.1]),
            &DVector::from_vec(vec![-0.2, -0.1]),
        );
        let net = net.unwrap();
        let layout = Layout::new(&net);
        let x = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.93, 1.04]);
        let jac = layout.jacobian(&net, &x);
        let h = 1e-6;
        for c in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (layout.mismatch(&net, &xp) - layout.mismatch(&net, &xm)) / (2.0 * h);
            for r in 0..x.len() {
                assert_close!(jac[(r, c)], col[r], 1e-7);
            }
        }
    }

    #[test]
    fn two_bus_high_and_low_roots() {
        let net = two_bus(0.25, 0.5);
        let st = StiffnessSet::compute(&net).unwrap();
        let closed = two_bus_solve(0.25, 0.5);
        let high = newton_solve(&net, &NewtonConfig::flat(&net, &st)).unwrap();
        assert_eq!(high.solutions.len(), 1);
        let sol = &high.solutions[0];
        assert_close!(sol.voltage[0], closed.v_plus.unwrap(), 1e-8);
        assert_close!(sol.eta[0].abs(), closed.gamma_minus.unwrap().rad, 1e-8);

        let cfg = NewtonConfig::from_normalized(&net, &st, &DVector::from_element(1, 0.3));
        let low = newton_solve(&net, &cfg).unwrap();
        let sol = &low.solutions[0];
        assert_close!(sol.voltage[0], closed.v_minus.unwrap(), 1e-8);
        assert_close!(sol.eta[0].abs(), closed.gamma_plus.unwrap().rad, 1e-8);
    }

    #[test]
    fn open_circuit_needs_no_iterations() {
        let net = mixed().scale_loading(0.0);
        let st = StiffnessSet::compute(&net).unwrap();
        let rep = newton_solve(&net, &NewtonConfig::flat(&net, &st)).unwrap();
        assert!(rep.iterations[0] <= 2);
        let v = normalized_voltages(&net, &st, &rep.solutions[0]);
        assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn newton_agrees_with_fixed_point() {
        let net = mixed();
        let st = StiffnessSet::compute(&net).unwrap();
        let state = fppf_solve(&net, &st, &SolveOptions::default()).unwrap();
        let fp = recover_angles(&net, &st, &state).unwrap();
        let rep = newton_solve(&net, &NewtonConfig::flat(&net, &st)).unwrap();
        let nt = &rep.solutions[0];
        for k in 0..net.bus_count() {
            assert_close!(fp.theta[k], nt.theta[k], 1e-8);
            assert_close!(fp.voltage[k], nt.voltage[k], 1e-8);
        }
        assert!(residual(&net, nt).max_abs() <= 1e-10);
        assert!(within_half_pi(nt));
    }

    #[test]
    fn random_starts_are_seeded() {
        let net = mixed();
        let st = StiffnessSet::compute(&net).unwrap();
        let a = NewtonConfig::flat(&net, &st).with_random_starts(&net, &st, 5, 7);
        let b = NewtonConfig::flat(&net, &st).with_random_starts(&net, &st, 5, 7);
        assert_eq!(a.starts, b.starts);
        for s in &a.starts[1..] {
            assert_eq!(s.theta[reference_bus(&net)], 0.0);
            for i in 0..2 {
                let r = s.v_load[i] / st.v_oc[i];
                assert!((0.2..=1.2).contains(&r));
            }
        }
    }

    #[test]
    fn two_bus_scan() {
        let net = two_bus(0.25, 0.5);
        let st = StiffnessSet::compute(&net).unwrap();
        let r = two_bus_solve(0.25, 0.5);
        let (vm, vp) = (r.v_minus.unwrap(), r.v_plus.unwrap());
        let medium = grid_scan(&net, &st, &[(vm, vp)], 400, 1e-6).unwrap();
        assert!(medium.hits.is_empty());
        let high = grid_scan(&net, &st, &[(1.0, 1.5)], 400, 1e-6).unwrap();
        assert!(high.hits.is_empty());
        let near = grid_scan(&net, &st, &[(vp - 0.01, vp + 0.01)], 400, 1e-6).unwrap();
        assert_eq!(near.hits.len(), 1);
        let refined = near.hits[0].refined.as_ref().unwrap();
        assert_close!(refined.voltage[0], vp, 1e-9);
        let wide = grid_scan(&net, &st, &[(0.01, 1.5)], 400, 1e-6).unwrap();
        assert_eq!(wide.hits.len(), 2);
    }

    #[test]
    fn scan_guards() {
        let net = PowerNetwork::new(
            1.0,
            vec![
                Bus::pv(0, 0.0, 1.0),
                Bus::pq(1, 0.0, 0.0),
                Bus::pq(2, 0.0, 0.0),
                Bus::pq(3, 0.0, 0.0),
                Bus::pq(4, 0.0, 0.0),
            ],
            (1..5).map(|k| Line::new(0, k, -1.0)).collect(),
        )
        .unwrap();
        let st = StiffnessSet::compute(&net).unwrap();
        assert!(matches!(
            grid_scan(&net, &st, &[(0.5, 1.0); 4], 10, 1e-6),
            Err(OracleError::TooLarge { limit: 3, got: 4 })
        ));
        let net = two_bus(0.1, 0.1);
        let st = StiffnessSet::compute(&net).unwrap();
        assert!(matches!(
            grid_scan(&net, &st, &[], 10, 1e-6),
            Err(OracleError::BoxMismatch { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn coupled_scan_finds_solution() {
        let net = mixed();
        let st = StiffnessSet::compute(&net).unwrap();
        let state = fppf_solve(&net, &st, &SolveOptions::default()).unwrap();
        let v = state.voltage();
        let boxes: Vec<(f64, f64)> = v.iter().map(|&x| (x - 0.02, x + 0.02)).collect();
        let rep = grid_scan(&net, &st, &boxes, 40, 5e-2).unwrap();
        assert!(!rep.hits.is_empty());
        let refined = rep.hits.iter().filter_map(|h| h.refined.as_ref()).next().unwrap();
        let nv = normalized_voltages(&net, &st, refined);
        assert!((nv - v).amax() < 1e-8);
    }

    #[test]
    fn wrap_into_half_open_interval() {
        assert_close!(wrap_angle(3.0 * PI), PI, 1e-12);
        assert_close!(wrap_angle(-PI), PI, 1e-12);
        assert_close!(wrap_angle(0.5), 0.5, 1e-15);
    }
}
