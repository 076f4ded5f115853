//! Solvability certificates: the two-bus closed form, the per-bus
//! certificate for networks without load-load branches, and the aggregate
//! certificate for general radial networks.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{CertificateError, FppfError};
use crate::fppf::FixedPointMap;
use crate::network::{branch_flows, BranchClass, BusKind, PowerNetwork};
use crate::stiffness::StiffnessSet;

/// Relative tolerance used when matching injections against a loading
/// profile.
const PROFILE_TOL: f64 = 1e-9;

/// An angle reported in radians with a degree duplicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Angle {
    pub rad: f64,
    pub deg: f64,
}

impl Angle {
    pub fn from_rad(rad: f64) -> Self {
        Angle {
            rad,
            deg: rad.to_degrees(),
        }
    }

    /// `arcsin(s)`; `s` is clamped into `[0, 1]` against rounding.
    fn from_sin(s: f64) -> Self {
        Self::from_rad(s.clamp(0.0, 1.0).asin())
    }
}

/// `(v_-, v_+)`, the two roots of `v^4 - (1 - Delta/2) v^2 + Delta^2/16 + Gamma^2 = 0`,
/// or `None` when `Delta + 4 Gamma^2 > 1`.
pub fn voltage_roots(delta: f64, gamma: f64) -> Option<(f64, f64)> {
    let disc = 1.0 - (delta + 4.0 * gamma * gamma);
    if !(disc >= 0.0) {
        return None;
    }
    let root = disc.sqrt();
    let mid = 1.0 - delta / 2.0;
    let plus = (0.5 * (mid + root)).sqrt();
    // v_-^2 v_+^2 = Delta^2/16 + Gamma^2 avoids cancellation in mid - root
    let product = delta * delta / 16.0 + gamma * gamma;
    let minus = if plus > 0.0 { product.sqrt() / plus } else { 0.0 };
    Some((minus, plus))
}

/// Closed-form solution of the two-bus problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoBusResult {
    pub gamma: f64,
    pub delta: f64,
    /// `Delta + 4 Gamma^2 < 1`.
    pub feasible: bool,
    pub margin: f64,
    pub v_plus: Option<f64>,
    pub v_minus: Option<f64>,
    /// Angle of the high-voltage solution, `sin = |Gamma| / v_+`.
    pub gamma_minus: Option<Angle>,
    /// Angle of the low-voltage solution, `sin = |Gamma| / v_-`.
    pub gamma_plus: Option<Angle>,
}

/// Roots are reported on the closed feasible set, so boundary points carry
/// the coalesced root while `feasible` stays false.
pub fn two_bus_solve(gamma: f64, delta: f64) -> TwoBusResult {
    let margin = 1.0 - (delta + 4.0 * gamma * gamma);
    let roots = voltage_roots(delta, gamma);
    let angle = |v: f64| {
        if gamma == 0.0 {
            Angle::from_rad(0.0)
        } else {
            Angle::from_sin(gamma.abs() / v)
        }
    };
    TwoBusResult {
        gamma,
        delta,
        feasible: margin > 0.0,
        margin,
        v_plus: roots.map(|r| r.1),
        v_minus: roots.map(|r| r.0),
        gamma_minus: roots.map(|r| angle(r.1)),
        gamma_plus: roots.and_then(|r| (r.0 > 0.0 || gamma == 0.0).then(|| angle(r.0))),
    }
}

/// `[delta_-, delta_+] = [1 - v_+, 1 - v_-]`, the set where the quartic
/// inequality of the existence proof holds.
pub fn quartic_interval(delta: f64, gamma: f64) -> Option<(f64, f64)> {
    voltage_roots(delta, gamma).map(|(minus, plus)| (1.0 - plus, 1.0 - minus))
}

/// The quartic itself in the shifted variable, `g(d) <= 0` on the interval.
pub fn quartic(delta: f64, gamma: f64, d: f64) -> f64 {
    let v2 = (1.0 - d) * (1.0 - d);
    v2 * v2 - (1.0 - delta / 2.0) * v2 + delta * delta / 16.0 + gamma * gamma
}

/// Lipschitz bound of the scalar map on `[v_+, 1]`, or `None` outside the
/// feasible set.
pub fn contraction_bound(delta: f64, gamma: f64) -> Option<f64> {
    let (_, v) = voltage_roots(delta, gamma)?;
    let s2 = gamma * gamma / (v * v);
    if s2 >= 1.0 {
        return None;
    }
    Some(delta / (4.0 * v * v) + gamma * gamma / (v * v * v) / (1.0 - s2).sqrt())
}

/// A named strict inequality `value < limit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    /// `limit - value`; positive when the condition holds.
    pub margin: f64,
    pub holds: bool,
}

impl Condition {
    fn new(name: &'static str, value: f64, limit: f64) -> Self {
        Condition {
            name,
            value,
            limit,
            margin: limit - value,
            holds: value < limit,
        }
    }
}

/// Loading profiles under which the per-bus conditions are also necessary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadingProfile {
    /// `Q_L = alpha S 1`, `P = 0`.
    I,
    /// `Q_L = 0`, `P = alpha/2 A (0, D_gl 1, 0)`.
    II,
    /// `Q_L = 0`, `P = alpha A (0, 0, D_gg 1)`.
    III,
}

impl std::str::FromStr for LoadingProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(LoadingProfile::I),
            "ii" | "2" => Ok(LoadingProfile::II),
            "iii" | "3" => Ok(LoadingProfile::III),
            _ => Err(format!("unknown loading profile {s:?}; expected i, ii or iii")),
        }
    }
}

/// Why the certificate's conditions are also necessary for this instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Necessity {
    /// Every PQ bus has exactly one PV neighbour.
    SinglePvNeighbour,
    /// The injections follow a loading profile with parameter `alpha`.
    Profile { profile: LoadingProfile, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusStress {
    pub bus: usize,
    pub delta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchStress {
    pub branch: usize,
    pub from: usize,
    pub to: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusBound {
    pub bus: usize,
    pub v_plus: f64,
    pub v_minus: f64,
    /// Bound on every generator-load angle at this bus.
    pub gamma: Angle,
    /// Contraction factor of the scalar map at this bus.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchBound {
    pub branch: usize,
    pub gamma: Angle,
}

/// Normalized voltages `v_i` at which no solution exists: the open interval
/// `(v_minus, v_plus)` and everything above `above`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeadZone {
    pub bus: usize,
    pub medium: (f64, f64),
    pub above: f64,
}

/// Per-bus certificate for networks without load-load branches.
/// Bus and branch fields hold external ids; `branch` is the internal index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoLoadLoadCertificate {
    pub buses: Vec<BusStress>,
    pub gen_branches: Vec<BranchStress>,
    pub conditions: Vec<Condition>,
    pub bus_bounds: Option<Vec<BusBound>>,
    pub branch_bounds: Option<Vec<BranchBound>>,
    pub dead_zones: Option<Vec<DeadZone>>,
    pub necessity: Option<Necessity>,
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralBounds {
    pub v_plus: f64,
    pub gamma_ll: Angle,
    pub gamma_gl: Angle,
    pub gamma_gg: Angle,
}

/// Aggregate existence certificate for general radial networks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralCertificate {
    pub delta: f64,
    /// `|S^{-1}(Q_L - 4 |A|_L^{ll} D_ll^{-1} [p_ll] p_ll)|` per PQ bus.
    pub bus_delta: Vec<f64>,
    pub gamma_ll: f64,
    pub gamma_gl: f64,
    pub gamma_gg: f64,
    pub conditions: Vec<Condition>,
    pub bounds: Option<GeneralBounds>,
    /// The voltage condition holds but `Gamma_ll < 1/4` does not.
    pub ll_condition_binding: bool,
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "certificate", rename_all = "snake_case")]
pub enum Certificate {
    NoLoadLoad(NoLoadLoadCertificate),
    General(GeneralCertificate),
}

impl Certificate {
    pub fn conditions(&self) -> &[Condition] {
        match self {
            Certificate::NoLoadLoad(c) => &c.conditions,
            Certificate::General(c) => &c.conditions,
        }
    }

    pub fn passed(&self) -> bool {
        self.conditions().iter().all(|c| c.holds)
    }

    pub fn unique(&self) -> bool {
        match self {
            Certificate::NoLoadLoad(c) => c.unique,
            Certificate::General(c) => c.unique,
        }
    }

    pub fn as_no_load_load(&self) -> Option<&NoLoadLoadCertificate> {
        match self {
            Certificate::NoLoadLoad(c) => Some(c),
            Certificate::General(_) => None,
        }
    }

    pub fn as_general(&self) -> Option<&GeneralCertificate> {
        match self {
            Certificate::General(c) => Some(c),
            Certificate::NoLoadLoad(_) => None,
        }
    }
}

fn check_inductive(net: &PowerNetwork) -> Result<(), CertificateError> {
    for bus in net.buses() {
        if let BusKind::Pq { q } = bus.kind {
            if q > 0.0 {
                return Err(CertificateError::CapacitiveLoad { bus: bus.id, q });
            }
        }
    }
    Ok(())
}

fn sup(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

/// Uses the per-bus certificate when there are no load-load branches and
/// the aggregate one otherwise.
pub fn certify(net: &PowerNetwork, stiff: &StiffnessSet) -> Result<Certificate, CertificateError> {
    if net.class_count(BranchClass::LoadLoad) == 0 {
        certify_no_pqpq(net, stiff)
    } else {
        certify_general(net, stiff)
    }
}

pub fn certify_no_pqpq(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
) -> Result<Certificate, CertificateError> {
    let n_ll = net.class_count(BranchClass::LoadLoad);
    if n_ll > 0 {
        return Err(CertificateError::LoadLoadBranches(n_ll));
    }
    check_inductive(net)?;
    let flows = branch_flows(net, &net.p_injections())?;
    let q = net.q_load();
    let n = net.n_load();

    let mut gamma = vec![0.0f64; n];
    let mut gen_branches = Vec::new();
    for (e, br) in net.branches().iter().enumerate() {
        let g = flows[e].abs() / stiff.d[e];
        match br.class {
            BranchClass::GenLoad => gamma[br.to] = gamma[br.to].max(g),
            BranchClass::GenGen => gen_branches.push(BranchStress {
                branch: e,
                from: net.buses()[br.from].id,
                to: net.buses()[br.to].id,
                gamma: g,
            }),
            BranchClass::LoadLoad => unreachable!(),
        }
    }
    let buses: Vec<BusStress> = (0..n)
        .map(|i| BusStress {
            bus: net.buses()[i].id,
            delta: q[i] / stiff.s[(i, i)],
            gamma: gamma[i],
        })
        .collect();

    let conditions = vec![
        Condition::new(
            "bus_voltage",
            sup(buses.iter().map(|b| b.delta + 4.0 * b.gamma * b.gamma)),
            1.0,
        ),
        Condition::new("gen_angle", sup(gen_branches.iter().map(|b| b.gamma)), 1.0),
    ];
    let passed = conditions.iter().all(|c| c.holds);

    let (bus_bounds, branch_bounds, dead_zones) = if passed {
        let mut bb = Vec::with_capacity(n);
        let mut dz = Vec::with_capacity(n);
        for b in &buses {
            let (v_minus, v_plus) =
                voltage_roots(b.delta, b.gamma).expect("condition guarantees real roots");
            bb.push(BusBound {
                bus: b.bus,
                v_plus,
                v_minus,
                gamma: Angle::from_sin(b.gamma / v_plus),
                beta: contraction_bound(b.delta, b.gamma).expect("condition guarantees a bound"),
            });
            dz.push(DeadZone {
                bus: b.bus,
                medium: (v_minus, v_plus),
                above: 1.0,
            });
        }
        let gb = gen_branches
            .iter()
            .map(|g| BranchBound {
                branch: g.branch,
                gamma: Angle::from_sin(g.gamma),
            })
            .collect();
        (Some(bb), Some(gb), Some(dz))
    } else {
        (None, None, None)
    };

    Ok(Certificate::NoLoadLoad(NoLoadLoadCertificate {
        buses,
        gen_branches,
        conditions,
        bus_bounds,
        branch_bounds,
        dead_zones,
        necessity: detect_necessity(net, stiff, &flows),
        unique: passed,
    }))
}

fn detect_necessity(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    flows: &DVector<f64>,
) -> Option<Necessity> {
    let adj = net.adjacency();
    if (0..net.n_load()).all(|i| adj[i].len() == 1) {
        return Some(Necessity::SinglePvNeighbour);
    }
    [LoadingProfile::I, LoadingProfile::II, LoadingProfile::III]
        .into_iter()
        .find_map(|profile| {
            profile_parameter(net, stiff, flows, profile)
                .map(|alpha| Necessity::Profile { profile, alpha })
        })
}

/// Common ratio `a_k / b_k` if `a = alpha b` for one `alpha >= 0`.
fn common_ratio(a: &[f64], b: &[f64]) -> Option<f64> {
    let scale = sup(a.iter().chain(b).map(|x| x.abs())).max(1.0);
    let (k, &pivot) = b
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))?;
    if pivot.abs() <= PROFILE_TOL * scale {
        return None;
    }
    let alpha = a[k] / pivot;
    let fits = a
        .iter()
        .zip(b)
        .all(|(x, y)| (x - alpha * y).abs() <= PROFILE_TOL * scale);
    (fits && alpha >= -PROFILE_TOL).then_some(alpha.max(0.0))
}

fn tiny(mut xs: impl Iterator<Item = f64>) -> bool {
    xs.all(|x| x.abs() <= PROFILE_TOL)
}

fn profile_parameter(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    flows: &DVector<f64>,
    profile: LoadingProfile,
) -> Option<f64> {
    let q = net.q_load();
    let gl = net.class_range(BranchClass::GenLoad);
    let gg = net.class_range(BranchClass::GenGen);
    match profile {
        LoadingProfile::I => {
            if !tiny(flows.iter().copied()) {
                return None;
            }
            let s1: Vec<f64> = stiff.s.column_sum().iter().copied().collect();
            common_ratio(q.as_slice(), &s1)
        }
        LoadingProfile::II | LoadingProfile::III => {
            if !tiny(q.iter().copied()) {
                return None;
            }
            let (active, idle, scale) = match profile {
                LoadingProfile::II => (gl, gg, 0.5),
                _ => (gg, gl, 1.0),
            };
            if active.is_empty() || !tiny(idle.map(|e| flows[e])) {
                return None;
            }
            let p: Vec<f64> = active.clone().map(|e| flows[e]).collect();
            let d: Vec<f64> = active.map(|e| scale * stiff.d[e]).collect();
            common_ratio(&p, &d)
        }
    }
}

pub fn certify_general(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
) -> Result<Certificate, CertificateError> {
    check_inductive(net)?;
    let flows = branch_flows(net, &net.p_injections())?;
    let n = net.n_load();

    // Q_L - 4 |A|_L^{ll} D_ll^{-1} [p_ll] p_ll
    let mut rhs = net.q_load();
    for e in net.class_range(BranchClass::LoadLoad) {
        let br = &net.branches()[e];
        let w = 4.0 * flows[e] * flows[e] / stiff.d[e];
        rhs[br.from] -= w;
        rhs[br.to] -= w;
    }
    let bus_delta: Vec<f64> = stiff.solve_s(&rhs).iter().map(|x| x.abs()).collect();
    let delta = sup(bus_delta.iter().copied());
    let class_sup = |class| sup(net.class_range(class).map(|e| flows[e].abs() / stiff.d[e]));
    let gamma_ll = class_sup(BranchClass::LoadLoad);
    let gamma_gl = class_sup(BranchClass::GenLoad);
    let gamma_gg = class_sup(BranchClass::GenGen);
    debug_assert_eq!(bus_delta.len(), n);

    let conditions = vec![
        Condition::new("bus_voltage", delta + 4.0 * gamma_gl * gamma_gl, 1.0),
        Condition::new("load_angle", gamma_ll, 0.25),
        Condition::new("gen_angle", gamma_gg, 1.0),
    ];
    let passed = conditions.iter().all(|c| c.holds);
    let bounds = passed.then(|| {
        let (_, v_plus) = voltage_roots(delta, gamma_gl).expect("condition guarantees real roots");
        GeneralBounds {
            v_plus,
            gamma_ll: Angle::from_sin(gamma_ll / (v_plus * v_plus)),
            gamma_gl: Angle::from_sin(gamma_gl / v_plus),
            gamma_gg: Angle::from_sin(gamma_gg),
        }
    });
    Ok(Certificate::General(GeneralCertificate {
        delta,
        bus_delta,
        gamma_ll,
        gamma_gl,
        gamma_gg,
        ll_condition_binding: conditions[0].holds && !conditions[1].holds,
        conditions,
        bounds,
        unique: false,
    }))
}

/// Injections `(P, Q_L)` of a loading profile with parameter `alpha`.
pub fn loading_profile(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    profile: LoadingProfile,
    alpha: f64,
) -> Result<(DVector<f64>, DVector<f64>), CertificateError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(CertificateError::BadAlpha(alpha));
    }
    let n = net.n_load();
    let mut p = DVector::zeros(net.bus_count());
    let mut q = DVector::zeros(n);
    let mut push = |range: std::ops::Range<usize>, scale: f64| {
        for e in range {
            let br = &net.branches()[e];
            let flow = scale * stiff.d[e];
            p[br.from] += flow;
            p[br.to] -= flow;
        }
    };
    match profile {
        LoadingProfile::I => q = stiff.s.column_sum() * alpha,
        LoadingProfile::II => push(net.class_range(BranchClass::GenLoad), alpha / 2.0),
        LoadingProfile::III => push(net.class_range(BranchClass::GenGen), alpha),
    }
    Ok((p, q))
}

/// The network re-loaded according to a profile.
pub fn apply_profile(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    profile: LoadingProfile,
    alpha: f64,
) -> Result<PowerNetwork, CertificateError> {
    let (p, q) = loading_profile(net, stiff, profile, alpha)?;
    Ok(net.with_injections(&p, &q)?)
}

/// `v_+(alpha), v_-(alpha) = sqrt((1 +- sqrt(1 - alpha^2)) / 2)`.
pub fn profile_two_roots(alpha: f64) -> Option<(f64, f64)> {
    voltage_roots(0.0, alpha / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleNodeRow {
    pub alpha: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    /// `delta_+ - delta_- = v_+ - v_-`.
    pub gap: f64,
    /// `|v_+^2 - v_-^2 - sqrt(1 - alpha^2)|`.
    pub margin_identity_error: f64,
    /// `max |f(v) - v|` at `v = v_+ 1`.
    pub residual_plus: Option<f64>,
    /// `max |f(v) - v|` at `v = v_- 1`; `None` where `f` is undefined.
    pub residual_minus: Option<f64>,
}

/// Evaluates both analytic fixed points along profile II.
pub fn saddle_node_check(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    alphas: &[f64],
) -> Result<Vec<SaddleNodeRow>, CertificateError> {
    let n_ll = net.class_count(BranchClass::LoadLoad);
    if n_ll > 0 {
        return Err(CertificateError::LoadLoadBranches(n_ll));
    }
    let n = net.n_load();
    alphas
        .iter()
        .map(|&alpha| {
            let (v_minus, v_plus) =
                profile_two_roots(alpha).ok_or(CertificateError::BadAlpha(alpha))?;
            let loaded = apply_profile(net, stiff, LoadingProfile::II, alpha)?;
            let map = FixedPointMap::new(&loaded, stiff).map_err(|e| match e {
                FppfError::Network(e) => CertificateError::Network(e),
                other => unreachable!("flow computation failed: {other}"),
            })?;
            let resid = |v: f64| {
                let v = DVector::from_element(n, v);
                map.eval(&v).ok().map(|f| (f - v).amax())
            };
            Ok(SaddleNodeRow {
                alpha,
                v_plus,
                v_minus,
                gap: v_plus - v_minus,
                margin_identity_error: (v_plus * v_plus - v_minus * v_minus
                    - (1.0 - alpha * alpha).sqrt())
                .abs(),
                residual_plus: resid(v_plus),
                residual_minus: resid(v_minus),
            })
        })
        .collect()
}

/// Infimum of `v_+` and supremum of `v_-` over the feasible set.
pub const V_PLUS_INF: f64 = 0.5;
pub const V_MINUS_SUP: f64 = FRAC_1_SQRT_2;
