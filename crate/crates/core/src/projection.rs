//! Euclidean projection onto a frozen polyhedron, with KKT multipliers.
//!
//! [`project`] is a dual active-set method for the least-distance problem
//! `min ½‖x − w‖²` over `C(p)` (Goldfarb-Idnani with identity Hessian). It
//! starts at `w`, where the equality-free, inequality-free problem is solved,
//! and adds violated constraints one at a time. Each addition moves `x` along
//! the component of the entering gradient orthogonal to the working set while
//! the working-set multipliers move along the coordinates of that gradient in
//! the working set; a multiplier hitting zero drops its constraint. Dependent
//! entering gradients take a pure dual step that drops the blocking
//! constraint. Throughout, `x = w − Σ λ̂_i g_i(p)` holds exactly.
//!
//! [`project_bruteforce`] enumerates independent active sets and is used both
//! as a test oracle and to decide emptiness of `C(p)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist, norm, PivotedQr, VectorFamily};
use crate::polyhedron::{PolyhedronInstance, Tolerances};

/// Largest instance the enumeration oracle accepts by default.
pub const DEFAULT_ENUMERATION_GUARD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub feasibility_tol: f64,
    pub kkt_tol: f64,
    pub active_tol: f64,
    pub rank_tol: f64,
    /// Iteration cap; `None` means `100 · n`.
    pub max_iterations: Option<usize>,
    pub enumeration_guard: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self::from(&Tolerances::default())
    }
}

impl From<&Tolerances> for ProjectionConfig {
    fn from(t: &Tolerances) -> Self {
        Self {
            feasibility_tol: t.feasibility,
            kkt_tol: t.kkt,
            active_tol: t.active,
            rank_tol: t.rank,
            max_iterations: None,
            enumeration_guard: DEFAULT_ENUMERATION_GUARD,
        }
    }
}

impl ProjectionConfig {
    // Constraints violated by less than this never enter the working set.
    fn enter_tol(&self) -> f64 {
        self.feasibility_tol * 1e-2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionStatus {
    Converged,
    InfeasibleSet,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SolverEvent {
    Add { index: usize },
    Drop { index: usize },
    Polish,
    DualInfeasible { index: usize },
    EnumerationFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub point: Vec<f64>,
    /// Unnormalised multipliers: `w − point = Σ λ̂_i g_i(p)`.
    pub multipliers: Vec<f64>,
    /// `{i : |G_i(point)| ≤ active_tol}`.
    pub active: Vec<usize>,
    pub distance: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: ProjectionStatus,
    pub trace: Vec<SolverEvent>,
}

impl ProjectionResult {
    pub fn converged(&self) -> bool {
        self.status == ProjectionStatus::Converged
    }

    fn empty_set(inst: &PolyhedronInstance, w: &[f64], iterations: usize, trace: Vec<SolverEvent>) -> Self {
        Self {
            point: w.to_vec(),
            multipliers: vec![0.0; inst.len()],
            active: Vec::new(),
            distance: f64::INFINITY,
            kkt_residual: f64::INFINITY,
            iterations,
            status: ProjectionStatus::InfeasibleSet,
            trace,
        }
    }
}

/// Components of the KKT residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktBreakdown {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub sign: f64,
}

impl KktBreakdown {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.sign)
    }
}

pub fn kkt_breakdown(inst: &PolyhedronInstance, w: &[f64], point: &[f64], multipliers: &[f64]) -> KktBreakdown {
    let combo = inst.combine(multipliers);
    let stationarity = w
        .iter()
        .zip(point)
        .zip(&combo)
        .map(|((wi, xi), ci)| (wi - xi - ci).powi(2))
        .sum::<f64>()
        .sqrt();
    let feasibility = inst.residual(point).unwrap_or(f64::INFINITY);
    let mut complementarity = 0.0f64;
    let mut sign = 0.0f64;
    for i in inst.inequalities() {
        let l = multipliers[i];
        complementarity = complementarity.max((l * inst.constraint_value(i, point)).abs());
        sign = sign.max(-l);
    }
    KktBreakdown {
        stationarity,
        feasibility,
        complementarity,
        sign,
    }
}

/// Max of stationarity, feasibility, complementarity and sign violations.
pub fn kkt_residual(inst: &PolyhedronInstance, w: &[f64], result: &ProjectionResult) -> f64 {
    kkt_breakdown(inst, w, &result.point, &result.multipliers).max()
}

fn finish(
    inst: &PolyhedronInstance,
    w: &[f64],
    point: Vec<f64>,
    multipliers: Vec<f64>,
    iterations: usize,
    status: ProjectionStatus,
    trace: Vec<SolverEvent>,
    cfg: &ProjectionConfig,
) -> ProjectionResult {
    let kkt = kkt_breakdown(inst, w, &point, &multipliers).max();
    let active = inst.active_set_unchecked(&point, cfg.active_tol);
    ProjectionResult {
        distance: dist(w, &point),
        point,
        multipliers,
        active,
        kkt_residual: kkt,
        iterations,
        status,
        trace,
    }
}

/// Projection onto the affine set `{x : ⟨x, g_i⟩ = f_i, i ∈ set}` for an
/// independent index set. Returns the point and the multipliers on `set`
/// (in the order of `set`), or `None` when the gradients are dependent.
fn equality_projection(
    inst: &PolyhedronInstance,
    w: &[f64],
    set: &[usize],
    rank_tol: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    if set.is_empty() {
        return Some((w.to_vec(), Vec::new()));
    }
    let family = inst.gradient_family(set).ok()?;
    let qr = PivotedQr::factor(&family, &[], rank_tol).ok()?;
    if qr.rank() < set.len() {
        return None;
    }
    // (G Gᵀ) λ = G w − f
    let rhs: Vec<f64> = qr
        .pivots
        .iter()
        .map(|&pos| inst.constraint_value(set[pos], w))
        .collect();
    let sol = qr.solve_gram(&rhs);
    let mut lambda = vec![0.0; set.len()];
    for (&pos, v) in qr.pivots.iter().zip(sol) {
        lambda[pos] = v;
    }
    let mut x = w.to_vec();
    for (&i, &l) in set.iter().zip(&lambda) {
        crate::linalg::axpy(-l, &inst.gradients[i], &mut x);
    }
    Some((x, lambda))
}

struct WorkingEntry {
    index: usize,
    // +1 or −1; the oriented normal is `orient · g_index`
    orient: f64,
    mult: f64,
}

/// Project `w` onto `C(p)` by the dual active-set method.
pub fn project(inst: &PolyhedronInstance, w: &[f64], cfg: &ProjectionConfig) -> Result<ProjectionResult> {
    check_dim("projection target", inst.dim(), w.len())?;
    let n = inst.len();
    let max_iter = cfg.max_iterations.unwrap_or(100 * n.max(1));
    let mut trace = Vec::new();

    if inst.residual(w)? <= cfg.feasibility_tol {
        return Ok(finish(inst, w, w.to_vec(), vec![0.0; n], 0, ProjectionStatus::Converged, trace, cfg));
    }

    let mut work: Vec<WorkingEntry> = Vec::new();
    let mut x = w.to_vec();
    let mut iterations = 0usize;
    let mut status = ProjectionStatus::Converged;

    let recompute = |work: &[WorkingEntry], entering: Option<(usize, f64, f64)>| -> Vec<f64> {
        let mut x = w.to_vec();
        for e in work {
            crate::linalg::axpy(-e.orient * e.mult, &inst.gradients[e.index], &mut x);
        }
        if let Some((k, orient, mult)) = entering {
            crate::linalg::axpy(-orient * mult, &inst.gradients[k], &mut x);
        }
        x
    };

    'outer: loop {
        // pick the entering constraint: equalities first, then the most
        // violated inequality; ties go to the smallest index
        let mut entering: Option<(usize, f64)> = None;
        for pass in [inst.equalities(), inst.inequalities()] {
            let mut best = cfg.enter_tol();
            for i in pass {
                if work.iter().any(|e| e.index == i) {
                    continue;
                }
                let g = inst.constraint_value(i, &x);
                let v = if inst.is_equality(i) { g.abs() } else { g };
                if v > best {
                    best = v;
                    entering = Some((i, if g >= 0.0 { 1.0 } else { -1.0 }));
                }
            }
            if entering.is_some() {
                break;
            }
        }
        let Some((k, orient)) = entering else {
            break;
        };
        let orient = if inst.is_equality(k) { orient } else { 1.0 };
        let nk: Vec<f64> = inst.gradients[k].iter().map(|g| orient * g).collect();
        let mut uk = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                status = ProjectionStatus::IterationLimit;
                break 'outer;
            }
            let normals: Vec<Vec<f64>> = work
                .iter()
                .map(|e| inst.gradients[e.index].iter().map(|g| e.orient * g).collect())
                .collect();
            let (z, r) = if normals.is_empty() {
                (nk.clone(), Vec::new())
            } else {
                let family = VectorFamily::from_vectors(normals).expect("uniform dimension");
                let qr = PivotedQr::factor(&family, &[], cfg.rank_tol * 1e-3)
                    .expect("positive tolerance");
                let coeffs = qr.coefficients(&nk);
                let mut r = vec![0.0; work.len()];
                for (&pos, c) in qr.pivots.iter().zip(coeffs) {
                    r[pos] = c;
                }
                (qr.orthogonal_residual(&nk), r)
            };
            let slack = orient * inst.constraint_value(k, &x);
            let zz = norm(&z);
            let full_step = if zz > cfg.rank_tol * norm(&nk) {
                Some(slack.max(0.0) / (zz * zz))
            } else {
                None
            };
            let mut partial: Option<(f64, usize)> = None;
            for (pos, e) in work.iter().enumerate() {
                if inst.is_equality(e.index) || r[pos] <= 0.0 {
                    continue;
                }
                let t = e.mult / r[pos];
                match partial {
                    Some((best, bp)) if t > best || (t == best && work[bp].index < e.index) => {}
                    _ => partial = Some((t, pos)),
                }
            }
            let step = match (full_step, partial) {
                (None, None) => {
                    trace.push(SolverEvent::DualInfeasible { index: k });
                    status = ProjectionStatus::InfeasibleSet;
                    break 'outer;
                }
                (Some(t2), Some((t1, _))) if t2 <= t1 => (t2, None),
                (Some(t2), None) => (t2, None),
                (_, Some((t1, pos))) => (t1.max(0.0), Some(pos)),
            };
            let (t, blocking) = step;
            for (e, ri) in work.iter_mut().zip(&r) {
                e.mult -= t * ri;
            }
            uk += t;
            match blocking {
                None => {
                    work.push(WorkingEntry {
                        index: k,
                        orient,
                        mult: uk,
                    });
                    trace.push(SolverEvent::Add { index: k });
                    x = recompute(&work, None);
                    break;
                }
                Some(pos) => {
                    let dropped = work.remove(pos);
                    trace.push(SolverEvent::Drop { index: dropped.index });
                    x = recompute(&work, Some((k, orient, uk)));
                }
            }
        }
    }

    if status == ProjectionStatus::InfeasibleSet {
        if n <= cfg.enumeration_guard {
            let bf = project_bruteforce(inst, w, cfg)?;
            if bf.status == ProjectionStatus::InfeasibleSet {
                return Ok(ProjectionResult::empty_set(inst, w, iterations, trace));
            }
            let mut bf = bf;
            trace.push(SolverEvent::EnumerationFallback);
            bf.trace = trace;
            bf.iterations += iterations;
            return Ok(bf);
        }
        return Ok(ProjectionResult::empty_set(inst, w, iterations, trace));
    }

    let mut multipliers = vec![0.0; n];
    for e in &work {
        multipliers[e.index] = e.orient * e.mult;
    }
    let mut best = finish(inst, w, x, multipliers, iterations, status, trace.clone(), cfg);

    if status == ProjectionStatus::Converged {
        let set: Vec<usize> = work.iter().map(|e| e.index).collect();
        if let Some((px, lam)) = equality_projection(inst, w, &set, cfg.rank_tol) {
            // one round of iterative refinement on the tight constraints
            let (px, lam) = match equality_projection(inst, &px, &set, cfg.rank_tol) {
                Some((rx, dl)) => (rx, lam.iter().zip(dl).map(|(a, b)| a + b).collect()),
                None => (px, lam),
            };
            let mut pm = vec![0.0; n];
            for (&i, l) in set.iter().zip(lam) {
                pm[i] = l;
            }
            let mut ptrace = trace;
            ptrace.push(SolverEvent::Polish);
            let polished = finish(inst, w, px, pm, iterations, status, ptrace, cfg);
            if polished.kkt_residual <= best.kkt_residual {
                best = polished;
            }
        }
        // a nearly empty set can leave the dual iteration at an infeasible
        // point; the enumeration then decides
        if inst.residual(&best.point)? > cfg.feasibility_tol && n <= cfg.enumeration_guard {
            let mut bf = project_bruteforce(inst, w, cfg)?;
            if bf.status == ProjectionStatus::InfeasibleSet {
                return Ok(ProjectionResult::empty_set(inst, w, iterations, best.trace));
            }
            let mut trace = best.trace;
            trace.push(SolverEvent::EnumerationFallback);
            bf.trace = trace;
            bf.iterations += iterations;
            return Ok(bf);
        }
    }
    Ok(best)
}

/// Projection by enumeration of independent active sets.
///
/// A maximal independent subset `E` of the equalities is fixed; every subset
/// `T` of the inequalities with `E ∪ T` independent yields the projection
/// onto the affine set where those constraints are tight. The closest
/// candidate feasible for the full system is the projection; among
/// candidates at that distance, one with sign-correct multipliers is
/// preferred.
pub fn project_bruteforce(inst: &PolyhedronInstance, w: &[f64], cfg: &ProjectionConfig) -> Result<ProjectionResult> {
    check_dim("projection target", inst.dim(), w.len())?;
    let n = inst.len();
    if n > cfg.enumeration_guard {
        return Err(Error::GuardExceeded {
            size: n,
            guard: cfg.enumeration_guard,
        });
    }
    let eq: Vec<usize> = inst.equalities().collect();
    let base: Vec<usize> = if eq.is_empty() {
        Vec::new()
    } else {
        let fam = inst.gradient_family(&eq)?;
        let mut keep: Vec<usize> = crate::linalg::max_independent_subfamily(&fam, &[], cfg.rank_tol)?
            .into_iter()
            .map(|pos| eq[pos])
            .collect();
        keep.sort_unstable();
        keep
    };
    let ineq: Vec<usize> = inst.inequalities().collect();

    struct Candidate {
        point: Vec<f64>,
        multipliers: Vec<f64>,
        distance: f64,
        sign_ok: bool,
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut examined = 0usize;
    for mask in 0u64..(1u64 << ineq.len()) {
        let mut set = base.clone();
        set.extend(
            ineq.iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &i)| i),
        );
        if set.len() > inst.dim() {
            continue;
        }
        examined += 1;
        let Some((x, lam)) = equality_projection(inst, w, &set, cfg.rank_tol) else {
            continue;
        };
        if inst.residual(&x)? > cfg.feasibility_tol {
            continue;
        }
        let mut multipliers = vec![0.0; n];
        for (&i, l) in set.iter().zip(lam) {
            multipliers[i] = l;
        }
        let sign_ok = ineq.iter().all(|&i| multipliers[i] >= -cfg.kkt_tol);
        candidates.push(Candidate {
            distance: dist(w, &x),
            point: x,
            multipliers,
            sign_ok,
        });
    }

    let Some(best_distance) = candidates.iter().map(|c| c.distance).min_by(f64::total_cmp) else {
        return Ok(ProjectionResult::empty_set(inst, w, examined, Vec::new()));
    };
    let window = best_distance + 1e-9 * (1.0 + best_distance);
    let chosen = candidates
        .iter()
        .filter(|c| c.distance <= window && c.sign_ok)
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
        .or_else(|| candidates.iter().min_by(|a, b| a.distance.total_cmp(&b.distance)))
        .expect("non-empty");
    Ok(finish(
        inst,
        w,
        chosen.point.clone(),
        chosen.multipliers.clone(),
        examined,
        ProjectionStatus::Converged,
        Vec::new(),
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedron::{AffineConstraint, ConstraintKind, MovingPolyhedron};
    use approx::assert_relative_eq;

    fn paper_at(p: [f64; 2]) -> PolyhedronInstance {
        crate::scenarios::paper_example().problem.instantiate(&p).unwrap()
    }

    fn halfspace() -> PolyhedronInstance {
        MovingPolyhedron::new(
            vec![AffineConstraint::fixed(ConstraintKind::Inequality, vec![1.0, 0.0], 0.0, 1)],
            vec![0.0],
            vec![0.0, 0.0],
        )
        .unwrap()
        .base_instance()
    }

    #[test]
    fn paper_example_projection() {
        let cfg = ProjectionConfig::default();
        let r = project(&paper_at([1.0, 1.0]), &[1.0, 2.0], &cfg).unwrap();
        assert!(r.converged());
        assert!(r.point.iter().all(|x| x.abs() < 1e-14));
        assert_relative_eq!(r.distance, 5f64.sqrt(), max_relative = 1e-12);
        assert!(r.kkt_residual <= 1e-12);

        let r = project(&paper_at([1.0, 1.0]), &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(r.distance, 0.0);
        assert!(r.multipliers.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn halfspace_projection() {
        let cfg = ProjectionConfig::default();
        let r = project(&halfspace(), &[1.0, 1.0], &cfg).unwrap();
        assert_relative_eq!(r.point[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.point[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(r.multipliers[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(r.distance, 1.0, epsilon = 1e-15);
        assert_eq!(r.active, vec![0]);
    }

    #[test]
    fn bruteforce_agrees_on_paper_sequence() {
        let cfg = ProjectionConfig::default();
        for k in 1..=5 {
            let kf = k as f64;
            let inst = paper_at([1.0 / (kf * kf), 1.0 / (kf * kf)]);
            let w = [1.0 / kf, 2.0 / kf];
            let a = project(&inst, &w, &cfg).unwrap();
            let b = project_bruteforce(&inst, &w, &cfg).unwrap();
            assert_relative_eq!(a.distance, b.distance, max_relative = 1e-12);
            assert!(dist(&a.point, &b.point) < 1e-12);
            assert!(b.kkt_residual < 1e-12);
        }
    }

    #[test]
    fn bruteforce_simplex_by_hand() {
        // {x ≥ 0, x1 + x2 ≤ 1} written as ≤ constraints; w = (1, 0.5)
        // projects onto the edge x1 + x2 = 1 at (0.75, 0.25)
        let mp = MovingPolyhedron::new(
            vec![
                AffineConstraint::fixed(ConstraintKind::Inequality, vec![-1.0, 0.0], 0.0, 1),
                AffineConstraint::fixed(ConstraintKind::Inequality, vec![0.0, -1.0], 0.0, 1),
                AffineConstraint::fixed(ConstraintKind::Inequality, vec![1.0, 1.0], 1.0, 1),
            ],
            vec![0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let inst = mp.base_instance();
        let cfg = ProjectionConfig::default();
        for r in [
            project_bruteforce(&inst, &[1.0, 0.5], &cfg).unwrap(),
            project(&inst, &[1.0, 0.5], &cfg).unwrap(),
        ] {
            assert_relative_eq!(r.point[0], 0.75, epsilon = 1e-14);
            assert_relative_eq!(r.point[1], 0.25, epsilon = 1e-14);
            assert_relative_eq!(r.multipliers[2], 0.25, epsilon = 1e-14);
        }
        // w = (2, -1) lands on the vertex (1, 0): active {1, 2}
        let r = project(&inst, &[2.0, -1.0], &cfg).unwrap();
        assert_relative_eq!(r.point[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r.point[1], 0.0, epsilon = 1e-14);
        assert_eq!(r.active, vec![1, 2]);
        assert!(r.kkt_residual < 1e-12);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let inst = PolyhedronInstance {
            param: vec![],
            gradients: vec![vec![1.0], vec![1.0]],
            rhs: vec![0.0, 1.0],
            n_eq: 2,
        };
        let cfg = ProjectionConfig::default();
        assert_eq!(
            project_bruteforce(&inst, &[0.3], &cfg).unwrap().status,
            ProjectionStatus::InfeasibleSet
        );
        assert_eq!(project(&inst, &[0.3], &cfg).unwrap().status, ProjectionStatus::InfeasibleSet);
    }

    #[test]
    fn bruteforce_guard() {
        let inst = PolyhedronInstance {
            param: vec![],
            gradients: vec![vec![1.0]; 21],
            rhs: vec![1.0; 21],
            n_eq: 0,
        };
        assert!(matches!(
            project_bruteforce(&inst, &[0.0], &ProjectionConfig::default()),
            Err(Error::GuardExceeded { size: 21, guard: 20 })
        ));
    }

    #[test]
    fn kkt_residual_examples() {
        let inst = halfspace();
        let w = [1.0, 1.0];
        let cfg = ProjectionConfig::default();
        let exact = project(&inst, &w, &cfg).unwrap();
        assert!(kkt_residual(&inst, &w, &exact) < 1e-12);

        let mut moved = exact.clone();
        moved.point[1] += 1e-3;
        let r = kkt_residual(&inst, &w, &moved);
        assert!(r >= 1e-3 * (1.0 - 1e-9), "{r}");

        let mut flipped = exact.clone();
        flipped.multipliers[0] = -flipped.multipliers[0];
        let b = kkt_breakdown(&inst, &w, &flipped.point, &flipped.multipliers);
        assert_relative_eq!(b.sign, 1.0);
        assert!(b.max() >= 1.0);
    }

    #[test]
    fn redundant_equalities_and_degenerate_vertex() {
        // x1 = 0 twice, plus three inequalities through the origin
        let inst = PolyhedronInstance {
            param: vec![],
            gradients: vec![
                vec![1.0, 0.0],
                vec![2.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
                vec![-1.0, 1.0],
            ],
            rhs: vec![0.0; 5],
            n_eq: 2,
        };
        let cfg = ProjectionConfig::default();
        let w = [0.7, 0.9];
        let a = project(&inst, &w, &cfg).unwrap();
        let b = project_bruteforce(&inst, &w, &cfg).unwrap();
        assert!(a.converged());
        assert!(dist(&a.point, &b.point) < 1e-12);
        assert!(a.kkt_residual < 1e-12);
    }
}
