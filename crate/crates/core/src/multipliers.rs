//! Canonical forms for the multipliers of a projection.
//!
//! The solver's multipliers are one point of a polytope that is not a
//! singleton when active gradients are dependent. This module reduces them to
//! representations on linearly independent gradient subfamilies, converts
//! between the unnormalised multipliers of `w − P = Σ λ̂_i g_i` and the
//! normalised ones of the unit direction, and finds a multiplier of minimal
//! ℓ₁ norm.

use serde::{Deserialize, Serialize};

use crate::error::{check_tol, Error, Result};
use crate::linalg::{
    dependency_witness, max_independent_subfamily, norm, numerical_rank, sub, Dependency,
    PivotedQr, RankCertificate, VectorFamily,
};
use crate::polyhedron::{MovingPolyhedron, PolyhedronInstance};
use crate::projection::{project, ProjectionConfig, ProjectionResult, ProjectionStatus};

/// Coefficients at or below this are treated as zero.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Relative reconstruction tolerance for combinations and certificates.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Maximal independent subset of the equality gradients of an instance.
pub fn reduce_equalities_instance(inst: &PolyhedronInstance, tol: f64) -> Result<Vec<usize>> {
    let eq: Vec<usize> = inst.equalities().collect();
    if eq.is_empty() {
        return Ok(Vec::new());
    }
    let family = inst.gradient_family(&eq)?;
    let mut kept: Vec<usize> = max_independent_subfamily(&family, &[], tol)?
        .into_iter()
        .map(|pos| eq[pos])
        .collect();
    kept.sort_unstable();
    Ok(kept)
}

/// Drop redundant equalities at parameter `p`.
///
/// `C(p)` must be nonempty. The dropped equalities are checked to vanish on
/// the projection of `x̄` onto `C(p)`.
pub fn reduce_equalities(mp: &MovingPolyhedron, p: &[f64], tol: f64) -> Result<Vec<usize>> {
    let inst = mp.instantiate(p)?;
    let cfg = ProjectionConfig::from(mp.tolerances());
    let proj = project(&inst, mp.base_point(), &cfg)?;
    match proj.status {
        ProjectionStatus::Converged => {}
        ProjectionStatus::InfeasibleSet => return Err(Error::InfeasibleSet { param: p.to_vec() }),
        ProjectionStatus::IterationLimit => {
            return Err(Error::SolverFailure("iteration limit while checking feasibility".into()))
        }
    }
    let kept = reduce_equalities_instance(&inst, tol)?;
    for i in inst.equalities().filter(|i| !kept.contains(i)) {
        let g = inst.constraint_value(i, &proj.point).abs();
        if g > mp.tolerances().feasibility {
            return Err(Error::Precondition(format!(
                "dropped equality {i} does not vanish on C(p) (|G| = {g:e})"
            )));
        }
    }
    Ok(kept)
}

/// A positive combination over an independent subfamily.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveCombination {
    /// Surviving positions of `J2`, ascending.
    pub j2: Vec<usize>,
    /// Coefficients indexed by family position; zero outside `J1 ∪ J2′`.
    pub coefficients: Vec<f64>,
    /// Number of elimination steps performed.
    pub iterations: usize,
}

/// Rewrite `x = Σ_{J1} λ_i a_i + Σ_{J2} λ_i a_i` (with `λ ≥ 0` on `J2`) as a
/// combination over an independent subfamily `J1 ∪ J2′`, `J2′ ⊆ J2`, keeping
/// the `J2′` coefficients positive.
///
/// Each step takes a dependency `β` among the current vectors, oriented to
/// have a positive `J2` entry, and subtracts `(λ_k/β_k)·β` where `k`
/// minimises `λ_i/β_i` over `J2` entries with `β_i > 0` (smallest position on
/// ties). That zeroes `λ_k` and keeps every other `J2` coefficient
/// nonnegative.
pub fn reduce_positive_combination(
    x: &[f64],
    family: &VectorFamily,
    j1: &[usize],
    j2: &[usize],
    lambda: &[f64],
    tol: f64,
) -> Result<PositiveCombination> {
    check_tol(tol)?;
    let n = family.len();
    crate::error::check_dim("combination target", family.dim(), x.len())?;
    crate::error::check_dim("coefficients", n, lambda.len())?;
    for &i in j1.iter().chain(j2) {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
    }
    if j1.iter().any(|i| j2.contains(i)) {
        return Err(Error::Precondition("J1 and J2 overlap".into()));
    }
    let j1_family = family.subfamily(j1)?;
    if numerical_rank(&j1_family, tol)?.rank < j1.len() {
        return Err(Error::Precondition("J1 vectors are linearly dependent".into()));
    }
    if let Some(&i) = j2.iter().find(|&&i| lambda[i] < -POSITIVITY_FLOOR) {
        return Err(Error::Precondition(format!(
            "negative coefficient {:e} on J2 position {i}",
            lambda[i]
        )));
    }

    let mut coeffs = vec![0.0; n];
    for &i in j1 {
        coeffs[i] = lambda[i];
    }
    let scale = norm(x).max(1.0);
    let reconstruction = |coeffs: &[f64]| norm(&sub(x, &family.combine(coeffs)));
    let initial_support: Vec<f64> = (0..n)
        .map(|i| if j1.contains(&i) || j2.contains(&i) { lambda[i] } else { 0.0 })
        .collect();
    let err = reconstruction(&initial_support);
    if err > RECONSTRUCTION_TOL * scale {
        return Err(Error::Precondition(format!(
            "coefficients do not reconstruct the target (error {err:e})"
        )));
    }

    let mut live: Vec<usize> = j2.iter().copied().filter(|&i| lambda[i] > POSITIVITY_FLOOR).collect();
    live.sort_unstable();
    for &i in &live {
        coeffs[i] = lambda[i];
    }
    let budget = live.len();
    let mut iterations = 0;
    loop {
        let mut current: Vec<usize> = j1.iter().chain(&live).copied().collect();
        current.sort_unstable();
        let sub_family = family.subfamily(&current)?;
        let Dependency::Dependent(witness) = dependency_witness(&sub_family, tol)? else {
            break;
        };
        iterations += 1;
        if iterations > budget {
            return Err(Error::SolverFailure(
                "positive-combination reduction exceeded |J2| steps".into(),
            ));
        }
        let mut beta = vec![0.0; n];
        for (pos, &i) in current.iter().enumerate() {
            beta[i] = witness.coefficients[pos];
        }
        if !live.iter().any(|&i| beta[i] > 0.0) {
            beta.iter_mut().for_each(|b| *b = -*b);
        }
        let Some(k) = live
            .iter()
            .copied()
            .filter(|&i| beta[i] > 0.0)
            .min_by(|&a, &b| (coeffs[a] / beta[a]).total_cmp(&(coeffs[b] / beta[b])).then(a.cmp(&b)))
        else {
            return Err(Error::Precondition(
                "dependency confined to J1; J1 vectors are dependent".into(),
            ));
        };
        let step = coeffs[k] / beta[k];
        for &i in &current {
            coeffs[i] -= step * beta[i];
        }
        coeffs[k] = 0.0;
        live.retain(|&i| i != k);
        for &i in &live {
            debug_assert!(
                coeffs[i] >= -POSITIVITY_FLOOR * scale,
                "coefficient went negative: {}",
                coeffs[i]
            );
        }
        // ties in the ratio test leave exact (or rounding-level) zeros behind
        live.retain(|&i| {
            if coeffs[i] > POSITIVITY_FLOOR {
                true
            } else {
                coeffs[i] = 0.0;
                false
            }
        });
    }

    // refit on the final independent support, keeping the result only if the
    // signs survive and the fit improves
    let mut support: Vec<usize> = j1.iter().chain(&live).copied().collect();
    support.sort_unstable();
    if !support.is_empty() {
        let fam = family.subfamily(&support)?;
        let qr = PivotedQr::factor(&fam, &[], tol)?;
        if qr.rank() == support.len() {
            let c = qr.coefficients(x);
            let mut refit = vec![0.0; n];
            for (&pos, v) in qr.pivots.iter().zip(c) {
                refit[support[pos]] = v;
            }
            let signs_ok = live.iter().all(|&i| refit[i] > POSITIVITY_FLOOR);
            if signs_ok && reconstruction(&refit) <= reconstruction(&coeffs) {
                coeffs = refit;
            }
        }
    }

    Ok(PositiveCombination {
        j2: live,
        coefficients: coeffs,
        iterations,
    })
}

/// Representation of `w − P` over linearly independent active gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierCertificate {
    /// Retained equalities `I₁⁰`.
    pub i1: Vec<usize>,
    /// Retained inequalities `I₂⁰`, all with positive coefficients.
    pub i2: Vec<usize>,
    /// Coefficients for `i1` followed by `i2`.
    pub coefficients: Vec<f64>,
    /// Rank certificate of `{g_i : i ∈ I₁⁰ ∪ I₂⁰}` in that order.
    pub independence: RankCertificate,
    pub reconstruction_error: f64,
}

impl MultiplierCertificate {
    pub fn indices(&self) -> Vec<usize> {
        self.i1.iter().chain(&self.i2).copied().collect()
    }

    /// Coefficients spread over all `n` constraints.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, c) in self.indices().into_iter().zip(&self.coefficients) {
            out[i] = *c;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ReducedMultiplier {
    /// `w` lies in `C(p)`; the representation is empty.
    Trivial,
    Certificate(MultiplierCertificate),
}

/// Reduce the solver multipliers of a converged projection to a certificate.
pub fn reduced_multiplier(
    inst: &PolyhedronInstance,
    w: &[f64],
    proj: &ProjectionResult,
    tol: f64,
) -> Result<ReducedMultiplier> {
    if !proj.converged() {
        return Err(Error::Precondition("projection did not converge".into()));
    }
    if proj.distance <= 0.0 {
        return Ok(ReducedMultiplier::Trivial);
    }
    let n = inst.len();
    let target = sub(w, &proj.point);
    let i1 = reduce_equalities_instance(inst, tol)?;

    // fold multipliers of dropped equalities into the kept ones
    let mut lambda = proj.multipliers.clone();
    let dropped: Vec<usize> = inst
        .equalities()
        .filter(|i| !i1.contains(i) && lambda[*i] != 0.0)
        .collect();
    if !dropped.is_empty() {
        if i1.is_empty() {
            // every equality gradient vanishes numerically
            for i in dropped {
                lambda[i] = 0.0;
            }
        } else {
            let fam = inst.gradient_family(&i1)?;
            let qr = PivotedQr::factor(&fam, &[], tol)?;
            for i in dropped {
                let c = qr.coefficients(&inst.gradients[i]);
                for (&pos, v) in qr.pivots.iter().zip(c) {
                    lambda[i1[pos]] += lambda[i] * v;
                }
                lambda[i] = 0.0;
            }
        }
    }

    let j2: Vec<usize> = inst
        .inequalities()
        .filter(|&i| proj.active.contains(&i) && lambda[i] > POSITIVITY_FLOOR)
        .collect();
    let mut members: Vec<usize> = i1.iter().chain(&j2).copied().collect();
    members.sort_unstable();
    let family = inst.gradient_family(&members)?;
    let local = |set: &[usize]| -> Vec<usize> {
        set.iter()
            .map(|i| members.iter().position(|m| m == i).expect("member"))
            .collect()
    };
    let local_lambda: Vec<f64> = members.iter().map(|&i| lambda[i]).collect();
    let reduced = reduce_positive_combination(&target, &family, &local(&i1), &local(&j2), &local_lambda, tol)?;

    let i2: Vec<usize> = reduced.j2.iter().map(|&pos| members[pos]).collect();
    let mut coefficients = Vec::with_capacity(i1.len() + i2.len());
    for &i in i1.iter().chain(&i2) {
        let pos = members.iter().position(|&m| m == i).expect("member");
        coefficients.push(reduced.coefficients[pos]);
    }
    let support: Vec<usize> = i1.iter().chain(&i2).copied().collect();
    let independence = numerical_rank(&inst.gradient_family(&support)?, tol)?;
    let mut dense = vec![0.0; n];
    for (&i, &c) in support.iter().zip(&coefficients) {
        dense[i] = c;
    }
    let reconstruction_error = norm(&sub(&target, &inst.combine(&dense)));
    Ok(ReducedMultiplier::Certificate(MultiplierCertificate {
        i1,
        i2,
        coefficients,
        independence,
        reconstruction_error,
    }))
}

/// `λ = λ̂ / ‖w − P‖`.
pub fn normalize_multiplier(unnormalized: &[f64], distance: f64) -> Result<Vec<f64>> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::Precondition(format!(
            "normalisation needs a positive distance, got {distance}"
        )));
    }
    if unnormalized.iter().all(|&l| l == 0.0) {
        return Err(Error::Precondition(
            "zero multiplier with positive distance violates stationarity".into(),
        ));
    }
    Ok(unnormalized.iter().map(|l| l / distance).collect())
}

/// `λ̂ = λ · ‖w − P‖`.
pub fn denormalize_multiplier(normalized: &[f64], distance: f64) -> Result<Vec<f64>> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::Precondition(format!(
            "normalisation needs a positive distance, got {distance}"
        )));
    }
    Ok(normalized.iter().map(|l| l * distance).collect())
}

/// `‖(P − w)/‖P − w‖ + Σ λ_i g_i‖` for normalised multipliers.
pub fn stationarity_residual(inst: &PolyhedronInstance, w: &[f64], point: &[f64], lambda: &[f64]) -> f64 {
    scaled_stationarity_residual(inst, w, point, lambda, 1.0)
}

/// The same residual for the doubled unit-direction system,
/// `‖2(P − w)/‖P − w‖ + Σ λ*_i g_i‖`.
pub fn starred_stationarity_residual(inst: &PolyhedronInstance, w: &[f64], point: &[f64], lambda: &[f64]) -> f64 {
    scaled_stationarity_residual(inst, w, point, lambda, 2.0)
}

fn scaled_stationarity_residual(
    inst: &PolyhedronInstance,
    w: &[f64],
    point: &[f64],
    lambda: &[f64],
    factor: f64,
) -> f64 {
    let d = sub(point, w);
    let nd = norm(&d);
    let combo = inst.combine(lambda);
    d.iter()
        .zip(&combo)
        .map(|(di, ci)| (factor * di / nd + ci).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// A multiplier of minimal ℓ₁ norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinL1Multiplier {
    /// Normalised multipliers over all constraints.
    pub multipliers: Vec<f64>,
    pub subfamily: Vec<usize>,
    pub l1: f64,
    /// Number of basic solutions examined.
    pub candidates: usize,
}

/// Minimal-ℓ₁ normalised multiplier by enumeration of basic solutions.
///
/// Every independent subset `S` of the active set is tried: the unit
/// direction `(w − P)/‖w − P‖` is decomposed on `{g_i : i ∈ S}` and kept if
/// the decomposition is exact and nonnegative on inequalities. Ties in the
/// ℓ₁ norm go to the lexicographically smallest `S`.
pub fn min_l1_multiplier(
    inst: &PolyhedronInstance,
    w: &[f64],
    proj: &ProjectionResult,
    guard: usize,
    tol: f64,
) -> Result<MinL1Multiplier> {
    if !proj.converged() {
        return Err(Error::Precondition("projection did not converge".into()));
    }
    if proj.distance <= 0.0 {
        return Err(Error::Precondition("w lies in C(p); no normalised multiplier".into()));
    }
    let active = &proj.active;
    if active.len() > guard {
        return Err(Error::GuardExceeded {
            size: active.len(),
            guard,
        });
    }
    let n = inst.len();
    let u: Vec<f64> = sub(w, &proj.point).iter().map(|v| v / proj.distance).collect();
    let dim = inst.dim();

    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut candidates = 0usize;
    for mask in 1u64..(1u64 << active.len()) {
        let set: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &i)| i)
            .collect();
        if set.len() > dim {
            continue;
        }
        let fam = inst.gradient_family(&set)?;
        let qr = PivotedQr::factor(&fam, &[], tol)?;
        if qr.rank() < set.len() {
            continue;
        }
        let c = qr.coefficients(&u);
        let mut lambda = vec![0.0; n];
        for (&pos, v) in qr.pivots.iter().zip(c) {
            lambda[set[pos]] = v;
        }
        if norm(&sub(&u, &inst.combine(&lambda))) > RECONSTRUCTION_TOL {
            continue;
        }
        if set.iter().any(|&i| !inst.is_equality(i) && lambda[i] < -RECONSTRUCTION_TOL) {
            continue;
        }
        for &i in &set {
            if !inst.is_equality(i) && lambda[i] < 0.0 {
                lambda[i] = 0.0;
            }
        }
        candidates += 1;
        let l1: f64 = lambda.iter().map(|l| l.abs()).sum();
        let better = match &best {
            None => true,
            Some((b, bset, _)) => {
                if l1 < b * (1.0 - 1e-12) {
                    true
                } else if l1 <= b * (1.0 + 1e-12) {
                    set < *bset
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((l1, set, lambda));
        }
    }
    let (l1, subfamily, multipliers) = best.ok_or_else(|| {
        Error::SolverFailure("no basic multiplier reproduces the projection direction".into())
    })?;
    Ok(MinL1Multiplier {
        multipliers,
        subfamily,
        l1,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedron::{AffineConstraint, ConstraintKind};
    use approx::assert_relative_eq;

    fn fam(v: &[&[f64]]) -> VectorFamily {
        VectorFamily::from_vectors(v.iter().map(|x| x.to_vec()).collect()).unwrap()
    }

    fn paper() -> MovingPolyhedron {
        crate::scenarios::paper_example().problem
    }

    #[test]
    fn reduce_equalities_examples() {
        let mp = MovingPolyhedron::new(
            vec![
                AffineConstraint::fixed(ConstraintKind::Equality, vec![1.0, 0.0], 1.0, 1),
                AffineConstraint::fixed(ConstraintKind::Equality, vec![2.0, 0.0], 2.0, 1),
            ],
            vec![0.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert_eq!(reduce_equalities(&mp, &[0.0], 1e-9).unwrap(), vec![0]);
        assert_eq!(reduce_equalities(&paper(), &[0.3, -0.1], 1e-9).unwrap(), vec![0, 1]);
    }

    #[test]
    fn reduce_equalities_rejects_empty_set() {
        // x1 = 0 and p1·x1 = p1 only agree at p1 = 0
        let mp = crate::scenarios::scenario_by_name("switched-equalities").unwrap().problem;
        assert!(matches!(
            reduce_equalities(&mp, &[0.5], 1e-9),
            Err(Error::InfeasibleSet { .. })
        ));
    }

    #[test]
    fn positive_combination_single_step() {
        let f = fam(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let r = reduce_positive_combination(&[1.0, 2.0], &f, &[0, 1], &[2], &[0.0, 1.0, 1.0], 1e-9).unwrap();
        assert!(r.j2.is_empty());
        assert_relative_eq!(r.coefficients[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r.coefficients[1], 2.0, epsilon = 1e-14);
        assert_eq!(r.coefficients[2], 0.0);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn positive_combination_unchanged_when_independent() {
        let f = fam(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = reduce_positive_combination(&[2.0, 3.0], &f, &[0], &[1], &[2.0, 3.0], 1e-9).unwrap();
        assert_eq!(r.j2, vec![1]);
        assert_eq!(r.iterations, 0);
        assert_relative_eq!(r.coefficients[1], 3.0);
    }

    #[test]
    fn positive_combination_ratio_rule() {
        let f = fam(&[&[1.0, 0.0], &[2.0, 0.0]]);
        let r = reduce_positive_combination(&[3.0, 0.0], &f, &[], &[0, 1], &[1.0, 1.0], 1e-9).unwrap();
        assert_eq!(r.j2, vec![0]);
        assert_relative_eq!(r.coefficients[0], 3.0, epsilon = 1e-14);
        assert_eq!(r.coefficients[1], 0.0);
    }

    #[test]
    fn positive_combination_preconditions() {
        let f = fam(&[&[1.0, 0.0], &[2.0, 0.0], &[0.0, 1.0]]);
        assert!(reduce_positive_combination(&[3.0, 0.0], &f, &[0, 1], &[], &[1.0, 1.0, 0.0], 1e-9).is_err());
        assert!(reduce_positive_combination(&[1.0, 0.0], &f, &[], &[0, 2], &[-1.0, 0.0, 0.0], 1e-9).is_err());
        assert!(reduce_positive_combination(&[5.0, 5.0], &f, &[], &[0, 2], &[1.0, 0.0, 1.0], 1e-9).is_err());
    }

    #[test]
    fn reduced_multiplier_paper_example() {
        let inst = paper().instantiate(&[1.0, 1.0]).unwrap();
        let w = [1.0, 2.0];
        let mut proj = project(&inst, &w, &ProjectionConfig::default()).unwrap();
        proj.multipliers = vec![0.0, 1.0, 1.0];
        let ReducedMultiplier::Certificate(cert) = reduced_multiplier(&inst, &w, &proj, 1e-9).unwrap() else {
            panic!("expected certificate");
        };
        assert_eq!(cert.i1, vec![0, 1]);
        assert!(cert.i2.is_empty());
        assert_relative_eq!(cert.coefficients[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(cert.coefficients[1], 2.0, epsilon = 1e-14);
        assert!(cert.reconstruction_error < 1e-14);
        assert_eq!(cert.independence.rank, 2);
    }

    #[test]
    fn reduced_multiplier_halfspace_and_trivial() {
        let mp = MovingPolyhedron::new(
            vec![AffineConstraint::fixed(ConstraintKind::Inequality, vec![0.0, 2.0], 0.0, 1)],
            vec![0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let inst = mp.base_instance();
        let cfg = ProjectionConfig::default();
        let w = [1.0, 3.0];
        let proj = project(&inst, &w, &cfg).unwrap();
        let ReducedMultiplier::Certificate(cert) = reduced_multiplier(&inst, &w, &proj, 1e-9).unwrap() else {
            panic!("expected certificate");
        };
        assert_eq!(cert.i2, vec![0]);
        // w − P = (0, 3) = 1.5 · (0, 2)
        assert_relative_eq!(cert.coefficients[0], 1.5, epsilon = 1e-14);

        let inside = project(&inst, &[1.0, -1.0], &cfg).unwrap();
        assert_eq!(
            reduced_multiplier(&inst, &[1.0, -1.0], &inside, 1e-9).unwrap(),
            ReducedMultiplier::Trivial
        );
    }

    #[test]
    fn normalisation_examples() {
        for k in [1.0f64, 2.0, 7.0] {
            let lam_hat = [1.0 / k, 2.0 / k, 0.0];
            let lam = normalize_multiplier(&lam_hat, 5f64.sqrt() / k).unwrap();
            assert_relative_eq!(lam[0], 1.0 / 5f64.sqrt(), max_relative = 1e-14);
            assert_relative_eq!(lam[1], 2.0 / 5f64.sqrt(), max_relative = 1e-14);
            assert_eq!(lam[2], 0.0);
            let back = denormalize_multiplier(&lam, 5f64.sqrt() / k).unwrap();
            for (a, b) in back.iter().zip(lam_hat) {
                assert_relative_eq!(*a, b, max_relative = 1e-14);
            }
        }
        assert!(normalize_multiplier(&[1.0], 0.0).is_err());
        assert!(normalize_multiplier(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn min_l1_paper_example() {
        let s5 = 5f64.sqrt();
        for (k, expected, subfamily) in [(1.0f64, 2.0 / s5, vec![1, 2]), (3.0, 3.0 / s5, vec![0, 1])] {
            let inst = paper().instantiate(&[1.0 / (k * k), 1.0 / (k * k)]).unwrap();
            let w = [1.0 / k, 2.0 / k];
            let proj = project(&inst, &w, &ProjectionConfig::default()).unwrap();
            let m = min_l1_multiplier(&inst, &w, &proj, 20, 1e-9).unwrap();
            assert_relative_eq!(m.l1, expected, max_relative = 1e-12);
            assert_eq!(m.subfamily, subfamily);
        }
    }

    #[test]
    fn min_l1_single_constraint() {
        let mp = MovingPolyhedron::new(
            vec![AffineConstraint::fixed(ConstraintKind::Inequality, vec![3.0, 4.0], 0.0, 1)],
            vec![0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let inst = mp.base_instance();
        let w = [3.0, 4.0];
        let proj = project(&inst, &w, &ProjectionConfig::default()).unwrap();
        let m = min_l1_multiplier(&inst, &w, &proj, 20, 1e-9).unwrap();
        assert_relative_eq!(m.multipliers[0], 0.2, max_relative = 1e-14);
        assert!(min_l1_multiplier(&inst, &w, &proj, 0, 1e-9).is_err());
    }

    #[test]
    fn starred_system_is_doubled() {
        let inst = paper().instantiate(&[0.5, 0.5]).unwrap();
        let w = [0.3, 0.6];
        let proj = project(&inst, &w, &ProjectionConfig::default()).unwrap();
        let lam = normalize_multiplier(&proj.multipliers, proj.distance).unwrap();
        assert!(stationarity_residual(&inst, &w, &proj.point, &lam) < 1e-12);
        let doubled: Vec<f64> = lam.iter().map(|l| 2.0 * l).collect();
        assert!(starred_stationarity_residual(&inst, &w, &proj.point, &doubled) < 1e-12);

        let off = [lam[0] + 0.1, lam[1], lam[2]];
        let doubled_off: Vec<f64> = off.iter().map(|l| 2.0 * l).collect();
        assert_relative_eq!(
            starred_stationarity_residual(&inst, &w, &proj.point, &doubled_off),
            2.0 * stationarity_residual(&inst, &w, &proj.point, &off),
            max_relative = 1e-12
        );
    }
}
