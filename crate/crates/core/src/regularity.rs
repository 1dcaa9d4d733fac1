//! Sampled regularity analysis of a moving polyhedron near `(p̄, x̄)`.
//!
//! The chain checked here is: constant rank of active gradient subfamilies
//! (RCRCQ) together with inner semicontinuity of `C` at `p̄` gives bounded
//! minimal multipliers (`M`), which bound the distance-to-residual ratio
//! (`α ≤ 2M`), which in turn bounds the Aubin modulus by
//! `α · max_i(‖x‖ℓ_{g_i} + ℓ_{f_i})`. Each quantity is a supremum over a
//! neighbourhood and is estimated by a running maximum over seeded uniform
//! samples in the balls `p̄ + δ₀B` and `x̄ + δB`. Every verdict is sampled
//! evidence within the given radii.
//!
//! Estimators run sequentially; ties in the running maxima keep the smallest
//! sample index, so reports are reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm, numerical_rank, sub, PivotedQr};
use crate::multipliers::{
    min_l1_multiplier, normalize_multiplier, reduced_multiplier, ReducedMultiplier,
    RECONSTRUCTION_TOL,
};
use crate::polyhedron::{MovingPolyhedron, PolyhedronInstance};
use crate::projection::{project, ProjectionConfig, ProjectionResult, ProjectionStatus};
use crate::sampling::{scale_into, BallSampler, Stream};

/// Caveat attached to every sampled verdict.
pub const SAMPLING_CAVEAT: &str = "sampled evidence within the given radii at numerical tolerance; not a proof of the exact property";

/// Relative slack in the `α ≤ 2M` comparison.
pub const TWO_M_SLACK: f64 = 1e-6;

/// Sample pairs with `‖p₁ − p₂‖` below this are skipped by the Aubin estimator.
pub const MIN_PARAM_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub seed: u64,
    pub samples: usize,
    /// Levels of the radius-halving growth diagnostic (level 0 = full radii).
    pub levels: usize,
    pub param_radius: f64,
    pub point_radius: f64,
    /// Bound on the active-set size for basic-solution enumeration.
    pub enumeration_guard: usize,
    /// Bound on `|I_{p̄}(x̄) \ I₁|` for the RCRCQ subset table.
    pub subset_guard: usize,
}

impl SamplingPlan {
    pub fn from_problem(mp: &MovingPolyhedron) -> Self {
        let s = mp.sampling();
        let r = mp.radii();
        Self {
            seed: s.seed,
            samples: s.samples,
            levels: s.levels.max(1),
            param_radius: r.param,
            point_radius: r.point,
            enumeration_guard: crate::projection::DEFAULT_ENUMERATION_GUARD,
            subset_guard: 16,
        }
    }
}

fn projection_config(mp: &MovingPolyhedron) -> ProjectionConfig {
    ProjectionConfig::from(mp.tolerances())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankVerdict {
    Holds,
    Violated,
    Borderline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcrcqRow {
    /// `J`, with `I₁ ⊆ J ⊆ I_{p̄}(x̄)`.
    pub subset: Vec<usize>,
    pub base_rank: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    pub borderline: bool,
    pub verdict: RankVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcrcqWitness {
    pub subset: Vec<usize>,
    pub sample: usize,
    pub param: Vec<f64>,
    pub rank: usize,
    pub base_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcrcqReport {
    pub base_active: Vec<usize>,
    pub rows: Vec<RcrcqRow>,
    pub overall: RankVerdict,
    /// First violating sample for each violated subset.
    pub witnesses: Vec<RcrcqWitness>,
    pub samples: usize,
    pub caveat: String,
}

/// Sampled check of the relaxed constant rank condition.
pub fn check_rcrcq(mp: &MovingPolyhedron, plan: &SamplingPlan) -> Result<RcrcqReport> {
    let tol = mp.tolerances();
    let base = mp.base_instance();
    let base_active = base.active_set(mp.base_point(), tol.active)?;
    let i1: Vec<usize> = base.equalities().collect();
    let optional: Vec<usize> = base_active.iter().copied().filter(|&i| i >= mp.n_eq()).collect();
    if optional.len() > plan.subset_guard {
        return Err(Error::GuardExceeded {
            size: optional.len(),
            guard: plan.subset_guard,
        });
    }
    let subsets: Vec<Vec<usize>> = (0u64..(1u64 << optional.len()))
        .map(|mask| {
            let mut j = i1.clone();
            j.extend(
                optional
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &i)| i),
            );
            j
        })
        .collect();

    let rank_of = |inst: &PolyhedronInstance, j: &[usize]| -> Result<(usize, bool)> {
        if j.is_empty() {
            return Ok((0, false));
        }
        let c = numerical_rank(&inst.gradient_family(j)?, tol.rank)?;
        Ok((c.rank, c.borderline))
    };

    let mut rows = Vec::with_capacity(subsets.len());
    for j in &subsets {
        let (r, b) = rank_of(&base, j)?;
        rows.push(RcrcqRow {
            subset: j.clone(),
            base_rank: r,
            min_rank: r,
            max_rank: r,
            borderline: b,
            verdict: RankVerdict::Holds,
        });
    }
    let mut witnesses: Vec<RcrcqWitness> = Vec::new();
    let mut sampler = BallSampler::new(plan.seed, Stream::Rcrcq);
    for s in 0..plan.samples {
        let p = sampler.ball(mp.base_param(), plan.param_radius);
        let inst = mp.instantiate(&p)?;
        for row in rows.iter_mut() {
            let (r, b) = rank_of(&inst, &row.subset)?;
            row.min_rank = row.min_rank.min(r);
            row.max_rank = row.max_rank.max(r);
            row.borderline |= b;
            if r != row.base_rank && !witnesses.iter().any(|w| w.subset == row.subset) {
                witnesses.push(RcrcqWitness {
                    subset: row.subset.clone(),
                    sample: s,
                    param: p.clone(),
                    rank: r,
                    base_rank: row.base_rank,
                });
            }
        }
    }
    for row in rows.iter_mut() {
        row.verdict = if row.min_rank != row.base_rank || row.max_rank != row.base_rank {
            RankVerdict::Violated
        } else if row.borderline {
            RankVerdict::Borderline
        } else {
            RankVerdict::Holds
        };
    }
    let overall = if rows.iter().any(|r| r.verdict == RankVerdict::Violated) {
        RankVerdict::Violated
    } else if rows.iter().any(|r| r.verdict == RankVerdict::Borderline) {
        RankVerdict::Borderline
    } else {
        RankVerdict::Holds
    };
    Ok(RcrcqReport {
        base_active,
        rows,
        overall,
        witnesses,
        samples: plan.samples,
        caveat: SAMPLING_CAVEAT.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiminfReport {
    pub consistent: bool,
    /// Largest sampled `dist(x̄, C(p))`.
    pub max_distance: f64,
    pub worst_param: Option<Vec<f64>>,
    /// Sampled parameters with `C(p) = ∅`.
    pub infeasible_params: Vec<Vec<f64>>,
    pub solver_failures: usize,
    pub samples: usize,
    pub caveat: String,
}

/// Sampled check that `C(p)` meets `x̄ + δB` for all sampled `p ∈ p̄ + δ₀B`.
pub fn check_inner_semicontinuity(mp: &MovingPolyhedron, plan: &SamplingPlan) -> Result<LiminfReport> {
    let cfg = projection_config(mp);
    let mut sampler = BallSampler::new(plan.seed, Stream::Liminf);
    let mut max_distance = 0.0f64;
    let mut worst_param = None;
    let mut infeasible_params = Vec::new();
    let mut solver_failures = 0;
    for _ in 0..plan.samples {
        let p = sampler.ball(mp.base_param(), plan.param_radius);
        let inst = mp.instantiate(&p)?;
        let r = project(&inst, mp.base_point(), &cfg)?;
        match r.status {
            ProjectionStatus::Converged => {
                if worst_param.is_none() || r.distance > max_distance {
                    max_distance = r.distance;
                    worst_param = Some(p);
                }
            }
            ProjectionStatus::InfeasibleSet => infeasible_params.push(p),
            ProjectionStatus::IterationLimit => solver_failures += 1,
        }
    }
    Ok(LiminfReport {
        consistent: infeasible_params.is_empty()
            && solver_failures == 0
            && max_distance < plan.point_radius,
        max_distance,
        worst_param,
        infeasible_params,
        solver_failures,
        samples: plan.samples,
        caveat: SAMPLING_CAVEAT.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub sample: usize,
    pub param: Vec<f64>,
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleCounts {
    pub drawn: usize,
    pub retained: usize,
    pub skipped_feasible: usize,
    pub skipped_infeasible_set: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLevel {
    pub level: usize,
    pub param_radius: f64,
    pub point_radius: f64,
    pub m_hat: f64,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierBound {
    pub m_hat: f64,
    pub witness: Option<PairWitness>,
    pub counts: SampleCounts,
    /// `M̂` on radii halved `level` times. The same unit-ball samples are
    /// rescaled at every level, so the levels differ only by scale.
    pub growth: Vec<GrowthLevel>,
}

struct PairDraw {
    p: Vec<f64>,
    w: Vec<f64>,
}

fn pair_units(mp: &MovingPolyhedron, plan: &SamplingPlan) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut sampler = BallSampler::new(plan.seed, Stream::Pairs);
    (0..plan.samples)
        .map(|_| (sampler.unit(mp.param_dim()), sampler.unit(mp.ambient_dim())))
        .collect()
}

fn pairs_at(mp: &MovingPolyhedron, units: &[(Vec<f64>, Vec<f64>)], rp: f64, rx: f64) -> Vec<PairDraw> {
    units
        .iter()
        .map(|(up, ux)| PairDraw {
            p: scale_into(mp.base_param(), rp, up),
            w: scale_into(mp.base_point(), rx, ux),
        })
        .collect()
}

enum PairOutcome {
    Feasible,
    EmptySet,
    Failed,
    Outside(PolyhedronInstance, ProjectionResult),
}

fn evaluate_pair(mp: &MovingPolyhedron, cfg: &ProjectionConfig, p: &[f64], w: &[f64]) -> Result<PairOutcome> {
    let inst = mp.instantiate(p)?;
    if inst.residual(w)? <= cfg.feasibility_tol {
        return Ok(PairOutcome::Feasible);
    }
    let r = project(&inst, w, cfg)?;
    Ok(match r.status {
        ProjectionStatus::Converged if r.distance > 0.0 => PairOutcome::Outside(inst, r),
        ProjectionStatus::Converged => PairOutcome::Feasible,
        ProjectionStatus::InfeasibleSet => PairOutcome::EmptySet,
        ProjectionStatus::IterationLimit => PairOutcome::Failed,
    })
}

fn bound_over(
    mp: &MovingPolyhedron,
    plan: &SamplingPlan,
    draws: &[PairDraw],
) -> Result<(f64, Option<PairWitness>, SampleCounts)> {
    let cfg = projection_config(mp);
    let mut m_hat = 0.0f64;
    let mut witness: Option<PairWitness> = None;
    let mut counts = SampleCounts::default();
    for (s, d) in draws.iter().enumerate() {
        counts.drawn += 1;
        match evaluate_pair(mp, &cfg, &d.p, &d.w)? {
            PairOutcome::Feasible => counts.skipped_feasible += 1,
            PairOutcome::EmptySet => counts.skipped_infeasible_set += 1,
            PairOutcome::Failed => counts.failures += 1,
            PairOutcome::Outside(inst, proj) => {
                match min_l1_multiplier(&inst, &d.w, &proj, plan.enumeration_guard, mp.tolerances().rank) {
                    Ok(m) => {
                        counts.retained += 1;
                        if witness.is_none() || m.l1 > m_hat {
                            m_hat = m.l1;
                            witness = Some(PairWitness {
                                sample: s,
                                param: d.p.clone(),
                                point: d.w.clone(),
                                value: m.l1,
                            });
                        }
                    }
                    Err(Error::GuardExceeded { size, guard }) => {
                        return Err(Error::GuardExceeded { size, guard })
                    }
                    Err(_) => counts.failures += 1,
                }
            }
        }
    }
    Ok((m_hat, witness, counts))
}

/// Running maximum of the minimal normalised multiplier ℓ₁ norm over sampled
/// `(p, w)` with `w ∉ C(p)`, plus the radius-halving growth diagnostic.
pub fn estimate_multiplier_bound(mp: &MovingPolyhedron, plan: &SamplingPlan) -> Result<MultiplierBound> {
    let units = pair_units(mp, plan);
    let mut growth = Vec::with_capacity(plan.levels);
    let mut top = None;
    for level in 0..plan.levels.max(1) {
        let f = 0.5f64.powi(level as i32);
        let rp = plan.param_radius * f;
        let rx = plan.point_radius * f;
        let (m_hat, witness, counts) = bound_over(mp, plan, &pairs_at(mp, &units, rp, rx))?;
        growth.push(GrowthLevel {
            level,
            param_radius: rp,
            point_radius: rx,
            m_hat,
            retained: counts.retained,
        });
        if level == 0 {
            top = Some((m_hat, witness, counts));
        }
    }
    let (m_hat, witness, counts) = top.expect("at least one level");
    Ok(MultiplierBound {
        m_hat,
        witness,
        counts,
        growth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RRegularity {
    pub alpha_hat: f64,
    pub two_m_bound_ok: bool,
    pub witness: Option<PairWitness>,
    pub counts: SampleCounts,
}

/// Running maximum of `dist(x, C(p)) / residual(p, x)` over the same sampled
/// pairs as [`estimate_multiplier_bound`], compared against `2·M̂`.
pub fn estimate_r_regularity(mp: &MovingPolyhedron, plan: &SamplingPlan, m_hat: f64) -> Result<RRegularity> {
    let cfg = projection_config(mp);
    let units = pair_units(mp, plan);
    let draws = pairs_at(mp, &units, plan.param_radius, plan.point_radius);
    let mut alpha_hat = 0.0f64;
    let mut witness: Option<PairWitness> = None;
    let mut counts = SampleCounts::default();
    for (s, d) in draws.iter().enumerate() {
        counts.drawn += 1;
        match evaluate_pair(mp, &cfg, &d.p, &d.w)? {
            PairOutcome::Feasible => counts.skipped_feasible += 1,
            PairOutcome::EmptySet => counts.skipped_infeasible_set += 1,
            PairOutcome::Failed => counts.failures += 1,
            PairOutcome::Outside(inst, proj) => {
                let residual = inst.residual(&d.w)?;
                counts.retained += 1;
                let ratio = proj.distance / residual;
                if witness.is_none() || ratio > alpha_hat {
                    alpha_hat = ratio;
                    witness = Some(PairWitness {
                        sample: s,
                        param: d.p.clone(),
                        point: d.w.clone(),
                        value: ratio,
                    });
                }
            }
        }
    }
    Ok(RRegularity {
        alpha_hat,
        two_m_bound_ok: alpha_hat <= 2.0 * m_hat * (1.0 + TWO_M_SLACK),
        witness,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AubinSample {
    pub sample: usize,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub x1: Vec<f64>,
    /// `dist(x₁, C(p₂))`.
    pub distance: f64,
    pub param_gap: f64,
    /// Residual of `x₁` at `p₂`.
    pub residual: f64,
    /// `max_i (‖x₁‖ℓ_{g_i} + ℓ_{f_i})`.
    pub lipschitz_factor: f64,
    /// Minimal multiplier ℓ₁ norm at `(p₂, x₁)` when `x₁ ∉ C(p₂)`.
    pub min_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AubinEstimate {
    /// `max dist(x₁, C(p₂)) / ‖p₁ − p₂‖`.
    pub empirical: f64,
    /// `alpha_used · max_i(‖x₁‖ℓ_{g_i} + ℓ_{f_i})` over retained samples.
    pub theoretical: f64,
    /// The supplied `α̂`, raised to cover the ratios seen at the `(p₂, x₁)` pairs.
    pub alpha_used: f64,
    /// Largest minimal-multiplier ℓ₁ norm seen at the `(p₂, x₁)` pairs.
    pub pair_m_hat: f64,
    pub witness: Option<AubinSample>,
    pub counts: SampleCounts,
    pub skipped_outside_ball: usize,
    pub skipped_close_params: usize,
    pub samples: Vec<AubinSample>,
}

/// Empirical Lipschitz-like modulus versus its bound through `α̂`.
///
/// Points `x₁ ∈ C(p₁) ∩ (x̄ + δB)` are produced by projecting ball samples onto
/// `C(p₁)`; samples landing outside the ball are discarded.
pub fn estimate_aubin_modulus(mp: &MovingPolyhedron, plan: &SamplingPlan, alpha_hat: f64) -> Result<AubinEstimate> {
    let cfg = projection_config(mp);
    let mut sampler = BallSampler::new(plan.seed, Stream::Aubin);
    let mut counts = SampleCounts::default();
    let mut skipped_outside_ball = 0;
    let mut skipped_close_params = 0;
    let mut samples: Vec<AubinSample> = Vec::new();
    for s in 0..plan.samples {
        counts.drawn += 1;
        let p1 = sampler.ball(mp.base_param(), plan.param_radius);
        let p2 = sampler.ball(mp.base_param(), plan.param_radius);
        let y = sampler.ball(mp.base_point(), plan.point_radius);
        let param_gap = dist(&p1, &p2);
        if param_gap < MIN_PARAM_GAP {
            skipped_close_params += 1;
            continue;
        }
        let inst1 = mp.instantiate(&p1)?;
        let r1 = project(&inst1, &y, &cfg)?;
        match r1.status {
            ProjectionStatus::Converged => {}
            ProjectionStatus::InfeasibleSet => {
                counts.skipped_infeasible_set += 1;
                continue;
            }
            ProjectionStatus::IterationLimit => {
                counts.failures += 1;
                continue;
            }
        }
        let x1 = r1.point;
        if dist(&x1, mp.base_point()) > plan.point_radius {
            skipped_outside_ball += 1;
            continue;
        }
        let inst2 = mp.instantiate(&p2)?;
        let residual = inst2.residual(&x1)?;
        let (distance, min_l1) = if residual <= cfg.feasibility_tol {
            (0.0, None)
        } else {
            let r2 = project(&inst2, &x1, &cfg)?;
            match r2.status {
                ProjectionStatus::Converged => {
                    let m = if r2.distance > 0.0 {
                        min_l1_multiplier(&inst2, &x1, &r2, plan.enumeration_guard, mp.tolerances().rank)
                            .ok()
                            .map(|m| m.l1)
                    } else {
                        None
                    };
                    (r2.distance, m)
                }
                ProjectionStatus::InfeasibleSet => {
                    counts.skipped_infeasible_set += 1;
                    continue;
                }
                ProjectionStatus::IterationLimit => {
                    counts.failures += 1;
                    continue;
                }
            }
        };
        counts.retained += 1;
        samples.push(AubinSample {
            sample: s,
            lipschitz_factor: mp.residual_lipschitz(&x1),
            p1,
            p2,
            x1,
            distance,
            param_gap,
            residual,
            min_l1,
        });
    }
    if samples.is_empty() {
        return Err(Error::NoSamples(format!(
            "no point of C(p1) fell inside the point ball (radius {}); \
             try a larger point radius or a smaller parameter radius",
            plan.point_radius
        )));
    }
    let mut alpha_used = alpha_hat;
    let mut pair_m_hat = 0.0f64;
    let mut empirical = 0.0f64;
    let mut witness: Option<&AubinSample> = None;
    let mut factor = 0.0f64;
    for a in &samples {
        if a.residual > cfg.feasibility_tol {
            alpha_used = alpha_used.max(a.distance / a.residual);
        }
        if let Some(m) = a.min_l1 {
            pair_m_hat = pair_m_hat.max(m);
        }
        factor = factor.max(a.lipschitz_factor);
        let ratio = a.distance / a.param_gap;
        if witness.is_none() || ratio > empirical {
            empirical = ratio;
            witness = Some(a);
        }
    }
    let witness = witness.cloned();
    Ok(AubinEstimate {
        empirical,
        theoretical: alpha_used * factor,
        alpha_used,
        pair_m_hat,
        witness,
        counts,
        skipped_outside_ball,
        skipped_close_params,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstWitnesses {
    pub multiplier: Option<PairWitness>,
    pub r_regularity: Option<PairWitness>,
    pub aubin: Option<AubinSample>,
}

/// Combined estimates of `M`, `α` and the Aubin modulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub m_hat: f64,
    pub alpha_hat: f64,
    pub two_m_bound_ok: bool,
    pub aubin_empirical: f64,
    pub aubin_theoretical: f64,
    pub aubin_within_bound: bool,
    pub sample_counts: SampleCounts,
    pub worst_witnesses: WorstWitnesses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every hypothesis and bound in the chain held on the samples.
    ConsistentWithLipschitzLike,
    /// Inner semicontinuity or RCRCQ failed on the samples.
    HypothesesNotSupported,
    /// The hypotheses held but a sampled bound did not.
    BoundViolated,
}

impl Verdict {
    pub fn describe(&self) -> &'static str {
        match self {
            Verdict::ConsistentWithLipschitzLike => {
                "consistent with Lipschitz-like: inner semicontinuity and RCRCQ held, multipliers stayed bounded, alpha <= 2M and the Aubin bound held"
            }
            Verdict::HypothesesNotSupported => {
                "hypotheses not supported: inner semicontinuity or RCRCQ failed on the samples"
            }
            Verdict::BoundViolated => "bound violated: a sampled estimate exceeded its bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub liminf: LiminfReport,
    pub rcrcq: RcrcqReport,
    pub multiplier_bound: MultiplierBound,
    pub r_regularity: RRegularity,
    pub aubin: Option<AubinEstimate>,
    pub regularity: RegularityReport,
    pub verdict: Verdict,
    pub verdict_text: String,
    pub warnings: Vec<String>,
    pub caveat: String,
}

/// Run the whole chain: liminf, RCRCQ, `M̂`, `α̂` with the `2M̂` check, and the
/// Aubin estimate against its bound.
///
/// The Aubin pairs `(p₂, x₁)` are themselves neighbourhood samples, so their
/// distance ratios and multiplier norms are folded into `α̂` and `M̂` before
/// the final comparisons.
pub fn analyze(mp: &MovingPolyhedron, plan: &SamplingPlan) -> Result<PipelineReport> {
    let mut warnings = Vec::new();
    let liminf = check_inner_semicontinuity(mp, plan)?;
    let rcrcq = check_rcrcq(mp, plan)?;
    let bound = estimate_multiplier_bound(mp, plan)?;
    let r_reg = estimate_r_regularity(mp, plan, bound.m_hat)?;
    let aubin = match estimate_aubin_modulus(mp, plan, r_reg.alpha_hat) {
        Ok(a) => Some(a),
        Err(Error::NoSamples(msg)) => {
            warnings.push(msg);
            None
        }
        Err(e) => return Err(e),
    };

    let mut m_hat = bound.m_hat;
    let mut alpha_hat = r_reg.alpha_hat;
    let mut counts = bound.counts;
    let (aubin_empirical, aubin_theoretical) = match &aubin {
        Some(a) => {
            m_hat = m_hat.max(a.pair_m_hat);
            alpha_hat = alpha_hat.max(a.alpha_used);
            counts.drawn += a.counts.drawn;
            counts.retained += a.counts.retained;
            counts.skipped_infeasible_set += a.counts.skipped_infeasible_set;
            counts.failures += a.counts.failures;
            (a.empirical, a.theoretical)
        }
        None => (0.0, 0.0),
    };
    if bound.counts.retained == 0 {
        warnings.push("no sampled pair had w outside C(p); M and alpha estimates are vacuous".into());
    }
    if counts.failures > 0 {
        warnings.push(format!("{} samples hit solver failures and were skipped", counts.failures));
    }
    let two_m_bound_ok = alpha_hat <= 2.0 * m_hat * (1.0 + TWO_M_SLACK);
    let aubin_within_bound = aubin_empirical <= aubin_theoretical * (1.0 + TWO_M_SLACK) + 1e-12;
    if !aubin_within_bound {
        warnings.push(format!(
            "Aubin empirical modulus {aubin_empirical:e} exceeds the bound {aubin_theoretical:e}"
        ));
    }
    let verdict = if !liminf.consistent || rcrcq.overall == RankVerdict::Violated {
        Verdict::HypothesesNotSupported
    } else if !two_m_bound_ok || !aubin_within_bound || aubin.is_none() {
        Verdict::BoundViolated
    } else {
        Verdict::ConsistentWithLipschitzLike
    };
    if rcrcq.overall == RankVerdict::Borderline {
        warnings.push("RCRCQ rank decisions were within a factor 10 of the rank tolerance".into());
    }
    let regularity = RegularityReport {
        m_hat,
        alpha_hat,
        two_m_bound_ok,
        aubin_empirical,
        aubin_theoretical,
        aubin_within_bound,
        sample_counts: counts,
        worst_witnesses: WorstWitnesses {
            multiplier: bound.witness.clone(),
            r_regularity: r_reg.witness.clone(),
            aubin: aubin.as_ref().and_then(|a| a.witness.clone()),
        },
    };
    Ok(PipelineReport {
        liminf,
        rcrcq,
        multiplier_bound: bound,
        r_regularity: r_reg,
        aubin,
        regularity,
        verdict_text: verdict.describe().to_string(),
        verdict,
        warnings,
        caveat: SAMPLING_CAVEAT.to_string(),
    })
}

/// How a normalised multiplier is selected along a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "subfamily", rename_all = "snake_case")]
pub enum MultiplierPolicy {
    /// Solve the stationarity system on this fixed index set.
    FixedSubfamily(Vec<usize>),
    /// Reduced certificate, normalised.
    Reduced,
    /// Minimal ℓ₁ basic solution.
    MinL1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePoint {
    pub k: usize,
    pub param: Vec<f64>,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupRow {
    pub k: usize,
    pub param: Vec<f64>,
    pub point: Vec<f64>,
    pub distance: f64,
    /// Normalised multipliers over all constraints.
    pub multipliers: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    /// `l1` over the previous row's `l1`.
    pub growth_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupTable {
    pub policy: MultiplierPolicy,
    pub rows: Vec<BlowupRow>,
    /// Smallest `k` included in the growth fits.
    pub fit_from_k: usize,
    /// Log-log least-squares slope of the ℓ₁ norm against `k`.
    pub growth_exponent_l1: Option<f64>,
    /// Same for the Euclidean norm.
    pub growth_exponent_l2: Option<f64>,
    /// Same for each multiplier component, by constraint; `None` for a
    /// component that vanishes on the fit window.
    pub column_exponents: Vec<Option<f64>>,
}

/// First `k` used by the growth fit: the upper half of the sequence, never
/// below 3.
pub fn fit_start(k_max: usize) -> usize {
    (k_max / 2).max(3)
}

/// Least-squares slope of `ln y` against `ln k`.
pub fn log_log_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(k, y)| *k > 0 && *y > 0.0)
        .map(|&(k, y)| ((k as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Tabulate normalised multipliers along a sequence `(p_k, w_k)`.
pub fn detect_multiplier_blowup(
    mp: &MovingPolyhedron,
    sequence: &[SequencePoint],
    policy: &MultiplierPolicy,
) -> Result<BlowupTable> {
    let cfg = projection_config(mp);
    let tol = mp.tolerances();
    let n = mp.len();
    if let MultiplierPolicy::FixedSubfamily(s) = policy {
        if let Some(&i) = s.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
    }
    let mut rows: Vec<BlowupRow> = Vec::with_capacity(sequence.len());
    for sp in sequence {
        let inst = mp.instantiate(&sp.param)?;
        let proj = project(&inst, &sp.point, &cfg)?;
        match proj.status {
            ProjectionStatus::Converged => {}
            ProjectionStatus::InfeasibleSet => return Err(Error::InfeasibleSet { param: sp.param.clone() }),
            ProjectionStatus::IterationLimit => {
                return Err(Error::SolverFailure(format!("projection hit the iteration limit at k = {}", sp.k)))
            }
        }
        if proj.distance <= 0.0 {
            return Err(Error::Precondition(format!("w_k lies in C(p_k) at k = {}", sp.k)));
        }
        let multipliers = match policy {
            MultiplierPolicy::FixedSubfamily(s) => {
                let fam = inst.gradient_family(s)?;
                let qr = PivotedQr::factor(&fam, &[], tol.rank)?;
                if qr.rank() < s.len() {
                    return Err(Error::Precondition(format!(
                        "subfamily {s:?} is dependent at k = {}",
                        sp.k
                    )));
                }
                let u: Vec<f64> = sub(&sp.point, &proj.point).iter().map(|v| v / proj.distance).collect();
                let c = qr.coefficients(&u);
                let mut lam = vec![0.0; n];
                for (&pos, v) in qr.pivots.iter().zip(c) {
                    lam[s[pos]] = v;
                }
                if norm(&sub(&u, &inst.combine(&lam))) > RECONSTRUCTION_TOL {
                    return Err(Error::Precondition(format!(
                        "stationarity has no solution on {s:?} at k = {}",
                        sp.k
                    )));
                }
                lam
            }
            MultiplierPolicy::Reduced => match reduced_multiplier(&inst, &sp.point, &proj, tol.rank)? {
                ReducedMultiplier::Certificate(c) => normalize_multiplier(&c.dense(n), proj.distance)?,
                ReducedMultiplier::Trivial => {
                    return Err(Error::Precondition(format!("w_k lies in C(p_k) at k = {}", sp.k)))
                }
            },
            MultiplierPolicy::MinL1 => {
                min_l1_multiplier(&inst, &sp.point, &proj, crate::projection::DEFAULT_ENUMERATION_GUARD, tol.rank)?
                    .multipliers
            }
        };
        let l1 = multipliers.iter().map(|l| l.abs()).sum::<f64>();
        let l2 = norm(&multipliers);
        let growth_ratio = rows.last().map(|prev| l1 / prev.l1);
        rows.push(BlowupRow {
            k: sp.k,
            param: sp.param.clone(),
            point: sp.point.clone(),
            distance: proj.distance,
            multipliers,
            l1,
            l2,
            growth_ratio,
        });
    }
    let k_max = rows.iter().map(|r| r.k).max().unwrap_or(0);
    let fit_from_k = fit_start(k_max);
    let window: Vec<&BlowupRow> = rows.iter().filter(|r| r.k >= fit_from_k).collect();
    let growth_exponent_l1 = log_log_slope(&window.iter().map(|r| (r.k, r.l1)).collect::<Vec<_>>());
    let growth_exponent_l2 = log_log_slope(&window.iter().map(|r| (r.k, r.l2)).collect::<Vec<_>>());
    let column_exponents = (0..n)
        .map(|i| log_log_slope(&window.iter().map(|r| (r.k, r.multipliers[i].abs())).collect::<Vec<_>>()))
        .collect();
    Ok(BlowupTable {
        policy: policy.clone(),
        rows,
        fit_from_k,
        growth_exponent_l1,
        growth_exponent_l2,
        column_exponents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{paper_example, scenario_by_name};
    use approx::assert_relative_eq;

    fn plan(mp: &MovingPolyhedron, samples: usize) -> SamplingPlan {
        SamplingPlan {
            samples,
            ..SamplingPlan::from_problem(mp)
        }
    }

    #[test]
    fn rcrcq_paper_example_holds() {
        let mp = paper_example().problem;
        let r = check_rcrcq(&mp, &plan(&mp, 200)).unwrap();
        assert_eq!(r.overall, RankVerdict::Holds);
        assert_eq!(r.base_active, vec![0, 1, 2]);
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!((row.base_rank, row.min_rank, row.max_rank), (2, 2, 2));
        }
    }

    #[test]
    fn rcrcq_violation_detected() {
        let mp = scenario_by_name("rcrcq-violation").unwrap().problem;
        let r = check_rcrcq(&mp, &plan(&mp, 50)).unwrap();
        assert_eq!(r.overall, RankVerdict::Violated);
        let w = r.witnesses.iter().find(|w| w.subset == vec![0, 1]).unwrap();
        assert_eq!((w.base_rank, w.rank), (1, 2));
    }

    #[test]
    fn rcrcq_single_constraint() {
        let mp = scenario_by_name("moving-halfspace").unwrap().problem;
        let r = check_rcrcq(&mp, &plan(&mp, 50)).unwrap();
        assert_eq!(r.overall, RankVerdict::Holds);
    }

    #[test]
    fn liminf_examples() {
        let mp = paper_example().problem;
        let r = check_inner_semicontinuity(&mp, &plan(&mp, 100)).unwrap();
        assert!(r.consistent);
        assert_eq!(r.max_distance, 0.0);

        let mp = scenario_by_name("moving-equality").unwrap().problem;
        let r = check_inner_semicontinuity(&mp, &plan(&mp, 100)).unwrap();
        assert!(r.consistent);
        assert!(r.max_distance < 0.5);
        let p = r.worst_param.unwrap();
        assert_relative_eq!(r.max_distance, p[0].abs(), epsilon = 1e-14);

        let mp = scenario_by_name("switched-equalities").unwrap().problem;
        let r = check_inner_semicontinuity(&mp, &plan(&mp, 20)).unwrap();
        assert!(!r.consistent);
        assert!(!r.infeasible_params.is_empty());
    }

    #[test]
    fn multiplier_bound_paper_example() {
        let mp = paper_example().problem;
        let b = estimate_multiplier_bound(&mp, &plan(&mp, 200)).unwrap();
        assert!(b.m_hat > 0.0);
        assert!(b.m_hat <= 2f64.sqrt() + 1e-9, "{}", b.m_hat);
        assert_eq!(b.growth.len(), 5);
        assert_eq!(b.counts.skipped_feasible, 0);
    }

    #[test]
    fn r_regularity_examples() {
        let mp = paper_example().problem;
        let p = plan(&mp, 200);
        let b = estimate_multiplier_bound(&mp, &p).unwrap();
        let r = estimate_r_regularity(&mp, &p, b.m_hat).unwrap();
        assert!(r.alpha_hat <= 2f64.sqrt() + 1e-9);
        assert!(r.two_m_bound_ok);

        let mp = scenario_by_name("halfspace").unwrap().problem;
        let r = estimate_r_regularity(&mp, &plan(&mp, 100), 1.0).unwrap();
        assert_relative_eq!(r.alpha_hat, 1.0, max_relative = 1e-12);
        assert!(r.counts.skipped_feasible > 0);
    }

    #[test]
    fn aubin_examples() {
        let mp = paper_example().problem;
        let a = estimate_aubin_modulus(&mp, &plan(&mp, 100), 1.0).unwrap();
        assert_eq!(a.empirical, 0.0);

        let mp = scenario_by_name("moving-halfspace").unwrap().problem;
        let a = estimate_aubin_modulus(&mp, &plan(&mp, 300), 1.0).unwrap();
        assert_relative_eq!(a.empirical, 1.0, max_relative = 1e-9);
        assert_relative_eq!(a.theoretical, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn blowup_paper_sequence() {
        let sc = paper_example();
        let seq = sc.sequences[0].points(1, 20);
        let s5 = 5f64.sqrt();
        let t = detect_multiplier_blowup(&sc.problem, &seq, &MultiplierPolicy::FixedSubfamily(vec![1, 2])).unwrap();
        for row in &t.rows {
            let k = row.k as f64;
            assert!(row.multipliers[0].abs() < 1e-12);
            assert_relative_eq!(row.multipliers[1], 1.0 / s5, max_relative = 1e-9);
            assert_relative_eq!(row.multipliers[2], k * k / s5, max_relative = 1e-9);
        }
        let e = t.growth_exponent_l1.unwrap();
        assert!((e - 2.0).abs() <= 0.02, "{e}");
        assert_eq!(t.column_exponents[0], None);
        assert!(t.column_exponents[1].unwrap().abs() < 1e-9);
        assert!((t.column_exponents[2].unwrap() - 2.0).abs() < 1e-9);

        let t = detect_multiplier_blowup(&sc.problem, &seq, &MultiplierPolicy::Reduced).unwrap();
        for row in &t.rows {
            assert_relative_eq!(row.l1, 3.0 / s5, epsilon = 1e-9);
        }
    }

    #[test]
    fn blowup_constant_sequence_and_dependent_subfamily() {
        let sc = paper_example();
        let seq: Vec<SequencePoint> = (1..=4)
            .map(|k| SequencePoint {
                k,
                param: vec![0.2, 0.1],
                point: vec![0.3, -0.4],
            })
            .collect();
        let t = detect_multiplier_blowup(&sc.problem, &seq, &MultiplierPolicy::MinL1).unwrap();
        for row in &t.rows[1..] {
            assert_eq!(row.multipliers, t.rows[0].multipliers);
            assert_eq!(row.growth_ratio, Some(1.0));
        }
        let bad = vec![SequencePoint {
            k: 1,
            param: vec![1.0, 0.0],
            point: vec![1.0, 1.0],
        }];
        // g1 = (1,0) and g3 = p = (1,0) coincide
        assert!(matches!(
            detect_multiplier_blowup(&sc.problem, &bad, &MultiplierPolicy::FixedSubfamily(vec![0, 2])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn log_log_slope_recovers_power() {
        let pts: Vec<(usize, f64)> = (1..10).map(|k| (k, 3.0 * (k as f64).powf(1.5))).collect();
        assert_relative_eq!(log_log_slope(&pts).unwrap(), 1.5, epsilon = 1e-12);
        assert_eq!(fit_start(20), 10);
        assert_eq!(fit_start(4), 3);
    }
}
