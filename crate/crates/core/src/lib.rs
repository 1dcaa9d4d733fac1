//! Moving polyhedra `C(p) = {x : ⟨x, g_i(p)⟩ = f_i(p), i ∈ I₁; ⟨x, g_i(p)⟩ ≤ f_i(p), i ∈ I₂}`
//! with affine data: projections with Lagrange multipliers, multiplier
//! reduction, a sampled relaxed constant rank check, and sampled estimates of
//! the multiplier bound, the distance error bound and the Aubin modulus.
//!
//! Constraint indices are 0-based and equalities come first.

pub mod error;
pub mod linalg;
pub mod multipliers;
pub mod polyhedron;
pub mod projection;
pub mod regularity;
pub mod sampling;
pub mod scenarios;

pub use error::{Error, Result};
pub use linalg::{
    dependency_witness, gram_determinant, max_independent_subfamily, numerical_rank, Dependency,
    DependencyWitness, RankCertificate, VectorFamily,
};
pub use multipliers::{
    min_l1_multiplier, normalize_multiplier, reduce_equalities, reduce_positive_combination,
    reduced_multiplier, MinL1Multiplier, MultiplierCertificate, ReducedMultiplier,
};
pub use polyhedron::{
    parse_problem, serialize_problem, AffineConstraint, ConstraintKind, MovingPolyhedron,
    PolyhedronInstance, ProblemFile, Tolerances,
};
pub use projection::{kkt_residual, project, project_bruteforce, ProjectionConfig, ProjectionResult, ProjectionStatus};
pub use regularity::{
    analyze, check_inner_semicontinuity, check_rcrcq, detect_multiplier_blowup, estimate_aubin_modulus,
    estimate_multiplier_bound, estimate_r_regularity, MultiplierPolicy, RankVerdict, SamplingPlan, Verdict,
};
pub use scenarios::{paper_example, random_scenario, scenario_by_name, Scenario};
