use movepoly_core::linalg::{dependency_witness, gram_determinant, numerical_rank, Dependency, VectorFamily};
use movepoly_core::multipliers::{
    min_l1_multiplier, normalize_multiplier, reduce_positive_combination, reduced_multiplier,
    starred_stationarity_residual, stationarity_residual, ReducedMultiplier,
};
use movepoly_core::polyhedron::{MovingPolyhedron, PolyhedronInstance};
use movepoly_core::projection::{kkt_residual, project, project_bruteforce, ProjectionConfig, ProjectionStatus};
use movepoly_core::regularity::{estimate_multiplier_bound, estimate_r_regularity, SamplingPlan};
use movepoly_core::sampling::{BallSampler, Stream};
use movepoly_core::scenarios::random_scenario;
use proptest::prelude::*;

const RANK_TOL: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random scenario plus two sampled query points. `base` is the instance at
/// `p̄`, where the generator guarantees well-separated rank decisions; `inst`
/// is at a parameter sampled from `p̄ + 0.5B` and may be badly conditioned.
struct Case {
    mp: MovingPolyhedron,
    base: PolyhedronInstance,
    inst: PolyhedronInstance,
    w1: Vec<f64>,
    w2: Vec<f64>,
    rng: BallSampler,
}

fn case(seed: u64, d: usize, n: usize, n_eq: usize) -> Case {
    let n_eq = n_eq.min(n).min(d);
    let mp = random_scenario(seed, d, 2, n_eq, n - n_eq).unwrap().problem;
    let mut rng = BallSampler::new(seed, Stream::Pairs);
    let p = rng.ball(mp.base_param(), 0.5);
    let inst = mp.instantiate(&p).unwrap();
    let w1 = rng.ball(mp.base_point(), 2.0);
    let w2 = rng.ball(mp.base_point(), 2.0);
    let base = mp.base_instance();
    Case { mp, base, inst, w1, w2, rng }
}

fn integer_family() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4).prop_flat_map(|d| {
        prop::collection::vec(prop::collection::vec((-3i32..=3).prop_map(f64::from), d), 1..=5)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rank_is_permutation_invariant(vs in integer_family(), perm_seed in any::<u64>()) {
        let fam = VectorFamily::from_vectors(vs.clone()).unwrap();
        let r = numerical_rank(&fam, RANK_TOL).unwrap().rank;
        let mut idx: Vec<usize> = (0..vs.len()).collect();
        let mut rng = BallSampler::new(perm_seed, Stream::Rcrcq);
        for i in (1..idx.len()).rev() {
            let j = (rng.uniform(0.0, 1.0) * (i + 1) as f64).floor().min(i as f64) as usize;
            idx.swap(i, j);
        }
        let shuffled = VectorFamily::from_vectors(idx.iter().map(|&i| vs[i].clone()).collect()).unwrap();
        prop_assert_eq!(numerical_rank(&shuffled, RANK_TOL).unwrap().rank, r);
    }

    #[test]
    fn gram_determinant_matches_full_rank(vs in integer_family()) {
        let fam = VectorFamily::from_vectors(vs.clone()).unwrap();
        let full = numerical_rank(&fam, RANK_TOL).unwrap().rank == vs.len();
        let g = gram_determinant(&fam).unwrap();
        // integer Gram matrices have integer determinants
        prop_assert_eq!(g > 0.5, full, "det {}", g);
    }

    #[test]
    fn pivots_are_independent_and_witnesses_small(vs in integer_family()) {
        let fam = VectorFamily::from_vectors(vs).unwrap();
        let cert = numerical_rank(&fam, RANK_TOL).unwrap();
        if !cert.pivot_indices.is_empty() {
            let piv = fam.subfamily(&cert.pivot_indices).unwrap();
            prop_assert!(matches!(dependency_witness(&piv, RANK_TOL).unwrap(), Dependency::Independent));
        }
        if let Dependency::Dependent(w) = dependency_witness(&fam, RANK_TOL).unwrap() {
            let combo = fam.combine(&w.coefficients);
            prop_assert!(norm(&combo) <= 10.0 * RANK_TOL * fam.max_norm());
        }
    }

    #[test]
    fn projection_matches_oracle(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=6, n_eq in 0usize..=2) {
        let c = case(seed, d, n, n_eq);
        let cfg = ProjectionConfig::from(c.mp.tolerances());
        let a = project(&c.base, &c.w1, &cfg).unwrap();
        let b = project_bruteforce(&c.base, &c.w1, &cfg).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.status == ProjectionStatus::Converged {
            prop_assert!((a.distance - b.distance).abs() <= 1e-8);
            prop_assert!(norm(&diff(&a.point, &b.point)) <= 1e-7);
            prop_assert!(kkt_residual(&c.base, &c.w1, &a) <= 1e-9);
        }
    }

    #[test]
    fn projection_is_nonexpansive_idempotent_and_variational(
        seed in any::<u64>(), d in 1usize..=4, n in 1usize..=6, n_eq in 0usize..=2,
    ) {
        let mut c = case(seed, d, n, n_eq);
        let cfg = ProjectionConfig::from(c.mp.tolerances());
        let a = project(&c.inst, &c.w1, &cfg).unwrap();
        if a.status != ProjectionStatus::Converged {
            return Ok(());
        }
        let b = project(&c.inst, &c.w2, &cfg).unwrap();
        prop_assert!(norm(&diff(&a.point, &b.point)) <= norm(&diff(&c.w1, &c.w2)) + 1e-8);

        let again = project(&c.inst, &a.point, &cfg).unwrap();
        prop_assert!(norm(&diff(&again.point, &a.point)) <= 1e-8);
        prop_assert!(again.distance <= 1e-8);

        let scale = 1.0 + norm(&c.w1) + norm(&a.point);
        for _ in 0..5 {
            let y = c.rng.ball(&a.point, 3.0);
            let x = project(&c.inst, &y, &cfg).unwrap().point;
            let vi = dot(&diff(&c.w1, &a.point), &diff(&x, &a.point));
            prop_assert!(vi <= 1e-8 * scale * scale, "vi {}", vi);
        }
    }

    #[test]
    fn residual_is_lipschitz_in_parameter(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=6) {
        let c = case(seed, d, n, 1);
        let mut rng = BallSampler::new(seed, Stream::Aubin);
        for _ in 0..5 {
            let p1 = rng.ball(c.mp.base_param(), 0.5);
            let p2 = rng.ball(c.mp.base_param(), 0.5);
            let x = rng.ball(c.mp.base_point(), 1.0);
            let r1 = c.mp.instantiate(&p1).unwrap().residual(&x).unwrap();
            let r2 = c.mp.instantiate(&p2).unwrap().residual(&x).unwrap();
            let bound = c.mp.residual_lipschitz(&x) * norm(&diff(&p1, &p2));
            prop_assert!((r1 - r2).abs() <= bound + 1e-12);
            prop_assert!(r1 >= 0.0);
        }
    }

    #[test]
    fn active_set_is_monotone_in_tolerance(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=6) {
        let c = case(seed, d, n, 1);
        let inst = c.mp.base_instance();
        let x = c.mp.base_point();
        let mut prev = inst.active_set(x, 1e-12).unwrap();
        for eps in [1e-8, 1e-4, 1e-1, 1.0] {
            let cur = inst.active_set(x, eps).unwrap();
            prop_assert!(prev.iter().all(|i| cur.contains(i)));
            prev = cur;
        }
    }

    #[test]
    fn instantiate_is_affine(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=6) {
        let mut c = case(seed, d, n, 0);
        let p1 = c.rng.ball(c.mp.base_param(), 1.0);
        let p2 = c.rng.ball(c.mp.base_param(), 1.0);
        let mid: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| (a + b) / 2.0).collect();
        let (i1, i2, im) = (
            c.mp.instantiate(&p1).unwrap(),
            c.mp.instantiate(&p2).unwrap(),
            c.mp.instantiate(&mid).unwrap(),
        );
        for i in 0..n {
            for k in 0..d {
                let avg = (i1.gradients[i][k] + i2.gradients[i][k]) / 2.0;
                prop_assert!((im.gradients[i][k] - avg).abs() <= 1e-14);
            }
            prop_assert!((im.rhs[i] - (i1.rhs[i] + i2.rhs[i]) / 2.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn certificates_are_sound(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=6, n_eq in 0usize..=2) {
        let c = case(seed, d, n, n_eq);
        let cfg = ProjectionConfig::from(c.mp.tolerances());
        let proj = project(&c.base, &c.w1, &cfg).unwrap();
        if proj.status != ProjectionStatus::Converged || proj.distance <= 0.0 {
            return Ok(());
        }
        let ReducedMultiplier::Certificate(cert) = reduced_multiplier(&c.base, &c.w1, &proj, RANK_TOL).unwrap() else {
            return Err(TestCaseError::fail("expected a certificate"));
        };
        let fam = c.base.gradient_family(&cert.indices()).unwrap();
        if !fam.is_empty() {
            prop_assert!(matches!(dependency_witness(&fam, RANK_TOL).unwrap(), Dependency::Independent));
        }
        prop_assert!(cert.coefficients[cert.i1.len()..].iter().all(|&v| v > 0.0));
        let scale = 1.0f64.max(proj.distance);
        prop_assert!(cert.reconstruction_error <= 1e-8 * scale);

        let dense = cert.dense(n);
        let unit: Vec<f64> = diff(&c.w1, &proj.point).iter().map(|v| v / proj.distance).collect();
        let recon = c.base.combine(&dense);
        prop_assert!(norm(&diff(&diff(&c.w1, &proj.point), &recon)) <= 1e-8 * scale);

        let normalized = normalize_multiplier(&dense, proj.distance).unwrap();
        let twice: Vec<f64> = normalized.iter().map(|v| 2.0 * v).collect();
        let r1 = stationarity_residual(&c.base, &c.w1, &proj.point, &normalized);
        let r2 = starred_stationarity_residual(&c.base, &c.w1, &proj.point, &twice);
        prop_assert!((r1 - r2 / 2.0).abs() <= 1e-12 * (1.0 + r1));
        prop_assert!(norm(&diff(&unit, &c.base.combine(&normalized))) <= 1e-8);

        let m = min_l1_multiplier(&c.base, &c.w1, &proj, 20, RANK_TOL).unwrap();
        let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        prop_assert!(m.l1 <= l1(&normalized) * (1.0 + 1e-9) + 1e-12);
        prop_assert!(m.l1 <= l1(&proj.multipliers) / proj.distance * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn positive_combination_reduction(vs in integer_family(), split in 0usize..=5, lam_seed in any::<u64>()) {
        let fam = VectorFamily::from_vectors(vs.clone()).unwrap();
        let n = vs.len();
        let cert = numerical_rank(&fam, RANK_TOL).unwrap();
        // J1 must be independent: take a prefix of the pivots
        let j1: Vec<usize> = cert.pivot_indices.iter().copied().take(split.min(cert.rank)).collect();
        let j2: Vec<usize> = (0..n).filter(|i| !j1.contains(i)).collect();
        let mut rng = BallSampler::new(lam_seed, Stream::Scenario);
        let lambda: Vec<f64> = (0..n)
            .map(|i| if j1.contains(&i) { rng.uniform(-2.0, 2.0) } else { rng.uniform(0.1, 2.0) })
            .collect();
        let x = fam.combine(&lambda);
        let r = reduce_positive_combination(&x, &fam, &j1, &j2, &lambda, RANK_TOL).unwrap();
        prop_assert!(r.iterations <= j2.len());
        prop_assert!(r.j2.iter().all(|&i| r.coefficients[i] > 0.0));
        let kept: Vec<usize> = j1.iter().chain(&r.j2).copied().collect();
        prop_assert!(numerical_rank(&fam.subfamily(&kept).unwrap(), RANK_TOL).unwrap().rank == kept.len());
        let scale = 1.0f64.max(norm(&x));
        prop_assert!(norm(&diff(&x, &fam.combine(&r.coefficients))) <= 1e-8 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimators_are_deterministic_running_maxima(seed in any::<u64>(), d in 1usize..=3, n in 1usize..=4) {
        let mp = random_scenario(seed, d, 2, 0, n).unwrap().problem;
        let plan = SamplingPlan { samples: 60, levels: 1, ..SamplingPlan::from_problem(&mp) };
        let a = estimate_multiplier_bound(&mp, &plan).unwrap();
        prop_assert_eq!(&a, &estimate_multiplier_bound(&mp, &plan).unwrap());
        let short = SamplingPlan { samples: 30, ..plan };
        let b = estimate_multiplier_bound(&mp, &short).unwrap();
        prop_assert!(b.m_hat <= a.m_hat);
        let ra = estimate_r_regularity(&mp, &plan, a.m_hat).unwrap();
        let rb = estimate_r_regularity(&mp, &short, b.m_hat).unwrap();
        prop_assert!(rb.alpha_hat <= ra.alpha_hat);
        prop_assert!(ra.two_m_bound_ok);
    }
}
