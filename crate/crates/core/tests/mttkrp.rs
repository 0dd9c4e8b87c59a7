mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use spalt::{allocate_csfs, mttkrp, CsfPolicy, KernelKind, LockPool, MttkrpEngine};

#[test]
fn every_kernel_matches_dense_oracle() {
    let mut rng = rng(11);
    for _ in 0..40 {
        let t = random_tensor(&mut rng, 8, 64);
        let rank = rng.gen_range(1..=5);
        let factors = random_factors(&mut rng, t.dims, rank);
        for policy in [CsfPolicy::One, CsfPolicy::Two, CsfPolicy::All] {
            let alloc = allocate_csfs(&t, policy, 2).unwrap();
            for mode in 0..3 {
                let want = dense_mttkrp(&t, mode, &factors);
                for tasks in [1, 2, 8] {
                    let got = mttkrp(&alloc, mode, &factors, tasks).unwrap();
                    let err = rel_max_err(&got, &want);
                    assert!(err <= 1e-10, "{policy:?} mode {mode} tasks {tasks}: {err}");
                }
            }
        }
    }
}

#[test]
fn one_tree_serves_all_three_kinds() {
    let mut rng = rng(12);
    let t = random_tensor(&mut rng, 8, 64);
    let alloc = allocate_csfs(&t, CsfPolicy::One, 1).unwrap();
    let mut kinds: Vec<KernelKind> = alloc.dispatch.iter().map(|d| d.kind).collect();
    kinds.sort_by_key(|k| k.level());
    assert_eq!(kinds, [KernelKind::Root, KernelKind::Internal, KernelKind::Leaf]);
}

#[test]
fn forced_dispatch_agrees_with_root() {
    // Route every mode through each level of the ALL trees in turn.
    let mut rng = rng(13);
    for _ in 0..20 {
        let t = random_tensor(&mut rng, 7, 60);
        let factors = random_factors(&mut rng, t.dims, 3);
        let base = allocate_csfs(&t, CsfPolicy::All, 1).unwrap();
        for mode in 0..3 {
            let want = dense_mttkrp(&t, mode, &factors);
            for tree in 0..3 {
                let mut alloc = base.clone();
                let kind = KernelKind::from_level(alloc.csfs[tree].level_of(mode));
                alloc.set_dispatch(mode, tree, kind).unwrap();
                let got = mttkrp(&alloc, mode, &factors, 4).unwrap();
                assert!(rel_max_err(&got, &want) <= 1e-10);
            }
        }
    }
}

#[test]
fn all_policy_never_locks() {
    let mut rng = rng(14);
    let t = random_tensor(&mut rng, 8, 64);
    let factors = random_factors(&mut rng, t.dims, 4);
    let alloc = allocate_csfs(&t, CsfPolicy::All, 8).unwrap();
    let mut engine = MttkrpEngine::with_pool(&alloc, 8, LockPool::new(64).unwrap());
    for mode in 0..3 {
        let mut out = spalt::FactorMatrix::zeros(t.dims[mode], 4);
        engine.compute(mode, &factors, &mut out).unwrap();
    }
    assert_eq!(engine.pool().acquisitions(), 0);
    assert!(engine.pool().is_quiescent());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_a_factor_scales_the_output(seed in any::<u64>(), c in -4.0f64..4.0, mode in 0usize..3, policy in 0usize..3) {
        let mut rng = rng(seed);
        let t = random_tensor(&mut rng, 8, 64);
        let factors = random_factors(&mut rng, t.dims, 3);
        let policy = [CsfPolicy::One, CsfPolicy::Two, CsfPolicy::All][policy];
        let alloc = allocate_csfs(&t, policy, 2).unwrap();
        let base = mttkrp(&alloc, mode, &factors, 2).unwrap();
        let other = (mode + 1) % 3;
        let mut scaled = factors.clone();
        scaled[other].data.iter_mut().for_each(|x| *x *= c);
        let got = mttkrp(&alloc, mode, &scaled, 2).unwrap();
        let scale = base.max_abs().max(f64::MIN_POSITIVE) * c.abs().max(1.0);
        for (g, b) in got.data.iter().zip(&base.data) {
            prop_assert!((g - c * b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn task_count_does_not_change_result(seed in any::<u64>(), mode in 0usize..3) {
        let mut rng = rng(seed);
        let t = random_tensor(&mut rng, 8, 64);
        let factors = random_factors(&mut rng, t.dims, 4);
        let alloc = allocate_csfs(&t, CsfPolicy::One, 1).unwrap();
        let one = mttkrp(&alloc, mode, &factors, 1).unwrap();
        for tasks in [2, 8] {
            let many = mttkrp(&alloc, mode, &factors, tasks).unwrap();
            prop_assert!(rel_max_err(&many, &one) <= 1e-8);
        }
    }
}
