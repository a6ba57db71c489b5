mod common;

use common::{oracle_gram, Instance};
use hawkes_islands::bench::{builtin_truth, TruthId};
use hawkes_islands::select::{penalized_argmin, penalized_select_family};
use hawkes_islands::{simulate, EventSequence, Family, FitContext, Partition, SimConfig, Strategy};
use nalgebra::{DMatrix, DVector};

fn simulated(seed: u64, horizon: f64) -> EventSequence {
    let truth = builtin_truth(TruthId::F1, 0.001, 0.5).unwrap();
    simulate(&truth, &SimConfig::new(horizon, 1000.0, seed)).unwrap()
}

fn family(events: &EventSequence, strategy: Strategy) -> Family {
    let ctx = FitContext::full(events, 1000.0).unwrap();
    Family::new(strategy, 1000.0, &ctx, false).unwrap()
}

#[test]
fn islands_two_cells_match_exhaustive_loop() {
    let partition = Partition::regular(2.0, 2).unwrap();
    let inst = Instance {
        events: EventSequence::new(vec![0.5, 1.2, 2.5, 3.1], 0.0, 4.0).unwrap(),
        partition: partition.clone(),
        window: (2.0, 4.0),
        t_norm: 2.0,
    };
    let (x, b) = oracle_gram(&inst);
    let ctx = FitContext {
        events: &inst.events,
        window: inst.window,
        t_norm: inst.t_norm,
    };
    let fam = Family::new(Strategy::Islands { gamma: partition }, 2.0, &ctx, false).unwrap();
    let contrasts = fam.contrasts();
    assert_eq!(contrasts.len(), 4);
    for mask in 0..4usize {
        // rows of the basis {1} ∪ {1_I / √ℓ(I)}, every cell has length 1
        let idx: Vec<usize> = std::iter::once(0)
            .chain((0..2).filter(|c| mask >> c & 1 == 1).map(|c| c + 1))
            .collect();
        let d = idx.len();
        let xm = DMatrix::from_fn(d, d, |r, c| x[idx[r] * 3 + idx[c]]);
        let bm = DVector::from_fn(d, |r, _| b[idx[r]]);
        let theta = xm.clone().lu().solve(&bm).expect("well posed");
        let gamma = -theta.dot(&bm);
        assert!(
            (gamma - contrasts[mask]).abs() < 1e-12 * gamma.abs().max(1.0),
            "mask {mask}: {gamma} vs {}",
            contrasts[mask]
        );
        let direct = -2.0 * theta.dot(&bm) + (theta.transpose() * &xm * &theta)[0];
        assert!((direct - gamma).abs() < 1e-12);
    }
}

#[test]
fn nested_contrast_is_nonincreasing() {
    let events = simulated(1, 200_000.0);
    let fam = family(&events, Strategy::Nested { j: 5 });
    let c = fam.contrasts();
    for w in c.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{c:?}");
    }
}

#[test]
fn adding_an_island_never_increases_the_contrast() {
    let events = simulated(2, 200_000.0);
    let gamma = Partition::regular(1000.0, 8).unwrap();
    let fam = family(&events, Strategy::Islands { gamma });
    let c = fam.contrasts();
    for mask in 0..256usize {
        for bit in 0..8 {
            if mask >> bit & 1 == 0 {
                let sup = mask | 1 << bit;
                assert!(c[sup] <= c[mask] + 1e-12 * c[mask].abs(), "{mask} -> {sup}");
            }
        }
    }
}

#[test]
fn adding_a_cut_never_increases_the_contrast() {
    let events = simulated(3, 200_000.0);
    let gamma = Partition::regular(1000.0, 8).unwrap();
    let fam = family(&events, Strategy::Irregular { gamma });
    let c = fam.contrasts();
    for cuts in 0..128usize {
        for bit in 0..7 {
            if cuts >> bit & 1 == 0 {
                let finer = cuts | 1 << bit;
                assert!(c[finer + 1] <= c[cuts + 1] + 1e-12 * c[cuts + 1].abs());
            }
        }
    }
}

#[test]
fn curve_argmin_agrees_with_full_family_search() {
    let events = simulated(4, 300_000.0);
    for strategy in [
        Strategy::Islands {
            gamma: Partition::regular(1000.0, 10).unwrap(),
        },
        Strategy::Irregular {
            gamma: Partition::regular(1000.0, 10).unwrap(),
        },
        Strategy::Regular { n: 10 },
    ] {
        let fam = family(&events, strategy);
        let curve = fam.best_per_dimension();
        for slope in [0.0, 1e-9, 1e-8, 3e-8, 1e-7, 1e-6, 1.0] {
            let pos = penalized_argmin(&curve, slope);
            assert_eq!(
                curve.records[pos].index,
                penalized_select_family(&fam, slope),
                "slope {slope}"
            );
        }
    }
}

#[test]
fn model_counts_follow_the_strategy_sizes() {
    let nested = Strategy::Nested { j: 3 };
    assert_eq!(nested.model_count(), 5);
    let sizes: Vec<usize> = (0..5).map(|k| nested.model_size(k)).collect();
    assert_eq!(sizes, vec![0, 1, 2, 4, 8]);
    let regular = Strategy::Regular { n: 4 };
    let sizes: Vec<usize> = regular
        .enumerate(1000.0)
        .unwrap()
        .map(|m| m.size())
        .collect();
    assert_eq!(sizes, vec![0, 1, 2, 3, 4]);
}

#[test]
fn regular_fit_on_true_partition_recovers_the_plateau() {
    let events = simulated(5, 500_000.0);
    let fam = family(&events, Strategy::Regular { n: 5 });
    let est = fam.fit(5);
    let h = &est.h_hat;
    assert!((h.eval(300.0) - 0.002).abs() < 5e-4, "{:?}", h.values());
    for t in [100.0, 500.0, 700.0, 900.0] {
        assert!(h.eval(t).abs() < 5e-4, "{:?}", h.values());
    }
    assert!((est.nu_hat - 0.001).abs() < 3e-4);
}
