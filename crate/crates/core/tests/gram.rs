mod common;

use common::{lattice_instance, oracle_gram, rel_close, Instance};
use hawkes_islands::contrast::FitScratch;
use hawkes_islands::{
    build_gram, contrast, Candidate, EventSequence, Model, Partition, StepFunction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_against_oracle(inst: &Instance) {
    let gram = build_gram(&inst.events, &inst.partition, inst.window, inst.t_norm).unwrap();
    let (x, b) = oracle_gram(inst);
    let d = gram.dim();
    for i in 0..d {
        assert!(
            rel_close(gram.b()[i], b[i], 1e-8),
            "b[{i}]: {} vs {}",
            gram.b()[i],
            b[i]
        );
        for j in 0..d {
            let got = gram.x_at(i, j);
            assert!(
                rel_close(got, x[i * d + j], 1e-8),
                "X[{i}][{j}]: {got} vs {}",
                x[i * d + j]
            );
        }
    }
}

#[test]
fn gram_matches_dense_quadrature_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let inst = lattice_instance(&mut rng, 30, 10);
        check_against_oracle(&inst);
    }
}

#[test]
fn twenty_events_eight_regular_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let partition = Partition::regular(16.0, 8).unwrap();
    let mut times: Vec<f64> = (0..20)
        .map(|_| rng.gen_range(0..40_000) as f64 * 1e-3)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let inst = Instance {
        events: EventSequence::new(times, 0.0, 40.0).unwrap(),
        partition,
        window: (16.0, 40.0),
        t_norm: 24.0,
    };
    check_against_oracle(&inst);
}

/// Coarsest partition of `(0, A]` having every model endpoint as a break.
fn model_partition(model: &Model) -> Partition {
    let mut br = vec![0.0, model.support()];
    for &(a, b) in model.intervals() {
        br.push(a);
        br.push(b);
    }
    br.sort_by(f64::total_cmp);
    br.dedup();
    Partition::new(br).unwrap()
}

fn assert_reduction_matches_rebuild(inst: &Instance, model: &Model, tol: f64) {
    let gram = build_gram(&inst.events, &inst.partition, inst.window, inst.t_norm).unwrap();
    let coarse = model_partition(model);
    let rebuilt = build_gram(&inst.events, &coarse, inst.window, inst.t_norm).unwrap();
    let a = gram.reduce_to_model(model).unwrap();
    let b = rebuilt.reduce_to_model(model).unwrap();
    assert_eq!(a.dim, b.dim);
    for (u, v) in a.x.iter().zip(&b.x).chain(a.b.iter().zip(&b.b)) {
        assert!(
            rel_close(*u, *v, tol) || (u - v).abs() < 1e-15,
            "{u} vs {v}"
        );
    }
}

#[test]
fn single_island_matches_direct_rebuild() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inst = lattice_instance(&mut rng, 30, 6);
    inst.partition = Partition::regular(inst.partition.support(), 6).unwrap();
    let (lo, hi) = inst.partition.cell(3);
    let model = Model::new(inst.partition.support(), vec![(lo, hi)]).unwrap();
    assert_reduction_matches_rebuild(&inst, &model, 1e-12);
}

#[test]
fn merged_cells_sum_rows_and_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inst = lattice_instance(&mut rng, 30, 10);
    let p = Partition::regular(12.0, 4).unwrap();
    let inst = Instance {
        partition: p.clone(),
        ..inst
    };
    let inst = Instance {
        window: (12.0, inst.events.upper()),
        t_norm: inst.events.upper() - 12.0,
        ..inst
    };
    let gram = build_gram(&inst.events, &p, inst.window, inst.t_norm).unwrap();
    let model = Model::new(12.0, vec![(p.cell(1).0, p.cell(2).1)]).unwrap();
    let red = gram.reduce_to_model(&model).unwrap();
    let len = p.cell(2).1 - p.cell(1).0;
    let expect = (gram.x_at(2, 2) + 2.0 * gram.x_at(2, 3) + gram.x_at(3, 3)) / len;
    assert!(rel_close(red.x[1 * red.dim + 1], expect, 1e-12));
    let expect_b = (gram.b()[2] + gram.b()[3]) / len.sqrt();
    assert!(rel_close(red.b[1], expect_b, 1e-12));
    assert_reduction_matches_rebuild(&inst, &model, 1e-12);
}

#[test]
fn islands_reduction_is_a_principal_submatrix_after_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inst = lattice_instance(&mut rng, 30, 10);
    let p = &inst.partition;
    let gram = build_gram(&inst.events, p, inst.window, inst.t_norm).unwrap();
    let chosen: Vec<usize> = (0..p.len()).filter(|c| c % 2 == 0).collect();
    let model = Model::new(p.support(), chosen.iter().map(|&c| p.cell(c)).collect()).unwrap();
    let red = gram.reduce_to_model(&model).unwrap();
    let idx: Vec<usize> = std::iter::once(0)
        .chain(chosen.iter().map(|c| c + 1))
        .collect();
    let scale = |i: usize| {
        if i == 0 {
            1.0
        } else {
            1.0 / p.cell_len(i - 1).sqrt()
        }
    };
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            let expect = gram.x_at(i, j) * scale(i) * scale(j);
            assert!(rel_close(red.x[r * red.dim + c], expect, 1e-12));
        }
    }
}

fn random_model(p: &Partition, mask: u32, merge: bool) -> Model {
    let n = p.len();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for c in 0..n {
        if mask >> c & 1 == 0 {
            continue;
        }
        let (lo, hi) = p.cell(c);
        match intervals.last_mut() {
            Some(last) if merge && last.1 == lo => last.1 = hi,
            _ => intervals.push((lo, hi)),
        }
    }
    Model::new(p.support(), intervals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduction_equals_fit_from_scratch(seed in any::<u64>(), mask in any::<u32>(), merge in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = lattice_instance(&mut rng, 30, 8);
        let mask = mask & ((1u32 << inst.partition.len()) - 1);
        let model = random_model(&inst.partition, mask, merge);
        assert_reduction_matches_rebuild(&inst, &model, 1e-10);
    }

    #[test]
    fn projection_is_a_local_minimum(seed in any::<u64>(), mask in any::<u32>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = lattice_instance(&mut rng, 30, 8);
        let p = &inst.partition;
        let model = random_model(p, mask & ((1u32 << p.len()) - 1), true);
        let gram = build_gram(&inst.events, p, inst.window, inst.t_norm).unwrap();
        let cells = model.cells_on(p).unwrap();
        let mut scratch = FitScratch::default();
        let fit = gram.fit_cells(&cells, &mut scratch);
        prop_assume!(!fit.degenerate);
        let theta = scratch.theta().to_vec();
        let base = gram.score_cells(&cells, &theta, &mut scratch);
        prop_assert!(rel_close(base, fit.contrast, 1e-9) || (base - fit.contrast).abs() < 1e-15);
        for _ in 0..100 {
            let moved: Vec<f64> = theta.iter().map(|t| t + rng.gen_range(-1e-3..1e-3)).collect();
            let v = gram.score_cells(&cells, &moved, &mut scratch);
            prop_assert!(v >= base - 1e-12 * base.abs().max(1e-12));
        }
    }

    #[test]
    fn sweep_contrast_matches_direct_contrast(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = lattice_instance(&mut rng, 30, 8);
        let p = &inst.partition;
        let values: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-0.5..1.0)).collect();
        let g = StepFunction::new(p.breaks().to_vec(), values).unwrap();
        let f = Candidate::new(rng.gen_range(0.0..1.0), g);
        let gram = build_gram(&inst.events, p, inst.window, inst.t_norm).unwrap();
        let a = gram.contrast_of(&f).unwrap();
        let b = contrast::contrast_direct(&f, &inst.events, inst.window, inst.t_norm).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())), "{} vs {}", a, b);
        let d1 = gram.dt_square(&f).unwrap();
        let d2 = contrast::dt_square_direct(&f, &inst.events, inst.window, inst.t_norm).unwrap();
        prop_assert!(rel_close(d1, d2, 1e-10));
    }
}
