use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tversky_core::engine::Tensor;
use tversky_core::interp::{parse_field, rank_in_field, FieldExpr, ObjectTable};
use tversky_core::tversky::FeatureBank;

const OBJECTS: usize = 6;
const FEATURES: usize = 12;
const DIM: usize = 5;

fn world(seed: u64) -> (FeatureBank<f64>, ObjectTable<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let bank = FeatureBank::new(Tensor::new(vec![FEATURES, DIM], draw(FEATURES * DIM)).unwrap()).unwrap();
    let names = (0..OBJECTS).map(|i| format!("x{i}")).collect();
    let table = ObjectTable::new(names, Tensor::new(vec![OBJECTS, DIM], draw(OBJECTS * DIM)).unwrap()).unwrap();
    (bank, table)
}

/// Features with a positive dot product, computed directly.
fn members(bank: &FeatureBank<f64>, x: &[f64]) -> BTreeSet<usize> {
    (0..FEATURES)
        .filter(|&k| bank.vectors().row(k).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() > 0.0)
        .collect()
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> FieldExpr {
    if depth == 0 || rng.random_bool(0.3) {
        return FieldExpr::object(format!("x{}", rng.random_range(0..OBJECTS)));
    }
    let (a, b) = (random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    if rng.random_bool(0.5) {
        a.and(b)
    } else {
        a.minus(b)
    }
}

fn oracle(e: &FieldExpr, bank: &FeatureBank<f64>, table: &ObjectTable<f64>) -> BTreeSet<usize> {
    match e {
        FieldExpr::Object(n) => members(bank, table.get(n).unwrap()),
        FieldExpr::Intersection(a, b) => &oracle(a, bank, table) & &oracle(b, bank, table),
        FieldExpr::Difference(a, b) => &oracle(a, bank, table) - &oracle(b, bank, table),
    }
}

#[test]
fn random_expressions_match_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for w in 0..20 {
        let (bank, table) = world(w);
        for _ in 0..100 {
            let e = random_expr(&mut rng, 4);
            let got = e.evaluate(&bank, &table).unwrap();
            assert_eq!(got, oracle(&e, &bank, &table), "{e}");
            let reparsed = parse_field(&e.to_string()).unwrap();
            assert_eq!(reparsed, e);
        }
    }
}

#[test]
fn set_laws_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (bank, table) = world(99);
    let ev = |e: &FieldExpr| e.evaluate(&bank, &table).unwrap();
    for _ in 0..500 {
        let a = random_expr(&mut rng, 2);
        let b = random_expr(&mut rng, 2);
        let c = random_expr(&mut rng, 2);
        let sa = ev(&a);
        assert_eq!(ev(&a.clone().and(b.clone())), ev(&b.clone().and(a.clone())));
        assert_eq!(ev(&a.clone().and(a.clone())), sa);
        assert!(ev(&a.clone().minus(a.clone())).is_empty());
        assert!(ev(&a.clone().minus(b.clone())).is_subset(&sa));
        assert!(ev(&a.clone().minus(b.clone()).and(b.clone())).is_empty());
        assert_eq!(
            ev(&a.clone().and(b.clone()).and(c.clone())),
            ev(&a.clone().and(b.clone().and(c.clone())))
        );
        // A - (B & C) = (A - B) ∪ (A - C)
        let lhs = ev(&a.clone().minus(b.clone().and(c.clone())));
        let rhs = &ev(&a.clone().minus(b.clone())) | &ev(&a.clone().minus(c.clone()));
        assert_eq!(lhs, rhs);
        // A = (A & B) ∪ (A - B)
        assert_eq!(&ev(&a.clone().and(b.clone())) | &ev(&a.clone().minus(b.clone())), sa);
    }
}

#[test]
fn field_ranking_matches_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (bank, table) = world(3);
    for _ in 0..200 {
        let field = random_expr(&mut rng, 3).evaluate(&bank, &table).unwrap();
        let ranked = rank_in_field(&field, &table, &bank, OBJECTS).unwrap();
        assert_eq!(ranked.len(), OBJECTS);
        for s in &ranked {
            let x = table.vectors.row(s.id);
            let direct: f64 = field
                .iter()
                .map(|&k| bank.vectors().row(k).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            assert!((s.score - direct).abs() < 1e-12);
        }
        assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
    }
}
