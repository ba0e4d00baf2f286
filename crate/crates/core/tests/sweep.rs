use tversky_core::experiments::sweep::{
    aggregate_convergence, find_group, read_results, run_sweep, write_results, GroupKey, MeanSe, SweepConfig,
};
use tversky_core::experiments::xor::TrialResult;

fn small() -> SweepConfig {
    let mut s = SweepConfig::desk(3);
    s.num_features = vec![2];
    s.protocol.epochs = 60;
    s.master_seed = 17;
    s
}

fn same(a: &[TrialResult], b: &[TrialResult]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!(x.same_outcome(y), "{x:?} != {y:?}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = small();
    let one = run_sweep(&s, 1, None).unwrap();
    let four = run_sweep(&s, 4, None).unwrap();
    same(&one, &four);
    assert_eq!(one.len(), s.cardinality());
}

#[test]
fn interrupted_sweep_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    let s = small();
    let full = run_sweep(&s, 2, None).unwrap();

    // Pretend the first run stopped after five trials, in completion order.
    let mut partial: Vec<TrialResult> = full.iter().take(5).cloned().collect();
    partial.reverse();
    for r in &mut partial {
        r.wall_ms = -1.0;
    }
    write_results(&path, &partial).unwrap();

    let resumed = run_sweep(&s, 2, Some(&path)).unwrap();
    same(&full, &resumed);
    // Finished trials were kept rather than re-run.
    assert!(resumed.iter().take(5).all(|r| r.wall_ms == -1.0));
    assert!(resumed.iter().skip(5).all(|r| r.wall_ms >= 0.0));
    same(&read_results(&path).unwrap(), &full);
}

#[test]
fn results_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let mut rows = run_sweep(&small(), 1, None).unwrap();
    rows[0].final_loss = f64::NAN;
    write_results(&path, &rows).unwrap();
    let back = read_results(&path).unwrap();
    assert!(back[0].final_loss.is_nan());
    same(&back[1..], &rows[1..]);
    assert_eq!(back[0].config_hash, rows[0].config_hash);
}

fn welford(values: &[f64]) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &v in values {
        n += 1.0;
        let d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    (mean, (m2 / (n - 1.0)).sqrt() / n.sqrt())
}

#[test]
fn mean_se_matches_streaming_estimate() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for n in [2, 3, 10, 257] {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = MeanSe::of(&v);
        let (mean, se) = welford(&v);
        assert!((m.mean - mean).abs() < 1e-9);
        assert!((m.se - se).abs() < 1e-9);
    }
}

#[test]
fn marginals_partition_the_trials() {
    let rows = run_sweep(&small(), 1, None).unwrap();
    let by = aggregate_convergence(&rows, &[GroupKey::Intersection, GroupKey::Difference]).unwrap();
    assert_eq!(by.len(), 4);
    assert_eq!(by.iter().map(|s| s.n).sum::<usize>(), rows.len());
    let all = aggregate_convergence(&rows, &[]).unwrap();
    let weighted: f64 = by.iter().map(|s| s.p_conv.mean * s.n as f64).sum::<f64>() / rows.len() as f64;
    assert!((all[0].p_conv.mean - weighted).abs() < 1e-12);
    let g = find_group(
        &by,
        &[(GroupKey::Intersection, "min"), (GroupKey::Difference, "ignorematch")],
    )
    .unwrap();
    let direct = rows
        .iter()
        .filter(|r| r.intersection.to_string() == "min" && r.difference.to_string() == "ignorematch")
        .filter(|r| r.converged)
        .count();
    assert_eq!(g.p_conv.mean, direct as f64 / g.n as f64);
}
