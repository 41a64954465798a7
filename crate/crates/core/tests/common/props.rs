//! Property checks shared by the property tests and the acceptance run.

use claire::augment::gaussian_kl;
use claire::data::{split, ColumnKind, Scaler};
use claire::fairrep::cf_constraint_var;
use claire::metrics::{mmd_rbf, mmd_rbf_matrix, wasserstein1, Bandwidth};
use claire::numerics::{cosine_distance, seeded_rng, Matrix, Tape};
use claire::scm::claire_synthetic;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Check = fn() -> Result<(), String>;

/// Name and check of every property, grouped by the invariant they cover.
pub const SUITE: &[(&str, Check)] = &[
    ("null intervention identity", null_intervention),
    ("wasserstein translation", wasserstein_translation),
    ("wasserstein symmetry", wasserstein_symmetry),
    ("wasserstein permutation", wasserstein_permutation),
    ("mmd non-negative, zero on identical", mmd_basics),
    ("mmd same distribution", mmd_same_distribution),
    ("cosine distance range", cosine_range),
    ("constraint range", constraint_range),
    ("split determinism", split_determinism),
    ("scaler round trip", scaler_round_trip),
    ("kl non-negative", kl_nonnegative),
    ("softmax and sigmoid ranges", softmax_sigmoid),
];

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    })
}

fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

fn samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, len)
}

fn normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.data_mut().iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    m
}

pub fn null_intervention() -> Result<(), String> {
    let scm = claire_synthetic();
    check((0u64..1000, 0usize..4), |(seed, s)| {
        let (data, _) = scm.sample(40, seed).unwrap();
        let cf = scm.counterfactual_dataset(&data, s, 50, seed).unwrap();
        for i in (0..data.len()).filter(|&i| data.s[i] == s) {
            for c in 0..data.num_features() {
                prop_assert!((cf.x.get(i, c) - data.x.get(i, c)).abs() < 1e-9);
            }
            prop_assert!((cf.y[i] - data.y[i]).abs() < 1e-9);
        }
        Ok(())
    })
}

pub fn wasserstein_translation() -> Result<(), String> {
    check((samples(1..80), -20.0..20.0f64), |(a, c)| {
        let shifted: Vec<f64> = a.iter().map(|v| v + c).collect();
        let w = wasserstein1(&a, &shifted).unwrap();
        prop_assert!((w - c.abs()).abs() < 1e-9, "w = {w}, c = {c}");
        Ok(())
    })
}

pub fn wasserstein_symmetry() -> Result<(), String> {
    check((samples(1..60), samples(1..60)), |(a, b)| {
        let ab = wasserstein1(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        if a.len() == b.len() {
            prop_assert!((ab - wasserstein1(&b, &a).unwrap()).abs() < 1e-9);
        }
        Ok(())
    })
}

pub fn wasserstein_permutation() -> Result<(), String> {
    check((samples(1..60), any::<u64>()), |(original, seed)| {
        let mut a = original.clone();
        let mut rng = seeded_rng(seed);
        for i in (1..a.len()).rev() {
            let j = rng.random_range(0..=i);
            a.swap(i, j);
        }
        prop_assert_eq!(wasserstein1(&original, &a).unwrap(), 0.0);
        Ok(())
    })
}

pub fn mmd_basics() -> Result<(), String> {
    check((samples(2..40), samples(2..40)), |(a, b)| {
        let ab = mmd_rbf(&a, &b, Bandwidth::MedianHeuristic).unwrap();
        let ba = mmd_rbf(&b, &a, Bandwidth::MedianHeuristic).unwrap();
        prop_assert!(ab >= -1e-12);
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(mmd_rbf(&a, &a, Bandwidth::MedianHeuristic).unwrap().abs() < 1e-12);
        Ok(())
    })
}

pub fn mmd_same_distribution() -> Result<(), String> {
    let mut rng = seeded_rng(3);
    let (a, b) = (normal(5000, 1, &mut rng), normal(5000, 1, &mut rng));
    let mmd = mmd_rbf_matrix(&a, &b, Bandwidth::MedianHeuristic).map_err(|e| e.to_string())?;
    if mmd < 0.05 {
        Ok(())
    } else {
        Err(format!("MMD between two standard normal samples is {mmd}"))
    }
}

pub fn cosine_range() -> Result<(), String> {
    let v = || prop::collection::vec(-5.0..5.0f64, 4);
    check((v(), v()), |(x, y)| {
        let d = cosine_distance(&x, &y);
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&d), "d = {d}");
        Ok(())
    })
}

pub fn constraint_range() -> Result<(), String> {
    check((any::<u64>(), 1usize..12, 1usize..5), |(seed, n, dim)| {
        let mut rng = seeded_rng(seed);
        let tape = Tape::new();
        let z = normal(n, dim, &mut rng);
        let rows: Vec<usize> = (0..n).collect();
        let other = tape.constant(normal(n, dim, &mut rng));
        let lc = cf_constraint_var(tape.constant(z.clone()), &[(rows.clone(), other)]).unwrap().scalar();
        prop_assert!((0.0..=2.0).contains(&lc), "{lc}");
        let same = cf_constraint_var(tape.constant(z.clone()), &[(rows, tape.constant(z))]).unwrap().scalar();
        prop_assert!(same.abs() < 1e-12);
        Ok(())
    })
}

pub fn split_determinism() -> Result<(), String> {
    check((5usize..3000, any::<u64>()), |(n, seed)| {
        let a = split(n, seed).unwrap();
        prop_assert_eq!(&a, &split(n, seed).unwrap());
        prop_assert_eq!(a.train.len(), n * 6 / 10);
        prop_assert_eq!(a.train.len() + a.validation.len(), n * 8 / 10);
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        Ok(())
    })
}

pub fn scaler_round_trip() -> Result<(), String> {
    check(prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 3), 2..30), |rows| {
        let x = Matrix::from_rows(&rows).unwrap();
        let all: Vec<usize> = (0..x.rows()).collect();
        let sc = Scaler::fit(&x, &all, &[ColumnKind::Continuous; 3]).unwrap();
        let back = sc.inverse(&sc.transform(&x));
        for (u, v) in back.data().iter().zip(x.data()) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + v.abs()));
        }
        Ok(())
    })
}

pub fn kl_nonnegative() -> Result<(), String> {
    check(prop::collection::vec((-5.0..5.0f64, -6.0..4.0f64), 1..8), |pairs| {
        let (mean, logvar): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(gaussian_kl(&mean, &logvar) >= -1e-12);
        Ok(())
    })
}

pub fn softmax_sigmoid() -> Result<(), String> {
    check(prop::collection::vec(prop::collection::vec(-30.0..30.0f64, 3), 1..10), |rows| {
        let tape = Tape::new();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = tape.constant(x.clone()).softmax_rows().value();
        for r in 0..p.rows() {
            prop_assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let sig = tape.constant(x).sigmoid().value();
        prop_assert!(sig.data().iter().all(|&v| v > 0.0 && v < 1.0));
        Ok(())
    })
}
