use claire::baselines::{constant_predictor, full_predictor, reference_coded_columns, unaware_predictor, LinearModel, Predictor};
use claire::data::{Dataset, Task};
use claire::harness::{self, DataSource, ExperimentConfig, Method, ScmChoice};
use claire::numerics::Matrix;

#[test]
fn fairness_degrades_as_the_assumed_model_weakens() {
    let cfg = ExperimentConfig {
        data: DataSource::Synthetic { n: 2000 },
        methods: vec![
            Method::CfpU(Some(ScmChoice::True)),
            Method::CfpU(Some(ScmChoice::M1)),
            Method::Unaware,
            Method::Full,
        ],
        repetitions: 3,
        posterior_samples: 200,
        ..ExperimentConfig::default()
    };
    let out = harness::run(&cfg).unwrap();
    let wass: Vec<f64> = ["CFP-U (true)", "CFP-U (M1)", "Unaware", "Full"]
        .iter()
        .map(|m| out.get(m, "wass").unwrap().mean)
        .collect();
    println!("Wass: {wass:?}");
    assert!(wass[0] < wass[1] && wass[1] < wass[2].min(wass[3]), "{wass:?}");
    // On this model S reaches Y only through X1, so adding S to the
    // features barely moves the fit: unaware and full tie within noise.
    assert!((wass[2] - wass[3]).abs() < 0.1 * wass[3], "{wass:?}");
}

#[test]
fn constant_predictor_ignores_everything() {
    let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let data = Dataset::new(vec!["a".into()], x, vec![0, 1, 0], vec![1.0, 2.0, 6.0], Task::Regression, 2).unwrap();
    let pred = constant_predictor(&data).unwrap().predict(&data).unwrap();
    assert_eq!(pred, vec![3.0; 3]);
}

#[test]
fn linear_baselines_recover_exact_relations() {
    // y = 1 + 2a - b + 3s with no noise
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, ((i * 5) % 11) as f64]).collect();
    let s: Vec<usize> = (0..40).map(|i| (i / 3) % 2).collect();
    let y: Vec<f64> = rows.iter().zip(&s).map(|(r, &s)| 1.0 + 2.0 * r[0] - r[1] + 3.0 * s as f64).collect();
    let data = Dataset::new(vec!["a".into(), "b".into()], Matrix::from_rows(&rows).unwrap(), s, y.clone(), Task::Regression, 2).unwrap();
    let full = full_predictor(&data).unwrap().predict(&data).unwrap();
    full.iter().zip(&y).for_each(|(p, t)| assert!((p - t).abs() < 1e-8));
    let fit = LinearModel::fit_ols(&data.x, &data.y).unwrap();
    assert_eq!(fit.coefficients.len(), 2);
    let unaware = unaware_predictor(&data).unwrap().predict(&data).unwrap();
    assert!(unaware.iter().zip(&y).any(|(p, t)| (p - t).abs() > 0.1));
    assert_eq!(reference_coded_columns(&data), vec![0, 1]);
}
