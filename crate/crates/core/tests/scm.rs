mod common;

use claire::data::Dataset;
use claire::scm::{claire_synthetic, IncorrectVariant, SyntheticParams};
use common::{ols_oracle, OLS_TOLERANCE};

const ROWS: usize = 100_000;

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn column(data: &Dataset, name: &str, rows: &[usize]) -> Vec<f64> {
    let c = data.feature_index(name).unwrap();
    rows.iter().map(|&i| data.x.get(i, c)).collect()
}

#[test]
fn regression_coefficients_match_closed_forms() {
    for c in ols_oracle(11).unwrap() {
        println!("{}: fitted {:.4}, expected {:.4}", c.regression, c.fitted, c.expected);
        assert!((c.fitted - c.expected).abs() < OLS_TOLERANCE, "{}", c.regression);
    }
}

#[test]
fn synthetic_sampling_follows_mechanisms() {
    let p = SyntheticParams::default();
    let (data, _) = claire_synthetic().sample(ROWS, 2).unwrap();
    let n = ROWS as f64;
    for (s, rows) in data.groups().iter().enumerate() {
        let pi = p.probabilities[s];
        let freq = rows.len() as f64 / n;
        assert!((freq - pi).abs() < 3.0 * (pi * (1.0 - pi) / n).sqrt(), "P(S={s}) = {freq}");

        let m = rows.len() as f64;
        let noise = p.sigma_by_s[s].powi(2);
        let x0 = column(&data, "X0", rows);
        let x1 = column(&data, "X1", rows);
        let x2 = column(&data, "X2", rows);
        let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();

        let x1_var = p.sigma_u.powi(2) + noise;
        let (mean, var) = mean_var(&x1);
        assert!((mean - p.w_by_s[s] * s as f64).abs() < 3.0 * (x1_var / m).sqrt(), "E[X1|S={s}] = {mean}");
        assert!((var - x1_var).abs() < 3.0 * x1_var * (2.0 / (m - 1.0)).sqrt(), "Var[X1|S={s}] = {var}");

        let residuals = [
            y.iter().zip(&x1).zip(&x0).map(|((y, a), b)| y - a - b).collect::<Vec<_>>(),
            x2.iter().zip(&y).map(|(a, b)| a - b).collect(),
        ];
        for r in residuals {
            let (mean, var) = mean_var(&r);
            assert!(mean.abs() < 3.0 * (noise / m).sqrt(), "residual mean {mean} for S={s}");
            assert!((var - noise).abs() < 3.0 * noise * (2.0 / (m - 1.0)).sqrt(), "residual var {var} for S={s}");
        }
    }
}

#[test]
fn interventions_shift_only_descendants() {
    let scm = claire_synthetic();
    let (data, _) = scm.sample(500, 4).unwrap();
    let cf = scm.counterfactual_dataset(&data, 3, 200, 9).unwrap();
    let x0 = data.feature_index("X0").unwrap();
    for i in 0..data.len() {
        assert!((cf.x.get(i, x0) - data.x.get(i, x0)).abs() < 1e-9);
    }
    let p = SyntheticParams::default();
    let x1 = data.feature_index("X1").unwrap();
    let group0 = &data.groups()[0];
    let shift: f64 = group0.iter().map(|&i| cf.x.get(i, x1) - data.x.get(i, x1)).sum::<f64>() / group0.len() as f64;
    let expected = p.w_by_s[3] * 3.0;
    assert!((shift - expected).abs() < 0.3, "mean X1 shift {shift}, expected {expected}");
}

#[test]
fn incorrect_models_differ_from_truth_where_stated() {
    let scm = claire_synthetic();
    let (data, _) = scm.sample(3000, 5).unwrap();
    let reversed = scm.incorrect_variant(IncorrectVariant::M1, &data).unwrap();
    let dropped = scm.incorrect_variant(IncorrectVariant::M2, &data).unwrap();
    let g = reversed.graph();
    let (y, x2) = (g.index("Y").unwrap(), g.index("X2").unwrap());
    assert!(g.has_edge(x2, y) && !g.has_edge(y, x2));
    let g = dropped.graph();
    assert!(!g.has_edge(g.sensitive(), g.index("X1").unwrap()));
}
