use rand::Rng;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use super::seeded_rng;
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub coordinates: usize,
    pub max_relative_error: f64,
    /// `(parameter, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: (usize, usize, f64, f64),
}

/// Relative error with a small absolute floor so vanishing gradients do not
/// blow up the ratio.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Checks `loss(params)` at `coordinates` randomly chosen parameter entries
/// with step `h`.
pub fn gradient_check<F>(params: &[Matrix], coordinates: usize, h: f64, seed: u64, loss: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let total: usize = params.iter().map(Matrix::len).sum();
    if total == 0 {
        return Err(Error::Empty("gradient_check"));
    }
    let analytic = {
        let tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let out = loss(&tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.wrt(v)).collect::<Vec<_>>()
    };
    let eval = |ps: &[Matrix]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        Ok(loss(&tape, &vars)?.scalar())
    };
    let mut rng = seeded_rng(seed);
    let mut perturbed = params.to_vec();
    let mut report = GradCheck {
        coordinates,
        max_relative_error: 0.0,
        worst: (0, 0, 0.0, 0.0),
    };
    for _ in 0..coordinates {
        let mut flat = rng.random_range(0..total);
        let mut p = 0;
        while flat >= params[p].len() {
            flat -= params[p].len();
            p += 1;
        }
        let orig = params[p].data()[flat];
        perturbed[p].data_mut()[flat] = orig + h;
        let up = eval(&perturbed)?;
        perturbed[p].data_mut()[flat] = orig - h;
        let down = eval(&perturbed)?;
        perturbed[p].data_mut()[flat] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[p].data()[flat];
        let err = relative_error(a, numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = (p, flat, a, numeric);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        let p = vec![Matrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.7]]).unwrap()];
        let r = gradient_check(&p, 20, 1e-5, 0, |_, v| Ok(v[0].square().sum())).unwrap();
        assert!(r.max_relative_error < 1e-8, "{r:?}");
    }
}
