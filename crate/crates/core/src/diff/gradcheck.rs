//! Central-difference gradient verification.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step, in `[1e-7, 1e-3]`.
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates compared; all of them when the inputs are smaller.
    pub coordinates: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-6,
            coordinates: 200,
            seed: 0,
        }
    }
}

impl GradCheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        GradCheckOptions {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub pass: bool,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare the tape gradient of `f` at `inputs` against central differences.
///
/// `f` receives a fresh tape and one trainable leaf per input and must
/// return a scalar node.
pub fn grad_check<F>(
    name: &str,
    f: F,
    inputs: &[Tensor<f64>],
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&opts.step) {
        return Err(Error::Argument(format!(
            "grad_check: step {} outside [1e-7, 1e-3]",
            opts.step
        )));
    }
    let eval = |xs: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars = xs
            .iter()
            .map(|x| tape.param(x.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = f(&mut tape, &vars)?;
        let v = tape.value(loss);
        if v.shape() != (1, 1) {
            return Err(Error::Shape(format!("{name}: objective is not scalar")));
        }
        v.ensure_finite(name)?;
        Ok((tape, vars, loss))
    };

    let (tape, vars, loss) = eval(inputs)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| grads.get_or_zeros(v, x))
        .collect();

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(k, x)| (0..x.len()).map(move |i| (k, i)))
        .collect();
    let chosen: Vec<(usize, usize)> = if coords.len() <= opts.coordinates {
        coords
    } else {
        let mut rng = rng_for(opts.seed, Stream::GradCheck, 0);
        let mut picks = sample(&mut rng, coords.len(), opts.coordinates).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|p| coords[p]).collect()
    };

    let mut work = inputs.to_vec();
    let mut max_rel = 0.0f64;
    for &(k, i) in &chosen {
        let orig = work[k].data()[i];
        work[k].data_mut()[i] = orig + opts.step;
        let (tp, _, lp) = eval(&work)?;
        work[k].data_mut()[i] = orig - opts.step;
        let (tm, _, lm) = eval(&work)?;
        work[k].data_mut()[i] = orig;
        let numeric = (tp.scalar(lp) - tm.scalar(lm)) / (2.0 * opts.step);
        let a = analytic[k].data()[i];
        if !numeric.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite(format!("{name}: gradient at input {k}[{i}]")));
        }
        max_rel = max_rel.max(relative_error(a, numeric));
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        tolerance: opts.tolerance,
        checked: chosen.len(),
        pass: max_rel <= opts.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_near_exact() {
        let x = Tensor::from_fn(3, 5, |i, j| (i as f64 - 1.0) * 0.7 + j as f64 * 0.3);
        let rep = grad_check(
            "quadratic",
            |t, v| Ok(t.sum_squares(v[0])),
            &[x],
            GradCheckOptions::with_tolerance(1e-9),
        )
        .unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.checked, 15);
    }

    #[test]
    fn wrong_backward_rule_fails() {
        let x = Tensor::from_fn(4, 4, |i, j| 0.1 + (i * 4 + j) as f64 * 0.05);
        let rep = grad_check(
            "wrong_square",
            |t, v| {
                let value = t.value(v[0]).map(|a| a * a);
                // true derivative is 2a; this rule claims 3a
                let y = t.custom(
                    v[0],
                    value,
                    Box::new(|x, g| x.zip_map(g, |a, gv| 3.0 * a * gv).unwrap()),
                )?;
                Ok(t.sum(y))
            },
            &[x],
            GradCheckOptions::with_tolerance(1e-4),
        )
        .unwrap();
        assert!(!rep.pass);
        assert!(rep.max_rel_err > 0.3);
    }

    #[test]
    fn step_out_of_range_is_rejected() {
        let opts = GradCheckOptions { step: 1e-2, ..GradCheckOptions::default() };
        let r = grad_check("q", |t, v| Ok(t.sum(v[0])), &[Tensor::zeros(1, 1)], opts);
        assert!(r.is_err());
    }

    #[test]
    fn subsamples_large_inputs() {
        let x = Tensor::from_fn(30, 30, |i, j| ((i + j) % 7) as f64 * 0.1);
        let rep = grad_check("sumsq", |t, v| Ok(t.sum_squares(v[0])), &[x], GradCheckOptions::default())
            .unwrap();
        assert_eq!(rep.checked, 200);
        assert!(rep.pass);
    }
}
