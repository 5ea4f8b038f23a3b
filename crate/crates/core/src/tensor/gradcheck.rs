use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Below this magnitude gradients are compared absolutely rather than
/// relatively.
const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares backward-mode gradients of the scalar `f(input)` against central
/// differences `(f(x + h) - f(x - h)) / 2h` on every coordinate.
pub fn grad_check<F>(f: F, input: &Tensor, h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..input.numel()).collect();
    grad_check_coords(f, input, h, &all)
}

/// [`grad_check`] restricted to the listed coordinates.
pub fn grad_check_coords<F>(f: F, input: &Tensor, h: f64, coords: &[usize]) -> Result<GradCheck>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.leaf(input.clone(), true);
    let loss = f(&mut g, x)?;
    g.backward(loss)?;
    let full = g
        .grad(x)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; input.numel()]);

    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(t);
        let y = f(&mut g, x)?;
        match g.value(y) {
            [v] => Ok(*v),
            other => Err(Error::shape(format!(
                "objective returned {} values",
                other.len()
            ))),
        }
    };

    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = input.clone();
        plus.data_mut()[i] += h;
        let mut minus = input.clone();
        minus.data_mut()[i] -= h;
        let n = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = full[i];
        worst = worst.max(relative_error(a, n));
        analytic.push(a);
        numeric.push(n);
    }
    Ok(GradCheck {
        analytic,
        numeric,
        max_relative_error: worst,
    })
}
