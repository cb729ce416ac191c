use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamId, ParamStore, TensorError, Var};
use crate::scalar::Scalar;

/// Finite-difference formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error O(h^2).
    #[default]
    Central,
    /// Ridders' extrapolation of central differences from `h` down by
    /// factors of 1.4, keeping the estimate with the smallest error bound.
    Ridders,
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    pub stencil: Stencil,
    /// Coordinates sampled per parameter tensor (all when the tensor is smaller).
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            stencil: Stencil::Central,
            coords_per_param: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numerical derivative at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
}

/// Compares analytic gradients of a scalar loss with central differences.
///
/// `f` records the loss on a fresh graph from the current parameter values.
/// The relative error per coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check<T, E, F>(
    store: &mut ParamStore<T>,
    params: &[ParamId],
    opts: &GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport, E>
where
    T: Scalar,
    E: From<TensorError>,
    F: FnMut(&mut Graph<T>, &ParamStore<T>) -> Result<Var, E>,
{
    let mut g = Graph::new(false);
    let loss = f(&mut g, store)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|&id| match g.param_var(id).and_then(|v| g.grad(v)) {
            Some(gr) => gr.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; store.get(id).len()],
        })
        .collect();
    drop(g);

    let mut eval = |store: &ParamStore<T>| -> Result<f64, E> {
        let mut g = Graph::new(false);
        let loss = f(&mut g, store)?;
        let v = g.value(loss).data()[0].as_f64();
        if !v.is_finite() {
            return Err(TensorError::NonFinite { op: "gradient_check" }.into());
        }
        Ok(v)
    };


    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let h = T::lit(opts.h);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        worst_values: None,
        checked: 0,
    };
    for (pi, &id) in params.iter().enumerate() {
        let n = store.get(id).len();
        let coords: Vec<usize> = if n <= opts.coords_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, opts.coords_per_param).into_vec()
        };
        for c in coords {
            let orig = store.get(id).data()[c];
            let mut at = |offset: T| {
                store.get_mut(id).data_mut()[c] = orig + offset;
                let v = eval(store);
                store.get_mut(id).data_mut()[c] = orig;
                v
            };
            let numeric = match opts.stencil {
                Stencil::Central => central(&mut at, orig, h)?,
                Stencil::Ridders => ridders(&mut at, orig, h)?,
            };
            let a = analytic[pi][c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                if rel >= report.max_rel_err {
                    report.worst = Some((store.entry(id).name.clone(), c));
                    report.worst_values = Some((a, numeric));
                }
            }
        }
    }
    Ok(report)
}

/// Central difference over the step the perturbed values actually differ by.
fn central<T: Scalar, E>(at: &mut impl FnMut(T) -> Result<f64, E>, orig: T, h: T) -> Result<f64, E> {
    let step = ((orig + h) - (orig - h)).as_f64();
    Ok((at(h)? - at(-h)?) / step)
}

fn ridders<T: Scalar, E>(at: &mut impl FnMut(T) -> Result<f64, E>, orig: T, h: T) -> Result<f64, E> {
    const SHRINK: f64 = 1.4;
    const ROWS: usize = 10;
    const SAFE: f64 = 2.0;
    let shrink2 = SHRINK * SHRINK;
    let mut table = [[0.0f64; ROWS]; ROWS];
    let mut hh = h;
    table[0][0] = central(at, orig, hh)?;
    let mut best = table[0][0];
    let mut err = f64::INFINITY;
    for i in 1..ROWS {
        hh /= T::lit(SHRINK);
        table[0][i] = central(at, orig, hh)?;
        let mut fac = shrink2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= shrink2;
            let e = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok(best)
}
