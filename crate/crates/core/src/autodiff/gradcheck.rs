//! Central finite-difference checks of reverse-mode gradients.

use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How the numeric derivative is formed from central differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h` at the given step.
    ThreePoint,
    /// Ridders' extrapolation: central differences at steps shrinking from
    /// `h` by a factor 1.4, extrapolated to zero step, keeping the estimate
    /// with the smallest internal error. No single step suits both strongly
    /// curved coordinates (which want small steps) and tiny gradients next to
    /// a large objective (which want large ones); extrapolation handles both.
    Ridders,
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step; the largest step for [`Stencil::Ridders`].
    pub h: f64,
    pub stencil: Stencil,
    pub tolerance: f64,
    /// Coordinates beyond this count are subsampled.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            stencil: Stencil::Ridders,
            tolerance: 1e-5,
            max_coords: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    /// `coordinate,analytic,numeric,rel_err`, where coordinate is
    /// `param:index`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coordinate,analytic,numeric,rel_err\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}:{},{:e},{:e},{:e}",
                e.param, e.index, e.analytic, e.numeric, e.rel_err
            );
        }
        out
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn evaluate<'a, F>(f: &F, params: &[Tensor]) -> Result<(Tape<'a>, Vec<Var>, Var)>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check objective".into()));
    }
    Ok((tape, vars, out))
}

/// Richardson-extrapolated derivative from central differences `central(h)`
/// at geometrically shrinking steps; stops once the extrapolation diverges.
fn ridders(central: &mut impl FnMut(f64) -> Result<f64>, h0: f64) -> Result<f64> {
    const SHRINK: f64 = 1.4;
    const STEPS: usize = 10;
    const SAFE: f64 = 2.0;
    let shrink2 = SHRINK * SHRINK;
    let mut h = h0;
    // prev[j]: extrapolation of order j at the previous step
    let mut prev = vec![central(h)?];
    let mut best = prev[0];
    let mut err = f64::INFINITY;
    for _ in 1..STEPS {
        h /= SHRINK;
        let mut cur = vec![central(h)?];
        let mut fac = shrink2;
        for j in 1..=prev.len() {
            let next = (cur[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= shrink2;
            let e = (next - cur[j - 1]).abs().max((next - prev[j - 1]).abs());
            if e <= err {
                err = e;
                best = next;
            }
            cur.push(next);
        }
        let diverging = (cur[cur.len() - 1] - prev[prev.len() - 1]).abs() >= SAFE * err;
        prev = cur;
        if diverging {
            break;
        }
    }
    Ok(best)
}

/// Compares reverse-mode gradients of the scalar `f(params)` against central
/// differences, coordinate by coordinate.
pub fn grad_check<'a, F>(
    f: F,
    params: &[Tensor],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = evaluate(&f, params)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();
    drop(tape);
    if let Some(i) = analytic.iter().position(|g| !g.all_finite()) {
        return Err(Error::NonFinite(format!(
            "analytic gradient of parameter {i}"
        )));
    }

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i)))
        .collect();
    let chosen: Vec<usize> = if coords.len() > opts.max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked = index::sample(&mut rng, coords.len(), opts.max_coords).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..coords.len()).collect()
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut entries = Vec::with_capacity(chosen.len());
    let mut max_rel_err: f64 = 0.0;
    for c in chosen {
        let (p, i) = coords[c];
        let orig = work[p].data()[i];
        let mut at = |offset: f64| -> Result<f64> {
            work[p].data_mut()[i] = orig + offset;
            let (tape, _, out) = evaluate(&f, &work)?;
            Ok(tape.value(out).item())
        };
        let mut central = |h: f64| -> Result<f64> { Ok((at(h)? - at(-h)?) / (2.0 * h)) };
        let numeric = match opts.stencil {
            Stencil::ThreePoint => central(opts.h)?,
            Stencil::Ridders => ridders(&mut central, opts.h)?,
        };
        work[p].data_mut()[i] = orig;
        let a = analytic[p].data()[i];
        let rel_err = relative_error(a, numeric);
        max_rel_err = max_rel_err.max(rel_err);
        entries.push(GradCheckEntry {
            param: p,
            index: i,
            analytic: a,
            numeric,
            rel_err,
        });
    }
    Ok(GradCheckReport {
        entries,
        max_rel_err,
        tolerance: opts.tolerance,
    })
}
