//! Central finite-difference verification of analytic gradients.

use std::fmt;

use super::{NumericsError, ParamStore, Tape, Tensor, Var};

/// Worst element of one parameter's comparison.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
    /// Set when the function itself failed to evaluate.
    pub error: Option<String>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.params.iter().all(|p| !p.flagged)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.flagged)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(e) = &self.error {
            return write!(f, "gradient check failed to run: {e}");
        }
        for p in &self.params {
            writeln!(
                f,
                "{:<24} max_rel_err={:.3e} at [{}] analytic={:.6e} numeric={:.6e}{}",
                p.name,
                p.max_rel_err,
                p.worst_index,
                p.analytic,
                p.numeric,
                if p.flagged { "  FLAGGED" } else { "" }
            )?;
        }
        Ok(())
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(store: &ParamStore, f: &F) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new(store);
    let out = f(&mut tape)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(NumericsError::NonScalarLoss(v.shape().to_vec()));
    }
    Ok(v.data()[0])
}

/// Analytic gradient of every parameter in `store`, via one backward pass.
pub fn analytic_gradients<F>(store: &ParamStore, f: &F) -> Result<Vec<Tensor>, NumericsError>
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new(store);
    let out = f(&mut tape)?;
    Ok(tape.backward(out)?.to_dense(store))
}

/// `(f(θ+h) − f(θ−h)) / 2h` for every scalar of every parameter. Values are
/// perturbed in place and restored exactly.
pub fn numeric_gradients<F>(store: &mut ParamStore, f: &F, step: f64) -> Result<Vec<Tensor>, NumericsError>
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    let ids: Vec<_> = store.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let mut grad = Tensor::zeros(store.value(id).shape());
        for j in 0..grad.len() {
            let orig = store.get(id).value.data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + step;
            let plus = evaluate(store, f);
            store.get_mut(id).value.data_mut()[j] = orig - step;
            let minus = evaluate(store, f);
            store.get_mut(id).value.data_mut()[j] = orig;
            grad.data_mut()[j] = (plus? - minus?) / (2.0 * step);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Elementwise comparison of analytic against numeric gradients.
pub fn compare(store: &ParamStore, analytic: &[Tensor], numeric: &[Tensor], tol: f64) -> GradCheckReport {
    let params = store
        .ids()
        .zip(analytic.iter().zip(numeric))
        .map(|(id, (a, n))| {
            let mut worst = ParamCheck {
                name: store.name(id).to_string(),
                max_rel_err: 0.0,
                worst_index: 0,
                analytic: a.data()[0],
                numeric: n.data()[0],
                flagged: false,
            };
            for (j, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
                let err = relative_error(av, nv);
                if err > worst.max_rel_err {
                    worst.max_rel_err = err;
                    worst.worst_index = j;
                    worst.analytic = av;
                    worst.numeric = nv;
                }
            }
            // NaN error counts as flagged
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            let flagged = !(worst.max_rel_err < tol);
            worst.flagged = flagged;
            worst
        })
        .collect();
    GradCheckReport {
        tol,
        params,
        error: None,
    }
}

/// Checks every parameter gradient of the scalar function `f` against
/// central differences with the given `step`. Meaningful only on a
/// [`Precision::F64`](super::Precision) store. Failures are reported, never
/// returned as errors.
pub fn grad_check<F>(store: &mut ParamStore, f: F, step: f64, tol: f64) -> GradCheckReport
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    let result = analytic_gradients(store, &f).and_then(|a| numeric_gradients(store, &f, step).map(|n| (a, n)));
    match result {
        Ok((a, n)) => compare(store, &a, &n, tol),
        Err(e) => GradCheckReport {
            tol,
            params: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Precision;

    fn square_store() -> (ParamStore, crate::numerics::ParamId) {
        let mut store = ParamStore::new(Precision::F64);
        let id = store.add("theta", Tensor::vector(vec![3.0]).unwrap());
        (store, id)
    }

    #[test]
    fn quadratic_matches() {
        let (mut store, id) = square_store();
        let f = |t: &mut Tape| {
            let x = t.param(id);
            let sq = t.mul(x, x)?;
            t.sum(sq)
        };
        let a = analytic_gradients(&store, &f).unwrap();
        let n = numeric_gradients(&mut store, &f, 1e-5).unwrap();
        assert_eq!(a[0].data()[0], 6.0);
        assert!((n[0].data()[0] - 6.0).abs() < 1e-9);
        assert_eq!(store.value(id).data()[0], 3.0);
        assert!(grad_check(&mut store, f, 1e-5, 1e-4).passed());
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let (mut store, id) = square_store();
        let f = |t: &mut Tape| {
            let x = t.param(id);
            let sq = t.mul(x, x)?;
            t.sum(sq)
        };
        let a: Vec<Tensor> = analytic_gradients(&store, &f)
            .unwrap()
            .into_iter()
            .map(|g| g.map(|x| 2.0 * x))
            .collect();
        let n = numeric_gradients(&mut store, &f, 1e-5).unwrap();
        let report = compare(&store, &a, &n, 1e-4);
        assert!(!report.passed());
        assert!((report.max_rel_err() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn evaluation_failure_is_reported() {
        let (mut store, id) = square_store();
        let report = grad_check(&mut store, |t| Ok(t.param(id)), 1e-5, 1e-4);
        assert!(report.passed());
        let report = grad_check(
            &mut store,
            |t| {
                let c = t.constant(Tensor::zeros(&[2, 2]));
                let _ = t.param(id);
                Ok(c)
            },
            1e-5,
            1e-4,
        );
        assert!(!report.passed());
        assert!(report.error.is_some());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
