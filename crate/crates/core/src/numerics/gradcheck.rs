use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TegError};
use crate::numerics::{ParamStore, Tape, Var};

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is essentially zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(param, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares tape gradients of `loss_fn` with central differences
/// `(f(p+h) − f(p−h)) / 2h` on `sample` coordinates drawn without
/// replacement (all of them if `sample` covers the store).
///
/// `loss_fn` must be deterministic: disable dropout before checking.
pub fn grad_check<F>(
    loss_fn: F,
    params: &ParamStore,
    h: f64,
    sample: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(store, &mut tape)?;
        let v = tape.value(loss).item();
        if !v.is_finite() {
            return Err(TegError::NonFinite(format!(
                "loss {v} during gradient check"
            )));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let loss = loss_fn(params, &mut tape)?;
    if !tape.value(loss).item().is_finite() {
        return Err(TegError::NonFinite("loss at the base point".into()));
    }
    let grads = tape.backward(loss, params)?;

    let coords: Vec<(String, usize)> = params
        .iter()
        .flat_map(|p| (0..p.value.len()).map(move |i| (p.name.clone(), i)))
        .collect();
    let chosen: Vec<usize> = if sample >= coords.len() {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, coords.len(), sample).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for ci in chosen {
        let (name, i) = &coords[ci];
        let orig = work.get(name)?.data()[*i];
        work.get_mut(name)?.data_mut()[*i] = orig + h;
        let plus = eval(&work)?;
        work.get_mut(name)?.data_mut()[*i] = orig - h;
        let minus = eval(&work)?;
        work.get_mut(name)?.data_mut()[*i] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads.get(name).unwrap().data()[*i];
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((name.clone(), *i, analytic, numeric));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Init, Tensor};

    fn store() -> ParamStore {
        let mut s = ParamStore::new(11);
        s.add("w", &[3, 4], Init::GlorotUniform).unwrap();
        s.add("b", &[1, 4], Init::GlorotUniform).unwrap();
        s
    }

    #[test]
    fn linear_loss_is_exact() {
        let s = store();
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.7, -1.1]]).unwrap();
        for h in [1e-1, 1e-3, 1e-5] {
            let r = grad_check(
                |p, tape| {
                    let w = tape.param(p, "w")?;
                    let b = tape.param(p, "b")?;
                    let xv = tape.constant(x.clone());
                    let y = tape.affine(xv, w, b)?;
                    Ok(tape.sum(y))
                },
                &s,
                h,
                usize::MAX,
                0,
            )
            .unwrap();
            assert!(r.max_rel_error <= 1e-10, "h={h}: {r:?}");
            assert_eq!(r.checked, 16);
        }
    }

    #[test]
    fn curved_loss_error_grows_with_step() {
        let s = store();
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.7, -1.1]]).unwrap();
        let f = |p: &ParamStore, tape: &mut Tape| {
            let w = tape.param(p, "w")?;
            let b = tape.param(p, "b")?;
            let xv = tape.constant(x.clone());
            let y = tape.affine(xv, w, b)?;
            let y = tape.silu(y);
            let y = tape.square(y);
            Ok(tape.sum(y))
        };
        let fine = grad_check(f, &s, 1e-5, usize::MAX, 0).unwrap();
        let coarse = grad_check(f, &s, 1e-1, usize::MAX, 0).unwrap();
        assert!(fine.max_rel_error < 1e-6, "{fine:?}");
        assert!(coarse.max_rel_error > fine.max_rel_error);
    }

    #[test]
    fn sampling_limits_checked_coordinates() {
        let s = store();
        let r = grad_check(
            |p, tape| {
                let w = tape.param(p, "w")?;
                Ok(tape.sum(w))
            },
            &s,
            1e-5,
            5,
            3,
        )
        .unwrap();
        assert_eq!(r.checked, 5);
    }

    #[test]
    fn non_finite_loss_errors() {
        let s = store();
        let r = grad_check(
            |_, tape| Ok(tape.constant(Tensor::scalar(f64::NAN))),
            &s,
            1e-5,
            3,
            0,
        );
        assert!(matches!(r, Err(TegError::NonFinite(_))));
    }
}
