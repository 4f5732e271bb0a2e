use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::model::{Prepared, TegModel};
use crate::episodes::{predict, MetaTask};
use crate::error::{Result, TegError};
use crate::numerics::Tensor;

const MAX_REDRAWS: usize = 16;

/// `h ↦ h·Q + λ·1ᵀ`, optionally followed by i.i.d. Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub q: Tensor,
    pub lambda: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl TransformSpec {
    pub fn identity(dim: usize) -> Self {
        Self {
            q: Tensor::identity(dim),
            lambda: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    /// `‖QᵀQ − I‖_max`.
    pub fn orthogonality_error(&self) -> f64 {
        let qtq = self.q.transpose().matmul(&self.q).expect("square");
        let n = self.q.rows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((qtq.get(i, j) - target).abs());
            }
        }
        worst
    }

    /// Applies the transform to the rows of `h`; `stream` selects the noise
    /// draw so that different episodes get independent noise.
    pub fn apply(&self, h: &Tensor, stream: u64) -> Result<Tensor> {
        let mut out = h.matmul(&self.q)?;
        for v in out.data_mut() {
            *v += self.lambda;
        }
        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "noise", stream));
            for v in out.data_mut() {
                *v += self.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(out)
    }
}

/// Gram–Schmidt (two passes) of a seeded Gaussian matrix; near-dependent
/// draws are redrawn a bounded number of times.
fn orthonormalize(a: &Tensor) -> Option<Tensor> {
    let n = a.rows();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let orig: Vec<f64> = (0..n).map(|i| a.get(i, j)).collect();
        let orig_norm = orig.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut v = orig;
        for _ in 0..2 {
            for q in &cols {
                let dot: f64 = q.iter().zip(&v).map(|(x, y)| x * y).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-8 * orig_norm) {
            return None;
        }
        cols.push(v.into_iter().map(|x| x / norm).collect());
    }
    let mut q = Tensor::zeros(&[n, n]);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            q.set(i, j, v);
        }
    }
    Some(q)
}

pub fn make_transform(
    dim: usize,
    lambda_range: (f64, f64),
    noise_sigma: f64,
    seed: u64,
) -> Result<TransformSpec> {
    if dim == 0 {
        return Err(TegError::InvalidConfig(
            "transform dimension must be >= 1".into(),
        ));
    }
    if !(lambda_range.0 <= lambda_range.1 && noise_sigma >= 0.0) {
        return Err(TegError::InvalidConfig(
            "bad lambda range or negative noise".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_REDRAWS {
        let data = (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect();
        let a = Tensor::new(&[dim, dim], data)?;
        if let Some(q) = orthonormalize(&a) {
            let lambda = if lambda_range.0 == lambda_range.1 {
                lambda_range.0
            } else {
                rng.random_range(lambda_range.0..lambda_range.1)
            };
            return Ok(TransformSpec {
                q,
                lambda,
                noise_sigma,
                seed,
            });
        }
    }
    Err(TegError::DegenerateTransform(format!(
        "{MAX_REDRAWS} Gaussian draws of size {dim} were numerically singular"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub reference_accuracy: f64,
    pub transformed_accuracy: Vec<f64>,
    pub mean_transformed_accuracy: f64,
    /// Fraction of (transform, query) pairs predicted as in the reference.
    pub agreement: f64,
    /// `mean_transformed_accuracy − reference_accuracy`.
    pub gap: f64,
    pub queries: usize,
}

/// Classifies the same episodes under the identity and under each transform
/// applied to the episode's semantic rows.
pub fn equivariance_audit(
    model: &TegModel,
    data: &Prepared,
    tasks: &[MetaTask],
    transforms: &[TransformSpec],
) -> Result<AuditReport> {
    let h_all = model.embed_nodes(data)?;
    let per_task: Vec<(Vec<usize>, Vec<Vec<usize>>)> = super::eval::eval_pool().install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let h = h_all.gather_rows(&task.nodes());
                let props = data.task_props(task);
                let reference = predict(&model.query_log_probs(&h, &props, task)?);
                let transformed = transforms
                    .iter()
                    .map(|t| {
                        Ok(predict(&model.query_log_probs(
                            &t.apply(&h, i as u64)?,
                            &props,
                            task,
                        )?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((reference, transformed))
            })
            .collect::<Result<_>>()
    })?;

    let queries: usize = tasks.iter().map(|t| t.query.len()).sum();
    let correct = |preds: &[usize], task: &MetaTask| {
        preds
            .iter()
            .zip(&task.query_labels)
            .filter(|(p, y)| p == y)
            .count()
    };
    let denom = queries.max(1) as f64;
    let reference_accuracy = per_task
        .iter()
        .zip(tasks)
        .map(|((r, _), t)| correct(r, t))
        .sum::<usize>() as f64
        / denom;
    let transformed_accuracy: Vec<f64> = (0..transforms.len())
        .map(|k| {
            per_task
                .iter()
                .zip(tasks)
                .map(|((_, tr), t)| correct(&tr[k], t))
                .sum::<usize>() as f64
                / denom
        })
        .collect();
    let mut agree = 0usize;
    for (reference, transformed) in &per_task {
        for preds in transformed {
            agree += preds.iter().zip(reference).filter(|(a, b)| a == b).count();
        }
    }
    let mean_transformed_accuracy = if transforms.is_empty() {
        reference_accuracy
    } else {
        transformed_accuracy.iter().sum::<f64>() / transforms.len() as f64
    };
    Ok(AuditReport {
        reference_accuracy,
        transformed_accuracy,
        mean_transformed_accuracy,
        agreement: agree as f64 / (queries * transforms.len()).max(1) as f64,
        gap: mean_transformed_accuracy - reference_accuracy,
        queries,
    })
}
