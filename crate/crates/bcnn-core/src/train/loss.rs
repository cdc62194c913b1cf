//! Softmax cross-entropy (stable log-sum-exp form) and top-k accuracy.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::RealTensor;

/// Mean cross-entropy over the batch and its gradient with respect to the
/// logits, computed as (softmax - onehot) / batch.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &RealTensor<S>,
    labels: &[usize],
) -> Result<(S, RealTensor<S>)> {
    let (n, classes) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let inv_n = S::one() / S::from_usize(n).unwrap();
    let mut grad = vec![S::zero(); n * classes];
    let mut total = S::zero();
    for (row, &label) in labels.iter().enumerate() {
        let z = &logits.data()[row * classes..(row + 1) * classes];
        let mut maxv = z[0];
        for &v in &z[1..] {
            maxv = maxv.max(v);
        }
        let mut sum = S::zero();
        for &v in z {
            sum += (v - maxv).exp();
        }
        let lse = maxv + sum.ln();
        total += lse - z[label];
        let g = &mut grad[row * classes..(row + 1) * classes];
        for (j, &v) in z.iter().enumerate() {
            g[j] = (v - lse).exp() * inv_n;
        }
        g[label] -= inv_n;
    }
    Ok((total * inv_n, RealTensor::from_vec(&[n, classes], grad)?))
}

/// Fraction of rows whose label appears among the k largest logits.
/// Ties are broken toward the lower class index, so results do not depend
/// on sort internals.
pub fn top_k_accuracy<S: Scalar>(logits: &RealTensor<S>, labels: &[usize], k: usize) -> Result<f64> {
    let (n, classes) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    if k == 0 || k > classes {
        return Err(Error::Config(format!("top-{k} undefined for {classes} classes")));
    }
    let mut hits = 0usize;
    let mut order: Vec<usize> = Vec::with_capacity(classes);
    for (row, &label) in labels.iter().enumerate() {
        let z = &logits.data()[row * classes..(row + 1) * classes];
        order.clear();
        order.extend(0..classes);
        order.sort_by(|&a, &b| {
            z[b].partial_cmp(&z[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        if order[..k].contains(&label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}
