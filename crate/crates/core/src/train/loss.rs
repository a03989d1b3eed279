use crate::error::{Error, Result};
use crate::model::Scalar;

/// Probabilities are clamped to this value before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

fn check<T>(probs: &[T], labels: &[usize], k: usize) -> Result<()> {
    if k == 0 || probs.len() != labels.len() * k {
        return Err(Error::shape(format!(
            "{} probabilities do not form {} rows of {k}",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::shape(format!("label {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Mean categorical cross-entropy of `B x K` probability rows.
pub fn cross_entropy_loss<T: Scalar>(probs: &[T], labels: &[usize], k: usize) -> Result<f64> {
    check(probs, labels, k)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs[i * k + l].to_f64().max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of the mean loss with respect to the pre-softmax logits:
/// `(p - onehot) / B`.
pub fn cross_entropy_grad<T: Scalar>(probs: &[T], labels: &[usize], k: usize) -> Result<Vec<T>> {
    check(probs, labels, k)?;
    let inv_b = T::one() / T::from_f64(labels.len().max(1) as f64);
    let mut grad = probs.to_vec();
    for (row, &l) in grad.chunks_exact_mut(k).zip(labels) {
        row[l] = row[l] - T::one();
        for g in row.iter_mut() {
            *g = *g * inv_b;
        }
    }
    Ok(grad)
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows<T: Scalar>(probs: &[T], k: usize) -> Vec<usize> {
    probs
        .chunks_exact(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
        })
        .collect()
}
