use super::network::softmax_in_place;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the
/// logits, `(softmax(z) - onehot(label)) / batch`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let [batch, classes] = *logits.shape() else {
        return Err(Error::Shape(format!("logits must be (batch, classes), got {:?}", logits.shape())));
    };
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if batch == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let inv_batch = T::one() / T::from_usize(batch).unwrap();
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (row, &label) in grad.data_mut().chunks_exact_mut(classes).zip(labels) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row.iter().map(|&v| (v - max).as_f64().exp()).sum::<f64>().ln() + max.as_f64();
        loss += lse - row[label].as_f64();
        softmax_in_place(row);
        row[label] = row[label] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_batch;
        }
    }
    Ok((loss / batch as f64, grad))
}

/// Row-wise softmax probabilities.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let classes = *logits.shape().last().unwrap_or(&1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(classes) {
        softmax_in_place(row);
    }
    out
}
