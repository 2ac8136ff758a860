//! Softmax cross-entropy with per-example losses.

use crate::array::RealArray;
use crate::error::{Error, Result};
use crate::nn::PerExampleLoss;

/// Per-example cross-entropy and its logit gradients.
///
/// Labels are class ids in `1..=L` where `L` is the logits width. Losses use
/// the log-sum-exp with max subtraction; gradients are
/// `softmax(logits_i) - onehot(y_i)`, deliberately not divided by the batch
/// size — batch averaging belongs to the optimizer.
pub fn softmax_cross_entropy(
    logits: &RealArray,
    labels: &[usize],
) -> Result<(PerExampleLoss, RealArray)> {
    let (n, classes) = match logits.shape() {
        [n, l] => (*n, *l),
        other => {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                lhs: format!("{other:?}"),
                rhs: "2-d logits [N,L]".into(),
            })
        }
    };
    if labels.len() != n {
        return Err(Error::Dimension {
            op: "softmax_cross_entropy",
            lhs: format!("{n} logit rows"),
            rhs: format!("{} labels", labels.len()),
        });
    }

    let mut losses = Vec::with_capacity(n);
    let mut grads = RealArray::zeros(vec![n, classes]);
    for (i, &label) in labels.iter().enumerate() {
        if label < 1 || label > classes {
            return Err(Error::Label {
                index: i,
                label,
                classes,
            });
        }
        let row = &logits.data()[i * classes..(i + 1) * classes];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        let log_sum = max + denom.ln();
        losses.push(log_sum - row[label - 1]);

        let grad_row = &mut grads.data_mut()[i * classes..(i + 1) * classes];
        for (g, &v) in grad_row.iter_mut().zip(row) {
            *g = (v - max).exp() / denom;
        }
        grad_row[label - 1] -= 1.0;
    }
    Ok((PerExampleLoss::new(losses), grads))
}
