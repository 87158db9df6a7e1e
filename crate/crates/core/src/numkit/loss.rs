use super::matrix::RealMatrix;
use crate::error::{Error, Result};

/// Mean softmax cross-entropy over rows, and its gradient w.r.t. the logits.
///
/// The gradient is `(softmax - onehot) / n`. Rows are shifted by their max
/// before exponentiation.
pub fn softmax_xent(logits: &RealMatrix, labels: &[usize]) -> Result<(f64, RealMatrix)> {
    let n = logits.rows();
    let k = logits.cols();
    if n == 0 {
        return Err(Error::validation("softmax_xent needs at least one row"));
    }
    if labels.len() != n {
        return Err(Error::validation(format!(
            "softmax_xent: {} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::validation(format!(
            "label {l} at row {i} outside [0, {k})"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = RealMatrix::zeros(n, k);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut arg = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[arg] {
                arg = j;
            }
        }
        let max = row[arg];
        // The max term contributes exactly 1; log1p keeps precision for the rest.
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != arg)
            .map(|(_, v)| (v - max).exp())
            .sum();
        let log_rest = rest.ln_1p();
        total += (max - row[label]) + log_rest;
        let g = grad.row_mut(i);
        for (j, (gv, v)) in g.iter_mut().zip(row).enumerate() {
            let p = ((v - max) - log_rest).exp();
            *gv = (p - if j == label { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::finite_diff_check;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = RealMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let (loss, grad) = softmax_xent(&logits, &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad.as_slice(), &[-0.5, 0.5]);
    }

    #[test]
    fn gradient_is_divided_by_batch() {
        let logits = RealMatrix::zeros(4, 2);
        let (_, grad) = softmax_xent(&logits, &[0, 0, 1, 1]).unwrap();
        assert_eq!(grad.row(0), &[-0.125, 0.125]);
    }

    #[test]
    fn confident_correct_logits() {
        // -log(1 / (1 + e^-20)) = log1p(e^-20), 40-digit evaluation: 2.0611536203143807e-9
        let logits = RealMatrix::from_rows(&[[10.0, -10.0]]).unwrap();
        let (loss, _) = softmax_xent(&logits, &[0]).unwrap();
        assert!((loss - 2.0611536203143807e-9).abs() < 1e-20, "{loss}");
    }

    #[test]
    fn rejects_bad_labels() {
        let logits = RealMatrix::zeros(2, 2);
        assert!(matches!(softmax_xent(&logits, &[0, 2]), Err(Error::Validation(_))));
        assert!(softmax_xent(&RealMatrix::zeros(0, 2), &[]).is_err());
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = RealMatrix::from_rows(&[[1000.0, -1000.0], [-1000.0, 1000.0]]).unwrap();
        let (loss, grad) = softmax_xent(&logits, &[1, 1]).unwrap();
        assert!(loss.is_finite() && grad.is_finite());
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn nonnegative_and_rows_sum_to_zero(
            vals in prop::collection::vec(-20.0f64..20.0, 12),
            labels in prop::collection::vec(0usize..3, 4),
        ) {
            let logits = RealMatrix::from_vec(4, 3, vals).unwrap();
            let (loss, grad) = softmax_xent(&logits, &labels).unwrap();
            prop_assert!(loss >= 0.0);
            for i in 0..4 {
                prop_assert!(grad.row(i).iter().sum::<f64>().abs() < 1e-14);
            }
        }

        #[test]
        fn gradient_matches_finite_differences(
            vals in prop::collection::vec(-3.0f64..3.0, 10),
            labels in prop::collection::vec(0usize..2, 5),
        ) {
            let err = finite_diff_check(
                |p: &[f64]| {
                    let logits = RealMatrix::from_vec(5, 2, p.to_vec())?;
                    let (l, g) = softmax_xent(&logits, &labels)?;
                    Ok((l, g.into_vec()))
                },
                &vals,
                1e-5,
            ).unwrap();
            prop_assert!(err < 1e-4, "rel err {}", err);
        }
    }
}
