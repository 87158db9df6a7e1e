use super::model::{disc_forward, Discriminator};
use crate::error::{Error, Result};
use crate::numkit::{matmul, matmul_tn, softmax_xent, RealMatrix};

/// Gradient reversal: the forward pass is the identity, the backward pass
/// negates. Loss weights are applied by the caller.
pub fn grl_backward(upstream: &RealMatrix) -> RealMatrix {
    upstream.map(|v| -v)
}

/// Unsigned ensemble adversarial loss `(1/k) Σ_j X(g, ĝ_j)` and the
/// individual terms.
pub fn ensemble_adv_loss(discs: &[Discriminator], h_m: &RealMatrix, g: &[usize]) -> Result<(f64, Vec<f64>)> {
    if discs.is_empty() {
        return Err(Error::validation("ensemble needs at least one discriminator"));
    }
    let per = discs
        .iter()
        .map(|a| {
            let (_, logits) = disc_forward(a, h_m)?;
            Ok(softmax_xent(&logits, g)?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((mean, per))
}

/// Sum over ordered pairs `i != j` of `||H_iᵀ H_j||_F²`, with the gradient
/// w.r.t. every `H_i`.
///
/// Each unordered pair is counted twice, so the gradient w.r.t. `H_i` is
/// `4 Σ_{j≠i} H_j (H_jᵀ H_i)`.
pub fn difference_loss(h_as: &[RealMatrix]) -> Result<(f64, Vec<RealMatrix>)> {
    let Some(first) = h_as.first() else {
        return Ok((0.0, Vec::new()));
    };
    for h in &h_as[1..] {
        if h.shape() != first.shape() {
            return Err(Error::shape("difference_loss", first.shape(), h.shape()));
        }
    }
    let mut grads: Vec<RealMatrix> = h_as.iter().map(|h| RealMatrix::zeros(h.rows(), h.cols())).collect();
    let mut total = 0.0;
    for i in 0..h_as.len() {
        for j in (i + 1)..h_as.len() {
            // cross = H_iᵀ H_j; ||cross||² appears for (i, j) and (j, i).
            let cross = matmul_tn(&h_as[i], &h_as[j])?;
            total += 2.0 * cross.frobenius_sq();
            // d/dH_i ||H_iᵀH_j||² = 2 H_j crossᵀ ; d/dH_j = 2 H_i cross
            let gi = matmul(&h_as[j], &cross.transpose())?;
            let gj = matmul(&h_as[i], &cross)?;
            grads[i].add_scaled(4.0, &gi)?;
            grads[j].add_scaled(4.0, &gj)?;
        }
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_check, Activation, DenseLayer};
    use crate::fairmodel::model::EncoderClassifier;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
        RealMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn grl_negates_exactly() {
        let g = RealMatrix::from_rows(&[[1.0, -2.0]]).unwrap();
        assert_eq!(grl_backward(&g).as_slice(), &[-1.0, 2.0]);
        assert_eq!(grl_backward(&RealMatrix::zeros(2, 2)), RealMatrix::zeros(2, 2).map(|v| -v));
        assert_eq!(grl_backward(&grl_backward(&g)), g);
    }

    #[test]
    fn single_disc_ensemble_is_plain_loss() {
        let h = RealMatrix::from_fn(6, 4, |i, j| ((i + 2 * j) as f64 * 0.3).sin());
        let g = [0, 1, 1, 0, 1, 0];
        let a = Discriminator::new(4, 5, 2, Activation::Tanh, 3, 0);
        let (mean, per) = ensemble_adv_loss(std::slice::from_ref(&a), &h, &g).unwrap();
        let (_, logits) = disc_forward(&a, &h).unwrap();
        assert_eq!(mean, softmax_xent(&logits, &g).unwrap().0);
        assert_eq!(per, vec![mean]);
    }

    #[test]
    fn identical_discs_average_to_each() {
        let h = RealMatrix::from_fn(6, 4, |i, j| ((i * j) as f64 * 0.2).cos());
        let g = [0, 1, 1, 0, 1, 0];
        let a = Discriminator::new(4, 5, 2, Activation::Tanh, 9, 0);
        let (mean, per) = ensemble_adv_loss(&[a.clone(), a.clone(), a], &h, &g).unwrap();
        assert!((mean - per[0]).abs() < 1e-15);
    }

    #[test]
    fn zero_discs_give_ln2() {
        let zero = || {
            Discriminator(
                EncoderClassifier::from_layers(
                    DenseLayer::zeros(4, 3, Activation::Tanh),
                    DenseLayer::zeros(3, 3, Activation::Tanh),
                    DenseLayer::zeros(3, 2, Activation::Identity),
                )
                .unwrap(),
            )
        };
        let h = RealMatrix::from_fn(4, 4, |i, j| (i + j) as f64);
        let (mean, _) = ensemble_adv_loss(&[zero(), zero(), zero()], &h, &[0, 1, 0, 1]).unwrap();
        assert!((mean - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(ensemble_adv_loss(&[], &h, &[0, 1, 0, 1]).is_err());
    }

    #[test]
    fn difference_loss_worked_cases() {
        let h1 = RealMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let h2 = RealMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(difference_loss(std::slice::from_ref(&h1)).unwrap().0, 0.0);
        assert_eq!(difference_loss(&[h1.clone(), h2]).unwrap().0, 4.0);

        let a = RealMatrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
        let b = RealMatrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [5.0, 1.0], [-2.0, 4.0]]).unwrap();
        assert_eq!(difference_loss(&[a, b]).unwrap().0, 0.0);
    }

    #[test]
    fn difference_loss_shape_error() {
        let r = difference_loss(&[RealMatrix::zeros(3, 2), RealMatrix::zeros(2, 2)]);
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    fn diff_check(k: usize, n: usize, d: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hs: Vec<RealMatrix> = (0..k).map(|_| random(n, d, &mut rng)).collect();
        let flat: Vec<f64> = hs.iter().flat_map(|h| h.as_slice().to_vec()).collect();
        finite_diff_check(
            |p| {
                let mats: Vec<RealMatrix> = p
                    .chunks(n * d)
                    .map(|c| RealMatrix::from_vec(n, d, c.to_vec()))
                    .collect::<Result<_>>()?;
                let (v, g) = difference_loss(&mats)?;
                Ok((v, g.into_iter().flat_map(|m| m.into_vec()).collect()))
            },
            &flat,
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn difference_loss_gradient_k3() {
        let e = diff_check(3, 5, 4, 17);
        assert!(e < 1e-4, "{e}");
    }

    #[test]
    fn difference_loss_gradient_through_two_layer_encoders() {
        // Two 2-layer tanh encoders over a shared input; loss is the
        // difference loss of their outputs, gradient w.r.t. all parameters.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(6, 3, &mut rng);
        let make = |s| {
            EncoderClassifier::new(3, 4, 2, Activation::Tanh, s)
        };
        let (e1, e2) = (make(1), make(2));
        let n1 = e1.param_count();
        let mut p = e1.params();
        p.extend(e2.params());
        let err = finite_diff_check(
            |p| {
                let (mut a, mut b) = (e1.clone(), e2.clone());
                a.set_params(&p[..n1])?;
                b.set_params(&p[n1..])?;
                let ha = a.forward(&x)?.0;
                let hb = b.forward(&x)?.0;
                let (v, g) = difference_loss(&[ha, hb])?;
                a.backward_encoder_params(&g[0])?;
                b.backward_encoder_params(&g[1])?;
                let mut grads = a.grads();
                grads.extend(b.grads());
                Ok((v, grads))
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn gradient_descent_decreases_difference_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut hs = vec![random(5, 4, &mut rng), random(5, 4, &mut rng)];
        let mut prev = difference_loss(&hs).unwrap().0;
        for _ in 0..100 {
            let (_, g) = difference_loss(&hs).unwrap();
            for (h, gi) in hs.iter_mut().zip(&g) {
                h.add_scaled(-1e-3, gi).unwrap();
            }
            let cur = difference_loss(&hs).unwrap().0;
            assert!(cur <= prev, "{cur} > {prev}");
            prev = cur;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn permutation_and_sign_invariance(seed in 0u64..1000, flip in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hs: Vec<RealMatrix> = (0..3).map(|_| random(4, 3, &mut rng)).collect();
            let base = difference_loss(&hs).unwrap().0;
            let perm = vec![hs[2].clone(), hs[0].clone(), hs[1].clone()];
            prop_assert!((difference_loss(&perm).unwrap().0 - base).abs() <= 1e-12 * base.max(1.0));
            let mut signed = hs.clone();
            signed[flip] = signed[flip].map(|v| -v);
            prop_assert!((difference_loss(&signed).unwrap().0 - base).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn gradient_matches_finite_differences(k in 2usize..4, n in 1usize..6, d in 1usize..5, seed in 0u64..10_000) {
            let e = diff_check(k, n, d, seed);
            prop_assert!(e < 1e-4, "rel err {}", e);
        }

        #[test]
        fn zero_iff_cross_grams_vanish(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Disjoint row supports force every cross-Gram to zero.
            let mut a = random(6, 3, &mut rng);
            let mut b = random(6, 3, &mut rng);
            for i in 0..3 { b.row_mut(i).fill(0.0); a.row_mut(i + 3).fill(0.0); }
            prop_assert_eq!(difference_loss(&[a.clone(), b.clone()]).unwrap().0, 0.0);
            // Any shared support makes it positive.
            b.row_mut(0)[0] = 1.0;
            let v = difference_loss(&[a.clone(), b]).unwrap().0;
            prop_assert_eq!(v > 0.0, a.row(0).iter().any(|&x| x != 0.0));
        }
    }
}
