//! Adversarial least-squares objectives.
//!
//! Every loss here is a plain function of discriminator scores: the
//! discriminator regresses encoder-pair scores to `a`, collected-anomaly
//! pair scores to `(a+b)/2` and generator-pair scores to `b`, while the
//! generator/encoder side regresses all populations to the confusion
//! target `c`. Empirical expectations are realized as arithmetic means
//! per population; an empty anomaly population contributes exactly zero,
//! which reduces the losses to their unsupervised (BiLSGAN) forms.
//!
//! All functions are pure and safe to call concurrently.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Regression targets `(a, b, c)` for the adversarial game.
///
/// `a` is the target for encoder pairs, `b` for generator pairs; the
/// collected-anomaly discriminator target is the midpoint `(a+b)/2`, and
/// `c` is the confusion value the generator/encoder drive all scores to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScheme {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for TargetScheme {
    fn default() -> Self {
        TargetScheme {
            a: 1.0,
            b: 0.0,
            c: 0.75,
        }
    }
}

impl TargetScheme {
    /// Build a scheme, rejecting the degenerate case `a == b`.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::invalid("target scheme values must be finite"));
        }
        if a == b {
            return Err(Error::invalid(
                "target scheme requires a != b; equal targets make the discriminator objective degenerate",
            ));
        }
        Ok(TargetScheme { a, b, c })
    }

    /// Discriminator target for collected-anomaly pairs.
    pub fn anomaly_target(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

/// Joint-discriminator scores grouped by the population they came from.
///
/// `neg` may be empty (the unsupervised reduction); `pos` and `gen` must
/// be non-empty for any loss evaluation.
#[derive(Debug, Clone, Default)]
pub struct ScoreBatch {
    /// D on (x+, E(x+)) pairs.
    pub pos: Vec<f64>,
    /// D on (x-, E(x-)) pairs; empty when no anomalies were collected.
    pub neg: Vec<f64>,
    /// D on (G(z), z) pairs.
    pub gen: Vec<f64>,
}

impl ScoreBatch {
    pub fn new(pos: Vec<f64>, neg: Vec<f64>, gen: Vec<f64>) -> Self {
        ScoreBatch { pos, neg, gen }
    }

    fn check(&self) -> Result<()> {
        if self.pos.is_empty() || self.gen.is_empty() {
            return Err(Error::invalid(
                "score batch requires non-empty pos and gen populations",
            ));
        }
        Ok(())
    }
}

/// Pair-discriminator scores for the reconstruction-enhanced objectives.
///
/// `real_pos` holds D'(x+, x+), `real_neg` D'(x-, x-) (may be empty) and
/// `recon` D'(x+, x̂+); `real_pos` and `recon` are paired over the same
/// mini-batch and must have equal length.
#[derive(Debug, Clone, Default)]
pub struct PairScoreBatch {
    pub real_pos: Vec<f64>,
    pub real_neg: Vec<f64>,
    pub recon: Vec<f64>,
}

impl PairScoreBatch {
    pub fn new(real_pos: Vec<f64>, real_neg: Vec<f64>, recon: Vec<f64>) -> Self {
        PairScoreBatch {
            real_pos,
            real_neg,
            recon,
        }
    }

    fn check(&self) -> Result<()> {
        if self.real_pos.is_empty() || self.recon.is_empty() {
            return Err(Error::invalid(
                "pair score batch requires non-empty real_pos and recon populations",
            ));
        }
        if self.real_pos.len() != self.recon.len() {
            return Err(Error::invalid(format!(
                "real_pos and recon are paired over one mini-batch but have lengths {} and {}",
                self.real_pos.len(),
                self.recon.len()
            )));
        }
        Ok(())
    }
}

/// Per-score gradients mirroring the layout of [`ScoreBatch`].
#[derive(Debug, Clone, Default)]
pub struct ScoreBatchGrad {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub gen: Vec<f64>,
}

/// Per-score gradients mirroring the layout of [`PairScoreBatch`].
#[derive(Debug, Clone, Default)]
pub struct PairScoreBatchGrad {
    pub real_pos: Vec<f64>,
    pub real_neg: Vec<f64>,
    pub recon: Vec<f64>,
}

/// Mean of (s - target)^2 with compensated summation, 0 for an empty slice.
///
/// Kahan summation keeps the result invariant (to ~1 ulp) under any
/// permutation of the scores.
fn mean_sq_dev(scores: &[f64], target: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &s in scores {
        let d = s - target;
        let term = d * d - comp;
        let t = sum + term;
        comp = (t - sum) - term;
        sum = t;
    }
    sum / scores.len() as f64
}

/// Gradient of [`mean_sq_dev`] w.r.t. each score: 2 (s - target) / n.
fn mean_sq_dev_grad(scores: &[f64], target: f64) -> Vec<f64> {
    let n = scores.len() as f64;
    scores.iter().map(|&s| 2.0 * (s - target) / n).collect()
}

/// Anomaly-aware discriminator loss:
/// mean((s-a)^2 over pos) + mean((s-(a+b)/2)^2 over neg) + mean((s-b)^2 over gen).
pub fn aa_discriminator_loss(batch: &ScoreBatch, scheme: &TargetScheme) -> Result<f64> {
    batch.check()?;
    Ok(mean_sq_dev(&batch.pos, scheme.a)
        + mean_sq_dev(&batch.neg, scheme.anomaly_target())
        + mean_sq_dev(&batch.gen, scheme.b))
}

/// Gradient of [`aa_discriminator_loss`] w.r.t. every score.
pub fn aa_discriminator_loss_grad(
    batch: &ScoreBatch,
    scheme: &TargetScheme,
) -> Result<(f64, ScoreBatchGrad)> {
    let loss = aa_discriminator_loss(batch, scheme)?;
    Ok((
        loss,
        ScoreBatchGrad {
            pos: mean_sq_dev_grad(&batch.pos, scheme.a),
            neg: mean_sq_dev_grad(&batch.neg, scheme.anomaly_target()),
            gen: mean_sq_dev_grad(&batch.gen, scheme.b),
        },
    ))
}

/// Anomaly-aware generator/encoder loss: every population regresses to `c`.
pub fn aa_generator_encoder_loss(batch: &ScoreBatch, scheme: &TargetScheme) -> Result<f64> {
    batch.check()?;
    Ok(mean_sq_dev(&batch.pos, scheme.c)
        + mean_sq_dev(&batch.neg, scheme.c)
        + mean_sq_dev(&batch.gen, scheme.c))
}

/// Gradient of [`aa_generator_encoder_loss`] w.r.t. every score.
pub fn aa_generator_encoder_loss_grad(
    batch: &ScoreBatch,
    scheme: &TargetScheme,
) -> Result<(f64, ScoreBatchGrad)> {
    let loss = aa_generator_encoder_loss(batch, scheme)?;
    Ok((
        loss,
        ScoreBatchGrad {
            pos: mean_sq_dev_grad(&batch.pos, scheme.c),
            neg: mean_sq_dev_grad(&batch.neg, scheme.c),
            gen: mean_sq_dev_grad(&batch.gen, scheme.c),
        },
    ))
}

/// Unsupervised bidirectional least-squares discriminator loss:
/// mean((s-1)^2 over pos) + mean(s^2 over gen).
pub fn bilsgan_discriminator_loss(pos_scores: &[f64], gen_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || gen_scores.is_empty() {
        return Err(Error::invalid("pos and gen score lists must be non-empty"));
    }
    Ok(mean_sq_dev(pos_scores, 1.0) + mean_sq_dev(gen_scores, 0.0))
}

/// Gradient of [`bilsgan_discriminator_loss`].
pub fn bilsgan_discriminator_loss_grad(
    pos_scores: &[f64],
    gen_scores: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let loss = bilsgan_discriminator_loss(pos_scores, gen_scores)?;
    Ok((
        loss,
        mean_sq_dev_grad(pos_scores, 1.0),
        mean_sq_dev_grad(gen_scores, 0.0),
    ))
}

/// Unsupervised generator/encoder loss: both populations regress to 0.5.
pub fn bilsgan_generator_encoder_loss(pos_scores: &[f64], gen_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || gen_scores.is_empty() {
        return Err(Error::invalid("pos and gen score lists must be non-empty"));
    }
    Ok(mean_sq_dev(pos_scores, 0.5) + mean_sq_dev(gen_scores, 0.5))
}

/// Gradient of [`bilsgan_generator_encoder_loss`].
pub fn bilsgan_generator_encoder_loss_grad(
    pos_scores: &[f64],
    gen_scores: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let loss = bilsgan_generator_encoder_loss(pos_scores, gen_scores)?;
    Ok((
        loss,
        mean_sq_dev_grad(pos_scores, 0.5),
        mean_sq_dev_grad(gen_scores, 0.5),
    ))
}

/// Pair-discriminator augmentation for the discriminator update.
///
/// Targets `a` on (x+, x+), `(a+b)/2` on (x-, x-) and `b` on (x+, x̂+).
/// This is only the D' term; callers add [`aa_discriminator_loss`] to
/// form the full discriminator objective.
pub fn recon_discriminator_loss(pairs: &PairScoreBatch, scheme: &TargetScheme) -> Result<f64> {
    pairs.check()?;
    Ok(mean_sq_dev(&pairs.real_pos, scheme.a)
        + mean_sq_dev(&pairs.real_neg, scheme.anomaly_target())
        + mean_sq_dev(&pairs.recon, scheme.b))
}

/// Gradient of [`recon_discriminator_loss`].
pub fn recon_discriminator_loss_grad(
    pairs: &PairScoreBatch,
    scheme: &TargetScheme,
) -> Result<(f64, PairScoreBatchGrad)> {
    let loss = recon_discriminator_loss(pairs, scheme)?;
    Ok((
        loss,
        PairScoreBatchGrad {
            real_pos: mean_sq_dev_grad(&pairs.real_pos, scheme.a),
            real_neg: mean_sq_dev_grad(&pairs.real_neg, scheme.anomaly_target()),
            recon: mean_sq_dev_grad(&pairs.recon, scheme.b),
        },
    ))
}

/// Pair-discriminator augmentation for the generator/encoder update:
/// all pair populations regress to `c`.
pub fn recon_generator_encoder_loss(pairs: &PairScoreBatch, scheme: &TargetScheme) -> Result<f64> {
    pairs.check()?;
    Ok(mean_sq_dev(&pairs.real_pos, scheme.c)
        + mean_sq_dev(&pairs.real_neg, scheme.c)
        + mean_sq_dev(&pairs.recon, scheme.c))
}

/// Gradient of [`recon_generator_encoder_loss`].
pub fn recon_generator_encoder_loss_grad(
    pairs: &PairScoreBatch,
    scheme: &TargetScheme,
) -> Result<(f64, PairScoreBatchGrad)> {
    let loss = recon_generator_encoder_loss(pairs, scheme)?;
    Ok((
        loss,
        PairScoreBatchGrad {
            real_pos: mean_sq_dev_grad(&pairs.real_pos, scheme.c),
            real_neg: mean_sq_dev_grad(&pairs.real_neg, scheme.c),
            recon: mean_sq_dev_grad(&pairs.recon, scheme.c),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scheme(a: f64, b: f64, c: f64) -> TargetScheme {
        TargetScheme::new(a, b, c).unwrap()
    }

    #[test]
    fn scheme_default_and_validation() {
        let s = TargetScheme::default();
        assert_eq!((s.a, s.b, s.c), (1.0, 0.0, 0.75));
        assert!(TargetScheme::new(0.5, 0.5, 0.3).is_err());
        assert!(TargetScheme::new(f64::NAN, 0.0, 0.5).is_err());
    }

    #[test]
    fn aa_discriminator_loss_examples() {
        let s = scheme(1.0, 0.0, 0.75);
        let b = ScoreBatch::new(vec![1.0, 1.0], vec![0.5, 0.5], vec![0.0, 0.0]);
        assert_eq!(aa_discriminator_loss(&b, &s).unwrap(), 0.0);

        let b = ScoreBatch::new(vec![0.8], vec![0.2], vec![0.3]);
        let got = aa_discriminator_loss(&b, &s).unwrap();
        assert!((got - 0.22).abs() < 1e-15, "got {got}");

        let b = ScoreBatch::new(vec![0.7, 0.7], vec![], vec![0.1]);
        let got = aa_discriminator_loss(&b, &s).unwrap();
        assert!((got - 0.10).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn aa_generator_encoder_loss_examples() {
        let s = scheme(1.0, 0.0, 0.75);
        let b = ScoreBatch::new(vec![0.75], vec![0.75], vec![0.75]);
        assert_eq!(aa_generator_encoder_loss(&b, &s).unwrap(), 0.0);

        let b = ScoreBatch::new(vec![0.5], vec![0.5], vec![0.5]);
        let got = aa_generator_encoder_loss(&b, &s).unwrap();
        assert!((got - 0.1875).abs() < 1e-15, "got {got}");

        let s2 = scheme(1.0, 0.0, 0.5);
        let b = ScoreBatch::new(vec![1.0], vec![], vec![0.0]);
        let got = aa_generator_encoder_loss(&b, &s2).unwrap();
        assert!((got - 0.5).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn bilsgan_loss_examples() {
        assert_eq!(bilsgan_discriminator_loss(&[1.0], &[0.0]).unwrap(), 0.0);
        let got = bilsgan_discriminator_loss(&[0.5], &[0.5]).unwrap();
        assert!((got - 0.5).abs() < 1e-15);

        assert_eq!(bilsgan_generator_encoder_loss(&[0.5], &[0.5]).unwrap(), 0.0);
        let got = bilsgan_generator_encoder_loss(&[1.0], &[0.0]).unwrap();
        assert!((got - 0.5).abs() < 1e-15);
        let got = bilsgan_generator_encoder_loss(&[0.75, 0.25], &[0.5]).unwrap();
        assert!((got - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn recon_loss_examples() {
        let s = scheme(1.0, 0.0, 0.75);
        let p = PairScoreBatch::new(vec![1.0], vec![0.5], vec![0.0]);
        assert_eq!(recon_discriminator_loss(&p, &s).unwrap(), 0.0);

        let p = PairScoreBatch::new(vec![0.5], vec![], vec![0.5]);
        let got = recon_discriminator_loss(&p, &s).unwrap();
        assert!((got - 0.5).abs() < 1e-15);

        let p = PairScoreBatch::new(vec![1.0, 1.0], vec![0.5], vec![0.2, 0.4]);
        let got = recon_discriminator_loss(&p, &s).unwrap();
        assert!((got - 0.10).abs() < 1e-15, "got {got}");

        let p = PairScoreBatch::new(vec![0.75], vec![0.75], vec![0.75]);
        assert_eq!(recon_generator_encoder_loss(&p, &s).unwrap(), 0.0);
        let p = PairScoreBatch::new(vec![1.0], vec![1.0], vec![1.0]);
        let got = recon_generator_encoder_loss(&p, &s).unwrap();
        assert!((got - 0.1875).abs() < 1e-15);
        let p = PairScoreBatch::new(vec![0.75], vec![], vec![0.25]);
        let got = recon_generator_encoder_loss(&p, &s).unwrap();
        assert!((got - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let s = TargetScheme::default();
        let b = ScoreBatch::new(vec![], vec![0.5], vec![0.5]);
        assert!(aa_discriminator_loss(&b, &s).is_err());
        let b = ScoreBatch::new(vec![0.5], vec![], vec![]);
        assert!(aa_generator_encoder_loss(&b, &s).is_err());
        assert!(bilsgan_discriminator_loss(&[], &[0.1]).is_err());
        assert!(bilsgan_generator_encoder_loss(&[0.1], &[]).is_err());
        let p = PairScoreBatch::new(vec![], vec![], vec![0.5]);
        assert!(recon_discriminator_loss(&p, &s).is_err());
        let p = PairScoreBatch::new(vec![0.5, 0.6], vec![], vec![0.5]);
        assert!(
            recon_generator_encoder_loss(&p, &s).is_err(),
            "unpaired real_pos/recon lengths must be rejected"
        );
    }

    /// Central-difference gradient check driver shared by the tests below.
    fn check_grads(
        scores: &mut ScoreBatch,
        scheme: &TargetScheme,
        f: &dyn Fn(&ScoreBatch, &TargetScheme) -> Result<(f64, ScoreBatchGrad)>,
    ) {
        let h = 1e-5;
        let (_, grad) = f(scores, scheme).unwrap();
        let all = [
            (0usize, grad.pos.clone()),
            (1, grad.neg.clone()),
            (2, grad.gen.clone()),
        ];
        for (which, grads) in all {
            for i in 0..grads.len() {
                let orig = match which {
                    0 => scores.pos[i],
                    1 => scores.neg[i],
                    _ => scores.gen[i],
                };
                let set = |sb: &mut ScoreBatch, v: f64| match which {
                    0 => sb.pos[i] = v,
                    1 => sb.neg[i] = v,
                    _ => sb.gen[i] = v,
                };
                set(scores, orig + h);
                let up = f(scores, scheme).unwrap().0;
                set(scores, orig - h);
                let down = f(scores, scheme).unwrap().0;
                set(scores, orig);
                let fd = (up - down) / (2.0 * h);
                let g = grads[i];
                let denom = g.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((g - fd) / denom).abs() < 1e-6,
                    "grad mismatch: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let m = rng.random_range(0..4);
            let k = rng.random_range(1..6);
            let mut batch = ScoreBatch::new(
                (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
            );
            let s = scheme(
                rng.random_range(-1.0..1.0),
                rng.random_range(1.5..2.5),
                rng.random_range(-1.0..1.0),
            );
            check_grads(&mut batch, &s, &aa_discriminator_loss_grad);
            check_grads(&mut batch, &s, &aa_generator_encoder_loss_grad);
        }
    }

    proptest! {
        /// Empty-anomaly reduction: aa losses with scheme (1,0,·) equal the
        /// bilsgan losses on the same scores.
        #[test]
        fn reduction_to_bilsgan(
            pos in proptest::collection::vec(-3.0..3.0f64, 1..20),
            gen in proptest::collection::vec(-3.0..3.0f64, 1..20),
            c in -1.0..2.0f64,
        ) {
            let s = scheme(1.0, 0.0, c);
            let batch = ScoreBatch::new(pos.clone(), vec![], gen.clone());
            let aa_d = aa_discriminator_loss(&batch, &s).unwrap();
            let bi_d = bilsgan_discriminator_loss(&pos, &gen).unwrap();
            prop_assert!((aa_d - bi_d).abs() < 1e-12);

            let s_half = scheme(1.0, 0.0, 0.5);
            let aa_g = aa_generator_encoder_loss(&batch, &s_half).unwrap();
            let bi_g = bilsgan_generator_encoder_loss(&pos, &gen).unwrap();
            prop_assert!((aa_g - bi_g).abs() < 1e-12);
        }

        /// Losses are non-negative and zero iff every score sits on target.
        #[test]
        fn non_negativity(
            pos in proptest::collection::vec(-3.0..3.0f64, 1..10),
            neg in proptest::collection::vec(-3.0..3.0f64, 0..10),
            gen in proptest::collection::vec(-3.0..3.0f64, 1..10),
        ) {
            let s = TargetScheme::default();
            let batch = ScoreBatch::new(pos, neg, gen);
            let d = aa_discriminator_loss(&batch, &s).unwrap();
            let g = aa_generator_encoder_loss(&batch, &s).unwrap();
            prop_assert!(d >= 0.0 && g >= 0.0);

            let on_target = batch.pos.iter().all(|&v| v == s.a)
                && batch.neg.iter().all(|&v| v == s.anomaly_target())
                && batch.gen.iter().all(|&v| v == s.b);
            prop_assert_eq!(d == 0.0, on_target);
        }

        /// Shuffling any population leaves every loss unchanged within 1e-12.
        #[test]
        fn permutation_invariance(
            pos in proptest::collection::vec(-3.0..3.0f64, 1..40),
            neg in proptest::collection::vec(-3.0..3.0f64, 0..40),
            gen in proptest::collection::vec(-3.0..3.0f64, 1..40),
            seed in any::<u64>(),
        ) {
            use rand::prelude::*;
            let s = TargetScheme::default();
            let batch = ScoreBatch::new(pos, neg, gen);
            let base_d = aa_discriminator_loss(&batch, &s).unwrap();
            let base_g = aa_generator_encoder_loss(&batch, &s).unwrap();

            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = batch.clone();
            shuffled.pos.shuffle(&mut rng);
            shuffled.neg.shuffle(&mut rng);
            shuffled.gen.shuffle(&mut rng);
            prop_assert!((aa_discriminator_loss(&shuffled, &s).unwrap() - base_d).abs() <= 1e-12);
            prop_assert!((aa_generator_encoder_loss(&shuffled, &s).unwrap() - base_g).abs() <= 1e-12);
        }

        /// Each loss is a per-score quadratic minimized exactly at the target.
        #[test]
        fn per_score_minimizer_is_target(offset in -2.0..2.0f64) {
            let s = TargetScheme::default();
            let at_target = ScoreBatch::new(vec![s.a], vec![s.anomaly_target()], vec![s.b]);
            let base = aa_discriminator_loss(&at_target, &s).unwrap();
            prop_assert_eq!(base, 0.0);
            if offset != 0.0 {
                let moved = ScoreBatch::new(
                    vec![s.a + offset],
                    vec![s.anomaly_target() + offset],
                    vec![s.b + offset],
                );
                prop_assert!(aa_discriminator_loss(&moved, &s).unwrap() > 0.0);
            }
        }
    }
}
