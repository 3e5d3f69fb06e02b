//! Alternating mini-batch optimization of (D, D') and (G, E) with Adam.
//!
//! Per mini-batch, both objectives are evaluated on the same forward pass
//! at the *pre-update* weights: the discriminator objective J_DD'
//! accumulates gradients into D and D' only, the generator/encoder
//! objective J_GE flows through the (frozen) discriminators into G and E,
//! and only then are the two Adam steps applied, (D, D') first. That
//! matches the single-update-per-player listing order and is recorded in
//! checkpoint manifests as `grad_evaluation = "pre_update"`.
//!
//! The loop is single-threaded over model state and fully deterministic
//! for a given seed.

use crate::error::{Error, Result};
use crate::networks::{ArchitecturePreset, ModelBundle};
use crate::nn::{AdamParams, ParamMap, Tensor};
use crate::objectives::{
    aa_discriminator_loss_grad, aa_generator_encoder_loss_grad, bilsgan_discriminator_loss_grad,
    bilsgan_generator_encoder_loss_grad, recon_discriminator_loss_grad,
    recon_generator_encoder_loss_grad, PairScoreBatch, ScoreBatch, TargetScheme,
};
use crate::scenario::{round_half_away, ScenarioData};
use crate::scoring;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Training hyperparameters and bookkeeping knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate for the generator and encoder.
    pub lr_ge: f64,
    /// Learning rate for both discriminators.
    pub lr_dd: f64,
    pub adam_betas: (f64, f64),
    pub scheme: TargetScheme,
    pub seed: u64,
    /// Save a checkpoint every this many epochs (0 = only on demand).
    pub checkpoint_every: usize,
    pub use_pair_discriminator: bool,
    /// Stop after this many epochs without validation-AUROC improvement;
    /// `None` disables early stopping. Only active when the scenario has a
    /// labeled validation split.
    pub early_stop_patience: Option<usize>,
    /// Restore the weights of the best validation epoch after training.
    pub restore_best: bool,
    /// Where `ckpt-<epoch>/` directories go, if anywhere.
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            lr_ge: 1e-4,
            lr_dd: 2.5e-5,
            adam_betas: (0.5, 0.999),
            scheme: TargetScheme::default(),
            seed: 0,
            checkpoint_every: 0,
            use_pair_discriminator: true,
            early_stop_patience: Some(10),
            restore_best: true,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.lr_ge > 0.0 && self.lr_dd > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One logged optimization step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Discriminator-side objective J_DD'.
    pub loss_dd: f64,
    /// Generator/encoder objective J_GE.
    pub loss_ge: f64,
}

/// Per-epoch validation metrics (present when a validation split exists).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_auroc_recon: Option<f64>,
    pub val_auroc_latent: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights the returned model carries (differs from the
    /// last epoch when early stopping restored a better one).
    pub selected_epoch: Option<usize>,
}

/// Which objective family drives the updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ObjectiveKind {
    /// Anomaly-aware targets (a, (a+b)/2, b | c), anomaly terms included.
    AnomalyAware,
    /// Unsupervised baseline: targets (1, 0 | 0.5), anomaly set ignored.
    BiLsGan,
}

/// Size of the collected-anomaly slice of a mini-batch:
/// round(batch * m / n), capped at the batch size, zero when m = 0.
pub fn anomaly_batch_size(batch_size: usize, n_normal: usize, n_anomaly: usize) -> usize {
    if n_anomaly == 0 || n_normal == 0 {
        return 0;
    }
    round_half_away(batch_size as f64 * n_anomaly as f64 / n_normal as f64).min(batch_size)
}

/// Draw one mini-batch: normals uniform without replacement, collected
/// anomalies uniform with replacement (sized proportionally to the pool
/// ratio), and latent vectors from the standard-normal prior.
pub fn make_minibatch(
    data: &ScenarioData,
    batch_size: usize,
    latent_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<f32>>, Vec<Vec<f32>>, Vec<Vec<f32>>)> {
    let n = data.train_normal.len();
    if batch_size > n {
        return Err(Error::invalid(format!(
            "batch_size {batch_size} exceeds |X+| = {n}"
        )));
    }
    let idx = rand::seq::index::sample(rng, n, batch_size);
    let x_plus: Vec<Vec<f32>> = idx.iter().map(|i| data.train_normal[i].clone()).collect();
    let m = anomaly_batch_size(batch_size, n, data.train_anomaly.len());
    let x_minus: Vec<Vec<f32>> = (0..m)
        .map(|_| data.train_anomaly[rng.random_range(0..data.train_anomaly.len())].clone())
        .collect();
    let z: Vec<Vec<f32>> = (0..batch_size)
        .map(|_| {
            (0..latent_dim)
                .map(|_| {
                    let v: f64 = rng.sample(StandardNormal);
                    v as f32
                })
                .collect()
        })
        .collect();
    Ok((x_plus, x_minus, z))
}

/// Train with the anomaly-aware objectives (the default mode).
pub fn train(
    model: ModelBundle,
    data: &ScenarioData,
    config: &TrainConfig,
) -> Result<(ModelBundle, TrainHistory)> {
    train_impl(model, data, config, ObjectiveKind::AnomalyAware)
}

/// Train the unsupervised baseline: identical loop, least-squares targets
/// (1, 0 | 0.5), collected anomalies ignored entirely.
pub fn train_bilsgan(
    model: ModelBundle,
    data: &ScenarioData,
    config: &TrainConfig,
) -> Result<(ModelBundle, TrainHistory)> {
    train_impl(model, data, config, ObjectiveKind::BiLsGan)
}

fn train_impl(
    mut model: ModelBundle,
    data: &ScenarioData,
    config: &TrainConfig,
    kind: ObjectiveKind,
) -> Result<(ModelBundle, TrainHistory)> {
    config.validate()?;
    if data.train_normal.is_empty() {
        return Err(Error::invalid("training requires a non-empty X+"));
    }
    let n = data.train_normal.len();
    let batch = config.batch_size.min(n);
    let latent = model.latent_dim();
    let input_shape = model.preset.input_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let track_val =
        !data.val.is_empty() && data.val.labels.contains(&0) && data.val.labels.contains(&1);

    let mut history = TrainHistory::default();
    let mut step: u64 = 0;
    let mut adam_t: u64 = 0;
    let mut best: Option<(f64, usize, Vec<(&'static str, ParamMap)>)> = None;
    let mut stale_epochs = 0usize;
    let mut last_checkpoint: Option<PathBuf> = None;

    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        for chunk in order.chunks(batch) {
            let x_plus_rows: Vec<&Vec<f32>> =
                chunk.iter().map(|&i| &data.train_normal[i]).collect();
            let x_plus = rows_to_tensor(&x_plus_rows, &input_shape);

            let m = match kind {
                ObjectiveKind::AnomalyAware => {
                    anomaly_batch_size(chunk.len(), n, data.train_anomaly.len())
                }
                ObjectiveKind::BiLsGan => 0,
            };
            let x_minus = if m > 0 {
                let rows: Vec<&Vec<f32>> = (0..m)
                    .map(|_| &data.train_anomaly[rng.random_range(0..data.train_anomaly.len())])
                    .collect();
                Some(rows_to_tensor(&rows, &input_shape))
            } else {
                None
            };

            let mut z = Tensor::zeros(&[chunk.len(), latent]);
            for v in &mut z.data {
                let s: f64 = rng.sample(StandardNormal);
                *v = s as f32;
            }

            adam_t += 1;
            let (loss_dd, loss_ge) = train_step(
                &mut model,
                &x_plus,
                x_minus.as_ref(),
                &z,
                config,
                kind,
                adam_t,
            )?;
            step += 1;

            if !(loss_dd.is_finite() && loss_ge.is_finite()) {
                let hint = last_checkpoint
                    .as_ref()
                    .map(|p| format!("; last good checkpoint: {}", p.display()))
                    .unwrap_or_default();
                return Err(Error::NonFiniteLoss {
                    step,
                    message: format!("J_DD'={loss_dd}, J_GE={loss_ge}{hint}"),
                });
            }
            history.steps.push(StepRecord {
                step,
                loss_dd,
                loss_ge,
            });
        }

        let mut epoch_rec = EpochRecord {
            epoch,
            val_auroc_recon: None,
            val_auroc_latent: None,
        };
        if track_val {
            let (_, auc_recon, auc_latent) =
                scoring::select_criterion(&model, &data.val.samples, &data.val.labels)?;
            epoch_rec.val_auroc_recon = Some(auc_recon);
            epoch_rec.val_auroc_latent = Some(auc_latent);
            let score = auc_recon.max(auc_latent);
            match &best {
                Some((b, _, _)) if score > *b + 1e-12 => {
                    best = Some((score, epoch, model.param_maps()));
                    stale_epochs = 0;
                }
                // A tie keeps the plateau end: adopt the later epoch's
                // weights but count it against the patience budget.
                Some((b, _, _)) if score >= *b - 1e-12 => {
                    best = Some((*b, epoch, model.param_maps()));
                    stale_epochs += 1;
                }
                Some(_) => stale_epochs += 1,
                None => best = Some((score, epoch, model.param_maps())),
            }
        }
        history.epochs.push(epoch_rec);

        if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                let ckpt = dir.join(format!("ckpt-{epoch}"));
                save_checkpoint(&model, &history, &ckpt)?;
                last_checkpoint = Some(ckpt);
            }
        }

        if let (true, Some(patience)) = (track_val, config.early_stop_patience) {
            if stale_epochs >= patience {
                break 'epochs;
            }
        }
    }

    if config.restore_best {
        if let Some((_, best_epoch, maps)) = best {
            let named: std::collections::BTreeMap<String, ParamMap> =
                maps.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            model.load_param_maps(&named)?;
            history.selected_epoch = Some(best_epoch);
        }
    } else if track_val {
        history.selected_epoch = history.epochs.last().map(|e| e.epoch);
    }

    if let Some(dir) = &config.checkpoint_dir {
        let final_dir = dir.join("ckpt-final");
        save_checkpoint(&model, &history, &final_dir)?;
    }

    Ok((model, history))
}

fn rows_to_tensor(rows: &[&Vec<f32>], dims: &[usize]) -> Tensor {
    let per: usize = dims.iter().product();
    let mut data = Vec::with_capacity(rows.len() * per);
    for r in rows {
        data.extend_from_slice(r);
    }
    let mut shape = vec![rows.len()];
    shape.extend_from_slice(dims);
    Tensor::from_vec(&shape, data)
}

fn to_f64(scores: &Tensor) -> Vec<f64> {
    scores.data.iter().map(|&v| v as f64).collect()
}

fn seed_tensor(shape: &[usize], grads: &[f64]) -> Tensor {
    Tensor::from_vec(shape, grads.iter().map(|&g| g as f32).collect())
}

/// One Algorithm-1 step on a fixed mini-batch. Returns (J_DD', J_GE),
/// both evaluated before either player moves.
fn train_step(
    model: &mut ModelBundle,
    x_plus: &Tensor,
    x_minus: Option<&Tensor>,
    z: &Tensor,
    config: &TrainConfig,
    kind: ObjectiveKind,
    adam_t: u64,
) -> Result<(f64, f64)> {
    model.zero_grad();
    let scheme = &config.scheme;

    // Shared forward pass.
    let (z_pos, enc_pos_cache) = model.encoder.forward_train(x_plus);
    let neg = x_minus.map(|xm| {
        let (z_neg, enc_neg_cache) = model.encoder.forward_train(xm);
        (xm, z_neg, enc_neg_cache)
    });
    let (x_gen, gen_cache) = model.generator.forward_train(z);

    let (s_pos, d_pos_cache) = model.joint.forward_train(x_plus, &z_pos);
    let s_neg = neg
        .as_ref()
        .map(|(xm, z_neg, _)| model.joint.forward_train(xm, z_neg));
    let (s_gen, d_gen_cache) = model.joint.forward_train(&x_gen, z);

    let pair = if config.use_pair_discriminator {
        let (x_hat, gen_rec_cache) = model.generator.forward_train(&z_pos);
        let (r_pos, p_pos_cache) = model.pair.forward_train(x_plus, x_plus);
        let r_neg = neg
            .as_ref()
            .map(|(xm, _, _)| model.pair.forward_train(xm, xm));
        let (r_rec, p_rec_cache) = model.pair.forward_train(x_plus, &x_hat);
        Some((
            x_hat,
            gen_rec_cache,
            r_pos,
            p_pos_cache,
            r_neg,
            r_rec,
            p_rec_cache,
        ))
    } else {
        None
    };

    // Objective values and per-score gradients at pre-update weights.
    let joint_batch = ScoreBatch::new(
        to_f64(&s_pos),
        s_neg.as_ref().map(|(s, _)| to_f64(s)).unwrap_or_default(),
        to_f64(&s_gen),
    );
    let (mut loss_dd, dd_grads, mut loss_ge, ge_grads) = match kind {
        ObjectiveKind::AnomalyAware => {
            let (ld, gd) = aa_discriminator_loss_grad(&joint_batch, scheme)?;
            let (lg, gg) = aa_generator_encoder_loss_grad(&joint_batch, scheme)?;
            (ld, gd, lg, gg)
        }
        ObjectiveKind::BiLsGan => {
            let (ld, d_pos, d_gen) =
                bilsgan_discriminator_loss_grad(&joint_batch.pos, &joint_batch.gen)?;
            let (lg, g_pos, g_gen) =
                bilsgan_generator_encoder_loss_grad(&joint_batch.pos, &joint_batch.gen)?;
            (
                ld,
                crate::objectives::ScoreBatchGrad {
                    pos: d_pos,
                    neg: Vec::new(),
                    gen: d_gen,
                },
                lg,
                crate::objectives::ScoreBatchGrad {
                    pos: g_pos,
                    neg: Vec::new(),
                    gen: g_gen,
                },
            )
        }
    };

    let pair_losses = if let Some((_, _, r_pos, _, r_neg, r_rec, _)) = &pair {
        let pair_batch = PairScoreBatch::new(
            to_f64(r_pos),
            r_neg.as_ref().map(|(s, _)| to_f64(s)).unwrap_or_default(),
            to_f64(r_rec),
        );
        // In the unsupervised mode the pair targets are the (1, 0 | 0.5)
        // scheme with no anomaly term.
        let pair_scheme = match kind {
            ObjectiveKind::AnomalyAware => *scheme,
            ObjectiveKind::BiLsGan => TargetScheme {
                a: 1.0,
                b: 0.0,
                c: 0.5,
            },
        };
        let (ld, gd) = recon_discriminator_loss_grad(&pair_batch, &pair_scheme)?;
        let (lg, gg) = recon_generator_encoder_loss_grad(&pair_batch, &pair_scheme)?;
        loss_dd += ld;
        loss_ge += lg;
        Some((gd, gg))
    } else {
        None
    };

    // Discriminator pass: parameter gradients into D and D' only.
    {
        let seed = seed_tensor(&s_pos.shape, &dd_grads.pos);
        model.joint.backward(&d_pos_cache, &seed, true);
        if let (Some((s, cache)), false) = (&s_neg, dd_grads.neg.is_empty()) {
            let seed = seed_tensor(&s.shape, &dd_grads.neg);
            model.joint.backward(cache, &seed, true);
        }
        let seed = seed_tensor(&s_gen.shape, &dd_grads.gen);
        model.joint.backward(&d_gen_cache, &seed, true);

        if let (Some((_, _, r_pos, p_pos_cache, r_neg, r_rec, p_rec_cache)), Some((gd, _))) =
            (&pair, &pair_losses)
        {
            let seed = seed_tensor(&r_pos.shape, &gd.real_pos);
            model.pair.backward(p_pos_cache, &seed, true);
            if let (Some((s, cache)), false) = (r_neg, gd.real_neg.is_empty()) {
                let seed = seed_tensor(&s.shape, &gd.real_neg);
                model.pair.backward(cache, &seed, true);
            }
            let seed = seed_tensor(&r_rec.shape, &gd.recon);
            model.pair.backward(p_rec_cache, &seed, true);
        }
    }

    // Generator/encoder pass: flow through frozen discriminators.
    {
        let seed = seed_tensor(&s_pos.shape, &ge_grads.pos);
        let (_, dz_pos) = model.joint.backward(&d_pos_cache, &seed, false);
        model.encoder.backward(&enc_pos_cache, &dz_pos, true);

        if let Some((s, cache)) = &s_neg {
            if !ge_grads.neg.is_empty() {
                let seed = seed_tensor(&s.shape, &ge_grads.neg);
                let (_, dz_neg) = model.joint.backward(cache, &seed, false);
                let (_, _, enc_neg_cache) = neg.as_ref().expect("neg scores imply neg batch");
                model.encoder.backward(enc_neg_cache, &dz_neg, true);
            }
        }

        let seed = seed_tensor(&s_gen.shape, &ge_grads.gen);
        let (dx_gen, _) = model.joint.backward(&d_gen_cache, &seed, false);
        model.generator.backward(&gen_cache, &dx_gen, true);

        if let (Some((_, gen_rec_cache, _, _, _, r_rec, p_rec_cache)), Some((_, gg))) =
            (&pair, &pair_losses)
        {
            let seed = seed_tensor(&r_rec.shape, &gg.recon);
            let (_, dx_hat) = model.pair.backward(p_rec_cache, &seed, false);
            let dz_rec = model.generator.backward(gen_rec_cache, &dx_hat, true);
            model.encoder.backward(&enc_pos_cache, &dz_rec, true);
        }
    }

    // Updates: discriminators first, then generator/encoder, both from
    // gradients taken at the pre-update weights.
    let (b1, b2) = config.adam_betas;
    let dd_params = AdamParams {
        lr: config.lr_dd as f32,
        beta1: b1 as f32,
        beta2: b2 as f32,
        eps: 1e-8,
        t: adam_t,
    };
    model.joint.adam_step(&dd_params);
    model.pair.adam_step(&dd_params);

    let ge_params = AdamParams {
        lr: config.lr_ge as f32,
        ..dd_params
    };
    model.encoder.adam_step(&ge_params);
    model.generator.adam_step(&ge_params);

    Ok((loss_dd, loss_ge))
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const ARCHIVE_MAGIC: &[u8; 4] = b"AABW";
const ARCHIVE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Checkpoint manifest: everything needed to rebuild the bundle and audit
/// how it was trained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub preset: ArchitecturePreset,
    pub latent_dim: usize,
    pub scheme: TargetScheme,
    pub step: u64,
    /// Both players' gradients are evaluated before either update.
    pub grad_evaluation: String,
}

fn archive_path(dir: &Path, net: &str) -> PathBuf {
    dir.join(format!("{net}.wts"))
}

fn write_archive(path: &Path, map: &ParamMap) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(ARCHIVE_MAGIC);
    buf.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(map.len() as u32).to_le_bytes());
    for (name, (shape, data)) in map {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_archive(path: &Path) -> Result<ParamMap> {
    let corrupt = |message: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        message,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(corrupt(format!(
                "truncated archive: wanted {} bytes at offset {}, have {}",
                n,
                *off,
                bytes.len()
            )));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    let u32_at = |off: &mut usize| -> Result<u32> {
        let s = take(off, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut off, 4)? != ARCHIVE_MAGIC {
        return Err(corrupt("bad magic; not a weight archive".into()));
    }
    let version = u32_at(&mut off)?;
    if version != ARCHIVE_VERSION {
        return Err(corrupt(format!("unsupported archive version {version}")));
    }
    let count = u32_at(&mut off)? as usize;
    let mut map = ParamMap::new();
    for _ in 0..count {
        let name_len = u32_at(&mut off)? as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|_| corrupt("tensor name is not UTF-8".into()))?;
        let ndim = u32_at(&mut off)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32_at(&mut off)? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut off, numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        map.insert(name, (shape, data));
    }
    if off != bytes.len() {
        return Err(corrupt(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - off
        )));
    }
    Ok(map)
}

/// Write a checkpoint directory: one weight archive per network, the
/// manifest, and the training history.
pub fn save_checkpoint(model: &ModelBundle, history: &TrainHistory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, map) in model.param_maps() {
        write_archive(&archive_path(dir, name), &map)?;
    }
    let manifest = CheckpointManifest {
        format_version: ARCHIVE_VERSION,
        preset: model.preset.clone(),
        latent_dim: model.latent_dim(),
        scheme: TargetScheme::default(),
        step: history.steps.last().map(|s| s.step).unwrap_or(0),
        grad_evaluation: "pre_update".into(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut f = std::fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    f.write_all(
        serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;

    let hist_path = dir.join("history.json");
    let mut f = std::fs::File::create(&hist_path).map_err(|e| Error::io(&hist_path, e))?;
    f.write_all(
        serde_json::to_string(history)
            .expect("history serializes")
            .as_bytes(),
    )
    .map_err(|e| Error::io(&hist_path, e))
}

/// Save with an explicit scheme recorded in the manifest.
pub fn save_checkpoint_with_scheme(
    model: &ModelBundle,
    history: &TrainHistory,
    scheme: &TargetScheme,
    dir: &Path,
) -> Result<()> {
    save_checkpoint(model, history, dir)?;
    let manifest = CheckpointManifest {
        format_version: ARCHIVE_VERSION,
        preset: model.preset.clone(),
        latent_dim: model.latent_dim(),
        scheme: *scheme,
        step: history.steps.last().map(|s| s.step).unwrap_or(0),
        grad_evaluation: "pre_update".into(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&manifest_path, e))
}

/// Load a checkpoint directory back into a model and its history.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelBundle, TrainHistory, CheckpointManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&manifest_text).map_err(|e| Error::CorruptCheckpoint {
            path: manifest_path.clone(),
            message: format!("manifest does not parse: {e}"),
        })?;
    if manifest.format_version != ARCHIVE_VERSION {
        return Err(Error::CorruptCheckpoint {
            path: manifest_path,
            message: format!("unsupported manifest version {}", manifest.format_version),
        });
    }

    let mut model = ModelBundle::new(manifest.preset.clone(), 0)?;
    let mut maps = std::collections::BTreeMap::new();
    for (name, _) in model.param_maps() {
        maps.insert(name.to_string(), read_archive(&archive_path(dir, name))?);
    }
    model.load_param_maps(&maps)?;

    let hist_path = dir.join("history.json");
    let history: TrainHistory = match std::fs::read_to_string(&hist_path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint {
            path: hist_path,
            message: format!("history does not parse: {e}"),
        })?,
        Err(_) => TrainHistory::default(),
    };
    Ok((model, history, manifest))
}
