//! Reweighted pairwise ranking: per-user sampling budgets, triplet sampling,
//! the four loss variants, and the mini-batched optimization loop.
//!
//! The objective is `-sum_u d_u^alpha E[ d_i^beta ln sigmoid(s_ui - s_uj) ]`
//! with `i` uniform over the user's train items and `j` uniform over the
//! rest. The user factor `d_u^alpha` is carried entirely by how many triplets
//! each user contributes per epoch (the budget `S_u`); the item factor is a
//! per-triplet weight. Variants:
//!
//! * `Vanilla`   — (alpha, beta) = (0, 0): every user gets the same budget.
//! * `Ui`        — both exponents free.
//! * `OnlyItem`  — (alpha, beta) = (0, -1/2): the inverse-propensity
//!   heuristic on items only.
//! * `OnlyUser`  — budgets proportional to d_u (alpha = 1, the plain
//!   per-interaction epoch) with an explicit `1/d_u` weight, the
//!   user-normalized sum.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;
use crate::recmodels::{
    l2_penalty_full, pair_terms, propagate_mean, save_checkpoint, EmbeddingModel, ModelKind,
    Optimizer, OptimizerKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Ui,
    OnlyItem,
    OnlyUser,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Ui => "ui",
            Variant::OnlyItem => "only_item",
            Variant::OnlyUser => "only_user",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Loss-variant configuration: exponents, epoch budget, and run seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReweightConfig {
    pub variant: Variant,
    /// User-activity exponent in [0, 1]; drives the sampling budgets.
    pub alpha: f64,
    /// Item-popularity exponent, at most 0; drives the per-triplet weight.
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl ReweightConfig {
    pub fn vanilla(epochs: usize, seed: u64) -> Self {
        Self {
            variant: Variant::Vanilla,
            alpha: 0.0,
            beta: 0.0,
            epochs,
            seed,
        }
    }

    pub fn ui(alpha: f64, beta: f64, epochs: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            variant: Variant::Ui,
            alpha,
            beta,
            epochs,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn only_item(epochs: usize, seed: u64) -> Self {
        Self {
            variant: Variant::OnlyItem,
            alpha: 0.0,
            beta: -0.5,
            epochs,
            seed,
        }
    }

    /// Budgets follow raw activity (alpha = 1) and each triplet carries the
    /// `1/d_u` normalization, so the user factors cancel in expectation.
    pub fn only_user(epochs: usize, seed: u64) -> Self {
        Self {
            variant: Variant::OnlyUser,
            alpha: 1.0,
            beta: 0.0,
            epochs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha)) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be <= 0, got {}",
                self.beta
            )));
        }
        let bad = match self.variant {
            Variant::Vanilla => self.alpha != 0.0 || self.beta != 0.0,
            Variant::OnlyItem => self.alpha != 0.0 || self.beta != -0.5,
            Variant::OnlyUser => self.alpha != 1.0 || self.beta != 0.0,
            Variant::Ui => false,
        };
        if bad {
            return Err(Error::InvalidArgument(format!(
                "variant {} pins its exponents (got alpha={}, beta={})",
                self.variant, self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Per-user triplet budgets for one epoch.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    per_user: Vec<u32>,
    pub total: u64,
}

impl SamplingPlan {
    pub fn from_budgets(per_user: Vec<u32>) -> Self {
        let total = per_user.iter().map(|&s| s as u64).sum();
        Self { per_user, total }
    }

    pub fn per_user(&self) -> &[u32] {
        &self.per_user
    }

    pub fn budget(&self, u: u32) -> u32 {
        self.per_user[u as usize]
    }
}

/// Budgets `S_u = round(d_u^alpha / sum d^alpha * sum d)`, rounding half away
/// from zero. Zero-degree users contribute no weight (`0^alpha` is taken as 0
/// for every alpha) and get `S_u = 0`.
pub fn samples_per_user(ds: &InteractionDataset, alpha: f64) -> Result<SamplingPlan> {
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let degrees = ds.user_degrees();
    let total_deg: f64 = degrees.iter().map(|&d| d as f64).sum();
    if total_deg == 0.0 {
        return Err(Error::InvalidArgument(
            "every user has zero train interactions".into(),
        ));
    }
    // exact fast paths at the endpoints keep alpha=1 free of powf rounding
    let weight = |d: u32| -> f64 {
        if d == 0 {
            0.0
        } else if alpha == 0.0 {
            1.0
        } else if alpha == 1.0 {
            d as f64
        } else {
            (d as f64).powf(alpha)
        }
    };
    let wsum: f64 = degrees.iter().map(|&d| weight(d)).sum();
    let scale = total_deg / wsum;
    let mut per_user = Vec::with_capacity(degrees.len());
    let mut starved = 0usize;
    for &d in degrees {
        let s = (weight(d) * scale).round();
        debug_assert!(s >= 0.0);
        if d > 0 && s == 0.0 {
            starved += 1;
        }
        per_user.push(s as u32);
    }
    if starved > 0 {
        log::debug!("{starved} active users rounded down to a zero triplet budget");
    }
    Ok(SamplingPlan::from_budgets(per_user))
}

/// One ranked pair: `i` is a train item of `u`, `j` is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub u: u32,
    pub i: u32,
    pub j: u32,
}

/// Draw one epoch of triplets: exactly `S_u` per user, positives uniform
/// with replacement over the user's train items, negatives uniform over the
/// complement by rejection. Users who interacted with every item cannot be
/// sampled and are skipped.
pub fn sample_epoch(
    ds: &InteractionDataset,
    plan: &SamplingPlan,
    rng: &mut ChaCha8Rng,
) -> Vec<Triplet> {
    let m = ds.num_items() as u32;
    let mut out = Vec::with_capacity(plan.total as usize);
    let mut saturated = 0usize;
    for u in 0..ds.num_users() as u32 {
        let budget = plan.budget(u);
        if budget == 0 {
            continue;
        }
        let neigh = ds.neighbors(u);
        if neigh.is_empty() {
            continue;
        }
        if neigh.len() as u32 == m {
            saturated += 1;
            continue;
        }
        for _ in 0..budget {
            let i = neigh[rng.random_range(0..neigh.len())];
            let j = loop {
                let cand = rng.random_range(0..m);
                if !ds.is_train_item(u, cand) {
                    break cand;
                }
            };
            out.push(Triplet { u, i, j });
        }
    }
    if saturated > 0 {
        log::warn!("{saturated} users interacted with every item and cannot contribute triplets");
    }
    out
}

/// The per-triplet weight `w` of the configured variant.
pub fn triplet_weight(cfg: &ReweightConfig, ds: &InteractionDataset, t: Triplet) -> f64 {
    match cfg.variant {
        Variant::Vanilla => 1.0,
        Variant::Ui | Variant::OnlyItem => (ds.item_degree(t.i) as f64).powf(cfg.beta),
        Variant::OnlyUser => 1.0 / ds.user_degree(t.u) as f64,
    }
}

/// `-w * ln sigmoid(s_ui - s_uj)` under the variant's weight.
pub fn triplet_loss(
    cfg: &ReweightConfig,
    ds: &InteractionDataset,
    snap: &crate::recmodels::ScoreSnapshot,
    t: Triplet,
) -> f64 {
    snap.pair_terms(triplet_weight(cfg, ds, t), t.u, t.i, t.j).loss
}

#[derive(Debug, Clone, Copy)]
pub struct EpochLoss {
    /// Mean weighted ranking term over the epoch's triplets.
    pub mean_loss: f64,
    /// L2 penalty over all embeddings (reported separately).
    pub reg_loss: f64,
}

/// Monte-Carlo estimate of the epoch objective on a frozen model: sample one
/// epoch of triplets and average the weighted terms.
pub fn epoch_loss_estimate(
    cfg: &ReweightConfig,
    ds: &InteractionDataset,
    model: &EmbeddingModel,
    seed: u64,
) -> Result<EpochLoss> {
    cfg.validate()?;
    let plan = samples_per_user(ds, cfg.alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets = sample_epoch(ds, &plan, &mut rng);
    if triplets.is_empty() {
        return Err(Error::InvalidArgument(
            "no sampleable triplets (no active user has an unseen item)".into(),
        ));
    }
    let snap = model.snapshot(ds);
    let sum: f64 = triplets.iter().map(|&t| triplet_loss(cfg, ds, &snap, t)).sum();
    Ok(EpochLoss {
        mean_loss: sum / triplets.len() as f64,
        reg_loss: l2_penalty_full(model),
    })
}

/// Knobs of the optimization loop (the loss itself lives in
/// [`ReweightConfig`]).
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Save a checkpoint every this many epochs (0 = never).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 2048,
            optimizer: OptimizerKind::Adam,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub reg_loss: f64,
    pub wallclock_s: f64,
}

/// Run `cfg.epochs` epochs of mini-batched optimization, mutating `model` in
/// place. Deterministic for a fixed seed. Non-finite losses abort.
///
/// Graph-propagated representations are refreshed once per epoch; batches
/// within an epoch score against that snapshot, while gradients flow through
/// the (constant) propagation operator back to the live parameters.
pub fn train(
    cfg: &ReweightConfig,
    ds: &InteractionDataset,
    model: &mut EmbeddingModel,
    opts: &TrainOptions,
) -> Result<Vec<EpochStat>> {
    cfg.validate()?;
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let plan = samples_per_user(ds, cfg.alpha)?;
    let n = model.num_users();
    let m = model.num_items();
    if n != ds.num_users() || m != ds.num_items() {
        return Err(Error::InvalidArgument(format!(
            "model is shaped {n}x{m} but the dataset has {}x{}",
            ds.num_users(),
            ds.num_items()
        )));
    }
    let mut opt = Optimizer::new(opts.optimizer, opts.lr, n, m, model.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grad_user: Array2<f64> = Array2::zeros((n, model.dim));
    let mut grad_item: Array2<f64> = Array2::zeros((m, model.dim));
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let abort = |reason: String| Error::TrainingAbort { epoch, reason };

        // propagated representations are held fixed within the epoch
        let cached_repr = match model.kind {
            ModelKind::Lgn => Some(model.propagated(ds)),
            ModelKind::Mf => None,
        };

        let mut triplets = sample_epoch(ds, &plan, &mut rng);
        if triplets.is_empty() {
            return Err(Error::InvalidArgument(
                "no sampleable triplets (no active user has an unseen item)".into(),
            ));
        }
        triplets.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut touched_users: HashSet<u32> = HashSet::new();
        let mut touched_items: HashSet<u32> = HashSet::new();
        for batch in triplets.chunks(opts.batch_size) {
            grad_user.fill(0.0);
            grad_item.fill(0.0);
            touched_users.clear();
            touched_items.clear();
            for &t in batch {
                let w = triplet_weight(cfg, ds, t);
                let (terms, user_repr, item_repr) = match &cached_repr {
                    Some((ur, ir)) => (
                        pair_terms(&ur.view(), &ir.view(), false, w, t.u, t.i, t.j),
                        ur,
                        ir,
                    ),
                    None => (
                        pair_terms(
                            &model.user_emb().view(),
                            &model.item_emb().view(),
                            model.scores_through_sigmoid(),
                            w,
                            t.u,
                            t.i,
                            t.j,
                        ),
                        model.user_emb(),
                        model.item_emb(),
                    ),
                };
                if !terms.loss.is_finite() {
                    return Err(abort(format!(
                        "non-finite loss on triplet ({}, {}, {}) — try a lower learning rate",
                        t.u, t.i, t.j
                    )));
                }
                loss_sum += terms.loss;
                grad_user
                    .row_mut(t.u as usize)
                    .scaled_add(terms.coeff_i, &item_repr.row(t.i as usize));
                grad_user
                    .row_mut(t.u as usize)
                    .scaled_add(-terms.coeff_j, &item_repr.row(t.j as usize));
                grad_item
                    .row_mut(t.i as usize)
                    .scaled_add(terms.coeff_i, &user_repr.row(t.u as usize));
                grad_item
                    .row_mut(t.j as usize)
                    .scaled_add(-terms.coeff_j, &user_repr.row(t.u as usize));
                touched_users.insert(t.u);
                touched_items.insert(t.i);
                touched_items.insert(t.j);
            }
            // pull gradients back through the propagation before scaling
            if cached_repr.is_some() {
                let (pu, pi) = propagate_mean(&grad_user, &grad_item, ds, model.layers);
                grad_user = pu;
                grad_item = pi;
            }
            let inv_b = 1.0 / batch.len() as f64;
            grad_user.mapv_inplace(|g| g * inv_b);
            grad_item.mapv_inplace(|g| g * inv_b);
            // mini-batch L2 on the layer-0 rows touched by this batch
            let decay = model.reg_lambda * inv_b;
            if decay > 0.0 {
                for &u in &touched_users {
                    let row = model.user_emb().row(u as usize).to_owned();
                    grad_user.row_mut(u as usize).scaled_add(decay, &row);
                }
                for &i in &touched_items {
                    let row = model.item_emb().row(i as usize).to_owned();
                    grad_item.row_mut(i as usize).scaled_add(decay, &row);
                }
            }
            let (ue, ie) = model.emb_mut_pair();
            opt.step(ue, ie, &grad_user, &grad_item);
        }

        let mean_loss = loss_sum / triplets.len() as f64;
        if !mean_loss.is_finite() {
            return Err(abort("non-finite epoch loss".into()));
        }
        trace.push(EpochStat {
            epoch,
            mean_loss,
            reg_loss: l2_penalty_full(model),
            wallclock_s: started.elapsed().as_secs_f64(),
        });

        if opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0 {
            if let Some(dir) = &opts.checkpoint_dir {
                let path = dir.join(format!("checkpoint_{:05}.bin", epoch + 1));
                save_checkpoint(model, cfg.seed, epoch + 1, &path)?;
            }
        }
    }
    Ok(trace)
}
