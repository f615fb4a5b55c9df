//! Embedding-based scorers and their analytic gradients.
//!
//! Two model kinds share one parameterization (a user matrix and an item
//! matrix of `dim`-wide rows):
//!
//! * `Mf` — score is `sigmoid(u · v)`. The pairwise ranking loss consumes the
//!   post-sigmoid score difference; a `presigmoid` flag switches to raw dot
//!   products for ablation.
//! * `Lgn` — light graph convolution: embeddings are propagated over the
//!   train bipartite graph with symmetric `1/sqrt(d_u d_i)` edge weights for
//!   `layers` rounds (no nonlinearity, no feature transform), the final
//!   representation is the mean of all layer outputs including layer 0, and
//!   the score is a raw inner product.
//!
//! Propagation is a fixed self-adjoint linear operator (it depends only on
//! the graph), so pulling a gradient from final representations back to the
//! layer-0 parameters is one more application of the same operator.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(x) = -softplus(-x)`, stable for large |x|.
pub fn ln_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mf,
    Lgn,
}

/// User and item embedding matrices plus the scoring configuration.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub kind: ModelKind,
    pub dim: usize,
    /// Propagation depth; only read when `kind == Lgn`.
    pub layers: usize,
    /// L2 coefficient applied to the layer-0 embeddings.
    pub reg_lambda: f64,
    /// Score `Mf` by the raw dot product instead of `sigmoid(dot)`.
    pub presigmoid: bool,
    user_emb: Array2<f64>,
    item_emb: Array2<f64>,
}

impl EmbeddingModel {
    /// Fresh model with Gaussian(0, 0.1) entries drawn from `seed`.
    pub fn init(
        kind: ModelKind,
        n_users: usize,
        n_items: usize,
        dim: usize,
        layers: usize,
        reg_lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || n_users == 0 || n_items == 0 {
            return Err(Error::InvalidArgument(
                "model needs at least one user, one item, and one dimension".into(),
            ));
        }
        if kind == ModelKind::Lgn && layers == 0 {
            return Err(Error::InvalidArgument(
                "graph propagation needs at least one layer".into(),
            ));
        }
        if !(reg_lambda >= 0.0 && reg_lambda.is_finite()) {
            return Err(Error::InvalidArgument(
                "reg_lambda must be finite and nonnegative".into(),
            ));
        }
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |rows: usize| {
            let mut a = Array2::zeros((rows, dim));
            for r in 0..rows {
                for c in 0..dim {
                    a[[r, c]] = normal.sample(&mut rng);
                }
            }
            a
        };
        let user_emb = fill(n_users);
        let item_emb = fill(n_items);
        Ok(Self {
            kind,
            dim,
            layers,
            reg_lambda,
            presigmoid: false,
            user_emb,
            item_emb,
        })
    }

    pub fn with_presigmoid(mut self, presigmoid: bool) -> Self {
        self.presigmoid = presigmoid;
        self
    }

    pub fn num_users(&self) -> usize {
        self.user_emb.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.item_emb.nrows()
    }

    pub fn user_emb(&self) -> &Array2<f64> {
        &self.user_emb
    }

    pub fn item_emb(&self) -> &Array2<f64> {
        &self.item_emb
    }

    pub fn user_emb_mut(&mut self) -> &mut Array2<f64> {
        &mut self.user_emb
    }

    pub fn item_emb_mut(&mut self) -> &mut Array2<f64> {
        &mut self.item_emb
    }

    /// Both matrices mutably at once (split borrow for optimizer steps).
    pub fn emb_mut_pair(&mut self) -> (&mut Array2<f64>, &mut Array2<f64>) {
        (&mut self.user_emb, &mut self.item_emb)
    }

    /// `sigmoid(u · v)` from the raw embeddings (the `Mf` scoring rule).
    pub fn mf_score(&self, u: u32, i: u32) -> f64 {
        let dot = self.user_emb.row(u as usize).dot(&self.item_emb.row(i as usize));
        if self.presigmoid {
            dot
        } else {
            sigmoid(dot)
        }
    }

    /// Whether scores pass through a sigmoid (true only for `Mf` without the
    /// ablation flag).
    pub fn scores_through_sigmoid(&self) -> bool {
        self.kind == ModelKind::Mf && !self.presigmoid
    }

    /// Final representations used for scoring: the embeddings themselves for
    /// `Mf`, the layer-mean propagated embeddings for `Lgn`.
    pub fn propagated(&self, ds: &InteractionDataset) -> (Array2<f64>, Array2<f64>) {
        match self.kind {
            ModelKind::Mf => (self.user_emb.clone(), self.item_emb.clone()),
            ModelKind::Lgn => {
                propagate_mean(&self.user_emb, &self.item_emb, ds, self.layers)
            }
        }
    }

    /// Immutable scoring view safe to share across ranking workers.
    pub fn snapshot(&self, ds: &InteractionDataset) -> ScoreSnapshot {
        let (user_repr, item_repr) = self.propagated(ds);
        ScoreSnapshot::new(user_repr, item_repr, self.scores_through_sigmoid())
    }
}

/// One round of symmetric-normalized neighborhood aggregation.
fn propagate_once(
    user: &Array2<f64>,
    item: &Array2<f64>,
    ds: &InteractionDataset,
) -> (Array2<f64>, Array2<f64>) {
    let mut next_user = Array2::zeros(user.raw_dim());
    let mut next_item = Array2::zeros(item.raw_dim());
    for &(u, i) in ds.train_edges() {
        let w = 1.0
            / ((ds.user_degree(u) as f64).sqrt() * (ds.item_degree(i) as f64).sqrt());
        next_user
            .row_mut(u as usize)
            .scaled_add(w, &item.row(i as usize));
        next_item
            .row_mut(i as usize)
            .scaled_add(w, &user.row(u as usize));
    }
    (next_user, next_item)
}

/// Mean of layer 0..=`layers` propagated embeddings.
///
/// The operator is symmetric, so applying it to a gradient with respect to
/// the output yields the gradient with respect to the input.
pub fn propagate_mean(
    user: &Array2<f64>,
    item: &Array2<f64>,
    ds: &InteractionDataset,
    layers: usize,
) -> (Array2<f64>, Array2<f64>) {
    let mut acc_user = user.clone();
    let mut acc_item = item.clone();
    let mut cur_user = user.clone();
    let mut cur_item = item.clone();
    for _ in 0..layers {
        let (nu, ni) = propagate_once(&cur_user, &cur_item, ds);
        cur_user = nu;
        cur_item = ni;
        acc_user += &cur_user;
        acc_item += &cur_item;
    }
    let scale = 1.0 / (layers as f64 + 1.0);
    acc_user.mapv_inplace(|x| x * scale);
    acc_item.mapv_inplace(|x| x * scale);
    (acc_user, acc_item)
}

/// Frozen scoring representations; read-only and `Sync`.
#[derive(Debug, Clone)]
pub struct ScoreSnapshot {
    user_repr: Array2<f64>,
    item_repr: Array2<f64>,
    /// Apply a sigmoid on top of each dot product.
    pub sigmoid: bool,
}

impl ScoreSnapshot {
    pub fn new(user_repr: Array2<f64>, item_repr: Array2<f64>, sigmoid: bool) -> Self {
        assert_eq!(user_repr.ncols(), item_repr.ncols(), "dim mismatch");
        Self {
            user_repr,
            item_repr,
            sigmoid,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_repr.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.item_repr.nrows()
    }

    pub fn user_repr(&self) -> &Array2<f64> {
        &self.user_repr
    }

    pub fn item_repr(&self) -> &Array2<f64> {
        &self.item_repr
    }

    pub fn score(&self, u: u32, i: u32) -> f64 {
        let dot = self
            .user_repr
            .row(u as usize)
            .dot(&self.item_repr.row(i as usize));
        if self.sigmoid {
            sigmoid(dot)
        } else {
            dot
        }
    }

    /// Scores of every item for one user.
    pub fn user_scores(&self, u: u32) -> Vec<f64> {
        let dots = self.item_repr.dot(&self.user_repr.row(u as usize));
        if self.sigmoid {
            dots.iter().map(|&x| sigmoid(x)).collect()
        } else {
            dots.to_vec()
        }
    }
}

/// L2 penalty `reg_lambda * 1/2 * sum ||e||^2` over the layer-0 embeddings of
/// the given users and items. Ids are treated as sets (duplicates ignored).
pub fn l2_penalty(model: &EmbeddingModel, user_ids: &[u32], item_ids: &[u32]) -> f64 {
    let users: BTreeSet<u32> = user_ids.iter().copied().collect();
    let items: BTreeSet<u32> = item_ids.iter().copied().collect();
    let mut sq = 0.0;
    for &u in &users {
        let r = model.user_emb.row(u as usize);
        sq += r.dot(&r);
    }
    for &i in &items {
        let r = model.item_emb.row(i as usize);
        sq += r.dot(&r);
    }
    0.5 * model.reg_lambda * sq
}

/// L2 penalty over every embedding; the per-epoch reporting quantity.
pub fn l2_penalty_full(model: &EmbeddingModel) -> f64 {
    let sq = model.user_emb.iter().map(|x| x * x).sum::<f64>()
        + model.item_emb.iter().map(|x| x * x).sum::<f64>();
    0.5 * model.reg_lambda * sq
}

/// Per-triplet pairwise term and the two backprop coefficients.
///
/// The term is `w * -ln sigmoid(s_ui - s_uj)` with `s` the (possibly
/// sigmoided) dot products. Gradients with respect to the representations:
///
/// * d/d(user row)   = `coeff_i * item_i - coeff_j * item_j`
/// * d/d(item_i row) = `coeff_i * user`
/// * d/d(item_j row) = `-coeff_j * user`
#[derive(Debug, Clone, Copy)]
pub struct PairTerms {
    pub loss: f64,
    pub coeff_i: f64,
    pub coeff_j: f64,
}

/// Evaluate one weighted ranking term and its coefficients on raw
/// representation matrices (live embeddings or a propagated snapshot).
pub fn pair_terms(
    user_repr: &ArrayView2<f64>,
    item_repr: &ArrayView2<f64>,
    use_sigmoid: bool,
    w: f64,
    u: u32,
    i: u32,
    j: u32,
) -> PairTerms {
    let ur = user_repr.row(u as usize);
    let xi = ur.dot(&item_repr.row(i as usize));
    let xj = ur.dot(&item_repr.row(j as usize));
    if use_sigmoid {
        let si = sigmoid(xi);
        let sj = sigmoid(xj);
        let delta = si - sj;
        let base = w * (sigmoid(delta) - 1.0);
        PairTerms {
            loss: -w * ln_sigmoid(delta),
            coeff_i: base * si * (1.0 - si),
            coeff_j: base * sj * (1.0 - sj),
        }
    } else {
        let delta = xi - xj;
        let base = w * (sigmoid(delta) - 1.0);
        PairTerms {
            loss: -w * ln_sigmoid(delta),
            coeff_i: base,
            coeff_j: base,
        }
    }
}

impl ScoreSnapshot {
    pub fn pair_terms(&self, w: f64, u: u32, i: u32, j: u32) -> PairTerms {
        pair_terms(
            &self.user_repr.view(),
            &self.item_repr.view(),
            self.sigmoid,
            w,
            u,
            i,
            j,
        )
    }
}

/// Exact gradient of one weighted ranking term with respect to the layer-0
/// embedding matrices. For `Lgn` the gradient flows back through the
/// propagation operator; for `Mf` only the three touched rows are nonzero.
pub fn triplet_grad_full(
    model: &EmbeddingModel,
    ds: &InteractionDataset,
    w: f64,
    u: u32,
    i: u32,
    j: u32,
) -> (Array2<f64>, Array2<f64>) {
    let (user_repr, item_repr) = model.propagated(ds);
    let terms = pair_terms(
        &user_repr.view(),
        &item_repr.view(),
        model.scores_through_sigmoid(),
        w,
        u,
        i,
        j,
    );
    let mut gu = Array2::zeros(user_repr.raw_dim());
    let mut gi = Array2::zeros(item_repr.raw_dim());
    gu.row_mut(u as usize)
        .scaled_add(terms.coeff_i, &item_repr.row(i as usize));
    gu.row_mut(u as usize)
        .scaled_add(-terms.coeff_j, &item_repr.row(j as usize));
    gi.row_mut(i as usize)
        .scaled_add(terms.coeff_i, &user_repr.row(u as usize));
    gi.row_mut(j as usize)
        .scaled_add(-terms.coeff_j, &user_repr.row(u as usize));
    match model.kind {
        ModelKind::Mf => (gu, gi),
        ModelKind::Lgn => propagate_mean(&gu, &gi, ds, model.layers),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Dense first-order optimizer over both embedding matrices.
///
/// Adam keeps dense moments and steps every entry each call (untouched
/// entries still feel momentum decay), matching the dense-update convention
/// of mainstream deep-learning frameworks; this keeps runs deterministic and
/// independent of batch composition order.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    t: u64,
    m_user: Array2<f64>,
    v_user: Array2<f64>,
    m_item: Array2<f64>,
    v_item: Array2<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_users: usize, n_items: usize, dim: usize) -> Self {
        Self {
            kind,
            lr,
            t: 0,
            m_user: Array2::zeros((n_users, dim)),
            v_user: Array2::zeros((n_users, dim)),
            m_item: Array2::zeros((n_items, dim)),
            v_item: Array2::zeros((n_items, dim)),
        }
    }

    pub fn step(
        &mut self,
        user_emb: &mut Array2<f64>,
        item_emb: &mut Array2<f64>,
        grad_user: &Array2<f64>,
        grad_item: &Array2<f64>,
    ) {
        match self.kind {
            OptimizerKind::Sgd => {
                user_emb.scaled_add(-self.lr, grad_user);
                item_emb.scaled_add(-self.lr, grad_item);
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - BETA1.powf(self.t as f64);
                let bc2 = 1.0 - BETA2.powf(self.t as f64);
                adam_update(user_emb, &mut self.m_user, &mut self.v_user, grad_user, self.lr, bc1, bc2);
                adam_update(item_emb, &mut self.m_item, &mut self.v_item, grad_item, self.lr, bc1, bc2);
            }
        }
    }
}

fn adam_update(
    param: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    grad: &Array2<f64>,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    Zip::from(param)
        .and(m)
        .and(v)
        .and(grad)
        .for_each(|p, m, v, &g| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
        });
}

/// JSON header stored inside a checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub dim: usize,
    pub layers: usize,
    pub reg_lambda: f64,
    #[serde(default)]
    pub presigmoid: bool,
    pub n_users: usize,
    pub n_items: usize,
    pub seed: u64,
    pub epoch: usize,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"RBPC";

/// Write `magic | header_len | JSON header | user then item f64-LE entries`.
pub fn save_checkpoint(
    model: &EmbeddingModel,
    seed: u64,
    epoch: usize,
    path: &Path,
) -> Result<()> {
    let meta = CheckpointMeta {
        kind: model.kind,
        dim: model.dim,
        layers: model.layers,
        reg_lambda: model.reg_lambda,
        presigmoid: model.presigmoid,
        n_users: model.num_users(),
        n_items: model.num_items(),
        seed,
        epoch,
    };
    let header = serde_json::to_vec(&meta).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let floats = (model.user_emb.len() + model.item_emb.len()) * 8;
    let mut buf = Vec::with_capacity(8 + header.len() + floats);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for &x in model.user_emb.iter().chain(model.item_emb.iter()) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(EmbeddingModel, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |reason: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(fail("bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body_start = 8 + header_len;
    if bytes.len() < body_start {
        return Err(fail("truncated header"));
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(&bytes[8..body_start]).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
    let want = (meta.n_users + meta.n_items) * meta.dim;
    let body = &bytes[body_start..];
    if body.len() != want * 8 {
        return Err(fail("embedding payload has the wrong size"));
    }
    let mut vals = Vec::with_capacity(want);
    for chunk in body.chunks_exact(8) {
        vals.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let item_vals = vals.split_off(meta.n_users * meta.dim);
    let user_emb = Array2::from_shape_vec((meta.n_users, meta.dim), vals)
        .map_err(|_| fail("user embedding shape"))?;
    let item_emb = Array2::from_shape_vec((meta.n_items, meta.dim), item_vals)
        .map_err(|_| fail("item embedding shape"))?;
    let model = EmbeddingModel {
        kind: meta.kind,
        dim: meta.dim,
        layers: meta.layers,
        reg_lambda: meta.reg_lambda,
        presigmoid: meta.presigmoid,
        user_emb,
        item_emb,
    };
    Ok((model, meta))
}
