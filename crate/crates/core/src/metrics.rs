//! Top-k ranking quality and popularity-bias evaluation, overall and per
//! user quadrant.
//!
//! Rankings mask each user's train items, break score ties by ascending item
//! index (deterministic), and record the 1-based full rank of every test
//! item. The bias measure correlates an item's train popularity with how
//! well the item is placed for the users who actually hold it in test:
//! positive values mean popular items enjoy better placement.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::{InteractionDataset, Quadrant};
use crate::recmodels::ScoreSnapshot;

/// One evaluated user's ranking outcome.
#[derive(Debug, Clone)]
pub struct UserRanking {
    pub user: u32,
    /// Top-k items among the user's rankable (non-train) items.
    pub topk: Vec<u32>,
    /// (test item, 1-based rank among rankable items).
    pub test_positions: Vec<(u32, usize)>,
    /// Number of rankable items for this user.
    pub rankable: usize,
}

/// Rankings of every evaluated user (those with at least one test item and
/// at least one train item).
#[derive(Debug, Clone)]
pub struct RankingResult {
    pub k: usize,
    pub users: Vec<UserRanking>,
    /// Users skipped for having no test items or no train history.
    pub excluded_users: usize,
}

/// Score, mask, and sort all items for every evaluatable user.
pub fn rank_items(
    snap: &ScoreSnapshot,
    ds: &InteractionDataset,
    k: usize,
) -> Result<RankingResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if snap.num_users() != ds.num_users() || snap.num_items() != ds.num_items() {
        return Err(Error::InvalidArgument(
            "scoring snapshot shape does not match the dataset".into(),
        ));
    }
    let n = ds.num_users() as u32;
    let users: Vec<UserRanking> = (0..n)
        .into_par_iter()
        .filter_map(|u| {
            if ds.test_items(u).is_empty() || ds.neighbors(u).is_empty() {
                return None;
            }
            Some(rank_one_user(snap, ds, u, k))
        })
        .collect();
    let excluded_users = ds.num_users() - users.len();
    Ok(RankingResult {
        k,
        users,
        excluded_users,
    })
}

fn rank_one_user(snap: &ScoreSnapshot, ds: &InteractionDataset, u: u32, k: usize) -> UserRanking {
    let scores = snap.user_scores(u);
    let mut candidates: Vec<u32> = Vec::with_capacity(ds.num_items());
    let mut train = ds.neighbors(u).iter().copied().peekable();
    for i in 0..ds.num_items() as u32 {
        if train.peek() == Some(&i) {
            train.next();
        } else {
            candidates.push(i);
        }
    }
    // descending score, ascending index on ties
    candidates.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    let test = ds.test_items(u);
    let mut test_positions = Vec::with_capacity(test.len());
    for (idx, &item) in candidates.iter().enumerate() {
        if test.binary_search(&item).is_ok() {
            test_positions.push((item, idx + 1));
        }
    }
    let rankable = candidates.len();
    candidates.truncate(k);
    UserRanking {
        user: u,
        topk: candidates,
        test_positions,
        rankable,
    }
}

/// Per-user hit metrics at the ranking's k.
fn user_metrics(ur: &UserRanking, n_test: usize, k: usize) -> (f64, f64, f64) {
    let hit_positions: Vec<usize> = ur
        .test_positions
        .iter()
        .filter(|&&(_, pos)| pos <= k)
        .map(|&(_, pos)| pos)
        .collect();
    let hits = hit_positions.len() as f64;
    let recall = hits / n_test as f64;
    let precision = hits / k as f64;
    let dcg: f64 = hit_positions
        .iter()
        .map(|&p| 1.0 / ((p + 1) as f64).log2())
        .sum();
    let ideal: f64 = (1..=n_test.min(k))
        .map(|p| 1.0 / ((p + 1) as f64).log2())
        .sum();
    let ndcg = if ideal > 0.0 { dcg / ideal } else { 0.0 };
    (recall, precision, ndcg)
}

/// Means of recall@k, precision@k, ndcg@k over the evaluated users.
pub fn recall_precision_ndcg(rr: &RankingResult, ds: &InteractionDataset) -> (f64, f64, f64) {
    mean_metrics(rr.users.iter(), ds, rr.k).unwrap_or((0.0, 0.0, 0.0))
}

fn mean_metrics<'a>(
    users: impl Iterator<Item = &'a UserRanking>,
    ds: &InteractionDataset,
    k: usize,
) -> Option<(f64, f64, f64)> {
    let mut sums = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for ur in users {
        let (r, p, n) = user_metrics(ur, ds.test_items(ur.user).len(), k);
        sums.0 += r;
        sums.1 += p;
        sums.2 += n;
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let c = count as f64;
    Some((sums.0 / c, sums.1 / c, sums.2 / c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Pearson,
    Spearman,
}

impl Default for Correlation {
    fn default() -> Self {
        Correlation::Pearson
    }
}

/// Correlation between item train popularity and mean placement quality.
#[derive(Debug, Clone, Copy)]
pub struct BiasOutcome {
    pub value: f64,
    /// True when either coordinate had zero variance (value forced to 0).
    pub degenerate: bool,
}

/// For each item with test interactions among the given users, its placement
/// quality is the mean over those users of `1 - (pos - 1)/(M_u - 1)` (1 =
/// always ranked first; users with a single rankable item contribute 1).
/// Returns the correlation of quality against train degree.
pub fn popularity_opportunity_bias(
    rr: &RankingResult,
    ds: &InteractionDataset,
    corr: Correlation,
) -> Result<BiasOutcome> {
    bias_over(rr.users.iter(), ds, corr)
}

fn bias_over<'a>(
    users: impl Iterator<Item = &'a UserRanking>,
    ds: &InteractionDataset,
    corr: Correlation,
) -> Result<BiasOutcome> {
    let m = ds.num_items();
    let mut quality_sum = vec![0.0f64; m];
    let mut quality_cnt = vec![0u32; m];
    for ur in users {
        for &(item, pos) in &ur.test_positions {
            let q = if ur.rankable <= 1 {
                1.0
            } else {
                1.0 - (pos as f64 - 1.0) / (ur.rankable as f64 - 1.0)
            };
            quality_sum[item as usize] += q;
            quality_cnt[item as usize] += 1;
        }
    }
    let mut popularity = Vec::new();
    let mut quality = Vec::new();
    for i in 0..m {
        if quality_cnt[i] > 0 {
            popularity.push(ds.item_degree(i as u32) as f64);
            quality.push(quality_sum[i] / quality_cnt[i] as f64);
        }
    }
    if popularity.len() < 2 {
        return Err(Error::InvalidArgument(
            "bias needs at least 2 items with test interactions".into(),
        ));
    }
    let (x, y) = match corr {
        Correlation::Pearson => (popularity, quality),
        Correlation::Spearman => (midranks(&popularity), midranks(&quality)),
    };
    Ok(match pearson(&x, &y) {
        Some(value) => BiasOutcome {
            value,
            degenerate: false,
        },
        None => BiasOutcome {
            value: 0.0,
            degenerate: true,
        },
    })
}

/// Pearson correlation; `None` when either side has zero variance.
fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}

/// 1-based ranks with ties sharing their average rank.
fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            ranks[idx] = avg;
        }
        start = end + 1;
    }
    ranks
}

/// One metric row; `None` marks an empty or degenerate cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricBlock {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub ndcg: Option<f64>,
    pub bias: Option<f64>,
    pub users: usize,
}

impl MetricBlock {
    /// Block with no users and every metric undefined.
    pub fn empty() -> Self {
        Self {
            recall: None,
            precision: None,
            ndcg: None,
            bias: None,
            users: 0,
        }
    }
}

/// Full evaluation: overall metrics plus the per-quadrant breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub overall: MetricBlock,
    pub quadrants: BTreeMap<String, MetricBlock>,
    pub evaluated_users: usize,
    pub excluded_users: usize,
}

/// Rank once, then reduce overall and per-quadrant rows from the same
/// rankings (the bias row of a quadrant uses only that quadrant's users).
pub fn evaluate(
    snap: &ScoreSnapshot,
    ds: &InteractionDataset,
    k: usize,
    corr: Correlation,
) -> Result<EvalReport> {
    let rr = rank_items(snap, ds, k)?;
    let mut quadrant_of: Vec<Option<Quadrant>> = vec![None; ds.num_users()];
    for p in ds.assign_quadrants() {
        quadrant_of[p.user as usize] = Some(p.quadrant);
    }
    let overall = block_over(rr.users.iter(), ds, k, corr);
    let mut quadrants = BTreeMap::new();
    for q in Quadrant::ALL {
        let members = rr
            .users
            .iter()
            .filter(|ur| quadrant_of[ur.user as usize] == Some(q));
        quadrants.insert(q.as_str().to_string(), block_over(members, ds, k, corr));
    }
    Ok(EvalReport {
        k,
        overall,
        quadrants,
        evaluated_users: rr.users.len(),
        excluded_users: rr.excluded_users,
    })
}

fn block_over<'a>(
    users: impl Iterator<Item = &'a UserRanking> + Clone,
    ds: &InteractionDataset,
    k: usize,
    corr: Correlation,
) -> MetricBlock {
    let count = users.clone().count();
    if count == 0 {
        return MetricBlock::empty();
    }
    let (recall, precision, ndcg) = mean_metrics(users.clone(), ds, k).expect("count > 0");
    let bias = bias_over(users, ds, corr).ok().map(|b| {
        if b.degenerate {
            log::debug!("bias correlation degenerate (zero variance); reporting 0");
        }
        b.value
    });
    MetricBlock {
        recall: Some(recall),
        precision: Some(precision),
        ndcg: Some(ndcg),
        bias,
        users: count,
    }
}
