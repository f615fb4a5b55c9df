//! Seeded synthetic interaction generators.
//!
//! Two families:
//!
//! * [`planted_power_niche`] — a background population with popularity-skewed
//!   tastes plus a high-activity cohort wired preferentially to the least
//!   popular quartile of items. The cohort is exactly the structure the
//!   observed-vs-null significance analysis is meant to detect.
//! * [`popularity_skewed`] — a larger instance with learnable group
//!   structure: mainstream taste groups drawing from a shared head block and
//!   per-group mid blocks, plus a high-activity niche cohort drawing from
//!   per-group tail blocks. Each user's items are split into train/test, so
//!   the instance supports end-to-end train-and-evaluate runs.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::interactions::InteractionDataset;

/// Cumulative table for `1/(rank+1)^s` weights over `len` slots.
fn zipf_cumulative(len: usize, s: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (0..len)
        .map(|r| {
            acc += 1.0 / ((r + 1) as f64).powf(s);
            acc
        })
        .collect()
}

/// Index into the cumulative table proportional to the underlying weights.
fn weighted_pick(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cum.last().expect("nonempty weights");
    let x = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    /// Fraction of users in the high-activity, tail-focused cohort.
    pub cohort_frac: f64,
    /// Inclusive train-degree range of background users.
    pub background_degree: (u32, u32),
    /// Inclusive train-degree range of cohort users.
    pub cohort_degree: (u32, u32),
    /// Popularity skew of background draws over all items.
    pub zipf_s: f64,
    /// Probability that a cohort draw comes from the bottom-quartile pool.
    pub cohort_focus: f64,
    /// Held-out test items per user.
    pub test_per_user: u32,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            users: 500,
            items: 800,
            cohort_frac: 0.2,
            background_degree: (5, 15),
            cohort_degree: (20, 40),
            zipf_s: 1.0,
            cohort_focus: 0.9,
            test_per_user: 2,
        }
    }
}

/// A generated dataset plus the planted cohort membership.
#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: InteractionDataset,
    pub cohort: Vec<bool>,
}

impl Planted {
    pub fn into_dataset(self) -> InteractionDataset {
        self.dataset
    }
}

/// Background users sample items by global popularity; the cohort (the last
/// `cohort_frac` of user indices) samples mostly from the bottom quartile of
/// the popularity order, at a much higher activity level.
pub fn planted_power_niche(cfg: &PlantedConfig, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cum_all = zipf_cumulative(cfg.items, cfg.zipf_s);
    // weights fall with the index, so the bottom quartile is the last one
    let niche_start = cfg.items - cfg.items / 4;
    let niche_len = cfg.items - niche_start;

    let cohort_count = (cfg.users as f64 * cfg.cohort_frac).round() as usize;
    let cohort_start = cfg.users - cohort_count;
    let mut cohort = vec![false; cfg.users];
    let mut train = Vec::new();
    let mut test = Vec::new();

    for u in 0..cfg.users {
        let in_cohort = u >= cohort_start;
        cohort[u] = in_cohort;
        let (lo, hi) = if in_cohort {
            cfg.cohort_degree
        } else {
            cfg.background_degree
        };
        let degree = rng.random_range(lo..=hi) as usize;
        let draw = |rng: &mut ChaCha8Rng| -> u32 {
            if in_cohort && rng.random::<f64>() < cfg.cohort_focus {
                (niche_start + rng.random_range(0..niche_len)) as u32
            } else {
                weighted_pick(&cum_all, rng) as u32
            }
        };
        let mut chosen: HashSet<u32> = HashSet::new();
        while chosen.len() < degree {
            chosen.insert(draw(&mut rng));
        }
        let mut held = 0u32;
        while held < cfg.test_per_user {
            let cand = draw(&mut rng);
            if !chosen.contains(&cand) && test.iter().all(|&(tu, ti)| (tu, ti) != (u as u32, cand))
            {
                test.push((u as u32, cand));
                held += 1;
            }
        }
        for i in chosen {
            train.push((u as u32, i));
        }
    }

    let dataset = InteractionDataset::from_dense_edges(cfg.users, cfg.items, train, test)
        .expect("generated edges are in bounds and disjoint");
    Planted { dataset, cohort }
}

#[derive(Debug, Clone)]
pub struct SkewedConfig {
    pub users: usize,
    pub items: usize,
    /// Globally shared high-popularity block.
    pub head_items: usize,
    pub mainstream_groups: usize,
    pub mid_per_group: usize,
    pub niche_groups: usize,
    pub tail_per_group: usize,
    /// Fraction of users in the high-activity niche cohort.
    pub cohort_frac: f64,
    /// Inclusive pre-split degree range of mainstream users.
    pub mainstream_degree: (u32, u32),
    /// Inclusive pre-split degree range of cohort users.
    pub cohort_degree: (u32, u32),
    /// Probability a mainstream draw comes from the head block.
    pub mainstream_head_prob: f64,
    /// Probability a cohort draw comes from the head block.
    pub cohort_head_prob: f64,
    /// Within-block popularity skew.
    pub zipf_s: f64,
    /// Fraction of each user's items held out for test.
    pub test_frac: f64,
}

impl Default for SkewedConfig {
    fn default() -> Self {
        Self {
            users: 2000,
            items: 1000,
            head_items: 50,
            mainstream_groups: 8,
            mid_per_group: 60,
            niche_groups: 4,
            tail_per_group: 105,
            cohort_frac: 0.2,
            mainstream_degree: (8, 20),
            cohort_degree: (25, 45),
            mainstream_head_prob: 0.35,
            cohort_head_prob: 0.1,
            zipf_s: 0.8,
            test_frac: 0.25,
        }
    }
}

/// Generated skewed dataset plus niche-cohort membership.
#[derive(Debug, Clone)]
pub struct Skewed {
    pub dataset: InteractionDataset,
    pub cohort: Vec<bool>,
}

impl Skewed {
    pub fn into_dataset(self) -> InteractionDataset {
        self.dataset
    }
}

/// Popularity-skewed instance with planted group structure and a per-user
/// train/test split. Item degrees fall off from the shared head block
/// through the group mid blocks to the cohort tail blocks.
pub fn popularity_skewed(cfg: &SkewedConfig, seed: u64) -> Skewed {
    assert!(
        cfg.head_items
            + cfg.mainstream_groups * cfg.mid_per_group
            + cfg.niche_groups * cfg.tail_per_group
            <= cfg.items,
        "item blocks exceed the item count"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cum_head = zipf_cumulative(cfg.head_items, cfg.zipf_s);
    let cum_mid = zipf_cumulative(cfg.mid_per_group, cfg.zipf_s);
    let cum_tail = zipf_cumulative(cfg.tail_per_group, cfg.zipf_s);
    let mid_start = cfg.head_items;
    let tail_start = cfg.head_items + cfg.mainstream_groups * cfg.mid_per_group;

    let cohort_count = (cfg.users as f64 * cfg.cohort_frac).round() as usize;
    let mut cohort = vec![false; cfg.users];
    let mut train = Vec::new();
    let mut test = Vec::new();

    for u in 0..cfg.users {
        // interleave membership so user index carries no block structure
        let in_cohort = cohort_count > 0 && u % (cfg.users / cohort_count.max(1)).max(1) == 0;
        let in_cohort = in_cohort && cohort.iter().filter(|&&c| c).count() < cohort_count;
        cohort[u] = in_cohort;
        let (lo, hi) = if in_cohort {
            cfg.cohort_degree
        } else {
            cfg.mainstream_degree
        };
        let degree = rng.random_range(lo..=hi) as usize;
        let group = if in_cohort {
            u % cfg.niche_groups
        } else {
            u % cfg.mainstream_groups
        };
        let head_prob = if in_cohort {
            cfg.cohort_head_prob
        } else {
            cfg.mainstream_head_prob
        };
        let draw = |rng: &mut ChaCha8Rng| -> u32 {
            if rng.random::<f64>() < head_prob {
                weighted_pick(&cum_head, rng) as u32
            } else if in_cohort {
                (tail_start + group * cfg.tail_per_group + weighted_pick(&cum_tail, rng)) as u32
            } else {
                (mid_start + group * cfg.mid_per_group + weighted_pick(&cum_mid, rng)) as u32
            }
        };
        let mut chosen: HashSet<u32> = HashSet::new();
        while chosen.len() < degree {
            chosen.insert(draw(&mut rng));
        }
        let mut items: Vec<u32> = chosen.into_iter().collect();
        items.sort_unstable();
        items.shuffle(&mut rng);
        let held = ((degree as f64) * cfg.test_frac).round() as usize;
        let held = held.min(degree.saturating_sub(1));
        for (idx, i) in items.into_iter().enumerate() {
            if idx < held {
                test.push((u as u32, i));
            } else {
                train.push((u as u32, i));
            }
        }
    }

    let dataset = InteractionDataset::from_dense_edges(cfg.users, cfg.items, train, test)
        .expect("generated edges are in bounds and disjoint");
    Skewed { dataset, cohort }
}
