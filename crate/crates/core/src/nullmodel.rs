//! Bipartite configuration-model null analysis.
//!
//! Null samples are drawn by degree-preserving double-edge swaps: two edges
//! `(u1, v1)` and `(u2, v2)` become `(u1, v2)` and `(u2, v1)`. A swap is
//! rejected when it would create a duplicate edge or when it is a no-op
//! (shared endpoint). The swap budget counts accepted swaps; rejections are
//! tallied in `swap_attempts`.
//!
//! Observed users are binned by activity-level and popularity-preference
//! quantiles, null samples are binned with the same boundaries, and each
//! cell gets a z-score of the observed count against the null ensemble.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;

/// One degree-preserving rewiring of a dataset's train edges.
#[derive(Debug, Clone)]
pub struct RewiredEdgeSet {
    edges: Vec<(u32, u32)>,
    pub swap_attempts: u64,
    pub swap_accepts: u64,
}

impl RewiredEdgeSet {
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }
}

fn edge_key(u: u32, i: u32) -> u64 {
    ((u as u64) << 32) | i as u64
}

// Degenerate edge sets (e.g. all edges sharing one item) can make every
// proposal rejectable; cap total attempts so rewiring always terminates.
const MAX_ATTEMPTS_PER_SWAP: u64 = 200;

/// Apply `swaps` accepted double-edge swaps to the dataset's train edges.
///
/// Degrees of every user and item are preserved exactly and the edge set
/// stays simple (no duplicates). Deterministic for a fixed seed.
pub fn rewire(ds: &InteractionDataset, swaps: u64, seed: u64) -> RewiredEdgeSet {
    let mut edges = ds.train_edges().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rewire_in_place(&mut edges, swaps, &mut rng)
}

fn rewire_in_place(
    edges: &mut [(u32, u32)],
    swaps: u64,
    rng: &mut ChaCha8Rng,
) -> RewiredEdgeSet {
    let e = edges.len();
    let mut present: HashSet<u64> = edges.iter().map(|&(u, i)| edge_key(u, i)).collect();
    let mut attempts = 0u64;
    let mut accepts = 0u64;
    let max_attempts = swaps.saturating_mul(MAX_ATTEMPTS_PER_SWAP).max(1_000);

    if e >= 2 {
        while accepts < swaps && attempts < max_attempts {
            attempts += 1;
            let a = rng.random_range(0..e);
            let mut b = rng.random_range(0..e);
            while b == a {
                b = rng.random_range(0..e);
            }
            let (u1, v1) = edges[a];
            let (u2, v2) = edges[b];
            if u1 == u2 || v1 == v2 {
                continue; // swap would be a no-op
            }
            if present.contains(&edge_key(u1, v2)) || present.contains(&edge_key(u2, v1)) {
                continue; // would create a duplicate edge
            }
            present.remove(&edge_key(u1, v1));
            present.remove(&edge_key(u2, v2));
            present.insert(edge_key(u1, v2));
            present.insert(edge_key(u2, v1));
            edges[a] = (u1, v2);
            edges[b] = (u2, v1);
            accepts += 1;
        }
        if accepts < swaps {
            log::warn!(
                "rewiring stopped after {attempts} attempts with {accepts}/{swaps} accepted swaps"
            );
        }
    }

    RewiredEdgeSet {
        edges: edges.to_vec(),
        swap_attempts: attempts,
        swap_accepts: accepts,
    }
}

/// Draw independent configuration-model samples, each from `multiplier * E`
/// accepted swaps of the original edge set (E = number of train edges).
///
/// Samples run in parallel; each owns a private edge-set copy and an RNG
/// stream derived from `seed`, so the result is deterministic.
pub fn sample_null(
    ds: &InteractionDataset,
    samples: usize,
    multiplier: u64,
    seed: u64,
) -> Vec<RewiredEdgeSet> {
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let sub_seeds: Vec<u64> = (0..samples).map(|_| seeder.random()).collect();
    let swaps = multiplier * ds.train_edges().len() as u64;
    sub_seeds
        .into_par_iter()
        .map(|s| rewire(ds, swaps, s))
        .collect()
}

/// Quantile cut points shared between the observed dataset and null samples.
#[derive(Debug, Clone)]
pub struct BinBoundaries {
    /// Upper cut points for the activity axis (`q - 1` values).
    pub activity: Vec<f64>,
    /// Upper cut points for the preference axis (`q - 1` values).
    pub preference: Vec<f64>,
}

impl BinBoundaries {
    /// Quantile boundaries computed from the observed dataset (users with
    /// `d_u >= 1` on both axes).
    pub fn from_observed(ds: &InteractionDataset, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument("bins per axis must be >= 2".into()));
        }
        let mut activity = Vec::new();
        let mut preference = Vec::new();
        for u in 0..ds.num_users() as u32 {
            if ds.user_degree(u) > 0 {
                activity.push(ds.user_degree(u) as f64);
                preference.push(ds.pop_preference(u)?);
            }
        }
        if activity.is_empty() {
            return Err(Error::InvalidArgument(
                "no users with train interactions to bin".into(),
            ));
        }
        activity.sort_by(|a, b| a.partial_cmp(b).unwrap());
        preference.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cuts = |sorted: &[f64]| (1..q).map(|k| quantile(sorted, k as f64 / q as f64)).collect();
        let bounds = Self {
            activity: cuts(&activity),
            preference: cuts(&preference),
        };
        let distinct_a = count_distinct_bins(&bounds.activity);
        let distinct_p = count_distinct_bins(&bounds.preference);
        if distinct_a < q || distinct_p < q {
            log::warn!(
                "tied quantile boundaries merge bins: {distinct_a}/{q} activity bins, \
                 {distinct_p}/{q} preference bins are distinct"
            );
        }
        Ok(bounds)
    }

    /// Mean-threshold boundaries; with `q = 2` this reproduces the quadrant
    /// split (up to ties landing on the low side of each axis).
    pub fn from_means(ds: &InteractionDataset) -> Result<Self> {
        let mut degrees = Vec::new();
        let mut prefs = Vec::new();
        for u in 0..ds.num_users() as u32 {
            if ds.user_degree(u) > 0 {
                degrees.push(ds.user_degree(u) as f64);
                prefs.push(ds.pop_preference(u)?);
            }
        }
        if degrees.is_empty() {
            return Err(Error::InvalidArgument(
                "no users with train interactions to bin".into(),
            ));
        }
        Ok(Self {
            activity: vec![degrees.iter().sum::<f64>() / degrees.len() as f64],
            preference: vec![prefs.iter().sum::<f64>() / prefs.len() as f64],
        })
    }

    pub fn bins(&self) -> usize {
        self.activity.len() + 1
    }

    /// Cell of a `(d_u, p_u)` pair: values at or below a cut point fall in
    /// the lower bin.
    pub fn cell(&self, activity: f64, preference: f64) -> (usize, usize) {
        (
            self.activity.partition_point(|&e| e < activity),
            self.preference.partition_point(|&e| e < preference),
        )
    }
}

/// Bins reachable under the `partition_point` convention: tied cut points
/// make the bin between them unreachable.
fn count_distinct_bins(cuts: &[f64]) -> usize {
    let mut distinct_cuts = 1;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            distinct_cuts += 1;
        }
    }
    distinct_cuts + 1
}

/// Linear-interpolation quantile of a sorted slice (numpy's default).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `q x q` user counts of the observed dataset under `bounds`.
pub fn bin_observed(ds: &InteractionDataset, bounds: &BinBoundaries) -> Vec<Vec<u64>> {
    let q = bounds.bins();
    let mut grid = vec![vec![0u64; q]; q];
    for u in 0..ds.num_users() as u32 {
        let d = ds.user_degree(u);
        if d == 0 {
            continue;
        }
        let p = ds.pop_preference(u).expect("d_u >= 1");
        let (a, b) = bounds.cell(d as f64, p);
        grid[a][b] += 1;
    }
    grid
}

/// `q x q` user counts of a rewired sample under `bounds`.
///
/// Degrees are preserved by construction, so `d_u` and `d_i` come from the
/// source dataset; `p_u` is recomputed from the sample's adjacency (who
/// touches which items changes under the null).
pub fn bin_sample(
    ds: &InteractionDataset,
    sample: &RewiredEdgeSet,
    bounds: &BinBoundaries,
) -> Vec<Vec<u64>> {
    let n = ds.num_users();
    let mut deg_sum = vec![0u64; n];
    let mut count = vec![0u32; n];
    for &(u, i) in sample.edges() {
        deg_sum[u as usize] += ds.item_degree(i) as u64;
        count[u as usize] += 1;
    }
    let q = bounds.bins();
    let mut grid = vec![vec![0u64; q]; q];
    for u in 0..n {
        if count[u] == 0 {
            continue;
        }
        let p = deg_sum[u] as f64 / count[u] as f64;
        let (a, b) = bounds.cell(count[u] as f64, p);
        grid[a][b] += 1;
    }
    grid
}

/// Observed-vs-null cell statistics over the binned user counts.
#[derive(Debug, Clone)]
pub struct SignificanceGrid {
    pub q: usize,
    pub observed: Vec<Vec<u64>>,
    pub null_mean: Vec<Vec<f64>>,
    pub null_std: Vec<Vec<f64>>,
    /// `NaN` where the null std is zero (flagged undefined).
    pub z: Vec<Vec<f64>>,
    /// (observed - null mean) / total binned users.
    pub norm_dev: Vec<Vec<f64>>,
    /// `|z| >= 2` with a defined z.
    pub significant: Vec<Vec<bool>>,
}

impl SignificanceGrid {
    pub fn total_users(&self) -> u64 {
        self.observed.iter().flatten().sum()
    }
}

/// Per-cell sample statistics of the null ensemble against the observed grid.
///
/// The std uses the `samples - 1` denominator. Cells with zero null variance
/// get an undefined z (`NaN`) and are never significant.
pub fn significance_grid(
    observed: &[Vec<u64>],
    nulls: &[Vec<Vec<u64>>],
) -> Result<SignificanceGrid> {
    if nulls.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 null samples for a std".into(),
        ));
    }
    let q = observed.len();
    for g in nulls {
        if g.len() != q || g.iter().any(|row| row.len() != q) {
            return Err(Error::InvalidArgument("grid shapes differ".into()));
        }
    }
    let total: u64 = observed.iter().flatten().sum();
    let s = nulls.len() as f64;

    let mut null_mean = vec![vec![0.0; q]; q];
    let mut null_std = vec![vec![0.0; q]; q];
    let mut z = vec![vec![f64::NAN; q]; q];
    let mut norm_dev = vec![vec![0.0; q]; q];
    let mut significant = vec![vec![false; q]; q];

    for a in 0..q {
        for b in 0..q {
            let mean = nulls.iter().map(|g| g[a][b] as f64).sum::<f64>() / s;
            let var = nulls
                .iter()
                .map(|g| {
                    let d = g[a][b] as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / (s - 1.0);
            let std = var.sqrt();
            null_mean[a][b] = mean;
            null_std[a][b] = std;
            norm_dev[a][b] = (observed[a][b] as f64 - mean) / total as f64;
            if std > 0.0 {
                let zz = (observed[a][b] as f64 - mean) / std;
                z[a][b] = zz;
                significant[a][b] = zz.abs() >= 2.0;
            }
        }
    }

    Ok(SignificanceGrid {
        q,
        observed: observed.to_vec(),
        null_mean,
        null_std,
        z,
        norm_dev,
        significant,
    })
}

/// Full observed-vs-null pipeline with observed-derived quantile boundaries.
pub fn analyze_significance(
    ds: &InteractionDataset,
    q: usize,
    samples: usize,
    multiplier: u64,
    seed: u64,
) -> Result<SignificanceGrid> {
    let bounds = BinBoundaries::from_observed(ds, q)?;
    let observed = bin_observed(ds, &bounds);
    let nulls: Vec<Vec<Vec<u64>>> = sample_null(ds, samples, multiplier, seed)
        .par_iter()
        .map(|s| bin_sample(ds, s, &bounds))
        .collect();
    significance_grid(&observed, &nulls)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degrees_of(edges: &[(u32, u32)], n: usize, m: usize) -> (Vec<u32>, Vec<u32>) {
        let mut du = vec![0u32; n];
        let mut di = vec![0u32; m];
        for &(u, i) in edges {
            du[u as usize] += 1;
            di[i as usize] += 1;
        }
        (du, di)
    }

    #[test]
    fn single_swap_exchanges_items() {
        // two disjoint edges: the only accepted swap crosses them
        let ds =
            InteractionDataset::from_dense_edges(2, 2, vec![(0, 0), (1, 1)], vec![(0, 1)]).unwrap();
        let rewired = rewire(&ds, 1, 7);
        let mut got = rewired.edges().to_vec();
        got.sort_unstable();
        assert_eq!(got, vec![(0, 1), (1, 0)]);
        assert_eq!(rewired.swap_accepts, 1);
    }

    #[test]
    fn shared_item_rejects_everything() {
        let ds =
            InteractionDataset::from_dense_edges(2, 2, vec![(0, 0), (1, 0)], vec![(0, 1)]).unwrap();
        let rewired = rewire(&ds, 5, 3);
        assert_eq!(rewired.swap_accepts, 0);
        let mut got = rewired.edges().to_vec();
        got.sort_unstable();
        assert_eq!(got, ds.train_edges());
    }

    #[test]
    fn rewire_preserves_degrees() {
        let ds = InteractionDataset::from_dense_edges(
            5,
            6,
            vec![
                (0, 0),
                (0, 1),
                (0, 2),
                (1, 1),
                (1, 3),
                (2, 2),
                (2, 4),
                (3, 0),
                (3, 5),
                (4, 3),
            ],
            vec![(0, 4)],
        )
        .unwrap();
        for seed in 0..10 {
            let rewired = rewire(&ds, 40, seed);
            let (du, di) = degrees_of(rewired.edges(), 5, 6);
            assert_eq!(du, ds.user_degrees());
            assert_eq!(di, ds.item_degrees());
            let uniq: HashSet<(u32, u32)> = rewired.edges().iter().copied().collect();
            assert_eq!(uniq.len(), rewired.edges().len());
        }
    }

    #[test]
    fn sample_null_is_deterministic_and_distinct() {
        let ds = crate::synthetic::planted_power_niche(&Default::default(), 11).into_dataset();
        let a = sample_null(&ds, 3, 10, 42);
        let b = sample_null(&ds, 3, 10, 42);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.edges(), y.edges());
        }
        // multiplier * E accepted swaps each
        let e = ds.train_edges().len() as u64;
        for s in &a {
            assert_eq!(s.swap_accepts, 10 * e);
        }
        // samples differ pairwise
        assert_ne!(a[0].edges(), a[1].edges());
        assert_ne!(a[1].edges(), a[2].edges());
    }

    #[test]
    fn binning_covers_every_eligible_user() {
        let ds = crate::synthetic::planted_power_niche(&Default::default(), 5).into_dataset();
        let bounds = BinBoundaries::from_observed(&ds, 4).unwrap();
        let grid = bin_observed(&ds, &bounds);
        let eligible = (0..ds.num_users() as u32)
            .filter(|&u| ds.user_degree(u) > 0)
            .count() as u64;
        let total: u64 = grid.iter().flatten().sum();
        assert_eq!(total, eligible);

        for sample in sample_null(&ds, 3, 10, 9) {
            let g = bin_sample(&ds, &sample, &bounds);
            let t: u64 = g.iter().flatten().sum();
            assert_eq!(t, eligible);
        }
    }

    #[test]
    fn mean_boundaries_match_quadrants_on_toy() {
        let ds = InteractionDataset::from_dense_edges(
            4,
            3,
            vec![(0, 0), (0, 1), (1, 0), (2, 0), (3, 2)],
            vec![(0, 2)],
        )
        .unwrap();
        let bounds = BinBoundaries::from_means(&ds).unwrap();
        let grid = bin_observed(&ds, &bounds);
        // quadrants: user 0 PowerNiche, users 1,2 LightMainstream, user 3 LightNiche
        // axis 0 = activity bin (0 light / 1 power), axis 1 = preference bin
        // (0 niche side / 1 mainstream side)
        assert_eq!(grid[1][0], 1); // power-niche
        assert_eq!(grid[0][1], 2); // light-mainstream
        assert_eq!(grid[0][0], 1); // light-niche
        assert_eq!(grid[1][1], 0);
    }

    #[test]
    fn uniform_users_land_in_one_row() {
        let train = vec![(0, 0), (1, 1), (2, 2)];
        let ds = InteractionDataset::from_dense_edges(3, 4, train, vec![(0, 3)]).unwrap();
        let bounds = BinBoundaries::from_observed(&ds, 3).unwrap();
        let grid = bin_observed(&ds, &bounds);
        let nonzero: Vec<u64> = grid.iter().flatten().copied().filter(|&c| c > 0).collect();
        assert_eq!(nonzero, vec![3]);
    }

    #[test]
    fn zero_variance_cells_are_flagged_undefined() {
        let observed = vec![vec![10u64, 0], vec![0, 0]];
        let nulls = vec![
            vec![vec![4u64, 2], vec![0, 1]],
            vec![vec![4, 3], vec![0, 0]],
            vec![vec![4, 1], vec![0, 2]],
        ];
        let grid = significance_grid(&observed, &nulls).unwrap();
        assert!(grid.z[0][0].is_nan());
        assert!(!grid.significant[0][0]);
        assert!(grid.z[0][1].is_finite());
        // observed == null mean everywhere (with spread) -> z = 0
        let spread = vec![
            vec![vec![3u64, 1], vec![0, 1]],
            vec![vec![5, 3], vec![2, 3]],
        ];
        let flat = significance_grid(&[vec![4u64, 2], vec![1, 2]], &spread).unwrap();
        for row in &flat.z {
            for &zz in row {
                assert_eq!(zz, 0.0);
            }
        }
        assert!(!flat.significant.iter().flatten().any(|&s| s));
    }

    #[test]
    fn significance_is_permutation_invariant() {
        let observed = vec![vec![5u64, 1], vec![2, 3]];
        let nulls = vec![
            vec![vec![3u64, 2], vec![1, 4]],
            vec![vec![5, 1], vec![2, 2]],
            vec![vec![4, 3], vec![3, 1]],
        ];
        let fwd = significance_grid(&observed, &nulls).unwrap();
        let mut rev = nulls.clone();
        rev.reverse();
        let bwd = significance_grid(&observed, &rev).unwrap();
        assert_eq!(fwd.null_mean, bwd.null_mean);
        assert_eq!(fwd.null_std, bwd.null_std);
    }
}
