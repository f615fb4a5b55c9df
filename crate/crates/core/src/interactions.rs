//! Implicit-feedback interaction datasets.
//!
//! Datasets are loaded from plain-text adjacency files (one user per line,
//! `user_id item_1 ... item_k`, the NGCF/LightGCN benchmark layout). External
//! ids are re-indexed densely over the union of the train and test files;
//! the raw-id maps are kept so they can be persisted next to derived outputs.
//!
//! All per-user and per-item statistics (`d_u`, `d_i`, popularity preference
//! `p_u`, quadrants, CCDFs) are computed from train edges only.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bipartite user-item interaction dataset with a train/test split.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    n: usize,
    m: usize,
    train_edges: Vec<(u32, u32)>,
    test_edges: Vec<(u32, u32)>,
    /// Per-user sorted train items (`N_u`).
    neighbors: Vec<Vec<u32>>,
    /// Per-user sorted test items.
    test_neighbors: Vec<Vec<u32>>,
    user_degree: Vec<u32>,
    item_degree: Vec<u32>,
    /// Dense index -> raw external id. Identity when built from dense edges.
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

/// Which of the four activity/preference quadrants a user falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    PowerMainstream,
    PowerNiche,
    LightMainstream,
    LightNiche,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::PowerMainstream,
        Quadrant::PowerNiche,
        Quadrant::LightMainstream,
        Quadrant::LightNiche,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Quadrant::PowerMainstream => "power_mainstream",
            Quadrant::PowerNiche => "power_niche",
            Quadrant::LightMainstream => "light_mainstream",
            Quadrant::LightNiche => "light_niche",
        }
    }

    pub fn is_power(&self) -> bool {
        matches!(self, Quadrant::PowerMainstream | Quadrant::PowerNiche)
    }

    pub fn is_niche(&self) -> bool {
        matches!(self, Quadrant::PowerNiche | Quadrant::LightNiche)
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Activity level, popularity preference, and quadrant of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user: u32,
    /// Train degree `d_u`.
    pub activity: u32,
    /// Mean train degree of the user's train items (`p_u`).
    pub pop_preference: f64,
    pub quadrant: Quadrant,
}

/// Load a dataset from benchmark adjacency files.
///
/// Duplicate `(u, i)` pairs collapse to one edge (binary feedback). Users and
/// items are indexed densely, in ascending raw-id order, over the union of
/// both files. A test edge whose user never appears in train is kept with a
/// warning; an empty file is an error; a test edge duplicating a train edge
/// is an error.
pub fn load_dataset(train_path: &Path, test_path: &Path) -> Result<InteractionDataset> {
    let train_raw = parse_adjacency(train_path)?;
    let test_raw = parse_adjacency(test_path)?;
    if train_raw.is_empty() {
        return Err(Error::EmptyFile(train_path.to_path_buf()));
    }
    if test_raw.is_empty() {
        return Err(Error::EmptyFile(test_path.to_path_buf()));
    }

    let mut raw_users: Vec<u64> = train_raw
        .iter()
        .chain(test_raw.iter())
        .map(|&(u, _)| u)
        .collect();
    raw_users.sort_unstable();
    raw_users.dedup();
    let mut raw_items: Vec<u64> = train_raw
        .iter()
        .chain(test_raw.iter())
        .map(|&(_, i)| i)
        .collect();
    raw_items.sort_unstable();
    raw_items.dedup();

    let user_index: HashMap<u64, u32> = raw_users
        .iter()
        .enumerate()
        .map(|(idx, &raw)| (raw, idx as u32))
        .collect();
    let item_index: HashMap<u64, u32> = raw_items
        .iter()
        .enumerate()
        .map(|(idx, &raw)| (raw, idx as u32))
        .collect();

    let train_users_raw: std::collections::HashSet<u64> =
        train_raw.iter().map(|&(u, _)| u).collect();
    let mut orphan_test_users = 0usize;
    for &(u, _) in &test_raw {
        if !train_users_raw.contains(&u) {
            orphan_test_users += 1;
        }
    }
    if orphan_test_users > 0 {
        log::warn!(
            "{}: {} test edge(s) reference users with no train interactions; kept",
            test_path.display(),
            orphan_test_users
        );
    }

    let map = |raw: &[(u64, u64)]| -> Vec<(u32, u32)> {
        raw.iter()
            .map(|&(u, i)| (user_index[&u], item_index[&i]))
            .collect()
    };
    InteractionDataset::new(
        raw_users.len(),
        raw_items.len(),
        map(&train_raw),
        map(&test_raw),
        raw_users,
        raw_items,
    )
}

fn parse_adjacency(path: &Path) -> Result<Vec<(u64, u64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut tokens = line.split_ascii_whitespace();
        let Some(user_tok) = tokens.next() else {
            continue; // blank line
        };
        let user: u64 = user_tok.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            token: user_tok.to_string(),
        })?;
        for tok in tokens {
            let item: u64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                token: tok.to_string(),
            })?;
            edges.push((user, item));
        }
    }
    Ok(edges)
}

impl InteractionDataset {
    /// Build a dataset from dense (already 0-indexed) edge lists.
    ///
    /// `user_ids`/`item_ids` map dense indices back to raw ids and default to
    /// the identity via [`InteractionDataset::from_dense_edges`].
    pub fn new(
        n: usize,
        m: usize,
        mut train_edges: Vec<(u32, u32)>,
        mut test_edges: Vec<(u32, u32)>,
        user_ids: Vec<u64>,
        item_ids: Vec<u64>,
    ) -> Result<Self> {
        for &(u, i) in train_edges.iter().chain(test_edges.iter()) {
            if u as usize >= n || i as usize >= m {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {i}) out of bounds for {n} users x {m} items"
                )));
            }
        }
        train_edges.sort_unstable();
        train_edges.dedup();
        test_edges.sort_unstable();
        test_edges.dedup();

        // Train and test must stay disjoint; a shared edge leaks labels.
        {
            let mut ti = 0usize;
            for &e in &test_edges {
                while ti < train_edges.len() && train_edges[ti] < e {
                    ti += 1;
                }
                if ti < train_edges.len() && train_edges[ti] == e {
                    let raw_u = user_ids.get(e.0 as usize).copied().unwrap_or(e.0 as u64);
                    let raw_i = item_ids.get(e.1 as usize).copied().unwrap_or(e.1 as u64);
                    return Err(Error::TestEdgeInTrain {
                        user: raw_u,
                        item: raw_i,
                    });
                }
            }
        }

        let mut neighbors = vec![Vec::new(); n];
        let mut test_neighbors = vec![Vec::new(); n];
        let mut user_degree = vec![0u32; n];
        let mut item_degree = vec![0u32; m];
        for &(u, i) in &train_edges {
            neighbors[u as usize].push(i);
            user_degree[u as usize] += 1;
            item_degree[i as usize] += 1;
        }
        for &(u, i) in &test_edges {
            test_neighbors[u as usize].push(i);
        }
        // train_edges is sorted, so each neighbor list is already sorted.

        debug_assert_eq!(
            user_degree.iter().map(|&d| d as usize).sum::<usize>(),
            train_edges.len()
        );

        Ok(Self {
            n,
            m,
            train_edges,
            test_edges,
            neighbors,
            test_neighbors,
            user_degree,
            item_degree,
            user_ids,
            item_ids,
        })
    }

    /// Dense-edge constructor with identity id maps.
    pub fn from_dense_edges(
        n: usize,
        m: usize,
        train_edges: Vec<(u32, u32)>,
        test_edges: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let user_ids = (0..n as u64).collect();
        let item_ids = (0..m as u64).collect();
        Self::new(n, m, train_edges, test_edges, user_ids, item_ids)
    }

    /// Rebuild with the same index space and id maps but different splits
    /// (e.g. carving a validation set out of the train edges).
    pub fn re_split(
        &self,
        train_edges: Vec<(u32, u32)>,
        test_edges: Vec<(u32, u32)>,
    ) -> Result<Self> {
        Self::new(
            self.n,
            self.m,
            train_edges,
            test_edges,
            self.user_ids.clone(),
            self.item_ids.clone(),
        )
    }

    pub fn num_users(&self) -> usize {
        self.n
    }

    pub fn num_items(&self) -> usize {
        self.m
    }

    pub fn train_edges(&self) -> &[(u32, u32)] {
        &self.train_edges
    }

    pub fn test_edges(&self) -> &[(u32, u32)] {
        &self.test_edges
    }

    /// Sorted train items of `u` (`N_u`).
    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.neighbors[u as usize]
    }

    /// Sorted test items of `u`.
    pub fn test_items(&self, u: u32) -> &[u32] {
        &self.test_neighbors[u as usize]
    }

    pub fn user_degree(&self, u: u32) -> u32 {
        self.user_degree[u as usize]
    }

    pub fn item_degree(&self, i: u32) -> u32 {
        self.item_degree[i as usize]
    }

    pub fn user_degrees(&self) -> &[u32] {
        &self.user_degree
    }

    pub fn item_degrees(&self) -> &[u32] {
        &self.item_degree
    }

    pub fn raw_user_id(&self, u: u32) -> u64 {
        self.user_ids[u as usize]
    }

    pub fn raw_item_id(&self, i: u32) -> u64 {
        self.item_ids[i as usize]
    }

    pub fn is_train_item(&self, u: u32, i: u32) -> bool {
        self.neighbors[u as usize].binary_search(&i).is_ok()
    }

    /// Mean train degree of the items `u` interacted with (`p_u`).
    ///
    /// Undefined for users with no train interactions.
    pub fn pop_preference(&self, u: u32) -> Result<f64> {
        let items = &self.neighbors[u as usize];
        if items.is_empty() {
            return Err(Error::UndefinedPreference(u as usize));
        }
        let sum: u64 = items.iter().map(|&i| self.item_degree[i as usize] as u64).sum();
        Ok(sum as f64 / items.len() as f64)
    }

    /// Quadrant profiles for every user with at least one train interaction.
    ///
    /// The activity and preference means are computed after excluding
    /// zero-degree users. A user is Power iff `d_u` is strictly above the
    /// mean activity and Niche iff `p_u` is strictly below the mean
    /// preference; ties land on the Light / Mainstream side.
    pub fn assign_quadrants(&self) -> Vec<UserProfile> {
        let eligible: Vec<u32> = (0..self.n as u32)
            .filter(|&u| self.user_degree[u as usize] > 0)
            .collect();
        if eligible.is_empty() {
            return Vec::new();
        }
        let excluded = self.n - eligible.len();
        if excluded > 0 {
            log::info!("{excluded} user(s) with no train interactions excluded from quadrants");
        }

        let prefs: Vec<f64> = eligible
            .iter()
            .map(|&u| self.pop_preference(u).expect("eligible user has d_u >= 1"))
            .collect();
        let mean_activity = eligible
            .iter()
            .map(|&u| self.user_degree[u as usize] as f64)
            .sum::<f64>()
            / eligible.len() as f64;
        let mean_pref = prefs.iter().sum::<f64>() / prefs.len() as f64;

        eligible
            .iter()
            .zip(&prefs)
            .map(|(&u, &p)| {
                let d = self.user_degree[u as usize];
                let power = (d as f64) > mean_activity;
                let niche = p < mean_pref;
                let quadrant = match (power, niche) {
                    (true, true) => Quadrant::PowerNiche,
                    (true, false) => Quadrant::PowerMainstream,
                    (false, true) => Quadrant::LightNiche,
                    (false, false) => Quadrant::LightMainstream,
                };
                UserProfile {
                    user: u,
                    activity: d,
                    pop_preference: p,
                    quadrant,
                }
            })
            .collect()
    }

    /// Complementary CDF of activity levels within a user group.
    ///
    /// Returns `(x, frac)` pairs for each distinct degree `x` in the group,
    /// ascending in `x`, where `frac` is the fraction of group users with
    /// `d_u >= x`. The first fraction is always 1.
    pub fn activity_ccdf(&self, group: &[u32]) -> Result<Vec<(u32, f64)>> {
        if group.is_empty() {
            return Err(Error::InvalidArgument("CCDF of an empty group".into()));
        }
        let mut degrees: Vec<u32> = group.iter().map(|&u| self.user_degree(u)).collect();
        degrees.sort_unstable();
        let total = degrees.len() as f64;
        let mut out = Vec::new();
        let mut idx = 0usize;
        while idx < degrees.len() {
            let x = degrees[idx];
            // all users from idx onward have degree >= x
            out.push((x, (degrees.len() - idx) as f64 / total));
            while idx < degrees.len() && degrees[idx] == x {
                idx += 1;
            }
        }
        Ok(out)
    }
}
