//! Uniform spatial hash over sub-trajectory start states.
//!
//! Every `(trajectory, offset)` pair — offsets include every stored state,
//! not just trajectory heads — is bucketed by its start-state cell. Ball
//! queries gather the buckets overlapping the query square and filter by
//! exact distance, so results are exactly the linear-scan set
//! `{(i, t) : d(s, states[i][t]) < eps}` at hash-lookup cost.

use super::OfflineDataset;
use crate::env::distance;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct WindowIndex {
    bucket_edge: f64,
    buckets: HashMap<(i64, i64), Vec<(u32, u32)>>,
    n_entries: usize,
}

impl WindowIndex {
    /// Builds the index with the given bucket edge length (normally the
    /// default relevance radius).
    pub fn build(ds: &OfflineDataset, bucket_edge: f64) -> Self {
        assert!(
            bucket_edge > 0.0 && bucket_edge.is_finite(),
            "bucket edge must be positive"
        );
        let mut buckets: HashMap<(i64, i64), Vec<(u32, u32)>> = HashMap::new();
        let mut n_entries = 0;
        for (i, traj) in ds.trajectories.iter().enumerate() {
            for t in 0..traj.n_states() {
                let s = traj.state(t);
                let key = (
                    (s[0] / bucket_edge).floor() as i64,
                    (s[1] / bucket_edge).floor() as i64,
                );
                buckets.entry(key).or_default().push((i as u32, t as u32));
                n_entries += 1;
            }
        }
        Self {
            bucket_edge,
            buckets,
            n_entries,
        }
    }

    pub fn len(&self) -> usize {
        self.n_entries
    }

    pub fn is_empty(&self) -> bool {
        self.n_entries == 0
    }

    /// All window starts strictly within `eps` of `s`, sorted by
    /// `(trajectory, offset)`.
    pub fn query_ball(&self, ds: &OfflineDataset, s: &[f64], eps: f64) -> Vec<(u32, u32)> {
        assert!(eps > 0.0, "query radius must be positive");
        let lo_x = ((s[0] - eps) / self.bucket_edge).floor() as i64;
        let hi_x = ((s[0] + eps) / self.bucket_edge).floor() as i64;
        let lo_y = ((s[1] - eps) / self.bucket_edge).floor() as i64;
        let hi_y = ((s[1] + eps) / self.bucket_edge).floor() as i64;
        let mut out = Vec::new();
        for kx in lo_x..=hi_x {
            for ky in lo_y..=hi_y {
                if let Some(entries) = self.buckets.get(&(kx, ky)) {
                    for &(i, t) in entries {
                        let state = ds.traj(i as usize).state(t as usize);
                        if distance(state, s) < eps {
                            out.push((i, t));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_play;
    use crate::env::{GridMaze, MazeLayout, PointMaze};
    use rand::Rng;
    use std::sync::Arc;

    fn dataset() -> OfflineDataset {
        let maze = PointMaze::new(Arc::new(MazeLayout::builtin("medium").unwrap()), 300);
        generate_play(&maze, 40, 3, 5, 21).unwrap()
    }

    /// Exhaustive reference: scan every (trajectory, offset).
    fn linear_scan(ds: &OfflineDataset, s: &[f64], eps: f64) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (i, traj) in ds.trajectories.iter().enumerate() {
            for t in 0..traj.n_states() {
                if distance(traj.state(t), s) < eps {
                    out.push((i as u32, t as u32));
                }
            }
        }
        out
    }

    #[test]
    fn query_matches_linear_scan_on_random_probes() {
        let ds = dataset();
        let index = WindowIndex::build(&ds, 0.5);
        let mut rng = crate::seeding::rng(33);
        for _ in 0..1000 {
            let s = [rng.gen_range(0.0..11.0), rng.gen_range(0.0..11.0)];
            let eps = rng.gen_range(0.05..3.0);
            assert_eq!(index.query_ball(&ds, &s, eps), linear_scan(&ds, &s, eps));
        }
    }

    #[test]
    fn huge_radius_returns_every_entry() {
        let ds = dataset();
        let index = WindowIndex::build(&ds, 0.5);
        let hits = index.query_ball(&ds, &[5.5, 5.5], 1e6);
        assert_eq!(hits.len(), index.len());
        assert_eq!(hits.len(), ds.n_states());
    }

    #[test]
    fn tiny_radius_hits_only_exact_matches() {
        let maze = GridMaze::new(Arc::new(MazeLayout::builtin("medium").unwrap()), 300);
        let ds = crate::data::generate_expert(&maze, 10, 0.0, 3).unwrap();
        let index = WindowIndex::build(&ds, 0.5);
        // grid states are cell centers: a sub-cell radius finds exactly the
        // states equal to the probe
        let probe = ds.traj(0).state(0);
        let hits = index.query_ball(&ds, probe, 1e-9);
        assert!(!hits.is_empty());
        for (i, t) in hits {
            assert_eq!(ds.traj(i as usize).state(t as usize), probe);
        }
    }
}
