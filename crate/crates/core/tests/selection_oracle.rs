//! Brute-force oracle for the selection engine.
//!
//! An independent, exhaustively-scanning reimplementation of relevance,
//! scoring, and the percentile filter is compared for exact set equality
//! against the indexed implementation across random probes, every mode, and
//! randomized configs. Scoring follows the same documented conventions
//! (running-product discounts, `lo + frac * (hi - lo)` quantile
//! interpolation), so equality is exact rather than approximate.

use gcttt_core::data::{generate_expert, generate_play, OfflineDataset, WindowIndex};
use gcttt_core::env::{GoalEnv, MazeLayout, PointMaze};
use gcttt_core::nn::ParamStore;
use gcttt_core::select::{
    critic_value, select, RelevanceKind, SelectionBatch, SelectionConfig, SelectionMode, Window,
};
use gcttt_core::seeding;
use rand::Rng;
use std::sync::Arc;

struct Oracle<'a> {
    ds: &'a OfflineDataset,
    v: &'a ParamStore,
    reward_eps: f64,
}

impl<'a> Oracle<'a> {
    fn euclid(a: &[f64], b: &[f64]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    fn window(&self, traj: usize, start: usize, horizon: usize) -> Window {
        let n_states = self.ds.traj(traj).n_states();
        Window {
            traj: traj as u32,
            start: start as u32,
            len: horizon.min(n_states - start) as u32,
        }
    }

    fn every_start(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, traj) in self.ds.trajectories.iter().enumerate() {
            for t in 0..traj.n_states() {
                out.push((i, t));
            }
        }
        out
    }

    fn relevant(&self, s: &[f64], cfg: &SelectionConfig, horizon: usize) -> Vec<Window> {
        self.every_start()
            .into_iter()
            .filter(|&(i, t)| match cfg.relevance {
                RelevanceKind::Distance => {
                    Self::euclid(self.ds.traj(i).state(t), s) < cfg.eps
                }
                RelevanceKind::Value => {
                    critic_value(self.v, s, self.ds.traj(i).state(t)) > cfg.value_c_rel
                }
            })
            .map(|(i, t)| self.window(i, t, horizon))
            .collect()
    }

    fn reward(&self, s: &[f64], g: &[f64]) -> f64 {
        if Self::euclid(s, g) >= self.reward_eps {
            -1.0
        } else {
            0.0
        }
    }

    fn hstep(&self, w: &Window, g: &[f64], gamma: f64) -> f64 {
        let traj = self.ds.traj(w.traj as usize);
        let mut acc = 0.0;
        let mut gpow = 1.0;
        for i in 0..(w.len - 1) as usize {
            acc += gpow * self.reward(traj.state(w.start as usize + i), g);
            gpow *= gamma;
        }
        acc + gpow * critic_value(self.v, traj.state((w.start + w.len - 1) as usize), g)
    }

    fn trajectory_return(&self, w: &Window, g: &[f64], gamma: f64) -> f64 {
        let traj = self.ds.traj(w.traj as usize);
        let mut acc = 0.0;
        let mut gpow = 1.0;
        for i in 0..w.len as usize {
            acc += gpow * self.reward(traj.state(w.start as usize + i), g);
            gpow *= gamma;
        }
        acc
    }

    fn quantile(values: &[f64], level: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = level * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }

    fn filter(&self, windows: Vec<Window>, returns: Vec<f64>, cfg: &SelectionConfig) -> Selected {
        if windows.is_empty() {
            return Selected {
                windows,
                threshold: None,
            };
        }
        let level = if cfg.top_fraction {
            1.0 - cfg.quantile
        } else {
            cfg.quantile
        };
        let c = Self::quantile(&returns, level);
        Selected {
            windows: windows
                .into_iter()
                .zip(returns)
                .filter(|(_, r)| *r >= c)
                .map(|(w, _)| w)
                .collect(),
            threshold: Some(c),
        }
    }

    fn select(&self, s: &[f64], g: &[f64], cfg: &SelectionConfig) -> Selected {
        match cfg.mode {
            SelectionMode::RelevantOnly => Selected {
                windows: self.relevant(s, cfg, cfg.horizon),
                threshold: None,
            },
            SelectionMode::Full => {
                let windows = self.relevant(s, cfg, cfg.horizon);
                let returns: Vec<f64> =
                    windows.iter().map(|w| self.hstep(w, g, cfg.gamma)).collect();
                self.filter(windows, returns, cfg)
            }
            SelectionMode::CriticFree => {
                let windows = self.relevant(s, cfg, cfg.critic_free_horizon());
                let returns: Vec<f64> = windows
                    .iter()
                    .map(|w| self.trajectory_return(w, g, cfg.gamma))
                    .collect();
                self.filter(windows, returns, cfg)
            }
            SelectionMode::OptimalOnly => {
                let windows: Vec<Window> = self
                    .every_start()
                    .into_iter()
                    .map(|(i, t)| self.window(i, t, cfg.horizon))
                    .collect();
                let returns: Vec<f64> =
                    windows.iter().map(|w| self.hstep(w, g, cfg.gamma)).collect();
                self.filter(windows, returns, cfg)
            }
            SelectionMode::Random => unreachable!("random mode is checked by budget only"),
        }
    }
}

struct Selected {
    windows: Vec<Window>,
    threshold: Option<f64>,
}

fn assert_matches(got: &SelectionBatch, want: &Selected, what: &str) {
    let mut want_sorted = want.windows.clone();
    want_sorted.sort();
    assert_eq!(got.windows, want_sorted, "{what}: window sets differ");
    match (got.threshold, want.threshold) {
        (None, None) => {}
        (Some(a), Some(b)) => assert_eq!(a, b, "{what}: thresholds differ"),
        other => panic!("{what}: threshold presence differs: {other:?}"),
    }
}

#[test]
fn select_equals_brute_force_in_every_mode() {
    let layout = Arc::new(MazeLayout::builtin("medium").unwrap());
    let maze = PointMaze::new(layout.clone(), 200);
    // two datasets with different geometry: short play walks and expert runs
    let play = generate_play(&maze, 25, 3, 5, 70).unwrap();
    let expert = generate_expert(&maze, 15, 0.2, 71).unwrap();
    let v = ParamStore::init(7, &[4, 8, 1]).unwrap();
    let mut rng = seeding::rng(1234);

    let modes = [
        SelectionMode::Full,
        SelectionMode::CriticFree,
        SelectionMode::RelevantOnly,
        SelectionMode::OptimalOnly,
    ];
    for (ds_name, ds) in [("play", &play), ("expert", &expert)] {
        let index = WindowIndex::build(ds, 0.5);
        let oracle = Oracle {
            ds,
            v: &v,
            reward_eps: maze.eps(),
        };
        for probe in 0..150 {
            let s = [rng.gen_range(0.5..10.5), rng.gen_range(0.5..10.5)];
            let g = [rng.gen_range(0.5..10.5), rng.gen_range(0.5..10.5)];
            let mut cfg = SelectionConfig::new(modes[probe % modes.len()]);
            cfg.eps = rng.gen_range(0.2..2.0);
            cfg.horizon = rng.gen_range(1..40);
            cfg.quantile = rng.gen_range(0.0..0.9);
            cfg.top_fraction = rng.gen::<f64>() < 0.25;
            if rng.gen::<f64>() < 0.3 {
                cfg.relevance = RelevanceKind::Value;
                cfg.value_c_rel = rng.gen_range(-3.0..0.5);
            }
            let got = select(
                ds,
                &index,
                &s,
                &g,
                Some(&v),
                &cfg,
                maze.eps(),
                &mut seeding::rng(probe as u64),
            )
            .unwrap();
            let want = oracle.select(&s, &g, &cfg);
            assert_matches(&got, &want, &format!("{ds_name} probe {probe} {cfg:?}"));
        }
    }
}

#[test]
fn random_mode_budget_matches_full_brute_force() {
    let layout = Arc::new(MazeLayout::builtin("medium").unwrap());
    let maze = PointMaze::new(layout, 200);
    let ds = generate_play(&maze, 25, 3, 5, 72).unwrap();
    let index = WindowIndex::build(&ds, 0.5);
    let v = ParamStore::init(8, &[4, 8, 1]).unwrap();
    let oracle = Oracle {
        ds: &ds,
        v: &v,
        reward_eps: maze.eps(),
    };
    let mut rng = seeding::rng(4321);
    for probe in 0..60 {
        let s = [rng.gen_range(0.5..10.5), rng.gen_range(0.5..10.5)];
        let g = [rng.gen_range(0.5..10.5), rng.gen_range(0.5..10.5)];
        let mut cfg = SelectionConfig::new(SelectionMode::Random);
        cfg.eps = rng.gen_range(0.3..1.5);
        cfg.horizon = rng.gen_range(2..30);
        let got = select(
            &ds,
            &index,
            &s,
            &g,
            Some(&v),
            &cfg,
            maze.eps(),
            &mut seeding::rng(probe),
        )
        .unwrap();
        let mut full_cfg = cfg.clone();
        full_cfg.mode = SelectionMode::Full;
        let want = oracle.select(&s, &g, &full_cfg);
        assert_eq!(got.n_selected(), want.windows.len(), "probe {probe}");
        // sampled without replacement: all windows distinct
        let mut seen = got.windows.clone();
        seen.dedup();
        assert_eq!(seen.len(), got.windows.len());
    }
}

#[test]
fn quantile_retention_fraction_is_tight() {
    // distinct returns at q = 0.2: the retained count sits within one
    // window of 80% (floor(0.8 n) .. 0.8 n + 1)
    let mut rng = seeding::rng(9);
    for n in [5usize, 6, 7, 11, 102, 357] {
        let mut returns: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for r in returns.iter_mut() {
            *r += rng.gen_range(0.0..0.5);
        }
        let windows: Vec<Window> = (0..n)
            .map(|i| Window {
                traj: 0,
                start: i as u32,
                len: 2,
            })
            .collect();
        let cfg = SelectionConfig::new(SelectionMode::Full);
        let out = gcttt_core::select::optimality_filter(windows, returns, &cfg);
        let kept = out.n_selected() as f64;
        assert!(
            kept >= (0.8 * n as f64).floor() && kept <= 0.8 * n as f64 + 1.0,
            "n = {n}: kept {kept}"
        );
    }
}
