//! Transfers noise between two shapes that share part of their structure.
//!
//! Every noise entry is identified by the level's distance from the top,
//! its kind and width, and the group indices on the path from the top level
//! down to it. Entries whose identity exists in both shapes keep their
//! values; the rest of the new tree is drawn from the prior. Scales are
//! matched the same way by `(distance from top, kind)`.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::grammar::Shape;
use crate::wreath_process::{
    layout, log_density_entry, log_prior_sigma, sample_entry, sample_sigma, LevelNoise,
    NoiseConfig, NoiseHyper, NoiseKind, NoiseTree,
};

const CONTINUOUS: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct EntryKey {
    depth: usize,
    kind: NoiseKind,
    width: usize,
    path: Vec<u64>,
}

/// Keys of the entries of every level, in entry order.
fn entry_keys(s: &Shape, cfg: &NoiseConfig) -> Vec<Vec<EntryKey>> {
    let lay = layout(s, cfg);
    let n = s.levels.len();
    let mut out = vec![Vec::new(); n];
    let mut paths: Vec<Vec<u64>> = vec![Vec::new()];
    for m in (0..n).rev() {
        let lvl = &s.levels[m];
        let digits: Vec<u64> = if lvl.is_continuous() {
            vec![CONTINUOUS]
        } else {
            lvl.indices().iter().map(|v| v.to_bits()).collect()
        };
        let mut next = Vec::with_capacity(paths.len() * digits.len());
        for p in &paths {
            for d in &digits {
                let mut q = p.clone();
                q.push(*d);
                next.push(q);
            }
        }
        paths = next;
        if lay[m].kind != NoiseKind::Silent {
            out[m] = paths
                .iter()
                .map(|p| EntryKey {
                    depth: n - 1 - m,
                    kind: lay[m].kind,
                    width: lay[m].width,
                    path: p.clone(),
                })
                .collect();
        }
    }
    out
}

/// Outcome of moving noise onto a new shape.
pub struct Carried {
    pub hyper: NoiseHyper,
    pub noise: NoiseTree,
    /// `log q` of everything freshly drawn.
    pub log_added: f64,
    /// Prior log density of everything discarded.
    pub log_dropped: f64,
    pub dim_added: usize,
    pub dim_dropped: usize,
}

pub fn carry<R: Rng + ?Sized>(
    old_shape: &Shape,
    old_hyper: &NoiseHyper,
    old_noise: &NoiseTree,
    new_shape: &Shape,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Carried {
    let n_old = old_shape.levels.len();
    let n_new = new_shape.levels.len();
    let old_lay = layout(old_shape, cfg);
    let new_lay = layout(new_shape, cfg);

    let mut old_sigma: HashMap<(usize, NoiseKind), f64> = HashMap::new();
    for (m, s) in old_hyper.sigma.iter().enumerate() {
        if let Some(v) = s {
            old_sigma.insert((n_old - 1 - m, old_lay[m].kind), *v);
        }
    }
    let mut log_added = 0.0;
    let mut log_dropped = 0.0;
    let mut dim_added = 0;
    let mut dim_dropped = 0;

    let mut used_sigma: HashSet<(usize, NoiseKind)> = HashSet::new();
    let mut sigma = Vec::with_capacity(n_new);
    for (m, lay) in new_lay.iter().enumerate() {
        if lay.kind == NoiseKind::Silent {
            sigma.push(None);
            continue;
        }
        let key = (n_new - 1 - m, lay.kind);
        match old_sigma.get(&key) {
            Some(v) => {
                used_sigma.insert(key);
                sigma.push(Some(*v));
            }
            None => {
                let v = sample_sigma(lay.kind, cfg, rng).expect("noise-bearing kind");
                log_added += log_prior_sigma(lay.kind, v, cfg);
                dim_added += 1;
                sigma.push(Some(v));
            }
        }
    }
    // level order keeps the floating-point sum reproducible
    for (m, s) in old_hyper.sigma.iter().enumerate() {
        if let Some(v) = s {
            let key = (n_old - 1 - m, old_lay[m].kind);
            if !used_sigma.contains(&key) {
                log_dropped += log_prior_sigma(key.1, *v, cfg);
                dim_dropped += 1;
            }
        }
    }

    let old_keys = entry_keys(old_shape, cfg);
    let mut old_values: HashMap<&EntryKey, (usize, usize)> = HashMap::new();
    for (m, keys) in old_keys.iter().enumerate() {
        for (j, k) in keys.iter().enumerate() {
            old_values.insert(k, (m, j));
        }
    }
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let new_keys = entry_keys(new_shape, cfg);
    let mut levels = Vec::with_capacity(n_new);
    for (m, lay) in new_lay.iter().enumerate() {
        let mut values = Vec::with_capacity(lay.entries * lay.width);
        if let Some(s) = sigma[m] {
            for key in &new_keys[m] {
                match old_values.get(key) {
                    Some(&(om, oj)) => {
                        used.insert((om, oj));
                        values.extend_from_slice(old_noise.levels[om].entry(oj));
                    }
                    None => {
                        for _ in 0..lay.width {
                            let e = sample_entry(lay.kind, s, rng);
                            log_added += log_density_entry(lay.kind, s, e);
                            values.push(e);
                        }
                        dim_added += lay.width;
                    }
                }
            }
        }
        levels.push(LevelNoise {
            kind: lay.kind,
            width: lay.width,
            values,
        });
    }
    for (m, keys) in old_keys.iter().enumerate() {
        let Some(s) = old_hyper.sigma.get(m).copied().flatten() else {
            continue;
        };
        for j in 0..keys.len() {
            if !used.contains(&(m, j)) {
                for e in old_noise.levels[m].entry(j) {
                    log_dropped += log_density_entry(old_lay[m].kind, s, *e);
                }
                dim_dropped += old_lay[m].width;
            }
        }
    }
    Carried {
        hyper: NoiseHyper { sigma },
        noise: NoiseTree { levels },
        log_added,
        log_dropped,
        dim_added,
        dim_dropped,
    }
}
