//! Minimum-energy labelings: exact branch-and-bound enumeration up to a node
//! cap, multistart iterated conditional modes above it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{diff_index, Mode, WeightVector};
use crate::error::{Error, Result};
use crate::features::MrfInstance;

/// Largest node count solved by enumeration.
pub const DEFAULT_CAP: usize = 6;
/// Random starts used by the approximate solver, besides the all-zero start.
pub const ICM_RESTARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceConfig {
    pub cap: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub labels: Vec<u8>,
    /// Value of the minimized objective: the energy, or energy minus loss
    /// for loss-augmented inference.
    pub objective: f64,
    /// `false` when the approximate solver was used.
    pub exact: bool,
}

/// Unary and pairwise cost tables of one instance.
struct Tables {
    levels: usize,
    unary: Vec<Vec<f64>>,
    /// `(a, b, table)` with `a < b` and `table[la * levels + lb]`.
    pairs: Vec<(usize, usize, Vec<f64>)>,
}

impl Tables {
    fn build(inst: &MrfInstance, w: &WeightVector) -> Result<Self> {
        let layout = &w.layout;
        if inst.shape != layout.shape {
            return Err(Error::argument(format!("instance `{}` does not match the weight layout", inst.id)));
        }
        let n = inst.node_count();
        if n == 0 {
            return Err(Error::argument(format!("instance `{}` has no nodes", inst.id)));
        }
        let mode = layout.mode;
        let (nl, ml) = (mode.node_levels(), mode.diff_levels());
        let node_cost = |features: &[f64], offset: usize| -> Vec<f64> {
            (0..nl)
                .map(|l| {
                    features
                        .iter()
                        .enumerate()
                        .filter(|(_, x)| **x != 0.0)
                        .map(|(k, x)| w.values[offset + k * nl + l] * x)
                        .sum()
                })
                .collect()
        };
        let mut unary: Vec<Vec<f64>> = inst.objects.iter().map(|o| node_cost(&o.features, 0)).collect();
        if let Some(s) = &inst.scene {
            unary.push(node_cost(&s.features, layout.scene_node_offset()));
        }
        let pair_table = |terms: &[(usize, f64)]| -> Vec<f64> {
            let mut t = vec![0.0; nl * nl];
            for la in 0..nl {
                for lb in 0..nl {
                    let m = diff_index(la as u8, lb as u8, mode);
                    t[la * nl + lb] = terms.iter().map(|&(base, x)| w.values[base + m] * x).sum();
                }
            }
            t
        };
        let eo = layout.object_edge_offset();
        let p = layout.shape.object_pairs();
        let mut pairs: Vec<(usize, usize, Vec<f64>)> = inst
            .object_edges
            .iter()
            .map(|e| {
                let terms = [
                    (eo + e.pair * ml, e.size_diff),
                    (eo + (p + e.pair) * ml, e.distance_diff),
                ];
                (e.i, e.j, pair_table(&terms))
            })
            .collect();
        let es = layout.scene_edge_offset();
        let s = inst.objects.len();
        for e in &inst.scene_edges {
            pairs.push((e.i, s, pair_table(&[(es + e.pair * ml, e.size)])));
        }
        Ok(Self { levels: nl, unary, pairs })
    }

    fn add_loss(&mut self, y_true: &[u8], mode: Mode) {
        let n = self.unary.len() as f64;
        for (u, &t) in self.unary.iter_mut().zip(y_true) {
            for (l, c) in u.iter_mut().enumerate() {
                *c -= (mode.value(l as u8) - mode.value(t)).abs() / n;
            }
        }
    }

    fn objective(&self, labels: &[u8]) -> f64 {
        let mut e: f64 = self.unary.iter().zip(labels).map(|(u, &l)| u[l as usize]).sum();
        for (a, b, t) in &self.pairs {
            e += t[labels[*a] as usize * self.levels + labels[*b] as usize];
        }
        e
    }

    /// Exhaustive minimization in lexicographic order; branches whose lower
    /// bound cannot beat the incumbent are skipped, which keeps the first
    /// (lexicographically smallest) minimizer.
    fn enumerate(&self) -> (Vec<u8>, f64) {
        let n = self.unary.len();
        let nl = self.levels;
        // neighbours[b] = pair tables (a, table) with a < b.
        let mut earlier: Vec<Vec<(usize, &Vec<f64>)>> = vec![Vec::new(); n];
        for (a, b, t) in &self.pairs {
            earlier[*b].push((*a, t));
        }
        // Lower bound of the pairwise terms among nodes >= k.
        let mut pair_min_suffix = vec![0.0; n + 1];
        for k in (0..n).rev() {
            let local: f64 = self
                .pairs
                .iter()
                .filter(|(a, _, _)| *a == k)
                .map(|(_, _, t)| t.iter().copied().fold(f64::INFINITY, f64::min))
                .sum();
            pair_min_suffix[k] = pair_min_suffix[k + 1] + local;
        }
        let mut best = (vec![0u8; n], f64::INFINITY);
        let mut labels = vec![0u8; n];
        let mut cond = vec![0.0; nl];

        struct Ctx<'a> {
            tables: &'a Tables,
            earlier: &'a [Vec<(usize, &'a Vec<f64>)>],
            pair_min_suffix: &'a [f64],
        }

        fn bound(ctx: &Ctx, k: usize, labels: &[u8], cond: &mut [f64]) -> f64 {
            // Each free node at its best level given the assigned prefix.
            let nl = ctx.tables.levels;
            let mut b = ctx.pair_min_suffix[k];
            for m in k..ctx.tables.unary.len() {
                cond.copy_from_slice(&ctx.tables.unary[m]);
                for &(a, t) in &ctx.earlier[m] {
                    if a < k {
                        let la = labels[a] as usize;
                        for (l, c) in cond.iter_mut().enumerate() {
                            *c += t[la * nl + l];
                        }
                    }
                }
                b += cond.iter().copied().fold(f64::INFINITY, f64::min);
            }
            b
        }

        fn dfs(ctx: &Ctx, k: usize, partial: f64, labels: &mut [u8], cond: &mut [f64], best: &mut (Vec<u8>, f64)) {
            let n = ctx.tables.unary.len();
            if k == n {
                if partial < best.1 {
                    best.0.copy_from_slice(labels);
                    best.1 = partial;
                }
                return;
            }
            let nl = ctx.tables.levels;
            for l in 0..nl {
                let mut inc = ctx.tables.unary[k][l];
                for &(a, t) in &ctx.earlier[k] {
                    inc += t[labels[a] as usize * nl + l];
                }
                labels[k] = l as u8;
                let p = partial + inc;
                if k + 1 < n && best.1.is_finite() && p + bound(ctx, k + 1, labels, cond) >= best.1 {
                    continue;
                }
                dfs(ctx, k + 1, p, labels, cond, best);
            }
            labels[k] = 0;
        }

        let ctx = Ctx {
            tables: self,
            earlier: &earlier,
            pair_min_suffix: &pair_min_suffix,
        };
        dfs(&ctx, 0, 0.0, &mut labels, &mut cond, &mut best);
        let obj = self.objective(&best.0);
        (best.0, obj)
    }

    fn icm_from(&self, start: Vec<u8>) -> (Vec<u8>, f64) {
        let n = self.unary.len();
        let nl = self.levels;
        let mut labels = start;
        loop {
            let mut changed = false;
            for k in 0..n {
                let mut best_l = labels[k];
                let mut best_c = f64::INFINITY;
                for l in 0..nl {
                    let mut c = self.unary[k][l];
                    for (a, b, t) in &self.pairs {
                        if *a == k {
                            c += t[l * nl + labels[*b] as usize];
                        } else if *b == k {
                            c += t[labels[*a] as usize * nl + l];
                        }
                    }
                    if c < best_c {
                        best_c = c;
                        best_l = l as u8;
                    }
                }
                if best_l != labels[k] {
                    // Only move on strict improvement so the descent terminates.
                    let mut trial = labels.clone();
                    trial[k] = best_l;
                    if self.objective(&trial) < self.objective(&labels) {
                        labels = trial;
                        changed = true;
                    }
                }
            }
            if !changed {
                let e = self.objective(&labels);
                return (labels, e);
            }
        }
    }

    fn icm(&self, seed: u64) -> (Vec<u8>, f64) {
        let n = self.unary.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = self.icm_from(vec![0; n]);
        for _ in 0..ICM_RESTARTS {
            let start = (0..n).map(|_| rng.random_range(0..self.levels as u8)).collect();
            let cand = self.icm_from(start);
            if cand.1 < best.1 || (cand.1 == best.1 && cand.0 < best.0) {
                best = cand;
            }
        }
        best
    }

    fn solve(&self, cfg: &InferenceConfig) -> Inference {
        let exact = self.unary.len() <= cfg.cap;
        let (labels, objective) = if exact { self.enumerate() } else { self.icm(cfg.seed) };
        Inference {
            labels,
            objective,
            exact,
        }
    }
}

/// Minimum-energy labeling; ties go to the lexicographically smallest levels.
pub fn infer(inst: &MrfInstance, w: &WeightVector, cfg: &InferenceConfig) -> Result<Inference> {
    Ok(Tables::build(inst, w)?.solve(cfg))
}

/// Labeling maximizing `MAD(y_true, y) - energy(y)`; the returned objective
/// is the minimized `energy(y) - MAD(y_true, y)`.
pub fn loss_augmented_infer(inst: &MrfInstance, y_true: &[u8], w: &WeightVector, cfg: &InferenceConfig) -> Result<Inference> {
    let mut t = Tables::build(inst, w)?;
    if y_true.len() != inst.node_count() {
        return Err(Error::argument(format!(
            "{} true labels for {} nodes of `{}`",
            y_true.len(),
            inst.node_count(),
            inst.id
        )));
    }
    if y_true.iter().any(|&l| l as usize >= t.levels) {
        return Err(Error::argument("true label outside the level set"));
    }
    t.add_loss(y_true, w.layout.mode);
    Ok(t.solve(cfg))
}
