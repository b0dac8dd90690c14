//! Working-set quadratic program of the one-slack formulation:
//!
//! `min ½‖w‖² + Cξ  s.t.  w·a_k ≥ b_k − ξ, ξ ≥ 0`.
//!
//! Solved in the dual over `{α ≥ 0, Σα ≤ C}` by pairwise (SMO) steps; the
//! inequality is turned into an equality with an extra slack coordinate whose
//! constraint vector and offset are zero.

use crate::error::{Error, Result};

const KKT_TOL: f64 = 1e-10;
const MAX_STEPS_PER_CONSTRAINT: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub w: Vec<f64>,
    pub xi: f64,
    pub alpha: Vec<f64>,
    /// Dual objective (equal to the primal optimum at convergence).
    pub dual_objective: f64,
    pub primal_objective: f64,
    /// Largest KKT gap left by the solver.
    pub kkt_residual: f64,
}

/// Incrementally grown working set with a warm-started dual.
#[derive(Debug, Clone)]
pub struct WorkingSetQp {
    c: f64,
    constraints: Vec<Constraint>,
    gram: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    /// Dual mass on the slack coordinate.
    alpha_slack: f64,
    /// Running dual objective; only ever increased.
    dual: f64,
}

impl WorkingSetQp {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::argument(format!("C must be positive and finite, got {c}")));
        }
        Ok(Self {
            c,
            constraints: Vec::new(),
            gram: Vec::new(),
            alpha: Vec::new(),
            alpha_slack: c,
            dual: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn add(&mut self, constraint: Constraint) -> Result<()> {
        if let Some(first) = self.constraints.first() {
            if first.a.len() != constraint.a.len() {
                return Err(Error::argument("constraints of different dimensions"));
            }
        }
        if !constraint.b.is_finite() || constraint.a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite constraint".into()));
        }
        let row: Vec<f64> = self
            .constraints
            .iter()
            .map(|k| dot(&k.a, &constraint.a))
            .chain(std::iter::once(dot(&constraint.a, &constraint.a)))
            .collect();
        for (g, &v) in self.gram.iter_mut().zip(&row) {
            g.push(v);
        }
        self.gram.push(row);
        self.constraints.push(constraint);
        self.alpha.push(0.0);
        Ok(())
    }

    /// Gradient of the dual; the slack coordinate has gradient zero.
    fn gradient(&self) -> Vec<f64> {
        (0..self.alpha.len())
            .map(|k| {
                self.constraints[k].b - self.gram[k].iter().zip(&self.alpha).map(|(g, a)| g * a).sum::<f64>()
            })
            .collect()
    }

    pub fn solve(&mut self) -> Result<QpSolution> {
        let m = self.alpha.len();
        let mut g = self.gradient();
        const SLACK: usize = usize::MAX;
        let budget = MAX_STEPS_PER_CONSTRAINT * (m + 1);
        let mut gap = 0.0;
        for _ in 0..budget {
            // Ascent direction: raise the coordinate with the largest gradient,
            // lower the positive one with the smallest.
            let (mut up, mut g_up) = (SLACK, 0.0);
            let (mut down, mut g_down) = (SLACK, if self.alpha_slack > 0.0 { 0.0 } else { f64::INFINITY });
            for k in 0..m {
                if g[k] > g_up {
                    up = k;
                    g_up = g[k];
                }
                if self.alpha[k] > 0.0 && g[k] < g_down {
                    down = k;
                    g_down = g[k];
                }
            }
            gap = g_up - g_down;
            let scale = 1.0 + g_up.abs().max(g_down.abs());
            if !(gap > KKT_TOL * scale) || up == down {
                return Ok(self.solution(gap.max(0.0)));
            }
            let gk = |i: usize, j: usize| if i == SLACK || j == SLACK { 0.0 } else { self.gram[i][j] };
            let eta = gk(up, up) + gk(down, down) - 2.0 * gk(up, down);
            let avail = if down == SLACK { self.alpha_slack } else { self.alpha[down] };
            let t = if eta > 0.0 { (gap / eta).min(avail) } else { avail };
            let gain = t * gap - 0.5 * t * t * eta;
            if !(t > 0.0) || !(gain > 0.0) {
                return Ok(self.solution(gap));
            }
            if up == SLACK {
                self.alpha_slack += t;
            } else {
                self.alpha[up] += t;
            }
            if down == SLACK {
                self.alpha_slack = (self.alpha_slack - t).max(0.0);
            } else {
                self.alpha[down] = if t == avail { 0.0 } else { self.alpha[down] - t };
            }
            self.dual += gain;
            for (k, gk_) in g.iter_mut().enumerate() {
                let col_up = if up == SLACK { 0.0 } else { self.gram[k][up] };
                let col_down = if down == SLACK { 0.0 } else { self.gram[k][down] };
                *gk_ -= t * (col_up - col_down);
            }
        }
        Err(Error::Numeric(format!(
            "working-set QP with {m} constraints did not converge (KKT gap {gap:e})"
        )))
    }

    fn solution(&self, kkt_residual: f64) -> QpSolution {
        let dim = self.constraints.first().map_or(0, |c| c.a.len());
        let mut w = vec![0.0; dim];
        for (k, &a) in self.alpha.iter().enumerate() {
            if a > 0.0 {
                for (wi, ai) in w.iter_mut().zip(&self.constraints[k].a) {
                    *wi += a * ai;
                }
            }
        }
        let xi = self
            .constraints
            .iter()
            .map(|k| k.b - dot(&w, &k.a))
            .fold(0.0, f64::max);
        let primal = 0.5 * dot(&w, &w) + self.c * xi;
        QpSolution {
            w,
            xi,
            alpha: self.alpha.clone(),
            dual_objective: self.dual,
            primal_objective: primal,
            kkt_residual,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the QP over the given constraints from scratch.
pub fn solve_working_set_qp(constraints: &[Constraint], c: f64) -> Result<QpSolution> {
    if constraints.is_empty() {
        return Err(Error::argument("working-set QP needs at least one constraint"));
    }
    let mut qp = WorkingSetQp::new(c)?;
    for k in constraints {
        qp.add(k.clone())?;
    }
    qp.solve()
}
