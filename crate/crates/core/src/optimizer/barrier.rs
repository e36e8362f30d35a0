//! Log-barrier interior-point solver for the concave inner problem.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::instance::{RateTerm, WsrInstance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    /// Stop when the duality-gap bound `m / tau` drops below this.
    pub gap_tol: f64,
    pub tau0: f64,
    pub tau_growth: f64,
    pub max_newton: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            tau0: 1.0,
            tau_growth: 50.0,
            max_newton: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    /// Maximizer in mW.
    pub powers: Vec<f64>,
    /// Minorant value at `powers`, constants included.
    pub value: f64,
    pub newton_steps: usize,
}

/// `log2(noise + sum coefs q) - sum lin q + constant` on normalized powers.
struct Piece {
    noise: f64,
    coefs: Vec<(usize, f64)>,
    lin: Vec<(usize, f64)>,
    constant: f64,
}

impl Piece {
    fn new(term: &RateTerm, anchor: &[f64], budget: f64) -> Self {
        let i0 = term.interference_at(anchor);
        let denom = LN_2 * (term.noise + i0);
        let mut coefs = vec![(term.signal.0, term.signal.1 * budget)];
        coefs.extend(term.interference.iter().map(|&(i, b)| (i, b * budget)));
        coefs.retain(|c| c.1 > 0.0);
        let lin = term
            .interference
            .iter()
            .filter(|c| c.1 > 0.0)
            .map(|&(i, b)| (i, b * budget / denom))
            .collect();
        Self {
            noise: term.noise,
            coefs,
            lin,
            constant: term.surrogate_constant(anchor),
        }
    }

    fn arg(&self, q: &[f64]) -> f64 {
        self.noise + self.coefs.iter().map(|&(i, c)| c * q[i]).sum::<f64>()
    }

    fn value(&self, q: &[f64]) -> f64 {
        self.arg(q).log2() - self.lin.iter().map(|&(i, c)| c * q[i]).sum::<f64>() + self.constant
    }

    /// Adds `scale * grad` and `scale * hess` (dense, in the first `n` slots).
    fn accumulate(&self, q: &[f64], scale: f64, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let a = self.arg(q);
        let g = scale / (LN_2 * a);
        for &(i, c) in &self.coefs {
            grad[i] += g * c;
        }
        for &(i, c) in &self.lin {
            grad[i] -= scale * c;
        }
        let h = scale / (LN_2 * a * a);
        for &(i, ci) in &self.coefs {
            for &(j, cj) in &self.coefs {
                hess[(i, j)] -= h * ci * cj;
            }
        }
    }

    fn gradient_into(&self, q: &[f64], out: &mut DVector<f64>) {
        out.fill(0.0);
        let g = 1.0 / (LN_2 * self.arg(q));
        for &(i, c) in &self.coefs {
            out[i] += g * c;
        }
        for &(i, c) in &self.lin {
            out[i] -= c;
        }
    }
}

struct Problem {
    n: usize,
    cost: Vec<f64>,
    /// Pieces entering the objective directly with their weight.
    direct: Vec<(f64, Piece)>,
    /// Streams with several members: weight and one piece per member.
    epigraph: Vec<(f64, Vec<Piece>)>,
}

impl Problem {
    fn new(inst: &WsrInstance, anchor: &[f64], budget: f64) -> Self {
        let a = inst.common_weight();
        let mut direct = Vec::new();
        let mut epigraph = Vec::new();
        for terms in &inst.common_terms {
            if a <= 0.0 || terms.is_empty() {
                continue;
            }
            let pieces: Vec<Piece> = terms.iter().map(|t| Piece::new(t, anchor, budget)).collect();
            if pieces.len() == 1 {
                direct.push((a, pieces.into_iter().next().unwrap()));
            } else {
                epigraph.push((a, pieces));
            }
        }
        for (terms, &w) in inst.private_terms.iter().zip(&inst.weights) {
            if w <= 0.0 {
                continue;
            }
            direct.extend(terms.iter().map(|t| (w, Piece::new(t, anchor, budget))));
        }
        Self {
            n: inst.num_vars(),
            cost: inst.cost.clone(),
            direct,
            epigraph,
        }
    }

    fn dim(&self) -> usize {
        self.n + self.epigraph.len()
    }

    fn barrier_terms(&self) -> usize {
        self.n + 1 + self.epigraph.iter().map(|(_, p)| p.len()).sum::<usize>()
    }

    fn slack(&self, q: &[f64]) -> f64 {
        1.0 - q.iter().zip(&self.cost).map(|(x, c)| x * c).sum::<f64>()
    }

    /// `tau * f(z) + sum log(slacks)`, or `None` outside the interior.
    fn merit(&self, z: &[f64], tau: f64) -> Option<f64> {
        let q = &z[..self.n];
        if q.iter().any(|&x| x <= 0.0) {
            return None;
        }
        let s = self.slack(q);
        if s <= 0.0 {
            return None;
        }
        let mut bar = s.ln() + q.iter().map(|x| x.ln()).sum::<f64>();
        let mut f: f64 = self.direct.iter().map(|(w, p)| w * p.value(q)).sum();
        for (e, (w, ps)) in self.epigraph.iter().enumerate() {
            let t = z[self.n + e];
            f += w * t;
            for p in ps {
                let u = p.value(q) - t;
                if u <= 0.0 {
                    return None;
                }
                bar += u.ln();
            }
        }
        Some(tau * f + bar)
    }

    fn derivatives(&self, z: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let d = self.dim();
        let q = &z[..n];
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (w, p) in &self.direct {
            p.accumulate(q, tau * w, &mut g, &mut h);
        }
        let s = self.slack(q);
        for i in 0..n {
            g[i] += 1.0 / q[i] - self.cost[i] / s;
            h[(i, i)] -= 1.0 / (q[i] * q[i]);
            for j in 0..n {
                h[(i, j)] -= self.cost[i] * self.cost[j] / (s * s);
            }
        }
        let mut pg = DVector::zeros(d);
        for (e, (w, ps)) in self.epigraph.iter().enumerate() {
            let ti = n + e;
            g[ti] += tau * w;
            for p in ps {
                let u = p.value(q) - z[ti];
                p.gradient_into(q, &mut pg);
                pg[ti] = -1.0;
                p.accumulate(q, 1.0 / u, &mut g, &mut h);
                g[ti] -= 1.0 / u;
                let inv2 = 1.0 / (u * u);
                for i in 0..d {
                    if pg[i] == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        h[(i, j)] -= inv2 * pg[i] * pg[j];
                    }
                }
            }
        }
        (g, h)
    }

    /// Largest step keeping the linear constraints strictly feasible.
    fn linear_step_bound(&self, z: &[f64], dz: &DVector<f64>) -> f64 {
        let mut bound = f64::INFINITY;
        for i in 0..self.n {
            if dz[i] < 0.0 {
                bound = bound.min(-z[i] / dz[i]);
            }
        }
        let ds: f64 = (0..self.n).map(|i| self.cost[i] * dz[i]).sum();
        if ds > 0.0 {
            bound = bound.min(self.slack(&z[..self.n]) / ds);
        }
        bound
    }

    fn center(&self, z: &mut [f64], tau: f64, opts: &InnerOptions) -> Result<usize> {
        let mut phi = self.merit(z, tau).ok_or_else(|| infeasible("centering start"))?;
        for step in 0..opts.max_newton {
            let (g, h) = self.derivatives(z, tau);
            let neg = -h;
            let dz = solve_spd(neg, &g)?;
            let decrement = g.dot(&dz);
            // Suboptimality in the objective is about decrement / (2 tau).
            if decrement / 2.0 <= 1e-10_f64.max(1e-14 * tau) {
                return Ok(step);
            }
            let mut s = (0.99 * self.linear_step_bound(z, &dz)).min(1.0);
            let mut trial = vec![0.0; z.len()];
            let mut accepted = false;
            for _ in 0..60 {
                for (t, (zi, di)) in trial.iter_mut().zip(z.iter().zip(dz.iter())) {
                    *t = zi + s * di;
                }
                if let Some(v) = self.merit(&trial, tau) {
                    if v >= phi + 0.01 * s * decrement {
                        phi = v;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // No ascent available at working precision.
                return Ok(step);
            }
            z.copy_from_slice(&trial);
        }
        Ok(opts.max_newton)
    }
}

fn solve_spd(mut a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(ch) = a.clone().cholesky() {
            return Ok(ch.solve(b));
        }
        let add = if shift == 0.0 { 1e-12 * scale } else { shift * 9.0 };
        for i in 0..a.nrows() {
            a[(i, i)] += add;
        }
        shift += add;
    }
    Err(Error::Singular("barrier Hessian is not negative definite".into()))
}

fn infeasible(what: &str) -> Error {
    Error::SolverFailure {
        message: format!("{what} is not strictly feasible"),
        iterations: 0,
        trace: Vec::new(),
    }
}

/// Maximizes the weighted sum of minorants linearized at `anchor` (mW)
/// subject to `sum_i cost_i p_i <= budget`, `p >= 0`.
pub fn solve_inner(inst: &WsrInstance, anchor: &[f64], budget: f64, opts: &InnerOptions) -> Result<InnerSolution> {
    let n = inst.num_vars();
    if anchor.len() != n {
        return Err(Error::DimensionMismatch(format!("anchor has {} entries, expected {n}", anchor.len())));
    }
    if !(budget >= 0.0) || anchor.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::Domain("budget and anchor must be nonnegative".into()));
    }
    if budget == 0.0 || n == 0 {
        let zeros = vec![0.0; n];
        return Ok(InnerSolution {
            value: inst.surrogate_wsr(&zeros, anchor),
            powers: zeros,
            newton_steps: 0,
        });
    }
    let problem = Problem::new(inst, anchor, budget);
    let center: Vec<f64> = inst.cost.iter().map(|c| 1.0 / ((n + 1) as f64 * c)).collect();
    let mut z: Vec<f64> = anchor
        .iter()
        .zip(&center)
        .map(|(a, c)| 0.5 * a / budget + 0.5 * c)
        .collect();
    for (_, ps) in &problem.epigraph {
        let m = ps.iter().map(|p| p.value(&z[..n])).fold(f64::INFINITY, f64::min);
        z.push(m - 1.0);
    }
    let m = problem.barrier_terms() as f64;
    let mut tau = opts.tau0;
    let mut steps = 0;
    loop {
        steps += problem.center(&mut z, tau, opts)?;
        if m / tau <= opts.gap_tol {
            break;
        }
        tau *= opts.tau_growth;
    }
    let powers: Vec<f64> = z[..n].iter().map(|x| x * budget).collect();
    Ok(InnerSolution {
        value: inst.surrogate_wsr(&powers, anchor),
        powers,
        newton_steps: steps,
    })
}
