//! Parameterized real-valued logic operators.
//!
//! The weighted conjunction is `max(0, min(1, beta - w.(1 - x)))` under the
//! linear constraints
//!
//! ```text
//! w >= 0
//! beta - alpha * w_i <= 1 - alpha           (any low input gives low output)
//! beta - (1 - alpha) * sum(w) >= alpha      (all-high inputs give high output)
//! ```
//!
//! These are satisfiable only when `alpha > n / (n + 1)` for arity `n`.
//! The predicate operator is a convex combination `w.x` with `w` on the
//! probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.7;

/// Tolerance used when checking conjunction feasibility after projection,
/// relative to `1 + max |parameter|`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const DYKSTRA_MAX_CYCLES: usize = 10_000;

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

/// Smallest alpha (exclusive) for which an `arity`-ary conjunction has any
/// feasible parameters.
pub fn alpha_lower_bound(arity: usize) -> f64 {
    arity as f64 / (arity as f64 + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjunctionParams {
    pub alpha: f64,
    pub beta: f64,
    pub weights: Vec<f64>,
}

/// Subgradients of the conjunction output.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjunctionGradient {
    pub beta: f64,
    pub weights: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl ConjunctionParams {
    pub fn new(alpha: f64, beta: f64, weights: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0.5, 1], got {alpha}"
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("conjunction needs at least one input".into()));
        }
        Ok(Self {
            alpha,
            beta,
            weights,
        })
    }

    /// The Lukasiewicz point `(beta = 1, w = 1)` projected onto the feasible set.
    pub fn lukasiewicz(arity: usize, alpha: f64) -> Result<Self> {
        let mut p = Self::new(alpha, 1.0, vec![1.0; arity])?;
        p.project()?;
        Ok(p)
    }

    pub fn arity(&self) -> usize {
        self.weights.len()
    }

    /// `beta - w.(1 - x)` before clipping.
    pub fn pre_activation(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(self.beta
            - self
                .weights
                .iter()
                .zip(x)
                .map(|(w, xi)| w * (1.0 - xi))
                .sum::<f64>())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.pre_activation(x)?.clamp(0.0, 1.0))
    }

    /// Subgradients scaled by `upstream`. Inside `[0, 1]` (boundaries
    /// included) the clip passes gradients through; outside it blocks them.
    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<ConjunctionGradient> {
        let z = self.pre_activation(x)?;
        let n = self.weights.len();
        if !(0.0..=1.0).contains(&z) {
            return Ok(ConjunctionGradient {
                beta: 0.0,
                weights: vec![0.0; n],
                inputs: vec![0.0; n],
            });
        }
        Ok(ConjunctionGradient {
            beta: upstream,
            weights: x.iter().map(|xi| -(1.0 - xi) * upstream).collect(),
            inputs: self.weights.iter().map(|w| w * upstream).collect(),
        })
    }

    /// Largest constraint violation (0 when feasible).
    pub fn max_violation(&self) -> f64 {
        let a = self.alpha;
        let mut worst: f64 = 0.0;
        for &w in &self.weights {
            worst = worst.max(-w);
            worst = worst.max(self.beta - a * w - (1.0 - a));
        }
        let sum: f64 = self.weights.iter().sum();
        worst.max(a - (self.beta - (1.0 - a) * sum))
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }

    /// Euclidean projection of `(beta, w)` onto the constraint polytope.
    ///
    /// Up to [`EXACT_MAX_ARITY`] inputs the projection is exact: it is the
    /// projection onto the affine hull of some linearly independent set of
    /// active constraints, so every such set is tried and the nearest
    /// feasible candidate kept. Larger arities fall back to Dykstra's
    /// alternating projections, which can crawl when alpha is close to its
    /// lower bound.
    pub fn project(&mut self) -> Result<()> {
        let n = self.weights.len();
        let bound = alpha_lower_bound(n);
        if self.alpha <= bound {
            return Err(Error::InfeasibleConjunction {
                alpha: self.alpha,
                arity: n,
                bound,
            });
        }
        if !self.beta.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("conjunction parameters".into()));
        }
        if self.max_violation() == 0.0 {
            return Ok(());
        }
        let halfspaces = self.halfspaces();
        let start: Vec<f64> = std::iter::once(self.beta)
            .chain(self.weights.iter().copied())
            .collect();
        let z = if n <= EXACT_MAX_ARITY {
            exact_projection(&start, &halfspaces)
        } else {
            dykstra(&start, &halfspaces)
        };
        let out = Self {
            alpha: self.alpha,
            beta: z[0],
            weights: z[1..].iter().map(|w| w.max(0.0)).collect(),
        };
        let violation = out.max_violation();
        if violation > FEASIBILITY_TOL * magnitude(&z) {
            return Err(Error::ProjectionDiverged {
                iterations: DYKSTRA_MAX_CYCLES,
                violation,
            });
        }
        *self = out;
        Ok(())
    }

    /// Constraints as `a.z <= b` over `z = (beta, w_1..w_n)`.
    fn halfspaces(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.weights.len();
        let a = self.alpha;
        let mut out = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            let mut nonneg = vec![0.0; n + 1];
            nonneg[i + 1] = -1.0;
            out.push((nonneg, 0.0));
            let mut low = vec![0.0; n + 1];
            low[0] = 1.0;
            low[i + 1] = -a;
            out.push((low, 1.0 - a));
        }
        let mut high = vec![1.0 - a; n + 1];
        high[0] = -1.0;
        out.push((high, -a));
        out
    }
}

/// Largest arity projected exactly (at most `2^(2n+1)` active sets).
pub const EXACT_MAX_ARITY: usize = 6;

fn magnitude(z: &[f64]) -> f64 {
    1.0 + z.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn violation_of(z: &[f64], halfspaces: &[(Vec<f64>, f64)]) -> f64 {
    halfspaces
        .iter()
        .map(|(a, b)| a.iter().zip(z).map(|(p, q)| p * q).sum::<f64>() - b)
        .fold(0.0, f64::max)
}

/// Solves `g x = r` in place by Gaussian elimination with partial pivoting;
/// `None` when `g` is (numerically) singular.
fn solve_dense(mut g: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let k = r.len();
    let scale = (0..k).map(|i| g[i][i].abs()).fold(0.0, f64::max);
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| g[i][col].abs().total_cmp(&g[j][col].abs()))?;
        if g[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        g.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..k {
            let f = g[row][col] / g[col][col];
            if f != 0.0 {
                let (upper, lower) = g.split_at_mut(row);
                for (a, b) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *a -= f * b;
                }
                r[row] -= f * r[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let tail: f64 = (row + 1..k).map(|c| g[row][c] * x[c]).sum();
        x[row] = (r[row] - tail) / g[row][row];
    }
    Some(x)
}

fn exact_projection(p: &[f64], halfspaces: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let dim = p.len();
    let m = halfspaces.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        if rows.len() > dim {
            continue;
        }
        let gram: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| {
                rows.iter()
                    .map(|&j| halfspaces[i].0.iter().zip(&halfspaces[j].0).map(|(x, y)| x * y).sum())
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = rows
            .iter()
            .map(|&i| halfspaces[i].0.iter().zip(p).map(|(x, y)| x * y).sum::<f64>() - halfspaces[i].1)
            .collect();
        let Some(lambda) = solve_dense(gram, rhs) else {
            continue;
        };
        let mut z = p.to_vec();
        for (&i, l) in rows.iter().zip(&lambda) {
            for (zj, aj) in z.iter_mut().zip(&halfspaces[i].0) {
                *zj -= l * aj;
            }
        }
        if violation_of(&z, halfspaces) > 1e-12 * magnitude(&z) {
            continue;
        }
        let d: f64 = z.iter().zip(p).map(|(x, y)| (x - y).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, z));
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| p.to_vec())
}

fn dykstra(start: &[f64], halfspaces: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let dim = start.len();
    let mut z = start.to_vec();
    let mut corrections = vec![vec![0.0; dim]; halfspaces.len()];
    let mut y = vec![0.0; dim];
    for _ in 0..DYKSTRA_MAX_CYCLES {
        let mut moved: f64 = 0.0;
        for (k, (normal, offset)) in halfspaces.iter().enumerate() {
            for j in 0..dim {
                y[j] = z[j] + corrections[k][j];
            }
            let dot: f64 = normal.iter().zip(&y).map(|(p, q)| p * q).sum();
            let excess = dot - offset;
            let step = if excess > 0.0 {
                excess / normal.iter().map(|p| p * p).sum::<f64>()
            } else {
                0.0
            };
            for j in 0..dim {
                let next = y[j] - step * normal[j];
                corrections[k][j] = y[j] - next;
                moved = moved.max((next - z[j]).abs());
                z[j] = next;
            }
        }
        if moved <= 1e-13 && violation_of(&z, halfspaces) <= 1e-12 {
            break;
        }
    }
    z
}

/// `1 - conj(1 - x)`.
pub fn disjunction_forward(params: &ConjunctionParams, x: &[f64]) -> Result<f64> {
    let flipped: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
    Ok(1.0 - params.forward(&flipped)?)
}

/// Mixture weights constrained to the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateParams {
    pub weights: Vec<f64>,
}

impl PredicateParams {
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("predicate needs at least one input".into()));
        }
        Ok(Self {
            weights: vec![1.0 / k as f64; k],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum())
    }

    pub fn project(&mut self) -> Result<()> {
        self.weights = project_simplex(&self.weights)?;
        Ok(())
    }

    pub fn max_violation(&self) -> f64 {
        let neg = self.weights.iter().fold(0.0f64, |m, w| m.max(-w));
        let sum: f64 = self.weights.iter().sum();
        neg.max((sum - 1.0).abs())
    }
}

/// Euclidean projection onto `{w >= 0, sum(w) = 1}`.
///
/// Finds the threshold `theta` with `sum(max(v - theta, 0)) = 1` by pivoting
/// (expected linear time), then clips.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex projection input".into()));
    }
    // pool[lo..hi] holds the undecided values
    let mut pool: Vec<f64> = v.to_vec();
    let mut lo = 0usize;
    let mut hi = pool.len();
    let mut kept_sum = 0.0;
    let mut kept = 0usize;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let (a, b, c) = (pool[lo], pool[mid], pool[hi - 1]);
        let pivot = a.max(b.min(c)).min(b.max(c));
        // three-way partition: [lo, gt) > pivot, [gt, eq) == pivot, [eq, hi) < pivot
        let (mut gt, mut eq, mut i) = (lo, lo, lo);
        while i < hi {
            let x = pool[i];
            if x > pivot {
                pool.swap(i, eq);
                pool.swap(eq, gt);
                gt += 1;
                eq += 1;
            } else if x == pivot {
                pool.swap(i, eq);
                eq += 1;
            }
            i += 1;
        }
        let upper_sum: f64 = pool[lo..gt].iter().sum();
        let upper = gt - lo;
        let ties = eq - gt;
        if (kept_sum + upper_sum) - (kept + upper) as f64 * pivot < 1.0 {
            // pivot value and everything above it are in the support
            kept_sum += upper_sum + ties as f64 * pivot;
            kept += upper + ties;
            lo = eq;
        } else {
            // pivot value is outside the support; only larger entries remain
            hi = gt;
        }
    }
    let theta = (kept_sum - 1.0) / kept as f64;
    Ok(v.iter().map(|x| (x - theta).max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sort_projection(v: &[f64]) -> Vec<f64> {
        let mut u = v.to_vec();
        u.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (j, uj) in u.iter().enumerate() {
            cum += uj;
            let t = (cum - 1.0) / (j + 1) as f64;
            if uj - t > 0.0 {
                theta = t;
            }
        }
        v.iter().map(|x| (x - theta).max(0.0)).collect()
    }

    #[test]
    fn conj_examples() {
        let p = ConjunctionParams::new(0.7, 1.0, vec![1.0, 1.0]).unwrap();
        assert_eq!(p.forward(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(p.forward(&[1.0, 0.0]).unwrap(), 0.0);
        let q = ConjunctionParams::new(0.7, 3.1, vec![4.0, 4.0]).unwrap();
        assert_abs_diff_eq!(q.forward(&[0.7, 0.7]).unwrap(), 0.7, epsilon = 1e-12);
        assert!(matches!(q.forward(&[0.7]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn conj_backward_interior() {
        // z = beta - 4*0.2 - 4*0.1 = 0.5 with beta = 1.7
        let p = ConjunctionParams::new(0.7, 1.7, vec![4.0, 4.0]).unwrap();
        let x = [0.8, 0.9];
        assert_abs_diff_eq!(p.pre_activation(&x).unwrap(), 0.5, epsilon = 1e-12);
        let g = p.backward(&x, 1.0).unwrap();
        assert_eq!(g.beta, 1.0);
        assert_abs_diff_eq!(g.weights[0], -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(g.weights[1], -0.1, epsilon = 1e-12);
        assert_eq!(g.inputs, vec![4.0, 4.0]);
    }

    #[test]
    fn conj_backward_clipped_and_boundary() {
        let p = ConjunctionParams::new(0.7, 1.0, vec![1.0, 1.0]).unwrap();
        // z = 1 - 0.65 - 0.65 = -0.3
        let g = p.backward(&[0.35, 0.35], 1.0).unwrap();
        assert_eq!(g.beta, 0.0);
        assert!(g.weights.iter().chain(&g.inputs).all(|v| *v == 0.0));
        // z = 1 - 0.5 - 0.5 = 0 exactly: pass-through
        let g = p.backward(&[0.5, 0.5], 2.0).unwrap();
        assert_eq!(g.beta, 2.0);
        assert_eq!(g.inputs, vec![2.0, 2.0]);
    }

    #[test]
    fn disj_examples() {
        let p = ConjunctionParams::new(0.7, 1.0, vec![1.0, 1.0]).unwrap();
        assert_eq!(disjunction_forward(&p, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(disjunction_forward(&p, &[0.0, 1.0]).unwrap(), 1.0);
        let q = ConjunctionParams::new(0.7, 3.1, vec![4.0, 4.0]).unwrap();
        assert_abs_diff_eq!(disjunction_forward(&q, &[0.3, 0.3]).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn pred_examples() {
        let p = PredicateParams {
            weights: vec![1.0, 0.0, 0.0],
        };
        assert_eq!(p.forward(&[0.2, 0.9, 0.4]).unwrap(), 0.2);
        let p = PredicateParams {
            weights: vec![0.5, 0.5],
        };
        assert_eq!(p.forward(&[0.0, 1.0]).unwrap(), 0.5);
        let p = PredicateParams {
            weights: vec![0.2, 0.3, 0.5],
        };
        assert_abs_diff_eq!(p.forward(&[1.0, 2.0, 3.0]).unwrap(), 2.3, epsilon = 1e-12);
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn simplex_examples() {
        assert_eq!(project_simplex(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
        assert_eq!(project_simplex(&[-1.0, -1.0]).unwrap(), vec![0.5, 0.5]);
        assert!(project_simplex(&[]).is_err());
        assert!(project_simplex(&[f64::NAN]).is_err());
    }

    #[test]
    fn simplex_matches_grid_search_on_segment() {
        // brute force over w = (t, 1 - t)
        let v = [2.0, 0.0];
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=100_000 {
            let t = i as f64 / 100_000.0;
            let d = (t - v[0]).powi(2) + (1.0 - t - v[1]).powi(2);
            if d < best.0 {
                best = (d, t);
            }
        }
        let p = project_simplex(&v).unwrap();
        assert_abs_diff_eq!(p[0], best.1, epsilon = 1e-4);
        assert_abs_diff_eq!(p[1], 1.0 - best.1, epsilon = 1e-4);
    }

    #[test]
    fn simplex_pivot_agrees_with_sorting() {
        let cases: Vec<Vec<f64>> = vec![
            vec![0.1, 0.1, 0.1, 0.1],
            vec![5.0, 5.0, 5.0],
            vec![1.0],
            vec![-3.0],
            vec![0.9, 0.05, 0.05, 3.0, -2.0, 3.0, 0.2],
            (0..200).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect(),
        ];
        for v in cases {
            let a = project_simplex(&v).unwrap();
            let b = sort_projection(&v);
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_keeps_feasible_point() {
        let mut p = ConjunctionParams::new(0.7, 3.1, vec![4.0, 4.0]).unwrap();
        assert!(p.is_feasible(1e-12));
        let before = p.clone();
        p.project().unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn projection_repairs_lukasiewicz_point() {
        let p = ConjunctionParams::new(0.7, 1.0, vec![1.0, 1.0]).unwrap();
        // 1 - 0.3 * 2 = 0.4 < 0.7 violates the high-output constraint
        assert!(p.max_violation() > 0.29);
        let mut q = p.clone();
        q.project().unwrap();
        assert!(q.is_feasible(FEASIBILITY_TOL));
        let mut again = q.clone();
        again.project().unwrap();
        assert_abs_diff_eq!(again.beta, q.beta, epsilon = 1e-9);
    }

    #[test]
    fn projection_clears_negative_weight() {
        let mut p = ConjunctionParams::new(0.7, 3.1, vec![-2.0, 4.0]).unwrap();
        p.project().unwrap();
        assert!(p.weights.iter().all(|w| *w >= 0.0));
        assert!(p.is_feasible(FEASIBILITY_TOL));
    }

    #[test]
    fn ternary_conjunction_needs_large_alpha() {
        assert!(matches!(
            ConjunctionParams::lukasiewicz(3, 0.7),
            Err(Error::InfeasibleConjunction { .. })
        ));
        let p = ConjunctionParams::lukasiewicz(3, 0.8).unwrap();
        assert!(p.is_feasible(FEASIBILITY_TOL));
    }
}
