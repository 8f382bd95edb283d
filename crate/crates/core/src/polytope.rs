//! The polytope of admissible channel-budget vectors and Euclidean projection
//! onto it.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PolytopeError {
    #[error("polytope is empty above the given lower bounds")]
    Empty,
    #[error("dimension mismatch: polytope has {expected} coordinates, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("active-set projection did not terminate")]
    NoConvergence,
}

/// `{ beta : rows[i].0 . beta <= rows[i].1, beta >= 0 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeB {
    rows: Vec<(Vec<f64>, f64)>,
    dim: usize,
}

impl PolytopeB {
    pub fn new(rows: Vec<(Vec<f64>, f64)>) -> Self {
        let dim = rows.first().map_or(0, |r| r.0.len());
        assert!(rows.iter().all(|r| r.0.len() == dim), "ragged polytope rows");
        PolytopeB { rows, dim }
    }

    /// `{ sum beta <= cap, beta >= 0 }`.
    pub fn simplex_cap(dim: usize, cap: f64) -> Self {
        PolytopeB {
            rows: vec![(vec![1.0; dim], cap)],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[(Vec<f64>, f64)] {
        &self.rows
    }

    /// Every coordinate must appear with a positive coefficient in some row
    /// whose coefficients are all nonnegative.
    pub fn is_bounded(&self) -> bool {
        (0..self.dim).all(|t| {
            self.rows
                .iter()
                .any(|(a, b)| a[t] > 0.0 && a.iter().all(|&v| v >= 0.0) && b.is_finite())
        })
    }

    pub fn contains(&self, beta: &[f64], lower: &[f64], tol: f64) -> bool {
        beta.iter().zip(lower).all(|(&x, &l)| x >= l - tol) && self.rows.iter().all(|(a, b)| dot(a, beta) <= b + tol)
    }

    /// Indices of rows active (within `tol`) at `beta`.
    pub fn active_rows(&self, beta: &[f64], tol: f64) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| (dot(a, beta) - b).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }

    fn is_simplex_cap(&self) -> bool {
        self.rows.len() == 1 && self.rows[0].0.iter().all(|&v| v == 1.0)
    }

    /// All constraints as `a . x <= b`, rows first and then the lower bounds
    /// written as `-x_t <= -lower_t`.
    fn constraints(&self, lower: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let mut out = self.rows.clone();
        for (t, &l) in lower.iter().enumerate() {
            let mut a = vec![0.0; self.dim];
            a[t] = -1.0;
            out.push((a, -l));
        }
        out
    }

    /// A point of the polytope with `beta >= lower`, if one exists. Tries
    /// `lower` itself and otherwise enumerates vertices.
    pub fn find_feasible(&self, lower: &[f64]) -> Option<Vec<f64>> {
        if self.contains(lower, lower, FEAS_TOL) {
            return Some(lower.to_vec());
        }
        let cons = self.constraints(lower);
        let n = self.dim;
        let mut subset: Vec<usize> = (0..n).collect();
        if cons.len() < n {
            return None;
        }
        loop {
            let a = DMatrix::from_fn(n, n, |r, c| cons[subset[r]].0[c]);
            let b = DVector::from_fn(n, |r, _| cons[subset[r]].1);
            if let Some(x) = a.lu().solve(&b) {
                let x: Vec<f64> = x.iter().copied().collect();
                if x.iter().all(|v| v.is_finite()) && cons.iter().all(|(a, b)| dot(a, &x) <= b + 1e-9) {
                    return Some(x);
                }
            }
            if !next_combination(&mut subset, cons.len()) {
                return None;
            }
        }
    }

    /// Euclidean projection of `point` onto `{ beta in B, beta >= lower }`.
    pub fn project(&self, point: &[f64], lower: &[f64]) -> Result<Vec<f64>, PolytopeError> {
        if point.len() != self.dim || lower.len() != self.dim {
            return Err(PolytopeError::Dimension {
                expected: self.dim,
                found: point.len().min(lower.len()),
            });
        }
        if self.contains(point, lower, 0.0) {
            return Ok(point.to_vec());
        }
        if self.is_simplex_cap() {
            return project_capped_simplex(point, lower, self.rows[0].1);
        }
        self.project_active_set(point, lower)
    }

    /// Primal active-set method for `min 1/2 |x - y|^2` over the polytope.
    fn project_active_set(&self, y: &[f64], lower: &[f64]) -> Result<Vec<f64>, PolytopeError> {
        let cons = self.constraints(lower);
        let mut x = self.find_feasible(lower).ok_or(PolytopeError::Empty)?;
        let scale = 1.0 + y.iter().chain(&x).fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale;

        let mut working: Vec<usize> = Vec::new();
        for (i, (a, b)) in cons.iter().enumerate() {
            if (dot(a, &x) - b).abs() <= tol {
                let mut trial = working.clone();
                trial.push(i);
                if full_row_rank(&cons, &trial) {
                    working = trial;
                }
            }
        }

        for _ in 0..(50 * (cons.len() + 1)) {
            let resid: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let (step, lambda) = equality_projection(&cons, &working, &resid);
            let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step_norm <= tol {
                let worst = lambda
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, &l)| (i, l));
                match worst {
                    Some((i, l)) if l < -1e-12 => {
                        working.remove(i);
                    }
                    _ => return Ok(x),
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for (i, (a, b)) in cons.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let ap = dot(a, &step);
                if ap > 1e-15 {
                    let room = (b - dot(a, &x)).max(0.0);
                    let ratio = room / ap;
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            for (xi, si) in x.iter_mut().zip(&step) {
                *xi += alpha * si;
            }
            if let Some(i) = blocking {
                working.push(i);
            }
        }
        Err(PolytopeError::NoConvergence)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn full_row_rank(cons: &[(Vec<f64>, f64)], idx: &[usize]) -> bool {
    if idx.is_empty() {
        return true;
    }
    let n = cons[idx[0]].0.len();
    if idx.len() > n {
        return false;
    }
    let a = DMatrix::from_fn(idx.len(), n, |r, c| cons[idx[r]].0[c]);
    a.rank(1e-10) == idx.len()
}

/// Minimizes `|r - p|^2` subject to `a_i . p = 0` for the working rows.
/// Returns the step and the multipliers of the working rows.
fn equality_projection(cons: &[(Vec<f64>, f64)], working: &[usize], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if working.is_empty() {
        return (r.to_vec(), Vec::new());
    }
    let n = r.len();
    let a = DMatrix::from_fn(working.len(), n, |i, c| cons[working[i]].0[c]);
    let rv = DVector::from_column_slice(r);
    let gram = &a * a.transpose();
    let rhs = &a * &rv;
    let lambda = gram
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(working.len()));
    let step = rv - a.transpose() * &lambda;
    (step.iter().copied().collect(), lambda.iter().copied().collect())
}

/// Projection onto `{ sum x <= cap, x >= lower }` by sorting breakpoints.
fn project_capped_simplex(y: &[f64], lower: &[f64], cap: f64) -> Result<Vec<f64>, PolytopeError> {
    let floor_sum: f64 = lower.iter().sum();
    if floor_sum > cap + FEAS_TOL {
        return Err(PolytopeError::Empty);
    }
    let clamped: Vec<f64> = y.iter().zip(lower).map(|(&v, &l)| v.max(l)).collect();
    if clamped.iter().sum::<f64>() <= cap {
        return Ok(clamped);
    }
    // Shift by tau so that sum max(y - tau, lower) = cap; with d = y - lower
    // this is the classic simplex projection of d onto { sum = cap - sum(lower) }.
    let room = cap - floor_sum;
    let mut d: Vec<f64> = y.iter().zip(lower).map(|(&v, &l)| v - l).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut tau = 0.0;
    for (k, &dk) in d.iter().enumerate() {
        prefix += dk;
        let candidate = (prefix - room) / (k + 1) as f64;
        if dk - candidate > 0.0 {
            tau = candidate;
        }
    }
    Ok(y.iter().zip(lower).map(|(&v, &l)| (v - tau).max(l)).collect())
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> PolytopeB {
        PolytopeB::new(vec![(vec![1.0, 1.0, 0.0], 1.0), (vec![0.0, 1.0, 1.0], 1.0)])
    }

    #[test]
    fn feasible_point_is_fixed() {
        let b = PolytopeB::simplex_cap(3, 1.0);
        let p = [0.2, 0.3, 0.1];
        assert_eq!(b.project(&p, &[0.0; 3]).unwrap(), p.to_vec());
    }

    #[test]
    fn simplex_cap_single_face() {
        let b = PolytopeB::simplex_cap(3, 1.0);
        let p = b.project(&[2.0, 0.0, 0.0], &[0.0; 3]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0 && p[2] == 0.0, "{p:?}");
    }

    #[test]
    fn simplex_cap_with_floors_lifts_and_reprojects() {
        let b = PolytopeB::simplex_cap(3, 1.0);
        let p = b.project(&[1.2, 0.0, 0.0], &[0.1, 0.1, 0.1]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn uniform_shift_on_the_face_is_undone() {
        let b = PolytopeB::simplex_cap(3, 1.0);
        let beta = [0.2, 0.5, 0.3];
        let shifted: Vec<f64> = beta.iter().map(|v| v + 0.07).collect();
        let p = b.project(&shifted, &[0.0; 3]).unwrap();
        for (a, e) in p.iter().zip(beta) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn active_set_matches_fast_path_on_simplex() {
        let b = PolytopeB::simplex_cap(4, 1.0);
        let y = [0.9, -0.3, 0.6, 0.45];
        let fast = b.project(&y, &[0.0; 4]).unwrap();
        let slow = b.project_active_set(&y, &[0.0; 4]).unwrap();
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() < 1e-12, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn chain_polytope_projection_is_kkt_point() {
        let b = chain3();
        let y = [0.9, 0.8, 0.7];
        let p = b.project(&y, &[0.0; 3]).unwrap();
        assert!(b.contains(&p, &[0.0; 3], 1e-12));
        // Both rows bind; the residual y - p must be a nonnegative combination
        // of the row normals: (l1, l1 + l2, l2).
        let r: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        assert!(
            (r[0] + r[2] - r[1]).abs() < 1e-12 && r[0] >= 0.0 && r[2] >= 0.0,
            "{r:?}"
        );
    }

    #[test]
    fn empty_polytope_is_detected() {
        let b = PolytopeB::simplex_cap(2, 1.0);
        assert_eq!(b.find_feasible(&[0.6, 0.6]), None);
        assert_eq!(b.project(&[2.0, 2.0], &[0.6, 0.6]), Err(PolytopeError::Empty));
        let chain = chain3();
        assert!(chain.project(&[1.0, 1.0, 1.0], &[0.6, 0.6, 0.0]).is_err());
    }

    #[test]
    fn vertex_search_when_lower_bound_is_outside() {
        // x0 - x1 <= -0.5 excludes the origin.
        let b = PolytopeB::new(vec![
            (vec![1.0, -1.0], -0.5),
            (vec![1.0, 1.0], 2.0),
            (vec![0.0, 1.0], 1.5),
        ]);
        let x = b.find_feasible(&[0.0, 0.0]).unwrap();
        assert!(b.contains(&x, &[0.0, 0.0], 1e-9));
        let p = b.project(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn boundedness() {
        assert!(PolytopeB::simplex_cap(3, 1.0).is_bounded());
        assert!(chain3().is_bounded());
        assert!(!PolytopeB::new(vec![(vec![1.0, 0.0], 1.0)]).is_bounded());
    }
}
