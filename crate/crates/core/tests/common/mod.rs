// Independent test-side oracles. Nothing here calls into the routines it
// checks; each one recomputes the quantity from first principles.
#![allow(dead_code)]

use std::collections::HashMap;

use bandsel::lp::{LinearProgram, Relation, VarKind};
use bandsel::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Dense row `a·x rel b`.
type Row = (Vec<f64>, Relation, f64);

/// Box used to make the feasible region bounded so it has vertices.
const BOX: f64 = 1e5;

fn satisfied(row: &Row, x: &[f64]) -> bool {
    let (a, rel, b) = row;
    let lhs: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
    let scale = 1.0 + b.abs() + a.iter().zip(x).map(|(a, x)| (a * x).abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    match rel {
        Relation::Le => lhs <= b + tol,
        Relation::Ge => lhs >= b - tol,
        Relation::Eq => (lhs - b).abs() <= tol,
    }
}

/// Solves the square system with partial pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-9 {
            return None;
        }
        a.swap(p, col);
        b.swap(p, col);
        let (top, below) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (i, row) in below.iter_mut().enumerate() {
            let f = row[col] / pivot[col];
            for (r, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *r -= f * p;
            }
            b[col + 1 + i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn next_subset(s: &mut [usize], m: usize) -> bool {
    let n = s.len();
    for i in (0..n).rev() {
        if s[i] < m - n + i {
            s[i] += 1;
            for k in i + 1..n {
                s[k] = s[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum of `c·x` over the vertices of a bounded polyhedron, or `None`
/// when no vertex is feasible.
fn vertex_min(n: usize, rows: &[Row], c: &[f64]) -> Option<f64> {
    if rows.len() < n {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..n).collect();
    loop {
        let a = subset.iter().map(|&i| rows[i].0.clone()).collect();
        let b = subset.iter().map(|&i| rows[i].2).collect();
        if let Some(x) = solve_square(a, b) {
            if rows.iter().all(|r| satisfied(r, &x)) {
                let v: f64 = c.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        if !next_subset(&mut subset, rows.len()) {
            return best;
        }
    }
}

fn bounds(kinds: &[VarKind], radius: f64) -> Vec<Row> {
    let n = kinds.len();
    let mut rows = Vec::new();
    for (j, kind) in kinds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), Relation::Le, radius));
        let floor = if *kind == VarKind::NonNeg { 0.0 } else { -radius };
        rows.push((e, Relation::Ge, floor));
    }
    rows
}

/// Brute-force status and optimum by vertex enumeration. The region is cut
/// by a large box; unboundedness is decided separately on the recession
/// cone `{d : A d rel 0}` cut by the unit box.
pub fn lp_oracle(lp: &LinearProgram) -> Oracle {
    let n = lp.n_vars();
    let dense: Vec<Row> = lp
        .constraints()
        .iter()
        .map(|c| {
            let mut a = vec![0.0; n];
            for &(j, v) in &c.terms {
                a[j] += v;
            }
            (a, c.relation, c.rhs)
        })
        .collect();
    let mut boxed = dense.clone();
    boxed.extend(bounds(lp.kinds(), BOX));
    let Some(best) = vertex_min(n, &boxed, lp.objective()) else {
        return Oracle::Infeasible;
    };
    let mut cone: Vec<Row> = dense.into_iter().map(|(a, rel, _)| (a, rel, 0.0)).collect();
    cone.extend(bounds(lp.kinds(), 1.0));
    let descent = vertex_min(n, &cone, lp.objective()).expect("zero is in the cone");
    if descent < -1e-9 {
        Oracle::Unbounded
    } else {
        Oracle::Optimal(best)
    }
}

/// Integer-coefficient LP with `n` variables and `m` constraints.
pub fn random_lp(rng: &mut SplitMix64, n: usize, m: usize) -> LinearProgram {
    let int = |rng: &mut SplitMix64, r: i64| (rng.below((2 * r + 1) as usize) as i64 - r) as f64;
    let objective = (0..n).map(|_| int(rng, 5)).collect();
    let kinds = (0..n)
        .map(|_| if rng.below(10) < 3 { VarKind::Free } else { VarKind::NonNeg })
        .collect();
    let mut lp = LinearProgram::new(objective, kinds).unwrap();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| int(rng, 5)).collect();
        let rel = match rng.below(5) {
            0 | 1 => Relation::Le,
            2 | 3 => Relation::Ge,
            _ => Relation::Eq,
        };
        lp.add_constraint(&a, rel, int(rng, 10)).unwrap();
    }
    lp
}

/// Plug-in entropy in bits of the joint variable formed by `columns`.
pub fn entropy(columns: &[&[u32]]) -> f64 {
    let n = columns[0].len();
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for i in 0..n {
        *counts.entry(columns.iter().map(|c| c[i]).collect()).or_default() += 1;
    }
    let nf = n as f64;
    -counts.values().map(|&c| c as f64 / nf * (c as f64 / nf).log2()).sum::<f64>()
}

pub fn mi_oracle(x: &[u32], y: &[u32]) -> f64 {
    entropy(&[x]) + entropy(&[y]) - entropy(&[x, y])
}

pub fn cmi_oracle(x: &[u32], y: &[u32], z: &[u32]) -> f64 {
    entropy(&[x, z]) + entropy(&[y, z]) - entropy(&[x, y, z]) - entropy(&[z])
}

pub fn random_symbols(rng: &mut SplitMix64, n: usize, alphabet: usize) -> Vec<u32> {
    (0..n).map(|_| rng.below(alphabet) as u32).collect()
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

/// `Q_ij = y_i y_j K(x_i, x_j)` for row-major points.
pub fn q_matrix(points: &[Vec<f64>], y: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    points
        .iter()
        .zip(y)
        .map(|(a, ya)| points.iter().zip(y).map(|(b, yb)| ya * yb * rbf(gamma, a, b)).collect())
        .collect()
}

/// `Σα − ½ αᵀQα`.
pub fn dual_value(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let quad: f64 = q
        .iter()
        .zip(alpha)
        .map(|(row, ai)| ai * row.iter().zip(alpha).map(|(qij, aj)| qij * aj).sum::<f64>())
        .sum();
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Maximal violating pair gap `max_{I_up} −y∇ − min_{I_low} −y∇`, zero or
/// negative at an exact optimum.
pub fn pair_gap(q: &[Vec<f64>], y: &[f64], c: f64, alpha: &[f64]) -> f64 {
    let eps = 1e-12 * c;
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for (i, row) in q.iter().enumerate() {
        let grad = row.iter().zip(alpha).map(|(qij, aj)| qij * aj).sum::<f64>() - 1.0;
        let v = -y[i] * grad;
        let in_up = (y[i] > 0.0 && alpha[i] < c - eps) || (y[i] < 0.0 && alpha[i] > eps);
        let in_low = (y[i] > 0.0 && alpha[i] > eps) || (y[i] < 0.0 && alpha[i] < c - eps);
        if in_up {
            up = up.max(v);
        }
        if in_low {
            low = low.min(v);
        }
    }
    up - low
}

/// Largest per-sample complementary slackness violation of `y f(x) ≥ 1`
/// given the bias.
pub fn margin_violation(q: &[Vec<f64>], y: &[f64], c: f64, alpha: &[f64], bias: f64) -> f64 {
    let eps = 1e-9 * c;
    q.iter()
        .enumerate()
        .map(|(i, row)| {
            // y_i f(x_i) = Σ_j α_j Q_ij + y_i b.
            let margin = row.iter().zip(alpha).map(|(qij, aj)| qij * aj).sum::<f64>() + y[i] * bias;
            let below = if alpha[i] < c - eps { (1.0 - margin).max(0.0) } else { 0.0 };
            let above = if alpha[i] > eps { (margin - 1.0).max(0.0) } else { 0.0 };
            below.max(above)
        })
        .fold(0.0, f64::max)
}

/// Uniform box point pushed onto `Σ α y = 0` by shrinking the heavier side.
pub fn random_feasible_dual(rng: &mut SplitMix64, y: &[f64], c: f64, sparsity: f64) -> Vec<f64> {
    let alpha: Vec<f64> = y
        .iter()
        .map(|_| if rng.next_f64() < sparsity { 0.0 } else { c * rng.next_f64() })
        .collect();
    balance(alpha, y)
}

/// Clamped perturbation of `center`, then balanced.
pub fn perturbed_dual(rng: &mut SplitMix64, center: &[f64], y: &[f64], c: f64, scale: f64) -> Vec<f64> {
    let alpha = center
        .iter()
        .map(|&a| (a + scale * c * (2.0 * rng.next_f64() - 1.0)).clamp(0.0, c))
        .collect();
    balance(alpha, y)
}

fn balance(mut alpha: Vec<f64>, y: &[f64]) -> Vec<f64> {
    let side = |alpha: &[f64], s: f64| -> f64 { alpha.iter().zip(y).filter(|(_, &yi)| yi == s).map(|(a, _)| a).sum() };
    let (pos, neg) = (side(&alpha, 1.0), side(&alpha, -1.0));
    let (heavy, factor) = if pos > neg { (1.0, neg / pos) } else { (-1.0, if neg > 0.0 { pos / neg } else { 1.0 }) };
    for (a, &yi) in alpha.iter_mut().zip(y) {
        if yi == heavy {
            *a *= factor;
        }
    }
    alpha
}

/// Random binary problem: two Gaussian-ish blobs with overlap.
pub fn random_binary_set(rng: &mut SplitMix64, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    rng.shuffle(&mut y);
    let points = y
        .iter()
        .map(|&yi| (0..dim).map(|_| rng.next_f64() + 0.4 * yi * rng.next_f64()).collect())
        .collect();
    (points, y)
}
