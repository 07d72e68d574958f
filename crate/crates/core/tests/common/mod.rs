//! Brute-force reference implementations shared by the integration tests.
//! Each one is written independently of the library code it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// `y(n) = Σ_k α^k x(n−k)` evaluated term by term.
pub fn iir_direct(x: &[f64], alpha: f64) -> Vec<f64> {
    (0..x.len()).map(|n| (0..=n).map(|k| alpha.powi(k as i32) * x[n - k]).sum()).collect()
}

pub fn rbf(x: &[f64], z: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

pub fn gram(data: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    data.iter().map(|a| data.iter().map(|b| rbf(a, b, sigma)).collect()).collect()
}

pub fn quad(q: &[Vec<f64>], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i] * q[i][j] * a[j];
        }
    }
    0.5 * s
}

/// Euclidean projection onto `{0 ≤ a ≤ c, Σa = 1}` by bisection on the shift.
fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let total = |tau: f64| v.iter().map(|&x| (x - tau).clamp(0.0, c)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - c;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - tau).clamp(0.0, c)).collect()
}

/// Accelerated projected gradient on `min ½aᵀQa, 0 ≤ a ≤ c, Σa = 1`.
/// Returns the minimizer estimate and its objective.
pub fn ocsvm_dual_oracle(q: &[Vec<f64>], c: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = q.len();
    // Gershgorin bound on the largest eigenvalue
    let lip = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max).max(1e-12);
    let mut x = project_capped_simplex(&vec![1.0 / n as f64; n], c);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * y[j]).sum()).collect();
        let step: Vec<f64> = (0..n).map(|i| y[i] - grad[i] / lip).collect();
        let nx = project_capped_simplex(&step, c);
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = (0..n).map(|i| nx[i] + (t - 1.0) / nt * (nx[i] - x[i])).collect();
        x = nx;
        t = nt;
    }
    let f = quad(q, &x);
    (x, f)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `sqrt((x − μ)ᵀ Σ⁻¹ (x − μ))` with an explicit inverse.
pub fn mahalanobis_brute(x: &[f64], mu: &[f64], cov: &[Vec<f64>]) -> f64 {
    let inv = invert(cov);
    let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let mut s = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            s += d[i] * inv[i][j] * d[j];
        }
    }
    s.sqrt()
}

/// Random SPD matrix `B Bᵀ + d·I`.
pub fn random_spd(rng: &mut impl Rng, d: usize) -> Vec<Vec<f64>> {
    let b = gaussian(rng, d, d);
    (0..d)
        .map(|i| {
            (0..d).map(|j| (0..d).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { d as f64 } else { 0.0 }).collect()
        })
        .collect()
}

pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

pub fn count(decisions: &[bool], labels: &[bool]) -> Counts {
    let mut c = Counts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for i in 0..decisions.len() {
        match (decisions[i], labels[i]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by enumerating every pair.
pub fn auroc_pairs(p: &[f64], labels: &[bool]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice_wins += if p[i] > p[j] {
                    2
                } else if p[i] == p[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    (twice_wins as f64 / 2.0) / pairs as f64
}

/// Textbook one-way ANOVA F statistic.
pub fn anova_f(groups: &[Vec<f64>]) -> f64 {
    let k = groups.len() as f64;
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / n;
    let mean = |g: &Vec<f64>| g.iter().sum::<f64>() / g.len() as f64;
    let ssb: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ssw: f64 = groups.iter().map(|g| g.iter().map(|v| (v - mean(g)).powi(2)).sum::<f64>()).sum();
    (ssb / (k - 1.0)) / (ssw / (n - k))
}
