//! Independent reference computations used to check library results.

use meniscus::datapipe::Mask;

/// AUC by counting every (positive, negative) pixel pair, ties scored ½.
/// Returns `(2·wins + ties, 2·P·N)` so callers can compare exactly.
pub fn auc_pair_count(probs: &[f32], truth: &[bool]) -> (u64, u64) {
    let pos: Vec<f32> = probs.iter().zip(truth).filter(|(_, &t)| t).map(|(&p, _)| p).collect();
    let neg: Vec<f32> = probs.iter().zip(truth).filter(|(_, &t)| !t).map(|(&p, _)| p).collect();
    let mut twice = 0u64;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                twice += 2;
            } else if p == n {
                twice += 1;
            }
        }
    }
    (twice, 2 * pos.len() as u64 * neg.len() as u64)
}

/// Scans every unordered pixel pair for two set pixels at Manhattan
/// distance one.
pub fn adjacent_pair_exists(mask: &Mask) -> bool {
    let w = mask.width();
    let on: Vec<(i64, i64)> = (0..mask.data().len())
        .filter(|&i| mask.data()[i] == 1)
        .map(|i| ((i % w) as i64, (i / w) as i64))
        .collect();
    for (i, a) in on.iter().enumerate() {
        for b in &on[i + 1..] {
            if (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1 {
                return true;
            }
        }
    }
    false
}

/// Pearson r straight from its definition.
pub fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Least-squares solution of `A p ≈ y` (`A` row-major m×n) through the
/// normal equations, solved by Gaussian elimination with partial pivoting.
pub fn normal_equations(a: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    let m = y.len();
    let mut g = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = (0..m).map(|k| a[k * n + i] * a[k * n + j]).sum();
        }
        g[i][n] = (0..m).map(|k| a[k * n + i] * y[k]).sum();
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| g[r][col].abs().total_cmp(&g[s][col].abs()))
            .unwrap();
        g.swap(col, piv);
        let pivot = g[col].clone();
        for row in g.iter_mut().skip(col + 1) {
            let f = row[col] / pivot[col];
            for (v, pv) in row.iter_mut().zip(&pivot).skip(col) {
                *v -= f * pv;
            }
        }
    }
    let mut p = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| g[r][c] * p[c]).sum();
        p[r] = (g[r][n] - s) / g[r][r];
    }
    p
}

/// Two-sided Student-t tail probability by quadrature. With u = tan θ the
/// unnormalised density (1 + u²/ν)^(−(ν+1)/2) becomes a bounded integrand on
/// (−π/2, π/2); the p-value is the ratio of the tail integral to the half
/// integral, so no gamma function is needed.
pub fn t_two_sided_p_quadrature(t: f64, df: f64) -> f64 {
    let f = |theta: f64| {
        let u = theta.tan();
        let c = theta.cos();
        (1.0 + u * u / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let simpson = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    // Stop just short of π/2 where the integrand of ν ≥ 1 tends to a finite
    // limit or zero; the omitted sliver is below 1e-12 for ν ≥ 1.
    let end = half - 1e-9;
    let theta_t = t.abs().atan();
    let tail = simpson(theta_t, end, 200_000);
    let whole = simpson(0.0, end, 200_000);
    (tail / whole).min(1.0)
}
