//! Agreement and detection statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::datapipe::Mask;
use crate::error::{Error, Result};

/// 2|M∩A| / (|M| + |A|); two empty masks agree perfectly (1).
pub fn dice(m: &Mask, a: &Mask) -> Result<f64> {
    if (m.width(), m.height()) != (a.width(), a.height()) {
        return Err(Error::input(format!(
            "dice: masks {}x{} and {}x{}",
            m.width(),
            m.height(),
            a.width(),
            a.height()
        )));
    }
    let inter = m.data().iter().zip(a.data()).filter(|(x, y)| **x & **y == 1).count();
    let total = m.count() + a.count();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn check_pairs(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::input(format!("{} vs {} paired values", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::input(format!("need at least {min} pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("paired values must be finite"));
    }
    Ok(())
}

/// Pearson product-moment correlation with its two-sided p-value
/// (t = r·√((n−2)/(1−r²)), n − 2 degrees of freedom).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pairs(x, y, 3)?;
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("correlation is undefined for zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (x.len() - 2) as f64;
    let t = if r.abs() == 1.0 {
        f64::INFINITY
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok((r, t_two_sided_p(t, df)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Per-pair (mean, difference) for plotting.
    pub points: Vec<(f64, f64)>,
}

/// Differences d = x − y; bias = mean(d), limits = bias ± 1.96·SD(d).
pub fn bland_altman(x: &[f64], y: &[f64]) -> Result<BlandAltman> {
    check_pairs(x, y, 2)?;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let bias = mean(&d);
    let sd = sample_sd(&d);
    Ok(BlandAltman {
        bias,
        sd,
        loa_low: bias - 1.96 * sd,
        loa_high: bias + 1.96 * sd,
        points: x.iter().zip(y).map(|(a, b)| (0.5 * (a + b), a - b)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub auc: f64,
    /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
    pub curve: Vec<(f64, f64)>,
    pub positives: usize,
    pub negatives: usize,
}

/// Pixel-level ROC pooled over all slices. AUC uses the Mann–Whitney rank
/// formulation with mid-ranks for ties, evaluated in exact integer
/// arithmetic (twice the rank sums), so it equals pair counting with ties
/// scored ½.
pub fn roc_auc(probs: &[&[f32]], truth: &[&Mask]) -> Result<Roc> {
    if probs.len() != truth.len() {
        return Err(Error::input(format!(
            "{} probability maps for {} masks",
            probs.len(),
            truth.len()
        )));
    }
    let mut pix: Vec<(f32, bool)> = Vec::new();
    for (p, m) in probs.iter().zip(truth) {
        if p.len() != m.data().len() {
            return Err(Error::input("probability map and mask sizes differ"));
        }
        if p.iter().any(|v| v.is_nan()) {
            return Err(Error::input("probability map contains NaN"));
        }
        pix.extend(p.iter().zip(m.data()).map(|(&v, &t)| (v, t == 1)));
    }
    let positives = pix.iter().filter(|p| p.1).count();
    let negatives = pix.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Numerical(
            "AUC is undefined when only one class is present".into(),
        ));
    }
    pix.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the mid-rank of a tie group spanning 1-based ranks i+1..=j is i+1+j.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pix.len() {
        let mut j = i;
        while j < pix.len() && pix[j].0 == pix[i].0 {
            j += 1;
        }
        let pos_in_group = pix[i..j].iter().filter(|p| p.1).count() as u128;
        twice_rank_sum += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let np = positives as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    let auc = twice_u as f64 / (2 * np * negatives as u128) as f64;

    // Curve over descending unique thresholds.
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = pix.len();
    while k > 0 {
        let v = pix[k - 1].0;
        while k > 0 && pix[k - 1].0 == v {
            if pix[k - 1].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        curve.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(Roc {
        auc,
        curve,
        positives,
        negatives,
    })
}

/// Reduces a curve to at most `max_points` points, keeping both ends.
pub fn thin_curve(curve: &[(f64, f64)], max_points: usize) -> Vec<(f64, f64)> {
    if curve.len() <= max_points || max_points < 2 {
        return curve.to_vec();
    }
    let last = curve.len() - 1;
    (0..max_points).map(|i| curve[i * last / (max_points - 1)]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_raw: f64,
    pub p_adj: f64,
    pub significant: bool,
    /// Differences have zero variance but a nonzero mean.
    pub degenerate_variance: bool,
}

/// Bonferroni-adjusted p-value min(1, m·p).
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

/// Paired two-sided t-test on x − y with Bonferroni correction over `m`
/// comparisons; significant when the adjusted p is below `alpha`.
pub fn t_test_bonferroni(x: &[f64], y: &[f64], m: usize, alpha: f64) -> Result<TTest> {
    check_pairs(x, y, 2)?;
    if m == 0 {
        return Err(Error::input("number of comparisons must be positive"));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let md = mean(&d);
    let sd = sample_sd(&d);
    let df = n - 1.0;
    let (t, p_raw, degenerate) = if sd == 0.0 {
        if md == 0.0 {
            (0.0, 1.0, false)
        } else {
            (md.signum() * f64::INFINITY, 0.0, true)
        }
    } else {
        let t = md / (sd / n.sqrt());
        (t, t_two_sided_p(t, df), false)
    };
    let p_adj = bonferroni(p_raw, m);
    Ok(TTest {
        t,
        df,
        p_raw,
        p_adj,
        significant: p_adj < alpha,
        degenerate_variance: degenerate,
    })
}

/// Mean of 100·|test − ref|/|ref| over all pairs.
pub fn rel_abs_error(reference: &[f64], test: &[f64]) -> Result<f64> {
    check_pairs(reference, test, 1)?;
    if let Some(i) = reference.iter().position(|&r| r == 0.0) {
        return Err(Error::input(format!("reference value {i} is zero")));
    }
    Ok(mean(
        &reference
            .iter()
            .zip(test)
            .map(|(r, t)| 100.0 * (t - r).abs() / r.abs())
            .collect::<Vec<_>>(),
    ))
}

/// True when some positive pixel has a positive 4-neighbour.
pub fn has_meniscus(mask: &Mask) -> bool {
    let (w, h) = (mask.width(), mask.height());
    (0..h).any(|y| {
        (0..w).any(|x| mask.get(x, y) && ((x + 1 < w && mask.get(x + 1, y)) || (y + 1 < h && mask.get(x, y + 1))))
    })
}
