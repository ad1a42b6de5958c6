//! Signal models of the UTE-Cones sequences and their per-voxel fits.
//!
//! Decay constants are fitted as q = ln T so that every iterate stays
//! positive; results are reported in natural units.

use super::lm::{lm_solve, FitResult, LmOptions};
use super::sequence::SequenceParams;
use crate::error::{Error, Result};

/// Mono-exponential decay S(t) = S0·exp(−t/T).
pub fn model_decay(times: &[f64], s0: f64, t: f64) -> Vec<f64> {
    times.iter().map(|&x| s0 * (-x / t).exp()).collect()
}

/// Multi-echo T2* signal at echo times `tes` (ms).
pub fn model_t2star(tes: &[f64], s0: f64, t2star: f64) -> Vec<f64> {
    model_decay(tes, s0, t2star)
}

/// Adiabatic T1ρ signal; spin-lock time is N_AFP·τ.
pub fn model_t1rho(nafp: &[u32], tau_afp: f64, s0: f64, t1rho: f64) -> Vec<f64> {
    let tsl: Vec<f64> = nafp.iter().map(|&n| f64::from(n) * tau_afp).collect();
    model_decay(&tsl, s0, t1rho)
}

/// Fits S0 and T of a mono-exponential decay. `params = [S0, T]`.
///
/// Starts from S0 = first sample and a two-point log-linear estimate of T
/// from the first and last samples.
pub fn fit_decay(signals: &[f64], times: &[f64], opts: &LmOptions) -> Result<FitResult> {
    if signals.len() != times.len() {
        return Err(Error::input(format!(
            "{} signals for {} sample times",
            signals.len(),
            times.len()
        )));
    }
    if signals.len() < 3 {
        return Err(Error::input("a decay fit needs at least three samples"));
    }
    if let Some(i) = signals.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("signal {i} is not finite")));
    }
    let (s_first, s_last) = (signals[0], signals[signals.len() - 1]);
    if s_first <= 0.0 {
        return Ok(FitResult::flagged(2, "non-positive first sample"));
    }
    let span = times[times.len() - 1] - times[0];
    let t_init = if s_last > 0.0 && s_last < s_first {
        span / (s_first / s_last).ln()
    } else {
        span.max(1.0)
    };
    let times = times.to_vec();
    let model = move |p: &[f64], f: &mut [f64], j: &mut [f64]| {
        let inv_t = (-p[1]).exp();
        for (i, &x) in times.iter().enumerate() {
            let e = (-x * inv_t).exp();
            f[i] = p[0] * e;
            j[2 * i] = e;
            j[2 * i + 1] = p[0] * e * x * inv_t;
        }
    };
    let mut r = lm_solve(&model, signals, &[s_first, t_init.ln()], opts)?;
    r.params[1] = r.params[1].exp();
    if r.converged && !(r.params.iter().all(|v| v.is_finite()) && r.params[1] > 0.0) {
        r.converged = false;
        r.failure = Some("fit left the admissible parameter range".into());
    }
    Ok(r)
}

/// `params = [S0, T2*]`.
pub fn fit_t2star(signals: &[f64], seq: &SequenceParams) -> Result<FitResult> {
    fit_decay(signals, &seq.t2star_tes, &LmOptions::default())
}

/// `params = [S0, T1ρ]`.
pub fn fit_t1rho(signals: &[f64], seq: &SequenceParams) -> Result<FitResult> {
    fit_decay(signals, &seq.spin_lock_times(), &LmOptions::default())
}

/// Steady-state AFI signal ratio S2/S1 for flip angle `alpha_deg` and
/// n = TR2/TR1 (ideal spoiling, TR ≪ T1).
pub fn afi_ratio(alpha_deg: f64, n: f64) -> f64 {
    let c = alpha_deg.to_radians().cos();
    (1.0 + n * c) / (n + c)
}

/// Actual flip angle in degrees from the AFI pair: α = arccos((r·n − 1)/(n − r)).
///
/// Ratios outside (1/n, 1] correspond to no flip angle in (0°, 90°] and are
/// rejected.
pub fn afi_flip_angle(s1: f64, s2: f64, n: f64) -> Result<f64> {
    if !(s1 > 0.0) || !s2.is_finite() {
        return Err(Error::Numerical(format!("AFI signals ({s1}, {s2}) are not usable")));
    }
    if !(n > 1.0) {
        return Err(Error::input(format!("AFI TR ratio {n} must exceed 1")));
    }
    let r = s2 / s1;
    if !(r > 1.0 / n && r <= 1.0) {
        return Err(Error::Numerical(format!("AFI ratio {r} outside (1/n, 1]")));
    }
    let arg = (r * n - 1.0) / (n - r);
    if !(-1.0..=1.0).contains(&arg) {
        return Err(Error::Numerical(format!("AFI ratio {r} outside the invertible range")));
    }
    Ok(arg.acos().to_degrees())
}

pub fn b1_scale(actual_deg: f64, nominal_deg: f64) -> f64 {
    actual_deg / nominal_deg
}

/// Admissible B1 scale window for the VFA fit.
pub const B1_WINDOW: (f64, f64) = (0.3, 1.7);

/// Spoiled gradient-echo signal at nominal flip angles `fas_deg`, corrected
/// by `b1`: S = M0·sin αe·(1−E1)/(1 − cos αe·E1), E1 = exp(−TR/T1).
pub fn model_vfa(fas_deg: &[f64], tr: f64, b1: f64, m0: f64, t1: f64) -> Vec<f64> {
    let e1 = (-tr / t1).exp();
    fas_deg
        .iter()
        .map(|&a| {
            let a = (b1 * a).to_radians();
            m0 * a.sin() * (1.0 - e1) / (1.0 - a.cos() * e1)
        })
        .collect()
}

/// Fits M0 and T1 from variable-flip-angle signals. `params = [M0, T1]`.
///
/// Initialised by the DESPOT1 linearisation S/sin αe = E1·S/tan αe + M0(1−E1).
pub fn fit_vfa_t1(signals: &[f64], fas_deg: &[f64], tr: f64, b1: f64) -> Result<FitResult> {
    if signals.len() != fas_deg.len() || signals.len() < 2 {
        return Err(Error::input(format!(
            "{} VFA signals for {} flip angles (need ≥ 2)",
            signals.len(),
            fas_deg.len()
        )));
    }
    if let Some(i) = signals.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("signal {i} is not finite")));
    }
    if !(b1 > B1_WINDOW.0 && b1 < B1_WINDOW.1) {
        return Ok(FitResult::flagged(2, format!("B1 scale {b1} outside {B1_WINDOW:?}")));
    }
    let angles: Vec<f64> = fas_deg.iter().map(|a| (b1 * a).to_radians()).collect();
    let xs: Vec<f64> = signals.iter().zip(&angles).map(|(s, a)| s / a.tan()).collect();
    let ys: Vec<f64> = signals.iter().zip(&angles).map(|(s, a)| s / a.sin()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0 && slope < 1.0) {
        return Ok(FitResult::flagged(2, format!("DESPOT1 slope {slope} outside (0, 1)")));
    }
    let m0_init = (my - slope * mx) / (1.0 - slope);
    let t1_init = -tr / slope.ln();
    let model = move |p: &[f64], f: &mut [f64], j: &mut [f64]| {
        let t1 = p[1].exp();
        let e1 = (-tr / t1).exp();
        let de1_dq = e1 * tr / t1;
        for (i, a) in angles.iter().enumerate() {
            let (s, c) = a.sin_cos();
            let den = 1.0 - c * e1;
            let shape = s * (1.0 - e1) / den;
            f[i] = p[0] * shape;
            j[2 * i] = shape;
            j[2 * i + 1] = p[0] * s * (c - 1.0) / (den * den) * de1_dq;
        }
    };
    let p0 = [m0_init, t1_init.ln()];
    if p0.iter().any(|v| !v.is_finite()) {
        return Ok(FitResult::flagged(2, "DESPOT1 initialisation is not finite"));
    }
    let mut r = lm_solve(&model, signals, &p0, &LmOptions::default())?;
    r.params[1] = r.params[1].exp();
    if r.converged && !(r.params.iter().all(|v| v.is_finite()) && r.params[1] > 0.0) {
        r.converged = false;
        r.failure = Some("fit left the admissible parameter range".into());
    }
    Ok(r)
}
