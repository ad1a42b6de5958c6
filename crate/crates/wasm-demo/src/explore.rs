//! Native implementations behind the browser bindings.

use meniscus::datapipe::MaskVolume;
use meniscus::phantom::{generate, simulate_acquisition, subtraction_image, PhantomSpec};
use meniscus::relaxfit::{
    afi_flip_angle, afi_ratio, b1_scale, fit_t1rho, fit_t2star, fit_vfa_t1, model_t1rho, model_t2star, model_vfa,
    FitResult, SequenceParams,
};
use meniscus::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

/// Samples of the fitted curve drawn between the measured points.
const CURVE_POINTS: usize = 120;

#[derive(Debug, Clone, Serialize)]
pub struct FitView {
    pub x_label: &'static str,
    /// Acquisition axis: echo/spin-lock time in ms or flip angle in degrees.
    pub x: Vec<f64>,
    pub signal: Vec<f64>,
    pub curve_x: Vec<f64>,
    pub curve_y: Vec<f64>,
    pub s0: f64,
    pub t: f64,
    pub converged: bool,
    pub iterations: usize,
    pub rss: f64,
}

fn add_noise(clean: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Input(format!(
            "noise level {sigma} must be finite and non-negative"
        )));
    }
    if sigma == 0.0 {
        return Ok(clean.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    Ok(clean.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

fn dense(lo: f64, hi: f64) -> Vec<f64> {
    (0..CURVE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect()
}

fn view(
    x_label: &'static str,
    x: Vec<f64>,
    signal: Vec<f64>,
    fit: &FitResult,
    curve: impl Fn(&[f64]) -> Vec<f64>,
) -> FitView {
    let (lo, hi) = (x[0], x[x.len() - 1]);
    let curve_x = dense(lo, hi);
    let curve_y = if fit.params.iter().all(|p| p.is_finite()) {
        curve(&curve_x)
    } else {
        Vec::new()
    };
    FitView {
        x_label,
        x,
        signal,
        curve_x,
        curve_y,
        s0: fit.params[0],
        t: fit.params[1],
        converged: fit.converged,
        iterations: fit.iterations,
        rss: fit.rss,
    }
}

/// Simulates a noisy acquisition of one voxel with the default sequence and
/// fits it with the toolkit's Levenberg–Marquardt solver.
pub fn relaxation_fit(kind: &str, s0: f64, t: f64, b1: f64, sigma: f64, seed: u64) -> Result<FitView> {
    if !(s0 > 0.0 && t > 0.0 && b1 > 0.0) {
        return Err(Error::Input("S0, the relaxation time and B1 must be positive".into()));
    }
    let seq = SequenceParams::default();
    match kind {
        "t2star" => {
            let signal = add_noise(&model_t2star(&seq.t2star_tes, s0, t), sigma, seed)?;
            let fit = fit_t2star(&signal, &seq)?;
            let (a, b) = (fit.params[0], fit.params[1]);
            Ok(view("echo time [ms]", seq.t2star_tes.clone(), signal, &fit, |x| {
                model_t2star(x, a, b)
            }))
        }
        "t1rho" => {
            let signal = add_noise(&model_t1rho(&seq.t1rho_nafp, seq.tau_afp, s0, t), sigma, seed)?;
            let fit = fit_t1rho(&signal, &seq)?;
            let (a, b) = (fit.params[0], fit.params[1]);
            let tsl = seq.spin_lock_times();
            Ok(view("spin-lock time [ms]", tsl, signal, &fit, |x| {
                x.iter().map(|&s| a * (-s / b).exp()).collect()
            }))
        }
        "vfa" => {
            let signal = add_noise(&model_vfa(&seq.vfa_fas, seq.vfa_tr, b1, s0, t), sigma, seed)?;
            let fit = fit_vfa_t1(&signal, &seq.vfa_fas, seq.vfa_tr, b1)?;
            let (a, b) = (fit.params[0], fit.params[1]);
            let tr = seq.vfa_tr;
            Ok(view("flip angle [°]", seq.vfa_fas.clone(), signal, &fit, |x| {
                model_vfa(x, tr, b1, a, b)
            }))
        }
        other => Err(Error::Input(format!(
            "unknown fit kind '{other}' (t2star, t1rho or vfa)"
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct B1View {
    pub nominal_flip: f64,
    pub true_flip: f64,
    pub afi_ratio: f64,
    pub measured_flip: f64,
    pub b1_estimate: f64,
    pub t1_true: f64,
    /// VFA T1 assuming the nominal flip angles (B1 = 1).
    pub t1_uncorrected: f64,
    /// VFA T1 with the AFI-derived B1 scale.
    pub t1_corrected: f64,
}

/// Simulates an AFI pair and a VFA series in one voxel with transmit scale
/// `true_b1`, then compares VFA T1 with and without AFI correction.
pub fn b1_correction(true_b1: f64, t1: f64, sigma: f64, seed: u64) -> Result<B1View> {
    if !(true_b1 > 0.0 && t1 > 0.0) {
        return Err(Error::Input("B1 scale and T1 must be positive".into()));
    }
    let seq = SequenceParams::default();
    let n = seq.afi_n();
    let true_flip = seq.afi_fa_nominal * true_b1;
    let s1 = 1000.0;
    let pair = add_noise(&[s1, s1 * afi_ratio(true_flip, n)], sigma, seed)?;
    let measured_flip = afi_flip_angle(pair[0], pair[1], n)?;
    let b1_estimate = b1_scale(measured_flip, seq.afi_fa_nominal);
    let vfa = add_noise(
        &model_vfa(&seq.vfa_fas, seq.vfa_tr, true_b1, 1000.0, t1),
        sigma,
        seed.wrapping_add(1),
    )?;
    let uncorrected = fit_vfa_t1(&vfa, &seq.vfa_fas, seq.vfa_tr, 1.0)?;
    let corrected = fit_vfa_t1(&vfa, &seq.vfa_fas, seq.vfa_tr, b1_estimate)?;
    Ok(B1View {
        nominal_flip: seq.afi_fa_nominal,
        true_flip,
        afi_ratio: pair[1] / pair[0],
        measured_flip,
        b1_estimate,
        t1_true: t1,
        t1_uncorrected: uncorrected.params[1],
        t1_corrected: corrected.params[1],
    })
}

/// Grid of the demo phantom: small enough to regenerate interactively.
pub const PHANTOM_GRID: [usize; 3] = [96, 96, 6];

#[derive(Debug, Clone)]
pub struct SliceView {
    pub width: usize,
    pub height: usize,
    pub rgba: Vec<u8>,
    /// Value range mapped onto the colour scale.
    pub min: f64,
    pub max: f64,
}

/// Perceptually ordered dark-blue → teal → yellow ramp.
fn ramp(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 4] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [253.0, 231.0, 37.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    std::array::from_fn(|c| (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8)
}

fn outline(mask: &MaskVolume, z: usize, x: usize, y: usize) -> bool {
    let m = mask.slice(z);
    let (w, h) = (m.width(), m.height());
    m.get(x, y)
        && (x == 0
            || y == 0
            || x + 1 == w
            || y + 1 == h
            || !m.get(x - 1, y)
            || !m.get(x + 1, y)
            || !m.get(x, y - 1)
            || !m.get(x, y + 1))
}

/// Renders slice `z` of a seeded phantom layer as RGBA pixels.
pub fn phantom_slice(seed: u64, z: usize, layer: &str, overlay: bool) -> Result<SliceView> {
    let [nx, ny, nz] = PHANTOM_GRID;
    if z >= nz {
        return Err(Error::Input(format!("slice {z} outside 0..{nz}")));
    }
    let spec = PhantomSpec {
        grid: PHANTOM_GRID,
        ..PhantomSpec::default()
    };
    let seq = SequenceParams::default();
    let truth = generate(&spec, seed, "demo")?;
    let values: Vec<f32> = match layer {
        "t1" => truth.params.t1.slice(z).data,
        "t1rho" => truth.params.t1rho.slice(z).data,
        "t2star" => truth.params.t2star.slice(z).data,
        "subtraction" | "b1" => {
            let sim = simulate_acquisition(&truth.params, &seq, spec.noise_sigma, spec.b1_amplitude, seed)?;
            if layer == "b1" {
                sim.b1.slice(z).data
            } else {
                subtraction_image(&sim.acquisitions, &seq)?.slice(z).data
            }
        }
        other => {
            return Err(Error::Input(format!(
                "unknown layer '{other}' (subtraction, t1, t1rho, t2star or b1)"
            )))
        }
    };
    let finite = values.iter().filter(|v| v.is_finite()).map(|&v| f64::from(v));
    let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if max > min { max - min } else { 1.0 };
    let grey = layer == "subtraction";
    let mut rgba = Vec::with_capacity(nx * ny * 4);
    for y in 0..ny {
        for x in 0..nx {
            let v = f64::from(values[y * nx + x]);
            let t = if v.is_finite() { (v - min) / span } else { 0.0 };
            let mut px = if grey {
                let g = (255.0 * t).round() as u8;
                [g, g, g]
            } else {
                ramp(t)
            };
            if overlay {
                if outline(&truth.mask_mm, z, x, y) {
                    px = [255, 64, 64];
                } else if outline(&truth.mask_lm, z, x, y) {
                    px = [64, 160, 255];
                }
            }
            rgba.extend_from_slice(&[px[0], px[1], px[2], 255]);
        }
    }
    Ok(SliceView {
        width: nx,
        height: ny,
        rgba,
        min,
        max,
    })
}
