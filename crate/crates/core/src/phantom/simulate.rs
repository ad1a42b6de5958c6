use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::generate::ParameterMaps;
use crate::datapipe::{Acquisition, Volume, VolumeHeader};
use crate::error::{Error, Result};
use crate::relaxfit::{afi_ratio, AcquisitionSet, SequenceParams};

/// Relative amplitude of the AFI TR1 signal. The pair enters the B1
/// estimate only through its ratio, which follows the ideal steady-state
/// relation exactly.
pub const AFI_AMPLITUDE: f64 = 0.2;

/// Simulated examination plus the B1 field that shaped it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub acquisitions: AcquisitionSet,
    pub b1: Volume,
}

/// Smooth B1 scale: 1 + a·(c1·u + c2·v + c3·u·v + c4·w)/Σ|c| over
/// normalised coordinates u, v, w ∈ [−1, 1]; always within [1 − a, 1 + a].
pub fn b1_field(header: &VolumeHeader, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let norm: f64 = c.iter().map(|v| v.abs()).sum::<f64>().max(1e-12);
    let [nx, ny, nz] = header.matrix;
    let coord = |i: usize, n: usize| {
        if n > 1 {
            2.0 * i as f64 / (n - 1) as f64 - 1.0
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(header.voxel_count());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (u, v, w) = (coord(x, nx), coord(y, ny), coord(z, nz));
                let p = (c[0] * u + c[1] * v + c[2] * u * v + c[3] * w) / norm;
                out.push((1.0 + amplitude * p) as f32);
            }
        }
    }
    out
}

/// Forward-simulates the 6 echo, 2 AFI, 4 VFA and 7 AFP volumes from the
/// parameter maps, each with independent additive Gaussian noise of
/// standard deviation `sigma`.
pub fn simulate_acquisition(
    params: &ParameterMaps,
    seq: &SequenceParams,
    sigma: f64,
    b1_amplitude: f64,
    seed: u64,
) -> Result<Simulation> {
    seq.validate()?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma {sigma} must be ≥ 0")));
    }
    let h = params.header().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b1 = b1_field(&h, b1_amplitude, &mut rng);
    let s0 = &params.s0.data;
    let n = h.voxel_count();
    let mut volume = |tag: &str, k: usize, value: f64, f: &dyn Fn(usize) -> f64| -> Result<Volume> {
        let data = (0..n)
            .map(|v| {
                let noise = if sigma > 0.0 {
                    sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                (f(v) + noise) as f32
            })
            .collect();
        let header = VolumeHeader {
            acquisition: Acquisition::new(tag, k, Some(value)),
            ..h.clone()
        };
        Volume::new(header, data)
    };
    let p = |vol: &Volume, v: usize| f64::from(vol.data[v]);
    let mut t2star = Vec::new();
    for (k, &te) in seq.t2star_tes.iter().enumerate() {
        t2star.push(volume("t2star", k, te, &|v| {
            p(&params.s0, v) * (-te / p(&params.t2star, v)).exp()
        })?);
    }
    let n_afi = seq.afi_n();
    let alpha = |v: usize| f64::from(b1[v]) * seq.afi_fa_nominal;
    let afi1 = volume("afi", 0, seq.afi_tr1, &|v| {
        let a = alpha(v).to_radians();
        AFI_AMPLITUDE * f64::from(s0[v]) * a.sin() * (n_afi + a.cos()) / (1.0 + n_afi)
    })?;
    let afi2 = volume("afi", 1, seq.afi_tr2, &|v| {
        let a = alpha(v).to_radians();
        AFI_AMPLITUDE * f64::from(s0[v]) * a.sin() * (n_afi + a.cos()) / (1.0 + n_afi) * afi_ratio(alpha(v), n_afi)
    })?;
    let mut vfa = Vec::new();
    for (k, &fa) in seq.vfa_fas.iter().enumerate() {
        vfa.push(volume("vfa", k, fa, &|v| {
            let a = (f64::from(b1[v]) * fa).to_radians();
            let e1 = (-seq.vfa_tr / p(&params.t1, v)).exp();
            p(&params.s0, v) * a.sin() * (1.0 - e1) / (1.0 - a.cos() * e1)
        })?);
    }
    let mut t1rho = Vec::new();
    for (k, &nafp) in seq.t1rho_nafp.iter().enumerate() {
        let tsl = f64::from(nafp) * seq.tau_afp;
        t1rho.push(volume("t1rho", k, f64::from(nafp), &|v| {
            p(&params.s0, v) * (-tsl / p(&params.t1rho, v)).exp()
        })?);
    }
    let b1 = Volume::new(
        VolumeHeader {
            acquisition: Acquisition::new("b1", 0, None),
            ..h
        },
        b1,
    )?;
    Ok(Simulation {
        acquisitions: AcquisitionSet {
            t2star,
            afi: [afi1, afi2],
            vfa,
            t1rho,
        },
        b1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomSpec};

    fn spec() -> PhantomSpec {
        PhantomSpec {
            grid: [48, 48, 6],
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn nafp_zero_equals_s0_without_noise() {
        let t = generate(&spec(), 1, "s").unwrap();
        let seq = SequenceParams::default();
        let sim = simulate_acquisition(&t.params, &seq, 0.0, 0.15, 2).unwrap();
        assert_eq!(sim.acquisitions.t1rho[0].data, t.params.s0.data);
        assert!(sim.b1.data.iter().all(|&b| (0.85..=1.15).contains(&b)));
    }

    #[test]
    fn linear_in_s0() {
        let t = generate(&spec(), 1, "s").unwrap();
        let mut doubled = t.params.clone();
        doubled.s0.data.iter_mut().for_each(|v| *v *= 2.0);
        let seq = SequenceParams::default();
        let a = simulate_acquisition(&t.params, &seq, 0.0, 0.15, 2).unwrap();
        let b = simulate_acquisition(&doubled, &seq, 0.0, 0.15, 2).unwrap();
        for (va, vb) in a.acquisitions.volumes().zip(b.acquisitions.volumes()) {
            for (x, y) in va.data.iter().zip(&vb.data) {
                assert!((2.0 * x - y).abs() <= 1e-6 * y.abs().max(1.0), "{x} {y}");
            }
        }
    }

    #[test]
    fn noise_is_seeded() {
        let t = generate(&spec(), 1, "s").unwrap();
        let seq = SequenceParams::default();
        let a = simulate_acquisition(&t.params, &seq, 5.0, 0.15, 3).unwrap();
        let b = simulate_acquisition(&t.params, &seq, 5.0, 0.15, 3).unwrap();
        assert_eq!(a, b);
        let clean = simulate_acquisition(&t.params, &seq, 0.0, 0.15, 3).unwrap();
        let resid: Vec<f64> = a.acquisitions.t2star[0]
            .data
            .iter()
            .zip(&clean.acquisitions.t2star[0].data)
            .map(|(x, y)| f64::from(x - y))
            .collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd - 5.0).abs() < 0.3, "{sd}");
    }
}
