use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acquisition constants of the four UTE-Cones sequences. Times in ms,
/// angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceParams {
    pub t2star_tes: Vec<f64>,
    pub t2star_tr: f64,
    pub t2star_fa: f64,
    pub afi_tr1: f64,
    pub afi_tr2: f64,
    pub afi_fa_nominal: f64,
    pub vfa_tr: f64,
    pub vfa_fas: Vec<f64>,
    pub t1rho_tr: f64,
    pub t1rho_fa: f64,
    pub t1rho_nafp: Vec<u32>,
    pub tau_afp: f64,
    /// Spokes per AFP train; acquisition metadata only.
    pub nsp: u32,
}

impl Default for SequenceParams {
    fn default() -> Self {
        SequenceParams {
            t2star_tes: vec![0.032, 4.4, 8.8, 13.2, 17.6, 22.0],
            t2star_tr: 45.0,
            t2star_fa: 10.0,
            afi_tr1: 20.0,
            afi_tr2: 100.0,
            afi_fa_nominal: 45.0,
            vfa_tr: 20.0,
            vfa_fas: vec![5.0, 10.0, 20.0, 30.0],
            t1rho_tr: 500.0,
            t1rho_fa: 10.0,
            t1rho_nafp: vec![0, 2, 4, 6, 8, 12, 16],
            tau_afp: 6.048,
            nsp: 25,
        }
    }
}

impl SequenceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.t2star_tes.len() < 3 {
            return bad("at least three echo times are required".into());
        }
        if self.t2star_tes.windows(2).any(|w| w[1] <= w[0]) || self.t2star_tes[0] < 0.0 {
            return bad(format!(
                "echo times {:?} must be non-negative and strictly increasing",
                self.t2star_tes
            ));
        }
        let times = [
            ("t2star_tr", self.t2star_tr),
            ("afi_tr1", self.afi_tr1),
            ("afi_tr2", self.afi_tr2),
            ("vfa_tr", self.vfa_tr),
            ("t1rho_tr", self.t1rho_tr),
            ("tau_afp", self.tau_afp),
        ];
        if let Some((name, v)) = times.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return bad(format!("{name} = {v} must be positive"));
        }
        if self.afi_tr2 <= self.afi_tr1 {
            return bad("afi_tr2 must exceed afi_tr1".into());
        }
        if self.vfa_fas.len() < 2 || self.vfa_fas.iter().any(|a| !(*a > 0.0 && *a < 90.0)) {
            return bad(format!(
                "VFA flip angles {:?} must be at least two values in (0, 90)",
                self.vfa_fas
            ));
        }
        if self.t1rho_nafp.len() < 3 || !self.t1rho_nafp.contains(&0) {
            return bad("the AFP series needs at least three points including 0".into());
        }
        Ok(())
    }

    /// AFI repetition-time ratio n = TR2/TR1.
    pub fn afi_n(&self) -> f64 {
        self.afi_tr2 / self.afi_tr1
    }

    /// Spin-lock times N_AFP·τ in ms.
    pub fn spin_lock_times(&self) -> Vec<f64> {
        self.t1rho_nafp.iter().map(|&n| f64::from(n) * self.tau_afp).collect()
    }
}
