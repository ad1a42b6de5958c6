//! Paired comparison of two segmentation sources over the same slices.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    bland_altman, dice, has_meniscus, pearson, rel_abs_error, roc_auc, t_test_bonferroni, BlandAltman, TTest,
};
use crate::datapipe::Mask;
use crate::error::{Error, Result};
use crate::relaxfit::{roi_stats, summarize, MapKind, RelaxMaps, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// Medial meniscus (left image half).
    Mm,
    /// Lateral meniscus (right image half).
    Lm,
    Union,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Mm, Region::Lm, Region::Union];

    pub fn name(self) -> &'static str {
        match self {
            Region::Mm => "MM",
            Region::Lm => "LM",
            Region::Union => "union",
        }
    }

    /// Restricts a whole-slice mask to this region.
    pub fn select(self, mask: &Mask) -> Mask {
        let half = mask.width() / 2;
        match self {
            Region::Mm => mask.filter_columns(|x| x < half),
            Region::Lm => mask.filter_columns(|x| x >= half),
            Region::Union => mask.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    T1,
    T1rho,
    T2star,
    Area,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::T1, Quantity::T1rho, Quantity::T2star, Quantity::Area];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::T1 => "T1",
            Quantity::T1rho => "T1rho",
            Quantity::T2star => "T2star",
            Quantity::Area => "area",
        }
    }

    fn map_kind(self) -> Option<MapKind> {
        match self {
            Quantity::T1 => Some(MapKind::T1),
            Quantity::T1rho => Some(MapKind::T1rho),
            Quantity::T2star => Some(MapKind::T2star),
            Quantity::Area => None,
        }
    }
}

/// T1, T1ρ and T2* values of one slice with their convergence flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceQuant {
    pub values: [Vec<f32>; 3],
    pub converged: [Vec<bool>; 3],
}

impl SliceQuant {
    const KINDS: [MapKind; 3] = [MapKind::T1, MapKind::T1rho, MapKind::T2star];

    pub fn from_maps(maps: &RelaxMaps, z: usize) -> Self {
        let parts = Self::KINDS.map(|k| {
            let (v, ok) = maps.slice(k, z);
            (v.to_vec(), ok)
        });
        let [(v0, c0), (v1, c1), (v2, c2)] = parts;
        SliceQuant {
            values: [v0, v1, v2],
            converged: [c0, c1, c2],
        }
    }

    fn get(&self, kind: MapKind) -> (&[f32], &[bool]) {
        let i = Self::KINDS.iter().position(|&k| k == kind).expect("relaxation kind");
        (&self.values[i], &self.converged[i])
    }
}

/// Two segmentation sources on the same, aligned slices. `a` is the
/// reference for relative errors, detection counts and the ROC.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub label_a: &'a str,
    pub label_b: &'a str,
    pub a: &'a [Mask],
    pub b: &'a [Mask],
    /// Probability maps behind `b`, when `b` is a network prediction.
    pub b_prob: Option<&'a [&'a [f32]]>,
    pub quant: &'a [SliceQuant],
    pub pixel_area_mm2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOptions {
    pub alpha: f64,
    /// Number of comparisons for the Bonferroni correction.
    pub comparisons: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            alpha: 0.01,
            comparisons: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceStats {
    pub region: Region,
    /// Dice of every slice where either source marks the region.
    pub per_slice: Vec<f64>,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityComparison {
    pub region: Region,
    pub quantity: Quantity,
    /// Slices where both sources yield a value.
    pub slices: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub pearson_r: Option<f64>,
    pub pearson_p: Option<f64>,
    pub bland_altman: Option<BlandAltman>,
    pub t_test: Option<TTest>,
    pub rel_error_pct: Option<f64>,
    /// Why a statistic is missing, if any.
    pub notes: Vec<String>,
}

/// Slice-level detection agreement under the two-adjacent-pixel rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Detection {
    pub both: usize,
    pub neither: usize,
    /// Detected by `b` only: false positives against reference `a`.
    pub false_positive: usize,
    pub false_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub label_a: String,
    pub label_b: String,
    pub n_slices: usize,
    pub dice: Vec<DiceStats>,
    pub quantities: Vec<QuantityComparison>,
    pub detection: Detection,
    pub auc: Option<f64>,
    pub roc_curve: Vec<(f64, f64)>,
}

/// Assembles Dice, ROI-mean agreement statistics, detection counts and the
/// pooled pixel AUC for one comparison pair.
pub fn compare_pair(input: &PairInput, opts: &CompareOptions) -> Result<PairReport> {
    let n = input.a.len();
    if input.b.len() != n || input.quant.len() != n {
        return Err(Error::input(format!(
            "unaligned slice sets: {} / {} masks, {} map slices",
            n,
            input.b.len(),
            input.quant.len()
        )));
    }
    if let Some(p) = input.b_prob {
        if p.len() != n {
            return Err(Error::input(format!("{} probability maps for {n} slices", p.len())));
        }
    }

    let mut dice_stats = Vec::new();
    let mut quantities = Vec::new();
    for region in Region::ALL {
        let ra: Vec<Mask> = input.a.iter().map(|m| region.select(m)).collect();
        let rb: Vec<Mask> = input.b.iter().map(|m| region.select(m)).collect();
        let mut per_slice = Vec::new();
        for (ma, mb) in ra.iter().zip(&rb) {
            if !(ma.is_empty() && mb.is_empty()) {
                per_slice.push(dice(ma, mb)?);
            }
        }
        dice_stats.push(DiceStats {
            region,
            summary: summarize(&per_slice),
            per_slice,
        });
        for quantity in Quantity::ALL {
            quantities.push(compare_quantity(input, opts, region, quantity, &ra, &rb)?);
        }
    }

    let mut detection = Detection::default();
    for (ma, mb) in input.a.iter().zip(input.b) {
        match (has_meniscus(ma), has_meniscus(mb)) {
            (true, true) => detection.both += 1,
            (false, false) => detection.neither += 1,
            (false, true) => detection.false_positive += 1,
            (true, false) => detection.false_negative += 1,
        }
    }

    let (auc, roc_curve) = match input.b_prob {
        Some(p) => {
            let truth: Vec<&Mask> = input.a.iter().collect();
            let roc = roc_auc(p, &truth)?;
            (Some(roc.auc), super::metrics::thin_curve(&roc.curve, 256))
        }
        None => (None, Vec::new()),
    };

    Ok(PairReport {
        label_a: input.label_a.to_string(),
        label_b: input.label_b.to_string(),
        n_slices: n,
        dice: dice_stats,
        quantities,
        detection,
        auc,
        roc_curve,
    })
}

fn roi_value(input: &PairInput, quantity: Quantity, z: usize, mask: &Mask) -> Result<Option<f64>> {
    if mask.is_empty() {
        return Ok(None);
    }
    Ok(match quantity.map_kind() {
        None => Some(mask.count() as f64 * input.pixel_area_mm2),
        Some(kind) => {
            let (values, ok) = input.quant[z].get(kind);
            roi_stats(values, ok, mask, input.pixel_area_mm2)?.mean()
        }
    })
}

fn compare_quantity(
    input: &PairInput,
    opts: &CompareOptions,
    region: Region,
    quantity: Quantity,
    ra: &[Mask],
    rb: &[Mask],
) -> Result<QuantityComparison> {
    let mut slices = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for z in 0..ra.len() {
        if let (Some(va), Some(vb)) = (
            roi_value(input, quantity, z, &ra[z])?,
            roi_value(input, quantity, z, &rb[z])?,
        ) {
            slices.push(z);
            a.push(va);
            b.push(vb);
        }
    }
    let mut notes = Vec::new();
    let mut note = |what: &str, e: &Error| notes.push(format!("{what}: {e}"));
    let (pearson_r, pearson_p) = match pearson(&a, &b) {
        Ok((r, p)) => (Some(r), Some(p)),
        Err(e) => {
            note("pearson", &e);
            (None, None)
        }
    };
    let ba = bland_altman(&a, &b).map_err(|e| note("bland-altman", &e)).ok();
    let tt = t_test_bonferroni(&a, &b, opts.comparisons, opts.alpha)
        .map_err(|e| note("t-test", &e))
        .ok();
    let rel = rel_abs_error(&a, &b).map_err(|e| note("relative error", &e)).ok();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(QuantityComparison {
        region,
        quantity,
        mean_a: mean(&a),
        mean_b: mean(&b),
        slices,
        a,
        b,
        pearson_r,
        pearson_p,
        bland_altman: ba,
        t_test: tt,
        rel_error_pct: rel,
        notes,
    })
}

/// All comparison pairs of one evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub comparisons: Vec<PairReport>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            context: "evaluation report".into(),
            source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "evaluation report".into(),
            source,
        })
    }

    /// Segmentation table: one row per comparison pair × region.
    pub fn segmentation_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "comparison",
            "region",
            "n_slices",
            "dice_mean",
            "dice_median",
            "dice_ci_low",
            "dice_ci_high",
            "auc",
            "false_positive",
            "false_negative",
        ];
        w.write_record(header).expect("in-memory csv");
        for c in &self.comparisons {
            for d in &c.dice {
                let s = d.summary;
                w.write_record([
                    format!("{} vs {}", c.label_a, c.label_b),
                    d.region.name().to_string(),
                    d.per_slice.len().to_string(),
                    opt(s.map(|s| s.mean)),
                    opt(s.map(|s| s.median)),
                    opt(s.map(|s| s.ci_low)),
                    opt(s.map(|s| s.ci_high)),
                    opt(c.auc),
                    c.detection.false_positive.to_string(),
                    c.detection.false_negative.to_string(),
                ])
                .expect("in-memory csv");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Quantitative table: one row per comparison pair × region × quantity.
    pub fn quantitative_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "comparison",
            "region",
            "quantity",
            "n",
            "mean_a",
            "mean_b",
            "pearson_r",
            "pearson_p",
            "ba_bias",
            "ba_loa_low",
            "ba_loa_high",
            "t",
            "p_raw",
            "p_adj",
            "significant",
            "rel_error_pct",
        ];
        w.write_record(header).expect("in-memory csv");
        for c in &self.comparisons {
            for q in &c.quantities {
                let ba = q.bland_altman.as_ref();
                let tt = q.t_test.as_ref();
                w.write_record([
                    format!("{} vs {}", c.label_a, c.label_b),
                    q.region.name().to_string(),
                    q.quantity.name().to_string(),
                    q.a.len().to_string(),
                    opt(q.mean_a),
                    opt(q.mean_b),
                    opt(q.pearson_r),
                    opt(q.pearson_p),
                    opt(ba.map(|b| b.bias)),
                    opt(ba.map(|b| b.loa_low)),
                    opt(ba.map(|b| b.loa_high)),
                    opt(tt.map(|t| t.t)),
                    opt(tt.map(|t| t.p_raw)),
                    opt(tt.map(|t| t.p_adj)),
                    tt.map(|t| t.significant.to_string()).unwrap_or_default(),
                    opt(q.rel_error_pct),
                ])
                .expect("in-memory csv");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Writes `report.json`, `segmentation.csv` and `quantitative.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("report.json", self.to_json()?),
            ("segmentation.csv", self.segmentation_csv()),
            ("quantitative.csv", self.quantitative_csv()),
        ] {
            let path = dir.join(name);
            std::fs::File::create(&path)
                .and_then(|mut f| f.write_all(text.as_bytes()))
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(w: usize, h: usize, x0: usize, x1: usize, y0: usize, y1: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
    }

    fn quant(w: usize, h: usize, z: usize) -> SliceQuant {
        let n = w * h;
        let v = |base: f32| {
            (0..n)
                .map(|i| base + (i % w) as f32 * 0.5 + z as f32)
                .collect::<Vec<_>>()
        };
        SliceQuant {
            values: [v(950.0), v(27.0), v(10.0)],
            converged: [vec![true; n], vec![true; n], vec![true; n]],
        }
    }

    fn slices() -> (Vec<Mask>, Vec<SliceQuant>) {
        let masks: Vec<Mask> = (0..5)
            .map(|z| {
                let mm = blob(16, 8, 2, 5 + z % 2, 2, 5);
                let lm = blob(16, 8, 10, 13, 1 + z % 3, 5);
                mm.union(&lm).unwrap()
            })
            .collect();
        let quant = (0..5).map(|z| quant(16, 8, z)).collect();
        (masks, quant)
    }

    #[test]
    fn identical_sources() {
        let (m, q) = slices();
        let input = PairInput {
            label_a: "a",
            label_b: "b",
            a: &m,
            b: &m,
            b_prob: None,
            quant: &q,
            pixel_area_mm2: 0.25,
        };
        let r = compare_pair(&input, &CompareOptions::default()).unwrap();
        assert_eq!(r.dice.len(), 3);
        assert!(r
            .dice
            .iter()
            .all(|d| d.per_slice.iter().all(|&v| v == 1.0) && d.per_slice.len() == 5));
        assert_eq!(r.quantities.len(), 12);
        for c in &r.quantities {
            assert_eq!(c.rel_error_pct, Some(0.0));
            assert_eq!(c.bland_altman.as_ref().unwrap().bias, 0.0);
            assert!(!c.t_test.as_ref().unwrap().significant);
        }
        assert_eq!(r.detection.both, 5);
        let report = EvalReport { comparisons: vec![r] };
        assert_eq!(EvalReport::from_json(&report.to_json().unwrap()).unwrap(), report);
        assert_eq!(report.segmentation_csv().lines().count(), 4);
        assert_eq!(report.quantitative_csv().lines().count(), 13);
    }

    #[test]
    fn erosion_dice_matches_pixel_counts() {
        let (m, q) = slices();
        let eroded: Vec<Mask> = m.iter().map(Mask::erode).collect();
        let input = PairInput {
            label_a: "truth",
            label_b: "eroded",
            a: &m,
            b: &eroded,
            b_prob: None,
            quant: &q,
            pixel_area_mm2: 1.0,
        };
        let r = compare_pair(&input, &CompareOptions::default()).unwrap();
        let union = r.dice.iter().find(|d| d.region == Region::Union).unwrap();
        for (z, (full, er)) in m.iter().zip(&eroded).enumerate() {
            let oracle = 2.0 * er.count() as f64 / (full.count() + er.count()) as f64;
            assert_eq!(union.per_slice[z], oracle);
        }
        let area = r
            .quantities
            .iter()
            .find(|c| c.region == Region::Union && c.quantity == Quantity::Area)
            .unwrap();
        assert_eq!(area.a[0], m[0].count() as f64);
    }

    #[test]
    fn detection_and_auc() {
        let (m, q) = slices();
        let mut a = m.clone();
        a[4] = Mask::empty(16, 8);
        let probs: Vec<Vec<f32>> = m.iter().map(Mask::to_f32).collect();
        let refs: Vec<&[f32]> = probs.iter().map(Vec::as_slice).collect();
        let input = PairInput {
            label_a: "a",
            label_b: "b",
            a: &a,
            b: &m,
            b_prob: Some(&refs),
            quant: &q,
            pixel_area_mm2: 1.0,
        };
        let r = compare_pair(&input, &CompareOptions::default()).unwrap();
        assert_eq!(r.detection.false_positive, 1);
        assert_eq!(r.detection.both, 4);
        assert!(r.auc.unwrap() < 1.0 && r.auc.unwrap() > 0.9);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let (m, q) = slices();
        let input = PairInput {
            label_a: "a",
            label_b: "b",
            a: &m,
            b: &m[..3],
            b_prob: None,
            quant: &q,
            pixel_area_mm2: 1.0,
        };
        assert!(compare_pair(&input, &CompareOptions::default()).is_err());
    }
}
