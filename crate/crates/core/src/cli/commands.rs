//! The pipeline stages behind each subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::plot::{Chart, HLine, Mark, Series};
use super::provenance::{write_run_record, InputLog};
use crate::attunet::{import_pretrained, load_checkpoint, predict, save_checkpoint, AttentionUNet, WeightContainer};
use crate::datapipe::{
    augment, load_mask_volume, load_volume, read_manifest, save_mask_volume, save_volume, write_manifest, Acquisition,
    ManifestRow, Mask, MaskVolume, SliceImage, SplitName, Volume, VolumeHeader,
};
use crate::error::{Error, Result};
use crate::evalstats::{compare_pair, EvalReport, PairInput, Quantity, Region, SliceQuant};
use crate::phantom::{acquisition_paths, load_acquisitions, make_dataset, prepare_subject};
use crate::relaxfit::{fit_volume, MapKind, RelaxMaps};
use crate::trainer::train_with_progress;

/// Parses `train | validation | test | all` (`None` = all subjects).
pub fn parse_split(s: &str) -> Result<Option<SplitName>> {
    match s {
        "train" => Ok(Some(SplitName::Train)),
        "validation" | "val" => Ok(Some(SplitName::Validation)),
        "test" => Ok(Some(SplitName::Test)),
        "all" => Ok(None),
        other => Err(Error::Config(format!(
            "unknown split '{other}' (expected train, validation, test or all)"
        ))),
    }
}

/// A phantom dataset directory indexed by its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Dataset {
    pub fn open(root: &Path, log: &mut InputLog) -> Result<Self> {
        let manifest = root.join("manifest.csv");
        log.add(&manifest);
        Ok(Dataset {
            root: root.to_path_buf(),
            rows: read_manifest(&manifest)?,
        })
    }

    /// Subject ids of a split (all subjects for `None`), sorted.
    pub fn subjects(&self, split: Option<SplitName>) -> Vec<String> {
        let mut ids: Vec<String> = self
            .rows
            .iter()
            .filter(|r| split.is_none_or(|s| r.split == s))
            .map(|r| r.subject_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn path(&self, subject: &str, kind: &str, slice: Option<usize>) -> Result<PathBuf> {
        self.rows
            .iter()
            .find(|r| r.subject_id == subject && r.kind == kind && r.slice == slice)
            .map(|r| self.root.join(&r.path))
            .ok_or_else(|| {
                Error::input(format!(
                    "manifest has no '{kind}' entry for {subject} (slice {slice:?})"
                ))
            })
    }

    /// Prepared slice/mask pairs of one subject in slice order.
    pub fn prepared_pairs(&self, subject: &str, log: &mut InputLog) -> Result<Vec<(usize, SliceImage, Mask)>> {
        let mut zs: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.subject_id == subject && r.kind == "slice")
            .filter_map(|r| r.slice)
            .collect();
        zs.sort_unstable();
        zs.into_iter()
            .map(|z| {
                let ps = self.path(subject, "slice", Some(z))?;
                let pm = self.path(subject, "slice_mask", Some(z))?;
                log.add(&ps);
                log.add(&pm);
                Ok((z, load_volume(&ps)?.slice(0), load_mask_volume(&pm)?.slice(0)))
            })
            .collect()
    }

    fn subtraction(&self, subject: &str, log: &mut InputLog) -> Result<Volume> {
        let p = self.path(subject, "subtraction", None)?;
        log.add(&p);
        load_volume(&p)
    }

    fn truth_union(&self, subject: &str, log: &mut InputLog) -> Result<MaskVolume> {
        let p = self.path(subject, "mask_union", None)?;
        log.add(&p);
        load_mask_volume(&p)
    }
}

/// `phantom`: writes a seeded cohort to `out`.
pub fn cmd_phantom(cfg: &RunConfig, out: &Path) -> Result<String> {
    let [a, b, c] = cfg.split;
    let rows = make_dataset(
        out,
        cfg.subjects,
        (a, b, c),
        &cfg.phantom,
        &cfg.sequence,
        &cfg.prep,
        cfg.seed,
    )?;
    write_run_record(out, "phantom", cfg, &InputLog::default())?;
    Ok(format!(
        "wrote {} subjects ({} files) to {}",
        cfg.subjects,
        rows.len(),
        out.display()
    ))
}

/// `prep`: re-prepares every subject's slices with the configured chain.
pub fn cmd_prep(cfg: &RunConfig, data: &Path) -> Result<String> {
    let mut log = InputLog::default();
    let ds = Dataset::open(data, &mut log)?;
    let mut rows = Vec::new();
    let mut n_slices = 0;
    for id in ds.subjects(None) {
        let sub = ds.subtraction(&id, &mut log)?;
        let union = ds.truth_union(&id, &mut log)?;
        let template = ds
            .rows
            .iter()
            .find(|r| r.subject_id == id)
            .cloned()
            .expect("subject listed in manifest");
        rows.extend(
            ds.rows
                .iter()
                .filter(|r| r.subject_id == id && r.kind != "slice" && r.kind != "slice_mask")
                .cloned(),
        );
        let dir = data.join(&id).join("prep");
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for (z, img, mask) in prepare_subject(&sub, &union, &cfg.prep)? {
            let ps = format!("{id}/prep/slice_{z:03}.mvol");
            let pm = format!("{id}/prep/mask_{z:03}.mvol");
            save_volume(&img, &data.join(&ps))?;
            save_mask_volume(&mask, &data.join(&pm))?;
            for (kind, path) in [("slice", ps), ("slice_mask", pm)] {
                rows.push(ManifestRow {
                    kind: kind.into(),
                    slice: Some(z),
                    path,
                    ..template.clone()
                });
            }
            n_slices += 1;
        }
    }
    write_manifest(&data.join("manifest.csv"), &rows)?;
    write_run_record(data, "prep", cfg, &log)?;
    Ok(format!(
        "prepared {n_slices} slices at {}x{}",
        cfg.prep.size, cfg.prep.size
    ))
}

/// Prepared pairs of a split that contain meniscus pixels.
pub fn training_pairs(ds: &Dataset, split: SplitName, log: &mut InputLog) -> Result<Vec<(SliceImage, Mask)>> {
    let mut out = Vec::new();
    for id in ds.subjects(Some(split)) {
        for (_, img, mask) in ds.prepared_pairs(&id, log)? {
            if !mask.is_empty() {
                out.push((img, mask));
            }
        }
    }
    Ok(out)
}

/// `train`: fits a network on the train split, selecting on validation.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, pretrained: Option<&Path>) -> Result<String> {
    let mut log = InputLog::default();
    let ds = Dataset::open(data, &mut log)?;
    let mut train_set = training_pairs(&ds, SplitName::Train, &mut log)?;
    let val_set = training_pairs(&ds, SplitName::Validation, &mut log)?;
    if cfg.prep.augment {
        let mut expanded = Vec::with_capacity(train_set.len() * 6);
        for (img, mask) in &train_set {
            expanded.extend(augment(img, mask)?);
        }
        train_set = expanded;
    }
    let mut net = AttentionUNet::<f32>::new(cfg.net.clone())?;
    if let Some(p) = pretrained {
        log.add(p);
        import_pretrained(&mut net, &WeightContainer::read(p)?)?;
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (best, train_log) = train_with_progress(net, &train_set, &val_set, &cfg.train, &mut |r| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  val dice {:.4}  lr {:.2e}  {:.1}s",
            r.epoch, r.train_loss, r.val_dice, r.lr, r.seconds
        );
    })?;
    save_checkpoint(&best, &out.join("model.mwc"))?;
    train_log.save_csv(&out.join("train_log.csv"))?;
    write_run_record(out, "train", cfg, &log)?;
    Ok(format!(
        "trained {} epochs on {} slices; best validation Dice {:.4} at epoch {}",
        train_log.epochs.len(),
        train_set.len(),
        train_log.best_val_dice().unwrap_or(f64::NAN),
        train_log.best_epoch
    ))
}

/// Probability map and mask of every slice of `volume` on its native grid.
pub fn segment_volume(net: &AttentionUNet<f32>, cfg: &RunConfig, volume: &Volume) -> Result<(Volume, MaskVolume)> {
    let (nx, ny) = (volume.nx(), volume.ny());
    let threshold = net.config().threshold;
    let mut probs = Vec::with_capacity(volume.nz());
    let mut masks = Vec::with_capacity(volume.nz());
    for z in 0..volume.nz() {
        let prepared = cfg.prep.prepare_slice(&volume.slice(z))?;
        let (prob, _) = predict(net, &prepared)?;
        let small = SliceImage::new(prob.width, prob.height, prob.data)?;
        let restored = cfg.prep.restore_probability(&small, nx, ny)?;
        masks.push(Mask::threshold(nx, ny, &restored.data, threshold)?);
        probs.push(restored);
    }
    let header = |tag: &str| VolumeHeader {
        acquisition: Acquisition::new(tag, 0, None),
        ..volume.header.clone()
    };
    Ok((
        Volume::from_slices(header("probability"), &probs)?,
        MaskVolume::from_slices(header("pred_union"), &masks)?,
    ))
}

/// `segment`: predicts every slice of the chosen subjects.
pub fn cmd_segment(cfg: &RunConfig, data: &Path, model: &Path, out: &Path, split: Option<SplitName>) -> Result<String> {
    let mut log = InputLog::default();
    let ds = Dataset::open(data, &mut log)?;
    log.add(model);
    let mut net = load_checkpoint(model)?;
    net.set_threshold(cfg.net.threshold)?;
    if net.config().input_size != cfg.prep.size {
        return Err(Error::Config(format!(
            "model input {} does not match prep.size {}",
            net.config().input_size,
            cfg.prep.size
        )));
    }
    let ids = ds.subjects(split);
    for id in &ids {
        let sub = ds.subtraction(id, &mut log)?;
        let (prob, mask) = segment_volume(&net, cfg, &sub)?;
        let dir = out.join(id);
        save_volume(&prob, &dir.join("prob.mvol"))?;
        save_mask_volume(&mask, &dir.join("pred_union.mvol"))?;
    }
    write_run_record(out, "segment", cfg, &log)?;
    Ok(format!("segmented {} subjects into {}", ids.len(), out.display()))
}

fn union_masks(a: &MaskVolume, b: &MaskVolume) -> Result<MaskVolume> {
    if !a.header.same_grid(&b.header) {
        return Err(Error::input("mask volumes are on different grids"));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x | y).collect();
    MaskVolume::new(a.header.clone(), data)
}

/// `fit`: relaxation maps inside the truth ∪ predicted masks (or the whole
/// volume).
pub fn cmd_fit(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    split: Option<SplitName>,
    segmentations: &[PathBuf],
    whole_volume: bool,
) -> Result<String> {
    let mut log = InputLog::default();
    let ds = Dataset::open(data, &mut log)?;
    let ids = ds.subjects(split);
    let mut fitted = 0usize;
    for id in &ids {
        let dir = data.join(id);
        for p in acquisition_paths(&dir, &cfg.sequence) {
            log.add(p);
        }
        let acq = load_acquisitions(&dir, &cfg.sequence)?;
        let mask = if whole_volume {
            None
        } else {
            let mut m = ds.truth_union(id, &mut log)?;
            for seg in segmentations {
                let p = seg.join(id).join("pred_union.mvol");
                log.add(&p);
                m = union_masks(&m, &load_mask_volume(&p)?)?;
            }
            Some(m)
        };
        fitted += mask.as_ref().map_or(acq.header().voxel_count(), MaskVolume::count);
        let maps = fit_volume(&acq, &cfg.sequence, mask.as_ref(), cfg.parallel)?;
        maps.save(&out.join(id))?;
    }
    write_run_record(out, "fit", cfg, &log)?;
    Ok(format!("fitted {fitted} voxels in {} subjects", ids.len()))
}

fn source_label(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// `evaluate`: compares ground truth and every segmentation source pairwise.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    data: &Path,
    maps_dir: &Path,
    segmentations: &[PathBuf],
    out: &Path,
    split: Option<SplitName>,
) -> Result<String> {
    let mut log = InputLog::default();
    let ds = Dataset::open(data, &mut log)?;
    let ids = ds.subjects(split);
    let n_src = segmentations.len() + 1;
    let mut masks: Vec<Vec<Mask>> = vec![Vec::new(); n_src];
    let mut probs: Vec<Vec<Vec<f32>>> = vec![Vec::new(); n_src];
    let mut quant = Vec::new();
    let mut pixel_area: Option<f64> = None;
    for id in &ids {
        let truth = ds.truth_union(id, &mut log)?;
        let area = truth.header.pixel_area_mm2();
        if pixel_area.is_some_and(|a| a != area) {
            return Err(Error::input("subjects have different pixel spacing"));
        }
        pixel_area = Some(area);
        let mdir = maps_dir.join(id);
        for name in MapKind::ALL.iter().map(|k| k.name()).chain(["status"]) {
            log.add(mdir.join(format!("{name}.mvol")));
        }
        let maps = RelaxMaps::load(&mdir)?;
        if !maps.header.same_grid(&truth.header) {
            return Err(Error::input(format!(
                "{id}: relaxation maps and masks are on different grids"
            )));
        }
        let nz = truth.header.matrix[2];
        let mut preds = Vec::new();
        for seg in segmentations {
            let pm = seg.join(id).join("pred_union.mvol");
            let pp = seg.join(id).join("prob.mvol");
            log.add(&pm);
            log.add(&pp);
            let (m, p) = (load_mask_volume(&pm)?, load_volume(&pp)?);
            if !m.header.same_grid(&truth.header) || !p.header.same_grid(&truth.header) {
                return Err(Error::input(format!("{id}: segmentation grid differs from truth")));
            }
            preds.push((m, p));
        }
        for z in 0..nz {
            masks[0].push(truth.slice(z));
            for (k, (m, p)) in preds.iter().enumerate() {
                masks[k + 1].push(m.slice(z));
                probs[k + 1].push(p.slice(z).data);
            }
            quant.push(SliceQuant::from_maps(&maps, z));
        }
    }
    let pixel_area = pixel_area.ok_or_else(|| Error::input("no subjects in the selected split"))?;
    let labels: Vec<String> = std::iter::once("truth".to_string())
        .chain(segmentations.iter().map(|p| source_label(p)))
        .collect();
    let mut report = EvalReport::default();
    for i in 0..n_src {
        for j in i + 1..n_src {
            let prob_refs: Vec<&[f32]> = probs[j].iter().map(Vec::as_slice).collect();
            let input = PairInput {
                label_a: &labels[i],
                label_b: &labels[j],
                a: &masks[i],
                b: &masks[j],
                b_prob: (i == 0).then_some(prob_refs.as_slice()),
                quant: &quant,
                pixel_area_mm2: pixel_area,
            };
            report.comparisons.push(compare_pair(&input, &cfg.compare)?);
        }
    }
    report.save(out)?;
    write_run_record(out, "evaluate", cfg, &log)?;
    Ok(format!(
        "evaluated {} comparison(s) over {} slices of {} subjects",
        report.comparisons.len(),
        quant.len(),
        ids.len()
    ))
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "–".into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `report`: SVG plots, CSV tables and a Markdown summary of an evaluation.
pub fn cmd_report(cfg: &RunConfig, eval_dir: &Path, out: &Path) -> Result<String> {
    let mut log = InputLog::default();
    let rp = eval_dir.join("report.json");
    log.add(&rp);
    let text = std::fs::read_to_string(&rp).map_err(|e| Error::io(&rp, e))?;
    let report = EvalReport::from_json(&text)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files: Vec<String> = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        write_text(&out.join(&name), &text)?;
        files.push(name);
        Ok(())
    };
    emit("table1_segmentation.csv".into(), report.segmentation_csv())?;
    emit("table2_quantitative.csv".into(), report.quantitative_csv())?;

    let mut md = String::new();
    let _ = writeln!(md, "# Evaluation summary\n");
    let _ = writeln!(md, "## Table 1 — segmentation agreement\n");
    let _ = writeln!(
        md,
        "| Comparison | Region | Slices | Dice mean (median, 95% CI) | AUC | FP slices | FN slices |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    for c in &report.comparisons {
        for d in &c.dice {
            let cell = d
                .summary
                .map(|s| format!("{:.3} ({:.3}, {:.3}–{:.3})", s.mean, s.median, s.ci_low, s.ci_high))
                .unwrap_or_else(|| "–".into());
            let _ = writeln!(
                md,
                "| {} vs {} | {} | {} | {} | {} | {} | {} |",
                c.label_a,
                c.label_b,
                d.region.name(),
                d.per_slice.len(),
                cell,
                fmt_opt(c.auc, 3),
                c.detection.false_positive,
                c.detection.false_negative
            );
        }
    }
    let _ = writeln!(md, "\n## Table 2 — quantitative agreement\n");
    let _ = writeln!(
        md,
        "| Comparison | Region | Quantity | n | Mean A | Mean B | r | BA bias (LoA) | p (adj.) | Rel. error % |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|---|---|");
    for c in &report.comparisons {
        for q in &c.quantities {
            let ba = q
                .bland_altman
                .as_ref()
                .map(|b| format!("{:.3} ({:.3}, {:.3})", b.bias, b.loa_low, b.loa_high))
                .unwrap_or_else(|| "–".into());
            let _ = writeln!(
                md,
                "| {} vs {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                c.label_a,
                c.label_b,
                q.region.name(),
                q.quantity.name(),
                q.a.len(),
                fmt_opt(q.mean_a, 2),
                fmt_opt(q.mean_b, 2),
                fmt_opt(q.pearson_r, 3),
                ba,
                fmt_opt(q.t_test.as_ref().map(|t| t.p_adj), 4),
                fmt_opt(q.rel_error_pct, 2)
            );
        }
    }

    for c in &report.comparisons {
        let pair = slug(&format!("{}_vs_{}", c.label_a, c.label_b));
        for q in c.quantities.iter().filter(|q| q.region == Region::Union) {
            let qn = slug(q.quantity.name());
            let unit = if q.quantity == Quantity::Area { "mm²" } else { "ms" };
            let mut csv = String::from("slice,a,b,mean,diff\n");
            for ((z, a), b) in q.slices.iter().zip(&q.a).zip(&q.b) {
                let _ = writeln!(csv, "{z},{a},{b},{},{}", 0.5 * (a + b), a - b);
            }
            emit(format!("{pair}_{qn}.csv"), csv)?;
            let pts: Vec<(f64, f64)> = q.a.iter().copied().zip(q.b.iter().copied()).collect();
            let lo = pts.iter().map(|p| p.0.min(p.1)).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p.0.max(p.1)).fold(f64::NEG_INFINITY, f64::max);
            let mut series = vec![Series {
                label: format!("r = {}", fmt_opt(q.pearson_r, 3)),
                points: pts,
                mark: Mark::Points,
                color: "#36c",
            }];
            if lo.is_finite() {
                series.push(Series {
                    label: "identity".into(),
                    points: vec![(lo, lo), (hi, hi)],
                    mark: Mark::Line,
                    color: "#999",
                });
            }
            let scatter = Chart {
                title: format!(
                    "{} ({}): {} vs {}",
                    q.quantity.name(),
                    q.region.name(),
                    c.label_a,
                    c.label_b
                ),
                x_label: format!("{} [{unit}]", c.label_a),
                y_label: format!("{} [{unit}]", c.label_b),
                series,
                ..Chart::default()
            };
            emit(format!("{pair}_{qn}_scatter.svg"), scatter.to_svg())?;
            if let Some(ba) = &q.bland_altman {
                let chart = Chart {
                    title: format!("Bland–Altman {} ({})", q.quantity.name(), q.region.name()),
                    x_label: format!("mean [{unit}]"),
                    y_label: format!("{} − {} [{unit}]", c.label_a, c.label_b),
                    series: vec![Series {
                        label: "slices".into(),
                        points: ba.points.clone(),
                        mark: Mark::Points,
                        color: "#36c",
                    }],
                    hlines: vec![
                        HLine {
                            y: ba.bias,
                            label: format!("bias {:.3}", ba.bias),
                            dashed: false,
                        },
                        HLine {
                            y: ba.loa_low,
                            label: format!("−1.96 SD {:.3}", ba.loa_low),
                            dashed: true,
                        },
                        HLine {
                            y: ba.loa_high,
                            label: format!("+1.96 SD {:.3}", ba.loa_high),
                            dashed: true,
                        },
                    ],
                    ..Chart::default()
                };
                emit(format!("{pair}_{qn}_bland_altman.svg"), chart.to_svg())?;
            }
        }
        if !c.roc_curve.is_empty() {
            let mut csv = String::from("fpr,tpr\n");
            for (f, t) in &c.roc_curve {
                let _ = writeln!(csv, "{f},{t}");
            }
            emit(format!("{pair}_roc.csv"), csv)?;
            let chart = Chart {
                title: format!("ROC {} vs {}", c.label_a, c.label_b),
                x_label: "false-positive rate".into(),
                y_label: "true-positive rate".into(),
                series: vec![
                    Series {
                        label: format!("AUC = {}", fmt_opt(c.auc, 4)),
                        points: c.roc_curve.clone(),
                        mark: Mark::Line,
                        color: "#36c",
                    },
                    Series {
                        label: "chance".into(),
                        points: vec![(0.0, 0.0), (1.0, 1.0)],
                        mark: Mark::Line,
                        color: "#999",
                    },
                ],
                x_range: Some((0.0, 1.0)),
                y_range: Some((0.0, 1.0)),
                ..Chart::default()
            };
            emit(format!("{pair}_roc.svg"), chart.to_svg())?;
        }
    }
    let _ = writeln!(md, "\n## Files\n");
    for f in &files {
        let _ = writeln!(md, "- [{f}]({f})");
    }
    write_text(&out.join("summary.md"), &md)?;
    write_run_record(out, "report", cfg, &log)?;
    Ok(format!(
        "wrote summary.md and {} files to {}",
        files.len(),
        out.display()
    ))
}
