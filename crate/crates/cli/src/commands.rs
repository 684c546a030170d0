use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{Array3, Axis};
use pagkit::data::container::write_cache;
use pagkit::data::{load_cub_annotations, load_cub_images, synth_fixture, CubAnnotation, DomainAdapter};
use pagkit::evaluation::{robustness_sweep, zero_shot as zero_shot_eval, zero_shot_table, Table};
use pagkit::interpretability::{annotate_localization, attack_gallery, emit_png, gradient_alignment, gradient_visualization, ImageGrid};
use pagkit::models::{build, load as load_model, save};
use pagkit::training::{label_slug, member_label, train as train_model, train_family, TrainReport};
use pagkit::wsol::{heatmap_to_bbox, localization_metrics, localize_dataset, write_predictions, BoundingBox, PredictionRecord};
use pagkit::{Classifier, LabeledDataset, Split, TrainMode};

use crate::config::{load, ConvertFile, Loaded, RobustnessFile, TrainFile, VisualizeFile, WsolFile, ZeroShotFile};
use crate::output::Output;
use crate::{CliError, Common};

fn open<T>(c: &Common, loaded: &Loaded<T>) -> Result<Output, CliError> {
    Output::create(&c.out, loaded.digest.clone(), loaded.seed, c.deterministic)
}

fn checkpoint_dir(c: &Common, configured: &Option<PathBuf>) -> PathBuf {
    configured.clone().unwrap_or_else(|| c.out.join("checkpoints"))
}

/// Every `*.pgck` in `dir`: Natural first, then by training mode and
/// strength, then by label.
pub fn load_checkpoints(dir: &Path) -> Result<Vec<(String, Classifier)>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Config(format!("cannot read checkpoint dir {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgck"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no checkpoints in {}", dir.display())));
    }
    let mut models = Vec::new();
    for p in paths {
        let m = load_model(&p).map_err(CliError::runtime)?;
        let label = m
            .metadata
            .label
            .clone()
            .unwrap_or_else(|| p.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        models.push((label, m));
    }
    let rank = |m: &Classifier| match m.metadata.train_mode.as_deref() {
        None | Some("standard") => 0,
        Some("adversarial") => 1,
        Some("gaussian") => 2,
        Some(_) => 3,
    };
    models.sort_by(|(la, a), (lb, b)| {
        rank(a)
            .cmp(&rank(b))
            .then(a.metadata.epsilon_or_sigma.unwrap_or(0.0).total_cmp(&b.metadata.epsilon_or_sigma.unwrap_or(0.0)))
            .then(la.cmp(lb))
    });
    Ok(models)
}

fn named(models: &[(String, Classifier)]) -> Vec<(String, &Classifier)> {
    models.iter().map(|(l, m)| (l.clone(), m)).collect()
}

fn write_log(out: &Output, label: &str, report: &TrainReport) -> Result<(), CliError> {
    let path = out.dir("logs").join(format!("{}.csv", label_slug(label)));
    let mut prov = out.provenance();
    prov.push(("model", label.to_string()));
    prov.push(("train_config_digest", report.config_digest.clone()));
    report.write_log_csv(&path, &prov).map_err(CliError::runtime)?;
    info!("{label}: {:.1}s, validation accuracy {:?}", report.wall_clock_secs, report.final_validation_accuracy);
    Ok(())
}

fn accuracy_table(rows: Vec<(String, Option<f64>)>) -> Table {
    Table {
        key_columns: vec!["model".into()],
        value_columns: vec!["validation_acc".into()],
        rows: rows.into_iter().map(|(l, v)| (vec![l], vec![v])).collect(),
    }
}

pub fn train(c: &Common) -> Result<(), CliError> {
    let loaded = load::<TrainFile>(&c.config, c.seed)?;
    let f = &loaded.config;
    let base = f.train.to_config(loaded.seed);
    base.validate().map_err(CliError::runtime)?;
    if let Some(fam) = &f.family {
        if let Some(bad) = fam.strengths.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(CliError::Config(format!("family strength must be >= 0, got {bad}")));
        }
        if fam.strengths.is_empty() && !fam.include_natural {
            return Err(CliError::Config("family has no members".into()));
        }
    }
    let spec = f.data.spec()?;
    let seed = loaded.seed;
    f.model.build(&spec, seed)?;
    let out = open(c, &loaded)?;
    let train_set = f.data.load(Split::Train)?;
    let validation = f.data.load(Split::Validation)?;
    let provenance: BTreeMap<String, String> = out.provenance().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let init = || {
        build(&f.model.spec(&spec), seed).map(|mut m| {
            m.metadata.provenance = provenance.clone();
            m
        })
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    match &f.family {
        Some(fam) => {
            let outcome = train_family(&train_set, Some(&validation), &fam.to_config(base), &init, Some(&out.dir("checkpoints")))
                .map_err(CliError::runtime)?;
            for member in &outcome.members {
                match &member.outcome {
                    Ok((_, report)) => {
                        write_log(&out, &member.label, report)?;
                        rows.push((member.label.clone(), report.final_validation_accuracy));
                    }
                    Err(e) => {
                        warn!("{} failed: {e}", member.label);
                        failures.push(member.label.clone());
                        rows.push((member.label.clone(), None));
                    }
                }
            }
        }
        None => {
            let label = match base.mode {
                TrainMode::Standard => "Natural".to_string(),
                mode => member_label(mode, base.epsilon_or_sigma, 1.0),
            };
            let model = init().map_err(CliError::runtime)?;
            let (mut model, report) = train_model(model, &train_set, Some(&validation), &base).map_err(CliError::runtime)?;
            model.metadata.label = Some(label.clone());
            let path = out.dir("checkpoints").join(format!("{}.pgck", label_slug(&label)));
            save(&model, &path).map_err(CliError::runtime)?;
            write_log(&out, &label, &report)?;
            rows.push((label, report.final_validation_accuracy));
        }
    }
    out.write_table("train", &f.data.dataset, &accuracy_table(rows), &[])?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!("training failed for {}", failures.join(", "))))
    }
}

pub fn eval_robustness(c: &Common) -> Result<(), CliError> {
    let loaded = load::<RobustnessFile>(&c.config, c.seed)?;
    let f = &loaded.config;
    let e = &f.eval;
    if e.epsilons.is_empty() || e.epsilons.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(CliError::Config("epsilons must be a non-empty list of values >= 0".into()));
    }
    let models = load_checkpoints(&checkpoint_dir(c, &e.checkpoints))?;
    let out = open(c, &loaded)?;
    let validation = f.data.load(Split::Validation)?;
    let mut report = robustness_sweep(&named(&models), &e.epsilons, &validation, e.steps, e.norm, loaded.seed).map_err(CliError::runtime)?;
    report.label_scale = e.label_scale;
    let attack = format!("{}-step pgd, {}", e.steps, e.norm);
    for p in out.write_table("robustness", &f.data.dataset, &report.to_table(), &[("attack", attack)])? {
        info!("wrote {}", p.display());
    }
    match report.failed_cells() {
        0 => Ok(()),
        n => Err(CliError::Partial(format!("{n} robustness cells failed"))),
    }
}

pub fn zero_shot(c: &Common) -> Result<(), CliError> {
    let loaded = load::<ZeroShotFile>(&c.config, c.seed)?;
    let f = &loaded.config;
    let models = load_checkpoints(&checkpoint_dir(c, &f.eval.checkpoints))?;
    let out = open(c, &loaded)?;
    let source = f.source.load(Split::Validation)?;
    let target = f.target.load(Split::Validation)?;
    let adapter = DomainAdapter::new(target.spec.clone(), source.spec.clone());
    let mut reports = Vec::new();
    for (label, model) in &models {
        let r = zero_shot_eval(label, model, &source, &target, &adapter).map_err(CliError::runtime)?;
        info!("{label}: source {:.2} target {:.2}", r.source_acc, r.target_acc);
        reports.push(r);
    }
    let name = format!("{}-to-{}", f.source.dataset, f.target.dataset);
    out.write_table("zero_shot", &name, &zero_shot_table(&reports), &[("adapter", adapter.describe())])?;
    Ok(())
}

fn first_images(ds: &LabeledDataset, n: usize) -> Result<(pagkit::ImageBatch, Vec<usize>), CliError> {
    let idx: Vec<usize> = (0..n.min(ds.len())).collect();
    if idx.is_empty() {
        return Err(CliError::Runtime("validation set is empty".into()));
    }
    ds.batch(&idx).map_err(CliError::runtime)
}

pub fn visualize(c: &Common) -> Result<(), CliError> {
    let loaded = load::<VisualizeFile>(&c.config, c.seed)?;
    let f = &loaded.config;
    let v = &f.visualize;
    if v.count == 0 {
        return Err(CliError::Config("count must be positive".into()));
    }
    let models = load_checkpoints(&checkpoint_dir(c, &v.checkpoints))?;
    let out = open(c, &loaded)?;
    let validation = f.data.load(Split::Validation)?;
    let ds = &f.data.dataset;
    let prov = out.provenance();
    let models = named(&models);

    let (batch, labels) = first_images(&validation, v.count)?;
    let grid = gradient_visualization(&models, &batch, &labels).map_err(CliError::runtime)?;
    let png = out.dir("figures").join(format!("gradients_{ds}_{}.png", out.stamp));
    emit_png(&grid, &png, &prov).map_err(CliError::runtime)?;

    let (abatch, alabels) = first_images(&validation, v.alignment_images.max(1))?;
    let mut alignment = serde_json::Map::new();
    let mut rows = Vec::new();
    for (label, model) in &models {
        let r = gradient_alignment(model, &abatch, &alabels).map_err(CliError::runtime)?;
        info!("{label}: gradient/image correlation {r:.4}");
        alignment.insert(label.clone(), r.into());
        rows.push((vec![label.clone()], vec![Some(r)]));
    }
    out.write_json(
        &png.with_extension("json"),
        &serde_json::json!({
            "provenance": out.provenance_json(),
            "columns": grid.columns(),
            "labels": labels,
            "alignment_images": abatch.len(),
            "alignment": alignment,
        }),
    )?;
    let table = Table {
        key_columns: vec!["model".into()],
        value_columns: vec!["grad_image_pearson".into()],
        rows,
    };
    out.write_table("alignment", ds, &table, &[("images", abatch.len().to_string())])?;

    for &norm in &v.norms {
        let gallery = attack_gallery(&models, &batch, &labels, norm).map_err(CliError::runtime)?;
        let png = out.dir("figures").join(format!("gallery_{norm}_{ds}_{}.png", out.stamp));
        emit_png(&gallery.grid, &png, &prov).map_err(CliError::runtime)?;
        let m = &gallery.meta;
        let flips: Vec<usize> = (0..models.len()).map(|i| m.flips(i)).collect();
        let violations: Vec<usize> = (0..models.len()).map(|i| m.violations(i)).collect();
        out.write_json(
            &png.with_extension("json"),
            &serde_json::json!({
                "provenance": out.provenance_json(),
                "gallery": m,
                "flips": flips,
                "violations": violations,
            }),
        )?;
        let table = Table {
            key_columns: vec!["model".into()],
            value_columns: vec!["flip_rate".into(), "violation_rate".into()],
            rows: models
                .iter()
                .enumerate()
                .map(|(i, (l, _))| (vec![l.clone()], vec![Some(100.0 * m.flip_rate(i)), Some(100.0 * m.violation_rate(i))]))
                .collect(),
        };
        out.write_table(&format!("gallery_{norm}"), ds, &table, &[("attack", format!("{:?}", m.attack))])?;
    }
    Ok(())
}

struct WsolInputs {
    model: Classifier,
    dataset: LabeledDataset,
    annotations: Vec<CubAnnotation>,
    name: String,
}

fn wsol_inputs(f: &WsolFile, seed: u64, out: &Output) -> Result<WsolInputs, CliError> {
    match (&f.fixture, &f.cub) {
        (Some(fx), None) => {
            let (Some(model_section), Some(train_section)) = (&f.model, &f.train) else {
                return Err(CliError::Config("the fixture needs [model] and [train] sections".into()));
            };
            let mut train_fx = synth_fixture(fx.kind(fx.train_samples), seed).map_err(CliError::runtime)?;
            let val_fx = synth_fixture(fx.kind(fx.validation_samples), seed.wrapping_add(1)).map_err(CliError::runtime)?;
            train_fx.dataset.split = Split::Train;
            let mut validation = val_fx.dataset;
            validation.split = Split::Validation;
            let config = train_section.to_config(seed);
            config.validate().map_err(CliError::runtime)?;
            let mut model = model_section.build(&train_fx.dataset.spec, seed)?;
            model.metadata.provenance = out.provenance().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            let (mut model, report) = train_model(model, &train_fx.dataset, Some(&validation), &config).map_err(CliError::runtime)?;
            let label = format!("wsol-{}", model.spec.id);
            model.metadata.label = Some(label.clone());
            save(&model, out.dir("checkpoints").join(format!("{}.pgck", label_slug(&label)))).map_err(CliError::runtime)?;
            write_log(out, &label, &report)?;
            Ok(WsolInputs {
                model,
                dataset: validation,
                annotations: val_fx.annotations,
                name: "fixture".into(),
            })
        }
        (None, Some(cub)) => {
            let mut ann = load_cub_annotations(&cub.root).map_err(CliError::runtime)?;
            if let Some(n) = cub.limit {
                ann.truncate(n);
            }
            let (dataset, annotations) = load_cub_images(&cub.root, &ann, cub.side, cub.num_classes).map_err(CliError::runtime)?;
            let model = load_model(&cub.checkpoint).map_err(CliError::runtime)?;
            Ok(WsolInputs {
                model,
                dataset,
                annotations,
                name: "cub".into(),
            })
        }
        _ => Err(CliError::Config("give exactly one of [fixture] or [cub]".into())),
    }
}

pub fn wsol(c: &Common) -> Result<(), CliError> {
    let loaded = load::<WsolFile>(&c.config, c.seed)?;
    let f = &loaded.config;
    let thresholds = &f.wsol.thresholds;
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(CliError::Config("thresholds must be a non-empty list inside (0, 1)".into()));
    }
    let out = open(c, &loaded)?;
    let inputs = wsol_inputs(f, loaded.seed, &out)?;
    let name = &inputs.name;
    let locs = localize_dataset(&inputs.model, &inputs.dataset, thresholds[0], 64).map_err(CliError::runtime)?;
    let prov = out.provenance();
    let mut rows = Vec::new();
    for &t in thresholds {
        let boxes: Vec<(usize, BoundingBox)> = locs
            .iter()
            .map(|l| heatmap_to_bbox(&l.heatmap, t).map(|b| (l.predicted_class, b)))
            .collect::<pagkit::Result<_>>()
            .map_err(CliError::runtime)?;
        let report = localization_metrics(&boxes, &inputs.annotations).map_err(CliError::runtime)?;
        info!(
            "threshold {t}: gt-known {:.2}, top-1 loc {:.2}, top-1 acc {:.2}",
            report.gt_known_loc, report.top1_loc, report.top1_acc
        );
        rows.push((vec![format!("{t}")], vec![Some(report.gt_known_loc), Some(report.top1_loc), Some(report.top1_acc)]));
        let records: Vec<PredictionRecord> = boxes
            .iter()
            .zip(&inputs.annotations)
            .map(|((class, b), a)| PredictionRecord::new(a.image_id.clone(), *class, *b))
            .collect();
        let path = out.dir("tables").join(format!("wsol_predictions_t{t}_{name}_{}.csv", out.stamp));
        write_predictions(&path, &records, &prov).map_err(CliError::runtime)?;
    }
    let table = Table {
        key_columns: vec!["threshold".into()],
        value_columns: vec!["gt_known_loc".into(), "top1_loc".into(), "top1_acc".into()],
        rows,
    };
    out.write_table("wsol", name, &table, &[("model", inputs.model.spec.id.to_string())])?;

    let n = f.wsol.annotate.min(locs.len());
    if n > 0 {
        let mut cells = Vec::with_capacity(n);
        for (i, loc) in locs.iter().take(n).enumerate() {
            let image = inputs.dataset.images().index_axis(Axis(0), i).to_owned();
            let drawn = annotate_localization(image.view(), &loc.heatmap, Some(&inputs.annotations[i].gt_box), &loc.bbox)
                .map_err(CliError::runtime)?;
            let original = if image.dim().0 == 3 {
                image
            } else {
                to_rgb(&image)
            };
            cells.push(vec![original, drawn]);
        }
        let grid = ImageGrid::new(cells, vec!["original".into(), format!("cam t={}", thresholds[0])]).map_err(CliError::runtime)?;
        emit_png(&grid, out.dir("figures").join(format!("wsol_{name}_{}.png", out.stamp)), &prov).map_err(CliError::runtime)?;
    }
    Ok(())
}

fn to_rgb(gray: &Array3<f32>) -> Array3<f32> {
    let (_, h, w) = gray.dim();
    Array3::from_shape_fn((3, h, w), |(_, y, x)| gray[[0, y, x]])
}

pub fn convert(c: &Common) -> Result<(), CliError> {
    let loaded = load::<ConvertFile>(&c.config, None)?;
    let f = &loaded.config;
    let out = open(c, &loaded)?;
    let dir = out.root.join("data");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    for split in [Split::Train, Split::Validation] {
        let ds = f.data.load(split)?;
        let (images, labels) = write_cache(&ds, &dir).map_err(CliError::runtime)?;
        info!("{split}: {} images -> {}, {}", ds.len(), images.display(), labels.display());
    }
    Ok(())
}
