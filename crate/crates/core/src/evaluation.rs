//! Clean and adversarial accuracy, robustness grids, zero-shot transfer and
//! table rendering.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{pgd, AttackConfig, Goal, Norm, EVALUATION_STEPS};
use crate::data::{DomainAdapter, LabeledDataset};
use crate::error::{Error, Result};
use crate::models::Classifier;

/// Images per forward pass during evaluation.
pub const EVAL_BATCH: usize = 250;

fn check(model: &Classifier, dataset: &LabeledDataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.spec.num_classes != model.num_classes() {
        return Err(Error::ClassCountMismatch {
            dataset: dataset.spec.num_classes,
            model: model.num_classes(),
        });
    }
    Ok(())
}

/// Percentage of images whose arg-max logit equals the label.
pub fn accuracy(model: &Classifier, dataset: &LabeledDataset) -> Result<f64> {
    check(model, dataset)?;
    let mut correct = 0usize;
    for (batch, labels) in dataset.batches(EVAL_BATCH) {
        let pred = model.predict(batch.view())?;
        correct += pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    }
    Ok(100.0 * correct as f64 / dataset.len() as f64)
}

/// Accuracy on untargeted attack outputs, attacking one batch at a time.
/// Random starts draw from a generator seeded with `seed`.
pub fn adversarial_accuracy(model: &Classifier, dataset: &LabeledDataset, attack: &AttackConfig, seed: u64) -> Result<f64> {
    check(model, dataset)?;
    attack.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0usize;
    for (batch, labels) in dataset.batches(EVAL_BATCH) {
        let adv = pgd(model, &batch, labels, attack, Goal::Untargeted, &mut rng)?;
        let pred = model.predict(adv.images.view())?;
        correct += pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    }
    Ok(100.0 * correct as f64 / dataset.len() as f64)
}

/// Accuracy grid: one row per model, one column per attack radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub models: Vec<String>,
    pub epsilons: Vec<f64>,
    /// `cells[model][epsilon]`; `None` marks a failed evaluation.
    pub cells: Vec<Vec<Option<f64>>>,
    pub attack_steps: usize,
    pub norm: Norm,
    /// Column labels show `epsilon * label_scale`.
    pub label_scale: f64,
}

impl RobustnessReport {
    pub fn cell(&self, model: &str, epsilon: f64) -> Option<f64> {
        let r = self.models.iter().position(|m| m == model)?;
        let c = self.epsilons.iter().position(|&e| e == epsilon)?;
        self.cells[r][c]
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_none()).count()
    }

    pub fn to_table(&self) -> Table {
        let columns = self
            .epsilons
            .iter()
            .map(|&e| format!("eps={}", (e * self.label_scale * 1e4).round() / 1e4))
            .collect();
        Table {
            key_columns: vec!["model".into()],
            value_columns: columns,
            rows: self.models.iter().cloned().zip(self.cells.iter().cloned()).map(|(m, v)| (vec![m], v)).collect(),
        }
    }
}

/// Evaluates every model at every radius with `steps`-step PGD (step size
/// `2.5 * eps / steps`, random start). The zero-radius column is clean
/// accuracy. Failing cells are recorded as `None`.
pub fn robustness_sweep(
    models: &[(String, &Classifier)],
    epsilons: &[f64],
    dataset: &LabeledDataset,
    steps: usize,
    norm: Norm,
    seed: u64,
) -> Result<RobustnessReport> {
    if models.is_empty() || epsilons.is_empty() {
        return Err(Error::InvalidConfig("robustness sweep needs models and epsilons".into()));
    }
    let cells = models
        .iter()
        .map(|(_, model)| {
            epsilons
                .iter()
                .map(|&eps| {
                    let cell = if eps == 0.0 {
                        accuracy(model, dataset)
                    } else {
                        adversarial_accuracy(model, dataset, &AttackConfig::with_default_step(norm, eps, steps), seed)
                    };
                    cell.ok()
                })
                .collect()
        })
        .collect();
    Ok(RobustnessReport {
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        epsilons: epsilons.to_vec(),
        cells,
        attack_steps: steps,
        norm,
        label_scale: 1.0,
    })
}

/// [`robustness_sweep`] with the default 10-step l∞ attack.
pub fn robustness_sweep_default(models: &[(String, &Classifier)], epsilons: &[f64], dataset: &LabeledDataset, seed: u64) -> Result<RobustnessReport> {
    robustness_sweep(models, epsilons, dataset, EVALUATION_STEPS, Norm::Linf, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotReport {
    pub model: String,
    pub source_acc: f64,
    pub target_acc: f64,
    pub adapter: String,
}

/// Validation accuracy on the source split and on the adapted target split.
pub fn zero_shot(
    model_id: &str,
    model: &Classifier,
    source_validation: &LabeledDataset,
    target_validation: &LabeledDataset,
    adapter: &DomainAdapter,
) -> Result<ZeroShotReport> {
    if adapter.target.image_shape != model.spec.input_shape {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", model.spec.input_shape),
            actual: format!("adapter output {:?}", adapter.target.image_shape),
        });
    }
    let adapted = adapter.apply(target_validation)?;
    Ok(ZeroShotReport {
        model: model_id.to_string(),
        source_acc: accuracy(model, source_validation)?,
        target_acc: accuracy(model, &adapted)?,
        adapter: adapter.describe(),
    })
}

pub fn zero_shot_table(reports: &[ZeroShotReport]) -> Table {
    Table {
        key_columns: vec!["model".into(), "adapter".into()],
        value_columns: vec!["sourceAcc".into(), "targetAcc".into()],
        rows: reports
            .iter()
            .map(|r| (vec![r.model.clone(), r.adapter.clone()], vec![Some(r.source_acc), Some(r.target_acc)]))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

/// Text key columns followed by numeric percentage columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub key_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub rows: Vec<(Vec<String>, Vec<Option<f64>>)>,
}

/// Marker written in place of a failed cell.
pub const FAILED_CELL: &str = "failed";

fn cell_text(v: Option<f64>) -> String {
    v.map_or_else(|| FAILED_CELL.to_string(), |v| format!("{v:.2}"))
}

/// Renders with two decimals. `provenance` lines are emitted first as
/// `#` comments (csv) or an html comment (markdown).
pub fn render_table(table: &Table, format: TableFormat, provenance: &[(&str, String)]) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            for (k, v) in provenance {
                writeln!(out, "# {k}: {v}").unwrap();
            }
            let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
            let header: Vec<&str> = table.key_columns.iter().chain(&table.value_columns).map(String::as_str).collect();
            w.write_record(&header).expect("in-memory write");
            for (keys, values) in &table.rows {
                let record: Vec<String> = keys.iter().cloned().chain(values.iter().map(|&v| cell_text(v))).collect();
                w.write_record(&record).expect("in-memory write");
            }
            out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        }
        TableFormat::Markdown => {
            for (k, v) in provenance {
                writeln!(out, "<!-- {k}: {v} -->").unwrap();
            }
            let header: Vec<&str> = table.key_columns.iter().chain(&table.value_columns).map(String::as_str).collect();
            writeln!(out, "| {} |", header.join(" | ")).unwrap();
            let align: Vec<&str> = table
                .key_columns
                .iter()
                .map(|_| ":---")
                .chain(table.value_columns.iter().map(|_| "---:"))
                .collect();
            writeln!(out, "| {} |", align.join(" | ")).unwrap();
            for (keys, values) in &table.rows {
                let cells: Vec<String> = keys
                    .iter()
                    .map(|k| k.replace('|', "\\|"))
                    .chain(values.iter().map(|&v| cell_text(v)))
                    .collect();
                writeln!(out, "| {} |", cells.join(" | ")).unwrap();
            }
        }
    }
    out
}

/// Reads back a table produced by [`render_table`] with `keys` leading
/// text columns.
pub fn parse_table(text: &str, format: TableFormat, keys: usize) -> Result<Table> {
    let parse_cell = |s: &str| -> Result<Option<f64>> {
        let s = s.trim();
        if s == FAILED_CELL {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Parse(format!("bad table cell `{s}`")))
        }
    };
    let mut records: Vec<Vec<String>> = Vec::new();
    match format {
        TableFormat::Csv => {
            let mut r = csv::ReaderBuilder::new()
                .has_headers(false)
                .comment(Some(b'#'))
                .from_reader(text.as_bytes());
            for rec in r.records() {
                let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
                records.push(rec.iter().map(str::to_string).collect());
            }
        }
        TableFormat::Markdown => {
            for (i, line) in text.lines().filter(|l| l.starts_with('|')).enumerate() {
                if i == 1 {
                    continue;
                }
                let inner = line.trim().trim_start_matches('|').trim_end_matches('|');
                let mut cells = Vec::new();
                let mut cur = String::new();
                let mut chars = inner.chars().peekable();
                while let Some(c) = chars.next() {
                    match c {
                        '\\' if chars.peek() == Some(&'|') => cur.push(chars.next().unwrap()),
                        '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
                        other => cur.push(other),
                    }
                }
                cells.push(cur.trim().to_string());
                records.push(cells);
            }
        }
    }
    let mut it = records.into_iter();
    let header = it.next().ok_or_else(|| Error::Parse("table has no header".into()))?;
    if header.len() < keys {
        return Err(Error::Parse("table has fewer columns than keys".into()));
    }
    let rows = it
        .map(|rec| {
            if rec.len() != header.len() {
                return Err(Error::Parse(format!("row has {} cells, header has {}", rec.len(), header.len())));
            }
            let values = rec[keys..].iter().map(|s| parse_cell(s)).collect::<Result<Vec<_>>>()?;
            Ok((rec[..keys].to_vec(), values))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        key_columns: header[..keys].to_vec(),
        value_columns: header[keys..].to_vec(),
        rows,
    })
}

/// `<experiment>_<dataset>_<stamp>.<ext>`
pub fn table_file_name(experiment: &str, dataset: &str, stamp: &str, format: TableFormat) -> String {
    format!("{experiment}_{dataset}_{stamp}.{}", format.extension())
}

#[cfg(test)]
mod tests {
    use ndarray::Array4;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::*;
    use crate::data::{synth_fixture, DatasetSpec, Split, SynthKind};
    use crate::models::{build, ArchitectureId, ArchitectureSpec};

    fn dataset(labels: Vec<usize>, classes: usize) -> LabeledDataset {
        let n = labels.len();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let images = Array4::from_shape_simple_fn((n, 1, 8, 8), || rng.gen_range(0.0f32..1.0));
        LabeledDataset::new(images, labels, Split::Validation, DatasetSpec::new("t", classes, (1, 8, 8))).unwrap()
    }

    /// A model whose logits are all zero, so arg-max is always class 0.
    fn constant_model(classes: usize) -> Classifier {
        let spec = ArchitectureSpec::new(ArchitectureId::MnistCnn, classes, (1, 8, 8)).with_widths(vec![2, 2, 4]);
        let mut m = build(&spec, 0).unwrap();
        m.zero_output_layer();
        m
    }

    fn trained_like_model() -> (Classifier, LabeledDataset) {
        let fx = synth_fixture(
            SynthKind::Classification {
                num_classes: 3,
                samples: 90,
                image_shape: (1, 8, 8),
            },
            1,
        )
        .unwrap();
        let spec = ArchitectureSpec::new(ArchitectureId::MnistCnn, 3, (1, 8, 8)).with_widths(vec![3, 4, 8]);
        let mut ds = fx.dataset;
        ds.split = Split::Validation;
        (build(&spec, 2).unwrap(), ds)
    }

    #[test]
    fn always_zero_predictor() {
        let labels: Vec<usize> = (0..100).map(|i| if i < 30 { 0 } else { 1 + i % 3 }).collect();
        let ds = dataset(labels, 4);
        assert_eq!(accuracy(&constant_model(4), &ds).unwrap(), 30.0);
    }

    #[test]
    fn empty_or_mismatched_dataset_errors() {
        let ds = dataset(vec![0, 1], 2);
        assert!(matches!(accuracy(&constant_model(4), &ds), Err(Error::ClassCountMismatch { .. })));
        let empty = ds.subset(&[]);
        assert!(matches!(accuracy(&constant_model(2), &empty), Err(Error::EmptyDataset)));
    }

    proptest! {
        #[test]
        fn accuracy_is_order_independent(seed in any::<u64>()) {
            let (m, ds) = trained_like_model();
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(accuracy(&m, &ds).unwrap(), accuracy(&m, &ds.subset(&order)).unwrap());
        }
    }

    #[test]
    fn identity_attack_matches_clean_accuracy() {
        let (m, ds) = trained_like_model();
        let clean = accuracy(&m, &ds).unwrap();
        for norm in [Norm::Linf, Norm::L2] {
            assert_eq!(adversarial_accuracy(&m, &ds, &AttackConfig::identity(norm, 0.3), 0).unwrap(), clean);
            assert_eq!(adversarial_accuracy(&m, &ds, &AttackConfig::evaluation(norm, 0.0), 0).unwrap(), clean);
        }
    }

    #[test]
    fn sweep_grid_and_zero_column() {
        let (m, ds) = trained_like_model();
        let m2 = constant_model(3);
        let models = vec![("A".to_string(), &m), ("B".to_string(), &m2)];
        let r = robustness_sweep_default(&models, &[0.0, 0.1, 0.3], &ds, 0).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells.iter().all(|row| row.len() == 3));
        assert_eq!(r.cell("A", 0.0), Some(accuracy(&m, &ds).unwrap()));
        for v in r.cells.iter().flatten() {
            let v = v.unwrap();
            assert!((0.0..=100.0).contains(&v));
        }
        let one = robustness_sweep_default(&models[..1], &[0.0], &ds, 0).unwrap();
        assert_eq!(one.cells, vec![vec![Some(accuracy(&m, &ds).unwrap())]]);
        assert!(robustness_sweep_default(&[], &[0.0], &ds, 0).is_err());
    }

    #[test]
    fn sweep_marks_failed_cells() {
        let (m, ds) = trained_like_model();
        let models = vec![("A".to_string(), &m)];
        let r = robustness_sweep_default(&models, &[0.0, -0.1], &ds, 0).unwrap();
        assert_eq!(r.failed_cells(), 1);
        let text = render_table(&r.to_table(), TableFormat::Csv, &[]);
        assert!(text.contains(FAILED_CELL));
    }

    #[test]
    fn identity_transfer_keeps_accuracy() {
        let (m, ds) = trained_like_model();
        let adapter = DomainAdapter::identity(ds.spec.clone());
        let r = zero_shot("Natural", &m, &ds, &ds, &adapter).unwrap();
        assert_eq!(r.source_acc, r.target_acc);
        assert!(zero_shot_table(&[r]).rows[0].0[1].contains("identity"));
    }

    fn sample_table() -> Table {
        Table {
            key_columns: vec!["model".into()],
            value_columns: vec!["eps=0".into(), "eps=0.1".into()],
            rows: vec![
                (vec!["Natural".into()], vec![Some(90.88), Some(0.0)]),
                (vec!["AT-0.1".into()], vec![Some(87.254999), None]),
            ],
        }
    }

    #[test]
    fn two_decimal_rendering() {
        let md = render_table(&sample_table(), TableFormat::Markdown, &[("seed", "3".into())]);
        assert!(md.starts_with("<!-- seed: 3 -->\n| model | eps=0 | eps=0.1 |\n| :--- | ---: | ---: |\n"));
        assert!(md.contains("| Natural | 90.88 | 0.00 |"));
        assert!(md.contains("| AT-0.1 | 87.25 | failed |"));
        let csv = render_table(&sample_table(), TableFormat::Csv, &[]);
        assert_eq!(csv, "model,eps=0,eps=0.1\nNatural,90.88,0.00\nAT-0.1,87.25,failed\n");
    }

    #[test]
    fn one_cell_table_has_header_and_row() {
        let t = Table {
            key_columns: vec!["model".into()],
            value_columns: vec!["eps=0".into()],
            rows: vec![(vec!["Natural".into()], vec![Some(99.0)])],
        };
        assert_eq!(render_table(&t, TableFormat::Csv, &[]).lines().count(), 2);
        assert_eq!(render_table(&t, TableFormat::Markdown, &[]).lines().count(), 3);
    }

    proptest! {
        #[test]
        fn csv_and_markdown_parse_back_identically(
            cells in proptest::collection::vec(proptest::option::of(0.0f64..=100.0), 1..12),
            name in "[A-Za-z0-9|,.-]([A-Za-z0-9 |,.-]{0,8}[A-Za-z0-9|,.-])?",
        ) {
            let t = Table {
                key_columns: vec!["model".into(), "adapter".into()],
                value_columns: (0..cells.len()).map(|i| format!("c{i}")).collect(),
                rows: vec![(vec![name.clone(), "a, b".into()], cells.clone()), (vec!["x".into(), "y".into()], cells.clone())],
            };
            let prov = [("config_digest", "abc".to_string())];
            let a = parse_table(&render_table(&t, TableFormat::Csv, &prov), TableFormat::Csv, 2).unwrap();
            let b = parse_table(&render_table(&t, TableFormat::Markdown, &prov), TableFormat::Markdown, 2).unwrap();
            prop_assert_eq!(&a.rows, &b.rows);
            prop_assert_eq!(&a.value_columns, &t.value_columns);
            for ((keys, values), (k0, v0)) in a.rows.iter().zip(&t.rows) {
                prop_assert_eq!(keys.iter().map(|k| k.trim()).collect::<Vec<_>>(), k0.iter().map(|k| k.trim()).collect::<Vec<_>>());
                for (x, y) in values.iter().zip(v0) {
                    match (x, y) {
                        (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 0.005 + 1e-9),
                        (None, None) => {}
                        _ => prop_assert!(false, "failed-cell mismatch"),
                    }
                }
            }
        }
    }

    #[test]
    fn file_names() {
        assert_eq!(table_file_name("robustness", "mnist", "20240101T000000", TableFormat::Csv), "robustness_mnist_20240101T000000.csv");
    }
}
