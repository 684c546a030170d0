//! Input-gradient visualizations, large-ε attack galleries and PNG output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::attacks::{distances, large_eps_untargeted, AttackConfig, Norm};
use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::models::{argmax_rows, Classifier};
use crate::wsol::{BoundingBox, Heatmap};

/// Width in pixels of the white gap between grid cells.
pub const SEPARATOR: usize = 2;

/// Slack allowed on the ball constraint before a gallery cell counts as a violation.
pub const BALL_TOLERANCE: f64 = 1e-6;

/// Images laid out in rows (samples) and columns (original first, then one
/// per model in declared order). All cells share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    cells: Vec<Vec<Array3<f32>>>,
    columns: Vec<String>,
}

impl ImageGrid {
    pub fn new(cells: Vec<Vec<Array3<f32>>>, columns: Vec<String>) -> Result<Self> {
        let first = cells
            .first()
            .and_then(|r| r.first())
            .ok_or_else(|| Error::InvalidBatch("empty grid".into()))?;
        let shape = first.dim();
        if shape.0 != 1 && shape.0 != 3 {
            return Err(Error::InvalidBatch(format!("cells must have 1 or 3 channels, got {}", shape.0)));
        }
        for (r, row) in cells.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::CountMismatch {
                    what: format!("grid row {r}"),
                    expected: columns.len(),
                    actual: row.len(),
                });
            }
            for cell in row {
                if cell.dim() != shape {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{shape:?}"),
                        actual: format!("{:?}", cell.dim()),
                    });
                }
                if cell.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidBatch("grid cell outside [0,1]".into()));
                }
            }
        }
        Ok(Self { cells, columns })
    }

    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Array3<f32> {
        &self.cells[row][col]
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// `(channels, height, width)` of every cell.
    pub fn cell_shape(&self) -> (usize, usize, usize) {
        self.cells[0][0].dim()
    }

    /// Canvas size `(height, width)` including separators.
    pub fn canvas_size(&self) -> (usize, usize) {
        let (_, h, w) = self.cell_shape();
        let (r, c) = (self.rows(), self.cols());
        (r * h + (r - 1) * SEPARATOR, c * w + (c - 1) * SEPARATOR)
    }
}

/// Clips each channel to mean ± 3σ, then min-max rescales the whole image
/// to [0,1]. A gradient with no spread renders as uniform 0.5.
pub fn normalize_gradient(grad: ArrayView3<'_, f32>) -> Array3<f32> {
    let mut out = grad.mapv(|v| v as f64);
    for mut ch in out.axis_iter_mut(Axis(0)) {
        let n = ch.len() as f64;
        let mean = ch.sum() / n;
        let std = (ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        let (lo, hi) = (mean - 3.0 * std, mean + 3.0 * std);
        ch.mapv_inplace(|v| v.clamp(lo, hi));
    }
    let min = out.iter().copied().fold(f64::INFINITY, f64::min);
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) || !range.is_finite() {
        return Array3::from_elem(grad.dim(), 0.5);
    }
    out.mapv(|v| (((v - min) / range) as f32).clamp(0.0, 1.0))
}

fn originals(batch: &ImageBatch) -> Vec<Vec<Array3<f32>>> {
    batch
        .pixels()
        .axis_iter(Axis(0))
        .map(|img| vec![img.to_owned()])
        .collect()
}

fn column_names(models: &[(String, &Classifier)]) -> Vec<String> {
    std::iter::once("original".to_string())
        .chain(models.iter().map(|(name, _)| name.clone()))
        .collect()
}

/// Per-image gradient of the loss with respect to the input.
fn per_image_gradients(model: &Classifier, batch: &ImageBatch, labels: &[usize]) -> Result<ndarray::Array4<f32>> {
    // the model returns the gradient of the batch mean; rescale to per-image
    let (_, grad) = model.loss_and_input_gradient(batch.view(), labels)?;
    Ok(grad * batch.len() as f32)
}

/// One row per image: the original, then the normalized input gradient of
/// each model in order.
pub fn gradient_visualization(models: &[(String, &Classifier)], batch: &ImageBatch, labels: &[usize]) -> Result<ImageGrid> {
    let mut rows = originals(batch);
    for (_, model) in models {
        let grad = per_image_gradients(model, batch, labels)?;
        for (row, g) in rows.iter_mut().zip(grad.axis_iter(Axis(0))) {
            row.push(normalize_gradient(g));
        }
    }
    ImageGrid::new(rows, column_names(models))
}

/// Pearson correlation of two equally long samples; 0 when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Mean over images of the Pearson correlation between the channel-summed
/// absolute input gradient and the grayscale image.
pub fn gradient_alignment(model: &Classifier, batch: &ImageBatch, labels: &[usize]) -> Result<f64> {
    let grad = per_image_gradients(model, batch, labels)?;
    let mut total = 0.0;
    for (g, x) in grad.axis_iter(Axis(0)).zip(batch.pixels().axis_iter(Axis(0))) {
        let mag: Vec<f64> = g.mapv(|v| v.abs() as f64).sum_axis(Axis(0)).iter().copied().collect();
        let gray: Vec<f64> = x.mapv(|v| v as f64).mean_axis(Axis(0)).expect("channels >= 1").iter().copied().collect();
        total += pearson(&mag, &gray);
    }
    Ok(total / batch.len() as f64)
}

/// What happened to one gallery cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryCell {
    pub before: usize,
    pub after: usize,
    pub flipped: bool,
    pub distance: f64,
    pub violation: bool,
}

/// Sidecar describing a gallery: model order, attack preset, and per-cell
/// predictions. `cells[row][model]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryMeta {
    pub models: Vec<String>,
    pub attack: AttackConfig,
    pub labels: Vec<usize>,
    pub cells: Vec<Vec<GalleryCell>>,
}

impl GalleryMeta {
    fn count(&self, model: usize, f: impl Fn(&GalleryCell) -> bool) -> usize {
        self.cells.iter().filter(|row| f(&row[model])).count()
    }

    pub fn flips(&self, model: usize) -> usize {
        self.count(model, |c| c.flipped)
    }

    pub fn violations(&self, model: usize) -> usize {
        self.count(model, |c| c.violation)
    }

    pub fn flip_rate(&self, model: usize) -> f64 {
        self.flips(model) as f64 / self.cells.len() as f64
    }

    pub fn violation_rate(&self, model: usize) -> f64 {
        self.violations(model) as f64 / self.cells.len() as f64
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Gallery {
    pub grid: ImageGrid,
    pub meta: GalleryMeta,
}

/// Attacks every image with the ε = 32/255 untargeted preset against each
/// model. Column 1 holds the originals.
pub fn attack_gallery(models: &[(String, &Classifier)], batch: &ImageBatch, labels: &[usize], norm: Norm) -> Result<Gallery> {
    let attack = AttackConfig::large_eps(norm);
    let mut rows = originals(batch);
    let mut cells: Vec<Vec<GalleryCell>> = vec![Vec::with_capacity(models.len()); batch.len()];
    for (_, model) in models {
        let before = model.predict(batch.view())?;
        let adv = large_eps_untargeted(model, batch, labels, norm)?;
        let after = argmax_rows(&model.forward(adv.images.view())?);
        let dist = distances(adv.images.pixels(), batch.pixels(), norm);
        for (i, img) in adv.images.pixels().axis_iter(Axis(0)).enumerate() {
            let in_range = img.iter().all(|v| (0.0..=1.0).contains(v));
            cells[i].push(GalleryCell {
                before: before[i],
                after: after[i],
                flipped: before[i] != after[i],
                distance: dist[i],
                violation: dist[i] > attack.epsilon + BALL_TOLERANCE || !in_range,
            });
            rows[i].push(img.to_owned());
        }
    }
    Ok(Gallery {
        grid: ImageGrid::new(rows, column_names(models))?,
        meta: GalleryMeta {
            models: models.iter().map(|(n, _)| n.clone()).collect(),
            attack,
            labels: labels.to_vec(),
            cells,
        },
    })
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major interleaved canvas bytes (1 or 3 channels) with white separators.
pub fn render_grid(grid: &ImageGrid) -> (Vec<u8>, usize, usize, usize) {
    let (c, h, w) = grid.cell_shape();
    let (ch, cw) = grid.canvas_size();
    let mut buf = vec![255u8; ch * cw * c];
    for r in 0..grid.rows() {
        for col in 0..grid.cols() {
            let cell = grid.cell(r, col);
            let (y0, x0) = (r * (h + SEPARATOR), col * (w + SEPARATOR));
            for y in 0..h {
                for x in 0..w {
                    for k in 0..c {
                        buf[((y0 + y) * cw + x0 + x) * c + k] = to_byte(cell[[k, y, x]]);
                    }
                }
            }
        }
    }
    (buf, ch, cw, c)
}

/// Writes 8-bit grayscale or RGB bytes as a PNG with `text` as tEXt chunks.
pub fn write_png(path: &Path, bytes: &[u8], height: usize, width: usize, channels: usize, text: &[(&str, String)]) -> Result<()> {
    let fail = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(if channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in text {
            enc.add_text_chunk(k.to_string(), v.clone()).map_err(fail)?;
        }
        let mut w = enc.write_header().map_err(fail)?;
        w.write_image_data(bytes).map_err(fail)?;
        w.finish().map_err(fail)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes the grid as a single PNG, `text` going into tEXt chunks.
pub fn emit_png(grid: &ImageGrid, path: impl AsRef<Path>, text: &[(&str, String)]) -> Result<()> {
    let (bytes, h, w, c) = render_grid(grid);
    write_png(path.as_ref(), &bytes, h, w, c, text)
}

fn jet(t: f64) -> [f64; 3] {
    let r = (1.5 - (4.0 * t - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * t - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * t - 1.0).abs()).clamp(0.0, 1.0);
    [r, g, b]
}

fn draw_box(canvas: &mut Array3<f32>, b: &BoundingBox, color: [f32; 3]) {
    let (_, h, w) = canvas.dim();
    let x0 = (b.xmin.floor() as usize).min(w - 1);
    let y0 = (b.ymin.floor() as usize).min(h - 1);
    let x1 = ((b.xmax.ceil() as usize).max(1) - 1).clamp(x0, w - 1);
    let y1 = ((b.ymax.ceil() as usize).max(1) - 1).clamp(y0, h - 1);
    for (k, &v) in color.iter().enumerate() {
        canvas.slice_mut(s![k, y0, x0..=x1]).fill(v);
        canvas.slice_mut(s![k, y1, x0..=x1]).fill(v);
        canvas.slice_mut(s![k, y0..=y1, x0]).fill(v);
        canvas.slice_mut(s![k, y0..=y1, x1]).fill(v);
    }
}

/// RGB image with the heatmap blended over `image`, the ground-truth box in
/// red and the predicted box in green.
pub fn annotate_localization(
    image: ArrayView3<'_, f32>,
    heatmap: &Heatmap,
    gt: Option<&BoundingBox>,
    pred: &BoundingBox,
) -> Result<Array3<f32>> {
    let (c, h, w) = image.dim();
    if heatmap.dim() != (h, w) {
        return Err(Error::ShapeMismatch {
            expected: format!("({h}, {w})"),
            actual: format!("{:?}", heatmap.dim()),
        });
    }
    let mut out = Array3::<f32>::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let heat = jet(heatmap.values()[[y, x]]);
            for (k, hv) in heat.iter().enumerate() {
                let base = image[[if c == 3 { k } else { 0 }, y, x]] as f64;
                out[[k, y, x]] = (0.5 * base + 0.5 * hv) as f32;
            }
        }
    }
    if let Some(gt) = gt {
        draw_box(&mut out, gt, [1.0, 0.0, 0.0]);
    }
    draw_box(&mut out, pred, [0.0, 1.0, 0.0]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use ndarray::{Array2, Array4};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::{build, ArchitectureId, ArchitectureSpec};
    use crate::DatasetSpec;

    fn tiny_model(seed: u64) -> Classifier {
        let spec = ArchitectureSpec::for_dataset(ArchitectureId::MnistCnn, &DatasetSpec::new("t", 10, (1, 12, 12)))
            .with_widths(vec![3, 4, 8]);
        build(&spec, seed).unwrap()
    }

    fn random_batch(n: usize, seed: u64) -> ImageBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBatch::new(Array4::from_shape_simple_fn((n, 1, 12, 12), || rng.gen::<f32>())).unwrap()
    }

    #[test]
    fn constant_gradient_is_half_gray() {
        let g = Array3::from_elem((3, 5, 5), 0.7f32);
        assert!(normalize_gradient(g.view()).iter().all(|&v| v == 0.5));
        let z = Array3::zeros((1, 4, 4));
        assert!(normalize_gradient(z.view()).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn normalization_clips_outliers() {
        // one spike among small values; the spike is cut to mean + 3σ
        let mut g = Array3::<f32>::zeros((1, 10, 10));
        for (i, v) in g.iter_mut().enumerate() {
            *v = (i % 7) as f32 * 0.01;
        }
        g[[0, 0, 0]] = 1000.0;
        let vals: Vec<f64> = g.iter().map(|&v| v as f64).collect();
        let mean = vals.iter().sum::<f64>() / 100.0;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
        let hi = mean + 3.0 * std;
        assert!(hi < 1000.0);
        let n = normalize_gradient(g.view());
        assert_eq!(n[[0, 0, 0]], 1.0);
        assert_eq!(n[[0, 0, 7]], 0.0);
        let expected = (0.01f32 as f64) / hi;
        assert!((n[[0, 0, 1]] as f64 - expected).abs() < 1e-6, "{} vs {expected}", n[[0, 0, 1]]);
    }

    proptest! {
        #[test]
        fn normalized_values_in_unit_range(vals in prop::collection::vec(-1e3f32..1e3, 2 * 3 * 4)) {
            let g = Array3::from_shape_vec((2, 3, 4), vals).unwrap();
            let n = normalize_gradient(g.view());
            prop_assert!(n.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert_eq!(n.dim(), (2, 3, 4));
        }
    }

    #[test]
    fn grid_shape_five_models_four_images() {
        let models: Vec<Classifier> = (0..5).map(tiny_model).collect();
        let named: Vec<(String, &Classifier)> = models.iter().enumerate().map(|(i, m)| (format!("m{i}"), m)).collect();
        let batch = random_batch(4, 1);
        let grid = gradient_visualization(&named, &batch, &[0, 1, 2, 3]).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (4, 6));
        assert_eq!(grid.columns()[0], "original");
        assert_eq!(grid.columns()[3], "m2");
        assert_eq!(grid.cell(2, 0), &batch.pixels().index_axis(Axis(0), 2).to_owned());
        for r in 0..4 {
            for c in 0..6 {
                assert!(grid.cell(r, c).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn zero_head_gradient_renders_gray() {
        let mut m = tiny_model(0);
        m.zero_output_layer();
        let batch = random_batch(2, 2);
        let grid = gradient_visualization(&[("z".into(), &m)], &batch, &[3, 4]).unwrap();
        assert!(grid.cell(0, 1).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn spec_mismatch_is_rejected() {
        let m = tiny_model(0);
        let batch = ImageBatch::new(Array4::zeros((1, 1, 28, 28))).unwrap();
        assert!(gradient_visualization(&[("m".into(), &m)], &batch, &[0]).is_err());
        assert!(attack_gallery(&[("m".into(), &m)], &batch, &[0], Norm::Linf).is_err());
    }

    #[test]
    fn gallery_cells_stay_in_ball() {
        let models: Vec<Classifier> = (0..2).map(tiny_model).collect();
        let named: Vec<(String, &Classifier)> = models.iter().enumerate().map(|(i, m)| (format!("m{i}"), m)).collect();
        let batch = random_batch(3, 3);
        for norm in [Norm::Linf, Norm::L2] {
            let g = attack_gallery(&named, &batch, &[1, 2, 3], norm).unwrap();
            assert_eq!((g.grid.rows(), g.grid.cols()), (3, 3));
            for r in 0..3 {
                let orig = g.grid.cell(r, 0).mapv(|v| v as f64);
                for c in 1..3 {
                    let d = &g.grid.cell(r, c).mapv(|v| v as f64) - &orig;
                    let dist = match norm {
                        Norm::Linf => d.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                        Norm::L2 => d.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    };
                    assert!(dist <= 32.0 / 255.0 + 1e-6, "{dist}");
                }
            }
            assert_eq!(g.meta.violations(0) + g.meta.violations(1), 0);
        }
    }

    #[test]
    fn gallery_records_predictions_by_forward_pass() {
        let m = tiny_model(4);
        let batch = random_batch(3, 4);
        let g = attack_gallery(&[("m".into(), &m)], &batch, &[0, 5, 9], Norm::Linf).unwrap();
        for r in 0..3 {
            let cell = g.grid.cell(r, 1).clone().insert_axis(Axis(0));
            let orig = g.grid.cell(r, 0).clone().insert_axis(Axis(0));
            assert_eq!(g.meta.cells[r][0].after, m.predict(cell.view()).unwrap()[0]);
            assert_eq!(g.meta.cells[r][0].before, m.predict(orig.view()).unwrap()[0]);
            assert_eq!(g.meta.cells[r][0].flipped, g.meta.cells[r][0].before != g.meta.cells[r][0].after);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        g.meta.write_json(&p).unwrap();
        let back: GalleryMeta = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(back, g.meta);
    }

    #[test]
    fn zero_gradient_model_column_equals_originals() {
        let mut m = tiny_model(0);
        m.zero_output_layer();
        let batch = random_batch(2, 5);
        let g = attack_gallery(&[("z".into(), &m)], &batch, &[0, 1], Norm::L2).unwrap();
        for r in 0..2 {
            assert_eq!(g.grid.cell(r, 1), g.grid.cell(r, 0));
        }
        assert_eq!(g.meta.flips(0), 0);
    }

    fn grid_of(rows: usize, cols: usize, c: usize, h: usize, w: usize) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cells = (0..rows)
            .map(|_| (0..cols).map(|_| Array3::from_shape_simple_fn((c, h, w), || rng.gen::<f32>())).collect())
            .collect();
        ImageGrid::new(cells, (0..cols).map(|i| i.to_string()).collect()).unwrap()
    }

    #[test]
    fn png_layout_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let one = grid_of(1, 1, 1, 28, 28);
        let p = dir.path().join("one.png");
        emit_png(&one, &p, &[]).unwrap();
        let img = image::open(&p).unwrap();
        assert_eq!((img.width(), img.height()), (28, 28));

        let grid = grid_of(2, 3, 3, 32, 32);
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        emit_png(&grid, &a, &[("seed", "3".into())]).unwrap();
        emit_png(&grid, &b, &[("seed", "3".into())]).unwrap();
        let img = image::open(&a).unwrap().to_rgb8();
        assert_eq!((img.height(), img.width()), (2 * 32 + 2, 3 * 32 + 2 * 2));
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        // separator column is white, cells round-trip at 8 bits
        assert_eq!(img.get_pixel(32, 5).0, [255, 255, 255]);
        let v = grid.cell(1, 2)[[1, 3, 4]];
        assert_eq!(img.get_pixel(2 * 34 + 4, 34 + 3).0[1], to_byte(v));
    }

    #[test]
    fn png_to_unwritable_path_fails() {
        let grid = grid_of(1, 1, 1, 4, 4);
        assert!(emit_png(&grid, "/nonexistent-dir/x.png", &[]).is_err());
    }

    #[test]
    fn ragged_grid_rejected() {
        let a = Array3::<f32>::zeros((1, 4, 4));
        let b = Array3::<f32>::zeros((1, 5, 4));
        assert!(ImageGrid::new(vec![vec![a.clone(), b]], vec!["x".into(), "y".into()]).is_err());
        assert!(ImageGrid::new(vec![vec![a.clone()], vec![a.clone(), a]], vec!["x".into()]).is_err());
    }

    #[test]
    fn pearson_against_closed_forms() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // hand-computed: x = 1..4, y = (1, 3, 2, 4): cov 1.0, var 1.25 each
        assert!((pearson(&a, &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&a, &[1.0; 4]), 0.0);
    }

    #[test]
    fn alignment_is_a_correlation() {
        let m = tiny_model(1);
        let batch = random_batch(4, 6);
        let r = gradient_alignment(&m, &batch, &[0, 1, 2, 3]).unwrap();
        assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn annotation_draws_boxes() {
        let img = Array3::<f32>::zeros((1, 10, 10));
        let heat = Heatmap::new(Array2::zeros((10, 10))).unwrap();
        let gt = BoundingBox::new(1.0, 1.0, 5.0, 5.0).unwrap();
        let pred = BoundingBox::new(4.0, 4.0, 9.0, 8.0).unwrap();
        let out = annotate_localization(img.view(), &heat, Some(&gt), &pred).unwrap();
        assert_eq!(out.dim(), (3, 10, 10));
        assert_eq!([out[[0, 1, 2]], out[[1, 1, 2]]], [1.0, 0.0]);
        assert_eq!([out[[0, 7, 6]], out[[1, 7, 6]]], [0.0, 1.0]);
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let bad = Heatmap::new(Array2::zeros((3, 3))).unwrap();
        assert!(annotate_localization(img.view(), &bad, None, &pred).is_err());
    }
}
