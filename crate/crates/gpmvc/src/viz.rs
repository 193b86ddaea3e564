//! Rendering: generated-sample grids as PNG and metric-vs-ratio curves as
//! SVG. Both render to static files with no display server.

use std::path::Path;

use image::{GrayImage, Luma};
use ndarray::ArrayView1;

use crate::dataio::MultiViewDataset;
use crate::error::{Error, Result};
use crate::networks::ModelState;

const CELL_PAD: u32 = 2;

/// Resolve the image shape for a view: explicit manifest metadata first,
/// then square inference from the feature width.
pub fn image_shape(dataset: &MultiViewDataset, view: usize) -> Result<(usize, usize)> {
    if let Some(shape) = dataset.image_shapes.get(view).copied().flatten() {
        return Ok(shape);
    }
    let d = dataset.views[view].ncols();
    let side = (d as f64).sqrt().round() as usize;
    if side * side == d {
        Ok((side, side))
    } else {
        Err(Error::InvalidConfig(format!(
            "view {view} has {d} features, which is not square; image metadata \
             (manifest image_shapes) is required to render samples"
        )))
    }
}

fn blit(img: &mut GrayImage, row: ArrayView1<f64>, h: usize, w: usize, y0: u32, x0: u32) {
    for r in 0..h {
        for c in 0..w {
            let value = (row[r * w + c].clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(x0 + c as u32, y0 + r as u32, Luma([value]));
        }
    }
}

/// A grid of `count` columns contrasting real source images, samples of the
/// target view generated from the source latents, and the real target
/// images. When the source view has no image shape the grid drops its row.
pub fn generation_grid(
    dataset: &MultiViewDataset,
    model: &ModelState,
    target: usize,
    source: usize,
    count: usize,
) -> Result<GrayImage> {
    if count == 0 {
        return Err(Error::Invalid("sample grid needs count >= 1".into()));
    }
    if target >= dataset.num_views() || source >= dataset.num_views() || target == source {
        return Err(Error::Invalid(format!(
            "bad view pair: target {target}, source {source}"
        )));
    }
    let count = count.min(dataset.num_samples());
    let (th, tw) = image_shape(dataset, target)?;
    let source_shape = image_shape(dataset, source).ok();

    let x_src = dataset.views[source].slice(ndarray::s![..count, ..]).to_owned();
    let z = model.encode(source, x_src.view())?;
    let generated = model.generate(target, z.view())?;

    let mut rows: Vec<(&ndarray::Array2<f64>, usize, usize)> = Vec::new();
    let owned_target = dataset.views[target].slice(ndarray::s![..count, ..]).to_owned();
    if let Some((sh, sw)) = source_shape {
        rows.push((&x_src, sh, sw));
    }
    rows.push((&generated, th, tw));
    rows.push((&owned_target, th, tw));

    let cell_h = rows.iter().map(|&(_, h, _)| h).max().unwrap() as u32;
    let cell_w = rows.iter().map(|&(_, _, w)| w).max().unwrap() as u32;
    let width = CELL_PAD + (cell_w + CELL_PAD) * count as u32;
    let height = CELL_PAD + (cell_h + CELL_PAD) * rows.len() as u32;
    let mut img = GrayImage::from_pixel(width, height, Luma([32]));
    for (ri, (data, h, w)) in rows.iter().enumerate() {
        let y0 = CELL_PAD + ri as u32 * (cell_h + CELL_PAD);
        for col in 0..count {
            let x0 = CELL_PAD + col as u32 * (cell_w + CELL_PAD);
            blit(&mut img, data.row(col), *h, *w, y0, x0);
        }
    }
    Ok(img)
}

pub fn save_gray_png(path: &Path, img: &GrayImage) -> Result<()> {
    img.save(path)
        .map_err(|e| Error::Invalid(format!("writing {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// SVG line charts
// ---------------------------------------------------------------------------

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One named series of `(x, y)` points.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Render named series as an SVG line chart; y is clipped to `[0, 1]`
/// (metric scale).
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(x, _)| x))
        .collect();
    let (x_min, x_max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let (x_min, x_max) = if x_min.is_finite() && x_max > x_min {
        (x_min, x_max)
    } else {
        (0.0, 1.0)
    };
    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let plot_h = CHART_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| MARGIN_T + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_W}\" height=\"{CHART_H}\" \
         viewBox=\"0 0 {CHART_W} {CHART_H}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        CHART_W / 2.0,
        title
    ));

    // Gridlines and y ticks at 0, 0.25, ..., 1.
    for i in 0..=4 {
        let y = i as f64 / 4.0;
        let yy = py(y);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{yy}\" x2=\"{}\" y2=\"{yy}\" stroke=\"#ddd\"/>\n",
            CHART_W - MARGIN_R
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{y:.2}</text>\n",
            MARGIN_L - 8.0,
            yy + 4.0
        ));
    }
    // X ticks at each distinct x.
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ticks.dedup();
    for &x in &ticks {
        let xx = px(x);
        svg.push_str(&format!(
            "<line x1=\"{xx}\" y1=\"{}\" x2=\"{xx}\" y2=\"{}\" stroke=\"#eee\"/>\n",
            MARGIN_T,
            CHART_H - MARGIN_B
        ));
        svg.push_str(&format!(
            "<text x=\"{xx}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{x}</text>\n",
            CHART_H - MARGIN_B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        CHART_H - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        y_label
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = s.points.clone();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in &points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        let ly = MARGIN_T + 16.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{color}\"/>\n",
            MARGIN_L + 8.0,
            ly
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            MARGIN_L + 26.0,
            ly + 5.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionMode;
    use crate::networks::NetworkConfig;
    use crate::rng::SeededRng;
    use crate::synth;

    #[test]
    fn grid_has_three_rows_for_image_source() {
        let ds = synth::image_like(1).unwrap();
        let mut rng = SeededRng::new(1);
        let config = NetworkConfig {
            latent_dim: 4,
            encoder_hidden: vec![16],
            discriminator_hidden: [8, 4],
            ..NetworkConfig::default()
        };
        let model = ModelState::init(&config, &ds.dims(), FusionMode::Projected, &mut rng);
        let grid = generation_grid(&ds, &model, 1, 0, 8).unwrap();
        // 3 rows x 8 columns of 8x8 cells plus padding.
        assert_eq!(grid.width(), 2 + 8 * 10);
        assert_eq!(grid.height(), 2 + 3 * 10);
    }

    #[test]
    fn non_square_view_without_metadata_is_rejected() {
        let ds = synth::SynthSpec {
            name: "ns".into(),
            samples: 20,
            classes: 2,
            dims: vec![10, 16],
            latent_dim: 4,
            cluster_sep: 3.0,
            within_scatter: 0.5,
            feature_noise: 0.01,
            confusions: vec![vec![], vec![]],
            confusion_residual: 1.0,
            seed: 2,
        }
        .generate()
        .unwrap();
        // View 1 (16 = 4x4) infers a square; view 0 (10) cannot.
        assert!(image_shape(&ds, 1).is_ok());
        let err = image_shape(&ds, 0).unwrap_err();
        assert!(err.to_string().contains("image metadata"));
    }

    #[test]
    fn zero_count_is_rejected() {
        let ds = synth::image_like(3).unwrap();
        let mut rng = SeededRng::new(3);
        let config = NetworkConfig {
            latent_dim: 4,
            encoder_hidden: vec![8],
            discriminator_hidden: [8, 4],
            ..NetworkConfig::default()
        };
        let model = ModelState::init(&config, &ds.dims(), FusionMode::Projected, &mut rng);
        assert!(generation_grid(&ds, &model, 1, 0, 0).is_err());
    }

    #[test]
    fn svg_chart_contains_series() {
        let series = vec![
            Series {
                name: "ALL".into(),
                points: vec![(0.1, 0.5), (0.5, 0.8), (0.9, 0.95)],
            },
            Series {
                name: "AE".into(),
                points: vec![(0.1, 0.4), (0.5, 0.6), (0.9, 0.7)],
            },
        ];
        let svg = line_chart_svg("NMI by ratio", "impartial ratio", "NMI", &series);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains(">ALL<"));
        assert!(svg.contains(">AE<"));
    }
}
