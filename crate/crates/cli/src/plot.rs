//! Raster images of fields and truth / prediction / error panels.
//!
//! Fields use viridis. A truth and prediction pair share one color scale.
//! Errors `y_hat - y` use a diverging map centred on zero. Every image comes
//! with a small text legend holding the value bounds of each panel.

use std::io::Cursor;
use std::path::Path;

use anyhow::{bail, Result};
use colorous::Gradient;
use flowdiff_core::container::write_atomic;
use flowdiff_core::fields::ScalarField2D;
use image::{ImageFormat, Rgb, RgbImage};

const GAP: u32 = 4;
const MIN_PANEL: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn of(fields: &[&ScalarField2D]) -> Self {
        let mut b = Bounds { min: f64::INFINITY, max: f64::NEG_INFINITY };
        for v in fields.iter().flat_map(|f| f.values()) {
            b.min = b.min.min(*v);
            b.max = b.max.max(*v);
        }
        b
    }

    /// Symmetric bounds `[-m, m]` with `m = max |v|`.
    pub fn symmetric(field: &ScalarField2D) -> Self {
        let m = field.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Bounds { min: -m, max: m }
    }

    /// Position in `[0, 1]`; degenerate ranges map to the midpoint.
    fn unit(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            0.5
        } else {
            ((v - self.min) / span).clamp(0.0, 1.0)
        }
    }
}

fn scale_for(nx: usize) -> u32 {
    (MIN_PANEL.div_ceil(nx)).max(1) as u32
}

fn draw(img: &mut RgbImage, x0: u32, field: &ScalarField2D, bounds: Bounds, map: Gradient, scale: u32) {
    let (nx, ny) = field.dims();
    for j in 0..ny {
        for i in 0..nx {
            let c = map.eval_continuous(bounds.unit(field.at(i, j)));
            // y grows upwards in the image
            let py = (ny - 1 - j) as u32 * scale;
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(x0 + i as u32 * scale + dx, py + dy, Rgb([c.r, c.g, c.b]));
                }
            }
        }
    }
}

fn encode(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn legend_line(label: &str, b: Bounds) -> String {
    format!("{label} min={} max={}\n", b.min, b.max)
}

/// One field in viridis. Returns the PNG bytes and the legend text.
pub fn render_field(field: &ScalarField2D) -> Result<(Vec<u8>, String)> {
    let (nx, ny) = field.dims();
    let s = scale_for(nx);
    let mut img = RgbImage::from_pixel(nx as u32 * s, ny as u32 * s, Rgb([255, 255, 255]));
    let b = Bounds::of(&[field]);
    draw(&mut img, 0, field, b, colorous::VIRIDIS, s);
    Ok((encode(&img)?, legend_line("field", b)))
}

/// `truth | prediction | error` side by side.
pub fn render_panel(truth: &ScalarField2D, pred: &ScalarField2D) -> Result<(Vec<u8>, String)> {
    if truth.dims() != pred.dims() {
        bail!("prediction grid {:?} does not match truth grid {:?}", pred.dims(), truth.dims());
    }
    let (nx, ny) = truth.dims();
    let s = scale_for(nx);
    let w = nx as u32 * s;
    let mut img = RgbImage::from_pixel(3 * w + 2 * GAP, ny as u32 * s, Rgb([255, 255, 255]));
    let shared = Bounds::of(&[truth, pred]);
    let err = ScalarField2D::new(
        nx,
        ny,
        pred.values().iter().zip(truth.values()).map(|(p, t)| p - t).collect(),
        truth.domain(),
    )?;
    let eb = Bounds::symmetric(&err);
    draw(&mut img, 0, truth, shared, colorous::VIRIDIS, s);
    draw(&mut img, w + GAP, pred, shared, colorous::VIRIDIS, s);
    draw(&mut img, 2 * (w + GAP), &err, eb, colorous::RED_BLUE, s);
    let legend = legend_line("truth", shared) + &legend_line("prediction", shared) + &legend_line("error", eb);
    Ok((encode(&img)?, legend))
}

pub fn write_image(dir: &Path, stem: &str, (png, legend): (Vec<u8>, String)) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.png")), &png)?;
    write_atomic(&dir.join(format!("{stem}.legend.txt")), legend.as_bytes())?;
    Ok(())
}
