//! Field-to-image rendering: symmetric diverging colormap (blue - white -
//! red) around zero, side-by-side comparison panels.

use std::path::Path;

use anyhow::Context;
use heap_solver::Field2D;

/// Blue-white-red at `t` in [-1, 1].
fn diverging(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    let lerp = |a: f64, b: f64, x: f64| (a + (b - a) * x) as u8;
    if t < 0.0 {
        let x = t + 1.0; // 0 at -1, 1 at 0
        [lerp(33.0, 255.0, x), lerp(102.0, 255.0, x), lerp(172.0, 255.0, x)]
    } else {
        [lerp(255.0, 178.0, t), lerp(255.0, 24.0, t), lerp(255.0, 43.0, t)]
    }
}

fn field_pixels(field: &Field2D, scale: f64) -> Vec<u8> {
    let mut px = Vec::with_capacity(field.nx() * field.ny() * 3);
    for y in 0..field.ny() {
        for x in 0..field.nx() {
            px.extend(diverging(field.at(x, y) / scale));
        }
    }
    px
}

pub fn write_field_png(field: &Field2D, path: impl AsRef<Path>) -> anyhow::Result<()> {
    let scale = field.max_abs().max(f64::MIN_POSITIVE);
    let img = image::RgbImage::from_raw(
        field.nx() as u32,
        field.ny() as u32,
        field_pixels(field, scale),
    )
    .context("pixel buffer size mismatch")?;
    img.save(path.as_ref()).with_context(|| format!("writing {}", path.as_ref().display()))?;
    Ok(())
}

/// Generated and truth side by side with a 2-pixel divider, shared scale.
pub fn write_pair_png(
    generated: &Field2D,
    truth: &Field2D,
    path: impl AsRef<Path>,
) -> anyhow::Result<()> {
    let (nx, ny) = (generated.nx(), generated.ny());
    anyhow::ensure!(truth.nx() == nx && truth.ny() == ny, "field shapes differ");
    let scale = generated.max_abs().max(truth.max_abs()).max(f64::MIN_POSITIVE);
    let gap = 2usize;
    let width = 2 * nx + gap;
    let mut px = vec![0u8; width * ny * 3];
    for y in 0..ny {
        for x in 0..nx {
            let g = diverging(generated.at(x, y) / scale);
            let t = diverging(truth.at(x, y) / scale);
            let row = y * width;
            px[(row + x) * 3..(row + x) * 3 + 3].copy_from_slice(&g);
            let tx = row + nx + gap + x;
            px[tx * 3..tx * 3 + 3].copy_from_slice(&t);
        }
    }
    let img = image::RgbImage::from_raw(width as u32, ny as u32, px)
        .context("pixel buffer size mismatch")?;
    img.save(path.as_ref()).with_context(|| format!("writing {}", path.as_ref().display()))?;
    Ok(())
}

/// Snapshot indices at powers of two plus the final step: 1, 2, 4, ..., n.
pub fn log_spaced_steps(n: usize) -> Vec<usize> {
    let mut steps = Vec::new();
    let mut s = 1usize;
    while s <= n {
        steps.push(s);
        s *= 2;
    }
    if *steps.last().unwrap_or(&0) != n && n >= 1 {
        steps.push(n);
    }
    steps
}
