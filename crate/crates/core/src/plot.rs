//! Minimal raster plots. They are a view over CSV files written alongside;
//! the only text is numeric tick labels drawn with a 3×5 bitmap font.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);

/// Series colors, in series order.
pub const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([255, 127, 14]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

// 3×5 glyphs, rows top to bottom, bit 2 = left column.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '%' => [5, 1, 2, 4, 5],
        '-' => [0, 0, 7, 0, 0],
        _ => return None,
    })
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Draws `text` with its top-left corner at `(x, y)`, each font pixel
/// `scale` pixels wide.
fn text(img: &mut RgbImage, x: i64, y: i64, s: &str, scale: i64, color: Rgb<u8>) {
    for (i, ch) in s.chars().enumerate() {
        let Some(g) = glyph(ch) else { continue };
        let ox = x + i as i64 * 4 * scale;
        for (row, bits) in g.iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            put(img, ox + col * scale + dx, y + row as i64 * scale + dy, color);
                        }
                    }
                }
            }
        }
    }
}

fn text_width(s: &str, scale: i64) -> i64 {
    s.chars().count() as i64 * 4 * scale
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>, thick: i64) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let x = x0 + (x1 - x0) * s / steps;
        let y = y0 + (y1 - y0) * s / steps;
        for d in -(thick / 2)..=(thick / 2) {
            put(img, x, y + d, c);
            put(img, x + d, y, c);
        }
    }
}

fn rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    for y in y0.min(y1)..y0.max(y1) {
        for x in x0.min(x1)..x0.max(x1) {
            put(img, x, y, c);
        }
    }
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Accuracy (0–1, drawn as percent) against tasks learned, one line per
/// series, in [`PALETTE`] order.
pub fn accuracy_curves(series: &[Vec<f64>], path: &Path) -> Result<()> {
    let (w, h) = (640i64, 420i64);
    let (left, right, top, bottom) = (60i64, 20i64, 20i64, 50i64);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, BG);
    let n = series.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let px = |i: usize| -> i64 {
        if n == 1 {
            left + (w - left - right) / 2
        } else {
            left + (w - left - right) * i as i64 / (n as i64 - 1)
        }
    };
    let py = |v: f64| -> i64 { top + ((1.0 - v.clamp(0.0, 1.0)) * (h - top - bottom) as f64).round() as i64 };

    for k in 0..=4 {
        let v = k as f64 / 4.0;
        line(&mut img, (left, py(v)), (w - right, py(v)), GRID, 1);
        let label = format!("{}", k * 25);
        text(&mut img, left - 8 - text_width(&label, 2), py(v) - 5, &label, 2, AXIS);
    }
    for i in 0..n {
        let label = (i + 1).to_string();
        text(&mut img, px(i) - text_width(&label, 2) / 2, h - bottom + 10, &label, 2, AXIS);
    }
    line(&mut img, (left, top), (left, h - bottom), AXIS, 1);
    line(&mut img, (left, h - bottom), (w - right, h - bottom), AXIS, 1);

    for (s, values) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        for (i, pair) in values.windows(2).enumerate() {
            line(&mut img, (px(i), py(pair[0])), (px(i + 1), py(pair[1])), color, 3);
        }
        for (i, &v) in values.iter().enumerate() {
            rect(&mut img, px(i) - 3, py(v) - 3, px(i) + 4, py(v) + 4, color);
        }
    }
    save(&img, path)
}

/// Side-by-side horizontal bars (0–1) per row; `labels` are drawn at the left.
pub fn paired_bars(labels: &[String], first: &[f64], second: &[f64], path: &Path) -> Result<()> {
    let rows = labels.len().max(1) as i64;
    let bar = 8i64;
    let row_h = 2 * bar + 8;
    let (left, right, top, bottom) = (70i64, 30i64, 20i64, 40i64);
    let w = 640i64;
    let h = top + bottom + rows * row_h;
    let mut img = RgbImage::from_pixel(w as u32, h as u32, BG);
    let px = |v: f64| left + ((w - left - right) as f64 * v.clamp(0.0, 1.0)).round() as i64;

    for k in 0..=4 {
        let v = k as f64 / 4.0;
        line(&mut img, (px(v), top), (px(v), h - bottom), GRID, 1);
        let label = format!("{}", k * 25);
        text(&mut img, px(v) - text_width(&label, 2) / 2, h - bottom + 10, &label, 2, AXIS);
    }
    for (r, label) in labels.iter().enumerate() {
        let y = top + r as i64 * row_h + 4;
        text(&mut img, left - 8 - text_width(label, 2), y + bar - 5, label, 2, AXIS);
        rect(&mut img, left, y, px(first.get(r).copied().unwrap_or(0.0)), y + bar, PALETTE[0]);
        rect(&mut img, left, y + bar, px(second.get(r).copied().unwrap_or(0.0)), y + 2 * bar, PALETTE[1]);
    }
    line(&mut img, (left, top), (left, h - bottom), AXIS, 1);
    save(&img, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let curve = dir.path().join("c.png");
        accuracy_curves(&[vec![1.0, 0.8, 0.6], vec![0.9, 0.85]], &curve).unwrap();
        let img = image::open(&curve).unwrap().to_rgb8();
        assert_eq!((img.width(), img.height()), (640, 420));
        assert!(img.pixels().any(|p| *p == PALETTE[0]));
        assert!(img.pixels().any(|p| *p == PALETTE[1]));

        let bars = dir.path().join("b.png");
        paired_bars(&["3".into(), "10".into()], &[0.5, 1.0], &[0.25, 0.75], &bars).unwrap();
        assert!(image::open(&bars).is_ok());
    }

    #[test]
    fn every_tick_character_has_a_glyph() {
        for c in "0123456789.%-".chars() {
            assert!(glyph(c).is_some());
        }
    }
}
