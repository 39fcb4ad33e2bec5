//! Receptive-field reconstruction and grid export.
//!
//! Layer-1 fields are the filters themselves. A field of layer `L > 1` is the
//! weighted sum of the layer `L-1` fields placed at the pixel offset of each
//! kernel position; one pooling stage separates consecutive layers, so the
//! offset stride doubles with depth. The reconstruction ignores the pooling
//! window and is therefore approximate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hebbconv_core::Network;

use crate::error::{io_err, Error, Result};

/// Fields of one layer as planar RGB tiles of `tile x tile` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RfGrid {
    pub tile: usize,
    pub channels: usize,
    pub fields: Vec<Vec<f64>>,
}

impl RfGrid {
    pub fn value(&self, field: usize, c: usize, i: usize, j: usize) -> f64 {
        self.fields[field][(c * self.tile + i) * self.tile + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.fields.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Reconstructs the fields of `layer` (zero-based).
pub fn receptive_fields(network: &Network, layer: usize) -> Result<RfGrid> {
    let layers = network.layers();
    if layer >= layers.len() {
        return Err(Error::Config(format!(
            "layer {} out of range: network has {} layers",
            layer + 1,
            layers.len()
        )));
    }
    let first = layers[0].weights().dims();
    let t = first.height.max(first.width);
    let mut grid = RfGrid {
        tile: t,
        channels: first.in_channels,
        fields: (0..first.out_channels)
            .map(|o| {
                let mut f = vec![0.0; first.in_channels * t * t];
                for c in 0..first.in_channels {
                    for u in 0..first.height {
                        for v in 0..first.width {
                            f[(c * t + u) * t + v] = layers[0].weights().get(o, c, u, v) as f64;
                        }
                    }
                }
                f
            })
            .collect(),
    };
    for (l, conv) in layers.iter().enumerate().take(layer + 1).skip(1) {
        let k = conv.weights().dims();
        let stride = 1usize << l;
        let extent = grid.tile + (k.height.max(k.width) - 1) * stride;
        let tile = extent.max(grid.tile.max(t) << 1);
        let planes = grid.channels;
        let mut fields = Vec::with_capacity(k.out_channels);
        for o in 0..k.out_channels {
            let mut f = vec![0.0f64; planes * tile * tile];
            for c in 0..k.in_channels {
                let prev = &grid.fields[c];
                for u in 0..k.height {
                    for v in 0..k.width {
                        let w = conv.weights().get(o, c, u, v) as f64;
                        if w == 0.0 {
                            continue;
                        }
                        let (di, dj) = (u * stride, v * stride);
                        for p in 0..planes {
                            for i in 0..grid.tile {
                                for j in 0..grid.tile {
                                    f[(p * tile + di + i) * tile + dj + j] +=
                                        w * prev[(p * grid.tile + i) * grid.tile + j];
                                }
                            }
                        }
                    }
                }
            }
            fields.push(f);
        }
        grid = RfGrid {
            tile,
            channels: planes,
            fields,
        };
    }
    Ok(grid)
}

/// An 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let k = 3 * (y * self.width + x);
        [self.pixels[k], self.pixels[k + 1], self.pixels[k + 2]]
    }
}

/// Normalized value in `[0, 1]`; zero maps to 0.5 in every tile.
fn level(v: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        0.5
    } else {
        (0.5 + 0.5 * v / scale).clamp(0.0, 1.0)
    }
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round() as u8
}

/// Lays the tiles out on a near-square grid with 1-pixel black borders.
/// Single-channel fields render as gray; three-channel fields as RGB.
pub fn render_grid(grid: &RfGrid) -> RgbImage {
    let n = grid.fields.len().max(1);
    let cols = (1..=n).find(|c| c * c >= n).unwrap();
    let rows = n.div_ceil(cols);
    let cell = grid.tile + 1;
    let (width, height) = (cols * cell + 1, rows * cell + 1);
    let mut pixels = vec![0u8; 3 * width * height];
    let scale = grid.max_abs();
    for idx in 0..rows * cols {
        let (x0, y0) = ((idx % cols) * cell + 1, (idx / cols) * cell + 1);
        for i in 0..grid.tile {
            for j in 0..grid.tile {
                let k = 3 * ((y0 + i) * width + x0 + j);
                for ch in 0..3 {
                    let v = if idx < grid.fields.len() {
                        let c = if grid.channels == 3 { ch } else { 0 };
                        level(grid.value(idx, c, i, j), scale)
                    } else {
                        0.5
                    };
                    pixels[k + ch] = to_byte(v);
                }
            }
        }
    }
    RgbImage { width, height, pixels }
}

pub fn write_png(image: &RgbImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(&image.pixels).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

pub fn write_ppm(image: &RgbImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{} {}\n255\n", image.width, image.height).map_err(io_err(path))?;
    w.write_all(&image.pixels).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes the grid of `layer` (zero-based) as PPM when the path ends in
/// `.ppm` and as PNG otherwise.
pub fn export_receptive_fields(network: &Network, layer: usize, path: &Path) -> Result<RgbImage> {
    let image = render_grid(&receptive_fields(network, layer)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ppm") => write_ppm(&image, path)?,
        _ => write_png(&image, path)?,
    }
    Ok(image)
}
