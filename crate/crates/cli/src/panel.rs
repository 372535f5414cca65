//! Explanation panels: query tile first, neighbor tiles to its right.

use fgns::Mask;

/// Integer upscaling applied to every tile.
pub const SCALE: usize = 4;
/// White gap between adjacent tiles, in output pixels.
pub const SEPARATOR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Png,
    Pgm,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "png" => Ok(Format::Png),
            "pgm" => Ok(Format::Pgm),
            other => Err(format!("unknown panel format {other:?} (png or pgm)")),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Png => "png",
            Format::Pgm => "pgm",
        }
    }
}

/// Row-major 8-bit raster, one or three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Panel {
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

pub fn panel_width(tiles: usize, cols: usize) -> usize {
    tiles * cols * SCALE + tiles.saturating_sub(1) * SEPARATOR
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Lay out `tiles` (normalized pixels, `rows × cols` each) left to right.
/// With `overlay`, mask pixels are tinted red and the panel becomes RGB.
pub fn render(tiles: &[&[f64]], rows: usize, cols: usize, overlay: Option<&Mask>) -> Panel {
    let channels = if overlay.is_some() { 3 } else { 1 };
    let width = panel_width(tiles.len(), cols);
    let height = rows * SCALE;
    let mut data = vec![255u8; width * height * channels];
    for (t, px) in tiles.iter().enumerate() {
        let x0 = t * (cols * SCALE + SEPARATOR);
        for y in 0..height {
            for x in 0..cols * SCALE {
                let src = (y / SCALE) * cols + x / SCALE;
                let v = to_byte(px[src]);
                let dst = (y * width + x0 + x) * channels;
                match overlay {
                    None => data[dst] = v,
                    Some(m) if m.bits()[src] => {
                        let half = v / 2;
                        data[dst] = 128 + half;
                        data[dst + 1] = half;
                        data[dst + 2] = half;
                    }
                    Some(_) => data[dst..dst + 3].fill(v),
                }
            }
        }
    }
    Panel {
        width,
        height,
        channels,
        data,
    }
}

pub fn encode_png(panel: &Panel, config_hash: &str) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, panel.width as u32, panel.height as u32);
        enc.set_color(if panel.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("config_hash".into(), config_hash.into())?;
        let mut w = enc.write_header()?;
        w.write_image_data(&panel.data)?;
    }
    Ok(out)
}

/// Binary netpbm: `P5` for grayscale, `P6` for tinted panels.
pub fn encode_pnm(panel: &Panel, config_hash: &str) -> Vec<u8> {
    let magic = if panel.channels == 3 { "P6" } else { "P5" };
    let mut out = format!(
        "{magic}\n# config_hash={config_hash}\n{} {}\n255\n",
        panel.width, panel.height
    )
    .into_bytes();
    out.extend_from_slice(&panel.data);
    out
}
