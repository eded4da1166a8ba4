//! Binary PGM/PPM encoding and explanation masks.

use std::collections::{BTreeMap, BTreeSet};

use hexplain::neural::Image;
use hexplain::tasks::TaskSpec;

/// Brightness factor for pixels outside an explanation.
pub const DIM: f64 = 0.25;
const GAP: u8 = 128;

/// Raster of 8-bit samples with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    fn filled(width: usize, height: usize, channels: usize, v: u8) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![v; width * height * channels],
        }
    }

    /// P5 for one channel, P6 for three.
    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn extension(&self) -> &'static str {
        if self.channels == 3 {
            "ppm"
        } else {
            "pgm"
        }
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `img` with features outside `keep` dimmed; `None` keeps everything.
pub fn masked(img: &Image, keep: Option<&BTreeSet<usize>>) -> Raster {
    let data = img
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &v)| match keep {
            Some(k) if !k.contains(&i) => to_byte(v * DIM),
            _ => to_byte(v),
        })
        .collect();
    Raster {
        width: img.width,
        height: img.height,
        channels: img.channels,
        data,
    }
}

/// Tiles the inputs of an instance: Pacman cells on their grid, digits in
/// one row, separated by 1-pixel gaps. With `per_input`, inputs absent from
/// the map are dimmed entirely and present ones show their explanation.
pub fn tile(task: &TaskSpec, images: &[Image], per_input: Option<&BTreeMap<usize, BTreeSet<usize>>>) -> Raster {
    let (cols, rows) = match *task {
        TaskSpec::Pacman { width, height } => (width, height),
        _ => (images.len(), 1),
    };
    let (w, h, ch) = (images[0].width, images[0].height, images[0].channels);
    let mut out = Raster::filled(cols * (w + 1) - 1, rows * (h + 1) - 1, ch, GAP);
    let nothing = BTreeSet::new();
    for (j, img) in images.iter().enumerate() {
        let r = match per_input {
            None => masked(img, None),
            Some(m) => masked(img, Some(m.get(&j).unwrap_or(&nothing))),
        };
        let (ox, oy) = ((j % cols) * (w + 1), (j / cols) * (h + 1));
        for y in 0..h {
            let dst = ((oy + y) * out.width + ox) * ch;
            out.data[dst..dst + w * ch].copy_from_slice(&r.data[y * w * ch..(y + 1) * w * ch]);
        }
    }
    out
}
