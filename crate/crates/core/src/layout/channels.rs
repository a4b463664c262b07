//! Per-node visual channels: size, color and long-tail opacity.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

pub const MIN_SIZE_SCALE: f64 = 1.0;
pub const MAX_SIZE_SCALE: f64 = 3.0;
pub const MIN_LONGTAIL_OPACITY: f64 = 0.08;

/// Area-proportional size: `sqrt(frequency)` clamped to
/// `[MIN_SIZE_SCALE, MAX_SIZE_SCALE]`.
///
/// The ceiling is reached at nine generations; with fewer in total, a node
/// shared by all of them stays below it.
pub fn node_size(frequency: usize, total_generations: usize) -> f64 {
    let f = frequency.clamp(1, total_generations.max(1));
    (f as f64).sqrt().clamp(MIN_SIZE_SCALE, MAX_SIZE_SCALE)
}

/// Opacity for the hide-longtail slider `t`.
pub fn longtail_opacity(frequency: usize, total: usize, t: f64) -> f64 {
    let cut = t * total as f64;
    if t <= 0.0 || frequency as f64 >= cut {
        1.0
    } else {
        (frequency as f64 / cut).max(MIN_LONGTAIL_OPACITY)
    }
}

/// A color in linear RGB, channels in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRgb(pub [f64; 3]);

impl LinearRgb {
    pub fn from_hex(hex: &str) -> Option<Self> {
        let h = hex.strip_prefix('#').unwrap_or(hex);
        if h.len() != 6 || !h.is_ascii() {
            return None;
        }
        let mut c = [0.0; 3];
        for (i, slot) in c.iter_mut().enumerate() {
            let byte = u8::from_str_radix(&h[2 * i..2 * i + 2], 16).ok()?;
            *slot = srgb_to_linear(f64::from(byte) / 255.0);
        }
        Some(Self(c))
    }

    pub fn to_hex(self) -> String {
        let [r, g, b] = self
            .0
            .map(|c| (linear_to_srgb(c.clamp(0.0, 1.0)) * 255.0).round() as u8);
        format!("#{r:02x}{g:02x}{b:02x}")
    }

    /// Mixes toward white by `amount` in linear space.
    pub fn lighten(self, amount: f64) -> Self {
        Self(self.0.map(|c| c + (1.0 - c) * amount))
    }
}

impl fmt::Display for LinearRgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

/// Okabe-Ito colorblind-safe hues, in assignment order.
pub const PALETTE_HEX: [&str; 8] = [
    "#0072B2", "#E69F00", "#009E73", "#CC79A7", "#56B4E9", "#D55E00", "#F0E442", "#000000",
];

/// Color for the `index`-th prompt. Past the eighth, hues repeat, lighter
/// on each cycle.
pub fn palette_color(index: usize) -> LinearRgb {
    let base = LinearRgb::from_hex(PALETTE_HEX[index % PALETTE_HEX.len()]).expect("valid palette hex");
    let cycle = index / PALETTE_HEX.len();
    if cycle == 0 {
        base
    } else {
        base.lighten(1.0 - 0.6f64.powi(cycle as i32))
    }
}

/// Average of prompt colors weighted by per-prompt generation counts.
/// Prompts missing from `palette` are ignored; with none left the result
/// is mid grey.
pub fn node_color(prompt_counts: &BTreeMap<String, usize>, palette: &BTreeMap<String, LinearRgb>) -> LinearRgb {
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (prompt, &count) in prompt_counts {
        let Some(color) = palette.get(prompt) else {
            continue;
        };
        let w = count as f64;
        for (a, c) in acc.iter_mut().zip(color.0) {
            *a += w * c;
        }
        total += w;
    }
    if total == 0.0 {
        return LinearRgb([0.5; 3]);
    }
    LinearRgb(acc.map(|a| a / total))
}
