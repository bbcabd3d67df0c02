use ndarray::{Array2, Array3};

use super::mel::MelSpectrogram;
use super::FeatureError;

pub const IMAGE_HEIGHT: usize = 288;
pub const IMAGE_WIDTH: usize = 432;

/// Half-pixel-centred bilinear sample positions for resizing `src` to `dst`.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let p = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = p.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, p - lo as f64)
        })
        .collect()
}

/// Render a spectrogram as a `height x width x 3` image tensor in [0, 1].
///
/// Rows are mel bands with the highest band at row 0, columns are frames.
/// Grayscale intensity is replicated across the three channels.
pub fn render_melspec_tensor(spec: &MelSpectrogram, height: usize, width: usize) -> Result<Array3<f32>, FeatureError> {
    let grid = &spec.grid;
    if grid.is_empty() || height == 0 || width == 0 {
        return Err(FeatureError::EmptyInput);
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(FeatureError::DegenerateRange);
    }
    let (n_frames, n_mels) = grid.dim();
    // image[r][c] = grid[c][n_mels - 1 - r]
    let image = Array2::from_shape_fn((n_mels, n_frames), |(r, c)| (grid[[c, n_mels - 1 - r]] - lo) / (hi - lo));

    let rows = sample_positions(n_mels, height);
    let cols = sample_positions(n_frames, width);
    let mut out = Array3::<f32>::zeros((height, width, 3));
    for (y, &(r0, r1, fy)) in rows.iter().enumerate() {
        for (x, &(c0, c1, fx)) in cols.iter().enumerate() {
            let top = image[[r0, c0]] * (1.0 - fx) + image[[r0, c1]] * fx;
            let bottom = image[[r1, c0]] * (1.0 - fx) + image[[r1, c1]] * fx;
            let v = (top * (1.0 - fy) + bottom * fy) as f32;
            for ch in 0..3 {
                out[[y, x, ch]] = v;
            }
        }
    }
    Ok(out)
}

/// [`render_melspec_tensor`], mapping a degenerate range to an all-zero image.
pub fn render_or_blank(spec: &MelSpectrogram, height: usize, width: usize) -> Result<Array3<f32>, FeatureError> {
    match render_melspec_tensor(spec, height, width) {
        Err(FeatureError::DegenerateRange) => Ok(Array3::zeros((height, width, 3))),
        other => other,
    }
}
