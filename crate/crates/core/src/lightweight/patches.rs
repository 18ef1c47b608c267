//! Square images cut into a row-major grid of square patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of an `S×S` source zero-padded (bottom/right) to `S'×S'`,
/// `S' = P·⌈S/P⌉`, and split into `P×P` patches indexed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub source: usize,
    pub patch: usize,
    pub padded: usize,
    pub per_side: usize,
}

impl PatchGrid {
    pub fn new(source: usize, patch: usize) -> Result<Self> {
        if source == 0 || patch == 0 {
            return Err(Error::Contract("source and patch sizes must be positive".into()));
        }
        let per_side = source.div_ceil(patch);
        Ok(Self {
            source,
            patch,
            padded: per_side * patch,
            per_side,
        })
    }

    pub fn count(&self) -> usize {
        self.per_side * self.per_side
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch * self.patch
    }

    pub fn canvas_pixels(&self) -> usize {
        self.padded * self.padded
    }

    /// Top-left pixel (row, col) of patch `index` on the padded canvas.
    pub fn origin(&self, index: usize) -> (usize, usize) {
        (
            (index / self.per_side) * self.patch,
            (index % self.per_side) * self.patch,
        )
    }

    /// Canvas offsets of the pixels of patch `index`, row-major.
    pub fn pixel_offsets(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (r0, c0) = self.origin(index);
        (0..self.patch).flat_map(move |r| (0..self.patch).map(move |c| (r0 + r) * self.padded + c0 + c))
    }

    /// Zero-pads an `S×S` row-major image to the canvas size.
    pub fn pad(&self, image: &[f64]) -> Result<Vec<f64>> {
        if image.len() != self.source * self.source {
            return Err(Error::Shape(format!(
                "expected a {0}x{0} image, got {1} pixels",
                self.source,
                image.len()
            )));
        }
        let mut out = vec![0.0; self.canvas_pixels()];
        for r in 0..self.source {
            out[r * self.padded..r * self.padded + self.source]
                .copy_from_slice(&image[r * self.source..(r + 1) * self.source]);
        }
        Ok(out)
    }

    pub fn extract(&self, canvas: &[f64], index: usize) -> Vec<f64> {
        self.pixel_offsets(index).map(|o| canvas[o]).collect()
    }

    pub fn place(&self, canvas: &mut [f64], index: usize, values: &[f64]) {
        for (o, &v) in self.pixel_offsets(index).zip(values) {
            canvas[o] = v;
        }
    }
}

/// Bilinear resize of a square image (pixel-centre alignment, edge clamp).
pub fn resize_bilinear(image: &[f64], from: usize, to: usize) -> Vec<f64> {
    let scale = from as f64 / to as f64;
    let coord = |i: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (from - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(from - 1);
        (lo, hi, x - lo as f64)
    };
    let mut out = vec![0.0; to * to];
    for r in 0..to {
        let (r0, r1, fr) = coord(r);
        for c in 0..to {
            let (c0, c1, fc) = coord(c);
            let top = image[r0 * from + c0] * (1.0 - fc) + image[r0 * from + c1] * fc;
            let bottom = image[r1 * from + c0] * (1.0 - fc) + image[r1 * from + c1] * fc;
            out[r * to + c] = top * (1.0 - fr) + bottom * fr;
        }
    }
    out
}

/// Population variance of the patch's pixels.
pub fn patch_variance(grid: &PatchGrid, canvas: &[f64], index: usize) -> f64 {
    let px = grid.extract(canvas, index);
    let n = px.len() as f64;
    let mean = px.iter().sum::<f64>() / n;
    px.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// First-round selection: the `k` patches of highest pixel variance on the
/// padded image, ties broken by ascending index.
pub fn edge_select_initial(canvas: &[f64], grid: &PatchGrid, k: usize) -> Result<Vec<usize>> {
    if k > grid.count() {
        return Err(Error::Contract(format!(
            "cannot select {k} of {} patches",
            grid.count()
        )));
    }
    let mut scored: Vec<(f64, usize)> = (0..grid.count())
        .map(|i| (patch_variance(grid, canvas, i), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(PatchGrid::new(28, 4).unwrap().count(), 49);
        assert_eq!(PatchGrid::new(56, 8).unwrap().count(), 49);
        let g = PatchGrid::new(28, 8).unwrap();
        assert_eq!((g.padded, g.count()), (32, 16));
        assert!(PatchGrid::new(0, 4).is_err());
    }

    #[test]
    fn patches_tile_the_canvas() {
        let g = PatchGrid::new(6, 4).unwrap();
        let mut seen = vec![0; g.canvas_pixels()];
        for i in 0..g.count() {
            for o in g.pixel_offsets(i) {
                seen[o] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert_eq!(g.origin(1), (0, 4));
        assert_eq!(g.origin(2), (4, 0));
    }

    #[test]
    fn padding_is_bottom_right() {
        let g = PatchGrid::new(2, 4).unwrap();
        let c = g.pad(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(&c[..6], &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0]);
        assert!(c[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_zero_image_selects_first_indices() {
        let g = PatchGrid::new(28, 4).unwrap();
        let sel = edge_select_initial(&vec![0.0; 784], &g, 4).unwrap();
        assert_eq!(sel, vec![0, 1, 2, 3]);
        assert!(edge_select_initial(&vec![0.0; 784], &g, 50).is_err());
    }

    #[test]
    fn single_textured_patch_ranks_first() {
        let g = PatchGrid::new(8, 4).unwrap();
        let mut c = vec![0.5; 64];
        g.place(&mut c, 3, &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(edge_select_initial(&c, &g, 2).unwrap(), vec![3, 0]);
    }

    #[test]
    fn resize_preserves_constants_and_doubles_pixels() {
        let up = resize_bilinear(&[0.3; 4], 2, 4);
        assert!(up.iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let up = resize_bilinear(&[0.0, 1.0, 0.0, 1.0], 2, 4);
        assert_eq!(&up[..4], &[0.0, 0.25, 0.75, 1.0]);
    }
}
