//! Seam energy: first differences across patch borders versus elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::pyramid::PatchGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    /// Mean |first difference| between neighbours on opposite sides of a
    /// patch border.
    pub boundary_gradient_mean: f64,
    /// Mean |first difference| between all other neighbours.
    pub interior_gradient_mean: f64,
    /// `boundary / interior`; 1 when both vanish.
    pub ratio: f64,
}

pub fn seam_energy(img: &ImagePlane, grid: &PatchGrid) -> Result<SeamReport> {
    if grid.extent() != (img.width(), img.height()) {
        return Err(Error::ShapeMismatch(format!(
            "grid extent {:?} does not match image {}",
            grid.extent(),
            img.shape()
        )));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidParameter(
            "seam energy needs a grid with at least two patches".into(),
        ));
    }
    let m = grid.patch_size();
    let (dx, dy) = grid.offset();
    // The difference between columns x-1 and x straddles a border when x
    // is the first column of a patch.
    let col_border = |x: usize| (x + dx).is_multiple_of(m);
    let row_border = |y: usize| (y + dy).is_multiple_of(m);

    let (mut b_sum, mut b_n, mut i_sum, mut i_n) = (0.0, 0usize, 0.0, 0usize);
    let mut add = |border: bool, d: f64| {
        if border {
            b_sum += d;
            b_n += 1;
        } else {
            i_sum += d;
            i_n += 1;
        }
    };
    for c in 0..img.channels() {
        for y in 0..img.height() {
            let row = img.row(c, y);
            for x in 1..row.len() {
                add(col_border(x), (row[x] - row[x - 1]).abs());
            }
            if y > 0 {
                let above = img.row(c, y - 1);
                let border = row_border(y);
                for (a, b) in above.iter().zip(row) {
                    add(border, (b - a).abs());
                }
            }
        }
    }
    if b_n == 0 || i_n == 0 {
        return Err(Error::InvalidParameter(
            "grid has no interior border inside the image".into(),
        ));
    }
    let boundary = b_sum / b_n as f64;
    let interior = i_sum / i_n as f64;
    let ratio = if boundary == 0.0 && interior == 0.0 {
        1.0
    } else {
        boundary / interior
    };
    Ok(SeamReport {
        boundary_gradient_mean: boundary,
        interior_gradient_mean: interior,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;

    #[test]
    fn constant_image_has_unit_ratio() {
        let img = ImagePlane::filled(Shape::new(3, 16, 16), 0.3, 1.0);
        let r = seam_energy(&img, &PatchGrid::fixed(8, 16, 16).unwrap()).unwrap();
        assert_eq!(r.boundary_gradient_mean, 0.0);
        assert_eq!(r.interior_gradient_mean, 0.0);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn single_patch_grid_is_rejected() {
        let img = ImagePlane::zeros(Shape::new(1, 8, 8), 1.0);
        assert!(seam_energy(&img, &PatchGrid::fixed(8, 8, 8).unwrap()).is_err());
        assert!(seam_energy(&img, &PatchGrid::fixed(4, 16, 16).unwrap()).is_err());
    }

    #[test]
    fn piecewise_constant_tiles() {
        // 2x2 tiles of 4x4 with values 0, 1, 2, 3 (raster order). Every
        // border difference is known; interiors are flat.
        let mut img = ImagePlane::zeros(Shape::new(1, 8, 8), 1.0);
        for y in 0..8 {
            for x in 0..8 {
                img.set(0, y, x, ((y / 4) * 2 + x / 4) as f64);
            }
        }
        let r = seam_energy(&img, &PatchGrid::fixed(4, 8, 8).unwrap()).unwrap();
        // Column border: |1-0| on 4 rows, |3-2| on 4 rows; row border: |2-0|, |3-1|.
        assert!((r.boundary_gradient_mean - (8.0 * 1.0 + 8.0 * 2.0) / 16.0).abs() < 1e-15);
        assert_eq!(r.interior_gradient_mean, 0.0);
        assert!(r.ratio.is_infinite());
    }

    #[test]
    fn linear_ramp_is_seamless() {
        let mut img = ImagePlane::zeros(Shape::new(1, 32, 32), 1.0);
        for y in 0..32 {
            for x in 0..32 {
                img.set(0, y, x, 0.01 * x as f64 + 0.02 * y as f64);
            }
        }
        for offset in [(0, 0), (2, 6)] {
            let r = seam_energy(&img, &PatchGrid::new(8, offset, 32, 32).unwrap()).unwrap();
            assert!((0.9..=1.1).contains(&r.ratio), "{r:?}");
        }
    }
}
