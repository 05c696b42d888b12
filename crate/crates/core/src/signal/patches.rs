use serde::{Deserialize, Serialize};

use super::SeismicSection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// Non-overlapping tiling of a grid. Patches are listed row-major by origin;
/// the last row and column of patches are truncated at the grid edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub rects: Vec<PatchRect>,
}

impl PatchLayout {
    pub fn new(grid_rows: usize, grid_cols: usize, patch_h: usize, patch_w: usize) -> Result<Self> {
        if patch_h == 0 || patch_w == 0 {
            return Err(Error::invalid("patch dimensions must be at least 1"));
        }
        let mut rects = Vec::new();
        for row in (0..grid_rows).step_by(patch_h) {
            for col in (0..grid_cols).step_by(patch_w) {
                rects.push(PatchRect {
                    row,
                    col,
                    height: patch_h.min(grid_rows - row),
                    width: patch_w.min(grid_cols - col),
                });
            }
        }
        Ok(Self {
            grid_rows,
            grid_cols,
            patch_h,
            patch_w,
            rects,
        })
    }

    /// Number of patch rows and columns.
    pub fn grid_dims(&self) -> (usize, usize) {
        (
            self.grid_rows.div_ceil(self.patch_h),
            self.grid_cols.div_ceil(self.patch_w),
        )
    }
}

pub fn partition_patches(
    section: &SeismicSection,
    patch_h: usize,
    patch_w: usize,
) -> Result<(PatchLayout, Vec<SeismicSection>)> {
    let layout = PatchLayout::new(section.n_channels(), section.n_time(), patch_h, patch_w)?;
    let nt = section.n_time();
    let src = section.samples();
    let patches = layout
        .rects
        .iter()
        .map(|r| {
            let mut data = Vec::with_capacity(r.height * r.width);
            for i in r.row..r.row + r.height {
                data.extend_from_slice(&src[i * nt + r.col..i * nt + r.col + r.width]);
            }
            SeismicSection::new(r.height, r.width, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((layout, patches))
}

pub fn assemble_patches(layout: &PatchLayout, patches: &[SeismicSection]) -> Result<SeismicSection> {
    if patches.len() != layout.rects.len() {
        return Err(Error::invalid(format!(
            "layout has {} patches, got {}",
            layout.rects.len(),
            patches.len()
        )));
    }
    let nt = layout.grid_cols;
    let mut out = vec![0.0; layout.grid_rows * layout.grid_cols];
    for (k, (r, p)) in layout.rects.iter().zip(patches).enumerate() {
        if p.shape() != (r.height, r.width) {
            return Err(Error::invalid(format!(
                "patch {k} is {:?}, layout expects {}x{}",
                p.shape(),
                r.height,
                r.width
            )));
        }
        for i in 0..r.height {
            let dst = (r.row + i) * nt + r.col;
            out[dst..dst + r.width].copy_from_slice(&p.samples()[i * r.width..(i + 1) * r.width]);
        }
    }
    SeismicSection::new(layout.grid_rows, layout.grid_cols, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn ramp(rows: usize, cols: usize) -> SeismicSection {
        SeismicSection::new(rows, cols, (0..rows * cols).map(|i| i as f64 * 0.5 - 3.0).collect())
            .unwrap()
    }

    #[test]
    fn zero_patch_dims_rejected() {
        let s = ramp(4, 4);
        assert!(partition_patches(&s, 0, 2).is_err());
        assert!(partition_patches(&s, 2, 0).is_err());
    }

    #[test]
    fn whole_grid_patch_is_identity() {
        let s = ramp(32, 32);
        let (layout, patches) = partition_patches(&s, 32, 32).unwrap();
        assert_eq!(layout.rects.len(), 1);
        assert_eq!(patches[0], s);
        assert_eq!(assemble_patches(&layout, &patches).unwrap(), s);
    }

    #[test]
    fn five_by_five_with_two_by_two() {
        let s = ramp(5, 5);
        let (layout, patches) = partition_patches(&s, 2, 2).unwrap();
        assert_eq!(patches.len(), 9);
        let mut dims: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for p in &patches {
            *dims.entry(p.shape()).or_default() += 1;
        }
        let expected: BTreeMap<_, _> = [((2, 2), 4), ((2, 1), 2), ((1, 2), 2), ((1, 1), 1)]
            .into_iter()
            .collect();
        assert_eq!(dims, expected);
        assert_eq!(assemble_patches(&layout, &patches).unwrap(), s);
    }

    #[test]
    fn mismatched_patch_rejected() {
        let s = ramp(5, 5);
        let (layout, mut patches) = partition_patches(&s, 2, 2).unwrap();
        patches[8] = ramp(2, 2);
        assert!(assemble_patches(&layout, &patches).is_err());
        patches.pop();
        assert!(assemble_patches(&layout, &patches).is_err());
    }

    proptest! {
        #[test]
        fn partition_assemble_round_trip(
            rows in 1usize..20, cols in 1usize..20, ph in 1usize..9, pw in 1usize..9, seed in any::<u64>()
        ) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 7.0)
                .collect();
            let s = SeismicSection::new(rows, cols, data).unwrap();
            let (layout, patches) = partition_patches(&s, ph, pw).unwrap();
            let area: usize = patches.iter().map(|p| p.len()).sum();
            prop_assert_eq!(area, rows * cols);
            let back = assemble_patches(&layout, &patches).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
