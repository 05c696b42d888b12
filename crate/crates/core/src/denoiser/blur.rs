//! Gaussian blur with circular boundary conditions.

use crate::error::{Error, Result};
use crate::signal::SeismicSection;

/// Normalized `(2 radius + 1)^2` Gaussian kernel, row-major.
pub fn gaussian_kernel(radius: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let n = 2 * radius + 1;
    let mut k = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as f64 - radius as f64, j as f64 - radius as f64);
            k.push((-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Circular convolution of `m` with a centered symmetric kernel.
pub fn circular_blur(m: &SeismicSection, radius: usize, kernel: &[f64]) -> Result<SeismicSection> {
    let (h, w) = m.shape();
    let n = 2 * radius + 1;
    debug_assert_eq!(kernel.len(), n * n);
    let src = m.samples();
    let mut out = vec![0.0; h * w];
    for (ki, krow) in kernel.chunks_exact(n).enumerate() {
        // Offset `ki - radius`, taken modulo the grid size.
        let dy = (ki + h * n - radius) % h;
        for (kj, &wgt) in krow.iter().enumerate() {
            let dx = (kj + w * n - radius) % w;
            for y in 0..h {
                let sy = (y + dy) % h;
                let srow = &src[sy * w..(sy + 1) * w];
                let drow = &mut out[y * w..(y + 1) * w];
                for x in 0..w {
                    drow[x] += wgt * srow[(x + dx) % w];
                }
            }
        }
    }
    SeismicSection::new(h, w, out)
}
