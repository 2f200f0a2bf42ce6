//! Connected-component blob detection on grayscale frames.

use crate::image::GrayImage;

/// Detection thresholds sized to the synthetic rendering.
#[derive(Debug, Clone, Copy)]
pub struct BlobConfig {
    /// Pixels strictly darker than this are foreground.
    pub threshold: u8,
    /// Component area bounds in pixel count (inclusive).
    pub min_area: usize,
    pub max_area: usize,
    /// Intensity of clean background, for coverage integration.
    pub bg_reference: f64,
    /// Intensity of fully covered marker ink.
    pub ink_level: f64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self { threshold: 96, min_area: 4, max_area: 400, bg_reference: 200.0, ink_level: 30.0 }
    }
}

/// One detected blob: intensity-weighted centroid and coverage-integrated
/// area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    /// Area estimate: per-pixel ink coverage summed over the component and
    /// a one-pixel ring around it. For an anti-aliased disk this integrates
    /// to pi*r^2 + pi/12, so it varies smoothly with radius where a raw
    /// pixel count would jump whenever the thresholded rim crosses a pixel
    /// center.
    pub size: f64,
}

/// Thresholds dark pixels, labels 4-connected components, filters by pixel
/// count, and returns intensity-weighted centroids sorted by (y, x).
///
/// Centroid weights are `255 - intensity`, so darker pixels pull harder;
/// with anti-aliased disk rims this cancels quantization bias.
pub fn detect_blobs(frame: &GrayImage, cfg: &BlobConfig) -> Vec<Blob> {
    let (w, h) = (frame.width, frame.height);
    let fg: Vec<bool> = frame.data.iter().map(|&v| v < cfg.threshold).collect();
    let mut seen = vec![false; w * h];
    // Generation stamps so the per-component ring dedup needs no clearing.
    let mut stamp = vec![0u32; w * h];
    let mut generation = 0u32;
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    let mut pixels = Vec::new();

    for start in 0..w * h {
        if !fg[start] || seen[start] {
            continue;
        }
        stack.clear();
        pixels.clear();
        stack.push(start);
        seen[start] = true;
        let (mut count, mut wsum, mut wx, mut wy) = (0usize, 0.0f64, 0.0f64, 0.0f64);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            let weight = (255 - frame.data[p]) as f64;
            count += 1;
            wsum += weight;
            wx += weight * x as f64;
            wy += weight * y as f64;
            pixels.push(p);
            if x > 0 && fg[p - 1] && !seen[p - 1] {
                seen[p - 1] = true;
                stack.push(p - 1);
            }
            if x + 1 < w && fg[p + 1] && !seen[p + 1] {
                seen[p + 1] = true;
                stack.push(p + 1);
            }
            if y > 0 && fg[p - w] && !seen[p - w] {
                seen[p - w] = true;
                stack.push(p - w);
            }
            if y + 1 < h && fg[p + w] && !seen[p + w] {
                seen[p + w] = true;
                stack.push(p + w);
            }
        }
        if count >= cfg.min_area && count <= cfg.max_area {
            generation += 1;
            let size = coverage_size(frame, &pixels, cfg, &mut stamp, generation);
            blobs.push(Blob { x: wx / wsum, y: wy / wsum, size });
        }
    }

    blobs.sort_by(|a, b| (a.y, a.x).partial_cmp(&(b.y, b.x)).expect("finite centroids"));
    blobs
}

/// Sums estimated ink coverage over the component plus a one-pixel ring.
/// The ring picks up the anti-aliased rim the hard threshold cuts off, so
/// each pixel enters the sum near zero coverage and the total is smooth.
fn coverage_size(
    frame: &GrayImage,
    pixels: &[usize],
    cfg: &BlobConfig,
    stamp: &mut [u32],
    generation: u32,
) -> f64 {
    let (w, h) = (frame.width as isize, frame.height as isize);
    let span = cfg.bg_reference - cfg.ink_level;
    let mut size = 0.0;
    for &p in pixels {
        let (x, y) = ((p % frame.width) as isize, (p / frame.width) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let q = (ny * w + nx) as usize;
                if stamp[q] == generation {
                    continue;
                }
                stamp[q] = generation;
                let cov = (cfg.bg_reference - frame.data[q] as f64) / span;
                size += cov.clamp(0.0, 1.0);
            }
        }
    }
    size
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_frame(cx: f64, cy: f64, radius: f64) -> GrayImage {
        let mut img = GrayImage::filled(64, 64, 200);
        for y in 0..64 {
            for x in 0..64 {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let cov = (radius + 0.5 - d).clamp(0.0, 1.0);
                if cov > 0.0 {
                    let v = 200.0 + (30.0 - 200.0) * cov;
                    img.set(x, y, v.round() as u8);
                }
            }
        }
        img
    }

    #[test]
    fn single_disk_centroid_and_size() {
        let img = disk_frame(32.0, 32.0, 3.0);
        let blobs = detect_blobs(&img, &BlobConfig::default());
        assert_eq!(blobs.len(), 1);
        let b = blobs[0];
        assert!((b.x - 32.0).abs() < 0.5 && (b.y - 32.0).abs() < 0.5);
        let expect = std::f64::consts::PI * 9.0;
        assert!((b.size - expect).abs() < 0.15 * expect, "size {}", b.size);
    }

    #[test]
    fn blank_frame_yields_nothing() {
        let img = GrayImage::filled(32, 32, 200);
        assert!(detect_blobs(&img, &BlobConfig::default()).is_empty());
    }

    #[test]
    fn well_separated_disks_stay_distinct() {
        let mut img = disk_frame(16.0, 16.0, 3.0);
        let other = disk_frame(48.0, 48.0, 3.0);
        for p in 0..img.data.len() {
            img.data[p] = img.data[p].min(other.data[p]);
        }
        let blobs = detect_blobs(&img, &BlobConfig::default());
        assert_eq!(blobs.len(), 2);
        // Sorted by (y, x).
        assert!(blobs[0].y < blobs[1].y);
    }

    #[test]
    fn area_filter_drops_specks_and_slabs() {
        let mut img = GrayImage::filled(64, 64, 200);
        img.set(5, 5, 10); // single-pixel speck, below min_area
        for y in 20..50 {
            for x in 20..50 {
                img.set(x, y, 10); // 900 px slab, above max_area
            }
        }
        assert!(detect_blobs(&img, &BlobConfig::default()).is_empty());
    }

    #[test]
    fn subpixel_shift_moves_centroid() {
        let a = detect_blobs(&disk_frame(32.0, 32.0, 3.0), &BlobConfig::default())[0];
        let b = detect_blobs(&disk_frame(32.4, 32.0, 3.0), &BlobConfig::default())[0];
        let shift = b.x - a.x;
        assert!((shift - 0.4).abs() < 0.2, "measured shift {shift}");
    }
}
