//! The four analysis channels: hue, saturation, and the patch-based dark
//! and bright channels.
//!
//! The dark channel takes a windowed minimum over per-pixel color minima;
//! the bright channel takes a windowed maximum over per-pixel color maxima.
//! Windows are clipped at the image border so no artificial extrema are
//! injected.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::raster::{Plane, RgbImage};

/// Patch configuration for the dark/bright channels. The window around a
/// pixel is `(2 * patch_radius + 1)` pixels on a side, clipped at borders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub patch_radius: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        // 15x15 window, the usual dark-channel-prior patch size.
        Self { patch_radius: 7 }
    }
}

/// The per-image channel tuple every detector consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlanes {
    /// Hue in `[0, 1)`.
    pub hue: Plane,
    /// Saturation in `[0, 1]`.
    pub saturation: Plane,
    /// Dark channel in `[0, 255]`.
    pub dark: Plane,
    /// Bright channel in `[0, 255]`.
    pub bright: Plane,
}

impl ChannelPlanes {
    pub fn width(&self) -> usize {
        self.hue.width()
    }

    pub fn height(&self) -> usize {
        self.hue.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.hue.len()
    }
}

/// Converts an 8-bit RGB triple to (hue, saturation, value) with hue
/// normalized to `[0, 1)`. Achromatic pixels report hue 0 and saturation 0.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb;
    let maxc = r.max(g).max(b);
    let minc = r.min(g).min(b);
    let value = maxc as f64 / 255.0;
    if maxc == minc {
        return (0.0, 0.0, value);
    }
    let delta = (maxc - minc) as f64;
    let saturation = delta / maxc as f64;
    // Sector arithmetic on integer differences keeps hue exactly in [0, 1):
    // only the red sector wraps, and its offset is at least 1/delta.
    let hue = if maxc == r {
        (((g as f64 - b as f64) / delta).rem_euclid(6.0)) / 6.0
    } else if maxc == g {
        ((b as f64 - r as f64) / delta + 2.0) / 6.0
    } else {
        ((r as f64 - g as f64) / delta + 4.0) / 6.0
    };
    (hue, saturation, value)
}

/// Window extremum selector for [`sliding_extremum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Exact windowed minimum or maximum with border-clipped windows.
///
/// Separable monotonic-queue passes (rows, then columns) make the cost
/// linear in the pixel count, independent of the radius.
pub fn sliding_extremum(plane: &Plane, radius: usize, mode: Extremum) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let mut rows = vec![0.0; w * h];
    let mut buf = Vec::with_capacity(w.max(h));
    let mut out_buf = vec![0.0; w.max(h)];

    for y in 0..h {
        buf.clear();
        buf.extend_from_slice(&plane.values()[y * w..(y + 1) * w]);
        slide_line(&buf, &mut out_buf[..w], radius, mode);
        rows[y * w..(y + 1) * w].copy_from_slice(&out_buf[..w]);
    }

    let mut out = vec![0.0; w * h];
    for x in 0..w {
        buf.clear();
        buf.extend((0..h).map(|y| rows[y * w + x]));
        slide_line(&buf, &mut out_buf[..h], radius, mode);
        for y in 0..h {
            out[y * w + x] = out_buf[y];
        }
    }

    Plane::new(w, h, out, plane.range())
}

/// One monotonic-queue pass over a line. `dst[i]` holds the extremum of
/// `src[max(0, i - r) ..= min(n - 1, i + r)]`.
fn slide_line(src: &[f64], dst: &mut [f64], radius: usize, mode: Extremum) {
    let n = src.len();
    let keeps = |incoming: f64, resident: f64| match mode {
        Extremum::Min => incoming <= resident,
        Extremum::Max => incoming >= resident,
    };
    let mut queue: VecDeque<usize> = VecDeque::new();
    let push = |queue: &mut VecDeque<usize>, j: usize| {
        while let Some(&back) = queue.back() {
            if keeps(src[j], src[back]) {
                queue.pop_back();
            } else {
                break;
            }
        }
        queue.push_back(j);
    };

    for j in 0..radius.min(n) {
        push(&mut queue, j);
    }
    for i in 0..n {
        if let Some(j) = i.checked_add(radius) {
            if j < n {
                push(&mut queue, j);
            }
        }
        while let Some(&front) = queue.front() {
            if front + radius < i {
                queue.pop_front();
            } else {
                break;
            }
        }
        dst[i] = src[*queue.front().expect("window never empty")];
    }
}

/// Computes all four analysis channels for an image.
pub fn extract_channel_planes(image: &RgbImage, cfg: &ChannelConfig) -> ChannelPlanes {
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let mut hue = Vec::with_capacity(n);
    let mut sat = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for &p in image.pixels() {
        let (ph, ps, _) = rgb_to_hsv(p);
        hue.push(ph);
        sat.push(ps);
        lo.push(p[0].min(p[1]).min(p[2]) as f64);
        hi.push(p[0].max(p[1]).max(p[2]) as f64);
    }
    let lo = Plane::new(w, h, lo, (0.0, 255.0));
    let hi = Plane::new(w, h, hi, (0.0, 255.0));
    ChannelPlanes {
        hue: Plane::new(w, h, hue, (0.0, 1.0)),
        saturation: Plane::new(w, h, sat, (0.0, 1.0)),
        dark: sliding_extremum(&lo, cfg.patch_radius, Extremum::Min),
        bright: sliding_extremum(&hi, cfg.patch_radius, Extremum::Max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(w*h*r^2) reference window scan.
    pub(crate) fn brute_extremum(plane: &Plane, radius: usize, mode: Extremum) -> Plane {
        let (w, h) = (plane.width(), plane.height());
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let x0 = x.saturating_sub(radius);
                let x1 = (x + radius).min(w - 1);
                let y0 = y.saturating_sub(radius);
                let y1 = (y + radius).min(h - 1);
                let mut best = plane.get(x0, y0);
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let v = plane.get(xx, yy);
                        best = match mode {
                            Extremum::Min => best.min(v),
                            Extremum::Max => best.max(v),
                        };
                    }
                }
                out[y * w + x] = best;
            }
        }
        Plane::new(w, h, out, plane.range())
    }

    pub(crate) fn random_plane(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Plane {
        let values = (0..w * h).map(|_| rng.random_range(0.0..=255.0)).collect();
        Plane::new(w, h, values, (0.0, 255.0))
    }

    #[test]
    fn hsv_reference_points() {
        assert_eq!(rgb_to_hsv([255, 0, 0]), (0.0, 1.0, 1.0));
        let (h, s, v) = rgb_to_hsv([128, 128, 128]);
        assert_eq!((h, s), (0.0, 0.0));
        assert!((v - 128.0 / 255.0).abs() < 1e-15);
        let (h, s, v) = rgb_to_hsv([0, 0, 255]);
        assert!((h - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((s, v), (1.0, 1.0));
    }

    #[test]
    fn hue_stays_below_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20_000 {
            let rgb = [rng.random(), rng.random(), rng.random()];
            let (h, s, v) = rgb_to_hsv(rgb);
            assert!((0.0..1.0).contains(&h), "hue {h} for {rgb:?}");
            assert!((0.0..=1.0).contains(&s));
            assert!((0.0..=1.0).contains(&v));
        }
        // Red sector with g slightly below b wraps close to 1.
        let (h, _, _) = rgb_to_hsv([255, 0, 1]);
        assert!(h < 1.0 && h > 0.9);
    }

    #[test]
    fn constant_plane_is_fixed_point() {
        let plane = Plane::new(5, 4, vec![77.0; 20], (0.0, 255.0));
        let out = sliding_extremum(&plane, 3, Extremum::Min);
        assert_eq!(out.values(), plane.values());
    }

    #[test]
    fn degenerate_window_is_identity() {
        let plane = Plane::new(1, 1, vec![10.0], (0.0, 255.0));
        let out = sliding_extremum(&plane, 0, Extremum::Max);
        assert_eq!(out.values(), &[10.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plane = random_plane(&mut rng, 9, 6);
        assert_eq!(sliding_extremum(&plane, 0, Extremum::Min), plane);
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(w, h) in &[(8, 8), (1, 13), (13, 1), (5, 11), (32, 3)] {
            let plane = random_plane(&mut rng, w, h);
            for &r in &[0usize, 1, 2, 3, 7, 40] {
                for mode in [Extremum::Min, Extremum::Max] {
                    let fast = sliding_extremum(&plane, r, mode);
                    let slow = brute_extremum(&plane, r, mode);
                    assert_eq!(fast.values(), slow.values(), "{w}x{h} r={r} {mode:?}");
                }
            }
        }
    }

    #[test]
    fn min_filter_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_plane(&mut rng, 10, 10);
        let bumped: Vec<f64> = a.values().iter().map(|v| (v + 1.0).min(255.0)).collect();
        let b = Plane::new(10, 10, bumped, (0.0, 255.0));
        let fa = sliding_extremum(&a, 2, Extremum::Min);
        let fb = sliding_extremum(&b, 2, Extremum::Min);
        for (x, y) in fa.values().iter().zip(fb.values()) {
            assert!(y >= x);
        }
    }

    #[test]
    fn radius_growth_widens_extrema() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = RgbImage::from_fn(12, 9, |_, _| [rng.random(), rng.random(), rng.random()]);
        let small = extract_channel_planes(&img, &ChannelConfig { patch_radius: 1 });
        let large = extract_channel_planes(&img, &ChannelConfig { patch_radius: 4 });
        for (a, b) in small.dark.values().iter().zip(large.dark.values()) {
            assert!(b <= a);
        }
        for (a, b) in small.bright.values().iter().zip(large.bright.values()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn single_pixel_extraction() {
        let img = RgbImage::new(1, 1, vec![[10, 200, 30]]);
        let planes = extract_channel_planes(&img, &ChannelConfig { patch_radius: 0 });
        assert_eq!(planes.dark.values(), &[10.0]);
        assert_eq!(planes.bright.values(), &[200.0]);
    }

    #[test]
    fn grayscale_image_has_zero_saturation() {
        let img = RgbImage::from_fn(6, 5, |x, y| {
            let v = (x * 11 + y * 7) as u8;
            [v, v, v]
        });
        let planes = extract_channel_planes(&img, &ChannelConfig::default());
        assert!(planes.saturation.values().iter().all(|&s| s == 0.0));
        assert!(planes.hue.values().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn extraction_matches_double_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = RgbImage::from_fn(16, 16, |_, _| [rng.random(), rng.random(), rng.random()]);
        let planes = extract_channel_planes(&img, &ChannelConfig { patch_radius: 2 });
        let mins: Vec<f64> = img
            .pixels()
            .iter()
            .map(|p| p[0].min(p[1]).min(p[2]) as f64)
            .collect();
        let maxs: Vec<f64> = img
            .pixels()
            .iter()
            .map(|p| p[0].max(p[1]).max(p[2]) as f64)
            .collect();
        let min_plane = Plane::new(16, 16, mins, (0.0, 255.0));
        let max_plane = Plane::new(16, 16, maxs, (0.0, 255.0));
        assert_eq!(
            planes.dark.values(),
            brute_extremum(&min_plane, 2, Extremum::Min).values()
        );
        assert_eq!(
            planes.bright.values(),
            brute_extremum(&max_plane, 2, Extremum::Max).values()
        );
        // Sandwich: dark <= channel min <= channel max <= bright.
        for i in 0..img.pixels().len() {
            assert!(planes.dark.values()[i] <= min_plane.values()[i]);
            assert!(planes.bright.values()[i] >= max_plane.values()[i]);
        }
    }
}
