//! Scalar raster plane and the low-level filtering primitives the rest of
//! the crate builds on: Catmull-Rom bicubic resampling, truncated Gaussian
//! smoothing, median filtering, and central-difference derivatives.
//!
//! Boundary handling is replicate (nearest edge) throughout, and every
//! operation is a pure function returning a fresh plane, so planes can be
//! shared freely across threads.

/// A single-channel raster of `f64` values, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    /// All-zero plane. Dimensions must be at least 1×1.
    pub fn new(width: usize, height: usize) -> Plane {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Plane {
        let mut p = Plane::new(width, height);
        p.data.fill(value);
        p
    }

    /// Wrap an existing row-major buffer. Panics if the length disagrees
    /// with the dimensions — that is always a programming error.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Plane {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        assert_eq!(data.len(), width * height, "buffer length mismatch");
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Plane {
        let mut p = Plane::new(width, height);
        for y in 0..height {
            for x in 0..width {
                p.data[y * width + x] = f(x, y);
            }
        }
        p
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // dimensions are always ≥ 1×1
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    /// Sample with replicate (clamp-to-edge) boundary handling.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Catmull-Rom cubic kernel (the a = −0.5 member of the Keys family).
/// Reproduces linear functions exactly and sums to one over any phase.
#[inline]
fn cubic_weight(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        ((1.5 * a - 2.5) * a) * a + 1.0
    } else if a < 2.0 {
        ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0
    } else {
        0.0
    }
}

/// Per-output-coordinate taps of the 1-D cubic kernel: four clamped source
/// indices and their weights. Source/destination pixels are treated as cell
/// centers, i.e. src = (dst + 0.5)·(src_len/dst_len) − 0.5.
fn cubic_taps(src_len: usize, dst_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let s = (d as f64 + 0.5) * ratio - 0.5;
            let base = s.floor() as isize;
            let mut idx = [0usize; 4];
            let mut w = [0f64; 4];
            for m in 0..4 {
                let i = base - 1 + m as isize;
                idx[m] = i.clamp(0, src_len as isize - 1) as usize;
                w[m] = cubic_weight(s - i as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Resample a plane to new dimensions with the separable Catmull-Rom kernel,
/// replicate boundaries. Identity dimensions return the input bitwise.
pub fn resample_bicubic(src: &Plane, new_width: usize, new_height: usize) -> Plane {
    assert!(new_width > 0 && new_height > 0, "target dimensions must be ≥ 1");
    if new_width == src.width && new_height == src.height {
        return src.clone();
    }

    let xtaps = cubic_taps(src.width, new_width);
    let ytaps = cubic_taps(src.height, new_height);

    // Horizontal pass: src.height rows of new_width samples.
    let mut mid = vec![0.0; new_width * src.height];
    for y in 0..src.height {
        let row = src.row(y);
        let out = &mut mid[y * new_width..(y + 1) * new_width];
        for (o, (idx, w)) in out.iter_mut().zip(&xtaps) {
            *o = row[idx[0]] * w[0] + row[idx[1]] * w[1] + row[idx[2]] * w[2] + row[idx[3]] * w[3];
        }
    }

    // Vertical pass.
    let mut dst = Plane::new(new_width, new_height);
    for (y, (idx, w)) in ytaps.iter().enumerate() {
        for x in 0..new_width {
            dst.data[y * new_width + x] = mid[idx[0] * new_width + x] * w[0]
                + mid[idx[1] * new_width + x] * w[1]
                + mid[idx[2] * new_width + x] * w[2]
                + mid[idx[3] * new_width + x] * w[3];
        }
    }
    dst
}

/// Normalized 1-D Gaussian kernel truncated at radius ceil(3σ).
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian smoothing with replicate boundaries.
pub fn gaussian_smooth(src: &Plane, sigma: f64) -> Plane {
    assert!(sigma > 0.0, "gaussian_smooth requires sigma > 0");
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;

    let mut mid = Plane::new(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (m, &w) in k.iter().enumerate() {
                acc += w * src.at_clamped(x as isize + m as isize - r, y as isize);
            }
            mid.data[y * src.width + x] = acc;
        }
    }
    let mut dst = Plane::new(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (m, &w) in k.iter().enumerate() {
                acc += w * mid.at_clamped(x as isize, y as isize + m as isize - r);
            }
            dst.data[y * src.width + x] = acc;
        }
    }
    dst
}

/// Median filter over a (2·radius+1)² window, replicate boundaries.
/// `radius = 0` is the identity.
pub fn median_filter(src: &Plane, radius: usize) -> Plane {
    if radius == 0 {
        return src.clone();
    }
    let r = radius as isize;
    let mut window = Vec::with_capacity((2 * radius + 1) * (2 * radius + 1));
    let mut dst = Plane::new(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    window.push(src.at_clamped(x as isize + dx, y as isize + dy));
                }
            }
            window.sort_unstable_by(f64::total_cmp);
            dst.data[y * src.width + x] = window[window.len() / 2];
        }
    }
    dst
}

/// ∂/∂x with central differences in the interior and one-sided differences
/// at the left/right borders (unit pixel spacing). Width-1 planes get zero.
pub fn dx_central(src: &Plane) -> Plane {
    let (w, h) = (src.width, src.height);
    let mut dst = Plane::new(w, h);
    if w == 1 {
        return dst;
    }
    for y in 0..h {
        let row = src.row(y);
        let out = &mut dst.data[y * w..(y + 1) * w];
        out[0] = row[1] - row[0];
        for x in 1..w - 1 {
            out[x] = 0.5 * (row[x + 1] - row[x - 1]);
        }
        out[w - 1] = row[w - 1] - row[w - 2];
    }
    dst
}

/// ∂/∂y companion of [`dx_central`]. Height-1 planes get zero.
pub fn dy_central(src: &Plane) -> Plane {
    let (w, h) = (src.width, src.height);
    let mut dst = Plane::new(w, h);
    if h == 1 {
        return dst;
    }
    for y in 0..h {
        let (ya, yb, scale) = if y == 0 {
            (0, 1, 1.0)
        } else if y == h - 1 {
            (h - 2, h - 1, 1.0)
        } else {
            (y - 1, y + 1, 0.5)
        };
        for x in 0..w {
            dst.data[y * w + x] = scale * (src.data[yb * w + x] - src.data[ya * w + x]);
        }
    }
    dst
}
