//! Low-level raster operations on row-major 8-bit buffers.
//!
//! Frames are large and mostly defect-free, so the binary stages work on a
//! [`Crop`] around the foreground instead of the whole frame.

/// Box blur of radius `r` with edge replication, rounded to the nearest
/// integer.
pub fn box_blur(src: &[u8], width: usize, height: usize, r: usize) -> Vec<u8> {
    assert_eq!(src.len(), width * height);
    assert!(r <= MAX_BLUR_RADIUS, "blur radius {r} above {MAX_BLUR_RADIUS}");
    if r == 0 || src.is_empty() {
        return src.to_vec();
    }
    let k = 2 * r + 1;
    let clamp = |y: isize| y.clamp(0, height as isize - 1) as usize;

    // Horizontal window sums as plain shifted adds over a padded row. Rows
    // are produced on demand into a small ring so everything stays in cache.
    let mut pad = vec![0u16; width + 2 * r];
    let mut hsum_row = |y: usize, out: &mut [u16]| {
        let line = &src[y * width..(y + 1) * width];
        pad[..r].fill(line[0] as u16);
        pad[r + width..].fill(line[width - 1] as u16);
        for (p, &v) in pad[r..r + width].iter_mut().zip(line) {
            *p = v as u16;
        }
        out.copy_from_slice(&pad[..width]);
        for j in 1..k {
            for (o, &p) in out.iter_mut().zip(&pad[j..j + width]) {
                *o = o.wrapping_add(p);
            }
        }
    };
    let slots = k + 1;
    let mut ring = vec![0u16; slots * width];
    let slot = |i: isize| (i.rem_euclid(slots as isize)) as usize;

    // Vertical running sums, one accumulator per column. Window sums never
    // exceed 15² · 255, so wrapping arithmetic is exact here and keeps the
    // loops free of overflow checks.
    let mut acc = vec![0u32; width];
    for i in -(r as isize)..=(r as isize) {
        let s = slot(i);
        hsum_row(clamp(i), &mut ring[s * width..(s + 1) * width]);
        for (a, &p) in acc.iter_mut().zip(&ring[s * width..(s + 1) * width]) {
            *a = a.wrapping_add(p as u32);
        }
    }
    // Rounded integer division by the window area. Evaluating
    // (s + n/2 + 1/2) / n in f32 stays well clear of the next integer, so
    // truncation is exact and the loop vectorizes.
    let n = (k * k) as u32;
    let inv = 1.0 / n as f32;
    let bias = (n / 2) as f32 + 0.5;
    let mut out = vec![0u8; width * height];
    for (y, dst) in out.chunks_exact_mut(width).enumerate() {
        if y > 0 {
            let i_add = y as isize + r as isize;
            let i_sub = y as isize - r as isize - 1;
            let (sa, ss) = (slot(i_add), slot(i_sub));
            hsum_row(clamp(i_add), &mut ring[sa * width..(sa + 1) * width]);
            let add = &ring[sa * width..(sa + 1) * width];
            let sub = &ring[ss * width..(ss + 1) * width];
            for ((a, &p), &q) in acc.iter_mut().zip(add).zip(sub) {
                *a = a.wrapping_add(p as u32).wrapping_sub(q as u32);
            }
        }
        for (d, &s) in dst.iter_mut().zip(&acc) {
            *d = ((s as f32 + bias) * inv) as u8;
        }
    }
    out
}

/// Largest supported blur radius.
pub const MAX_BLUR_RADIUS: usize = 7;

/// Absolute difference and its 256-bin histogram.
pub fn abs_diff(a: &[u8], b: &[u8]) -> (Vec<u8>, [u64; 256]) {
    assert_eq!(a.len(), b.len());
    let diff: Vec<u8> = a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y)).collect();
    // Four partial histograms keep consecutive equal values from stalling
    // on the same counter.
    let mut part = [[0u32; 256]; 4];
    let mut chunks = diff.chunks_exact(4);
    for c in &mut chunks {
        for (p, &d) in part.iter_mut().zip(c) {
            p[d as usize] = p[d as usize].wrapping_add(1);
        }
    }
    let mut hist = [0u64; 256];
    for &d in chunks.remainder() {
        hist[d as usize] += 1;
    }
    for p in &part {
        for (h, &c) in hist.iter_mut().zip(p) {
            *h += c as u64;
        }
    }
    (diff, hist)
}

/// Otsu's method on a histogram. Returns the smallest intensity of the
/// upper class, so foreground is `value >= level`. A histogram with a single
/// occupied bin returns 256 (nothing is foreground).
pub fn otsu_level(hist: &[u64; 256]) -> u16 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 256;
    }
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();
    let mut w0 = 0u64;
    let mut sum0 = 0f64;
    let mut best = (f64::NEG_INFINITY, 256u16);
    for (k, &c) in hist.iter().enumerate().take(255) {
        w0 += c;
        sum0 += k as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (total_sum - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, k as u16 + 1);
        }
    }
    best.1
}

/// A binary window around the foreground of a frame. The window may extend
/// past the frame edges; pixels outside the frame are background.
#[derive(Debug, Clone)]
pub struct Crop {
    pub x0: isize,
    pub y0: isize,
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
    frame_width: usize,
    frame_height: usize,
}

impl Crop {
    /// Thresholds `diff` and crops to the foreground bounding box grown by
    /// `margin` pixels on every side. `None` when nothing passes.
    pub fn threshold(
        diff: &[u8],
        width: usize,
        height: usize,
        level: u16,
        margin: usize,
    ) -> Option<Crop> {
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (usize::MAX, 0, usize::MAX, 0);
        for (y, line) in diff.chunks_exact(width).enumerate() {
            let Some(first) = line.iter().position(|&d| d as u16 >= level) else {
                continue;
            };
            let last = line.iter().rposition(|&d| d as u16 >= level).unwrap();
            y_lo = y_lo.min(y);
            y_hi = y;
            x_lo = x_lo.min(first);
            x_hi = x_hi.max(last);
        }
        if y_lo == usize::MAX {
            return None;
        }
        let m = margin as isize;
        let (x0, y0) = (x_lo as isize - m, y_lo as isize - m);
        let w = x_hi - x_lo + 1 + 2 * margin;
        let h = y_hi - y_lo + 1 + 2 * margin;
        let mut mask = vec![false; w * h];
        for y in y_lo..=y_hi {
            let cy = (y as isize - y0) as usize;
            let src = &diff[y * width + x_lo..=y * width + x_hi];
            let cx = (x_lo as isize - x0) as usize;
            for (m, &d) in mask[cy * w + cx..].iter_mut().zip(src) {
                *m = d as u16 >= level;
            }
        }
        Some(Crop {
            x0,
            y0,
            width: w,
            height: h,
            mask,
            frame_width: width,
            frame_height: height,
        })
    }

    /// Thresholds `diff` and splits the foreground into independent crops.
    ///
    /// Foreground is gathered on a coarse tile grid; tiles closer than
    /// twice `margin` end up in the same crop, so closing each crop on its
    /// own (with radius below `margin / 2`) gives the same result as closing
    /// the whole frame. Crops come out ordered by their top-left corner.
    pub fn clusters(diff: &[u8], width: usize, height: usize, level: u16, margin: usize) -> Vec<Crop> {
        const T: usize = 16;
        if level > 255 || width == 0 {
            return Vec::new();
        }
        let lv = level as u8;
        let (tw, th) = (width.div_ceil(T), height.div_ceil(T));
        let mut tiles = vec![false; tw * th];
        for (y, line) in diff.chunks_exact(width).enumerate() {
            let trow = &mut tiles[(y / T) * tw..(y / T + 1) * tw];
            for (t, chunk) in trow.iter_mut().zip(line.chunks(T)) {
                *t |= chunk.iter().fold(0u8, |m, &d| m.max(d)) >= lv;
            }
        }
        let reach = ((2 * margin).div_ceil(T)).max(1) as isize;

        let mut comp = vec![usize::MAX; tw * th];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut stack = Vec::new();
        for start in 0..tiles.len() {
            if !tiles[start] || comp[start] != usize::MAX {
                continue;
            }
            let id = groups.len();
            let mut members = Vec::new();
            comp[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                members.push(i);
                let (tx, ty) = ((i % tw) as isize, (i / tw) as isize);
                for ny in (ty - reach).max(0)..=(ty + reach).min(th as isize - 1) {
                    for nx in (tx - reach).max(0)..=(tx + reach).min(tw as isize - 1) {
                        let j = ny as usize * tw + nx as usize;
                        if tiles[j] && comp[j] == usize::MAX {
                            comp[j] = id;
                            stack.push(j);
                        }
                    }
                }
            }
            groups.push(members);
        }

        let tile_pixels = |t: usize| {
            let (tx, ty) = (t % tw, t / tw);
            let xs = tx * T..((tx + 1) * T).min(width);
            (ty * T..((ty + 1) * T).min(height)).flat_map(move |y| xs.clone().map(move |x| (x, y)))
        };
        let mut crops: Vec<Crop> = groups
            .iter()
            .map(|members| {
                let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (usize::MAX, 0, usize::MAX, 0);
                for &t in members {
                    for (x, y) in tile_pixels(t) {
                        if diff[y * width + x] >= lv {
                            x_lo = x_lo.min(x);
                            x_hi = x_hi.max(x);
                            y_lo = y_lo.min(y);
                            y_hi = y_hi.max(y);
                        }
                    }
                }
                let m = margin as isize;
                let (x0, y0) = (x_lo as isize - m, y_lo as isize - m);
                let w = x_hi - x_lo + 1 + 2 * margin;
                let h = y_hi - y_lo + 1 + 2 * margin;
                let mut mask = vec![false; w * h];
                for &t in members {
                    for (x, y) in tile_pixels(t) {
                        if diff[y * width + x] >= lv {
                            let cx = (x as isize - x0) as usize;
                            let cy = (y as isize - y0) as usize;
                            mask[cy * w + cx] = true;
                        }
                    }
                }
                Crop {
                    x0,
                    y0,
                    width: w,
                    height: h,
                    mask,
                    frame_width: width,
                    frame_height: height,
                }
            })
            .collect();
        crops.sort_by_key(|c| (c.y0, c.x0));
        crops
    }

    /// Morphological closing with a `(2r+1)²` square, computed as if the
    /// plane outside the frame were background, then clipped to the frame.
    /// The crop margin must be at least `2r`.
    pub fn close(&mut self, r: usize) {
        if r == 0 {
            return;
        }
        let dilated = filter_2d(&self.mask, self.width, self.height, r, Op::Any);
        self.mask = filter_2d(&dilated, self.width, self.height, r, Op::All);
        for y in 0..self.height {
            let fy = self.y0 + y as isize;
            for x in 0..self.width {
                let fx = self.x0 + x as isize;
                if fx < 0
                    || fy < 0
                    || fx >= self.frame_width as isize
                    || fy >= self.frame_height as isize
                {
                    self.mask[y * self.width + x] = false;
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Copy)]
enum Op {
    Any,
    All,
}

fn filter_2d(mask: &[bool], w: usize, h: usize, r: usize, op: Op) -> Vec<bool> {
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        filter_1d(&mask[y * w..(y + 1) * w], &mut tmp[y * w..(y + 1) * w], r, op);
    }
    let mut col_in = vec![false; h];
    let mut col_out = vec![false; h];
    let mut out = vec![false; w * h];
    for x in 0..w {
        for y in 0..h {
            col_in[y] = tmp[y * w + x];
        }
        filter_1d(&col_in, &mut col_out, r, op);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    out
}

/// Sliding any/all over a `2r+1` window; outside `src` counts as false.
fn filter_1d(src: &[bool], dst: &mut [bool], r: usize, op: Op) {
    let n = src.len();
    let mut ones = 0usize;
    for &s in src.iter().take(r.min(n)) {
        ones += s as usize;
    }
    for i in 0..n {
        if i + r < n {
            ones += src[i + r] as usize;
        }
        if i > r {
            ones -= src[i - r - 1] as usize;
        }
        dst[i] = match op {
            Op::Any => ones > 0,
            Op::All => ones == 2 * r + 1,
        };
    }
}

/// Pixel statistics of one connected region, in full-frame pixel indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub count: u64,
    pub row_min: u32,
    pub row_max: u32,
    pub col_min: u32,
    pub col_max: u32,
    pub row_sum: f64,
    pub col_sum: f64,
}

impl RegionStats {
    pub fn new(row: u32, col: u32) -> Self {
        RegionStats {
            count: 1,
            row_min: row,
            row_max: row,
            col_min: col,
            col_max: col,
            row_sum: row as f64,
            col_sum: col as f64,
        }
    }

    pub fn add(&mut self, row: u32, col: u32) {
        self.count += 1;
        self.row_min = self.row_min.min(row);
        self.row_max = self.row_max.max(row);
        self.col_min = self.col_min.min(col);
        self.col_max = self.col_max.max(col);
        self.row_sum += row as f64;
        self.col_sum += col as f64;
    }

    pub fn centroid(&self) -> (f64, f64) {
        (
            self.row_sum / self.count as f64,
            self.col_sum / self.count as f64,
        )
    }
}

/// Labels connected foreground regions of the crop. Regions come out in
/// raster order of their first pixel.
pub fn label_regions(crop: &Crop, eight: bool) -> Vec<RegionStats> {
    let (w, h) = (crop.width, crop.height);
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !crop.mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut stats: Option<RegionStats> = None;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let row = (crop.y0 + y as isize) as u32;
            let col = (crop.x0 + x as isize) as u32;
            match stats.as_mut() {
                Some(s) => s.add(row, col),
                None => stats = Some(RegionStats::new(row, col)),
            }
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if crop.mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        regions.extend(stats);
    }
    regions
}
