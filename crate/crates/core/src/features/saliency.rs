//! Spectral-residual saliency and 8-bit grayscale PGM I/O.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Working resolution of the longest image side.
pub const WORKING_SIDE: usize = 64;
const LOG_EPS: f64 = 1e-8;
const BLUR_SIGMA: f64 = 2.5;
const BLUR_RADIUS: usize = 4;
/// Spectral bins weaker than this fraction of the peak are treated as empty.
const EMPTY_BIN: f64 = 1e-12;

/// Row-major intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::argument(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Saliency values in `[0, 1]`, row-major, same size as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SaliencyMap {
    /// Constant map, used when no grayscale image is available.
    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![1.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| (v * 255.0).round()).collect(),
        }
    }
}

/// Resamples one axis with a triangle filter whose support widens when shrinking.
fn resample_axis(src: &[f64], n_in: usize, n_out: usize, lines: usize, stride_in: usize, step_in: usize, transpose_out: bool) -> Vec<f64> {
    let scale = n_in as f64 / n_out as f64;
    let support = scale.max(1.0);
    let mut out = vec![0.0; n_out * lines];
    for o in 0..n_out {
        let centre = (o as f64 + 0.5) * scale - 0.5;
        let lo = (centre - support).floor().max(0.0) as usize;
        let hi = ((centre + support).ceil() as usize).min(n_in - 1);
        let mut weights = Vec::with_capacity(hi - lo + 1);
        for i in lo..=hi {
            let w = (1.0 - (i as f64 - centre).abs() / support).max(0.0);
            weights.push((i, w));
        }
        let norm: f64 = weights.iter().map(|(_, w)| w).sum();
        for line in 0..lines {
            let acc: f64 = weights
                .iter()
                .map(|&(i, w)| w * src[line * stride_in + i * step_in])
                .sum();
            let idx = if transpose_out { o * lines + line } else { line * n_out + o };
            out[idx] = acc / norm;
        }
    }
    out
}

/// Separable triangle-filter resize.
pub fn resize(values: &[f64], width: usize, height: usize, new_width: usize, new_height: usize) -> Vec<f64> {
    if width == new_width && height == new_height {
        return values.to_vec();
    }
    let rows = resample_axis(values, width, new_width, height, width, 1, false);
    resample_axis(&rows, height, new_height, new_width, 1, new_width, true)
}

fn fft2(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

fn mean_filter_3x3_wrapped(a: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for dy in [height - 1, 0, 1] {
                for dx in [width - 1, 0, 1] {
                    s += a[((y + dy) % height) * width + (x + dx) % width];
                }
            }
            out[y * width + x] = s / 9.0;
        }
    }
    out
}

fn gaussian_blur(a: &[f64], width: usize, height: usize) -> Vec<f64> {
    let kernel: Vec<f64> = {
        let raw: Vec<f64> = (0..=2 * BLUR_RADIUS)
            .map(|i| {
                let d = i as f64 - BLUR_RADIUS as f64;
                (-d * d / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|k| k / s).collect()
    };
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; a.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * a[y * width + clamp(x as isize + k as isize - BLUR_RADIUS as isize, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; a.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(y as isize + k as isize - BLUR_RADIUS as isize, height) * width + x])
                .sum();
        }
    }
    out
}

fn min_max_normalize(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > f64::EPSILON * hi.abs().max(1e-300)) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    values.iter_mut().for_each(|v| *v = ((*v - lo) / range).clamp(0.0, 1.0));
}

/// Spectral-residual saliency of a grayscale image.
///
/// Images whose longest side exceeds [`WORKING_SIDE`] are shrunk to it first;
/// the map is computed at that size and resized back.
pub fn spectral_residual_saliency(gray: &GrayImage) -> Result<SaliencyMap> {
    let (w, h) = (gray.width, gray.height);
    if w.min(h) < 8 {
        return Err(Error::argument(format!("saliency needs at least 8x8 pixels, got {w}x{h}")));
    }
    if let Some(i) = gray.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::argument(format!("non-finite intensity at pixel {i}")));
    }
    let longest = w.max(h);
    let (sw, sh) = if longest > WORKING_SIDE {
        let f = WORKING_SIDE as f64 / longest as f64;
        (((w as f64 * f).round() as usize).max(1), ((h as f64 * f).round() as usize).max(1))
    } else {
        (w, h)
    };
    let small = resize(&gray.values, w, h, sw, sh);

    let mut spec: Vec<Complex64> = small.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spec, sw, sh, false);
    let peak = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let log_amp: Vec<f64> = spec.iter().map(|c| (c.norm() + LOG_EPS).ln()).collect();
    let local = mean_filter_3x3_wrapped(&log_amp, sw, sh);
    for (i, c) in spec.iter_mut().enumerate() {
        let amp = c.norm();
        *c = if amp <= EMPTY_BIN * peak || amp == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            (*c / amp) * (log_amp[i] - local[i]).exp()
        };
    }
    fft2(&mut spec, sw, sh, true);
    let energy: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let blurred = gaussian_blur(&energy, sw, sh);
    let mut values = resize(&blurred, sw, sh, w, h);
    min_max_normalize(&mut values);
    Ok(SaliencyMap {
        width: w,
        height: h,
        values,
    })
}

fn skip_pgm_space(data: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn pgm_number(data: &[u8], pos: &mut usize) -> Result<usize> {
    *pos = skip_pgm_space(data, *pos);
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(start as u64, "expected a decimal number in PGM header"))
}

/// Parses a binary (P5) PGM with maxval ≤ 255.
pub fn parse_pgm(data: &[u8]) -> Result<GrayImage> {
    if !data.starts_with(b"P5") {
        return Err(Error::format(0, "not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let width = pgm_number(data, &mut pos)?;
    let height = pgm_number(data, &mut pos)?;
    let maxval = pgm_number(data, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(pos as u64, format!("unsupported maxval {maxval}")));
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::format(pos as u64, "missing whitespace before PGM raster"));
    }
    pos += 1;
    let need = width * height;
    if data.len() < pos + need {
        return Err(Error::format(data.len() as u64, "truncated PGM raster"));
    }
    let values = data[pos..pos + need].iter().map(|&b| f64::from(b)).collect();
    GrayImage::new(width, height, values)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    parse_pgm(&std::fs::read(path)?)
}

/// Encodes values (clamped to 0..=255 and rounded) as a binary PGM.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pgm(image))?;
    Ok(())
}
