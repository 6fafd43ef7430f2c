//! Frame ingestion, dense optical flow, and MVFI motion templates.
//!
//! A clip is a directory of grayscale frames. Consecutive frame pairs are
//! turned into a dense flow field on a regular grid by a coarse-to-fine
//! pyramidal gradient solver, and each flow field is rendered as a Motion
//! Vector Flow Instance (MVFI): a grayscale template where box shape encodes
//! flow direction and pixel intensity encodes flow magnitude.

use std::fs;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Canonical frame side after ingest resizing.
pub const CANONICAL_SIZE: usize = 256;

/// Flow magnitudes below this are treated as noise and not drawn.
pub const MAG_FLOOR: f64 = 0.5;
/// Flow magnitudes at or above this map to full intensity.
pub const MAG_CAP: f64 = 16.0;
/// Intensity of a box at the magnitude floor; keeps every drawn box visible.
pub const INTENSITY_MIN: u8 = 64;

/// One grayscale image, row-major, values 0-255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::InvalidConfig(format!(
                "frame {}x{} with {} pixels",
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    fn to_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32).collect()
    }
}

/// An ordered clip of same-sized frames.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub fps: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InsufficientFrames {
                found: frames.len(),
                need: 2,
            });
        }
        let (w, h) = (frames[0].width, frames[0].height);
        for f in &frames[1..] {
            if f.width != w || f.height != h {
                return Err(Error::DimensionMismatch(w, h, f.width, f.height));
            }
        }
        Ok(FrameSequence { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Parameters for the pyramidal flow solver and the sampling grid.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub pyramid_levels: usize,
    pub window_radius: usize,
    pub grid_spacing: usize,
    /// Per-pixel average of squared gradients below which a node emits (0,0).
    pub min_texture: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            pyramid_levels: 3,
            window_radius: 7,
            grid_spacing: 8,
            min_texture: 25.0,
        }
    }
}

impl FlowConfig {
    fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 || self.window_radius < 1 || self.grid_spacing < 1 {
            return Err(Error::InvalidConfig(
                "pyramid_levels, window_radius and grid_spacing must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-frame-pair displacement field sampled on a regular grid.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub grid_spacing: usize,
    /// Pixel offset of the first grid node.
    pub origin: (usize, usize),
    pub cols: usize,
    pub rows: usize,
    /// Row-major (u, v) displacements in pixels per frame.
    pub vectors: Vec<(f64, f64)>,
}

impl FlowField {
    pub fn node_position(&self, col: usize, row: usize) -> (usize, usize) {
        (
            self.origin.0 + col * self.grid_spacing,
            self.origin.1 + row * self.grid_spacing,
        )
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.iter().all(|&(u, v)| u == 0.0 && v == 0.0)
    }
}

/// Grayscale motion template; box shape encodes direction, intensity speed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MvfiTemplate {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl MvfiTemplate {
    /// Flatten to the f64 vector consumed by eigenspace training.
    pub fn to_vector(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }
}

// ---------------------------------------------------------------------------
// Loading

/// Load a clip directory: supported frames sorted by filename, grayscaled and
/// resized to `target`x`target` (center-crop to square, then bilinear scale).
pub fn load_sequence(dir: &Path, target: usize) -> Result<FrameSequence> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                Some(ref e) if e == "pgm" || e == "png"
            )
        })
        .collect();
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        frames.push(load_frame(p, target)?);
    }
    if frames.len() < 2 {
        return Err(Error::InsufficientFrames {
            found: frames.len(),
            need: 2,
        });
    }
    FrameSequence::new(frames, 25.0)
}

/// Load one image file as a grayscale frame resized to `target`.
pub fn load_frame(path: &Path, target: usize) -> Result<Frame> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let raw = match ext.as_str() {
        "pgm" => read_pgm(path)?,
        "png" => read_png(path)?,
        other => return Err(Error::UnsupportedFormat(other.to_string())),
    };
    Ok(resize_canonical(&raw, target))
}

fn read_pgm(path: &Path) -> Result<Frame> {
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    parse_pgm(&data).map_err(|reason| Error::MalformedImage {
        path: path.to_path_buf(),
        reason,
    })
}

/// Parse a binary (P5) PGM with maxval <= 255.
pub fn parse_pgm(data: &[u8]) -> std::result::Result<Frame, String> {
    let mut pos = 0usize;
    let mut token = |data: &[u8]| -> std::result::Result<String, String> {
        // skip whitespace and comments
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };
    let magic = token(data)?;
    if magic != "P5" {
        return Err(format!("expected P5 magic, found {magic:?}"));
    }
    let width: usize = token(data)?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token(data)?.parse().map_err(|_| "bad height".to_string())?;
    let maxval: usize = token(data)?.parse().map_err(|_| "bad maxval".to_string())?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // single whitespace byte separates header from raster
    pos += 1;
    let need = width * height;
    if data.len() < pos + need {
        return Err("truncated raster".into());
    }
    let mut pixels = data[pos..pos + need].to_vec();
    if maxval != 255 {
        for p in pixels.iter_mut() {
            *p = ((*p as usize * 255) / maxval) as u8;
        }
    }
    Frame::new(width, height, pixels).map_err(|e| e.to_string())
}

/// Serialize a frame as binary PGM (P5).
pub fn write_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

fn read_png(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::MalformedImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(decode_dynamic(img))
}

/// Convert a decoded image to grayscale with ITU-R BT.601 luma weights.
pub fn decode_dynamic(img: image::DynamicImage) -> Frame {
    match img {
        image::DynamicImage::ImageLuma8(g) => Frame {
            width: g.width() as usize,
            height: g.height() as usize,
            pixels: g.into_raw(),
        },
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let pixels = rgb
                .pixels()
                .map(|p| {
                    let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                    y.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            Frame {
                width: w,
                height: h,
                pixels,
            }
        }
    }
}

/// Decode raw image bytes (PGM or PNG) into a frame at canonical size.
pub fn decode_frame_bytes(name: &str, data: &[u8], target: usize) -> Result<Frame> {
    let lower = name.to_ascii_lowercase();
    let raw = if lower.ends_with(".pgm") {
        parse_pgm(data).map_err(|reason| Error::MalformedImage {
            path: name.into(),
            reason,
        })?
    } else if lower.ends_with(".png") {
        let img = image::load_from_memory(data).map_err(|e| Error::MalformedImage {
            path: name.into(),
            reason: e.to_string(),
        })?;
        decode_dynamic(img)
    } else {
        return Err(Error::UnsupportedFormat(name.to_string()));
    };
    Ok(resize_canonical(&raw, target))
}

/// Center-crop to a square, then bilinear-scale to `target`x`target`.
pub fn resize_canonical(frame: &Frame, target: usize) -> Frame {
    let side = frame.width.min(frame.height);
    let x0 = (frame.width - side) / 2;
    let y0 = (frame.height - side) / 2;
    if side == target {
        if frame.width == side && frame.height == side {
            return frame.clone();
        }
        let mut pixels = Vec::with_capacity(target * target);
        for y in 0..side {
            let row = (y0 + y) * frame.width + x0;
            pixels.extend_from_slice(&frame.pixels[row..row + side]);
        }
        return Frame {
            width: target,
            height: target,
            pixels,
        };
    }
    let scale = side as f64 / target as f64;
    let sample = |fx: f64, fy: f64| -> f64 {
        let fx = fx.clamp(0.0, (side - 1) as f64);
        let fy = fy.clamp(0.0, (side - 1) as f64);
        let ix = fx.floor() as usize;
        let iy = fy.floor() as usize;
        let ix1 = (ix + 1).min(side - 1);
        let iy1 = (iy + 1).min(side - 1);
        let dx = fx - ix as f64;
        let dy = fy - iy as f64;
        let at = |x: usize, y: usize| frame.pixels[(y0 + y) * frame.width + x0 + x] as f64;
        at(ix, iy) * (1.0 - dx) * (1.0 - dy)
            + at(ix1, iy) * dx * (1.0 - dy)
            + at(ix, iy1) * (1.0 - dx) * dy
            + at(ix1, iy1) * dx * dy
    };
    let mut pixels = Vec::with_capacity(target * target);
    for y in 0..target {
        for x in 0..target {
            let fx = (x as f64 + 0.5) * scale - 0.5;
            let fy = (y as f64 + 0.5) * scale - 0.5;
            pixels.push(sample(fx, fy).round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame {
        width: target,
        height: target,
        pixels,
    }
}

// ---------------------------------------------------------------------------
// Dense optical flow

struct PyrLevel {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl PyrLevel {
    #[inline]
    fn sample(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let ix = x.floor() as usize;
        let iy = y.floor() as usize;
        let ix1 = (ix + 1).min(self.width - 1);
        let iy1 = (iy + 1).min(self.height - 1);
        let dx = x - ix as f32;
        let dy = y - iy as f32;
        let at = |x: usize, y: usize| self.data[y * self.width + x];
        at(ix, iy) * (1.0 - dx) * (1.0 - dy)
            + at(ix1, iy) * dx * (1.0 - dy)
            + at(ix, iy1) * (1.0 - dx) * dy
            + at(ix1, iy1) * dx * dy
    }

    /// Central-difference gradient at a subpixel position.
    #[inline]
    fn gradient(&self, x: f32, y: f32) -> (f32, f32) {
        (
            0.5 * (self.sample(x + 1.0, y) - self.sample(x - 1.0, y)),
            0.5 * (self.sample(x, y + 1.0) - self.sample(x, y - 1.0)),
        )
    }
}

fn build_pyramid(frame: &Frame, levels: usize) -> Vec<PyrLevel> {
    let mut pyr = Vec::with_capacity(levels);
    pyr.push(PyrLevel {
        width: frame.width,
        height: frame.height,
        data: frame.to_f32(),
    });
    for l in 1..levels {
        let prev = &pyr[l - 1];
        let w = (prev.width / 2).max(1);
        let h = (prev.height / 2).max(1);
        let mut data = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let x0 = 2 * x;
                let y0 = 2 * y;
                let x1 = (x0 + 1).min(prev.width - 1);
                let y1 = (y0 + 1).min(prev.height - 1);
                data[y * w + x] = 0.25
                    * (prev.data[y0 * prev.width + x0]
                        + prev.data[y0 * prev.width + x1]
                        + prev.data[y1 * prev.width + x0]
                        + prev.data[y1 * prev.width + x1]);
            }
        }
        pyr.push(PyrLevel {
            width: w,
            height: h,
            data,
        });
    }
    pyr
}

const LK_ITERS: usize = 8;
const LK_EPS: f32 = 5e-3;
const LK_MIN_DET: f64 = 1e-6;

/// Coarse-to-fine displacement for one grid node; `(px, py)` at full res.
fn track_point(
    prev: &[PyrLevel],
    next: &[PyrLevel],
    px: f64,
    py: f64,
    radius: usize,
    min_texture: f64,
) -> (f64, f64) {
    let r = radius as i32;
    let mut gx = 0f32;
    let mut gy = 0f32;
    for level in (0..prev.len()).rev() {
        let pl = &prev[level];
        let nl = &next[level];
        let scale = (1 << level) as f64;
        let cx = (px / scale) as f32;
        let cy = (py / scale) as f32;
        // gradients of the template window, fixed over iterations
        let n = (2 * r + 1) * (2 * r + 1);
        let mut ix = vec![0f32; n as usize];
        let mut iy = vec![0f32; n as usize];
        let mut tmpl = vec![0f32; n as usize];
        let mut g11 = 0f64;
        let mut g12 = 0f64;
        let mut g22 = 0f64;
        let mut idx = 0usize;
        for dy in -r..=r {
            for dx in -r..=r {
                let x = cx + dx as f32;
                let y = cy + dy as f32;
                let (dxv, dyv) = pl.gradient(x, y);
                ix[idx] = dxv;
                iy[idx] = dyv;
                tmpl[idx] = pl.sample(x, y);
                g11 += (dxv * dxv) as f64;
                g12 += (dxv * dyv) as f64;
                g22 += (dyv * dyv) as f64;
                idx += 1;
            }
        }
        if level == 0 {
            let texture = (g11 + g22) / n as f64;
            if texture < min_texture {
                return (0.0, 0.0);
            }
        }
        let det = g11 * g22 - g12 * g12;
        if det.abs() < LK_MIN_DET {
            continue;
        }
        let mut dx_acc = 0f32;
        let mut dy_acc = 0f32;
        for _ in 0..LK_ITERS {
            let mut b1 = 0f64;
            let mut b2 = 0f64;
            let mut idx = 0usize;
            for dy in -r..=r {
                for dx in -r..=r {
                    let x = cx + dx as f32 + gx + dx_acc;
                    let y = cy + dy as f32 + gy + dy_acc;
                    let diff = (tmpl[idx] - nl.sample(x, y)) as f64;
                    b1 += diff * ix[idx] as f64;
                    b2 += diff * iy[idx] as f64;
                    idx += 1;
                }
            }
            let sx = ((g22 * b1 - g12 * b2) / det) as f32;
            let sy = ((g11 * b2 - g12 * b1) / det) as f32;
            dx_acc += sx;
            dy_acc += sy;
            if sx.abs() < LK_EPS && sy.abs() < LK_EPS {
                break;
            }
        }
        gx += dx_acc;
        gy += dy_acc;
        if level > 0 {
            gx *= 2.0;
            gy *= 2.0;
        }
    }
    (gx as f64, gy as f64)
}

/// Estimate dense flow from `prev` to `next` on a regular grid.
pub fn dense_flow(prev: &Frame, next: &Frame, cfg: &FlowConfig) -> Result<FlowField> {
    cfg.validate()?;
    if prev.width != next.width || prev.height != next.height {
        return Err(Error::DimensionMismatch(
            prev.width,
            prev.height,
            next.width,
            next.height,
        ));
    }
    let spacing = cfg.grid_spacing;
    let origin = (spacing / 2, spacing / 2);
    let cols = (prev.width - origin.0 + spacing - 1) / spacing;
    let rows = (prev.height - origin.1 + spacing - 1) / spacing;

    if prev.pixels == next.pixels {
        return Ok(FlowField {
            grid_spacing: spacing,
            origin,
            cols,
            rows,
            vectors: vec![(0.0, 0.0); cols * rows],
        });
    }

    let prev_pyr = build_pyramid(prev, cfg.pyramid_levels);
    let next_pyr = build_pyramid(next, cfg.pyramid_levels);

    let mut vectors = Vec::with_capacity(cols * rows);
    for row in 0..rows {
        for col in 0..cols {
            let px = (origin.0 + col * spacing) as f64;
            let py = (origin.1 + row * spacing) as f64;
            let (u, v) = track_point(
                &prev_pyr,
                &next_pyr,
                px,
                py,
                cfg.window_radius,
                cfg.min_texture,
            );
            let (u, v) = if u.is_finite() && v.is_finite() {
                (u, v)
            } else {
                (0.0, 0.0)
            };
            vectors.push((u, v));
        }
    }
    Ok(FlowField {
        grid_spacing: spacing,
        origin,
        cols,
        rows,
        vectors,
    })
}

// ---------------------------------------------------------------------------
// MVFI encoding

/// Snap a flow direction to one of four box orientations (0, 45, 90, 135
/// degrees, modulo 180).
fn bin_angle_radians(u: f64, v: f64) -> f64 {
    let mut deg = v.atan2(u).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    let bin = (((deg + 22.5) / 45.0).floor() as i64).rem_euclid(4);
    (bin as f64 * 45.0).to_radians()
}

fn draw_box(
    pixels: &mut [u8],
    width: usize,
    height: usize,
    cx: f64,
    cy: f64,
    angle: f64,
    half_len: f64,
    half_width: f64,
    intensity: u8,
) {
    let (sin, cos) = angle.sin_cos();
    let reach = half_len.max(half_width) + 1.0;
    let x_lo = ((cx - reach).floor().max(0.0)) as usize;
    let x_hi = ((cx + reach).ceil().min((width - 1) as f64)) as usize;
    let y_lo = ((cy - reach).floor().max(0.0)) as usize;
    let y_hi = ((cy + reach).ceil().min((height - 1) as f64)) as usize;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            if u.abs() <= half_len && v.abs() <= half_width {
                pixels[y * width + x] = intensity;
            }
        }
    }
}

/// Render a flow field as an MVFI template.
///
/// Boxes are drawn in ascending magnitude order so the largest velocities
/// overwrite everything beneath them.
pub fn encode_mvfi(flow: &FlowField, width: usize, height: usize) -> MvfiTemplate {
    let mut pixels = vec![0u8; width * height];
    let mut boxes: Vec<(f64, usize)> = Vec::new();
    for (i, &(u, v)) in flow.vectors.iter().enumerate() {
        let mag = (u * u + v * v).sqrt();
        if mag >= MAG_FLOOR {
            boxes.push((mag, i));
        }
    }
    // ascending magnitude; index as deterministic tie-break
    boxes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    for (mag, i) in boxes {
        let col = i % flow.cols;
        let row = i / flow.cols;
        let (x, y) = flow.node_position(col, row);
        let (u, v) = flow.vectors[i];
        let clamped = mag.clamp(MAG_FLOOR, MAG_CAP);
        let t = (clamped - MAG_FLOOR) / (MAG_CAP - MAG_FLOOR);
        let intensity =
            (INTENSITY_MIN as f64 + t * (255.0 - INTENSITY_MIN as f64)).round() as u8;
        let half_len = (4.0 * mag).clamp(4.0, 32.0) / 2.0;
        let half_width = 3.0;
        let angle = bin_angle_radians(u, v);
        draw_box(
            &mut pixels,
            width,
            height,
            x as f64,
            y as f64,
            angle,
            half_len,
            half_width,
            intensity,
        );
    }
    MvfiTemplate {
        width,
        height,
        pixels,
    }
}

/// Templates for every consecutive frame pair; `len(seq) - 1` outputs.
pub fn sequence_templates(seq: &FrameSequence, cfg: &FlowConfig) -> Result<Vec<MvfiTemplate>> {
    let pairs: Vec<(usize, &Frame, &Frame)> = seq
        .frames
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i, &w[0], &w[1]))
        .collect();
    let mut out: Vec<(usize, MvfiTemplate)> = pairs
        .par_iter()
        .map(|&(i, a, b)| {
            let flow = dense_flow(a, b, cfg)?;
            Ok((i, encode_mvfi(&flow, a.width, a.height)))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|&(i, _)| i);
    Ok(out.into_iter().map(|(_, t)| t).collect())
}
