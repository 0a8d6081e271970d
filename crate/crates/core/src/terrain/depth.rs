use std::io::{Read, Write};

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GapWorld, TerrainError};

pub const RAW_WIDTH: usize = 480;
pub const RAW_HEIGHT: usize = 360;
pub const PREPROCESSED_WIDTH: usize = 140;
pub const PREPROCESSED_HEIGHT: usize = 120;

const DOWNSAMPLE: usize = 3;
const CROP_LEFT: usize = 20;
const CLIP_MIN: f64 = 0.1;
const CLIP_MAX: f64 = 1.0;

/// Pinhole intrinsics. Pixel `(u, v)` looks along `((u - cx)/fx, (v - cy)/fy, 1)`
/// in the optical frame (x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub max_range: f64,
}

impl CameraIntrinsics {
    pub fn from_fov(width: usize, height: usize, hfov: f64, vfov: f64, max_range: f64) -> Self {
        Self {
            width,
            height,
            fx: (width as f64 / 2.0) / (hfov / 2.0).tan(),
            fy: (height as f64 / 2.0) / (vfov / 2.0).tan(),
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            max_range,
        }
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self::from_fov(RAW_WIDTH, RAW_HEIGHT, 87f64.to_radians(), 58f64.to_radians(), 10.0)
    }
}

/// World pose of the optical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

impl CameraPose {
    /// Camera at `position` looking along the world +x axis, pitched down by `pitch_down`.
    pub fn looking_forward(position: Vector3<f64>, pitch_down: f64) -> Self {
        Self {
            position,
            rotation: Rotation3::from_axis_angle(&Vector3::y_axis(), pitch_down) * optical_to_body(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraMount {
    /// Offset from the body origin in the body frame, m.
    pub offset: [f64; 3],
    pub pitch_down: f64,
}

impl Default for CameraMount {
    fn default() -> Self {
        Self {
            offset: [0.19, 0.0, 0.0],
            pitch_down: 30f64.to_radians(),
        }
    }
}

fn optical_to_body() -> Rotation3<f64> {
    // Columns: optical x -> body -y, optical y -> body -z, optical z -> body x.
    Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    ))
}

/// Camera pose for a body at `position` with (roll, pitch, yaw) `euler`.
pub fn camera_pose_from_body(position: &Vector3<f64>, euler: &Vector3<f64>, mount: &CameraMount) -> CameraPose {
    let body = Rotation3::from_euler_angles(euler.x, euler.y, euler.z);
    let mount_rot = Rotation3::from_axis_angle(&Vector3::y_axis(), mount.pitch_down) * optical_to_body();
    CameraPose {
        position: position + body * Vector3::from(mount.offset),
        rotation: body * mount_rot,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major depths along the ray, m.
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.data[i])
    }

    pub fn set(&mut self, u: usize, v: usize, value: Option<f64>) {
        let i = v * self.width + u;
        match value {
            Some(d) => {
                self.data[i] = d;
                self.valid[i] = true;
            }
            None => {
                self.data[i] = 0.0;
                self.valid[i] = false;
            }
        }
    }
}

/// Ray-casts the gap world. Rays that enter a gap read `max_range` (the gap is
/// bottomless); rays that miss the ground or travel beyond `max_range` are invalid.
pub fn render_depth(world: &GapWorld, pose: &CameraPose, k: &CameraIntrinsics) -> DepthImage {
    let mut img = DepthImage {
        width: k.width,
        height: k.height,
        data: vec![0.0; k.width * k.height],
        valid: vec![false; k.width * k.height],
    };
    for v in 0..k.height {
        for u in 0..k.width {
            let d_cam = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0).normalize();
            let dir = pose.rotation * d_cam;
            let value = match world.raycast(&pose.position, &dir) {
                Some((_, true)) => Some(k.max_range),
                Some((t, false)) if t <= k.max_range => Some(t),
                _ => None,
            };
            img.set(u, v, value);
        }
    }
    img
}

/// Downsample 3x by nearest neighbour, crop the left band, clip to
/// [0.1, 1.0] m and fill holes from the nearest valid pixel in the same row.
pub fn preprocess_depth(raw: &DepthImage) -> Result<DepthImage, TerrainError> {
    if raw.width != RAW_WIDTH || raw.height != RAW_HEIGHT {
        return Err(TerrainError::BadShape {
            width: raw.width,
            height: raw.height,
            expected_width: RAW_WIDTH,
            expected_height: RAW_HEIGHT,
        });
    }
    let w = RAW_WIDTH / DOWNSAMPLE - CROP_LEFT;
    let h = RAW_HEIGHT / DOWNSAMPLE;
    let mut out = DepthImage {
        width: w,
        height: h,
        data: vec![0.0; w * h],
        valid: vec![false; w * h],
    };
    for v in 0..h {
        for u in 0..w {
            let src_u = (u + CROP_LEFT) * DOWNSAMPLE + DOWNSAMPLE / 2;
            let src_v = v * DOWNSAMPLE + DOWNSAMPLE / 2;
            let value = raw.get(src_u, src_v).map(|d| d.clamp(CLIP_MIN, CLIP_MAX));
            out.set(u, v, value);
        }
    }
    fill_holes(&mut out);
    Ok(out)
}

fn fill_holes(img: &mut DepthImage) {
    for v in 0..img.height {
        let row = v * img.width..(v + 1) * img.width;
        let valid: Vec<usize> = row.clone().filter(|&i| img.valid[i]).collect();
        for i in row {
            if img.valid[i] {
                continue;
            }
            // Nearest valid pixel, ties to the left; empty rows read as far.
            let fill = valid
                .iter()
                .min_by_key(|&&j| (j as isize - i as isize).unsigned_abs())
                .map_or(CLIP_MAX, |&j| img.data[j]);
            img.data[i] = fill;
            img.valid[i] = true;
        }
    }
}

/// Binary 16-bit PGM in millimetres; invalid pixels are written as 0.
pub fn write_pgm16<W: Write>(img: &DepthImage, mut out: W) -> Result<(), TerrainError> {
    write!(out, "P5\n{} {}\n65535\n", img.width, img.height)?;
    let mut buf = Vec::with_capacity(img.data.len() * 2);
    for (d, ok) in img.data.iter().zip(&img.valid) {
        let mm = if *ok { (d * 1000.0).round().clamp(1.0, 65535.0) as u16 } else { 0 };
        buf.extend_from_slice(&mm.to_be_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_pgm16<R: Read>(mut input: R) -> Result<DepthImage, TerrainError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(TerrainError::BadPgm("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(TerrainError::BadPgm("expected a 16-bit P5 image".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| TerrainError::BadPgm(format!("bad size {s}")));
    let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != width * height * 2 {
        return Err(TerrainError::BadPgm("pixel data length mismatch".into()));
    }
    let mut img = DepthImage {
        width,
        height,
        data: vec![0.0; width * height],
        valid: vec![false; width * height],
    };
    for (i, px) in body.chunks_exact(2).enumerate() {
        let mm = u16::from_be_bytes([px[0], px[1]]);
        if mm > 0 {
            img.data[i] = mm as f64 / 1000.0;
            img.valid[i] = true;
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{Segment, SegmentKind};

    #[test]
    fn center_pixel_matches_ray_plane_closed_form() {
        let world = GapWorld::flat(100.0);
        let k = CameraIntrinsics::default();
        for (height, pitch) in [(0.28, 30f64.to_radians()), (0.5, 0.9), (0.31, 0.35)] {
            let pose = CameraPose::looking_forward(Vector3::new(0.19, 0.0, height), pitch);
            let img = render_depth(&world, &pose, &k);
            let d = img.get(k.cx as usize, k.cy as usize).unwrap();
            assert!((d - height / pitch.sin()).abs() < 1e-9, "{d}");
        }
    }

    #[test]
    fn upward_camera_sees_nothing() {
        let world = GapWorld::flat(100.0);
        let pose = CameraPose::looking_forward(Vector3::new(0.0, 0.0, 0.3), -std::f64::consts::FRAC_PI_2);
        let img = render_depth(&world, &pose, &CameraIntrinsics::default());
        assert!(img.valid.iter().all(|v| !v));
    }

    #[test]
    fn translation_over_uniform_flat_is_invisible() {
        let world = GapWorld::flat(100.0);
        let k = CameraIntrinsics::default();
        let a = render_depth(&world, &CameraPose::looking_forward(Vector3::new(0.0, 0.0, 0.3), 0.5), &k);
        let b = render_depth(&world, &CameraPose::looking_forward(Vector3::new(1.7, 0.4, 0.3), 0.5), &k);
        assert_eq!(a, b);
    }

    #[test]
    fn gaps_read_far() {
        let world = GapWorld::from_segments(
            vec![
                Segment { kind: SegmentKind::Flat, width: 1.4 },
                Segment { kind: SegmentKind::Gap, width: 0.3 },
                Segment { kind: SegmentKind::Flat, width: 5.0 },
            ],
            -1.0,
            0,
        )
        .unwrap();
        let k = CameraIntrinsics::default();
        let pose = CameraPose::looking_forward(Vector3::new(0.0, 0.0, 0.28), 30f64.to_radians());
        let img = render_depth(&world, &pose, &k);
        assert_eq!(img.get(k.cx as usize, k.cy as usize), Some(k.max_range));
    }

    #[test]
    fn preprocessing_shapes_and_clips() {
        let img = preprocess_depth(&DepthImage::filled(RAW_WIDTH, RAW_HEIGHT, 0.5)).unwrap();
        assert_eq!((img.width, img.height), (PREPROCESSED_WIDTH, PREPROCESSED_HEIGHT));
        assert!(img.data.iter().all(|&d| d == 0.5));

        let far = preprocess_depth(&DepthImage::filled(RAW_WIDTH, RAW_HEIGHT, 3.0)).unwrap();
        assert!(far.data.iter().all(|&d| d == 1.0));
        let near = preprocess_depth(&DepthImage::filled(RAW_WIDTH, RAW_HEIGHT, 0.05)).unwrap();
        assert!(near.data.iter().all(|&d| d == 0.1));

        assert!(matches!(
            preprocess_depth(&DepthImage::filled(160, 120, 0.5)),
            Err(TerrainError::BadShape { .. })
        ));
    }

    #[test]
    fn single_hole_is_filled_from_row() {
        let mut raw = DepthImage::filled(RAW_WIDTH, RAW_HEIGHT, 0.7);
        // Source pixel of output (10, 5).
        raw.set((10 + CROP_LEFT) * 3 + 1, 5 * 3 + 1, None);
        let out = preprocess_depth(&raw).unwrap();
        assert_eq!(out.get(10, 5), Some(0.7));
        assert!(out.valid.iter().all(|&v| v));
    }

    #[test]
    fn empty_rows_fill_far() {
        let mut raw = DepthImage::filled(RAW_WIDTH, RAW_HEIGHT, 0.4);
        for u in 0..RAW_WIDTH {
            raw.set(u, 1, None);
        }
        let out = preprocess_depth(&raw).unwrap();
        assert!((0..out.width).all(|u| out.get(u, 0) == Some(1.0)));
        assert_eq!(out.get(0, 1), Some(0.4));
    }

    #[test]
    fn pgm_round_trip() {
        let mut img = DepthImage::filled(6, 4, 0.523);
        img.set(2, 1, None);
        let mut buf = Vec::new();
        write_pgm16(&img, &mut buf).unwrap();
        let back = read_pgm16(buf.as_slice()).unwrap();
        assert_eq!(back.valid, img.valid);
        assert_eq!(back.get(0, 0), Some(0.523));
        assert!(read_pgm16(&b"P2\n1 1\n255\n"[..]).is_err());
    }
}
