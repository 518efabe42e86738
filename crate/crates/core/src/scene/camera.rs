//! Pinhole cameras and the camera JSON file.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

const ROTATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("camera json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image size must be at least 1x1")]
    EmptyImage,
    #[error("focal lengths must be positive and finite")]
    BadFocal,
    #[error("frame {0}: rotation is not orthonormal with determinant +1")]
    BadRotation(String),
    #[error("frame {0}: c2w must hold 16 finite values with last row 0 0 0 1")]
    BadMatrix(String),
    #[error("camera file has no frames")]
    NoFrames,
}

/// A pinhole view. Camera frame: +x right, +y down, +z forward.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation.
    pub rotation: Matrix3<f64>,
    /// Camera origin in world coordinates.
    pub translation: Vec3,
}

impl CameraView {
    pub fn validate(&self) -> Result<(), CameraError> {
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyImage);
        }
        let focal_ok = |f: f64| f.is_finite() && f > 0.0;
        if !focal_ok(self.fx) || !focal_ok(self.fy) || !self.cx.is_finite() || !self.cy.is_finite()
        {
            return Err(CameraError::BadFocal);
        }
        let r = &self.rotation;
        let orth = (r.transpose() * r - Matrix3::identity()).amax();
        if !(orth <= ROTATION_TOL && (r.determinant() - 1.0).abs() <= ROTATION_TOL)
            || !self.translation.iter().all(|v| v.is_finite())
        {
            return Err(CameraError::BadRotation(self.name.clone()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// World-space ray through the center of pixel `(u, v)`; direction is unit length.
    pub fn ray(&self, u: usize, v: usize) -> (Vec3, Vec3) {
        let d_cam = Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
        .normalize();
        (self.translation, self.rotation * d_cam)
    }

    /// Projects a world point to continuous pixel coordinates; `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let c = self.rotation.transpose() * (p - self.translation);
        if c.z <= 0.0 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// Row-major 4x4 camera-to-world matrix.
    pub fn c2w(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameFile {
    name: String,
    c2w: Vec<f64>,
}

/// On-disk camera set: shared intrinsics and one pose per frame.
#[derive(Debug, Serialize, Deserialize)]
pub struct CameraRig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    frames: Vec<FrameFile>,
}

impl CameraRig {
    pub fn from_views(views: &[CameraView]) -> Result<Self, CameraError> {
        let first = views.first().ok_or(CameraError::NoFrames)?;
        Ok(Self {
            width: first.width,
            height: first.height,
            fx: first.fx,
            fy: first.fy,
            cx: first.cx,
            cy: first.cy,
            frames: views
                .iter()
                .map(|v| FrameFile { name: v.name.clone(), c2w: v.c2w().to_vec() })
                .collect(),
        })
    }

    pub fn views(&self) -> Result<Vec<CameraView>, CameraError> {
        if self.frames.is_empty() {
            return Err(CameraError::NoFrames);
        }
        self.frames
            .iter()
            .map(|f| {
                let m = &f.c2w;
                let bad = || CameraError::BadMatrix(f.name.clone());
                if m.len() != 16 || !m.iter().all(|v| v.is_finite()) {
                    return Err(bad());
                }
                if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
                    return Err(bad());
                }
                let view = CameraView {
                    name: f.name.clone(),
                    width: self.width,
                    height: self.height,
                    fx: self.fx,
                    fy: self.fy,
                    cx: self.cx,
                    cy: self.cy,
                    rotation: Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]),
                    translation: Vec3::new(m[3], m[7], m[11]),
                };
                view.validate()?;
                Ok(view)
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, CameraError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>, CameraError> {
    CameraRig::from_json(&std::fs::read_to_string(path)?)?.views()
}

pub fn save_cameras(views: &[CameraView], path: impl AsRef<Path>) -> Result<(), CameraError> {
    let rig = CameraRig::from_views(views)?;
    std::fs::write(path, serde_json::to_string_pretty(&rig)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn identity_view(w: usize, h: usize) -> CameraView {
        CameraView {
            name: "v0".into(),
            width: w,
            height: h,
            fx: w as f64,
            fy: h as f64,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    #[test]
    fn center_pixel_ray_is_forward() {
        let v = identity_view(3, 3);
        let (o, d) = v.ray(1, 1);
        assert_eq!(o, Vec3::zeros());
        assert!((d - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        // +x right, +y down
        let (_, d) = v.ray(2, 2);
        assert!(d.x > 0.0 && d.y > 0.0);
    }

    #[test]
    fn project_inverts_ray() {
        let mut v = identity_view(64, 48);
        v.rotation = *nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).matrix();
        v.translation = Vec3::new(1.0, -2.0, 0.5);
        let (o, d) = v.ray(10, 30);
        let (pu, pv) = v.project(&(o + d * 3.0)).unwrap();
        assert!((pu - 10.5).abs() < 1e-9 && (pv - 30.5).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut v = identity_view(8, 4);
        v.translation = Vec3::new(0.5, 0.25, -1.0);
        let rig = CameraRig::from_views(&[v.clone()]).unwrap();
        let text = serde_json::to_string(&rig).unwrap();
        let back = CameraRig::from_json(&text).unwrap().views().unwrap();
        assert_eq!(back, vec![v]);

        let skewed = text.replacen("[1.0,0.0,0.0,0.5", "[2.0,0.0,0.0,0.5", 1);
        assert!(matches!(
            CameraRig::from_json(&skewed).unwrap().views(),
            Err(CameraError::BadRotation(_))
        ));
        let short = r#"{"width":1,"height":1,"fx":1,"fy":1,"cx":0,"cy":0,"frames":[{"name":"a","c2w":[1,0,0]}]}"#;
        assert!(matches!(CameraRig::from_json(short).unwrap().views(), Err(CameraError::BadMatrix(_))));
    }
}
