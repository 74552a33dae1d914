//! Orthographic camera model shared by lifting, projection and the fixture renderer.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// An orthographic camera.
///
/// The basis is right-handed with `right × up = forward`. Image rows grow
/// downwards, so a pixel `(px, py)` maps to the lateral offset
/// `(px - cx)·scale·right + (cy - py)·scale·up` from `origin`, and depth is
/// measured along `forward`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoCamera {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    pub origin: Vec3,
    /// World units per pixel.
    pub scale: f64,
    pub principal: (f64, f64),
}

impl OrthoCamera {
    /// Build a camera looking along `forward`, with `up_hint` projected to be
    /// orthogonal to it.
    ///
    /// # Panics
    /// If `forward` is zero or parallel to `up_hint`.
    pub fn looking(
        forward: Vec3,
        up_hint: Vec3,
        origin: Vec3,
        scale: f64,
        principal: (f64, f64),
    ) -> Self {
        let forward = forward.normalize();
        let up = (up_hint - forward * up_hint.dot(&forward))
            .try_normalize(1e-12)
            .expect("up hint parallel to forward");
        let right = up.cross(&forward);
        Self {
            right,
            up,
            forward,
            origin,
            scale,
            principal,
        }
    }

    /// Orbit camera around `target`: located at azimuth/elevation (degrees),
    /// `distance` away, looking back at the target with world +Z as up.
    pub fn orbit(
        target: Vec3,
        azimuth_deg: f64,
        elevation_deg: f64,
        distance: f64,
        scale: f64,
        principal: (f64, f64),
    ) -> Self {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let toward_camera = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        let forward = -toward_camera;
        // at the poles world +Z is degenerate as an up hint
        let up_hint = if el.cos().abs() < 1e-9 {
            Vec3::new(-az.cos(), -az.sin(), 0.0) * el.sin().signum()
        } else {
            Vec3::z()
        };
        Self::looking(
            forward,
            up_hint,
            target - forward * distance,
            scale,
            principal,
        )
    }

    /// Lateral world offset of a pixel position, relative to `origin`.
    pub fn lateral(&self, px: f64, py: f64) -> Vec3 {
        let (cx, cy) = self.principal;
        self.right * ((px - cx) * self.scale) + self.up * ((cy - py) * self.scale)
    }

    /// World point for a pixel at the given depth along `forward`.
    pub fn unproject(&self, px: f64, py: f64, depth: f64) -> Vec3 {
        self.origin + self.lateral(px, py) + self.forward * depth
    }

    /// Pixel position of a world point (inverse of the lateral terms of [`Self::unproject`]).
    pub fn project(&self, w: &Vec3) -> (f64, f64) {
        let d = w - self.origin;
        let (cx, cy) = self.principal;
        (
            cx + d.dot(&self.right) / self.scale,
            cy - d.dot(&self.up) / self.scale,
        )
    }

    /// Depth of a world point along `forward`.
    pub fn depth_of(&self, w: &Vec3) -> f64 {
        (w - self.origin).dot(&self.forward)
    }

    /// Max deviation from an orthonormal right-handed basis.
    pub fn basis_error(&self) -> f64 {
        let norms = [self.right.norm(), self.up.norm(), self.forward.norm()]
            .map(|n| (n - 1.0).abs());
        let dots = [
            self.right.dot(&self.up),
            self.up.dot(&self.forward),
            self.forward.dot(&self.right),
        ]
        .map(f64::abs);
        let handed = (self.right.cross(&self.up) - self.forward).norm();
        norms
            .into_iter()
            .chain(dots)
            .chain([handed])
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn axis_camera() -> OrthoCamera {
        OrthoCamera {
            right: Vec3::x(),
            up: Vec3::z(),
            forward: -Vec3::y(),
            origin: Vec3::zeros(),
            scale: 0.01,
            principal: (64.0, 64.0),
        }
    }

    #[test]
    fn principal_pixel_lifts_along_forward() {
        let cam = OrthoCamera::orbit(Vec3::zeros(), 30.0, 45.0, 3.0, 0.02, (50.0, 40.0));
        let w = cam.unproject(50.0, 40.0, 1.5);
        assert_abs_diff_eq!((w - (cam.origin + cam.forward * 1.5)).norm(), 0.0, epsilon = 1e-12);
        let (px, py) = cam.project(&w);
        assert_abs_diff_eq!(px, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(py, 40.0, epsilon = 1e-9);
    }

    #[test]
    fn orbit_cameras_are_orthonormal() {
        for el in [-90.0, -45.0, 0.0, 45.0, 90.0] {
            for az in [0.0, 90.0, 180.0, 270.0] {
                let cam = OrthoCamera::orbit(Vec3::zeros(), az, el, 3.0, 0.01, (0.0, 0.0));
                assert!(cam.basis_error() < 1e-9, "az {az} el {el}");
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let mut cam = axis_camera();
        let w = Vec3::new(0.3, 1.0, -0.2);
        let before = cam.project(&w);
        let shift = Vec3::new(0.5, -2.0, 0.25);
        cam.origin += shift;
        let after = cam.project(&(w + shift));
        assert_abs_diff_eq!(before.0, after.0, epsilon = 1e-9);
        assert_abs_diff_eq!(before.1, after.1, epsilon = 1e-9);
    }

    #[test]
    fn image_rows_grow_downwards() {
        let cam = axis_camera();
        let above = cam.unproject(64.0, 10.0, 0.0);
        assert!(above.z > 0.0);
    }
}
