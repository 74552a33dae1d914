//! Principal frame and its calibration from top/bottom views.

use serde::{Deserialize, Serialize};

use super::camera::Vec3;
use crate::keypoints::centroid;
use crate::mask::MaskError;
use crate::view::AxialView;

/// Default deviation (degrees) below which the stored frame is kept.
pub const DEFAULT_DEVIATION_DEG: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalFrame {
    pub origin: Vec3,
    pub x_axis: Vec3,
    pub y_axis: Vec3,
    pub z_axis: Vec3,
}

impl Default for PrincipalFrame {
    fn default() -> Self {
        Self {
            origin: Vec3::zeros(),
            x_axis: Vec3::x(),
            y_axis: Vec3::y(),
            z_axis: Vec3::z(),
        }
    }
}

impl PrincipalFrame {
    pub fn axes(&self) -> [Vec3; 3] {
        [self.x_axis, self.y_axis, self.z_axis]
    }

    /// Max deviation from a right-handed orthonormal triad.
    pub fn orthonormality_error(&self) -> f64 {
        let [x, y, z] = self.axes();
        [
            (x.norm() - 1.0).abs(),
            (y.norm() - 1.0).abs(),
            (z.norm() - 1.0).abs(),
            x.dot(&y).abs(),
            y.dot(&z).abs(),
            z.dot(&x).abs(),
            (x.cross(&y) - z).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CalibrationStatus {
    /// Measured axis within the threshold of the stored one.
    Kept { deviation_deg: f64 },
    /// Frame rebuilt around the measured axis.
    Rebuilt { deviation_deg: f64 },
    /// Top and bottom centroids coincide; stored frame kept.
    DegenerateAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub frame: PrincipalFrame,
    pub status: CalibrationStatus,
}

impl Calibration {
    pub fn deviated(&self) -> bool {
        matches!(self.status, CalibrationStatus::Rebuilt { .. })
    }
}

/// 3D position of a view's mask centroid. The depth under the centroid is
/// used when present, otherwise the mean depth of the foreground.
fn lifted_centroid(view: &AxialView) -> Result<Vec3, MaskError> {
    let c = centroid(&view.mask)?;
    let depth = view.depth.sample(c.x, c.y).or_else(|| {
        let vals: Vec<f64> = view
            .mask
            .foreground()
            .filter_map(|(x, y)| view.depth.get(x, y))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    });
    Ok(view.camera.unproject(c.x, c.y, depth.unwrap_or(0.0)))
}

/// Measure the object's vertical axis as the line from the bottom-view mask
/// centroid to the top-view mask centroid (both lifted to 3D) and rebuild the
/// frame around it when it deviates from `default_frame` by at least
/// `deviation_thresh_deg`.
pub fn calibrate_principal_frame(
    top: &AxialView,
    bottom: &AxialView,
    default_frame: &PrincipalFrame,
    deviation_thresh_deg: f64,
) -> Result<Calibration, MaskError> {
    let axis = lifted_centroid(top)? - lifted_centroid(bottom)?;
    if axis.norm() < 1e-6 {
        return Ok(Calibration {
            frame: default_frame.clone(),
            status: CalibrationStatus::DegenerateAxis,
        });
    }
    let z = axis.normalize();
    let deviation_deg = z
        .dot(&default_frame.z_axis)
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees();
    if deviation_deg < deviation_thresh_deg {
        return Ok(Calibration {
            frame: default_frame.clone(),
            status: CalibrationStatus::Kept { deviation_deg },
        });
    }
    let dx = default_frame.x_axis;
    let x = (dx - z * dx.dot(&z))
        .try_normalize(1e-9)
        // default x parallel to the new axis: fall back to the default y
        .unwrap_or_else(|| {
            let dy = default_frame.y_axis;
            (dy - z * dy.dot(&z)).normalize()
        });
    let y = z.cross(&x);
    Ok(Calibration {
        frame: PrincipalFrame {
            origin: default_frame.origin,
            x_axis: x,
            y_axis: y,
            z_axis: z,
        },
        status: CalibrationStatus::Rebuilt { deviation_deg },
    })
}
