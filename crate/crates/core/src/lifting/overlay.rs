//! Indexed keypoint overlays with the principal frame drawn on top of a view.

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_circle_mut, draw_filled_rect_mut, draw_hollow_circle_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use super::font::{draw_digits, text_size};
use super::{Keypoint3D, OrthoCamera, PrincipalFrame};
use crate::mask::BinaryMask;

/// Colors of the X, Y and Z frame axes.
pub const AXIS_COLORS: [Rgb<u8>; 3] = [Rgb([255, 0, 0]), Rgb([0, 255, 0]), Rgb([0, 0, 255])];
/// On-screen length of an axis parallel to the image plane, as a fraction of
/// the image width.
pub const AXIS_LENGTH_FRAC: f64 = 0.2;
pub const MARKER_RADIUS: i32 = 4;
const MARKER_FILL: Rgb<u8> = Rgb([255, 0, 255]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);
const BACKDROP: Rgb<u8> = Rgb([255, 255, 255]);
const LABEL_SCALE: u32 = 2;

/// Backdrop for views without a color image: light gray object on white.
pub fn mask_backdrop(mask: &BinaryMask) -> RgbImage {
    RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        if mask.get(x as usize, y as usize) {
            Rgb([200, 200, 200])
        } else {
            BACKDROP
        }
    })
}

fn thick_line(img: &mut RgbImage, a: (f32, f32), b: (f32, f32), color: Rgb<u8>) {
    for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)] {
        draw_line_segment_mut(img, (a.0 + dx, a.1 + dy), (b.0 + dx, b.1 + dy), color);
    }
}

/// Draw the frame axes and each keypoint's marker and index label over `base`.
///
/// Keypoints are drawn in the order given; the caller decides which points
/// are shown in this view.
pub fn render_overlay(base: &RgbImage, keypoints: &[Keypoint3D], frame: &PrincipalFrame, cam: &OrthoCamera) -> RgbImage {
    let mut img = base.clone();
    let world_len = AXIS_LENGTH_FRAC * img.width() as f64 * cam.scale;
    let (ox, oy) = cam.project(&frame.origin);
    for (axis, color) in frame.axes().iter().zip(AXIS_COLORS) {
        let (ex, ey) = cam.project(&(frame.origin + axis * world_len));
        if (ex - ox).hypot(ey - oy) < 0.5 {
            // axis points along the view direction
            continue;
        }
        thick_line(&mut img, (ox as f32, oy as f32), (ex as f32, ey as f32), color);
    }

    for kp in keypoints {
        let (x, y) = cam.project(&kp.pos);
        let (cx, cy) = (x.round() as i32, y.round() as i32);
        draw_filled_circle_mut(&mut img, (cx, cy), MARKER_RADIUS, MARKER_FILL);
        draw_hollow_circle_mut(&mut img, (cx, cy), MARKER_RADIUS, INK);

        let label = kp.index.to_string();
        let (tw, th) = text_size(&label, LABEL_SCALE);
        let (lx, ly) = (cx + MARKER_RADIUS + 2, cy - th as i32 / 2);
        draw_filled_rect_mut(&mut img, Rect::at(lx - 1, ly - 1).of_size(tw + 2, th + 2), BACKDROP);
        draw_digits(&mut img, lx as i64, ly as i64, &label, LABEL_SCALE, INK);
    }
    img
}
