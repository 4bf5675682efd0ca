use crate::dataset::AltimeterPoint;
use crate::error::{Error, Result};
use crate::field::{HeightField, HeightTape};

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute difference between predicted and measured intensities.
pub fn loss_intensity(pred: &[f64], meas: &[f64]) -> Result<f64> {
    if pred.len() != meas.len() {
        return Err(Error::Dimension { expected: meas.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::Empty("intensity loss over an empty batch"));
    }
    Ok(pred.iter().zip(meas).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// d L_int / d pred_p for a batch of `count` pixels.
pub fn loss_intensity_grad(pred: f64, meas: f64, count: usize) -> f64 {
    sign(pred - meas) / count as f64
}

/// Mean of (|n| - 1)^2 over raw normals (-dN/dx, -dN/dy, 1).
pub fn loss_regularizer(normals: &[[f64; 3]]) -> Result<f64> {
    if normals.is_empty() {
        return Err(Error::Empty("regularizer over an empty batch"));
    }
    Ok(normals.iter().map(|n| normal_penalty(n)).sum::<f64>() / normals.len() as f64)
}

pub fn normal_penalty(n: &[f64; 3]) -> f64 {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    (len - 1.0).powi(2)
}

/// Gradient of `normal_penalty(n) / count` with respect to n.
pub fn normal_penalty_grad(n: &[f64; 3], count: usize) -> [f64; 3] {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let c = 2.0 * (len - 1.0) / (len * count as f64);
    [c * n[0], c * n[1], c * n[2]]
}

/// Weighted mean of |z - N(x, y)| over the points.
pub fn loss_altimeter(points: &[AltimeterPoint], field: &HeightField, params: &[f64], active_levels: usize) -> Result<f64> {
    altimeter_terms(points, field, params, active_levels, 1.0, None)
}

/// Altimeter loss; when `grads` is given, accumulates `scale * dL/dtheta`.
pub fn altimeter_terms(
    points: &[AltimeterPoint],
    field: &HeightField,
    params: &[f64],
    active_levels: usize,
    scale: f64,
    mut grads: Option<&mut [f64]>,
) -> Result<f64> {
    let total_w: f64 = points.iter().map(|p| p.w).sum();
    if points.is_empty() || !(total_w > 0.0) {
        return Err(Error::Empty("altimeter loss over an empty point set"));
    }
    let mut tape = HeightTape::new();
    let mut sum = 0.0;
    for pt in points {
        let (h, _, _) = field.forward(params, [pt.p.x, pt.p.y], active_levels, false, &mut tape);
        let d = pt.p.z - h;
        sum += pt.w * d.abs();
        if let Some(g) = grads.as_deref_mut() {
            let gh = -scale * pt.w * sign(d) / total_w;
            if gh != 0.0 {
                field.backward(params, &mut tape, gh, None, None, g);
            }
        }
    }
    Ok(sum / total_w)
}
