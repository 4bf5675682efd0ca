use serde::{Deserialize, Serialize};

use super::Scene;
use crate::encoding::Bounds2;
use crate::error::{Error, Result};
use crate::geometry::{Pose, StampedPose, Vec3};

/// Lawn-mower survey: lines parallel to x at `spacing` offsets in y.
/// Angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyPlan {
    pub bounds: Bounds2,
    pub spacing: f64,
    /// Height above the local terrain.
    pub altitude: f64,
    pub speed: f64,
    pub frame_rate: f64,
    /// Sonar mounting pitch, positive looking down.
    pub pitch: f64,
    /// Sinusoidal attitude perturbation amplitudes (0 disables).
    #[serde(default)]
    pub roll_wobble: f64,
    #[serde(default)]
    pub pitch_wobble: f64,
    #[serde(default = "default_wobble_period")]
    pub wobble_period: f64,
}

fn default_wobble_period() -> f64 {
    7.0
}

impl SurveyPlan {
    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_valid() {
            return Err(Error::Config("survey box is empty".into()));
        }
        if !(self.spacing > 0.0) || !(self.speed > 0.0) || !(self.frame_rate > 0.0) {
            return Err(Error::Config("survey spacing, speed and frame rate must be positive".into()));
        }
        Ok(())
    }

    pub fn line_offsets(&self) -> Vec<f64> {
        let n = (self.bounds.height() / self.spacing + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.bounds.min[1] + k as f64 * self.spacing).collect()
    }
}

/// Poses along alternating lines, terrain-following at the plan altitude,
/// heading along travel, frames at the plan frame rate.
pub fn make_lawnmower(plan: &SurveyPlan, scene: &Scene) -> Result<Vec<StampedPose>> {
    plan.validate()?;
    let ds = plan.speed / plan.frame_rate;
    let len = plan.bounds.width();
    let per_line = (len / ds + 1e-9).floor() as usize + 1;
    let mut out = Vec::new();
    let mut t = 0.0;
    for (k, y) in plan.line_offsets().into_iter().enumerate() {
        let forward = k % 2 == 0;
        let yaw = if forward { 0.0 } else { std::f64::consts::PI };
        for i in 0..per_line {
            let s = i as f64 * ds;
            let x = if forward { plan.bounds.min[0] + s } else { plan.bounds.max[0] - s };
            let z = scene.height(x, y) + plan.altitude;
            let phase = 2.0 * std::f64::consts::PI * t / plan.wobble_period;
            let roll = plan.roll_wobble * phase.sin();
            let pitch = plan.pitch + plan.pitch_wobble * (0.7 * phase).cos();
            out.push(StampedPose {
                frame_id: out.len() as u64,
                time: t,
                pose: Pose::from_euler(roll, pitch, yaw, Vec3::new(x, y, z)),
            });
            t += 1.0 / plan.frame_rate;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(size: f64, spacing: f64) -> SurveyPlan {
        SurveyPlan {
            bounds: Bounds2::new(0.0, 0.0, size, size),
            spacing,
            altitude: 4.0,
            speed: 1.0,
            frame_rate: 2.0,
            pitch: 0.4,
            roll_wobble: 0.0,
            pitch_wobble: 0.0,
            wobble_period: 7.0,
        }
    }

    #[test]
    fn line_count_and_headings() {
        let p = plan(20.0, 10.0);
        assert_eq!(p.line_offsets(), vec![0.0, 10.0, 20.0]);
        let scene = Scene::flat(p.bounds, -3.0);
        let poses = make_lawnmower(&p, &scene).unwrap();
        assert_eq!(poses.len(), 3 * 41);
        let heading = |sp: &StampedPose| sp.pose.direction_to_world(&Vec3::new(1.0, 0.0, 0.0));
        let (h0, h1) = (heading(&poses[0]), heading(&poses[41]));
        assert!((h0.x / h0.xy().norm() - 1.0).abs() < 1e-12 && (h1.x / h1.xy().norm() + 1.0).abs() < 1e-12);
        for sp in &poses {
            assert!(p.bounds.contains(sp.pose.translation.x, sp.pose.translation.y));
            assert!((sp.pose.translation.z - 1.0).abs() < 1e-6);
        }
        assert!(poses.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn pitch_points_the_sonar_down() {
        let p = plan(10.0, 10.0);
        let poses = make_lawnmower(&p, &Scene::flat(p.bounds, 0.0)).unwrap();
        let fwd = poses[0].pose.direction_to_world(&Vec3::new(1.0, 0.0, 0.0));
        assert!((fwd.z + 0.4f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_plans_are_rejected() {
        let mut p = plan(10.0, 0.0);
        assert!(make_lawnmower(&p, &Scene::flat(p.bounds, 0.0)).is_err());
        p.spacing = 2.0;
        p.bounds = Bounds2::new(0.0, 0.0, 0.0, 5.0);
        assert!(p.validate().is_err());
    }
}
