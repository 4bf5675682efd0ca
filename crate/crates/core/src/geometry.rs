//! Sonar coordinate frames, rigid poses and polar/Cartesian transforms.
//!
//! World frame is z-up: heights are measured along +z and a downward-looking
//! sonar sees the seabed at negative elevation angles.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Rigid sonar-to-world transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let pose = Pose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// From a row-major rotation matrix and a translation.
    pub fn from_row_major(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(&rotation), Vec3::from(translation))
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Pose {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    /// Yaw about +z, then pitch about the rotated +y, then roll about +x.
    /// Positive pitch tilts the sonar nose down.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vec3) -> Self {
        let rot = Rotation3::from_euler_angles(roll, pitch, yaw);
        Pose {
            rotation: *rot.matrix(),
            translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if !(ortho <= 1e-9 && (det - 1.0).abs() <= 1e-9) || !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose(format!(
                "rotation not orthonormal (|RtR-I|={ortho:.3e}, det={det:.12})"
            )));
        }
        Ok(())
    }

    pub fn local_to_world(&self, v: &Vec3) -> Vec3 {
        self.rotation * v + self.translation
    }

    pub fn world_to_local(&self, v: &Vec3) -> Vec3 {
        self.rotation.transpose() * (v - self.translation)
    }

    pub fn direction_to_world(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

/// Point in the sonar frame: range, azimuth, elevation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl PolarPoint {
    pub fn new(r: f64, theta: f64, phi: f64) -> Self {
        PolarPoint { r, theta, phi }
    }

    pub fn to_local(&self) -> Vec3 {
        polar_to_local(self)
    }
}

pub fn polar_to_local(p: &PolarPoint) -> Vec3 {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    Vec3::new(p.r * ct * cp, p.r * st * cp, p.r * sp)
}

/// Inverse of [`polar_to_local`]; range is the vector norm.
pub fn local_to_polar(v: &Vec3) -> PolarPoint {
    let r = v.norm();
    if r == 0.0 {
        return PolarPoint::new(0.0, 0.0, 0.0);
    }
    PolarPoint::new(r, v.y.atan2(v.x), (v.z / r).clamp(-1.0, 1.0).asin())
}

/// Unit direction in the sonar frame for azimuth `theta` and elevation `phi`.
pub fn polar_direction(theta: f64, phi: f64) -> Vec3 {
    polar_to_local(&PolarPoint::new(1.0, theta, phi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SonarIntrinsics {
    pub r_min: f64,
    pub r_max: f64,
    pub hfov: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub n_beams: usize,
    pub n_bins: usize,
}

impl SonarIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min >= 0.0 && self.r_min < self.r_max) {
            return Err(Error::Config(format!(
                "intrinsics: need 0 <= r_min < r_max, got {} / {}",
                self.r_min, self.r_max
            )));
        }
        if !(self.phi_min < self.phi_max) {
            return Err(Error::Config("intrinsics: need phi_min < phi_max".into()));
        }
        if !(self.hfov > 0.0) || self.n_beams == 0 || self.n_bins == 0 {
            return Err(Error::Config(
                "intrinsics: need hfov > 0, n_beams >= 1, n_bins >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        (self.r_max - self.r_min) / self.n_bins as f64
    }

    pub fn beam_width(&self) -> f64 {
        self.hfov / self.n_beams as f64
    }

    pub fn bin_range(&self, bin: usize) -> f64 {
        self.r_min + (bin as f64 + 0.5) * self.bin_width()
    }

    pub fn beam_azimuth(&self, beam: usize) -> f64 {
        -0.5 * self.hfov + (beam as f64 + 0.5) * self.beam_width()
    }

    /// Bin containing range `r`, if inside `[r_min, r_max)`.
    pub fn range_to_bin(&self, r: f64) -> Option<usize> {
        if r < self.r_min || r >= self.r_max {
            return None;
        }
        Some((((r - self.r_min) / self.bin_width()) as usize).min(self.n_bins - 1))
    }

    pub fn azimuth_to_beam(&self, theta: f64) -> Option<usize> {
        let u = (theta + 0.5 * self.hfov) / self.beam_width();
        if u < 0.0 || u >= self.n_beams as f64 {
            return None;
        }
        Some(u as usize)
    }

    pub fn contains(&self, p: &PolarPoint) -> bool {
        p.r >= self.r_min
            && p.r <= self.r_max
            && p.theta.abs() <= 0.5 * self.hfov
            && p.phi >= self.phi_min
            && p.phi <= self.phi_max
    }

    pub fn pixel_to_polar(&self, bin: usize, beam: usize) -> Result<(f64, f64)> {
        if bin >= self.n_bins {
            return Err(Error::Index(format!("bin {bin} >= n_bins {}", self.n_bins)));
        }
        if beam >= self.n_beams {
            return Err(Error::Index(format!(
                "beam {beam} >= n_beams {}",
                self.n_beams
            )));
        }
        Ok((self.bin_range(bin), self.beam_azimuth(beam)))
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "r_min = {}\nr_max = {}\nhfov_deg = {}\nphi_min_deg = {}\nphi_max_deg = {}\nn_beams = {}\nn_bins = {}\n",
            self.r_min,
            self.r_max,
            self.hfov.to_degrees(),
            self.phi_min.to_degrees(),
            self.phi_max.to_degrees(),
            self.n_beams,
            self.n_bins
        )
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut get = std::collections::HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("intrinsics line {}: expected key = value", lineno + 1)))?;
            get.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |k: &str| -> Result<f64> {
            get.get(k)
                .ok_or_else(|| Error::Parse(format!("intrinsics: missing key {k}")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("intrinsics: {k}: {e}")))
        };
        let intr = SonarIntrinsics {
            r_min: num("r_min")?,
            r_max: num("r_max")?,
            hfov: num("hfov_deg")?.to_radians(),
            phi_min: num("phi_min_deg")?.to_radians(),
            phi_max: num("phi_max_deg")?.to_radians(),
            n_beams: num("n_beams")? as usize,
            n_bins: num("n_bins")? as usize,
        };
        intr.validate()?;
        Ok(intr)
    }
}

/// One row of a pose file.
#[derive(Clone, Debug, PartialEq)]
pub struct StampedPose {
    pub frame_id: u64,
    pub time: f64,
    pub pose: Pose,
}

impl fmt::Display for StampedPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // fixed precision, sign chosen by the first non-zero rounded component,
        // so that read-then-write reproduces the text
        let q = self.pose.quaternion();
        let mut c = [q.w, q.i, q.j, q.k].map(|v| (v * 1e12).round());
        if c.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0) {
            c = c.map(|v| -v);
        }
        let c = c.map(|v| format!("{:.12}", v / 1e12 + 0.0));
        let t = &self.pose.translation;
        write!(f, "{} {} {} {} {} {} {} {} {}", self.frame_id, self.time, t.x, t.y, t.z, c[0], c[1], c[2], c[3])
    }
}

/// Parses `frame_id time x y z qw qx qy qz` lines; `#` starts a comment.
pub fn read_pose_file(reader: impl BufRead) -> Result<Vec<StampedPose>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(Error::Parse(format!(
                "pose line {}: expected 9 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let frame_id = fields[0]
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("pose line {}: frame id: {e}", lineno + 1)))?;
        let mut nums = [0.0f64; 8];
        for (slot, s) in nums.iter_mut().zip(&fields[1..]) {
            *slot = s
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("pose line {}: {e}", lineno + 1)))?;
        }
        let [time, x, y, z, qw, qx, qy, qz] = nums;
        let q = Quaternion::new(qw, qx, qy, qz);
        if q.norm() < 1e-12 {
            return Err(Error::Parse(format!("pose line {}: zero quaternion", lineno + 1)));
        }
        out.push(StampedPose {
            frame_id,
            time,
            pose: Pose::from_quaternion(UnitQuaternion::from_quaternion(q), Vec3::new(x, y, z)),
        });
    }
    Ok(out)
}

pub fn write_pose_file(mut w: impl Write, poses: &[StampedPose]) -> Result<()> {
    writeln!(w, "# frame_id time x y z qw qx qy qz")?;
    for p in poses {
        writeln!(w, "{p}")?;
    }
    Ok(())
}

pub fn load_pose_file(path: &Path) -> Result<Vec<StampedPose>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pose_file(std::io::BufReader::new(f))
}
