//! On-disk dataset layout: `poses.txt`, `intrinsics.txt`,
//! `frames/NNNNNN.img`, optional `altimeter.txt`.
//!
//! Image files carry a 16-byte header (magic "FLSI", n_bins u32, n_beams
//! u32, scale f32) followed by row-major u16 intensities (rows are range
//! bins); a stored value q decodes to `scale * q / 65535`.

use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{load_pose_file, write_pose_file, SonarIntrinsics, StampedPose, Vec3};

pub const IMAGE_MAGIC: &[u8; 4] = b"FLSI";

#[derive(Clone, Debug, PartialEq)]
pub struct SonarFrame {
    pub n_bins: usize,
    pub n_beams: usize,
    pub scale: f32,
    pub data: Vec<u16>,
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

impl SonarFrame {
    /// Quantizes intensities (row-major, rows = bins) clipped to [0, 1].
    pub fn from_intensities(n_bins: usize, n_beams: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n_bins * n_beams {
            return Err(Error::Dimension { expected: n_bins * n_beams, got: values.len() });
        }
        Ok(SonarFrame { n_bins, n_beams, scale: 1.0, data: values.iter().map(|v| quantize(*v)).collect() })
    }

    pub fn get(&self, bin: usize, beam: usize) -> f64 {
        self.scale as f64 * self.data[bin * self.n_beams + beam] as f64 / 65535.0
    }

    pub fn column(&self, beam: usize) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.get(b, beam)).collect()
    }

    pub fn intensities(&self) -> Vec<f64> {
        (0..self.data.len()).map(|k| self.get(k / self.n_beams, k % self.n_beams)).collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(IMAGE_MAGIC)?;
        w.write_all(&(self.n_bins as u32).to_le_bytes())?;
        w.write_all(&(self.n_beams as u32).to_le_bytes())?;
        w.write_all(&self.scale.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 2);
        for q in &self.data {
            buf.extend_from_slice(&q.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[0..4] != IMAGE_MAGIC {
            return Err(Error::Format("not a sonar image (bad magic)".into()));
        }
        let n_bins = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
        let n_beams = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let scale = f32::from_le_bytes(head[12..16].try_into().expect("4 bytes"));
        if n_bins.checked_mul(n_beams).map_or(true, |n| n > 1 << 26) {
            return Err(Error::Format(format!("implausible image size {n_bins}x{n_beams}")));
        }
        let mut raw = vec![0u8; n_bins * n_beams * 2];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        Ok(SonarFrame { n_bins, n_beams, scale, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// A seabed point used as direct height supervision (altimeter readings or
/// a prior-map point cloud).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AltimeterPoint {
    pub p: Vec3,
    pub w: f64,
}

pub fn read_altimeter(reader: impl BufRead) -> Result<Vec<AltimeterPoint>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = t
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("altimeter line {}: bad number '{s}'", n + 1))))
            .collect::<Result<_>>()?;
        if v.len() != 3 && v.len() != 4 {
            return Err(Error::Parse(format!("altimeter line {}: expected 3 or 4 values, got {}", n + 1, v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse(format!("altimeter line {}: non-finite value", n + 1)));
        }
        out.push(AltimeterPoint { p: Vec3::new(v[0], v[1], v[2]), w: v.get(3).copied().unwrap_or(1.0) });
    }
    Ok(out)
}

pub fn write_altimeter(mut w: impl Write, points: &[AltimeterPoint]) -> Result<()> {
    for a in points {
        writeln!(w, "{} {} {} {}", a.p.x, a.p.y, a.p.z, a.w)?;
    }
    Ok(())
}

pub fn load_altimeter(path: &Path) -> Result<Vec<AltimeterPoint>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_altimeter(std::io::BufReader::new(f))
}

pub fn save_altimeter(path: &Path, points: &[AltimeterPoint]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_altimeter(&mut w, points)?;
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub intrinsics: Option<SonarIntrinsics>,
    pub poses: Vec<StampedPose>,
    pub frames: Vec<SonarFrame>,
    pub altimeter: Vec<AltimeterPoint>,
}

pub fn frame_path(root: &Path, frame_id: u64) -> PathBuf {
    root.join("frames").join(format!("{frame_id:06}.img"))
}

impl Dataset {
    pub fn new(intrinsics: SonarIntrinsics) -> Self {
        Dataset { intrinsics: Some(intrinsics), ..Default::default() }
    }

    pub fn intrinsics(&self) -> Result<&SonarIntrinsics> {
        self.intrinsics.as_ref().ok_or(Error::Empty("dataset has no intrinsics"))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_index(&self, frame_id: u64) -> Option<usize> {
        self.poses.iter().position(|p| p.frame_id == frame_id)
    }

    /// Reads intrinsics and poses only.
    pub fn load_meta(root: &Path) -> Result<Self> {
        let ip = root.join("intrinsics.txt");
        let text = std::fs::read_to_string(&ip).map_err(|e| Error::io(&ip, e))?;
        let intrinsics = SonarIntrinsics::from_key_values(&text)?;
        let poses = load_pose_file(&root.join("poses.txt"))?;
        let alt = root.join("altimeter.txt");
        let altimeter = if alt.exists() { load_altimeter(&alt)? } else { Vec::new() };
        Ok(Dataset { intrinsics: Some(intrinsics), poses, frames: Vec::new(), altimeter })
    }

    pub fn load(root: &Path) -> Result<Self> {
        let mut ds = Self::load_meta(root)?;
        let intr = ds.intrinsics()?.clone();
        for p in &ds.poses {
            let frame = SonarFrame::load(&frame_path(root, p.frame_id))?;
            if frame.n_bins != intr.n_bins || frame.n_beams != intr.n_beams {
                return Err(Error::Format(format!(
                    "frame {} is {}x{}, intrinsics say {}x{}",
                    p.frame_id, frame.n_bins, frame.n_beams, intr.n_bins, intr.n_beams
                )));
            }
            ds.frames.push(frame);
        }
        Ok(ds)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root.join("frames")).map_err(|e| Error::io(root, e))?;
        let ip = root.join("intrinsics.txt");
        std::fs::write(&ip, self.intrinsics()?.to_key_values()).map_err(|e| Error::io(&ip, e))?;
        let pp = root.join("poses.txt");
        let f = std::fs::File::create(&pp).map_err(|e| Error::io(&pp, e))?;
        let mut w = std::io::BufWriter::new(f);
        write_pose_file(&mut w, &self.poses)?;
        w.flush()?;
        if self.frames.len() != self.poses.len() {
            return Err(Error::Dimension { expected: self.poses.len(), got: self.frames.len() });
        }
        for (p, fr) in self.poses.iter().zip(&self.frames) {
            fr.save(&frame_path(root, p.frame_id))?;
        }
        if !self.altimeter.is_empty() {
            save_altimeter(&root.join("altimeter.txt"), &self.altimeter)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    #[test]
    fn image_roundtrip_and_quantization() {
        let vals: Vec<f64> = (0..12).map(|k| k as f64 / 11.0).chain([1.5, -0.2]).collect();
        assert!(SonarFrame::from_intensities(3, 4, &vals).is_err());
        let f = SonarFrame::from_intensities(2, 7, &vals).unwrap();
        assert_eq!(f.get(1, 6), 0.0);
        assert_eq!(f.get(1, 5), 1.0);
        assert!((f.get(0, 3) - 3.0 / 11.0).abs() < 1.0 / 65535.0);
        let mut a = Vec::new();
        f.write_to(&mut a).unwrap();
        assert_eq!(a.len(), 16 + 2 * 14);
        let back = SonarFrame::read_from(&a[..]).unwrap();
        assert_eq!(back, f);
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn altimeter_roundtrip() {
        let pts = vec![AltimeterPoint { p: Vec3::new(1.0, 2.5, -3.25), w: 1.0 }, AltimeterPoint { p: Vec3::new(-1e-3, 0.1, 7.0), w: 0.5 }];
        let mut a = Vec::new();
        write_altimeter(&mut a, &pts).unwrap();
        let back = read_altimeter(&a[..]).unwrap();
        assert_eq!(back, pts);
        let mut b = Vec::new();
        write_altimeter(&mut b, &back).unwrap();
        assert_eq!(a, b);
        assert_eq!(read_altimeter(&b"1 2 3\n# c\n\n4 5 6\n"[..]).unwrap().len(), 2);
        assert!(read_altimeter(&b"1 2\n"[..]).is_err());
        assert!(read_altimeter(&b"1 2 x\n"[..]).is_err());
    }

    #[test]
    fn dataset_directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let intr = SonarIntrinsics {
            r_min: 0.5,
            r_max: 10.0,
            hfov: 1.0,
            phi_min: -0.2,
            phi_max: 0.2,
            n_beams: 4,
            n_bins: 3,
        };
        let mut ds = Dataset::new(intr);
        for k in 0..3u64 {
            ds.poses.push(StampedPose { frame_id: k * 5, time: k as f64, pose: Pose::from_euler(0.0, 0.3, 0.1 * k as f64, Vec3::new(k as f64, 0.0, 2.0)) });
            ds.frames.push(SonarFrame::from_intensities(3, 4, &vec![0.1 * k as f64; 12]).unwrap());
        }
        ds.altimeter.push(AltimeterPoint { p: Vec3::new(0.0, 0.0, -1.0), w: 1.0 });
        ds.save(dir.path()).unwrap();
        assert!(dir.path().join("frames/000010.img").exists());
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.frames, ds.frames);
        assert_eq!(back.altimeter, ds.altimeter);
        assert_eq!(back.frame_index(10), Some(2));
        for (a, b) in back.poses.iter().zip(&ds.poses) {
            assert!((a.pose.translation - b.pose.translation).norm() < 1e-9);
        }
    }
}
