//! Real spherical harmonics up to degree 3.

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const fn sh_len(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

fn normalize(v: [f64; 3]) -> ([f64; 3], f64) {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n == 0.0 {
        return ([0.0, 0.0, 1.0], 0.0);
    }
    ([v[0] / n, v[1] / n, v[2] / n], n)
}

/// Basis values for degrees `0..=degree` (degree <= 3) at direction `v`.
/// Non-unit inputs are normalized first.
pub fn encode_direction_sh(v: [f64; 3], degree: usize, out: &mut [f64]) {
    assert!(degree <= 3, "spherical harmonics implemented up to degree 3");
    let ([x, y, z], _) = normalize(v);
    out[0] = C0;
    if degree == 0 {
        return;
    }
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = C2[0] * xy;
    out[5] = C2[1] * yz;
    out[6] = C2[2] * (2.0 * zz - xx - yy);
    out[7] = C2[3] * xz;
    out[8] = C2[4] * (xx - yy);
    if degree == 2 {
        return;
    }
    out[9] = C3[0] * y * (3.0 * xx - yy);
    out[10] = C3[1] * xy * z;
    out[11] = C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = C3[5] * z * (xx - yy);
    out[15] = C3[6] * x * (xx - 3.0 * yy);
}

/// Gradient of `upstream . sh(v)` with respect to the raw (unnormalized) `v`.
pub fn encode_direction_sh_backward(v: [f64; 3], degree: usize, upstream: &[f64]) -> [f64; 3] {
    assert!(degree <= 3);
    let ([x, y, z], norm) = normalize(v);
    if norm == 0.0 {
        return [0.0; 3];
    }
    // d(basis_k)/d(unit direction), accumulated against upstream
    let mut g = [0.0f64; 3];
    let mut add = |k: usize, d: [f64; 3]| {
        if k < upstream.len() {
            for a in 0..3 {
                g[a] += upstream[k] * d[a];
            }
        }
    };
    if degree >= 1 {
        add(1, [0.0, -C1, 0.0]);
        add(2, [0.0, 0.0, C1]);
        add(3, [-C1, 0.0, 0.0]);
    }
    if degree >= 2 {
        add(4, [C2[0] * y, C2[0] * x, 0.0]);
        add(5, [0.0, C2[1] * z, C2[1] * y]);
        add(6, [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z]);
        add(7, [C2[3] * z, 0.0, C2[3] * x]);
        add(8, [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0]);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        add(9, [C3[0] * 6.0 * x * y, C3[0] * (3.0 * xx - 3.0 * yy), 0.0]);
        add(10, [C3[1] * y * z, C3[1] * x * z, C3[1] * x * y]);
        add(11, [C3[2] * (-2.0 * x * y), C3[2] * (4.0 * zz - xx - 3.0 * yy), C3[2] * 8.0 * y * z]);
        add(12, [C3[3] * (-6.0 * x * z), C3[3] * (-6.0 * y * z), C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)]);
        add(13, [C3[4] * (4.0 * zz - 3.0 * xx - yy), C3[4] * (-2.0 * x * y), C3[4] * 8.0 * x * z]);
        add(14, [C3[5] * 2.0 * x * z, -C3[5] * 2.0 * y * z, C3[5] * (xx - yy)]);
        add(15, [C3[6] * (3.0 * xx - 3.0 * yy), C3[6] * (-6.0 * x * y), 0.0]);
    }
    // chain through normalization: (I - u u^T) / |v|
    let u = [x, y, z];
    let dot = g[0] * u[0] + g[1] * u[1] + g[2] * u[2];
    [(g[0] - dot * u[0]) / norm, (g[1] - dot * u[1]) / norm, (g[2] - dot * u[2]) / norm]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
        loop {
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
            let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    #[test]
    fn known_values() {
        let mut out = [0.0; 16];
        encode_direction_sh([0.3, -0.2, 0.9], 3, &mut out);
        assert!((out[0] - 0.282095).abs() < 1e-6);
        encode_direction_sh([0.0, 0.0, 1.0], 3, &mut out);
        assert!((out[2] - 0.488603).abs() < 1e-6);
        assert_eq!(sh_len(3), 16);
    }

    #[test]
    fn non_unit_input_is_normalized() {
        let (mut a, mut b) = ([0.0; 16], [0.0; 16]);
        encode_direction_sh([0.3, -0.2, 0.9], 3, &mut a);
        encode_direction_sh([3.0, -2.0, 9.0], 3, &mut b);
        for k in 0..16 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_degrees_average_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut sum = [0.0; 16];
        let mut sumsq = [0.0; 16];
        let mut out = [0.0; 16];
        for _ in 0..n {
            encode_direction_sh(random_unit(&mut rng), 3, &mut out);
            for k in 0..16 {
                sum[k] += out[k];
                sumsq[k] += out[k] * out[k];
            }
        }
        for k in 1..16 {
            let mean = sum[k] / n as f64;
            let var = sumsq[k] / n as f64 - mean * mean;
            let sigma = (var / n as f64).sqrt();
            assert!(mean.abs() < 3.0 * sigma + 1e-12, "k={k} mean={mean} sigma={sigma}");
        }
    }

    #[test]
    fn orthonormal_under_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1_000_000;
        let mut gram = [[0.0f64; 16]; 16];
        let mut out = [0.0; 16];
        for _ in 0..n {
            encode_direction_sh(random_unit(&mut rng), 3, &mut out);
            for i in 0..16 {
                for j in i..16 {
                    gram[i][j] += out[i] * out[j];
                }
            }
        }
        let area = 4.0 * std::f64::consts::PI;
        for i in 0..16 {
            for j in i..16 {
                let v = gram[i][j] / n as f64 * area;
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((v - target).abs() < 0.02, "gram[{i}][{j}] = {v}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let up: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = encode_direction_sh_backward(v, 3, &up);
            let f = |w: [f64; 3]| {
                let mut o = [0.0; 16];
                encode_direction_sh(w, 3, &mut o);
                o.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
            };
            let h = 1e-6;
            for a in 0..3 {
                let (mut p, mut m) = (v, v);
                p[a] += h;
                m[a] -= h;
                let fd = (f(p) - f(m)) / (2.0 * h);
                assert!((fd - g[a]).abs() < 1e-6 * fd.abs().max(1.0), "axis {a}: fd {fd} vs {}", g[a]);
            }
        }
    }
}
