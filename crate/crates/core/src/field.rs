//! The two neural fields: a heightmap N(x, y) with its vertical signed
//! distance and normal, and the radiance network L.

use rand::Rng;

use crate::encoding::{encode_direction_sh, encode_direction_sh_backward, sh_len, EncodeTape, HashGrid, HashGridConfig};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::gradnet::{Activation, Mlp, MlpSpec, MlpTape, ParamStore};

/// Result of a height query at a world point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldQuery {
    pub point: Vec3,
    pub h: f64,
    /// z - h: positive above the surface.
    pub delta: f64,
    /// (-dN/dx, -dN/dy, 1)
    pub normal: [f64; 3],
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct HeightTape {
    pub enc: EncodeTape,
    mlp: MlpTape,
    g_feat: Vec<f64>,
    g_feat_tan: Vec<f64>,
}

impl HeightTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn features(&self) -> &[f64] {
        &self.enc.features
    }
}

/// Hash-encoded heightmap: features of (x, y) through a small ReLU network
/// with a linear scalar output.
#[derive(Clone, Debug)]
pub struct HeightField {
    pub grid: HashGrid,
    pub mlp: Mlp,
}

pub fn height_mlp_spec(grid: &HashGridConfig, hidden_layers: usize, hidden_width: usize) -> MlpSpec {
    MlpSpec {
        input_dim: grid.output_dim(),
        hidden_layers,
        hidden_width,
        output_dim: 1,
        hidden_activation: Activation::Relu,
        output_activation: Activation::Identity,
    }
}

impl HeightField {
    pub fn new(
        grid_cfg: HashGridConfig,
        hidden_layers: usize,
        hidden_width: usize,
        table_init: f64,
        init_height: f64,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let spec = height_mlp_spec(&grid_cfg, hidden_layers, hidden_width);
        let grid = HashGrid::new(grid_cfg, store, "height.grid", table_init, rng)?;
        let mlp = Mlp::new(spec, store, "height.mlp", rng);
        let (b, _) = mlp.output_bias();
        store.values[b] = init_height;
        Ok(HeightField { grid, mlp })
    }

    pub fn attach(grid_cfg: HashGridConfig, hidden_layers: usize, hidden_width: usize, store: &ParamStore) -> Result<Self> {
        let spec = height_mlp_spec(&grid_cfg, hidden_layers, hidden_width);
        Ok(HeightField {
            grid: HashGrid::attach(grid_cfg, store, "height.grid")?,
            mlp: Mlp::attach(spec, store, "height.mlp")?,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.grid.output_dim()
    }

    /// Height and, with `tangents`, its horizontal gradient (dN/dx, dN/dy).
    pub fn forward(&self, params: &[f64], xy: [f64; 2], active_levels: usize, tangents: bool, tape: &mut HeightTape) -> (f64, f64, f64) {
        self.grid.encode(params, xy, active_levels, tangents, &mut tape.enc);
        if tangents {
            self.mlp
                .forward(params, &tape.enc.features, &[&tape.enc.dfdx, &tape.enc.dfdy], &mut tape.mlp)
                .expect("height network input dimension is fixed by construction");
            (tape.mlp.output()[0], tape.mlp.output_tangent(0)[0], tape.mlp.output_tangent(1)[0])
        } else {
            self.mlp
                .forward(params, &tape.enc.features, &[], &mut tape.mlp)
                .expect("height network input dimension is fixed by construction");
            (tape.mlp.output()[0], 0.0, 0.0)
        }
    }

    /// Accumulates parameter gradients for upstream gradients on h, on the
    /// two slope components (tangent tapes only), and optionally directly
    /// on the encoded features.
    pub fn backward(&self, params: &[f64], tape: &mut HeightTape, gh: f64, gslope: Option<[f64; 2]>, g_features: Option<&[f64]>, grads: &mut [f64]) {
        let dim = self.feature_dim();
        let HeightTape { enc, mlp, g_feat, g_feat_tan } = tape;
        g_feat.clear();
        g_feat.resize(dim, 0.0);
        match gslope {
            Some([gx, gy]) if enc.has_tangents => {
                g_feat_tan.clear();
                g_feat_tan.resize(2 * dim, 0.0);
                self.mlp.backward(params, mlp, &[gh], &[&[gx], &[gy]], grads, Some(g_feat), Some(g_feat_tan));
            }
            _ => {
                self.mlp.backward(params, mlp, &[gh], &[], grads, Some(g_feat), None);
                g_feat_tan.clear();
            }
        }
        if let Some(extra) = g_features {
            for (a, b) in g_feat.iter_mut().zip(extra) {
                *a += b;
            }
        }
        if g_feat_tan.is_empty() {
            self.grid.backward(enc, g_feat, None, None, grads);
        } else {
            let (gx, gy) = g_feat_tan.split_at(dim);
            self.grid.backward(enc, g_feat, Some(gx), Some(gy), grads);
        }
    }

    pub fn query_height(&self, params: &[f64], xy: [f64; 2], active_levels: usize) -> f64 {
        let mut tape = HeightTape::new();
        self.forward(params, xy, active_levels, false, &mut tape).0
    }

    /// Height plus exact horizontal gradient.
    pub fn query_gradient(&self, params: &[f64], xy: [f64; 2], active_levels: usize) -> (f64, [f64; 2]) {
        let mut tape = HeightTape::new();
        let (h, hx, hy) = self.forward(params, xy, active_levels, true, &mut tape);
        (h, [hx, hy])
    }

    pub fn query_delta_normal_with(&self, params: &[f64], p: &Vec3, active_levels: usize, tape: &mut HeightTape) -> FieldQuery {
        let (h, hx, hy) = self.forward(params, [p.x, p.y], active_levels, true, tape);
        FieldQuery {
            point: *p,
            h,
            delta: p.z - h,
            normal: [-hx, -hy, 1.0],
            features: tape.enc.features.clone(),
        }
    }

    pub fn query_delta_normal(&self, params: &[f64], p: &Vec3, active_levels: usize) -> FieldQuery {
        let mut tape = HeightTape::new();
        self.query_delta_normal_with(params, p, active_levels, &mut tape)
    }
}

/// Affine map of world coordinates into roughly [-1, 1] for network input.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoordFrame {
    pub center: [f64; 3],
    pub half_extent: f64,
}

impl CoordFrame {
    pub fn apply(&self, p: &Vec3) -> [f64; 3] {
        [
            (p.x - self.center[0]) / self.half_extent,
            (p.y - self.center[1]) / self.half_extent,
            (p.z - self.center[2]) / self.half_extent,
        ]
    }
}

#[derive(Clone, Debug, Default)]
pub struct RadianceTape {
    mlp: MlpTape,
    input: Vec<f64>,
    normal_raw: [f64; 3],
    view: [f64; 3],
    g_in: Vec<f64>,
}

impl RadianceTape {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Gradients of a radiance output with respect to its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceInputGrads {
    pub features: Vec<f64>,
    /// With respect to the raw (unnormalized) normal.
    pub normal: [f64; 3],
    pub view: [f64; 3],
    pub point: [f64; 3],
}

/// Radiance network: input is (scaled position, hash features, unit normal,
/// SH(view)); output is a sigmoid-bounded scalar.
#[derive(Clone, Debug)]
pub struct RadianceField {
    pub mlp: Mlp,
    pub sh_degree: usize,
    pub feature_dim: usize,
    pub frame: CoordFrame,
}

pub fn radiance_mlp_spec(feature_dim: usize, sh_degree: usize, hidden_layers: usize, hidden_width: usize) -> MlpSpec {
    MlpSpec {
        input_dim: 3 + feature_dim + 3 + sh_len(sh_degree),
        hidden_layers,
        hidden_width,
        output_dim: 1,
        hidden_activation: Activation::Relu,
        output_activation: Activation::Sigmoid,
    }
}

impl RadianceField {
    pub fn new(
        feature_dim: usize,
        sh_degree: usize,
        hidden_layers: usize,
        hidden_width: usize,
        frame: CoordFrame,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        let spec = radiance_mlp_spec(feature_dim, sh_degree, hidden_layers, hidden_width);
        RadianceField { mlp: Mlp::new(spec, store, "radiance.mlp", rng), sh_degree, feature_dim, frame }
    }

    pub fn attach(
        feature_dim: usize,
        sh_degree: usize,
        hidden_layers: usize,
        hidden_width: usize,
        frame: CoordFrame,
        store: &ParamStore,
    ) -> Result<Self> {
        let spec = radiance_mlp_spec(feature_dim, sh_degree, hidden_layers, hidden_width);
        Ok(RadianceField { mlp: Mlp::attach(spec, store, "radiance.mlp")?, sh_degree, feature_dim, frame })
    }

    pub fn forward(&self, params: &[f64], point: &Vec3, features: &[f64], normal: [f64; 3], view: [f64; 3], tape: &mut RadianceTape) -> f64 {
        debug_assert_eq!(features.len(), self.feature_dim);
        let x = &mut tape.input;
        x.clear();
        x.extend_from_slice(&self.frame.apply(point));
        x.extend_from_slice(features);
        let nn = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt().max(1e-12);
        x.extend_from_slice(&[normal[0] / nn, normal[1] / nn, normal[2] / nn]);
        let base = x.len();
        x.resize(base + sh_len(self.sh_degree), 0.0);
        encode_direction_sh(view, self.sh_degree, &mut x[base..]);
        tape.normal_raw = normal;
        tape.view = view;
        self.mlp
            .forward(params, &tape.input, &[], &mut tape.mlp)
            .expect("radiance network input dimension is fixed by construction");
        tape.mlp.output()[0]
    }

    pub fn backward(&self, params: &[f64], tape: &mut RadianceTape, g_out: f64, grads: &mut [f64]) -> RadianceInputGrads {
        let dim = self.mlp.spec.input_dim;
        tape.g_in.clear();
        tape.g_in.resize(dim, 0.0);
        self.mlp.backward(params, &mut tape.mlp, &[g_out], &[], grads, Some(&mut tape.g_in), None);
        let g = &tape.g_in;
        let fd = self.feature_dim;
        let s = self.frame.half_extent;
        let point = [g[0] / s, g[1] / s, g[2] / s];
        let features = g[3..3 + fd].to_vec();
        let gn = [g[3 + fd], g[4 + fd], g[5 + fd]];
        let n = tape.normal_raw;
        let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(1e-12);
        let u = [n[0] / nn, n[1] / nn, n[2] / nn];
        let d = gn[0] * u[0] + gn[1] * u[1] + gn[2] * u[2];
        let normal = [(gn[0] - d * u[0]) / nn, (gn[1] - d * u[1]) / nn, (gn[2] - d * u[2]) / nn];
        let view = encode_direction_sh_backward(tape.view, self.sh_degree, &g[6 + fd..]);
        RadianceInputGrads { features, normal, view, point }
    }

    pub fn query_radiance(&self, params: &[f64], q: &FieldQuery, view: [f64; 3]) -> f64 {
        let mut tape = RadianceTape::new();
        self.forward(params, &q.point, &q.features, q.normal, view, &mut tape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Bounds2;
    use crate::gradnet::{adam_step, AdamConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_cfg() -> HashGridConfig {
        HashGridConfig {
            levels: 4,
            log2_table_size: 10,
            features_per_entry: 2,
            n_min: 4,
            n_max: 32,
            bounds: Bounds2::new(0.0, 0.0, 10.0, 10.0),
        }
    }

    fn height_field(init: f64, seed: u64) -> (HeightField, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hf = HeightField::new(grid_cfg(), 2, 16, 1e-4, init, &mut store, &mut rng).unwrap();
        (hf, store)
    }

    #[test]
    fn fresh_field_sits_at_its_bias() {
        let (hf, store) = height_field(2.5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let xy = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
            let h = hf.query_height(&store.values, xy, 4);
            assert!((h - 2.5).abs() < 0.01, "h = {h}");
            assert_eq!(h, hf.query_height(&store.values, xy, 4));
        }
    }

    #[test]
    fn flat_field_delta_and_normal() {
        let (hf, mut store) = height_field(0.0, 1);
        store.values.iter_mut().for_each(|v| *v = 0.0);
        let (b, _) = hf.mlp.output_bias();
        store.values[b] = 1.25;
        let q = hf.query_delta_normal(&store.values, &Vec3::new(3.0, 4.0, 2.25), 4);
        assert_eq!(q.delta, 1.0);
        assert_eq!(q.normal, [0.0, 0.0, 1.0]);
        let q2 = hf.query_delta_normal(&store.values, &Vec3::new(3.0, 4.0, 7.25), 4);
        assert_eq!(q2.delta - q.delta, 5.0);
    }

    /// Fits the field to `target` by regression on random points.
    fn fit(hf: &HeightField, store: &mut ParamStore, target: impl Fn(f64, f64) -> f64, steps: u64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = HeightTape::new();
        let cfg = AdamConfig::default();
        for t in 1..=steps {
            store.zero_grads();
            let n = 64;
            for _ in 0..n {
                let xy = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
                let (h, _, _) = hf.forward(&store.values, xy, 4, false, &mut tape);
                let g = 2.0 * (h - target(xy[0], xy[1])) / n as f64;
                let values = std::mem::take(&mut store.values);
                hf.backward(&values, &mut tape, g, None, None, &mut store.grads);
                store.values = values;
            }
            adam_step(store, &cfg, 0.01, t);
        }
    }

    #[test]
    fn regression_to_a_plane() {
        let (hf, mut store) = height_field(0.0, 3);
        fit(&hf, &mut store, |_, _| 2.0, 500, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let err: f64 = (0..200)
            .map(|_| (hf.query_height(&store.values, [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)], 4) - 2.0).abs())
            .sum::<f64>()
            / 200.0;
        assert!(err < 0.01, "mean error {err}");
    }

    #[test]
    fn slope_normal_after_fitting_unit_ramp() {
        let (hf, mut store) = height_field(0.0, 5);
        fit(&hf, &mut store, |x, _| x, 1500, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut mean = [0.0; 3];
        let n = 200;
        for _ in 0..n {
            let p = Vec3::new(rng.gen_range(2.0..8.0), rng.gen_range(2.0..8.0), 0.0);
            let q = hf.query_delta_normal(&store.values, &p, 4);
            for a in 0..3 {
                mean[a] += q.normal[a] / n as f64;
            }
        }
        assert!((mean[0] + 1.0).abs() < 0.05, "{mean:?}");
        assert!(mean[1].abs() < 0.05, "{mean:?}");
        assert!((mean[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_gradient_matches_finite_differences_off_lattice() {
        let (hf, mut store) = height_field(0.0, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for v in store.values.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let step = 1e-6;
        let mut checked = 0;
        let mut tries = 0;
        while checked < 200 {
            tries += 1;
            assert!(tries < 2000, "too many samples rejected");
            let xy = [rng.gen_range(0.5..9.5), rng.gen_range(0.5..9.5)];
            let (h0, g) = hf.query_gradient(&store.values, xy, 4);
            let at = |x: f64, y: f64| hf.query_height(&store.values, [x, y], 4);
            let one_sided = |fwd: f64, bwd: f64| ((fwd - h0) / step, (h0 - bwd) / step);
            let (xf, xb) = one_sided(at(xy[0] + step, xy[1]), at(xy[0] - step, xy[1]));
            let (yf, yb) = one_sided(at(xy[0], xy[1] + step), at(xy[0], xy[1] - step));
            // a cell boundary or ReLU kink inside the stencil shows up as disagreeing one-sided slopes
            if (xf - xb).abs() > 1e-4 || (yf - yb).abs() > 1e-4 {
                continue;
            }
            let (fx, fy) = (0.5 * (xf + xb), 0.5 * (yf + yb));
            assert!((fx - g[0]).abs() <= 1e-5 * fx.abs().max(1.0), "x: fd {fx} vs {}", g[0]);
            assert!((fy - g[1]).abs() <= 1e-5 * fy.abs().max(1.0), "y: fd {fy} vs {}", g[1]);
            checked += 1;
        }
    }

    fn radiance(seed: u64) -> (RadianceField, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = CoordFrame { center: [5.0, 5.0, 0.0], half_extent: 5.0 };
        let rf = RadianceField::new(8, 3, 2, 16, frame, &mut store, &mut rng);
        (rf, store)
    }

    #[test]
    fn zero_radiance_net_is_one_half() {
        let (rf, mut store) = radiance(1);
        store.values.iter_mut().for_each(|v| *v = 0.0);
        let q = FieldQuery { point: Vec3::new(1.0, 2.0, 3.0), h: 0.0, delta: 3.0, normal: [0.1, 0.2, 1.0], features: vec![0.3; 8] };
        assert_eq!(rf.query_radiance(&store.values, &q, [0.0, 0.0, -1.0]), 0.5);
    }

    #[test]
    fn radiance_is_bounded() {
        let (rf, mut store) = radiance(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in store.values.iter_mut() {
            *v *= 5.0;
        }
        let mut tape = RadianceTape::new();
        for _ in 0..100_000 {
            let p = Vec3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-20.0..20.0));
            let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let n = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 1.0];
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..-0.01)];
            let l = rf.forward(&store.values, &p, &f, n, v, &mut tape);
            assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn radiance_input_gradients_match_finite_differences() {
        let (rf, store) = radiance(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = RadianceTape::new();
        for _ in 0..20 {
            let p = Vec3::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(-1.0..1.0));
            let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 1.0];
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..-0.2)];
            rf.forward(&store.values, &p, &f, n, v, &mut tape);
            let mut grads = vec![0.0; store.len()];
            let g = rf.backward(&store.values, &mut tape, 1.0, &mut grads);
            let eval = |p: &Vec3, f: &[f64], n: [f64; 3], v: [f64; 3]| {
                let mut t = RadianceTape::new();
                rf.forward(&store.values, p, f, n, v, &mut t)
            };
            let h = 1e-6;
            let check = |fd: f64, an: f64, what: &str| {
                let scale = fd.abs().max(an.abs());
                assert!((fd - an).abs() <= 1e-4 * scale.max(1e-6), "{what}: fd {fd} vs {an}");
            };
            for a in 0..3 {
                let (mut vp, mut vm) = (v, v);
                vp[a] += h;
                vm[a] -= h;
                check((eval(&p, &f, n, vp) - eval(&p, &f, n, vm)) / (2.0 * h), g.view[a], "view");
                let (mut np, mut nm) = (n, n);
                np[a] += h;
                nm[a] -= h;
                check((eval(&p, &f, np, v) - eval(&p, &f, nm, v)) / (2.0 * h), g.normal[a], "normal");
            }
            for k in 0..8 {
                let (mut fp, mut fm) = (f.clone(), f.clone());
                fp[k] += h;
                fm[k] -= h;
                check((eval(&p, &fp, n, v) - eval(&p, &fm, n, v)) / (2.0 * h), g.features[k], "features");
            }
        }
    }
}
