use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{conv_backward, conv_forward, ConvShape, Tensor};
use super::{NetConfig, Real};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec2};
use crate::heatmap::Heatmap;
use crate::raster::BevRaster;
use crate::scenario::{Trajectory, FRAME_DT, HORIZON_FRAMES};

/// Waypoint outputs of the trajectory head: `(x/10, y/10, yaw)` offsets per
/// step from the arc to the goal (see `head_baseline`).
pub const TRAJ_OUTPUTS: usize = 3 * HORIZON_FRAMES;
/// Non-embedding inputs of the trajectory head: goal x, goal y, speed.
const HEAD_STATE: usize = 3;
/// Metric inputs and outputs of the head are divided by this.
const METRIC_SCALE: f64 = 10.0;

const E1: usize = 0;
const E1B: usize = 1;
const E2: usize = 2;
const E2B: usize = 3;
const E3: usize = 4;
const BOT: usize = 5;
const U2: usize = 6;
const U1: usize = 7;
const U0: usize = 8;
const OUT: usize = 9;
const T1: usize = 10;
const T2: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Conv(ConvShape),
    Dense { inp: usize, out: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    name: &'static str,
    kind: Kind,
    w_off: usize,
    b_off: usize,
}

impl Layer {
    fn weight_len(&self) -> usize {
        match self.kind {
            Kind::Conv(s) => s.weight_len(),
            Kind::Dense { inp, out } => inp * out,
        }
    }

    fn bias_len(&self) -> usize {
        match self.kind {
            Kind::Conv(s) => s.cout,
            Kind::Dense { out, .. } => out,
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            Kind::Conv(s) => s.cin * s.k * s.k,
            Kind::Dense { inp, .. } => inp,
        }
    }

    fn conv(&self) -> ConvShape {
        match self.kind {
            Kind::Conv(s) => s,
            Kind::Dense { .. } => unreachable!("{} is dense", self.name),
        }
    }
}

/// Named slice of the flat parameter vector, as listed in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayer {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

/// Global-average-pooled bottleneck activations.
pub type Embedding = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: NetConfig,
    pub in_channels: usize,
    layers: Vec<Layer>,
    pub params: Vec<T>,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct FcnOutput<T> {
    /// Sigmoid heatmap, `H × W`.
    pub heatmap: Vec<T>,
    pub embedding: Vec<T>,
    pub height: usize,
    pub width: usize,
    x0: Tensor<T>,
    a1: Tensor<T>,
    s1: Tensor<T>,
    a2: Tensor<T>,
    s2: Tensor<T>,
    a3: Tensor<T>,
    b: Tensor<T>,
    c2: Tensor<T>,
    d2: Tensor<T>,
    c1: Tensor<T>,
    d1: Tensor<T>,
    c0: Tensor<T>,
    d0: Tensor<T>,
}

/// Hidden activations of the trajectory head.
#[derive(Debug, Clone)]
pub struct HeadOutput<T> {
    pub output: Vec<T>,
    input: Vec<T>,
    hidden: Vec<T>,
}

fn build_layers(cin: usize, cfg: &NetConfig) -> (Vec<Layer>, usize) {
    let [w0, w1, w2, w3] = cfg.widths;
    let conv = |cin, cout, k, stride| Kind::Conv(ConvShape { cin, cout, k, stride });
    let specs = [
        ("enc1", conv(cin, w1, 3, 2)),
        ("enc1b", conv(w1, w1, 3, 1)),
        ("enc2", conv(w1, w2, 3, 2)),
        ("enc2b", conv(w2, w2, 3, 1)),
        ("enc3", conv(w2, w3, 3, 2)),
        ("bottleneck", conv(w3, w3, 3, 1)),
        ("dec2", conv(w3 + w2, w2, 3, 1)),
        ("dec1", conv(w2 + w1, w1, 3, 1)),
        ("dec0", conv(w1 + cin, w0, 3, 1)),
        ("out", conv(w0, 1, 1, 1)),
        (
            "traj1",
            Kind::Dense {
                inp: HEAD_STATE + w3,
                out: cfg.head_hidden,
            },
        ),
        (
            "traj2",
            Kind::Dense {
                inp: cfg.head_hidden,
                out: TRAJ_OUTPUTS,
            },
        ),
    ];
    let mut off = 0;
    let layers = specs
        .into_iter()
        .map(|(name, kind)| {
            let mut l = Layer {
                name,
                kind,
                w_off: off,
                b_off: 0,
            };
            l.b_off = off + l.weight_len();
            off = l.b_off + l.bias_len();
            l
        })
        .collect();
    (layers, off)
}

impl<T: Real> Model<T> {
    /// Fan-in scaled uniform weights, zero biases, zero output layers.
    pub fn new(in_channels: usize, config: NetConfig) -> Result<Self> {
        let mut m = Model::zeros(in_channels, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(m.config.init_seed);
        for (i, l) in m.layers.iter().enumerate() {
            if i == OUT || i == T2 {
                continue;
            }
            let bound = (6.0 / l.fan_in() as f64).sqrt();
            for p in &mut m.params[l.w_off..l.w_off + l.weight_len()] {
                *p = T::of(rng.gen_range(-bound..bound));
            }
        }
        Ok(m)
    }

    pub fn zeros(in_channels: usize, config: NetConfig) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 {
            return Err(Error::Config("network needs at least one input channel".into()));
        }
        let (layers, n) = build_layers(in_channels, &config);
        Ok(Model {
            config,
            in_channels,
            layers,
            params: vec![T::zero(); n],
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn param_layers(&self) -> Vec<ParamLayer> {
        let mut out = Vec::new();
        for l in &self.layers {
            let wshape = match l.kind {
                Kind::Conv(s) => vec![s.cout, s.cin, s.k, s.k],
                Kind::Dense { inp, out } => vec![out, inp],
            };
            out.push(ParamLayer {
                name: format!("{}.weight", l.name),
                shape: wshape,
                offset: l.w_off,
            });
            out.push(ParamLayer {
                name: format!("{}.bias", l.name),
                shape: vec![l.bias_len()],
                offset: l.b_off,
            });
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            in_channels: self.in_channels,
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| U::of(p.f64())).collect(),
        }
    }

    fn w(&self, i: usize) -> &[T] {
        let l = &self.layers[i];
        &self.params[l.w_off..l.w_off + l.weight_len()]
    }

    fn b(&self, i: usize) -> &[T] {
        let l = &self.layers[i];
        &self.params[l.b_off..l.b_off + l.bias_len()]
    }

    fn conv(&self, i: usize, x: &Tensor<T>, relu: bool) -> Tensor<T> {
        let mut y = conv_forward(x, &self.layers[i].conv(), self.w(i), self.b(i));
        if relu {
            y.relu_inplace();
        }
        y
    }

    pub fn check_input(&self, c: usize, h: usize, w: usize) -> Result<()> {
        if c != self.in_channels {
            return Err(Error::Dimension(format!(
                "raster has {c} channels, network expects {}",
                self.in_channels
            )));
        }
        if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
            return Err(Error::Dimension(format!(
                "raster {h}x{w} must be a positive multiple of 8 on each side"
            )));
        }
        Ok(())
    }

    pub fn input_tensor(&self, r: &BevRaster) -> Result<Tensor<T>> {
        self.check_input(r.channels, r.height, r.width)?;
        Ok(Tensor {
            c: r.channels,
            h: r.height,
            w: r.width,
            data: r.data.iter().map(|v| T::of(*v as f64)).collect(),
        })
    }

    pub fn forward(&self, x0: Tensor<T>) -> Result<FcnOutput<T>> {
        self.check_input(x0.c, x0.h, x0.w)?;
        let a1 = self.conv(E1, &x0, true);
        let s1 = self.conv(E1B, &a1, true);
        let a2 = self.conv(E2, &s1, true);
        let s2 = self.conv(E2B, &a2, true);
        let a3 = self.conv(E3, &s2, true);
        let b = self.conv(BOT, &a3, true);
        let embedding = b.global_mean();
        let c2 = Tensor::concat(&b.upsample2(), &s2);
        let d2 = self.conv(U2, &c2, true);
        let c1 = Tensor::concat(&d2.upsample2(), &s1);
        let d1 = self.conv(U1, &c1, true);
        let c0 = Tensor::concat(&d1.upsample2(), &x0);
        let d0 = self.conv(U0, &c0, true);
        let z = self.conv(OUT, &d0, false);
        let heatmap = z
            .data
            .iter()
            .map(|v| T::one() / (T::one() + (-*v).exp()))
            .collect();
        Ok(FcnOutput {
            heatmap,
            embedding,
            height: x0.h,
            width: x0.w,
            x0,
            a1,
            s1,
            a2,
            s2,
            a3,
            b,
            c2,
            d2,
            c1,
            d1,
            c0,
            d0,
        })
    }

    /// Heatmap and embedding for a raster.
    pub fn fcn_forward(&self, r: &BevRaster) -> Result<(Heatmap, Embedding)> {
        let out = self.forward(self.input_tensor(r)?)?;
        let heat = Heatmap {
            height: out.height,
            width: out.width,
            data: out.heatmap.iter().map(|v| v.f64()).collect(),
        };
        Ok((heat, out.embedding.iter().map(|v| v.f64()).collect()))
    }

    fn conv_back(
        &self,
        i: usize,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: &mut [T],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let l = &self.layers[i];
        let (gw, gb) = grads[l.w_off..l.b_off + l.bias_len()].split_at_mut(l.weight_len());
        conv_backward(x, &l.conv(), self.w(i), dy, gw, gb, need_dx)
    }

    /// Accumulates parameter gradients given `∂L/∂heatmap` and `∂L/∂embedding`.
    pub fn backward(&self, f: &FcnOutput<T>, d_heat: &[T], d_emb: &[T], grads: &mut [T]) {
        let n = f.height * f.width;
        let mut dz = Tensor::zeros(1, f.height, f.width);
        for i in 0..n {
            let y = f.heatmap[i];
            dz.data[i] = d_heat[i] * y * (T::one() - y);
        }
        let mut dd0 = self.conv_back(OUT, &f.d0, &dz, grads, true).unwrap();
        dd0.relu_backward(&f.d0);
        let dc0 = self.conv_back(U0, &f.c0, &dd0, grads, true).unwrap();
        let (dup1, _) = dc0.split(f.d1.c);
        let mut dd1 = dup1.downsum2();
        dd1.relu_backward(&f.d1);
        let dc1 = self.conv_back(U1, &f.c1, &dd1, grads, true).unwrap();
        let (dup2, mut ds1) = dc1.split(f.d2.c);
        let mut dd2 = dup2.downsum2();
        dd2.relu_backward(&f.d2);
        let dc2 = self.conv_back(U2, &f.c2, &dd2, grads, true).unwrap();
        let (dupb, mut ds2) = dc2.split(f.b.c);
        let mut db = dupb.downsum2();
        let plane = f.b.plane();
        let inv = T::one() / T::of(plane as f64);
        for (c, g) in d_emb.iter().enumerate() {
            for v in &mut db.data[c * plane..(c + 1) * plane] {
                *v += *g * inv;
            }
        }
        db.relu_backward(&f.b);
        let mut da3 = self.conv_back(BOT, &f.a3, &db, grads, true).unwrap();
        da3.relu_backward(&f.a3);
        ds2.add_assign(&self.conv_back(E3, &f.s2, &da3, grads, true).unwrap());
        ds2.relu_backward(&f.s2);
        let mut da2 = self.conv_back(E2B, &f.a2, &ds2, grads, true).unwrap();
        da2.relu_backward(&f.a2);
        ds1.add_assign(&self.conv_back(E2, &f.s1, &da2, grads, true).unwrap());
        ds1.relu_backward(&f.s1);
        let mut da1 = self.conv_back(E1B, &f.a1, &ds1, grads, true).unwrap();
        da1.relu_backward(&f.a1);
        self.conv_back(E1, &f.x0, &da1, grads, false);
    }

    /// Head input: goal position and speed (scaled) followed by the embedding.
    pub fn head_input(goal_local: Vec2, speed: f64, emb: &[T]) -> Vec<T> {
        let mut v = Vec::with_capacity(HEAD_STATE + emb.len());
        v.push(T::of(goal_local.x / METRIC_SCALE));
        v.push(T::of(goal_local.y / METRIC_SCALE));
        v.push(T::of(speed / METRIC_SCALE));
        v.extend_from_slice(emb);
        v
    }

    fn dense(&self, i: usize, x: &[T]) -> Vec<T> {
        let Kind::Dense { inp, out } = self.layers[i].kind else {
            unreachable!()
        };
        let w = self.w(i);
        let b = self.b(i);
        (0..out)
            .map(|o| {
                let row = &w[o * inp..(o + 1) * inp];
                b[o] + row.iter().zip(x).map(|(a, b)| *a * *b).sum::<T>()
            })
            .collect()
    }

    pub fn head_forward(&self, input: Vec<T>) -> HeadOutput<T> {
        let mut hidden = self.dense(T1, &input);
        for v in &mut hidden {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        let output = self.dense(T2, &hidden);
        HeadOutput {
            output,
            input,
            hidden,
        }
    }

    fn dense_back(&self, i: usize, x: &[T], dy: &[T], grads: &mut [T]) -> Vec<T> {
        let l = &self.layers[i];
        let Kind::Dense { inp, .. } = l.kind else {
            unreachable!()
        };
        let w = self.w(i);
        let mut dx = vec![T::zero(); inp];
        for (o, g) in dy.iter().enumerate() {
            grads[l.b_off + o] += *g;
            let gw = &mut grads[l.w_off + o * inp..l.w_off + (o + 1) * inp];
            for j in 0..inp {
                gw[j] += *g * x[j];
                dx[j] += *g * w[o * inp + j];
            }
        }
        dx
    }

    /// Accumulates head gradients and returns `∂L/∂embedding`.
    pub fn head_backward(&self, h: &HeadOutput<T>, d_out: &[T], grads: &mut [T]) -> Vec<T> {
        let mut dh = self.dense_back(T2, &h.hidden, d_out, grads);
        for (g, v) in dh.iter_mut().zip(&h.hidden) {
            if *v <= T::zero() {
                *g = T::zero();
            }
        }
        let dx = self.dense_back(T1, &h.input, &dh, grads);
        dx[HEAD_STATE..].to_vec()
    }

    /// Waypoints for a goal given in the rendering frame. Poses are relative
    /// to the current ego pose, one per 0.1 s.
    pub fn trajectory_head(&self, goal_local: Vec2, speed: f64, emb: &[f64]) -> Trajectory {
        let emb: Vec<T> = emb.iter().map(|v| T::of(*v)).collect();
        let out = self.head_forward(Self::head_input(goal_local, speed, &emb)).output;
        let base = head_baseline(goal_local);
        let enc: Vec<f64> = out.iter().zip(&base).map(|(o, b)| o.f64() + *b as f64).collect();
        decode_waypoints(&enc)
    }
}

/// Encoded arc from the ego to `goal_local`; the head output is added to it.
pub fn head_baseline(goal_local: Vec2) -> Vec<f32> {
    encode_waypoints(&super::kinematic::goal_arc(goal_local))
}

/// Encodes waypoints relative to the ego.
pub fn encode_waypoints(poses: &[Pose]) -> Vec<f32> {
    poses
        .iter()
        .flat_map(|p| {
            [
                (p.x / METRIC_SCALE) as f32,
                (p.y / METRIC_SCALE) as f32,
                p.yaw as f32,
            ]
        })
        .collect()
}

pub fn decode_waypoints<T: Real>(out: &[T]) -> Trajectory {
    let poses = out
        .chunks_exact(3)
        .map(|c| {
            Pose::new(
                c[0].f64() * METRIC_SCALE,
                c[1].f64() * METRIC_SCALE,
                c[2].f64(),
            )
        })
        .collect();
    Trajectory::new(poses, FRAME_DT).expect("head emits a non-empty trajectory")
}
