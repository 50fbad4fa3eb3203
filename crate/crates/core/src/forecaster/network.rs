//! LSTM over the lag sequence, concatenated with the calendar block and fed
//! through two ReLU layers to a linear output. Columns are samples.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Layer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub lags: usize,
    pub hidden: usize,
    pub dense1: usize,
    pub dense2: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            lags: 24,
            hidden: 50,
            dense1: 64,
            dense2: 32,
        }
    }
}

impl Architecture {
    pub const CALENDAR_FIELDS: usize = 3;

    pub fn context_len(&self) -> usize {
        self.lags * Self::CALENDAR_FIELDS
    }

    /// (rows, cols) of each parameter tensor in [`Params::tensors`] order.
    pub fn shapes(&self) -> [(usize, usize); 9] {
        let h = self.hidden;
        [
            (4 * h, 1),
            (4 * h, h),
            (4 * h, 1),
            (self.dense1, h + self.context_len()),
            (self.dense1, 1),
            (self.dense2, self.dense1),
            (self.dense2, 1),
            (1, self.dense2),
            (1, 1),
        ]
    }
}

pub const PARAM_NAMES: [&str; 9] = [
    "lstm_input",
    "lstm_recurrent",
    "lstm_bias",
    "dense1_weight",
    "dense1_bias",
    "dense2_weight",
    "dense2_bias",
    "output_weight",
    "output_bias",
];

/// Network weights. LSTM gates are stacked i, f, g, o.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub wx: DMatrix<f64>,
    pub wh: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DMatrix<f64>,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        let s = arch.shapes();
        let z = |i: usize| DMatrix::zeros(s[i].0, s[i].1);
        Self {
            wx: z(0),
            wh: z(1),
            b: z(2),
            w1: z(3),
            b1: z(4),
            w2: z(5),
            b2: z(6),
            w3: z(7),
            b3: z(8),
        }
    }

    /// Glorot-uniform weights, zero biases except a unit forget-gate bias.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        for (i, m) in p.tensors_mut().into_iter().enumerate() {
            if matches!(i, 2 | 4 | 6 | 8) {
                continue;
            }
            let limit = (6.0 / (m.nrows() + m.ncols()) as f64).sqrt();
            m.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
        }
        let h = arch.hidden;
        p.b.rows_mut(h, h).fill(1.0);
        p
    }

    pub fn from_tensors(arch: &Architecture, tensors: Vec<DMatrix<f64>>) -> Option<Self> {
        if tensors.len() != 9 || tensors.iter().zip(arch.shapes()).any(|(m, s)| m.shape() != s) {
            return None;
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        Some(Self {
            wx: next(),
            wh: next(),
            b: next(),
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
            w3: next(),
            b3: next(),
        })
    }

    pub fn tensors(&self) -> [&DMatrix<f64>; 9] {
        [
            &self.wx, &self.wh, &self.b, &self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut DMatrix<f64>; 9] {
        [
            &mut self.wx,
            &mut self.wh,
            &mut self.b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Inputs for a batch: `seq[t]` is 1×B, `context` is (3L)×B.
pub struct Batch {
    pub seq: Vec<DMatrix<f64>>,
    pub context: DMatrix<f64>,
}

struct StepCache {
    i: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    o: DMatrix<f64>,
    c: DMatrix<f64>,
    tanh_c: DMatrix<f64>,
}

struct ForwardCache {
    steps: Vec<StepCache>,
    hs: Vec<DMatrix<f64>>,
    u: DMatrix<f64>,
    z1: DMatrix<f64>,
    a1: DMatrix<f64>,
    z2: DMatrix<f64>,
    a2: DMatrix<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn add_bias(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        col += b.column(0);
    }
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

fn forward_cached(p: &Params, batch: &Batch) -> (DMatrix<f64>, ForwardCache) {
    let hdim = p.wh.ncols();
    let bsz = batch.context.ncols();
    let mut h = DMatrix::zeros(hdim, bsz);
    let mut c = DMatrix::zeros(hdim, bsz);
    let mut steps = Vec::with_capacity(batch.seq.len());
    let mut hs = Vec::with_capacity(batch.seq.len() + 1);
    hs.push(h.clone());
    for x in &batch.seq {
        let mut z = &p.wx * x + &p.wh * &h;
        add_bias(&mut z, &p.b);
        let i = z.rows(0, hdim).map(sigmoid);
        let f = z.rows(hdim, hdim).map(sigmoid);
        let g = z.rows(2 * hdim, hdim).map(f64::tanh);
        let o = z.rows(3 * hdim, hdim).map(sigmoid);
        c = f.component_mul(&c) + i.component_mul(&g);
        let tanh_c = c.map(f64::tanh);
        h = o.component_mul(&tanh_c);
        hs.push(h.clone());
        steps.push(StepCache {
            i,
            f,
            g,
            o,
            c: c.clone(),
            tanh_c,
        });
    }
    let mut u = DMatrix::zeros(hdim + batch.context.nrows(), bsz);
    u.rows_mut(0, hdim).copy_from(&h);
    u.rows_mut(hdim, batch.context.nrows()).copy_from(&batch.context);
    let mut z1 = &p.w1 * &u;
    add_bias(&mut z1, &p.b1);
    let a1 = relu(&z1);
    let mut z2 = &p.w2 * &a1;
    add_bias(&mut z2, &p.b2);
    let a2 = relu(&z2);
    let mut y = &p.w3 * &a2;
    add_bias(&mut y, &p.b3);
    (
        y,
        ForwardCache {
            steps,
            hs,
            u,
            z1,
            a1,
            z2,
            a2,
        },
    )
}

/// Network output (1×B), in normalized load units.
pub fn forward(p: &Params, batch: &Batch) -> DMatrix<f64> {
    forward_cached(p, batch).0
}

fn row_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), 1, |r, _| m.row(r).sum())
}

/// Mean squared error over the batch and its gradient.
pub fn loss_and_gradient(p: &Params, batch: &Batch, target: &DMatrix<f64>) -> (f64, Params) {
    let bsz = target.ncols() as f64;
    let (y, cache) = forward_cached(p, batch);
    let err = &y - target;
    let loss = err.norm_squared() / bsz;
    let mut g = Params::zeros(&Architecture {
        lags: batch.seq.len(),
        hidden: p.wh.ncols(),
        dense1: p.w1.nrows(),
        dense2: p.w2.nrows(),
    });

    let dy = err * (2.0 / bsz);
    g.w3 = &dy * cache.a2.transpose();
    g.b3 = row_sums(&dy);
    let mut dz2 = p.w3.transpose() * &dy;
    dz2.zip_apply(&cache.z2, |d, z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    g.w2 = &dz2 * cache.a1.transpose();
    g.b2 = row_sums(&dz2);
    let mut dz1 = p.w2.transpose() * &dz2;
    dz1.zip_apply(&cache.z1, |d, z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    g.w1 = &dz1 * cache.u.transpose();
    g.b1 = row_sums(&dz1);
    let du = p.w1.transpose() * &dz1;

    let hdim = p.wh.ncols();
    let mut dh: DMatrix<f64> = du.rows(0, hdim).into_owned();
    let mut dc_next: DMatrix<f64> = DMatrix::zeros(hdim, dh.ncols());
    let mut dz = DMatrix::zeros(4 * hdim, dh.ncols());
    for t in (0..cache.steps.len()).rev() {
        let s = &cache.steps[t];
        let c_prev = if t == 0 {
            DMatrix::zeros(hdim, dh.ncols())
        } else {
            cache.steps[t - 1].c.clone()
        };
        let dc = &dc_next + dh.component_mul(&s.o).component_mul(&s.tanh_c.map(|v| 1.0 - v * v));
        let d_o = dh.component_mul(&s.tanh_c);
        let d_i = dc.component_mul(&s.g);
        let d_g = dc.component_mul(&s.i);
        let d_f = dc.component_mul(&c_prev);
        dc_next = dc.component_mul(&s.f);
        dz.rows_mut(0, hdim)
            .copy_from(&d_i.component_mul(&s.i.map(|v| v * (1.0 - v))));
        dz.rows_mut(hdim, hdim)
            .copy_from(&d_f.component_mul(&s.f.map(|v| v * (1.0 - v))));
        dz.rows_mut(2 * hdim, hdim)
            .copy_from(&d_g.component_mul(&s.g.map(|v| 1.0 - v * v)));
        dz.rows_mut(3 * hdim, hdim)
            .copy_from(&d_o.component_mul(&s.o.map(|v| v * (1.0 - v))));
        g.wx += &dz * batch.seq[t].transpose();
        g.wh += &dz * cache.hs[t].transpose();
        g.b += row_sums(&dz);
        dh = p.wh.transpose() * &dz;
    }
    (loss, g)
}

/// Adam with the usual defaults β₁ = 0.9, β₂ = 0.999, ε = 1e-7.
pub struct Adam {
    lr: f64,
    step: i32,
    m: Params,
    v: Params,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-7;

    pub fn new(arch: &Architecture, lr: f64) -> Self {
        Self {
            lr,
            step: 0,
            m: Params::zeros(arch),
            v: Params::zeros(arch),
        }
    }

    pub fn update(&mut self, p: &mut Params, g: &Params) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let lr = self.lr * c2.sqrt() / c1;
        for (((w, g), m), v) in p
            .tensors_mut()
            .into_iter()
            .zip(g.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for k in 0..w.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                w[k] -= lr * m[k] / (v[k].sqrt() + Self::EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn tiny() -> (Architecture, Params, Batch, DMatrix<f64>) {
        let arch = Architecture {
            lags: 3,
            hidden: 4,
            dense1: 5,
            dense2: 3,
        };
        let mut rng = StdRng::seed_from_u64(7);
        let mut p = Params::init(&arch, &mut rng);
        // non-zero biases so every path is exercised
        for m in [&mut p.b1, &mut p.b2, &mut p.b3] {
            m.iter_mut().for_each(|v| *v = rng.random_range(0.05..0.2));
        }
        let bsz = 2;
        let seq = (0..arch.lags)
            .map(|_| DMatrix::from_fn(1, bsz, |_, _| rng.random_range(0.0..1.0)))
            .collect();
        let context = DMatrix::from_fn(arch.context_len(), bsz, |_, _| rng.random_range(0.0..1.0));
        let target = DMatrix::from_fn(1, bsz, |_, _| rng.random_range(0.0..1.0));
        (arch, p, Batch { seq, context }, target)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, p, batch, target) = tiny();
        let (_, g) = loss_and_gradient(&p, &batch, &target);
        let h = 1e-6;
        for (ti, gt) in g.tensors().iter().enumerate() {
            for k in 0..gt.len() {
                let mut plus = p.clone();
                plus.tensors_mut()[ti][k] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti][k] -= h;
                let fd = (loss_and_gradient(&plus, &batch, &target).0 - loss_and_gradient(&minus, &batch, &target).0)
                    / (2.0 * h);
                assert!(
                    (fd - gt[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{} [{k}]: fd {fd} vs {}",
                    PARAM_NAMES[ti],
                    gt[k]
                );
            }
        }
    }

    #[test]
    fn adam_reduces_loss() {
        let (arch, mut p, batch, target) = tiny();
        let mut adam = Adam::new(&arch, 1e-2);
        let first = loss_and_gradient(&p, &batch, &target).0;
        for _ in 0..200 {
            let (_, g) = loss_and_gradient(&p, &batch, &target);
            adam.update(&mut p, &g);
        }
        assert!(loss_and_gradient(&p, &batch, &target).0 < 0.1 * first);
    }

    #[test]
    fn shapes_round_trip() {
        let arch = Architecture::default();
        let p = Params::init(&arch, &mut StdRng::seed_from_u64(1));
        let t: Vec<_> = p.tensors().iter().map(|m| (*m).clone()).collect();
        assert_eq!(Params::from_tensors(&arch, t.clone()).unwrap(), p);
        let mut bad = t;
        bad[3] = DMatrix::zeros(2, 2);
        assert!(Params::from_tensors(&arch, bad).is_none());
    }
}
