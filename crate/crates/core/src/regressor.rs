//! Small dense regressor: one tanh hidden layer, linear multi-output head,
//! per-feature standardization, Adam mini-batch training.
//!
//! Shared by the load forecaster and the plant surrogate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    /// Columns with (near) zero spread keep scale 1 so they pass through
    /// centred but unscaled.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Normalizer> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / n).sqrt();
                if sd > 1e-9 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Normalizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Indices of columns that were constant at fit time.
    pub fn constant_columns(&self, rows: &[Vec<f64>]) -> Vec<usize> {
        (0..self.dim())
            .filter(|&j| rows.iter().all(|r| r[j] == rows[0][j]))
            .collect()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

/// Weights are row-major: `w1[h * n_in + i]`, `w2[o * n_hidden + h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Mlp {
    /// Glorot-normal weights, zero biases.
    pub fn new(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Mlp {
        let s1 = (2.0 / (n_in + n_hidden) as f64).sqrt();
        let s2 = (2.0 / (n_hidden + n_out) as f64).sqrt();
        let d1 = Normal::new(0.0, s1).expect("finite sd");
        let d2 = Normal::new(0.0, s2).expect("finite sd");
        Mlp {
            n_in,
            n_hidden,
            n_out,
            w1: (0..n_in * n_hidden).map(|_| d1.sample(rng)).collect(),
            b1: vec![0.0; n_hidden],
            w2: (0..n_hidden * n_out).map(|_| d2.sample(rng)).collect(),
            b2: vec![0.0; n_out],
        }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn hidden(&self, x: &[f64], h: &mut [f64]) {
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * self.n_in..(j + 1) * self.n_in];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            *hj = z.tanh();
        }
    }

    fn head(&self, h: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w2[o * self.n_hidden..(o + 1) * self.n_hidden];
            *yo = row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.b2[o];
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.n_hidden];
        let mut y = vec![0.0; self.n_out];
        self.hidden(x, &mut h);
        self.head(&h, &mut y);
        y
    }

    /// Mean squared error over the batch (averaged over outputs too) and
    /// its gradient, laid out like [`Mlp::params`].
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[&[f64]]) -> (f64, Vec<f64>) {
        let (ni, nh, no) = (self.n_in, self.n_hidden, self.n_out);
        let mut g = vec![0.0; self.n_params()];
        let (gw1, rest) = g.split_at_mut(ni * nh);
        let (gb1, rest) = rest.split_at_mut(nh);
        let (gw2, gb2) = rest.split_at_mut(nh * no);
        let mut h = vec![0.0; nh];
        let mut y = vec![0.0; no];
        let mut dy = vec![0.0; no];
        let mut dh = vec![0.0; nh];
        let norm = 1.0 / (xs.len() * no) as f64;
        let mut loss = 0.0;
        for (x, t) in xs.iter().zip(ys) {
            self.hidden(x, &mut h);
            self.head(&h, &mut y);
            for o in 0..no {
                let e = y[o] - t[o];
                loss += e * e * norm;
                dy[o] = 2.0 * e * norm;
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..no {
                gb2[o] += dy[o];
                let wrow = &self.w2[o * nh..(o + 1) * nh];
                let grow = &mut gw2[o * nh..(o + 1) * nh];
                for j in 0..nh {
                    grow[j] += dy[o] * h[j];
                    dh[j] += dy[o] * wrow[j];
                }
            }
            for j in 0..nh {
                let dz = dh[j] * (1.0 - h[j] * h[j]);
                gb1[j] += dz;
                let grow = &mut gw1[j * ni..(j + 1) * ni];
                for (gv, xv) in grow.iter_mut().zip(x.iter()) {
                    *gv += dz * xv;
                }
            }
        }
        (loss, g)
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn apply(&mut self, step: &[f64]) {
        let mut off = 0;
        for block in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            for v in block.iter_mut() {
                *v -= step[off];
                off += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop when the loss improved by less than `min_rel_improvement`
    /// (relative) over the last `patience` epochs.
    pub patience: usize,
    pub min_rel_improvement: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            patience: 10,
            min_rel_improvement: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub converged: bool,
    /// Mean mini-batch loss per epoch, in normalized target units.
    pub loss_trace: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Normalized network plus its input/output scalers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub x_norm: Normalizer,
    pub y_norm: Normalizer,
    pub net: Mlp,
}

impl Regressor {
    pub fn n_in(&self) -> usize {
        self.net.n_in
    }

    pub fn n_out(&self) -> usize {
        self.net.n_out
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in() {
            return Err(Error::DimensionMismatch { expected: self.n_in(), got: x.len() });
        }
        Ok(self.y_norm.denormalize(&self.net.forward(&self.x_norm.normalize(x))))
    }

    pub fn train(xs: &[Vec<f64>], ys: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Regressor, TrainReport)> {
        cfg.validate()?;
        if xs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        let x_norm = Normalizer::fit(xs)?;
        let y_norm = Normalizer::fit(ys)?;
        let zx: Vec<Vec<f64>> = xs.iter().map(|x| x_norm.normalize(x)).collect();
        let zy: Vec<Vec<f64>> = ys.iter().map(|y| y_norm.normalize(y)).collect();
        if zx.iter().chain(&zy).flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite training value".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut net = Mlp::new(x_norm.dim(), cfg.hidden, y_norm.dim(), &mut rng);
        let mut adam = Adam::new(net.n_params(), cfg.learning_rate);
        let mut order: Vec<usize> = (0..zx.len()).collect();
        let mut trace = Vec::new();
        let mut converged = false;
        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let bx: Vec<&[f64]> = chunk.iter().map(|&i| zx[i].as_slice()).collect();
                let by: Vec<&[f64]> = chunk.iter().map(|&i| zy[i].as_slice()).collect();
                let (loss, grad) = net.loss_and_grad(&bx, &by);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged { epoch });
                }
                total += loss * chunk.len() as f64;
                net.apply(&adam.step(&grad));
            }
            let epoch_loss = total / zx.len() as f64;
            if !epoch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            trace.push(epoch_loss);
            if trace.len() > cfg.patience {
                let then = trace[trace.len() - 1 - cfg.patience];
                if then <= 0.0 || (then - epoch_loss) / then < cfg.min_rel_improvement {
                    converged = true;
                    break;
                }
            }
        }
        let report = TrainReport {
            epochs: trace.len(),
            converged,
            loss_trace: trace,
        };
        Ok((Regressor { x_norm, y_norm, net }, report))
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, g: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        g.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&gi, (m, v))| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * gi;
                *v = Self::B2 * *v + (1.0 - Self::B2) * gi * gi;
                self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, ni: usize, no: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs = (0..n).map(|_| (0..ni).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys = (0..n).map(|_| (0..no).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        (xs, ys)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::new(4, 5, 2, &mut rng);
            let (xs, ys) = random_batch(&mut rng, 7, 4, 2);
            let bx: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let by: Vec<&[f64]> = ys.iter().map(Vec::as_slice).collect();
            let (_, grad) = net.loss_and_grad(&bx, &by);
            let p0 = net.params();
            let h = 1e-5;
            for k in 0..p0.len() {
                let mut probe = net.clone();
                let mut p = p0.clone();
                p[k] += h;
                probe.set_params(&p);
                let up = probe.loss_and_grad(&bx, &by).0;
                p[k] -= 2.0 * h;
                probe.set_params(&p);
                let down = probe.loss_and_grad(&bx, &by).0;
                let numeric = (up - down) / (2.0 * h);
                let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
                assert!(rel < 1e-4, "seed {seed} param {k}: analytic {} numeric {numeric}", grad[k]);
            }
        }
    }

    #[test]
    fn learns_a_smooth_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![100.0 + 30.0 * x[0] - 20.0 * x[1] * x[1]]).collect();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let (m, rep) = Regressor::train(&xs, &ys, &cfg).unwrap();
        assert!(rep.final_loss() < 1e-2, "{}", rep.final_loss());
        let p = m.predict(&[0.5, 0.0]).unwrap()[0];
        assert!((p - 115.0).abs() < 2.0, "{p}");
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (xs, ys) = random_batch(&mut rng, 100, 3, 2);
        let cfg = TrainConfig {
            max_epochs: 20,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = Regressor::train(&xs, &ys, &cfg).unwrap();
        let b = Regressor::train(&xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
        let c = Regressor::train(&xs, &ys, &TrainConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let xs: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![1e300 * x[0]]).collect();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        match Regressor::train(&xs, &ys, &cfg) {
            Err(e @ Error::Diverged { .. }) => assert!(e.to_string().contains("learning rate")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn constant_column_is_kept() {
        let rows = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let n = Normalizer::fit(&rows).unwrap();
        assert_eq!(n.scale[1], 1.0);
        assert_eq!(n.constant_columns(&rows), vec![1]);
        assert_eq!(n.normalize(&[2.0, 5.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_checked() {
        let xs = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let ys = vec![vec![1.0], vec![2.0]];
        let (m, _) = Regressor::train(&xs, &ys, &TrainConfig { max_epochs: 1, ..Default::default() }).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    proptest! {
        #[test]
        fn normalize_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 3), 2..20), probe in prop::collection::vec(-1e4f64..1e4, 3)) {
            let n = Normalizer::fit(&rows).unwrap();
            let back = n.denormalize(&n.normalize(&probe));
            for (a, b) in back.iter().zip(&probe) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }
}
