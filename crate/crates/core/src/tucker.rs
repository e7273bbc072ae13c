//! Scalar-on-tensor regression with a Tucker-structured weight tensor,
//! `y = <G x1 U1 x2 U2 x3 U3, X> + b`, fitted by alternating ridge solves.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::kv::{KvError, KvMap};
use crate::nn::{Checkpoint, NnError, Tensor};

#[derive(Debug, Error)]
pub enum TuckerError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{0}")]
    Shape(String),
    #[error("block system for {block} is singular at sweep {sweep}")]
    Singular { block: &'static str, sweep: usize },
    #[error(transparent)]
    Checkpoint(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerConfig {
    pub ranks: [usize; 3],
    pub lambda: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Independent initialisations tried from `seed`, `seed + 1`, ...;
    /// the one ending at the lowest objective is kept.
    pub restarts: usize,
}

impl Default for TuckerConfig {
    fn default() -> Self {
        Self { ranks: [4, 3, 3], lambda: 1e-3, max_sweeps: 100, tolerance: 1e-6, seed: 0, restarts: 4 }
    }
}

impl TuckerConfig {
    pub fn from_kv(mut kv: KvMap) -> Result<Self, KvError> {
        let mut c = Self::default();
        let mut ranks = c.ranks.to_vec();
        kv.take_list("ranks", &mut ranks)?;
        c.ranks = ranks.try_into().map_err(|_| KvError::Invalid { key: "ranks".into(), message: "need three ranks".into() })?;
        kv.take("lambda", &mut c.lambda)?;
        kv.take("max_sweeps", &mut c.max_sweeps)?;
        kv.take("tolerance", &mut c.tolerance)?;
        kv.take("seed", &mut c.seed)?;
        kv.take("restarts", &mut c.restarts)?;
        kv.finish()?;
        if c.restarts == 0 {
            return Err(KvError::Invalid { key: "restarts".into(), message: "must be >= 1".into() });
        }
        if !(c.lambda >= 0.0) {
            return Err(KvError::Invalid { key: "lambda".into(), message: "must be >= 0".into() });
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerWeights {
    pub dims: [usize; 3],
    pub ranks: [usize; 3],
    /// `[r1][r2][r3]`.
    pub core: Vec<f64>,
    /// `factors[i]` is `dims[i] x ranks[i]`, row-major.
    pub factors: [Vec<f64>; 3],
    pub bias: f64,
}

/// Contracts mode `i` of `x` with `factors[i]` (when given), turning that
/// extent from `d_i` into `r_i`.
fn contract(x: &[f64], dims: [usize; 3], factors: [Option<(&[f64], usize)>; 3]) -> (Vec<f64>, [usize; 3]) {
    let mut cur = x.to_vec();
    let mut shape = dims;
    for mode in 0..3 {
        let Some((u, r)) = factors[mode] else { continue };
        let mut out_shape = shape;
        out_shape[mode] = r;
        let mut out = vec![0.0; out_shape.iter().product()];
        let [s0, s1, s2] = shape;
        for i in 0..s0 {
            for j in 0..s1 {
                for k in 0..s2 {
                    let v = cur[(i * s1 + j) * s2 + k];
                    if v == 0.0 {
                        continue;
                    }
                    let idx = [i, j, k];
                    let row = &u[idx[mode] * r..(idx[mode] + 1) * r];
                    for (q, &uq) in row.iter().enumerate() {
                        let mut o = idx;
                        o[mode] = q;
                        out[(o[0] * out_shape[1] + o[1]) * out_shape[2] + o[2]] += uq * v;
                    }
                }
            }
        }
        cur = out;
        shape = out_shape;
    }
    (cur, shape)
}

impl TuckerWeights {
    pub fn zeros(dims: [usize; 3], ranks: [usize; 3]) -> Self {
        Self {
            dims,
            ranks,
            core: vec![0.0; ranks.iter().product()],
            factors: [0, 1, 2].map(|i| vec![0.0; dims[i] * ranks[i]]),
            bias: 0.0,
        }
    }

    fn validate(&self) -> Result<(), TuckerError> {
        for i in 0..3 {
            if self.ranks[i] == 0 || self.ranks[i] > self.dims[i] {
                return Err(TuckerError::Shape(format!("rank {} invalid for extent {}", self.ranks[i], self.dims[i])));
            }
            if self.factors[i].len() != self.dims[i] * self.ranks[i] {
                return Err(TuckerError::Shape(format!("factor {} has {} entries", i + 1, self.factors[i].len())));
            }
        }
        if self.core.len() != self.ranks.iter().product::<usize>() {
            return Err(TuckerError::Shape(format!("core has {} entries", self.core.len())));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.dims.iter().product()
    }

    fn factor(&self, i: usize) -> Option<(&[f64], usize)> {
        Some((&self.factors[i], self.ranks[i]))
    }

    /// Contracts `x` along the factors first; the full weight tensor is never
    /// formed.
    pub fn predict(&self, x: &[f64]) -> Result<f64, TuckerError> {
        if x.len() != self.input_len() {
            return Err(TuckerError::Shape(format!("input has {} values, expected {}", x.len(), self.input_len())));
        }
        let (z, _) = contract(x, self.dims, [self.factor(0), self.factor(1), self.factor(2)]);
        Ok(z.iter().zip(&self.core).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    /// The dense `d1 x d2 x d3` weight tensor.
    pub fn full_weight(&self) -> Vec<f64> {
        let [d0, d1, d2] = self.dims;
        let [r0, r1, r2] = self.ranks;
        let mut w = vec![0.0; d0 * d1 * d2];
        for i in 0..d0 {
            for j in 0..d1 {
                for k in 0..d2 {
                    let mut s = 0.0;
                    for a in 0..r0 {
                        for b in 0..r1 {
                            for c in 0..r2 {
                                s += self.core[(a * r1 + b) * r2 + c]
                                    * self.factors[0][i * r0 + a]
                                    * self.factors[1][j * r1 + b]
                                    * self.factors[2][k * r2 + c];
                            }
                        }
                    }
                    w[(i * d1 + j) * d2 + k] = s;
                }
            }
        }
        w
    }

    fn penalty(&self) -> f64 {
        self.core.iter().chain(self.factors.iter().flatten()).map(|v| v * v).sum()
    }

    /// Entries `core`, `u1`, `u2`, `u3`, `bias` under `prefix/`.
    pub fn to_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        let [r0, r1, r2] = self.ranks;
        let put = |ck: &mut Checkpoint, name: &str, shape: &[usize], data: &[f64]| {
            ck.put(&format!("{prefix}/{name}"), &Tensor::from_vec(shape, data.to_vec()).expect("tucker shapes are consistent"));
        };
        put(ck, "core", &[r0, r1, r2], &self.core);
        for i in 0..3 {
            put(ck, &format!("u{}", i + 1), &[self.dims[i], self.ranks[i]], &self.factors[i]);
        }
        put(ck, "bias", &[1], &[self.bias]);
    }

    pub fn from_checkpoint(prefix: &str, ck: &Checkpoint) -> Result<Self, TuckerError> {
        let get = |name: &str| ck.tensor::<f64>(&format!("{prefix}/{name}"));
        let core = get("core")?;
        let factors = [get("u1")?, get("u2")?, get("u3")?];
        let bias = get("bias")?;
        if core.shape().len() != 3 || factors.iter().any(|f| f.shape().len() != 2) || bias.len() != 1 {
            return Err(TuckerError::Shape(format!("{prefix}: malformed Tucker entries")));
        }
        let w = Self {
            dims: [0, 1, 2].map(|i| factors[i].shape()[0]),
            ranks: [0, 1, 2].map(|i| factors[i].shape()[1]),
            bias: bias.data()[0],
            core: core.data().to_vec(),
            factors: factors.map(|f| f.into_data()),
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFit {
    pub weights: TuckerWeights,
    /// Objective after initialisation, then after every sweep.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl TuckerFit {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().unwrap()
    }
}

/// Ridge solve `(A^T A + lambda D) w = A^T y` where `D` is the identity
/// except for unpenalised trailing columns.
fn ridge(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, free_tail: usize) -> Option<DVector<f64>> {
    let mut gram = a.transpose() * a;
    let n = gram.nrows();
    for d in 0..n - free_tail {
        gram[(d, d)] += lambda;
    }
    let rhs = a.transpose() * y;
    gram.cholesky().map(|c| c.solve(&rhs))
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    dims: [usize; 3],
    lambda: f64,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn sample(&self, s: usize) -> &[f64] {
        let d: usize = self.dims.iter().product();
        &self.x[s * d..(s + 1) * d]
    }

    fn objective(&self, w: &TuckerWeights) -> f64 {
        let sse: f64 = (0..self.n()).map(|s| (self.y[s] - w.predict(self.sample(s)).unwrap()).powi(2)).sum();
        sse + self.lambda * w.penalty()
    }

    /// Design row for factor `mode`: `phi[j * r + q]` is the derivative of
    /// the prediction with respect to `U_mode[j][q]`.
    fn factor_design(&self, w: &TuckerWeights, mode: usize) -> DMatrix<f64> {
        let (d, r) = (self.dims[mode], w.ranks[mode]);
        let mut a = DMatrix::zeros(self.n(), d * r);
        let mut fs = [w.factor(0), w.factor(1), w.factor(2)];
        fs[mode] = None;
        for s in 0..self.n() {
            let (y, shape) = contract(self.sample(s), self.dims, fs);
            for i in 0..shape[0] {
                for j in 0..shape[1] {
                    for k in 0..shape[2] {
                        let v = y[(i * shape[1] + j) * shape[2] + k];
                        let idx = [i, j, k];
                        for q in 0..r {
                            let mut g = idx;
                            g[mode] = q;
                            let core = w.core[(g[0] * w.ranks[1] + g[1]) * w.ranks[2] + g[2]];
                            a[(s, idx[mode] * r + q)] += core * v;
                        }
                    }
                }
            }
        }
        a
    }

    fn core_design(&self, w: &TuckerWeights) -> DMatrix<f64> {
        let m: usize = w.ranks.iter().product();
        let mut a = DMatrix::zeros(self.n(), m + 1);
        for s in 0..self.n() {
            let (z, _) = contract(self.sample(s), self.dims, [w.factor(0), w.factor(1), w.factor(2)]);
            for (q, v) in z.into_iter().enumerate() {
                a[(s, q)] = v;
            }
            a[(s, m)] = 1.0;
        }
        a
    }
}

/// `x` holds `y.len()` samples of `dims` values each, flattened.
pub fn tucker_fit(x: &[f64], y: &[f64], dims: [usize; 3], config: &TuckerConfig) -> Result<TuckerFit, TuckerError> {
    let n = y.len();
    if n < 2 {
        return Err(TuckerError::TooFewSamples(n));
    }
    let d: usize = dims.iter().product();
    if x.len() != n * d {
        return Err(TuckerError::Shape(format!("{} values for {n} samples of {d}", x.len())));
    }
    if !(config.lambda >= 0.0) {
        return Err(TuckerError::Shape(format!("lambda {} must be >= 0", config.lambda)));
    }
    if config.restarts == 0 {
        return Err(TuckerError::Shape("restarts must be >= 1".into()));
    }
    TuckerWeights::zeros(dims, config.ranks).validate()?;
    let problem = Problem { x, y, dims, lambda: config.lambda };
    let mut best: Option<TuckerFit> = None;
    for i in 0..config.restarts {
        let fit = als(&problem, config, config.seed.wrapping_add(i as u64))?;
        if best.as_ref().is_none_or(|b| fit.final_objective() < b.final_objective()) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

fn als(problem: &Problem, config: &TuckerConfig, seed: u64) -> Result<TuckerFit, TuckerError> {
    let y = problem.y;
    let n = y.len();
    let mut w = TuckerWeights::zeros(problem.dims, config.ranks);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in w.factors.iter_mut().flatten().chain(w.core.iter_mut()) {
        *v = StandardNormal.sample(&mut rng);
    }
    w.bias = y.iter().sum::<f64>() / n as f64;

    let target = DVector::from_column_slice(y);
    let mut objective = vec![problem.objective(&w)];
    let mut converged = false;
    for sweep in 1..=config.max_sweeps {
        for (mode, block) in [(0, "U1"), (1, "U2"), (2, "U3")] {
            let a = problem.factor_design(&w, mode);
            let rhs = target.add_scalar(-w.bias);
            let sol = ridge(&a, &rhs, config.lambda, 0).ok_or(TuckerError::Singular { block, sweep })?;
            w.factors[mode].copy_from_slice(sol.as_slice());
        }
        let a = problem.core_design(&w);
        let sol = ridge(&a, &target, config.lambda, 1).ok_or(TuckerError::Singular { block: "core", sweep })?;
        let m = w.core.len();
        w.core.copy_from_slice(&sol.as_slice()[..m]);
        w.bias = sol[m];

        let obj = problem.objective(&w);
        let prev = *objective.last().unwrap();
        objective.push(obj);
        if (prev - obj).abs() <= config.tolerance * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(TuckerFit { weights: w, objective, converged })
}

/// Coefficient of determination of `pred` against `truth`.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}
