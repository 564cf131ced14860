//! Gaussian-process regression with the control-affine composite kernel.
//!
//! The unknown scalar map `h(x, u) = f(x) + g(x) u` gets the prior
//! `k_f(x, x') + u k_g(x, x') u'`. The posterior splits back into separate
//! mean/variance pairs for `f` and `g`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("gram matrix is not positive definite after jitter (N = {0})")]
    NotPositiveDefinite(usize),
    #[error("noise standard deviation must be positive, got {0}")]
    BadNoise(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("error-bound scaling is not finite (tau = {tau})")]
    NonFiniteBeta { tau: f64 },
    #[error("invalid error-bound configuration: {0}")]
    BadBounds(String),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset: {0}")]
    Dataset(String),
}

/// Squared-exponential kernel `s² exp(-½ Σ ((x_j - x'_j)/l_j)²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredExponentialKernel {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
}

impl SquaredExponentialKernel {
    pub fn new(signal_std: f64, lengthscales: Vec<f64>) -> Self {
        Self { signal_variance: signal_std * signal_std, lengthscales }
    }

    /// Same lengthscale on every one of `n` dimensions.
    pub fn isotropic(signal_std: f64, lengthscale: f64, n: usize) -> Self {
        Self::new(signal_std, vec![lengthscale; n])
    }

    pub fn signal_std(&self) -> f64 {
        self.signal_variance.sqrt()
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Panics on dimension mismatch; that is a caller bug, not a data error.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.lengthscales.len(), "kernel: query dimension");
        assert_eq!(y.len(), self.lengthscales.len(), "kernel: query dimension");
        let mut r2 = 0.0;
        for ((a, b), l) in x.iter().zip(y).zip(&self.lengthscales) {
            let d = (a - b) / l;
            r2 += d * d;
        }
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Observed triples `(x_i, u_i, y_i)` with `y_i = f(x_i) + g(x_i) u_i + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub noise_std: f64,
}

impl TrainingSet {
    pub fn empty(noise_std: f64) -> Self {
        Self { states: Vec::new(), inputs: Vec::new(), targets: Vec::new(), noise_std }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, x: &[f64], u: f64, y: f64) {
        self.states.push(x.to_vec());
        self.inputs.push(u);
        self.targets.push(y);
    }

    /// CSV with header `x1,...,xn,u,y`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GpError> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=n).map(|j| format!("x{j}")).collect();
        header.push("u".into());
        header.push("y".into());
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.states[i].iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", self.inputs[i]));
            row.push(format!("{:e}", self.targets[i]));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| GpError::Dataset(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, noise_std: f64) -> Result<Self, GpError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let cols = header.len();
        if cols < 3 || &header[cols - 2] != "u" || &header[cols - 1] != "y" {
            return Err(GpError::Dataset("header must be x1,...,xn,u,y".into()));
        }
        for (j, h) in header.iter().take(cols - 2).enumerate() {
            if h != format!("x{}", j + 1) {
                return Err(GpError::Dataset(format!("unexpected column {h}")));
            }
        }
        let mut set = Self::empty(noise_std);
        for rec in rd.records() {
            let rec = rec?;
            let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| GpError::Dataset(e.to_string()))?;
            set.push(&vals[..cols - 2], vals[cols - 2], vals[cols - 1]);
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), GpError> {
        let f = std::fs::File::create(path).map_err(|e| GpError::Dataset(e.to_string()))?;
        self.write_csv(f)
    }
}

/// Means and standard deviations of the `f` and `g` posteriors at one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean_f: f64,
    pub std_f: f64,
    pub mean_g: f64,
    pub std_g: f64,
}

/// Anything that can answer `f`/`g` posterior queries. Implemented by the GP
/// and by exact-model wrappers used for comparison runs.
pub trait DynamicsModel {
    fn posterior(&self, x: &[f64]) -> Posterior;
}

const REFACTOR_EVERY: usize = 64;

/// Composite GP with a lower Cholesky factor of `K + σ_on² I` and
/// `weights = (K + σ_on² I)⁻¹ y`.
#[derive(Debug, Clone)]
pub struct CompositeGp {
    pub kernel_f: SquaredExponentialKernel,
    pub kernel_g: SquaredExponentialKernel,
    data: TrainingSet,
    chol: DMatrix<f64>,
    weights: DVector<f64>,
    since_refactor: usize,
}

/// Gram entry `k_f(x_i, x_j) + u_i k_g(x_i, x_j) u_j`.
fn gram_entry(
    kf: &SquaredExponentialKernel,
    kg: &SquaredExponentialKernel,
    xi: &[f64],
    ui: f64,
    xj: &[f64],
    uj: f64,
) -> f64 {
    kf.eval(xi, xj) + ui * kg.eval(xi, xj) * uj
}

/// Composite Gram matrix without the noise term.
pub fn composite_gram(
    data: &TrainingSet,
    kernel_f: &SquaredExponentialKernel,
    kernel_g: &SquaredExponentialKernel,
) -> DMatrix<f64> {
    let n = data.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = gram_entry(
                kernel_f,
                kernel_g,
                &data.states[i],
                data.inputs[i],
                &data.states[j],
                data.inputs[j],
            );
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

impl CompositeGp {
    pub fn new(
        kernel_f: SquaredExponentialKernel,
        kernel_g: SquaredExponentialKernel,
        data: TrainingSet,
    ) -> Result<Self, GpError> {
        if kernel_f.dim() != kernel_g.dim() {
            return Err(GpError::Dimension { expected: kernel_f.dim(), got: kernel_g.dim() });
        }
        if !(data.noise_std > 0.0) {
            return Err(GpError::BadNoise(data.noise_std));
        }
        for x in &data.states {
            if x.len() != kernel_f.dim() {
                return Err(GpError::Dimension { expected: kernel_f.dim(), got: x.len() });
            }
        }
        let mut gp = Self {
            kernel_f,
            kernel_g,
            data,
            chol: DMatrix::zeros(0, 0),
            weights: DVector::zeros(0),
            since_refactor: 0,
        };
        gp.refactor()?;
        Ok(gp)
    }

    pub fn empty(
        kernel_f: SquaredExponentialKernel,
        kernel_g: SquaredExponentialKernel,
        noise_std: f64,
    ) -> Result<Self, GpError> {
        Self::new(kernel_f, kernel_g, TrainingSet::empty(noise_std))
    }

    pub fn data(&self) -> &TrainingSet {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kernel_f.dim()
    }

    pub fn noise_std(&self) -> f64 {
        self.data.noise_std
    }

    /// Lower triangular factor of `K + σ_on² I`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    fn noisy_gram(&self) -> DMatrix<f64> {
        let mut k = composite_gram(&self.data, &self.kernel_f, &self.kernel_g);
        let s2 = self.data.noise_std * self.data.noise_std;
        for i in 0..k.nrows() {
            k[(i, i)] += s2;
        }
        k
    }

    fn refactor(&mut self) -> Result<(), GpError> {
        let n = self.data.len();
        let k = self.noisy_gram();
        let chol = match k.clone().cholesky() {
            Some(c) => c,
            None => {
                let jitter = 1e-10
                    * (self.kernel_f.signal_variance
                        + self.kernel_g.signal_variance
                            * self.data.inputs.iter().fold(0.0_f64, |m, u| m.max(u * u)));
                let mut kj = k;
                for i in 0..n {
                    kj[(i, i)] += jitter;
                }
                kj.cholesky().ok_or(GpError::NotPositiveDefinite(n))?
            }
        };
        self.chol = chol.unpack();
        self.since_refactor = 0;
        self.update_weights();
        Ok(())
    }

    fn update_weights(&mut self) {
        let y = DVector::from_column_slice(&self.data.targets);
        let z = self.chol.solve_lower_triangular(&y).expect("nonsingular factor");
        self.weights = self.chol.tr_solve_lower_triangular(&z).expect("nonsingular factor");
    }

    /// Extend the factor by one row. Returns false when the new pivot is not
    /// positive so the caller can refactor from scratch.
    fn extend_factor(&mut self) -> bool {
        let n = self.data.len() - 1;
        let (xn, un) = (&self.data.states[n], self.data.inputs[n]);
        let mut col = DVector::zeros(n);
        for i in 0..n {
            col[i] = gram_entry(
                &self.kernel_f,
                &self.kernel_g,
                &self.data.states[i],
                self.data.inputs[i],
                xn,
                un,
            );
        }
        let row = if n > 0 {
            match self.chol.solve_lower_triangular(&col) {
                Some(r) => r,
                None => return false,
            }
        } else {
            col
        };
        let knn = gram_entry(&self.kernel_f, &self.kernel_g, xn, un, xn, un)
            + self.data.noise_std * self.data.noise_std;
        let d2 = knn - row.norm_squared();
        if !(d2 > 0.0) {
            return false;
        }
        let mut l = DMatrix::zeros(n + 1, n + 1);
        l.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        for j in 0..n {
            l[(n, j)] = row[j];
        }
        l[(n, n)] = d2.sqrt();
        self.chol = l;
        true
    }

    /// New model with one more observation. The factor is extended in place
    /// and fully rebuilt every 64 appends or when the extension breaks down.
    pub fn append_point(&self, x: &[f64], u: f64, y: f64) -> Result<Self, GpError> {
        let mut next = self.clone();
        next.push_point(x, u, y)?;
        Ok(next)
    }

    /// In-place variant of [`append_point`](Self::append_point) for
    /// simulation loops that own their model.
    pub fn push_point(&mut self, x: &[f64], u: f64, y: f64) -> Result<(), GpError> {
        if x.len() != self.dim() {
            return Err(GpError::Dimension { expected: self.dim(), got: x.len() });
        }
        self.data.push(x, u, y);
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY || !self.extend_factor() {
            return self.refactor();
        }
        self.update_weights();
        Ok(())
    }

    fn cross_f(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.data.states.iter().map(|xi| self.kernel_f.eval(x, xi)))
    }

    fn cross_g(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.data
                .states
                .iter()
                .zip(&self.data.inputs)
                .map(|(xi, ui)| self.kernel_g.eval(x, xi) * ui),
        )
    }

    fn reduce(&self, k: &DVector<f64>, prior: f64) -> (f64, f64) {
        if self.is_empty() {
            return (0.0, prior);
        }
        let mean = k.dot(&self.weights);
        let v = self.chol.solve_lower_triangular(k).expect("nonsingular factor");
        (mean, (prior - v.norm_squared()).max(0.0))
    }

    /// Mean and variance of the `f` posterior.
    pub fn posterior_f(&self, x: &[f64]) -> (f64, f64) {
        self.reduce(&self.cross_f(x), self.kernel_f.signal_variance)
    }

    /// Mean and variance of the `g` posterior; only points with nonzero input
    /// contribute to the cross-covariance.
    pub fn posterior_g(&self, x: &[f64]) -> (f64, f64) {
        self.reduce(&self.cross_g(x), self.kernel_g.signal_variance)
    }
}

impl DynamicsModel for CompositeGp {
    fn posterior(&self, x: &[f64]) -> Posterior {
        let (mean_f, var_f) = self.posterior_f(x);
        let (mean_g, var_g) = self.posterior_g(x);
        Posterior { mean_f, std_f: var_f.sqrt(), mean_g, std_g: var_g.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    F,
    G,
}

/// Inputs of the uniform error bound: confidence `delta`, grid constants and
/// the domain box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundConfig {
    pub delta: f64,
    pub tau_f: f64,
    pub tau_g: f64,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub sigma_floor_f: f64,
    pub sigma_floor_g: f64,
}

impl ErrorBoundConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(GpError::BadBounds(format!("delta = {} not in (0, 1)", self.delta)));
        }
        if !(self.tau_f > 0.0 && self.tau_g > 0.0) {
            return Err(GpError::BadBounds("tau must be positive".into()));
        }
        if self.domain_lower.len() != self.domain_upper.len() {
            return Err(GpError::BadBounds("domain bounds differ in length".into()));
        }
        if self.domain_lower.iter().zip(&self.domain_upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(GpError::BadBounds("domain_lower must be below domain_upper".into()));
        }
        if !(self.sigma_floor_f > 0.0 && self.sigma_floor_g > 0.0) {
            return Err(GpError::BadBounds("sigma floors must be positive".into()));
        }
        Ok(())
    }
}

/// `8 ln((2/δ) Π_j ((√n / 2τ)(upper_j - lower_j) + 1))`.
pub fn beta_scaling(cfg: &ErrorBoundConfig, which: Component, n: usize) -> Result<f64, GpError> {
    let tau = match which {
        Component::F => cfg.tau_f,
        Component::G => cfg.tau_g,
    };
    let c = (n as f64).sqrt() / (2.0 * tau);
    // sum of logs keeps large boxes with tiny tau finite
    let mut log_prod = (2.0 / cfg.delta).ln();
    for (lo, hi) in cfg.domain_lower.iter().zip(&cfg.domain_upper).take(n) {
        log_prod += (c * (hi - lo) + 1.0).ln();
    }
    let beta = 8.0 * log_prod;
    if !beta.is_finite() || beta <= 0.0 {
        return Err(GpError::NonFiniteBeta { tau });
    }
    Ok(beta)
}

pub fn floored_std(sigma: f64, floor: f64) -> f64 {
    sigma.max(floor)
}

/// Scalings and floors as used by the filters. Fixed for the duration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub beta_f: f64,
    pub beta_g: f64,
    pub sigma_floor_f: f64,
    pub sigma_floor_g: f64,
}

impl ErrorBound {
    pub fn from_config(cfg: &ErrorBoundConfig) -> Result<Self, GpError> {
        cfg.validate()?;
        let n = cfg.domain_lower.len();
        Ok(Self {
            beta_f: beta_scaling(cfg, Component::F, n)?,
            beta_g: beta_scaling(cfg, Component::G, n)?,
            sigma_floor_f: cfg.sigma_floor_f,
            sigma_floor_g: cfg.sigma_floor_g,
        })
    }

    /// No model error: used with exact `f`, `g`.
    pub fn exact() -> Self {
        Self { beta_f: 0.0, beta_g: 0.0, sigma_floor_f: 1.0, sigma_floor_g: 1.0 }
    }

    pub fn margin_f(&self, std_f: f64) -> f64 {
        self.beta_f.sqrt() * floored_std(std_f, self.sigma_floor_f)
    }

    pub fn margin_g(&self, std_g: f64) -> f64 {
        self.beta_g.sqrt() * floored_std(std_g, self.sigma_floor_g)
    }
}
