//! Model primitives: patients, trajectory and dependence parameters, the
//! per-patient marginal Gaussian likelihood and the full data likelihood.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Cholesky};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Days separating two measurements whose residual correlation is `rho`.
pub const CORRELATION_LAG_DAYS: f64 = 7.0;

/// One subject: optional disease label plus the observed profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub id: String,
    /// `Some(true)` for diseased, `Some(false)` for healthy, `None` when the
    /// status is to be predicted.
    pub disease: Option<bool>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Patient {
    /// Builds a patient, checking that times are finite, strictly increasing and
    /// aligned with the values.
    pub fn new(
        id: impl Into<String>,
        disease: Option<bool>,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            id: id.into(),
            disease,
            times,
            values,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::InvalidData(format!(
                "patient {}: {} times but {} values",
                self.id,
                self.times.len(),
                self.values.len()
            )));
        }
        if let Some(t) = self.times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidData(format!(
                "patient {}: non-finite time {t}",
                self.id
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "patient {}: non-finite value {v}",
                self.id
            )));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!(
                "patient {}: measurement times are not strictly increasing",
                self.id
            )));
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.times.len()
    }

    /// Disease indicator as 0/1, if known.
    pub fn disease_indicator(&self) -> Option<f64> {
        self.disease.map(|d| if d { 1.0 } else { 0.0 })
    }
}

/// Sigmoid trajectory parameters `(asymptote, rate, offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrajectoryParams {
    pub theta: [f64; 3],
}

impl TrajectoryParams {
    pub const fn new(asymptote: f64, rate: f64, offset: f64) -> Self {
        Self {
            theta: [asymptote, rate, offset],
        }
    }

    pub fn asymptote(&self) -> f64 {
        self.theta[0]
    }

    pub fn rate(&self) -> f64 {
        self.theta[1]
    }

    pub fn offset(&self) -> f64 {
        self.theta[2]
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::from(self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            theta: [v[0], v[1], v[2]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

/// Mean response `θ1 / (1 + exp(-θ2 t - θ3))`.
///
/// Evaluated in a form that never overflows: the exponential is only taken of
/// non-positive arguments, so extreme parameters saturate to `0` or `θ1`.
pub fn eval_trajectory(traj: &TrajectoryParams, t: f64) -> f64 {
    let z = traj.theta[1] * t + traj.theta[2];
    if z >= 0.0 {
        traj.theta[0] / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        traj.theta[0] * e / (1.0 + e)
    }
}

/// Random-intercept variance, residual variance and one-week autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceParams {
    pub gamma2: f64,
    pub sigma2: f64,
    pub rho: f64,
}

impl DependenceParams {
    pub fn new(gamma2: f64, sigma2: f64, rho: f64) -> Result<Self> {
        let d = Self {
            gamma2,
            sigma2,
            rho,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma2 > 0.0 && self.gamma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma2 must be positive, got {}",
                self.gamma2
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Correlation between two responses `lag` days apart.
    pub fn correlation(&self, lag: f64) -> f64 {
        (self.sigma2 * self.rho.powf(lag.abs() / CORRELATION_LAG_DAYS) + self.gamma2)
            / (self.sigma2 + self.gamma2)
    }
}

/// Writes `σ²R + γ²11ᵀ` into a row-major buffer.
pub(crate) fn covariance_into(times: &[f64], dep: &DependenceParams, out: &mut Vec<f64>) {
    let n = times.len();
    out.clear();
    out.resize(n * n, 0.0);
    let ln_rho = dep.rho.ln() / CORRELATION_LAG_DAYS;
    for j in 0..n {
        out[j * n + j] = dep.sigma2 + dep.gamma2;
        for k in 0..j {
            let r = (ln_rho * (times[j] - times[k]).abs()).exp();
            let v = dep.sigma2 * r + dep.gamma2;
            out[j * n + k] = v;
            out[k * n + j] = v;
        }
    }
}

/// Marginal covariance of one patient's responses, `σ²R + γ²11ᵀ` with
/// `R_jk = ρ^{|t_j - t_k| / 7}`.
pub fn build_covariance(times: &[f64], dep: &DependenceParams) -> Result<DMatrix<f64>> {
    if times.is_empty() {
        return Err(Error::InvalidArgument(
            "covariance requested for an empty set of times".into(),
        ));
    }
    let n = times.len();
    let mut buf = Vec::new();
    covariance_into(times, dep, &mut buf);
    Ok(DMatrix::from_row_slice(n, n, &buf))
}

/// Cholesky factor of one patient's marginal covariance. Depends only on the
/// measurement times and the dependence parameters, so samplers cache it
/// across every trajectory evaluation until the dependence parameters move.
#[derive(Debug, Clone)]
pub struct PatientFactor {
    chol: Option<Cholesky>,
}

impl PatientFactor {
    pub fn new(times: &[f64], dep: &DependenceParams) -> Result<Self> {
        if times.is_empty() {
            return Ok(Self { chol: None });
        }
        let n = times.len();
        let mut buf = Vec::with_capacity(n * n);
        covariance_into(times, dep, &mut buf);
        let mut result = Cholesky::factor(&buf, n);
        // When σ² is negligible next to γ² the factorisation can lose every
        // significant digit; retry with a diagonal jitter relative to the
        // marginal variance before giving up.
        let scale = dep.sigma2 + dep.gamma2;
        let mut jitter = 1e-12 * scale;
        while result.is_err() && jitter <= 1e-8 * scale && jitter > 0.0 {
            let mut b = buf.clone();
            for j in 0..n {
                b[j * n + j] += jitter;
            }
            result = Cholesky::factor(&b, n);
            jitter *= 10.0;
        }
        Ok(Self { chol: Some(result?) })
    }

    /// Log density of `values` under `MVN(f(times; traj), Σ)`. An empty
    /// profile contributes zero.
    pub fn loglik(&self, times: &[f64], values: &[f64], traj: &TrajectoryParams) -> f64 {
        let Some(chol) = &self.chol else {
            return 0.0;
        };
        let n = times.len();
        let mut stack = [0.0f64; 16];
        let mut heap;
        let resid: &mut [f64] = if n <= stack.len() {
            &mut stack[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for ((r, &t), &y) in resid.iter_mut().zip(times).zip(values) {
            *r = y - eval_trajectory(traj, t);
        }
        let q = chol.quad_form_in_place(resid);
        -0.5 * (n as f64 * LN_2PI + chol.log_det() + q)
    }

    pub fn cholesky(&self) -> Option<&Cholesky> {
        self.chol.as_ref()
    }
}

/// Log multivariate-normal density of a patient's profile, marginal over the
/// random intercept.
pub fn patient_loglik(
    p: &Patient,
    traj: &TrajectoryParams,
    dep: &DependenceParams,
) -> Result<f64> {
    let factor = PatientFactor::new(&p.times, dep)?;
    Ok(factor.loglik(&p.times, &p.values, traj))
}

/// Log of the Bernoulli mass `φ^d (1-φ)^{1-d}`; zero when `d` is unknown.
pub fn log_bernoulli(phi: f64, disease: Option<bool>) -> f64 {
    match disease {
        Some(true) => phi.ln(),
        Some(false) => (1.0 - phi).ln(),
        None => 0.0,
    }
}

/// Per-cluster disease probability and trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub phi: f64,
    pub traj: TrajectoryParams,
}

/// Hyperparameters of the base measure `Beta(a, b) ⊗ MVN₃(θ*, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasureHyper {
    pub theta_star: [f64; 3],
    /// Row-major 3×3 covariance.
    pub sigma: [[f64; 3]; 3],
    pub a: f64,
    pub b: f64,
}

impl BaseMeasureHyper {
    pub fn sigma_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.sigma[i][j])
    }

    pub fn set_sigma(&mut self, m: &Matrix3<f64>) {
        for i in 0..3 {
            for j in 0..3 {
                // symmetrise so round-off never breaks the invariant
                self.sigma[i][j] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
    }

    pub fn theta_star_vector(&self) -> Vector3<f64> {
        Vector3::from(self.theta_star)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta hyperparameters must be positive, got a={} b={}",
                self.a, self.b
            )));
        }
        let s = self.sigma_matrix();
        if (s - s.transpose()).abs().max() > 1e-12 * s.abs().max().max(1.0) {
            return Err(Error::InvalidArgument("Sigma is not symmetric".into()));
        }
        if s.cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "Sigma is not positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// Stick-breaking weights `ψ_h = V_h ∏_{k<h} (1 - V_k)`; the caller keeps the
/// last stick at one so the weights sum to one.
pub fn stick_breaking_weights(sticks: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    sticks
        .iter()
        .map(|&v| {
            let w = v * remaining;
            remaining *= 1.0 - v;
            w
        })
        .collect()
}

/// One complete sampler state. Cluster indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub assignments: Vec<usize>,
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    pub clusters: Vec<ClusterParams>,
    pub dep: DependenceParams,
    pub alpha: f64,
    pub base: BaseMeasureHyper,
}

impl ModelState {
    pub fn truncation(&self) -> usize {
        self.clusters.len()
    }

    /// Number of patients in each cluster.
    pub fn cluster_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.clusters.len()];
        for &c in &self.assignments {
            counts[c] += 1;
        }
        counts
    }

    pub fn nonempty_clusters(&self) -> usize {
        self.cluster_counts().iter().filter(|&&n| n > 0).count()
    }

    /// Recomputes the weights from the sticks.
    pub fn refresh_weights(&mut self) {
        self.weights = stick_breaking_weights(&self.sticks);
    }

    /// Checks every structural invariant of a state.
    pub fn check_invariants(&self) -> Result<()> {
        let h = self.clusters.len();
        if h == 0 || self.sticks.len() != h || self.weights.len() != h {
            return Err(Error::InvalidData(format!(
                "inconsistent truncation: {} clusters, {} sticks, {} weights",
                h,
                self.sticks.len(),
                self.weights.len()
            )));
        }
        if self.sticks[h - 1] != 1.0 {
            return Err(Error::InvalidData("last stick must equal 1".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidData("negative mixture weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidData(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let rebuilt = stick_breaking_weights(&self.sticks);
        if rebuilt
            .iter()
            .zip(&self.weights)
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::InvalidData(
                "weights are not reproducible from sticks".into(),
            ));
        }
        if let Some(&c) = self.assignments.iter().find(|&&c| c >= h) {
            return Err(Error::InvalidData(format!(
                "assignment {c} out of range for truncation {h}"
            )));
        }
        for (k, cl) in self.clusters.iter().enumerate() {
            if !(0.0..=1.0).contains(&cl.phi) {
                return Err(Error::InvalidData(format!(
                    "cluster {k}: phi {} outside [0,1]",
                    cl.phi
                )));
            }
            if !cl.traj.is_finite() {
                return Err(Error::InvalidData(format!(
                    "cluster {k}: non-finite trajectory"
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidData(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        self.dep.validate()?;
        self.base.validate()
    }
}

/// Which data likelihood [`data_loglik`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodMode {
    /// Conditional on the current cluster assignments.
    Conditional,
    /// Marginal over cluster membership, weighted by the stick-breaking weights.
    Marginal,
}

/// Data log-likelihood of a state. Unknown disease labels contribute no
/// Bernoulli term.
pub fn data_loglik(state: &ModelState, data: &[Patient], mode: LikelihoodMode) -> Result<f64> {
    if mode == LikelihoodMode::Conditional && state.assignments.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "state has {} assignments for {} patients",
            state.assignments.len(),
            data.len()
        )));
    }
    let factors = data
        .iter()
        .map(|p| PatientFactor::new(&p.times, &state.dep))
        .collect::<Result<Vec<_>>>()?;
    Ok(data_loglik_cached(state, data, &factors, mode))
}

pub(crate) fn data_loglik_cached(
    state: &ModelState,
    data: &[Patient],
    factors: &[PatientFactor],
    mode: LikelihoodMode,
) -> f64 {
    match mode {
        LikelihoodMode::Conditional => data
            .iter()
            .zip(factors)
            .zip(&state.assignments)
            .map(|((p, f), &c)| {
                let cl = &state.clusters[c];
                f.loglik(&p.times, &p.values, &cl.traj) + log_bernoulli(cl.phi, p.disease)
            })
            .sum(),
        LikelihoodMode::Marginal => {
            let mut terms = vec![0.0; state.clusters.len()];
            data.iter()
                .zip(factors)
                .map(|(p, f)| {
                    for (t, (cl, &w)) in terms.iter_mut().zip(state.clusters.iter().zip(&state.weights)) {
                        *t = w.ln()
                            + log_bernoulli(cl.phi, p.disease)
                            + f.loglik(&p.times, &p.values, &cl.traj);
                    }
                    log_sum_exp(&terms)
                })
                .sum()
        }
    }
}
