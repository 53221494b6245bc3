//! Parametric output-distribution families.
//!
//! A family maps a parameter vector `theta` (the network output) to a
//! distribution over targets. Each family exposes its log-density, sampling,
//! entropy, KL divergence, and a closed-form factor `L_theta` of the Fisher
//! information matrix, `L_theta * L_theta^T = F_theta`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Output-distribution family attached to a model head.
///
/// The `kind` tag and field names match the on-disk family spec, e.g.
/// `{"kind": "gaussian_fixed_diag", "sigma": [1.0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistFamily {
    /// Gaussian with mean `theta` and fixed diagonal covariance.
    ///
    /// `sigma` holds the diagonal of the covariance matrix, so the Fisher is
    /// `diag(sigma)^-1` and the factor is `diag(sigma)^-1/2`.
    GaussianFixedDiag { sigma: Vec<f64> },
    /// Bernoulli over {0, 1} parameterized by a scalar logit.
    BernoulliLogit,
    /// Categorical over `dim` classes parameterized by logits.
    CategoricalLogits { dim: usize },
}

/// Matrix factor `L_theta` with `L_theta * L_theta^T = F_theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFactor(pub DMatrix<f64>);

impl ThetaFactor {
    /// Reassembles the Fisher matrix `L * L^T`.
    pub fn fisher(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x), stable for large |x|.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(theta);
    theta.iter().map(|t| (t - lse).exp()).collect()
}

impl DistFamily {
    /// Gaussian family with the given covariance diagonal.
    pub fn gaussian_fixed_diag(sigma: Vec<f64>) -> Result<Self> {
        let fam = DistFamily::GaussianFixedDiag { sigma };
        fam.validate()?;
        Ok(fam)
    }

    /// Categorical family over `dim >= 2` classes.
    pub fn categorical_logits(dim: usize) -> Result<Self> {
        let fam = DistFamily::CategoricalLogits { dim };
        fam.validate()?;
        Ok(fam)
    }

    /// Checks the structural invariants of the family itself.
    pub fn validate(&self) -> Result<()> {
        match self {
            DistFamily::GaussianFixedDiag { sigma } => {
                if sigma.is_empty() {
                    return Err(invalid("gaussian family needs at least one dimension"));
                }
                if sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                    return Err(invalid("gaussian sigma entries must be strictly positive"));
                }
            }
            DistFamily::BernoulliLogit => {}
            DistFamily::CategoricalLogits { dim } => {
                if *dim < 2 {
                    return Err(invalid("categorical family needs dim >= 2"));
                }
            }
        }
        Ok(())
    }

    /// Parameter dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            DistFamily::GaussianFixedDiag { sigma } => sigma.len(),
            DistFamily::BernoulliLogit => 1,
            DistFamily::CategoricalLogits { dim } => *dim,
        }
    }

    /// Length of a target vector for this family.
    ///
    /// Gaussian targets live in R^d; bernoulli and categorical targets are a
    /// single number (the label).
    pub fn target_dim(&self) -> usize {
        match self {
            DistFamily::GaussianFixedDiag { sigma } => sigma.len(),
            DistFamily::BernoulliLogit | DistFamily::CategoricalLogits { .. } => 1,
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        self.validate()?;
        if theta.len() != self.dim() {
            return Err(invalid(format!(
                "theta has dimension {}, family expects {}",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(invalid("theta contains non-finite entries"));
        }
        Ok(())
    }

    /// Closed-form factor `L_theta` of the Fisher at `theta`.
    ///
    /// Gaussian: `diag(sigma)^-1/2`. Bernoulli: `sqrt(p(1-p))`.
    /// Categorical: `(I - p 1^T) diag(p)^1/2`, the order that satisfies
    /// `L L^T = diag(p) - p p^T`. The categorical factor is kept square
    /// (rank d-1) so downstream shapes are uniform.
    pub fn fisher_theta_factor(&self, theta: &[f64]) -> Result<ThetaFactor> {
        self.check_theta(theta)?;
        let d = self.dim();
        let l = match self {
            DistFamily::GaussianFixedDiag { sigma } => {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    d,
                    sigma.iter().map(|s| 1.0 / s.sqrt()),
                ))
            }
            DistFamily::BernoulliLogit => {
                let p = sigmoid(theta[0]);
                let q = sigmoid(-theta[0]);
                DMatrix::from_element(1, 1, (p * q).sqrt())
            }
            DistFamily::CategoricalLogits { .. } => {
                let p = softmax(theta);
                DMatrix::from_fn(d, d, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    (delta - p[i]) * p[j].sqrt()
                })
            }
        };
        Ok(ThetaFactor(l))
    }

    /// Natural-log density (or mass) of `y` under the distribution at `theta`.
    pub fn log_prob(&self, theta: &[f64], y: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        if y.len() != self.target_dim() {
            return Err(invalid(format!(
                "target has dimension {}, family expects {}",
                y.len(),
                self.target_dim()
            )));
        }
        match self {
            DistFamily::GaussianFixedDiag { sigma } => {
                let mut lp = 0.0;
                for i in 0..sigma.len() {
                    let r = y[i] - theta[i];
                    lp -= 0.5 * (r * r / sigma[i] + (2.0 * std::f64::consts::PI * sigma[i]).ln());
                }
                Ok(lp)
            }
            DistFamily::BernoulliLogit => {
                let label = class_label(y[0], 2)?;
                // log p = -softplus(-theta), log(1-p) = -softplus(theta)
                Ok(if label == 1 {
                    -softplus(-theta[0])
                } else {
                    -softplus(theta[0])
                })
            }
            DistFamily::CategoricalLogits { dim } => {
                let label = class_label(y[0], *dim)?;
                Ok(theta[label] - log_sum_exp(theta))
            }
        }
    }

    /// Gradient of `log_prob` with respect to `theta`.
    pub fn grad_log_prob(&self, theta: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        if y.len() != self.target_dim() {
            return Err(invalid("target dimension mismatch"));
        }
        match self {
            DistFamily::GaussianFixedDiag { sigma } => Ok(DVector::from_iterator(
                sigma.len(),
                (0..sigma.len()).map(|i| (y[i] - theta[i]) / sigma[i]),
            )),
            DistFamily::BernoulliLogit => {
                let label = class_label(y[0], 2)?;
                Ok(DVector::from_element(1, label as f64 - sigmoid(theta[0])))
            }
            DistFamily::CategoricalLogits { dim } => {
                let label = class_label(y[0], *dim)?;
                let p = softmax(theta);
                Ok(DVector::from_fn(*dim, |i, _| {
                    (if i == label { 1.0 } else { 0.0 }) - p[i]
                }))
            }
        }
    }

    /// Draws one target from the distribution at `theta`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        match self {
            DistFamily::GaussianFixedDiag { sigma } => {
                let normal = rand_distr::StandardNormal;
                Ok((0..sigma.len())
                    .map(|i| {
                        let z: f64 = rng.sample(normal);
                        theta[i] + sigma[i].sqrt() * z
                    })
                    .collect())
            }
            DistFamily::BernoulliLogit => {
                let p = sigmoid(theta[0]);
                let u: f64 = rng.gen();
                Ok(vec![if u < p { 1.0 } else { 0.0 }])
            }
            DistFamily::CategoricalLogits { dim } => {
                let p = softmax(theta);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut label = dim - 1;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        label = i;
                        break;
                    }
                }
                Ok(vec![label as f64])
            }
        }
    }

    /// Exact KL divergence `KL(P(theta1) || P(theta2))`.
    pub fn kl(&self, theta1: &[f64], theta2: &[f64]) -> Result<f64> {
        self.check_theta(theta1)?;
        self.check_theta(theta2)?;
        match self {
            DistFamily::GaussianFixedDiag { sigma } => {
                // same covariance on both sides: only the mean term survives
                let mut kl = 0.0;
                for i in 0..sigma.len() {
                    let dm = theta1[i] - theta2[i];
                    kl += 0.5 * dm * dm / sigma[i];
                }
                Ok(kl)
            }
            DistFamily::BernoulliLogit => {
                let p1 = sigmoid(theta1[0]);
                let q1 = sigmoid(-theta1[0]);
                let lp1 = -softplus(-theta1[0]);
                let lq1 = -softplus(theta1[0]);
                let lp2 = -softplus(-theta2[0]);
                let lq2 = -softplus(theta2[0]);
                Ok(p1 * (lp1 - lp2) + q1 * (lq1 - lq2))
            }
            DistFamily::CategoricalLogits { dim } => {
                let ls1 = log_sum_exp(theta1);
                let ls2 = log_sum_exp(theta2);
                let mut kl = 0.0;
                for i in 0..*dim {
                    let l1 = theta1[i] - ls1;
                    let l2 = theta2[i] - ls2;
                    kl += l1.exp() * (l1 - l2);
                }
                Ok(kl)
            }
        }
    }

    /// Monte-Carlo estimate of the Fisher: `(1/n) sum g_i g_i^T` with
    /// `g_i = grad log p(y_i)` and `y_i` sampled from the distribution.
    pub fn mc_fisher_theta<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(invalid("mc_fisher_theta needs n >= 1"));
        }
        self.check_theta(theta)?;
        let d = self.dim();
        let mut f = DMatrix::zeros(d, d);
        for _ in 0..n {
            let y = self.sample(theta, rng)?;
            let g = self.grad_log_prob(theta, &y)?;
            f.syger(1.0, &g, &g, 1.0);
        }
        // syger only fills the lower triangle
        f.fill_upper_triangle_with_lower_triangle();
        Ok(f / n as f64)
    }

    /// Shannon (or differential) entropy in nats.
    pub fn entropy(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        match self {
            DistFamily::GaussianFixedDiag { sigma } => Ok(sigma
                .iter()
                .map(|s| 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * s).ln())
                .sum()),
            DistFamily::BernoulliLogit => {
                let p = sigmoid(theta[0]);
                let q = sigmoid(-theta[0]);
                Ok(p * softplus(-theta[0]) + q * softplus(theta[0]))
            }
            DistFamily::CategoricalLogits { .. } => {
                let lse = log_sum_exp(theta);
                let p = softmax(theta);
                Ok(lse - p.iter().zip(theta).map(|(pi, ti)| pi * ti).sum::<f64>())
            }
        }
    }
}

/// Interprets a stored target as a class label in `[0, num_classes)`.
fn class_label(y: f64, num_classes: usize) -> Result<usize> {
    if !y.is_finite() || y.fract() != 0.0 || y < 0.0 || y >= num_classes as f64 {
        return Err(invalid(format!(
            "target {y} is not a class label in [0, {num_classes})"
        )));
    }
    Ok(y as usize)
}
