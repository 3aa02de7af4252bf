//! Levenberg-Marquardt minimisation of `S(β) = Σ rᵢ(β)²`.
//!
//! Each iteration solves `(λD + JᵀJ)δ = Jᵀr` with `D = I` or
//! `D = diag(JᵀJ)`, accepts `β + δ` only if it strictly lowers `S`, and
//! divides λ after an accepted step or multiplies it after a rejected one.
//! A failed factorization counts as a rejection.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::{gram, mul_transpose_vec, solve_spd, DenseMatrix, DenseVector, LinalgError};

/// Source of residuals `r(β) = y − f(β)` and the Jacobian `J = ∂f/∂β`.
///
/// `residual_len` and `param_len` must not change between calls.
pub trait ResidualProvider {
    fn residual_len(&self) -> usize;
    fn param_len(&self) -> usize;
    fn residuals(&self, beta: &DenseVector) -> Result<DenseVector, LinalgError>;
    fn residuals_and_jacobian(
        &self,
        beta: &DenseVector,
    ) -> Result<(DenseVector, DenseMatrix), LinalgError>;
}

impl<P: ResidualProvider + ?Sized> ResidualProvider for &P {
    fn residual_len(&self) -> usize {
        (**self).residual_len()
    }
    fn param_len(&self) -> usize {
        (**self).param_len()
    }
    fn residuals(&self, beta: &DenseVector) -> Result<DenseVector, LinalgError> {
        (**self).residuals(beta)
    }
    fn residuals_and_jacobian(
        &self,
        beta: &DenseVector,
    ) -> Result<(DenseVector, DenseMatrix), LinalgError> {
        (**self).residuals_and_jacobian(beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DampingMode {
    /// `D = I`
    Identity,
    /// `D = diag(JᵀJ)`, zero entries replaced by 1.
    #[default]
    Diagonal,
}

impl fmt::Display for DampingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DampingMode::Identity => "identity",
            DampingMode::Diagonal => "diagonal",
        })
    }
}

impl FromStr for DampingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "identity" => Ok(Self::Identity),
            "diagonal" => Ok(Self::Diagonal),
            other => Err(format!(
                "unknown damping mode `{other}` (expected identity|diagonal)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub lambda0: f64,
    pub lambda_increase: f64,
    /// Divisor applied after an accepted step.
    pub lambda_decrease: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub mode: DampingMode,
    pub max_iterations: usize,
    /// Stop when `‖Jᵀr‖∞` falls to this value.
    pub gradient_tol: f64,
    /// Stop when `‖δ‖₂ / (1 + ‖β‖₂)` falls to this value.
    pub step_tol: f64,
    /// Stop when `S` falls to this absolute value.
    pub sse_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            lambda0: 1e-3,
            lambda_increase: 10.0,
            lambda_decrease: 10.0,
            lambda_max: 1e10,
            lambda_min: 1e-12,
            mode: DampingMode::Diagonal,
            max_iterations: 200,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
            sse_tol: 0.0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |msg: String| Err(LmError::InvalidConfig(msg));
        if !(self.lambda_min >= 0.0) || !self.lambda_min.is_finite() {
            return bad(format!("lambda_min must be >= 0, got {}", self.lambda_min));
        }
        if !(self.lambda_max > 0.0) || !self.lambda_max.is_finite() {
            return bad(format!("lambda_max must be > 0, got {}", self.lambda_max));
        }
        if !(self.lambda0 > 0.0
            && self.lambda_min <= self.lambda0
            && self.lambda0 <= self.lambda_max)
        {
            return bad(format!(
                "lambda0 = {} must be positive and within [{}, {}]",
                self.lambda0, self.lambda_min, self.lambda_max
            ));
        }
        if !(self.lambda_increase > 1.0) || !(self.lambda_decrease > 1.0) {
            return bad(format!(
                "damping factors must exceed 1 (increase {}, decrease {})",
                self.lambda_increase, self.lambda_decrease
            ));
        }
        for (name, tol) in [
            ("gradient_tol", self.gradient_tol),
            ("step_tol", self.step_tol),
            ("sse_tol", self.sse_tol),
        ] {
            if !(tol >= 0.0) {
                return bad(format!("{name} must be >= 0, got {tol}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    GradientConverged,
    StepConverged,
    SseReached,
    LambdaOverflow,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::MaxIterations => "max_iterations",
            Termination::GradientConverged => "gradient_converged",
            Termination::StepConverged => "step_converged",
            Termination::SseReached => "sse_reached",
            Termination::LambdaOverflow => "lambda_overflow",
        })
    }
}

/// One proposal `β + δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub sse_before: f64,
    /// `None` when the damped system could not be factorized.
    pub sse_after: Option<f64>,
    pub lambda: f64,
    pub accepted: bool,
    pub grad_inf_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
    pub initial_sse: f64,
    pub termination: Option<Termination>,
}

impl TrainHistory {
    fn new(initial_sse: f64) -> Self {
        Self {
            records: Vec::new(),
            initial_sse,
            termination: None,
        }
    }

    pub fn accepted(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn final_sse(&self) -> f64 {
        self.accepted()
            .last()
            .and_then(|r| r.sse_after)
            .unwrap_or(self.initial_sse)
    }

    /// CSV with header `iteration,sse_before,sse_after,lambda,accepted,grad_inf_norm`.
    /// A proposal whose system could not be solved has an empty `sse_after`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "iteration,sse_before,sse_after,lambda,accepted,grad_inf_norm"
        )?;
        for r in &self.records {
            let after = r.sse_after.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                r.sse_before,
                after,
                r.lambda,
                u8::from(r.accepted),
                r.grad_inf_norm
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid LM configuration: {0}")]
    InvalidConfig(String),
    #[error("provider reports {provider} parameters but beta0 has {beta}")]
    ParameterMismatch { provider: usize, beta: usize },
    #[error("objective became non-finite after {} proposals", history.records.len())]
    NonFiniteObjective { history: TrainHistory },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `S = Σ rᵢ²`.
pub fn sse(r: &DenseVector) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// The damping matrix diagonal: all ones, or `diag(JᵀJ)` with zeros
/// replaced by one.
fn damping_diagonal(jtj: &DenseMatrix, mode: DampingMode) -> Vec<f64> {
    match mode {
        DampingMode::Identity => vec![1.0; jtj.rows()],
        DampingMode::Diagonal => jtj
            .diagonal()
            .into_iter()
            .map(|d| if d == 0.0 { 1.0 } else { d })
            .collect(),
    }
}

fn solve_damped(
    jtj: &DenseMatrix,
    jtr: &DenseVector,
    lambda: f64,
    mode: DampingMode,
) -> Result<DenseVector, LinalgError> {
    let mut a = jtj.clone();
    let d: Vec<f64> = damping_diagonal(jtj, mode)
        .into_iter()
        .map(|d| lambda * d)
        .collect();
    a.add_to_diagonal(&d);
    solve_spd(&a, jtr)
}

/// Solves `(λD + JᵀJ)δ = Jᵀr`.
pub fn solve_lm_step(
    j: &DenseMatrix,
    r: &DenseVector,
    lambda: f64,
    mode: DampingMode,
) -> Result<DenseVector, LinalgError> {
    if !(lambda >= 0.0) {
        return Err(LinalgError::DimensionMismatch(format!(
            "damping factor must be >= 0, got {lambda}"
        )));
    }
    let jtr = mul_transpose_vec(j, r)?;
    solve_damped(&gram(j), &jtr, lambda, mode)
}

/// Next λ: divided after an accepted step, multiplied after a rejection,
/// always clamped to `[lambda_min, lambda_max]`.
pub fn damping_update(accepted: bool, lambda: f64, cfg: &LmConfig) -> f64 {
    let next = if accepted {
        lambda / cfg.lambda_decrease
    } else {
        lambda * cfg.lambda_increase
    };
    next.clamp(cfg.lambda_min, cfg.lambda_max)
}

pub fn lm_train<P: ResidualProvider>(
    provider: &P,
    beta0: &DenseVector,
    cfg: &LmConfig,
) -> Result<(DenseVector, TrainHistory), LmError> {
    lm_train_with(provider, beta0, cfg, |_, _| {})
}

/// Like [`lm_train`], calling `on_accept(k, β)` after the k-th accepted step
/// (k starts at 1).
pub fn lm_train_with<P, F>(
    provider: &P,
    beta0: &DenseVector,
    cfg: &LmConfig,
    mut on_accept: F,
) -> Result<(DenseVector, TrainHistory), LmError>
where
    P: ResidualProvider,
    F: FnMut(usize, &DenseVector),
{
    cfg.validate()?;
    if provider.param_len() != beta0.len() {
        return Err(LmError::ParameterMismatch {
            provider: provider.param_len(),
            beta: beta0.len(),
        });
    }

    let non_finite = |history: TrainHistory| LmError::NonFiniteObjective { history };

    let mut beta = beta0.clone();
    let (mut r, mut j) = match provider.residuals_and_jacobian(&beta) {
        Ok(v) => v,
        Err(LinalgError::NonFinite { .. }) => return Err(non_finite(TrainHistory::new(f64::NAN))),
        Err(e) => return Err(e.into()),
    };
    let mut s = sse(&r);
    let mut history = TrainHistory::new(s);
    if !s.is_finite() {
        return Err(non_finite(history));
    }

    let mut jtj = gram(&j);
    let mut jtr = mul_transpose_vec(&j, &r)?;
    let mut lambda = cfg.lambda0;
    let mut accepted_count = 0;

    let termination = loop {
        let grad_inf = jtr.norm_inf();
        if grad_inf <= cfg.gradient_tol {
            break Termination::GradientConverged;
        }
        if s <= cfg.sse_tol {
            break Termination::SseReached;
        }
        let iteration = history.records.len();
        if iteration >= cfg.max_iterations {
            break Termination::MaxIterations;
        }

        let proposal = solve_damped(&jtj, &jtr, lambda, cfg.mode)
            .and_then(|delta| beta.add(&delta).map(|trial| (delta, trial)));
        let (delta, trial) = match proposal {
            Ok(p) => p,
            Err(LinalgError::IndefiniteSystem { .. } | LinalgError::NonFinite { .. }) => {
                history.records.push(IterationRecord {
                    iteration,
                    sse_before: s,
                    sse_after: None,
                    lambda,
                    accepted: false,
                    grad_inf_norm: grad_inf,
                });
                if lambda >= cfg.lambda_max {
                    break Termination::LambdaOverflow;
                }
                lambda = damping_update(false, lambda, cfg);
                continue;
            }
            Err(e) => return Err(e.into()),
        };

        let s_trial = match provider.residuals(&trial) {
            Ok(r_trial) => sse(&r_trial),
            Err(LinalgError::NonFinite { .. }) => f64::NAN,
            Err(e) => return Err(e.into()),
        };
        if !s_trial.is_finite() {
            history.records.push(IterationRecord {
                iteration,
                sse_before: s,
                sse_after: Some(s_trial),
                lambda,
                accepted: false,
                grad_inf_norm: grad_inf,
            });
            history.termination = None;
            return Err(non_finite(history));
        }

        let accepted = s_trial < s;
        history.records.push(IterationRecord {
            iteration,
            sse_before: s,
            sse_after: Some(s_trial),
            lambda,
            accepted,
            grad_inf_norm: grad_inf,
        });

        let small_step = delta.norm2() <= cfg.step_tol * (1.0 + beta.norm2());
        let at_max = lambda >= cfg.lambda_max;
        lambda = damping_update(accepted, lambda, cfg);

        if accepted {
            beta = trial;
            accepted_count += 1;
            on_accept(accepted_count, &beta);
            let (r_new, j_new) = match provider.residuals_and_jacobian(&beta) {
                Ok(v) => v,
                Err(LinalgError::NonFinite { .. }) => return Err(non_finite(history)),
                Err(e) => return Err(e.into()),
            };
            r = r_new;
            j = j_new;
            s = sse(&r);
            jtj = gram(&j);
            jtr = mul_transpose_vec(&j, &r)?;
            if s <= cfg.sse_tol {
                break Termination::SseReached;
            }
            if small_step {
                break Termination::StepConverged;
            }
        } else if at_max {
            break Termination::LambdaOverflow;
        }
    };

    history.termination = Some(termination);
    Ok((beta, history))
}

/// `(k, S)` for the k-th accepted proposal, counting from 0.
pub fn predict_sse_curve(history: &TrainHistory) -> Vec<(usize, f64)> {
    history
        .accepted()
        .filter_map(|r| r.sse_after)
        .enumerate()
        .collect()
}
