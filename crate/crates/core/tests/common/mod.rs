//! Independent oracles and fixtures shared by the integration tests.
#![allow(
    dead_code,
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord
)]

use cardio_lm::linalg::{DenseMatrix, DenseVector, LinalgError};
use cardio_lm::lm::{LmConfig, ResidualProvider, TrainHistory};
use cardio_lm::mlp::{HiddenActivation, MlpShape, OutputActivation};
use rand::Rng;
use rug::Float;

/// Gaussian elimination with full (row and column) pivoting on an explicit
/// dense copy. Shares no code with the library solver.
pub fn full_pivot_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let mut col_perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                if m[i][j].abs() > best {
                    best = m[i][j].abs();
                    pr = i;
                    pc = j;
                }
            }
        }
        assert!(best > 0.0, "oracle: singular system");
        m.swap(k, pr);
        if pc != k {
            for row in m.iter_mut() {
                row.swap(k, pc);
            }
            col_perm.swap(k, pc);
        }
        for i in (k + 1)..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }

    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for j in (i + 1)..n {
            s -= m[i][j] * y[j];
        }
        y[i] = s / m[i][i];
    }
    let mut x = vec![0.0; n];
    for (k, &c) in col_perm.iter().enumerate() {
        x[c] = y[k];
    }
    x
}

/// `(λD + JᵀJ)` formed element by element from `J`.
pub fn oracle_damped_system(j: &DenseMatrix, lambda: f64, diagonal: bool) -> Vec<Vec<f64>> {
    let p = j.cols();
    let mut a = vec![vec![0.0; p]; p];
    for (r, row) in a.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..j.rows()).map(|i| j.get(i, r) * j.get(i, c)).sum();
        }
    }
    for k in 0..p {
        let d = if diagonal {
            if a[k][k] == 0.0 {
                1.0
            } else {
                a[k][k]
            }
        } else {
            1.0
        };
        a[k][k] += lambda * d;
    }
    a
}

pub fn oracle_rhs(j: &DenseMatrix, r: &DenseVector) -> Vec<f64> {
    (0..j.cols())
        .map(|c| (0..j.rows()).map(|i| j.get(i, c) * r[i]).sum())
        .collect()
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

pub fn random_vector<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DenseVector {
    DenseVector::new((0..len).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

const ORACLE_BITS: u32 = 256;

fn mp(v: f64) -> Float {
    Float::with_val(ORACLE_BITS, v)
}

fn mp_activation(z: Float, sigmoid: bool) -> Float {
    if sigmoid {
        let e = (-z).exp();
        (e + 1u32).recip()
    } else {
        z.tanh()
    }
}

/// Forward pass in 256-bit floating point. Decodes the flattened layout
/// directly: per layer, weights row-major (fan_out × fan_in), then biases.
pub fn mp_forward(shape: &MlpShape, beta: &[Float], x: &[f64]) -> Vec<Float> {
    let sizes = shape.layer_sizes();
    let hidden_sigmoid = shape.hidden_activation == HiddenActivation::Sigmoid;
    let output_sigmoid = shape.output_activation == OutputActivation::Sigmoid;
    let mut a: Vec<Float> = x.iter().map(|&v| mp(v)).collect();
    let mut off = 0;
    for l in 1..sizes.len() {
        let (fan_in, fan_out) = (sizes[l - 1], sizes[l]);
        let w = &beta[off..off + fan_in * fan_out];
        let b = &beta[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let last = l + 1 == sizes.len();
        a = (0..fan_out)
            .map(|o| {
                let mut z = b[o].clone();
                for (i, ai) in a.iter().enumerate() {
                    z += Float::with_val(ORACLE_BITS, &w[o * fan_in + i] * ai);
                }
                match (last, output_sigmoid) {
                    (true, false) => z,
                    (true, true) => mp_activation(z, true),
                    (false, _) => mp_activation(z, hidden_sigmoid),
                }
            })
            .collect();
    }
    a
}

/// Central-difference Jacobian of the model outputs with respect to the
/// flattened parameters, one row per (sample, output) pair. Evaluated in
/// 256-bit arithmetic so that the quotient carries only truncation error.
pub fn finite_difference_jacobian(
    shape: &MlpShape,
    beta: &DenseVector,
    x: &DenseMatrix,
    step: f64,
) -> Vec<Vec<f64>> {
    let m = shape.output_dim();
    let b = beta.len();
    let base: Vec<Float> = beta.iter().map(|&v| mp(v)).collect();
    let h = mp(step);
    let mut jac = vec![vec![0.0; b]; x.rows() * m];
    for p in 0..b {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[p] += &h;
        minus[p] -= &h;
        for i in 0..x.rows() {
            let fp = mp_forward(shape, &plus, x.row(i));
            let fm = mp_forward(shape, &minus, x.row(i));
            for k in 0..m {
                let d = Float::with_val(ORACLE_BITS, &fp[k] - &fm[k])
                    / Float::with_val(ORACLE_BITS, &h * 2u32);
                jac[i * m + k][p] = d.to_f64();
            }
        }
    }
    jac
}

/// Largest element-wise error between analytic and finite-difference
/// Jacobians: relative where either magnitude is at least `1e-8`,
/// absolute otherwise.
pub fn max_jacobian_error(analytic: &DenseMatrix, fd: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in fd.iter().enumerate() {
        for (p, &f) in row.iter().enumerate() {
            let a = analytic.get(i, p);
            let scale = a.abs().max(f.abs());
            let err = if scale < 1e-8 {
                (a - f).abs()
            } else {
                (a - f).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    worst
}

/// `r(β) = b − Aβ`, `J = A`.
pub struct LinearProblem {
    pub a: DenseMatrix,
    pub b: DenseVector,
}

impl ResidualProvider for LinearProblem {
    fn residual_len(&self) -> usize {
        self.a.rows()
    }
    fn param_len(&self) -> usize {
        self.a.cols()
    }
    fn residuals(&self, beta: &DenseVector) -> Result<DenseVector, LinalgError> {
        let ab = self.a.mul_vec(beta)?;
        DenseVector::new(self.b.iter().zip(ab.iter()).map(|(b, a)| b - a).collect())
    }
    fn residuals_and_jacobian(
        &self,
        beta: &DenseVector,
    ) -> Result<(DenseVector, DenseMatrix), LinalgError> {
        Ok((self.residuals(beta)?, self.a.clone()))
    }
}

/// `y = a·exp(b·x)` with parameters `(a, b)`.
pub struct ExponentialFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl ExponentialFit {
    /// Twenty noiseless samples at `x = 0, 0.1, …, 1.9`.
    pub fn noiseless(a: f64, b: f64) -> Self {
        let xs: Vec<f64> = (0..20).map(|i| f64::from(i) * 0.1).collect();
        let ys = xs.iter().map(|x| a * (b * x).exp()).collect();
        Self { xs, ys }
    }
}

impl ResidualProvider for ExponentialFit {
    fn residual_len(&self) -> usize {
        self.xs.len()
    }
    fn param_len(&self) -> usize {
        2
    }
    fn residuals(&self, beta: &DenseVector) -> Result<DenseVector, LinalgError> {
        let (a, b) = (beta[0], beta[1]);
        DenseVector::new(
            self.xs
                .iter()
                .zip(&self.ys)
                .map(|(x, y)| y - a * (b * x).exp())
                .collect(),
        )
    }
    fn residuals_and_jacobian(
        &self,
        beta: &DenseVector,
    ) -> Result<(DenseVector, DenseMatrix), LinalgError> {
        let (a, b) = (beta[0], beta[1]);
        let mut jac = Vec::with_capacity(2 * self.xs.len());
        for x in &self.xs {
            let e = (b * x).exp();
            jac.push(e);
            jac.push(a * x * e);
        }
        Ok((
            self.residuals(beta)?,
            DenseMatrix::new(self.xs.len(), 2, jac)?,
        ))
    }
}

pub fn xor_data() -> (DenseMatrix, DenseMatrix) {
    let x = DenseMatrix::from_rows(&[
        vec![0.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![1.0, 1.0],
    ])
    .unwrap();
    let y = DenseMatrix::new(4, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    (x, y)
}

/// Accepted S values strictly decrease and every λ lies in bounds.
pub fn check_history(h: &TrainHistory, cfg: &LmConfig) -> Result<(), String> {
    let mut last = h.initial_sse;
    for r in &h.records {
        if !(cfg.lambda_min..=cfg.lambda_max).contains(&r.lambda) {
            return Err(format!(
                "iteration {}: λ = {} out of bounds",
                r.iteration, r.lambda
            ));
        }
        if r.accepted {
            let after = r.sse_after.ok_or("accepted record without sse_after")?;
            if !(after < r.sse_before) || !(after < last) {
                return Err(format!(
                    "iteration {}: accepted S {} not below {}",
                    r.iteration, after, last
                ));
            }
            last = after;
        }
    }
    Ok(())
}

/// Deterministic two-class table in the heart-failure column layout. Rows
/// are synthetic: the label depends on age, time and platelets.
pub fn synthetic_records_csv(rows: usize, seed: u64) -> String {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from(
        "age,anaemia,creatinine_phosphokinase,diabetes,ejection_fraction,high_blood_pressure,platelets,serum_creatinine,serum_sodium,sex,smoking,time,DEATH_EVENT\n",
    );
    for _ in 0..rows {
        let age = rng.gen_range(40..95);
        let time = rng.gen_range(4..285);
        let platelets = rng.gen_range(150_000.0_f64..400_000.0).round();
        let risk =
            0.04 * (age as f64 - 60.0) - 0.02 * (time as f64 - 130.0) + rng.gen_range(-1.0..1.0);
        let label = u8::from(risk > 0.0);
        s.push_str(&format!(
            "{age},{},{},{},{},{},{platelets},{:.1},{},{},{},{time},{label}\n",
            rng.gen_range(0..2),
            rng.gen_range(23..7861),
            rng.gen_range(0..2),
            rng.gen_range(14..80),
            rng.gen_range(0..2),
            rng.gen_range(0.5..9.4),
            rng.gen_range(113..148),
            rng.gen_range(0..2),
            rng.gen_range(0..2),
        ));
    }
    s
}
