//! Distillation losses and their gradients with respect to the student.

use super::EvalError;

pub fn softmax(z: &[f64]) -> Vec<f64> {
    softmax_tempered(z, 1.0)
}

pub fn softmax_tempered(z: &[f64], tau: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = z.iter().map(|&v| ((v - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

pub fn log_softmax_tempered(z: &[f64], tau: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|&v| ((v - m) / tau).exp()).sum::<f64>().ln();
    z.iter().map(|&v| (v - m) / tau - lse).collect()
}

/// Cross-entropy of `softmax(logits)` against a hard label, with its gradient.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), EvalError> {
    if label >= logits.len() {
        return Err(EvalError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let logp = log_softmax_tempered(logits, 1.0);
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[label] -= 1.0;
    Ok((-logp[label], grad))
}

/// `KL(p || q)` with the `0 ln 0 = 0` convention.
fn kl_to_log(p: &[f64], log_q: &[f64]) -> f64 {
    p.iter()
        .zip(log_q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &lq)| pi * (pi.ln() - lq))
        .sum()
}

fn check_params(tau: f64, alpha: f64) -> Result<(), EvalError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(EvalError::NonPositiveTemperature(tau));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(EvalError::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Soft-logit distillation loss:
///
/// ```text
/// L = alpha * tau^2 * KL(softmax(t / tau) || softmax(s / tau)) + (1 - alpha) * CE(softmax(s), y)
/// ```
///
/// Returns the loss and `dL/ds`.
pub fn kd_loss(
    student_logits: &[f64],
    teacher_logits: &[f64],
    label: usize,
    tau: f64,
    alpha: f64,
) -> Result<(f64, Vec<f64>), EvalError> {
    check_params(tau, alpha)?;
    if student_logits.len() != teacher_logits.len() {
        return Err(EvalError::LengthMismatch {
            expected: student_logits.len(),
            got: teacher_logits.len(),
        });
    }
    let targets = softmax_tempered(teacher_logits, tau);
    kd_loss_with_targets(student_logits, &targets, label, tau, alpha)
}

/// Same as [`kd_loss`] but with precomputed tempered teacher probabilities,
/// e.g. the output of [`ensemble_soft_targets`].
pub fn kd_loss_with_targets(
    student_logits: &[f64],
    soft_targets: &[f64],
    label: usize,
    tau: f64,
    alpha: f64,
) -> Result<(f64, Vec<f64>), EvalError> {
    check_params(tau, alpha)?;
    let n = student_logits.len();
    if n < 2 {
        return Err(EvalError::LengthMismatch {
            expected: 2,
            got: n,
        });
    }
    if soft_targets.len() != n {
        return Err(EvalError::LengthMismatch {
            expected: n,
            got: soft_targets.len(),
        });
    }
    let (ce, ce_grad) = cross_entropy(student_logits, label)?;
    let log_q = log_softmax_tempered(student_logits, tau);
    let kl = kl_to_log(soft_targets, &log_q);
    let soft_w = alpha * tau * tau;
    let loss = soft_w * kl + (1.0 - alpha) * ce;
    // d/ds [tau^2 KL] = tau * (q - p)
    let grad = log_q
        .iter()
        .zip(soft_targets)
        .zip(&ce_grad)
        .map(|((&lq, &p), &g)| alpha * tau * (lq.exp() - p) + (1.0 - alpha) * g)
        .collect();
    Ok((loss, grad))
}

/// Mean squared error between feature vectors and its gradient w.r.t. the student.
pub fn feature_mse_loss(student: &[f64], teacher: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
    if student.len() != teacher.len() || student.is_empty() {
        return Err(EvalError::LengthMismatch {
            expected: teacher.len(),
            got: student.len(),
        });
    }
    let n = student.len() as f64;
    let diff: Vec<f64> = student.iter().zip(teacher).map(|(s, t)| s - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.iter().map(|d| 2.0 * d / n).collect();
    Ok((loss, grad))
}

/// Mean of the per-teacher tempered softmax distributions.
pub fn ensemble_soft_targets(teacher_logits: &[Vec<f64>], tau: f64) -> Result<Vec<f64>, EvalError> {
    let first = teacher_logits.first().ok_or(EvalError::EmptyEnsemble)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(EvalError::NonPositiveTemperature(tau));
    }
    let mut acc = vec![0.0; first.len()];
    for t in teacher_logits {
        if t.len() != first.len() {
            return Err(EvalError::LengthMismatch {
                expected: first.len(),
                got: t.len(),
            });
        }
        for (a, p) in acc.iter_mut().zip(softmax_tempered(t, tau)) {
            *a += p;
        }
    }
    let k = teacher_logits.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}
