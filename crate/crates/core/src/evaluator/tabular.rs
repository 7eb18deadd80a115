//! Tabular teacher-preference environment.
//!
//! Each teacher holds a hidden preference vector over the one-hot space; the
//! "distilled accuracy" of an architecture is `sigmoid(theta . onehot / sqrt(E))`
//! plus seeded Gaussian noise. Different teachers prefer different students,
//! which is exactly the property the search is supposed to expose.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::micronet::sigmoid;
use super::EvalError;
use crate::seed;
use crate::space::{ArchitectureConfig, SearchSpaceDef};

/// Accuracy is clamped to `[ACC_FLOOR, 1 - ACC_FLOOR]`.
const ACC_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularTeacher {
    pub tag: String,
    pub theta: Vec<f64>,
}

impl TabularTeacher {
    /// `theta ~ N(0, scale^2)` per bit.
    pub fn seeded(
        tag: impl Into<String>,
        onehot_len: usize,
        teacher_seed: u64,
        scale: f64,
    ) -> Self {
        let mut rng = seed::rng(seed::derive(teacher_seed, &[seed::stream::TEACHER]));
        let theta = (0..onehot_len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Self {
            tag: tag.into(),
            theta,
        }
    }

    /// A seeded teacher whose preference vector is orthogonal to `other`'s,
    /// rescaled to the same norm.
    pub fn orthogonal_to(
        other: &TabularTeacher,
        tag: impl Into<String>,
        teacher_seed: u64,
    ) -> Self {
        let raw = Self::seeded(tag, other.theta.len(), teacher_seed, 1.0);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let oo = dot(&other.theta, &other.theta);
        let mut theta = raw.theta.clone();
        if oo > 0.0 {
            let c = dot(&theta, &other.theta) / oo;
            theta
                .iter_mut()
                .zip(&other.theta)
                .for_each(|(t, o)| *t -= c * o);
        }
        let n = dot(&theta, &theta).sqrt();
        let target = oo.sqrt();
        if n > 0.0 {
            theta.iter_mut().for_each(|t| *t *= target / n);
        }
        Self {
            tag: raw.tag,
            theta,
        }
    }

    pub fn score(&self, onehot: &[f64]) -> f64 {
        let dot: f64 = self.theta.iter().zip(onehot).map(|(a, b)| a * b).sum();
        dot / (self.theta.len() as f64).sqrt()
    }
}

#[derive(Clone, Debug, Default)]
pub struct TabularEnv {
    teachers: BTreeMap<String, TabularTeacher>,
    pub noise_sigma: f64,
}

impl TabularEnv {
    pub fn new(noise_sigma: f64) -> Self {
        Self {
            teachers: BTreeMap::new(),
            noise_sigma,
        }
    }

    pub fn register(&mut self, teacher: TabularTeacher) {
        self.teachers.insert(teacher.tag.clone(), teacher);
    }

    pub fn teacher(&self, tag: &str) -> Option<&TabularTeacher> {
        self.teachers.get(tag)
    }

    /// Noise-free accuracy.
    pub fn expected_accuracy(
        &self,
        space: &SearchSpaceDef,
        arch: &ArchitectureConfig,
        teacher_id: &str,
    ) -> Result<f64, EvalError> {
        let t = self
            .teachers
            .get(teacher_id)
            .ok_or_else(|| EvalError::UnknownTeacher(teacher_id.to_string()))?;
        if t.theta.len() != space.onehot_len() {
            return Err(EvalError::LengthMismatch {
                expected: space.onehot_len(),
                got: t.theta.len(),
            });
        }
        let x = space.encode_onehot(arch).to_f64();
        Ok(sigmoid(t.score(&x)).clamp(ACC_FLOOR, 1.0 - ACC_FLOOR))
    }

    pub fn evaluate(
        &self,
        space: &SearchSpaceDef,
        arch: &ArchitectureConfig,
        teacher_id: &str,
        noise_seed: u64,
    ) -> Result<f64, EvalError> {
        let base = self.expected_accuracy(space, arch, teacher_id)?;
        if self.noise_sigma == 0.0 {
            return Ok(base);
        }
        let mut rng = seed::rng(seed::derive(noise_seed, &[seed::stream::TABULAR_NOISE]));
        let z: f64 = StandardNormal.sample(&mut rng);
        Ok((base + self.noise_sigma * z).clamp(ACC_FLOOR, 1.0 - ACC_FLOOR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SearchSpaceDef {
        SearchSpaceDef::single_block(
            4,
            &[
                ("op_type", &["relu", "swish", "tanh"]),
                ("kernel", &["3", "5"]),
                ("layers", &["1", "2", "3"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_preference_gives_half() {
        let s = toy();
        let mut env = TabularEnv::new(0.0);
        env.register(TabularTeacher {
            tag: "zero".into(),
            theta: vec![0.0; s.onehot_len()],
        });
        for a in s.enumerate(100).unwrap() {
            assert_eq!(env.evaluate(&s, &a, "zero", 1).unwrap(), 0.5);
        }
    }

    #[test]
    fn opposite_teachers_sum_to_one() {
        let s = toy();
        let a = TabularTeacher::seeded("a", s.onehot_len(), 3, 1.0);
        let b = TabularTeacher {
            tag: "b".into(),
            theta: a.theta.iter().map(|t| -t).collect(),
        };
        let mut env = TabularEnv::new(0.0);
        env.register(a);
        env.register(b);
        for x in s.enumerate(100).unwrap() {
            let sum = env.evaluate(&s, &x, "a", 0).unwrap() + env.evaluate(&s, &x, "b", 0).unwrap();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_teacher_has_same_norm() {
        let a = TabularTeacher::seeded("a", 77, 1, 1.0);
        let b = TabularTeacher::orthogonal_to(&a, "b", 2);
        let dot: f64 = a.theta.iter().zip(&b.theta).map(|(x, y)| x * y).sum();
        let na: f64 = a.theta.iter().map(|x| x * x).sum::<f64>();
        let nb: f64 = b.theta.iter().map(|x| x * x).sum::<f64>();
        assert!(dot.abs() < 1e-9);
        assert!((na - nb).abs() < 1e-9);
    }

    #[test]
    fn noise_is_seeded_and_unknown_teacher_errors() {
        let s = toy();
        let mut env = TabularEnv::new(0.01);
        env.register(TabularTeacher::seeded("t", s.onehot_len(), 0, 1.0));
        let a = s.random_sample(0);
        assert_eq!(env.evaluate(&s, &a, "t", 5), env.evaluate(&s, &a, "t", 5));
        assert_ne!(env.evaluate(&s, &a, "t", 5), env.evaluate(&s, &a, "t", 6));
        assert_eq!(
            env.evaluate(&s, &a, "nope", 0),
            Err(EvalError::UnknownTeacher("nope".into()))
        );
    }
}
