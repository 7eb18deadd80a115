use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    /// Fraction of total variance captured by each of the two components.
    pub explained: [f64; 2],
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
}

impl Projection {
    pub fn project(&self, row: &[f64]) -> [f64; 2] {
        let dot = |c: &[f64]| {
            row.iter()
                .zip(&self.mean)
                .zip(c)
                .map(|((x, m), w)| (x - m) * w)
                .sum::<f64>()
        };
        [dot(&self.components[0]), dot(&self.components[1])]
    }
}

/// Projects rows onto the top two principal axes. Each axis is signed so that
/// its largest-magnitude loading is positive.
pub fn project_2d<V: AsRef<[f64]>>(rows: &[V]) -> Result<Projection, AnalysisError> {
    if rows.len() < 3 {
        return Err(AnalysisError::TooFewMembers {
            need: 3,
            got: rows.len(),
        });
    }
    let d = rows[0].as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != d) {
        return Err(AnalysisError::LengthMismatch);
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut()
            .zip(r.as_ref())
            .for_each(|(m, x)| *m += x / n);
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in rows {
        centered
            .iter_mut()
            .zip(r.as_ref().iter().zip(&mean))
            .for_each(|(c, (x, m))| *c = x - m);
        for i in 0..d {
            if centered[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[(i, j)] += centered[i] * centered[j] / n;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    let total: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    if total <= 0.0 {
        return Err(AnalysisError::DegenerateInput(
            "all vectors are identical".into(),
        ));
    }
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let axis = |k: usize| -> (Vec<f64>, f64) {
        let Some(&col) = idx.get(k) else {
            return (vec![0.0; d], 0.0);
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| {
                if x.abs() > best.1.abs() + 1e-12 {
                    (i, x)
                } else {
                    best
                }
            });
        if lead.1 < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (v, eig.eigenvalues[col].max(0.0))
    };
    let (c0, l0) = axis(0);
    let (c1, l1) = axis(1);
    let mut p = Projection {
        points: Vec::with_capacity(rows.len()),
        explained: [l0 / total, l1 / total],
        mean,
        components: [c0, c1],
    };
    p.points = rows.iter().map(|r| p.project(r.as_ref())).collect();
    Ok(p)
}
