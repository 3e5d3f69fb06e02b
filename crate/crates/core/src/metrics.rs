//! Evaluation metrics: AUROC, multi-experiment aggregation, and FID.

use crate::error::{Error, Result};
use crate::objectives::TargetScheme;
use crate::scenario::ScenarioSpec;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Area under the ROC curve via the Mann-Whitney statistic: the
/// probability that a uniformly random anomaly outscores a uniformly
/// random normal, with ties counted one half.
///
/// `labels` are binary (0 normal, 1 anomaly); both classes must appear.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs both classes in the labels".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());

    // Average ranks over tie groups, then the rank-sum statistic.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One finished experiment, as persisted in run directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub dataset: String,
    pub scenario: ScenarioSpec,
    pub scheme: TargetScheme,
    /// In [0, 1].
    pub auroc: f64,
    /// Identifier of the selected detection criterion.
    pub criterion: String,
    pub runtime_seconds: f64,
    pub seed: u64,
}

/// Axes results can be grouped on when aggregating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupAxis {
    Dataset,
    GammaL,
    GammaP,
    KL,
    C,
    Seed,
}

impl GroupAxis {
    pub fn key(&self) -> &'static str {
        match self {
            GroupAxis::Dataset => "dataset",
            GroupAxis::GammaL => "gamma_l",
            GroupAxis::GammaP => "gamma_p",
            GroupAxis::KL => "k_l",
            GroupAxis::C => "c",
            GroupAxis::Seed => "seed",
        }
    }

    fn value(&self, r: &ExperimentResult) -> String {
        match self {
            GroupAxis::Dataset => r.dataset.clone(),
            GroupAxis::GammaL => format!("{}", r.scenario.gamma_l),
            GroupAxis::GammaP => format!("{}", r.scenario.gamma_p),
            GroupAxis::KL => format!("{}", r.scenario.k_l()),
            GroupAxis::C => format!("{}", r.scheme.c),
            GroupAxis::Seed => format!("{}", r.seed),
        }
    }
}

/// Mean/std AUROC of a group of experiments, in percentage points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub group: BTreeMap<String, String>,
    pub mean_auroc: f64,
    pub std_auroc: f64,
    pub n_experiments: usize,
}

/// Group results on the given axes and report mean and population standard
/// deviation of AUROC, scaled to percentage points.
pub fn aggregate(
    results: &[ExperimentResult],
    group_by: &[GroupAxis],
) -> Result<Vec<AggregateReport>> {
    if results.is_empty() {
        return Err(Error::invalid("no results to aggregate"));
    }
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in results {
        let key: Vec<String> = group_by.iter().map(|a| a.value(r)).collect();
        groups.entry(key).or_default().push(r.auroc * 100.0);
    }
    Ok(groups
        .into_iter()
        .map(|(key, values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            AggregateReport {
                group: group_by
                    .iter()
                    .map(|a| a.key().to_string())
                    .zip(key)
                    .collect(),
                mean_auroc: mean,
                std_auroc: var.sqrt(),
                n_experiments: values.len(),
            }
        })
        .collect())
}

/// Frechet distance between Gaussian fits of two feature matrices:
/// `||mu_r - mu_g||^2 + tr(S_r + S_g - 2 (S_r S_g)^{1/2})`.
///
/// Covariances are sample covariances (n-1 in the denominator). The
/// matrix square root is taken through an eigendecomposition of the
/// symmetrized product; eigenvalues below zero are clamped. Small
/// negative totals (>= -1e-6) clamp to zero.
pub fn fid(features_real: &[Vec<f64>], features_gen: &[Vec<f64>]) -> Result<f64> {
    let check = |m: &[Vec<f64>], name: &str| -> Result<usize> {
        if m.len() < 2 {
            return Err(Error::invalid(format!(
                "{name} needs at least 2 rows to fit a Gaussian, got {}",
                m.len()
            )));
        }
        let d = m[0].len();
        if d == 0 {
            return Err(Error::invalid(format!("{name} has zero feature columns")));
        }
        for row in m {
            if row.len() != d {
                return Err(Error::invalid(format!("{name} rows have ragged lengths")));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{name} contains non-finite values")));
            }
        }
        Ok(d)
    };
    let d = check(features_real, "features_real")?;
    let d_g = check(features_gen, "features_gen")?;
    if d != d_g {
        return Err(Error::ShapeMismatch {
            expected: format!("{d} feature columns"),
            actual: format!("{d_g} feature columns"),
        });
    }

    let (mu_r, cov_r) = gaussian_fit(features_real, d);
    let (mu_g, cov_g) = gaussian_fit(features_gen, d);

    let mean_term: f64 = mu_r.iter().zip(&mu_g).map(|(a, b)| (a - b) * (a - b)).sum();

    // tr sqrt(S_r S_g) through the similar symmetric matrix
    // sqrt(S_r) S_g sqrt(S_r).
    let sqrt_r = sym_sqrt(&cov_r);
    let mut inner = &sqrt_r * &cov_g * &sqrt_r;
    symmetrize(&mut inner);
    let eig = SymmetricEigen::new(inner);
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();

    let value = mean_term + cov_r.trace() + cov_g.trace() - 2.0 * tr_sqrt;
    if value < 0.0 {
        if value < -1e-6 {
            return Err(Error::invalid(format!(
                "FID computation produced {value}, beyond the numerical tolerance"
            )));
        }
        return Ok(0.0);
    }
    Ok(value)
}

fn gaussian_fit(rows: &[Vec<f64>], d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len();
    let mut mean = vec![0.0f64; d];
    for row in rows {
        for (c, &v) in row.iter().enumerate() {
            mean[c] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for row in rows {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
