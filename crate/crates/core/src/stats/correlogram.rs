use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{spearman, spearman_ci, Contingency};
use crate::error::{Error, Result};
use crate::synthgen::{ArtifactKind, Sample, N_ARTIFACTS};

const N_VARS: usize = N_ARTIFACTS + 1;

/// Variable order: the seven artifacts, then the diagnosis (malignant = 1).
pub const VARIABLES: [&str; N_VARS] = [
    "dark_corner",
    "hair",
    "gel_border",
    "gel_bubble",
    "ruler",
    "ink",
    "patch",
    "diagnosis",
];

/// Pairwise Spearman correlations over the seven artifact flags and the label.
///
/// `rho[i][j]` is `None` when a variable is constant. `ci[i][j]` is `None` on the
/// diagonal, for undefined rho, and where the interval degenerates (|rho| = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    pub variables: Vec<String>,
    pub n: usize,
    pub rho: [[Option<f64>; N_VARS]; N_VARS],
    pub ci: [[Option<(f64, f64)>; N_VARS]; N_VARS],
    pub joint: [[Contingency; N_VARS]; N_VARS],
}

impl Correlogram {
    /// True when the 95% interval excludes zero.
    pub fn is_significant(&self, i: usize, j: usize) -> bool {
        match self.ci[i][j] {
            Some((lo, hi)) => lo > 0.0 || hi < 0.0,
            None => self.rho[i][j].is_some_and(|r| r.abs() == 1.0) && i != j,
        }
    }

    /// Plain-text matrix dump: a `variables` line, then `rho`, `ci_low` and
    /// `ci_high` blocks of eight rows each. Missing entries are written `NA`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variables,{}", self.variables.join(","));
        let _ = writeln!(out, "n,{}", self.n);
        let block = |out: &mut String, name: &str, get: &dyn Fn(usize, usize) -> Option<f64>| {
            let _ = writeln!(out, "[{name}]");
            for i in 0..N_VARS {
                let row: Vec<String> = (0..N_VARS)
                    .map(|j| match get(i, j) {
                        Some(v) => format!("{v:.6}"),
                        None => "NA".to_string(),
                    })
                    .collect();
                let _ = writeln!(out, "{},{}", self.variables[i], row.join(","));
            }
        };
        block(&mut out, "rho", &|i, j| self.rho[i][j]);
        block(&mut out, "ci_low", &|i, j| self.ci[i][j].map(|c| c.0));
        block(&mut out, "ci_high", &|i, j| self.ci[i][j].map(|c| c.1));
        out
    }
}

fn variables_of(s: &Sample) -> [bool; N_VARS] {
    let mut v = [false; N_VARS];
    v[..N_ARTIFACTS].copy_from_slice(&s.artifacts);
    v[N_ARTIFACTS] = s.diagnosis.is_malignant();
    v
}

pub fn correlogram(dataset: &[Sample]) -> Result<Correlogram> {
    if dataset.is_empty() {
        return Err(Error::Empty("correlogram needs at least one sample"));
    }
    let n = dataset.len();
    let columns: Vec<Vec<bool>> = {
        let rows: Vec<[bool; N_VARS]> = dataset.iter().map(variables_of).collect();
        (0..N_VARS)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect()
    };
    let numeric: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| c.iter().map(|&b| f64::from(u8::from(b))).collect())
        .collect();

    let mut rho = [[None; N_VARS]; N_VARS];
    let mut ci = [[None; N_VARS]; N_VARS];
    let mut joint = [[Contingency::default(); N_VARS]; N_VARS];
    for i in 0..N_VARS {
        for j in 0..N_VARS {
            joint[i][j] = Contingency::from_flags(&columns[i], &columns[j])?;
            if i == j {
                rho[i][j] = Some(1.0);
                continue;
            }
            let r = match spearman(&numeric[i], &numeric[j]) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            };
            rho[i][j] = r;
            ci[i][j] = r.and_then(|r| spearman_ci(r, n).ok());
        }
    }
    Ok(Correlogram {
        variables: VARIABLES.iter().map(|s| s.to_string()).collect(),
        n,
        rho,
        ci,
        joint,
    })
}

/// Index of an artifact's row in the correlogram.
pub fn variable_index(kind: ArtifactKind) -> usize {
    kind.index()
}
