//! Test-time-augmented scoring, multi-run AUC reports and feature retrieval.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Network;
use crate::rng;
use crate::stats::{auc, mean_std};
use crate::synthgen::Sample;
use crate::transforms::{augment, AugmentPolicy};

/// Default number of augmented copies averaged per test image.
pub const TTA_SAMPLES: usize = 50;

/// Seed of the `index`-th augmentation of sample `id`.
pub fn tta_seed(seed: u64, id: u64, index: usize) -> u64 {
    seed ^ rng::derive(id, index as u64)
}

/// Mean malignant probability over `n` seeded augmentations of `sample`.
pub fn tta_predict(net: &Network, sample: &Sample, n: usize, policy: &AugmentPolicy, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("test-time augmentation needs n >= 1".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let aug = augment(sample, policy, tta_seed(seed, sample.id, i));
        total += net.predict(&aug.image)?;
    }
    Ok((total / n as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: String,
    pub dataset: String,
    pub transform: String,
    pub aucs: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub n_runs: usize,
}

impl EvalReport {
    pub fn from_aucs(experiment: &str, dataset: &str, transform: &str, aucs: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&aucs);
        Self {
            experiment: experiment.into(),
            dataset: dataset.into(),
            transform: transform.into(),
            n_runs: aucs.len(),
            aucs,
            mean,
            std,
        }
    }
}

/// TTA scores of every test sample under one network.
pub fn tta_scores(net: &Network, test: &[Sample], n: usize, policy: &AugmentPolicy, seed: u64) -> Result<Vec<f64>> {
    test.iter().map(|s| tta_predict(net, s, n, policy, seed)).collect()
}

/// One AUC per network, each from TTA scores over the whole test set.
pub fn evaluate(
    nets: &[Network],
    test: &[Sample],
    n: usize,
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<EvalReport> {
    if nets.is_empty() {
        return Err(Error::Empty("evaluate needs at least one network"));
    }
    let labels: Vec<bool> = test.iter().map(|s| s.diagnosis.is_malignant()).collect();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass("test set".into()));
    }
    let aucs = nets
        .iter()
        .map(|net| Ok(auc(&tta_scores(net, test, n, policy, seed)?, &labels)?.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_aucs("", "", "", aucs))
}

/// Columns of the results table.
pub const RESULTS_HEADER: [&str; 6] = ["experiment", "dataset", "transform", "run_index", "auc", "run_id"];

/// One row per run, appended to a CSV table; the header is written when the
/// file is new. `run_ids` must have one entry per run.
pub fn append_results(path: &Path, report: &EvalReport, run_ids: &[String]) -> Result<()> {
    if run_ids.len() != report.aucs.len() {
        return Err(Error::LengthMismatch {
            left: run_ids.len(),
            right: report.aucs.len(),
        });
    }
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(RESULTS_HEADER)?;
    }
    for (i, (a, id)) in report.aucs.iter().zip(run_ids).enumerate() {
        w.write_record([
            report.experiment.as_str(),
            &report.dataset,
            &report.transform,
            &i.to_string(),
            &a.to_string(),
            id,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub dataset: String,
    pub transform: String,
    pub run_index: usize,
    pub auc: f64,
    pub run_id: String,
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Group result rows into reports by (experiment, dataset, transform), in
/// first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<EvalReport> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let k = (r.experiment.clone(), r.dataset.clone(), r.transform.clone());
        match keys.iter().position(|x| *x == k) {
            Some(i) => groups[i].push(r.auc),
            None => {
                keys.push(k);
                groups.push(vec![r.auc]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|((e, d, t), aucs)| EvalReport::from_aucs(&e, &d, &t, aucs))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalGrid {
    pub query: u64,
    pub k: usize,
    /// `(gallery id, distance)`, nearest first.
    pub ranked: Vec<(u64, f64)>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// The `k` gallery samples nearest to `query` in pooled extractor features.
/// Ties are broken by id; `k` is clamped to the gallery size.
pub fn retrieval_grid(net: &Network, query: &Sample, gallery: &[Sample], k: usize) -> Result<RetrievalGrid> {
    let q = net.features(&query.image)?;
    let mut ranked = gallery
        .iter()
        .map(|s| Ok((s.id, euclidean(&q, &net.features(&s.image)?))))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.dedup_by_key(|r| r.0);
    ranked.truncate(k);
    Ok(RetrievalGrid {
        query: query.id,
        k: ranked.len(),
        ranked,
    })
}

/// Ranked ids as CSV: `query,rank,id,distance`.
pub fn write_retrieval(path: &Path, grids: &[RetrievalGrid]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "query,rank,id,distance")?;
    for g in grids {
        for (rank, (id, d)) in g.ranked.iter().enumerate() {
            writeln!(f, "{},{},{},{}", g.query, rank, id, d)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::DEFAULT_CHANNELS;
    use crate::synthgen::{gen_dataset, GenConfig};

    fn data(n: usize) -> Vec<Sample> {
        let mut c = GenConfig::new(n, 3);
        c.image_size = 16;
        gen_dataset(&c).unwrap()
    }

    fn net() -> Network {
        Network::new(16, DEFAULT_CHANNELS, 0.3, 2).unwrap()
    }

    #[test]
    fn single_identity_draw_is_plain_forward() {
        let d = data(4);
        let n = net();
        let p = tta_predict(&n, &d[0], 1, &AugmentPolicy::identity(), 9).unwrap();
        assert_eq!(p, n.predict(&d[0].image).unwrap());
    }

    #[test]
    fn tta_is_deterministic_and_bounded() {
        let d = data(4);
        let n = net();
        let pol = AugmentPolicy::default();
        let a = tta_predict(&n, &d[1], 5, &pol, 4).unwrap();
        assert_eq!(a, tta_predict(&n, &d[1], 5, &pol, 4).unwrap());
        assert!((0.0..=1.0).contains(&a));
        assert!(tta_predict(&n, &d[1], 0, &pol, 4).is_err());
    }

    #[test]
    fn duplicated_nets_have_zero_spread() {
        let d = data(12);
        let n = net();
        let r = evaluate(&[n.clone(), n], &d, 2, &AugmentPolicy::default(), 1).unwrap();
        assert_eq!(r.n_runs, 2);
        assert_eq!(r.aucs[0], r.aucs[1]);
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn constant_scores_give_half() {
        let d = data(12);
        let mut n = net();
        n.params = n.params.zeros_like();
        let r = evaluate(&[n], &d, 1, &AugmentPolicy::identity(), 1).unwrap();
        assert_eq!(r.aucs, vec![0.5]);
    }

    #[test]
    fn report_statistics() {
        let r = EvalReport::from_aucs("e", "d", "t", vec![0.6, 0.7, 0.8]);
        assert!((r.mean - 0.7).abs() < 1e-12);
        assert!((r.std - (0.02f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn results_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.csv");
        let r = EvalReport::from_aucs("lntl", "trap", "traditional", vec![0.5, 0.25]);
        append_results(&p, &r, &["a".into(), "b".into()]).unwrap();
        append_results(&p, &r, &["c".into(), "d".into()]).unwrap();
        let rows = read_results(&p).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].auc, 0.25);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("experiment,dataset,transform,run_index,auc,run_id\n"));
        assert_eq!(text.matches("experiment").count(), 1);
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n_runs, 4);
    }

    #[test]
    fn retrieval_contract() {
        let d = data(10);
        let n = net();
        let g = retrieval_grid(&n, &d[3], &d, 4).unwrap();
        assert_eq!(g.ranked[0], (d[3].id, 0.0));
        assert!(g.ranked.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(retrieval_grid(&n, &d[3], &d, 100).unwrap().ranked.len(), 10);
    }
}
