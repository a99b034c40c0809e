use crate::error::{Error, Result};

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation("need at least 3 observations"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// 2×2 table of two binary variables.
///
/// ```text
///            y=1   y=0
///   x=1       a     b
///   x=0       c     d
/// ```
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Contingency {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl Contingency {
    pub fn from_flags(x: &[bool], y: &[bool]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let mut t = Contingency::default();
        for (&xi, &yi) in x.iter().zip(y) {
            match (xi, yi) {
                (true, true) => t.a += 1,
                (true, false) => t.b += 1,
                (false, true) => t.c += 1,
                (false, false) => t.d += 1,
            }
        }
        Ok(t)
    }

    pub fn total(&self) -> usize {
        self.a + self.b + self.c + self.d
    }
}

pub fn phi_from_table(t: &Contingency) -> Result<f64> {
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 {
        return Err(Error::DegenerateMargin);
    }
    Ok(((a * d - b * c) / denom.sqrt()).clamp(-1.0, 1.0))
}

/// Phi coefficient of two binary vectors.
pub fn phi(x: &[bool], y: &[bool]) -> Result<f64> {
    phi_from_table(&Contingency::from_flags(x, y)?)
}

/// 95% interval for Spearman's rho via the Fisher z-transform.
pub fn spearman_ci(rho: f64, n: usize) -> Result<(f64, f64)> {
    if n < 4 {
        return Err(Error::DegenerateInterval(format!("n = {n} < 4")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::DegenerateInterval(format!("|rho| = {} is not < 1", rho.abs())));
    }
    let z = rho.atanh();
    let half = 1.96 / ((n - 3) as f64).sqrt();
    Ok(((z - half).tanh(), (z + half).tanh()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_monotone_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn phi_cases() {
        let x = [true, false, true, false, true];
        let not_x: Vec<bool> = x.iter().map(|b| !b).collect();
        assert_eq!(phi(&x, &x).unwrap(), 1.0);
        assert_eq!(phi(&x, &not_x).unwrap(), -1.0);
        // (ad - bc) / sqrt(4*4*4*4) = (9 - 1) / 16
        let t = Contingency {
            a: 3,
            b: 1,
            c: 1,
            d: 3,
        };
        assert_eq!(phi_from_table(&t).unwrap(), 0.5);
        assert!(matches!(
            phi(&[true, true], &[true, false]),
            Err(Error::DegenerateMargin)
        ));
    }

    #[test]
    fn fisher_interval() {
        let (lo, hi) = spearman_ci(0.0, 103).unwrap();
        assert!((lo + hi).abs() < 1e-15);
        assert!((hi - lo - 2.0 * 0.196f64.tanh()).abs() < 1e-15);

        let (lo, hi) = spearman_ci(0.5, 103).unwrap();
        let z = 0.5f64.atanh();
        assert!((lo - (z - 0.196).tanh()).abs() < 1e-15);
        assert!((hi - (z + 0.196).tanh()).abs() < 1e-15);

        let mut last = f64::INFINITY;
        for n in [5, 10, 50, 100, 1000, 10000] {
            let (lo, hi) = spearman_ci(0.3, n).unwrap();
            assert!(hi - lo < last);
            last = hi - lo;
        }
        assert!(spearman_ci(0.1, 3).is_err());
        assert!(spearman_ci(1.0, 30).is_err());
    }
}
