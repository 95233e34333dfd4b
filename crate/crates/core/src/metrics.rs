//! Detection metrics: DET operating points, equal error rate and minimum
//! normalized detection cost.
//!
//! A trial is accepted when its score is greater than or equal to the
//! threshold. The DET curve lists every distinct score as a threshold plus a
//! final `+inf` threshold that rejects everything, so it always runs from
//! `(p_miss, p_fa) = (0, 1)` to `(1, 0)`.

use std::collections::HashMap;

use crate::embedio::{ScoreSet, TrialList};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub thresholds: Vec<f64>,
    pub p_miss: Vec<f64>,
    pub p_fa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    p_target: Vec<f64>,
    c_miss: f64,
    c_fa: f64,
}

impl CostParams {
    pub fn new(p_target: Vec<f64>, c_miss: f64, c_fa: f64) -> Result<Self> {
        if p_target.is_empty() {
            return Err(Error::Validation("at least one target prior is required".into()));
        }
        if let Some(p) = p_target.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Validation(format!("target prior {p} is outside (0, 1)")));
        }
        if !(c_miss > 0.0 && c_miss.is_finite() && c_fa > 0.0 && c_fa.is_finite()) {
            return Err(Error::Validation(format!(
                "costs must be positive, got c_miss={c_miss} c_fa={c_fa}"
            )));
        }
        Ok(Self {
            p_target,
            c_miss,
            c_fa,
        })
    }

    pub fn p_target(&self) -> &[f64] {
        &self.p_target
    }

    pub fn c_miss(&self) -> f64 {
        self.c_miss
    }

    pub fn c_fa(&self) -> f64 {
        self.c_fa
    }

    /// Normalized cost of one operating point at one prior.
    pub fn normalized_cost(&self, p: f64, p_miss: f64, p_fa: f64) -> f64 {
        let miss = self.c_miss * p;
        let fa = self.c_fa * (1.0 - p);
        (miss * p_miss + fa * p_fa) / miss.min(fa)
    }
}

impl Default for CostParams {
    /// Two target priors, 0.01 and 0.005, with unit costs.
    fn default() -> Self {
        Self {
            p_target: vec![0.01, 0.005],
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

/// DET curve from separate target and nontarget score lists.
pub fn det_curve_from_scores(targets: &[f64], nontargets: &[f64]) -> Result<DetCurve> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::DegenerateKeys {
            targets: targets.len(),
            nontargets: nontargets.len(),
        });
    }
    if targets.iter().chain(nontargets).any(|s| !s.is_finite()) {
        return Err(Error::Validation("non-finite score".into()));
    }
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let nt = targets.len() as f64;
    let nn = nontargets.len() as f64;
    let mut thresholds = Vec::new();
    let mut p_miss = Vec::new();
    let mut p_fa = Vec::new();
    // Counts of targets / nontargets strictly below the current threshold.
    let (mut below_t, mut below_n) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        thresholds.push(t);
        p_miss.push(below_t as f64 / nt);
        p_fa.push((nontargets.len() - below_n) as f64 / nn);
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                below_t += 1;
            } else {
                below_n += 1;
            }
            i += 1;
        }
    }
    thresholds.push(f64::INFINITY);
    p_miss.push(1.0);
    p_fa.push(0.0);
    Ok(DetCurve {
        thresholds,
        p_miss,
        p_fa,
    })
}

/// Splits scores into target and nontarget lists using the trial keys.
pub fn split_by_keys(scores: &ScoreSet, trials: &TrialList) -> Result<(Vec<f64>, Vec<f64>)> {
    let keys = trials
        .keys()
        .ok_or_else(|| Error::Validation("trial list has no target/nontarget keys".into()))?;
    let lookup: HashMap<(&str, &str), bool> = trials
        .pairs()
        .iter()
        .zip(keys)
        .map(|((e, t), &k)| ((e.as_str(), t.as_str()), k))
        .collect();
    let mut tar = Vec::new();
    let mut non = Vec::new();
    for ((e, t), &s) in scores.pairs().iter().zip(scores.scores()) {
        match lookup.get(&(e.as_str(), t.as_str())) {
            Some(true) => tar.push(s),
            Some(false) => non.push(s),
            None => {
                return Err(Error::Validation(format!("no key for scored trial {e} {t}")));
            }
        }
    }
    Ok((tar, non))
}

pub fn det_curve(scores: &ScoreSet, trials: &TrialList) -> Result<DetCurve> {
    let (tar, non) = split_by_keys(scores, trials)?;
    det_curve_from_scores(&tar, &non)
}

/// Equal error rate: where the linearly interpolated miss and false-alarm
/// rates cross.
pub fn eer(curve: &DetCurve) -> f64 {
    let (m, f) = (&curve.p_miss, &curve.p_fa);
    let k = (0..m.len())
        .find(|&k| m[k] >= f[k])
        .expect("DET curve ends at p_miss = 1, p_fa = 0");
    if k == 0 {
        return m[0];
    }
    let (m0, f0, m1, f1) = (m[k - 1], f[k - 1], m[k], f[k]);
    let t = (f0 - m0) / ((f0 - m0) + (m1 - f1));
    m0 + t * (m1 - m0)
}

/// Minimum normalized detection cost, averaged over the target priors.
pub fn min_cost(curve: &DetCurve, params: &CostParams) -> f64 {
    let total: f64 = params
        .p_target
        .iter()
        .map(|&p| {
            curve
                .p_miss
                .iter()
                .zip(&curve.p_fa)
                .map(|(&pm, &pf)| params.normalized_cost(p, pm, pf))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / params.p_target.len() as f64
}

/// EER and min-cost of a keyed score set.
pub fn evaluate(scores: &ScoreSet, trials: &TrialList, params: &CostParams) -> Result<(f64, f64)> {
    let curve = det_curve(scores, trials)?;
    Ok((eer(&curve), min_cost(&curve, params)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn has_point(c: &DetCurve, pm: f64, pf: f64) -> bool {
        c.p_miss.iter().zip(&c.p_fa).any(|(&a, &b)| a == pm && b == pf)
    }

    #[test]
    fn separated() {
        let c = det_curve_from_scores(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert!(has_point(&c, 0.0, 0.0));
        assert_eq!(eer(&c), 0.0);
        assert_eq!(min_cost(&c, &CostParams::default()), 0.0);
    }

    #[test]
    fn interleaved_enumeration() {
        let c = det_curve_from_scores(&[0.8, 0.2], &[0.7, 0.3]).unwrap();
        assert_eq!(c.thresholds.len(), 5);
        assert_eq!(c.p_miss, vec![0.0, 0.5, 0.5, 0.5, 1.0]);
        assert_eq!(c.p_fa, vec![1.0, 1.0, 0.5, 0.0, 0.0]);
        assert_eq!(eer(&c), 0.5);
    }

    #[test]
    fn constant_scores_give_chance() {
        let c = det_curve_from_scores(&[1.0; 5], &[1.0; 7]).unwrap();
        assert_eq!(eer(&c), 0.5);
    }

    #[test]
    fn degenerate_keys() {
        assert!(matches!(
            det_curve_from_scores(&[1.0, 2.0], &[]),
            Err(Error::DegenerateKeys { targets: 2, nontargets: 0 })
        ));
    }

    #[test]
    fn min_cost_bounded_by_one() {
        let c = det_curve_from_scores(&[0.1, 0.2, 0.3], &[0.5, 0.6, 0.9]).unwrap();
        let v = min_cost(&c, &CostParams::default());
        assert!(v <= 1.0 && v > 0.0);
    }

    #[test]
    fn keyed_scores() {
        let trials = TrialList::new(
            vec![("a".into(), "b".into()), ("a".into(), "c".into())],
            Some(vec![true, false]),
        )
        .unwrap();
        let scores = ScoreSet::new(
            vec![("a".into(), "c".into()), ("a".into(), "b".into())],
            vec![-1.0, 2.0],
        )
        .unwrap();
        let (e, m) = evaluate(&scores, &trials, &CostParams::default()).unwrap();
        assert_eq!((e, m), (0.0, 0.0));

        let unkeyed = TrialList::new(vec![("a".into(), "b".into())], None).unwrap();
        assert!(matches!(det_curve(&scores, &unkeyed), Err(Error::Validation(_))));
        let missing = ScoreSet::new(vec![("x".into(), "y".into())], vec![0.0]).unwrap();
        assert!(matches!(det_curve(&missing, &trials), Err(Error::Validation(_))));
    }

    #[test]
    fn cost_params_validation() {
        assert!(CostParams::new(vec![], 1.0, 1.0).is_err());
        assert!(CostParams::new(vec![1.0], 1.0, 1.0).is_err());
        assert!(CostParams::new(vec![0.01], 0.0, 1.0).is_err());
    }
}
