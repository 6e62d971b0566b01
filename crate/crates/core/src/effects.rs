//! Bias measure, candidate scoring and the four effect metrics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{InterventionSpec, Model};

/// Probabilities below this are raised to it before forming ratios.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Probabilities of the anti-stereotypical and stereotypical candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateDistribution {
    p_anti: f64,
    p_stereo: f64,
    degenerate: bool,
}

impl CandidateDistribution {
    pub fn new(p_anti: f64, p_stereo: f64) -> Result<Self> {
        for p in [p_anti, p_stereo] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::DegenerateProbability(format!("candidate probability {p} outside (0, 1]")));
            }
        }
        Ok(Self {
            p_anti,
            p_stereo,
            degenerate: false,
        })
    }

    /// Like `new`, but raises underflowed probabilities to the floor and flags them.
    pub fn floored(p_anti: f64, p_stereo: f64) -> Result<Self> {
        for p in [p_anti, p_stereo] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::DegenerateProbability(format!("candidate probability {p} outside [0, 1]")));
            }
        }
        let degenerate = p_anti < PROBABILITY_FLOOR || p_stereo < PROBABILITY_FLOOR;
        Ok(Self {
            p_anti: p_anti.max(PROBABILITY_FLOOR),
            p_stereo: p_stereo.max(PROBABILITY_FLOOR),
            degenerate,
        })
    }

    pub fn p_anti(&self) -> f64 {
        self.p_anti
    }

    pub fn p_stereo(&self) -> f64 {
        self.p_stereo
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// `[p̂_anti, p̂_stereo]`, renormalized over the two candidates.
    pub fn normalized(&self) -> [f64; 2] {
        let z = self.p_anti + self.p_stereo;
        [self.p_anti / z, self.p_stereo / z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Original,
    NormDiff,
    Tv,
    Linf,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Original, Metric::NormDiff, Metric::Tv, Metric::Linf];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Original => "original",
            Metric::NormDiff => "normdiff",
            Metric::Tv => "tv",
            Metric::Linf => "linf",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown metric {s:?} (original|normdiff|tv|linf)")))
    }
}

/// y = p_anti / p_stereo.
pub fn bias_y(dist: &CandidateDistribution) -> Result<f64> {
    if dist.p_stereo <= 0.0 {
        return Err(Error::DegenerateProbability("stereotypical candidate has probability 0".into()));
    }
    Ok(dist.p_anti / dist.p_stereo)
}

pub fn total_effect(y_interv: f64, y_null: f64) -> Result<f64> {
    if y_null == 0.0 || !y_null.is_finite() {
        return Err(Error::DegenerateProbability(format!("null bias measure {y_null}")));
    }
    Ok(y_interv / y_null - 1.0)
}

/// Unit-level direct effect from `y_{x, z_null}`.
pub fn nde_unit(y_x_znull: f64, y_null: f64) -> Result<f64> {
    total_effect(y_x_znull, y_null)
}

/// Unit-level indirect effect from `y_{null, z_x}`.
pub fn nie_unit(y_null_zx: f64, y_null: f64) -> Result<f64> {
    total_effect(y_null_zx, y_null)
}

/// ŷ_alt(interv) − ŷ_alt(null) with ŷ_alt = p̂_anti − p̂_stereo.
pub fn alt_effect_normdiff(interv: &CandidateDistribution, null: &CandidateDistribution) -> f64 {
    let alt = |d: &CandidateDistribution| {
        let [a, s] = d.normalized();
        a - s
    };
    alt(interv) - alt(null)
}

pub fn tv_distance(p: [f64; 2], q: [f64; 2]) -> f64 {
    0.5 * ((p[0] - q[0]).abs() + (p[1] - q[1]).abs())
}

pub fn rel_linf(p: [f64; 2], q: [f64; 2]) -> Result<f64> {
    if p.iter().chain(q.iter()).any(|&v| v <= 0.0) {
        return Err(Error::DegenerateProbability(format!("relative l-inf needs positive entries: {p:?} {q:?}")));
    }
    Ok((0..2)
        .map(|a| (p[a] / q[a]).max(q[a] / p[a]).ln())
        .fold(0.0, f64::max))
}

/// Effect of one unit under `metric`, comparing a counterfactual outcome against the null outcome.
pub fn unit_effect(metric: Metric, cf: &CandidateDistribution, null: &CandidateDistribution) -> Result<f64> {
    match metric {
        Metric::Original => total_effect(bias_y(cf)?, bias_y(null)?),
        Metric::NormDiff => Ok(alt_effect_normdiff(cf, null)),
        Metric::Tv => Ok(tv_distance(cf.normalized(), null.normalized())),
        Metric::Linf => rel_linf(cf.normalized(), null.normalized()),
    }
}

/// Geometric mean of the teacher-forced token probabilities of `candidate`.
pub fn score_candidate(model: &Model, prompt: &[u32], candidate: &[u32], spec: &InterventionSpec) -> Result<f64> {
    if candidate.len() == 1 {
        let (probs, _) = model.forward(prompt, spec, false)?;
        return Ok(f64::from(probs[candidate[0] as usize]));
    }
    let logs = model.sequence_log_prob(prompt, candidate, spec)?;
    Ok((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// Reads both candidates off a next-token distribution; both must be single tokens.
pub fn distribution_from_probs(probs: &[f32], anti: &[u32], stereo: &[u32]) -> Result<CandidateDistribution> {
    match (anti, stereo) {
        ([a], [s]) => CandidateDistribution::floored(f64::from(probs[*a as usize]), f64::from(probs[*s as usize])),
        _ => Err(Error::Precondition("both candidates must be single tokens".into())),
    }
}

/// Scores both candidates, with a single forward pass when both are one token.
pub fn score_candidates(
    model: &Model,
    prompt: &[u32],
    anti: &[u32],
    stereo: &[u32],
    spec: &InterventionSpec,
) -> Result<CandidateDistribution> {
    if anti.len() == 1 && stereo.len() == 1 {
        let (probs, _) = model.forward(prompt, spec, false)?;
        return distribution_from_probs(&probs, anti, stereo);
    }
    let p_anti = score_candidate(model, prompt, anti, spec)?;
    let p_stereo = score_candidate(model, prompt, stereo, spec)?;
    CandidateDistribution::floored(p_anti, p_stereo)
}

/// Pairwise summation in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean with pairwise summation; NaN for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation (n − 1); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&sq) / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(a: f64, s: f64) -> CandidateDistribution {
        CandidateDistribution::new(a, s).unwrap()
    }

    #[test]
    fn bias_measure_examples() {
        assert_eq!(bias_y(&d(0.3, 0.3)).unwrap(), 1.0);
        // anti "he", stereo "she" for nurse
        assert!((bias_y(&d(0.031, 0.224)).unwrap() - 0.14).abs() < 0.005);
        assert!((bias_y(&d(0.315, 0.024)).unwrap() - 13.1).abs() < 0.05);
    }

    #[test]
    fn total_effect_examples() {
        assert_eq!(total_effect(2.5, 2.5).unwrap(), 0.0);
        assert!((total_effect(13.1, 0.14).unwrap() - 92.6).abs() < 0.05);
        assert!(total_effect(1.0, 0.0).is_err());
        assert_eq!(nie_unit(0.7, 0.7).unwrap(), 0.0);
        assert_eq!(nde_unit(3.0, 1.5).unwrap(), 1.0);
    }

    #[test]
    fn hand_built_mean() {
        let units = [(0.2, 0.1), (0.3, 0.6), (1.0, 0.25)];
        let effects: Vec<f64> = units.iter().map(|&(a, b)| nie_unit(a, b).unwrap()).collect();
        let expected = (1.0 + (-0.5) + 3.0) / 3.0;
        assert!((mean(&effects) - expected).abs() < 1e-12);
    }

    #[test]
    fn alternate_metric_examples() {
        let null = d(0.2, 0.8);
        let interv = d(0.8, 0.2);
        assert!((alt_effect_normdiff(&interv, &null) - 1.2).abs() < 1e-12);
        assert_eq!(alt_effect_normdiff(&null, &null), 0.0);
        assert_eq!(tv_distance([1.0, 0.0], [0.0, 1.0]), 1.0);
        assert!((tv_distance([0.7, 0.3], [0.4, 0.6]) - 0.3).abs() < 1e-12);
        assert!((rel_linf([0.5, 0.5], [0.25, 0.75]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(rel_linf([0.4, 0.6], [0.4, 0.6]).unwrap(), 0.0);
        assert!(rel_linf([1.0, 0.0], [0.5, 0.5]).is_err());
    }

    #[test]
    fn null_counterfactual_is_zero_for_every_metric() {
        let x = d(0.013, 0.4);
        for m in Metric::ALL {
            assert_eq!(unit_effect(m, &x, &x).unwrap(), 0.0, "{m}");
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
    }

    #[test]
    fn floor_flags_degeneracy() {
        let f = CandidateDistribution::floored(0.0, 0.5).unwrap();
        assert!(f.is_degenerate());
        assert_eq!(f.p_anti(), PROBABILITY_FLOOR);
        assert!(CandidateDistribution::new(0.0, 0.5).is_err());
        assert!(!CandidateDistribution::floored(0.1, 0.5).unwrap().is_degenerate());
    }

    #[test]
    fn geometric_mean_by_hand() {
        let logs = [0.04f64.ln(), 0.25f64.ln()];
        let g = (logs.iter().sum::<f64>() / 2.0).exp();
        assert!((g - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), xs.iter().sum::<f64>());
        assert_eq!(std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), (32.0f64 / 7.0).sqrt());
    }
}
