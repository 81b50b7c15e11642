//! Estimators of the infected proportion from a respondent-driven sample.
//!
//! All five estimators are ratios of weighted counts. They differ in how the
//! inclusion weight of a respondent is approximated:
//!
//! | estimator | weight of respondent `i`                                  |
//! |-----------|-----------------------------------------------------------|
//! | Naive     | constant                                                  |
//! | VH        | `1 / d_i`                                                 |
//! | SS        | `1 / π(d_i)`, successive-sampling inclusion probability   |
//! | SH        | cross-group recruitment proportions and group mean degree |
//! | H         | as SH with degree-group equilibrium adjusted mean degrees |

mod degree_groups;
mod successive;

pub use degree_groups::{
    adjusted_degree, degree_group_transition_matrix, equilibrium_distribution, h_estimate,
    h_estimate_with_rcd, partition_degree_groups, rcd_values, DegreeGroups, Equilibrium, HOutcome,
    TransitionMatrix,
};
pub use successive::{
    inclusion_probabilities, ss_estimate, ss_probabilities, InclusionMethod, SsOptions,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::sampler::Sample;

/// Named reason an estimate could not be produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FailureCode {
    EmptySample,
    ZeroDegree,
    EmptyGroup,
    /// One infection group made no recruitments at all.
    NoRecruitmentsFromGroup,
    /// Neither group recruited across groups, leaving 0/0.
    UndefinedRatio,
    NoRecruitments,
    SsNotConverged,
    DegenerateAdjustedDegree,
    InvalidInput,
    SamplingFailed,
}

impl FailureCode {
    pub const ALL: [FailureCode; 10] = [
        FailureCode::EmptySample,
        FailureCode::ZeroDegree,
        FailureCode::EmptyGroup,
        FailureCode::NoRecruitmentsFromGroup,
        FailureCode::UndefinedRatio,
        FailureCode::NoRecruitments,
        FailureCode::SsNotConverged,
        FailureCode::DegenerateAdjustedDegree,
        FailureCode::InvalidInput,
        FailureCode::SamplingFailed,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            FailureCode::EmptySample => "empty_sample",
            FailureCode::ZeroDegree => "zero_degree",
            FailureCode::EmptyGroup => "empty_group",
            FailureCode::NoRecruitmentsFromGroup => "no_recruitments_from_group",
            FailureCode::UndefinedRatio => "undefined_ratio",
            FailureCode::NoRecruitments => "no_recruitments",
            FailureCode::SsNotConverged => "ss_not_converged",
            FailureCode::DegenerateAdjustedDegree => "degenerate_adjusted_degree",
            FailureCode::InvalidInput => "invalid_input",
            FailureCode::SamplingFailed => "sampling_failed",
        }
    }
}

impl fmt::Display for FailureCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for FailureCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureCode::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| format!("unknown failure code {s:?}"))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimationError {
    #[error("sample is empty")]
    EmptySample,
    #[error("respondent reported degree 0")]
    ZeroDegree,
    #[error("group has no respondents")]
    EmptyGroup,
    #[error("no recruitments at all from the {} group", if *.infected { "infected" } else { "uninfected" })]
    NoRecruitmentsFromGroup { infected: bool },
    #[error("no cross-group recruitments in either direction")]
    UndefinedRatio,
    #[error("sample contains no recruitments")]
    NoRecruitments,
    #[error("successive-sampling weights did not converge after {iterations} iterations")]
    SsNotConverged {
        iterations: usize,
        last: std::collections::BTreeMap<usize, f64>,
    },
    #[error("adjusted degree has a zero denominator")]
    DegenerateAdjustedDegree,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl EstimationError {
    pub fn code(&self) -> FailureCode {
        match self {
            EstimationError::EmptySample => FailureCode::EmptySample,
            EstimationError::ZeroDegree => FailureCode::ZeroDegree,
            EstimationError::EmptyGroup => FailureCode::EmptyGroup,
            EstimationError::NoRecruitmentsFromGroup { .. } => FailureCode::NoRecruitmentsFromGroup,
            EstimationError::UndefinedRatio => FailureCode::UndefinedRatio,
            EstimationError::NoRecruitments => FailureCode::NoRecruitments,
            EstimationError::SsNotConverged { .. } => FailureCode::SsNotConverged,
            EstimationError::DegenerateAdjustedDegree => FailureCode::DegenerateAdjustedDegree,
            EstimationError::InvalidInput(_) => FailureCode::InvalidInput,
        }
    }
}

/// Weighted proportion `Σ_{A} w_i / Σ w_i`.
fn weighted_proportion(sample: &Sample, weight: impl Fn(usize) -> f64) -> Result<f64, EstimationError> {
    if sample.is_empty() {
        return Err(EstimationError::EmptySample);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for r in &sample.respondents {
        let w = weight(r.degree);
        if r.infected {
            num += w;
        }
        den += w;
    }
    Ok(num / den)
}

fn check_degrees(sample: &Sample) -> Result<(), EstimationError> {
    if sample.respondents.iter().any(|r| r.degree == 0) {
        return Err(EstimationError::ZeroDegree);
    }
    Ok(())
}

/// Sample proportion of infected respondents.
pub fn naive_estimate(sample: &Sample) -> Result<f64, EstimationError> {
    if sample.is_empty() {
        return Err(EstimationError::EmptySample);
    }
    Ok(sample.n_infected() as f64 / sample.len() as f64)
}

/// Volz-Heckathorn estimate: inverse-degree weighted proportion.
pub fn vh_estimate(sample: &Sample) -> Result<f64, EstimationError> {
    if sample.is_empty() {
        return Err(EstimationError::EmptySample);
    }
    check_degrees(sample)?;
    weighted_proportion(sample, |d| 1.0 / d as f64)
}

/// Recruitment counts by infection group of recruiter and recruit.
/// `r_ab` counts infected recruiters bringing in uninfected recruits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CrossGroupCounts {
    pub r_aa: usize,
    pub r_ab: usize,
    pub r_ba: usize,
    pub r_bb: usize,
}

impl CrossGroupCounts {
    /// Share of the infected group's recruits who are uninfected.
    pub fn c_ab(&self) -> Option<f64> {
        let total = self.r_aa + self.r_ab;
        (total > 0).then(|| self.r_ab as f64 / total as f64)
    }

    /// Share of the uninfected group's recruits who are infected.
    pub fn c_ba(&self) -> Option<f64> {
        let total = self.r_ba + self.r_bb;
        (total > 0).then(|| self.r_ba as f64 / total as f64)
    }

    /// Both proportions, or the failure when a group never recruited.
    pub fn proportions(&self) -> Result<(f64, f64), EstimationError> {
        let c_ab = self.c_ab().ok_or(EstimationError::NoRecruitmentsFromGroup { infected: true })?;
        let c_ba = self.c_ba().ok_or(EstimationError::NoRecruitmentsFromGroup { infected: false })?;
        Ok((c_ab, c_ba))
    }
}

pub fn cross_group_counts(sample: &Sample) -> CrossGroupCounts {
    let mut c = CrossGroupCounts::default();
    for (p, i) in sample.recruitment_pairs() {
        match (sample.respondents[p].infected, sample.respondents[i].infected) {
            (true, true) => c.r_aa += 1,
            (true, false) => c.r_ab += 1,
            (false, true) => c.r_ba += 1,
            (false, false) => c.r_bb += 1,
        }
    }
    c
}

/// Harmonic mean of reported degree over one infection group.
pub fn harmonic_mean_degree(sample: &Sample, infected: bool) -> Result<f64, EstimationError> {
    let mut count = 0usize;
    let mut inv = 0.0;
    for r in sample.respondents.iter().filter(|r| r.infected == infected) {
        if r.degree == 0 {
            return Err(EstimationError::ZeroDegree);
        }
        count += 1;
        inv += 1.0 / r.degree as f64;
    }
    if count == 0 {
        return Err(EstimationError::EmptyGroup);
    }
    Ok(count as f64 / inv)
}

/// Combines cross-group recruitment proportions with per-group degree
/// estimates. Shared by SH and H so that equal degree inputs give bitwise
/// equal estimates.
pub(crate) fn cross_group_proportion(
    c_ab: f64,
    c_ba: f64,
    degree_a: f64,
    degree_b: f64,
) -> Result<f64, EstimationError> {
    let num = degree_b * c_ba;
    let denom = degree_a * c_ab + num;
    if denom == 0.0 || !denom.is_finite() {
        return Err(EstimationError::UndefinedRatio);
    }
    Ok(num / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShOutcome {
    pub value: f64,
    /// The estimate is exactly one (no infected → uninfected recruitments).
    pub equal_one: bool,
}

/// Salganik-Heckathorn estimate.
pub fn sh_estimate(sample: &Sample) -> Result<ShOutcome, EstimationError> {
    let (c_ab, c_ba) = cross_group_counts(sample).proportions()?;
    let d_a = harmonic_mean_degree(sample, true)?;
    let d_b = harmonic_mean_degree(sample, false)?;
    let value = cross_group_proportion(c_ab, c_ba, d_a, d_b)?;
    Ok(ShOutcome { value, equal_one: value == 1.0 })
}

pub type EstimateValue = Result<f64, FailureCode>;

/// The five estimates for one sample, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub naive: EstimateValue,
    pub vh: EstimateValue,
    pub ss: EstimateValue,
    pub sh: EstimateValue,
    pub h: EstimateValue,
    pub sh_equal_one: bool,
    pub h_equal_one: bool,
    pub absorbing_degree_group: bool,
    pub patched_transition_rows: bool,
}

/// The estimators in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Naive,
    Vh,
    Ss,
    Sh,
    H,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [Estimator::Naive, Estimator::Vh, Estimator::Ss, Estimator::Sh, Estimator::H];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::Vh => "vh",
            Estimator::Ss => "ss",
            Estimator::Sh => "sh",
            Estimator::H => "h",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown estimator {s:?}"))
    }
}

impl EstimateSet {
    /// Every estimator failed with the same code.
    pub fn all_failed(code: FailureCode) -> Self {
        EstimateSet {
            naive: Err(code),
            vh: Err(code),
            ss: Err(code),
            sh: Err(code),
            h: Err(code),
            sh_equal_one: false,
            h_equal_one: false,
            absorbing_degree_group: false,
            patched_transition_rows: false,
        }
    }

    pub fn get(&self, e: Estimator) -> EstimateValue {
        match e {
            Estimator::Naive => self.naive,
            Estimator::Vh => self.vh,
            Estimator::Ss => self.ss,
            Estimator::Sh => self.sh,
            Estimator::H => self.h,
        }
    }

    pub fn equal_one(&self, e: Estimator) -> bool {
        match e {
            Estimator::Sh => self.sh_equal_one,
            Estimator::H => self.h_equal_one,
            _ => false,
        }
    }
}

/// Runs all five estimators, recording failures instead of returning them.
pub fn estimate_all(sample: &Sample, population_size: usize, mean_cell_size: usize, ss_opts: &SsOptions) -> EstimateSet {
    let code = |e: EstimationError| e.code();
    let sh = sh_estimate(sample).map_err(code);
    let h = h_estimate(sample, mean_cell_size).map_err(code);
    EstimateSet {
        naive: naive_estimate(sample).map_err(code),
        vh: vh_estimate(sample).map_err(code),
        ss: ss_estimate(sample, population_size, ss_opts).map_err(code),
        sh: sh.map(|o| o.value),
        h: h.map(|o| o.value),
        sh_equal_one: sh.is_ok_and(|o| o.equal_one),
        h_equal_one: h.is_ok_and(|o| o.equal_one),
        absorbing_degree_group: h.is_ok_and(|o| o.absorbing),
        patched_transition_rows: h.is_ok_and(|o| o.patched),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn flat(rows: &[(usize, bool)]) -> Sample {
        let r: Vec<_> = rows.iter().enumerate().map(|(i, &(d, inf))| (i, d, inf, None)).collect();
        Sample::from_rows(&r)
    }

    #[test]
    fn naive_values() {
        assert_eq!(naive_estimate(&flat(&[(2, true), (2, true), (3, false), (1, false)])).unwrap(), 0.5);
        assert_eq!(naive_estimate(&flat(&[(2, true), (5, true)])).unwrap(), 1.0);
        let rows: Vec<(usize, bool)> = (0..200).map(|i| (3, i < 40)).collect();
        assert!(close(naive_estimate(&flat(&rows)).unwrap(), 0.2));
        assert_eq!(naive_estimate(&flat(&[])), Err(EstimationError::EmptySample));
    }

    #[test]
    fn vh_values() {
        let s = flat(&[(2, true), (4, true), (4, false)]);
        assert!(close(vh_estimate(&s).unwrap(), 0.75));
        let equal = flat(&[(3, true), (3, false), (3, false), (3, true), (3, false)]);
        assert!(close(vh_estimate(&equal).unwrap(), naive_estimate(&equal).unwrap()));
        assert_eq!(vh_estimate(&flat(&[(7, true)])).unwrap(), 1.0);
        assert_eq!(vh_estimate(&flat(&[(0, true), (1, false)])), Err(EstimationError::ZeroDegree));
    }

    #[test]
    fn cross_group_chain() {
        // A → B → A
        let s = Sample::from_rows(&[(0, 2, true, None), (1, 2, false, Some(0)), (2, 2, true, Some(1))]);
        let c = cross_group_counts(&s);
        assert_eq!((c.r_ab, c.r_ba, c.r_aa, c.r_bb), (1, 1, 0, 0));
        assert_eq!(c.c_ab(), Some(1.0));
        assert_eq!(c.c_ba(), Some(1.0));
    }

    #[test]
    fn cross_group_seeds_only() {
        let s = flat(&[(2, true), (3, false)]);
        let c = cross_group_counts(&s);
        assert_eq!(c, CrossGroupCounts::default());
        assert_eq!(c.c_ab(), None);
        assert_eq!(c.c_ba(), None);
    }

    #[test]
    fn cross_group_hand_tally() {
        // A(0) recruits {A, B}; B(1) recruits {B, B, B, A}.
        let s = Sample::from_rows(&[
            (0, 3, true, None),
            (1, 5, false, Some(0)),
            (2, 3, true, Some(0)),
            (3, 3, false, Some(1)),
            (4, 3, false, Some(1)),
            (5, 3, false, Some(1)),
            (6, 3, true, Some(1)),
        ]);
        let c = cross_group_counts(&s);
        assert_eq!(c.c_ab(), Some(0.5));
        assert_eq!(c.c_ba(), Some(0.25));
    }

    #[test]
    fn harmonic_means() {
        let s = flat(&[(2, true), (4, true), (9, false)]);
        assert!(close(harmonic_mean_degree(&s, true).unwrap(), 2.0 / 0.75));
        assert!(close(harmonic_mean_degree(&flat(&[(5, true); 4]), true).unwrap(), 5.0));
        assert_eq!(harmonic_mean_degree(&flat(&[(1, true)]), true).unwrap(), 1.0);
        assert_eq!(harmonic_mean_degree(&flat(&[(1, true)]), false), Err(EstimationError::EmptyGroup));
    }

    #[test]
    fn sh_formula_values() {
        assert!(close(cross_group_proportion(0.5, 0.25, 4.0, 2.0).unwrap(), 0.2));
        assert!(close(cross_group_proportion(0.3, 0.3, 6.0, 6.0).unwrap(), 0.5));
        assert_eq!(cross_group_proportion(0.0, 0.0, 3.0, 3.0), Err(EstimationError::UndefinedRatio));
    }

    #[test]
    fn sh_equal_one_when_infected_never_recruit_uninfected() {
        // A recruits only A; B recruits A and B.
        let s = Sample::from_rows(&[
            (0, 3, true, None),
            (1, 3, true, Some(0)),
            (2, 4, false, None),
            (3, 4, true, Some(2)),
            (4, 4, false, Some(2)),
        ]);
        let o = sh_estimate(&s).unwrap();
        assert_eq!(o.value, 1.0);
        assert!(o.equal_one);
        let h = h_estimate(&s, 12).unwrap();
        assert_eq!(h.value, 1.0);
        assert!(h.equal_one);
    }

    #[test]
    fn sh_zero_when_uninfected_never_recruit_infected() {
        let s = Sample::from_rows(&[
            (0, 3, true, None),
            (1, 3, false, Some(0)),
            (2, 4, false, None),
            (3, 4, false, Some(2)),
        ]);
        let o = sh_estimate(&s).unwrap();
        assert_eq!(o.value, 0.0);
        assert!(!o.equal_one);
    }

    #[test]
    fn sh_fails_without_recruitments_from_a_group() {
        let s = Sample::from_rows(&[(0, 3, true, None), (1, 3, false, Some(0)), (2, 3, true, Some(0))]);
        assert_eq!(sh_estimate(&s), Err(EstimationError::NoRecruitmentsFromGroup { infected: false }));
    }

    #[test]
    fn seeds_only_estimate_set() {
        let s = flat(&[(2, true), (3, false), (4, false)]);
        let set = estimate_all(&s, 100, 12, &SsOptions::default());
        assert!(set.naive.is_ok() && set.vh.is_ok() && set.ss.is_ok());
        assert_eq!(set.sh, Err(FailureCode::NoRecruitmentsFromGroup));
        assert_eq!(set.h, Err(FailureCode::NoRecruitmentsFromGroup));
    }

    #[test]
    fn homogeneous_degree_weights_cancel() {
        let s = flat(&[(4, true), (4, false), (4, false), (4, true), (4, false)]);
        let set = estimate_all(&s, 50, 12, &SsOptions::default());
        let naive = set.naive.unwrap();
        assert!(close(set.vh.unwrap(), naive));
        assert!(close(set.ss.unwrap(), naive));
    }

    #[test]
    fn failure_tokens_round_trip() {
        for c in FailureCode::ALL {
            assert_eq!(c.token().parse::<FailureCode>().unwrap(), c);
        }
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
    }
}
