//! Successive-sampling inclusion probabilities.
//!
//! Under successive sampling, `n` units are drawn one at a time without
//! replacement, each draw choosing a remaining unit with probability
//! proportional to its degree. Units of equal degree are exchangeable, so the
//! population is represented as counts per distinct degree.
//!
//! The population degree distribution is unknown and is estimated jointly with
//! the inclusion probabilities by a fixed-point iteration: given population
//! counts, compute inclusion probabilities; given inclusion probabilities,
//! re-estimate the counts as `sample_count(d) / π(d)` scaled to `N`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::EstimationError;
use crate::rng::{rng_from_seed, SimRng};
use crate::sampler::Sample;

#[derive(Debug, Clone, PartialEq)]
pub struct SsOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Monte Carlo successive samples per fixed-point iteration.
    pub replications: usize,
    /// Seed of the stream used by the Monte Carlo step. The stream restarts at
    /// each iteration so the map being iterated is deterministic.
    pub rng_seed: u64,
    /// Populations with at most this many units are enumerated exactly.
    pub enumeration_limit: usize,
}

impl Default for SsOptions {
    fn default() -> Self {
        SsOptions { tol: 1e-6, max_iters: 50, replications: 2000, rng_seed: 0, enumeration_limit: 12 }
    }
}

pub enum InclusionMethod<'a> {
    Exact,
    MonteCarlo { replications: usize, rng: &'a mut SimRng },
}

/// Inclusion probability per degree class for `n` successive draws from a
/// population given as `(degree, count)` classes.
pub fn inclusion_probabilities(
    population: &[(usize, usize)],
    n: usize,
    method: InclusionMethod<'_>,
) -> Result<Vec<f64>, EstimationError> {
    let total: usize = population.iter().map(|&(_, c)| c).sum();
    if n > total {
        return Err(EstimationError::InvalidInput(format!("cannot draw {n} units from {total}")));
    }
    if population.iter().any(|&(d, c)| d == 0 && c > 0) {
        return Err(EstimationError::ZeroDegree);
    }
    let drawn = match method {
        InclusionMethod::Exact => expected_draws_exact(population, n),
        InclusionMethod::MonteCarlo { replications, rng } => {
            if replications == 0 {
                return Err(EstimationError::InvalidInput("replications must be >= 1".into()));
            }
            expected_draws_mc(population, n, replications, rng)
        }
    };
    Ok(population
        .iter()
        .zip(drawn)
        .map(|(&(_, c), e)| if c == 0 { 0.0 } else { e / c as f64 })
        .collect())
}

/// Expected number of draws from each class, by dynamic programming over the
/// vector of per-class draw counts. Every draw sequence is accounted for.
fn expected_draws_exact(population: &[(usize, usize)], n: usize) -> Vec<f64> {
    let k = population.len();
    let mut layer: HashMap<Vec<usize>, f64> = HashMap::new();
    layer.insert(vec![0; k], 1.0);
    for _ in 0..n {
        let mut next: HashMap<Vec<usize>, f64> = HashMap::with_capacity(layer.len() * 2);
        for (state, p) in &layer {
            let weight: usize = population
                .iter()
                .zip(state)
                .map(|(&(d, c), &taken)| d * (c - taken))
                .sum();
            for (j, &(d, c)) in population.iter().enumerate() {
                let w = d * (c - state[j]);
                if w == 0 {
                    continue;
                }
                let mut s = state.clone();
                s[j] += 1;
                *next.entry(s).or_insert(0.0) += p * w as f64 / weight as f64;
            }
        }
        layer = next;
    }
    let mut expected = vec![0.0; k];
    for (state, p) in &layer {
        for (e, &taken) in expected.iter_mut().zip(state) {
            *e += p * taken as f64;
        }
    }
    expected
}

fn expected_draws_mc(population: &[(usize, usize)], n: usize, replications: usize, rng: &mut SimRng) -> Vec<f64> {
    let k = population.len();
    let full_weight: u64 = population.iter().map(|&(d, c)| (d * c) as u64).sum();
    let mut totals = vec![0u64; k];
    let mut remaining = vec![0usize; k];
    for _ in 0..replications {
        for (r, &(_, c)) in remaining.iter_mut().zip(population) {
            *r = c;
        }
        let mut weight = full_weight;
        for _ in 0..n {
            let mut target = rng.gen_range(0..weight);
            let mut j = 0;
            loop {
                let w = (population[j].0 * remaining[j]) as u64;
                if target < w {
                    break;
                }
                target -= w;
                j += 1;
            }
            remaining[j] -= 1;
            totals[j] += 1;
            weight -= population[j].0 as u64;
        }
    }
    totals.iter().map(|&t| t as f64 / replications as f64).collect()
}

/// Rounds `weights` scaled to `total` into integers no smaller than `floors`,
/// summing exactly to `total`, by largest remainder.
fn integer_counts(weights: &[f64], floors: &[usize], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let scaled: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = scaled
        .iter()
        .zip(floors)
        .map(|(&s, &f)| (s.floor() as usize).max(f))
        .collect();
    let mut assigned: usize = counts.iter().sum();
    let remainder = |i: usize, c: &[usize]| scaled[i] - c[i] as f64;
    while assigned < total {
        let i = (0..counts.len())
            .max_by(|&a, &b| remainder(a, &counts).total_cmp(&remainder(b, &counts)).then(b.cmp(&a)))
            .expect("non-empty");
        counts[i] += 1;
        assigned += 1;
    }
    while assigned > total {
        let i = (0..counts.len())
            .filter(|&i| counts[i] > floors[i])
            .min_by(|&a, &b| remainder(a, &counts).total_cmp(&remainder(b, &counts)).then(a.cmp(&b)))
            .expect("floors sum to at most total");
        counts[i] -= 1;
        assigned -= 1;
    }
    counts
}

/// Estimated successive-sampling inclusion probability for each distinct
/// sample degree, given the population size.
pub fn ss_probabilities(
    degrees: &[usize],
    population_size: usize,
    opts: &SsOptions,
) -> Result<BTreeMap<usize, f64>, EstimationError> {
    let n = degrees.len();
    if n == 0 {
        return Err(EstimationError::EmptySample);
    }
    if population_size < n {
        return Err(EstimationError::InvalidInput(format!(
            "population size {population_size} is smaller than the sample size {n}"
        )));
    }
    if degrees.contains(&0) {
        return Err(EstimationError::ZeroDegree);
    }
    let mut sample_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in degrees {
        *sample_counts.entry(d).or_insert(0) += 1;
    }
    let classes: Vec<usize> = sample_counts.keys().copied().collect();
    let floors: Vec<usize> = sample_counts.values().copied().collect();
    let as_map = |pi: &[f64]| classes.iter().copied().zip(pi.iter().copied()).collect::<BTreeMap<_, _>>();

    if n == population_size {
        return Ok(as_map(&vec![1.0; classes.len()]));
    }

    let initial: Vec<f64> = floors.iter().map(|&c| c as f64).collect();
    let mut counts = integer_counts(&initial, &floors, population_size);
    // Each visited count vector with the probabilities it produced.
    let mut history: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for _ in 0..opts.max_iters {
        let population: Vec<(usize, usize)> = classes.iter().copied().zip(counts.iter().copied()).collect();
        let pi = if population_size <= opts.enumeration_limit {
            inclusion_probabilities(&population, n, InclusionMethod::Exact)?
        } else {
            let mut rng = rng_from_seed(opts.rng_seed);
            inclusion_probabilities(
                &population,
                n,
                InclusionMethod::MonteCarlo { replications: opts.replications, rng: &mut rng },
            )?
        };
        if let Some((_, prev)) = history.last() {
            let delta = prev.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if delta < opts.tol {
                return Ok(as_map(&pi));
            }
        }
        let weights: Vec<f64> = floors.iter().zip(&pi).map(|(&c, &p)| c as f64 / p).collect();
        let next = integer_counts(&weights, &floors, population_size);
        history.push((std::mem::replace(&mut counts, next), pi));

        // Integer counts make the map piecewise constant, so the iteration can
        // settle into a cycle around the fixed point. Average over the cycle.
        if let Some(start) = history.iter().position(|(c, _)| *c == counts) {
            let cycle = &history[start..];
            let mut mean = vec![0.0; classes.len()];
            for (_, p) in cycle {
                mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / cycle.len() as f64);
            }
            return Ok(as_map(&mean));
        }
    }
    Err(EstimationError::SsNotConverged {
        iterations: opts.max_iters,
        last: as_map(history.last().map(|(_, p)| p.as_slice()).unwrap_or(&[])),
    })
}

/// Successive-sampling estimate: inverse-inclusion weighted proportion.
pub fn ss_estimate(sample: &Sample, population_size: usize, opts: &SsOptions) -> Result<f64, EstimationError> {
    let degrees: Vec<usize> = sample.respondents.iter().map(|r| r.degree).collect();
    let pi = ss_probabilities(&degrees, population_size, opts)?;
    super::weighted_proportion(sample, |d| 1.0 / pi[&d])
}
