//! Markov chain on degree groups and the H estimator built from it.

use super::{cross_group_counts, cross_group_proportion, EstimationError};
use crate::sampler::Sample;

/// Partition of the sample's reported degrees into contiguous groups.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeGroups {
    pub mean_cell_size: usize,
    /// Requested number of groups, `round(sqrt(n / n_c))`, at least 1.
    pub aggregation_level: usize,
    /// Largest degree in each group, ascending. The last group is unbounded.
    pub upper_bounds: Vec<usize>,
    /// Group index of each respondent, in sample order.
    pub assignment: Vec<usize>,
}

impl DegreeGroups {
    pub fn n_groups(&self) -> usize {
        self.upper_bounds.len()
    }

    pub fn group_of(&self, degree: usize) -> usize {
        self.upper_bounds.partition_point(|&ub| ub < degree).min(self.upper_bounds.len() - 1)
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups()];
        for &g in &self.assignment {
            sizes[g] += 1;
        }
        sizes
    }
}

pub fn aggregation_level(n: usize, mean_cell_size: usize) -> usize {
    let al = (n as f64 / mean_cell_size.max(1) as f64).sqrt();
    // f64::round rounds half away from zero, which is half-up for positives.
    (al.round() as usize).max(1)
}

/// Splits respondents into contiguous degree groups of near-equal size
/// without ever splitting a degree value.
pub fn partition_degree_groups(sample: &Sample, mean_cell_size: usize) -> Result<DegreeGroups, EstimationError> {
    if sample.is_empty() {
        return Err(EstimationError::EmptySample);
    }
    let n = sample.len();
    let al = aggregation_level(n, mean_cell_size);

    let mut degrees: Vec<usize> = sample.respondents.iter().map(|r| r.degree).collect();
    degrees.sort_unstable();
    // (degree value, cumulative count through that value)
    let mut cumulative: Vec<(usize, usize)> = Vec::new();
    for (i, &d) in degrees.iter().enumerate() {
        match cumulative.last_mut() {
            Some((v, c)) if *v == d => *c = i + 1,
            _ => cumulative.push((d, i + 1)),
        }
    }

    let mut cuts: Vec<usize> = Vec::new();
    let interior = &cumulative[..cumulative.len() - 1];
    for k in 1..al {
        let ideal = (k * n) as f64 / al as f64;
        // Nearest interior boundary; on a tie the larger boundary wins so the
        // straddling degree value joins the lower group.
        let best = interior.iter().enumerate().min_by(|(ia, a), (ib, b)| {
            let da = (a.1 as f64 - ideal).abs();
            let db = (b.1 as f64 - ideal).abs();
            da.total_cmp(&db).then(ib.cmp(ia))
        });
        if let Some((idx, _)) = best {
            cuts.push(idx);
        }
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut upper_bounds: Vec<usize> = cuts.iter().map(|&i| cumulative[i].0).collect();
    upper_bounds.push(cumulative.last().unwrap().0);

    let mut groups = DegreeGroups { mean_cell_size, aggregation_level: al, upper_bounds, assignment: Vec::new() };
    groups.assignment = sample.respondents.iter().map(|r| groups.group_of(r.degree)).collect();
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub probs: Vec<Vec<f64>>,
    /// Groups that made no recruitments; their rows hold the marginal
    /// distribution of recruit groups.
    pub patched_rows: Vec<usize>,
}

/// Proportion of recruitments from each degree group into each degree group.
pub fn degree_group_transition_matrix(
    sample: &Sample,
    groups: &DegreeGroups,
) -> Result<TransitionMatrix, EstimationError> {
    let k = groups.n_groups();
    let mut counts = vec![vec![0usize; k]; k];
    let mut marginal = vec![0usize; k];
    let pairs = sample.recruitment_pairs();
    if pairs.is_empty() {
        return Err(EstimationError::NoRecruitments);
    }
    for (p, i) in pairs {
        let (gp, gi) = (groups.assignment[p], groups.assignment[i]);
        counts[gp][gi] += 1;
        marginal[gi] += 1;
    }
    let marginal_total: usize = marginal.iter().sum();
    let mut patched_rows = Vec::new();
    let probs = counts
        .iter()
        .enumerate()
        .map(|(g, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                patched_rows.push(g);
                marginal.iter().map(|&m| m as f64 / marginal_total as f64).collect()
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(TransitionMatrix { probs, patched_rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub distribution: Vec<f64>,
    /// The stationary distribution is not unique.
    pub non_unique: bool,
    /// Non-unique, or all mass sits in a single group of a multi-group chain.
    pub absorbing: bool,
}

/// Rank of a square matrix by Gaussian elimination with partial pivoting.
fn rank(mut m: Vec<Vec<f64>>, tol: f64) -> usize {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pivot = (r..rows).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if m[pivot][c].abs() <= tol {
            continue;
        }
        m.swap(r, pivot);
        let (top, bottom) = m.split_at_mut(r + 1);
        let lead = &top[r];
        for row in bottom {
            let f = row[c] / lead[c];
            row[c..].iter_mut().zip(&lead[c..]).for_each(|(x, &l)| *x -= f * l);
        }
        r += 1;
    }
    r
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let pivot = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[pivot][c] == 0.0 {
            return None;
        }
        a.swap(c, pivot);
        b.swap(c, pivot);
        let (top, bottom) = a.split_at_mut(c + 1);
        let lead = &top[c];
        for (i, row) in (c + 1..).zip(bottom) {
            let f = row[c] / lead[c];
            row[c..].iter_mut().zip(&lead[c..]).for_each(|(x, &l)| *x -= f * l);
            b[i] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn lazy_power_iteration(t: &[Vec<f64>]) -> Vec<f64> {
    let k = t.len();
    let mut x = vec![1.0 / k as f64; k];
    for _ in 0..100_000 {
        let mut next = vec![0.0; k];
        for (i, row) in t.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                next[j] += x[i] * p;
            }
        }
        let next: Vec<f64> = x.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let delta = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    x
}

/// Stationary distribution `e` of a row-stochastic matrix, `eᵀT = eᵀ`.
pub fn equilibrium_distribution(t: &[Vec<f64>], tol: f64) -> Result<Equilibrium, EstimationError> {
    let k = t.len();
    if k == 0 || t.iter().any(|row| row.len() != k) {
        return Err(EstimationError::InvalidInput("transition matrix must be square and non-empty".into()));
    }
    for row in t {
        let s: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(EstimationError::InvalidInput("transition matrix rows must be probability vectors".into()));
        }
    }
    if k == 1 {
        return Ok(Equilibrium { distribution: vec![1.0], non_unique: false, absorbing: false });
    }

    // A = Tᵀ - I
    let a: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| t[j][i] - if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let non_unique = rank(a.clone(), tol) < k - 1;

    let mut distribution = if non_unique {
        lazy_power_iteration(t)
    } else {
        // Replace one (redundant) balance equation by the normalisation.
        let mut sys = a;
        sys[k - 1] = vec![1.0; k];
        let mut rhs = vec![0.0; k];
        rhs[k - 1] = 1.0;
        solve(sys, rhs).ok_or_else(|| EstimationError::InvalidInput("singular equilibrium system".into()))?
    };
    for x in &mut distribution {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = distribution.iter().sum();
    distribution.iter_mut().for_each(|x| *x /= s);
    let absorbing = non_unique || distribution.iter().any(|&x| x >= 1.0 - 1e-9);
    Ok(Equilibrium { distribution, non_unique, absorbing })
}

/// Recruitment component of degree for each respondent: the equilibrium
/// probability of its degree group over the group's sample share.
pub fn rcd_values(sample: &Sample, groups: &DegreeGroups, equilibrium: &[f64]) -> Result<Vec<f64>, EstimationError> {
    let sizes = groups.group_sizes();
    if sizes.contains(&0) || equilibrium.len() != sizes.len() {
        return Err(EstimationError::EmptyGroup);
    }
    let n = sample.len() as f64;
    Ok(groups
        .assignment
        .iter()
        .map(|&g| equilibrium[g] / (sizes[g] as f64 / n))
        .collect())
}

/// RCD-weighted harmonic mean degree of one infection group.
pub fn adjusted_degree(sample: &Sample, infected: bool, rcd: &[f64]) -> Result<f64, EstimationError> {
    let mut any = false;
    let (mut num, mut den) = (0.0, 0.0);
    for (r, &w) in sample.respondents.iter().zip(rcd).filter(|(r, _)| r.infected == infected) {
        if r.degree == 0 {
            return Err(EstimationError::ZeroDegree);
        }
        any = true;
        num += w;
        den += w / r.degree as f64;
    }
    if !any {
        return Err(EstimationError::EmptyGroup);
    }
    if den == 0.0 {
        return Err(EstimationError::DegenerateAdjustedDegree);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HOutcome {
    pub value: f64,
    pub equal_one: bool,
    pub absorbing: bool,
    pub patched: bool,
}

/// H estimate from precomputed RCD values.
pub fn h_estimate_with_rcd(sample: &Sample, rcd: &[f64]) -> Result<f64, EstimationError> {
    let (c_ab, c_ba) = cross_group_counts(sample).proportions()?;
    let ad_a = adjusted_degree(sample, true, rcd)?;
    let ad_b = adjusted_degree(sample, false, rcd)?;
    cross_group_proportion(c_ab, c_ba, ad_a, ad_b)
}

/// Heckathorn estimate with degree groups of mean cell size `mean_cell_size`.
pub fn h_estimate(sample: &Sample, mean_cell_size: usize) -> Result<HOutcome, EstimationError> {
    // Same failure precedence as SH: cross-group proportions first.
    cross_group_counts(sample).proportions()?;
    let groups = partition_degree_groups(sample, mean_cell_size)?;
    let t = degree_group_transition_matrix(sample, &groups)?;
    let eq = equilibrium_distribution(&t.probs, 1e-12)?;
    let rcd = rcd_values(sample, &groups, &eq.distribution)?;
    let value = h_estimate_with_rcd(sample, &rcd)?;
    Ok(HOutcome {
        value,
        equal_one: value == 1.0,
        absorbing: eq.absorbing,
        patched: !t.patched_rows.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::sh_estimate;

    fn flat_degrees(degrees: &[usize]) -> Sample {
        let rows: Vec<_> = degrees.iter().enumerate().map(|(i, &d)| (i, d, i % 3 == 0, None)).collect();
        Sample::from_rows(&rows)
    }

    /// Sample whose recruitments follow `edges` between respondents of the
    /// given degrees; respondent 0 is the seed, each recruit listed once.
    fn chain(degrees: &[usize], recruiter_of: &[Option<usize>]) -> Sample {
        let rows: Vec<_> = degrees
            .iter()
            .zip(recruiter_of)
            .enumerate()
            .map(|(i, (&d, &p))| (i, d, i % 2 == 0, p))
            .collect();
        Sample::from_rows(&rows)
    }

    #[test]
    fn aggregation_levels() {
        assert_eq!(aggregation_level(200, 12), 4);
        assert_eq!(aggregation_level(48, 12), 2);
        assert_eq!(aggregation_level(500, 12), 6);
        assert_eq!(aggregation_level(3, 12), 1);
    }

    #[test]
    fn single_degree_value_is_one_group() {
        let g = partition_degree_groups(&flat_degrees(&[4; 200]), 12).unwrap();
        assert_eq!(g.aggregation_level, 4);
        assert_eq!(g.n_groups(), 1);
        assert!(g.assignment.iter().all(|&x| x == 0));
    }

    #[test]
    fn even_degrees_split_evenly() {
        let degrees: Vec<usize> = (0..200).map(|i| 1 + i / 10).collect();
        let g = partition_degree_groups(&flat_degrees(&degrees), 12).unwrap();
        assert_eq!(g.n_groups(), 4);
        assert_eq!(g.group_sizes(), vec![50, 50, 50, 50]);
        assert_eq!(g.upper_bounds, vec![5, 10, 15, 20]);
    }

    #[test]
    fn degree_values_never_split() {
        let degrees = [1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 4, 5, 5, 6, 7, 8, 9];
        let s = flat_degrees(&degrees);
        let g = partition_degree_groups(&s, 12).unwrap();
        for (r, &grp) in s.respondents.iter().zip(&g.assignment) {
            assert_eq!(g.group_of(r.degree), grp);
        }
        // Groups are contiguous: assignments are nondecreasing in degree.
        let mut pairs: Vec<(usize, usize)> = s.respondents.iter().map(|r| r.degree).zip(g.assignment.clone()).collect();
        pairs.sort_unstable();
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn transition_matrix_uniform() {
        // groups: degree 1 → group 0, degree 10 → group 1 (n = 48 → AL = 2)
        let mut degrees = vec![1; 24];
        degrees.extend(vec![10; 24]);
        let mut rec = vec![None; 48];
        // 0→1 (g0→g0), 0→24 (g0→g1), 24→2 (g1→g0), 24→25 (g1→g1)
        rec[1] = Some(0);
        rec[24] = Some(0);
        rec[2] = Some(24);
        rec[25] = Some(24);
        let s = chain(&degrees, &rec);
        let g = partition_degree_groups(&s, 12).unwrap();
        let t = degree_group_transition_matrix(&s, &g).unwrap();
        assert_eq!(t.probs, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(t.patched_rows.is_empty());
    }

    #[test]
    fn transition_matrix_hand_tally_and_patch() {
        let mut degrees = vec![1; 16];
        degrees.extend(vec![10; 16]);
        degrees.extend(vec![20; 16]);
        let mut rec = vec![None; 48];
        // g0: 0→1, 0→16 ; g1: 16→2, 16→17, 17→18, 18→19 ; g2 never recruits
        rec[1] = Some(0);
        rec[16] = Some(0);
        rec[2] = Some(16);
        rec[17] = Some(16);
        rec[18] = Some(17);
        rec[19] = Some(18);
        let s = chain(&degrees, &rec);
        let g = partition_degree_groups(&s, 16).unwrap();
        assert_eq!(g.n_groups(), 2, "n = 48, n_c = 16 gives AL = 2");
        let g3 = DegreeGroups {
            mean_cell_size: 5,
            aggregation_level: 3,
            upper_bounds: vec![1, 10, 20],
            assignment: s.respondents.iter().map(|r| if r.degree == 1 { 0 } else if r.degree == 10 { 1 } else { 2 }).collect(),
        };
        let t = degree_group_transition_matrix(&s, &g3).unwrap();
        assert_eq!(t.probs[0], vec![0.5, 0.5, 0.0]);
        assert_eq!(t.probs[1], vec![0.25, 0.75, 0.0]);
        // Marginal recruit distribution: 2 in g0, 4 in g1.
        assert_eq!(t.probs[2], vec![2.0 / 6.0, 4.0 / 6.0, 0.0]);
        assert_eq!(t.patched_rows, vec![2]);
    }

    #[test]
    fn transition_matrix_requires_recruitments() {
        let s = flat_degrees(&[1, 2, 3]);
        let g = partition_degree_groups(&s, 12).unwrap();
        assert_eq!(degree_group_transition_matrix(&s, &g), Err(EstimationError::NoRecruitments));
    }

    #[test]
    fn equilibrium_examples() {
        let e = equilibrium_distribution(&[vec![0.5, 0.5], vec![0.5, 0.5]], 1e-12).unwrap();
        assert!((e.distribution[0] - 0.5).abs() < 1e-15 && !e.absorbing);
        let e = equilibrium_distribution(&[vec![0.5, 0.5], vec![0.25, 0.75]], 1e-12).unwrap();
        assert!((e.distribution[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.distribution[1] - 2.0 / 3.0).abs() < 1e-15);
        let e = equilibrium_distribution(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1e-12).unwrap();
        assert!(e.non_unique && e.absorbing);
        let e = equilibrium_distribution(&[vec![1.0, 0.0], vec![0.5, 0.5]], 1e-12).unwrap();
        assert!(!e.non_unique && e.absorbing);
        assert!((e.distribution[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_periodic_chain() {
        let e = equilibrium_distribution(&[vec![0.0, 1.0], vec![1.0, 0.0]], 1e-12).unwrap();
        assert_eq!(e.distribution, vec![0.5, 0.5]);
    }

    #[test]
    fn rcd_examples() {
        let s = flat_degrees(&[1, 1, 1, 1, 1, 9, 9, 9, 9, 9]);
        let g = DegreeGroups {
            mean_cell_size: 5,
            aggregation_level: 2,
            upper_bounds: vec![1, 9],
            assignment: vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
        };
        let rcd = rcd_values(&s, &g, &[0.8, 0.2]).unwrap();
        assert!((rcd[0] - 1.6).abs() < 1e-15 && (rcd[9] - 0.4).abs() < 1e-15);
        let rcd = rcd_values(&s, &g, &[0.5, 0.5]).unwrap();
        assert!(rcd.iter().all(|&x| x == 1.0));
        let one = DegreeGroups { mean_cell_size: 12, aggregation_level: 1, upper_bounds: vec![9], assignment: vec![0; 10] };
        assert!(rcd_values(&s, &one, &[1.0]).unwrap().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn adjusted_degree_examples() {
        let s = Sample::from_rows(&[(0, 2, true, None), (1, 4, true, None), (2, 3, false, None)]);
        let ad = adjusted_degree(&s, true, &[2.0, 1.0, 1.0]).unwrap();
        assert!((ad - 2.4).abs() < 1e-15);
        let ones = adjusted_degree(&s, true, &[1.0; 3]).unwrap();
        assert_eq!(ones, crate::estimators::harmonic_mean_degree(&s, true).unwrap());
        let single = Sample::from_rows(&[(0, 4, true, None)]);
        assert!((adjusted_degree(&single, true, &[0.37]).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(adjusted_degree(&s, true, &[0.0, 0.0, 1.0]), Err(EstimationError::DegenerateAdjustedDegree));
    }

    #[test]
    fn h_matches_sh_with_unit_rcd() {
        let s = Sample::from_rows(&[
            (0, 3, true, None),
            (1, 5, false, Some(0)),
            (2, 2, true, Some(0)),
            (3, 7, false, Some(1)),
            (4, 4, true, Some(1)),
            (5, 3, false, Some(3)),
        ]);
        let h = h_estimate_with_rcd(&s, &[1.0; 6]).unwrap();
        assert_eq!(h, sh_estimate(&s).unwrap().value);
    }
}
