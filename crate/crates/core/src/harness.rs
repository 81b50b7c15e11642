//! Replicated experiments: one fresh network and one sample per replication,
//! summaries per estimator, paired comparisons and CSV export.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::estimators::{estimate_all, EstimateSet, Estimator, FailureCode, SsOptions};
use crate::netgen::{generate_network, NetgenError, NetworkSpec};
use crate::rng::{derive_seed, SimRng, Stream};
use crate::sampler::{run_rds, SamplingConfig, SamplingError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
    #[error(transparent)]
    Network(#[from] NetgenError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("paired test needs at least 2 complete pairs, found {0}")]
    TooFewPairs(usize),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed table csv at record {record}: {message}")]
    Parse { record: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub network: NetworkSpec,
    pub sampling: SamplingConfig,
    pub replications: usize,
    pub base_seed: u64,
    pub mean_cell_size: usize,
    /// `rng_seed` is replaced by a per-replication seed.
    pub ss: SsOptions,
}

impl Default for Condition {
    fn default() -> Self {
        Condition {
            label: "baseline".into(),
            network: NetworkSpec::default(),
            sampling: SamplingConfig::default(),
            replications: 300,
            base_seed: 1,
            mean_cell_size: 12,
            ss: SsOptions::default(),
        }
    }
}

impl Condition {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::InvalidCondition("replications must be >= 1".into()));
        }
        if self.mean_cell_size == 0 {
            return Err(HarnessError::InvalidCondition("mean_cell_size must be >= 1".into()));
        }
        crate::netgen::solve_block_probabilities(&self.network)?;
        self.sampling.validate()?;
        if self.sampling.target_n > self.network.n_nodes {
            return Err(HarnessError::InvalidCondition(format!(
                "target_n ({}) exceeds n_nodes ({})",
                self.sampling.target_n, self.network.n_nodes
            )));
        }
        Ok(())
    }
}

/// Seeds used by one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationSeeds {
    pub network: u64,
    pub sampling: u64,
    pub ss: u64,
}

pub fn replication_seeds(base_seed: u64, replication: usize) -> ReplicationSeeds {
    let r = replication as u64;
    ReplicationSeeds {
        network: derive_seed(base_seed, r, Stream::Network),
        sampling: derive_seed(base_seed, r, Stream::Sampling),
        ss: derive_seed(base_seed, r, Stream::SuccessiveSampling),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub replication: usize,
    pub estimates: EstimateSet,
    pub realized_n: usize,
    pub reseeds: usize,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationTable {
    pub label: String,
    pub rows: Vec<ReplicationRow>,
}

impl ReplicationTable {
    /// Values of one estimator in replication order, failures as `None`.
    pub fn values(&self, e: Estimator) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.estimates.get(e).ok()).collect()
    }
}

/// Runs one replication of `cond`.
pub fn run_replication(cond: &Condition, replication: usize) -> ReplicationRow {
    let seeds = replication_seeds(cond.base_seed, replication);
    let failed = |code| ReplicationRow {
        replication,
        estimates: EstimateSet::all_failed(code),
        realized_n: 0,
        reseeds: 0,
        exhausted: false,
    };
    let net_spec = NetworkSpec { rng_seed: seeds.network, ..cond.network.clone() };
    let Ok(net) = generate_network(&net_spec) else {
        return failed(FailureCode::InvalidInput);
    };
    let cfg = SamplingConfig { rng_seed: seeds.sampling, ..cond.sampling.clone() };
    let Ok(sample) = run_rds(&net, &cfg) else {
        return failed(FailureCode::SamplingFailed);
    };
    let ss = SsOptions { rng_seed: seeds.ss, ..cond.ss.clone() };
    ReplicationRow {
        replication,
        estimates: estimate_all(&sample, net.n_nodes(), cond.mean_cell_size, &ss),
        realized_n: sample.len(),
        reseeds: sample.reseeds(),
        exhausted: sample.exhausted,
    }
}

/// Runs every replication of `cond`. Rows are computed in parallel and
/// returned in replication order.
pub fn run_condition(cond: &Condition) -> Result<ReplicationTable, HarnessError> {
    cond.validate()?;
    let rows = (0..cond.replications)
        .into_par_iter()
        .map(|r| run_replication(cond, r))
        .collect();
    Ok(ReplicationTable { label: cond.label.clone(), rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// Mean over successful replications; `None` when there are none.
    pub mean: Option<f64>,
    /// Sample variance over successful replications; `None` below two.
    pub variance: Option<f64>,
    /// Mean over successful replications whose estimate is not flagged as one.
    pub mean_excluding_one: Option<f64>,
    pub count_one: usize,
    pub count_fail: usize,
    pub n_success: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub label: String,
    pub n_reps: usize,
    pub estimators: Vec<EstimatorSummary>,
}

impl ConditionSummary {
    pub fn get(&self, e: Estimator) -> &EstimatorSummary {
        self.estimators.iter().find(|s| s.estimator == e).expect("all estimators summarised")
    }

    pub fn mean(&self, e: Estimator) -> f64 {
        self.get(e).mean.unwrap_or(f64::NAN)
    }
}

fn mean_and_variance(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = (values.len() > 1).then(|| values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0));
    (Some(mean), var)
}

pub fn summarize(table: &ReplicationTable) -> ConditionSummary {
    let estimators = Estimator::ALL
        .into_iter()
        .map(|e| {
            let mut ok = Vec::new();
            let mut not_one = Vec::new();
            let (mut count_one, mut count_fail) = (0, 0);
            for row in &table.rows {
                match row.estimates.get(e) {
                    Ok(v) => {
                        ok.push(v);
                        if row.estimates.equal_one(e) {
                            count_one += 1;
                        } else {
                            not_one.push(v);
                        }
                    }
                    Err(_) => count_fail += 1,
                }
            }
            let (mean, variance) = mean_and_variance(&ok);
            EstimatorSummary {
                estimator: e,
                mean,
                variance,
                mean_excluding_one: mean_and_variance(&not_one).0,
                count_one,
                count_fail,
                n_success: ok.len(),
            }
        })
        .collect();
    ConditionSummary { label: table.label.clone(), n_reps: table.rows.len(), estimators }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTest {
    pub n_pairs: usize,
    pub mean_diff: f64,
    pub t_statistic: f64,
    pub df: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Bonferroni-adjusted p-value, `min(1, p · m)`.
    pub p_adjusted: f64,
    /// All differences are equal and non-zero, so the variance is zero.
    pub degenerate: bool,
}

/// Paired t-test on `x - y` with Bonferroni adjustment for `m_comparisons`.
pub fn paired_t_test(pairs: &[(f64, f64)], m_comparisons: usize) -> Result<PairedTest, HarnessError> {
    let n = pairs.len();
    if n < 2 {
        return Err(HarnessError::TooFewPairs(n));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = n - 1;
    let constant = diffs.iter().all(|&d| d == diffs[0]);
    let (t, p, degenerate) = if constant || var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0, false)
        } else {
            (f64::INFINITY.copysign(mean), 0.0, true)
        }
    } else {
        let t = mean / (var / nf).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
        (t, 2.0 * dist.sf(t.abs()), false)
    };
    Ok(PairedTest {
        n_pairs: n,
        mean_diff: mean,
        t_statistic: t,
        df,
        p_value: p,
        p_adjusted: (p * m_comparisons.max(1) as f64).min(1.0),
        degenerate,
    })
}

/// Paired comparison of two estimators within one table, over replications
/// where both succeeded.
pub fn paired_difference_test(
    table: &ReplicationTable,
    x: Estimator,
    y: Estimator,
    m_comparisons: usize,
) -> Result<PairedTest, HarnessError> {
    let pairs: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter_map(|r| Some((r.estimates.get(x).ok()?, r.estimates.get(y).ok()?)))
        .collect();
    paired_t_test(&pairs, m_comparisons)
}

/// Paired comparison of one estimator across two conditions sharing a base
/// seed, matched by replication index.
pub fn paired_condition_test(
    a: &ReplicationTable,
    b: &ReplicationTable,
    e: Estimator,
    m_comparisons: usize,
) -> Result<PairedTest, HarnessError> {
    let pairs: Vec<(f64, f64)> = a
        .rows
        .iter()
        .filter_map(|ra| {
            let rb = b.rows.iter().find(|rb| rb.replication == ra.replication)?;
            Some((ra.estimates.get(e).ok()?, rb.estimates.get(e).ok()?))
        })
        .collect();
    paired_t_test(&pairs, m_comparisons)
}

/// Formats `v` in plain decimal notation with 10 significant digits.
pub fn format_sig10(v: f64) -> String {
    if v == 0.0 {
        return "0.000000000".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let mut decimals = (9 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    // Rounding may carry into the next power of ten.
    let back: f64 = s.parse().unwrap_or(v);
    if back.abs() >= 10f64.powi(exp + 1) && decimals > 0 {
        decimals -= 1;
        s = format!("{v:.decimals$}");
    }
    s
}

const NA: &str = "NA";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), format_sig10)
}

pub const TABLE_HEADER: [&str; 12] = [
    "condition_label",
    "replication",
    "naive",
    "vh",
    "ss",
    "sh",
    "h",
    "sh_flag_one",
    "h_flag_one",
    "failure_code",
    "realized_n",
    "reseeds",
];

pub const SUMMARY_HEADER: [&str; 7] =
    ["condition_label", "estimator", "mean", "variance", "count_one", "count_fail", "n_reps"];

fn failure_field(est: &EstimateSet) -> String {
    let mut out = String::new();
    for e in Estimator::ALL {
        if let Err(code) = est.get(e) {
            if !out.is_empty() {
                out.push(';');
            }
            let _ = write!(out, "{e}={code}");
        }
    }
    if out.is_empty() {
        out.push_str("none");
    }
    out
}

fn csv_err(path: &str) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_string(), message: e.to_string() }
}

/// Writes replication rows of each table under the table CSV schema.
pub fn write_table_csv<W: Write>(tables: &[ReplicationTable], out: W) -> Result<(), HarnessError> {
    let err = csv_err("<table csv>");
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TABLE_HEADER).map_err(&err)?;
    for table in tables {
        for row in &table.rows {
            let est = &row.estimates;
            let mut rec: Vec<String> = vec![table.label.clone(), row.replication.to_string()];
            rec.extend(Estimator::ALL.iter().map(|&e| fmt_opt(est.get(e).ok())));
            rec.push(u8::from(est.sh_equal_one).to_string());
            rec.push(u8::from(est.h_equal_one).to_string());
            rec.push(failure_field(est));
            rec.push(row.realized_n.to_string());
            rec.push(row.reseeds.to_string());
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::Io { path: "<table csv>".into(), message: e.to_string() })
}

pub fn write_summary_csv<W: Write>(summaries: &[ConditionSummary], out: W) -> Result<(), HarnessError> {
    let err = csv_err("<summary csv>");
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(&err)?;
    for s in summaries {
        for e in &s.estimators {
            w.write_record([
                s.label.clone(),
                e.estimator.to_string(),
                fmt_opt(e.mean),
                fmt_opt(e.variance),
                e.count_one.to_string(),
                e.count_fail.to_string(),
                s.n_reps.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::Io { path: "<summary csv>".into(), message: e.to_string() })
}

fn with_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> Result<(), HarnessError>) -> Result<(), HarnessError> {
    let shown = path.display().to_string();
    let file = File::create(path).map_err(|e| HarnessError::Io { path: shown.clone(), message: e.to_string() })?;
    f(BufWriter::new(file)).map_err(|e| match e {
        HarnessError::Io { message, .. } => HarnessError::Io { path: shown, message },
        other => other,
    })
}

pub fn export_table_csv(tables: &[ReplicationTable], path: &Path) -> Result<(), HarnessError> {
    with_file(path, |w| write_table_csv(tables, w))
}

pub fn export_summary_csv(summaries: &[ConditionSummary], path: &Path) -> Result<(), HarnessError> {
    with_file(path, |w| write_summary_csv(summaries, w))
}

/// Reads tables written by [`write_table_csv`], grouped by condition label in
/// order of first appearance. Diagnostic flags not carried by the schema are
/// restored as unset.
pub fn read_table_csv<R: Read>(input: R) -> Result<Vec<ReplicationTable>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::Parse { record: 0, message: e.to_string() })?
        .clone();
    if headers.iter().ne(TABLE_HEADER.iter().copied()) {
        return Err(HarnessError::Parse { record: 0, message: "unexpected header".into() });
    }
    let mut tables: Vec<ReplicationTable> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let record = i + 1;
        let perr = |message: String| HarnessError::Parse { record, message };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        let int = |k: usize| rec[k].parse::<usize>().map_err(|e| perr(format!("{}: {e}", TABLE_HEADER[k])));
        let flag = |k: usize| match &rec[k] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(perr(format!("{}: expected 0/1, found {other:?}", TABLE_HEADER[k]))),
        };

        let mut codes: Vec<(Estimator, FailureCode)> = Vec::new();
        if &rec[9] != "none" {
            for part in rec[9].split(';') {
                let (e, c) = part.split_once('=').ok_or_else(|| perr(format!("bad failure entry {part:?}")))?;
                codes.push((e.parse().map_err(&perr)?, c.parse().map_err(&perr)?));
            }
        }
        let mut values = [Err(FailureCode::InvalidInput); 5];
        for (k, e) in Estimator::ALL.into_iter().enumerate() {
            let field = &rec[2 + k];
            values[k] = if field == NA {
                let code = codes.iter().find(|(x, _)| *x == e).map(|(_, c)| *c);
                Err(code.ok_or_else(|| perr(format!("{e} is NA without a failure code")))?)
            } else {
                Ok(field.parse::<f64>().map_err(|err| perr(format!("{e}: {err}")))?)
            };
        }
        let estimates = EstimateSet {
            naive: values[0],
            vh: values[1],
            ss: values[2],
            sh: values[3],
            h: values[4],
            sh_equal_one: flag(7)?,
            h_equal_one: flag(8)?,
            absorbing_degree_group: false,
            patched_transition_rows: false,
        };
        let row = ReplicationRow {
            replication: int(1)?,
            estimates,
            realized_n: int(10)?,
            reseeds: int(11)?,
            exhausted: false,
        };
        let label = &rec[0];
        match tables.iter_mut().find(|t| t.label == label) {
            Some(t) => t.rows.push(row),
            None => tables.push(ReplicationTable { label: label.to_string(), rows: vec![row] }),
        }
    }
    Ok(tables)
}

/// Population-level identities used to check estimator reasoning.
pub mod oracles {
    use super::*;

    /// Infected proportion recovered from respondent counts and response
    /// rates: `N_{A∩R} / (N_{A∩R} + N_{B∩R} · V_A / V_B)`.
    pub fn proportion_from_respondents(resp_infected: f64, resp_uninfected: f64, v_a: f64, v_b: f64) -> f64 {
        resp_infected / (resp_infected + resp_uninfected * v_a / v_b)
    }

    /// With-replacement sampling with draw probabilities proportional to
    /// `weights`: returns the sample proportion of infected draws and its
    /// Monte Carlo standard error.
    pub fn pps_with_replacement_proportion(
        weights: &[f64],
        infected: &[bool],
        draws: usize,
        rng: &mut SimRng,
    ) -> (f64, f64) {
        let total: f64 = weights.iter().sum();
        let mut hits = 0usize;
        for _ in 0..draws {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            if infected[pick] {
                hits += 1;
            }
        }
        let p = hits as f64 / draws as f64;
        (p, (p * (1.0 - p) / draws as f64).sqrt())
    }
}
