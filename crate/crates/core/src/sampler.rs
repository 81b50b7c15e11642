//! Respondent-driven sampling on a fixed network.
//!
//! The coupon process is simulated with a FIFO queue of outstanding coupons.
//! Respondent behaviour enters at three points: which neighbour a coupon is
//! offered to (differential recruitment), whether the coupon is passed at all
//! (recruitment effectiveness), and whether the person offered the coupon
//! reports to the study (non-response).

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgen::Network;
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("not enough eligible seed nodes: need {needed}, have {available}")]
    InsufficientSeeds { needed: usize, available: usize },
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("malformed sample file at line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRule {
    /// Probability proportional to degree among all non-isolates.
    PpsDegree,
    /// Uniform over the `k` non-isolates of lowest degree.
    UniformLowestK(usize),
    /// Uniform over the `k` non-isolates of highest degree.
    UniformHighestK(usize),
    /// Probability proportional to degree among infected non-isolates.
    InfectedOnlyPps,
}

/// A value for each infection group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPair {
    pub uninfected: f64,
    pub infected: f64,
}

impl GroupPair {
    pub const ONES: GroupPair = GroupPair { uninfected: 1.0, infected: 1.0 };

    /// Builds from the `(B, A)` ordering used when listing parameter levels.
    pub fn from_ba(uninfected: f64, infected: f64) -> Self {
        GroupPair { uninfected, infected }
    }

    pub fn get(&self, infected: bool) -> f64 {
        if infected {
            self.infected
        } else {
            self.uninfected
        }
    }
}

/// Piecewise-linear function of degree: `low` for degrees up to 5, `high`
/// above 10, and linear in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeRamp {
    pub low: f64,
    pub high: f64,
}

impl DegreeRamp {
    pub const FLAT: DegreeRamp = DegreeRamp { low: 1.0, high: 1.0 };

    pub fn new(low: f64, high: f64) -> Self {
        DegreeRamp { low, high }
    }

    pub fn value(&self, degree: usize) -> f64 {
        let t = ((degree as f64 - 5.0) / 5.0).clamp(0.0, 1.0);
        self.low + t * (self.high - self.low)
    }
}

/// Relative preference of a recruiter of degree `a` for a candidate of degree `b`.
pub fn degree_kernel(a: usize, b: usize, width: f64) -> f64 {
    (1.0 - (a as f64 - b as f64).abs() / width).max(0.05)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorConfig {
    /// Own-infection-group multipliers `K_B`, `K_A`.
    pub within_group_dr: GroupPair,
    /// Weight of an infected candidate relative to an uninfected one.
    pub between_group_dr: f64,
    /// Kernel width for preferring neighbours of similar degree.
    pub within_degree_dr: Option<f64>,
    /// Relative recruitability by candidate degree.
    pub between_degree_dr: Option<DegreeRamp>,
    pub recruit_effectiveness_infection: GroupPair,
    pub recruit_effectiveness_degree: DegreeRamp,
    pub nonresponse_infection: GroupPair,
    pub nonresponse_degree: DegreeRamp,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig {
            within_group_dr: GroupPair::ONES,
            between_group_dr: 1.0,
            within_degree_dr: None,
            between_degree_dr: None,
            recruit_effectiveness_infection: GroupPair::ONES,
            recruit_effectiveness_degree: DegreeRamp::FLAT,
            nonresponse_infection: GroupPair::ONES,
            nonresponse_degree: DegreeRamp::FLAT,
        }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |msg: String| Err(SamplingError::InvalidConfig(msg));
        let weight_ok = |v: f64| v.is_finite() && v >= 0.0;
        let prob_ok = |v: f64| (0.0..=1.0).contains(&v);

        let k = self.within_group_dr;
        if !weight_ok(k.uninfected) || !weight_ok(k.infected) {
            return bad("within_group_dr weights must be >= 0".into());
        }
        if !(self.between_group_dr.is_finite() && self.between_group_dr > 0.0) {
            return bad("between_group_dr must be > 0".into());
        }
        if let Some(w) = self.within_degree_dr {
            if !(w.is_finite() && w > 0.0) {
                return bad("within_degree_dr width must be > 0".into());
            }
        }
        if let Some(r) = self.between_degree_dr {
            if !weight_ok(r.low) || !weight_ok(r.high) {
                return bad("between_degree_dr weights must be >= 0".into());
            }
        }
        for (name, pair) in [
            ("recruit_effectiveness_infection", self.recruit_effectiveness_infection),
            ("nonresponse_infection", self.nonresponse_infection),
        ] {
            if !prob_ok(pair.uninfected) || !prob_ok(pair.infected) {
                return bad(format!("{name} values must lie in [0, 1]"));
            }
        }
        for (name, ramp) in [
            ("recruit_effectiveness_degree", self.recruit_effectiveness_degree),
            ("nonresponse_degree", self.nonresponse_degree),
        ] {
            if !prob_ok(ramp.low) || !prob_ok(ramp.high) {
                return bad(format!("{name} values must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_seeds: usize,
    pub seed_rule: SeedRule,
    pub coupons_per_respondent: usize,
    pub target_n: usize,
    pub behavior: BehaviorConfig,
    pub rng_seed: u64,
    pub reseed_on_die_out: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_seeds: 10,
            seed_rule: SeedRule::PpsDegree,
            coupons_per_respondent: 2,
            target_n: 200,
            behavior: BehaviorConfig::default(),
            rng_seed: 0,
            reseed_on_die_out: true,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.n_seeds == 0 {
            return Err(SamplingError::InvalidConfig("n_seeds must be >= 1".into()));
        }
        if self.n_seeds > self.target_n {
            return Err(SamplingError::InvalidConfig(format!(
                "n_seeds ({}) must be <= target_n ({})",
                self.n_seeds, self.target_n
            )));
        }
        if self.coupons_per_respondent == 0 {
            return Err(SamplingError::InvalidConfig("coupons_per_respondent ≥ 1".into()));
        }
        if let SeedRule::UniformLowestK(k) | SeedRule::UniformHighestK(k) = self.seed_rule {
            if k < self.n_seeds {
                return Err(SamplingError::InvalidConfig(format!(
                    "seed pool k ({k}) must be >= n_seeds ({})",
                    self.n_seeds
                )));
            }
        }
        self.behavior.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Respondent {
    pub node: usize,
    /// Reported degree; equals the true degree in this simulator.
    pub degree: usize,
    pub infected: bool,
    pub recruiter: Option<usize>,
    pub wave: usize,
    pub reseed: bool,
}

/// Coupon bookkeeping. Every issued coupon is either still outstanding when
/// sampling stops or resolved in exactly one of the other three ways.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventLog {
    pub coupons_issued: usize,
    /// Passed to a candidate who responded.
    pub coupons_used: usize,
    /// No eligible candidate, or the holder did not pass it on.
    pub coupons_expired: usize,
    /// Passed to a candidate who never reported.
    pub coupons_refused: usize,
    /// Still held when the target size was reached.
    pub coupons_outstanding: usize,
    pub nonresponses: usize,
}

impl EventLog {
    pub fn coupons_resolved(&self) -> usize {
        self.coupons_used + self.coupons_expired + self.coupons_refused
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub respondents: Vec<Respondent>,
    pub events: EventLog,
    /// The population ran out of reachable candidates before `target_n`.
    pub exhausted: bool,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    pub fn reseeds(&self) -> usize {
        self.respondents.iter().filter(|r| r.reseed).count()
    }

    pub fn n_infected(&self) -> usize {
        self.respondents.iter().filter(|r| r.infected).count()
    }

    /// Recruiter → recruit pairs as indices into `respondents`.
    pub fn recruitment_pairs(&self) -> Vec<(usize, usize)> {
        let position: std::collections::HashMap<usize, usize> =
            self.respondents.iter().enumerate().map(|(i, r)| (r.node, i)).collect();
        self.respondents
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.recruiter.and_then(|p| position.get(&p)).map(|&p| (p, i)))
            .collect()
    }

    /// Builds a sample from `(node, degree, infected, recruiter)` rows; waves
    /// are derived from the recruitment chain. Handy for hand-built fixtures.
    pub fn from_rows(rows: &[(usize, usize, bool, Option<usize>)]) -> Self {
        let mut respondents: Vec<Respondent> = Vec::with_capacity(rows.len());
        for &(node, degree, infected, recruiter) in rows {
            let wave = recruiter
                .and_then(|p| respondents.iter().find(|r| r.node == p))
                .map_or(0, |r| r.wave + 1);
            respondents.push(Respondent { node, degree, infected, recruiter, wave, reseed: false });
        }
        Sample { respondents, events: EventLog::default(), exhausted: false }
    }

    /// Tab-separated table, one row per respondent, event counts in a
    /// trailing `#` comment block.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "order\tnode_id\tdegree\tinfected\trecruiter_id\twave\treseed")?;
        for (i, r) in self.respondents.iter().enumerate() {
            let recruiter = r.recruiter.map_or(-1, |p| p as i64);
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i,
                r.node,
                r.degree,
                u8::from(r.infected),
                recruiter,
                r.wave,
                u8::from(r.reseed)
            )?;
        }
        let e = &self.events;
        writeln!(out, "# coupons_issued {}", e.coupons_issued)?;
        writeln!(out, "# coupons_used {}", e.coupons_used)?;
        writeln!(out, "# coupons_expired {}", e.coupons_expired)?;
        writeln!(out, "# coupons_refused {}", e.coupons_refused)?;
        writeln!(out, "# coupons_outstanding {}", e.coupons_outstanding)?;
        writeln!(out, "# nonresponses {}", e.nonresponses)?;
        writeln!(out, "# exhausted {}", u8::from(self.exhausted))?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, SamplingError> {
        let perr = |line: usize, message: String| SamplingError::Parse { line, message };
        let mut respondents = Vec::new();
        let mut events = EventLog::default();
        let mut exhausted = false;
        let mut saw_header = false;
        for (i, line) in input.lines().enumerate() {
            let ln = i + 1;
            let line = line.map_err(|e| perr(ln, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut it = comment.split_whitespace();
                let (Some(key), Some(val)) = (it.next(), it.next()) else { continue };
                let val: usize = val.parse().map_err(|e| perr(ln, format!("{key}: {e}")))?;
                match key {
                    "coupons_issued" => events.coupons_issued = val,
                    "coupons_used" => events.coupons_used = val,
                    "coupons_expired" => events.coupons_expired = val,
                    "coupons_refused" => events.coupons_refused = val,
                    "coupons_outstanding" => events.coupons_outstanding = val,
                    "nonresponses" => events.nonresponses = val,
                    "exhausted" => exhausted = val != 0,
                    _ => {}
                }
                continue;
            }
            if !saw_header {
                saw_header = true;
                if line.starts_with("order") {
                    continue;
                }
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 7 {
                return Err(perr(ln, format!("expected 7 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.parse::<i64>().map_err(|e| perr(ln, format!("{s:?}: {e}")));
            let node = num(cols[1])?;
            let degree = num(cols[2])?;
            let wave = num(cols[5])?;
            if node < 0 || degree < 0 || wave < 0 {
                return Err(perr(ln, "negative id, degree or wave".into()));
            }
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(perr(ln, format!("expected 0/1, found {s:?}"))),
            };
            let recruiter = num(cols[4])?;
            respondents.push(Respondent {
                node: node as usize,
                degree: degree as usize,
                infected: flag(cols[3])?,
                recruiter: (recruiter >= 0).then_some(recruiter as usize),
                wave: wave as usize,
                reseed: flag(cols[6])?,
            });
        }
        Ok(Sample { respondents, events, exhausted })
    }
}

/// Draws `count` distinct seeds according to `rule`.
pub fn select_seeds(
    net: &Network,
    rule: SeedRule,
    count: usize,
    rng: &mut SimRng,
) -> Result<Vec<usize>, SamplingError> {
    let eligible = vec![true; net.n_nodes()];
    select_seeds_from(net, rule, count, &eligible, rng)
}

fn select_seeds_from(
    net: &Network,
    rule: SeedRule,
    count: usize,
    eligible: &[bool],
    rng: &mut SimRng,
) -> Result<Vec<usize>, SamplingError> {
    let candidates: Vec<usize> = (0..net.n_nodes())
        .filter(|&i| eligible[i] && net.degree(i) > 0)
        .filter(|&i| rule != SeedRule::InfectedOnlyPps || net.is_infected(i))
        .collect();
    if candidates.len() < count {
        return Err(SamplingError::InsufficientSeeds { needed: count, available: candidates.len() });
    }
    match rule {
        SeedRule::PpsDegree | SeedRule::InfectedOnlyPps => {
            Ok(pps_without_replacement(net, candidates, count, rng))
        }
        SeedRule::UniformLowestK(k) | SeedRule::UniformHighestK(k) => {
            let mut pool = candidates;
            if matches!(rule, SeedRule::UniformLowestK(_)) {
                pool.sort_by_key(|&i| (net.degree(i), i));
            } else {
                pool.sort_by_key(|&i| (std::cmp::Reverse(net.degree(i)), i));
            }
            pool.truncate(k.max(count));
            Ok(index::sample(rng, pool.len(), count).into_iter().map(|j| pool[j]).collect())
        }
    }
}

fn pps_without_replacement(
    net: &Network,
    mut pool: Vec<usize>,
    count: usize,
    rng: &mut SimRng,
) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(count);
    let mut total: usize = pool.iter().map(|&i| net.degree(i)).sum();
    for _ in 0..count {
        let mut target = rng.gen_range(0..total);
        let pos = pool
            .iter()
            .position(|&i| {
                let d = net.degree(i);
                if target < d {
                    true
                } else {
                    target -= d;
                    false
                }
            })
            .expect("target below total weight");
        let node = pool.swap_remove(pos);
        total -= net.degree(node);
        chosen.push(node);
    }
    chosen
}

/// Relative probability that `recruiter` passes a coupon to `candidate`.
pub fn recruitment_weight(recruiter: usize, candidate: usize, net: &Network, b: &BehaviorConfig) -> f64 {
    let same_group = net.is_infected(recruiter) == net.is_infected(candidate);
    let mut w = if same_group { b.within_group_dr.get(net.is_infected(recruiter)) } else { 1.0 };
    if net.is_infected(candidate) {
        w *= b.between_group_dr;
    }
    let d_cand = net.degree(candidate);
    if let Some(width) = b.within_degree_dr {
        w *= degree_kernel(net.degree(recruiter), d_cand, width);
    }
    if let Some(ramp) = b.between_degree_dr {
        w *= ramp.value(d_cand);
    }
    w
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Unseen,
    /// Offered a coupon but never reported.
    Refused,
    Sampled,
}

struct Run<'a> {
    net: &'a Network,
    cfg: &'a SamplingConfig,
    status: Vec<Status>,
    respondents: Vec<Respondent>,
    queue: VecDeque<usize>,
    events: EventLog,
}

impl Run<'_> {
    fn enroll(&mut self, node: usize, recruiter: Option<usize>, wave: usize, reseed: bool) {
        self.status[node] = Status::Sampled;
        let idx = self.respondents.len();
        self.respondents.push(Respondent {
            node,
            degree: self.net.degree(node),
            infected: self.net.is_infected(node),
            recruiter,
            wave,
            reseed,
        });
        for _ in 0..self.cfg.coupons_per_respondent {
            self.queue.push_back(idx);
        }
        self.events.coupons_issued += self.cfg.coupons_per_respondent;
    }

    fn resolve_coupon(&mut self, holder_idx: usize, rng: &mut SimRng) {
        let holder = self.respondents[holder_idx].node;
        let wave = self.respondents[holder_idx].wave;
        let b = &self.cfg.behavior;
        let candidates: Vec<usize> = self
            .net
            .neighbors(holder)
            .iter()
            .copied()
            .filter(|&j| self.status[j] == Status::Unseen)
            .collect();
        if candidates.is_empty() {
            self.events.coupons_expired += 1;
            return;
        }
        let p_pass = b.recruit_effectiveness_infection.get(self.net.is_infected(holder))
            * b.recruit_effectiveness_degree.value(self.net.degree(holder));
        if !rng.gen_bool(p_pass.clamp(0.0, 1.0)) {
            self.events.coupons_expired += 1;
            return;
        }
        let weights: Vec<f64> =
            candidates.iter().map(|&j| recruitment_weight(holder, j, self.net, b)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            self.events.coupons_expired += 1;
            return;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = *candidates.last().unwrap();
        for (&j, &w) in candidates.iter().zip(&weights) {
            if target < w {
                chosen = j;
                break;
            }
            target -= w;
        }
        let p_respond = b.nonresponse_infection.get(self.net.is_infected(chosen))
            * b.nonresponse_degree.value(self.net.degree(chosen));
        if rng.gen_bool(p_respond.clamp(0.0, 1.0)) {
            self.events.coupons_used += 1;
            self.enroll(chosen, Some(holder), wave + 1, false);
        } else {
            self.status[chosen] = Status::Refused;
            self.events.coupons_refused += 1;
            self.events.nonresponses += 1;
        }
    }
}

/// Simulates one respondent-driven sample.
pub fn run_rds(net: &Network, cfg: &SamplingConfig) -> Result<Sample, SamplingError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.rng_seed);
    let seeds = select_seeds(net, cfg.seed_rule, cfg.n_seeds, &mut rng)?;

    let mut run = Run {
        net,
        cfg,
        status: vec![Status::Unseen; net.n_nodes()],
        respondents: Vec::with_capacity(cfg.target_n),
        queue: VecDeque::new(),
        events: EventLog::default(),
    };
    for s in seeds {
        run.enroll(s, None, 0, false);
    }

    let mut exhausted = false;
    while run.respondents.len() < cfg.target_n {
        if let Some(holder) = run.queue.pop_front() {
            run.resolve_coupon(holder, &mut rng);
            continue;
        }
        if !cfg.reseed_on_die_out {
            exhausted = true;
            break;
        }
        let eligible: Vec<bool> = run.status.iter().map(|&s| s == Status::Unseen).collect();
        match select_seeds_from(net, cfg.seed_rule, 1, &eligible, &mut rng) {
            Ok(seed) => run.enroll(seed[0], None, 0, true),
            Err(_) => {
                exhausted = true;
                break;
            }
        }
    }

    let mut events = run.events;
    events.coupons_outstanding = run.queue.len();
    Ok(Sample { respondents: run.respondents, events, exhausted })
}
