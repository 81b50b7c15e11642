//! Run configuration: a flat TOML document whose keys mirror the network,
//! sampling, behaviour and experiment parameters. Omitted keys take their
//! defaults. Group pairs are written `[uninfected, infected]` and degree
//! ramps `[low, high]`.

use rdslab::harness::HarnessError;
use rdslab::sampler::{DegreeRamp, GroupPair};
use rdslab::{BehaviorConfig, Condition, NetworkSpec, SamplingConfig, SeedRule, SsOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRuleName {
    PpsDegree,
    UniformLowestK,
    UniformHighestK,
    InfectedOnlyPps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub label: String,

    pub n_nodes: usize,
    pub n_infected: usize,
    pub mean_degree: f64,
    pub homophily_ratio: f64,
    pub differential_activity: f64,

    pub n_seeds: usize,
    pub seed_rule: SeedRuleName,
    /// Pool size for the lowest/highest-degree seed rules.
    pub seed_pool_k: usize,
    pub coupons_per_respondent: usize,
    pub target_n: usize,
    pub reseed_on_die_out: bool,

    pub within_group_dr: [f64; 2],
    pub between_group_dr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_degree_dr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub between_degree_dr: Option<[f64; 2]>,
    pub recruit_effectiveness_infection: [f64; 2],
    pub recruit_effectiveness_degree: [f64; 2],
    pub nonresponse_infection: [f64; 2],
    pub nonresponse_degree: [f64; 2],

    pub replications: usize,
    pub base_seed: u64,
    pub mean_cell_size: usize,
    pub ss_tol: f64,
    pub ss_max_iters: usize,
    pub ss_replications: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let net = NetworkSpec::default();
        let samp = SamplingConfig::default();
        let cond = Condition::default();
        RunConfig {
            label: cond.label,
            n_nodes: net.n_nodes,
            n_infected: net.n_infected,
            mean_degree: net.mean_degree,
            homophily_ratio: net.homophily_ratio,
            differential_activity: net.differential_activity,
            n_seeds: samp.n_seeds,
            seed_rule: SeedRuleName::PpsDegree,
            seed_pool_k: 20,
            coupons_per_respondent: samp.coupons_per_respondent,
            target_n: samp.target_n,
            reseed_on_die_out: samp.reseed_on_die_out,
            within_group_dr: [1.0, 1.0],
            between_group_dr: 1.0,
            within_degree_dr: None,
            between_degree_dr: None,
            recruit_effectiveness_infection: [1.0, 1.0],
            recruit_effectiveness_degree: [1.0, 1.0],
            nonresponse_infection: [1.0, 1.0],
            nonresponse_degree: [1.0, 1.0],
            replications: cond.replications,
            base_seed: cond.base_seed,
            mean_cell_size: cond.mean_cell_size,
            ss_tol: cond.ss.tol,
            ss_max_iters: cond.ss.max_iters,
            ss_replications: cond.ss.replications,
        }
    }
}

fn pair(v: [f64; 2]) -> GroupPair {
    GroupPair::from_ba(v[0], v[1])
}

fn ramp(v: [f64; 2]) -> DegreeRamp {
    DegreeRamp::new(v[0], v[1])
}

impl RunConfig {
    pub fn parse(document: &str) -> Result<Self, String> {
        toml::from_str(document).map_err(|e| e.message().to_string() + &key_hint(&e, document))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn condition(&self) -> Condition {
        let seed_rule = match self.seed_rule {
            SeedRuleName::PpsDegree => SeedRule::PpsDegree,
            SeedRuleName::UniformLowestK => SeedRule::UniformLowestK(self.seed_pool_k),
            SeedRuleName::UniformHighestK => SeedRule::UniformHighestK(self.seed_pool_k),
            SeedRuleName::InfectedOnlyPps => SeedRule::InfectedOnlyPps,
        };
        Condition {
            label: self.label.clone(),
            network: NetworkSpec {
                n_nodes: self.n_nodes,
                n_infected: self.n_infected,
                mean_degree: self.mean_degree,
                homophily_ratio: self.homophily_ratio,
                differential_activity: self.differential_activity,
                rng_seed: 0,
            },
            sampling: SamplingConfig {
                n_seeds: self.n_seeds,
                seed_rule,
                coupons_per_respondent: self.coupons_per_respondent,
                target_n: self.target_n,
                behavior: BehaviorConfig {
                    within_group_dr: pair(self.within_group_dr),
                    between_group_dr: self.between_group_dr,
                    within_degree_dr: self.within_degree_dr,
                    between_degree_dr: self.between_degree_dr.map(ramp),
                    recruit_effectiveness_infection: pair(self.recruit_effectiveness_infection),
                    recruit_effectiveness_degree: ramp(self.recruit_effectiveness_degree),
                    nonresponse_infection: pair(self.nonresponse_infection),
                    nonresponse_degree: ramp(self.nonresponse_degree),
                },
                rng_seed: 0,
                reseed_on_die_out: self.reseed_on_die_out,
            },
            replications: self.replications,
            base_seed: self.base_seed,
            mean_cell_size: self.mean_cell_size,
            ss: SsOptions {
                tol: self.ss_tol,
                max_iters: self.ss_max_iters,
                replications: self.ss_replications,
                ..SsOptions::default()
            },
        }
    }

    /// Checks every invariant, including feasibility of the network spec.
    pub fn validate(&self) -> Result<Condition, String> {
        if self.label.contains([',', '"', '\n']) {
            return Err("label: must not contain commas, quotes or newlines".into());
        }
        if !(self.ss_tol.is_finite() && self.ss_tol > 0.0) {
            return Err("ss_tol: must be > 0".into());
        }
        if self.ss_max_iters == 0 || self.ss_replications == 0 {
            return Err("ss_max_iters and ss_replications: must be >= 1".into());
        }
        let cond = self.condition();
        cond.validate().map_err(|e| match e {
            HarnessError::Network(e) => e.to_string(),
            HarnessError::Sampling(e) => e.to_string(),
            other => other.to_string(),
        })?;
        Ok(cond)
    }
}

fn key_hint(e: &toml::de::Error, document: &str) -> String {
    let Some(span) = e.span() else { return String::new() };
    let line = document[..span.start].lines().count().max(1);
    let text = document.lines().nth(line - 1).unwrap_or("").trim();
    match text.split_once('=') {
        Some((key, _)) => format!(" (key `{}`, line {line})", key.trim()),
        None => format!(" (line {line})"),
    }
}
