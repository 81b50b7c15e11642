//! Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Desk scale: 300 replications, N = 1000, n = 200
//! unless a criterion says otherwise.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rdslab::estimators::{h_estimate, h_estimate_with_rcd, inclusion_probabilities, sh_estimate, Estimator, InclusionMethod};
use rdslab::harness::oracles::{pps_with_replacement_proportion, proportion_from_respondents};
use rdslab::harness::{paired_condition_test, paired_t_test, write_summary_csv, write_table_csv};
use rdslab::rng::rng_from_seed;
use rdslab::sampler::GroupPair;
use rdslab::{
    generate_network, run_condition, run_rds, summarize, Condition, ConditionSummary, NetworkSpec, ReplicationTable,
    SamplingConfig, SeedRule,
};

const TRUE_P: f64 = 0.2;
const ESTIMATORS: [Estimator; 5] = Estimator::ALL;

struct Run {
    table: ReplicationTable,
    summary: ConditionSummary,
}

impl Run {
    fn mean(&self, e: Estimator) -> f64 {
        self.summary.mean(e)
    }
}

fn run(label: &str, tweak: impl Fn(&mut Condition)) -> Run {
    let mut cond = Condition { label: label.into(), ..Default::default() };
    tweak(&mut cond);
    let start = Instant::now();
    let table = run_condition(&cond).expect("valid condition");
    let summary = summarize(&table);
    eprintln!("  ran {label} in {:.1}s", start.elapsed().as_secs_f64());
    Run { table, summary }
}

fn means(r: &Run) -> String {
    ESTIMATORS.iter().map(|&e| format!("{e}={:.4}", r.mean(e))).collect::<Vec<_>>().join(" ")
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("criterion {id:>2}: {}  {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn criterion_1(rep: &mut Report) {
    let pop = [(1, 2), (2, 1)];
    let exact = inclusion_probabilities(&pop, 2, InclusionMethod::Exact).unwrap();
    let exact_ok = (exact[0] - 7.0 / 12.0).abs() < 1e-12 && (exact[1] - 5.0 / 6.0).abs() < 1e-12;
    let m = 100_000;
    let mut rng = rng_from_seed(1);
    let mc = inclusion_probabilities(&pop, 2, InclusionMethod::MonteCarlo { replications: m, rng: &mut rng }).unwrap();
    let se = [(5.0 / 144.0 / m as f64).sqrt(), (5.0 / 36.0 / m as f64).sqrt()];
    let z = [(mc[0] - 7.0 / 12.0) / se[0], (mc[1] - 5.0 / 6.0) / se[1]];
    let mc_ok = z.iter().all(|z| z.abs() < 3.0);
    rep.line(
        1,
        exact_ok && mc_ok,
        format!(
            "exact=({:.12}, {:.12}) mc=({:.5}, {:.5}) z=({:.2}, {:.2}) tol 1e-12 / 3 SE",
            exact[0], exact[1], mc[0], mc[1], z[0], z[1]
        ),
    );
}

fn criterion_2(rep: &mut Report) {
    let mut checked = 0;
    let mut mismatches = 0;
    for seed in 0..100u64 {
        let net = generate_network(&NetworkSpec { differential_activity: 1.8, rng_seed: seed, ..Default::default() })
            .unwrap();
        for n in [15, 200] {
            let s = run_rds(&net, &SamplingConfig { target_n: n, rng_seed: seed, ..Default::default() }).unwrap();
            let Ok(sh) = sh_estimate(&s) else { continue };
            let ones = vec![1.0; s.len()];
            checked += 1;
            if h_estimate_with_rcd(&s, &ones).ok() != Some(sh.value) {
                mismatches += 1;
            }
            // A sample this small has one degree group, so its RCD is 1.
            if n == 15 && h_estimate(&s, 12).ok().map(|h| h.value) != Some(sh.value) {
                mismatches += 1;
            }
        }
    }
    rep.line(2, mismatches == 0 && checked > 0, format!("{checked} samples, {mismatches} with h - sh != 0"));
}

fn criterion_3(rep: &mut Report) {
    let mut rng = rng_from_seed(3);
    let mut worst: f64 = 0.0;
    let mut populations = 0;
    while populations < 100 {
        let n: usize = rng.gen_range(20..5000);
        let (mut a_r, mut b_r, mut n_a) = (0.0, 0.0, 0.0);
        let (p_a, v_a_true, v_b_true) = (rng.gen_range(0.05..0.6), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0));
        for _ in 0..n {
            let a = rng.gen_bool(p_a);
            let responds = rng.gen_bool(if a { v_a_true } else { v_b_true });
            n_a += f64::from(u8::from(a));
            match (a, responds) {
                (true, true) => a_r += 1.0,
                (false, true) => b_r += 1.0,
                _ => {}
            }
        }
        let n_b = n as f64 - n_a;
        if a_r == 0.0 || b_r == 0.0 {
            continue;
        }
        populations += 1;
        let p = proportion_from_respondents(a_r, b_r, a_r / n_a, b_r / n_b);
        worst = worst.max((p - n_a / n as f64).abs());
    }
    let weights: Vec<f64> = (0..10).map(|_| rng.gen_range(0.1..5.0)).collect();
    let infected: Vec<bool> = (0..10).map(|i| i < 4).collect();
    let target = weights[..4].iter().sum::<f64>() / weights.iter().sum::<f64>();
    let (p, se) = pps_with_replacement_proportion(&weights, &infected, 100_000, &mut rng);
    let z = (p - target) / se;
    rep.line(
        3,
        worst < 1e-12 && z.abs() < 3.0,
        format!("non-response identity max err {worst:.2e} (tol 1e-12); HH ratio {p:.5} vs {target:.5}, z={z:.2} (tol 3 SE)"),
    );
}

fn criterion_4(rep: &mut Report, base: &Run) {
    let ok = ESTIMATORS.iter().all(|&e| (base.mean(e) - TRUE_P).abs() < 0.02);
    rep.line(4, ok, format!("DA=1 {} (tol 0.2 +/- 0.02)", means(base)));
}

fn criterion_5(rep: &mut Report, high: &Run, low: &Run) {
    let corrected = [Estimator::Vh, Estimator::Ss, Estimator::Sh, Estimator::H];
    let high_ok = high.mean(Estimator::Naive) > 0.22 && corrected.iter().all(|&e| (high.mean(e) - TRUE_P).abs() < 0.03);
    let low_ok = low.mean(Estimator::Naive) < 0.18 && corrected.iter().all(|&e| (low.mean(e) - TRUE_P).abs() < 0.03);
    rep.line(
        5,
        high_ok && low_ok,
        format!("DA=1.8 {} | DA=0.5 {} (naive beyond 0.2 +/- 0.02, others within 0.03)", means(high), means(low)),
    );
}

fn criterion_6(rep: &mut Report, dr2: &Run, dr1: &Run, dr05: &Run) {
    let mut ok = true;
    let mut worst_p: f64 = 0.0;
    for e in ESTIMATORS {
        for (hi, lo) in [(dr2, dr1), (dr1, dr05)] {
            let t = paired_condition_test(&hi.table, &lo.table, e, 10).unwrap();
            ok &= t.mean_diff > 0.0 && t.p_adjusted < 0.05;
            worst_p = worst_p.max(t.p_adjusted);
        }
    }
    rep.line(
        6,
        ok,
        format!(
            "DR=2 {} | DR=1 {} | DR=0.5 {}; max adjusted p {worst_p:.2e} (m=10, tol 0.05)",
            means(dr2),
            means(dr1),
            means(dr05)
        ),
    );
}

fn criterion_7(rep: &mut Report, up: &Run, down: &Run) {
    let shifted = [Estimator::Naive, Estimator::Vh, Estimator::Ss]
        .iter()
        .all(|&e| up.mean(e) - down.mean(e) > 0.01);
    let stable = [Estimator::Sh, Estimator::H]
        .iter()
        .all(|&e| [up, down].iter().all(|r| (r.mean(e) - TRUE_P).abs() < 0.015));
    rep.line(
        7,
        shifted && stable,
        format!("RE(0.6,0.9) {} | RE(0.9,0.6) {} (shift > 0.01, sh/h within 0.015)", means(up), means(down)),
    );
}

fn criterion_8(rep: &mut Report, up: &Run, down: &Run) {
    let ok = [up, down].iter().all(|r| {
        let naive = r.mean(Estimator::Naive) - TRUE_P;
        [Estimator::Sh, Estimator::H].iter().all(|&e| {
            let dev = r.mean(e) - TRUE_P;
            dev.signum() == -naive.signum() && dev.abs() > 0.01
        })
    });
    rep.line(
        8,
        ok,
        format!("n=500 RE(0.6,0.9) {} | RE(0.9,0.6) {} (opposite sign, |dev| > 0.01)", means(up), means(down)),
    );
}

fn criterion_9(rep: &mut Report, runs: &[&Run]) {
    let worst = runs
        .iter()
        .map(|r| (r.mean(Estimator::H) - r.mean(Estimator::Sh)).abs())
        .fold(0.0, f64::max);
    rep.line(9, worst < 0.002, format!("max |mean(h) - mean(sh)| = {worst:.5} over {} conditions (tol 0.002)", runs.len()));
}

fn criterion_10(rep: &mut Report, low_seeds: &Run) {
    let pairs: Vec<(f64, f64)> = low_seeds
        .table
        .rows
        .iter()
        .filter_map(|r| Some(((r.estimates.sh.ok()? - TRUE_P).abs(), (r.estimates.h.ok()? - TRUE_P).abs())))
        .collect();
    let t = paired_t_test(&pairs, 1).unwrap();
    rep.line(
        10,
        t.mean_diff > 0.0 && t.p_adjusted < 0.05,
        format!(
            "lowest-20 seeds DA=1.8 {}; mean(|sh-0.2| - |h-0.2|) = {:.5}, t = {:.3}, p = {:.2e} (tol 0.05)",
            means(low_seeds),
            t.mean_diff,
            t.t_statistic,
            t.p_adjusted
        ),
    );
}

fn criterion_11(rep: &mut Report, runs: &[&Run]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for r in runs {
        let (naive, vh, ss) = (r.mean(Estimator::Naive), r.mean(Estimator::Vh), r.mean(Estimator::Ss));
        ok &= naive.min(vh) <= ss && ss <= naive.max(vh);
        detail.push(format!("{}: naive={naive:.6} ss={ss:.6} vh={vh:.6}", r.table.label));
    }
    rep.line(11, ok, detail.join(" | "));
}

fn criterion_12(rep: &mut Report) {
    let cond = Condition { replications: 20, base_seed: 12, ..Default::default() };
    let render = || {
        let table = run_condition(&cond).unwrap();
        let (mut t, mut s) = (Vec::new(), Vec::new());
        write_table_csv(std::slice::from_ref(&table), &mut t).unwrap();
        write_summary_csv(&[summarize(&table)], &mut s).unwrap();
        (t, s)
    };
    let (a, b) = (render(), render());
    rep.line(12, a == b, format!("table {} bytes, summary {} bytes, identical on rerun", a.0.len(), a.1.len()));
}

fn main() -> ExitCode {
    let mut rep = Report { failures: 0 };
    criterion_1(&mut rep);
    criterion_2(&mut rep);
    criterion_3(&mut rep);

    let with_da = |da: f64| move |c: &mut Condition| c.network.differential_activity = da;
    let with_dr = |dr: f64| move |c: &mut Condition| c.sampling.behavior.between_group_dr = dr;
    let with_re = |b: f64, a: f64, n: usize| {
        move |c: &mut Condition| {
            c.sampling.target_n = n;
            c.sampling.behavior.recruit_effectiveness_infection = GroupPair::from_ba(b, a);
        }
    };

    let base = run("da1", with_da(1.0));
    criterion_4(&mut rep, &base);
    let da18 = run("da1.8", with_da(1.8));
    let da05 = run("da0.5", with_da(0.5));
    criterion_5(&mut rep, &da18, &da05);
    let dr2 = run("dr2", with_dr(2.0));
    let dr05 = run("dr0.5", with_dr(0.5));
    criterion_6(&mut rep, &dr2, &base, &dr05);
    let re_up = run("re_b0.6_a0.9", with_re(0.6, 0.9, 200));
    let re_down = run("re_b0.9_a0.6", with_re(0.9, 0.6, 200));
    criterion_7(&mut rep, &re_up, &re_down);
    let re_up_500 = run("re_b0.6_a0.9_n500", with_re(0.6, 0.9, 500));
    let re_down_500 = run("re_b0.9_a0.6_n500", with_re(0.9, 0.6, 500));
    criterion_8(&mut rep, &re_up_500, &re_down_500);
    criterion_9(&mut rep, &[&base, &da18, &da05, &dr2, &dr05, &re_up, &re_down]);
    let low_seeds = run("lowest20_da1.8", |c| {
        c.network.differential_activity = 1.8;
        c.sampling.seed_rule = SeedRule::UniformLowestK(20);
    });
    criterion_10(&mut rep, &low_seeds);
    criterion_11(&mut rep, &[&base, &da18, &da05]);
    criterion_12(&mut rep);

    println!("acceptance: {} of 12 criteria passed", 12 - rep.failures);
    if rep.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
