//! End-to-end acceptance run: one line per criterion, non-zero exit on any
//! failure. Built with `harness = false`.

mod common;

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use common::{oracle_optimum, random_network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuvplan::de::{trace_audit, DeParams};
use uuvplan::env::{current_at, point_in_collision, ObstacleKind, VortexField, VortexParams};
use uuvplan::global::{decode_route, plan_global, GlobalProblem};
use uuvplan::local::{build_path, genome_bounds, SplineConfig};
use uuvplan::mission::MissionReport;
use uuvplan::network::Network;
use uuvplan::output::{run_once, run_trials, summarize, trial_scenario, trials_csv, TrialRow};
use uuvplan::scenario::{paper_baseline, Scenario};

const TRIALS: usize = 30;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Shortest start-goal time over the network by relaxation, for budget sizing.
fn fastest(net: &Network, speed: f64) -> f64 {
    let n = net.len();
    let idx = |id: u32| net.stations.iter().position(|s| s.id == id).unwrap();
    let mut best = vec![f64::INFINITY; n];
    best[idx(net.start_id)] = 0.0;
    for _ in 0..n {
        for e in &net.edges {
            let (a, b) = (idx(e.from), idx(e.to));
            let t = dist(net.stations[a].position, net.stations[b].position) / speed;
            best[b] = best[b].min(best[a] + t);
            best[a] = best[a].min(best[b] + t);
        }
    }
    best[idx(net.goal_id)]
}

fn route_oracle() -> Outcome {
    let speed = 2.4;
    let de = DeParams {
        population: 50,
        generations: 300,
        ..DeParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    let clock = Instant::now();
    for k in 0..100u64 {
        let n = rng.random_range(4..=7);
        let net = random_network(n, rng.random_range(0.3..1.0), 5000 + k);
        let fast = fastest(&net, speed);
        // even instances are generous, odd ones sit just above the fastest walk
        let budget = if k % 2 == 0 {
            fast * rng.random_range(2.0..4.0)
        } else {
            fast * rng.random_range(1.02..1.4)
        };
        let collected = vec![false; net.len()];
        let problem = GlobalProblem {
            network: &net,
            start: net.start_id,
            goal: net.goal_id,
            budget,
            speed,
            collected: &collected,
        };
        let best = oracle_optimum(&net, budget, speed);
        if let Ok(plan) = plan_global(&problem, &de, 5, k) {
            if plan.route.cost <= best * 1.05 {
                hits += 1;
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(hits >= 95 && secs <= 300.0, format!("{hits}/100 within 5% of enumeration, {secs:.0} s"))
}

fn current_field() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let extent = [0.0, 0.0, 1e4, 1e4];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c = [rng.random_range(0.0..1e4), rng.random_range(0.0..1e4)];
        let l = rng.random_range(50.0..500.0);
        let g = rng.random_range(-500.0..500.0);
        let p = [c[0] + rng.random_range(-3000.0..3000.0), c[1] + rng.random_range(-3000.0..3000.0)];
        let got = current_at(p, &VortexField::with_vortices(vec![VortexParams::new(c, l, g)], extent));
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        let r2 = dx * dx + dy * dy;
        let f = g / (TAU * r2) * (1.0 - (-r2 / (l * l)).exp());
        worst = worst.max((got.vx + f * dy).abs()).max((got.vy - f * dx).abs());
    }
    let (l, g) = (300.0, 250.0);
    let far = current_at([20.0 * l, 0.0], &VortexField::with_vortices(vec![VortexParams::new([0.0, 0.0], l, g)], extent));
    let point = g / (TAU * 20.0 * l);
    let far_err = (far.magnitude() - point).abs() / point;
    let mut sup = 0.0f64;
    for _ in 0..1000 {
        let vs: Vec<VortexParams> = (0..3)
            .map(|_| {
                VortexParams::new(
                    [rng.random_range(0.0..1e4), rng.random_range(0.0..1e4)],
                    rng.random_range(50.0..500.0),
                    rng.random_range(-500.0..500.0),
                )
            })
            .collect();
        let p = [rng.random_range(0.0..1e4), rng.random_range(0.0..1e4)];
        let all = current_at(p, &VortexField::with_vortices(vs.clone(), extent));
        let (mut sx, mut sy) = (0.0, 0.0);
        for v in vs {
            let s = current_at(p, &VortexField::with_vortices(vec![v], extent));
            sx += s.vx;
            sy += s.vy;
        }
        sup = sup.max((all.vx - sx).abs()).max((all.vy - sy).abs());
    }
    outcome(
        worst <= 1e-9 && far_err <= 0.01 && sup <= 1e-12,
        format!("closed-form err {worst:.1e}, 20l err {:.2}%, superposition err {sup:.1e}", far_err * 100.0),
    )
}

fn spline_and_decode() -> Outcome {
    let cfg = SplineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = [rng.random_range(0.0..1e4), rng.random_range(0.0..1e4), rng.random_range(0.0..1e3)];
        let b = [rng.random_range(0.0..1e4), rng.random_range(0.0..1e4), rng.random_range(0.0..1e3)];
        let genes: Vec<f64> = genome_bounds(a, b, [1e4, 1e4, 1e3], &cfg)
            .iter()
            .map(|r| rng.random_range(r[0]..=r[1]))
            .collect();
        let p = build_path(&genes, a, b, &cfg).unwrap();
        worst = worst.max(dist(p.start(), a)).max(dist(p.end(), b));
    }
    let mut bad = 0;
    for k in 0..1000u64 {
        let net = random_network(20, 0.15, k);
        let collected = vec![false; net.len()];
        let problem = GlobalProblem {
            network: &net,
            start: net.start_id,
            goal: net.goal_id,
            budget: fastest(&net, 2.4) * rng.random_range(1.0..4.0),
            speed: 2.4,
            collected: &collected,
        };
        let keys: Vec<f64> = (0..net.len()).map(|_| rng.random()).collect();
        let ok = match decode_route(&keys, &problem) {
            Ok(r) => {
                let s = &r.sequence;
                let mut seen = BTreeSet::new();
                s.first() == Some(&net.start_id)
                    && s.last() == Some(&net.goal_id)
                    && s[..s.len() - 1].iter().all(|&v| v != net.goal_id)
                    && s.windows(2).all(|w| net.is_usable(w[0], w[1]) && seen.insert((w[0].min(w[1]), w[0].max(w[1]))))
            }
            Err(_) => false,
        };
        if !ok {
            bad += 1;
        }
    }
    outcome(worst <= 1e-6 && bad == 0, format!("endpoint err {worst:.1e} m, {bad} bad walks of 1000"))
}

/// The baseline at a reduced DE budget, as used for the batch criteria.
fn batch_scenario() -> Scenario {
    let mut sc = paper_baseline();
    sc.de.local.population = 20;
    sc.de.local.generations = 40;
    sc.de.global.population = 30;
    sc.de.global.generations = 60;
    sc.mission.global_restarts = 2;
    sc
}

struct Batch {
    scenario: Scenario,
    rows: Vec<TrialRow>,
    reports: Vec<Option<MissionReport>>,
}

fn kinematics(b: &Batch) -> Outcome {
    let (mut paths, mut bad) = (0, 0);
    let mut peak = [0.0f64; 3];
    for r in b.reports.iter().flatten() {
        for p in &r.accepted_paths {
            paths += 1;
            peak = [peak[0].max(p.peaks.surge), peak[1].max(p.peaks.sway), peak[2].max(p.peaks.yaw_rate)];
            if p.peaks.surge > 2.7 || p.peaks.sway > 0.5 || p.peaks.yaw_rate > 17f64.to_radians() {
                bad += 1;
            }
        }
    }
    outcome(
        bad == 0 && paths > 0,
        format!(
            "{bad} violations over {paths} paths; peaks surge {:.3} sway {:.3} yaw rate {:.2} deg/s",
            peak[0],
            peak[1],
            peak[2].to_degrees()
        ),
    )
}

fn collisions(b: &Batch) -> Outcome {
    let (mut ticks, mut hits, mut reported) = (0, 0, 0);
    for (row, r) in b.rows.iter().zip(&b.reports) {
        let Some(r) = r else { continue };
        reported += r.collisions;
        // coast and static obstacles never move, so ticks can be rechecked
        let setup = trial_scenario(&b.scenario, row.seed).mission_setup(row.seed).unwrap();
        let fixed: Vec<_> = setup
            .world
            .obstacles
            .iter()
            .filter(|o| o.kind == ObstacleKind::Static)
            .cloned()
            .collect();
        let completed = r.legs.iter().filter(|l| !l.collided).count();
        for t in r.ticks.iter().filter(|t| t.leg < completed) {
            ticks += 1;
            if point_in_collision(t.position, &setup.world.map, &fixed) {
                hits += 1;
            }
        }
    }
    outcome(
        hits == 0 && reported == 0 && ticks > 0,
        format!("{hits} static hits over {ticks} ticks, {reported} collisions reported"),
    )
}

fn timing(b: &Batch) -> Outcome {
    let ok: Vec<&TrialRow> = b.rows.iter().filter(|r| r.success).collect();
    let rate = ok.len() as f64 / b.rows.len() as f64;
    let envelope = ok.iter().all(|r| r.residual_time >= 0.0 && r.route_time <= 14_400.0);
    let mean = ok.iter().map(|r| r.residual_time).sum::<f64>() / ok.len().max(1) as f64;
    let slowest = b.reports.iter().flatten().map(|r| r.wall_clock).fold(0.0, f64::max);
    outcome(
        rate >= 0.9 && envelope && mean <= 700.0 && slowest <= 60.0,
        format!(
            "{}/{} succeeded, mean residual {mean:.0} s, slowest trial {slowest:.1} s",
            ok.len(),
            b.rows.len()
        ),
    )
}

fn replanning(b: &Batch) -> Outcome {
    let max = b.rows.iter().map(|r| r.global_replans).max().unwrap_or(0);
    let with_overrun = b.rows.iter().filter(|r| r.overrun_replans >= 1).count();
    outcome(
        max <= 10 && with_overrun >= 1,
        format!("max {max} global replans, {with_overrun} trials with an overrun replan"),
    )
}

fn determinism(b: &Batch) -> Outcome {
    let sc = paper_baseline();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_once(&sc, sc.seed, d.path()).unwrap();
    }
    let mut same = true;
    for f in ["report.txt", "legs.csv", "ticks.csv", "replans.csv", "convergence.csv", "field.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let c = std::fs::read(dirs[1].path().join(f)).unwrap();
        same &= a == c;
    }

    // recompute every aggregate from the emitted per-trial rows
    let text = trials_csv(&b.rows, &b.scenario.name, b.scenario.seed);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let col = |name: &str| head.iter().position(|h| *h == name).unwrap();
    let summary = summarize(b.rows.clone());
    let mut agrees = true;
    for (metric, agg) in &summary.aggregates {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r[col("success")] == "true")
            .map(|r| r[col(metric)].parse().unwrap())
            .collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        agrees &= v.len() == agg.n
            && (mean - agg.mean).abs() <= 1e-9 * mean.abs().max(1.0)
            && (sd - agg.sd).abs() <= 1e-9 * sd.abs().max(1.0)
            && (sd / n.sqrt() - agg.se).abs() <= 1e-9 * sd.abs().max(1.0);
    }
    outcome(same && agrees, format!("run files identical: {same}, aggregates recomputed: {agrees}"))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 global-route oracle", route_oracle()));
    results.push(("3 current field", current_field()));
    results.push(("8 spline and decode invariants", spline_and_decode()));

    let scenario = batch_scenario();
    let clock = Instant::now();
    let (rows, reports) = run_trials(&scenario, TRIALS, scenario.seed).into_iter().unzip();
    eprintln!("batch of {TRIALS} trials took {:.0} s", clock.elapsed().as_secs_f64());
    let batch = Batch { scenario, rows, reports };
    results.push(("4 kinematic limits", kinematics(&batch)));
    results.push(("5 collision-free execution", collisions(&batch)));
    results.push(("6 mission timing", timing(&batch)));
    results.push(("7 replanning", replanning(&batch)));
    results.push(("9 determinism", determinism(&batch)));

    // every optimizer run above, including the missions, is audited here
    let (calls, rising) = trace_audit();
    results.push(("2 DE elitism", outcome(calls > 0 && rising == 0, format!("{rising} rising traces over {calls} runs"))));

    results.sort_by_key(|(name, _)| name.split(' ').next().unwrap().parse::<u32>().unwrap());
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
