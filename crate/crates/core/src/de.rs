//! Differential evolution shared by the route and leg planners.
//!
//! Each generation, every member `i` gets a mutant built on a convex-combination
//! donor of three other members, a binomial-crossover trial, and is replaced by
//! the cheapest of parent, mutant and trial.
//!
//! All random draws of a generation happen before any cost is evaluated, so
//! the evaluation order never affects the result.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("all donor weights are zero")]
    DegenerateLambdas,
    #[error("invalid DE configuration: {0}")]
    InvalidConfig(String),
}

/// Tunables shared by both planners; bounds are supplied per problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeParams {
    pub population: usize,
    pub generations: usize,
    pub scale: f64,
    pub crossover: f64,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 200,
            scale: 0.7,
            crossover: 0.9,
        }
    }
}

impl DeParams {
    pub fn validate(&self, section: &str) -> Result<(), String> {
        if self.population < 4 {
            return Err(format!("{section}.population must be >= 4"));
        }
        if self.generations < 1 {
            return Err(format!("{section}.generations must be >= 1"));
        }
        if !(0.0..=2.0).contains(&self.scale) {
            return Err(format!("{section}.scale must be in [0, 2]"));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(format!("{section}.crossover must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn config(&self, seed: u64, bounds: Vec<[f64; 2]>) -> DeConfig {
        DeConfig {
            population_size: self.population,
            generations: self.generations,
            scale: self.scale,
            crossover_rate: self.crossover,
            seed,
            bounds,
        }
    }

    /// Same settings with population and generations both scaled by `factor`.
    pub fn enlarged(&self, factor: f64) -> Self {
        Self {
            population: ((self.population as f64 * factor).round() as usize).max(4),
            generations: ((self.generations as f64 * factor).round() as usize).max(1),
            ..self.clone()
        }
    }

    /// Same settings with the generation budget scaled by `factor` (at least 1).
    pub fn reduced(&self, factor: f64) -> Self {
        Self {
            generations: ((self.generations as f64 * factor).round() as usize).max(1),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    pub population_size: usize,
    pub generations: usize,
    pub scale: f64,
    pub crossover_rate: f64,
    pub seed: u64,
    pub bounds: Vec<[f64; 2]>,
}

impl DeConfig {
    pub fn validate(&self) -> Result<(), DeError> {
        let bad = |m: &str| Err(DeError::InvalidConfig(m.to_string()));
        if self.population_size < 4 {
            return bad("population_size must be >= 4");
        }
        if self.generations < 1 {
            return bad("generations must be >= 1");
        }
        if !(0.0..=2.0).contains(&self.scale) {
            return bad("scale must be in [0, 2]");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("crossover_rate must be in [0, 1]");
        }
        if self.bounds.iter().any(|b| !(b[0] <= b[1])) {
            return bad("every bound needs low <= high");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<A> {
    pub genes: Vec<f64>,
    pub cost: f64,
    pub aux: A,
}

#[derive(Debug, Clone)]
pub struct DeOutcome<A> {
    pub best: Individual<A>,
    /// Best population cost after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Which candidate survived a three-way selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Survivor {
    Parent,
    Mutant,
    Trial,
}

static OPTIMIZE_CALLS: AtomicU64 = AtomicU64::new(0);
static TRACE_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of `optimize` calls and of best-cost traces that ever
/// increased.
pub fn trace_audit() -> (u64, u64) {
    (
        OPTIMIZE_CALLS.load(Ordering::Relaxed),
        TRACE_VIOLATIONS.load(Ordering::Relaxed),
    )
}

pub fn trace_is_monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0])
}

#[inline]
fn clamp_to(genes: &mut [f64], bounds: &[[f64; 2]]) {
    for (g, b) in genes.iter_mut().zip(bounds) {
        *g = g.clamp(b[0], b[1]);
    }
}

#[inline]
fn sanitize(cost: f64) -> f64 {
    if cost.is_nan() {
        f64::INFINITY
    } else {
        cost
    }
}

/// Uniform draws `low + u·(high - low)` for every gene of every member.
pub fn init_population(config: &DeConfig, rng: &mut SimRng) -> Vec<Vec<f64>> {
    (0..config.population_size)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|b| b[0] + rng.random::<f64>() * (b[1] - b[0]))
                .collect()
        })
        .collect()
}

/// Convex combination `Σ (λ_i / Σλ) · member_i`.
pub fn convex_donor(members: [&[f64]; 3], lambdas: [f64; 3]) -> Result<Vec<f64>, DeError> {
    let n = members[0].len();
    for m in &members[1..] {
        if m.len() != n {
            return Err(DeError::LengthMismatch(n, m.len()));
        }
    }
    let total: f64 = lambdas.iter().sum();
    if !(total > 0.0) {
        return Err(DeError::DegenerateLambdas);
    }
    let w = lambdas.map(|l| l / total);
    Ok((0..n)
        .map(|j| w[0] * members[0][j] + w[1] * members[1][j] + w[2] * members[2][j])
        .collect())
}

/// Draws `count` distinct indices in `0..n`, none equal to `exclude`.
fn distinct_indices<const N: usize>(n: usize, exclude: usize, rng: &mut SimRng) -> [usize; N] {
    let mut out = [usize::MAX; N];
    let mut filled = 0;
    while filled < N {
        let r = rng.random_range(0..n);
        if r != exclude && !out[..filled].contains(&r) {
            out[filled] = r;
            filled += 1;
        }
    }
    out
}

/// Donor for member `exclude`: three other distinct members combined with
/// weights `λ ~ U(0, 1)`, redrawn if they sum to zero.
pub fn make_donor(population: &[Vec<f64>], exclude: usize, rng: &mut SimRng) -> Vec<f64> {
    let [r1, r2, r3] = distinct_indices::<3>(population.len(), exclude, rng);
    loop {
        let lambdas = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        match convex_donor([&population[r1], &population[r2], &population[r3]], lambdas) {
            Ok(d) => return d,
            Err(DeError::DegenerateLambdas) => continue,
            Err(e) => panic!("population members differ in length: {e}"),
        }
    }
}

/// `base + scale·(a − b)`, clamped to `bounds` when given.
pub fn mutate(
    base: &[f64],
    a: &[f64],
    b: &[f64],
    scale: f64,
    bounds: Option<&[[f64; 2]]>,
) -> Result<Vec<f64>, DeError> {
    for v in [a, b] {
        if v.len() != base.len() {
            return Err(DeError::LengthMismatch(base.len(), v.len()));
        }
    }
    let mut out: Vec<f64> = (0..base.len()).map(|j| base[j] + scale * (a[j] - b[j])).collect();
    if let Some(bounds) = bounds {
        clamp_to(&mut out, bounds);
    }
    Ok(out)
}

/// Binomial crossover with explicit draws: gene `j` comes from the mutant
/// when `j == forced` or `draws[j] <= rate`, else from the parent.
pub fn crossover_with(
    parent: &[f64],
    mutant: &[f64],
    rate: f64,
    forced: usize,
    draws: &[f64],
) -> Result<Vec<f64>, DeError> {
    if parent.len() != mutant.len() {
        return Err(DeError::LengthMismatch(parent.len(), mutant.len()));
    }
    Ok((0..parent.len())
        .map(|j| {
            if j == forced || draws[j] <= rate {
                mutant[j]
            } else {
                parent[j]
            }
        })
        .collect())
}

pub fn crossover(parent: &[f64], mutant: &[f64], rate: f64, rng: &mut SimRng) -> Result<Vec<f64>, DeError> {
    if parent.len() != mutant.len() {
        return Err(DeError::LengthMismatch(parent.len(), mutant.len()));
    }
    if parent.is_empty() {
        return Ok(Vec::new());
    }
    let forced = rng.random_range(0..parent.len());
    let draws: Vec<f64> = (0..parent.len()).map(|_| rng.random::<f64>()).collect();
    crossover_with(parent, mutant, rate, forced, &draws)
}

/// Minimum-cost member of `{parent, mutant, trial}`; ties go to the trial,
/// then the mutant.
pub fn select(parent: f64, mutant: f64, trial: f64) -> Survivor {
    let (parent, mutant, trial) = (sanitize(parent), sanitize(mutant), sanitize(trial));
    if trial <= mutant && trial <= parent {
        Survivor::Trial
    } else if mutant <= parent {
        Survivor::Mutant
    } else {
        Survivor::Parent
    }
}

/// Runs `config.generations` generations. `seeds` replace the first members
/// of the random initial population (clamped to bounds). `eval` returns the
/// cost and a decoded companion value kept alongside each individual.
pub fn optimize<A, E, F>(config: &DeConfig, seeds: &[Vec<f64>], mut eval: F) -> Result<DeOutcome<A>, E>
where
    A: Clone,
    E: From<DeError>,
    F: FnMut(&[f64]) -> Result<(f64, A), E>,
{
    config.validate()?;
    let mut rng = seeded(config.seed);
    let n = config.population_size;
    let bounds = &config.bounds;
    let mut genes = init_population(config, &mut rng);
    for (slot, seed) in genes.iter_mut().zip(seeds) {
        if seed.len() != bounds.len() {
            return Err(DeError::LengthMismatch(bounds.len(), seed.len()).into());
        }
        slot.clone_from(seed);
        clamp_to(slot, bounds);
    }

    let mut evaluations = 0;
    let mut population: Vec<Individual<A>> = Vec::with_capacity(n);
    for g in genes {
        let (cost, aux) = eval(&g)?;
        evaluations += 1;
        population.push(Individual {
            genes: g,
            cost: sanitize(cost),
            aux,
        });
    }
    let best_of = |pop: &[Individual<A>]| {
        (1..pop.len()).fold(0, |b, i| if pop[i].cost < pop[b].cost { i } else { b })
    };
    let mut best = population[best_of(&population)].clone();
    let mut trace = Vec::with_capacity(config.generations);

    for _ in 0..config.generations {
        let current: Vec<Vec<f64>> = population.iter().map(|p| p.genes.clone()).collect();
        let mut proposals = Vec::with_capacity(n);
        for i in 0..n {
            let donor = make_donor(&current, i, &mut rng);
            let [a, b] = distinct_indices::<2>(n, i, &mut rng);
            let mutant = mutate(&donor, &current[a], &current[b], config.scale, Some(bounds))?;
            let trial = crossover(&current[i], &mutant, config.crossover_rate, &mut rng)?;
            proposals.push((mutant, trial));
        }
        let mut next = Vec::with_capacity(n);
        for (parent, (mutant, trial)) in population.into_iter().zip(proposals) {
            let (mc, ma) = eval(&mutant)?;
            let (tc, ta) = eval(&trial)?;
            evaluations += 2;
            let survivor = match select(parent.cost, mc, tc) {
                Survivor::Parent => parent,
                Survivor::Mutant => Individual {
                    genes: mutant,
                    cost: sanitize(mc),
                    aux: ma,
                },
                Survivor::Trial => Individual {
                    genes: trial,
                    cost: sanitize(tc),
                    aux: ta,
                },
            };
            next.push(survivor);
        }
        population = next;
        let gen_best = &population[best_of(&population)];
        if gen_best.cost < best.cost {
            best = gen_best.clone();
        }
        trace.push(gen_best.cost);
    }

    OPTIMIZE_CALLS.fetch_add(1, Ordering::Relaxed);
    if !trace_is_monotone(&trace) {
        TRACE_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
    Ok(DeOutcome {
        best,
        trace,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize, lo: f64, hi: f64) -> DeConfig {
        DeConfig {
            population_size: 30,
            generations: 200,
            scale: 0.7,
            crossover_rate: 0.9,
            seed: 11,
            bounds: vec![[lo, hi]; dim],
        }
    }

    fn sphere(x: &[f64]) -> Result<(f64, ()), DeError> {
        Ok((x.iter().map(|v| v * v).sum(), ()))
    }

    #[test]
    fn degenerate_bounds_give_identical_members() {
        let c = cfg(4, 0.0, 0.0);
        let pop = init_population(&c, &mut seeded(1));
        assert!(pop.iter().all(|m| m.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn init_is_seed_deterministic_and_uniform() {
        let c = cfg(5, 0.0, 1.0);
        assert_eq!(init_population(&c, &mut seeded(3)), init_population(&c, &mut seeded(3)));
        let big = DeConfig {
            population_size: 2000,
            ..cfg(5, 0.0, 1.0)
        };
        let pop = init_population(&big, &mut seeded(4));
        let all: Vec<f64> = pop.into_iter().flatten().collect();
        assert_eq!(all.len(), 10_000);
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn donor_hand_values() {
        let a = [0.0];
        let b = [3.0];
        let c = [6.0];
        assert_eq!(convex_donor([&a, &b, &c], [1.0, 1.0, 1.0]).unwrap(), vec![3.0]);
        assert_eq!(convex_donor([&a, &b, &c], [1.0, 0.0, 0.0]).unwrap(), vec![0.0]);
        assert_eq!(
            convex_donor([&a, &b, &c], [0.0, 0.0, 0.0]),
            Err(DeError::DegenerateLambdas)
        );
        let same = [2.5, -1.0];
        let d = convex_donor([&same, &same, &same], [0.2, 0.7, 0.4]).unwrap();
        for (x, y) in d.iter().zip(same) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn mutation_hand_values() {
        assert_eq!(mutate(&[1.0, 1.0], &[2.0, 0.0], &[0.0, 2.0], 0.5, None).unwrap(), vec![2.0, 0.0]);
        assert_eq!(mutate(&[1.0, 2.0], &[5.0, 5.0], &[1.0, 1.0], 0.0, None).unwrap(), vec![1.0, 2.0]);
        assert_eq!(mutate(&[1.0, 2.0], &[4.0, 4.0], &[4.0, 4.0], 1.3, None).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            mutate(&[1.0], &[1.0, 2.0], &[0.0], 0.5, None),
            Err(DeError::LengthMismatch(1, 2))
        );
        let clamped = mutate(&[0.9], &[1.0], &[0.0], 1.0, Some(&[[0.0, 1.0]])).unwrap();
        assert_eq!(clamped, vec![1.0]);
    }

    #[test]
    fn crossover_extremes() {
        let p = [0.0; 6];
        let m = [1.0; 6];
        let mut rng = seeded(5);
        assert_eq!(crossover(&p, &m, 1.0, &mut rng).unwrap(), m.to_vec());
        for _ in 0..20 {
            let t = crossover(&p, &m, 0.0, &mut rng).unwrap();
            assert_eq!(t.iter().filter(|&&g| g == 1.0).count(), 1);
        }
        assert!(crossover(&p, &m[..3], 0.5, &mut rng).is_err());
    }

    #[test]
    fn crossover_mutant_fraction() {
        // Expected share of mutant genes: forced index plus Cr of the other three.
        let p = [0.0; 4];
        let m = [1.0; 4];
        let mut rng = seeded(6);
        let trials = 10_000;
        let total: f64 = (0..trials)
            .map(|_| crossover(&p, &m, 0.5, &mut rng).unwrap().iter().sum::<f64>() / 4.0)
            .sum();
        let frac = total / trials as f64;
        assert!((frac - (0.5 + 0.5 / 4.0)).abs() < 0.02, "{frac}");
    }

    #[test]
    fn three_way_selection() {
        assert_eq!(select(1.0, 2.0, 3.0), Survivor::Parent);
        assert_eq!(select(3.0, 2.0, 1.0), Survivor::Trial);
        assert_eq!(select(1.0, 1.0, 1.0), Survivor::Trial);
        assert_eq!(select(2.0, 1.0, 1.5), Survivor::Mutant);
        assert_eq!(select(1.0, 1.0, 2.0), Survivor::Mutant);
        assert_eq!(select(1.0, f64::NAN, f64::NAN), Survivor::Parent);
    }

    #[test]
    fn sphere_converges_and_beats_random_search() {
        let c = cfg(10, -5.0, 5.0);
        let out = optimize(&c, &[], sphere).unwrap();
        assert!(out.best.cost < 1e-3, "{}", out.best.cost);
        assert_eq!(out.trace.len(), 200);
        assert!(trace_is_monotone(&out.trace));
        assert!(out.best.genes.iter().all(|g| (-5.0..=5.0).contains(g)));

        let mut rng = seeded(99);
        let random_best = (0..out.evaluations)
            .map(|_| (0..10).map(|_| rng.random_range(-5.0..5.0f64).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!(random_best > out.best.cost);
    }

    #[test]
    fn single_generation() {
        let c = DeConfig {
            generations: 1,
            ..cfg(3, -1.0, 1.0)
        };
        let mut calls = 0;
        let out = optimize(&c, &[], |x| {
            calls += 1;
            sphere(x)
        })
        .unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(calls, 30 + 2 * 30);
    }

    #[test]
    fn constant_cost_gives_flat_trace() {
        let out = optimize(&cfg(3, -1.0, 1.0), &[], |_| Ok::<_, DeError>((4.2, ()))).unwrap();
        assert_eq!(out.best.cost, 4.2);
        assert!(out.trace.iter().all(|&c| c == 4.2));
    }

    #[test]
    fn seeded_member_is_kept() {
        let c = DeConfig {
            generations: 5,
            ..cfg(3, -1.0, 1.0)
        };
        let out = optimize(&c, &[vec![0.0, 0.0, 0.0]], sphere).unwrap();
        assert_eq!(out.best.cost, 0.0);
        assert!(optimize(&c, &[vec![0.0]], sphere).is_err());
    }

    #[test]
    fn tiny_population_rejected() {
        let c = DeConfig {
            population_size: 3,
            ..cfg(2, 0.0, 1.0)
        };
        assert!(matches!(optimize(&c, &[], sphere), Err(DeError::InvalidConfig(_))));
    }
}
