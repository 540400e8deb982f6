//! Real-coded genetic algorithm over a box.
//!
//! Tournament selection, blend (BLX-alpha) crossover, Gaussian mutation whose
//! width decays linearly to zero over the run, and elitism so the best
//! objective value never increases from one generation to the next.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub blend_alpha: f64,
    /// Initial mutation standard deviation as a fraction of each gene's range.
    pub mutation_sigma: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub elites: usize,
    /// Penalty per unit of constraint violation (Ohm or dB).
    pub penalty_weight: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 64,
            generations: 200,
            tournament_size: 3,
            blend_alpha: 0.5,
            mutation_sigma: 0.05,
            mutation_rate: 0.25,
            crossover_rate: 0.9,
            elites: 1,
            penalty_weight: 1e3,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.population >= 2
            && self.tournament_size >= 1
            && self.elites >= 1
            && self.elites < self.population
            && self.blend_alpha >= 0.0
            && self.mutation_sigma >= 0.0
            && (0.0..=1.0).contains(&self.mutation_rate)
            && (0.0..=1.0).contains(&self.crossover_rate)
            && self.penalty_weight >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best value after initialization (index 0) and after each generation.
    pub history: Vec<f64>,
}

/// Minimizes `objective` over `bounds`. `seeds` are copied (clipped) into
/// the initial population ahead of the uniform random individuals.
pub fn minimize<R, F>(
    mut objective: F,
    bounds: &[(f64, f64)],
    seeds: &[Vec<f64>],
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<GaResult>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    if bounds.is_empty() || bounds.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::InvalidInput("optimizer bounds must be finite and ordered".into()));
    }
    let clip = |x: &mut [f64]| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = if v.is_finite() { v.clamp(lo, hi) } else { lo };
        }
    };
    let mut score = |x: &[f64]| {
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut population: Vec<Vec<f64>> = seeds
        .iter()
        .take(cfg.population)
        .map(|s| {
            let mut x = s.clone();
            x.resize(bounds.len(), 0.0);
            clip(&mut x);
            x
        })
        .collect();
    while population.len() < cfg.population {
        population.push(bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect());
    }
    let mut fitness: Vec<f64> = population.iter().map(|x| score(x)).collect();

    let best_index = |fit: &[f64]| {
        fit.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    let mut history = Vec::with_capacity(cfg.generations + 1);
    history.push(fitness[best_index(&fitness)]);

    for generation in 0..cfg.generations {
        let decay = 1.0 - generation as f64 / cfg.generations as f64;
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
        let mut next: Vec<Vec<f64>> = order[..cfg.elites].iter().map(|&i| population[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..cfg.elites].iter().map(|&i| fitness[i]).collect();

        let tournament = |rng: &mut R| {
            let mut winner = rng.random_range(0..population.len());
            for _ in 1..cfg.tournament_size {
                let challenger = rng.random_range(0..population.len());
                if fitness[challenger] < fitness[winner] {
                    winner = challenger;
                }
            }
            winner
        };

        while next.len() < cfg.population {
            let a = &population[tournament(rng)];
            let b = &population[tournament(rng)];
            let mut child: Vec<f64> = if rng.random::<f64>() < cfg.crossover_rate {
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| {
                        let (lo, hi) = (x.min(y), x.max(y));
                        let span = hi - lo;
                        let u: f64 = rng.random();
                        lo - cfg.blend_alpha * span + u * (1.0 + 2.0 * cfg.blend_alpha) * span
                    })
                    .collect()
            } else {
                a.clone()
            };
            for (v, &(lo, hi)) in child.iter_mut().zip(bounds) {
                if rng.random::<f64>() < cfg.mutation_rate {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += z * cfg.mutation_sigma * decay * (hi - lo);
                }
            }
            clip(&mut child);
            next_fit.push(score(&child));
            next.push(child);
        }
        population = next;
        fitness = next_fit;
        history.push(fitness[best_index(&fitness)]);
    }

    let i = best_index(&fitness);
    Ok(GaResult {
        best: population[i].clone(),
        best_value: fitness[i],
        history,
    })
}
