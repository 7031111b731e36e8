//! Sequential model-based minimization on the unit cube.
//!
//! A space-filling Latin hypercube seeds the search; later proposals
//! maximize expected improvement under a Gaussian-process surrogate with a
//! squared-exponential kernel whose length scale is picked by marginal
//! likelihood from a small grid. Everything is driven by one seeded RNG, so
//! a run is reproducible call for call.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};

/// Size of the initial design, capped by the budget.
pub const INITIAL_DESIGN: usize = 8;
const CANDIDATES: usize = 2048;
const LOCAL_CANDIDATES: usize = 64;
const LENGTH_SCALES: [f64; 7] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.5];
const NOISE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    #[default]
    GaussianProcess,
    RandomSearch,
}

/// Ask/tell minimizer over `[0, 1]^dim`.
#[derive(Debug, Clone)]
pub struct Minimizer {
    dim: usize,
    kind: SurrogateKind,
    rng: ChaCha8Rng,
    design: Vec<Vec<f64>>,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl Minimizer {
    pub fn new(dim: usize, budget: usize, kind: SurrogateKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = match kind {
            SurrogateKind::GaussianProcess => latin_hypercube(&mut rng, INITIAL_DESIGN.min(budget), dim),
            SurrogateKind::RandomSearch => Vec::new(),
        };
        Self {
            dim,
            kind,
            rng,
            design,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn ask(&mut self) -> Vec<f64> {
        let idx = self.xs.len();
        if idx < self.design.len() {
            return self.design[idx].clone();
        }
        match self.kind {
            SurrogateKind::RandomSearch => self.uniform(),
            SurrogateKind::GaussianProcess => self.propose_ei(),
        }
    }

    pub fn tell(&mut self, x: Vec<f64>, y: f64) {
        self.xs.push(x);
        self.ys.push(y);
    }

    fn uniform(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| self.rng.random::<f64>()).collect()
    }

    fn propose_ei(&mut self) -> Vec<f64> {
        let gp = match GaussianProcess::fit(&self.xs, &self.ys) {
            Some(gp) => gp,
            None => return self.uniform(),
        };
        let (best_idx, best) = self
            .ys
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one observation");
        let incumbent = self.xs[best_idx].clone();
        let local = Normal::new(0.0, 0.05).unwrap();
        let mut candidates: Vec<Vec<f64>> = (0..CANDIDATES).map(|_| self.uniform()).collect();
        for _ in 0..LOCAL_CANDIDATES {
            let c = incumbent
                .iter()
                .map(|&v| (v + local.sample(&mut self.rng)).clamp(0.0, 1.0))
                .collect();
            candidates.push(c);
        }
        let mut best_ei = f64::NEG_INFINITY;
        let mut choice = None;
        for (i, c) in candidates.iter().enumerate() {
            let (mu, sigma) = gp.predict(c);
            let ei = expected_improvement(mu, sigma, best);
            if ei > best_ei {
                best_ei = ei;
                choice = Some(i);
            }
        }
        match choice {
            Some(i) if best_ei > 0.0 => candidates.swap_remove(i),
            _ => self.uniform(),
        }
    }
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    let gain = best - mu;
    if sigma <= 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let n = StdNormal::standard();
    gain * n.cdf(z) + sigma * n.pdf(z)
}

fn latin_hypercube(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; count];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / count as f64;
        }
    }
    points
}

/// Zero-mean GP on standardized targets.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    xs: Vec<Vec<f64>>,
    length_scale: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    weights: DVector<f64>,
    y_mean: f64,
    y_std: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

impl GaussianProcess {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = ys.len();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let z = DVector::from_iterator(n, ys.iter().map(|y| (y - y_mean) / y_std));

        let mut best: Option<(f64, Self)> = None;
        for &ls in &LENGTH_SCALES {
            let k = DMatrix::from_fn(n, n, |i, j| {
                let base = (-sq_dist(&xs[i], &xs[j]) / (2.0 * ls * ls)).exp();
                if i == j {
                    base + NOISE
                } else {
                    base
                }
            });
            let Some(chol) = k.cholesky() else { continue };
            let weights = chol.solve(&z);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * z.dot(&weights) - 0.5 * log_det;
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((
                    lml,
                    Self {
                        xs: xs.to_vec(),
                        length_scale: ls,
                        chol,
                        weights,
                        y_mean,
                        y_std,
                    },
                ));
            }
        }
        best.map(|(_, gp)| gp)
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Posterior mean and standard deviation in the original units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ls2 = 2.0 * self.length_scale * self.length_scale;
        let kstar = DVector::from_iterator(
            self.xs.len(),
            self.xs.iter().map(|xi| (-sq_dist(xi, x) / ls2).exp()),
        );
        let mean = kstar.dot(&self.weights);
        let v = self.chol.l().solve_lower_triangular(&kstar).expect("triangular solve");
        let var = (1.0 + NOISE - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_std * mean, self.y_std * var.sqrt())
    }
}
