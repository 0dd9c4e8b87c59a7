//! CP-ALS driver for third-order sparse tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csf::{allocate_csfs, CsfPolicy};
use crate::dense::{cholesky_solve, gram, hadamard_accumulate, normalize_columns, FactorMatrix, GramMatrix, NormKind};
use crate::lock_pool::{LockPool, DEFAULT_POOL_SIZE};
use crate::mttkrp::MttkrpEngine;
use crate::timing::{Routine, RoutineTimings, Stopwatch};
use crate::{Error, Result, SparseTensor, ORDER};

/// Column normalization applied after each factor update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormSchedule {
    AlwaysTwo,
    /// 2-norm on the first iteration, max-norm afterwards.
    TwoThenMax,
}

impl NormSchedule {
    fn kind(self, iteration: usize) -> NormKind {
        match self {
            NormSchedule::TwoThenMax if iteration > 0 => NormKind::Max,
            _ => NormKind::Two,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpAlsConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once the fit changes by less than this. Zero runs every iteration.
    pub tolerance: f64,
    pub seed: u64,
    pub tasks: usize,
    pub csf_policy: CsfPolicy,
    pub norm_schedule: NormSchedule,
    pub lock_pool_size: usize,
}

impl Default for CpAlsConfig {
    fn default() -> Self {
        CpAlsConfig {
            rank: 35,
            max_iters: 20,
            tolerance: 1e-5,
            seed: 0,
            tasks: 1,
            csf_policy: CsfPolicy::Two,
            norm_schedule: NormSchedule::TwoThenMax,
            lock_pool_size: DEFAULT_POOL_SIZE,
        }
    }
}

impl CpAlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.tasks == 0 {
            return Err(Error::InvalidConfig("tasks must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!("tolerance {} must be finite and >= 0", self.tolerance)));
        }
        Ok(())
    }
}

/// Weighted sum of rank-one terms: `sum_r lambda_r a_r o b_r o c_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    pub rank: usize,
    pub factors: [FactorMatrix; ORDER],
    pub lambda: Vec<f64>,
    pub fit: f64,
}

impl KruskalModel {
    pub fn dims(&self) -> [usize; ORDER] {
        [self.factors[0].rows, self.factors[1].rows, self.factors[2].rows]
    }

    /// Model value at one coordinate.
    pub fn value_at(&self, c: [usize; ORDER]) -> f64 {
        (0..self.rank)
            .map(|r| self.lambda[r] * self.factors[0].get(c[0], r) * self.factors[1].get(c[1], r) * self.factors[2].get(c[2], r))
            .sum()
    }

    /// Folds column 2-norms of every factor into `lambda` and makes the
    /// weights non-negative. The represented tensor is unchanged.
    pub fn finalize(&mut self) {
        for f in self.factors.iter_mut() {
            let norms = normalize_columns(f, NormKind::Two);
            for (l, n) in self.lambda.iter_mut().zip(norms) {
                *l *= n;
            }
        }
        for r in 0..self.rank {
            if self.lambda[r] < 0.0 {
                self.lambda[r] = -self.lambda[r];
                let f = &mut self.factors[0];
                for i in 0..f.rows {
                    f.data[i * f.cols + r] = -f.data[i * f.cols + r];
                }
            }
        }
    }
}

/// Outcome of one decomposition.
#[derive(Debug, Clone)]
pub struct CpAlsRun {
    pub model: KruskalModel,
    /// Fit after each completed iteration.
    pub fits: Vec<f64>,
    pub timings: RoutineTimings,
}

impl CpAlsRun {
    pub fn iterations(&self) -> usize {
        self.fits.len()
    }
}

/// Factor matrices with entries drawn uniformly from `[0, 1)`, row-major,
/// mode 0 first. The same seed always yields the same bits.
pub fn init_factors(dims: [usize; ORDER], rank: usize, seed: u64) -> [FactorMatrix; ORDER] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dims.map(|d| FactorMatrix::from_fn(d, rank, |_, _| rng.gen::<f64>()))
}

/// Fit from cached quantities.
///
/// `last_mttkrp` must be the MTTKRP of the mode whose factor is `last_factor`,
/// computed with the current values of the other two factors.
pub fn fit_from_parts(
    norm_x_sq: f64,
    lambda: &[f64],
    grams: &[GramMatrix; ORDER],
    last_mttkrp: &FactorMatrix,
    last_factor: &FactorMatrix,
) -> Result<f64> {
    if norm_x_sq <= 0.0 {
        return Err(Error::EmptyTensor);
    }
    let mut had = grams[0].clone();
    hadamard_accumulate(&mut had, &grams[1])?;
    hadamard_accumulate(&mut had, &grams[2])?;
    let norm_z_sq = had.quad_form(lambda);

    let rank = lambda.len();
    let mut per_col = vec![0.0; rank];
    for i in 0..last_factor.rows {
        for ((acc, m), a) in per_col.iter_mut().zip(last_mttkrp.row(i)).zip(last_factor.row(i)) {
            *acc += m * a;
        }
    }
    let inner: f64 = per_col.iter().zip(lambda).map(|(p, l)| p * l).sum();

    let residual_sq = (norm_x_sq + norm_z_sq - 2.0 * inner).max(0.0);
    Ok(1.0 - residual_sq.sqrt() / norm_x_sq.sqrt())
}

/// Fit `1 - ||X - Z|| / ||X||` of `model` against `t`, given the mode-3
/// MTTKRP of `t` with the model's first two factors and the Gram matrices of
/// all three factors.
pub fn compute_fit(t: &SparseTensor, model: &KruskalModel, last_mttkrp: &FactorMatrix, grams: &[GramMatrix; ORDER]) -> Result<f64> {
    fit_from_parts(t.norm_sq(), &model.lambda, grams, last_mttkrp, &model.factors[ORDER - 1])
}

/// Runs CP-ALS on `t`.
pub fn cp_als(t: &SparseTensor, cfg: &CpAlsConfig) -> Result<CpAlsRun> {
    cfg.validate()?;
    t.validate()?;
    let total = Stopwatch::start();
    let mut timings = RoutineTimings::default();

    let norm_x_sq = t.norm_sq();
    if t.nnz() == 0 || norm_x_sq == 0.0 {
        return Err(Error::EmptyTensor);
    }

    let alloc = allocate_csfs(t, cfg.csf_policy, cfg.tasks)?;
    timings.add(Routine::Sort, alloc.sort_seconds);
    let mut engine = MttkrpEngine::with_pool(&alloc, cfg.tasks, LockPool::new(cfg.lock_pool_size)?);

    let rank = cfg.rank;
    let mut factors = init_factors(t.dims, rank, cfg.seed);
    let mut clock = Stopwatch::start();
    let mut grams = [gram(&factors[0]), gram(&factors[1]), gram(&factors[2])];
    clock.lap(&mut timings, Routine::MatAta);

    let mut mttkrp_out = t.dims.map(|d| FactorMatrix::zeros(d, rank));
    let mut lambda = vec![1.0; rank];
    let mut fits = Vec::with_capacity(cfg.max_iters);

    for it in 0..cfg.max_iters {
        for n in 0..ORDER {
            let mut clock = Stopwatch::start();
            let mut v = GramMatrix::ones(rank);
            for (m, g) in grams.iter().enumerate() {
                if m != n {
                    hadamard_accumulate(&mut v, g)?;
                }
            }
            clock.lap(&mut timings, Routine::MatAta);

            engine.compute(n, &factors, &mut mttkrp_out[n])?;
            clock.lap(&mut timings, Routine::Mttkrp);

            factors[n] = cholesky_solve(&v, &mttkrp_out[n])?;
            clock.lap(&mut timings, Routine::Inverse);

            lambda = normalize_columns(&mut factors[n], cfg.norm_schedule.kind(it));
            clock.lap(&mut timings, Routine::MatNorm);

            grams[n] = gram(&factors[n]);
            clock.lap(&mut timings, Routine::MatAta);
        }

        let clock = Stopwatch::start();
        let fit = fit_from_parts(norm_x_sq, &lambda, &grams, &mttkrp_out[ORDER - 1], &factors[ORDER - 1])?;
        timings.add(Routine::CpdFit, clock.seconds());

        let prev = fits.last().copied();
        fits.push(fit);
        if let Some(prev) = prev {
            if (fit - prev).abs() < cfg.tolerance {
                break;
            }
        }
    }

    let mut model = KruskalModel {
        rank,
        factors,
        lambda,
        fit: *fits.last().expect("at least one iteration"),
    };
    model.finalize();
    timings.set(Routine::Total, total.seconds());

    Ok(CpAlsRun { model, fits, timings })
}
