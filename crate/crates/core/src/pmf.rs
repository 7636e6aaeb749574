//! Probabilistic matrix factorization: regularized squared-error loss,
//! closed-form coordinate-descent updates for the user and item latent
//! matrices, and rating prediction.
//!
//! The item update optionally pulls each item vector toward a per-item
//! prior mean; with the prior absent this is plain zero-mean PMF.

use rand::distributions::Open01;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::RatingsTable;
use crate::error::{Error, Result};
use crate::numerics::{solve_spd, DenseMatrix, DenseVector};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmfHyperparams {
    /// Latent dimensionality D.
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_lambda")]
    pub lambda_u: f64,
    #[serde(default = "default_lambda")]
    pub lambda_v: f64,
    /// Full U-then-V sweeps per training run.
    #[serde(default = "default_sweeps")]
    pub n_sweeps: usize,
}

fn default_latent_dim() -> usize {
    50
}

fn default_lambda() -> f64 {
    0.1
}

fn default_sweeps() -> usize {
    15
}

impl Default for PmfHyperparams {
    fn default() -> Self {
        PmfHyperparams {
            latent_dim: default_latent_dim(),
            lambda_u: default_lambda(),
            lambda_v: default_lambda(),
            n_sweeps: default_sweeps(),
        }
    }
}

/// User matrix U (D x N) and item matrix V (D x M); columns are the
/// per-user / per-item latent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors {
    pub user: DenseMatrix,
    pub item: DenseMatrix,
}

impl LatentFactors {
    pub fn latent_dim(&self) -> usize {
        self.user.rows()
    }

    pub fn n_users(&self) -> usize {
        self.user.cols()
    }

    pub fn n_items(&self) -> usize {
        self.item.cols()
    }
}

/// Fill U and V with i.i.d. uniform (0,1) entries from a seeded
/// generator; identical seeds give identical matrices.
pub fn init_factors(seed: u64, latent_dim: usize, n_users: usize, n_items: usize) -> LatentFactors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user = DenseMatrix::zeros(latent_dim, n_users);
    for v in user.values_mut() {
        *v = rng.sample(Open01);
    }
    let mut item = DenseMatrix::zeros(latent_dim, n_items);
    for v in item.values_mut() {
        *v = rng.sample(Open01);
    }
    LatentFactors { user, item }
}

fn check_shapes(table: &RatingsTable, factors: &LatentFactors) -> Result<()> {
    if factors.n_users() != table.n_users() || factors.n_items() != table.n_items() {
        return Err(Error::Shape(format!(
            "factors {}x{}/{}x{} vs table {} users x {} items",
            factors.user.rows(),
            factors.user.cols(),
            factors.item.rows(),
            factors.item.cols(),
            table.n_users(),
            table.n_items()
        )));
    }
    Ok(())
}

/// Regularized squared-error loss `1/2 sum_ij I_ij (R_ij - U_i^T V_j)^2
/// + lambda_u/2 sum_i ||U_i||^2 + lambda_v/2 sum_j ||V_j - mu_j||^2`,
/// with `mu_j = 0` when the prior means are absent.
pub fn pmf_loss(
    table: &RatingsTable,
    factors: &LatentFactors,
    hp: &PmfHyperparams,
    mu: Option<&[DenseVector]>,
) -> Result<f64> {
    check_shapes(table, factors)?;
    if let Some(mu) = mu {
        if mu.len() != table.n_items() {
            return Err(Error::Shape(format!(
                "{} prior means for {} items",
                mu.len(),
                table.n_items()
            )));
        }
    }
    let d = factors.latent_dim();
    let mut loss = 0.0;
    for t in table.triplets() {
        let mut pred = 0.0;
        for k in 0..d {
            pred += factors.user.get(k, t.user) * factors.item.get(k, t.item);
        }
        let e = t.value - pred;
        loss += 0.5 * e * e;
    }
    loss += 0.5 * hp.lambda_u * factors.user.frobenius_sq();
    match mu {
        None => loss += 0.5 * hp.lambda_v * factors.item.frobenius_sq(),
        Some(mu) => {
            for (j, mu_j) in mu.iter().enumerate() {
                let mut s = 0.0;
                for k in 0..d {
                    let diff = factors.item.get(k, j) - mu_j.values()[k];
                    s += diff * diff;
                }
                loss += 0.5 * hp.lambda_v * s;
            }
        }
    }
    Ok(loss)
}

/// Closed-form row solve shared by both sweeps: given the observed
/// counterpart vectors and ratings, returns
/// `(sum x x^T + lambda I)^{-1} (sum r x + lambda * prior)`.
fn solve_row(
    observed: &[(usize, f64)],
    other: &DenseMatrix,
    lambda: f64,
    prior: Option<&DenseVector>,
) -> DenseVector {
    let d = other.rows();
    if observed.is_empty() {
        // Exact limit of the normal equations with an empty indicator set.
        return match prior {
            Some(p) => p.clone(),
            None => DenseVector::zeros(d),
        };
    }
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = vec![0.0; d];
    let mut col = vec![0.0; d];
    for &(idx, r) in observed {
        for (k, c) in col.iter_mut().enumerate() {
            *c = other.get(k, idx);
        }
        for i in 0..d {
            let row = a.row_mut(i);
            let ci = col[i];
            for (j, cj) in col.iter().enumerate() {
                row[j] += ci * cj;
            }
            b[i] += r * col[i];
        }
    }
    for i in 0..d {
        a.set(i, i, a.get(i, i) + lambda);
    }
    if let Some(p) = prior {
        for (bi, pi) in b.iter_mut().zip(p.values()) {
            *bi += lambda * pi;
        }
    }
    // The +lambda*I term keeps the system SPD, so this cannot fail.
    solve_spd(&a, &DenseVector::from(b)).expect("ridge-regularized normal equations are SPD")
}

/// One exact U-sweep: for every user solve
/// `U_i <- (V I_i V^T + lambda_u I)^{-1} V R_i` over that user's observed
/// items. Users with no ratings get the zero vector. Rows are mutually
/// independent, so the sweep runs in parallel with per-row writes.
pub fn update_user_factors(
    table: &RatingsTable,
    factors: &mut LatentFactors,
    hp: &PmfHyperparams,
) -> Result<()> {
    check_shapes(table, factors)?;
    let by_user = table.by_user();
    let item = &factors.item;
    let rows: Vec<DenseVector> = by_user
        .par_iter()
        .map(|obs| solve_row(obs, item, hp.lambda_u, None))
        .collect();
    for (i, row) in rows.iter().enumerate() {
        factors.user.set_col(i, row.values());
    }
    Ok(())
}

/// One exact V-sweep: `V_j <- (U I_j U^T + lambda_v I)^{-1}
/// (U R_j + lambda_v mu_j)`, with `mu_j = 0` when absent.
pub fn update_item_factors(
    table: &RatingsTable,
    factors: &mut LatentFactors,
    hp: &PmfHyperparams,
    mu: Option<&[DenseVector]>,
) -> Result<()> {
    check_shapes(table, factors)?;
    if let Some(mu) = mu {
        if mu.len() != table.n_items() {
            return Err(Error::Shape(format!(
                "{} prior means for {} items",
                mu.len(),
                table.n_items()
            )));
        }
    }
    let by_item = table.by_item();
    let user = &factors.user;
    let cols: Vec<DenseVector> = by_item
        .par_iter()
        .enumerate()
        .map(|(j, obs)| solve_row(obs, user, hp.lambda_v, mu.map(|m| &m[j])))
        .collect();
    for (j, col) in cols.iter().enumerate() {
        factors.item.set_col(j, col.values());
    }
    Ok(())
}

/// Predicted rating `U_i^T V_j`; a cold item (index beyond V) falls back
/// to `U_i^T mu_j` when a prior mean is supplied. No clamping.
pub fn predict_rating(
    factors: &LatentFactors,
    user: usize,
    item: usize,
    mu_j: Option<&DenseVector>,
) -> Result<f64> {
    if user >= factors.n_users() {
        return Err(Error::ColdUser { user });
    }
    let d = factors.latent_dim();
    if item < factors.n_items() {
        let mut s = 0.0;
        for k in 0..d {
            s += factors.user.get(k, user) * factors.item.get(k, item);
        }
        return Ok(s);
    }
    match mu_j {
        Some(mu) => {
            let mut s = 0.0;
            for k in 0..d {
                s += factors.user.get(k, user) * mu.values()[k];
            }
            Ok(s)
        }
        None => Err(Error::ColdItem { item }),
    }
}

/// Pure PMF training: seeded init then `n_sweeps` exact U/V sweeps.
/// Returns the factors and the loss recorded after every sweep.
pub fn train_pmf(
    table: &RatingsTable,
    hp: &PmfHyperparams,
    seed: u64,
) -> Result<(LatentFactors, Vec<f64>)> {
    let mut factors = init_factors(seed, hp.latent_dim, table.n_users(), table.n_items());
    let mut trace = Vec::with_capacity(hp.n_sweeps);
    for _ in 0..hp.n_sweeps {
        update_user_factors(table, &mut factors, hp)?;
        update_item_factors(table, &mut factors, hp, None)?;
        trace.push(pmf_loss(table, &factors, hp, None)?);
    }
    Ok((factors, trace))
}
