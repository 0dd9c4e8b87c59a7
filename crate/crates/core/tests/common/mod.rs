//! Independent reference implementations used by the integration tests.
//!
//! Everything here is deliberately naive: dense arrays, explicit
//! matricization and Khatri-Rao products, and generic comparison sorts.
#![allow(dead_code)]

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spalt::{FactorMatrix, KruskalModel, SparseTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tensor with distinct coordinates, dims in `1..=max_dim`, nnz in
/// `1..=max_nnz` (capped by the number of cells) and values in `[-1, 1)`.
pub fn random_tensor(rng: &mut ChaCha8Rng, max_dim: usize, max_nnz: usize) -> SparseTensor {
    random_tensor_in(rng, 1..=max_dim, 1..=max_nnz)
}

/// Like [`random_tensor`] with explicit ranges for each dimension and nnz.
pub fn random_tensor_in(
    rng: &mut ChaCha8Rng,
    dim: std::ops::RangeInclusive<usize>,
    nnz: std::ops::RangeInclusive<usize>,
) -> SparseTensor {
    let dims = [0; 3].map(|_| rng.gen_range(dim.clone()));
    let cells = dims[0] * dims[1] * dims[2];
    let nnz = rng.gen_range(*nnz.start()..=(*nnz.end()).min(cells));
    let lin = index::sample(rng, cells, nnz).into_vec();
    let coords: Vec<[usize; 3]> = lin
        .iter()
        .map(|&x| [x / (dims[1] * dims[2]), (x / dims[2]) % dims[1], x % dims[2]])
        .collect();
    let vals = (0..nnz).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SparseTensor::new(dims, &coords, vals).unwrap()
}

pub fn random_factors(rng: &mut ChaCha8Rng, dims: [usize; 3], rank: usize) -> [FactorMatrix; 3] {
    dims.map(|d| FactorMatrix::from_vec(d, rank, (0..d * rank).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
}

/// Dense row-major `I x J x K` array.
pub fn densify(t: &SparseTensor) -> Vec<f64> {
    let [_, j, k] = t.dims;
    let mut d = vec![0.0; t.dims.iter().product()];
    for (c, v) in t.coords().zip(&t.vals) {
        d[(c[0] * j + c[1]) * k + c[2]] += v;
    }
    d
}

/// Mode-`n` unfolding as an `I_n x (I_p * I_q)` row-major matrix, where
/// `p < q` are the other modes and column `jp + I_p * jq` holds `(jp, jq)`.
pub fn matricize(t: &SparseTensor, n: usize) -> Vec<Vec<f64>> {
    let dense = densify(t);
    let [di, dj, dk] = t.dims;
    let (p, q) = others(n);
    let mut m = vec![vec![0.0; t.dims[p] * t.dims[q]]; t.dims[n]];
    for a in 0..di {
        for b in 0..dj {
            for c in 0..dk {
                let idx = [a, b, c];
                m[idx[n]][idx[p] + t.dims[p] * idx[q]] = dense[(a * dj + b) * dk + c];
            }
        }
    }
    m
}

/// `Q ⊙ P`: row `jp + rows(P) * jq` is `Q[jq] .* P[jp]`.
pub fn khatri_rao(q: &FactorMatrix, p: &FactorMatrix) -> Vec<Vec<f64>> {
    let rank = p.cols;
    let mut out = vec![vec![0.0; rank]; p.rows * q.rows];
    for jq in 0..q.rows {
        for jp in 0..p.rows {
            for r in 0..rank {
                out[jp + p.rows * jq][r] = q.get(jq, r) * p.get(jp, r);
            }
        }
    }
    out
}

pub fn others(n: usize) -> (usize, usize) {
    match n {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// `X_(n) (A_q ⊙ A_p)` by explicit matrix multiplication.
pub fn dense_mttkrp(t: &SparseTensor, n: usize, factors: &[FactorMatrix; 3]) -> FactorMatrix {
    let (p, q) = others(n);
    let x = matricize(t, n);
    let kr = khatri_rao(&factors[q], &factors[p]);
    let rank = factors[0].cols;
    let mut out = FactorMatrix::zeros(t.dims[n], rank);
    for (i, row) in x.iter().enumerate() {
        for (col, &xv) in row.iter().enumerate() {
            for r in 0..rank {
                out.data[i * rank + r] += xv * kr[col][r];
            }
        }
    }
    out
}

/// `max |a - b| / max(max |b|, tiny)`.
pub fn rel_max_err(a: &FactorMatrix, b: &FactorMatrix) -> f64 {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    let scale = b.data.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Entries of `t` ordered by `(c[perm[0]], c[perm[1]], c[perm[2]])` with a
/// generic stable comparison sort.
pub fn comparison_sorted(t: &SparseTensor, perm: [usize; 3]) -> Vec<([usize; 3], f64)> {
    let mut e: Vec<([usize; 3], f64)> = t.coords().zip(t.vals.iter().copied()).collect();
    e.sort_by_key(|(c, _)| (c[perm[0]], c[perm[1]], c[perm[2]]));
    e
}

pub fn entries(t: &SparseTensor) -> Vec<([usize; 3], f64)> {
    t.coords().zip(t.vals.iter().copied()).collect()
}

/// Densified model `sum_r lambda_r a_r o b_r o c_r`.
pub fn dense_model(model: &KruskalModel) -> Vec<f64> {
    let [di, dj, dk] = model.dims();
    let mut z = vec![0.0; di * dj * dk];
    for a in 0..di {
        for b in 0..dj {
            for c in 0..dk {
                let mut s = 0.0;
                for r in 0..model.rank {
                    s += model.lambda[r] * model.factors[0].get(a, r) * model.factors[1].get(b, r) * model.factors[2].get(c, r);
                }
                z[(a * dj + b) * dk + c] = s;
            }
        }
    }
    z
}

/// `1 - ||X - Z||_F / ||X||_F` over every cell of the dense index space.
pub fn dense_fit(t: &SparseTensor, model: &KruskalModel) -> f64 {
    let x = densify(t);
    let z = dense_model(model);
    let res: f64 = x.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum();
    1.0 - res.sqrt() / nx.sqrt()
}
