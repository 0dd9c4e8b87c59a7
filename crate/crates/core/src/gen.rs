//! Synthetic tensor generation.
//!
//! Two flavours: uniform noise at distinct random coordinates, or a tensor
//! that is exactly a random rank-`R` Kruskal model restricted to its own
//! support. In the second case every component has a box-shaped support
//! (a random subset of indices per mode) and the union of those boxes holds
//! exactly the requested number of nonzeros, so no model mass is dropped.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpals::KruskalModel;
use crate::dense::FactorMatrix;
use crate::{Error, Result, SparseTensor, ORDER};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSpec {
    pub dims: [usize; ORDER],
    pub nnz: usize,
    pub seed: u64,
    /// Generate from a ground-truth model of this rank instead of noise.
    pub rank: Option<usize>,
}

pub struct Generated {
    pub tensor: SparseTensor,
    pub model: Option<KruskalModel>,
}

pub fn generate(spec: &GenSpec) -> Result<Generated> {
    let [i, j, k] = spec.dims;
    if spec.dims.contains(&0) {
        return Err(Error::Generate(format!("dimensions must be positive, got {:?}", spec.dims)));
    }
    let cells = i as u128 * j as u128 * k as u128;
    if spec.nnz as u128 > cells {
        return Err(Error::Generate(format!("{} nonzeros do not fit in {i}x{j}x{k}", spec.nnz)));
    }
    if spec.nnz == 0 {
        return Err(Error::Generate("nnz must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.rank {
        None => uniform(spec, cells, &mut rng),
        Some(0) => Err(Error::Generate("rank must be at least 1".into())),
        Some(rank) => from_model(spec, rank, &mut rng),
    }
}

fn uniform(spec: &GenSpec, cells: u128, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let cells = usize::try_from(cells).map_err(|_| Error::Generate("index space exceeds usize".into()))?;
    let [_, j, k] = spec.dims;
    let mut lin = index::sample(rng, cells, spec.nnz).into_vec();
    lin.sort_unstable();
    let coords: Vec<[usize; 3]> = lin.iter().map(|&x| [x / (j * k), (x / k) % j, x % k]).collect();
    let vals = (0..spec.nnz).map(|_| rng.gen::<f64>()).collect();
    Ok(Generated {
        tensor: SparseTensor::new(spec.dims, &coords, vals)?,
        model: None,
    })
}

/// Extents (in permuted index space, anchored at 0) of the boxes whose union
/// has exactly `nnz` cells: whole `I x J` layers, then whole rows of the
/// next layer, then a partial row.
fn staircase(dims: [usize; ORDER], nnz: usize) -> Vec<[usize; ORDER]> {
    let [i, j, _] = dims;
    let layer = i * j;
    let full_layers = nnz / layer;
    let rem = nnz % layer;
    let rows = rem / i;
    let tail = rem % i;
    let mut boxes = Vec::new();
    if full_layers > 0 {
        boxes.push([i, j, full_layers]);
    }
    if rows > 0 {
        boxes.push([i, rows, full_layers + 1]);
    }
    if tail > 0 {
        boxes.push([tail, rows + 1, full_layers + 1]);
    }
    boxes
}

fn from_model(spec: &GenSpec, rank: usize, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let dims = spec.dims;
    let boxes = staircase(dims, spec.nnz);
    if boxes.len() > rank {
        return Err(Error::Generate(format!(
            "rank {rank} cannot cover exactly {} nonzeros in {dims:?}; need rank >= {}",
            spec.nnz,
            boxes.len()
        )));
    }

    // Relabel indices per mode so the support is scattered over the tensor.
    let perms: [Vec<usize>; ORDER] = dims.map(|d| {
        let mut p: Vec<usize> = (0..d).collect();
        p.shuffle(rng);
        p
    });

    // Per-component support, as index sets in permuted space. Components
    // beyond the staircase live on random sub-boxes of the first box.
    let mut supports: Vec<[Vec<usize>; ORDER]> = boxes.iter().map(|b| b.map(|e| (0..e).collect())).collect();
    let outer = boxes[0];
    while supports.len() < rank {
        supports.push(std::array::from_fn(|m| {
            let extent = outer[m];
            // Draw a u64 so 32- and 64-bit targets consume the same stream.
            let size = rng.gen_range(extent.div_ceil(2) as u64..=extent as u64) as usize;
            let mut pick = index::sample(rng, extent, size).into_vec();
            pick.sort_unstable();
            pick
        }));
    }

    let mut factors = dims.map(|d| FactorMatrix::zeros(d, rank));
    for (r, support) in supports.iter().enumerate() {
        for m in 0..ORDER {
            for &p in &support[m] {
                let idx = perms[m][p];
                factors[m].data[idx * rank + r] = 1.0 - rng.gen::<f64>();
            }
        }
    }
    let model = KruskalModel {
        rank,
        factors,
        lambda: vec![1.0; rank],
        fit: 1.0,
    };

    let mut entries: Vec<([usize; ORDER], f64)> = Vec::with_capacity(spec.nnz);
    let mut covered: Vec<[usize; ORDER]> = Vec::new();
    for b in &boxes {
        for a in 0..b[0] {
            for c in 0..b[1] {
                for e in 0..b[2] {
                    let p = [a, c, e];
                    if covered.iter().any(|cb| (0..ORDER).all(|m| p[m] < cb[m])) {
                        continue;
                    }
                    let coord = [perms[0][a], perms[1][c], perms[2][e]];
                    entries.push((coord, model.value_at(coord)));
                }
            }
        }
        covered.push(*b);
    }
    debug_assert_eq!(entries.len(), spec.nnz);
    entries.sort_unstable_by_key(|e| e.0);
    let coords: Vec<_> = entries.iter().map(|e| e.0).collect();
    let vals = entries.iter().map(|e| e.1).collect();

    Ok(Generated {
        tensor: SparseTensor::new(dims, &coords, vals)?,
        model: Some(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn distinct(t: &SparseTensor) -> usize {
        t.coords().collect::<HashSet<_>>().len()
    }

    #[test]
    fn saturated_is_full_tensor() {
        let g = generate(&GenSpec {
            dims: [2, 2, 2],
            nnz: 8,
            seed: 0,
            rank: None,
        })
        .unwrap();
        assert_eq!(g.tensor.nnz(), 8);
        assert_eq!(distinct(&g.tensor), 8);
    }

    #[test]
    fn deterministic() {
        let spec = GenSpec {
            dims: [100, 100, 100],
            nnz: 1000,
            seed: 1,
            rank: None,
        };
        assert_eq!(generate(&spec).unwrap().tensor, generate(&spec).unwrap().tensor);
        let spec = GenSpec { rank: Some(3), ..spec };
        assert_eq!(generate(&spec).unwrap().tensor, generate(&spec).unwrap().tensor);
    }

    #[test]
    fn too_many_nonzeros() {
        let spec = GenSpec {
            dims: [2, 2, 2],
            nnz: 9,
            seed: 0,
            rank: None,
        };
        assert!(matches!(generate(&spec), Err(Error::Generate(_))));
    }

    #[test]
    fn staircase_counts() {
        for (dims, nnz) in [([5, 4, 3], 7), ([5, 4, 3], 20), ([5, 4, 3], 47), ([5, 4, 3], 60), ([3, 3, 3], 1)] {
            let boxes = staircase(dims, nnz);
            let mut cells = HashSet::new();
            for b in &boxes {
                for a in 0..b[0] {
                    for c in 0..b[1] {
                        for e in 0..b[2] {
                            assert!(a < dims[0] && c < dims[1] && e < dims[2]);
                            cells.insert((a, c, e));
                        }
                    }
                }
            }
            assert_eq!(cells.len(), nnz, "{dims:?} {nnz}");
        }
    }

    #[test]
    fn model_tensor_is_exact_and_distinct() {
        for (dims, nnz, rank) in [([50, 40, 30], 20_000, 4), ([7, 5, 6], 101, 3), ([4, 4, 4], 64, 1)] {
            let g = generate(&GenSpec {
                dims,
                nnz,
                seed: 9,
                rank: Some(rank),
            })
            .unwrap();
            let model = g.model.unwrap();
            assert_eq!(g.tensor.nnz(), nnz);
            assert_eq!(distinct(&g.tensor), nnz);
            // The model has no mass outside the listed coordinates.
            let listed: f64 = g.tensor.vals.iter().map(|v| v * v).sum();
            let mut everywhere = 0.0;
            for a in 0..dims[0] {
                for b in 0..dims[1] {
                    for c in 0..dims[2] {
                        everywhere += model.value_at([a, b, c]).powi(2);
                    }
                }
            }
            assert!((listed - everywhere).abs() <= 1e-9 * everywhere);
            for (c, v) in g.tensor.coords().zip(&g.tensor.vals) {
                assert!(*v > 0.0);
                assert_eq!(*v, model.value_at(c));
            }
        }
    }

    #[test]
    fn rank_too_small_for_shape() {
        // 7 cells in a 5x4 layer needs a row plus a partial row.
        let spec = GenSpec {
            dims: [5, 4, 3],
            nnz: 7,
            seed: 0,
            rank: Some(1),
        };
        assert!(generate(&spec).is_err());
        assert!(generate(&GenSpec { rank: Some(2), ..spec }).is_ok());
    }
}
