//! Parallel MTTKRP over CSF trees.
//!
//! For mode `n` with other modes `p` and `q`, row `i` of the output is
//! `sum over nonzeros (i, j, k) of x_ijk * (A_p[j] .* A_q[k])`. Neither the
//! matricized tensor nor the Khatri-Rao product is formed; the kernels walk
//! a CSF tree and which one runs depends on the tree level holding mode `n`:
//!
//! * ROOT: each task owns whole slices, hence whole output rows. No locks.
//! * INTERNAL: per fiber, accumulate the leaves then scatter one row update
//!   under the row's lock.
//! * LEAF: per fiber, form the root/fiber row product then scatter one update
//!   per nonzero under the target row's lock.

use crate::csf::{CsfAllocation, CsfTensor, KernelKind};
use crate::dense::FactorMatrix;
use crate::lock_pool::LockPool;
use crate::parallel::{fork_join_each, partition_by_weight, partition_slices, SharedMut, TaskPartition};
use crate::{Error, Result, ORDER};

pub struct MttkrpEngine<'a> {
    alloc: &'a CsfAllocation,
    partitions: Vec<TaskPartition>,
    pool: LockPool,
    tasks: usize,
    scratch: Vec<Vec<f64>>,
}

impl<'a> MttkrpEngine<'a> {
    pub fn new(alloc: &'a CsfAllocation, tasks: usize) -> Self {
        Self::with_pool(alloc, tasks, LockPool::default())
    }

    pub fn with_pool(alloc: &'a CsfAllocation, tasks: usize, pool: LockPool) -> Self {
        let tasks = tasks.max(1);
        MttkrpEngine {
            alloc,
            partitions: alloc.csfs.iter().map(|c| partition_slices(c, tasks)).collect(),
            pool,
            tasks,
            scratch: vec![Vec::new(); tasks],
        }
    }

    pub fn pool(&self) -> &LockPool {
        &self.pool
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn partition(&self, csf: usize) -> &TaskPartition {
        &self.partitions[csf]
    }

    /// Computes the mode-`mode` MTTKRP into `out`, which is overwritten.
    pub fn compute(&mut self, mode: usize, factors: &[FactorMatrix; ORDER], out: &mut FactorMatrix) -> Result<()> {
        if mode >= ORDER {
            return Err(Error::DimensionMismatch(format!("mode {mode} out of range")));
        }
        let dispatch = self.alloc.dispatch[mode];
        let csf = &self.alloc.csfs[dispatch.csf];
        check_shapes(csf, mode, factors, out)?;
        let level = csf.level_of(mode);
        if level != dispatch.kind.level() {
            return Err(Error::KernelMismatch {
                requested: dispatch.kind,
                mode,
                level,
            });
        }

        let rank = out.cols;
        for s in self.scratch.iter_mut() {
            s.resize(rank, 0.0);
        }
        let part = &self.partitions[dispatch.csf];
        let [fa, fb, fc] = csf.mode_perm.map(|m| &factors[m]);

        match dispatch.kind {
            KernelKind::Root => root_kernel(csf, part, fb, fc, out, &mut self.scratch),
            kind => {
                zero_rows(out, self.tasks);
                let locked = part.busy_tasks() > 1;
                let shared = SharedMut::new(&mut out.data);
                let work: Vec<_> = part.ranges.iter().cloned().zip(self.scratch.iter_mut()).collect();
                let pool = &self.pool;
                fork_join_each(work, |_, (slices, scratch)| {
                    let ctx = Scatter {
                        csf,
                        out: shared,
                        pool,
                        rank,
                    };
                    match (kind, locked) {
                        (KernelKind::Internal, true) => ctx.internal::<true>(slices, fa, fc, scratch),
                        (KernelKind::Internal, false) => ctx.internal::<false>(slices, fa, fc, scratch),
                        (_, true) => ctx.leaf::<true>(slices, fa, fb, scratch),
                        (_, false) => ctx.leaf::<false>(slices, fa, fb, scratch),
                    }
                });
            }
        }
        Ok(())
    }
}

/// One-shot MTTKRP for `mode` using the allocation's dispatch table.
pub fn mttkrp(alloc: &CsfAllocation, mode: usize, factors: &[FactorMatrix; ORDER], tasks: usize) -> Result<FactorMatrix> {
    let rows = alloc.csfs[0].dims.get(mode).copied().unwrap_or(0);
    let mut out = FactorMatrix::zeros(rows, factors[0].cols);
    MttkrpEngine::new(alloc, tasks).compute(mode, factors, &mut out)?;
    Ok(out)
}

fn check_shapes(csf: &CsfTensor, mode: usize, factors: &[FactorMatrix; ORDER], out: &FactorMatrix) -> Result<()> {
    let rank = factors[0].cols;
    for (m, f) in factors.iter().enumerate() {
        if f.rows != csf.dims[m] || f.cols != rank {
            return Err(Error::DimensionMismatch(format!(
                "factor {m} is {}x{}, expected {}x{rank}",
                f.rows, f.cols, csf.dims[m]
            )));
        }
    }
    if out.rows != csf.dims[mode] || out.cols != rank {
        return Err(Error::DimensionMismatch(format!(
            "output is {}x{}, expected {}x{rank}",
            out.rows, out.cols, csf.dims[mode]
        )));
    }
    Ok(())
}

fn zero_rows(out: &mut FactorMatrix, tasks: usize) {
    let rank = out.cols.max(1);
    let part = partition_by_weight(std::iter::repeat_n(1, out.rows), tasks);
    let mut rest = out.data.as_mut_slice();
    let mut blocks = Vec::with_capacity(part.task_count());
    for r in &part.ranges {
        let (block, tail) = rest.split_at_mut(r.len() * rank);
        blocks.push(block);
        rest = tail;
    }
    fork_join_each(blocks, |_, block| block.fill(0.0));
}

#[inline(always)]
fn row(m: &FactorMatrix, i: usize) -> &[f64] {
    let off = i * m.cols;
    &m.data[off..off + m.cols]
}

/// Leaves of fiber `f` folded into `scratch`: `sum_z values[z] * C[leaf_z]`.
#[inline(always)]
fn accumulate_leaves(csf: &CsfTensor, f: usize, fc: &FactorMatrix, scratch: &mut [f64]) {
    let leaves = csf.fiber_leaves(f);
    let first = leaves.start;
    let v = csf.values[first];
    for (s, c) in scratch.iter_mut().zip(row(fc, csf.level2_ids[first])) {
        *s = v * c;
    }
    for z in first + 1..leaves.end {
        let v = csf.values[z];
        for (s, c) in scratch.iter_mut().zip(row(fc, csf.level2_ids[z])) {
            *s += v * c;
        }
    }
}

fn root_kernel(
    csf: &CsfTensor,
    part: &TaskPartition,
    fb: &FactorMatrix,
    fc: &FactorMatrix,
    out: &mut FactorMatrix,
    scratch: &mut [Vec<f64>],
) {
    let rank = out.cols;
    let rows = out.rows;
    let tasks = part.task_count();

    // Slices are ordered by root index, so contiguous slice ranges own
    // contiguous, disjoint blocks of output rows.
    let mut bounds = Vec::with_capacity(tasks + 1);
    bounds.push(0);
    for r in &part.ranges[1..] {
        bounds.push(csf.level0_ids.get(r.start).copied().unwrap_or(rows));
    }
    bounds.push(rows);

    let mut rest = out.data.as_mut_slice();
    let mut work = Vec::with_capacity(tasks);
    for ((k, slices), scratch) in part.ranges.iter().enumerate().zip(scratch.iter_mut()) {
        let (block, tail) = rest.split_at_mut((bounds[k + 1] - bounds[k]) * rank);
        rest = tail;
        work.push((slices.clone(), bounds[k], block, scratch));
    }

    fork_join_each(work, |_, (slices, base, block, scratch)| {
        block.fill(0.0);
        for s in slices {
            let off = (csf.level0_ids[s] - base) * rank;
            let acc = &mut block[off..off + rank];
            for f in csf.slice_fibers(s) {
                accumulate_leaves(csf, f, fc, scratch);
                for ((a, b), t) in acc.iter_mut().zip(row(fb, csf.level1_ids[f])).zip(scratch.iter()) {
                    *a += b * t;
                }
            }
        }
    });
}

struct Scatter<'k> {
    csf: &'k CsfTensor,
    out: SharedMut<f64>,
    pool: &'k LockPool,
    rank: usize,
}

impl Scatter<'_> {
    #[inline(always)]
    fn update<const LOCKED: bool>(&self, target: usize, f: impl FnOnce(&mut [f64])) {
        if LOCKED {
            let id = self.pool.lock_id(target);
            self.pool.acquire(id);
            // SAFETY: every writer of row `target` holds lock `id`.
            f(unsafe { self.out.slice_mut(target * self.rank, self.rank) });
            self.pool.release(id);
        } else {
            // SAFETY: a single task is doing all the writing.
            f(unsafe { self.out.slice_mut(target * self.rank, self.rank) });
        }
    }

    fn internal<const LOCKED: bool>(
        &self,
        slices: std::ops::Range<usize>,
        fa: &FactorMatrix,
        fc: &FactorMatrix,
        scratch: &mut [f64],
    ) {
        let csf = self.csf;
        for s in slices {
            let a_row = row(fa, csf.level0_ids[s]);
            for f in csf.slice_fibers(s) {
                accumulate_leaves(csf, f, fc, scratch);
                self.update::<LOCKED>(csf.level1_ids[f], |dst| {
                    for ((d, a), t) in dst.iter_mut().zip(a_row).zip(scratch.iter()) {
                        *d += a * t;
                    }
                });
            }
        }
    }

    fn leaf<const LOCKED: bool>(
        &self,
        slices: std::ops::Range<usize>,
        fa: &FactorMatrix,
        fb: &FactorMatrix,
        scratch: &mut [f64],
    ) {
        let csf = self.csf;
        for s in slices {
            let a_row = row(fa, csf.level0_ids[s]);
            for f in csf.slice_fibers(s) {
                for ((p, a), b) in scratch.iter_mut().zip(a_row).zip(row(fb, csf.level1_ids[f])) {
                    *p = a * b;
                }
                for z in csf.fiber_leaves(f) {
                    let v = csf.values[z];
                    self.update::<LOCKED>(csf.level2_ids[z], |dst| {
                        for (d, p) in dst.iter_mut().zip(scratch.iter()) {
                            *d += v * p;
                        }
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csf::{allocate_csfs, CsfPolicy};
    use crate::SparseTensor;

    fn ones_tensor() -> SparseTensor {
        let coords: Vec<[usize; 3]> = (0..8).map(|x| [x & 1, (x >> 1) & 1, x >> 2]).collect();
        SparseTensor::new([2, 2, 2], &coords, vec![1.0; 8]).unwrap()
    }

    fn ones_factors(dims: [usize; 3], rank: usize) -> [FactorMatrix; 3] {
        dims.map(|d| FactorMatrix::from_vec(d, rank, vec![1.0; d * rank]).unwrap())
    }

    #[test]
    fn ones_tensor_gives_fours() {
        let t = ones_tensor();
        let f = ones_factors(t.dims, 2);
        for policy in [CsfPolicy::One, CsfPolicy::Two, CsfPolicy::All] {
            let alloc = allocate_csfs(&t, policy, 1).unwrap();
            for tasks in [1, 3] {
                for mode in 0..3 {
                    let out = mttkrp(&alloc, mode, &f, tasks).unwrap();
                    assert_eq!(out.data, vec![4.0; 4], "{policy:?} mode {mode}");
                }
            }
        }
    }

    #[test]
    fn single_nonzero_touches_one_row() {
        let t = SparseTensor::new([3, 2, 4], &[[2, 1, 3]], vec![1.5]).unwrap();
        let f = [
            FactorMatrix::from_fn(3, 2, |i, r| (i * 2 + r) as f64 + 1.0),
            FactorMatrix::from_fn(2, 2, |i, r| (i + r) as f64 - 0.5),
            FactorMatrix::from_fn(4, 2, |i, r| 0.25 * (i * r) as f64 + 1.0),
        ];
        for policy in [CsfPolicy::One, CsfPolicy::All] {
            let alloc = allocate_csfs(&t, policy, 1).unwrap();
            let out = mttkrp(&alloc, 0, &f, 2).unwrap();
            for i in 0..3 {
                for r in 0..2 {
                    let want = if i == 2 { 1.5 * f[1].get(1, r) * f[2].get(3, r) } else { 0.0 };
                    assert_eq!(out.get(i, r), want);
                }
            }
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let t = ones_tensor();
        let alloc = allocate_csfs(&t, CsfPolicy::All, 1).unwrap();
        let mut f = ones_factors(t.dims, 2);
        f[1] = FactorMatrix::zeros(2, 3);
        assert!(matches!(mttkrp(&alloc, 0, &f, 1), Err(Error::DimensionMismatch(_))));
        let f = ones_factors(t.dims, 2);
        let mut engine = MttkrpEngine::new(&alloc, 1);
        let mut wrong = FactorMatrix::zeros(5, 2);
        assert!(engine.compute(0, &f, &mut wrong).is_err());
        assert!(engine.compute(3, &f, &mut wrong).is_err());
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let t = ones_tensor();
        let mut alloc = allocate_csfs(&t, CsfPolicy::All, 1).unwrap();
        // Bypass the checked setter to simulate a corrupted table.
        alloc.dispatch[1].kind = KernelKind::Leaf;
        let f = ones_factors(t.dims, 1);
        assert!(matches!(mttkrp(&alloc, 1, &f, 1), Err(Error::KernelMismatch { .. })));
    }

    #[test]
    fn output_is_overwritten_between_runs() {
        let t = ones_tensor();
        let alloc = allocate_csfs(&t, CsfPolicy::One, 1).unwrap();
        let f = ones_factors(t.dims, 3);
        let mut engine = MttkrpEngine::new(&alloc, 2);
        for mode in 0..3 {
            let mut out = FactorMatrix::from_vec(2, 3, vec![99.0; 6]).unwrap();
            engine.compute(mode, &f, &mut out).unwrap();
            engine.compute(mode, &f, &mut out).unwrap();
            assert_eq!(out.data, vec![4.0; 6]);
        }
    }

    #[test]
    fn all_policy_never_locks() {
        let coords: Vec<[usize; 3]> = (0..60).map(|p| [p % 5, (p / 5) % 4, p % 3]).collect();
        let t = SparseTensor::new([5, 4, 3], &coords, vec![1.0; 60]).unwrap();
        let f = ones_factors(t.dims, 4);
        let alloc = allocate_csfs(&t, CsfPolicy::All, 4).unwrap();
        let mut engine = MttkrpEngine::new(&alloc, 4);
        let mut out = FactorMatrix::zeros(5, 4);
        for mode in 0..3 {
            out = FactorMatrix::zeros(t.dims[mode], 4);
            engine.compute(mode, &f, &mut out).unwrap();
        }
        assert_eq!(out.rows, 3);
        assert_eq!(engine.pool().acquisitions(), 0);

        let alloc = allocate_csfs(&t, CsfPolicy::One, 4).unwrap();
        let mut engine = MttkrpEngine::new(&alloc, 4);
        for mode in 0..3 {
            let mut out = FactorMatrix::zeros(t.dims[mode], 4);
            engine.compute(mode, &f, &mut out).unwrap();
        }
        assert!(engine.pool().acquisitions() > 0);
        assert!(engine.pool().is_quiescent());
    }
}
