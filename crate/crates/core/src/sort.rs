//! Nonzero sort: parallel counting sort on the leading mode, then an
//! in-place quicksort inside each bucket on the remaining two modes.

use std::mem;

use crate::parallel::{fork_join_each, partition_by_weight, SharedMut};
use crate::{Error, Result, SparseTensor, ORDER};

const INSERTION_CUTOFF: usize = 16;

pub fn check_perm(perm: [usize; ORDER]) -> Result<()> {
    let mut seen = [false; ORDER];
    for &m in &perm {
        if m >= ORDER || seen[m] {
            return Err(Error::BadPermutation(perm));
        }
        seen[m] = true;
    }
    Ok(())
}

/// Sorts the nonzeros of `t` lexicographically by
/// `(coords[perm[0]], coords[perm[1]], coords[perm[2]])` using `tasks` tasks.
pub fn sort_tensor(t: &mut SparseTensor, perm: [usize; ORDER], tasks: usize) -> Result<()> {
    check_perm(perm)?;
    let tasks = tasks.max(1);
    let nnz = t.nnz();
    if nnz < 2 {
        return Ok(());
    }

    let bucket_start = counting_pass(t, perm[0], tasks);

    // Buckets are disjoint index ranges; hand each task a run of whole buckets.
    let sizes = bucket_start.windows(2).map(|w| (w[1] - w[0]) as u64);
    let part = partition_by_weight(sizes, tasks);

    let [i0, i1, i2] = &mut t.inds;
    let mut keyed: [&mut [usize]; ORDER] = [i0, i1, i2];
    let mut chunks = Vec::with_capacity(part.task_count());
    {
        let mut rest_other = mem::take(&mut keyed[perm[0]]);
        let mut rest_k1 = mem::take(&mut keyed[perm[1]]);
        let mut rest_k2 = mem::take(&mut keyed[perm[2]]);
        let mut rest_v = t.vals.as_mut_slice();
        let mut consumed = 0;
        for r in &part.ranges {
            let len = bucket_start[r.end] - bucket_start[r.start];
            let (o, o_rest) = rest_other.split_at_mut(len);
            let (a, a_rest) = rest_k1.split_at_mut(len);
            let (b, b_rest) = rest_k2.split_at_mut(len);
            let (v, v_rest) = rest_v.split_at_mut(len);
            rest_other = o_rest;
            rest_k1 = a_rest;
            rest_k2 = b_rest;
            rest_v = v_rest;
            chunks.push((
                Columns { k1: a, k2: b, other: o, vals: v },
                &bucket_start[r.start..=r.end],
                consumed,
            ));
            consumed += len;
        }
    }

    fork_join_each(chunks, |_, (mut cols, bounds, base)| {
        for w in bounds.windows(2) {
            let (lo, hi) = (w[0] - base, w[1] - base);
            if hi - lo > 1 {
                quicksort(&mut cols, lo, hi);
            }
        }
    });
    Ok(())
}

/// Stable counting sort of all nonzeros by `mode`. Returns bucket offsets
/// (length `dims[mode] + 1`).
fn counting_pass(t: &mut SparseTensor, mode: usize, tasks: usize) -> Vec<usize> {
    let nnz = t.nnz();
    let nbuckets = t.dims[mode];
    let chunk = nnz.div_ceil(tasks);
    let key = &t.inds[mode];

    let mut hists = vec![vec![0usize; nbuckets]; tasks];
    fork_join_each(hists.iter_mut().collect(), |tid, hist: &mut Vec<usize>| {
        let lo = (tid * chunk).min(nnz);
        let hi = ((tid + 1) * chunk).min(nnz);
        for &b in &key[lo..hi] {
            hist[b] += 1;
        }
    });

    // Serial merge: turn per-task counts into per-task write cursors.
    let mut bucket_start = vec![0usize; nbuckets + 1];
    let mut pos = 0;
    for b in 0..nbuckets {
        bucket_start[b] = pos;
        for h in hists.iter_mut() {
            let c = h[b];
            h[b] = pos;
            pos += c;
        }
    }
    bucket_start[nbuckets] = pos;

    let mut new_inds: [Vec<usize>; ORDER] = Default::default();
    for ind in new_inds.iter_mut() {
        *ind = vec![0; nnz];
    }
    let mut new_vals = vec![0.0f64; nnz];
    {
        let dst_i: Vec<SharedMut<usize>> = new_inds.iter_mut().map(|v| SharedMut::new(v)).collect();
        let dst_v = SharedMut::new(&mut new_vals);
        let src = &*t;
        fork_join_each(hists, |tid, mut cursor| {
            let lo = (tid * chunk).min(nnz);
            let hi = ((tid + 1) * chunk).min(nnz);
            for p in lo..hi {
                let b = src.inds[mode][p];
                let dst = cursor[b];
                cursor[b] += 1;
                // SAFETY: cursors of distinct (task, bucket) pairs cover
                // disjoint output positions by construction of the prefix sums.
                unsafe {
                    for (d, s) in dst_i.iter().zip(&src.inds) {
                        d.write(dst, s[p]);
                    }
                    dst_v.write(dst, src.vals[p]);
                }
            }
        });
    }
    // Hand the freshly scattered buffers to the tensor without copying.
    t.inds = new_inds;
    t.vals = new_vals;
    bucket_start
}

struct Columns<'a> {
    k1: &'a mut [usize],
    k2: &'a mut [usize],
    other: &'a mut [usize],
    vals: &'a mut [f64],
}

impl Columns<'_> {
    #[inline(always)]
    fn key(&self, i: usize) -> (usize, usize) {
        (self.k1[i], self.k2[i])
    }

    #[inline(always)]
    fn swap(&mut self, i: usize, j: usize) {
        self.k1.swap(i, j);
        self.k2.swap(i, j);
        self.other.swap(i, j);
        self.vals.swap(i, j);
    }
}

// Every entry of a bucket shares the leading coordinate, so ordering on the
// two trailing modes orders the full composite key.
fn quicksort(cols: &mut Columns<'_>, mut lo: usize, mut hi: usize) {
    loop {
        let n = hi - lo;
        if n <= INSERTION_CUTOFF {
            insertion_sort(cols, lo, hi);
            return;
        }
        let mid = lo + (n - 1) / 2;
        let last = hi - 1;
        if cols.key(mid) < cols.key(lo) {
            cols.swap(mid, lo);
        }
        if cols.key(last) < cols.key(lo) {
            cols.swap(last, lo);
        }
        if cols.key(last) < cols.key(mid) {
            cols.swap(last, mid);
        }
        let pivot = cols.key(mid);

        let mut i = lo;
        let mut j = last;
        let split = loop {
            while cols.key(i) < pivot {
                i += 1;
            }
            while cols.key(j) > pivot {
                j -= 1;
            }
            if i >= j {
                break j + 1;
            }
            cols.swap(i, j);
            i += 1;
            j -= 1;
        };

        if split - lo < hi - split {
            quicksort(cols, lo, split);
            lo = split;
        } else {
            quicksort(cols, split, hi);
            hi = split;
        }
    }
}

fn insertion_sort(cols: &mut Columns<'_>, lo: usize, hi: usize) {
    for i in lo + 1..hi {
        let mut j = i;
        while j > lo && cols.key(j - 1) > cols.key(j) {
            cols.swap(j - 1, j);
            j -= 1;
        }
    }
}
