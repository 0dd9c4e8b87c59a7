//! Fork-join helpers and nonzero-balanced task partitioning.

use std::ops::Range;
use std::thread;

use crate::csf::CsfTensor;

/// Runs `f(tid)` for every `tid in 0..tasks` and waits for all of them.
///
/// Task 0 runs on the calling thread; with a single task nothing is spawned,
/// which keeps the single-task path usable on targets without threads.
pub fn fork_join<F>(tasks: usize, f: F)
where
    F: Fn(usize) + Sync,
{
    let tasks = tasks.max(1);
    if tasks == 1 {
        f(0);
        return;
    }
    thread::scope(|s| {
        let f = &f;
        for tid in 1..tasks {
            s.spawn(move || f(tid));
        }
        f(0);
    });
}

/// Like [`fork_join`], but hands each task an owned piece of work, usually a
/// disjoint `&mut` borrow produced by `split_at_mut`.
pub fn fork_join_each<T, F>(items: Vec<T>, f: F)
where
    T: Send,
    F: Fn(usize, T) + Sync,
{
    if items.len() <= 1 {
        for (tid, item) in items.into_iter().enumerate() {
            f(tid, item);
        }
        return;
    }
    thread::scope(|s| {
        let f = &f;
        let mut iter = items.into_iter().enumerate();
        let first = iter.next();
        for (tid, item) in iter {
            s.spawn(move || f(tid, item));
        }
        if let Some((tid, item)) = first {
            f(tid, item);
        }
    });
}

/// Contiguous per-task ranges over some ordered unit of work (CSF slices,
/// sort buckets).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPartition {
    pub ranges: Vec<Range<usize>>,
}

impl TaskPartition {
    pub fn task_count(&self) -> usize {
        self.ranges.len()
    }

    /// Every unit in a single range, the rest empty.
    pub fn serial(units: usize, tasks: usize) -> Self {
        let tasks = tasks.max(1);
        let mut ranges = vec![units..units; tasks];
        ranges[0] = 0..units;
        TaskPartition { ranges }
    }

    /// Number of tasks that received at least one unit.
    pub fn busy_tasks(&self) -> usize {
        self.ranges.iter().filter(|r| !r.is_empty()).count()
    }
}

/// Splits units with the given weights into `tasks` contiguous ranges.
///
/// Boundary `k` is the first unit whose exclusive prefix sum reaches
/// `total * k / tasks`; units are never split.
pub fn partition_by_weight(weights: impl IntoIterator<Item = u64>, tasks: usize) -> TaskPartition {
    let tasks = tasks.max(1);
    let mut prefix = vec![0u64];
    for w in weights {
        let last = *prefix.last().unwrap();
        prefix.push(last + w);
    }
    let units = prefix.len() - 1;
    let total = prefix[units] as u128;

    let mut bounds = Vec::with_capacity(tasks + 1);
    bounds.push(0);
    for k in 1..tasks {
        let target = total * k as u128;
        let b = prefix.partition_point(|&p| (p as u128) * (tasks as u128) < target);
        bounds.push(b.min(units).max(*bounds.last().unwrap()));
    }
    bounds.push(units);

    TaskPartition {
        ranges: bounds.windows(2).map(|w| w[0]..w[1]).collect(),
    }
}

/// Balances root-level slices of `csf` across `tasks` by nonzero count.
pub fn partition_slices(csf: &CsfTensor, tasks: usize) -> TaskPartition {
    partition_by_weight((0..csf.num_slices()).map(|s| csf.slice_nnz(s) as u64), tasks)
}

/// Raw pointer that may be shared across tasks. Callers guarantee that
/// concurrent accesses touch disjoint elements or are serialized by a lock.
#[derive(Clone, Copy)]
pub(crate) struct SharedMut<T> {
    ptr: *mut T,
    len: usize,
}

unsafe impl<T: Send> Send for SharedMut<T> {}
unsafe impl<T: Send> Sync for SharedMut<T> {}

impl<T> SharedMut<T> {
    pub(crate) fn new(slice: &mut [T]) -> Self {
        SharedMut {
            ptr: slice.as_mut_ptr(),
            len: slice.len(),
        }
    }

    /// # Safety
    /// No other task may access `start..start + len` for the lifetime of the
    /// returned slice, and the original borrow must still be live.
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn slice_mut(&self, start: usize, len: usize) -> &mut [T] {
        assert!(start + len <= self.len);
        std::slice::from_raw_parts_mut(self.ptr.add(start), len)
    }

    /// # Safety
    /// Same contract as [`SharedMut::slice_mut`] for the single element `idx`.
    pub(crate) unsafe fn write(&self, idx: usize, value: T) {
        debug_assert!(idx < self.len);
        self.ptr.add(idx).write(value);
    }
}
