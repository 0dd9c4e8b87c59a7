//! Striped test-and-set lock pool guarding scatter updates to shared rows.
//!
//! Each lock is a flag word followed by an acquisition counter, and slots are
//! spaced `padding` bytes apart so no two flags land on the same cache line.
//! Waiters never sleep: a failed test-and-set yields and tries again, which
//! suits the short multiply/accumulate critical sections of the MTTKRP.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use crate::{Error, Result};

pub const DEFAULT_POOL_SIZE: usize = 1024;
pub const DEFAULT_PADDING: usize = 64;

const WORD: usize = std::mem::size_of::<AtomicU64>();

pub struct LockPool {
    size: usize,
    mask: usize,
    stride: usize,
    words: Vec<AtomicU64>,
}

impl std::fmt::Debug for LockPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LockPool")
            .field("size", &self.size)
            .field("padding", &(self.stride * WORD))
            .finish()
    }
}

impl Default for LockPool {
    fn default() -> Self {
        LockPool::new(DEFAULT_POOL_SIZE).expect("default pool size is a power of two")
    }
}

impl LockPool {
    pub fn new(size: usize) -> Result<Self> {
        Self::with_padding(size, DEFAULT_PADDING)
    }

    /// `size` must be a power of two; `padding` is the byte distance between
    /// consecutive flags (a multiple of 8, at least 16).
    pub fn with_padding(size: usize, padding: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!("lock pool size {size} is not a power of two")));
        }
        if padding < 2 * WORD || !padding.is_multiple_of(WORD) {
            return Err(Error::InvalidConfig(format!("lock padding {padding} must be a multiple of 8 and >= 16")));
        }
        let stride = padding / WORD;
        let words = (0..size * stride).map(|_| AtomicU64::new(0)).collect();
        Ok(LockPool {
            size,
            mask: size - 1,
            stride,
            words,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline(always)]
    pub fn lock_id(&self, row: usize) -> usize {
        row & self.mask
    }

    #[inline(always)]
    fn flag(&self, id: usize) -> &AtomicU64 {
        &self.words[id * self.stride]
    }

    #[inline(always)]
    fn counter(&self, id: usize) -> &AtomicU64 {
        &self.words[id * self.stride + 1]
    }

    /// Spins on test-and-set, yielding after every failed attempt. Not
    /// reentrant: a task must not already hold `id`.
    #[inline]
    pub fn acquire(&self, id: usize) {
        let flag = self.flag(id);
        while flag.swap(1, Ordering::Acquire) != 0 {
            thread::yield_now();
        }
        // Only the holder touches the counter, so a plain load/store suffices.
        let c = self.counter(id);
        c.store(c.load(Ordering::Relaxed) + 1, Ordering::Relaxed);
    }

    #[inline]
    pub fn release(&self, id: usize) {
        if cfg!(debug_assertions) {
            let prev = self.flag(id).swap(0, Ordering::Release);
            debug_assert_eq!(prev, 1, "released lock {id} that was not held");
        } else {
            self.flag(id).store(0, Ordering::Release);
        }
    }

    /// Runs `f` while holding the lock that `row` hashes to.
    #[inline]
    pub fn with_row<T>(&self, row: usize, f: impl FnOnce() -> T) -> T {
        let id = self.lock_id(row);
        self.acquire(id);
        let out = f();
        self.release(id);
        out
    }

    pub fn is_held(&self, id: usize) -> bool {
        self.flag(id).load(Ordering::Acquire) != 0
    }

    /// True when every flag is clear.
    pub fn is_quiescent(&self) -> bool {
        (0..self.size).all(|id| !self.is_held(id))
    }

    /// Total successful acquisitions since construction or the last reset.
    pub fn acquisitions(&self) -> u64 {
        (0..self.size).map(|id| self.counter(id).load(Ordering::Relaxed)).sum()
    }

    pub fn reset_counters(&self) {
        for id in 0..self.size {
            self.counter(id).store(0, Ordering::Relaxed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel::fork_join;
    use std::cell::UnsafeCell;
    use std::sync::atomic::AtomicBool;

    #[test]
    fn lock_ids_wrap() {
        let pool = LockPool::new(1024).unwrap();
        assert_eq!(pool.lock_id(1024), 0);
        assert_eq!(pool.lock_id(7), 7);
        assert_eq!(pool.lock_id(1031), 7);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(LockPool::new(0).is_err());
        assert!(LockPool::new(1000).is_err());
        assert!(LockPool::with_padding(8, 12).is_err());
        assert!(LockPool::with_padding(8, 8).is_err());
        assert!(LockPool::with_padding(8, 128).is_ok());
    }

    #[test]
    fn flags_are_a_padding_apart() {
        let pool = LockPool::with_padding(4, 128).unwrap();
        let a = pool.flag(0) as *const _ as usize;
        let b = pool.flag(1) as *const _ as usize;
        assert_eq!(b - a, 128);
    }

    #[test]
    fn acquire_release_pair() {
        let pool = LockPool::new(16).unwrap();
        pool.acquire(3);
        assert!(pool.is_held(3));
        pool.release(3);
        assert!(pool.is_quiescent());
        assert_eq!(pool.acquisitions(), 1);
        pool.reset_counters();
        assert_eq!(pool.acquisitions(), 0);
    }

    struct Counters(Vec<UnsafeCell<u64>>);
    unsafe impl Sync for Counters {}

    #[test]
    fn second_acquirer_waits_for_release() {
        let pool = LockPool::new(2).unwrap();
        let inside = AtomicBool::new(false);
        let overlaps = AtomicU64::new(0);
        fork_join(4, |_| {
            for _ in 0..2_000 {
                pool.acquire(1);
                if inside.swap(true, Ordering::SeqCst) {
                    overlaps.fetch_add(1, Ordering::SeqCst);
                }
                inside.store(false, Ordering::SeqCst);
                pool.release(1);
            }
        });
        assert_eq!(overlaps.into_inner(), 0);
        assert!(pool.is_quiescent());
    }

    #[test]
    fn guarded_increments_are_not_lost() {
        let pool = LockPool::new(1024).unwrap();
        let counters = Counters((0..1024).map(|_| UnsafeCell::new(0)).collect());
        let (tasks, per_task) = (6usize, 20_000usize);
        let shared = &counters;
        fork_join(tasks, |tid| {
            for n in 0..per_task {
                let row = (n * 31 + tid) % 1024;
                pool.with_row(row, || unsafe { *shared.0[row].get() += 1 });
            }
        });
        let total: u64 = counters.0.iter().map(|c| unsafe { *c.get() }).sum();
        assert_eq!(total, (tasks * per_task) as u64);
        assert_eq!(pool.acquisitions(), (tasks * per_task) as u64);
        assert!(pool.is_quiescent());
    }
}
