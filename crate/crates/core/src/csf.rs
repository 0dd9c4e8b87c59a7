//! Compressed sparse fiber (CSF) trees and the per-mode kernel dispatch.
//!
//! A CSF tree for permutation `(a, b, c)` stores one root node per distinct
//! mode-`a` index (a *slice*), one middle node per distinct `(a, b)` prefix (a
//! *fiber*) and one leaf per nonzero. Pointer arrays delimit the children of
//! each node, so repeated prefixes are stored once.

use std::ops::Range;

use crate::sort::{check_perm, sort_tensor};
use crate::timing::Stopwatch;
use crate::{Error, Result, SparseTensor, ORDER};

#[derive(Debug, Clone, PartialEq)]
pub struct CsfTensor {
    /// Tree level -> original mode.
    pub mode_perm: [usize; ORDER],
    pub dims: [usize; ORDER],
    pub level0_ids: Vec<usize>,
    pub level0_ptr: Vec<u64>,
    pub level1_ids: Vec<usize>,
    pub level1_ptr: Vec<u64>,
    pub level2_ids: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsfTensor {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn num_slices(&self) -> usize {
        self.level0_ids.len()
    }

    pub fn num_fibers(&self) -> usize {
        self.level1_ids.len()
    }

    #[inline(always)]
    pub fn slice_fibers(&self, s: usize) -> Range<usize> {
        self.level0_ptr[s] as usize..self.level0_ptr[s + 1] as usize
    }

    #[inline(always)]
    pub fn fiber_leaves(&self, f: usize) -> Range<usize> {
        self.level1_ptr[f] as usize..self.level1_ptr[f + 1] as usize
    }

    pub fn slice_nnz(&self, s: usize) -> usize {
        let fibers = self.slice_fibers(s);
        (self.level1_ptr[fibers.end] - self.level1_ptr[fibers.start]) as usize
    }

    /// Tree level at which `mode` is stored.
    pub fn level_of(&self, mode: usize) -> usize {
        self.mode_perm.iter().position(|&m| m == mode).expect("mode in permutation")
    }

    /// Walks the tree and yields `(level-ordered coordinates, value)`.
    pub fn entries(&self) -> impl Iterator<Item = ([usize; ORDER], f64)> + '_ {
        (0..self.num_slices()).flat_map(move |s| {
            self.slice_fibers(s).flat_map(move |f| {
                self.fiber_leaves(f)
                    .map(move |z| ([self.level0_ids[s], self.level1_ids[f], self.level2_ids[z]], self.values[z]))
            })
        })
    }

    /// Same as [`CsfTensor::entries`] with coordinates in original mode order.
    pub fn coords(&self) -> impl Iterator<Item = ([usize; ORDER], f64)> + '_ {
        self.entries().map(move |(lvl, v)| {
            let mut c = [0; ORDER];
            for (level, &mode) in self.mode_perm.iter().enumerate() {
                c[mode] = lvl[level];
            }
            (c, v)
        })
    }

    /// Number of stored index and pointer entries.
    pub fn index_entries(&self) -> usize {
        self.level0_ids.len()
            + self.level0_ptr.len()
            + self.level1_ids.len()
            + self.level1_ptr.len()
            + self.level2_ids.len()
    }
}

/// Builds a CSF tree from a tensor already sorted for `perm`.
pub fn build_csf(t: &SparseTensor, perm: [usize; ORDER]) -> Result<CsfTensor> {
    check_perm(perm)?;
    let nnz = t.nnz();
    let [a, b, c] = [&t.inds[perm[0]], &t.inds[perm[1]], &t.inds[perm[2]]];

    let mut csf = CsfTensor {
        mode_perm: perm,
        dims: t.dims,
        level0_ids: Vec::new(),
        level0_ptr: vec![0],
        level1_ids: Vec::new(),
        level1_ptr: vec![0],
        level2_ids: Vec::with_capacity(nnz),
        values: Vec::with_capacity(nnz),
    };

    for p in 0..nnz {
        let new_slice = p == 0 || a[p] != a[p - 1];
        let new_fiber = new_slice || b[p] != b[p - 1];
        if p > 0 && (a[p], b[p], c[p]) < (a[p - 1], b[p - 1], c[p - 1]) {
            return Err(Error::NotSorted);
        }
        if new_slice {
            if p > 0 {
                csf.level0_ptr.push(csf.level1_ids.len() as u64);
            }
            csf.level0_ids.push(a[p]);
        }
        if new_fiber {
            if p > 0 {
                csf.level1_ptr.push(p as u64);
            }
            csf.level1_ids.push(b[p]);
        }
        csf.level2_ids.push(c[p]);
        csf.values.push(t.vals[p]);
    }
    if nnz > 0 {
        csf.level0_ptr.push(csf.level1_ids.len() as u64);
        csf.level1_ptr.push(nnz as u64);
    }
    Ok(csf)
}

/// How many CSF trees to keep, trading memory for lock-free kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsfPolicy {
    One,
    Two,
    All,
}

impl std::str::FromStr for CsfPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "one" => Ok(CsfPolicy::One),
            "two" => Ok(CsfPolicy::Two),
            "all" => Ok(CsfPolicy::All),
            other => Err(Error::InvalidConfig(format!("unknown CSF policy {other:?}"))),
        }
    }
}

/// Which tree level a kernel writes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Root,
    Internal,
    Leaf,
}

impl KernelKind {
    pub fn level(self) -> usize {
        match self {
            KernelKind::Root => 0,
            KernelKind::Internal => 1,
            KernelKind::Leaf => 2,
        }
    }

    pub fn from_level(level: usize) -> Self {
        match level {
            0 => KernelKind::Root,
            1 => KernelKind::Internal,
            _ => KernelKind::Leaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeDispatch {
    pub csf: usize,
    pub kind: KernelKind,
}

#[derive(Debug, Clone)]
pub struct CsfAllocation {
    pub policy: CsfPolicy,
    pub csfs: Vec<CsfTensor>,
    /// Indexed by original mode.
    pub dispatch: [ModeDispatch; ORDER],
    /// Time spent sorting while building the trees.
    pub sort_seconds: f64,
}

impl CsfAllocation {
    /// Routes the MTTKRP for `mode` through `kind` on tree `csf`.
    pub fn set_dispatch(&mut self, mode: usize, csf: usize, kind: KernelKind) -> Result<()> {
        let tree = self
            .csfs
            .get(csf)
            .ok_or_else(|| Error::InvalidConfig(format!("no CSF #{csf}")))?;
        let level = tree.level_of(mode);
        if level != kind.level() {
            return Err(Error::KernelMismatch {
                requested: kind,
                mode,
                level,
            });
        }
        self.dispatch[mode] = ModeDispatch { csf, kind };
        Ok(())
    }

    pub fn uses_locks(&self) -> bool {
        self.dispatch.iter().any(|d| d.kind != KernelKind::Root)
    }
}

/// Modes ordered by `(length, id)`.
fn modes_by_length(dims: [usize; ORDER]) -> [usize; ORDER] {
    let mut order = [0, 1, 2];
    order.sort_by_key(|&m| (dims[m], m));
    order
}

/// Tree order for a CSF rooted at `root`: the other modes follow in
/// ascending length, ties to the lower mode id.
pub fn tree_order(dims: [usize; ORDER], root: usize) -> [usize; ORDER] {
    let mut out = [root; ORDER];
    let mut level = 1;
    for m in modes_by_length(dims) {
        if m != root {
            out[level] = m;
            level += 1;
        }
    }
    out
}

/// Tree permutations and dispatch table for `policy`, without building trees.
pub fn plan(dims: [usize; ORDER], policy: CsfPolicy) -> (Vec<[usize; ORDER]>, [ModeDispatch; ORDER]) {
    let by_len = modes_by_length(dims);
    let first = tree_order(dims, by_len[0]);
    let from_first = |mode: usize| ModeDispatch {
        csf: 0,
        kind: KernelKind::from_level(first.iter().position(|&m| m == mode).unwrap()),
    };
    match policy {
        CsfPolicy::One => (vec![first], [from_first(0), from_first(1), from_first(2)]),
        CsfPolicy::Two => {
            let second_root = by_len[ORDER - 1];
            let second = tree_order(dims, second_root);
            let mut dispatch = [from_first(0), from_first(1), from_first(2)];
            dispatch[second_root] = ModeDispatch {
                csf: 1,
                kind: KernelKind::Root,
            };
            (vec![first, second], dispatch)
        }
        CsfPolicy::All => {
            let perms = (0..ORDER).map(|m| tree_order(dims, m)).collect();
            let dispatch = [0, 1, 2].map(|m| ModeDispatch {
                csf: m,
                kind: KernelKind::Root,
            });
            (perms, dispatch)
        }
    }
}

/// Sorts copies of `t` and builds the CSF trees required by `policy`.
pub fn allocate_csfs(t: &SparseTensor, policy: CsfPolicy, tasks: usize) -> Result<CsfAllocation> {
    t.validate()?;
    let (perms, dispatch) = plan(t.dims, policy);
    let mut csfs = Vec::with_capacity(perms.len());
    let mut sort_seconds = 0.0;
    for perm in perms {
        let mut sorted = t.clone();
        let clock = Stopwatch::start();
        sort_tensor(&mut sorted, perm, tasks)?;
        sort_seconds += clock.seconds();
        csfs.push(build_csf(&sorted, perm)?);
    }
    Ok(CsfAllocation {
        policy,
        csfs,
        dispatch,
        sort_seconds,
    })
}
