//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every exported function takes plain numbers and returns a JSON string, so
//! the page needs no bundler or framework. The computations run on a single
//! task because browsers give a wasm module no threads by default.

use serde::Serialize;
use spalt::gen::{generate, GenSpec};
use spalt::{allocate_csfs, cp_als, init_factors, mttkrp, CpAlsConfig, CsfPolicy, FactorMatrix, SparseTensor};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct FitCurve {
    pub dims: [usize; 3],
    pub nnz: usize,
    pub rank: usize,
    pub fits: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct PolicyReport {
    pub policy: String,
    pub trees: usize,
    /// Kernel used for each mode: "Root", "Internal" or "Leaf".
    pub kernels: [String; 3],
    pub index_entries: usize,
    /// Largest relative difference from the lock-free ALL policy, per mode.
    pub max_rel_diff: [f64; 3],
}

#[derive(Debug, Serialize)]
pub struct TreeLayout {
    pub mode_order: [usize; 3],
    pub slices: usize,
    pub fibers: usize,
    pub nnz: usize,
    pub index_entries: usize,
    /// Index entries relative to coordinate storage (3 per nonzero).
    pub vs_coo: f64,
    /// Nonzeros per slice, in slice order.
    pub slice_nnz: Vec<usize>,
}

fn tensor(dims: [usize; 3], nnz: usize, seed: u64, rank: Option<usize>) -> Result<SparseTensor, String> {
    generate(&GenSpec { dims, nnz, seed, rank }).map(|g| g.tensor).map_err(|e| e.to_string())
}

/// Decomposes a tensor drawn from a random rank-`true_rank` model and returns
/// the fit after every iteration.
pub fn fit_curve(dims: [usize; 3], nnz: usize, true_rank: usize, rank: usize, iters: usize, seed: u64) -> Result<FitCurve, String> {
    let t = tensor(dims, nnz, seed, Some(true_rank))?;
    let cfg = CpAlsConfig {
        rank,
        max_iters: iters,
        tolerance: 0.0,
        seed,
        tasks: 1,
        ..Default::default()
    };
    let run = cp_als(&t, &cfg).map_err(|e| e.to_string())?;
    Ok(FitCurve {
        dims,
        nnz: t.nnz(),
        rank,
        fits: run.fits,
        lambda: run.model.lambda,
    })
}

fn rel_diff(a: &FactorMatrix, b: &FactorMatrix) -> f64 {
    let scale = b.max_abs().max(f64::MIN_POSITIVE);
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Runs the MTTKRP for every mode under each CSF policy on the same uniform
/// random tensor and reports which kernel served each mode.
pub fn compare_kernels(dims: [usize; 3], nnz: usize, rank: usize, seed: u64) -> Result<Vec<PolicyReport>, String> {
    if rank == 0 {
        return Err("rank must be at least 1".into());
    }
    let t = tensor(dims, nnz, seed, None)?;
    let factors = init_factors(dims, rank, seed);
    let run = |policy| -> Result<_, String> {
        let alloc = allocate_csfs(&t, policy, 1).map_err(|e| e.to_string())?;
        let outs = (0..3)
            .map(|m| mttkrp(&alloc, m, &factors, 1).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((alloc, outs))
    };
    let (_, reference) = run(CsfPolicy::All)?;
    [CsfPolicy::One, CsfPolicy::Two, CsfPolicy::All]
        .into_iter()
        .map(|policy| {
            let (alloc, outs) = run(policy)?;
            Ok(PolicyReport {
                policy: format!("{policy:?}").to_uppercase(),
                trees: alloc.csfs.len(),
                kernels: alloc.dispatch.map(|d| format!("{:?}", d.kind)),
                index_entries: alloc.csfs.iter().map(|c| c.index_entries()).sum(),
                max_rel_diff: [0, 1, 2].map(|m| rel_diff(&outs[m], &reference[m])),
            })
        })
        .collect()
}

/// Shape of the tree rooted at each mode.
pub fn csf_layout(dims: [usize; 3], nnz: usize, seed: u64) -> Result<Vec<TreeLayout>, String> {
    let t = tensor(dims, nnz, seed, None)?;
    let alloc = allocate_csfs(&t, CsfPolicy::All, 1).map_err(|e| e.to_string())?;
    Ok(alloc
        .csfs
        .iter()
        .map(|c| TreeLayout {
            mode_order: c.mode_perm,
            slices: c.num_slices(),
            fibers: c.num_fibers(),
            nnz: c.nnz(),
            index_entries: c.index_entries(),
            vs_coo: c.index_entries() as f64 / (3 * c.nnz()) as f64,
            slice_nnz: (0..c.num_slices()).map(|s| c.slice_nnz(s)).collect(),
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fitCurve)]
#[allow(clippy::too_many_arguments)]
pub fn fit_curve_js(i: usize, j: usize, k: usize, nnz: usize, true_rank: usize, rank: usize, iters: usize, seed: u32) -> Result<String, JsValue> {
    to_js(fit_curve([i, j, k], nnz, true_rank, rank, iters, seed as u64))
}

#[wasm_bindgen(js_name = compareKernels)]
pub fn compare_kernels_js(i: usize, j: usize, k: usize, nnz: usize, rank: usize, seed: u32) -> Result<String, JsValue> {
    to_js(compare_kernels([i, j, k], nnz, rank, seed as u64))
}

#[wasm_bindgen(js_name = csfLayout)]
pub fn csf_layout_js(i: usize, j: usize, k: usize, nnz: usize, seed: u32) -> Result<String, JsValue> {
    to_js(csf_layout([i, j, k], nnz, seed as u64))
}
