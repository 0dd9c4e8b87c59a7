//! Cumulative per-routine timers using the routine categories of the
//! classic CP-ALS breakdown (MTTKRP, sort, Gram products, normalization,
//! fit, inverse).

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Routine {
    Mttkrp,
    Sort,
    MatAta,
    MatNorm,
    CpdFit,
    Inverse,
    Total,
}

impl Routine {
    pub const ALL: [Routine; 7] = [
        Routine::Mttkrp,
        Routine::Sort,
        Routine::MatAta,
        Routine::MatNorm,
        Routine::CpdFit,
        Routine::Inverse,
        Routine::Total,
    ];

    /// Column heading used in human-readable tables.
    pub fn label(self) -> &'static str {
        match self {
            Routine::Mttkrp => "MTTKRP",
            Routine::Sort => "Sort",
            Routine::MatAta => "Mat A^TA",
            Routine::MatNorm => "Mat norm",
            Routine::CpdFit => "CPD fit",
            Routine::Inverse => "Inverse",
            Routine::Total => "Total",
        }
    }

    /// Identifier used in CSV output.
    pub fn key(self) -> &'static str {
        match self {
            Routine::Mttkrp => "mttkrp",
            Routine::Sort => "sort",
            Routine::MatAta => "mat_ata",
            Routine::MatNorm => "mat_norm",
            Routine::CpdFit => "cpd_fit",
            Routine::Inverse => "inverse",
            Routine::Total => "total",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Routine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Cumulative seconds per routine.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RoutineTimings {
    seconds: [f64; 7],
}

impl RoutineTimings {
    pub fn add(&mut self, routine: Routine, secs: f64) {
        self.seconds[routine.index()] += secs;
    }

    pub fn set(&mut self, routine: Routine, secs: f64) {
        self.seconds[routine.index()] = secs;
    }

    pub fn get(&self, routine: Routine) -> f64 {
        self.seconds[routine.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Routine, f64)> + '_ {
        Routine::ALL.iter().map(move |&r| (r, self.get(r)))
    }

    /// Sum of every category except `Total`.
    pub fn categorized(&self) -> f64 {
        self.iter().filter(|(r, _)| *r != Routine::Total).map(|(_, s)| s).sum()
    }
}

/// Wall-clock stopwatch. On `wasm32` there is no monotonic clock in `std`,
/// so every reading is zero there.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    #[inline]
    pub fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    #[inline]
    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }

    /// Adds the elapsed time to `routine` and restarts.
    #[inline]
    pub fn lap(&mut self, timings: &mut RoutineTimings, routine: Routine) {
        timings.add(routine, self.seconds());
        *self = Stopwatch::start();
    }
}

/// Per-routine mean and sample standard deviation over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSummary {
    pub trials: usize,
    pub mean: RoutineTimings,
    pub std: RoutineTimings,
}

impl TimingSummary {
    pub fn from_runs(runs: &[RoutineTimings]) -> Self {
        let n = runs.len();
        let mut mean = RoutineTimings::default();
        let mut std = RoutineTimings::default();
        if n == 0 {
            return TimingSummary { trials: 0, mean, std };
        }
        for r in Routine::ALL {
            let m = runs.iter().map(|t| t.get(r)).sum::<f64>() / n as f64;
            mean.set(r, m);
            if n > 1 {
                let var = runs.iter().map(|t| (t.get(r) - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                std.set(r, var.sqrt());
            }
        }
        TimingSummary { trials: n, mean, std }
    }

    /// Fixed-width table, one row per routine in [`Routine::ALL`] order.
    pub fn table(&self) -> String {
        let mut out = format!("{:<10} {:>12} {:>12}\n", "routine", "mean (s)", "std (s)");
        for r in Routine::ALL {
            out.push_str(&format!("{:<10} {:>12.6} {:>12.6}\n", r.label(), self.mean.get(r), self.std.get(r)));
        }
        out
    }
}
