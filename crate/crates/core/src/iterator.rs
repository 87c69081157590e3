//! The discretised fixed-point iteration `A_0 -> A_1 -> ... -> A_N`.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::lattice::{support_q, LatticePmf};
use crate::model::{grid_u, DiscretisationSchedule, PerpetuitySpec};
use crate::scalar::{neumaier_sum, Real};

/// Number of u-chunks per step. Fixed so results do not depend on the thread count.
const CHUNKS: u64 = 32;

/// Default cap on working memory for one step.
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

#[derive(Clone, Debug)]
pub struct IterationPlan {
    pub spec: PerpetuitySpec,
    pub sched: DiscretisationSchedule,
    pub n_steps: u32,
    pub snapshot_every: Option<u32>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub memory_budget: usize,
}

impl IterationPlan {
    pub fn new(spec: PerpetuitySpec, sched: DiscretisationSchedule, n_steps: u32) -> Self {
        IterationPlan { spec, sched, n_steps, snapshot_every: None, threads: None, memory_budget: DEFAULT_MEMORY_BUDGET }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_snapshots(mut self, every: u32) -> Self {
        self.snapshot_every = Some(every);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::InvalidArgument("snapshot interval must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("thread count must be >= 1".into()));
        }
        self.sched.validate()?;
        let s = self.sched.s(self.n_steps)?;
        let (lo, hi) = support_q(&self.spec, self.n_steps).k_range(s);
        let needed = step_memory(s, (hi - lo + 1) as u64);
        if needed > self.memory_budget as u128 {
            return Err(Error::MemoryBudget { needed: needed.min(usize::MAX as u128) as usize, budget: self.memory_budget });
        }
        Ok(())
    }
}

/// Bytes held by one step: per-chunk accumulators plus the merged array.
fn step_memory(s: u64, atoms: u64) -> u128 {
    (CHUNKS.min(s) as u128 + 2) * atoms as u128 * 8
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub step: u32,
    pub s: u64,
    pub elapsed: Duration,
    pub op_count: u64,
}

#[derive(Clone, Debug)]
pub struct IterationResult<T> {
    pub final_pmf: LatticePmf<T>,
    pub snapshots: Vec<(u32, LatticePmf<T>)>,
    /// `(u, j, branch)` triples processed, i.e. inner iterations of the plain update loop.
    pub op_count: u64,
    /// Pre-normalisation `sum mass - 1` per step, starting at step 1.
    pub defects: Vec<f64>,
    pub elapsed: Duration,
}

/// `A_0`: a point mass at `floor(E X)`.
pub fn initialize<T: Real>(spec: &PerpetuitySpec, sched: &DiscretisationSchedule) -> Result<LatticePmf<T>> {
    let s0 = sched.s(0)?;
    Ok(LatticePmf::point_mass(s0, (s0 as f64 * spec.mean_x()).floor() as i64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub op_count: u64,
    pub defect: f64,
}

/// One application of the discretised map.
pub fn update<T: Real>(
    prev: &LatticePmf<T>,
    spec: &PerpetuitySpec,
    sched: &DiscretisationSchedule,
    n: u32,
) -> Result<LatticePmf<T>> {
    update_in(prev, spec, sched, n, None).map(|(pmf, _)| pmf)
}

/// `floor(y)` without a libm call.
#[inline(always)]
fn fast_floor(y: f64) -> i64 {
    let t = y as i64;
    t - ((t as f64 > y) as i64)
}

const MAGIC: f64 = 4_503_599_627_370_496.0; // 2^52
const MAGIC_BITS: u64 = 0x4330_0000_0000_0000;

/// `ceil((base + i) * inv)` for each slot `i`, with `0 <= base`, `inv > 0` and results below 2^51.
///
/// Float/int conversions go through the bit pattern of `x + 2^52`: hardware
/// conversions serialise the loop on some cores, these vectorise.
#[inline(always)]
fn edges_generic(out: &mut [u64], base: f64, inv: f64) {
    for (i, o) in out.iter_mut().enumerate() {
        let fi = f64::from_bits(MAGIC_BITS + i as u64) - MAGIC;
        let x = (base + fi) * inv;
        let r = x + MAGIC;
        *o = (r.to_bits() - MAGIC_BITS) + ((r - MAGIC) < x) as u64;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn edges_avx2(out: &mut [u64], base: f64, inv: f64) {
    edges_generic(out, base, inv)
}

// same IEEE operations on every path, so results do not depend on the CPU
fn edges(out: &mut [u64], base: f64, inv: f64) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime
        return unsafe { edges_avx2(out, base, inv) };
    }
    edges_generic(out, base, inv)
}

/// Scatters `weighted` through each `(a, c)` map; returns false on a support violation.
///
/// Target of source atom `j` is `floor(a j + c0)`. For `a > 0` targets are
/// monotone in `j`, so each target cell receives one prefix-sum difference
/// instead of one addition per source atom. `edge` is scratch space.
#[inline(never)]
fn scatter(
    acc: &mut [f64],
    edge: &mut Vec<u64>,
    weighted: &[f64],
    prefix: &[f64],
    k_prev_min: i64,
    k_lo: i64,
    coeffs: &[(f64, f64)],
) -> bool {
    let len = acc.len() as i64;
    let atoms = weighted.len();
    let base = k_prev_min as f64;
    let mut ok = true;
    for &(a, c) in coeffs {
        let c0 = a * base + c;
        // tiny slopes would overflow the edge computation; they hit few cells anyway
        if a > 1e-9 {
            let k_first = fast_floor(c0);
            let k_last = fast_floor(a * (atoms - 1) as f64 + c0);
            if k_first < k_lo || k_last - k_lo >= len {
                ok = false;
                continue;
            }
            let cells = &mut acc[(k_first - k_lo) as usize..=(k_last - k_lo) as usize];
            let last = cells.len() - 1;
            // first j whose target exceeds k_first + i; nondecreasing in i, and
            // within [0, atoms] up to rounding since k_first <= c0 and k_last - c0 <= a (atoms - 1)
            edge.resize(last, 0);
            edges(edge, (k_first + 1) as f64 - c0, 1.0 / a);
            let mut lo = prefix[0];
            for (cell, &e) in cells[..last].iter_mut().zip(edge.iter()) {
                let hi = prefix[(e as usize).min(atoms)];
                *cell += hi - lo;
                lo = hi;
            }
            cells[last] += prefix[atoms] - lo;
        } else {
            for (j, &w) in weighted.iter().enumerate() {
                let k = fast_floor(a * j as f64 + c0) - k_lo;
                if (k as u64) < len as u64 {
                    acc[k as usize] += w;
                } else {
                    ok = false;
                }
            }
        }
    }
    ok
}

pub(crate) fn update_in<T: Real>(
    prev: &LatticePmf<T>,
    spec: &PerpetuitySpec,
    sched: &DiscretisationSchedule,
    n: u32,
    pool: Option<&ThreadPool>,
) -> Result<(LatticePmf<T>, StepStats)> {
    if n == 0 {
        return Err(Error::InvalidArgument("update steps start at n = 1".into()));
    }
    let s_prev = sched.s(n - 1)?;
    if prev.s() != s_prev {
        return Err(Error::InvalidArgument(format!("previous lattice has s = {}, expected {s_prev}", prev.s())));
    }
    let s = sched.s(n)?;
    let (k_lo, k_hi) = support_q(spec, n).k_range(s);
    let len = (k_hi - k_lo + 1) as usize;
    let sf = s as f64;
    let ratio = sf / s_prev as f64;
    let mode = sched.u_mode;

    let branches: Vec<(Vec<f64>, Vec<f64>, &crate::model::CoefficientBranch)> = spec
        .branches()
        .iter()
        .map(|wb| {
            let scale = wb.weight / sf;
            let weighted: Vec<f64> = prev.mass().iter().map(|m| m.to_f64_lossy() * scale).collect();
            let prefix = std::iter::once(0.0)
                .chain(weighted.iter().scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                }))
                .collect();
            (weighted, prefix, &wb.branch)
        })
        .collect();

    let chunks = CHUNKS.min(s);
    let work = |c: u64| -> (Vec<f64>, bool) {
        let (i0, i1) = (c * s / chunks, (c + 1) * s / chunks);
        let mut acc = vec![0.0f64; len];
        let mut edge = Vec::new();
        let mut ok = true;
        for (weighted, prefix, br) in &branches {
            // target k = floor(s (phi(u) j / s_prev + psi(u))) = floor(a j + c)
            let coeffs: Vec<(f64, f64)> = (i0..i1)
                .map(|i| {
                    let u = grid_u(i, s, mode);
                    (br.phi.eval(u) * ratio, br.psi.eval(u) * sf)
                })
                .collect();
            ok &= scatter(&mut acc, &mut edge, weighted, prefix, prev.k_min(), k_lo, &coeffs);
        }
        (acc, ok)
    };
    let parts: Vec<(Vec<f64>, bool)> = match pool {
        Some(p) => p.install(|| (0..chunks).into_par_iter().map(work).collect()),
        None => (0..chunks).into_par_iter().map(work).collect(),
    };

    // merge in ascending chunk order
    let mut merged = vec![0.0f64; len];
    let mut ok = true;
    for (acc, part_ok) in &parts {
        ok &= part_ok;
        for (m, a) in merged.iter_mut().zip(acc) {
            *m += a;
        }
    }
    drop(parts);
    if !ok {
        return Err(locate_violation(prev, spec, sched, n, k_lo, k_hi));
    }
    let total = neumaier_sum(merged.iter().copied());
    let mass = merged.iter().map(|m| T::from_f64_lossy(m / total)).collect();
    let ops = s * spec.branches().len() as u64 * prev.atoms() as u64;
    Ok((LatticePmf::from_raw(s, k_lo, mass), StepStats { op_count: ops, defect: total - 1.0 }))
}

/// Re-runs the scatter serially to report the first offending target.
fn locate_violation<T: Real>(
    prev: &LatticePmf<T>,
    spec: &PerpetuitySpec,
    sched: &DiscretisationSchedule,
    n: u32,
    k_min: i64,
    k_max: i64,
) -> Error {
    let s = sched.s(n).unwrap_or(1);
    let s_prev = prev.s() as f64;
    for wb in spec.branches() {
        for i in 0..s {
            let u = grid_u(i, s, sched.u_mode);
            for j in prev.k_min()..=prev.k_max() {
                let y = s as f64 * (wb.branch.phi.eval(u) * j as f64 / s_prev + wb.branch.psi.eval(u));
                let k = y.floor() as i64;
                if k < k_min || k > k_max {
                    return Error::SupportViolation { n, k, k_min, k_max };
                }
            }
        }
    }
    Error::SupportViolation { n, k: k_max + 1, k_min, k_max }
}

/// Runs `initialize` followed by `update` for `n = 1..=N`.
pub fn run<T: Real>(plan: &IterationPlan) -> Result<IterationResult<T>> {
    run_with_progress(plan, |_| {})
}

pub fn run_with_progress<T: Real>(plan: &IterationPlan, mut hook: impl FnMut(Progress)) -> Result<IterationResult<T>> {
    plan.validate()?;
    let pool = match plan.threads {
        Some(k) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?,
        ),
        None => None,
    };
    let start = Instant::now();
    let mut pmf = initialize::<T>(&plan.spec, &plan.sched)?;
    let mut snapshots = Vec::new();
    let mut defects = Vec::with_capacity(plan.n_steps as usize);
    let mut op_count = 0u64;
    for n in 1..=plan.n_steps {
        let (next, stats) = update_in(&pmf, &plan.spec, &plan.sched, n, pool.as_ref())?;
        pmf = next;
        op_count += stats.op_count;
        defects.push(stats.defect);
        if plan.snapshot_every.is_some_and(|m| n % m == 0 && n < plan.n_steps) {
            snapshots.push((n, pmf.clone()));
        }
        hook(Progress { step: n, s: pmf.s(), elapsed: start.elapsed(), op_count });
    }
    Ok(IterationResult { final_pmf: pmf, snapshots, op_count, defects, elapsed: start.elapsed() })
}

/// Predicted inner-loop executions: `sum_n s(n) * branches * atoms(n - 1)`.
pub fn op_count_model(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, n_steps: u32) -> Result<u64> {
    let branches = spec.branches().len() as u64;
    let mut atoms_prev = 1u64;
    let mut total = 0u64;
    for n in 1..=n_steps {
        let s = sched.s(n)?;
        total += s * branches * atoms_prev;
        let (lo, hi) = support_q(spec, n).k_range(s);
        atoms_prev = (hi - lo + 1) as u64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use proptest::prelude::*;
    use crate::model::UMode;

    fn f64_pmf(s: u64, k_min: i64, mass: Vec<f64>) -> LatticePmf<f64> {
        LatticePmf::new(s, k_min, mass).unwrap()
    }

    #[test]
    fn quickselect_step_from_half() {
        let qs = presets::quickselect();
        let sched = DiscretisationSchedule::polynomial(1);
        let prev = f64_pmf(2, 0, vec![0.0, 1.0]);
        let next = update(&prev, &qs, &sched, 3).unwrap();
        // s = 3, u in {0, 1/3, 2/3}: floor(3(u/2 + u(1-u))) = 0, 1, 1
        assert_eq!(next.s(), 3);
        assert!((next.mass_at(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((next.mass_at(1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quickselect_quarter_grid() {
        // prev = point mass at 1/2 with s_prev = 2, s = 4; no schedule has s(n-1) = 2, s(n) = 4
        let s = 4u64;
        let weighted = vec![1.0 / s as f64];
        let coeffs: Vec<(f64, f64)> = (0..s)
            .map(|i| {
                let u = i as f64 / s as f64;
                (u * s as f64 / 2.0, u * (1.0 - u) * s as f64)
            })
            .collect();
        let mut acc = vec![0.0; 5];
        assert!(scatter(&mut acc, &mut Vec::new(), &weighted, &[0.0, 0.25], 1, 0, &coeffs));
        assert_eq!(acc, vec![0.25, 0.25, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn edges_match_ceil() {
        let mut out = vec![0u64; 300];
        for &(base, inv) in &[(0.25, 1.0), (1.0, 3.0), (1e-12, 1.7), (0.5, 1.0 / 0.3), (0.999, 7e5)] {
            edges(&mut out, base, inv);
            for (i, &e) in out.iter().enumerate() {
                assert_eq!(e, ((base + i as f64) * inv).ceil() as u64, "base {base} inv {inv} i {i}");
            }
        }
    }

    proptest! {
        #[test]
        fn prefix_scatter_matches_direct(
            masses in prop::collection::vec(0.0f64..1.0, 1..60),
            maps in prop::collection::vec((0.01f64..3.0, -5.0f64..5.0), 1..8),
            k_prev_min in -20i64..20,
        ) {
            let mut prefix = vec![0.0];
            for m in &masses {
                prefix.push(prefix.last().unwrap() + m);
            }
            let k_lo = -400;
            let mut fast = vec![0.0; 800];
            prop_assert!(scatter(&mut fast, &mut Vec::new(), &masses, &prefix, k_prev_min, k_lo, &maps));
            let mut slow = vec![0.0; 800];
            for &(a, c) in &maps {
                let c0 = a * k_prev_min as f64 + c;
                for (j, m) in masses.iter().enumerate() {
                    slow[((a * j as f64 + c0).floor() as i64 - k_lo) as usize] += m;
                }
            }
            for (f, s) in fast.iter().zip(&slow) {
                prop_assert!((f - s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn initialize_examples() {
        let sched = DiscretisationSchedule::polynomial(3);
        let a = initialize::<f64>(&presets::quickselect(), &sched).unwrap();
        assert_eq!((a.s(), a.k_min(), a.atoms()), (1, 0, 1));
        let b = initialize::<f64>(&presets::interval_splitting(), &sched).unwrap();
        assert_eq!(b.k_min(), 0);
        let c = initialize::<f64>(&presets::degenerate(0.0, 2.7).unwrap(), &sched).unwrap();
        assert_eq!(c.k_min(), 2);
    }

    #[test]
    fn degenerate_collapses() {
        let spec = presets::degenerate(0.0, 0.3).unwrap();
        let sched = DiscretisationSchedule::polynomial(2);
        let plan = IterationPlan::new(spec, sched, 5);
        let res = run::<f64>(&plan).unwrap();
        let pmf = res.final_pmf;
        assert_eq!(pmf.s(), 25);
        let (lo, hi) = pmf.occupied_range();
        assert_eq!((lo, hi), (7, 7));
    }

    #[test]
    fn single_step_is_point_mass() {
        let plan = IterationPlan::new(presets::quickselect(), DiscretisationSchedule::polynomial(3), 1);
        let res = run::<f64>(&plan).unwrap();
        assert_eq!(res.final_pmf.s(), 1);
        assert_eq!(res.final_pmf.mass_at(0), 1.0);
        assert_eq!(res.op_count, 1);
    }

    #[test]
    fn op_count_examples() {
        let qs = presets::quickselect();
        assert_eq!(op_count_model(&qs, &DiscretisationSchedule::polynomial(1), 3).unwrap(), 14);
        assert_eq!(op_count_model(&qs, &DiscretisationSchedule::polynomial(3), 1).unwrap(), 1);
        let r = op_count_model(&qs, &DiscretisationSchedule::polynomial(3), 40).unwrap() as f64
            / op_count_model(&qs, &DiscretisationSchedule::polynomial(3), 20).unwrap() as f64;
        assert!((r / 128.0 - 1.0).abs() < 0.2, "{r}");
    }

    #[test]
    fn measured_ops_match_model() {
        for n in [1u32, 2, 5, 9] {
            let is = presets::interval_splitting();
            let sched = DiscretisationSchedule::polynomial(2).with_u_mode(UMode::Symmetric);
            let res = run::<f64>(&IterationPlan::new(is.clone(), sched, n)).unwrap();
            assert_eq!(res.op_count, op_count_model(&is, &sched, n).unwrap());
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let plan = IterationPlan::new(presets::quickselect(), DiscretisationSchedule::polynomial(2), 12);
        let one = run::<f64>(&plan.clone().with_threads(1)).unwrap();
        let four = run::<f64>(&plan.with_threads(4)).unwrap();
        assert_eq!(one.final_pmf.mass(), four.final_pmf.mass());
    }

    #[test]
    fn snapshots_and_defects() {
        let plan = IterationPlan::new(presets::quickselect(), DiscretisationSchedule::polynomial(2), 10).with_snapshots(3);
        let res = run::<f64>(&plan).unwrap();
        let ns: Vec<u32> = res.snapshots.iter().map(|(n, _)| *n).collect();
        assert_eq!(ns, vec![3, 6, 9]);
        assert_eq!(res.defects.len(), 10);
        assert!(res.defects.iter().all(|d| d.abs() <= 1e-12));
    }

    #[test]
    fn support_violation_is_reported() {
        // mean inside the hint but A pushes mass above it
        use crate::model::{CoefficientBranch, CoefficientFn, Interval, MomentProvider, WeightedBranch};
        let br = CoefficientBranch::new(CoefficientFn::constant(0.5), CoefficientFn::constant(0.9)).unwrap();
        let spec = PerpetuitySpec::new(
            "bad-hint",
            vec![WeightedBranch { weight: 1.0, branch: br }],
            Some(Interval { lo: 0.0, hi: 1.0 }),
            0.5,
            MomentProvider::SupportBound { lo: 0.0, hi: 1.0 },
        )
        .unwrap();
        let plan = IterationPlan::new(spec, DiscretisationSchedule::polynomial(1), 4);
        assert!(matches!(run::<f64>(&plan), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn memory_budget_is_enforced() {
        let mut plan = IterationPlan::new(presets::quickselect(), DiscretisationSchedule::polynomial(3), 80);
        plan.memory_budget = 1 << 20;
        assert!(matches!(plan.validate(), Err(Error::MemoryBudget { .. })));
    }

    #[test]
    fn fast_floor_matches_floor() {
        for y in [-2.5, -2.0, -0.1, 0.0, 0.3, 1.0, 7.999999, 1e9 + 0.5] {
            assert_eq!(fast_floor(y), y.floor() as i64);
        }
    }
}
