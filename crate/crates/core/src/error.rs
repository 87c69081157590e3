use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("schedule value s({n}) overflows the integer range")]
    ScheduleOverflow { n: u32 },

    #[error("not a contraction at p = {p}: xi = {xi}")]
    NotContraction { p: u32, xi: f64 },

    #[error("no feasible p in the requested range (all non-contractive)")]
    NoFeasibleP,

    #[error("schedule too aggressive for contraction factor: gamma = {gamma} >= 1/xi = {limit}")]
    ScheduleTooAggressive { gamma: f64, limit: f64 },

    #[error("target index {k} outside lattice support [{k_min}, {k_max}] at step {n}")]
    SupportViolation { n: u32, k: i64, k_min: i64, k_max: i64 },

    #[error("memory budget exceeded: {needed} bytes needed, {budget} allowed")]
    MemoryBudget { needed: usize, budget: usize },

    #[error("averaging window exceeds support: d = {d}, atoms = {atoms}")]
    WindowExceedsSupport { d: u64, atoms: usize },

    #[error("lattice too coarse for density extraction: optimal d = {optimal_d}")]
    LatticeTooCoarse { optimal_d: f64 },

    #[error("bootstrap did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}
