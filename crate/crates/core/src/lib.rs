pub mod demand;
pub mod heuristics;
pub mod inliner;
pub mod ir;
pub mod metrics;
pub mod pipeline;
pub mod profiler;
pub mod region;
