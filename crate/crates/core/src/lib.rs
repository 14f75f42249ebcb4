//! Primal-dual iLQR for unconstrained discrete-time optimal control.
//!
//! The solver is an SQP method over a direct multiple shooting transcription:
//! states, controls and dynamics multipliers are all decision variables, each
//! Newton-KKT step is an LQR problem, and steps are globalized by an Armijo
//! backtracking line search on an augmented-Lagrangian merit function.
//!
//! * [`scan`] - forward and reverse associative scans
//! * [`lqr`] - sequential and scan-based LQR solves with dual recovery
//! * [`nlp`] - the problem interface and the SQP ingredients built from it
//! * [`sqp`] - the outer iteration
//! * [`problems`] - built-in benchmark problems and a derivative checker

pub mod lqr;
pub mod nlp;
pub mod problems;
pub mod scan;
pub mod sqp;
