//! Trajectory-driven stability certification.
//!
//! Given a time-stamped log of reference and measured state vectors, this
//! crate learns a state-dependent quadratic Lyapunov candidate
//! `V(xi) = xi' Q(xi) xi` with `Q = L L'` produced by a small neural network,
//! then decides whether the observed closed-loop behaviour satisfies a
//! discretized decrease condition `Vdot <= epsilon` within a configurable
//! violation budget. No dynamics model is required; the pipeline sees only
//! the logged references and states.
//!
//! Pipeline stages, in data-flow order:
//!
//! 1. [`trajectory`] parses logs, forms the tracking error `e = r - x`,
//!    differentiates it numerically, and stacks `xi = [e; edot]`.
//! 2. [`lyapunov`] assembles a lower-triangular factor `L` from raw network
//!    outputs and evaluates `V = ||L' xi||^2` plus its exact gradient in `L`.
//! 3. [`network`] is a hand-rolled MLP (forward, reverse-mode backward,
//!    Adam) mapping `xi` to the raw factor entries.
//! 4. [`certifier`] wires the chain together: `V` along the trajectory,
//!    discrete `Vdot`, hinge loss, end-to-end gradients, training, and the
//!    certificate decision.
//! 5. [`sim`] generates deterministic synthetic fixtures with analytic
//!    ground truth so everything is testable without robot data.

pub mod certifier;
pub mod lyapunov;
pub mod network;
pub mod sim;
pub mod trajectory;
