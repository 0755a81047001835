//! Black-box hyper-parameter tuning for optimization solvers.
//!
//! The crate is organized bottom-up:
//!
//! - [`space`] and [`halton`]: search spaces, unit-cube genomes, initialization.
//! - [`de`]: differential-evolution primitives.
//! - [`tuner`]: ask/tell tuners (random search, classic DE, JADE, SHADE,
//!   L-SHADE, LJADE).
//! - [`bench`]: benchmark functions with known optima.
//! - [`target`]: trial execution against functions, a synthetic solver or an
//!   external command.
//! - [`journal`]: the append-only JSONL experiment journal.
//! - [`orchestrator`]: experiment lifecycle, worker slots and stop control.

pub mod bench;
pub mod de;
pub mod halton;
pub mod journal;
pub mod orchestrator;
pub mod space;
pub mod target;
pub mod tuner;
