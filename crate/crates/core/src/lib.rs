//! Nonparametric estimation of Hawkes process interaction functions by
//! penalized least-squares contrast over families of piecewise-constant
//! models, with simulation, model selection, spectral validation and a
//! benchmark harness.

pub mod bench;
pub mod contrast;
pub mod error;
pub mod events;
pub mod families;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod select;
pub mod simulate;
pub mod spectral;
pub mod step;
pub mod truth;

pub use contrast::{build_gram, Estimator, GramSystem};
pub use error::{Error, Result};
pub use events::{load_events, DuplicatePolicy, EventSequence};
pub use families::{ContrastCurve, Family, FitContext, Strategy, StrategyKind};
pub use model::{ClipBounds, Model, Partition};
pub use select::{run_method, MethodConfig, PenaltySpec, SelectionReport};
pub use simulate::{simulate, SimConfig, SimMethod};
pub use step::StepFunction;
pub use truth::{Candidate, GaussianMixture, GroundTruth, Intensity, Kernel};
