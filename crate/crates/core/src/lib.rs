//! Simulator and optimizer for dimmable indoor visible-light-communication
//! networks.
//!
//! The crate models a rectangular room with a ceiling grid of LED luminaires
//! and a plane of photodiode receivers, and answers one question: given a
//! target dimming level, which LEDs should carry data and how much equivalent
//! power should each user's zero-forcing stream get, so that the sum-rate is
//! maximized while the emitted light stays within the LEDs' dynamic range and
//! the illuminance stays uniform?
//!
//! Capabilities:
//!
//! - Lambertian line-of-sight channel gains, shot/ambient/thermal receiver
//!   noise, and point illuminance ([`channel`]).
//! - User-centric amorphous cells: greedy distance clustering of users plus
//!   two-phase gain-based LED association ([`cells`]).
//! - Hybrid dimming arithmetic: activated-LED count, DC bias, and amplitude
//!   headroom for a target dimming fraction ([`dimming`]).
//! - Receiver-plane illuminance sampling and the CV(RMSE) uniformity metric
//!   ([`illumination`]).
//! - Zero-forcing precoding via an SVD pseudo-inverse, SINR, sum-rate, and
//!   frequency-reuse bandwidth efficiency ([`precoding`]).
//! - Penalized continuous relaxation of the binary LED-selection subproblem
//!   with a projected-ascent solver ([`selector`]).
//! - Lagrangian dual-subgradient power allocation under a strengthened
//!   per-LED amplitude constraint ([`allocator`]).
//! - The alternating selection/allocation loop plus amplitude-dimming and
//!   duty-cycle-dimming baselines ([`orchestrator`]).
//!
//! All randomness is seeded and every solve is deterministic given its
//! inputs, so experiments reproduce bit-for-bit.

pub mod allocator;
pub mod cells;
pub mod channel;
pub mod dimming;
pub mod illumination;
pub mod orchestrator;
pub mod precoding;
pub mod scenario;
pub mod selector;

pub use allocator::{AllocationState, CellProblem, NetworkAllocation};
pub use cells::{AssociationMatrix, CellPartition};
pub use dimming::DimmingConfig;
pub use illumination::IlluminanceField;
pub use orchestrator::{FrMode, RunResult, Scheme};
pub use precoding::Precoder;
pub use scenario::{Point3, Scenario, SolverSettings};
pub use selector::{SelectionOutcome, SelectionState};

/// Unified error type for scenario validation and solver failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration parse error: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate geometry: emitter and receiver coincide")]
    DegenerateGeometry,
    #[error("dimming target {eta} activates no LEDs")]
    InfeasibleDimming { eta: f64 },
    #[error("dimming target {eta} needs DC bias {bias} A above the upper current bound {high} A")]
    BiasAboveRange { eta: f64, bias: f64, high: f64 },
    #[error("user {user} has no line-of-sight LED among the considered set")]
    NoLineOfSight { user: usize },
    #[error("effective channel is rank-deficient (rank {rank} < {users} users)")]
    SingularChannel { rank: usize, users: usize },
    #[error("mean illuminance is zero; uniformity is undefined")]
    UndefinedCv,
    #[error("no activation of {count} LEDs keeps every user covered")]
    NoFeasibleActivation { count: usize },
    #[error("frequency-reuse factor {requested} does not match the {cells}-cell partition")]
    ReuseMismatch { requested: u32, cells: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
