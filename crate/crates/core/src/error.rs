use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the algorithmic core can report.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Matrix is not square or has fewer than two states.
    BadShape { rows: usize, cols: usize },
    NegativeEntry { row: usize, col: usize, value: f64 },
    RowSumViolation { row: usize, sum: f64 },
    NonFinite { what: &'static str },
    NotErgodic,
    /// Linear system could not be solved (a non-ergodic chain slipped through).
    SingularSystem,
    /// `p(i) > 0` while `q(i) = 0`.
    SupportViolation { index: usize },
    LengthMismatch { left: usize, right: usize },
    DomainError { what: &'static str, value: f64 },
    TiedBestArm { gap: f64 },
    /// TPM bank index 0 must hold the unique best-arm TPM.
    BestTpmNotFirst { best: usize },
    NotMutuallyContinuous { first: usize, second: usize },
    NotAPermutation,
    TooManyArms { arms: usize, max: usize },
    TooManyStates { states: usize, max: usize },
    /// The delay bound must exceed the number of arms.
    DelayBoundTooSmall { max_delay: usize, arms: usize },
    IllegalAction { arm: usize, forced: usize },
    DelayOverflow { arm: usize },
    UnknownState,
    Infeasible,
    Unbounded,
    NumericalBreakdown { detail: &'static str },
    ZeroMarginal { state: usize },
    ImpossibleObservation { arm: usize },
    ZeroLikelihood { arm: usize },
    InvalidParameter { name: &'static str, value: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadShape { rows, cols } => {
                write!(f, "expected a square matrix with at least 2 states, got {rows}x{cols}")
            }
            Self::NegativeEntry { row, col, value } => {
                write!(f, "negative entry {value} at ({row}, {col})")
            }
            Self::RowSumViolation { row, sum } => write!(f, "row {row} sums to {sum}, not 1"),
            Self::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Self::NotErgodic => write!(f, "chain is not ergodic (irreducible and aperiodic)"),
            Self::SingularSystem => write!(f, "singular linear system"),
            Self::SupportViolation { index } => {
                write!(f, "support violation at index {index}: p > 0 but q = 0")
            }
            Self::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Self::DomainError { what, value } => write!(f, "{what} = {value} is out of domain"),
            Self::TiedBestArm { gap } => {
                write!(f, "best arm is not unique (mean gap {gap:e} below 1e-10)")
            }
            Self::BestTpmNotFirst { best } => {
                write!(f, "TPM {best} has the largest mean; the best-arm TPM must be listed first")
            }
            Self::NotMutuallyContinuous { first, second } => {
                write!(f, "TPMs {first} and {second} have different zero patterns")
            }
            Self::NotAPermutation => write!(f, "assignment is not a permutation of the arms"),
            Self::TooManyArms { arms, max } => write!(f, "{arms} arms exceeds the limit of {max}"),
            Self::TooManyStates { states, max } => {
                write!(f, "{states} chain states exceeds the limit of {max}")
            }
            Self::DelayBoundTooSmall { max_delay, arms } => {
                write!(f, "maximum delay {max_delay} must exceed the arm count {arms}")
            }
            Self::IllegalAction { arm, forced } => {
                write!(f, "arm {arm} selected while arm {forced} is forced")
            }
            Self::DelayOverflow { arm } => write!(f, "delay of arm {arm} would exceed the bound"),
            Self::UnknownState => write!(f, "state is not in the enumerated state space"),
            Self::Infeasible => write!(f, "linear program is infeasible"),
            Self::Unbounded => write!(f, "linear program is unbounded"),
            Self::NumericalBreakdown { detail } => write!(f, "numerical breakdown: {detail}"),
            Self::ZeroMarginal { state } => write!(f, "zero state marginal at state {state}"),
            Self::ImpossibleObservation { arm } => {
                write!(f, "initial observation of arm {arm} has probability zero")
            }
            Self::ZeroLikelihood { arm } => {
                write!(f, "observation on arm {arm} has zero likelihood under some configuration")
            }
            Self::InvalidParameter { name, value } => write!(f, "invalid {name}: {value}"),
        }
    }
}

impl core::error::Error for Error {}
