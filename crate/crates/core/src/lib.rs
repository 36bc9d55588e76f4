//! Multi-proposer transaction fee mechanisms: rule composition, incentive
//! checks by exhaustive search, and equilibrium welfare estimation.

pub mod bp_game;
pub mod game;
pub mod matroid;
pub mod mechanisms;
pub mod rational;
pub mod rng;
pub mod scenarios;
pub mod user_game;

pub use rational::Rational;
