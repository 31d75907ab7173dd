//! Day-to-day route choice simulation on congested road networks.
//!
//! Populations of traveler agents (language-model backed, multinomial logit, perfectly
//! rational, uniform random or scripted) choose among fixed k-shortest route sets every day,
//! experience linear-congestion travel times and adapt through exponentially weighted
//! memories. Alongside the simulator sit switching-rate metrics, a logistic switching model
//! and reference equilibrium solvers.

// `!(x >= 0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod equilibrium;
pub mod llm;
pub mod metrics;
pub mod network;
pub mod regression;
pub mod routesets;
pub mod scalar;
pub mod sim;

pub use scalar::Scalar;

pub type Link64 = network::Link<f64>;
pub type Network64 = network::Network<f64>;
pub type LoadResult64 = network::LoadResult<f64>;
pub type RouteSet64 = routesets::RouteSet<f64>;
pub type DueSolution64 = equilibrium::DueSolution<f64>;
pub type FitResult64 = regression::FitResult<f64>;

pub type Link32 = network::Link<f32>;
pub type Network32 = network::Network<f32>;
pub type LoadResult32 = network::LoadResult<f32>;
pub type RouteSet32 = routesets::RouteSet<f32>;
pub type DueSolution32 = equilibrium::DueSolution<f32>;
pub type FitResult32 = regression::FitResult<f32>;
