pub mod cdiff;
pub mod channel;
pub mod gamn;
pub mod gradients;
pub mod manifold;
pub mod metrics;
pub mod nets;
