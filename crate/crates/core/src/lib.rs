pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod loss;
pub mod meta_learner;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod preprocess;
pub mod tensor;

mod binio;
