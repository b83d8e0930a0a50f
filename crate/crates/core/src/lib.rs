pub mod artifact;
pub mod domain;
pub mod evaluate;
pub mod featurize;
pub mod learners;
pub mod matrix;
pub mod pipeline;
pub mod store;
pub mod synthgen;
pub mod tempcv;
pub mod textmine;
