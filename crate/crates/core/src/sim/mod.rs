//! Deterministic transducer stand-in and synthetic corpus generation.

mod encoder;
mod scenario;
mod scorer;

pub use encoder::EncoderOutput;
pub use scenario::{
    files, load_references, synthesize_scenario, ClassSpec, NoiseSpec, Reference, Scenario, ScenarioSpec, TestUtterance,
};
pub use scorer::FntScorer;
