#![allow(dead_code)]

pub mod align_oracle;
pub mod beam_check;
pub mod clm_oracle;
pub mod clm_paths;
pub mod exhaustive;
pub mod fixtures;
pub mod kn_oracle;
