pub mod agreement;
pub mod cohort;
pub mod hist;
pub mod quantify;
pub mod register;
pub mod synth;
