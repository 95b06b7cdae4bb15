pub mod fit_duffing;
pub mod limits;
pub mod reconstruct;
pub mod simulate;
pub mod sweep;
