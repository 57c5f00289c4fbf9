pub mod error;
pub mod linalg;
pub mod par;
pub mod spectral;
pub mod noise;
pub mod ou;
pub mod wave_operator;
pub mod integrators;
pub mod lyapunov_perron;
