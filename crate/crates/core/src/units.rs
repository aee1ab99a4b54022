//! Unit conversion factors to SI.

pub const BAR: f64 = 1e5;
pub const CENTIPOISE: f64 = 1e-3;
pub const DAY: f64 = 86_400.0;
pub const DARCY: f64 = 9.869_233e-13;
pub const MILLIDARCY: f64 = DARCY * 1e-3;
