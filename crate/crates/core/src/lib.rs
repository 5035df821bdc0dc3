//! Opportunity-charging scheduling for battery-electric bus fleets.

pub mod benders;
pub mod direct;
pub mod formulation;
pub mod heuristic3s;
pub mod lp;
pub mod mip;
pub mod oracle;
pub mod model;
pub mod notional;
pub mod plan;
pub mod report;
pub mod simulate;
