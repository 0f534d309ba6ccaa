//! Coherence-vector simulation of clocked quantum-dot cellular automata
//! with per-cell energy accounting.

pub mod clocking;
pub mod consts;
pub mod electrostatics;
pub mod energy;
pub mod engine;
pub mod harness;
pub mod layout;
pub mod params;
pub mod report;

pub use clocking::{ClockConfig, ClockPhase, SlopeShape};
pub use electrostatics::{kink_energy, NeighborGraph};
pub use energy::{landauer_limit, EnergyLedger, EnergyReport};
pub use engine::{run, Integrator, RawTrace, SimError, SimulationParams, StimulusPlan};
pub use layout::{Cell, CellRole, ClockZone, Layout, Polarity, TruthTable};
pub use params::TechnologyParams;
