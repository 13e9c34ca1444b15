//! Well-founded semantics for safe normal logic programs, computed with the
//! alternating fixpoint on an embedded MapReduce engine.
//!
//! ```
//! use wfsmr::fixpoint::{wfs_optimized, Prepared, SolverConfig};
//! use wfsmr::mapreduce::Engine;
//! use wfsmr::program::{parse_facts, parse_program};
//!
//! let program = parse_program("win(X) :- move(X,Y), not win(Y).").unwrap();
//! let facts = parse_facts("move(1,2). move(2,1). move(2,3).").unwrap();
//! let prepared = Prepared::new(&program, &facts).unwrap();
//! let model = wfs_optimized(&Engine::sequential(), &prepared, &SolverConfig::default()).unwrap();
//! assert_eq!(model.render_true(), "move(1,2).\nmove(2,1).\nmove(2,3).\nwin(2).\n");
//! assert_eq!(model.render_undefined(), "");
//! ```

pub mod bench;
pub mod fixpoint;
pub mod mapreduce;
pub mod operators;
pub mod planner;
pub mod program;
pub mod store;
