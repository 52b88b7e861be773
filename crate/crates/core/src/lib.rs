//! Shapes as stacks of transformation groups, a noisy generative model of
//! their drawings, and reversible-jump MCMC to recover the stack from a
//! binary image.
//!
//! ```
//! use wreathe::grammar::parse;
//! use wreathe::priors::BlurParams;
//! use wreathe::renderer::{render, RenderConfig};
//!
//! let square = parse("[(Trans Y,[0.5,0.5]); (Trans X,[-0.5,0.5]); (Rot 4,[0..3])]").unwrap();
//! let img = render(&square, None, BlurParams::NONE, &RenderConfig::default()).unwrap();
//! assert!(img.ink_mass() > 0.0);
//! ```

pub mod eval;
pub mod geometry;
pub mod grammar;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod priors;
pub mod renderer;
pub mod wreath_process;
