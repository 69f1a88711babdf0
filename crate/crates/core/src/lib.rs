//! Lyapunov spectra of rational maps through the thermodynamic formalism.
//!
//! See the guide in `book/` for a tour of the modules.

pub mod error;
pub mod map;
pub mod poly;
pub mod sphere;
pub mod precision;
pub mod tree;
pub mod pressure;
pub mod spectrum;
pub mod orbit;
pub mod pullback;
pub mod conformal;
pub mod gds;
pub mod wmeasure;
pub mod cli;

// The guide's code listings run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pressure.md")]
    mod pressure {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/orbits.md")]
    mod orbits {}
    #[doc = include_str!("../../../book/src/gds.md")]
    mod gds {}
    #[doc = include_str!("../../../book/src/conformal.md")]
    mod conformal {}
    #[doc = include_str!("../../../book/src/wmeasure.md")]
    mod wmeasure {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
