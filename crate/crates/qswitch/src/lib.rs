//! Throughput analysis for a quantum switch that distributes end-to-end
//! entanglement over noisy links.
//!
//! The switch serves `K` users over heralded links that deliver a random
//! number of imperfect EPR pairs per slot. Entanglement swapping stitches
//! link pairs into end-to-end pairs, and recurrence purification trades
//! pairs for fidelity, either before swapping (purify-swap, PS) or after
//! (swap-purify, SP). This crate computes, for either ordering:
//!
//! * the fidelity algebra of swapping and purification rounds ([`bell`]),
//! * yield distributions of purification schedules ([`purify`]),
//! * per-link pair-count laws before and after purification ([`link`]),
//! * the capacity region of request rates and its boundary ([`capacity`]),
//! * a slotted max-weight simulator for stability experiments ([`sim`]).
//!
//! [`config`] holds the flat key-value configuration format shared by the
//! CLI, and [`model`] assembles a full switch model from a config.
//!
//! ```
//! use qswitch::bell::{swap_fidelity, swap_fidelity_inverse};
//!
//! // A pair of F = 0.9 Werner links swaps into an F ≈ 0.813 end-to-end pair,
//! // so hitting an end-to-end threshold of 0.85 needs links purified to ≈ 0.921.
//! let f_e2e = swap_fidelity(0.9).unwrap();
//! assert!((f_e2e - 0.813333333333333).abs() < 1e-12);
//! let f_link = swap_fidelity_inverse(0.85).unwrap();
//! assert!((f_link - 0.920820393249937).abs() < 1e-12);
//! ```

pub mod bell;
pub mod capacity;
pub mod config;
pub mod link;
pub mod model;
pub mod numfmt;
pub mod pairs;
pub mod purify;
pub mod sim;

pub(crate) mod par;

// Every code block in the guide doubles as a doctest so the book cannot
// drift from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/bell-states.md")]
    mod bell_states {}
    #[doc = include_str!("../../../book/src/purification.md")]
    mod purification {}
    #[doc = include_str!("../../../book/src/yield.md")]
    mod yield_laws {}
    #[doc = include_str!("../../../book/src/links.md")]
    mod links {}
    #[doc = include_str!("../../../book/src/capacity.md")]
    mod capacity_regions {}
    #[doc = include_str!("../../../book/src/scheduling.md")]
    mod scheduling {}
}
