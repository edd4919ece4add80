#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]
//! Deterministic core of the rehabloop feedback engine.
//!
//! Clinical prescriptions are parsed into kinematic [`constraints`], streamed
//! landmark frames are measured by [`kinematics`], classified and debounced by
//! [`feedback`], and the whole loop is driven by [`session`]. The
//! [`synthesis`] module turns constraints into a demonstration-video prompt
//! and [`trajectory`] generates synthetic landmark streams with known angles.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. IO, wire formats and the CLI live in the `rehabloop` crate.

extern crate alloc;

pub mod constraints;
pub mod feedback;
pub mod kinematics;
pub mod session;
pub mod synthesis;
pub mod trajectory;

mod fmt_num;
