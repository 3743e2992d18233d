// SPDX-License-Identifier: Apache-2.0

//! Bit-exact integer model of the hardware datapath.

mod datapath;
mod format;
mod memory;
mod model;

pub use datapath::*;
pub use format::*;
pub use memory::*;
pub use model::*;
