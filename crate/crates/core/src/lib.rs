//! Simulated directional-modulation transmit testbed.
//!
//! A small array sends independent DPSK messages to several receivers at
//! once. The channel matrix is estimated from amplitude-only measurements,
//! per-symbol transmit weights come from its pseudoinverse, and a BER harness
//! measures how asynchronous detection turns single spurious symbols into long
//! runs of positional errors.

pub mod calibration;
pub mod channel;
pub mod experiments;
pub mod fec;
pub mod modem;
pub mod phrases;
pub mod precoder;
pub mod scenario;
pub mod seed;
pub mod testbed;
