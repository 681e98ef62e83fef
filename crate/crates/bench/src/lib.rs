//! Fixtures shared by the benchmarks.

use veridl_core::dnn::synthetic::linearly_separable;
use veridl_core::{Activation, CodecParams, Instance, Mode, NetworkConfig};

/// An honest one-hidden-layer sigmoid instance on separable data.
pub fn fixture(input_dim: usize, width: usize, samples: usize, mode: Mode) -> Instance {
    let params = CodecParams::default();
    let config = NetworkConfig::new(input_dim, vec![width], Activation::Sigmoid);
    let data = linearly_separable(samples, input_dim, 7).quantize(&params).expect("grid values encode");
    Instance::honest(&config, &params, data, 7, mode).expect("honest run")
}
