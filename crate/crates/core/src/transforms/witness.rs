//! Small fixed models exhibiting effects that random instances only show
//! generically: the observer effect, gauge dependence of decohered models,
//! and the failure of conditional independence across coherent edges.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::models::{BornMachine, DecoheredBM};
use crate::network::{GaugeTransform, NetworkBuilder};
use crate::tensor::DenseTensor;

fn hadamard() -> DenseTensor {
    let h = FRAC_1_SQRT_2;
    DenseTensor::real_matrix(&[vec![h, h], vec![h, -h]]).expect("2x2")
}

fn identity() -> DenseTensor {
    DenseTensor::real_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).expect("2x2")
}

/// Two cores `A` (modes `x`, `h`) and `B` (modes `h`, `y`).
fn chain(a: DenseTensor, b: DenseTensor) -> BornMachine {
    let net = NetworkBuilder::new()
        .edge("x", 2)
        .edge("h", 2)
        .edge("y", 2)
        .node("A", &["x", "h"], a)
        .node("B", &["h", "y"], b)
        .visible_order(&["x", "y"])
        .build();
    BornMachine::new(net).expect("valid witness")
}

/// Hidden edge of every witness.
pub const WITNESS_EDGE: &str = "h";

/// Born machine with two Hadamard cores: its amplitude is the identity, so
/// `x = y` always, but observing `h` makes `x` and `y` independent and
/// uniform. Total variation 1/2.
pub fn observer_witness() -> BornMachine {
    chain(hadamard(), hadamard())
}

/// Identity cores with `h` decohered and a Hadamard gauge on `h`: the gauge
/// leaves the Born distribution alone but moves the decohered distribution
/// from the diagonal to uniform. Total variation 1/2.
pub fn gauge_witness() -> (DecoheredBM, GaugeTransform) {
    let m = DecoheredBM::new(chain(identity(), identity()), BTreeSet::from([WITNESS_EDGE.to_string()]))
        .expect("hidden edge");
    let g = GaugeTransform {
        edge: WITNESS_EDGE.into(),
        matrix: hadamard(),
    };
    (m, g)
}
