//! Central finite-difference gradient auditing.
//!
//! The checker rebuilds the graph from scratch for every probe, so it is
//! independent of the backward pass it verifies.

use super::tape::{Node, Tape};
use super::tensor::Tensor;

/// Step size used throughout the gradient audits.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst probe seen by a check run.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes: usize,
    /// (input index, element index) of the worst probe.
    pub worst: Option<(usize, usize)>,
}

/// Relative error with a floor so near-zero pairs compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

/// Checks the tape gradient of `build` against central finite differences at
/// the listed `(input, element)` coordinates. `build` must construct a scalar
/// loss from leaves created in the order of `inputs`.
pub fn check_at(
    build: &mut dyn FnMut(&mut Tape, &[Node]) -> Node,
    inputs: &[Tensor],
    coords: &[(usize, usize)],
    h: f64,
) -> GradCheckReport {
    let analytic: Vec<Option<Tensor>> = {
        let mut tape = Tape::new();
        let nodes: Vec<Node> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &nodes);
        let grads = tape.backward(loss).expect("scalar loss");
        nodes.iter().map(|&n| grads.get(n).cloned()).collect()
    };
    let mut report = GradCheckReport { max_rel_err: 0.0, probes: 0, worst: None };
    let mut values = inputs.to_vec();
    for &(ti, ei) in coords {
        let orig = values[ti].data()[ei];
        values[ti].data_mut()[ei] = orig + h;
        let fp = {
            let mut tape = Tape::new();
            let nodes: Vec<Node> = values.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = build(&mut tape, &nodes);
            tape.value(loss).item()
        };
        values[ti].data_mut()[ei] = orig - h;
        let fm = {
            let mut tape = Tape::new();
            let nodes: Vec<Node> = values.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = build(&mut tape, &nodes);
            tape.value(loss).item()
        };
        values[ti].data_mut()[ei] = orig;

        let fd = (fp - fm) / (2.0 * h);
        let an = analytic[ti].as_ref().map(|g| g.data()[ei]).unwrap_or(0.0);
        let err = rel_err(an, fd);
        report.probes += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some((ti, ei));
        }
    }
    report
}

/// Checks every element of every input.
pub fn check_all(
    build: &mut dyn FnMut(&mut Tape, &[Node]) -> Node,
    inputs: &[Tensor],
    h: f64,
) -> GradCheckReport {
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.numel()).map(move |ei| (ti, ei)))
        .collect();
    check_at(build, inputs, &coords, h)
}
