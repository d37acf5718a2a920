//! Assemble the block-diagonal Fubini-Study metric for a small two-layer
//! circuit and print the per-layer covariance blocks.

use qfed::ansatz::{AnsatzLayer, EntanglerWall, RotationSpec};
use qfed::grad::{assemble_metric, natural_direction, GradientVector};
use qfed::state::{PauliAxis, StateVector};
use qfed::{LayeredAnsatz, ParameterVector};

fn main() -> qfed::Result<()> {
    // Two parametric layers of two rotations each: the metric splits into
    // two 2x2 blocks, one per layer, measured on the state entering it.
    let layers = vec![
        AnsatzLayer {
            wall: EntanglerWall { pairs: vec![(0, 1)] },
            rotations: vec![
                RotationSpec { axis: PauliAxis::Z, qubit: 0, param_index: 0 },
                RotationSpec { axis: PauliAxis::Z, qubit: 1, param_index: 1 },
            ],
        },
        AnsatzLayer {
            wall: EntanglerWall { pairs: vec![(1, 2)] },
            rotations: vec![
                RotationSpec { axis: PauliAxis::Y, qubit: 1, param_index: 2 },
                RotationSpec { axis: PauliAxis::X, qubit: 2, param_index: 3 },
            ],
        },
    ];
    let ansatz = LayeredAnsatz::new(3, 1, layers)?;
    let params = ParameterVector::new(vec![0.3, -0.6, 1.2, 0.4])?;
    let input = {
        let mut s = StateVector::zero_state(3)?;
        s = s.apply_single(&qfed::SingleQubitGate::ry(0.7), 0)?;
        s.apply_single(&qfed::SingleQubitGate::ry(1.9), 2)?
    };

    let metric = assemble_metric(&ansatz, &params, &input)?;
    for (l, block) in metric.blocks().iter().enumerate() {
        println!("block {} ({}x{}):", l + 1, block.nrows(), block.ncols());
        for i in 0..block.nrows() {
            let row: Vec<String> =
                (0..block.ncols()).map(|j| format!("{:+.6}", block[(i, j)])).collect();
            println!("  [{}]", row.join(", "));
        }
    }

    // Preconditioning a gradient solves one small system per block.
    let grad = GradientVector::new(vec![0.1, -0.2, 0.05, 0.3])?;
    let direction = natural_direction(&metric, &grad, 1e-6)?;
    println!("gradient:          {:?}", grad.values());
    println!("natural direction: {:?}", direction.values());
    Ok(())
}
