//! Minimize 1 - <Z> after RY(theta)|0> from theta = 2.5 with plain gradient
//! descent and with metric-preconditioned descent at the same learning
//! rate, and count iterations to loss < 1e-3.

use qfed::ansatz::{AnsatzLayer, EntanglerWall, RotationSpec};
use qfed::grad::{assemble_metric, parameter_shift_gradient};
use qfed::optim::{qngd_step, sgd_step};
use qfed::state::{PauliAxis, PauliObservable, StateVector};
use qfed::{LayeredAnsatz, ParameterVector};

fn main() -> qfed::Result<()> {
    let ansatz = LayeredAnsatz::new(
        1,
        1,
        vec![AnsatzLayer {
            wall: EntanglerWall::default(),
            rotations: vec![RotationSpec { axis: PauliAxis::Y, qubit: 0, param_index: 0 }],
        }],
    )?;
    let input = StateVector::zero_state(1)?;
    let loss = |p: &ParameterVector| -> f64 {
        let state = ansatz.evaluate(p, &input).unwrap();
        1.0 - state.expectation(PauliObservable::z(0)).unwrap()
    };

    let eta = 0.05;
    let budget = 2000;

    let mut sgd_iters = None;
    let mut params = ParameterVector::new(vec![2.5])?;
    for i in 1..=budget {
        let grad = parameter_shift_gradient(loss, &params)?;
        params = sgd_step(&params, &grad, eta)?;
        if loss(&params) < 1e-3 {
            sgd_iters = Some(i);
            break;
        }
    }

    let mut qngd_iters = None;
    let mut params = ParameterVector::new(vec![2.5])?;
    for i in 1..=budget {
        let grad = parameter_shift_gradient(loss, &params)?;
        let metric = assemble_metric(&ansatz, &params, &input)?;
        params = qngd_step(&params, &grad, &metric, eta, 1e-6)?;
        if loss(&params) < 1e-3 {
            qngd_iters = Some(i);
            break;
        }
    }

    println!("iterations to loss < 1e-3 at eta = {eta}:");
    println!("  sgd:  {:?}", sgd_iters);
    println!("  qngd: {:?}", qngd_iters);
    println!(
        "the metric for this circuit is the constant 1/4, so the natural step \
         is four times the plain one"
    );
    Ok(())
}
