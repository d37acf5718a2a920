//! Encode classical feature vectors into product states, measure Pauli
//! expectations, and compare states with the Fubini-Study distance.

use qfed::state::PauliObservable;
use qfed::tpe_encode;

fn main() -> qfed::Result<()> {
    // Each feature in [0, 1] becomes one qubit with amplitudes
    // [cos(pi x / 2), sin(pi x / 2)].
    let a = tpe_encode(&[0.0, 0.5, 1.0])?;
    println!("amplitudes of encode([0, 0.5, 1]):");
    for (i, amp) in a.amplitudes().iter().enumerate() {
        if amp.norm() > 1e-12 {
            println!("  |{i:03b}> {:.6}", amp.re);
        }
    }

    for q in 0..3 {
        println!("<Z_{q}> = {:+.6}", a.expectation(PauliObservable::z(q))?);
    }

    // The encoding is injective: nearby feature vectors stay distinguishable.
    let b = tpe_encode(&[0.0, 0.5, 0.9])?;
    let c = tpe_encode(&[1.0, 0.5, 0.0])?;
    println!("distance to [0, 0.5, 0.9]: {:.6}", a.fubini_study_distance(&b)?);
    println!("distance to [1, 0.5, 0.0]: {:.6}", a.fubini_study_distance(&c)?);
    println!("distance to itself:        {:.2e}", a.fubini_study_distance(&a)?);
    Ok(())
}
