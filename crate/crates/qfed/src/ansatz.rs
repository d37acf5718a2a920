//! Layered variational circuits: tensor-product input encoding, alternating
//! entangler walls and parametric rotation layers, depth-replicated blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{PauliAxis, SingleQubitGate, StateVector, MAX_QUBITS};

/// One parametric rotation inside a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationSpec {
    pub axis: PauliAxis,
    pub qubit: usize,
    pub param_index: usize,
}

/// Ordered CNOT pairs applied before a rotation layer. May be empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntanglerWall {
    pub pairs: Vec<(usize, usize)>,
}

/// A wall followed by the rotations it feeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnsatzLayer {
    pub wall: EntanglerWall,
    pub rotations: Vec<RotationSpec>,
}

/// Flat trainable parameters, radians. Always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite parameter value {bad}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Copy with `values[index] += delta`.
    pub fn shifted(&self, index: usize, delta: f64) -> Self {
        let mut v = self.0.clone();
        v[index] += delta;
        Self(v)
    }

    /// Euclidean distance to another parameter vector of equal length.
    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Circuit description: `V_L W_L ... V_1 W_1` acting on an encoded input.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredAnsatz {
    num_qubits: usize,
    depth: usize,
    layers: Vec<AnsatzLayer>,
    /// parameter index -> owning layer (0-based), built at construction
    param_layer: Vec<usize>,
}

/// JSON document form: per-layer walls and rotations as parallel arrays.
#[derive(Serialize, Deserialize)]
struct AnsatzDoc {
    num_qubits: usize,
    depth: usize,
    walls: Vec<Vec<(usize, usize)>>,
    rotations: Vec<Vec<RotationSpec>>,
}

impl LayeredAnsatz {
    pub fn new(num_qubits: usize, depth: usize, layers: Vec<AnsatzLayer>) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        let total: usize = layers.iter().map(|l| l.rotations.len()).sum();
        let mut param_layer = vec![usize::MAX; total];
        for (li, layer) in layers.iter().enumerate() {
            if layer.rotations.is_empty() {
                return Err(Error::Config(format!("rotation layer {li} is empty")));
            }
            for &(c, t) in &layer.wall.pairs {
                if c == t {
                    return Err(Error::Config(format!(
                        "wall {li} pairs qubit {c} with itself"
                    )));
                }
                if c >= num_qubits || t >= num_qubits {
                    return Err(Error::Config(format!(
                        "wall {li} pair ({c}, {t}) exceeds {num_qubits} qubits"
                    )));
                }
            }
            for rot in &layer.rotations {
                if rot.qubit >= num_qubits {
                    return Err(Error::Config(format!(
                        "rotation on qubit {} exceeds {num_qubits} qubits",
                        rot.qubit
                    )));
                }
                if rot.param_index >= total || param_layer[rot.param_index] != usize::MAX {
                    return Err(Error::Config(format!(
                        "parameter indices must be unique and contiguous in 0..{total}, \
                         index {} repeats or overflows",
                        rot.param_index
                    )));
                }
                param_layer[rot.param_index] = li;
            }
        }
        Ok(Self { num_qubits, depth, layers, param_layer })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of rotation layers L.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Total parameter count P.
    pub fn num_parameters(&self) -> usize {
        self.param_layer.len()
    }

    pub fn layers(&self) -> &[AnsatzLayer] {
        &self.layers
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = AnsatzDoc {
            num_qubits: self.num_qubits,
            depth: self.depth,
            walls: self.layers.iter().map(|l| l.wall.pairs.clone()).collect(),
            rotations: self.layers.iter().map(|l| l.rotations.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AnsatzDoc = serde_json::from_str(text)?;
        if doc.walls.len() != doc.rotations.len() {
            return Err(Error::Config(format!(
                "walls ({}) and rotations ({}) must pair up",
                doc.walls.len(),
                doc.rotations.len()
            )));
        }
        let layers = doc
            .walls
            .into_iter()
            .zip(doc.rotations)
            .map(|(pairs, rotations)| AnsatzLayer { wall: EntanglerWall { pairs }, rotations })
            .collect();
        Self::new(doc.num_qubits, doc.depth, layers)
    }

    fn check_params(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::Argument(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                params.len()
            )));
        }
        Ok(())
    }

    fn check_input(&self, input: &StateVector) -> Result<()> {
        if input.num_qubits() != self.num_qubits {
            return Err(Error::Argument(format!(
                "input has {} qubits, ansatz expects {}",
                input.num_qubits(),
                self.num_qubits
            )));
        }
        Ok(())
    }

    fn apply_wall(&self, layer: usize, state: &mut StateVector) {
        for &(c, t) in &self.layers[layer].wall.pairs {
            state.apply_cnot_mut(c, t).expect("wall validated at construction");
        }
    }

    /// Apply layer `layer`'s rotations; parameter `shift.0` gets `+shift.1`.
    fn apply_rotations(
        &self,
        layer: usize,
        params: &ParameterVector,
        shift: Option<(usize, f64)>,
        state: &mut StateVector,
    ) {
        for rot in &self.layers[layer].rotations {
            let mut theta = params.values()[rot.param_index];
            if let Some((idx, delta)) = shift {
                if idx == rot.param_index {
                    theta += delta;
                }
            }
            state
                .apply_single_mut(&SingleQubitGate::rotation(rot.axis, theta), rot.qubit)
                .expect("rotation validated at construction");
        }
    }

    /// Full forward pass `V_L W_L ... V_1 W_1 |input>`.
    pub fn evaluate(&self, params: &ParameterVector, input: &StateVector) -> Result<StateVector> {
        self.check_params(params)?;
        self.check_input(input)?;
        let mut state = input.clone();
        for l in 0..self.layers.len() {
            self.apply_wall(l, &mut state);
            self.apply_rotations(l, params, None, &mut state);
        }
        Ok(state)
    }

    /// State after `W_l` and before `V_l`, for 1-based layer index `l`.
    pub fn state_at_layer(
        &self,
        params: &ParameterVector,
        input: &StateVector,
        l: usize,
    ) -> Result<StateVector> {
        self.check_params(params)?;
        self.check_input(input)?;
        if l == 0 || l > self.layers.len() {
            return Err(Error::Argument(format!(
                "layer index must be in 1..={}, got {l}",
                self.layers.len()
            )));
        }
        let mut state = input.clone();
        for k in 0..l - 1 {
            self.apply_wall(k, &mut state);
            self.apply_rotations(k, params, None, &mut state);
        }
        self.apply_wall(l - 1, &mut state);
        Ok(state)
    }

    /// One forward pass that also records the state entering each rotation
    /// layer (after its wall). `prefixes[l]` is the 0-based layer `l` input.
    pub fn prefix_states(
        &self,
        params: &ParameterVector,
        input: &StateVector,
    ) -> Result<(Vec<StateVector>, StateVector)> {
        self.check_params(params)?;
        self.check_input(input)?;
        let mut prefixes = Vec::with_capacity(self.layers.len());
        let mut state = input.clone();
        for l in 0..self.layers.len() {
            self.apply_wall(l, &mut state);
            prefixes.push(state.clone());
            self.apply_rotations(l, params, None, &mut state);
        }
        Ok((prefixes, state))
    }

    /// Re-evaluate with `params[param_index] += delta`, resuming from the
    /// cached prefix of the layer owning that parameter. Writes into `out`.
    pub(crate) fn evaluate_shifted(
        &self,
        params: &ParameterVector,
        prefixes: &[StateVector],
        param_index: usize,
        delta: f64,
        out: &mut StateVector,
    ) {
        let start = self.param_layer[param_index];
        out.copy_from(&prefixes[start]);
        self.apply_rotations(start, params, Some((param_index, delta)), out);
        for l in start + 1..self.layers.len() {
            self.apply_wall(l, out);
            self.apply_rotations(l, params, None, out);
        }
    }
}

/// Tensor-product encoding: per-qubit amplitudes
/// `[cos(pi x_i / 2), sin(pi x_i / 2)]`, Kronecker-combined little-endian.
/// Injective on `[0, 1]^U`.
pub fn tpe_encode(features: &[f64]) -> Result<StateVector> {
    if features.is_empty() || features.len() > MAX_QUBITS {
        return Err(Error::Argument(format!(
            "feature count must be in 1..={MAX_QUBITS}, got {}",
            features.len()
        )));
    }
    for (i, &x) in features.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Argument(format!(
                "feature {i} = {x} outside [0, 1]; normalize inputs first"
            )));
        }
    }
    let mut amps = vec![num_complex::Complex64::new(1.0, 0.0)];
    for (i, &x) in features.iter().enumerate() {
        let angle = std::f64::consts::FRAC_PI_2 * x;
        let (c, s) = (angle.cos(), angle.sin());
        let mut next = vec![num_complex::Complex64::new(0.0, 0.0); 1 << (i + 1)];
        for (j, amp) in amps.iter().enumerate() {
            next[j] = amp * c;
            next[j | (1 << i)] = amp * s;
        }
        amps = next;
    }
    StateVector::from_amplitudes(amps)
}

/// Ring-entangled ansatz: each depth block is one CNOT ring wall
/// `(0,1),(1,2),...,(n-1,0)` followed by RX, RY, RZ rotation layers on every
/// qubit. Total parameters `P = 3 * num_qubits * depth`.
pub fn build_ring_ansatz(num_qubits: usize, depth: usize) -> Result<LayeredAnsatz> {
    if depth == 0 {
        return Err(Error::Config("depth must be at least 1".into()));
    }
    let ring: Vec<(usize, usize)> = match num_qubits {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        n => (0..n).map(|q| (q, (q + 1) % n)).collect(),
    };
    let mut layers = Vec::with_capacity(3 * depth);
    let mut param = 0;
    for _ in 0..depth {
        for (k, axis) in [PauliAxis::X, PauliAxis::Y, PauliAxis::Z].into_iter().enumerate() {
            let wall = if k == 0 {
                EntanglerWall { pairs: ring.clone() }
            } else {
                EntanglerWall::default()
            };
            let rotations = (0..num_qubits)
                .map(|qubit| {
                    let spec = RotationSpec { axis, qubit, param_index: param };
                    param += 1;
                    spec
                })
                .collect();
            layers.push(AnsatzLayer { wall, rotations });
        }
    }
    LayeredAnsatz::new(num_qubits, depth, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::PauliObservable;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn tpe_encode_zero_rotation() {
        let s = tpe_encode(&[0.0, 0.0]).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-15);
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn tpe_encode_endpoints() {
        let one = tpe_encode(&[1.0]).unwrap();
        assert!(one.amplitudes()[0].norm() < 1e-15);
        assert!((one.amplitudes()[1].re - 1.0).abs() < 1e-15);

        let half = tpe_encode(&[0.5]).unwrap();
        assert!((half.amplitudes()[0].re - SQRT_HALF).abs() < 1e-15);
        assert!((half.amplitudes()[1].re - SQRT_HALF).abs() < 1e-15);
    }

    #[test]
    fn tpe_encode_rejects_out_of_range() {
        assert!(tpe_encode(&[0.2, 1.1]).is_err());
        assert!(tpe_encode(&[-0.1]).is_err());
        assert!(tpe_encode(&[]).is_err());
    }

    #[test]
    fn ring_ansatz_parameter_counts() {
        assert_eq!(build_ring_ansatz(4, 1).unwrap().num_parameters(), 12);
        assert_eq!(build_ring_ansatz(8, 2).unwrap().num_parameters(), 48);
        assert!(matches!(build_ring_ansatz(4, 0), Err(Error::Config(_))));
    }

    #[test]
    fn ring_degenerates_for_two_qubits() {
        let ansatz = build_ring_ansatz(2, 1).unwrap();
        assert_eq!(ansatz.layers()[0].wall.pairs, vec![(0, 1)]);
        assert!(ansatz.layers()[1].wall.pairs.is_empty());
        assert_eq!(ansatz.num_layers(), 3);
    }

    #[test]
    fn zero_params_apply_walls_only() {
        let ansatz = build_ring_ansatz(2, 1).unwrap();
        let params = ParameterVector::zeros(ansatz.num_parameters());
        // CNOT on |00> acts trivially, rotations at angle 0 are the identity.
        let out = ansatz
            .evaluate(&params, &StateVector::zero_state(2).unwrap())
            .unwrap();
        assert!((out.amplitudes()[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_qubit_ry_matches_rotation_table() {
        let layer = AnsatzLayer {
            wall: EntanglerWall::default(),
            rotations: vec![RotationSpec { axis: PauliAxis::Y, qubit: 0, param_index: 0 }],
        };
        let ansatz = LayeredAnsatz::new(1, 1, vec![layer]).unwrap();
        let params = ParameterVector::new(vec![FRAC_PI_2]).unwrap();
        let out = ansatz
            .evaluate(&params, &StateVector::zero_state(1).unwrap())
            .unwrap();
        assert!((out.amplitudes()[0].re - SQRT_HALF).abs() < 1e-12);
        assert!((out.amplitudes()[1].re - SQRT_HALF).abs() < 1e-12);
    }

    #[test]
    fn state_at_layer_prefix_rules() {
        // Empty first wall: the layer-1 state is the input itself.
        let layer = AnsatzLayer {
            wall: EntanglerWall::default(),
            rotations: vec![RotationSpec { axis: PauliAxis::Y, qubit: 0, param_index: 0 }],
        };
        let ansatz = LayeredAnsatz::new(1, 1, vec![layer]).unwrap();
        let params = ParameterVector::new(vec![1.0]).unwrap();
        let input = tpe_encode(&[0.3]).unwrap();
        let s = ansatz.state_at_layer(&params, &input, 1).unwrap();
        assert_eq!(s, input);

        // Ring wall on |00> acts trivially.
        let ring = build_ring_ansatz(2, 1).unwrap();
        let params = ParameterVector::zeros(ring.num_parameters());
        let zero = StateVector::zero_state(2).unwrap();
        let s = ring.state_at_layer(&params, &zero, 1).unwrap();
        assert_eq!(s, zero);

        assert!(ring.state_at_layer(&params, &zero, 0).is_err());
        assert!(ring.state_at_layer(&params, &zero, 4).is_err());
    }

    #[test]
    fn state_at_layer_matches_truncated_subansatz() {
        let ansatz = build_ring_ansatz(2, 1).unwrap();
        let params =
            ParameterVector::new(vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9]).unwrap();
        let input = tpe_encode(&[0.2, 0.8]).unwrap();

        // Truncated circuit: layer 1 complete, then layer 2's (empty) wall.
        let truncated = LayeredAnsatz::new(
            2,
            1,
            vec![ansatz.layers()[0].clone()],
        )
        .unwrap();
        let prefix_params = ParameterVector::new(params.values()[..2].to_vec()).unwrap();
        let expect = truncated.evaluate(&prefix_params, &input).unwrap();

        let got = ansatz.state_at_layer(&params, &input, 2).unwrap();
        for (a, b) in got.amplitudes().iter().zip(expect.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn prefix_states_agree_with_state_at_layer() {
        let ansatz = build_ring_ansatz(3, 2).unwrap();
        let params = ParameterVector::new(
            (0..ansatz.num_parameters()).map(|i| 0.1 * i as f64 - 0.8).collect(),
        )
        .unwrap();
        let input = tpe_encode(&[0.1, 0.5, 0.9]).unwrap();
        let (prefixes, final_state) = ansatz.prefix_states(&params, &input).unwrap();
        assert_eq!(prefixes.len(), ansatz.num_layers());
        for l in 1..=ansatz.num_layers() {
            let expect = ansatz.state_at_layer(&params, &input, l).unwrap();
            assert_eq!(prefixes[l - 1], expect);
        }
        assert_eq!(final_state, ansatz.evaluate(&params, &input).unwrap());
    }

    #[test]
    fn evaluate_shifted_matches_full_reevaluation() {
        let ansatz = build_ring_ansatz(3, 2).unwrap();
        let params = ParameterVector::new(
            (0..ansatz.num_parameters()).map(|i| (i as f64).sin()).collect(),
        )
        .unwrap();
        let input = tpe_encode(&[0.4, 0.0, 0.7]).unwrap();
        let (prefixes, _) = ansatz.prefix_states(&params, &input).unwrap();
        let mut scratch = StateVector::zero_state(3).unwrap();
        for idx in [0, 7, ansatz.num_parameters() - 1] {
            ansatz.evaluate_shifted(&params, &prefixes, idx, FRAC_PI_2, &mut scratch);
            let expect = ansatz.evaluate(&params.shifted(idx, FRAC_PI_2), &input).unwrap();
            for (a, b) in scratch.amplitudes().iter().zip(expect.amplitudes()) {
                assert!((a - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let ansatz = build_ring_ansatz(4, 2).unwrap();
        let text = ansatz.to_json().unwrap();
        let back = LayeredAnsatz::from_json(&text).unwrap();
        assert_eq!(ansatz, back);
    }

    #[test]
    fn rejects_bad_layer_definitions() {
        // Empty rotation layer
        let bad = LayeredAnsatz::new(
            2,
            1,
            vec![AnsatzLayer { wall: EntanglerWall::default(), rotations: vec![] }],
        );
        assert!(bad.is_err());

        // Duplicate parameter index
        let dup = LayeredAnsatz::new(
            2,
            1,
            vec![AnsatzLayer {
                wall: EntanglerWall::default(),
                rotations: vec![
                    RotationSpec { axis: PauliAxis::X, qubit: 0, param_index: 0 },
                    RotationSpec { axis: PauliAxis::Y, qubit: 1, param_index: 0 },
                ],
            }],
        );
        assert!(dup.is_err());

        // Self-paired wall
        let selfpair = LayeredAnsatz::new(
            2,
            1,
            vec![AnsatzLayer {
                wall: EntanglerWall { pairs: vec![(1, 1)] },
                rotations: vec![RotationSpec { axis: PauliAxis::X, qubit: 0, param_index: 0 }],
            }],
        );
        assert!(selfpair.is_err());
    }

    #[test]
    fn evaluate_rejects_length_mismatch() {
        let ansatz = build_ring_ansatz(2, 1).unwrap();
        let params = ParameterVector::zeros(5);
        let input = StateVector::zero_state(2).unwrap();
        assert!(matches!(ansatz.evaluate(&params, &input), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn evaluation_preserves_norm(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
            let ansatz = build_ring_ansatz(3, 2).unwrap();
            let params = ParameterVector::new(
                (0..ansatz.num_parameters())
                    .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                    .collect(),
            ).unwrap();
            let features: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let out = ansatz.evaluate(&params, &tpe_encode(&features).unwrap()).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn tpe_encoding_is_injective(
            a in proptest::collection::vec(0.0f64..=1.0, 3),
            b in proptest::collection::vec(0.0f64..=1.0, 3),
        ) {
            prop_assume!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
            let d = tpe_encode(&a).unwrap()
                .fubini_study_distance(&tpe_encode(&b).unwrap())
                .unwrap();
            prop_assert!(d > 0.0);
        }
    }
}
