use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};
use crate::rnn::timescale::{init_timescales, LayerRole, LayerSpec, TimescaleMode, TimescaleParams};

/// Integration step width. All the experiments use Δt = 1; the knob exists
/// because the update rule is a discretised differential equation and tests
/// exercise other widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig { dt: 1.0 }
    }
}

/// Instantaneous state of one layer: membrane potentials `z` and their
/// activations `y = tanh(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl LayerState {
    pub fn zeros(units: usize) -> Self {
        LayerState {
            z: vec![0.0; units],
            y: vec![0.0; units],
        }
    }

    /// Build a state from given potentials, deriving the activations. Used
    /// to seed a decoder's slow units from a context vector.
    pub fn from_potentials(z: Vec<f64>) -> Self {
        let y = z.iter().map(|v| v.tanh()).collect();
        LayerState { z, y }
    }

    pub fn units(&self) -> usize {
        self.z.len()
    }
}

/// Connection weights and timescales of one layer.
///
/// A layer reads the previous step's activations of itself and of its
/// immediate neighbours only; skip connections across the hierarchy are
/// deliberately absent so that slow layers can only influence the output
/// through the fast ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub spec: LayerSpec,
    pub timescales: TimescaleParams,
    /// units × units self-recurrence.
    pub w_rec: Matrix,
    /// units × units(l−1), absent on the bottom layer.
    pub w_lower: Option<Matrix>,
    /// units × units(l+1), absent on the top layer.
    pub w_upper: Option<Matrix>,
    pub bias: Vec<f64>,
}

/// A stack of leaky-integrator layers with bidirectional nearest-neighbour
/// wiring. External input drives the bottom (io) layer only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtrnnParams {
    pub input_dim: usize,
    /// units(io) × input_dim.
    pub w_in: Matrix,
    /// Ordered fast-to-slow: io, then cf, then cs. A prefix of that order
    /// is allowed (an io-only stack is a plain continuous-time network).
    pub layers: Vec<LayerParams>,
}

impl MtrnnParams {
    /// Initialise a stack with weights drawn uniformly from
    /// ±1/√fan_in per matrix, zero biases, and timescales per `mode`.
    /// Draw order is fixed (w_in, then per layer: w_rec, w_lower, w_upper,
    /// timescales) so a seed fully determines the network.
    pub fn init(
        mode: TimescaleMode,
        specs: &[LayerSpec],
        input_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        check_roles(specs)?;
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        let uniform_matrix = |rows: usize, cols: usize, rng: &mut Rng| -> Matrix {
            let s = 1.0 / (cols as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.uniform_in(-s, s))
        };
        let w_in = uniform_matrix(specs[0].units, input_dim, rng);
        let mut layers = Vec::with_capacity(specs.len());
        for (l, spec) in specs.iter().enumerate() {
            let w_rec = uniform_matrix(spec.units, spec.units, rng);
            let w_lower = if l > 0 {
                Some(uniform_matrix(spec.units, specs[l - 1].units, rng))
            } else {
                None
            };
            let w_upper = if l + 1 < specs.len() {
                Some(uniform_matrix(spec.units, specs[l + 1].units, rng))
            } else {
                None
            };
            let timescales = init_timescales(mode, spec, rng)?;
            layers.push(LayerParams {
                spec: spec.clone(),
                timescales,
                w_rec,
                w_lower,
                w_upper,
                bias: vec![0.0; spec.units],
            });
        }
        let params = MtrnnParams {
            input_dim,
            w_in,
            layers,
        };
        params.validate()?;
        Ok(params)
    }

    /// Shape and wiring consistency; called after construction and after
    /// loading from disk.
    pub fn validate(&self) -> Result<()> {
        let specs: Vec<LayerSpec> = self.layers.iter().map(|l| l.spec.clone()).collect();
        check_roles(&specs)?;
        if self.w_in.rows() != self.layers[0].spec.units || self.w_in.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "w_in is {}x{}, expected {}x{}",
                self.w_in.rows(),
                self.w_in.cols(),
                self.layers[0].spec.units,
                self.input_dim
            )));
        }
        for (l, lp) in self.layers.iter().enumerate() {
            let n = lp.spec.units;
            let name = lp.spec.role.name();
            if lp.timescales.len() != n {
                return Err(Error::shape(format!(
                    "{name} timescales cover {} of {n} units",
                    lp.timescales.len()
                )));
            }
            if lp.w_rec.rows() != n || lp.w_rec.cols() != n {
                return Err(Error::shape(format!("{name} w_rec is not {n}x{n}")));
            }
            if lp.bias.len() != n {
                return Err(Error::shape(format!("{name} bias length mismatch")));
            }
            match (&lp.w_lower, l) {
                (None, 0) => {}
                (Some(w), l) if l > 0 => {
                    let m = self.layers[l - 1].spec.units;
                    if w.rows() != n || w.cols() != m {
                        return Err(Error::shape(format!("{name} w_lower is not {n}x{m}")));
                    }
                }
                _ => {
                    return Err(Error::shape(format!("{name} lower wiring inconsistent")));
                }
            }
            match (&lp.w_upper, l + 1 == self.layers.len()) {
                (None, true) => {}
                (Some(w), false) => {
                    let m = self.layers[l + 1].spec.units;
                    if w.rows() != n || w.cols() != m {
                        return Err(Error::shape(format!("{name} w_upper is not {n}x{m}")));
                    }
                }
                _ => {
                    return Err(Error::shape(format!("{name} upper wiring inconsistent")));
                }
            }
        }
        Ok(())
    }

    pub fn zero_states(&self) -> Vec<LayerState> {
        self.layers
            .iter()
            .map(|l| LayerState::zeros(l.spec.units))
            .collect()
    }

    pub fn layer_index(&self, role: LayerRole) -> Option<usize> {
        self.layers.iter().position(|l| l.spec.role == role)
    }

    pub fn total_units(&self) -> usize {
        self.layers.iter().map(|l| l.spec.units).sum()
    }
}

/// Valid stacks are a fast-to-slow prefix: [io], [io, cf], [io, cf, cs].
fn check_roles(specs: &[LayerSpec]) -> Result<()> {
    const ORDER: [LayerRole; 3] = [LayerRole::Io, LayerRole::Cf, LayerRole::Cs];
    if specs.is_empty() || specs.len() > 3 {
        return Err(Error::invalid(format!(
            "a stack has 1 to 3 layers, got {}",
            specs.len()
        )));
    }
    for (spec, &want) in specs.iter().zip(ORDER.iter()) {
        if spec.role != want {
            return Err(Error::invalid(format!(
                "layer order must be io, cf, cs; found {} where {} belongs",
                spec.role.name(),
                want.name()
            )));
        }
        spec.validate()?;
    }
    Ok(())
}

/// Leaky integration of one layer:
/// z_i ← (1 − Δt/τ_i) z_i + (Δt/τ_i) d_i, y_i = tanh(z_i).
///
/// When Δt/τ = 1 the potential is replaced outright (`z = d`, computed
/// without the redundant multiply-adds) so unit-timescale stacks reduce
/// bitwise to a plain recurrent network.
pub fn integrate(
    timescales: &TimescaleParams,
    dt: f64,
    z_prev: &[f64],
    drive: &[f64],
) -> LayerState {
    let n = z_prev.len();
    debug_assert_eq!(drive.len(), n);
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let a = dt / timescales.effective(i);
        let zi = if a == 1.0 {
            drive[i]
        } else {
            (1.0 - a) * z_prev[i] + a * drive[i]
        };
        z[i] = zi;
        y[i] = zi.tanh();
    }
    LayerState { z, y }
}

/// One step of a standalone single-layer continuous-time network. Returns
/// the new state and the drive that produced it.
///
/// Drive accumulation order is fixed — bias, external input, recurrence —
/// so results are reproducible bit for bit.
pub fn ctrnn_step(
    timescales: &TimescaleParams,
    w_in: &Matrix,
    w_rec: &Matrix,
    bias: &[f64],
    prev: &LayerState,
    input: &[f64],
    cfg: &StepConfig,
) -> (LayerState, Vec<f64>) {
    let mut drive = bias.to_vec();
    w_in.matvec_add(input, &mut drive);
    w_rec.matvec_add(&prev.y, &mut drive);
    let state = integrate(timescales, cfg.dt, &prev.z, &drive);
    (state, drive)
}

/// One synchronous update of the whole stack: every layer reads its
/// neighbours' previous-step activations, so update order cannot matter.
/// Drive order per layer: bias, external input (bottom layer only),
/// self-recurrence, lower neighbour, upper neighbour.
pub fn mtrnn_step(
    params: &MtrnnParams,
    prev: &[LayerState],
    input: &[f64],
    cfg: &StepConfig,
) -> (Vec<LayerState>, Vec<Vec<f64>>) {
    debug_assert_eq!(prev.len(), params.layers.len());
    let mut states = Vec::with_capacity(params.layers.len());
    let mut drives = Vec::with_capacity(params.layers.len());
    for (l, lp) in params.layers.iter().enumerate() {
        let mut drive = lp.bias.clone();
        if l == 0 {
            params.w_in.matvec_add(input, &mut drive);
        }
        lp.w_rec.matvec_add(&prev[l].y, &mut drive);
        if let Some(w) = &lp.w_lower {
            w.matvec_add(&prev[l - 1].y, &mut drive);
        }
        if let Some(w) = &lp.w_upper {
            w.matvec_add(&prev[l + 1].y, &mut drive);
        }
        states.push(integrate(&lp.timescales, cfg.dt, &prev[l].z, &drive));
        drives.push(drive);
    }
    (states, drives)
}

/// Everything the backward pass needs from a forward run.
#[derive(Debug, Clone)]
pub struct MtrnnTrace {
    /// states[0] is the initial condition; states[t] for t ≥ 1 is the state
    /// after consuming input row t−1. Length T+1.
    pub states: Vec<Vec<LayerState>>,
    /// drives[t] produced the transition from states[t] to states[t+1].
    /// Length T.
    pub drives: Vec<Vec<Vec<f64>>>,
}

impl MtrnnTrace {
    pub fn steps(&self) -> usize {
        self.drives.len()
    }

    pub fn final_states(&self) -> &[LayerState] {
        self.states.last().expect("trace holds at least the initial state")
    }
}

/// Drive the stack through a whole input sequence (one row per step).
pub fn mtrnn_forward(
    params: &MtrnnParams,
    inputs: &Matrix,
    init: Vec<LayerState>,
    cfg: &StepConfig,
) -> Result<MtrnnTrace> {
    if inputs.cols() != params.input_dim {
        return Err(Error::shape(format!(
            "inputs have {} columns, network expects {}",
            inputs.cols(),
            params.input_dim
        )));
    }
    if init.len() != params.layers.len() {
        return Err(Error::shape(format!(
            "initial state covers {} of {} layers",
            init.len(),
            params.layers.len()
        )));
    }
    for (s, lp) in init.iter().zip(&params.layers) {
        if s.units() != lp.spec.units {
            return Err(Error::shape(format!(
                "initial {} state has {} units, layer has {}",
                lp.spec.role.name(),
                s.units(),
                lp.spec.units
            )));
        }
    }
    let mut states = Vec::with_capacity(inputs.rows() + 1);
    let mut drives = Vec::with_capacity(inputs.rows());
    states.push(init);
    for t in 0..inputs.rows() {
        let (next, drive) = mtrnn_step(params, states.last().unwrap(), inputs.row(t), cfg);
        states.push(next);
        drives.push(drive);
    }
    Ok(MtrnnTrace { states, drives })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srn_specs(units: usize) -> Vec<LayerSpec> {
        vec![LayerSpec::new(LayerRole::Io, units, 1.0)]
    }

    /// Independent plain-recurrent-network reference following the
    /// documented accumulation order (bias, input, recurrence; per-matrix
    /// row sums accumulated separately).
    fn srn_reference(params: &MtrnnParams, inputs: &Matrix) -> Vec<Vec<f64>> {
        let lp = &params.layers[0];
        let n = lp.spec.units;
        let mut y = vec![0.0; n];
        let mut out = Vec::new();
        for t in 0..inputs.rows() {
            let x = inputs.row(t);
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut acc = lp.bias[i];
                let mut s_in = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    s_in += params.w_in.get(i, j) * xj;
                }
                acc += s_in;
                let mut s_rec = 0.0;
                for (j, yj) in y.iter().enumerate() {
                    s_rec += lp.w_rec.get(i, j) * yj;
                }
                acc += s_rec;
                next[i] = acc.tanh();
            }
            y = next;
            out.push(y.clone());
        }
        out
    }

    #[test]
    fn unit_timescale_matches_srn_bitwise() {
        let rng = Rng::new(77);
        for case in 0..20 {
            let mut net_rng = rng.derive(case);
            let params = MtrnnParams::init(TimescaleMode::Unit, &srn_specs(5), 3, &mut net_rng).unwrap();
            // overwrite zero biases with random values so the reduction is
            // exercised on the full drive, not a special case
            let mut params = params;
            for b in &mut params.layers[0].bias {
                *b = net_rng.uniform_in(-0.5, 0.5);
            }
            let inputs = Matrix::from_fn(12, 3, |_, _| net_rng.uniform_in(-1.0, 1.0));
            let trace = mtrnn_forward(&params, &inputs, params.zero_states(), &StepConfig::default()).unwrap();
            let reference = srn_reference(&params, &inputs);
            for t in 0..12 {
                for i in 0..5 {
                    assert_eq!(
                        trace.states[t + 1][0].y[i].to_bits(),
                        reference[t][i].to_bits(),
                        "case {case} step {t} unit {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_drive_decays_geometrically() {
        // with zero weights, biases, and input the potential obeys
        // z_t = (1 − Δt/τ)^t z_0
        let specs = vec![LayerSpec::new(LayerRole::Io, 3, 70.0)];
        let mut params = MtrnnParams::init(TimescaleMode::Fixed, &specs, 2, &mut Rng::new(0)).unwrap();
        params.w_in.scale(0.0);
        params.layers[0].w_rec.scale(0.0);
        let inputs = Matrix::zeros(200, 2);
        let init = vec![LayerState::from_potentials(vec![1.0, -0.4, 0.25])];
        let trace = mtrnn_forward(&params, &inputs, init, &StepConfig::default()).unwrap();
        let tau = params.layers[0].timescales.effective(0);
        let leak = 1.0 - 1.0 / tau;
        for (i, &z0) in [1.0, -0.4, 0.25].iter().enumerate() {
            for t in 0..=200usize {
                let expected = leak.powi(t as i32) * z0;
                let got = trace.states[t][0].z[i];
                assert!(
                    (got - expected).abs() <= 1e-12 * expected.abs().max(1.0),
                    "unit {i} step {t}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn three_layer_forward_matches_frozen_reference() {
        // 2-2-2 stack, hand-set weights, values frozen from an independent
        // NumPy implementation of the update equations.
        let specs = vec![
            LayerSpec::new(LayerRole::Io, 2, 2.0),
            LayerSpec::new(LayerRole::Cf, 2, 5.0),
            LayerSpec::new(LayerRole::Cs, 2, 70.0).with_csc(1),
        ];
        let mut params = MtrnnParams::init(TimescaleMode::Fixed, &specs, 2, &mut Rng::new(0)).unwrap();
        params.w_in = Matrix::from_rows(&[vec![0.5, -0.3], vec![0.2, 0.7]]).unwrap();
        params.layers[0].w_rec = Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.2, 0.1]]).unwrap();
        params.layers[0].w_upper = Some(Matrix::from_rows(&[vec![0.3, -0.1], vec![0.0, 0.4]]).unwrap());
        params.layers[0].bias = vec![0.05, -0.05];
        params.layers[1].w_rec = Matrix::from_rows(&[vec![0.2, -0.3], vec![0.3, 0.2]]).unwrap();
        params.layers[1].w_lower = Some(Matrix::from_rows(&[vec![0.6, 0.1], vec![-0.1, 0.5]]).unwrap());
        params.layers[1].w_upper = Some(Matrix::from_rows(&[vec![0.2, 0.2], vec![-0.3, 0.1]]).unwrap());
        params.layers[1].bias = vec![0.0, 0.1];
        params.layers[2].w_rec = Matrix::from_rows(&[vec![0.4, 0.0], vec![0.0, 0.4]]).unwrap();
        params.layers[2].w_lower = Some(Matrix::from_rows(&[vec![0.5, -0.5], vec![0.25, 0.25]]).unwrap());
        params.layers[2].bias = vec![-0.02, 0.02];
        let inputs = Matrix::from_rows(&[
            vec![1.0, 0.5],
            vec![-0.5, 0.25],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let init = vec![
            LayerState::zeros(2),
            LayerState::zeros(2),
            LayerState::from_potentials(vec![0.3, -0.2]),
        ];
        let trace = mtrnn_forward(&params, &inputs, init, &StepConfig::default()).unwrap();

        // frozen reference: z after the third step, per layer
        let expected_z: [Vec<f64>; 3] = [
            vec![0.19093632026726101, -0.29976958271195614],
            vec![0.03474485875818923, 0.02945864279970865],
            vec![0.29151784443614326, -0.19380730417796521],
        ];
        for (l, expz) in expected_z.iter().enumerate() {
            for (i, &e) in expz.iter().enumerate() {
                let got = trace.states[3][l].z[i];
                assert!(
                    (got - e).abs() < 1e-12,
                    "layer {l} unit {i}: {got} vs {e}"
                );
            }
        }
    }

    #[test]
    fn activations_stay_bounded() {
        let specs = vec![
            LayerSpec::new(LayerRole::Io, 4, 2.0),
            LayerSpec::new(LayerRole::Cf, 3, 5.0),
        ];
        let mut rng = Rng::new(5);
        let params = MtrnnParams::init(TimescaleMode::Adaptive, &specs, 2, &mut rng).unwrap();
        let inputs = Matrix::from_fn(50, 2, |_, _| rng.uniform_in(-10.0, 10.0));
        let trace = mtrnn_forward(&params, &inputs, params.zero_states(), &StepConfig::default()).unwrap();
        for step in &trace.states {
            for layer in step {
                for (&z, &y) in layer.z.iter().zip(&layer.y) {
                    assert!(z.is_finite());
                    assert!(y > -1.0 && y < 1.0);
                    assert_eq!(y.to_bits(), z.tanh().to_bits());
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let specs = vec![
            LayerSpec::new(LayerRole::Io, 3, 2.0),
            LayerSpec::new(LayerRole::Cf, 2, 5.0),
            LayerSpec::new(LayerRole::Cs, 2, 70.0).with_csc(1),
        ];
        let params = MtrnnParams::init(TimescaleMode::Adaptive, &specs, 2, &mut Rng::new(42)).unwrap();
        let inputs = Matrix::from_fn(20, 2, |i, j| ((i * 7 + j * 3) as f64 * 0.1).sin());
        let a = mtrnn_forward(&params, &inputs, params.zero_states(), &StepConfig::default()).unwrap();
        let b = mtrnn_forward(&params, &inputs, params.zero_states(), &StepConfig::default()).unwrap();
        for t in 0..a.states.len() {
            for l in 0..a.states[t].len() {
                assert_eq!(a.states[t][l], b.states[t][l]);
            }
        }
    }

    #[test]
    fn wiring_violations_are_rejected() {
        // cf before io
        let specs = vec![LayerSpec::new(LayerRole::Cf, 3, 5.0)];
        assert!(MtrnnParams::init(TimescaleMode::Fixed, &specs, 2, &mut Rng::new(0)).is_err());
        // duplicate io
        let specs = vec![
            LayerSpec::new(LayerRole::Io, 3, 2.0),
            LayerSpec::new(LayerRole::Io, 3, 2.0),
        ];
        assert!(MtrnnParams::init(TimescaleMode::Fixed, &specs, 2, &mut Rng::new(0)).is_err());
        // shape tampering caught by validate
        let specs = vec![
            LayerSpec::new(LayerRole::Io, 3, 2.0),
            LayerSpec::new(LayerRole::Cf, 2, 5.0),
        ];
        let mut params = MtrnnParams::init(TimescaleMode::Fixed, &specs, 2, &mut Rng::new(0)).unwrap();
        params.layers[1].w_lower = Some(Matrix::zeros(2, 5));
        assert!(params.validate().is_err());
    }

    #[test]
    fn forward_rejects_shape_mismatches() {
        let specs = vec![LayerSpec::new(LayerRole::Io, 3, 2.0)];
        let params = MtrnnParams::init(TimescaleMode::Fixed, &specs, 2, &mut Rng::new(0)).unwrap();
        let bad_inputs = Matrix::zeros(5, 4);
        assert!(mtrnn_forward(&params, &bad_inputs, params.zero_states(), &StepConfig::default()).is_err());
        let inputs = Matrix::zeros(5, 2);
        let bad_init = vec![LayerState::zeros(7)];
        assert!(mtrnn_forward(&params, &inputs, bad_init, &StepConfig::default()).is_err());
    }
}
