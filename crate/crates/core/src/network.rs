//! The MLP surrogate `u(x, t)` with tanh hidden layers and optional Fourier
//! features on the spatial coordinate.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DerivativeOrder, Jet, Mat, Tape, Var};
use crate::error::{Error, Result};

/// A point of the space-time domain. ODE problems ignore `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: f64, t: f64) -> Self {
        SpaceTimePoint { x, t }
    }

    pub fn at_time(t: f64) -> Self {
        SpaceTimePoint { x: 0.0, t }
    }
}

/// Fixed sinusoidal embedding of the (normalised) spatial coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierConfig {
    /// Angular frequencies ω_k.
    pub frequencies: Vec<f64>,
}

impl FourierConfig {
    /// Integer harmonics ω_k = kπ, k = 1..=count.
    ///
    /// Applied to the coordinate normalised to [−1, 1] this is ω_k = kπ/L
    /// for a domain of half-width L.
    pub fn harmonics(count: usize) -> Self {
        FourierConfig {
            frequencies: (1..=count).map(|k| k as f64 * PI).collect(),
        }
    }

    pub fn num_frequencies(&self) -> usize {
        self.frequencies.len()
    }
}

impl Default for FourierConfig {
    fn default() -> Self {
        FourierConfig::harmonics(10)
    }
}

/// `[sin(ω_1 x), cos(ω_1 x), …, sin(ω_K x), cos(ω_K x)]`.
pub fn fourier_embed(x: f64, cfg: &FourierConfig) -> Vec<f64> {
    cfg.frequencies
        .iter()
        .flat_map(|&w| {
            let (s, c) = (w * x).sin_cos();
            [s, c]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Number of state components m.
    pub output_dim: usize,
    /// Time interval mapped affinely onto [−1, 1].
    pub time_range: (f64, f64),
    /// Spatial interval mapped onto [−1, 1]; `None` for ODE problems.
    pub space_range: Option<(f64, f64)>,
    pub fourier: Option<FourierConfig>,
}

impl NetworkSpec {
    /// Two hidden tanh layers of 20 neurons.
    pub fn ode(output_dim: usize, horizon: f64) -> Self {
        NetworkSpec {
            hidden_layers: 2,
            hidden_width: 20,
            output_dim,
            time_range: (0.0, horizon),
            space_range: None,
            fourier: None,
        }
    }

    pub fn pde(output_dim: usize, horizon: f64, space: (f64, f64), fourier: Option<FourierConfig>) -> Self {
        NetworkSpec {
            hidden_layers: 2,
            hidden_width: 20,
            output_dim,
            time_range: (0.0, horizon),
            space_range: Some(space),
            fourier,
        }
    }

    /// 1 for (t), 2 for (x, t).
    pub fn input_dim(&self) -> usize {
        if self.space_range.is_some() {
            2
        } else {
            1
        }
    }

    /// Width of the first layer's input after embedding.
    pub fn feature_dim(&self) -> usize {
        match (&self.space_range, &self.fourier) {
            (None, _) => 1,
            (Some(_), None) => 2,
            (Some(_), Some(f)) => 2 * f.num_frequencies() + 1,
        }
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.feature_dim();
        for _ in 0..self.hidden_layers {
            shapes.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        shapes.push((fan_in, self.output_dim));
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidInput("network dimensions must be positive".into()));
        }
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && b > a;
        if !ok(self.time_range) || !self.space_range.map_or(true, ok) {
            return Err(Error::InvalidInput("input ranges must be finite and non-empty".into()));
        }
        if let Some(f) = &self.fourier {
            if f.num_frequencies() == 0 {
                return Err(Error::InvalidInput("Fourier embedding needs at least one frequency".into()));
            }
            if self.space_range.is_none() {
                return Err(Error::InvalidInput("Fourier features require a spatial input".into()));
            }
        }
        Ok(())
    }

    fn time_scale(&self) -> f64 {
        2.0 / (self.time_range.1 - self.time_range.0)
    }

    fn normalize_t(&self, t: f64) -> f64 {
        (t - self.time_range.0) * self.time_scale() - 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `fan_out × fan_in`.
    pub weights: Mat,
    /// `fan_out × 1`.
    pub bias: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
            Layer {
                weights: Mat::from_vec(fan_out, fan_in, w),
                bias: Mat::zeros(fan_out, 1),
            }
        })
        .collect();
    NetworkParams { layers }
}

impl NetworkParams {
    pub fn num_scalars(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then bias, layer by layer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    /// Inverse of [`NetworkParams::to_flat`]; extra trailing entries are ignored.
    pub fn from_flat(spec: &NetworkSpec, flat: &[f64]) -> Result<Self> {
        let mut offset = 0;
        let mut layers = Vec::new();
        for (fan_in, fan_out) in spec.layer_shapes() {
            let nw = fan_in * fan_out;
            if flat.len() < offset + nw + fan_out {
                return Err(Error::Shape(format!(
                    "flat parameter vector too short ({} entries)",
                    flat.len()
                )));
            }
            let weights = Mat::from_vec(fan_out, fan_in, flat[offset..offset + nw].to_vec());
            offset += nw;
            let bias = Mat::from_vec(fan_out, 1, flat[offset..offset + fan_out].to_vec());
            offset += fan_out;
            layers.push(Layer { weights, bias });
        }
        Ok(NetworkParams { layers })
    }

    /// Puts every weight and bias on the tape as a leaf.
    pub fn register<'t>(&self, tape: &'t Tape) -> ParamVars<'t> {
        ParamVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.var(l.weights.clone()), tape.var(l.bias.clone())))
                .collect(),
        }
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.layer_shapes();
        let ok = shapes.len() == self.layers.len()
            && shapes.iter().zip(&self.layers).all(|(&(fi, fo), l)| {
                l.weights.shape() == (fo, fi) && l.bias.shape() == (fo, 1)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("parameters do not match network spec".into()))
        }
    }
}

/// Tape handles for the network parameters, `(weights, bias)` per layer.
pub struct ParamVars<'t> {
    pub layers: Vec<(Var<'t>, Var<'t>)>,
}

impl<'t> ParamVars<'t> {
    /// Leaves in the same order as [`NetworkParams::to_flat`].
    pub fn leaves(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Input features and their constant derivative slots for a batch of points.
fn input_jet<'t>(spec: &NetworkSpec, tape: &'t Tape, points: &[SpaceTimePoint], order: DerivativeOrder) -> Jet<'t> {
    let n = points.len();
    let rows = spec.feature_dim();
    let mut value = Mat::zeros(rows, n);
    let mut dt = Mat::zeros(rows, n);
    let mut dx = Mat::zeros(rows, n);
    let mut dxx = Mat::zeros(rows, n);
    let t_row = rows - 1;
    let ts = spec.time_scale();
    for (j, p) in points.iter().enumerate() {
        value.set(t_row, j, spec.normalize_t(p.t));
        dt.set(t_row, j, ts);
    }
    if let Some((x0, x1)) = spec.space_range {
        let xs = 2.0 / (x1 - x0);
        for (j, p) in points.iter().enumerate() {
            let xn = (p.x - x0) * xs - 1.0;
            match &spec.fourier {
                None => {
                    value.set(0, j, xn);
                    dx.set(0, j, xs);
                }
                Some(cfg) => {
                    for (k, &w) in cfg.frequencies.iter().enumerate() {
                        let (s, c) = (w * xn).sin_cos();
                        let (r_sin, r_cos) = (2 * k, 2 * k + 1);
                        value.set(r_sin, j, s);
                        value.set(r_cos, j, c);
                        dx.set(r_sin, j, w * xs * c);
                        dx.set(r_cos, j, -w * xs * s);
                        let w2 = w * w * xs * xs;
                        dxx.set(r_sin, j, -w2 * s);
                        dxx.set(r_cos, j, -w2 * c);
                    }
                }
            }
        }
    }
    let has_space = spec.space_range.is_some();
    Jet {
        value: tape.var(value),
        dt: (order >= DerivativeOrder::First).then(|| tape.var(dt)),
        dx: (order >= DerivativeOrder::First && has_space).then(|| tape.var(dx)),
        dxx: (order >= DerivativeOrder::Second && has_space).then(|| tape.var(dxx)),
    }
}

/// Evaluates the network with input derivatives up to `order` at a batch of
/// points. Returns one jet per output component, each slot a `1 × N` node
/// still connected to the parameter leaves.
///
/// For ODE networks the spatial slots are `None` (identically zero).
pub fn eval_jet<'t>(
    spec: &NetworkSpec,
    params: &ParamVars<'t>,
    tape: &'t Tape,
    points: &[SpaceTimePoint],
    order: DerivativeOrder,
) -> Result<Vec<Jet<'t>>> {
    if params.layers.len() != spec.hidden_layers + 1 {
        return Err(Error::Shape(format!(
            "expected {} layers, got {}",
            spec.hidden_layers + 1,
            params.layers.len()
        )));
    }
    let mut h = input_jet(spec, tape, points, order);
    let last = params.layers.len() - 1;
    for (i, &(w, b)) in params.layers.iter().enumerate() {
        if w.shape().1 != h.value.shape().0 {
            return Err(Error::Shape(format!(
                "layer {i} expects {} inputs, got {}",
                w.shape().1,
                h.value.shape().0
            )));
        }
        h = h.affine(w, b);
        if i != last {
            h = h.tanh();
        }
    }
    tape.check_finite()?;
    Ok((0..spec.output_dim).map(|k| h.row(k)).collect())
}

/// Network outputs at a batch of points as an `m × N` matrix.
pub fn predict(spec: &NetworkSpec, params: &NetworkParams, points: &[SpaceTimePoint]) -> Result<Mat> {
    params.check_shapes(spec)?;
    let tape = Tape::new();
    let vars = params.register(&tape);
    let mut h = input_jet(spec, &tape, points, DerivativeOrder::Value);
    let last = vars.layers.len() - 1;
    for (i, &(w, b)) in vars.layers.iter().enumerate() {
        h = h.affine(w, b);
        if i != last {
            h = h.tanh();
        }
    }
    tape.check_finite()?;
    let out = h.value.value().clone();
    Ok(out)
}

/// Output vector of length m at one point.
pub fn forward(spec: &NetworkSpec, params: &NetworkParams, input: SpaceTimePoint) -> Result<Vec<f64>> {
    Ok(predict(spec, params, &[input])?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(spec: &NetworkSpec, output_bias: &[f64]) -> NetworkParams {
        let mut p = init_params(spec, 0);
        for l in &mut p.layers {
            l.weights = Mat::zeros(l.weights.rows(), l.weights.cols());
        }
        let last = p.layers.last_mut().unwrap();
        last.bias = Mat::column_vector(output_bias.to_vec());
        p
    }

    #[test]
    fn glorot_bound_and_seeding() {
        let spec = NetworkSpec::pde(1, 1.0, (-1.0, 1.0), None);
        let p = init_params(&spec, 5);
        let widest = (6.0f64 / 22.0).sqrt();
        for l in &p.layers {
            assert!(l.weights.as_slice().iter().all(|w| w.abs() <= widest));
            assert!(l.bias.as_slice().iter().all(|&b| b == 0.0));
        }
        assert_eq!(p, init_params(&spec, 5));
        assert_ne!(p.to_flat(), init_params(&spec, 6).to_flat());
        assert_eq!(p.num_scalars(), 2 * 20 + 20 + 20 * 20 + 20 + 20 + 1);
    }

    #[test]
    fn flat_round_trip() {
        let spec = NetworkSpec::ode(4, 10.0);
        let p = init_params(&spec, 1);
        assert_eq!(NetworkParams::from_flat(&spec, &p.to_flat()).unwrap(), p);
        assert!(NetworkParams::from_flat(&spec, &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_weights_output_bias() {
        let spec = NetworkSpec::pde(1, 2.0, (0.0, 10.0), None);
        let p = zero_params(&spec, &[0.37]);
        for (x, t) in [(0.0, 0.0), (3.0, 1.5), (10.0, 2.0)] {
            assert_eq!(forward(&spec, &p, SpaceTimePoint::new(x, t)).unwrap(), vec![0.37]);
        }
    }

    #[test]
    fn single_tanh_neuron_closed_form() {
        // u = tanh(t) on t ∈ [-1, 1] where normalisation is the identity
        let spec = NetworkSpec {
            hidden_layers: 1,
            hidden_width: 1,
            output_dim: 1,
            time_range: (-1.0, 1.0),
            space_range: None,
            fourier: None,
        };
        let p = NetworkParams {
            layers: vec![
                Layer { weights: Mat::scalar(1.0), bias: Mat::zeros(1, 1) },
                Layer { weights: Mat::scalar(1.0), bias: Mat::zeros(1, 1) },
            ],
        };
        assert_eq!(forward(&spec, &p, SpaceTimePoint::at_time(0.0)).unwrap()[0], 0.0);
        let far = forward(&spec, &p, SpaceTimePoint::at_time(1e3)).unwrap()[0];
        assert!((far - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_hidden_units_stay_bounded() {
        let spec = NetworkSpec::ode(1, 1.0);
        let mut p = init_params(&spec, 3);
        for v in p.layers[1].weights.as_mut_slice() {
            *v *= 1e6;
        }
        let tape = Tape::new();
        let vars = p.register(&tape);
        let pts: Vec<_> = (0..5).map(|i| SpaceTimePoint::at_time(i as f64 * 0.25)).collect();
        let mut h = input_jet(&spec, &tape, &pts, DerivativeOrder::Value);
        for &(w, b) in &vars.layers[..2] {
            h = h.affine(w, b).tanh();
            assert!(h.value.value().as_slice().iter().all(|a| (-1.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn fourier_features() {
        let cfg = FourierConfig::default();
        assert_eq!(cfg.num_frequencies(), 10);
        let e0 = fourier_embed(0.0, &cfg);
        assert_eq!(e0.len(), 20);
        for k in 0..10 {
            assert_eq!(e0[2 * k], 0.0);
            assert_eq!(e0[2 * k + 1], 1.0);
        }
        let e1 = fourier_embed(1.0, &cfg);
        for k in 0..10 {
            assert!(e1[2 * k].abs() < 1e-13);
            let expected = if k % 2 == 0 { -1.0 } else { 1.0 };
            assert!((e1[2 * k + 1] - expected).abs() < 1e-13);
        }
        // period 2 on [-1, 1]
        let a = fourier_embed(-0.3, &cfg);
        let b = fourier_embed(1.7, &cfg);
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn linear_neuron_jets() {
        // u = 2t + 3x via one identity-like hidden layer of width 2 is not
        // linear under tanh, so use zero hidden layers.
        let spec = NetworkSpec {
            hidden_layers: 0,
            hidden_width: 1,
            output_dim: 1,
            time_range: (-1.0, 1.0),
            space_range: Some((-1.0, 1.0)),
            fourier: None,
        };
        let p = NetworkParams {
            layers: vec![Layer { weights: Mat::from_vec(1, 2, vec![3.0, 2.0]), bias: Mat::zeros(1, 1) }],
        };
        let tape = Tape::new();
        let vars = p.register(&tape);
        let pts = [SpaceTimePoint::new(0.3, 0.1), SpaceTimePoint::new(-0.5, 0.7)];
        let jets = eval_jet(&spec, &vars, &tape, &pts, DerivativeOrder::Second).unwrap();
        let u = &jets[0];
        assert_eq!(u.dt.unwrap().value().as_slice(), &[2.0, 2.0]);
        assert_eq!(u.dx.unwrap().value().as_slice(), &[3.0, 3.0]);
        assert_eq!(u.dxx.unwrap().value().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn constant_network_has_zero_derivatives() {
        let spec = NetworkSpec::pde(1, 1.0, (-1.0, 1.0), Some(FourierConfig::default()));
        let p = zero_params(&spec, &[1.5]);
        let tape = Tape::new();
        let vars = p.register(&tape);
        let pts = [SpaceTimePoint::new(0.3, 0.1)];
        let u = eval_jet(&spec, &vars, &tape, &pts, DerivativeOrder::Second).unwrap()[0];
        assert_eq!(u.value.item(), 1.5);
        assert_eq!(u.dt.unwrap().item(), 0.0);
        assert_eq!(u.dx.unwrap().item(), 0.0);
        assert_eq!(u.dxx.unwrap().item(), 0.0);
    }

    #[test]
    fn ode_jets_have_no_spatial_slots() {
        let spec = NetworkSpec::ode(2, 40.0);
        let p = init_params(&spec, 9);
        let tape = Tape::new();
        let vars = p.register(&tape);
        let jets = eval_jet(&spec, &vars, &tape, &[SpaceTimePoint::at_time(3.0)], DerivativeOrder::Second).unwrap();
        assert_eq!(jets.len(), 2);
        assert!(jets[0].dt.is_some() && jets[0].dx.is_none() && jets[0].dxx.is_none());
    }
}
