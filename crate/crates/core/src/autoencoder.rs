//! Fully-connected autoencoder trained by minibatch gradient descent.
//!
//! One encoder/decoder pair per compression ratio in {1/2, 1/3, 1/4}; the
//! winning ratio is the one with the lowest final validation loss. The
//! architecture is two affine layers each side, d -> mid -> k and mirrored,
//! with ReLU on the hidden layers and identity outputs (embeddings are
//! unbounded reals, so a sigmoid output would clamp them).
//!
//! Everything here is deterministic given the seed: Glorot-uniform init from
//! a seeded generator, one seeded shuffle for the train/validation split, and
//! fixed minibatch order. Gradients are exact backpropagation of the mean
//! squared reconstruction error; the test suite checks them against central
//! finite differences.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    a
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-a).exp()),
            Activation::Identity => a,
        }
    }

    /// Derivative as a function of the pre-activation value.
    fn derivative<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => {
                let s = T::one() / (T::one() + (-a).exp());
                s * (T::one() - s)
            }
            Activation::Identity => T::one(),
        }
    }
}

/// Latent/input dimension ratio; the three the training stage explores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompressionRatio {
    Half,
    Third,
    Quarter,
}

impl CompressionRatio {
    pub const ALL: [CompressionRatio; 3] = [
        CompressionRatio::Half,
        CompressionRatio::Third,
        CompressionRatio::Quarter,
    ];

    pub fn numerator(self) -> usize {
        1
    }

    pub fn denominator(self) -> usize {
        match self {
            CompressionRatio::Half => 2,
            CompressionRatio::Third => 3,
            CompressionRatio::Quarter => 4,
        }
    }

    /// Exact floor(d / denominator).
    pub fn latent_dim(self, input_dim: usize) -> usize {
        input_dim / self.denominator()
    }

    pub fn label(self) -> &'static str {
        match self {
            CompressionRatio::Half => "1/2",
            CompressionRatio::Third => "1/3",
            CompressionRatio::Quarter => "1/4",
        }
    }

    pub fn value(self) -> f64 {
        1.0 / self.denominator() as f64
    }
}

impl std::fmt::Display for CompressionRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for CompressionRatio {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1/2" => Ok(CompressionRatio::Half),
            "1/3" => Ok(CompressionRatio::Third),
            "1/4" => Ok(CompressionRatio::Quarter),
            other => Err(Error::Config(format!(
                "unknown compression ratio {other:?}; expected 1/2, 1/3, or 1/4"
            ))),
        }
    }
}

impl Serialize for CompressionRatio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for CompressionRatio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One affine layer: `y = activation(x W + b)` with `W` stored input×output.
#[derive(Debug, Clone)]
pub struct Layer<T: Scalar> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct AutoencoderParams<T: Scalar> {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder: Vec<Layer<T>>,
    pub decoder: Vec<Layer<T>>,
    pub seed: u64,
}

/// Glorot-uniform initialization of the d -> mid -> k / k -> mid -> d stack.
pub fn init_autoencoder<T: Scalar>(
    input_dim: usize,
    ratio: CompressionRatio,
    seed: u64,
) -> Result<AutoencoderParams<T>> {
    let latent_dim = ratio.latent_dim(input_dim);
    if latent_dim < 1 {
        return Err(Error::Precondition(format!(
            "ratio {ratio} yields latent dimension {latent_dim} for input {input_dim}"
        )));
    }
    let mid = (input_dim + latent_dim).div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = vec![
        glorot_layer(&mut rng, input_dim, mid, Activation::Relu),
        glorot_layer(&mut rng, mid, latent_dim, Activation::Identity),
    ];
    let decoder = vec![
        glorot_layer(&mut rng, latent_dim, mid, Activation::Relu),
        glorot_layer(&mut rng, mid, input_dim, Activation::Identity),
    ];
    Ok(AutoencoderParams {
        input_dim,
        latent_dim,
        encoder,
        decoder,
        seed,
    })
}

fn glorot_layer<T: Scalar>(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
    activation: Activation,
) -> Layer<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let weight = Array2::from_shape_fn((fan_in, fan_out), |_| {
        T::from_f64_c(rng.random_range(-limit..limit))
    });
    Layer {
        weight,
        bias: Array1::zeros(fan_out),
        activation,
    }
}

fn forward_stack<T: Scalar>(layers: &[Layer<T>], input: &Array2<T>) -> Array2<T> {
    let mut x = input.clone();
    for layer in layers {
        let pre = x.dot(&layer.weight) + &layer.bias;
        x = pre.mapv(|a| layer.activation.apply(a));
    }
    x
}

fn check_cols<T: Scalar>(m: &Array2<T>, expected: usize, context: &str) -> Result<()> {
    if m.ncols() != expected {
        return Err(Error::ShapeMismatch {
            expected: format!("{context} with {expected} columns"),
            got: format!("{} columns", m.ncols()),
        });
    }
    Ok(())
}

/// Encoder forward pass: n×d -> n×k.
pub fn encode<T: Scalar>(params: &AutoencoderParams<T>, e: &Array2<T>) -> Result<Array2<T>> {
    check_cols(e, params.input_dim, "encoder input")?;
    Ok(forward_stack(&params.encoder, e))
}

/// Decoder forward pass: n×k -> n×d.
pub fn decode<T: Scalar>(params: &AutoencoderParams<T>, z: &Array2<T>) -> Result<Array2<T>> {
    check_cols(z, params.latent_dim, "decoder input")?;
    Ok(forward_stack(&params.decoder, z))
}

/// Mean squared error over all n·d entries.
pub fn mse_loss<T: Scalar>(e: &Array2<T>, e_hat: &Array2<T>) -> Result<T> {
    if e.dim() != e_hat.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", e.dim()),
            got: format!("{:?}", e_hat.dim()),
        });
    }
    let count = T::from_usize_c(e.len().max(1));
    let sum: T = e
        .iter()
        .zip(e_hat.iter())
        .map(|(a, b)| {
            let d = *a - *b;
            d * d
        })
        .sum();
    Ok(sum / count)
}

/// Per-layer parameter gradients, ordered encoder then decoder.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

/// Reconstruction loss and its exact gradient on `batch`.
pub fn loss_and_gradients<T: Scalar>(
    params: &AutoencoderParams<T>,
    batch: &Array2<T>,
) -> Result<(T, Gradients<T>)> {
    check_cols(batch, params.input_dim, "training batch")?;
    let stack: Vec<&Layer<T>> = params.encoder.iter().chain(params.decoder.iter()).collect();

    // forward, keeping per-layer inputs and pre-activations
    let mut inputs: Vec<Array2<T>> = Vec::with_capacity(stack.len());
    let mut pre_acts: Vec<Array2<T>> = Vec::with_capacity(stack.len());
    let mut x = batch.clone();
    for layer in &stack {
        let pre = x.dot(&layer.weight) + &layer.bias;
        inputs.push(x);
        x = pre.mapv(|a| layer.activation.apply(a));
        pre_acts.push(pre);
    }
    let reconstruction = x;
    let loss = mse_loss(batch, &reconstruction)?;

    // dL/dY for L = mean((Y - X)^2) over all entries
    let scale = T::from_f64_c(2.0) / T::from_usize_c(batch.len().max(1));
    let mut d_out: Array2<T> = (&reconstruction - batch).mapv(|v| v * scale);

    let mut grads: Vec<(Array2<T>, Array1<T>)> = (0..stack.len())
        .map(|_| (Array2::zeros((0, 0)), Array1::zeros(0)))
        .collect();
    for idx in (0..stack.len()).rev() {
        let layer = stack[idx];
        let d_pre = {
            let deriv = pre_acts[idx].mapv(|a| layer.activation.derivative(a));
            d_out * deriv
        };
        let d_w = inputs[idx].t().dot(&d_pre);
        let d_b = d_pre.sum_axis(Axis(0));
        d_out = d_pre.dot(&layer.weight.t());
        grads[idx] = (d_w, d_b);
    }
    Ok((loss, Gradients { layers: grads }))
}

/// Plain gradient-descent update.
pub fn apply_gradients<T: Scalar>(
    params: &mut AutoencoderParams<T>,
    grads: &Gradients<T>,
    learning_rate: T,
) {
    for (idx, layer) in params
        .encoder
        .iter_mut()
        .chain(params.decoder.iter_mut())
        .enumerate()
    {
        let (d_w, d_b) = &grads.layers[idx];
        layer.weight.zip_mut_with(d_w, |w, g| *w -= learning_rate * *g);
        layer.bias.zip_mut_with(d_b, |b, g| *b -= learning_rate * *g);
    }
}

impl<T: Scalar> AutoencoderParams<T> {
    /// All parameters as one flat vector (weights row-major, then bias, per
    /// layer, encoder first). Used by the finite-difference checks.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for layer in self.encoder.iter().chain(self.decoder.iter()) {
            out.extend(layer.weight.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[T]) {
        let mut pos = 0usize;
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            for w in layer.weight.iter_mut() {
                *w = flat[pos];
                pos += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[pos];
                pos += 1;
            }
        }
        assert_eq!(pos, flat.len(), "flat parameter vector length mismatch");
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim >= self.input_dim {
            return Err(Error::Precondition(
                "latent_dim must be smaller than input_dim".into(),
            ));
        }
        let mut dim = self.input_dim;
        for layer in self.encoder.iter().chain(self.decoder.iter()) {
            if layer.weight.nrows() != dim {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer input {dim}"),
                    got: format!("{}", layer.weight.nrows()),
                });
            }
            dim = layer.weight.ncols();
            if layer.bias.len() != dim {
                return Err(Error::ShapeMismatch {
                    expected: format!("bias {dim}"),
                    got: format!("{}", layer.bias.len()),
                });
            }
        }
        if dim != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("decoder output {}", self.input_dim),
                got: format!("{dim}"),
            });
        }
        if self
            .encoder
            .iter()
            .chain(self.decoder.iter())
            .any(|l| l.weight.iter().any(|v| !v.is_finite()) || l.bias.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Precondition("non-finite autoencoder parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub ratios: Vec<CompressionRatio>,
}

impl TrainingConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be > 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(0.0 < self.val_fraction && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must lie in (0,1)".into()));
        }
        let n_val = (n as f64 * self.val_fraction).ceil() as usize;
        if n_val == 0 || n_val >= n {
            return Err(Error::Config(format!(
                "val_fraction {} leaves no samples on one side of the split for n={n}",
                self.val_fraction
            )));
        }
        if self.ratios.is_empty() {
            return Err(Error::Config("ratios must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.ratios {
            if !seen.insert(*r) {
                return Err(Error::Config(format!("duplicate ratio {r}")));
            }
        }
        Ok(())
    }
}

/// Loss curves for one trained ratio. `final_val` falls back to the
/// initial-parameter validation loss when epochs = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub ratio: CompressionRatio,
    pub train: Vec<f64>,
    pub val: Vec<f64>,
    pub final_val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub curves: Vec<RatioCurve>,
    pub selected_ratio: CompressionRatio,
    pub best_val_loss: f64,
}

pub struct TrainOutcome<T: Scalar> {
    pub report: TrainingReport,
    pub models: Vec<(CompressionRatio, AutoencoderParams<T>)>,
}

/// Trains one autoencoder per configured ratio and selects the winner.
pub fn train<T: Scalar>(e: &Array2<T>, cfg: &TrainingConfig) -> Result<TrainOutcome<T>> {
    let (n, d) = e.dim();
    if n < 4 || d < 4 {
        return Err(Error::Precondition(format!(
            "training needs n >= 4 and d >= 4, got n={n}, d={d}"
        )));
    }
    cfg.validate(n)?;

    // one seeded shuffle; the last ceil(n·val_fraction) rows are validation
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_val = (n as f64 * cfg.val_fraction).ceil() as usize;
    let (train_rows, val_rows) = order.split_at(n - n_val);
    let train_set = select_rows(e, train_rows);
    let val_set = select_rows(e, val_rows);

    let lr = T::from_f64_c(cfg.learning_rate);
    let mut curves = Vec::new();
    let mut models = Vec::new();
    for &ratio in &cfg.ratios {
        let mut params = init_autoencoder::<T>(d, ratio, cfg.seed)?;
        let mut curve = RatioCurve {
            ratio,
            train: Vec::with_capacity(cfg.epochs),
            val: Vec::with_capacity(cfg.epochs),
            final_val: f64::NAN,
        };
        for epoch in 0..cfg.epochs {
            for chunk in train_rows.chunks(cfg.batch_size) {
                let batch = select_rows(e, chunk);
                let (_, grads) = loss_and_gradients(&params, &batch)?;
                apply_gradients(&mut params, &grads, lr);
            }
            let train_loss = reconstruction_loss(&params, &train_set)?.as_f64();
            let val_loss = reconstruction_loss(&params, &val_set)?.as_f64();
            if !train_loss.is_finite() || !val_loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    ratio: ratio.label().into(),
                    epoch,
                });
            }
            curve.train.push(train_loss);
            curve.val.push(val_loss);
        }
        curve.final_val = match curve.val.last() {
            Some(v) => *v,
            None => reconstruction_loss(&params, &val_set)?.as_f64(),
        };
        curves.push(curve);
        models.push((ratio, params));
    }

    let selected = best_ratio(&curves);
    let best_val_loss = curves
        .iter()
        .find(|c| c.ratio == selected)
        .map(|c| c.final_val)
        .unwrap_or(f64::NAN);
    Ok(TrainOutcome {
        report: TrainingReport {
            curves,
            selected_ratio: selected,
            best_val_loss,
        },
        models,
    })
}

/// Full reconstruction loss of a dataset under the current parameters.
pub fn reconstruction_loss<T: Scalar>(
    params: &AutoencoderParams<T>,
    data: &Array2<T>,
) -> Result<T> {
    let z = encode(params, data)?;
    let e_hat = decode(params, &z)?;
    mse_loss(data, &e_hat)
}

/// Per-column z-scoring for the optional standardize-before-training toggle.
/// Constant columns are centered only.
pub fn standardize_columns<T: Scalar>(m: &Array2<T>) -> Array2<T> {
    let (n, d) = m.dim();
    let mut out = m.clone();
    let n_t = T::from_usize_c(n.max(1));
    for j in 0..d {
        let mut mean = T::zero();
        for i in 0..n {
            mean += m[(i, j)];
        }
        mean /= n_t;
        let mut var = T::zero();
        for i in 0..n {
            let dev = m[(i, j)] - mean;
            var += dev * dev;
        }
        var /= n_t;
        let std = var.sqrt();
        let denom = if std > T::zero() { std } else { T::one() };
        for i in 0..n {
            out[(i, j)] = (m[(i, j)] - mean) / denom;
        }
    }
    out
}

/// Minimum final validation loss; exact ties go to the smaller latent
/// dimension (the more aggressive ratio).
pub fn select_best_ratio(report: &TrainingReport) -> CompressionRatio {
    best_ratio(&report.curves)
}

fn best_ratio(curves: &[RatioCurve]) -> CompressionRatio {
    assert!(!curves.is_empty(), "at least one ratio must be trained");
    let mut best = &curves[0];
    for c in &curves[1..] {
        if c.final_val < best.final_val
            || (c.final_val == best.final_val && c.ratio.value() < best.ratio.value())
        {
            best = c;
        }
    }
    best.ratio
}

fn select_rows<T: Scalar>(e: &Array2<T>, rows: &[usize]) -> Array2<T> {
    let mut out = Array2::zeros((rows.len(), e.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&e.row(r));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct LayerMeta {
    rows: usize,
    cols: usize,
    activation: Activation,
    weight_file: String,
    bias_file: String,
}

#[derive(Serialize, Deserialize)]
struct ParamsMeta {
    input_dim: usize,
    latent_dim: usize,
    seed: u64,
    ratio: CompressionRatio,
    encoder: Vec<LayerMeta>,
    decoder: Vec<LayerMeta>,
}

/// Persists parameters as `params.json` plus one little-endian f32 binary per
/// weight matrix and bias vector.
pub fn write_params<T: Scalar>(
    dir: &Path,
    params: &AutoencoderParams<T>,
    ratio: CompressionRatio,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let describe = |prefix: &str, layers: &[Layer<T>]| -> Result<Vec<LayerMeta>> {
        let mut metas = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            let weight_file = format!("{prefix}{i}_w.bin");
            let bias_file = format!("{prefix}{i}_b.bin");
            binio::write_matrix_f32(&dir.join(&weight_file), &layer.weight)?;
            binio::write_vector_f32(&dir.join(&bias_file), &layer.bias)?;
            metas.push(LayerMeta {
                rows: layer.weight.nrows(),
                cols: layer.weight.ncols(),
                activation: layer.activation,
                weight_file,
                bias_file,
            });
        }
        Ok(metas)
    };
    let meta = ParamsMeta {
        input_dim: params.input_dim,
        latent_dim: params.latent_dim,
        seed: params.seed,
        ratio,
        encoder: describe("enc", &params.encoder)?,
        decoder: describe("dec", &params.decoder)?,
    };
    let path = dir.join("params.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

pub fn read_params<T: Scalar>(dir: &Path) -> Result<(AutoencoderParams<T>, CompressionRatio)> {
    let path = dir.join("params.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ParamsMeta = serde_json::from_str(&text)?;
    let load = |metas: &[LayerMeta]| -> Result<Vec<Layer<T>>> {
        metas
            .iter()
            .map(|m| {
                Ok(Layer {
                    weight: binio::read_matrix_f32(&dir.join(&m.weight_file), m.rows, m.cols)?,
                    bias: binio::read_vector_f32(&dir.join(&m.bias_file), m.cols)?,
                    activation: m.activation,
                })
            })
            .collect()
    };
    let params = AutoencoderParams {
        input_dim: meta.input_dim,
        latent_dim: meta.latent_dim,
        encoder: load(&meta.encoder)?,
        decoder: load(&meta.decoder)?,
        seed: meta.seed,
    };
    params.validate()?;
    Ok((params, meta.ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_shapes_follow_ratio_rule() {
        let p = init_autoencoder::<f64>(8, CompressionRatio::Half, 0).unwrap();
        assert_eq!(p.latent_dim, 4);
        assert_eq!(p.encoder[0].weight.dim(), (8, 6));
        assert_eq!(p.encoder[1].weight.dim(), (6, 4));
        assert_eq!(p.decoder[0].weight.dim(), (4, 6));
        assert_eq!(p.decoder[1].weight.dim(), (6, 8));

        let p = init_autoencoder::<f64>(9, CompressionRatio::Third, 0).unwrap();
        assert_eq!(p.latent_dim, 3);
        assert_eq!(p.encoder[0].weight.dim(), (9, 6));
        assert_eq!(p.encoder[1].weight.dim(), (6, 3));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_autoencoder::<f64>(10, CompressionRatio::Quarter, 7).unwrap();
        let b = init_autoencoder::<f64>(10, CompressionRatio::Quarter, 7).unwrap();
        assert_eq!(a.flatten(), b.flatten());
    }

    #[test]
    fn init_rejects_zero_latent() {
        assert!(init_autoencoder::<f64>(3, CompressionRatio::Quarter, 0).is_err());
    }

    #[test]
    fn encode_zero_params_gives_zero() {
        let mut p = init_autoencoder::<f64>(8, CompressionRatio::Half, 1).unwrap();
        for layer in p.encoder.iter_mut() {
            layer.weight.fill(0.0);
            layer.bias.fill(0.0);
        }
        let e = Array2::from_elem((3, 8), 1.5);
        let z = encode(&p, &e).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn encode_identity_single_layer_passes_through() {
        let p = AutoencoderParams {
            input_dim: 4,
            latent_dim: 4,
            encoder: vec![Layer {
                weight: Array2::eye(4),
                bias: Array1::zeros(4),
                activation: Activation::Identity,
            }],
            decoder: vec![Layer {
                weight: Array2::eye(4),
                bias: Array1::zeros(4),
                activation: Activation::Identity,
            }],
            seed: 0,
        };
        let e = array![[1.0, -2.0, 3.0, 0.5], [0.0, 4.0, -1.0, 2.0]];
        assert_eq!(encode(&p, &e).unwrap(), e);
        assert_eq!(decode(&p, &e).unwrap(), e);
    }

    // straight-line scalar-loop oracle for the seeded forward pass
    fn oracle_forward(layers: &[Layer<f64>], input: &Array2<f64>) -> Array2<f64> {
        let mut x: Vec<Vec<f64>> = input.rows().into_iter().map(|r| r.to_vec()).collect();
        for layer in layers {
            let (n_in, n_out) = layer.weight.dim();
            let mut next = vec![vec![0.0; n_out]; x.len()];
            for (row, out_row) in x.iter().zip(next.iter_mut()) {
                for (j, cell) in out_row.iter_mut().enumerate() {
                    let mut acc = layer.bias[j];
                    for i in 0..n_in {
                        acc += row[i] * layer.weight[(i, j)];
                    }
                    *cell = match layer.activation {
                        Activation::Relu => acc.max(0.0),
                        Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                        Activation::Identity => acc,
                    };
                }
            }
            x = next;
        }
        Array2::from_shape_vec((x.len(), x[0].len()), x.concat()).unwrap()
    }

    #[test]
    fn encode_decode_match_scalar_loop_oracle() {
        let p = init_autoencoder::<f64>(8, CompressionRatio::Half, 13).unwrap();
        let e = Array2::from_elem((2, 8), 1.0);
        let z = encode(&p, &e).unwrap();
        let z_oracle = oracle_forward(&p.encoder, &e);
        for (a, b) in z.iter().zip(z_oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = decode(&p, &z).unwrap();
        let back_oracle = oracle_forward(&p.decoder, &z_oracle);
        for (a, b) in back.iter().zip(back_oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_loss_cases() {
        let a = array![[1.0, 2.0, 3.0]];
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let e = array![[0.0, 0.0]];
        let e_hat = array![[3.0, 4.0]];
        assert_eq!(mse_loss(&e, &e_hat).unwrap(), 12.5);
    }

    #[test]
    fn mse_loss_matches_elementwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((4, 5), |_| rng.random_range(-2.0..2.0));
        let b = Array2::from_shape_fn((4, 5), |_| rng.random_range(-2.0..2.0));
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..5 {
                let d: f64 = a[(i, j)] - b[(i, j)];
                acc += d * d;
            }
        }
        let oracle = acc / 20.0;
        assert!((mse_loss(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn mse_loss_rejects_shape_mismatch() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 2));
        assert!(mse_loss(&a, &b).is_err());
    }

    fn tiny_config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            epochs,
            batch_size: 4,
            learning_rate: 0.05,
            val_fraction: 0.25,
            seed: 5,
            ratios: vec![CompressionRatio::Half],
        }
    }

    #[test]
    fn train_constant_data_drives_loss_down() {
        let e = Array2::from_shape_fn((16, 8), |(_, j)| 0.3 + 0.1 * j as f64);
        let initial = {
            let p = init_autoencoder::<f64>(8, CompressionRatio::Half, 5).unwrap();
            reconstruction_loss(&p, &e).unwrap()
        };
        let out = train(&e, &tiny_config(400)).unwrap();
        let last = *out.report.curves[0].train.last().unwrap();
        assert!(
            last < 1e-3 * initial,
            "final {last} not < 1e-3 of initial {initial}"
        );
    }

    #[test]
    fn train_zero_epochs_keeps_initialization() {
        let e = Array2::from_shape_fn((8, 8), |(i, j)| (i * 8 + j) as f64 / 64.0);
        let out = train(&e, &tiny_config(0)).unwrap();
        assert!(out.report.curves[0].train.is_empty());
        assert!(out.report.curves[0].val.is_empty());
        let init = init_autoencoder::<f64>(8, CompressionRatio::Half, 5).unwrap();
        assert_eq!(out.models[0].1.flatten(), init.flatten());
        assert!(out.report.best_val_loss.is_finite());
    }

    #[test]
    fn train_is_deterministic() {
        let e = Array2::from_shape_fn((12, 8), |(i, j)| ((i + 1) * (j + 2)) as f64 / 40.0);
        let cfg = TrainingConfig {
            epochs: 5,
            batch_size: 3,
            learning_rate: 0.01,
            val_fraction: 0.25,
            seed: 9,
            ratios: vec![CompressionRatio::Half, CompressionRatio::Quarter],
        };
        let a = train(&e, &cfg).unwrap();
        let b = train(&e, &cfg).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn train_loss_non_increasing_at_small_lr() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let e = Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0));
        let cfg = TrainingConfig {
            epochs: 10,
            batch_size: 8, // full batch: 6 train rows fit in one batch
            learning_rate: 1e-3,
            val_fraction: 0.25,
            seed: 2,
            ratios: vec![CompressionRatio::Half],
        };
        let out = train(&e, &cfg).unwrap();
        let curve = &out.report.curves[0].train;
        assert_eq!(curve.len(), 10);
        for (i, w) in curve.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-12, "epoch {}: {} > {}", i + 1, w[1], w[0]);
        }
    }

    #[test]
    fn select_best_ratio_argmin_and_ties() {
        let curve = |ratio, final_val| RatioCurve {
            ratio,
            train: vec![],
            val: vec![],
            final_val,
        };
        let report = TrainingReport {
            curves: vec![
                curve(CompressionRatio::Half, 0.10),
                curve(CompressionRatio::Third, 0.05),
                curve(CompressionRatio::Quarter, 0.20),
            ],
            selected_ratio: CompressionRatio::Third,
            best_val_loss: 0.05,
        };
        assert_eq!(select_best_ratio(&report), CompressionRatio::Third);

        let single = TrainingReport {
            curves: vec![curve(CompressionRatio::Third, 0.4)],
            selected_ratio: CompressionRatio::Third,
            best_val_loss: 0.4,
        };
        assert_eq!(select_best_ratio(&single), CompressionRatio::Third);

        let tie = TrainingReport {
            curves: vec![
                curve(CompressionRatio::Half, 0.1),
                curve(CompressionRatio::Quarter, 0.1),
            ],
            selected_ratio: CompressionRatio::Quarter,
            best_val_loss: 0.1,
        };
        assert_eq!(select_best_ratio(&tie), CompressionRatio::Quarter);
    }

    #[test]
    fn selected_ratio_always_in_config() {
        let e = Array2::from_shape_fn((10, 8), |(i, j)| ((i * j) as f64).sin());
        let cfg = TrainingConfig {
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.01,
            val_fraction: 0.2,
            seed: 1,
            ratios: vec![CompressionRatio::Third, CompressionRatio::Quarter],
        };
        let out = train(&e, &cfg).unwrap();
        assert!(cfg.ratios.contains(&out.report.selected_ratio));
    }

    #[test]
    fn roundtrip_shape_preserved() {
        let p = init_autoencoder::<f64>(8, CompressionRatio::Third, 3).unwrap();
        let e = Array2::from_shape_fn((5, 8), |(i, j)| (i + j) as f64 * 0.1);
        let z = encode(&p, &e).unwrap();
        let back = decode(&p, &z).unwrap();
        assert_eq!(back.dim(), e.dim());
    }

    #[test]
    fn standardize_columns_zero_mean_unit_std() {
        let m = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let s = standardize_columns(&m);
        let col0: Vec<f64> = s.column(0).to_vec();
        let mean: f64 = col0.iter().sum::<f64>() / 3.0;
        let var: f64 = col0.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        // constant column is centered, not divided
        assert!(s.column(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn training_works_in_f32() {
        let e = Array2::<f32>::from_shape_fn((12, 8), |(i, j)| ((i + j) as f32 * 0.37).sin());
        let cfg = TrainingConfig {
            epochs: 15,
            batch_size: 4,
            learning_rate: 0.05,
            val_fraction: 0.25,
            seed: 3,
            ratios: vec![CompressionRatio::Half],
        };
        let out = train(&e, &cfg).unwrap();
        let curve = &out.report.curves[0].train;
        assert!(curve.last().unwrap() < curve.first().unwrap());
        let z = encode(&out.models[0].1, &e).unwrap();
        assert_eq!(z.dim(), (12, 4));
    }

    #[test]
    fn params_roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_autoencoder::<f64>(8, CompressionRatio::Half, 11).unwrap();
        write_params(dir.path(), &p, CompressionRatio::Half).unwrap();
        let (back, ratio) = read_params::<f64>(dir.path()).unwrap();
        assert_eq!(ratio, CompressionRatio::Half);
        assert_eq!(back.input_dim, 8);
        assert_eq!(back.latent_dim, 4);
        for (a, b) in p.flatten().iter().zip(back.flatten().iter()) {
            assert!((a - b).abs() <= f32::EPSILON as f64 * a.abs().max(1.0));
        }
    }
}
