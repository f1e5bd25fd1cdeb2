//! Minimal dense network with manual backpropagation.
//!
//! A model is a trunk of fully connected layers followed by one or more
//! heads. A normalized head divides its affine output by its Euclidean
//! norm (epsilon-guarded) so it always emits a unit vector; a softmax
//! head emits raw logits and the loss side applies softmax. Everything
//! is double precision and deterministic in `(params, input)`.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Divisor floor for head-output normalization.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("cosine is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("non-finite gradient entry encountered")]
    NonFiniteGradient,
    #[error("model parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Dense row-major matrix, `rows` = output dim, `cols` = input dim.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
        }
    }

    /// `out += self^T * g`.
    pub fn matvec_transpose_add(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += gr * w;
            }
        }
    }

    /// `self += scale * g * a^T`.
    pub fn add_outer(&mut self, g: &[f64], a: &[f64], scale: f64) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(a.len(), self.cols);
        for r in 0..self.rows {
            let gr = g[r] * scale;
            if gr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, ai) in row.iter_mut().zip(a) {
                *w += gr * ai;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer: `act(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Self {
        assert_eq!(weights.rows(), bias.len(), "bias/weight shape mismatch");
        DenseLayer {
            weights,
            bias,
            activation,
        }
    }

    /// Fan-in scaled uniform init: `U(-1/sqrt(in), 1/sqrt(in))`, zero bias.
    pub fn init_uniform(
        out_dim: usize,
        in_dim: usize,
        activation: Activation,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut weights = Matrix::zeros(out_dim, in_dim);
        for w in weights.data_mut() {
            *w = (2.0 * rng.gen::<f64>() - 1.0) * bound;
        }
        DenseLayer {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        self.weights.matvec(x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }
}

/// How a head turns its affine output into the quantity the loss sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    /// Output divided by `max(norm, NORM_EPSILON)`: always a unit vector.
    Normalized,
    /// Raw logits; pair with softmax cross-entropy.
    Softmax,
}

/// Output head: an identity-activation dense layer plus an output rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub layer: DenseLayer,
    pub kind: HeadKind,
}

impl Head {
    pub fn normalized(layer: DenseLayer) -> Self {
        assert_eq!(layer.activation, Activation::Identity);
        Head {
            layer,
            kind: HeadKind::Normalized,
        }
    }

    pub fn softmax(layer: DenseLayer) -> Self {
        assert_eq!(layer.activation, Activation::Identity);
        Head {
            layer,
            kind: HeadKind::Softmax,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layer.out_dim()
    }
}

/// Per-layer activations cached by the trunk forward pass.
#[derive(Clone, Debug)]
pub struct TrunkCache {
    /// Input seen by each layer (`inputs[0]` is the sample).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    preacts: Vec<Vec<f64>>,
}

/// Head forward result plus what backprop needs.
#[derive(Clone, Debug)]
pub struct HeadForward {
    /// Normalized vector (normalized head) or logits (softmax head).
    pub output: Vec<f64>,
    /// Divisor used by the normalization (1.0 for softmax heads).
    norm: f64,
    /// Whether the epsilon guard replaced the true norm.
    guarded: bool,
}

/// Forward pass of one sample through the trunk and a subset of heads.
#[derive(Clone, Debug)]
pub struct SampleForward {
    pub trunk_out: Vec<f64>,
    trunk_cache: TrunkCache,
    /// Indexed like the model's head list; `None` if not evaluated.
    pub heads: Vec<Option<HeadForward>>,
}

/// Run the trunk, caching enough for exact backprop.
pub fn forward_trunk(
    layers: &[DenseLayer],
    x: &[f64],
) -> Result<(Vec<f64>, TrunkCache), NetError> {
    if let Some(first) = layers.first() {
        if x.len() != first.in_dim() {
            return Err(NetError::ShapeMismatch {
                context: "trunk input",
                expected: first.in_dim(),
                got: x.len(),
            });
        }
    }
    let mut cache = TrunkCache {
        inputs: Vec::with_capacity(layers.len()),
        preacts: Vec::with_capacity(layers.len()),
    };
    let mut act = x.to_vec();
    for layer in layers {
        if act.len() != layer.in_dim() {
            return Err(NetError::ShapeMismatch {
                context: "trunk layer input",
                expected: layer.in_dim(),
                got: act.len(),
            });
        }
        let mut pre = vec![0.0; layer.out_dim()];
        layer.affine(&act, &mut pre);
        cache.inputs.push(act);
        act = pre.iter().map(|&z| layer.activation.apply(z)).collect();
        cache.preacts.push(pre);
    }
    Ok((act, cache))
}

/// Run one head on a trunk feature vector.
pub fn forward_head(head: &Head, feature: &[f64]) -> Result<HeadForward, NetError> {
    if feature.len() != head.layer.in_dim() {
        return Err(NetError::ShapeMismatch {
            context: "head input",
            expected: head.layer.in_dim(),
            got: feature.len(),
        });
    }
    let mut raw = vec![0.0; head.layer.out_dim()];
    head.layer.affine(feature, &mut raw);
    match head.kind {
        HeadKind::Normalized => {
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let guarded = norm < NORM_EPSILON;
            let divisor = if guarded { NORM_EPSILON } else { norm };
            let output = raw.iter().map(|x| x / divisor).collect();
            Ok(HeadForward {
                output,
                norm: divisor,
                guarded,
            })
        }
        HeadKind::Softmax => Ok(HeadForward {
            output: raw,
            norm: 1.0,
            guarded: false,
        }),
    }
}

/// Forward one sample through the trunk and the selected heads.
pub fn forward_sample(
    trunk: &[DenseLayer],
    heads: &[Head],
    x: &[f64],
    active_heads: &[usize],
) -> Result<SampleForward, NetError> {
    let (trunk_out, trunk_cache) = forward_trunk(trunk, x)?;
    let mut head_results = vec![None; heads.len()];
    for &hi in active_heads {
        head_results[hi] = Some(forward_head(&heads[hi], &trunk_out)?);
    }
    Ok(SampleForward {
        trunk_out,
        trunk_cache,
        heads: head_results,
    })
}

/// Per-parameter gradients mirroring a layer's shapes.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrad {
            weights: Matrix::zeros(layer.weights.rows(), layer.weights.cols()),
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

/// Gradients for a whole (trunk, heads) parameter set.
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub trunk: Vec<LayerGrad>,
    pub heads: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(trunk: &[DenseLayer], heads: &[Head]) -> Self {
        GradientSet {
            trunk: trunk.iter().map(LayerGrad::zeros_like).collect(),
            heads: heads.iter().map(|h| LayerGrad::zeros_like(&h.layer)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trunk
            .iter()
            .chain(self.heads.iter())
            .all(|g| {
                g.weights.data().iter().all(|x| x.is_finite())
                    && g.bias.iter().all(|x| x.is_finite())
            })
    }
}

/// Accumulate exact gradients for one sample.
///
/// `head_output_grads[i]` is the loss gradient at head `i`'s *output*
/// (the normalized vector for normalized heads, the logits for softmax
/// heads); `None` skips the head. Backprop through the normalization,
/// the affine layers, and the trunk activations is analytic.
pub fn backward_sample(
    trunk: &[DenseLayer],
    heads: &[Head],
    forward: &SampleForward,
    head_output_grads: &[Option<Vec<f64>>],
    grads: &mut GradientSet,
) -> Result<(), NetError> {
    if head_output_grads.len() != heads.len() {
        return Err(NetError::ShapeMismatch {
            context: "head gradient list",
            expected: heads.len(),
            got: head_output_grads.len(),
        });
    }
    let mut g_feature = vec![0.0; forward.trunk_out.len()];
    let mut any_head = false;
    for (hi, maybe_grad) in head_output_grads.iter().enumerate() {
        let Some(g_out) = maybe_grad else { continue };
        let hf = forward.heads[hi]
            .as_ref()
            .expect("gradient supplied for a head that was not forwarded");
        if g_out.len() != heads[hi].out_dim() {
            return Err(NetError::ShapeMismatch {
                context: "head output gradient",
                expected: heads[hi].out_dim(),
                got: g_out.len(),
            });
        }
        any_head = true;
        let g_raw: Vec<f64> = match heads[hi].kind {
            HeadKind::Normalized => {
                if hf.guarded {
                    g_out.iter().map(|g| g / hf.norm).collect()
                } else {
                    // d(z/|z|) pulls back g to (g - (o.g) o) / |z|.
                    let og: f64 = hf.output.iter().zip(g_out).map(|(o, g)| o * g).sum();
                    hf.output
                        .iter()
                        .zip(g_out)
                        .map(|(o, g)| (g - og * o) / hf.norm)
                        .collect()
                }
            }
            HeadKind::Softmax => g_out.clone(),
        };
        let hg = &mut grads.heads[hi];
        hg.weights.add_outer(&g_raw, &forward.trunk_out, 1.0);
        for (b, g) in hg.bias.iter_mut().zip(&g_raw) {
            *b += g;
        }
        heads[hi]
            .layer
            .weights
            .matvec_transpose_add(&g_raw, &mut g_feature);
    }
    if !any_head {
        return Ok(());
    }
    // Trunk backward.
    let mut g_act = g_feature;
    for li in (0..trunk.len()).rev() {
        let layer = &trunk[li];
        let pre = &forward.trunk_cache.preacts[li];
        let g_z: Vec<f64> = g_act
            .iter()
            .zip(pre)
            .map(|(g, &z)| g * layer.activation.derivative(z))
            .collect();
        let lg = &mut grads.trunk[li];
        lg.weights
            .add_outer(&g_z, &forward.trunk_cache.inputs[li], 1.0);
        for (b, g) in lg.bias.iter_mut().zip(&g_z) {
            *b += g;
        }
        if li > 0 {
            let mut g_prev = vec![0.0; layer.in_dim()];
            layer.weights.matvec_transpose_add(&g_z, &mut g_prev);
            g_act = g_prev;
        }
    }
    Ok(())
}

/// One SGD update: `params -= lr * grads`. Rejects non-finite gradients.
pub fn sgd_step(
    trunk: &mut [DenseLayer],
    heads: &mut [Head],
    grads: &GradientSet,
    lr: f64,
) -> Result<(), NetError> {
    if !grads.is_finite() {
        return Err(NetError::NonFiniteGradient);
    }
    let apply = |layer: &mut DenseLayer, grad: &LayerGrad| {
        for (w, g) in layer.weights.data_mut().iter_mut().zip(grad.weights.data()) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    };
    for (layer, grad) in trunk.iter_mut().zip(&grads.trunk) {
        apply(layer, grad);
    }
    for (head, grad) in heads.iter_mut().zip(&grads.heads) {
        apply(&mut head.layer, grad);
    }
    Ok(())
}

/// Cosine similarity, clamped to `[-1, 1]` against rounding.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, NetError> {
    if u.len() != v.len() {
        return Err(NetError::ShapeMismatch {
            context: "cosine",
            expected: u.len(),
            got: v.len(),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(NetError::ZeroNorm);
    }
    let d: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
    Ok((d / (nu * nv)).clamp(-1.0, 1.0))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[target]` via log-sum-exp.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

/// Central finite-difference gradient check.
///
/// Perturbs every parameter of `trunk` and `heads` by `+/-epsilon`,
/// evaluates `loss_fn`, and returns the maximum over parameters of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(
    trunk: &mut Vec<DenseLayer>,
    heads: &mut Vec<Head>,
    mut loss_fn: F,
    analytic: &GradientSet,
    epsilon: f64,
) -> f64
where
    F: FnMut(&[DenseLayer], &[Head]) -> f64,
{
    fn slot<'a>(
        trunk: &'a mut [DenseLayer],
        heads: &'a mut [Head],
        section: usize,
        li: usize,
        pi: usize,
        wlen: usize,
    ) -> &'a mut f64 {
        let layer = if section == 0 {
            &mut trunk[li]
        } else {
            &mut heads[li].layer
        };
        if pi < wlen {
            &mut layer.weights.data_mut()[pi]
        } else {
            &mut layer.bias[pi - wlen]
        }
    }

    let mut max_rel = 0.0f64;
    for section in 0..2 {
        let layer_count = if section == 0 { trunk.len() } else { heads.len() };
        for li in 0..layer_count {
            let (wlen, blen) = {
                let layer = if section == 0 {
                    &trunk[li]
                } else {
                    &heads[li].layer
                };
                (layer.weights.data().len(), layer.bias.len())
            };
            for pi in 0..wlen + blen {
                let original = *slot(trunk, heads, section, li, pi, wlen);
                *slot(trunk, heads, section, li, pi, wlen) = original + epsilon;
                let plus = loss_fn(trunk, heads);
                *slot(trunk, heads, section, li, pi, wlen) = original - epsilon;
                let minus = loss_fn(trunk, heads);
                *slot(trunk, heads, section, li, pi, wlen) = original;
                let numeric = (plus - minus) / (2.0 * epsilon);
                let grad_layer = if section == 0 {
                    &analytic.trunk[li]
                } else {
                    &analytic.heads[li]
                };
                let analytic_val = if pi < wlen {
                    grad_layer.weights.data()[pi]
                } else {
                    grad_layer.bias[pi - wlen]
                };
                let denom = analytic_val.abs().max(numeric.abs()).max(1e-8);
                let rel = (analytic_val - numeric).abs() / denom;
                if rel > max_rel {
                    max_rel = rel;
                }
            }
        }
    }
    max_rel
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn kind_name(k: HeadKind) -> &'static str {
    match k {
        HeadKind::Normalized => "normalized",
        HeadKind::Softmax => "softmax",
    }
}

/// Serialize trunk and head parameters to the versioned checkpoint text
/// format: a `lmrc-model v1` header, per-layer dims, then row-major
/// values at 17 significant digits.
pub fn model_to_text(trunk: &[DenseLayer], heads: &[Head]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "lmrc-model v1 trunk={} heads={}", trunk.len(), heads.len());
    let write_layer = |out: &mut String, layer: &DenseLayer| {
        for r in 0..layer.out_dim() {
            let mut first = true;
            for c in 0..layer.in_dim() {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{:.16e}", layer.weights.get(r, c));
                first = false;
            }
            out.push('\n');
        }
        let mut first = true;
        for b in &layer.bias {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{b:.16e}");
            first = false;
        }
        out.push('\n');
    };
    for layer in trunk {
        let _ = writeln!(
            out,
            "layer out={} in={} act={}",
            layer.out_dim(),
            layer.in_dim(),
            activation_name(layer.activation)
        );
        write_layer(&mut out, layer);
    }
    for head in heads {
        let _ = writeln!(
            out,
            "head out={} in={} kind={}",
            head.layer.out_dim(),
            head.layer.in_dim(),
            kind_name(head.kind)
        );
        write_layer(&mut out, &head.layer);
    }
    out
}

fn next_line<'a>(
    lines: &mut std::iter::Enumerate<std::str::Lines<'a>>,
) -> Result<(usize, &'a str), NetError> {
    lines.next().ok_or(NetError::Parse {
        line: 0,
        message: "unexpected end of input".into(),
    })
}

fn parse_key_usize(s: &str, key: &str, line: usize) -> Result<usize, NetError> {
    s.strip_prefix(&format!("{key}="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| NetError::Parse {
            line,
            message: format!("expected {key}=<n>, got {s:?}"),
        })
}

fn parse_value_row(
    lines: &mut std::iter::Enumerate<std::str::Lines<'_>>,
    expected: usize,
) -> Result<Vec<f64>, NetError> {
    let (no, line) = next_line(lines)?;
    let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
    let vals = vals.map_err(|e| NetError::Parse {
        line: no + 1,
        message: format!("value: {e}"),
    })?;
    if vals.len() != expected {
        return Err(NetError::Parse {
            line: no + 1,
            message: format!("expected {expected} values, got {}", vals.len()),
        });
    }
    Ok(vals)
}

/// Parse the checkpoint format produced by [`model_to_text`].
pub fn model_from_text(text: &str) -> Result<(Vec<DenseLayer>, Vec<Head>), NetError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = next_line(&mut lines).map_err(|_| NetError::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "lmrc-model" || fields[1] != "v1" {
        return Err(NetError::Parse {
            line: 1,
            message: format!("bad header: {header:?}"),
        });
    }
    let n_trunk = parse_key_usize(fields[2], "trunk", 1)?;
    let n_heads = parse_key_usize(fields[3], "heads", 1)?;

    let mut trunk = Vec::with_capacity(n_trunk);
    let mut heads = Vec::with_capacity(n_heads);
    for idx in 0..n_trunk + n_heads {
        let is_trunk = idx < n_trunk;
        let (no, decl) = next_line(&mut lines)?;
        let fields: Vec<&str> = decl.split_whitespace().collect();
        let tag = if is_trunk { "layer" } else { "head" };
        if fields.len() != 4 || fields[0] != tag {
            return Err(NetError::Parse {
                line: no + 1,
                message: format!("expected {tag} declaration, got {decl:?}"),
            });
        }
        let out_dim = parse_key_usize(fields[1], "out", no + 1)?;
        let in_dim = parse_key_usize(fields[2], "in", no + 1)?;
        let mut rows = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            rows.push(parse_value_row(&mut lines, in_dim)?);
        }
        let bias = parse_value_row(&mut lines, out_dim)?;
        if is_trunk {
            let act = match fields[3] {
                "act=relu" => Activation::Relu,
                "act=identity" => Activation::Identity,
                other => {
                    return Err(NetError::Parse {
                        line: no + 1,
                        message: format!("unknown activation {other:?}"),
                    })
                }
            };
            trunk.push(DenseLayer::new(Matrix::from_rows(rows), bias, act));
        } else {
            let layer = DenseLayer::new(Matrix::from_rows(rows), bias, Activation::Identity);
            let head = match fields[3] {
                "kind=normalized" => Head::normalized(layer),
                "kind=softmax" => Head::softmax(layer),
                other => {
                    return Err(NetError::Parse {
                        line: no + 1,
                        message: format!("unknown head kind {other:?}"),
                    })
                }
            };
            heads.push(head);
        }
    }
    Ok((trunk, heads))
}

pub fn write_model(
    path: &std::path::Path,
    trunk: &[DenseLayer],
    heads: &[Head],
) -> Result<(), NetError> {
    std::fs::write(path, model_to_text(trunk, heads)).map_err(|e| NetError::Io(e.to_string()))
}

pub fn read_model(path: &std::path::Path) -> Result<(Vec<DenseLayer>, Vec<Head>), NetError> {
    let text = std::fs::read_to_string(path).map_err(|e| NetError::Io(e.to_string()))?;
    model_from_text(&text)
}
