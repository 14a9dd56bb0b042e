use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::RlError;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(S::zero()),
        }
    }

    /// Derivative expressed through the activation's output.
    fn grad_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => S::one() - y * y,
            Activation::Relu => {
                if y > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
        }
    }
}

/// Actor-critic layout: `feature_depth` shared layers, then separate
/// policy and value heads of `head_depth` hidden layers each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyArch {
    pub feature_depth: usize,
    pub head_depth: usize,
    pub width: usize,
    pub activation: Activation,
    /// Apply the first layer block-wise with one weight matrix shared by
    /// every eNB's slice of the observation.
    pub enb_shared_first_layer: bool,
    pub ortho_init: bool,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            feature_depth: 0,
            head_depth: 2,
            width: 256,
            activation: Activation::Relu,
            enb_shared_first_layer: false,
            ortho_init: false,
        }
    }
}

/// Input and output sizes of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub obs_len: usize,
    /// Number of equal observation blocks (eNBs).
    pub groups: usize,
    pub num_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Weight matrix is `rows × cols`, applied to each of `blocks` input slices.
    pub rows: usize,
    pub cols: usize,
    pub blocks: usize,
    pub activated: bool,
    #[serde(skip)]
    offset: usize,
    #[serde(skip)]
    gain: f64,
}

impl LayerSpec {
    fn new(name: String, rows: usize, cols: usize, blocks: usize, activated: bool, gain: f64) -> Self {
        Self { name, rows, cols, blocks, activated, offset: 0, gain }
    }

    pub fn in_dim(&self) -> usize {
        self.rows * self.blocks
    }

    pub fn out_dim(&self) -> usize {
        self.cols * self.blocks
    }

    pub fn num_params(&self) -> usize {
        self.rows * self.cols + self.cols
    }

    fn weight<'a, S: Scalar>(&self, p: &'a [S]) -> ArrayView2<'a, S> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.offset..self.offset + self.rows * self.cols])
            .expect("layer slice matches its shape")
    }

    fn bias<'a, S: Scalar>(&self, p: &'a [S]) -> ArrayView1<'a, S> {
        let b = self.offset + self.rows * self.cols;
        ArrayView1::from(&p[b..b + self.cols])
    }

    fn forward<S: Scalar>(&self, p: &[S], x: &Array2<S>, act: Activation) -> Array2<S> {
        let n = x.nrows();
        let xr = x.view().into_shape_with_order((n * self.blocks, self.rows)).expect("standard layout");
        let mut z = xr.dot(&self.weight(p));
        z += &self.bias(p);
        if self.activated {
            z.mapv_inplace(|v| act.apply(v));
        }
        z.into_shape_clone((n, self.out_dim())).expect("element count matches")
    }

    /// Accumulates parameter gradients into `g` and returns the input
    /// gradient when `need_dx`.
    fn backward<S: Scalar>(
        &self,
        p: &[S],
        g: &mut [S],
        x: &Array2<S>,
        y: &Array2<S>,
        mut dy: Array2<S>,
        act: Activation,
        need_dx: bool,
    ) -> Option<Array2<S>> {
        if self.activated {
            dy.zip_mut_with(y, |d, &out| *d *= act.grad_from_output(out));
        }
        let n = x.nrows();
        let xr = x.view().into_shape_with_order((n * self.blocks, self.rows)).expect("standard layout");
        let dz = dy.into_shape_clone((n * self.blocks, self.cols)).expect("element count matches");
        let dw = xr.t().dot(&dz);
        let w_len = self.rows * self.cols;
        for (gi, d) in g[self.offset..self.offset + w_len].iter_mut().zip(dw.iter()) {
            *gi += *d;
        }
        let db = dz.sum_axis(Axis(0));
        for (gi, d) in g[self.offset + w_len..self.offset + w_len + self.cols].iter_mut().zip(db.iter()) {
            *gi += *d;
        }
        need_dx.then(|| {
            dz.dot(&self.weight(p).t()).into_shape_clone((n, self.in_dim())).expect("element count matches")
        })
    }
}

/// Activations recorded by a training forward pass.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    input: Array2<S>,
    trunk: Vec<Array2<S>>,
    pi: Vec<Array2<S>>,
    vf: Vec<Array2<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn logits(&self) -> &Array2<S> {
        self.pi.last().expect("policy head has an output layer")
    }

    pub fn values(&self) -> ArrayView1<'_, S> {
        self.vf.last().expect("value head has an output layer").column(0)
    }
}

/// Policy/value network with all weights in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<S> {
    arch: PolicyArch,
    shape: NetShape,
    trunk: Vec<LayerSpec>,
    pi: Vec<LayerSpec>,
    vf: Vec<LayerSpec>,
    params: Vec<S>,
}

fn build_layers(arch: &PolicyArch, shape: &NetShape) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>, Vec<LayerSpec>), RlError> {
    if arch.width == 0 {
        return Err(RlError::Config("network width must be positive".into()));
    }
    if shape.obs_len == 0 || shape.num_actions == 0 {
        return Err(RlError::Config("network needs inputs and actions".into()));
    }
    if arch.enb_shared_first_layer && (shape.groups == 0 || !shape.obs_len.is_multiple_of(shape.groups)) {
        return Err(RlError::Config(format!(
            "observation length {} does not split into {} equal blocks",
            shape.obs_len, shape.groups
        )));
    }
    let relu_gain = 2f64.sqrt();
    // Shared first layer: each block gets ceil(width / groups) units.
    let first = |name: String, in_dim: usize| {
        if arch.enb_shared_first_layer {
            let per = arch.width.div_ceil(shape.groups);
            LayerSpec::new(name, in_dim / shape.groups, per, shape.groups, true, relu_gain)
        } else {
            LayerSpec::new(name, in_dim, arch.width, 1, true, relu_gain)
        }
    };
    let mut trunk = Vec::new();
    let mut dim = shape.obs_len;
    for i in 0..arch.feature_depth {
        let l = if i == 0 {
            first(format!("trunk.{i}"), dim)
        } else {
            LayerSpec::new(format!("trunk.{i}"), dim, arch.width, 1, true, relu_gain)
        };
        dim = l.out_dim();
        trunk.push(l);
    }
    let head = |prefix: &str, out: usize, out_gain: f64| {
        let mut layers = Vec::new();
        let mut d = dim;
        for i in 0..arch.head_depth {
            let l = if i == 0 && arch.feature_depth == 0 {
                first(format!("{prefix}.{i}"), d)
            } else {
                LayerSpec::new(format!("{prefix}.{i}"), d, arch.width, 1, true, relu_gain)
            };
            d = l.out_dim();
            layers.push(l);
        }
        layers.push(LayerSpec::new(format!("{prefix}.out"), d, out, 1, false, out_gain));
        layers
    };
    let pi = head("pi", shape.num_actions, 0.01);
    let vf = head("vf", 1, 1.0);
    Ok((trunk, pi, vf))
}

/// Gram-Schmidt on standard normal draws: orthonormal columns when
/// `rows ≥ cols`, orthonormal rows otherwise.
fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (n, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { vecs[c][r] } else { vecs[r][c] };
        }
    }
    out
}

impl<S: Scalar> ActorCritic<S> {
    /// Randomly initialised network.
    pub fn new(arch: PolicyArch, shape: NetShape, seed: u64) -> Result<Self, RlError> {
        let mut net = Self::zeros(arch, shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ortho = net.arch.ortho_init;
        for l in net.trunk.iter().chain(&net.pi).chain(&net.vf) {
            let w_len = l.rows * l.cols;
            let dst = &mut net.params[l.offset..l.offset + l.num_params()];
            if ortho {
                for (d, v) in dst.iter_mut().zip(orthogonal(l.rows, l.cols, &mut rng)) {
                    *d = S::lit(v * l.gain);
                }
                dst[w_len..].iter_mut().for_each(|b| *b = S::zero());
            } else {
                let bound = 1.0 / (l.rows as f64).sqrt();
                for d in dst.iter_mut() {
                    *d = S::lit(rng.random_range(-bound..bound));
                }
            }
        }
        Ok(net)
    }

    /// Network with every weight and bias zero.
    pub fn zeros(arch: PolicyArch, shape: NetShape) -> Result<Self, RlError> {
        let (mut trunk, mut pi, mut vf) = build_layers(&arch, &shape)?;
        let mut offset = 0;
        for l in trunk.iter_mut().chain(pi.iter_mut()).chain(vf.iter_mut()) {
            l.offset = offset;
            offset += l.num_params();
        }
        Ok(Self { arch, shape, trunk, pi, vf, params: vec![S::zero(); offset] })
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    /// Layers in parameter order: trunk, policy head, value head.
    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.trunk.iter().chain(&self.pi).chain(&self.vf)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<S>) -> Result<(), RlError> {
        if params.len() != self.params.len() {
            return Err(RlError::Shape { expected: self.params.len(), got: params.len() });
        }
        self.params = params;
        Ok(())
    }

    fn check_batch(&self, x: &ArrayView2<S>) -> Result<(), RlError> {
        if x.ncols() != self.shape.obs_len {
            return Err(RlError::Shape { expected: self.shape.obs_len, got: x.ncols() });
        }
        Ok(())
    }

    /// Forward pass keeping every activation for [`Self::backward`].
    pub fn forward_tape(&self, x: ArrayView2<S>) -> Result<Tape<S>, RlError> {
        self.check_batch(&x)?;
        let act = self.arch.activation;
        let p = &self.params;
        let input = x.as_standard_layout().into_owned();
        let chain = |layers: &[LayerSpec], start: &Array2<S>| {
            let mut outs: Vec<Array2<S>> = Vec::with_capacity(layers.len());
            for l in layers {
                let y = l.forward(p, outs.last().unwrap_or(start), act);
                outs.push(y);
            }
            outs
        };
        let trunk = chain(&self.trunk, &input);
        let features = trunk.last().unwrap_or(&input);
        let pi = chain(&self.pi, features);
        let vf = chain(&self.vf, features);
        Ok(Tape { input, trunk, pi, vf })
    }

    /// Batched logits (`B × actions`) and values (`B`).
    pub fn forward_batch(&self, x: ArrayView2<S>) -> Result<(Array2<S>, Array1<S>), RlError> {
        let mut tape = self.forward_tape(x)?;
        let values = tape.values().to_owned();
        Ok((tape.pi.pop().expect("output layer"), values))
    }

    /// Logits and value for a single observation.
    pub fn forward(&self, obs: &[S]) -> Result<(Vec<S>, S), RlError> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let (logits, values) = self.forward_batch(x)?;
        Ok((logits.row(0).to_vec(), values[0]))
    }

    /// Output of the first layer that sees raw observations.
    pub fn first_layer_output(&self, x: ArrayView2<S>) -> Result<Array2<S>, RlError> {
        self.check_batch(&x)?;
        let l = self.trunk.first().or(self.pi.first()).expect("network has layers");
        Ok(l.forward(&self.params, &x.as_standard_layout().into_owned(), self.arch.activation))
    }

    /// Gradient of a loss with respect to the flat parameters, given the
    /// loss gradients at the logits and values of a recorded pass.
    pub fn backward(&self, tape: &Tape<S>, dlogits: Array2<S>, dvalues: ArrayView1<S>) -> Vec<S> {
        let act = self.arch.activation;
        let p = &self.params;
        let mut g = vec![S::zero(); p.len()];
        let has_trunk = !self.trunk.is_empty();
        let features = tape.trunk.last().unwrap_or(&tape.input);
        let chain = |g: &mut Vec<S>, layers: &[LayerSpec], outs: &[Array2<S>], start: &Array2<S>, dy: Array2<S>, need_input: bool| {
            let mut dy = Some(dy);
            for i in (0..layers.len()).rev() {
                let x = if i == 0 { start } else { &outs[i - 1] };
                let need = i > 0 || need_input;
                dy = layers[i].backward(p, g, x, &outs[i], dy.take().expect("gradient flows"), act, need);
            }
            dy
        };
        let dv = dvalues.insert_axis(Axis(1)).to_owned();
        let d_pi = chain(&mut g, &self.pi, &tape.pi, features, dlogits, has_trunk);
        let d_vf = chain(&mut g, &self.vf, &tape.vf, features, dv, has_trunk);
        if let (Some(mut df), Some(dv)) = (d_pi, d_vf) {
            df += &dv;
            chain(&mut g, &self.trunk, &tape.trunk, &tape.input, df, false);
        }
        g
    }

    /// Converts the weights to another precision.
    pub fn cast<T: Scalar>(&self) -> ActorCritic<T> {
        ActorCritic {
            arch: self.arch.clone(),
            shape: self.shape,
            trunk: self.trunk.clone(),
            pi: self.pi.clone(),
            vf: self.vf.clone(),
            params: self.params.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

/// Row-wise log-softmax.
pub fn log_softmax<S: Scalar>(logits: &Array2<S>) -> Array2<S> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<S>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}
