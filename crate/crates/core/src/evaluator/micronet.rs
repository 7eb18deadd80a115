//! Dense student/teacher network decoded from a [`NetworkPlan`], with a
//! hand-written backward pass.
//!
//! All parameters live in one flat vector so the optimizer and gradient checks
//! can treat the network as a point in `R^n`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::plan::{LayerPlan, NetworkPlan, Skip};
use crate::seed;
use crate::space::OpType;

/// Initial bias of the squeeze-excite gate; opens the gate to ~0.88.
const SE_GATE_BIAS: f64 = 2.0;

#[derive(Clone, Debug)]
struct LayerSlots {
    w: usize,
    b: usize,
    se: Option<SeSlots>,
    proj: Option<usize>,
    gate: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
struct SeSlots {
    hidden: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
pub struct MicroNet {
    plan: NetworkPlan,
    classes: usize,
    slots: Vec<LayerSlots>,
    head_w: usize,
    head_b: usize,
    params: Vec<f64>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Clone, Debug, Default)]
struct LayerTrace {
    x: Vec<f64>,
    pre: Vec<f64>,
    z: Vec<f64>,
    se_u: Vec<f64>,
    se_v: Vec<f64>,
    se_g: Vec<f64>,
    px: Vec<f64>,
    gate: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    layers: Vec<LayerTrace>,
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
}

fn activate(op: OpType, x: f64) -> f64 {
    match op {
        OpType::Relu => x.max(0.0),
        OpType::Swish => x * sigmoid(x),
        OpType::Tanh => x.tanh(),
    }
}

fn activate_grad(op: OpType, x: f64) -> f64 {
    match op {
        OpType::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        OpType::Swish => {
            let s = sigmoid(x);
            s + x * s * (1.0 - s)
        }
        OpType::Tanh => 1.0 - x.tanh().powi(2),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W x + b` for row-major `W` of shape `rows x x.len()`.
fn affine(p: &[f64], w: usize, b: Option<usize>, rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            let row = &p[w + r * cols..w + (r + 1) * cols];
            let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            dot + b.map_or(0.0, |b| p[b + r])
        })
        .collect()
}

/// Accumulates `dW += dy x^T`, `db += dy` and `dx += W^T dy`.
fn affine_backward(
    p: &[f64],
    g: &mut [f64],
    w: usize,
    b: Option<usize>,
    x: &[f64],
    dy: &[f64],
    dx: &mut [f64],
) {
    let cols = x.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let base = w + r * cols;
        for c in 0..cols {
            g[base + c] += d * x[c];
            dx[c] += d * p[base + c];
        }
        if let Some(b) = b {
            g[b + r] += d;
        }
    }
}

impl MicroNet {
    /// Fresh network with seeded initialization: He-uniform for relu/swish,
    /// Glorot-uniform for tanh, zero biases.
    pub fn new(plan: NetworkPlan, classes: usize, init_seed: u64) -> Self {
        let mut n = 0;
        let mut take = |k: usize| {
            let o = n;
            n += k;
            o
        };
        let slots: Vec<LayerSlots> = plan
            .layers
            .iter()
            .map(|l| {
                let w = take(l.input * l.output);
                let b = take(l.output);
                let se = l.se_hidden.map(|r| SeSlots {
                    hidden: r,
                    w1: take(r * l.output),
                    b1: take(r),
                    w2: take(l.output * r),
                    b2: take(l.output),
                });
                let proj = l.skip.has_projection().then(|| take(l.output * l.input));
                let gate = l.skip.is_gated().then(|| take(l.output));
                LayerSlots {
                    w,
                    b,
                    se,
                    proj,
                    gate,
                }
            })
            .collect();
        let feat = plan.feature_width();
        let head_w = take(classes * feat);
        let head_b = take(classes);

        let mut params = vec![0.0; n];
        let mut rng = seed::rng(seed::derive(init_seed, &[seed::stream::INIT]));
        let mut fill = |params: &mut [f64], off: usize, len: usize, bound: f64| {
            for v in &mut params[off..off + len] {
                *v = rng.random_range(-bound..bound);
            }
        };
        for (l, s) in plan.layers.iter().zip(&slots) {
            let bound = match l.op {
                OpType::Tanh => (6.0 / (l.input + l.output) as f64).sqrt(),
                _ => (6.0 / l.input as f64).sqrt(),
            };
            fill(&mut params, s.w, l.input * l.output, bound);
            if let Some(se) = s.se {
                fill(
                    &mut params,
                    se.w1,
                    se.hidden * l.output,
                    (6.0 / l.output as f64).sqrt(),
                );
                fill(
                    &mut params,
                    se.w2,
                    l.output * se.hidden,
                    (3.0 / se.hidden as f64).sqrt(),
                );
                params[se.b2..se.b2 + l.output].fill(SE_GATE_BIAS);
            }
            if let Some(p) = s.proj {
                let bound = (6.0 / (l.input + l.output) as f64).sqrt();
                fill(&mut params, p, l.output * l.input, bound);
            }
        }
        fill(
            &mut params,
            head_w,
            classes * feat,
            (6.0 / (feat + classes) as f64).sqrt(),
        );

        Self {
            plan,
            classes,
            slots,
            head_w,
            head_b,
            params,
        }
    }

    pub fn plan(&self) -> &NetworkPlan {
        &self.plan
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_width(&self) -> usize {
        self.plan.input_width
    }

    pub fn feature_width(&self) -> usize {
        self.plan.feature_width()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Forward pass recording everything the backward pass needs.
    pub fn forward(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.plan.input_width, "input width");
        let p = &self.params;
        let mut cur = x.to_vec();
        let mut layers = Vec::with_capacity(self.slots.len());
        for (l, s) in self.plan.layers.iter().zip(&self.slots) {
            let (y, t) = self.layer_forward(l, s, cur);
            layers.push(t);
            cur = y;
        }
        let logits = affine(p, self.head_w, Some(self.head_b), self.classes, &cur);
        Trace {
            layers,
            features: cur,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).logits
    }

    fn layer_forward(&self, l: &LayerPlan, s: &LayerSlots, x: Vec<f64>) -> (Vec<f64>, LayerTrace) {
        let p = &self.params;
        let pre = affine(p, s.w, Some(s.b), l.output, &x);
        let z: Vec<f64> = pre.iter().map(|&v| activate(l.op, v)).collect();
        let mut t = LayerTrace::default();
        let mut y = z.clone();
        if let Some(se) = s.se {
            let u = affine(p, se.w1, Some(se.b1), se.hidden, &z);
            let v: Vec<f64> = u.iter().map(|&a| a.max(0.0)).collect();
            let g: Vec<f64> = affine(p, se.w2, Some(se.b2), l.output, &v)
                .into_iter()
                .map(sigmoid)
                .collect();
            y.iter_mut().zip(&g).for_each(|(a, g)| *a *= g);
            t.se_u = u;
            t.se_v = v;
            t.se_g = g;
        }
        let skip_in: Option<Vec<f64>> = match l.skip {
            Skip::None => None,
            Skip::Identity | Skip::GatedIdentity => Some(x.clone()),
            Skip::Projection | Skip::GatedProjection => {
                let px = affine(p, s.proj.expect("projection slot"), None, l.output, &x);
                t.px = px.clone();
                Some(px)
            }
        };
        if let Some(sk) = skip_in {
            if let Some(gs) = s.gate {
                let gate: Vec<f64> = p[gs..gs + l.output].iter().map(|&a| sigmoid(a)).collect();
                y.iter_mut()
                    .zip(sk.iter().zip(&gate))
                    .for_each(|(a, (k, g))| *a += g * k);
                t.gate = gate;
            } else {
                y.iter_mut().zip(&sk).for_each(|(a, k)| *a += k);
            }
        }
        t.x = x;
        t.pre = pre;
        t.z = z;
        (y, t)
    }

    /// Accumulates parameter gradients into `grad` given `dL/dlogits` and an
    /// optional extra `dL/dfeatures` (feature distillation).
    pub fn backward(
        &self,
        trace: &Trace,
        dlogits: &[f64],
        dfeatures: Option<&[f64]>,
        grad: &mut [f64],
    ) {
        assert_eq!(grad.len(), self.params.len());
        let p = &self.params;
        let mut dy = vec![0.0; trace.features.len()];
        affine_backward(
            p,
            grad,
            self.head_w,
            Some(self.head_b),
            &trace.features,
            dlogits,
            &mut dy,
        );
        if let Some(df) = dfeatures {
            dy.iter_mut().zip(df).for_each(|(a, b)| *a += b);
        }
        for ((l, s), t) in self
            .plan
            .layers
            .iter()
            .zip(&self.slots)
            .zip(&trace.layers)
            .rev()
        {
            dy = self.layer_backward(l, s, t, &dy, grad);
        }
    }

    fn layer_backward(
        &self,
        l: &LayerPlan,
        s: &LayerSlots,
        t: &LayerTrace,
        dy: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let p = &self.params;
        let mut dx = vec![0.0; l.input];

        // skip path
        match l.skip {
            Skip::None => {}
            Skip::Identity => dx.iter_mut().zip(dy).for_each(|(a, d)| *a += d),
            Skip::GatedIdentity => {
                let gs = s.gate.expect("gate slot");
                for i in 0..l.output {
                    let g = t.gate[i];
                    dx[i] += dy[i] * g;
                    grad[gs + i] += dy[i] * t.x[i] * g * (1.0 - g);
                }
            }
            Skip::Projection | Skip::GatedProjection => {
                let dpx: Vec<f64> = if let Some(gs) = s.gate {
                    (0..l.output)
                        .map(|i| {
                            let g = t.gate[i];
                            grad[gs + i] += dy[i] * t.px[i] * g * (1.0 - g);
                            dy[i] * g
                        })
                        .collect()
                } else {
                    dy.to_vec()
                };
                affine_backward(
                    p,
                    grad,
                    s.proj.expect("projection slot"),
                    None,
                    &t.x,
                    &dpx,
                    &mut dx,
                );
            }
        }

        // gated main path
        let mut dz: Vec<f64> = match s.se {
            None => dy.to_vec(),
            Some(se) => {
                let dz: Vec<f64> = dy.iter().zip(&t.se_g).map(|(d, g)| d * g).collect();
                let dgpre: Vec<f64> = (0..l.output)
                    .map(|i| {
                        let g = t.se_g[i];
                        dy[i] * t.z[i] * g * (1.0 - g)
                    })
                    .collect();
                let mut dv = vec![0.0; se.hidden];
                affine_backward(p, grad, se.w2, Some(se.b2), &t.se_v, &dgpre, &mut dv);
                let du: Vec<f64> = dv
                    .iter()
                    .zip(&t.se_u)
                    .map(|(d, &u)| if u > 0.0 { *d } else { 0.0 })
                    .collect();
                let mut dz_se = vec![0.0; l.output];
                affine_backward(p, grad, se.w1, Some(se.b1), &t.z, &du, &mut dz_se);
                dz.iter().zip(&dz_se).map(|(a, b)| a + b).collect()
            }
        };
        dz.iter_mut()
            .zip(&t.pre)
            .for_each(|(d, &pre)| *d *= activate_grad(l.op, pre));
        affine_backward(p, grad, s.w, Some(s.b), &t.x, &dz, &mut dx);
        dx
    }

    /// Index of the largest logit.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Dense adapter mapping student features onto the teacher feature width.
#[derive(Clone, Debug)]
pub struct Adapter {
    pub input: usize,
    pub output: usize,
    pub params: Vec<f64>,
}

impl Adapter {
    pub fn new(input: usize, output: usize, init_seed: u64) -> Self {
        let mut rng = seed::rng(init_seed);
        let scale = (1.0 / input as f64).sqrt();
        let mut params = vec![0.0; output * input + output];
        for v in &mut params[..output * input] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * scale;
        }
        Self {
            input,
            output,
            params,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        affine(
            &self.params,
            0,
            Some(self.output * self.input),
            self.output,
            x,
        )
    }

    /// Accumulates adapter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        affine_backward(
            &self.params,
            grad,
            0,
            Some(self.output * self.input),
            x,
            dy,
            &mut dx,
        );
        dx
    }
}
