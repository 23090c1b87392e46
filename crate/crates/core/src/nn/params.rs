//! Parameter containers. Each struct is generic over its leaf type so the same
//! shape serves as weights (`Tensor`), bound tape handles (`Var`), gradients
//! and optimiser moments.

use rand::Rng;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Walks the leaves of a parameter tree in a fixed order with dotted names.
pub trait ParamTree<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T));

    fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.visit("", &mut |_, t| out.push(t));
        out
    }

    fn leaves_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |_, t| out.push(t));
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit("", &mut |name, _| out.push(name));
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrix.
pub fn uniform_init<S: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Tensor<S> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| S::lit(rng.gen_range(-bound..bound)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: T,
    pub bias: Option<T>,
}

impl<T> Linear<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> Linear<U> {
        Linear {
            weight: f(&self.weight),
            bias: self.bias.as_ref().map(&mut *f),
        }
    }
}

impl<S: Scalar> Linear<Tensor<S>> {
    pub fn init<R: Rng>(rng: &mut R, d_in: usize, d_out: usize, bias: bool) -> Self {
        Linear {
            weight: uniform_init(rng, d_in, d_out, d_in),
            bias: bias.then(|| uniform_init(rng, 1, d_out, d_in)),
        }
    }
}

impl<T> ParamTree<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(join(prefix, "bias"), b);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        f(join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(join(prefix, "bias"), b);
        }
    }
}

/// Affine parameters of an instance normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gamma: T,
    pub beta: T,
}

impl<T> Norm<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> Norm<U> {
        Norm {
            gamma: f(&self.gamma),
            beta: f(&self.beta),
        }
    }
}

impl<S: Scalar> Norm<Tensor<S>> {
    pub fn init(d: usize) -> Self {
        Norm {
            gamma: Tensor::filled(1, d, S::one()),
            beta: Tensor::zeros(1, d),
        }
    }
}

impl<T> ParamTree<T> for Norm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
}

/// Multi-head attention weights. Head `m` owns columns `m*d_k..(m+1)*d_k` of
/// `wq`, `wk`, `wv` and rows `m*d_k..(m+1)*d_k` of `wo`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub wo: T,
    pub bo: Option<T>,
}

impl<T> Attention<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> Attention<U> {
        Attention {
            wq: f(&self.wq),
            wk: f(&self.wk),
            wv: f(&self.wv),
            wo: f(&self.wo),
            bo: self.bo.as_ref().map(&mut *f),
        }
    }
}

impl<S: Scalar> Attention<Tensor<S>> {
    pub fn init<R: Rng>(rng: &mut R, d: usize, out_bias: bool) -> Self {
        Attention {
            wq: uniform_init(rng, d, d, d),
            wk: uniform_init(rng, d, d, d),
            wv: uniform_init(rng, d, d, d),
            wo: uniform_init(rng, d, d, d),
            bo: out_bias.then(|| uniform_init(rng, 1, d, d)),
        }
    }
}

impl<T> ParamTree<T> for Attention<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(join(prefix, "wq"), &self.wq);
        f(join(prefix, "wk"), &self.wk);
        f(join(prefix, "wv"), &self.wv);
        f(join(prefix, "wo"), &self.wo);
        if let Some(b) = &self.bo {
            f(join(prefix, "bo"), b);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        f(join(prefix, "wq"), &mut self.wq);
        f(join(prefix, "wk"), &mut self.wk);
        f(join(prefix, "wv"), &mut self.wv);
        f(join(prefix, "wo"), &mut self.wo);
        if let Some(b) = &mut self.bo {
            f(join(prefix, "bo"), b);
        }
    }
}

/// Attention, skip, norm, feed-forward, skip, norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock<T> {
    pub attn: Attention<T>,
    pub norm1: Norm<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
    pub norm2: Norm<T>,
}

impl<T> EncoderBlock<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> EncoderBlock<U> {
        EncoderBlock {
            attn: self.attn.map(f),
            norm1: self.norm1.map(f),
            ff1: self.ff1.map(f),
            ff2: self.ff2.map(f),
            norm2: self.norm2.map(f),
        }
    }
}

impl<S: Scalar> EncoderBlock<Tensor<S>> {
    pub fn init<R: Rng>(rng: &mut R, d: usize, ff_hidden: usize) -> Self {
        EncoderBlock {
            attn: Attention::init(rng, d, true),
            norm1: Norm::init(d),
            ff1: Linear::init(rng, d, ff_hidden, true),
            ff2: Linear::init(rng, ff_hidden, d, true),
            norm2: Norm::init(d),
        }
    }
}

impl<T> ParamTree<T> for EncoderBlock<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.attn.visit(&join(prefix, "attn"), f);
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.ff1.visit(&join(prefix, "ff1"), f);
        self.ff2.visit(&join(prefix, "ff2"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.ff1.visit_mut(&join(prefix, "ff1"), f);
        self.ff2.visit_mut(&join(prefix, "ff2"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
    }
}
