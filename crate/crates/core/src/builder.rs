//! Layer-by-layer network construction from linear forms.
//!
//! A [`Form`] is a linear combination of the neurons of the most recent
//! layer (or of the inputs, before any layer exists) plus a constant. A
//! neuron computes `σ(form)`; its constant becomes the negated shift, so
//! constants must lie in `[-1, 1]` like every other weight.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::network::{Architecture, Layer, Network, SparseMatrix};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Form {
    terms: BTreeMap<usize, f64>,
    constant: f64,
}

impl Form {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, coef: f64) -> Self {
        let mut terms = BTreeMap::new();
        if coef != 0.0 {
            terms.insert(i, coef);
        }
        Self { terms, constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: BTreeMap::new(), constant: c }
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.terms.iter().map(|(&i, &c)| (i, c))
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn scale(&self, s: f64) -> Self {
        let terms = self.terms.iter().map(|(&i, &c)| (i, c * s)).filter(|(_, c)| *c != 0.0).collect();
        Self { terms, constant: self.constant * s }
    }

    pub fn add(&self, other: &Form) -> Self {
        let mut terms = self.terms.clone();
        for (&i, &c) in &other.terms {
            let e = terms.entry(i).or_insert(0.0);
            *e += c;
            if *e == 0.0 {
                terms.remove(&i);
            }
        }
        Self { terms, constant: self.constant + other.constant }
    }

    pub fn sub(&self, other: &Form) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn plus(&self, c: f64) -> Self {
        Self { terms: self.terms.clone(), constant: self.constant + c }
    }

    /// Evaluates the form on the values of the layer it refers to.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |a, (&i, &c)| a + c * values[i])
    }
}

/// Sum of scaled forms.
pub fn combine(parts: &[(f64, &Form)]) -> Form {
    parts.iter().fold(Form::zero(), |acc, (s, f)| acc.add(&f.scale(*s)))
}

/// Accumulates hidden layers one at a time.
#[derive(Debug)]
pub struct NetBuilder {
    dims: Vec<usize>,
    weights: Vec<SparseMatrix>,
    shifts: Vec<Vec<f64>>,
}

/// Neurons of the layer under construction.
#[derive(Debug, Default)]
pub struct LayerBuilder {
    neurons: Vec<Form>,
}

impl NetBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self { dims: vec![input_dim], weights: Vec::new(), shifts: Vec::new() }
    }

    /// Width of the current frontier.
    pub fn frontier(&self) -> usize {
        *self.dims.last().expect("nonempty")
    }

    pub fn hidden_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn matrix(&self, rows: &[Form]) -> Result<SparseMatrix> {
        let cols = self.frontier();
        let triples = rows.iter().enumerate().flat_map(|(r, f)| f.terms().map(move |(c, v)| (r, c, v))).collect();
        SparseMatrix::new(rows.len(), cols, triples)
    }

    pub fn push(&mut self, layer: LayerBuilder) -> Result<()> {
        if layer.neurons.is_empty() {
            return Err(Error::InvalidParameter("hidden layer without neurons".into()));
        }
        let w = self.matrix(&layer.neurons)?;
        self.weights.push(w);
        self.shifts.push(layer.neurons.iter().map(|f| -f.constant).collect());
        self.dims.push(layer.neurons.len());
        Ok(())
    }

    /// Final linear layer. Outputs cannot carry constants.
    pub fn finish(mut self, outputs: &[Form]) -> Result<Network> {
        if let Some(f) = outputs.iter().find(|f| f.constant != 0.0) {
            return Err(Error::Precondition(format!(
                "output form has constant {} but the last layer is linear",
                f.constant
            )));
        }
        let w = self.matrix(outputs)?;
        self.weights.push(w);
        self.dims.push(outputs.len());
        let mut layers = Vec::with_capacity(self.weights.len());
        let mut shifts = std::iter::once(Vec::new()).chain(self.shifts);
        for w in self.weights {
            layers.push(Layer { w, v: shifts.next().expect("one shift vector per layer") });
        }
        Network::new(Architecture::new(self.dims)?, layers)
    }
}

impl LayerBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// Adds the neuron `σ(f)` and returns it as a form on the new layer.
    pub fn neuron(&mut self, f: Form) -> Form {
        self.neurons.push(f);
        Form::var(self.neurons.len() - 1)
    }

    /// The constant 1.
    pub fn one(&mut self) -> Form {
        self.neuron(Form::constant(1.0))
    }

    /// Identity valid for any real input.
    pub fn identity(&mut self, f: &Form) -> Form {
        let a = self.neuron(f.plus(1.0));
        let b = self.neuron(f.scale(-1.0).plus(-1.0));
        let c = self.neuron(f.plus(-1.0));
        let d = self.neuron(f.scale(-1.0).plus(1.0));
        combine(&[(0.25, &a), (0.25, &b), (-0.25, &c), (-0.25, &d)])
    }

    /// Identity valid on `[-1, 1]`.
    pub fn identity_unit(&mut self, f: &Form) -> Form {
        let a = self.neuron(f.plus(1.0));
        let b = self.neuron(f.scale(-1.0).plus(1.0));
        combine(&[(0.25, &a), (-0.25, &b)])
    }

    /// Identity valid for inputs `>= -1`.
    pub fn identity_nonneg(&mut self, f: &Form) -> Form {
        let a = self.neuron(f.plus(1.0));
        let b = self.neuron(f.plus(-1.0));
        let c = self.neuron(f.scale(-1.0).plus(1.0));
        combine(&[(0.25, &a), (-0.25, &b), (-0.25, &c)])
    }

    /// Identity valid for inputs `>= 1`.
    pub fn identity_pos(&mut self, f: &Form) -> Form {
        let a = self.neuron(f.plus(1.0));
        let b = self.neuron(f.plus(-1.0));
        combine(&[(0.25, &a), (-0.25, &b)])
    }

    /// `a * b` for any reals, via `((a+b)^2 - (a-b)^2) / 4`.
    pub fn product(&mut self, a: &Form, b: &Form) -> Form {
        let s = a.add(b);
        let t = a.sub(b);
        let n0 = self.neuron(s.clone());
        let n1 = self.neuron(s.scale(-1.0));
        let n2 = self.neuron(t.clone());
        let n3 = self.neuron(t.scale(-1.0));
        combine(&[(0.25, &n0), (0.25, &n1), (-0.25, &n2), (-0.25, &n3)])
    }

    /// `a * b` when `a + b >= 0`.
    pub fn product_nonneg(&mut self, a: &Form, b: &Form) -> Form {
        let t = a.sub(b);
        let n0 = self.neuron(a.add(b));
        let n1 = self.neuron(t.clone());
        let n2 = self.neuron(t.scale(-1.0));
        combine(&[(0.25, &n0), (-0.25, &n1), (-0.25, &n2)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(build: impl Fn(&mut LayerBuilder, &Form, &Form) -> Form, x: [f64; 2]) -> f64 {
        let mut b = NetBuilder::new(2);
        let mut l = LayerBuilder::new();
        let out = build(&mut l, &Form::var(0), &Form::var(1));
        b.push(l).unwrap();
        b.finish(&[out]).unwrap().forward(&x).unwrap()[0]
    }

    #[test]
    fn identities() {
        for x in [-3.0, -1.0, -0.4, 0.0, 0.7, 1.0, 2.5] {
            assert!((run(|l, a, _| l.identity(a), [x, 0.0]) - x).abs() < 1e-14);
        }
        for x in [-1.0, -0.4, 0.0, 0.7, 1.0] {
            assert!((run(|l, a, _| l.identity_unit(a), [x, 0.0]) - x).abs() < 1e-15);
        }
        for x in [-1.0, 0.0, 0.3, 1.0, 7.0] {
            assert!((run(|l, a, _| l.identity_nonneg(a), [x, 0.0]) - x).abs() < 1e-14);
        }
        for x in [1.0, 2.0, 16.0] {
            assert!((run(|l, a, _| l.identity_pos(a), [x, 0.0]) - x).abs() < 1e-13);
        }
    }

    #[test]
    fn products() {
        for (a, b) in [(2.0, 3.0), (-1.5, 2.0), (0.5, -0.25), (0.0, 4.0)] {
            assert!((run(|l, x, y| l.product(x, y), [a, b]) - a * b).abs() < 1e-14);
        }
        for (a, b) in [(2.0, 3.0), (-0.5, 2.0), (0.25, 0.0)] {
            assert!((run(|l, x, y| l.product_nonneg(x, y), [a, b]) - a * b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_neuron_and_bounds() {
        let mut b = NetBuilder::new(1);
        let mut l = LayerBuilder::new();
        let one = l.one();
        b.push(l).unwrap();
        let net = b.finish(&[one.scale(0.5)]).unwrap();
        assert_eq!(net.forward(&[9.0]).unwrap(), vec![0.5]);

        let mut b = NetBuilder::new(1);
        let mut l = LayerBuilder::new();
        l.neuron(Form::var(0).plus(2.0));
        b.push(l).unwrap();
        assert!(b.finish(&[Form::var(0)]).is_err());

        let b = NetBuilder::new(1);
        assert!(b.finish(&[Form::var(0).plus(1.0)]).is_err());
    }

    #[test]
    fn form_algebra() {
        let f = Form::var(0).add(&Form::term(1, 0.5)).plus(0.25);
        assert_eq!(f.eval(&[2.0, 4.0]), 4.25);
        assert_eq!(f.sub(&f), Form::zero());
        assert_eq!(f.scale(2.0).constant_term(), 0.5);
    }
}
