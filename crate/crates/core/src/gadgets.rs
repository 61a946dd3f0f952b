//! Explicit networks for products, identities, constant multiplication and
//! B-spline banks, each paired with the size budget it must respect.

use serde::Serialize;

use crate::builder::{combine, Form, LayerBuilder, NetBuilder};
use crate::error::{Error, Result};
use crate::network::{identity_network, Architecture, Audit, Network};
use crate::spline::KnotVector;

/// Smallest `v` with `2^v >= n`, for `n >= 1`.
pub fn ceil_log2(n: usize) -> usize {
    assert!(n >= 1, "ceil_log2 of zero");
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// A network together with its declared depth, architecture and nonzero budget.
#[derive(Debug, Clone)]
pub struct Gadget {
    pub net: Network,
    pub declared_depth: usize,
    pub declared_arch: Architecture,
    pub declared_nonzero_budget: usize,
    pub lemma_tag: &'static str,
}

/// Comparison of a gadget's audit with its declared budget.
#[derive(Debug, Clone, Serialize)]
pub struct GadgetReport {
    pub lemma_tag: &'static str,
    pub audit: Audit,
    pub arch: Vec<usize>,
    pub declared_arch: Vec<usize>,
    pub declared_nonzero_budget: usize,
    pub depth_ok: bool,
    pub arch_ok: bool,
    pub nonzero_ok: bool,
    pub weights_ok: bool,
}

impl GadgetReport {
    pub fn passed(&self) -> bool {
        self.depth_ok && self.arch_ok && self.nonzero_ok && self.weights_ok
    }
}

impl Gadget {
    /// Rejects networks that miss the declared depth or exceed the declared widths or budget.
    pub fn new(net: Network, declared_arch: Architecture, budget: usize, lemma_tag: &'static str) -> Result<Self> {
        let g = Self {
            declared_depth: declared_arch.depth(),
            net,
            declared_arch,
            declared_nonzero_budget: budget,
            lemma_tag,
        };
        let r = g.report();
        if !r.passed() {
            return Err(Error::Precondition(format!(
                "{lemma_tag} gadget misses its budget: arch {:?} vs {:?}, nonzeros {} vs {}",
                r.arch, r.declared_arch, r.audit.nonzero, r.declared_nonzero_budget
            )));
        }
        Ok(g)
    }

    pub fn report(&self) -> GadgetReport {
        let audit = self.net.audit();
        GadgetReport {
            lemma_tag: self.lemma_tag,
            audit,
            arch: self.net.arch().dims().to_vec(),
            declared_arch: self.declared_arch.dims().to_vec(),
            declared_nonzero_budget: self.declared_nonzero_budget,
            depth_ok: audit.depth == self.declared_depth,
            arch_ok: self.net.arch().fits_within(&self.declared_arch),
            nonzero_ok: audit.nonzero <= self.declared_nonzero_budget,
            weights_ok: audit.max_abs_weight <= 1.0,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(x)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut value = self.net.to_json_value();
        value["lemma_tag"] = serde_json::Value::from(self.lemma_tag);
        Ok(serde_json::to_string(&value)?)
    }
}

/// Identity on `width` coordinates: four neurons and at most 13 nonzeros per coordinate.
pub fn identity_gadget(width: usize) -> Result<Gadget> {
    if width == 0 {
        return Err(Error::InvalidParameter("identity width must be positive".into()));
    }
    let net = identity_network(width)?;
    Gadget::new(net, Architecture::new(vec![width, 4 * width, width])?, 13 * width, "identity")
}

/// `(x_1, x_2) ↦ x_1 x_2` with architecture `(2, 4, 1)`.
pub fn product2() -> Result<Gadget> {
    product_k(2)
}

/// Pairwise product layers over several groups of `k` leaves each.
///
/// Each level multiplies neighbours; at the first level the unpaired leaves
/// are multiplied by the constant 1 so that the tree is full.
pub(crate) fn product_tree_layers(b: &mut NetBuilder, groups: &[Vec<Form>]) -> Result<Vec<Form>> {
    let k = groups.first().map_or(1, Vec::len);
    if groups.iter().any(|g| g.len() != k) || k == 0 {
        return Err(Error::InvalidParameter("product groups must share a positive size".into()));
    }
    let v = ceil_log2(k);
    let mut current: Vec<Vec<Form>> = groups.to_vec();
    for level in 0..v {
        let mut layer = LayerBuilder::new();
        let mut next = Vec::with_capacity(current.len());
        for leaves in &current {
            let mut prods = Vec::new();
            if level == 0 {
                let pairs = 1usize << (v - 1);
                let full = k - pairs;
                for i in 0..full {
                    prods.push(layer.product(&leaves[2 * i], &leaves[2 * i + 1]));
                }
                for leaf in &leaves[2 * full..] {
                    prods.push(layer.product(leaf, &Form::constant(1.0)));
                }
            } else {
                for pair in leaves.chunks(2) {
                    prods.push(layer.product(&pair[0], &pair[1]));
                }
            }
            next.push(prods);
        }
        b.push(layer)?;
        current = next;
    }
    Ok(current.into_iter().map(|mut g| g.remove(0)).collect())
}

/// `x ↦ x_1 x_2 ... x_k` with `⌈log2 k⌉` hidden layers.
pub fn product_k(k: usize) -> Result<Gadget> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("product needs at least 2 factors, got {k}")));
    }
    let v = ceil_log2(k);
    let mut b = NetBuilder::new(k);
    let leaves: Vec<Form> = (0..k).map(Form::var).collect();
    let out = product_tree_layers(&mut b, &[leaves])?;
    let net = b.finish(&out)?;
    let mut dims = vec![k];
    dims.extend((0..v).map(|i| 1usize << (v + 1 - i)));
    dims.push(1);
    Gadget::new(net, Architecture::new(dims)?, 5 * (1usize << (2 * v)), "requ_prod")
}

/// Growth and gain plan of the constant-multiplication chain.
#[derive(Debug, Clone)]
pub(crate) struct ChainPlan {
    /// Number of hidden layers, `2L + 2`.
    pub depth: usize,
    /// `grow[t]` for `t = 0..depth-1`: whether chain neuron `t` squares its predecessor plus one.
    pub grow: Vec<bool>,
    /// Chain values `y_1, ..., y_{depth-1}`.
    pub ys: Vec<f64>,
}

impl ChainPlan {
    fn with_growth(depth: usize, growth: usize) -> Self {
        let mut grow = vec![false; depth - 1];
        let mut ys = vec![1.0; depth - 1];
        for t in 1..depth - 1 {
            if t <= growth {
                grow[t] = true;
                ys[t] = (ys[t - 1] + 1.0) * (ys[t - 1] + 1.0);
            }
        }
        Self { depth, grow, ys }
    }

    fn max_gain(&self) -> f64 {
        4f64.powi(self.depth as i32) * self.ys.iter().product::<f64>()
    }

    /// Fewest growth steps that reach `target`.
    pub fn for_target(target: f64, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidParameter("multiplier depth parameter L must be at least 1".into()));
        }
        let limit = 4f64.powf(4f64.powi(l as i32));
        if !(target <= limit) {
            return Err(Error::CoefficientOverflow { value: target, l });
        }
        let depth = 2 * l + 2;
        for growth in 0..depth - 1 {
            let plan = Self::with_growth(depth, growth);
            if plan.max_gain() >= target {
                return Ok(plan);
            }
        }
        Err(Error::CoefficientOverflow { value: target, l })
    }

    /// Per-layer factors `κ_t ∈ {1/4, 1}` and the resulting gain, which is at least `target`.
    pub fn kappas(&self, target: f64) -> (Vec<f64>, f64) {
        let mut kappa = vec![1.0; self.depth];
        let mut gain = self.max_gain();
        for t in (0..self.depth).rev() {
            if gain / 4.0 >= target {
                kappa[t] = 0.25;
                gain /= 4.0;
            }
        }
        (kappa, gain)
    }
}

/// Pushes `2L + 2` layers computing `X_i = G_i * input_i` for every input,
/// with one chain of constants shared by all of them. Returns the forms `X_i`
/// on the last layer and the gains `G_i >= targets[i]`.
pub(crate) fn scale_bank_layers(
    b: &mut NetBuilder,
    inputs: &[Form],
    targets: &[f64],
    l: usize,
) -> Result<(Vec<Form>, Vec<f64>)> {
    let top = targets.iter().fold(0.0f64, |a, t| a.max(*t));
    let plan = ChainPlan::for_target(top, l)?;
    let schedules: Vec<(Vec<f64>, f64)> = targets.iter().map(|&t| plan.kappas(t)).collect();

    let mut layer = LayerBuilder::new();
    let mut xs: Vec<Form> =
        inputs.iter().zip(&schedules).map(|(f, (kappa, _))| layer.identity(f).scale(4.0 * kappa[0])).collect();
    let mut chain = layer.one();
    b.push(layer)?;

    for t in 1..plan.depth {
        let mut layer = LayerBuilder::new();
        xs = xs.iter().zip(&schedules).map(|(x, (kappa, _))| layer.product(x, &chain).scale(4.0 * kappa[t])).collect();
        if t < plan.depth - 1 {
            chain = if plan.grow[t] { layer.neuron(chain.plus(1.0)) } else { layer.one() };
        }
        b.push(layer)?;
    }
    Ok((xs, schedules.into_iter().map(|(_, g)| g).collect()))
}

/// `x ↦ M x` with `2L + 2` hidden layers of width at most 5, for `|M| <= 4^{4^L}`.
pub fn const_mult(m: f64, l: usize) -> Result<Gadget> {
    if !m.is_finite() {
        return Err(Error::InvalidParameter(format!("multiplier {m} is not finite")));
    }
    let mut b = NetBuilder::new(1);
    let (xs, gains) = scale_bank_layers(&mut b, &[Form::var(0)], &[m.abs()], l)?;
    let net = b.finish(&[xs[0].scale(m / gains[0])])?;
    let depth = 2 * l + 2;
    let mut dims = vec![1];
    dims.extend(std::iter::repeat_n(5, depth - 1));
    dims.extend([4, 1]);
    Gadget::new(net, Architecture::new(dims)?, 60 * l + 38, "requ_mult")
}

/// Forms produced by the B-spline layers.
pub(crate) struct SplineForms {
    pub x: Form,
    pub k: Form,
    /// `B_j^m` for `j = 1..=2q+K-m`, `None` where the spline vanishes on `[0, 1]`.
    pub splines: Vec<Option<Form>>,
}

/// Pushes the four layers producing `(x, K, B_j^2)` for `x ∈ [0, 1]`.
fn quadratic_layers(b: &mut NetBuilder, kv: &KnotVector) -> Result<SplineForms> {
    let (q, k) = (kv.degree(), kv.subintervals());
    let kf = k as f64;
    let x0 = Form::var(0);

    // layer 1: truncated powers, ones, and x
    let mut l1 = LayerBuilder::new();
    let x1 = l1.identity_unit(&x0);
    let right: Vec<Form> = (0..k).map(|i| l1.neuron(x0.plus(-(i as f64) / kf))).collect();
    let left1 = l1.neuron(x0.scale(-1.0).plus(1.0 / kf));
    let left2 = l1.neuron(x0.scale(-1.0).plus(2.0 / kf));
    let ones: Vec<Form> = (0..k).map(|_| l1.one()).collect();
    b.push(l1)?;

    // S_j = B_j^2 / K^3 as combinations of truncated powers
    let count = kv.count(2);
    let mut scaled: Vec<Option<Form>> = vec![None; count];
    let cardinal = [1.0 / 6.0, -0.5, 0.5, -1.0 / 6.0];
    for j in (q - 1)..=(q + k) {
        let s = if j == q - 1 {
            left1.clone()
        } else if j == q {
            combine(&[(0.25, &left2), (-1.0, &left1)])
        } else if j == q + k - 1 {
            combine(&[(0.25, &right[k - 2]), (-1.0, &right[k - 1])])
        } else if j == q + k {
            right[k - 1].clone()
        } else {
            let first = j - q - 1;
            cardinal
                .iter()
                .enumerate()
                .filter(|(i, _)| first + i < k)
                .fold(Form::zero(), |acc, (i, c)| acc.add(&right[first + i].scale(*c)))
        };
        scaled[j - 1] = Some(s);
    }

    // layer 2: K, K^2 and copies
    let sum_ones = ones.iter().fold(Form::zero(), |acc, o| acc.add(o));
    let mut l2 = LayerBuilder::new();
    let x2 = l2.identity_unit(&x1);
    let k2 = l2.identity_pos(&sum_ones);
    let ksq = l2.neuron(sum_ones.clone());
    let s2: Vec<Option<Form>> = scaled.iter().map(|s| s.as_ref().map(|s| l2.identity_unit(s))).collect();
    b.push(l2)?;

    // layer 3: S_j K^2 = B_j / K
    let mut l3 = LayerBuilder::new();
    let x3 = l3.identity_unit(&x2);
    let k3 = l3.identity_pos(&k2);
    let s3: Vec<Option<Form>> = s2.iter().map(|s| s.as_ref().map(|s| l3.product_nonneg(s, &ksq))).collect();
    b.push(l3)?;

    // layer 4: times K
    let mut l4 = LayerBuilder::new();
    let x4 = l4.identity_unit(&x3);
    let k4 = l4.identity_pos(&k3);
    let s4: Vec<Option<Form>> = s3.iter().map(|s| s.as_ref().map(|s| l4.product_nonneg(s, &k3))).collect();
    b.push(l4)?;

    Ok(SplineForms { x: x4, k: k4, splines: s4 })
}

/// One degree-raising step of the B-spline recursion, two layers.
fn raise_degree(b: &mut NetBuilder, kv: &KnotVector, m: usize, prev: SplineForms) -> Result<SplineForms> {
    let kf = kv.subintervals() as f64;

    let mut la = LayerBuilder::new();
    let xa = la.identity_unit(&prev.x);
    let ka = la.identity_pos(&prev.k);
    let terms: Vec<Option<(Form, Form)>> = prev
        .splines
        .iter()
        .map(|s| s.as_ref().map(|s| (la.product_nonneg(&prev.x, s), la.identity_nonneg(s))))
        .collect();
    b.push(la)?;

    let mut lb = LayerBuilder::new();
    let xb = lb.identity_unit(&xa);
    let kb = lb.identity_pos(&ka);
    let splines = (1..=kv.count(m))
        .map(|j| {
            let (lo, hi) = (kv.a(j), kv.a(j + m + 1));
            if hi <= lo {
                return None;
            }
            let mut t = Form::zero();
            if let Some((xs, s)) = &terms[j - 1] {
                t = t.add(xs).sub(&s.scale(lo));
            }
            if let Some((xs, s)) = &terms[j] {
                t = t.add(&s.scale(hi)).sub(xs);
            }
            if t == Form::zero() {
                return None;
            }
            let t = t.scale(1.0 / (kf * (hi - lo)));
            Some(lb.product_nonneg(&t, &ka))
        })
        .collect();
    b.push(lb)?;
    Ok(SplineForms { x: xb, k: kb, splines })
}

/// Pushes the layers producing `(x, K, B_j^q)` and returns their forms.
pub(crate) fn bspline_layers(b: &mut NetBuilder, kv: &KnotVector, degree: usize) -> Result<SplineForms> {
    let mut forms = quadratic_layers(b, kv)?;
    for m in 3..=degree {
        forms = raise_degree(b, kv, m, forms)?;
    }
    Ok(forms)
}

fn spline_outputs(forms: SplineForms) -> Vec<Form> {
    let mut out = vec![forms.x, forms.k];
    out.extend(forms.splines.into_iter().map(Option::unwrap_or_default));
    out
}

fn check_spline_params(q: usize, k: usize) -> Result<KnotVector> {
    if q < 2 {
        return Err(Error::InvalidParameter(format!("spline degree must be at least 2, got {q}")));
    }
    KnotVector::new(q, k)
}

fn quadratic_arch(q: usize, k: usize) -> Vec<usize> {
    let inner = 4 * k + 8 * q;
    vec![1, 4 * (k + 2 * q - 1) + k, inner, inner, inner]
}

/// `x ↦ (x, K, B_1^2(x), ..., B_{K+2q-2}^2(x))` on `[0, 1]`, four hidden layers.
pub fn bspline_net_quadratic(q: usize, k: usize) -> Result<Gadget> {
    let kv = check_spline_params(q, k)?;
    let mut b = NetBuilder::new(1);
    let forms = bspline_layers(&mut b, &kv, 2)?;
    let net = b.finish(&spline_outputs(forms))?;
    let mut dims = quadratic_arch(q, k);
    dims.push(k + 2 * q);
    Gadget::new(net, Architecture::new(dims)?, 72 * (k + 2 * q), "bspline_quadratic")
}

/// `x ↦ (x, K, B_1^q(x), ..., B_{q+K}^q(x))` on `[0, 1]`, `4 + 2(q-2)` hidden layers.
pub fn bspline_net(q: usize, k: usize) -> Result<Gadget> {
    let kv = check_spline_params(q, k)?;
    let mut b = NetBuilder::new(1);
    let forms = bspline_layers(&mut b, &kv, q)?;
    let net = b.finish(&spline_outputs(forms))?;
    let mut dims = quadratic_arch(q, k);
    for m in 3..=q {
        let r = k + 2 * q - m;
        dims.extend([12 * r + 12, 8 * r + 8]);
    }
    dims.push(k + q + 2);
    Gadget::new(net, Architecture::new(dims)?, 72 * q * (k + 2 * q), "bspline")
}
