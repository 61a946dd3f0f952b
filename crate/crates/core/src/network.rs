//! Sparse feed-forward ReQU networks.
//!
//! A network with `L` hidden layers computes
//! `W_L σ_{v_L} W_{L-1} ... σ_{v_1} W_0 x` where `σ_v(y) = ((y - v) ∨ 0)^2`
//! acts coordinatewise. There are no bias vectors: constants enter only
//! through the shifts. Layer `ℓ` stores `W_ℓ` together with the shift `v_ℓ`
//! applied to its input, so layer 0 has an empty shift vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ReQU activation.
#[inline]
pub fn requ(t: f64) -> f64 {
    let r = t.max(0.0);
    r * r
}

/// Width sequence `(p_0, p_1, ..., p_{L+1})`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Architecture(pub Vec<usize>);

impl Architecture {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter("architecture needs at least input and output widths".into()));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn input(&self) -> usize {
        self.0[0]
    }

    pub fn output(&self) -> usize {
        *self.0.last().expect("nonempty")
    }

    /// Number of hidden layers.
    pub fn depth(&self) -> usize {
        self.0.len() - 2
    }

    pub fn width(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// True if both have the same length and every width of `self` is at most the other's.
    pub fn fits_within(&self, other: &Architecture) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

/// Coordinate-list matrix with entries sorted by row, then column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Sorts the triples, sums duplicates and drops exact zeros.
    pub fn new(rows: usize, cols: usize, mut triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triples.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::InvalidParameter(format!("entry ({r}, {c}) outside a {rows} x {cols} matrix")));
        }
        triples.sort_by_key(|t| (t.0, t.1));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triples.len());
        for (r, c, v) in triples {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut triples = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::ShapeMismatch { expected: cols, got: row.len() });
            }
            triples.extend(row.iter().enumerate().map(|(c, &v)| (r, c, v)));
        }
        Self::new(rows.len(), cols, triples)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, e| a.max(e.2.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for &(r, c, v) in &self.entries {
            out[r][c] = v;
        }
        out
    }

    /// Number of entries in each row.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.rows];
        for e in &self.entries {
            counts[e.0] += 1;
        }
        counts
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Product `self * rhs`.
    pub fn matmul(&self, rhs: &SparseMatrix) -> Result<SparseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch { expected: self.cols, got: rhs.rows });
        }
        let mut starts = vec![0usize; rhs.rows + 1];
        for e in &rhs.entries {
            starts[e.0 + 1] += 1;
        }
        for i in 0..rhs.rows {
            starts[i + 1] += starts[i];
        }
        let mut triples = Vec::new();
        for &(r, k, a) in &self.entries {
            for &(_, c, b) in &rhs.entries[starts[k]..starts[k + 1]] {
                triples.push((r, c, a * b));
            }
        }
        SparseMatrix::new(self.rows, rhs.cols, triples)
    }

    fn offset(&self, dr: usize, dc: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(move |&(r, c, v)| (r + dr, c + dc, v))
    }

    /// Keeps only the rows listed, in that order.
    pub fn select_rows(&self, keep: &[usize]) -> Result<SparseMatrix> {
        let mut map = vec![None; self.rows];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.rows {
                return Err(Error::InvalidParameter(format!("row {old} out of range")));
            }
            map[old] = Some(new);
        }
        let triples = self.entries.iter().filter_map(|&(r, c, v)| map[r].map(|n| (n, c, v))).collect();
        SparseMatrix::new(keep.len(), self.cols, triples)
    }
}

/// One affine layer `W_ℓ` with the shift `v_ℓ` applied to its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: SparseMatrix,
    pub v: Vec<f64>,
}

impl Layer {
    pub fn nnz(&self) -> usize {
        self.w.nnz() + self.v.iter().filter(|v| **v != 0.0).count()
    }

    fn max_abs(&self) -> f64 {
        self.v.iter().fold(self.w.max_abs(), |a, v| a.max(v.abs()))
    }
}

/// Exact size statistics of a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Audit {
    pub depth: usize,
    pub width: usize,
    pub nonzero: usize,
    pub max_abs_weight: f64,
}

/// A ReQU network whose weights and shifts all lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    w: Vec<(usize, usize, f64)>,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    dims: Vec<usize>,
    layers: Vec<LayerJson>,
}

impl Network {
    /// Validates shapes and the weight bound.
    pub fn new(arch: Architecture, layers: Vec<Layer>) -> Result<Self> {
        let dims = arch.dims();
        if layers.len() != dims.len() - 1 {
            return Err(Error::ShapeMismatch { expected: dims.len() - 1, got: layers.len() });
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.w.rows() != dims[l + 1] {
                return Err(Error::ShapeMismatch { expected: dims[l + 1], got: layer.w.rows() });
            }
            if layer.w.cols() != dims[l] {
                return Err(Error::ShapeMismatch { expected: dims[l], got: layer.w.cols() });
            }
            let shift_len = if l == 0 { 0 } else { dims[l] };
            if layer.v.len() != shift_len {
                return Err(Error::ShapeMismatch { expected: shift_len, got: layer.v.len() });
            }
            let worst = layer.max_abs();
            if worst > 1.0 || worst.is_nan() {
                return Err(Error::WeightBound { layer: l, value: worst });
            }
        }
        Ok(Self { arch, layers })
    }

    /// The single-layer linear network `x ↦ W x`.
    pub fn linear(w: SparseMatrix) -> Result<Self> {
        let arch = Architecture::new(vec![w.cols(), w.rows()])?;
        Self::new(arch, vec![Layer { w, v: Vec::new() }])
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output()
    }

    pub fn depth(&self) -> usize {
        self.arch.depth()
    }

    pub fn nonzero_count(&self) -> usize {
        self.layers.iter().map(Layer::nnz).sum()
    }

    pub fn audit(&self) -> Audit {
        Audit {
            depth: self.depth(),
            width: self.arch.width(),
            nonzero: self.nonzero_count(),
            max_abs_weight: self.layers.iter().fold(0.0, |a, l| a.max(l.max_abs())),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.layers[0].w.apply(x);
        for layer in &self.layers[1..] {
            for (yi, vi) in y.iter_mut().zip(&layer.v) {
                *yi = requ(*yi - vi);
            }
            y = layer.w.apply(&y);
        }
        y
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_json_value())?)
    }

    pub(crate) fn to_json_value(&self) -> serde_json::Value {
        let doc = NetworkJson {
            dims: self.arch.0.clone(),
            layers: self.layers.iter().map(|l| LayerJson { w: l.w.entries().to_vec(), v: l.v.clone() }).collect(),
        };
        serde_json::to_value(doc).expect("network json is always serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }

    pub(crate) fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let doc: NetworkJson = serde_json::from_value(value)?;
        let arch = Architecture::new(doc.dims)?;
        if doc.layers.len() + 1 != arch.dims().len() {
            return Err(Error::ShapeMismatch { expected: arch.dims().len() - 1, got: doc.layers.len() });
        }
        let dims = arch.dims().to_vec();
        let layers = doc
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, lj)| Ok(Layer { w: SparseMatrix::new(dims[l + 1], dims[l], lj.w)?, v: lj.v }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(arch, layers)
    }
}

/// Identity on `width` coordinates with one hidden layer of four neurons each,
/// using `x = ((x+1)^2 - (x-1)^2) / 4` split into positive and negative halves.
pub fn identity_network(width: usize) -> Result<Network> {
    let mut w0 = Vec::with_capacity(4 * width);
    let mut v = Vec::with_capacity(4 * width);
    let mut w1 = Vec::with_capacity(4 * width);
    for i in 0..width {
        let base = 4 * i;
        for (k, (sign, shift, out)) in
            [(1.0, -1.0, 0.25), (-1.0, 1.0, 0.25), (1.0, 1.0, -0.25), (-1.0, -1.0, -0.25)].into_iter().enumerate()
        {
            w0.push((base + k, i, sign));
            v.push(shift);
            w1.push((i, base + k, out));
        }
    }
    let arch = Architecture::new(vec![width, 4 * width, width])?;
    Network::new(
        arch,
        vec![
            Layer { w: SparseMatrix::new(4 * width, width, w0)?, v: Vec::new() },
            Layer { w: SparseMatrix::new(width, 4 * width, w1)?, v },
        ],
    )
}

fn splice(g: &Network, h: &Network) -> Result<Network> {
    let lg = g.layers.len() - 1;
    let joint = h.layers[0].w.matmul(&g.layers[lg].w)?;
    let mut layers: Vec<Layer> = g.layers[..lg].to_vec();
    layers.push(Layer { w: joint, v: g.layers[lg].v.clone() });
    layers.extend(h.layers[1..].iter().cloned());
    let mut dims = g.arch.0[..g.arch.0.len() - 1].to_vec();
    dims.extend_from_slice(&h.arch.0[1..]);
    Network::new(Architecture::new(dims)?, layers)
}

/// Composition `h ∘ g`.
///
/// The last linear map of `g` and the first of `h` are multiplied together.
/// If the product breaks the weight bound, an identity block is inserted
/// between them, which costs one extra hidden layer.
pub fn concat(g: &Network, h: &Network) -> Result<Network> {
    if g.output_dim() != h.input_dim() {
        return Err(Error::ShapeMismatch { expected: h.input_dim(), got: g.output_dim() });
    }
    match splice(g, h) {
        Err(Error::WeightBound { .. }) => {
            let with_id = splice(g, &identity_network(g.output_dim())?)?;
            splice(&with_id, h)
        }
        other => other,
    }
}

fn check_same_depth(nets: &[&Network]) -> Result<usize> {
    let first = nets.first().ok_or_else(|| Error::InvalidParameter("no networks to combine".into()))?;
    for n in nets {
        if n.depth() != first.depth() {
            return Err(Error::ShapeMismatch { expected: first.depth(), got: n.depth() });
        }
    }
    Ok(first.layers.len())
}

fn block_combine(nets: &[&Network], shared_input: bool) -> Result<Network> {
    let n_layers = check_same_depth(nets)?;
    if shared_input {
        let p0 = nets[0].input_dim();
        if let Some(n) = nets.iter().find(|n| n.input_dim() != p0) {
            return Err(Error::ShapeMismatch { expected: p0, got: n.input_dim() });
        }
    }
    let n_dims = n_layers + 1;
    let mut dims = vec![0usize; n_dims];
    for n in nets {
        for (d, w) in dims.iter_mut().zip(n.arch.dims()) {
            *d += w;
        }
    }
    if shared_input {
        dims[0] = nets[0].input_dim();
    }
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let mut triples = Vec::new();
        let mut v = Vec::new();
        let (mut dr, mut dc) = (0, 0);
        for n in nets {
            let layer = &n.layers[l];
            let col_off = if l == 0 && shared_input { 0 } else { dc };
            triples.extend(layer.w.offset(dr, col_off));
            v.extend_from_slice(&layer.v);
            dr += layer.w.rows();
            dc += layer.w.cols();
        }
        layers.push(Layer { w: SparseMatrix::new(dims[l + 1], dims[l], triples)?, v });
    }
    Network::new(Architecture::new(dims)?, layers)
}

/// Runs two networks of equal depth on the same input and concatenates their outputs.
pub fn parallel(f: &Network, g: &Network) -> Result<Network> {
    block_combine(&[f, g], true)
}

/// [`parallel`] over any number of networks.
pub fn parallel_all(nets: &[&Network]) -> Result<Network> {
    block_combine(nets, true)
}

/// Block-diagonal combination of equal-depth networks acting on disjoint
/// slices of the input.
pub fn stack(nets: &[&Network]) -> Result<Network> {
    block_combine(nets, false)
}

/// Appends identity blocks after the output until the network has
/// `target_hidden` hidden layers.
pub fn pad_depth(net: &Network, target_hidden: usize) -> Result<Network> {
    if target_hidden < net.depth() {
        return Err(Error::InvalidParameter(format!(
            "cannot pad a network of depth {} down to {target_hidden}",
            net.depth()
        )));
    }
    let id = identity_network(net.output_dim())?;
    let mut out = net.clone();
    for _ in net.depth()..target_hidden {
        out = splice(&out, &id)?;
    }
    Ok(out)
}

/// Keeps only the listed outputs, in that order.
pub fn select_outputs(net: &Network, keep: &[usize]) -> Result<Network> {
    let mut layers = net.layers.clone();
    let last = layers.len() - 1;
    layers[last].w = layers[last].w.select_rows(keep)?;
    let mut dims = net.arch.0.clone();
    *dims.last_mut().expect("nonempty") = keep.len();
    Network::new(Architecture::new(dims)?, layers)
}
