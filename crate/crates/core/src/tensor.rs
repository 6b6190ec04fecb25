//! Dense `H×W×C` feature maps, window partitioning and window attention.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;

/// Row-major `(row, col, channel)` grid of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{} values do not fill a {}x{}x{} map",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("feature map values must be finite"));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        FeatureMap {
            height,
            width,
            channels,
            data,
        }
    }

    /// Uniform values in `[lo, hi)` drawn from `rng`.
    pub fn random<R: Rng>(
        height: usize,
        width: usize,
        channels: usize,
        lo: f32,
        hi: f32,
        rng: &mut R,
    ) -> Self {
        let data = (0..height * width * channels)
            .map(|_| rng.gen_range(lo..hi))
            .collect();
        FeatureMap {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        self.pixel_flat(row * self.width + col)
    }

    /// Channel vector of the pixel at flat index `row * W + col`.
    pub fn pixel_flat(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Elementwise sum of two maps of identical shape.
    pub fn add(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if !self.same_shape(other) {
            return Err(Error::shape("cannot add feature maps of different shapes"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(self.with_data(self.channels, data))
    }

    /// Same spatial size, new channel count and values.
    pub(crate) fn with_data(&self, channels: usize, data: Vec<f32>) -> FeatureMap {
        debug_assert_eq!(data.len(), self.height * self.width * channels);
        FeatureMap {
            height: self.height,
            width: self.width,
            channels,
            data,
        }
    }

    /// Stack channels of two maps with the same spatial size.
    pub fn concat_channels(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::shape("cannot concatenate maps of different spatial size"));
        }
        let c = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.height * self.width * c);
        for (a, b) in self
            .data
            .chunks_exact(self.channels)
            .zip(other.data.chunks_exact(other.channels))
        {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Ok(self.with_data(c, data))
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Non-overlapping windows of a feature map.
///
/// Windows are ordered row-major by `(window_row, window_col)`; inside a window
/// nodes are row-major and channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    n_h: usize,
    n_w: usize,
    m_rows: usize,
    m_cols: usize,
    channels: usize,
    data: Vec<f32>,
}

impl WindowSet {
    pub fn new(
        n_h: usize,
        n_w: usize,
        m_rows: usize,
        m_cols: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != n_h * n_w * m_rows * m_cols * channels {
            return Err(Error::shape("window data length does not match its layout"));
        }
        Ok(WindowSet {
            n_h,
            n_w,
            m_rows,
            m_cols,
            channels,
            data,
        })
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn m_rows(&self) -> usize {
        self.m_rows
    }

    pub fn m_cols(&self) -> usize {
        self.m_cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn window_count(&self) -> usize {
        self.n_h * self.n_w
    }

    pub fn nodes(&self) -> usize {
        self.m_rows * self.m_cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn window(&self, w: usize) -> &[f32] {
        let len = self.nodes() * self.channels;
        &self.data[w * len..(w + 1) * len]
    }

    fn same_layout(&self, other: &WindowSet) -> bool {
        self.n_h == other.n_h
            && self.n_w == other.n_w
            && self.m_rows == other.m_rows
            && self.m_cols == other.m_cols
    }
}

/// Split `f` into `m_rows × m_cols` windows.
pub fn partition_windows(f: &FeatureMap, m_rows: usize, m_cols: usize) -> Result<WindowSet> {
    if m_rows == 0 || m_cols == 0 || f.height % m_rows != 0 || f.width % m_cols != 0 {
        return Err(Error::shape(format!(
            "{}x{} windows do not tile a {}x{} map",
            m_rows, m_cols, f.height, f.width
        )));
    }
    let (n_h, n_w) = (f.height / m_rows, f.width / m_cols);
    let c = f.channels;
    let mut data = Vec::with_capacity(f.data.len());
    for wr in 0..n_h {
        for wc in 0..n_w {
            for i in 0..m_rows {
                let start = ((wr * m_rows + i) * f.width + wc * m_cols) * c;
                data.extend_from_slice(&f.data[start..start + m_cols * c]);
            }
        }
    }
    WindowSet::new(n_h, n_w, m_rows, m_cols, c, data)
}

/// Reassemble windows into a `(nH·m_rows) × (nW·m_cols)` map.
pub fn merge_windows(w: &WindowSet) -> Result<FeatureMap> {
    let (height, width, c) = (w.n_h * w.m_rows, w.n_w * w.m_cols, w.channels);
    if w.data.len() != height * width * c {
        return Err(Error::shape("window set is inconsistent with its layout"));
    }
    let mut data = vec![0.0f32; height * width * c];
    let mut src = w.data.chunks_exact(w.m_cols * c);
    for wr in 0..w.n_h {
        for wc in 0..w.n_w {
            for i in 0..w.m_rows {
                let start = ((wr * w.m_rows + i) * width + wc * w.m_cols) * c;
                let row = src.next().expect("length checked above");
                data[start..start + w.m_cols * c].copy_from_slice(row);
            }
        }
    }
    Ok(FeatureMap {
        height,
        width,
        channels: c,
        data,
    })
}

/// Affine map `y = W x + b` applied per node, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::shape("linear weight/bias sizes do not match dimensions"));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::domain("linear parameters must be finite"));
        }
        Ok(Linear {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut l = Self::zeros(dim, dim);
        for i in 0..dim {
            l.weight[i * dim + i] = 1.0;
        }
        l
    }

    /// Weights and bias uniform in `±1/√in_dim`.
    pub fn random<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / math::sqrt(in_dim as f64) as f32;
        let mut l = Self::zeros(in_dim, out_dim);
        for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *w = rng.gen_range(-bound..bound);
        }
        l
    }

    /// Apply to a flat buffer of `in_dim`-vectors.
    pub fn apply_rows(&self, input: &[f32]) -> Vec<f32> {
        debug_assert_eq!(input.len() % self.in_dim, 0);
        let mut out = Vec::with_capacity(input.len() / self.in_dim * self.out_dim);
        for x in input.chunks_exact(self.in_dim) {
            for (o, w) in self.weight.chunks_exact(self.in_dim).enumerate() {
                let mut acc = self.bias[o] as f64;
                for (wi, xi) in w.iter().zip(x) {
                    acc += *wi as f64 * *xi as f64;
                }
                out.push(acc as f32);
            }
        }
        out
    }

    pub fn apply_map(&self, f: &FeatureMap) -> Result<FeatureMap> {
        if f.channels != self.in_dim {
            return Err(Error::shape(format!(
                "linear layer expects {} channels, map has {}",
                self.in_dim, f.channels
            )));
        }
        Ok(f.with_data(self.out_dim, self.apply_rows(&f.data)))
    }
}

/// Projections and head count of one attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl AttentionParams {
    pub fn validate(&self) -> Result<()> {
        let c = self.q.in_dim;
        for l in [&self.q, &self.k, &self.v, &self.out] {
            if l.in_dim != c || l.out_dim != c {
                return Err(Error::shape("attention projections must all be C x C"));
            }
        }
        if self.heads == 0 || c % self.heads != 0 {
            return Err(Error::config(format!(
                "{} channels cannot be split into {} heads",
                c, self.heads
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.q.in_dim
    }

    pub fn zeros(channels: usize, heads: usize) -> Self {
        AttentionParams {
            q: Linear::zeros(channels, channels),
            k: Linear::zeros(channels, channels),
            v: Linear::zeros(channels, channels),
            out: Linear::zeros(channels, channels),
            heads,
        }
    }

    pub fn identity(channels: usize, heads: usize) -> Self {
        AttentionParams {
            q: Linear::identity(channels),
            k: Linear::identity(channels),
            v: Linear::identity(channels),
            out: Linear::identity(channels),
            heads,
        }
    }

    /// Random projections; the output bias starts at zero.
    pub fn random<R: Rng>(channels: usize, heads: usize, rng: &mut R) -> Self {
        let q = Linear::random(channels, channels, rng);
        let k = Linear::random(channels, channels, rng);
        let v = Linear::random(channels, channels, rng);
        let mut out = Linear::random(channels, channels, rng);
        out.bias.iter_mut().for_each(|b| *b = 0.0);
        AttentionParams {
            q,
            k,
            v,
            out,
            heads,
        }
    }
}

/// `C / 32` heads, at least one, reduced until it divides `C`.
pub fn default_heads(channels: usize) -> usize {
    let mut h = (channels / 32).max(1);
    while channels % h != 0 {
        h -= 1;
    }
    h
}

fn check_attention_inputs(q: &WindowSet, k: &WindowSet, v: &WindowSet, heads: usize) -> Result<()> {
    if !q.same_layout(v) {
        return Err(Error::shape("queries and values must share window geometry"));
    }
    if k.window_count() != q.window_count() || k.nodes() != q.nodes() {
        return Err(Error::shape("keys must have the same window and node counts as queries"));
    }
    if q.channels != k.channels || q.channels != v.channels {
        return Err(Error::shape("queries, keys and values must share the channel count"));
    }
    if heads == 0 || q.channels % heads != 0 {
        return Err(Error::config(format!(
            "{} channels cannot be split into {} heads",
            q.channels, heads
        )));
    }
    Ok(())
}

/// Softmax attention weights of one head in one window, written row-major
/// into `weights` (`n × n`).
fn head_weights(
    qw: &[f32],
    kw: &[f32],
    c: usize,
    n: usize,
    head: usize,
    dh: usize,
    weights: &mut [f64],
) {
    let scale = 1.0 / math::sqrt(dh as f64);
    let off = head * dh;
    for i in 0..n {
        let qi = &qw[i * c + off..i * c + off + dh];
        let row = &mut weights[i * n..(i + 1) * n];
        let mut max = f64::NEG_INFINITY;
        for (j, w) in row.iter_mut().enumerate() {
            let kj = &kw[j * c + off..j * c + off + dh];
            let mut dot = 0.0f64;
            for (a, b) in qi.iter().zip(kj) {
                dot += *a as f64 * *b as f64;
            }
            *w = dot * scale;
            max = max.max(*w);
        }
        let mut sum = 0.0;
        for w in row.iter_mut() {
            *w = math::exp(*w - max);
            sum += *w;
        }
        for w in row.iter_mut() {
            *w /= sum;
        }
    }
}

/// Attention weights for every window and head, laid out
/// `[window][head][query][key]`.
pub fn attention_weights(q: &WindowSet, k: &WindowSet, heads: usize) -> Result<Vec<f64>> {
    check_attention_inputs(q, k, q, heads)?;
    let (c, n) = (q.channels, q.nodes());
    let dh = c / heads;
    let mut out = vec![0.0; q.window_count() * heads * n * n];
    for (w, block) in out.chunks_exact_mut(heads * n * n).enumerate() {
        for (h, weights) in block.chunks_exact_mut(n * n).enumerate() {
            head_weights(q.window(w), k.window(w), c, n, h, dh, weights);
        }
    }
    Ok(out)
}

/// Multi-head attention inside each window.
///
/// For every window and head, `softmax(Q Kᵀ / √d) V`; heads are concatenated
/// and passed through `params.out`. The input projections of `params` are not
/// applied here.
pub fn mhsa(q: &WindowSet, k: &WindowSet, v: &WindowSet, params: &AttentionParams) -> Result<WindowSet> {
    let heads = params.heads;
    check_attention_inputs(q, k, v, heads)?;
    let (c, n) = (q.channels, q.nodes());
    if params.out.in_dim != c || params.out.out_dim != c {
        return Err(Error::shape("output projection must be C x C"));
    }
    let dh = c / heads;
    let mut weights = vec![0.0f64; n * n];
    let mut mixed = vec![0.0f32; q.data.len()];
    let mut acc = vec![0.0f64; dh];
    for (w, out) in mixed.chunks_exact_mut(n * c).enumerate() {
        let (qw, kw, vw) = (q.window(w), k.window(w), v.window(w));
        for h in 0..heads {
            head_weights(qw, kw, c, n, h, dh, &mut weights);
            let off = h * dh;
            for i in 0..n {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for j in 0..n {
                    let a = weights[i * n + j];
                    for (s, x) in acc.iter_mut().zip(&vw[j * c + off..j * c + off + dh]) {
                        *s += a * *x as f64;
                    }
                }
                for (o, s) in out[i * c + off..i * c + off + dh].iter_mut().zip(&acc) {
                    *o = *s as f32;
                }
            }
        }
    }
    let data = params.out.apply_rows(&mixed);
    WindowSet::new(q.n_h, q.n_w, q.m_rows, q.m_cols, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(h: usize, w: usize, c: usize) -> FeatureMap {
        FeatureMap::from_fn(h, w, c, |r, col, ch| (r * 1000 + col * 10 + ch) as f32)
    }

    #[test]
    fn single_window_equals_map() {
        let f = ramp(4, 4, 2);
        let w = partition_windows(&f, 4, 4).unwrap();
        assert_eq!(w.window_count(), 1);
        assert_eq!(w.data(), f.data());
        assert_eq!(merge_windows(&w).unwrap(), f);
    }

    #[test]
    fn top_left_window_of_8x8() {
        let f = ramp(8, 8, 1);
        let w = partition_windows(&f, 4, 4).unwrap();
        assert_eq!(w.window_count(), 4);
        let want: Vec<f32> = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r * 1000 + c * 10) as f32))
            .collect();
        assert_eq!(w.window(0), &want[..]);
        assert_eq!(merge_windows(&w).unwrap(), f);
    }

    #[test]
    fn partition_rejects_non_divisible() {
        let f = ramp(6, 8, 1);
        assert!(matches!(partition_windows(&f, 4, 4), Err(Error::Shape(_))));
    }

    #[test]
    fn feature_map_rejects_bad_data() {
        assert!(matches!(FeatureMap::new(2, 2, 1, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(
            FeatureMap::new(1, 1, 1, vec![f32::NAN]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_queries_give_uniform_mean() {
        let (n, c) = (16, 4);
        let q = WindowSet::new(1, 1, 4, 4, c, vec![0.0; n * c]).unwrap();
        let v_data: Vec<f32> = (0..n * c).map(|i| i as f32).collect();
        let v = WindowSet::new(1, 1, 4, 4, c, v_data.clone()).unwrap();
        let p = AttentionParams::identity(c, 2);
        let w = attention_weights(&q, &q, 2).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-15));
        let out = mhsa(&q, &q, &v, &p).unwrap();
        for ch in 0..c {
            let mean: f64 = (0..n).map(|j| v_data[j * c + ch] as f64).sum::<f64>() / n as f64;
            for i in 0..n {
                assert!((out.data()[i * c + ch] as f64 - mean).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn one_hot_values_give_stochastic_rows() {
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let qd: Vec<f32> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let q = WindowSet::new(1, 1, 2, 2, n, qd).unwrap();
        let mut vd = vec![0.0; n * n];
        for i in 0..n {
            vd[i * n + i] = 1.0;
        }
        let v = WindowSet::new(1, 1, 2, 2, n, vd).unwrap();
        let out = mhsa(&q, &q, &v, &AttentionParams::identity(n, 1)).unwrap();
        for row in out.data().chunks_exact(n) {
            assert!(row.iter().all(|&x| x >= 0.0));
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn two_node_closed_form() {
        // Scalar channel, q0 = 1, k = (1, 0): logits [1, 0] for query 0.
        let q = WindowSet::new(1, 1, 1, 2, 1, vec![1.0, 0.0]).unwrap();
        let k = WindowSet::new(1, 1, 1, 2, 1, vec![1.0, 0.0]).unwrap();
        let v = WindowSet::new(1, 1, 1, 2, 1, vec![1.0, 0.0]).unwrap();
        let out = mhsa(&q, &k, &v, &AttentionParams::identity(1, 1)).unwrap();
        let e = core::f64::consts::E;
        assert!((out.data()[0] as f64 - e / (e + 1.0)).abs() < 1e-7);
        assert!((out.data()[1] as f64 - 0.5).abs() < 1e-7);
    }

    #[test]
    fn head_divisibility_is_config_error() {
        let q = WindowSet::new(1, 1, 2, 2, 6, vec![0.0; 24]).unwrap();
        let p = AttentionParams::identity(6, 4);
        assert!(matches!(mhsa(&q, &q, &q, &p), Err(Error::Config(_))));
    }

    #[test]
    fn default_head_counts() {
        assert_eq!(default_heads(8), 1);
        assert_eq!(default_heads(64), 2);
        assert_eq!(default_heads(96), 3);
        assert_eq!(default_heads(100), 2);
    }

    #[test]
    fn linear_apply_and_concat() {
        let l = Linear::new(2, 1, vec![2.0, -1.0], vec![0.5]).unwrap();
        assert_eq!(l.apply_rows(&[1.0, 3.0, 0.0, 0.0]), vec![-0.5, 0.5]);
        let a = FeatureMap::from_fn(1, 2, 1, |_, c, _| c as f32);
        let b = FeatureMap::from_fn(1, 2, 2, |_, c, ch| (10 * c + ch) as f32);
        let ab = a.concat_channels(&b).unwrap();
        assert_eq!(ab.data(), &[0.0, 0.0, 1.0, 1.0, 10.0, 11.0]);
    }
}
