//! Dense row-major tensor. Activations use the (batch, channels, height,
//! width) layout; parameters use whatever shape their layer documents.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{Dtype, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch(format!(
                "extents must be >= 1, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} expects {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::ZERO; n],
        }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        Self::full(shape, S::ONE)
    }

    pub fn full(shape: Vec<usize>, value: S) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> S) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    /// He-uniform fill: U(-limit, limit) with limit = sqrt(6 / fan_in).
    pub fn he_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / fan_in as f64).sqrt();
        Self::from_fn(shape, |_| S::from_f64(rng.uniform(-limit, limit)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Extent of axis `i`, or 1 when the axis is absent.
    pub fn extent_or(&self, i: usize, default: usize) -> usize {
        self.shape.get(i).copied().unwrap_or(default)
    }

    pub fn dtype(&self) -> Dtype {
        S::DTYPE
    }

    /// Same data, new shape. Element counts must agree.
    pub fn reshape(mut self, new_shape: Vec<usize>) -> Result<Self> {
        let expected: usize = new_shape.iter().product();
        if new_shape.iter().any(|&e| e == 0) || expected != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} ({} elements) to {new_shape:?} ({expected} elements)",
                self.shape,
                self.data.len()
            )));
        }
        self.shape = new_shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: S) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug-build guard for the "no NaN/Inf after forward on finite input"
    /// invariant.
    #[inline]
    pub fn debug_check_finite(&self, label: &str) {
        debug_assert!(self.all_finite(), "non-finite values in {label}");
        let _ = label;
    }

    // -- raw interchange format -------------------------------------------

    /// Writes the tensor as a text header line `dtype e0 e1 ...` followed by
    /// the little-endian IEEE-754 payload.
    pub fn write_raw(&self, out: &mut impl Write) -> Result<()> {
        let dims: Vec<String> = self.shape.iter().map(|e| e.to_string()).collect();
        writeln!(out, "{} {}", S::DTYPE.name(), dims.join(" "))?;
        let mut bytes = Vec::with_capacity(self.data.len() * S::DTYPE.size_bytes());
        for &v in &self.data {
            v.write_le(&mut bytes);
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_raw(&mut out).expect("vec write cannot fail");
        out
    }

    pub fn read_raw(input: &mut impl Read) -> Result<Self> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            let n = input.read(&mut byte)?;
            if n == 0 {
                return Err(Error::MalformedImage("missing raw-tensor header".into()));
            }
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
            if header.len() > 256 {
                return Err(Error::MalformedImage("raw-tensor header too long".into()));
            }
        }
        let header = String::from_utf8(header)
            .map_err(|_| Error::MalformedImage("raw-tensor header is not utf-8".into()))?;
        let mut fields = header.split_whitespace();
        let dtype = fields
            .next()
            .and_then(Dtype::parse)
            .ok_or_else(|| Error::MalformedImage(format!("bad raw-tensor dtype in {header:?}")))?;
        if dtype != S::DTYPE {
            return Err(Error::MalformedImage(format!(
                "raw tensor holds {} but {} was requested",
                dtype.name(),
                S::DTYPE.name()
            )));
        }
        let shape: Vec<usize> = fields
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::MalformedImage(format!("bad extent {t:?}")))
            })
            .collect::<Result<_>>()?;
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(Error::MalformedImage(format!("bad raw-tensor shape {shape:?}")));
        }
        let count: usize = shape.iter().product();
        let width = S::DTYPE.size_bytes();
        let mut payload = vec![0u8; count * width];
        input
            .read_exact(&mut payload)
            .map_err(|_| Error::MalformedImage("truncated raw-tensor payload".into()))?;
        let data = payload.chunks_exact(width).map(S::read_le).collect();
        Tensor::new(shape, data)
    }
}

/// Concatenates along the channel axis (axis 1). All other axes must agree;
/// `a`'s values occupy the leading channel block.
pub fn concat_channels<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    if a.rank() != b.rank() || a.rank() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "concat_channels: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    for axis in 0..a.rank() {
        if axis != 1 && a.shape[axis] != b.shape[axis] {
            return Err(Error::ShapeMismatch(format!(
                "concat_channels: axis {axis} differs ({:?} vs {:?})",
                a.shape, b.shape
            )));
        }
    }
    let ca = a.shape[1];
    let cb = b.shape[1];
    let inner: usize = a.shape[2..].iter().product();
    let outer = a.shape[0];
    let mut shape = a.shape.clone();
    shape[1] = ca + cb;
    let mut data = Vec::with_capacity(outer * (ca + cb) * inner);
    for n in 0..outer {
        data.extend_from_slice(&a.data[n * ca * inner..(n + 1) * ca * inner]);
        data.extend_from_slice(&b.data[n * cb * inner..(n + 1) * cb * inner]);
    }
    Tensor::new(shape, data)
}

/// Inverse of `concat_channels`: splits axis 1 at `at`.
pub fn split_channels<S: Scalar>(t: &Tensor<S>, at: usize) -> Result<(Tensor<S>, Tensor<S>)> {
    if t.rank() < 2 || at == 0 || at >= t.shape[1] {
        return Err(Error::ShapeMismatch(format!(
            "split_channels at {at} of {:?}",
            t.shape
        )));
    }
    let c = t.shape[1];
    let inner: usize = t.shape[2..].iter().product();
    let outer = t.shape[0];
    let mut shape_a = t.shape.clone();
    shape_a[1] = at;
    let mut shape_b = t.shape.clone();
    shape_b[1] = c - at;
    let mut da = Vec::with_capacity(outer * at * inner);
    let mut db = Vec::with_capacity(outer * (c - at) * inner);
    for n in 0..outer {
        let base = n * c * inner;
        da.extend_from_slice(&t.data[base..base + at * inner]);
        db.extend_from_slice(&t.data[base + at * inner..base + c * inner]);
    }
    Ok((Tensor::new(shape_a, da)?, Tensor::new(shape_b, db)?))
}

/// Per-channel broadcast multiply: out[n,c,...] = t[n,c,...] * s[n,c].
/// `s` must be (N, C) or (N, C, 1, 1).
pub fn channel_scale<S: Scalar>(t: &Tensor<S>, s: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, c) = (t.shape[0], t.extent_or(1, 1));
    let s_spatial: usize = s.shape[2..].iter().product();
    if s.shape[0] != n || s.extent_or(1, 1) != c || s_spatial != 1 {
        return Err(Error::ShapeMismatch(format!(
            "channel_scale: tensor {:?} vs scale {:?}",
            t.shape, s.shape
        )));
    }
    let inner: usize = t.shape[2..].iter().product();
    let mut out = t.clone();
    for ni in 0..n {
        for ci in 0..c {
            let factor = s.data[ni * c + ci];
            let base = (ni * c + ci) * inner;
            for v in &mut out.data[base..base + inner] {
                *v *= factor;
            }
        }
    }
    Ok(out)
}
