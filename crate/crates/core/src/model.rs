//! Item catalog, positive-interaction set and the dot-product factor model.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::path::Path;

use crate::codec::{self, ByteReader, ByteWriter, Version};
use crate::error::{check_index, Error, Result};
use crate::rng::Stream;

/// Floating-point type of the model parameters. Ranks, losses and weights are
/// always computed in `f64`; only the stored factors and the dot products
/// use `Self`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Default
    + PartialOrd
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + 'static
{
    const DTYPE: Dtype;
    const ZERO: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn finite(self) -> bool;
    fn write(self, w: &mut ByteWriter);
    fn read(r: &mut ByteReader<'_>) -> Result<Self>;
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    const ZERO: Self = 0.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn finite(self) -> bool {
        self.is_finite()
    }
    fn write(self, w: &mut ByteWriter) {
        w.f64(self)
    }
    fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        r.f64()
    }
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    const ZERO: Self = 0.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn finite(self) -> bool {
        self.is_finite()
    }
    fn write(self, w: &mut ByteWriter) {
        w.u32(self.to_bits())
    }
    fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        Ok(f32::from_bits(r.u32()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            4 => Ok(Dtype::F32),
            8 => Ok(Dtype::F64),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    fn width(self) -> usize {
        self.code() as usize
    }
}

/// The set of recommendable items, identified by `0..n_items`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ItemCatalog {
    n_items: usize,
}

impl ItemCatalog {
    pub fn new(n_items: usize) -> Result<Self> {
        if n_items < 2 {
            return Err(Error::invalid(format!(
                "catalog needs at least 2 items, got {n_items}"
            )));
        }
        Ok(ItemCatalog { n_items })
    }

    pub fn len(&self) -> usize {
        self.n_items
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check(&self, item: usize) -> Result<()> {
        check_index("item", item, self.n_items)
    }
}

/// Deduplicated positive (context, item) pairs stored row-compressed by
/// context, items sorted ascending within each row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionSet {
    n_contexts: usize,
    n_items: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
    entry_contexts: Vec<u32>,
}

impl InteractionSet {
    pub fn from_pairs<I>(n_contexts: usize, n_items: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n_items > u32::MAX as usize || n_contexts > u32::MAX as usize {
            return Err(Error::invalid("id space exceeds 32 bits"));
        }
        let mut sorted = Vec::new();
        for (c, i) in pairs {
            check_index("context", c, n_contexts)?;
            check_index("item", i, n_items)?;
            sorted.push((c as u32, i as u32));
        }
        sorted.sort_unstable();
        sorted.dedup();

        let mut offsets = vec![0usize; n_contexts + 1];
        for &(c, _) in &sorted {
            offsets[c as usize + 1] += 1;
        }
        for c in 0..n_contexts {
            offsets[c + 1] += offsets[c];
        }
        Ok(InteractionSet {
            n_contexts,
            n_items,
            offsets,
            items: sorted.iter().map(|&(_, i)| i).collect(),
            entry_contexts: sorted.iter().map(|&(c, _)| c).collect(),
        })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of (context, item) entries.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items_of(&self, context: usize) -> &[u32] {
        &self.items[self.offsets[context]..self.offsets[context + 1]]
    }

    pub fn contains(&self, context: usize, item: usize) -> bool {
        context < self.n_contexts
            && item < self.n_items
            && self.items_of(context).binary_search(&(item as u32)).is_ok()
    }

    /// The `index`-th entry in (context, item) order.
    #[inline]
    pub fn entry(&self, index: usize) -> (usize, usize) {
        (
            self.entry_contexts[index] as usize,
            self.items[index] as usize,
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).map(move |k| self.entry(k))
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.u64(self.n_contexts as u64);
        w.u64(self.n_items as u64);
        w.u64(self.len() as u64);
        for (c, i) in self.iter() {
            w.u32(c as u32);
            w.u32(i as u32);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let n_contexts = r.u64()? as usize;
        let n_items = r.u64()? as usize;
        let len = r.len_prefix(8)?;
        let mut pairs = Vec::with_capacity(len);
        for _ in 0..len {
            pairs.push((r.u32()? as usize, r.u32()? as usize));
        }
        let set = InteractionSet::from_pairs(n_contexts, n_items, pairs)?;
        if set.len() != len {
            return Err(Error::Format("duplicate interactions in encoded set".into()));
        }
        Ok(set)
    }
}

/// Context and item embedding matrices, row-major.
/// `score(c, i)` is the inner product of context row `c` and item row `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel<F = f64> {
    dim: usize,
    n_contexts: usize,
    n_items: usize,
    seed: u64,
    context_factors: Vec<F>,
    item_factors: Vec<F>,
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn check_shape(n_contexts: usize, n_items: usize, dim: usize) -> Result<()> {
    if n_contexts == 0 || n_items == 0 || dim == 0 {
        return Err(Error::invalid(format!(
            "model dimensions must be positive (contexts {n_contexts}, items {n_items}, dim {dim})"
        )));
    }
    n_contexts
        .checked_mul(dim)
        .and(n_items.checked_mul(dim))
        .ok_or_else(|| Error::invalid("model size overflows"))?;
    Ok(())
}

impl<F: Scalar> FactorModel<F> {
    pub fn zeros(n_contexts: usize, n_items: usize, dim: usize) -> Result<Self> {
        check_shape(n_contexts, n_items, dim)?;
        Ok(FactorModel {
            dim,
            n_contexts,
            n_items,
            seed: 0,
            context_factors: vec![F::ZERO; n_contexts * dim],
            item_factors: vec![F::ZERO; n_items * dim],
        })
    }

    /// Builds a model from explicit row-major matrices.
    pub fn from_factors(dim: usize, context_factors: Vec<F>, item_factors: Vec<F>) -> Result<Self> {
        if dim == 0 || context_factors.len() % dim != 0 || item_factors.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "factor lengths {} / {} not divisible by dim {dim}",
                context_factors.len(),
                item_factors.len()
            )));
        }
        let n_contexts = context_factors.len() / dim;
        let n_items = item_factors.len() / dim;
        check_shape(n_contexts, n_items, dim)?;
        Ok(FactorModel {
            dim,
            n_contexts,
            n_items,
            seed: 0,
            context_factors,
            item_factors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn context_factors(&self) -> &[F] {
        &self.context_factors
    }

    pub fn item_factors(&self) -> &[F] {
        &self.item_factors
    }

    #[inline]
    pub fn context_row(&self, c: usize) -> &[F] {
        &self.context_factors[c * self.dim..(c + 1) * self.dim]
    }

    #[inline]
    pub fn item_row(&self, i: usize) -> &[F] {
        &self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn context_row_mut(&mut self, c: usize) -> &mut [F] {
        &mut self.context_factors[c * self.dim..(c + 1) * self.dim]
    }

    #[inline]
    pub fn item_row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn check_context(&self, c: usize) -> Result<()> {
        check_index("context", c, self.n_contexts)
    }

    pub fn check_item(&self, i: usize) -> Result<()> {
        check_index("item", i, self.n_items)
    }

    pub fn score(&self, c: usize, i: usize) -> Result<F> {
        self.check_context(c)?;
        self.check_item(i)?;
        Ok(self.score_unchecked(c, i))
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, c: usize, i: usize) -> F {
        dot(self.context_row(c), self.item_row(i))
    }

    pub fn score_all(&self, c: usize) -> Result<Vec<F>> {
        let mut out = Vec::with_capacity(self.n_items);
        self.score_all_into(c, &mut out)?;
        Ok(out)
    }

    pub fn score_all_into(&self, c: usize, out: &mut Vec<F>) -> Result<()> {
        self.check_context(c)?;
        let u = self.context_row(c);
        out.clear();
        out.extend(self.item_factors.chunks_exact(self.dim).map(|v| dot(u, v)));
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.context_factors.iter().all(|x| x.finite())
            && self.item_factors.iter().all(|x| x.finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u8(F::DTYPE.code());
        w.u64(self.dim as u64);
        w.u64(self.n_contexts as u64);
        w.u64(self.n_items as u64);
        w.u64(self.seed);
        for &x in self.context_factors.iter().chain(&self.item_factors) {
            x.write(&mut w);
        }
        codec::seal(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, [0; 8], &w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match AnyModel::from_bytes(bytes)? {
            AnyModel::F64(m) if F::DTYPE == Dtype::F64 => Ok(m.cast()),
            AnyModel::F32(m) if F::DTYPE == Dtype::F32 => Ok(m.cast()),
            other => Err(Error::Format(format!(
                "checkpoint holds {:?} parameters, expected {:?}",
                other.dtype(),
                F::DTYPE
            ))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Converts the parameters to another scalar type (exact for f32 -> f64
    /// and for same-type casts).
    pub fn cast<G: Scalar>(&self) -> FactorModel<G> {
        let conv = |v: &[F]| v.iter().map(|&x| G::from_f64(x.to_f64())).collect();
        FactorModel {
            dim: self.dim,
            n_contexts: self.n_contexts,
            n_items: self.n_items,
            seed: self.seed,
            context_factors: conv(&self.context_factors),
            item_factors: conv(&self.item_factors),
        }
    }

    fn decode_body(r: &mut ByteReader<'_>) -> Result<Self> {
        let dim = r.u64()? as usize;
        let n_contexts = r.u64()? as usize;
        let n_items = r.u64()? as usize;
        let seed = r.u64()?;
        check_shape(n_contexts, n_items, dim)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let total = n_contexts
            .checked_add(n_items)
            .and_then(|rows| rows.checked_mul(dim))
            .ok_or_else(|| Error::Format("checkpoint size overflows".into()))?;
        if total.checked_mul(F::DTYPE.width()) != Some(r.remaining()) {
            return Err(Error::Format(format!(
                "checkpoint body has {} bytes, header implies {total} values",
                r.remaining()
            )));
        }
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            values.push(F::read(r)?);
        }
        let item_factors = values.split_off(n_contexts * dim);
        let model = FactorModel {
            dim,
            n_contexts,
            n_items,
            seed,
            context_factors: values,
            item_factors,
        };
        if !model.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(model)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RCMODEL\0";
pub const CHECKPOINT_VERSION: Version = Version {
    major: 1,
    minor: 0,
    patch: 0,
};

/// A checkpoint whose precision is only known after reading it.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    F32(FactorModel<f32>),
    F64(FactorModel<f64>),
}

impl AnyModel {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let container = codec::open(CHECKPOINT_MAGIC, CHECKPOINT_VERSION.major, bytes)?;
        let mut r = ByteReader::new(container.body);
        match Dtype::from_code(r.u8()?)? {
            Dtype::F32 => FactorModel::decode_body(&mut r).map(AnyModel::F32),
            Dtype::F64 => FactorModel::decode_body(&mut r).map(AnyModel::F64),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            AnyModel::F32(_) => Dtype::F32,
            AnyModel::F64(_) => Dtype::F64,
        }
    }
}

/// Entries i.i.d. normal with mean 0 and standard deviation `1/sqrt(dim)`,
/// drawn from `Stream::new(seed)`: all context rows first, then item rows.
pub fn init_model<F: Scalar>(
    n_contexts: usize,
    n_items: usize,
    dim: usize,
    seed: u64,
) -> Result<FactorModel<F>> {
    let mut model = FactorModel::zeros(n_contexts, n_items, dim)?;
    model.seed = seed;
    let scale = 1.0 / (dim as f64).sqrt();
    let mut rng = Stream::new(seed);
    for x in model
        .context_factors
        .iter_mut()
        .chain(model.item_factors.iter_mut())
    {
        *x = F::from_f64(rng.gaussian() * scale);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_of_zero_model_is_zero() {
        let m = FactorModel::<f64>::zeros(3, 4, 5).unwrap();
        assert_eq!(m.score(2, 3).unwrap(), 0.0);
        assert_eq!(m.score_all(1).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn score_is_inner_product() {
        let m = FactorModel::from_factors(2, vec![1.0, 2.0], vec![3.0, -1.0]).unwrap();
        assert_eq!(m.score(0, 0).unwrap(), 1.0);
        let e1 = FactorModel::from_factors(3, vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(e1.score(0, 0).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_ids_error() {
        let m = FactorModel::<f64>::zeros(2, 3, 1).unwrap();
        assert!(matches!(m.score(2, 0), Err(Error::OutOfRange { what: "context", .. })));
        assert!(matches!(m.score(0, 3), Err(Error::OutOfRange { what: "item", .. })));
        assert!(m.score_all(5).is_err());
    }

    #[test]
    fn score_all_matches_looped_score() {
        let m = init_model::<f64>(3, 20, 4, 9).unwrap();
        for c in 0..3 {
            let all = m.score_all(c).unwrap();
            assert_eq!(all.len(), 20);
            for (i, &s) in all.iter().enumerate() {
                assert_eq!(s.to_bits(), m.score(c, i).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model::<f64>(10, 12, 8, 5).unwrap();
        let b = init_model::<f64>(10, 12, 8, 5).unwrap();
        let c = init_model::<f64>(10, 12, 8, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_moments() {
        // 10_000 entries in total, dim 64 => sigma = 1/8
        let m = init_model::<f64>(80, 76, 64, 1234).unwrap();
        let xs: Vec<f64> = m.context_factors().iter().chain(m.item_factors()).copied().collect();
        let n = xs.len() as f64;
        assert!(xs.len() >= 9_984);
        let sigma = 1.0 / 8.0;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 4.0 * sigma / n.sqrt(), "mean {mean}");
        assert!((sd - sigma).abs() < 0.05 * sigma, "sd {sd}");
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(init_model::<f64>(1, 1, 0, 0).is_err());
        assert!(init_model::<f64>(0, 1, 1, 0).is_err());
        assert!(ItemCatalog::new(1).is_err());
        assert!(ItemCatalog::new(2).is_ok());
    }

    #[test]
    fn checkpoint_round_trip_both_precisions() {
        let m = init_model::<f64>(4, 7, 3, 77).unwrap();
        let back = FactorModel::<f64>::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.seed(), 77);

        let m32 = init_model::<f32>(4, 7, 3, 77).unwrap();
        let bytes = m32.to_bytes();
        assert_eq!(FactorModel::<f32>::from_bytes(&bytes).unwrap(), m32);
        assert!(FactorModel::<f64>::from_bytes(&bytes).is_err());
        assert_eq!(AnyModel::from_bytes(&bytes).unwrap().dtype(), Dtype::F32);
    }

    #[test]
    fn interaction_set_dedups_and_sorts() {
        let s = InteractionSet::from_pairs(3, 5, vec![(1, 4), (0, 2), (1, 0), (1, 4), (0, 2)]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.items_of(0), &[2]);
        assert_eq!(s.items_of(1), &[0, 4]);
        assert!(s.items_of(2).is_empty());
        assert!(s.contains(1, 4));
        assert!(!s.contains(2, 4));
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![(0, 2), (1, 0), (1, 4)]);
        assert!(InteractionSet::from_pairs(3, 5, vec![(3, 0)]).is_err());
        assert!(InteractionSet::from_pairs(3, 5, vec![(0, 5)]).is_err());
    }
}
