#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CosineError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("vectors must have at least one dimension")]
    Empty,
    #[error("cosine is undefined for a zero vector")]
    ZeroNorm,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
///
/// Both vectors are first divided by their largest magnitude so extreme
/// component values neither overflow nor underflow.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, CosineError> {
    if a.len() != b.len() {
        return Err(CosineError::DimensionMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(CosineError::Empty);
    }
    let scale_a = max_abs(a);
    let scale_b = max_abs(b);
    if scale_a == 0.0 || scale_b == 0.0 || !scale_a.is_finite() || !scale_b.is_finite() {
        return Err(CosineError::ZeroNorm);
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x / scale_a, y / scale_b);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Euclidean norm, scaled to avoid overflow and underflow of the squares.
pub fn l2_norm(v: &[f64]) -> f64 {
    let scale = max_abs(v);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

/// Scales `v` to unit length in place.
pub fn normalize(v: &mut [f64]) -> Result<(), CosineError> {
    if v.is_empty() {
        return Err(CosineError::Empty);
    }
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(CosineError::ZeroNorm);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}
