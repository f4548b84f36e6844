//! Dense third-order tensors with a fixed element layout.
//!
//! Element `(i, j, k)` of an `I x J x K` tensor lives at linear offset
//! `i + I*j + I*J*k` (0-based): the first index varies fastest. Matricization
//! column orderings and `vectorize` below follow the same convention, which
//! is what makes the factored forms in [`crate::multilinear`] exact
//! identities.

use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Tensor dimensions `(I, J, K)`.
pub type Dims = (usize, usize, usize);

fn check_dims(dims: Dims) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::Shape(format!("tensor dims must be positive, got {dims:?}")));
    }
    Ok(())
}

fn check_finite(data: &[f64]) -> Result<()> {
    if let Some(offset) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            offset,
            value: data[offset],
        });
    }
    Ok(())
}

/// Dense `I x J x K` tensor of `f64` values, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor3 {
    /// Builds a tensor from values given in layout order.
    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                dims,
                expected,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        })
    }

    /// Builds a tensor by evaluating `f(i, j, k)` at every index.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let (ni, nj, nk) = dims;
        let mut data = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    data.push(f(i, j, k));
                }
            }
        }
        check_finite(&data)?;
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw values in layout order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims.0 && j < self.dims.1 && k < self.dims.2);
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    /// Element at 0-based index `(i, j, k)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Writes the text form: a `I J K` header line followed by the values in
    /// layout order, one mode-1 fiber per line. `{}` formatting round-trips
    /// f64 exactly.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let (ni, nj, nk) = self.dims;
        writeln!(w, "{} {} {}", ni, nj, nk)?;
        for fiber in self.data.chunks(ni) {
            let line: Vec<String> = fiber.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads the text form written by [`Tensor3::write_text`]. Any whitespace
    /// arrangement of the values is accepted.
    pub fn read_text<R: BufRead>(mut r: R) -> Result<Self> {
        let mut content = String::new();
        r.read_to_string(&mut content)?;
        let mut tokens = content.split_whitespace();
        let mut dim = || -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse("missing tensor dimension in header".into()))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad tensor dimension: {e}")))
        };
        let dims = (dim()?, dim()?, dim()?);
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for tok in tokens {
            let v = tok
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad tensor value {tok:?}: {e}")))?;
            data.push(v);
        }
        Self::from_vec(dims, data)
    }
}

/// Mode-n matricization.
///
/// `X_(1)` is `I x (J*K)` with column index `j + J*k`; `X_(2)` is `J x (I*K)`
/// with column index `i + I*k`; `X_(3)` is `K x (I*J)` with column index
/// `i + I*j` (0-based).
pub fn matricize(t: &Tensor3, mode: u8) -> Result<Array2<f64>> {
    let (ni, nj, nk) = t.dims();
    let out = match mode {
        1 => {
            let mut m = Array2::zeros((ni, nj * nk));
            for k in 0..nk {
                for j in 0..nj {
                    for i in 0..ni {
                        m[(i, j + nj * k)] = t.get(i, j, k);
                    }
                }
            }
            m
        }
        2 => {
            let mut m = Array2::zeros((nj, ni * nk));
            for k in 0..nk {
                for j in 0..nj {
                    for i in 0..ni {
                        m[(j, i + ni * k)] = t.get(i, j, k);
                    }
                }
            }
            m
        }
        3 => {
            let mut m = Array2::zeros((nk, ni * nj));
            for k in 0..nk {
                for j in 0..nj {
                    for i in 0..ni {
                        m[(k, i + ni * j)] = t.get(i, j, k);
                    }
                }
            }
            m
        }
        m => return Err(Error::InvalidMode(m)),
    };
    Ok(out)
}

/// Exact inverse of [`matricize`].
pub fn dematricize(m: &Array2<f64>, mode: u8, dims: Dims) -> Result<Tensor3> {
    check_dims(dims)?;
    let (ni, nj, nk) = dims;
    let expected = match mode {
        1 => (ni, nj * nk),
        2 => (nj, ni * nk),
        3 => (nk, ni * nj),
        other => return Err(Error::InvalidMode(other)),
    };
    if m.dim() != expected {
        return Err(Error::Shape(format!(
            "mode-{mode} matricization of a {dims:?} tensor is {expected:?}, got {:?}",
            m.dim()
        )));
    }
    Tensor3::from_fn(dims, |i, j, k| match mode {
        1 => m[(i, j + nj * k)],
        2 => m[(j, i + ni * k)],
        _ => m[(k, i + ni * j)],
    })
}

/// Stacks the columns of `m` into a single vector.
pub fn vectorize(m: &Array2<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for col in m.columns() {
        out.extend(col.iter().copied());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eight() -> Tensor3 {
        Tensor3::from_vec((2, 2, 2), (1..=8).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn singleton_tensor() {
        let t = Tensor3::from_vec((1, 1, 1), vec![5.0]).unwrap();
        assert_eq!(t.get(0, 0, 0), 5.0);
    }

    #[test]
    fn layout_order_is_first_index_fastest() {
        let t = eight();
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(t.get(1, 0, 0), 2.0);
        assert_eq!(t.get(0, 1, 0), 3.0);
        assert_eq!(t.get(1, 1, 0), 4.0);
        assert_eq!(t.get(0, 0, 1), 5.0);
        assert_eq!(t.get(1, 1, 1), 8.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = Tensor3::from_vec((2, 3, 4), vec![0.0; 23]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 24, got: 23, .. }));
    }

    #[test]
    fn non_finite_is_rejected_with_offset() {
        let mut v = vec![0.0; 8];
        v[5] = f64::NAN;
        let err = Tensor3::from_vec((2, 2, 2), v).unwrap_err();
        assert!(matches!(err, Error::NonFinite { offset: 5, .. }));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(Tensor3::from_vec((0, 2, 2), vec![]).is_err());
    }

    #[test]
    fn matricize_mode1() {
        let m = matricize(&eight(), 1).unwrap();
        let expected = ndarray::arr2(&[[1.0, 3.0, 5.0, 7.0], [2.0, 4.0, 6.0, 8.0]]);
        assert_eq!(m, expected);
    }

    #[test]
    fn matricize_mode3() {
        let m = matricize(&eight(), 3).unwrap();
        let expected = ndarray::arr2(&[[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]);
        assert_eq!(m, expected);
    }

    #[test]
    fn matricize_invalid_mode() {
        assert!(matches!(matricize(&eight(), 4), Err(Error::InvalidMode(4))));
    }

    #[test]
    fn dematricize_inverts_known_matrix() {
        let m = ndarray::arr2(&[[1.0, 3.0, 5.0, 7.0], [2.0, 4.0, 6.0, 8.0]]);
        let t = dematricize(&m, 1, (2, 2, 2)).unwrap();
        assert_eq!(t, eight());
    }

    #[test]
    fn dematricize_rejects_wrong_shape() {
        let m = Array2::zeros((2, 7));
        assert!(matches!(dematricize(&m, 1, (2, 2, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn frobenius_examples() {
        let ones = Tensor3::from_vec((2, 2, 2), vec![1.0; 8]).unwrap();
        assert!((ones.frobenius_norm() - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(Tensor3::zeros((3, 2, 1)).unwrap().frobenius_norm(), 0.0);
        let neg = Tensor3::from_vec((1, 1, 1), vec![-3.0]).unwrap();
        assert_eq!(neg.frobenius_norm(), 3.0);
    }

    #[test]
    fn vectorize_stacks_columns() {
        let m = ndarray::arr2(&[[1.0, 3.0], [2.0, 4.0]]);
        assert_eq!(vectorize(&m), vec![1.0, 2.0, 3.0, 4.0]);
        let col = ndarray::arr2(&[[1.0], [2.0], [3.0]]);
        assert_eq!(vectorize(&col), vec![1.0, 2.0, 3.0]);
        let row = ndarray::arr2(&[[1.0, 2.0, 3.0]]);
        assert_eq!(vectorize(&row), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = Tensor3::from_vec(
            (2, 2, 2),
            vec![
                1.0 / 3.0,
                -2.5e-17,
                7.123456789012345e300,
                0.1,
                -0.0,
                4.0,
                5e-324,
                1.0,
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let back = Tensor3::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.dims(), t.dims());
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn text_rejects_bad_header() {
        assert!(Tensor3::read_text("2 x 2\n1 2 3 4".as_bytes()).is_err());
        assert!(Tensor3::read_text("".as_bytes()).is_err());
    }
}
