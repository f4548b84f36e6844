//! Structured matrix products and rank-(L,L,1) block term reconstruction.
//!
//! A rank-(L,L,1) block term decomposition with R terms writes a tensor as
//! `sum_r (A_r * B_r^T) outer c_r`, where `A_r` (`I x L`) and `B_r` (`J x L`)
//! are column blocks of the factor matrices `A` and `B`, and `c_r` is a
//! column of `C`. With the element layout of [`crate::tensor`], the three
//! matricizations satisfy
//!
//! ```text
//! X_(1) = A (C pkr B)^T
//! X_(2) = B (C pkr A)^T
//! X_(3) = C [(B_1 kr A_1) 1_L  ...  (B_R kr A_R) 1_L]^T
//! ```
//!
//! where `pkr` is the partitioned Khatri-Rao product and `kr` the plain one.

use std::io::{BufRead, Write};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::tensor::{dematricize, matricize, Dims, Tensor3};

fn ensure_finite(name: &str, m: &ArrayView2<f64>) -> Result<()> {
    for (idx, v) in m.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Shape(format!("{name} contains non-finite value {v} (flat index {idx})")));
        }
    }
    Ok(())
}

/// Factor matrices of a rank-(L,L,1) block term decomposition.
///
/// `a` is `I x (L*R)`, `b` is `J x (L*R)` (column blocks of width `L`), and
/// `c` is `K x R`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFactors {
    a: Array2<f64>,
    b: Array2<f64>,
    c: Array2<f64>,
    block_width: usize,
}

impl BlockFactors {
    pub fn new(a: Array2<f64>, b: Array2<f64>, c: Array2<f64>, block_width: usize) -> Result<Self> {
        let terms = c.ncols();
        if block_width == 0 || terms == 0 {
            return Err(Error::Config(format!(
                "block width and term count must be positive, got L={block_width}, R={terms}"
            )));
        }
        let lr = block_width * terms;
        if a.ncols() != lr || b.ncols() != lr {
            return Err(Error::Shape(format!(
                "factor column counts {} / {} do not match L*R = {}",
                a.ncols(),
                b.ncols(),
                lr
            )));
        }
        if a.nrows() == 0 || b.nrows() == 0 || c.nrows() == 0 {
            return Err(Error::Shape("factor matrices must have at least one row".into()));
        }
        ensure_finite("factor A", &a.view())?;
        ensure_finite("factor B", &b.view())?;
        ensure_finite("factor C", &c.view())?;
        Ok(Self { a, b, c, block_width })
    }

    /// Block width L.
    pub fn block_width(&self) -> usize {
        self.block_width
    }

    /// Number of terms R.
    pub fn terms(&self) -> usize {
        self.c.ncols()
    }

    /// Tensor dimensions this factorization reconstructs to.
    pub fn dims(&self) -> Dims {
        (self.a.nrows(), self.b.nrows(), self.c.nrows())
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn c(&self) -> &Array2<f64> {
        &self.c
    }

    /// Column block `A_r` (`I x L`).
    pub fn a_block(&self, r: usize) -> ArrayView2<'_, f64> {
        let l = self.block_width;
        self.a.slice(s![.., r * l..(r + 1) * l])
    }

    /// Column block `B_r` (`J x L`).
    pub fn b_block(&self, r: usize) -> ArrayView2<'_, f64> {
        let l = self.block_width;
        self.b.slice(s![.., r * l..(r + 1) * l])
    }

    /// Column `c_r`.
    pub fn c_col(&self, r: usize) -> ArrayView1<'_, f64> {
        self.c.column(r)
    }

    /// Writes the factors as text: a `I J K L R` header, then the rows of A,
    /// B, and C, one row per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let (ni, nj, nk) = self.dims();
        writeln!(w, "{} {} {} {} {}", ni, nj, nk, self.block_width, self.terms())?;
        for m in [&self.a, &self.b, &self.c] {
            for row in m.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Ok(())
    }

    /// Reads the text form written by [`BlockFactors::write_text`].
    pub fn read_text<R: BufRead>(mut r: R) -> Result<Self> {
        let mut content = String::new();
        r.read_to_string(&mut content)?;
        let mut tokens = content.split_whitespace();
        let mut int = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what} in factors header")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let (ni, nj, nk) = (int("I")?, int("J")?, int("K")?);
        let (l, terms) = (int("L")?, int("R")?);
        let mut matrix = |rows: usize, cols: usize, name: &str| -> Result<Array2<f64>> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::Parse(format!("factors file truncated inside {name}")))?;
                data.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad value {tok:?} in {name}: {e}")))?,
                );
            }
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Parse(format!("shape error in {name}: {e}")))
        };
        let a = matrix(ni, l * terms, "A")?;
        let b = matrix(nj, l * terms, "B")?;
        let c = matrix(nk, terms, "C")?;
        if tokens.next().is_some() {
            return Err(Error::Parse("trailing values after factor matrices".into()));
        }
        Self::new(a, b, c, l)
    }
}

/// Kronecker product: block `(i, j)` of the result is `a[i, j] * b`.
pub fn kronecker(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let scale = a[(i, j)];
            if scale == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb]);
            block.assign(&b);
            block *= scale;
        }
    }
    out
}

/// Khatri-Rao product: column k of the result is `a_k kron b_k`.
pub fn khatri_rao(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ra, cols) = a.dim();
    let rb = b.nrows();
    let mut out = Array2::zeros((ra * rb, cols));
    for c in 0..cols {
        for i in 0..ra {
            let av = a[(i, c)];
            for j in 0..rb {
                out[(i * rb + j, c)] = av * b[(j, c)];
            }
        }
    }
    Ok(out)
}

/// Partitioned Khatri-Rao product over `blocks` column blocks:
/// `[X_1 kron Y_1  ...  X_R kron Y_R]`.
///
/// Block widths must be uniform per operand, i.e. each operand's column count
/// must be divisible by `blocks`.
pub fn partitioned_khatri_rao(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    blocks: usize,
) -> Result<Array2<f64>> {
    if blocks == 0 || x.ncols() % blocks != 0 || y.ncols() % blocks != 0 {
        return Err(Error::Shape(format!(
            "operands with {} and {} columns cannot be split into {} uniform blocks",
            x.ncols(),
            y.ncols(),
            blocks
        )));
    }
    let p = x.ncols() / blocks;
    let q = y.ncols() / blocks;
    let (rx, ry) = (x.nrows(), y.nrows());
    let mut out = Array2::zeros((rx * ry, blocks * p * q));
    for r in 0..blocks {
        let xb = x.slice(s![.., r * p..(r + 1) * p]);
        let yb = y.slice(s![.., r * q..(r + 1) * q]);
        out.slice_mut(s![.., r * p * q..(r + 1) * p * q])
            .assign(&kronecker(xb, yb));
    }
    Ok(out)
}

/// The `(I*J) x R` design matrix of the mode-3 identity: column r is
/// `(B_r kr A_r) 1_L`, which equals `vec(A_r * B_r^T)`.
pub fn mode3_design(f: &BlockFactors) -> Array2<f64> {
    mode3_design_raw(&f.a().view(), &f.b().view(), f.block_width())
}

pub(crate) fn mode3_design_raw(a: &ArrayView2<f64>, b: &ArrayView2<f64>, l: usize) -> Array2<f64> {
    let terms = a.ncols() / l;
    let (ni, nj) = (a.nrows(), b.nrows());
    let mut out = Array2::zeros((ni * nj, terms));
    for r in 0..terms {
        let ab = a.slice(s![.., r * l..(r + 1) * l]);
        let bb = b.slice(s![.., r * l..(r + 1) * l]);
        let kr = khatri_rao(bb, ab).expect("blocks share width");
        let col: Array1<f64> = kr.sum_axis(Axis(1));
        out.column_mut(r).assign(&col);
    }
    out
}

/// Reconstructs the tensor `sum_r (A_r * B_r^T) outer c_r`.
pub fn reconstruct_btd(f: &BlockFactors, dims: Dims) -> Result<Tensor3> {
    if f.dims() != dims {
        return Err(Error::Shape(format!(
            "factors reconstruct to {:?}, requested {:?}",
            f.dims(),
            dims
        )));
    }
    let design = partitioned_khatri_rao(f.c().view(), f.b().view(), f.terms())?;
    let x1 = f.a().dot(&design.t());
    dematricize(&x1, 1, dims)
}

/// Squared Frobenius error `|| T - reconstruct(f) ||_F^2`.
pub fn btd_objective(t: &Tensor3, f: &BlockFactors) -> Result<f64> {
    if f.dims() != t.dims() {
        return Err(Error::Shape(format!(
            "factors reconstruct to {:?}, tensor is {:?}",
            f.dims(),
            t.dims()
        )));
    }
    let x1 = matricize(t, 1)?;
    let design = partitioned_khatri_rao(f.c().view(), f.b().view(), f.terms())?;
    let approx = f.a().dot(&design.t());
    let mut acc = 0.0;
    for (x, y) in x1.iter().zip(approx.iter()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc)
}
