//! Real-valued "same"-padded 2-D cross-correlation on planar buffers.
//!
//! Everything convolutional in the crate goes through this file: complex
//! layers are lowered to one real convolution over the stacked `[re; im]`
//! planes with a 2×2 block kernel. The implementation is im2col followed by a
//! GEMM, chunked over output rows so that the column buffer stays bounded.

/// Upper bound on the im2col buffer, in `f64` elements (16 MiB).
const COLUMN_BUDGET: usize = 1 << 21;

/// Geometry of one convolution: `c` input channels of `h × w`, `o` kernels of `kh × kw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
}

impl Geometry {
    /// Zero padding above / left of the input; the remainder goes below / right.
    pub fn pad(&self) -> (usize, usize) {
        ((self.kh - 1) / 2, (self.kw - 1) / 2)
    }

    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn rows_per_chunk(&self) -> usize {
        (COLUMN_BUDGET / (self.k() * self.w).max(1)).clamp(1, self.h)
    }
}

/// Fill `col` (K × rows·w, row-major) with the receptive fields of output rows
/// `row0..row0 + rows`.
fn im2col(x: &[f64], g: &Geometry, row0: usize, rows: usize, col: &mut [f64]) {
    let n = rows * g.w;
    let (pt, pl) = g.pad();
    let hw = g.h * g.w;
    for ci in 0..g.c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let krow = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut col[krow * n..(krow + 1) * n];
                // valid output columns: 0 <= ox + kx - pl < w
                let lo = pl.saturating_sub(kx).min(g.w);
                let hi = (g.w + pl).saturating_sub(kx).min(g.w);
                for r in 0..rows {
                    let seg = &mut dst[r * g.w..(r + 1) * g.w];
                    let iy = (row0 + r + ky) as isize - pt as isize;
                    if iy < 0 || iy >= g.h as isize || lo >= hi {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    seg[..lo].fill(0.0);
                    seg[hi..].fill(0.0);
                    let ix0 = lo + kx - pl;
                    seg[lo..hi].copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                }
            }
        }
    }
}

/// Scatter-add a column buffer back onto the input gradient.
fn col2im(col: &[f64], g: &Geometry, row0: usize, rows: usize, dx: &mut [f64]) {
    let n = rows * g.w;
    let (pt, pl) = g.pad();
    let hw = g.h * g.w;
    for ci in 0..g.c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let krow = (ci * g.kh + ky) * g.kw + kx;
                let src = &col[krow * n..(krow + 1) * n];
                let lo = pl.saturating_sub(kx).min(g.w);
                let hi = (g.w + pl).saturating_sub(kx).min(g.w);
                if lo >= hi {
                    continue;
                }
                for r in 0..rows {
                    let iy = (row0 + r + ky) as isize - pt as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let ix0 = lo + kx - pl;
                    let dst =
                        &mut plane[iy as usize * g.w + ix0..iy as usize * g.w + ix0 + (hi - lo)];
                    for (d, s) in dst.iter_mut().zip(&src[r * g.w + lo..r * g.w + hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Strided matrix view for the GEMM wrapper: (data, row stride, column stride).
struct View<'a>(&'a [f64], usize, usize);

/// `c = alpha · a · b + beta · c` with bounds checked against the strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View<'_>,
    b: View<'_>,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, a.1, a.2) < a.0.len(), "gemm: lhs out of bounds");
        assert!(last(k, n, b.1, b.2) < b.0.len(), "gemm: rhs out of bounds");
    }
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: output out of bounds");
    // SAFETY: every index reachable through the given strides was bounds-checked above,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Forward pass: `out[o, y, x] = bias[o] + Σ weight[o, c, ky, kx] · x[c, y + ky - pt, x + kx - pl]`.
pub(crate) fn forward(x: &[f64], g: &Geometry, weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let hw = g.h * g.w;
    debug_assert_eq!(x.len(), g.c * hw);
    debug_assert_eq!(weight.len(), g.o * g.k());
    debug_assert_eq!(out.len(), g.o * hw);
    for (o, b) in bias.iter().enumerate() {
        out[o * hw..(o + 1) * hw].fill(*b);
    }
    let k = g.k();
    let step = g.rows_per_chunk();
    let mut col = vec![0.0; k * step * g.w];
    let mut row0 = 0;
    while row0 < g.h {
        let rows = step.min(g.h - row0);
        let n = rows * g.w;
        im2col(x, g, row0, rows, &mut col[..k * n]);
        gemm(
            g.o,
            k,
            n,
            1.0,
            View(weight, k, 1),
            View(&col[..k * n], n, 1),
            1.0,
            &mut out[row0 * g.w..],
            hw,
            1,
        );
        row0 += rows;
    }
}

/// Backward pass. Accumulates into `dweight` and `dbias`; writes (overwrites)
/// the input gradient into `dx` when requested.
pub(crate) fn backward(
    x: &[f64],
    g: &Geometry,
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let hw = g.h * g.w;
    debug_assert_eq!(dout.len(), g.o * hw);
    for (o, db) in dbias.iter_mut().enumerate() {
        *db += dout[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }
    if let Some(dx) = dx.as_deref_mut() {
        dx.fill(0.0);
    }
    let k = g.k();
    let step = g.rows_per_chunk();
    let mut col = vec![0.0; k * step * g.w];
    let mut dcol = if dx.is_some() {
        vec![0.0; k * step * g.w]
    } else {
        Vec::new()
    };
    let mut row0 = 0;
    while row0 < g.h {
        let rows = step.min(g.h - row0);
        let n = rows * g.w;
        let dout_chunk = &dout[row0 * g.w..];
        im2col(x, g, row0, rows, &mut col[..k * n]);
        // dW (o × k) += dOut (o × n) · colᵀ (n × k)
        gemm(
            g.o,
            n,
            k,
            1.0,
            View(dout_chunk, hw, 1),
            View(&col[..k * n], 1, n),
            1.0,
            dweight,
            k,
            1,
        );
        if let Some(dx) = dx.as_deref_mut() {
            // dCol (k × n) = Wᵀ (k × o) · dOut (o × n)
            gemm(
                k,
                g.o,
                n,
                1.0,
                View(weight, 1, k),
                View(dout_chunk, hw, 1),
                0.0,
                &mut dcol[..k * n],
                n,
                1,
            );
            col2im(&dcol[..k * n], g, row0, rows, dx);
        }
        row0 += rows;
    }
}
