use super::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }
}

/// `a (n×k) · b (k×m)`.
pub(crate) fn matmul<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = a[i * k + p];
            for (o, &w) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += x * w;
            }
        }
    }
    out
}

/// `a (n×m) · bᵀ` where `b` is `k×m`.
pub(crate) fn matmul_bt<S: Scalar>(a: &[S], b: &[S], n: usize, m: usize, k: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * k];
    for i in 0..n {
        let ar = &a[i * m..(i + 1) * m];
        for j in 0..k {
            out[i * k + j] = dot(ar, &b[j * m..(j + 1) * m]);
        }
    }
    out
}

/// `acc (k×m) += aᵀ · dy` where `a` is `n×k` and `dy` is `n×m`.
pub(crate) fn acc_at_b<S: Scalar>(acc: &mut [S], a: &[S], dy: &[S], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let dr = &dy[i * m..(i + 1) * m];
        for p in 0..k {
            let x = a[i * k + p];
            for (o, &g) in acc[p * m..(p + 1) * m].iter_mut().zip(dr) {
                *o += x * g;
            }
        }
    }
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |s, (&x, &y)| s + x * y)
}

pub(crate) fn add_assign<S: Scalar>(acc: &mut [S], x: &[S]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Saved per-row statistics for the layer-norm backward pass.
#[derive(Debug, Clone)]
pub(crate) struct NormCache<S> {
    pub xhat: Vec<S>,
    pub rstd: Vec<S>,
}

pub(crate) fn layer_norm<S: Scalar>(x: &[S], gain: &[S], bias: &[S], d: usize) -> (Vec<S>, NormCache<S>) {
    let rows = x.len() / d;
    let eps = S::of(LAYER_NORM_EPS);
    let n = S::of(d as f64);
    let mut y = vec![S::zero(); x.len()];
    let mut xhat = vec![S::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<S>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
        let rs = S::one() / (var + eps).sqrt();
        for j in 0..d {
            let h = (xr[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = h * gain[j] + bias[j];
        }
        rstd.push(rs);
    }
    (y, NormCache { xhat, rstd })
}

/// Returns `dx` and accumulates into `dgain`/`dbias`.
pub(crate) fn layer_norm_backward<S: Scalar>(
    dy: &[S],
    cache: &NormCache<S>,
    gain: &[S],
    dgain: &mut [S],
    dbias: &mut [S],
    d: usize,
) -> Vec<S> {
    let rows = dy.len() / d;
    let n = S::of(d as f64);
    let mut dx = vec![S::zero(); dy.len()];
    let mut dxhat = vec![S::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
        }
        let mean_dxhat = dxhat.iter().copied().sum::<S>() / n;
        let mean_dxhat_xhat = dot(&dxhat, xh) / n;
        let rs = cache.rstd[r];
        for j in 0..d {
            dx[r * d + j] = rs * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub(crate) fn gelu<S: Scalar>(u: S) -> S {
    let half = S::of(0.5);
    half * u * (S::one() + (S::of(GELU_C) * (u + S::of(GELU_A) * u * u * u)).tanh())
}

pub(crate) fn gelu_grad<S: Scalar>(u: S) -> S {
    let half = S::of(0.5);
    let c = S::of(GELU_C);
    let a = S::of(GELU_A);
    let t = (c * (u + a * u * u * u)).tanh();
    half * (S::one() + t) + half * u * (S::one() - t * t) * c * (S::one() + S::of(3.0) * a * u * u)
}
