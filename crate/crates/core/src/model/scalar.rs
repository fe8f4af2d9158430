use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar type the network arithmetic is generic over.
///
/// `f64` gives ordinary values and gradients. [`Dual`] carries a tangent
/// alongside each value, so running the gradient code on duals yields a
/// directional derivative of the gradient, i.e. a Hessian-vector product.
pub trait Real:
    Copy
    + Debug
    + Default
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;
    /// Primal value.
    fn value(self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    /// `value() * k` for a constant `k`.
    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }

    /// `c = a·b` (or `c += a·b` when `accumulate`) where `a` is `m×k`, `b`
    /// is `k×n` and `c` is a contiguous row-major `m×n` block. Operands are
    /// addressed through `(row_stride, col_stride)` pairs.
    fn gemm(
        dims: (usize, usize, usize),
        a: Strided<'_, Self>,
        b: Strided<'_, Self>,
        c: &mut [Self],
        accumulate: bool,
    );
}

/// A matrix view: element `(i, j)` lives at `data[i * rs + j * cs]`.
#[derive(Clone, Copy)]
pub struct Strided<'a, S> {
    pub data: &'a [S],
    pub rs: usize,
    pub cs: usize,
}

impl<'a, S> Strided<'a, S> {
    pub fn new(data: &'a [S], rs: usize, cs: usize) -> Self {
        Self { data, rs, cs }
    }

    fn covers(&self, rows: usize, cols: usize) -> bool {
        rows == 0 || cols == 0 || (rows - 1) * self.rs + (cols - 1) * self.cs < self.data.len()
    }
}

fn dgemm(
    dims: (usize, usize, usize),
    a: Strided<'_, f64>,
    b: Strided<'_, f64>,
    c: &mut [f64],
    accumulate: bool,
) {
    let (m, k, n) = dims;
    assert!(
        a.covers(m, k) && b.covers(k, n) && c.len() == m * n,
        "gemm operands out of bounds"
    );
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }

    fn gemm(
        dims: (usize, usize, usize),
        a: Strided<'_, f64>,
        b: Strided<'_, f64>,
        c: &mut [f64],
        accumulate: bool,
    ) {
        dgemm(dims, a, b, c, accumulate);
    }
}

/// Forward-mode dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        self.re -= o.re;
        self.eps -= o.eps;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}

impl Real for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::new(v, 0.0)
    }

    #[inline]
    fn value(self) -> f64 {
        self.re
    }

    #[inline]
    fn scale(self, k: f64) -> Self {
        Dual::new(self.re * k, self.eps * k)
    }

    /// Three real products: `re = a.re·b.re`, `eps = a.re·b.eps + a.eps·b.re`.
    fn gemm(
        dims: (usize, usize, usize),
        a: Strided<'_, Dual>,
        b: Strided<'_, Dual>,
        c: &mut [Dual],
        accumulate: bool,
    ) {
        let split = |v: &[Dual]| -> (Vec<f64>, Vec<f64>) { v.iter().map(|d| (d.re, d.eps)).unzip() };
        let (a_re, a_eps) = split(a.data);
        let (b_re, b_eps) = split(b.data);
        let (mut c_re, mut c_eps) = if accumulate {
            split(c)
        } else {
            (vec![0.0; c.len()], vec![0.0; c.len()])
        };
        let (ar, ae) = (Strided::new(&a_re, a.rs, a.cs), Strided::new(&a_eps, a.rs, a.cs));
        let (br, be) = (Strided::new(&b_re, b.rs, b.cs), Strided::new(&b_eps, b.rs, b.cs));
        dgemm(dims, ar, br, &mut c_re, accumulate);
        dgemm(dims, ar, be, &mut c_eps, accumulate);
        dgemm(dims, ae, br, &mut c_eps, true);
        for ((out, re), eps) in c.iter_mut().zip(c_re).zip(c_eps) {
            *out = Dual::new(re, eps);
        }
    }
}
