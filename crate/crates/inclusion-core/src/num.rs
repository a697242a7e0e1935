//! Scalar-generic numeric kernels: stable log-sum-exp, adaptive Simpson
//! quadrature, a dense LU solver, Jacobi-preconditioned conjugate gradients
//! on a symmetric sparse matrix, and a small dense matrix exponential.

use num_traits::Float;

/// Log of a sum of exponentials, computed against the largest summand.
///
/// The slice is sorted in descending order first so the accumulated sum of
/// `exp(t - max)` adds terms of decreasing magnitude, bounding the relative
/// error by machine epsilon times the count.
pub fn log_sum_exp<F: Float>(terms: &mut [F]) -> F {
    if terms.is_empty() {
        return F::neg_infinity();
    }
    terms.sort_unstable_by(|a, b| b.partial_cmp(a).expect("NaN in log-sum-exp input"));
    let max = terms[0];
    if !max.is_finite() {
        return max;
    }
    let mut sum = F::zero();
    for &t in terms.iter() {
        sum = sum + (t - max).exp();
    }
    max + sum.ln()
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Float>(f: impl Fn(F) -> F, a: F, b: F, tol: F) -> F {
    fn simpson<F: Float>(fa: F, fm: F, fb: F, a: F, b: F) -> F {
        let six = F::from(6.0).unwrap();
        let four = F::from(4.0).unwrap();
        (b - a) / six * (fa + four * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Float>(
        f: &impl Fn(F) -> F,
        a: F,
        b: F,
        fa: F,
        fm: F,
        fb: F,
        whole: F,
        tol: F,
        depth: u32,
    ) -> F {
        let two = F::from(2.0).unwrap();
        let m = (a + b) / two;
        let lm = (a + m) / two;
        let rm = (m + b) / two;
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let fifteen = F::from(15.0).unwrap();
        let err = (left + right - whole) / fifteen;
        if depth == 0 || err.abs() <= tol {
            left + right + err
        } else {
            let half_tol = tol / two;
            recurse(f, a, m, fa, flm, fm, left, half_tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, half_tol, depth - 1)
        }
    }
    let two = F::from(2.0).unwrap();
    let m = (a + b) / two;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Solves the dense system `a x = b` in place by LU with partial pivoting.
/// `a` is `n x n` row-major and is overwritten; `b` becomes the solution.
///
/// Returns `false` if a pivot underflows to zero (singular matrix).
#[must_use]
pub fn solve_dense<F: Float>(a: &mut [F], b: &mut [F], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == F::zero() {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = F::one() / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor == F::zero() {
                continue;
            }
            a[row * n + col] = F::zero();
            for k in col + 1..n {
                let upd = a[col * n + k];
                a[row * n + k] = a[row * n + k] - factor * upd;
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    true
}

/// Symmetric sparse matrix in CSR form (full pattern stored, not just a
/// triangle), used by the conjugate-gradient solver.
pub struct SparseSym<F> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<F>,
}

impl<F: Float> SparseSym<F> {
    /// Builds from unsorted triplets; duplicate entries are summed.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(u32, u32, F)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val: Vec<F> = Vec::with_capacity(triplets.len());
        let mut cur_row = 0usize;
        for &(r, c, v) in triplets.iter() {
            let r = r as usize;
            debug_assert!(r < n && (c as usize) < n);
            while cur_row < r {
                cur_row += 1;
                row_ptr[cur_row] = col.len();
            }
            if col.len() > row_ptr[cur_row] && *col.last().unwrap() == c {
                let last = val.last_mut().unwrap();
                *last = *last + v;
            } else {
                col.push(c);
                val.push(v);
            }
        }
        while cur_row < n {
            cur_row += 1;
            row_ptr[cur_row] = col.len();
        }
        SparseSym { n, row_ptr, col, val }
    }

    pub fn matvec(&self, x: &[F], y: &mut [F]) {
        for r in 0..self.n {
            let mut acc = F::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc = acc + self.val[k] * x[self.col[k] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<F> {
        let mut d = vec![F::zero(); self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col[k] as usize == r {
                    d[r] = d[r] + self.val[k];
                }
            }
        }
        d
    }
}

/// Outcome of a conjugate-gradient solve.
pub struct CgOutcome<F> {
    pub x: Vec<F>,
    pub iterations: usize,
    pub relative_residual: F,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite system. Stops at relative residual `tol` (in the Euclidean norm
/// of `b`) or after `max_iter` iterations.
pub fn solve_cg<F: Float>(a: &SparseSym<F>, b: &[F], tol: F, max_iter: usize) -> CgOutcome<F> {
    let n = a.n;
    let diag = a.diagonal();
    let inv_diag: Vec<F> = diag
        .iter()
        .map(|&d| if d > F::zero() { F::one() / d } else { F::one() })
        .collect();
    let norm_b = b.iter().fold(F::zero(), |s, &v| s + v * v).sqrt();
    if norm_b == F::zero() {
        return CgOutcome { x: vec![F::zero(); n], iterations: 0, relative_residual: F::zero(), converged: true };
    }
    let mut x = vec![F::zero(); n];
    let mut r: Vec<F> = b.to_vec();
    let mut z: Vec<F> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![F::zero(); n];
    let mut iterations = 0;
    let mut res = F::one();
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= F::zero() {
            break; // matrix not positive definite along p; bail out
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        iterations = it;
        res = dot(&r, &r).sqrt() / norm_b;
        if res <= tol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { x, iterations, relative_residual: res, converged: res <= tol }
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (&x, &y)| s + x * y)
}

/// Zero-fill incomplete Cholesky factor `L` with the sparsity pattern of the
/// lower triangle of the input matrix, stored in CSR with a separate diagonal.
struct IncompleteCholesky<F> {
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<F>,
    diag: Vec<F>,
}

impl<F: Float> IncompleteCholesky<F> {
    /// Attempts the IC(0) factorization of `a` with its diagonal scaled by
    /// `1 + shift`. Returns `None` when a pivot becomes non-positive.
    fn build(a: &SparseSym<F>, shift: F) -> Option<Self> {
        let n = a.n;
        let mut row_ptr = vec![0usize; n + 1];
        let mut col: Vec<u32> = Vec::new();
        let mut val: Vec<F> = Vec::new();
        let mut diag = vec![F::zero(); n];
        for i in 0..n {
            let mut aii = F::zero();
            // strictly-lower entries of row i, columns ascending (CSR is sorted)
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col[k] as usize;
                if j == i {
                    aii = a.val[k] * (F::one() + shift);
                } else if j < i {
                    // sparse dot of L rows i and j over columns < j
                    let (mut pi, mut pj) = (row_ptr[i], row_ptr[j]);
                    let (ei, ej) = (col.len(), row_ptr[j + 1]);
                    let mut sum = a.val[k];
                    while pi < ei && pj < ej {
                        match col[pi].cmp(&col[pj]) {
                            std::cmp::Ordering::Less => pi += 1,
                            std::cmp::Ordering::Greater => pj += 1,
                            std::cmp::Ordering::Equal => {
                                sum = sum - val[pi] * val[pj];
                                pi += 1;
                                pj += 1;
                            }
                        }
                    }
                    col.push(j as u32);
                    val.push(sum / diag[j]);
                }
            }
            let start = row_ptr[i];
            let mut d = aii;
            for k in start..col.len() {
                d = d - val[k] * val[k];
            }
            if d <= F::zero() || !d.is_finite() {
                return None;
            }
            diag[i] = d.sqrt();
            row_ptr[i + 1] = col.len();
        }
        Some(IncompleteCholesky { row_ptr, col, val, diag })
    }

    /// Solves `L Lᵀ z = r` by forward and back substitution.
    fn apply(&self, r: &[F], z: &mut [F]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = r[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s = s - self.val[k] * z[self.col[k] as usize];
            }
            z[i] = s / self.diag[i];
        }
        for i in (0..n).rev() {
            let zi = z[i] / self.diag[i];
            z[i] = zi;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k] as usize;
                z[j] = z[j] - self.val[k] * zi;
            }
        }
    }
}

/// Incomplete-Cholesky preconditioned conjugate gradients. The system is
/// first rescaled symmetrically to unit diagonal so that edge weights
/// spanning many orders of magnitude (routine for condensation models with
/// tiny diffusion constants) stay within floating-point range throughout the
/// iteration. Falls back to Jacobi preconditioning when the factorization
/// breaks down even after diagonal shifting.
pub fn solve_ic_cg<F: Float>(a: &SparseSym<F>, b: &[F], tol: F, max_iter: usize) -> CgOutcome<F> {
    let n = a.n;
    // D^{-1/2} A D^{-1/2}: unit diagonal, off-diagonals in [-1, 1]
    let orig_diag = a.diagonal();
    let inv_sqrt: Vec<F> = orig_diag
        .iter()
        .map(|&d| if d > F::zero() { F::one() / d.sqrt() } else { F::one() })
        .collect();
    let mut scaled_val = a.val.clone();
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            scaled_val[k] = scaled_val[k] * inv_sqrt[r] * inv_sqrt[a.col[k] as usize];
        }
    }
    let a = SparseSym { n, row_ptr: a.row_ptr.clone(), col: a.col.clone(), val: scaled_val };
    let b: Vec<F> = b.iter().zip(&inv_sqrt).map(|(&v, &s)| v * s).collect();
    let b = &b[..];

    let mut shift = F::zero();
    let mut ic = IncompleteCholesky::build(&a, shift);
    for _ in 0..6 {
        if ic.is_some() {
            break;
        }
        shift = if shift == F::zero() {
            F::from(1e-3).unwrap()
        } else {
            shift + shift
        };
        ic = IncompleteCholesky::build(&a, shift);
    }
    let Some(ic) = ic else {
        let mut out = solve_cg(&a, b, tol, max_iter);
        for (xi, &s) in out.x.iter_mut().zip(&inv_sqrt) {
            *xi = *xi * s;
        }
        return out;
    };
    // Componentwise stopping rule matched to the harmonicity criterion
    // |defect_i| / (total incident weight)_i <= tol: in scaled coordinates
    // this reads |r_i| <= tol * sqrt(d_i).
    let thresh: Vec<F> = orig_diag
        .iter()
        .map(|&d| tol * if d > F::zero() { d.sqrt() } else { F::one() })
        .collect();
    let weighted_res = |r: &[F]| -> F {
        r.iter()
            .zip(&thresh)
            .fold(F::zero(), |m, (&ri, &ti)| m.max(ri.abs() / ti))
    };
    // A single Krylov solve carries a uniform absolute error ~ eps*|x| across
    // components, which swamps the thresholds at states whose incident weight
    // is tiny relative to the global maximum. Iterative refinement fixes
    // this: each round re-solves for the correction to the freshly computed
    // true residual, shrinking the componentwise floor by the inner solver's
    // relative accuracy.
    let mut x = vec![F::zero(); n];
    let mut r = vec![F::zero(); n];
    let mut ax = vec![F::zero(); n];
    let mut iterations = 0;
    let mut res = F::infinity();
    let mut converged = false;
    for _round in 0..4 {
        a.matvec(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        res = weighted_res(&r);
        if res <= F::one() {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        let (delta, its) = pcg_euclidean(&a, &ic, &r, max_iter - iterations);
        iterations += its;
        if its == 0 {
            break;
        }
        for i in 0..n {
            x[i] = x[i] + delta[i];
        }
    }
    for (xi, &s) in x.iter_mut().zip(&inv_sqrt) {
        *xi = *xi * s;
    }
    CgOutcome { x, iterations, relative_residual: res * tol, converged }
}

/// Inner solver for the refinement rounds: IC-preconditioned CG driven to a
/// deep Euclidean relative residual, with a stagnation breakout returning the
/// best iterate seen so far.
fn pcg_euclidean<F: Float>(
    a: &SparseSym<F>,
    ic: &IncompleteCholesky<F>,
    b: &[F],
    max_iter: usize,
) -> (Vec<F>, usize) {
    let n = a.n;
    let norm_b = dot(b, b).sqrt();
    if !(norm_b > F::zero()) {
        return (vec![F::zero(); n], 0);
    }
    let target = norm_b * F::from(1e-14).unwrap();
    let mut x = vec![F::zero(); n];
    let mut r: Vec<F> = b.to_vec();
    let mut z = vec![F::zero(); n];
    ic.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![F::zero(); n];
    let mut best = x.clone();
    let mut best_norm = norm_b;
    let mut since_improved = 0usize;
    let mut iterations = 0;
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= F::zero() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        iterations = it;
        // keep the recurrence honest against drift
        if it % 64 == 0 {
            a.matvec(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        let norm_r = dot(&r, &r).sqrt();
        if norm_r < best_norm {
            if norm_r < best_norm * F::from(0.5).unwrap() {
                since_improved = 0;
            } else {
                since_improved += 1;
            }
            best_norm = norm_r;
            best.copy_from_slice(&x);
        } else {
            since_improved += 1;
        }
        if norm_r <= target || since_improved > 100 {
            break;
        }
        ic.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (best, iterations)
}

/// Dense matrix exponential by scaling-and-squaring with the order-13 Padé
/// approximant. Intended for small matrices (limit chains on ≤ 10 states).
pub fn expm(a: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    // 1-norm
    let mut norm: f64 = 0.0;
    for c in 0..n {
        let mut s = 0.0;
        for r in 0..n {
            s += a[r * n + c].abs();
        }
        norm = norm.max(s);
    }
    let theta13 = 5.371920351148152; // order-13 scaling threshold
    let s = if norm > theta13 { (norm / theta13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a1: Vec<f64> = a.iter().map(|v| v * scale).collect();

    let matmul = |x: &[f64], y: &[f64]| -> Vec<f64> {
        let mut z = vec![0.0; n * n];
        for r in 0..n {
            for k in 0..n {
                let v = x[r * n + k];
                if v == 0.0 {
                    continue;
                }
                for c in 0..n {
                    z[r * n + c] += v * y[k * n + c];
                }
            }
        }
        z
    };
    let ident = {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    };
    let b: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let a2 = matmul(&a1, &a1);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a2, &a4);
    let lin = |coeffs: &[(f64, &[f64])]| -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for &(c, mat) in coeffs {
            for i in 0..n * n {
                m[i] += c * mat[i];
            }
        }
        m
    };
    // u = a1 * (a6*(b13 a6 + b11 a4 + b9 a2) + b7 a6 + b5 a4 + b3 a2 + b1 I)
    let inner_u = lin(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)]);
    let u_core = {
        let t = matmul(&a6, &inner_u);
        let rest = lin(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &ident)]);
        lin(&[(1.0, &t), (1.0, &rest)])
    };
    let u = matmul(&a1, &u_core);
    // v = a6*(b12 a6 + b10 a4 + b8 a2) + b6 a6 + b4 a4 + b2 a2 + b0 I
    let inner_v = lin(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)]);
    let v = {
        let t = matmul(&a6, &inner_v);
        let rest = lin(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &ident)]);
        lin(&[(1.0, &t), (1.0, &rest)])
    };
    // solve (v - u) r = (v + u), column by column
    let mut vm_u = vec![0.0; n * n];
    let mut vp_u = vec![0.0; n * n];
    for i in 0..n * n {
        vm_u[i] = v[i] - u[i];
        vp_u[i] = v[i] + u[i];
    }
    let mut result = vec![0.0; n * n];
    for c in 0..n {
        let mut mat = vm_u.clone();
        let mut rhs: Vec<f64> = (0..n).map(|r| vp_u[r * n + c]).collect();
        let ok = solve_dense(&mut mat, &mut rhs, n);
        assert!(ok, "Padé denominator singular");
        for r in 0..n {
            result[r * n + c] = rhs[r];
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}
