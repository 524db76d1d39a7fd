//! Cyclic Jacobi eigendecomposition for small symmetric matrices.

/// Eigenvalues and eigenvectors of a symmetric matrix, sorted by descending
/// eigenvalue. Eigenvectors are the columns of the returned matrix.
///
/// Cyclic Jacobi sweeps; converges to machine precision in a handful of
/// sweeps for the 3x3/4x4 matrices used here.
pub fn sym_eigen<const N: usize>(a: [[f64; N]; N]) -> ([f64; N], [[f64; N]; N]) {
    let mut a = a;
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..N {
            for q in p + 1..N {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..N {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut vals = [0.0; N];
    for i in 0..N {
        vals[i] = a[i][i];
    }
    // Sort descending by eigenvalue, permuting eigenvector columns alongside.
    let mut order: [usize; N] = [0; N];
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    for i in 0..N {
        for j in i + 1..N {
            if vals[order[j]] > vals[order[i]] {
                order.swap(i, j);
            }
        }
    }
    let mut sorted_vals = [0.0; N];
    let mut sorted_vecs = [[0.0; N]; N];
    for (dst, &src) in order.iter().enumerate() {
        sorted_vals[dst] = vals[src];
        for k in 0..N {
            sorted_vecs[k][dst] = v[k][src];
        }
    }
    (sorted_vals, sorted_vecs)
}
