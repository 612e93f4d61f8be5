//! Test-only oracles, written without nalgebra's decompositions.
#![allow(dead_code)]

/// Row-major dense matrix as nested vectors.
pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &nalgebra::DMatrix<f64>) -> Dense {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Naive triple-loop product.
pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Dense) -> Dense {
    (0..a[0].len())
        .map(|c| a.iter().map(|row| row[c]).collect())
        .collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// `sqrt(λ_max(D Dᵀ))`.
pub fn spectral_norm_oracle(d: &Dense) -> f64 {
    let ddt = matmul(d, &transpose(d));
    jacobi_eigenvalues(&ddt)
        .last()
        .copied()
        .unwrap()
        .max(0.0)
        .sqrt()
}

/// Sample covariance (zero known mean) of column vectors.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Dense {
    let n = samples[0].len();
    let mut c = vec![vec![0.0; n]; n];
    for s in samples {
        for i in 0..n {
            for j in 0..n {
                c[i][j] += s[i] * s[j];
            }
        }
    }
    let k = samples.len() as f64;
    c.iter_mut().flatten().for_each(|v| *v /= k);
    c
}

pub fn frob(a: &Dense) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_frob_err(est: &Dense, exact: &Dense) -> f64 {
    let diff: Dense = est
        .iter()
        .zip(exact)
        .map(|(r, e)| r.iter().zip(e).map(|(a, b)| a - b).collect())
        .collect();
    frob(&diff) / frob(exact)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
