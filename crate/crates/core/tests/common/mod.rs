//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical routines.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use renovor_core::linalg::SymMat3;
use renovor_core::{LabelVolume, VolumeGeometry};

pub type M3 = [[f64; 3]; 3];

pub fn sym_to_dense(s: &SymMat3) -> M3 {
    let a = s.0;
    [[a[0], a[1], a[2]], [a[1], a[3], a[4]], [a[2], a[4], a[5]]]
}

pub fn dense_to_sym(m: &M3) -> SymMat3 {
    SymMat3([m[0][0], 0.5 * (m[0][1] + m[1][0]), 0.5 * (m[0][2] + m[2][0]), m[1][1], 0.5 * (m[1][2] + m[2][1]), m[2][2]])
}

pub fn mul(a: &M3, b: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn transpose(a: &M3) -> M3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn frob(a: &M3) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &M3, b: &M3) -> M3 {
    let mut c = *a;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] -= b[i][j];
        }
    }
    c
}

pub fn det(a: &M3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn inverse(a: &M3) -> M3 {
    let d = det(a);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
        }
    }
    inv
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix: eigenvalues
/// (unsorted) and eigenvectors as columns of the returned matrix.
pub fn jacobi(a: &M3) -> ([f64; 3], M3) {
    let mut a = *a;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-30 * (1.0 + frob(&a).powi(2)) {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            r[p][p] = c;
            r[q][q] = c;
            r[p][q] = s;
            r[q][p] = -s;
            a = mul(&transpose(&r), &mul(&a, &r));
            v = mul(&v, &r);
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// `f` applied to the eigenvalues of a symmetric matrix.
pub fn mat_fn(a: &M3, f: impl Fn(f64) -> f64) -> M3 {
    let (l, v) = jacobi(a);
    let d = [[f(l[0]), 0.0, 0.0], [0.0, f(l[1]), 0.0], [0.0, 0.0, f(l[2])]];
    mul(&v, &mul(&d, &transpose(&v)))
}

/// Real roots of the characteristic polynomial of a matrix known to have
/// real eigenvalues (trigonometric cubic solution), ascending.
pub fn char_poly_roots(a: &M3) -> [f64; 3] {
    let tr = a[0][0] + a[1][1] + a[2][2];
    let a2 = mul(a, a);
    let tr2 = a2[0][0] + a2[1][1] + a2[2][2];
    let c2 = -tr;
    let c1 = 0.5 * (tr * tr - tr2);
    let c0 = -det(a);
    // x^3 + c2 x^2 + c1 x + c0, depressed with x = t - c2/3
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
    let shift = -c2 / 3.0;
    if p.abs() < 1e-14 * (1.0 + tr.abs()).powi(2) {
        let t = (-q).cbrt();
        return [t + shift; 3];
    }
    let m = 2.0 * (-p / 3.0).sqrt();
    let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
    let theta = arg.acos() / 3.0;
    let mut r = [0.0; 3];
    for (k, x) in r.iter_mut().enumerate() {
        *x = m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift;
    }
    r.sort_by(f64::total_cmp);
    r
}

/// Affine-invariant distance from the eigenvalues of `A^{-1} B`.
pub fn geodesic_oracle(a: &M3, b: &M3) -> f64 {
    let m = mul(&inverse(a), b);
    char_poly_roots(&m).iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt()
}

/// Random symmetric matrix with entries in [-s, s].
pub fn random_symmetric<R: Rng>(rng: &mut R, s: f64) -> M3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let x = rng.random_range(-s..=s);
            m[i][j] = x;
            m[j][i] = x;
        }
    }
    m
}

/// Random SPD matrix `Q diag(l) Q^T` with eigenvalues in `[lo, hi]`.
pub fn random_spd<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> M3 {
    let (_, q) = jacobi(&random_symmetric(rng, 1.0));
    let l = [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
    let d = [[l[0], 0.0, 0.0], [0.0, l[1], 0.0], [0.0, 0.0, l[2]]];
    mul(&q, &mul(&d, &transpose(&q)))
}

/// Random matrix with singular values kept away from zero.
pub fn random_invertible<R: Rng>(rng: &mut R) -> M3 {
    loop {
        let mut m = [[0.0; 3]; 3];
        for row in m.iter_mut() {
            for x in row.iter_mut() {
                *x = rng.random_range(-2.0..=2.0);
            }
        }
        if det(&m).abs() > 0.5 {
            return m;
        }
    }
}

pub fn random_mask<R: Rng>(rng: &mut R, g: VolumeGeometry, density: f64) -> LabelVolume {
    LabelVolume::mask_from(g, |_| rng.random_bool(density))
}

/// Union of a few random axis-aligned boxes.
pub fn random_blobs<R: Rng>(rng: &mut R, g: VolumeGeometry, count: usize) -> LabelVolume {
    let d = g.dims();
    let mut m = LabelVolume::filled(g, 0);
    for _ in 0..count {
        let lo: [usize; 3] = std::array::from_fn(|a| rng.random_range(0..d[a]));
        let hi: [usize; 3] = std::array::from_fn(|a| (lo[a] + rng.random_range(0..4)).min(d[a] - 1));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    m.set(x, y, z, 1);
                }
            }
        }
    }
    m
}

/// Breadth-first flood fill labelling; returns component id per voxel
/// (`usize::MAX` for background) and component sizes.
pub fn flood_fill(mask: &LabelVolume, full: bool) -> (Vec<usize>, Vec<usize>) {
    let g = *mask.geometry();
    let d = g.dims();
    let mut comp = vec![usize::MAX; g.len()];
    let mut sizes = Vec::new();
    for s in 0..g.len() {
        if mask.data()[s] == 0 || comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        comp[s] = id;
        while let Some(u) = queue.pop_front() {
            size += 1;
            let c = g.coords(u);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let n = dx.abs() + dy.abs() + dz.abs();
                        if n == 0 || (!full && n > 1) {
                            continue;
                        }
                        let p = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                        if (0..3).any(|a| p[a] < 0 || p[a] >= d[a] as i64) {
                            continue;
                        }
                        let v = g.index(p[0] as usize, p[1] as usize, p[2] as usize);
                        if mask.data()[v] != 0 && comp[v] == usize::MAX {
                            comp[v] = id;
                            queue.push_back(v);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Squared world distance between two voxel coordinates.
pub fn world_d2(g: &VolumeGeometry, a: [usize; 3], b: [usize; 3]) -> f64 {
    let s = g.spacing();
    (0..3).map(|k| ((a[k] as f64 - b[k] as f64) * s[k]).powi(2)).sum()
}
