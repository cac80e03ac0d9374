//! Spectral and structural analysis of small dense real matrices.
//!
//! Everything here is sized for systems of dimension up to about ten:
//! dense SVDs are used freely and nothing is incremental.

use alloc::{format, vec, vec::Vec};

use nalgebra::{Complex, DMatrix, Schur, SVD};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, cond_c, ensure_shape, ensure_square, is_finite, null_basis, op_norm, op_norm_c,
    rank_c, symmetrize, to_complex, CMatrix,
};

/// Default relative tolerance for eigenvalue clustering.
pub const TOL_CLUSTER: f64 = 1e-6;
/// Default relative singular-value cutoff for rank decisions.
pub const TOL_RANK: f64 = 1e-8;
/// Similarity transforms with a larger condition number are flagged.
pub const ILL_CONDITIONED: f64 = 1e8;

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Internal("real Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the eigenvalues of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    ensure_square(m, "matrix")?;
    if m.nrows() == 0 {
        return Err(Error::Dimension("empty matrix has no spectrum".into()));
    }
    Ok(eigenvalues(m)?
        .iter()
        .fold(f64::NEG_INFINITY, |acc, l| acc.max(l.re)))
}

/// One group of numerically coincident eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    pub value: Complex<f64>,
    pub multiplicity: usize,
    /// Jordan block sizes, largest first.
    pub block_sizes: Vec<usize>,
}

/// Jordan-structure summary of a real square matrix `M = V J V⁻¹`.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    pub eigenvalues: Vec<Complex<f64>>,
    pub abscissa: f64,
    pub clusters: Vec<EigenCluster>,
    /// Largest Jordan block size.
    pub m: usize,
    /// Columns are (generalized) eigenvectors, arranged in Jordan chains.
    pub similarity: CMatrix,
    pub similarity_cond: f64,
    pub diagonalizable: bool,
    /// Set when `similarity_cond` exceeds [`ILL_CONDITIONED`].
    pub ill_conditioned: bool,
}

impl SpectralProfile {
    /// All block sizes, cluster by cluster.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.clusters
            .iter()
            .flat_map(|c| c.block_sizes.iter().copied())
            .collect()
    }

    /// `‖V⁻¹ E V‖₂`, the norm of a perturbation in Jordan coordinates.
    pub fn similar_norm(&self, e: &DMatrix<f64>) -> Result<f64> {
        let n = self.similarity.nrows();
        ensure_shape(e, n, n, "perturbation")?;
        let inv = self
            .similarity
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Internal("singular similarity transform".into()))?;
        Ok(op_norm_c(&(inv * to_complex(e) * &self.similarity)))
    }
}

fn cluster_eigenvalues(eigs: &[Complex<f64>], tol: f64) -> Vec<Vec<Complex<f64>>> {
    // single linkage
    let n = eigs.len();
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if label[i] != label[j] && cabs(eigs[i] - eigs[j]) <= tol {
                    let (lo, hi) = (label[i].min(label[j]), label[i].max(label[j]));
                    for l in label.iter_mut() {
                        if *l == hi {
                            *l = lo;
                        }
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out: Vec<Vec<Complex<f64>>> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for i in 0..n {
        match seen.iter().position(|&l| l == label[i]) {
            Some(p) => out[p].push(eigs[i]),
            None => {
                seen.push(label[i]);
                out.push(vec![eigs[i]]);
            }
        }
    }
    out
}

fn cabs(z: Complex<f64>) -> f64 {
    z.re.hypot(z.im)
}

fn shifted(m: &CMatrix, lambda: Complex<f64>) -> CMatrix {
    let mut n = m.clone();
    for i in 0..n.nrows() {
        n[(i, i)] -= lambda;
    }
    n
}

/// Orthonormal basis for the column span of `s`.
fn orth(s: &CMatrix) -> CMatrix {
    if s.ncols() == 0 {
        return CMatrix::zeros(s.nrows(), 0);
    }
    let svd = SVD::new(s.clone(), true, false);
    let smax = svd.singular_values.iter().fold(0.0, |a: f64, &b| a.max(b));
    let keep = svd
        .singular_values
        .iter()
        .filter(|&&x| x > 1e-10 * smax)
        .count();
    svd.u.expect("u computed").columns(0, keep).into_owned()
}

fn hcat_c(parts: &[CMatrix], rows: usize) -> CMatrix {
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.view_mut((0, at), (rows, p.ncols())).copy_from(p);
        at += p.ncols();
    }
    out
}

struct ClusterStructure {
    block_sizes: Vec<usize>,
    chains: Vec<CMatrix>,
}

/// Jordan chains for one cluster, or `None` when the rank scan cannot
/// account for the full algebraic multiplicity.
fn cluster_structure(
    mc: &CMatrix,
    lambda: Complex<f64>,
    mult: usize,
    scale: f64,
    tol_rank: f64,
) -> Result<Option<ClusterStructure>> {
    let n = mc.nrows();
    let nmat = shifted(mc, lambda);
    let mut powers = vec![CMatrix::identity(n, n)];
    let mut ranks = vec![n];
    let mut k = 1;
    loop {
        // ranks of N^0..N^n must repeat somewhere
        if k > n + 1 {
            return Err(Error::Internal(format!(
                "rank scan for eigenvalue {lambda} did not stagnate within {n} steps"
            )));
        }
        let p = &nmat * &powers[k - 1];
        let r = rank_c(&p, tol_rank * scale.powi(k as i32));
        powers.push(p);
        if r == ranks[k - 1] {
            break;
        }
        ranks.push(r);
        k += 1;
    }
    let index = ranks.len() - 1;
    let nullity = n - ranks[index];
    if nullity < mult {
        return Ok(None);
    }
    if nullity > mult {
        return Err(Error::Internal(format!(
            "generalized eigenspace of {lambda} has dimension {nullity} > multiplicity {mult}"
        )));
    }
    // at_least[k] = number of blocks of size >= k
    let at_least: Vec<usize> = (0..=index + 1)
        .map(|k| {
            if k == 0 || k > index {
                0
            } else {
                ranks[k - 1] - ranks[k]
            }
        })
        .collect();
    // block counts must not grow with size; noisy ranks of a badly
    // conditioned block can say otherwise
    if at_least.windows(2).skip(1).any(|w| w[0] < w[1]) {
        return Ok(None);
    }
    let mut block_sizes = Vec::new();
    for size in (1..=index).rev() {
        for _ in 0..(at_least[size] - at_least[size + 1]) {
            block_sizes.push(size);
        }
    }

    let kernels: Vec<CMatrix> = (0..=index)
        .map(|k| null_basis(&powers[k], n - ranks[k]))
        .collect();
    // heads of chains chosen so far, with their lengths
    let mut heads: Vec<(CMatrix, usize)> = Vec::new();
    for size in (1..=index).rev() {
        let need = at_least[size] - at_least[size + 1];
        if need == 0 {
            continue;
        }
        let mut span = vec![kernels[size - 1].clone()];
        for (v, len) in &heads {
            span.push(&powers[len - size] * v);
        }
        let q = orth(&hcat_c(&span, n));
        let x = &kernels[size] - &q * (q.adjoint() * &kernels[size]);
        let svd = SVD::new(x, true, false);
        let u = svd.u.expect("u computed");
        for j in 0..need {
            heads.push((u.columns(j, 1).into_owned(), size));
        }
    }
    let chains = heads
        .iter()
        .map(|(v, len)| {
            let cols: Vec<CMatrix> = (0..*len).map(|j| &powers[len - 1 - j] * v).collect();
            hcat_c(&cols, n)
        })
        .collect();
    Ok(Some(ClusterStructure {
        block_sizes,
        chains,
    }))
}

/// Eigenvalues, Jordan block sizes and a Jordan-chain similarity transform.
///
/// `tol_cluster` and `tol_rank` are relative; both are multiplied by
/// `1 + ‖M‖₂` (the rank cutoff for `(M − λI)^k` by its `k`-th power).
pub fn jordan_profile(
    m: &DMatrix<f64>,
    tol_cluster: f64,
    tol_rank: f64,
) -> Result<SpectralProfile> {
    ensure_square(m, "matrix")?;
    if !(tol_cluster > 0.0 && tol_rank > 0.0) {
        return Err(Error::Value("tolerances must be positive".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Dimension("empty matrix has no spectrum".into()));
    }
    let eigs = eigenvalues(m)?;
    let abscissa = eigs.iter().fold(f64::NEG_INFINITY, |acc, l| acc.max(l.re));
    let scale = 1.0 + op_norm(m);
    let mc = to_complex(m);

    let mut clusters = Vec::new();
    let mut chains = Vec::new();
    let mut pending: Vec<Vec<Complex<f64>>> = cluster_eigenvalues(&eigs, tol_cluster * scale);
    while let Some(group) = pending.pop() {
        let mult = group.len();
        let center = group.iter().fold(Complex::new(0.0, 0.0), |a, &b| a + b) / (mult as f64);
        match cluster_structure(&mc, center, mult, scale, tol_rank)? {
            Some(s) => {
                clusters.push(EigenCluster {
                    value: center,
                    multiplicity: mult,
                    block_sizes: s.block_sizes,
                });
                chains.extend(s.chains);
            }
            // close but numerically distinct eigenvalues
            None if mult > 1 => pending.extend(group.into_iter().map(|l| vec![l])),
            None => {
                return Err(Error::Internal(format!(
                    "no eigenvector found for simple eigenvalue {center}"
                )))
            }
        }
    }
    clusters.reverse();
    let similarity = hcat_c(&chains, n);
    if similarity.ncols() != n {
        return Err(Error::Internal("incomplete Jordan basis".into()));
    }
    let similarity_cond = cond_c(&similarity);
    let m_max = clusters
        .iter()
        .flat_map(|c| c.block_sizes.iter().copied())
        .max()
        .unwrap_or(1);
    Ok(SpectralProfile {
        eigenvalues: eigs,
        abscissa,
        m: m_max,
        diagonalizable: m_max == 1,
        ill_conditioned: !(similarity_cond <= ILL_CONDITIONED),
        similarity,
        similarity_cond,
        clusters,
    })
}

/// [`jordan_profile`] with the default tolerances.
pub fn jordan_profile_default(m: &DMatrix<f64>) -> Result<SpectralProfile> {
    jordan_profile(m, TOL_CLUSTER, TOL_RANK)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
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
// 1-norm thresholds for degrees 3, 5, 7, 9, 13
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.53939833006323e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    let mut pow = DMatrix::identity(n, n);
    for k in (0..b.len()).step_by(2) {
        v += &pow * b[k];
        u += &pow * b[k + 1];
        pow = &pow * &a2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// `e^{Mt}` by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exp(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    ensure_square(m, "matrix")?;
    if !t.is_finite() {
        return Err(Error::Value(format!("time {t} is not finite")));
    }
    let n = m.nrows();
    let a = m * t;
    let nrm = norm1(&a);
    let (uv, squarings) = if nrm <= THETA[0] {
        (pade_low(&a, &PADE3), 0)
    } else if nrm <= THETA[1] {
        (pade_low(&a, &PADE5), 0)
    } else if nrm <= THETA[2] {
        (pade_low(&a, &PADE7), 0)
    } else if nrm <= THETA[3] {
        (pade_low(&a, &PADE9), 0)
    } else {
        let s = (nrm / THETA[4]).log2().ceil().max(0.0);
        if s > 1000.0 {
            return Err(Error::Value(format!(
                "‖Mt‖₁ = {nrm} overflows the exponential"
            )));
        }
        let scaled = &a * 2f64.powi(-(s as i32));
        (pade13(&scaled), s as u32)
    };
    let (u, v) = uv;
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Value("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(Error::Value(format!("e^(Mt) overflowed for ‖Mt‖₁ = {nrm}")));
    }
    debug_assert_eq!(r.nrows(), n);
    Ok(r)
}

fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `Tᵀ Y + Y T + S = 0` for quasi upper triangular `T`.
fn quasi_triangular_lyapunov(t: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = schur_blocks(t);
    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(ri, p) in &blocks {
        for &(cj, q) in &blocks {
            let mut rhs = -s.view((ri, cj), (p, q)).into_owned();
            for &(rk, pk) in blocks.iter().take_while(|b| b.0 < ri) {
                rhs -= t.view((rk, ri), (pk, p)).transpose() * y.view((rk, cj), (pk, q));
            }
            for &(ck, qk) in blocks.iter().take_while(|b| b.0 < cj) {
                rhs -= y.view((ri, ck), (p, qk)) * t.view((ck, cj), (qk, q));
            }
            // (I_q ⊗ T_iiᵀ + T_jjᵀ ⊗ I_p) vec(Y_ij) = vec(rhs)
            let tii = t.view((ri, ri), (p, p));
            let tjj = t.view((cj, cj), (q, q));
            let mut k = DMatrix::<f64>::zeros(p * q, p * q);
            for c in 0..q {
                for r in 0..p {
                    let row = c * p + r;
                    for r2 in 0..p {
                        k[(row, c * p + r2)] += tii[(r2, r)];
                    }
                    for c2 in 0..q {
                        k[(row, c2 * p + r)] += tjj[(c2, c)];
                    }
                }
            }
            let vec_rhs = nalgebra::DVector::from_column_slice(rhs.as_slice());
            let sol = k
                .lu()
                .solve(&vec_rhs)
                .ok_or_else(|| Error::Internal("singular Sylvester block".into()))?;
            y.view_mut((ri, cj), (p, q)).copy_from_slice(sol.as_slice());
        }
    }
    Ok(y)
}

/// Solves `Dᵀ V + V D + S = 0` for Hurwitz `D` (Bartels–Stewart on the
/// real Schur form). The solution equals `∫₀^∞ e^{Dᵀt} S e^{Dt} dt`.
pub fn lyapunov_solve(d: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(d, "D")?;
    let n = d.nrows();
    ensure_shape(s, n, n, "S")?;
    if !is_finite(s) {
        return Err(Error::Value("S has non-finite entries".into()));
    }
    if asymmetry(s) > 1e-10 * (1.0 + s.norm()) {
        return Err(Error::Value("S is not symmetric".into()));
    }
    let alpha = spectral_abscissa(d)?;
    if alpha >= 0.0 {
        return Err(Error::Instability { abscissa: alpha });
    }
    let schur = Schur::try_new(d.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Internal("real Schur decomposition did not converge".into()))?;
    let (u, t) = schur.unpack();
    let s_tilde = u.transpose() * symmetrize(s) * &u;
    let y = quasi_triangular_lyapunov(&t, &s_tilde)?;
    Ok(symmetrize(&(&u * y * u.transpose())))
}

/// `∫₀^h e^{Ds} C Cᵀ e^{Dᵀs} ds`; pass `f64::INFINITY` for the stationary
/// covariance of a Hurwitz `D`.
pub fn noise_gramian(d: &DMatrix<f64>, c: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    ensure_square(d, "D")?;
    let n = d.nrows();
    if c.nrows() != n {
        return Err(Error::Dimension(format!(
            "C has {} rows, D is {n}x{n}",
            c.nrows()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Value(format!("horizon {h} must be positive")));
    }
    let cct = c * c.transpose();
    if h.is_infinite() {
        return lyapunov_solve(&d.transpose(), &cct);
    }
    // Van Loan on a short piece, since exp(−D h) cancels badly once h‖D‖ is
    // large; then G(2s) = G(s) + e^{Ds} G(s) e^{Dᵀs}, a sum of PSD terms
    let mut halvings = 0;
    let mut s = h;
    let d_norm = op_norm(d);
    while s * d_norm > 0.5 && halvings < 60 {
        s *= 0.5;
        halvings += 1;
    }
    // Van Loan: exp([[-D, CCᵀ], [0, Dᵀ]] s) = [[·, F12], [0, F22]], gramian = F22ᵀ F12
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-d));
    big.view_mut((0, n), (n, n)).copy_from(&cct);
    big.view_mut((n, n), (n, n)).copy_from(&d.transpose());
    let e = matrix_exp(&big, s)?;
    let f12 = e.view((0, n), (n, n));
    let f22 = e.view((n, n), (n, n));
    let mut g = symmetrize(&(f22.transpose() * f12));
    let mut phi = f22.transpose();
    for _ in 0..halvings {
        g = symmetrize(&(&g + &phi * &g * phi.transpose()));
        phi = &phi * &phi;
        if !is_finite(&g) {
            return Err(Error::Value(format!(
                "noise gramian overflows at horizon {h}"
            )));
        }
    }
    Ok(g)
}
