//! The groups `G_j = Gamma^j x Lambda_j` acting on `(C^2)^j x R^{N-4j}`,
//! their sign homomorphisms, and the Haar-average symmetrizer.
//!
//! `Gamma` is generated by the diagonal circle `e^{i theta}` and the
//! involution-up-to-sign `rho(z1, z2) = (-conj z2, conj z1)`; `phi` is `-1`
//! exactly on the `rho` coset. A point of `C^2` is stored as the four real
//! coordinates `(Re z1, Im z1, Re z2, Im z2)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::discretize::{laplacian, Field, Grid, GridKind};
use crate::error::{Error, Result};
use crate::par;

/// `rho^flip * e^{i theta}`: rotate first, then apply `rho` if `flip`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaElement {
    pub theta: f64,
    pub flip: bool,
}

fn wrap(theta: f64) -> f64 {
    theta.rem_euclid(2.0 * PI)
}

impl GammaElement {
    pub const IDENTITY: GammaElement = GammaElement {
        theta: 0.0,
        flip: false,
    };

    pub const RHO: GammaElement = GammaElement {
        theta: 0.0,
        flip: true,
    };

    pub fn rotation(theta: f64) -> Self {
        GammaElement {
            theta: wrap(theta),
            flip: false,
        }
    }

    /// Group product `self * other` (apply `other` first).
    ///
    /// Uses `rho e^{i theta} = e^{-i theta} rho` and `rho^2 = e^{i pi}`.
    pub fn compose(&self, other: &GammaElement) -> Self {
        let mut theta = if other.flip { -self.theta } else { self.theta } + other.theta;
        if self.flip && other.flip {
            theta += PI;
        }
        GammaElement {
            theta: wrap(theta),
            flip: self.flip ^ other.flip,
        }
    }

    pub fn phi(&self) -> i8 {
        if self.flip {
            -1
        } else {
            1
        }
    }

    pub fn act(&self, z: [f64; 4]) -> [f64; 4] {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let [a1, b1, a2, b2] = z;
        let r = [
            c * a1 - s * b1,
            s * a1 + c * b1,
            c * a2 - s * b2,
            s * a2 + c * b2,
        ];
        if self.flip {
            // (-conj z2, conj z1)
            [-r[2], r[3], r[0], -r[1]]
        } else {
            r
        }
    }

    pub fn approx_eq(&self, other: &GammaElement, tol: f64) -> bool {
        let d = wrap(self.theta - other.theta);
        self.flip == other.flip && d.min(2.0 * PI - d) <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaKind {
    /// `O(N - 4j)` acting on the trailing coordinates.
    Orthogonal,
    Trivial,
}

/// A group `G_j` with sign homomorphism `phi_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySpec {
    pub n: u32,
    /// Number of `C^2` blocks; 0 only for the trivial control group.
    pub j: u32,
    pub lambda: LambdaKind,
    /// Quadrature nodes per circle factor for continuous Haar averages.
    pub haar_samples: usize,
}

impl SymmetrySpec {
    pub fn new(n: u32, j: u32, lambda: LambdaKind, haar_samples: usize) -> Result<Self> {
        if j == 0 || 4 * j > n {
            return Err(Error::InvalidSymmetry(format!(
                "need 1 <= j <= floor(N/4), got N = {n}, j = {j}"
            )));
        }
        if haar_samples < 1 {
            return Err(Error::InvalidSymmetry(
                "haar_samples must be positive".into(),
            ));
        }
        Ok(SymmetrySpec {
            n,
            j,
            lambda,
            haar_samples,
        })
    }

    /// The family used for the multiplicity result: `Lambda_j = O(N-4j)` for
    /// `j < floor(N/4)` and trivial for `j = floor(N/4)`.
    pub fn family(n: u32, j: u32) -> Result<Self> {
        let top = n / 4;
        let lambda = if j < top {
            LambdaKind::Orthogonal
        } else {
            LambdaKind::Trivial
        };
        Self::new(n, j, lambda, 64)
    }

    /// The trivial group with trivial `phi` (a negative control).
    pub fn trivial(n: u32) -> Self {
        SymmetrySpec {
            n,
            j: 0,
            lambda: LambdaKind::Trivial,
            haar_samples: 1,
        }
    }

    /// Dimension of the trailing factor `R^{N-4j}`.
    pub fn tail_dim(&self) -> usize {
        (self.n - 4 * self.j) as usize
    }

    pub fn lambda_acts(&self) -> bool {
        self.lambda == LambdaKind::Orthogonal && self.tail_dim() > 0
    }

    pub fn phi_surjective(&self) -> bool {
        self.j >= 1
    }

    /// Membership in `(R^N)^G`: every block vanishes, and so does the tail
    /// when `Lambda` acts.
    pub fn is_fixed_point(&self, x: &[f64], tol: f64) -> bool {
        let blocks = 4 * self.j as usize;
        let block_zero = x[..blocks].iter().all(|v| v.abs() <= tol);
        let tail_zero = !self.lambda_acts() || x[blocks..].iter().all(|v| v.abs() <= tol);
        block_zero && tail_zero
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            blocks: vec![GammaElement::IDENTITY; self.j as usize],
            lambda: None,
        }
    }

    /// `rho` in block `b` (0-based), identity elsewhere.
    pub fn rho_in_block(&self, b: usize) -> GroupElement {
        let mut g = self.identity();
        g.blocks[b] = GammaElement::RHO;
        g
    }

    /// A random element: uniform angles and cosets, Haar-random orthogonal
    /// tail factor.
    pub fn random_element<R: Rng>(&self, rng: &mut R) -> GroupElement {
        let blocks = (0..self.j)
            .map(|_| GammaElement {
                theta: rng.gen_range(0.0..2.0 * PI),
                flip: rng.gen_bool(0.5),
            })
            .collect();
        let lambda = self
            .lambda_acts()
            .then(|| random_orthogonal(self.tail_dim(), rng));
        GroupElement { blocks, lambda }
    }
}

fn random_orthogonal<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..m {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// An element `(gamma_1, ..., gamma_j, eta)` of `G_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub blocks: Vec<GammaElement>,
    /// `None` is the identity of `Lambda`.
    pub lambda: Option<DMatrix<f64>>,
}

impl GroupElement {
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.compose(b))
            .collect();
        let lambda = match (&self.lambda, &other.lambda) {
            (Some(a), Some(b)) => Some(a * b),
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (None, None) => None,
        };
        GroupElement { blocks, lambda }
    }
}

/// `phi_j(g) = phi(gamma_1) ... phi(gamma_j)`.
pub fn phi_value(g: &GroupElement) -> i8 {
    g.blocks.iter().map(GammaElement::phi).product()
}

/// Applies `g` blockwise to `x in R^N`.
pub fn act(g: &GroupElement, x: &[f64]) -> Result<Vec<f64>> {
    let blocks = 4 * g.blocks.len();
    if x.len() < blocks {
        return Err(Error::DimensionMismatch {
            expected: blocks,
            got: x.len(),
        });
    }
    let mut out = x.to_vec();
    for (b, gamma) in g.blocks.iter().enumerate() {
        let z = [x[4 * b], x[4 * b + 1], x[4 * b + 2], x[4 * b + 3]];
        out[4 * b..4 * b + 4].copy_from_slice(&gamma.act(z));
    }
    if let Some(eta) = &g.lambda {
        let m = x.len() - blocks;
        if eta.nrows() != m {
            return Err(Error::DimensionMismatch {
                expected: eta.nrows(),
                got: m,
            });
        }
        for r in 0..m {
            out[blocks + r] = (0..m).map(|c| eta[(r, c)] * x[blocks + c]).sum();
        }
    }
    Ok(out)
}

/// Quotient coordinates of the `j = 1` action: `(|z1|, |z2|, |y|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedPoint {
    pub s: f64,
    pub t: f64,
    pub r: Option<f64>,
}

pub fn reduce_coordinates(x: &[f64], j: u32) -> Result<ReducedPoint> {
    if j != 1 {
        return Err(Error::InvalidSymmetry(format!(
            "reduced coordinates exist only for j = 1, got j = {j}"
        )));
    }
    if x.len() < 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: x.len(),
        });
    }
    let s = x[0].hypot(x[1]);
    let t = x[2].hypot(x[3]);
    let r = (x.len() > 4).then(|| x[4..].iter().map(|v| v * v).sum::<f64>().sqrt());
    Ok(ReducedPoint { s, t, r })
}

/// A signed permutation of coordinates: `y[a] = sign[a] * x[perm[a]]`.
#[derive(Clone, Debug)]
struct SignedPerm {
    perm: Vec<usize>,
    sign: Vec<f64>,
    phi: f64,
}

/// The eight axis-aligned elements `{i^k, rho i^k}` of `Gamma` acting on
/// block `b` of an `n`-dimensional point.
fn block_signed_perms(n: usize, b: usize) -> Vec<SignedPerm> {
    let mut out = Vec::with_capacity(8);
    for flip in [false, true] {
        for k in 0..4 {
            let g = GammaElement {
                theta: k as f64 * PI / 2.0,
                flip,
            };
            let mut perm: Vec<usize> = (0..n).collect();
            let mut sign = vec![1.0; n];
            // Read off the signed permutation from the images of the basis.
            for c in 0..4 {
                let mut e = [0.0; 4];
                e[c] = 1.0;
                let img = g.act(e);
                for (r, v) in img.iter().enumerate() {
                    if v.abs() > 0.5 {
                        perm[4 * b + r] = 4 * b + c;
                        sign[4 * b + r] = v.signum();
                    }
                }
            }
            out.push(SignedPerm {
                perm,
                sign,
                phi: g.phi() as f64,
            });
        }
    }
    out
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Averages `sum_g phi(g) f(g x)` over a finite group of signed
/// permutations on a symmetric Cartesian grid.
fn average_cartesian(grid: &Grid, values: &[f64], group: &[SignedPerm]) -> Result<Vec<f64>> {
    let axes = grid.axes();
    let n = axes.len();
    for g in group {
        for a in 0..n {
            let src = g.perm[a];
            if axes[a].count != axes[src].count || axes[a].spacing != axes[src].spacing {
                return Err(Error::NotActionClosed { node: grid.node(0) });
            }
        }
    }
    let strides = grid.strides();
    let counts: Vec<usize> = axes.iter().map(|a| a.count).collect();
    let inv = 1.0 / group.len() as f64;
    Ok(par::collect(values.len(), |k| {
        let mut idx = vec![0usize; n];
        let mut rem = k;
        for a in 0..n {
            idx[a] = rem / strides[a];
            rem %= strides[a];
        }
        let mut acc = 0.0;
        for g in group {
            let mut target = 0;
            for a in 0..n {
                let i = idx[g.perm[a]];
                let i = if g.sign[a] < 0.0 {
                    counts[a] - 1 - i
                } else {
                    i
                };
                target += i * strides[a];
            }
            acc += g.phi * values[target];
        }
        acc * inv
    }))
}

/// Discrete Haar average `P f = mean_g phi(g) f(g x)`.
///
/// * Radial grids: `P f = 0` for any surjective `phi` (radial functions are
///   `rho`-invariant).
/// * Bi-radial grids (`j = 1`): rotations act trivially and `rho` swaps
///   `(s, t)`, so `P f(s, t, r) = (f(s, t, r) - f(t, s, r)) / 2`.
/// * Cartesian grids: average over the axis-aligned subgroup generated by
///   `i` and `rho` in each block and the signed permutations of the tail.
pub fn symmetrize(f: &Field, spec: &SymmetrySpec) -> Result<Field> {
    let grid = f.grid();
    if grid.dim() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n as usize,
            got: grid.dim() as usize,
        });
    }
    let v = f.values();
    let values = if !spec.phi_surjective() {
        v.to_vec()
    } else {
        match grid.kind() {
            GridKind::Radial1d => vec![0.0; v.len()],
            GridKind::Biradial2d | GridKind::BiradialRadial3d => {
                if spec.j != 1 {
                    return Err(Error::InvalidSymmetry(
                        "bi-radial grids carry only the j = 1 action".into(),
                    ));
                }
                let axes = grid.axes();
                if axes[0].count != axes[1].count || axes[0].spacing != axes[1].spacing {
                    let k = (0..grid.len()).find(|_| true).unwrap_or(0);
                    return Err(Error::NotActionClosed { node: grid.node(k) });
                }
                let n = axes[0].count;
                let inner = if axes.len() == 3 { axes[2].count } else { 1 };
                par::collect(v.len(), |k| {
                    let i = k / (n * inner);
                    let rest = k % (n * inner);
                    let jj = rest / inner;
                    let r = rest % inner;
                    let swapped = (jj * n + i) * inner + r;
                    0.5 * (v[k] - v[swapped])
                })
            }
            GridKind::Cartesian => {
                let n = grid.dim() as usize;
                let mut cur = v.to_vec();
                for b in 0..spec.j as usize {
                    cur = average_cartesian(grid, &cur, &block_signed_perms(n, b))?;
                }
                if spec.lambda_acts() {
                    let base = 4 * spec.j as usize;
                    let m = spec.tail_dim();
                    for c in 0..m {
                        let id: Vec<usize> = (0..n).collect();
                        let mut sign = vec![1.0; n];
                        sign[base + c] = -1.0;
                        let group = [
                            SignedPerm {
                                perm: id.clone(),
                                sign: vec![1.0; n],
                                phi: 1.0,
                            },
                            SignedPerm {
                                perm: id,
                                sign,
                                phi: 1.0,
                            },
                        ];
                        cur = average_cartesian(grid, &cur, &group)?;
                    }
                    let perms: Vec<SignedPerm> = permutations(m)
                        .into_iter()
                        .map(|p| {
                            let mut perm: Vec<usize> = (0..n).collect();
                            for (a, &src) in p.iter().enumerate() {
                                perm[base + a] = base + src;
                            }
                            SignedPerm {
                                perm,
                                sign: vec![1.0; n],
                                phi: 1.0,
                            }
                        })
                        .collect();
                    cur = average_cartesian(grid, &cur, &perms)?;
                }
                cur
            }
        }
    };
    let mut out = f.with_values(values);
    out.meta.symmetry = Some(spec.clone());
    out.meta.equivariant = true;
    Ok(out)
}

/// Continuous Haar average of a closed-form function at a point of `R^N`:
/// `haar_samples` uniform angles per circle in both cosets of every block,
/// and the signed permutations of the tail when `Lambda` acts.
pub fn haar_average<F>(f: F, x: &[f64], spec: &SymmetrySpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if x.len() != spec.n as usize {
        return Err(Error::DimensionMismatch {
            expected: spec.n as usize,
            got: x.len(),
        });
    }
    let m = spec.haar_samples;
    let per_block: Vec<GammaElement> = [false, true]
        .iter()
        .flat_map(|&flip| {
            (0..m).map(move |k| GammaElement {
                theta: 2.0 * PI * k as f64 / m as f64,
                flip,
            })
        })
        .collect();
    let tail: Vec<DMatrix<f64>> = if spec.lambda_acts() {
        let dim = spec.tail_dim();
        let mut mats = Vec::new();
        for p in permutations(dim) {
            for signs in 0..(1usize << dim) {
                let mut mat = DMatrix::zeros(dim, dim);
                for (r, &c) in p.iter().enumerate() {
                    mat[(r, c)] = if signs >> r & 1 == 1 { -1.0 } else { 1.0 };
                }
                mats.push(mat);
            }
        }
        mats
    } else {
        vec![]
    };
    let j = spec.j as usize;
    let count = per_block.len().pow(j as u32);
    let mut acc = 0.0;
    let mut total = 0usize;
    for code in 0..count {
        let mut c = code;
        let blocks: Vec<GammaElement> = (0..j)
            .map(|_| {
                let g = per_block[c % per_block.len()];
                c /= per_block.len();
                g
            })
            .collect();
        let base = GroupElement {
            blocks,
            lambda: None,
        };
        let sign = phi_value(&base) as f64;
        if tail.is_empty() {
            acc += sign * f(&act(&base, x)?);
            total += 1;
        } else {
            for eta in &tail {
                let g = GroupElement {
                    blocks: base.blocks.clone(),
                    lambda: Some(eta.clone()),
                };
                acc += sign * f(&act(&g, x)?);
                total += 1;
            }
        }
    }
    Ok(acc / total as f64)
}

/// Rank of the span of the infinitesimal generators at `x`: one circle
/// generator per block and the rotation generators of `Lambda`.
pub fn orbit_dimension(spec: &SymmetrySpec, x: &[f64]) -> usize {
    let n = x.len();
    let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    for b in 0..spec.j as usize {
        let mut v = vec![0.0; n];
        let (a1, b1, a2, b2) = (x[4 * b], x[4 * b + 1], x[4 * b + 2], x[4 * b + 3]);
        v[4 * b..4 * b + 4].copy_from_slice(&[-b1, a1, -b2, a2]);
        vectors.push(v);
    }
    if spec.lambda_acts() {
        let base = 4 * spec.j as usize;
        let m = spec.tail_dim();
        for a in 0..m {
            for c in a + 1..m {
                let mut v = vec![0.0; n];
                v[base + a] = x[base + c];
                v[base + c] = -x[base + a];
                vectors.push(v);
            }
        }
    }
    numerical_rank(vectors, 1e-10 * scale)
}

/// Rank by modified Gram-Schmidt with an absolute threshold.
fn numerical_rank(mut vectors: Vec<Vec<f64>>, tol: f64) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors.iter_mut() {
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > tol {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    basis.len()
}

#[derive(Clone, Debug, Serialize)]
pub struct S1S2Report {
    pub n: u32,
    pub j: u32,
    pub samples: usize,
    /// Points with zero-dimensional orbit that are not fixed.
    pub s1_violations: Vec<Vec<f64>>,
    pub s2_witness: Option<Vec<f64>>,
    /// Sampled stabilizer elements of the witness with `phi = -1`.
    pub s2_violations: usize,
    pub stabilizer_samples: usize,
    pub phi_surjective: bool,
}

impl S1S2Report {
    pub fn s1_holds(&self) -> bool {
        self.s1_violations.is_empty()
    }

    pub fn s2_holds(&self) -> bool {
        self.s2_witness.is_some() && self.s2_violations == 0
    }
}

fn fixed_by_generators(spec: &SymmetrySpec, x: &[f64], tol: f64) -> Result<bool> {
    let mut gens = Vec::new();
    for b in 0..spec.j as usize {
        let mut g = spec.identity();
        g.blocks[b] = GammaElement::rotation(1.0);
        gens.push(g);
        gens.push(spec.rho_in_block(b));
    }
    if spec.lambda_acts() {
        let m = spec.tail_dim();
        for a in 0..m {
            for c in a + 1..m {
                let mut mat = DMatrix::identity(m, m);
                let (co, si) = (1.0f64.cos(), 1.0f64.sin());
                mat[(a, a)] = co;
                mat[(c, c)] = co;
                mat[(a, c)] = -si;
                mat[(c, a)] = si;
                let mut g = spec.identity();
                g.lambda = Some(mat);
                gens.push(g);
            }
        }
    }
    for g in &gens {
        let y = act(g, x)?;
        if y.iter().zip(x).any(|(a, b)| (a - b).abs() > tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sampled check of the two structural assumptions on `(G, phi)`:
///
/// * (S1) every orbit is either positive-dimensional or a single point;
/// * (S2) some `xi` has its stabilizer inside `ker phi`.
///
/// The sample mixes generic points with points on the fixed set and on
/// partially vanishing blocks. The (S2) witness is `(1,0,0,0)` in every
/// block and zero tail; its stabilizer is searched over `haar_samples`
/// angles in both cosets of each block.
pub fn verify_s1_s2(spec: &SymmetrySpec, sample_count: usize, seed: u64) -> Result<S1S2Report> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n as usize;
    let tol = 1e-9;
    let mut s1_violations = Vec::new();
    for k in 0..sample_count {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        match k % 4 {
            1 => x[..4 * spec.j as usize].iter_mut().for_each(|v| *v = 0.0),
            2 => x.iter_mut().for_each(|v| *v = 0.0),
            3 if spec.j > 0 => x[..4].iter_mut().for_each(|v| *v = 0.0),
            _ => {}
        }
        if orbit_dimension(spec, &x) == 0 && !fixed_by_generators(spec, &x, tol)? {
            s1_violations.push(x);
        }
    }
    let mut xi = vec![0.0; n];
    for b in 0..spec.j as usize {
        xi[4 * b] = 1.0;
    }
    let m = spec.haar_samples.max(8);
    let mut per_block = Vec::new();
    for b in 0..spec.j as usize {
        let z = [xi[4 * b], xi[4 * b + 1], xi[4 * b + 2], xi[4 * b + 3]];
        let stab: Vec<GammaElement> = [false, true]
            .iter()
            .flat_map(|&flip| {
                (0..m).map(move |k| GammaElement {
                    theta: 2.0 * PI * k as f64 / m as f64,
                    flip,
                })
            })
            .filter(|g| {
                let w = g.act(z);
                w.iter().zip(&z).all(|(a, b)| (a - b).abs() <= tol)
            })
            .collect();
        per_block.push(stab);
    }
    // The stabilizer is the product of the per-block stabilizers (times the
    // tail stabilizer, on which phi is trivial).
    let mut stabilizer_samples = 1usize;
    let mut negative = 0usize;
    let mut signs: Vec<i8> = vec![1];
    for stab in &per_block {
        stabilizer_samples *= stab.len();
        signs = signs
            .iter()
            .flat_map(|s| stab.iter().map(move |g| s * g.phi()))
            .collect();
    }
    negative += signs.iter().filter(|s| **s < 0).count();
    Ok(S1S2Report {
        n: spec.n,
        j: spec.j,
        samples: sample_count,
        s1_violations,
        s2_witness: (stabilizer_samples > 0).then_some(xi),
        s2_violations: negative,
        stabilizer_samples,
        phi_surjective: spec.phi_surjective(),
    })
}

/// Certifies `u != w` for `u` `phi_i`-equivariant and `w` `phi_j`-equivariant
/// with `i < j`, sampled on a common Cartesian grid.
///
/// `rho` in block `j` lies in the tail factor of `G_i`, so it fixes `u` but
/// flips the sign of `w`. Wherever `w(x) != 0`, either `u(x) != w(x)` or
/// `u(rho x) = u(x) = w(x) = -w(rho x) != w(rho x)`. Returns a node where `u`
/// and `w` differ, or `None` if `w` vanishes on the grid.
pub fn distinctness_witness(
    u: &Field,
    spec_i: &SymmetrySpec,
    w: &Field,
    spec_j: &SymmetrySpec,
) -> Result<Option<Vec<f64>>> {
    if spec_i.j >= spec_j.j {
        return Err(Error::Precondition(format!(
            "distinctness needs i < j, got i = {}, j = {}",
            spec_i.j, spec_j.j
        )));
    }
    u.check_same_grid(w)?;
    let grid = u.grid();
    if grid.kind() != GridKind::Cartesian {
        return Err(Error::GridMismatch(
            "distinctness witnesses need a full Cartesian grid".into(),
        ));
    }
    let n = grid.dim() as usize;
    let b = spec_j.j as usize - 1;
    let rho = block_signed_perms(n, b)
        .into_iter()
        .find(|g| g.phi < 0.0 && g.perm[4 * b] == 4 * b + 2 && g.sign[4 * b] < 0.0)
        .ok_or_else(|| Error::InvalidSymmetry("rho not found".into()))?;
    let scale = u.max_abs().max(w.max_abs());
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let (uv, wv) = (u.values(), w.values());
    let strides = grid.strides();
    let counts: Vec<usize> = grid.axes().iter().map(|a| a.count).collect();
    let mut idx = vec![0usize; n];
    for k in 0..grid.len() {
        if wv[k].abs() <= tol {
            continue;
        }
        if (uv[k] - wv[k]).abs() > tol {
            return Ok(Some(grid.node(k)));
        }
        grid.unravel(k, &mut idx);
        let mut target = 0;
        for a in 0..n {
            let i = idx[rho.perm[a]];
            let i = if rho.sign[a] < 0.0 {
                counts[a] - 1 - i
            } else {
                i
            };
            target += i * strides[a];
        }
        if (uv[target] - wv[target]).abs() > tol {
            return Ok(Some(grid.node(target)));
        }
    }
    Ok(None)
}

/// `max |Delta_h (P f) - P (Delta_h f)|`, the commutation defect of the
/// symmetrizer with the discrete Laplacian.
pub fn laplacian_commutation_defect(f: &Field, spec: &SymmetrySpec) -> Result<f64> {
    let a = laplacian(&symmetrize(f, spec)?);
    let b = symmetrize(&laplacian(f), spec)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}
