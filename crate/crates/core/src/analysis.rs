//! Fidelities, reduced states, Wigner functions and Haar-random ensembles.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{analytic_state, evolve_exact, excitation_phase};
use crate::error::{Error, Result};
use crate::hilbert::{coherent_state, AtomCoeffs, Factor, Space, StateVector, Tensor, C64, INVARIANT_TOL, ZERO};
use crate::models::{effective_hamiltonian, embed_two_level, full_hamiltonian, FullModelParams};

/// Smallest eigenvalue tolerated in a density matrix.
pub const PSD_TOL: f64 = 1e-9;

/// Density operator with its tensor structure.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    space: Space,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: DMatrix<C64>, space: Space) -> Result<Self> {
        let dim = space.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: matrix.nrows() });
        }
        let dev = crate::hilbert::hermitian_deviation(&matrix);
        if dev > INVARIANT_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = matrix.trace();
        if (tr - 1.0).norm() > INVARIANT_TOL {
            return Err(Error::NotNormalized(tr.re));
        }
        let rho = DensityMatrix { matrix, space };
        let min = rho.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::InvalidParameter(format!("density matrix has negative eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    /// Normalizes the trace of a Hermitian positive matrix before validating.
    pub fn normalized(matrix: DMatrix<C64>, space: Space) -> Result<Self> {
        let tr = matrix.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let m = matrix.unscale(tr);
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        DensityMatrix::new(m, space)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let v = psi.amplitudes();
        DensityMatrix { matrix: v * v.adjoint(), space: psi.space().clone() }
    }

    /// `Σ_k w_k |ψ_k⟩⟨ψ_k|`; the weights must sum to one.
    pub fn mixture(parts: &[(f64, &StateVector)]) -> Result<Self> {
        let first = parts.first().ok_or(Error::ZeroNorm)?;
        let space = first.1.space().clone();
        let mut m = DMatrix::zeros(space.dim(), space.dim());
        for (w, psi) in parts {
            psi.space().check_same(&space)?;
            let v = psi.amplitudes();
            m += v * v.adjoint() * C64::new(*w, 0.0);
        }
        DensityMatrix::new(m, space)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect()
    }

    /// Pure components `(weight, vector)` with weight above `cut`.
    pub fn components(&self, cut: f64) -> Vec<(f64, DVector<C64>)> {
        let eig = SymmetricEigen::new(self.matrix.clone());
        eig.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > cut)
            .map(|(k, &w)| (w, eig.eigenvectors.column(k).into_owned()))
            .collect()
    }

    /// `⟨op⟩ = Tr(ρ op)`.
    pub fn expectation(&self, op: &DMatrix<C64>) -> C64 {
        (&self.matrix * op).trace()
    }

    /// `U ρ U†` for a local operator acting on the whole space.
    pub fn transform(&self, u: &DMatrix<C64>) -> Result<DensityMatrix> {
        if u.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.nrows() });
        }
        Ok(DensityMatrix { matrix: u * &self.matrix * u.adjoint(), space: self.space.clone() })
    }
}

/// Objects whose fidelity with a pure target can be computed.
pub trait FidelityInput {
    fn fidelity_with(&self, target: &StateVector) -> Result<f64>;
}

impl FidelityInput for StateVector {
    fn fidelity_with(&self, target: &StateVector) -> Result<f64> {
        Ok(target.inner(self)?.norm_sqr())
    }
}

impl FidelityInput for DensityMatrix {
    fn fidelity_with(&self, target: &StateVector) -> Result<f64> {
        self.space.check_same(target.space())?;
        let v = target.amplitudes();
        Ok(v.dotc(&(&self.matrix * v)).re)
    }
}

/// `|⟨b|a⟩|²` for a pure `a`, `⟨b|a|b⟩` for a density matrix `a`.
pub fn fidelity<A: FidelityInput + ?Sized>(a: &A, b: &StateVector) -> Result<f64> {
    a.fidelity_with(b)
}

/// Subsystem kept by [`partial_trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    Atoms,
    Field,
}

/// Objects with the atom ⊗ atom ⊗ field structure.
pub trait Tripartite {
    fn reduce(&self, keep: Keep) -> Result<DensityMatrix>;
}

fn split_dims(space: &Space) -> Result<(usize, usize, Space, Space)> {
    match space.factors() {
        [a @ Factor::Atom { .. }, b @ Factor::Atom { .. }, m @ Factor::Mode { .. }] => Ok((
            a.dim() * b.dim(),
            m.dim(),
            Space::new(vec![*a, *b]),
            Space::new(vec![*m]),
        )),
        _ => Err(Error::SpaceMismatch(format!("expected atom x atom x mode, got {space}"))),
    }
}

impl Tripartite for StateVector {
    fn reduce(&self, keep: Keep) -> Result<DensityMatrix> {
        let (da, df, sa, sf) = split_dims(self.space())?;
        // row = atom index, column = photon number
        let m = DMatrix::from_fn(da, df, |a, n| self.amplitudes()[a * df + n]);
        Ok(match keep {
            Keep::Atoms => DensityMatrix { matrix: &m * m.adjoint(), space: sa },
            Keep::Field => DensityMatrix { matrix: m.transpose() * m.map(|z| z.conj()), space: sf },
        })
    }
}

impl Tripartite for DensityMatrix {
    fn reduce(&self, keep: Keep) -> Result<DensityMatrix> {
        let (da, df, sa, sf) = split_dims(&self.space)?;
        let r = &self.matrix;
        Ok(match keep {
            Keep::Atoms => {
                let m = DMatrix::from_fn(da, da, |a, b| (0..df).map(|n| r[(a * df + n, b * df + n)]).sum());
                DensityMatrix { matrix: m, space: sa }
            }
            Keep::Field => {
                let m = DMatrix::from_fn(df, df, |n, k| (0..da).map(|a| r[(a * df + n, a * df + k)]).sum());
                DensityMatrix { matrix: m, space: sf }
            }
        })
    }
}

pub fn partial_trace<T: Tripartite + ?Sized>(state: &T, keep: Keep) -> Result<DensityMatrix> {
    state.reduce(keep)
}

/// Normalized Hermite functions `φ_n(z)`, `n ≤ n_max`, by the three-term
/// recurrence with a running exponent so that large `|z|` neither
/// overflows nor underflows prematurely.
pub fn hermite_functions(z: f64, n_max: usize) -> Vec<f64> {
    const RESCALE: f64 = 1e100;
    let mut out = Vec::with_capacity(n_max + 1);
    let mut log_scale = -0.5 * z * z - 0.25 * PI.ln();
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    out.push(cur * log_scale.exp());
    for n in 0..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * z * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
        out.push(cur * log_scale.exp());
    }
    out
}

/// Fock-state wave functions in the quadrature `x = (a + a†)/2`:
/// `ψ_n(x) = 2^{1/4} φ_n(√2 x)`, normalized as `∫|ψ_n|² dx = 1`.
pub fn quadrature_wavefunctions(x: f64, n_max: usize) -> Vec<f64> {
    let s = 2f64.powf(0.25);
    hermite_functions(2f64.sqrt() * x, n_max).into_iter().map(|v| v * s).collect()
}

/// Uniform square grid of phase-space points `β = x + ip`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub center: C64,
    pub half_width: f64,
    pub points: usize,
}

impl GridSpec {
    /// Window `|β − center| ≤ |α| + 5` with 201 × 201 points.
    pub fn for_alpha(alpha_abs: f64) -> Self {
        GridSpec { center: ZERO, half_width: alpha_abs + 5.0, points: 201 }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn axis_re(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points).map(|k| self.center.re - self.half_width + k as f64 * h).collect()
    }

    pub fn axis_im(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points).map(|k| self.center.im - self.half_width + k as f64 * h).collect()
    }
}

/// Wigner function sampled on a grid; `values[(i, j)]` is at
/// `β = beta_re[i] + i·beta_im[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub beta_re: Vec<f64>,
    pub beta_im: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    pub fn cell_area(&self) -> f64 {
        let dx = self.beta_re[1] - self.beta_re[0];
        let dp = self.beta_im[1] - self.beta_im[0];
        dx * dp
    }

    /// `Σ W dA`.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// Value at the grid point closest to `beta`.
    pub fn nearest(&self, beta: C64) -> f64 {
        let idx = |axis: &[f64], v: f64| {
            let h = axis[1] - axis[0];
            (((v - axis[0]) / h).round().max(0.0) as usize).min(axis.len() - 1)
        };
        self.values[(idx(&self.beta_re, beta.re), idx(&self.beta_im, beta.im))]
    }

    /// `∫ W(x, p) dp` along each `x` of the grid.
    pub fn marginal_re(&self) -> Vec<f64> {
        let dp = self.beta_im[1] - self.beta_im[0];
        self.values.row_iter().map(|r| r.sum() * dp).collect()
    }
}

/// Target spacing of the integration variable in [`wigner`].
const WIGNER_STEP: f64 = 0.025;
/// Weight below which a mixture component is ignored.
const COMPONENT_CUT: f64 = 1e-13;

/// Wigner function of a single-mode state, normalized so that a coherent
/// state has peak value `2/π`.
///
/// Each pure component `ψ` of `ρ` is evaluated through the overlap form
/// `W(x, p) = (2/π) ∫ ψ*(x+y) ψ(x−y) e^{4ipy} dy` of the displaced-parity
/// expectation `(2/π) Tr[D(−β) ρ D(β) Π]`, with `β = x + ip` and the
/// wave function built from stable Hermite-function recurrences.
pub fn wigner(rho: &DensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    let df = match rho.space().factors() {
        [Factor::Mode { dim }] => *dim,
        _ => return Err(Error::SpaceMismatch(format!("Wigner function needs a single mode, got {}", rho.space()))),
    };
    if grid.points < 2 || !(grid.half_width > 0.0) {
        return Err(Error::InvalidParameter("Wigner grid needs at least 2 points and a positive width".into()));
    }
    let xs = grid.axis_re();
    let ps = grid.axis_im();
    let dx = grid.spacing();
    let ratio = (dx / WIGNER_STEP).ceil().max(1.0) as usize;
    let h = dx / ratio as f64;
    // y reaches far enough to pair points on opposite sides of the window
    let y_max = grid.half_width + grid.center.norm() + 6.0;
    let k_max = (y_max / h).ceil() as usize;
    let n_fine = (xs.len() - 1) * ratio + 1 + 2 * k_max;
    let u0 = xs[0] - k_max as f64 * h;
    let n_max = df - 1;
    let table: Vec<Vec<f64>> =
        (0..n_fine).into_par_iter().map(|j| quadrature_wavefunctions(u0 + j as f64 * h, n_max)).collect();

    let comps = rho.components(COMPONENT_CUT);
    let wavefns: Vec<(f64, Vec<C64>)> = comps
        .iter()
        .map(|(w, v)| {
            let psi = table.iter().map(|row| row.iter().zip(v.iter()).map(|(&f, &c)| c * f).sum()).collect();
            (*w, psi)
        })
        .collect();

    // cos/sin(4 p k h) for every p and k
    let phases: Vec<Vec<C64>> =
        ps.iter().map(|&p| (0..=k_max).map(|k| C64::from_polar(1.0, 4.0 * p * k as f64 * h)).collect()).collect();

    let rows: Vec<Vec<f64>> = (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let center = k_max + i * ratio;
            let mut f = vec![ZERO; k_max + 1];
            for (w, psi) in &wavefns {
                for (k, fk) in f.iter_mut().enumerate() {
                    *fk += psi[center + k].conj() * psi[center - k] * *w;
                }
            }
            phases
                .iter()
                .map(|ph| {
                    let mut s = f[0].re;
                    for k in 1..=k_max {
                        s += 2.0 * (f[k] * ph[k]).re;
                    }
                    s * h * 2.0 / PI
                })
                .collect()
        })
        .collect();
    let values = DMatrix::from_fn(xs.len(), ps.len(), |i, j| rows[i][j]);
    Ok(WignerGrid { beta_re: xs, beta_im: ps, values })
}

/// Independent stream for sample `index` derived from `master_seed`.
pub fn sample_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Haar-random pure two-qubit state: the first column of a unitary from
/// the Gram–Schmidt orthonormalization of a complex Ginibre matrix.
pub fn haar_random_two_qubit<R: Rng + ?Sized>(rng: &mut R) -> AtomCoeffs {
    let mut cols: Vec<Vector4<C64>> = (0..4)
        .map(|_| {
            Vector4::from_fn(|_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im)
            })
        })
        .collect();
    for k in 0..4 {
        for j in 0..k {
            let proj = cols[j].dotc(&cols[k]);
            let qj = cols[j];
            cols[k] -= qj * proj;
        }
        let n = cols[k].norm();
        cols[k] /= C64::new(n, 0.0);
    }
    AtomCoeffs::from_computational(&cols[0]).expect("Ginibre column is nonzero")
}

/// Uniform phase in `[0, 2π)`.
pub fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * TAU
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Evaluates `task` on `n_samples` independent streams in parallel and
/// returns the results in sample order.
pub fn ensemble_map<T, F>(n_samples: usize, master_seed: u64, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(master_seed, i as u64);
            task(i, &mut rng)
        })
        .collect()
}

/// Average of `task(c, φ)` over Haar-random two-qubit states `c` and
/// uniform phases `φ`. Deterministic for a given seed regardless of thread
/// scheduling.
pub fn ensemble_average<F>(task: F, n_samples: usize, master_seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&AtomCoeffs, f64) -> Result<f64> + Sync,
{
    if n_samples == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one sample".into()));
    }
    let vals: Result<Vec<f64>> = ensemble_map(n_samples, master_seed, |_, rng| {
        let c = haar_random_two_qubit(rng);
        let phi = random_phase(rng);
        task(&c, phi)
    })
    .into_iter()
    .collect();
    Ok(mean_stderr(&vals?))
}

/// Ensemble-averaged fidelities of the effective and analytic descriptions
/// against the full three-level model at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPoint {
    pub t: f64,
    /// Full model vs `(ω+2g)I + W`, as (mean, standard error).
    pub f_effective: (f64, f64),
    /// Full model vs the analytic block solution with the `(ω+2g)I` phase.
    pub f_analytic: (f64, f64),
}

/// Evolves Haar-random atomic states times `|√n̄ e^{iφ}⟩` (uniform `φ`)
/// under the full Hamiltonian, the effective Hamiltonian and the analytic
/// solution, and averages the overlaps at each of `times`.
pub fn approximation_scan(
    p: &FullModelParams,
    nbar: f64,
    times: &[f64],
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<ScanPoint>> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one sample".into()));
    }
    if !(nbar > 0.0) {
        return Err(Error::InvalidParameter(format!("mean photon number must be positive, got {nbar}")));
    }
    let cutoff = p.cutoff;
    let g = p.effective_coupling();
    let h_full = full_hamiltonian(p);
    let h_eff = effective_hamiltonian(&p.effective(), p.omega);
    let rate = p.omega + 2.0 * g;
    let per_sample: Result<Vec<Vec<(f64, f64)>>> = ensemble_map(n_samples, master_seed, |_, rng| {
        let c = haar_random_two_qubit(rng);
        let alpha = C64::from_polar(nbar.sqrt(), random_phase(rng));
        let psi2 = c.to_state().tensor(&coherent_state(alpha, cutoff)?);
        let psi3 = embed_two_level(&psi2, cutoff)?;
        times
            .iter()
            .map(|&t| {
                let full = evolve_exact(&h_full, &psi3, t)?;
                let eff = embed_two_level(&evolve_exact(&h_eff, &psi2, t)?, cutoff)?;
                let an = analytic_state(&c, alpha, g, t, cutoff)?;
                let an = StateVector::normalized(excitation_phase(an.amplitudes(), cutoff, rate, t), psi2.space().clone())?;
                let an = embed_two_level(&an, cutoff)?;
                Ok((full.inner(&eff)?.norm_sqr(), full.inner(&an)?.norm_sqr()))
            })
            .collect()
    })
    .into_iter()
    .collect();
    let per_sample = per_sample?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let fw: Vec<f64> = per_sample.iter().map(|r| r[k].0).collect();
            let fa: Vec<f64> = per_sample.iter().map(|r| r[k].1).collect();
            ScanPoint { t, f_effective: mean_stderr(&fw), f_analytic: mean_stderr(&fa) }
        })
        .collect())
}
