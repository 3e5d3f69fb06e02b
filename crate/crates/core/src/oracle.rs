//! Analytic verification of the adversarial objectives on finite grids.
//!
//! Everything here works on [`DiscreteJoint`] tables: finite probability
//! distributions over an (x, z) grid. On such grids the optimal
//! discriminator has a closed form per cell, the generator/encoder
//! objective is a finite sum, and the convergence claims become checkable
//! identities:
//!
//! * the least-squares generator objective at the optimal discriminator
//!   equals a quarter of a Pearson chi-square divergence,
//! * with collected anomalies, the objective is bounded below by
//!   `3 ((a+b)/2 - c)^2` with equality exactly at `p_g = p_plus`,
//! * gradient descent on a tabular discriminator converges to the closed
//!   form.
//!
//! [`run_verification`] bundles these checks into the report consumed by
//! the `verify` CLI subcommand.

use crate::error::{Error, Result};
use crate::objectives::TargetScheme;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Mass-sum tolerance for a valid probability table.
const MASS_TOL: f64 = 1e-12;

/// A finite probability distribution over an `nx * nz` grid of (x, z) cells.
///
/// Mass is stored row-major (`x` major, `z` minor), is elementwise
/// non-negative and sums to one within 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    nx: usize,
    nz: usize,
    mass: Vec<f64>,
}

impl DiscreteJoint {
    pub fn from_mass(nx: usize, nz: usize, mass: Vec<f64>) -> Result<Self> {
        if nx == 0 || nz == 0 || mass.len() != nx * nz {
            return Err(Error::invalid(format!(
                "mass vector of length {} does not fill a {nx}x{nz} grid",
                mass.len()
            )));
        }
        if mass.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::invalid("mass must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!(
                "mass sums to {total}, expected 1 within {MASS_TOL}"
            )));
        }
        Ok(DiscreteJoint { nx, nz, mass })
    }

    /// Normalize arbitrary non-negative weights into a distribution.
    pub fn from_weights(nx: usize, nz: usize, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights must have positive total mass"));
        }
        let mass: Vec<f64> = weights.iter().map(|&w| w / total).collect();
        DiscreteJoint::from_mass(nx, nz, mass)
    }

    /// Point mass on a single cell.
    pub fn delta(nx: usize, nz: usize, cell: usize) -> Result<Self> {
        let mut mass = vec![0.0; nx * nz];
        *mass
            .get_mut(cell)
            .ok_or_else(|| Error::invalid(format!("cell {cell} outside {nx}x{nz} grid")))? = 1.0;
        DiscreteJoint::from_mass(nx, nz, mass)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Total-variation distance to another table on the same grid.
    pub fn total_variation(&self, other: &DiscreteJoint) -> Result<f64> {
        check_grid(self, other)?;
        Ok(self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0)
    }
}

fn check_grid(a: &DiscreteJoint, b: &DiscreteJoint) -> Result<()> {
    if a.nx != b.nx || a.nz != b.nz {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} grid", a.nx, a.nz),
            actual: format!("{}x{} grid", b.nx, b.nz),
        });
    }
    Ok(())
}

/// Per-cell discriminator values; `None` marks cells with zero total mass,
/// where the optimum is undefined.
pub type DiscriminatorTable = Vec<Option<f64>>;

fn zero_mass(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

/// Closed-form optimal discriminator for the general target scheme:
/// `(a p+ + ((a+b)/2) p- + b p_g) / (p+ + p- + p_g)` per cell.
///
/// Pass `None` for `p_minus` when no anomalies were collected (the term
/// is then identically zero).
pub fn optimal_discriminator(
    p_plus: &DiscreteJoint,
    p_minus: Option<&DiscreteJoint>,
    p_g: &DiscreteJoint,
    scheme: &TargetScheme,
) -> Result<DiscriminatorTable> {
    check_grid(p_plus, p_g)?;
    if let Some(pm) = p_minus {
        check_grid(p_plus, pm)?;
    }
    let zeros = zero_mass(p_plus.cells());
    let pm = p_minus.map_or(&zeros[..], |p| p.mass());
    let mid = scheme.anomaly_target();
    Ok(p_plus
        .mass()
        .iter()
        .zip(pm)
        .zip(p_g.mass())
        .map(|((&pp, &pn), &pg)| {
            let total = pp + pn + pg;
            if total > 0.0 {
                Some((scheme.a * pp + mid * pn + scheme.b * pg) / total)
            } else {
                None
            }
        })
        .collect())
}

/// Optimal discriminator of the disjoint-support objective, where the
/// anomaly term targets `b` rather than the midpoint:
/// `(a p+ + b (p- + p_g)) / (p+ + p- + p_g)` per cell.
pub fn disjoint_optimal_discriminator(
    p_plus: &DiscreteJoint,
    p_minus: Option<&DiscreteJoint>,
    p_g: &DiscreteJoint,
    scheme: &TargetScheme,
) -> Result<DiscriminatorTable> {
    check_grid(p_plus, p_g)?;
    if let Some(pm) = p_minus {
        check_grid(p_plus, pm)?;
    }
    let zeros = zero_mass(p_plus.cells());
    let pm = p_minus.map_or(&zeros[..], |p| p.mass());
    Ok(p_plus
        .mass()
        .iter()
        .zip(pm)
        .zip(p_g.mass())
        .map(|((&pp, &pn), &pg)| {
            let total = pp + pn + pg;
            if total > 0.0 {
                Some((scheme.a * pp + scheme.b * (pn + pg)) / total)
            } else {
                None
            }
        })
        .collect())
}

/// Anomaly-blind optimal discriminator `p+ / (p+ + p_g)`.
pub fn naive_optimal_discriminator(
    p_plus: &DiscreteJoint,
    p_g: &DiscreteJoint,
) -> Result<DiscriminatorTable> {
    check_grid(p_plus, p_g)?;
    Ok(p_plus
        .mass()
        .iter()
        .zip(p_g.mass())
        .map(|(&pp, &pg)| {
            let total = pp + pg;
            if total > 0.0 {
                Some(pp / total)
            } else {
                None
            }
        })
        .collect())
}

/// Generator/encoder objective as a finite sum:
/// `sum over cells of (d - c)^2 (p+ + p- + p_g)`.
///
/// Cells with zero total mass are skipped; an undefined `d` on a
/// positive-mass cell is an error.
pub fn ge_objective_value(
    p_plus: &DiscreteJoint,
    p_minus: Option<&DiscreteJoint>,
    p_g: &DiscreteJoint,
    d_table: &DiscriminatorTable,
    scheme: &TargetScheme,
) -> Result<f64> {
    check_grid(p_plus, p_g)?;
    if let Some(pm) = p_minus {
        check_grid(p_plus, pm)?;
    }
    if d_table.len() != p_plus.cells() {
        return Err(Error::invalid(
            "discriminator table does not match the grid",
        ));
    }
    let zeros = zero_mass(p_plus.cells());
    let pm = p_minus.map_or(&zeros[..], |p| p.mass());
    let mut total = 0.0;
    for (i, ((&pp, &pn), &pg)) in p_plus.mass().iter().zip(pm).zip(p_g.mass()).enumerate() {
        let mass = pp + pn + pg;
        if mass == 0.0 {
            continue;
        }
        let d = d_table[i].ok_or_else(|| {
            Error::invalid(format!("discriminator undefined on positive-mass cell {i}"))
        })?;
        let dev = d - scheme.c;
        total += dev * dev * mass;
    }
    Ok(total)
}

/// Pearson chi-square divergence between two probability tables:
/// `sum (p - q)^2 / q`, requiring `q > 0` wherever `p > 0`.
pub fn pearson_chi2(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    check_grid(p, q)?;
    pearson_chi2_mass(p.mass(), q.mass())
}

/// [`pearson_chi2`] over raw non-negative measures (not necessarily
/// normalized), as needed when comparing mixtures like `p_e + p_g`.
pub fn pearson_chi2_mass(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} cells", p.len()),
            actual: format!("{} cells", q.len()),
        });
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if qi == 0.0 {
            if pi > 0.0 {
                return Err(Error::invalid(format!(
                    "support violation at cell {i}: p > 0 where q == 0"
                )));
            }
            continue;
        }
        let d = pi - qi;
        total += d * d / qi;
    }
    Ok(total)
}

/// Both sides of the unsupervised convergence identity.
///
/// The left side evaluates the generator/encoder objective (targets 0.5)
/// at the optimal discriminator `p_e / (p_e + p_g)`. The right side is a
/// quarter of the chi-square divergence comparing `2 p_g` against the
/// mixture `p_e + p_g` (mixture in the denominator); the two agree
/// exactly, including on disjoint supports.
pub fn verify_lemma1_identity(p_e: &DiscreteJoint, p_g: &DiscreteJoint) -> Result<(f64, f64)> {
    check_grid(p_e, p_g)?;
    let mut lhs = 0.0;
    for (&pe, &pg) in p_e.mass().iter().zip(p_g.mass()) {
        let total = pe + pg;
        if total == 0.0 {
            continue;
        }
        let d = pe / total;
        lhs += (d - 0.5) * (d - 0.5) * total;
    }
    let mixture: Vec<f64> = p_e
        .mass()
        .iter()
        .zip(p_g.mass())
        .map(|(&pe, &pg)| pe + pg)
        .collect();
    let doubled_g: Vec<f64> = p_g.mass().iter().map(|&pg| 2.0 * pg).collect();
    let rhs = 0.25 * pearson_chi2_mass(&doubled_g, &mixture)?;
    Ok((lhs, rhs))
}

/// Outcome of the exhaustive generator search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BruteForceOutcome {
    /// The minimizing lattice distribution.
    pub argmin: DiscreteJoint,
    /// Objective value at the argmin.
    pub objective: f64,
    /// Lattice points tying with the argmin within 1e-12 that are not the
    /// argmin itself; reported, never a failure.
    pub tied_minimizers: usize,
    /// Number of lattice candidates evaluated.
    pub candidates: usize,
}

/// Exhaustively minimize the generator/encoder objective over candidate
/// `p_g` on a simplex lattice of spacing `grid_step`, each candidate
/// evaluated at its own optimal discriminator.
///
/// The lattice is enumerated through integer compositions of
/// `1/grid_step`, so candidate masses are exact multiples of the step.
/// Instances are limited to 5 cells.
pub fn brute_force_ge_minimizer(
    p_plus: &DiscreteJoint,
    p_minus: Option<&DiscreteJoint>,
    scheme: &TargetScheme,
    grid_step: f64,
) -> Result<BruteForceOutcome> {
    let cells = p_plus.cells();
    if cells > 5 {
        return Err(Error::ResourceLimit(format!(
            "simplex enumeration supports at most 5 cells, got {cells}"
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::invalid("grid_step must lie in (0, 1]"));
    }
    let steps = (1.0 / grid_step).round() as u64;
    if ((steps as f64) * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "grid_step must divide 1 into an integer number of lattice steps",
        ));
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut ties = 0usize;
    let mut candidates = 0usize;
    let mut composition = vec![0u64; cells];
    enumerate_compositions(steps, cells, &mut composition, &mut |comp| {
        let mass: Vec<f64> = comp.iter().map(|&k| k as f64 / steps as f64).collect();
        let candidate = DiscreteJoint {
            nx: p_plus.nx,
            nz: p_plus.nz,
            mass,
        };
        let d = optimal_discriminator(p_plus, p_minus, &candidate, scheme)?;
        let value = ge_objective_value(p_plus, p_minus, &candidate, &d, scheme)?;
        candidates += 1;
        match &mut best {
            None => best = Some((candidate.mass, value)),
            Some((bm, bv)) => {
                if value < *bv - 1e-12 {
                    *bm = candidate.mass;
                    *bv = value;
                    ties = 0;
                } else if (value - *bv).abs() <= 1e-12 && candidate.mass != *bm {
                    ties += 1;
                }
            }
        }
        Ok(())
    })?;

    let (mass, objective) = best.expect("the lattice is never empty");
    Ok(BruteForceOutcome {
        argmin: DiscreteJoint {
            nx: p_plus.nx,
            nz: p_plus.nz,
            mass,
        },
        objective,
        tied_minimizers: ties,
        candidates,
    })
}

fn enumerate_compositions(
    remaining: u64,
    slots: usize,
    buf: &mut Vec<u64>,
    visit: &mut dyn FnMut(&[u64]) -> Result<()>,
) -> Result<()> {
    let idx = buf.len() - slots;
    if slots == 1 {
        buf[idx] = remaining;
        return visit(buf);
    }
    for k in 0..=remaining {
        buf[idx] = k;
        enumerate_compositions(remaining - k, slots - 1, buf, visit)?;
    }
    Ok(())
}

/// Fit a free per-cell discriminator table to the least-squares soft
/// targets by plain gradient descent, starting from seeded noise.
///
/// Converges to [`optimal_discriminator`] on every positive-mass cell;
/// used as the iterative route the closed form is checked against.
pub fn train_tabular_discriminator(
    p_plus: &DiscreteJoint,
    p_minus: Option<&DiscreteJoint>,
    p_g: &DiscreteJoint,
    scheme: &TargetScheme,
    learning_rate: f64,
    steps: usize,
    seed: u64,
) -> Result<DiscriminatorTable> {
    check_grid(p_plus, p_g)?;
    if let Some(pm) = p_minus {
        check_grid(p_plus, pm)?;
    }
    let zeros = zero_mass(p_plus.cells());
    let pm = p_minus.map_or(&zeros[..], |p| p.mass());
    let mid = scheme.anomaly_target();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d: Vec<f64> = (0..p_plus.cells())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    for _ in 0..steps {
        for (i, di) in d.iter_mut().enumerate() {
            let (pp, pn, pg) = (p_plus.mass()[i], pm[i], p_g.mass()[i]);
            let grad =
                2.0 * (*di - scheme.a) * pp + 2.0 * (*di - mid) * pn + 2.0 * (*di - scheme.b) * pg;
            *di -= learning_rate * grad;
        }
    }
    Ok(d.into_iter()
        .enumerate()
        .map(|(i, v)| {
            if p_plus.mass()[i] + pm[i] + p_g.mass()[i] > 0.0 {
                Some(v)
            } else {
                None
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

/// One property check inside the verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed deviation or a counterexample description.
    pub detail: String,
}

/// Full report of the theory suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn random_joint(rng: &mut ChaCha8Rng, nx: usize, nz: usize, sparsity: f64) -> DiscreteJoint {
    loop {
        let weights: Vec<f64> = (0..nx * nz)
            .map(|_| {
                if rng.random::<f64>() < sparsity {
                    0.0
                } else {
                    rng.random_range(0.05..1.0)
                }
            })
            .collect();
        if weights.iter().sum::<f64>() > 0.0 {
            return DiscreteJoint::from_weights(nx, nz, &weights).unwrap();
        }
    }
}

/// Random instance with disjoint supports for `p+` and `p-`.
fn random_disjoint_pair(
    rng: &mut ChaCha8Rng,
    nx: usize,
    nz: usize,
) -> (DiscreteJoint, DiscreteJoint) {
    let cells = nx * nz;
    loop {
        let split: Vec<bool> = (0..cells).map(|_| rng.random::<f64>() < 0.5).collect();
        if split.iter().all(|&b| b) || split.iter().all(|&b| !b) {
            continue;
        }
        let wp: Vec<f64> = split
            .iter()
            .map(|&plus| {
                if plus {
                    rng.random_range(0.05..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let wm: Vec<f64> = split
            .iter()
            .map(|&plus| {
                if plus {
                    0.0
                } else {
                    rng.random_range(0.05..1.0)
                }
            })
            .collect();
        return (
            DiscreteJoint::from_weights(nx, nz, &wp).unwrap(),
            DiscreteJoint::from_weights(nx, nz, &wm).unwrap(),
        );
    }
}

fn random_scheme(rng: &mut ChaCha8Rng) -> TargetScheme {
    loop {
        let a: f64 = rng.random_range(-1.0..2.0);
        let b: f64 = rng.random_range(-1.0..2.0);
        if (a - b).abs() < 0.2 {
            continue;
        }
        let c = rng.random_range(-1.0..2.0);
        return TargetScheme::new(a, b, c).unwrap();
    }
}

/// Minimize a differentiable convex 1-d function by bisecting the sign of
/// its derivative; reaches machine precision on quadratics, unlike
/// value-comparison searches. Used as an implementation-independent route
/// to the per-cell optimum.
fn derivative_bisection_min(df: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if df(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Run the whole theory suite; deterministic for a given seed. Every check
/// records its worst deviation so failures are diagnosable from the report
/// alone.
pub fn run_verification(seed: u64) -> VerificationReport {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // 1. Closed-form optimal discriminator vs per-cell numeric minimization.
    {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let nx = rng.random_range(1..=8);
            let nz = rng.random_range(1..=8);
            let pp = random_joint(&mut rng, nx, nz, 0.2);
            let pm = random_joint(&mut rng, nx, nz, 0.4);
            let pg = random_joint(&mut rng, nx, nz, 0.2);
            let scheme = random_scheme(&mut rng);
            let closed = optimal_discriminator(&pp, Some(&pm), &pg, &scheme).unwrap();
            let mid = scheme.anomaly_target();
            for i in 0..pp.cells() {
                let (wp, wm, wg) = (pp.mass()[i], pm.mass()[i], pg.mass()[i]);
                if wp + wm + wg == 0.0 {
                    continue;
                }
                let cell_slope = |d: f64| {
                    2.0 * (d - scheme.a) * wp + 2.0 * (d - mid) * wm + 2.0 * (d - scheme.b) * wg
                };
                let numeric = derivative_bisection_min(cell_slope, -3.0, 3.0);
                worst = worst.max((numeric - closed[i].unwrap()).abs());
            }
        }
        checks.push(CheckResult {
            name: "closed_form_discriminator_matches_per_cell_minimization".into(),
            passed: worst < 1e-12,
            detail: format!("max abs deviation {worst:.3e} (tolerance 1e-12)"),
        });
    }

    // 2. Gradient-descent tabular discriminator converges to the closed form.
    {
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let nx = rng.random_range(2..=8);
            let nz = rng.random_range(2..=8);
            let pp = random_joint(&mut rng, nx, nz, 0.1);
            let pm = random_joint(&mut rng, nx, nz, 0.3);
            let pg = random_joint(&mut rng, nx, nz, 0.1);
            let scheme = TargetScheme::default();
            let trained = train_tabular_discriminator(
                &pp,
                Some(&pm),
                &pg,
                &scheme,
                0.5,
                20_000,
                rng.random(),
            )
            .unwrap();
            let closed = optimal_discriminator(&pp, Some(&pm), &pg, &scheme).unwrap();
            for (t, c) in trained.iter().zip(&closed) {
                if let (Some(t), Some(c)) = (t, c) {
                    worst = worst.max((t - c).abs());
                }
            }
        }
        checks.push(CheckResult {
            name: "gradient_trained_discriminator_matches_closed_form".into(),
            passed: worst < 1e-2,
            detail: format!("max abs error {worst:.3e} (tolerance 1e-2)"),
        });
    }

    // 3. Unsupervised identity: GE objective at D* equals chi-square/4.
    {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let nx = rng.random_range(1..=6);
            let nz = rng.random_range(1..=6);
            let pe = random_joint(&mut rng, nx, nz, 0.3);
            let pg = random_joint(&mut rng, nx, nz, 0.3);
            let (lhs, rhs) = verify_lemma1_identity(&pe, &pg).unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
        checks.push(CheckResult {
            name: "chi_square_identity".into(),
            passed: worst < 1e-12,
            detail: format!("max |lhs - rhs| {worst:.3e} over 100 instances (tolerance 1e-12)"),
        });
    }

    // 4. Disjoint-support decomposition of the GE objective at the
    //    disjoint-case optimal discriminator, scheme (1, 0, 0.5).
    {
        let scheme = TargetScheme::new(1.0, 0.0, 0.5).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let nx = rng.random_range(2..=6);
            let nz = rng.random_range(1..=4);
            let (pp, pm) = random_disjoint_pair(&mut rng, nx, nz);
            let pg = random_joint(&mut rng, nx, nz, 0.3);
            let d = disjoint_optimal_discriminator(&pp, Some(&pm), &pg, &scheme).unwrap();
            let lhs = ge_objective_value(&pp, Some(&pm), &pg, &d, &scheme).unwrap();

            let mut chi = 0.0;
            let mut pg_on_minus = 0.0;
            for i in 0..pp.cells() {
                let (wp, wm, wg) = (pp.mass()[i], pm.mass()[i], pg.mass()[i]);
                if wm > 0.0 {
                    pg_on_minus += wg;
                } else if wp + wg > 0.0 {
                    chi += (wp - wg) * (wp - wg) / (wp + wg);
                }
            }
            let rhs = 0.25 * chi + 0.25 * pg_on_minus + 0.25;
            worst = worst.max((lhs - rhs).abs());
        }
        checks.push(CheckResult {
            name: "disjoint_support_decomposition".into(),
            passed: worst < 1e-12,
            detail: format!("max |lhs - rhs| {worst:.3e} over 50 instances (tolerance 1e-12)"),
        });
    }

    // 5. Brute-force simplex search: argmin sits at p_plus, the exact-point
    //    objective equals 3((a+b)/2 - c)^2, and the Jensen bound holds.
    {
        let mut worst_tv = 0.0f64;
        let mut worst_obj = 0.0f64;
        let mut bound_violations = 0usize;
        let mut tie_reports = 0usize;
        let step = 0.05;
        for _ in 0..10 {
            // Draw p_plus on the lattice so the exact argmin is representable.
            let lattice: Vec<f64> = {
                let total = 20u64;
                let first = rng.random_range(1..=total - 2);
                let second = rng.random_range(1..=total - 1 - first);
                let third = total - first - second;
                [first, second, third]
                    .iter()
                    .map(|&k| k as f64 / total as f64)
                    .collect()
            };
            let pp = DiscreteJoint::from_mass(3, 1, lattice).unwrap();
            let pm = random_joint(&mut rng, 3, 1, 0.3);
            let scheme = random_scheme(&mut rng);
            let outcome = brute_force_ge_minimizer(&pp, Some(&pm), &scheme, step).unwrap();
            worst_tv = worst_tv.max(outcome.argmin.total_variation(&pp).unwrap());
            tie_reports += outcome.tied_minimizers;

            let d = optimal_discriminator(&pp, Some(&pm), &pp, &scheme).unwrap();
            let at_plus = ge_objective_value(&pp, Some(&pm), &pp, &d, &scheme).unwrap();
            let floor = 3.0 * (scheme.anomaly_target() - scheme.c).powi(2);
            worst_obj = worst_obj.max((at_plus - floor).abs());
            if outcome.objective < floor - 1e-12 {
                bound_violations += 1;
            }
        }
        checks.push(CheckResult {
            name: "brute_force_minimizer_at_p_plus".into(),
            passed: worst_tv <= step + 1e-12,
            detail: format!(
                "max TV(argmin, p+) {worst_tv:.3e} (one lattice step = {step}); {tie_reports} tie(s) reported"
            ),
        });
        checks.push(CheckResult {
            name: "objective_at_p_plus_equals_three_phi_midpoint".into(),
            passed: worst_obj < 1e-12,
            detail: format!("max |V(p+) - 3 phi((a+b)/2)| {worst_obj:.3e} (tolerance 1e-12)"),
        });
        checks.push(CheckResult {
            name: "jensen_lower_bound_over_lattice".into(),
            passed: bound_violations == 0,
            detail: format!("{bound_violations} lattice point(s) below the bound"),
        });
    }

    // 6. Chi-square basics: zero at equality, hand value, support errors.
    {
        let p = DiscreteJoint::from_mass(2, 1, vec![1.0, 0.0]).unwrap();
        let q = DiscreteJoint::from_mass(2, 1, vec![0.5, 0.5]).unwrap();
        let same = pearson_chi2(&q, &q).unwrap();
        let hand = pearson_chi2(&p, &q).unwrap();
        let support_err = pearson_chi2(&q, &p).is_err();
        let ok = same == 0.0 && (hand - 1.0).abs() < 1e-15 && support_err;
        checks.push(CheckResult {
            name: "pearson_chi2_basics".into(),
            passed: ok,
            detail: format!(
                "chi2(q,q)={same}, chi2((1,0),(0.5,0.5))={hand}, reversed support violation caught: {support_err}"
            ),
        });
    }

    VerificationReport { seed, checks }
}
