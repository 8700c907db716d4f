//! LTI plant, observation regions and per-observation feedback synthesis.
//!
//! Each observation `o` owns a compact region `D_o` (a product of
//! Euclidean balls over disjoint coordinate blocks) and a setpoint `c_o`
//! inside it. The feedback `u = u_o - K_o (ξ - c_o)` with `K_o = ½ Bᵀ P_o`
//! drives the plant to `c_o`, and `U_o(ξ) = (ξ - c_o)ᵀ P_o (ξ - c_o)`
//! decreases at rate `(ξ - c_o)ᵀ Q_o (ξ - c_o)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Alphabet, Obs};
use crate::linalg::{self, LinalgError};

/// Relative tolerance on the closed-loop Lyapunov identity.
pub const LYAPUNOV_IDENTITY_TOL: f64 = 1e-9;
/// Closed-loop spectral abscissa must stay below `-HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
    #[error("invalid region for `{obs}`: {message}")]
    InvalidRegion { obs: String, message: String },
    #[error("(A, B) is not controllable")]
    NotControllable,
    #[error("setpoint not reachable: A c is not in the range of B (residual {residual:.3e})")]
    SetpointUnreachable { residual: f64 },
    #[error("setpoint input not unique: B has rank {rank} < {m} columns")]
    SetpointNotUnique { rank: usize, m: usize },
    #[error("Riccati solve failed: {0}")]
    Riccati(#[from] LinalgError),
    #[error("reduced Lyapunov equation has no positive definite solution ({0})")]
    NoPositiveDefiniteSolution(String),
    #[error("Lyapunov identity residual {residual:.3e} exceeds {bound:.3e}")]
    IdentityResidual { residual: f64, bound: f64 },
    #[error("closed loop not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },
    #[error("decrease matrix Q_o is not positive definite (min eigenvalue {min_eig:.3e})")]
    DecreaseNotPositive { min_eig: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl PlantSpec {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, PlantError> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(PlantError::InvalidPlant(format!(
                "A must be square and nonempty, got {:?}",
                a.shape()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(PlantError::InvalidPlant(format!(
                "B must have {} rows and at least one column, got {:?}",
                a.nrows(),
                b.shape()
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(PlantError::InvalidPlant("nonfinite entry".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `[B, AB, …, A^{n-1}B]`
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n, n * m);
        let mut blk = self.b.clone();
        for k in 0..n {
            out.view_mut((0, k * m), (n, m)).copy_from(&blk);
            blk = &self.a * blk;
        }
        out
    }
}

pub fn check_controllability(p: &PlantSpec) -> bool {
    linalg::rank(&p.controllability_matrix(), 1e-10) == p.n()
}

/// Unique `u` with `A c + B u = 0`.
pub fn setpoint_input(p: &PlantSpec, c: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
    if c.len() != p.n() {
        return Err(PlantError::InvalidPlant(format!(
            "setpoint has length {}, expected {}",
            c.len(),
            p.n()
        )));
    }
    let rank = linalg::rank(&p.b, 1e-10);
    if rank < p.m() {
        return Err(PlantError::SetpointNotUnique { rank, m: p.m() });
    }
    let ac = &p.a * c;
    let u = p
        .b
        .clone()
        .svd(true, true)
        .solve(&(-&ac), 1e-14)
        .map_err(|e| PlantError::InvalidPlant(e.to_string()))?;
    let residual = (&ac + &p.b * &u).norm();
    if residual > 1e-9 * (1.0 + ac.norm()) {
        return Err(PlantError::SetpointUnreachable { residual });
    }
    Ok(u)
}

/// One Euclidean ball over a subset of coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub indices: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Block {
    fn distance(&self, xi: &DVector<f64>) -> f64 {
        self.indices
            .iter()
            .zip(&self.center)
            .map(|(&i, &c)| (xi[i] - c).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Compact region `D_o`: the product of its blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    obs: Obs,
    blocks: Vec<Block>,
    setpoint: DVector<f64>,
}

impl Region {
    /// Blocks must partition `0..n`. The setpoint defaults to the block
    /// centers.
    pub fn new(
        obs: Obs,
        name: &str,
        n: usize,
        blocks: Vec<Block>,
        setpoint: Option<DVector<f64>>,
    ) -> Result<Self, PlantError> {
        let err = |message: String| PlantError::InvalidRegion {
            obs: name.to_string(),
            message,
        };
        if blocks.is_empty() {
            return Err(err("no blocks".into()));
        }
        let mut seen = vec![false; n];
        let mut center = DVector::zeros(n);
        for b in &blocks {
            if !(b.radius > 0.0 && b.radius.is_finite()) {
                return Err(err(format!("radius must be positive, got {}", b.radius)));
            }
            if b.indices.is_empty() || b.indices.len() != b.center.len() {
                return Err(err("block center and indices must have equal nonzero length".into()));
            }
            for (&i, &c) in b.indices.iter().zip(&b.center) {
                if i >= n {
                    return Err(err(format!("index {i} out of range for dimension {n}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(err(format!("index {i} appears in two blocks")));
                }
                center[i] = c;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(err(format!("coordinate {i} not covered; region would be unbounded")));
        }
        let setpoint = match setpoint {
            Some(s) if s.len() != n => {
                return Err(err(format!("setpoint has length {}, expected {n}", s.len())))
            }
            Some(s) => s,
            None => center,
        };
        Ok(Self {
            obs,
            blocks,
            setpoint,
        })
    }

    /// Single ball over all coordinates.
    pub fn ball(obs: Obs, name: &str, center: Vec<f64>, radius: f64) -> Result<Self, PlantError> {
        let n = center.len();
        Self::new(
            obs,
            name,
            n,
            vec![Block {
                indices: (0..n).collect(),
                center,
                radius,
            }],
            None,
        )
    }

    pub fn obs(&self) -> Obs {
        self.obs
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.setpoint.len()
    }

    /// `c_o`
    pub fn setpoint(&self) -> &DVector<f64> {
        &self.setpoint
    }

    pub fn contains(&self, xi: &DVector<f64>) -> bool {
        self.blocks.iter().all(|b| b.distance(xi) <= b.radius)
    }

    /// `max_b (‖ξ_b − center_b‖ − r_b)`: negative inside, zero on the
    /// boundary, positive outside.
    pub fn margin(&self, xi: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.distance(xi) - b.radius)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lower bound on `‖ξ − c_o‖` over the flow set `cl(ℝⁿ ∖ D_o)`:
    /// `min_b (r_b − ‖c_o,b − center_b‖)`. Non-positive when `c_o` is not
    /// interior.
    pub fn interior_radius(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.radius - b.distance(&self.setpoint))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from `c_o` to a point of `D_o`, bounded by
    /// `sqrt(Σ_b (r_b + ‖c_o,b − center_b‖)²)`.
    pub fn outer_radius(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b.radius + b.distance(&self.setpoint)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainMode {
    /// Stabilizing CARE solution with weight `Q`; `Q_o = Q`.
    Care { q: DMatrix<f64> },
    /// `PA + AᵀP − PBBᵀP = −2P`, solved through `X = P⁻¹`; `Q_o = 2P`.
    ShiftedRiccati,
}

/// Feedback data for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEntry {
    pub center: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub u: DVector<f64>,
    pub q: DMatrix<f64>,
    /// `A − B K`
    pub closed_loop: DMatrix<f64>,
}

impl GainEntry {
    /// `U_o(ξ)`
    pub fn lyapunov_value(&self, xi: &DVector<f64>) -> f64 {
        let e = xi - &self.center;
        e.dot(&(&self.p * &e))
    }

    /// Closed-loop vector field `(A − BK)(ξ − c_o)`.
    pub fn field(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.closed_loop * (xi - &self.center)
    }

    /// Control `u_o − K (ξ − c_o)`.
    pub fn control(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.u - &self.k * (xi - &self.center)
    }

    /// `‖P(A−BK) + (A−BK)ᵀP + Q‖_F`
    pub fn identity_residual(&self) -> f64 {
        (&self.p * &self.closed_loop + self.closed_loop.transpose() * &self.p + &self.q).norm()
    }
}

pub fn lyapunov_value(g: &GainEntry, xi: &DVector<f64>) -> f64 {
    g.lyapunov_value(xi)
}

/// Synthesizes `(P_o, K_o, u_o, Q_o)` for setpoint `c` and checks the
/// closed-loop identity before returning.
pub fn synthesize_gain(
    plant: &PlantSpec,
    c: &DVector<f64>,
    mode: &GainMode,
) -> Result<GainEntry, PlantError> {
    if !check_controllability(plant) {
        return Err(PlantError::NotControllable);
    }
    let u = setpoint_input(plant, c)?;
    let (a, b) = (plant.a(), plant.b());
    let n = plant.n();
    let (p, q) = match mode {
        GainMode::Care { q } => {
            if q.shape() != (n, n) {
                return Err(PlantError::InvalidPlant(format!(
                    "Q has shape {:?}, expected ({n}, {n})",
                    q.shape()
                )));
            }
            let p = linalg::solve_care(a, b, q)?;
            (p, q.clone())
        }
        GainMode::ShiftedRiccati => {
            // X = P⁻¹ turns PA + AᵀP − PBBᵀP = −2P into
            // (A + I) X + X (A + I)ᵀ = B Bᵀ
            let shifted = a + DMatrix::<f64>::identity(n, n);
            let x = linalg::solve_sylvester(&shifted, &shifted.transpose(), &(b * b.transpose()))
                .map_err(|e| PlantError::NoPositiveDefiniteSolution(e.to_string()))?;
            let x = linalg::symmetrize(&x);
            let min = linalg::sym_min_eigenvalue(&x);
            if min <= 0.0 {
                return Err(PlantError::NoPositiveDefiniteSolution(format!(
                    "X = P⁻¹ has min eigenvalue {min:.6e}"
                )));
            }
            let p = linalg::symmetrize(
                &x.try_inverse()
                    .ok_or_else(|| PlantError::NoPositiveDefiniteSolution("X singular".into()))?,
            );
            let q = &p * 2.0;
            (p, q)
        }
    };
    let k = b.transpose() * &p * 0.5;
    let closed_loop = a - b * &k;
    let entry = GainEntry {
        center: c.clone(),
        p,
        k,
        u,
        q,
        closed_loop,
    };
    validate_gain(&entry)?;
    Ok(entry)
}

/// Positive definiteness, closed-loop identity and Hurwitz checks.
pub fn validate_gain(g: &GainEntry) -> Result<(), PlantError> {
    let p_min = linalg::sym_min_eigenvalue(&g.p);
    if p_min <= 0.0 {
        return Err(PlantError::NoPositiveDefiniteSolution(format!(
            "P has min eigenvalue {p_min:.6e}"
        )));
    }
    let q_min = linalg::sym_min_eigenvalue(&g.q);
    if q_min <= 0.0 {
        return Err(PlantError::DecreaseNotPositive { min_eig: q_min });
    }
    let residual = g.identity_residual();
    let bound = LYAPUNOV_IDENTITY_TOL * g.q.norm();
    if residual > bound {
        return Err(PlantError::IdentityResidual { residual, bound });
    }
    let abscissa = linalg::spectral_abscissa(&g.closed_loop);
    if abscissa >= -HURWITZ_MARGIN {
        return Err(PlantError::NotHurwitz { abscissa });
    }
    Ok(())
}

/// Gains indexed by observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    entries: Vec<GainEntry>,
}

impl Gains {
    pub fn from_entries(entries: Vec<GainEntry>) -> Self {
        Self { entries }
    }

    pub fn get(&self, o: Obs) -> &GainEntry {
        &self.entries[o.0]
    }

    pub fn entries(&self) -> &[GainEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Gain synthesis for every region (ordered by observation).
///
/// With `shared` set, `P` and `K` are synthesized once, using the first
/// region's setpoint, and reused for all observations; `u_o` stays per
/// observation.
pub fn synthesize_all(
    plant: &PlantSpec,
    regions: &[Region],
    mode: &GainMode,
    shared: bool,
) -> Result<Gains, PlantError> {
    let mut entries: Vec<GainEntry> = Vec::with_capacity(regions.len());
    for r in regions {
        let entry = match (shared, entries.first()) {
            (true, Some(first)) => {
                let mut e = first.clone();
                e.center = r.setpoint().clone();
                e.u = setpoint_input(plant, r.setpoint())?;
                e
            }
            _ => synthesize_gain(plant, r.setpoint(), mode)?,
        };
        entries.push(entry);
    }
    Ok(Gains { entries })
}

/// JSON plant file: matrices row-major, regions keyed by observation name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantDocument {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub regions: Vec<RegionDocument>,
    #[serde(default = "default_gain_mode")]
    pub gain_mode: String,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub shared_gain: bool,
}

fn default_gain_mode() -> String {
    "care".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDocument {
    pub obs: String,
    pub blocks: Vec<Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<Vec<f64>>,
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, PlantError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PlantError::InvalidPlant("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flatten().copied(),
    ))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parsed plant file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSetup {
    pub plant: PlantSpec,
    /// One region per observation, in alphabet order.
    pub regions: Vec<Region>,
    pub mode: GainMode,
    pub shared_gain: bool,
}

impl PlantDocument {
    pub fn to_setup(&self, alphabet: &Alphabet) -> Result<PlantSetup, PlantError> {
        let plant = PlantSpec::new(matrix_from_rows(&self.a)?, matrix_from_rows(&self.b)?)?;
        let n = plant.n();
        let mut slots: Vec<Option<Region>> = vec![None; alphabet.len()];
        for rd in &self.regions {
            let obs = alphabet.lookup(&rd.obs).ok_or_else(|| PlantError::InvalidRegion {
                obs: rd.obs.clone(),
                message: "observation not in the formula alphabet".into(),
            })?;
            if slots[obs.0].is_some() {
                return Err(PlantError::InvalidRegion {
                    obs: rd.obs.clone(),
                    message: "observation has more than one region".into(),
                });
            }
            let setpoint = rd.setpoint.clone().map(DVector::from_vec);
            slots[obs.0] = Some(Region::new(obs, &rd.obs, n, rd.blocks.clone(), setpoint)?);
        }
        let regions = slots
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| PlantError::InvalidRegion {
                    obs: alphabet.name(Obs(i)).to_string(),
                    message: "observation has no region".into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mode = match self.gain_mode.as_str() {
            "care" => GainMode::Care {
                q: match &self.q {
                    Some(rows) => matrix_from_rows(rows)?,
                    None => DMatrix::identity(n, n),
                },
            },
            "paper" | "paper_riccati" => GainMode::ShiftedRiccati,
            other => {
                return Err(PlantError::InvalidPlant(format!(
                    "unknown gain_mode `{other}` (expected `care` or `paper`)"
                )))
            }
        };
        Ok(PlantSetup {
            plant,
            regions,
            mode,
            shared_gain: self.shared_gain,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn scalar(a: f64) -> PlantSpec {
        PlantSpec::new(m(1, 1, &[a]), m(1, 1, &[1.0])).unwrap()
    }

    fn care_identity(n: usize) -> GainMode {
        GainMode::Care {
            q: DMatrix::identity(n, n),
        }
    }

    #[test]
    fn controllability() {
        assert!(check_controllability(&scalar(0.0)));
        let p = PlantSpec::new(m(2, 2, &[0.0, 1.0, 0.0, 0.0]), m(2, 1, &[0.0, 0.0])).unwrap();
        assert!(!check_controllability(&p));
        let p = PlantSpec::new(m(2, 2, &[0.0, 1.0, 0.0, 0.0]), m(2, 1, &[0.0, 1.0])).unwrap();
        assert!(check_controllability(&p));
    }

    #[test]
    fn setpoints() {
        let u = setpoint_input(&scalar(-1.0), &DVector::from_vec(vec![3.0])).unwrap();
        assert_relative_eq!(u[0], 3.0, epsilon = 1e-12);
        // A c not in range B
        let p = PlantSpec::new(m(2, 2, &[1.0, 0.0, 0.0, 1.0]), m(2, 1, &[1.0, 0.0])).unwrap();
        assert!(matches!(
            setpoint_input(&p, &DVector::from_vec(vec![0.0, 1.0])),
            Err(PlantError::SetpointUnreachable { .. })
        ));
        // column-deficient B
        let p = PlantSpec::new(m(1, 1, &[1.0]), m(1, 2, &[1.0, 1.0])).unwrap();
        assert!(matches!(
            setpoint_input(&p, &DVector::from_vec(vec![1.0])),
            Err(PlantError::SetpointNotUnique { .. })
        ));
    }

    #[test]
    fn care_gains() {
        let c = DVector::from_vec(vec![0.0]);
        let g = synthesize_gain(&scalar(0.0), &c, &care_identity(1)).unwrap();
        assert_relative_eq!(g.p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.k[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(g.q[(0, 0)], 1.0);

        let g = synthesize_gain(&scalar(1.0), &c, &care_identity(1)).unwrap();
        assert_relative_eq!(g.p[(0, 0)], 2.414_213_56, epsilon = 1e-8);
        assert_relative_eq!(g.k[(0, 0)], 1.207_106_78, epsilon = 1e-8);
    }

    #[test]
    fn shifted_riccati_mode() {
        let c = DVector::from_vec(vec![0.0]);
        let err = synthesize_gain(&scalar(-2.0), &c, &GainMode::ShiftedRiccati).unwrap_err();
        assert!(matches!(err, PlantError::NoPositiveDefiniteSolution(_)));
        // A = 0: 2X = 1, P = 2, Q_o = 4
        let g = synthesize_gain(&scalar(0.0), &c, &GainMode::ShiftedRiccati).unwrap();
        assert_relative_eq!(g.p[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(g.q[(0, 0)], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn regions() {
        let r = Region::ball(Obs(0), "a", vec![0.0], 0.1).unwrap();
        let x = |v: f64| DVector::from_vec(vec![v]);
        assert!(r.contains(&x(0.0)));
        assert_relative_eq!(r.margin(&x(0.0)), -0.1);
        assert!(r.contains(&x(0.1)));
        assert_relative_eq!(r.margin(&x(0.1)), 0.0);
        assert!(!r.contains(&x(0.3)));

        let blocks: Vec<Block> = (0..4)
            .map(|i| Block {
                indices: vec![2 * i, 2 * i + 1],
                center: vec![i as f64, 1.0],
                radius: 0.1,
            })
            .collect();
        let r = Region::new(Obs(0), "o1", 8, blocks, None).unwrap();
        let mut xi = r.setpoint().clone();
        xi[0] += 0.3;
        assert!(!r.contains(&xi));
        assert_relative_eq!(r.margin(&xi), 0.2, epsilon = 1e-12);
        assert_relative_eq!(r.interior_radius(), 0.1);
        assert_relative_eq!(r.outer_radius(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn region_validation() {
        let block = |indices: Vec<usize>, radius: f64| Block {
            center: vec![0.0; indices.len()],
            indices,
            radius,
        };
        assert!(Region::new(Obs(0), "a", 2, vec![block(vec![0], 1.0)], None).is_err());
        assert!(Region::new(Obs(0), "a", 2, vec![block(vec![0, 1], 0.0)], None).is_err());
        assert!(Region::new(
            Obs(0),
            "a",
            2,
            vec![block(vec![0, 1], 1.0), block(vec![1], 1.0)],
            None
        )
        .is_err());
    }

    #[test]
    fn lyapunov_values() {
        let g = GainEntry {
            center: DVector::from_vec(vec![0.0, 0.0]),
            p: DMatrix::identity(2, 2),
            k: DMatrix::zeros(2, 2),
            u: DVector::zeros(2),
            q: DMatrix::identity(2, 2),
            closed_loop: DMatrix::zeros(2, 2),
        };
        assert_eq!(lyapunov_value(&g, &DVector::from_vec(vec![3.0, 4.0])), 25.0);
        assert_eq!(lyapunov_value(&g, &g.center), 0.0);
        let g = GainEntry {
            center: DVector::from_vec(vec![1.0, 0.0]),
            p: m(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            ..g
        };
        assert_eq!(lyapunov_value(&g, &DVector::from_vec(vec![2.0, 2.0])), 6.0);
    }

    #[test]
    fn plant_document() {
        let alphabet = Alphabet::new(["a", "b"]).unwrap();
        let text = r#"{
            "A": [[0.0]], "B": [[1.0]],
            "regions": [
                {"obs": "b", "blocks": [{"indices": [0], "center": [-1.0], "radius": 0.1}]},
                {"obs": "a", "blocks": [{"indices": [0], "center": [1.0], "radius": 0.1}]}
            ]
        }"#;
        let doc: PlantDocument = serde_json::from_str(text).unwrap();
        let setup = doc.to_setup(&alphabet).unwrap();
        assert_eq!(setup.regions[0].setpoint()[0], 1.0);
        assert_eq!(setup.regions[1].obs(), Obs(1));
        assert!(matches!(setup.mode, GainMode::Care { .. }));

        let mut missing = doc.clone();
        missing.regions.pop();
        assert!(missing.to_setup(&alphabet).is_err());
        let mut dup = doc.clone();
        dup.regions[0].obs = "a".into();
        assert!(dup.to_setup(&alphabet).is_err());
        let mut unknown = doc;
        unknown.regions[0].obs = "c".into();
        assert!(unknown.to_setup(&alphabet).is_err());
    }
}
