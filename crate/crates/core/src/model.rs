//! Plant, observer and cost data, and the real state-space matrices they
//! induce.
//!
//! The plant is an open quantum harmonic oscillator with CCR matrix `Θ`,
//! energy matrix `R` and field coupling `N`. The observer has CCR matrix
//! `ϑ`, energy matrix `r`, plant-output coupling `N1` (through the selector
//! `Π`) and its own noise coupling `N2`. With the Ito matrix
//! `J = bJ ⊗ I_{m/2}`,
//!
//! ```text
//! A  = 2Θ(R + NᵀJN)      B  = 2ΘNᵀ       C = 2JN
//! a  = 2ϑ(r + N1ᵀΠJΠᵀN1 + N2ᵀ Im(℧) N2)
//! b1 = 2ϑN1ᵀΠ            b2 = 2ϑN2ᵀ
//! ```

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result, Subsystem, Violation};
use crate::matops::{self, Mat};

/// Attempts per block before random generation gives up.
pub const GENERATION_ATTEMPTS: usize = 1000;

/// Generated plants and observers must have spectral abscissa below minus this.
pub const GENERATION_MARGIN: f64 = 0.05;

/// The 2x2 symplectic unit `[[0, 1], [-1, 0]]`.
pub fn symplectic_unit() -> Mat {
    Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]], 2).expect("finite")
}

/// `bJ ⊗ I_{d/2}` for even `d`.
pub fn build_ito(d: usize) -> Result<Mat> {
    if !d.is_multiple_of(2) {
        return Err(Error::OddDimension(d));
    }
    Ok(symplectic_unit().kron(&Mat::identity(d / 2)))
}

/// Imaginary parts of the Ito matrices of the plant field and observer noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoStructure {
    pub j: Mat,
    pub im_mho: Mat,
}

impl ItoStructure {
    pub fn new(m: usize, mu: usize) -> Result<Self> {
        Ok(Self {
            j: build_ito(m)?,
            im_mho: build_ito(mu)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlantSpec {
    /// CCR matrix `Θ`, antisymmetric n×n.
    pub theta: Mat,
    /// Energy matrix `R`, symmetric n×n.
    pub energy: Mat,
    /// Field coupling `N`, m×n.
    pub coupling: Mat,
}

impl PlantSpec {
    pub fn n(&self) -> usize {
        self.theta.rows()
    }

    pub fn m(&self) -> usize {
        self.coupling.rows()
    }
}

/// Rows of a permutation matrix of order `m`, kept both as a 0/1 matrix and
/// as the list of selected columns.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Selector {
    columns: Vec<usize>,
    m: usize,
}

impl Selector {
    /// `columns` are 1-based, in row order.
    pub fn from_one_based(columns: &[usize], m: usize) -> Self {
        Self {
            columns: columns.iter().map(|c| c.wrapping_sub(1)).collect(),
            m,
        }
    }

    /// Selects the first `p/2` conjugate pairs: columns `1..=p/2` and their
    /// partners `m/2 + 1..=m/2 + p/2`.
    pub fn leading(p: usize, m: usize) -> Self {
        let half = p / 2;
        let columns = (0..half).chain((0..half).map(|k| k + m / 2)).collect();
        Self { columns, m }
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn columns_one_based(&self) -> Vec<usize> {
        self.columns.iter().map(|c| c.wrapping_add(1)).collect()
    }

    pub fn matrix(&self) -> Mat {
        let mut pi = Mat::zeros(self.columns.len(), self.m);
        for (row, &col) in self.columns.iter().enumerate() {
            if col < self.m {
                pi[(row, col)] = 1.0;
            }
        }
        pi
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        let field = "observer.pi_columns";
        let m = self.m;
        let mut seen = alloc::vec![false; m];
        let mut ok = true;
        for (row, &c) in self.columns.iter().enumerate() {
            if c >= m {
                push(out, field, format!("row {row}: column {} outside 1..={m}", c.wrapping_add(1)));
                ok = false;
            } else if seen[c] {
                push(out, field, format!("column {} selected twice", c + 1));
                ok = false;
            } else {
                seen[c] = true;
            }
        }
        if self.columns.len() > m {
            push(out, field, format!("p = {} exceeds m = {m}", self.columns.len()));
        }
        if ok && m.is_multiple_of(2) {
            for &c in &self.columns {
                let partner = if c < m / 2 { c + m / 2 } else { c - m / 2 };
                if !seen[partner] {
                    push(
                        out,
                        field,
                        format!(
                            "column {} is selected without its conjugate column {}",
                            c + 1,
                            partner + 1
                        ),
                    );
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObserverSpec {
    /// CCR matrix `ϑ`, antisymmetric ν×ν.
    pub ccr: Mat,
    /// Energy matrix `r`, symmetric ν×ν.
    pub energy: Mat,
    /// Coupling to the selected plant output, `N1`, p×ν.
    pub plant_coupling: Mat,
    /// Coupling to the observer's own noise, `N2`, μ×ν.
    pub noise_coupling: Mat,
    pub selector: Selector,
}

impl ObserverSpec {
    pub fn nu(&self) -> usize {
        self.ccr.rows()
    }

    pub fn p(&self) -> usize {
        self.selector.p()
    }

    pub fn mu(&self) -> usize {
        self.noise_coupling.rows()
    }

    /// Same observer with the decision variables `(r, N1)` replaced.
    pub fn with_params(&self, energy: Mat, plant_coupling: Mat) -> Self {
        Self {
            energy,
            plant_coupling,
            ..self.clone()
        }
    }
}

/// Error weights: the estimation error is `F X - G ξ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostSpec {
    pub f: Mat,
    pub g: Mat,
}

impl CostSpec {
    pub fn q(&self) -> usize {
        self.f.rows()
    }
}

fn push(out: &mut Vec<Violation>, field: &str, message: alloc::string::String) {
    out.push(Violation {
        field: field.to_string(),
        message,
    });
}

fn check_shape(out: &mut Vec<Violation>, field: &str, m: &Mat, rows: usize, cols: usize) -> bool {
    if m.shape() == (rows, cols) {
        true
    } else {
        push(
            out,
            field,
            format!("expected {rows}x{cols}, got {}x{}", m.rows(), m.cols()),
        );
        false
    }
}

fn check_antisymmetric(out: &mut Vec<Violation>, field: &str, m: &Mat) {
    let n = m.rows();
    let asym = (0..n).any(|i| (0..=i).any(|j| m[(i, j)] != -m[(j, i)]));
    if asym {
        push(out, field, "must be antisymmetric".to_string());
    }
}

fn check_symmetric(out: &mut Vec<Violation>, field: &str, m: &Mat) {
    let n = m.rows();
    let asym = (0..n).any(|i| (0..i).any(|j| m[(i, j)] != m[(j, i)]));
    if asym {
        push(out, field, "must be symmetric".to_string());
    }
}

fn check_even(out: &mut Vec<Violation>, field: &str, d: usize) {
    if !d.is_multiple_of(2) {
        push(out, field, format!("dimension {d} must be even"));
    }
}

/// Every violated invariant of the triple; empty when the triple is valid.
pub fn violations(plant: &PlantSpec, obs: &ObserverSpec, cost: &CostSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = plant.theta.rows();
    let m = plant.coupling.rows();
    if check_shape(&mut out, "plant.theta", &plant.theta, n, n) {
        check_antisymmetric(&mut out, "plant.theta", &plant.theta);
    }
    if check_shape(&mut out, "plant.R", &plant.energy, n, n) {
        check_symmetric(&mut out, "plant.R", &plant.energy);
    }
    check_shape(&mut out, "plant.N", &plant.coupling, m, n);
    check_even(&mut out, "plant.m", m);

    let nu = obs.ccr.rows();
    let p = obs.selector.p();
    let mu = obs.noise_coupling.rows();
    if check_shape(&mut out, "observer.vartheta", &obs.ccr, nu, nu) {
        check_antisymmetric(&mut out, "observer.vartheta", &obs.ccr);
    }
    if check_shape(&mut out, "observer.r", &obs.energy, nu, nu) {
        check_symmetric(&mut out, "observer.r", &obs.energy);
    }
    check_shape(&mut out, "observer.N1", &obs.plant_coupling, p, nu);
    check_shape(&mut out, "observer.N2", &obs.noise_coupling, mu, nu);
    check_even(&mut out, "observer.p", p);
    check_even(&mut out, "observer.mu", mu);
    if obs.selector.m() != m {
        push(
            &mut out,
            "observer.pi_columns",
            format!("selector is over {} columns but the plant field has m = {m}", obs.selector.m()),
        );
    } else {
        obs.selector.violations(&mut out);
    }

    let q = cost.f.rows();
    check_shape(&mut out, "cost.F", &cost.f, q, n);
    check_shape(&mut out, "cost.G", &cost.g, q, nu);
    out
}

pub fn validate(plant: &PlantSpec, obs: &ObserverSpec, cost: &CostSpec) -> Result<()> {
    let v = violations(plant, obs, cost);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(v))
    }
}

/// A validated plant/observer/cost triple.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Model {
    plant: PlantSpec,
    observer: ObserverSpec,
    cost: CostSpec,
}

impl Model {
    pub fn new(plant: PlantSpec, observer: ObserverSpec, cost: CostSpec) -> Result<Self> {
        validate(&plant, &observer, &cost)?;
        Ok(Self {
            plant,
            observer,
            cost,
        })
    }

    pub fn plant(&self) -> &PlantSpec {
        &self.plant
    }

    pub fn observer(&self) -> &ObserverSpec {
        &self.observer
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.plant.n(),
            m: self.plant.m(),
            nu: self.observer.nu(),
            p: self.observer.p(),
            mu: self.observer.mu(),
        }
    }

    /// Replaces `(r, N1)`. The new matrices must keep their shapes and `r`
    /// must stay symmetric.
    pub fn with_observer_params(&self, energy: Mat, plant_coupling: Mat) -> Result<Self> {
        Self::new(
            self.plant.clone(),
            self.observer.with_params(energy, plant_coupling),
            self.cost.clone(),
        )
    }

    /// Like [`Model::with_observer_params`] but skips revalidation; used on
    /// hot paths where the shapes are known to be preserved.
    pub(crate) fn with_params_unchecked(&self, energy: Mat, plant_coupling: Mat) -> Self {
        Self {
            plant: self.plant.clone(),
            observer: self.observer.with_params(energy, plant_coupling),
            cost: self.cost.clone(),
        }
    }

    pub fn into_parts(self) -> (PlantSpec, ObserverSpec, CostSpec) {
        (self.plant, self.observer, self.cost)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantMatrices {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverMatrices {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
}

/// `A = 2Θ(R + NᵀJN)`, `B = 2ΘNᵀ`, `C = 2JN`.
pub fn derive_plant(plant: &PlantSpec) -> Result<PlantMatrices> {
    let j = build_ito(plant.m())?;
    let nt = plant.coupling.transpose();
    let two_theta = plant.theta.scale(2.0);
    let inner = &plant.energy + &(&(&nt * &j) * &plant.coupling);
    Ok(PlantMatrices {
        a: &two_theta * &inner,
        b: &two_theta * &nt,
        c: &j.scale(2.0) * &plant.coupling,
    })
}

/// `a = 2ϑ(r + N1ᵀΠJΠᵀN1 + N2ᵀ Im℧ N2)`, `b1 = 2ϑN1ᵀΠ` (ν×m), `b2 = 2ϑN2ᵀ`.
pub fn derive_observer(obs: &ObserverSpec) -> Result<ObserverMatrices> {
    let ito = ItoStructure::new(obs.selector.m(), obs.mu())?;
    let pi = obs.selector.matrix();
    let n1t = obs.plant_coupling.transpose();
    let n2t = obs.noise_coupling.transpose();
    let pjp = &(&pi * &ito.j) * &pi.transpose();
    let inner = &(&obs.energy + &(&(&n1t * &pjp) * &obs.plant_coupling))
        + &(&(&n2t * &ito.im_mho) * &obs.noise_coupling);
    let two_vt = obs.ccr.scale(2.0);
    Ok(ObserverMatrices {
        a: &two_vt * &inner,
        b1: &(&two_vt * &n1t) * &pi,
        b2: &two_vt * &n2t,
    })
}

/// Real matrices of the cascaded plant–observer system.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StateSpace {
    pub plant_a: Mat,
    pub plant_b: Mat,
    pub plant_c: Mat,
    pub obs_a: Mat,
    pub obs_b1: Mat,
    pub obs_b2: Mat,
    /// `[[A, 0], [b1 C, a]]`.
    pub sys_a: Mat,
    /// `[[B, 0], [b1, b2]]`.
    pub sys_b: Mat,
    /// `[F, -G]`.
    pub sys_c: Mat,
    /// `blkdiag(Θ, ϑ)`.
    pub ccr: Mat,
}

impl StateSpace {
    pub fn n(&self) -> usize {
        self.plant_a.rows()
    }

    pub fn nu(&self) -> usize {
        self.obs_a.rows()
    }
}

/// Builds the composite system, requiring both `A` and `a` to be Hurwitz
/// with the given margin.
pub fn assemble(model: &Model, hurwitz_margin: f64) -> Result<StateSpace> {
    let pm = derive_plant(&model.plant)?;
    let om = derive_observer(&model.observer)?;
    matops::ensure_hurwitz(&pm.a, hurwitz_margin, Subsystem::Plant)?;
    matops::ensure_hurwitz(&om.a, hurwitz_margin, Subsystem::Observer)?;
    Ok(compose(model, pm, om))
}

pub(crate) fn compose(model: &Model, pm: PlantMatrices, om: ObserverMatrices) -> StateSpace {
    let n = pm.a.rows();
    let nu = om.a.rows();
    let m = pm.b.cols();
    let mu = om.b2.cols();
    let sys_a = Mat::block2x2(&pm.a, &Mat::zeros(n, nu), &(&om.b1 * &pm.c), &om.a);
    let sys_b = Mat::block2x2(&pm.b, &Mat::zeros(n, mu), &om.b1, &om.b2);
    let sys_c = Mat::hstack(&model.cost.f, &(-&model.cost.g));
    debug_assert_eq!(sys_b.rows(), n + nu);
    debug_assert_eq!(om.b1.cols(), m);
    StateSpace {
        ccr: Mat::blkdiag(&model.plant.theta, &model.observer.ccr),
        plant_a: pm.a,
        plant_b: pm.b,
        plant_c: pm.c,
        obs_a: om.a,
        obs_b1: om.b1,
        obs_b2: om.b2,
        sys_a,
        sys_b,
        sys_c,
    }
}

/// Dimensions `(n, m, ν, p, μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub nu: usize,
    pub p: usize,
    pub mu: usize,
}

impl Dims {
    pub const fn new(n: usize, m: usize, nu: usize, p: usize, mu: usize) -> Self {
        Self { n, m, nu, p, mu }
    }
}

pub(crate) fn normal_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub(crate) fn normal_sym(rng: &mut impl Rng, n: usize) -> Mat {
    matops::sym(&normal_mat(rng, n, n))
}

/// Draws `(r, N1)` until `a` is Hurwitz with [`GENERATION_MARGIN`].
pub(crate) fn draw_observer_params(
    rng: &mut impl Rng,
    template: &ObserverSpec,
) -> Result<(Mat, Mat)> {
    let nu = template.nu();
    let p = template.p();
    for _ in 0..GENERATION_ATTEMPTS {
        let r = normal_sym(rng, nu);
        let n1 = normal_mat(rng, p, nu);
        let a = derive_observer(&template.with_params(r.clone(), n1.clone()))?.a;
        if matops::spectral_abscissa(&a)? < -GENERATION_MARGIN {
            return Ok((r, n1));
        }
    }
    Err(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
    })
}

/// Seeded random plant/observer/cost triple with `q = n`.
///
/// `Θ = bJ ⊗ I_{n/2}` and `ϑ = bJ ⊗ I_{ν/2}`; `R`, `r` are symmetrised
/// standard-normal draws and the couplings and weights are standard normal.
/// Plant and observer blocks are redrawn until their drift matrices have
/// spectral abscissa below `-GENERATION_MARGIN`.
pub fn random_instance(seed: u64, dims: Dims) -> Result<Model> {
    let Dims { n, m, nu, p, mu } = dims;
    for d in [n, m, nu, p, mu] {
        if !d.is_multiple_of(2) {
            return Err(Error::OddDimension(d));
        }
    }
    if p > m || n == 0 || nu == 0 {
        return Err(Error::InvalidSpec(alloc::vec![Violation {
            field: "dims".to_string(),
            message: format!("unsupported dimensions {dims:?}"),
        }]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = build_ito(n)?;
    let mut plant = None;
    for _ in 0..GENERATION_ATTEMPTS {
        let cand = PlantSpec {
            theta: theta.clone(),
            energy: normal_sym(&mut rng, n),
            coupling: normal_mat(&mut rng, m, n),
        };
        if matops::spectral_abscissa(&derive_plant(&cand)?.a)? < -GENERATION_MARGIN {
            plant = Some(cand);
            break;
        }
    }
    let plant = plant.ok_or(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
    })?;

    let mut observer = None;
    for _ in 0..GENERATION_ATTEMPTS {
        let cand = ObserverSpec {
            ccr: build_ito(nu)?,
            energy: normal_sym(&mut rng, nu),
            plant_coupling: normal_mat(&mut rng, p, nu),
            noise_coupling: normal_mat(&mut rng, mu, nu),
            selector: Selector::leading(p, m),
        };
        if matops::spectral_abscissa(&derive_observer(&cand)?.a)? < -GENERATION_MARGIN {
            observer = Some(cand);
            break;
        }
    }
    let observer = observer.ok_or(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
    })?;

    let cost = CostSpec {
        f: normal_mat(&mut rng, n, n),
        g: normal_mat(&mut rng, n, nu),
    };
    Model::new(plant, observer, cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(rows, 0).unwrap()
    }

    fn unit_model() -> Model {
        let bj = symplectic_unit();
        let plant = PlantSpec {
            theta: bj.clone(),
            energy: Mat::identity(2),
            coupling: Mat::identity(2),
        };
        let obs = ObserverSpec {
            ccr: bj,
            energy: Mat::identity(2),
            plant_coupling: Mat::identity(2),
            noise_coupling: Mat::identity(2),
            selector: Selector::leading(2, 2),
        };
        let cost = CostSpec {
            f: Mat::identity(2),
            g: Mat::zeros(2, 2),
        };
        Model::new(plant, obs, cost).unwrap()
    }

    #[test]
    fn ito_matrices() {
        assert_eq!(build_ito(2).unwrap(), m(&[&[0.0, 1.0], &[-1.0, 0.0]]));
        let j4 = build_ito(4).unwrap();
        assert_eq!(j4, symplectic_unit().kron(&Mat::identity(2)));
        assert_eq!(&j4 * &j4, -&Mat::identity(4));
        assert_eq!(build_ito(3), Err(Error::OddDimension(3)));
    }

    #[test]
    fn unit_model_is_valid() {
        let model = unit_model();
        assert_eq!(model.dims(), Dims::new(2, 2, 2, 2, 2));
    }

    #[test]
    fn asymmetric_energy_rejected() {
        let model = unit_model();
        let (mut plant, obs, cost) = model.into_parts();
        plant.energy = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
        match validate(&plant, &obs, &cost) {
            Err(Error::InvalidSpec(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].field, "plant.R");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn selector_pair_rule() {
        let ok = Selector::from_one_based(&[1, 3], 4);
        let mut v = Vec::new();
        ok.violations(&mut v);
        assert!(v.is_empty(), "{v:?}");

        let bad = Selector::from_one_based(&[1, 2], 4);
        bad.violations(&mut v);
        assert_eq!(v.len(), 2);

        v.clear();
        Selector::from_one_based(&[1, 1], 2).violations(&mut v);
        assert!(!v.is_empty());
        v.clear();
        Selector::from_one_based(&[0, 5], 4).violations(&mut v);
        assert!(!v.is_empty());
    }

    #[test]
    fn leading_selector_is_conjugate_closed() {
        let s = Selector::leading(2, 4);
        assert_eq!(s.columns_one_based(), alloc::vec![1, 3]);
        let pi = s.matrix();
        let j = build_ito(4).unwrap();
        assert_eq!(&(&pi * &j) * &pi.transpose(), build_ito(2).unwrap());
    }

    #[test]
    fn unit_plant_matrices() {
        let pm = derive_plant(unit_model().plant()).unwrap();
        assert_eq!(pm.a, m(&[&[-2.0, 2.0], &[-2.0, -2.0]]));
        assert_eq!(pm.b, m(&[&[0.0, 2.0], &[-2.0, 0.0]]));
        assert_eq!(pm.c, m(&[&[0.0, 2.0], &[-2.0, 0.0]]));
    }

    #[test]
    fn decoupled_plant() {
        let (mut plant, _, _) = unit_model().into_parts();
        plant.coupling = Mat::zeros(2, 2);
        let pm = derive_plant(&plant).unwrap();
        assert_eq!(pm.a, &plant.theta.scale(2.0) * &plant.energy);
        assert_eq!(pm.b, Mat::zeros(2, 2));
        assert_eq!(pm.c, Mat::zeros(2, 2));

        plant.energy = Mat::zeros(2, 2);
        plant.coupling = Mat::identity(2);
        assert_eq!(derive_plant(&plant).unwrap().a, Mat::identity(2).scale(-2.0));
    }

    #[test]
    fn unit_observer_matrices() {
        let om = derive_observer(unit_model().observer()).unwrap();
        assert_eq!(om.a, m(&[&[-4.0, 2.0], &[-2.0, -4.0]]));
        assert_eq!(om.b1, m(&[&[0.0, 2.0], &[-2.0, 0.0]]));
        assert_eq!(om.b2, m(&[&[0.0, 2.0], &[-2.0, 0.0]]));
    }

    #[test]
    fn observer_special_cases() {
        let (_, obs, _) = unit_model().into_parts();
        let zero = obs.with_params(obs.energy.clone(), Mat::zeros(2, 2));
        let zero = ObserverSpec {
            noise_coupling: Mat::zeros(2, 2),
            ..zero
        };
        let om = derive_observer(&zero).unwrap();
        assert_eq!(om.a, &zero.ccr.scale(2.0) * &zero.energy);
        assert_eq!(om.b1, Mat::zeros(2, 2));
        assert_eq!(om.b2, Mat::zeros(2, 2));

        let only_noise = ObserverSpec {
            energy: Mat::zeros(2, 2),
            plant_coupling: Mat::zeros(2, 2),
            ..obs
        };
        assert_eq!(derive_observer(&only_noise).unwrap().a, Mat::identity(2).scale(-2.0));
    }

    #[test]
    fn n1_term_is_quadratic() {
        let model = random_instance(7, Dims::new(4, 2, 4, 2, 2)).unwrap();
        let obs = model.observer().clone();
        let base = ObserverSpec {
            energy: Mat::zeros(4, 4),
            noise_coupling: Mat::zeros(2, 4),
            ..obs.clone()
        };
        let a1 = derive_observer(&base).unwrap().a;
        let doubled = base.with_params(Mat::zeros(4, 4), obs.plant_coupling.scale(2.0));
        let a2 = derive_observer(&doubled).unwrap().a;
        assert!((&a2 - &a1.scale(4.0)).max_abs() < 1e-12 * (1.0 + a1.max_abs()));
    }

    #[test]
    fn assemble_block_structure() {
        let model = unit_model();
        let ss = assemble(&model, matops::DEFAULT_HURWITZ_MARGIN).unwrap();
        assert_eq!(ss.sys_a.block(0, 0, 2, 2), ss.plant_a);
        assert_eq!(ss.sys_a.block(0, 2, 2, 2), Mat::zeros(2, 2));
        assert_eq!(ss.sys_a.block(2, 0, 2, 2), &ss.obs_b1 * &ss.plant_c);
        assert_eq!(ss.sys_a.block(2, 2, 2, 2), ss.obs_a);
        assert_eq!(ss.sys_b.block(2, 0, 2, 2), ss.obs_b1);
        assert_eq!(ss.sys_b.block(2, 2, 2, 2), ss.obs_b2);
        assert_eq!(ss.sys_c.block(0, 2, 2, 2), -&model.cost().g);
        assert_eq!(ss.ccr, -&ss.ccr.transpose());
        let s = matops::spectral_abscissa(&ss.sys_a).unwrap();
        let sa = matops::spectral_abscissa(&ss.plant_a).unwrap();
        let so = matops::spectral_abscissa(&ss.obs_a).unwrap();
        assert!((s - sa.max(so)).abs() < 1e-9);
        assert_eq!(assemble(&model, 1e-9).unwrap(), ss);
    }

    #[test]
    fn decoupled_observer_gives_block_diagonal() {
        let model = unit_model();
        let m2 = model
            .with_observer_params(Mat::identity(2), Mat::zeros(2, 2))
            .unwrap();
        let ss = assemble(&m2, 1e-9).unwrap();
        assert_eq!(ss.sys_a.block(2, 0, 2, 2), Mat::zeros(2, 2));
    }

    #[test]
    fn assemble_reports_unstable_observer() {
        let model = unit_model();
        let m2 = model
            .with_observer_params(Mat::identity(2), Mat::zeros(2, 2))
            .unwrap();
        let (plant, obs, cost) = m2.into_parts();
        let obs = ObserverSpec {
            noise_coupling: Mat::zeros(2, 2),
            ..obs
        };
        let m3 = Model::new(plant, obs, cost).unwrap();
        assert!(matches!(
            assemble(&m3, 1e-9),
            Err(Error::NotHurwitz {
                which: Subsystem::Observer,
                ..
            })
        ));
    }

    #[test]
    fn random_instance_is_deterministic_and_valid() {
        let dims = Dims::new(4, 2, 4, 2, 2);
        for seed in 0..5 {
            let a = random_instance(seed, dims).unwrap();
            let b = random_instance(seed, dims).unwrap();
            assert_eq!(a, b);
            assert!(validate(a.plant(), a.observer(), a.cost()).is_ok());
            assert!(assemble(&a, 1e-9).is_ok());
        }
        assert_ne!(
            random_instance(1, dims).unwrap(),
            random_instance(2, dims).unwrap()
        );
        assert!(matches!(
            random_instance(1, Dims::new(3, 2, 4, 2, 2)),
            Err(Error::OddDimension(3))
        ));
    }

    #[test]
    fn plant_round_trip_through_invertible_theta() {
        let model = random_instance(3, Dims::new(4, 2, 4, 2, 2)).unwrap();
        let plant = model.plant();
        let pm = derive_plant(plant).unwrap();
        // Θ = bJ ⊗ I is orthogonal with Θ⁻¹ = -Θ.
        let theta_inv = -&plant.theta;
        let n_rec = (&theta_inv * &pm.b).scale(0.5).transpose();
        let j = build_ito(plant.m()).unwrap();
        let r_rec = matops::sym(
            &(&(&theta_inv * &pm.a).scale(0.5) - &(&(&n_rec.transpose() * &j) * &n_rec)),
        );
        let rebuilt = derive_plant(&PlantSpec {
            theta: plant.theta.clone(),
            energy: r_rec,
            coupling: n_rec,
        })
        .unwrap();
        let tol = 1e-12 * (1.0 + pm.a.max_abs());
        assert!((&rebuilt.a - &pm.a).max_abs() < tol);
        assert!((&rebuilt.b - &pm.b).max_abs() < tol);
        assert!((&rebuilt.c - &pm.c).max_abs() < tol);
    }
}
