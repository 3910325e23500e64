//! Fixtures shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use cqf_core::matops::{spectral_abscissa, symmetrize};
use cqf_core::model::{
    assemble, random_instance, symplectic_unit, CostSpec, Dims, Model, ObserverSpec, PlantSpec,
    Selector,
};
use cqf_core::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

/// The acceptance dimensions `(n, m, ν, p, μ)`.
pub const DIMS: Dims = Dims::new(4, 2, 4, 2, 2);

/// First ten seeds in increasing order whose generated start converges
/// (see the decisions ledger for the screen over seeds 1–30).
pub const CONVERGING_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 7, 10, 13, 15, 16];

pub fn normal(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Mat::new(rows, cols, data).unwrap()
}

/// A standard-normal matrix shifted left so its spectral abscissa is drawn
/// uniformly from `[-2, -0.1]`.
pub fn random_hurwitz(rng: &mut impl Rng, d: usize) -> Mat {
    let g = normal(rng, d, d);
    let target = -rng.random_range(0.1..2.0);
    let shift = spectral_abscissa(&g).unwrap() - target;
    &g - &Mat::identity(d).scale(shift)
}

pub fn random_symmetric(rng: &mut impl Rng, d: usize) -> Mat {
    symmetrize(&normal(rng, d, d)).unwrap()
}

/// Seeded instance with `N1 = 0` and `G = 0`, for which every observer is
/// stationary. Walks the seeds from 1 until the observer stays Hurwitz.
pub fn decoupled(dims: Dims) -> Model {
    (1..)
        .find_map(|seed| {
            let (plant, mut observer, mut cost) = random_instance(seed, dims).ok()?.into_parts();
            observer.plant_coupling = Mat::zeros(observer.p(), observer.nu());
            cost.g = Mat::zeros(cost.g.rows(), cost.g.cols());
            let m = Model::new(plant, observer, cost).ok()?;
            assemble(&m, 1e-9).ok().map(|_| m)
        })
        .unwrap()
}

/// `Θ = bJ`, `R = I`, `N = I` with `m = 2`.
pub fn unit_plant() -> PlantSpec {
    PlantSpec {
        theta: symplectic_unit(),
        energy: Mat::identity(2),
        coupling: Mat::identity(2),
    }
}

/// `ϑ = bJ`, `r = I`, `N1 = I` with `Π = I`, `N2 = I`.
pub fn unit_observer() -> ObserverSpec {
    ObserverSpec {
        ccr: symplectic_unit(),
        energy: Mat::identity(2),
        plant_coupling: Mat::identity(2),
        noise_coupling: Mat::identity(2),
        selector: Selector::from_one_based(&[1, 2], 2),
    }
}

pub fn unit_model() -> Model {
    let cost = CostSpec {
        f: Mat::identity(2),
        g: Mat::identity(2),
    };
    Model::new(unit_plant(), unit_observer(), cost).unwrap()
}

pub fn m(rows: &[&[f64]]) -> Mat {
    Mat::from_rows(rows, 0).unwrap()
}
