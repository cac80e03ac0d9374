#![allow(dead_code)]

use ctrl_rl_core::{CostSpec, DynamicsModel};
use nalgebra::{dmatrix, DMatrix};

pub fn x29a() -> (DynamicsModel, CostSpec) {
    let a = dmatrix![
        -0.1850, 0.1475, -0.9825, 0.1120;
        -0.3467, -1.710, 0.9029, -0.5843e-6;
        1.174, -0.0825, -0.1826, -0.4428e-7;
        0.0, 1.0, 0.1429, 0.0
    ];
    let b = dmatrix![
        -0.4470e-3, 0.4020e-3;
        0.3715, 0.0549;
        0.0265, -0.0135;
        0.0, 0.0
    ];
    let model = DynamicsModel::new(a, b, DMatrix::identity(4, 4) * 0.2).unwrap();
    let cost = CostSpec::new(DMatrix::identity(4, 4) * 10.0, DMatrix::identity(2, 2)).unwrap();
    (model, cost)
}
