use anyhow::{bail, Result};
use ctrl_rl_core::{CostSpec, DynamicsModel, ParameterPair};
use nalgebra::{dmatrix, DMatrix};

use crate::config::{matrix_from_rows, ExperimentConfig};

/// Lateral-directional dynamics of the X-29A at 4000 ft, with
/// `C = 0.2·I₄`, `Q = 10·I₄`, `R = I₂`.
pub fn x29a_preset() -> (DynamicsModel, CostSpec) {
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
    let model =
        DynamicsModel::new(a, b, DMatrix::identity(4, 4) * 0.2).expect("preset shapes agree");
    let cost = CostSpec::new(DMatrix::identity(4, 4) * 10.0, DMatrix::identity(2, 2))
        .expect("preset cost is positive definite");
    (model, cost)
}

/// The configured true system and cost.
pub fn build_model(cfg: &ExperimentConfig) -> Result<(DynamicsModel, CostSpec)> {
    let model = match (&cfg.a, &cfg.b, &cfg.c) {
        (Some(a), Some(b), Some(c)) => DynamicsModel::new(
            matrix_from_rows("a", a)?,
            matrix_from_rows("b", b)?,
            matrix_from_rows("c", c)?,
        )?,
        _ => match cfg.preset.as_str() {
            "x29a" => x29a_preset().0,
            other => bail!("unknown preset {other:?} (known: x29a)"),
        },
    };
    let (dx, du) = (model.dx(), model.du());
    let cost = CostSpec::new(
        DMatrix::identity(dx, dx) * cfg.q_scale,
        DMatrix::identity(du, du) * cfg.r_scale,
    )?;
    Ok((model, cost))
}

/// A fixed, seed-independent offset of the truth with `Ψ = psi`. Stands in
/// for an external initial-stabilization phase.
pub fn offset_estimate(truth: &ParameterPair, psi: f64) -> ParameterPair {
    let pattern = |r: usize, c: usize| {
        DMatrix::from_fn(r, c, |i, j| if (i + 2 * j) % 3 == 0 { 1.0 } else { -0.5 })
    };
    let unit = |m: DMatrix<f64>| {
        let n = ctrl_rl_core::linalg::op_norm(&m);
        m / n
    };
    let da = unit(pattern(truth.dx(), truth.dx())) * (psi / 2.0);
    let db = unit(pattern(truth.dx(), truth.du())) * (psi / 2.0);
    ParameterPair {
        a: &truth.a + da,
        b: &truth.b + db,
    }
}
