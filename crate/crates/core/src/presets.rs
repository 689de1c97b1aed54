//! Built-in plant ensembles.

use nalgebra::DMatrix;

use crate::model::{
    ControllerModel, DetectorModel, DirectClosedLoop, PlantEnsemble, PlantModel, ProcessModel, StructuredPlant,
    UncertaintySpec,
};

pub const FOUR_STATE: &str = "paper-example-4state";
pub const ROBOT: &str = "paper-robot-6agent";

pub fn names() -> &'static [&'static str] {
    &[FOUR_STATE, ROBOT]
}

pub fn by_name(name: &str) -> Option<PlantEnsemble> {
    match name {
        FOUR_STATE => Some(four_state_example()),
        ROBOT => Some(robot_network()),
        _ => None,
    }
}

pub fn description(name: &str) -> Option<&'static str> {
    match name {
        FOUR_STATE => Some("4-state process, observer-based feedback, delta in [0, 3], four attackable actuators"),
        ROBOT => Some("6-agent single-integrator network, closed loop given directly, delta in [-1, 0]"),
        _ => None,
    }
}

/// Four-state uncertain process with `A(δ)₁₄ = δ`, `δ ∈ [0, 3]`.
///
/// The printed feedback and observer gains are the LQR (`Q = I`, `R = I`) and
/// Kalman (`Q = I`, `R = 1`) gains of `A(1.5)`, so the controller and detector
/// run on the mid-box model.
pub fn four_state_example() -> PlantEnsemble {
    let nominal = 1.5;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        -1.0, 0.0,  0.0, nominal,
         1.0, -5.0, 0.0, 0.0,
         1.0, 1.0, -9.0, 0.0,
        10.0, 1.0, 10.0, -1.0,
    ]);
    let mut e14 = DMatrix::zeros(4, 4);
    e14[(0, 3)] = 1.0;
    #[rustfmt::skip]
    let l = DMatrix::from_row_slice(4, 4, &[
        5.26, 0.44, 1.64, 1.99,
        0.44, 0.13, 0.14, 0.17,
        1.64, 0.14, 0.61, 0.68,
        1.99, 0.17, 0.68, 0.87,
    ]);
    let process = ProcessModel {
        a,
        b: DMatrix::identity(4, 4),
        c: DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 0.0]),
        c_perf: DMatrix::from_row_slice(1, 4, &[1.0, 1.0, 1.0, 1.0]),
        a_delta: vec![e14],
        b_delta: Vec::new(),
    };
    PlantEnsemble {
        name: FOUR_STATE.to_string(),
        model: PlantModel::Structured(StructuredPlant {
            process,
            controller: ControllerModel::ObserverFeedback { l },
            detector: DetectorModel { k: DMatrix::from_column_slice(4, 1, &[5.70, 0.70, 0.55, 15.28]), threshold: 1.0 },
        }),
        uncertainty: UncertaintySpec::interval(0.0, 3.0, nominal),
    }
}

/// Six agents on an uncertain undirected graph, `δ ∈ [-1, 0]`, `B_cl = I₆`.
pub fn robot_network() -> PlantEnsemble {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        -32.0,   4.0,   0.0,   3.0,   0.0,   5.0,
          4.0, -37.0,   3.0,   4.0,   4.0,   0.0,
          0.0,   3.0, -29.0,   2.0,   0.0,   0.0,
          3.0,   4.0,   2.0, -33.0,   3.0,   0.0,
          0.0,   4.0,   0.0,   3.0, -28.0,   1.0,
          5.0,   0.0,   0.0,   0.0,   1.0, -24.0,
    ]);
    let mut e = DMatrix::zeros(6, 6);
    for (i, j) in [(0, 0), (0, 5), (5, 0), (5, 5)] {
        e[(i, j)] = 1.0;
    }
    let mut c_p = DMatrix::zeros(1, 6);
    c_p[(0, 2)] = 1.0;
    let mut c_r = DMatrix::zeros(1, 6);
    c_r[(0, 5)] = 1.0;
    PlantEnsemble {
        name: ROBOT.to_string(),
        model: PlantModel::ClosedLoop(DirectClosedLoop {
            a,
            a_delta: vec![e],
            b_attack: DMatrix::identity(6, 6),
            c_p,
            c_r,
        }),
        uncertainty: UncertaintySpec::interval(-1.0, 0.0, 0.0),
    }
}
