//! Closed-loop Euler simulation of a platoon under one controller mode.

use serde::Serialize;

use crate::asif::{vanilla_cbf_step, FilterStatus};
use crate::dynamics::Vector;
use crate::error::Result;
use crate::harness::config::{ControllerMode, SimulationConfig};
use crate::harness::disturbance::{DisturbanceSignal, DEFAULT_SEGMENT};
use crate::platoon::{build_platoon, PlatoonModel};

/// States beyond this magnitude end the run as a blow-up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub state: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub u_desired: Vec<f64>,
    pub w: Vec<f64>,
    /// `Ψ(x)`; NaN outside the look-ahead mode.
    pub psi: f64,
    pub h: f64,
    pub status: FilterStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub mode: ControllerMode,
    pub vehicles: usize,
    pub edges: usize,
    pub z_limit: f64,
    /// Half-widths of the backup-set bounding box along each displacement.
    pub backup_extents: Vec<f64>,
    pub rows: Vec<TrajectoryRow>,
    /// Some recorded state has `|z_i| >= z_limit`.
    pub unsafe_entered: bool,
    /// The state diverged and the record was truncated.
    pub blowup: bool,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn displacements(&self, k: usize) -> &[f64] {
        &self.rows[k].state[self.vehicles..]
    }

    pub fn max_abs_displacement(&self) -> f64 {
        (0..self.len())
            .flat_map(|k| self.displacements(k).iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }

    pub fn min_h(&self) -> f64 {
        self.rows.iter().map(|r| r.h).fold(f64::INFINITY, f64::min)
    }

    pub fn count_status(&self, status: FilterStatus) -> usize {
        self.rows.iter().filter(|r| r.status == status).count()
    }
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let model = build_platoon(&cfg.platoon)?;
    run_with_model(cfg, &model)
}

/// Same as [`run_simulation`], reusing an already built model.
pub fn run_with_model(cfg: &SimulationConfig, model: &PlatoonModel) -> Result<TrajectoryRecord> {
    let filter = model.asif_filter(cfg.dt_embed)?;
    let signal = DisturbanceSignal::new(
        cfg.seed,
        model.disturbance_set(),
        cfg.horizon,
        DEFAULT_SEGMENT,
    )?;
    let (nv, ne) = (model.vehicles(), model.edges());
    let bbox = &model.policy.bounding_box;
    let mut record = TrajectoryRecord {
        mode: cfg.controller_mode,
        vehicles: nv,
        edges: ne,
        z_limit: cfg.platoon.z_limit,
        backup_extents: (nv..nv + ne).map(|i| bbox.upper()[i]).collect(),
        rows: Vec::with_capacity(cfg.row_count()),
        unsafe_entered: false,
        blowup: false,
    };

    let mut x = cfg.initial_state();
    let rows = cfg.row_count();
    for k in 0..rows {
        let t = k as f64 * cfg.dt;
        if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_LIMIT) {
            record.blowup = true;
            break;
        }
        let u_d = cfg.desired_input.eval(t, ne);
        let (u, psi, status) = match cfg.controller_mode {
            ControllerMode::DesiredOnly => (u_d.clone(), f64::NAN, FilterStatus::Raw),
            ControllerMode::BackupOnly => (model.policy.control(&x), f64::NAN, FilterStatus::Raw),
            ControllerMode::VanillaCbf => {
                let d = vanilla_cbf_step(&x, &u_d, &model.policy, &model.system)?;
                (d.u, f64::NAN, d.status)
            }
            ControllerMode::Asif => {
                let d = filter.step(&x, &u_d)?;
                (d.u, d.psi, d.status)
            }
        };
        let w = signal.eval(t);
        record.unsafe_entered |= model.unsafe_set.contains(&x);
        record.rows.push(TrajectoryRow {
            time: t,
            state: x.iter().copied().collect(),
            u_applied: u.iter().copied().collect(),
            u_desired: u_d.iter().copied().collect(),
            w: w.iter().copied().collect(),
            psi,
            h: model.barrier_value(&x),
            status,
        });
        if k + 1 < rows {
            let dx: Vector = model.system.eval(&x, &u, &w)?;
            x += dx * cfg.dt;
        }
    }
    Ok(record)
}
