//! Time stepping: the per-step fixed-point loop over the electrostatic,
//! ionic and fluid sub-problems, the step-size controller, and the run loop
//! with its wall-approach stopping event.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{dissipation_rate, electric_power, kinetic_energy, strain_dissipation_rate};
use crate::error::{Error, Result};
use crate::fluid::{advect_diffuse, electric_momentum_source, project_constrained, ForceConvention, WallCondition};
use crate::geometry::{
    advance_pose, build_phase_map, gap_to_wall, transport_fixed_charge, PhaseMap, PhaseParams, RigidPose, ShapeSpec,
};
use crate::grid::{Grid, MacField, ScalarField};
use crate::nernst_planck::{np_stable_dt, redistribute_covered, step_np, total_moles, SpeciesParams};
use crate::poisson::{assemble_rhs, electrostatic_energy, solve_poisson, ElectrostaticBC};

/// Material and physical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub kappa1: f64,
    pub kappa2: f64,
    pub eta: f64,
    pub mu_p: f64,
    pub mu_f: f64,
    pub e: f64,
    pub kbt: f64,
    pub force_convention: ForceConvention,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            kappa1: 1.0,
            kappa2: 1.0,
            eta: 1.0,
            mu_p: 1.0,
            mu_f: 1.0,
            e: 1.0,
            kbt: 1.0,
            force_convention: ForceConvention::PerMass,
        }
    }
}

impl Physics {
    pub fn phase_params(&self) -> PhaseParams {
        PhaseParams { kappa1: self.kappa1, kappa2: self.kappa2, mu_p: self.mu_p, mu_f: self.mu_f }
    }

    pub fn e_over_kbt(&self) -> f64 {
        self.e / self.kbt
    }
}

/// Solver tolerances and run-loop controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub t_end: f64,
    /// Snapshot cadence in simulated time; 0 keeps only the first and last.
    pub snapshot_every: f64,
    pub picard_tol: f64,
    pub max_iter: usize,
    pub safety: f64,
    pub gamma_min: f64,
    pub projection_tol: f64,
    pub poisson_tol: f64,
    pub damping: f64,
    /// Extra factor applied to the controller's step.
    pub dt_factor: f64,
    pub max_steps: usize,
}

impl Controls {
    pub fn defaults(grid: &Grid) -> Self {
        Controls {
            t_end: 1.0,
            snapshot_every: 0.0,
            picard_tol: 1e-8,
            max_iter: 25,
            safety: 0.5,
            gamma_min: 2.0 * grid.h,
            projection_tol: 1e-10,
            poisson_tol: 1e-10,
            damping: 1.0,
            dt_factor: 1.0,
            max_steps: 1_000_000,
        }
    }
}

/// Everything that stays fixed during a run.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid,
    pub shape: ShapeSpec,
    pub physics: Physics,
    pub species: Vec<SpeciesParams>,
    pub bc: ElectrostaticBC,
    /// Fixed charge density in the reference (initial) configuration.
    pub rho0: ScalarField,
    pub controls: Controls,
}

/// Accumulated energy integrals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub e_d: f64,
    pub e_p: f64,
    pub e_d_strain: f64,
    pub e_d_dd: f64,
}

/// The evolving coupled state.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub step: usize,
    pub pose: RigidPose,
    pub psi: ScalarField,
    pub n: Vec<ScalarField>,
    pub u: MacField,
    pub p: ScalarField,
    pub rho: ScalarField,
    pub phase: PhaseMap,
    pub totals: Totals,
    /// Energy residual of the last step.
    pub residual: f64,
    /// Fixed-point sweeps used by the last step.
    pub picard_iters: usize,
}

impl Model {
    /// Builds the t = 0 state: particle at rest at `center`, fluid at rest,
    /// ions given (cells inside the body are cleared into the fluid), and the
    /// matching potential.
    pub fn initial_state(&self, center: [f64; 2], n0: Vec<ScalarField>) -> Result<SimState> {
        let grid = &self.grid;
        if n0.len() != self.species.len() {
            return Err(Error::InvariantViolation("one initial concentration per species is required".into()));
        }
        let pose = RigidPose::at_rest(center);
        let phase = build_phase_map(&pose, &self.shape, grid, self.physics.phase_params())?;
        let rho = transport_fixed_charge(&self.rho0, &pose, &phase, grid)?;
        let mut n = n0;
        for ni in n.iter_mut() {
            if !ni.matches(grid) {
                return Err(Error::InvariantViolation("initial concentration does not match the grid".into()));
            }
            redistribute_covered(ni, &phase, grid);
        }
        let rhs = assemble_rhs(&n, &self.species, &rho, &phase.chi_fluid(), self.physics.e)?;
        let (psi, _) = solve_poisson(grid, &phase.kappa_face, &rhs, &self.bc, self.controls.poisson_tol, None)?;
        Ok(SimState {
            t: 0.0,
            step: 0,
            pose,
            psi,
            n,
            u: MacField::zeros(grid),
            p: ScalarField::zeros(grid),
            rho,
            phase,
            totals: Totals::default(),
            residual: 0.0,
            picard_iters: 0,
        })
    }

    /// Rebuilds the derived geometry fields of a state from its pose.
    pub fn rebuild_phase(&self, pose: &RigidPose) -> Result<PhaseMap> {
        build_phase_map(pose, &self.shape, &self.grid, self.physics.phase_params())
    }
}

/// Outcome of the fixed-point loop for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Residual after each sweep.
    pub trace: Vec<f64>,
}

impl PicardReport {
    /// Geometric mean of successive residual ratios, over the sweeps whose
    /// residual is still above rounding level.
    pub fn contraction(&self) -> Option<f64> {
        let useful: Vec<f64> = self.trace.iter().copied().filter(|r| *r > 1e-13).collect();
        if useful.len() < 2 {
            return None;
        }
        let n = (useful.len() - 1) as f64;
        Some((useful[useful.len() - 1] / useful[0]).powf(1.0 / n))
    }
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let mut d = 0.0;
    let mut s = 0.0;
    for (a, b) in new.iter().zip(old) {
        d += (a - b) * (a - b);
        s += a * a;
    }
    if d == 0.0 {
        0.0
    } else {
        (d / s.max(f64::MIN_POSITIVE)).sqrt()
    }
}

fn blend(old: &[f64], new: &[f64], theta: f64) -> Vec<f64> {
    if theta == 1.0 {
        return new.to_vec();
    }
    old.iter().zip(new).map(|(o, n)| o + theta * (n - o)).collect()
}

/// Advances `state` by `dt`: fixed-point sweeps over (Poisson with frozen
/// ions and geometry) -> (Nernst-Planck with frozen potential and velocity)
/// -> (momentum predictor with frozen advecting velocity, then the joint
/// incompressible/rigid projection), then one geometry update with the
/// converged rigid motion.
pub fn picard_step(model: &Model, state: &SimState, dt: f64) -> Result<(SimState, PicardReport)> {
    let grid = &model.grid;
    let ph = &model.physics;
    let ctl = &model.controls;
    let phase = &state.phase;
    let chi_fluid = phase.chi_fluid();
    let theta = ctl.damping;

    let mut psi_k = state.psi.clone();
    let mut n_k = state.n.clone();
    let mut u_k = state.u.clone();
    let mut p_k = state.p.clone();
    let mut source_k = MacField::zeros(grid);
    let mut rigid = [state.pose.v_c[0], state.pose.v_c[1], state.pose.w];
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..ctl.max_iter.max(1) {
        // P1
        let rhs = assemble_rhs(&n_k, &model.species, &state.rho, &chi_fluid, ph.e)?;
        let (psi_new, _) = solve_poisson(grid, &phase.kappa_face, &rhs, &model.bc, ctl.poisson_tol, Some(&psi_k))?;
        // P2
        let mut n_new = Vec::with_capacity(n_k.len());
        for (ni, sp) in state.n.iter().zip(&model.species) {
            n_new.push(step_np(ni, &u_k, &psi_new, *sp, phase, dt, ph.e_over_kbt(), grid)?);
        }
        // P3
        let source = electric_momentum_source(&psi_new, phase, ph.kappa2, ph.mu_f, ph.force_convention, grid);
        let u_star = advect_diffuse(&state.u, &u_k, &phase.mu_face, &source, ph.eta, WallCondition::NoSlip, dt, grid)?;
        let proj = project_constrained(&u_star, phase, &state.pose, dt, ctl.projection_tol, grid, Some(&p_k))?;

        let mut r = rel_change(&proj.u.u, &u_k.u).max(rel_change(&proj.u.v, &u_k.v));
        r = r.max(rel_change(&psi_new.data, &psi_k.data));
        for (a, b) in n_new.iter().zip(&n_k) {
            r = r.max(rel_change(&a.data, &b.data));
        }
        trace.push(r);

        let fit = proj.rigid.unwrap_or(rigid);
        u_k = MacField { u: blend(&u_k.u, &proj.u.u, theta), v: blend(&u_k.v, &proj.u.v, theta), ..proj.u };
        psi_k = ScalarField { data: blend(&psi_k.data, &psi_new.data, theta), ..psi_new };
        n_k = n_k.iter().zip(n_new).map(|(o, n)| ScalarField { data: blend(&o.data, &n.data, theta), ..n }).collect();
        for (rv, fv) in rigid.iter_mut().zip(fit) {
            *rv += theta * (fv - *rv);
        }
        p_k = proj.p;
        source_k = source;
        if r <= ctl.picard_tol {
            converged = true;
            break;
        }
    }
    let report = PicardReport {
        iterations: trace.len(),
        final_residual: trace.last().copied().unwrap_or(0.0),
        converged,
        trace: trace.clone(),
    };
    if !converged {
        return Err(Error::Picard { iterations: trace.len(), trace });
    }

    // Energy bookkeeping over [t, t + dt], midpoint in time.
    let e_k_old = kinetic_energy(&state.u, &phase.mu_face, grid);
    let mut u_mid = state.u.clone();
    u_mid.axpy(1.0, &u_k);
    for x in u_mid.u.iter_mut().chain(u_mid.v.iter_mut()) {
        *x *= 0.5;
    }
    let strain = strain_dissipation_rate(&u_mid, phase, ph.eta, grid);
    let totals = Totals {
        e_d: state.totals.e_d + dt * dissipation_rate(&u_mid, ph.eta, grid),
        e_p: state.totals.e_p + dt * electric_power(&source_k, &u_mid, grid),
        e_d_strain: state.totals.e_d_strain + dt * strain,
        e_d_dd: state.totals.e_d_dd + dt * 0.5 * strain,
    };

    let moving = RigidPose { v_c: [rigid[0], rigid[1]], w: rigid[2], ..state.pose };
    let pose = advance_pose(&moving, dt);
    let new_phase = model.rebuild_phase(&pose)?;
    for ni in n_k.iter_mut() {
        redistribute_covered(ni, &new_phase, grid);
    }
    let rho = transport_fixed_charge(&model.rho0, &pose, &new_phase, grid)?;
    let e_k_new = kinetic_energy(&u_k, &new_phase.mu_face, grid);
    let residual = (e_k_new - e_k_old) + (totals.e_d - state.totals.e_d) - (totals.e_p - state.totals.e_p);

    let next = SimState {
        t: state.t + dt,
        step: state.step + 1,
        pose,
        psi: psi_k,
        n: n_k,
        u: u_k,
        p: p_k,
        rho,
        phase: new_phase,
        totals,
        residual,
        picard_iters: report.iterations,
    };
    Ok((next, report))
}

/// Largest entry of the discrete velocity gradient.
pub fn max_velocity_gradient(u: &MacField, grid: &Grid) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let h = grid.h;
    let mut m = 0.0_f64;
    for j in 0..ny {
        for i in 0..nx {
            m = m.max((u.u_at(i + 1, j) - u.u_at(i, j)).abs()).max((u.v_at(i, j + 1) - u.v_at(i, j)).abs());
        }
    }
    for j in 0..ny.saturating_sub(1) {
        for i in 0..=nx {
            m = m.max((u.u_at(i, j + 1) - u.u_at(i, j)).abs());
        }
    }
    for j in 0..=ny {
        for i in 0..nx.saturating_sub(1) {
            m = m.max((u.v_at(i + 1, j) - u.v_at(i, j)).abs());
        }
    }
    m / h
}

/// Components of the step-size bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtBounds {
    pub ions: f64,
    pub convective: f64,
    pub viscous: f64,
    /// `max|grad u| dt <= 1/3`: the flow map stays close to the identity.
    pub deformation: f64,
}

impl DtBounds {
    pub fn min(&self) -> f64 {
        self.ions.min(self.convective).min(self.viscous).min(self.deformation)
    }
}

pub fn dt_bounds(model: &Model, state: &SimState) -> DtBounds {
    let grid = &model.grid;
    let ph = &model.physics;
    let ions = model
        .species
        .iter()
        .map(|sp| np_stable_dt(&state.u, &state.psi, *sp, &state.phase, ph.e_over_kbt(), grid))
        .fold(f64::INFINITY, f64::min);
    let umax = state.u.max_abs();
    let convective = if umax > 0.0 { grid.h / umax } else { f64::INFINITY };
    let mu_min = ph.mu_p.min(ph.mu_f);
    let viscous = mu_min * grid.h * grid.h / (4.0 * ph.eta);
    let g = max_velocity_gradient(&state.u, grid);
    let deformation = if g > 0.0 { 1.0 / (3.0 * g) } else { f64::INFINITY };
    DtBounds { ions, convective, viscous, deformation }
}

/// `dt = safety * dt_factor * min(ion bound, CFL, viscous, deformation)`.
pub fn choose_dt(model: &Model, state: &SimState) -> f64 {
    model.controls.safety * model.controls.dt_factor * dt_bounds(model, state).min()
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EndTime,
    /// The particle reached the minimum wall gap.
    TStar,
    MaxSteps,
}

/// Something that happened during a run, recorded in `events.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent {
    /// The fixed-point loop (or the explicit ion update) failed; dt was halved.
    StepRetry {
        t: f64,
        dt: f64,
        reason: String,
        residual_trace: Vec<f64>,
    },
    /// The step was shortened so the gap lands on the floor.
    StepTruncated {
        t: f64,
        dt: f64,
        gap: f64,
    },
    TStar {
        t: f64,
        gap: f64,
        gamma_min: f64,
    },
    Finished {
        t: f64,
        steps: usize,
        reason: StopReason,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub reason: StopReason,
    pub t_final: f64,
    pub steps: usize,
    pub events: Vec<RunEvent>,
}

/// Receives the output of a run.
pub trait RunObserver {
    /// Called for the initial state and after every accepted step.
    fn on_step(&mut self, model: &Model, state: &SimState) -> Result<()>;
    /// Called at the snapshot cadence, and for the first and last state.
    fn on_snapshot(&mut self, model: &Model, state: &SimState) -> Result<()>;
    fn on_event(&mut self, _event: &RunEvent) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullObserver;

impl RunObserver for NullObserver {
    fn on_step(&mut self, _: &Model, _: &SimState) -> Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _: &Model, _: &SimState) -> Result<()> {
        Ok(())
    }
}

const MAX_RETRIES: usize = 8;

fn step_with_retries(
    model: &Model,
    state: &SimState,
    dt: f64,
    events: &mut Vec<RunEvent>,
    observer: &mut dyn RunObserver,
) -> Result<(SimState, f64)> {
    let mut dt = dt;
    let mut attempt = 0;
    loop {
        match picard_step(model, state, dt) {
            Ok((next, _)) => return Ok((next, dt)),
            Err(err @ (Error::Picard { .. } | Error::Stability(_))) if attempt < MAX_RETRIES => {
                let trace = match &err {
                    Error::Picard { trace, .. } => trace.clone(),
                    _ => Vec::new(),
                };
                let ev = RunEvent::StepRetry { t: state.t, dt, reason: err.to_string(), residual_trace: trace };
                observer.on_event(&ev)?;
                events.push(ev);
                dt *= 0.5;
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Runs from `state` until `t_end`, the wall-gap floor, or `max_steps`.
/// No emitted state ever has a gap below `gamma_min`.
pub fn run(model: &Model, initial: SimState, observer: &mut dyn RunObserver) -> Result<(SimState, RunResult)> {
    let ctl = &model.controls;
    let grid = &model.grid;
    let mut events = Vec::new();
    let mut state = initial;
    observer.on_step(model, &state)?;
    observer.on_snapshot(model, &state)?;
    let mut next_snapshot = if ctl.snapshot_every > 0.0 { state.t + ctl.snapshot_every } else { f64::INFINITY };
    let mut last_snapshot_step = state.step;
    let end_tol = 1e-12 * ctl.t_end.abs().max(1.0);

    let reason = loop {
        if state.t >= ctl.t_end - end_tol {
            break StopReason::EndTime;
        }
        if state.step >= ctl.max_steps {
            break StopReason::MaxSteps;
        }
        let dt = choose_dt(model, &state).min(ctl.t_end - state.t);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Stability(format!("step-size controller returned {dt}")));
        }
        let gap_old = gap_to_wall(&state.pose, &model.shape, grid);
        let (mut next, used_dt) = step_with_retries(model, &state, dt, &mut events, observer)?;
        let gap_new = gap_to_wall(&next.pose, &model.shape, grid);
        let mut hit_floor = false;
        if gap_new < ctl.gamma_min {
            // Shorten the step so the gap lands on the floor; the rigid
            // velocity depends weakly on dt, so shrink until it does.
            let mut accepted = None;
            if gap_old > gap_new {
                let mut frac = (gap_old - ctl.gamma_min) / (gap_old - gap_new);
                for _ in 0..20 {
                    let dt_short = used_dt * frac;
                    if !(dt_short > 1e-14 * used_dt) {
                        break;
                    }
                    let (cand, _) = picard_step(model, &state, dt_short)?;
                    let g = gap_to_wall(&cand.pose, &model.shape, grid);
                    if g >= ctl.gamma_min {
                        let ev = RunEvent::StepTruncated { t: state.t, dt: dt_short, gap: g };
                        observer.on_event(&ev)?;
                        events.push(ev);
                        accepted = Some(cand);
                        break;
                    }
                    frac *= 0.9;
                }
            }
            match accepted {
                Some(cand) => {
                    next = cand;
                    hit_floor = true;
                }
                None => {
                    let ev = RunEvent::TStar {
                        t: state.t,
                        gap: gap_to_wall(&state.pose, &model.shape, grid),
                        gamma_min: ctl.gamma_min,
                    };
                    observer.on_event(&ev)?;
                    events.push(ev);
                    break StopReason::TStar;
                }
            }
        }
        state = next;
        observer.on_step(model, &state)?;
        if state.t >= next_snapshot - end_tol {
            observer.on_snapshot(model, &state)?;
            last_snapshot_step = state.step;
            while next_snapshot <= state.t + end_tol {
                next_snapshot += ctl.snapshot_every;
            }
        }
        if hit_floor {
            let ev = RunEvent::TStar {
                t: state.t,
                gap: gap_to_wall(&state.pose, &model.shape, grid),
                gamma_min: ctl.gamma_min,
            };
            observer.on_event(&ev)?;
            events.push(ev);
            break StopReason::TStar;
        }
    };
    if last_snapshot_step != state.step {
        observer.on_snapshot(model, &state)?;
    }
    let ev = RunEvent::Finished { t: state.t, steps: state.step, reason };
    observer.on_event(&ev)?;
    events.push(ev);
    let result = RunResult { reason, t_final: state.t, steps: state.step, events };
    Ok((state, result))
}

/// Quantities reported for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    pub e_k: f64,
    pub e_d: f64,
    pub e_p: f64,
    pub e_el: f64,
    pub residual: f64,
    pub moles: Vec<f64>,
    pub total_fixed_charge: f64,
    pub gap: f64,
    pub x_c: f64,
    pub y_c: f64,
    pub theta: f64,
    pub v_cx: f64,
    pub v_cy: f64,
    pub w: f64,
    pub picard_iters: usize,
    pub e_d_strain: f64,
    pub e_d_dd: f64,
}

pub fn diagnostic_row(model: &Model, state: &SimState) -> Result<DiagnosticRow> {
    let grid = &model.grid;
    let phase = &state.phase;
    let rhs = assemble_rhs(&state.n, &model.species, &state.rho, &phase.chi_fluid(), model.physics.e)?;
    Ok(DiagnosticRow {
        t: state.t,
        e_k: kinetic_energy(&state.u, &phase.mu_face, grid),
        e_d: state.totals.e_d,
        e_p: state.totals.e_p,
        e_el: electrostatic_energy(&state.psi, &phase.kappa_face, &model.bc, &rhs, grid),
        residual: state.residual,
        moles: state.n.iter().map(|n| total_moles(n, phase, grid)).collect(),
        total_fixed_charge: state.rho.integral(grid),
        gap: gap_to_wall(&state.pose, &model.shape, grid),
        x_c: state.pose.x_c[0],
        y_c: state.pose.x_c[1],
        theta: state.pose.theta,
        v_cx: state.pose.v_c[0],
        v_cy: state.pose.v_c[1],
        w: state.pose.w,
        picard_iters: state.picard_iters,
        e_d_strain: state.totals.e_d_strain,
        e_d_dd: state.totals.e_d_dd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: usize) -> Model {
        let grid = Grid::new(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
        Model {
            grid,
            shape: ShapeSpec::Disk { radius: 0.25 },
            physics: Physics::default(),
            species: vec![SpeciesParams { z: 1, d: 1.0 }, SpeciesParams { z: -1, d: 1.0 }],
            bc: ElectrostaticBC::constant(&grid, 0.0),
            rho0: ScalarField::zeros(&grid),
            controls: Controls { t_end: 0.01, ..Controls::defaults(&grid) },
        }
    }

    #[test]
    fn quiescent_state_is_a_fixed_point() {
        let m = model(24);
        let n0 = vec![ScalarField::filled(&m.grid, 1.0), ScalarField::filled(&m.grid, 1.0)];
        let s = m.initial_state([0.0, 0.0], n0).unwrap();
        let dt = choose_dt(&m, &s);
        let (next, rep) = picard_step(&m, &s, dt).unwrap();
        // Covered-cell ions were pushed into the ring around the body, so the
        // ions diffuse; neutral pairs with equal diffusivity carry no charge.
        assert!(rep.converged && rep.iterations <= 2, "{rep:?}");
        assert!(next.u.max_abs() < 1e-12);
        assert_eq!(next.pose.x_c, s.pose.x_c);

        let empty = m.initial_state([0.0, 0.0], vec![ScalarField::zeros(&m.grid); 2]).unwrap();
        let (next, rep) = picard_step(&m, &empty, dt).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(next.n, empty.n);
    }

    #[test]
    fn dt_controller_examples() {
        let m = model(20);
        let n0 = vec![ScalarField::filled(&m.grid, 1.0), ScalarField::filled(&m.grid, 1.0)];
        let mut s = m.initial_state([0.0, 0.0], n0).unwrap();
        let b = dt_bounds(&m, &s);
        assert!(b.convective.is_infinite() && b.deformation.is_infinite());
        assert_eq!(b.min(), b.ions.min(b.viscous));
        // max |grad u| = 10 => deformation bound 1/30
        s.u = MacField::from_fn(&m.grid, |p| [10.0 * p[1], 0.0]);
        let b = dt_bounds(&m, &s);
        assert!((b.deformation - 1.0 / 30.0).abs() < 1e-12);
        // halving h halves the convective bound
        let m2 = model(40);
        let mut s2 = m2.initial_state([0.0, 0.0], vec![ScalarField::filled(&m2.grid, 1.0); 2]).unwrap();
        s.u = MacField::filled(&m.grid, 2.0);
        s2.u = MacField::filled(&m2.grid, 2.0);
        let (c1, c2) = (dt_bounds(&m, &s).convective, dt_bounds(&m2, &s2).convective);
        assert!((c1 / c2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_end_time_returns_initial_state() {
        let mut m = model(16);
        m.controls.t_end = 0.0;
        let s = m.initial_state([0.0, 0.0], vec![ScalarField::zeros(&m.grid); 2]).unwrap();
        struct Count(usize, usize);
        impl RunObserver for Count {
            fn on_step(&mut self, _: &Model, _: &SimState) -> Result<()> {
                self.0 += 1;
                Ok(())
            }
            fn on_snapshot(&mut self, _: &Model, _: &SimState) -> Result<()> {
                self.1 += 1;
                Ok(())
            }
        }
        let mut c = Count(0, 0);
        let (end, res) = run(&m, s, &mut c).unwrap();
        assert_eq!((c.0, c.1), (1, 1));
        assert_eq!(res.reason, StopReason::EndTime);
        assert_eq!(end.step, 0);
    }
}
