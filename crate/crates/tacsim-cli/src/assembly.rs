//! Scripted desk assembly: locate the plate edge, scan its length, grasp the
//! column gently, null the grasp torque, descend to contact, probe the load
//! profile, and place the column at the strongest point.
//!
//! Every frame is logged with its phase tag; `replay_report` re-derives each
//! phase predicate from the log alone, so a successful report can be audited
//! without rerunning the simulation.

use tacsim_core::rng::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tacsim_core::percept::{torque_from_field, TorqueEstimate};
use tacsim_core::rig::scenario::{plate_load_stream, AssemblyWorld};
use tacsim_core::rig::{step_plant, AppliedWrench, PlantState, SkinModel};
use tacsim_core::rng::seeded_rng;
use tacsim_core::skills::{
    arm_rot_step, gentle_grasp, leaky_step, object_track_step, vis_scan, GentleGraspConfig,
    LeakyConfig, ObjectTrackConfig, SkillCommand, SkillObs, VisScanConfig,
};
use tacsim_core::{
    CoreError, DisplacementField, FieldEntry, ForceEstimate, ObjectPercept, SensorGeometry,
    SlipSignal, TactilePipeline,
};

use crate::config::{CliError, CliResult};
use crate::logio::{read_episode_bytes, Extra, FrameRecord, LogHeader, LogWriter};
use crate::probe::probe_max_load;
use crate::runs::DT;

pub const VARIANTS: &[&str] = &["default", "stuck-column", "no-object"];

pub const PHASES: &[&str] =
    &["locate", "scan", "grasp", "arm", "descend", "probe", "place"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblyCfg {
    pub seed: u64,
    pub variant: String,
    /// Negative selects the default; torque feedback needs quiet skin.
    pub noise_sigma: f64,
    /// Starting end-effector x, mm; left of the plate edge.
    pub start_x: f64,
    pub warmup: usize,
    pub locate_timeout: usize,
    /// Area band around the half-window set point, px^2.
    pub locate_band: f64,
    pub locate_hold: u32,
    /// Scan settings; `area_floor <= 0` selects the half-window area.
    pub scan: VisScanConfig,
    pub grasp: GentleGraspConfig,
    pub arm_k_tau: f64,
    pub arm_eps_tau: f64,
    pub arm_stop_frames: u32,
    /// Stall latch: raw torque quiet while the filtered one still reads
    /// above this many eps.
    pub arm_stall_jump: f64,
    pub arm_timeout: usize,
    pub descend_speed: f64,
    /// Normal-force reading that counts as contact.
    pub descend_threshold: f64,
    pub descend_frames: u32,
    pub descend_timeout: usize,
    pub probe_samples: usize,
    pub probe_noise_rel: f64,
    pub probe_window: usize,
    pub place_speed: f64,
    pub place_tol: f64,
    pub release_target: f64,
    /// Fraction of the release target the gripper must reach.
    pub release_frac: f64,
    pub place_timeout: usize,
    pub leak: LeakyConfig,
}

impl Default for AssemblyCfg {
    fn default() -> Self {
        Self {
            seed: 0,
            variant: "default".into(),
            noise_sigma: -1.0,
            start_x: 20.0,
            warmup: 5,
            locate_timeout: 400,
            locate_band: 800.0,
            locate_hold: 5,
            scan: VisScanConfig {
                velocity: [10.0, 0.0, 0.0],
                area_floor: 0.0,
                debounce: 3,
                max_frames: 250,
            },
            grasp: GentleGraspConfig::default(),
            arm_k_tau: 0.05,
            arm_eps_tau: 0.5,
            arm_stop_frames: 5,
            arm_stall_jump: 16.0,
            arm_timeout: 300,
            descend_speed: 10.0,
            descend_threshold: 0.4,
            descend_frames: 3,
            descend_timeout: 150,
            probe_samples: 101,
            probe_noise_rel: 0.02,
            probe_window: 5,
            place_speed: 15.0,
            place_tol: 0.05,
            release_target: 60.0,
            release_frac: 0.99,
            place_timeout: 200,
            leak: LeakyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub frames: u64,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub schema: String,
    pub variant: String,
    pub seed: u64,
    pub success: bool,
    pub phases: Vec<PhaseReport>,
    pub located_x: Option<f64>,
    pub scan_extent: Option<f64>,
    pub grasp_force: Option<f64>,
    pub final_rotation: Option<f64>,
    pub possible_stall: Option<bool>,
    pub contact_z: Option<f64>,
    pub chosen_load_x: Option<f64>,
    pub world_load_peak_x: f64,
}

impl AssemblyReport {
    fn new(cfg: &AssemblyCfg, world: &AssemblyWorld) -> Self {
        Self {
            schema: "tacsim.assembly-report.v1".into(),
            variant: cfg.variant.clone(),
            seed: cfg.seed,
            success: false,
            phases: Vec::new(),
            located_x: None,
            scan_extent: None,
            grasp_force: None,
            final_rotation: None,
            possible_stall: None,
            contact_z: None,
            chosen_load_x: None,
            world_load_peak_x: world.load_peak_x(),
        }
    }

    fn phase_done(&mut self, name: &str, frames: u64, error: Option<String>) {
        self.phases
            .push(PhaseReport { name: name.into(), frames, success: error.is_none(), error });
    }
}

pub fn variant_world(variant: &str) -> CliResult<(AssemblyWorld, bool)> {
    let world = AssemblyWorld::default();
    match variant {
        "default" => Ok((world, true)),
        "stuck-column" => Ok((AssemblyWorld { column_stiction: 0.3, ..world }, true)),
        "no-object" => Ok((world, false)),
        other => Err(CliError::Usage(format!(
            "unknown variant name: {other}; known variants: {}",
            VARIANTS.join(", ")
        ))),
    }
}

#[derive(Clone, Copy)]
enum Scene {
    Plate,
    Column,
}

struct Rig {
    world: AssemblyWorld,
    plate_present: bool,
    geometry: SensorGeometry,
    pipeline: TactilePipeline,
    plant: PlantState,
    rng: ChaCha8Rng,
    writer: LogWriter,
    frame: u64,
}

impl Rig {
    fn log_obs(&mut self, phase: &str, obs: &SkillObs, cmd: &SkillCommand) {
        let mut rec = FrameRecord::from_obs(self.frame, self.frame as f64 * DT, obs, cmd);
        rec.extra = Some(Extra::Assembly { phase: phase.into() });
        self.writer.push(&rec).expect("log records serialize");
        self.frame += 1;
    }

    fn step_env(&mut self, phase: &str, scene: Scene, cmd: &SkillCommand) -> SkillObs {
        self.plant = step_plant(&self.plant, cmd, DT).expect("skill commands are finite");
        let (wrench, object) = match scene {
            Scene::Plate => {
                let object = if self.plate_present {
                    self.world.plate_object(self.plant.ee_position[0], &self.geometry)
                } else {
                    None
                };
                (AppliedWrench::ZERO, object)
            }
            Scene::Column => {
                let squeeze = (self.world.column_width - self.plant.gripper_opening).max(0.0);
                let mut w = self.world.pinch_wrench(self.plant.gripper_opening);
                if squeeze > 0.0 {
                    w.tau_z = self.world.column_torque(self.plant.ee_rotation);
                    w.f[2] += self.world.contact_force(self.plant.ee_position[2]);
                }
                // No silhouette: the column sits between the fingertips, so
                // the skin feels its wrench but the camera window stays
                // clear. Rendering it would slide textured background under
                // the markers and bias their centroids.
                (w, None)
            }
        };
        let obs = self
            .pipeline
            .observe(&wrench, object.as_ref(), self.plant, &mut self.rng)
            .expect("assembly wrenches stay inside saturation");
        self.log_obs(phase, &obs, cmd);
        obs
    }

    /// Torque recomputed from the pre-filter detections against the pinned
    /// rest positions. It leads the filtered estimate by the filter lag.
    fn raw_tau(&self) -> f64 {
        let entries = self
            .pipeline
            .last_raw
            .iter()
            .filter(|m| m.valid)
            .filter_map(|m| {
                let pin = self.pipeline.bank.track(m.marker_id)?.pin;
                Some(FieldEntry {
                    marker_id: m.marker_id,
                    dx: m.x - pin[0],
                    dy: m.y - pin[1],
                    size_ratio: m.s / pin[2],
                    stale: false,
                })
            })
            .collect();
        let field = DisplacementField { frame: 0, entries };
        torque_from_field(&field, &self.geometry).map_or(0.0, |t| t.tau_z)
    }
}

fn locate(rig: &mut Rig, cfg: &AssemblyCfg) -> Result<f64, String> {
    let ot = ObjectTrackConfig {
        swap_axes: true,
        m_eps: rig.world.half_window_area(),
        ..ObjectTrackConfig::default()
    };
    let center = rig.geometry.image_center();
    let mut obs = rig.step_env("locate", Scene::Plate, &SkillCommand::ZERO);
    let mut hold = 0u32;
    for _ in 0..cfg.locate_timeout {
        if !obs.object.present {
            return Err(CoreError::NothingToScan.to_string());
        }
        let out = object_track_step(&obs.object, &ot, center, DT);
        obs = rig.step_env("locate", Scene::Plate, &out.command);
        if (obs.object.m - ot.m_eps).abs() < cfg.locate_band {
            hold += 1;
        } else {
            hold = 0;
        }
        if hold >= cfg.locate_hold {
            return Ok(rig.plant.ee_position[0]);
        }
    }
    Err(CoreError::Timeout { max_frames: cfg.locate_timeout }.to_string())
}

fn scan(rig: &mut Rig, cfg: &AssemblyCfg) -> Result<f64, String> {
    let mut sc = cfg.scan;
    if sc.area_floor <= 0.0 {
        sc.area_floor = rig.world.half_window_area();
    }
    let res = {
        let mut env = |cmd: &SkillCommand| rig.step_env("scan", Scene::Plate, cmd);
        vis_scan(&mut env, &sc).map_err(|e| e.to_string())?
    };
    if res.hit_limit {
        return Err("scan ran to the frame limit without leaving the plate".into());
    }
    Ok(res.extent)
}

fn grasp(rig: &mut Rig, cfg: &AssemblyCfg) -> Result<f64, String> {
    let res = {
        let mut env = |cmd: &SkillCommand| rig.step_env("grasp", Scene::Column, cmd);
        gentle_grasp(&mut env, &cfg.grasp).map_err(|e| e.to_string())?
    };
    let squeeze = (rig.world.column_width - res.final_opening).max(0.0);
    Ok(rig.world.pinch_gain * squeeze)
}

fn arm(rig: &mut Rig, cfg: &AssemblyCfg) -> Result<(f64, bool), String> {
    let mut obs = rig.step_env("arm", Scene::Column, &SkillCommand::ZERO);
    let mut hold = 0u32;
    let mut stall = false;
    for _ in 0..cfg.arm_timeout {
        let out = arm_rot_step(&TorqueEstimate { tau_z: obs.tau_z }, cfg.arm_k_tau, cfg.arm_eps_tau);
        obs = rig.step_env("arm", Scene::Column, &out.command);
        // A free column decays through null: the raw reading leads the
        // filtered one and both shrink together, so by the time the raw
        // torque goes quiet the filtered one is small too. A jammed column
        // lets go in a single frame, leaving the filter carrying a large
        // value over a silent skin; latch that divergence.
        if obs.tau_z.abs() >= cfg.arm_stall_jump * cfg.arm_eps_tau
            && rig.raw_tau().abs() < cfg.arm_eps_tau
        {
            stall = true;
        }
        if obs.tau_z.abs() >= cfg.arm_eps_tau {
            hold = 0;
        } else {
            hold += 1;
        }
        if hold >= cfg.arm_stop_frames {
            return Ok((rig.plant.ee_rotation, stall));
        }
    }
    Err(CoreError::Timeout { max_frames: cfg.arm_timeout }.to_string())
}

fn descend(rig: &mut Rig, cfg: &AssemblyCfg) -> Result<f64, String> {
    let cmd = SkillCommand {
        ee_velocity: [0.0, 0.0, -cfg.descend_speed],
        ..SkillCommand::ZERO
    };
    let mut above = 0u32;
    for _ in 0..cfg.descend_timeout {
        let obs = rig.step_env("descend", Scene::Column, &cmd);
        if obs.force.f[2] > cfg.descend_threshold {
            above += 1;
        } else {
            above = 0;
        }
        if above >= cfg.descend_frames {
            return Ok(rig.plant.ee_position[2]);
        }
    }
    Err(CoreError::Timeout { max_frames: cfg.descend_timeout }.to_string())
}

fn probe(rig: &mut Rig, cfg: &AssemblyCfg) -> Result<f64, String> {
    let samples = plate_load_stream(
        rig.world.load_profile(),
        cfg.probe_samples,
        cfg.probe_noise_rel,
        &rig.geometry,
        &rig.pipeline.skin,
        rig.pipeline.z_gain,
        &mut rig.rng,
    )
    .map_err(|e| e.to_string())?;
    // The probe pass rides a separate fixture: log its trace as frames with
    // the reading on the normal-force channel and the probe x on the plant.
    for s in &samples {
        let mut plant = rig.plant;
        plant.ee_position[0] = rig.world.plate_start + s.position * rig.world.plate_len;
        let obs = SkillObs {
            force: ForceEstimate { f: [0.0, 0.0, s.reading] },
            tau_z: 0.0,
            object: ObjectPercept::absent(),
            slip: SlipSignal { flow_magnitude: 0.0, active: false },
            grip: 0.0,
            plant,
        };
        rig.log_obs("probe", &obs, &SkillCommand::ZERO);
    }
    let best = probe_max_load(&samples, cfg.probe_window).map_err(|e| e.to_string())?;
    Ok(rig.world.plate_start + best.position * rig.world.plate_len)
}

fn place(rig: &mut Rig, cfg: &AssemblyCfg, target_x: f64) -> Result<(), String> {
    let mut reached = false;
    for _ in 0..cfg.place_timeout {
        let err = target_x - rig.plant.ee_position[0];
        if !reached && err.abs() <= cfg.place_tol {
            reached = true;
        }
        if !reached {
            let vx = (err / DT).clamp(-cfg.place_speed, cfg.place_speed);
            let cmd = SkillCommand { ee_velocity: [vx, 0.0, 0.0], ..SkillCommand::ZERO };
            rig.step_env("place", Scene::Column, &cmd);
            continue;
        }
        let opening = leaky_step(rig.plant.gripper_opening, -cfg.release_target, &cfg.leak);
        let cmd = SkillCommand { gripper_target: Some(opening), ..SkillCommand::ZERO };
        rig.step_env("place", Scene::Column, &cmd);
        if rig.plant.gripper_opening >= cfg.release_frac * cfg.release_target {
            return Ok(());
        }
    }
    Err(CoreError::Timeout { max_frames: cfg.place_timeout }.to_string())
}

pub fn run_assembly(cfg: &AssemblyCfg) -> CliResult<(AssemblyReport, Vec<u8>)> {
    let (world, plate_present) = variant_world(&cfg.variant)?;
    let sigma = if cfg.noise_sigma >= 0.0 { cfg.noise_sigma } else { 0.002 };
    let geometry = SensorGeometry::default();
    let skin = SkinModel { noise_sigma: sigma, ..SkinModel::default() };
    let mut report = AssemblyReport::new(cfg, &world);
    let mut plant = PlantState::at_rest(40.0);
    plant.ee_position = [cfg.start_x, 0.0, 0.0];
    let mut rig = Rig {
        world,
        plate_present,
        geometry: geometry.clone(),
        pipeline: TactilePipeline::new(geometry, skin),
        plant,
        rng: seeded_rng(cfg.seed),
        writer: LogWriter::new(&LogHeader::episode("assembly", &cfg.variant, cfg.seed, DT))?,
        frame: 0,
    };
    for _ in 0..cfg.warmup {
        rig.pipeline.step(&AppliedWrench::ZERO, None, &mut rig.rng)?;
    }

    macro_rules! run_phase {
        ($name:literal, $call:expr) => {{
            let start = rig.frame;
            match $call {
                Ok(v) => {
                    report.phase_done($name, rig.frame - start, None);
                    v
                }
                Err(e) => {
                    report.phase_done($name, rig.frame - start, Some(e));
                    return Ok((report, rig.writer.bytes()));
                }
            }
        }};
    }

    report.located_x = Some(run_phase!("locate", locate(&mut rig, cfg)));
    report.scan_extent = Some(run_phase!("scan", scan(&mut rig, cfg)));
    report.grasp_force = Some(run_phase!("grasp", grasp(&mut rig, cfg)));
    let (rotation, stall) = run_phase!("arm", arm(&mut rig, cfg));
    report.final_rotation = Some(rotation);
    report.possible_stall = Some(stall);
    report.contact_z = Some(run_phase!("descend", descend(&mut rig, cfg)));
    let chosen = run_phase!("probe", probe(&mut rig, cfg));
    report.chosen_load_x = Some(chosen);
    run_phase!("place", place(&mut rig, cfg, chosen));

    report.success = true;
    Ok((report, rig.writer.bytes()))
}

/// Re-derives every phase predicate from the log and checks the report
/// against it. `Ok(())` means the claimed success is backed by the frames.
pub fn replay_report(log: &[u8], report: &AssemblyReport, cfg: &AssemblyCfg) -> Result<(), String> {
    if !report.success {
        return Err("report does not claim success".into());
    }
    let (world, _) = variant_world(&report.variant).map_err(|e| e.to_string())?;
    let (header, records) = read_episode_bytes(log).map_err(|e| e.to_string())?;
    if header.scenario != "assembly" {
        return Err(format!("not an assembly log: {}", header.scenario));
    }
    for (i, r) in records.iter().enumerate() {
        if r.frame != i as u64 {
            return Err(format!("frame index {} at line {}", r.frame, i));
        }
    }
    let mut by_phase: Vec<(String, usize, usize)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let p = match &r.extra {
            Some(Extra::Assembly { phase }) => phase.clone(),
            _ => return Err(format!("frame {} has no phase tag", r.frame)),
        };
        match by_phase.last_mut() {
            Some((name, _, end)) if *name == p => *end = i + 1,
            _ => by_phase.push((p, i, i + 1)),
        }
    }
    let claimed: Vec<&str> = report.phases.iter().map(|p| p.name.as_str()).collect();
    let logged: Vec<&str> = by_phase.iter().map(|(n, _, _)| n.as_str()).collect();
    if claimed != PHASES || logged != PHASES {
        return Err(format!("phase sequence mismatch: report {claimed:?}, log {logged:?}"));
    }
    let group = |name: &str| {
        let &(_, s, e) = by_phase.iter().find(|(n, _, _)| n == name).expect("sequence checked");
        &records[s..e]
    };

    // locate: the hold stopped on the plate edge.
    let last = group("locate").last().expect("nonempty phase");
    let located = report.located_x.ok_or("missing located_x")?;
    if (last.plant.ee_position[0] - located).abs() > 1e-9 {
        return Err("located_x does not match the last locate frame".into());
    }
    if (located - world.plate_start).abs() > 1.0 {
        return Err(format!("locate stopped {located} mm, edge at {}", world.plate_start));
    }

    // scan: entry/boundary bookkeeping reproduced from the raw frames.
    let g = group("scan");
    let debounce = cfg.scan.debounce as usize;
    if g.len() < debounce + 1 {
        return Err("scan phase too short".into());
    }
    let entry = g[0].plant.ee_position;
    let boundary = g[g.len() - debounce].plant.ee_position;
    let extent: f64 =
        (0..3).map(|a| (entry[a] - boundary[a]).powi(2)).sum::<f64>().sqrt();
    let claimed_extent = report.scan_extent.ok_or("missing scan_extent")?;
    if (extent - claimed_extent).abs() > 1e-9 {
        return Err(format!("scan extent {claimed_extent} not reproduced ({extent})"));
    }
    if (claimed_extent - world.plate_len).abs() > 2.0 {
        return Err(format!("scan extent {claimed_extent}, plate is {}", world.plate_len));
    }

    // grasp: the stop statistic actually reached the target.
    let last = group("grasp").last().expect("nonempty phase");
    if last.grip < cfg.grasp.grip_target {
        return Err(format!("grasp stopped at grip {}", last.grip));
    }

    // arm: quiet torque, or an honestly flagged stall.
    let last = group("arm").last().expect("nonempty phase");
    let stalled = report.possible_stall == Some(true);
    if last.tau.abs() >= cfg.arm_eps_tau && !stalled {
        return Err(format!("arm ended at tau {}", last.tau));
    }

    // descend: sustained contact reading at the end.
    let g = group("descend");
    let n = cfg.descend_frames as usize;
    if g.len() < n {
        return Err("descend phase too short".into());
    }
    for r in &g[g.len() - n..] {
        if r.force[2] <= cfg.descend_threshold {
            return Err(format!("descend frame {} below contact threshold", r.frame));
        }
    }

    // probe: the argmax of the logged trace is the reported choice.
    let g = group("probe");
    let samples: Vec<tacsim_core::rig::scenario::LoadSample> = g
        .iter()
        .map(|r| tacsim_core::rig::scenario::LoadSample {
            position: (r.plant.ee_position[0] - world.plate_start) / world.plate_len,
            reading: r.force[2],
        })
        .collect();
    let best = probe_max_load(&samples, cfg.probe_window).map_err(|e| e.to_string())?;
    let rederived = world.plate_start + best.position * world.plate_len;
    let chosen = report.chosen_load_x.ok_or("missing chosen_load_x")?;
    if (rederived - chosen).abs() > 1e-9 {
        return Err(format!("probe argmax {rederived} != chosen {chosen}"));
    }

    // place: parked on the chosen point and released.
    let last = group("place").last().expect("nonempty phase");
    if (last.plant.ee_position[0] - chosen).abs() > 0.1 {
        return Err(format!("placed at {}", last.plant.ee_position[0]));
    }
    if last.plant.gripper_opening < cfg.release_frac * cfg.release_target {
        return Err(format!("release stopped at {}", last.plant.gripper_opening));
    }
    Ok(())
}
