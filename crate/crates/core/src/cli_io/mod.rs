//! File formats, provenance checks and the command implementations behind
//! the `fgrasp` binary.

mod config;
mod demo;
mod provenance;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{world_contacts, EnergyWeights};
use crate::error::{Error, Result};
use crate::geometry::write_obj;
use crate::heatmap::{
    generate_with_workers, heatmap_csv, heatmap_ply, read_heatmap_csv, ApproachHeatmap, HeatmapHeader,
};
use crate::planner::{anneal, best_candidate, finalize_grasp, FingerClosure, GraspCandidate, Scene};
use crate::quality::{detect_contacts, evaluate_quality, Contact, QualityReport};

pub use config::{
    read_json, write_file, write_json, ContactConfig, EnergyConfig, FingerConfig, FrameConfig, HandConfig,
    JointConfig, LoadedHand, PlannerConfig, QualityConfig, RegionConfig, Scenario, ScenarioConfig, Units,
};
pub use demo::{barrett_hand, demo_object, four_finger_hand, DemoObject, DEMO_NAMES};
pub use provenance::{expect_same, sha256_hex, Provenance};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "FGRASP_WORKERS";

pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| Some(n.max(1)))
            .map_err(|_| Error::input(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Parses `alpha,beta,gamma`.
pub fn parse_weights(text: &str) -> Result<EnergyWeights> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::input(format!("weights must be three numbers 'a,b,g', got '{text}'")))?;
    let [alpha, beta, gamma] = parts[..] else {
        return Err(Error::input(format!("weights must be three numbers 'a,b,g', got '{text}'")));
    };
    EnergyWeights::new(alpha, beta, gamma)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::File {
        path: dir.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone)]
pub struct HeatmapArgs {
    pub scenario: PathBuf,
    pub hand: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct HeatmapOutputs {
    pub ply: PathBuf,
    pub csv: PathBuf,
    pub json: PathBuf,
    pub heatmap: ApproachHeatmap,
}

pub fn cmd_heatmap(args: &HeatmapArgs) -> Result<HeatmapOutputs> {
    let scenario = Scenario::load(&args.scenario)?;
    let hand = LoadedHand::load(&args.hand)?;
    let mut params = scenario.config.heatmap;
    if let Some(seed) = args.seed {
        params.rng_seed = seed;
    }
    let mut heatmap = generate_with_workers(&hand.model, &scenario.mesh, &scenario.region, &params, args.workers)?;
    heatmap.hand_id = hand.hand_id.clone();
    heatmap.object_id = scenario.object_id.clone();
    log::info!(
        "graded {} points, {} reachable, selected cluster {:?}",
        heatmap.points.len(),
        heatmap.points.iter().filter(|p| p.reachable).count(),
        heatmap.selected_cluster
    );

    create_dir(&args.out)?;
    let csv = heatmap_csv(&heatmap)?;
    let outputs = HeatmapOutputs {
        ply: args.out.join("heatmap.ply"),
        csv: args.out.join("heatmap.csv"),
        json: args.out.join("heatmap.json"),
        heatmap,
    };
    write_file(&outputs.csv, csv.as_bytes())?;
    write_file(&outputs.ply, heatmap_ply(&outputs.heatmap, &scenario.mesh).as_bytes())?;
    write_json(&outputs.json, &outputs.heatmap.header(sha256_hex(csv.as_bytes())))?;
    Ok(outputs)
}

/// Reads a heatmap artifact pair (`x.json` + `x.csv`) and checks it belongs
/// to the given hand and object.
pub fn load_heatmap(json_path: &Path, hand: &LoadedHand, scenario: &Scenario) -> Result<(ApproachHeatmap, String)> {
    let header_text = read_text(json_path)?;
    let header: HeatmapHeader = serde_json::from_str(&header_text)
        .map_err(|e| Error::input(format!("{}: {e}", json_path.display())))?;
    expect_same("heatmap hand id", &hand.hand_id, &header.hand_id)?;
    expect_same("heatmap object id", &scenario.object_id, &header.object_id)?;
    let csv_path = json_path.with_extension("csv");
    let csv = read_text(&csv_path)?;
    expect_same("heatmap CSV hash", &header.csv_sha256, &sha256_hex(csv.as_bytes()))?;
    let points = read_heatmap_csv(&csv)?;
    let heatmap = ApproachHeatmap::from_parts(&header, points, &scenario.mesh)?;
    Ok((heatmap, sha256_hex(header_text.as_bytes())))
}

/// On-disk form of a planned grasp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspFile {
    pub provenance: Provenance,
    pub scenario: String,
    pub hand: String,
    pub wrist_translation: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub wrist_quaternion: [f64; 4],
    pub candidate: GraspCandidate,
}

impl GraspFile {
    pub fn wrist_pose(&self) -> nalgebra::Isometry3<f64> {
        self.candidate.state.wrist_pose()
    }
}

#[derive(Debug, Clone)]
pub struct PlanArgs {
    pub scenario: PathBuf,
    pub hand: PathBuf,
    pub heatmap: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub weights: Option<EnergyWeights>,
}

#[derive(Debug, Clone)]
pub struct PlanOutputs {
    pub grasp_files: Vec<PathBuf>,
    pub best_file: PathBuf,
    pub best: GraspFile,
}

pub fn cmd_plan(args: &PlanArgs) -> Result<PlanOutputs> {
    let scenario = Scenario::load(&args.scenario)?;
    let hand = LoadedHand::load(&args.hand)?;
    let (heatmap, heatmap_id) = load_heatmap(&args.heatmap, &hand, &scenario)?;
    let params = scenario.energy_params(&hand.config, args.weights);
    params.weights.validate()?;
    let mut planner = scenario.config.planner.clone();
    if let Some(steps) = args.steps {
        planner.schedule.steps = steps;
    }
    if let Some(seed) = args.seed {
        planner.seeds = vec![seed];
    }
    if planner.seeds.is_empty() {
        return Err(Error::config("planner needs at least one seed"));
    }
    planner.schedule.validate()?;
    let config_hash = sha256_hex(&serde_json::to_vec(&(&planner, &params))?);
    let scene = Scene {
        hand: &hand.model,
        mesh: &scenario.mesh,
        heatmap: &heatmap,
        region: &scenario.region,
        params: &params,
    };
    let candidates: Vec<GraspCandidate> = planner
        .seeds
        .par_iter()
        .map(|&seed| anneal(&scene, &planner.schedule, seed))
        .collect::<Result<_>>()?;

    create_dir(&args.out)?;
    let to_file = |c: &GraspCandidate| {
        let pose = c.state.wrist_pose();
        let q = pose.rotation.into_inner();
        GraspFile {
            provenance: Provenance {
                tool_version: env!("CARGO_PKG_VERSION").into(),
                hand_id: hand.hand_id.clone(),
                object_id: scenario.object_id.clone(),
                heatmap_id: heatmap_id.clone(),
                config_hash: config_hash.clone(),
                seed: c.seed,
            },
            scenario: scenario.config.name.clone(),
            hand: hand.config.name.clone(),
            wrist_translation: pose.translation.vector.into(),
            wrist_quaternion: [q.w, q.i, q.j, q.k],
            candidate: c.clone(),
        }
    };
    let mut grasp_files = Vec::with_capacity(candidates.len());
    for c in &candidates {
        let path = args.out.join(format!("grasp_seed{}.json", c.seed));
        write_json(&path, &to_file(c))?;
        grasp_files.push(path);
    }
    let best = to_file(best_candidate(&candidates).expect("at least one seed"));
    let best_file = args.out.join("best.json");
    write_json(&best_file, &best)?;
    Ok(PlanOutputs {
        grasp_files,
        best_file,
        best,
    })
}

/// A contact as written in evaluation reports and read from contact files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub position: [f64; 3],
    /// Into the object.
    pub normal: [f64; 3],
    #[serde(default)]
    pub functional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub scenario: String,
    pub quality: QualityReport,
    /// Distance from the functional contacts to the functional region (mm);
    /// null when no functional contact is known.
    pub functional_distance_mm: Option<f64>,
    pub q_closed: Vec<f64>,
    pub fingers: Vec<FingerClosure>,
    pub contacts: Vec<ContactRecord>,
    pub non_grasping: bool,
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub scenario: PathBuf,
    pub hand: PathBuf,
    pub grasp: Option<PathBuf>,
    pub contacts: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport> {
    let scenario = Scenario::load(&args.scenario)?;
    let hand = LoadedHand::load(&args.hand)?;
    let (center, radius) = scenario.mesh.bounding_sphere();
    let friction = &scenario.config.friction;
    let qc = &scenario.config.quality;

    let report = match (&args.grasp, &args.contacts) {
        (Some(grasp_path), None) => {
            let grasp: GraspFile = read_json(grasp_path)?;
            expect_same("grasp hand id", &hand.hand_id, &grasp.provenance.hand_id)?;
            expect_same("grasp object id", &scenario.object_id, &grasp.provenance.object_id)?;
            let wrist = grasp.wrist_pose();
            let closed = finalize_grasp(
                &wrist,
                &grasp.candidate.q_full,
                &hand.model,
                &scenario.mesh,
                &scenario.region,
                &scenario.config.planner.close,
            )?;
            let contacts = detect_contacts(
                &hand.model,
                &wrist,
                &closed.q_closed,
                &scenario.mesh,
                qc.contact_threshold_mm,
                friction,
            )?;
            let quality = evaluate_quality(&contacts, &center, radius, qc.nu_samples, qc.seed)?;
            let functional_distance_mm = world_contacts(&hand.model, &wrist, &closed.q_closed)?
                .iter()
                .filter(|c| c.functional)
                .map(|c| scenario.region.closest_point(&c.position).distance)
                .reduce(f64::min);
            EvaluationReport {
                provenance: Some(grasp.provenance),
                scenario: scenario.config.name.clone(),
                quality,
                functional_distance_mm,
                q_closed: closed.q_closed,
                fingers: closed.fingers,
                contacts: contacts.iter().map(|c| record(c, false)).collect(),
                non_grasping: closed.non_grasping,
            }
        }
        (None, Some(contacts_path)) => {
            let records: Vec<ContactRecord> = read_json(contacts_path)?;
            let contacts: Vec<Contact> = records
                .iter()
                .map(|r| Contact::new(Point3::from(r.position), Vector3::from(r.normal), friction))
                .collect();
            let quality = evaluate_quality(&contacts, &center, radius, qc.nu_samples, qc.seed)?;
            let functional_distance_mm = records
                .iter()
                .filter(|r| r.functional)
                .map(|r| scenario.region.closest_point(&Point3::from(r.position)).distance)
                .reduce(f64::min);
            EvaluationReport {
                provenance: None,
                scenario: scenario.config.name.clone(),
                quality,
                functional_distance_mm,
                q_closed: Vec::new(),
                fingers: Vec::new(),
                non_grasping: records.is_empty(),
                contacts: records,
            }
        }
        _ => return Err(Error::input("evaluate needs exactly one of --grasp or --contacts")),
    };
    if let Some(out) = &args.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        write_json(out, &report)?;
    }
    Ok(report)
}

fn record(c: &Contact, functional: bool) -> ContactRecord {
    ContactRecord {
        position: c.position.into(),
        normal: c.normal.into(),
        functional,
    }
}

/// Writes the demo object, its scenarios and both built-in hands into `out`.
pub fn cmd_demo(name: &str, out: &Path) -> Result<Vec<PathBuf>> {
    let demo = demo_object(name)?;
    create_dir(out)?;
    let mut written = Vec::new();
    let mesh_path = out.join(&demo.mesh_file);
    write_file(&mesh_path, write_obj(&demo.mesh).as_bytes())?;
    written.push(mesh_path);
    for s in &demo.scenarios {
        let path = out.join(format!("{}.scenario.json", s.name));
        write_json(&path, s)?;
        written.push(path);
    }
    for (file, hand) in [("hand_four_finger.json", four_finger_hand()), ("hand_barrett.json", barrett_hand())] {
        let path = out.join(file);
        write_json(&path, &hand)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the posed hand skeleton (joint origins joined by edges, plus the
/// virtual contacts as loose vertices) as ASCII PLY.
pub fn cmd_export(grasp_path: &Path, hand_path: &Path, out: &Path) -> Result<()> {
    let hand = LoadedHand::load(hand_path)?;
    let grasp: GraspFile = read_json(grasp_path)?;
    expect_same("grasp hand id", &hand.hand_id, &grasp.provenance.hand_id)?;
    let wrist = grasp.wrist_pose();
    let q = &grasp.candidate.q_full;
    let frames = hand.model.link_frames(&wrist, q)?;
    let mut vertices: Vec<Point3<f64>> = vec![Point3::from(wrist.translation.vector)];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (f, finger) in hand.model.fingers.iter().enumerate() {
        let mut prev = 0;
        for link in &frames[f] {
            vertices.push(Point3::from(link.translation.vector));
            edges.push((prev, vertices.len() - 1));
            prev = vertices.len() - 1;
        }
        let tip = frames[f].last().expect("finger has joints") * finger.chain.end_offset();
        vertices.push(Point3::from(tip.translation.vector));
        edges.push((prev, vertices.len() - 1));
    }
    for c in world_contacts(&hand.model, &wrist, q)? {
        vertices.push(c.position);
    }
    let mut text = String::new();
    let _ = write!(
        text,
        "ply\nformat ascii 1.0\ncomment posed hand {}\nelement vertex {}\nproperty float x\nproperty float y\n\
         property float z\nelement edge {}\nproperty int vertex1\nproperty int vertex2\nend_header\n",
        hand.config.name,
        vertices.len(),
        edges.len()
    );
    for v in &vertices {
        let _ = writeln!(text, "{} {} {}", v.x, v.y, v.z);
    }
    for (a, b) in &edges {
        let _ = writeln!(text, "{a} {b}");
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(out, text.as_bytes())
}

/// Wrist pose from the translation and `[w, x, y, z]` quaternion fields.
pub fn pose_from_parts(translation: [f64; 3], quaternion: [f64; 4]) -> nalgebra::Isometry3<f64> {
    let [w, x, y, z] = quaternion;
    nalgebra::Isometry3::from_parts(
        Translation3::from(Vector3::from(translation)),
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
    )
}
