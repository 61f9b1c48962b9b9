use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use geodiag::featureio::{
    gen_planted, gen_spheres, read_bundle, select_classes, train_test_split, write_bundle,
    FeatureBundle, PlantedSpec, SphereSpec, SubsampleSpec,
};
use geodiag::gluecap::{
    estimate_capacity, glue_pairwise, CapacityConfig, CapacityEstimate, Dichotomy, DichotomySet,
    PairwiseConfig,
};
use geodiag::markers::{compute_selected, BaselineMode, MarkerConfig, MarkerValue};
use geodiag::preprocess::{WhitenConfig, WhitenMode};
use geodiag::probe::{run_probe, ProbeConfig};
use geodiag::prognostics::{
    build_table, default_direction, predict_with, Direction, Outcome, RunRecord,
};
use geodiag::projoracle::{empirical_ncrit, OracleConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{manifest_path, to_json, write_json, write_text, RunManifest};
use crate::{
    CapacityArgs, Command, CorrelateArgs, DichotomyArg, GenCommand, GlueArgs, MarkersArgs,
    OracleArgs, PlantedArgs, PredictArgs, ProbeArgs, SpheresArgs, WhitenArg,
};

pub struct Context {
    pub argv: Vec<String>,
    pub jobs: usize,
    pub started: Instant,
}

pub enum CliError {
    Usage(String),
    Analysis(geodiag::Error),
}

impl From<geodiag::Error> for CliError {
    fn from(e: geodiag::Error) -> Self {
        CliError::Analysis(e)
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(command: Command, ctx: &Context) -> CliResult<()> {
    match command {
        Command::Gen(GenCommand::Spheres(a)) => gen_spheres_cmd(a, ctx),
        Command::Gen(GenCommand::Planted(a)) => gen_planted_cmd(a, ctx),
        Command::Markers(a) => markers_cmd(a, ctx),
        Command::Capacity(a) => capacity_cmd(a, ctx),
        Command::Oracle(a) => oracle_cmd(a, ctx),
        Command::Probe(a) => probe_cmd(a, ctx),
        Command::Correlate(a) => correlate_cmd(a, ctx),
        Command::Predict(a) => predict_cmd(a, ctx),
    }
}

struct ManifestInfo<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn write_manifest<C: Serialize>(
    ctx: &Context,
    primary: &Path,
    info: ManifestInfo<'_, C>,
) -> CliResult<()> {
    let manifest = RunManifest {
        command: info.command.to_string(),
        argv: ctx.argv.clone(),
        config: serde_json::to_value(info.config).map_err(geodiag::Error::from)?,
        seeds: info.seeds,
        inputs: info.inputs,
        outputs: info.outputs,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        jobs: ctx.jobs,
        duration_secs: ctx.started.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path(primary), &manifest)?;
    Ok(())
}

fn gen_spheres_cmd(a: SpheresArgs, ctx: &Context) -> CliResult<()> {
    let spec = SphereSpec {
        intrinsic_dim: a.dim,
        radius: a.radius,
        ambient_dim: a.ambient,
        num_classes: a.classes,
        points_per_class: a.points,
        seed: a.seed,
        shared_frame: a.shared_frame,
    };
    let bundle = gen_spheres(&spec)?;
    write_bundle(&bundle, &a.out)?;
    write_manifest(
        ctx,
        &a.out,
        ManifestInfo {
            command: "gen spheres",
            config: &spec,
            seeds: vec![a.seed],
            inputs: vec![],
            outputs: vec![a.out.clone()],
        },
    )
}

fn gen_planted_cmd(a: PlantedArgs, ctx: &Context) -> CliResult<()> {
    let d = PlantedSpec::default();
    let spec = PlantedSpec {
        compression: a.compression,
        seed: a.seed,
        ambient_dim: a.ambient.unwrap_or(d.ambient_dim),
        latent_dim: a.latent.unwrap_or(d.latent_dim),
        discriminative_modes: a.disc_modes.unwrap_or(d.discriminative_modes),
        id_classes: a.id_classes.unwrap_or(d.id_classes),
        id_points_per_class: a.id_points.unwrap_or(d.id_points_per_class),
        ood_classes: a.ood_classes.unwrap_or(d.ood_classes),
        ood_points_per_class: a.ood_points.unwrap_or(d.ood_points_per_class),
        ..d
    };
    let (id, ood) = gen_planted(&spec)?;
    let (id_dir, ood_dir) = (a.out.join("id"), a.out.join("ood"));
    write_bundle(&id, &id_dir)?;
    write_bundle(&ood, &ood_dir)?;
    write_manifest(
        ctx,
        &a.out,
        ManifestInfo {
            command: "gen planted",
            config: &spec,
            seeds: vec![a.seed],
            inputs: vec![],
            outputs: vec![id_dir, ood_dir],
        },
    )
}

fn pairwise_config(g: &GlueArgs) -> PairwiseConfig {
    PairwiseConfig {
        subsample: SubsampleSpec {
            classes_per_draw: g.classes,
            points_per_class: g.points,
            repetitions: g.reps,
            seed: g.seed,
        },
        whiten: whiten_config(g.whiten, g.ridge),
        capacity: CapacityConfig {
            n_dirs: g.n_dirs,
            seed: g.seed,
            qp_tol: g.qp_tol,
            ..Default::default()
        },
        dichotomies: match g.dichotomies {
            DichotomyArg::Default => DichotomySet::Default,
            DichotomyArg::OneVsRest => DichotomySet::OneVsRest,
            DichotomyArg::All => DichotomySet::All,
        },
    }
}

fn whiten_config(w: WhitenArg, ridge: f64) -> WhitenConfig {
    WhitenConfig {
        ridge_fraction: ridge,
        mode: match w {
            WhitenArg::Zca => WhitenMode::Zca,
            WhitenArg::None => WhitenMode::None,
        },
    }
}

fn markers_cmd(a: MarkersArgs, ctx: &Context) -> CliResult<()> {
    let bundle = read_bundle(&a.bundle)?;
    let cfg = MarkerConfig {
        glue: pairwise_config(&a.glue),
        baseline: if a.subsample {
            BaselineMode::Subsample
        } else {
            BaselineMode::Full
        },
        temperature: a.temperature,
        ..Default::default()
    };
    let (report, warnings) = compute_selected(&bundle, &cfg, a.markers.as_deref())?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_json(&a.out, &report)?;
    write_manifest(
        ctx,
        &a.out,
        ManifestInfo {
            command: "markers",
            config: &json!({ "markers": cfg, "selected": a.markers }),
            seeds: vec![a.glue.seed],
            inputs: vec![a.bundle.clone()],
            outputs: vec![a.out.clone()],
        },
    )
}

fn opt_csv(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn capacity_cmd(a: CapacityArgs, ctx: &Context) -> CliResult<()> {
    let bundle = read_bundle(&a.bundle)?;
    let cfg = pairwise_config(&a.glue);
    let report = glue_pairwise(&bundle, &cfg)?;
    write_json(&a.out, &report)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.rows_csv {
        let mut csv = String::from(
            "rep,classes,d_eff,r_eff,psi_eff,n_crit,alpha,fallback_count,n_converged\n",
        );
        for r in &report.rows {
            let classes: Vec<String> = r.class_pair.iter().map(|c| c.to_string()).collect();
            csv.push_str(&format!(
                "{},{},{:.16e},{},{:.16e},{:.16e},{},{},{}\n",
                r.rep,
                classes.join(" "),
                r.d_eff,
                opt_csv(r.r_eff),
                r.psi_eff,
                r.n_crit,
                opt_csv(r.alpha),
                r.fallback_count,
                r.n_converged
            ));
        }
        write_text(path, &csv)?;
        outputs.push(path.clone());
    }
    write_manifest(
        ctx,
        &a.out,
        ManifestInfo {
            command: "capacity",
            config: &cfg,
            seeds: vec![a.glue.seed],
            inputs: vec![a.bundle.clone()],
            outputs,
        },
    )
}

#[derive(Serialize)]
struct OracleSummary {
    classes: Vec<usize>,
    n_crit_empirical: usize,
    n_crit_mean_field: Option<f64>,
    mean_field: Option<CapacityEstimate>,
    config: OracleConfig,
}

fn oracle_cmd(a: OracleArgs, ctx: &Context) -> CliResult<()> {
    if a.pair.len() < 2 {
        return Err(CliError::Usage("--pair needs at least two classes".into()));
    }
    let bundle = read_bundle(&a.bundle)?;
    let drawn = select_classes(&bundle, &a.pair, a.points, a.seed)?;
    let manifolds = geodiag::gluecap::whiten_manifolds(&drawn, &whiten_config(a.whiten, a.ridge))?;
    let labels = (0..manifolds.len())
        .map(|k| if k == 0 { 1 } else { -1 })
        .collect();
    let y = Dichotomy::new(labels)?;
    let cfg = OracleConfig {
        n_trials: a.trials,
        seed: a.seed,
        n_max: a.nmax,
        n_min: a.nmin,
        stop_at_crossing: a.stop_at_crossing,
    };
    let result = empirical_ncrit(&manifolds, &y, &cfg)?;
    write_text(&a.out, &result.to_csv())?;
    println!("n_crit {}", result.n_crit);
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.summary {
        let mean_field = if a.n_dirs > 0 {
            let cap = CapacityConfig {
                n_dirs: a.n_dirs,
                seed: a.seed,
                ..Default::default()
            };
            Some(estimate_capacity(&manifolds, std::slice::from_ref(&y), &cap)?.estimate)
        } else {
            None
        };
        let summary = OracleSummary {
            classes: a.pair.clone(),
            n_crit_empirical: result.n_crit,
            n_crit_mean_field: mean_field.as_ref().map(|e| e.n_crit),
            mean_field,
            config: cfg,
        };
        write_json(path, &summary)?;
        outputs.push(path.clone());
    }
    write_manifest(
        ctx,
        &a.out,
        ManifestInfo {
            command: "oracle",
            config: &json!({ "oracle": cfg, "classes": a.pair, "points": a.points, "whiten": whiten_config(a.whiten, a.ridge), "n_dirs": a.n_dirs }),
            seeds: vec![a.seed],
            inputs: vec![a.bundle.clone()],
            outputs,
        },
    )
}

fn probe_cmd(a: ProbeArgs, ctx: &Context) -> CliResult<()> {
    let (train, test, inputs): (FeatureBundle, FeatureBundle, Vec<PathBuf>) =
        match (&a.bundle, &a.train) {
            (Some(path), _) => {
                let b = read_bundle(path)?;
                let (tr, te) = train_test_split(&b, a.test_fraction, a.seed)?;
                (tr, te, vec![path.clone()])
            }
            (None, Some(train)) => {
                let test = a
                    .test
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("--train needs --test".into()))?;
                (
                    read_bundle(train)?,
                    read_bundle(test)?,
                    vec![train.clone(), test.clone()],
                )
            }
            (None, None) => return Err(CliError::Usage("give --bundle or --train/--test".into())),
        };
    let cfg = ProbeConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch,
        seed: a.seed,
        bias: !a.no_bias,
        ..Default::default()
    };
    let result = run_probe(&train, &test, &cfg, a.repeats)?;
    write_json(&a.out, &result)?;
    write_manifest(
        ctx,
        &a.out,
        ManifestInfo {
            command: "probe",
            config: &json!({ "probe": cfg, "repeats": a.repeats, "test_fraction": a.bundle.as_ref().map(|_| a.test_fraction) }),
            seeds: result.per_seed.iter().map(|s| s.seed).collect(),
            inputs,
            outputs: vec![a.out.clone()],
        },
    )
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            geodiag::Error::MissingFile(path.to_path_buf())
        } else {
            geodiag::Error::Io(e)
        }
    })?;
    Ok(serde_json::from_str(&text).map_err(geodiag::Error::from)?)
}

fn correlate_cmd(a: CorrelateArgs, ctx: &Context) -> CliResult<()> {
    let records: Vec<RunRecord> = a
        .runs
        .iter()
        .map(|p| read_json(p))
        .collect::<CliResult<_>>()?;
    let table = build_table(&records);
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    write_text(&a.out, &table.to_csv())?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.heatmap {
        write_json(path, &table.heatmap())?;
        outputs.push(path.clone());
    }
    write_manifest(
        ctx,
        &a.out,
        ManifestInfo {
            command: "correlate",
            config: &json!({ "runs": a.runs.len() }),
            seeds: vec![],
            inputs: a.runs.clone(),
            outputs,
        },
    )
}

#[derive(Deserialize)]
struct MarkerFile {
    markers: BTreeMap<String, MarkerValue>,
}

fn predict_cmd(a: PredictArgs, ctx: &Context) -> CliResult<()> {
    let mut overrides = BTreeMap::new();
    for d in &a.directions {
        let (name, dir) = d
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("direction {d} is not name=higher|lower")))?;
        let dir = match dir {
            "higher" => Direction::HigherBetter,
            "lower" => Direction::LowerBetter,
            other => return Err(CliError::Usage(format!("unknown direction {other}"))),
        };
        overrides.insert(name.to_string(), dir);
    }
    let rules = a
        .markers
        .iter()
        .map(|m| {
            overrides
                .get(m)
                .copied()
                .or_else(|| default_direction(m))
                .map(|d| (m.clone(), d))
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "no default direction for {m}; pass --direction {m}=higher|lower"
                    ))
                })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let fa: MarkerFile = read_json(&a.a)?;
    let fb: MarkerFile = read_json(&a.b)?;
    let verdict = predict_with(&fa.markers, &fb.markers, &rules)?;
    println!(
        "{}",
        match verdict.outcome {
            Outcome::A => "A",
            Outcome::B => "B",
            Outcome::NoVerdict => "no verdict",
        }
    );
    match &a.out {
        Some(path) => {
            write_json(path, &verdict)?;
            write_manifest(
                ctx,
                path,
                ManifestInfo {
                    command: "predict",
                    config: &json!({ "rules": rules }),
                    seeds: vec![],
                    inputs: vec![a.a.clone(), a.b.clone()],
                    outputs: vec![path.clone()],
                },
            )
        }
        None => {
            print!("{}", to_json(&verdict).map_err(geodiag::Error::from)?);
            Ok(())
        }
    }
}
