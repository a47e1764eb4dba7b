use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use ccmscreen_core::adversary::{generate_attack, inject, AttackSpec};
use ccmscreen_core::artheory::{
    direction_study, simulate_ar1, validate_theorem1, Ar1Params, SchemeRule, TheoryDirection,
};
use ccmscreen_core::ccm::{ccm_curve, convergence_diagnostic};
use ccmscreen_core::format::fmt_num;
use ccmscreen_core::panel::{read_unit_series, write_long_csv, PanelData, TimeSeries};
use ccmscreen_core::scm::{effect_path, predict_counterfactual, run_scm, ScmReport};
use ccmscreen_core::screening::{ccm_scm_pipeline, write_curves_csv, write_summary_csv, ScreeningConfig};
use ccmscreen_core::{derive_seed, load_panel, CcmConfig, EmbeddingConfig, Error, Result, SimplexWeights};

use crate::args::*;

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn out_dir(o: &OutArgs) -> Result<&Path> {
    fs::create_dir_all(&o.out_dir)
        .map_err(|e| Error::Io { context: format!("creating {}", o.out_dir.display()), source: e })?;
    Ok(&o.out_dir)
}

fn write_bytes(dir: &Path, name: &str, bytes: Vec<u8>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_bytes(dir, name, text.into_bytes())
}

fn write_with(dir: &Path, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_bytes(dir, name, buf)
}

fn load(p: &PanelArgs) -> Result<PanelData> {
    load_panel(&p.panel, &p.treated, &p.t0)
}

fn ccm_config(a: &CcmArgs) -> Result<CcmConfig> {
    let cfg = CcmConfig {
        embedding: EmbeddingConfig::new(a.dim, a.delay)?,
        library_sizes: a.library_sizes.clone(),
        mode: a.mode.parse()?,
        theiler_window: a.theiler,
        normalize: a.normalize,
    };
    if !a.convergence_slack.is_finite() || a.convergence_slack < 0.0 {
        return Err(usage("convergence slack must be nonnegative"));
    }
    Ok(cfg)
}

fn ar1_params(a: &Ar1Args) -> Result<Ar1Params> {
    let p = Ar1Params { alpha: a.alpha, beta: a.beta, mu: a.mu, sigma_x: a.sigma_x, sigma_y: a.sigma_y, x0: a.x0 };
    p.validate()?;
    Ok(p)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ccm(c) => ccm(c),
        Command::Scm(c) => scm(c),
        Command::Screen(c) => screen(c, cli.seed),
        Command::Simulate(c) => simulate(c, cli.seed),
        Command::Attack(c) => attack(c, cli.seed),
        Command::Validate(c) => validate(c, cli.seed),
        Command::Effect(c) => effect(c),
    }
}

#[derive(Serialize)]
struct CcmOutput<'a> {
    treated: &'a str,
    control: &'a str,
    window: &'a str,
    config: &'a CcmConfig,
    curve: &'a ccmscreen_core::CcmCurve,
    diagnostic: ccmscreen_core::ConvergenceDiagnostic,
}

fn ccm(c: &CcmCmd) -> Result<()> {
    let cfg = ccm_config(&c.ccm)?;
    let panel = load(&c.panel)?;
    let range: Range<usize> = match c.window.as_str() {
        "pre" => panel.pre().range(),
        "all" => 0..panel.len_time(),
        other => return Err(usage(format!("unknown window {other:?}; expected pre or all"))),
    };
    if c.control == panel.treated_id() {
        return Err(usage(format!("{:?} is the treated unit", c.control)));
    }
    let control = panel.series(&c.control).ok_or_else(|| Error::Data(format!("unknown control id {:?}", c.control)))?;
    let treated = &panel.treated().values()[range.clone()];
    let curve = ccm_curve(panel.treated_id(), treated, &c.control, &control.values()[range], &cfg)?;
    let diagnostic = convergence_diagnostic(&curve, c.ccm.convergence_slack);
    let dir = out_dir(&c.out)?;
    write_with(dir, "curve.csv", |b| curve.write_csv(b))?;
    write_json(
        dir,
        "ccm.json",
        &CcmOutput {
            treated: panel.treated_id(),
            control: &c.control,
            window: &c.window,
            config: &cfg,
            curve: &curve,
            diagnostic,
        },
    )
}

fn scm(c: &ScmCmd) -> Result<()> {
    let panel = load(&c.panel)?;
    let (fit, effect) = run_scm(&panel)?;
    write_json(out_dir(&c.out)?, "scm.json", &ScmReport::new(&fit, effect))
}

#[derive(Serialize)]
struct ScreenOutput<'a> {
    config: &'a ScreeningConfig,
    report: &'a ccmscreen_core::PipelineReport,
}

fn screen(c: &ScreenCmd, seed: u64) -> Result<()> {
    let cfg = ScreeningConfig {
        ccm: ccm_config(&c.ccm)?,
        null_method: c.null_method.parse()?,
        noise_scale: c.noise_scale,
        replicates: c.replicates,
        q_min: c.q_min,
        q_gap: c.q_gap,
        base_seed: seed,
        scope: c.scope.parse()?,
        convergence_slack: c.ccm.convergence_slack,
    };
    cfg.validate()?;
    let panel = load(&c.panel)?;
    let dir = out_dir(&c.out)?;
    match ccm_scm_pipeline(&panel, &cfg) {
        Ok(report) => {
            write_with(dir, "screen_summary.csv", |b| write_summary_csv(&report.decisions, b))?;
            write_with(dir, "curves.csv", |b| write_curves_csv(&report.curves, b))?;
            write_json(dir, "screen.json", &ScreenOutput { config: &cfg, report: &report })
        }
        Err(Error::AllScreenedOut { decisions }) => {
            // Keep the decisions so thresholds can be relaxed knowingly.
            write_with(dir, "screen_summary.csv", |b| write_summary_csv(&decisions, b))?;
            Err(Error::AllScreenedOut { decisions })
        }
        Err(e) => Err(e),
    }
}

#[derive(Serialize)]
struct DirectionOutput<'a> {
    params: Ar1Params,
    config: &'a CcmConfig,
    seed: u64,
    study: &'a ccmscreen_core::artheory::DirectionStudy,
    #[serde(serialize_with = "ccmscreen_core::format::ser_f64")]
    z_score: f64,
}

fn simulate(c: &SimulateCmd, seed: u64) -> Result<()> {
    let p = ar1_params(&c.ar1)?;
    let cfg = ccm_config(&c.ccm)?;
    if c.length == 0 {
        return Err(usage("length must be at least 1"));
    }
    let study = direction_study(&p, c.runs, c.length, &cfg, seed)?;
    // The exported panel is run 0 of the study.
    let (x, y, _) = simulate_ar1(&p, c.length, derive_seed(seed, &[0]))?;
    let dir = out_dir(&c.out)?;
    write_with(dir, "ar1_panel.csv", |b| {
        use std::io::Write;
        let io = |e| Error::Io { context: "writing panel".into(), source: e };
        writeln!(b, "unit,time,value").map_err(io)?;
        for (id, s) in [("X", &x), ("Y", &y)] {
            for (t, v) in s.times().zip(s.values()) {
                writeln!(b, "{id},{t},{}", fmt_num(*v)).map_err(io)?;
            }
        }
        Ok(())
    })?;
    write_json(
        dir,
        "direction.json",
        &DirectionOutput { params: p, config: &cfg, seed, study: &study, z_score: study.z_score() },
    )
}

#[derive(Serialize)]
struct AttackOutput<'a> {
    template_unit: &'a str,
    spec: &'a AttackSpec,
    added_ids: Vec<String>,
}

fn attack(c: &AttackCmd, seed: u64) -> Result<()> {
    let panel = load(&c.panel)?;
    let file = fs::File::open(&c.template)
        .map_err(|e| Error::Io { context: format!("opening {}", c.template.display()), source: e })?;
    let template = read_unit_series(file, &c.template_unit)?;
    let t_cut = match &c.t_cut {
        None => panel.t0(),
        Some(label) => panel
            .time_labels()
            .iter()
            .position(|l| l == label.trim())
            .ok_or_else(|| usage(format!("cut time {label:?} is not on the panel grid")))?,
    };
    let noise_multiplier = match c.noise_multiplier.trim() {
        "none" => None,
        v => Some(v.parse().map_err(|_| usage(format!("invalid noise multiplier {v:?}")))?),
    };
    let spec = AttackSpec {
        window_start: c.window_start,
        scale_k: c.scale_k,
        shift_a: c.shift_a,
        shift_b: c.shift_b,
        t_cut,
        n_units: c.n_units,
        noise_multiplier,
        seed,
    };
    spec.validate()?;
    let units = generate_attack(&template, &spec, panel.len_time())?;
    let augmented = inject(&panel, &units, &c.id_prefix)?;
    let added_ids = (1..=units.len()).map(|i| format!("{}{i}", c.id_prefix)).collect();
    let dir = out_dir(&c.out)?;
    write_with(dir, "augmented_panel.csv", |b| write_long_csv(&augmented, b))?;
    write_json(dir, "attack.json", &AttackOutput { template_unit: &c.template_unit, spec: &spec, added_ids })
}

fn validate(c: &ValidateCmd, seed: u64) -> Result<()> {
    let p = ar1_params(&c.ar1)?;
    let rule =
        SchemeRule { index_floor: c.index_floor, gap_floor: c.gap_floor, n_neighbors: c.neighbors, horizon: c.horizon };
    let direction: TheoryDirection = c.direction.parse()?;
    if !c.tolerance.is_finite() || c.tolerance <= 0.0 {
        return Err(usage("tolerance must be positive"));
    }
    let v = validate_theorem1(&p, c.t, c.n, seed, &rule, direction, c.tolerance)?;
    let dir = out_dir(&c.out)?;
    write_with(dir, "scores.csv", |b| {
        use std::io::Write;
        let io = |e| Error::Io { context: "writing scores".into(), source: e };
        writeln!(b, "sample,score").map_err(io)?;
        for (i, s) in v.samples.iter().enumerate() {
            writeln!(b, "{i},{}", fmt_num(*s)).map_err(io)?;
        }
        Ok(())
    })?;
    write_json(dir, "validate.json", &v)
}

fn read_weights(path: &Path, panel: &PanelData) -> Result<SimplexWeights> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io { context: format!("reading {}", path.display()), source: e })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let map = value.get("weights").unwrap_or(&value);
    let map: BTreeMap<String, f64> = serde_json::from_value(map.clone())
        .map_err(|e| Error::Data(format!("{}: weights must map ids to numbers ({e})", path.display())))?;
    let total: f64 = map.values().sum();
    if map.is_empty() || (total - 1.0).abs() > 1e-6 {
        return Err(Error::Data(format!("weights sum to {total}, not 1")));
    }
    for id in map.keys() {
        if panel.series(id).is_none() {
            return Err(Error::Data(format!("weight for unknown unit {id:?}")));
        }
    }
    // Reported weights are rounded; renormalize the last few ulps away.
    let (ids, w): (Vec<String>, Vec<f64>) = map.into_iter().map(|(k, v)| (k, v / total)).unzip();
    SimplexWeights::new(ids, w)
}

#[derive(Serialize)]
struct EffectOutput<'a> {
    weights: BTreeMap<String, f64>,
    #[serde(serialize_with = "ccmscreen_core::format::ser_f64")]
    ate: f64,
    effect_path: &'a ccmscreen_core::EffectPath,
}

fn effect(c: &EffectCmd) -> Result<()> {
    let panel = load(&c.panel)?;
    let w = read_weights(&c.weights, &panel)?;
    let path = effect_path(&panel, &w)?;
    let synth: TimeSeries = predict_counterfactual(&w, &panel)?;
    let dir = out_dir(&c.out)?;
    write_with(dir, "effect.csv", |b| {
        use std::io::Write;
        let io = |e| Error::Io { context: "writing effect".into(), source: e };
        writeln!(b, "time,period,treated,synthetic,gap").map_err(io)?;
        for (t, label) in panel.time_labels().iter().enumerate() {
            let (y, s) = (panel.treated().values()[t], synth.values()[t]);
            let period = if t <= panel.t0() { "pre" } else { "post" };
            writeln!(b, "{label},{period},{},{},{}", fmt_num(y), fmt_num(s), fmt_num(y - s)).map_err(io)?;
        }
        Ok(())
    })?;
    write_json(dir, "effect.json", &EffectOutput { weights: w.report_map(), ate: path.ate, effect_path: &path })
}
