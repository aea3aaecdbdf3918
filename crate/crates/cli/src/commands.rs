// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations.
//!
//! Every command reads and writes inside the output directory:
//!
//! | file | written by |
//! |------|------------|
//! | `controllers/manifest.csv`, `controllers/controller_NNN.txt`, `restarts.csv` | `synthesize` |
//! | `sensitivity.csv`, `bounds.csv`, `worst_sequence.csv` | `analyze` |
//! | `certificates.csv`, `iter_trace.csv` | `certify` |
//! | `sweep.csv` | `sweep` |
//! | `fig1_sensitivity.svg` ... `fig4_margins.svg` | `plot` |

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use qsens_core::certification::{
    certify as certify_controller, error_sweep, MarginStatus, PerformanceCertificate,
};
use qsens_core::parallel;
use qsens_core::sensitivity::{analyze as analyze_controller, SensitivityReport};
use qsens_core::synthesis::{synthesize as run_synthesis, Controller};
use qsens_core::CouplingMethod;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    create_dir, fmt_f64, manifest_header, read_manifest, ControllerFile, CsvData, ManifestEntry,
    Table, MANIFEST,
};
use crate::plot;

/// Resolved configuration plus the built experiment.
pub struct Context {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub experiment: Experiment,
}

impl Context {
    pub fn new(config: ExperimentConfig, config_path: PathBuf) -> CliResult<Self> {
        config.validate(&config_path)?;
        let experiment = config.build(&config_path)?;
        Ok(Self {
            config,
            config_path,
            experiment,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.output.dir
    }

    fn controllers_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit.map_or_else(|| self.out_dir().join("controllers"), Path::to_path_buf)
    }

    fn seed(&self) -> String {
        self.config.seed.to_string()
    }

    fn labels(&self) -> Vec<String> {
        self.experiment.basis.labels()
    }

    fn write_metadata(&self, command: &str) -> CliResult<()> {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let text = format!(
            "# qsens {} `{command}` run\nversion = \"{}\"\ngenerated_unix = {stamp}\nsystem_hash = \"{}\"\ntarget = \"{}\"\n\n{}",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
            self.experiment.system_hash,
            self.experiment.target_desc,
            self.config.to_toml()
        );
        let path = self.out_dir().join(format!("{command}.meta.toml"));
        std::fs::write(&path, text)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}

fn header(fixed: &[&str], per_label: &[&str], labels: &[String], tail: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    for p in per_label {
        h.extend(labels.iter().map(|l| format!("{p}{l}")));
    }
    h.extend(tail.iter().map(|s| s.to_string()));
    h
}

pub struct SynthesisOutcome {
    pub controllers: Vec<Controller>,
    pub accepted: usize,
}

pub fn synthesize(ctx: &Context) -> CliResult<SynthesisOutcome> {
    let exp = &ctx.experiment;
    let cfg = ctx.config.synthesis_config();
    let dir = ctx.controllers_dir(None);
    create_dir(&dir)?;
    let t = Instant::now();
    info!(
        "synthesizing up to {} restarts (seed {}, target {}, want {} below {})",
        cfg.restarts, cfg.seed, exp.target_desc, ctx.config.synthesis.controllers, cfg.target_error
    );
    let controllers = run_synthesis(&exp.sys, &exp.target, &cfg)?;
    info!("synthesis finished in {:.1} s", t.elapsed().as_secs_f64());

    // stale controller files from an earlier run would disagree with the manifest
    if let Ok(entries) = std::fs::read_dir(&dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if name.starts_with("controller_") && name.ends_with(".txt") {
                let _ = std::fs::remove_file(e.path());
            }
        }
    }
    let mut restarts = Table::create(
        &ctx.out_dir().join("restarts.csv"),
        &header(
            &[
                "restart",
                "seed",
                "nominal_error",
                "iterations",
                "termination",
                "accepted",
            ],
            &[],
            &[],
            &[],
        ),
    )?;
    let mut by_restart: Vec<&Controller> = controllers.iter().collect();
    by_restart.sort_by_key(|c| c.restart);
    for c in by_restart {
        restarts.row(&[
            c.restart.to_string(),
            c.seed.to_string(),
            fmt_f64(c.nominal_error),
            c.iterations.to_string(),
            format!("{:?}", c.termination),
            c.accepted.to_string(),
        ])?;
    }
    restarts.finish()?;

    let mut manifest = Table::create(&dir.join(MANIFEST), &manifest_header())?;
    let accepted: Vec<&Controller> = controllers.iter().filter(|c| c.accepted).collect();
    for (index, c) in accepted.iter().enumerate() {
        let file = format!("controller_{index:03}.txt");
        ControllerFile {
            system_hash: exp.system_hash.clone(),
            seed: c.seed,
            target: exp.target_desc.clone(),
            restart: c.restart,
            nominal_error: c.nominal_error,
            iterations: c.iterations,
            termination: format!("{:?}", c.termination),
            pulse: c.pulse.clone(),
        }
        .write(&dir.join(&file))?;
        manifest.row(&[
            index.to_string(),
            file,
            c.seed.to_string(),
            c.restart.to_string(),
            fmt_f64(c.nominal_error),
            c.iterations.to_string(),
            format!("{:?}", c.termination),
        ])?;
    }
    manifest.finish()?;
    ctx.write_metadata("synthesize")?;
    let below_eps = controllers
        .iter()
        .filter(|c| c.nominal_error < ctx.config.analysis.epsilon)
        .count();
    info!(
        "{} restarts run, {} accepted, {below_eps} below ε = {}",
        controllers.len(),
        accepted.len(),
        ctx.config.analysis.epsilon
    );
    let n_accepted = accepted.len();
    if n_accepted == 0 {
        return Err(CliError::Synthesis(format!(
            "no restart reached the target error {} after {} restarts",
            cfg.target_error,
            controllers.len()
        )));
    }
    Ok(SynthesisOutcome {
        controllers,
        accepted: n_accepted,
    })
}

/// A controller read back from disk.
pub struct Loaded {
    pub entry: ManifestEntry,
    pub file: ControllerFile,
}

pub fn load_controllers(ctx: &Context, explicit: Option<&Path>) -> CliResult<Vec<Loaded>> {
    let dir = ctx.controllers_dir(explicit);
    let entries = read_manifest(&dir)?;
    entries
        .into_iter()
        .map(|entry| {
            let path = dir.join(&entry.file);
            let file = ControllerFile::read(&path)?;
            if file.system_hash != ctx.experiment.system_hash {
                return Err(CliError::data(
                    &path,
                    "controller was synthesized for a different system or target (hash mismatch)",
                ));
            }
            ctx.experiment
                .sys
                .check_pulse(&file.pulse)
                .map_err(|e| CliError::data(&path, e.to_string()))?;
            Ok(Loaded { entry, file })
        })
        .collect()
}

pub fn analyze(ctx: &Context, controllers: Option<&Path>) -> CliResult<Vec<SensitivityReport>> {
    let exp = &ctx.experiment;
    let loaded = load_controllers(ctx, controllers)?;
    create_dir(ctx.out_dir())?;
    let t = Instant::now();
    let reports = parallel::map(&loaded, |c| {
        analyze_controller(
            &exp.sys,
            &c.file.pulse,
            &exp.target,
            &exp.basis,
            CouplingMethod::Block,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    info!(
        "analyzed {} controllers in {:.2} s",
        reports.len(),
        t.elapsed().as_secs_f64()
    );

    let labels = ctx.labels();
    let seed = ctx.seed();
    let mut sens = Table::create(
        &ctx.out_dir().join("sensitivity.csv"),
        &header(
            &["controller", "seed", "restart", "nominal_error"],
            &["zeta_", "zeta_over_b2_"],
            &labels,
            &[],
        ),
    )?;
    let mut bounds = Table::create(
        &ctx.out_dir().join("bounds.csv"),
        &header(
            &["controller", "seed", "restart"],
            &["b1_"],
            &labels,
            &["b2", "b3", "degenerate_steps"],
        )
        .into_iter()
        .chain(labels.iter().map(|l| format!("v_{l}")))
        .collect::<Vec<_>>(),
    )?;
    let mut worst = Table::create(
        &ctx.out_dir().join("worst_sequence.csv"),
        &header(
            &["controller", "seed", "step", "row_norm"],
            &["s_"],
            &labels,
            &["degenerate"],
        ),
    )?;
    for (c, r) in loaded.iter().zip(&reports) {
        let id = c.entry.index.to_string();
        let mut row = vec![
            id.clone(),
            seed.clone(),
            c.file.restart.to_string(),
            fmt_f64(r.nominal.error),
        ];
        row.extend(r.zeta.iter().map(|&z| fmt_f64(z)));
        row.extend(r.zeta.iter().map(|&z| fmt_f64(z.abs() / r.b2())));
        sens.row(&row)?;

        let mut row = vec![id.clone(), seed.clone(), c.file.restart.to_string()];
        row.extend(r.b1.iter().map(|&b| fmt_f64(b)));
        row.push(fmt_f64(r.b2()));
        row.push(fmt_f64(r.b3()));
        row.push(
            r.sequence_worst
                .degenerate
                .iter()
                .filter(|&&d| d)
                .count()
                .to_string(),
        );
        match &r.static_worst.direction {
            Some(v) => row.extend(v.iter().map(|&x| fmt_f64(x))),
            None => row.extend(labels.iter().map(|_| String::new())),
        }
        bounds.row(&row)?;

        for (k, s) in r.sequence_worst.directions.iter().enumerate() {
            let mut row = vec![
                id.clone(),
                seed.clone(),
                k.to_string(),
                fmt_f64(r.sequence_worst.row_norms[k]),
            ];
            row.extend(s.iter().map(|&x| fmt_f64(x)));
            row.push(r.sequence_worst.degenerate[k].to_string());
            worst.row(&row)?;
        }
    }
    sens.finish()?;
    bounds.finish()?;
    worst.finish()?;
    ctx.write_metadata("analyze")?;
    Ok(reports)
}

pub struct CertifyOutcome {
    pub certificates: Vec<(usize, PerformanceCertificate)>,
    pub skipped: usize,
    /// Geometric mean of `δ̄_iter/δ̄_analytic` per structure.
    pub ratio_geometric_mean: Vec<f64>,
}

fn status_name(s: MarginStatus) -> &'static str {
    match s {
        MarginStatus::Certified => "certified",
        MarginStatus::AlreadyViolating => "already_violating",
        MarginStatus::Unbounded => "unbounded",
    }
}

pub fn certify(ctx: &Context, controllers: Option<&Path>) -> CliResult<CertifyOutcome> {
    let exp = &ctx.experiment;
    let loaded = load_controllers(ctx, controllers)?;
    create_dir(ctx.out_dir())?;
    let eps = ctx.config.analysis.epsilon;
    let a1 = ctx.config.iterative_config();
    let t = Instant::now();
    let results = parallel::map(&loaded, |c| {
        if c.entry.nominal_error >= eps {
            return Ok(None);
        }
        certify_controller(&exp.sys, &c.file.pulse, &exp.target, &exp.basis, &a1).map(Some)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    info!(
        "certified {} controllers (d = {}) in {:.2} s",
        results.iter().flatten().count(),
        a1.step,
        t.elapsed().as_secs_f64()
    );

    let labels = ctx.labels();
    let seed = ctx.seed();
    let cols = header(
        &[
            "controller",
            "seed",
            "restart",
            "status",
            "nominal_error",
            "epsilon",
        ],
        &[
            "b1_",
            "analytic_delta_",
            "analytic_status_",
            "analytic_error_",
        ],
        &labels,
        &[
            "alg1_step",
            "iter_n",
            "iter_delta",
            "iter_error",
            "iter_cap_exceeded",
            "iter_monotone",
        ],
    )
    .into_iter()
    .chain(labels.iter().map(|l| format!("iter_error_{l}")))
    .chain(labels.iter().map(|l| format!("ratio_{l}")))
    .collect::<Vec<_>>();
    let width = cols.len();
    let mut table = Table::create(&ctx.out_dir().join("certificates.csv"), &cols)?;
    let mut trace = Table::create(
        &ctx.out_dir().join("iter_trace.csv"),
        &header(
            &["controller", "seed", "n", "delta", "error"],
            &[],
            &[],
            &[],
        ),
    )?;
    let mut certificates = Vec::new();
    let mut skipped = 0;
    for (c, r) in loaded.iter().zip(results) {
        let id = c.entry.index.to_string();
        let mut row = vec![id.clone(), seed.clone(), c.file.restart.to_string()];
        let Some(cert) = r else {
            warn!(
                "controller {} skipped: e(0) = {} is not below ε = {eps}",
                c.entry.index, c.entry.nominal_error
            );
            skipped += 1;
            row.push("skipped_nominal_not_below_epsilon".into());
            row.push(fmt_f64(c.entry.nominal_error));
            row.push(fmt_f64(eps));
            row.resize(width, String::new());
            table.row(&row)?;
            continue;
        };
        let a = &cert.iterative;
        row.push("ok".into());
        row.push(fmt_f64(cert.nominal_error));
        row.push(fmt_f64(cert.epsilon));
        row.extend(cert.b1.iter().map(|&b| fmt_f64(b)));
        row.extend(cert.analytic.iter().map(|m| fmt_f64(m.delta_bar)));
        row.extend(
            cert.analytic
                .iter()
                .map(|m| status_name(m.status).to_string()),
        );
        row.extend(
            cert.analytic_errors
                .iter()
                .map(|e| e.map(fmt_f64).unwrap_or_default()),
        );
        row.push(fmt_f64(a.step));
        row.push(a.n_bar.to_string());
        row.push(fmt_f64(a.delta_bar));
        row.push(fmt_f64(a.error_at_delta_bar()));
        row.push(a.cap_exceeded.to_string());
        row.push(a.is_monotone().to_string());
        row.extend(cert.iterative_errors.iter().map(|&e| fmt_f64(e)));
        row.extend((0..labels.len()).map(|m| fmt_f64(cert.ratio(m))));
        table.row(&row)?;
        for (n, (delta, e)) in a.trace.iter().enumerate() {
            trace.row(&[
                id.clone(),
                seed.clone(),
                n.to_string(),
                fmt_f64(*delta),
                fmt_f64(*e),
            ])?;
        }
        if a.cap_exceeded {
            warn!("controller {}: iteration cap reached", c.entry.index);
        }
        if !a.is_monotone() {
            warn!(
                "controller {}: non-monotone worst-case trace",
                c.entry.index
            );
        }
        certificates.push((c.entry.index, cert));
    }
    table.finish()?;
    trace.finish()?;
    let ratio_geometric_mean = (0..labels.len())
        .map(|m| {
            let logs: Vec<f64> = certificates
                .iter()
                .map(|(_, c)| c.ratio(m))
                .filter(|r| r.is_finite() && *r > 0.0)
                .map(f64::ln)
                .collect();
            if logs.is_empty() {
                f64::NAN
            } else {
                (logs.iter().sum::<f64>() / logs.len() as f64).exp()
            }
        })
        .collect::<Vec<_>>();
    for (l, g) in labels.iter().zip(&ratio_geometric_mean) {
        info!("geometric mean δ̄_iter/δ̄_analytic for {l}: {g:.2}");
    }
    ctx.write_metadata("certify")?;
    Ok(CertifyOutcome {
        certificates,
        skipped,
        ratio_geometric_mean,
    })
}

pub struct SweepOutcome {
    /// Largest `max_δ |ζ(δ)| / B1` over all sweeps.
    pub max_zeta_over_b1: f64,
    pub sweeps: usize,
}

pub fn sweep(ctx: &Context, controllers: Option<&Path>) -> CliResult<SweepOutcome> {
    let exp = &ctx.experiment;
    let a = &ctx.config.analysis;
    let loaded = load_controllers(ctx, controllers)?;
    create_dir(ctx.out_dir())?;
    let seed = ctx.seed();
    let mut table = Table::create(
        &ctx.out_dir().join("sweep.csv"),
        &header(
            &[
                "controller",
                "seed",
                "structure",
                "delta",
                "error",
                "zeta",
                "b1",
            ],
            &[],
            &[],
            &[],
        ),
    )?;
    let t = Instant::now();
    let mut max_ratio: f64 = 0.0;
    let mut sweeps = 0;
    for c in &loaded {
        for s in exp.basis.elements() {
            let tr = error_sweep(
                &exp.sys,
                &c.file.pulse,
                &exp.target,
                s,
                a.sweep_min,
                a.sweep_max,
                a.sweep_points,
            )?;
            let b1 = qsens_core::sensitivity::bound_b1(&exp.sys, &c.file.pulse, s)?;
            if b1 > 0.0 {
                max_ratio = max_ratio.max(tr.max_abs_zeta() / b1);
            }
            for i in 0..tr.len() {
                table.row(&[
                    c.entry.index.to_string(),
                    seed.clone(),
                    tr.label.clone(),
                    fmt_f64(tr.delta[i]),
                    fmt_f64(tr.error[i]),
                    tr.zeta[i].map(fmt_f64).unwrap_or_default(),
                    fmt_f64(b1),
                ])?;
            }
            sweeps += 1;
        }
    }
    table.finish()?;
    info!(
        "{sweeps} sweeps of {} points in {:.1} s, max |ζ(δ)|/B1 = {max_ratio:.3e}",
        a.sweep_points,
        t.elapsed().as_secs_f64()
    );
    ctx.write_metadata("sweep")?;
    Ok(SweepOutcome {
        max_zeta_over_b1: max_ratio,
        sweeps,
    })
}

/// Renders every figure whose input CSVs are present in `dir`.
pub fn plot(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, chart: plot::Chart| -> CliResult<()> {
        let path = dir.join(name);
        std::fs::write(&path, chart.render())
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        written.push(path);
        Ok(())
    };
    let sens = dir.join("sensitivity.csv");
    let bounds = dir.join("bounds.csv");
    if sens.exists() || bounds.exists() {
        let chart = plot::sensitivity_chart(&CsvData::read(&sens)?, &CsvData::read(&bounds)?)?;
        emit("fig1_sensitivity.svg", chart)?;
    }
    let certs = dir.join("certificates.csv");
    if certs.exists() {
        let data = CsvData::read(&certs)?;
        emit("fig2_analytic_margin.svg", plot::analytic_chart(&data)?)?;
        emit("fig3_iterative_margin.svg", plot::iterative_chart(&data)?)?;
        emit("fig4_margins.svg", plot::margin_chart(&data)?)?;
    }
    if written.is_empty() {
        return Err(CliError::data(
            dir,
            "no result CSVs to plot (expected sensitivity.csv/bounds.csv or certificates.csv)",
        ));
    }
    for p in &written {
        info!("wrote {}", p.display());
    }
    Ok(written)
}

/// Full pipeline; returns the summary text also written to `summary.txt`.
pub fn case_study(ctx: &Context) -> CliResult<String> {
    let start = Instant::now();
    let synth = synthesize(ctx)?;
    let reports = analyze(ctx, None)?;
    let certs = certify(ctx, None)?;
    let sweep = sweep(ctx, None)?;
    plot(ctx.out_dir())?;

    let eps = ctx.config.analysis.epsilon;
    let labels = ctx.labels();
    let below_eps = synth
        .controllers
        .iter()
        .filter(|c| c.nominal_error < eps)
        .count();
    let mut chain_slack = f64::INFINITY;
    for r in &reports {
        for z in &r.zeta {
            chain_slack = chain_slack.min(r.b2() - z.abs());
        }
        chain_slack = chain_slack.min(r.b3() - r.b2());
    }
    let analytic_ok = certs
        .certificates
        .iter()
        .all(|(_, c)| c.analytic_errors.iter().flatten().all(|&e| e < eps));
    let iter_ok = certs
        .certificates
        .iter()
        .all(|(_, c)| c.iterative_errors.iter().all(|&e| e < eps));
    let ratios: Vec<String> = labels
        .iter()
        .zip(&certs.ratio_geometric_mean)
        .map(|(l, g)| format!("{l} {g:.2}"))
        .collect();
    let summary = format!(
        "system hash        {}\n\
         target             {}\n\
         seed               {}\n\
         restarts run       {}\n\
         accepted           {} (e(0) < {})\n\
         below epsilon      {below_eps} (ε = {eps})\n\
         bound chain slack  {chain_slack:.3e} (min of B2 − |ζ| and B3 − B2)\n\
         analytic margin    ẽ(δ̄) < ε for every structure: {analytic_ok}\n\
         iterative margin   ẽ(δ̄) < ε for every structure: {iter_ok}\n\
         margin ratio       geometric mean δ̄_iter/δ̄_analytic: {}\n\
         skipped            {}\n\
         sweeps             {} (max |ζ(δ)|/B1 = {:.3e})\n\
         wall time          {:.1} s\n",
        ctx.experiment.system_hash,
        ctx.experiment.target_desc,
        ctx.config.seed,
        synth.controllers.len(),
        synth.accepted,
        ctx.config.synthesis.target_error,
        ratios.join(", "),
        certs.skipped,
        sweep.sweeps,
        sweep.max_zeta_over_b1,
        start.elapsed().as_secs_f64()
    );
    let path = ctx.out_dir().join("summary.txt");
    std::fs::write(&path, &summary)
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(summary)
}
