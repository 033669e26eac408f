//! The `regress`, `bound`, `optimize` and `online` subcommands.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cautious_core::{
    assemble_batch, certify_convexity, minimize_upper, optimality_gap, point_bounds, run_online, trial_rng, weighted_minimize,
    BasisSet, ConvexityCertificate, Error, GapOptions, IntersectionSet, MeasurementBatch, MeasurementOracle, NoiseMode,
    NoiseModel, OnlineOptions, OnlineRunLog, OptimizeOptions, ParameterSet, Polytope, ReplayOracle, SampleStencil,
    SyntheticOracle,
};
use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{parse_points, parse_replay, NoiseModeSpec, OracleSpec, ScenarioConfig};
use crate::output::{csv_line, num, numbered, write_file, GapSummary, OnlineSummary, OptimizeSummary};
use crate::{CliError, Format, GlobalOpts};

pub struct Context {
    pub cfg: ScenarioConfig,
    pub opts: GlobalOpts,
    basis: BasisSet,
    noise: NoiseModel,
}

impl Context {
    pub fn new(cfg: ScenarioConfig, opts: GlobalOpts) -> Result<Self, CliError> {
        cfg.validate()?;
        let basis = cfg.basis_set()?;
        let noise = cfg.noise_model()?;
        Ok(Self { cfg, opts, basis, noise })
    }

    fn seed(&self) -> u64 {
        self.opts.seed.unwrap_or(self.cfg.seed)
    }

    fn stencil(&self) -> Result<SampleStencil, CliError> {
        SampleStencil::new(self.cfg.offsets()).map_err(|e| CliError::Config(format!("stencil: {e}")))
    }

    fn replay_rows(&self) -> Result<Option<Vec<(DVector<f64>, f64)>>, CliError> {
        match &self.cfg.oracle {
            OracleSpec::Replay { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read replay file {}: {e}", path.display())))?;
                Ok(Some(parse_replay(&text, self.cfg.n)?))
            }
            OracleSpec::Synthetic { .. } => Ok(None),
        }
    }

    fn synthetic(&self, seed: u64, trial: u64) -> Result<SyntheticOracle, CliError> {
        let OracleSpec::Synthetic { gamma_hat, noise_mode, w_bar } = &self.cfg.oracle else {
            unreachable!("only called for synthetic oracles");
        };
        let mode = match noise_mode {
            NoiseModeSpec::Uniform => NoiseMode::Uniform,
            NoiseModeSpec::Zero => NoiseMode::Zero,
            NoiseModeSpec::Constant => {
                NoiseMode::Constant(DVector::from_column_slice(w_bar.as_deref().expect("validated config")))
            }
        };
        SyntheticOracle::new(
            DVector::from_column_slice(gamma_hat),
            self.basis.clone(),
            self.noise.clone(),
            mode,
            trial_rng(seed, trial),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Measurement batches available before any optimization: one synthetic
    /// batch around `z0`, or every batch of the replay file.
    fn initial_batches(&self) -> Result<Vec<MeasurementBatch>, CliError> {
        match self.replay_rows()? {
            Some(rows) => {
                let replay = ReplayOracle::new(rows, self.cfg.stencil.len())?;
                replay
                    .batches()
                    .iter()
                    .map(|b| {
                        let pts = b.iter().map(|(z, _)| z.clone()).collect();
                        let y = DVector::from_iterator(b.len(), b.iter().map(|(_, y)| *y));
                        assemble_batch(&self.basis, pts, y).map_err(CliError::from)
                    })
                    .collect()
            }
            None => {
                let z0 = self.cfg.z0_vec();
                let pts: Vec<DVector<f64>> = self.cfg.offsets().iter().map(|f| &z0 + f).collect();
                let y = self.synthetic(self.seed(), 0)?.measure(&pts)?;
                Ok(vec![assemble_batch(&self.basis, pts, y)?])
            }
        }
    }

    fn first_set(&self) -> Result<ParameterSet, CliError> {
        let batches = self.initial_batches()?;
        Ok(ParameterSet::from_batch(&batches[0], &self.noise)?)
    }
}

fn verdict(c: &ConvexityCertificate) -> String {
    format!("{:?} ({:?})", c.verdict, c.method)
}

pub fn regress(ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let set = ctx.first_set()?;
    let k = set.dim();
    let names = ctx.basis.names();
    let intervals = (0..k)
        .map(|i| {
            let mut e = DVector::zeros(k);
            e[i] = 1.0;
            set.support_interval(&e)
        })
        .collect::<Result<Vec<_>, _>>()?;
    match ctx.opts.format {
        Format::Human => {
            writeln!(out, "least-squares estimate: {:?}", set.lse().as_slice())?;
            writeln!(out, "schur complement: {}", set.schur())?;
            writeln!(out, "single point: {}", set.is_singleton())?;
            writeln!(out, "{:>5}  {:<16} {:>24} {:>24} {:>24}", "index", "basis", "lse", "lower", "upper")?;
            for (i, (lo, hi)) in intervals.iter().enumerate() {
                writeln!(out, "{:>5}  {:<16} {:>24} {:>24} {:>24}", i, names[i], set.lse()[i], lo, hi)?;
            }
        }
        Format::Csv => {
            out.write_all(csv_line(["index", "basis", "lse", "lower", "upper"].map(String::from)).as_bytes())?;
            for (i, (lo, hi)) in intervals.iter().enumerate() {
                let row = [i.to_string(), names[i].clone(), num(set.lse()[i]), num(*lo), num(*hi)];
                out.write_all(csv_line(row).as_bytes())?;
            }
        }
        Format::JsonLines => {
            let rows: Vec<_> = intervals
                .iter()
                .enumerate()
                .map(|(i, (lo, hi))| serde_json::json!({"index": i, "basis": names[i], "lower": lo, "upper": hi}))
                .collect();
            let v = serde_json::json!({
                "lse": set.lse().as_slice(),
                "schur": set.schur(),
                "single_point": set.is_singleton(),
                "intervals": rows,
            });
            writeln!(out, "{v}")?;
        }
    }
    Ok(())
}

pub fn bound(ctx: &Context, points: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let set = ctx.first_set()?;
    let pts = match points {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_points(&text, ctx.cfg.n)?
        }
        None => vec![ctx.cfg.z0_vec()],
    };
    let n = ctx.cfg.n;
    let mut header = numbered("z", n);
    header.extend(["phi_minus", "phi_lse", "phi_plus", "uncertainty"].map(String::from));
    if ctx.opts.format == Format::Csv {
        out.write_all(csv_line(header.clone()).as_bytes())?;
    } else if ctx.opts.format == Format::Human {
        writeln!(out, "{}", header.iter().map(|h| format!("{h:>24}")).collect::<String>())?;
    }
    for z in &pts {
        let b = point_bounds(&set, &ctx.basis, z)?;
        let vals: Vec<f64> = z.iter().copied().chain([b.lower, b.lse, b.upper, b.uncertainty()]).collect();
        match ctx.opts.format {
            Format::Csv => out.write_all(csv_line(vals.iter().map(|&x| num(x))).as_bytes())?,
            Format::Human => writeln!(out, "{}", vals.iter().map(|x| format!("{x:>24.10}")).collect::<String>())?,
            Format::JsonLines => {
                let v = serde_json::json!({
                    "z": z.as_slice(), "phi_minus": b.lower, "phi_lse": b.lse, "phi_plus": b.upper, "uncertainty": b.uncertainty(),
                });
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(())
}

pub fn optimize(ctx: &Context, out: &mut dyn Write) -> Result<OptimizeSummary, CliError> {
    let batches = ctx.initial_batches()?;
    let sets = batches.iter().map(|b| ParameterSet::from_batch(b, &ctx.noise)).collect::<Result<Vec<_>, _>>()?;
    let cert = certify_convexity(&sets[0], &ctx.basis)?;
    if !cert.is_convex() {
        let msg = format!("the bound is not certified convex ({})", verdict(&cert));
        if !ctx.opts.force {
            return Err(Error::ConvexityPrecondition(format!("{msg}; rerun with --force to optimize anyway")).into());
        }
        warn!("{msg}; continuing because --force is set");
    }
    let lambda = ctx.cfg.lambda;
    if lambda > 0.0 && sets.len() > 1 {
        return Err(CliError::Config("lambda > 0 needs a single measurement batch".into()));
    }
    let inter = IntersectionSet::new(sets.clone())?;
    if !inter.check_nonempty().is_nonempty() {
        return Err(Error::Infeasible.into());
    }
    let poly = match &ctx.cfg.polytope {
        Some(v) => Polytope::new(v.iter().map(|z| DVector::from_column_slice(z)).collect())?,
        None => ctx.stencil()?.polytope_at(&ctx.cfg.z0_vec())?,
    };
    let z0 = ctx.cfg.z0_vec();
    let z_init = if poly.contains(&z0) { z0 } else { poly.nearest(&z0).point };
    let opts = OptimizeOptions::default();
    let plain = minimize_upper(&inter, &ctx.basis, &poly, &z_init, &opts)?;
    let chosen = if lambda > 0.0 { weighted_minimize(&sets[0], &ctx.basis, &poly, &z_init, lambda, &opts)? } else { plain.clone() };
    let gap_opts = GapOptions { suboptimality: plain.fw_gap, ..GapOptions::default() };
    let report = optimality_gap(&inter, &ctx.basis, &poly, &plain.z, &gap_opts)?;
    let summary = OptimizeSummary {
        z_star: chosen.z.iter().copied().collect(),
        value: chosen.bound(),
        lambda,
        fw_gap: chosen.fw_gap,
        solver_gap: chosen.solver_gap,
        members: inter.len(),
        convexity: verdict(&cert),
        gap_report: GapSummary::from(&report),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
    write_file(&ctx.cfg.output_dir, "optimize_summary.json", &(json + "\n"))?;
    match ctx.opts.format {
        Format::Human => {
            writeln!(out, "z* = {:?}", summary.z_star)?;
            writeln!(out, "worst-case bound = {}", summary.value)?;
            writeln!(out, "frank-wolfe gap = {:e}, solver gap = {:e}", summary.fw_gap, summary.solver_gap)?;
            writeln!(out, "convexity: {}", summary.convexity)?;
            writeln!(
                out,
                "optimum bracket: [{}, {}] (max uncertainty {}, {})",
                report.lower,
                report.upper,
                report.max_uncertainty,
                if report.certified { "exact" } else { "grid estimate" }
            )?;
        }
        Format::Csv => {
            let mut header = numbered("z", ctx.cfg.n);
            header.extend(["value", "fw_gap", "solver_gap", "gap_lower", "gap_upper"].map(String::from));
            out.write_all(csv_line(header).as_bytes())?;
            let vals = summary.z_star.iter().copied().chain([summary.value, summary.fw_gap, summary.solver_gap, report.lower, report.upper]);
            out.write_all(csv_line(vals.map(num)).as_bytes())?;
        }
        Format::JsonLines => writeln!(out, "{}", serde_json::to_string(&summary).map_err(std::io::Error::other)?)?,
    }
    Ok(summary)
}

/// Parses `a..b` (half-open) or `a..=b`.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("seed range must look like a..b or a..=b, got {s:?}"));
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

struct Trial {
    seed: u64,
    start: usize,
    z0: DVector<f64>,
}

fn trial_name(t: &Trial, multi_start: bool) -> String {
    if multi_start {
        format!("online_seed{}_start{}", t.seed, t.start)
    } else {
        format!("online_seed{}", t.seed)
    }
}

/// Per-iteration CSV of one run.
pub fn online_csv(log: &OnlineRunLog, n: usize, with_truth: bool) -> String {
    let t = log.y0.len();
    let mut header = vec!["k".to_string()];
    header.extend(numbered("z", n));
    header.extend(["bound", "uncertainty"].map(String::from));
    if with_truth {
        header.push("phi_hat_at_zk".into());
    }
    header.extend(numbered("y", t));
    header.extend(["sigma_min", "fw_gap", "solver_gap"].map(String::from));
    let mut s = csv_line(header);
    for step in &log.steps {
        let mut row = vec![step.k.to_string()];
        row.extend(step.z.iter().map(|&x| num(x)));
        row.push(num(step.bound));
        row.push(num(step.uncertainty));
        if with_truth {
            row.push(num(step.phi_hat.unwrap_or(f64::NAN)));
        }
        row.extend(step.y.iter().map(|&x| num(x)));
        row.extend([num(step.sigma_min), num(step.fw_gap), num(step.solver_gap)]);
        s.push_str(&csv_line(row));
    }
    s
}

pub fn online(ctx: &Context, seeds: Option<&str>, out: &mut dyn Write) -> Result<Vec<OnlineSummary>, CliError> {
    let stencil = ctx.stencil()?;
    let seeds = match seeds {
        Some(r) => parse_seed_range(r)?,
        None => vec![ctx.seed()],
    };
    let starts = ctx.cfg.starts();
    let multi_start = starts.len() > 1;
    let trials: Vec<Trial> = seeds
        .iter()
        .flat_map(|&seed| starts.iter().enumerate().map(move |(start, z0)| Trial { seed, start, z0: z0.clone() }))
        .collect();
    let replay = ctx.replay_rows()?;
    let with_truth = replay.is_none();

    let run_trial = |t: &Trial| -> Result<(OnlineSummary, String), CliError> {
        let started = Instant::now();
        let opts = OnlineOptions { force: ctx.opts.force, ..OnlineOptions::default() };
        let k = ctx.cfg.iterations;
        let log = match &replay {
            Some(rows) => {
                let oracle = ReplayOracle::new(rows.clone(), stencil.len())?;
                run_online(oracle, &ctx.basis, &stencil, &ctx.noise, t.z0.clone(), k, opts)
            }
            None => {
                let oracle = ctx.synthetic(t.seed, t.start as u64)?;
                run_online(oracle, &ctx.basis, &stencil, &ctx.noise, t.z0.clone(), k, opts)
            }
        }
        .map_err(|e| match e {
            Error::ConvexityPrecondition(m) => Error::ConvexityPrecondition(format!("{m}; rerun with --force to continue")),
            e => e,
        })?;
        let name = trial_name(t, multi_start);
        let csv = online_csv(&log, ctx.cfg.n, with_truth);
        let last = log.final_step();
        let summary = OnlineSummary {
            seed: t.seed,
            start_index: t.start,
            z0: t.z0.iter().copied().collect(),
            iterations: k,
            final_z: last.map_or_else(|| t.z0.iter().copied().collect(), |s| s.z.iter().copied().collect()),
            final_bound: last.map_or(f64::NAN, |s| s.bound),
            final_uncertainty: last.map_or(f64::NAN, |s| s.uncertainty),
            convexity: verdict(&log.certificate),
            gap_report: log.final_report().map(GapSummary::from),
            monotonicity_violations: log.monotonicity_violations.clone(),
            csv: format!("{name}.csv"),
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        write_file(&ctx.cfg.output_dir, &summary.csv, &csv)?;
        let json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
        write_file(&ctx.cfg.output_dir, &format!("{name}.json"), &(json + "\n"))?;
        info!("finished seed {} start {} in {:.2}s", t.seed, t.start, summary.wall_time_s);
        Ok((summary, csv))
    };

    let jobs = ctx.opts.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(OnlineSummary, String), CliError>> = pool.install(|| trials.par_iter().map(run_trial).collect());
    let mut summaries = Vec::with_capacity(results.len());
    for r in results {
        summaries.push(r?.0);
    }

    let aggregate = aggregate_csv(&summaries, ctx.cfg.n);
    write_file(&ctx.cfg.output_dir, "aggregate.csv", &aggregate)?;
    match ctx.opts.format {
        Format::Human => {
            for s in &summaries {
                let gap = s.gap_report.as_ref().map_or(String::new(), |g| format!(", optimum in [{:.6}, {:.6}]", g.lower, g.upper));
                writeln!(out, "seed {} start {}: z = {:?}, bound = {:.6}{gap}", s.seed, s.start_index, s.final_z, s.final_bound)?;
            }
        }
        Format::Csv => out.write_all(aggregate.as_bytes())?,
        Format::JsonLines => {
            for s in &summaries {
                writeln!(out, "{}", serde_json::to_string(s).map_err(std::io::Error::other)?)?;
            }
        }
    }
    Ok(summaries)
}

fn aggregate_csv(summaries: &[OnlineSummary], n: usize) -> String {
    let mut header = vec!["seed".to_string(), "start".to_string()];
    header.extend(numbered("z", n));
    header.extend(["final_bound", "final_uncertainty", "gap_lower", "gap_upper"].map(String::from));
    let mut s = csv_line(header);
    for r in summaries {
        let mut row = vec![r.seed.to_string(), r.start_index.to_string()];
        row.extend(r.final_z.iter().map(|&x| num(x)));
        row.push(num(r.final_bound));
        row.push(num(r.final_uncertainty));
        let (lo, hi) = r.gap_report.as_ref().map_or((f64::NAN, f64::NAN), |g| (g.lower, g.upper));
        row.push(num(lo));
        row.push(num(hi));
        s.push_str(&csv_line(row));
    }
    s
}
