use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::Serialize;

use stabent::ams::{
    ams_convergence_diagnostic, cesaro_measure, empirical_moment, equal_windows, CesaroEstimate, MomentEstimate,
    Region, WindowReport,
};
use stabent::bounds::{
    cocycle_rate_lower, inf_logdet, linear_bound, logdet_integral_estimate, logdet_profile, moment_bound, selgrade_sum,
    volume_bound, BoundReport, CocycleResult, GridSpec, InfLogdet, DEFAULT_MOMENT_GRID, DEFAULT_POINTS_PER_AXIS,
};
use stabent::channels::{dmc_capacity, random_code_experiment, CapacityReport, ChannelModel, CodingReport};
use stabent::combinatorics::{
    binomial_tail_rate, disjoint_subcollection, sanov_rate, subset_count_rate, DisjointSelection,
};
use stabent::entropy::{
    entropy_rate_fit, greedy_spanning_estimate, spanning_count_oracle_affine, CandidateSource, RateFit,
};
use stabent::estimation::{
    bin_pipeline, estimation_experiment, step5_feasibility, tail_ratio, BinPipelineResult, EstimationReport,
    EstimationSettings, Step5, TailRatio,
};
use stabent::models::{Control, Distribution, Drift, MapKind, SystemModel, TrajectoryEnsemble};
use stabent::policies::{closed_loop_run, ClosedLoopRun, PolicyState, ZoomConfig};
use stabent::reproduce::{worked_examples, Check};
use stabent::Error;

use crate::config::{keyed, missing, ExperimentConfig, RateLemma, TheoremArg};
use crate::output::{num, Output};
use crate::CliError;

pub struct Ctx {
    pub config: ExperimentConfig,
    /// Directory that relative paths in the config resolve against.
    pub base: PathBuf,
    pub out: Output,
}

impl Ctx {
    fn model(&self) -> Result<SystemModel, CliError> {
        let spec = self.config.model.as_ref().ok_or_else(|| missing("model"))?;
        Ok(spec.build().map_err(|e| keyed("model", e))?)
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.config
            .seed
            .ok_or_else(|| CliError::Core(Error::Input("seed: missing; set it in the config or pass --seed".into())))
    }

    fn policy(&self) -> Result<&ZoomConfig, CliError> {
        self.config.policy.as_ref().ok_or_else(|| missing("policy"))
    }

    /// The configured channel, or a noiseless one wide enough for the policy.
    fn channel_for(&self, policy: &PolicyState) -> Result<ChannelModel, CliError> {
        match &self.config.channel {
            Some(c) => c.build(&self.base),
            None => Ok(ChannelModel::noiseless(policy.params.alphabet())?),
        }
    }

    /// Closed loop when a policy is configured, open loop otherwise.
    fn ensemble(
        &self,
        model: &SystemModel,
        horizon: usize,
        count: usize,
    ) -> Result<(TrajectoryEnsemble, Option<ClosedLoopRun>), CliError> {
        let seed = self.seed()?;
        if let Some(cfg) = &self.config.policy {
            let policy = PolicyState::new(cfg, model).map_err(|e| keyed("policy", e))?;
            let channel = self.channel_for(&policy)?;
            let run = closed_loop_run(model, &policy, &channel, horizon, count, seed)?;
            Ok((run.ensemble.clone(), Some(run)))
        } else {
            let controls = vec![Control::switched(0, vec![0.0; model.input_dim()]); horizon];
            Ok((model.sample_ensemble(&controls, count, horizon, seed)?, None))
        }
    }
}

#[derive(Serialize)]
struct SimulateResult {
    mode: &'static str,
    trajectories: usize,
    horizon: usize,
    dimension: usize,
    bits_per_step: Option<u32>,
    distinct_control_sequences: Option<usize>,
    /// Mean of `|x_T|` per coordinate.
    mean_abs_final: Vec<f64>,
}

pub fn simulate(ctx: &mut Ctx) -> Result<(), CliError> {
    let p = ctx.config.simulate.clone().ok_or_else(|| missing("simulate"))?;
    let model = ctx.model()?;
    let seed = ctx.seed()?;
    let (ensemble, run) = if ctx.config.policy.is_some() {
        ctx.ensemble(&model, p.horizon, p.count)?
    } else {
        let controls: Vec<Control> = (0..p.horizon)
            .map(|t| {
                let input = p.controls.as_ref().and_then(|c| c.get(t).cloned()).unwrap_or(vec![0.0; model.input_dim()]);
                let mode = p.modes.as_ref().and_then(|m| m.get(t).copied()).unwrap_or(0);
                Control::switched(mode, input)
            })
            .collect();
        let e = model.sample_ensemble(&controls, p.count, p.horizon, seed).map_err(|e| keyed("simulate", e))?;
        (e, None)
    };
    let n = model.dimension();
    let header: Vec<String> =
        ["trajectory".to_string(), "t".to_string()].into_iter().chain((0..n).map(|i| format!("x{i}"))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = ensemble.trajectories.iter().enumerate().flat_map(|(i, tr)| {
        tr.states()
            .enumerate()
            .map(move |(t, x)| [i.to_string(), t.to_string()].into_iter().chain(x.iter().map(|v| num(*v))).collect())
            .collect::<Vec<Vec<String>>>()
    });
    ctx.out.csv("trajectories.csv", &header, rows)?;
    if let Some(run) = &run {
        write_symbols(&mut ctx.out, run)?;
    }
    let mean_abs_final = (0..n)
        .map(|i| {
            ensemble.trajectories.iter().map(|tr| tr.state(p.horizon)[i].abs()).sum::<f64>() / ensemble.len() as f64
        })
        .collect();
    let result = SimulateResult {
        mode: if run.is_some() { "closed_loop" } else { "open_loop" },
        trajectories: ensemble.len(),
        horizon: p.horizon,
        dimension: n,
        bits_per_step: run.as_ref().map(|r| r.bits_per_step),
        distinct_control_sequences: run.as_ref().map(|r| r.distinct_control_sequences(p.horizon)),
        mean_abs_final,
    };
    println!("simulated {} trajectories, T = {} ({})", result.trajectories, result.horizon, result.mode);
    ctx.out.report("simulate", &ctx.config, &result)
}

fn write_symbols(out: &mut Output, run: &ClosedLoopRun) -> Result<(), CliError> {
    let dim = run.logs.first().and_then(|l| l.first()).map_or(1, |r| r.control.len());
    let header: Vec<String> = ["trajectory", "t", "q", "q_received"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|i| if dim == 1 { "u".to_string() } else { format!("u{i}") }))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = run.logs.iter().enumerate().flat_map(|(i, log)| {
        log.iter()
            .map(move |r| {
                [i.to_string(), r.t.to_string(), r.sent.to_string(), r.received.to_string()]
                    .into_iter()
                    .chain(r.control.iter().map(|v| num(*v)))
                    .collect()
            })
            .collect::<Vec<Vec<String>>>()
    });
    out.csv("symbols.csv", &header, rows)
}

#[derive(Serialize)]
struct AmsResult {
    horizon: usize,
    trajectories: usize,
    estimates: Vec<CesaroEstimate>,
    moments: Vec<MomentEstimate>,
    windows: Vec<WindowReport>,
}

pub fn ams(ctx: &mut Ctx) -> Result<(), CliError> {
    let p = ctx.config.ams.clone().ok_or_else(|| missing("ams"))?;
    if p.regions.is_empty() {
        return Err(CliError::Core(Error::Input("ams.regions: at least one region is required".into())));
    }
    let model = ctx.model()?;
    let (ensemble, _) = ctx.ensemble(&model, p.horizon, p.count)?;
    let estimates = p
        .regions
        .iter()
        .enumerate()
        .map(|(i, r)| cesaro_measure(&ensemble, r, p.horizon).map_err(|e| keyed(&format!("ams.regions[{i}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;
    let moments = p
        .moments
        .iter()
        .enumerate()
        .map(|(i, &q)| empirical_moment(&ensemble, q, p.horizon).map_err(|e| keyed(&format!("ams.moments[{i}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;
    let windows = p
        .regions
        .iter()
        .map(|r| ams_convergence_diagnostic(&ensemble, r, &equal_windows(p.horizon, p.windows), p.epsilon))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| keyed("ams.windows", e))?;
    ctx.out.csv(
        "ams.csv",
        &["region", "horizon", "hits", "total", "q_hat"],
        estimates.iter().enumerate().map(|(i, e)| {
            vec![i.to_string(), p.horizon.to_string(), e.hits.to_string(), e.total.to_string(), num(e.value)]
        }),
    )?;
    ctx.out.csv(
        "moments.csv",
        &["p", "horizon", "value", "diverged"],
        moments.iter().map(|m| vec![num(m.p), p.horizon.to_string(), num(m.value), m.diverged.to_string()]),
    )?;
    ctx.out.csv(
        "windows.csv",
        &["region", "start", "end", "q_hat"],
        windows.iter().enumerate().flat_map(|(i, w)| {
            w.windows
                .iter()
                .zip(&w.values)
                .map(|((s, e), v)| vec![i.to_string(), s.to_string(), e.to_string(), num(*v)])
                .collect::<Vec<_>>()
        }),
    )?;
    for (i, (e, w)) in estimates.iter().zip(&windows).enumerate() {
        println!("region {i}: Q_hat = {:.6}, window gap {:.4} (converged: {})", e.value, w.max_gap, w.converged);
    }
    let result = AmsResult { horizon: p.horizon, trajectories: ensemble.len(), estimates, moments, windows };
    ctx.out.report("ams", &ctx.config, &result)
}

#[derive(Serialize)]
#[serde(untagged)]
enum BoundDetail {
    Volume { inf_logdet: InfLogdet },
    Moment { kappa_star: f64, at_cap: bool },
    Cocycle { blocks: Vec<CocycleResult> },
    None {},
}

#[derive(Serialize)]
struct BoundResult {
    report: BoundReport,
    detail: BoundDetail,
}

pub fn bound(ctx: &mut Ctx, flag: Option<TheoremArg>) -> Result<(), CliError> {
    let mut p = ctx.config.bound.clone().unwrap_or_default();
    let theorem = flag.or(p.theorem).ok_or_else(|| missing("bound.theorem (or --theorem)"))?;
    p.theorem = Some(theorem);
    ctx.config.bound = Some(p.clone());
    let grid = GridSpec { points_per_axis: p.grid_points, budget: p.grid_budget, lipschitz: p.lipschitz };
    let result = match theorem {
        TheoremArg::Volume => {
            let model = ctx.model()?;
            let region = p.region.as_ref().ok_or_else(|| missing("bound.region"))?;
            let q = p.q.ok_or_else(|| missing("bound.q"))?;
            let inf = inf_logdet(&model, region, grid).map_err(|e| keyed("bound.region", e))?;
            let report = volume_bound(q, inf.certified_lower.unwrap_or(inf.value)).map_err(|e| keyed("bound.q", e))?;
            BoundResult { report, detail: BoundDetail::Volume { inf_logdet: inf } }
        }
        TheoremArg::Moment => {
            let model = ctx.model()?;
            let m_p = p.m_p.ok_or_else(|| missing("bound.m_p"))?;
            let power = p.p.ok_or_else(|| missing("bound.p"))?;
            let kappa_max = p.kappa_max.ok_or_else(|| missing("bound.kappa_max"))?;
            let points = p.grid_points.unwrap_or(DEFAULT_POINTS_PER_AXIS);
            let r = moment_bound(
                logdet_profile(&model, points),
                m_p,
                power,
                kappa_max,
                p.moment_grid.unwrap_or(DEFAULT_MOMENT_GRID),
            )
            .map_err(|e| keyed("bound", e))?;
            BoundResult { report: r.report, detail: BoundDetail::Moment { kappa_star: r.kappa_star, at_cap: r.at_cap } }
        }
        TheoremArg::Linear => {
            let a = match &p.matrix {
                Some(rows) => {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(CliError::Core(Error::Input("bound.matrix: must be square".into())));
                    }
                    DMatrix::from_fn(n, n, |i, j| rows[i][j])
                }
                None => ctx.model()?.drift().and_then(|d| d.matrix()).ok_or_else(|| {
                    CliError::Core(Error::Input("bound.matrix: missing and the model drift is not linear".into()))
                })?,
            };
            BoundResult {
                report: linear_bound(&a).map_err(|e| keyed("bound.matrix", e))?,
                detail: BoundDetail::None {},
            }
        }
        TheoremArg::Cocycle | TheoremArg::Selgrade if p.block_rates.is_none() || theorem == TheoremArg::Cocycle => {
            let model = ctx.model()?;
            let sl = match model.kind() {
                MapKind::Semilinear(s) => s.clone(),
                _ => {
                    return Err(CliError::Core(Error::Capability(
                        "model.map: cocycle rates need a semilinear model".into(),
                    )))
                }
            };
            let blocks = p.blocks.clone().unwrap_or_else(|| vec![(0..sl.dimension()).collect()]);
            let results = blocks
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    cocycle_rate_lower(&sl, b, p.n_max.unwrap_or(12), p.node_budget)
                        .map_err(|e| keyed(&format!("bound.blocks[{i}]"), e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            ctx.out.csv(
                "cocycle.csv",
                &["block", "n", "a_n", "rate"],
                results.iter().enumerate().flat_map(|(i, r)| {
                    r.a_n
                        .iter()
                        .zip(&r.rates)
                        .enumerate()
                        .map(|(n, (a, rate))| vec![i.to_string(), (n + 1).to_string(), num(*a), num(*rate)])
                        .collect::<Vec<_>>()
                }),
            )?;
            let report = if theorem == TheoremArg::Cocycle && results.len() == 1 {
                results[0].report.clone()
            } else {
                let rates: Vec<f64> = results.iter().map(|r| r.certified_rate).collect();
                selgrade_sum(&rates)?
            };
            BoundResult { report, detail: BoundDetail::Cocycle { blocks: results } }
        }
        TheoremArg::Cocycle | TheoremArg::Selgrade => {
            let rates = p.block_rates.clone().unwrap_or_default();
            BoundResult {
                report: selgrade_sum(&rates).map_err(|e| keyed("bound.block_rates", e))?,
                detail: BoundDetail::None {},
            }
        }
        TheoremArg::LogdetIntegral => {
            let model = ctx.model()?;
            let horizon = p.horizon.ok_or_else(|| missing("bound.horizon"))?;
            let count = p.count.ok_or_else(|| missing("bound.count"))?;
            let (ensemble, _) = ctx.ensemble(&model, horizon, count)?;
            BoundResult {
                report: logdet_integral_estimate(&model, &ensemble, horizon).map_err(|e| keyed("bound", e))?,
                detail: BoundDetail::None {},
            }
        }
    };
    let r = &result.report;
    ctx.out.csv(
        "bound.csv",
        &["theorem", "value", "raw_value", "certification"],
        [vec![
            serde_json::to_value(r.theorem).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default(),
            num(r.value),
            num(r.raw_value),
            serde_json::to_value(r.certification)
                .map(|v| v.as_str().unwrap_or_default().to_string())
                .unwrap_or_default(),
        ]],
    )?;
    println!("bound = {:.9} bits (raw {:.9})", r.value, r.raw_value);
    for (k, v) in &r.parameters {
        println!("  {k} = {v}");
    }
    for note in &r.notes {
        println!("  note: {note}");
    }
    ctx.out.report("bound", &ctx.config, &result)
}

#[derive(Serialize)]
struct EntropyRow {
    horizon: usize,
    count: usize,
    lower_bracket: f64,
    covered_fraction: f64,
    candidates: usize,
    oracle: Option<u64>,
}

#[derive(Serialize)]
struct EntropyResult {
    rows: Vec<EntropyRow>,
    fit: Option<RateFit>,
}

/// `ceil(|a|^(T-1))` applies to `x' = a x + u` without noise and with `π0` uniform on `B = [-h, h]`.
fn affine_oracle(model: &SystemModel, region: &Region) -> Option<(f64, f64)> {
    let a = match model.drift()? {
        Drift::Linear { matrix } if matrix.len() == 1 => matrix[0][0],
        _ => return None,
    };
    let (lo, hi) = match region {
        Region::Box { low, high } if low.len() == 1 => (low[0], high[0]),
        _ => return None,
    };
    let uniform_on_b = matches!(model.init(), Distribution::Uniform { low, high } if *low == lo && *high == hi);
    (a.abs() > 1.0 && lo == -hi && uniform_on_b && *model.noise() == Distribution::Zero).then_some((a, hi))
}

pub fn entropy(ctx: &mut Ctx) -> Result<(), CliError> {
    let p = ctx.config.entropy.clone().ok_or_else(|| missing("entropy"))?;
    let model = ctx.model()?;
    let seed = ctx.seed()?;
    let source = p.source.clone().unwrap_or_else(|| CandidateSource::Policy {
        policy: ctx.config.policy.clone().unwrap_or_else(|| ZoomConfig::new(3)),
    });
    let oracle = affine_oracle(&model, &p.region);
    let rows = p
        .horizons
        .iter()
        .map(|&t| {
            let e = greedy_spanning_estimate(&model, &p.region, t, p.rho, p.r, p.samples, &source, seed)
                .map_err(|e| keyed("entropy", e))?;
            let oracle = match oracle {
                Some((a, h)) if p.rho == 0.0 && p.r == 0.0 => Some(spanning_count_oracle_affine(a, h, t)?),
                _ => None,
            };
            Ok(EntropyRow {
                horizon: t,
                count: e.count,
                lower_bracket: e.lower_bracket,
                covered_fraction: e.set.covered_fraction,
                candidates: e.set.candidates,
                oracle,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let fit = if rows.len() >= 3 {
        Some(entropy_rate_fit(&rows.iter().map(|r| (r.horizon, r.count as f64)).collect::<Vec<_>>())?)
    } else {
        None
    };
    ctx.out.csv(
        "entropy.csv",
        &["horizon", "count", "lower_bracket", "covered_fraction", "candidates", "oracle"],
        rows.iter().map(|r| {
            vec![
                r.horizon.to_string(),
                r.count.to_string(),
                num(r.lower_bracket),
                num(r.covered_fraction),
                r.candidates.to_string(),
                r.oracle.map(|o| o.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    for r in &rows {
        let oracle = r.oracle.map(|o| format!(", oracle {o}")).unwrap_or_default();
        println!("T = {:>3}: count {} (optimum >= {:.2}){oracle}", r.horizon, r.count, r.lower_bracket);
    }
    if let Some(f) = &fit {
        println!("fitted rate {:.4} bits/step ({})", f.slope, f.caveat);
    }
    ctx.out.report("entropy", &ctx.config, &EntropyResult { rows, fit })
}

#[derive(Serialize)]
struct ChannelResult {
    capacity: CapacityReport,
    coding: Vec<CodingReport>,
}

pub fn channel(ctx: &mut Ctx) -> Result<(), CliError> {
    let spec = ctx.config.channel.clone().ok_or_else(|| missing("channel"))?;
    let ch = spec.build(&ctx.base)?;
    let p = ctx.config.coding.clone().unwrap_or(crate::config::CodingParams {
        tol: 1e-9,
        rates: Vec::new(),
        blocklength: None,
        trials: None,
    });
    let capacity = dmc_capacity(&ch, p.tol).map_err(|e| keyed("coding.tol", e))?;
    let mut coding = Vec::new();
    if !p.rates.is_empty() {
        let n = p.blocklength.ok_or_else(|| missing("coding.blocklength"))?;
        let k = p.trials.ok_or_else(|| missing("coding.trials"))?;
        let seed = ctx.seed()?;
        for (i, &rate) in p.rates.iter().enumerate() {
            coding.push(
                random_code_experiment(&ch, rate, n, k, seed).map_err(|e| keyed(&format!("coding.rates[{i}]"), e))?,
            );
        }
    }
    ctx.out.csv(
        "coding.csv",
        &["rate", "blocklength", "trials", "errors", "error_rate", "mode"],
        coding.iter().map(|c| {
            vec![
                num(c.rate),
                c.blocklength.to_string(),
                c.trials.to_string(),
                c.errors.to_string(),
                num(c.error_rate),
                format!("{:?}", c.mode),
            ]
        }),
    )?;
    println!("capacity = {:.9} bits/use [{:.9}, {:.9}]", capacity.capacity, capacity.lower, capacity.upper);
    for c in &coding {
        println!("rate {:.3}: block error {:.4} over {} trials", c.rate, c.error_rate, c.trials);
    }
    ctx.out.report("channel", &ctx.config, &ChannelResult { capacity, coding })
}

#[derive(Serialize)]
struct RateResult {
    binomial_tail_rate: f64,
    sanov_rate: f64,
    subset_count_rate: f64,
}

pub fn lemma_rate(ctx: &mut Ctx, flags: Option<RateLemma>) -> Result<(), CliError> {
    let mut params = ctx.config.lemmas.clone().unwrap_or_default();
    let l = flags.or(params.rate.clone()).ok_or_else(|| missing("lemmas.rate (or --horizon and --r)"))?;
    params.rate = Some(l.clone());
    ctx.config.lemmas = Some(params);
    let key = |e| keyed("lemmas.rate", e);
    let result = RateResult {
        binomial_tail_rate: binomial_tail_rate(l.horizon, l.r, l.alpha, l.beta).map_err(key)?,
        sanov_rate: sanov_rate(l.r, l.alpha, l.beta).map_err(key)?,
        subset_count_rate: subset_count_rate(l.horizon, l.r).map_err(key)?,
    };
    println!(
        "T = {}, r = {}: tail rate {:.6}, limit {:.6}, subset rate {:.6}",
        l.horizon, l.r, result.binomial_tail_rate, result.sanov_rate, result.subset_count_rate
    );
    ctx.out.csv(
        "rate.csv",
        &["horizon", "r", "alpha", "beta", "binomial_tail_rate", "sanov_rate", "subset_count_rate"],
        [vec![
            l.horizon.to_string(),
            num(l.r),
            num(l.alpha),
            num(l.beta),
            num(result.binomial_tail_rate),
            num(result.sanov_rate),
            num(result.subset_count_rate),
        ]],
    )?;
    ctx.out.report("lemmas-rate", &ctx.config, &result)
}

pub fn lemma_intervals(ctx: &mut Ctx, flags: Vec<(f64, f64)>) -> Result<(), CliError> {
    let mut params = ctx.config.lemmas.clone().unwrap_or_default();
    let iv = if flags.is_empty() {
        params.intervals.clone().ok_or_else(|| missing("lemmas.intervals (or --interval)"))?
    } else {
        flags
    };
    params.intervals = Some(iv.clone());
    ctx.config.lemmas = Some(params);
    let sel: DisjointSelection = disjoint_subcollection(&iv).map_err(|e| keyed("lemmas.intervals", e))?;
    println!(
        "selected {:?} ({} of {}), measure {} of union {}",
        sel.selected,
        sel.selected.len(),
        iv.len(),
        sel.selected_measure,
        sel.union_measure
    );
    ctx.out.csv(
        "intervals.csv",
        &["index", "left", "right", "selected"],
        iv.iter()
            .enumerate()
            .map(|(i, (a, b))| vec![i.to_string(), num(*a), num(*b), sel.selected.contains(&i).to_string()]),
    )?;
    ctx.out.report("lemmas-intervals", &ctx.config, &sel)
}

#[derive(Serialize)]
struct NoisyDemoResult {
    estimation: EstimationReport,
    bin_radius: f64,
    pipeline: Option<BinPipelineResult>,
    pipeline_note: Option<String>,
    step5: Step5,
    tail_ratios: Vec<TailRatio>,
}

pub fn noisy_demo(ctx: &mut Ctx) -> Result<(), CliError> {
    let p = ctx.config.noisy_demo.clone().ok_or_else(|| missing("noisy_demo"))?;
    let model = ctx.model()?;
    let cfg = ctx.policy()?.clone();
    let state = PolicyState::new(&cfg, &model).map_err(|e| keyed("policy", e))?;
    let channel = ctx.channel_for(&state)?;
    let settings = EstimationSettings {
        b: p.b,
        r_star: p.r_star,
        horizons: p.horizons.clone(),
        trials: p.trials,
        seed: ctx.seed()?,
        domain: p.domain,
        c: p.c,
    };
    let estimation = estimation_experiment(&model, &channel, &cfg, &settings).map_err(|e| keyed("noisy_demo", e))?;
    let bounds = model.density_bounds();
    let support = p.support.or(bounds.map(|b| b.support)).ok_or_else(|| missing("noisy_demo.support"))?;
    let p_min = p.p_min.or(bounds.map(|b| b.p_min)).ok_or_else(|| missing("noisy_demo.p_min"))?;
    let p_max = p.p_max.or(bounds.map(|b| b.p_max)).ok_or_else(|| missing("noisy_demo.p_max"))?;
    let t_max = *p.horizons.iter().max().unwrap_or(&1);
    let bin_radius = p.b * estimation.c.powf(-(1.0 - 3.0 * p.r_star) * t_max as f64);
    let init = model.init().clone();
    let (pipeline, pipeline_note) =
        match bin_pipeline(&estimation.centers, bin_radius, p.group_size, support, p_min, p_max, Some(&init)) {
            Ok(r) => (Some(r), None),
            Err(Error::Input(m)) if !estimation.centers.is_empty() && m.contains("no bin") => (None, Some(m)),
            Err(e) if estimation.centers.is_empty() => (None, Some(format!("no estimator centers: {e}"))),
            Err(e) => return Err(keyed("noisy_demo", e).into()),
        };
    let step5 =
        step5_feasibility(p_min, p_max, p.r_star, p.alpha, p.group_size, 0.0).map_err(|e| keyed("noisy_demo", e))?;
    let tail_ratios = if p.eps_grid.is_empty() {
        Vec::new()
    } else {
        tail_ratio(&init, &p.eps_grid).map_err(|e| keyed("noisy_demo.eps_grid", e))?
    };
    let curve_rows = |mode: &'static str, pts: &[stabent::estimation::ExceedancePoint]| -> Vec<Vec<String>> {
        pts.iter()
            .map(|e| {
                vec![
                    mode.to_string(),
                    e.horizon.to_string(),
                    num(e.threshold),
                    e.trials.to_string(),
                    e.exceedances.to_string(),
                    e.empty_sets.to_string(),
                    num(e.frequency),
                    num(e.control_rate),
                ]
            })
            .collect()
    };
    let mut rows = curve_rows("averaged", &estimation.averaged);
    rows.extend(curve_rows("fixed", &estimation.fixed));
    ctx.out.csv(
        "exceedance.csv",
        &["mode", "horizon", "threshold", "trials", "exceedances", "empty_sets", "frequency", "control_rate"],
        rows,
    )?;
    let rate_rows = estimation
        .averaged
        .iter()
        .map(|e| ("averaged", e))
        .chain(estimation.fixed.iter().map(|e| ("fixed", e)))
        .map(|(m, e)| vec![m.to_string(), e.horizon.to_string(), num(e.control_rate), num(e.frequency)]);
    ctx.out.csv("rate_error.csv", &["mode", "horizon", "control_rate", "error"], rate_rows)?;
    for e in &estimation.averaged {
        println!("T = {:>3}: exceedance {:.4}, control rate {:.4}", e.horizon, e.frequency, e.control_rate);
    }
    match (&pipeline, &pipeline_note) {
        (Some(b), _) => println!(
            "bins: n1 = {}, n2 = {}, n3 = {}, beta = {:.4}, checks pass: {}",
            b.n1,
            b.n2,
            b.n3,
            b.coupling_beta,
            b.checks.all()
        ),
        (None, Some(note)) => println!("bins: {note}"),
        (None, None) => {}
    }
    println!("step-5 value {:.6} (contradiction: {})", step5.value, step5.contradiction);
    let result = NoisyDemoResult { estimation, bin_radius, pipeline, pipeline_note, step5, tail_ratios };
    ctx.out.report("noisy-demo", &ctx.config, &result)
}

#[derive(Serialize)]
struct ReproduceResult {
    checks: Vec<Check>,
    passed: usize,
    failed: usize,
}

/// Returns the number of failed checks.
pub fn reproduce(ctx: &mut Ctx) -> Result<usize, CliError> {
    let checks = worked_examples()?;
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!(
            "{:<width$}  {}  observed {:.9}  expected {:.9}  tol {:e}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.observed,
            c.expected,
            c.tolerance
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    ctx.out.csv(
        "reproduce.csv",
        &["check", "expected", "observed", "tolerance", "passed"],
        checks
            .iter()
            .map(|c| vec![c.name.clone(), num(c.expected), num(c.observed), num(c.tolerance), c.passed.to_string()]),
    )?;
    let result = ReproduceResult { passed: checks.len() - failed, failed, checks };
    ctx.out.report("reproduce", &ctx.config, &result)?;
    Ok(failed)
}
