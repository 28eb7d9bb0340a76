//! The experiment runners. Each fills a [`Run`] with tables, checks and results; the
//! rescalings used for plotting happen here so that the core library stays raw.

use coalescence::discrete::{
    critical_point, free_energy_scan, line_fit, LightCone, LineFit, SingularityLaw,
};
use coalescence::exactsol::{linear_data_blowup, single_exp_blowup};
use coalescence::pde::{
    blowup_time, single_exponential, EvolutionConfig, Evolver, GridFunction, Variant,
};
use coalescence::quad;
use coalescence::scaling::{
    fit_tail, positivity_window, solve_profile, tail_amplitude, ScalingProfile,
};
use coalescence::trees::{
    branch_step_distribution, continuous_no_branching, continuous_tree_statistics,
    discrete_tree_statistics, no_branching_prob, sample_continuous_tree, tree_rng,
    ContinuousConfig, DiscreteSampler, QHistory, TreeProfile, TreeStatistics, IDENTITY_TOLERANCE,
};
use coalescence::Error;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::*;
use crate::output::{Check, Table};
use crate::{row, Result};

/// Relative tolerance on blow-up times.
pub const BLOWUP_TOLERANCE: f64 = 0.03;
/// Monte Carlo agreement in standard errors.
pub const Z_LIMIT: f64 = 3.0;

/// Everything one experiment produces.
#[derive(Debug, Default)]
pub struct Run {
    /// `(suffix, table)`; the first table is the main output.
    pub tables: Vec<(&'static str, Table)>,
    /// `(suffix, json)` side files.
    pub documents: Vec<(&'static str, Value)>,
    pub checks: Vec<Check>,
    pub results: Map<String, Value>,
}

impl Run {
    fn table(&mut self, suffix: &'static str, t: Table) {
        self.tables.push((suffix, t));
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn result(&mut self, key: impl Into<String>, v: Value) {
        self.results.insert(key.into(), v);
    }
}

pub fn run_experiment(e: &Experiment, seed: Option<u64>) -> Result<Run> {
    let mut r = Run::default();
    match e {
        Experiment::Fig2(c) => fig2(c, &mut r)?,
        Experiment::Fig3(c) => fig3(c, &mut r)?,
        Experiment::Fig5(c) => fig5(c, &mut r)?,
        Experiment::Fig6(c) => fig6(c, &mut r)?,
        Experiment::Fig7(c) => fig7(c, &mut r)?,
        Experiment::Fig8(c) => fig8(c, &mut r)?,
        Experiment::CriticalPoint(c) => critical(c, &mut r)?,
        Experiment::PdeRun(c) => pde_run(c, &mut r)?,
        Experiment::ScalingProfile(c) => scaling_profile(c, &mut r)?,
        Experiment::TreeSample(c) => {
            let seed = seed.ok_or_else(|| crate::CliError::Config {
                field: "seed".into(),
                message: "stochastic experiments need an explicit seed".into(),
            })?;
            tree_sample(c, seed, &mut r)?
        }
        Experiment::NuWindow(c) => nu_window(c, &mut r)?,
    }
    Ok(r)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn ascending(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Profile expected for trees of a family.
fn tree_profile(f0: f64) -> Result<TreeProfile> {
    Ok(if f0 == 4.0 {
        TreeProfile::Exponential
    } else {
        TreeProfile::Scaling(solve_profile(f0, 200.0, 0.01)?)
    })
}

fn fit_json(n: usize, fit: &LineFit) -> Value {
    json!({ "n": n, "fit": fit, "root": fit.root() })
}

fn fig2(c: &Fig2Config, r: &mut Run) -> Result<()> {
    let law = SingularityLaw::InverseSquareLog;
    let sizes = ascending(&c.sizes);
    let mut t = Table::new(&[
        "family",
        "n",
        "p",
        "p_minus_pc",
        "free_energy",
        "inverse_square_log",
    ]);
    let mut fits_out = Map::new();
    for &fam in &c.families {
        let (model, p_c) = fam.critical()?;
        let ps = linspace(p_c + c.delta_min, p_c + c.delta_max, c.points);
        let mut fits = Vec::new();
        for &n in &sizes {
            let f = free_energy_scan(&model, &ps, n)?;
            let y: Vec<f64> = f.iter().map(|&v| law.transform(v)).collect();
            for ((&p, &fv), &yv) in ps.iter().zip(&f).zip(&y) {
                t.push(row![fam.to_string(), n, p, p - p_c, fv, yv]);
            }
            fits.push(line_fit(&ps, &y)?);
        }
        let rms: Vec<f64> = fits.iter().map(|f| f.rms_residual).collect();
        if sizes.len() > 1 {
            r.check(Check::property(
                format!("{fam}: fit residual decreases with n"),
                strictly_decreasing(&rms),
            ));
        }
        let last = fits.last().expect("sizes are non-empty");
        r.check(Check::relative(
            format!("{fam}: fitted root at n = {}", sizes[sizes.len() - 1]),
            last.root(),
            p_c,
            c.tolerance,
        ));
        fits_out.insert(
            fam.to_string(),
            json!({ "p_c": p_c, "fits": sizes.iter().zip(&fits).map(|(&n, f)| fit_json(n, f)).collect::<Vec<_>>() }),
        );
    }
    r.table("", t);
    r.result("fits", Value::Object(fits_out));
    Ok(())
}

fn fig3(c: &Fig3Config, r: &mut Run) -> Result<()> {
    let sizes = ascending(&c.sizes);
    let (model, p_c) = c.family.critical()?;
    let ps = linspace(p_c + c.delta_min, p_c + c.delta_max, c.points);
    let mut t = Table::new(&[
        "n",
        "p",
        "p_minus_pc",
        "free_energy",
        "inverse_log",
        "inverse_square_log",
    ]);
    let mut fits = Vec::new();
    for &n in &sizes {
        let f = free_energy_scan(&model, &ps, n)?;
        let inv: Vec<f64> = f
            .iter()
            .map(|&v| SingularityLaw::InverseLog.transform(v))
            .collect();
        let sq: Vec<f64> = f
            .iter()
            .map(|&v| SingularityLaw::InverseSquareLog.transform(v))
            .collect();
        for i in 0..ps.len() {
            t.push(row![n, ps[i], ps[i] - p_c, f[i], inv[i], sq[i]]);
        }
        let (a, b) = (line_fit(&ps, &inv)?, line_fit(&ps, &sq)?);
        fits.push(json!({ "n": n, "inverse_log": a, "inverse_square_log": b }));
        if n == sizes[sizes.len() - 1] {
            r.check(Check::property(
                format!(
                    "R² of -1/ln F ({:.6}) beats (ln F)^-2 ({:.6}) at n = {n}",
                    a.r_squared, b.r_squared
                ),
                a.r_squared > b.r_squared,
            ));
            r.result("root_inverse_log", json!(a.root()));
        }
    }
    r.table("", t);
    r.result("p_c", json!(p_c));
    r.result("fits", Value::Array(fits));
    Ok(())
}

/// About `rows` sizes between 10 and `n`, geometrically spaced, ending at `n`.
fn log_sizes(n: usize, rows: usize) -> Vec<usize> {
    let lo = 10f64.min(n as f64);
    let mut v: Vec<usize> = (0..rows)
        .map(|i| (lo * (n as f64 / lo).powf(i as f64 / (rows - 1) as f64)).round() as usize)
        .collect();
    v.push(n);
    ascending(&v)
}

fn fig5(c: &Fig5Config, r: &mut Run) -> Result<()> {
    let runs: Vec<_> = c
        .families
        .par_iter()
        .map(|&fam| -> Result<_> {
            let (model, _) = fam.critical()?;
            Ok((fam, LightCone::new(c.n, 1).run_family(&model)?))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["family", "n", "inverse_n", "scaled_nonzero"]);
    for (fam, run) in &runs {
        for k in log_sizes(c.n, c.rows) {
            t.push(row![
                fam.to_string(),
                k,
                1.0 / k as f64,
                (k * k) as f64 * run.nonzero[k]
            ]);
        }
        let last = (c.n * c.n) as f64 * run.nonzero[c.n];
        r.check(Check::relative(
            format!("{fam}: n²(1 - Q_n(0)) at n = {}", c.n),
            last,
            fam.factor(),
            c.tolerance,
        ));
    }
    r.table("", t);
    Ok(())
}

fn fig6(c: &Fig6Config, r: &mut Run) -> Result<()> {
    let sizes = ascending(&c.sizes);
    let mut t = Table::new(&["family", "n", "k", "k_over_n", "scaled", "profile"]);
    for &fam in &c.families {
        let (model, _) = fam.critical()?;
        let f0 = fam.profile_f0();
        let profile = solve_profile(f0, c.x_max + 1.0, 1e-3)?;
        let mut errors = Vec::new();
        for &n in &sizes {
            let keep = (c.x_max * n as f64).ceil() as usize;
            let run = LightCone::new(n, keep).run_family(&model)?;
            let mut err: f64 = 0.0;
            for k in 1..=keep {
                let x = k as f64 / n as f64;
                let scaled = (n * n) as f64 * 2f64.powi(k as i32) * run.final_window[k];
                let f = profile.value(x)?;
                t.push(row![fam.to_string(), n, k, x, scaled, f]);
                if (c.x_lo..=c.x_hi).contains(&x) {
                    err = err.max((scaled - f).abs() / f0);
                }
            }
            errors.push(err);
        }
        r.check(Check::property(
            format!("{fam}: deviation from the F(0) = {f0} profile shrinks with n ({errors:.4?})"),
            strictly_decreasing(&errors),
        ));
        r.result(
            fam.to_string(),
            json!({ "profile_f0": f0, "sizes": sizes, "max_deviation": errors }),
        );
    }
    r.table("", t);
    Ok(())
}

fn history(fam: Family, m: usize) -> Result<QHistory> {
    let (model, _) = fam.critical()?;
    Ok(QHistory::compute(&model, m, m + 2)?)
}

fn fig7(c: &Fig7Config, r: &mut Run) -> Result<()> {
    let sizes = ascending(&c.sizes);
    let mut t = Table::new(&[
        "family",
        "m",
        "level",
        "level_over_m",
        "discrete",
        "continuous",
    ]);
    for &fam in &c.families {
        let f0 = fam.profile_f0();
        let profile = tree_profile(f0)?;
        let mut gaps = Vec::new();
        for &m in &sizes {
            let h = history(fam, m)?;
            let mut gap: f64 = 0.0;
            for level in 1..=m {
                let d = no_branching_prob(&h, level, m, m)?;
                let k = continuous_no_branching(&profile, level as f64, m as f64, m as f64)?;
                t.push(row![
                    fam.to_string(),
                    m,
                    level,
                    level as f64 / m as f64,
                    d,
                    k
                ]);
                gap = gap.max((d - k).abs());
            }
            gaps.push(gap);
        }
        let tol = if f0 == 4.0 {
            c.tolerance_exponential
        } else {
            c.tolerance_profile
        };
        let m = sizes[sizes.len() - 1];
        r.check(Check::below(
            format!("{fam}: largest gap to the F(0) = {f0} prediction at m = {m}"),
            gaps[gaps.len() - 1],
            tol,
        ));
        if sizes.len() > 1 {
            r.check(Check::property(
                format!("{fam}: gap shrinks with m ({gaps:.4?})"),
                strictly_decreasing(&gaps),
            ));
        }
        r.result(
            fam.to_string(),
            json!({ "profile_f0": f0, "sizes": sizes, "max_gap": gaps }),
        );
    }
    r.table("", t);
    Ok(())
}

/// Continuous split density of mass `x` at time `t` at `a`.
fn split_density(profile: Option<&ScalingProfile>, a: f64, x: f64, t: f64) -> Result<f64> {
    let Some(p) = profile else {
        return Ok(1.0 / x);
    };
    let f = |y: f64| p.value(y).unwrap_or(f64::NAN);
    let norm = quad::adaptive(|y| f(y / t) * f((x - y) / t), 0.0, x, 1e-12, 0.0, 60).value;
    Ok(p.value(a / t)? * p.value((x - a) / t)? / norm)
}

fn fig8(c: &Fig8Config, r: &mut Run) -> Result<()> {
    let sizes = ascending(&c.sizes);
    let mut t = Table::new(&[
        "family",
        "m",
        "x1",
        "x1_over_mass",
        "scaled_discrete",
        "scaled_continuous",
    ]);
    for &fam in &c.families {
        let f0 = fam.profile_f0();
        let profile = if f0 == 4.0 {
            None
        } else {
            Some(solve_profile(f0, 200.0, 0.01)?)
        };
        let mut errors = Vec::new();
        for &m in &sizes {
            let h = history(fam, m)?;
            let s = branch_step_distribution(&h, m, m)?;
            // the split at level m produces masses summing to m + 1, read at time m - 1
            let (x, tm) = ((m + 1) as f64, (m - 1) as f64);
            let mut err: f64 = 0.0;
            for (i, &p) in s.split.iter().enumerate() {
                let a = (i + 1) as f64;
                let d = split_density(profile.as_ref(), a, x, tm)?;
                t.push(row![
                    fam.to_string(),
                    m,
                    i + 1,
                    a / x,
                    m as f64 * p,
                    m as f64 * d
                ]);
                if a >= c.edge * x && a <= (1.0 - c.edge) * x {
                    err = err.max((p / d - 1.0).abs());
                }
            }
            errors.push(err);
        }
        let m = sizes[sizes.len() - 1];
        r.check(Check::below(
            format!("{fam}: interior split error at m = {m}"),
            errors[errors.len() - 1],
            c.tolerance,
        ));
        if sizes.len() > 1 {
            r.check(Check::property(
                format!("{fam}: split error shrinks with m ({errors:.4?})"),
                strictly_decreasing(&errors),
            ));
        }
        r.result(
            fam.to_string(),
            json!({ "profile_f0": f0, "sizes": sizes, "max_relative_error": errors }),
        );
    }
    r.table("", t);
    Ok(())
}

/// Reference critical points known to five decimals.
fn reference_critical_point(f: Family) -> Option<f64> {
    match f {
        Family::TwoDelta => Some(0.2),
        Family::PowerLaw(6.0) => Some(1.90956),
        Family::PowerLaw(3.0) => Some(1.02031),
        Family::PowerLaw(_) => None,
    }
}

fn critical(c: &CriticalPointConfig, r: &mut Run) -> Result<()> {
    let (model, _) = c.family.critical()?;
    let cp = critical_point(&model)?;
    let mut t = Table::new(&["family", "p_c", "delta_at_root", "closed_form"]);
    t.push(row![
        c.family.to_string(),
        cp.p_c,
        cp.delta_at_root,
        cp.closed_form.unwrap_or(f64::NAN)
    ]);
    r.table("", t);
    r.check(Check::below("|Δ(p_c)|", cp.delta_at_root.abs(), 1e-10));
    if let Some(p) = reference_critical_point(c.family) {
        r.check(Check::absolute(
            "p_c against its reference value",
            cp.p_c,
            p,
            1e-4,
        ));
    }
    if let Some(closed) = cp.closed_form {
        r.check(Check::absolute(
            "p_c against the closed form",
            cp.p_c,
            closed,
            1e-8,
        ));
    }
    r.result("critical_point", serde_json::to_value(cp)?);
    Ok(())
}

type Initial = Box<dyn Fn(f64) -> f64>;
type Exact = Box<dyn Fn(f64, f64) -> f64>;

fn pde_run(c: &PdeRunConfig, r: &mut Run) -> Result<()> {
    let standard = c.variant == FlowVariant::Standard;
    let (initial, exact, predicted): (Initial, Option<Exact>, Option<f64>) = match c.initial {
        InitialData::Exponential => {
            let (k2, t0) = (c.kappa_sq, c.t0);
            let blow = (k2 > 0.0).then(|| single_exp_blowup(k2.sqrt(), t0));
            (
                Box::new(move |x| single_exponential(k2, t0, x, 0.0)),
                Some(Box::new(move |x, t| single_exponential(k2, t0, x, t))),
                blow,
            )
        }
        InitialData::Linear => {
            let s = c.slope;
            (Box::new(move |x| s * x), None, Some(linear_data_blowup(s)))
        }
        InitialData::Profile => {
            let p = solve_profile(c.f0, c.length, c.dx)?;
            let q = p.clone();
            (
                Box::new(move |x| p.value(x).unwrap_or(f64::NAN)),
                Some(Box::new(move |x, t| {
                    q.value(x / (1.0 + t)).unwrap_or(f64::NAN) / (1.0 + t).powi(2)
                })),
                None,
            )
        }
    };
    let (exact, predicted) = if standard {
        (exact, predicted)
    } else {
        (None, None)
    };
    let variant = if standard {
        Variant::Standard
    } else {
        Variant::Hmp
    };
    let cfg = EvolutionConfig::new(c.dx)
        .variant(variant)
        .blowup_threshold(c.blowup_threshold);
    let grid = GridFunction::from_fn(c.length, c.dx, initial)?;
    let mut ev = Evolver::new(grid.clone(), cfg)?;
    let steps = (c.horizon / c.dx).round() as usize;
    let mut blown = None;
    for _ in 0..steps {
        match ev.step() {
            Ok(()) => {}
            Err(Error::BlowUp { t, .. }) => {
                blown = Some(t);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut t = Table::new(&["t", "f_origin", "first_moment", "max", "min"]);
    let d = &ev.diagnostics;
    for (i, row) in d.iter().enumerate() {
        if i % c.record_every == 0 || i + 1 == d.len() {
            t.push(row![
                row.t,
                row.f_origin,
                row.first_moment,
                row.max,
                row.min
            ]);
        }
    }
    r.table("", t);
    let negativity = d
        .iter()
        .map(|s| {
            if s.max > 0.0 {
                (-s.min / s.max).max(0.0)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    r.result("worst_negativity", json!(negativity));
    r.result("blowup_detected_at", json!(blown));

    if blown.is_none() {
        let g = &ev.grid;
        let mut fin = Table::new(&["x", "f", "exact"]);
        for i in 0..g.len() {
            let x = g.x(i);
            fin.push(row![
                x,
                g.values[i],
                exact.as_ref().map_or(f64::NAN, |e| e(x, g.t))
            ]);
        }
        r.table("final", fin);
        if let Some(e) = &exact {
            let err = g.max_error(|x| e(x, g.t)) / g.max().abs().max(f64::MIN_POSITIVE);
            r.check(Check::below(
                "relative L∞ error against the closed form",
                err,
                c.tolerance,
            ));
        }
    }
    if let Some(tc) = predicted {
        if tc < c.horizon {
            r.check(Check::property(
                format!("blow-up before the predicted t_c = {tc:.6}"),
                blown.is_some(),
            ));
            if blown.is_some() {
                let fit = blowup_time(grid, cfg, c.horizon)?.map_or(f64::NAN, |b| b.t_c);
                r.check(Check::relative(
                    "extrapolated blow-up time",
                    fit,
                    tc,
                    BLOWUP_TOLERANCE,
                ));
                r.result("blowup_time", json!(fit));
            }
        } else {
            r.check(Check::property(
                format!("no blow-up before the predicted t_c = {tc:.6}"),
                blown.is_none(),
            ));
        }
        r.result("predicted_blowup_time", json!(tc));
    }
    Ok(())
}

fn scaling_profile(c: &ScalingProfileConfig, r: &mut Run) -> Result<()> {
    let p = solve_profile(c.f0, c.length, c.dx)?;
    let g = &p.samples;
    let mut t = Table::new(&["x", "F", "F_prime"]);
    for i in 0..g.len() {
        t.push(row![g.x(i), g.values[i], p.derivative[i]]);
    }
    r.table("", t);
    r.result("alpha", json!(p.alpha));
    r.result("beta", json!(p.beta));
    r.result("first_zero", json!(p.first_zero));
    r.result("first_moment", json!(p.first_moment()));
    if c.f0 <= 4.0 {
        r.check(Check::property(
            format!("positive on [0, {}]", c.length),
            p.is_positive(),
        ));
        r.check(Check::relative("first moment", p.first_moment(), 1.0, 0.01));
    } else {
        r.check(Check::property(
            format!("changes sign on [0, {}]", c.length),
            !p.is_positive(),
        ));
    }
    if c.f0 < 4.0 && p.is_positive() && c.length >= 2.0 * c.tail_from {
        let fit = fit_tail(g, p.alpha, c.tail_from, c.length)?;
        let amp = tail_amplitude(p.beta);
        r.check(Check::relative(
            "tail exponent",
            fit.exponent,
            p.alpha,
            0.02,
        ));
        r.check(Check::relative("tail amplitude", fit.amplitude, amp, 0.05));
        r.result("tail_fit", serde_json::to_value(fit)?);
        r.result("tail_amplitude", json!(amp));
    }
    Ok(())
}

/// Distance of an observed frequency from `exact` in binomial standard errors at `exact`.
fn z_score(freq: (f64, f64), exact: f64, trees: u64) -> f64 {
    let se = (exact * (1.0 - exact) / trees as f64).sqrt();
    let gap = (freq.0 - exact).abs();
    if se > 0.0 {
        gap / se
    } else if gap < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn tree_tables(stats: &TreeStatistics, bins: Option<(f64, f64, usize)>, r: &mut Run) {
    let mut leaves = Table::new(&["leaves", "trees", "frequency"]);
    for (k, f) in stats.leaf_frequencies() {
        leaves.push(row![k, stats.leaf_counts[&k], f]);
    }
    r.table("leaves", leaves);
    // coalescence times weighted by leaf pairs: exact levels, or a histogram in time
    let total: u64 = stats.coalescences.iter().map(|c| c.1).sum();
    let mut acc: std::collections::BTreeMap<i64, u64> = Default::default();
    let key = |time: f64| match bins {
        None => time as i64,
        Some((lo, hi, n)) => {
            (((time - lo) / (hi - lo) * n as f64).floor() as i64).clamp(0, n as i64 - 1)
        }
    };
    for &(time, w) in &stats.coalescences {
        *acc.entry(key(time)).or_default() += w;
    }
    let mut co = Table::new(&[
        if bins.is_some() { "time" } else { "level" },
        "pairs",
        "fraction",
    ]);
    for (k, w) in acc {
        let fraction = w as f64 / total.max(1) as f64;
        match bins {
            None => co.push(row![k as usize, w, fraction]),
            Some((lo, hi, n)) => co.push(row![
                lo + (k as f64 + 0.5) * (hi - lo) / n as f64,
                w,
                fraction
            ]),
        }
    }
    r.table("coalescence", co);
}

fn tree_sample(c: &TreeSampleConfig, seed: u64, r: &mut Run) -> Result<()> {
    let time = if c.mode == TreeMode::Discrete {
        "level"
    } else {
        "time"
    };
    let mut curve = Table::new(&[time, "no_branch_frequency", "standard_error", "exact"]);
    let mut worst_z: f64 = 0.0;
    let probes = [0.4, 0.5, 0.625, 0.75, 0.875, 0.95];
    match c.mode {
        TreeMode::Discrete => {
            let (model, _) = c.family.critical()?;
            let h = QHistory::compute(&model, c.m, c.x + 2)?;
            let sampler = DiscreteSampler::new(&h, c.m, c.x)?;
            r.check(Check::below(
                "branch-step identity residual",
                sampler.max_identity_residual,
                IDENTITY_TOLERANCE,
            ));
            let stats = discrete_tree_statistics(&h, c.m, c.x, c.trees, seed)?;
            let exact = |level: usize| no_branching_prob(&h, level, c.m, c.x);
            for level in 1..=c.m {
                let (p, se) = stats.no_branch_frequency(level as f64);
                curve.push(row![level, p, se, exact(level)?]);
            }
            for f in probes {
                let level = ((f * c.m as f64).round() as usize).clamp(1, c.m);
                worst_z = worst_z.max(z_score(
                    stats.no_branch_frequency(level as f64),
                    exact(level)?,
                    stats.trees,
                ));
            }
            let trees: Vec<_> = (0..c.dump)
                .map(|i| sampler.sample(&mut tree_rng(seed, i)))
                .collect();
            r.documents.push(("trees", serde_json::to_value(trees)?));
            r.table("", curve);
            tree_tables(&stats, None, r);
            r.result("trees", json!(stats.trees));
        }
        TreeMode::Continuous => {
            let profile = tree_profile(c.profile_f0)?;
            let cfg = ContinuousConfig {
                floor_fraction: c.floor_fraction,
                ..ContinuousConfig::default()
            };
            let stats = continuous_tree_statistics(&profile, c.mass, c.time, cfg, c.trees, seed)?;
            let floor = c.floor_fraction * c.time;
            for tp in linspace(floor, c.time, 41) {
                let (p, se) = stats.no_branch_frequency(tp);
                curve.push(row![
                    tp,
                    p,
                    se,
                    continuous_no_branching(&profile, tp, c.time, c.mass)?
                ]);
            }
            for f in probes.iter().map(|f| f * c.time).filter(|&tp| tp > floor) {
                let exact = continuous_no_branching(&profile, f, c.time, c.mass)?;
                worst_z = worst_z.max(z_score(stats.no_branch_frequency(f), exact, stats.trees));
            }
            let trees = (0..c.dump)
                .map(|i| {
                    sample_continuous_tree(&profile, c.mass, c.time, cfg, &mut tree_rng(seed, i))
                })
                .collect::<coalescence::Result<Vec<_>>>()?;
            r.documents.push(("trees", serde_json::to_value(trees)?));
            r.table("", curve);
            tree_tables(&stats, Some((floor, c.time, 50)), r);
            r.result("trees", json!(stats.trees));
        }
    }
    r.check(Check::below(
        "largest z-score of the no-branch frequency",
        worst_z,
        Z_LIMIT,
    ));
    Ok(())
}

fn nu_window(c: &NuWindowConfig, r: &mut Run) -> Result<()> {
    let w = positivity_window(c.nu, c.horizon, c.dx, c.tol)?;
    let mut t = Table::new(&["nu", "alpha_min", "alpha_max"]);
    t.push(row![c.nu, w.alpha_min, w.alpha_max]);
    r.table("", t);
    let nu = c.nu as f64;
    r.check(Check::absolute(
        "lower end ν/(ν-1)",
        w.alpha_min,
        nu / (nu - 1.0),
        0.02,
    ));
    match c.nu {
        2 => r.check(Check::absolute("upper end", w.alpha_max, 4.0, 0.05)),
        3 => r.check(Check::absolute("upper end", w.alpha_max, 2.6, 0.1)),
        _ => {}
    }
    r.result("window", serde_json::to_value(w)?);
    Ok(())
}
