//! Monte Carlo engine for the compound-Poisson loss process under a selected
//! measure (any candidate model P_k, the counterparty model P_C, or the
//! optimal pricing measure Q*), with exact path construction of the
//! model-weight processes Z*_k, the optimal wealth X*, the no-sharing wealth
//! X^CL, and the counterparty wealth Y.
//!
//! There is no time discretization anywhere: jump times come from exponential
//! interarrivals, log Z is accumulated analytically between and across jumps,
//! and the wealth SDEs are integrated segment-exactly, so the only error in a
//! path is double-precision rounding.

use crate::compensators::ModelEnsemble;
use crate::controls::{Ctx, MarketParams};
use crate::error::{Error, Result};
use crate::moments::Measure;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Gamma as GammaDist};
use rayon::prelude::*;
use serde::Serialize;

/// Paths are simulated in fixed-size chunks so parallel execution merges
/// partial results in a schedule-independent order.
const CHUNK_SIZE: usize = 256;

/// Number of points on a kernel density abscissa.
pub const KDE_POINTS: usize = 512;

/// Simulation configuration: which measure drives the jumps, how many paths,
/// the master seed, and the recording grid (strictly increasing, starting at
/// 0 and ending at the market horizon T).
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub measure: Measure,
    pub n_paths: usize,
    pub seed: u64,
    pub record_grid: Vec<f64>,
}

impl SimConfig {
    pub fn new(measure: Measure, n_paths: usize, seed: u64, record_grid: Vec<f64>) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if record_grid.is_empty() {
            return Err(Error::Config("recording grid must not be empty".into()));
        }
        if record_grid[0] != 0.0 {
            return Err(Error::Config(format!(
                "recording grid must start at 0, got {}",
                record_grid[0]
            )));
        }
        if record_grid
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::Config(
                "recording grid must be strictly increasing and finite".into(),
            ));
        }
        Ok(SimConfig {
            measure,
            n_paths,
            seed,
            record_grid,
        })
    }

    /// Uniform grid with `n_steps` intervals over [0, T].
    pub fn uniform(
        measure: Measure,
        n_paths: usize,
        seed: u64,
        n_steps: usize,
        market: &MarketParams,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("grid must have at least one step".into()));
        }
        let horizon = market.horizon();
        let grid = (0..=n_steps)
            .map(|i| horizon * i as f64 / n_steps as f64)
            .collect();
        Self::new(measure, n_paths, seed, grid)
    }

    fn validate_against(&self, ensemble: &ModelEnsemble, market: &MarketParams) -> Result<()> {
        let last = *self.record_grid.last().unwrap();
        if (last - market.horizon()).abs() > 1e-9 * market.horizon().max(1.0) {
            return Err(Error::Config(format!(
                "recording grid must end at the horizon T = {}, got {last}",
                market.horizon()
            )));
        }
        if let Measure::Model(k) = self.measure {
            if k >= ensemble.n_entries() {
                return Err(Error::Config(format!(
                    "measure index {k} out of range for {} entries",
                    ensemble.n_entries()
                )));
            }
        }
        Ok(())
    }
}

/// One simulated scenario. Trajectories are recorded at the grid times of the
/// originating [`SimConfig`], right-continuous at jumps; `log_z[g][i]` is
/// ln Z*_i at grid point g for ensemble entry i (counterparty last).
#[derive(Debug, Clone, Serialize)]
pub struct PathBundle {
    pub path_id: usize,
    pub grid: Vec<f64>,
    pub jump_times: Vec<f64>,
    pub jump_marks: Vec<f64>,
    pub log_z: Vec<Vec<f64>>,
    pub x_star: Vec<f64>,
    pub x_cl: Vec<f64>,
    pub y: Vec<f64>,
    /// Shared (ceded) loss α*(s, ξ, Z_{s⁻}) at each jump (diagnostic:
    /// negative sharing is reported, never clipped).
    pub alpha_at_jumps: Vec<f64>,
}

/// exp-integrator kernel Φ(h, r) = (e^{rh} − 1)/r, continuous at r = 0.
fn phi(h: f64, r: f64) -> f64 {
    let rh = r * h;
    if rh.abs() < 1e-12 {
        h * (1.0 + 0.5 * rh)
    } else {
        rh.exp_m1() / r
    }
}

/// Everything a single path walk produces.
struct WalkOutput {
    log_z: Vec<Vec<f64>>,
    x_star: Vec<f64>,
    x_cl: Vec<f64>,
    y: Vec<f64>,
    x_sde: Vec<f64>,
    alpha_at_jumps: Vec<f64>,
}

/// Event-driven integration of one path. Drift segments are integrated in
/// closed form (`phi` kernel), jumps are applied with left-limit coefficients,
/// and grid snapshots are taken right-continuously.
fn walk_path(
    ctx: &Ctx<'_>,
    grid: &[f64],
    jump_times: &[f64],
    jump_marks: &[f64],
) -> Result<WalkOutput> {
    let n = ctx.ens.n_entries();
    let load = 1.0 + ctx.eta;
    let drift = ctx.c - load * ctx.lc;
    let ln_load = ctx.eta.ln_1p();

    let mut log_z_cur = vec![0.0_f64; n];
    let mut loss_sum = 0.0;
    let mut y_cur = ctx.y0;
    let mut x_sde_cur = ctx.x0;
    let mut t_cur = 0.0;
    let mut next_jump = 0;

    let mut out = WalkOutput {
        log_z: Vec::with_capacity(grid.len()),
        x_star: Vec::with_capacity(grid.len()),
        x_cl: Vec::with_capacity(grid.len()),
        y: Vec::with_capacity(grid.len()),
        x_sde: Vec::with_capacity(grid.len()),
        alpha_at_jumps: Vec::with_capacity(jump_times.len()),
    };

    // Advances every drift integral from t_cur to w: the log Z drift d_i, the
    // counterparty drift (1+η)[L_C − (1/θ)Σπ_i Z_i ℓ_i(T−s) q_i], and the X*
    // SDE drift c − (1+η)L_C + ((1+η)/θ)Σπ_i q_i Z_i ℓ_i(T−s).
    let advance = |t_cur: &mut f64,
                   w: f64,
                   log_z_cur: &mut [f64],
                   y_cur: &mut f64,
                   x_sde_cur: &mut f64| {
        let h = w - *t_cur;
        if h <= 0.0 {
            return;
        }
        let mut hedge = 0.0;
        for i in 0..n {
            let weight = ctx.ens.entry_weight(i);
            if weight > 0.0 {
                let seg = log_z_cur[i].exp()
                    * (ctx.g[i] * (ctx.horizon - *t_cur)).exp()
                    * phi(h, ctx.d[i] - ctx.g[i]);
                hedge += weight * ctx.q[i] * seg;
            }
            log_z_cur[i] += ctx.d[i] * h;
        }
        hedge *= load / ctx.theta;
        *y_cur += load * ctx.lc * h - hedge;
        *x_sde_cur += drift * h + hedge;
        *t_cur = w;
    };

    for &tg in grid {
        while next_jump < jump_times.len() && jump_times[next_jump] <= tg {
            let s = jump_times[next_jump];
            let xi = jump_marks[next_jump];
            advance(&mut t_cur, s, &mut log_z_cur, &mut y_cur, &mut x_sde_cur);
            let z_minus: Vec<f64> = log_z_cur.iter().map(|lz| lz.exp()).collect();
            let alpha = ctx.alpha_star(s, xi, &z_minus)?;
            out.alpha_at_jumps.push(alpha);
            y_cur -= alpha;
            // ΔX* = −(1/θ)Σπ_i Z_i(s⁻) ℓ_i(T−s) [(1+η)ρ_i(ξ) − 1] = α* − ξ.
            x_sde_cur += alpha - xi;
            loss_sum += xi;
            let ln_vc = ctx.ens.counterparty().density_log(xi)?;
            for i in 0..n {
                log_z_cur[i] += ln_load + ln_vc - ctx.ens.entry(i).density_log(xi)?;
            }
            next_jump += 1;
        }
        advance(&mut t_cur, tg, &mut log_z_cur, &mut y_cur, &mut x_sde_cur);

        // Closed-form X*(t) = x + [c − (1+η)L_C] t + (1/θ)Σπ_i[e^{g_i T} −
        // e^{g_i (T−t)} Z_i(t)], assembled from log Z lazily.
        let mut hedge = 0.0;
        for i in 0..n {
            let weight = ctx.ens.entry_weight(i);
            if weight > 0.0 {
                hedge += weight
                    * ((ctx.g[i] * ctx.horizon).exp()
                        - (ctx.g[i] * (ctx.horizon - tg) + log_z_cur[i]).exp());
            }
        }
        out.log_z.push(log_z_cur.clone());
        out.x_star.push(ctx.x0 + drift * tg + hedge / ctx.theta);
        out.x_cl.push(ctx.x0 + ctx.c * tg - loss_sum);
        out.y.push(y_cur);
        out.x_sde.push(x_sde_cur);
    }
    Ok(out)
}

fn validate_events(jump_times: &[f64], jump_marks: &[f64], horizon: f64) -> Result<()> {
    if jump_times.len() != jump_marks.len() {
        return Err(Error::Domain(
            "jump times and marks must have equal length".into(),
        ));
    }
    let increasing = jump_times
        .windows(2)
        .all(|w| w[1] > w[0]);
    if !increasing
        || jump_times
            .iter()
            .any(|t| !t.is_finite() || *t <= 0.0 || *t > horizon)
    {
        return Err(Error::Domain(
            "jump times must be strictly increasing within (0, T]".into(),
        ));
    }
    if jump_marks.iter().any(|m| !m.is_finite() || *m <= 0.0) {
        return Err(Error::Domain("jump marks must be positive and finite".into()));
    }
    Ok(())
}

impl PathBundle {
    /// Builds the full bundle from a given event list (exposed so exact
    /// scenarios — no jumps, one jump — can be constructed in tests and
    /// debugging sessions without touching the RNG).
    pub fn from_events(
        path_id: usize,
        jump_times: Vec<f64>,
        jump_marks: Vec<f64>,
        grid: Vec<f64>,
        ensemble: &ModelEnsemble,
        market: &MarketParams,
    ) -> Result<Self> {
        market.validate_viability(ensemble)?;
        let config = SimConfig::new(Measure::Optimal, 1, 0, grid)?;
        config.validate_against(ensemble, market)?;
        validate_events(&jump_times, &jump_marks, market.horizon())?;
        let ctx = Ctx::new(ensemble, market)?;
        let out = walk_path(&ctx, &config.record_grid, &jump_times, &jump_marks)?;
        Ok(PathBundle {
            path_id,
            grid: config.record_grid,
            jump_times,
            jump_marks,
            log_z: out.log_z,
            x_star: out.x_star,
            x_cl: out.x_cl,
            y: out.y,
            alpha_at_jumps: out.alpha_at_jumps,
        })
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }
}

/// Jump intensity and severity law (Gamma shape/scale) for a measure.
fn jump_law(
    measure: Measure,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<(f64, f64, f64)> {
    let c = ensemble.counterparty();
    let (rate, shape, scale) = match measure {
        Measure::Optimal => ((1.0 + market.eta()) * c.rate(), c.shape(), c.scale()),
        Measure::Counterparty => (c.rate(), c.shape(), c.scale()),
        Measure::Model(k) => {
            let m = ensemble.entry(k);
            (m.rate(), m.shape(), m.scale())
        }
    };
    if !(rate > 0.0) {
        return Err(Error::Config(format!(
            "jump intensity under {measure} is {rate}; must be positive"
        )));
    }
    Ok((rate, shape, scale))
}

/// Draws the jump times and marks of one path on [0, T].
fn draw_events(
    rng: &mut ChaCha12Rng,
    rate: f64,
    shape: f64,
    scale: f64,
    horizon: f64,
) -> (Vec<f64>, Vec<f64>) {
    let interarrival = Exp::new(rate).expect("validated rate");
    let severity = GammaDist::new(shape, scale).expect("validated severity");
    let mut times = Vec::new();
    let mut marks = Vec::new();
    let mut t = 0.0_f64;
    loop {
        let mut next = t + interarrival.sample(rng);
        if next <= t {
            // Zero or denormal-rounded interarrival (probability ~2⁻⁵³):
            // nudge to keep jump times strictly increasing.
            next = t.next_up();
        }
        if next > horizon {
            break;
        }
        let mut mark = severity.sample(rng);
        while !(mark > 0.0) || !mark.is_finite() {
            mark = severity.sample(rng);
        }
        times.push(next);
        marks.push(mark);
        t = next;
    }
    (times, marks)
}

/// Simulates `config.n_paths` scenarios of the Poisson random measure under
/// `config.measure`. Each path draws from an independent RNG stream keyed by
/// (master seed, path index), so the result is bit-identical for any worker
/// count or evaluation order.
pub fn simulate_prm(
    config: &SimConfig,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<Vec<PathBundle>> {
    market.validate_viability(ensemble)?;
    config.validate_against(ensemble, market)?;
    let (rate, shape, scale) = jump_law(config.measure, ensemble, market)?;
    let horizon = market.horizon();
    let n_chunks = config.n_paths.div_ceil(CHUNK_SIZE);

    let chunks: Vec<Vec<PathBundle>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| -> Result<Vec<PathBundle>> {
            let ctx = Ctx::new(ensemble, market)?;
            let lo = chunk * CHUNK_SIZE;
            let hi = ((chunk + 1) * CHUNK_SIZE).min(config.n_paths);
            let mut bundle = Vec::with_capacity(hi - lo);
            for path_id in lo..hi {
                let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
                rng.set_stream(path_id as u64);
                let (times, marks) = draw_events(&mut rng, rate, shape, scale, horizon);
                let out = walk_path(&ctx, &config.record_grid, &times, &marks)?;
                bundle.push(PathBundle {
                    path_id,
                    grid: config.record_grid.clone(),
                    jump_times: times,
                    jump_marks: marks,
                    log_z: out.log_z,
                    x_star: out.x_star,
                    x_cl: out.x_cl,
                    y: out.y,
                    alpha_at_jumps: out.alpha_at_jumps,
                });
            }
            Ok(bundle)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Integrates the X* SDE directly — drift between jumps plus the jump
/// decrement −(1/θ)Σπ_i Z*_{i,s⁻} ℓ_i(T−s)[(1+η)v_C(ξ)/v_i(ξ) − 1] — without
/// the closed form; returned on the bundle's grid. This is the independent
/// route used to validate the affine-in-Z* representation.
pub fn x_star_from_sde(
    path: &PathBundle,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<Vec<f64>> {
    let ctx = Ctx::new(ensemble, market)?;
    validate_events(&path.jump_times, &path.jump_marks, market.horizon())?;
    let out = walk_path(&ctx, &path.grid, &path.jump_times, &path.jump_marks)?;
    Ok(out.x_sde)
}

/// Counterparty wealth trajectory Y on the bundle's grid:
/// Y_t = y + (1+η)∫₀ᵗ ∫ α*(s, ξ, Z*_s) ν_C(dξ) ds − Σ_{jumps ≤ t} α*, with
/// the inner integral analytic and the s-integral segment-exact.
pub fn counterparty_path(
    path: &PathBundle,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<Vec<f64>> {
    let ctx = Ctx::new(ensemble, market)?;
    validate_events(&path.jump_times, &path.jump_marks, market.horizon())?;
    let out = walk_path(&ctx, &path.grid, &path.jump_times, &path.jump_marks)?;
    Ok(out.y)
}

/// Unbiased sample variance (n − 1 denominator).
pub fn sample_variance(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0)
}

/// Sample mean and its standard error.
pub fn mean_and_std_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (mean, (sample_variance(samples) / n).sqrt())
}

/// Terminal-time samples extracted from a set of bundles: one value per path
/// for X*, X^CL, Y, and each Z entry (`z[i][p]`, counterparty last).
#[derive(Debug, Clone)]
pub struct TerminalSamples {
    pub x_star: Vec<f64>,
    pub x_cl: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

pub fn terminal_samples(paths: &[PathBundle]) -> Result<TerminalSamples> {
    let first = paths
        .first()
        .ok_or_else(|| Error::DegenerateSample("no paths supplied".into()))?;
    let last = first.grid.len() - 1;
    let n_entries = first.log_z[last].len();
    let mut out = TerminalSamples {
        x_star: Vec::with_capacity(paths.len()),
        x_cl: Vec::with_capacity(paths.len()),
        y: Vec::with_capacity(paths.len()),
        z: vec![Vec::with_capacity(paths.len()); n_entries],
    };
    for p in paths {
        out.x_star.push(p.x_star[last]);
        out.x_cl.push(p.x_cl[last]);
        out.y.push(p.y[last]);
        for (i, z) in out.z.iter_mut().enumerate() {
            z.push(p.log_z[last][i].exp());
        }
    }
    Ok(out)
}

/// Per-grid-time summary of one scalar trajectory family.
///
/// `envelope_lower`/`envelope_upper` form a one-sided path envelope — mean ±
/// root-mean-square deviation of the paths on that side of the mean. That is
/// a display convention, not a confidence band; the standard error field is
/// the statistically meaningful uncertainty.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesSummary {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub std_error: Vec<f64>,
    pub envelope_lower: Vec<f64>,
    pub envelope_upper: Vec<f64>,
}

fn summarize_series(values: &[Vec<f64>], n_grid: usize) -> SeriesSummary {
    let n = values.len() as f64;
    let mut s = SeriesSummary {
        mean: Vec::with_capacity(n_grid),
        variance: Vec::with_capacity(n_grid),
        std_error: Vec::with_capacity(n_grid),
        envelope_lower: Vec::with_capacity(n_grid),
        envelope_upper: Vec::with_capacity(n_grid),
    };
    for g in 0..n_grid {
        let mean = values.iter().map(|v| v[g]).sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v[g] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let (mut up_sq, mut up_n, mut lo_sq, mut lo_n) = (0.0, 0usize, 0.0, 0usize);
        for v in values {
            let dev = v[g] - mean;
            if dev > 0.0 {
                up_sq += dev * dev;
                up_n += 1;
            } else {
                lo_sq += dev * dev;
                lo_n += 1;
            }
        }
        let up = if up_n > 0 { (up_sq / up_n as f64).sqrt() } else { 0.0 };
        let lo = if lo_n > 0 { (lo_sq / lo_n as f64).sqrt() } else { 0.0 };
        s.mean.push(mean);
        s.variance.push(var);
        s.std_error.push((var / n).sqrt());
        s.envelope_lower.push(mean - lo);
        s.envelope_upper.push(mean + up);
    }
    s
}

/// Aggregate statistics over a simulated path set.
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub measure: Measure,
    pub n_paths: usize,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub x_star: SeriesSummary,
    pub x_cl: SeriesSummary,
    pub y: SeriesSummary,
    /// Mean of exp(log Z_i) per grid time, one row per ensemble entry.
    pub z_mean: Vec<Vec<f64>>,
    pub total_jumps: u64,
    /// Jumps at which the optimal retention α* was negative (kept as a
    /// diagnostic; the control is never clipped).
    pub alpha_negative_jumps: u64,
}

pub fn simulate_summary(config: &SimConfig, paths: &[PathBundle]) -> Result<SimSummary> {
    if paths.is_empty() {
        return Err(Error::DegenerateSample("no paths supplied".into()));
    }
    let n_grid = config.record_grid.len();
    let n_entries = paths[0].log_z[0].len();
    let collect = |f: fn(&PathBundle) -> &Vec<f64>| -> Vec<Vec<f64>> {
        paths.iter().map(|p| f(p).clone()).collect()
    };
    let x_star = summarize_series(&collect(|p| &p.x_star), n_grid);
    let x_cl = summarize_series(&collect(|p| &p.x_cl), n_grid);
    let y = summarize_series(&collect(|p| &p.y), n_grid);
    let mut z_mean = vec![vec![0.0; n_grid]; n_entries];
    for p in paths {
        for g in 0..n_grid {
            for i in 0..n_entries {
                z_mean[i][g] += p.log_z[g][i].exp();
            }
        }
    }
    for row in &mut z_mean {
        for v in row.iter_mut() {
            *v /= paths.len() as f64;
        }
    }
    let total_jumps = paths.iter().map(|p| p.n_jumps() as u64).sum();
    let alpha_negative_jumps = paths
        .iter()
        .flat_map(|p| p.alpha_at_jumps.iter())
        .filter(|a| **a < 0.0)
        .count() as u64;
    Ok(SimSummary {
        measure: config.measure,
        n_paths: paths.len(),
        seed: config.seed,
        grid: config.record_grid.clone(),
        x_star,
        x_cl,
        y,
        z_mean,
        total_jumps,
        alpha_negative_jumps,
    })
}

/// Kernel density estimate on an even abscissa.
#[derive(Debug, Clone, Serialize)]
pub struct DensityCurve {
    pub abscissa: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Gaussian kernel density estimate of a terminal sample. The default
/// bandwidth is Silverman's rule h = 0.9·min(sd, IQR/1.34)·n^{−1/5} (the IQR
/// term is dropped when the interquartile range is zero); the abscissa is
/// [min − 3h, max + 3h] on 512 even points.
pub fn terminal_kde(samples: &[f64], bandwidth: Option<f64>) -> Result<DensityCurve> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!(
            "kernel density estimation needs at least 2 samples, got {n}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    let sd = sample_variance(samples).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateSample(
            "sample variance is zero; no density to estimate".into(),
        ));
    }
    let h = match bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => {
            return Err(Error::Domain(format!(
                "bandwidth must be positive and finite, got {h}"
            )))
        }
        None => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let quantile = |p: f64| {
                let pos = p * (n - 1) as f64;
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                if lo + 1 < n {
                    sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
                } else {
                    sorted[lo]
                }
            };
            let iqr = quantile(0.75) - quantile(0.25);
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * (n as f64).powf(-0.2)
        }
    };
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let abscissa: Vec<f64> = (0..KDE_POINTS).map(|i| lo + step * i as f64).collect();
    let density = abscissa
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(DensityCurve {
        abscissa,
        density,
        bandwidth: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensators::GammaCompensator;
    use approx::assert_relative_eq;

    fn counterparty() -> GammaCompensator {
        GammaCompensator::new(0.52, 0.58, 654.98).unwrap()
    }

    fn three_model_ensemble() -> ModelEnsemble {
        ModelEnsemble::new(
            vec![
                GammaCompensator::new(0.51, 0.56, 697.68).unwrap(),
                GammaCompensator::new(0.54, 0.57, 678.55).unwrap(),
                GammaCompensator::new(0.50, 0.60, 640.0).unwrap(),
            ],
            counterparty(),
            vec![0.4, 0.3, 0.3],
            0.0,
        )
        .unwrap()
    }

    fn market() -> MarketParams {
        MarketParams::new(210.0, 0.12, 0.01, 5000.0, 5000.0, 5.0).unwrap()
    }

    fn grid11() -> Vec<f64> {
        (0..=10).map(|i| 0.5 * i as f64).collect()
    }

    #[test]
    fn initial_conditions_hold_on_any_path() {
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Optimal, 8, 42, grid11()).unwrap();
        for p in simulate_prm(&config, &ens, &mkt).unwrap() {
            assert!(p.log_z[0].iter().all(|&lz| lz == 0.0));
            assert_relative_eq!(p.x_star[0], 5000.0, max_relative = 1e-12);
            assert_eq!(p.x_cl[0], 5000.0);
            assert_eq!(p.y[0], 5000.0);
        }
    }

    #[test]
    fn no_jump_path_has_pure_drift_log_z() {
        let ens = three_model_ensemble();
        let mkt = market();
        let p = PathBundle::from_events(0, vec![], vec![], grid11(), &ens, &mkt).unwrap();
        let lam_c = 0.52;
        for (g, &t) in p.grid.iter().enumerate() {
            for i in 0..3 {
                let d = ens.entry(i).rate() - 1.12 * lam_c;
                assert_relative_eq!(p.log_z[g][i], t * d, epsilon = 1e-14);
            }
            // Counterparty entry: d_C = −ηλ_C.
            assert_relative_eq!(p.log_z[g][3], -0.12 * lam_c * t, epsilon = 1e-14);
        }
        assert!(p.alpha_at_jumps.is_empty());
    }

    #[test]
    fn sde_route_matches_closed_form_without_jumps() {
        let ens = three_model_ensemble();
        let mkt = market();
        let p = PathBundle::from_events(0, vec![], vec![], grid11(), &ens, &mkt).unwrap();
        let sde = x_star_from_sde(&p, &ens, &mkt).unwrap();
        for (a, b) in sde.iter().zip(&p.x_star) {
            assert!((a - b).abs() / (1.0 + b.abs()) < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn sde_route_matches_closed_form_with_crafted_jumps() {
        let ens = three_model_ensemble();
        let mkt = market();
        // Includes a jump exactly at a grid time to exercise the càdlàg
        // recording order.
        let p = PathBundle::from_events(
            0,
            vec![0.8, 1.5, 3.33],
            vec![512.0, 47.5, 2100.0],
            grid11(),
            &ens,
            &mkt,
        )
        .unwrap();
        let sde = x_star_from_sde(&p, &ens, &mkt).unwrap();
        for (a, b) in sde.iter().zip(&p.x_star) {
            assert!((a - b).abs() / (1.0 + b.abs()) < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn pathwise_identity_links_the_three_wealth_processes() {
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Optimal, 64, 7, grid11()).unwrap();
        for p in simulate_prm(&config, &ens, &mkt).unwrap() {
            let y = counterparty_path(&p, &ens, &mkt).unwrap();
            for g in 0..p.grid.len() {
                let lhs = y[g] - 5000.0;
                let rhs = p.x_cl[g] - p.x_star[g];
                assert!(
                    (lhs - rhs).abs() / (1.0 + rhs.abs()) < 1e-10,
                    "path {} t={}: {lhs} vs {rhs}",
                    p.path_id,
                    p.grid[g]
                );
                assert_eq!(y[g], p.y[g]);
            }
        }
    }

    #[test]
    fn qstar_z_mean_is_close_to_horizon_factor() {
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Optimal, 20_000, 1234, vec![0.0, 2.5, 5.0]).unwrap();
        let paths = simulate_prm(&config, &ens, &mkt).unwrap();
        let term = terminal_samples(&paths).unwrap();
        let gf = crate::controls::GrowthFactors::compute(&ens, 0.12).unwrap();
        for i in 0..4 {
            let (mean, se) = mean_and_std_error(&term.z[i]);
            let target = (gf.g(i) * 5.0).exp();
            assert!(
                (mean - target).abs() < 3.0 * se,
                "entry {i}: mean {mean} target {target} se {se}"
            );
        }
    }

    #[test]
    fn own_model_martingale_within_monte_carlo_error() {
        let ens = three_model_ensemble();
        let mkt = market();
        for k in [0usize, 3] {
            let config = SimConfig::new(Measure::Model(k), 20_000, 99, vec![0.0, 5.0]).unwrap();
            let paths = simulate_prm(&config, &ens, &mkt).unwrap();
            let term = terminal_samples(&paths).unwrap();
            let (mean, se) = mean_and_std_error(&term.z[k]);
            assert!((mean - 1.0).abs() < 3.0 * se, "k={k}: {mean} ± {se}");
        }
    }

    #[test]
    fn counterparty_terminal_wealth_is_flat_under_qstar() {
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Optimal, 20_000, 2024, vec![0.0, 5.0]).unwrap();
        let paths = simulate_prm(&config, &ens, &mkt).unwrap();
        let term = terminal_samples(&paths).unwrap();
        let (mean, se) = mean_and_std_error(&term.y);
        assert!((mean - 5000.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn jump_count_follows_the_inflated_poisson_law() {
        use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Optimal, 100_000, 31337, vec![0.0, 5.0]).unwrap();
        let paths = simulate_prm(&config, &ens, &mkt).unwrap();
        let mean = 1.12 * 0.52 * 5.0;
        let poisson = Poisson::new(mean).unwrap();
        // Bins 0..=9 plus a lumped tail.
        let mut observed = [0.0_f64; 11];
        for p in &paths {
            observed[p.n_jumps().min(10)] += 1.0;
        }
        let n = paths.len() as f64;
        let mut chi2 = 0.0;
        let mut tail = 1.0;
        for k in 0..10 {
            let pk = poisson.pmf(k as u64);
            tail -= pk;
            let expect = n * pk;
            chi2 += (observed[k] - expect).powi(2) / expect;
        }
        chi2 += (observed[10] - n * tail).powi(2) / (n * tail);
        let p_value = 1.0 - ChiSquared::new(10.0).unwrap().cdf(chi2);
        assert!(p_value > 0.001, "chi2 {chi2}, p {p_value}");
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Optimal, 600, 5150, grid11()).unwrap();
        let parallel = simulate_prm(&config, &ens, &mkt).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let serial = pool.install(|| simulate_prm(&config, &ens, &mkt)).unwrap();
        assert_eq!(parallel.len(), serial.len());
        for (a, b) in parallel.iter().zip(&serial) {
            assert_eq!(a.path_id, b.path_id);
            assert_eq!(a.jump_times.len(), b.jump_times.len());
            for (x, y) in a.jump_times.iter().zip(&b.jump_times) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.jump_marks.iter().zip(&b.jump_marks) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.x_star.iter().zip(&b.x_star) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn reruns_reproduce_and_streams_differ() {
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Counterparty, 4, 8, vec![0.0, 5.0]).unwrap();
        let a = simulate_prm(&config, &ens, &mkt).unwrap();
        let b = simulate_prm(&config, &ens, &mkt).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.jump_times, q.jump_times);
            assert_eq!(p.jump_marks, q.jump_marks);
        }
        // Different paths see different randomness (overwhelmingly).
        assert_ne!(a[0].jump_times, a[1].jump_times);
    }

    #[test]
    fn config_validation_rejects_bad_grids() {
        assert!(matches!(
            SimConfig::new(Measure::Optimal, 0, 1, vec![0.0, 5.0]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SimConfig::new(Measure::Optimal, 1, 1, vec![]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SimConfig::new(Measure::Optimal, 1, 1, vec![0.5, 5.0]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SimConfig::new(Measure::Optimal, 1, 1, vec![0.0, 3.0, 3.0]),
            Err(Error::Config(_))
        ));
        // Grid not ending at T is caught once the market is known.
        let ens = three_model_ensemble();
        let mkt = market();
        let cfg = SimConfig::new(Measure::Optimal, 1, 1, vec![0.0, 4.0]).unwrap();
        assert!(matches!(
            simulate_prm(&cfg, &ens, &mkt),
            Err(Error::Config(_))
        ));
        let cfg = SimConfig::new(Measure::Model(9), 1, 1, vec![0.0, 5.0]).unwrap();
        assert!(matches!(
            simulate_prm(&cfg, &ens, &mkt),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn uniform_grid_covers_zero_to_horizon() {
        let mkt = market();
        let cfg = SimConfig::uniform(Measure::Optimal, 3, 5, 10, &mkt).unwrap();
        assert_eq!(cfg.record_grid.len(), 11);
        assert_eq!(cfg.record_grid[0], 0.0);
        assert_eq!(*cfg.record_grid.last().unwrap(), 5.0);
    }

    #[test]
    fn summary_reports_envelope_and_diagnostics() {
        let ens = three_model_ensemble();
        let mkt = market();
        let config = SimConfig::new(Measure::Optimal, 500, 60, grid11()).unwrap();
        let paths = simulate_prm(&config, &ens, &mkt).unwrap();
        let s = simulate_summary(&config, &paths).unwrap();
        assert_eq!(s.n_paths, 500);
        assert_eq!(s.x_star.mean.len(), 11);
        assert_eq!(s.z_mean.len(), 4);
        assert!(s.total_jumps > 0);
        assert!(s.alpha_negative_jumps <= s.total_jumps);
        for g in 0..11 {
            assert!(s.x_star.envelope_lower[g] <= s.x_star.mean[g] + 1e-12);
            assert!(s.x_star.envelope_upper[g] >= s.x_star.mean[g] - 1e-12);
        }
        // t = 0 column is degenerate: every path starts at x0.
        assert_eq!(s.x_star.variance[0], 0.0);
        assert_relative_eq!(s.x_star.mean[0], 5000.0, max_relative = 1e-12);
    }

    #[test]
    fn kde_rejects_degenerate_samples() {
        assert!(matches!(
            terminal_kde(&[1.0], None),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            terminal_kde(&[0.0, 0.0], None),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            terminal_kde(&[0.0, 1.0], Some(-1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn kde_recovers_the_standard_normal_density() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha12Rng::seed_from_u64(271828);
        let samples: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let curve = terminal_kde(&samples, None).unwrap();
        let mut sup = 0.0_f64;
        for (x, d) in curve.abscissa.iter().zip(&curve.density) {
            let target = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            sup = sup.max((d - target).abs());
        }
        assert!(sup < 0.02, "sup-norm error {sup}");
        // Normalization by the trapezoid rule.
        let mut integral = 0.0;
        for w in curve.abscissa.windows(2).zip(curve.density.windows(2)) {
            integral += 0.5 * (w.0[1] - w.0[0]) * (w.1[0] + w.1[1]);
        }
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn kde_honors_an_explicit_bandwidth() {
        let samples = [0.0, 1.0, 2.0, 3.0];
        let curve = terminal_kde(&samples, Some(0.5)).unwrap();
        assert_eq!(curve.bandwidth, 0.5);
        assert_eq!(curve.abscissa.len(), KDE_POINTS);
        assert_relative_eq!(curve.abscissa[0], -1.5, max_relative = 1e-12);
        assert_relative_eq!(*curve.abscissa.last().unwrap(), 4.5, max_relative = 1e-12);
    }

    #[test]
    fn event_validation_rejects_malformed_paths() {
        let ens = three_model_ensemble();
        let mkt = market();
        let grid = vec![0.0, 5.0];
        for (times, marks) in [
            (vec![2.0, 1.0], vec![10.0, 10.0]),
            (vec![0.0], vec![10.0]),
            (vec![6.0], vec![10.0]),
            (vec![1.0], vec![-3.0]),
            (vec![1.0, 2.0], vec![10.0]),
        ] {
            assert!(
                PathBundle::from_events(0, times.clone(), marks.clone(), grid.clone(), &ens, &mkt)
                    .is_err(),
                "times {times:?} marks {marks:?}"
            );
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn identity_holds_for_random_seeds(seed in 0u64..1_000_000) {
                let ens = three_model_ensemble();
                let mkt = market();
                let config = SimConfig::new(Measure::Optimal, 2, seed, vec![0.0, 1.0, 3.7, 5.0]).unwrap();
                for p in simulate_prm(&config, &ens, &mkt).unwrap() {
                    let sde = x_star_from_sde(&p, &ens, &mkt).unwrap();
                    for g in 0..p.grid.len() {
                        let rel = (p.y[g] - 5000.0 - (p.x_cl[g] - p.x_star[g])).abs()
                            / (1.0 + (p.x_cl[g] - p.x_star[g]).abs());
                        prop_assert!(rel < 1e-9);
                        let rel_sde = (sde[g] - p.x_star[g]).abs() / (1.0 + p.x_star[g].abs());
                        prop_assert!(rel_sde < 1e-9);
                    }
                }
            }
        }
    }
}
