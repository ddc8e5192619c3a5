//! Error analysis for correlated sample streams: autocorrelation,
//! blocking (σ, σ_b, and their ratio R), and block-delete jackknife for
//! nonlinear estimators.
//!
//! All variances use the biased 1/M normalization throughout, so the
//! blocking ratio R is exactly 1 at block size 1 and the jackknife of a
//! linear statistic reproduces σ_b identically.

use crate::{Error, Real, Result};

/// A labeled stream of scalar samples.
#[derive(Clone, Debug)]
pub struct Series<T> {
    pub label: String,
    pub values: Vec<T>,
}

impl<T: Real> Series<T> {
    pub fn new(label: impl Into<String>, values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain(
                "a series needs at least two samples for any error estimate".into(),
            ));
        }
        Ok(Series {
            label: label.into(),
            values,
        })
    }
}

fn mean<T: Real>(x: &[T]) -> T {
    x.iter().copied().fold(T::zero(), |a, b| a + b) / T::of(x.len() as f64)
}

/// Raw autocorrelation C(t) = (1/(M-t)) Σ_i X_i X_{i+t} - ((1/M) Σ X_i)^2.
/// At t = 0 this is the biased sample variance.
pub fn autocorrelation<T: Real>(x: &[T], t: usize) -> Result<T> {
    let m = x.len();
    if m < 2 {
        return Err(Error::Domain("series too short for autocorrelation".into()));
    }
    if t >= m {
        return Err(Error::Domain(format!(
            "lag {t} out of range for {m} samples"
        )));
    }
    let mu = mean(x);
    let mut acc = T::zero();
    for i in 0..m - t {
        acc += x[i] * x[i + t];
    }
    Ok(acc / T::of((m - t) as f64) - mu * mu)
}

/// C(t) for t = 0..=max_lag.
pub fn autocorrelation_curve<T: Real>(x: &[T], max_lag: usize) -> Result<Vec<T>> {
    (0..=max_lag).map(|t| autocorrelation(x, t)).collect()
}

/// Exponential decay time from a least-squares fit of ln C(t) over the
/// leading positive stretch of the curve. Diagnostic only; returns None
/// when fewer than three positive points exist or the fit does not decay.
pub fn exponential_tau<T: Real>(c: &[T]) -> Option<T> {
    let n_pos = c.iter().take_while(|&&v| v > T::zero()).count();
    if n_pos < 3 {
        return None;
    }
    let ys: Vec<T> = c[..n_pos].iter().map(|v| v.ln()).collect();
    let n = T::of(n_pos as f64);
    let t_mean = T::of((n_pos - 1) as f64) / T::of(2.0);
    let y_mean = ys.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (t, y) in ys.iter().enumerate() {
        let dt = T::of(t as f64) - t_mean;
        num += dt * (*y - y_mean);
        den += dt * dt;
    }
    let slope = num / den;
    if slope < T::zero() {
        Some(-T::one() / slope)
    } else {
        None
    }
}

/// Blocking analysis at one block size.
#[derive(Clone, Copy, Debug)]
pub struct BlockingResult<T> {
    /// Naive standard error of the mean, ignoring correlations.
    pub sigma: T,
    /// Standard error of the mean computed from block averages.
    pub sigma_b: T,
    /// R = σ_b² / σ²; the factor by which correlations inflate the cost of
    /// an independent sample.
    pub r: T,
}

/// σ, σ_b, and R at the given block size. A trailing remainder that does
/// not fill a block is dropped, and both error estimates are computed over
/// the same truncated prefix.
pub fn blocking<T: Real>(x: &[T], block_size: usize) -> Result<BlockingResult<T>> {
    if block_size == 0 {
        return Err(Error::Domain("block size must be positive".into()));
    }
    let k = x.len() / block_size;
    if k < 8 {
        return Err(Error::Domain(format!(
            "{} samples give only {k} blocks of {block_size}; need at least 8",
            x.len()
        )));
    }
    let mp = k * block_size;
    let data = &x[..mp];
    let mu = mean(data);
    let mut var = T::zero();
    for &v in data {
        let d = v - mu;
        var += d * d;
    }
    var /= T::of(mp as f64);
    let mut var_b = T::zero();
    for b in 0..k {
        let block = &data[b * block_size..(b + 1) * block_size];
        let d = mean(block) - mu;
        var_b += d * d;
    }
    var_b /= T::of(k as f64);
    if var == T::zero() {
        return Ok(BlockingResult {
            sigma: T::zero(),
            sigma_b: T::zero(),
            r: T::one(),
        });
    }
    let sigma_sq = var / T::of(mp as f64);
    let sigma_b_sq = var_b / T::of(k as f64);
    Ok(BlockingResult {
        sigma: sigma_sq.sqrt(),
        sigma_b: sigma_b_sq.sqrt(),
        r: sigma_b_sq / sigma_sq,
    })
}

/// Powers of two from 1 up to m/8: the block sizes that keep at least
/// eight blocks.
pub fn default_block_sizes(m: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut nb = 1usize;
    while nb <= m / 8 {
        sizes.push(nb);
        nb *= 2;
    }
    sizes
}

/// One row of an R(N_b) curve.
#[derive(Clone, Copy, Debug)]
pub struct RCurvePoint<T> {
    pub block_size: usize,
    pub sigma: T,
    pub sigma_b: T,
    pub r: T,
}

/// The blocking curve with its saturation estimate.
#[derive(Clone, Debug)]
pub struct RCurve<T> {
    pub points: Vec<RCurvePoint<T>>,
    /// Block size and R value at the first doubling that changed R by less
    /// than 10%, if any.
    pub saturated: Option<(usize, T)>,
    /// Set when no plateau was found: the largest R seen is only a lower
    /// bound on the true ratio.
    pub lower_bound: bool,
}

/// Blocking analysis over ascending block sizes with plateau detection:
/// R is saturated at the first doubling of N_b that moves it by less than
/// 10% relative.
pub fn r_curve<T: Real>(x: &[T], block_sizes: &[usize]) -> Result<RCurve<T>> {
    if block_sizes.is_empty() {
        return Err(Error::Domain("no block sizes given".into()));
    }
    if block_sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("block sizes must be strictly ascending".into()));
    }
    let mut points = Vec::with_capacity(block_sizes.len());
    for &nb in block_sizes {
        let b = blocking(x, nb)?;
        points.push(RCurvePoint {
            block_size: nb,
            sigma: b.sigma,
            sigma_b: b.sigma_b,
            r: b.r,
        });
    }
    let mut saturated = None;
    for w in points.windows(2) {
        if w[1].block_size != 2 * w[0].block_size {
            continue;
        }
        let scale = w[1].r.abs().max(T::of(1e-300));
        if (w[1].r - w[0].r).abs() < T::of(0.1) * scale {
            saturated = Some((w[1].block_size, w[1].r));
            break;
        }
    }
    Ok(RCurve {
        lower_bound: saturated.is_none(),
        saturated,
        points,
    })
}

fn block_layout<T: Real>(x: &[T], y: &[T], block_size: usize) -> Result<(usize, usize)> {
    if x.len() != y.len() {
        return Err(Error::Structure(format!(
            "paired series differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if block_size == 0 {
        return Err(Error::Domain("block size must be positive".into()));
    }
    let k = x.len() / block_size;
    if k < 8 {
        return Err(Error::Domain(format!(
            "{} samples give only {k} blocks of {block_size}; need at least 8",
            x.len()
        )));
    }
    Ok((k, k * block_size))
}

/// Block-delete jackknife of κ = β(⟨n²⟩ - ⟨n⟩²) from paired streams of N
/// and N² samples. Returns the bias-corrected mean and the jackknife
/// standard error, normalized so a linear statistic would reproduce σ_b.
pub fn jackknife_kappa<T: Real>(
    n: &[T],
    n_sq: &[T],
    beta: T,
    block_size: usize,
) -> Result<(T, T)> {
    if beta < T::zero() {
        return Err(Error::Domain(format!("beta must be non-negative, got {beta}")));
    }
    let (k, mp) = block_layout(n, n_sq, block_size)?;
    let kappa = |sn: T, sq: T, count: T| beta * (sq / count - (sn / count) * (sn / count));
    let mut total_n = T::zero();
    let mut total_q = T::zero();
    let mut block_n = vec![T::zero(); k];
    let mut block_q = vec![T::zero(); k];
    for i in 0..mp {
        total_n += n[i];
        total_q += n_sq[i];
        block_n[i / block_size] += n[i];
        block_q[i / block_size] += n_sq[i];
    }
    let full = kappa(total_n, total_q, T::of(mp as f64));
    let rest = T::of((mp - block_size) as f64);
    let thetas: Vec<T> = (0..k)
        .map(|b| kappa(total_n - block_n[b], total_q - block_q[b], rest))
        .collect();
    let theta_bar = mean(&thetas);
    let kf = T::of(k as f64);
    let mean_bc = kf * full - (kf - T::one()) * theta_bar;
    let mut ss = T::zero();
    for th in &thetas {
        let d = *th - theta_bar;
        ss += d * d;
    }
    let sigma = (kf - T::one()) / kf * ss.sqrt();
    Ok((mean_bc, sigma))
}

/// Block-delete jackknife of the sample mean. The mean is linear, so this
/// must agree with blocking's σ_b; it exists to validate the jackknife
/// normalization and as a cross-check in analysis output.
pub fn jackknife_mean<T: Real>(x: &[T], block_size: usize) -> Result<(T, T)> {
    let (k, mp) = block_layout(x, x, block_size)?;
    let mut total = T::zero();
    let mut block = vec![T::zero(); k];
    for i in 0..mp {
        total += x[i];
        block[i / block_size] += x[i];
    }
    let full = total / T::of(mp as f64);
    let rest = T::of((mp - block_size) as f64);
    let thetas: Vec<T> = (0..k).map(|b| (total - block[b]) / rest).collect();
    let theta_bar = mean(&thetas);
    let kf = T::of(k as f64);
    let mean_bc = kf * full - (kf - T::one()) * theta_bar;
    let mut ss = T::zero();
    for th in &thetas {
        let d = *th - theta_bar;
        ss += d * d;
    }
    let sigma = (kf - T::one()) / kf * ss.sqrt();
    Ok((mean_bc, sigma))
}
