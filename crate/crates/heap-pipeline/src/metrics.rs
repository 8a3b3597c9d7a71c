//! Statistical metrics used to score long rollouts: azimuthally integrated
//! spatial spectra, per-point temporal spectra, temporal autocorrelation,
//! extrema counts, and the variance-normalized error between curves.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use heap_solver::{Field2D, Spectral, SystemState};

use crate::PipelineError;

/// Which of the two stored fields a metric runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Density,
    Potential,
}

impl Channel {
    pub fn of<'a>(self, s: &'a SystemState) -> &'a Field2D {
        match self {
            Channel::Density => &s.n,
            Channel::Potential => &s.phi,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Channel::Density => 0,
            Channel::Potential => 1,
        }
    }
}

/// A 1D curve over integer bins (radial wavenumber or temporal frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve {
    pub power: Vec<f64>,
}

impl SpectrumCurve {
    pub fn bins(&self) -> impl Iterator<Item = usize> + '_ {
        0..self.power.len()
    }
}

fn signed_mode(i: usize, n: usize) -> isize {
    if i <= n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Azimuthal bin of a 2D mode: `floor(|k|)` clamped into the last bin, so the
/// curve has `min(nx, ny)/2` bins and the final bin absorbs the corner modes.
/// That makes the binned power sum exactly Parseval-consistent with the
/// grid-summed squared field under the `|F|^2 / (nx*ny)` normalization.
pub fn radial_bin(mx: isize, my: isize, n_bins: usize) -> usize {
    let r = ((mx * mx + my * my) as f64).sqrt().floor() as usize;
    r.min(n_bins - 1)
}

/// Time-averaged azimuthally integrated spatial power spectrum.
pub fn spatial_spectrum(
    states: &[SystemState],
    channel: Channel,
) -> Result<SpectrumCurve, PipelineError> {
    let first = states
        .first()
        .ok_or_else(|| PipelineError::Config("spatial_spectrum needs >= 1 step".into()))?;
    let (nx, ny) = (first.n.nx(), first.n.ny());
    if nx != ny {
        return Err(PipelineError::Config(format!(
            "spatial spectrum expects a square grid, got {nx}x{ny}"
        )));
    }
    // Box length does not affect integer-mode binning.
    let sp = Spectral::new(nx, ny, 1.0)?;
    let n_bins = nx.min(ny) / 2;
    let mut acc = vec![0.0f64; n_bins];
    let norm = 1.0 / (nx * ny) as f64;
    for state in states {
        let spec = sp.forward(channel.of(state));
        for j in 0..ny {
            let my = signed_mode(j, ny);
            for i in 0..nx {
                let mx = signed_mode(i, nx);
                let p = spec[j * nx + i].norm_sqr() * norm;
                acc[radial_bin(mx, my, n_bins)] += p;
            }
        }
    }
    for v in &mut acc {
        *v /= states.len() as f64;
    }
    Ok(SpectrumCurve { power: acc })
}

/// Spatially averaged temporal power spectrum; the mean is kept as the 0th
/// harmonic. One-sided bins `0 ..= T/2`, power `|X_f|^2 / T`.
pub fn temporal_spectrum(
    states: &[SystemState],
    channel: Channel,
) -> Result<SpectrumCurve, PipelineError> {
    let t_len = states.len();
    if t_len < 2 {
        return Err(PipelineError::Config("temporal_spectrum needs >= 2 steps".into()));
    }
    let first = states.first().unwrap();
    let (nx, ny) = (first.n.nx(), first.n.ny());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(t_len);
    let n_bins = t_len / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let norm = 1.0 / t_len as f64;
    let mut series = vec![Complex::new(0.0, 0.0); t_len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for idx in 0..nx * ny {
        for (t, s) in states.iter().enumerate() {
            series[t] = Complex::new(channel.of(s).values()[idx], 0.0);
        }
        fft.process_with_scratch(&mut series, &mut scratch);
        for (f, a) in acc.iter_mut().enumerate() {
            *a += series[f].norm_sqr() * norm;
        }
    }
    for v in &mut acc {
        *v /= (nx * ny) as f64;
    }
    Ok(SpectrumCurve { power: acc })
}

/// Mean-removed normalized autocorrelation per grid point, averaged over
/// points; lag 0 is exactly 1. Points with zero variance are excluded and
/// counted.
pub struct AutocorrResult {
    pub curve: Vec<f64>,
    pub excluded_points: usize,
}

pub fn autocorrelation(
    states: &[SystemState],
    channel: Channel,
    max_lag: usize,
) -> Result<AutocorrResult, PipelineError> {
    let t_len = states.len();
    if t_len < 2 || max_lag >= t_len {
        return Err(PipelineError::Config(format!(
            "autocorrelation needs max_lag < steps, got lag {max_lag} with {t_len} steps"
        )));
    }
    let first = states.first().unwrap();
    let (nx, ny) = (first.n.nx(), first.n.ny());
    let mut acc = vec![0.0f64; max_lag + 1];
    let mut excluded = 0usize;
    let mut series = vec![0.0f64; t_len];
    let mut included = 0usize;
    for idx in 0..nx * ny {
        for (t, s) in states.iter().enumerate() {
            series[t] = channel.of(s).values()[idx];
        }
        let mean = series.iter().sum::<f64>() / t_len as f64;
        let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t_len as f64;
        if var <= 0.0 {
            excluded += 1;
            continue;
        }
        included += 1;
        for (lag, a) in acc.iter_mut().enumerate() {
            let m = t_len - lag;
            let cov = (0..m)
                .map(|t| (series[t] - mean) * (series[t + lag] - mean))
                .sum::<f64>()
                / m as f64;
            *a += cov / var;
        }
    }
    if included == 0 {
        return Err(PipelineError::Config("all grid points have zero variance".into()));
    }
    for v in &mut acc {
        *v /= included as f64;
    }
    Ok(AutocorrResult { curve: acc, excluded_points: excluded })
}

/// Strict local extrema against all 8 periodic neighbors, counted per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremaStats {
    pub mean_minima: f64,
    pub mean_maxima: f64,
    pub std_minima: f64,
    pub std_maxima: f64,
    /// Standard deviation of the combined per-step extrema count.
    pub std_total: f64,
}

pub fn count_extrema(field: &Field2D) -> (usize, usize) {
    let (nx, ny) = (field.nx(), field.ny());
    let v = field.values();
    let mut minima = 0usize;
    let mut maxima = 0usize;
    for y in 0..ny {
        let ym = (y + ny - 1) % ny;
        let yp = (y + 1) % ny;
        for x in 0..nx {
            let xm = (x + nx - 1) % nx;
            let xp = (x + 1) % nx;
            let c = v[y * nx + x];
            let n8 = [
                v[ym * nx + xm],
                v[ym * nx + x],
                v[ym * nx + xp],
                v[y * nx + xm],
                v[y * nx + xp],
                v[yp * nx + xm],
                v[yp * nx + x],
                v[yp * nx + xp],
            ];
            if n8.iter().all(|&u| c > u) {
                maxima += 1;
            } else if n8.iter().all(|&u| c < u) {
                minima += 1;
            }
        }
    }
    (minima, maxima)
}

pub fn extrema_stats(states: &[SystemState], channel: Channel) -> Result<ExtremaStats, PipelineError> {
    if states.is_empty() {
        return Err(PipelineError::Config("extrema_stats needs >= 1 step".into()));
    }
    let mut mins = Vec::with_capacity(states.len());
    let mut maxs = Vec::with_capacity(states.len());
    for s in states {
        let (mn, mx) = count_extrema(channel.of(s));
        mins.push(mn as f64);
        maxs.push(mx as f64);
    }
    let stats = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / xs.len() as f64;
        (mean, var.sqrt())
    };
    let (mean_minima, std_minima) = stats(&mins);
    let (mean_maxima, std_maxima) = stats(&maxs);
    let totals: Vec<f64> = mins.iter().zip(&maxs).map(|(a, b)| a + b).collect();
    let (_, std_total) = stats(&totals);
    Ok(ExtremaStats { mean_minima, mean_maxima, std_minima, std_maxima, std_total })
}

/// Domain a curve comparison runs in. Spectra are compared in log10 power
/// (their interesting structure spans decades); autocorrelations compare
/// linearly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorDomain {
    Linear,
    Log10,
}

/// `mean((y - y_true)^2) / var(y_true)`; errors on a constant truth curve are
/// undefined and rejected.
pub fn normalized_error(
    y: &[f64],
    y_true: &[f64],
    domain: ErrorDomain,
) -> Result<f64, PipelineError> {
    if y.len() != y_true.len() || y.is_empty() {
        return Err(PipelineError::Config(format!(
            "curves must have equal nonzero length, got {} vs {}",
            y.len(),
            y_true.len()
        )));
    }
    let map = |v: f64| match domain {
        ErrorDomain::Linear => v,
        ErrorDomain::Log10 => v.max(1e-300).log10(),
    };
    let a: Vec<f64> = y.iter().map(|&v| map(v)).collect();
    let b: Vec<f64> = y_true.iter().map(|&v| map(v)).collect();
    let mean_b = b.iter().sum::<f64>() / b.len() as f64;
    let var_b = b.iter().map(|v| (v - mean_b) * (v - mean_b)).sum::<f64>() / b.len() as f64;
    if var_b <= 0.0 {
        return Err(PipelineError::DegenerateVariance);
    }
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(mse / var_b)
}

/// Relative deviation of the mean extrema counts, averaged over the minima
/// and maxima families. Reported alongside the ranked metrics but never used
/// for ranking.
pub fn extrema_error(generated: &ExtremaStats, truth: &ExtremaStats) -> f64 {
    let rel = |g: f64, t: f64| (g - t).abs() / t.abs().max(1.0);
    0.5 * (rel(generated.mean_minima, truth.mean_minima)
        + rel(generated.mean_maxima, truth.mean_maxima))
}
