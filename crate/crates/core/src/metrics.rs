//! Error and difference functionals between numerical and reference
//! solitons, and observed convergence rates.

use std::io::Write;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::ops;
use crate::scalar::Real;

fn relative<T: Real>(num: T, den: T, what: &str) -> Result<T> {
    if !(den > T::zero()) {
        return Err(Error::InvalidArgument(format!("{what}: reference must be positive, got {den}")));
    }
    Ok((num - den).abs() / den)
}

/// `E_A = |A_num - A_th| / A_th`.
pub fn rel_amp_error<T: Real>(a_num: T, a_th: T) -> Result<T> {
    relative(a_num, a_th, "amplitude error")
}

/// `D_A = |A_cnfd - A_ssfm| / A_ssfm`.
pub fn rel_amp_diff<T: Real>(a_cnfd: T, a_ssfm: T) -> Result<T> {
    relative(a_cnfd, a_ssfm, "amplitude difference")
}

/// Copy of a modulus field with its boundary zeroed; also returns the
/// largest discarded value.
pub fn clip_boundary<T: Real>(m: &RealField<T>) -> (RealField<T>, T) {
    let mut out = m.clone();
    let tail = out.zero_boundary();
    (out, tail)
}

fn ratio<T: Real>(num: T, den: T) -> Result<T> {
    if !(den > T::zero()) {
        return Err(Error::InvalidArgument("reference field has zero norm".into()));
    }
    Ok(num / den)
}

/// `‖|u_num| - u_th‖_{2,h} / ‖u_th‖_{2,h}`.
pub fn rel_profile_error_2h<T: Real>(u_num: &ComplexField<T>, u_th_mod: &RealField<T>) -> Result<T> {
    let (th, _) = clip_boundary(u_th_mod);
    let diff = u_num.modulus().sub(&th)?;
    ratio(ops::norm_2h(&diff), ops::norm_2h(&th))
}

/// `| |u_num| - u_th |_{1,h} / |u_th|_{1,h}`.
pub fn rel_profile_error_1h<T: Real>(u_num: &ComplexField<T>, u_th_mod: &RealField<T>) -> Result<T> {
    let (th, _) = clip_boundary(u_th_mod);
    let diff = u_num.modulus().sub(&th)?;
    ratio(ops::seminorm_1h(&diff), ops::seminorm_1h(&th))
}

/// `(D_{2,h}, D_{1,h})` between the CNFD and SSFM moduli, relative to SSFM.
pub fn rel_profile_diff<T: Real>(u_cnfd: &ComplexField<T>, u_ssfm: &ComplexField<T>) -> Result<(T, T)> {
    let (mc, ms) = (u_cnfd.modulus(), u_ssfm.modulus());
    let ms = clip_boundary(&ms).0;
    let diff = clip_boundary(&mc).0.sub(&ms)?;
    Ok((ratio(ops::norm_2h(&diff), ops::norm_2h(&ms))?, ratio(ops::seminorm_1h(&diff), ops::seminorm_1h(&ms))?))
}

/// `log₂(coarse / fine)`.
pub fn observed_rate<T: Real>(coarse: T, fine: T) -> Result<T> {
    if !(coarse > T::zero()) || !(fine > T::zero()) {
        return Err(Error::InvalidArgument(format!("rates need positive values, got {coarse} and {fine}")));
    }
    Ok((coarse / fine).log2())
}

/// One metric value at one resolution and time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub t: f64,
    pub h: f64,
    pub tau: f64,
    pub value: f64,
}

/// Observed rate between two rows of the same metric and time.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEntry {
    pub metric: String,
    pub t: f64,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub rate: f64,
}

/// Metric table in long form plus the rates between successive
/// resolutions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub rates: Vec<RateEntry>,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

impl ConvergenceReport {
    pub fn push(&mut self, metric: &str, t: f64, h: f64, tau: f64, value: f64) {
        self.rows.push(ReportRow { metric: metric.to_owned(), t, h, tau, value });
    }

    pub fn value(&self, metric: &str, t: f64, h: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric && same(r.t, t) && same(r.h, h)).map(|r| r.value)
    }

    pub fn rate(&self, metric: &str, t: f64, h_coarse: f64) -> Option<f64> {
        self.rates.iter().find(|r| r.metric == metric && same(r.t, t) && same(r.h_coarse, h_coarse)).map(|r| r.rate)
    }

    /// Fills `rates` for every `(metric, t)` pair of rows whose `h` and `τ`
    /// are both halved. Other pairs produce no rate.
    pub fn compute_rates(&mut self, metrics: &[&str]) -> Result<()> {
        self.rates.clear();
        for &m in metrics {
            for coarse in self.rows.iter().filter(|r| r.metric == m) {
                let fine = self.rows.iter().find(|r| {
                    r.metric == m && same(r.t, coarse.t) && same(r.h, coarse.h / 2.0) && same(r.tau, coarse.tau / 2.0)
                });
                if let Some(fine) = fine {
                    self.rates.push(RateEntry {
                        metric: m.to_owned(),
                        t: coarse.t,
                        h_coarse: coarse.h,
                        h_fine: fine.h,
                        rate: observed_rate(coarse.value, fine.value)?,
                    });
                }
            }
        }
        Ok(())
    }

    /// CSV with columns `metric,t,h,tau,value,rate`; `rate` is the rate from
    /// this row's `h` to `h/2` (empty if none).
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "metric,t,h,tau,value,rate")?;
        for r in &self.rows {
            let rate = self.rate(&r.metric, r.t, r.h).map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(w, "{},{},{},{},{:.6e},{}", r.metric, r.t, r.h, r.tau, r.value, rate)?;
        }
        Ok(())
    }

    /// Fixed-width table with one row per `(t, metric)` and one column per
    /// `h`, values rounded for display.
    pub fn render_table(&self, metrics: &[&str]) -> String {
        let mut hs: Vec<f64> = Vec::new();
        let mut ts: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !hs.iter().any(|&h| same(h, r.h)) {
                hs.push(r.h);
            }
            if !ts.iter().any(|&t| same(t, r.t)) {
                ts.push(r.t);
            }
        }
        hs.sort_by(|a, b| b.total_cmp(a));
        ts.sort_by(|a, b| a.total_cmp(b));
        let mut s = format!("{:>6} {:>12}", "t", "metric");
        for h in &hs {
            s += &format!(" {:>12}", format!("h=2^{}", h.log2().round()));
        }
        s.push('\n');
        for &t in &ts {
            for &m in metrics {
                if self.value(m, t, hs[0]).is_none() && !hs.iter().any(|&h| self.value(m, t, h).is_some()) {
                    continue;
                }
                s += &format!("{t:>6} {m:>12}");
                for &h in &hs {
                    match self.value(m, t, h) {
                        Some(v) => s += &format!(" {v:>12.4e}"),
                        None => s += &format!(" {:>12}", "-"),
                    }
                }
                s.push('\n');
                if self.rates.iter().any(|r| r.metric == m && same(r.t, t)) {
                    s += &format!("{:>6} {:>12}", "", "rate");
                    for &h in &hs {
                        match self.rate(m, t, h) {
                            Some(v) => s += &format!(" {v:>12.4}"),
                            None => s += &format!(" {:>12}", ""),
                        }
                    }
                    s.push('\n');
                }
            }
        }
        s
    }
}
