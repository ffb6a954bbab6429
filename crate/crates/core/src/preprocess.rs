//! Cleaning of raw series: activity-aware threshold outlier removal, linear
//! interpolation of missing samples, alignment onto a uniform time grid, and
//! min-max scaling.

use serde::{Deserialize, Serialize};

use crate::domain::{ActivityLabel, ActivityProfile, Channel, LabeledSeries, SensorSample};
use crate::error::{Error, Result};

/// Activity-specific acceptance band for each channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBounds {
    pub label: ActivityLabel,
    pub temp_lower: f64,
    pub temp_upper: f64,
    pub hum_lower: f64,
    pub hum_upper: f64,
}

impl ThresholdBounds {
    pub fn new(
        label: ActivityLabel,
        temp: (f64, f64),
        hum: (f64, f64),
    ) -> Result<Self> {
        if !(temp.0 < temp.1) || !(hum.0 < hum.1) {
            return Err(Error::Validation(format!(
                "{label}: bounds require lower < upper (temp {temp:?}, hum {hum:?})"
            )));
        }
        Ok(Self {
            label,
            temp_lower: temp.0,
            temp_upper: temp.1,
            hum_lower: hum.0,
            hum_upper: hum.1,
        })
    }

    /// Published outlier bounds. These are the authoritative defaults; note
    /// the humidity rows differ from (observed range +- 1.1 %) by 0.1 for
    /// some activities, see [`recompute`](Self::recompute).
    pub fn published(label: ActivityLabel) -> Self {
        let (t, h) = match label {
            ActivityLabel::Running => ((28.0, 31.0), (71.0, 79.5)),
            ActivityLabel::Walking => ((28.6, 31.5), (70.2, 77.3)),
            ActivityLabel::Sitting => ((30.4, 33.2), (66.4, 71.5)),
            ActivityLabel::Sleeping => ((31.1, 33.4), (68.5, 74.8)),
        };
        Self::new(label, t, h).expect("published bounds are ordered")
    }

    /// Bounds from a profile's observed range widened by the tolerance.
    pub fn recompute(profile: &ActivityProfile, tol: Tolerance) -> Result<Self> {
        let t = compute_bounds(profile.temp_min, profile.temp_max, tol.delta_temp)?;
        let h = compute_bounds(profile.hum_min, profile.hum_max, tol.delta_hum)?;
        Self::new(profile.label, t, h)
    }

    pub fn for_channel(&self, channel: Channel) -> (f64, f64) {
        match channel {
            Channel::Temperature => (self.temp_lower, self.temp_upper),
            Channel::Humidity => (self.hum_lower, self.hum_upper),
        }
    }

    /// True if either present channel lies strictly outside its band.
    pub fn is_outlier(&self, sample: &SensorSample) -> bool {
        Channel::BOTH.iter().any(|&c| {
            let (lo, hi) = self.for_channel(c);
            sample.get(c).is_some_and(|v| v < lo || v > hi)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub delta_temp: f64,
    pub delta_hum: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            delta_temp: 0.3,
            delta_hum: 1.1,
        }
    }
}

impl Tolerance {
    pub fn new(delta_temp: f64, delta_hum: f64) -> Result<Self> {
        if !(delta_temp > 0.0) || !(delta_hum > 0.0) {
            return Err(Error::invalid("tolerance", "deltas must be > 0"));
        }
        Ok(Self {
            delta_temp,
            delta_hum,
        })
    }

    pub fn for_channel(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Temperature => self.delta_temp,
            Channel::Humidity => self.delta_hum,
        }
    }
}

/// How outlier bounds are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMode {
    #[default]
    Published,
    Recompute,
}

impl std::str::FromStr for BoundsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "published" => Ok(BoundsMode::Published),
            "recompute" => Ok(BoundsMode::Recompute),
            other => Err(Error::InvalidConfig(format!("unknown bounds mode `{other}`"))),
        }
    }
}

impl BoundsMode {
    pub fn bounds(self, profile: &ActivityProfile, tol: Tolerance) -> Result<ThresholdBounds> {
        match self {
            BoundsMode::Published => Ok(ThresholdBounds::published(profile.label)),
            BoundsMode::Recompute => ThresholdBounds::recompute(profile, tol),
        }
    }
}

/// `(observed_min - delta, observed_max + delta)`.
pub fn compute_bounds(observed_min: f64, observed_max: f64, delta: f64) -> Result<(f64, f64)> {
    if !(observed_min <= observed_max) {
        return Err(Error::invalid(
            "observed range",
            format!("min {observed_min} > max {observed_max}"),
        ));
    }
    if !(delta >= 0.0) {
        return Err(Error::invalid("delta", format!("{delta} must be >= 0")));
    }
    Ok((observed_min - delta, observed_max + delta))
}

/// Marks every sample with a channel strictly outside the bounds as missing
/// (both channels). Returns the cleaned series and the sorted removed indices.
pub fn remove_outliers(
    series: &LabeledSeries,
    bounds: &ThresholdBounds,
) -> Result<(LabeledSeries, Vec<usize>)> {
    if bounds.label != series.label {
        return Err(Error::Validation(format!(
            "bounds for {} applied to a {} series",
            bounds.label, series.label
        )));
    }
    let mut removed = Vec::new();
    let samples = series
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if bounds.is_outlier(s) {
                removed.push(i);
                SensorSample {
                    temperature: None,
                    humidity: None,
                    ..*s
                }
            } else {
                *s
            }
        })
        .collect();
    Ok((series.with_samples(samples)?, removed))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub imputed: usize,
    pub warnings: Vec<String>,
}

/// Linearly interpolates every missing value from its nearest present
/// neighbours in time. Leading and trailing gaps take the nearest present
/// value and produce a warning.
pub fn interpolate_missing(series: &LabeledSeries) -> Result<(LabeledSeries, ImputeReport)> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let ts = series.timestamps();
    let mut report = ImputeReport::default();
    let mut samples = series.samples().to_vec();
    for channel in Channel::BOTH {
        let mut vals = series.channel(channel);
        fill_gaps(&ts, &mut vals, channel.as_str(), &mut report)?;
        for (s, v) in samples.iter_mut().zip(vals) {
            s.set(channel, v);
        }
    }
    // aqi is optional: an entirely absent channel stays absent.
    let mut aqi: Vec<Option<f64>> = samples.iter().map(|s| s.aqi_raw).collect();
    if aqi.iter().any(Option::is_some) {
        fill_gaps(&ts, &mut aqi, "aqi_raw", &mut ImputeReport::default())?;
        for (s, v) in samples.iter_mut().zip(aqi) {
            s.aqi_raw = v;
        }
    }
    Ok((series.with_samples(samples)?, report))
}

fn fill_gaps(
    ts: &[f64],
    vals: &mut [Option<f64>],
    name: &'static str,
    report: &mut ImputeReport,
) -> Result<()> {
    let present: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].is_some()).collect();
    let (&first, &last) = match (present.first(), present.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::UnrecoverableSeries(name)),
    };
    if first > 0 {
        let v = vals[first];
        vals[..first].iter_mut().for_each(|x| *x = v);
        report.imputed += first;
        report
            .warnings
            .push(format!("{name}: {first} leading samples filled by nearest value"));
    }
    if last + 1 < vals.len() {
        let n = vals.len() - last - 1;
        let v = vals[last];
        vals[last + 1..].iter_mut().for_each(|x| *x = v);
        report.imputed += n;
        report
            .warnings
            .push(format!("{name}: {n} trailing samples filled by nearest value"));
    }
    for pair in present.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b == a + 1 {
            continue;
        }
        let (xa, xb) = (vals[a].unwrap(), vals[b].unwrap());
        let slope = (xb - xa) / (ts[b] - ts[a]);
        for k in a + 1..b {
            vals[k] = Some(xa + slope * (ts[k] - ts[a]));
            report.imputed += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    pub input_len: usize,
    pub output_len: usize,
    /// Grid slots that received more than one raw sample.
    pub merged_slots: usize,
    /// Grid slots that received no raw sample.
    pub vacant_slots: usize,
    pub impute: ImputeReport,
}

/// Snaps timestamps to the nearest multiple of `1/sampling_hz`, averages
/// samples sharing a slot, and interpolates vacant slots.
pub fn align_timestamps(
    series: &LabeledSeries,
    sampling_hz: f64,
) -> Result<(LabeledSeries, AlignReport)> {
    if !(sampling_hz > 0.0 && sampling_hz.is_finite()) {
        return Err(Error::invalid("sampling_hz", format!("{sampling_hz} must be > 0")));
    }
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let slot_of = |t: f64| (t * sampling_hz).round() as i64;
    let k0 = slot_of(series.samples()[0].timestamp);
    let k1 = slot_of(series.samples()[series.len() - 1].timestamp);
    let n = (k1 - k0 + 1) as usize;

    #[derive(Default, Clone, Copy)]
    struct Acc {
        hits: usize,
        sum: [f64; 3],
        cnt: [usize; 3],
    }
    let mut acc = vec![Acc::default(); n];
    for s in series.samples() {
        let a = &mut acc[(slot_of(s.timestamp) - k0) as usize];
        a.hits += 1;
        for (j, v) in [s.temperature, s.humidity, s.aqi_raw].into_iter().enumerate() {
            if let Some(v) = v {
                a.sum[j] += v;
                a.cnt[j] += 1;
            }
        }
    }
    let mean = |a: &Acc, j: usize| (a.cnt[j] > 0).then(|| a.sum[j] / a.cnt[j] as f64);
    let samples: Vec<SensorSample> = acc
        .iter()
        .enumerate()
        .map(|(i, a)| SensorSample {
            timestamp: (k0 + i as i64) as f64 / sampling_hz,
            temperature: mean(a, 0),
            humidity: mean(a, 1),
            aqi_raw: mean(a, 2),
        })
        .collect();
    let gridded = LabeledSeries::new(
        samples,
        series.label,
        sampling_hz,
        series.subject_id.clone(),
        series.device_id.clone(),
    )?;
    let (out, impute) = interpolate_missing(&gridded)?;
    let report = AlignReport {
        input_len: series.len(),
        output_len: out.len(),
        merged_slots: acc.iter().filter(|a| a.hits > 1).count(),
        vacant_slots: acc.iter().filter(|a| a.hits == 0).count(),
        impute,
    };
    Ok((out, report))
}

/// Affine map parameters onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub x_min: f64,
    pub x_max: f64,
}

impl ScalingParams {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::invalid(
                "scaling",
                format!("degenerate range [{x_min}, {x_max}]"),
            ));
        }
        Ok(Self { x_min, x_max })
    }

    /// Fits on observed values. A constant input gets a unit-width range so
    /// every value maps to 0.
    pub fn fit(values: &[f64]) -> Result<Self> {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            return Err(Error::InsufficientData("no finite values to fit scaling".into()));
        }
        if lo == hi {
            return Self::new(lo, lo + 1.0);
        }
        Self::new(lo, hi)
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn unscale(&self, y: f64) -> f64 {
        self.x_min + y * (self.x_max - self.x_min)
    }
}

/// Scales values onto [0, 1]; out-of-range inputs are clamped and counted.
pub fn min_max_scale(values: &[f64], params: ScalingParams) -> Result<(Vec<f64>, usize)> {
    let params = ScalingParams::new(params.x_min, params.x_max)?;
    let mut clamped = 0;
    let out = values
        .iter()
        .map(|&x| {
            let y = params.scale(x);
            if !(0.0..=1.0).contains(&y) {
                clamped += 1;
                y.clamp(0.0, 1.0)
            } else {
                y
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("min_max_scale clamped {clamped} values outside [{}, {}]", params.x_min, params.x_max);
    }
    Ok((out, clamped))
}

/// Counts of a full cleaning pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_len: usize,
    pub output_len: usize,
    pub removed: usize,
    pub removed_indices: Vec<usize>,
    pub imputed: usize,
    pub merged_slots: usize,
    pub warnings: Vec<String>,
}

/// Outlier removal, then grid alignment with interpolation.
pub fn clean(
    series: &LabeledSeries,
    bounds: &ThresholdBounds,
    target_hz: f64,
) -> Result<(LabeledSeries, CleaningReport)> {
    let (marked, removed_indices) = remove_outliers(series, bounds)?;
    let (aligned, align) = align_timestamps(&marked, target_hz)?;
    Ok((
        aligned,
        CleaningReport {
            input_len: series.len(),
            output_len: align.output_len,
            removed: removed_indices.len(),
            removed_indices,
            imputed: align.impute.imputed,
            merged_slots: align.merged_slots,
            warnings: align.impute.warnings,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_profiles;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn series(points: &[(f64, Option<f64>, Option<f64>)]) -> LabeledSeries {
        let samples = points
            .iter()
            .map(|&(t, a, b)| SensorSample { timestamp: t, temperature: a, humidity: b, aqi_raw: None })
            .collect();
        LabeledSeries::new(samples, ActivityLabel::Running, 1.0, "s", "d").unwrap()
    }

    #[test]
    fn worked_example_bounds() {
        let (l, u) = compute_bounds(28.3, 30.7, 0.3).unwrap();
        assert_abs_diff_eq!(l, 28.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u, 31.0, epsilon = 1e-12);
        let (l, u) = compute_bounds(72.1, 78.4, 1.1).unwrap();
        assert_abs_diff_eq!(l, 71.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u, 79.5, epsilon = 1e-12);
        assert_eq!(compute_bounds(1.5, 2.5, 0.0).unwrap(), (1.5, 2.5));
        assert!(compute_bounds(3.0, 2.0, 0.1).is_err());
    }

    #[test]
    fn published_temperature_rows_recompute_exactly() {
        for p in default_profiles().values() {
            let r = ThresholdBounds::recompute(p, Tolerance::default()).unwrap();
            let t = ThresholdBounds::published(p.label);
            assert_abs_diff_eq!(r.temp_lower, t.temp_lower, epsilon = 1e-9);
            assert_abs_diff_eq!(r.temp_upper, t.temp_upper, epsilon = 1e-9);
        }
    }

    #[test]
    fn outlier_examples() {
        let b = ThresholdBounds::published(ActivityLabel::Running);
        let s = series(&[(0.0, Some(30.2), Some(75.0)), (1.0, Some(31.5), Some(75.0)), (2.0, Some(29.0), Some(80.0))]);
        let (out, removed) = remove_outliers(&s, &b).unwrap();
        assert_eq!(removed, vec![1, 2]);
        assert_eq!(out.samples()[0].temperature, Some(30.2));
        assert_eq!(out.samples()[1].temperature, None);
        let clean = series(&[(0.0, Some(30.0), Some(75.0)), (1.0, Some(28.0), Some(79.5))]);
        let (out, removed) = remove_outliers(&clean, &b).unwrap();
        assert!(removed.is_empty());
        assert_eq!(out, clean);
    }

    #[test]
    fn remove_outliers_rejects_label_mismatch() {
        let s = series(&[(0.0, Some(30.0), Some(75.0))]);
        assert!(remove_outliers(&s, &ThresholdBounds::published(ActivityLabel::Sitting)).is_err());
    }

    #[test]
    fn interpolation_midpoint_and_ramp() {
        let s = series(&[(0.0, Some(1.0), Some(1.0)), (1.0, None, Some(2.0)), (2.0, Some(3.0), Some(3.0))]);
        let (out, rep) = interpolate_missing(&s).unwrap();
        assert_eq!(out.samples()[1].temperature, Some(2.0));
        assert_eq!(rep.imputed, 1);

        let pts: Vec<_> = (0..10)
            .map(|i| {
                let v = 2.0 + 0.5 * i as f64;
                (i as f64, if (4..7).contains(&i) { None } else { Some(v) }, Some(v))
            })
            .collect();
        let (out, _) = interpolate_missing(&series(&pts)).unwrap();
        for (i, s) in out.samples().iter().enumerate() {
            assert_abs_diff_eq!(s.temperature.unwrap(), 2.0 + 0.5 * i as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolation_boundaries_and_failures() {
        let s = series(&[(0.0, None, Some(1.0)), (1.0, Some(5.0), Some(1.0)), (2.0, None, Some(1.0))]);
        let (out, rep) = interpolate_missing(&s).unwrap();
        assert_eq!(out.channel(Channel::Temperature), vec![Some(5.0); 3]);
        assert_eq!(rep.warnings.len(), 2);
        let dead = series(&[(0.0, None, Some(1.0)), (1.0, None, Some(1.0))]);
        assert!(matches!(interpolate_missing(&dead), Err(Error::UnrecoverableSeries("temperature"))));
    }

    #[test]
    fn sinusoid_gaps_within_interpolation_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let f = 0.05;
        let w = 2.0 * std::f64::consts::PI * f;
        let truth: Vec<f64> = (0..600).map(|i| (w * i as f64).sin()).collect();
        let pts: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let gap = i > 0 && i < 599 && rng.gen::<f64>() < 0.05;
                (i as f64, if gap { None } else { Some(v) }, Some(v))
            })
            .collect();
        let s = series(&pts);
        let ts = s.timestamps();
        let vals = s.channel(Channel::Temperature);
        let (out, _) = interpolate_missing(&s).unwrap();
        // Each gap run spanning h seconds is bounded by h^2 max|x''| / 8.
        let mut i = 0;
        while i < vals.len() {
            if vals[i].is_none() {
                let a = i - 1;
                let mut b = i;
                while vals[b].is_none() {
                    b += 1;
                }
                let h = ts[b] - ts[a];
                let bound = h * h * w * w / 8.0;
                for k in a + 1..b {
                    let err = (out.samples()[k].temperature.unwrap() - truth[k]).abs();
                    assert!(err <= bound + 1e-12, "k={k} err={err} bound={bound}");
                }
                i = b;
            } else {
                i += 1;
            }
        }
    }

    #[test]
    fn align_rounds_to_grid() {
        let s = series(&[(0.0, Some(1.0), Some(1.0)), (1.02, Some(2.0), Some(2.0)), (1.98, Some(3.0), Some(3.0))]);
        let (out, rep) = align_timestamps(&s, 1.0).unwrap();
        assert_eq!(out.timestamps(), vec![0.0, 1.0, 2.0]);
        assert_eq!(out.channel(Channel::Temperature), vec![Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(rep.vacant_slots, 0);

        let (again, _) = align_timestamps(&out, 1.0).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn align_averages_duplicates_and_fills_vacancies() {
        let s = series(&[
            (0.0, Some(1.0), Some(1.0)),
            (0.9, Some(2.0), Some(2.0)),
            (1.1, Some(4.0), Some(4.0)),
            (3.0, Some(6.0), Some(6.0)),
        ]);
        let (out, rep) = align_timestamps(&s, 1.0).unwrap();
        assert_eq!(out.timestamps(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(out.channel(Channel::Humidity), vec![Some(1.0), Some(3.0), Some(4.5), Some(6.0)]);
        assert_eq!((rep.merged_slots, rep.vacant_slots), (1, 1));
    }

    #[test]
    fn scaling_worked_example() {
        let p = ScalingParams::new(28.0, 34.0).unwrap();
        let (v, clamped) = min_max_scale(&[30.5, 28.0, 34.0, 40.0], p).unwrap();
        assert_eq!(format!("{:.3}", v[0]), "0.417");
        assert_eq!((v[1], v[2], v[3]), (0.0, 1.0, 1.0));
        assert_eq!(clamped, 1);
        assert!(min_max_scale(&[1.0], ScalingParams { x_min: 2.0, x_max: 2.0 }).is_err());
    }

    proptest! {
        #[test]
        fn scaling_is_monotone_and_invertible(lo in -100.0f64..100.0, w in 0.01f64..50.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = ScalingParams::new(lo, lo + w).unwrap();
            let (xa, xb) = (p.unscale(a), p.unscale(b));
            let (sa, sb) = (p.scale(xa), p.scale(xb));
            if xa < xb { prop_assert!(sa < sb); }
            let x = lo + a * w;
            prop_assert!((p.unscale(p.scale(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }

        #[test]
        fn interpolation_idempotent_on_complete(vals in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let pts: Vec<_> = vals.iter().enumerate().map(|(i, &v)| (i as f64, Some(v), Some(v))).collect();
            let s = series(&pts);
            let (out, rep) = interpolate_missing(&s).unwrap();
            prop_assert_eq!(rep.imputed, 0);
            prop_assert_eq!(out, s);
        }

        #[test]
        fn align_output_is_uniform(jitters in proptest::collection::vec(0.0f64..0.49, 2..60), hz in prop_oneof![Just(1.0), Just(2.0), Just(0.5)]) {
            let pts: Vec<_> = jitters.iter().enumerate()
                .map(|(i, j)| ((i as f64 + j) / hz * 1.0, Some(30.0 + i as f64 * 0.01), Some(70.0)))
                .collect();
            let s = LabeledSeries::new(
                pts.iter().map(|&(t, a, b)| SensorSample { timestamp: t, temperature: a, humidity: b, aqi_raw: None }).collect(),
                ActivityLabel::Sitting, hz, "s", "d").unwrap();
            let (out, _) = align_timestamps(&s, hz).unwrap();
            prop_assert!(out.is_uniform_grid(1e-9));
            prop_assert_eq!(out.missing_count(), 0);
        }
    }
}
