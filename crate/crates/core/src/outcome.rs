//! Reducing raw user input to the scalar outcome of a study.

use crate::error::Error;
use crate::model::PeriodValue;

pub const METRES_PER_INCH: f64 = 0.0254;
pub const KG_PER_POUND: f64 = 0.453_592_37;

/// Body-mass index from metric inputs, kg/m².
pub fn bmi_metric(mass_kg: f64, height_m: f64) -> Result<f64, Error> {
    if !(mass_kg > 0.0 && height_m > 0.0) || !mass_kg.is_finite() || !height_m.is_finite() {
        return Err(Error::NonPositiveDimension);
    }
    Ok(mass_kg / (height_m * height_m))
}

/// Body-mass index from imperial inputs (feet, inches, pounds), kg/m².
pub fn compute_bmi(height_ft: u32, height_in: f64, weight_lb: f64) -> Result<f64, Error> {
    if !height_in.is_finite() || height_in < 0.0 {
        return Err(Error::NonPositiveDimension);
    }
    let inches = f64::from(height_ft) * 12.0 + height_in;
    bmi_metric(weight_lb * KG_PER_POUND, inches * METRES_PER_INCH)
}

/// Mean of the series over the requested periods that are present.
pub fn aggregate_energy_outcome<S: AsRef<str>>(
    series: &[PeriodValue],
    periods: &[S],
) -> Result<f64, Error> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for period in periods {
        if let Some(entry) = series.iter().find(|e| e.period == period.as_ref()) {
            sum += entry.value;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoDataForPeriods);
    }
    Ok(sum / count as f64)
}
