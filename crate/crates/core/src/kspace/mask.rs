use crate::error::{Error, Result};

/// Default fraction of central phase-encode columns always acquired.
pub const DEFAULT_ACS_FRACTION: f64 = 0.04;

/// A 1D Cartesian undersampling pattern over phase-encode columns.
///
/// The pattern is broadcast along rows: a kept column is acquired for every
/// frequency-encode row.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianMask {
    kept: Vec<bool>,
    acceleration_nominal: usize,
    acs_fraction: f64,
}

impl CartesianMask {
    /// Wraps an explicit column pattern. The DC column `width / 2` must be
    /// kept.
    pub fn from_columns(kept: Vec<bool>) -> Result<Self> {
        if kept.is_empty() {
            return Err(Error::Mask("mask has zero width".into()));
        }
        if !kept[kept.len() / 2] {
            return Err(Error::Mask("the DC column must be kept".into()));
        }
        Ok(Self::unchecked_from_columns(kept))
    }

    /// Wraps any column pattern, including one with nothing kept. Meant for
    /// tests of the projection's limiting cases.
    pub fn unchecked_from_columns(kept: Vec<bool>) -> Self {
        let n = kept.iter().filter(|&&k| k).count();
        Self { acceleration_nominal: kept.len().checked_div(n).unwrap_or(0), kept, acs_fraction: 0.0 }
    }

    pub fn width(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[bool] {
        &self.kept
    }

    pub fn is_kept(&self, column: usize) -> bool {
        self.kept[column]
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.kept.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i)
    }

    pub fn acceleration_nominal(&self) -> usize {
        self.acceleration_nominal
    }

    pub fn acs_fraction(&self) -> f64 {
        self.acs_fraction
    }

    pub fn sampling_ratio(&self) -> f64 {
        self.kept_count() as f64 / self.width() as f64
    }

    /// `width / kept`; infinite for an empty pattern.
    pub fn actual_acceleration(&self) -> f64 {
        self.width() as f64 / self.kept_count() as f64
    }

    /// True when column `c` and its conjugate partner about the DC column
    /// are either both kept or both dropped. Realness of projected images
    /// only preserves exact data consistency under this condition.
    pub fn is_conjugate_symmetric(&self) -> bool {
        let w = self.width();
        let dc = w / 2;
        (0..w).all(|c| {
            let partner = (2 * dc + w - c) % w;
            self.kept[c] == self.kept[partner]
        })
    }

    /// Serializes as a single line of `0`/`1` characters.
    pub fn to_line(&self) -> String {
        self.kept.iter().map(|&k| if k { '1' } else { '0' }).collect()
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let kept = line
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Mask(format!("unexpected mask character '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(kept)
    }
}

/// Equispaced 1D Cartesian mask.
///
/// Keeps every `accel`-th column phased so the DC column `width / 2` is
/// acquired, plus a central calibration block of `ceil(acs_fraction * width)`
/// columns. The block is extended to the next odd size so it is symmetric
/// about DC; together with the DC-anchored phasing this makes the whole
/// pattern conjugate-symmetric.
pub fn make_uniform_mask(width: usize, accel: usize, acs_fraction: f64) -> Result<CartesianMask> {
    if width == 0 {
        return Err(Error::Mask("mask width must be positive".into()));
    }
    if accel == 0 || accel > width {
        return Err(Error::Mask(format!("acceleration must be in 1..={width}, got {accel}")));
    }
    if !(0.0..1.0).contains(&acs_fraction) {
        return Err(Error::Mask(format!("acs fraction must be in [0, 1), got {acs_fraction}")));
    }
    let dc = width / 2;
    let mut kept = vec![false; width];
    for (c, k) in kept.iter_mut().enumerate() {
        *k = (c as isize - dc as isize).rem_euclid(accel as isize) == 0;
    }
    let acs = (acs_fraction * width as f64).ceil() as usize;
    if acs > 0 {
        let half = (acs / 2) as isize;
        for d in -half..=half {
            let c = dc as isize + d;
            if (0..width as isize).contains(&c) {
                kept[c as usize] = true;
            }
        }
    }
    Ok(CartesianMask { kept, acceleration_nominal: accel, acs_fraction })
}
