use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    Cartesian1d,
    VariableDensity2d,
}

impl MaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::Cartesian1d => "cartesian-1d",
            MaskKind::VariableDensity2d => "variable-density-2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cartesian-1d" | "cartesian" => Some(MaskKind::Cartesian1d),
            "variable-density-2d" | "variable-density" | "vd" => Some(MaskKind::VariableDensity2d),
            _ => None,
        }
    }
}

/// Boolean k-space sampling pattern, row-major, centered spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    kept: Vec<bool>,
    kind: MaskKind,
    acceleration: f64,
}

impl SamplingMask {
    pub fn new(height: usize, width: usize, kept: Vec<bool>, kind: MaskKind, acceleration: f64) -> Result<Self> {
        if kept.len() != height * width {
            return Err(Error::dim("sampling mask", &[height * width], &[kept.len()]));
        }
        Ok(Self {
            height,
            width,
            kept,
            kind,
            acceleration,
        })
    }

    /// Every location sampled.
    pub fn full(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![true; height * width], MaskKind::Cartesian1d, 1.0).expect("consistent")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn kept(&self) -> &[bool] {
        &self.kept
    }

    pub fn is_kept(&self, y: usize, x: usize) -> bool {
        self.kept[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.count() as f64 / self.kept.len() as f64
    }

    /// Indices of kept columns, for masks that keep whole columns.
    pub fn kept_columns(&self) -> Vec<usize> {
        (0..self.width)
            .filter(|&x| (0..self.height).all(|y| self.is_kept(y, x)))
            .collect()
    }

    /// Same pattern restricted to `subset` (must lie inside this mask).
    pub fn restricted(&self, subset: Vec<bool>) -> Result<Self> {
        if subset.len() != self.kept.len() {
            return Err(Error::dim("mask subset", &[self.kept.len()], &[subset.len()]));
        }
        if subset.iter().zip(&self.kept).any(|(&s, &k)| s && !k) {
            return Err(Error::Contract("subset mask selects unacquired locations".into()));
        }
        let n = subset.iter().filter(|&&k| k).count().max(1);
        Ok(Self {
            height: self.height,
            width: self.width,
            acceleration: self.kept.len() as f64 / n as f64,
            kept: subset,
            kind: self.kind,
        })
    }

    /// 8-bit image of the pattern: 255 kept, 0 skipped.
    pub fn to_gray(&self) -> Vec<u8> {
        self.kept.iter().map(|&k| if k { 255 } else { 0 }).collect()
    }
}

fn check_acceleration(acceleration: f64) -> Result<()> {
    if !(1.0..=16.0).contains(&acceleration) || !acceleration.is_finite() {
        return Err(Error::Infeasible(format!(
            "acceleration {acceleration} outside [1, 16]"
        )));
    }
    Ok(())
}

/// Keeps whole columns: a contiguous central band plus uniformly drawn extras.
pub fn make_cartesian_mask(
    height: usize,
    width: usize,
    acceleration: f64,
    center_lines: usize,
    seed: u64,
) -> Result<SamplingMask> {
    check_acceleration(acceleration)?;
    let target = ((width as f64 / acceleration).round() as usize).clamp(1, width);
    if acceleration > 1.0 && center_lines as f64 >= width as f64 / acceleration {
        return Err(Error::Infeasible(format!(
            "{center_lines} center lines leave no room for random lines at {acceleration}x on width {width}"
        )));
    }
    let mut columns = vec![false; width];
    let start = width / 2 - center_lines.min(width) / 2;
    for c in columns.iter_mut().skip(start).take(center_lines) {
        *c = true;
    }
    let mut rest: Vec<usize> = (0..width).filter(|&x| !columns[x]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let need = target.saturating_sub(center_lines.min(width));
    for &x in rest.iter().take(need) {
        columns[x] = true;
    }
    let kept = (0..height * width).map(|i| columns[i % width]).collect();
    SamplingMask::new(height, width, kept, MaskKind::Cartesian1d, acceleration)
}

/// Normalized distance from the k-space center: 0 at DC, 1 at the corners.
fn radius(y: usize, x: usize, h: usize, w: usize) -> f64 {
    let dy = (y as f64 - (h / 2) as f64) / (h as f64 / 2.0);
    let dx = (x as f64 - (w / 2) as f64) / (w as f64 / 2.0);
    ((dy * dy + dx * dx) / 2.0).sqrt().min(1.0)
}

const MAX_REDRAWS: usize = 64;

/// Fully sampled center square plus Bernoulli draws with probability
/// proportional to `(1 - r)^density_power`, scaled to hit `1/acceleration`.
pub fn make_variable_density_mask(
    height: usize,
    width: usize,
    acceleration: f64,
    density_power: f64,
    center_fraction: f64,
    seed: u64,
) -> Result<SamplingMask> {
    check_acceleration(acceleration)?;
    if !(0.0..1.0).contains(&center_fraction) || density_power < 0.0 {
        return Err(Error::Infeasible(format!(
            "center_fraction {center_fraction} / density_power {density_power}"
        )));
    }
    let n = height * width;
    if acceleration == 1.0 {
        return SamplingMask::new(height, width, vec![true; n], MaskKind::VariableDensity2d, 1.0);
    }
    let target = (n as f64 / acceleration).round() as usize;
    let ch = ((center_fraction * height as f64).round() as usize).max(1);
    let cw = ((center_fraction * width as f64).round() as usize).max(1);
    let (y0, x0) = (height / 2 - ch / 2, width / 2 - cw / 2);
    let in_center = |y: usize, x: usize| (y0..y0 + ch).contains(&y) && (x0..x0 + cw).contains(&x);
    let center_count = ch * cw;
    if center_count >= target {
        return Err(Error::Infeasible(format!(
            "center square of {center_count} samples exceeds the {target}-sample budget"
        )));
    }

    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let (y, x) = (i / width, i % width);
            if in_center(y, x) {
                0.0
            } else {
                (1.0 - radius(y, x, height, width)).powf(density_power)
            }
        })
        .collect();
    let extra = (target - center_count) as f64;
    let expected = |s: f64| weights.iter().map(|w| (s * w).min(1.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    while expected(hi) < extra {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Infeasible("density law cannot reach the target fraction".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < extra {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = hi;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Vec<bool>> = None;
    for _ in 0..MAX_REDRAWS {
        let kept: Vec<bool> = (0..n)
            .map(|i| {
                let (y, x) = (i / width, i % width);
                in_center(y, x) || rng.random::<f64>() < (scale * weights[i]).min(1.0)
            })
            .collect();
        let count = kept.iter().filter(|&&k| k).count() as f64;
        if (count - target as f64).abs() <= 0.1 * target as f64 {
            best = Some(kept);
            break;
        }
    }
    let kept = best.ok_or_else(|| Error::Infeasible(format!("no draw within 10% of {target} samples")))?;
    SamplingMask::new(height, width, kept, MaskKind::VariableDensity2d, acceleration)
}
