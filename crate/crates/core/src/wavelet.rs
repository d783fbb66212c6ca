//! Single-level orthonormal 2-D Haar transform.
//!
//! Each `2 x 2` block `[[a, b], [c, d]]` of every `(batch, channel)` slice maps
//! to one coefficient per subband:
//!
//! ```text
//! ll = (a + b + c + d) / 2      lh = (a - b + c - d) / 2
//! hl = (a + b - c - d) / 2      hh = (a - b - c + d) / 2
//! ```
//!
//! `lh` is the horizontal detail, `hl` the vertical detail. The transform is
//! orthonormal, so the sum of squares is preserved and subband energies of
//! white noise stay at the per-pixel variance.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array4, Zip};

use crate::error::{Error, Result};
use crate::tensor::{Shape, TensorBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subband {
    LL,
    LH,
    HL,
    HH,
}

impl Subband {
    pub const ALL: [Subband; 4] = [Subband::LL, Subband::LH, Subband::HL, Subband::HH];
    pub const HIGH: [Subband; 3] = [Subband::LH, Subband::HL, Subband::HH];

    pub fn name(self) -> &'static str {
        match self {
            Subband::LL => "ll",
            Subband::LH => "lh",
            Subband::HL => "hl",
            Subband::HH => "hh",
        }
    }

    pub fn is_high(self) -> bool {
        self != Subband::LL
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subband {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subband::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown subband `{s}`")))
    }
}

/// The four half-resolution subbands of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    bands: [TensorBatch; 4],
}

impl SubbandSet {
    pub fn new(ll: TensorBatch, lh: TensorBatch, hl: TensorBatch, hh: TensorBatch) -> Result<Self> {
        for (band, other) in [(Subband::LH, &lh), (Subband::HL, &hl), (Subband::HH, &hh)] {
            if other.shape() != ll.shape() {
                return Err(Error::Dimension(format!(
                    "subband {band} has shape {}, ll has {}",
                    other.shape(),
                    ll.shape()
                )));
            }
        }
        Ok(SubbandSet {
            bands: [ll, lh, hl, hh],
        })
    }

    pub fn band(&self, band: Subband) -> &TensorBatch {
        &self.bands[band.index()]
    }

    pub fn band_mut(&mut self, band: Subband) -> &mut TensorBatch {
        &mut self.bands[band.index()]
    }

    /// Shape shared by all four subbands.
    pub fn shape(&self) -> Shape {
        self.bands[0].shape()
    }

    /// Multiplies every coefficient of `band` by `k`.
    pub fn scale(&mut self, band: Subband, k: f64) {
        self.bands[band.index()].array_mut().mapv_inplace(|v| v * k);
    }

    pub fn into_bands(self) -> [TensorBatch; 4] {
        self.bands
    }
}

/// Mean squared coefficient of each subband.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRecord {
    pub ll: f64,
    pub lh: f64,
    pub hl: f64,
    pub hh: f64,
}

impl EnergyRecord {
    pub fn get(&self, band: Subband) -> f64 {
        match band {
            Subband::LL => self.ll,
            Subband::LH => self.lh,
            Subband::HL => self.hl,
            Subband::HH => self.hh,
        }
    }

    pub fn set(&mut self, band: Subband, value: f64) {
        match band {
            Subband::LL => self.ll = value,
            Subband::LH => self.lh = value,
            Subband::HL => self.hl = value,
            Subband::HH => self.hh = value,
        }
    }

    pub fn total(&self) -> f64 {
        self.ll + self.lh + self.hl + self.hh
    }
}

pub fn dwt2(x: &TensorBatch) -> Result<SubbandSet> {
    let shape = x.shape();
    if shape.height % 2 != 0 || shape.width % 2 != 0 {
        return Err(Error::Dimension(format!(
            "dwt2 needs even height and width, got {shape}"
        )));
    }
    x.ensure_finite("dwt2 input")?;

    let half = [shape.batch, shape.channels, shape.height / 2, shape.width / 2];
    let mut ll = Array4::zeros(half);
    let mut lh = Array4::zeros(half);
    let mut hl = Array4::zeros(half);
    let mut hh = Array4::zeros(half);

    Zip::from(ll.outer_iter_mut())
        .and(lh.outer_iter_mut())
        .and(hl.outer_iter_mut())
        .and(hh.outer_iter_mut())
        .and(x.array().outer_iter())
        .par_for_each(|mut ll, mut lh, mut hl, mut hh, src| {
            for c in 0..half[1] {
                for i in 0..half[2] {
                    for j in 0..half[3] {
                        let a = src[[c, 2 * i, 2 * j]];
                        let b = src[[c, 2 * i, 2 * j + 1]];
                        let cc = src[[c, 2 * i + 1, 2 * j]];
                        let d = src[[c, 2 * i + 1, 2 * j + 1]];
                        ll[[c, i, j]] = 0.5 * (a + b + cc + d);
                        lh[[c, i, j]] = 0.5 * (a - b + cc - d);
                        hl[[c, i, j]] = 0.5 * (a + b - cc - d);
                        hh[[c, i, j]] = 0.5 * (a - b - cc + d);
                    }
                }
            }
        });

    SubbandSet::new(
        TensorBatch::new(ll)?,
        TensorBatch::new(lh)?,
        TensorBatch::new(hl)?,
        TensorBatch::new(hh)?,
    )
}

pub fn idwt2(s: &SubbandSet) -> Result<TensorBatch> {
    let half = s.shape();
    for band in Subband::ALL {
        s.band(band).ensure_finite("idwt2 input")?;
    }
    let mut out = Array4::zeros([half.batch, half.channels, 2 * half.height, 2 * half.width]);

    Zip::from(out.outer_iter_mut())
        .and(s.band(Subband::LL).array().outer_iter())
        .and(s.band(Subband::LH).array().outer_iter())
        .and(s.band(Subband::HL).array().outer_iter())
        .and(s.band(Subband::HH).array().outer_iter())
        .par_for_each(|mut dst, ll, lh, hl, hh| {
            for c in 0..half.channels {
                for i in 0..half.height {
                    for j in 0..half.width {
                        let (w, x, y, z) = (ll[[c, i, j]], lh[[c, i, j]], hl[[c, i, j]], hh[[c, i, j]]);
                        dst[[c, 2 * i, 2 * j]] = 0.5 * (w + x + y + z);
                        dst[[c, 2 * i, 2 * j + 1]] = 0.5 * (w - x + y - z);
                        dst[[c, 2 * i + 1, 2 * j]] = 0.5 * (w + x - y - z);
                        dst[[c, 2 * i + 1, 2 * j + 1]] = 0.5 * (w - x - y + z);
                    }
                }
            }
        });

    TensorBatch::new(out)
}

pub fn subband_energy(s: &SubbandSet) -> EnergyRecord {
    let mut record = EnergyRecord::default();
    for band in Subband::ALL {
        record.set(band, s.band(band).mean_square());
    }
    record
}

/// Per batch element energies, `[band][element]`. Averaging over elements
/// gives [`subband_energy`]; the spread gives Monte-Carlo standard errors.
pub fn subband_energy_per_element(s: &SubbandSet) -> [Vec<f64>; 4] {
    Subband::ALL.map(|band| {
        let data = s.band(band);
        let n = data.shape().per_element() as f64;
        data.array()
            .outer_iter()
            .map(|e| e.iter().map(|v| v * v).sum::<f64>() / n)
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;

    fn image(rows: &[[f64; 2]; 2]) -> TensorBatch {
        TensorBatch::from_vec(
            Shape::new(1, 1, 2, 2),
            rows.iter().flatten().copied().collect(),
        )
        .unwrap()
    }

    fn only(s: &SubbandSet) -> [f64; 4] {
        Subband::ALL.map(|b| s.band(b).array()[[0, 0, 0, 0]])
    }

    #[test]
    fn constant_block_is_pure_ll() {
        let c = 1.75;
        let s = dwt2(&image(&[[c, c], [c, c]])).unwrap();
        assert_eq!(only(&s), [2.0 * c, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn checkerboard_is_pure_hh() {
        let s = dwt2(&image(&[[1.0, -1.0], [-1.0, 1.0]])).unwrap();
        assert_eq!(only(&s), [0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn directional_details() {
        // columns differ -> horizontal detail (lh); rows differ -> vertical (hl)
        let s = dwt2(&image(&[[1.0, -1.0], [1.0, -1.0]])).unwrap();
        assert_eq!(only(&s), [0.0, 2.0, 0.0, 0.0]);
        let s = dwt2(&image(&[[1.0, 1.0], [-1.0, -1.0]])).unwrap();
        assert_eq!(only(&s), [0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn inverse_of_single_ll_coefficient() {
        let c = -0.3;
        let one = |v: f64| TensorBatch::filled(Shape::new(1, 1, 1, 1), v);
        let s = SubbandSet::new(one(2.0 * c), one(0.0), one(0.0), one(0.0)).unwrap();
        let x = idwt2(&s).unwrap();
        assert!(x.array().iter().all(|&v| (v - c).abs() < 1e-15));

        let zeros = SubbandSet::new(one(0.0), one(0.0), one(0.0), one(0.0)).unwrap();
        assert!(idwt2(&zeros).unwrap().array().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn roundtrip_random_batches() {
        for (h, w) in [(8, 8), (16, 16), (4, 10)] {
            let x = TensorBatch::standard_normal(Shape::new(3, 2, h, w), 5, Domain::Data, 0);
            let back = idwt2(&dwt2(&x).unwrap()).unwrap();
            assert!(x.max_abs_diff(&back).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn odd_extents_and_non_finite_are_rejected() {
        let odd = TensorBatch::zeros(Shape::new(1, 1, 3, 4));
        assert!(matches!(dwt2(&odd), Err(Error::Dimension(_))));
        let odd = TensorBatch::zeros(Shape::new(1, 1, 4, 5));
        assert!(matches!(dwt2(&odd), Err(Error::Dimension(_))));

        let mut bad = TensorBatch::zeros(Shape::new(1, 1, 2, 2));
        bad.array_mut()[[0, 0, 1, 1]] = f64::NAN;
        assert!(matches!(dwt2(&bad), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn mismatched_subbands_are_rejected() {
        let a = TensorBatch::zeros(Shape::new(1, 1, 2, 2));
        let b = TensorBatch::zeros(Shape::new(1, 1, 2, 3));
        assert!(matches!(
            SubbandSet::new(a.clone(), a.clone(), b, a),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn energy_of_constant_and_zero_images() {
        let c = 0.6;
        let s = dwt2(&TensorBatch::filled(Shape::new(2, 3, 4, 4), c)).unwrap();
        let e = subband_energy(&s);
        assert!((e.ll - 4.0 * c * c).abs() < 1e-15);
        assert_eq!((e.lh, e.hl, e.hh), (0.0, 0.0, 0.0));

        let z = subband_energy(&dwt2(&TensorBatch::zeros(Shape::new(1, 1, 2, 2))).unwrap());
        assert_eq!(z.total(), 0.0);
    }

    #[test]
    fn white_noise_energy_is_unit_per_subband() {
        let x = TensorBatch::standard_normal(Shape::new(256, 1, 64, 64), 1, Domain::Data, 0);
        let e = subband_energy(&dwt2(&x).unwrap());
        for band in Subband::ALL {
            assert!((e.get(band) - 1.0).abs() <= 0.05, "{band}: {}", e.get(band));
        }
    }

    #[test]
    fn per_element_energies_average_to_batch_energy() {
        let x = TensorBatch::standard_normal(Shape::new(7, 2, 6, 8), 3, Domain::Data, 0);
        let s = dwt2(&x).unwrap();
        let total = subband_energy(&s);
        let per = subband_energy_per_element(&s);
        for band in Subband::ALL {
            let avg = per[band as usize].iter().sum::<f64>() / 7.0;
            assert!((avg - total.get(band)).abs() < 1e-14);
        }
    }
}
