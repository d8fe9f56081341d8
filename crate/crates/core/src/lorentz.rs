//! Lorentz norms via dyadic level decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Secondary Lorentz exponent; infinity selects the weak norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LorentzR {
    Finite(f64),
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzSpec {
    pub p: f64,
    #[serde(with = "lorentz_r_serde")]
    pub r: LorentzR,
    /// Values below 2^level_floor are dropped from the decomposition.
    #[serde(default = "default_level_floor")]
    pub level_floor: i32,
}

fn default_level_floor() -> i32 {
    -64
}

impl LorentzSpec {
    pub fn new(p: f64, r: LorentzR) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::ConfigInvalid(format!("Lorentz p must be > 1, got {p}")));
        }
        if let LorentzR::Finite(r) = r {
            if !(r > 0.0) {
                return Err(Error::ConfigInvalid(format!("Lorentz r must be positive, got {r}")));
            }
        }
        Ok(LorentzSpec { p, r, level_floor: default_level_floor() })
    }
}

mod lorentz_r_serde {
    use super::LorentzR;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &LorentzR, s: S) -> Result<S::Ok, S::Error> {
        match r {
            LorentzR::Finite(v) => s.serialize_f64(*v),
            LorentzR::Infinity => s.serialize_str("inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LorentzR, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => Ok(LorentzR::Finite(
                n.as_f64().ok_or_else(|| serde::de::Error::custom("bad r"))?,
            )),
            serde_json::Value::String(s) if s == "inf" || s == "infinity" => Ok(LorentzR::Infinity),
            _ => Err(serde::de::Error::custom("r must be a positive real or \"inf\"")),
        }
    }
}

/// Exact floor(log2 v) for positive finite v, from the exponent bits.
#[inline]
fn floor_log2(v: f64) -> i32 {
    debug_assert!(v > 0.0 && v.is_finite());
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7FF) as i32;
    if exp == 0 {
        // subnormal: fall back
        v.log2().floor() as i32
    } else {
        exp - 1023
    }
}

/// Measures of the dyadic level sets E_k = {2^k <= f < 2^(k+1)}, ascending
/// in k; zero values are skipped.
pub fn dyadic_levels(f: &GridFunction) -> Vec<(i32, f64)> {
    let vol = f.geometry().voxel_volume();
    let mut counts = std::collections::BTreeMap::<i32, usize>::new();
    for &v in f.values() {
        if v > 0.0 {
            *counts.entry(floor_log2(v)).or_insert(0) += 1;
        }
    }
    counts.into_iter().map(|(k, c)| (k, c as f64 * vol)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LorentzReport {
    pub norm: f64,
    /// L^1 mass carried by values below the level floor, dropped from the
    /// decomposition.
    pub dropped_mass: f64,
    pub levels: Vec<(i32, f64)>,
}

/// The dyadic Lorentz norm (sum_k (2^k |E_k|^(1/p))^r)^(1/r); r = infinity
/// gives sup_k 2^k |E_k|^(1/p).
pub fn lorentz_norm(f: &GridFunction, spec: &LorentzSpec) -> f64 {
    lorentz_report(f, spec).norm
}

pub fn lorentz_report(f: &GridFunction, spec: &LorentzSpec) -> LorentzReport {
    let vol = f.geometry().voxel_volume();
    let all = dyadic_levels(f);
    let mut dropped_mass = 0.0;
    let mut levels = Vec::new();
    for &(k, measure) in &all {
        if k < spec.level_floor {
            // report what the floor discarded
            dropped_mass += (k as f64).exp2() * measure;
        } else {
            levels.push((k, measure));
        }
    }
    let _ = vol;
    let norm = match spec.r {
        LorentzR::Infinity => levels
            .iter()
            .map(|&(k, m)| (k as f64).exp2() * m.powf(1.0 / spec.p))
            .fold(0.0f64, f64::max),
        LorentzR::Finite(r) => levels
            .iter()
            .map(|&(k, m)| ((k as f64).exp2() * m.powf(1.0 / spec.p)).powf(r))
            .sum::<f64>()
            .powf(1.0 / r),
    };
    LorentzReport { norm, dropped_mass, levels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridFunction, GridGeometry, GridSet, unit_cube};

    fn spec(p: f64, r: LorentzR) -> LorentzSpec {
        LorentzSpec::new(p, r).unwrap()
    }

    #[test]
    fn indicator_single_level() {
        // f = chi_E: one dyadic level k = 0, norm |E|^(1/p).
        let e = unit_cube(2, 10).restrict(|c| c[0] < 0.5);
        let f = GridFunction::indicator(&e, 1.0);
        let got = lorentz_norm(&f, &spec(3.0, LorentzR::Finite(2.0)));
        let want = e.measure().powf(1.0 / 3.0);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn two_level_closed_form() {
        // f = 2 chi_A + chi_B with A, B disjoint.
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[10, 10]).unwrap();
        let a = GridSet::rasterize(geom.clone(), |c| c[0] < 0.3);
        let b = GridSet::rasterize(geom.clone(), |c| c[0] >= 0.3 && c[0] < 0.8);
        let values: Vec<f64> = a
            .occupancy()
            .iter()
            .zip(b.occupancy())
            .map(|(&ia, &ib)| if ia { 2.0 } else if ib { 1.0 } else { 0.0 })
            .collect();
        let f = GridFunction::new(geom, values).unwrap();
        let (p, r) = (1.5, 2.5);
        let got = lorentz_norm(&f, &spec(p, LorentzR::Finite(r)));
        let want = ((2.0 * a.measure().powf(1.0 / p)).powf(r)
            + b.measure().powf(1.0 / p).powf(r))
        .powf(1.0 / r);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn zero_function_has_zero_norm() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[4, 4]).unwrap();
        let f = GridFunction::zero(geom);
        assert_eq!(lorentz_norm(&f, &spec(2.0, LorentzR::Finite(2.0))), 0.0);
        assert_eq!(lorentz_norm(&f, &spec(2.0, LorentzR::Infinity)), 0.0);
    }

    #[test]
    fn weak_norm_is_sup() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[10, 10]).unwrap();
        let values: Vec<f64> = (0..100).map(|i| if i < 8 { 4.0 } else { 1.0 }).collect();
        let f = GridFunction::new(geom, values).unwrap();
        let p = 2.0;
        let got = lorentz_norm(&f, &spec(p, LorentzR::Infinity));
        let want = (4.0 * (0.08f64).powf(0.5)).max(1.0 * (0.92f64).powf(0.5));
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn r_equals_p_within_factor_two_of_lp() {
        // On each level f is between 2^k and 2^(k+1), so the dyadic sum with
        // r = p brackets the true L^p integral within a factor 2.
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let values: Vec<f64> = (0..256).map(|i| 0.1 + (i % 13) as f64 * 0.7).collect();
        let f = GridFunction::new(geom, values).unwrap();
        let p = (2.0 + 1.0) / 2.0;
        let dyadic = lorentz_norm(&f, &spec(p, LorentzR::Finite(p)));
        let lp = f.lp_norm(p);
        assert!(dyadic <= lp * (1.0 + 1e-12));
        assert!(lp <= 2.0 * dyadic);
    }

    #[test]
    fn exact_powers_of_two_land_on_their_level() {
        assert_eq!(floor_log2(1.0), 0);
        assert_eq!(floor_log2(2.0), 1);
        assert_eq!(floor_log2(1.999_999), 0);
        assert_eq!(floor_log2(0.5), -1);
        assert_eq!(floor_log2(0.499_999), -2);
    }

    #[test]
    fn spec_serde_roundtrip() {
        let s = spec(2.5, LorentzR::Infinity);
        let j = serde_json::to_value(s).unwrap();
        let back: LorentzSpec = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
    }
}
