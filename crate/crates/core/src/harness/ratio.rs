use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Oversampling ratio `m/n` kept as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MOverN {
    num: u64,
    den: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MOverN {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::invalid("m/n must be a positive ratio"));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(k: u64) -> Result<Self> {
        Self::new(k, 1)
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `round(n * m/n)`, at least one.
    pub fn measurements(self, n: usize) -> usize {
        let m = (n as u128 * self.num as u128 + self.den as u128 / 2) / self.den as u128;
        (m as usize).max(1)
    }

    /// Label safe for file names: `6`, `5_2`.
    pub fn file_label(self) -> String {
        if self.den == 1 {
            self.num.to_string()
        } else {
            format!("{}_{}", self.num, self.den)
        }
    }

    /// `10, 12, ..., 30`-style integer grids.
    pub fn integer_range(start: u64, end: u64, step: u64) -> Result<Vec<Self>> {
        if step == 0 {
            return Err(Error::invalid("grid step must be positive"));
        }
        (start..=end)
            .step_by(step as usize)
            .map(Self::integer)
            .collect()
    }

    /// Comma-separated list; each entry `k`, `p/q`, a decimal, or a grid
    /// `a..b:s`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((range, step)) = part.split_once(':') {
                let (a, b) = range
                    .split_once("..")
                    .ok_or_else(|| Error::invalid(format!("bad grid '{part}'")))?;
                let parse = |t: &str| {
                    t.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::invalid(format!("bad grid '{part}'")))
                };
                out.extend(Self::integer_range(parse(a)?, parse(b)?, parse(step)?)?);
            } else {
                out.push(part.parse()?);
            }
        }
        Ok(out)
    }
}

impl FromStr for MOverN {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("'{s}' is not a positive ratio"));
        if let Some((p, q)) = s.split_once('/') {
            let p = p.trim().parse::<u64>().map_err(|_| bad())?;
            let q = q.trim().parse::<u64>().map_err(|_| bad())?;
            return Self::new(p, q).map_err(|_| bad());
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let int = if int.is_empty() {
                0
            } else {
                int.parse::<u64>().map_err(|_| bad())?
            };
            let den = 10u64.pow(frac.len() as u32);
            let frac = if frac.is_empty() {
                0
            } else {
                frac.parse::<u64>().map_err(|_| bad())?
            };
            return Self::new(int * den + frac, den).map_err(|_| bad());
        }
        Self::integer(s.parse::<u64>().map_err(|_| bad())?).map_err(|_| bad())
    }
}

impl fmt::Display for MOverN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for MOverN {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integers_fractions_and_decimals() {
        assert_eq!("6".parse::<MOverN>().unwrap(), MOverN::new(6, 1).unwrap());
        assert_eq!(
            "5/2".parse::<MOverN>().unwrap(),
            "2.5".parse::<MOverN>().unwrap()
        );
        assert_eq!("10/4".parse::<MOverN>().unwrap().to_string(), "5/2");
        assert!("0".parse::<MOverN>().is_err());
        assert!("x".parse::<MOverN>().is_err());
        assert!("3/0".parse::<MOverN>().is_err());
    }

    #[test]
    fn measurement_counts_round() {
        assert_eq!(MOverN::integer(6).unwrap().measurements(128), 768);
        assert_eq!("5/2".parse::<MOverN>().unwrap().measurements(3), 8);
    }

    #[test]
    fn lists_and_grids() {
        let v = MOverN::parse_list("2, 5/2, 10..14:2").unwrap();
        let s: Vec<String> = v.iter().map(|r| r.to_string()).collect();
        assert_eq!(s, ["2", "5/2", "10", "12", "14"]);
        assert!(MOverN::parse_list("").unwrap().is_empty());
    }
}
