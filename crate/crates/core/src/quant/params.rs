use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AdaLogParams, LogBase, LogFixedParams, UniformParams};
use crate::error::{QkitError, Result};

/// Largest code for a bit-width, `2^bit − 1`.
#[inline]
pub fn max_code(bit: u8) -> u8 {
    ((1u16 << bit) - 1) as u8
}

pub fn check_bit(bit: u8) -> Result<()> {
    if (2..=8).contains(&bit) {
        Ok(())
    } else {
        Err(QkitError::InvalidParam(format!("bit-width {bit} outside [2, 8]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerKind {
    Uniform,
    Log2,
    Logsqrt2,
    Adalog,
}

impl QuantizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Log2 => "log2",
            Self::Logsqrt2 => "logsqrt2",
            Self::Adalog => "adalog",
        }
    }

    pub fn is_log_family(self) -> bool {
        !matches!(self, Self::Uniform)
    }
}

impl fmt::Display for QuantizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuantizerKind {
    type Err = QkitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "log2" => Ok(Self::Log2),
            "logsqrt2" => Ok(Self::Logsqrt2),
            "adalog" => Ok(Self::Adalog),
            _ => Err(QkitError::InvalidParam(format!(
                "unknown quantizer '{s}' (expected uniform, log2, logsqrt2 or adalog)"
            ))),
        }
    }
}

/// Parameters of one per-tensor quantizer.
///
/// Serialized as a flat record `{kind, scale, zero_point?, q?, r?, bit}`;
/// AdaLog tables are never stored since they follow from `(q, r, bit)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsRecord", try_from = "ParamsRecord")]
pub enum QuantParams {
    Uniform(UniformParams),
    Log(LogFixedParams),
    AdaLog(AdaLogParams),
}

impl QuantParams {
    pub fn kind(&self) -> QuantizerKind {
        match self {
            Self::Uniform(_) => QuantizerKind::Uniform,
            Self::Log(p) => match p.base {
                LogBase::Two => QuantizerKind::Log2,
                LogBase::SqrtTwo => QuantizerKind::Logsqrt2,
            },
            Self::AdaLog(_) => QuantizerKind::Adalog,
        }
    }

    pub fn bit(&self) -> u8 {
        match self {
            Self::Uniform(p) => p.bit,
            Self::Log(p) => p.bit,
            Self::AdaLog(p) => p.bit,
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            Self::Uniform(p) => p.scale,
            Self::Log(p) => p.scale,
            Self::AdaLog(p) => p.scale,
        }
    }

    /// Real value of a code as the kernels see it (AdaLog through its tables).
    pub fn dequant_code(&self, code: u8) -> f64 {
        match self {
            Self::Uniform(p) => super::uniform::dequant_code(p, code),
            Self::Log(p) => p.dequant_code(code),
            Self::AdaLog(p) => super::build_adalog_tables(p).dequant_code(code, p.scale),
        }
    }
}

/// Flat JSON form of [`QuantParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub kind: QuantizerKind,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_point: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    pub bit: u8,
}

impl From<QuantParams> for ParamsRecord {
    fn from(p: QuantParams) -> Self {
        let mut rec =
            ParamsRecord { kind: p.kind(), scale: p.scale(), zero_point: None, q: None, r: None, bit: p.bit() };
        match p {
            QuantParams::Uniform(u) => rec.zero_point = Some(u.zero_point as i64),
            QuantParams::AdaLog(a) => {
                rec.q = Some(a.q);
                rec.r = Some(a.r);
            }
            QuantParams::Log(_) => {}
        }
        rec
    }
}

impl TryFrom<ParamsRecord> for QuantParams {
    type Error = QkitError;

    fn try_from(rec: ParamsRecord) -> Result<Self> {
        let missing = |f: &str| QkitError::InvalidParam(format!("{} params need '{f}'", rec.kind));
        Ok(match rec.kind {
            QuantizerKind::Uniform => {
                let zp = rec.zero_point.ok_or_else(|| missing("zero_point"))?;
                let zp =
                    u8::try_from(zp).map_err(|_| QkitError::InvalidParam(format!("zero_point {zp} out of range")))?;
                QuantParams::Uniform(UniformParams::new(rec.scale, zp, rec.bit)?)
            }
            QuantizerKind::Log2 => QuantParams::Log(LogFixedParams::new(rec.scale, rec.bit, LogBase::Two)?),
            QuantizerKind::Logsqrt2 => QuantParams::Log(LogFixedParams::new(rec.scale, rec.bit, LogBase::SqrtTwo)?),
            QuantizerKind::Adalog => QuantParams::AdaLog(AdaLogParams::new(
                rec.scale,
                rec.q.ok_or_else(|| missing("q"))?,
                rec.r.ok_or_else(|| missing("r"))?,
                rec.bit,
            )?),
        })
    }
}
