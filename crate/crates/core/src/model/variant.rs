use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantName {
    S,
    B,
    L,
}

/// Stage widths and depths of a FerretNet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FerretVariant {
    pub name: VariantName,
    pub stage_channels: Vec<usize>,
    pub stage_blocks: Vec<usize>,
    /// Width multiplier of the head's 1x1 conv relative to the last stage.
    pub head_expansion: usize,
}

pub const HEAD_EXPANSION: usize = 8;

impl FerretVariant {
    pub fn small() -> Self {
        Self::preset(VariantName::S)
    }

    pub fn base() -> Self {
        Self::preset(VariantName::B)
    }

    pub fn large() -> Self {
        Self::preset(VariantName::L)
    }

    pub fn preset(name: VariantName) -> Self {
        let (stage_channels, stage_blocks) = match name {
            VariantName::S => (vec![32, 64], vec![2, 2]),
            VariantName::B => (vec![96, 192], vec![2, 2]),
            VariantName::L => (vec![96, 192, 384, 768], vec![2, 2, 6, 2]),
        };
        Self {
            name,
            stage_channels,
            stage_blocks,
            head_expansion: HEAD_EXPANSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty()
            || self.stage_channels.len() != self.stage_blocks.len()
            || self.stage_channels.contains(&0)
            || self.stage_blocks.contains(&0)
            || self.head_expansion == 0
        {
            return Err(Error::Config(format!("invalid variant {self:?}")));
        }
        Ok(())
    }

    pub fn last_channels(&self) -> usize {
        *self.stage_channels.last().expect("validated variant")
    }

    pub fn head_channels(&self) -> usize {
        self.last_channels() * self.head_expansion
    }

    /// Number of stride-2 stages the input passes through.
    pub fn downsamplings(&self) -> usize {
        2 + self.stage_channels.len() - 1
    }
}

impl FromStr for VariantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(Self::S),
            "b" => Ok(Self::B),
            "l" => Ok(Self::L),
            _ => Err(Error::Config(format!("unknown variant `{s}` (expected s, b or l)"))),
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::S => "s",
            Self::B => "b",
            Self::L => "l",
        })
    }
}
