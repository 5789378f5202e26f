//! Detection records, class labels and attribute masks.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Car,
    Pedestrian,
    Cyclist,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Car, ClassLabel::Pedestrian, ClassLabel::Cyclist];

    pub fn id(self) -> u32 {
        match self {
            ClassLabel::Car => 0,
            ClassLabel::Pedestrian => 1,
            ClassLabel::Cyclist => 2,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Cyclist => "cyclist",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "car" | "vehicle" => Ok(ClassLabel::Car),
            "pedestrian" | "ped" => Ok(ClassLabel::Pedestrian),
            "cyclist" | "cyc" => Ok(ClassLabel::Cyclist),
            other => Err(format!("unknown class '{other}'")),
        }
    }
}

/// One detector output: box, confidence and category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub center: [f64; 3],
    /// (length, width, height)
    pub size: [f64; 3],
    pub yaw: f64,
    pub score: f64,
    pub class: ClassLabel,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        if !self.size.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateBox);
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidConfig(format!(
                "detection score {} outside [0, 1]",
                self.score
            )));
        }
        Ok(())
    }

    pub fn bbox(&self) -> OrientedBox {
        OrientedBox {
            center: self.center,
            size: self.size,
            yaw: self.yaw,
        }
    }

    /// Continuous attribute values in [`Attribute::ALL`] order.
    pub fn attributes(&self) -> [f64; 8] {
        [
            self.center[0],
            self.center[1],
            self.center[2],
            self.size[0],
            self.size[1],
            self.size[2],
            self.yaw,
            self.score,
        ]
    }
}

/// Annotated object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: OrientedBox,
    pub class: ClassLabel,
}

/// Continuous detection attributes that an explanation can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    X,
    Y,
    Z,
    Length,
    Width,
    Height,
    Yaw,
    Score,
}

impl Attribute {
    pub const ALL: [Attribute; 8] = [
        Attribute::X,
        Attribute::Y,
        Attribute::Z,
        Attribute::Length,
        Attribute::Width,
        Attribute::Height,
        Attribute::Yaw,
        Attribute::Score,
    ];

    pub fn bit(self) -> u32 {
        1 << (self as u32)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Attribute::X => "x",
            Attribute::Y => "y",
            Attribute::Z => "z",
            Attribute::Length => "l",
            Attribute::Width => "w",
            Attribute::Height => "h",
            Attribute::Yaw => "r",
            Attribute::Score => "s",
        }
    }
}

/// Non-empty set of attributes, stored as a bitfield (bit `i` = `Attribute::ALL[i]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributeMask(u32);

impl AttributeMask {
    pub const ALL: AttributeMask = AttributeMask(0xff);

    pub fn from_bits(bits: u32) -> Result<Self> {
        if bits == 0 {
            return Err(Error::EmptyMask);
        }
        if bits & !0xff != 0 {
            return Err(Error::InvalidConfig(format!(
                "attribute mask {bits:#x} has unknown bits"
            )));
        }
        Ok(Self(bits))
    }

    pub fn from_attributes(attrs: &[Attribute]) -> Result<Self> {
        Self::from_bits(attrs.iter().fold(0, |acc, a| acc | a.bit()))
    }

    pub fn only(attr: Attribute) -> Self {
        Self(attr.bit())
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, attr: Attribute) -> bool {
        self.0 & attr.bit() != 0
    }

    pub fn union(self, other: AttributeMask) -> AttributeMask {
        Self(self.0 | other.0)
    }

    pub fn attributes(self) -> impl Iterator<Item = Attribute> {
        Attribute::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// Short label such as `xyz` or `all`.
    pub fn label(self) -> String {
        if self == Self::ALL {
            return "all".to_string();
        }
        self.attributes().map(Attribute::symbol).collect()
    }
}

impl FromStr for AttributeMask {
    type Err = Error;

    /// Accepts `all` / `d`, or a string of attribute symbols such as `xyz`, `lwh`, `s`, `r`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") || s == "d" {
            return Ok(Self::ALL);
        }
        let mut bits = 0;
        for ch in s.chars() {
            let attr = Attribute::ALL
                .into_iter()
                .find(|a| a.symbol().starts_with(ch))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown attribute '{ch}'")))?;
            bits |= attr.bit();
        }
        Self::from_bits(bits)
    }
}

impl fmt::Display for AttributeMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
