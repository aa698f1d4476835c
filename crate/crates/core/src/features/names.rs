//! Canonical feature names: `<PARAM>-<ZONE>[<kind>]`, e.g. `CRAE-B`,
//! `FD-Ca`, `cTORT-Bv`. The kind suffix is `a` (arterioles), `v` (venules)
//! or `t` (all vessels) and is present exactly for the kinded parameters.
//!
//! The derived `Ord` is the registry order (zone, then parameter, then
//! kind); every deterministic tie-break in the crate uses it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::vessel::{VesselKind, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Crae,
    Crve,
    Avr,
    Fd,
    Mw,
    Stdw,
    Tort,
    CTort,
    Ldr,
    Bc,
    Af,
    Ba,
    Aa,
    Je,
    /// number of branches (junctions)
    Nb,
    /// number of first branches (junctions on a trunk)
    Nfb,
    /// number of arteriolar trunks
    Na,
    /// number of venular trunks
    Nv,
}

impl Param {
    pub const ALL: [Param; 18] = [
        Param::Crae,
        Param::Crve,
        Param::Avr,
        Param::Fd,
        Param::Mw,
        Param::Stdw,
        Param::Tort,
        Param::CTort,
        Param::Ldr,
        Param::Bc,
        Param::Af,
        Param::Ba,
        Param::Aa,
        Param::Je,
        Param::Nb,
        Param::Nfb,
        Param::Na,
        Param::Nv,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Param::Crae => "CRAE",
            Param::Crve => "CRVE",
            Param::Avr => "AVR",
            Param::Fd => "FD",
            Param::Mw => "MW",
            Param::Stdw => "STDW",
            Param::Tort => "TORT",
            Param::CTort => "cTORT",
            Param::Ldr => "LDR",
            Param::Bc => "BC",
            Param::Af => "AF",
            Param::Ba => "BA",
            Param::Aa => "AA",
            Param::Je => "JE",
            Param::Nb => "NB",
            Param::Nfb => "NFB",
            Param::Na => "NA",
            Param::Nv => "NV",
        }
    }

    /// Whether the parameter is reported per vessel kind.
    pub fn is_kinded(self) -> bool {
        !matches!(self, Param::Crae | Param::Crve | Param::Avr | Param::Na | Param::Nv)
    }

    pub fn is_count(self) -> bool {
        matches!(self, Param::Nb | Param::Nfb | Param::Na | Param::Nv)
    }

    fn from_symbol(s: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.symbol() == s)
    }
}

/// Vessel selection for a kinded parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KindSel {
    Arteriole,
    Venule,
    All,
}

impl KindSel {
    pub const ALL: [KindSel; 3] = [KindSel::Arteriole, KindSel::Venule, KindSel::All];

    pub fn suffix(self) -> char {
        match self {
            KindSel::Arteriole => 'a',
            KindSel::Venule => 'v',
            KindSel::All => 't',
        }
    }

    pub fn matches(self, kind: VesselKind) -> bool {
        match self {
            KindSel::All => true,
            KindSel::Arteriole => kind == VesselKind::Arteriole,
            KindSel::Venule => kind == VesselKind::Venule,
        }
    }
}

impl From<VesselKind> for KindSel {
    fn from(k: VesselKind) -> Self {
        match k {
            VesselKind::Arteriole => KindSel::Arteriole,
            VesselKind::Venule => KindSel::Venule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureName {
    pub zone: ZoneId,
    pub param: Param,
    pub kind: Option<KindSel>,
}

impl FeatureName {
    pub fn zonal(param: Param, zone: ZoneId) -> Self {
        debug_assert!(!param.is_kinded());
        Self { zone, param, kind: None }
    }

    pub fn kinded(param: Param, zone: ZoneId, kind: KindSel) -> Self {
        debug_assert!(param.is_kinded());
        Self { zone, param, kind: Some(kind) }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.param.symbol(), self.zone.letter())?;
        if let Some(k) = self.kind {
            write!(f, "{}", k.suffix())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature name {0:?}")]
pub struct UnknownFeature(pub String);

impl FromStr for FeatureName {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || UnknownFeature(s.to_string());
        let (sym, rest) = s.split_once('-').ok_or_else(err)?;
        let param = Param::from_symbol(sym).ok_or_else(err)?;
        let mut chars = rest.chars();
        let zone = chars.next().and_then(ZoneId::from_letter).ok_or_else(err)?;
        let kind = match (chars.next(), chars.next()) {
            (None, _) => None,
            (Some(c), None) => Some(KindSel::ALL.into_iter().find(|k| k.suffix() == c).ok_or_else(err)?),
            _ => return Err(err()),
        };
        if kind.is_some() != param.is_kinded() {
            return Err(err());
        }
        Ok(FeatureName { zone, param, kind })
    }
}

impl Serialize for FeatureName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All feature names for the given zones, in registry order.
pub fn registry(zones: &[ZoneId]) -> Vec<FeatureName> {
    let mut zones = zones.to_vec();
    zones.sort();
    zones.dedup();
    let mut out = Vec::new();
    for &zone in &zones {
        for param in Param::ALL {
            if param.is_kinded() {
                out.extend(KindSel::ALL.into_iter().map(|k| FeatureName::kinded(param, zone, k)));
            } else {
                out.push(FeatureName::zonal(param, zone));
            }
        }
    }
    out
}

/// Registry for the default zone pair (B, C).
pub fn default_registry() -> Vec<FeatureName> {
    registry(&[ZoneId::B, ZoneId::C])
}
