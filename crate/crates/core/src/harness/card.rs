//! Scheme-tagged smart cards and their file format.
//!
//! ```text
//! TRIAUTH-CARD 1
//! scheme baseline
//! fields 8
//! h <hex>
//! e <hex>
//! ...
//! P_i <bits>:<hex>
//! ```
//!
//! Fields appear in the fixed order of the scheme's item list.

use std::collections::BTreeMap;

use crate::baseline::BaselineSmartCard;
use crate::crypto::{Field128, GroupParams, HashAlg, Suite};
use crate::fuzzy::{BitString, HelperData};
use crate::harness::files::ParseError;
use crate::improved::ImprovedSmartCard;
use crate::scheme::Scheme;

const MAGIC: &str = "TRIAUTH-CARD";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SmartCard {
    Baseline(BaselineSmartCard),
    Improved(ImprovedSmartCard),
}

impl SmartCard {
    pub fn scheme(&self) -> Scheme {
        match self {
            SmartCard::Baseline(_) => Scheme::Baseline,
            SmartCard::Improved(_) => Scheme::Improved,
        }
    }

    pub fn suite(&self) -> &Suite {
        match self {
            SmartCard::Baseline(c) => &c.suite,
            SmartCard::Improved(c) => &c.suite,
        }
    }

    pub fn helper(&self) -> &HelperData {
        match self {
            SmartCard::Baseline(c) => &c.helper,
            SmartCard::Improved(c) => &c.helper,
        }
    }

    pub fn y(&self) -> Field128 {
        match self {
            SmartCard::Baseline(c) => c.y,
            SmartCard::Improved(c) => c.y,
        }
    }

    pub fn storage_layout(&self) -> Vec<(&'static str, usize)> {
        match self {
            SmartCard::Baseline(c) => c.storage_layout(),
            SmartCard::Improved(c) => c.storage_layout(),
        }
    }

    pub fn items(scheme: Scheme) -> &'static [&'static str] {
        match scheme {
            Scheme::Baseline => &BaselineSmartCard::ITEMS,
            Scheme::Improved => &ImprovedSmartCard::ITEMS,
        }
    }

    /// Item name to text value, in file encoding.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let suite = self.suite();
        let helper = self.helper();
        Self::items(self.scheme())
            .iter()
            .map(|&name| {
                let v = match name {
                    "h" => suite.hash.tag().to_hex(),
                    "p" => Field128::from_u128(suite.params.p()).to_hex(),
                    "g" => Field128::from_u128(suite.params.g()).to_hex(),
                    "Y" => self.y().to_hex(),
                    "P_i" => format!("{}:{}", helper.offset.len(), helper.offset.to_hex()),
                    other => self.word(other).expect("every non-special item is a word").to_hex(),
                };
                (name, v)
            })
            .collect()
    }

    fn word(&self, name: &str) -> Option<Field128> {
        match (self, name) {
            (SmartCard::Baseline(c), "e") => Some(c.e),
            (SmartCard::Baseline(c), "L") => Some(c.l),
            (SmartCard::Baseline(c), "V") => Some(c.v),
            (SmartCard::Improved(c), "e") => Some(c.e),
            (SmartCard::Improved(c), "L") => Some(c.l),
            (SmartCard::Improved(c), "V") => Some(c.v),
            (SmartCard::Improved(c), "M") => Some(c.m),
            (SmartCard::Improved(c), "Nmask") => Some(c.nmask),
            _ => None,
        }
    }

    pub fn to_file_string(&self) -> String {
        let fields = self.fields();
        let mut out = format!("{MAGIC} {VERSION}\nscheme {}\nfields {}\n", self.scheme(), fields.len());
        for (name, v) in fields {
            out.push_str(&format!("{name} {v}\n"));
        }
        out
    }

    /// Builds a card from an item map. `trust_params` skips the group checks.
    pub fn from_fields(
        scheme: Scheme,
        fields: &BTreeMap<String, String>,
        trust_params: bool,
    ) -> Result<Self, String> {
        Self::build(scheme, fields, trust_params).map_err(|(_, msg)| msg)
    }

    /// Like [`SmartCard::from_fields`], but errors name the offending item.
    fn build(
        scheme: Scheme,
        fields: &BTreeMap<String, String>,
        trust_params: bool,
    ) -> Result<Self, (&'static str, String)> {
        for k in fields.keys() {
            if !Self::items(scheme).contains(&k.as_str()) {
                return Err(("", format!("field {k} does not belong on a {scheme} card")));
            }
        }
        let get = |name: &'static str| fields.get(name).ok_or_else(|| (name, format!("missing field {name}")));
        let word = |name: &'static str| -> Result<Field128, (&'static str, String)> {
            Field128::from_hex(get(name)?).map_err(|e| (name, format!("{name}: {e}")))
        };
        let hash = HashAlg::from_tag(word("h")?).map_err(|e| ("h", format!("h: {e}")))?;
        let (p, g) = (word("p")?.to_u128(), word("g")?.to_u128());
        let params = if trust_params {
            GroupParams::trusted(p, g)
        } else {
            GroupParams::checked(p, g)
        }
        .map_err(|e| ("p", format!("group: {e}")))?;
        let suite = Suite::new(params, hash);
        let y = word("Y")?;
        params.element(y).map_err(|e| ("Y", format!("Y: {e}")))?;
        let helper = parse_helper(get("P_i")?).map_err(|e| ("P_i", e))?;
        let (e, l, v) = (word("e")?, word("L")?, word("V")?);
        Ok(match scheme {
            Scheme::Baseline => SmartCard::Baseline(BaselineSmartCard { suite, y, e, helper, l, v }),
            Scheme::Improved => SmartCard::Improved(ImprovedSmartCard {
                suite,
                y,
                e,
                helper,
                l,
                v,
                m: word("M")?,
                nmask: word("Nmask")?,
            }),
        })
    }

    pub fn parse(text: &str, trust_params: bool) -> Result<Self, ParseError> {
        let mut lines = LineCursor::new("card", text);
        let (n, off, header) = lines.next_required()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(ParseError::new("card", n, off, "missing TRIAUTH-CARD header"));
        }
        if parts.next() != Some("1") {
            return Err(ParseError::new("card", n, off, "unsupported card version"));
        }
        let (n, off, line) = lines.next_required()?;
        let scheme: Scheme = line
            .strip_prefix("scheme ")
            .ok_or_else(|| ParseError::new("card", n, off, "expected 'scheme <name>'"))?
            .trim()
            .parse()
            .map_err(|e: String| ParseError::new("card", n, off, e))?;
        let (n, off, line) = lines.next_required()?;
        let count: usize = line
            .strip_prefix("fields ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| ParseError::new("card", n, off, "expected 'fields <count>'"))?;
        let expected = Self::items(scheme);
        if count != expected.len() {
            return Err(ParseError::new(
                "card",
                n,
                off,
                format!("{scheme} cards hold {} fields, header says {count}", expected.len()),
            ));
        }
        let mut map = BTreeMap::new();
        let mut at = BTreeMap::new();
        for want in expected {
            let (n, off, line) = lines.next_required()?;
            at.insert(*want, (n, off));
            let (name, value) = line
                .split_once(' ')
                .ok_or_else(|| ParseError::new("card", n, off, "expected '<field> <value>'"))?;
            if name != *want {
                return Err(ParseError::new("card", n, off, format!("expected field {want}, found {name}")));
            }
            map.insert(name.to_string(), value.trim().to_string());
        }
        if let Some((n, off, _)) = lines.next_nonempty() {
            return Err(ParseError::new("card", n, off, "unexpected trailing content"));
        }
        SmartCard::build(scheme, &map, trust_params).map_err(|(field, e)| {
            let (n, off) = at.get(field).copied().unwrap_or((n, off));
            ParseError::new("card", n, off, e)
        })
    }
}

pub(crate) fn parse_helper(s: &str) -> Result<HelperData, String> {
    let (bits, hex) = s.split_once(':').ok_or("P_i must be '<bits>:<hex>'")?;
    let bits: usize = bits.parse().map_err(|_| "P_i bit length is not a number")?;
    let offset = BitString::from_hex(bits, hex).map_err(|e| format!("P_i: {e}"))?;
    Ok(HelperData { offset })
}

/// Line iterator that tracks 1-based line numbers and byte offsets.
pub(crate) struct LineCursor<'a> {
    what: &'static str,
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> LineCursor<'a> {
    pub(crate) fn new(what: &'static str, text: &'a str) -> Self {
        LineCursor { what, text, pos: 0, line: 0 }
    }

    /// Next line that is neither blank nor a `#` comment.
    pub(crate) fn next_nonempty(&mut self) -> Option<(usize, usize, &'a str)> {
        while self.pos < self.text.len() {
            let start = self.pos;
            let rest = &self.text[start..];
            let len = rest.find('\n').map(|i| i + 1).unwrap_or(rest.len());
            self.pos += len;
            self.line += 1;
            let line = rest[..len].trim_end_matches(['\n', '\r']);
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((self.line, start, trimmed));
        }
        None
    }

    pub(crate) fn next_required(&mut self) -> Result<(usize, usize, &'a str), ParseError> {
        let (line, pos) = (self.line + 1, self.pos);
        self.next_nonempty()
            .ok_or_else(|| ParseError::new(self.what, line, pos, "unexpected end of file"))
    }
}
