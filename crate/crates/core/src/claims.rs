//! Claim parsing and evidence mapping: converting structured agent output
//! into claim tuples with optional visual region references.
//!
//! Agents emit one claim per line in a fixed grammar:
//!
//! ```text
//! CLAIM: <text> | CONF: <float 0..1> | EVIDENCE: <text> | REGION: <spec>
//! ```
//!
//! where the region spec is `bbox: x0,y0,x1,y1 @ conf` or
//! `desc: <text> @ conf`. Free text outside claim lines is ignored.

use thiserror::Error;
use tracing::debug;

use crate::model::{ClaimTuple, RegionRef};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClaimsError {
    /// A claim block that parses structurally but carries an invalid field.
    /// Out-of-range confidences are rejected rather than clamped so prompt
    /// regressions surface instead of being masked.
    #[error("malformed claim block {block}: {reason}")]
    MalformedClaim { block: usize, reason: String },
}

/// Confidence assigned to claims whose block omits the CONF field, and to
/// region specs that fall back to a raw-text descriptor.
pub const DEFAULT_CONFIDENCE: f64 = 0.5;

/// Parses every well-formed `CLAIM:` line of `resp_text` into claim tuples
/// in document order.
pub fn parse_claims(resp_text: &str) -> Result<Vec<ClaimTuple>, ClaimsError> {
    let mut claims = Vec::new();
    for line in resp_text.lines() {
        let trimmed = line.trim();
        let Some(rest) = trimmed.strip_prefix("CLAIM:") else {
            continue;
        };
        let block = claims.len();
        let mut claim_text = String::new();
        let mut confidence = DEFAULT_CONFIDENCE;
        let mut evidence = String::new();
        let mut region = None;

        for (idx, field) in rest.split(" | ").enumerate() {
            let field = field.trim();
            if idx == 0 {
                claim_text = field.to_string();
            } else if let Some(value) = field.strip_prefix("CONF:") {
                let value = value.trim();
                let parsed: f64 = value.parse().map_err(|_| ClaimsError::MalformedClaim {
                    block,
                    reason: format!("cannot parse CONF value {value:?}"),
                })?;
                if !(0.0..=1.0).contains(&parsed) {
                    return Err(ClaimsError::MalformedClaim {
                        block,
                        reason: format!("CONF {parsed} outside [0,1]"),
                    });
                }
                confidence = parsed;
            } else if let Some(value) = field.strip_prefix("EVIDENCE:") {
                evidence = value.trim().to_string();
            } else if let Some(value) = field.strip_prefix("REGION:") {
                region = Some(map_evidence(value.trim(), None));
            }
            // unknown fields are ignored
        }

        if claim_text.is_empty() {
            return Err(ClaimsError::MalformedClaim {
                block,
                reason: "empty claim text".to_string(),
            });
        }
        claims.push(ClaimTuple {
            claim: claim_text,
            confidence,
            evidence,
            region,
        });
    }
    Ok(claims)
}

/// Serializes claim tuples back into the claim-line grammar. Parsing the
/// output reproduces the input exactly.
pub fn serialize_claims(claims: &[ClaimTuple]) -> String {
    let mut out = String::new();
    for claim in claims {
        out.push_str("CLAIM: ");
        out.push_str(&claim.claim);
        out.push_str(&format!(" | CONF: {}", claim.confidence));
        out.push_str(" | EVIDENCE: ");
        out.push_str(&claim.evidence);
        if let Some(region) = &claim.region {
            out.push_str(" | REGION: ");
            out.push_str(&serialize_region(region));
        }
        out.push('\n');
    }
    out
}

fn serialize_region(region: &RegionRef) -> String {
    match &region.shape {
        crate::model::RegionShape::Bbox { x0, y0, x1, y1 } => {
            format!("bbox: {x0},{y0},{x1},{y1} @ {}", region.map_confidence)
        }
        crate::model::RegionShape::Descriptor { text } => {
            format!("desc: {text} @ {}", region.map_confidence)
        }
    }
}

/// Maps a textual region spec onto a region reference. Bounding boxes with
/// coordinates outside `[0,1]` are treated as absolute pixels and normalized
/// through `image_dims_hint`. Anything unparseable degrades to a
/// descriptor wrapping the raw spec at the default confidence.
pub fn map_evidence(region_spec: &str, image_dims_hint: Option<(u32, u32)>) -> RegionRef {
    match try_parse_region(region_spec, image_dims_hint) {
        Some(region) => region,
        None => {
            debug!(
                spec = region_spec,
                "unparseable region spec, keeping raw descriptor"
            );
            RegionRef::descriptor(region_spec, DEFAULT_CONFIDENCE)
                .unwrap_or_else(|_| RegionRef::descriptor("(empty)", DEFAULT_CONFIDENCE).unwrap())
        }
    }
}

fn try_parse_region(spec: &str, dims: Option<(u32, u32)>) -> Option<RegionRef> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("bbox:") {
        let (coords_part, conf_part) = rest.rsplit_once('@')?;
        let conf: f64 = conf_part.trim().parse().ok()?;
        let coords: Vec<f64> = coords_part
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .ok()?;
        let [mut x0, mut y0, mut x1, mut y1] = coords.as_slice().try_into().ok()?;
        let normalized = [x0, y0, x1, y1].iter().all(|c| (0.0..=1.0).contains(c));
        if !normalized {
            let (w, h) = dims?;
            if w == 0 || h == 0 {
                return None;
            }
            x0 /= w as f64;
            x1 /= w as f64;
            y0 /= h as f64;
            y1 /= h as f64;
        }
        RegionRef::bbox(x0, y0, x1, y1, conf).ok()
    } else if let Some(rest) = spec.strip_prefix("desc:") {
        let (text, conf_part) = rest.rsplit_once('@')?;
        let conf: f64 = conf_part.trim().parse().ok()?;
        RegionRef::descriptor(text.trim(), conf).ok()
    } else {
        None
    }
}

/// Bridges claim-level confidences to a response-level uncertainty signal:
/// `1 - mean(sigma)`, with the agnostic midpoint for an empty claim list.
pub fn claim_confidence_to_uncertainty(claims: &[ClaimTuple]) -> f64 {
    if claims.is_empty() {
        return 0.5;
    }
    let mean: f64 = claims.iter().map(|c| c.confidence).sum::<f64>() / claims.len() as f64;
    1.0 - mean
}
