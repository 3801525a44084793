//! Configuration serialization.
//!
//! The document form is a single JSON object:
//!
//! ```text
//! {"format":"stackedcp-configuration","version":1,"dim":D,"side":L,
//!  "params":{...}|null,"encoding":"digits"|"base64","states":"..."}
//! ```
//!
//! `states` lists the `L^D` site states in site-index order (coordinate 0
//! varies fastest). With `"digits"` each site is one ASCII character
//! `'0'`, `'1'` or `'2'`. With `"base64"` the states are packed four per byte,
//! site `4k + j` in bits `2j..2j+2` of byte `k`, unused high bits zero, and
//! the bytes are encoded with the standard padded base64 alphabet.
//!
//! One-dimensional configurations also have a bare one-line form, the digit
//! string alone (for example `0012210`).

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::model::{Configuration, Lattice, Params, State};
use crate::{Error, Result};

pub const FORMAT: &str = "stackedcp-configuration";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Digits,
    Base64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationDocument {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub side: usize,
    pub params: Option<Params>,
    pub encoding: Encoding,
    pub states: String,
}

pub fn encode(cfg: &Configuration, params: Option<&Params>, encoding: Encoding) -> ConfigurationDocument {
    let states = match encoding {
        Encoding::Digits => cfg.to_digits(),
        Encoding::Base64 => STANDARD.encode(pack(cfg.states())),
    };
    ConfigurationDocument {
        format: FORMAT.to_string(),
        version: VERSION,
        dim: cfg.dim(),
        side: cfg.side(),
        params: params.copied(),
        encoding,
        states,
    }
}

pub fn decode(doc: &ConfigurationDocument) -> Result<Configuration> {
    if doc.format != FORMAT {
        return Err(Error::Parse(format!("unknown document format {:?}", doc.format)));
    }
    if doc.version != VERSION {
        return Err(Error::Parse(format!("unsupported document version {}", doc.version)));
    }
    let lattice = Lattice::new(doc.dim, doc.side)?;
    let n = lattice.n_sites();
    let states = match doc.encoding {
        Encoding::Digits => {
            let cfg = Configuration::from_digits(&doc.states)?;
            cfg.states().to_vec()
        }
        Encoding::Base64 => {
            let bytes = STANDARD
                .decode(doc.states.as_bytes())
                .map_err(|e| Error::Parse(format!("bad base64 state string: {e}")))?;
            unpack(&bytes, n)?
        }
    };
    if states.len() != n {
        return Err(Error::Parse(format!("{} states for {n} sites", states.len())));
    }
    if let Some(p) = &doc.params {
        p.validate()?;
        if p.dim != doc.dim || p.side != doc.side {
            return Err(Error::Parse("params geometry disagrees with the document".into()));
        }
    }
    Configuration::from_states(lattice, states)
}

pub fn to_json(cfg: &Configuration, params: Option<&Params>, encoding: Encoding) -> String {
    serde_json::to_string(&encode(cfg, params, encoding)).expect("document serializes")
}

pub fn from_json(text: &str) -> Result<(Configuration, Option<Params>)> {
    let doc: ConfigurationDocument =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("configuration document: {e}")))?;
    Ok((decode(&doc)?, doc.params))
}

fn pack(states: &[State]) -> Vec<u8> {
    states
        .chunks(4)
        .map(|c| c.iter().enumerate().fold(0u8, |b, (j, s)| b | ((*s as u8) << (2 * j))))
        .collect()
}

fn unpack(bytes: &[u8], n: usize) -> Result<Vec<State>> {
    if bytes.len() != n.div_ceil(4) {
        return Err(Error::Parse(format!("{} packed bytes for {n} sites", bytes.len())));
    }
    let mut out = Vec::with_capacity(n);
    for (k, &b) in bytes.iter().enumerate() {
        for j in 0..4 {
            let x = 4 * k + j;
            let v = (b >> (2 * j)) & 3;
            if x < n {
                out.push(State::try_from(v).map_err(|_| Error::Parse(format!("invalid state code at site {x}")))?);
            } else if v != 0 {
                return Err(Error::Parse("nonzero padding bits".into()));
            }
        }
    }
    Ok(out)
}
