//! Binary artifact files.
//!
//! Every file shares one little-endian envelope:
//!
//! ```text
//! magic[8] | a: u64 | b: u64 | c: u64 | dim: u64 | dx: f64 | body | len: u64 | JSON[len]
//! ```
//!
//! The meaning of `a`, `b`, `c` and of the body depends on the magic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::basis::ReducedBasis;
use crate::error::{Error, Result};
use crate::fom::SnapshotSet;
use crate::numerics::DenseMatrix;
use crate::rom::{HyperReduction, RomOperators};

pub const SNAPSHOT_MAGIC: [u8; 8] = *b"ESNAPV1\0";
pub const BASIS_MAGIC: [u8; 8] = *b"EBASISV1";
pub const RULE_MAGIC: [u8; 8] = *b"ECUBAV1\0";
pub const BUNDLE_MAGIC: [u8; 8] = *b"EROMBV1\0";

/// SHA-256 of the canonical (key-sorted, compact) JSON serialization.
pub fn fingerprint(v: &Value) -> String {
    let text = serde_json::to_string(v).expect("JSON values always serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub magic: [u8; 8],
    pub header: [u64; 4],
    pub dx: f64,
    pub body: Vec<u8>,
    pub json: Value,
}

fn kind_name(magic: &[u8; 8]) -> &'static str {
    match magic {
        m if *m == SNAPSHOT_MAGIC => "snapshot",
        m if *m == BASIS_MAGIC => "basis",
        m if *m == RULE_MAGIC => "cubature rule",
        m if *m == BUNDLE_MAGIC => "ROM bundle",
        _ => "artifact",
    }
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.json).expect("JSON values always serialize");
        let mut out = Vec::with_capacity(56 + self.body.len() + json.len());
        out.extend_from_slice(&self.magic);
        for h in self.header {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&self.dx.to_le_bytes());
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out
    }

    /// Parses an envelope whose body length is `body_len(header)`.
    pub fn from_bytes(
        bytes: &[u8],
        magic: [u8; 8],
        body_len: impl FnOnce(&[u64; 4], &[u8]) -> Result<usize>,
    ) -> Result<Self> {
        let kind = kind_name(&magic);
        let fail = |d: String| Error::Format { kind, detail: d };
        if bytes.len() < 48 {
            return Err(fail(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if bytes[..8] != magic {
            return Err(fail(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..8]))));
        }
        let mut header = [0u64; 4];
        for (i, h) in header.iter_mut().enumerate() {
            *h = u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        }
        let dx = f64::from_le_bytes(bytes[40..48].try_into().unwrap());
        let rest = &bytes[48..];
        let n = body_len(&header, rest)?;
        if rest.len() < n + 8 {
            return Err(fail("truncated body".into()));
        }
        let body = rest[..n].to_vec();
        let jl = u64::from_le_bytes(rest[n..n + 8].try_into().unwrap()) as usize;
        let tail = &rest[n + 8..];
        if tail.len() != jl {
            return Err(fail(format!(
                "metadata length {jl} does not match the {} trailing bytes",
                tail.len()
            )));
        }
        let json = serde_json::from_slice(tail).map_err(|e| fail(format!("metadata: {e}")))?;
        Ok(Self {
            magic,
            header,
            dx,
            body,
            json,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(
        path: &Path,
        magic: [u8; 8],
        body_len: impl FnOnce(&[u64; 4], &[u8]) -> Result<usize>,
    ) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, magic, body_len)
    }
}

pub(crate) fn push_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    buf.reserve(8 * xs.len());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Sequential little-endian decoder over an envelope body.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    kind: &'static str,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], kind: &'static str) -> Self {
        Self { bytes, pos: 0, kind }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                kind: self.kind,
                detail: "truncated body".into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let s = self.take(8 * n)?;
        Ok(s.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }
}

fn matrix_body_len(rows: u64, cols: u64) -> Result<usize> {
    rows.checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .map(|n| n as usize)
        .ok_or_else(|| Error::Format {
            kind: "artifact",
            detail: "header dimensions overflow".into(),
        })
}

pub fn snapshots_to_envelope(s: &SnapshotSet) -> Envelope {
    let mut body = Vec::new();
    push_f64s(&mut body, s.data.data());
    Envelope {
        magic: SNAPSHOT_MAGIC,
        header: [
            s.n_components as u64,
            s.points_per_component() as u64,
            s.n_snapshots() as u64,
            s.dim as u64,
        ],
        dx: s.dx,
        body,
        json: serde_json::json!({
            "config": s.metadata,
            "times": s.times,
            "steps": s.steps,
        }),
    }
}

pub fn snapshots_from_envelope(env: &Envelope) -> Result<SnapshotSet> {
    let [nc, np, ns, dim] = env.header;
    let rows = (nc * np) as usize;
    let data = Cursor::new(&env.body, "snapshot").f64s(rows * ns as usize)?;
    let fail = |d: &str| Error::Format {
        kind: "snapshot",
        detail: d.into(),
    };
    let times: Vec<f64> = serde_json::from_value(env.json["times"].clone())
        .map_err(|_| fail("metadata lacks a times array"))?;
    if times.len() != ns as usize {
        return Err(fail("times length differs from snapshot count"));
    }
    Ok(SnapshotSet {
        data: DenseMatrix::from_col_major(rows, ns as usize, data)?,
        times,
        n_components: nc as usize,
        dim: dim as usize,
        dx: env.dx,
        steps: env.json["steps"].as_u64().unwrap_or(0) as usize,
        metadata: env.json["config"].clone(),
    })
}

pub fn write_snapshots(path: &Path, s: &SnapshotSet) -> Result<()> {
    snapshots_to_envelope(s).write(path)
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    let env = Envelope::read(path, SNAPSHOT_MAGIC, |h, _| matrix_body_len(h[0] * h[1], h[2]))?;
    snapshots_from_envelope(&env)
}

pub fn write_basis(path: &Path, b: &ReducedBasis, dx: f64, dim: usize) -> Result<()> {
    let mut body = Vec::new();
    push_f64s(&mut body, b.v.data());
    push_f64s(&mut body, &b.singular_values);
    Envelope {
        magic: BASIS_MAGIC,
        header: [
            b.n_points() as u64,
            b.n_modes() as u64,
            b.singular_values.len() as u64,
            dim as u64,
        ],
        dx,
        body,
        json: serde_json::json!({
            "tol": b.tol,
            "enriched": b.enriched,
            "constant_augmented": b.constant_augmented,
            "source": b.source,
            "fingerprint": b.fingerprint(),
        }),
    }
    .write(path)
}

/// Reads a basis file and checks its stored fingerprint.
pub fn read_basis(path: &Path) -> Result<ReducedBasis> {
    let env = Envelope::read(path, BASIS_MAGIC, |h, _| {
        let m = matrix_body_len(h[0], h[1])?;
        Ok(m + matrix_body_len(h[2], 1)?)
    })?;
    let [k, n, ns, _] = env.header;
    let mut cur = Cursor::new(&env.body, "basis");
    let v = DenseMatrix::from_col_major(k as usize, n as usize, cur.f64s((k * n) as usize)?)?;
    let singular_values = cur.f64s(ns as usize)?;
    let fail = |d: &str| Error::Format {
        kind: "basis",
        detail: d.into(),
    };
    let j = &env.json;
    let b = ReducedBasis {
        v,
        singular_values,
        tol: j["tol"].as_f64().ok_or_else(|| fail("missing tol"))?,
        enriched: j["enriched"].as_bool().ok_or_else(|| fail("missing enriched flag"))?,
        constant_augmented: j["constant_augmented"]
            .as_bool()
            .ok_or_else(|| fail("missing constant_augmented flag"))?,
        source: j["source"].as_str().ok_or_else(|| fail("missing source"))?.to_string(),
    };
    let stored = j["fingerprint"].as_str().unwrap_or_default();
    if stored != b.fingerprint() {
        return Err(Error::Fingerprint {
            expected: stored.to_string(),
            found: b.fingerprint(),
        });
    }
    Ok(b)
}

/// Rule files carry everything in the JSON trailer; `config` is an echo
/// of the run configuration.
pub fn write_rules(path: &Path, hr: &HyperReduction, config: &Value) -> Result<()> {
    Envelope {
        magic: RULE_MAGIC,
        header: [
            hr.volume.len() as u64,
            hr.stabilized.len() as u64,
            hr.viscous.as_ref().map_or(0, |r| r.len()) as u64,
            hr.boundary.as_ref().map_or(0, |r| r.len()) as u64,
        ],
        dx: 0.0,
        body: Vec::new(),
        json: serde_json::json!({ "rules": hr, "config": config }),
    }
    .write(path)
}

pub fn read_rules(path: &Path) -> Result<HyperReduction> {
    let env = Envelope::read(path, RULE_MAGIC, |_, _| Ok(0))?;
    let hr: HyperReduction = serde_json::from_value(env.json["rules"].clone()).map_err(|e| Error::Format {
        kind: "cubature rule",
        detail: e.to_string(),
    })?;
    if hr.volume.len() as u64 != env.header[0] || hr.stabilized.len() as u64 != env.header[1] {
        return Err(Error::Format {
            kind: "cubature rule",
            detail: "header point counts disagree with the rules".into(),
        });
    }
    Ok(hr)
}

/// Named dense matrices of a ROM bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub matrices: Vec<(String, DenseMatrix)>,
    pub json: Value,
}

impl Bundle {
    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.matrices.iter().find(|m| m.0 == name).map(|m| &m.1)
    }
}

pub fn write_bundle(path: &Path, ops: &RomOperators, meta: Value) -> Result<()> {
    let mut named: Vec<(String, &DenseMatrix)> = vec![
        ("v_vol".into(), &ops.v_vol),
        ("v_bnd".into(), &ops.v_bnd),
        ("mass".into(), &ops.mass),
        ("projection".into(), &ops.projection),
        ("vkv".into(), &ops.vkv),
    ];
    for a in 0..ops.dim {
        named.push((format!("v_t{a}"), &ops.v_t[a]));
        named.push((format!("p_t{a}"), &ops.p_t[a]));
        named.push((format!("q_t{a}"), &ops.q_t[a]));
        named.push((format!("q_h{a}"), &ops.q_h[a]));
    }
    let mut body = Vec::new();
    let mut layout = Vec::new();
    for (name, m) in &named {
        push_f64s(&mut body, m.data());
        layout.push(serde_json::json!({"name": name, "rows": m.rows(), "cols": m.cols()}));
    }
    Envelope {
        magic: BUNDLE_MAGIC,
        header: [
            ops.n_modes() as u64,
            ops.n_volume() as u64,
            (body.len() / 8) as u64,
            ops.dim as u64,
        ],
        dx: ops.dx,
        body,
        json: serde_json::json!({
            "matrices": layout,
            "vol_indices": ops.vol_indices,
            "vol_weights": ops.vol_weights,
            "meta": meta,
        }),
    }
    .write(path)
}

pub fn read_bundle(path: &Path) -> Result<Bundle> {
    let env = Envelope::read(path, BUNDLE_MAGIC, |h, _| matrix_body_len(h[2], 1))?;
    let fail = |d: String| Error::Format {
        kind: "ROM bundle",
        detail: d,
    };
    let layout = env.json["matrices"].as_array().ok_or_else(|| fail("missing matrix layout".into()))?;
    let mut cur = Cursor::new(&env.body, "ROM bundle");
    let mut matrices = Vec::new();
    for m in layout {
        let (Some(name), Some(r), Some(c)) = (m["name"].as_str(), m["rows"].as_u64(), m["cols"].as_u64()) else {
            return Err(fail(format!("bad layout entry {m}")));
        };
        let data = cur.f64s(matrix_body_len(r, c)? / 8)?;
        matrices.push((name.to_string(), DenseMatrix::from_col_major(r as usize, c as usize, data)?));
    }
    if cur.position() != env.body.len() {
        return Err(fail("trailing bytes after the last matrix".into()));
    }
    Ok(Bundle { matrices, json: env.json })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SnapshotSet {
        SnapshotSet {
            data: DenseMatrix::from_fn(6, 3, |i, j| (i as f64 + 0.1) * (j as f64 - 1.3).exp()),
            times: vec![0.0, 0.1, 0.25],
            n_components: 3,
            dim: 1,
            dx: 0.1,
            steps: 7,
            metadata: serde_json::json!({"cells": 2, "cfl": 0.75}),
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.esnap");
        let s = sample();
        write_snapshots(&p, &s).unwrap();
        let r = read_snapshots(&p).unwrap();
        assert_eq!(r, s);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"ESNAPV1\0");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 3);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let s = sample();
        let mut bytes = snapshots_to_envelope(&s).to_bytes();
        let short = &bytes[..bytes.len() - 3];
        assert!(Envelope::from_bytes(short, SNAPSHOT_MAGIC, |h, _| matrix_body_len(h[0] * h[1], h[2])).is_err());
        bytes[0] = b'X';
        let err = Envelope::from_bytes(&bytes, SNAPSHOT_MAGIC, |h, _| matrix_body_len(h[0] * h[1], h[2]))
            .unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn basis_rules_and_bundle_round_trip() {
        use crate::presets::preset;
        let mut cfg = preset("euler1d-wall").unwrap().scaled(0.02).unwrap();
        cfg.fom.final_time = 0.05;
        cfg.rom.final_time = 0.05;
        cfg.basis.modes = 4;
        cfg.basis.stride = 1;
        let snaps = crate::pipeline::run_fom(&cfg).unwrap();
        let basis = crate::pipeline::run_pod(&cfg, &snaps).unwrap();
        let hr = crate::pipeline::run_hyperreduce(&cfg, &basis).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bp = dir.path().join("b.ebasis");
        write_basis(&bp, &basis, snaps.dx, 1).unwrap();
        assert_eq!(read_basis(&bp).unwrap(), basis);
        let rp = dir.path().join("r.ecuba");
        write_rules(&rp, &hr, &serde_json::to_value(&cfg).unwrap()).unwrap();
        let back = read_rules(&rp).unwrap();
        assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&hr).unwrap());
        let ops = RomOperators::build(&basis, &cfg.fom.operators().unwrap(), &hr).unwrap();
        let op = dir.path().join("o.eromb");
        write_bundle(&op, &ops, serde_json::json!({"basis": basis.fingerprint()})).unwrap();
        let bundle = read_bundle(&op).unwrap();
        assert_eq!(bundle.get("q_h0").unwrap(), &ops.q_h[0]);
        assert_eq!(bundle.get("mass").unwrap(), &ops.mass);
        assert!(bundle.get("q_h1").is_none());
        assert_eq!(bundle.json["meta"]["basis"], basis.fingerprint());

        // A flipped byte in V breaks the stored fingerprint.
        let mut bytes = std::fs::read(&bp).unwrap();
        bytes[60] ^= 1;
        std::fs::write(&bp, &bytes).unwrap();
        assert!(matches!(read_basis(&bp), Err(Error::Fingerprint { .. })));
        assert!(matches!(read_rules(&bp), Err(Error::Format { .. })));
    }

    #[test]
    fn fingerprint_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": [1.5, 2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": [1.5, 2], "b": 1}"#).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
        let c: Value = serde_json::from_str(r#"{"a": [1.5, 2], "b": 2}"#).unwrap();
        assert_ne!(fingerprint(&a), fingerprint(&c));
    }
}
