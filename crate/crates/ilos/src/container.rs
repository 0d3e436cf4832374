//! The `ILOS1` binary container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "ILOS1" | version u16 | kind u8 | header_len u32 | header (JSON)
//! | payload_len u64 | payload | sha256 of everything before it (32 bytes)
//! ```
//!
//! The JSON header carries metadata and shapes; bulk numbers live in the
//! payload as raw `f64` values and one byte per presence flag.

use std::path::Path;

use ilos_core::dataset::{Dataset, FutureDay, NormStats, SplitAssignment, WindowSample, WindowSpec};
use ilos_core::rits::{Block, Brits, LossWeights, RitsParams};
use ilos_core::transfer::{ColumnMap, MegaDataset};
use ilos_core::{Day, FeatureSchema, PortSeries};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"ILOS1";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Series = 1,
    Dataset = 2,
    Brits = 3,
}

impl Kind {
    fn from_u8(v: u8) -> Option<Kind> {
        [Kind::Series, Kind::Dataset, Kind::Brits].into_iter().find(|k| *k as u8 == v)
    }
}

pub fn encode(kind: Kind, header: &impl Serialize, payload: &[u8]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("container headers serialize");
    let mut out = Vec::with_capacity(header.len() + payload.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode<H: DeserializeOwned>(path: &Path, bytes: &[u8], kind: Kind) -> Result<(H, Vec<u8>)> {
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < MAGIC.len() + 2 + 1 + 4 + 8 + 32 || &bytes[..5] != MAGIC {
        return Err(bad("not an ILOS1 container"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let version = u16::from_le_bytes([body[5], body[6]]);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported container version {version}")));
    }
    match Kind::from_u8(body[7]) {
        Some(k) if k == kind => {}
        _ => return Err(Error::format(path, format!("container holds kind {}, expected {:?}", body[7], kind))),
    }
    let hlen = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
    let hend = 12 + hlen;
    if body.len() < hend + 8 {
        return Err(bad("truncated header"));
    }
    let header = serde_json::from_slice(&body[12..hend]).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    let plen = u64::from_le_bytes(body[hend..hend + 8].try_into().unwrap()) as usize;
    if body.len() != hend + 8 + plen {
        return Err(bad("payload length mismatch"));
    }
    Ok((header, body[hend + 8..].to_vec()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(Error::io(path))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(Error::io(path))
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_flags(out: &mut Vec<u8>, flags: &[bool]) {
    out.extend(flags.iter().map(|&f| f as u8));
}

/// Sequential reader over a payload.
struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::format(self.path, "payload too short"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn flags(&mut self, n: usize) -> Result<Vec<bool>> {
        self.take(n)?.iter().map(|&b| if b <= 1 { Ok(b == 1) } else { Err(Error::format(self.path, "bad flag byte")) }).collect()
    }

    fn finish(&self) -> Result<()> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::format(self.path, "trailing payload bytes"))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesMeta {
    network_id: String,
    port_id: String,
    start_day: Day,
    rows: usize,
    facilities: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct SeriesHeader {
    schema: FeatureSchema,
    series: Vec<SeriesMeta>,
}

pub fn save_series(path: &Path, schema: &FeatureSchema, series: &[PortSeries]) -> Result<()> {
    let mut payload = Vec::new();
    let mut meta = Vec::with_capacity(series.len());
    for s in series {
        put_f64s(&mut payload, s.values());
        put_flags(&mut payload, s.present());
        meta.push(SeriesMeta {
            network_id: s.network_id.clone(),
            port_id: s.port_id.clone(),
            start_day: s.start_day,
            rows: s.len(),
            facilities: s.one_hot().to_vec(),
        });
    }
    write(path, &encode(Kind::Series, &SeriesHeader { schema: schema.clone(), series: meta }, &payload))
}

pub fn load_series(path: &Path) -> Result<(FeatureSchema, Vec<PortSeries>)> {
    let bytes = read(path)?;
    let (h, payload): (SeriesHeader, _) = decode(path, &bytes, Kind::Series)?;
    let n = h.schema.n_numeric();
    let mut cur = Cursor { path, bytes: &payload, at: 0 };
    let mut out = Vec::with_capacity(h.series.len());
    for m in h.series {
        if m.facilities.len() != h.schema.n_facilities() {
            return Err(Error::format(path, "one-hot width disagrees with schema"));
        }
        let values = cur.f64s(m.rows * n)?;
        let present = cur.flags(m.rows * n)?;
        out.push(PortSeries::from_parts(m.network_id, m.port_id, m.start_day, n, values, present, m.facilities));
    }
    cur.finish()?;
    Ok((h.schema, out))
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    network_id: String,
    port_id: String,
    present_day: Day,
    label: bool,
    future: Vec<FutureDay>,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    network_ids: Vec<String>,
    schema: FeatureSchema,
    spec: WindowSpec,
    split: SplitAssignment,
    norm: NormStats,
    #[serde(default)]
    maps: Vec<ColumnMap>,
    samples: Vec<SampleMeta>,
}

/// Writes a windowed dataset. `maps` is empty except for merged datasets.
pub fn save_dataset(path: &Path, d: &Dataset, maps: &[ColumnMap]) -> Result<()> {
    let mut payload = Vec::new();
    let mut samples = Vec::with_capacity(d.samples.len());
    for s in &d.samples {
        put_f64s(&mut payload, &s.values);
        put_flags(&mut payload, &s.observed);
        samples.push(SampleMeta {
            network_id: s.network_id.clone(),
            port_id: s.port_id.clone(),
            present_day: s.present_day,
            label: s.label,
            future: s.future.clone(),
        });
    }
    let header = DatasetHeader {
        network_ids: d.network_ids.clone(),
        schema: d.schema.clone(),
        spec: d.spec,
        split: d.split.clone(),
        norm: d.norm.clone(),
        maps: maps.to_vec(),
        samples,
    };
    write(path, &encode(Kind::Dataset, &header, &payload))
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, Vec<ColumnMap>)> {
    let bytes = read(path)?;
    let (h, payload): (DatasetHeader, _) = decode(path, &bytes, Kind::Dataset)?;
    let cols = h.schema.n_columns();
    let cells = h.spec.past_days * cols;
    if h.split.tags.len() != h.samples.len() {
        return Err(Error::format(path, "split tags disagree with sample count"));
    }
    let mut cur = Cursor { path, bytes: &payload, at: 0 };
    let mut samples = Vec::with_capacity(h.samples.len());
    for m in h.samples {
        let values = cur.f64s(cells)?;
        let observed = cur.flags(cells)?;
        samples.push(WindowSample {
            network_id: m.network_id,
            port_id: m.port_id,
            present_day: m.present_day,
            n_columns: cols,
            values,
            observed,
            label: m.label,
            future: m.future,
        });
    }
    cur.finish()?;
    let d = Dataset { network_ids: h.network_ids, schema: h.schema, spec: h.spec, samples, split: h.split, norm: h.norm };
    Ok((d, h.maps))
}

pub fn save_mega(path: &Path, mega: &MegaDataset) -> Result<()> {
    save_dataset(path, &mega.dataset, &mega.maps)
}

pub fn load_mega(path: &Path) -> Result<MegaDataset> {
    let (dataset, maps) = load_dataset(path)?;
    if maps.is_empty() {
        return Err(Error::format(path, "dataset carries no column maps; not a merged dataset"));
    }
    Ok(MegaDataset { dataset, maps })
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    direction: String,
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct BritsHeader {
    n_features: usize,
    hidden: usize,
    weights: LossWeights,
    blocks: Vec<BlockHeader>,
}

const DIRECTIONS: [&str; 2] = ["forward", "backward"];

pub fn encode_brits(model: &Brits) -> Vec<u8> {
    let (f, h) = (model.n_features(), model.hidden());
    let mut payload = Vec::new();
    let mut blocks = Vec::new();
    for (dir, p) in DIRECTIONS.iter().zip(model.directions()) {
        for b in Block::ALL {
            let (rows, cols) = b.shape(f, h);
            blocks.push(BlockHeader { direction: dir.to_string(), name: b.name().into(), rows, cols });
            put_f64s(&mut payload, p.block(b));
        }
    }
    encode(Kind::Brits, &BritsHeader { n_features: f, hidden: h, weights: model.weights, blocks }, &payload)
}

pub fn save_brits(path: &Path, model: &Brits) -> Result<()> {
    write(path, &encode_brits(model))
}

pub fn load_brits(path: &Path) -> Result<Brits> {
    let bytes = read(path)?;
    let (h, payload): (BritsHeader, _) = decode(path, &bytes, Kind::Brits)?;
    let mut dirs = [RitsParams::zeros(h.n_features, h.hidden), RitsParams::zeros(h.n_features, h.hidden)];
    let mut seen = vec![false; 2 * Block::ALL.len()];
    let mut cur = Cursor { path, bytes: &payload, at: 0 };
    for bh in &h.blocks {
        let d = DIRECTIONS.iter().position(|&d| d == bh.direction).ok_or_else(|| Error::format(path, format!("unknown direction `{}`", bh.direction)))?;
        let b = Block::from_name(&bh.name).ok_or_else(|| Error::format(path, format!("unknown block `{}`", bh.name)))?;
        if b.shape(h.n_features, h.hidden) != (bh.rows, bh.cols) {
            return Err(Error::format(path, format!("block `{}` has shape {}x{}", bh.name, bh.rows, bh.cols)));
        }
        let values = cur.f64s(bh.rows * bh.cols)?;
        dirs[d].block_mut(b).copy_from_slice(&values);
        seen[d * Block::ALL.len() + Block::ALL.iter().position(|&x| x == b).unwrap()] = true;
    }
    cur.finish()?;
    if seen.iter().any(|s| !s) {
        return Err(Error::format(path, "model file is missing parameter blocks"));
    }
    let [forward, backward] = dirs;
    Ok(Brits { forward, backward, weights: h.weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ilos_core::dataset::build_dataset;
    use ilos_core::ingest::{build_schema, merge_to_port_level};
    use ilos_core::synth::{generate, GenConfig, PROTOCOL_INDICATOR};

    fn small() -> (FeatureSchema, Vec<PortSeries>) {
        let g = generate(&GenConfig { ports_per_network: vec![6], days: 40, ..Default::default() }).unwrap();
        let recs = &g.networks[0].records;
        let schema = build_schema(recs, &[PROTOCOL_INDICATOR.to_string()]).unwrap();
        let series = merge_to_port_level(recs, &schema).unwrap();
        (schema, series)
    }

    #[test]
    fn series_and_datasets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (schema, series) = small();
        let p = dir.path().join("s.ilos");
        save_series(&p, &schema, &series).unwrap();
        assert_eq!(load_series(&p).unwrap(), (schema.clone(), series.clone()));

        let (d, _) = build_dataset(&series, &schema, WindowSpec::default()).unwrap();
        let p = dir.path().join("d.ilos");
        save_dataset(&p, &d, &[]).unwrap();
        let (back, maps) = load_dataset(&p).unwrap();
        assert_eq!(back, d);
        assert!(maps.is_empty());
        assert!(load_mega(&p).is_err());
        assert!(load_series(&p).unwrap_err().to_string().contains("expected Series"));
    }

    #[test]
    fn brits_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ilos");
        let m = Brits::new(5, 3, 8);
        save_brits(&p, &m).unwrap();
        assert_eq!(load_brits(&p).unwrap(), m);
        assert_eq!(encode_brits(&m), std::fs::read(&p).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ilos");
        let mut bytes = encode_brits(&Brits::new(2, 2, 1));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        std::fs::write(&p, &bytes).unwrap();
        assert!(load_brits(&p).unwrap_err().to_string().contains("checksum"));
        std::fs::write(&p, b"hello").unwrap();
        assert!(load_brits(&p).is_err());
    }
}
