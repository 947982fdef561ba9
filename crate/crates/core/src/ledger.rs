//! Normalized transaction ledger: parsing, validation and indexing.
//!
//! The on-disk format is one JSON object per line:
//!
//! ```text
//! {"txid":"<64 hex>","height":1,"time":1456790400,
//!  "inputs":[{"addr":"A","value":200000000}],
//!  "outputs":[{"addr":"B","value":150000000}]}
//! ```
//!
//! Coinbase transactions carry `"inputs": []`. Values are satoshi.
//!
//! Addresses are interned into [`AddrId`]s assigned in lexicographic order
//! of the address string, so comparing ids compares addresses. Every later
//! stage relies on that for deterministic output ordering.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interned address. Ordering matches the lexicographic order of the string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddrId(pub u32);

impl AddrId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Position of a transaction in the store's (height, txid) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxIdx(pub u32);

impl TxIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Input,
    Output,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Input => "input",
            Role::Output => "output",
        })
    }
}

/// One input or output of a ledger record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxSlot {
    #[serde(rename = "addr")]
    pub address: String,
    pub value: u64,
}

impl TxSlot {
    pub fn new(address: impl Into<String>, value: u64) -> Self {
        TxSlot {
            address: address.into(),
            value,
        }
    }
}

/// A ledger record in its external (file) form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub txid: String,
    pub height: u64,
    #[serde(rename = "time")]
    pub timestamp: i64,
    pub inputs: Vec<TxSlot>,
    pub outputs: Vec<TxSlot>,
}

impl Transaction {
    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    /// One JSON line, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("transaction serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerFormat {
    Jsonl,
}

/// An input or output after interning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub addr: AddrId,
    pub value: u64,
}

#[derive(Debug, Clone)]
pub struct StoredTx {
    txid: [u8; 32],
    pub height: u64,
    pub timestamp: i64,
    slot_start: u32,
    n_inputs: u32,
    n_outputs: u32,
}

impl StoredTx {
    pub fn txid_hex(&self) -> String {
        hex::encode(self.txid)
    }

    pub fn txid_bytes(&self) -> &[u8; 32] {
        &self.txid
    }

    pub fn is_coinbase(&self) -> bool {
        self.n_inputs == 0
    }
}

/// Immutable, fully indexed ledger.
#[derive(Debug, Clone)]
pub struct LedgerStore {
    txs: Vec<StoredTx>,
    slots: Vec<Slot>,
    addresses: Vec<String>,
    occ_offsets: Vec<u32>,
    occurrences: Vec<(TxIdx, Role)>,
    first_seen: Vec<i64>,
}

struct ParsedTx {
    line: usize,
    txid: [u8; 32],
    height: u64,
    timestamp: i64,
    inputs: Vec<TxSlot>,
    outputs: Vec<TxSlot>,
}

#[derive(Deserialize)]
struct RawSlot {
    addr: String,
    value: serde_json::Number,
}

#[derive(Deserialize)]
struct RawTx {
    txid: String,
    height: serde_json::Number,
    time: i64,
    inputs: Vec<RawSlot>,
    outputs: Vec<RawSlot>,
}

fn parse_txid(text: &str) -> std::result::Result<[u8; 32], String> {
    if text.len() != 64 || !text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(format!("txid `{text}` is not 64 lowercase hex characters"));
    }
    let mut out = [0u8; 32];
    hex::decode_to_slice(text, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn convert_slot(raw: RawSlot, side: &str, pos: usize) -> std::result::Result<TxSlot, String> {
    if raw.addr.is_empty() {
        return Err(format!("{side} {pos}: empty address"));
    }
    let value = match raw.value.as_u64() {
        Some(v) => v,
        None if raw.value.as_i64().is_some() => {
            return Err(format!("{side} {pos}: negative value {}", raw.value));
        }
        None => return Err(format!("{side} {pos}: value {} is not a u64 integer", raw.value)),
    };
    Ok(TxSlot {
        address: raw.addr,
        value,
    })
}

fn check_shape(inputs: &[TxSlot], outputs: &[TxSlot]) -> std::result::Result<(), String> {
    if outputs.is_empty() {
        return Err("transaction has no outputs".into());
    }
    if !inputs.is_empty() {
        let total_in: u128 = inputs.iter().map(|s| s.value as u128).sum();
        let total_out: u128 = outputs.iter().map(|s| s.value as u128).sum();
        if total_out > total_in {
            return Err(format!("outputs ({total_out}) exceed inputs ({total_in})"));
        }
    }
    Ok(())
}

type ParsedLine = (([u8; 32], u64, i64), Vec<TxSlot>, Vec<TxSlot>);

fn parse_line(line: &str) -> std::result::Result<ParsedLine, String> {
    let raw: RawTx = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let txid = parse_txid(&raw.txid)?;
    let height = raw
        .height
        .as_u64()
        .ok_or_else(|| format!("height {} is not a non-negative integer", raw.height))?;
    let inputs = raw
        .inputs
        .into_iter()
        .enumerate()
        .map(|(i, s)| convert_slot(s, "input", i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let outputs = raw
        .outputs
        .into_iter()
        .enumerate()
        .map(|(i, s)| convert_slot(s, "output", i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    check_shape(&inputs, &outputs)?;
    Ok(((txid, height, raw.time), inputs, outputs))
}

/// Reads and indexes a ledger file.
pub fn ingest(path: impl AsRef<Path>, format: LedgerFormat) -> Result<LedgerStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        LedgerFormat::Jsonl => ingest_reader(file, path),
    }
}

/// Parses JSONL from any reader. `origin` only labels error messages.
pub fn ingest_reader<R: Read>(reader: R, origin: impl AsRef<Path>) -> Result<LedgerStore> {
    let origin = origin.as_ref();
    let mut lines = Vec::new();
    for line in BufReader::new(reader).lines() {
        lines.push(line.map_err(|e| Error::io(origin, e))?);
    }
    let parsed: Vec<std::result::Result<Option<ParsedTx>, Error>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 1;
            if line.trim().is_empty() {
                return Ok(None);
            }
            let ((txid, height, timestamp), inputs, outputs) =
                parse_line(line).map_err(|msg| Error::parse(origin, line_no, msg))?;
            Ok(Some(ParsedTx {
                line: line_no,
                txid,
                height,
                timestamp,
                inputs,
                outputs,
            }))
        })
        .collect();
    drop(lines);
    let mut txs = Vec::with_capacity(parsed.len());
    for item in parsed {
        if let Some(tx) = item? {
            txs.push(tx);
        }
    }
    LedgerStore::build(txs)
}

impl LedgerStore {
    /// Builds a store from in-memory records. Line numbers in errors are the
    /// 1-based positions in `records`.
    pub fn from_transactions(records: Vec<Transaction>) -> Result<LedgerStore> {
        let mut txs = Vec::with_capacity(records.len());
        for (i, rec) in records.into_iter().enumerate() {
            let line = i + 1;
            let txid = parse_txid(&rec.txid).map_err(|m| Error::parse("<memory>", line, m))?;
            for (side, slots) in [("input", &rec.inputs), ("output", &rec.outputs)] {
                if let Some(pos) = slots.iter().position(|s| s.address.is_empty()) {
                    return Err(Error::parse("<memory>", line, format!("{side} {pos}: empty address")));
                }
            }
            check_shape(&rec.inputs, &rec.outputs).map_err(|m| Error::parse("<memory>", line, m))?;
            txs.push(ParsedTx {
                line,
                txid,
                height: rec.height,
                timestamp: rec.timestamp,
                inputs: rec.inputs,
                outputs: rec.outputs,
            });
        }
        LedgerStore::build(txs)
    }

    fn build(mut txs: Vec<ParsedTx>) -> Result<LedgerStore> {
        // Duplicate txids, reported with the two earliest lines.
        let mut by_txid: Vec<(&[u8; 32], usize)> = txs.iter().map(|t| (&t.txid, t.line)).collect();
        by_txid.par_sort_unstable();
        if let Some(w) = by_txid.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateTxid {
                txid: hex::encode(w[0].0),
                first_line: w[0].1,
                second_line: w[1].1,
            });
        }
        drop(by_txid);

        txs.par_sort_unstable_by(|a, b| (a.height, &a.txid).cmp(&(b.height, &b.txid)));
        if let Some(w) = txs.windows(2).find(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::Invariant(format!(
                "timestamp decreases from tx {} (height {}, time {}) to tx {} (height {}, time {})",
                hex::encode(w[0].txid),
                w[0].height,
                w[0].timestamp,
                hex::encode(w[1].txid),
                w[1].height,
                w[1].timestamp
            )));
        }

        let mut addresses: Vec<&str> = txs
            .iter()
            .flat_map(|t| t.inputs.iter().chain(&t.outputs).map(|s| s.address.as_str()))
            .collect();
        addresses.par_sort_unstable();
        addresses.dedup();
        if addresses.len() > u32::MAX as usize {
            return Err(Error::Invariant("more than 2^32 distinct addresses".into()));
        }

        let lookup = |a: &str| AddrId(addresses.binary_search(&a).expect("address collected") as u32);
        let interned: Vec<Vec<Slot>> = txs
            .par_iter()
            .map(|t| {
                t.inputs
                    .iter()
                    .chain(&t.outputs)
                    .map(|s| Slot {
                        addr: lookup(&s.address),
                        value: s.value,
                    })
                    .collect()
            })
            .collect();
        let addresses: Vec<String> = addresses.into_iter().map(str::to_owned).collect();

        let total_slots: usize = interned.iter().map(Vec::len).sum();
        if total_slots > u32::MAX as usize || txs.len() > u32::MAX as usize {
            return Err(Error::Invariant("ledger too large for 32-bit indexes".into()));
        }
        let mut slots = Vec::with_capacity(total_slots);
        let mut stored = Vec::with_capacity(txs.len());
        for (t, s) in txs.into_iter().zip(interned) {
            stored.push(StoredTx {
                txid: t.txid,
                height: t.height,
                timestamp: t.timestamp,
                slot_start: slots.len() as u32,
                n_inputs: t.inputs.len() as u32,
                n_outputs: t.outputs.len() as u32,
            });
            slots.extend(s);
        }

        let mut store = LedgerStore {
            txs: stored,
            slots,
            addresses,
            occ_offsets: Vec::new(),
            occurrences: Vec::new(),
            first_seen: Vec::new(),
        };
        store.build_index();
        Ok(store)
    }

    fn build_index(&mut self) {
        let n = self.addresses.len();
        let mut counts = vec![0u32; n + 1];
        let mut seen: Vec<(TxIdx, Role, AddrId)> = Vec::new();
        for (i, _) in self.txs.iter().enumerate() {
            let tx = TxIdx(i as u32);
            let start = seen.len();
            seen.extend(self.inputs(tx).iter().map(|s| (tx, Role::Input, s.addr)));
            seen.extend(self.outputs(tx).iter().map(|s| (tx, Role::Output, s.addr)));
            let local = &mut seen[start..];
            local.sort_unstable_by_key(|&(_, role, addr)| (addr, role));
            let mut w = start;
            for r in start..seen.len() {
                if r == start || (seen[r].1, seen[r].2) != (seen[w - 1].1, seen[w - 1].2) {
                    seen[w] = seen[r];
                    w += 1;
                }
            }
            seen.truncate(w);
        }
        for &(_, _, addr) in &seen {
            counts[addr.index() + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut occurrences = vec![(TxIdx(0), Role::Input); seen.len()];
        // `seen` is in tx order, so each address's list comes out tx-ordered.
        for &(tx, role, addr) in &seen {
            let c = &mut cursor[addr.index()];
            occurrences[*c as usize] = (tx, role);
            *c += 1;
        }
        let first_seen = (0..n)
            .map(|a| {
                occurrences[counts[a] as usize..counts[a + 1] as usize]
                    .iter()
                    .map(|(tx, _)| self.txs[tx.index()].timestamp)
                    .min()
                    .expect("every interned address occurs")
            })
            .collect();
        self.occ_offsets = counts;
        self.occurrences = occurrences;
        self.first_seen = first_seen;
    }

    pub fn tx_count(&self) -> usize {
        self.txs.len()
    }

    pub fn address_count(&self) -> usize {
        self.addresses.len()
    }

    pub fn tx(&self, idx: TxIdx) -> &StoredTx {
        &self.txs[idx.index()]
    }

    pub fn tx_indices(&self) -> impl ExactSizeIterator<Item = TxIdx> + '_ {
        (0..self.txs.len() as u32).map(TxIdx)
    }

    pub fn inputs(&self, idx: TxIdx) -> &[Slot] {
        let t = &self.txs[idx.index()];
        let s = t.slot_start as usize;
        &self.slots[s..s + t.n_inputs as usize]
    }

    pub fn outputs(&self, idx: TxIdx) -> &[Slot] {
        let t = &self.txs[idx.index()];
        let s = (t.slot_start + t.n_inputs) as usize;
        &self.slots[s..s + t.n_outputs as usize]
    }

    /// Fee of a non-coinbase transaction; `None` for coinbase.
    pub fn fee(&self, idx: TxIdx) -> Option<u64> {
        if self.tx(idx).is_coinbase() {
            return None;
        }
        let ins: u64 = self.inputs(idx).iter().map(|s| s.value).sum();
        let outs: u64 = self.outputs(idx).iter().map(|s| s.value).sum();
        Some(ins - outs)
    }

    /// Reconstructs the external record of a stored transaction.
    pub fn transaction(&self, idx: TxIdx) -> Transaction {
        let t = self.tx(idx);
        let conv = |s: &Slot| TxSlot::new(self.address(s.addr), s.value);
        Transaction {
            txid: t.txid_hex(),
            height: t.height,
            timestamp: t.timestamp,
            inputs: self.inputs(idx).iter().map(conv).collect(),
            outputs: self.outputs(idx).iter().map(conv).collect(),
        }
    }

    pub fn find_tx(&self, txid: &str) -> Option<TxIdx> {
        let key = parse_txid(txid).ok()?;
        self.txs.iter().position(|t| t.txid == key).map(|i| TxIdx(i as u32))
    }

    pub fn address(&self, id: AddrId) -> &str {
        &self.addresses[id.index()]
    }

    pub fn addr_id(&self, address: &str) -> Option<AddrId> {
        self.addresses
            .binary_search_by(|a| a.as_str().cmp(address))
            .ok()
            .map(|i| AddrId(i as u32))
    }

    pub fn addr_ids(&self) -> impl ExactSizeIterator<Item = AddrId> {
        (0..self.addresses.len() as u32).map(AddrId)
    }

    /// Distinct (tx, role) incidences of an address, in tx order.
    pub fn occurrences(&self, id: AddrId) -> &[(TxIdx, Role)] {
        let a = id.index();
        &self.occurrences[self.occ_offsets[a] as usize..self.occ_offsets[a + 1] as usize]
    }

    pub fn first_seen_id(&self, id: AddrId) -> i64 {
        self.first_seen[id.index()]
    }

    /// Earliest timestamp of any transaction touching `address`.
    pub fn first_seen(&self, address: &str) -> Option<i64> {
        self.addr_id(address).map(|id| self.first_seen_id(id))
    }

    /// Writes the address index as CSV `address,txid,role`, ordered by
    /// address then ledger order.
    pub fn write_index<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "address,txid,role")?;
        for id in self.addr_ids() {
            let addr = self.address(id);
            for &(tx, role) in self.occurrences(id) {
                writeln!(out, "{},{},{}", addr, self.tx(tx).txid_hex(), role)?;
            }
        }
        out.flush()
    }
}
