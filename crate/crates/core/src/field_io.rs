//! Field files: a text header followed by little-endian f64 node values, and a
//! plain CSV form for interop.
//!
//! ```text
//! PHMAP-FIELD v1
//! dim 3
//! resolution 64
//! h 0.015625
//! target sphere:3
//! ncomp 3
//! nodes 1100000
//! endian little
//! tool pstrata 0.1.0
//! config 3f2a...
//! end
//! <nodes * ncomp f64 values, node-major>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, VectorField};
use crate::map::DiscreteMap;
use crate::target::Target;

pub const MAGIC: &str = "PHMAP-FIELD v1";

/// Tool version and config hash stamped into written files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stamp {
    pub tool: String,
    pub config_hash: String,
}

impl Stamp {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self { tool: format!("pstrata {}", env!("CARGO_PKG_VERSION")), config_hash: config_hash.into() }
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_binary(w: &mut impl Write, map: &DiscreteMap, stamp: &Stamp) -> Result<()> {
    let lat = map.lattice();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dim {}", lat.dim())?;
    writeln!(w, "resolution {}", lat.resolution())?;
    writeln!(w, "h {}", lat.h())?;
    writeln!(w, "target {}", map.target)?;
    writeln!(w, "ncomp {}", map.field.ncomp)?;
    writeln!(w, "nodes {}", lat.len())?;
    writeln!(w, "endian little")?;
    writeln!(w, "tool {}", stamp.tool)?;
    writeln!(w, "config {}", stamp.config_hash)?;
    writeln!(w, "end")?;
    let mut buf = Vec::with_capacity(map.field.values.len() * 8);
    for v in &map.field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Header {
    dim: usize,
    resolution: usize,
    target: Target,
    ncomp: usize,
    nodes: usize,
}

fn parse_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(format_err(format!("bad magic line '{}'", line.trim_end())));
    }
    let (mut dim, mut res, mut h, mut target, mut ncomp, mut nodes) = (None, None, None, None, None, None);
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err("header ended without 'end'"));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (key, val) = l.split_once(' ').unwrap_or((l, ""));
        if key.is_empty() {
            return Err(format_err(format!("malformed header line '{l}'")));
        }
        let num = |v: &str| v.parse::<usize>().map_err(|_| format_err(format!("bad {key} '{v}'")));
        match key {
            "dim" => dim = Some(num(val)?),
            "resolution" => res = Some(num(val)?),
            "h" => h = Some(val.parse::<f64>().map_err(|_| format_err(format!("bad h '{val}'")))?),
            "target" => target = Some(val.parse::<Target>()?),
            "ncomp" => ncomp = Some(num(val)?),
            "nodes" => nodes = Some(num(val)?),
            "endian" if val != "little" => return Err(format_err(format!("unsupported endianness '{val}'"))),
            _ => {}
        }
    }
    let missing = |k: &str| format_err(format!("header lacks '{k}'"));
    let header = Header {
        dim: dim.ok_or_else(|| missing("dim"))?,
        resolution: res.ok_or_else(|| missing("resolution"))?,
        target: target.ok_or_else(|| missing("target"))?,
        ncomp: ncomp.ok_or_else(|| missing("ncomp"))?,
        nodes: nodes.ok_or_else(|| missing("nodes"))?,
    };
    if let Some(h) = h {
        if (h * header.resolution as f64 - 1.0).abs() > 1e-9 {
            return Err(format_err(format!("h {h} disagrees with resolution {}", header.resolution)));
        }
    }
    if header.ncomp != header.target.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: header.target.ambient_dim(), got: header.ncomp });
    }
    Ok(header)
}

fn build(header: &Header, values: Vec<f64>) -> Result<DiscreteMap> {
    let lat = Lattice::shared(header.dim, header.resolution)?;
    if lat.len() != header.nodes {
        return Err(Error::DimensionMismatch { expected: lat.len(), got: header.nodes });
    }
    DiscreteMap::new(VectorField::new(lat, header.ncomp, values)?, header.target)
}

pub fn read_binary(r: &mut impl BufRead) -> Result<DiscreteMap> {
    let header = parse_header(r)?;
    let count = header.nodes * header.ncomp;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|_| format_err("truncated value block"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("trailing bytes after value block"));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    build(&header, values)
}

/// CSV with a `#`-prefixed copy of the binary header, then `index,x1..xm,v1..vN` rows.
pub fn write_csv(w: &mut impl Write, map: &DiscreteMap, stamp: &Stamp) -> Result<()> {
    let lat = map.lattice();
    let m = lat.dim();
    let nc = map.field.ncomp;
    writeln!(w, "# {MAGIC}")?;
    writeln!(w, "# dim {}", m)?;
    writeln!(w, "# resolution {}", lat.resolution())?;
    writeln!(w, "# target {}", map.target)?;
    writeln!(w, "# ncomp {nc}")?;
    writeln!(w, "# nodes {}", lat.len())?;
    writeln!(w, "# tool {}", stamp.tool)?;
    writeln!(w, "# config {}", stamp.config_hash)?;
    writeln!(w, "# end")?;
    let mut cols = vec!["index".to_string()];
    cols.extend((1..=m).map(|i| format!("x{i}")));
    cols.extend((1..=nc).map(|i| format!("v{i}")));
    writeln!(w, "{}", cols.join(","))?;
    for n in 0..lat.len() {
        let mut row = vec![n.to_string()];
        row.extend(lat.point(n).iter().map(|v| v.to_string()));
        row.extend(map.value(n).iter().map(|v| v.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_csv(r: &mut impl BufRead) -> Result<DiscreteMap> {
    let mut header_text = String::new();
    let mut lines = r.lines();
    for line in lines.by_ref() {
        let line = line?;
        let Some(rest) = line.strip_prefix("# ") else {
            return Err(format_err("CSV field lacks its '#' header"));
        };
        header_text.push_str(rest);
        header_text.push('\n');
        if rest == "end" {
            break;
        }
    }
    let header = parse_header(&mut header_text.as_bytes())?;
    let m = header.dim;
    let columns = lines.next().ok_or_else(|| format_err("missing column row"))??;
    if columns.split(',').count() != 1 + m + header.ncomp {
        return Err(format_err(format!("expected {} columns, got '{columns}'", 1 + m + header.ncomp)));
    }
    let mut values = vec![0.0; header.nodes * header.ncomp];
    let mut seen = vec![false; header.nodes];
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + m + header.ncomp {
            return Err(format_err(format!("bad row '{line}'")));
        }
        let n: usize = fields[0].parse().map_err(|_| format_err(format!("bad index in '{line}'")))?;
        if n >= header.nodes || seen[n] {
            return Err(format_err(format!("index {n} out of range or repeated")));
        }
        seen[n] = true;
        for (a, f) in fields[1 + m..].iter().enumerate() {
            values[n * header.ncomp + a] = f.parse().map_err(|_| format_err(format!("bad value '{f}'")))?;
        }
    }
    if let Some(n) = seen.iter().position(|s| !s) {
        return Err(format_err(format!("node {n} missing from CSV")));
    }
    build(&header, values)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes binary unless the path ends in `.csv`.
pub fn save(path: &Path, map: &DiscreteMap, stamp: &Stamp) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    if is_csv(path) {
        write_csv(&mut w, map, stamp)?;
    } else {
        write_binary(&mut w, map, stamp)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DiscreteMap> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    if is_csv(path) {
        read_csv(&mut r)
    } else {
        read_binary(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::AnalyticMap;

    fn sample() -> DiscreteMap {
        DiscreteMap::from_sampler(Lattice::shared(2, 8).unwrap(), &AnalyticMap::Bubble { lambda: 2.0 }).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, &f, &Stamp::new("abc")).unwrap();
        let g = read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(g.field.values, f.field.values);
        assert_eq!(g.target, f.target);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_csv(&mut buf, &f, &Stamp::new("abc")).unwrap();
        let g = read_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(g.field.values, f.field.values);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let f = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, &f, &Stamp::default()).unwrap();
        assert!(matches!(read_binary(&mut &buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_binary(&mut bad.as_slice()), Err(Error::Format(_))));
        let text = String::from_utf8_lossy(&buf[..200]).replace("resolution 8", "resolution 9");
        assert!(read_binary(&mut text.as_bytes()).is_err());
    }
}
