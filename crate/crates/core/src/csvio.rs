//! Plain-text CSV interchange for mappings, densities and solver traces.
//!
//! Grids are described in a leading `#` comment line so a file can be read back
//! without any side channel. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::density::SampledDensity;
use crate::descent::TraceRow;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mapping::SampledMapping;

fn join(xs: impl IntoIterator<Item = impl std::fmt::Display>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn grid_fields(grid: &GridSpec) -> String {
    format!("lower={} step={} counts={}", join(grid.lower()), grid.step(), join(grid.counts()))
}

fn write_rows<W: Write>(mut w: W, grid: &GridSpec, width: usize, values: &[f64]) -> Result<()> {
    let mut line = String::new();
    let mut x = vec![0.0; grid.dim()];
    for i in 0..grid.len() {
        line.clear();
        grid.point(i, &mut x);
        for v in x.iter().chain(&values[i * width..(i + 1) * width]) {
            if !line.is_empty() {
                line.push(',');
            }
            write!(line, "{v}").expect("writing to a String");
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn write_mapping<W: Write>(mut w: W, g: &SampledMapping) -> Result<()> {
    let grid = g.domain();
    writeln!(w, "# dim_in={} dim_out={} {}", grid.dim(), g.dim_out(), grid_fields(grid))?;
    write_rows(w, grid, g.dim_out(), g.values())
}

pub fn write_density<W: Write>(mut w: W, d: &SampledDensity) -> Result<()> {
    let grid = d.grid();
    writeln!(w, "# dim={} {}", grid.dim(), grid_fields(grid))?;
    write_rows(w, grid, 1, d.values())
}

pub fn write_trace<W: Write>(mut w: W, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iter,lambda,D,P,J,grad_norm")?;
    for r in trace {
        writeln!(w, "{},{},{},{},{},{}", r.iter, r.lambda, r.distortion, r.power, r.lagrangian, r.grad_norm)?;
    }
    Ok(())
}

/// Header line plus rows, with every value written by `Display`.
pub fn write_table<W: Write, R: AsRef<[String]>>(mut w: W, header: &[&str], rows: &[R]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.as_ref().join(","))?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::MalformedFile(msg.into())
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad(format!("bad value `{t}` for `{key}`")))).collect()
}

struct Header {
    fields: Vec<(String, String)>,
}

impl Header {
    fn parse(line: &str) -> Result<Self> {
        let body = line.trim().strip_prefix('#').ok_or_else(|| bad("missing `#` header line"))?;
        let fields = body
            .split_whitespace()
            .map(|kv| {
                kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(|| bad(format!("bad header field `{kv}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Header { fields })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| bad(format!("header lacks `{key}`")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.get(key)?.parse().map_err(|_| bad(format!("bad `{key}`")))
    }

    fn grid(&self, dim: usize) -> Result<GridSpec> {
        let lower: Vec<f64> = parse_list(self.get("lower")?, "lower")?;
        let counts: Vec<usize> = parse_list(self.get("counts")?, "counts")?;
        let step: f64 = self.get("step")?.parse().map_err(|_| bad("bad `step`"))?;
        if lower.len() != dim || counts.len() != dim {
            return Err(bad(format!("header lists {} lower / {} counts for dimension {dim}", lower.len(), counts.len())));
        }
        GridSpec::new(lower, step, counts)
    }
}

/// Reads the header and rows, returning the grid and the trailing `width` columns of every row.
fn read_rows<R: BufRead>(r: R, dim_key: &str, width: Option<&str>) -> Result<(GridSpec, usize, Vec<f64>)> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| bad("empty file"))??;
    let header = Header::parse(&first)?;
    let dim = header.usize(dim_key)?;
    let width = match width {
        Some(k) => header.usize(k)?,
        None => 1,
    };
    let grid = header.grid(dim)?;
    let mut values = Vec::with_capacity(grid.len() * width);
    let mut rows = 0;
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<f64> = parse_list(&line, "row")?;
        if cols.len() != dim + width {
            return Err(bad(format!("row {} has {} columns, expected {}", n + 2, cols.len(), dim + width)));
        }
        values.extend_from_slice(&cols[dim..]);
        rows += 1;
    }
    if rows != grid.len() {
        return Err(bad(format!("{rows} rows for a grid of {} points", grid.len())));
    }
    Ok((grid, width, values))
}

pub fn read_mapping<R: BufRead>(r: R) -> Result<SampledMapping> {
    let (grid, width, values) = read_rows(r, "dim_in", Some("dim_out"))?;
    SampledMapping::new(grid, width, values)
}

pub fn read_density<R: BufRead>(r: R) -> Result<SampledDensity> {
    let (grid, _, values) = read_rows(r, "dim", None)?;
    SampledDensity::from_values(grid, values)
}

pub fn save_mapping(path: impl AsRef<Path>, g: &SampledMapping) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_mapping(f, g)
}

pub fn load_mapping(path: impl AsRef<Path>) -> Result<SampledMapping> {
    read_mapping(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_trace(path: impl AsRef<Path>, trace: &[TraceRow]) -> Result<()> {
    write_trace(std::io::BufWriter::new(std::fs::File::create(path)?), trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_round_trip_is_exact() {
        let grid = GridSpec::new(vec![-1.3, 0.1], 0.07, vec![9, 11]).unwrap();
        let g = SampledMapping::from_fn(grid, 2, |x, y| {
            y[0] = (x[0] * 3.1).sin() / 7.0;
            y[1] = x[1].exp() * 1e-9;
        })
        .unwrap();
        let mut buf = Vec::new();
        write_mapping(&mut buf, &g).unwrap();
        let back = read_mapping(&buf[..]).unwrap();
        assert_eq!(back.domain(), g.domain());
        assert_eq!(back.values(), g.values());
    }

    #[test]
    fn density_round_trip() {
        let grid = GridSpec::symmetric(3.0, 0.1, 1).unwrap();
        let d = crate::density::make_gaussian(1.0, &grid).unwrap();
        let mut buf = Vec::new();
        write_density(&mut buf, &d).unwrap();
        let back = read_density(&buf[..]).unwrap();
        // re-reading renormalizes, which may move the last bit
        for (a, b) in back.values().iter().zip(d.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn rejects_truncated_files() {
        let grid = GridSpec::symmetric(1.0, 0.5, 1).unwrap();
        let g = SampledMapping::zeros(grid, 1);
        let mut buf = Vec::new();
        write_mapping(&mut buf, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_mapping(cut.as_bytes()), Err(Error::MalformedFile(_))));
        assert!(read_mapping("x,y\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_header() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,lambda,D,P,J,grad_norm\n");
    }
}
