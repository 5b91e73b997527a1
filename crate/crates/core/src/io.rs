//! CSV ingestion and export. Every table has a header row and, except for
//! weight triplets, an id as its first column.
//!
//! | table | header |
//! |---|---|
//! | response | `id,<name>` |
//! | scalars | `id,<name1>,<name2>,...` |
//! | compositions | `id,<part1>,...,<partd>` (closed on ingestion) |
//! | curves, long | `subject_id,t,value` |
//! | curves, wide | `id,<t1>,<t2>,...` |
//! | locations | `id,x,y` |
//! | weights, dense | `id,<id1>,...,<idn>` |
//! | weights, triplet | `i,j,w` (ids) |

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::functional::{CurveSample, FpcaBasis, RawCurveObservations};
use crate::geometry::{closure, Composition};
use crate::spatial::{row_normalize, WeightMatrix};

/// A numeric table keyed by a leading id column.
#[derive(Debug, Clone, PartialEq)]
pub struct IdTable {
    /// Column names after the id column.
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    /// `ids.len() × columns.len()`.
    pub values: DMatrix<f64>,
}

fn parse_f64(field: &str, what: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!(
            "{what}, line {line}: cannot parse {field:?} as a number"
        ))
    })
}

/// Reads an id-keyed numeric table. Duplicate ids are rejected.
pub fn read_id_table<R: Read>(reader: R, what: &str) -> Result<IdTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{what}: expected an id column and at least one value column"
        )));
    }
    let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seen = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let id = record.get(0).unwrap_or("").to_string();
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(Error::InvalidInput(format!(
                "{what}: id {id:?} appears on lines {prev} and {line}"
            )));
        }
        for field in record.iter().skip(1) {
            data.push(parse_f64(field, what, line)?);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::InvalidInput(format!("{what}: no data rows")));
    }
    let values = DMatrix::from_row_slice(ids.len(), columns.len(), &data);
    Ok(IdTable {
        columns,
        ids,
        values,
    })
}

/// Reorders `table` to follow `ids`, listing every missing id on failure.
pub fn align(table: &IdTable, ids: &[String], what: &str) -> Result<IdTable> {
    let index: HashMap<&str, usize> = table
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let missing: Vec<&str> = ids
        .iter()
        .filter(|id| !index.contains_key(id.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{what} is missing ids: {}",
            missing.join(", ")
        )));
    }
    if table.ids.len() != ids.len() {
        let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        let extra: Vec<&str> = table
            .ids
            .iter()
            .filter(|id| !wanted.contains(id.as_str()))
            .map(String::as_str)
            .collect();
        return Err(Error::InvalidInput(format!(
            "{what} has ids absent from the response: {}",
            extra.join(", ")
        )));
    }
    let order: Vec<usize> = ids.iter().map(|id| index[id.as_str()]).collect();
    Ok(IdTable {
        columns: table.columns.clone(),
        ids: ids.to_vec(),
        values: table.values.select_rows(&order),
    })
}

/// Response file: exactly one value column.
pub fn read_response<R: Read>(reader: R) -> Result<(Vec<String>, Vec<f64>)> {
    let t = read_id_table(reader, "response")?;
    if t.columns.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "response: expected one value column, found {}",
            t.columns.len()
        )));
    }
    Ok((t.ids, t.values.column(0).iter().copied().collect()))
}

/// Compositions, closed row by row.
pub fn read_compositions<R: Read>(reader: R) -> Result<(IdTable, Vec<Composition>)> {
    let t = read_id_table(reader, "compositions")?;
    if t.columns.len() < 2 {
        return Err(Error::InvalidInput(
            "compositions: need at least two parts".into(),
        ));
    }
    let comps = (0..t.ids.len())
        .map(|i| {
            let row: Vec<f64> = t.values.row(i).iter().copied().collect();
            closure(&row)
                .map_err(|e| Error::InvalidComposition(format!("row for id {:?}: {e}", t.ids[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((t, comps))
}

/// Rebuilds compositions after [`align`].
pub fn table_to_compositions(t: &IdTable) -> Result<Vec<Composition>> {
    (0..t.ids.len())
        .map(|i| closure(&t.values.row(i).iter().copied().collect::<Vec<_>>()))
        .collect()
}

/// Wide curves: header row of observation times.
pub fn read_curves_wide<R: Read>(reader: R) -> Result<(Vec<String>, RawCurveObservations)> {
    let t = read_id_table(reader, "curves")?;
    let times = t
        .columns
        .iter()
        .map(|c| parse_f64(c, "curves header", 1))
        .collect::<Result<Vec<_>>>()?;
    Ok((t.ids, RawCurveObservations::new(times, t.values)?))
}

/// Long curves `subject_id,t,value`. Subjects keep first-appearance order.
/// Exact duplicate rows are dropped; the same `(subject, t)` with two
/// different values is an error. All subjects must share one set of times.
pub fn read_curves_long<R: Read>(reader: R) -> Result<(Vec<String>, RawCurveObservations)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != 3 {
        return Err(Error::InvalidInput(
            "long curves: expected columns subject_id,t,value".into(),
        ));
    }
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut obs: Vec<Vec<(f64, f64)>> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let id = record.get(0).unwrap_or("").to_string();
        let t = parse_f64(record.get(1).unwrap_or(""), "long curves", line)?;
        let v = parse_f64(record.get(2).unwrap_or(""), "long curves", line)?;
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id.clone());
            obs.push(Vec::new());
            obs.len() - 1
        });
        obs[slot].push((t, v));
    }
    if ids.is_empty() {
        return Err(Error::InvalidInput("long curves: no data rows".into()));
    }
    let mut times: Option<Vec<f64>> = None;
    let mut rows = Vec::new();
    for (id, mut points) in ids.iter().zip(obs) {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for (t, v) in points {
            match dedup.last() {
                Some(&(pt, pv)) if pt == t => {
                    if pv != v {
                        return Err(Error::InvalidInput(format!(
                            "long curves: subject {id:?} has conflicting values at t = {t}"
                        )));
                    }
                }
                _ => dedup.push((t, v)),
            }
        }
        let ts: Vec<f64> = dedup.iter().map(|p| p.0).collect();
        match &times {
            None => times = Some(ts),
            Some(shared) if *shared != ts => {
                return Err(Error::InvalidInput(format!(
                    "long curves: subject {id:?} is observed at different times than {:?}",
                    ids[0]
                )))
            }
            _ => {}
        }
        rows.extend(dedup.iter().map(|p| p.1));
    }
    let times = times.unwrap_or_default();
    let values = DMatrix::from_row_slice(ids.len(), times.len(), &rows);
    Ok((ids, RawCurveObservations::new(times, values)?))
}

/// Locations `id,x,y`.
pub fn read_locations<R: Read>(reader: R) -> Result<(Vec<String>, Vec<[f64; 2]>)> {
    let t = read_id_table(reader, "locations")?;
    if t.columns.len() != 2 {
        return Err(Error::InvalidInput(
            "locations: expected columns id,x,y".into(),
        ));
    }
    let coords = (0..t.ids.len())
        .map(|i| [t.values[(i, 0)], t.values[(i, 1)]])
        .collect();
    Ok((t.ids, coords))
}

fn to_weights(raw: DMatrix<f64>, normalize: bool) -> Result<WeightMatrix> {
    if normalize {
        row_normalize(raw)
    } else {
        WeightMatrix::new(raw)
    }
}

/// Dense weights. The header ids must match the row ids in order.
/// `normalize` row-standardizes raw weights on the way in.
pub fn read_weights_dense<R: Read>(
    reader: R,
    normalize: bool,
) -> Result<(Vec<String>, WeightMatrix)> {
    let t = read_id_table(reader, "weights")?;
    if t.columns != t.ids {
        return Err(Error::InvalidInput(
            "weights: header ids must match row ids in the same order".into(),
        ));
    }
    Ok((t.ids, to_weights(t.values, normalize)?))
}

/// Triplet weights `i,j,w`. Unit order is the order of first appearance in
/// the `i` column, then in the `j` column.
pub fn read_weights_triplet<R: Read>(
    reader: R,
    normalize: bool,
) -> Result<(Vec<String>, WeightMatrix)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    if rdr.headers()?.len() != 3 {
        return Err(Error::InvalidInput(
            "weights: expected columns i,j,w".into(),
        ));
    }
    let mut entries = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let w = parse_f64(record.get(2).unwrap_or(""), "weights", k + 2)?;
        entries.push((record[0].to_string(), record[1].to_string(), w));
    }
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for id in entries
        .iter()
        .map(|e| &e.0)
        .chain(entries.iter().map(|e| &e.1))
    {
        if !index.contains_key(id) {
            index.insert(id.clone(), ids.len());
            ids.push(id.clone());
        }
    }
    if ids.is_empty() {
        return Err(Error::InvalidInput("weights: no entries".into()));
    }
    let mut raw = DMatrix::zeros(ids.len(), ids.len());
    for (i, j, w) in &entries {
        raw[(index[i], index[j])] += w;
    }
    Ok((ids, to_weights(raw, normalize)?))
}

/// Writes weights as a dense id-labelled matrix.
pub fn write_weights_dense<W: Write>(writer: W, ids: &[String], w: &WeightMatrix) -> Result<()> {
    check_ids(ids, w.n())?;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(ids.iter().cloned());
    wtr.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..w.n()).map(|j| w.get(i, j).to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the nonzero weights as `i,j,w` triplets in row-major order.
pub fn write_weights_triplet<W: Write>(writer: W, ids: &[String], w: &WeightMatrix) -> Result<()> {
    check_ids(ids, w.n())?;
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["i", "j", "w"])?;
    for (i, j, v) in w.triplets() {
        wtr.write_record([ids[i].as_str(), ids[j].as_str(), &v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

fn check_ids(ids: &[String], n: usize) -> Result<()> {
    if ids.len() != n {
        return Err(Error::DimensionMismatch {
            context: "unit ids",
            expected: n,
            found: ids.len(),
        });
    }
    Ok(())
}

/// Default ids `1..=n`.
pub fn default_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// Writes an id-keyed matrix with the given value column names.
pub fn write_id_table<W: Write>(
    writer: W,
    id_header: &str,
    columns: &[String],
    ids: &[String],
    values: &DMatrix<f64>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![id_header.to_string()];
    header.extend(columns.iter().cloned());
    wtr.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(values.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Curves on their grid, wide layout.
pub fn write_curve_sample<W: Write>(writer: W, ids: &[String], sample: &CurveSample) -> Result<()> {
    check_ids(ids, sample.n_curves())?;
    let columns: Vec<String> = sample.grid().iter().map(|t| t.to_string()).collect();
    write_id_table(writer, "id", &columns, ids, sample.values())
}

/// Mean curve and eigenfunctions, one row each, with the eigenvalue in the
/// second column (empty for the mean).
pub fn write_fpca_basis<W: Write>(writer: W, basis: &FpcaBasis) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["component".to_string(), "eigenvalue".to_string()];
    header.extend(basis.grid.iter().map(|t| t.to_string()));
    wtr.write_record(&header)?;
    let mut mean = vec!["mean".to_string(), String::new()];
    mean.extend(basis.mean_curve.iter().map(|v| v.to_string()));
    wtr.write_record(&mean)?;
    for j in 0..basis.n_components() {
        let mut row = vec![(j + 1).to_string(), basis.eigenvalues[j].to_string()];
        row.extend(basis.eigenfunction(j).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
