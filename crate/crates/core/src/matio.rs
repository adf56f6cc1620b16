//! Dense matrices as CSV: a `rows,cols` header, one line with the shape, then the rows.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifold::Mat;

pub fn write_matrix<W: Write>(m: &Mat, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["rows", "cols"])?;
    w.write_record([m.nrows().to_string(), m.ncols().to_string()])?;
    for row in m.row_iter() {
        // `{:e}` formatting of f64 round-trips exactly.
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<Mat> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = rd.records();
    let mut next = || -> Result<Option<csv::StringRecord>> { records.next().transpose().map_err(Error::from) };

    let head = next()?.ok_or_else(|| Error::Format("empty input".into()))?;
    if head.len() != 2 || &head[0] != "rows" || &head[1] != "cols" {
        return Err(Error::Format("expected header `rows,cols`".into()));
    }
    let shape = next()?.ok_or_else(|| Error::Format("missing shape line".into()))?;
    let dim = |i: usize| -> Result<usize> {
        shape
            .get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad shape line {:?}", shape)))
    };
    if shape.len() != 2 {
        return Err(Error::Format(format!("bad shape line {:?}", shape)));
    }
    let (rows, cols) = (dim(0)?, dim(1)?);
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        let rec = next()?.ok_or_else(|| Error::Format(format!("expected {rows} rows, found {i}")))?;
        if rec.len() != cols {
            return Err(Error::Format(format!("row {i} has {} entries, expected {cols}", rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            m[(i, j)] = field
                .parse()
                .map_err(|_| Error::Format(format!("row {i}, column {j}: cannot parse {field:?}")))?;
        }
    }
    if next()?.is_some() {
        return Err(Error::Format(format!("more than {rows} rows")));
    }
    Ok(m)
}

pub fn save_matrix(m: &Mat, path: impl AsRef<Path>) -> Result<()> {
    write_matrix(m, std::fs::File::create(path)?)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    read_matrix(std::fs::File::open(path)?)
}
