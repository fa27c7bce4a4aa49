//! CSV formats: point sets `x_1..x_D[,label]`, paths `t,z_1..z_d`, and
//! headerless square matrices.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<DVector<f64>>,
    pub labels: Option<Vec<String>>,
}

fn parse_cell(path: &Path, row: usize, cell: &str) -> CliResult<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::input(path.display(), format!("row {row}: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::input(path.display(), format!("row {row}: non-finite value")));
    }
    Ok(v)
}

fn is_coordinate(name: &str, index: usize) -> bool {
    let want = index + 1;
    ["x_", "z_"]
        .iter()
        .any(|p| name.strip_prefix(p).and_then(|n| n.parse::<usize>().ok()) == Some(want))
}

pub fn read_points(path: &Path) -> CliResult<PointSet> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let has_label = headers.iter().next_back() == Some("label");
    let dim = headers.len() - usize::from(has_label);
    if dim == 0 {
        return Err(CliError::input(path.display(), "no coordinate columns"));
    }
    for (i, h) in headers.iter().take(dim).enumerate() {
        if !is_coordinate(h, i) {
            return Err(CliError::input(
                path.display(),
                format!("unexpected column `{h}`, wanted x_{}", i + 1),
            ));
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let coords = (0..dim)
            .map(|k| parse_cell(path, row + 1, &record[k]))
            .collect::<CliResult<Vec<_>>>()?;
        points.push(DVector::from_vec(coords));
        if has_label {
            labels.push(record[dim].to_string());
        }
    }
    if points.is_empty() {
        return Err(CliError::input(path.display(), "no points"));
    }
    Ok(PointSet {
        points,
        labels: has_label.then_some(labels),
    })
}

pub fn write_points(path: &Path, points: &[DVector<f64>], labels: Option<&[String]>) -> CliResult<()> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            row.push(l[i].clone());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path(path: &Path) -> CliResult<Vec<DVector<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(CliError::input(path.display(), "path files start with a `t` column"));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if !is_coordinate(h, i) {
            return Err(CliError::input(
                path.display(),
                format!("unexpected column `{h}`, wanted z_{}", i + 1),
            ));
        }
    }
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let coords = (1..headers.len())
            .map(|k| parse_cell(path, row + 1, &record[k]))
            .collect::<CliResult<Vec<_>>>()?;
        out.push(DVector::from_vec(coords));
    }
    if out.len() < 2 {
        return Err(CliError::input(path.display(), "a path needs at least two points"));
    }
    Ok(out)
}

pub fn write_path(path: &Path, points: &[DVector<f64>]) -> CliResult<()> {
    let dim = points[0].len();
    let steps = points.len() - 1;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("z_{i}")));
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut row = vec![(i as f64 / steps as f64).to_string()];
        row.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        rows.push(record.iter().map(|c| parse_cell(path, row + 1, c)).collect::<CliResult<_>>()?);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::input(path.display(), "expected a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_column(path: &Path, name: &str, values: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([name])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `1.5,-2,0` into a vector.
pub fn parse_vector(text: &str) -> Result<DVector<f64>, String> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    Ok(DVector::from_vec(values))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_parse_with_signs() {
        assert_eq!(parse_vector("-3,-3,0").unwrap().as_slice(), &[-3.0, -3.0, 0.0]);
        assert!(parse_vector("1,,2").is_err());
        assert!(parse_vector("1,nan").is_err());
    }

    #[test]
    fn path_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("p.csv");
        let pts = vec![
            DVector::from_vec(vec![0.1, 1.0 / 3.0]),
            DVector::from_vec(vec![-2e-17, 7.25]),
            DVector::from_vec(vec![std::f64::consts::PI, -1.0]),
        ];
        write_path(&file, &pts).unwrap();
        assert_eq!(read_path(&file).unwrap(), pts);
    }

    #[test]
    fn labels_are_optional() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("x.csv");
        std::fs::write(&file, "x_1,x_2,label\n1,2,a\n3,4,b\n").unwrap();
        let set = read_points(&file).unwrap();
        assert_eq!(set.labels.unwrap(), vec!["a", "b"]);
        std::fs::write(&file, "x_1,y\n1,2\n").unwrap();
        assert!(read_points(&file).is_err());
    }

    #[test]
    fn matrices_must_be_square() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("m.csv");
        std::fs::write(&file, "0,1\n1,0\n").unwrap();
        assert_eq!(read_matrix(&file).unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        std::fs::write(&file, "0,1,2\n1,0,3\n").unwrap();
        assert!(read_matrix(&file).is_err());
    }
}
