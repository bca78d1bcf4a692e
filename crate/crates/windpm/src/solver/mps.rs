//! MPS export of the explicit program, plus a reader used to self-check
//! that a written file reproduces the model coefficients exactly.

use std::collections::BTreeMap;
use std::io::Write;

use crate::model::IlpModel;
use crate::{Error, Result};

/// Writes the model as an MPS file: minimization objective `COST`,
/// equality/`<=` rows named as in [`IlpModel::for_each_row`], one entry per
/// line, and `BV` bounds marking every variable binary. Numbers use the
/// shortest round-tripping decimal form, so re-parsing recovers the exact
/// `f64` coefficients.
pub fn export_mps<W: Write>(model: &IlpModel, out: &mut W, name: &str) -> Result<()> {
    if model.num_cols() == 0 {
        return Err(Error::Config("refusing to export a model without variables".into()));
    }
    let mut rows: Vec<(String, i8, f64)> = Vec::new();
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_cols()];
    model.for_each_row(|row_name, entries, rel, rhs| {
        let row_idx = rows.len();
        rows.push((row_name.to_string(), rel, rhs));
        for &(col, coeff) in entries {
            by_col[col].push((row_idx, coeff));
        }
    });
    if rows.is_empty() {
        return Err(Error::Config("refusing to export a model without constraints".into()));
    }
    let io = |e: std::io::Error| Error::Config(format!("mps write failed: {e}"));
    writeln!(out, "NAME          {name}").map_err(io)?;
    writeln!(out, "OBJSENSE\n    MIN").map_err(io)?;
    writeln!(out, "ROWS").map_err(io)?;
    writeln!(out, " N  COST").map_err(io)?;
    for (row_name, rel, _) in &rows {
        let tag = if *rel == 0 { 'E' } else { 'L' };
        writeln!(out, " {tag}  {row_name}").map_err(io)?;
    }
    writeln!(out, "COLUMNS").map_err(io)?;
    writeln!(out, "    MARKER    'MARKER'    'INTORG'").map_err(io)?;
    for col in 0..model.num_cols() {
        let col_name = model.col_name(col);
        let obj = model.objective_coeff(col);
        if obj != 0.0 {
            writeln!(out, "    {col_name}  COST  {obj}").map_err(io)?;
        }
        for &(row_idx, coeff) in &by_col[col] {
            writeln!(out, "    {col_name}  {}  {coeff}", rows[row_idx].0).map_err(io)?;
        }
    }
    writeln!(out, "    MARKER    'MARKER'    'INTEND'").map_err(io)?;
    writeln!(out, "RHS").map_err(io)?;
    for (row_name, _, rhs) in &rows {
        if *rhs != 0.0 {
            writeln!(out, "    RHS  {row_name}  {rhs}").map_err(io)?;
        }
    }
    writeln!(out, "BOUNDS").map_err(io)?;
    for col in 0..model.num_cols() {
        writeln!(out, " BV BND  {}", model.col_name(col)).map_err(io)?;
    }
    writeln!(out, "ENDATA").map_err(io)?;
    Ok(())
}

/// Parsed MPS contents, normalized for comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMps {
    pub name: String,
    pub minimize: bool,
    pub objective_row: String,
    /// Row name to relation (`0` equality, `-1` for `<=`).
    pub rows: BTreeMap<String, i8>,
    /// `(column, row)` to coefficient; objective entries use the
    /// objective row name.
    pub entries: BTreeMap<(String, String), f64>,
    pub rhs: BTreeMap<String, f64>,
    /// Columns marked integer/binary.
    pub binary: BTreeMap<String, bool>,
    pub column_order: Vec<String>,
}

/// Reads the subset of MPS written by [`export_mps`] (also accepting plain
/// two-entry column lines produced by other writers).
pub fn parse_mps(text: &str) -> Result<ParsedMps> {
    let mut section = String::new();
    let mut parsed = ParsedMps {
        name: String::new(),
        minimize: true,
        objective_row: String::new(),
        rows: BTreeMap::new(),
        entries: BTreeMap::new(),
        rhs: BTreeMap::new(),
        binary: BTreeMap::new(),
        column_order: Vec::new(),
    };
    let mut integer_mode = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let is_header = !raw.starts_with(' ') && !raw.starts_with('\t');
        if is_header {
            section = fields[0].to_uppercase();
            if section == "NAME" && fields.len() > 1 {
                parsed.name = fields[1].to_string();
            }
            if section == "ENDATA" {
                break;
            }
            continue;
        }
        let bad = |what: &str| Error::Config(format!("mps line {}: {what}", lineno + 1));
        match section.as_str() {
            "OBJSENSE" => {
                parsed.minimize = fields[0].to_uppercase().starts_with("MIN");
            }
            "ROWS" => {
                if fields.len() != 2 {
                    return Err(bad("expected relation and row name"));
                }
                match fields[0].to_uppercase().as_str() {
                    "N" => parsed.objective_row = fields[1].to_string(),
                    "E" => {
                        parsed.rows.insert(fields[1].to_string(), 0);
                    }
                    "L" => {
                        parsed.rows.insert(fields[1].to_string(), -1);
                    }
                    "G" => {
                        parsed.rows.insert(fields[1].to_string(), 1);
                    }
                    other => return Err(bad(&format!("unsupported row type {other}"))),
                }
            }
            "COLUMNS" => {
                if fields.len() >= 3 && fields[1].contains("'MARKER'") {
                    integer_mode = fields[2].contains("INTORG");
                    continue;
                }
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(bad("expected column, row, value entries"));
                }
                let col = fields[0].to_string();
                if !parsed.binary.contains_key(&col) {
                    parsed.binary.insert(col.clone(), integer_mode);
                    parsed.column_order.push(col.clone());
                }
                for pair in fields[1..].chunks(2) {
                    let value: f64 =
                        pair[1].parse().map_err(|_| bad(&format!("bad number {:?}", pair[1])))?;
                    parsed.entries.insert((col.clone(), pair[0].to_string()), value);
                }
            }
            "RHS" => {
                if fields.len() < 3 {
                    return Err(bad("expected rhs name, row, value"));
                }
                for pair in fields[1..].chunks(2) {
                    let value: f64 =
                        pair[1].parse().map_err(|_| bad(&format!("bad number {:?}", pair[1])))?;
                    parsed.rhs.insert(pair[0].to_string(), value);
                }
            }
            "RANGES" => return Err(bad("RANGES not supported")),
            "BOUNDS" => {
                if fields.len() < 3 {
                    return Err(bad("expected bound type, set, column"));
                }
                match fields[0].to_uppercase().as_str() {
                    "BV" => {
                        parsed.binary.insert(fields[2].to_string(), true);
                    }
                    "UP" | "LO" | "FX" | "MI" | "PL" => {}
                    other => return Err(bad(&format!("unsupported bound {other}"))),
                }
            }
            other => return Err(bad(&format!("entries outside a known section ({other})"))),
        }
    }
    if parsed.objective_row.is_empty() {
        return Err(Error::Config("mps file lacks an objective row".into()));
    }
    Ok(parsed)
}

/// Checks that a parsed file reproduces the model's rows, coefficients,
/// right-hand sides, and integrality exactly.
pub fn verify_roundtrip(model: &IlpModel, parsed: &ParsedMps) -> Result<()> {
    if !parsed.minimize {
        return Err(Error::Config("objective sense is not MIN".into()));
    }
    let mut expected_rows: BTreeMap<String, i8> = BTreeMap::new();
    let mut expected_entries: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut expected_rhs: BTreeMap<String, f64> = BTreeMap::new();
    model.for_each_row(|row_name, entries, rel, rhs| {
        expected_rows.insert(row_name.to_string(), rel);
        for &(col, coeff) in entries {
            expected_entries.insert((model.col_name(col), row_name.to_string()), coeff);
        }
        if rhs != 0.0 {
            expected_rhs.insert(row_name.to_string(), rhs);
        }
    });
    for col in 0..model.num_cols() {
        let obj = model.objective_coeff(col);
        if obj != 0.0 {
            expected_entries.insert((model.col_name(col), parsed.objective_row.clone()), obj);
        }
    }
    if parsed.rows != expected_rows {
        return Err(Error::Config("row set differs".into()));
    }
    if parsed.entries != expected_entries {
        return Err(Error::Config("coefficient entries differ".into()));
    }
    if parsed.rhs != expected_rhs {
        return Err(Error::Config("right-hand sides differ".into()));
    }
    if parsed.column_order.len() != model.num_cols() {
        return Err(Error::Config("column count differs".into()));
    }
    for (col, binary) in &parsed.binary {
        if !binary {
            return Err(Error::Config(format!("column {col} lost its integrality mark")));
        }
    }
    Ok(())
}
