use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use crate::domain::{LoanRecord, Portfolio};
use crate::error::{invalid_input, Error, Result};

/// Columns before the feature block.
const FIXED_HEADER: [&str; 5] = [
    "loan_id",
    "date_index",
    "category",
    "expected_amount",
    "realized_rate",
];

/// Reads the loan CSV into one portfolio per distinct date, ascending.
///
/// Schema: `loan_id,date_index,category,expected_amount,realized_rate,f1,...,fd`
/// with a required header, '.' decimal separator and an empty
/// `realized_rate` for unlabeled loans.
pub fn load_loans(path: &Path) -> Result<Vec<Portfolio>> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let dim = validate_header(&headers)?;

    let mut by_date: BTreeMap<u32, Vec<LoanRecord>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let loan = parse_record(&record, dim, line)?;
        by_date.entry(loan.date_index).or_default().push(loan);
    }
    by_date
        .into_iter()
        .map(|(date, loans)| Portfolio::new(date, loans))
        .collect()
}

fn validate_header(headers: &csv::StringRecord) -> Result<usize> {
    if headers.len() < FIXED_HEADER.len() + 1 {
        return Err(Error::Schema(format!(
            "expected at least {} columns, found {}",
            FIXED_HEADER.len() + 1,
            headers.len()
        )));
    }
    for (i, name) in FIXED_HEADER.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(Error::Schema(format!(
                "column {} must be {name:?}, found {:?}",
                i + 1,
                headers.get(i).unwrap_or("")
            )));
        }
    }
    let dim = headers.len() - FIXED_HEADER.len();
    for k in 0..dim {
        let want = format!("f{}", k + 1);
        if headers.get(FIXED_HEADER.len() + k) != Some(want.as_str()) {
            return Err(Error::Schema(format!(
                "feature column {} must be {want:?}, found {:?}",
                k + 1,
                headers.get(FIXED_HEADER.len() + k).unwrap_or("")
            )));
        }
    }
    Ok(dim)
}

fn csv_error(err: csv::Error) -> Error {
    let line = err
        .position()
        .map(|p| p.line())
        .unwrap_or(0);
    match err.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Schema(format!(
            "line {line}: row has {len} fields, expected {expected_len} (inconsistent feature dimension)"
        )),
        _ => Error::Parse {
            line,
            message: err.to_string(),
        },
    }
}

fn parse_record(record: &csv::StringRecord, dim: usize, line: u64) -> Result<LoanRecord> {
    let parse_err = |message: String| Error::Parse { line, message };
    let field = |idx: usize| record.get(idx).unwrap_or("");

    let id = field(0).to_string();
    if id.is_empty() {
        return Err(parse_err("empty loan_id".into()));
    }
    let date_index: u32 = field(1)
        .parse()
        .map_err(|e| parse_err(format!("bad date_index {:?}: {e}", field(1))))?;
    let category: usize = field(2)
        .parse()
        .map_err(|e| parse_err(format!("bad category {:?}: {e}", field(2))))?;
    let expected_amount: f64 = field(3)
        .parse()
        .map_err(|e| parse_err(format!("bad expected_amount {:?}: {e}", field(3))))?;
    let realized_rate: Option<f64> = match field(4) {
        "" => None,
        text => Some(
            text.parse()
                .map_err(|e| parse_err(format!("bad realized_rate {text:?}: {e}")))?,
        ),
    };
    let mut features = Vec::with_capacity(dim);
    for k in 0..dim {
        let text = field(5 + k);
        let value: f64 = text
            .parse()
            .map_err(|e| parse_err(format!("bad f{} {text:?}: {e}", k + 1)))?;
        if !value.is_finite() {
            return Err(parse_err(format!("non-finite f{}", k + 1)));
        }
        features.push(value);
    }

    LoanRecord::new(id, date_index, category, features, expected_amount, realized_rate)
        .map_err(|e| parse_err(e.to_string()))
}

/// Writes portfolios in the loan CSV schema. Floats use the shortest
/// round-trip representation, so `load_loans` reads back exact values.
pub fn write_loans(path: &Path, portfolios: &[Portfolio]) -> Result<()> {
    let dim = portfolios
        .first()
        .and_then(|p| p.loans.first())
        .map(|l| l.features.len())
        .ok_or_else(|| invalid_input("nothing to write"))?;
    if dim == 0 {
        return Err(invalid_input("loans must carry at least one feature"));
    }

    let file = File::create(path)?;
    let mut writer = csv::Writer::from_writer(file);

    let mut header: Vec<String> = FIXED_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend((1..=dim).map(|k| format!("f{k}")));
    writer.write_record(&header).map_err(write_error)?;

    for portfolio in portfolios {
        for loan in &portfolio.loans {
            if loan.features.len() != dim {
                return Err(invalid_input(format!(
                    "loan {} has {} features, expected {dim}",
                    loan.id,
                    loan.features.len()
                )));
            }
            let mut row: Vec<String> = vec![
                loan.id.clone(),
                loan.date_index.to_string(),
                loan.category.to_string(),
                format!("{}", loan.expected_amount),
                loan.realized_rate.map(|r| format!("{r}")).unwrap_or_default(),
            ];
            row.extend(loan.features.iter().map(|f| format!("{f}")));
            writer.write_record(&row).map_err(write_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn write_error(err: csv::Error) -> Error {
    Error::Io(std::io::Error::other(err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmpfile(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("nplrisk-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    const HEADER: &str = "loan_id,date_index,category,expected_amount,realized_rate,f1,f2\n";

    #[test]
    fn groups_rows_into_one_portfolio_per_date() {
        let path = tmpfile(
            "three_rows.csv",
            &format!("{HEADER}a,1,1,100,0.5,0.1,0.2\nb,1,1,200,,0.3,0.4\nc,1,2,50,1.2,0.5,0.6\n"),
        );
        let portfolios = load_loans(&path).unwrap();
        assert_eq!(portfolios.len(), 1);
        assert_eq!(portfolios[0].loans.len(), 3);
        assert_eq!(portfolios[0].loans[1].realized_rate, None);
    }

    #[test]
    fn splits_distinct_dates() {
        let path = tmpfile(
            "two_dates.csv",
            &format!("{HEADER}a,2,1,100,0.5,0.1,0.2\nb,1,1,200,,0.3,0.4\n"),
        );
        let portfolios = load_loans(&path).unwrap();
        assert_eq!(portfolios.len(), 2);
        assert_eq!(portfolios[0].date_index, 1);
        assert_eq!(portfolios[1].date_index, 2);
    }

    #[test]
    fn zero_expected_amount_is_a_parse_error_with_line() {
        let path = tmpfile(
            "zero_amount.csv",
            &format!("{HEADER}a,1,1,100,0.5,0.1,0.2\nb,1,1,0,0.5,0.3,0.4\n"),
        );
        match load_loans(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn garbled_number_names_its_line() {
        let path = tmpfile(
            "bad_float.csv",
            &format!("{HEADER}a,1,1,100,0.5,0.1,0.2\nb,1,1,10,zebra,0.3,0.4\n"),
        );
        match load_loans(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("realized_rate"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_width_is_a_schema_error() {
        let path = tmpfile(
            "ragged.csv",
            &format!("{HEADER}a,1,1,100,0.5,0.1,0.2\nb,1,1,10,0.5,0.3\n"),
        );
        assert!(matches!(load_loans(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn wrong_header_is_a_schema_error() {
        let path = tmpfile("bad_header.csv", "id,t,j,p,r,f1\na,1,1,10,0.5,0.0\n");
        assert!(matches!(load_loans(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn write_then_load_roundtrips_exactly() {
        let loans = vec![
            LoanRecord::new("x1", 3, 1, vec![0.1234567890123, -4.5], 101.25, Some(0.7317318)).unwrap(),
            LoanRecord::new("x2", 3, 2, vec![1e-13, 2.5], 7.0, None).unwrap(),
        ];
        let original = vec![Portfolio::new(3, loans).unwrap()];
        let dir = std::env::temp_dir().join(format!("nplrisk-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        write_loans(&path, &original).unwrap();
        let loaded = load_loans(&path).unwrap();
        assert_eq!(loaded, original);
    }
}
