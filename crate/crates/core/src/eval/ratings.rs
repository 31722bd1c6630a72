//! Ratings file: CSV with `summary_id,row_index,rater_id,label`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{EvalError, RowLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub summary_id: String,
    pub row_index: usize,
    pub rater_id: String,
    pub label: RowLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingsTable {
    pub records: Vec<RatingRecord>,
}

impl RatingsTable {
    /// Labels per rater for one summary.
    pub fn by_rater(&self, summary_id: &str) -> BTreeMap<String, BTreeMap<usize, RowLabel>> {
        let mut out: BTreeMap<String, BTreeMap<usize, RowLabel>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.summary_id == summary_id) {
            out.entry(r.rater_id.clone()).or_default().insert(r.row_index, r.label);
        }
        out
    }

    pub fn summary_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.summary_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

pub fn read_ratings(reader: impl Read) -> Result<RatingsTable, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::MalformedRatings(e.to_string()))?
        .clone();
    let expected = ["summary_id", "row_index", "rater_id", "label"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(EvalError::MalformedRatings(format!(
            "expected header {}, found {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    let mut seen = BTreeMap::new();
    for (line, rec) in rdr.deserialize::<RatingRecord>().enumerate() {
        let rec = rec.map_err(|e| EvalError::MalformedRatings(format!("record {}: {e}", line + 1)))?;
        let key = (rec.summary_id.clone(), rec.row_index, rec.rater_id.clone());
        if seen.insert(key, ()).is_some() {
            return Err(EvalError::MalformedRatings(format!(
                "record {}: rater {} rated row {} of {} twice",
                line + 1,
                rec.rater_id,
                rec.row_index,
                rec.summary_id
            )));
        }
        records.push(rec);
    }
    Ok(RatingsTable { records })
}

pub fn write_ratings(table: &RatingsTable, writer: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &table.records {
        w.serialize(r).map_err(|e| EvalError::MalformedRatings(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_grouping() {
        let csv = "summary_id,row_index,rater_id,label\n\
                   s1,0,alice,YES\n\
                   s1,1,alice,NO_BAD_EXTRACTION\n\
                   s1,0,bob,OK\n\
                   s2,0,bob,YES\n";
        let t = read_ratings(csv.as_bytes()).unwrap();
        assert_eq!(t.records.len(), 4);
        let by = t.by_rater("s1");
        assert_eq!(by["alice"][&1], RowLabel::NoBadExtraction);
        assert_eq!(by["bob"].len(), 1);
        let mut out = Vec::new();
        write_ratings(&t, &mut out).unwrap();
        assert_eq!(read_ratings(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn unknown_label_is_malformed() {
        let csv = "summary_id,row_index,rater_id,label\ns1,0,alice,MAYBE\n";
        assert!(matches!(read_ratings(csv.as_bytes()), Err(EvalError::MalformedRatings(_))));
        let dup = "summary_id,row_index,rater_id,label\ns1,0,a,YES\ns1,0,a,OK\n";
        assert!(read_ratings(dup.as_bytes()).is_err());
        assert!(read_ratings("a,b\n1,2\n".as_bytes()).is_err());
    }
}
