//! Interaction logs, embedding files and synthetic data.

mod emb;
mod synth;

pub use emb::{load_embeddings, read_embeddings, save_embeddings, write_csv, write_embeddings};
pub use synth::{generate_synthetic, SynthConfig, SynthData};

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// One user's interactions in chronological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub user: u64,
    pub items: Vec<usize>,
}

/// Chronological item sequences, one per user, ordered by user id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionLog {
    sequences: Vec<Sequence>,
    num_items: usize,
}

impl InteractionLog {
    pub fn new(mut sequences: Vec<Sequence>, num_items: usize) -> Result<Self> {
        sequences.sort_by_key(|s| s.user);
        for pair in sequences.windows(2) {
            if pair[0].user == pair[1].user {
                return Err(Error::Validation(format!(
                    "duplicate user id {}",
                    pair[0].user
                )));
            }
        }
        for s in &sequences {
            if s.items.is_empty() {
                return Err(Error::Validation(format!("user {} has no items", s.user)));
            }
            if let Some(&bad) = s.items.iter().find(|&&i| i >= num_items) {
                return Err(Error::Validation(format!(
                    "item {bad} out of range for {num_items} items"
                )));
            }
        }
        Ok(Self {
            sequences,
            num_items,
        })
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(|s| s.items.len()).sum()
    }

    /// Render as `user<TAB>item<TAB>timestamp` lines, timestamps being positions.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.sequences {
            for (t, item) in s.items.iter().enumerate() {
                out.push_str(&format!("{}\t{}\t{}\n", s.user, item, t));
            }
        }
        out
    }

    /// Repeatedly drop items and users with fewer than `min_count`
    /// interactions until none remain below the threshold. Item ids are kept.
    pub fn filter_min_count(&self, min_count: usize) -> Result<Self> {
        let mut seqs = self.sequences.clone();
        loop {
            let mut counts = vec![0usize; self.num_items];
            for s in &seqs {
                for &i in &s.items {
                    counts[i] += 1;
                }
            }
            let before: usize = seqs.iter().map(|s| s.items.len()).sum();
            for s in &mut seqs {
                s.items.retain(|&i| counts[i] >= min_count);
            }
            seqs.retain(|s| s.items.len() >= min_count.max(1));
            let after: usize = seqs.iter().map(|s| s.items.len()).sum();
            if after == before {
                break;
            }
        }
        if seqs.is_empty() {
            return Err(Error::NoInteractions);
        }
        Self::new(seqs, self.num_items)
    }
}

/// Parse `user<TAB>item<TAB>timestamp` lines.
///
/// Ids may carry a leading alphabetic tag (`u12`, `i7`). Each user's items are
/// ordered by timestamp, ties keeping input order. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_interactions(text: &str) -> Result<InteractionLog> {
    let mut by_user: BTreeMap<u64, Vec<(f64, usize)>> = BTreeMap::new();
    let mut max_item: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let user = parse_id(fields[0], line_no, "user")?;
        let item = parse_id(fields[1], line_no, "item")? as usize;
        let ts: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad timestamp {:?}", fields[2]),
        })?;
        if !ts.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: "timestamp must be finite".into(),
            });
        }
        by_user.entry(user).or_default().push((ts, item));
        max_item = Some(max_item.map_or(item, |m| m.max(item)));
    }

    let Some(max_item) = max_item else {
        return Err(Error::NoInteractions);
    };
    let sequences = by_user
        .into_iter()
        .map(|(user, mut events)| {
            // stable: equal timestamps keep input order
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            Sequence {
                user,
                items: events.into_iter().map(|(_, i)| i).collect(),
            }
        })
        .collect();
    InteractionLog::new(sequences, max_item + 1)
}

fn parse_id(field: &str, line: usize, what: &str) -> Result<u64> {
    let digits = field.trim().trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == '_');
    let value: i64 = digits.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} id {field:?}"),
    })?;
    if value < 0 {
        return Err(Error::Validation(format!(
            "line {line}: negative {what} id {value}"
        )));
    }
    Ok(value as u64)
}

/// Items per user keyed by user id; convenience for callers that build logs by hand.
pub fn log_from_map(map: HashMap<u64, Vec<usize>>) -> Result<InteractionLog> {
    let num_items = map
        .values()
        .flat_map(|v| v.iter())
        .max()
        .map(|m| m + 1)
        .ok_or(Error::NoInteractions)?;
    let seqs = map
        .into_iter()
        .map(|(user, items)| Sequence { user, items })
        .collect();
    InteractionLog::new(seqs, num_items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_two_items() {
        let log = parse_interactions("u0\ti0\t1\nu0\ti1\t2").unwrap();
        assert_eq!(log.sequences().len(), 1);
        assert_eq!(log.sequences()[0].items, vec![0, 1]);
        assert_eq!(log.num_items(), 2);
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = parse_interactions("").unwrap_err();
        assert_eq!(err.to_string(), "no interactions");
        assert!(matches!(parse_interactions("\n# c\n"), Err(Error::NoInteractions)));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_interactions("0\t1\t2\n0\t1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_interactions("0\tx\t2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn negative_id_is_a_validation_error() {
        assert!(matches!(
            parse_interactions("0\t-1\t2\n"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let log = parse_interactions("1\t5\t3\n1\t2\t3\n1\t9\t1\n").unwrap();
        assert_eq!(log.sequences()[0].items, vec![9, 5, 2]);
    }

    #[test]
    fn min_count_filter_reaches_fixpoint() {
        // item 3 appears once; removing it leaves user 2 with a single item
        let log = parse_interactions(
            "1\t0\t0\n1\t1\t1\n2\t0\t0\n2\t3\t1\n3\t0\t0\n3\t1\t1\n",
        )
        .unwrap();
        let f = log.filter_min_count(2).unwrap();
        let users: Vec<u64> = f.sequences().iter().map(|s| s.user).collect();
        assert_eq!(users, vec![1, 3]);
    }

    #[test]
    fn duplicate_users_rejected() {
        let s = Sequence {
            user: 1,
            items: vec![0],
        };
        assert!(InteractionLog::new(vec![s.clone(), s], 1).is_err());
    }
}
