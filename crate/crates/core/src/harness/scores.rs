//! Score normalization: human-normalized (HNS) and baseline-normalized (BNS)
//! scores, and aggregation over a per-game score table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(agent - random) / (human - random)`.
pub fn hns(agent: f64, random: f64, human: f64) -> Result<f64> {
    normalized(agent, random, human, "hns")
}

/// `(method - random) / (baseline_avg - random)`.
pub fn bns(method: f64, random: f64, baseline_avg: f64) -> Result<f64> {
    normalized(method, random, baseline_avg, "bns")
}

fn normalized(x: f64, lo: f64, hi: f64, what: &str) -> Result<f64> {
    if hi == lo {
        return Err(Error::DegenerateRow {
            row: format!("{what}: reference {hi} equals random {lo}"),
        });
    }
    Ok((x - lo) / (hi - lo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub game: String,
    pub random: f64,
    pub human: f64,
    /// One score per method, in `ScoreTable::methods` order.
    pub scores: Vec<f64>,
}

impl ScoreRow {
    /// Rows whose human score does not exceed the random score; their HNS
    /// denominator is zero or negative.
    pub fn is_flagged(&self) -> bool {
        self.human <= self.random
    }
}

/// A `game,random,human,<method>...` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub methods: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < 4 || names[..3] != ["game", "random", "human"] {
            return Err(Error::contract(format!(
                "score table header must start with game,random,human and name at least one method; got {names:?}"
            )));
        }
        let methods: Vec<String> = names[3..].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec[j].parse::<f64>().map_err(|_| {
                    Error::contract(format!(
                        "score table line {}: column `{}` is not a number: `{}`",
                        i + 2,
                        names[j],
                        &rec[j]
                    ))
                })
            };
            rows.push(ScoreRow {
                game: rec[0].to_string(),
                random: num(1)?,
                human: num(2)?,
                scores: (3..names.len()).map(num).collect::<Result<_>>()?,
            });
        }
        Ok(Self { methods, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn method_index(&self, method: &str) -> Result<usize> {
        self.methods
            .iter()
            .position(|m| m == method)
            .ok_or_else(|| Error::contract(format!("unknown method `{method}`; table has {:?}", self.methods)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowScore {
    pub game: String,
    /// Undefined when human equals random.
    pub hns: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub method: String,
    pub rows: Vec<RowScore>,
    /// Mean HNS over every row with a non-zero denominator.
    pub mean_hns_all: f64,
    /// Mean HNS over unflagged rows only.
    pub mean_hns_unflagged: Option<f64>,
    pub flagged: Vec<String>,
    /// Rows where this method strictly beats every other method.
    pub n_sota: usize,
}

pub fn aggregate(table: &ScoreTable, method: &str) -> Result<AggregateReport> {
    let k = table.method_index(method)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    let mut flagged = Vec::new();
    let mut n_sota = 0;
    for row in &table.rows {
        let h = match hns(row.scores[k], row.random, row.human) {
            Ok(v) => Some(v),
            Err(Error::DegenerateRow { .. }) => {
                log::warn!("row `{}`: human equals random; excluded from means", row.game);
                None
            }
            Err(e) => return Err(e),
        };
        if row.is_flagged() {
            flagged.push(row.game.clone());
        }
        let mine = row.scores[k];
        if row
            .scores
            .iter()
            .enumerate()
            .all(|(j, &s)| j == k || mine > s)
        {
            n_sota += 1;
        }
        rows.push(RowScore {
            game: row.game.clone(),
            hns: h,
            flagged: row.is_flagged(),
        });
    }
    let all: Vec<f64> = rows.iter().filter_map(|r| r.hns).collect();
    if all.is_empty() {
        return Err(Error::contract("no row has a usable HNS denominator"));
    }
    let unflagged: Vec<f64> = rows.iter().filter(|r| !r.flagged).filter_map(|r| r.hns).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(AggregateReport {
        method: method.to_string(),
        mean_hns_all: mean(&all),
        mean_hns_unflagged: (!unflagged.is_empty()).then(|| mean(&unflagged)),
        flagged,
        n_sota,
        rows,
    })
}
